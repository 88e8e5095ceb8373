use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cablekit::ident::{synthetic_pose_log, SyntheticConfig};
use cablekit::model::{default_paper_model, identification_subchain, ExternalLoad};
use cablekit::sim::{fix_link, static_equilibrium};
use nalgebra::DVector;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cablekit")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn repo(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel).to_string_lossy().into_owned()
}

fn tmp(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

#[test]
fn static_matches_the_library_equilibrium() {
    let model = repo("models/paper.toml");
    let text = stdout(&run(&["static", "--model", &model, "--fix-link", "5", "--tip-mass", "0.05", "--stiffness", "0.5"]));
    let angles: Vec<f64> = text
        .lines()
        .filter(|l| l.starts_with('q'))
        .map(|l| l.split('=').nth(1).unwrap().trim().trim_end_matches(" rad").parse().unwrap())
        .collect();
    assert_eq!(angles.len(), 4);
    let fx = fix_link(&default_paper_model().with_uniform_stiffness_damping(0.5, 0.0).unwrap(), 5).unwrap();
    let eq = static_equilibrium(&fx, &[ExternalLoad::tip_weight(&fx, 0.05)], &DVector::zeros(4)).unwrap();
    for (a, b) in angles.iter().zip(eq.q.iter()) {
        assert!((a - b).abs() < 1e-6);
    }
    let sag: f64 = text.lines().find(|l| l.starts_with("sagging")).unwrap().split('=').nth(1).unwrap().trim().trim_end_matches(" rad").parse().unwrap();
    assert!((sag - eq.q.sum()).abs() < 1e-6);
}

#[test]
fn static_with_the_documented_flags_prints_four_joints() {
    let model = repo("models/paper.toml");
    let text = stdout(&run(&["static", "--model", &model, "--fix-link", "5", "--tip-mass", "0.0"]));
    assert_eq!(text.lines().filter(|l| l.starts_with('q')).count(), 4);
    assert!(text.contains("sagging angle"));
}

#[test]
fn report_reproduces_the_derived_rows() {
    let text = stdout(&run(&["report", "--sim", &repo("data/joints_sim.csv"), "--real", &repo("data/joints_real.csv")]));
    let row = |prefix: &str| -> Vec<String> {
        let line = text.lines().find(|l| l.starts_with(prefix)).unwrap();
        line.split_whitespace().rev().take(4).map(String::from).collect::<Vec<_>>().into_iter().rev().collect()
    };
    assert_eq!(row("difference"), ["-0.005", "0.004", "-0.003", "-0.002"]);
    assert_eq!(row("percent"), ["0.88%", "1.04%", "1.75%", "2.00%"]);
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        vec![
            "simulate".to_string(), "--fix-link".into(), "5".into(), "--stiffness".into(), "0.5".into(),
            "--damping".into(), "0.005".into(), "--duration".into(), "0.5".into(), "--q0".into(),
            "0.3,-0.2,0.1,0.4".into(), "--tip-mass".into(), "0.05".into(), "--load-time".into(), "0.1".into(),
            "--out".into(), out.into(),
        ]
    };
    let (a, b) = (tmp(&dir, "a.csv"), tmp(&dir, "b.csv"));
    for p in [&a, &b] {
        let v = args(p.to_str().unwrap());
        stdout(&run(&v.iter().map(String::as_str).collect::<Vec<_>>()));
    }
    let (x, y) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(x, y);
    let text = String::from_utf8(x).unwrap();
    assert!(text.starts_with("t,q1,q2,q3,q4,qd1,"));
    assert_eq!(text.lines().count(), 502);
}

#[test]
fn identify_recovers_and_writes_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let truth = identification_subchain(&default_paper_model()).unwrap().with_uniform_stiffness_damping(1.2, 0.02).unwrap();
    let syn = synthetic_pose_log(&truth, &SyntheticConfig::default()).unwrap();
    let (log, meta, out) = (tmp(&dir, "poses.csv"), tmp(&dir, "poses.meta.toml"), tmp(&dir, "id.toml"));
    syn.log.write_csv(std::fs::File::create(&log).unwrap()).unwrap();
    std::fs::write(&meta, syn.log.meta.to_toml()).unwrap();
    let text = stdout(&run(&[
        "identify", "--log", log.to_str().unwrap(), "--meta", meta.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]));
    assert!(text.contains("stiffness"));
    let model = cablekit::config::load_model_file(&out).unwrap();
    // the CSV keeps nine significant digits, which bounds the recovery here
    assert!(model.stiffness().iter().all(|k| (k - 1.2).abs() < 1e-4 * 1.2), "{}", model.stiffness());
    assert!(model.damping().iter().all(|d| (d - 0.02).abs() < 0.05 * 0.02), "{}", model.damping());
}

#[test]
fn fit_curve_writes_polyline_and_curve() {
    let dir = tempfile::tempdir().unwrap();
    let (poly, curve) = (tmp(&dir, "poly.csv"), tmp(&dir, "curve.toml"));
    let o = run(&[
        "fit-curve", "--cloud", &repo("data/cloud.csv"), "--tip-end", "min", "--grasp-distance", "0.1",
        "--out", poly.to_str().unwrap(), "--curve-out", curve.to_str().unwrap(),
    ]);
    stdout(&o);
    assert!(String::from_utf8_lossy(&o.stderr).contains("grasp point"));
    let text = std::fs::read_to_string(&poly).unwrap();
    assert_eq!(text.lines().next(), Some("x,y,z"));
    assert_eq!(text.lines().count(), 51);
    let c: cablekit::curve::PolyCurve3D = toml::from_str(&std::fs::read_to_string(&curve).unwrap()).unwrap();
    assert!(c.rms_residual < 5e-3);
}

#[test]
fn servo_converges_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = tmp(&dir, "servo.csv");
    for plant in ["kinematic", "dynamic"] {
        stdout(&run(&["servo", "--target-file", &repo("data/target.toml"), "--plant", plant, "--out", out.to_str().unwrap()]));
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().next(), Some("iter,err_pos,err_rot,q1,q2,q3,q4"));
        let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert!(last[1] <= 1e-3 && last[2] <= 0.01);
    }
    let far = run(&["servo", "--target", "10,0,0,0,0,0,1", "--max-iters", "100", "--out", out.to_str().unwrap()]);
    assert!(!far.status.success());
}

#[test]
fn validate_runs_selected_criteria() {
    let text = stdout(&run(&["validate", "--only", "table-arithmetic", "--only", "rne-vs-euler-lagrange"]));
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 2);
    assert!(!run(&["validate", "--only", "nonsense"]).status.success());
}

#[test]
fn errors_are_reported_with_nonzero_status() {
    for args in [
        vec!["frobnicate"],
        vec!["static", "--model", "/nonexistent/model.toml", "--fix-link", "5"],
        vec!["static", "--fix-link", "0"],
        vec!["simulate", "--duration", "1", "--integrator", "leapfrog"],
        vec!["servo", "--target", "0,0,0"],
    ] {
        let o = run(&args);
        assert!(!o.status.success(), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
    let o = run(&["simulate", "--duration", "1", "--integrator", "leapfrog"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("rk4"));
}
