//! `cablekit`: simulate, identify, fit and servo a serial-link cable model.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DVector, Point3, Vector3};
use serde::Deserialize;

use cablekit::config::{load_model_file, save_model_file};
use cablekit::curve::{fit_curve3d, fit_curve3d_trimmed, grasp_point, sample_curve, TipEnd, DEFAULT_SAMPLE_COUNT};
use cablekit::io::{fmt9, read_points_csv, write_points_csv};
use cablekit::ident::{run_identification_with, PipelineOptions, PoseLog, PoseLogMeta};
use cablekit::kinematics::{forward_kinematics, tip_sagging_angle, FramePose};
use cablekit::model::{default_paper_model, CableModel, ChainState, ExternalLoad};
use cablekit::report::{build_report, read_values_csv, ExperimentMeta};
use cablekit::servo::{plants, run_servo, ServoGains};
use cablekit::sim::{equilibrium_solvers, fix_link, integrators, simulate_with, EquilibriumOptions, LoadSchedule};
use cablekit::validation::{criteria, evaluate};

#[derive(Parser)]
#[command(name = "cablekit", version, about = "Serial-link cable model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the passive cable and write a trajectory CSV.
    Simulate(SimulateArgs),
    /// Static equilibrium of a fixture: joint angles and tip sagging angle.
    Static(StaticArgs),
    /// Identify joint stiffness and damping from a tag pose log.
    Identify(IdentifyArgs),
    /// Fit a quadratic space curve to a point cloud.
    FitCurve(FitCurveArgs),
    /// Drive the cable tip to a target frame.
    Servo(ServoArgs),
    /// Compare sim and real values in a table.
    Report(ReportArgs),
    /// Run the synthetic acceptance suite.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Model TOML file; the built-in 16-link cable when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Free the locked roll axes (±limit rad).
    #[arg(long, value_name = "LIMIT", num_args = 0..=1, default_missing_value = "1.5707963267948966")]
    with_roll: Option<f64>,
    /// Override every joint stiffness, N·m/rad.
    #[arg(long)]
    stiffness: Option<f64>,
    /// Override every joint damping, N·m·s/rad.
    #[arg(long)]
    damping: Option<f64>,
}

impl ModelArgs {
    fn load(&self) -> Result<CableModel> {
        let mut model = match &self.model {
            Some(p) => load_model_file(p).with_context(|| format!("loading model {}", p.display()))?,
            None => default_paper_model(),
        };
        if let Some(limit) = self.with_roll {
            model = model.with_free_roll(limit)?;
        }
        if self.stiffness.is_some() || self.damping.is_some() {
            let k = self.stiffness.map(|k| vec![k; model.dof()]).unwrap_or_else(|| model.stiffness().as_slice().to_vec());
            let d = self.damping.map(|d| vec![d; model.dof()]).unwrap_or_else(|| model.damping().as_slice().to_vec());
            model = model.with_stiffness_damping(&k, &d)?;
        }
        Ok(model)
    }

    fn fixture(&self, link: Option<usize>) -> Result<CableModel> {
        let model = self.load()?;
        Ok(match link {
            Some(l) => fix_link(&model, l)?,
            None => model,
        })
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Fix this link (numbered from the tip, plug = 0) horizontally.
    #[arg(long)]
    fix_link: Option<usize>,
    /// Seconds.
    #[arg(long)]
    duration: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Comma-separated initial joint positions, rad (default zeros).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    q0: Option<Vec<f64>>,
    /// Comma-separated initial joint velocities, rad/s (default zeros).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    qd0: Option<Vec<f64>>,
    /// Weight hung from the tip, kg.
    #[arg(long, default_value_t = 0.0)]
    tip_mass: f64,
    /// When the tip weight is applied, seconds.
    #[arg(long, default_value_t = 0.0)]
    load_time: f64,
    #[arg(long)]
    integrator: Option<String>,
    /// Trajectory CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StaticArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    fix_link: usize,
    /// kg
    #[arg(long, default_value_t = 0.0)]
    tip_mass: f64,
    #[arg(long)]
    solver: Option<String>,
    /// Write `dof,q` CSV here as well.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IdentifyArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Pose-log CSV `t,tag_id,x,y,z,qx,qy,qz,qw`.
    #[arg(long)]
    log: PathBuf,
    /// Sidecar TOML with `tag_ids` (chain order) and `spacing_m`.
    #[arg(long)]
    meta: PathBuf,
    /// Link held by the fixture; its distal joints are identified.
    #[arg(long, default_value_t = 5)]
    fix_link: usize,
    /// Tip weight present during the recording, kg.
    #[arg(long, default_value_t = 0.1)]
    tip_mass: f64,
    /// Settings for noisy logs (heavier smoothing, averaged static pose).
    #[arg(long)]
    noisy: bool,
    /// Updated sub-chain model TOML.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TipEndArg {
    Min,
    Max,
}

#[derive(Args)]
struct FitCurveArgs {
    /// Point-cloud CSV `x,y,z`.
    #[arg(long)]
    cloud: PathBuf,
    /// Refit after dropping this fraction of worst points.
    #[arg(long)]
    trim: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_COUNT)]
    samples: usize,
    /// End of the parameter range holding the free tip.
    #[arg(long, value_enum, default_value = "max")]
    tip_end: TipEndArg,
    /// Report the grasp point this far (m, along the curve) from the tip.
    #[arg(long)]
    grasp_distance: Option<f64>,
    /// Polyline CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fitted curve as TOML.
    #[arg(long)]
    curve_out: Option<PathBuf>,
}

#[derive(Args)]
struct ServoArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 5)]
    fix_link: usize,
    /// `x,y,z,qx,qy,qz,qw` (m, unit quaternion), world frame.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "target_file")]
    target: Option<Vec<f64>>,
    /// TOML with `translation_m` and `quaternion_xyzw`.
    #[arg(long)]
    target_file: Option<PathBuf>,
    /// Initial joint positions (default 0.1 rad each).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    q0: Option<Vec<f64>>,
    #[arg(long)]
    plant: Option<String>,
    /// Loop period, seconds.
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long, default_value_t = 1.0)]
    kp: f64,
    #[arg(long, default_value_t = 0.0)]
    ki: f64,
    #[arg(long, default_value_t = 0.0)]
    kd: f64,
    #[arg(long, default_value_t = 1.0)]
    time_constant: f64,
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,
    #[arg(long, default_value_t = 1e-3)]
    pos_tol: f64,
    #[arg(long, default_value_t = 0.01)]
    rot_tol: f64,
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
    #[arg(long)]
    position_only: bool,
    /// Report CSV `iter,err_pos,err_rot,q1..qn` (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// `label,value` CSV of simulated values.
    #[arg(long)]
    sim: PathBuf,
    /// `label,value` CSV of measured values.
    #[arg(long)]
    real: PathBuf,
    #[arg(long, default_value = "")]
    title: String,
    #[arg(long)]
    fix_link: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    tip_mass: f64,
    /// Also write `label,sim,real,difference,percent_error` CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Base seed added to every scenario's fixed seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run only the named criteria.
    #[arg(long)]
    only: Vec<String>,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn vector(values: &Option<Vec<f64>>, n: usize, default: f64, what: &str) -> Result<DVector<f64>> {
    match values {
        None => Ok(DVector::from_element(n, default)),
        Some(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
        Some(v) => bail!("{what} has {} values but the model has {n} degrees of freedom", v.len()),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let model = a.model.fixture(a.fix_link)?;
    let n = model.dof();
    let state = ChainState::new(vector(&a.q0, n, 0.0, "--q0")?, vector(&a.qd0, n, 0.0, "--qd0")?, DVector::zeros(n));
    let schedule = if a.tip_mass > 0.0 {
        let weight = vec![ExternalLoad::tip_weight(&model, a.tip_mass)];
        if a.load_time > 0.0 {
            LoadSchedule::none().then(a.load_time, weight)
        } else {
            LoadSchedule::constant(weight)
        }
    } else {
        LoadSchedule::none()
    };
    let integrator = integrators().resolve(a.integrator.as_deref())?;
    let traj = simulate_with(integrator.as_ref(), &model, &state, &schedule, a.duration, a.dt)?;
    let mut w = output(&a.out)?;
    traj.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn static_cmd(a: StaticArgs) -> Result<()> {
    let model = a.model.fixture(Some(a.fix_link))?;
    let loads = if a.tip_mass > 0.0 { vec![ExternalLoad::tip_weight(&model, a.tip_mass)] } else { Vec::new() };
    let solver = equilibrium_solvers().resolve(a.solver.as_deref())?;
    let eq = solver.solve(&model, &loads, &DVector::zeros(model.dof()), &EquilibriumOptions::default())?;
    let sag = tip_sagging_angle(&model, &eq.q)?;
    println!("fixture link {}, tip mass {} kg ({} solver, residual {:.1e} N·m)", a.fix_link, a.tip_mass, eq.solver, eq.residual);
    for (i, (q, dof)) in eq.q.iter().zip(model.dofs()).enumerate() {
        println!("q{} ({}) = {:.6} rad", i + 1, dof.axis.label(), q);
    }
    println!("sagging angle = {sag:.6} rad");
    if let Some(p) = &a.out {
        let mut w = output(&Some(p.clone()))?;
        writeln!(w, "dof,q")?;
        for (i, q) in eq.q.iter().enumerate() {
            writeln!(w, "{},{}", i + 1, fmt9(*q))?;
        }
        writeln!(w, "sagging,{}", fmt9(sag))?;
        w.flush()?;
    }
    Ok(())
}

fn identify(a: IdentifyArgs) -> Result<()> {
    let model = a.model.fixture(Some(a.fix_link))?.pitch_only();
    let meta_text = std::fs::read_to_string(&a.meta).with_context(|| format!("reading {}", a.meta.display()))?;
    let meta = PoseLogMeta::from_toml(&meta_text)?;
    let log = PoseLog::read_csv(open(&a.log)?, meta)?;
    let loads = if a.tip_mass > 0.0 { vec![ExternalLoad::tip_weight(&model, a.tip_mass)] } else { Vec::new() };
    let opts = if a.noisy { PipelineOptions::noisy() } else { PipelineOptions::default() };
    let id = run_identification_with(&model, &log, &loads, &opts)?;
    let d = &id.diagnostics;
    println!(
        "{} samples ({} static from t = {:.3} s, {} dynamic, {} instants skipped)",
        d.samples, d.static_samples, d.static_start, d.dynamic_samples, d.skipped_instants
    );
    println!("joint  stiffness N·m/rad  damping N·m·s/rad");
    for (i, (k, c)) in id.params.stiffness.iter().zip(id.params.damping.iter()).enumerate() {
        println!("{:>5}  {:>18.9}  {:>17.9}", i + 1, k, c);
    }
    println!("residual {:.3e}, condition {:.3e}", id.params.residual, id.params.condition);
    if let Some(p) = &a.out {
        save_model_file(&id.model, p)?;
    }
    Ok(())
}

fn fit_curve(a: FitCurveArgs) -> Result<()> {
    let cloud: Vec<Point3<f64>> = read_points_csv(open(&a.cloud)?)?.into_iter().map(Point3::from).collect();
    let curve = match a.trim {
        Some(t) => fit_curve3d_trimmed(&cloud, t)?,
        None => fit_curve3d(&cloud)?,
    };
    let curve = curve.with_tip_end(match a.tip_end {
        TipEndArg::Min => TipEnd::Min,
        TipEndArg::Max => TipEnd::Max,
    });
    eprintln!(
        "axis {}, a = {:?}, b = {:?}, range {:?}, rms {:.3e} m, length {:.4} m",
        curve.axis.label(),
        curve.coeffs_a,
        curve.coeffs_b,
        curve.param_range,
        curve.rms_residual,
        curve.arc_length()
    );
    if let Some(s) = a.grasp_distance {
        let g = grasp_point(&curve, s)?;
        eprintln!(
            "grasp point ({:.6}, {:.6}, {:.6}), tangent ({:.6}, {:.6}, {:.6})",
            g.point.x, g.point.y, g.point.z, g.tangent.x, g.tangent.y, g.tangent.z
        );
    }
    if let Some(p) = &a.curve_out {
        std::fs::write(p, toml::to_string(&curve)?).with_context(|| format!("writing {}", p.display()))?;
    }
    let pts: Vec<Vector3<f64>> = sample_curve(&curve, a.samples)?.into_iter().map(|p| p.coords).collect();
    let mut w = output(&a.out)?;
    write_points_csv(&mut w, &pts)?;
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetFile {
    translation_m: [f64; 3],
    quaternion_xyzw: [f64; 4],
}

fn servo(a: ServoArgs) -> Result<()> {
    let model = a.model.fixture(Some(a.fix_link))?;
    let target = match (&a.target, &a.target_file) {
        (Some(t), _) => {
            if t.len() != 7 {
                bail!("--target needs 7 values x,y,z,qx,qy,qz,qw, got {}", t.len());
            }
            FramePose::from_quaternion(Vector3::new(t[0], t[1], t[2]), [t[3], t[4], t[5], t[6]])?
        }
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let f: TargetFile = toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            FramePose::from_quaternion(Vector3::from(f.translation_m), f.quaternion_xyzw)?
        }
        (None, None) => bail!("give the target frame with --target or --target-file"),
    };
    let gains = ServoGains {
        kp: a.kp,
        ki: a.ki,
        kd: a.kd,
        time_constant: a.time_constant,
        damping_lambda: a.lambda,
        pos_tol: a.pos_tol,
        rot_tol: a.rot_tol,
        max_iters: a.max_iters,
        dt: a.dt,
        position_only: a.position_only,
        ..ServoGains::default()
    };
    let q0 = vector(&a.q0, model.dof(), 0.1, "--q0")?;
    let mut plant = plants().resolve(a.plant.as_deref())?.build(&model, &q0)?;
    let res = run_servo(plant.as_mut(), &target, &gains)?;
    let reached = forward_kinematics(&model, &res.final_state)?.tip.translation;
    eprintln!(
        "{:?} after {} iterations: position error {:.3e} m, rotation error {:.3e} rad, tip at ({:.6}, {:.6}, {:.6})",
        res.termination, res.iterations, res.final_error.0, res.final_error.1, reached.x, reached.y, reached.z
    );
    let mut w = output(&a.out)?;
    res.write_csv(&mut w)?;
    w.flush()?;
    if !res.converged {
        bail!("servo did not converge ({:?})", res.termination);
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let (sim_labels, sim) = read_values_csv(open(&a.sim)?).with_context(|| format!("reading {}", a.sim.display()))?;
    let (real_labels, real) = read_values_csv(open(&a.real)?).with_context(|| format!("reading {}", a.real.display()))?;
    if sim_labels != real_labels {
        bail!("label columns differ: sim {sim_labels:?} vs real {real_labels:?}");
    }
    let meta = ExperimentMeta { description: a.title, fixture_link: a.fix_link, tip_mass: a.tip_mass };
    let rep = build_report(&sim, &real, &sim_labels, meta)?;
    print!("{}", rep.render_text());
    if let Some(p) = &a.out {
        let mut w = output(&Some(p.clone()))?;
        rep.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<()> {
    let all = criteria();
    for name in &a.only {
        if !all.iter().any(|c| c.name == name) {
            let names: Vec<_> = all.iter().map(|c| c.name).collect();
            bail!("unknown criterion `{name}` (available: {})", names.join(", "));
        }
    }
    let mut failed = 0;
    for c in all.iter().filter(|c| a.only.is_empty() || a.only.iter().any(|n| n == c.name)) {
        let o = evaluate(c, a.seed);
        println!("{}", o.line());
        failed += !o.passed as usize;
    }
    if failed > 0 {
        bail!("{failed} criteria failed");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Static(a) => static_cmd(a),
        Command::Identify(a) => identify(a),
        Command::FitCurve(a) => fit_curve(a),
        Command::Servo(a) => servo(a),
        Command::Report(a) => report(a),
        Command::Validate(a) => validate(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
