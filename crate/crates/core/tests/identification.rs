use cablekit::ident::{run_identification, synthetic_pose_log, PoseEntry, PoseLog, SyntheticConfig};
use cablekit::model::{default_paper_model, identification_subchain, CableModel, ExternalLoad};
use cablekit::sim::{fix_link, static_equilibrium};
use nalgebra::DVector;

fn bare() -> CableModel {
    identification_subchain(&default_paper_model()).unwrap()
}

#[test]
fn estimates_are_invariant_to_a_time_shift() {
    let truth = bare().with_stiffness_damping(&[0.4, 0.8, 1.5, 3.0], &[0.01, 0.01, 0.02, 0.05]).unwrap();
    let syn = synthetic_pose_log(&truth, &SyntheticConfig::default()).unwrap();
    let base = run_identification(&bare(), &syn.log, &syn.loads).unwrap();
    for shift in [0.25, 1234.5] {
        let moved: Vec<PoseEntry> = syn.log.entries().iter().map(|e| PoseEntry { t: e.t + shift, ..*e }).collect();
        let log = PoseLog::new(syn.log.meta.clone(), moved).unwrap();
        let id = run_identification(&bare(), &log, &syn.loads).unwrap();
        let rel = |a: &DVector<f64>, b: &DVector<f64>| (a - b).abs().component_div(&b.abs()).max();
        assert!(rel(&id.params.stiffness, &base.params.stiffness) < 1e-9, "shift {shift}");
        assert!(rel(&id.params.damping, &base.params.damping) < 1e-6, "shift {shift}");
        assert!((id.diagnostics.static_start - shift - base.diagnostics.static_start).abs() < 1e-6);
    }
}

#[test]
fn identified_model_reproduces_the_static_shape() {
    let truth = bare().with_uniform_stiffness_damping(0.8, 0.02).unwrap();
    let syn = synthetic_pose_log(&truth, &SyntheticConfig::default()).unwrap();
    let id = run_identification(&bare(), &syn.log, &syn.loads).unwrap();
    for mass in [0.0, 0.05, 0.1] {
        let solve = |m: &CableModel| {
            let loads = if mass > 0.0 { vec![ExternalLoad::tip_weight(m, mass)] } else { vec![] };
            static_equilibrium(m, &loads, &DVector::zeros(m.dof())).unwrap().q
        };
        assert!((solve(&id.model) - solve(&truth)).amax() < 1e-7, "{mass} kg");
    }
}

#[test]
fn fixture_and_identification_subchain_agree() {
    let full = default_paper_model();
    assert_eq!(fix_link(&full, 5).unwrap().pitch_only(), identification_subchain(&full).unwrap());
}
