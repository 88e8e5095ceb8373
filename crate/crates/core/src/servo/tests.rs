use super::*;
use crate::kinematics::{forward_kinematics, rotation_exp};
use crate::model::{default_paper_model, identification_subchain, CableModel};
use nalgebra::{Rotation3, Vector3};
use proptest::prelude::*;

fn four_dof() -> CableModel {
    identification_subchain(&default_paper_model()).unwrap()
}

fn tip(model: &CableModel, q: &[f64]) -> FramePose {
    forward_kinematics(model, &DVector::from_column_slice(q)).unwrap().tip
}

fn bent() -> DVector<f64> {
    DVector::from_element(4, 0.1)
}

#[test]
fn frame_error_basics() {
    let f = FramePose::new(Rotation3::from_euler_angles(0.2, -0.1, 0.4), Vector3::new(0.3, -0.2, 0.1));
    assert_eq!(frame_error(&f, &f), Vector6::zeros());
    let mut g = f.clone();
    g.translation.x += 0.1;
    let e = frame_error(&f, &g);
    assert!((e - Vector6::new(0.1, 0.0, 0.0, 0.0, 0.0, 0.0)).norm() < 1e-15);
}

#[test]
fn error_twist_takes_current_to_target() {
    let cur = FramePose::new(Rotation3::from_euler_angles(0.7, 0.3, -1.1), Vector3::new(0.1, 0.2, 0.3));
    for w in [Vector3::new(1e-3, -2e-3, 5e-4), Vector3::new(0.3, 0.1, -0.2)] {
        let tgt = FramePose::new(rotation_exp(&w) * cur.rotation, cur.translation + Vector3::new(0.01, 0.0, -0.02));
        let e = frame_error(&cur, &tgt);
        let wv = Vector3::new(e[3], e[4], e[5]);
        // world-frame twist applied on the left
        let reached = rotation_exp(&wv) * cur.rotation;
        assert!((reached.matrix() - tgt.rotation.matrix()).norm() < 1e-9);
        assert!((cur.translation + e.fixed_rows::<3>(0) - tgt.translation).norm() < 1e-15);
    }
}

#[test]
fn zero_error_is_idempotent() {
    let j = DMatrix::from_fn(6, 4, |r, c| (r as f64 + 1.0) * 0.1 - c as f64 * 0.05);
    let state = PidState { integral: DVector::from_element(4, 0.2), previous: Some(DVector::from_element(4, -0.1)) };
    let gains = ServoGains { ki: 0.5, kd: 0.1, ..Default::default() };
    let (cmd, next) = servo_step(&Vector6::zeros(), &j, &gains, &state).unwrap();
    assert!(cmd.command.iter().all(|c| *c == 0.0));
    assert_eq!(next, state);
}

#[test]
fn identity_jacobian_passes_through() {
    let gains = ServoGains { damping_lambda: 0.0, time_constant: 2.0, ..Default::default() };
    let e = Vector6::new(0.1, -0.2, 0.3, 0.01, 0.02, -0.03);
    let (cmd, _) = servo_step(&e, &DMatrix::identity(6, 6), &gains, &PidState::new(6)).unwrap();
    for i in 0..6 {
        assert!((cmd.command[i] - e[i] / 2.0).abs() < 1e-14);
    }
}

#[test]
fn undamped_singular_jacobian_is_an_error() {
    let gains = ServoGains { damping_lambda: 0.0, ..Default::default() };
    let j = crate::kinematics::tip_jacobian(&four_dof(), &bent()).unwrap();
    let e = Vector6::new(0.01, 0.0, 0.0, 0.0, 0.0, 0.0);
    assert!(matches!(servo_step(&e, &j, &gains, &PidState::new(4)), Err(Error::SingularJacobian)));
}

#[test]
fn integrator_is_clamped() {
    let gains = ServoGains { kp: 0.0, ki: 1.0, integral_limit: 0.05, dt: 1.0, ..Default::default() };
    let e = Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    let mut st = PidState::new(6);
    for _ in 0..5 {
        st = servo_step(&e, &DMatrix::identity(6, 6), &gains, &st).unwrap().1;
    }
    assert!((st.integral[0] - 0.05).abs() < 1e-15);
}

#[test]
fn target_at_start_needs_no_iterations() {
    let model = four_dof();
    let mut plant = KinematicPlant::new(model.clone(), bent()).unwrap();
    let r = run_servo(&mut plant, &tip(&model, &[0.1; 4]), &ServoGains::default()).unwrap();
    assert!(r.converged);
    assert_eq!(r.iterations, 0);
    assert!(r.error_history.is_empty());
}

#[test]
fn reaches_a_reachable_target_on_both_plants() {
    let model = four_dof();
    let target = tip(&model, &[0.4, -0.2, 0.3, 0.5]);
    for name in plants().names() {
        let mut plant = plants().get(name).unwrap().build(&model, &bent()).unwrap();
        let r = run_servo(plant.as_mut(), &target, &ServoGains::default()).unwrap();
        assert!(r.converged, "{name}: {:?}", r.termination);
        assert!(r.final_error.0 <= 1e-3 && r.final_error.1 <= 0.01);
        assert_eq!(r.error_history.len(), r.iterations);
        assert!(r.worst_bound_ratio <= 1.0 + 1e-9);
    }
}

#[test]
fn far_target_does_not_converge() {
    let model = four_dof();
    let target = FramePose::new(Rotation3::identity(), Vector3::new(10.0, 0.0, 0.0));
    let mut plant = KinematicPlant::new(model, bent()).unwrap();
    let gains = ServoGains { max_iters: 300, ..Default::default() };
    let r = run_servo(&mut plant, &target, &gains).unwrap();
    assert!(!r.converged);
    assert!(matches!(r.termination, Termination::MaxIterations | Termination::Diverged));
}

#[test]
fn position_only_ignores_orientation() {
    let model = four_dof();
    let mut target = tip(&model, &[0.3, 0.3, 0.3, 0.3]);
    target.rotation = Rotation3::from_euler_angles(1.0, 0.0, 0.0) * target.rotation;
    let gains = ServoGains { position_only: true, ..Default::default() };
    let mut plant = KinematicPlant::new(model, bent()).unwrap();
    let r = run_servo(&mut plant, &target, &gains).unwrap();
    assert!(r.converged && r.final_error.0 <= 1e-3 && r.final_error.1 > 0.5);
}

#[test]
fn report_csv_has_a_row_per_iteration_plus_final() {
    let model = four_dof();
    let mut plant = KinematicPlant::new(model.clone(), bent()).unwrap();
    let r = run_servo(&mut plant, &tip(&model, &[0.2, 0.1, 0.0, 0.1]), &ServoGains::default()).unwrap();
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "iter,err_pos,err_rot,q1,q2,q3,q4");
    assert_eq!(lines.len(), r.iterations + 2);
}

#[test]
fn dynamic_plant_tracks_velocity_with_lag() {
    let model = four_dof();
    let mut p = DynamicPlant::new(model, bent(), 0.02).unwrap();
    let cmd = DVector::from_element(4, 0.1);
    for _ in 0..50 {
        p.step(&cmd, 0.01).unwrap();
    }
    assert!((&p.state().qd - &cmd).norm() < 1e-9);
    // q̇ rose from zero: the lag costs τ·cmd of travel
    let expected = 0.1 + 0.1 * (0.5 - 0.02 * (1.0 - (-25.0f64).exp()));
    assert!((p.q()[0] - expected).abs() < 1e-12);
    assert!(p.torque().iter().all(|t| t.is_finite()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn damped_step_respects_svd_bound(entries in proptest::collection::vec(-1.0f64..1.0, 24),
                                      scale in 1e-6f64..1.0,
                                      e in proptest::collection::vec(-0.1f64..0.1, 6),
                                      lambda in 1e-3f64..0.5) {
        let mut j = DMatrix::from_row_slice(6, 4, &entries);
        j.column_mut(3).scale_mut(scale); // drive towards singularity
        let gains = ServoGains { damping_lambda: lambda, ..Default::default() };
        let err = Vector6::from_column_slice(&e);
        let (cmd, _) = servo_step(&err, &j, &gains, &PidState::new(4)).unwrap();
        let svd = j.clone().svd(false, false);
        let bound = svd.singular_values.iter().map(|s| s / (s * s + lambda * lambda)).fold(0.0, f64::max);
        prop_assert!(cmd.command.norm() <= err.norm() * bound * (1.0 + 1e-9) + 1e-15);
    }

    #[test]
    fn position_error_decreases_towards_reachable_targets(q in proptest::collection::vec(-0.6f64..0.6, 4)) {
        let model = four_dof();
        let target = tip(&model, &q);
        let mut plant = KinematicPlant::new(model, bent()).unwrap();
        let r = run_servo(&mut plant, &target, &ServoGains::default()).unwrap();
        prop_assert!(r.converged);
        for w in r.error_history.windows(2) {
            prop_assert!(w[1].0 < w[0].0, "{:?}", w);
        }
    }
}
