//! Synthetic tag logs: a known chain released under a tip-weight step,
//! observed by one tag per link.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dynamics::mass_matrix;
use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, rotation_exp, FramePose};
use crate::model::{CableModel, ExternalLoad};
use crate::sim::{clamp_to_limits, forward_dynamics_raw, residual_jacobian, static_equilibrium};

use super::{tag_links, PoseEntry, PoseLog, PoseLogMeta};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    /// Tip weight applied as a step at `t = 0`, kg.
    pub tip_mass: f64,
    /// Pose sampling period, seconds.
    pub log_dt: f64,
    /// Recording stops once ‖q̇‖∞ has stayed below this for `tail` seconds.
    pub settle_velocity: f64,
    pub tail: f64,
    /// Failsafe on simulated time.
    pub max_duration: f64,
    /// Integrator steps per log period; `None` picks them from the
    /// linearized spectrum at the loaded rest pose.
    pub substeps: Option<usize>,
    /// Tag ids base → tip; `None` numbers them downwards to 1 at the tip.
    pub tag_ids: Option<Vec<u32>>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            tip_mass: 0.1,
            log_dt: 1e-3,
            settle_velocity: 1e-4,
            tail: 1.0,
            max_duration: 600.0,
            substeps: None,
            tag_ids: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticLog {
    pub log: PoseLog,
    pub loads: Vec<ExternalLoad>,
    /// Unloaded rest pose the release starts from.
    pub initial: DVector<f64>,
    /// Loaded rest pose.
    pub equilibrium: DVector<f64>,
    pub substeps: usize,
}

/// Steps per log period from the eigenvalues `λ` of the linearized
/// first-order system at `q`, as `(stable, resolved)`: the first keeps
/// every mode inside the RK4 stability region (`h|λ| ≤ 2.5`), the second
/// also resolves every oscillation (`h|Im λ| ≤ 0.2`).
fn spectral_substeps(
    model: &CableModel,
    q: &DVector<f64>,
    loads: &[ExternalLoad],
    log_dt: f64,
) -> Result<(usize, usize)> {
    let n = model.dof();
    let m = mass_matrix(model, q)?;
    let chol = m.cholesky().ok_or(Error::SingularMassMatrix)?;
    let kt = residual_jacobian(model, q, loads);
    let d = DMatrix::from_diagonal(&model.damping());
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, n), (n, n)).fill_with_identity();
    a.view_mut((n, 0), (n, n)).copy_from(&(-chol.solve(&kt)));
    a.view_mut((n, n), (n, n)).copy_from(&(-chol.solve(&d)));
    let (mut stable, mut resolved) = (1.0_f64, 1.0_f64);
    for z in a.complex_eigenvalues().iter() {
        stable = stable.max(log_dt * z.norm() / 2.5);
        resolved = resolved.max(log_dt * z.im.abs() / 0.2);
    }
    Ok((stable.ceil() as usize, resolved.max(stable).ceil() as usize))
}

fn rk4_steps(
    model: &CableModel,
    loads: &[ExternalLoad],
    q: &DVector<f64>,
    qd: &DVector<f64>,
    dt: f64,
    steps: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let (mut q, mut qd) = (q.clone(), qd.clone());
    let h = dt / steps as f64;
    let f = |q: &DVector<f64>, qd: &DVector<f64>| forward_dynamics_raw(model, q, qd, loads, None);
    for _ in 0..steps {
        let a1 = f(&q, &qd)?;
        let (q2, v2) = (&q + &qd * (0.5 * h), &qd + &a1 * (0.5 * h));
        let a2 = f(&q2, &v2)?;
        let (q3, v3) = (&q + &v2 * (0.5 * h), &qd + &a2 * (0.5 * h));
        let a3 = f(&q3, &v3)?;
        let (q4, v4) = (&q + &v3 * h, &qd + &a3 * h);
        let a4 = f(&q4, &v4)?;
        q += (&qd + &v2 * 2.0 + &v3 * 2.0 + &v4) * (h / 6.0);
        qd += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
        clamp_to_limits(model, &mut q, &mut qd);
    }
    Ok((q, qd))
}

/// Log periods between step-doubling error checks.
const CHECK_EVERY: usize = 10;
/// Local error target of one log period, on `q` (rad) and `q̇ dt` (rad).
const STEP_TOLERANCE: f64 = 1e-12;

fn tag_poses(model: &CableModel, q: &DVector<f64>, links: &[usize]) -> Result<Vec<FramePose>> {
    let frames = forward_kinematics(model, q)?;
    Ok(links.iter().map(|&l| frames.links[l]).collect())
}

/// Releases the unloaded rest pose of `truth` under a tip weight and logs
/// the tag poses until the chain has settled.
pub fn synthetic_pose_log(truth: &CableModel, config: &SyntheticConfig) -> Result<SyntheticLog> {
    if !(config.log_dt > 0.0) {
        return Err(Error::InvalidTimeStep(config.log_dt));
    }
    let links = tag_links(truth)?;
    let n = truth.dof();
    let tag_ids = match &config.tag_ids {
        Some(ids) => ids.clone(),
        None => (1..=links.len() as u32).rev().collect(),
    };
    let spacing = truth.links()[links[1]].length;
    let meta = PoseLogMeta { tag_ids: tag_ids.clone(), spacing_m: spacing };
    meta.validate()?;
    if tag_ids.len() != links.len() {
        return Err(Error::DimensionMismatch { what: "tag ids", expected: links.len(), found: tag_ids.len() });
    }

    let loads = vec![ExternalLoad::tip_weight(truth, config.tip_mass)];
    let initial = static_equilibrium(truth, &[], &DVector::zeros(n))?.q;
    let equilibrium = static_equilibrium(truth, &loads, &initial)?.q;
    let (floor, mut substeps) = match config.substeps {
        Some(s) if s > 0 => (s, s),
        Some(_) => return Err(Error::InvalidArgument("substeps must be positive".into())),
        None => spectral_substeps(truth, &equilibrium, &loads, config.log_dt)?,
    };
    let adaptive = config.substeps.is_none();
    let initial_substeps = substeps;

    let (mut q, mut qd) = (initial.clone(), DVector::zeros(n));
    let mut entries = Vec::new();
    // start of the current run of ‖q̇‖∞ below the settle velocity
    let mut quiet_since: Option<f64> = None;
    let mut k = 0usize;
    loop {
        let t = k as f64 * config.log_dt;
        for (id, pose) in tag_ids.iter().zip(tag_poses(truth, &q, &links)?) {
            entries.push(PoseEntry { t, tag_id: *id, pose });
        }
        if k > 0 && qd.amax() < config.settle_velocity {
            quiet_since.get_or_insert(t);
        } else {
            quiet_since = None;
        }
        if quiet_since.is_some_and(|ts| t >= ts + config.tail) {
            break;
        }
        if t >= config.max_duration {
            return Err(Error::NoConvergence {
                solver: "synthetic release",
                iterations: k,
                residual: qd.amax(),
            });
        }
        if adaptive && k % CHECK_EVERY == 0 {
            // step doubling: refine while the estimated local error is too
            // large, coarsen (down to the stability floor) when far below
            loop {
                let coarse = rk4_steps(truth, &loads, &q, &qd, config.log_dt, substeps)?;
                let fine = rk4_steps(truth, &loads, &q, &qd, config.log_dt, 2 * substeps)?;
                let err = (&fine.0 - &coarse.0).amax().max((&fine.1 - &coarse.1).amax() * config.log_dt) / 15.0;
                if err > STEP_TOLERANCE && substeps < 1 << 12 {
                    substeps *= 2;
                    continue;
                }
                if err < STEP_TOLERANCE / 100.0 && substeps / 2 >= floor {
                    substeps /= 2;
                }
                (q, qd) = fine;
                break;
            }
        } else {
            (q, qd) = rk4_steps(truth, &loads, &q, &qd, config.log_dt, substeps)?;
        }
        k += 1;
    }
    let substeps = initial_substeps;
    Ok(SyntheticLog { log: PoseLog::new(meta, entries)?, loads, initial, equilibrium, substeps })
}

/// Tag measurement noise: isotropic position noise and a body-frame
/// rotation-vector perturbation per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseNoise {
    pub position_sigma: f64,
    pub rotation_sigma: f64,
}

impl Default for PoseNoise {
    fn default() -> Self {
        Self { position_sigma: 1e-3, rotation_sigma: 0.5_f64.to_radians() }
    }
}

pub fn add_pose_noise(log: &PoseLog, noise: &PoseNoise, seed: u64) -> Result<PoseLog> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = Normal::new(0.0, noise.position_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let rot = Normal::new(0.0, noise.rotation_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let entries = log
        .entries()
        .iter()
        .map(|e| {
            let dp = Vector3::from_fn(|_, _| pos.sample(&mut rng));
            let dr = Vector3::from_fn(|_, _| rot.sample(&mut rng));
            let pose = FramePose::new(e.pose.rotation * rotation_exp(&dr), e.pose.translation + dp);
            PoseEntry { pose, ..*e }
        })
        .collect();
    PoseLog::new(log.meta.clone(), entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ident::{joint_angle_samples, ASSOCIATION_WINDOW};
    use crate::model::{default_paper_model, identification_subchain};

    fn truth() -> CableModel {
        identification_subchain(&default_paper_model())
            .unwrap()
            .with_uniform_stiffness_damping(0.5, 0.05)
            .unwrap()
    }

    #[test]
    fn release_ends_at_the_loaded_rest_pose() {
        let m = truth();
        let syn = synthetic_pose_log(&m, &SyntheticConfig::default()).unwrap();
        assert_eq!(syn.log.meta.tag_ids, vec![5, 4, 3, 2, 1]);
        assert_eq!(syn.log.entries().len() % 5, 0);
        let angles = joint_angle_samples(&m, &syn.log, ASSOCIATION_WINDOW).unwrap();
        assert!((&angles[0].state.q - &syn.initial).amax() < 1e-12);
        let last = &angles.last().unwrap().state.q;
        assert!((last - &syn.equilibrium).amax() < 1e-4);
        // heavier load sags further
        assert!(syn.equilibrium.iter().zip(syn.initial.iter()).all(|(e, i)| e > i));
    }

    #[test]
    fn stiff_underdamped_chain_gets_more_substeps_than_the_stability_floor() {
        let m = truth().with_uniform_stiffness_damping(5.0, 0.001).unwrap();
        let loads = vec![ExternalLoad::tip_weight(&m, 0.1)];
        let q = static_equilibrium(&m, &loads, &DVector::zeros(4)).unwrap().q;
        let (stable, resolved) = spectral_substeps(&m, &q, &loads, 1e-3).unwrap();
        assert!(stable >= 1 && resolved > stable, "{stable} {resolved}");
    }

    #[test]
    fn noise_is_seeded_and_sized() {
        let m = truth();
        let syn = synthetic_pose_log(&m, &SyntheticConfig { tail: 0.1, settle_velocity: 1e-2, ..Default::default() })
            .unwrap();
        let a = add_pose_noise(&syn.log, &PoseNoise::default(), 7).unwrap();
        let b = add_pose_noise(&syn.log, &PoseNoise::default(), 7).unwrap();
        let c = add_pose_noise(&syn.log, &PoseNoise::default(), 8).unwrap();
        assert_eq!(a.entries(), b.entries());
        assert_ne!(a.entries(), c.entries());
        let n = syn.log.entries().len() as f64;
        let var = syn
            .log
            .entries()
            .iter()
            .zip(a.entries())
            .map(|(x, y)| (y.pose.translation - x.pose.translation).norm_squared())
            .sum::<f64>()
            / (3.0 * n);
        assert!((var.sqrt() - 1e-3).abs() < 1e-4, "{}", var.sqrt());
    }
}
