//! Pose log → joint angles → derivatives → segmentation → K and D.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{CableModel, ExternalLoad};

use super::differentiate::moving_average;
use super::estimate::{damping_rows, jointwise};
use super::{
    differentiate_log_with, DYNAMIC_VELOCITY, identify_damping, identify_stiffness, identify_stiffness_with_damping,
    poses_to_joint_angles, DiffOptions, JointwiseEstimate, PoseLog, StateSample, ASSOCIATION_WINDOW,
    STATIC_VELOCITY,
};

/// How the settled tail enters the stiffness fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StaticMode {
    /// Every settled sample is one regression row, with its measured state.
    #[default]
    Samples,
    /// The settled positions are averaged into a single rest configuration.
    /// Far less sensitive to measurement noise, which differentiation
    /// amplifies.
    Averaged,
}

/// What to do with an instant whose relative tag rotations are not pure
/// pitch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OffPitchPolicy {
    #[default]
    Error,
    /// Drop the instant and count it in the diagnostics. Noisy tag
    /// orientations occasionally exceed the bound on their own.
    Skip,
}

/// Moving-average cascade applied along time to the damping regression
/// rows (regressor and right-hand side alike). A linear filter keeps an
/// exact equation exact, so this suppresses differentiation noise without
/// the bias that smoothing the positions harder would introduce through
/// the nonlinear dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowFilter {
    pub window: usize,
    pub passes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub association_window: f64,
    pub off_pitch: OffPitchPolicy,
    pub diff: DiffOptions,
    /// Separate (typically heavier) differentiation used only to locate the
    /// settled tail; `None` reuses `diff`.
    pub segmentation_diff: Option<DiffOptions>,
    /// ‖q̇‖∞ below which a sample counts as settled, rad/s.
    pub static_velocity: f64,
    /// The settled tail must last at least this long, seconds.
    pub min_static_duration: f64,
    pub static_mode: StaticMode,
    /// Drop dynamic samples whose smoothing residual exceeds this, rad.
    pub max_smoothing_residual: Option<f64>,
    pub row_filter: Option<RowFilter>,
    /// Number of `K ← K(D)`, `D ← D(K)` refinements after the first pass.
    pub refinements: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            association_window: ASSOCIATION_WINDOW,
            off_pitch: OffPitchPolicy::Error,
            diff: DiffOptions::default(),
            segmentation_diff: None,
            static_velocity: STATIC_VELOCITY,
            min_static_duration: 0.5,
            static_mode: StaticMode::Samples,
            max_smoothing_residual: None,
            row_filter: None,
            refinements: 3,
        }
    }
}

impl PipelineOptions {
    /// Settings for logs with tag noise of the order of a millimetre and
    /// half a degree at 1 kHz: heavier smoothing, a settle threshold above
    /// the velocity noise floor, an averaged rest pose and filtered damping
    /// rows.
    pub fn noisy() -> Self {
        Self {
            off_pitch: OffPitchPolicy::Skip,
            diff: DiffOptions { window: 51, passes: 2, dt: None },
            segmentation_diff: Some(DiffOptions { window: 201, passes: 3, dt: None }),
            static_velocity: 0.03,
            static_mode: StaticMode::Averaged,
            row_filter: Some(RowFilter { window: 201, passes: 2 }),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedParams {
    pub stiffness: DVector<f64>,
    pub damping: DVector<f64>,
    /// Combined 2-norm of the final stiffness and damping fit residuals.
    pub residual: f64,
    /// Worse of the two regressor condition numbers.
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentDiagnostics {
    pub samples: usize,
    /// Instants dropped under [`OffPitchPolicy::Skip`].
    pub skipped_instants: usize,
    pub static_samples: usize,
    pub dynamic_samples: usize,
    /// Start of the settled tail, seconds.
    pub static_start: f64,
    /// First-pass stiffness, before the damping term is accounted for.
    pub initial_stiffness: DVector<f64>,
    pub stiffness_fit: JointwiseEstimate,
    pub damping_fit: JointwiseEstimate,
}

#[derive(Debug, Clone)]
pub struct Identification {
    pub params: IdentifiedParams,
    /// Input model with the identified values written in.
    pub model: CableModel,
    pub diagnostics: IdentDiagnostics,
}

/// Joint-angle samples of a pose log (one per base-tag stamp).
pub fn joint_angle_samples(model: &CableModel, log: &PoseLog, window: f64) -> Result<Vec<StateSample>> {
    Ok(angle_samples(model, log, window, OffPitchPolicy::Error)?.0)
}

fn angle_samples(
    model: &CableModel,
    log: &PoseLog,
    window: f64,
    policy: OffPitchPolicy,
) -> Result<(Vec<StateSample>, usize)> {
    let mut out = Vec::new();
    let mut skipped = 0;
    for inst in log.instants(window)? {
        match poses_to_joint_angles(&inst.frames, model) {
            Ok(q) => out.push(StateSample::position(inst.t, q)),
            Err(Error::OffPitchRotation { .. }) if policy == OffPitchPolicy::Skip => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((out, skipped))
}

/// Start time of the settled tail: the samples after the last (unflagged)
/// one moving faster than the static velocity. The tail must last at least
/// `min_static_duration`.
pub fn settled_start(samples: &[StateSample], options: &PipelineOptions) -> Result<f64> {
    let still = |s: &StateSample| s.state.qd.amax() < options.static_velocity;
    // flagged end samples neither break nor extend the settled run
    let start = samples
        .iter()
        .rposition(|s| !s.low_quality && !still(s))
        .map_or(0, |i| i + 1);
    let tail = &samples[start..];
    let duration = match (tail.first(), tail.last()) {
        (Some(a), Some(b)) => b.t - a.t,
        _ => 0.0,
    };
    if duration < options.min_static_duration {
        return Err(Error::Segmentation(format!(
            "settled tail lasts {duration:.3} s; need {} s below {:e} rad/s",
            options.min_static_duration, options.static_velocity
        )));
    }
    Ok(tail[0].t)
}

/// Splits differentiated samples at `t_static` into the settled tail and
/// the moving samples before it. Returns `(static, dynamic)`; flagged
/// samples are left out of both.
pub fn split_at(
    samples: &[StateSample],
    t_static: f64,
    options: &PipelineOptions,
) -> (Vec<StateSample>, Vec<StateSample>) {
    let statics = samples.iter().filter(|s| s.t >= t_static && !s.low_quality).cloned().collect();
    let dynamics = samples
        .iter()
        .take_while(|s| s.t < t_static)
        .filter(|s| !s.low_quality && s.state.qd.amax() >= options.static_velocity)
        .filter(|s| options.max_smoothing_residual.is_none_or(|m| s.quality.amax() <= m))
        .cloned()
        .collect();
    (statics, dynamics)
}

/// Damping from the filtered rows of the contiguous moving block.
fn filtered_damping(
    model: &CableModel,
    stiffness: &DVector<f64>,
    moving: &[StateSample],
    loads: &[ExternalLoad],
    options: &PipelineOptions,
    filter: RowFilter,
) -> Result<JointwiseEstimate> {
    if filter.window % 2 == 0 || filter.passes == 0 {
        return Err(Error::InvalidArgument(format!(
            "row filter needs an odd window and at least one pass, got {}×{}",
            filter.window, filter.passes
        )));
    }
    // drop the flagged start, where the position smoothing was truncated
    let block: Vec<StateSample> = moving.iter().skip_while(|s| s.low_quality).cloned().collect();
    if !block.iter().any(|s| s.state.qd.amax() > DYNAMIC_VELOCITY) {
        return Err(Error::VelocityPrecondition(format!(
            "no sample moves faster than {DYNAMIC_VELOCITY:e} rad/s; damping is unobservable"
        )));
    }
    let n = model.dof();
    let (mut a, mut b) = damping_rows(model, stiffness, &block, loads);
    let half = filter.window / 2;
    for _ in 0..filter.passes {
        a = moving_average(&a, half, n);
        b = moving_average(&b, half, n);
    }
    let reach = half * filter.passes;
    let keep: Vec<usize> = (reach..block.len().saturating_sub(reach))
        .filter(|&k| block[k].state.qd.amax() >= options.static_velocity)
        .collect();
    let a: Vec<_> = keep.iter().map(|&k| a[k].clone()).collect();
    let b: Vec<_> = keep.iter().map(|&k| b[k].clone()).collect();
    jointwise("damping", &a, &b, n)
}

pub fn run_identification(model: &CableModel, log: &PoseLog, loads: &[ExternalLoad]) -> Result<Identification> {
    run_identification_with(model, log, loads, &PipelineOptions::default())
}

pub fn run_identification_with(
    model: &CableModel,
    log: &PoseLog,
    loads: &[ExternalLoad],
    options: &PipelineOptions,
) -> Result<Identification> {
    if log.is_empty() {
        return Err(Error::TooFewSamples { needed: 5, found: 0 });
    }
    let (angles, skipped_instants) = angle_samples(model, log, options.association_window, options.off_pitch)?;
    let samples = differentiate_log_with(&angles, &options.diff)?;
    let static_start = match &options.segmentation_diff {
        None => settled_start(&samples, options)?,
        Some(d) => settled_start(&differentiate_log_with(&angles, d)?, options)?,
    };
    let (statics, dynamics) = split_at(&samples, static_start, options);
    if statics.is_empty() {
        return Err(Error::Segmentation("settled tail has no usable samples".into()));
    }

    let static_rows = match options.static_mode {
        StaticMode::Samples => statics.clone(),
        StaticMode::Averaged => {
            let mean = statics.iter().map(|s| &s.state.q).sum::<DVector<f64>>() / statics.len() as f64;
            vec![StateSample::position(static_start, mean)]
        }
    };
    let moving: Vec<StateSample> = samples.iter().take_while(|s| s.t < static_start).cloned().collect();
    let damping = |k: &DVector<f64>| match options.row_filter {
        None => identify_damping(model, k, &dynamics, loads),
        Some(f) => filtered_damping(model, k, &moving, loads, options, f),
    };
    let k0 = identify_stiffness(model, &static_rows, loads)?;
    let mut damping_fit = damping(&k0.values)?;
    let mut stiffness_fit = k0.clone();
    for _ in 0..options.refinements {
        stiffness_fit = identify_stiffness_with_damping(model, &static_rows, loads, Some(&damping_fit.values))?;
        damping_fit = damping(&stiffness_fit.values)?;
    }


    let params = IdentifiedParams {
        stiffness: stiffness_fit.values.clone(),
        damping: damping_fit.values.clone(),
        residual: stiffness_fit.residual.hypot(damping_fit.residual),
        condition: stiffness_fit.condition.max(damping_fit.condition),
    };
    let updated = model.with_stiffness_damping(params.stiffness.as_slice(), params.damping.as_slice())?;
    Ok(Identification {
        params,
        model: updated,
        diagnostics: IdentDiagnostics {
            samples: samples.len(),
            skipped_instants,
            static_samples: statics.len(),
            dynamic_samples: dynamics.len(),
            static_start,
            initial_stiffness: k0.values,
            stiffness_fit,
            damping_fit,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ident::{add_pose_noise, synthetic_pose_log, PoseLogMeta, PoseNoise, SyntheticConfig};
    use crate::model::{default_paper_model, identification_subchain};

    fn bare() -> CableModel {
        identification_subchain(&default_paper_model())
            .unwrap()
            .with_uniform_stiffness_damping(0.0, 0.0)
            .unwrap()
    }

    fn rel(est: &DVector<f64>, truth: f64) -> f64 {
        est.map(|x| (x - truth).abs() / truth).max()
    }

    #[test]
    fn noise_free_round_trip() {
        let truth = bare().with_uniform_stiffness_damping(0.5, 0.01).unwrap();
        let syn = synthetic_pose_log(&truth, &SyntheticConfig::default()).unwrap();
        let id = run_identification(&bare(), &syn.log, &syn.loads).unwrap();
        assert!(rel(&id.params.stiffness, 0.5) < 1e-6, "{}", id.params.stiffness);
        assert!(rel(&id.params.damping, 0.01) < 0.05, "{}", id.params.damping);
        assert_eq!(id.model.stiffness(), id.params.stiffness);
        assert_eq!(id.model.damping(), id.params.damping);
        let d = &id.diagnostics;
        assert!(d.static_samples > 0 && d.dynamic_samples > 0 && d.skipped_instants == 0);
        assert!(d.static_start > 0.0 && id.params.condition >= 1.0);
        // the first pass, which ignores damping in the settled tail, is worse
        assert!(rel(&d.initial_stiffness, 0.5) >= rel(&id.params.stiffness, 0.5));
    }

    #[test]
    fn row_filter_leaves_exact_data_exact() {
        let truth = bare().with_uniform_stiffness_damping(0.5, 0.01).unwrap();
        let syn = synthetic_pose_log(&truth, &SyntheticConfig::default()).unwrap();
        let opts = PipelineOptions {
            row_filter: Some(RowFilter { window: 101, passes: 2 }),
            ..PipelineOptions::default()
        };
        let id = run_identification_with(&bare(), &syn.log, &syn.loads, &opts).unwrap();
        assert!(rel(&id.params.damping, 0.01) < 0.01, "{}", id.params.damping);
    }

    #[test]
    fn noisy_preset_handles_one_noisy_log() {
        let truth = bare().with_uniform_stiffness_damping(0.5, 0.01).unwrap();
        let syn = synthetic_pose_log(&truth, &SyntheticConfig::default()).unwrap();
        let noisy = add_pose_noise(&syn.log, &PoseNoise::default(), 3).unwrap();
        assert!(run_identification(&bare(), &noisy, &syn.loads).is_err());
        let id = run_identification_with(&bare(), &noisy, &syn.loads, &PipelineOptions::noisy()).unwrap();
        assert!(rel(&id.params.stiffness, 0.5) < 0.1, "{}", id.params.stiffness);
        assert!(rel(&id.params.damping, 0.01) < 0.6, "{}", id.params.damping);
    }

    #[test]
    fn empty_log_is_an_error() {
        let meta = PoseLogMeta { tag_ids: vec![5, 4, 3, 2, 1], spacing_m: 0.05 };
        let log = PoseLog::new(meta, Vec::new()).unwrap();
        assert!(matches!(run_identification(&bare(), &log, &[]), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn log_without_a_settled_tail_fails_segmentation() {
        let truth = bare().with_uniform_stiffness_damping(0.5, 0.01).unwrap();
        let syn = synthetic_pose_log(&truth, &SyntheticConfig::default()).unwrap();
        let cut: Vec<_> = syn.log.entries().iter().filter(|e| e.t < 2.0).copied().collect();
        let log = PoseLog::new(syn.log.meta.clone(), cut).unwrap();
        assert!(matches!(
            run_identification(&bare(), &log, &syn.loads),
            Err(Error::Segmentation(_))
        ));
    }
}
