//! Time integration of the passive cable, static equilibria and the
//! fixed-link experiment harness.

mod equilibrium;
mod integrator;
mod trajectory;

pub use equilibrium::{
    equilibrium_residual, equilibrium_solvers, static_equilibrium, AutoSolver, Equilibrium,
    EquilibriumOptions, EquilibriumSolver, NewtonSolver, SettleSolver,
};
pub use integrator::{integrators, Integrator, Rk4, SemiImplicitEuler};
pub use trajectory::{LoadEvent, LoadSchedule, Trajectory};
pub(crate) use equilibrium::residual_jacobian;

use nalgebra::{DVector, Vector3};

use crate::dynamics::{bias_forces, load_term_raw, mass_matrix_raw, rne_raw};
use crate::error::{Error, Result};
use crate::model::{CableModel, ChainState, ExternalLoad};

/// Default integration step, seconds.
pub const DEFAULT_DT: f64 = 1e-3;

/// `q̈ = M⁻¹(−C q̇ − G − Jᵀf_ext − K q − D q̇)` through a Cholesky solve.
pub fn forward_dynamics(
    model: &CableModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    loads: &[ExternalLoad],
) -> Result<DVector<f64>> {
    let bias = bias_forces(model, q, qd)?;
    for load in loads {
        load.validate(model)?;
    }
    forward_dynamics_raw(model, q, qd, loads, Some(bias))
}

pub(crate) fn forward_dynamics_raw(
    model: &CableModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    loads: &[ExternalLoad],
    bias: Option<DVector<f64>>,
) -> Result<DVector<f64>> {
    let bias = bias.unwrap_or_else(|| {
        let zero = vec![0.0; model.dof()];
        rne_raw(model, q.as_slice(), qd.as_slice(), &zero, &model.gravity())
    });
    let rhs = -(bias
        + load_term_raw(model, q.as_slice(), loads)
        + model.stiffness().component_mul(q)
        + model.damping().component_mul(qd));
    let m = mass_matrix_raw(model, q.as_slice());
    let chol = m.cholesky().ok_or(Error::SingularMassMatrix)?;
    Ok(chol.solve(&rhs))
}

/// Clamps coordinates to their joint limits, zeroing the velocity of any
/// coordinate that hit a limit.
pub(crate) fn clamp_to_limits(model: &CableModel, q: &mut DVector<f64>, qd: &mut DVector<f64>) {
    for (i, dof) in model.dofs().iter().enumerate() {
        let (lo, hi) = (dof.spec.lower, dof.spec.upper);
        if q[i] < lo {
            q[i] = lo;
            qd[i] = 0.0;
        } else if q[i] > hi {
            q[i] = hi;
            qd[i] = 0.0;
        }
    }
}

pub(crate) fn check_step_inputs(
    model: &CableModel,
    state: &ChainState,
    loads: &[ExternalLoad],
    dt: f64,
) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidTimeStep(dt));
    }
    state.validate(model)?;
    for load in loads {
        load.validate(model)?;
    }
    Ok(())
}

/// One semi-implicit Euler step with the default integrator.
pub fn step(model: &CableModel, state: &ChainState, loads: &[ExternalLoad], dt: f64) -> Result<ChainState> {
    SemiImplicitEuler.step(model, state, loads, dt)
}

/// Integrates `duration` seconds with the default integrator.
pub fn simulate(
    model: &CableModel,
    initial: &ChainState,
    schedule: &LoadSchedule,
    duration: f64,
    dt: f64,
) -> Result<Trajectory> {
    simulate_with(&SemiImplicitEuler, model, initial, schedule, duration, dt)
}

/// Integrates from `t = 0` for `duration` seconds, recording every step
/// (`round(duration / dt) + 1` samples). Loads switch at the first sample
/// whose time reaches each schedule entry.
pub fn simulate_with(
    integrator: &dyn Integrator,
    model: &CableModel,
    initial: &ChainState,
    schedule: &LoadSchedule,
    duration: f64,
    dt: f64,
) -> Result<Trajectory> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "duration must be positive, got {duration}"
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidTimeStep(dt));
    }
    schedule.validate(model)?;
    initial.validate(model)?;
    let steps = (duration / dt).round() as usize;
    let mut traj = Trajectory::new(dt);
    let mut active = schedule.active_index(0.0);
    let mut state = initial.clone();
    // report the initial acceleration consistently with the later samples
    state.qdd = forward_dynamics(model, &state.q, &state.qd, schedule.loads_at_index(active))?;
    traj.push_sample(0.0, state.clone());
    if let Some(i) = active {
        traj.events.push(LoadEvent { t: 0.0, entry: i });
    }
    for k in 0..steps {
        let t = k as f64 * dt;
        let now = schedule.active_index(t);
        if now != active {
            if let Some(i) = now {
                traj.events.push(LoadEvent { t, entry: i });
            }
            active = now;
        }
        state = integrator.step(model, &state, schedule.loads_at_index(active), dt)?;
        traj.push_sample((k + 1) as f64 * dt, state.clone());
    }
    Ok(traj)
}

/// Sub-chain for a link fixed horizontally to the world.
///
/// Links are numbered from the tip: `0` is the plug, `1` the cable link
/// next to it, and so on, so fixing link `k` of the default model leaves
/// the joints `k-1, …, 1` free (the numbering used for the tags).
pub fn fix_link(model: &CableModel, link_from_tip: usize) -> Result<CableModel> {
    let n = model.links().len();
    if link_from_tip >= n {
        return Err(Error::InvalidArgument(format!(
            "link {link_from_tip} does not exist (model has {n} links, numbered 0..{} from the tip)",
            n - 1
        )));
    }
    let sub = model.rerooted(n - 1 - link_from_tip)?;
    if sub.dof() == 0 {
        return Err(Error::NoDegreesOfFreedom(format!(
            "fixing link {link_from_tip} leaves no free joint distal to it"
        )));
    }
    Ok(sub)
}

/// Gravity-free copy, used by several checks.
pub fn without_gravity(model: &CableModel) -> CableModel {
    model
        .with_gravity(Vector3::zeros())
        .expect("zero gravity is valid")
}
