//! Resolved-rate servoing of the cable-tip frame onto a target frame.

mod plant;

pub use plant::{plants, DynamicPlant, DynamicPlantFactory, KinematicPlant, KinematicPlantFactory, Plant, PlantFactory};

use std::io::Write;

use nalgebra::{DMatrix, DVector, Vector6};

use crate::error::{check_dim, Error, Result};
use crate::io::fmt9;
use crate::kinematics::{rotation_log, FramePose};
use crate::linalg::{damped_gain_bound, damped_pinv_apply};

#[derive(Debug, Clone, PartialEq)]
pub struct ServoGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Task velocity is the frame error divided by this, seconds.
    pub time_constant: f64,
    pub damping_lambda: f64,
    pub pos_tol: f64,
    pub rot_tol: f64,
    pub max_iters: usize,
    /// Loop period shared with the plant, seconds.
    pub dt: f64,
    /// Anti-windup clamp on each integrator state, rad.
    pub integral_limit: f64,
    /// Track position only (drop the rotation rows).
    pub position_only: bool,
}

impl Default for ServoGains {
    fn default() -> Self {
        Self {
            kp: 1.0,
            ki: 0.0,
            kd: 0.0,
            time_constant: 1.0,
            damping_lambda: 0.01,
            pos_tol: 1e-3,
            rot_tol: 0.01,
            max_iters: 2000,
            dt: 0.01,
            integral_limit: 1.0,
            position_only: false,
        }
    }
}

impl ServoGains {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Error::InvalidArgument(format!("servo gain {what} = {v} is invalid"));
        for (what, v) in [("kp", self.kp), ("ki", self.ki), ("kd", self.kd), ("damping_lambda", self.damping_lambda)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad(what, v));
            }
        }
        for (what, v) in [
            ("time_constant", self.time_constant),
            ("pos_tol", self.pos_tol),
            ("rot_tol", self.rot_tol),
            ("dt", self.dt),
            ("integral_limit", self.integral_limit),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(what, v));
            }
        }
        Ok(())
    }
}

/// `(target − current translation; world-frame log of R_curᵀ R_target)`.
pub fn frame_error(current: &FramePose, target: &FramePose) -> Vector6<f64> {
    let dp = target.translation - current.translation;
    let local = rotation_log(&(current.rotation.inverse() * target.rotation));
    let w = current.rotation * local;
    Vector6::new(dp.x, dp.y, dp.z, w.x, w.y, w.z)
}

/// PID memory on the joint-velocity channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PidState {
    pub integral: DVector<f64>,
    pub previous: Option<DVector<f64>>,
}

impl PidState {
    pub fn new(n: usize) -> Self {
        Self { integral: DVector::zeros(n), previous: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServoCommand {
    pub command: DVector<f64>,
    /// Damped-inverse joint velocity before the PID.
    pub raw: DVector<f64>,
    /// ‖v‖ of the task velocity actually used.
    pub task_speed: f64,
    /// `max σ/(σ² + λ²)` of the Jacobian used.
    pub gain_bound: f64,
}

/// One controller update: `v = e/T`, `q̇_raw = Jᵀ(JJᵀ + λ²I)⁻¹v`, then PID
/// on `q̇_raw`. A zero error returns a zero command and leaves the state.
pub fn servo_step(
    error: &Vector6<f64>,
    jacobian: &DMatrix<f64>,
    gains: &ServoGains,
    state: &PidState,
) -> Result<(ServoCommand, PidState)> {
    gains.validate()?;
    check_dim("jacobian rows", 6, jacobian.nrows())?;
    let n = jacobian.ncols();
    check_dim("integrator state", n, state.integral.len())?;
    let rows = if gains.position_only { 3 } else { 6 };
    let j = jacobian.rows(0, rows).into_owned();
    let v = DVector::from_iterator(rows, error.iter().take(rows).map(|e| e / gains.time_constant));
    let gain_bound = damped_gain_bound(&j, gains.damping_lambda);
    if v.iter().all(|x| *x == 0.0) {
        let zero = DVector::zeros(n);
        let cmd = ServoCommand { command: zero.clone(), raw: zero, task_speed: 0.0, gain_bound };
        return Ok((cmd, state.clone()));
    }
    let raw = damped_pinv_apply(&j, &v, gains.damping_lambda)?;
    let lim = gains.integral_limit;
    let integral = (&state.integral + &raw * gains.dt).map(|x| x.clamp(-lim, lim));
    let derivative = match &state.previous {
        Some(p) => (&raw - p) / gains.dt,
        None => DVector::zeros(n),
    };
    let command = &raw * gains.kp + &integral * gains.ki + derivative * gains.kd;
    let next = PidState { integral, previous: Some(raw.clone()) };
    Ok((ServoCommand { command, raw, task_speed: v.norm(), gain_bound }, next))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    /// The error grew past ten times its initial size.
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServoResult {
    pub converged: bool,
    pub termination: Termination,
    pub iterations: usize,
    /// `(position m, rotation rad)` error acted on at each iteration.
    pub error_history: Vec<(f64, f64)>,
    /// Plant coordinates at the start of each iteration.
    pub q_history: Vec<DVector<f64>>,
    pub final_error: (f64, f64),
    pub final_state: DVector<f64>,
    /// Largest `‖q̇_raw‖ / (‖v‖ · max σ/(σ² + λ²))` seen; ≤ 1 by construction.
    pub worst_bound_ratio: f64,
}

fn error_norms(e: &Vector6<f64>) -> (f64, f64) {
    (e.fixed_rows::<3>(0).norm(), e.fixed_rows::<3>(3).norm())
}

pub fn run_servo(plant: &mut dyn Plant, target: &FramePose, gains: &ServoGains) -> Result<ServoResult> {
    gains.validate()?;
    let mut pid = PidState::new(plant.dof());
    let mut error_history = Vec::new();
    let mut q_history = Vec::new();
    let mut worst: f64 = 0.0;
    let within = |(p, r): (f64, f64)| p <= gains.pos_tol && (gains.position_only || r <= gains.rot_tol);
    let size = |(p, r): (f64, f64)| if gains.position_only { p } else { p.hypot(r) };
    let mut initial = None;
    let termination = loop {
        let e = frame_error(&plant.tip_frame()?, target);
        let norms = error_norms(&e);
        if within(norms) {
            break Termination::Converged;
        }
        let start = *initial.get_or_insert(size(norms));
        if size(norms) > 10.0 * start {
            break Termination::Diverged;
        }
        if error_history.len() >= gains.max_iters {
            break Termination::MaxIterations;
        }
        error_history.push(norms);
        q_history.push(plant.q().clone());
        let (cmd, next) = servo_step(&e, &plant.jacobian()?, gains, &pid)?;
        if cmd.task_speed > 0.0 && cmd.gain_bound > 0.0 {
            worst = worst.max(cmd.raw.norm() / (cmd.task_speed * cmd.gain_bound));
        }
        pid = next;
        plant.step(&cmd.command, gains.dt)?;
    };
    let final_error = error_norms(&frame_error(&plant.tip_frame()?, target));
    Ok(ServoResult {
        converged: termination == Termination::Converged,
        termination,
        iterations: error_history.len(),
        error_history,
        q_history,
        final_error,
        final_state: plant.q().clone(),
        worst_bound_ratio: worst,
    })
}

impl ServoResult {
    /// `iter,err_pos,err_rot,q1..qn`: one row per iteration plus a final row
    /// with the state reached.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let n = self.final_state.len();
        let mut header = vec!["iter".to_string(), "err_pos".into(), "err_rot".into()];
        header.extend((1..=n).map(|i| format!("q{i}")));
        writeln!(w, "{}", header.join(","))?;
        let rows = self
            .error_history
            .iter()
            .zip(&self.q_history)
            .chain(std::iter::once((&self.final_error, &self.final_state)));
        for (k, ((p, r), q)) in rows.enumerate() {
            let mut fields = vec![k.to_string(), fmt9(*p), fmt9(*r)];
            fields.extend(q.iter().map(|x| fmt9(*x)));
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
