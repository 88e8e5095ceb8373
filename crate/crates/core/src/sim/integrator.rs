use std::sync::Arc;

use crate::error::Result;
use crate::model::{CableModel, ChainState, ExternalLoad};
use crate::registry::{Named, Registry};

use super::{check_step_inputs, clamp_to_limits, forward_dynamics_raw};

/// Advances a chain state by one time step under constant loads. The
/// returned `qdd` is the acceleration at the new state.
pub trait Integrator: Named + Send + Sync {
    fn step(
        &self,
        model: &CableModel,
        state: &ChainState,
        loads: &[ExternalLoad],
        dt: f64,
    ) -> Result<ChainState>;
}

/// `q̇ += q̈ dt`, then `q += q̇ dt` (symplectic Euler).
#[derive(Debug, Clone, Copy, Default)]
pub struct SemiImplicitEuler;

impl Named for SemiImplicitEuler {
    fn name(&self) -> &'static str {
        "semi-implicit-euler"
    }
    fn description(&self) -> &'static str {
        "symplectic Euler: velocity first, then position (default)"
    }
}

impl Integrator for SemiImplicitEuler {
    fn step(&self, model: &CableModel, state: &ChainState, loads: &[ExternalLoad], dt: f64) -> Result<ChainState> {
        check_step_inputs(model, state, loads, dt)?;
        let qdd = forward_dynamics_raw(model, &state.q, &state.qd, loads, None)?;
        let mut qd = &state.qd + qdd * dt;
        let mut q = &state.q + &qd * dt;
        clamp_to_limits(model, &mut q, &mut qd);
        let qdd = forward_dynamics_raw(model, &q, &qd, loads, None)?;
        Ok(ChainState::new(q, qd, qdd))
    }
}

/// Classical fourth-order Runge-Kutta on `(q, q̇)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rk4;

impl Named for Rk4 {
    fn name(&self) -> &'static str {
        "rk4"
    }
    fn description(&self) -> &'static str {
        "classical fourth-order Runge-Kutta"
    }
}

impl Integrator for Rk4 {
    fn step(&self, model: &CableModel, state: &ChainState, loads: &[ExternalLoad], dt: f64) -> Result<ChainState> {
        check_step_inputs(model, state, loads, dt)?;
        let f = |q: &nalgebra::DVector<f64>, qd: &nalgebra::DVector<f64>| {
            forward_dynamics_raw(model, q, qd, loads, None)
        };
        let (q0, v0) = (&state.q, &state.qd);
        let a1 = f(q0, v0)?;
        let (q2, v2) = (q0 + v0 * (0.5 * dt), v0 + &a1 * (0.5 * dt));
        let a2 = f(&q2, &v2)?;
        let (q3, v3) = (q0 + &v2 * (0.5 * dt), v0 + &a2 * (0.5 * dt));
        let a3 = f(&q3, &v3)?;
        let (q4, v4) = (q0 + &v3 * dt, v0 + &a3 * dt);
        let a4 = f(&q4, &v4)?;
        let mut q = q0 + (v0 + &v2 * 2.0 + &v3 * 2.0 + &v4) * (dt / 6.0);
        let mut qd = v0 + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
        clamp_to_limits(model, &mut q, &mut qd);
        let qdd = f(&q, &qd)?;
        Ok(ChainState::new(q, qd, qdd))
    }
}

/// Every integrator, keyed by name; the default is semi-implicit Euler.
pub fn integrators() -> Registry<dyn Integrator> {
    let mut reg: Registry<dyn Integrator> = Registry::new("integrator");
    reg.register(Arc::new(SemiImplicitEuler)).register(Arc::new(Rk4));
    reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AxisSpec, JointSpec, LinkSpec};
    use nalgebra::{DVector, Vector3};

    #[test]
    fn rk4_converges_at_fourth_order() {
        // undamped spring rod, gravity off: q(t) = q0 cos(ω t)
        let m = CableModel::new(
            vec![LinkSpec::rod(0.05, 0.05, 0.005); 2],
            vec![JointSpec::pitch(AxisSpec::free(-3.0, 3.0).with_stiffness(0.5))],
            Vector3::zeros(),
        )
        .unwrap();
        let inertia: f64 = 0.05 * 0.05 * 0.05 / 3.0;
        let omega = (0.5 / inertia).sqrt();
        let err = |dt: f64| {
            let mut s = ChainState::at_rest(DVector::from_element(1, 0.1));
            let steps = (0.1 / dt).round() as usize;
            for _ in 0..steps {
                s = Rk4.step(&m, &s, &[], dt).unwrap();
            }
            (s.q[0] - 0.1 * (omega * 0.1).cos()).abs()
        };
        let ratio = err(2e-4) / err(1e-4);
        assert!(ratio > 12.0 && ratio < 20.0, "{ratio}");
    }

    #[test]
    fn registry_lists_both() {
        let reg = integrators();
        assert_eq!(reg.default_strategy().unwrap().name(), "semi-implicit-euler");
        assert!(reg.get("rk4").is_ok());
        assert!(reg.get("verlet").is_err());
    }
}
