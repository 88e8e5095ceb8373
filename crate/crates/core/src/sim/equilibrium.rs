use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{gravity_potential, load_term_raw, mass_matrix_raw, rne_raw};
use crate::error::{check_dim, Error, Result};
use crate::model::{CableModel, ExternalLoad};
use crate::registry::{Named, Registry};

/// `K q + G(q) + Jᵀ(q) f_ext`: the generalized force that must vanish at rest.
pub fn equilibrium_residual(model: &CableModel, q: &DVector<f64>, loads: &[ExternalLoad]) -> Result<DVector<f64>> {
    check_dim("joint positions", model.dof(), q.len())?;
    for load in loads {
        load.validate(model)?;
    }
    Ok(residual(model, q, loads))
}

fn residual(model: &CableModel, q: &DVector<f64>, loads: &[ExternalLoad]) -> DVector<f64> {
    let zero = vec![0.0; model.dof()];
    rne_raw(model, q.as_slice(), &zero, &zero, &model.gravity())
        + load_term_raw(model, q.as_slice(), loads)
        + model.stiffness().component_mul(q)
}

/// Central-difference Jacobian of the residual (the Hessian of the
/// potential when every load is a force).
pub(crate) fn residual_jacobian(model: &CableModel, q: &DVector<f64>, loads: &[ExternalLoad]) -> DMatrix<f64> {
    let n = q.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut qp = q.clone();
    for j in 0..n {
        let h = 1e-6 * q[j].abs().max(1.0);
        qp[j] = q[j] + h;
        let rp = residual(model, &qp, loads);
        qp[j] = q[j] - h;
        let rm = residual(model, &qp, loads);
        qp[j] = q[j];
        jac.set_column(j, &((rp - rm) / (2.0 * h)));
    }
    jac
}

fn clamp(model: &CableModel, q: &mut DVector<f64>) {
    for (v, d) in q.iter_mut().zip(model.dofs()) {
        *v = v.clamp(d.spec.lower, d.spec.upper);
    }
}

/// Potential whose gradient is the residual when every load is a pure force.
fn potential(model: &CableModel, q: &DVector<f64>, loads: &[ExternalLoad]) -> Option<f64> {
    if loads.iter().any(|l| l.torque_part() != nalgebra::Vector3::zeros()) {
        return None;
    }
    let spring = 0.5 * q.dot(&model.stiffness().component_mul(q));
    let grav = gravity_potential(model, q).ok()?;
    let load = crate::dynamics::load_potential(model, q, loads).ok()?;
    Some(spring + grav + load)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumOptions {
    /// Convergence threshold on ‖residual‖∞, N·m.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub q: DVector<f64>,
    /// ‖residual‖∞ at `q`, N·m.
    pub residual: f64,
    pub iterations: usize,
    pub solver: &'static str,
}

pub trait EquilibriumSolver: Named + Send + Sync {
    fn solve(
        &self,
        model: &CableModel,
        loads: &[ExternalLoad],
        q_init: &DVector<f64>,
        options: &EquilibriumOptions,
    ) -> Result<Equilibrium>;
}

fn check_inputs(model: &CableModel, loads: &[ExternalLoad], q_init: &DVector<f64>) -> Result<()> {
    check_dim("initial joint positions", model.dof(), q_init.len())?;
    for load in loads {
        load.validate(model)?;
    }
    Ok(())
}

/// Newton iteration on the residual with a backtracking line search on
/// ‖r‖₂. After reaching the tolerance it keeps polishing while the
/// residual still drops, so equilibria are fixed points to rounding.
#[derive(Debug, Clone, Copy, Default)]
pub struct NewtonSolver;

impl Named for NewtonSolver {
    fn name(&self) -> &'static str {
        "newton"
    }
    fn description(&self) -> &'static str {
        "Newton on the residual, numerical Jacobian, backtracking line search"
    }
}

impl EquilibriumSolver for NewtonSolver {
    fn solve(
        &self,
        model: &CableModel,
        loads: &[ExternalLoad],
        q_init: &DVector<f64>,
        options: &EquilibriumOptions,
    ) -> Result<Equilibrium> {
        check_inputs(model, loads, q_init)?;
        let mut q = q_init.clone();
        clamp(model, &mut q);
        let mut r = residual(model, &q, loads);
        let mut polish = 0;
        for it in 0..options.max_iterations {
            if r.amax() < options.tolerance {
                polish += 1;
                if polish > 3 || r.amax() == 0.0 {
                    return Ok(Equilibrium {
                        residual: r.amax(),
                        q,
                        iterations: it,
                        solver: self.name(),
                    });
                }
            }
            let jac = residual_jacobian(model, &q, loads);
            let dq = match jac.clone().lu().solve(&(-&r)) {
                Some(dq) if dq.iter().all(|v| v.is_finite()) => dq,
                _ => match crate::linalg::pinv_solve(&jac, &(-&r), 1e-12) {
                    Ok(sol) => sol.x,
                    Err(_) => {
                        return Err(Error::NoConvergence {
                            solver: self.name(),
                            iterations: it,
                            residual: r.amax(),
                        })
                    }
                },
            };
            let norm0 = r.norm();
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let mut trial = &q + &dq * alpha;
                clamp(model, &mut trial);
                let rt = residual(model, &trial, loads);
                if rt.norm() < (1.0 - 1e-4 * alpha) * norm0 || (polish > 0 && rt.norm() <= norm0) {
                    accepted = Some((trial, rt));
                    break;
                }
                alpha *= 0.5;
            }
            match accepted {
                Some((qn, rn)) => {
                    q = qn;
                    r = rn;
                }
                None if r.amax() < options.tolerance => {
                    return Ok(Equilibrium {
                        residual: r.amax(),
                        q,
                        iterations: it,
                        solver: self.name(),
                    })
                }
                None => {
                    return Err(Error::NoConvergence {
                        solver: self.name(),
                        iterations: it,
                        residual: r.amax(),
                    })
                }
            }
        }
        if r.amax() < options.tolerance {
            return Ok(Equilibrium {
                residual: r.amax(),
                q,
                iterations: options.max_iterations,
                solver: self.name(),
            });
        }
        Err(Error::NoConvergence {
            solver: self.name(),
            iterations: options.max_iterations,
            residual: r.amax(),
        })
    }
}

/// Damped dynamic settling in the overdamped limit: the chain relaxes along
/// `γ M q̇ = −r(q)`, integrated with linearly implicit (backward) Euler steps
/// whose length adapts to progress. Only descends the potential, so it ends
/// in a stable rest configuration (e.g. the hanging cable when K = 0).
#[derive(Debug, Clone, Copy)]
pub struct SettleSolver {
    /// Initial pseudo-time step, seconds (with γ = 1/s).
    pub initial_step: f64,
}

impl Default for SettleSolver {
    fn default() -> Self {
        Self { initial_step: 1e-3 }
    }
}

impl Named for SettleSolver {
    fn name(&self) -> &'static str {
        "settle"
    }
    fn description(&self) -> &'static str {
        "damped relaxation of the chain to rest (adaptive implicit steps)"
    }
}

impl EquilibriumSolver for SettleSolver {
    fn solve(
        &self,
        model: &CableModel,
        loads: &[ExternalLoad],
        q_init: &DVector<f64>,
        options: &EquilibriumOptions,
    ) -> Result<Equilibrium> {
        check_inputs(model, loads, q_init)?;
        let mut q = q_init.clone();
        clamp(model, &mut q);
        let mut r = residual(model, &q, loads);
        let merit = |q: &DVector<f64>, r: &DVector<f64>| potential(model, q, loads).unwrap_or(0.5 * r.norm_squared());
        let mut v = merit(&q, &r);
        let mut h = self.initial_step;
        // the relaxation converges linearly while far away: allow more steps
        let budget = options.max_iterations * 50;
        for it in 0..budget {
            if r.amax() < options.tolerance {
                return Ok(Equilibrium {
                    residual: r.amax(),
                    q,
                    iterations: it,
                    solver: self.name(),
                });
            }
            let m = mass_matrix_raw(model, q.as_slice());
            let jac = residual_jacobian(model, &q, loads);
            let jac = (&jac + jac.transpose()) * 0.5;
            let mut accepted = false;
            for _ in 0..60 {
                let lhs = &m / h + &jac;
                let step = lhs.cholesky().map(|c| c.solve(&(-&r)));
                if let Some(dq) = step {
                    let mut trial = &q + dq;
                    clamp(model, &mut trial);
                    let rt = residual(model, &trial, loads);
                    let vt = merit(&trial, &rt);
                    if vt <= v {
                        q = trial;
                        r = rt;
                        v = vt;
                        h = (h * 2.0).min(1e8);
                        accepted = true;
                        break;
                    }
                }
                h *= 0.25;
            }
            if !accepted {
                break;
            }
        }
        Err(Error::NoConvergence {
            solver: self.name(),
            iterations: budget,
            residual: r.amax(),
        })
    }
}

/// Stable rest configuration: the residual Jacobian (the stiffness of the
/// loaded chain) is positive definite.
pub(crate) fn is_stable(model: &CableModel, q: &DVector<f64>, loads: &[ExternalLoad]) -> bool {
    let jac = residual_jacobian(model, q, loads);
    let sym = (&jac + jac.transpose()) * 0.5;
    sym.cholesky().is_some()
}

/// Newton from the initial guess; if it fails or lands on an unstable
/// equilibrium, settle first and polish the result with Newton.
#[derive(Debug, Clone, Copy, Default)]
pub struct AutoSolver;

impl Named for AutoSolver {
    fn name(&self) -> &'static str {
        "auto"
    }
    fn description(&self) -> &'static str {
        "Newton, falling back to damped settling plus a Newton polish (default)"
    }
}

impl EquilibriumSolver for AutoSolver {
    fn solve(
        &self,
        model: &CableModel,
        loads: &[ExternalLoad],
        q_init: &DVector<f64>,
        options: &EquilibriumOptions,
    ) -> Result<Equilibrium> {
        match NewtonSolver.solve(model, loads, q_init, options) {
            Ok(eq) if is_stable(model, &eq.q, loads) => Ok(eq),
            Ok(_) | Err(Error::NoConvergence { .. }) => {
                let loose = EquilibriumOptions {
                    tolerance: options.tolerance.max(1e-6),
                    ..*options
                };
                let settled = SettleSolver::default().solve(model, loads, q_init, &loose);
                let start = match &settled {
                    Ok(eq) => eq.q.clone(),
                    Err(_) => return settled,
                };
                let mut eq = NewtonSolver.solve(model, loads, &start, options)?;
                eq.iterations += settled.map(|s| s.iterations).unwrap_or(0);
                Ok(eq)
            }
            Err(e) => Err(e),
        }
    }
}

pub fn equilibrium_solvers() -> Registry<dyn EquilibriumSolver> {
    let mut reg: Registry<dyn EquilibriumSolver> = Registry::new("equilibrium solver");
    reg.register(Arc::new(AutoSolver))
        .register(Arc::new(NewtonSolver))
        .register(Arc::new(SettleSolver::default()));
    reg
}

/// Static equilibrium with the default solver and tolerance.
pub fn static_equilibrium(model: &CableModel, loads: &[ExternalLoad], q_init: &DVector<f64>) -> Result<Equilibrium> {
    AutoSolver.solve(model, loads, q_init, &EquilibriumOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{default_paper_model, identification_subchain, AxisSpec, JointSpec, LinkSpec};
    use nalgebra::Vector3;

    fn rod(k: f64) -> CableModel {
        CableModel::new(
            vec![LinkSpec::rod(0.05, 0.05, 0.005); 2],
            vec![JointSpec::pitch(AxisSpec::free(-3.2, 3.2).with_stiffness(k))],
            Vector3::new(0.0, 0.0, -9.8),
        )
        .unwrap()
    }

    fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        assert!(f(a) * f(b) < 0.0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(a) * f(m) <= 0.0 {
                b = m;
            } else {
                a = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn single_rod_matches_bisection() {
        let mgc = 0.05 * 9.8 * 0.025;
        for k in [0.01, 0.1, 1.0] {
            let eq = static_equilibrium(&rod(k), &[], &DVector::zeros(1)).unwrap();
            let oracle = bisect(|q| k * q - mgc * q.cos(), 0.0, std::f64::consts::FRAC_PI_2);
            assert!((eq.q[0] - oracle).abs() < 1e-10, "k={k}");
            assert!(eq.residual < 1e-9);
        }
    }

    #[test]
    fn gravity_free_unloaded_chain_rests_straight() {
        let m = identification_subchain(&default_paper_model())
            .unwrap()
            .with_uniform_stiffness_damping(0.3, 0.0)
            .unwrap()
            .with_gravity(Vector3::zeros())
            .unwrap();
        let eq = static_equilibrium(&m, &[], &DVector::from_element(4, 0.2)).unwrap();
        assert!(eq.q.amax() < 1e-12);
    }

    #[test]
    fn rigid_limit() {
        let m = default_paper_model().pitch_only().with_uniform_stiffness_damping(1e6, 0.0).unwrap();
        let loads = vec![ExternalLoad::tip_weight(&m, 0.1)];
        let eq = static_equilibrium(&m, &loads, &DVector::zeros(m.dof())).unwrap();
        assert!(eq.q.amax() < 1e-5);
        assert!(eq.residual < 1e-9);
    }

    #[test]
    fn hanging_cable_without_stiffness_needs_settling() {
        let m = identification_subchain(&default_paper_model()).unwrap();
        for name in ["settle", "auto"] {
            let eq = equilibrium_solvers()
                .get(name)
                .unwrap()
                .solve(&m, &[], &DVector::zeros(4), &EquilibriumOptions::default())
                .unwrap();
            assert!(eq.residual < 1e-9, "{name}: {}", eq.residual);
            // hangs straight down: first joint at a quarter turn, rest straight
            assert!((eq.q[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-6, "{name}: {}", eq.q);
            assert!(eq.q.rows(1, 3).amax() < 1e-6);
        }
    }

    #[test]
    fn all_solvers_agree_on_a_stiff_loaded_chain() {
        let m = identification_subchain(&default_paper_model())
            .unwrap()
            .with_uniform_stiffness_damping(0.5, 0.0)
            .unwrap();
        let loads = vec![ExternalLoad::tip_weight(&m, 0.1)];
        let reg = equilibrium_solvers();
        let sols: Vec<_> = reg
            .names()
            .iter()
            .map(|n| reg.get(n).unwrap().solve(&m, &loads, &DVector::zeros(4), &EquilibriumOptions::default()).unwrap())
            .collect();
        for s in &sols[1..] {
            assert!((&s.q - &sols[0].q).amax() < 1e-8);
        }
        assert!(sols[0].q.iter().all(|q| *q > 0.0));
    }
}
