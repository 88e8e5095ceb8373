//! Joint-wise least-squares estimates of stiffness and damping.
//!
//! Both estimates solve, per joint `i` and over every sample `s`,
//! `x_i · a_{s,i} = b_{s,i}` with `a = q` (stiffness) or `a = q̇`
//! (damping). Stacked over joints this is a block-diagonal regressor with
//! orthogonal columns, so its SVD is the column normalization and the
//! pseudoinverse solution is `x_i = aᵢᵀbᵢ / ‖aᵢ‖²`.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{load_term_raw, rne_raw};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{pinv_solve, PINV_CUTOFF};
use crate::model::{CableModel, ExternalLoad};

use super::StateSample;

/// Velocity bound for static samples, rad/s.
pub const STATIC_VELOCITY: f64 = 1e-3;
/// Some dynamic sample must move faster than this, rad/s.
pub const DYNAMIC_VELOCITY: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq)]
pub struct JointwiseEstimate {
    pub values: DVector<f64>,
    /// ‖A x − b‖₂ over all stacked equations.
    pub residual: f64,
    /// σ_max / σ_min of the regressor.
    pub condition: f64,
    pub samples: usize,
}

/// `τ_RNE + Jᵀf_ext` at a sample (passive joints: `τ = 0`).
fn known_torque(model: &CableModel, s: &StateSample, loads: &[ExternalLoad]) -> DVector<f64> {
    let st = &s.state;
    rne_raw(model, st.q.as_slice(), st.qd.as_slice(), st.qdd.as_slice(), &model.gravity())
        + load_term_raw(model, st.q.as_slice(), loads)
}

fn check_samples(model: &CableModel, samples: &[StateSample], loads: &[ExternalLoad]) -> Result<()> {
    for s in samples {
        s.state.check_dims(model)?;
    }
    for l in loads {
        l.validate(model)?;
    }
    Ok(())
}

/// Solves stacked per-joint rows `x ∘ aₛ = bₛ` in least squares.
pub(crate) fn jointwise(
    what: &'static str,
    regressor: &[DVector<f64>],
    rhs: &[DVector<f64>],
    n: usize,
) -> Result<JointwiseEstimate> {
    let mut num = DVector::<f64>::zeros(n);
    let mut den = DVector::<f64>::zeros(n);
    for (a, b) in regressor.iter().zip(rhs) {
        num += a.component_mul(b);
        den += a.component_mul(a);
    }
    let sigma = den.map(f64::sqrt);
    let smax = sigma.max();
    let cutoff = PINV_CUTOFF * smax;
    if !(smax > 0.0) {
        return Err(Error::RankDeficient(format!("{what} regressor is zero")));
    }
    if let Some((j, _)) = sigma.iter().enumerate().find(|(_, s)| **s <= cutoff) {
        return Err(Error::RankDeficient(format!(
            "{what} regressor has no excitation on joint {j}"
        )));
    }
    let values = num.component_div(&den);
    if let Some((j, v)) = values.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativeEstimate { what, joint: j, value: *v });
    }
    let residual = regressor
        .iter()
        .zip(rhs)
        .map(|(a, b)| (a.component_mul(&values) - b).norm_squared())
        .sum::<f64>()
        .sqrt();
    Ok(JointwiseEstimate {
        values,
        residual,
        condition: smax / sigma.min(),
        samples: regressor.len(),
    })
}

/// Stiffness from (near) stationary samples: `K q = −(τ_RNE + Jᵀf_ext)`.
pub fn identify_stiffness(
    model: &CableModel,
    static_samples: &[StateSample],
    loads: &[ExternalLoad],
) -> Result<JointwiseEstimate> {
    identify_stiffness_with_damping(model, static_samples, loads, None)
}

/// As [`identify_stiffness`], additionally moving a known `D q̇` to the
/// right-hand side (the full static equation, used to refine K once a
/// damping estimate exists).
pub fn identify_stiffness_with_damping(
    model: &CableModel,
    static_samples: &[StateSample],
    loads: &[ExternalLoad],
    damping: Option<&DVector<f64>>,
) -> Result<JointwiseEstimate> {
    check_samples(model, static_samples, loads)?;
    if static_samples.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, found: 0 });
    }
    if let Some(d) = damping {
        check_dim("damping", model.dof(), d.len())?;
    }
    if let Some(s) = static_samples.iter().find(|s| s.state.qd.amax() >= STATIC_VELOCITY) {
        return Err(Error::VelocityPrecondition(format!(
            "static sample at t = {} s moves at {:.3e} rad/s (limit {STATIC_VELOCITY:e})",
            s.t,
            s.state.qd.amax()
        )));
    }
    let mut a = Vec::with_capacity(static_samples.len());
    let mut b = Vec::with_capacity(static_samples.len());
    for s in static_samples {
        let mut rhs = -known_torque(model, s, loads);
        if let Some(d) = damping {
            rhs -= d.component_mul(&s.state.qd);
        }
        a.push(s.state.q.clone());
        b.push(rhs);
    }
    jointwise("stiffness", &a, &b, model.dof())
}

/// Damping from moving samples: `D q̇ = −(τ_RNE + Jᵀf_ext + K q)`.
pub fn identify_damping(
    model: &CableModel,
    stiffness: &DVector<f64>,
    dynamic_samples: &[StateSample],
    loads: &[ExternalLoad],
) -> Result<JointwiseEstimate> {
    check_samples(model, dynamic_samples, loads)?;
    check_dim("stiffness", model.dof(), stiffness.len())?;
    if !dynamic_samples.iter().any(|s| s.state.qd.amax() > DYNAMIC_VELOCITY) {
        return Err(Error::VelocityPrecondition(format!(
            "no sample moves faster than {DYNAMIC_VELOCITY:e} rad/s; damping is unobservable"
        )));
    }
    let (a, b) = damping_rows(model, stiffness, dynamic_samples, loads);
    jointwise("damping", &a, &b, model.dof())
}

/// Regressor `q̇` and right-hand side `−(τ_RNE + Jᵀf_ext + K q)` of each
/// sample.
pub(crate) fn damping_rows(
    model: &CableModel,
    stiffness: &DVector<f64>,
    samples: &[StateSample],
    loads: &[ExternalLoad],
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    samples
        .iter()
        .map(|s| {
            let rhs = -(known_torque(model, s, loads) + stiffness.component_mul(&s.state.q));
            (s.state.qd.clone(), rhs)
        })
        .unzip()
}

/// Unstructured stiffness matrix `K = R Q⁺` from the stacked static
/// samples (`Q = [q₁ … q_S]`, `R` the matching right-hand sides). Needs at
/// least `n` linearly independent configurations.
pub fn identify_stiffness_matrix(
    model: &CableModel,
    static_samples: &[StateSample],
    loads: &[ExternalLoad],
) -> Result<DMatrix<f64>> {
    check_samples(model, static_samples, loads)?;
    let n = model.dof();
    let s = static_samples.len();
    let mut qt = DMatrix::zeros(s, n);
    let mut rt = DMatrix::zeros(s, n);
    for (k, sample) in static_samples.iter().enumerate() {
        qt.set_row(k, &sample.state.q.transpose());
        rt.set_row(k, &(-known_torque(model, sample, loads)).transpose());
    }
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        let sol = pinv_solve(&qt, &rt.column(i).into_owned(), PINV_CUTOFF)?;
        if sol.rank < n {
            return Err(Error::RankDeficient(format!(
                "{} independent configurations for {n} joints",
                sol.rank
            )));
        }
        k.set_row(i, &sol.x.transpose());
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{default_paper_model, identification_subchain, ChainState};
    use crate::sim::static_equilibrium;
    use nalgebra::Vector3;

    fn sub(k: f64, d: f64) -> CableModel {
        identification_subchain(&default_paper_model())
            .unwrap()
            .with_uniform_stiffness_damping(k, d)
            .unwrap()
    }

    fn at_rest(t: f64, q: DVector<f64>) -> StateSample {
        StateSample::position(t, q)
    }

    #[test]
    fn stiffness_from_exact_equilibrium() {
        let truth = sub(0.5, 0.0);
        let loads = vec![ExternalLoad::tip_weight(&truth, 0.1)];
        let eq = static_equilibrium(&truth, &loads, &DVector::zeros(4)).unwrap();
        let bare = sub(0.0, 0.0);
        let est = identify_stiffness(&bare, &[at_rest(0.0, eq.q)], &loads).unwrap();
        assert!((&est.values - DVector::from_element(4, 0.5)).amax() / 0.5 < 1e-6);
    }

    #[test]
    fn two_weights_give_the_same_stiffness() {
        let truth = sub(0.8, 0.0);
        let bare = sub(0.0, 0.0);
        let mut ks = Vec::new();
        for mass in [0.05, 0.1] {
            let loads = vec![ExternalLoad::tip_weight(&truth, mass)];
            let eq = static_equilibrium(&truth, &loads, &DVector::zeros(4)).unwrap();
            ks.push(identify_stiffness(&bare, &[at_rest(0.0, eq.q)], &loads).unwrap().values);
        }
        assert!((&ks[0] - &ks[1]).amax() / 0.8 < 1e-6);
    }

    #[test]
    fn zero_configuration_is_rank_deficient() {
        let bare = sub(0.0, 0.0).with_gravity(Vector3::zeros()).unwrap();
        let err = identify_stiffness(&bare, &[at_rest(0.0, DVector::zeros(4))], &[]).unwrap_err();
        assert!(err.to_string().contains("rank-deficient regressor"), "{err}");
    }

    #[test]
    fn moving_static_samples_are_rejected() {
        let bare = sub(0.0, 0.0);
        let mut s = at_rest(0.0, DVector::from_element(4, 0.1));
        s.state.qd[2] = 0.01;
        assert!(matches!(identify_stiffness(&bare, &[s], &[]), Err(Error::VelocityPrecondition(_))));
    }

    #[test]
    fn negative_stiffness_is_an_error() {
        // upward bend under gravity would need a negative spring
        let bare = sub(0.0, 0.0);
        let s = at_rest(0.0, DVector::from_element(4, -0.1));
        assert!(matches!(
            identify_stiffness(&bare, &[s], &[]),
            Err(Error::NegativeEstimate { what: "stiffness", .. })
        ));
    }

    fn consistent_sample(truth: &CableModel, k: usize, stiffness: &DMatrix<f64>) -> StateSample {
        let q = DVector::from_fn(4, |i, _| 0.1 * (i as f64 + 1.0) + 0.01 * k as f64 + 0.05 * ((k * (i + 2)) as f64).sin());
        let qd = DVector::from_fn(4, |i, _| ((k + i) as f64).sin() * 0.5);
        // q̈ consistent with M q̈ + C q̇ + G + K q + D q̇ = 0
        let bias = crate::dynamics::bias_forces(truth, &q, &qd).unwrap();
        let m = crate::dynamics::mass_matrix(truth, &q).unwrap();
        let rhs = -(bias + stiffness * &q + truth.damping().component_mul(&qd));
        let qdd = m.cholesky().unwrap().solve(&rhs);
        StateSample {
            t: k as f64,
            state: ChainState::new(q, qd, qdd),
            quality: DVector::zeros(4),
            low_quality: false,
        }
    }

    #[test]
    fn damping_from_exact_states() {
        let truth = sub(0.5, 0.02);
        let bare = sub(0.0, 0.0);
        let kmat = DMatrix::from_diagonal(&truth.stiffness());
        let samples: Vec<StateSample> = (0..20).map(|k| consistent_sample(&truth, k, &kmat)).collect();
        let est = identify_damping(&bare, &truth.stiffness(), &samples, &[]).unwrap();
        assert!((&est.values - truth.damping()).amax() < 1e-10);
        assert!(est.residual < 1e-10);
        assert_eq!(est.samples, 20);
    }

    #[test]
    fn static_only_input_cannot_give_damping() {
        let bare = sub(0.0, 0.0);
        let s = vec![at_rest(0.0, DVector::from_element(4, 0.1)); 3];
        assert!(matches!(
            identify_damping(&bare, &DVector::from_element(4, 0.5), &s, &[]),
            Err(Error::VelocityPrecondition(_))
        ));
    }

    #[test]
    fn full_matrix_recovers_coupled_stiffness() {
        let truth = sub(0.0, 0.0);
        let kmat = DMatrix::from_row_slice(4, 4, &[
            0.9, 0.1, 0.0, 0.0, //
            0.1, 0.7, 0.1, 0.0, //
            0.0, 0.1, 0.6, 0.05, //
            0.0, 0.0, 0.05, 0.4,
        ]);
        let mut samples: Vec<StateSample> = (0..12).map(|k| consistent_sample(&truth, k, &kmat)).collect();
        for s in &mut samples {
            // the matrix form ignores velocities; drop them consistently
            s.state.qd.fill(0.0);
            let m = crate::dynamics::mass_matrix(&truth, &s.state.q).unwrap();
            let g = crate::dynamics::gravity_torque(&truth, &s.state.q).unwrap();
            s.state.qdd = m.cholesky().unwrap().solve(&(-(g + &kmat * &s.state.q)));
        }
        let k = identify_stiffness_matrix(&truth, &samples, &[]).unwrap();
        assert!((&k - &kmat).amax() < 1e-9, "{k}");
        assert!(matches!(
            identify_stiffness_matrix(&truth, &samples[..2], &[]),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn doubling_regressor_and_rhs_leaves_the_estimate() {
        let a: Vec<DVector<f64>> = (0..10).map(|k| DVector::from_fn(3, |i, _| ((k * 3 + i) as f64).sin())).collect();
        let b: Vec<DVector<f64>> = a.iter().map(|x| x.map(|v| 0.3 * v + 0.01 * v * v)).collect();
        let e1 = jointwise("damping", &a, &b, 3).unwrap();
        let a2: Vec<_> = a.iter().map(|x| x * 2.0).collect();
        let b2: Vec<_> = b.iter().map(|x| x * 2.0).collect();
        let e2 = jointwise("damping", &a2, &b2, 3).unwrap();
        assert!((&e1.values - &e2.values).amax() < 1e-14);
    }

    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn pinv_residual_is_no_worse_than_normal_equations(
            rows in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 6), 4..30),
            x in proptest::collection::vec(0.01f64..2.0, 3),
        ) {
            let a: Vec<DVector<f64>> = rows.iter().map(|r| DVector::from_column_slice(&r[..3])).collect();
            let b: Vec<DVector<f64>> = rows
                .iter()
                .map(|r| DVector::from_fn(3, |i, _| x[i] * r[i] + 0.05 * r[3 + i]))
                .collect();
            let Ok(est) = jointwise("damping", &a, &b, 3) else { return Ok(()) };
            // oracle: explicit block-diagonal normal equations
            let s = a.len();
            let mut big = DMatrix::zeros(3 * s, 3);
            let mut rhs = DVector::zeros(3 * s);
            for k in 0..s {
                for i in 0..3 {
                    big[(3 * k + i, i)] = a[k][i];
                    rhs[3 * k + i] = b[k][i];
                }
            }
            let ata = big.transpose() * &big;
            let xne = ata.lu().solve(&(big.transpose() * &rhs)).unwrap();
            let res_ne = (&big * &xne - &rhs).norm();
            prop_assert!(est.residual <= res_ne + 1e-10);
            for i in 0..3 {
                let mut p = est.values.clone();
                p[i] += 1e-3;
                prop_assert!((&big * &p - &rhs).norm() >= est.residual - 1e-12);
            }
        }
    }
}
