//! SVD-based pseudoinverse helpers shared by identification and servoing.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff for pseudoinverses.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Least-squares solution through the SVD pseudoinverse, discarding singular
/// values below `cutoff · σ_max`. Fails if the matrix has no retained
/// direction or loses rank.
#[derive(Debug, Clone)]
pub struct PinvSolution {
    pub x: DVector<f64>,
    pub rank: usize,
    /// σ_max / σ_min over the retained values.
    pub condition: f64,
    /// ‖A x − b‖₂.
    pub residual: f64,
}

pub fn pinv_solve(a: &DMatrix<f64>, b: &DVector<f64>, cutoff: f64) -> Result<PinvSolution> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "least-squares right-hand side",
            expected: a.nrows(),
            found: b.len(),
        });
    }
    if a.ncols() == 0 || a.nrows() == 0 {
        return Err(Error::RankDeficient("empty regressor".into()));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) || !smax.is_finite() {
        return Err(Error::RankDeficient("regressor is zero".into()));
    }
    let tol = cutoff * smax;
    let u = svd.u.as_ref().expect("u computed");
    let vt = svd.v_t.as_ref().expect("v_t computed");
    let mut x = DVector::zeros(a.ncols());
    let mut rank = 0;
    let mut smin = f64::INFINITY;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            rank += 1;
            smin = smin.min(s);
            let coef = u.column(i).dot(b) / s;
            x += vt.row(i).transpose() * coef;
        }
    }
    let residual = (a * &x - b).norm();
    Ok(PinvSolution {
        x,
        rank,
        condition: smax / smin,
        residual,
    })
}

/// Damped least-squares inverse `Jᵀ(JJᵀ + λ²I)⁻¹ v`, evaluated through the
/// SVD as `Σ σᵢ/(σᵢ² + λ²) vᵢ uᵢᵀ v`. With `λ = 0` a rank-deficient `J`
/// is an error.
pub fn damped_pinv_apply(j: &DMatrix<f64>, v: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if j.nrows() != v.len() {
        return Err(Error::DimensionMismatch {
            what: "task velocity",
            expected: j.nrows(),
            found: v.len(),
        });
    }
    let svd = j.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u computed");
    let vt = svd.v_t.as_ref().expect("v_t computed");
    let smax = svd.singular_values.max();
    let full_rank = j.nrows().min(j.ncols());
    let l2 = lambda * lambda;
    if lambda == 0.0 {
        let rank = svd
            .singular_values
            .iter()
            .filter(|s| **s > PINV_CUTOFF * smax && **s > 0.0)
            .count();
        if rank < full_rank {
            return Err(Error::SingularJacobian);
        }
    }
    let mut out = DVector::zeros(j.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let denom = s * s + l2;
        if denom > 0.0 && s > 0.0 {
            out += vt.row(i).transpose() * (s / denom * u.column(i).dot(v));
        }
    }
    Ok(out)
}

/// `max_i σᵢ/(σᵢ² + λ²)` over the singular values of `j`: the gain bound of
/// the damped inverse, `‖q̇‖ ≤ bound · ‖v‖`.
pub fn damped_gain_bound(j: &DMatrix<f64>, lambda: f64) -> f64 {
    let l2 = lambda * lambda;
    j.singular_values()
        .iter()
        .filter(|s| **s > 0.0)
        .map(|s| s / (s * s + l2))
        .fold(0.0, f64::max)
}
