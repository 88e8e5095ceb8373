//! Geometric cable model: two quadratic projections of a 3D point cloud
//! over a common coordinate axis.

use nalgebra::{DMatrix, DVector, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum cloud extent along the parameter axis, meters.
pub const MIN_EXTENT: f64 = 0.01;
pub const DEFAULT_SAMPLE_COUNT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoordAxis {
    X,
    Y,
    Z,
}

impl CoordAxis {
    /// Tie-break order when extents are equal.
    pub const PRIORITY: [CoordAxis; 3] = [CoordAxis::Y, CoordAxis::X, CoordAxis::Z];

    pub fn index(self) -> usize {
        match self {
            CoordAxis::X => 0,
            CoordAxis::Y => 1,
            CoordAxis::Z => 2,
        }
    }

    pub fn label(self) -> &'static str {
        ["x", "y", "z"][self.index()]
    }

    /// The two remaining coordinates, in x, y, z order.
    pub fn transverse(self) -> [usize; 2] {
        match self {
            CoordAxis::X => [1, 2],
            CoordAxis::Y => [0, 2],
            CoordAxis::Z => [0, 1],
        }
    }
}

/// Which end of the parameter range is the free tip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TipEnd {
    Min,
    #[default]
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadFit {
    /// `(c₂, c₁, c₀)` of `v = c₂u² + c₁u + c₀`.
    pub coeffs: [f64; 3],
    /// ‖v − fit‖₂.
    pub residual: f64,
}

pub fn eval_quadratic(c: &[f64; 3], u: f64) -> f64 {
    (c[0] * u + c[1]) * u + c[2]
}

fn d_quadratic(c: &[f64; 3], u: f64) -> f64 {
    2.0 * c[0] * u + c[1]
}

/// Least-squares quadratic through `(u, v)` pairs by QR of the Vandermonde
/// matrix.
pub fn fit_quadratic_projection(points: &[(f64, f64)]) -> Result<QuadFit> {
    if points.len() < 3 {
        return Err(Error::CurveFit(format!("need at least 3 points, got {}", points.len())));
    }
    if points.iter().any(|(u, v)| !u.is_finite() || !v.is_finite()) {
        return Err(Error::CurveFit("non-finite coordinate".into()));
    }
    let mut us: Vec<f64> = points.iter().map(|p| p.0).collect();
    us.sort_by(f64::total_cmp);
    us.dedup();
    if us.len() < 3 {
        return Err(Error::CurveFit(format!(
            "rank-deficient fit: {} distinct parameter values, need 3",
            us.len()
        )));
    }
    let a = DMatrix::from_fn(points.len(), 3, |i, j| points[i].0.powi(2 - j as i32));
    let b = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let qr = a.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().amax();
    if r.diagonal().iter().any(|d| d.abs() <= 1e-12 * scale) {
        return Err(Error::CurveFit("rank-deficient fit: parameter values too close".into()));
    }
    let qtb = qr.q().transpose() * &b;
    let x = r
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::CurveFit("rank-deficient fit".into()))?;
    let residual = (&a * &x - &b).norm();
    Ok(QuadFit { coeffs: [x[0], x[1], x[2]], residual })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyCurve3D {
    pub axis: CoordAxis,
    pub coeffs_a: [f64; 3],
    pub coeffs_b: [f64; 3],
    pub param_range: [f64; 2],
    pub rms_residual: f64,
    #[serde(default)]
    pub tip_end: TipEnd,
}

/// Parameter axis of largest extent, ties broken by [`CoordAxis::PRIORITY`].
fn choose_axis(cloud: &[Point3<f64>]) -> (CoordAxis, f64) {
    let extent = |i: usize| {
        let (lo, hi) = cloud
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[i]), hi.max(p[i])));
        hi - lo
    };
    let ext = [extent(0), extent(1), extent(2)];
    let best = ext.iter().copied().fold(0.0, f64::max);
    let axis = CoordAxis::PRIORITY
        .into_iter()
        .find(|a| ext[a.index()] >= best * (1.0 - 1e-12))
        .unwrap_or(CoordAxis::Y);
    (axis, ext[axis.index()])
}

pub fn fit_curve3d(cloud: &[Point3<f64>]) -> Result<PolyCurve3D> {
    if cloud.len() < 3 {
        return Err(Error::CurveFit(format!("need at least 3 points, got {}", cloud.len())));
    }
    let (axis, extent) = choose_axis(cloud);
    if extent <= 0.0 {
        return Err(Error::CurveFit("degenerate cloud: all points coincide".into()));
    }
    if extent <= MIN_EXTENT {
        return Err(Error::CurveFit(format!(
            "cloud extent {extent:.4} m along {} is below {MIN_EXTENT} m",
            axis.label()
        )));
    }
    let p = axis.index();
    let [ia, ib] = axis.transverse();
    let fa = fit_quadratic_projection(&cloud.iter().map(|q| (q[p], q[ia])).collect::<Vec<_>>())?;
    let fb = fit_quadratic_projection(&cloud.iter().map(|q| (q[p], q[ib])).collect::<Vec<_>>())?;
    let (lo, hi) = cloud
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| (lo.min(q[p]), hi.max(q[p])));
    let rms = ((fa.residual.powi(2) + fb.residual.powi(2)) / cloud.len() as f64).sqrt();
    Ok(PolyCurve3D {
        axis,
        coeffs_a: fa.coeffs,
        coeffs_b: fb.coeffs,
        param_range: [lo, hi],
        rms_residual: rms,
        tip_end: TipEnd::default(),
    })
}

/// Fits, drops the `trim` fraction of points farthest from the curve
/// (transverse distance) and refits.
pub fn fit_curve3d_trimmed(cloud: &[Point3<f64>], trim: f64) -> Result<PolyCurve3D> {
    if !(0.0..1.0).contains(&trim) {
        return Err(Error::InvalidArgument(format!("trim fraction must be in [0, 1), got {trim}")));
    }
    let first = fit_curve3d(cloud)?;
    let mut scored: Vec<(f64, Point3<f64>)> = cloud.iter().map(|q| (first.transverse_distance(q), *q)).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let keep = cloud.len() - (trim * cloud.len() as f64).floor() as usize;
    let kept: Vec<Point3<f64>> = scored[..keep].iter().map(|s| s.1).collect();
    let mut curve = fit_curve3d(&kept)?;
    curve.tip_end = first.tip_end;
    Ok(curve)
}

impl PolyCurve3D {
    pub fn with_tip_end(mut self, tip_end: TipEnd) -> Self {
        self.tip_end = tip_end;
        self
    }

    pub fn point_at(&self, u: f64) -> Point3<f64> {
        let mut p = Point3::origin();
        let [ia, ib] = self.axis.transverse();
        p[self.axis.index()] = u;
        p[ia] = eval_quadratic(&self.coeffs_a, u);
        p[ib] = eval_quadratic(&self.coeffs_b, u);
        p
    }

    /// dp/du.
    pub fn derivative_at(&self, u: f64) -> Vector3<f64> {
        let mut d = Vector3::zeros();
        let [ia, ib] = self.axis.transverse();
        d[self.axis.index()] = 1.0;
        d[ia] = d_quadratic(&self.coeffs_a, u);
        d[ib] = d_quadratic(&self.coeffs_b, u);
        d
    }

    fn transverse_distance(&self, q: &Point3<f64>) -> f64 {
        (self.point_at(q[self.axis.index()]) - q).norm()
    }

    /// Arc length between two parameter values (composite 8-point
    /// Gauss-Legendre; the integrand is smooth).
    pub fn arc_length_between(&self, u0: f64, u1: f64) -> f64 {
        const PANELS: usize = 16;
        let (lo, hi, sign) = if u1 >= u0 { (u0, u1, 1.0) } else { (u1, u0, -1.0) };
        let h = (hi - lo) / PANELS as f64;
        let mut total = 0.0;
        for k in 0..PANELS {
            let mid = lo + (k as f64 + 0.5) * h;
            for (x, w) in GAUSS8 {
                total += w * self.derivative_at(mid + 0.5 * h * x).norm();
            }
        }
        sign * 0.5 * h * total
    }

    pub fn arc_length(&self) -> f64 {
        self.arc_length_between(self.param_range[0], self.param_range[1])
    }

    fn tip_param(&self) -> f64 {
        match self.tip_end {
            TipEnd::Min => self.param_range[0],
            TipEnd::Max => self.param_range[1],
        }
    }
}

/// Nodes and weights of 8-point Gauss-Legendre on [−1, 1].
const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
];

/// `count` points at uniform parameter spacing, ordered from the low end.
pub fn sample_curve(curve: &PolyCurve3D, count: usize) -> Result<Vec<Point3<f64>>> {
    if count < 2 {
        return Err(Error::InvalidArgument(format!("sample count must be at least 2, got {count}")));
    }
    let [lo, hi] = curve.param_range;
    Ok((0..count)
        .map(|k| {
            let u = if k == count - 1 { hi } else { lo + (hi - lo) * k as f64 / (count - 1) as f64 };
            curve.point_at(u)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspPoint {
    pub point: Point3<f64>,
    /// Unit tangent pointing from the tip into the cable.
    pub tangent: Vector3<f64>,
    pub param: f64,
}

/// Point at arc length `s` from the tip end.
pub fn grasp_point(curve: &PolyCurve3D, arclength_from_tip: f64) -> Result<GraspPoint> {
    let total = curve.arc_length();
    let s = arclength_from_tip;
    if !(s >= 0.0 && s <= total * (1.0 + 1e-12)) {
        return Err(Error::InvalidArgument(format!(
            "arc length {s} m outside the curve (length {total:.6} m)"
        )));
    }
    let tip = curve.tip_param();
    let dir = match curve.tip_end {
        TipEnd::Max => -1.0,
        TipEnd::Min => 1.0,
    };
    // u = tip + dir·τ; arc length h(τ) is increasing with h' = |dp/du| ≥ 1.
    // Newton on τ, safeguarded by the bracket [lo, hi].
    let span = curve.param_range[1] - curve.param_range[0];
    let h = |tau: f64| dir * curve.arc_length_between(tip, tip + dir * tau);
    let (mut lo, mut hi) = (0.0, span);
    let mut tau = s.min(span);
    for _ in 0..100 {
        let r = h(tau) - s;
        if r > 0.0 {
            hi = tau;
        } else {
            lo = tau;
        }
        if r.abs() <= 1e-14 {
            break;
        }
        let mut next = tau - r / curve.derivative_at(tip + dir * tau).norm();
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - tau).abs() <= 1e-16 * span.max(1.0) {
            break;
        }
        tau = next;
    }
    let u = tip + dir * tau;
    let t = curve.derivative_at(u).normalize() * dir;
    Ok(GraspPoint { point: curve.point_at(u), tangent: t, param: u })
}
