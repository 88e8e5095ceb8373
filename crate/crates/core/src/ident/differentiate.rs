//! Joint velocities and accelerations from sampled positions.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::ChainState;

pub const DEFAULT_WINDOW: usize = 5;

/// One differentiated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSample {
    pub t: f64,
    pub state: ChainState,
    /// Per joint |raw − smoothed| position, radians.
    pub quality: DVector<f64>,
    /// Set where the smoothing window was truncated or the derivatives are
    /// one-sided (the ends of the record).
    pub low_quality: bool,
}

impl StateSample {
    /// A position-only sample (velocity and acceleration zero).
    pub fn position(t: f64, q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            t,
            state: ChainState::at_rest(q),
            quality: DVector::zeros(n),
            low_quality: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffOptions {
    /// Odd moving-average length in samples.
    pub window: usize,
    /// Number of times the moving average is applied (1 = box, 2 =
    /// triangle, 3 = quadratic B-spline kernel). Repeated passes make the
    /// differentiated kernel smooth, which matters for noisy data.
    pub passes: usize,
    /// Resampling step; `None` uses the median input spacing.
    pub dt: Option<f64>,
}

impl Default for DiffOptions {
    fn default() -> Self {
        Self { window: DEFAULT_WINDOW, passes: 1, dt: None }
    }
}

/// Resamples to a uniform grid, smooths with a centered moving average of
/// `window` samples (shrinking symmetrically at the ends) and takes central
/// differences. `dt_uniform = None` uses the median input spacing.
pub fn differentiate_log(samples: &[StateSample], window: usize, dt_uniform: Option<f64>) -> Result<Vec<StateSample>> {
    differentiate_log_with(samples, &DiffOptions { window, passes: 1, dt: dt_uniform })
}

pub fn differentiate_log_with(samples: &[StateSample], opts: &DiffOptions) -> Result<Vec<StateSample>> {
    const MIN_SAMPLES: usize = 5;
    let (window, dt_uniform) = (opts.window, opts.dt);
    if opts.passes == 0 {
        return Err(Error::InvalidArgument("at least one smoothing pass is required".into()));
    }
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_SAMPLES,
            found: samples.len(),
        });
    }
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidArgument(format!("smoothing window must be odd, got {window}")));
    }
    let n = samples[0].state.q.len();
    for (i, s) in samples.iter().enumerate() {
        if s.state.q.len() != n {
            return Err(Error::DimensionMismatch {
                what: "sample positions",
                expected: n,
                found: s.state.q.len(),
            });
        }
        if i > 0 && !(s.t > samples[i - 1].t) {
            return Err(Error::NonMonotoneTime { index: i });
        }
    }
    let dt = match dt_uniform {
        Some(dt) if dt > 0.0 && dt.is_finite() => dt,
        Some(dt) => return Err(Error::InvalidTimeStep(dt)),
        None => median_spacing(samples),
    };

    let (t0, t_end) = (samples[0].t, samples[samples.len() - 1].t);
    let count = ((t_end - t0) / dt + 1e-9).floor() as usize + 1;
    if count < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_SAMPLES,
            found: count,
        });
    }
    // linear interpolation onto t0 + k dt
    let mut raw = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let t = t0 + k as f64 * dt;
        while seg + 2 < samples.len() && samples[seg + 1].t <= t {
            seg += 1;
        }
        let (a, b) = (&samples[seg], &samples[seg + 1]);
        let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        raw.push(&a.state.q * (1.0 - w) + &b.state.q * w);
    }

    let half = window / 2;
    let mut smooth = raw.clone();
    for _ in 0..opts.passes {
        smooth = moving_average(&smooth, half, n);
    }
    let reach = half * opts.passes;

    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let (qd, qdd) = if k == 0 {
            (
                (&smooth[1] * 4.0 - &smooth[0] * 3.0 - &smooth[2]) / (2.0 * dt),
                (&smooth[0] - &smooth[1] * 2.0 + &smooth[2]) / (dt * dt),
            )
        } else if k == count - 1 {
            (
                (&smooth[k] * 3.0 - &smooth[k - 1] * 4.0 + &smooth[k - 2]) / (2.0 * dt),
                (&smooth[k] - &smooth[k - 1] * 2.0 + &smooth[k - 2]) / (dt * dt),
            )
        } else {
            (
                (&smooth[k + 1] - &smooth[k - 1]) / (2.0 * dt),
                (&smooth[k + 1] - &smooth[k] * 2.0 + &smooth[k - 1]) / (dt * dt),
            )
        };
        // a derivative stencil touching a truncated window is also degraded
        let low_quality = k <= reach || k + reach + 1 >= count;
        out.push(StateSample {
            t: t0 + k as f64 * dt,
            quality: (&raw[k] - &smooth[k]).abs(),
            state: ChainState::new(smooth[k].clone(), qd, qdd),
            low_quality,
        });
    }
    Ok(out)
}

/// Centered running mean. Summed directly per output: prefix sums would
/// lose digits over long records.
pub(crate) fn moving_average(x: &[DVector<f64>], half: usize, n: usize) -> Vec<DVector<f64>> {
    let count = x.len();
    (0..count)
        .map(|k| {
            let h = half.min(k).min(count - 1 - k);
            let mut acc = DVector::zeros(n);
            for v in &x[k - h..=k + h] {
                acc += v;
            }
            acc / (2 * h + 1) as f64
        })
        .collect()
}

fn median_spacing(samples: &[StateSample]) -> f64 {
    let mut gaps: Vec<f64> = samples.windows(2).map(|w| w[1].t - w[0].t).collect();
    gaps.sort_by(f64::total_cmp);
    gaps[gaps.len() / 2]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(f: impl Fn(f64) -> f64, dt: f64, count: usize) -> Vec<StateSample> {
        (0..count)
            .map(|k| {
                let t = k as f64 * dt;
                StateSample::position(t, DVector::from_element(1, f(t)))
            })
            .collect()
    }

    #[test]
    fn constant_and_ramp() {
        let c = differentiate_log(&series(|_| 0.3, 1e-3, 50), 5, None).unwrap();
        assert!(c.iter().all(|s| s.state.qd[0].abs() < 1e-12 && s.state.qdd[0].abs() < 1e-9));
        let r = differentiate_log(&series(|t| 0.1 * t, 1e-3, 50), 5, None).unwrap();
        for s in r.iter().filter(|s| !s.low_quality) {
            assert!((s.state.qd[0] - 0.1).abs() < 1e-12);
            assert!(s.state.qdd[0].abs() < 1e-8);
        }
        assert!(r[0].low_quality && r[49].low_quality && !r[25].low_quality);
    }

    #[test]
    fn sine_matches_analytic_derivatives() {
        let (a, w) = (0.2, 2.0);
        let out = differentiate_log(&series(|t| a * (w * t).sin(), 1e-3, 3001), 5, Some(1e-3)).unwrap();
        let mut worst: f64 = 0.0;
        for s in out.iter().filter(|s| !s.low_quality) {
            let t = s.t;
            worst = worst.max((s.state.qd[0] - a * w * (w * t).cos()).abs() / (a * w));
            worst = worst.max((s.state.qdd[0] + a * w * w * (w * t).sin()).abs() / (a * w * w));
        }
        assert!(worst < 0.01, "{worst}");
    }

    #[test]
    fn resampling_of_jittered_stamps() {
        let mut s = series(|t| 0.5 * t, 1e-3, 200);
        for (k, x) in s.iter_mut().enumerate() {
            x.t += if k % 2 == 0 { 1e-4 } else { -1e-4 };
            x.state.q[0] = 0.5 * x.t;
        }
        let out = differentiate_log(&s, 5, Some(1e-3)).unwrap();
        assert!(out.iter().filter(|s| !s.low_quality).all(|s| (s.state.qd[0] - 0.5).abs() < 1e-9));
    }

    #[test]
    fn input_errors() {
        assert!(matches!(
            differentiate_log(&series(|t| t, 1e-3, 4), 5, None),
            Err(Error::TooFewSamples { .. })
        ));
        let mut s = series(|t| t, 1e-3, 10);
        s[5].t = s[4].t;
        assert!(matches!(differentiate_log(&s, 5, None), Err(Error::NonMonotoneTime { index: 5 })));
        assert!(differentiate_log(&series(|t| t, 1e-3, 10), 4, None).is_err());
    }

    #[test]
    fn repeated_passes_keep_polynomials_and_widen_the_flagged_ends() {
        let opts = DiffOptions { window: 7, passes: 3, dt: None };
        let out = differentiate_log_with(&series(|t| 0.3 * t * t, 1e-2, 200), &opts).unwrap();
        for s in out.iter().filter(|s| !s.low_quality) {
            assert!((s.state.qd[0] - 0.6 * s.t).abs() < 1e-9);
            // each box pass adds a constant h(h+1)/3·dt² offset times 0.3
            assert!((s.state.qdd[0] - 0.6).abs() < 1e-6);
        }
        assert!(out[9].low_quality && !out[10].low_quality);
    }
}
