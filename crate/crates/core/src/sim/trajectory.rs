use std::io::{Read, Write};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::io::{check_header, fmt9, parse_f64};
use crate::model::{CableModel, ChainState, ExternalLoad};

/// Piecewise-constant loads: each entry applies from its start time until
/// the next entry starts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadSchedule {
    entries: Vec<(f64, Vec<ExternalLoad>)>,
}

impl LoadSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn constant(loads: Vec<ExternalLoad>) -> Self {
        Self {
            entries: vec![(0.0, loads)],
        }
    }

    /// Adds loads switching on at `t` (entries are kept sorted by time).
    pub fn then(mut self, t: f64, loads: Vec<ExternalLoad>) -> Self {
        let at = self.entries.partition_point(|(s, _)| *s <= t);
        self.entries.insert(at, (t, loads));
        self
    }

    pub fn entries(&self) -> &[(f64, Vec<ExternalLoad>)] {
        &self.entries
    }

    pub fn validate(&self, model: &CableModel) -> Result<()> {
        for (t, loads) in &self.entries {
            if !t.is_finite() {
                return Err(Error::InvalidArgument("schedule times must be finite".into()));
            }
            for load in loads {
                load.validate(model)?;
            }
        }
        Ok(())
    }

    /// Entry in force at time `t` (tolerant to accumulated rounding of `t`).
    pub fn active_index(&self, t: f64) -> Option<usize> {
        let eps = 1e-9 * t.abs().max(1.0);
        self.entries
            .iter()
            .rposition(|(start, _)| *start <= t + eps)
    }

    pub fn loads_at_index(&self, index: Option<usize>) -> &[ExternalLoad] {
        index.map(|i| self.entries[i].1.as_slice()).unwrap_or(&[])
    }

    pub fn loads_at(&self, t: f64) -> &[ExternalLoad] {
        self.loads_at_index(self.active_index(t))
    }
}

/// A schedule entry taking effect at `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadEvent {
    pub t: f64,
    pub entry: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub samples: Vec<(f64, ChainState)>,
    pub events: Vec<LoadEvent>,
}

impl Trajectory {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            samples: Vec::new(),
            events: Vec::new(),
        }
    }

    pub(crate) fn push_sample(&mut self, t: f64, state: ChainState) {
        self.samples.push((t, state));
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&(f64, ChainState)> {
        self.samples.last()
    }

    /// Checks strictly increasing, uniformly spaced times and consistent
    /// state dimensions.
    pub fn validate(&self) -> Result<()> {
        let Some((_, first)) = self.samples.first() else {
            return Ok(());
        };
        let n = first.dim();
        for (i, (t, s)) in self.samples.iter().enumerate() {
            if s.q.len() != n || s.qd.len() != n || s.qdd.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "trajectory sample",
                    expected: n,
                    found: s.q.len(),
                });
            }
            if i > 0 {
                let gap = t - self.samples[i - 1].0;
                if !(gap > 0.0) {
                    return Err(Error::NonMonotoneTime { index: i });
                }
                if (gap - self.dt).abs() > 1e-6 * self.dt {
                    return Err(Error::InvalidArgument(format!(
                        "sample {i}: spacing {gap} differs from dt {}",
                        self.dt
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn csv_header(n: usize) -> Vec<String> {
        let mut cols = vec!["t".to_string()];
        for prefix in ["q", "qd", "qdd"] {
            cols.extend((1..=n).map(|i| format!("{prefix}{i}")));
        }
        cols
    }

    /// `t,q1..qn,qd1..qdn,qdd1..qddn`, nine significant digits.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let n = self.samples.first().map(|(_, s)| s.dim()).unwrap_or(0);
        writeln!(w, "{}", Self::csv_header(n).join(","))?;
        for (t, s) in &self.samples {
            let mut row = vec![fmt9(*t)];
            for v in [&s.q, &s.qd, &s.qdd] {
                row.extend(v.iter().map(|x| fmt9(*x)));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads a trajectory CSV; `dt` is taken from the first two samples.
    pub fn read_csv(r: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let header = rdr.headers()?.clone();
        if header.len() < 4 || (header.len() - 1) % 3 != 0 {
            return Err(Error::InvalidArgument(format!(
                "trajectory header has {} columns, expected 1 + 3n",
                header.len()
            )));
        }
        let n = (header.len() - 1) / 3;
        let expected = Self::csv_header(n);
        check_header(&header, &expected.iter().map(String::as_str).collect::<Vec<_>>())?;
        let mut samples = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            let vals: Vec<f64> = rec
                .iter()
                .map(|f| parse_f64(f, "trajectory value", row))
                .collect::<Result<_>>()?;
            let part = |k: usize| DVector::from_column_slice(&vals[1 + k * n..1 + (k + 1) * n]);
            samples.push((vals[0], ChainState::new(part(0), part(1), part(2))));
        }
        let dt = if samples.len() > 1 {
            samples[1].0 - samples[0].0
        } else {
            0.0
        };
        let traj = Self {
            dt,
            samples,
            events: Vec::new(),
        };
        traj.validate()?;
        Ok(traj)
    }
}
