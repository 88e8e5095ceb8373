//! Sim-versus-real comparison tables.

use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::io::{check_header, parse_f64};

/// Decimals used when percent errors are presented.
pub const PERCENT_DECIMALS: u32 = 2;

/// Rounds half away from zero at `decimals` places. Products like
/// `1.005 · 100` land a hair below the tie in binary, so values within a
/// relative 1e-9 of a tie are treated as the tie.
pub fn round_half_away(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let s = x * scale;
    let nudged = s + s.signum() * 1e-9 * s.abs().max(1.0);
    let r = if (nudged.fract().abs() - 0.5).abs() < 2e-9 * s.abs().max(1.0) { nudged } else { s };
    r.round() / scale
}

/// `|sim − real| / |real| · 100`, unrounded. `None` when `real` is zero.
pub fn percent_error_exact(sim: f64, real: f64) -> Option<f64> {
    (real != 0.0).then(|| (sim - real).abs() / real.abs() * 100.0)
}

/// Percent error as presented: two decimals, half away from zero.
pub fn percent_error(sim: f64, real: f64) -> Option<f64> {
    percent_error_exact(sim, real).map(|p| round_half_away(p, PERCENT_DECIMALS))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentMeta {
    pub description: String,
    /// Link fixed horizontally to the world, numbered from the tip.
    pub fixture_link: Option<usize>,
    /// kg
    pub tip_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub sim: f64,
    pub real: f64,
    /// `sim − real`, unrounded.
    pub difference: f64,
    /// Rounded to [`PERCENT_DECIMALS`]; `None` flags `real = 0`.
    pub percent_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub metadata: ExperimentMeta,
    pub rows: Vec<ReportRow>,
    /// Decimals shown for values and differences.
    pub value_decimals: u32,
}

pub fn build_report(sim: &[f64], real: &[f64], labels: &[String], metadata: ExperimentMeta) -> Result<ComparisonReport> {
    if sim.len() != real.len() || sim.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "report inputs differ in length: {} sim, {} real, {} labels",
            sim.len(),
            real.len(),
            labels.len()
        )));
    }
    let rows = labels
        .iter()
        .zip(sim.iter().zip(real))
        .map(|(label, (&s, &r))| ReportRow {
            label: label.clone(),
            sim: s,
            real: r,
            difference: s - r,
            percent_error: percent_error(s, r),
        })
        .collect();
    Ok(ComparisonReport { metadata, rows, value_decimals: 3 })
}

impl ComparisonReport {
    pub fn max_percent_error(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.percent_error).reduce(f64::max)
    }

    pub fn max_abs_difference(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.difference.abs()).reduce(f64::max)
    }

    /// Differences rounded to the value precision.
    pub fn rounded_differences(&self) -> Vec<f64> {
        self.rows.iter().map(|r| round_half_away(r.difference, self.value_decimals)).collect()
    }

    fn value(&self, x: f64) -> String {
        format!("{:.*}", self.value_decimals as usize, round_half_away(x, self.value_decimals) + 0.0)
    }

    fn percent(p: Option<f64>) -> String {
        match p {
            Some(p) => format!("{:.2}%", p),
            None => "undefined".into(),
        }
    }

    /// Column-per-row layout: one line each for sim, real, difference and
    /// percent error, aligned.
    pub fn render_text(&self) -> String {
        let mut head = vec!["".to_string()];
        let mut sim = vec!["sim".to_string()];
        let mut real = vec!["real".to_string()];
        let mut diff = vec!["difference (sim - real)".to_string()];
        let mut pct = vec!["percent error".to_string()];
        for r in &self.rows {
            head.push(r.label.clone());
            sim.push(self.value(r.sim));
            real.push(self.value(r.real));
            diff.push(self.value(r.difference));
            pct.push(Self::percent(r.percent_error));
        }
        let lines = [head, sim, real, diff, pct];
        let cols = lines[0].len();
        let widths: Vec<usize> = (0..cols).map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0)).collect();
        let mut out = String::new();
        let m = &self.metadata;
        if !m.description.is_empty() {
            let _ = writeln!(out, "{}", m.description);
        }
        match m.fixture_link {
            Some(l) => {
                let _ = writeln!(out, "fixture link {l}, tip mass {} kg", m.tip_mass);
            }
            None => {
                let _ = writeln!(out, "tip mass {} kg", m.tip_mass);
            }
        }
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .enumerate()
                .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[0]) } else { format!("{s:>w$}", w = widths[c]) })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }

    /// `label,sim,real,difference,percent_error`; an undefined percent
    /// error is an empty field.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["label", "sim", "real", "difference", "percent_error"])?;
        for r in &self.rows {
            wr.write_record([
                r.label.clone(),
                self.value(r.sim),
                self.value(r.real),
                self.value(r.difference),
                r.percent_error.map(|p| format!("{p:.2}")).unwrap_or_default(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Reads a `label,value` CSV.
pub fn read_values_csv(r: impl Read) -> Result<(Vec<String>, Vec<f64>)> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    check_header(rd.headers()?, &["label", "value"])?;
    let (mut labels, mut values) = (Vec::new(), Vec::new());
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::InvalidArgument(format!("row {}: expected 2 fields, found {}", i + 1, rec.len())));
        }
        labels.push(rec[0].to_string());
        values.push(parse_f64(&rec[1], "value", i + 1)?);
    }
    Ok((labels, values))
}

pub fn write_values_csv(mut w: impl Write, labels: &[String], values: &[f64]) -> Result<()> {
    writeln!(w, "label,value")?;
    for (l, v) in labels.iter().zip(values) {
        writeln!(w, "{l},{v}")?;
    }
    Ok(())
}

/// A published sim/real comparison with its printed derived rows.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceTable {
    pub name: &'static str,
    pub fixture_link: Option<usize>,
    pub tip_mass: f64,
    pub labels: [&'static str; 4],
    pub sim: [f64; 4],
    pub real: [f64; 4],
    pub difference: [f64; 4],
    pub percent: [f64; 4],
}

impl ReferenceTable {
    pub fn report(&self) -> ComparisonReport {
        let labels: Vec<String> = self.labels.iter().map(|s| s.to_string()).collect();
        let meta = ExperimentMeta {
            description: self.name.to_string(),
            fixture_link: self.fixture_link,
            tip_mass: self.tip_mass,
        };
        build_report(&self.sim, &self.real, &labels, meta).expect("table columns have equal length")
    }

    pub fn max_percent(&self) -> f64 {
        self.percent.iter().copied().fold(0.0, f64::max)
    }
}

const JOINTS: [&str; 4] = ["joint 4", "joint 3", "joint 2", "joint 1"];
const FIXTURES: [&str; 4] = ["fixed 5/5", "fixed 4/4", "fixed 3/3", "fixed 2/2"];

/// Joint positions with link 5 fixed, then tip sagging angles across
/// fixtures, each unloaded and with 50 g and 100 g tip weights.
pub const REFERENCE_TABLES: [ReferenceTable; 6] = [
    ReferenceTable {
        name: "joint positions, no tip weight",
        fixture_link: Some(5),
        tip_mass: 0.0,
        labels: JOINTS,
        sim: [0.560, 0.387, 0.168, 0.098],
        real: [0.565, 0.383, 0.171, 0.100],
        difference: [-0.005, 0.004, -0.003, -0.002],
        percent: [0.88, 1.04, 1.75, 2.00],
    },
    ReferenceTable {
        name: "joint positions, 50 g tip weight",
        fixture_link: Some(5),
        tip_mass: 0.05,
        labels: JOINTS,
        sim: [0.569, 0.438, 0.164, 0.115],
        real: [0.565, 0.437, 0.170, 0.117],
        difference: [0.004, 0.001, -0.006, -0.002],
        percent: [0.71, 0.23, 3.53, 1.71],
    },
    ReferenceTable {
        name: "joint positions, 100 g tip weight",
        fixture_link: Some(5),
        tip_mass: 0.1,
        labels: JOINTS,
        sim: [0.619, 0.423, 0.181, 0.098],
        real: [0.618, 0.426, 0.177, 0.095],
        difference: [0.001, -0.003, 0.004, 0.003],
        percent: [0.16, 0.70, 2.26, 3.16],
    },
    ReferenceTable {
        name: "sagging angle, no tip weight",
        fixture_link: None,
        tip_mass: 0.0,
        labels: FIXTURES,
        sim: [1.181, 1.009, 0.694, 0.478],
        real: [1.176, 0.976, 0.685, 0.466],
        difference: [0.005, 0.033, 0.009, 0.012],
        percent: [0.43, 3.38, 1.31, 2.58],
    },
    ReferenceTable {
        name: "sagging angle, 50 g tip weight",
        fixture_link: None,
        tip_mass: 0.05,
        labels: FIXTURES,
        sim: [1.301, 1.142, 0.789, 0.529],
        real: [1.304, 1.122, 0.775, 0.513],
        difference: [-0.003, 0.020, 0.014, 0.016],
        percent: [0.23, 1.78, 1.81, 3.12],
    },
    ReferenceTable {
        name: "sagging angle, 100 g tip weight",
        fixture_link: None,
        tip_mass: 0.1,
        labels: FIXTURES,
        sim: [1.328, 1.216, 0.838, 0.587],
        real: [1.354, 1.168, 0.822, 0.573],
        difference: [-0.026, 0.048, 0.016, 0.014],
        percent: [1.92, 4.11, 1.95, 2.44],
    },
];

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn percent_error_examples() {
        assert_eq!(percent_error(0.560, 0.565), Some(0.88));
        assert_eq!(percent_error(1.181, 1.176), Some(0.43));
        assert_eq!(percent_error(0.3, 0.3), Some(0.0));
        assert_eq!(percent_error(0.1, 0.0), None);
    }

    #[test]
    fn ties_round_away_from_zero() {
        assert_eq!(round_half_away(1.005, 2), 1.01);
        assert_eq!(round_half_away(-1.005, 2), -1.01);
        assert_eq!(round_half_away(0.125, 2), 0.13);
        assert_eq!(round_half_away(2.004999, 2), 2.0);
        assert_eq!(round_half_away(-0.0049, 2), 0.0);
    }

    #[test]
    fn reference_tables_reproduce_exactly() {
        for t in &REFERENCE_TABLES {
            let rep = t.report();
            assert_eq!(rep.rounded_differences(), t.difference.to_vec(), "{}", t.name);
            let pct: Vec<f64> = rep.rows.iter().map(|r| r.percent_error.unwrap()).collect();
            assert_eq!(pct, t.percent.to_vec(), "{}", t.name);
        }
        let maxima: Vec<f64> = REFERENCE_TABLES.iter().map(|t| t.report().max_percent_error().unwrap()).collect();
        assert_eq!(maxima, vec![2.00, 3.53, 3.16, 3.38, 3.12, 4.11]);
    }

    #[test]
    fn build_report_edge_cases() {
        let empty = build_report(&[], &[], &[], ExperimentMeta::default()).unwrap();
        assert!(empty.rows.is_empty() && empty.max_percent_error().is_none());
        assert!(build_report(&[1.0], &[1.0, 2.0], &["a".into()], ExperimentMeta::default()).is_err());
        let z = build_report(&[0.1], &[0.0], &["a".into()], ExperimentMeta::default()).unwrap();
        assert_eq!(z.rows[0].percent_error, None);
        assert!(z.render_text().contains("undefined"));
    }

    #[test]
    fn text_and_csv_rendering() {
        let rep = REFERENCE_TABLES[0].report();
        let text = rep.render_text();
        let diff = text.lines().find(|l| l.starts_with("difference")).unwrap();
        assert_eq!(diff.split_whitespace().rev().take(4).collect::<Vec<_>>(), ["-0.002", "-0.003", "0.004", "-0.005"]);
        let pct = text.lines().find(|l| l.starts_with("percent")).unwrap();
        assert_eq!(pct.split_whitespace().skip(2).collect::<Vec<_>>(), ["0.88%", "1.04%", "1.75%", "2.00%"]);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let csv = String::from_utf8(buf).unwrap();
        assert_eq!(csv.lines().nth(1).unwrap(), "joint 4,0.560,0.565,-0.005,0.88");
    }

    #[test]
    fn values_csv_round_trip() {
        let labels: Vec<String> = JOINTS.iter().map(|s| s.to_string()).collect();
        let mut buf = Vec::new();
        write_values_csv(&mut buf, &labels, &REFERENCE_TABLES[0].sim).unwrap();
        let (l, v) = read_values_csv(&buf[..]).unwrap();
        assert_eq!((l, v), (labels, REFERENCE_TABLES[0].sim.to_vec()));
        assert!(read_values_csv(&b"name,value\na,1\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn difference_is_exact_and_percent_symmetric(s in -10.0f64..10.0, r in 0.01f64..10.0) {
            let rep = build_report(&[s], &[r], &["x".into()], ExperimentMeta::default()).unwrap();
            prop_assert_eq!(rep.rows[0].difference, s - r);
            prop_assert_eq!(percent_error(s, r), percent_error(s - 2.0 * (s - r), r));
        }
    }
}
