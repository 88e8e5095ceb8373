//! Small CSV helpers shared by the file formats.

use std::io::{Read, Write};

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// `%.{digits}g`-style formatting: `digits` significant digits, trailing
/// zeros trimmed, exponent notation outside `[1e-4, 10^digits)`.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let digits = digits.max(1);
    // exponent after rounding to the requested precision
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        format!("{}e{}", trim_zeros(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Nine significant digits, the precision of every numeric CSV column.
pub fn fmt9(x: f64) -> String {
    format_sig(x, 9)
}

pub(crate) fn parse_f64(field: &str, what: &str, row: usize) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        Error::InvalidArgument(format!("row {row}: `{field}` is not a number ({what})"))
    })
}

pub(crate) fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = found.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::InvalidArgument(format!(
            "unexpected CSV header `{}`, expected `{}`",
            got.join(","),
            expected.join(",")
        )));
    }
    Ok(())
}

/// Reads `x,y,z` rows (meters).
pub fn read_points_csv(reader: impl Read) -> Result<Vec<Vector3<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(rdr.headers()?, &["x", "y", "z"])?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        if rec.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "row {row}: expected 3 fields, found {}",
                rec.len()
            )));
        }
        out.push(Vector3::new(
            parse_f64(&rec[0], "x", row)?,
            parse_f64(&rec[1], "y", row)?,
            parse_f64(&rec[2], "z", row)?,
        ));
    }
    Ok(out)
}

pub fn write_points_csv(mut writer: impl Write, points: &[Vector3<f64>]) -> Result<()> {
    writeln!(writer, "x,y,z")?;
    for p in points {
        writeln!(writer, "{},{},{}", fmt9(p.x), fmt9(p.y), fmt9(p.z))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(fmt9(0.001), "0.001");
        assert_eq!(fmt9(1.0), "1");
        assert_eq!(fmt9(-0.5), "-0.5");
        assert_eq!(fmt9(std::f64::consts::PI), "3.14159265");
        assert_eq!(fmt9(123456789.4), "123456789");
        assert_eq!(fmt9(1234567891.0), "1.23456789e9");
        assert_eq!(fmt9(1.5e-7), "1.5e-7");
        assert_eq!(fmt9(9.999999999e-6), "1e-5");
        assert_eq!(fmt9(0.00012), "0.00012");
        assert_eq!(fmt9(0.0), "0");
    }

    #[test]
    fn nine_digits_round_trip_to_relative_precision() {
        for x in [1.0 / 3.0, -2.0 / 7.0 * 1e-8, 6.02e23, 0.1 + 0.2] {
            let back: f64 = fmt9(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 5e-9);
        }
    }

    #[test]
    fn points_round_trip() {
        let pts = vec![Vector3::new(0.1, -0.2, 0.3), Vector3::new(1.0, 2.0, 3.0)];
        let mut buf = Vec::new();
        write_points_csv(&mut buf, &pts).unwrap();
        assert_eq!(read_points_csv(buf.as_slice()).unwrap(), pts);
        assert!(read_points_csv("a,b,c\n1,2,3\n".as_bytes()).is_err());
        assert!(read_points_csv("x,y,z\n1,q,3\n".as_bytes()).is_err());
    }
}
