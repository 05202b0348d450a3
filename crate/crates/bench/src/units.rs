//! Numbers with SI-unit suffixes.

use std::f64::consts::PI;

/// Physical dimension a config value must carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Length,
    Time,
    /// Bare numbers are radians.
    Angle,
    /// Bare numbers are watts.
    Power,
    Plain,
}

impl Dim {
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Dim::Length => &[
                ("km", 1e3),
                ("m", 1.0),
                ("cm", 1e-2),
                ("mm", 1e-3),
                ("um", 1e-6),
                ("µm", 1e-6),
                ("μm", 1e-6),
                ("nm", 1e-9),
                ("pm", 1e-12),
            ],
            Dim::Time => &[
                ("s", 1.0),
                ("ms", 1e-3),
                ("us", 1e-6),
                ("µs", 1e-6),
                ("μs", 1e-6),
                ("ns", 1e-9),
                ("ps", 1e-12),
                ("fs", 1e-15),
            ],
            Dim::Angle => &[("rad", 1.0), ("mrad", 1e-3), ("deg", PI / 180.0), ("°", PI / 180.0)],
            Dim::Power => &[("W", 1.0), ("mW", 1e-3), ("uW", 1e-6), ("µW", 1e-6)],
            Dim::Plain => &[],
        }
    }

    fn name(self) -> &'static str {
        match self {
            Dim::Length => "length",
            Dim::Time => "time",
            Dim::Angle => "angle",
            Dim::Power => "power",
            Dim::Plain => "plain number",
        }
    }
}

/// Parses `"1000 mm"`, `"1000mm"` or `"1.0"` into SI units.
pub fn parse_quantity(text: &str, dim: Dim) -> Result<f64, String> {
    let t = text.trim();
    let split = t
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '+'
                || c == '-'
                || ((c == 'e' || c == 'E') && t[i + 1..].starts_with(|d: char| d.is_ascii_digit() || d == '-' || d == '+')))
        })
        .map_or(t.len(), |(i, _)| i);
    let (num, unit) = (t[..split].trim(), t[split..].trim());
    let value: f64 = num
        .parse()
        .map_err(|_| format!("'{t}' is not a number"))?;
    if !value.is_finite() {
        return Err(format!("'{t}' is not finite"));
    }
    if unit.is_empty() {
        return Ok(value);
    }
    dim.units()
        .iter()
        .find(|(u, _)| *u == unit)
        .map(|(_, scale)| value * scale)
        .ok_or_else(|| format!("unit '{unit}' is not a {} unit", dim.name()))
}

/// Parses an integer, rejecting fractional input.
pub fn parse_int<T: std::str::FromStr>(text: &str, what: &str) -> Result<T, String> {
    text.trim()
        .parse()
        .map_err(|_| format!("{what} must be an integer, got '{}'", text.trim()))
}

/// Comma-separated items; `a..b` expands to the inclusive integer range.
pub fn parse_int_list(text: &str, what: &str) -> Result<Vec<i64>, String> {
    let mut out = vec![];
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once("..") {
            Some((a, b)) => {
                let (a, b): (i64, i64) = (parse_int(a, what)?, parse_int(b, what)?);
                if b < a {
                    return Err(format!("empty range '{item}'"));
                }
                out.extend(a..=b);
            }
            None => out.push(parse_int(item, what)?),
        }
    }
    if out.is_empty() {
        return Err(format!("{what} list is empty"));
    }
    Ok(out)
}

/// Comma-separated quantities; `a..b step s` expands to an arithmetic
/// sequence including both ends.
pub fn parse_quantity_list(text: &str, dim: Dim) -> Result<Vec<f64>, String> {
    let mut out = vec![];
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item.split_once("..") {
            Some((a, rest)) => {
                let (b, s) = rest
                    .split_once("step")
                    .ok_or_else(|| format!("range '{item}' needs 'step'"))?;
                let (a, b, s) = (parse_quantity(a, dim)?, parse_quantity(b, dim)?, parse_quantity(s, dim)?);
                if !(s > 0.0) || b < a {
                    return Err(format!("bad range '{item}'"));
                }
                let n = ((b - a) / s + 1e-9).floor() as usize;
                out.extend((0..=n).map(|k| a + k as f64 * s));
            }
            None => out.push(parse_quantity(item, dim)?),
        }
    }
    if out.is_empty() {
        return Err("list is empty".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffixes() {
        assert_eq!(parse_quantity("1000 mm", Dim::Length).unwrap(), 1.0);
        assert!((parse_quantity("810nm", Dim::Length).unwrap() - 810e-9).abs() < 1e-20);
        assert!((parse_quantity("5 ns", Dim::Time).unwrap() - 5e-9).abs() < 1e-22);
        assert!((parse_quantity("2.5e-3", Dim::Length).unwrap() - 2.5e-3).abs() < 1e-18);
        assert!((parse_quantity("35 deg", Dim::Angle).unwrap() - 35f64.to_radians()).abs() < 1e-15);
        assert!((parse_quantity("10 mW", Dim::Power).unwrap() - 0.01).abs() < 1e-15);
        assert!((parse_quantity("30 µm", Dim::Length).unwrap() - 30e-6).abs() < 1e-18);
        assert!(parse_quantity("5 ns", Dim::Length).is_err());
        assert!(parse_quantity("mm", Dim::Length).is_err());
        assert!(parse_quantity("3 parsecs", Dim::Length).is_err());
    }

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_int_list("1, 3,5", "l").unwrap(), vec![1, 3, 5]);
        assert_eq!(parse_int_list("-2..1", "l").unwrap(), vec![-2, -1, 0, 1]);
        assert!(parse_int_list("1.5", "l").is_err());
        let z = parse_quantity_list("0 cm .. 35 cm step 5 cm", Dim::Length).unwrap();
        assert_eq!(z.len(), 8);
        assert!((z[7] - 0.35).abs() < 1e-12);
    }
}
