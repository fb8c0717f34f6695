use std::fmt::Write as _;
use std::path::Path;

use super::datasets::Dataset;
use crate::error::{Error, Result};

/// Header `x0,...,x{d-1}` then one row per point, 17 significant digits per value.
pub fn format_points(points: &[Vec<f64>], dim: usize) -> Result<String> {
    let mut s = String::with_capacity(points.len() * dim * 25 + 16);
    for k in 0..dim {
        if k > 0 {
            s.push(',');
        }
        write!(s, "x{k}").unwrap();
    }
    s.push('\n');
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::invalid(format!(
                "point {i} has dimension {}, expected {dim}",
                p.len()
            )));
        }
        for (k, v) in p.iter().enumerate() {
            if k > 0 {
                s.push(',');
            }
            write!(s, "{v:.16e}").unwrap();
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn write_csv(path: &Path, points: &[Vec<f64>], dim: usize) -> Result<()> {
    std::fs::write(path, format_points(points, dim)?)?;
    Ok(())
}

/// Parses the sample-file grammar. Line numbers in errors are 1-based.
pub fn parse_points(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "no header"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    for (k, c) in cols.iter().enumerate() {
        if *c != format!("x{k}") {
            return Err(Error::parse(
                1,
                format!("expected header column `x{k}`, found `{c}`"),
            ));
        }
    }
    let dim = cols.len();
    let mut points = Vec::new();
    for (i, line) in lines {
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != dim {
            return Err(Error::parse(
                i + 1,
                format!("expected {dim} columns, found {}", cells.len()),
            ));
        }
        let row = cells
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|_| Error::parse(i + 1, format!("not a number: `{c}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        points.push(row);
    }
    Ok(points)
}

pub fn read_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let points = parse_points(&text)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    Dataset::new(&name, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn random_points_roundtrip_exactly() {
        let mut rng = stream(1, "csv", 0);
        let pts: Vec<Vec<f64>> = (0..1000)
            .map(|_| {
                (0..3)
                    .map(|_| rng.random_range(-1e3..1e3) * rng.random::<f64>())
                    .collect()
            })
            .collect();
        let back = parse_points(&format_points(&pts, 3).unwrap()).unwrap();
        assert_eq!(back, pts);
    }

    #[test]
    fn empty_file_has_no_header() {
        let err = parse_points("").unwrap_err();
        assert!(err.to_string().contains("no header"));
    }

    #[test]
    fn ragged_row_reports_its_line() {
        let err = parse_points("x0,x1\n1,2\n1,2,3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_points("x0\n1\nabc\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    proptest! {
        #[test]
        fn finite_values_roundtrip(v in prop::collection::vec(
            prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..40)) {
            let pts: Vec<Vec<f64>> = v.chunks(2).filter(|c| c.len() == 2).map(|c| c.to_vec()).collect();
            let back = parse_points(&format_points(&pts, 2).unwrap()).unwrap();
            prop_assert_eq!(back, pts);
        }
    }
}
