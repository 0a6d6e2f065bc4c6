//! CSV serialization shared by the library and the command-line front end.

use std::fmt::Write as _;

use crate::error::{KsError, Result};
use crate::fields::{RadialField, RadialGrid};

/// Fixed-width scientific notation with 17 significant digits; round-trips
/// every finite `f64` exactly.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{v:.16e}")
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| KsError::Parse(format!("bad number {s:?}: {e}")))
}

/// Render rows under a header; every value goes through [`fmt_f64`].
pub fn csv_table<'a>(header: &[&str], rows: impl IntoIterator<Item = &'a [f64]>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

/// Parse a numeric CSV, checking the header exactly.
pub fn parse_csv_table(text: &str, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines();
    let first = lines.next().ok_or_else(|| KsError::Parse("empty CSV".into()))?;
    let got: Vec<&str> = first.split(',').map(str::trim).collect();
    if got != header {
        return Err(KsError::Parse(format!(
            "unexpected CSV header {first:?}, expected {:?}",
            header.join(",")
        )));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, line)| {
            let row = line.split(',').map(parse_f64).collect::<Result<Vec<_>>>()?;
            if row.len() != header.len() {
                return Err(KsError::Parse(format!(
                    "row {} has {} columns, expected {}",
                    k + 2,
                    row.len(),
                    header.len()
                )));
            }
            Ok(row)
        })
        .collect()
}

pub const FIELD_HEADER: [&str; 2] = ["r", "value"];

/// `r,value` dump of a radial field, one row per cell.
pub fn field_to_csv(field: &RadialField) -> String {
    let grid = field.grid();
    let mut out = String::from("r,value\n");
    for (i, v) in field.values().iter().enumerate() {
        let _ = writeln!(out, "{},{}", fmt_f64(grid.center(i)), fmt_f64(*v));
    }
    out
}

/// Rebuild a field from its `r,value` dump. The grid is recovered from the
/// (uniform, cell-centered) radii.
pub fn field_from_csv(text: &str, dim: usize) -> Result<RadialField> {
    let rows = parse_csv_table(text, &FIELD_HEADER)?;
    if rows.len() < RadialGrid::MIN_CELLS {
        return Err(KsError::Parse(format!("snapshot has only {} rows", rows.len())));
    }
    let n = rows.len();
    let dr = 2.0 * rows[0][0];
    let grid = RadialGrid::new(dim, dr * n as f64, n)?;
    for (i, row) in rows.iter().enumerate() {
        let expected = grid.center(i);
        if (row[0] - expected).abs() > 1e-9 * expected.max(dr) {
            return Err(KsError::Parse(format!(
                "row {} radius {} is not on a uniform cell-centered grid (expected {expected})",
                i + 2,
                row[0]
            )));
        }
    }
    RadialField::new(grid, rows.into_iter().map(|r| r[1]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn field_csv_round_trip(values in proptest::collection::vec(-1e6f64..1e6, 8..64), r_max in 0.1f64..100.0) {
            let grid = RadialGrid::new(3, r_max, values.len()).unwrap();
            let field = RadialField::new(grid, values).unwrap();
            let back = field_from_csv(&field_to_csv(&field), 3).unwrap();
            prop_assert_eq!(back.values(), field.values());
            prop_assert!((back.grid().r_max() - r_max).abs() < 1e-12 * r_max);
        }
    }

    #[test]
    fn header_only_table() {
        let rows: Vec<&[f64]> = Vec::new();
        assert_eq!(csv_table(&["a", "b"], rows), "a,b\n");
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(parse_csv_table("x,y\n1,2\n", &["r", "value"]).is_err());
    }
}
