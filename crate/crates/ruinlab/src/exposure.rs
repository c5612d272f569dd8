//! Past exposure levels from CSV.

use std::io::Read;

use serde::Deserialize;

use crate::AppError;

#[derive(Debug, Deserialize)]
struct LevelRow {
    m: i64,
    pi: f64,
}

/// Reads rows `(m, pi)` with `m = −d, …, 0` in any order and returns the levels
/// oldest first. Every year must appear exactly once and `pi` at `m = 0` must be 1.
pub fn read_levels<R: Read>(input: R) -> Result<Vec<f64>, AppError> {
    let bad = |m: String| AppError::Schema(format!("exposure csv: {m}"));
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut rows = Vec::new();
    for r in rdr.deserialize::<LevelRow>() {
        rows.push(r.map_err(|e| bad(e.to_string()))?);
    }
    if rows.is_empty() {
        return Err(bad("no rows".into()));
    }
    rows.sort_by_key(|r| r.m);
    let d = -rows[0].m;
    if rows.last().map(|r| r.m) != Some(0) || d < 0 {
        return Err(bad("years must run from -d to 0".into()));
    }
    for (k, r) in rows.iter().enumerate() {
        if r.m != k as i64 - d {
            return Err(bad(format!("year {} missing or repeated", k as i64 - d)));
        }
        if !(r.pi.is_finite() && r.pi > 0.0) {
            return Err(bad(format!("pi at m = {} must be positive", r.m)));
        }
    }
    if rows[rows.len() - 1].pi != 1.0 {
        return Err(bad("pi at m = 0 must equal 1".into()));
    }
    Ok(rows.into_iter().map(|r| r.pi).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unordered_rows() {
        let text = "m,pi\n0,1\n-2,0.5\n-1,0.75\n";
        assert_eq!(read_levels(text.as_bytes()).unwrap(), vec![0.5, 0.75, 1.0]);
    }

    #[test]
    fn rejects_gaps_and_bad_current_year() {
        assert!(read_levels("m,pi\n-2,0.5\n0,1\n".as_bytes()).is_err());
        assert!(read_levels("m,pi\n-1,0.5\n0,2\n".as_bytes()).is_err());
        assert!(read_levels("m,pi\n".as_bytes()).is_err());
        assert!(read_levels("m,pi\n-1,-0.5\n0,1\n".as_bytes()).is_err());
    }
}
