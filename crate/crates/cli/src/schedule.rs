//! Traversal schedules: a T×K matrix of speeds, one row per step.
//!
//! Inline syntax is a comma-separated list of terms `k:g@a..b` (field `k` at
//! speed `g` on steps `a` through `b`, inclusive, counted from 1), `k:g@t`
//! (one step) or `k:g` (every step). Overlapping terms add. The empty string
//! is the all-zero schedule. Matrix files hold one row of K numbers per step,
//! separated by whitespace or commas; blank lines and `#` comments are skipped.

use std::path::Path;

use crate::error::{CliError, CliResult};

pub type Schedule = Vec<Vec<f64>>;

fn bad(spec: &str, why: impl std::fmt::Display) -> CliError {
    CliError::config(format!("malformed schedule '{spec}': {why}"))
}

fn number<T: std::str::FromStr>(spec: &str, s: &str, what: &str) -> CliResult<T> {
    s.trim().parse().map_err(|_| bad(spec, format!("{what} '{}' is not a number", s.trim())))
}

pub fn parse_schedule(spec: &str, k: usize, steps: usize) -> CliResult<Schedule> {
    let mut m = vec![vec![0.0; k]; steps];
    for term in spec.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (field, rest) = term.split_once(':').ok_or_else(|| bad(spec, format!("term '{term}' lacks ':'")))?;
        let field: usize = number(spec, field, "field")?;
        if field >= k {
            return Err(bad(spec, format!("field {field} out of range, K = {k}")));
        }
        let (speed, range) = match rest.split_once('@') {
            Some((g, r)) => (g, Some(r)),
            None => (rest, None),
        };
        let g: f64 = number(spec, speed, "speed")?;
        if !g.is_finite() {
            return Err(bad(spec, format!("speed {g} is not finite")));
        }
        let (a, b) = match range {
            None => (1, steps),
            Some(r) => match r.split_once("..") {
                Some((a, b)) => (number(spec, a, "step")?, number(spec, b, "step")?),
                None => {
                    let t = number(spec, r, "step")?;
                    (t, t)
                }
            },
        };
        if a < 1 || a > b || b > steps {
            return Err(bad(spec, format!("steps {a}..{b} outside 1..{steps}")));
        }
        for row in &mut m[a - 1..b] {
            row[field] += g;
        }
    }
    Ok(m)
}

pub fn parse_matrix(text: &str, k: usize) -> CliResult<Schedule> {
    let mut m = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| CliError::config(format!("schedule line {}: '{s}' is not a finite number", i + 1)))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        if row.len() != k {
            return Err(CliError::config(format!(
                "schedule line {} has {} entries, expected K = {k}",
                i + 1,
                row.len()
            )));
        }
        m.push(row);
    }
    Ok(m)
}

pub fn load_matrix(path: &Path, k: usize) -> CliResult<Schedule> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    parse_matrix(&text, k).map_err(|e| e.context(path.display()))
}
