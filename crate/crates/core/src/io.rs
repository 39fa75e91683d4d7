//! Text exports: curve snapshots, traces and plain matrices.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::curve::ClosedCurve;
use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField};

/// Nine significant digits in scientific notation.
pub fn fmt9(v: f64) -> String {
    format!("{v:.8e}")
}

/// CSV with header `step,node,x,y`, rows ordered by step then node.
pub fn curves_to_csv(curves: &[(usize, ClosedCurve)]) -> String {
    let mut sorted: Vec<&(usize, ClosedCurve)> = curves.iter().collect();
    sorted.sort_by_key(|(s, _)| *s);
    let mut out = String::from("step,node,x,y\n");
    for (step, c) in sorted {
        for (i, p) in c.points().iter().enumerate() {
            let _ = writeln!(out, "{step},{i},{},{}", fmt9(p[0]), fmt9(p[1]));
        }
    }
    out
}

pub fn export_curve_csv(curves: &[(usize, ClosedCurve)], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, curves_to_csv(curves))?;
    Ok(())
}

fn parse_err(line: usize, what: &str) -> Error {
    Error::InvalidParameter(format!("line {line}: {what}"))
}

/// Reads back a curve CSV into `(step, curve)` pairs.
pub fn parse_curve_csv(text: &str) -> Result<Vec<(usize, ClosedCurve)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "step,node,x,y")) => {}
        _ => return Err(parse_err(1, "expected header step,node,x,y")),
    }
    let mut groups: Vec<(usize, Vec<[f64; 2]>)> = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(parse_err(n + 1, "expected 4 fields"));
        }
        let step: usize = f[0].parse().map_err(|_| parse_err(n + 1, "bad step"))?;
        let node: usize = f[1].parse().map_err(|_| parse_err(n + 1, "bad node"))?;
        let x: f64 = f[2].parse().map_err(|_| parse_err(n + 1, "bad x"))?;
        let y: f64 = f[3].parse().map_err(|_| parse_err(n + 1, "bad y"))?;
        match groups.last_mut() {
            Some((s, pts)) if *s == step => {
                if node != pts.len() {
                    return Err(parse_err(n + 1, "nodes out of order"));
                }
                pts.push([x, y]);
            }
            _ => {
                if node != 0 {
                    return Err(parse_err(n + 1, "curve must start at node 0"));
                }
                groups.push((step, vec![[x, y]]));
            }
        }
    }
    groups.into_iter().map(|(s, pts)| Ok((s, ClosedCurve::new(pts)?))).collect()
}

/// Whitespace-separated rows, one per grid row, nine significant digits.
pub fn matrix_to_text(field: &ScalarField) -> String {
    let spec = field.spec();
    let mut out = String::new();
    for j in 0..spec.ny {
        let row: Vec<String> = (0..spec.nx).map(|i| fmt9(field.get(i, j))).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn write_matrix(field: &ScalarField, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, matrix_to_text(field))?;
    Ok(())
}

/// Parses the output of [`matrix_to_text`] on unit spacing.
pub fn parse_matrix(text: &str) -> Result<ScalarField> {
    let mut values = Vec::new();
    let mut nx = None;
    let mut ny = 0;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| parse_err(n + 1, "bad number")))
            .collect::<Result<_>>()?;
        match nx {
            None => nx = Some(row.len()),
            Some(w) if w != row.len() => return Err(parse_err(n + 1, "ragged row")),
            _ => {}
        }
        values.extend(row);
        ny += 1;
    }
    let spec = GridSpec::new(nx.unwrap_or(0), ny)?;
    ScalarField::new(spec, values)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<ScalarField> {
    parse_matrix(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_rows() {
        let tri = ClosedCurve::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let csv = curves_to_csv(&[(0, tri)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "step,node,x,y");
        for (k, l) in lines[1..].iter().enumerate() {
            assert!(l.starts_with(&format!("0,{k},")));
        }
        assert_eq!(lines[2], "0,1,1.00000000e0,0.00000000e0");
    }

    #[test]
    fn rows_sorted_by_step() {
        let a = ClosedCurve::circle([0.0, 0.0], 1.0, 8).unwrap();
        let b = ClosedCurve::circle([5.0, 0.0], 2.0, 9).unwrap();
        let csv = curves_to_csv(&[(7, b.clone()), (2, a.clone())]);
        let back = parse_curve_csv(&csv).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!((back[0].0, back[0].1.len()), (2, 8));
        assert_eq!((back[1].0, back[1].1.len()), (7, 9));
    }

    #[test]
    fn matrix_round_trip() {
        let f = ScalarField::from_fn(GridSpec::new(5, 4).unwrap(), |x, y| (x - 2.0 * y).sin() * 30.0).unwrap();
        let g = parse_matrix(&matrix_to_text(&f)).unwrap();
        for (a, b) in f.values().iter().zip(g.values()) {
            assert!((a - b).abs() <= 5e-9 * a.abs().max(1e-300));
        }
        assert!(parse_matrix("1 2 3\n4 5\n").is_err());
    }

    #[test]
    fn rejects_bad_csv() {
        assert!(parse_curve_csv("").is_err());
        assert!(parse_curve_csv("step,node,x,y\n0,1,0,0\n").is_err());
        assert!(parse_curve_csv("step,node,x,y\n0,0,a,0\n").is_err());
    }
}
