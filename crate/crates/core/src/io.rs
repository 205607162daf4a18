//! Field and series files.
//!
//! Binary fields are raw little-endian `f64`, component-major (all cells of
//! `u_1`, then `u_2`, …), with a JSON sidecar `{dim, n, period, m, t}`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ergodic::ErgodicResult;
use crate::evolutive::TrajectoryLog;
use crate::grid::{TorusGrid, VectorGridField};
use crate::longtime::FunctionalTrace;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub dim: usize,
    pub n: usize,
    pub period: f64,
    pub m: usize,
    pub t: f64,
}

fn check(grid: &TorusGrid, field: &VectorGridField) -> Result<()> {
    if field.cells() != grid.cells() {
        return Err(Error::DimensionMismatch(format!(
            "field has {} cells, grid has {}",
            field.cells(),
            grid.cells()
        )));
    }
    Ok(())
}

fn with_extension(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// One row per cell: coordinates then the `m` values.
pub fn field_csv(grid: &TorusGrid, field: &VectorGridField) -> Result<String> {
    check(grid, field)?;
    let mut out = String::from(if grid.dim == 1 { "x" } else { "x,y" });
    for i in 1..=field.m {
        write!(out, ",u{i}").expect("string write");
    }
    out.push('\n');
    for c in 0..grid.cells() {
        let x = grid.point(c);
        write!(out, "{}", x[0]).expect("string write");
        if grid.dim == 2 {
            write!(out, ",{}", x[1]).expect("string write");
        }
        for u in &field.values {
            write!(out, ",{}", u[c]).expect("string write");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_field_csv(path: &Path, grid: &TorusGrid, field: &VectorGridField) -> Result<()> {
    fs::write(path, field_csv(grid, field)?)?;
    Ok(())
}

/// Writes `<stem>.bin` and `<stem>.json`.
pub fn write_field_binary(stem: &Path, grid: &TorusGrid, field: &VectorGridField) -> Result<()> {
    check(grid, field)?;
    let header = FieldHeader {
        dim: grid.dim,
        n: grid.n,
        period: grid.period,
        m: field.m,
        t: field.t,
    };
    let bytes: Vec<u8> = field
        .values
        .iter()
        .flatten()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    fs::write(with_extension(stem, "bin"), bytes)?;
    fs::write(
        with_extension(stem, "json"),
        serde_json::to_string_pretty(&header)?,
    )?;
    Ok(())
}

pub fn read_field_binary(stem: &Path) -> Result<(FieldHeader, VectorGridField)> {
    let header: FieldHeader =
        serde_json::from_str(&fs::read_to_string(with_extension(stem, "json"))?)?;
    let grid = TorusGrid::new(header.dim, header.n, header.period)?;
    let bytes = fs::read(with_extension(stem, "bin"))?;
    let expected = 8 * header.m * grid.cells();
    if bytes.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "{} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect();
    let values = flat.chunks(grid.cells()).map(<[f64]>::to_vec).collect();
    let field = VectorGridField {
        m: header.m,
        values,
        t: header.t,
    };
    Ok((header, field))
}

/// `t, sup_i, inf_i, lip_i, res_i` per sample.
pub fn trajectory_csv(log: &TrajectoryLog) -> String {
    let m = log.samples.first().map_or(0, |s| s.sup.len());
    let mut out = String::from("t");
    for prefix in ["sup", "inf", "lip", "res"] {
        for i in 1..=m {
            write!(out, ",{prefix}{i}").expect("string write");
        }
    }
    out.push('\n');
    for s in &log.samples {
        write!(out, "{}", s.t).expect("string write");
        for col in [&s.sup, &s.inf, &s.lipschitz, &s.residual] {
            for v in col {
                write!(out, ",{v}").expect("string write");
            }
        }
        out.push('\n');
    }
    out
}

/// `t, cell, lambda, max` rows for paired functional traces.
pub fn functional_csv(lambda: &FunctionalTrace, max: &FunctionalTrace) -> String {
    let mut out = String::from("t,cell,lambda,max\n");
    for (k, &cell) in lambda.cells.iter().enumerate() {
        let other = max.cells.iter().position(|&c| c == cell);
        for (s, t) in lambda.times.iter().enumerate() {
            let mx = other
                .and_then(|o| max.values[o].get(s))
                .copied()
                .unwrap_or(f64::NAN);
            writeln!(out, "{t},{cell},{},{mx}", lambda.values[k][s]).expect("string write");
        }
    }
    out
}

/// `lambda, λv_i(x*) per equation, corrector increment`.
pub fn ergodic_trace_csv(result: &ErgodicResult) -> String {
    let m = result.c_estimate.len();
    let mut out = String::from("lambda");
    for i in 1..=m {
        write!(out, ",lambda_v{i}").expect("string write");
    }
    out.push_str(",corrector_increment,iterations,residual\n");
    for e in &result.trace {
        write!(out, "{}", e.lambda).expect("string write");
        for v in &e.scaled_anchor {
            write!(out, ",{v}").expect("string write");
        }
        let inc = e
            .corrector_increment
            .map_or(String::new(), |v| v.to_string());
        writeln!(out, ",{inc},{},{}", e.iterations, e.residual).expect("string write");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = TorusGrid::new(2, 8, 2.0).unwrap();
        let field = VectorGridField::from_components(
            vec![
                (0..64).map(|c| c as f64 * 0.1).collect(),
                (0..64).map(|c| -(c as f64)).collect(),
            ],
            3.25,
        )
        .unwrap();
        let stem = dir.path().join("u");
        write_field_binary(&stem, &g, &field).unwrap();
        let (header, back) = read_field_binary(&stem).unwrap();
        assert_eq!(
            header,
            FieldHeader {
                dim: 2,
                n: 8,
                period: 2.0,
                m: 2,
                t: 3.25
            }
        );
        assert_eq!(back, field);
    }

    #[test]
    fn csv_layout() {
        let g = TorusGrid::new(1, 8, 1.0).unwrap();
        let field = VectorGridField::zeros(2, 8);
        let text = field_csv(&g, &field).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,u1,u2");
        assert_eq!(lines[2], "0.125,0,0");
        assert_eq!(lines.len(), 9);
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = TorusGrid::new(1, 8, 1.0).unwrap();
        let stem = dir.path().join("v");
        write_field_binary(&stem, &g, &VectorGridField::zeros(1, 8)).unwrap();
        fs::write(with_extension(&stem, "bin"), [0u8; 12]).unwrap();
        assert!(matches!(
            read_field_binary(&stem),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
