//! File formats.
//!
//! Matrices are headerless CSV, row-major, plain decimal floating point. A
//! generalized match is a single CSV column of integers in {0, ..., n},
//! 1-based with 0 meaning "missing".

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::model::GeneralizedMatch;

/// Formats a float the way all CSV writers in this crate do: shortest
/// round-trip decimal, with `inf`/`-inf`/`nan` spelled out.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        // shortest decimal representation that round-trips
        format!("{v}")
    }
}

pub fn write_matrix_csv<P: AsRef<Path>>(path: P, a: ArrayView2<'_, f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in a.rows() {
        let line: Vec<String> = row.iter().map(|v| fmt_float(*v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv<P: AsRef<Path>>(path: P) -> Result<Array2<f64>> {
    let display = path.as_ref().display().to_string();
    let reader = BufReader::new(File::open(&path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let field = field.trim();
            let v = match field {
                "inf" => f64::INFINITY,
                "-inf" => f64::NEG_INFINITY,
                "nan" => f64::NAN,
                _ => field.parse::<f64>().map_err(|e| Error::Parse {
                    path: display.clone(),
                    line: idx + 1,
                    msg: e.to_string(),
                })?,
            };
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Parse {
                    path: display,
                    line: idx + 1,
                    msg: format!("expected {} fields, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: display,
            line: 0,
            msg: "empty matrix file".into(),
        });
    }
    let ncols = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let nrows = flat.len() / ncols;
    Array2::from_shape_vec((nrows, ncols), flat)
        .map_err(|e| Error::InvalidConfig(e.to_string()))
}

pub fn write_match_csv<P: AsRef<Path>>(path: P, gm: &GeneralizedMatch) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for v in gm.to_one_based() {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_match_csv<P: AsRef<Path>>(path: P) -> Result<GeneralizedMatch> {
    let display = path.as_ref().display().to_string();
    let reader = BufReader::new(File::open(&path)?);
    let mut values = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        values.push(t.parse::<usize>().map_err(|e| Error::Parse {
            path: display.clone(),
            line: idx + 1,
            msg: e.to_string(),
        })?);
    }
    GeneralizedMatch::from_one_based(&values)
}
