//! CSV readers and writers for the three dataset kinds.
//!
//! Regression files carry columns `x1..xd, y`; survival files carry
//! `w1..wk, time, status`; density files carry `u, w1..wk`. Headers are
//! required and checked literally, values are parsed as decimal floats.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{HalError, Result};
use crate::losses::{DensityDataset, RegressionDataset, SurvivalDataset, SurvivalRow};

fn parse_float(field: &str, row: usize, col: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| HalError::BadData {
        row,
        reason: format!("column {col}: cannot parse {field:?} as a float"),
    })
}

fn check_headers(actual: &[&str], expected: &[String], kind: &str) -> Result<()> {
    if actual.len() != expected.len()
        || actual.iter().zip(expected).any(|(a, e)| a.trim() != e)
    {
        return Err(HalError::InvalidArgument(format!(
            "{kind} csv header must be {}, got {}",
            expected.join(","),
            actual.join(",")
        )));
    }
    Ok(())
}

fn covariate_headers(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|j| format!("{prefix}{j}")).collect()
}

/// Load a regression dataset from `x1..xd, y` columns.
pub fn read_regression_csv(path: impl AsRef<Path>) -> Result<RegressionDataset> {
    let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 2 {
        return Err(HalError::InvalidArgument(
            "regression csv needs at least columns x1, y".into(),
        ));
    }
    let d = cols.len() - 1;
    let mut expected = covariate_headers("x", d);
    expected.push("y".into());
    check_headers(&cols, &expected, "regression")?;

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != d + 1 {
            return Err(HalError::BadData {
                row: i,
                reason: format!("expected {} fields, got {}", d + 1, rec.len()),
            });
        }
        let mut x = Vec::with_capacity(d);
        for j in 0..d {
            x.push(parse_float(&rec[j], i, &expected[j])?);
        }
        xs.push(x);
        ys.push(parse_float(&rec[d], i, "y")?);
    }
    RegressionDataset::from_raw(xs, ys)
}

/// Write a regression dataset with `x1..xd, y` columns.
pub fn write_regression_csv(path: impl AsRef<Path>, data: &RegressionDataset) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let d = data.xs.first().map_or(1, Vec::len);
    let mut header = covariate_headers("x", d);
    header.push("y".into());
    wtr.write_record(&header)?;
    for (x, y) in data.xs.iter().zip(&data.ys) {
        let mut rec: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
        rec.push(format!("{y}"));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Load a survival dataset from `w1..wk, time, status` columns.
pub fn read_survival_csv(path: impl AsRef<Path>) -> Result<SurvivalDataset> {
    let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 2 {
        return Err(HalError::InvalidArgument(
            "survival csv needs at least columns time, status".into(),
        ));
    }
    let k = cols.len() - 2;
    let mut expected = covariate_headers("w", k);
    expected.push("time".into());
    expected.push("status".into());
    check_headers(&cols, &expected, "survival")?;

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != k + 2 {
            return Err(HalError::BadData {
                row: i,
                reason: format!("expected {} fields, got {}", k + 2, rec.len()),
            });
        }
        let mut w = Vec::with_capacity(k);
        for j in 0..k {
            w.push(parse_float(&rec[j], i, &expected[j])?);
        }
        let time = parse_float(&rec[k], i, "time")?;
        let status_f = parse_float(&rec[k + 1], i, "status")?;
        let status = if status_f == 0.0 {
            0
        } else if status_f == 1.0 {
            1
        } else {
            return Err(HalError::BadData {
                row: i,
                reason: format!("status must be 0 or 1, got {status_f}"),
            });
        };
        rows.push(SurvivalRow { w, time, status });
    }
    SurvivalDataset::new(rows)
}

/// Write a survival dataset with `w1..wk, time, status` columns.
pub fn write_survival_csv(path: impl AsRef<Path>, data: &SurvivalDataset) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let k = data.w_dim();
    let mut header = covariate_headers("w", k);
    header.push("time".into());
    header.push("status".into());
    wtr.write_record(&header)?;
    for row in &data.rows {
        let mut rec: Vec<String> = row.w.iter().map(|v| format!("{v}")).collect();
        rec.push(format!("{}", row.time));
        rec.push(format!("{}", row.status));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Load a density dataset from `u, w1..wk` columns.
pub fn read_density_csv(path: impl AsRef<Path>) -> Result<DensityDataset> {
    let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.is_empty() {
        return Err(HalError::InvalidArgument(
            "density csv needs at least a u column".into(),
        ));
    }
    let k = cols.len() - 1;
    let mut expected = vec!["u".to_string()];
    expected.extend(covariate_headers("w", k));
    check_headers(&cols, &expected, "density")?;

    let mut us = Vec::new();
    let mut ws = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != k + 1 {
            return Err(HalError::BadData {
                row: i,
                reason: format!("expected {} fields, got {}", k + 1, rec.len()),
            });
        }
        us.push(parse_float(&rec[0], i, "u")?);
        let mut w = Vec::with_capacity(k);
        for j in 0..k {
            w.push(parse_float(&rec[j + 1], i, &expected[j + 1])?);
        }
        ws.push(w);
    }
    DensityDataset::new(us, ws)
}

/// Write a density dataset with `u, w1..wk` columns.
pub fn write_density_csv(path: impl AsRef<Path>, data: &DensityDataset) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let k = data.ws.first().map_or(0, Vec::len);
    let mut header = vec!["u".to_string()];
    header.extend(covariate_headers("w", k));
    wtr.write_record(&header)?;
    for (u, w) in data.us.iter().zip(&data.ws) {
        let mut rec = vec![format!("{u}")];
        rec.extend(w.iter().map(|v| format!("{v}")));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
