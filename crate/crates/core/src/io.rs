//! Matrix and vector files, trace CSV and JSON summaries.
//!
//! Text matrices hold one row per line with whitespace-separated entries. Blank
//! lines and lines starting with `#` are ignored. Binary files hold two
//! little-endian `u64` dimensions (rows, cols) followed by row-major `f64`s.
//! A path ending in `.bin` is read and written as binary.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::IterRecord;
use crate::numerics::{DenseMatrix, Vector};

pub const TRACE_HEADER: [&str; 9] = ["k", "lambda", "r2", "rho", "iota", "lo", "hi", "stopped", "true_r2"];

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("bin"))
}

pub fn parse_text_matrix(text: &str) -> Result<DenseMatrix> {
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let start = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: `{tok}` is not a number", lineno + 1)))?;
            data.push(v);
        }
        let n = data.len() - start;
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(Error::Parse(format!(
                    "line {}: expected {c} entries, found {n}",
                    lineno + 1
                )));
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or(Error::Empty("matrix file"))?;
    DenseMatrix::new(rows, cols, data)
}

pub fn parse_binary_matrix(bytes: &[u8]) -> Result<DenseMatrix> {
    if bytes.len() < 16 {
        return Err(Error::Parse("binary matrix shorter than its 16-byte header".into()));
    }
    let dim = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
    let (rows, cols) = (dim(0), dim(8));
    let count = rows
        .checked_mul(cols)
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| Error::Parse(format!("dimensions {rows}x{cols} overflow")))?;
    let body = &bytes[16..];
    if body.len() != count * 8 {
        return Err(Error::Parse(format!(
            "{rows}x{cols} matrix needs {} payload bytes, found {}",
            count * 8,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseMatrix::new(rows as usize, cols as usize, data)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    if is_binary(path) {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        parse_binary_matrix(&bytes)
    } else {
        parse_text_matrix(&std::fs::read_to_string(path)?)
    }
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);
    if is_binary(path) {
        w.write_all(&(m.rows() as u64).to_le_bytes())?;
        w.write_all(&(m.cols() as u64).to_le_bytes())?;
        for v in m.as_slice() {
            w.write_all(&v.to_le_bytes())?;
        }
    } else {
        for i in 0..m.rows() {
            let line: Vec<String> = m.row(i).iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a vector stored as a single row or a single column.
pub fn read_vector(path: impl AsRef<Path>) -> Result<Vector> {
    let m = read_matrix(path)?;
    if m.rows() != 1 && m.cols() != 1 {
        return Err(Error::Parse(format!(
            "expected a vector, found a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    Vector::new(m.into_vec())
}

/// Writes a vector as an `n×1` column.
pub fn write_vector(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    write_matrix(path, &DenseMatrix::new(v.len(), 1, v.to_vec())?)
}

/// Writes one CSV row per record. `true_r2` is empty when unknown. Floats use
/// the shortest representation that round-trips.
pub fn write_trace_csv<W: Write>(w: W, records: &[IterRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRACE_HEADER)?;
    for r in records {
        out.write_record([
            r.k.to_string(),
            r.lambda.to_string(),
            r.r2.to_string(),
            r.rho.to_string(),
            r.iota.to_string(),
            r.lo.to_string(),
            r.hi.to_string(),
            r.stopped.to_string(),
            r.true_r2.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_trace_csv(path: impl AsRef<Path>, records: &[IterRecord]) -> Result<()> {
    write_trace_csv(File::create(path)?, records)
}

/// Writes serializable rows as CSV with headers taken from the field names.
pub fn write_rows_csv<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_rows_csv<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    write_rows_csv(File::create(path)?, rows)
}

pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Reads a trace CSV back into `(k, lambda, r2, rho, iota, lo, hi, stopped, true_r2)` tuples.
pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != TRACE_HEADER {
        return Err(Error::Parse(format!("unexpected trace header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rdr.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, serde::Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub lambda: usize,
    pub r2: f64,
    pub rho: f64,
    pub iota: f64,
    pub lo: f64,
    pub hi: f64,
    pub stopped: bool,
    pub true_r2: Option<f64>,
}

/// Lines of `key = value`, `#` comments and blank lines ignored.
pub fn parse_key_values(reader: impl BufRead) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Parse(format!("line {}: empty key", i + 1)));
        }
        out.push((k.to_owned(), v.trim().to_owned()));
    }
    Ok(out)
}
