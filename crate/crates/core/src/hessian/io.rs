//! Spectrum text export and a binary Hessian dump.
//!
//! Binary layout, little endian: `M: u64`, `lambda: f64`, then `M * M`
//! row-major `f64` entries.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// One line per eigenvalue: `index eigenvalue`.
pub fn write_spectrum(path: &Path, eigenvalues: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (k, e) in eigenvalues.iter().enumerate() {
        writeln!(w, "{k} {e:.17e}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_spectrum(path: &Path) -> Result<Vec<f64>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let idx: usize = parse(parts.next(), lineno)?;
        let val: f64 = parse(parts.next(), lineno)?;
        if idx != out.len() || parts.next().is_some() {
            return Err(Error::Format(format!("spectrum line {}: unexpected layout", lineno + 1)));
        }
        out.push(val);
    }
    Ok(out)
}

fn parse<T: std::str::FromStr>(tok: Option<&str>, lineno: usize) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Format(format!("spectrum line {}: cannot parse", lineno + 1)))
}

pub fn write_hessian(path: &Path, h: &Array2<f64>, lambda: f64) -> Result<()> {
    let m = h.nrows();
    if h.ncols() != m {
        return Err(Error::ShapeMismatch { expected: m, actual: h.ncols() });
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&(m as u64).to_le_bytes())?;
    w.write_all(&lambda.to_le_bytes())?;
    for v in h.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_hessian(path: &Path) -> Result<(Array2<f64>, f64)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 {
        return Err(Error::Format("Hessian file shorter than its header".into()));
    }
    let m = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let lambda = f64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let body = &bytes[16..];
    if m.checked_mul(m).and_then(|x| x.checked_mul(8)) != Some(body.len()) {
        return Err(Error::Format(format!("Hessian body has {} bytes, expected {m}x{m} doubles", body.len())));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let h = Array2::from_shape_vec((m, m), data).map_err(|e| Error::Format(e.to_string()))?;
    Ok((h, lambda))
}
