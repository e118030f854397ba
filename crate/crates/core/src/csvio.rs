//! CSV export of paths and coefficient vectors.
//!
//! Values are printed with Rust's shortest round-trip float formatting, so a
//! file parses back to bit-identical doubles and identical runs produce
//! byte-identical files.

use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};
use crate::flou::LambdaSample;
use crate::grid::PathEnsemble;

/// Write `t,rep_0,...,rep_{R-1}` with one row per grid time.
pub fn write_paths(mut w: impl Write, ens: &PathEnsemble) -> io::Result<()> {
    write!(w, "t")?;
    for r in 0..ens.replicas() {
        write!(w, ",rep_{r}")?;
    }
    writeln!(w)?;
    for (j, t) in ens.times.iter().enumerate() {
        write!(w, "{t}")?;
        for row in &ens.values {
            write!(w, ",{}", row[j])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// One-column export of a coefficient vector for reproducibility.
pub fn write_lambda(mut w: impl Write, sample: &LambdaSample) -> io::Result<()> {
    writeln!(w, "lambda")?;
    for l in &sample.values {
        writeln!(w, "{l}")?;
    }
    Ok(())
}

/// Parse a path CSV back into times and replica rows.
pub fn read_paths(r: impl BufRead) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parameter("empty csv"))?
        .map_err(|e| Error::parameter(format!("io: {e}")))?;
    let cols = header.split(',').count();
    if cols < 2 || !header.starts_with("t,") {
        return Err(Error::parameter("expected header t,rep_0,..."));
    }
    let replicas = cols - 1;
    let mut times = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); replicas];
    for line in lines {
        let line = line.map_err(|e| Error::parameter(format!("io: {e}")))?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let t: f64 = parts
            .next()
            .unwrap()
            .parse()
            .map_err(|e| Error::parameter(format!("bad time field: {e}")))?;
        times.push(t);
        for row in values.iter_mut() {
            let v: f64 = parts
                .next()
                .ok_or_else(|| Error::parameter("short row"))?
                .parse()
                .map_err(|e| Error::parameter(format!("bad value field: {e}")))?;
            row.push(v);
        }
    }
    Ok((times, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let times = vec![0.0, 0.1 + 0.2, 1.0 / 3.0];
        let values = vec![
            vec![1.0, -2.5e-300, std::f64::consts::PI],
            vec![0.1, 7.0e300, -0.0],
        ];
        let ens = PathEnsemble::new("x", times.clone(), values.clone(), 1).unwrap();
        let mut buf = Vec::new();
        write_paths(&mut buf, &ens).unwrap();
        let (t2, v2) = read_paths(buf.as_slice()).unwrap();
        assert_eq!(times, t2);
        assert_eq!(values, v2);
    }

    #[test]
    fn identical_ensembles_produce_identical_bytes() {
        let ens = PathEnsemble::new("x", vec![0.0, 0.5], vec![vec![1.0, 2.0]], 9).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_paths(&mut a, &ens).unwrap();
        write_paths(&mut b, &ens).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_malformed_header() {
        assert!(read_paths("time,x\n0,1\n".as_bytes()).is_err());
    }
}
