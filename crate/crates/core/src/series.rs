//! Uniformly sampled real-valued sequences and their CSV form.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// What one sample step means in the generating system's own time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimestepSemantics {
    ReservoirStep,
    MgTimeUnit,
    LorenzTimeUnit,
}

/// A uniformly sampled sequence. `dt` is the native time advanced by one
/// sample (1.0 for plain reservoir steps, the integrator step otherwise).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeries<T: Scalar> {
    pub values: Vec<T>,
    pub semantics: TimestepSemantics,
    pub dt: T,
}

impl<T: Scalar> TimeSeries<T> {
    pub fn new(values: Vec<T>, semantics: TimestepSemantics, dt: T) -> Result<Self> {
        if !dt.is_finite() || dt <= T::zero() {
            return Err(Error::invalid("dt must be positive and finite"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("time series contains non-finite values"));
        }
        Ok(Self { values, semantics, dt })
    }

    /// Plain reservoir-step series with unit dt.
    pub fn steps(values: Vec<T>) -> Self {
        Self {
            values,
            semantics: TimestepSemantics::ReservoirStep,
            dt: T::one(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sub-series over `range`, keeping timestep semantics.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            values: self.values[start..end].to_vec(),
            semantics: self.semantics,
            dt: self.dt,
        }
    }

    /// Writes the one-column CSV form. The header cell names the series
    /// (task and parameters), so files are self-describing.
    pub fn write_csv<W: Write>(&self, mut w: W, header: &str) -> std::io::Result<()> {
        writeln!(w, "{}", header)?;
        for v in &self.values {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path, header: &str) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file), header)
    }
}

/// Reads a one-column CSV written by [`TimeSeries::write_csv`]. The first
/// line is treated as a header; `dt` defaults to 1 reservoir step.
pub fn read_series_csv<T: Scalar>(path: &Path) -> Result<TimeSeries<T>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::invalid(format!("cannot open {}: {e}", path.display())))?;
    let mut values = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::invalid(format!("read error: {e}")))?;
        let trimmed = line.trim();
        if i == 0 || trimmed.is_empty() {
            continue; // header
        }
        let v: f64 = trimmed
            .parse()
            .map_err(|_| Error::invalid(format!("line {}: not a number: {trimmed}", i + 1)))?;
        values.push(T::of(v));
    }
    TimeSeries::new(values, TimestepSemantics::ReservoirStep, T::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_values() {
        let err = TimeSeries::new(vec![1.0, f64::NAN], TimestepSemantics::ReservoirStep, 1.0);
        assert!(err.is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let dir = std::env::temp_dir().join("ringrc-series-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("s.csv");
        let s = TimeSeries::steps(vec![0.5, -0.25, 1.0]);
        s.write_csv_file(&path, "sine nu=0.1").unwrap();
        let back: TimeSeries<f64> = read_series_csv(&path).unwrap();
        assert_eq!(back.values, s.values);
    }
}
