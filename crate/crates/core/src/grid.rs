//! Sampling grids and path ensembles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Left-truncation rule for the improper integrals: the number of mesh steps
/// kept below the integration window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Truncation {
    /// Fixed number of steps.
    Steps { steps: u64 },
    /// `a_n = n^2` (the default used for all figure parameterizations).
    NSquared,
    /// `a_n = n^((2-d)/(1-d))`, the rate-optimal choice. The exponent is
    /// read as (2-d)/(1-d); treat printed sources of this rule with care.
    OptimalRate,
}

/// Uniform time grid `k/n` with horizon `T` and truncation depth for the
/// two-sided integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub n: u32,
    pub horizon_t: f64,
    #[serde(default = "default_trunc")]
    pub trunc: Truncation,
}

fn default_trunc() -> Truncation {
    Truncation::NSquared
}

impl SampleGrid {
    pub fn new(n: u32, horizon_t: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::parameter(format!("mesh density n must be >= 1, got {n}")));
        }
        if !(horizon_t > 0.0) {
            return Err(Error::parameter(format!("horizon must be > 0, got {horizon_t}")));
        }
        Ok(SampleGrid {
            n,
            horizon_t,
            trunc: Truncation::NSquared,
        })
    }

    pub fn with_trunc(mut self, trunc: Truncation) -> Self {
        self.trunc = trunc;
        self
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// Index of the last grid point, `floor(n T)` with a guard against
    /// floating-point representation of integral horizons.
    pub fn last_index(&self) -> usize {
        (self.n as f64 * self.horizon_t + 1e-9).floor() as usize
    }

    pub fn times(&self) -> Vec<f64> {
        let n = self.n as f64;
        (0..=self.last_index()).map(|j| j as f64 / n).collect()
    }

    /// Truncation step count `a_n` resolved for memory parameter `d`.
    pub fn trunc_steps(&self, d: f64) -> u64 {
        match self.trunc {
            Truncation::Steps { steps } => steps.max(1),
            Truncation::NSquared => (self.n as u64) * (self.n as u64),
            Truncation::OptimalRate => {
                let expnt = (2.0 - d) / (1.0 - d);
                (self.n as f64).powf(expnt).ceil() as u64
            }
        }
    }

    /// Truncation depth in time units, `a_n / n`.
    pub fn trunc_depth(&self, d: f64) -> f64 {
        self.trunc_steps(d) as f64 * self.dt()
    }
}

/// Geometric far-field cells `[left, left+width)` covering
/// `[-target_depth, -start_depth)`, ordered by increasing time. The first
/// (deepest) cell is clipped so the cover starts exactly at the target
/// depth; widths grow by `ratio` towards the past starting from
/// `first_width` at the shallow edge.
pub fn geometric_cells(
    start_depth: f64,
    target_depth: f64,
    first_width: f64,
    ratio: f64,
) -> Vec<(f64, f64)> {
    assert!(target_depth > start_depth && first_width > 0.0 && ratio > 1.0);
    let mut cells = Vec::new();
    let mut right = -start_depth;
    let mut width = first_width;
    while right > -target_depth {
        let left = (right - width).max(-target_depth);
        cells.push((left, right - left));
        right = left;
        width *= ratio;
    }
    cells.reverse();
    cells
}

/// Matrix of simulated sample paths: `values[r][j]` is replica `r` at
/// `times[j]`. Replica `r` is always generated from `stream_index = r` of
/// `root_seed`, so the ensemble is reproducible independent of scheduling.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub label: String,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub root_seed: u64,
}

impl PathEnsemble {
    pub fn new(label: impl Into<String>, times: Vec<f64>, values: Vec<Vec<f64>>, root_seed: u64) -> Result<Self> {
        let width = times.len();
        if values.iter().any(|row| row.len() != width) {
            return Err(Error::parameter("ragged ensemble: all rows must match the time grid"));
        }
        Ok(PathEnsemble {
            label: label.into(),
            times,
            values,
            root_seed,
        })
    }

    pub fn replicas(&self) -> usize {
        self.values.len()
    }

    /// Index of a grid time, requiring it to be present on the grid.
    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&x| (x - t).abs() < 1e-9)
            .ok_or_else(|| Error::Range(format!("time {t} not on the sampled grid")))
    }

    pub fn column(&self, j: usize) -> Result<Vec<f64>> {
        if j >= self.times.len() {
            return Err(Error::Range(format!(
                "column {j} beyond grid of {} points",
                self.times.len()
            )));
        }
        Ok(self.values.iter().map(|row| row[j]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_basics() {
        let g = SampleGrid::new(128, 1.0).unwrap();
        assert_eq!(g.last_index(), 128);
        assert_eq!(g.times().len(), 129);
        assert_eq!(g.trunc_steps(0.25), 128 * 128);
        assert!((g.trunc_depth(0.25) - 128.0).abs() < 1e-12);
        assert!(SampleGrid::new(0, 1.0).is_err());
        assert!(SampleGrid::new(4, -1.0).is_err());
    }

    #[test]
    fn optimal_rate_exponent() {
        let g = SampleGrid::new(128, 1.0)
            .unwrap()
            .with_trunc(Truncation::OptimalRate);
        // n^((2-d)/(1-d)) at d=0.25: 128^(7/3)
        let expect = 128f64.powf(7.0 / 3.0).ceil() as u64;
        assert_eq!(g.trunc_steps(0.25), expect);
    }

    #[test]
    fn geometric_cells_cover_contiguously() {
        let cells = geometric_cells(256.0, 1e5, 0.5, 1.05);
        let mut right = -1e5f64;
        for &(left, w) in &cells {
            assert!((left - right).abs() < 1e-6 || right == -1e5);
            assert!(w > 0.0);
            right = left + w;
        }
        assert!((right - (-256.0)).abs() < 1e-9);
        assert_eq!(cells.first().unwrap().0, -1e5);
    }

    #[test]
    fn ensemble_rejects_ragged_rows() {
        let r = PathEnsemble::new("x", vec![0.0, 1.0], vec![vec![0.0, 1.0], vec![0.0]], 0);
        assert!(r.is_err());
    }
}
