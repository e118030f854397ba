//! Monte Carlo estimation and verification harness.
//!
//! Estimators are plain cross-replica reductions in fixed replica order, so
//! every statistic is invariant under thread scheduling and replica
//! reordering. Verdicts separate statistical noise (a `k_sigma * stderr`
//! band) from discretization bias (a relative `allowance` that halves when
//! the mesh doubles).

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grid::PathEnsemble;
use crate::CReal;

/// Minimum replica count for any moment estimate.
pub const MIN_REPLICAS: usize = 30;

/// Default width of the statistical gate in standard errors.
pub const DEFAULT_K_SIGMA: f64 = 4.0;

/// Default relative discretization allowance at the reference mesh.
pub const DEFAULT_ALLOWANCE: f64 = 0.05;

/// One verified quantity: Monte Carlo estimate against a closed-form target.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentReport {
    pub quantity: String,
    pub params: Value,
    pub mc_estimate: f64,
    pub stderr: f64,
    pub target: f64,
    pub k_sigma: f64,
    pub allowance: f64,
    /// Combined absolute tolerance `k_sigma * stderr + allowance * |target|`.
    pub tolerance: f64,
    pub pass: bool,
}

impl MomentReport {
    pub fn evaluate(
        quantity: impl Into<String>,
        params: Value,
        mc_estimate: f64,
        stderr: f64,
        target: f64,
        k_sigma: f64,
        allowance: f64,
    ) -> Self {
        let tolerance = k_sigma * stderr + allowance * target.abs();
        MomentReport {
            quantity: quantity.into(),
            params,
            mc_estimate,
            stderr,
            target,
            k_sigma,
            allowance,
            tolerance,
            pass: (mc_estimate - target).abs() <= tolerance,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{}: {} mc={:.6e} target={:.6e} stderr={:.2e} tol={:.2e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.quantity,
            self.mc_estimate,
            self.target,
            self.stderr,
            self.tolerance
        )
    }
}

/// Residuals along one convergence axis (aggregation size, alpha, or mesh).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub axis: Vec<f64>,
    pub residuals: Vec<f64>,
    pub stderr: Vec<f64>,
    /// True iff the residuals strictly decrease along the axis.
    pub monotone: bool,
}

impl ConvergenceTable {
    pub fn new(axis: Vec<f64>, residuals: Vec<f64>, stderr: Vec<f64>) -> Self {
        assert_eq!(axis.len(), residuals.len());
        assert_eq!(axis.len(), stderr.len());
        let monotone = residuals.windows(2).all(|w| w[1] < w[0]);
        ConvergenceTable {
            axis,
            residuals,
            stderr,
            monotone,
        }
    }

    /// Column means and standard errors of per-replica residual rows.
    pub fn from_samples(axis: Vec<f64>, per_replica: &[Vec<f64>]) -> Self {
        let r = per_replica.len().max(1) as f64;
        let cols = axis.len();
        let mut mean = vec![0.0; cols];
        for row in per_replica {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= r;
        }
        let mut se = vec![0.0; cols];
        if per_replica.len() > 1 {
            for row in per_replica {
                for ((s, v), m) in se.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            for s in se.iter_mut() {
                *s = (*s / (r - 1.0) / r).sqrt();
            }
        }
        ConvergenceTable::new(axis, mean, se)
    }
}

fn check_replicas(ens: &PathEnsemble) -> Result<()> {
    if ens.replicas() < MIN_REPLICAS {
        return Err(Error::Statistics(format!(
            "need at least {MIN_REPLICAS} replicas, got {}",
            ens.replicas()
        )));
    }
    Ok(())
}

fn mean_stderr(samples: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = samples.clone().count() as f64;
    let mean = samples.clone().sum::<f64>() / n;
    let var = samples.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Cross-replica moment of order 1 or 2 (uncentered) at one grid column.
pub fn ensemble_moment(ens: &PathEnsemble, t_index: usize, order: u8) -> Result<(f64, f64)> {
    check_replicas(ens)?;
    if !(order == 1 || order == 2) {
        return Err(Error::parameter("moment order must be 1 or 2"));
    }
    let col = ens.column(t_index)?;
    let it = col.iter().map(move |&x| if order == 1 { x } else { x * x });
    Ok(mean_stderr(it))
}

/// Cross-replica product moment `E[X(t_i) X(t_j)]` (uncentered covariance of
/// a centered process).
pub fn ensemble_cross_moment(ens: &PathEnsemble, i: usize, j: usize) -> Result<(f64, f64)> {
    check_replicas(ens)?;
    let a = ens.column(i)?;
    let b = ens.column(j)?;
    let prods: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    Ok(mean_stderr(prods.iter().copied()))
}

/// Covariance between one fixed base time and `base + lag` for each lag.
pub fn empirical_autocovariance(
    ens: &PathEnsemble,
    base_index: usize,
    lag_indices: &[usize],
) -> Result<Vec<(f64, f64)>> {
    check_replicas(ens)?;
    lag_indices
        .iter()
        .map(|&lag| ensemble_cross_moment(ens, base_index, base_index + lag))
        .collect()
}

/// Autocovariance averaged over every admissible origin in `base_range`
/// within each replica, then across replicas. The per-replica averaging
/// exploits stationarity to cut the variance of long-lag estimates; the
/// standard error is taken across replicas, which remain independent.
pub fn autocovariance_origin_avg(
    ens: &PathEnsemble,
    base_range: (usize, usize),
    lag_indices: &[usize],
) -> Result<Vec<(f64, f64)>> {
    check_replicas(ens)?;
    let (b0, b1) = base_range;
    let width = ens.times.len();
    let max_lag = lag_indices.iter().copied().max().unwrap_or(0);
    if b1 <= b0 || b1 + max_lag > width {
        return Err(Error::Range(format!(
            "origin range [{b0},{b1}) with max lag {max_lag} exceeds grid of {width}"
        )));
    }
    let mut out = Vec::with_capacity(lag_indices.len());
    for &lag in lag_indices {
        let per_rep: Vec<f64> = ens
            .values
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                for b in b0..b1 {
                    acc += row[b] * row[b + lag];
                }
                acc / (b1 - b0) as f64
            })
            .collect();
        out.push(mean_stderr(per_rep.iter().copied()));
    }
    Ok(out)
}

/// Least-squares fit of `log cov` against `log lag`; all covariances must be
/// strictly positive (failures are reported, never dropped).
pub fn fit_tail_exponent(lags: &[f64], cov: &[f64]) -> Result<(f64, f64, f64)> {
    if lags.len() != cov.len() || lags.len() < 2 {
        return Err(Error::Statistics("need at least two (lag, cov) pairs".into()));
    }
    if let Some((i, &c)) = cov.iter().enumerate().find(|(_, &c)| c <= 0.0) {
        return Err(Error::Statistics(format!(
            "non-positive covariance {c} at lag {} cannot enter a log-log fit",
            lags[i]
        )));
    }
    let xs: Vec<f64> = lags.iter().map(|l| l.ln()).collect();
    let ys: Vec<f64> = cov.iter().map(|c| c.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Statistics("degenerate lag set".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((slope, intercept, r2))
}

/// Empirical characteristic function `E[exp(i sum_j theta_j X(t_j))]` with
/// componentwise standard errors.
pub fn empirical_char_function(
    ens: &PathEnsemble,
    time_indices: &[usize],
    thetas: &[f64],
) -> Result<(CReal, f64, f64)> {
    check_replicas(ens)?;
    if time_indices.len() != thetas.len() || thetas.is_empty() {
        return Err(Error::parameter(
            "need matching nonempty theta and time index vectors",
        ));
    }
    let width = ens.times.len();
    if let Some(&bad) = time_indices.iter().find(|&&i| i >= width) {
        return Err(Error::Range(format!("time index {bad} beyond grid")));
    }
    let r = ens.replicas() as f64;
    let mut sum = Complex::new(0.0, 0.0);
    let mut sum_sq = (0.0, 0.0);
    for row in &ens.values {
        let phase: f64 = time_indices
            .iter()
            .zip(thetas)
            .map(|(&i, &th)| th * row[i])
            .sum();
        let z = Complex::new(0.0, phase).exp();
        sum += z;
        sum_sq.0 += z.re * z.re;
        sum_sq.1 += z.im * z.im;
    }
    let mean = sum / r;
    let se_re = ((sum_sq.0 / r - mean.re * mean.re).max(0.0) / r).sqrt();
    let se_im = ((sum_sq.1 / r - mean.im * mean.im).max(0.0) / r).sqrt();
    Ok((mean, se_re, se_im))
}

/// Monte Carlo `E[(A(t) - B(t))^2]` for two ensembles driven by identical
/// noise lineages.
pub fn coupled_l2_error(ens_a: &PathEnsemble, ens_b: &PathEnsemble, t_index: usize) -> Result<(f64, f64)> {
    if ens_a.root_seed != ens_b.root_seed {
        return Err(Error::Coupling(format!(
            "ensembles disagree on the noise root seed ({} vs {})",
            ens_a.root_seed, ens_b.root_seed
        )));
    }
    if ens_a.replicas() != ens_b.replicas() {
        return Err(Error::Coupling("ensembles disagree on replica count".into()));
    }
    check_replicas(ens_a)?;
    let a = ens_a.column(t_index)?;
    let b = ens_b.column(t_index)?;
    let sq: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).collect();
    Ok(mean_stderr(sq.iter().copied()))
}

/// Largest ratio `E[(X(t) - X(s))^2] / (t-s)^{1+2d}` over adjacent dyadic
/// pairs of the grid, the empirical form of the tightness increment bound.
pub fn increment_bound_check(ens: &PathEnsemble, d: f64) -> Result<f64> {
    check_replicas(ens)?;
    let width = ens.times.len();
    if width < 3 {
        return Err(Error::parameter("need at least three grid points"));
    }
    let span = width - 1;
    let r = ens.replicas() as f64;
    let mut worst: f64 = 0.0;
    let mut level_step = span;
    while level_step >= 1 {
        let mut start = 0;
        while start + level_step <= span {
            let (i, j) = (start, start + level_step);
            let mut acc = 0.0;
            for row in &ens.values {
                let diff = row[j] - row[i];
                acc += diff * diff;
            }
            let dt = ens.times[j] - ens.times[i];
            let ratio = acc / r / dt.powf(1.0 + 2.0 * d);
            worst = worst.max(ratio);
            start += level_step;
        }
        if level_step == 1 {
            break;
        }
        level_step /= 2;
    }
    if !worst.is_finite() {
        return Err(Error::Statistics("increment ratio overflowed".into()));
    }
    Ok(worst)
}
