//! Fractional Lévy Ornstein-Uhlenbeck processes.
//!
//! `V^d(t) = int_{-inf}^t e^{lambda (t-u)} dL^d(u)` with `lambda < 0` is the
//! stationary solution of the Langevin equation driven by an fLp. Random
//! coefficients draw `-lambda ~ Gamma(1-h, rate alpha)`; the rate convention
//! is pinned by the Laplace transform `E[e^{lambda s}] = (alpha/(alpha+s))^{1-h}`,
//! which the tests verify by Monte Carlo.
//!
//! The aggregate `Z_m(t) = (1/m) sum_k V_k(t)` integrates one shared fLp
//! realization against the mixture kernel `f_m(s) = (1/m) sum_k e^{lambda_k s}`,
//! so all coordinates (and any limit-process run coupled to the same seed)
//! see the same noise.

use std::cell::RefCell;

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::conv;
use crate::error::{Error, Result};
use crate::flp::{check_d, FlpParams, FlpPath, FlpSimulator};
use crate::gmflou::kernel_g;
use crate::grid::SampleGrid;
use crate::levy_noise::{LevySpec, SeedLineage};
use crate::quad::{integrate, QuadCtrl};
use crate::scalar::Scalar;
use crate::special::gamma;

/// Gamma mixing parameters: `-lambda ~ Gamma(shape 1-h, rate alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingParams {
    pub h: f64,
    pub alpha: f64,
}

impl MixingParams {
    pub fn new(h: f64, alpha: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::parameter(format!("h must lie in (0, 1), got {h}")));
        }
        if !(alpha > 0.0) {
            return Err(Error::parameter(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(MixingParams { h, alpha })
    }

    /// Additional admissibility required by the limit process.
    pub fn check_limit_compatible(&self, d: f64) -> Result<()> {
        check_d(d)?;
        if self.h + d >= 0.5 {
            return Err(Error::parameter(format!(
                "h + d must be < 1/2 for the limit process, got h={} d={}",
                self.h, d
            )));
        }
        Ok(())
    }
}

/// Coefficients smaller than this in absolute value are resampled: a single
/// nearly non-mean-reverting coordinate makes the truncated stationary
/// integral meaningless at practical warmup depths.
pub const LAMBDA_FLOOR: f64 = 1e-6;

/// One i.i.d. draw of `m` mean-reversion coefficients, all strictly negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSample {
    pub values: Vec<f64>,
    pub mix: MixingParams,
    pub lineage: SeedLineage,
    /// Number of floor-violating draws that were redrawn (reported, not hidden).
    pub resampled: u64,
}

impl LambdaSample {
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    /// Largest coefficient (closest to zero), controlling the slowest decay.
    pub fn min_abs(&self) -> f64 {
        self.values.iter().map(|l| -l).fold(f64::INFINITY, f64::min)
    }
}

/// Draw `m` coefficients with `-lambda_k ~ Gamma(1-h, rate alpha)`.
pub fn sample_lambda(mix: MixingParams, m: usize, lineage: SeedLineage) -> Result<LambdaSample> {
    if m < 1 {
        return Err(Error::parameter("need at least one coefficient"));
    }
    let dist = Gamma::new(1.0 - mix.h, 1.0 / mix.alpha)
        .map_err(|e| Error::parameter(format!("gamma mixing distribution: {e}")))?;
    let mut rng = lineage.rng();
    let mut resampled = 0u64;
    let mut values = Vec::with_capacity(m);
    while values.len() < m {
        let x: f64 = dist.sample(&mut rng);
        if x < LAMBDA_FLOOR {
            resampled += 1;
            continue;
        }
        values.push(-x);
    }
    Ok(LambdaSample {
        values,
        mix,
        lineage,
        resampled,
    })
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda < 0.0) {
        return Err(Error::domain(format!(
            "mean reversion requires lambda < 0, got {lambda}"
        )));
    }
    Ok(())
}

/// Stationary variance `E[(V^d)^2] = C_d Gamma(2d) / (-lambda)^{2d+1}`.
pub fn variance_flou<S: Scalar>(lambda: S, d: S, m2: S) -> Result<S> {
    if !(lambda < S::zero()) {
        return Err(Error::domain(format!(
            "mean reversion requires lambda < 0, got {lambda}"
        )));
    }
    let cd = crate::flp::cd_constant(d, m2)?;
    let two = S::c(2.0);
    Ok(cd * gamma(two * d) / (-lambda).powf(two * d + S::one()))
}

/// Stationary variance of the aggregate from the exact O(m^2) double sum:
/// `(C_d/m^2) 2 Gamma(2d) sum_{k,j} 1 / (-(l_k + l_j) (-l_k)^{2d})`.
pub fn variance_aggregated(lambdas: &[f64], d: f64, m2: f64) -> Result<f64> {
    if lambdas.is_empty() {
        return Err(Error::parameter("empty coefficient vector"));
    }
    for &l in lambdas {
        check_lambda(l)?;
    }
    let cd = crate::flp::cd_constant(d, m2)?;
    let m = lambdas.len() as f64;
    let g2d = gamma(2.0 * d);
    let mut sum = 0.0;
    for &lk in lambdas {
        let wk = (-lk).powf(-2.0 * d);
        for &lj in lambdas {
            sum += wk / (-(lk + lj));
        }
    }
    Ok(cd / (m * m) * 2.0 * g2d * sum)
}

/// Closed form of one `(k, j)` integral `int int e^{l_k u + l_j v} |u-v|^{2d-1}`:
/// `Gamma(2d) [(-l_k)^{-2d} + (-l_j)^{-2d}] / (-(l_k + l_j))`.
pub fn exp_pair_closed_form(lk: f64, lj: f64, d: f64) -> f64 {
    gamma(2.0 * d) * ((-lk).powf(-2.0 * d) + (-lj).powf(-2.0 * d)) / (-(lk + lj))
}

/// Reference quadrature for [`exp_pair_closed_form`]: the double integral is
/// evaluated numerically with the diagonal singularity removed by the
/// substitution `w = |u - v|^{2d}`. Used to cross-check every term of the
/// aggregated variance without any simulation.
pub fn exp_pair_quadrature(lk: f64, lj: f64, d: f64, ctrl: &QuadCtrl) -> Result<f64> {
    check_lambda(lk)?;
    check_lambda(lj)?;
    check_d(d)?;
    // upper limit chosen so the neglected tail is ~ e^{-40}
    let upper = 40.0 / (-lk).min(-lj);
    let two_d = 2.0 * d;
    let inner = |u: f64| -> Result<f64> {
        // v < u branch: w = (u-v)^{2d}
        let left = integrate(
            |w: f64| (lj * (u - w.powf(1.0 / two_d))).exp(),
            0.0,
            u.powf(two_d),
            ctrl,
        )? / two_d;
        // v > u branch: w = (v-u)^{2d}
        let right = integrate(
            |w: f64| (lj * (u + w.powf(1.0 / two_d))).exp(),
            0.0,
            (upper - u).powf(two_d),
            ctrl,
        )? / two_d;
        Ok(left + right)
    };
    let inner_err: RefCell<Option<Error>> = RefCell::new(None);
    let outer = integrate(
        |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            match inner(u) {
                Ok(v) => (lk * u).exp() * v,
                Err(e) => {
                    inner_err.borrow_mut().get_or_insert(e);
                    0.0
                }
            }
        },
        0.0,
        upper,
        ctrl,
    );
    if let Some(e) = inner_err.into_inner() {
        return Err(e);
    }
    outer
}

/// Empirical mixture kernel `(1/m) sum_k e^{lambda_k s}`.
pub fn mixture_kernel_empirical(lambdas: &[f64], s: f64) -> f64 {
    assert!(s >= 0.0, "mixture kernel defined for s >= 0");
    lambdas.iter().map(|l| (l * s).exp()).sum::<f64>() / lambdas.len() as f64
}

/// Law-of-large-numbers limit of the mixture kernel,
/// `E[e^{lambda s}] = (alpha/(alpha+s))^{1-h}`.
pub fn mixture_kernel_limit(mix: MixingParams, s: f64) -> f64 {
    kernel_g(mix.alpha, mix.h, s)
}

/// Default warmup window for a fixed coefficient: deep enough that the
/// neglected tail `e^{lambda M}` sits far below Monte Carlo noise.
pub fn default_warmup(lambda: f64) -> f64 {
    (12.0 / lambda.abs()).max(20.0)
}

/// Hard cap on the warmup window. Gamma mixing puts mass near zero, so an
/// unlucky coefficient vector would otherwise demand an absurd window; the
/// residual variance deficit at the cap is `O(e^{2 lambda M})` per
/// coordinate and is reported via [`KernelFlouSimulator::warmup_clipped`].
pub const WARMUP_CAP: f64 = 3000.0;

/// Shared machinery: a lag kernel integrated against one fLp realization
/// over a sliding window of `window_steps` cells.
#[derive(Debug)]
pub struct KernelFlouSimulator {
    pub flp: FlpSimulator,
    weights: Vec<f64>,
    window_steps: usize,
    warmup_m: f64,
    warmup_clipped: bool,
}

impl KernelFlouSimulator {
    fn build(
        d: f64,
        spec: LevySpec,
        grid: SampleGrid,
        warmup_m: f64,
        warmup_clipped: bool,
        kernel: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        if !(warmup_m > 0.0) {
            return Err(Error::parameter(format!(
                "warmup window must be > 0, got {warmup_m}"
            )));
        }
        let params = FlpParams::new(d, spec)?;
        let window_steps = (warmup_m * grid.n as f64).ceil() as usize;
        let flp = FlpSimulator::new(params, grid, window_steps as u64)?;
        let dt = grid.dt();
        let weights: Vec<f64> = (1..=window_steps).map(|i| kernel(i as f64 * dt)).collect();
        Ok(KernelFlouSimulator {
            flp,
            weights,
            window_steps,
            warmup_m,
            warmup_clipped,
        })
    }

    pub fn warmup(&self) -> f64 {
        self.warmup_m
    }

    pub fn warmup_clipped(&self) -> bool {
        self.warmup_clipped
    }

    /// Evaluate on `[0, T]` against an already simulated fLp path, which must
    /// extend at least `window_steps` below zero.
    pub fn path_from_flp(&self, flp_path: &FlpPath) -> Result<Vec<f64>> {
        let needed = -(self.window_steps as i64);
        if flp_path.first_index > needed {
            return Err(Error::Coupling(format!(
                "fLp path starts at index {} but the kernel window needs {}",
                flp_path.first_index, needed
            )));
        }
        if flp_path.n != self.flp.grid.n {
            return Err(Error::Coupling("mesh mismatch between fLp path and kernel".into()));
        }
        let increments = flp_path.increments();
        let n_out = self.flp.grid.last_index() + 1;
        // output j: sum_i w[i] * dL^d_{j-i}; increments[p] is cell first_index+p
        let off = -1 - flp_path.first_index;
        Ok(conv::lag_convolve(&increments, &self.weights, off, n_out))
    }

    pub fn simulate(&self, lineage: SeedLineage) -> Result<Vec<f64>> {
        let path = self.flp.simulate(lineage)?;
        self.path_from_flp(&path)
    }

    /// Compile the windowed kernel at the given output times onto the raw
    /// driving increments. One replica of the result is a single weighted
    /// sum, which is the cheap way to estimate stationary moments at a few
    /// probe times.
    pub fn compiled_at(&self, times: &[f64]) -> Result<CompiledMoments> {
        let grid = self.flp.grid;
        let dt = grid.dt();
        let dlp_first = self.flp.first_index();
        let n_dlp = (grid.last_index() as i64 - dlp_first) as usize;
        let mut weights = Vec::with_capacity(times.len());
        for &t in times {
            if !(0.0..=grid.horizon_t + 1e-9).contains(&t) {
                return Err(Error::parameter(format!("output time {t} outside [0, T]")));
            }
            let j = (t / dt).ceil() as i64;
            let mut w = vec![0.0; n_dlp];
            for (q, wq) in w.iter_mut().enumerate() {
                let k = dlp_first + q as i64;
                let lag = j - k;
                if lag >= 1 && lag <= self.window_steps as i64 {
                    *wq = self.weights[(lag - 1) as usize];
                }
            }
            weights.push(crate::flp::compile_dlp_weights_to_raw(
                &w,
                self.flp.params.d,
                dt,
                dlp_first,
                self.flp.cell_first_index(),
                self.flp.cell_count(),
            ));
        }
        Ok(CompiledMoments {
            spec: self.flp.params.spec,
            dt,
            n_raw: self.flp.cell_count(),
            weights,
        })
    }
}

/// Kernel weights compiled onto raw driving increments: one replica is one
/// weighted sum per output time.
#[derive(Debug)]
pub struct CompiledMoments {
    spec: LevySpec,
    dt: f64,
    n_raw: usize,
    weights: Vec<Vec<f64>>,
}

impl CompiledMoments {
    pub fn simulate(&self, lineage: SeedLineage) -> Result<Vec<f64>> {
        let raw = crate::levy_noise::sample_increments(&self.spec, lineage, self.n_raw, self.dt)?;
        Ok(self
            .weights
            .iter()
            .map(|w| w.iter().zip(&raw).map(|(a, b)| a * b).sum())
            .collect())
    }
}

/// OU process with a fixed coefficient `lambda < 0`.
pub fn fixed_flou_simulator(
    lambda: f64,
    d: f64,
    spec: LevySpec,
    grid: SampleGrid,
    warmup_m: Option<f64>,
) -> Result<KernelFlouSimulator> {
    check_lambda(lambda)?;
    let m = warmup_m.unwrap_or_else(|| default_warmup(lambda));
    KernelFlouSimulator::build(d, spec, grid, m, false, |s| (lambda * s).exp())
}

/// Simulate one fixed-coefficient fLOU path on `[0, T]`.
pub fn simulate_flou_fixed(
    lambda: f64,
    d: f64,
    spec: LevySpec,
    grid: SampleGrid,
    warmup_m: Option<f64>,
    lineage: SeedLineage,
) -> Result<Vec<f64>> {
    fixed_flou_simulator(lambda, d, spec, grid, warmup_m)?.simulate(lineage)
}

/// Aggregate of `m` coordinates sharing one fLp realization; the kernel is
/// the empirical mixture `(1/m) sum e^{lambda_k s}`.
pub fn aggregated_simulator(
    lambdas: &LambdaSample,
    d: f64,
    spec: LevySpec,
    grid: SampleGrid,
    warmup_m: Option<f64>,
) -> Result<KernelFlouSimulator> {
    if lambdas.is_empty() {
        return Err(Error::parameter("aggregate needs at least one coordinate"));
    }
    for &l in &lambdas.values {
        check_lambda(l)?;
    }
    let (m, clipped) = match warmup_m {
        Some(m) => (m, false),
        None => {
            let want = default_warmup(-lambdas.min_abs());
            (want.min(WARMUP_CAP), want > WARMUP_CAP)
        }
    };
    let values = lambdas.values.clone();
    KernelFlouSimulator::build(d, spec, grid, m, clipped, move |s| {
        mixture_kernel_empirical(&values, s)
    })
}

/// Simulate one aggregated path, sampling a fresh coefficient vector from
/// the dedicated lambda stream of `lineage.root_seed`. Returns the path and
/// the coefficients that produced it.
pub fn simulate_aggregated(
    mix: MixingParams,
    m: usize,
    d: f64,
    spec: LevySpec,
    grid: SampleGrid,
    warmup_m: Option<f64>,
    lineage: SeedLineage,
) -> Result<(Vec<f64>, LambdaSample)> {
    let lambdas = sample_lambda(mix, m, SeedLineage::lambda(lineage.root_seed))?;
    let sim = aggregated_simulator(&lambdas, d, spec, grid, warmup_m)?;
    let path = sim.simulate(lineage)?;
    Ok((path, lambdas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn spec_g12() -> LevySpec {
        LevySpec::compensated_gamma(1.0, 2.0).unwrap()
    }

    #[test]
    fn mixing_params_validation() {
        assert!(MixingParams::new(0.0, 1.0).is_err());
        assert!(MixingParams::new(1.0, 1.0).is_err());
        assert!(MixingParams::new(0.12, 0.0).is_err());
        let mix = MixingParams::new(0.12, 1.0).unwrap();
        assert!(mix.check_limit_compatible(0.2).is_ok());
        assert!(mix.check_limit_compatible(0.38).is_err());
    }

    #[test]
    fn lambda_sample_moments_and_sign() {
        let mix = MixingParams::new(0.12, 1.0).unwrap();
        let m = 100_000;
        let s = sample_lambda(mix, m, SeedLineage::new(31, 7)).unwrap();
        assert!(s.values.iter().all(|&l| l < 0.0));
        let mean_neg = -s.values.iter().sum::<f64>() / m as f64;
        let target = (1.0 - mix.h) / mix.alpha;
        let stderr = ((1.0 - mix.h) / (mix.alpha * mix.alpha) / m as f64).sqrt();
        assert!(
            (mean_neg - target).abs() < 4.0 * stderr,
            "mean {mean_neg} vs {target} +- {stderr}"
        );
        // replay
        let s2 = sample_lambda(mix, m, SeedLineage::new(31, 7)).unwrap();
        assert_eq!(s.values, s2.values);
    }

    #[test]
    fn laplace_transform_pins_rate_convention() {
        let mix = MixingParams::new(0.12, 1.0).unwrap();
        let m = 1_000_000;
        let s = sample_lambda(mix, m, SeedLineage::new(400, 0)).unwrap();
        for &t in &[0.5, 1.0, 2.0] {
            let emp: f64 = s.values.iter().map(|l| (l * t).exp()).sum::<f64>() / m as f64;
            let target = mixture_kernel_limit(mix, t);
            let var: f64 = s
                .values
                .iter()
                .map(|l| ((l * t).exp() - emp).powi(2))
                .sum::<f64>()
                / (m as f64 - 1.0);
            let stderr = (var / m as f64).sqrt();
            assert!(
                (emp - target).abs() < 4.0 * stderr,
                "s={t}: emp {emp} vs {target} +- {stderr}"
            );
        }
    }

    #[test]
    fn variance_flou_values() {
        let v = variance_flou(-1.0f64, 0.25, 1.0).unwrap();
        assert_relative_eq!(v, 1.0 / 2f64.sqrt(), epsilon = 1e-12);
        // power-law scaling in -lambda
        let a = variance_flou(-1.3f64, 0.2, 1.0).unwrap();
        let b = variance_flou(-2.6f64, 0.2, 1.0).unwrap();
        assert_relative_eq!(b, a / 2f64.powf(1.4), max_relative = 1e-12);
        // m2 linearity
        let c = variance_flou(-1.0f64, 0.25, 2.0).unwrap();
        assert_relative_eq!(c, 2.0 * v, max_relative = 1e-13);
        // lambda -> -inf drives the variance to zero
        assert!(variance_flou(-1e6f64, 0.25, 1.0).unwrap() < 1e-8);
        assert!(variance_flou(0.0f64, 0.25, 1.0).is_err());
        assert!(variance_flou(1.0f64, 0.25, 1.0).is_err());
    }

    #[test]
    fn aggregated_variance_collapses_at_m1() {
        let v1 = variance_aggregated(&[-1.0], 0.25, 1.0).unwrap();
        assert_relative_eq!(v1, variance_flou(-1.0f64, 0.25, 1.0).unwrap(), max_relative = 1e-12);
        let v2 = variance_aggregated(&[-1.0, -1.0], 0.25, 1.0).unwrap();
        assert_relative_eq!(v2, v1, max_relative = 1e-12);
        assert!(variance_aggregated(&[-1.0, 0.5], 0.25, 1.0).is_err());
    }

    #[test]
    fn aggregated_variance_permutation_invariant() {
        let mix = MixingParams::new(0.12, 1.0).unwrap();
        let s = sample_lambda(mix, 40, SeedLineage::new(5, 0)).unwrap();
        let v1 = variance_aggregated(&s.values, 0.2, 0.25).unwrap();
        let mut rev = s.values.clone();
        rev.reverse();
        let v2 = variance_aggregated(&rev, 0.2, 0.25).unwrap();
        assert_relative_eq!(v1, v2, max_relative = 1e-12);
    }

    #[test]
    fn exp_pair_quadrature_matches_closed_form() {
        let ctrl = QuadCtrl::with_tol(1e-12, 1e-8);
        for &(lk, lj) in &[(-1.0, -1.0), (-0.5, -2.0), (-0.05, -1.3), (-3.0, -0.2)] {
            let q = exp_pair_quadrature(lk, lj, 0.2, &ctrl).unwrap();
            let c = exp_pair_closed_form(lk, lj, 0.2);
            assert_relative_eq!(q, c, max_relative = 1e-5);
        }
    }

    #[test]
    fn mixture_kernel_values() {
        let mix = MixingParams::new(0.12, 1.0).unwrap();
        assert_relative_eq!(mixture_kernel_limit(mix, 0.0), 1.0);
        assert_relative_eq!(mixture_kernel_limit(mix, 1.0), 2f64.powf(-0.88), max_relative = 1e-12);
        assert_relative_eq!(mixture_kernel_empirical(&[-1.0, -2.0], 0.0), 1.0);
        // LLN: empirical kernel approaches the limit as m grows
        let s_small = sample_lambda(mix, 100, SeedLineage::new(77, 0)).unwrap();
        let s_big = sample_lambda(mix, 10_000, SeedLineage::new(77, 1)).unwrap();
        for &t in &[0.5, 1.0, 2.0] {
            let lim = mixture_kernel_limit(mix, t);
            let e_small = (mixture_kernel_empirical(&s_small.values, t) - lim).abs();
            let e_big = (mixture_kernel_empirical(&s_big.values, t) - lim).abs();
            // errors shrink roughly like 1/sqrt(m); allow generous slack
            assert!(
                e_big < e_small,
                "t={t}: error did not shrink ({e_small} -> {e_big})"
            );
        }
    }

    #[test]
    fn fixed_flou_variance_and_stationarity() {
        let spec = spec_g12();
        let grid = SampleGrid::new(64, 1.0).unwrap();
        let sim = fixed_flou_simulator(-1.0, 0.25, spec, grid, Some(20.0)).unwrap();
        let reps = 400u64;
        let mut sq_half = 0.0;
        let mut sq_one = 0.0;
        for r in 0..reps {
            let path = sim.simulate(SeedLineage::replica(123, r)).unwrap();
            let j_half = 32;
            sq_half += path[j_half] * path[j_half];
            sq_one += path[64] * path[64];
        }
        let v_half = sq_half / reps as f64;
        let v_one = sq_one / reps as f64;
        let target = variance_flou(-1.0, 0.25, spec.second_moment()).unwrap();
        let stderr = target * (2.0 / reps as f64).sqrt();
        assert!(
            (v_one - target).abs() < 4.0 * stderr + 0.05 * target,
            "var {v_one} vs {target}"
        );
        // stationarity: the variances at the two probe times agree within noise
        assert!(
            (v_half - v_one).abs() < 8.0 * stderr,
            "stationarity: {v_half} vs {v_one}"
        );
    }

    #[test]
    fn aggregate_with_one_coordinate_equals_fixed() {
        let spec = spec_g12();
        let grid = SampleGrid::new(32, 1.0).unwrap();
        let mix = MixingParams::new(0.12, 1.0).unwrap();
        let lam = sample_lambda(mix, 1, SeedLineage::new(9, 0)).unwrap();
        let agg = aggregated_simulator(&lam, 0.2, spec, grid, Some(15.0)).unwrap();
        let fix = fixed_flou_simulator(lam.values[0], 0.2, spec, grid, Some(15.0)).unwrap();
        let a = agg.simulate(SeedLineage::new(1000, 4)).unwrap();
        let b = fix.simulate(SeedLineage::new(1000, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn warmup_cap_is_reported() {
        let spec = spec_g12();
        let grid = SampleGrid::new(16, 1.0).unwrap();
        let mix = MixingParams::new(0.12, 1.0).unwrap();
        let mut lam = sample_lambda(mix, 3, SeedLineage::new(2, 0)).unwrap();
        lam.values[0] = -1e-5; // forces 12/|lambda| far beyond the cap
        let sim = aggregated_simulator(&lam, 0.2, spec, grid, None).unwrap();
        assert!(sim.warmup_clipped());
        assert_relative_eq!(sim.warmup(), WARMUP_CAP);
    }

    #[test]
    fn compiled_moments_match_path_simulation() {
        let spec = spec_g12();
        let grid = SampleGrid::new(16, 1.0).unwrap();
        let sim = fixed_flou_simulator(-1.0, 0.25, spec, grid, Some(8.0)).unwrap();
        let compiled = sim.compiled_at(&[0.5, 1.0]).unwrap();
        for r in 0..5u64 {
            let lin = SeedLineage::new(808, r);
            let path = sim.simulate(lin).unwrap();
            let fast = compiled.simulate(lin).unwrap();
            assert_relative_eq!(path[8], fast[0], max_relative = 1e-9, epsilon = 1e-12);
            assert_relative_eq!(path[16], fast[1], max_relative = 1e-9, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_nonnegative_lambda() {
        let spec = spec_g12();
        let grid = SampleGrid::new(16, 1.0).unwrap();
        assert!(simulate_flou_fixed(0.5, 0.25, spec, grid, None, SeedLineage::new(0, 0)).is_err());
        assert!(simulate_flou_fixed(0.0, 0.25, spec, grid, None, SeedLineage::new(0, 0)).is_err());
    }

    #[test]
    fn deterministic_replay() {
        let spec = spec_g12();
        let grid = SampleGrid::new(32, 0.5).unwrap();
        let a = simulate_flou_fixed(-1.0, 0.25, spec, grid, Some(10.0), SeedLineage::new(6, 2)).unwrap();
        let b = simulate_flou_fixed(-1.0, 0.25, spec, grid, Some(10.0), SeedLineage::new(6, 2)).unwrap();
        assert_eq!(a, b);
    }
}
