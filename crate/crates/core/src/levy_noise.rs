//! Driving Lévy noise: zero-mean two-sided processes with finite variance
//! and no Gaussian part.
//!
//! Two families are supported: the compensated Gamma process, where the
//! increment over `dt` is `Gamma(a*dt, rate b) - a*dt/b`, and a compensated
//! compound Poisson process. The Gamma parameterization is (shape, rate)
//! throughout: the increment over one unit of time has shape `a` and rate
//! `b`, so `E[L(1)^2] = a/b^2`.

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Jump-size distribution of the compound Poisson driver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum JumpDist {
    Normal { mean: f64, sd: f64 },
    Exponential { rate: f64 },
}

impl JumpDist {
    fn mean(&self) -> f64 {
        match *self {
            JumpDist::Normal { mean, .. } => mean,
            JumpDist::Exponential { rate } => 1.0 / rate,
        }
    }
    fn second_moment(&self) -> f64 {
        match *self {
            JumpDist::Normal { mean, sd } => mean * mean + sd * sd,
            JumpDist::Exponential { rate } => 2.0 / (rate * rate),
        }
    }
    fn validate(&self) -> Result<()> {
        match *self {
            JumpDist::Normal { sd, .. } if sd <= 0.0 => {
                Err(Error::parameter(format!("normal jump sd must be > 0, got {sd}")))
            }
            JumpDist::Exponential { rate } if rate <= 0.0 => {
                Err(Error::parameter(format!("exponential jump rate must be > 0, got {rate}")))
            }
            _ => Ok(()),
        }
    }
    /// Characteristic function of a single jump.
    fn char_fn(&self, u: f64) -> Complex<f64> {
        match *self {
            JumpDist::Normal { mean, sd } => {
                (Complex::new(-0.5 * sd * sd * u * u, mean * u)).exp()
            }
            JumpDist::Exponential { rate } => {
                Complex::new(rate, 0.0) / Complex::new(rate, -u)
            }
        }
    }
}

/// Kind and parameters of the driving process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevyKind {
    CompensatedGamma { a: f64, b: f64 },
    CompoundPoissonCompensated { rate: f64, jump: JumpDist },
}

/// Validated description of the driving noise with its cached second moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(into = "LevyKind")]
pub struct LevySpec {
    kind: LevyKind,
    m2: f64,
}

impl From<LevySpec> for LevyKind {
    fn from(s: LevySpec) -> LevyKind {
        s.kind
    }
}

impl<'de> Deserialize<'de> for LevySpec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let kind = LevyKind::deserialize(de)?;
        LevySpec::new(kind).map_err(serde::de::Error::custom)
    }
}

impl LevySpec {
    pub fn new(kind: LevyKind) -> Result<Self> {
        let m2 = match kind {
            LevyKind::CompensatedGamma { a, b } => {
                if a <= 0.0 || b <= 0.0 {
                    return Err(Error::parameter(format!(
                        "gamma driver requires a > 0 and b > 0, got a={a}, b={b}"
                    )));
                }
                a / (b * b)
            }
            LevyKind::CompoundPoissonCompensated { rate, jump } => {
                if rate <= 0.0 {
                    return Err(Error::parameter(format!(
                        "compound poisson rate must be > 0, got {rate}"
                    )));
                }
                jump.validate()?;
                rate * jump.second_moment()
            }
        };
        Ok(LevySpec { kind, m2 })
    }

    pub fn compensated_gamma(a: f64, b: f64) -> Result<Self> {
        LevySpec::new(LevyKind::CompensatedGamma { a, b })
    }

    pub fn compound_poisson(rate: f64, jump: JumpDist) -> Result<Self> {
        LevySpec::new(LevyKind::CompoundPoissonCompensated { rate, jump })
    }

    pub fn kind(&self) -> LevyKind {
        self.kind
    }

    /// `E[L(1)^2]`, the per-unit-time variance of the driver.
    pub fn second_moment(&self) -> f64 {
        self.m2
    }

    /// Cumulant `psi(u) = int (e^{iux} - 1 - iux) nu(dx)` of the compensated
    /// process, so that `E[e^{iu L(t)}] = e^{t psi(u)}`.
    pub fn cumulant_psi(&self, u: f64) -> Complex<f64> {
        match self.kind {
            LevyKind::CompensatedGamma { a, b } => {
                // -a ln(1 - iu/b) - iua/b, principal branch
                let one_minus = Complex::new(1.0, -u / b);
                -Complex::new(a, 0.0) * one_minus.ln() - Complex::new(0.0, u * a / b)
            }
            LevyKind::CompoundPoissonCompensated { rate, jump } => {
                let phi = jump.char_fn(u);
                (phi - 1.0 - Complex::new(0.0, u * jump.mean())) * rate
            }
        }
    }
}

/// Identifies one reproducible random substream.
///
/// Distinct `stream_index` values select statistically independent ChaCha
/// streams of the same root seed, so replicas can run on any thread layout
/// and still reproduce bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedLineage {
    pub root_seed: u64,
    pub stream_index: u64,
}

/// Stream index offset reserved for coefficient sampling so that lambda
/// draws never collide with per-replica noise streams.
pub const LAMBDA_STREAM_BASE: u64 = 1 << 48;

impl SeedLineage {
    pub fn new(root_seed: u64, stream_index: u64) -> Self {
        SeedLineage { root_seed, stream_index }
    }

    /// Lineage of noise replica `r`.
    pub fn replica(root_seed: u64, r: u64) -> Self {
        SeedLineage::new(root_seed, r)
    }

    /// Lineage used for sampling random coefficients.
    pub fn lambda(root_seed: u64) -> Self {
        SeedLineage::new(root_seed, LAMBDA_STREAM_BASE)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

fn sample_one(kind: LevyKind, dt: f64, rng: &mut ChaCha8Rng) -> f64 {
    match kind {
        LevyKind::CompensatedGamma { a, b } => {
            let shape = a * dt;
            let g = Gamma::new(shape, 1.0 / b).expect("validated shape/scale");
            g.sample(rng) - shape / b
        }
        LevyKind::CompoundPoissonCompensated { rate, jump } => {
            let lam = rate * dt;
            let count = Poisson::new(lam).expect("validated rate").sample(rng) as u64;
            let mut sum = 0.0;
            match jump {
                JumpDist::Normal { mean, sd } => {
                    let d = Normal::new(mean, sd).expect("validated sd");
                    for _ in 0..count {
                        sum += d.sample(rng);
                    }
                }
                JumpDist::Exponential { rate: jr } => {
                    let d = Exp::new(jr).expect("validated jump rate");
                    for _ in 0..count {
                        sum += d.sample(rng);
                    }
                }
            }
            sum - lam * jump.mean()
        }
    }
}

/// Draw `n` independent increments `L((k+1)dt) - L(k dt)` of the compensated
/// process. Each has mean 0 and variance `dt * m2`.
pub fn sample_increments(spec: &LevySpec, lineage: SeedLineage, n: usize, dt: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::parameter("need at least one increment"));
    }
    if !(dt > 0.0) {
        return Err(Error::parameter(format!("dt must be > 0, got {dt}")));
    }
    let mut rng = lineage.rng();
    let kind = spec.kind;
    Ok((0..n).map(|_| sample_one(kind, dt, &mut rng)).collect())
}

/// Draw one increment per cell for a sequence of (possibly unequal) cell
/// widths. Used by the uniform grid and its geometric far-field extension
/// in a single pass so the stream consumption is well defined.
pub fn sample_increments_cells(
    spec: &LevySpec,
    lineage: SeedLineage,
    widths: &[f64],
) -> Result<Vec<f64>> {
    if widths.is_empty() {
        return Err(Error::parameter("need at least one cell"));
    }
    if let Some(w) = widths.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::parameter(format!("cell widths must be > 0, got {w}")));
    }
    let mut rng = lineage.rng();
    let kind = spec.kind;
    Ok(widths.iter().map(|&w| sample_one(kind, w, &mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn second_moments() {
        assert_relative_eq!(
            LevySpec::compensated_gamma(1.0, 2.0).unwrap().second_moment(),
            0.25
        );
        assert_relative_eq!(
            LevySpec::compensated_gamma(5.0, 15.0).unwrap().second_moment(),
            1.0 / 45.0
        );
        let cp = LevySpec::compound_poisson(1.0, JumpDist::Normal { mean: 0.0, sd: 1.0 }).unwrap();
        assert_relative_eq!(cp.second_moment(), 1.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(LevySpec::compensated_gamma(-1.0, 2.0).is_err());
        assert!(LevySpec::compensated_gamma(1.0, 0.0).is_err());
        assert!(LevySpec::compound_poisson(0.0, JumpDist::Exponential { rate: 1.0 }).is_err());
        assert!(LevySpec::compound_poisson(1.0, JumpDist::Normal { mean: 0.0, sd: -1.0 }).is_err());
        assert!(sample_increments(
            &LevySpec::compensated_gamma(1.0, 2.0).unwrap(),
            SeedLineage::new(1, 0),
            10,
            0.0
        )
        .is_err());
    }

    #[test]
    fn gamma_unit_increments_match_moments() {
        let spec = LevySpec::compensated_gamma(1.0, 2.0).unwrap();
        let n = 1_000_000;
        let xs = sample_increments(&spec, SeedLineage::new(42, 0), n, 1.0).unwrap();
        let (mean, var) = mean_var(&xs);
        let m2 = spec.second_moment();
        // 4 sigma gates from the exact moments of the exponential distribution
        let mean_tol = 4.0 * (m2 / n as f64).sqrt();
        assert!(mean.abs() < mean_tol, "mean {mean} beyond {mean_tol}");
        let var_of_sq = 0.5; // Var[(G - 1/2)^2] for G ~ Gamma(1, rate 2)
        let var_tol = 4.0 * (var_of_sq / n as f64).sqrt();
        assert!((var - 0.25).abs() < var_tol, "var {var} beyond 0.25 +- {var_tol}");
    }

    #[test]
    fn compound_poisson_moments() {
        let spec = LevySpec::compound_poisson(2.0, JumpDist::Exponential { rate: 1.5 }).unwrap();
        let n = 400_000;
        let xs = sample_increments(&spec, SeedLineage::new(7, 3), n, 0.5).unwrap();
        let (mean, var) = mean_var(&xs);
        let dt = 0.5;
        let target_var = dt * spec.second_moment();
        assert!(mean.abs() < 4.0 * (target_var / n as f64).sqrt());
        assert!((var - target_var).abs() < 0.02 * target_var);
    }

    #[test]
    fn replay_is_bit_exact() {
        let spec = LevySpec::compensated_gamma(5.0, 15.0).unwrap();
        let a = sample_increments(&spec, SeedLineage::new(9, 11), 1000, 1.0 / 128.0).unwrap();
        let b = sample_increments(&spec, SeedLineage::new(9, 11), 1000, 1.0 / 128.0).unwrap();
        assert_eq!(a, b);
        let c = sample_increments(&spec, SeedLineage::new(9, 12), 1000, 1.0 / 128.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_draw_replays() {
        let spec = LevySpec::compensated_gamma(1.0, 2.0).unwrap();
        let a = sample_increments(&spec, SeedLineage::new(3, 0), 1, 1.0).unwrap();
        let b = sample_increments(&spec, SeedLineage::new(3, 0), 1, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cell_widths_consume_one_draw_each() {
        let spec = LevySpec::compensated_gamma(1.0, 2.0).unwrap();
        let cells = sample_increments_cells(&spec, SeedLineage::new(5, 0), &[0.5, 1.0, 2.0]).unwrap();
        assert_eq!(cells.len(), 3);
        assert!(cells.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn psi_at_zero_vanishes() {
        for spec in [
            LevySpec::compensated_gamma(5.0, 15.0).unwrap(),
            LevySpec::compound_poisson(1.5, JumpDist::Normal { mean: 0.3, sd: 2.0 }).unwrap(),
        ] {
            let z = spec.cumulant_psi(0.0);
            assert!(z.norm() < 1e-15);
        }
    }

    #[test]
    fn psi_second_derivative_is_minus_m2() {
        // central finite difference with step 1e-4
        for spec in [
            LevySpec::compensated_gamma(1.0, 2.0).unwrap(),
            LevySpec::compensated_gamma(5.0, 15.0).unwrap(),
            LevySpec::compound_poisson(2.0, JumpDist::Exponential { rate: 1.5 }).unwrap(),
        ] {
            let hstep = 1e-4;
            let dd = (spec.cumulant_psi(hstep) - 2.0 * spec.cumulant_psi(0.0)
                + spec.cumulant_psi(-hstep))
                / (hstep * hstep);
            assert!(
                (dd.re + spec.second_moment()).abs() < 1e-5 * spec.second_moment().max(1.0),
                "psi''(0) = {dd}, m2 = {}",
                spec.second_moment()
            );
            assert!(dd.im.abs() < 1e-6);
        }
    }

    #[test]
    fn psi_conjugate_symmetry() {
        let spec = LevySpec::compensated_gamma(5.0, 15.0).unwrap();
        for &u in &[0.1, 0.5, 1.0, 3.0] {
            let a = spec.cumulant_psi(u);
            let b = spec.cumulant_psi(-u).conj();
            assert_relative_eq!(a.re, b.re, max_relative = 1e-12);
            assert_relative_eq!(a.im, b.im, max_relative = 1e-12);
        }
    }

    #[test]
    fn empirical_char_function_matches_exp_psi() {
        let spec = LevySpec::compensated_gamma(5.0, 15.0).unwrap();
        let n = 1_000_000;
        let xs = sample_increments(&spec, SeedLineage::new(2024, 0), n, 1.0).unwrap();
        for &u in &[0.5, 1.0, 2.0] {
            let mut acc = Complex::new(0.0, 0.0);
            for &x in &xs {
                acc += Complex::new(0.0, u * x).exp();
            }
            let emp = acc / n as f64;
            let target = spec.cumulant_psi(u).exp();
            // componentwise MC standard errors
            let se = (1.0 / n as f64).sqrt();
            assert!((emp.re - target.re).abs() < 4.0 * se, "re at u={u}");
            assert!((emp.im - target.im).abs() < 4.0 * se, "im at u={u}");
        }
    }

    #[test]
    fn spec_serde_round_trip() {
        let spec = LevySpec::compensated_gamma(5.0, 15.0).unwrap();
        let s = serde_json::to_string(&spec).unwrap();
        let back: LevySpec = serde_json::from_str(&s).unwrap();
        assert_eq!(spec, back);
        assert!(serde_json::from_str::<LevySpec>(r#"{"kind":"compensated_gamma","a":-1.0,"b":2.0}"#).is_err());
    }
}
