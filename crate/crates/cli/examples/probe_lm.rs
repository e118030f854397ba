//! Diagnostics for the long-memory slope checks. Not part of the test suite.

use std::time::Instant;

use gmflou_cli::battery::*;
use gmflou_cli::config::RunConfig;
use gmflou_core::flp::{increment_covariance_delta, vd_squared};
use gmflou_core::gmflou::covariance_z;
use gmflou_core::quad::QuadCtrl;
use gmflou_core::stats::fit_tail_exponent;

fn main() {
    let (h, d, m2) = (0.12, 0.2, 0.25);
    let alpha = SLOPE_ALPHA;

    // quadrature slope with relative-driven tolerance
    for rel in [1e-6, 1e-7, 1e-8] {
        let ctrl = QuadCtrl {
            abs_tol: 0.0,
            rel_tol: rel,
            max_intervals: 60_000,
        };
        let t0 = Instant::now();
        let covs: Result<Vec<f64>, _> = SLOPE_LAGS
            .iter()
            .map(|&t| covariance_z(t, alpha, h, d, m2, &ctrl))
            .collect();
        match covs {
            Ok(c) => {
                let (s, _, _) = fit_tail_exponent(&SLOPE_LAGS, &c).unwrap();
                println!("rel={rel:.0e}: slope={s:.6} rhos={c:?} [{:?}]", t0.elapsed());
            }
            Err(e) => println!("rel={rel:.0e}: ERROR {e}"),
        }
    }

    // exact covariance of the discretized scheme: rho_disc(lag) =
    // sum_{i,j} g(i dt) g(j dt) Cov(dL^d_{-i}, dL^d_{lag-j}) with the exact
    // increment covariance delta_d
    let n = 128usize;
    let dt = 1.0 / n as f64;
    let a_n = n * n;
    let var_inc = 2.0 * vd_squared(d, m2) * dt.powf(2.0 * d + 1.0);
    let t0 = Instant::now();
    // dcov[k] = Cov between increments k cells apart
    let max_lag_cells = (64.0 * n as f64) as usize + 2 * a_n + 2;
    let mut dcov = vec![0.0; max_lag_cells + 1];
    dcov[0] = var_inc;
    for (k, c) in dcov.iter_mut().enumerate().skip(1) {
        *c = increment_covariance_delta(d, k as u64, dt, m2);
    }
    let g = |s: f64| (alpha / (alpha + s)).powf(1.0 - h);
    let w: Vec<f64> = (1..=a_n).map(|i| g(i as f64 * dt)).collect();
    let mut lns = Vec::new();
    let mut lnr = Vec::new();
    for &lag_t in SLOPE_LAGS.iter() {
        let lag = (lag_t * n as f64) as usize;
        // rho = sum_{i,j} w_i w_j dcov[|lag + i - j|]
        let mut rho = 0.0;
        for (i, &wi) in w.iter().enumerate() {
            let mut acc = 0.0;
            for (j, &wj) in w.iter().enumerate() {
                let kk = (lag as i64 + i as i64 - j as i64).unsigned_abs() as usize;
                acc += wj * dcov[kk];
            }
            rho += wi * acc;
        }
        println!("exact discrete rho({lag_t}) = {rho:e}");
        lns.push(lag_t.ln());
        lnr.push(rho.ln());
    }
    let nn = lns.len() as f64;
    let mx = lns.iter().sum::<f64>() / nn;
    let my = lnr.iter().sum::<f64>() / nn;
    let slope = lns
        .iter()
        .zip(&lnr)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / lns.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    println!("exact discrete slope = {slope:.5} [{:?}]", t0.elapsed());

    // MC slope across seeds for noise calibration
    let cfg = RunConfig::default();
    for seed in [1u64, 2, 3] {
        let t0 = Instant::now();
        let r = check_long_memory_mc(h, d, cfg.levy, 128, 4000, seed, 0.15).unwrap();
        println!(
            "mc slope seed={seed}: {:.5} pass={} [{:?}]",
            r.mc_estimate,
            r.pass,
            t0.elapsed()
        );
    }
}
