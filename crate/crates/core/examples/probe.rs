//! Scratch probe of Monte Carlo bias at verification scale. Not part of the
//! test suite; handy when tuning grid and far-field defaults.

use std::time::Instant;

use gmflou_core::ensemble::simulate_ensemble;
use gmflou_core::flp::{flp_covariance, FlpParams, FlpSimulator};
use gmflou_core::gmflou::{variance_z, GmflouParams, Outputs, ZConfig, ZSimulator};
use gmflou_core::stats::ensemble_moment;
use gmflou_core::{LevySpec, SampleGrid};

fn main() {
    let spec = LevySpec::compensated_gamma(1.0, 2.0).unwrap();
    let m2 = spec.second_moment();

    // fLp variance at t = 1, acceptance parameters
    let t0 = Instant::now();
    let grid = SampleGrid::new(128, 1.0).unwrap();
    let params = FlpParams::new(0.25, spec).unwrap();
    let sim = FlpSimulator::new(params, grid, 0).unwrap();
    let ens = simulate_ensemble("flp", grid.times(), 2000, 1, |lin| {
        Ok(sim.simulate(lin)?.values)
    })
    .unwrap();
    let (m, se) = ensemble_moment(&ens, 128, 2).unwrap();
    let target = flp_covariance(0.25, 1.0, 1.0, m2);
    println!(
        "fLp var: mc={m:.6} target={target:.6} rel_bias={:+.3}% se={se:.4} [{:?}]",
        (m / target - 1.0) * 100.0,
        t0.elapsed()
    );

    // Z variance: plain vs corrected
    for (label, cfg) in [("plain", ZConfig::plain()), ("corrected", ZConfig::corrected())] {
        let t0 = Instant::now();
        let zp = GmflouParams::new(0.2, 0.12, 1.0, spec).unwrap();
        let zsim = ZSimulator::new(zp, grid, Outputs::Times(vec![0.25, 0.5, 1.0]), cfg).unwrap();
        let build = t0.elapsed();
        let t0 = Instant::now();
        let ens = simulate_ensemble("z", vec![0.25, 0.5, 1.0], 2000, 2, |lin| zsim.simulate(lin)).unwrap();
        let target = variance_z(1.0, 0.12, 0.2, m2).unwrap();
        for (j, t) in [0.25, 0.5, 1.0].iter().enumerate() {
            let (m, se) = ensemble_moment(&ens, j, 2).unwrap();
            println!(
                "Z var {label} t={t}: mc={m:.6} target={target:.6} rel_bias={:+.3}% se={se:.4}",
                (m / target - 1.0) * 100.0
            );
        }
        println!("  build={build:?} sim={:?}", t0.elapsed());
    }
}
