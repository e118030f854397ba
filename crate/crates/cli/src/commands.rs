//! Implementations of the four subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use gmflou_core::csvio;
use gmflou_core::ensemble::simulate_ensemble;
use gmflou_core::flou::{
    aggregated_simulator, fixed_flou_simulator, sample_lambda, LambdaSample,
};
use gmflou_core::flp::{flp_covariance, FlpParams, FlpSimulator};
use gmflou_core::gmflou::{
    alpha_inf_residuals, alpha_zero_residuals, char_function_z, FtildeNorm, GmflouParams, Outputs,
    ZConfig, ZSimulator, YSimulator,
};
use gmflou_core::quad::QuadCtrl;
use gmflou_core::stats::{empirical_char_function, ensemble_moment, ConvergenceTable};
use gmflou_core::{PathEnsemble, SeedLineage};

use crate::config::{ProcessKind, RunConfig};
use crate::CliError;

pub fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

fn config_hash(cfg: &RunConfig) -> String {
    let text = serde_json::to_string(&cfg.canonical_json()).expect("config serializes");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn write_sidecar(
    path: &Path,
    cfg: &RunConfig,
    command: &str,
    extra: serde_json::Value,
) -> Result<(), CliError> {
    let sidecar = json!({
        "version": version(),
        "command": command,
        "seed": cfg.seed,
        "config": cfg.canonical_json(),
        "config_sha256": config_hash(cfg),
        "run": extra,
    });
    fs::write(path, serde_json::to_string_pretty(&sidecar).expect("json"))?;
    Ok(())
}

/// One parameter variant the `simulate` command expands to.
struct Variant {
    stem: String,
    detail: serde_json::Value,
    ensemble: PathEnsemble,
}

fn simulate_variants(cfg: &RunConfig, process: ProcessKind) -> Result<Vec<Variant>, CliError> {
    let spec = cfg.levy;
    let grid = cfg.grid.sample_grid()?;
    let mut out = Vec::new();
    match process {
        ProcessKind::Flp => {
            for &d in cfg.d_list.as_ref().unwrap_or(&vec![cfg.d]) {
                let sim = FlpSimulator::new(FlpParams::new(d, spec)?, grid, 0)?;
                let ens = simulate_ensemble(
                    format!("flp d={d}"),
                    grid.times(),
                    cfg.replicas,
                    cfg.seed,
                    |lin| Ok(sim.simulate(lin)?.values),
                )?;
                out.push(Variant {
                    stem: format!("flp_d{d}"),
                    detail: json!({"process": "flp", "d": d}),
                    ensemble: ens,
                });
            }
        }
        ProcessKind::Flou => {
            let lambda = cfg
                .lambda
                .ok_or_else(|| CliError::Usage("flou requires lambda".into()))?;
            let sim = fixed_flou_simulator(lambda, cfg.d, spec, grid, cfg.grid.warmup_m)?;
            let ens = simulate_ensemble(
                format!("flou lambda={lambda}"),
                grid.times(),
                cfg.replicas,
                cfg.seed,
                |lin| sim.simulate(lin),
            )?;
            out.push(Variant {
                stem: format!("flou_lambda{lambda}"),
                detail: json!({"process": "flou", "lambda": lambda, "d": cfg.d,
                               "warmup": sim.warmup()}),
                ensemble: ens,
            });
        }
        ProcessKind::Aggregate => {
            let mix = cfg.mixing(cfg.alpha[0])?;
            let lambdas = sample_lambda(mix, cfg.m, SeedLineage::lambda(cfg.seed))?;
            let sim = aggregated_simulator(&lambdas, cfg.d, spec, grid, cfg.grid.warmup_m)?;
            let ens = simulate_ensemble(
                format!("aggregate m={}", cfg.m),
                grid.times(),
                cfg.replicas,
                cfg.seed,
                |lin| sim.simulate(lin),
            )?;
            out.push(Variant {
                stem: format!("aggregate_m{}", cfg.m),
                detail: json!({"process": "aggregate", "m": cfg.m, "h": cfg.h,
                               "alpha": cfg.alpha[0], "d": cfg.d, "warmup": sim.warmup(),
                               "warmup_clipped": sim.warmup_clipped(),
                               "lambda_resampled": lambdas.resampled}),
                ensemble: ens,
            });
        }
        ProcessKind::Z => {
            for &alpha in &cfg.alpha {
                let params = GmflouParams::new(cfg.d, cfg.h, alpha, spec)?;
                let zcfg = match cfg.grid.far {
                    Some(far) => ZConfig {
                        far: Some(far),
                        overlap: false,
                    },
                    None => ZConfig::plain(),
                };
                let sim = ZSimulator::new(params, grid, Outputs::Grid, zcfg)?;
                let ens = simulate_ensemble(
                    format!("z alpha={alpha}"),
                    grid.times(),
                    cfg.replicas,
                    cfg.seed,
                    |lin| sim.simulate(lin),
                )?;
                out.push(Variant {
                    stem: format!("z_alpha{alpha}"),
                    detail: json!({"process": "z", "alpha": alpha, "h": cfg.h, "d": cfg.d,
                                   "far": cfg.grid.far}),
                    ensemble: ens,
                });
            }
        }
        ProcessKind::Y => {
            let sim = YSimulator::new(cfg.d, cfg.h, spec, grid, Outputs::Grid)?;
            let ens = simulate_ensemble("y", grid.times(), cfg.replicas, cfg.seed, |lin| {
                sim.simulate(lin)
            })?;
            out.push(Variant {
                stem: "y".to_string(),
                detail: json!({"process": "y", "h": cfg.h, "d": cfg.d}),
                ensemble: ens,
            });
        }
    }
    Ok(out)
}

/// `simulate`: write one CSV (+ sidecar, + optional gnuplot two-column file)
/// per parameter variant. Returns the files written.
pub fn cmd_simulate(
    cfg: &RunConfig,
    process: ProcessKind,
    gnuplot: bool,
) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate(Some(process))?;
    let out_dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&out_dir)?;
    let mut written = Vec::new();
    for variant in simulate_variants(cfg, process)? {
        let csv_path = out_dir.join(format!("{}.csv", variant.stem));
        let mut buf = Vec::new();
        csvio::write_paths(&mut buf, &variant.ensemble)?;
        fs::write(&csv_path, &buf)?;
        let sidecar_path = out_dir.join(format!("{}.json", variant.stem));
        write_sidecar(&sidecar_path, cfg, "simulate", variant.detail)?;
        if gnuplot {
            let g_path = out_dir.join(format!("{}_gnuplot.dat", variant.stem));
            let mut g = String::new();
            for (j, t) in variant.ensemble.times.iter().enumerate() {
                g.push_str(&format!("{t} {}\n", variant.ensemble.values[0][j]));
            }
            fs::write(&g_path, g)?;
            written.push(g_path);
        }
        written.push(csv_path);
        written.push(sidecar_path);
    }
    Ok(written)
}

/// `verify`: run the battery, write the JSON report, return pass/fail.
pub fn cmd_verify(cfg: &RunConfig) -> Result<(Vec<gmflou_core::stats::MomentReport>, bool), CliError> {
    let reports = crate::battery::run_battery(cfg)?;
    let out_dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&out_dir)?;
    fs::write(
        out_dir.join("verify_report.json"),
        serde_json::to_string_pretty(&reports).expect("reports serialize"),
    )?;
    write_sidecar(&out_dir.join("verify_report.meta.json"), cfg, "verify", json!({}))?;
    let pass = reports.iter().all(|r| r.pass);
    Ok((reports, pass))
}

/// Convergence axes of the `converge` command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    M,
    AlphaUp,
    AlphaDown,
    N,
}

#[derive(Debug, Serialize)]
pub struct ConvergeOutput {
    pub axis: Axis,
    pub table: ConvergenceTable,
}

/// Coupled aggregate-to-limit residuals over the aggregation size.
pub fn converge_m_axis(
    cfg: &RunConfig,
    ms: &[usize],
    replicas: usize,
) -> Result<ConvergenceTable, CliError> {
    let spec = cfg.levy;
    let grid = cfg.grid.sample_grid()?;
    let alpha = cfg.alpha[0];
    let mix = cfg.mixing(alpha)?;
    mix.check_limit_compatible(cfg.d)?;
    let m_max = *ms
        .iter()
        .max()
        .ok_or_else(|| CliError::Usage("m axis must be nonempty".into()))?;
    // one i.i.d. coefficient sequence; prefixes give the nested aggregates
    let lambdas = sample_lambda(mix, m_max, SeedLineage::lambda(cfg.seed))?;
    let zparams = GmflouParams::new(cfg.d, cfg.h, alpha, spec)?;
    let zsim = ZSimulator::new(zparams, grid, Outputs::Times(vec![1.0]), ZConfig::plain())?;
    // common integration window: couple the aggregate to the limit process
    // by truncating both at the same depth
    let window = grid.trunc_depth(cfg.d);
    let agg_sims = ms
        .iter()
        .map(|&m| {
            let sub = LambdaSample {
                values: lambdas.values[..m].to_vec(),
                ..lambdas.clone()
            };
            Ok(aggregated_simulator(&sub, cfg.d, spec, grid, Some(window))?)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let flp = zsim.flp();
    let t_idx = grid.last_index();

    use rayon::prelude::*;
    let per_replica: Vec<Vec<f64>> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| -> gmflou_core::Result<Vec<f64>> {
            let path = flp.simulate(SeedLineage::replica(cfg.seed, r))?;
            let z = zsim.near_values_from_flp(&path)?[0];
            agg_sims
                .iter()
                .map(|sim| {
                    let zm = sim.path_from_flp(&path)?[t_idx];
                    Ok((zm - z) * (zm - z))
                })
                .collect()
        })
        .collect::<gmflou_core::Result<Vec<_>>>()?;
    Ok(ConvergenceTable::from_samples(
        ms.iter().map(|&m| m as f64).collect(),
        &per_replica,
    ))
}

/// Mesh-refinement axis: absolute bias of the fLp variance estimate.
pub fn converge_n_axis(
    cfg: &RunConfig,
    ns: &[u32],
    replicas: usize,
) -> Result<ConvergenceTable, CliError> {
    let spec = cfg.levy;
    let mut residuals = Vec::new();
    let mut stderr = Vec::new();
    for &n in ns {
        let grid = gmflou_core::SampleGrid::new(n, 1.0)?;
        let sim = FlpSimulator::new(FlpParams::new(cfg.d, spec)?, grid, 0)?;
        let last = grid.last_index();
        let ens = simulate_ensemble(format!("flp n={n}"), grid.times(), replicas, cfg.seed, |lin| {
            Ok(sim.simulate(lin)?.values)
        })?;
        let (mc, se) = ensemble_moment(&ens, last, 2)?;
        let target = flp_covariance(cfg.d, 1.0, 1.0, spec.second_moment());
        residuals.push((mc - target).abs());
        stderr.push(se);
    }
    Ok(ConvergenceTable::new(
        ns.iter().map(|&n| n as f64).collect(),
        residuals,
        stderr,
    ))
}

/// `converge`: run the requested axes and write one JSON per axis.
pub fn cmd_converge(cfg: &RunConfig, axes: &[Axis]) -> Result<(Vec<ConvergeOutput>, bool), CliError> {
    cfg.validate(Some(ProcessKind::Z))?;
    let spec = cfg.levy;
    let grid = cfg.grid.sample_grid()?;
    let replicas = cfg.replicas.min(500).max(60);
    let mut outputs = Vec::new();
    for &axis in axes {
        let table = match axis {
            Axis::M => converge_m_axis(cfg, &[10, 100, 1000], replicas)?,
            Axis::AlphaUp => alpha_inf_residuals(
                &[1e2, 1e3, 1e4],
                1.0,
                cfg.d,
                cfg.h,
                spec,
                grid,
                replicas,
                cfg.seed,
            )?,
            Axis::AlphaDown => alpha_zero_residuals(
                &[1.0, 0.1, 0.01],
                1.0,
                cfg.d,
                cfg.h,
                spec,
                grid,
                replicas,
                cfg.seed,
            )?,
            Axis::N => converge_n_axis(cfg, &[32, 64, 128], cfg.replicas.max(20_000))?,
        };
        outputs.push(ConvergeOutput { axis, table });
    }
    let out_dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&out_dir)?;
    for o in &outputs {
        let name = format!("converge_{}.json", format!("{:?}", o.axis).to_lowercase());
        fs::write(
            out_dir.join(name),
            serde_json::to_string_pretty(o).expect("table serializes"),
        )?;
    }
    write_sidecar(&out_dir.join("converge.meta.json"), cfg, "converge", json!({}))?;
    let pass = outputs.iter().all(|o| o.table.monotone);
    Ok((outputs, pass))
}

/// One row of the characteristic-function table.
#[derive(Debug, Serialize)]
pub struct CfRow {
    pub thetas: Vec<f64>,
    pub times: Vec<f64>,
    pub analytic_re: f64,
    pub analytic_im: f64,
    pub empirical_re: f64,
    pub empirical_im: f64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    pub pass: bool,
}

/// `cf`: analytic characteristic function of the limit process against the
/// empirical one from simulated values.
pub fn cmd_cf(
    cfg: &RunConfig,
    thetas: &[f64],
    time: f64,
    multi: Option<(Vec<f64>, Vec<f64>)>,
) -> Result<(Vec<CfRow>, bool), CliError> {
    cfg.validate(Some(ProcessKind::Z))?;
    let spec = cfg.levy;
    let grid = cfg.grid.sample_grid()?;
    let alpha = cfg.alpha[0];
    let params = GmflouParams::new(cfg.d, cfg.h, alpha, spec)?;
    let ctrl = QuadCtrl::with_tol(1e-10, 1e-8);

    // collect every time the table needs, simulate once
    let mut all_times: Vec<f64> = vec![time];
    if let Some((_, ref ts)) = multi {
        all_times.extend(ts.iter().copied());
    }
    all_times.sort_by(f64::total_cmp);
    all_times.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let sim = ZSimulator::new(
        params,
        grid,
        Outputs::Times(all_times.clone()),
        ZConfig::corrected(),
    )?;
    let ens = simulate_ensemble("z cf", all_times.clone(), cfg.replicas, cfg.seed, |lin| {
        sim.simulate(lin)
    })?;
    let index_of = |t: f64| -> usize {
        all_times
            .iter()
            .position(|&x| (x - t).abs() < 1e-12)
            .expect("time collected above")
    };

    let mut rows = Vec::new();
    let mut push_row = |thetas: Vec<f64>, times: Vec<f64>| -> Result<(), CliError> {
        let analytic = char_function_z(&thetas, &times, &params, FtildeNorm::Isometry, &ctrl)?;
        let idx: Vec<usize> = times.iter().map(|&t| index_of(t)).collect();
        let (emp, se_re, se_im) = empirical_char_function(&ens, &idx, &thetas)?;
        let ks = cfg.report.k_sigma;
        let pass = (emp.re - analytic.re).abs() <= ks * se_re + 1e-9
            && (emp.im - analytic.im).abs() <= ks * se_im + 1e-9;
        rows.push(CfRow {
            thetas,
            times,
            analytic_re: analytic.re,
            analytic_im: analytic.im,
            empirical_re: emp.re,
            empirical_im: emp.im,
            stderr_re: se_re,
            stderr_im: se_im,
            pass,
        });
        Ok(())
    };

    push_row(vec![0.0], vec![time])?;
    for &th in thetas {
        push_row(vec![th], vec![time])?;
    }
    if let Some((ths, ts)) = multi {
        push_row(ths, ts)?;
    }

    let out_dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&out_dir)?;
    fs::write(
        out_dir.join("cf_table.json"),
        serde_json::to_string_pretty(&rows).expect("rows serialize"),
    )?;
    write_sidecar(&out_dir.join("cf_table.meta.json"), cfg, "cf", json!({}))?;
    let pass = rows.iter().all(|r| r.pass);
    Ok((rows, pass))
}
