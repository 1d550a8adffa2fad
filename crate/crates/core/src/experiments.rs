//! Experiment orchestration: run a validated config end-to-end and write
//! machine-readable artifacts.
//!
//! Every run writes `summary.json` (inputs echoed, version, metrics) plus
//! experiment CSVs. Nothing depends on wall-clock state: identical configs
//! and seeds give byte-identical CSV bodies.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use crate::config::{ExperimentKind, RunConfig, DEFAULT_SLICE_SAFETY};
use crate::effective::{effective_matrix_from_generator, EffectiveMatrix};
use crate::environment::fmt_g17;
use crate::error::{Error, Result};
use crate::exclusion::{
    duality_check, hydrodynamic_experiment, suggest_slice_length, ExclusionState, HydroParams,
    Profile,
};
use crate::macroscale::{
    compare_micro_macro, heat_semigroup, solve_effective_resolvent, DensityField, Grid,
};
use crate::microscale::Generator;
use crate::rates::assumption_diagnostics;
use crate::rng;
use crate::walkers;

pub struct RunOutput {
    pub summary: serde_json::Value,
    pub files: Vec<PathBuf>,
}

fn write_artifact(out_dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    std::fs::write(&path, body)?;
    Ok(path)
}

fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values[values.len() / 2]
}

/// Substreams reserved for the effective-matrix estimate; disjoint from
/// the run seeds by the stream label.
fn d_estimate_seeds(config: &RunConfig) -> Vec<u64> {
    let count = config
        .params
        .d_seeds
        .unwrap_or_else(|| config.seeds.len().max(16));
    (0..count)
        .map(|k| rng::substream(config.seeds[0], "effective-d-estimate", k as u64))
        .collect()
}

/// Per-seed effective matrices, averaged into one estimate.
fn estimate_effective(
    config: &RunConfig,
    box_side: f64,
    seeds: &[u64],
) -> Result<(EffectiveMatrix, Vec<EffectiveMatrix>)> {
    let kernel = config.kernel.build()?;
    let env = config.environment.with_box_side(box_side);
    let per_seed: Vec<EffectiveMatrix> = seeds
        .par_iter()
        .map(|&seed| -> Result<EffectiveMatrix> {
            let cfg = env.sample(rng::substream(seed, "effective-env", 0))?;
            let gen = Generator::build(&cfg, &kernel, 1.0)?;
            effective_matrix_from_generator(
                &gen,
                config.lambda_reg(),
                config.tol(),
                config.rank_tol(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let dim = config.environment.dim();
    let mut mean = vec![0.0; dim * dim];
    for d in &per_seed {
        for (acc, v) in mean.iter_mut().zip(&d.matrix) {
            *acc += v / per_seed.len() as f64;
        }
    }
    Ok((
        EffectiveMatrix::from_matrix(dim, mean, config.rank_tol()),
        per_seed,
    ))
}

/// Execute the experiment named by the config, writing artifacts under
/// `out_dir`.
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<RunOutput> {
    config.validate()?;
    let mut files = Vec::new();
    let metrics = match config.experiment {
        ExperimentKind::Sample => run_sample(config, out_dir, &mut files)?,
        ExperimentKind::Diagnostics => run_diagnostics(config, out_dir, &mut files)?,
        ExperimentKind::EffectiveD => run_effective_d(config, out_dir, &mut files)?,
        ExperimentKind::Homogenize => run_homogenize(config, out_dir, &mut files)?,
        ExperimentKind::Semigroup => run_semigroup(config, out_dir, &mut files)?,
        ExperimentKind::Msd => run_msd(config, out_dir, &mut files)?,
        ExperimentKind::Exclusion => run_exclusion(config, out_dir, &mut files)?,
        ExperimentKind::Duality => run_duality(config, out_dir, &mut files)?,
    };
    let summary = json!({
        "experiment": config.experiment.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": serde_json::to_value(config).map_err(|e| Error::Config(e.to_string()))?,
        "defaults": config.defaults_report()?,
        "metrics": metrics,
    });
    let body = serde_json::to_string_pretty(&summary).expect("serializable summary");
    files.push(write_artifact(out_dir, "summary.json", &body)?);
    Ok(RunOutput { summary, files })
}

fn run_sample(
    config: &RunConfig,
    out_dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<serde_json::Value> {
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let cfg = config.environment.sample(seed)?;
        files.push(write_artifact(
            out_dir,
            &format!("sample_{seed}.txt"),
            &cfg.to_table(),
        )?);
        rows.push(json!({
            "seed": seed,
            "points": cfg.len(),
            "intensity_estimate": cfg.estimate_intensity(),
        }));
    }
    Ok(json!(rows))
}

fn run_diagnostics(
    config: &RunConfig,
    out_dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<serde_json::Value> {
    let kernel = config.kernel.build()?;
    let mut per_seed = BTreeMap::new();
    for &seed in &config.seeds {
        let cfg = config.environment.sample(seed)?;
        let report = assumption_diagnostics(&cfg, &kernel);
        per_seed.insert(seed.to_string(), report.to_json());
    }
    let value = serde_json::to_value(&per_seed).expect("json");
    files.push(write_artifact(
        out_dir,
        "diagnostics.json",
        &serde_json::to_string_pretty(&value).expect("json"),
    )?);
    Ok(value)
}

fn run_effective_d(
    config: &RunConfig,
    out_dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<serde_json::Value> {
    let (mean, per_seed) =
        estimate_effective(config, config.environment.box_side(), &config.seeds)?;
    let value = json!({
        "D": mean.matrix,
        "eigenvalues": mean.eigenvalues,
        "d_star": mean.d_star,
        "residuals": per_seed.iter().map(|d| d.residuals.clone()).collect::<Vec<_>>(),
        "lambda_reg": config.lambda_reg(),
        "seeds": config.seeds,
        "L": config.environment.box_side(),
    });
    files.push(write_artifact(
        out_dir,
        "effective_d.json",
        &serde_json::to_string_pretty(&value).expect("json"),
    )?);
    let mut csv = String::from("seed");
    let dim = mean.dim;
    for l in 0..dim {
        for k in 0..dim {
            csv.push_str(&format!(",d{l}{k}"));
        }
    }
    csv.push('\n');
    for (seed, d) in config.seeds.iter().zip(&per_seed) {
        csv.push_str(&seed.to_string());
        for v in &d.matrix {
            csv.push(',');
            csv.push_str(&fmt_g17(*v));
        }
        csv.push('\n');
    }
    files.push(write_artifact(out_dir, "effective_d.csv", &csv)?);
    Ok(value)
}

/// Ladder setup shared by the homogenize / semigroup experiments.
struct Ladder {
    eps_list: Vec<f64>,
    macro_side: f64,
    grid: Grid,
    dmat: EffectiveMatrix,
}

fn ladder(config: &RunConfig) -> Result<Ladder> {
    let eps_list = config
        .params
        .eps_list
        .clone()
        .unwrap_or_else(|| vec![0.2, 0.1, 0.05]);
    let macro_side = config.macro_side();
    let grid = Grid::new(config.environment.dim(), macro_side, config.grid_n());
    // the effective matrix is a property of the law; estimate it on a box
    // matching the finest scale, with seeds disjoint from the run seeds
    let d_box = macro_side / eps_list.last().copied().unwrap_or(0.05);
    let (dmat, _) = estimate_effective(config, d_box, &d_estimate_seeds(config))?;
    Ok(Ladder {
        eps_list,
        macro_side,
        grid,
        dmat,
    })
}

fn run_homogenize(
    config: &RunConfig,
    out_dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<serde_json::Value> {
    let kernel = config.kernel.build()?;
    let lad = ladder(config)?;
    let lambda = config.params.lambda.unwrap_or(1.0);
    let datum = config.datum(lad.macro_side);
    let phis: Vec<_> = config.phis(lad.macro_side);
    let phi_fns: Vec<_> = phis.iter().map(|(_, f)| f.clone()).collect();

    let f_grid = DensityField::from_test_function(lad.grid, &datum);
    let u_macro = solve_effective_resolvent(&lad.dmat, lambda, &f_grid, config.tol())?;
    files.push(write_artifact(out_dir, "u_macro.csv", &u_macro.to_csv())?);

    let mut per_eps = Vec::new();
    let mut seed_rows = String::from("eps,seed,strong_rel,weak_max,energy_gap,flow_max\n");
    for (eps_idx, &eps) in lad.eps_list.iter().enumerate() {
        let env = config
            .environment
            .with_box_side(lad.macro_side / eps);
        let results: Vec<(f64, f64, f64, f64)> = config
            .seeds
            .par_iter()
            .map(|&seed| -> Result<(f64, f64, f64, f64)> {
                let cfg = env.sample(rng::substream(seed, "homogenize-env", eps_idx as u64))?;
                let gen = Generator::build(&cfg, &kernel, eps)?;
                let f_eps = gen.restrict(&datum);
                let u_eps = gen.solve_resolvent(lambda, &f_eps, config.tol())?;
                let m = compare_micro_macro(&gen, &u_eps, &u_macro, &lad.dmat, &phi_fns);
                Ok((m.strong_rel, m.weak_max(), m.energy_gap, m.flow_max()))
            })
            .collect::<Result<Vec<_>>>()?;
        for (seed, r) in config.seeds.iter().zip(&results) {
            seed_rows.push_str(&format!(
                "{},{},{},{},{},{}\n",
                fmt_g17(eps),
                seed,
                fmt_g17(r.0),
                fmt_g17(r.1),
                fmt_g17(r.2),
                fmt_g17(r.3)
            ));
        }
        let mut strong: Vec<f64> = results.iter().map(|r| r.0).collect();
        let mut weak: Vec<f64> = results.iter().map(|r| r.1).collect();
        let mut energy: Vec<f64> = results.iter().map(|r| r.2).collect();
        let mut flow: Vec<f64> = results.iter().map(|r| r.3).collect();
        per_eps.push(json!({
            "eps": eps,
            "strong_rel": median(&mut strong),
            "weak_max": median(&mut weak),
            "energy_gap": median(&mut energy),
            "flow_max": median(&mut flow),
        }));
    }
    let mut csv = String::from("eps,strong_rel,weak_max,energy_gap,flow_max\n");
    for row in &per_eps {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_g17(row["eps"].as_f64().unwrap()),
            fmt_g17(row["strong_rel"].as_f64().unwrap()),
            fmt_g17(row["weak_max"].as_f64().unwrap()),
            fmt_g17(row["energy_gap"].as_f64().unwrap()),
            fmt_g17(row["flow_max"].as_f64().unwrap())
        ));
    }
    files.push(write_artifact(out_dir, "metrics.csv", &csv)?);
    files.push(write_artifact(out_dir, "metrics_seeds.csv", &seed_rows)?);
    Ok(json!({
        "D": lad.dmat.matrix,
        "d_star": lad.dmat.d_star,
        "lambda": lambda,
        "per_eps": per_eps,
    }))
}

fn run_semigroup(
    config: &RunConfig,
    out_dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<serde_json::Value> {
    let kernel = config.kernel.build()?;
    let lad = ladder(config)?;
    let t = config.params.t.unwrap_or(0.5);
    let datum = config.datum(lad.macro_side);
    let f_grid = DensityField::from_test_function(lad.grid, &datum);
    let macro_field = heat_semigroup(&lad.dmat, t, &f_grid);

    let mut per_eps = Vec::new();
    let mut seed_rows = String::from("eps,seed,l2_rel,l1\n");
    for (eps_idx, &eps) in lad.eps_list.iter().enumerate() {
        let env = config.environment.with_box_side(lad.macro_side / eps);
        let results: Vec<(f64, f64)> = config
            .seeds
            .par_iter()
            .map(|&seed| -> Result<(f64, f64)> {
                let cfg = env.sample(rng::substream(seed, "semigroup-env", eps_idx as u64))?;
                let gen = Generator::build(&cfg, &kernel, eps)?;
                let f_nodes = gen.restrict(&datum);
                let micro = walkers::semigroup_apply(&gen, t, &f_nodes, 1e-12);
                let macro_nodes: Vec<f64> = (0..gen.node_count())
                    .map(|a| macro_field.interpolate(gen.scaled_position(a)))
                    .collect();
                let diff: Vec<f64> = micro
                    .iter()
                    .zip(&macro_nodes)
                    .map(|(a, b)| a - b)
                    .collect();
                let l2_rel = gen.norm_mu(&diff) / gen.norm_mu(&macro_nodes).max(1e-300);
                let l1 = gen.mu_weight() * diff.iter().map(|v| v.abs()).sum::<f64>();
                Ok((l2_rel, l1))
            })
            .collect::<Result<Vec<_>>>()?;
        for (seed, r) in config.seeds.iter().zip(&results) {
            seed_rows.push_str(&format!(
                "{},{},{},{}\n",
                fmt_g17(eps),
                seed,
                fmt_g17(r.0),
                fmt_g17(r.1)
            ));
        }
        let mut l2: Vec<f64> = results.iter().map(|r| r.0).collect();
        let mut l1: Vec<f64> = results.iter().map(|r| r.1).collect();
        per_eps.push(json!({
            "eps": eps,
            "t": t,
            "l2_rel": median(&mut l2),
            "l1": median(&mut l1),
        }));
    }
    let mut csv = String::from("eps,t,l2_rel,l1\n");
    for row in &per_eps {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_g17(row["eps"].as_f64().unwrap()),
            fmt_g17(t),
            fmt_g17(row["l2_rel"].as_f64().unwrap()),
            fmt_g17(row["l1"].as_f64().unwrap())
        ));
    }
    files.push(write_artifact(out_dir, "semigroup.csv", &csv)?);
    files.push(write_artifact(out_dir, "semigroup_seeds.csv", &seed_rows)?);
    Ok(json!({
        "D": lad.dmat.matrix,
        "t": t,
        "per_eps": per_eps,
    }))
}

fn run_msd(
    config: &RunConfig,
    out_dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<serde_json::Value> {
    let kernel = config.kernel.build()?;
    let horizon = config.params.horizon.unwrap_or(100.0);
    let n_checkpoints = config.params.n_checkpoints.unwrap_or(8);
    let n_samples = config.params.n_samples.unwrap_or(1000);
    let curves: Vec<walkers::MsdCurve> = config
        .seeds
        .par_iter()
        .map(|&seed| -> Result<walkers::MsdCurve> {
            let cfg = config.environment.sample(seed)?;
            let gen = Generator::build(&cfg, &kernel, 1.0)?;
            let stride = (gen.node_count() / 64).max(1);
            let starts: Vec<usize> = (0..gen.node_count()).step_by(stride).collect();
            Ok(walkers::msd(
                &gen,
                &starts,
                horizon,
                n_checkpoints,
                n_samples.div_ceil(starts.len()).max(1),
                seed,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    // aggregate medians per checkpoint
    let times = curves[0].times.clone();
    let mut csv = String::from("t,value,stderr\n");
    let mut agg = Vec::new();
    for (k, &t) in times.iter().enumerate() {
        let mut values: Vec<f64> = curves.iter().map(|c| c.msd[k]).collect();
        let value = median(&mut values);
        let stderr = curves.iter().map(|c| c.stderr[k]).sum::<f64>() / curves.len() as f64;
        csv.push_str(&format!(
            "{},{},{}\n",
            fmt_g17(t),
            fmt_g17(value),
            fmt_g17(stderr)
        ));
        agg.push(json!({ "t": t, "msd": value, "stderr": stderr }));
    }
    files.push(write_artifact(out_dir, "msd.csv", &csv)?);
    // corrector-based cross-check on the same sampled law
    let (dmat, _) = estimate_effective(config, config.environment.box_side(), &config.seeds)?;
    let trace: f64 = (0..dmat.dim).map(|k| dmat.entry(k, k)).sum();
    let mut slopes: Vec<f64> = curves.iter().map(|c| c.tail_slope(3)).collect();
    let slope = median(&mut slopes);
    let dim = config.environment.dim() as f64;
    Ok(json!({
        "curve": agg,
        "tail_slope": slope,
        "slope_over_2d": slope / (2.0 * dim),
        "corrector_trace_over_d": trace / dim,
    }))
}

fn run_exclusion(
    config: &RunConfig,
    out_dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<serde_json::Value> {
    let kernel = config.kernel.build()?;
    let eps_list = config
        .params
        .eps_list
        .clone()
        .unwrap_or_else(|| vec![0.1, 0.05, 0.025]);
    let macro_side = config.macro_side();
    let t = config.params.t.unwrap_or(0.5);
    let rho0 = config
        .params
        .rho0
        .clone()
        .unwrap_or(Profile::Step {
            threshold: macro_side / 2.0,
        });
    let phis = config.phis(macro_side);
    let d_box = macro_side / eps_list.last().copied().unwrap_or(0.05);
    let (dmat, _) = estimate_effective(config, d_box, &d_estimate_seeds(config))?;
    let params = HydroParams {
        dim: config.environment.dim(),
        macro_side,
        intensity: config.environment.nominal_intensity(),
        marks: config.environment.marks(),
        kernel: &kernel,
        rho0: &rho0,
        t,
        eps_list: &eps_list,
        phis: &phis,
        seeds: &config.seeds,
        grid_n: config.grid_n(),
    };
    let report = hydrodynamic_experiment(&params, &dmat)?;
    for (k, &eps) in eps_list.iter().enumerate() {
        let mut csv = String::from("phi_id,empirical,macro,gap,stderr\n");
        for cell in report.cells.iter().filter(|c| c.eps == eps) {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                cell.phi_id,
                fmt_g17(cell.empirical_mean),
                fmt_g17(cell.prediction),
                fmt_g17(cell.median_abs_gap),
                fmt_g17(cell.seed_spread)
            ));
        }
        files.push(write_artifact(out_dir, &format!("exclusion_eps{k}.csv"), &csv)?);
    }
    for (k, profile) in report.profiles.iter().enumerate() {
        let mut csv = String::from("x,empirical,macro\n");
        for ((x, e), p) in profile
            .bin_centers
            .iter()
            .zip(&profile.empirical)
            .zip(&profile.prediction)
        {
            csv.push_str(&format!("{},{},{}\n", fmt_g17(*x), fmt_g17(*e), fmt_g17(*p)));
        }
        files.push(write_artifact(out_dir, &format!("profile_eps{k}.csv"), &csv)?);
    }
    Ok(json!({
        "D": dmat.matrix,
        "t": t,
        "cells": serde_json::to_value(&report.cells).expect("json"),
    }))
}

fn run_duality(
    config: &RunConfig,
    out_dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<serde_json::Value> {
    let kernel = config.kernel.build()?;
    let t = config.params.t.unwrap_or(0.7);
    let n_schedules = config.params.n_schedules.unwrap_or(10_000);
    let seed = config.seeds[0];
    let cfg = config.environment.sample(seed)?;
    let gen = Generator::build(&cfg, &kernel, 1.0)?;
    let eta0 = ExclusionState::bernoulli_profile(&cfg, |_| 0.5, 1.0, rng::substream(seed, "duality-init", 0));
    let report = duality_check(&gen, &eta0, t, n_schedules, seed)?;
    let mut csv = String::from("node,mc,exact,stderr,std_resid\n");
    for k in 0..gen.node_count() {
        let resid = (report.mc_mean[k] - report.exact[k]).abs() / report.stderr[k].max(1e-9);
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            k,
            fmt_g17(report.mc_mean[k]),
            fmt_g17(report.exact[k]),
            fmt_g17(report.stderr[k]),
            fmt_g17(resid)
        ));
    }
    files.push(write_artifact(out_dir, "duality.csv", &csv)?);
    Ok(json!({
        "t": t,
        "n_schedules": n_schedules,
        "max_std_residual": report.max_std_residual,
        "nodes": gen.node_count(),
    }))
}

/// Percolation-slice diagnostic used by the exclusion validation path:
/// median max component size of slice 0 across seeds.
pub fn slice_component_median(
    config: &RunConfig,
    box_side: f64,
    horizon: f64,
) -> Result<f64> {
    let kernel = config.kernel.build()?;
    let env = config.environment.with_box_side(box_side);
    let t0 = config.params.t0.or_else(|| {
        suggest_slice_length(
            &kernel,
            config.environment.dim(),
            config.environment.nominal_intensity(),
            DEFAULT_SLICE_SAFETY,
        )
    });
    let t0 = t0.ok_or_else(|| {
        Error::Config("no slice length available: set params.t0 for table kernels".into())
    })?;
    let maxima: Vec<f64> = config
        .seeds
        .par_iter()
        .map(|&seed| -> Result<f64> {
            let cfg = env.sample(rng::substream(seed, "slice-env", 0))?;
            let schedule = crate::exclusion::ClockSchedule::build(
                &cfg,
                &kernel,
                horizon.max(t0),
                t0,
                rng::substream(seed, "slice-clock", 0),
            )?;
            let hist = crate::exclusion::percolation_components(&schedule, 0)?;
            Ok(hist.max_size as f64)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut maxima = maxima;
    Ok(median(&mut maxima))
}
