//! Browser demo bindings: three interactive views over the core crate.
//!
//! Each function takes plain numeric parameters and returns a JSON string
//! so the page needs no glue types. Build with
//! `wasm-pack build --target web` and open `www/index.html`.

use wasm_bindgen::prelude::*;

use hoplab::effective::effective_matrix_from_generator;
use hoplab::environment::{MarkDistribution, MarkedConfiguration};
use hoplab::exclusion::{hydrodynamic_experiment, HydroParams, Profile};
use hoplab::microscale::Generator;
use hoplab::rates::{assumption_diagnostics, RateKernel};
use hoplab::walkers::simulate_walk;

fn err_json(e: impl std::fmt::Display) -> String {
    serde_json::json!({ "error": e.to_string() }).to_string()
}

/// Sample a 2-D hopping environment and run one random walk on it.
/// Returns point positions, marks, and the visited node sequence.
#[wasm_bindgen]
pub fn sample_walk(
    gamma: f64,
    beta: f64,
    intensity: f64,
    box_side: f64,
    horizon: f64,
    seed: u32,
) -> String {
    let marks = MarkDistribution::Uniform { a: -1.0, b: 1.0 };
    let cfg = match MarkedConfiguration::sample_poisson(
        2,
        box_side,
        intensity,
        &marks,
        u64::from(seed),
    ) {
        Ok(cfg) if !cfg.is_empty() => cfg,
        Ok(_) => return err_json("empty sample; raise the intensity"),
        Err(e) => return err_json(e),
    };
    let kernel = match RateKernel::mott(gamma, beta) {
        Ok(k) => k,
        Err(e) => return err_json(e),
    };
    let gen = match Generator::build(&cfg, &kernel, 1.0) {
        Ok(g) => g,
        Err(e) => return err_json(e),
    };
    let start = 0usize;
    let traj = simulate_walk(&gen, start, horizon, u64::from(seed));
    let points: Vec<[f64; 2]> = (0..cfg.len())
        .map(|i| [cfg.position(i)[0], cfg.position(i)[1]])
        .collect();
    let marks: Vec<f64> = (0..cfg.len()).map(|i| cfg.mark(i)).collect();
    serde_json::json!({
        "box_side": box_side,
        "points": points,
        "marks": marks,
        "start": start,
        "visited": traj.nodes,
        "times": traj.times,
        "jumps": traj.jump_count(),
    })
    .to_string()
}

/// Corrector-based effective matrix with assumption diagnostics for the
/// same sample.
#[wasm_bindgen]
pub fn effective_matrix(
    gamma: f64,
    beta: f64,
    intensity: f64,
    box_side: f64,
    seed: u32,
) -> String {
    let marks = MarkDistribution::Uniform { a: -1.0, b: 1.0 };
    let cfg = match MarkedConfiguration::sample_poisson(
        2,
        box_side,
        intensity,
        &marks,
        u64::from(seed),
    ) {
        Ok(cfg) if !cfg.is_empty() => cfg,
        Ok(_) => return err_json("empty sample; raise the intensity"),
        Err(e) => return err_json(e),
    };
    let kernel = match RateKernel::mott(gamma, beta) {
        Ok(k) => k,
        Err(e) => return err_json(e),
    };
    let gen = match Generator::build(&cfg, &kernel, 1.0) {
        Ok(g) => g,
        Err(e) => return err_json(e),
    };
    let report = assumption_diagnostics(&cfg, &kernel);
    match effective_matrix_from_generator(&gen, 0.0, 1e-10, 1e-8) {
        Ok(d) => serde_json::json!({
            "points": cfg.len(),
            "D": d.matrix,
            "eigenvalues": d.eigenvalues,
            "frame": d.frame,
            "d_star": d.d_star,
            "residuals": d.residuals,
            "diagnostics": report.to_json(),
        })
        .to_string(),
        Err(e) => err_json(e),
    }
}

/// One-dimensional step-profile exclusion run against the heat-semigroup
/// prediction; returns binned empirical density and the macroscopic curve.
#[wasm_bindgen]
pub fn exclusion_profile(gamma: f64, intensity: f64, t: f64, eps: f64, seed: u32) -> String {
    let macro_side = 6.0;
    let marks = MarkDistribution::Constant { value: 0.0 };
    let kernel = match RateKernel::mott(gamma, 0.0) {
        Ok(k) => k,
        Err(e) => return err_json(e),
    };
    if !(eps > 0.0 && eps <= 0.5) {
        return err_json("eps must lie in (0, 0.5]");
    }
    if !(0.0..=2.0).contains(&t) {
        return err_json("t must lie in [0, 2]");
    }
    // effective matrix of the law, one unscaled sample
    let d_cfg = match MarkedConfiguration::sample_poisson(
        1,
        60.0,
        intensity,
        &marks,
        u64::from(seed) ^ 0x5eed,
    ) {
        Ok(cfg) if !cfg.is_empty() => cfg,
        Ok(_) => return err_json("empty sample; raise the intensity"),
        Err(e) => return err_json(e),
    };
    let dmat = match Generator::build(&d_cfg, &kernel, 1.0)
        .and_then(|gen| effective_matrix_from_generator(&gen, 0.0, 1e-10, 1e-8))
    {
        Ok(d) => d,
        Err(e) => return err_json(e),
    };
    let rho0 = Profile::Step {
        threshold: macro_side / 2.0,
    };
    let phis = vec![(
        "gauss".to_string(),
        hoplab::catalog::TestFunction::by_id("gauss", 1, macro_side).unwrap(),
    )];
    let seeds: Vec<u64> = (0..4).map(|k| u64::from(seed) + 1000 * k).collect();
    let params = HydroParams {
        dim: 1,
        macro_side,
        intensity,
        marks: &marks,
        kernel: &kernel,
        rho0: &rho0,
        t,
        eps_list: &[eps],
        phis: &phis,
        seeds: &seeds,
        grid_n: 96,
    };
    match hydrodynamic_experiment(&params, &dmat) {
        Ok(report) => {
            let profile = &report.profiles[0];
            serde_json::json!({
                "D": dmat.entry(0, 0),
                "x": profile.bin_centers,
                "empirical": profile.empirical,
                "prediction": profile.prediction,
                "cell": {
                    "empirical": report.cells[0].empirical_mean,
                    "prediction": report.cells[0].prediction,
                    "gap": report.cells[0].mean_abs_gap,
                },
            })
            .to_string()
        }
        Err(e) => err_json(e),
    }
}
