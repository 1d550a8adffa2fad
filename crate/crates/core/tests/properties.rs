//! Property tests for the structural invariants, plus the statistical
//! checks that need independent-ensemble oracles.

use hoplab::catalog::TestFunction;
use hoplab::effective::effective_matrix;
use hoplab::environment::{MarkDistribution, MarkedConfiguration};
use hoplab::exclusion::{evolve_exclusion, ClockSchedule, ExclusionState};
use hoplab::microscale::Generator;
use hoplab::rates::{moment_lambda_k, palm_average, LocalObservable, RateKernel};
use hoplab::torus::Torus;

use proptest::prelude::*;

fn small_cloud(seed: u64, dim: usize, side: f64, m: f64) -> MarkedConfiguration {
    MarkedConfiguration::sample_poisson(
        dim,
        side,
        m,
        &MarkDistribution::Uniform { a: -1.0, b: 1.0 },
        seed,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn min_image_is_within_half_side(delta in -100.0f64..100.0, side in 0.1f64..50.0) {
        let torus = Torus::new(1, side);
        let d = torus.min_image(delta);
        prop_assert!(d >= -side / 2.0 - 1e-12 && d <= side / 2.0 + 1e-12);
        // representative of the same class
        let wrapped = (delta - d).rem_euclid(side);
        prop_assert!(wrapped < 1e-9 * side.max(1.0) || (side - wrapped) < 1e-9 * side.max(1.0));
    }

    #[test]
    fn rates_are_exactly_symmetric(seed in 0u64..500, gamma in 0.5f64..3.0, beta in 0.0f64..2.0) {
        let cfg = small_cloud(seed, 2, 6.0, 1.0);
        prop_assume!(cfg.len() >= 2);
        let kernel = RateKernel::mott(gamma, beta).unwrap().with_cutoff(2.5).unwrap();
        for i in 0..cfg.len().min(12) {
            for j in 0..cfg.len().min(12) {
                if i != j {
                    let cij = kernel.evaluate(&cfg, i, j).unwrap();
                    let cji = kernel.evaluate(&cfg, j, i).unwrap();
                    prop_assert_eq!(cij, cji);
                    prop_assert!(cij >= 0.0 && cij.is_finite());
                }
            }
        }
    }

    #[test]
    fn enlarging_the_cutoff_never_decreases_moments(seed in 0u64..300, k in 0u32..3) {
        let cfg = small_cloud(seed, 1, 20.0, 1.5);
        prop_assume!(!cfg.is_empty());
        let base = RateKernel::mott(1.0, 0.3).unwrap();
        let small = moment_lambda_k(&cfg, &base.clone().with_cutoff(1.5).unwrap(), k).0;
        let large = moment_lambda_k(&cfg, &base.with_cutoff(3.0).unwrap(), k).0;
        for (s, l) in small.iter().zip(&large) {
            // summation order differs between cell partitions; allow for
            // reassociation roundoff
            prop_assert!(*l >= s - 1e-12 * (1.0 + s.abs()));
        }
    }

    #[test]
    fn generator_kills_constants_and_forms_match(seed in 0u64..300) {
        let cfg = small_cloud(seed, 2, 6.0, 1.2);
        prop_assume!(cfg.len() >= 2);
        let kernel = RateKernel::mott(1.0, 0.5).unwrap().with_cutoff(2.5).unwrap();
        let gen = Generator::build(&cfg, &kernel, 0.5).unwrap();
        let ones = vec![1.0; gen.node_count()];
        prop_assert!(gen.apply(&ones).iter().all(|v| *v == 0.0));
        let f: Vec<f64> = (0..gen.node_count()).map(|k| ((k * 37 + seed as usize) % 11) as f64).collect();
        let g: Vec<f64> = (0..gen.node_count()).map(|k| ((k * 17 + 3) % 7) as f64).collect();
        let lhs = -gen.inner_mu(&gen.apply(&f), &g);
        let rhs = gen.dirichlet_form(&f, &g);
        let scale = lhs.abs().max(rhs.abs()).max(1e-30);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
    }

    #[test]
    fn exclusion_conserves_particles(seed in 0u64..200, horizon in 0.5f64..4.0) {
        let cfg = small_cloud(seed, 1, 15.0, 1.5);
        prop_assume!(cfg.len() >= 2);
        let kernel = RateKernel::mott(1.0, 0.2).unwrap().with_cutoff(3.0).unwrap();
        let schedule = ClockSchedule::build(&cfg, &kernel, horizon, horizon / 2.0, seed).unwrap();
        let eta = ExclusionState::bernoulli_profile(&cfg, |_| 0.4, 1.0, seed + 999);
        let count = eta.particle_count();
        let states = evolve_exclusion(&eta, &schedule, &[horizon / 2.0, horizon]).unwrap();
        for s in states {
            prop_assert_eq!(s.particle_count(), count);
            prop_assert!(s.occupation.iter().all(|v| *v <= 1));
        }
    }
}

#[test]
fn translation_covariance_of_palm_averages() {
    // shifting a diluted lattice by an integer vector (mod L) leaves the
    // Palm average of every catalog observable unchanged to 1e-12 relative
    let cfg = MarkedConfiguration::sample_diluted_lattice(
        2,
        12,
        0.7,
        &MarkDistribution::Uniform { a: -1.0, b: 1.0 },
        9,
    )
    .unwrap();
    let kernel = RateKernel::mott(1.0, 0.5).unwrap().with_cutoff(3.0).unwrap();
    let eps = 0.5;
    let phi = TestFunction::One;
    for shift in [[1.0, 0.0], [0.0, 3.0], [5.0, 7.0]] {
        let shifted = cfg.translated(&shift);
        for obs in [
            LocalObservable::One,
            LocalObservable::Lambda0,
            LocalObservable::Lambda1,
            LocalObservable::Lambda2,
            LocalObservable::FStar,
        ] {
            let base = palm_average(&cfg, &kernel, obs, &phi, eps).unwrap();
            let moved = palm_average(&shifted, &kernel, obs, &phi, eps).unwrap();
            assert!(
                (base - moved).abs() <= 1e-12 * base.abs().max(1e-300),
                "{obs:?} shifted by {shift:?}: {base} vs {moved}"
            );
        }
    }
}

#[test]
fn palm_lambda2_matches_independent_ensemble() {
    // spatial-average pairings of lambda_2 against the ensemble estimate
    // of m * int(phi) * E_0[lambda_2] over independent seeds
    let dim = 1;
    let m = 2.0;
    let side = 200.0;
    let kernel = RateKernel::mott(1.5, 0.5).unwrap();
    let eps = 0.02; // scaled box side 4
    let marks = MarkDistribution::Uniform { a: -1.0, b: 1.0 };
    let phi = TestFunction::by_id("gauss", dim, eps * side).unwrap();
    let torus = Torus::new(dim, eps * side);
    let phi_mass = phi.mass(&torus, 8192);

    // ensemble oracle: E_0[lambda_2] from >= 100 independent samples
    let n_ensemble = 120;
    let mut palm_means = Vec::with_capacity(n_ensemble);
    for s in 0..n_ensemble as u64 {
        let cfg =
            MarkedConfiguration::sample_poisson(dim, 40.0, m, &marks, 10_000 + s).unwrap();
        let (_, mean) = moment_lambda_k(&cfg, &kernel, 2);
        palm_means.push(mean);
    }
    let stats = |values: &[f64]| {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        (mean, (var / (n - 1.0)).sqrt())
    };
    let (e0, se_ensemble) = stats(&palm_means);
    let target = m * phi_mass * e0;

    // pairing side: a dozen independent large samples
    let pairings: Vec<f64> = (0..12u64)
        .map(|s| {
            let cfg =
                MarkedConfiguration::sample_poisson(dim, side, m, &marks, 500 + s).unwrap();
            palm_average(&cfg, &kernel, LocalObservable::Lambda2, &phi, eps).unwrap()
        })
        .collect();
    let (mean_pairing, se_pairing) = stats(&pairings);

    let combined = (se_pairing * se_pairing
        + (m * phi_mass * se_ensemble) * (m * phi_mass * se_ensemble))
        .sqrt();
    assert!(
        (mean_pairing - target).abs() <= 3.0 * combined,
        "pairings {mean_pairing} vs ensemble target {target} (3se = {})",
        3.0 * combined
    );
}

#[test]
fn window_convergence_of_effective_matrix() {
    // inter-seed spread of D on boxes L, 2L, 4L shrinks; at 4L it is
    // below half the spread at L (d = 2: spread ~ 1/L)
    let kernel = RateKernel::mott(2.0, 0.5).unwrap();
    let marks = MarkDistribution::Uniform { a: -1.0, b: 1.0 };
    let spread_at = |side: f64, n_seeds: u64| -> f64 {
        let values: Vec<f64> = (0..n_seeds)
            .map(|s| {
                let cfg = MarkedConfiguration::sample_poisson(
                    2,
                    side,
                    2.0,
                    &marks,
                    20_000 + 97 * s,
                )
                .unwrap();
                let d = effective_matrix(&cfg, &kernel, 0.0, 1e-11, 1e-8).unwrap();
                d.entry(0, 0)
            })
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64)
            .sqrt()
    };
    let s1 = spread_at(8.0, 20);
    let s2 = spread_at(16.0, 20);
    let s4 = spread_at(32.0, 20);
    assert!(s2 < s1, "spread did not shrink: {s1} -> {s2}");
    assert!(
        s4 < 0.5 * s1,
        "spread at 4L ({s4}) is not below half the spread at L ({s1})"
    );
}

#[test]
fn hydro_gap_at_time_zero_is_initial_fluctuation() {
    // at t = 0 the pairing gap is pure Bernoulli/environment noise, with
    // the central-limit eps^{d/2} scaling across the ladder
    use hoplab::effective::EffectiveMatrix;
    use hoplab::exclusion::{hydrodynamic_experiment, HydroParams, Profile};
    let marks = MarkDistribution::Constant { value: 0.0 };
    let kernel = RateKernel::mott(2.0, 0.0).unwrap();
    let rho0 = Profile::Step { threshold: 3.0 };
    let phis = vec![(
        "gauss".to_string(),
        TestFunction::by_id("gauss", 1, 6.0).unwrap(),
    )];
    let seeds: Vec<u64> = (1..=60).collect();
    let params = HydroParams {
        dim: 1,
        macro_side: 6.0,
        intensity: 4.0,
        marks: &marks,
        kernel: &kernel,
        rho0: &rho0,
        t: 0.0,
        eps_list: &[0.1, 0.05],
        phis: &phis,
        seeds: &seeds,
        grid_n: 128,
    };
    let dmat = EffectiveMatrix::diagonal(&[0.5]);
    let report = hydrodynamic_experiment(&params, &dmat).unwrap();
    let spread_01 = report.cells[0].seed_spread;
    let spread_005 = report.cells[1].seed_spread;
    let ratio = spread_005 / spread_01;
    assert!(
        (0.4..1.0).contains(&ratio),
        "seed spreads {spread_01} -> {spread_005} do not show the sqrt(eps) scaling"
    );
    // no bias at t = 0: the mean pairing sits within a few standard
    // errors of the prediction
    for cell in &report.cells {
        let se = cell.seed_spread / (seeds.len() as f64).sqrt();
        assert!(
            (cell.empirical_mean - cell.prediction).abs() < 4.0 * se,
            "eps {}: mean {} vs prediction {}",
            cell.eps,
            cell.empirical_mean,
            cell.prediction
        );
    }
}

#[test]
fn homogeneous_lattice_pipeline_metrics_decrease() {
    // the full resolvent pipeline on the unit lattice: every comparison
    // metric falls strictly down the eps ladder
    use hoplab::config::RunConfig;
    use hoplab::experiments;
    let text = r#"
experiment = "homogenize"
seeds = [1, 2, 3]

[environment]
kind = "diluted_lattice"
d = 2
l = 10
p = 1.0

[environment.marks]
kind = "constant"
value = 0.0

[kernel]
kind = "constant_range"
c0 = 1.0
r = 1.0

[params]
eps_list = [0.2, 0.1, 0.05]
lambda = 1.0
macro_side = 2.0
phi = ["gauss"]
f = "gauss"
grid_n = 256
d_seeds = 2
"#;
    let config = RunConfig::from_toml(text).unwrap();
    let dir = std::env::temp_dir().join(format!("hoplab-lattice-ladder-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let result = experiments::run(&config, &dir).unwrap();
    // the lattice effective matrix is the identity
    let d = result.summary["metrics"]["D"].as_array().unwrap();
    assert!((d[0].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!(d[1].as_f64().unwrap().abs() < 1e-9);
    let per_eps = result.summary["metrics"]["per_eps"].as_array().unwrap();
    for key in ["strong_rel", "weak_max", "energy_gap", "flow_max"] {
        let values: Vec<f64> = per_eps
            .iter()
            .map(|row| row[key].as_f64().unwrap())
            .collect();
        for w in values.windows(2) {
            assert!(w[1] < w[0], "{key} not decreasing: {values:?}");
        }
    }
}

#[test]
fn msd_on_z2_is_4t() {
    let cfg = MarkedConfiguration::sample_diluted_lattice(
        2,
        40,
        1.0,
        &MarkDistribution::Constant { value: 0.0 },
        2,
    )
    .unwrap();
    let kernel = RateKernel::constant_range(1.0, 1.0).unwrap();
    let gen = Generator::build(&cfg, &kernel, 1.0).unwrap();
    let starts: Vec<usize> = (0..gen.node_count()).step_by(40).collect();
    let curve = hoplab::walkers::msd(&gen, &starts, 25.0, 2, 150, 5);
    for (t, (value, err)) in curve.times.iter().zip(curve.msd.iter().zip(&curve.stderr)) {
        assert!(
            (value - 4.0 * t).abs() < 4.0 * err.max(1.0),
            "t {t}: msd {value} vs {}",
            4.0 * t
        );
    }
}
