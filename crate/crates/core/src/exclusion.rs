//! Simple exclusion process via the graphical construction.
//!
//! Every unordered positive-rate edge carries an independent Poisson clock
//! with intensity `c_xy`; at each ring the occupations of the endpoints
//! are exchanged. A swap is a no-op unless exactly one endpoint is
//! occupied, so the exchange dynamics realizes the exclusion jumps for
//! symmetric rates. On a finite sample the rings are processed in one
//! global time order; the slice/component machinery that defines the
//! infinite-volume dynamics is kept as a percolation diagnostic.

use std::collections::BTreeMap;

use rand::RngExt;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::TestFunction;
use crate::effective::EffectiveMatrix;
use crate::environment::{MarkDistribution, MarkedConfiguration};
use crate::error::{Error, Result};
use crate::macroscale::{heat_semigroup, DensityField, Grid};
use crate::microscale::Generator;
use crate::rates::RateKernel;
use crate::rng;
use crate::torus::Torus;
use crate::unionfind::UnionFind;
use crate::walkers;

/// An edge of the clock schedule with its sorted ring times.
#[derive(Debug, Clone)]
pub struct ScheduleEdge {
    pub i: u32,
    pub j: u32,
    pub rate: f64,
    pub rings: Vec<f64>,
}

/// Poisson ring times per edge over a finite horizon.
#[derive(Debug, Clone)]
pub struct ClockSchedule {
    pub node_count: usize,
    pub horizon: f64,
    /// Slice length for the percolation diagnostic.
    pub slice: f64,
    pub seed: u64,
    pub edges: Vec<ScheduleEdge>,
}

impl ClockSchedule {
    /// Independent Poisson clocks on explicit weighted edges.
    pub fn from_edges(
        edges: impl IntoIterator<Item = (u32, u32, f64)>,
        node_count: usize,
        horizon: f64,
        slice: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::parameter("T", "must be > 0"));
        }
        if !(slice > 0.0) {
            return Err(Error::parameter("t0", "must be > 0"));
        }
        let edges: Vec<ScheduleEdge> = edges
            .into_iter()
            .enumerate()
            .map(|(idx, (i, j, rate))| {
                let mut rng = rng::stream(seed, "clock", idx as u64);
                let mean = rate * horizon;
                let count = if mean > 0.0 {
                    Poisson::new(mean).expect("positive mean").sample(&mut rng) as usize
                } else {
                    0
                };
                let mut rings: Vec<f64> =
                    (0..count).map(|_| horizon * rng.random::<f64>()).collect();
                rings.sort_by(|a, b| a.partial_cmp(b).unwrap());
                ScheduleEdge { i, j, rate, rings }
            })
            .collect();
        Ok(ClockSchedule {
            node_count,
            horizon,
            slice,
            seed,
            edges,
        })
    }

    /// Clocks on all positive-rate pairs of a sample.
    pub fn build(
        cfg: &MarkedConfiguration,
        kernel: &RateKernel,
        horizon: f64,
        slice: f64,
        seed: u64,
    ) -> Result<Self> {
        if cfg.is_empty() {
            return Ok(ClockSchedule {
                node_count: 0,
                horizon,
                slice,
                seed,
                edges: Vec::new(),
            });
        }
        let gen = Generator::build(cfg, kernel, 1.0)?;
        Self::from_edges(
            gen.edges.iter().map(|e| (e.i, e.j, e.rate)),
            cfg.len(),
            horizon,
            slice,
            seed,
        )
    }

    pub fn ring_count(&self) -> usize {
        self.edges.iter().map(|e| e.rings.len()).sum()
    }

    /// All rings merged in global time order (ties broken by edge index).
    pub fn merged_rings(&self) -> Vec<(f64, u32)> {
        let mut rings: Vec<(f64, u32)> = Vec::with_capacity(self.ring_count());
        for (idx, e) in self.edges.iter().enumerate() {
            for t in &e.rings {
                rings.push((*t, idx as u32));
            }
        }
        rings.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rings
    }

    pub fn slice_count(&self) -> usize {
        (self.horizon / self.slice).ceil() as usize
    }
}

/// Component-size histogram of one time slice of the ring graph.
#[derive(Debug, Clone, Serialize)]
pub struct ComponentHistogram {
    /// size -> number of components of that size
    pub sizes: BTreeMap<usize, usize>,
    pub max_size: usize,
    pub component_count: usize,
}

/// Union-find over the edges that ring at least once in
/// `(r t0, (r+1) t0]`.
pub fn percolation_components(
    schedule: &ClockSchedule,
    slice_index: usize,
) -> Result<ComponentHistogram> {
    let lo = slice_index as f64 * schedule.slice;
    let hi = lo + schedule.slice;
    if lo >= schedule.horizon {
        return Err(Error::Domain(format!(
            "slice {slice_index} starts at {lo}, beyond the horizon {}",
            schedule.horizon
        )));
    }
    let mut uf = UnionFind::new(schedule.node_count);
    for e in &schedule.edges {
        let ringing = e
            .rings
            .iter()
            .any(|t| *t > lo && *t <= hi);
        if ringing {
            uf.union(e.i as usize, e.j as usize);
        }
    }
    let mut sizes = BTreeMap::new();
    let mut max_size = 0;
    for s in uf.component_sizes() {
        *sizes.entry(s).or_insert(0) += 1;
        max_size = max_size.max(s);
    }
    Ok(ComponentHistogram {
        sizes,
        max_size,
        component_count: uf.component_count(),
    })
}

/// Occupation state of the exclusion process.
#[derive(Debug, Clone, PartialEq)]
pub struct ExclusionState {
    pub occupation: Vec<u8>,
    pub time: f64,
}

impl ExclusionState {
    pub fn new(occupation: Vec<u8>) -> Self {
        assert!(occupation.iter().all(|v| *v <= 1));
        ExclusionState {
            occupation,
            time: 0.0,
        }
    }

    pub fn constant(node_count: usize, occupied: bool) -> Self {
        ExclusionState {
            occupation: vec![u8::from(occupied); node_count],
            time: 0.0,
        }
    }

    /// Independent Bernoulli occupations with site probability
    /// `rho(eps x)`, the standard local-equilibrium initial data.
    pub fn bernoulli_profile(
        cfg: &MarkedConfiguration,
        rho: impl Fn(&[f64]) -> f64,
        eps: f64,
        seed: u64,
    ) -> Self {
        let mut rng = rng::stream(seed, "bernoulli", 0);
        let mut x = [0.0; 3];
        let occupation = (0..cfg.len())
            .map(|i| {
                for k in 0..cfg.dim {
                    x[k] = eps * cfg.position(i)[k];
                }
                let p = rho(&x[..cfg.dim]).clamp(0.0, 1.0);
                u8::from(rng.random::<f64>() < p)
            })
            .collect();
        ExclusionState {
            occupation,
            time: 0.0,
        }
    }

    pub fn particle_count(&self) -> usize {
        self.occupation.iter().map(|v| *v as usize).sum()
    }
}

/// Run the graphical construction, recording the state at each requested
/// observation time (ascending, within the schedule horizon).
pub fn evolve_exclusion(
    state0: &ExclusionState,
    schedule: &ClockSchedule,
    obs_times: &[f64],
) -> Result<Vec<ExclusionState>> {
    if state0.occupation.len() != schedule.node_count {
        return Err(Error::Domain(format!(
            "state has {} sites, schedule {}",
            state0.occupation.len(),
            schedule.node_count
        )));
    }
    for w in obs_times.windows(2) {
        if w[1] < w[0] {
            return Err(Error::Domain("observation times must be ascending".into()));
        }
    }
    if let Some(last) = obs_times.last() {
        if *last > schedule.horizon {
            return Err(Error::Domain(format!(
                "observation time {last} beyond the schedule horizon {}",
                schedule.horizon
            )));
        }
    }
    let rings = schedule.merged_rings();
    let mut occ = state0.occupation.clone();
    let mut out = Vec::with_capacity(obs_times.len());
    let mut ring_idx = 0;
    for &t_obs in obs_times {
        while ring_idx < rings.len() && rings[ring_idx].0 <= t_obs {
            let e = &schedule.edges[rings[ring_idx].1 as usize];
            occ.swap(e.i as usize, e.j as usize);
            ring_idx += 1;
        }
        out.push(ExclusionState {
            occupation: occ.clone(),
            time: t_obs,
        });
    }
    Ok(out)
}

/// Rescaled empirical density field `eps^d sum phi(eps x) eta_x`.
pub fn empirical_density(
    cfg: &MarkedConfiguration,
    state: &ExclusionState,
    eps: f64,
    phi: &TestFunction,
) -> f64 {
    assert_eq!(cfg.len(), state.occupation.len());
    let scaled = Torus::new(cfg.dim, eps * cfg.box_side);
    let mut x = [0.0; 3];
    let mut sum = 0.0;
    for i in 0..cfg.len() {
        if state.occupation[i] == 0 {
            continue;
        }
        for k in 0..cfg.dim {
            x[k] = eps * cfg.position(i)[k];
        }
        sum += phi.eval(&x[..cfg.dim], &scaled);
    }
    eps.powi(cfg.dim as i32) * sum
}

/// Suggested slice length from the subcritical-percolation criterion
/// `m C1 t0 int g < 1` with `C1 = 1` and `g` the kernel envelope
/// (`exp(-gamma r)` for the hopping law, the indicator for constant
/// range). `safety` is the target value of the product, well below 1.
/// Explicit tables carry no envelope: `None`, with the caveat left to the
/// caller.
pub fn suggest_slice_length(
    kernel: &RateKernel,
    dim: usize,
    intensity: f64,
    safety: f64,
) -> Option<f64> {
    assert!((0.0..1.0).contains(&safety) && safety > 0.0);
    let g_integral = match kernel {
        RateKernel::Mott { gamma, .. } => match dim {
            1 => 2.0 / gamma,
            2 => 2.0 * std::f64::consts::PI / (gamma * gamma),
            3 => 8.0 * std::f64::consts::PI / (gamma * gamma * gamma),
            _ => return None,
        },
        RateKernel::ConstantRange { c0, range, .. } => {
            let ball = match dim {
                1 => 2.0 * range,
                2 => std::f64::consts::PI * range * range,
                3 => 4.0 / 3.0 * std::f64::consts::PI * range.powi(3),
                _ => return None,
            };
            c0 * ball
        }
        RateKernel::Table { .. } => return None,
    };
    if intensity <= 0.0 || g_integral <= 0.0 {
        return None;
    }
    Some(safety / (intensity * g_integral))
}

/// Macroscopic initial profiles for hydrodynamic experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant { value: f64 },
    /// `rho = 1` for `x_1 < threshold`, else 0.
    Step { threshold: f64 },
    /// Smooth bump `value * exp(1 - 1/(1 - (r/radius)^2))` around center.
    Bump {
        center: Vec<f64>,
        radius: f64,
        value: f64,
    },
}

impl Profile {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Profile::Constant { value } => (0.0..=1.0).contains(value),
            Profile::Step { .. } => true,
            Profile::Bump { value, radius, .. } => (0.0..=1.0).contains(value) && *radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::parameter("rho0", "profile values must lie in [0, 1]"))
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::Step { threshold } => {
                if x[0] < *threshold {
                    1.0
                } else {
                    0.0
                }
            }
            Profile::Bump {
                center,
                radius,
                value,
            } => {
                let r2: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                let s2 = r2 / (radius * radius);
                if s2 >= 1.0 {
                    0.0
                } else {
                    value * (1.0 - 1.0 / (1.0 - s2)).exp()
                }
            }
        }
    }
}

/// Parameters of a hydrodynamic-limit experiment.
#[derive(Debug, Clone)]
pub struct HydroParams<'a> {
    pub dim: usize,
    pub macro_side: f64,
    pub intensity: f64,
    pub marks: &'a MarkDistribution,
    pub kernel: &'a RateKernel,
    pub rho0: &'a Profile,
    /// Macroscopic time; the process runs to `t / eps^2`.
    pub t: f64,
    pub eps_list: &'a [f64],
    pub phis: &'a [(String, TestFunction)],
    pub seeds: &'a [u64],
    pub grid_n: usize,
}

/// One (eps, phi) cell of the hydrodynamic report. The macroscopic
/// prediction pairs against the mass measure: `m int phi P_t rho0 dx`.
#[derive(Debug, Clone, Serialize)]
pub struct HydroCell {
    pub eps: f64,
    pub phi_id: String,
    pub prediction: f64,
    pub empirical_mean: f64,
    pub mean_abs_gap: f64,
    pub median_abs_gap: f64,
    pub seed_spread: f64,
}

/// Density-profile output on a 1D binning grid, for plotting.
#[derive(Debug, Clone, Serialize)]
pub struct HydroProfile {
    pub eps: f64,
    pub bin_centers: Vec<f64>,
    /// Seed-averaged occupation density per unit volume.
    pub empirical: Vec<f64>,
    /// `m P_t rho0` on the same centers.
    pub prediction: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HydroReport {
    pub cells: Vec<HydroCell>,
    pub profiles: Vec<HydroProfile>,
}

/// Run the exclusion process across the eps ladder and compare empirical
/// density pairings with the heat-semigroup prediction.
pub fn hydrodynamic_experiment(
    params: &HydroParams<'_>,
    dmat: &EffectiveMatrix,
) -> Result<HydroReport> {
    let grid = Grid::new(params.dim, params.macro_side, params.grid_n);
    let rho0_field = DensityField::from_fn(grid, |x| params.rho0.eval(x));
    let rho_t = heat_semigroup(dmat, params.t, &rho0_field);
    let mut cells = Vec::new();
    let mut profiles = Vec::new();
    for (eps_idx, &eps) in params.eps_list.iter().enumerate() {
        let micro_side = params.macro_side / eps;
        let horizon = params.t / (eps * eps);
        let slice = suggest_slice_length(params.kernel, params.dim, params.intensity, 0.25)
            .unwrap_or(horizon / 16.0)
            .min(horizon);
        let per_seed: Vec<(Vec<f64>, Vec<f64>)> = params
            .seeds
            .par_iter()
            .map(|&run_seed| -> Result<(Vec<f64>, Vec<f64>)> {
                let env_seed = rng::substream(run_seed, "hydro-env", eps_idx as u64);
                let cfg = MarkedConfiguration::sample_poisson(
                    params.dim,
                    micro_side,
                    params.intensity,
                    params.marks,
                    env_seed,
                )?;
                if cfg.is_empty() {
                    return Ok((vec![0.0; params.phis.len()], Vec::new()));
                }
                let eta0 = ExclusionState::bernoulli_profile(
                    &cfg,
                    |x| params.rho0.eval(x),
                    eps,
                    rng::substream(run_seed, "hydro-init", eps_idx as u64),
                );
                let final_state = if horizon > 0.0 {
                    let schedule = ClockSchedule::build(
                        &cfg,
                        params.kernel,
                        horizon,
                        slice,
                        rng::substream(run_seed, "hydro-clock", eps_idx as u64),
                    )?;
                    evolve_exclusion(&eta0, &schedule, &[horizon])?
                        .pop()
                        .expect("one observation")
                } else {
                    eta0
                };
                let densities: Vec<f64> = params
                    .phis
                    .iter()
                    .map(|(_, phi)| empirical_density(&cfg, &final_state, eps, phi))
                    .collect();
                // 1d binning for the profile output
                let mut bins = Vec::new();
                if params.dim == 1 {
                    let nb = params.grid_n;
                    bins = vec![0.0; nb];
                    let bw = params.macro_side / nb as f64;
                    for i in 0..cfg.len() {
                        if final_state.occupation[i] == 1 {
                            let x = eps * cfg.position(i)[0];
                            let b = ((x / bw) as usize).min(nb - 1);
                            bins[b] += 1.0;
                        }
                    }
                    // rescaled density per unit macroscopic volume:
                    // eps^d * count / bin width
                    for b in bins.iter_mut() {
                        *b *= eps / bw;
                    }
                }
                Ok((densities, bins))
            })
            .collect::<Result<Vec<_>>>()?;
        for (phi_idx, (phi_id, phi)) in params.phis.iter().enumerate() {
            let phi_field = DensityField::from_test_function(grid, phi);
            let prediction = params.intensity * rho_t.inner(&phi_field);
            let values: Vec<f64> = per_seed.iter().map(|(d, _)| d[phi_idx]).collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let mut gaps: Vec<f64> = values.iter().map(|v| (v - prediction).abs()).collect();
            gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mean_abs_gap = gaps.iter().sum::<f64>() / n;
            let median_abs_gap = gaps[gaps.len() / 2];
            let spread = (values
                .iter()
                .map(|v| (v - mean) * (v - mean))
                .sum::<f64>()
                / n)
                .sqrt();
            cells.push(HydroCell {
                eps,
                phi_id: phi_id.clone(),
                prediction,
                empirical_mean: mean,
                mean_abs_gap,
                median_abs_gap,
                seed_spread: spread,
            });
        }
        if params.dim == 1 {
            let nb = params.grid_n;
            let bw = params.macro_side / nb as f64;
            let mut empirical = vec![0.0; nb];
            let mut contributing = 0.0;
            for (_, bins) in &per_seed {
                if bins.is_empty() {
                    continue;
                }
                contributing += 1.0;
                for (acc, b) in empirical.iter_mut().zip(bins) {
                    *acc += b;
                }
            }
            if contributing > 0.0 {
                for acc in empirical.iter_mut() {
                    *acc /= contributing;
                }
            }
            let bin_centers: Vec<f64> = (0..nb).map(|b| (b as f64 + 0.5) * bw).collect();
            let prediction: Vec<f64> = bin_centers
                .iter()
                .map(|x| params.intensity * rho_t.interpolate(&[*x]))
                .collect();
            profiles.push(HydroProfile {
                eps,
                bin_centers,
                empirical,
                prediction,
            });
        }
    }
    Ok(HydroReport { cells, profiles })
}

/// Pathwise-representation check on a small graph: the Monte Carlo mean of
/// `eta_x(t)` over schedules against `sum_y p(t,x,y) eta_y(0)` with the
/// dense kernel (the martingale term vanishes in mean).
#[derive(Debug, Clone, Serialize)]
pub struct DualityReport {
    pub mc_mean: Vec<f64>,
    pub exact: Vec<f64>,
    pub stderr: Vec<f64>,
    pub max_std_residual: f64,
    pub n_schedules: usize,
}

pub const DUALITY_NODE_CAP: usize = 50;

pub fn duality_check(
    gen: &Generator,
    state0: &ExclusionState,
    t: f64,
    n_schedules: usize,
    seed: u64,
) -> Result<DualityReport> {
    let n = gen.node_count();
    if n > DUALITY_NODE_CAP {
        return Err(Error::Size(format!(
            "duality check capped at {DUALITY_NODE_CAP} nodes, got {n}"
        )));
    }
    if (gen.eps - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(
            "duality check runs on the unscaled generator (eps = 1)".into(),
        ));
    }
    if state0.occupation.len() != n {
        return Err(Error::Domain("state size mismatch".into()));
    }
    let eta0: Vec<f64> = state0.occupation.iter().map(|v| f64::from(*v)).collect();
    let exact = walkers::semigroup_exact(gen, t, &eta0)?;
    if t == 0.0 {
        return Ok(DualityReport {
            mc_mean: eta0.clone(),
            exact,
            stderr: vec![0.0; n],
            max_std_residual: 0.0,
            n_schedules,
        });
    }
    let sums: Vec<(Vec<f64>, Vec<f64>)> = (0..n_schedules)
        .into_par_iter()
        .map(|rep| {
            let schedule = ClockSchedule::from_edges(
                gen.edges.iter().map(|e| (e.i, e.j, e.rate)),
                n,
                t,
                t,
                rng::substream(seed, "duality", rep as u64),
            )
            .expect("schedule");
            let state = evolve_exclusion(state0, &schedule, &[t])
                .expect("evolution")
                .pop()
                .expect("one observation");
            let v: Vec<f64> = state.occupation.iter().map(|v| f64::from(*v)).collect();
            let sq: Vec<f64> = v.clone();
            (v, sq)
        })
        .collect();
    let mut mean = vec![0.0; n];
    let mut mean_sq = vec![0.0; n];
    for (v, sq) in &sums {
        for k in 0..n {
            mean[k] += v[k];
            mean_sq[k] += sq[k] * sq[k];
        }
    }
    let ns = n_schedules as f64;
    let mut stderr = vec![0.0; n];
    let mut max_std = 0.0f64;
    for k in 0..n {
        mean[k] /= ns;
        let var = (mean_sq[k] / ns - mean[k] * mean[k]).max(0.0);
        stderr[k] = (var / (ns - 1.0).max(1.0)).sqrt();
        let resid = (mean[k] - exact[k]).abs() / stderr[k].max(1e-9);
        max_std = max_std.max(resid);
    }
    Ok(DualityReport {
        mc_mean: mean,
        exact,
        stderr,
        max_std_residual: max_std,
        n_schedules,
    })
}
