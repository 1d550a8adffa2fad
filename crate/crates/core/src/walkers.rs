//! Continuous-time random walks on a generator and their semigroup.
//!
//! The walk holds at node `a` for an exponential time with rate
//! `eps^{-2} lambda_0(a)` and jumps to a neighbor with probability
//! proportional to the edge rate (alias tables per node give O(1)
//! selection). The cutoff keeps every `lambda_0` finite, so explosion
//! cannot occur on a sample.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::microscale::Generator;
use crate::rng;
use rand::{Rng, RngExt};

/// Maximum node count for the dense exponential.
pub const DENSE_EXP_CAP: usize = 2000;

#[derive(Debug, Clone)]
pub struct WalkTrajectory {
    pub start: usize,
    /// Jump instants, strictly increasing.
    pub times: Vec<f64>,
    /// Node after each jump.
    pub nodes: Vec<usize>,
    pub horizon: f64,
    pub seed: u64,
}

impl WalkTrajectory {
    pub fn final_node(&self) -> usize {
        self.nodes.last().copied().unwrap_or(self.start)
    }

    pub fn jump_count(&self) -> usize {
        self.times.len()
    }
}

/// One Gillespie step: holding time and next node, or `None` at an
/// isolated node. Also reports the signed scaled displacement.
fn step<R: Rng + RngExt>(
    gen: &Generator,
    node: usize,
    rng: &mut R,
    disp: &mut [f64],
) -> Option<(f64, usize)> {
    let rate = gen.degree[node] / (gen.eps * gen.eps);
    if rate <= 0.0 {
        return None;
    }
    let dt = rng::exp_time(rng, rate);
    let tables = gen.alias_tables();
    let pick = tables[node].sample(rng);
    let (neighbor, _, edge_idx, forward) = gen.neighbors(node).nth(pick).expect("valid pick");
    let e = &gen.edges[edge_idx];
    let sign = if forward { 1.0 } else { -1.0 };
    for k in 0..gen.dim {
        disp[k] = sign * gen.eps * e.disp[k];
    }
    Some((dt, neighbor))
}

/// Simulate the walk from `start` up to the time horizon.
pub fn simulate_walk(gen: &Generator, start: usize, horizon: f64, seed: u64) -> WalkTrajectory {
    assert!(start < gen.node_count());
    let mut rng = rng::stream(seed, "walk", start as u64);
    let mut t = 0.0;
    let mut node = start;
    let mut times = Vec::new();
    let mut nodes = Vec::new();
    let mut disp = [0.0; 3];
    while let Some((dt, next)) = step(gen, node, &mut rng, &mut disp) {
        if t + dt > horizon {
            break;
        }
        t += dt;
        node = next;
        times.push(t);
        nodes.push(node);
    }
    WalkTrajectory {
        start,
        times,
        nodes,
        horizon,
        seed,
    }
}

/// Monte Carlo semigroup estimate: per node, the average of `f(X_t)` over
/// `n_samples` independent walks started there, with standard errors.
pub fn semigroup_mc(
    gen: &Generator,
    t: f64,
    f: &[f64],
    n_samples: usize,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    assert!(t >= 0.0 && n_samples >= 1);
    assert_eq!(f.len(), gen.node_count());
    gen.alias_tables(); // build once before the parallel section
    let results: Vec<(f64, f64)> = (0..gen.node_count())
        .into_par_iter()
        .map(|start| {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            let mut disp = [0.0; 3];
            for replica in 0..n_samples {
                let mut rng = rng::stream2(seed, "semigroup", start as u64, replica as u64);
                let mut node = start;
                let mut time = 0.0;
                loop {
                    match step(gen, node, &mut rng, &mut disp) {
                        Some((dt, next)) if time + dt <= t => {
                            time += dt;
                            node = next;
                        }
                        _ => break,
                    }
                }
                let v = f[node];
                sum += v;
                sum_sq += v * v;
            }
            let n = n_samples as f64;
            let mean = sum / n;
            let var = (sum_sq / n - mean * mean).max(0.0);
            let stderr = if n_samples > 1 {
                (var / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            (mean, stderr)
        })
        .collect();
    let mut means = Vec::with_capacity(results.len());
    let mut errs = Vec::with_capacity(results.len());
    for (m, e) in results {
        means.push(m);
        errs.push(e);
    }
    (means, errs)
}

/// Dense `exp(t L) f` by Pade scaling-and-squaring; desk-scale oracle.
pub fn semigroup_exact(gen: &Generator, t: f64, f: &[f64]) -> Result<Vec<f64>> {
    let n = gen.node_count();
    if n > DENSE_EXP_CAP {
        return Err(Error::Size(format!(
            "dense exponential capped at {DENSE_EXP_CAP} nodes, got {n}"
        )));
    }
    assert!(t >= 0.0);
    assert_eq!(f.len(), n);
    if t == 0.0 {
        return Ok(f.to_vec());
    }
    let l = gen.dense_matrix() * t;
    let e = linalg::expm(&l);
    let out = e * DVector::from_column_slice(f);
    Ok(out.data.into())
}

/// `exp(t L) f` by uniformization: with `Lambda >= max rate`, the matrix
/// `P = I + L / Lambda` is stochastic and
/// `exp(tL) f = sum_k Poisson_{Lambda t}(k) P^k f`, all terms nonnegative.
/// Truncated when the accumulated Poisson mass reaches `1 - tail_tol`;
/// works matrix-free at any size.
pub fn semigroup_apply(gen: &Generator, t: f64, f: &[f64], tail_tol: f64) -> Vec<f64> {
    assert!(t >= 0.0);
    assert_eq!(f.len(), gen.node_count());
    let inv_eps2 = 1.0 / (gen.eps * gen.eps);
    let lambda_max = gen.degree.iter().cloned().fold(0.0, f64::max) * inv_eps2;
    let m = lambda_max * t;
    if m == 0.0 {
        return f.to_vec();
    }
    let ln_m = m.ln();
    let mut v = f.to_vec();
    let mut out = vec![0.0; f.len()];
    let mut ln_fact = 0.0;
    let mut mass = 0.0;
    let k_cap = (m + 12.0 * m.sqrt() + 40.0).ceil() as usize;
    let mut scratch = vec![0.0; f.len()];
    for k in 0..=k_cap {
        if k > 0 {
            ln_fact += (k as f64).ln();
            // v <- P v = v + (L / Lambda) v
            scratch.copy_from_slice(&v);
            for e in &gen.edges {
                let (i, j) = (e.i as usize, e.j as usize);
                let flow = inv_eps2 * e.rate / lambda_max * (scratch[j] - scratch[i]);
                v[i] += flow;
                v[j] -= flow;
            }
        }
        let w = (-m + k as f64 * ln_m - ln_fact).exp();
        if w > 0.0 {
            for (o, vv) in out.iter_mut().zip(&v) {
                *o += w * vv;
            }
            mass += w;
        }
        if mass >= 1.0 - tail_tol && k as f64 > m {
            break;
        }
    }
    out
}

/// Mean-square displacement curve at geometric checkpoints
/// `t_k = horizon / 2^{K-k}`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MsdCurve {
    pub times: Vec<f64>,
    pub msd: Vec<f64>,
    pub stderr: Vec<f64>,
    pub replicas: usize,
}

impl MsdCurve {
    /// Least-squares slope of msd against t through the origin, over the
    /// last `tail` checkpoints.
    pub fn tail_slope(&self, tail: usize) -> f64 {
        let k0 = self.times.len().saturating_sub(tail);
        let mut num = 0.0;
        let mut den = 0.0;
        for k in k0..self.times.len() {
            num += self.times[k] * self.msd[k];
            den += self.times[k] * self.times[k];
        }
        num / den
    }
}

/// Estimate `E |X_t - X_0|^2` with unwrapped displacements across the
/// periodic seam, averaged over `starts x n_samples` walks.
pub fn msd(
    gen: &Generator,
    starts: &[usize],
    horizon: f64,
    n_checkpoints: usize,
    n_samples: usize,
    seed: u64,
) -> MsdCurve {
    assert!(!starts.is_empty() && n_checkpoints >= 1 && n_samples >= 1);
    let times: Vec<f64> = (1..=n_checkpoints)
        .map(|k| horizon / 2f64.powi((n_checkpoints - k) as i32))
        .collect();
    gen.alias_tables();
    let total = starts.len() * n_samples;
    let per_walk: Vec<Vec<f64>> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let start = starts[idx / n_samples];
            let replica = idx % n_samples;
            let mut rng = rng::stream2(seed, "msd", start as u64, replica as u64);
            let mut pos = [0.0; 3];
            let mut node = start;
            let mut t = 0.0;
            let mut disp = [0.0; 3];
            let mut samples = Vec::with_capacity(times.len());
            let mut next_cp = 0;
            loop {
                let stepped = step(gen, node, &mut rng, &mut disp);
                let dt = stepped.map(|(dt, _)| dt).unwrap_or(f64::INFINITY);
                while next_cp < times.len() && t + dt > times[next_cp] {
                    let r2: f64 = pos[..gen.dim].iter().map(|p| p * p).sum();
                    samples.push(r2);
                    next_cp += 1;
                }
                if next_cp == times.len() {
                    break;
                }
                match stepped {
                    Some((dt, next)) => {
                        t += dt;
                        node = next;
                        for k in 0..gen.dim {
                            pos[k] += disp[k];
                        }
                    }
                    None => unreachable!("isolated node exhausts checkpoints first"),
                }
            }
            samples
        })
        .collect();
    let n = total as f64;
    let mut msd = vec![0.0; times.len()];
    let mut sq = vec![0.0; times.len()];
    for walk in &per_walk {
        for (k, r2) in walk.iter().enumerate() {
            msd[k] += r2;
            sq[k] += r2 * r2;
        }
    }
    for k in 0..times.len() {
        msd[k] /= n;
        let var = (sq[k] / n - msd[k] * msd[k]).max(0.0);
        sq[k] = if total > 1 { (var / (n - 1.0)).sqrt() } else { 0.0 };
    }
    MsdCurve {
        times,
        msd,
        stderr: sq,
        replicas: total,
    }
}
