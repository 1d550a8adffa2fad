//! Corrector problem and the effective diffusion matrix.
//!
//! On an unscaled (`eps = 1`) periodic sample, the corrector `chi_a` for a
//! direction `a` minimizes the per-point quadratic
//!
//!   E(chi) = (1/(2N)) sum_edges 2 c_ij (a . dx_ij + chi_j - chi_i)^2
//!            + lambda_reg (1/N) sum_i chi_i^2,
//!
//! where `dx` is the minimum-image displacement; the minimizer turns the
//! linear drift into a divergence-free flow. The effective matrix is the
//! flux of the corrected drift, normalized per point:
//!
//!   D_{lk} = (1/N) sum_edges c_ij dx_l (dx_k + chi^k_j - chi^k_i).
//!
//! Periodization (solving on the torus) is the finite-volume surrogate for
//! the infinite-volume variational definition; the regularized path
//! (`lambda_reg > 0`) is kept as an independent cross-check.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::environment::MarkedConfiguration;
use crate::error::{Error, Result};
use crate::linalg;
use crate::microscale::Generator;
use crate::rates::RateKernel;

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct CorrectorSolution {
    pub direction: Vec<f64>,
    pub chi: Vec<f64>,
    pub residual: f64,
    pub lambda_reg: f64,
    pub iterations: usize,
}

/// Solve the corrector problem in direction `a` on an `eps = 1` generator.
///
/// With `lambda_reg = 0` the graph must be connected (constants span the
/// kernel) and the mean-zero representative is returned; otherwise the
/// caller is told to regularize.
pub fn solve_corrector(
    gen: &Generator,
    a: &[f64],
    lambda_reg: f64,
    tol: f64,
) -> Result<CorrectorSolution> {
    if (gen.eps - 1.0).abs() > 1e-12 {
        return Err(Error::Domain(format!(
            "corrector runs on the unscaled sample (eps = 1), got eps = {}",
            gen.eps
        )));
    }
    if a.len() != gen.dim {
        return Err(Error::parameter("a", "direction has wrong dimension"));
    }
    if !(lambda_reg >= 0.0) {
        return Err(Error::parameter("lambda_reg", "must be >= 0"));
    }
    let n = gen.node_count();
    if lambda_reg == 0.0 {
        let components = gen.components();
        if components.component_count() > 1 {
            return Err(Error::Solver {
                iterations: 0,
                residual: f64::INFINITY,
                target: tol,
                hint: format!(
                    "; graph has {} components: set lambda_reg > 0 or solve per component",
                    components.component_count()
                ),
            });
        }
    }

    // drift b_i = sum_j c_ij (a . dx_{i->j}); consistent rhs (sums to zero)
    let mut rhs = vec![0.0; n];
    for e in &gen.edges {
        let along: f64 = (0..gen.dim).map(|k| a[k] * e.disp[k]).sum();
        let w = e.rate * along;
        rhs[e.i as usize] += w;
        rhs[e.j as usize] -= w;
    }

    // (K + 2 lambda_reg I) chi = rhs, K the weighted graph Laplacian
    let apply = |x: &[f64], out: &mut [f64]| {
        for (o, xv) in out.iter_mut().zip(x) {
            *o = 2.0 * lambda_reg * xv;
        }
        for e in &gen.edges {
            let (i, j) = (e.i as usize, e.j as usize);
            let flow = e.rate * (x[i] - x[j]);
            out[i] += flow;
            out[j] -= flow;
        }
    };
    let rhs_norm = linalg::norm(&rhs);
    let mut chi = vec![0.0; n];
    if rhs_norm == 0.0 {
        return Ok(CorrectorSolution {
            direction: a.to_vec(),
            chi,
            residual: 0.0,
            lambda_reg,
            iterations: 0,
        });
    }
    let outcome = linalg::conjugate_gradient(
        apply,
        &rhs,
        &mut chi,
        tol * rhs_norm,
        200_000,
        None,
    )?;
    if lambda_reg == 0.0 {
        let mean = chi.iter().sum::<f64>() / n as f64;
        for v in chi.iter_mut() {
            *v -= mean;
        }
    }
    Ok(CorrectorSolution {
        direction: a.to_vec(),
        chi,
        residual: outcome.residual / rhs_norm,
        lambda_reg,
        iterations: outcome.iterations,
    })
}

/// Effective matrix with eigenstructure and detected rank.
#[derive(Debug, Clone, Serialize)]
pub struct EffectiveMatrix {
    pub dim: usize,
    /// Row-major symmetrized matrix.
    pub matrix: Vec<f64>,
    /// Eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
    /// Row-major orthogonal frame; column `k` is the eigenvector of
    /// `eigenvalues[k]`, positive-eigenvalue directions first.
    pub frame: Vec<f64>,
    pub d_star: usize,
    pub rank_tol: f64,
    /// Max |D_lk - D_kl| before symmetrization (solver-consistency probe).
    pub asymmetry: f64,
    /// Relative corrector residual per canonical direction.
    pub residuals: Vec<f64>,
    pub lambda_reg: f64,
}

impl EffectiveMatrix {
    pub fn entry(&self, l: usize, k: usize) -> f64 {
        self.matrix[l * self.dim + k]
    }

    pub fn quadratic(&self, a: &[f64]) -> f64 {
        let mut q = 0.0;
        for l in 0..self.dim {
            for k in 0..self.dim {
                q += a[l] * self.entry(l, k) * a[k];
            }
        }
        q
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        for l in 0..self.dim {
            out[l] = (0..self.dim).map(|k| self.entry(l, k) * v[k]).sum();
        }
    }

    /// Identity matrix, the homogeneous-lattice reference.
    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![0.0; dim * dim];
        let mut frame = vec![0.0; dim * dim];
        for k in 0..dim {
            matrix[k * dim + k] = 1.0;
            frame[k * dim + k] = 1.0;
        }
        EffectiveMatrix {
            dim,
            matrix,
            eigenvalues: vec![1.0; dim],
            frame,
            d_star: dim,
            rank_tol: DEFAULT_RANK_TOL,
            asymmetry: 0.0,
            residuals: vec![0.0; dim],
            lambda_reg: 0.0,
        }
    }

    /// Diagonal matrix (useful for degenerate-direction experiments).
    pub fn diagonal(entries: &[f64]) -> Self {
        let dim = entries.len();
        let mut matrix = vec![0.0; dim * dim];
        for k in 0..dim {
            matrix[k * dim + k] = entries[k];
        }
        from_symmetric_matrix(dim, matrix, DEFAULT_RANK_TOL, 0.0, vec![0.0; dim], 0.0)
    }

    /// Wrap an explicitly given symmetric matrix (row-major).
    pub fn from_matrix(dim: usize, matrix: Vec<f64>, rank_tol: f64) -> Self {
        assert_eq!(matrix.len(), dim * dim);
        from_symmetric_matrix(dim, matrix, rank_tol, 0.0, Vec::new(), 0.0)
    }

    /// PSD clamp: null directions (beyond `d_star`) carry exactly zero.
    pub fn clamped_psd(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for (idx, lambda) in self.eigenvalues.iter().enumerate() {
            if idx >= self.d_star {
                break;
            }
            let lam = lambda.max(0.0);
            for l in 0..d {
                for k in 0..d {
                    out[l * d + k] += lam * self.frame[l * d + idx] * self.frame[k * d + idx];
                }
            }
        }
        out
    }
}

/// Rank detection: count of eigenvalues above `rank_tol * max(1, lambda_max)`
/// and the frame sending positive directions to the leading coordinates.
pub fn detect_rank(dim: usize, sym_matrix: &[f64], rank_tol: f64) -> (usize, Vec<f64>) {
    let m = DMatrix::from_row_slice(dim, dim, sym_matrix);
    let (vals, vecs) = linalg::symmetric_eigen_sorted(&m);
    let lambda_max = vals.first().copied().unwrap_or(0.0);
    let threshold = rank_tol * lambda_max.max(1.0);
    let d_star = vals.iter().filter(|v| **v > threshold).count();
    let mut frame = vec![0.0; dim * dim];
    for l in 0..dim {
        for k in 0..dim {
            frame[l * dim + k] = vecs[(l, k)];
        }
    }
    (d_star, frame)
}

fn from_symmetric_matrix(
    dim: usize,
    matrix: Vec<f64>,
    rank_tol: f64,
    asymmetry: f64,
    residuals: Vec<f64>,
    lambda_reg: f64,
) -> EffectiveMatrix {
    let m = DMatrix::from_row_slice(dim, dim, &matrix);
    let (eigenvalues, _) = linalg::symmetric_eigen_sorted(&m);
    let (d_star, frame) = detect_rank(dim, &matrix, rank_tol);
    EffectiveMatrix {
        dim,
        matrix,
        eigenvalues,
        frame,
        d_star,
        rank_tol,
        asymmetry,
        residuals,
        lambda_reg,
    }
}

/// Assemble `D` from the `d` canonical corrector solves on a generator
/// built with `eps = 1`.
pub fn effective_matrix_from_generator(
    gen: &Generator,
    lambda_reg: f64,
    tol: f64,
    rank_tol: f64,
) -> Result<EffectiveMatrix> {
    let d = gen.dim;
    let solves: Vec<CorrectorSolution> = (0..d)
        .into_par_iter()
        .map(|k| {
            let mut a = vec![0.0; d];
            a[k] = 1.0;
            solve_corrector(gen, &a, lambda_reg, tol)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = gen.node_count() as f64;
    let mut raw = vec![0.0; d * d];
    for (k, sol) in solves.iter().enumerate() {
        for e in &gen.edges {
            let dchi = sol.chi[e.j as usize] - sol.chi[e.i as usize];
            let corrected = e.disp[k] + dchi;
            for l in 0..d {
                raw[l * d + k] += e.rate * e.disp[l] * corrected;
            }
        }
    }
    for v in raw.iter_mut() {
        *v /= n;
    }
    let mut asymmetry = 0.0f64;
    for l in 0..d {
        for k in (l + 1)..d {
            asymmetry = asymmetry.max((raw[l * d + k] - raw[k * d + l]).abs());
        }
    }
    let mut sym = vec![0.0; d * d];
    for l in 0..d {
        for k in 0..d {
            sym[l * d + k] = 0.5 * (raw[l * d + k] + raw[k * d + l]);
        }
    }
    let residuals = solves.iter().map(|s| s.residual).collect();
    Ok(from_symmetric_matrix(
        d, sym, rank_tol, asymmetry, residuals, lambda_reg,
    ))
}

/// Sample-to-matrix convenience: builds the `eps = 1` generator first.
pub fn effective_matrix(
    cfg: &MarkedConfiguration,
    kernel: &RateKernel,
    lambda_reg: f64,
    tol: f64,
    rank_tol: f64,
) -> Result<EffectiveMatrix> {
    let gen = Generator::build(cfg, kernel, 1.0)?;
    effective_matrix_from_generator(&gen, lambda_reg, tol, rank_tol)
}

/// The `f = 0` Rayleigh value `(1/N) sum c (a . dx)^2`, an upper bound for
/// `a . D a` by the variational characterization.
pub fn rayleigh_f0(gen: &Generator, a: &[f64]) -> f64 {
    let mut sum = 0.0;
    for e in &gen.edges {
        let along: f64 = (0..gen.dim).map(|k| a[k] * e.disp[k]).sum();
        sum += e.rate * along * along;
    }
    sum / gen.node_count() as f64
}
