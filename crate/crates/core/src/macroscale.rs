//! Homogenized equations with a constant diffusion matrix, and the
//! micro-to-macro comparison metrics.
//!
//! The macroscopic domain is the periodic torus matching the scaled
//! sample. The resolvent equation is discretized by second-order centered
//! finite differences and solved by conjugate gradient; the heat semigroup
//! is a convolution with the (possibly degenerate) Gaussian kernel of
//! covariance `2 D t`, identity along null directions.

use serde::Serialize;

use crate::catalog::TestFunction;
use crate::effective::EffectiveMatrix;
use crate::environment::fmt_g17;
use crate::error::{Error, Result};
use crate::linalg;
use crate::microscale::Generator;
use crate::torus::Torus;

/// Regular periodic grid with `n` nodes per axis and spacing `h = side/n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub side: f64,
    pub n: usize,
    pub h: f64,
}

impl Grid {
    pub fn new(dim: usize, side: f64, n: usize) -> Self {
        assert!((1..=3).contains(&dim) && n >= 2 && side > 0.0);
        Grid {
            dim,
            side,
            n,
            h: side / n as f64,
        }
    }

    pub fn node_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn coords(&self, flat: usize) -> [usize; 3] {
        let mut c = [0usize; 3];
        let mut rem = flat;
        for k in c.iter_mut().take(self.dim) {
            *k = rem % self.n;
            rem /= self.n;
        }
        c
    }

    pub fn index(&self, coords: &[usize; 3]) -> usize {
        let mut flat = 0;
        for k in (0..self.dim).rev() {
            flat = flat * self.n + coords[k];
        }
        flat
    }

    pub fn position(&self, flat: usize, out: &mut [f64]) {
        let c = self.coords(flat);
        for k in 0..self.dim {
            out[k] = c[k] as f64 * self.h;
        }
    }

    /// Neighbor index with coordinate `axis` shifted by `delta` (wrapped).
    pub fn shift(&self, flat: usize, axis: usize, delta: i64) -> usize {
        let mut c = self.coords(flat);
        c[axis] = (c[axis] as i64 + delta).rem_euclid(self.n as i64) as usize;
        self.index(&c)
    }

    pub fn torus(&self) -> Torus {
        Torus::new(self.dim, self.side)
    }
}

/// Scalar field on a periodic grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let mut x = [0.0; 3];
        let values = (0..grid.node_count())
            .map(|i| {
                grid.position(i, &mut x);
                f(&x[..grid.dim])
            })
            .collect();
        DensityField { grid, values }
    }

    pub fn from_test_function(grid: Grid, phi: &TestFunction) -> Self {
        let torus = grid.torus();
        Self::from_fn(grid, |x| phi.eval(x, &torus))
    }

    pub fn zeros(grid: Grid) -> Self {
        DensityField {
            grid,
            values: vec![0.0; grid.node_count()],
        }
    }

    /// Periodic multilinear interpolation.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let g = &self.grid;
        let torus = g.torus();
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for k in 0..g.dim {
            let xk = torus.wrap(x[k]) / g.h;
            let b = xk.floor();
            let mut bi = b as i64;
            let mut t = xk - b;
            if bi as usize >= g.n {
                bi = 0;
                t = 0.0;
            }
            base[k] = bi as usize;
            frac[k] = t;
        }
        let corners = 1usize << g.dim;
        let mut value = 0.0;
        for corner in 0..corners {
            let mut weight = 1.0;
            let mut c = [0usize; 3];
            for k in 0..g.dim {
                if corner >> k & 1 == 1 {
                    weight *= frac[k];
                    c[k] = (base[k] + 1) % g.n;
                } else {
                    weight *= 1.0 - frac[k];
                    c[k] = base[k];
                }
            }
            if weight != 0.0 {
                value += weight * self.values[g.index(&c)];
            }
        }
        value
    }

    /// `h^d sum f`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.h.powi(self.grid.dim as i32)
    }

    /// `h^d sum f g`.
    pub fn inner(&self, other: &DensityField) -> f64 {
        assert_eq!(self.grid, other.grid);
        linalg::dot(&self.values, &other.values) * self.grid.h.powi(self.grid.dim as i32)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Central-difference gradient, node-major with stride `dim`.
    pub fn gradient(&self) -> Vec<f64> {
        let g = &self.grid;
        let mut out = vec![0.0; g.node_count() * g.dim];
        for i in 0..g.node_count() {
            for k in 0..g.dim {
                let plus = self.values[g.shift(i, k, 1)];
                let minus = self.values[g.shift(i, k, -1)];
                out[i * g.dim + k] = (plus - minus) / (2.0 * g.h);
            }
        }
        out
    }

    /// CSV with one `x_1,..,x_d,value` row per node.
    pub fn to_csv(&self) -> String {
        let g = &self.grid;
        let mut out = format!("# h={} dims={}\n", fmt_g17(g.h), vec![g.n; g.dim].iter().map(|v| v.to_string()).collect::<Vec<_>>().join("x"));
        let mut x = [0.0; 3];
        for i in 0..g.node_count() {
            g.position(i, &mut x);
            for k in 0..g.dim {
                out.push_str(&fmt_g17(x[k]));
                out.push(',');
            }
            out.push_str(&fmt_g17(self.values[i]));
            out.push('\n');
        }
        out
    }
}

/// Apply `lambda u - div(D grad u)` with centered differences; `dmat` is
/// the row-major clamped PSD matrix.
fn apply_resolvent_operator(
    grid: &Grid,
    dmat: &[f64],
    lambda: f64,
    u: &[f64],
    out: &mut [f64],
) {
    let dim = grid.dim;
    let h2 = grid.h * grid.h;
    for (o, uv) in out.iter_mut().zip(u) {
        *o = lambda * uv;
    }
    for i in 0..grid.node_count() {
        let mut diff = 0.0;
        for k in 0..dim {
            let dkk = dmat[k * dim + k];
            if dkk != 0.0 {
                diff += dkk * (u[grid.shift(i, k, 1)] - 2.0 * u[i] + u[grid.shift(i, k, -1)])
                    / h2;
            }
            for l in (k + 1)..dim {
                let dkl = dmat[k * dim + l];
                if dkl != 0.0 {
                    let pp = u[grid.shift(grid.shift(i, k, 1), l, 1)];
                    let pm = u[grid.shift(grid.shift(i, k, 1), l, -1)];
                    let mp = u[grid.shift(grid.shift(i, k, -1), l, 1)];
                    let mm = u[grid.shift(grid.shift(i, k, -1), l, -1)];
                    diff += 2.0 * dkl * (pp - pm - mp + mm) / (4.0 * h2);
                }
            }
        }
        out[i] -= diff;
    }
}

/// Weak solution of `lambda u - div(D grad u) = f` on the periodic grid.
pub fn solve_effective_resolvent(
    dmat: &EffectiveMatrix,
    lambda: f64,
    f: &DensityField,
    tol: f64,
) -> Result<DensityField> {
    if !(lambda > 0.0) {
        return Err(Error::parameter("lambda", "must be > 0"));
    }
    let clamped = dmat.clamped_psd();
    let grid = f.grid;
    let apply = |x: &[f64], out: &mut [f64]| {
        apply_resolvent_operator(&grid, &clamped, lambda, x, out);
    };
    let mut u = vec![0.0; f.values.len()];
    let tol_abs = tol * linalg::norm(&f.values);
    linalg::conjugate_gradient(apply, &f.values, &mut u, tol_abs, 200_000, None)?;
    Ok(DensityField { grid, values: u })
}

/// One-dimensional wrapped-Gaussian kernel weights over grid offsets,
/// normalized to sum to one.
fn wrapped_gaussian_weights(n: usize, h: f64, side: f64, variance: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    if variance <= 0.0 || variance.sqrt() < 1e-14 * side {
        w[0] = 1.0;
        return w;
    }
    let sigma = variance.sqrt();
    let images = (6.0 * sigma / side).ceil() as i64 + 1;
    for (j, wj) in w.iter_mut().enumerate() {
        let z = Torus::new(1, side).min_image(j as f64 * h);
        let mut sum = 0.0;
        for img in -images..=images {
            let y = z + img as f64 * side;
            sum += (-y * y / (2.0 * variance)).exp();
        }
        *wj = sum;
    }
    let total: f64 = w.iter().sum();
    for wj in w.iter_mut() {
        *wj /= total;
    }
    w
}

fn convolve_axis(grid: &Grid, values: &[f64], axis: usize, weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    let n = grid.n;
    for i in 0..grid.node_count() {
        let c = grid.coords(i);
        let mut acc = 0.0;
        let mut src = c;
        for (j, w) in weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            src[axis] = (c[axis] + n - j % n) % n;
            acc += w * values[grid.index(&src)];
        }
        out[i] = acc;
    }
    out
}

/// Heat semigroup `P_t f`: convolution with the Gaussian kernel of
/// covariance `2 D t` (wrapped on the torus), restricted to the active
/// eigendirections; null directions are left untouched.
pub fn heat_semigroup(dmat: &EffectiveMatrix, t: f64, f: &DensityField) -> DensityField {
    assert!(t >= 0.0, "heat semigroup needs t >= 0");
    if t == 0.0 {
        return f.clone();
    }
    let grid = f.grid;
    let dim = grid.dim;
    let clamped = dmat.clamped_psd();
    let mut max_offdiag = 0.0f64;
    for k in 0..dim {
        for l in 0..dim {
            if k != l {
                max_offdiag = max_offdiag.max(clamped[k * dim + l].abs());
            }
        }
    }
    let scale = (0..dim).map(|k| clamped[k * dim + k]).fold(0.0, f64::max);
    if max_offdiag <= 1e-12 * scale.max(1e-300) {
        // separable diagonal path; axes with zero diffusion are identity
        let mut values = f.values.clone();
        for axis in 0..dim {
            let variance = 2.0 * t * clamped[axis * dim + axis];
            if variance <= 0.0 {
                continue;
            }
            let w = wrapped_gaussian_weights(grid.n, grid.h, grid.side, variance);
            values = convolve_axis(&grid, &values, axis, &w);
        }
        return DensityField { grid, values };
    }

    // general dense path: kernel table over all grid offsets, evaluated in
    // the eigenframe over the active coordinates (full-rank at desk scale;
    // a rotated null direction is represented by a narrow Gaussian of one
    // grid cell)
    let d = dim;
    let mut variances = vec![0.0; d];
    for (k, v) in variances.iter_mut().enumerate() {
        let lam = if k < dmat.d_star {
            dmat.eigenvalues[k].max(0.0)
        } else {
            0.0
        };
        *v = 2.0 * t * lam;
        if *v == 0.0 {
            *v = (grid.h / 4.0) * (grid.h / 4.0);
        }
    }
    let torus = grid.torus();
    let images = variances
        .iter()
        .map(|v| (6.0 * v.sqrt() / grid.side).ceil() as i64 + 1)
        .fold(1, i64::max);
    let mut kernel = vec![0.0; grid.node_count()];
    let mut z = [0.0; 3];
    for (off, kv) in kernel.iter_mut().enumerate() {
        grid.position(off, &mut z);
        let zmin: Vec<f64> = (0..d).map(|k| torus.min_image(z[k])).collect();
        // sum over periodic images in each axis
        let mut total = 0.0;
        let img_range: Vec<i64> = (-images..=images).collect();
        let mut idx = vec![0usize; d];
        'outer: loop {
            let mut y = [0.0; 3];
            for k in 0..d {
                y[k] = zmin[k] + img_range[idx[k]] as f64 * grid.side;
            }
            // rotate into the eigenframe
            let mut expo = 0.0;
            for k in 0..d {
                let mut proj = 0.0;
                for l in 0..d {
                    proj += dmat.frame[l * d + k] * y[l];
                }
                expo += proj * proj / (2.0 * variances[k]);
            }
            total += (-expo).exp();
            let mut k = 0;
            loop {
                if k == d {
                    break 'outer;
                }
                idx[k] += 1;
                if idx[k] < img_range.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
        *kv = total;
    }
    let sum: f64 = kernel.iter().sum();
    for kv in kernel.iter_mut() {
        *kv /= sum;
    }
    // circular convolution
    let mut values = vec![0.0; grid.node_count()];
    let n = grid.n;
    for i in 0..grid.node_count() {
        let ci = grid.coords(i);
        let mut acc = 0.0;
        for (off, w) in kernel.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let co = grid.coords(off);
            let mut src = [0usize; 3];
            for k in 0..d {
                src[k] = (ci[k] + n - co[k]) % n;
            }
            acc += w * f.values[grid.index(&src)];
        }
        values[i] = acc;
    }
    DensityField { grid, values }
}

/// Micro-to-macro comparison: strong/weak solution gaps, energy gap, and
/// flow gaps, one weak/flow entry per supplied test function.
#[derive(Debug, Clone, Serialize)]
pub struct MicroMacroMetrics {
    pub strong_rel: f64,
    pub weak_gaps: Vec<f64>,
    pub energy_gap: f64,
    pub flow_gaps: Vec<f64>,
}

impl MicroMacroMetrics {
    pub fn weak_max(&self) -> f64 {
        self.weak_gaps.iter().cloned().fold(0.0, f64::max)
    }

    pub fn flow_max(&self) -> f64 {
        self.flow_gaps.iter().cloned().fold(0.0, f64::max)
    }
}

/// Compare a microscopic solution `u_eps` (values on generator nodes)
/// with a macroscopic field `u`, with intensity factor `m` taken from the
/// generator's sample.
pub fn compare_micro_macro(
    gen: &Generator,
    u_eps: &[f64],
    u: &DensityField,
    dmat: &EffectiveMatrix,
    phis: &[TestFunction],
) -> MicroMacroMetrics {
    assert_eq!(u_eps.len(), gen.node_count());
    let m = gen.intensity;
    let torus = gen.macro_torus();

    // (a) strong surrogate
    let u_at_nodes: Vec<f64> = (0..gen.node_count())
        .map(|a| u.interpolate(gen.scaled_position(a)))
        .collect();
    let diff: Vec<f64> = u_eps
        .iter()
        .zip(&u_at_nodes)
        .map(|(a, b)| a - b)
        .collect();
    let denom = gen.norm_mu(&u_at_nodes);
    let strong_rel = if denom > 0.0 {
        gen.norm_mu(&diff) / denom
    } else {
        gen.norm_mu(&diff)
    };

    // grid-side quantities
    let grad_u = u.gradient();
    let dim = gen.dim;
    let hd = u.grid.h.powi(dim as i32);

    let mut weak_gaps = Vec::with_capacity(phis.len());
    let mut flow_gaps = Vec::with_capacity(phis.len());
    for phi in phis {
        let phi_nodes = gen.restrict(phi);
        let micro_pairing = gen.inner_mu(u_eps, &phi_nodes);
        let phi_grid = DensityField::from_test_function(u.grid, phi);
        let macro_pairing = m * u.inner(&phi_grid);
        weak_gaps.push((micro_pairing - macro_pairing).abs());

        // (d) flow surrogate
        let micro_flow = gen.dirichlet_form(u_eps, &phi_nodes);
        let mut macro_flow = 0.0;
        let mut x = [0.0; 3];
        let mut gphi = [0.0; 3];
        let mut dgrad = [0.0; 3];
        for i in 0..u.grid.node_count() {
            u.grid.position(i, &mut x);
            phi.grad(&x[..dim], &torus, &mut gphi);
            dmat.apply(&grad_u[i * dim..(i + 1) * dim], &mut dgrad[..dim]);
            let mut dot = 0.0;
            for k in 0..dim {
                dot += dgrad[k] * gphi[k];
            }
            macro_flow += dot;
        }
        macro_flow *= m * hd;
        flow_gaps.push((micro_flow - macro_flow).abs());
    }

    // (c) energy gap
    let micro_energy = gen.dirichlet_form(u_eps, u_eps);
    let mut macro_energy = 0.0;
    let mut dgrad = [0.0; 3];
    for i in 0..u.grid.node_count() {
        let g = &grad_u[i * dim..(i + 1) * dim];
        dmat.apply(g, &mut dgrad[..dim]);
        for k in 0..dim {
            macro_energy += g[k] * dgrad[k];
        }
    }
    macro_energy *= m * hd;
    let energy_gap = (micro_energy - macro_energy).abs();

    MicroMacroMetrics {
        strong_rel,
        weak_gaps,
        energy_gap,
        flow_gaps,
    }
}
