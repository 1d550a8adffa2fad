//! The rescaled generator on a sample and its weak formulation.
//!
//! `Generator` realizes `L f(eps a) = eps^{-2} sum_b c_ab (f(eps b) - f(eps a))`
//! as a sparse symmetric weighted graph on the scaled nodes `eps a`. It
//! carries the natural weights: `eps^d` per node (the rescaled counting
//! measure) and `eps^d c_ij` per unordered edge (the pair measure, which
//! double-counts ordered pairs; quadratic forms absorb that factor 2
//! explicitly, and only there).
//!
//! Factor conventions, fixed once:
//!   <-L f, g>_mu  =  eps^{d-2} sum_edges c_ij (f_j - f_i)(g_j - g_i)
//!                 =  (1/2) <grad f, grad g>_nu  =  dirichlet_form(f, g).

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::catalog::TestFunction;
use crate::cells::CellList;
use crate::environment::{fmt_g17, MarkedConfiguration};
use crate::error::{Error, Result};
use crate::linalg::{self, CgOutcome};
use crate::rates::RateKernel;
use crate::rng::AliasTable;
use crate::torus::Torus;

/// One unordered edge, stored with `i < j`; `disp` is the minimum-image
/// displacement from `i` to `j` in microscopic (unscaled) units.
#[derive(Debug, Clone)]
pub struct Edge {
    pub i: u32,
    pub j: u32,
    pub rate: f64,
    pub disp: [f64; 3],
    pub dist: f64,
}

#[derive(Debug, Clone, Copy)]
struct AdjEntry {
    neighbor: u32,
    edge: u32,
    forward: bool,
}

/// Values on the nodes of a generator.
pub type MicroFunction = Vec<f64>;

/// A function of directed edges; one value per stored orientation, the
/// reversed orientation carries the opposite sign (the gradient
/// convention).
#[derive(Debug, Clone)]
pub struct EdgeField {
    values: Vec<f64>,
}

impl EdgeField {
    pub fn stored(&self) -> &[f64] {
        &self.values
    }

    /// Value on edge `e` oriented from its `i` end (`forward = true`) or
    /// from its `j` end.
    pub fn oriented(&self, e: usize, forward: bool) -> f64 {
        if forward {
            self.values[e]
        } else {
            -self.values[e]
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub jacobi: bool,
    pub max_iter: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            jacobi: false,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug)]
pub struct Generator {
    pub eps: f64,
    pub dim: usize,
    /// Side of the microscopic sampling box; the macroscopic torus has
    /// side `eps * micro_side`.
    pub micro_side: f64,
    /// Empirical intensity of the underlying sample.
    pub intensity: f64,
    pub edges: Vec<Edge>,
    /// Rate sums `lambda_0(tau_a omega)` per node.
    pub degree: Vec<f64>,
    scaled_positions: Vec<f64>,
    adj_offsets: Vec<u32>,
    adj_entries: Vec<AdjEntry>,
    alias: OnceLock<Vec<AliasTable>>,
}

impl Generator {
    /// Assemble the generator on a sample with all positive-rate edges
    /// within the kernel cutoff.
    pub fn build(cfg: &MarkedConfiguration, kernel: &RateKernel, eps: f64) -> Result<Self> {
        if cfg.is_empty() {
            return Err(Error::Domain("cannot build a generator on an empty configuration".into()));
        }
        if !(eps > 0.0) {
            return Err(Error::parameter("eps", "must be > 0"));
        }
        let n = cfg.len();
        let dim = cfg.dim;
        let mut edges: Vec<Edge> = Vec::new();
        let cells = CellList::build(cfg, kernel.r_cut());
        cells.for_each_pair(cfg, kernel.r_cut(), |i, j, dist, disp| {
            let rate = kernel.rate_at(cfg, i, j, dist);
            if rate > 0.0 {
                let mut d3 = [0.0; 3];
                d3[..dim].copy_from_slice(disp);
                edges.push(Edge {
                    i: i as u32,
                    j: j as u32,
                    rate,
                    disp: d3,
                    dist,
                });
            }
        });
        edges.sort_by_key(|e| (e.i, e.j));

        let mut degree = vec![0.0; n];
        let mut counts = vec![0u32; n];
        for e in &edges {
            degree[e.i as usize] += e.rate;
            degree[e.j as usize] += e.rate;
            counts[e.i as usize] += 1;
            counts[e.j as usize] += 1;
        }
        let mut adj_offsets = vec![0u32; n + 1];
        for i in 0..n {
            adj_offsets[i + 1] = adj_offsets[i] + counts[i];
        }
        let mut cursor: Vec<u32> = adj_offsets[..n].to_vec();
        let mut adj_entries = vec![
            AdjEntry {
                neighbor: 0,
                edge: 0,
                forward: true
            };
            edges.len() * 2
        ];
        for (idx, e) in edges.iter().enumerate() {
            adj_entries[cursor[e.i as usize] as usize] = AdjEntry {
                neighbor: e.j,
                edge: idx as u32,
                forward: true,
            };
            cursor[e.i as usize] += 1;
            adj_entries[cursor[e.j as usize] as usize] = AdjEntry {
                neighbor: e.i,
                edge: idx as u32,
                forward: false,
            };
            cursor[e.j as usize] += 1;
        }

        let mut scaled_positions = Vec::with_capacity(n * dim);
        for i in 0..n {
            for k in 0..dim {
                scaled_positions.push(eps * cfg.position(i)[k]);
            }
        }
        Ok(Generator {
            eps,
            dim,
            micro_side: cfg.box_side,
            intensity: cfg.estimate_intensity(),
            edges,
            degree,
            scaled_positions,
            adj_offsets,
            adj_entries,
            alias: OnceLock::new(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.degree.len()
    }

    pub fn macro_side(&self) -> f64 {
        self.eps * self.micro_side
    }

    pub fn macro_torus(&self) -> Torus {
        Torus::new(self.dim, self.macro_side())
    }

    /// Node weight of the rescaled counting measure.
    pub fn mu_weight(&self) -> f64 {
        self.eps.powi(self.dim as i32)
    }

    pub fn scaled_position(&self, node: usize) -> &[f64] {
        &self.scaled_positions[node * self.dim..(node + 1) * self.dim]
    }

    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = (usize, f64, usize, bool)> + '_ {
        let lo = self.adj_offsets[node] as usize;
        let hi = self.adj_offsets[node + 1] as usize;
        self.adj_entries[lo..hi].iter().map(|a| {
            (
                a.neighbor as usize,
                self.edges[a.edge as usize].rate,
                a.edge as usize,
                a.forward,
            )
        })
    }

    /// Per-node alias tables over the incident jump rates, built on first
    /// use and cached (the generator is immutable).
    pub fn alias_tables(&self) -> &Vec<AliasTable> {
        self.alias.get_or_init(|| {
            (0..self.node_count())
                .map(|a| {
                    let weights: Vec<f64> =
                        self.neighbors(a).map(|(_, rate, _, _)| rate).collect();
                    if weights.is_empty() {
                        AliasTable::new(&[1.0])
                    } else {
                        AliasTable::new(&weights)
                    }
                })
                .collect()
        })
    }

    /// `L f` at every node.
    pub fn apply(&self, f: &[f64]) -> MicroFunction {
        assert_eq!(f.len(), self.node_count());
        let inv_eps2 = 1.0 / (self.eps * self.eps);
        let mut out = vec![0.0; f.len()];
        for e in &self.edges {
            let (i, j) = (e.i as usize, e.j as usize);
            let flow = e.rate * (f[j] - f[i]);
            out[i] += flow;
            out[j] -= flow;
        }
        for v in out.iter_mut() {
            *v *= inv_eps2;
        }
        out
    }

    /// Microscopic gradient `(f(x + eps z) - f(x)) / eps` per edge.
    pub fn micro_gradient(&self, f: &[f64]) -> EdgeField {
        assert_eq!(f.len(), self.node_count());
        let values = self
            .edges
            .iter()
            .map(|e| (f[e.j as usize] - f[e.i as usize]) / self.eps)
            .collect();
        EdgeField { values }
    }

    /// `(1/2) <grad f, grad g>_nu = eps^{d-2} sum_edges c (f_j - f_i)(g_j - g_i)`.
    pub fn dirichlet_form(&self, f: &[f64], g: &[f64]) -> f64 {
        assert_eq!(f.len(), self.node_count());
        assert_eq!(g.len(), self.node_count());
        let mut sum = 0.0;
        for e in &self.edges {
            let (i, j) = (e.i as usize, e.j as usize);
            sum += e.rate * (f[j] - f[i]) * (g[j] - g[i]);
        }
        sum * self.eps.powi(self.dim as i32 - 2)
    }

    pub fn inner_mu(&self, f: &[f64], g: &[f64]) -> f64 {
        self.mu_weight() * linalg::dot(f, g)
    }

    pub fn norm_mu(&self, f: &[f64]) -> f64 {
        self.inner_mu(f, f).sqrt()
    }

    /// `(|f|^2_{L^2(mu)}, Dirichlet energy)`.
    pub fn micro_norms(&self, f: &[f64]) -> (f64, f64) {
        (self.inner_mu(f, f), self.dirichlet_form(f, f))
    }

    /// Squared L2(nu) norm of an edge field (ordered-pair convention, so
    /// each stored edge counts twice).
    pub fn nu_norm_sq(&self, field: &EdgeField) -> f64 {
        let mut sum = 0.0;
        for (e, v) in self.edges.iter().zip(field.stored()) {
            sum += e.rate * v * v;
        }
        2.0 * self.mu_weight() * sum
    }

    /// Weak solution of `lambda u - L u = f` by conjugate gradient on the
    /// coercive form `(1/2)<grad., grad.>_nu + lambda <.,.>_mu`.
    ///
    /// Returns `u` with residual `|lambda u - L u - f|_mu <= tol |f|_mu`.
    pub fn solve_resolvent(&self, lambda: f64, f: &[f64], tol: f64) -> Result<MicroFunction> {
        self.solve_resolvent_with(lambda, f, tol, CgOptions::default())
            .map(|(u, _)| u)
    }

    pub fn solve_resolvent_with(
        &self,
        lambda: f64,
        f: &[f64],
        tol: f64,
        options: CgOptions,
    ) -> Result<(MicroFunction, CgOutcome)> {
        if !(lambda > 0.0) {
            return Err(Error::parameter("lambda", "must be > 0"));
        }
        if !(tol > 0.0) {
            return Err(Error::parameter("tol", "must be > 0"));
        }
        assert_eq!(f.len(), self.node_count());
        let inv_eps2 = 1.0 / (self.eps * self.eps);
        let apply = |x: &[f64], out: &mut [f64]| {
            for (o, xv) in out.iter_mut().zip(x) {
                *o = lambda * xv;
            }
            for e in &self.edges {
                let (i, j) = (e.i as usize, e.j as usize);
                let flow = inv_eps2 * e.rate * (x[j] - x[i]);
                out[i] -= flow;
                out[j] += flow;
            }
        };
        let tol_abs = tol * linalg::norm(f);
        let mut u = vec![0.0; f.len()];
        let diag: Option<Vec<f64>> = options.jacobi.then(|| {
            self.degree
                .iter()
                .map(|deg| lambda + inv_eps2 * deg)
                .collect()
        });
        let outcome = linalg::conjugate_gradient(
            apply,
            f,
            &mut u,
            tol_abs,
            options.max_iter,
            diag.as_deref(),
        )?;
        Ok((u, outcome))
    }

    /// Restriction of a macroscopic test function to the scaled nodes.
    pub fn restrict(&self, phi: &TestFunction) -> MicroFunction {
        let torus = self.macro_torus();
        (0..self.node_count())
            .map(|a| phi.eval(self.scaled_position(a), &torus))
            .collect()
    }

    pub fn restrict_fn(&self, f: impl Fn(&[f64]) -> f64) -> MicroFunction {
        (0..self.node_count())
            .map(|a| f(self.scaled_position(a)))
            .collect()
    }

    /// Dense matrix of `L` (for desk-scale oracles).
    pub fn dense_matrix(&self) -> DMatrix<f64> {
        let n = self.node_count();
        let inv_eps2 = 1.0 / (self.eps * self.eps);
        let mut m = DMatrix::<f64>::zeros(n, n);
        for e in &self.edges {
            let (i, j) = (e.i as usize, e.j as usize);
            m[(i, j)] += inv_eps2 * e.rate;
            m[(j, i)] += inv_eps2 * e.rate;
        }
        for a in 0..n {
            m[(a, a)] = -inv_eps2 * self.degree[a];
        }
        m
    }

    /// Coordinate-format export: node table then `i j c_ij` rows.
    pub fn export_coordinate(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# nodes n={} d={} eps={} L={}\n",
            self.node_count(),
            self.dim,
            fmt_g17(self.eps),
            fmt_g17(self.micro_side)
        ));
        for a in 0..self.node_count() {
            out.push_str(&a.to_string());
            for k in 0..self.dim {
                out.push('\t');
                out.push_str(&fmt_g17(self.scaled_position(a)[k]));
            }
            out.push('\n');
        }
        out.push_str("# edges i j c\n");
        for e in &self.edges {
            out.push_str(&format!("{}\t{}\t{}\n", e.i, e.j, fmt_g17(e.rate)));
        }
        out
    }

    /// Connected components of the positive-rate graph.
    pub fn components(&self) -> crate::unionfind::UnionFind {
        let mut uf = crate::unionfind::UnionFind::new(self.node_count());
        for e in &self.edges {
            uf.union(e.i as usize, e.j as usize);
        }
        uf
    }
}
