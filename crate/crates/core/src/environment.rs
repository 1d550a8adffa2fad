//! Marked point-process environments on a periodic box.
//!
//! An environment is a finite sample `{(x_i, E_i)}` of point positions in
//! `[0, L)^d` with one real energy mark per point, standing in for the
//! infinite-volume stationary ergodic environment. Statistics "seen from a
//! typical point" are realized as plain spatial averages over the sampled
//! points, which is the empirical form of the Campbell identity.

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::catalog::TestFunction;
use crate::error::{Error, Result};
use crate::rng;
use crate::torus::Torus;

/// Law of the energy marks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarkDistribution {
    Constant { value: f64 },
    Uniform { a: f64, b: f64 },
    Exponential { rate: f64 },
    Empirical { values: Vec<f64> },
}

impl MarkDistribution {
    pub fn validate(&self) -> Result<()> {
        match self {
            MarkDistribution::Constant { value } if value.is_finite() => Ok(()),
            MarkDistribution::Constant { .. } => {
                Err(Error::parameter("marks.value", "must be finite"))
            }
            MarkDistribution::Uniform { a, b } if a < b => Ok(()),
            MarkDistribution::Uniform { .. } => {
                Err(Error::parameter("marks.a", "uniform law needs a < b"))
            }
            MarkDistribution::Exponential { rate } if *rate > 0.0 => Ok(()),
            MarkDistribution::Exponential { .. } => {
                Err(Error::parameter("marks.rate", "must be > 0"))
            }
            MarkDistribution::Empirical { values } if !values.is_empty() => Ok(()),
            MarkDistribution::Empirical { .. } => {
                Err(Error::parameter("marks.values", "must be nonempty"))
            }
        }
    }

    pub fn sample<R: Rng + RngExt>(&self, rng: &mut R) -> f64 {
        match self {
            MarkDistribution::Constant { value } => *value,
            MarkDistribution::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            MarkDistribution::Exponential { rate } => rng::exp_time(rng, *rate),
            MarkDistribution::Empirical { values } => {
                values[rng.random_range(0..values.len())]
            }
        }
    }
}

/// Finite sample of a marked point process on the periodic box `[0, L)^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedConfiguration {
    pub dim: usize,
    pub box_side: f64,
    /// Flat position storage, point `i` at `positions[i*dim..(i+1)*dim]`.
    positions: Vec<f64>,
    marks: Vec<f64>,
    pub periodic: bool,
    pub seed: u64,
    pub nominal_intensity: f64,
}

impl MarkedConfiguration {
    fn check_dim(dim: usize) -> Result<()> {
        if (1..=3).contains(&dim) {
            Ok(())
        } else {
            Err(Error::parameter("d", format!("must be 1, 2 or 3, got {dim}")))
        }
    }

    /// Poisson cloud with intensity `m`, marks i.i.d. from `marks`.
    ///
    /// The point count is Poisson(m L^d), positions uniform; everything is
    /// a deterministic function of `seed`.
    pub fn sample_poisson(
        dim: usize,
        box_side: f64,
        intensity: f64,
        marks: &MarkDistribution,
        seed: u64,
    ) -> Result<Self> {
        Self::check_dim(dim)?;
        if !(box_side > 0.0) {
            return Err(Error::parameter("L", "must be > 0"));
        }
        if !(intensity >= 0.0) {
            return Err(Error::parameter("m", "must be >= 0"));
        }
        marks.validate()?;
        let mean = intensity * box_side.powi(dim as i32);
        let mut count_rng = rng::stream(seed, "poisson-count", 0);
        let n = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|e| Error::parameter("m", format!("{e:?}")))?
                .sample(&mut count_rng) as usize
        } else {
            0
        };
        let mut pos_rng = rng::stream(seed, "poisson-positions", 0);
        let mut positions = Vec::with_capacity(n * dim);
        for _ in 0..n * dim {
            positions.push(box_side * pos_rng.random::<f64>());
        }
        let mut mark_rng = rng::stream(seed, "marks", 0);
        let marks_vec: Vec<f64> = (0..n).map(|_| marks.sample(&mut mark_rng)).collect();
        Ok(MarkedConfiguration {
            dim,
            box_side,
            positions,
            marks: marks_vec,
            periodic: true,
            seed,
            nominal_intensity: intensity,
        })
    }

    /// Site-diluted lattice: each site of `{0,..,L-1}^d` is kept with
    /// probability `p`, then every kept site is shifted by one common
    /// uniform offset in `[0,1)^d` and wrapped.
    pub fn sample_diluted_lattice(
        dim: usize,
        lattice_side: u32,
        p: f64,
        marks: &MarkDistribution,
        seed: u64,
    ) -> Result<Self> {
        Self::check_dim(dim)?;
        if lattice_side == 0 {
            return Err(Error::parameter("L", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::parameter("p", format!("must be in [0, 1], got {p}")));
        }
        marks.validate()?;
        let box_side = f64::from(lattice_side);
        let torus = Torus::new(dim, box_side);
        let mut shift_rng = rng::stream(seed, "lattice-shift", 0);
        let mut shift = [0.0; 3];
        for s in shift.iter_mut().take(dim) {
            *s = shift_rng.random::<f64>();
        }
        let mut site_rng = rng::stream(seed, "lattice-sites", 0);
        let total = (lattice_side as usize).pow(dim as u32);
        let mut positions = Vec::new();
        for flat in 0..total {
            let keep = p >= 1.0 || (p > 0.0 && site_rng.random::<f64>() < p);
            if keep {
                let mut rem = flat;
                for k in 0..dim {
                    let site = (rem % lattice_side as usize) as f64;
                    rem /= lattice_side as usize;
                    positions.push(torus.wrap(site + shift[k]));
                }
            }
        }
        let n = positions.len() / dim;
        let mut mark_rng = rng::stream(seed, "marks", 0);
        let marks_vec: Vec<f64> = (0..n).map(|_| marks.sample(&mut mark_rng)).collect();
        Ok(MarkedConfiguration {
            dim,
            box_side,
            positions,
            marks: marks_vec,
            periodic: true,
            seed,
            nominal_intensity: p,
        })
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mark(&self, i: usize) -> f64 {
        self.marks[i]
    }

    pub fn torus(&self) -> Torus {
        Torus::new(self.dim, self.box_side)
    }

    /// Empirical intensity `|points| / L^d`.
    pub fn estimate_intensity(&self) -> f64 {
        self.len() as f64 / self.torus().volume()
    }

    /// Copy with all points translated by `shift` (wrapped periodically).
    pub fn translated(&self, shift: &[f64]) -> Self {
        let torus = self.torus();
        let mut out = self.clone();
        for i in 0..self.len() {
            for k in 0..self.dim {
                out.positions[i * self.dim + k] =
                    torus.wrap(self.positions[i * self.dim + k] + shift[k]);
            }
        }
        out
    }

    /// Spatial ergodic average `eps^d sum_a phi(eps a) g(tau_a omega)`.
    ///
    /// `g_values[i]` is the local observable evaluated at point `i`
    /// (see [`crate::rates::LocalObservable`] for the catalog). The support
    /// of `phi` must fit inside the scaled box `[0, eps L)^d`.
    pub fn palm_average(
        &self,
        g_values: &[f64],
        phi: &TestFunction,
        eps: f64,
    ) -> Result<f64> {
        if g_values.len() != self.len() {
            return Err(Error::Domain(format!(
                "observable has {} values for {} points",
                g_values.len(),
                self.len()
            )));
        }
        if !(eps > 0.0) {
            return Err(Error::parameter("eps", "must be > 0"));
        }
        let scaled_side = eps * self.box_side;
        if let Some(radius) = phi.support_radius() {
            if 2.0 * radius > scaled_side {
                return Err(Error::Domain(format!(
                    "support of phi (diameter {}) exceeds the scaled box ({scaled_side})",
                    2.0 * radius
                )));
            }
        }
        let scaled_torus = Torus::new(self.dim, scaled_side);
        let mut sum = 0.0;
        let mut x = [0.0; 3];
        for i in 0..self.len() {
            let p = self.position(i);
            for k in 0..self.dim {
                x[k] = eps * p[k];
            }
            sum += phi.eval(&x[..self.dim], &scaled_torus) * g_values[i];
        }
        Ok(eps.powi(self.dim as i32) * sum)
    }

    /// Text-table form: `# d=.. L=.. m=.. seed=..` header then one
    /// tab-separated row `x_1 .. x_d E` per point, 17 significant digits.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# d={}  L={}  m={}  seed={}\n",
            self.dim,
            fmt_g17(self.box_side),
            fmt_g17(self.nominal_intensity),
            self.seed
        ));
        for i in 0..self.len() {
            for k in 0..self.dim {
                out.push_str(&fmt_g17(self.position(i)[k]));
                out.push('\t');
            }
            out.push_str(&fmt_g17(self.mark(i)));
            out.push('\n');
        }
        out
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Domain("empty configuration table".into()))?;
        let mut dim = None;
        let mut side = None;
        let mut m = None;
        let mut seed = None;
        for tok in header.trim_start_matches('#').split_whitespace() {
            if let Some((key, val)) = tok.split_once('=') {
                match key {
                    "d" => dim = val.parse::<usize>().ok(),
                    "L" => side = val.parse::<f64>().ok(),
                    "m" => m = val.parse::<f64>().ok(),
                    "seed" => seed = val.parse::<u64>().ok(),
                    _ => {}
                }
            }
        }
        let (dim, side) = match (dim, side) {
            (Some(d), Some(l)) => (d, l),
            _ => return Err(Error::Domain("malformed table header".into())),
        };
        let mut positions = Vec::new();
        let mut marks = Vec::new();
        for line in lines {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<f64> = line
                .split_whitespace()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Domain(format!("bad table row: {e}")))?;
            if fields.len() != dim + 1 {
                return Err(Error::Domain(format!(
                    "table row has {} fields, expected {}",
                    fields.len(),
                    dim + 1
                )));
            }
            positions.extend_from_slice(&fields[..dim]);
            marks.push(fields[dim]);
        }
        Ok(MarkedConfiguration {
            dim,
            box_side: side,
            positions,
            marks,
            periodic: true,
            seed: seed.unwrap_or(0),
            nominal_intensity: m.unwrap_or(0.0),
        })
    }
}

/// 17 significant digits, a round-trippable f64 text form.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}
