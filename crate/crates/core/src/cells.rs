//! Cell-list neighbor search on the periodic box.
//!
//! Pair enumeration within an interaction range in O(N) for samples whose
//! box is several ranges wide, with a brute-force fallback for small
//! boxes. Every unordered pair is visited exactly once, in a fixed
//! deterministic order.

use crate::environment::MarkedConfiguration;
use crate::torus::Torus;

/// Squared-distance comparisons allow this relative slack so that pairs at
/// exactly the interaction range (e.g. unit lattice edges) survive the
/// shift-and-wrap roundoff.
pub const RANGE_SLACK: f64 = 1e-9;

pub struct CellList {
    torus: Torus,
    cells_per_axis: usize,
    /// point indices per cell, cells in lexicographic order
    members: Vec<Vec<u32>>,
}

impl CellList {
    pub fn build(cfg: &MarkedConfiguration, range: f64) -> Self {
        let torus = cfg.torus();
        let cells_per_axis = if range > 0.0 {
            (torus.side / range).floor() as usize
        } else {
            0
        };
        if cells_per_axis < 3 {
            return CellList {
                torus,
                cells_per_axis: 0,
                members: Vec::new(),
            };
        }
        let n_cells = cells_per_axis.pow(torus.dim as u32);
        let mut members = vec![Vec::new(); n_cells];
        let cell_side = torus.side / cells_per_axis as f64;
        for i in 0..cfg.len() {
            let p = cfg.position(i);
            let mut flat = 0;
            for k in (0..torus.dim).rev() {
                let mut c = (p[k] / cell_side) as usize;
                if c >= cells_per_axis {
                    c = cells_per_axis - 1;
                }
                flat = flat * cells_per_axis + c;
            }
            members[flat].push(i as u32);
        }
        CellList {
            torus,
            cells_per_axis,
            members,
        }
    }

    fn cell_coords(&self, flat: usize) -> [usize; 3] {
        let mut coords = [0usize; 3];
        let mut rem = flat;
        for c in coords.iter_mut().take(self.torus.dim) {
            *c = rem % self.cells_per_axis;
            rem /= self.cells_per_axis;
        }
        coords
    }

    fn cell_index(&self, coords: &[usize; 3]) -> usize {
        let mut flat = 0;
        for k in (0..self.torus.dim).rev() {
            flat = flat * self.cells_per_axis + coords[k];
        }
        flat
    }

    /// Visit every unordered pair within `range` once, as
    /// `f(i, j, dist, disp)` with `disp` the minimum-image displacement
    /// from `i` to `j` and `i < j`.
    pub fn for_each_pair<F>(&self, cfg: &MarkedConfiguration, range: f64, mut f: F)
    where
        F: FnMut(usize, usize, f64, &[f64]),
    {
        let torus = cfg.torus();
        let range_sq = range * range * (1.0 + RANGE_SLACK);
        let mut disp = [0.0; 3];
        if self.cells_per_axis == 0 {
            for i in 0..cfg.len() {
                for j in (i + 1)..cfg.len() {
                    torus.displacement(cfg.position(i), cfg.position(j), &mut disp);
                    let d2: f64 = disp[..torus.dim].iter().map(|d| d * d).sum();
                    if d2 <= range_sq {
                        f(i, j, d2.sqrt(), &disp[..torus.dim]);
                    }
                }
            }
            return;
        }
        // Half-shell of neighbor cell offsets: lexicographically positive
        // ones plus the zero offset (pairs inside one cell handled by
        // index order). cells_per_axis >= 3 keeps wrapped offsets distinct.
        let dim = torus.dim;
        let mut offsets: Vec<[i64; 3]> = Vec::new();
        let mut off = [-1i64; 3];
        for k in dim..3 {
            off[k] = 0;
        }
        loop {
            if off[..dim].iter().any(|&o| o != 0) {
                // keep only the lexicographically positive half
                let positive = off[..dim]
                    .iter()
                    .rev()
                    .find(|&&o| o != 0)
                    .map(|&o| o > 0)
                    .unwrap_or(false);
                if positive {
                    offsets.push(off);
                }
            }
            let mut k = 0;
            loop {
                if k == dim {
                    break;
                }
                off[k] += 1;
                if off[k] <= 1 {
                    break;
                }
                off[k] = -1;
                k += 1;
            }
            if k == dim {
                break;
            }
        }
        let cpa = self.cells_per_axis as i64;
        for (flat, members) in self.members.iter().enumerate() {
            // pairs inside the cell
            for (a, &i) in members.iter().enumerate() {
                for &j in &members[a + 1..] {
                    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                    torus.displacement(
                        cfg.position(lo as usize),
                        cfg.position(hi as usize),
                        &mut disp,
                    );
                    let d2: f64 = disp[..dim].iter().map(|d| d * d).sum();
                    if d2 <= range_sq {
                        f(lo as usize, hi as usize, d2.sqrt(), &disp[..dim]);
                    }
                }
            }
            // pairs with the half shell
            let coords = self.cell_coords(flat);
            for off in &offsets {
                let mut other = [0usize; 3];
                for k in 0..dim {
                    other[k] =
                        ((coords[k] as i64 + off[k]).rem_euclid(cpa)) as usize;
                }
                let other_flat = self.cell_index(&other);
                for &i in members {
                    for &j in &self.members[other_flat] {
                        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                        torus.displacement(
                            cfg.position(lo as usize),
                            cfg.position(hi as usize),
                            &mut disp,
                        );
                        let d2: f64 = disp[..dim].iter().map(|d| d * d).sum();
                        if d2 <= range_sq {
                            f(lo as usize, hi as usize, d2.sqrt(), &disp[..dim]);
                        }
                    }
                }
            }
        }
    }
}
