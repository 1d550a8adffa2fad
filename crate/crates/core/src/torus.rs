//! Periodic box geometry with the minimum-image convention.

/// A d-dimensional torus `[0, side)^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Torus {
    pub dim: usize,
    pub side: f64,
}

impl Torus {
    pub fn new(dim: usize, side: f64) -> Self {
        assert!(dim >= 1 && side > 0.0);
        Torus { dim, side }
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    /// Wrap a coordinate into `[0, side)`.
    pub fn wrap(&self, x: f64) -> f64 {
        let y = x.rem_euclid(self.side);
        // rem_euclid can return `side` when x is a tiny negative number.
        if y >= self.side {
            0.0
        } else {
            y
        }
    }

    /// Minimum-image representative of a coordinate difference, in
    /// `[-side/2, side/2]`.
    pub fn min_image(&self, delta: f64) -> f64 {
        let half = 0.5 * self.side;
        let mut d = delta.rem_euclid(self.side);
        if d > half {
            d -= self.side;
        }
        d
    }

    /// Minimum-image displacement `to - from`, written into `out[..dim]`.
    pub fn displacement(&self, from: &[f64], to: &[f64], out: &mut [f64]) {
        for k in 0..self.dim {
            out[k] = self.min_image(to[k] - from[k]);
        }
    }

    /// Squared minimum-image distance. Computed from |b - a| per axis so
    /// the result is bit-identical under swapping the arguments.
    pub fn distance_sq(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.dim {
            let t = (b[k] - a[k]).abs().rem_euclid(self.side);
            let d = t.min(self.side - t);
            s += d * d;
        }
        s
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.distance_sq(a, b).sqrt()
    }
}
