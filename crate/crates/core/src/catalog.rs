//! Closed catalog of macroscopic test functions on the torus.
//!
//! Convergence statements quantify over compactly supported smooth
//! functions; the artifact fixes a small documented family referenced by
//! id so that experiments and their acceptance thresholds are concrete.
//! All functions are smooth on the torus (the bump and the truncated
//! Gaussian vanish identically outside their support ball, the cosine is
//! torus-periodic by construction).

use crate::torus::Torus;

#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// Constant one. Compactly supported on the torus itself.
    One,
    /// `exp(1 - 1/(1 - (r/radius)^2))` inside the ball of `radius` around
    /// `center`, zero outside; `r` is the minimum-image distance.
    Bump { center: Vec<f64>, radius: f64 },
    /// Gaussian `exp(-r^2 / (2 sigma^2))` times a smooth cutoff that is 1
    /// for `r <= radius/2` and vanishes at `r >= radius`.
    GaussianBump {
        center: Vec<f64>,
        sigma: f64,
        radius: f64,
    },
    /// `prod_k cos(2 pi modes[k] x_k / side)`, periodic on the torus.
    Cosine { modes: Vec<i32> },
}

/// Smooth transition q(s): 1 for s <= 1/2, exp(1 - 1/(1-(2s-1)^2)) for
/// 1/2 < s < 1, 0 for s >= 1.
fn cutoff(s: f64) -> f64 {
    if s <= 0.5 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        let u = 2.0 * s - 1.0;
        (1.0 - 1.0 / (1.0 - u * u)).exp()
    }
}

/// d/ds of `cutoff`.
fn cutoff_deriv(s: f64) -> f64 {
    if s <= 0.5 || s >= 1.0 {
        0.0
    } else {
        let u = 2.0 * s - 1.0;
        let den = 1.0 - u * u;
        cutoff(s) * (-2.0 * u / (den * den)) * 2.0
    }
}

impl TestFunction {
    /// Look up a catalog id, instantiated for a torus of the given side.
    ///
    /// Geometry is relative to the box: centers sit at the box midpoint,
    /// widths scale with `side`.
    pub fn by_id(id: &str, dim: usize, side: f64) -> Option<TestFunction> {
        let center = vec![0.5 * side; dim];
        match id {
            "one" => Some(TestFunction::One),
            "bump" => Some(TestFunction::Bump {
                center,
                radius: 0.4 * side,
            }),
            "gauss" => Some(TestFunction::GaussianBump {
                center,
                sigma: side / 8.0,
                radius: 0.45 * side,
            }),
            "gauss_narrow" => Some(TestFunction::GaussianBump {
                center,
                sigma: side / 16.0,
                radius: 0.45 * side,
            }),
            "cos" => Some(TestFunction::Cosine {
                modes: {
                    let mut m = vec![0; dim];
                    m[0] = 1;
                    m
                },
            }),
            "cos_diag" => Some(TestFunction::Cosine {
                modes: vec![1; dim],
            }),
            _ => None,
        }
    }

    pub fn catalog_ids() -> &'static [&'static str] {
        &["one", "bump", "gauss", "gauss_narrow", "cos", "cos_diag"]
    }

    /// Closed-form description for config echo and reports.
    pub fn describe(&self) -> String {
        match self {
            TestFunction::One => "1".to_string(),
            TestFunction::Bump { center, radius } => format!(
                "exp(1 - 1/(1-(r/{radius})^2)) for r=|x-{center:?}|_min < {radius}, else 0"
            ),
            TestFunction::GaussianBump {
                center,
                sigma,
                radius,
            } => format!(
                "exp(-r^2/(2*{sigma}^2)) * cutoff(r/{radius}), r=|x-{center:?}|_min"
            ),
            TestFunction::Cosine { modes } => {
                format!("prod_k cos(2 pi {modes:?}[k] x_k / side)")
            }
        }
    }

    /// Radius of the support ball, `None` when the support is the whole
    /// torus (constant and cosine entries).
    pub fn support_radius(&self) -> Option<f64> {
        match self {
            TestFunction::One | TestFunction::Cosine { .. } => None,
            TestFunction::Bump { radius, .. } => Some(*radius),
            TestFunction::GaussianBump { radius, .. } => Some(*radius),
        }
    }

    pub fn eval(&self, x: &[f64], torus: &Torus) -> f64 {
        match self {
            TestFunction::One => 1.0,
            TestFunction::Bump { center, radius } => {
                let r2 = torus.distance_sq(x, center);
                let s2 = r2 / (radius * radius);
                if s2 >= 1.0 {
                    0.0
                } else {
                    (1.0 - 1.0 / (1.0 - s2)).exp()
                }
            }
            TestFunction::GaussianBump {
                center,
                sigma,
                radius,
            } => {
                let r2 = torus.distance_sq(x, center);
                let r = r2.sqrt();
                if r >= *radius {
                    0.0
                } else {
                    (-r2 / (2.0 * sigma * sigma)).exp() * cutoff(r / radius)
                }
            }
            TestFunction::Cosine { modes } => {
                let mut v = 1.0;
                for (k, m) in modes.iter().enumerate() {
                    if *m != 0 {
                        v *= (2.0 * std::f64::consts::PI * f64::from(*m) * x[k] / torus.side)
                            .cos();
                    }
                }
                v
            }
        }
    }

    /// Analytic gradient, written into `out[..dim]`.
    pub fn grad(&self, x: &[f64], torus: &Torus, out: &mut [f64]) {
        for o in out.iter_mut().take(torus.dim) {
            *o = 0.0;
        }
        match self {
            TestFunction::One => {}
            TestFunction::Bump { center, radius } => {
                let mut delta = [0.0; 3];
                torus.displacement(center, x, &mut delta);
                let r2: f64 = delta[..torus.dim].iter().map(|d| d * d).sum();
                let s2 = r2 / (radius * radius);
                if s2 < 1.0 {
                    let phi = (1.0 - 1.0 / (1.0 - s2)).exp();
                    // d/d(s2) of the exponent is -1/(1-s2)^2
                    let dexp_ds2 = -1.0 / ((1.0 - s2) * (1.0 - s2));
                    let factor = phi * dexp_ds2 * 2.0 / (radius * radius);
                    for k in 0..torus.dim {
                        out[k] = factor * delta[k];
                    }
                }
            }
            TestFunction::GaussianBump {
                center,
                sigma,
                radius,
            } => {
                let mut delta = [0.0; 3];
                torus.displacement(center, x, &mut delta);
                let r2: f64 = delta[..torus.dim].iter().map(|d| d * d).sum();
                let r = r2.sqrt();
                if r < *radius {
                    let g = (-r2 / (2.0 * sigma * sigma)).exp();
                    let q = cutoff(r / radius);
                    let gp_over_r = -g / (sigma * sigma); // (dG/dr)/r
                    let qp = cutoff_deriv(r / radius) / radius;
                    for k in 0..torus.dim {
                        let radial = if r > 0.0 { delta[k] / r } else { 0.0 };
                        out[k] = gp_over_r * delta[k] * q + g * qp * radial;
                    }
                }
            }
            TestFunction::Cosine { modes } => {
                let tau = 2.0 * std::f64::consts::PI / torus.side;
                for k in 0..torus.dim {
                    let mut v = 1.0;
                    for (l, m) in modes.iter().enumerate() {
                        if *m == 0 {
                            continue;
                        }
                        let arg = tau * f64::from(*m) * x[l];
                        if l == k {
                            v *= -tau * f64::from(*m) * arg.sin();
                        } else {
                            v *= arg.cos();
                        }
                    }
                    out[k] = if modes[k] == 0 { 0.0 } else { v };
                }
            }
        }
    }

    /// `int phi dx` over the torus by the midpoint rule with `n` points
    /// per axis (spectrally accurate for these smooth functions).
    pub fn mass(&self, torus: &Torus, n: usize) -> f64 {
        let h = torus.side / n as f64;
        let dim = torus.dim;
        let total = n.pow(dim as u32);
        let mut sum = 0.0;
        let mut x = [0.0; 3];
        for flat in 0..total {
            let mut rem = flat;
            for coord in x.iter_mut().take(dim) {
                *coord = (rem % n) as f64 * h + 0.5 * h;
                rem /= n;
            }
            sum += self.eval(&x[..dim], torus);
        }
        sum * h.powi(dim as i32)
    }
}
