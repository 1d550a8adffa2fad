//! Shared numerical kernels: conjugate gradient, dense matrix
//! exponential, small symmetric eigenproblems.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct CgOutcome {
    pub iterations: usize,
    pub residual: f64,
}

/// Conjugate gradient for a symmetric positive (semi-)definite operator
/// given as a matrix-vector closure. Stops when the Euclidean residual
/// drops to `tol_abs`; optional Jacobi preconditioning via the operator
/// diagonal.
pub fn conjugate_gradient<A>(
    apply: A,
    rhs: &[f64],
    x: &mut [f64],
    tol_abs: f64,
    max_iter: usize,
    jacobi: Option<&[f64]>,
) -> Result<CgOutcome>
where
    A: Fn(&[f64], &mut [f64]),
{
    let n = rhs.len();
    assert_eq!(x.len(), n);
    let precond = |r: &[f64], z: &mut [f64]| match jacobi {
        Some(diag) => {
            for k in 0..n {
                z[k] = if diag[k] != 0.0 { r[k] / diag[k] } else { r[k] };
            }
        }
        None => z.copy_from_slice(r),
    };

    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz: f64 = dot(&r, &z);
    let mut res = norm(&r);
    if res <= tol_abs {
        return Ok(CgOutcome {
            iterations: 0,
            residual: res,
        });
    }
    let mut ap = vec![0.0; n];
    for iter in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // numerically singular direction; bail with the current state
            return Err(Error::Solver {
                iterations: iter,
                residual: res,
                target: tol_abs,
                hint: "; operator lost positive-definiteness".into(),
            });
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        res = norm(&r);
        if res <= tol_abs {
            return Ok(CgOutcome {
                iterations: iter,
                residual: res,
            });
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::Solver {
        iterations: max_iter,
        residual: res,
        target: tol_abs,
        hint: String::new(),
    })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Dense matrix exponential by Pade-13 approximation with scaling and
/// squaring.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    const THETA_13: f64 = 5.371_920_351_148_152;
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let norm1 = one_norm(a);
    let s = if norm1 > THETA_13 {
        (norm1 / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a_scaled = a / 2f64.powi(s);
    let mut e = expm_pade13(&a_scaled);
    for _ in 0..s {
        e = &e * &e;
    }
    e
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    let mut best: f64 = 0.0;
    for j in 0..a.ncols() {
        let col_sum: f64 = a.column(j).iter().map(|v| v.abs()).sum();
        best = best.max(col_sum);
    }
    best
}

fn expm_pade13(a: &DMatrix<f64>) -> DMatrix<f64> {
    let b = [
        64_764_752_532_480_000.0,
        32_382_376_266_240_000.0,
        7_771_770_303_897_600.0,
        1_187_353_796_428_800.0,
        129_060_195_264_000.0,
        10_559_470_521_600.0,
        670_442_572_800.0,
        33_522_128_640.0,
        1_323_241_920.0,
        40_840_800.0,
        960_960.0,
        16_380.0,
        182.0,
        1.0,
    ];
    let n = a.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &ident * b[1];
    let u = a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &ident * b[0];
    let lhs = &v - &u;
    let rhs = &v + &u;
    lhs.lu().solve(&rhs).expect("Pade denominator is singular")
}

/// Eigendecomposition of a small symmetric matrix with eigenvalues sorted
/// in descending order and a deterministic sign convention on the
/// eigenvectors (largest-magnitude component positive).
pub fn symmetric_eigen_sorted(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = a.clone().symmetric_eigen();
    let d = a.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut values = Vec::with_capacity(d);
    let mut vectors = DMatrix::<f64>::zeros(d, d);
    for (col, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let v = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for k in 1..d {
            if v[k].abs() > v[pivot].abs() {
                pivot = k;
            }
        }
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for k in 0..d {
            vectors[(k, col)] = sign * v[k];
        }
    }
    (values, vectors)
}
