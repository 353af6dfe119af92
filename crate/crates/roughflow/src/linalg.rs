//! Dense helpers for the small matrices that ride along every path value
//! (d is the state dimension, typically 1..3) plus the one larger
//! factorisation the crate needs, a plain Cholesky for Gaussian sampling.
//!
//! Nothing here is tuned for scale; correctness and determinism win.

use crate::error::{Error, Result};

/// a + b, elementwise.
pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// a - b, elementwise.
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// c * a, elementwise.
pub fn scale(c: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| c * x).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm of a vector, Frobenius norm of a flattened tensor.
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outer product a b^T, row-major d1 x d2.
pub fn outer(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            out.push(x * y);
        }
    }
    out
}

/// Row-major (n x m) times vector (m).
pub fn matvec(a: &[f64], x: &[f64], n: usize, m: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * m);
    debug_assert_eq!(x.len(), m);
    (0..n).map(|i| dot(&a[i * m..(i + 1) * m], x)).collect()
}

/// Row-major (n x m) times row-major (m x p).
pub fn matmul(a: &[f64], b: &[f64], n: usize, m: usize, p: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), n * m);
    debug_assert_eq!(b.len(), m * p);
    let mut out = vec![0.0; n * p];
    for i in 0..n {
        for k in 0..m {
            let aik = a[i * m + k];
            for j in 0..p {
                out[i * p + j] += aik * b[k * p + j];
            }
        }
    }
    out
}

/// Identity matrix, row-major d x d.
pub fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

/// Determinant of a row-major d x d matrix by partial-pivot elimination.
pub fn det(a: &[f64], d: usize) -> f64 {
    debug_assert_eq!(a.len(), d * d);
    let mut m = a.to_vec();
    let mut sign = 1.0;
    for col in 0..d {
        let mut piv = col;
        for r in col + 1..d {
            if m[r * d + col].abs() > m[piv * d + col].abs() {
                piv = r;
            }
        }
        if m[piv * d + col] == 0.0 {
            return 0.0;
        }
        if piv != col {
            for j in 0..d {
                m.swap(col * d + j, piv * d + j);
            }
            sign = -sign;
        }
        let p = m[col * d + col];
        for r in col + 1..d {
            let f = m[r * d + col] / p;
            for j in col..d {
                m[r * d + j] -= f * m[col * d + j];
            }
        }
    }
    sign * (0..d).map(|i| m[i * d + i]).product::<f64>()
}

/// Spectral norm of a row-major (n x m) matrix via power iteration on
/// A^T A. Deterministic start vector, fixed iteration count; plenty for the
/// small well-conditioned matrices this crate produces.
pub fn operator_norm(a: &[f64], n: usize, m: usize) -> f64 {
    debug_assert_eq!(a.len(), n * m);
    if a.iter().all(|x| *x == 0.0) {
        return 0.0;
    }
    let mut v = vec![0.0; m];
    // Start from the largest column to avoid an orthogonal start.
    let mut best = 0;
    let mut best_norm = -1.0;
    for j in 0..m {
        let c: f64 = (0..n).map(|i| a[i * m + j] * a[i * m + j]).sum();
        if c > best_norm {
            best_norm = c;
            best = j;
        }
    }
    v[best] = 1.0;
    let mut lambda = 0.0;
    for _ in 0..200 {
        let av = matvec(a, &v, n, m);
        let mut atav = vec![0.0; m];
        for i in 0..n {
            for j in 0..m {
                atav[j] += a[i * m + j] * av[i];
            }
        }
        lambda = norm(&atav);
        if lambda == 0.0 {
            return 0.0;
        }
        for x in atav.iter_mut() {
            *x /= lambda;
        }
        v = atav;
    }
    lambda.sqrt()
}

/// In-place lower Cholesky factor of a symmetric positive definite matrix
/// (row-major n x n). `jitter` is added to the diagonal before factoring.
/// Fails if a pivot is not strictly positive.
pub fn cholesky(a: &[f64], n: usize, jitter: f64) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        for i in j..n {
            let mut s = a[i * n + j];
            if i == j {
                s += jitter;
            }
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::numerical(format!(
                        "cholesky pivot {j} is {s:.3e}; matrix is not positive definite"
                    )));
                }
                l[j * n + j] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Sum with a fixed pairwise association order. Used wherever a reduction
/// must not depend on thread count or accumulation order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}
