//! Thin wrappers over faer for the dense Hermitian work done everywhere else.

use faer::{Mat, Side};
use num_complex::Complex64;

use crate::error::{LabError, Result};

pub type C64 = Complex64;
pub type CMat = Mat<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn cis(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

/// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues and the
/// matching orthonormal eigenvectors as columns.
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

pub fn eigh(h: &CMat) -> Result<Eigh> {
    let n = h.nrows();
    if n == 0 {
        return Ok(Eigh { values: vec![], vectors: CMat::zeros(0, 0) });
    }
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| LabError::EigenFailure { k1: f64::NAN })?;
    let s = evd.S().column_vector();
    let values: Vec<f64> = (0..n).map(|i| s[i].re).collect();
    let vectors = evd.U().to_owned();
    Ok(Eigh { values, vectors })
}

pub fn eigvalsh(h: &CMat) -> Result<Vec<f64>> {
    if h.nrows() == 0 {
        return Ok(vec![]);
    }
    let mut v: Vec<f64> = h
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|_| LabError::EigenFailure { k1: f64::NAN })?;
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(v)
}

/// max_ij |h_ij − conj(h_ji)|
pub fn hermiticity_defect(h: &CMat) -> f64 {
    let n = h.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((h[(i, j)] - h[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    worst
}

/// Columns `cols` of `m` as a new matrix.
pub fn select_columns(m: &CMat, cols: &[usize]) -> CMat {
    CMat::from_fn(m.nrows(), cols.len(), |i, j| m[(i, cols[j])])
}

/// Inside clusters of (near-)degenerate eigenvalues, rotate the eigenvectors so
/// that they also diagonalize `op` restricted to the cluster. Returns the
/// rotated eigenvectors and, per column, the diagonal value of `op`.
pub fn resolve_degeneracies(e: &Eigh, op: &CMat, tol: f64) -> Result<(CMat, Vec<f64>)> {
    let n = e.values.len();
    let mut vecs = e.vectors.clone();
    let mut diag = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && e.values[end] - e.values[end - 1] < tol {
            end += 1;
        }
        let cols: Vec<usize> = (start..end).collect();
        let u = select_columns(&e.vectors, &cols);
        let sub = u.adjoint() * op * &u;
        let sub = CMat::from_fn(sub.nrows(), sub.ncols(), |i, j| 0.5 * (sub[(i, j)] + sub[(j, i)].conj()));
        let inner = eigh(&sub)?;
        let rotated = &u * &inner.vectors;
        for (local, &col) in cols.iter().enumerate() {
            for r in 0..vecs.nrows() {
                vecs[(r, col)] = rotated[(r, local)];
            }
            diag[col] = inner.values[local];
        }
        start = end;
    }
    Ok((vecs, diag))
}

/// Multiply each column by a phase so that its first component of modulus
/// above `floor` is real and positive.
pub fn fix_gauge(vecs: &mut CMat, floor: f64) {
    for j in 0..vecs.ncols() {
        let mut phase = None;
        for i in 0..vecs.nrows() {
            let z = vecs[(i, j)];
            if z.norm() > floor {
                phase = Some(z.conj() / z.norm());
                break;
            }
        }
        if let Some(ph) = phase {
            for i in 0..vecs.nrows() {
                vecs[(i, j)] *= ph;
            }
        }
    }
}

/// Pairwise sum, so that the rounding pattern depends only on the input order.
pub fn pairwise_sum(xs: &[C64]) -> C64 {
    match xs.len() {
        0 => C64::new(0.0, 0.0),
        1 => xs[0],
        n if n <= 8 => xs.iter().fold(C64::new(0.0, 0.0), |a, b| a + b),
        n => {
            let (l, r) = xs.split_at(n / 2);
            pairwise_sum(l) + pairwise_sum(r)
        }
    }
}

pub fn pairwise_sum_real(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        n if n <= 8 => xs.iter().sum(),
        n => {
            let (l, r) = xs.split_at(n / 2);
            pairwise_sum_real(l) + pairwise_sum_real(r)
        }
    }
}
