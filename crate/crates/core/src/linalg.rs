//! Small dense complex linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub fn zeros(n: usize) -> CMat {
    CMat::zeros(n, n)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// `v v†`.
pub fn outer(v: &CVec) -> CMat {
    v * v.adjoint()
}

/// `Re(v† X v)`; exact for Hermitian `X`.
pub fn quad_form(x: &CMat, v: &CVec) -> f64 {
    v.dotc(&(x * v)).re
}

pub fn trace_re(m: &CMat) -> f64 {
    m.diagonal().iter().map(|z| z.re).sum()
}

/// `Re Tr(A B)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..a.ncols() {
            let x = a[(i, k)] * b[(k, i)];
            acc += x.re;
        }
    }
    acc
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

pub fn hermitian_defect(m: &CMat) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues in ascending order.
pub fn eigh(m: &CMat) -> (Vec<f64>, CMat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Largest eigenvalue and a unit eigenvector for it.
pub fn leading_eigenpair(m: &CMat) -> (f64, CVec) {
    let (values, vectors) = eigh(m);
    let n = values.len();
    let v = vectors.column(n - 1).into_owned();
    (values[n - 1], v)
}

pub fn lambda_max(m: &CMat) -> f64 {
    leading_eigenpair(m).0
}

pub fn lambda_min(m: &CMat) -> f64 {
    eigh(m).0[0]
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Spectral square root of a PSD matrix; negative eigenvalues are clipped.
pub fn psd_sqrt(m: &CMat) -> CMat {
    let (values, vectors) = eigh(m);
    let n = values.len();
    let mut scaled = vectors.clone();
    for (j, &lam) in values.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    scaled
}

pub fn real_scale(m: &CMat, s: f64) -> CMat {
    m * C64::new(s, 0.0)
}

pub fn sum<'a>(mats: impl IntoIterator<Item = &'a CMat>, n: usize) -> CMat {
    let mut acc = zeros(n);
    for m in mats {
        acc += m;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigh_sorts_ascending() {
        let m = CMat::from_diagonal(&CVec::from_vec(vec![
            C64::new(3.0, 0.0),
            C64::new(1.0, 0.0),
            C64::new(2.0, 0.0),
        ]));
        let (vals, _) = eigh(&m);
        assert_eq!(vals, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn leading_eigenvector_of_outer_product() {
        let v = CVec::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 2.0)]);
        let (lam, y) = leading_eigenpair(&outer(&v));
        assert!((lam - 5.0).abs() < 1e-12);
        let overlap = y.dotc(&v).norm() / v.norm();
        assert!((overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trace_product_matches_dense() {
        let a = CMat::from_fn(3, 3, |i, j| C64::new((i + j) as f64, i as f64 - j as f64));
        let b = CMat::from_fn(3, 3, |i, j| C64::new(1.0 + (i * j) as f64, 0.5));
        let dense = (&a * &b).trace().re;
        assert!((trace_product(&a, &b) - dense).abs() < 1e-12);
    }
}
