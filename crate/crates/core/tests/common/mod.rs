#![allow(dead_code)]

use dpattn_core::linalg::SymMatrix;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller, independent of the crate's own normal stream.
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn to_na(m: &SymMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.dim(), m.dim(), |i, j| m.get(i, j))
}

pub fn from_na(m: &DMatrix<f64>) -> SymMatrix {
    SymMatrix::from_fn(m.nrows(), |i, j| 0.5 * (m[(i, j)] + m[(j, i)])).unwrap()
}

/// Haar-ish orthogonal matrix from the QR of a Gaussian matrix.
pub fn orthogonal(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| normal(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn with_spectrum(q: &DMatrix<f64>, spectrum: &[f64]) -> SymMatrix {
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(spectrum));
    from_na(&(q * d * q.transpose()))
}

pub fn random_symmetric(n: usize, rng: &mut impl Rng) -> SymMatrix {
    let g = DMatrix::from_fn(n, n, |_, _| normal(rng));
    from_na(&(&g + g.transpose()))
}

/// Positive definite with eigenvalues uniform in `[lo, hi]`.
pub fn random_pd(n: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> SymMatrix {
    let q = orthogonal(n, rng);
    let eigs: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
    with_spectrum(&q, &eigs)
}

/// Symmetric square root through nalgebra.
pub fn na_sqrt(m: &SymMatrix) -> DMatrix<f64> {
    let e = to_na(m).symmetric_eigen();
    let d = e.eigenvalues.map(|l| l.max(0.0).sqrt());
    &e.eigenvectors * DMatrix::from_diagonal(&d) * e.eigenvectors.transpose()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a: f64, x| a.max(x.abs()))
}
