//! Dense symmetric matrix primitives: spectral decomposition, PSD square
//! roots, norms and Loewner-order comparison.

mod eigen;

pub use eigen::{sym_eigendecompose, SpectralDecomposition};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense symmetric `n x n` matrix stored row-major.
///
/// Construction stores `(M + M^T) / 2`, so `get(i, j) == get(j, i)` holds
/// exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds a symmetric matrix from `dim * dim` row-major entries,
    /// symmetrising them.
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMatrix("dimension must be at least 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::InvalidMatrix(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidMatrix(format!("non-finite entry {bad}")));
        }
        let mut data = entries;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let m = 0.5 * (data[i * dim + j] + data[j * dim + i]);
                data[i * dim + j] = m;
                data[j * dim + i] = m;
            }
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::InvalidMatrix(format!(
                "row of length {} in a {dim}-row matrix",
                bad.len()
            )));
        }
        Self::new(dim, rows.concat())
    }

    /// Caller guarantees `data` is exactly symmetric.
    pub(crate) fn from_symmetric_unchecked(dim: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        Self { dim, data }
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let entries = (0..dim * dim).map(|k| f(k / dim, k % dim)).collect();
        Self::new(dim, entries)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diag(&vec![1.0; dim])
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "dimension must be at least 1");
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let dim = diag.len();
        assert!(dim >= 1, "dimension must be at least 1");
        let mut data = vec![0.0; dim * dim];
        for (i, &x) in diag.iter().enumerate() {
            data[i * dim + i] = x;
        }
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|x| c * x).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub(crate) fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: other.dim,
            });
        }
        Ok(())
    }

    /// `R M R` for symmetric `R`, re-symmetrised.
    pub fn congruence(&self, r: &SymMatrix) -> Result<Self> {
        self.check_dim(r)?;
        let n = self.dim;
        let mut rm = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let rik = r.get(i, k);
                for j in 0..n {
                    rm[i * n + j] += rik * self.get(k, j);
                }
            }
        }
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let x = rm[i * n + k];
                for j in 0..n {
                    out[i * n + j] += x * r.get(k, j);
                }
            }
        }
        Self::new(n, out)
    }

    /// Plain product `self * other`; generally not symmetric.
    pub fn matmul(&self, other: &SymMatrix) -> Result<Matrix> {
        self.check_dim(other)?;
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let x = self.get(i, k);
                for j in 0..n {
                    out[i * n + j] += x * other.get(k, j);
                }
            }
        }
        Ok(Matrix::from_row_major(n, n, out))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn entrywise_max(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn eigen(&self) -> Result<SpectralDecomposition> {
        sym_eigendecompose(self)
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.to_rows()
    }
}

/// General dense row-major matrix, used for attention maps which are not
/// symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", from = "Vec<Vec<f64>>")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// Entrywise max-absolute difference.
    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimMismatch {
                expected: self.rows * self.cols,
                actual: other.rows * other.cols,
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

impl From<Vec<Vec<f64>>> for Matrix {
    fn from(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        Self::from_row_major(r, c, rows.concat())
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

/// Default eigenvalue cutoff for PSD checks: `1e-9 * max(1, ||M||_2)`.
pub fn default_psd_tol(spectral_norm: f64) -> f64 {
    1e-9 * spectral_norm.max(1.0)
}

pub fn is_psd(m: &SymMatrix, tol: f64) -> Result<bool> {
    Ok(m.eigen()?.min_eigenvalue() >= -tol)
}

/// Principal square root. Eigenvalues in `[-tol, 0)` are clipped to zero.
pub fn psd_sqrt(m: &SymMatrix, tol: f64) -> Result<SymMatrix> {
    let d = m.eigen()?;
    let min = d.min_eigenvalue();
    if min < -tol {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
            tol,
        });
    }
    Ok(d.map_spectrum(|l| l.max(0.0).sqrt()))
}

/// `M^{-1/2}` for positive definite `M`.
pub fn psd_inv_sqrt(m: &SymMatrix, rank_tol: f64) -> Result<SymMatrix> {
    let d = m.eigen()?;
    inv_sqrt_from(&d, rank_tol)
}

pub(crate) fn inv_sqrt_from(d: &SpectralDecomposition, rank_tol: f64) -> Result<SymMatrix> {
    let min = d.min_eigenvalue();
    if min <= rank_tol {
        return Err(Error::SingularMatrix {
            min_eigenvalue: min,
            tol: rank_tol,
        });
    }
    Ok(d.map_spectrum(|l| 1.0 / l.sqrt()))
}

/// Rank cutoff used when a positive definite matrix is required: the
/// default PSD tolerance of `m`.
pub(crate) fn default_rank_tol(d: &SpectralDecomposition) -> f64 {
    let spectral = d.max_eigenvalue().abs().max(d.min_eigenvalue().abs());
    default_psd_tol(spectral)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub frobenius: f64,
    pub spectral: f64,
    pub entrywise_max: f64,
}

pub fn norms(m: &SymMatrix) -> Result<Norms> {
    let d = m.eigen()?;
    Ok(Norms {
        frobenius: m.frobenius(),
        spectral: d.max_eigenvalue().abs().max(d.min_eigenvalue().abs()),
        entrywise_max: m.entrywise_max(),
    })
}

/// Eigenvalues of `B^{-1/2} A B^{-1/2}`, descending.
pub fn whitened_spectrum(a: &SymMatrix, b: &SymMatrix) -> Result<Vec<f64>> {
    a.check_dim(b)?;
    let db = b.eigen()?;
    let w = inv_sqrt_from(&db, default_rank_tol(&db))?;
    Ok(a.congruence(&w)?.eigen()?.eigenvalues().to_vec())
}

/// Whether `(1 - eps) B <= A <= (1 + eps) B` in the Loewner order, decided on
/// the eigenvalues of `B^{-1/2} A B^{-1/2}` with slack `tol`.
pub fn loewner_within(a: &SymMatrix, b: &SymMatrix, eps: f64, tol: f64) -> Result<bool> {
    if !(eps >= 0.0) {
        return Err(Error::range("eps", eps, "eps >= 0"));
    }
    a.check_dim(b)?;
    let db = b.eigen()?;
    let w = inv_sqrt_from(&db, tol.max(0.0))?;
    let mu = a.congruence(&w)?.eigen()?;
    Ok(mu.min_eigenvalue() >= 1.0 - eps - tol && mu.max_eigenvalue() <= 1.0 + eps + tol)
}

/// `||Sigma^{-1/2} SigmaHat Sigma^{-1/2} - I||_F`.
pub fn relative_frobenius_distance(sigma: &SymMatrix, sigma_hat: &SymMatrix) -> Result<f64> {
    sigma.check_dim(sigma_hat)?;
    let d = sigma.eigen()?;
    let w = inv_sqrt_from(&d, default_rank_tol(&d))?;
    let white = sigma_hat.congruence(&w)?;
    Ok(white.sub(&SymMatrix::identity(sigma.dim()))?.frobenius())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn construction_symmetrises() {
        let m = SymMatrix::new(2, vec![1.0, 2.0, 4.0, 1.0]).unwrap();
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.get(1, 0), 3.0);
    }

    #[test]
    fn construction_rejects_bad_shapes() {
        assert!(SymMatrix::new(0, vec![]).is_err());
        assert!(SymMatrix::new(2, vec![1.0; 3]).is_err());
        assert!(SymMatrix::new(1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn psd_examples() {
        assert!(is_psd(&SymMatrix::identity(3), 0.0).unwrap());
        assert!(!is_psd(&SymMatrix::from_diag(&[1.0, -0.5]), 1e-9).unwrap());
        assert!(is_psd(&SymMatrix::from_diag(&[1.0, -1e-12]), 1e-9).unwrap());
    }

    #[test]
    fn sqrt_examples() {
        assert_eq!(
            psd_sqrt(&SymMatrix::identity(3), 1e-9).unwrap(),
            SymMatrix::identity(3)
        );
        let r = psd_sqrt(&SymMatrix::from_diag(&[4.0, 9.0]), 1e-9).unwrap();
        assert_eq!(r.diagonal(), vec![2.0, 3.0]);
        assert_eq!(r.get(0, 1), 0.0);

        let m = SymMatrix::new(2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let r = psd_sqrt(&m, 1e-9).unwrap();
        let ev = r.eigen().unwrap();
        assert!(close(ev.eigenvalues()[0], 3f64.sqrt(), 1e-14));
        assert!(close(ev.eigenvalues()[1], 1.0, 1e-14));
        let sq = r.matmul(&r).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(close(sq.get(i, j), m.get(i, j), 1e-14));
            }
        }
    }

    #[test]
    fn sqrt_clips_small_negative_and_rejects_large() {
        let r = psd_sqrt(&SymMatrix::from_diag(&[1.0, -1e-12]), 1e-9).unwrap();
        assert_eq!(r.diagonal(), vec![1.0, 0.0]);
        assert!(matches!(
            psd_sqrt(&SymMatrix::from_diag(&[1.0, -0.1]), 1e-9),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn inv_sqrt_examples() {
        assert_eq!(
            psd_inv_sqrt(&SymMatrix::identity(2), 1e-12).unwrap(),
            SymMatrix::identity(2)
        );
        let r = psd_inv_sqrt(&SymMatrix::from_diag(&[4.0, 16.0]), 1e-12).unwrap();
        assert_eq!(r.diagonal(), vec![0.5, 0.25]);
        assert!(matches!(
            psd_inv_sqrt(&SymMatrix::from_diag(&[1.0, 0.0]), 1e-12),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn norm_examples() {
        let n = norms(&SymMatrix::identity(3)).unwrap();
        assert!(close(n.frobenius, 3f64.sqrt(), 1e-15));
        assert_eq!((n.spectral, n.entrywise_max), (1.0, 1.0));

        let z = norms(&SymMatrix::zeros(2)).unwrap();
        assert_eq!((z.frobenius, z.spectral, z.entrywise_max), (0.0, 0.0, 0.0));

        // [[0,2],[2,0]]: frobenius sqrt(4+4), eigenvalues +-2
        let m = SymMatrix::new(2, vec![0.0, 2.0, 2.0, 0.0]).unwrap();
        let n = norms(&m).unwrap();
        assert!(close(n.frobenius, 2.0 * 2f64.sqrt(), 1e-15));
        assert!(close(n.spectral, 2.0, 1e-14));
        assert_eq!(n.entrywise_max, 2.0);
    }

    #[test]
    fn loewner_examples() {
        let b = SymMatrix::new(2, vec![2.0, 0.3, 0.3, 1.0]).unwrap();
        assert!(loewner_within(&b, &b, 0.0, 1e-12).unwrap());
        assert!(!loewner_within(&b.scale(2.0), &b, 0.1, 1e-12).unwrap());
        let i = SymMatrix::identity(2);
        assert!(loewner_within(&i.scale(1.05), &i, 0.05, 1e-12).unwrap());
        assert!(!loewner_within(&i.scale(1.06), &i, 0.05, 1e-12).unwrap());
        assert!(matches!(
            loewner_within(&i, &SymMatrix::from_diag(&[1.0, 0.0]), 0.1, 1e-12),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn relative_frobenius_examples() {
        let i = SymMatrix::identity(2);
        assert_eq!(relative_frobenius_distance(&i, &i).unwrap(), 0.0);
        // whitened 2I - I = I, frobenius sqrt(2)
        let d = relative_frobenius_distance(&i, &i.scale(2.0)).unwrap();
        assert!(close(d, 2f64.sqrt(), 1e-15));
        let s = SymMatrix::from_diag(&[4.0, 1.0]);
        assert!(relative_frobenius_distance(&s, &s).unwrap() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = SymMatrix::identity(2).add(&SymMatrix::identity(3));
        assert_eq!(
            err,
            Err(Error::DimMismatch {
                expected: 2,
                actual: 3
            })
        );
    }
}
