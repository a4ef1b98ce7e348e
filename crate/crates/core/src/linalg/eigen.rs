use super::SymMatrix;
use crate::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix.
///
/// Eigenvalues are sorted descending. Eigenvector `j` is column `j` of the
/// row-major `n x n` array, normalised so that its first component with
/// magnitude above `1e-12` is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: Vec<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("dim >= 1")
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Component `i` of eigenvector `j`.
    pub fn vector_component(&self, i: usize, j: usize) -> f64 {
        self.eigenvectors[i * self.dim() + j]
    }

    pub fn eigenvector(&self, j: usize) -> Vec<f64> {
        (0..self.dim()).map(|i| self.vector_component(i, j)).collect()
    }

    /// `V diag(g(lambda)) V^T`.
    pub fn map_spectrum(&self, g: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.dim();
        let mapped: Vec<f64> = self.eigenvalues.iter().map(|&l| g(l)).collect();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for (m, &w) in mapped.iter().enumerate() {
                    acc += self.vector_component(i, m) * w * self.vector_component(j, m);
                }
                out[i * n + j] = acc;
                out[j * n + i] = acc;
            }
        }
        SymMatrix::from_symmetric_unchecked(n, out)
    }

    pub fn reconstruct(&self) -> SymMatrix {
        self.map_spectrum(|l| l)
    }

    /// `||V^T V - I||_F`.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for a in 0..n {
            for b in 0..n {
                let dot: f64 = (0..n)
                    .map(|i| self.vector_component(i, a) * self.vector_component(i, b))
                    .sum();
                let target = if a == b { 1.0 } else { 0.0 };
                acc += (dot - target).powi(2);
            }
        }
        acc.sqrt()
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Jacobi is slower than tridiagonal QR but every step is a fixed sequence of
/// IEEE operations, so the output is bit-reproducible for a given input and
/// eigenvectors come out orthonormal to working precision.
pub fn sym_eigendecompose(m: &SymMatrix) -> Result<SpectralDecomposition> {
    if let Some(bad) = m.as_slice().iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidMatrix(format!("non-finite entry {bad}")));
    }
    let n = m.dim();
    let mut a = m.as_slice().to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    for sweep in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum();
        if off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let g = 100.0 * apq.abs();
                // Once the element is negligible next to both diagonal entries
                // a rotation would not change them; drop it.
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    continue;
                }
                let h = aqq - app;
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    let new_rp = c * arp - s * arq;
                    let new_rq = s * arp + c * arq;
                    a[r * n + p] = new_rp;
                    a[p * n + r] = new_rp;
                    a[r * n + q] = new_rq;
                    a[q * n + r] = new_rq;
                }
                for r in 0..n {
                    let vrp = v[r * n + p];
                    let vrq = v[r * n + q];
                    v[r * n + p] = c * vrp - s * vrq;
                    v[r * n + q] = s * vrp + c * vrq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps equal eigenvalues in rotation order
    order.sort_by(|&x, &y| a[y * n + y].total_cmp(&a[x * n + x]));

    let eigenvalues: Vec<f64> = order.iter().map(|&j| a[j * n + j]).collect();
    let mut eigenvectors = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        let flip = (0..n)
            .map(|i| v[i * n + src])
            .find(|x| x.abs() > 1e-12)
            .is_some_and(|x| x < 0.0);
        for i in 0..n {
            let x = v[i * n + src];
            eigenvectors[i * n + dst] = if flip { -x } else { x };
        }
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}
