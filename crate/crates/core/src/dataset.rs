//! Datasets `X in R^{n x d}` whose columns are the private data elements,
//! their Gram matrix `XX^T`, single-column neighbours and the sensitivity of
//! the Gram map.
//!
//! A dataset is `(eta, alpha)`-good when `XX^T >= eta I` and every column has
//! Euclidean norm at most `alpha`. Neighbours differ in exactly one column, by
//! at most `beta` in norm, and stay inside the `alpha`-ball.

use serde::{Deserialize, Serialize};

use crate::linalg::{default_psd_tol, inv_sqrt_from, SymMatrix};
use crate::rng::NormalStream;
use crate::{Error, Result};

/// Absolute tolerance for goodness checks.
pub const GOODNESS_TOL: f64 = 1e-9;

/// Dense `n x d` matrix stored by columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    n: usize,
    columns: Vec<Vec<f64>>,
}

impl DataMatrix {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if n == 0 {
            return Err(Error::InvalidMatrix("dataset needs at least one row and one column".into()));
        }
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidMatrix("ragged columns".into()));
        }
        if columns.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMatrix("non-finite entry".into()));
        }
        Ok(Self { n, columns })
    }

    /// From `n` rows of length `d`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidMatrix("ragged rows".into()));
        }
        let columns = (0..d).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self::from_columns(columns)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.columns.iter().map(|c| c[i]).collect())
            .collect()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `XX^T` as a sum of column outer products.
pub fn gram(x: &DataMatrix) -> SymMatrix {
    let n = x.n();
    let mut out = vec![0.0; n * n];
    for col in x.columns() {
        for i in 0..n {
            for j in i..n {
                out[i * n + j] += col[i] * col[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            out[i * n + j] = out[j * n + i];
        }
    }
    SymMatrix::from_symmetric_unchecked(n, out)
}

/// True iff `lambda_min(XX^T) >= eta - tol` and every column norm is at most
/// `alpha + tol`.
pub fn check_good(x: &DataMatrix, eta: f64, alpha: f64, tol: f64) -> Result<bool> {
    if !(eta > 0.0) {
        return Err(Error::range("eta", eta, "eta > 0"));
    }
    if !(alpha > 0.0) {
        return Err(Error::range("alpha", alpha, "alpha > 0"));
    }
    if x.columns().iter().any(|c| norm2(c) > alpha + tol) {
        return Ok(false);
    }
    Ok(gram(x).eigen()?.min_eigenvalue() >= eta - tol)
}

/// A validated `(eta, alpha)`-good dataset with `d >= n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    x: DataMatrix,
    eta: f64,
    alpha: f64,
}

impl Dataset {
    pub fn new(x: DataMatrix, eta: f64, alpha: f64) -> Result<Self> {
        if x.d() < x.n() {
            return Err(Error::InvalidMatrix(format!(
                "need d >= n, got n = {}, d = {}",
                x.n(),
                x.d()
            )));
        }
        if !check_good(&x, eta, alpha, GOODNESS_TOL)? {
            return Err(Error::PreconditionFailed(format!(
                "dataset is not ({eta}, {alpha})-good"
            )));
        }
        Ok(Self { x, eta, alpha })
    }

    pub fn matrix(&self) -> &DataMatrix {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.x.n()
    }

    pub fn d(&self) -> usize {
        self.x.d()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gram(&self) -> SymMatrix {
        gram(&self.x)
    }
}

/// `X = [sqrt(eta) I_n | G]` where each column of `G` is a random direction
/// scaled to a uniformly drawn norm below `min(alpha, sqrt(eta))`.
pub fn generate_good_dataset(n: usize, d: usize, eta: f64, alpha: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || d < n {
        return Err(Error::InvalidMatrix(format!("need 1 <= n <= d, got n = {n}, d = {d}")));
    }
    if !(eta > 0.0) {
        return Err(Error::range("eta", eta, "eta > 0"));
    }
    let root = eta.sqrt();
    if !(alpha >= root) {
        return Err(Error::Infeasible(format!(
            "alpha = {alpha} < sqrt(eta) = {root}: columns of norm <= alpha cannot give XX^T >= eta I"
        )));
    }
    let cap = alpha.min(root);
    let mut columns: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut c = vec![0.0; n];
            c[j] = root;
            c
        })
        .collect();
    let mut stream = NormalStream::new(seed, 0);
    for _ in n..d {
        let mut c = vec![0.0; n];
        let mut len = 0.0;
        while len == 0.0 {
            stream.fill(&mut c);
            len = norm2(&c);
        }
        let radius = cap * rand::Rng::random::<f64>(stream.uniform());
        c.iter_mut().for_each(|x| *x *= radius / len);
        columns.push(c);
    }
    Dataset::new(DataMatrix::from_columns(columns)?, eta, alpha)
}

/// Two datasets differing in exactly one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborPair {
    pub base: Dataset,
    pub perturbed: DataMatrix,
    pub beta: f64,
    pub index: usize,
}

impl NeighborPair {
    /// Validates the pairing invariants for externally supplied data.
    pub fn new(base: Dataset, perturbed: DataMatrix, beta: f64, index: usize) -> Result<Self> {
        if perturbed.n() != base.n() || perturbed.d() != base.d() {
            return Err(Error::DimMismatch {
                expected: base.n() * base.d(),
                actual: perturbed.n() * perturbed.d(),
            });
        }
        if index >= base.d() {
            return Err(Error::IndexOutOfRange {
                index,
                len: base.d(),
            });
        }
        for j in 0..base.d() {
            if j != index && base.matrix().column(j) != perturbed.column(j) {
                return Err(Error::PreconditionFailed(format!(
                    "neighbour: column {j} differs besides index {index}"
                )));
            }
        }
        let shift = column_shift(base.matrix().column(index), perturbed.column(index));
        if shift > beta + GOODNESS_TOL {
            return Err(Error::PreconditionFailed(format!(
                "neighbour: column {index} moved by {shift} > beta = {beta}"
            )));
        }
        Ok(Self {
            base,
            perturbed,
            beta,
            index,
        })
    }

    pub fn shift(&self) -> f64 {
        column_shift(self.base.matrix().column(self.index), self.perturbed.column(self.index))
    }
}

fn column_shift(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Moves column `index` along a random direction by `min(beta, slack)`.
///
/// The direction is flipped if needed so it does not point away from the
/// origin; `slack` is the distance along it to the `alpha`-sphere, which keeps
/// the moved column inside the `alpha`-ball.
pub fn make_neighbor(x: &Dataset, beta: f64, index: usize, seed: u64) -> Result<NeighborPair> {
    if !(beta > 0.0) {
        return Err(Error::range("beta", beta, "beta > 0"));
    }
    if index >= x.d() {
        return Err(Error::IndexOutOfRange {
            index,
            len: x.d(),
        });
    }
    let col = x.matrix().column(index);
    let mut stream = NormalStream::new(seed, 0);
    let mut u = vec![0.0; x.n()];
    let mut len = 0.0;
    while len == 0.0 {
        stream.fill(&mut u);
        len = norm2(&u);
    }
    u.iter_mut().for_each(|v| *v /= len);
    if dot(&u, col) > 0.0 {
        u.iter_mut().for_each(|v| *v = -*v);
    }
    let ux = dot(&u, col);
    let room = (x.alpha() * x.alpha() - dot(col, col)).max(0.0);
    let slack = -ux + (ux * ux + room).sqrt();
    let step = beta.min(slack);

    let mut columns = x.matrix().columns().to_vec();
    for (c, d) in columns[index].iter_mut().zip(&u) {
        *c += step * d;
    }
    Ok(NeighborPair {
        base: x.clone(),
        perturbed: DataMatrix::from_columns(columns)?,
        beta,
        index,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub spectral: f64,
    pub frobenius: f64,
}

/// Norms of `(XX^T)^{-1/2} X'X'^T (XX^T)^{-1/2} - I`.
pub fn sensitivity_measured(pair: &NeighborPair) -> Result<Sensitivity> {
    let a = pair.base.gram();
    let da = a.eigen()?;
    let w = inv_sqrt_from(&da, default_psd_tol(da.max_eigenvalue()))?;
    let dev = gram(&pair.perturbed)
        .congruence(&w)?
        .sub(&SymMatrix::identity(a.dim()))?;
    let ev = dev.eigen()?;
    Ok(Sensitivity {
        spectral: ev.max_eigenvalue().abs().max(ev.min_eigenvalue().abs()),
        frobenius: dev.frobenius(),
    })
}

/// `(2 alpha beta / eta, 2 sqrt(n) alpha beta / eta)`.
pub fn sensitivity_bound(eta: f64, alpha: f64, beta: f64, n: usize) -> Result<Sensitivity> {
    if !(eta > 0.0) {
        return Err(Error::range("eta", eta, "eta > 0"));
    }
    let spectral = 2.0 * alpha * beta / eta;
    Ok(Sensitivity {
        spectral,
        frobenius: spectral * (n as f64).sqrt(),
    })
}
