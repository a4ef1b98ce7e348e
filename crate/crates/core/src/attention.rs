//! Symmetric attention `D(A)^{-1} f(A)` and the deterministic error chain
//! from Loewner closeness of `A` and `B` to closeness of their attention
//! matrices.
//!
//! `f` acts entrywise and `D(A) = diag(f(A) 1)`, so every row of the
//! attention matrix is a probability vector. Matrix infinity norms here are
//! entrywise max-absolute-value.

use serde::{Deserialize, Serialize};

use crate::linalg::{default_psd_tol, is_psd, loewner_within, Matrix, SymMatrix};
use crate::{Error, Result};

/// Slack used when checking the Loewner precondition of the error chain.
pub const CHAIN_LOEWNER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FKind {
    Exp,
    Cosh,
}

impl FKind {
    pub const ALL: [FKind; 2] = [FKind::Exp, FKind::Cosh];
}

impl std::fmt::Display for FKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FKind::Exp => "exp",
            FKind::Cosh => "cosh",
        })
    }
}

impl std::str::FromStr for FKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "exp" => Ok(FKind::Exp),
            "cosh" => Ok(FKind::Cosh),
            other => Err(format!("unknown f kind {other:?}, expected exp or cosh")),
        }
    }
}

pub fn apply_f(z: f64, kind: FKind) -> Result<f64> {
    let v = match kind {
        FKind::Exp => z.exp(),
        FKind::Cosh => z.cosh(),
    };
    if !v.is_finite() {
        return Err(Error::Overflow(z));
    }
    Ok(v)
}

pub fn entrywise_f(m: &SymMatrix, kind: FKind) -> Result<SymMatrix> {
    let data = m
        .as_slice()
        .iter()
        .map(|&z| apply_f(z, kind))
        .collect::<Result<Vec<_>>>()?;
    SymMatrix::new(m.dim(), data)
}

/// Row sums of `f(M)`, the diagonal of `D(M)`.
pub fn normalizer_d(m: &SymMatrix, kind: FKind) -> Result<Vec<f64>> {
    let fm = entrywise_f(m, kind)?;
    Ok(row_sums(&fm))
}

fn row_sums(fm: &SymMatrix) -> Vec<f64> {
    fm.as_slice().chunks(fm.dim()).map(|r| r.iter().sum()).collect()
}

pub fn attention_matrix(m: &SymMatrix, kind: FKind) -> Result<Matrix> {
    let fm = entrywise_f(m, kind)?;
    let n = fm.dim();
    let d = row_sums(&fm);
    let data = fm
        .as_slice()
        .chunks(n)
        .zip(&d)
        .flat_map(|(row, &di)| row.iter().map(move |x| x / di))
        .collect();
    Ok(Matrix::from_row_major(n, n, data))
}

/// `||D(A)^{-1} f(A) - D(B)^{-1} f(B)||_inf`.
pub fn attention_error(a: &SymMatrix, b: &SymMatrix, kind: FKind) -> Result<f64> {
    a.check_dim(b)?;
    attention_matrix(a, kind)?.max_abs_diff(&attention_matrix(b, kind)?)
}

fn check_unit_tenth(name: &'static str, x: f64, closed: bool) -> Result<()> {
    let ok = x > 0.0 && if closed { x <= 0.1 } else { x < 0.1 };
    if ok {
        Ok(())
    } else if closed {
        Err(Error::range(name, x, "must lie in (0, 0.1]"))
    } else {
        Err(Error::range(name, x, "must lie in (0, 0.1)"))
    }
}

/// Per-entry relative constant `2 + 2 eps + 4 r` shared by the f, normaliser
/// and attention steps.
pub fn chain_constant(eps: f64, r: f64) -> f64 {
    2.0 + 2.0 * eps + 4.0 * r
}

/// Attention error bound `4 (1 + eps + 2r) r`.
///
/// The chain needs `eps, r < 0.1`; the formula itself is also evaluated at the
/// closed endpoint 0.1.
pub fn theoretical_error_bound(eps: f64, r: f64) -> Result<f64> {
    check_unit_tenth("eps", eps, true)?;
    check_unit_tenth("r", r, true)?;
    Ok(4.0 * (1.0 + eps + 2.0 * r) * r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCheck {
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
}

impl StageCheck {
    fn new(measured: f64, bound: f64) -> Self {
        Self {
            measured,
            bound,
            passed: measured <= bound,
        }
    }
}

/// Measured quantity and bound for each step of the perturbation chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    /// `max |B_ij|` against `(1 + eps) r`.
    pub entry_bound: StageCheck,
    /// `max |f(A_ij) - f(B_ij)| / min(f(A_ij), f(B_ij))` against `(2 + 2eps + 4r) r`.
    pub f_perturbation: StageCheck,
    /// `max |D(A)_i - D(B)_i| / min(D(A)_i, D(B)_i)` against `(2 + 2eps + 4r) r`.
    pub normalizer: StageCheck,
    /// Attention error against `4 (1 + eps + 2r) r`.
    pub attention: StageCheck,
    /// `r / (1 - eps)`: the largest `|B_ij|` the Loewner sandwich allows.
    /// Exceeds `(1 + eps) r`, so the first stage can fail near the boundary.
    pub entry_bound_attainable: f64,
}

impl ChainReport {
    pub fn stages(&self) -> [(&'static str, &StageCheck); 4] {
        [
            ("entry_bound", &self.entry_bound),
            ("f_perturbation", &self.f_perturbation),
            ("normalizer", &self.normalizer),
            ("attention", &self.attention),
        ]
    }

    pub fn all_passed(&self) -> bool {
        self.stages().iter().all(|(_, s)| s.passed)
    }
}

fn max_relative_gap(xs: &[f64], ys: &[f64]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| (x - y).abs() / x.min(y))
        .fold(0.0, f64::max)
}

/// Evaluates every step of the error chain for `A` and its surrogate `B`.
///
/// Preconditions: `eps, r` in `(0, 0.1)`, both matrices PSD,
/// `max |A_ij| <= r` and `(1 - eps) B <= A <= (1 + eps) B`.
pub fn lemma_chain_check(
    a: &SymMatrix,
    b: &SymMatrix,
    eps: f64,
    r: f64,
    kind: FKind,
) -> Result<ChainReport> {
    a.check_dim(b)?;
    check_unit_tenth("eps", eps, false)?;
    check_unit_tenth("r", r, false)?;
    for (name, m) in [("A", a), ("B", b)] {
        let tol = default_psd_tol(m.entrywise_max() * m.dim() as f64);
        if !is_psd(m, tol)? {
            return Err(Error::PreconditionFailed(format!("psd: {name} is not PSD")));
        }
    }
    let a_max = a.entrywise_max();
    if a_max > r {
        return Err(Error::PreconditionFailed(format!(
            "entry bound: max |A_ij| = {a_max} exceeds r = {r}"
        )));
    }
    let within = loewner_within(a, b, eps, CHAIN_LOEWNER_TOL).map_err(|e| match e {
        Error::SingularMatrix { .. } => {
            Error::PreconditionFailed(format!("loewner: B is singular ({e})"))
        }
        other => other,
    })?;
    if !within {
        return Err(Error::PreconditionFailed(format!(
            "loewner: (1-eps)B <= A <= (1+eps)B fails for eps = {eps}"
        )));
    }

    let c = chain_constant(eps, r);
    let fa = entrywise_f(a, kind)?;
    let fb = entrywise_f(b, kind)?;
    let da = row_sums(&fa);
    let db = row_sums(&fb);

    Ok(ChainReport {
        entry_bound: StageCheck::new(b.entrywise_max(), (1.0 + eps) * r),
        f_perturbation: StageCheck::new(max_relative_gap(fa.as_slice(), fb.as_slice()), c * r),
        normalizer: StageCheck::new(max_relative_gap(&da, &db), c * r),
        attention: StageCheck::new(attention_error(a, b, kind)?, 4.0 * (1.0 + eps + 2.0 * r) * r),
        entry_bound_attainable: r / (1.0 - eps),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apply_f_examples() {
        assert_eq!(apply_f(0.0, FKind::Exp).unwrap(), 1.0);
        assert_eq!(apply_f(0.0, FKind::Cosh).unwrap(), 1.0);
        let expected = (0.1f64.exp() + (-0.1f64).exp()) / 2.0;
        assert!((apply_f(0.1, FKind::Cosh).unwrap() - expected).abs() < 1e-15);
        assert_eq!(apply_f(800.0, FKind::Exp), Err(Error::Overflow(800.0)));
        assert_eq!(apply_f(-800.0, FKind::Cosh), Err(Error::Overflow(-800.0)));
    }

    #[test]
    fn entrywise_f_examples() {
        for kind in FKind::ALL {
            let f = entrywise_f(&SymMatrix::zeros(2), kind).unwrap();
            assert_eq!(f.as_slice(), &[1.0; 4]);
        }
        let m = SymMatrix::from_diag(&[2f64.ln(), 0.0]);
        let f = entrywise_f(&m, FKind::Exp).unwrap();
        assert!((f.get(0, 0) - 2.0).abs() < 1e-15);
        assert_eq!(&f.as_slice()[1..], &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn normalizer_examples() {
        for kind in FKind::ALL {
            assert_eq!(normalizer_d(&SymMatrix::zeros(5), kind).unwrap(), vec![5.0; 5]);
        }
        let l = 2f64.ln();
        let m = SymMatrix::new(2, vec![0.0, l, l, 0.0]).unwrap();
        let d = normalizer_d(&m, FKind::Exp).unwrap();
        assert!(d.iter().all(|x| (x - 3.0).abs() < 1e-15));
    }

    #[test]
    fn attention_examples() {
        let att = attention_matrix(&SymMatrix::zeros(4), FKind::Exp).unwrap();
        assert!(att.as_slice().iter().all(|&x| x == 0.25));

        let one = attention_matrix(&SymMatrix::from_diag(&[10.0]), FKind::Cosh).unwrap();
        assert_eq!(one.as_slice(), &[1.0]);

        let l = 2f64.ln();
        let m = SymMatrix::new(2, vec![0.0, l, l, 0.0]).unwrap();
        let att = attention_matrix(&m, FKind::Exp).unwrap();
        let expected = [1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0];
        for (x, e) in att.as_slice().iter().zip(expected) {
            assert!((x - e).abs() < 1e-15);
        }
    }

    #[test]
    fn attention_error_examples() {
        let a = SymMatrix::new(2, vec![0.03, 0.01, 0.01, 0.02]).unwrap();
        assert_eq!(attention_error(&a, &a, FKind::Exp).unwrap(), 0.0);
        let z = SymMatrix::zeros(3);
        assert_eq!(attention_error(&z, &z, FKind::Cosh).unwrap(), 0.0);

        // rows of diag(a, a) under exp are (e^a, 1) / (e^a + 1): a logistic in a
        let logistic = |x: f64| 1.0 / (1.0 + (-x).exp());
        let expected = logistic(0.05) - logistic(0.04);
        let err = attention_error(
            &SymMatrix::from_diag(&[0.05, 0.05]),
            &SymMatrix::from_diag(&[0.04, 0.04]),
            FKind::Exp,
        )
        .unwrap();
        assert!((err - expected).abs() < 1e-15);
        assert!((err - 0.002_498_729_604).abs() < 1e-12);

        assert!(matches!(
            attention_error(&z, &SymMatrix::zeros(2), FKind::Exp),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn error_bound_values() {
        assert!((theoretical_error_bound(0.05, 0.05).unwrap() - 0.23).abs() < 1e-15);
        assert!((theoretical_error_bound(0.1, 0.1).unwrap() - 0.52).abs() < 1e-15);
        assert!(theoretical_error_bound(1e-6, 1e-6).unwrap() < 1e-5);
        assert!(theoretical_error_bound(0.0, 0.05).is_err());
        assert!(theoretical_error_bound(0.05, 0.2).is_err());
    }

    #[test]
    fn chain_with_equal_inputs_is_tight() {
        let a = SymMatrix::identity(2).scale(0.01);
        let rep = lemma_chain_check(&a, &a, 0.05, 0.05, FKind::Exp).unwrap();
        assert!(rep.all_passed());
        assert_eq!(rep.f_perturbation.measured, 0.0);
        assert_eq!(rep.normalizer.measured, 0.0);
        assert_eq!(rep.attention.measured, 0.0);
        assert_eq!(rep.entry_bound.measured, 0.01);
    }

    #[test]
    fn chain_at_loewner_boundary_breaks_entry_stage_only() {
        // B = A / (1 - eps) satisfies (1-eps)B <= A <= (1+eps)B with equality
        // on the left, so B_ii = r / (1 - eps) = 0.0526 > (1 + eps) r = 0.0525.
        let a = SymMatrix::identity(2).scale(0.05);
        let b = a.scale(1.0 / 0.95);
        for kind in FKind::ALL {
            let rep = lemma_chain_check(&a, &b, 0.05, 0.05, kind).unwrap();
            assert!(!rep.entry_bound.passed);
            assert!((rep.entry_bound.measured - 0.05 / 0.95).abs() < 1e-15);
            assert!((rep.entry_bound.bound - 0.0525).abs() < 1e-15);
            assert!(rep.entry_bound.measured <= rep.entry_bound_attainable + 1e-15);
            assert!(rep.f_perturbation.passed);
            assert!(rep.normalizer.passed);
            assert!(rep.attention.passed);
        }
    }

    #[test]
    fn chain_rejects_violated_preconditions() {
        let a = SymMatrix::new(2, vec![0.2, 0.0, 0.0, 0.2]).unwrap();
        match lemma_chain_check(&a, &a, 0.05, 0.05, FKind::Exp) {
            Err(Error::PreconditionFailed(msg)) => assert!(msg.starts_with("entry bound")),
            other => panic!("unexpected {other:?}"),
        }
        let a = SymMatrix::identity(2).scale(0.01);
        match lemma_chain_check(&a, &a.scale(2.0), 0.05, 0.05, FKind::Exp) {
            Err(Error::PreconditionFailed(msg)) => assert!(msg.starts_with("loewner")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            lemma_chain_check(&a, &a, 0.1, 0.05, FKind::Exp),
            Err(Error::ParamRange { name: "eps", .. })
        ));
    }

    #[test]
    fn fkind_round_trips_through_text() {
        for kind in FKind::ALL {
            assert_eq!(kind.to_string().parse::<FKind>().unwrap(), kind);
        }
        assert!("softmax".parse::<FKind>().is_err());
    }
}
