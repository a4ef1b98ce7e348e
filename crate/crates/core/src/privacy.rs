//! Privacy accounting for the Gaussian sampling mechanism.
//!
//! For neighbouring covariances `Sigma1`, `Sigma2` let
//! `A = Sigma1^{1/2} Sigma2^{-1} Sigma1^{1/2}` with eigenvalues `lambda_j`.
//! The privacy-loss variable of `k` released samples is
//!
//! ```text
//! Z = 1/2 sum_i sum_j ((lambda_j - 1) h_ij^2 - ln lambda_j),   h_ij iid N(0, 1)
//! ```
//!
//! with mean `(k/2) sum_j (lambda_j - 1 - ln lambda_j)`. `Z` is
//! sub-exponential with `nu = sqrt(k) ||A - I||_F` and `alpha = 2 ||A - I||_F`,
//! and the mechanism is `(eps, delta)`-DP once `Pr[Z > eps] <= delta`.
//! All logarithms are natural.

use rayon::prelude::*;
use rand_distr::{ChiSquared, Distribution};
use serde::{Deserialize, Serialize};

use crate::linalg::{default_rank_tol, inv_sqrt_from, SymMatrix};
use crate::rng::NormalStream;
use crate::stats::{wilson_upper, Z_99};
use crate::{Error, Result};

/// Minimum Monte-Carlo trial count accepted by [`mc_privacy_verify`].
pub const MIN_TRIALS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaBudget {
    /// `min(eps / sqrt(8 k ln(1/delta)), eps / (8 ln(1/delta)))`.
    pub definition_delta: f64,
    /// `0.1 min(eps / sqrt(k ln(1/delta)), eps / ln(1/delta))`.
    pub theorem_delta: f64,
}

impl DeltaBudget {
    /// The stricter of the two budgets.
    pub fn min(&self) -> f64 {
        self.definition_delta.min(self.theorem_delta)
    }
}

pub fn delta_budget(eps: f64, delta_dp: f64, k: u64) -> Result<DeltaBudget> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::range("eps", eps, "eps in (0, 1)"));
    }
    if !(delta_dp > 0.0 && delta_dp < 1.0) {
        return Err(Error::range("delta", delta_dp, "delta in (0, 1)"));
    }
    if k == 0 {
        return Err(Error::range("k", 0.0, "k >= 1"));
    }
    let log_inv = (1.0 / delta_dp).ln();
    let k = k as f64;
    Ok(DeltaBudget {
        definition_delta: (eps / (8.0 * k * log_inv).sqrt()).min(eps / (8.0 * log_inv)),
        theorem_delta: 0.1 * (eps / (k * log_inv).sqrt()).min(eps / log_inv),
    })
}

/// Spectrum of `A = Sigma1^{1/2} Sigma2^{-1} Sigma1^{1/2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpectrum {
    /// Eigenvalues of `A`, descending.
    pub lambdas: Vec<f64>,
    /// `||A - I||_F`, computed from the matrix.
    pub frob_a_minus_i: f64,
    /// `||I - A^{-1}||_F`, computed from `A^{-1} = Sigma1^{-1/2} Sigma2 Sigma1^{-1/2}`.
    pub frob_i_minus_ainv: f64,
    /// Largest relative gap between `lambda_j` and the reciprocal eigenvalues
    /// of `A^{-1}`; the two routes agree to rounding.
    pub route_gap: f64,
}

impl PrivacySpectrum {
    /// Spectrum given directly by its eigenvalues.
    pub fn from_lambdas(mut lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() || lambdas.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidMatrix("eigenvalues must be positive and finite".into()));
        }
        lambdas.sort_by(|a, b| b.total_cmp(a));
        let frob_a_minus_i = lambdas.iter().map(|l| (l - 1.0).powi(2)).sum::<f64>().sqrt();
        let frob_i_minus_ainv = lambdas.iter().map(|l| (1.0 - 1.0 / l).powi(2)).sum::<f64>().sqrt();
        Ok(Self {
            lambdas,
            frob_a_minus_i,
            frob_i_minus_ainv,
            route_gap: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }
}

pub fn privacy_spectrum(sigma1: &SymMatrix, sigma2: &SymMatrix) -> Result<PrivacySpectrum> {
    sigma1.check_dim(sigma2)?;
    let n = sigma1.dim();
    let d1 = sigma1.eigen()?;
    let d2 = sigma2.eigen()?;
    let rank_tol1 = default_rank_tol(&d1);
    let rank_tol2 = default_rank_tol(&d2);
    if d1.min_eigenvalue() <= rank_tol1 {
        return Err(Error::SingularMatrix {
            min_eigenvalue: d1.min_eigenvalue(),
            tol: rank_tol1,
        });
    }
    if sigma1 == sigma2 {
        // A = I exactly; skip the round-off of forming it
        return PrivacySpectrum::from_lambdas(vec![1.0; n]);
    }
    if d2.min_eigenvalue() <= rank_tol2 {
        return Err(Error::SingularMatrix {
            min_eigenvalue: d2.min_eigenvalue(),
            tol: rank_tol2,
        });
    }
    let root1 = d1.map_spectrum(|l| l.max(0.0).sqrt());
    let inv_root1 = inv_sqrt_from(&d1, rank_tol1)?;
    let inv2 = d2.map_spectrum(|l| 1.0 / l);

    let a = inv2.congruence(&root1)?;
    let a_inv = sigma2.congruence(&inv_root1)?;
    let eye = SymMatrix::identity(n);

    let lambdas = a.eigen()?.eigenvalues().to_vec();
    if let Some(&bad) = lambdas.iter().find(|&&l| l <= 0.0) {
        return Err(Error::SingularMatrix {
            min_eigenvalue: bad,
            tol: 0.0,
        });
    }
    let mut recips: Vec<f64> = a_inv.eigen()?.eigenvalues().iter().map(|m| 1.0 / m).collect();
    recips.sort_by(|x, y| y.total_cmp(x));
    let route_gap = lambdas
        .iter()
        .zip(&recips)
        .map(|(l, r)| (l - r).abs() / l.abs().max(1.0))
        .fold(0.0, f64::max);

    Ok(PrivacySpectrum {
        lambdas,
        frob_a_minus_i: a.sub(&eye)?.frobenius(),
        frob_i_minus_ainv: eye.sub(&a_inv)?.frobenius(),
        route_gap,
    })
}

/// `E[Z] = (k/2) sum_j (lambda_j - 1 - ln lambda_j)`.
pub fn expected_privacy_loss(spectrum: &PrivacySpectrum, k: u64) -> f64 {
    let per_sample: f64 = spectrum.lambdas.iter().map(|&l| l - 1.0 - l.ln()).sum();
    0.5 * k as f64 * per_sample
}

/// One draw of `Z` for `k` samples, consuming `k * n` normals from `stream`.
pub fn sample_privacy_loss(spectrum: &PrivacySpectrum, k: u64, stream: &mut NormalStream) -> f64 {
    let mut acc = 0.0;
    for _ in 0..k {
        for &l in &spectrum.lambdas {
            let h = stream.next_normal();
            acc += (l - 1.0) * h * h - l.ln();
        }
    }
    0.5 * acc
}

/// Above this many samples a draw uses one chi-square variate per eigenvalue
/// instead of `k` squared normals.
pub const DIRECT_SAMPLING_MAX_K: u64 = 1024;

/// One draw of `Z` with `sum_s h_sj^2` replaced by a `chi^2_k` variate per
/// eigenvalue; same distribution as [`sample_privacy_loss`], cost independent
/// of `k`.
pub fn sample_privacy_loss_chi2(spectrum: &PrivacySpectrum, k: u64, stream: &mut NormalStream) -> f64 {
    let chi2 = ChiSquared::new(k as f64).expect("k >= 1");
    let kf = k as f64;
    let acc: f64 = spectrum
        .lambdas
        .iter()
        .map(|&l| (l - 1.0) * chi2.sample(stream.uniform()) - kf * l.ln())
        .sum();
    0.5 * acc
}

fn draw(spectrum: &PrivacySpectrum, k: u64, stream: &mut NormalStream) -> f64 {
    if k <= DIRECT_SAMPLING_MAX_K {
        sample_privacy_loss(spectrum, k, stream)
    } else {
        sample_privacy_loss_chi2(spectrum, k, stream)
    }
}

/// One draw of `Z` from substream `(seed, 0)`.
pub fn privacy_loss_sample(sigma1: &SymMatrix, sigma2: &SymMatrix, k: u64, seed: u64) -> Result<f64> {
    let spectrum = privacy_spectrum(sigma1, sigma2)?;
    Ok(draw(&spectrum, k, &mut NormalStream::new(seed, 0)))
}

/// `trials` independent draws; draw `t` uses substream `(seed, t)`.
pub fn privacy_loss_draws(spectrum: &PrivacySpectrum, k: u64, trials: usize, seed: u64) -> Vec<f64> {
    (0..trials)
        .into_par_iter()
        .map(|t| draw(spectrum, k, &mut NormalStream::new(seed, t as u64)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubExpParams {
    pub nu: f64,
    pub alpha_se: f64,
    pub mean: f64,
}

pub fn sub_exp_params(spectrum: &PrivacySpectrum, k: u64) -> SubExpParams {
    SubExpParams {
        nu: (k as f64).sqrt() * spectrum.frob_a_minus_i,
        alpha_se: 2.0 * spectrum.frob_a_minus_i,
        mean: expected_privacy_loss(spectrum, k),
    }
}

/// `Pr[Z - E[Z] >= t] <= max(exp(-t^2 / (2 nu^2)), exp(-t / (2 alpha)))`.
///
/// Degenerate parameters describe a point mass at the mean, whose tail is 0.
pub fn tail_bound(params: &SubExpParams, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::range("t", t, "t > 0"));
    }
    if params.nu == 0.0 || params.alpha_se == 0.0 {
        return Ok(0.0);
    }
    let gaussian = (-t * t / (2.0 * params.nu * params.nu)).exp();
    let exponential = (-t / (2.0 * params.alpha_se)).exp();
    Ok(gaussian.max(exponential))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenialReason {
    SensitivityExceeded,
    ExpectationExceeded,
    TailExceeded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub eps: f64,
    pub delta: f64,
    pub k: u64,
    /// `||Sigma1^{1/2} Sigma2^{-1} Sigma1^{1/2} - I||_F`.
    pub sensitivity: f64,
    pub frob_i_minus_ainv: f64,
    pub budget: DeltaBudget,
    /// Budget certified against: the smaller of the two variants.
    pub delta_used: f64,
    pub within_definition_budget: bool,
    pub within_theorem_budget: bool,
    pub sub_exp: SubExpParams,
    pub expected_loss: f64,
    /// `tail_bound(sub_exp, eps / 2)`.
    pub tail: f64,
    pub granted: bool,
    pub denials: Vec<DenialReason>,
}

/// Checks `M <= Delta`, `E[Z] <= eps/2` and the tail at `eps/2` against
/// `delta`; the certificate is granted when all three hold.
pub fn dp_certificate(
    sigma1: &SymMatrix,
    sigma2: &SymMatrix,
    eps: f64,
    delta_dp: f64,
    k: u64,
) -> Result<CertificateReport> {
    let spectrum = privacy_spectrum(sigma1, sigma2)?;
    certificate_for_spectrum(&spectrum, eps, delta_dp, k)
}

pub fn certificate_for_spectrum(
    spectrum: &PrivacySpectrum,
    eps: f64,
    delta_dp: f64,
    k: u64,
) -> Result<CertificateReport> {
    let budget = delta_budget(eps, delta_dp, k)?;
    let delta_used = budget.min();
    let sensitivity = spectrum.frob_a_minus_i;
    let sub_exp = sub_exp_params(spectrum, k);
    let tail = tail_bound(&sub_exp, eps / 2.0)?;

    let mut denials = Vec::new();
    if sensitivity > delta_used {
        denials.push(DenialReason::SensitivityExceeded);
    }
    if sub_exp.mean > eps / 2.0 {
        denials.push(DenialReason::ExpectationExceeded);
    }
    if tail > delta_dp {
        denials.push(DenialReason::TailExceeded);
    }
    Ok(CertificateReport {
        eps,
        delta: delta_dp,
        k,
        sensitivity,
        frob_i_minus_ainv: spectrum.frob_i_minus_ainv,
        budget,
        delta_used,
        within_definition_budget: sensitivity <= budget.definition_delta,
        within_theorem_budget: sensitivity <= budget.theorem_delta,
        sub_exp,
        expected_loss: sub_exp.mean,
        tail,
        granted: denials.is_empty(),
        denials,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub trials: usize,
    pub exceedances: u64,
    pub empirical_rate: f64,
    /// 99% Wilson upper confidence bound on `Pr[Z > eps]`.
    pub wilson_upper: f64,
}

impl McEstimate {
    pub fn from_draws(draws: &[f64], eps: f64) -> Self {
        let exceedances = draws.iter().filter(|&&z| z > eps).count() as u64;
        let trials = draws.len();
        Self {
            trials,
            exceedances,
            empirical_rate: exceedances as f64 / trials as f64,
            wilson_upper: wilson_upper(exceedances, trials as u64, Z_99),
        }
    }
}

/// Monte-Carlo estimate of `Pr[Z > eps]`.
pub fn mc_privacy_verify(
    sigma1: &SymMatrix,
    sigma2: &SymMatrix,
    k: u64,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<McEstimate> {
    if trials < MIN_TRIALS {
        return Err(Error::range("trials", trials as f64, "trials >= 1000"));
    }
    let spectrum = privacy_spectrum(sigma1, sigma2)?;
    let draws = privacy_loss_draws(&spectrum, k, trials, seed);
    Ok(McEstimate::from_draws(&draws, eps))
}
