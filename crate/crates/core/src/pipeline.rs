//! End-to-end private attention: from a good dataset `X` to a released
//! surrogate `B` of `A = XX^T`, its attention matrix, and a report of every
//! requirement the guarantee rests on.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{attention_error, attention_matrix, theoretical_error_bound, FKind};
use crate::dataset::{gram, sensitivity_bound, Dataset, NeighborPair};
use crate::linalg::{loewner_within, Matrix, SymMatrix};
use crate::mechanism::{gaussian_sampling_mechanism, utility_rho};
use crate::privacy::{
    certificate_for_spectrum, delta_budget, privacy_loss_draws, privacy_spectrum, CertificateReport,
    DeltaBudget, McEstimate, MIN_TRIALS,
};
use crate::rng::stream_id;
use crate::{Error, Result};

/// Slack for the post-release Loewner check.
pub const LOEWNER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpParams {
    pub eps: f64,
    pub delta_dp: f64,
    pub gamma: f64,
    pub k: u64,
    pub r: f64,
    pub f_kind: FKind,
    #[serde(default = "default_c_rho")]
    pub c_rho: f64,
    pub seed: u64,
}

fn default_c_rho() -> f64 {
    1.0
}

fn open_interval(name: &'static str, x: f64, hi: f64, requirement: &'static str) -> Result<()> {
    if x > 0.0 && x < hi {
        Ok(())
    } else {
        Err(Error::range(name, x, requirement))
    }
}

impl DpParams {
    pub fn validate(&self) -> Result<()> {
        open_interval("eps", self.eps, 0.1, "eps in (0, 0.1)")?;
        open_interval("delta_dp", self.delta_dp, 0.1, "delta_dp in (0, 0.1)")?;
        open_interval("r", self.r, 0.1, "r in (0, 0.1)")?;
        open_interval("gamma", self.gamma, 1.0, "gamma in (0, 1)")?;
        if self.k == 0 {
            return Err(Error::range("k", 0.0, "k >= 1"));
        }
        if !(self.c_rho > 0.0 && self.c_rho.is_finite()) {
            return Err(Error::range("c_rho", self.c_rho, "c_rho > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckLevel {
    Hard,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementCheck {
    pub name: String,
    pub level: CheckLevel,
    pub passed: bool,
    pub measured: f64,
    pub required: f64,
    pub detail: String,
}

impl RequirementCheck {
    fn new(name: &str, level: CheckLevel, passed: bool, measured: f64, required: f64, detail: String) -> Self {
        Self {
            name: name.to_owned(),
            level,
            passed,
            measured,
            required,
            detail,
        }
    }
}

/// Names of the requirement checks, in evaluation order.
pub const REQUIREMENT_NAMES: [&str; 9] = [
    "dimension",
    "goodness",
    "entry_bound",
    "eta_below_r",
    "sensitivity",
    "utility",
    "rho_to_eps",
    "loewner",
    "error_bound",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpAttentionReport {
    pub params: DpParams,
    pub beta: f64,
    pub a: SymMatrix,
    pub b: SymMatrix,
    pub attention_a: Matrix,
    pub attention_b: Matrix,
    pub measured_error: f64,
    pub error_bound: f64,
    pub rho: f64,
    pub budget: DeltaBudget,
    pub delta_budget_used: f64,
    pub sensitivity_bound_frob: f64,
    pub requirement_checks: Vec<RequirementCheck>,
    /// `(1 - eps) B <= A <= (1 + eps) B` held for this release.
    pub loewner_event: bool,
    pub bound_satisfied: bool,
    pub singular_estimate: bool,
    /// Rounding left `B` with negative eigenvalues, clipped to zero.
    pub psd_projected: bool,
    pub certified: bool,
}

impl DpAttentionReport {
    pub fn failed_checks(&self) -> impl Iterator<Item = &RequirementCheck> {
        self.requirement_checks
            .iter()
            .filter(|c| c.level == CheckLevel::Hard && !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&RequirementCheck> {
        self.requirement_checks.iter().find(|c| c.name == name)
    }
}

/// Releases `B` for `A = XX^T` and evaluates every requirement of the error
/// and privacy guarantees.
///
/// Requirement failures do not abort the run: the report is still filled in
/// and `certified` is false.
pub fn dp_attention(x: &Dataset, beta: f64, params: &DpParams) -> Result<DpAttentionReport> {
    params.validate()?;
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::range("beta", beta, "beta >= 0"));
    }
    let (n, d) = (x.n(), x.d());
    let (eta, alpha) = (x.eta(), x.alpha());
    let a = gram(x.matrix());
    let mut checks = Vec::with_capacity(REQUIREMENT_NAMES.len());

    checks.push(RequirementCheck::new(
        "dimension",
        CheckLevel::Hard,
        d >= n,
        d as f64,
        n as f64,
        "d >= n".into(),
    ));

    let min_eig = a.eigen()?.min_eigenvalue();
    checks.push(RequirementCheck::new(
        "goodness",
        CheckLevel::Hard,
        min_eig >= eta - crate::dataset::GOODNESS_TOL,
        min_eig,
        eta,
        format!("XX^T >= eta I and column norms <= alpha = {alpha}"),
    ));

    let a_max = a.entrywise_max();
    checks.push(RequirementCheck::new(
        "entry_bound",
        CheckLevel::Hard,
        a_max <= params.r,
        a_max,
        params.r,
        "max |A_ij| <= r".into(),
    ));

    checks.push(RequirementCheck::new(
        "eta_below_r",
        CheckLevel::Warning,
        eta < params.r,
        eta,
        params.r,
        "eta < r".into(),
    ));

    let budget = delta_budget(params.eps, params.delta_dp, params.k)?;
    let delta_used = budget.min();
    let sens_frob = sensitivity_bound(eta, alpha, beta, n)?.frobenius;
    checks.push(RequirementCheck::new(
        "sensitivity",
        CheckLevel::Hard,
        sens_frob < delta_used,
        sens_frob,
        delta_used,
        "2 alpha beta sqrt(n) / eta < Delta".into(),
    ));

    let rho = utility_rho(n, params.gamma, params.k, params.c_rho)?;
    checks.push(RequirementCheck::new(
        "utility",
        CheckLevel::Hard,
        rho < 0.1 * params.eps,
        rho,
        0.1 * params.eps,
        "rho < 0.1 eps".into(),
    ));

    // (1-rho)A <= B <= (1+rho)A puts the eigenvalues of A whitened by B in
    // [1/(1+rho), 1/(1-rho)]; that interval must sit inside [1-eps, 1+eps].
    let (lo, hi) = if rho < 1.0 {
        (1.0 / (1.0 + rho), 1.0 / (1.0 - rho))
    } else {
        (1.0 / (1.0 + rho), f64::INFINITY)
    };
    let conversion_ok = lo >= 1.0 - params.eps && hi <= 1.0 + params.eps;
    checks.push(RequirementCheck::new(
        "rho_to_eps",
        CheckLevel::Hard,
        conversion_ok,
        (hi - 1.0).max(1.0 - lo),
        params.eps,
        format!("[1/(1+rho), 1/(1-rho)] = [{lo}, {hi}] within [1-eps, 1+eps]"),
    ));

    let released = gaussian_sampling_mechanism(&a, params.k as usize, params.seed)?;
    let mut b = released.sigma_hat;
    let eb = b.eigen()?;
    let psd_projected = eb.min_eigenvalue() < 0.0;
    if psd_projected {
        b = eb.map_spectrum(|l| l.max(0.0));
    }

    let loewner_event = match loewner_within(&a, &b, params.eps, LOEWNER_TOL) {
        Ok(v) => v,
        Err(Error::SingularMatrix { .. }) => false,
        Err(e) => return Err(e),
    };
    checks.push(RequirementCheck::new(
        "loewner",
        CheckLevel::Hard,
        loewner_event,
        if loewner_event { 1.0 } else { 0.0 },
        1.0,
        "(1-eps) B <= A <= (1+eps) B".into(),
    ));

    let attention_a = attention_matrix(&a, params.f_kind)?;
    let attention_b = attention_matrix(&b, params.f_kind)?;
    let measured_error = attention_error(&a, &b, params.f_kind)?;
    let error_bound = theoretical_error_bound(params.eps, params.r)?;
    let bound_satisfied = measured_error <= error_bound;
    checks.push(RequirementCheck::new(
        "error_bound",
        CheckLevel::Hard,
        bound_satisfied,
        measured_error,
        error_bound,
        "||D(A)^-1 f(A) - D(B)^-1 f(B)||_inf <= 4 (1 + eps + 2r) r".into(),
    ));

    let certified = checks.iter().all(|c| c.level == CheckLevel::Warning || c.passed);
    Ok(DpAttentionReport {
        params: *params,
        beta,
        a,
        b,
        attention_a,
        attention_b,
        measured_error,
        error_bound,
        rho,
        budget,
        delta_budget_used: delta_used,
        sensitivity_bound_frob: sens_frob,
        requirement_checks: checks,
        loewner_event,
        bound_satisfied,
        singular_estimate: released.singular_estimate,
        psd_projected,
        certified,
    })
}

/// `runs` independent releases; run `i` uses seed `stream_id(params.seed, i)`.
pub fn dp_attention_batch(x: &Dataset, beta: f64, params: &DpParams, runs: usize) -> Result<Vec<DpAttentionReport>> {
    (0..runs)
        .into_par_iter()
        .map(|i| {
            let p = DpParams {
                seed: stream_id(params.seed, i as u64),
                ..*params
            };
            dp_attention(x, beta, &p)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborPrivacyReport {
    pub certificate: CertificateReport,
    pub monte_carlo: McEstimate,
    pub certified: bool,
    #[serde(skip)]
    pub draws: Vec<f64>,
}

/// Privacy certificate and Monte-Carlo check for releasing `gram(base)` when
/// the neighbour is `gram(perturbed)`.
pub fn verify_neighbor_privacy(pair: &NeighborPair, params: &DpParams, trials: usize) -> Result<NeighborPrivacyReport> {
    params.validate()?;
    verify_pair_privacy(pair, params.eps, params.delta_dp, params.k, trials, params.seed)
}

/// As [`verify_neighbor_privacy`] with only the privacy parameters; `eps` and
/// `delta_dp` range over `(0, 1)`.
pub fn verify_pair_privacy(
    pair: &NeighborPair,
    eps: f64,
    delta_dp: f64,
    k: u64,
    trials: usize,
    seed: u64,
) -> Result<NeighborPrivacyReport> {
    if trials < MIN_TRIALS {
        return Err(Error::range("trials", trials as f64, "trials >= 1000"));
    }
    let spectrum = privacy_spectrum(&pair.base.gram(), &gram(&pair.perturbed))?;
    let certificate = certificate_for_spectrum(&spectrum, eps, delta_dp, k)?;
    let draws = privacy_loss_draws(&spectrum, k, trials, seed);
    let monte_carlo = McEstimate::from_draws(&draws, eps);
    Ok(NeighborPrivacyReport {
        certified: certificate.granted,
        certificate,
        monte_carlo,
        draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_good_dataset, make_neighbor};
    use crate::mechanism::required_k;

    fn params(k: u64, seed: u64) -> DpParams {
        DpParams {
            eps: 0.05,
            delta_dp: 0.01,
            gamma: 0.05,
            k,
            r: 0.05,
            f_kind: FKind::Exp,
            c_rho: 1.0,
            seed,
        }
    }

    #[test]
    fn end_to_end_is_certified() {
        let x = generate_good_dataset(4, 8, 0.01, 0.11, 3).unwrap();
        let k = required_k(4, 0.05, 0.004, 1.0).unwrap();
        let rep = dp_attention(&x, 1e-8, &params(k, 1)).unwrap();
        assert!(rep.certified, "{:?}", rep.failed_checks().collect::<Vec<_>>());
        assert!(rep.measured_error <= 0.23);
        assert!((rep.error_bound - 0.23).abs() < 1e-15);
        for name in REQUIREMENT_NAMES {
            assert_eq!(rep.requirement_checks.iter().filter(|c| c.name == name).count(), 1);
        }
    }

    #[test]
    fn example_with_rho_at_a_tenth_of_eps() {
        let x = generate_good_dataset(4, 8, 0.01, 0.11, 9).unwrap();
        let k = required_k(4, 0.05, 0.005, 1.0).unwrap();
        let rep = dp_attention(&x, 1e-8, &params(k, 4)).unwrap();
        assert!(rep.rho < 0.005);
        assert!(rep.certified, "{:?}", rep.failed_checks().collect::<Vec<_>>());
        assert!(rep.measured_error <= 0.23);
    }

    #[test]
    fn small_k_fails_utility() {
        let x = generate_good_dataset(4, 8, 0.01, 0.11, 3).unwrap();
        let rep = dp_attention(&x, 1e-8, &params(1, 1)).unwrap();
        assert!(!rep.certified);
        assert!(!rep.check("utility").unwrap().passed);
        assert!(rep.singular_estimate);
    }

    #[test]
    fn large_beta_fails_sensitivity() {
        let x = generate_good_dataset(4, 8, 0.01, 0.11, 3).unwrap();
        let k = required_k(4, 0.05, 0.004, 1.0).unwrap();
        let rep = dp_attention(&x, 1e-3, &params(k, 1)).unwrap();
        assert!(!rep.certified);
        let names: Vec<&str> = rep.failed_checks().map(|c| c.name.as_str()).collect();
        assert_eq!(names, vec!["sensitivity"]);
    }

    #[test]
    fn out_of_range_params_are_rejected() {
        let x = generate_good_dataset(2, 2, 0.01, 0.1, 0).unwrap();
        let mut p = params(10, 0);
        p.eps = 0.1;
        assert!(matches!(dp_attention(&x, 0.0, &p), Err(Error::ParamRange { name: "eps", .. })));
        let mut p = params(10, 0);
        p.r = 0.0;
        assert!(matches!(dp_attention(&x, 0.0, &p), Err(Error::ParamRange { name: "r", .. })));
    }

    #[test]
    fn increasing_k_never_breaks_utility() {
        let x = generate_good_dataset(4, 8, 0.01, 0.11, 3).unwrap();
        let mut last = false;
        for k in [10u64, 1_000, 100_000, 1_000_000, 2_000_000] {
            let p = params(k, 2);
            let rho = utility_rho(4, p.gamma, k, p.c_rho).unwrap();
            let passes = rho < 0.1 * p.eps;
            assert!(passes || !last);
            last = passes;
        }
        assert!(last);
        let _ = x;
    }

    #[test]
    fn identical_neighbor_is_trivially_private() {
        let x = generate_good_dataset(3, 6, 0.02, 0.2, 5).unwrap();
        let pair = NeighborPair::new(x.clone(), x.matrix().clone(), 0.01, 0).unwrap();
        let rep = verify_neighbor_privacy(&pair, &params(100, 1), 1000).unwrap();
        assert!(rep.certified);
        assert_eq!(rep.monte_carlo.empirical_rate, 0.0);
    }

    #[test]
    fn distant_neighbor_is_denied() {
        let x = generate_good_dataset(3, 6, 0.02, 0.2, 5).unwrap();
        let pair = make_neighbor(&x, 0.1, 4, 1).unwrap();
        let rep = verify_neighbor_privacy(&pair, &params(100, 1), 1000).unwrap();
        assert!(!rep.certified);
    }
}
