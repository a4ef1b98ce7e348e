//! The Gaussian sampling mechanism: release `(1/k) sum g_i g_i^T` for
//! `g_i ~ N(0, Sigma)`, plus the utility radius `rho` and its inverse.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{default_psd_tol, relative_frobenius_distance, SymMatrix};
use crate::rng::NormalStream;
use crate::{Error, Result};

/// Samples per substream. Sample `i` draws its normals from substream
/// `(seed, i / SAMPLES_PER_STREAM)`, so results do not depend on how chunks
/// are scheduled across threads.
pub const SAMPLES_PER_STREAM: usize = 1 << 14;

/// `L = V diag(sqrt(max(lambda, 0)))` with `L L^T = Sigma`.
#[derive(Debug, Clone)]
struct Factor {
    n: usize,
    l: Vec<f64>,
}

impl Factor {
    fn new(sigma: &SymMatrix) -> Result<Self> {
        let d = sigma.eigen()?;
        let spectral = d.max_eigenvalue().abs().max(d.min_eigenvalue().abs());
        let tol = default_psd_tol(spectral);
        if d.min_eigenvalue() < -tol {
            return Err(Error::NotPsd {
                min_eigenvalue: d.min_eigenvalue(),
                tol,
            });
        }
        let n = sigma.dim();
        let roots: Vec<f64> = d.eigenvalues().iter().map(|l| l.max(0.0).sqrt()).collect();
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                l[i * n + j] = d.vector_component(i, j) * roots[j];
            }
        }
        Ok(Self { n, l })
    }

    fn apply(&self, z: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.l[i * self.n..(i + 1) * self.n]
                .iter()
                .zip(z)
                .map(|(a, b)| a * b)
                .sum();
        }
    }

    /// Calls `visit` with samples `start..end` in order.
    fn for_each_sample(&self, seed: u64, start: usize, end: usize, mut visit: impl FnMut(&[f64])) {
        let mut z = vec![0.0; self.n];
        let mut g = vec![0.0; self.n];
        let mut i = start;
        while i < end {
            let chunk = i / SAMPLES_PER_STREAM;
            let stop = end.min((chunk + 1) * SAMPLES_PER_STREAM);
            let mut stream = NormalStream::new(seed, chunk as u64);
            // skip to sample i within the chunk
            for _ in (chunk * SAMPLES_PER_STREAM)..i {
                stream.fill(&mut z);
            }
            while i < stop {
                stream.fill(&mut z);
                self.apply(&z, &mut g);
                visit(&g);
                i += 1;
            }
        }
    }
}

/// `k` draws from `N(0, Sigma)`.
pub fn sample_gaussian(sigma: &SymMatrix, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let factor = Factor::new(sigma)?;
    let mut out = Vec::with_capacity(k);
    factor.for_each_sample(seed, 0, k, |g| out.push(g.to_vec()));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismOutput {
    pub sigma_hat: SymMatrix,
    pub k: usize,
    pub seed: u64,
    /// `||Sigma^{-1/2} SigmaHat Sigma^{-1/2} - I||_F`; absent when `Sigma` is
    /// singular.
    pub rel_frob_error: Option<f64>,
    /// Set when `k < n` or the estimate is not positive definite; only the
    /// entrywise use of the estimate is meaningful then.
    pub singular_estimate: bool,
}

/// Runs the mechanism on `Sigma` with `k` samples.
pub fn gaussian_sampling_mechanism(sigma: &SymMatrix, k: usize, seed: u64) -> Result<MechanismOutput> {
    if k == 0 {
        return Err(Error::range("k", 0.0, "k >= 1"));
    }
    let factor = Factor::new(sigma)?;
    let n = sigma.dim();
    let chunks = k.div_ceil(SAMPLES_PER_STREAM);
    let partials: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; n * n];
            let start = c * SAMPLES_PER_STREAM;
            let end = k.min(start + SAMPLES_PER_STREAM);
            factor.for_each_sample(seed, start, end, |g| {
                for i in 0..n {
                    let gi = g[i];
                    for j in i..n {
                        acc[i * n + j] += gi * g[j];
                    }
                }
            });
            acc
        })
        .collect();
    let mut total = vec![0.0; n * n];
    for p in &partials {
        for (t, x) in total.iter_mut().zip(p) {
            *t += x;
        }
    }
    let inv_k = 1.0 / k as f64;
    for i in 0..n {
        for j in i..n {
            let v = total[i * n + j] * inv_k;
            total[i * n + j] = v;
            total[j * n + i] = v;
        }
    }
    let sigma_hat = SymMatrix::new(n, total)?;
    let rel_frob_error = relative_frobenius_distance(sigma, &sigma_hat).ok();
    let singular_estimate = k < n || {
        let d = sigma_hat.eigen()?;
        d.min_eigenvalue() <= default_psd_tol(d.max_eigenvalue())
    };
    Ok(MechanismOutput {
        sigma_hat,
        k,
        seed,
        rel_frob_error,
        singular_estimate,
    })
}

fn check_rho_params(gamma: f64, c_rho: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::range("gamma", gamma, "gamma in (0, 1)"));
    }
    if !(c_rho > 0.0) {
        return Err(Error::range("c_rho", c_rho, "c_rho > 0"));
    }
    Ok(())
}

/// `C (sqrt(s / k) + s / k)` with `s = n^2 + ln(1/gamma)`.
pub fn utility_rho(n: usize, gamma: f64, k: u64, c_rho: f64) -> Result<f64> {
    check_rho_params(gamma, c_rho)?;
    if k == 0 {
        return Err(Error::range("k", 0.0, "k >= 1"));
    }
    let s = (n * n) as f64 + (1.0 / gamma).ln();
    let ratio = s / k as f64;
    Ok(c_rho * (ratio.sqrt() + ratio))
}

/// Smallest `k` with `utility_rho(n, gamma, k, c_rho) <= rho_target`.
pub fn required_k(n: usize, gamma: f64, rho_target: f64, c_rho: f64) -> Result<u64> {
    check_rho_params(gamma, c_rho)?;
    if !(rho_target > 0.0 && rho_target.is_finite()) {
        return Err(Error::range("rho_target", rho_target, "rho_target > 0"));
    }
    let fits = |k: u64| utility_rho(n, gamma, k, c_rho).map(|r| r <= rho_target);
    let mut hi = 1u64;
    while !fits(hi)? {
        hi = hi
            .checked_mul(2)
            .ok_or(Error::range("rho_target", rho_target, "needs k beyond u64"))?;
    }
    let mut lo = hi / 2;
    // invariant: fits(hi) and (lo == 0 or !fits(lo))
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean_and_std_error;

    #[test]
    fn zero_covariance_gives_zero_samples() {
        let xs = sample_gaussian(&SymMatrix::zeros(3), 5, 1).unwrap();
        assert_eq!(xs.len(), 5);
        assert!(xs.iter().flatten().all(|&x| x == 0.0));
        let out = gaussian_sampling_mechanism(&SymMatrix::zeros(3), 5, 1).unwrap();
        assert_eq!(out.sigma_hat, SymMatrix::zeros(3));
        assert_eq!(out.rel_frob_error, None);
        assert!(out.singular_estimate);
    }

    #[test]
    fn empty_sample_request() {
        assert!(sample_gaussian(&SymMatrix::identity(2), 0, 1).unwrap().is_empty());
        assert!(gaussian_sampling_mechanism(&SymMatrix::identity(2), 0, 1).is_err());
    }

    #[test]
    fn sample_mean_is_near_zero() {
        let k = 100_000;
        let xs = sample_gaussian(&SymMatrix::identity(2), k, 17).unwrap();
        for c in 0..2 {
            let mean = xs.iter().map(|g| g[c]).sum::<f64>() / k as f64;
            assert!(mean.abs() <= 4.0 / (k as f64).sqrt(), "coordinate {c}: {mean}");
        }
    }

    #[test]
    fn mechanism_matches_explicit_outer_products() {
        let sigma = SymMatrix::new(2, vec![2.0, 0.5, 0.5, 1.0]).unwrap();
        let k = 3 * SAMPLES_PER_STREAM / 2;
        let xs = sample_gaussian(&sigma, k, 4).unwrap();
        let out = gaussian_sampling_mechanism(&sigma, k, 4).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let direct = xs.iter().map(|g| g[i] * g[j]).sum::<f64>() / k as f64;
                assert!((direct - out.sigma_hat.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_estimate_is_accurate_at_large_k() {
        let out = gaussian_sampling_mechanism(&SymMatrix::identity(2), 100_000, 9).unwrap();
        assert!(out.rel_frob_error.unwrap() <= 0.1);
        assert!(!out.singular_estimate);
    }

    #[test]
    fn single_sample_is_rank_one() {
        let out = gaussian_sampling_mechanism(&SymMatrix::identity(2), 1, 3).unwrap();
        let ev = out.sigma_hat.eigen().unwrap();
        assert!(ev.eigenvalues()[1].abs() <= 1e-12);
        assert!(out.singular_estimate);
    }

    #[test]
    fn mechanism_is_deterministic() {
        let sigma = SymMatrix::new(3, vec![1.0, 0.2, 0.1, 0.2, 2.0, 0.3, 0.1, 0.3, 0.5]).unwrap();
        let a = gaussian_sampling_mechanism(&sigma, 40_000, 11).unwrap();
        let b = gaussian_sampling_mechanism(&sigma, 40_000, 11).unwrap();
        let bits = |m: &SymMatrix| m.as_slice().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.sigma_hat), bits(&b.sigma_hat));
    }

    #[test]
    fn not_psd_is_rejected() {
        assert!(matches!(
            gaussian_sampling_mechanism(&SymMatrix::from_diag(&[1.0, -0.5]), 10, 0),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn estimate_is_unbiased() {
        let sigma = SymMatrix::from_diag(&[2.0, 1.0]);
        let draws: Vec<SymMatrix> = (0..200)
            .map(|s| gaussian_sampling_mechanism(&sigma, 1000, s).unwrap().sigma_hat)
            .collect();
        for i in 0..2 {
            for j in 0..2 {
                let xs: Vec<f64> = draws.iter().map(|m| m.get(i, j)).collect();
                let (mean, se) = mean_and_std_error(&xs);
                assert!((mean - sigma.get(i, j)).abs() <= 5.0 * se, "({i},{j}) {mean} +- {se}");
            }
        }
    }

    #[test]
    fn rho_examples() {
        assert!(utility_rho(4, 0.1, 1_000_000_000_000, 1.0).unwrap() < 1e-4);
        // s = 16 + ln 10 = 18.302585...
        let s = 16.0 + 10f64.ln();
        let expected = (s / 1e4).sqrt() + s / 1e4;
        let rho = utility_rho(4, 0.1, 10_000, 1.0).unwrap();
        assert!((rho - expected).abs() < 1e-15);
        assert!((rho - 0.0446).abs() < 1e-4);

        let lead = |k| utility_rho(8, 0.05, k, 1.0).unwrap();
        assert!((lead(2_000_000_000) / lead(1_000_000_000) - 0.5f64.sqrt()).abs() < 0.01);

        assert!(utility_rho(4, 1.0, 10, 1.0).is_err());
        assert!(utility_rho(4, 0.1, 0, 1.0).is_err());
        assert!(utility_rho(4, 0.1, 10, 0.0).is_err());
    }

    #[test]
    fn required_k_is_minimal() {
        for &(n, gamma, target) in &[(4, 0.1, 0.0446), (4, 0.05, 0.004), (8, 0.3, 0.5), (2, 0.01, 0.02)] {
            let k = required_k(n, gamma, target, 1.0).unwrap();
            assert!(utility_rho(n, gamma, k, 1.0).unwrap() <= target);
            if k > 1 {
                assert!(utility_rho(n, gamma, k - 1, 1.0).unwrap() > target);
            }
        }
        assert_eq!(required_k(4, 0.1, 1e6, 1.0).unwrap(), 1);
        let k = required_k(4, 0.1, 0.0446, 1.0).unwrap();
        assert!((k as f64 / 1e4 - 1.0).abs() < 0.01, "k = {k}");
        assert!(required_k(4, 0.1, 0.0, 1.0).is_err());
    }
}
