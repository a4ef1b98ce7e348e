//! JSON run configs. Unknown keys are rejected, seeds are mandatory and
//! parameter ranges are checked when the config is loaded.

use std::path::{Path, PathBuf};

use dpattn_core::attention::FKind;
use dpattn_core::mechanism::required_k;
use dpattn_core::pipeline::DpParams;
use dpattn_core::privacy::MIN_TRIALS;
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::io::read_json;
use crate::{CliError, CliResult};

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn positive(name: &str, x: f64) -> CliResult<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("{name} = {x} violates {name} > 0")))
    }
}

fn in_open(name: &str, x: f64, lo: f64, hi: f64) -> CliResult<()> {
    if x > lo && x < hi {
        Ok(())
    } else {
        Err(bad(format!("{name} = {x} violates {name} in ({lo}, {hi})")))
    }
}

/// Loads a config and resolves relative paths against the config's directory.
pub fn load<T: DeserializeOwned + Validate>(path: &Path) -> CliResult<T> {
    let mut cfg: T = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    cfg.resolve_paths(&base);
    cfg.validate()?;
    Ok(cfg)
}

pub trait Validate {
    fn validate(&self) -> CliResult<()>;
    fn resolve_paths(&mut self, _base: &Path) {}
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborSpec {
    pub beta: f64,
    /// 0-based column to move.
    pub index: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDatasetConfig {
    pub n: usize,
    pub d: usize,
    pub eta: f64,
    pub alpha: f64,
    pub seed: u64,
    #[serde(default)]
    pub neighbor: Option<NeighborSpec>,
}

impl Validate for GenDatasetConfig {
    fn validate(&self) -> CliResult<()> {
        if self.n == 0 {
            return Err(bad("n = 0 violates n >= 1"));
        }
        if self.d < self.n {
            return Err(bad(format!("d = {} violates d >= n = {}", self.d, self.n)));
        }
        positive("eta", self.eta)?;
        positive("alpha", self.alpha)?;
        if let Some(nb) = &self.neighbor {
            if !(nb.beta >= 0.0 && nb.beta.is_finite()) {
                return Err(bad(format!("neighbor.beta = {} violates beta >= 0", nb.beta)));
            }
            if nb.index >= self.d {
                return Err(bad(format!("neighbor.index = {} violates index < d = {}", nb.index, self.d)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpAttentionConfig {
    /// Dataset CSV; `eta` and `alpha` come from its sidecar.
    pub dataset: PathBuf,
    pub beta: f64,
    pub eps: f64,
    pub delta_dp: f64,
    pub gamma: f64,
    /// Either `k` or `rho_target`.
    #[serde(default)]
    pub k: Option<u64>,
    #[serde(default)]
    pub rho_target: Option<f64>,
    pub r: f64,
    pub f_kind: FKind,
    #[serde(default = "one")]
    pub c_rho: f64,
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

impl DpAttentionConfig {
    /// Number of rows of the dataset is needed when `k` comes from `rho_target`.
    pub fn params(&self, n: usize) -> CliResult<DpParams> {
        let k = match (self.k, self.rho_target) {
            (Some(k), None) => k,
            (None, Some(rho)) => required_k(n, self.gamma, rho, self.c_rho)?,
            _ => return Err(bad("exactly one of k and rho_target must be given")),
        };
        let p = DpParams {
            eps: self.eps,
            delta_dp: self.delta_dp,
            gamma: self.gamma,
            k,
            r: self.r,
            f_kind: self.f_kind,
            c_rho: self.c_rho,
            seed: self.seed,
        };
        p.validate()?;
        Ok(p)
    }
}

impl Validate for DpAttentionConfig {
    fn validate(&self) -> CliResult<()> {
        if self.k.is_some() == self.rho_target.is_some() {
            return Err(bad("exactly one of k and rho_target must be given"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(bad(format!("beta = {} violates beta >= 0", self.beta)));
        }
        if let Some(rho) = self.rho_target {
            positive("rho_target", rho)?;
        }
        // k does not affect range validity, so any placeholder works here.
        DpParams {
            eps: self.eps,
            delta_dp: self.delta_dp,
            gamma: self.gamma,
            k: self.k.unwrap_or(1),
            r: self.r,
            f_kind: self.f_kind,
            c_rho: self.c_rho,
            seed: self.seed,
        }
        .validate()?;
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.dataset);
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyPrivacyConfig {
    /// Base dataset CSV with sidecar.
    pub base: PathBuf,
    /// Neighbour CSV; must differ from `base` in at most one column.
    pub perturbed: PathBuf,
    pub beta: f64,
    pub eps: f64,
    pub delta_dp: f64,
    pub k: u64,
    pub trials: usize,
    pub seed: u64,
}

impl Validate for VerifyPrivacyConfig {
    fn validate(&self) -> CliResult<()> {
        in_open("eps", self.eps, 0.0, 1.0)?;
        in_open("delta_dp", self.delta_dp, 0.0, 1.0)?;
        if self.k == 0 {
            return Err(bad("k = 0 violates k >= 1"));
        }
        if self.trials < MIN_TRIALS {
            return Err(bad(format!("trials = {} violates trials >= {MIN_TRIALS}", self.trials)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(bad(format!("beta = {} violates beta >= 0", self.beta)));
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.base);
        resolve(base, &mut self.perturbed);
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchUtilityConfig {
    pub n: usize,
    /// Sample counts to sweep.
    pub ks: Vec<u64>,
    pub trials: usize,
    pub seed: u64,
    /// Covariance source; a generated dataset's Gram matrix when absent.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
}

impl Validate for BenchUtilityConfig {
    fn validate(&self) -> CliResult<()> {
        if self.n == 0 {
            return Err(bad("n = 0 violates n >= 1"));
        }
        if let Some(k) = self.ks.iter().find(|&&k| k == 0) {
            return Err(bad(format!("ks contains {k}; every k must be >= 1")));
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let Some(p) = &mut self.dataset {
            resolve(base, p);
        }
    }
}
