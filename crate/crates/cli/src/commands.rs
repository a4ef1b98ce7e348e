use std::path::{Path, PathBuf};

use dpattn_core::dataset::{generate_good_dataset, make_neighbor, DataMatrix, Dataset, NeighborPair};
use dpattn_core::mechanism::gaussian_sampling_mechanism;
use dpattn_core::pipeline::{dp_attention, verify_pair_privacy};
use dpattn_core::rng::stream_id;
use dpattn_core::stats::median;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{BenchUtilityConfig, DpAttentionConfig, GenDatasetConfig, VerifyPrivacyConfig};
use crate::io::{
    ensure_dir, read_json, read_matrix_csv, sidecar_path, write_json, write_matrix_csv, DatasetMeta, Envelope,
};
use crate::{CliError, CliResult, Outcome};

pub const DATASET_CSV: &str = "dataset.csv";
pub const NEIGHBOR_CSV: &str = "neighbor.csv";
pub const DP_ATTENTION_JSON: &str = "dp_attention.json";
pub const VERIFY_PRIVACY_JSON: &str = "verify_privacy.json";
pub const Z_SAMPLES_CSV: &str = "z_samples.csv";
pub const BENCH_UTILITY_CSV: &str = "bench_utility.csv";

/// Reads a dataset CSV together with its sidecar.
pub fn load_dataset(csv_path: &Path) -> CliResult<Dataset> {
    let meta: DatasetMeta = read_json(&sidecar_path(csv_path))?;
    let x = DataMatrix::from_rows(&read_matrix_csv(csv_path)?)?;
    if x.n() != meta.n || x.d() != meta.d {
        return Err(CliError::Config(format!(
            "{}: matrix is {}x{}, sidecar says {}x{}",
            csv_path.display(),
            x.n(),
            x.d(),
            meta.n,
            meta.d
        )));
    }
    Ok(Dataset::new(x, meta.eta, meta.alpha)?)
}

pub fn gen_dataset(cfg: &GenDatasetConfig, out: &Path) -> CliResult<Outcome> {
    let x = generate_good_dataset(cfg.n, cfg.d, cfg.eta, cfg.alpha, cfg.seed)?;
    ensure_dir(out)?;
    let csv_path = out.join(DATASET_CSV);
    write_matrix_csv(&csv_path, &x.matrix().to_rows())?;
    write_json(
        &sidecar_path(&csv_path),
        &DatasetMeta::new(cfg.n, cfg.d, cfg.eta, cfg.alpha, cfg.seed),
    )?;
    if let Some(nb) = &cfg.neighbor {
        let pair = make_neighbor(&x, nb.beta, nb.index, nb.seed)?;
        let path = out.join(NEIGHBOR_CSV);
        write_matrix_csv(&path, &pair.perturbed.to_rows())?;
        write_json(&sidecar_path(&path), &NeighborMeta::new(nb.beta, nb.index, nb.seed, pair.shift()))?;
    }
    Ok(Outcome::Success)
}

#[derive(Debug, Serialize)]
struct NeighborMeta {
    schema_version: u32,
    base: &'static str,
    beta: f64,
    index: usize,
    seed: u64,
    shift: f64,
}

impl NeighborMeta {
    fn new(beta: f64, index: usize, seed: u64, shift: f64) -> Self {
        Self {
            schema_version: crate::SCHEMA_VERSION,
            base: DATASET_CSV,
            beta,
            index,
            seed,
            shift,
        }
    }
}

pub fn dp_attention_cmd(cfg: &DpAttentionConfig, out: &Path) -> CliResult<Outcome> {
    let x = load_dataset(&cfg.dataset)?;
    let params = cfg.params(x.n())?;
    let report = dp_attention(&x, cfg.beta, &params)?;
    ensure_dir(out)?;
    write_json(&out.join(DP_ATTENTION_JSON), &Envelope::new("dp-attention", &report))?;
    for c in report.failed_checks() {
        eprintln!(
            "requirement {} failed: measured {} vs required {} ({})",
            c.name, c.measured, c.required, c.detail
        );
    }
    Ok(Outcome::from_pass(report.certified))
}

/// First column where the two matrices differ, or 0 when they are equal.
fn differing_column(a: &DataMatrix, b: &DataMatrix) -> usize {
    (0..a.d().min(b.d()))
        .find(|&j| a.column(j) != b.column(j))
        .unwrap_or(0)
}

pub fn verify_privacy(cfg: &VerifyPrivacyConfig, out: &Path) -> CliResult<Outcome> {
    let base = load_dataset(&cfg.base)?;
    let perturbed = DataMatrix::from_rows(&read_matrix_csv(&cfg.perturbed)?)?;
    let index = differing_column(base.matrix(), &perturbed);
    let pair = NeighborPair::new(base, perturbed, cfg.beta, index)?;
    let report = verify_pair_privacy(&pair, cfg.eps, cfg.delta_dp, cfg.k, cfg.trials, cfg.seed)?;
    ensure_dir(out)?;
    write_json(&out.join(VERIFY_PRIVACY_JSON), &Envelope::new("verify-privacy", &report))?;
    let path = out.join(Z_SAMPLES_CSV);
    let mut w = csv::Writer::from_path(&path).map_err(|source| CliError::Csv {
        path: path.clone(),
        source,
    })?;
    let csv_err = |source| CliError::Csv {
        path: path.clone(),
        source,
    };
    w.write_record(["trial", "z"]).map_err(csv_err)?;
    for (t, z) in report.draws.iter().enumerate() {
        w.write_record([t.to_string(), z.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    if !report.certified {
        eprintln!("certificate denied: {:?}", report.certificate.denials);
    }
    Ok(Outcome::from_pass(report.certified))
}

/// One row of the utility sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityRow {
    pub n: usize,
    pub k: u64,
    pub trial: usize,
    pub rel_frob_error: f64,
}

/// Relative Frobenius errors for every `(k, trial)`, grouped by `k` in grid
/// order. Trial `t` at `k` uses seed `stream_id(stream_id(seed, k), t)`.
pub fn utility_sweep(cfg: &BenchUtilityConfig) -> CliResult<Vec<UtilityRow>> {
    let sigma = match &cfg.dataset {
        Some(p) => {
            let x = load_dataset(p)?;
            if x.n() != cfg.n {
                return Err(CliError::Config(format!("dataset has n = {}, config says {}", x.n(), cfg.n)));
            }
            x.gram()
        }
        None => generate_good_dataset(cfg.n, 2 * cfg.n, 0.5, 1.0, cfg.seed)?.gram(),
    };
    let jobs: Vec<(u64, usize)> = cfg
        .ks
        .iter()
        .flat_map(|&k| (0..cfg.trials).map(move |t| (k, t)))
        .collect();
    jobs.par_iter()
        .map(|&(k, trial)| {
            let seed = stream_id(stream_id(cfg.seed, k), trial as u64);
            let out = gaussian_sampling_mechanism(&sigma, k as usize, seed)?;
            let rel_frob_error = out.rel_frob_error.ok_or_else(|| {
                CliError::Config("covariance is singular; relative error undefined".into())
            })?;
            Ok(UtilityRow {
                n: cfg.n,
                k,
                trial,
                rel_frob_error,
            })
        })
        .collect()
}

/// Median relative error per `k`, in grid order.
pub fn medians(cfg: &BenchUtilityConfig, rows: &[UtilityRow]) -> Vec<(u64, f64)> {
    cfg.ks
        .iter()
        .map(|&k| {
            let errs: Vec<f64> = rows.iter().filter(|r| r.k == k).map(|r| r.rel_frob_error).collect();
            (k, median(&errs))
        })
        .collect()
}

pub fn bench_utility(cfg: &BenchUtilityConfig, out: &Path) -> CliResult<Outcome> {
    let rows = utility_sweep(cfg)?;
    ensure_dir(out)?;
    let path: PathBuf = out.join(BENCH_UTILITY_CSV);
    let csv_err = |source| CliError::Csv {
        path: path.clone(),
        source,
    };
    let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
    w.write_record(["n", "k", "trial", "rel_frob_error"]).map_err(csv_err)?;
    let meds = medians(cfg, &rows);
    for &(k, med) in &meds {
        for r in rows.iter().filter(|r| r.k == k) {
            w.write_record([r.n.to_string(), k.to_string(), r.trial.to_string(), r.rel_frob_error.to_string()])
                .map_err(csv_err)?;
        }
        if cfg.trials > 0 {
            w.write_record([cfg.n.to_string(), k.to_string(), "median".into(), med.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(Outcome::Success)
}
