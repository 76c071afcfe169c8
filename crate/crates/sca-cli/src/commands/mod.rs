//! The three protocol parties and the experiment runner, as subcommands
//! over shared files. Every command derives its randomness from the one
//! master seed in the config, each subsystem on its own stream, so a rerun
//! with the same config reproduces every byte.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sca_core::{
    ambiguate, derive_seed, encode, learn_transform, synthesize, AmbiguatedCode, Codebook,
    DataMatrix, NoiseModel, SparseCode, SparsifyingTransform,
};

use crate::config::{ExperimentConfig, RadiusSpec};
use crate::error::{CliError, Result};

pub mod experiment;
pub mod owner_prepare;
pub mod server_index;
pub mod user_query;

pub use experiment::{cmd_experiment, Study};
pub use owner_prepare::cmd_owner_prepare;
pub use server_index::cmd_server_index;
pub use user_query::{cmd_user_query, QueryMode, UserQueryArgs};

/// Seed streams, one per randomness consumer.
pub const STREAM_DATA: u64 = 1;
pub const STREAM_LEARN: u64 = 2;
pub const STREAM_NOISE: u64 = 3;
pub const STREAM_QUERY: u64 = 4;
pub const STREAM_FAIR: u64 = 5;

pub fn data_path(out: &Path) -> PathBuf {
    out.join("data.scam")
}

pub fn transform_path(out: &Path) -> PathBuf {
    out.join("transform.scam")
}

pub fn codebook_path(out: &Path) -> PathBuf {
    out.join("codebook.scac")
}

pub fn probe_path(out: &Path) -> PathBuf {
    out.join("probe.scac")
}

/// Everything the owner produces before releasing files.
pub struct OwnerArtifacts {
    pub data: DataMatrix,
    pub labels: Option<Vec<usize>>,
    pub transform: SparsifyingTransform,
    /// Clean (pre-noise) codes, ternary-mapped when configured.
    pub clean: Codebook,
    pub noise: NoiseModel,
    /// Ambiguated codes actually released to the server.
    pub released: Vec<AmbiguatedCode>,
    pub s_x: usize,
    pub s_p: usize,
}

/// Runs the owner-side pipeline in memory at a given sweep point:
/// generate data, learn the transform, encode (optionally ternary or
/// thresholded), and ambiguate with per-point noise streams.
pub fn build_owner_pipeline(
    cfg: &ExperimentConfig,
    s_x: usize,
    s_p: usize,
) -> Result<OwnerArtifacts> {
    let (data, labels) = synthesize(&cfg.data.synthetic_spec(derive_seed(cfg.seed, STREAM_DATA)))?;
    let learned = learn_transform(
        &data,
        cfg.code_len,
        &cfg.learning_config(s_x, derive_seed(cfg.seed, STREAM_LEARN)),
    )?;

    let policy = cfg.policy(s_x);
    let transform = learned.transform.with_policy(policy)?;
    // re-encode column by column rather than reusing the learner's batch
    // codebook: the per-column product is the exact primitive a querier
    // runs, so published codes and fresh encodings agree to the last bit
    let raw: Vec<SparseCode> = (0..data.n_points())
        .map(|m| encode(&transform, &data.column(m)))
        .collect::<sca_core::Result<_>>()?;
    let clean_cols: Vec<SparseCode> = if cfg.ternary {
        raw.iter()
            .map(|c| {
                let entries = c
                    .entries()
                    .iter()
                    .map(|&(i, v)| (i, if v > 0.0 { 1.0 } else { -1.0 }))
                    .collect();
                SparseCode::new(c.code_len(), entries)
            })
            .collect::<sca_core::Result<_>>()?
    } else {
        raw
    };
    let clean = Codebook::from_columns(cfg.code_len, clean_cols)?;

    let noise = if cfg.ternary {
        NoiseModel::ternary()
    } else {
        NoiseModel::from_codebook(&clean)?
    };
    let noise_seed = derive_seed(cfg.seed, STREAM_NOISE);
    let released = clean
        .columns()
        .iter()
        .enumerate()
        .map(|(m, c)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(noise_seed, m as u64));
            ambiguate(c, s_p, &noise, &mut rng)
        })
        .collect::<sca_core::Result<Vec<_>>>()?;

    Ok(OwnerArtifacts {
        data,
        labels,
        transform,
        clean,
        noise,
        released,
        s_x,
        s_p,
    })
}

/// Turns the radius spec into a concrete radius for one probe, given the
/// probe's distances to every stored code. Quantiles use the nearest-rank
/// rule on the sorted distances.
pub fn resolve_radius(spec: RadiusSpec, distances: &[f64]) -> Result<f64> {
    match spec {
        RadiusSpec::Absolute(r) => Ok(r),
        RadiusSpec::Quantile(q) => {
            if distances.is_empty() {
                return Err(CliError::Config(
                    "radius.quantile: no distances to take a quantile of".into(),
                ));
            }
            let mut sorted = distances.to_vec();
            sorted.sort_by(f64::total_cmp);
            let idx = ((sorted.len() - 1) as f64 * q).floor() as usize;
            Ok(sorted[idx])
        }
    }
}

/// Formats a float for CSV output: full round-trip precision, `.` decimal.
pub fn csv_num(v: f64) -> String {
    format!("{v}")
}

/// Writes an RFC-4180 style CSV (header row, CRLF line endings).
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut text = String::with_capacity(rows.len() * 32 + header.len() + 2);
    text.push_str(header);
    text.push_str("\r\n");
    for row in rows {
        text.push_str(row);
        text.push_str("\r\n");
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
    }
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}
