//! User-side querying: encode a query vector with the public transform,
//! optionally add query-side noise, send the probe through the fair
//! radius search, then reconstruct the returned code. An authorized user
//! purifies with its own query's support before decoding; an unauthorized
//! one decodes the noisy code as-is.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sca_core::{
    ambiguate_query, decode, derive_seed, encode, latent_distance_codes, least_squares_scale,
    normalized_mse, purify, ridge_decoder, AmbiguatedCode, Error as CoreError, NoiseModel,
    SearchIndex, SparsifyingTransform,
};

use crate::config::{ExperimentConfig, RadiusSpec};
use crate::error::{CliError, Result};
use crate::format::{read_codes, read_matrix, write_codes};

use super::{codebook_path, probe_path, resolve_radius, transform_path, STREAM_FAIR, STREAM_QUERY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QueryMode {
    /// Purify the response with the query's own support before decoding.
    Authorized,
    /// Decode the returned code with all its noise in place.
    Unauthorized,
}

/// Subcommand inputs; `None` fields fall back to the config.
pub struct UserQueryArgs {
    pub query: PathBuf,
    pub transform: Option<PathBuf>,
    pub codebook: Option<PathBuf>,
    pub s_q: Option<usize>,
    pub radius: Option<f64>,
    pub mode: QueryMode,
}

pub fn cmd_user_query(cfg: &ExperimentConfig, args: &UserQueryArgs) -> Result<()> {
    let out = &cfg.out_dir;
    let transform_file = args.transform.clone().unwrap_or_else(|| transform_path(out));
    let codebook_file = args.codebook.clone().unwrap_or_else(|| codebook_path(out));

    let w = read_matrix(&transform_file)?;
    let transform =
        SparsifyingTransform::new(w.as_dmatrix().clone(), cfg.policy(cfg.s_x_sweep[0]))?;

    let (code_len, codes) = read_codes(&codebook_file)?;
    if codes.is_empty() {
        return Err(CoreError::EmptyCodebook {
            context: "user query against an empty codebook",
        }
        .into());
    }
    if code_len != transform.code_len() {
        return Err(CoreError::DimensionMismatch {
            context: "codebook length vs transform",
            expected: transform.code_len(),
            got: code_len,
        }
        .into());
    }

    let y = read_query_vector(&args.query, transform.n_dims())?;
    let q_clean = encode(&transform, &y.column(0).as_view())?;

    // query noise values come from the released (public) codebook
    let noise = if cfg.ternary {
        NoiseModel::ternary()
    } else {
        NoiseModel::from_codes(&codes)?
    };
    let s_q = args.s_q.unwrap_or(cfg.s_q);
    let s_p_db = cfg.s_p_sweep[0];
    let mut query_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_QUERY));
    let probe = ambiguate_query(&q_clean, s_q, s_p_db, &noise, &mut query_rng)?;
    write_codes(&probe_path(out), code_len, std::slice::from_ref(probe.code()))?;
    println!(
        "user-query: probe nnz={} (S_q={s_q}), wrote {}",
        probe.code().nnz(),
        probe_path(out).display()
    );

    let metric = cfg.metric();
    let distances: Vec<f64> = codes
        .iter()
        .map(|p| latent_distance_codes(metric, probe.code(), p))
        .collect::<sca_core::Result<_>>()?;
    let radius = match args.radius {
        Some(r) => resolve_radius(RadiusSpec::Absolute(r), &distances)?,
        None => resolve_radius(cfg.radius, &distances)?,
    };

    let released: Vec<AmbiguatedCode> = codes
        .into_iter()
        .map(|c| AmbiguatedCode::from_parts(c, s_p_db))
        .collect();
    let entries: Vec<(usize, AmbiguatedCode)> =
        released.iter().cloned().enumerate().collect();
    let index = SearchIndex::new(entries, metric, radius, cfg.epsilon)?;
    let mut fair_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_FAIR));
    let picked = match index.query(&probe, &mut fair_rng) {
        Ok(p) => p,
        Err(CoreError::EmptyNeighborhood) => {
            println!("user-query: no such point within radius {radius}");
            return Ok(());
        }
        Err(e) => return Err(e.into()),
    };

    let fetched = &released[picked.chosen_id];
    let code = match args.mode {
        QueryMode::Authorized => purify(fetched, &q_clean.support()),
        QueryMode::Unauthorized => fetched.code().clone(),
    };
    let decoder = ridge_decoder(transform.matrix(), cfg.decoder.beta)?;
    let mut xhat = decode(&decoder, &code)?;
    if cfg.rescale {
        let alpha = least_squares_scale(&xhat, &y.column_owned(0));
        xhat *= alpha;
    }
    let distortion = normalized_mse(&y.column(0), &xhat)?;

    let mode = match args.mode {
        QueryMode::Authorized => "authorized",
        QueryMode::Unauthorized => "unauthorized",
    };
    println!(
        "user-query: mode={mode} chosen_id={} neighborhood_size={} radius={radius}",
        picked.chosen_id, picked.neighborhood_size
    );
    println!("user-query: distortion={distortion} (query vs reconstruction)");
    Ok(())
}

/// Reads a matrix file that must hold exactly one column of the expected
/// dimension.
fn read_query_vector(path: &Path, n_dims: usize) -> Result<sca_core::DataMatrix> {
    let y = read_matrix(path)?;
    if y.n_points() != 1 {
        return Err(CliError::Config(format!(
            "query file {} must contain exactly one column, got {}",
            path.display(),
            y.n_points()
        )));
    }
    if y.n_dims() != n_dims {
        return Err(CoreError::DimensionMismatch {
            context: "query dimension vs transform",
            expected: n_dims,
            got: y.n_dims(),
        }
        .into());
    }
    Ok(y)
}
