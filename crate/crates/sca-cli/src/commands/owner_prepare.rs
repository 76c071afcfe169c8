//! Owner-side preparation: generate (or rather, stand in for) the private
//! data, learn the sparsifying transform, encode, ambiguate, and release
//! the three public artifacts: data snapshot, transform, and noisy
//! codebook. The clean supports never leave this process; an authorized
//! user re-derives them from its own query.

use sca_core::{ambiguation_levels, DataMatrix};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::format::{write_codes, write_matrix};

use super::{build_owner_pipeline, codebook_path, data_path, transform_path};

pub fn cmd_owner_prepare(cfg: &ExperimentConfig) -> Result<()> {
    let s_x = cfg.s_x_sweep[0];
    let s_p = cfg.s_p_sweep[0];
    let art = build_owner_pipeline(cfg, s_x, s_p)?;

    let out = &cfg.out_dir;
    write_matrix(&data_path(out), &art.data)?;
    // the transform matrix is L x N; stored column major like any matrix
    write_matrix(
        &transform_path(out),
        &DataMatrix::new(art.transform.matrix().clone())?,
    )?;
    let released: Vec<_> = art.released.iter().map(|p| p.code().clone()).collect();
    write_codes(&codebook_path(out), cfg.code_len, &released)?;

    let (half, full) = ambiguation_levels(cfg.code_len, s_x)?;
    let mean_nnz = released.iter().map(|c| c.nnz()).sum::<usize>() as f64 / released.len() as f64;
    println!(
        "owner-prepare: L={} S_x={s_x} S_p={s_p} (levels: half={half} full={full})",
        cfg.code_len
    );
    println!(
        "wrote {} ({} x {})",
        data_path(out).display(),
        art.data.n_dims(),
        art.data.n_points()
    );
    println!(
        "wrote {} ({} x {})",
        transform_path(out).display(),
        cfg.code_len,
        art.data.n_dims()
    );
    println!(
        "wrote {} (M={}, mean nnz={mean_nnz:.2})",
        codebook_path(out).display(),
        released.len()
    );
    Ok(())
}
