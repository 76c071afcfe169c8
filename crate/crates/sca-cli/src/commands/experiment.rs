//! Experiment runner: reproduces the evaluation curves as CSV files, one
//! study per invocation. All randomness funnels through per-study derived
//! seed streams, and parallel sections collect in index order, so outputs
//! are byte-stable across reruns and thread counts.

use clap::ValueEnum;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use sca_core::{
    ambiguate, ambiguate_query, cluster_leakage_codes, cluster_leakage_points, derive_seed,
    encode, fair_sample, gen_authorized_query, latent_distance_codes, purify, recall_at_t,
    support_match_probabilities, AmbiguatedCode, DataMatrix, PipelineConfig, SearchIndex,
    SparseCode, SparsifyingTransform,
};

use crate::config::{DecoderModeKind, ExperimentConfig};
use crate::error::{CliError, Result};

use super::{build_owner_pipeline, csv_num, resolve_radius, write_csv, STREAM_NOISE, STREAM_QUERY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Study {
    /// Signal-domain vs latent-domain distances over random point pairs.
    DistancePreservation,
    /// Support recovery probability against query noise, learned vs identity.
    SupportRobustness,
    /// Authorized and unauthorized distortion over the sparsity/noise grid.
    DistortionSparsity,
    /// Cluster separability (histogram KL) in signal, clean, noisy, and
    /// purified domains.
    ClusteringLeakage,
    /// Recall against signal-domain ground truth as the report size grows.
    Recall,
    /// Empirical pick frequencies of the fair neighborhood sampling.
    Fairness,
}

impl Study {
    fn file_name(self) -> &'static str {
        match self {
            Study::DistancePreservation => "distance_preservation.csv",
            Study::SupportRobustness => "support_robustness.csv",
            Study::DistortionSparsity => "distortion_sparsity.csv",
            Study::ClusteringLeakage => "clustering_leakage.csv",
            Study::Recall => "recall.csv",
            Study::Fairness => "fairness.csv",
        }
    }
}

pub fn cmd_experiment(cfg: &ExperimentConfig, study: Study) -> Result<()> {
    let pool = thread_pool()?;
    let (header, rows) = pool.install(|| match study {
        Study::DistancePreservation => distance_preservation(cfg),
        Study::SupportRobustness => support_robustness(cfg),
        Study::DistortionSparsity => distortion_sparsity(cfg),
        Study::ClusteringLeakage => clustering_leakage(cfg),
        Study::Recall => recall(cfg),
        Study::Fairness => fairness(cfg),
    })?;
    let path = cfg.out_dir.join(study.file_name());
    write_csv(&path, header, &rows)?;
    println!("experiment: wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}

/// Rayon pool capped by `SCA_THREADS` when set.
fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("SCA_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Config(format!("SCA_THREADS: expected a number, got {v:?}")))?;
        if n > 0 {
            builder = builder.num_threads(n);
        }
    }
    builder
        .build()
        .map_err(|e| CliError::Config(format!("SCA_THREADS: could not build thread pool: {e}")))
}

type StudyOutput = (&'static str, Vec<String>);

fn distance_preservation(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    let art = build_owner_pipeline(cfg, cfg.s_x_sweep[0], cfg.s_p_sweep[0])?;
    let m = art.data.n_points();
    if m < 2 {
        return Err(CliError::Config(
            "distance-preservation study needs at least two data points".into(),
        ));
    }
    let n_pairs = cfg.n_pairs.unwrap_or(5000);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_QUERY));
    let pairs: Vec<(usize, usize)> = (0..n_pairs)
        .map(|_| {
            use rand::Rng;
            let i = rng.gen_range(0..m);
            let j = loop {
                let j = rng.gen_range(0..m);
                if j != i {
                    break j;
                }
            };
            (i, j)
        })
        .collect();
    let metric = cfg.metric();
    let rows = pairs
        .par_iter()
        .enumerate()
        .map(|(pair_id, &(i, j))| {
            let d_signal = (art.data.column_owned(i) - art.data.column_owned(j)).norm();
            let d_latent =
                latent_distance_codes(metric, art.clean.column(i), art.clean.column(j))?;
            Ok(format!(
                "{pair_id},{},{}",
                csv_num(d_signal),
                csv_num(d_latent)
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(("pair_id,d_signal,d_latent", rows))
}

fn support_robustness(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    if cfg.lambda.is_some() {
        return Err(CliError::Config(
            "lambda: support-robustness study needs the top-s policy".into(),
        ));
    }
    let n = cfg.data.n_dims();
    if cfg.code_len != n {
        return Err(CliError::Config(format!(
            "code_len: support-robustness study needs code_len == data n_dims ({n}) \
             for the identity baseline, got {}",
            cfg.code_len
        )));
    }
    let art = build_owner_pipeline(cfg, cfg.s_x_sweep[0], cfg.s_p_sweep[0])?;
    let identity = SparsifyingTransform::new(
        nalgebra::DMatrix::identity(n, n),
        *art.transform.policy(),
    )?;

    let m_pairs = cfg.n_queries.unwrap_or(1000).min(art.data.n_points());
    let x_sub = DataMatrix::from_columns(
        &(0..m_pairs)
            .map(|i| art.data.column_owned(i))
            .collect::<Vec<_>>(),
    )?;
    let default_sweep: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let sweep = cfg.sigma_z_sweep.clone().unwrap_or(default_sweep);
    let query_seed = derive_seed(cfg.seed, STREAM_QUERY);

    let rows = sweep
        .iter()
        .enumerate()
        .map(|(si, &sigma_z)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(query_seed, si as u64));
            let ys: Vec<_> = (0..m_pairs)
                .map(|i| gen_authorized_query(&x_sub.column(i), sigma_z, &mut rng))
                .collect::<sca_core::Result<Vec<_>>>()?;
            let y = DataMatrix::from_columns(&ys)?;
            let learned = support_match_probabilities(&x_sub, &y, &art.transform)?;
            let baseline = support_match_probabilities(&x_sub, &y, &identity)?;
            Ok(format!(
                "{},{},{},{},{}",
                csv_num(sigma_z),
                csv_num(learned.p_c),
                csv_num(learned.p_m),
                csv_num(baseline.p_c),
                csv_num(baseline.p_m)
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        "sigma_z,p_c_learned,p_m_learned,p_c_identity,p_m_identity",
        rows,
    ))
}

fn distortion_sparsity(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    if cfg.lambda.is_some() {
        return Err(CliError::Config(
            "lambda: distortion-sparsity study sweeps hard sparsity budgets".into(),
        ));
    }
    let (x, _) = sca_core::synthesize(
        &cfg.data
            .synthetic_spec(derive_seed(cfg.seed, super::STREAM_DATA)),
    )?;
    let sweep: Vec<(usize, usize)> = cfg
        .s_x_sweep
        .iter()
        .flat_map(|&s_x| cfg.s_p_sweep.iter().map(move |&s_p| (s_x, s_p)))
        .collect();
    let pipeline = PipelineConfig {
        code_len: cfg.code_len,
        learning: cfg.learning_config(cfg.s_x_sweep[0], derive_seed(cfg.seed, super::STREAM_LEARN)),
        beta_r: cfg.decoder.beta_r,
        beta: cfg.decoder.beta,
        decoder_mode: cfg.decoder.mode.map(|k| match k {
            DecoderModeKind::Orthonormal => sca_core::DecoderMode::Orthonormal,
            DecoderModeKind::Ridge => sca_core::DecoderMode::Ridge,
        }),
        ternary: cfg.ternary,
        rescale: cfg.rescale,
        noise_seed: derive_seed(cfg.seed, STREAM_NOISE),
    };
    let rows = sca_core::distortion_sparsity_curve(&x, &sweep, &pipeline)?
        .into_iter()
        .map(|r| {
            format!(
                "{},{},{},{}",
                r.s_x,
                r.s_p,
                csv_num(r.authorized_mse),
                csv_num(r.unauthorized_mse)
            )
        })
        .collect();
    Ok(("s_x,s_p,authorized_mse,unauthorized_mse", rows))
}

fn clustering_leakage(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    let art = build_owner_pipeline(cfg, cfg.s_x_sweep[0], cfg.s_p_sweep[0])?;
    let labels = art.labels.as_ref().ok_or_else(|| {
        CliError::Config("data.kind: clustering-leakage study needs clusters data".into())
    })?;
    let metric = cfg.metric();
    let mut rows = Vec::new();

    let kl_signal = cluster_leakage_points(&art.data, labels)?;
    rows.push(format!("signal,0,{}", csv_num(kl_signal)));

    let clean: Vec<SparseCode> = art.clean.columns().to_vec();
    let kl_clean = cluster_leakage_codes(&clean, metric, labels)?;
    rows.push(format!("clean-codes,0,{}", csv_num(kl_clean)));

    let noise_seed = derive_seed(cfg.seed, STREAM_NOISE);
    for (row, &s_p) in cfg.s_p_sweep.iter().enumerate() {
        let row_seed = derive_seed(noise_seed, row as u64);
        let noisy: Vec<AmbiguatedCode> = clean
            .iter()
            .enumerate()
            .map(|(m, c)| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(row_seed, m as u64));
                ambiguate(c, s_p, &art.noise, &mut rng)
            })
            .collect::<sca_core::Result<_>>()?;
        let noisy_codes: Vec<SparseCode> = noisy.iter().map(|p| p.code().clone()).collect();
        let kl_noisy = cluster_leakage_codes(&noisy_codes, metric, labels)?;
        rows.push(format!("ambiguated,{s_p},{}", csv_num(kl_noisy)));

        let purified: Vec<SparseCode> = noisy
            .iter()
            .enumerate()
            .map(|(m, p)| purify(p, &clean[m].support()))
            .collect();
        let kl_purified = cluster_leakage_codes(&purified, metric, labels)?;
        rows.push(format!("purified,{s_p},{}", csv_num(kl_purified)));
    }
    Ok(("domain,s_p,kl", rows))
}

fn recall(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    let art = build_owner_pipeline(cfg, cfg.s_x_sweep[0], cfg.s_p_sweep[0])?;
    let m = art.data.n_points();
    let r_truth = cfg.recall_ground_truth.unwrap_or(10).min(m);
    let sigma_z = cfg.recall_sigma_z.unwrap_or(0.1);
    let n_q = cfg.n_queries.unwrap_or(100).min(m);
    let t_sweep: Vec<usize> = match &cfg.recall_t_sweep {
        Some(sweep) => {
            let mut t: Vec<usize> = sweep.iter().map(|&t| t.min(m)).collect();
            t.sort_unstable();
            t.dedup();
            t
        }
        None => {
            let mut t: Vec<usize> = [1, 5, 10, 50, m].iter().map(|&t| t.min(m)).collect();
            t.sort_unstable();
            t.dedup();
            t
        }
    };

    let entries: Vec<(usize, AmbiguatedCode)> =
        art.released.iter().cloned().enumerate().collect();
    // radius is irrelevant for knn; any finite value builds the index
    let index = SearchIndex::new(entries, cfg.metric(), 0.0, cfg.epsilon)?;
    let query_seed = derive_seed(cfg.seed, STREAM_QUERY);
    let s_p_db = cfg.s_p_sweep[0];

    // per query: signal-domain ground truth and latent retrieval at max T
    let per_query: Vec<(Vec<usize>, Vec<usize>)> = (0..n_q)
        .into_par_iter()
        .map(|qi| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(query_seed, qi as u64));
            let y = gen_authorized_query(&art.data.column(qi), sigma_z, &mut rng)?;
            let mut truth: Vec<(usize, f64)> = (0..m)
                .map(|id| (id, (art.data.column_owned(id) - &y).norm()))
                .collect();
            truth.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let gt: Vec<usize> = truth.iter().take(r_truth).map(|&(id, _)| id).collect();

            let q_clean = encode(&art.transform, &y.as_view())?;
            let probe = ambiguate_query(&q_clean, cfg.s_q, s_p_db, &art.noise, &mut rng)?;
            let ranked = index.knn(&probe, *t_sweep.last().unwrap())?;
            Ok((gt, ranked))
        })
        .collect::<Result<Vec<_>>>()?;

    let rows = t_sweep
        .iter()
        .map(|&t| {
            let total: f64 = per_query
                .iter()
                .map(|(gt, ranked)| recall_at_t(gt, &ranked[..t.min(ranked.len())]))
                .collect::<sca_core::Result<Vec<_>>>()?
                .iter()
                .sum();
            Ok(format!("{t},{}", csv_num(total / n_q as f64)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(("t,mean_recall", rows))
}

fn fairness(cfg: &ExperimentConfig) -> Result<StudyOutput> {
    let art = build_owner_pipeline(cfg, cfg.s_x_sweep[0], cfg.s_p_sweep[0])?;
    let m = art.data.n_points();
    let draws = cfg.fairness_draws.unwrap_or(100_000);
    let query_seed = derive_seed(cfg.seed, STREAM_QUERY);

    // probe: noisy copy of the first stored point
    let mut rng = ChaCha8Rng::seed_from_u64(query_seed);
    let y = gen_authorized_query(&art.data.column(0), 0.1, &mut rng)?;
    let q_clean = encode(&art.transform, &y.as_view())?;
    let probe = ambiguate_query(&q_clean, cfg.s_q, art.s_p, &art.noise, &mut rng)?;

    // neighborhood: ball at the configured radius, widened to the ten
    // nearest codes when the ball is too small to say anything
    let entries: Vec<(usize, AmbiguatedCode)> =
        art.released.iter().cloned().enumerate().collect();
    let metric = cfg.metric();
    let distances: Vec<f64> = art
        .released
        .iter()
        .map(|p| latent_distance_codes(metric, probe.code(), p.code()))
        .collect::<sca_core::Result<_>>()?;
    let radius = resolve_radius(cfg.radius, &distances)?;
    let index = SearchIndex::new(entries, metric, radius, cfg.epsilon)?;
    let mut candidates = index.ball_query(&probe)?;
    if candidates.len() < 2 {
        candidates = index.knn(&probe, 10.min(m))?;
        candidates.sort_unstable();
    }

    let mut counts = vec![0usize; candidates.len()];
    let mut fair_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, super::STREAM_FAIR));
    for _ in 0..draws {
        let picked = fair_sample(&candidates, &mut fair_rng)?;
        let slot = candidates.binary_search(&picked.chosen_id).unwrap();
        counts[slot] += 1;
    }

    let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / draws as f64).collect();
    let f_min = freqs.iter().copied().fold(f64::INFINITY, f64::min);
    let f_max = freqs.iter().copied().fold(0.0f64, f64::max);
    let band = (1.0 + cfg.epsilon) * (1.0 + cfg.epsilon);
    println!(
        "fairness: {} candidates, {draws} draws, max/min frequency ratio {:.6} (band {band:.6})",
        candidates.len(),
        f_max / f_min
    );

    let rows = candidates
        .iter()
        .zip(counts.iter())
        .zip(freqs.iter())
        .map(|((id, count), freq)| format!("{id},{count},{}", csv_num(*freq)))
        .collect();
    Ok(("id,count,frequency", rows))
}
