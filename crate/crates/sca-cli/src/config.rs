//! Experiment configuration: one JSON document drives every subcommand.
//! Unknown keys are rejected so a typo cannot silently fall back to a
//! default, and all cross-field constraints are checked up front.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use sca_core::{DecoderMode, EncodingPolicy, LatentMetric, LearningConfig, SyntheticKind, SyntheticSpec};

use crate::error::{CliError, Result};

/// Synthetic data source for the run.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    /// i.i.d. zero-mean Gaussian entries with variance `sigma_x`.
    Gaussian {
        sigma_x: f64,
        n_dims: usize,
        n_points: usize,
    },
    /// Stationary AR(1) columns with coefficient `rho` and innovation
    /// standard deviation `sigma`.
    Ar1 {
        rho: f64,
        sigma: f64,
        n_dims: usize,
        n_points: usize,
    },
    /// `k` labeled Gaussian blobs.
    Clusters {
        k: usize,
        center_spread: f64,
        within_sigma: f64,
        n_dims: usize,
        n_points: usize,
    },
}

impl DataSpec {
    pub fn n_dims(&self) -> usize {
        match *self {
            DataSpec::Gaussian { n_dims, .. }
            | DataSpec::Ar1 { n_dims, .. }
            | DataSpec::Clusters { n_dims, .. } => n_dims,
        }
    }

    pub fn n_points(&self) -> usize {
        match *self {
            DataSpec::Gaussian { n_points, .. }
            | DataSpec::Ar1 { n_points, .. }
            | DataSpec::Clusters { n_points, .. } => n_points,
        }
    }

    /// Core generator spec under a concrete seed.
    pub fn synthetic_spec(&self, rng_seed: u64) -> SyntheticSpec {
        let kind = match *self {
            DataSpec::Gaussian { sigma_x, .. } => SyntheticKind::IidGaussian { sigma_x },
            DataSpec::Ar1 { rho, sigma, .. } => SyntheticKind::Ar1 { rho, sigma },
            DataSpec::Clusters {
                k,
                center_spread,
                within_sigma,
                ..
            } => SyntheticKind::GaussianClusters {
                k,
                center_spread,
                within_sigma,
            },
        };
        SyntheticSpec {
            kind,
            n_dims: self.n_dims(),
            n_points: self.n_points(),
            rng_seed,
        }
    }
}

/// Search radius, given directly or as a quantile of probe distances.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum RadiusSpec {
    Absolute(f64),
    Quantile(f64),
}

/// Latent metric selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    SupportOverlap,
    MaskedEuclidean,
}

impl From<MetricKind> for LatentMetric {
    fn from(k: MetricKind) -> Self {
        match k {
            MetricKind::SupportOverlap => LatentMetric::SupportOverlap,
            MetricKind::MaskedEuclidean => LatentMetric::MaskedEuclidean,
        }
    }
}

/// Optional overrides for the transform learner.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningKnobs {
    pub beta1: f64,
    pub beta11: f64,
    pub beta12: f64,
    pub beta13: f64,
    pub max_iters: usize,
    pub step_init: f64,
    pub obj_tol: f64,
    pub inner_steps: usize,
}

impl Default for LearningKnobs {
    fn default() -> Self {
        let d = LearningConfig::default();
        Self {
            beta1: d.beta1,
            beta11: d.beta11,
            beta12: d.beta12,
            beta13: d.beta13,
            max_iters: d.max_iters,
            step_init: d.step_init,
            obj_tol: d.obj_tol,
            inner_steps: d.inner_steps,
        }
    }
}

/// Optional overrides for the decoder fit.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderKnobs {
    pub beta_r: f64,
    pub beta: f64,
    /// `None` picks orthonormal whenever `code_len <= n_dims`.
    pub mode: Option<DecoderModeKind>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderModeKind {
    Orthonormal,
    Ridge,
}

impl Default for DecoderKnobs {
    fn default() -> Self {
        Self {
            beta_r: 1.0,
            beta: 0.1,
            mode: None,
        }
    }
}

impl DecoderKnobs {
    pub fn mode_for(&self, code_len: usize, n_dims: usize) -> DecoderMode {
        match self.mode {
            Some(DecoderModeKind::Orthonormal) => DecoderMode::Orthonormal,
            Some(DecoderModeKind::Ridge) => DecoderMode::Ridge,
            None => DecoderMode::auto_for(code_len, n_dims),
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// The complete run description. Required keys follow the protocol
/// surface; optional keys fine-tune individual studies.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSpec,
    /// Code length `L`.
    pub code_len: usize,
    pub s_x_sweep: Vec<usize>,
    pub s_p_sweep: Vec<usize>,
    /// Query-side noise budget.
    pub s_q: usize,
    /// When present, encoding keeps every coefficient with magnitude at
    /// least `lambda` instead of the top-`s_x` rule.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Sign-only codes.
    #[serde(default)]
    pub ternary: bool,
    /// Defaults to support overlap for ternary codes and masked Euclidean
    /// for real-valued ones.
    #[serde(default)]
    pub metric: Option<MetricKind>,
    pub radius: RadiusSpec,
    /// Fairness slack for the near-uniform reporting check.
    pub epsilon: f64,
    /// Distortion threshold of the recoverability test.
    pub beta: f64,
    /// Probability threshold of the recoverability test.
    pub gamma: f64,
    /// Master seed; every subsystem derives its own stream from it.
    pub seed: u64,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub learning: LearningKnobs,
    #[serde(default)]
    pub decoder: DecoderKnobs,
    /// Query-noise grid for the support-robustness study.
    #[serde(default)]
    pub sigma_z_sweep: Option<Vec<f64>>,
    /// Report sizes for the recall study.
    #[serde(default)]
    pub recall_t_sweep: Option<Vec<usize>>,
    /// Ground-truth neighborhood size for the recall study.
    #[serde(default)]
    pub recall_ground_truth: Option<usize>,
    /// Query noise (standard deviation) for the recall study.
    #[serde(default)]
    pub recall_sigma_z: Option<f64>,
    /// Sample count for the fairness study.
    #[serde(default)]
    pub fairness_draws: Option<usize>,
    /// Paired queries per sweep point in the support-robustness study.
    #[serde(default)]
    pub n_queries: Option<usize>,
    /// Point pairs in the distance-preservation study.
    #[serde(default)]
    pub n_pairs: Option<usize>,
    /// Apply the least-squares rescale before computing distortions.
    #[serde(default)]
    pub rescale: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let l = self.code_len;
        let n = self.data.n_dims();
        if n == 0 || self.data.n_points() == 0 {
            return Err(config_err("data: n_dims and n_points must be at least 1"));
        }
        if l == 0 {
            return Err(config_err("code_len: must be at least 1"));
        }
        if l < n {
            return Err(config_err(format!(
                "code_len: must be at least data n_dims ({n}) for transform learning, got {l}"
            )));
        }
        if self.s_x_sweep.is_empty() {
            return Err(config_err("s_x_sweep: must not be empty"));
        }
        if self.s_p_sweep.is_empty() {
            return Err(config_err("s_p_sweep: must not be empty"));
        }
        for &s_x in &self.s_x_sweep {
            if s_x == 0 || s_x > l {
                return Err(config_err(format!(
                    "s_x_sweep: every value must be in 1..={l}, got {s_x}"
                )));
            }
        }
        let s_x_max = *self.s_x_sweep.iter().max().unwrap();
        for &s_p in &self.s_p_sweep {
            if s_p > l - s_x_max {
                return Err(config_err(format!(
                    "s_p_sweep: value {s_p} exceeds the free budget L - S_x = {} (L = {l}, largest S_x = {s_x_max})",
                    l - s_x_max
                )));
            }
        }
        let s_p_max = *self.s_p_sweep.iter().max().unwrap();
        if self.s_q > s_p_max {
            return Err(config_err(format!(
                "s_q: query noise {} must not exceed the largest database noise level {s_p_max}",
                self.s_q
            )));
        }
        if let Some(lambda) = self.lambda {
            if !lambda.is_finite() || lambda < 0.0 {
                return Err(config_err(format!(
                    "lambda: must be nonnegative and finite, got {lambda}"
                )));
            }
        }
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(config_err(format!(
                "epsilon: must be nonnegative and finite, got {}",
                self.epsilon
            )));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(config_err(format!(
                "beta: must be nonnegative and finite, got {}",
                self.beta
            )));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(config_err(format!(
                "gamma: must be in [0, 1], got {}",
                self.gamma
            )));
        }
        match self.radius {
            RadiusSpec::Absolute(r) => {
                if !r.is_finite() || r < 0.0 {
                    return Err(config_err(format!(
                        "radius.absolute: must be nonnegative and finite, got {r}"
                    )));
                }
            }
            RadiusSpec::Quantile(q) => {
                if !(0.0..=1.0).contains(&q) {
                    return Err(config_err(format!(
                        "radius.quantile: must be in [0, 1], got {q}"
                    )));
                }
            }
        }
        if let Some(sweep) = &self.sigma_z_sweep {
            if sweep.is_empty() {
                return Err(config_err("sigma_z_sweep: must not be empty"));
            }
            for &s in sweep {
                if !s.is_finite() || s < 0.0 {
                    return Err(config_err(format!(
                        "sigma_z_sweep: values must be nonnegative and finite, got {s}"
                    )));
                }
            }
        }
        if let Some(sweep) = &self.recall_t_sweep {
            if sweep.is_empty() {
                return Err(config_err("recall_t_sweep: must not be empty"));
            }
            if sweep.contains(&0) {
                return Err(config_err("recall_t_sweep: values must be at least 1"));
            }
        }
        for (name, v) in [
            ("recall_ground_truth", self.recall_ground_truth),
            ("fairness_draws", self.fairness_draws),
            ("n_queries", self.n_queries),
            ("n_pairs", self.n_pairs),
        ] {
            if v == Some(0) {
                return Err(config_err(format!("{name}: must be at least 1")));
            }
        }
        if let Some(s) = self.recall_sigma_z {
            if !s.is_finite() || s < 0.0 {
                return Err(config_err(format!(
                    "recall_sigma_z: must be nonnegative and finite, got {s}"
                )));
            }
        }
        Ok(())
    }

    /// Encoding policy at a concrete sparsity budget; a configured
    /// `lambda` switches every encoder to thresholding.
    pub fn policy(&self, s_x: usize) -> EncodingPolicy {
        match self.lambda {
            Some(lambda) => EncodingPolicy::Threshold { lambda },
            None => EncodingPolicy::TopS { s_x },
        }
    }

    /// Configured metric or the code-family default: overlap for ternary
    /// codes, masked Euclidean for real-valued ones.
    pub fn metric(&self) -> LatentMetric {
        match self.metric {
            Some(k) => k.into(),
            None if self.ternary => LatentMetric::SupportOverlap,
            None => LatentMetric::MaskedEuclidean,
        }
    }

    /// Core learner configuration at a concrete sparsity and seed.
    pub fn learning_config(&self, s_x: usize, rng_seed: u64) -> LearningConfig {
        LearningConfig {
            beta1: self.learning.beta1,
            beta11: self.learning.beta11,
            beta12: self.learning.beta12,
            beta13: self.learning.beta13,
            s_x,
            max_iters: self.learning.max_iters,
            step_init: self.learning.step_init,
            obj_tol: self.learning.obj_tol,
            inner_steps: self.learning.inner_steps,
            rng_seed,
            ..LearningConfig::default()
        }
    }
}

/// Reads, parses, and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}
