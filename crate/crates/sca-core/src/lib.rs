//! Privacy-preserving approximate near-neighbor search through sparse
//! coding with ambiguation.
//!
//! A data owner learns a sparsifying transform `W` so that stored points
//! compress to `S_x`-sparse codes, then *ambiguates* each code by planting
//! `S_p` decoy entries on its support complement before releasing it to an
//! untrusted server. The server answers radius queries with a fair random
//! pick from the neighborhood, never seeing raw data. Authorized users who
//! know a code's true support strip the decoys bit-for-bit and reconstruct
//! through a learned decoder; everyone else decodes noise along with
//! signal, and the distortion gap is measurable.
//!
//! The crate is organized along that pipeline:
//!
//! - [`transform`]: alternating minimization for `W` with an orthogonality
//!   and log-det conditioning penalty, plus the exact sparse coding step.
//! - [`codec`]: sparse and ternary code types, encoding policies, decoder
//!   fitting (orthonormal Procrustes or ridge), purification, and rescaling.
//! - [`ambiguation`]: decoy placement with empirical or sign-only values,
//!   query-side noise budgets, and the half/full budget helpers.
//! - [`search`]: masked latent metrics, radius and k-nearest queries over
//!   released codes, the fair neighborhood pick, and recall.
//! - [`threat`]: distortion curves, support stability, cluster leakage via
//!   histogram KL, and the recoverability criterion.
//! - [`datagen`]: seeded synthetic sources (i.i.d. Gaussian, AR(1),
//!   labeled clusters) and query generators.
//!
//! Everything that consumes randomness takes either an explicit seed or a
//! caller-supplied RNG, and identical inputs reproduce identical outputs
//! down to the bit.

pub mod ambiguation;
pub mod codec;
pub mod datagen;
pub mod error;
pub mod matrix;
pub mod search;
pub mod stats;
pub mod threat;
pub mod transform;

pub use ambiguation::{ambiguate, ambiguate_query, ambiguation_levels, AmbiguatedCode, NoiseModel};
pub use codec::{
    decode, encode, encode_ternary, learn_decoder, least_squares_scale, purify, ridge_decoder,
    Decoder, DecoderMode, SparseCode, TernaryCode,
};
pub use datagen::{
    gen_ar1, gen_authorized_query, gen_clusters, gen_gaussian, gen_unauthorized_query, synthesize,
    SyntheticKind, SyntheticSpec,
};
pub use error::{Error, Result};
pub use matrix::{derive_seed, DataMatrix};
pub use search::{
    fair_sample, latent_distance, latent_distance_codes, recall_at_t, LatentMetric, QueryResult,
    SearchIndex,
};
pub use threat::{
    cluster_leakage_codes, cluster_leakage_points, distortion_sparsity_curve, normalized_mse,
    reconstruction_attack, recoverability_test, support_match_probabilities, DistortionRow,
    PipelineConfig, RecoverabilityResult, SupportStats,
};
pub use transform::{
    learn_transform, objective, objective_gradient_w, omega1, sparse_coding_step,
    transform_update_step, Codebook, EncodingPolicy, LearnOutcome, LearningConfig,
    SparsifyingTransform, StepOutcome,
};
