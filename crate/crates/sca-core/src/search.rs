//! Server-side search over released (ambiguated) codes.
//!
//! Distances are query-centric: they only look at positions inside the
//! probe's support, which is exactly what the server can see. The index is
//! a flat scan (candidate sets here are small and the point is the
//! privacy/utility tradeoff, not sublinear retrieval). A radius query
//! returns *all* hits; picking one uniformly at random afterwards makes the
//! choice fair in the sense that every near neighbor is reported with
//! nearly equal frequency.

use rand::Rng;

use crate::ambiguation::AmbiguatedCode;
use crate::codec::SparseCode;
use crate::error::{Error, Result};

/// Distance used in code space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentMetric {
    /// Number of probe support positions missing from the candidate:
    /// `|supp(q)| - |supp(q) ∩ supp(p)|`. Ignores stored values entirely.
    SupportOverlap,
    /// Euclidean distance restricted to the probe support:
    /// `sqrt(sum_{l in supp(q)} (q_l - p_l)^2)`.
    MaskedEuclidean,
}

/// Distance between two bare sparse codes of equal length.
pub fn latent_distance_codes(
    metric: LatentMetric,
    q: &SparseCode,
    p: &SparseCode,
) -> Result<f64> {
    if q.code_len() != p.code_len() {
        return Err(Error::DimensionMismatch {
            context: "latent distance code length",
            expected: q.code_len(),
            got: p.code_len(),
        });
    }
    match metric {
        LatentMetric::SupportOverlap => {
            Ok((q.nnz() - q.support_overlap(p)) as f64)
        }
        LatentMetric::MaskedEuclidean => {
            let mut acc = 0.0;
            for &(l, qv) in q.entries() {
                let d = qv - p.value_at(l);
                acc += d * d;
            }
            Ok(acc.sqrt())
        }
    }
}

/// Distance between a probe and a stored code (both possibly ambiguated).
pub fn latent_distance(
    metric: LatentMetric,
    q: &AmbiguatedCode,
    p: &AmbiguatedCode,
) -> Result<f64> {
    latent_distance_codes(metric, q.code(), p.code())
}

/// Outcome of a fair neighborhood query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryResult {
    pub chosen_id: usize,
    pub neighborhood_size: usize,
}

/// Flat index of released codes with a fixed metric, radius, and fairness
/// slack.
#[derive(Debug, Clone)]
pub struct SearchIndex {
    entries: Vec<(usize, AmbiguatedCode)>,
    metric: LatentMetric,
    radius: f64,
    epsilon: f64,
}

impl SearchIndex {
    /// Builds an index. Ids must be unique and all codes the same length;
    /// entries are kept sorted by id so query results come back ordered.
    pub fn new(
        mut entries: Vec<(usize, AmbiguatedCode)>,
        metric: LatentMetric,
        radius: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyCodebook {
                context: "search index needs at least one code",
            });
        }
        if !radius.is_finite() || radius < 0.0 {
            return Err(Error::InvalidParameter {
                name: "radius",
                reason: format!("must be nonnegative and finite, got {radius}"),
            });
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: format!("must be nonnegative and finite, got {epsilon}"),
            });
        }
        let code_len = entries[0].1.code().code_len();
        for (_, c) in &entries {
            if c.code().code_len() != code_len {
                return Err(Error::DimensionMismatch {
                    context: "index code length",
                    expected: code_len,
                    got: c.code().code_len(),
                });
            }
        }
        entries.sort_by_key(|&(id, _)| id);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidParameter {
                name: "ids",
                reason: "ids must be unique".into(),
            });
        }
        Ok(Self {
            entries,
            metric,
            radius,
            epsilon,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn metric(&self) -> LatentMetric {
        self.metric
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn code_len(&self) -> usize {
        self.entries[0].1.code().code_len()
    }

    /// Distance from a probe to every stored code, in id order.
    pub fn all_distances(&self, q: &AmbiguatedCode) -> Result<Vec<(usize, f64)>> {
        self.entries
            .iter()
            .map(|(id, p)| Ok((*id, latent_distance(self.metric, q, p)?)))
            .collect()
    }

    /// Ids of all stored codes within the index radius, ascending.
    pub fn ball_query(&self, q: &AmbiguatedCode) -> Result<Vec<usize>> {
        Ok(self
            .all_distances(q)?
            .into_iter()
            .filter(|&(_, d)| d <= self.radius)
            .map(|(id, _)| id)
            .collect())
    }

    /// Ids of the `k` nearest stored codes, distance ties broken by
    /// ascending id; `k` larger than the index returns everything.
    pub fn knn(&self, q: &AmbiguatedCode, k: usize) -> Result<Vec<usize>> {
        let mut dists = self.all_distances(q)?;
        dists.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        dists.truncate(k);
        Ok(dists.into_iter().map(|(id, _)| id).collect())
    }

    /// Ball query followed by a uniform pick among the hits.
    pub fn query<R: Rng>(&self, q: &AmbiguatedCode, rng: &mut R) -> Result<QueryResult> {
        let candidates = self.ball_query(q)?;
        fair_sample(&candidates, rng)
    }
}

/// Uniform pick from a candidate list. Every candidate is selected with
/// probability exactly `1 / n`, the strongest form of the near-uniform
/// reporting guarantee the index promises.
pub fn fair_sample<R: Rng>(candidates: &[usize], rng: &mut R) -> Result<QueryResult> {
    if candidates.is_empty() {
        return Err(Error::EmptyNeighborhood);
    }
    let chosen = candidates[rng.gen_range(0..candidates.len())];
    Ok(QueryResult {
        chosen_id: chosen,
        neighborhood_size: candidates.len(),
    })
}

/// Fraction of the ground-truth ids that appear in the retrieved list.
pub fn recall_at_t(ground_truth: &[usize], retrieved: &[usize]) -> Result<f64> {
    if ground_truth.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let mut sorted = retrieved.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let hits = ground_truth
        .iter()
        .filter(|id| sorted.binary_search(id).is_ok())
        .count();
    Ok(hits as f64 / ground_truth.len() as f64)
}
