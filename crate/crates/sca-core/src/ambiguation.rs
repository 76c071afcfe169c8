//! Ambiguation: hiding a sparse code's support by adding dummy entries.
//!
//! Noise entries are placed uniformly without replacement on the support
//! complement and their values are drawn from the same marginal law as the
//! real entries (empirical magnitude pool with a random sign, or a bare
//! sign for ternary codes), so a released code gives an observer no local
//! cue for telling signal from noise.

use rand::seq::index::sample;
use rand::Rng;

use crate::codec::SparseCode;
use crate::error::{Error, Result};
use crate::transform::Codebook;

/// A sparse code whose entry list mixes true coefficients with
/// `noise_count` dummies. Only the position split is secret; the structure
/// is an ordinary sparse code.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguatedCode {
    code: SparseCode,
    noise_count: usize,
}

impl AmbiguatedCode {
    /// Wraps an existing code and its declared dummy count.
    pub fn from_parts(code: SparseCode, noise_count: usize) -> Self {
        Self { code, noise_count }
    }

    pub fn code(&self) -> &SparseCode {
        &self.code
    }

    pub fn into_code(self) -> SparseCode {
        self.code
    }

    /// Declared number of dummy entries.
    pub fn noise_count(&self) -> usize {
        self.noise_count
    }
}

/// Where dummy values come from.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    /// Magnitudes resampled from the real codebook's entries, sign uniform.
    Empirical { magnitudes: Vec<f64> },
    /// Values are a bare uniform sign, matching sign-only codes.
    Ternary,
}

impl NoiseModel {
    /// Pools the magnitudes of every codebook entry (column order, then
    /// entry order). Fails if the codebook has no entries at all.
    pub fn from_codebook(a: &Codebook) -> Result<Self> {
        Self::from_codes(a.columns())
    }

    /// Same as [`NoiseModel::from_codebook`] for a bare slice of codes.
    pub fn from_codes(codes: &[SparseCode]) -> Result<Self> {
        let magnitudes: Vec<f64> = codes
            .iter()
            .flat_map(|c| c.entries().iter().map(|&(_, v)| v.abs()))
            .collect();
        if magnitudes.is_empty() {
            return Err(Error::EmptyCodebook {
                context: "noise model needs at least one real entry to pool",
            });
        }
        Ok(NoiseModel::Empirical { magnitudes })
    }

    pub fn ternary() -> Self {
        NoiseModel::Ternary
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        match self {
            NoiseModel::Empirical { magnitudes } => {
                sign * magnitudes[rng.gen_range(0..magnitudes.len())]
            }
            NoiseModel::Ternary => sign,
        }
    }
}

/// Adds exactly `s_p` dummy entries to the support complement of `a`.
/// Positions are uniform without replacement; original entries are carried
/// over bit for bit. Fails if fewer than `s_p` positions are free.
pub fn ambiguate<R: Rng>(
    a: &SparseCode,
    s_p: usize,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<AmbiguatedCode> {
    let l = a.code_len();
    let free = l - a.nnz();
    if s_p > free {
        return Err(Error::AmbiguationBudgetExceeded {
            requested: s_p,
            available: free,
        });
    }
    let support = a.support();
    let complement: Vec<usize> = (0..l).filter(|i| support.binary_search(i).is_err()).collect();
    let mut chosen: Vec<usize> = sample(rng, complement.len(), s_p)
        .into_iter()
        .map(|k| complement[k])
        .collect();
    chosen.sort_unstable();
    // values are drawn in ascending index order, a fixed convention that
    // keeps outputs reproducible
    let mut merged: Vec<(usize, f64)> = a.entries().to_vec();
    for idx in chosen {
        merged.push((idx, noise.draw(rng)));
    }
    merged.sort_unstable_by_key(|&(i, _)| i);
    Ok(AmbiguatedCode {
        code: SparseCode::new(l, merged)?,
        noise_count: s_p,
    })
}

/// Query-side ambiguation: like [`ambiguate`] but the dummy count must not
/// exceed the database noise level `s_p_max`. `s_q = 0` sends the query in
/// the clear.
pub fn ambiguate_query<R: Rng>(
    b: &SparseCode,
    s_q: usize,
    s_p_max: usize,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<AmbiguatedCode> {
    if s_q > s_p_max {
        return Err(Error::QueryNoiseExceedsDatabaseNoise {
            s_q,
            s_p: s_p_max,
        });
    }
    ambiguate(b, s_q, noise, rng)
}

/// The two reference noise budgets for a code length and sparsity: half
/// fills half of the free positions (rounded down), full fills all of them.
pub fn ambiguation_levels(code_len: usize, s_x: usize) -> Result<(usize, usize)> {
    if s_x > code_len {
        return Err(Error::InvalidParameter {
            name: "s_x",
            reason: format!("must be at most code_len {code_len}, got {s_x}"),
        });
    }
    let free = code_len - s_x;
    Ok((free / 2, free))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_two_sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_code() -> SparseCode {
        SparseCode::new(8, vec![(1, 2.0), (4, -0.5)]).unwrap()
    }

    fn toy_model() -> NoiseModel {
        NoiseModel::Empirical {
            magnitudes: vec![0.5, 1.0, 2.0],
        }
    }

    #[test]
    fn ambiguate_adds_exactly_s_p_disjoint_entries() {
        let a = toy_code();
        let nm = toy_model();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for s_p in 0..=6 {
            let p = ambiguate(&a, s_p, &nm, &mut rng).unwrap();
            assert_eq!(p.code().nnz(), a.nnz() + s_p);
            assert_eq!(p.noise_count(), s_p);
            // original entries survive with identical bits
            for &(i, v) in a.entries() {
                assert_eq!(p.code().value_at(i).to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn ambiguate_rejects_oversized_budgets() {
        let a = toy_code();
        let nm = toy_model();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(matches!(
            ambiguate(&a, 7, &nm, &mut rng),
            Err(Error::AmbiguationBudgetExceeded { requested: 7, available: 6 })
        ));
    }

    #[test]
    fn zero_noise_is_identity() {
        let a = toy_code();
        let nm = toy_model();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ambiguate(&a, 0, &nm, &mut rng).unwrap();
        assert_eq!(p.code(), &a);
        assert_eq!(p.noise_count(), 0);
    }

    #[test]
    fn reference_levels_match_hand_computation() {
        assert_eq!(ambiguation_levels(256, 16).unwrap(), (120, 240));
        assert_eq!(ambiguation_levels(7, 2).unwrap(), (2, 5));
        assert_eq!(ambiguation_levels(4, 4).unwrap(), (0, 0));
        assert!(ambiguation_levels(4, 5).is_err());
    }

    #[test]
    fn noise_magnitudes_match_pool_distribution() {
        // resampled dummy magnitudes must be statistically indistinguishable
        // from the real ones: two-sample KS below 0.02
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pool: Vec<f64> = (0..5000).map(|_| rng.gen_range(0.1..3.0)).collect();
        let nm = NoiseModel::Empirical {
            magnitudes: pool.clone(),
        };
        let a = SparseCode::new(64, vec![(0, 1.0)]).unwrap();
        let mut noise_mags = Vec::new();
        while noise_mags.len() < 20_000 {
            let p = ambiguate(&a, 32, &nm, &mut rng).unwrap();
            for &(i, v) in p.code().entries() {
                if i != 0 {
                    noise_mags.push(v.abs());
                }
            }
        }
        let d = ks_two_sample(&noise_mags, &pool);
        assert!(d < 0.02, "KS statistic {d} too large");
    }

    #[test]
    fn noise_signs_are_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nm = toy_model();
        let a = SparseCode::new(16, vec![(0, 1.0)]).unwrap();
        let mut sum = 0.0;
        let mut n = 0.0;
        for _ in 0..2000 {
            let p = ambiguate(&a, 8, &nm, &mut rng).unwrap();
            for &(i, v) in p.code().entries() {
                if i != 0 {
                    sum += v.signum();
                    n += 1.0;
                }
            }
        }
        assert!((sum / n).abs() < 3.0 / n.sqrt(), "sign bias {}", sum / n);
    }

    #[test]
    fn placement_is_uniform_over_free_positions() {
        // support {0,1}, 6 free slots, 2 dummies: each free index should be
        // hit with frequency 1/3 within a 3-sigma binomial band
        let a = SparseCode::new(8, vec![(0, 1.0), (1, 1.0)]).unwrap();
        let nm = toy_model();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let trials = 20_000;
        let mut hits = [0usize; 8];
        for _ in 0..trials {
            let p = ambiguate(&a, 2, &nm, &mut rng).unwrap();
            for &(i, _) in p.code().entries() {
                if i > 1 {
                    hits[i] += 1;
                }
            }
        }
        let p_expect = 2.0 / 6.0;
        let sigma = (p_expect * (1.0 - p_expect) / trials as f64).sqrt();
        for (i, &h) in hits.iter().enumerate().skip(2) {
            let freq = h as f64 / trials as f64;
            assert!(
                (freq - p_expect).abs() < 3.0 * sigma,
                "index {i} frequency {freq} outside 3-sigma of {p_expect}"
            );
        }
    }

    #[test]
    fn ternary_noise_is_sign_only() {
        let a = SparseCode::new(8, vec![(0, 1.0), (3, -1.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = ambiguate(&a, 6, &NoiseModel::ternary(), &mut rng).unwrap();
        for &(_, v) in p.code().entries() {
            assert!(v == 1.0 || v == -1.0);
        }
    }

    #[test]
    fn query_noise_is_capped_by_database_level() {
        let b = toy_code();
        let nm = toy_model();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        assert!(matches!(
            ambiguate_query(&b, 3, 2, &nm, &mut rng),
            Err(Error::QueryNoiseExceedsDatabaseNoise { s_q: 3, s_p: 2 })
        ));
        let clear = ambiguate_query(&b, 0, 2, &nm, &mut rng).unwrap();
        assert_eq!(clear.code(), &b);
    }

    #[test]
    fn ambiguation_is_deterministic_per_seed() {
        let a = toy_code();
        let nm = toy_model();
        let p1 = ambiguate(&a, 4, &nm, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let p2 = ambiguate(&a, 4, &nm, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(p1, p2);
        let p3 = ambiguate(&a, 4, &nm, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        assert_ne!(p1, p3);
    }

    #[test]
    fn empty_codebook_has_no_noise_model() {
        let codes = vec![SparseCode::empty(4), SparseCode::empty(4)];
        assert!(matches!(
            NoiseModel::from_codes(&codes),
            Err(Error::EmptyCodebook { .. })
        ));
    }
}
