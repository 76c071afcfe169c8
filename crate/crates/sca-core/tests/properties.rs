//! Randomized invariants over the code pipeline: whatever the shapes,
//! budgets, and values, these properties must hold exactly.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sca_core::{
    ambiguate, encode, fair_sample, latent_distance_codes, purify, AmbiguatedCode,
    EncodingPolicy, LatentMetric, NoiseModel, SearchIndex, SparseCode, SparsifyingTransform,
};

fn sparse_code_strategy(l: usize) -> impl Strategy<Value = SparseCode> {
    prop::collection::btree_set(0..l, 1..=l.min(12)).prop_flat_map(move |support| {
        let k = support.len();
        prop::collection::vec(
            (-1e6f64..1e6).prop_filter("well scaled", |v| v.abs() > 1e-6),
            k,
        )
        .prop_map(move |vals| {
            let entries: Vec<(usize, f64)> =
                support.iter().copied().zip(vals.iter().copied()).collect();
            SparseCode::new(l, entries).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn ambiguation_then_purification_restores_the_code(
        code in (8usize..64).prop_flat_map(sparse_code_strategy),
        budget_frac in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let free = code.code_len() - code.nnz();
        let s_p = ((free as f64) * budget_frac).floor() as usize;
        let noise = NoiseModel::from_codes(std::slice::from_ref(&code)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let released = ambiguate(&code, s_p, &noise, &mut rng).unwrap();

        prop_assert_eq!(released.noise_count(), s_p);
        prop_assert_eq!(released.code().nnz(), code.nnz() + s_p);

        // bit-exact round trip through the key support
        let restored = purify(&released, &code.support());
        prop_assert_eq!(restored.nnz(), code.nnz());
        for (a, b) in restored.entries().iter().zip(code.entries()) {
            prop_assert_eq!(a.0, b.0);
            prop_assert_eq!(a.1.to_bits(), b.1.to_bits());
        }
    }

    #[test]
    fn ambiguation_noise_avoids_the_true_support(
        code in (8usize..48).prop_flat_map(sparse_code_strategy),
        seed in any::<u64>(),
    ) {
        let s_p = code.code_len() - code.nnz();
        let noise = NoiseModel::ternary();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let released = ambiguate(&code, s_p, &noise, &mut rng).unwrap();
        let support = code.support();
        let fresh: Vec<usize> = released
            .code()
            .support()
            .into_iter()
            .filter(|i| support.binary_search(i).is_err())
            .collect();
        prop_assert_eq!(fresh.len(), s_p);
        prop_assert_eq!(released.code().nnz(), code.code_len());
    }

    #[test]
    fn encode_nnz_is_min_of_budget_and_active_rows(
        cols in prop::collection::vec(-10.0f64..10.0, 4..32),
        s_x in 1usize..8,
    ) {
        let n = cols.len();
        let s_x = s_x.min(n);
        let t = SparsifyingTransform::new(
            DMatrix::identity(n, n),
            EncodingPolicy::TopS { s_x },
        ).unwrap();
        let x = nalgebra::DVector::from_vec(cols.clone());
        let code = encode(&t, &x.as_view()).unwrap();
        let active = cols.iter().filter(|v| **v != 0.0).count();
        prop_assert_eq!(code.nnz(), s_x.min(active));
    }

    #[test]
    fn support_overlap_ignores_values(
        a in (8usize..32).prop_flat_map(sparse_code_strategy),
        scale in (-1e3f64..1e3).prop_filter("well scaled", |v| v.abs() > 1e-3),
    ) {
        let rescaled = SparseCode::new(
            a.code_len(),
            a.entries().iter().map(|&(i, v)| (i, v * scale)).collect(),
        ).unwrap();
        let d = latent_distance_codes(LatentMetric::SupportOverlap, &a, &rescaled).unwrap();
        prop_assert_eq!(d, 0.0);
    }

    #[test]
    fn ball_grows_with_radius_and_knn_is_a_prefix(
        l in 8usize..24,
        m in 2usize..20,
        seed in any::<u64>(),
        r1 in 0.0f64..6.0,
        dr in 0.0f64..6.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::new();
        for id in 0..m {
            let dense = nalgebra::DVector::from_fn(l, |_, _| {
                use rand::Rng;
                rng.gen_range(-1.0f64..1.0)
            });
            let code = SparseCode::top_s_of_dense(&dense.as_view(), 3);
            prop_assume!(!code.is_empty());
            entries.push((id, AmbiguatedCode::from_parts(code, 0)));
        }
        let probe = entries[0].1.clone();

        let near = SearchIndex::new(entries.clone(), LatentMetric::MaskedEuclidean, r1, 0.0).unwrap();
        let far = SearchIndex::new(entries, LatentMetric::MaskedEuclidean, r1 + dr, 0.0).unwrap();
        let inner = near.ball_query(&probe).unwrap();
        let outer = far.ball_query(&probe).unwrap();
        for id in &inner {
            prop_assert!(outer.contains(id));
        }
        // ascending ids out of the ball query
        prop_assert!(inner.windows(2).all(|w| w[0] < w[1]));

        for k in 1..=3usize {
            let a = far.knn(&probe, k).unwrap();
            let b = far.knn(&probe, k + 1).unwrap();
            prop_assert_eq!(&a[..], &b[..a.len().min(b.len())]);
        }
    }

    #[test]
    fn fair_sample_stays_inside_the_neighborhood(
        ids in prop::collection::btree_set(0usize..1000, 1..40),
        seed in any::<u64>(),
    ) {
        let candidates: Vec<usize> = ids.into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pick = fair_sample(&candidates, &mut rng).unwrap();
        prop_assert!(candidates.contains(&pick.chosen_id));
        prop_assert_eq!(pick.neighborhood_size, candidates.len());
    }

    #[test]
    fn cluster_kl_is_nonnegative(
        n_dims in 2usize..12,
        k in 2usize..5,
        spread in 0.5f64..4.0,
        within in 0.1f64..2.0,
        seed in any::<u64>(),
    ) {
        let (x, labels) = sca_core::gen_clusters(n_dims, 8 * k, k, spread, within, seed).unwrap();
        let kl = sca_core::cluster_leakage_points(&x, &labels).unwrap();
        prop_assert!(kl >= 0.0, "smoothed histogram KL came out negative: {kl}");
    }

    #[test]
    fn purify_is_idempotent(
        code in (8usize..48).prop_flat_map(sparse_code_strategy),
        seed in any::<u64>(),
    ) {
        let free = code.code_len() - code.nnz();
        let noise = NoiseModel::from_codes(std::slice::from_ref(&code)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let released = ambiguate(&code, free / 2, &noise, &mut rng).unwrap();
        let key = code.support();
        let once = purify(&released, &key);
        let again = purify(&AmbiguatedCode::from_parts(once.clone(), 0), &key);
        prop_assert_eq!(once, again);
    }
}

#[test]
fn masked_distance_is_zero_on_identical_codes() {
    let code = SparseCode::new(10, vec![(1, 0.5), (4, -2.0)]).unwrap();
    for metric in [LatentMetric::SupportOverlap, LatentMetric::MaskedEuclidean] {
        assert_eq!(latent_distance_codes(metric, &code, &code).unwrap(), 0.0);
    }
}
