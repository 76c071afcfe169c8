//! End-to-end owner/user round trip on synthetic data: learn a transform,
//! encode one point, hide its support with decoys, then recover the clean
//! code with the support key.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sca_core::{
    ambiguate, encode, learn_transform, purify, synthesize, LearningConfig, NoiseModel,
    SyntheticKind, SyntheticSpec,
};

fn main() -> sca_core::Result<()> {
    let spec = SyntheticSpec {
        kind: SyntheticKind::IidGaussian { sigma_x: 1.0 },
        n_dims: 16,
        n_points: 200,
        rng_seed: 7,
    };
    let (x, _) = synthesize(&spec)?;
    let cfg = LearningConfig {
        s_x: 4,
        ..Default::default()
    };
    let learned = learn_transform(&x, 24, &cfg)?;

    let code = encode(&learned.transform, &x.column(0))?;
    let noise = NoiseModel::from_codebook(&learned.codebook)?;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let released = ambiguate(&code, 10, &noise, &mut rng)?;
    assert_eq!(purify(&released, &code.support()), code);

    println!(
        "clean support {:?} hidden among {} released entries; purification recovered it exactly",
        code.support(),
        released.code().nnz()
    );
    Ok(())
}
