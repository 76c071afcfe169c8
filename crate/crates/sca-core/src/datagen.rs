//! Seeded synthetic data: i.i.d. Gaussian points, stationary AR(1) points
//! with correlated coordinates, labeled Gaussian clusters, and the two query
//! models (noisy copy of a stored point vs. an independent fresh draw).
//!
//! Every generator derives one RNG stream per column from the base seed, so
//! the output is reproducible bit for bit and independent of any evaluation
//! order a caller might choose.
//!
//! Scale conventions, chosen once and used everywhere:
//! * `sigma_x` is a *variance*: i.i.d. Gaussian entries have variance
//!   `sigma_x`.
//! * `sigma` (AR(1) innovation) and `sigma_z` (query noise) are *standard
//!   deviations*.

use nalgebra::{DMatrix, DVector, DVectorView};
use rand::distributions::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::matrix::{derive_seed, DataMatrix};

/// Distribution family for a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticKind {
    /// Independent entries with variance `sigma_x`.
    IidGaussian { sigma_x: f64 },
    /// Stationary first-order autoregression down each column:
    /// `x[0] ~ N(0, sigma^2 / (1 - rho^2))`, `x[i+1] = rho*x[i] + N(0, sigma^2)`.
    Ar1 { rho: f64, sigma: f64 },
    /// `k` Gaussian blobs; centers have i.i.d. `N(0, center_spread^2)`
    /// coordinates, points scatter around them with std `within_sigma`.
    GaussianClusters {
        k: usize,
        center_spread: f64,
        within_sigma: f64,
    },
}

/// Full description of a synthetic dataset, including its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n_dims: usize,
    pub n_points: usize,
    pub rng_seed: u64,
}

fn check_shape(n_dims: usize, n_points: usize) -> Result<()> {
    if n_dims == 0 {
        return Err(Error::InvalidParameter {
            name: "n_dims",
            reason: "must be at least 1".into(),
        });
    }
    if n_points == 0 {
        return Err(Error::InvalidParameter {
            name: "n_points",
            reason: "must be at least 1".into(),
        });
    }
    Ok(())
}

fn column_rng(seed: u64, m: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, m as u64))
}

/// Points with i.i.d. `N(0, sigma_x)` entries (`sigma_x` is the variance).
pub fn gen_gaussian(n_dims: usize, n_points: usize, sigma_x: f64, seed: u64) -> Result<DataMatrix> {
    check_shape(n_dims, n_points)?;
    if !sigma_x.is_finite() || sigma_x <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "sigma_x",
            reason: format!("variance must be positive and finite, got {sigma_x}"),
        });
    }
    let std = sigma_x.sqrt();
    let mut out = DMatrix::zeros(n_dims, n_points);
    for m in 0..n_points {
        let mut rng = column_rng(seed, m);
        for i in 0..n_dims {
            let g: f64 = StandardNormal.sample(&mut rng);
            out[(i, m)] = std * g;
        }
    }
    DataMatrix::new(out)
}

/// Stationary AR(1) columns with coefficient `rho` and innovation standard
/// deviation `sigma`.
pub fn gen_ar1(
    n_dims: usize,
    n_points: usize,
    rho: f64,
    sigma: f64,
    seed: u64,
) -> Result<DataMatrix> {
    check_shape(n_dims, n_points)?;
    if !rho.is_finite() || rho.abs() >= 1.0 {
        return Err(Error::InvalidParameter {
            name: "rho",
            reason: format!("|rho| must be < 1 for a stationary process, got {rho}"),
        });
    }
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "sigma",
            reason: format!("innovation std must be positive and finite, got {sigma}"),
        });
    }
    let stationary_std = sigma / (1.0 - rho * rho).sqrt();
    let mut out = DMatrix::zeros(n_dims, n_points);
    for m in 0..n_points {
        let mut rng = column_rng(seed, m);
        let g0: f64 = StandardNormal.sample(&mut rng);
        out[(0, m)] = stationary_std * g0;
        for i in 1..n_dims {
            let g: f64 = StandardNormal.sample(&mut rng);
            out[(i, m)] = rho * out[(i - 1, m)] + sigma * g;
        }
    }
    DataMatrix::new(out)
}

/// `k` labeled Gaussian blobs. Returns the points and a label per column;
/// point `m` belongs to cluster `m % k`, so every cluster is populated when
/// `n_points >= k`.
pub fn gen_clusters(
    n_dims: usize,
    n_points: usize,
    k: usize,
    center_spread: f64,
    within_sigma: f64,
    seed: u64,
) -> Result<(DataMatrix, Vec<usize>)> {
    check_shape(n_dims, n_points)?;
    if k == 0 || k > n_points {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: format!("cluster count must be in 1..={n_points}, got {k}"),
        });
    }
    if !center_spread.is_finite() || center_spread <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "center_spread",
            reason: format!("must be positive and finite, got {center_spread}"),
        });
    }
    if !within_sigma.is_finite() || within_sigma < 0.0 {
        return Err(Error::InvalidParameter {
            name: "within_sigma",
            reason: format!("must be nonnegative and finite, got {within_sigma}"),
        });
    }
    // centers get their own stream, far away from the per-column streams
    let mut center_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    let centers: Vec<DVector<f64>> = (0..k)
        .map(|_| {
            DVector::from_fn(n_dims, |_, _| {
                let g: f64 = StandardNormal.sample(&mut center_rng);
                center_spread * g
            })
        })
        .collect();
    let mut out = DMatrix::zeros(n_dims, n_points);
    let mut labels = Vec::with_capacity(n_points);
    for m in 0..n_points {
        let label = m % k;
        labels.push(label);
        let mut rng = column_rng(seed, m);
        for i in 0..n_dims {
            let g: f64 = StandardNormal.sample(&mut rng);
            out[(i, m)] = centers[label][i] + within_sigma * g;
        }
    }
    Ok((DataMatrix::new(out)?, labels))
}

/// Noisy copy of a stored point: `y = x + z` with i.i.d. `N(0, sigma_z^2)`
/// noise (`sigma_z` is a standard deviation; `0` returns `x` unchanged).
pub fn gen_authorized_query<R: Rng>(
    x: &DVectorView<'_, f64>,
    sigma_z: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if !sigma_z.is_finite() || sigma_z < 0.0 {
        return Err(Error::InvalidParameter {
            name: "sigma_z",
            reason: format!("noise std must be nonnegative and finite, got {sigma_z}"),
        });
    }
    let mut y = x.into_owned();
    if sigma_z > 0.0 {
        for v in y.iter_mut() {
            let g: f64 = StandardNormal.sample(rng);
            *v += sigma_z * g;
        }
    }
    Ok(y)
}

/// Fresh Gaussian query unrelated to the database; entries have variance
/// `sigma_x` to match [`gen_gaussian`].
pub fn gen_unauthorized_query<R: Rng>(
    n_dims: usize,
    sigma_x: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if n_dims == 0 {
        return Err(Error::InvalidParameter {
            name: "n_dims",
            reason: "must be at least 1".into(),
        });
    }
    if !sigma_x.is_finite() || sigma_x <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "sigma_x",
            reason: format!("variance must be positive and finite, got {sigma_x}"),
        });
    }
    let std = sigma_x.sqrt();
    Ok(DVector::from_fn(n_dims, |_, _| {
        let g: f64 = StandardNormal.sample(rng);
        std * g
    }))
}

/// Dispatches on the spec kind. Cluster labels are `Some` only for
/// [`SyntheticKind::GaussianClusters`].
pub fn synthesize(spec: &SyntheticSpec) -> Result<(DataMatrix, Option<Vec<usize>>)> {
    match &spec.kind {
        SyntheticKind::IidGaussian { sigma_x } => {
            Ok((gen_gaussian(spec.n_dims, spec.n_points, *sigma_x, spec.rng_seed)?, None))
        }
        SyntheticKind::Ar1 { rho, sigma } => Ok((
            gen_ar1(spec.n_dims, spec.n_points, *rho, *sigma, spec.rng_seed)?,
            None,
        )),
        SyntheticKind::GaussianClusters {
            k,
            center_spread,
            within_sigma,
        } => {
            let (x, labels) = gen_clusters(
                spec.n_dims,
                spec.n_points,
                *k,
                *center_spread,
                *within_sigma,
                spec.rng_seed,
            )?;
            Ok((x, Some(labels)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, sample_variance};

    fn flat(x: &DataMatrix) -> Vec<f64> {
        x.as_dmatrix().iter().copied().collect()
    }

    #[test]
    fn gaussian_moments_match_request() {
        // 1e5 entries; sample variance of a Gaussian is within 5% w.h.p.
        let x = gen_gaussian(100, 1000, 1.0, 7).unwrap();
        let v = flat(&x);
        assert!(mean(&v).abs() < 0.02);
        let var = sample_variance(&v);
        assert!((var - 1.0).abs() < 0.05, "variance {var} not within 5% of 1");

        // sigma_x is a variance, not a std
        let x2 = gen_gaussian(100, 1000, 2.0, 7).unwrap();
        let var2 = sample_variance(&flat(&x2));
        assert!((var2 - 2.0).abs() < 0.1, "variance {var2} not within 5% of 2");
    }

    #[test]
    fn gaussian_rejects_bad_params() {
        assert!(gen_gaussian(0, 10, 1.0, 0).is_err());
        assert!(gen_gaussian(10, 0, 1.0, 0).is_err());
        assert!(gen_gaussian(10, 10, 0.0, 0).is_err());
        assert!(gen_gaussian(10, 10, -1.0, 0).is_err());
    }

    #[test]
    fn gaussian_is_deterministic_per_seed() {
        let a = gen_gaussian(16, 64, 1.0, 123).unwrap();
        let b = gen_gaussian(16, 64, 1.0, 123).unwrap();
        assert_eq!(a, b);
        let c = gen_gaussian(16, 64, 1.0, 124).unwrap();
        assert_ne!(a, c);
    }

    fn lagged_corr(x: &DataMatrix, lag: usize) -> f64 {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for m in 0..x.n_points() {
            for i in 0..x.n_dims() - lag {
                a.push(x.column(m)[i]);
                b.push(x.column(m)[i + lag]);
            }
        }
        let ma = mean(&a);
        let mb = mean(&b);
        let cov: f64 = a.iter().zip(&b).map(|(u, v)| (u - ma) * (v - mb)).sum::<f64>() / a.len() as f64;
        let va = sample_variance(&a);
        let vb = sample_variance(&b);
        cov / (va * vb).sqrt()
    }

    #[test]
    fn ar1_has_geometric_autocorrelation() {
        let x = gen_ar1(200, 500, 0.5, 1.0, 11).unwrap();
        let r1 = lagged_corr(&x, 1);
        let r2 = lagged_corr(&x, 2);
        assert!((r1 - 0.5).abs() < 0.05, "lag-1 correlation {r1}");
        assert!((r2 - 0.25).abs() < 0.05, "lag-2 correlation {r2}");
        // stationary variance sigma^2 / (1 - rho^2) = 4/3
        let var = sample_variance(&flat(&x));
        assert!((var - 4.0 / 3.0).abs() < 0.05 * (4.0 / 3.0), "variance {var}");
    }

    #[test]
    fn ar1_with_zero_rho_is_white() {
        let x = gen_ar1(200, 500, 0.0, 1.0, 5).unwrap();
        assert!(lagged_corr(&x, 1).abs() < 0.02);
    }

    #[test]
    fn ar1_rejects_nonstationary_rho() {
        assert!(gen_ar1(8, 8, 1.0, 1.0, 0).is_err());
        assert!(gen_ar1(8, 8, -1.5, 1.0, 0).is_err());
        assert!(gen_ar1(8, 8, 0.5, 0.0, 0).is_err());
    }

    #[test]
    fn authorized_query_noise_energy_matches() {
        use rand::SeedableRng;
        let x = gen_gaussian(64, 1, 1.0, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let sigma_z = 0.3;
        let trials = 2000;
        let mut total = 0.0;
        for _ in 0..trials {
            let y = gen_authorized_query(&x.column(0), sigma_z, &mut rng).unwrap();
            total += (y - x.column_owned(0)).norm_squared();
        }
        let mean_energy = total / trials as f64;
        let expected = 64.0 * sigma_z * sigma_z;
        assert!(
            (mean_energy - expected).abs() < 0.05 * expected,
            "noise energy {mean_energy} vs expected {expected}"
        );
    }

    #[test]
    fn authorized_query_with_zero_noise_is_identity() {
        use rand::SeedableRng;
        let x = gen_gaussian(16, 1, 1.0, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = gen_authorized_query(&x.column(0), 0.0, &mut rng).unwrap();
        assert_eq!(y, x.column_owned(0));
    }

    #[test]
    fn unauthorized_query_is_uncorrelated_with_data() {
        use rand::SeedableRng;
        let x = gen_gaussian(2000, 1, 1.0, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let y = gen_unauthorized_query(2000, 1.0, &mut rng).unwrap();
        let xs: Vec<f64> = x.column(0).iter().copied().collect();
        let ys: Vec<f64> = y.iter().copied().collect();
        let mx = mean(&xs);
        let my = mean(&ys);
        let cov: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / xs.len() as f64;
        assert!(cov.abs() < 0.05, "cross-covariance {cov}");
    }

    #[test]
    fn clusters_collapse_to_centers_at_zero_sigma() {
        let (x, labels) = gen_clusters(8, 12, 3, 1.0, 0.0, 21).unwrap();
        assert_eq!(labels.len(), 12);
        assert!(labels.iter().all(|&l| l < 3));
        for l in 0..3 {
            assert!(labels.iter().filter(|&&v| v == l).count() >= 2);
        }
        // all points with the same label coincide exactly
        for m in 0..12 {
            for m2 in 0..12 {
                if labels[m] == labels[m2] {
                    assert_eq!(x.column_owned(m), x.column_owned(m2));
                }
            }
        }
    }

    #[test]
    fn cluster_centers_are_well_separated_by_default_scales() {
        let (x, labels) = gen_clusters(32, 120, 4, 1.0, 0.1, 2).unwrap();
        // recover empirical centers and check mean pairwise separation
        let mut centers = vec![DVector::zeros(32); 4];
        let mut counts = [0usize; 4];
        for m in 0..x.n_points() {
            centers[labels[m]] += x.column_owned(m);
            counts[labels[m]] += 1;
        }
        for (c, n) in centers.iter_mut().zip(counts) {
            *c /= n as f64;
        }
        let mut dists = Vec::new();
        for i in 0..4 {
            for j in i + 1..4 {
                dists.push((&centers[i] - &centers[j]).norm());
            }
        }
        let mean_sep = mean(&dists);
        assert!(mean_sep > 5.0 * 0.1, "separation {mean_sep} too small");
    }

    #[test]
    fn synthesize_dispatches_labels_only_for_clusters() {
        let spec = SyntheticSpec {
            kind: SyntheticKind::IidGaussian { sigma_x: 1.0 },
            n_dims: 4,
            n_points: 5,
            rng_seed: 0,
        };
        let (_, labels) = synthesize(&spec).unwrap();
        assert!(labels.is_none());
        let spec = SyntheticSpec {
            kind: SyntheticKind::GaussianClusters {
                k: 2,
                center_spread: 1.0,
                within_sigma: 0.5,
            },
            ..spec
        };
        let (_, labels) = synthesize(&spec).unwrap();
        assert_eq!(labels.unwrap().len(), 5);
    }
}
