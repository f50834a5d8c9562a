use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use windcov::contour::{fit_centered_ellipse, level_set_points};
use windcov::inference::grid_lag_correlation;
use windcov::io::{read_csv_from, write_csv_to};
use windcov::synthesis::{covariance_matrix, export_covariance_surface, factorize_model, sample_field, sample_with_factor, SurfaceRow};
use windcov::{Angle, CovarianceModel, GridMeta, KernelFamily, Point, SiteSet};

fn unit_grid(n: usize) -> GridMeta {
    GridMeta { nx: n, ny: n, spacing: 1.0, origin: Point::new(0.0, 0.0) }
}

#[test]
fn empirical_covariance_converges_to_kernel() {
    let model = CovarianceModel::new(KernelFamily::Exponential, 1.5, 2.0, 0.1, 3.0, Angle::from_radians(0.7)).unwrap();
    let sites = SiteSet::grid(GridMeta { nx: 3, ny: 3, spacing: 0.8, origin: Point::new(-1.0, 2.0) }).unwrap();
    let k = covariance_matrix(&model, &sites);
    let factor = factorize_model(&model, &sites).unwrap();
    let n = sites.len();
    let draws = 800;
    let mut acc = vec![0.0; n * n];
    for seed in 0..draws {
        let s = sample_with_factor(&factor, &sites, &model, seed, 0.0).unwrap();
        let v = s.values();
        for i in 0..n {
            for j in 0..n {
                acc[i * n + j] += v[i] * v[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            let est = acc[i * n + j] / draws as f64;
            // Var(x_i x_j) = K_ii K_jj + K_ij^2 for a zero-mean Gaussian pair
            let se = ((k[(i, i)] * k[(j, j)] + k[(i, j)].powi(2)) / draws as f64).sqrt();
            assert!((est - k[(i, j)]).abs() <= 5.0 * se, "entry ({i},{j}): {est} vs {}", k[(i, j)]);
        }
    }
}

#[test]
fn nugget_dominated_field_is_uncorrelated() {
    let model = CovarianceModel::new(KernelFamily::Gaussian, 1e-8, 1.0, 1.0, 1.0, Angle::from_radians(0.0)).unwrap();
    let meta = unit_grid(20);
    let sites = SiteSet::grid(meta).unwrap();
    let s = sample_field(&model, &sites, 4, 2.0).unwrap();
    let r = grid_lag_correlation(&[s.values()], &meta, (1, 0)).unwrap();
    // 380 pairs, standard error about 0.05
    assert!(r.abs() < 0.2, "{r}");
    let mean = s.values().iter().sum::<f64>() / s.len() as f64;
    assert!((mean - 2.0).abs() < 0.25, "{mean}");
}

#[test]
fn lag_one_correlation_follows_the_wind_axis() {
    let phi = 2.0;
    let nugget = 0.01;
    let model = CovarianceModel::new(KernelFamily::Gaussian, 1.0, phi, nugget, 4.0, Angle::from_radians(0.0)).unwrap();
    let meta = unit_grid(30);
    let sites = SiteSet::grid(meta).unwrap();
    let factor = factorize_model(&model, &sites).unwrap();
    let fields: Vec<Vec<f64>> = (0..200).map(|seed| sample_with_factor(&factor, &sites, &model, seed, 0.0).unwrap().values().to_vec()).collect();
    let refs: Vec<&[f64]> = fields.iter().map(Vec::as_slice).collect();
    let along = grid_lag_correlation(&refs, &meta, (1, 0)).unwrap();
    let across = grid_lag_correlation(&refs, &meta, (0, 1)).unwrap();
    let total = 1.0 + nugget;
    let expect_along = (-1.0 / (16.0 * phi)).exp() / total;
    let expect_across = (-1.0 / phi).exp() / total;
    assert!(along > across);
    assert!((along - expect_along).abs() < 0.03, "{along} vs {expect_along}");
    assert!((across - expect_across).abs() < 0.03, "{across} vs {expect_across}");
}

#[test]
fn stretched_grid_factorizes_for_every_family() {
    let sites = SiteSet::grid(unit_grid(10)).unwrap();
    for family in KernelFamily::ALL {
        let m = CovarianceModel::new(family, 1.0, 2.0, 0.0, 4.5, Angle::from_radians(PI / 12.0)).unwrap();
        let f = factorize_model(&m, &sites).unwrap();
        assert!(f.jitter <= 1e-8, "{family}: {}", f.jitter);
    }
}

#[test]
fn kernel_matrices_are_positive_semidefinite() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let sites = SiteSet::grid(unit_grid(10)).unwrap();
    for _ in 0..30 {
        let family = KernelFamily::ALL[rng.random_range(0..3)];
        let sigma2 = rng.random_range(0.1..5.0);
        let m = CovarianceModel::new(family, sigma2, rng.random_range(0.3..5.0), 0.0, rng.random_range(0.1..10.0), Angle::from_radians(rng.random_range(0.0..PI)))
            .unwrap();
        let k = covariance_matrix(&m, &sites);
        let min = k.symmetric_eigenvalues().min();
        assert!(min >= -1e-8 * sigma2, "{m:?}: {min}");
    }
}

#[test]
fn exponential_level_set_is_the_stretched_ellipse() {
    let model = CovarianceModel::new(KernelFamily::Exponential, 1.0, 1.0, 0.0, 3.0, Angle::from_radians(PI / 12.0)).unwrap();
    let meta = GridMeta::centered(161, 0.05);
    let grid = SiteSet::grid(meta).unwrap();
    let rows = export_covariance_surface(&model, &grid).unwrap();
    let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let e = fit_centered_ellipse(&level_set_points(&values, &meta, (-1f64).exp()).unwrap()).unwrap();
    assert!((e.axis_ratio() - 3.0).abs() < 0.05, "{e:?}");
    assert!((e.major_angle - PI / 12.0).abs() < 0.02, "{e:?}");
    assert!((e.semi_minor - 1.0).abs() < 0.02, "{e:?}");
}

fn model_strategy() -> impl Strategy<Value = CovarianceModel> {
    (0usize..3, 0.1f64..5.0, 0.1f64..5.0, 0.0f64..1.0, 0.1f64..10.0, 0.0f64..(2.0 * PI))
        .prop_map(|(f, s, p, n, g, t)| CovarianceModel::new(KernelFamily::ALL[f], s, p, n, g, Angle::from_radians(t)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn permuting_sites_permutes_the_matrix(model in model_strategy(), seed in any::<u64>()) {
        let sites = SiteSet::grid(GridMeta { nx: 4, ny: 3, spacing: 0.7, origin: Point::new(-1.0, 0.5) }).unwrap();
        let mut perm: Vec<usize> = (0..sites.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let k = covariance_matrix(&model, &sites);
        let kp = covariance_matrix(&model, &sites.permuted(&perm).unwrap());
        for i in 0..perm.len() {
            for j in 0..perm.len() {
                prop_assert_eq!(kp[(i, j)], k[(perm[i], perm[j])]);
            }
        }
    }

    #[test]
    fn exported_surface_round_trips_bitwise(model in model_strategy(), n in 2usize..12, spacing in 0.01f64..3.0) {
        let grid = SiteSet::grid(GridMeta::centered(n, spacing)).unwrap();
        let rows = export_covariance_surface(&model, &grid).unwrap();
        let mut buf = Vec::new();
        write_csv_to(&mut buf, &rows).unwrap();
        let back: Vec<SurfaceRow> = read_csv_from(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in back.iter().zip(&rows) {
            prop_assert_eq!(a.x.to_bits(), b.x.to_bits());
            prop_assert_eq!(a.y.to_bits(), b.y.to_bits());
            prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
        }
    }
}
