use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use relevant_fts::cov_tests::covariance_estimate;
use relevant_fts::dgp::{
    draw_theta, inject_change, kraus_cov_norm_sq, make_mean, sample_fma1_with_operator, sample_kraus_t5, simulate,
    BasisFamily, BasisSpec, DgpSpec, Innovation, MeanSpec, Process, SigmaProfile,
};
use relevant_fts::func_core::{Curve, FunctionalSample, Grid};

fn spec(process: Process, family: BasisFamily, dimension: usize, n: usize, seed: u64) -> DgpSpec {
    DgpSpec {
        process,
        basis: BasisSpec::new(family, dimension, Grid::default()).unwrap(),
        n,
        seed,
        ..DgpSpec::default()
    }
}

/// Least-squares basis coefficients of every curve, row-major `n x D`.
fn recover_coefficients(sample: &FunctionalSample, basis: &BasisSpec) -> Vec<Vec<f64>> {
    let r = basis.grid.resolution();
    let d = basis.dimension;
    let b = basis.evaluate();
    let design = DMatrix::from_fn(r, d, |t, i| b[i * r + t]);
    let pinv = design.pseudo_inverse(1e-12).unwrap();
    sample
        .curves()
        .map(|x| {
            let c = &pinv * nalgebra::DVector::from_column_slice(x);
            c.iter().copied().collect()
        })
        .collect()
}

fn variance(xs: impl Iterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.collect();
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
}

fn process_strategy() -> impl Strategy<Value = Process> {
    prop_oneof![
        Just(Process::IidBasis),
        Just(Process::Fma1),
        Just(Process::Far1),
        Just(Process::BrownianBridge),
        Just(Process::HeavyT5Basis),
        Just(Process::KrausT5),
        Just(Process::CovScenario),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn same_seed_reproduces_the_sample(process in process_strategy(), seed in any::<u64>(), n in 1usize..20) {
        let s = DgpSpec { kappa: 0.5, ..spec(process, BasisFamily::Bspline, 7, n, seed) };
        let a = simulate(&s).unwrap();
        let b = simulate(&s).unwrap();
        prop_assert_eq!(a.as_flat(), b.as_flat());
        let c = simulate(&DgpSpec { seed: seed.wrapping_add(1), ..s }).unwrap();
        prop_assert_ne!(a.as_flat(), c.as_flat());
    }

    #[test]
    fn operator_has_the_target_spectral_norm(
        seed in any::<u64>(),
        d in 1usize..12,
        kappa in 0.05f64..3.0,
        target in 0.1f64..2.0,
    ) {
        let sd: Vec<f64> = (1..=d).map(|i| 1.0 / i as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let op = draw_theta(&mut rng, &sd, kappa, target).unwrap();
        let m = DMatrix::from_row_slice(d, d, &op.entries);
        let largest = m.singular_values().max();
        prop_assert!((largest - target).abs() <= 1e-8 * target, "{} vs {}", largest, target);
    }

    #[test]
    fn mean_enters_additively(process in process_strategy(), seed in any::<u64>(), delta in 0.0f64..2.0) {
        prop_assume!(process != Process::CovScenario);
        let base = DgpSpec { kappa: 0.5, ..spec(process, BasisFamily::Fourier, 5, 8, seed) };
        let shifted = DgpSpec { mean: MeanSpec::SinSqrt2Delta(delta), ..base.clone() };
        let a = simulate(&base).unwrap();
        let b = simulate(&shifted).unwrap();
        let mu = make_mean(MeanSpec::SinSqrt2Delta(delta), base.basis.grid).unwrap();
        for (x, y) in a.curves().zip(b.curves()) {
            for ((u, v), m) in x.iter().zip(y).zip(mu.values()) {
                prop_assert!((v - u - m).abs() <= 1e-12 * (1.0 + u.abs() + m.abs()));
            }
        }
    }

    #[test]
    fn injected_change_keeps_the_head_and_maps_the_tail(
        seed in any::<u64>(),
        n in 2usize..40,
        theta0 in 0.01f64..0.99,
        scale in -3.0f64..3.0,
        a in -2.0f64..2.0,
    ) {
        let errors = simulate(&spec(Process::IidBasis, BasisFamily::Bspline, 5, n, seed)).unwrap();
        let grid = errors.grid();
        let shift = Curve::from_fn(grid, |t| a * t * (1.0 - t));
        let k = (n as f64 * theta0).floor() as usize;
        let out = inject_change(&errors, theta0, scale, &shift);
        if k == 0 || k == n {
            prop_assert!(out.is_err());
            return Ok(());
        }
        let out = out.unwrap();
        prop_assert_eq!(out.n(), n);
        for j in 0..n {
            let (x, y) = (errors.curve(j), out.curve(j));
            for i in 0..grid.resolution() {
                let want = if j < k { x[i] } else { scale * x[i] + shift.values()[i] };
                prop_assert!((y[i] - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }
    }
}

#[test]
fn fma_lag_one_covariance_is_operator_times_innovation_covariance() {
    let s = DgpSpec {
        kappa: 1.0,
        ..spec(Process::Fma1, BasisFamily::Fourier, 3, 100_000, 5)
    };
    let (sample, op) = sample_fma1_with_operator(&s).unwrap();
    let op = op.unwrap();
    let c = recover_coefficients(&sample, &s.basis);
    let sigma2 = SigmaProfile::InvISq.variances(3).unwrap();
    let n = c.len();
    for a in 0..3 {
        for b in 0..3 {
            let emp = (1..n).map(|j| c[j][a] * c[j - 1][b]).sum::<f64>() / (n - 1) as f64;
            let want = op.entries[a * 3 + b] * sigma2[b];
            assert!((emp - want).abs() < 0.02, "lag-1 ({a},{b}): {emp} vs {want}");
        }
    }
}

#[test]
fn far_coefficients_have_stationary_variance() {
    let kappa = 0.5;
    let s = DgpSpec {
        kappa,
        ..spec(Process::Far1, BasisFamily::Fourier, 3, 100_000, 9)
    };
    let c = recover_coefficients(&simulate(&s).unwrap(), &s.basis);
    for (i, s2) in SigmaProfile::InvISq.variances(3).unwrap().iter().enumerate() {
        let v = variance(c.iter().map(|row| row[i]));
        let want = s2 / (1.0 - kappa * kappa);
        assert!((v / want - 1.0).abs() < 0.03, "coefficient {i}: {v} vs {want}");
    }
}

#[test]
fn heavy_tailed_coefficients_have_the_profile_variance() {
    let s = DgpSpec {
        innovation: Innovation::StudentT5,
        ..spec(Process::HeavyT5Basis, BasisFamily::Fourier, 4, 100_000, 13)
    };
    let c = recover_coefficients(&simulate(&s).unwrap(), &s.basis);
    for (i, s2) in SigmaProfile::InvISq.variances(4).unwrap().iter().enumerate() {
        let v = variance(c.iter().map(|row| row[i]));
        assert!((v / s2 - 1.0).abs() < 0.05, "coefficient {i}: {v} vs {s2}");
    }
}

#[test]
fn bridge_pointwise_variance_is_t_times_one_minus_t() {
    let n = 20_000;
    let s = spec(Process::BrownianBridge, BasisFamily::Bspline, 1, n, 21);
    let sample = simulate(&s).unwrap();
    let pts = s.basis.grid.points();
    for (i, t) in pts.iter().enumerate() {
        let v = variance(sample.curves().map(|x| x[i]));
        let want = t * (1.0 - t);
        let tol = 5.0 * (2.0 / n as f64).sqrt() * want + 1e-12;
        assert!((v - want).abs() <= tol, "t = {t}: {v} vs {want}");
    }
}

#[test]
fn kraus_covariance_norm_matches_closed_form() {
    use std::f64::consts::PI;
    let grid = Grid::new(201).unwrap();
    let pts = grid.points();
    let r = pts.len();
    let w = grid.trapezoid_weights();
    let cov = |s: f64, t: f64| {
        (1..=10)
            .map(|k| {
                let kf = k as f64;
                let a = 2.0 * PI * kf;
                2.0 * (kf.powi(-3) * (a * s).sin() * (a * t).sin() + 3f64.powi(-k) * (a * s).cos() * (a * t).cos())
            })
            .sum::<f64>()
            / 10.0
    };
    let mut exact = 0.0;
    for a in 0..r {
        for b in 0..r {
            exact += w[a] * w[b] * cov(pts[a], pts[b]).powi(2);
        }
    }
    assert!(
        (exact - kraus_cov_norm_sq()).abs() < 1e-10,
        "{exact} vs {}",
        kraus_cov_norm_sq()
    );

    let n = 20_000;
    let sample = sample_kraus_t5(n, Grid::default(), 3, 1.0).unwrap();
    let est = covariance_estimate(&sample, 1, n).unwrap().norm_sq();
    assert!(
        (est / kraus_cov_norm_sq() - 1.0).abs() < 0.05,
        "{est} vs {}",
        kraus_cov_norm_sq()
    );
}
