//! Relevant tests for covariance operators.
//!
//! Every distance is a tensor-trapezoid integral `∬ D(s, t)² ds dt` of a
//! difference of empirical covariance surfaces. The `*_direct` functions and
//! the surface builders evaluate these definitions literally; the test
//! procedures use packed scatter accumulators that give the same numbers up
//! to rounding at a fraction of the cost.

mod scatter;

use crate::changepoint::{admissible_range, ChangePointFit};
use crate::error::{Error, Result};
use crate::func_core::{floor_count, self_normalizer, FunctionalSample, LambdaProfile, NuMeasure, Surface};
use crate::mean_tests::{Direction, TestConfig, TestOutcome};
use scatter::{frobenius_diff, window_snapshots, Scatter, Weighted};

/// Smallest admissible support point of ν for the covariance tests.
pub const NU_FLOOR: f64 = 0.05;

/// ν must put no mass near zero.
pub fn check_nu_floor(nu: &NuMeasure, floor: f64) -> Result<()> {
    let min = nu.min_support();
    if min < floor - 1e-12 {
        return Err(Error::NuBelowFloor { min, floor });
    }
    Ok(())
}

/// `Σ_{j ∈ window} (X_j − mean)(X_j − mean)ᵀ / divisor` with the mean taken
/// over the window itself; windows with fewer than two curves give zero.
fn window_covariance(sample: &FunctionalSample, start: usize, len: usize, divisor: f64) -> Surface {
    let grid = sample.grid();
    let r = grid.resolution();
    let mut out = Surface::zeros(grid);
    if len < 2 {
        return out;
    }
    let mean: Vec<f64> = sample
        .window_sum(start, start + len)
        .iter()
        .map(|v| v / len as f64)
        .collect();
    let vals = out.values_mut();
    let mut res = vec![0.0; r];
    for j in start..start + len {
        for ((e, x), m) in res.iter_mut().zip(sample.curve(j)).zip(&mean) {
            *e = x - m;
        }
        for a in 0..r {
            for b in 0..r {
                vals[a * r + b] += res[a] * res[b];
            }
        }
    }
    vals.iter_mut().for_each(|v| *v /= divisor);
    out
}

fn check_two(sample: &FunctionalSample, what: &str) -> Result<()> {
    if sample.n() < 2 {
        return Err(Error::SegmentTooShort(format!(
            "{what} needs at least 2 curves, got {}",
            sample.n()
        )));
    }
    Ok(())
}

/// `(1/(m−1)) Σ_{j ≤ ⌊mλ⌋} (X_j − X̄)(X_j − X̄)ᵀ`, `X̄` the mean of the first `⌊mλ⌋ ∨ 1` curves.
pub fn centered_cov_partial(x: &FunctionalSample, lambda: f64) -> Result<Surface> {
    check_two(x, "centered covariance")?;
    let k = floor_count(x.n(), lambda);
    Ok(window_covariance(x, 0, k, (x.n() - 1) as f64))
}

/// Empirical covariance `Ĉ_{from:to}` (1-based, inclusive) with divisor `to − from`.
pub fn covariance_estimate(sample: &FunctionalSample, from_index: usize, to_index: usize) -> Result<Surface> {
    if from_index < 1 || to_index > sample.n() || to_index <= from_index {
        return Err(Error::IndexOutOfRange {
            from: from_index,
            to: to_index,
            n: sample.n(),
        });
    }
    let len = to_index - from_index + 1;
    Ok(window_covariance(sample, from_index - 1, len, (len - 1) as f64))
}

/// `D_{m,n}(·, ·, λ)`: difference of the two partial covariance surfaces.
pub fn cov_two_sample_contrast(x: &FunctionalSample, y: &FunctionalSample, lambda: f64) -> Result<Surface> {
    centered_cov_partial(x, lambda)?.sub(&centered_cov_partial(y, lambda)?)
}

/// `λ -> ∬ D_{m,n}(s, t, λ)²` from explicit surfaces.
pub fn cov_two_sample_profile_direct(
    x: &FunctionalSample,
    y: &FunctionalSample,
    nu: &NuMeasure,
) -> Result<LambdaProfile> {
    cov_two_sample_contrast(x, y, 1.0)?;
    Ok(LambdaProfile::tabulate(nu, |l| {
        cov_two_sample_contrast(x, y, l).expect("inputs checked").norm_sq()
    }))
}

/// Lambda values of a profile: the atoms of ν followed by 1.
fn lambdas(nu: &NuMeasure) -> Vec<f64> {
    nu.support().iter().copied().chain(std::iter::once(1.0)).collect()
}

fn profile_from(nu: &NuMeasure, values: &[f64]) -> LambdaProfile {
    let mut p = LambdaProfile::new(*values.last().expect("λ = 1 is always present"));
    for (&l, &v) in nu.support().iter().zip(values) {
        p.insert(l, v);
    }
    p
}

/// Same profile as [`cov_two_sample_profile_direct`], via scatter accumulators.
pub fn cov_two_sample_profile(x: &FunctionalSample, y: &FunctionalSample, nu: &NuMeasure) -> Result<LambdaProfile> {
    check_two(x, "first sample")?;
    check_two(y, "second sample")?;
    x.grid().check_same(&y.grid())?;
    let ls = lambdas(nu);
    let snaps = |s: &FunctionalSample| {
        let w = Weighted::new(s);
        let counts: Vec<usize> = ls.iter().map(|&l| floor_count(s.n(), l)).collect();
        window_snapshots(&w, 0, &counts, (s.n() - 1) as f64)
    };
    let (sx, sy) = (snaps(x), snaps(y));
    let r = x.grid().resolution();
    let values: Vec<f64> = sx.iter().zip(&sy).map(|(a, b)| frobenius_diff(r, a, b)).collect();
    Ok(profile_from(nu, &values))
}

pub fn cov_two_sample_test_with_floor(
    x: &FunctionalSample,
    y: &FunctionalSample,
    config: &TestConfig,
    nu_floor: f64,
) -> Result<TestOutcome> {
    config.validate()?;
    check_nu_floor(&config.nu, nu_floor)?;
    let profile = cov_two_sample_profile(x, y, &config.nu)?;
    let v = self_normalizer(&profile, &config.nu, config.normalizer_kind)?;
    TestOutcome::from_parts("cov-two-sample", profile.at_one(), v, config, Direction::Relevant)
}

/// Test of `∬ (C^X − C^Y)² ≤ Δ`.
pub fn cov_two_sample_test(x: &FunctionalSample, y: &FunctionalSample, config: &TestConfig) -> Result<TestOutcome> {
    cov_two_sample_test_with_floor(x, y, config, NU_FLOOR)
}

/// Admissible split indices: the trimmed range intersected with `2..=N−2`.
pub fn cov_admissible_range(n: usize, trim: f64) -> Result<std::ops::RangeInclusive<usize>> {
    if n < 5 {
        return Err(Error::EmptyAdmissibleRange { n, trim });
    }
    let base = admissible_range(n, trim)?;
    let lo = (*base.start()).max(2);
    let hi = (*base.end()).min(n - 2);
    if lo > hi {
        return Err(Error::EmptyAdmissibleRange { n, trim });
    }
    Ok(lo..=hi)
}

/// `f^Cov(k) = (k/N)(1 − k/N) ∬ (Ĉ_{1:k} − Ĉ_{k+1:N})²` from explicit surfaces.
pub fn cov_cusum_profile_direct(sample: &FunctionalSample, trim: f64) -> Result<Vec<(usize, f64)>> {
    let n = sample.n();
    cov_admissible_range(n, trim)?
        .map(|k| {
            let d = covariance_estimate(sample, 1, k)?.sub(&covariance_estimate(sample, k + 1, n)?)?;
            let f = k as f64 / n as f64;
            Ok((k, f * (1.0 - f) * d.norm_sq()))
        })
        .collect()
}

/// Same profile as [`cov_cusum_profile_direct`], in one pass over the sample.
pub fn cov_cusum_profile(sample: &FunctionalSample, trim: f64) -> Result<Vec<(usize, f64)>> {
    let n = sample.n();
    let range = cov_admissible_range(n, trim)?;
    let w = Weighted::new(sample);
    let r = scatter::resolution(&w);
    let mut total = Scatter::new(&w);
    for j in 0..n {
        total.push(&w, j);
    }
    let mut head = Scatter::new(&w);
    let mut out = Vec::with_capacity(range.clone().count());
    for k in range {
        while head.count < k {
            head.push(&w, head.count);
        }
        let a = head.centered(r, (k - 1) as f64);
        let b = total.minus(&head).centered(r, (n - k - 1) as f64);
        let f = k as f64 / n as f64;
        out.push((k, f * (1.0 - f) * frobenius_diff(r, &a, &b)));
    }
    Ok(out)
}

pub fn cov_estimate_changepoint(sample: &FunctionalSample, trim: f64) -> Result<ChangePointFit> {
    let profile = cov_cusum_profile(sample, trim)?;
    Ok(ChangePointFit::from_profile(sample.n(), profile, trim))
}

fn check_cov_split(n: usize, k: usize) -> Result<()> {
    if k < 2 || k + 2 > n {
        return Err(Error::InvalidParameter(format!(
            "covariance split {k} outside 2..={}",
            n.saturating_sub(2)
        )));
    }
    Ok(())
}

/// `D^{cp,Cov}_N(·, ·, λ)` at the integer split `k`.
pub fn cov_cp_contrast_at(sample: &FunctionalSample, lambda: f64, k: usize) -> Result<Surface> {
    let n = sample.n();
    check_cov_split(n, k)?;
    let pre = window_covariance(sample, 0, floor_count(k, lambda), (k - 1) as f64);
    let post = window_covariance(sample, k, floor_count(n - k, lambda), (n - k - 1) as f64);
    pre.sub(&post)
}

/// Contrast at break fraction `θ ∈ [2/N, 1 − 1/N)`.
pub fn cov_cp_contrast(sample: &FunctionalSample, lambda: f64, theta: f64) -> Result<Surface> {
    cov_cp_contrast_at(sample, lambda, floor_count(sample.n(), theta))
}

pub fn cov_cp_profile_direct(sample: &FunctionalSample, nu: &NuMeasure, k: usize) -> Result<LambdaProfile> {
    check_cov_split(sample.n(), k)?;
    Ok(LambdaProfile::tabulate(nu, |l| {
        cov_cp_contrast_at(sample, l, k).expect("split checked").norm_sq()
    }))
}

/// Same profile as [`cov_cp_profile_direct`], via scatter accumulators.
pub fn cov_cp_profile(sample: &FunctionalSample, nu: &NuMeasure, k: usize) -> Result<LambdaProfile> {
    let n = sample.n();
    check_cov_split(n, k)?;
    let w = Weighted::new(sample);
    let r = scatter::resolution(&w);
    let ls = lambdas(nu);
    let pre_counts: Vec<usize> = ls.iter().map(|&l| floor_count(k, l)).collect();
    let post_counts: Vec<usize> = ls.iter().map(|&l| floor_count(n - k, l)).collect();
    let pre = window_snapshots(&w, 0, &pre_counts, (k - 1) as f64);
    let post = window_snapshots(&w, k, &post_counts, (n - k - 1) as f64);
    let values: Vec<f64> = pre.iter().zip(&post).map(|(a, b)| frobenius_diff(r, a, b)).collect();
    Ok(profile_from(nu, &values))
}

/// Relevant covariance change test at a given split.
pub fn cov_changepoint_test_at(sample: &FunctionalSample, config: &TestConfig, k: usize) -> Result<TestOutcome> {
    config.validate()?;
    check_nu_floor(&config.nu, NU_FLOOR)?;
    let profile = cov_cp_profile(sample, &config.nu, k)?;
    let v = self_normalizer(&profile, &config.nu, config.normalizer_kind)?;
    let mut out = TestOutcome::from_parts("cov-changepoint", profile.at_one(), v, config, Direction::Relevant)?;
    out.k_hat = Some(k);
    out.theta_hat = Some(k as f64 / sample.n() as f64);
    Ok(out)
}

/// Estimate the covariance break, then test `∬ (C_1 − C_2)² ≤ Δ` at the estimate.
pub fn cov_changepoint_test(
    sample: &FunctionalSample,
    config: &TestConfig,
    trim: f64,
) -> Result<(TestOutcome, ChangePointFit)> {
    config.validate()?;
    check_nu_floor(&config.nu, NU_FLOOR)?;
    let fit = cov_estimate_changepoint(sample, trim)?;
    let mut out = cov_changepoint_test_at(sample, config, fit.k_hat)?;
    out.trim = Some(trim);
    Ok((out, fit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func_core::{Curve, Grid, NormalizerKind};
    use crate::pivotal::{PivotKind, PivotalQuantiles};

    fn wiggly(n: usize, r: usize, seed: u64) -> FunctionalSample {
        let g = Grid::new(r).unwrap();
        let rows = (0..n)
            .map(|j| {
                (0..r)
                    .map(|i| {
                        let t = i as f64 / (r - 1) as f64;
                        let a = ((seed + j as u64) as f64 * 1.618).sin();
                        let b = ((seed * 7 + 3 * j as u64) as f64 * 0.577).cos();
                        a * (3.0 * t).sin() + b * t * t + 0.1 * (j as f64 * t).cos()
                    })
                    .collect()
            })
            .collect();
        FunctionalSample::from_rows(g, rows).unwrap()
    }

    fn config(delta: f64) -> TestConfig {
        let nu = NuMeasure::default();
        let q = PivotalQuantiles::from_values(PivotKind::W, nu.clone(), 1000, 2000, 42, vec![(0.95, 10.53)]).unwrap();
        TestConfig::new(delta, 0.05, nu, NormalizerKind::Standard, q).unwrap()
    }

    #[test]
    fn two_curve_surface() {
        let s = FunctionalSample::constant_curves(Grid::new(5).unwrap(), &[0.0, 2.0]).unwrap();
        let c = centered_cov_partial(&s, 1.0).unwrap();
        assert!(c.values().iter().all(|&v| (v - 2.0).abs() < 1e-12));
        assert!(centered_cov_partial(&s, 0.5)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
        assert!(centered_cov_partial(&s, 0.0)
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
        let one = FunctionalSample::constant_curves(Grid::new(5).unwrap(), &[1.0]).unwrap();
        assert!(centered_cov_partial(&one, 1.0).is_err());
    }

    #[test]
    fn fast_and_direct_two_sample_profiles_agree() {
        let x = wiggly(13, 9, 1);
        let y = wiggly(17, 9, 2).scaled(1.3);
        let nu = NuMeasure::default();
        let fast = cov_two_sample_profile(&x, &y, &nu).unwrap();
        let direct = cov_two_sample_profile_direct(&x, &y, &nu).unwrap();
        for l in nu.support().iter().copied().chain([1.0]) {
            let (a, b) = (fast.get(l).unwrap(), direct.get(l).unwrap());
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "λ={l}: {a} vs {b}");
        }
    }

    #[test]
    fn fast_and_direct_cusum_agree() {
        let s = wiggly(23, 7, 5);
        let fast = cov_cusum_profile(&s, 0.05).unwrap();
        let direct = cov_cusum_profile_direct(&s, 0.05).unwrap();
        assert_eq!(fast.len(), direct.len());
        for (a, b) in fast.iter().zip(&direct) {
            assert_eq!(a.0, b.0);
            assert!((a.1 - b.1).abs() <= 1e-12 * b.1.abs().max(1.0));
        }
        assert_eq!(fast.first().unwrap().0, 2);
        assert_eq!(fast.last().unwrap().0, 21);
    }

    #[test]
    fn fast_and_direct_cp_profiles_agree() {
        let s = wiggly(30, 8, 9);
        let nu = NuMeasure::default();
        for k in [2, 11, 28] {
            let fast = cov_cp_profile(&s, &nu, k).unwrap();
            let direct = cov_cp_profile_direct(&s, &nu, k).unwrap();
            for l in nu.support().iter().copied().chain([1.0]) {
                let (a, b) = (fast.get(l).unwrap(), direct.get(l).unwrap());
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn identical_samples_give_zero() {
        let x = wiggly(20, 6, 4);
        let out = cov_two_sample_test(&x, &x, &config(0.1)).unwrap();
        assert_eq!(out.statistic, 0.0);
        assert!(!out.reject);
        let flat = FunctionalSample::constant_curves(Grid::new(6).unwrap(), &[2.0; 40]).unwrap();
        let (cp, _) = cov_changepoint_test(&flat, &config(0.1), 0.05).unwrap();
        assert_eq!(cp.statistic, 0.0);
        assert!(!cp.reject);
    }

    #[test]
    fn doubling_multiplies_distance_by_nine() {
        let x = wiggly(15, 7, 3);
        let y = x.scaled(2.0);
        let c = covariance_estimate(&x, 1, 15).unwrap();
        let out = cov_two_sample_test(&x, &y, &config(0.1)).unwrap();
        let expected = 9.0 * c.norm_sq();
        assert!((out.statistic - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn small_samples_and_low_nu_are_rejected() {
        let s = wiggly(4, 5, 1);
        assert!(matches!(
            cov_cusum_profile(&s, 0.0),
            Err(Error::EmptyAdmissibleRange { .. })
        ));
        let nu = NuMeasure::uniform_grid(99).unwrap();
        assert!(matches!(check_nu_floor(&nu, NU_FLOOR), Err(Error::NuBelowFloor { .. })));
        assert!(check_nu_floor(&NuMeasure::default(), NU_FLOOR).is_ok());
    }

    #[test]
    fn variance_step_is_located_and_detected() {
        let g = Grid::new(6).unwrap();
        let shape = Curve::from_fn(g, |t| 1.0 + t);
        let signs = [1.0, -1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0];
        let curves: Vec<Curve> = (0..40)
            .map(|j| {
                let amp = if j < 20 { 1.0 } else { 3f64.sqrt() };
                shape.scaled(amp * signs[j % 8] * (1.0 + 0.1 * (j % 3) as f64))
            })
            .collect();
        let s = FunctionalSample::new(g, &curves).unwrap();
        let (out, fit) = cov_changepoint_test(&s, &config(0.5), 0.05).unwrap();
        assert!((fit.k_hat as i64 - 20).abs() <= 1);
        assert!(out.reject);
    }

    #[test]
    fn surfaces_are_exactly_symmetric() {
        let s = wiggly(12, 7, 8);
        assert!(centered_cov_partial(&s, 0.7).unwrap().is_symmetric());
        assert!(covariance_estimate(&s, 3, 9).unwrap().is_symmetric());
    }
}
