//! Change-point estimation for the mean and relevant change-point tests.
//!
//! Indices follow the usual one-based convention: a break at `k` means the
//! first regime is `X_1, ..., X_k`. The CUSUM profile is
//!
//! ```text
//! f(k) = (k/N)(1 - k/N) ∫ (mean(X_1..X_k) - mean(X_{k+1}..X_N))²
//! ```
//!
//! with `f(N) = 0`, and the estimator maximizes it over
//! `⌊Nε⌋ + 1 ..= N - ⌊Nε⌋`, breaking ties towards the smallest index.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func_core::{
    floor_count, self_normalizer, Curve, FunctionalSample, LambdaProfile, NormalizerKind, NuMeasure,
};
use crate::mean_tests::{Direction, TestConfig, TestOutcome};

/// Trimming used by the simulation scenarios.
pub const DEFAULT_TRIM: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePointFit {
    pub theta_hat: f64,
    pub k_hat: usize,
    /// `(k, f(k))` over the admissible range, in increasing `k`.
    pub profile: Vec<(usize, f64)>,
    pub trim: f64,
}

impl ChangePointFit {
    pub fn value_at(&self, k: usize) -> Option<f64> {
        self.profile.iter().find(|p| p.0 == k).map(|p| p.1)
    }

    /// Build a fit from a profile, taking the first maximizer.
    pub(crate) fn from_profile(n: usize, profile: Vec<(usize, f64)>, trim: f64) -> Self {
        let (k_hat, _) = argmax_first(&profile);
        ChangePointFit {
            theta_hat: k_hat as f64 / n as f64,
            k_hat,
            profile,
            trim,
        }
    }
}

/// Maximizer with the smallest index among ties.
pub fn argmax_first(profile: &[(usize, f64)]) -> (usize, f64) {
    let mut best = profile[0];
    for &p in &profile[1..] {
        if p.1 > best.1 {
            best = p;
        }
    }
    best
}

pub(crate) fn check_trim(trim: f64) -> Result<()> {
    if !(0.0..0.5).contains(&trim) {
        return Err(Error::InvalidParameter(format!(
            "trim must lie in [0, 1/2), got {trim}"
        )));
    }
    Ok(())
}

/// `⌊Nε⌋ + 1 ..= N - ⌊Nε⌋`.
pub fn admissible_range(n: usize, trim: f64) -> Result<RangeInclusive<usize>> {
    check_trim(trim)?;
    let cut = floor_count(n, trim);
    if n < 2 || cut + 1 > n - cut {
        return Err(Error::EmptyAdmissibleRange { n, trim });
    }
    Ok(cut + 1..=n - cut)
}

/// Running sums `cum[k] = X_1 + ... + X_k`, `cum[0] = 0`, flattened.
fn prefix_sums(sample: &FunctionalSample) -> Vec<f64> {
    let r = sample.grid().resolution();
    let n = sample.n();
    let mut cum = vec![0.0; (n + 1) * r];
    for j in 0..n {
        let (prev, next) = cum[j * r..(j + 2) * r].split_at_mut(r);
        for ((c, p), x) in next.iter_mut().zip(prev.iter()).zip(sample.curve(j)) {
            *c = p + x;
        }
    }
    cum
}

fn cusum_values(sample: &FunctionalSample, range: RangeInclusive<usize>) -> Vec<(usize, f64)> {
    let grid = sample.grid();
    let r = grid.resolution();
    let n = sample.n();
    let cum = prefix_sums(sample);
    let total = &cum[n * r..];
    let mut diff = vec![0.0; r];
    range
        .map(|k| {
            if k == n {
                return (k, 0.0);
            }
            let head = &cum[k * r..(k + 1) * r];
            let (kf, rest) = (k as f64, (n - k) as f64);
            for ((d, h), t) in diff.iter_mut().zip(head).zip(total) {
                *d = h / kf - (t - h) / rest;
            }
            let frac = kf / n as f64;
            (k, frac * (1.0 - frac) * grid.integrate_product(&diff, &diff))
        })
        .collect()
}

/// `f(k)` over the trimmed range.
pub fn cusum_profile(sample: &FunctionalSample, trim: f64) -> Result<Vec<(usize, f64)>> {
    let range = admissible_range(sample.n(), trim)?;
    Ok(cusum_values(sample, range))
}

pub fn estimate_changepoint(sample: &FunctionalSample, trim: f64) -> Result<ChangePointFit> {
    let profile = cusum_profile(sample, trim)?;
    Ok(ChangePointFit::from_profile(sample.n(), profile, trim))
}

/// Contrast with an integer split `k`:
/// `(1/k) Σ_{j ≤ ⌊λk⌋} X_j − (1/(N−k)) Σ_{j=k+1}^{k+⌊λ(N−k)⌋} X_j`.
pub fn cp_contrast_at(sample: &FunctionalSample, lambda: f64, k: usize) -> Result<Curve> {
    let n = sample.n();
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!("split {k} outside 1..{n}")));
    }
    let pre = sample.window_sum(0, floor_count(k, lambda));
    let post = sample.window_sum(k, k + floor_count(n - k, lambda));
    let (kf, rest) = (k as f64, (n - k) as f64);
    let values = pre.iter().zip(&post).map(|(a, b)| a / kf - b / rest).collect();
    Curve::new(sample.grid(), values)
}

/// Contrast at break fraction `θ ∈ [1/N, 1)`, split at `⌊Nθ⌋`.
pub fn cp_contrast(sample: &FunctionalSample, lambda: f64, theta: f64) -> Result<Curve> {
    let n = sample.n();
    let k = floor_count(n, theta);
    if theta.is_nan() || theta >= 1.0 || k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "theta = {theta} outside [1/N, 1) for N = {n}"
        )));
    }
    cp_contrast_at(sample, lambda, k)
}

/// `λ -> ∫ (contrast at split k)²` over the atoms of ν and λ = 1.
pub fn cp_profile_at(sample: &FunctionalSample, nu: &NuMeasure, k: usize) -> Result<LambdaProfile> {
    cp_contrast_at(sample, 1.0, k)?;
    Ok(LambdaProfile::tabulate(nu, |l| {
        cp_contrast_at(sample, l, k).expect("split checked").norm_sq()
    }))
}

/// Relevant test at a given split, as used after estimation or with a known break.
pub fn changepoint_test_at(sample: &FunctionalSample, config: &TestConfig, k: usize) -> Result<TestOutcome> {
    config.validate()?;
    let profile = cp_profile_at(sample, &config.nu, k)?;
    let v = self_normalizer(&profile, &config.nu, config.normalizer_kind)?;
    let mut out = TestOutcome::from_parts("changepoint", profile.at_one(), v, config, Direction::Relevant)?;
    out.k_hat = Some(k);
    out.theta_hat = Some(k as f64 / sample.n() as f64);
    Ok(out)
}

/// Estimate the break, then test `∫ δ² ≤ Δ` at the estimate.
pub fn changepoint_test(
    sample: &FunctionalSample,
    config: &TestConfig,
    trim: f64,
) -> Result<(TestOutcome, ChangePointFit)> {
    config.validate()?;
    let fit = estimate_changepoint(sample, trim)?;
    if fit.k_hat >= sample.n() {
        return Err(Error::EmptyAdmissibleRange { n: sample.n(), trim });
    }
    let mut out = changepoint_test_at(sample, config, fit.k_hat)?;
    out.trim = Some(trim);
    Ok((out, fit))
}

/// Best interior split of `sample[start..end]`, if the segment admits one.
fn best_split(sample: &FunctionalSample, start: usize, end: usize, trim: f64) -> Result<Option<(usize, f64)>> {
    let len = end - start;
    let cut = floor_count(len, trim);
    let lo = cut + 1;
    let hi = (len.saturating_sub(cut)).min(len.saturating_sub(1));
    if len < 2 || lo > hi {
        return Ok(None);
    }
    let seg = sample.slice(start, end)?;
    let (k, v) = argmax_first(&cusum_values(&seg, lo..=hi));
    Ok(Some((start + k, v)))
}

/// Break indices (number of curves before each break) found by binary segmentation.
pub fn binary_segmentation_indices(sample: &FunctionalSample, k_breaks: usize, trim: f64) -> Result<Vec<usize>> {
    check_trim(trim)?;
    if k_breaks == 0 {
        return Err(Error::InvalidParameter("need at least one break".into()));
    }
    let mut segments = vec![(0usize, sample.n())];
    let mut breaks = Vec::with_capacity(k_breaks);
    while breaks.len() < k_breaks {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, &(s, e)) in segments.iter().enumerate() {
            if let Some((k, v)) = best_split(sample, s, e, trim)? {
                if best.is_none_or(|b| v > b.2) {
                    best = Some((i, k, v));
                }
            }
        }
        let Some((i, k, _)) = best else {
            return Err(Error::SegmentTooShort(format!(
                "no segment can be split further after {} of {k_breaks} breaks",
                breaks.len()
            )));
        };
        let (s, e) = segments[i];
        segments.splice(i..=i, [(s, k), (k, e)]);
        breaks.push(k);
    }
    breaks.sort_unstable();
    Ok(breaks)
}

/// Sorted break fractions `k_j / N`.
pub fn binary_segmentation(sample: &FunctionalSample, k_breaks: usize, trim: f64) -> Result<Vec<f64>> {
    let n = sample.n() as f64;
    Ok(binary_segmentation_indices(sample, k_breaks, trim)?
        .into_iter()
        .map(|k| k as f64 / n)
        .collect())
}

#[derive(Debug, Clone)]
pub struct MultiCpConfig {
    pub k_breaks: usize,
    pub trim: f64,
    pub test: TestConfig,
    /// Known break indices; estimated by binary segmentation when absent.
    pub breaks: Option<Vec<usize>>,
}

/// `Σ_j ∫ (contrast between segments j and j+1 at λ)²` for breaks `b_1 < ... < b_K`.
pub fn multi_cp_profile_value(sample: &FunctionalSample, breaks: &[usize], lambda: f64) -> f64 {
    let mut bounds = Vec::with_capacity(breaks.len() + 2);
    bounds.push(0);
    bounds.extend_from_slice(breaks);
    bounds.push(sample.n());
    let grid = sample.grid();
    let mut total = 0.0;
    let mut diff = vec![0.0; grid.resolution()];
    for j in 1..bounds.len() - 1 {
        let left = bounds[j] - bounds[j - 1];
        let right = bounds[j + 1] - bounds[j];
        let a = sample.window_sum(bounds[j - 1], bounds[j - 1] + floor_count(left, lambda));
        let b = sample.window_sum(bounds[j], bounds[j] + floor_count(right, lambda));
        for ((d, x), y) in diff.iter_mut().zip(&a).zip(&b) {
            *d = x / left as f64 - y / right as f64;
        }
        total += grid.integrate_product(&diff, &diff);
    }
    total
}

fn check_breaks(n: usize, breaks: &[usize]) -> Result<()> {
    let mut prev = 0;
    for &b in breaks.iter().chain(std::iter::once(&n)) {
        if b < prev + 2 {
            return Err(Error::SegmentTooShort(format!(
                "segment {}..{} has fewer than 2 curves",
                prev + 1,
                b
            )));
        }
        prev = b;
    }
    Ok(())
}

/// Test of `Σ_j ∫ δ_j² ≤ Δ` over all consecutive mean changes.
pub fn multi_cp_l2_test(sample: &FunctionalSample, config: &MultiCpConfig) -> Result<TestOutcome> {
    config.test.validate()?;
    if config.test.normalizer_kind != NormalizerKind::Standard {
        return Err(Error::InvalidParameter(
            "the multiple change point test uses the standard normalizer".into(),
        ));
    }
    let breaks = match &config.breaks {
        Some(b) => {
            let mut b = b.clone();
            b.sort_unstable();
            b
        }
        None => binary_segmentation_indices(sample, config.k_breaks, config.trim)?,
    };
    if breaks.is_empty() {
        return Err(Error::InvalidParameter("need at least one break".into()));
    }
    check_breaks(sample.n(), &breaks)?;
    let nu = &config.test.nu;
    let profile = LambdaProfile::tabulate(nu, |l| multi_cp_profile_value(sample, &breaks, l));
    let v = self_normalizer(&profile, nu, NormalizerKind::Standard)?;
    let mut out = TestOutcome::from_parts("multi-cp", profile.at_one(), v, &config.test, Direction::Relevant)?;
    out.trim = Some(config.trim);
    let n = sample.n() as f64;
    out.breaks = Some(breaks.iter().map(|&b| b as f64 / n).collect());
    Ok(out)
}
