//! Long-run covariance estimation and the variance-based one-sample test.
//!
//! `Ĉ(s, t) = γ̂_0(s, t) + Σ_{ℓ=1}^{h} (1 − ℓ/(h+1)) (γ̂_ℓ(s, t) + γ̂_ℓ(t, s))`
//! with `γ̂_ℓ(s, t) = (1/n) Σ_j e_j(s) e_{j+ℓ}(t)` for demeaned curves `e_j`.
//! The test rejects `||mu||² ≤ Δ` when `T_n > Δ + z_{1−α} τ̂ / √n` with
//! `τ̂² = 4 ∬ X̄(s) X̄(t) Ĉ(s, t)`.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::func_core::{FunctionalSample, NormalizerKind, NuMeasure, Surface};
use crate::mean_tests::{decide, one_sample_statistic, Direction, TestOutcome};

#[derive(Debug, Clone, PartialEq)]
pub struct LrvEstimate {
    pub kernel_surface: Surface,
    pub bandwidth: usize,
    pub tau2: f64,
    pub tau2_truncated: bool,
}

/// `⌊n^{1/3}⌋`, capped below `n`.
pub fn default_bandwidth(n: usize) -> usize {
    let mut h = (n as f64).cbrt().floor() as usize;
    while (h + 1).pow(3) <= n {
        h += 1;
    }
    while h > 0 && h.pow(3) > n {
        h -= 1;
    }
    h.min(n.saturating_sub(1))
}

fn bartlett(lag: usize, bandwidth: usize) -> f64 {
    1.0 - lag as f64 / (bandwidth as f64 + 1.0)
}

fn demeaned(sample: &FunctionalSample) -> Vec<f64> {
    let m = sample.mean_curve();
    sample
        .curves()
        .flat_map(|c| c.iter().zip(m.values()).map(|(x, mu)| x - mu).collect::<Vec<_>>())
        .collect()
}

fn check_bandwidth(n: usize, bandwidth: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter(
            "long-run covariance needs at least 2 curves".into(),
        ));
    }
    if bandwidth >= n {
        return Err(Error::BandwidthTooLarge { bandwidth, n });
    }
    Ok(())
}

/// Bartlett-weighted long-run covariance surface.
pub fn longrun_kernel(sample: &FunctionalSample, bandwidth: usize) -> Result<Surface> {
    let n = sample.n();
    check_bandwidth(n, bandwidth)?;
    let r = sample.grid().resolution();
    let e = demeaned(sample);
    let row = |j: usize| &e[j * r..(j + 1) * r];
    let mut lag0 = vec![0.0; r * r];
    for j in 0..n {
        let x = row(j);
        for a in 0..r {
            for b in 0..r {
                lag0[a * r + b] += x[a] * x[b];
            }
        }
    }
    let mut cross = vec![0.0; r * r];
    for lag in 1..=bandwidth {
        let w = bartlett(lag, bandwidth);
        for j in 0..n - lag {
            let (x, y) = (row(j), row(j + lag));
            for a in 0..r {
                let xa = w * x[a];
                for b in 0..r {
                    cross[a * r + b] += xa * y[b];
                }
            }
        }
    }
    let nf = n as f64;
    let mut values = vec![0.0; r * r];
    for a in 0..r {
        for b in 0..r {
            values[a * r + b] = (lag0[a * r + b] + (cross[a * r + b] + cross[b * r + a])) / nf;
        }
    }
    Surface::new(sample.grid(), values)
}

/// `4 ∬ X̄(s) X̄(t) Ĉ(s, t)`, truncated at zero; the flag reports truncation.
pub fn tau2_hat(sample: &FunctionalSample, kernel_surface: &Surface) -> Result<(f64, bool)> {
    let grid = sample.grid();
    grid.check_same(&kernel_surface.grid())?;
    let w = grid.trapezoid_weights();
    let m = sample.mean_curve();
    let r = w.len();
    let wm: Vec<f64> = m.values().iter().zip(&w).map(|(a, b)| a * b).collect();
    let mut total = 0.0;
    for a in 0..r {
        let row = &kernel_surface.values()[a * r..(a + 1) * r];
        let inner: f64 = row.iter().zip(&wm).map(|(c, v)| c * v).sum();
        total += wm[a] * inner;
    }
    Ok(truncate(4.0 * total))
}

fn truncate(t: f64) -> (f64, bool) {
    if t < 0.0 {
        log::warn!("negative long-run variance estimate {t} truncated to 0");
        (0.0, true)
    } else {
        (t, false)
    }
}

/// `τ̂²` without forming the surface: the quadratic form in the mean equals
/// the long-run variance of the scalar projections `⟨X̄, e_j⟩`.
pub fn tau2_hat_projected(sample: &FunctionalSample, bandwidth: usize) -> Result<(f64, bool)> {
    let n = sample.n();
    check_bandwidth(n, bandwidth)?;
    let grid = sample.grid();
    let m = sample.mean_curve();
    let wm: Vec<f64> = m
        .values()
        .iter()
        .zip(grid.trapezoid_weights())
        .map(|(a, b)| a * b)
        .collect();
    let r = grid.resolution();
    let e = demeaned(sample);
    let z: Vec<f64> = (0..n)
        .map(|j| e[j * r..(j + 1) * r].iter().zip(&wm).map(|(x, w)| x * w).sum())
        .collect();
    let mut acc: f64 = z.iter().map(|v| v * v).sum();
    for lag in 1..=bandwidth {
        let g: f64 = (0..n - lag).map(|j| z[j] * z[j + lag]).sum();
        acc += 2.0 * bartlett(lag, bandwidth) * g;
    }
    Ok(truncate(4.0 * acc / n as f64))
}

pub fn estimate_lrv(sample: &FunctionalSample, bandwidth: usize) -> Result<LrvEstimate> {
    let kernel_surface = longrun_kernel(sample, bandwidth)?;
    let (tau2, tau2_truncated) = tau2_hat(sample, &kernel_surface)?;
    Ok(LrvEstimate {
        kernel_surface,
        bandwidth,
        tau2,
        tau2_truncated,
    })
}

/// `z_{1−α}` of the standard normal distribution.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

fn lrv_outcome(sample: &FunctionalSample, delta: f64, alpha: f64, tau: f64, name: &str) -> Result<TestOutcome> {
    if delta == 0.0 {
        return Err(Error::ZeroThreshold);
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let statistic = one_sample_statistic(sample);
    let normalizer = tau / (sample.n() as f64).sqrt();
    let quantile = normal_quantile(1.0 - alpha);
    let (threshold, reject) = decide(statistic, normalizer, quantile, delta, Direction::Relevant);
    Ok(TestOutcome {
        test: name.to_string(),
        statistic,
        normalizer,
        quantile,
        alpha,
        delta,
        threshold,
        reject,
        direction: Direction::Relevant,
        nu: NuMeasure::default(),
        normalizer_kind: NormalizerKind::Standard,
        bandwidth: None,
        kernel: None,
        tau2: Some(tau * tau),
        tau2_truncated: None,
        theta_hat: None,
        k_hat: None,
        trim: None,
        breaks: None,
    })
}

/// One-sample relevant test normalized by an estimated long-run variance.
pub fn lrv_one_sample_test(sample: &FunctionalSample, delta: f64, alpha: f64, bandwidth: usize) -> Result<TestOutcome> {
    let (tau2, truncated) = tau2_hat_projected(sample, bandwidth)?;
    let mut out = lrv_outcome(sample, delta, alpha, tau2.sqrt(), "lrv-one-sample")?;
    out.bandwidth = Some(bandwidth);
    out.kernel = Some("bartlett".into());
    out.tau2_truncated = Some(truncated);
    Ok(out)
}

/// The same test with the true long-run standard deviation `τ`.
pub fn lrv_one_sample_test_known_tau(
    sample: &FunctionalSample,
    delta: f64,
    alpha: f64,
    tau: f64,
) -> Result<TestOutcome> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("tau must be nonnegative, got {tau}")));
    }
    lrv_outcome(sample, delta, alpha, tau, "lrv-one-sample-known-tau")
}

/// `τ² = (4/(1−κ)²) Σ_i σ_i² (∫ μ b_i)²` for an fAR(1) with coefficient `κ`.
pub fn far1_tau2(kappa: f64, sigma2: &[f64], mean_coefficients: &[f64]) -> f64 {
    let s: f64 = sigma2.iter().zip(mean_coefficients).map(|(s, c)| s * c * c).sum();
    4.0 * s / ((1.0 - kappa) * (1.0 - kappa))
}
