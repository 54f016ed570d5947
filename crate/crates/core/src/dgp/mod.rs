//! Seeded simulators for the error processes and mean functions of the
//! simulation study.
//!
//! Basis-driven processes draw coefficient vectors `c_j ∈ R^D` and emit
//! `mean + Σ_i c_{ij} b_i` on the grid. Every sampler owns a ChaCha8 generator
//! seeded from `DgpSpec::seed`, so a spec reproduces its sample bit for bit.

pub mod basis;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

pub use basis::{bspline_row, fourier, fourier_projection, project_units, BasisFamily, BasisSpec};

use crate::error::{Error, Result};
use crate::func_core::{Curve, FunctionalSample, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Process {
    IidBasis,
    Fma1,
    Far1,
    BrownianBridge,
    HeavyT5Basis,
    KrausT5,
    CovScenario,
}

impl std::str::FromStr for Process {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "iid" | "iid_basis" => Process::IidBasis,
            "fma1" => Process::Fma1,
            "far1" => Process::Far1,
            "bb" | "brownian_bridge" => Process::BrownianBridge,
            "heavy_t5" | "heavy_t5_basis" => Process::HeavyT5Basis,
            "kraus_t5" => Process::KrausT5,
            "cov_scenario" => Process::CovScenario,
            other => return Err(Error::InvalidParameter(format!("unknown process `{other}`"))),
        })
    }
}

/// Coefficient variances `σ_i²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaProfile {
    /// `σ_i² = 1/i²`, variance scenario (A).
    InvISq,
    /// `σ_i² = 1.2^{−2i}`, variance scenario (B).
    Geo,
    Custom(Vec<f64>),
}

impl SigmaProfile {
    pub fn variances(&self, dimension: usize) -> Result<Vec<f64>> {
        match self {
            SigmaProfile::InvISq => Ok((1..=dimension).map(|i| 1.0 / (i * i) as f64).collect()),
            SigmaProfile::Geo => Ok((1..=dimension).map(|i| 1.2f64.powi(-2 * i as i32)).collect()),
            SigmaProfile::Custom(v) => {
                if v.len() != dimension || v.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                    return Err(Error::InvalidParameter(format!(
                        "custom variances need {dimension} nonnegative values"
                    )));
                }
                Ok(v.clone())
            }
        }
    }
}

/// Distribution of the standardized coefficient innovations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Innovation {
    #[default]
    Gaussian,
    /// `t_5` scaled by `√(3/5)` to unit variance.
    StudentT5,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "param")]
pub enum MeanSpec {
    #[default]
    Zero,
    /// `√(2δ) sin(2πt)`, with `∫ μ² = δ`.
    SinSqrt2Delta(f64),
    /// `a t (1 − t)`, with `∫ μ² = a²/30`.
    Parabola(f64),
}

pub fn make_mean(kind: MeanSpec, grid: Grid) -> Result<Curve> {
    match kind {
        MeanSpec::Zero => Ok(Curve::zeros(grid)),
        MeanSpec::SinSqrt2Delta(delta) => {
            if !(delta >= 0.0 && delta.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "delta must be nonnegative, got {delta}"
                )));
            }
            let amp = (2.0 * delta).sqrt();
            Ok(Curve::from_fn(grid, |t| amp * (2.0 * std::f64::consts::PI * t).sin()))
        }
        MeanSpec::Parabola(a) => {
            if !a.is_finite() {
                return Err(Error::InvalidParameter("parabola amplitude must be finite".into()));
            }
            Ok(Curve::from_fn(grid, |t| a * t * (1.0 - t)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub process: Process,
    pub basis: BasisSpec,
    pub sigma: SigmaProfile,
    #[serde(default)]
    pub innovation: Innovation,
    /// fAR(1) coefficient, scalar MA coefficient of the covariance
    /// scenarios, or entry scale of the fMA(1) operator.
    pub kappa: f64,
    #[serde(default)]
    pub mean: MeanSpec,
    /// Multiplier `a` of the errors (second sample in the covariance scenarios).
    pub scale: f64,
    pub n: usize,
    /// Size of the second sample of the covariance scenario (defaults to `n`).
    #[serde(default)]
    pub n2: Option<usize>,
    pub seed: u64,
    pub spectral_norm_target: f64,
    pub burn_in: usize,
}

impl Default for DgpSpec {
    fn default() -> Self {
        DgpSpec {
            process: Process::IidBasis,
            basis: BasisSpec {
                family: BasisFamily::Bspline,
                dimension: 21,
                grid: Grid::default(),
            },
            sigma: SigmaProfile::InvISq,
            innovation: Innovation::Gaussian,
            kappa: 0.7,
            mean: MeanSpec::Zero,
            scale: 1.0,
            n: 100,
            n2: None,
            seed: 0,
            spectral_norm_target: 0.7,
            burn_in: 100,
        }
    }
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n2 == Some(0) {
            return Err(Error::InvalidParameter("sample size must be at least 1".into()));
        }
        if self.basis.dimension == 0 {
            return Err(Error::InvalidParameter("basis dimension must be at least 1".into()));
        }
        if !(self.spectral_norm_target > 0.0 && self.spectral_norm_target.is_finite()) {
            return Err(Error::InvalidParameter("spectral norm target must be positive".into()));
        }
        if !self.kappa.is_finite() || !self.scale.is_finite() {
            return Err(Error::InvalidParameter("kappa and scale must be finite".into()));
        }
        Ok(())
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// One standardized innovation.
fn innovation<R: Rng>(rng: &mut R, kind: Innovation, t5: &StudentT<f64>) -> f64 {
    match kind {
        Innovation::Gaussian => rng.sample(StandardNormal),
        Innovation::StudentT5 => (3.0f64 / 5.0).sqrt() * t5.sample(rng),
    }
}

fn t5() -> StudentT<f64> {
    StudentT::new(5.0).expect("5 degrees of freedom")
}

/// Independent coefficient vectors with standard deviations `sd`.
fn draw_coefficients<R: Rng>(rng: &mut R, count: usize, sd: &[f64], kind: Innovation) -> Vec<f64> {
    let t5 = t5();
    let mut out = Vec::with_capacity(count * sd.len());
    for _ in 0..count {
        for s in sd {
            out.push(s * innovation(rng, kind, &t5));
        }
    }
    out
}

/// Curves `mean + scale · Σ_i c_i b_i` from row-major coefficients.
fn curves_from_coefficients(spec: &DgpSpec, coef: &[f64], scale: f64, mean: &Curve) -> Result<FunctionalSample> {
    let d = spec.basis.dimension;
    let grid = spec.basis.grid;
    let r = grid.resolution();
    let b = spec.basis.evaluate();
    let n = coef.len() / d;
    let mut data = Vec::with_capacity(n * r);
    for j in 0..n {
        let c = &coef[j * d..(j + 1) * d];
        let mut row = mean.values().to_vec();
        for (i, ci) in c.iter().enumerate() {
            let k = scale * ci;
            if k != 0.0 {
                for (v, bi) in row.iter_mut().zip(&b[i * r..(i + 1) * r]) {
                    *v += k * bi;
                }
            }
        }
        data.extend(row);
    }
    FunctionalSample::from_flat(grid, data)
}

fn sd_of(spec: &DgpSpec) -> Result<Vec<f64>> {
    Ok(spec
        .sigma
        .variances(spec.basis.dimension)?
        .iter()
        .map(|v| v.sqrt())
        .collect())
}

/// `X_j = μ + Σ_i N_{ij} b_i` with independent `N_{ij} ~ (0, σ_i²)`.
pub fn sample_iid_basis(spec: &DgpSpec) -> Result<FunctionalSample> {
    spec.validate()?;
    let sd = sd_of(spec)?;
    let mut rng = spec.rng();
    let coef = draw_coefficients(&mut rng, spec.n, &sd, spec.innovation);
    let mean = make_mean(spec.mean, spec.basis.grid)?;
    curves_from_coefficients(spec, &coef, spec.scale, &mean)
}

/// Coefficients `√(3/5) σ_i t_5`, so that each coefficient has variance `σ_i²`.
pub fn sample_heavy_t5_basis(spec: &DgpSpec) -> Result<FunctionalSample> {
    sample_iid_basis(&DgpSpec {
        innovation: Innovation::StudentT5,
        ..spec.clone()
    })
}

/// Row-major `D x D` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    pub dim: usize,
    pub entries: Vec<f64>,
}

impl Operator {
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|i| self.entries[i * d..(i + 1) * d].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for (row, vi) in self.entries.chunks(d).zip(v) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
        out
    }

    /// Largest singular value by power iteration on `ΘᵀΘ`.
    pub fn spectral_norm(&self) -> f64 {
        let d = self.dim;
        let mut v = vec![1.0 / (d as f64).sqrt(); d];
        let mut est = 0.0f64;
        for _ in 0..100_000 {
            let w = self.apply_transpose(&self.apply(&v));
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            v = w.iter().map(|x| x / norm).collect();
            if (next - est).abs() <= 1e-13 * next.abs() {
                est = next;
                break;
            }
            est = next;
        }
        est.max(0.0).sqrt()
    }
}

/// Operator with entries `N(0, (κ σ_i σ_j)²)`, rescaled to the target spectral norm.
/// `None` when every entry is zero.
pub fn draw_theta<R: Rng>(rng: &mut R, sd: &[f64], kappa: f64, target: f64) -> Option<Operator> {
    let d = sd.len();
    let mut entries = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            entries.push(kappa * sd[i] * sd[j] * z);
        }
    }
    let mut op = Operator { dim: d, entries };
    let norm = op.spectral_norm();
    if norm == 0.0 {
        return None;
    }
    op.entries.iter_mut().for_each(|e| *e *= target / norm);
    Some(op)
}

/// fMA(1) sample together with the operator that produced it.
pub fn sample_fma1_with_operator(spec: &DgpSpec) -> Result<(FunctionalSample, Option<Operator>)> {
    spec.validate()?;
    let sd = sd_of(spec)?;
    let d = sd.len();
    let mut rng = spec.rng();
    let theta = draw_theta(&mut rng, &sd, spec.kappa, spec.spectral_norm_target);
    if theta.is_none() {
        log::warn!("fMA(1) operator is identically zero; generating independent errors");
    }
    let eta = draw_coefficients(&mut rng, spec.n + 1, &sd, spec.innovation);
    let mut coef = Vec::with_capacity(spec.n * d);
    for j in 1..=spec.n {
        let cur = &eta[j * d..(j + 1) * d];
        match &theta {
            Some(op) => {
                let lag = op.apply(&eta[(j - 1) * d..j * d]);
                coef.extend(cur.iter().zip(&lag).map(|(a, b)| a + b));
            }
            None => coef.extend_from_slice(cur),
        }
    }
    let mean = make_mean(spec.mean, spec.basis.grid)?;
    Ok((curves_from_coefficients(spec, &coef, spec.scale, &mean)?, theta))
}

/// `ε_j = η_j + Θ η_{j−1}`; a fresh `Θ` is drawn from the seed on every call.
pub fn sample_fma1(spec: &DgpSpec) -> Result<FunctionalSample> {
    Ok(sample_fma1_with_operator(spec)?.0)
}

/// Coefficients of `ε_j = η_j + κ ε_{j−1}` after `burn_in` discarded steps.
fn far1_coefficients(spec: &DgpSpec, rng: &mut ChaCha8Rng, sd: &[f64]) -> Vec<f64> {
    let d = sd.len();
    let t5 = t5();
    let mut state = vec![0.0; d];
    let mut out = Vec::with_capacity(spec.n * d);
    for step in 0..spec.burn_in + spec.n {
        for (s, sdi) in state.iter_mut().zip(sd) {
            *s = sdi * innovation(rng, spec.innovation, &t5) + spec.kappa * *s;
        }
        if step >= spec.burn_in {
            out.extend_from_slice(&state);
        }
    }
    out
}

pub fn sample_far1(spec: &DgpSpec) -> Result<FunctionalSample> {
    spec.validate()?;
    if spec.kappa.abs() >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "fAR(1) needs |kappa| < 1, got {}",
            spec.kappa
        )));
    }
    let sd = sd_of(spec)?;
    let mut rng = spec.rng();
    let coef = far1_coefficients(spec, &mut rng, &sd);
    let mean = make_mean(spec.mean, spec.basis.grid)?;
    curves_from_coefficients(spec, &coef, spec.scale, &mean)
}

/// `mean + (B(t) − t B(1))`, with `B` built from Gaussian increments on the grid.
pub fn sample_brownian_bridge(n: usize, grid: Grid, mean: &Curve, seed: u64) -> Result<FunctionalSample> {
    grid.check_same(&mean.grid())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = grid.points();
    let r = pts.len();
    let mut data = Vec::with_capacity(n * r);
    let mut b = vec![0.0; r];
    for _ in 0..n {
        for i in 1..r {
            let z: f64 = rng.sample(StandardNormal);
            b[i] = b[i - 1] + (pts[i] - pts[i - 1]).sqrt() * z;
        }
        let end = b[r - 1];
        data.extend((0..r).map(|i| mean.values()[i] + b[i] - pts[i] * end));
    }
    FunctionalSample::from_flat(grid, data)
}

/// `(1/√10) Σ_{k≤10} (k^{−3/2} √2 sin(2πkt) V_k + 3^{−k/2} √2 cos(2πkt) W_k)`,
/// times `scale`, with unit-variance `t_5` variables `V_k`, `W_k`.
pub fn sample_kraus_t5(n: usize, grid: Grid, seed: u64, scale: f64) -> Result<FunctionalSample> {
    use std::f64::consts::{PI, SQRT_2};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t5 = t5();
    let pts = grid.points();
    let r = pts.len();
    let mut sin_b = Vec::with_capacity(10 * r);
    let mut cos_b = Vec::with_capacity(10 * r);
    for k in 1..=10 {
        let kf = k as f64;
        sin_b.extend(pts.iter().map(|t| kf.powf(-1.5) * SQRT_2 * (2.0 * PI * kf * t).sin()));
        cos_b.extend(
            pts.iter()
                .map(|t| 3f64.powf(-kf / 2.0) * SQRT_2 * (2.0 * PI * kf * t).cos()),
        );
    }
    let c = scale / 10f64.sqrt();
    let mut data = Vec::with_capacity(n * r);
    for _ in 0..n {
        let mut row = vec![0.0; r];
        for k in 0..10 {
            let v = innovation(&mut rng, Innovation::StudentT5, &t5);
            let w = innovation(&mut rng, Innovation::StudentT5, &t5);
            for (i, x) in row.iter_mut().enumerate() {
                *x += c * (sin_b[k * r + i] * v + cos_b[k * r + i] * w);
            }
        }
        data.extend(row);
    }
    FunctionalSample::from_flat(grid, data)
}

/// `∬ C²` of the Kraus-type process at unit scale.
pub fn kraus_cov_norm_sq() -> f64 {
    (1..=10).map(|k| (k as f64).powi(-6) + 3f64.powi(-2 * k)).sum::<f64>() / 100.0
}

/// Scalar-coefficient MA(1) `η_j + κ η_{j−1}` with Gaussian basis coefficients.
fn scalar_ma1(spec: &DgpSpec, rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Result<FunctionalSample> {
    let sd = sd_of(spec)?;
    let d = sd.len();
    let eta = draw_coefficients(rng, n + 1, &sd, spec.innovation);
    let coef: Vec<f64> = (1..=n)
        .flat_map(|j| {
            (0..d)
                .map(|i| eta[j * d + i] + spec.kappa * eta[(j - 1) * d + i])
                .collect::<Vec<_>>()
        })
        .collect();
    let zero = Curve::zeros(spec.basis.grid);
    curves_from_coefficients(spec, &coef, scale, &zero)
}

/// Single scalar-MA(1) sample (`κ = 0` gives independent curves), scaled by `scale`.
pub fn sample_scalar_ma1(spec: &DgpSpec) -> Result<FunctionalSample> {
    spec.validate()?;
    let mut rng = spec.rng();
    scalar_ma1(spec, &mut rng, spec.n, spec.scale)
}

/// Two independent samples whose covariances differ by the factor `a² = scale²`.
pub fn sample_cov_scenario(spec: &DgpSpec) -> Result<(FunctionalSample, FunctionalSample)> {
    spec.validate()?;
    let mut rng = spec.rng();
    let x = scalar_ma1(spec, &mut rng, spec.n, 1.0)?;
    let y = scalar_ma1(spec, &mut rng, spec.n2.unwrap_or(spec.n), spec.scale)?;
    Ok((x, y))
}

/// `(1 − a²)² Σ σ_i⁴ (1 + κ²)²`, the squared distance of the two covariance operators.
pub fn cov_scenario_distance(sigma2: &[f64], scale: f64, kappa: f64) -> f64 {
    let s4: f64 = sigma2.iter().map(|s| s * s).sum();
    let a2 = scale * scale;
    (1.0 - a2).powi(2) * s4 * (1.0 + kappa * kappa).powi(2)
}

/// Dispatch on `spec.process` for the single-sample processes.
pub fn simulate(spec: &DgpSpec) -> Result<FunctionalSample> {
    match spec.process {
        Process::IidBasis => sample_iid_basis(spec),
        Process::HeavyT5Basis => sample_heavy_t5_basis(spec),
        Process::Fma1 => sample_fma1(spec),
        Process::Far1 => sample_far1(spec),
        Process::BrownianBridge => {
            spec.validate()?;
            let grid = spec.basis.grid;
            let mean = make_mean(spec.mean, grid)?;
            let s = sample_brownian_bridge(spec.n, grid, &Curve::zeros(grid), spec.seed)?;
            s.scaled(spec.scale).shifted(&mean)
        }
        Process::KrausT5 => {
            spec.validate()?;
            let grid = spec.basis.grid;
            let mean = make_mean(spec.mean, grid)?;
            sample_kraus_t5(spec.n, grid, spec.seed, spec.scale)?.shifted(&mean)
        }
        Process::CovScenario => sample_scalar_ma1(spec),
    }
}

/// Change-point sample from one error stream: curves `1..=⌊Nθ₀⌋` are kept,
/// later curves become `scale · ε_j + shift`.
pub fn inject_change(errors: &FunctionalSample, theta0: f64, scale: f64, shift: &Curve) -> Result<FunctionalSample> {
    if !(theta0 > 0.0 && theta0 < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "break fraction {theta0} outside (0, 1)"
        )));
    }
    let n = errors.n();
    let k = crate::func_core::floor_count(n, theta0);
    if k == 0 || k == n {
        return Err(Error::InvalidParameter(format!(
            "break fraction {theta0} leaves an empty segment in a sample of {n} curves"
        )));
    }
    let mut flat = errors.slice(0, k)?.as_flat().to_vec();
    flat.extend_from_slice(errors.slice(k, n)?.scaled(scale).shifted(shift)?.as_flat());
    FunctionalSample::from_flat(errors.grid(), flat)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(process: Process) -> DgpSpec {
        DgpSpec {
            process,
            seed: 17,
            n: 50,
            ..DgpSpec::default()
        }
    }

    #[test]
    fn same_seed_same_sample() {
        for p in [
            Process::IidBasis,
            Process::Fma1,
            Process::Far1,
            Process::BrownianBridge,
            Process::HeavyT5Basis,
            Process::KrausT5,
            Process::CovScenario,
        ] {
            let s = spec(p);
            assert_eq!(simulate(&s).unwrap(), simulate(&s).unwrap(), "{p:?}");
            let other = DgpSpec { seed: 18, ..s };
            assert_ne!(simulate(&other).unwrap(), simulate(&spec(p)).unwrap());
        }
    }

    #[test]
    fn zero_variances_give_the_mean() {
        let s = DgpSpec {
            sigma: SigmaProfile::Custom(vec![0.0; 21]),
            mean: MeanSpec::Parabola(2.0),
            ..spec(Process::IidBasis)
        };
        let x = sample_iid_basis(&s).unwrap();
        let m = make_mean(MeanSpec::Parabola(2.0), Grid::default()).unwrap();
        assert!(x.curves().all(|c| c == m.values()));
    }

    #[test]
    fn mean_functions() {
        let g = Grid::new(1001).unwrap();
        assert!(make_mean(MeanSpec::Zero, g).unwrap().values().iter().all(|&v| v == 0.0));
        assert!((make_mean(MeanSpec::SinSqrt2Delta(0.3), g).unwrap().norm_sq() - 0.3).abs() < 1e-6);
        assert!((make_mean(MeanSpec::Parabola(0.5), g).unwrap().norm_sq() - 0.25 / 30.0).abs() < 1e-7);
    }

    #[test]
    fn far1_rejects_explosive_coefficients() {
        let s = DgpSpec {
            kappa: 1.0,
            ..spec(Process::Far1)
        };
        assert!(sample_far1(&s).is_err());
    }

    #[test]
    fn far1_with_zero_kappa_is_iid() {
        let base = DgpSpec {
            kappa: 0.0,
            burn_in: 0,
            ..spec(Process::Far1)
        };
        let iid = DgpSpec {
            process: Process::IidBasis,
            ..base.clone()
        };
        assert_eq!(sample_far1(&base).unwrap(), sample_iid_basis(&iid).unwrap());
    }

    #[test]
    fn zero_operator_falls_back_to_iid() {
        let s = DgpSpec {
            kappa: 0.0,
            ..spec(Process::Fma1)
        };
        let (_, op) = sample_fma1_with_operator(&s).unwrap();
        assert!(op.is_none());
    }

    #[test]
    fn bridge_endpoints_vanish() {
        let g = Grid::new(33).unwrap();
        let s = sample_brownian_bridge(10, g, &Curve::zeros(g), 3).unwrap();
        for c in s.curves() {
            assert_eq!(c[0], 0.0);
            assert!(c[32].abs() < 1e-12);
        }
    }

    #[test]
    fn kraus_target_constant() {
        let direct: f64 = (1..=10)
            .map(|k| 1.0 / (k as f64).powi(6) + 1.0 / 9f64.powi(k))
            .sum::<f64>()
            / 100.0;
        assert!((kraus_cov_norm_sq() - direct).abs() < 1e-15);
    }

    #[test]
    fn cov_distance_formula() {
        let s2 = SigmaProfile::InvISq.variances(21).unwrap();
        assert_eq!(cov_scenario_distance(&s2, 1.0, 0.7), 0.0);
        let s4: f64 = (1..=21).map(|i| 1.0 / (i as f64).powi(4)).sum();
        let d = cov_scenario_distance(&s2, 1.5, 0.7);
        assert!((d - 1.25f64.powi(2) * s4 * 1.49f64.powi(2)).abs() < 1e-12);
    }

    #[test]
    fn spec_json_round_trip() {
        let s = DgpSpec {
            mean: MeanSpec::SinSqrt2Delta(0.02),
            sigma: SigmaProfile::Geo,
            ..spec(Process::Fma1)
        };
        let back: DgpSpec = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
