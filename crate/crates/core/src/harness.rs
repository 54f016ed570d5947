//! Monte Carlo rejection rates for the registered simulation scenarios.
//!
//! A scenario fixes the data-generating process, the test and a default sweep
//! of one parameter (`a`, `δ`, `κ` or the sample size). Replication `r` at
//! sweep point `p` draws its data from a seed derived from
//! `(master_seed, scenario id, p, r)`, so tables are reproducible and do not
//! depend on the number of threads.

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::changepoint::{cp_profile_at, estimate_changepoint, DEFAULT_TRIM};
use crate::cov_tests::{check_nu_floor, cov_cp_profile, cov_estimate_changepoint, cov_two_sample_profile, NU_FLOOR};
use crate::dgp::basis::{BasisFamily, BasisSpec};
use crate::dgp::{
    cov_scenario_distance, inject_change, kraus_cov_norm_sq, make_mean, sample_brownian_bridge, sample_cov_scenario,
    sample_far1, sample_fma1, sample_heavy_t5_basis, sample_iid_basis, sample_kraus_t5, sample_scalar_ma1, DgpSpec,
    Innovation, MeanSpec, Process, SigmaProfile,
};
use crate::error::{Error, Result};
use crate::func_core::{self_normalizer, Curve, FunctionalSample, Grid, LambdaProfile, NormalizerKind, NuMeasure};
use crate::longrun::{default_bandwidth, far1_tau2, normal_quantile, tau2_hat_projected};
use crate::mean_tests::{decide, one_sample_profile, two_sample_profile, Direction};
use crate::pivotal::{build_quantile_table, PivotKind, PivotalQuantiles, QuantileCache, RNG_ALGORITHM};

pub const MIN_REPLICATIONS: usize = 100;
pub const DEFAULT_ALPHAS: [f64; 3] = [0.01, 0.05, 0.1];
pub const DEFAULT_MASTER_SEED: u64 = 20_240_601;

const DIM: usize = 21;
const THETA0: f64 = 0.5;
const COV_KAPPA: f64 = 0.7;
const COV_BOUNDARY: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    OneSample,
    TwoSample,
    ChangePoint,
    CovTwoSample,
    CovChangePoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Errors {
    Iid,
    Fma,
    Bridge,
    HeavyT5,
    Kraus,
}

#[derive(Debug, Clone, PartialEq)]
enum CovErrors {
    /// Scalar MA(1) in the Fourier basis, `κ = 0` for independent curves.
    Ma(SigmaProfile, f64),
    Kraus,
}

#[derive(Debug, Clone, PartialEq)]
enum Family {
    /// One sample with mean `√(2δ) sin(2πt)`; the sweep is `δ`.
    MeanShift(Errors),
    /// fAR(1) at the boundary `∫μ² = Δ`; the sweep is `κ`.
    Far1Boundary { heavy: bool },
    /// `μ₁ = 0`, `μ₂ = a t(1−t)`; the sweep is `a`.
    TwoSample(Errors),
    /// Both samples cut from one fMA(1) path.
    Dependent { sqrt3: bool },
    /// Mean change `a t(1−t)` after `⌊Nθ₀⌋`.
    MeanChange { errors: Errors, sqrt3: bool },
    /// Second covariance scaled by `a²`.
    CovTwoSample(CovErrors),
    /// Curves after `⌊Nθ₀⌋` multiplied by `a`.
    CovChange(CovErrors),
    /// Independent covariance two-sample problem at `a = 1.5`; the sweep is `m = n`.
    CovTable(SigmaProfile),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: &'static str,
    pub test: TestKind,
    pub param_name: &'static str,
    pub default_sweep: Vec<f64>,
    pub default_delta: f64,
    /// Sweep value on the boundary `distance = Δ` at the default Δ, if the sweep crosses it.
    pub boundary: Option<f64>,
    pub n1: usize,
    /// Second sample size, 0 for single-sample designs.
    pub n2: usize,
    family: Family,
}

fn sigma_b() -> SigmaProfile {
    SigmaProfile::Geo
}

fn sigma4_sum(sigma: &SigmaProfile) -> f64 {
    sigma
        .variances(DIM)
        .expect("registered profiles are valid")
        .iter()
        .map(|s| s * s)
        .sum()
}

fn cov_ma_delta(sigma: &SigmaProfile) -> f64 {
    cov_scenario_distance(
        &sigma.variances(DIM).expect("registered profiles are valid"),
        COV_BOUNDARY,
        COV_KAPPA,
    )
}

fn cov_iid_delta(sigma: &SigmaProfile) -> f64 {
    (1.0 - COV_BOUNDARY * COV_BOUNDARY).powi(2) * sigma4_sum(sigma)
}

fn cov_kraus_delta() -> f64 {
    (1.0 - COV_BOUNDARY * COV_BOUNDARY).powi(2) * kraus_cov_norm_sq()
}

const SCENARIO_IDS: [&str; 27] = [
    "fig1_iid",
    "fig1_fma",
    "fig1_bb",
    "fig2_lrv_comparison",
    "appA5_lrv_heavy",
    "fig3_two_sample_iid",
    "fig3_two_sample_fma",
    "fig3_two_sample_bb",
    "fig4_normalizers_fma",
    "fig4_normalizers_kraus",
    "appA1_heavy_two_sample",
    "appA2_dependent",
    "appA2_dependent_sqrt3",
    "fig5_cp",
    "fig6_cp_histogram",
    "cp_fma",
    "cp_fma_sqrt3",
    "fig7_cov2s_A",
    "fig7_cov2s_B",
    "fig8_covcp_A",
    "fig8_covcp_B",
    "tableA1_cov_iid_A",
    "tableA1_cov_iid_B",
    "appA_cov_kraus",
    "appA_cov_iid_cp_A",
    "appA_cov_iid_cp_B",
    "appA_cov_kraus_cp",
];

const GROUPS: [(&str, &[&str]); 6] = [
    ("fig1", &["fig1_iid", "fig1_fma", "fig1_bb"]),
    (
        "fig3_two_sample",
        &["fig3_two_sample_iid", "fig3_two_sample_fma", "fig3_two_sample_bb"],
    ),
    ("fig4_normalizers", &["fig4_normalizers_fma", "fig4_normalizers_kraus"]),
    ("fig7_cov2s", &["fig7_cov2s_A", "fig7_cov2s_B"]),
    ("fig8_covcp", &["fig8_covcp_A", "fig8_covcp_B"]),
    ("tableA1_cov_iid", &["tableA1_cov_iid_A", "tableA1_cov_iid_B"]),
];

/// Individual scenario ids followed by group ids.
pub fn scenario_ids() -> Vec<&'static str> {
    SCENARIO_IDS.iter().copied().chain(GROUPS.iter().map(|g| g.0)).collect()
}

/// Look up a single registered scenario.
pub fn scenario(id: &str) -> Result<Scenario> {
    let a_sweep = || vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
    let cov_sweep = || vec![1.0, 1.25, 1.5, 1.75, 2.0];
    let single = |test, param_name, sweep, delta, n1, family| Scenario {
        id: SCENARIO_IDS.iter().copied().find(|s| *s == id).expect("id checked"),
        test,
        param_name,
        default_sweep: sweep,
        default_delta: delta,
        boundary: None,
        n1,
        n2: 0,
        family,
    };
    let pair = |test, sweep, delta, n1, n2, family| Scenario {
        n2,
        ..single(test, "a", sweep, delta, n1, family)
    };
    if !SCENARIO_IDS.contains(&id) {
        return Err(Error::UnknownScenario(id.to_string()));
    }
    use TestKind::*;
    let fig1 = |e| {
        single(
            OneSample,
            "delta",
            vec![0.0, 0.01, 0.02, 0.03, 0.04],
            0.02,
            200,
            Family::MeanShift(e),
        )
    };
    let lrv = |heavy| {
        single(
            OneSample,
            "kappa",
            vec![0.0, 0.2, 0.4, 0.6, 0.8],
            0.5,
            100,
            Family::Far1Boundary { heavy },
        )
    };
    let d2 = 0.2f64.powi(2) / 30.0;
    let d3 = 0.3f64.powi(2) / 30.0;
    let two = |e, m, n| pair(TwoSample, a_sweep(), d2, m, n, Family::TwoSample(e));
    let dep = |sqrt3| {
        pair(
            TwoSample,
            vec![0.0, 0.15, 0.3, 0.45, 0.6],
            d3,
            100,
            100,
            Family::Dependent { sqrt3 },
        )
    };
    let cp = |errors, sqrt3| {
        single(
            ChangePoint,
            "a",
            vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            d3,
            200,
            Family::MeanChange { errors, sqrt3 },
        )
    };
    let cov2 = |sig: SigmaProfile| {
        let delta = cov_ma_delta(&sig);
        pair(
            CovTwoSample,
            cov_sweep(),
            delta,
            200,
            200,
            Family::CovTwoSample(CovErrors::Ma(sig, COV_KAPPA)),
        )
    };
    let covcp = |sig: SigmaProfile| {
        let delta = cov_ma_delta(&sig);
        single(
            CovChangePoint,
            "a",
            cov_sweep(),
            delta,
            200,
            Family::CovChange(CovErrors::Ma(sig, COV_KAPPA)),
        )
    };
    let table = |sig: SigmaProfile| {
        let delta = cov_iid_delta(&sig);
        Scenario {
            n2: 100,
            ..single(
                CovTwoSample,
                "n",
                vec![100.0, 200.0, 500.0],
                delta,
                100,
                Family::CovTable(sig),
            )
        }
    };
    let iid_cp = |sig: SigmaProfile| {
        let delta = cov_iid_delta(&sig);
        single(
            CovChangePoint,
            "a",
            cov_sweep(),
            delta,
            200,
            Family::CovChange(CovErrors::Ma(sig, 0.0)),
        )
    };
    let mut sc = match id {
        "fig1_iid" => fig1(Errors::Iid),
        "fig1_fma" => fig1(Errors::Fma),
        "fig1_bb" => fig1(Errors::Bridge),
        "fig2_lrv_comparison" => lrv(false),
        "appA5_lrv_heavy" => lrv(true),
        "fig3_two_sample_iid" => two(Errors::Iid, 100, 100),
        "fig3_two_sample_fma" => two(Errors::Fma, 100, 100),
        "fig3_two_sample_bb" => two(Errors::Bridge, 100, 100),
        "fig4_normalizers_fma" => two(Errors::Fma, 50, 100),
        "fig4_normalizers_kraus" => two(Errors::Kraus, 50, 100),
        "appA1_heavy_two_sample" => two(Errors::HeavyT5, 50, 100),
        "appA2_dependent" => dep(false),
        "appA2_dependent_sqrt3" => dep(true),
        "fig5_cp" => cp(Errors::Iid, false),
        "fig6_cp_histogram" => Scenario {
            default_sweep: vec![0.1, 0.2, 0.3],
            ..cp(Errors::Iid, false)
        },
        "cp_fma" => cp(Errors::Fma, false),
        "cp_fma_sqrt3" => cp(Errors::Fma, true),
        "fig7_cov2s_A" => cov2(SigmaProfile::InvISq),
        "fig7_cov2s_B" => cov2(sigma_b()),
        "fig8_covcp_A" => covcp(SigmaProfile::InvISq),
        "fig8_covcp_B" => covcp(sigma_b()),
        "tableA1_cov_iid_A" => table(SigmaProfile::InvISq),
        "tableA1_cov_iid_B" => table(sigma_b()),
        "appA_cov_kraus" => pair(
            CovTwoSample,
            cov_sweep(),
            cov_kraus_delta(),
            200,
            200,
            Family::CovTwoSample(CovErrors::Kraus),
        ),
        "appA_cov_iid_cp_A" => iid_cp(SigmaProfile::InvISq),
        "appA_cov_iid_cp_B" => iid_cp(sigma_b()),
        "appA_cov_kraus_cp" => single(
            CovChangePoint,
            "a",
            cov_sweep(),
            cov_kraus_delta(),
            200,
            Family::CovChange(CovErrors::Kraus),
        ),
        _ => unreachable!("id checked above"),
    };
    sc.boundary = boundary(&sc.family, sc.default_delta);
    Ok(sc)
}

fn boundary(family: &Family, delta: f64) -> Option<f64> {
    match family {
        Family::MeanShift(_) => Some(delta),
        Family::TwoSample(_) | Family::Dependent { .. } | Family::MeanChange { .. } => Some((30.0 * delta).sqrt()),
        Family::CovTwoSample(_) | Family::CovChange(_) => Some(COV_BOUNDARY),
        Family::Far1Boundary { .. } | Family::CovTable(_) => None,
    }
}

/// Resolve an individual id or a group id.
pub fn expand(id: &str) -> Result<Vec<Scenario>> {
    if let Some((_, members)) = GROUPS.iter().find(|g| g.0 == id) {
        return members.iter().map(|m| scenario(m)).collect();
    }
    Ok(vec![scenario(id)?])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: String,
    pub replications: usize,
    /// Overrides the scenario's default sweep.
    #[serde(default)]
    pub sweep: Option<Vec<f64>>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub n1: Option<usize>,
    #[serde(default)]
    pub n2: Option<usize>,
    pub alphas: Vec<f64>,
    pub master_seed: u64,
    pub nu: NuMeasure,
    pub trim: f64,
    pub resolution: usize,
}

impl ExperimentSpec {
    pub fn new(scenario: &str, replications: usize) -> Self {
        ExperimentSpec {
            scenario: scenario.to_string(),
            replications,
            sweep: None,
            delta: None,
            n1: None,
            n2: None,
            alphas: DEFAULT_ALPHAS.to_vec(),
            master_seed: DEFAULT_MASTER_SEED,
            nu: NuMeasure::default(),
            trim: DEFAULT_TRIM,
            resolution: Grid::default().resolution(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < MIN_REPLICATIONS {
            return Err(Error::InvalidParameter(format!(
                "at least {MIN_REPLICATIONS} replications are required, got {}",
                self.replications
            )));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(Error::InvalidParameter("levels must lie in (0, 1)".into()));
        }
        if let Some(d) = self.delta {
            if d == 0.0 {
                return Err(Error::ZeroThreshold);
            }
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::InvalidParameter(format!("delta must be positive, got {d}")));
            }
        }
        if self.n1 == Some(0) || self.n2 == Some(0) {
            return Err(Error::InvalidParameter("sample sizes must be positive".into()));
        }
        Grid::new(self.resolution)?;
        Ok(())
    }
}

/// Pivotal quantile tables keyed by pivot kind, all for the same ν.
#[derive(Debug, Clone, Default)]
pub struct QuantileBook {
    tables: Vec<PivotalQuantiles>,
}

fn upper_probabilities(alphas: &[f64]) -> Vec<f64> {
    alphas.iter().map(|a| 1.0 - a).collect()
}

impl QuantileBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, table: PivotalQuantiles) {
        self.tables.retain(|t| t.kind != table.kind);
        self.tables.push(table);
    }

    pub fn tables(&self) -> &[PivotalQuantiles] {
        &self.tables
    }

    pub fn get(&self, kind: PivotKind) -> Result<&PivotalQuantiles> {
        self.tables
            .iter()
            .find(|t| t.kind == kind)
            .ok_or_else(|| Error::InvalidParameter(format!("no {} quantile table loaded", kind.as_str())))
    }

    /// Simulate tables for `kinds` at the probabilities `1 − α`.
    pub fn simulate(
        nu: &NuMeasure,
        kinds: &[PivotKind],
        alphas: &[f64],
        replications: usize,
        bm_steps: usize,
        seed: u64,
    ) -> Result<Self> {
        let probs = upper_probabilities(alphas);
        let mut book = Self::new();
        for &kind in kinds {
            book.insert(build_quantile_table(kind, nu, &probs, replications, bm_steps, seed)?);
        }
        Ok(book)
    }

    /// As [`QuantileBook::simulate`], reading and filling `cache`.
    pub fn from_cache(
        cache: &QuantileCache,
        nu: &NuMeasure,
        kinds: &[PivotKind],
        alphas: &[f64],
        replications: usize,
        bm_steps: usize,
        seed: u64,
    ) -> Result<Self> {
        let probs = upper_probabilities(alphas);
        let mut book = Self::new();
        for &kind in kinds {
            let (table, hit) = cache.get_or_build(kind, nu, &probs, replications, bm_steps, seed)?;
            if !hit {
                log::info!(
                    "built {} quantile table with {replications} replications",
                    kind.as_str()
                );
            }
            book.insert(table);
        }
        Ok(book)
    }

    fn quantile(&self, kind: PivotKind, nu: &NuMeasure, p: f64) -> Result<f64> {
        let table = self.get(kind)?;
        if table.nu.fingerprint() != nu.fingerprint() {
            return Err(Error::QuantileNuMismatch);
        }
        table.quantile(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SnStandard,
    SnSup,
    SnAbs,
    /// Normal calibration with a Bartlett long-run variance estimate.
    LrvEstimated,
    /// Normal calibration with the true long-run variance.
    LrvTrue,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::SnStandard => "sn_standard",
            Method::SnSup => "sn_sup",
            Method::SnAbs => "sn_abs",
            Method::LrvEstimated => "lrv_estimated",
            Method::LrvTrue => "lrv_true",
        }
    }

    fn normalizer_kind(&self) -> Option<NormalizerKind> {
        match self {
            Method::SnStandard => Some(NormalizerKind::Standard),
            Method::SnSup => Some(NormalizerKind::Sup),
            Method::SnAbs => Some(NormalizerKind::Abs),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRow {
    pub scenario: String,
    pub method: String,
    pub param_name: String,
    pub param: f64,
    pub n1: usize,
    pub n2: usize,
    pub delta: f64,
    pub alpha: f64,
    pub rejections: usize,
    pub replications: usize,
    pub rate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RejectionTable {
    pub rows: Vec<RejectionRow>,
}

impl RejectionTable {
    /// First row matching the arguments, with `param` and `alpha` compared to 1e-12.
    pub fn find(&self, scenario: &str, method: Method, param: f64, alpha: f64) -> Option<&RejectionRow> {
        self.rows.iter().find(|r| {
            r.scenario == scenario
                && r.method == method.as_str()
                && (r.param - param).abs() < 1e-12
                && (r.alpha - alpha).abs() < 1e-12
        })
    }

    pub fn rate(&self, scenario: &str, method: Method, param: f64, alpha: f64) -> Option<f64> {
        self.find(scenario, method, param, alpha).map(|r| r.rate)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<RejectionRow>, _>>()
            .map_err(csv_err)?;
        Ok(RejectionTable { rows })
    }
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Csv {
        line,
        message: e.to_string(),
    }
}

/// Seed of replication `rep` at sweep point `point`: the first eight bytes of
/// SHA-256 over the little-endian master seed, the scenario id, the point and
/// the replication index.
pub fn replication_seed(master_seed: u64, scenario: &str, point: usize, rep: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update((scenario.len() as u64).to_le_bytes());
    h.update(scenario.as_bytes());
    h.update((point as u64).to_le_bytes());
    h.update((rep as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, Copy)]
struct Point {
    index: usize,
    param: f64,
    n1: usize,
    n2: usize,
    delta: f64,
}

fn points(sc: &Scenario, spec: &ExperimentSpec) -> Result<Vec<Point>> {
    let sweep = spec.sweep.clone().unwrap_or_else(|| sc.default_sweep.clone());
    if sweep.is_empty() {
        return Err(Error::InvalidParameter("empty sweep".into()));
    }
    let delta = spec.delta.unwrap_or(sc.default_delta);
    sweep
        .into_iter()
        .enumerate()
        .map(|(index, param)| {
            if !param.is_finite() {
                return Err(Error::InvalidParameter(format!("sweep value {param} is not finite")));
            }
            let (n1, n2) = if let Family::CovTable(_) = sc.family {
                if param < 2.0 || param.fract() != 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "sample size {param} is not an integer ≥ 2"
                    )));
                }
                (param as usize, param as usize)
            } else {
                let n1 = spec.n1.unwrap_or(sc.n1);
                let n2 = if sc.n2 == 0 { 0 } else { spec.n2.unwrap_or(sc.n2) };
                (n1, n2)
            };
            Ok(Point {
                index,
                param,
                n1,
                n2,
                delta,
            })
        })
        .collect()
}

fn base_spec(grid: Grid, family: BasisFamily, n: usize, seed: u64) -> DgpSpec {
    DgpSpec {
        basis: BasisSpec {
            family,
            dimension: DIM,
            grid,
        },
        n,
        seed,
        ..DgpSpec::default()
    }
}

fn errors(kind: Errors, n: usize, seed: u64, grid: Grid) -> Result<FunctionalSample> {
    let spec = base_spec(grid, BasisFamily::Bspline, n, seed);
    match kind {
        Errors::Iid => sample_iid_basis(&spec),
        Errors::Fma => sample_fma1(&DgpSpec {
            process: Process::Fma1,
            ..spec
        }),
        Errors::Bridge => sample_brownian_bridge(n, grid, &Curve::zeros(grid), seed),
        Errors::HeavyT5 => sample_heavy_t5_basis(&spec),
        Errors::Kraus => sample_kraus_t5(n, grid, seed, 1.0),
    }
}

fn cov_errors(kind: &CovErrors, n: usize, seed: u64, grid: Grid, scale: f64) -> Result<FunctionalSample> {
    match kind {
        CovErrors::Ma(sigma, kappa) => sample_scalar_ma1(&DgpSpec {
            sigma: sigma.clone(),
            kappa: *kappa,
            scale,
            ..base_spec(grid, BasisFamily::Fourier, n, seed)
        }),
        CovErrors::Kraus => sample_kraus_t5(n, grid, seed, scale),
    }
}

enum Data {
    One(FunctionalSample),
    Two(FunctionalSample, FunctionalSample),
}

fn generate(sc: &Scenario, pt: &Point, seed: u64, grid: Grid) -> Result<Data> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (s0, s1) = (rng.next_u64(), rng.next_u64());
    let parabola = || make_mean(MeanSpec::Parabola(pt.param), grid);
    let sqrt3 = |flag: bool| if flag { 3f64.sqrt() } else { 1.0 };
    Ok(match &sc.family {
        Family::MeanShift(e) => {
            let mean = make_mean(MeanSpec::SinSqrt2Delta(pt.param), grid)?;
            Data::One(errors(*e, pt.n1, s0, grid)?.shifted(&mean)?)
        }
        Family::Far1Boundary { heavy } => Data::One(sample_far1(&DgpSpec {
            process: Process::Far1,
            kappa: pt.param,
            mean: MeanSpec::SinSqrt2Delta(pt.delta),
            innovation: if *heavy {
                Innovation::StudentT5
            } else {
                Innovation::Gaussian
            },
            ..base_spec(grid, BasisFamily::Fourier, pt.n1, s0)
        })?),
        Family::TwoSample(e) => Data::Two(
            errors(*e, pt.n1, s0, grid)?,
            errors(*e, pt.n2, s1, grid)?.shifted(&parabola()?)?,
        ),
        Family::Dependent { sqrt3: flag } => {
            let path = errors(Errors::Fma, pt.n1 + pt.n2, s0, grid)?;
            let y = path
                .slice(pt.n1, pt.n1 + pt.n2)?
                .scaled(sqrt3(*flag))
                .shifted(&parabola()?)?;
            Data::Two(path.slice(0, pt.n1)?, y)
        }
        Family::MeanChange { errors: e, sqrt3: flag } => {
            let eps = errors(*e, pt.n1, s0, grid)?;
            Data::One(inject_change(&eps, THETA0, sqrt3(*flag), &parabola()?)?)
        }
        Family::CovTwoSample(CovErrors::Ma(sigma, kappa)) => {
            let (x, y) = sample_cov_scenario(&DgpSpec {
                sigma: sigma.clone(),
                kappa: *kappa,
                scale: pt.param,
                n2: Some(pt.n2),
                ..base_spec(grid, BasisFamily::Fourier, pt.n1, s0)
            })?;
            Data::Two(x, y)
        }
        Family::CovTwoSample(kind) => Data::Two(
            cov_errors(kind, pt.n1, s0, grid, 1.0)?,
            cov_errors(kind, pt.n2, s1, grid, pt.param)?,
        ),
        Family::CovChange(kind) => {
            let x = cov_errors(kind, pt.n1, s0, grid, 1.0)?;
            Data::One(inject_change(&x, THETA0, pt.param, &Curve::zeros(grid))?)
        }
        Family::CovTable(sigma) => {
            let (x, y) = sample_cov_scenario(&DgpSpec {
                sigma: sigma.clone(),
                kappa: 0.0,
                scale: COV_BOUNDARY,
                n2: Some(pt.n2),
                ..base_spec(grid, BasisFamily::Fourier, pt.n1, s0)
            })?;
            Data::Two(x, y)
        }
    })
}

fn one(data: &Data) -> &FunctionalSample {
    match data {
        Data::One(x) | Data::Two(x, _) => x,
    }
}

fn two(data: &Data) -> Result<(&FunctionalSample, &FunctionalSample)> {
    match data {
        Data::Two(x, y) => Ok((x, y)),
        Data::One(_) => Err(Error::InvalidParameter("two-sample test needs two samples".into())),
    }
}

/// The λ-profile of the scenario's test, and the estimated break for the
/// change-point tests.
fn profile(test: TestKind, data: &Data, nu: &NuMeasure, trim: f64) -> Result<(LambdaProfile, Option<f64>)> {
    let check_split = |k: usize, n: usize| {
        if k >= n {
            Err(Error::EmptyAdmissibleRange { n, trim })
        } else {
            Ok(())
        }
    };
    Ok(match test {
        TestKind::OneSample => (one_sample_profile(one(data), nu), None),
        TestKind::TwoSample => {
            let (x, y) = two(data)?;
            (two_sample_profile(x, y, nu)?, None)
        }
        TestKind::ChangePoint => {
            let x = one(data);
            let fit = estimate_changepoint(x, trim)?;
            check_split(fit.k_hat, x.n())?;
            (cp_profile_at(x, nu, fit.k_hat)?, Some(fit.theta_hat))
        }
        TestKind::CovTwoSample => {
            let (x, y) = two(data)?;
            (cov_two_sample_profile(x, y, nu)?, None)
        }
        TestKind::CovChangePoint => {
            let x = one(data);
            let fit = cov_estimate_changepoint(x, trim)?;
            (cov_cp_profile(x, nu, fit.k_hat)?, Some(fit.theta_hat))
        }
    })
}

/// `(statistic, normalizer)` for each method.
fn evaluate(
    sc: &Scenario,
    pt: &Point,
    data: &Data,
    spec: &ExperimentSpec,
    methods: &[Method],
) -> Result<Vec<(f64, f64)>> {
    let (prof, _) = profile(sc.test, data, &spec.nu, spec.trim)?;
    let stat = prof.at_one();
    methods
        .iter()
        .map(|m| {
            let v = match m {
                Method::SnStandard | Method::SnSup | Method::SnAbs => {
                    self_normalizer(&prof, &spec.nu, m.normalizer_kind().expect("self-normalized method"))?
                }
                Method::LrvEstimated => {
                    let x = one(data);
                    let (tau2, _) = tau2_hat_projected(x, default_bandwidth(x.n()))?;
                    (tau2 / x.n() as f64).sqrt()
                }
                Method::LrvTrue => (true_tau2(sc, pt)? / one(data).n() as f64).sqrt(),
            };
            Ok((stat, v))
        })
        .collect()
}

fn true_tau2(sc: &Scenario, pt: &Point) -> Result<f64> {
    match sc.family {
        Family::Far1Boundary { .. } => {
            let sigma2 = SigmaProfile::InvISq.variances(DIM)?;
            let mut coef = vec![0.0; DIM];
            coef[1] = pt.delta.sqrt();
            Ok(far1_tau2(pt.param, &sigma2, &coef))
        }
        _ => Err(Error::InvalidParameter(format!(
            "scenario {} has no closed-form long-run variance",
            sc.id
        ))),
    }
}

fn check_methods(sc: &Scenario, methods: &[Method]) -> Result<()> {
    let lrv = methods.iter().any(|m| m.normalizer_kind().is_none());
    if lrv && !matches!(sc.family, Family::Far1Boundary { .. }) {
        return Err(Error::InvalidParameter(format!(
            "long-run variance calibration is only available for the fAR(1) scenarios, not {}",
            sc.id
        )));
    }
    Ok(())
}

fn pivot_quantiles(book: &QuantileBook, nu: &NuMeasure, methods: &[Method], alphas: &[f64]) -> Result<Vec<Vec<f64>>> {
    methods
        .iter()
        .map(|m| {
            alphas
                .iter()
                .map(|a| match m.normalizer_kind() {
                    Some(k) => book.quantile(PivotKind::for_normalizer(k), nu, 1.0 - a),
                    None => Ok(normal_quantile(1.0 - a)),
                })
                .collect()
        })
        .collect()
}

/// Rejection rates of the relevant-hypothesis tests under `methods`.
pub fn run_methods(spec: &ExperimentSpec, book: &QuantileBook, methods: &[Method]) -> Result<RejectionTable> {
    spec.validate()?;
    let scenarios = expand(&spec.scenario)?;
    let grid = Grid::new(spec.resolution)?;
    let quantiles = pivot_quantiles(book, &spec.nu, methods, &spec.alphas)?;
    let mut table = RejectionTable::default();
    for sc in &scenarios {
        check_methods(sc, methods)?;
        if matches!(sc.test, TestKind::CovTwoSample | TestKind::CovChangePoint) {
            check_nu_floor(&spec.nu, NU_FLOOR)?;
        }
        for pt in points(sc, spec)? {
            let evals: Vec<Vec<(f64, f64)>> = (0..spec.replications)
                .into_par_iter()
                .map(|r| {
                    let seed = replication_seed(spec.master_seed, sc.id, pt.index, r);
                    let data = generate(sc, &pt, seed, grid)?;
                    evaluate(sc, &pt, &data, spec, methods)
                })
                .collect::<Result<_>>()?;
            for (mi, m) in methods.iter().enumerate() {
                for (ai, &alpha) in spec.alphas.iter().enumerate() {
                    let q = quantiles[mi][ai];
                    let rejections = evals
                        .iter()
                        .filter(|e| decide(e[mi].0, e[mi].1, q, pt.delta, Direction::Relevant).1)
                        .count();
                    let reps = spec.replications;
                    let rate = rejections as f64 / reps as f64;
                    table.rows.push(RejectionRow {
                        scenario: sc.id.to_string(),
                        method: m.as_str().to_string(),
                        param_name: sc.param_name.to_string(),
                        param: pt.param,
                        n1: pt.n1,
                        n2: pt.n2,
                        delta: pt.delta,
                        alpha,
                        rejections,
                        replications: reps,
                        rate,
                        stderr: (rate * (1.0 - rate) / reps as f64).sqrt(),
                    });
                }
            }
        }
    }
    Ok(table)
}

/// Self-normalized test with the standard normalizer.
pub fn run_experiment(spec: &ExperimentSpec, book: &QuantileBook) -> Result<RejectionTable> {
    run_methods(spec, book, &[Method::SnStandard])
}

/// The three self-normalizers on identical simulated data.
pub fn compare_normalizers(spec: &ExperimentSpec, book: &QuantileBook) -> Result<RejectionTable> {
    run_methods(spec, book, &[Method::SnStandard, Method::SnSup, Method::SnAbs])
}

/// Self-normalization against normal calibration with estimated and true
/// long-run variance, on identical simulated data.
pub fn compare_lrv(spec: &ExperimentSpec, book: &QuantileBook) -> Result<RejectionTable> {
    run_methods(spec, book, &[Method::SnStandard, Method::LrvEstimated, Method::LrvTrue])
}

/// Pivot tables needed for `methods`.
pub fn pivot_kinds(methods: &[Method]) -> Vec<PivotKind> {
    let mut kinds: Vec<PivotKind> = methods
        .iter()
        .filter_map(|m| m.normalizer_kind().map(PivotKind::for_normalizer))
        .collect();
    kinds.dedup();
    kinds
}

/// Estimated break fractions per sweep point for change-point scenarios.
pub fn changepoint_estimates(spec: &ExperimentSpec) -> Result<Vec<(String, f64, Vec<f64>)>> {
    spec.validate()?;
    let grid = Grid::new(spec.resolution)?;
    let mut out = Vec::new();
    for sc in expand(&spec.scenario)? {
        if !matches!(sc.test, TestKind::ChangePoint | TestKind::CovChangePoint) {
            return Err(Error::InvalidParameter(format!(
                "{} is not a change-point scenario",
                sc.id
            )));
        }
        for pt in points(&sc, spec)? {
            let thetas = (0..spec.replications)
                .into_par_iter()
                .map(|r| {
                    let seed = replication_seed(spec.master_seed, sc.id, pt.index, r);
                    let data = generate(&sc, &pt, seed, grid)?;
                    let x = one(&data);
                    let fit = match sc.test {
                        TestKind::ChangePoint => estimate_changepoint(x, spec.trim)?,
                        _ => cov_estimate_changepoint(x, spec.trim)?,
                    };
                    Ok(fit.theta_hat)
                })
                .collect::<Result<Vec<f64>>>()?;
            out.push((sc.id.to_string(), pt.param, thetas));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub scenario: String,
    pub param: f64,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
}

/// Counts of `values` in `bins` equal-width bins on [0, 1]; 1 falls in the last bin.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let mut counts = vec![0usize; bins];
    for &v in values {
        if (0.0..=1.0).contains(&v) {
            let b = ((v * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (i as f64 / bins as f64, (i + 1) as f64 / bins as f64, c))
        .collect()
}

pub fn changepoint_histogram(spec: &ExperimentSpec, bins: usize) -> Result<Vec<HistogramRow>> {
    if bins == 0 {
        return Err(Error::InvalidParameter("need at least one bin".into()));
    }
    Ok(changepoint_estimates(spec)?
        .into_iter()
        .flat_map(|(scenario, param, thetas)| {
            histogram(&thetas, bins)
                .into_iter()
                .map(move |(bin_lo, bin_hi, count)| HistogramRow {
                    scenario: scenario.clone(),
                    param,
                    bin_lo,
                    bin_hi,
                    count,
                })
        })
        .collect())
}

pub fn write_histogram_csv(rows: &[HistogramRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Methods a scenario is designed to compare.
pub fn default_methods(id: &str) -> Vec<Method> {
    match id {
        "fig4_normalizers_fma" | "fig4_normalizers_kraus" | "appA1_heavy_two_sample" => {
            vec![Method::SnStandard, Method::SnSup, Method::SnAbs]
        }
        "fig2_lrv_comparison" | "appA5_lrv_heavy" => vec![Method::SnStandard, Method::LrvEstimated, Method::LrvTrue],
        _ => vec![Method::SnStandard],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableInfo {
    pub kind: PivotKind,
    pub replications: usize,
    pub bm_steps: usize,
    pub seed: u64,
    pub nu_fingerprint: String,
}

/// Everything needed to regenerate a rejection table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: ExperimentSpec,
    pub methods: Vec<Method>,
    pub crate_version: String,
    pub rng_algorithm: String,
    pub seed_derivation: String,
    pub quantile_tables: Vec<TableInfo>,
}

impl Manifest {
    pub fn new(spec: &ExperimentSpec, book: &QuantileBook, methods: &[Method]) -> Self {
        Manifest {
            spec: spec.clone(),
            methods: methods.to_vec(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            rng_algorithm: RNG_ALGORITHM.to_string(),
            seed_derivation:
                "sha256(master_seed_le, len(scenario)_le, scenario, point_le, replication_le)[0..8] as u64 le; \
                              chacha8 seeded from it yields the per-sample seeds"
                    .to_string(),
            quantile_tables: book
                .tables()
                .iter()
                .map(|t| TableInfo {
                    kind: t.kind,
                    replications: t.replications,
                    bm_steps: t.bm_steps,
                    seed: t.seed,
                    nu_fingerprint: t.nu.fingerprint(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
