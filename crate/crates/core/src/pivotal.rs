//! Simulated quantiles of the pivotal limits `W`, `W*` and `W**`.
//!
//! With `B` a standard Brownian motion on [0, 1] and `U(λ) = λ (B(λ) − λ B(1))`,
//!
//! ```text
//! W   = B(1) / ( ∫ U(λ)² ν(dλ) )^{1/2}
//! W*  = B(1) / ν-ess sup |U(λ)|
//! W** = B(1) / ∫ |U(λ)| ν(dλ)
//! ```
//!
//! Brownian paths are cumulative sums of `N(0, 1/bm_steps)` increments and
//! are read off at index `floor(λ bm_steps)`. Replications are split into
//! fixed-size chunks; chunk `c` uses a ChaCha8 generator seeded with `seed`
//! on stream `c`, so results do not depend on the number of worker threads.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::func_core::{floor_count, NormalizerKind, NuMeasure};

pub const DEFAULT_REPLICATIONS: usize = 100_000;
pub const DEFAULT_BM_STEPS: usize = 2000;
pub const DEFAULT_SEED: u64 = 42;
/// Minimum replication count for a persisted quantile table.
pub const MIN_TABLE_REPLICATIONS: usize = 1000;
/// Probabilities tabulated when the caller does not ask for specific ones.
pub const DEFAULT_PROBABILITIES: [f64; 9] = [0.01, 0.025, 0.05, 0.1, 0.5, 0.9, 0.95, 0.975, 0.99];
/// Recorded in every cache file and cache key.
pub const RNG_ALGORITHM: &str = "chacha8-stream-per-1000-replications/standard-normal-ziggurat";

const CHUNK: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PivotKind {
    W,
    #[serde(rename = "Wstar")]
    WStar,
    #[serde(rename = "Wstarstar")]
    WStarStar,
}

impl PivotKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PivotKind::W => "W",
            PivotKind::WStar => "Wstar",
            PivotKind::WStarStar => "Wstarstar",
        }
    }

    /// The pivot calibrating a given self-normalizer.
    pub fn for_normalizer(kind: NormalizerKind) -> Self {
        match kind {
            NormalizerKind::Standard => PivotKind::W,
            NormalizerKind::Sup => PivotKind::WStar,
            NormalizerKind::Abs => PivotKind::WStarStar,
        }
    }

    pub fn normalizer(&self) -> NormalizerKind {
        match self {
            PivotKind::W => NormalizerKind::Standard,
            PivotKind::WStar => NormalizerKind::Sup,
            PivotKind::WStarStar => NormalizerKind::Abs,
        }
    }
}

impl std::str::FromStr for PivotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "w" => Ok(PivotKind::W),
            "wstar" | "w*" => Ok(PivotKind::WStar),
            "wstarstar" | "w**" => Ok(PivotKind::WStarStar),
            other => Err(Error::InvalidParameter(format!("unknown pivot `{other}`"))),
        }
    }
}

/// One pivot draw; `None` when the denominator is exactly zero.
fn pivot_draw(
    rng: &mut ChaCha8Rng,
    kind: PivotKind,
    nu: &NuMeasure,
    indices: &[usize],
    bm_steps: usize,
    at_atoms: &mut [f64],
) -> Option<f64> {
    let sd = (1.0 / bm_steps as f64).sqrt();
    let mut b = 0.0;
    let mut next = 0;
    // atoms sitting at index 0 see B(0) = 0
    while next < indices.len() && indices[next] == 0 {
        at_atoms[next] = 0.0;
        next += 1;
    }
    for step in 1..=bm_steps {
        let z: f64 = rng.sample(StandardNormal);
        b += sd * z;
        while next < indices.len() && indices[next] == step {
            at_atoms[next] = b;
            next += 1;
        }
    }
    let b1 = b;
    let mut acc = 0.0f64;
    for ((lambda, w), &bl) in nu.atoms().zip(at_atoms.iter()) {
        let u = lambda * (bl - lambda * b1);
        match kind {
            PivotKind::W => acc += w * u * u,
            PivotKind::WStarStar => acc += w * u.abs(),
            PivotKind::WStar => {
                if w > 0.0 {
                    acc = acc.max(u.abs());
                }
            }
        }
    }
    let denom = match kind {
        PivotKind::W => acc.sqrt(),
        _ => acc,
    };
    if denom > 0.0 {
        Some(b1 / denom)
    } else {
        None
    }
}

/// `replications` independent draws of the pivot.
pub fn simulate_pivot_draws(
    kind: PivotKind,
    nu: &NuMeasure,
    replications: usize,
    bm_steps: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if replications == 0 {
        return Err(Error::InvalidParameter("replications must be positive".into()));
    }
    if bm_steps == 0 {
        return Err(Error::InvalidParameter("bm_steps must be positive".into()));
    }
    let indices: Vec<usize> = nu.support().iter().map(|&l| floor_count(bm_steps, l)).collect();
    let chunks = replications.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = CHUNK.min(replications - c * CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut at_atoms = vec![0.0; indices.len()];
            let mut out = Vec::with_capacity(len);
            while out.len() < len {
                if let Some(v) = pivot_draw(&mut rng, kind, nu, &indices, bm_steps, &mut at_atoms) {
                    out.push(v);
                }
            }
            out
        })
        .collect();
    Ok(parts.concat())
}

/// Quantile of a sorted slice with linear interpolation, `h = (n − 1) p + 1`.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Empirical `p`-quantile with linear interpolation between order statistics.
pub fn quantile(draws: &[f64], p: f64) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::EmptyDraws);
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("probability {p} outside (0, 1)")));
    }
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, p))
}

/// Quantiles of one pivot under one ν, with the settings that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotalQuantiles {
    pub kind: PivotKind,
    pub nu: NuMeasure,
    pub replications: usize,
    pub bm_steps: usize,
    pub seed: u64,
    table: Vec<(f64, f64)>,
}

impl PivotalQuantiles {
    /// Wrap externally obtained quantiles (e.g. a published table).
    pub fn from_values(
        kind: PivotKind,
        nu: NuMeasure,
        replications: usize,
        bm_steps: usize,
        seed: u64,
        mut table: Vec<(f64, f64)>,
    ) -> Result<Self> {
        table.sort_by(|a, b| a.0.total_cmp(&b.0));
        if table.iter().any(|&(p, _)| !(p > 0.0 && p < 1.0)) {
            return Err(Error::InvalidParameter("probabilities must lie in (0, 1)".into()));
        }
        if table.windows(2).any(|w| w[1].1 < w[0].1) {
            return Err(Error::InvalidParameter(
                "quantiles must be nondecreasing in the probability".into(),
            ));
        }
        Ok(PivotalQuantiles {
            kind,
            nu,
            replications,
            bm_steps,
            seed,
            table,
        })
    }

    /// Tabulated quantile at probability `p`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        self.table
            .iter()
            .find(|e| (e.0 - p).abs() < 1e-12)
            .map(|e| e.1)
            .ok_or(Error::QuantileNotTabulated(p))
    }

    pub fn table(&self) -> &[(f64, f64)] {
        &self.table
    }

    pub fn probabilities(&self) -> impl Iterator<Item = f64> + '_ {
        self.table.iter().map(|e| e.0)
    }

    fn to_file(&self) -> QuantileFile {
        QuantileFile {
            kind: self.kind,
            nu: self.nu.clone(),
            replications: self.replications,
            bm_steps: self.bm_steps,
            seed: self.seed,
            rng_algorithm: RNG_ALGORITHM.to_string(),
            quantiles: self.table.iter().map(|&(p, q)| (prob_key(p), q)).collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: QuantileFile = serde_json::from_str(text)?;
        let table = f
            .quantiles
            .iter()
            .map(|(k, &v)| {
                k.parse::<f64>()
                    .map(|p| (p, v))
                    .map_err(|_| Error::InvalidParameter(format!("bad probability key `{k}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        PivotalQuantiles::from_values(f.kind, f.nu, f.replications, f.bm_steps, f.seed, table)
    }
}

fn prob_key(p: f64) -> String {
    format!("{p}")
}

/// On-disk layout of a cached quantile table.
#[derive(Debug, Serialize, Deserialize)]
struct QuantileFile {
    kind: PivotKind,
    nu: NuMeasure,
    replications: usize,
    bm_steps: usize,
    seed: u64,
    rng_algorithm: String,
    quantiles: BTreeMap<String, f64>,
}

/// Simulate the pivot and tabulate the requested quantiles.
pub fn build_quantile_table(
    kind: PivotKind,
    nu: &NuMeasure,
    probabilities: &[f64],
    replications: usize,
    bm_steps: usize,
    seed: u64,
) -> Result<PivotalQuantiles> {
    if replications < MIN_TABLE_REPLICATIONS {
        return Err(Error::InvalidParameter(format!(
            "quantile tables need at least {MIN_TABLE_REPLICATIONS} replications"
        )));
    }
    if probabilities.is_empty() {
        return Err(Error::InvalidParameter("no probabilities requested".into()));
    }
    if let Some(p) = probabilities.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::InvalidParameter(format!("probability {p} outside (0, 1)")));
    }
    let mut draws = simulate_pivot_draws(kind, nu, replications, bm_steps, seed)?;
    draws.sort_by(f64::total_cmp);
    let mut probs = probabilities.to_vec();
    probs.sort_by(f64::total_cmp);
    probs.dedup();
    let table = probs.iter().map(|&p| (p, quantile_sorted(&draws, p))).collect();
    PivotalQuantiles::from_values(kind, nu.clone(), replications, bm_steps, seed, table)
}

/// Directory of JSON quantile tables keyed by all simulation settings.
#[derive(Debug, Clone)]
pub struct QuantileCache {
    dir: PathBuf,
}

impl QuantileCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        QuantileCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(
        &self,
        kind: PivotKind,
        nu: &NuMeasure,
        replications: usize,
        bm_steps: usize,
        seed: u64,
    ) -> PathBuf {
        let alg: String = {
            use sha2::{Digest, Sha256};
            Sha256::digest(RNG_ALGORITHM.as_bytes())[..4]
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect()
        };
        self.dir.join(format!(
            "{}_nu{}_r{}_s{}_seed{}_{}.json",
            kind.as_str(),
            nu.fingerprint(),
            replications,
            bm_steps,
            seed,
            alg
        ))
    }

    /// Load the cached table, building (and storing) it if absent or if it
    /// lacks a requested probability. The flag is true on a cache hit.
    pub fn get_or_build(
        &self,
        kind: PivotKind,
        nu: &NuMeasure,
        probabilities: &[f64],
        replications: usize,
        bm_steps: usize,
        seed: u64,
    ) -> Result<(PivotalQuantiles, bool)> {
        let path = self.path_for(kind, nu, replications, bm_steps, seed);
        let mut wanted = probabilities.to_vec();
        if path.exists() {
            let cached = PivotalQuantiles::from_json(&std::fs::read_to_string(&path)?)?;
            if probabilities.iter().all(|&p| cached.quantile(p).is_ok()) {
                return Ok((cached, true));
            }
            wanted.extend(cached.probabilities());
        }
        let table = build_quantile_table(kind, nu, &wanted, replications, bm_steps, seed)?;
        std::fs::create_dir_all(&self.dir)?;
        std::fs::write(&path, table.to_json()?)?;
        Ok((table, false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5).unwrap(), 3.0);
        assert_eq!(quantile(&[10.0, 0.0], 0.5).unwrap(), 5.0);
        assert_eq!(quantile(&[4.0, 2.0, 3.0, 1.0], 0.25).unwrap(), 1.75);
        assert!(matches!(quantile(&[], 0.5), Err(Error::EmptyDraws)));
        assert!(quantile(&[1.0], 1.0).is_err());
    }

    #[test]
    fn draws_are_reproducible() {
        let nu = NuMeasure::default();
        for kind in [PivotKind::W, PivotKind::WStar, PivotKind::WStarStar] {
            let a = simulate_pivot_draws(kind, &nu, 1, 200, 7).unwrap();
            let b = simulate_pivot_draws(kind, &nu, 1, 200, 7).unwrap();
            assert_eq!(a, b);
            let c = simulate_pivot_draws(kind, &nu, 1, 200, 8).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn chunking_is_a_prefix_property() {
        let nu = NuMeasure::uniform_grid(4).unwrap();
        let short = simulate_pivot_draws(PivotKind::W, &nu, 1500, 100, 3).unwrap();
        let long = simulate_pivot_draws(PivotKind::W, &nu, 2500, 100, 3).unwrap();
        assert_eq!(&long[..1500], &short[..]);
    }

    #[test]
    fn single_atom_pivots_coincide() {
        // with one atom all three denominators are the same number
        let nu = NuMeasure::point_mass(0.5).unwrap();
        let a = simulate_pivot_draws(PivotKind::W, &nu, 50, 100, 11).unwrap();
        let b = simulate_pivot_draws(PivotKind::WStar, &nu, 50, 100, 11).unwrap();
        let c = simulate_pivot_draws(PivotKind::WStarStar, &nu, 50, 100, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
    }

    #[test]
    fn table_rejects_small_replication_counts() {
        let nu = NuMeasure::default();
        assert!(build_quantile_table(PivotKind::W, &nu, &[0.95], 999, 100, 1).is_err());
        assert!(build_quantile_table(PivotKind::W, &nu, &[1.5], 1000, 100, 1).is_err());
    }

    #[test]
    fn table_json_round_trip() {
        let nu = NuMeasure::uniform_grid(4).unwrap();
        let t = build_quantile_table(PivotKind::WStar, &nu, &[0.05, 0.5, 0.95], 1000, 100, 9).unwrap();
        let back = PivotalQuantiles::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
        let v: serde_json::Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
        assert_eq!(v["kind"], "Wstar");
        assert_eq!(v["rng_algorithm"], RNG_ALGORITHM);
        assert!(v["quantiles"]["0.95"].is_number());
        assert!(v["nu"]["support"].is_array());
    }

    #[test]
    fn from_values_rejects_decreasing_tables() {
        let nu = NuMeasure::default();
        assert!(PivotalQuantiles::from_values(PivotKind::W, nu, 1000, 0, 0, vec![(0.9, 2.0), (0.95, 1.0)]).is_err());
    }

    #[test]
    fn cache_hit_returns_identical_table() {
        let dir = tempfile::tempdir().unwrap();
        let cache = QuantileCache::new(dir.path());
        let nu = NuMeasure::uniform_grid(4).unwrap();
        let (a, hit_a) = cache.get_or_build(PivotKind::W, &nu, &[0.95], 1000, 100, 5).unwrap();
        let (b, hit_b) = cache.get_or_build(PivotKind::W, &nu, &[0.95], 1000, 100, 5).unwrap();
        assert!(!hit_a);
        assert!(hit_b);
        assert_eq!(a, b);
        // a missing probability triggers a rebuild that keeps the old entries
        let (c, hit_c) = cache.get_or_build(PivotKind::W, &nu, &[0.9], 1000, 100, 5).unwrap();
        assert!(!hit_c);
        assert_eq!(c.quantile(0.95).unwrap(), a.quantile(0.95).unwrap());
    }
}
