use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Discrete probability measure on (0, 1) weighting the self-normalizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNu")]
pub struct NuMeasure {
    support: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct RawNu {
    support: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<RawNu> for NuMeasure {
    type Error = Error;

    fn try_from(raw: RawNu) -> Result<Self> {
        NuMeasure::new(raw.support, raw.weights)
    }
}

impl Default for NuMeasure {
    /// Discrete uniform on `{i/20 : i = 1..19}`.
    fn default() -> Self {
        NuMeasure::uniform_grid(19).expect("19 atoms is a valid measure")
    }
}

impl NuMeasure {
    /// Build from (support, weight) pairs given in any order.
    ///
    /// Pairs are sorted jointly by support point.
    pub fn new(support: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidNu("empty support".into()));
        }
        if support.len() != weights.len() {
            return Err(Error::InvalidNu(format!(
                "{} support points but {} weights",
                support.len(),
                weights.len()
            )));
        }
        let mut pairs: Vec<(f64, f64)> = support.into_iter().zip(weights).collect();
        for &(s, w) in &pairs {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::InvalidNu(format!("support point {s} outside (0, 1)")));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidNu(format!("invalid weight {w}")));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pairs.windows(2).any(|p| p[0].0 == p[1].0) {
            return Err(Error::InvalidNu("duplicate support point".into()));
        }
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidNu(format!("weights sum to {total}, not 1")));
        }
        let (support, weights) = pairs.into_iter().unzip();
        Ok(NuMeasure { support, weights })
    }

    /// Discrete uniform measure on `{i/(atoms+1) : i = 1..atoms}`.
    pub fn uniform_grid(atoms: usize) -> Result<Self> {
        if atoms == 0 {
            return Err(Error::InvalidNu("need at least one atom".into()));
        }
        let denom = (atoms + 1) as f64;
        let support = (1..=atoms).map(|i| i as f64 / denom).collect();
        let weights = vec![1.0 / atoms as f64; atoms];
        NuMeasure::new(support, weights)
    }

    pub fn point_mass(lambda: f64) -> Result<Self> {
        NuMeasure::new(vec![lambda], vec![1.0])
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.support.iter().copied().zip(self.weights.iter().copied())
    }

    /// Smallest support point carrying positive mass.
    pub fn min_support(&self) -> f64 {
        self.atoms()
            .find(|&(_, w)| w > 0.0)
            .map(|(s, _)| s)
            .unwrap_or(self.support[0])
    }

    /// Stable short digest of the exact bit patterns of support and weights.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for (s, w) in self.atoms() {
            h.update(s.to_bits().to_le_bytes());
            h.update(w.to_bits().to_le_bytes());
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// How the λ-profile deviations are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormalizerKind {
    /// Root of the ν-weighted mean squared deviation.
    #[default]
    Standard,
    /// ν-essential supremum of the absolute deviation.
    Sup,
    /// ν-weighted mean absolute deviation.
    Abs,
}

impl NormalizerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NormalizerKind::Standard => "standard",
            NormalizerKind::Sup => "sup",
            NormalizerKind::Abs => "abs",
        }
    }
}

impl std::str::FromStr for NormalizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(NormalizerKind::Standard),
            "sup" => Ok(NormalizerKind::Sup),
            "abs" => Ok(NormalizerKind::Abs),
            other => Err(Error::InvalidParameter(format!("unknown normalizer `{other}`"))),
        }
    }
}

/// Values `p(λ)` of a sub-sample statistic at the atoms of ν and at λ = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaProfile {
    full: f64,
    points: Vec<(f64, f64)>,
}

impl LambdaProfile {
    pub fn new(full: f64) -> Self {
        LambdaProfile {
            full,
            points: Vec::new(),
        }
    }

    /// Evaluate `f` at every support point of `nu` and at λ = 1.
    pub fn tabulate(nu: &NuMeasure, f: impl Fn(f64) -> f64) -> Self {
        LambdaProfile {
            full: f(1.0),
            points: nu.support().iter().map(|&l| (l, f(l))).collect(),
        }
    }

    pub fn insert(&mut self, lambda: f64, value: f64) {
        match self.points.iter_mut().find(|p| p.0 == lambda) {
            Some(p) => p.1 = value,
            None => self.points.push((lambda, value)),
        }
    }

    pub fn at_one(&self) -> f64 {
        self.full
    }

    pub fn get(&self, lambda: f64) -> Option<f64> {
        if lambda == 1.0 {
            return Some(self.full);
        }
        self.points.iter().find(|p| p.0 == lambda).map(|p| p.1)
    }
}

/// Aggregate the deviations `p(λ) − λ² p(1)` over ν.
pub fn self_normalizer(profile: &LambdaProfile, nu: &NuMeasure, kind: NormalizerKind) -> Result<f64> {
    let full = profile.at_one();
    let mut acc = 0.0f64;
    for (lambda, w) in nu.atoms() {
        let p = profile.get(lambda).ok_or(Error::MissingProfileValue(lambda))?;
        let dev = p - lambda * lambda * full;
        match kind {
            NormalizerKind::Standard => acc += w * dev * dev,
            NormalizerKind::Abs => acc += w * dev.abs(),
            NormalizerKind::Sup => {
                if w > 0.0 {
                    acc = acc.max(dev.abs());
                }
            }
        }
    }
    Ok(match kind {
        NormalizerKind::Standard => acc.sqrt(),
        _ => acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_nu_is_twentieths() {
        let nu = NuMeasure::default();
        assert_eq!(nu.support().len(), 19);
        assert_eq!(nu.support()[0], 0.05);
        assert_eq!(nu.support()[18], 19.0 / 20.0);
        assert_eq!(nu.min_support(), 0.05);
    }

    #[test]
    fn rejects_invalid_measures() {
        assert!(NuMeasure::new(vec![], vec![]).is_err());
        assert!(NuMeasure::new(vec![0.0], vec![1.0]).is_err());
        assert!(NuMeasure::new(vec![1.0], vec![1.0]).is_err());
        assert!(NuMeasure::new(vec![0.5], vec![0.9]).is_err());
        assert!(NuMeasure::new(vec![0.5, 0.5], vec![0.5, 0.5]).is_err());
        assert!(NuMeasure::new(vec![0.5, 0.6], vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn proportional_profile_has_zero_normalizer() {
        let nu = NuMeasure::default();
        let p = LambdaProfile::tabulate(&nu, |l| 3.0 * l * l);
        for kind in [NormalizerKind::Standard, NormalizerKind::Sup, NormalizerKind::Abs] {
            assert!(self_normalizer(&p, &nu, kind).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn point_mass_hand_computation() {
        let nu = NuMeasure::point_mass(0.5).unwrap();
        let mut p = LambdaProfile::new(16.0);
        p.insert(0.5, 1.0);
        for kind in [NormalizerKind::Standard, NormalizerKind::Sup, NormalizerKind::Abs] {
            assert_eq!(self_normalizer(&p, &nu, kind).unwrap(), 3.0);
        }
    }

    #[test]
    fn two_atom_exact_proportionality() {
        let nu = NuMeasure::new(vec![0.25, 0.75], vec![0.5, 0.5]).unwrap();
        let mut p = LambdaProfile::new(16.0);
        p.insert(0.25, 1.0);
        p.insert(0.75, 9.0);
        assert_eq!(self_normalizer(&p, &nu, NormalizerKind::Standard).unwrap(), 0.0);
    }

    #[test]
    fn missing_profile_value_is_an_error() {
        let nu = NuMeasure::new(vec![0.25, 0.75], vec![0.5, 0.5]).unwrap();
        let mut p = LambdaProfile::new(1.0);
        p.insert(0.25, 1.0);
        assert!(matches!(
            self_normalizer(&p, &nu, NormalizerKind::Abs),
            Err(Error::MissingProfileValue(l)) if l == 0.75
        ));
    }

    #[test]
    fn sup_ignores_atoms_without_mass() {
        let nu = NuMeasure::new(vec![0.25, 0.75], vec![1.0, 0.0]).unwrap();
        let mut p = LambdaProfile::new(0.0);
        p.insert(0.25, 1.0);
        p.insert(0.75, 100.0);
        assert_eq!(self_normalizer(&p, &nu, NormalizerKind::Sup).unwrap(), 1.0);
    }

    #[test]
    fn json_round_trip_validates() {
        let nu = NuMeasure::uniform_grid(4).unwrap();
        let s = serde_json::to_string(&nu).unwrap();
        assert_eq!(serde_json::from_str::<NuMeasure>(&s).unwrap(), nu);
        assert!(serde_json::from_str::<NuMeasure>(r#"{"support":[0.5],"weights":[0.3]}"#).is_err());
    }

    proptest! {
        #[test]
        fn normalizer_invariant_to_joint_permutation(
            raw in prop::collection::vec((0.01f64..0.99, 0.1f64..1.0, -5.0f64..5.0), 1..8),
            full in -5.0f64..5.0,
            rot in 0usize..8,
        ) {
            let mut atoms = raw.clone();
            atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
            atoms.dedup_by(|a, b| a.0 == b.0);
            let total: f64 = atoms.iter().map(|a| a.1).sum();
            let atoms: Vec<(f64, f64, f64)> = atoms.iter().map(|a| (a.0, a.1 / total, a.2)).collect();
            let build = |order: &[(f64, f64, f64)]| {
                NuMeasure::new(order.iter().map(|a| a.0).collect(), order.iter().map(|a| a.1).collect())
                    .unwrap()
            };
            let mut rotated = atoms.clone();
            let len = rotated.len();
            rotated.rotate_left(rot % len);
            rotated.reverse();
            let nu_a = build(&atoms);
            let nu_b = build(&rotated);
            let mut p = LambdaProfile::new(full);
            for a in &atoms {
                p.insert(a.0, a.2);
            }
            for kind in [NormalizerKind::Standard, NormalizerKind::Sup, NormalizerKind::Abs] {
                prop_assert_eq!(
                    self_normalizer(&p, &nu_a, kind).unwrap(),
                    self_normalizer(&p, &nu_b, kind).unwrap()
                );
            }
        }

        #[test]
        fn single_atom_kinds_coincide(lambda in 0.01f64..0.99, p in -10.0f64..10.0, full in -10.0f64..10.0) {
            let nu = NuMeasure::point_mass(lambda).unwrap();
            let mut prof = LambdaProfile::new(full);
            prof.insert(lambda, p);
            let s = self_normalizer(&prof, &nu, NormalizerKind::Standard).unwrap();
            let u = self_normalizer(&prof, &nu, NormalizerKind::Sup).unwrap();
            let a = self_normalizer(&prof, &nu, NormalizerKind::Abs).unwrap();
            prop_assert_eq!(s, u);
            prop_assert_eq!(u, a);
            prop_assert!(s >= 0.0);
        }
    }
}
