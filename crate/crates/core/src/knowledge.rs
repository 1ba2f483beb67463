//! Reference material store, permittivity matching and visual pruning.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::dielectric::EmFeatureVector;
use crate::error::{Error, Result};
use crate::fusion::{Candidate, VisualContext};

pub const DEFAULT_STORE: &str = include_str!("../data/default_store.toml");

/// Lower bound on the kernel width, so tight records do not blow up.
pub const SIGMA_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialRecord {
    pub id: String,
    pub name: String,
    pub epsilon_mean: f64,
    pub epsilon_std: f64,
    pub epsilon_interval: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub itu_coeffs: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_features: Option<EmFeatureVector>,
}

impl MaterialRecord {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.epsilon_interval;
        let fail = |why: &str| Err(Error::Knowledge(format!("material `{}`: {why}", self.name)));
        if self.name.trim().is_empty() {
            return Err(Error::Knowledge(format!("record {} has no name", self.id)));
        }
        if ![lo, hi, self.epsilon_mean, self.epsilon_std].iter().all(|v| v.is_finite()) {
            return fail("non-finite value");
        }
        if lo < 1.0 {
            return fail("interval starts below 1");
        }
        if lo > hi {
            return fail("interval low exceeds high");
        }
        if !(lo..=hi).contains(&self.epsilon_mean) {
            return fail("mean lies outside its interval");
        }
        if self.epsilon_std < 0.0 {
            return fail("negative std");
        }
        Ok(())
    }

    /// Distance from `epsilon` to the interval widened by `tolerance_sigma`
    /// standard deviations; zero inside.
    pub fn interval_distance(&self, epsilon: f64, tolerance_sigma: f64) -> f64 {
        let pad = tolerance_sigma * self.epsilon_std;
        let (lo, hi) = (self.epsilon_interval.0 - pad, self.epsilon_interval.1 + pad);
        (lo - epsilon).max(epsilon - hi).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoreDocument {
    #[serde(default)]
    materials: Vec<MaterialRecord>,
}

/// Validated, immutable set of material records.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialStore {
    records: Vec<MaterialRecord>,
}

pub(crate) fn normalize_name(name: &str) -> String {
    name.trim().to_lowercase()
}

impl MaterialStore {
    pub fn new(records: Vec<MaterialRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Knowledge("store is empty".into()));
        }
        let mut seen = HashSet::new();
        for r in &records {
            r.validate()?;
            if !seen.insert(normalize_name(&r.name)) {
                return Err(Error::Knowledge(format!("duplicate material `{}`", r.name)));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[MaterialRecord] {
        &self.records
    }

    pub fn get(&self, name: &str) -> Option<&MaterialRecord> {
        let key = normalize_name(name);
        self.records.iter().find(|r| normalize_name(&r.name) == key)
    }

    pub fn to_text(&self) -> String {
        toml::to_string(&StoreDocument {
            materials: self.records.clone(),
        })
        .expect("store serialises")
    }
}

pub fn load_store(text: &str) -> Result<MaterialStore> {
    let doc: StoreDocument =
        toml::from_str(text).map_err(|e| Error::Knowledge(e.message().to_string()))?;
    MaterialStore::new(doc.materials)
}

pub fn default_store() -> MaterialStore {
    load_store(DEFAULT_STORE).expect("bundled store is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchOptions {
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// Candidates scoring below this (before truncation) are dropped, but
    /// the best one always survives.
    #[serde(default)]
    pub min_score: f64,
}

fn default_top_k() -> usize {
    3
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            top_k: default_top_k(),
            min_score: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarCandidateSet {
    pub measured_epsilon: f64,
    pub candidates: Vec<Candidate>,
}

impl RadarCandidateSet {
    pub fn validate(&self) -> Result<()> {
        if self.candidates.is_empty() {
            return Err(Error::Fusion("radar candidate set is empty".into()));
        }
        let sum: f64 = self.candidates.iter().map(|c| c.probability).sum();
        if (sum - 1.0).abs() > 1e-9 || self.candidates.iter().any(|c| !(c.probability >= 0.0)) {
            return Err(Error::Fusion(format!("radar scores sum to {sum}, not 1")));
        }
        if self
            .candidates
            .windows(2)
            .any(|w| w[0].probability < w[1].probability)
        {
            return Err(Error::Fusion("radar candidates are not in descending order".into()));
        }
        Ok(())
    }
}

/// Gaussian-kernel scores over normalised permittivity distance, ranked
/// and truncated to `top_k`, then renormalised.
pub fn match_epsilon(epsilon: f64, store: &MaterialStore, options: &MatchOptions) -> Result<RadarCandidateSet> {
    if !(epsilon >= 1.0 && epsilon.is_finite()) {
        return Err(Error::Knowledge(format!("measured permittivity {epsilon} is below 1")));
    }
    if options.top_k == 0 {
        return Err(Error::Knowledge("top_k must be at least 1".into()));
    }
    let mut weights: Vec<(String, f64)> = store
        .records()
        .iter()
        .map(|r| {
            let d = (epsilon - r.epsilon_mean).abs() / r.epsilon_std.max(SIGMA_FLOOR);
            (r.name.clone(), (-0.5 * d * d).exp())
        })
        .collect();
    // Summing in name order keeps scores independent of record order.
    weights.sort_by_key(|(name, _)| normalize_name(name));
    let total: f64 = weights.iter().map(|(_, w)| w).sum();
    let mut scored: Vec<Candidate> = if total > 0.0 {
        weights
            .into_iter()
            .map(|(name, w)| Candidate::new(name, w / total))
            .collect()
    } else {
        // Every kernel underflowed: fall back to the nearest mean.
        let nearest = store
            .records()
            .iter()
            .min_by(|a, b| {
                (epsilon - a.epsilon_mean)
                    .abs()
                    .total_cmp(&(epsilon - b.epsilon_mean).abs())
            })
            .expect("store is nonempty");
        vec![Candidate::new(nearest.name.clone(), 1.0)]
    };
    scored.sort_by(|a, b| {
        b.probability
            .total_cmp(&a.probability)
            .then_with(|| normalize_name(&a.name).cmp(&normalize_name(&b.name)))
    });
    let best = scored[0].probability;
    scored.retain(|c| c.probability >= options.min_score || c.probability == best);
    scored.truncate(options.top_k);
    let kept: f64 = scored.iter().map(|c| c.probability).sum();
    for c in &mut scored {
        c.probability /= kept;
    }
    Ok(RadarCandidateSet {
        measured_epsilon: epsilon,
        candidates: scored,
    })
}

/// Drops visual candidates whose widened interval excludes `epsilon`.
/// Names unknown to the store are kept. If every known candidate would go,
/// the least incompatible one stays. Probabilities are renormalised.
pub fn prune_visual(
    visual: &VisualContext,
    epsilon: f64,
    store: &MaterialStore,
    tolerance_sigma: f64,
) -> Result<VisualContext> {
    if !(tolerance_sigma > 0.0) {
        return Err(Error::Knowledge(format!(
            "pruning tolerance must be positive, got {tolerance_sigma}"
        )));
    }
    let distance = |c: &Candidate| store.get(&c.name).map(|r| r.interval_distance(epsilon, tolerance_sigma));
    let mut kept: Vec<Candidate> = visual
        .candidates
        .iter()
        .filter(|c| distance(c).is_none_or(|d| d == 0.0))
        .cloned()
        .collect();
    if kept.len() == visual.candidates.len() {
        return Ok(visual.clone());
    }
    if kept.is_empty() {
        let least = visual
            .candidates
            .iter()
            .min_by(|a, b| {
                distance(a)
                    .unwrap_or(0.0)
                    .total_cmp(&distance(b).unwrap_or(0.0))
            })
            .ok_or_else(|| Error::Knowledge("no visual candidates to prune".into()))?;
        kept.push(least.clone());
    }
    let total: f64 = kept.iter().map(|c| c.probability).sum();
    if total > 0.0 {
        for c in &mut kept {
            c.probability /= total;
        }
    } else {
        let share = 1.0 / kept.len() as f64;
        for c in &mut kept {
            c.probability = share;
        }
    }
    Ok(VisualContext {
        candidates: kept,
        ..visual.clone()
    })
}
