//! Uncertainty-gated fusion of the visual and radar candidate sets.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::knowledge::{normalize_name, RadarCandidateSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub name: String,
    pub probability: f64,
}

impl Candidate {
    pub fn new(name: impl Into<String>, probability: f64) -> Self {
        Self {
            name: name.into(),
            probability,
        }
    }
}

/// Normalised Shannon entropy of a distribution, in [0, 1]. A single
/// candidate has zero entropy.
pub fn normalized_entropy(probabilities: &[f64]) -> f64 {
    if probabilities.len() < 2 {
        return 0.0;
    }
    let h: f64 = probabilities
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    (h / (probabilities.len() as f64).ln()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisualContext {
    pub luminance: f64,
    pub complexity: f64,
    pub vlm_entropy: f64,
    pub candidates: Vec<Candidate>,
}

impl VisualContext {
    /// Builds a context with the entropy derived from the candidates.
    pub fn new(luminance: f64, complexity: f64, candidates: Vec<Candidate>) -> Result<Self> {
        let probs: Vec<f64> = candidates.iter().map(|c| c.probability).collect();
        let ctx = Self {
            luminance,
            complexity,
            vlm_entropy: normalized_entropy(&probs),
            candidates,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("luminance", self.luminance),
            ("complexity", self.complexity),
            ("VLM entropy", self.vlm_entropy),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Fusion(format!("{name} {v} is outside [0, 1]")));
            }
        }
        if self.candidates.is_empty() {
            return Err(Error::Fusion("visual candidate list is empty".into()));
        }
        if self.candidates.iter().any(|c| !(c.probability >= 0.0)) {
            return Err(Error::Fusion("negative visual probability".into()));
        }
        let sum: f64 = self.candidates.iter().map(|c| c.probability).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Fusion(format!("visual probabilities sum to {sum}, not 1")));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("visual context serialises")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ctx: Self = toml::from_str(text).map_err(|e| Error::Fusion(e.message().to_string()))?;
        ctx.validate()?;
        Ok(ctx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarContext {
    pub snr_linear: f64,
    pub distance_m: f64,
    pub max_distance_m: f64,
    pub incidence_angle_rad: f64,
    pub candidates: RadarCandidateSet,
}

impl RadarContext {
    pub fn new(
        snr_linear: f64,
        distance_m: f64,
        max_distance_m: f64,
        incidence_angle_rad: f64,
        candidates: RadarCandidateSet,
    ) -> Result<Self> {
        let ctx = Self {
            snr_linear,
            distance_m,
            max_distance_m,
            incidence_angle_rad,
            candidates,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.snr_linear > 0.0) {
            return Err(Error::Fusion(format!("radar SNR {} must be positive", self.snr_linear)));
        }
        if !(self.distance_m > 0.0 && self.distance_m <= self.max_distance_m) {
            return Err(Error::Fusion(format!(
                "distance {} m must lie in (0, {}] m",
                self.distance_m, self.max_distance_m
            )));
        }
        if !(0.0..PI / 2.0).contains(&self.incidence_angle_rad) {
            return Err(Error::Fusion(format!(
                "incidence angle {} rad outside [0, π/2)",
                self.incidence_angle_rad
            )));
        }
        self.candidates.validate()
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("radar context serialises")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let ctx: Self = toml::from_str(text).map_err(|e| Error::Fusion(e.message().to_string()))?;
        ctx.validate()?;
        Ok(ctx)
    }
}

/// Which branch wins a conflict whose weighted scores are equal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieBreak {
    #[default]
    Radar,
    Visual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FusionConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub snr_floor: f64,
    pub conflict_tie: TieBreak,
}

impl Default for FusionConfig {
    fn default() -> Self {
        let third = 1.0 / 3.0;
        Self {
            lambda1: third,
            lambda2: third,
            lambda3: third,
            gamma1: third,
            gamma2: third,
            gamma3: third,
            snr_floor: 1.0,
            conflict_tie: TieBreak::Radar,
        }
    }
}

/// Score margin below which a conflict counts as tied.
pub const CONFLICT_TIE_EPS: f64 = 1e-9;

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        let l = [self.lambda1, self.lambda2, self.lambda3];
        let g = [self.gamma1, self.gamma2, self.gamma3];
        if l.iter().chain(&g).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Fusion("λ and γ coefficients must be finite and >= 0".into()));
        }
        if !(l.iter().sum::<f64>() > 0.0 && g.iter().sum::<f64>() > 0.0) {
            return Err(Error::Fusion("λ and γ coefficients must not all be zero".into()));
        }
        if !(self.snr_floor > 0.0) {
            return Err(Error::Fusion("SNR floor must be positive".into()));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Fusion(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `λ₁(1 − I_lum) + λ₂·I_cplx + λ₃·H_vlm`.
pub fn visual_uncertainty(ctx: &VisualContext, config: &FusionConfig) -> f64 {
    config.lambda1 * (1.0 - ctx.luminance) + config.lambda2 * ctx.complexity + config.lambda3 * ctx.vlm_entropy
}

/// `γ₁/max(SNR, floor) + γ₂(d/d_max)² + γ₃(1 − cos θ)`.
pub fn radar_uncertainty(ctx: &RadarContext, config: &FusionConfig) -> f64 {
    config.gamma1 / ctx.snr_linear.max(config.snr_floor)
        + config.gamma2 * (ctx.distance_m / ctx.max_distance_m).powi(2)
        + config.gamma3 * (1.0 - ctx.incidence_angle_rad.cos())
}

fn fmt_epsilon(eps: f64) -> String {
    if eps.abs() < 1e4 {
        format!("{eps:.3}")
    } else {
        format!("{eps:.3e}")
    }
}

/// Softmax over negated uncertainties: `(w_vis, w_rad)`.
pub fn gate(u_vis: f64, u_rad: f64) -> (f64, f64) {
    // Shift by the minimum so neither exponential underflows.
    let m = u_vis.min(u_rad);
    let (a, b) = ((-(u_vis - m)).exp(), (-(u_rad - m)).exp());
    let w_vis = a / (a + b);
    (w_vis, 1.0 - w_vis)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    Intersection,
    Conflict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionDecision {
    pub material: String,
    pub mode: FusionMode,
    pub u_vis: f64,
    pub u_rad: f64,
    pub w_vis: f64,
    pub w_rad: f64,
    pub s_vis: f64,
    pub s_rad: f64,
    /// `s_vis / (s_vis + s_rad)`, the visual share of the weighted evidence.
    pub share_vis: f64,
    pub trace: Vec<String>,
}

impl FusionDecision {
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("decision serialises")
    }
}

fn probability_of(candidates: &[Candidate], key: &str) -> f64 {
    candidates
        .iter()
        .filter(|c| normalize_name(&c.name) == key)
        .map(|c| c.probability)
        .sum()
}

fn share(s_vis: f64, s_rad: f64) -> f64 {
    let t = s_vis + s_rad;
    if t > 0.0 {
        s_vis / t
    } else {
        0.5
    }
}

pub fn decide(visual: &VisualContext, radar: &RadarContext, config: &FusionConfig) -> Result<FusionDecision> {
    config.validate()?;
    visual.validate()?;
    radar.validate()?;
    let u_vis = visual_uncertainty(visual, config);
    let u_rad = radar_uncertainty(radar, config);
    let (w_vis, w_rad) = gate(u_vis, u_rad);
    let fmt = |cs: &[Candidate]| {
        cs.iter()
            .map(|c| format!("{} {:.4}", c.name, c.probability))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let mut trace = vec![
        format!("visual candidates: {}", fmt(&visual.candidates)),
        format!(
            "radar candidates (ε = {}): {}",
            fmt_epsilon(radar.candidates.measured_epsilon),
            fmt(&radar.candidates.candidates)
        ),
        format!(
            "U_vis = {u_vis:.6} (lum {:.4}, cplx {:.4}, H {:.4})",
            visual.luminance, visual.complexity, visual.vlm_entropy
        ),
        format!(
            "U_rad = {u_rad:.6} (SNR {:.4e}, d {:.4} m of {:.4} m, θ {:.4} rad)",
            radar.snr_linear, radar.distance_m, radar.max_distance_m, radar.incidence_angle_rad
        ),
        format!("w_vis = {w_vis:.6}, w_rad = {w_rad:.6}"),
    ];

    let radar_keys: HashMap<String, &Candidate> = radar
        .candidates
        .candidates
        .iter()
        .map(|c| (normalize_name(&c.name), c))
        .collect();
    let mut best: Option<(&Candidate, f64, f64, f64)> = None;
    for c in &visual.candidates {
        let key = normalize_name(&c.name);
        if !radar_keys.contains_key(&key) {
            continue;
        }
        let sv = w_vis * probability_of(&visual.candidates, &key);
        let sr = w_rad * probability_of(&radar.candidates.candidates, &key);
        trace.push(format!("shared {}: {sv:.6} + {sr:.6} = {:.6}", c.name, sv + sr));
        if best.is_none_or(|(_, t, _, _)| sv + sr > t) {
            best = Some((c, sv + sr, sv, sr));
        }
    }

    let decision = if let Some((c, _, s_vis, s_rad)) = best {
        trace.push(format!("intersection: {}", c.name));
        FusionDecision {
            material: c.name.clone(),
            mode: FusionMode::Intersection,
            u_vis,
            u_rad,
            w_vis,
            w_rad,
            s_vis,
            s_rad,
            share_vis: share(s_vis, s_rad),
            trace,
        }
    } else {
        let top_vis = &visual.candidates[argmax_probability(&visual.candidates)];
        let top_rad = &radar.candidates.candidates[argmax_probability(&radar.candidates.candidates)];
        let s_vis = w_vis * top_vis.probability;
        let s_rad = w_rad * top_rad.probability;
        let visual_wins = if (s_vis - s_rad).abs() < CONFLICT_TIE_EPS {
            config.conflict_tie == TieBreak::Visual
        } else {
            s_vis > s_rad
        };
        let winner = if visual_wins { top_vis } else { top_rad };
        trace.push(format!(
            "conflict: S_vis = {s_vis:.6} ({}), S_rad = {s_rad:.6} ({}) -> {} branch",
            top_vis.name,
            top_rad.name,
            if visual_wins { "visual" } else { "radar" }
        ));
        FusionDecision {
            material: winner.name.clone(),
            mode: FusionMode::Conflict,
            u_vis,
            u_rad,
            w_vis,
            w_rad,
            s_vis,
            s_rad,
            share_vis: share(s_vis, s_rad),
            trace,
        }
    };
    Ok(decision)
}

/// Index of the most probable candidate; first wins ties.
fn argmax_probability(cs: &[Candidate]) -> usize {
    let mut best = 0;
    for (i, c) in cs.iter().enumerate() {
        if c.probability > cs[best].probability {
            best = i;
        }
    }
    best
}
