//! Weighted vector synthesis at a focus voxel.
//!
//! The per-antenna echoes are phase-aligned to the voxel, projected onto
//! their coherent sum to obtain weights, and the weights scale unit vectors
//! from the voxel to each antenna. The length of the resulting vector,
//! discounted by the coherence factor, gives the enhanced SNR; its direction
//! gives the surface tilt.

use nalgebra::Vector3;
use rustfft::num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

use crate::calibration::CalibrationProfile;
use crate::error::{Error, Result};
use crate::signal_model::ArrayGeometry;
use crate::spectral::TargetDetection;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub focused_signals: Vec<Complex64>,
    pub coherent_sum: Complex64,
    pub weights: Vec<f64>,
    pub unit_vectors: Vec<Vector3<f64>>,
    pub weighted_vector: Vector3<f64>,
    pub coherence_factor: f64,
    pub enhanced_snr_linear: f64,
}

/// `I_j = x_j · C_j · exp(j·4π‖p_j − v‖/λ)`.
pub fn focus_signal(
    signal: &[Complex64],
    phasors: &[Complex64],
    geometry: &ArrayGeometry,
    voxel: &Vector3<f64>,
    wavelength_m: f64,
) -> Result<Vec<Complex64>> {
    if signal.len() != geometry.len() || phasors.len() != geometry.len() {
        return Err(Error::Calibration(format!(
            "antenna count mismatch: {} samples, {} phasors, {} elements",
            signal.len(),
            phasors.len(),
            geometry.len()
        )));
    }
    Ok(signal
        .iter()
        .zip(phasors)
        .zip(geometry.positions())
        .map(|((x, c), p)| {
            let d = (p - voxel).norm();
            x * c * Complex64::from_polar(1.0, 4.0 * PI * d / wavelength_m)
        })
        .collect())
}

/// Focuses a detection's gated signal at `voxel` using the profile's array
/// and phasors.
pub fn focus(
    detection: &TargetDetection,
    profile: &CalibrationProfile,
    voxel: &Vector3<f64>,
) -> Result<Vec<Complex64>> {
    let sphere = profile.sphere()?;
    let geometry = profile.geometry()?;
    focus_signal(
        &detection.gated_signal,
        &sphere.phasors,
        &geometry,
        voxel,
        profile.wavelength_m(),
    )
}

pub fn synthesize(
    focused: &[Complex64],
    geometry: &ArrayGeometry,
    voxel: &Vector3<f64>,
    noise_power_w: f64,
) -> Result<SynthesisResult> {
    let n = focused.len();
    if n < 2 {
        return Err(Error::Domain(format!("synthesis needs at least 2 antennas, got {n}")));
    }
    if n != geometry.len() {
        return Err(Error::Domain(format!(
            "{n} focused signals for {} array elements",
            geometry.len()
        )));
    }
    if !(noise_power_w > 0.0 && noise_power_w.is_finite()) {
        return Err(Error::Domain(format!(
            "noise power must be positive, got {noise_power_w}"
        )));
    }
    let sum: Complex64 = focused.iter().sum();
    let magnitude = sum.norm();
    if !(magnitude > 0.0) {
        return Err(Error::Degenerate("coherent sum is zero".into()));
    }
    let weights: Vec<f64> = focused
        .iter()
        .map(|i| (i.re * sum.re + i.im * sum.im) / magnitude)
        .collect();
    let mut unit_vectors = Vec::with_capacity(n);
    for p in geometry.positions() {
        let d = p - voxel;
        let len = d.norm();
        if !(len > 0.0) {
            return Err(Error::Domain("voxel coincides with an antenna".into()));
        }
        unit_vectors.push(d / len);
    }
    let weighted_vector = weights
        .iter()
        .zip(&unit_vectors)
        .fold(Vector3::zeros(), |acc, (w, u)| acc + u * *w);
    let total_power: f64 = focused.iter().map(|i| i.norm_sqr()).sum();
    let coherence_factor = (sum.norm_sqr() / (n as f64 * total_power)).min(1.0);
    let enhanced_snr_linear = weighted_vector.norm_squared() * coherence_factor / noise_power_w;
    Ok(SynthesisResult {
        focused_signals: focused.to_vec(),
        coherent_sum: sum,
        weights,
        unit_vectors,
        weighted_vector,
        coherence_factor,
        enhanced_snr_linear,
    })
}

/// Signed angle of the weighted vector from the boresight axis, in the x-z
/// plane. Positive values lean towards +x.
pub fn surface_tilt(result: &SynthesisResult) -> Result<f64> {
    let v = result.weighted_vector;
    if !(v.norm() > 0.0) {
        return Err(Error::Degenerate("weighted vector is zero".into()));
    }
    // Unit vectors point from the voxel back to the array, i.e. along −z.
    Ok(v.x.atan2(-v.z))
}

#[derive(Serialize)]
struct SynthesisDocument {
    coherent_sum: [f64; 2],
    coherence_factor: f64,
    enhanced_snr_linear: f64,
    weighted_vector: [f64; 3],
    weights: Vec<f64>,
    focused_signals: Vec<[f64; 2]>,
    unit_vectors: Vec<[f64; 3]>,
}

impl SynthesisResult {
    pub fn to_text(&self) -> String {
        let doc = SynthesisDocument {
            coherent_sum: [self.coherent_sum.re, self.coherent_sum.im],
            coherence_factor: self.coherence_factor,
            enhanced_snr_linear: self.enhanced_snr_linear,
            weighted_vector: self.weighted_vector.into(),
            weights: self.weights.clone(),
            focused_signals: self.focused_signals.iter().map(|c| [c.re, c.im]).collect(),
            unit_vectors: self.unit_vectors.iter().map(|u| (*u).into()).collect(),
        };
        toml::to_string(&doc).expect("synthesis result serialises")
    }
}
