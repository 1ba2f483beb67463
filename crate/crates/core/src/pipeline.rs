//! End-to-end chains: calibration from sphere and plate frames, feature
//! extraction from a target frame, and the dual-branch identification run.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_plate, calibrate_sphere, estimate_noise_power, CalibrationProfile};
use crate::dielectric::{extract_features, EmFeatureVector};
use crate::error::{Error, Result, StageExt};
use crate::fusion::{decide, FusionConfig, FusionDecision, RadarContext};
use crate::knowledge::{match_epsilon, prune_visual, MaterialStore, MatchOptions};
use crate::prca::{prca, PrcaRegion};
use crate::signal_model::RadarCube;
use crate::spectral::{
    default_angle_grid, detect_target_with, range_angle_with, range_doppler_with, DetectionConfig,
    RangeAngleMap, RangeDopplerMap, SpectralOptions, TargetDetection,
};
use crate::synthesis::{focus, synthesize, SynthesisResult};
use crate::vlm_gateway::VisualContext;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractOptions {
    /// Range window `[near, far]` in metres.
    pub gate_m: (f64, f64),
    #[serde(default = "default_angle_grid")]
    pub angle_grid_rad: Vec<f64>,
    #[serde(default)]
    pub spectral: SpectralOptions,
    #[serde(default)]
    pub detection: DetectionConfig,
}

impl ExtractOptions {
    pub fn with_gate(near_m: f64, far_m: f64) -> Self {
        Self {
            gate_m: (near_m, far_m),
            angle_grid_rad: default_angle_grid(),
            spectral: SpectralOptions::default(),
            detection: DetectionConfig::default(),
        }
    }
}

/// Maps and detection of one frame, before any calibrated measurement.
#[derive(Debug, Clone)]
pub struct Observation {
    pub rd_map: RangeDopplerMap,
    /// Range-angle map restricted to the gate.
    pub ra_map: RangeAngleMap,
    pub detection: TargetDetection,
}

pub fn observe(cube: &RadarCube, profile: Option<&CalibrationProfile>, options: &ExtractOptions) -> Result<Observation> {
    let cube = match profile {
        Some(p) => {
            if p.antennas() != cube.antennas() {
                return Err(Error::Calibration(format!(
                    "profile is for {} antennas, cube has {}",
                    p.antennas(),
                    cube.antennas()
                )));
            }
            cube.clone().with_geometry(p.geometry()?)?
        }
        None => cube.clone(),
    };
    let phasors = profile.and_then(|p| p.sphere().ok()).map(|s| s.phasors.as_slice());
    let rd_map = range_doppler_with(&cube, &options.spectral).stage("range-Doppler")?;
    let ra_full = range_angle_with(&cube, &options.angle_grid_rad, phasors, &options.spectral)
        .stage("range-angle")?;
    let ra_map = ra_full.gated(options.gate_m).stage("gate")?;
    let detection = detect_target_with(&rd_map, &ra_map, options.gate_m, &options.detection)
        .stage("detection")?;
    Ok(Observation {
        rd_map,
        ra_map,
        detection,
    })
}

/// How the calibration noise floor is obtained.
#[derive(Debug, Clone)]
pub enum NoiseSource<'a> {
    EmptyScene(&'a RadarCube),
    Power(f64),
}

pub struct CalibrationInputs<'a> {
    pub sphere: &'a RadarCube,
    pub plate: &'a RadarCube,
    pub noise: NoiseSource<'a>,
    pub sphere_diameter_m: f64,
    pub sphere_position_m: Option<Vector3<f64>>,
}

pub fn calibrate(inputs: &CalibrationInputs, options: &ExtractOptions) -> Result<CalibrationProfile> {
    let noise = match inputs.noise {
        NoiseSource::EmptyScene(cube) => estimate_noise_power(cube).stage("noise")?,
        NoiseSource::Power(p) => p,
    };
    let sphere = observe(inputs.sphere, None, options).stage("sphere")?;
    let profile = calibrate_sphere(
        &sphere.detection,
        inputs.sphere.config(),
        inputs.sphere.geometry(),
        noise,
        inputs.sphere_diameter_m,
        inputs.sphere_position_m.as_ref(),
    )
    .stage("sphere")?;
    let plate = observe(inputs.plate, Some(&profile), options).stage("plate")?;
    calibrate_plate(&plate.detection, &plate.ra_map, &profile).stage("plate")
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub observation: Observation,
    pub synthesis: SynthesisResult,
    pub region: PrcaRegion,
    pub features: EmFeatureVector,
}

pub fn extract(cube: &RadarCube, profile: &CalibrationProfile, options: &ExtractOptions) -> Result<Extraction> {
    profile.metal_plate_rho().stage("profile")?;
    let observation = observe(cube, Some(profile), options)?;
    let det = &observation.detection;
    let voxel = det.voxel();
    let focused = focus(det, profile, &voxel).stage("focus")?;
    let synthesis = synthesize(&focused, &profile.geometry()?, &voxel, profile.noise_power_w())
        .stage("synthesis")?;
    let region = prca(&observation.ra_map).stage("prca")?;
    let features = extract_features(det, &synthesis, &region, profile)?;
    Ok(Extraction {
        observation,
        synthesis,
        region,
        features,
    })
}

/// Radar-side settings of a full identification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadarSettings {
    pub max_distance_m: f64,
    #[serde(default)]
    pub matching: MatchOptions,
    #[serde(default = "default_prune_tolerance")]
    pub prune_tolerance_sigma: f64,
}

fn default_prune_tolerance() -> f64 {
    1.0
}

impl Default for RadarSettings {
    fn default() -> Self {
        Self {
            max_distance_m: 1.0,
            matching: MatchOptions::default(),
            prune_tolerance_sigma: default_prune_tolerance(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Identification {
    pub radar: RadarContext,
    pub visual: VisualContext,
    pub pruned_visual: VisualContext,
    pub decision: FusionDecision,
}

/// Radar context from a feature record: candidates from the store and the
/// degradation inputs.
pub fn radar_context(features: &EmFeatureVector, store: &MaterialStore, settings: &RadarSettings) -> Result<RadarContext> {
    let candidates = match_epsilon(features.dielectric_constant, store, &settings.matching).stage("identify")?;
    RadarContext::new(
        features.snr_linear(),
        features.range_m,
        settings.max_distance_m,
        features.angle_rad.abs(),
        candidates,
    )
    .stage("identify")
}

/// Prunes the visual candidates against the radar estimate, then fuses.
pub fn identify(
    features: &EmFeatureVector,
    visual: &VisualContext,
    store: &MaterialStore,
    settings: &RadarSettings,
    fusion: &FusionConfig,
) -> Result<Identification> {
    let radar = radar_context(features, store, settings)?;
    let pruned_visual = prune_visual(
        visual,
        features.dielectric_constant,
        store,
        settings.prune_tolerance_sigma,
    )
    .stage("prune")?;
    let decision = decide(&pruned_visual, &radar, fusion).stage("fuse")?;
    Ok(Identification {
        radar,
        visual: visual.clone(),
        pruned_visual,
        decision,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_model::{synthesize_frame, ArrayGeometry, ChirpConfig, SceneTarget, METAL_EPSILON};
    use std::f64::consts::PI;

    fn rig() -> (ChirpConfig, ArrayGeometry) {
        let cfg = ChirpConfig::default();
        (cfg, ArrayGeometry::default_for(&cfg, 8).unwrap())
    }

    fn frame(targets: &[SceneTarget], noise: f64, seed: u64) -> RadarCube {
        let (cfg, geo) = rig();
        synthesize_frame(targets, &cfg, &geo, noise, seed).unwrap()
    }

    fn profile() -> CalibrationProfile {
        let sphere = SceneTarget::at_polar("sphere", 0.25, 0.0, METAL_EPSILON, PI * 0.0315f64.powi(2));
        let plate = SceneTarget::at_polar("plate", 0.25, 0.0, METAL_EPSILON, 0.04);
        let empty = frame(&[], 0.002, 1);
        calibrate(
            &CalibrationInputs {
                sphere: &frame(&[sphere], 0.002, 2),
                plate: &frame(&[plate], 0.002, 3),
                noise: NoiseSource::EmptyScene(&empty),
                sphere_diameter_m: 0.063,
                sphere_position_m: None,
            },
            &ExtractOptions::with_gate(0.1, 0.6),
        )
        .unwrap()
    }

    #[test]
    fn plate_permittivity_is_recovered() {
        let p = profile();
        let opts = ExtractOptions::with_gate(0.1, 0.6);
        let plate = SceneTarget::at_polar("p", 0.25, 0.0, 4.0, 0.04);
        let x = extract(&frame(&[plate], 0.002, 4), &p, &opts).unwrap();
        let eps = x.features.dielectric_constant;
        assert!((3.6..=4.4).contains(&eps), "ε = {eps}");
        let f = &x.features;
        assert!((f.rcs_m2 - f.power_reflection * f.prca_area_m2).abs() <= 1e-9 * f.rcs_m2);

        let metal = SceneTarget::at_polar("m", 0.25, 0.0, METAL_EPSILON, 0.04);
        let x = extract(&frame(&[metal], 0.002, 5), &p, &opts).unwrap();
        assert!(x.features.dielectric_constant >= 25.0, "{}", x.features.dielectric_constant);
    }

    #[test]
    fn uncalibrated_profile_fails_before_measuring() {
        let (cfg, geo) = rig();
        let bare = CalibrationProfile::uncalibrated(&cfg, &geo, 1e-6).unwrap();
        let plate = SceneTarget::at_polar("p", 0.25, 0.0, 4.0, 0.04);
        let err = extract(&frame(&[plate], 0.0, 0), &bare, &ExtractOptions::with_gate(0.1, 0.6)).unwrap_err();
        assert_eq!(err.stage(), crate::Stage::Calibration);
    }

    #[test]
    fn empty_frame_has_no_target() {
        let err = extract(&frame(&[], 0.002, 9), &profile(), &ExtractOptions::with_gate(0.1, 0.6)).unwrap_err();
        assert_eq!(err.stage(), crate::Stage::NoTarget);
    }
}
