//! System calibration: radar constant and per-antenna phasors from a metal
//! sphere, the metal-plate reflectivity reference, and the noise floor.

use nalgebra::Vector3;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::prca;
use crate::signal_model::{ArrayGeometry, ChirpConfig, RadarCube, SPEED_OF_LIGHT};
use crate::spectral::{self, DetectionConfig, RangeAngleMap, TargetDetection};
use crate::synthesis::{focus_signal, synthesize};

pub const PROFILE_VERSION: u32 = 1;

/// Smallest sphere diameter accepted, in wavelengths.
pub const OPTICAL_REGION_WAVELENGTHS: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SphereCalibration {
    pub diameter_m: f64,
    pub rcs_m2: f64,
    pub range_m: f64,
    pub snr_linear: f64,
    pub system_constant_k: f64,
    pub phasors: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationProfile {
    carrier_frequency_hz: f64,
    positions: Vec<[f64; 3]>,
    noise_power_w: f64,
    sphere: Option<SphereCalibration>,
    metal_plate_rho: Option<f64>,
}

impl CalibrationProfile {
    /// A profile holding only the array and noise floor.
    pub fn uncalibrated(config: &ChirpConfig, geometry: &ArrayGeometry, noise_power_w: f64) -> Result<Self> {
        if !(noise_power_w > 0.0 && noise_power_w.is_finite()) {
            return Err(Error::Calibration(format!(
                "noise power must be positive, got {noise_power_w}"
            )));
        }
        Ok(Self {
            carrier_frequency_hz: config.carrier_frequency_hz,
            positions: geometry.to_rows(),
            noise_power_w,
            sphere: None,
            metal_plate_rho: None,
        })
    }

    pub fn carrier_frequency_hz(&self) -> f64 {
        self.carrier_frequency_hz
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::from_rows(&self.positions).map_err(|e| Error::Calibration(e.to_string()))
    }

    pub fn antennas(&self) -> usize {
        self.positions.len()
    }

    pub fn noise_power_w(&self) -> f64 {
        self.noise_power_w
    }

    pub fn with_noise_power(mut self, noise_power_w: f64) -> Result<Self> {
        if !(noise_power_w > 0.0 && noise_power_w.is_finite()) {
            return Err(Error::Calibration(format!(
                "noise power must be positive, got {noise_power_w}"
            )));
        }
        self.noise_power_w = noise_power_w;
        Ok(self)
    }

    pub fn sphere(&self) -> Result<&SphereCalibration> {
        self.sphere
            .as_ref()
            .ok_or_else(|| Error::Calibration("profile has no sphere calibration".into()))
    }

    pub fn metal_plate_rho(&self) -> Result<f64> {
        self.metal_plate_rho
            .ok_or_else(|| Error::Calibration("profile has no metal-plate reference".into()))
    }

    pub fn is_complete(&self) -> bool {
        self.sphere.is_some() && self.metal_plate_rho.is_some()
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Calibration(format!("{what} must be positive and finite")));
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.carrier_frequency_hz) {
            return bad("carrier frequency");
        }
        if !ok(self.noise_power_w) {
            return bad("noise power");
        }
        self.geometry()?;
        if let Some(s) = &self.sphere {
            for (name, v) in [
                ("sphere diameter", s.diameter_m),
                ("sphere RCS", s.rcs_m2),
                ("sphere range", s.range_m),
                ("sphere SNR", s.snr_linear),
                ("system constant", s.system_constant_k),
            ] {
                if !ok(v) {
                    return bad(name);
                }
            }
            if s.phasors.len() != self.positions.len() {
                return Err(Error::Calibration(format!(
                    "{} phasors for {} antennas",
                    s.phasors.len(),
                    self.positions.len()
                )));
            }
            if let Some(c) = s.phasors.iter().find(|c| (c.norm() - 1.0).abs() > 1e-9) {
                return Err(Error::Calibration(format!("phasor {c} is not unit magnitude")));
            }
        }
        if let Some(rho) = self.metal_plate_rho {
            if !ok(rho) {
                return bad("metal-plate reflectivity");
            }
            if self.sphere.is_none() {
                return Err(Error::Calibration("plate reference without sphere calibration".into()));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let doc = ProfileDocument {
            version: PROFILE_VERSION,
            carrier_frequency_hz: self.carrier_frequency_hz,
            noise_power_w: self.noise_power_w,
            metal_plate_rho: self.metal_plate_rho,
            antenna_positions_m: self.positions.clone(),
            sphere: self.sphere.as_ref().map(|s| SphereDocument {
                diameter_m: s.diameter_m,
                rcs_m2: s.rcs_m2,
                range_m: s.range_m,
                snr_linear: s.snr_linear,
                system_constant_k: s.system_constant_k,
                phasors: s.phasors.iter().map(|c| [c.re, c.im]).collect(),
            }),
        };
        toml::to_string(&doc).expect("profile serialises")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc: ProfileDocument =
            toml::from_str(text).map_err(|e| Error::Calibration(e.message().to_string()))?;
        if doc.version != PROFILE_VERSION {
            return Err(Error::Calibration(format!(
                "unsupported profile version {}",
                doc.version
            )));
        }
        let profile = Self {
            carrier_frequency_hz: doc.carrier_frequency_hz,
            positions: doc.antenna_positions_m,
            noise_power_w: doc.noise_power_w,
            metal_plate_rho: doc.metal_plate_rho,
            sphere: doc.sphere.map(|s| SphereCalibration {
                diameter_m: s.diameter_m,
                rcs_m2: s.rcs_m2,
                range_m: s.range_m,
                snr_linear: s.snr_linear,
                system_constant_k: s.system_constant_k,
                phasors: s.phasors.iter().map(|[re, im]| Complex64::new(*re, *im)).collect(),
            }),
        };
        profile.validate()?;
        Ok(profile)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileDocument {
    version: u32,
    carrier_frequency_hz: f64,
    noise_power_w: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metal_plate_rho: Option<f64>,
    antenna_positions_m: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sphere: Option<SphereDocument>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SphereDocument {
    diameter_m: f64,
    rcs_m2: f64,
    range_m: f64,
    snr_linear: f64,
    system_constant_k: f64,
    phasors: Vec<[f64; 2]>,
}

/// Noise power per range-Doppler cell and antenna from a target-free cube.
pub fn estimate_noise_power(empty_scene: &RadarCube) -> Result<f64> {
    let p = spectral::range_doppler(empty_scene)?.noise_power_estimate();
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Calibration("empty-scene cube carries no noise".into()));
    }
    Ok(p)
}

/// Model phase of an echo from `voxel` on each antenna: `−4π‖p_j − v‖/λ`.
fn model_phases(geometry: &ArrayGeometry, voxel: &Vector3<f64>, wavelength_m: f64) -> Vec<f64> {
    geometry
        .positions()
        .iter()
        .map(|p| -4.0 * PI * (p - voxel).norm() / wavelength_m)
        .collect()
}

/// Sphere calibration. The reference phases use `sphere_position` when the
/// placement is known, otherwise the detected cell centre. Phasors are
/// referenced to the first antenna, so a phase-ideal array yields `C_j = 1`.
pub fn calibrate_sphere(
    detection: &TargetDetection,
    config: &ChirpConfig,
    geometry: &ArrayGeometry,
    noise_power_w: f64,
    sphere_diameter_m: f64,
    sphere_position: Option<&Vector3<f64>>,
) -> Result<CalibrationProfile> {
    let mut profile = CalibrationProfile::uncalibrated(config, geometry, noise_power_w)?;
    let lambda = config.wavelength_m();
    let min_m = OPTICAL_REGION_WAVELENGTHS * lambda;
    if !(sphere_diameter_m >= min_m && sphere_diameter_m.is_finite()) {
        return Err(Error::NotOpticalRegion {
            diameter_m: sphere_diameter_m,
            min_m,
        });
    }
    if detection.gated_signal.len() != geometry.len() {
        return Err(Error::Calibration(format!(
            "detection has {} antennas, geometry {}",
            detection.gated_signal.len(),
            geometry.len()
        )));
    }
    let voxel = sphere_position.copied().unwrap_or_else(|| detection.voxel());
    let errors: Vec<f64> = detection
        .gated_signal
        .iter()
        .zip(model_phases(geometry, &voxel, lambda))
        .map(|(x, cali)| x.arg() - cali)
        .collect();
    let phasors: Vec<Complex64> = errors
        .iter()
        .map(|e| Complex64::from_polar(1.0, -(e - errors[0])))
        .collect();
    let focused = focus_signal(&detection.gated_signal, &phasors, geometry, &voxel, lambda)?;
    let snr = synthesize(&focused, geometry, &voxel, noise_power_w)
        .map_err(|e| e.at("sphere synthesis"))?
        .enhanced_snr_linear;
    let rcs = PI * (sphere_diameter_m / 2.0).powi(2);
    let range = detection.range_m;
    if !(snr > 0.0 && range > 0.0) {
        return Err(Error::Calibration("sphere echo has no usable power".into()));
    }
    profile.sphere = Some(SphereCalibration {
        diameter_m: sphere_diameter_m,
        rcs_m2: rcs,
        range_m: range,
        snr_linear: snr,
        system_constant_k: snr * range.powi(4) / rcs,
        phasors,
    });
    Ok(profile)
}

/// `σ = σ_c · (SNR/SNR_c) · (R/R_c)⁴`.
pub fn rcs_from_snr(snr_linear: f64, range_m: f64, profile: &CalibrationProfile) -> Result<f64> {
    let s = profile.sphere()?;
    if !(snr_linear >= 0.0 && snr_linear.is_finite()) {
        return Err(Error::Domain(format!("SNR must be non-negative, got {snr_linear}")));
    }
    if !(range_m > 0.0 && range_m.is_finite()) {
        return Err(Error::Domain(format!("range must be positive, got {range_m}")));
    }
    Ok(s.rcs_m2 * (snr_linear / s.snr_linear) * (range_m / s.range_m).powi(4))
}

/// RCS predicted from the radar-equation constant, `SNR · R⁴ / K`.
pub fn rcs_from_constant(snr_linear: f64, range_m: f64, profile: &CalibrationProfile) -> Result<f64> {
    let s = profile.sphere()?;
    Ok(snr_linear * range_m.powi(4) / s.system_constant_k)
}

/// Stores the metal plate's power reflection `σ/A_r` as the unity reference.
pub fn calibrate_plate(
    detection: &TargetDetection,
    ra_map: &RangeAngleMap,
    profile: &CalibrationProfile,
) -> Result<CalibrationProfile> {
    let sphere = profile.sphere()?;
    let geometry = profile.geometry()?;
    let voxel = detection.voxel();
    let focused = focus_signal(
        &detection.gated_signal,
        &sphere.phasors,
        &geometry,
        &voxel,
        profile.wavelength_m(),
    )?;
    let snr = synthesize(&focused, &geometry, &voxel, profile.noise_power_w)
        .map_err(|e| e.at("plate synthesis"))?
        .enhanced_snr_linear;
    let min_snr = DetectionConfig::default().amplitude_ratio().powi(2);
    if !(snr >= min_snr) {
        return Err(Error::Calibration(format!(
            "plate SNR {:.2} dB is below the {:.1} dB detection threshold",
            10.0 * snr.log10(),
            DetectionConfig::default().threshold_db
        )));
    }
    let sigma = rcs_from_snr(snr, detection.range_m, profile)?;
    let area = prca::prca(ra_map)?.area_m2;
    let mut out = profile.clone();
    out.metal_plate_rho = Some(sigma / area);
    Ok(out)
}
