//! From enhanced SNR and PRCA to reflectivity, Fresnel coefficient and
//! relative permittivity.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::calibration::{rcs_from_snr, CalibrationProfile};
use crate::error::{Error, Result, StageExt};
use crate::prca::PrcaRegion;
use crate::signal_model::fresnel_amplitude;
use crate::spectral::TargetDetection;
use crate::synthesis::SynthesisResult;

/// Upper clamp for the normalised Fresnel magnitude.
pub const MAX_FRESNEL: f64 = 1.0 - 1e-9;

/// Radar-side feature record of one target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmFeatureVector {
    pub range_m: f64,
    pub velocity_m_s: f64,
    pub angle_rad: f64,
    pub snr_db: f64,
    pub rcs_m2: f64,
    pub power_reflection: f64,
    pub fresnel_coefficient: f64,
    pub dielectric_constant: f64,
    /// PRCA the reflection was normalised by.
    pub prca_area_m2: f64,
}

impl EmFeatureVector {
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("feature vector serialises")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let v: Self = toml::from_str(text).map_err(|e| Error::Format(e.message().to_string()))?;
        if !(v.dielectric_constant >= 1.0) || !(0.0..1.0).contains(&v.fresnel_coefficient) {
            return Err(Error::Format(
                "feature record has ε < 1 or a Fresnel magnitude outside [0, 1)".into(),
            ));
        }
        Ok(v)
    }

    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }
}

/// `ρ = σ/A_r` and `r_p = √(ρ/ρ_metal)`, clamped below one.
pub fn reflection_coefficients(rcs_m2: f64, area_m2: f64, profile: &CalibrationProfile) -> Result<(f64, f64)> {
    let reference = profile.metal_plate_rho()?;
    if !(area_m2 > 0.0 && area_m2.is_finite()) {
        return Err(Error::Domain(format!("PRCA must be positive, got {area_m2}")));
    }
    if !(rcs_m2 >= 0.0 && rcs_m2.is_finite()) {
        return Err(Error::Domain(format!("RCS must be non-negative, got {rcs_m2}")));
    }
    let rho = rcs_m2 / area_m2;
    let r_p = (rho / reference).sqrt().clamp(0.0, MAX_FRESNEL);
    Ok((rho, r_p))
}

/// Inverts the p-polarised Fresnel magnitude for `ε_r`.
///
/// Off normal incidence the squared relation is quadratic in `ε_r` and both
/// roots reproduce `r_p`; roots below one are discarded and the remaining
/// one with the smaller forward residual is returned, preferring `+`.
pub fn dielectric_from_fresnel(r_p: f64, incidence_angle_rad: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&r_p) {
        return Err(Error::Domain(format!("Fresnel magnitude must lie in [0, 1), got {r_p}")));
    }
    if !(0.0..PI / 2.0).contains(&incidence_angle_rad) {
        return Err(Error::Domain(format!(
            "incidence angle must lie in [0, π/2), got {incidence_angle_rad}"
        )));
    }
    if incidence_angle_rad == 0.0 {
        return Ok(((1.0 + r_p) / (1.0 - r_p)).powi(2));
    }
    let (s2, c) = ((2.0 * incidence_angle_rad).sin(), incidence_angle_rad.cos());
    let q = s2 * (r_p - 1.0) / (r_p + 1.0);
    let disc = 1.0 - q * q;
    if disc < 0.0 {
        return Err(Error::NoSolution(format!(
            "no real permittivity for r_p = {r_p} at {:.2}°",
            incidence_angle_rad.to_degrees()
        )));
    }
    let scale = (r_p + 1.0).powi(2) / (2.0 * c * c * (r_p - 1.0).powi(2));
    let mut best: Option<(f64, f64)> = None;
    for root in [scale * (1.0 + disc.sqrt()), scale * (1.0 - disc.sqrt())] {
        // Admit roots a rounding error below one as vacuum.
        if !(root >= 1.0 - 1e-12) {
            continue;
        }
        let eps = root.max(1.0);
        let residual = (fresnel_amplitude(eps, incidence_angle_rad)?.abs() - r_p).abs();
        if best.is_none_or(|(_, r)| residual < r) {
            best = Some((eps, residual));
        }
    }
    best.map(|(eps, _)| eps).ok_or_else(|| {
        Error::NoSolution(format!(
            "both roots for r_p = {r_p} at {:.2}° fall below 1",
            incidence_angle_rad.to_degrees()
        ))
    })
}

/// Frequency model `ε_r = a · f^b`, `f` in GHz.
pub fn itu_dielectric(a: f64, b: f64, frequency_ghz: f64) -> Result<f64> {
    if !(a > 0.0 && frequency_ghz > 0.0 && b.is_finite()) {
        return Err(Error::Domain(format!(
            "ITU model needs a > 0 and f > 0, got a = {a}, f = {frequency_ghz}"
        )));
    }
    Ok(a * frequency_ghz.powf(b))
}

pub fn extract_features(
    detection: &TargetDetection,
    synthesis: &SynthesisResult,
    region: &PrcaRegion,
    profile: &CalibrationProfile,
) -> Result<EmFeatureVector> {
    let snr = synthesis.enhanced_snr_linear;
    let rcs = rcs_from_snr(snr, detection.range_m, profile).stage("rcs")?;
    let (rho, r_p) = reflection_coefficients(rcs, region.area_m2, profile).stage("reflection")?;
    let eps = dielectric_from_fresnel(r_p, detection.angle_rad.abs()).stage("dielectric")?;
    Ok(EmFeatureVector {
        range_m: detection.range_m,
        velocity_m_s: detection.velocity_m_s,
        angle_rad: detection.angle_rad,
        snr_db: 10.0 * snr.log10(),
        rcs_m2: rcs,
        power_reflection: rho,
        fresnel_coefficient: r_p,
        dielectric_constant: eps,
        prca_area_m2: region.area_m2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normal_incidence_examples() {
        assert_eq!(dielectric_from_fresnel(0.0, 0.0).unwrap(), 1.0);
        assert!((dielectric_from_fresnel(1.0 / 3.0, 0.0).unwrap() - 4.0).abs() < 1e-12);
        assert!(dielectric_from_fresnel(1.0, 0.0).is_err());
        assert!(dielectric_from_fresnel(0.5, PI / 2.0).is_err());
    }

    #[test]
    fn oblique_round_trip() {
        let theta = 20f64.to_radians();
        let r = fresnel_amplitude(6.0, theta).unwrap();
        let eps = dielectric_from_fresnel(r, theta).unwrap();
        assert!((eps - 6.0).abs() / 6.0 < 1e-6);
    }

    #[test]
    fn vacuum_off_normal() {
        let eps = dielectric_from_fresnel(0.0, 0.3).unwrap();
        assert!((eps - 1.0).abs() < 1e-12);
    }

    #[test]
    fn round_trip_grid() {
        for eps in [1.5, 2.0, 3.0, 4.0, 6.0, 9.0, 16.0, 25.0] {
            for deg in [0.0f64, 10.0, 20.0, 30.0] {
                let t = deg.to_radians();
                let back = dielectric_from_fresnel(fresnel_amplitude(eps, t).unwrap(), t).unwrap();
                assert!((back - eps).abs() / eps < 1e-6, "{eps} at {deg}° gave {back}");
            }
        }
    }

    #[test]
    fn itu_examples() {
        assert_eq!(itu_dielectric(3.2, 0.0, 60.0).unwrap(), 3.2);
        assert!((itu_dielectric(2.0, 1.0, 3.0).unwrap() - 6.0).abs() < 1e-12);
        let v = itu_dielectric(5.0, -0.1, 60.0).unwrap();
        assert!((v.ln() - (5f64.ln() - 0.1 * 60f64.ln())).abs() < 1e-12);
        assert!(itu_dielectric(0.0, 1.0, 3.0).is_err());
    }

    proptest! {
        #[test]
        fn inverse_is_increasing_at_normal_incidence(a in 0.0f64..0.999, b in 0.0f64..0.999) {
            prop_assume!(a < b);
            prop_assert!(dielectric_from_fresnel(a, 0.0).unwrap() < dielectric_from_fresnel(b, 0.0).unwrap());
        }

        #[test]
        fn forward_inverse_consistency(eps in 1.01f64..60.0, deg in 0.0f64..35.0) {
            let t = deg.to_radians();
            let back = dielectric_from_fresnel(fresnel_amplitude(eps, t).unwrap(), t).unwrap();
            prop_assert!((back - eps).abs() / eps < 1e-6);
        }
    }
}
