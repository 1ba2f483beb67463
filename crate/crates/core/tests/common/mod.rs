#![allow(dead_code)]

use std::f64::consts::PI;

use matsense::calibration::CalibrationProfile;
use matsense::pipeline::{calibrate, CalibrationInputs, ExtractOptions, NoiseSource};
use matsense::signal_model::{synthesize_frame, ArrayGeometry, ChirpConfig, RadarCube, SceneTarget, METAL_EPSILON};

pub const ANTENNAS: usize = 8;
pub const SPHERE_DIAMETER_M: f64 = 0.063;
pub const BENCH_RANGE_M: f64 = 0.25;
pub const PLATE_AREA_M2: f64 = 0.04;
/// Per-sample noise power on every antenna.
pub const NOISE_W: f64 = 0.002;

pub fn rig() -> (ChirpConfig, ArrayGeometry) {
    let cfg = ChirpConfig::default();
    let geo = ArrayGeometry::default_for(&cfg, ANTENNAS).unwrap();
    (cfg, geo)
}

pub fn frame(targets: &[SceneTarget], noise_w: f64, seed: u64) -> RadarCube {
    let (cfg, geo) = rig();
    synthesize_frame(targets, &cfg, &geo, noise_w, seed).unwrap()
}

pub fn plate(eps: f64, area: f64) -> SceneTarget {
    SceneTarget::at_polar("plate", BENCH_RANGE_M, 0.0, eps, area)
}

pub fn options() -> ExtractOptions {
    ExtractOptions::with_gate(0.1, 0.6)
}

pub fn calibrated_profile() -> CalibrationProfile {
    let sphere = SceneTarget::at_polar(
        "sphere",
        BENCH_RANGE_M,
        0.0,
        METAL_EPSILON,
        PI * (SPHERE_DIAMETER_M / 2.0).powi(2),
    );
    let empty = frame(&[], NOISE_W, 100);
    calibrate(
        &CalibrationInputs {
            sphere: &frame(&[sphere], NOISE_W, 101),
            plate: &frame(&[plate(METAL_EPSILON, PLATE_AREA_M2)], NOISE_W, 102),
            noise: NoiseSource::EmptyScene(&empty),
            sphere_diameter_m: SPHERE_DIAMETER_M,
            sphere_position_m: None,
        },
        &options(),
    )
    .unwrap()
}

/// Echo power per sample of a boresight plate, against the per-sample noise.
pub fn sample_snr_db(eps: f64, area: f64, noise_w: f64) -> f64 {
    let r = matsense::signal_model::fresnel_amplitude(eps, 0.0).unwrap();
    let amp = r * area.sqrt() / BENCH_RANGE_M.powi(2);
    10.0 * (amp * amp / noise_w).log10()
}
