//! FMCW waveform, array geometry and the synthetic echo generator.
//!
//! The generator is the oracle for the rest of the pipeline: every target is a
//! point scatterer whose complex beat tone carries
//!
//! * a beat frequency `2·R·S/c` for the range `R = ‖v‖` from the array origin
//!   (narrowband array: all elements share the tone),
//! * the two-way geometric phase `−4π·d_j/λ` for `d_j = ‖p_j − v‖`,
//! * a per-chirp Doppler increment `−4π·V·T_chirp/λ`,
//! * a field amplitude `|r_p(ε_r, θ_inc)|·√A·cosⁿ(θ_inc) / d_j²`, i.e. a
//!   radar cross section of `r_p²·A·cos²ⁿ(θ_inc)` under the `1/R⁴` radar
//!   equation.
//!
//! Element positions are monostatic-equivalent phase centres, so the
//! default spacing of λ/4 corresponds to a λ/2 virtual MIMO array.

mod cube;
mod scene;

pub use cube::{RadarCube, CUBE_HEADER_LEN, CUBE_MAGIC, CUBE_VERSION};
pub use scene::{ArraySpec, SceneDocument};

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub use rustfft::num_complex;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Dielectric constant used to stand in for a perfect conductor.
pub const METAL_EPSILON: f64 = 1.0e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpConfig {
    pub carrier_frequency_hz: f64,
    pub bandwidth_hz: f64,
    pub slope_hz_per_s: f64,
    pub sample_rate_hz: f64,
    pub samples_per_chirp: usize,
    pub chirps_per_frame: usize,
}

impl Default for ChirpConfig {
    /// 60 GHz carrier, 3.96 GHz sweep at 66 MHz/µs, 10 MHz ADC, 512 samples
    /// per chirp and 64 chirps per frame.
    fn default() -> Self {
        Self {
            carrier_frequency_hz: 60.0e9,
            bandwidth_hz: 3.96e9,
            slope_hz_per_s: 66.0e12,
            sample_rate_hz: 10.0e6,
            samples_per_chirp: 512,
            chirps_per_frame: 64,
        }
    }
}

impl ChirpConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_frequency_hz", self.carrier_frequency_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("slope_hz_per_s", self.slope_hz_per_s),
            ("sample_rate_hz", self.sample_rate_hz),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.samples_per_chirp == 0 || self.chirps_per_frame == 0 {
            return Err(Error::Domain("sample and chirp counts must be nonzero".into()));
        }
        let sampling_window = self.samples_per_chirp as f64 / self.sample_rate_hz;
        if self.chirp_duration_s() < sampling_window * (1.0 - 1e-12) {
            return Err(Error::Domain(format!(
                "chirp lasts {:.3e} s but sampling needs {:.3e} s",
                self.chirp_duration_s(),
                sampling_window
            )));
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    /// Sweep duration `B / S`; chirps are back to back so this is also the
    /// chirp repetition interval.
    pub fn chirp_duration_s(&self) -> f64 {
        self.bandwidth_hz / self.slope_hz_per_s
    }

    /// Largest range whose complex beat tone stays below the sample rate.
    pub fn max_range_m(&self) -> f64 {
        self.sample_rate_hz * SPEED_OF_LIGHT / (2.0 * self.slope_hz_per_s)
    }

    /// Nominal resolution `c / 2B` of the full sweep.
    pub fn range_resolution_m(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth_hz)
    }

    pub fn range_fft_len(&self) -> usize {
        self.samples_per_chirp.next_power_of_two()
    }

    pub fn doppler_fft_len(&self) -> usize {
        self.chirps_per_frame.next_power_of_two()
    }

    /// Range spacing of the (zero-padded) range FFT, `c / (2·B_eff)` with
    /// `B_eff = S · N_fft / f_s`.
    pub fn range_bin_m(&self) -> f64 {
        SPEED_OF_LIGHT * self.sample_rate_hz
            / (2.0 * self.slope_hz_per_s * self.range_fft_len() as f64)
    }

    pub fn velocity_bin_m_s(&self) -> f64 {
        self.wavelength_m() / (2.0 * self.doppler_fft_len() as f64 * self.chirp_duration_s())
    }

    /// Noise power of one range-Doppler cell when the per-sample complex
    /// noise power is `sample_noise_power_w`. Spectra are normalised by the
    /// number of real samples, so coherent tones keep their amplitude and
    /// white noise is divided by `N_samples · N_chirps`.
    pub fn cell_noise_power(&self, sample_noise_power_w: f64) -> f64 {
        sample_noise_power_w / (self.samples_per_chirp * self.chirps_per_frame) as f64
    }
}

pub fn beat_frequency(range_m: f64, config: &ChirpConfig) -> Result<f64> {
    if !(range_m.is_finite() && range_m > 0.0) {
        return Err(Error::Domain(format!("range must be positive, got {range_m}")));
    }
    Ok(2.0 * range_m * config.slope_hz_per_s / SPEED_OF_LIGHT)
}

/// p-polarised Fresnel amplitude coefficient of a lossless dielectric half
/// space seen from vacuum.
pub fn fresnel_amplitude(dielectric_constant: f64, incidence_angle_rad: f64) -> Result<f64> {
    if !(dielectric_constant >= 1.0 && dielectric_constant.is_finite()) {
        return Err(Error::Domain(format!(
            "dielectric constant must be >= 1, got {dielectric_constant}"
        )));
    }
    if !(0.0..PI / 2.0).contains(&incidence_angle_rad) {
        return Err(Error::Domain(format!(
            "incidence angle must lie in [0, π/2), got {incidence_angle_rad}"
        )));
    }
    let (s, c) = incidence_angle_rad.sin_cos();
    let a = dielectric_constant * c;
    let b = (dielectric_constant - s * s).sqrt();
    Ok((a - b) / (a + b))
}

/// Array of receive phase centres. Boresight is +z; the array lies in the
/// x-z plane of the array frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    positions: Vec<Vector3<f64>>,
}

impl ArrayGeometry {
    pub fn new(positions: Vec<Vector3<f64>>) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::Domain(format!(
                "array needs at least 2 elements, got {}",
                positions.len()
            )));
        }
        for (i, p) in positions.iter().enumerate() {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::Domain(format!("element {i} has a non-finite position")));
            }
            for q in &positions[..i] {
                if (p - q).norm() < 1e-12 {
                    return Err(Error::Domain(format!("element {i} duplicates another position")));
                }
            }
        }
        Ok(Self { positions })
    }

    /// Uniform linear array along x, centred on the origin.
    pub fn uniform_linear(count: usize, spacing_m: f64) -> Result<Self> {
        if !(spacing_m > 0.0) {
            return Err(Error::Domain("element spacing must be positive".into()));
        }
        let centre = (count as f64 - 1.0) / 2.0;
        let positions = (0..count)
            .map(|j| Vector3::new((j as f64 - centre) * spacing_m, 0.0, 0.0))
            .collect();
        Self::new(positions)
    }

    /// Uniform linear array with λ/4 phase-centre spacing.
    pub fn default_for(config: &ChirpConfig, count: usize) -> Result<Self> {
        Self::uniform_linear(count, config.wavelength_m() / 4.0)
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn to_rows(&self) -> Vec<[f64; 3]> {
        self.positions.iter().map(|p| [p.x, p.y, p.z]).collect()
    }

    pub fn from_rows(rows: &[[f64; 3]]) -> Result<Self> {
        Self::new(rows.iter().map(|r| Vector3::new(r[0], r[1], r[2])).collect())
    }
}

/// One reflecting facet in the oracle scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTarget {
    #[serde(default = "default_target_name")]
    pub name: String,
    pub position_m: [f64; 3],
    #[serde(default)]
    pub radial_velocity_m_s: f64,
    pub dielectric_constant: f64,
    /// Unit normal of the facet; defaults to facing the array.
    #[serde(default)]
    pub facet_normal: Option<[f64; 3]>,
    pub facet_area_m2: f64,
}

fn default_target_name() -> String {
    "target".to_string()
}

impl SceneTarget {
    /// Facet at `position` facing the array origin.
    pub fn facing_array(
        name: impl Into<String>,
        position_m: [f64; 3],
        dielectric_constant: f64,
        facet_area_m2: f64,
    ) -> Self {
        Self {
            name: name.into(),
            position_m,
            radial_velocity_m_s: 0.0,
            dielectric_constant,
            facet_normal: None,
            facet_area_m2,
        }
    }

    /// Target on the x-z plane at `range_m` and azimuth `azimuth_rad`.
    pub fn at_polar(
        name: impl Into<String>,
        range_m: f64,
        azimuth_rad: f64,
        dielectric_constant: f64,
        facet_area_m2: f64,
    ) -> Self {
        let (s, c) = azimuth_rad.sin_cos();
        Self::facing_array(
            name,
            [range_m * s, 0.0, range_m * c],
            dielectric_constant,
            facet_area_m2,
        )
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::from(self.position_m)
    }

    pub fn range_m(&self) -> f64 {
        self.position().norm()
    }

    pub fn normal(&self) -> Vector3<f64> {
        match self.facet_normal {
            Some(n) => Vector3::from(n),
            None => -self.position().normalize(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dielectric_constant >= 1.0 && self.dielectric_constant.is_finite()) {
            return Err(Error::Scene(format!(
                "target `{}` has dielectric constant {} < 1",
                self.name, self.dielectric_constant
            )));
        }
        if !(self.facet_area_m2 > 0.0 && self.facet_area_m2.is_finite()) {
            return Err(Error::Scene(format!(
                "target `{}` needs a positive facet area",
                self.name
            )));
        }
        if !self.position_m.iter().all(|v| v.is_finite()) || self.range_m() <= 0.0 {
            return Err(Error::Scene(format!(
                "target `{}` must sit away from the array origin",
                self.name
            )));
        }
        if let Some(n) = self.facet_normal {
            let norm = Vector3::from(n).norm();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(Error::Scene(format!(
                    "target `{}` facet normal has length {norm}, expected 1",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Angle between the facet normal and the line of sight back to the
    /// array origin. `None` when the facet faces away.
    pub fn incidence_angle_rad(&self) -> Option<f64> {
        let los = -self.position().normalize();
        let cos = self.normal().dot(&los);
        if cos <= 1e-12 {
            None
        } else {
            Some(cos.min(1.0).acos())
        }
    }
}

/// Knobs of the echo model that are not part of the scene geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOptions {
    /// Exponent `n` of the `cosⁿ` facet-orientation attenuation (field).
    pub orientation_exponent: f64,
    /// Optional hardware phase error per antenna, radians.
    pub phase_offsets_rad: Option<Vec<f64>>,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            orientation_exponent: 2.0,
            phase_offsets_rad: None,
        }
    }
}

/// Synthesises one frame with the default echo model.
pub fn synthesize_frame(
    scene: &[SceneTarget],
    config: &ChirpConfig,
    geometry: &ArrayGeometry,
    noise_power_w: f64,
    rng_seed: u64,
) -> Result<RadarCube> {
    synthesize_frame_with(
        scene,
        config,
        geometry,
        noise_power_w,
        rng_seed,
        &SimulationOptions::default(),
    )
}

struct Echo {
    beat_hz: f64,
    phase: f64,
    doppler_step: f64,
    amplitude: f64,
}

pub fn synthesize_frame_with(
    scene: &[SceneTarget],
    config: &ChirpConfig,
    geometry: &ArrayGeometry,
    noise_power_w: f64,
    rng_seed: u64,
    options: &SimulationOptions,
) -> Result<RadarCube> {
    config.validate()?;
    if !(noise_power_w >= 0.0 && noise_power_w.is_finite()) {
        return Err(Error::Domain(format!(
            "noise power must be non-negative, got {noise_power_w}"
        )));
    }
    if let Some(offsets) = &options.phase_offsets_rad {
        if offsets.len() != geometry.len() {
            return Err(Error::Scene(format!(
                "{} phase offsets for {} antennas",
                offsets.len(),
                geometry.len()
            )));
        }
    }
    let max_range = config.max_range_m();
    for target in scene {
        target.validate()?;
        for p in geometry.positions() {
            let d = (p - target.position()).norm();
            if d >= max_range {
                return Err(Error::OutOfRange {
                    name: target.name.clone(),
                    range_m: d,
                    max_range_m: max_range,
                });
            }
        }
    }

    let lambda = config.wavelength_m();
    let t_chirp = config.chirp_duration_s();
    let ns = config.samples_per_chirp;
    let nc = config.chirps_per_frame;
    let dt = 1.0 / config.sample_rate_hz;

    let per_antenna: Vec<Vec<Complex64>> = geometry
        .positions()
        .par_iter()
        .enumerate()
        .map(|(j, p)| {
            let hw = options
                .phase_offsets_rad
                .as_ref()
                .map_or(0.0, |offsets| offsets[j]);
            let echoes: Vec<Echo> = scene
                .iter()
                .filter_map(|t| {
                    let theta = t.incidence_angle_rad()?;
                    let d = (p - t.position()).norm();
                    let r_p = fresnel_amplitude(t.dielectric_constant, theta).ok()?;
                    let amplitude = r_p.abs()
                        * t.facet_area_m2.sqrt()
                        * theta.cos().powf(options.orientation_exponent)
                        / (d * d);
                    // Narrowband array: the beat tone follows the range to the
                    // array origin, per-element path differences only shift phase.
                    Some(Echo {
                        beat_hz: 2.0 * t.range_m() * config.slope_hz_per_s / SPEED_OF_LIGHT,
                        phase: -4.0 * PI * d / lambda + hw,
                        doppler_step: -4.0 * PI * t.radial_velocity_m_s * t_chirp / lambda,
                        amplitude,
                    })
                })
                .collect();

            let mut block = vec![Complex64::new(0.0, 0.0); ns * nc];
            for echo in &echoes {
                let tone: Vec<Complex64> = (0..ns)
                    .map(|n| {
                        Complex64::from_polar(
                            echo.amplitude,
                            2.0 * PI * echo.beat_hz * n as f64 * dt + echo.phase,
                        )
                    })
                    .collect();
                for c in 0..nc {
                    let rot = Complex64::from_polar(1.0, echo.doppler_step * c as f64);
                    for (out, s) in block[c * ns..(c + 1) * ns].iter_mut().zip(&tone) {
                        *out += s * rot;
                    }
                }
            }

            if noise_power_w > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
                rng.set_stream(j as u64);
                let normal = Normal::new(0.0, (noise_power_w / 2.0).sqrt())
                    .expect("finite noise standard deviation");
                for s in block.iter_mut() {
                    *s += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
                }
            }
            block
        })
        .collect();

    let samples = per_antenna.into_iter().flatten().collect();
    RadarCube::new(samples, *config, geometry.clone())
}
