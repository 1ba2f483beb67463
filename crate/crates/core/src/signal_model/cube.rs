use num_complex::Complex64;
use rustfft::num_complex;

use super::{ArrayGeometry, ChirpConfig};
use crate::error::{Error, Result};

pub const CUBE_MAGIC: &[u8; 4] = b"RCUB";
pub const CUBE_VERSION: u32 = 1;
pub const CUBE_HEADER_LEN: usize = 64;

/// Complex baseband samples of one frame, laid out fast-time fastest, then
/// chirp, then antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarCube {
    samples: Vec<Complex64>,
    config: ChirpConfig,
    geometry: ArrayGeometry,
}

impl RadarCube {
    pub fn new(samples: Vec<Complex64>, config: ChirpConfig, geometry: ArrayGeometry) -> Result<Self> {
        config.validate()?;
        let expected = config.samples_per_chirp * config.chirps_per_frame * geometry.len();
        if samples.len() != expected {
            return Err(Error::Format(format!(
                "cube holds {} samples, dimensions need {expected}",
                samples.len()
            )));
        }
        if let Some(i) = samples.iter().position(|s| !(s.re.is_finite() && s.im.is_finite())) {
            return Err(Error::Format(format!("sample {i} is not finite")));
        }
        Ok(Self {
            samples,
            config,
            geometry,
        })
    }

    pub fn config(&self) -> &ChirpConfig {
        &self.config
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn antennas(&self) -> usize {
        self.geometry.len()
    }

    pub fn sample(&self, fast: usize, chirp: usize, antenna: usize) -> Complex64 {
        let ns = self.config.samples_per_chirp;
        let nc = self.config.chirps_per_frame;
        self.samples[fast + ns * (chirp + nc * antenna)]
    }

    /// Samples of one chirp on one antenna.
    pub fn chirp(&self, chirp: usize, antenna: usize) -> &[Complex64] {
        let ns = self.config.samples_per_chirp;
        let start = ns * (chirp + self.config.chirps_per_frame * antenna);
        &self.samples[start..start + ns]
    }

    pub fn scaled(&self, gain: f64) -> RadarCube {
        RadarCube {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            config: self.config,
            geometry: self.geometry.clone(),
        }
    }

    /// Replaces the array geometry, which the binary format does not carry.
    pub fn with_geometry(mut self, geometry: ArrayGeometry) -> Result<Self> {
        if geometry.len() != self.geometry.len() {
            return Err(Error::Format(format!(
                "geometry has {} elements but the cube has {} antennas",
                geometry.len(),
                self.geometry.len()
            )));
        }
        self.geometry = geometry;
        Ok(self)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(CUBE_HEADER_LEN + self.samples.len() * 8);
        out.extend_from_slice(CUBE_MAGIC);
        out.extend_from_slice(&CUBE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config.samples_per_chirp as u32).to_le_bytes());
        out.extend_from_slice(&(self.config.chirps_per_frame as u32).to_le_bytes());
        out.extend_from_slice(&(self.geometry.len() as u32).to_le_bytes());
        out.extend_from_slice(&0u32.to_le_bytes());
        for v in [
            self.config.carrier_frequency_hz,
            self.config.bandwidth_hz,
            self.config.slope_hz_per_s,
            self.config.sample_rate_hz,
            0.0,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        debug_assert_eq!(out.len(), CUBE_HEADER_LEN);
        for s in &self.samples {
            out.extend_from_slice(&(s.re as f32).to_le_bytes());
            out.extend_from_slice(&(s.im as f32).to_le_bytes());
        }
        out
    }

    /// Parses the binary cube. Without an explicit geometry a λ/4 uniform
    /// linear array is assumed.
    pub fn from_bytes(bytes: &[u8], geometry: Option<ArrayGeometry>) -> Result<Self> {
        if bytes.len() < CUBE_HEADER_LEN {
            return Err(Error::Format(format!(
                "cube is {} bytes, shorter than its {CUBE_HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[0..4] != CUBE_MAGIC {
            return Err(Error::Format("bad magic, expected RCUB".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(4);
        if version != CUBE_VERSION {
            return Err(Error::Format(format!("unsupported cube version {version}")));
        }
        let (ns, nc, na) = (u32_at(8) as usize, u32_at(12) as usize, u32_at(16) as usize);
        if ns == 0 || nc == 0 || na == 0 {
            return Err(Error::Format(format!("zero dimension in {ns}x{nc}x{na}")));
        }
        let config = ChirpConfig {
            carrier_frequency_hz: f64_at(24),
            bandwidth_hz: f64_at(32),
            slope_hz_per_s: f64_at(40),
            sample_rate_hz: f64_at(48),
            samples_per_chirp: ns,
            chirps_per_frame: nc,
        };
        config
            .validate()
            .map_err(|e| Error::Format(format!("header config invalid: {e}")))?;
        let count = ns
            .checked_mul(nc)
            .and_then(|v| v.checked_mul(na))
            .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
        let body = &bytes[CUBE_HEADER_LEN..];
        if body.len() != count * 8 {
            return Err(Error::Format(format!(
                "body is {} bytes, dimensions {ns}x{nc}x{na} need {}",
                body.len(),
                count * 8
            )));
        }
        let samples = body
            .chunks_exact(8)
            .map(|c| {
                let re = f32::from_le_bytes(c[0..4].try_into().unwrap());
                let im = f32::from_le_bytes(c[4..8].try_into().unwrap());
                Complex64::new(re as f64, im as f64)
            })
            .collect();
        let geometry = match geometry {
            Some(g) if g.len() == na => g,
            Some(g) => {
                return Err(Error::Format(format!(
                    "geometry has {} elements but the cube has {na} antennas",
                    g.len()
                )))
            }
            None => ArrayGeometry::default_for(&config, na)
                .map_err(|e| Error::Format(e.to_string()))?,
        };
        RadarCube::new(samples, config, geometry)
    }
}
