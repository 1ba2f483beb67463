use serde::{Deserialize, Serialize};

use super::{ArrayGeometry, ChirpConfig, RadarCube, SceneTarget, SimulationOptions};
use crate::error::{Error, Result};

/// Array description inside a scene or geometry file.
///
/// Either `positions_m` lists every phase centre, or `antennas` (with an
/// optional `spacing_m`, default λ/4) builds a uniform linear array on x.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antennas: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions_m: Option<Vec<[f64; 3]>>,
}

impl ArraySpec {
    pub fn build(&self, config: &ChirpConfig) -> Result<ArrayGeometry> {
        match (&self.positions_m, self.antennas) {
            (Some(rows), None) => ArrayGeometry::from_rows(rows),
            (None, Some(n)) => {
                let spacing = self.spacing_m.unwrap_or(config.wavelength_m() / 4.0);
                ArrayGeometry::uniform_linear(n, spacing)
            }
            (Some(_), Some(_)) => Err(Error::Scene(
                "array lists both `antennas` and `positions_m`".into(),
            )),
            (None, None) => Err(Error::Scene(
                "array needs either `antennas` or `positions_m`".into(),
            )),
        }
    }

    pub fn from_geometry(geometry: &ArrayGeometry) -> Self {
        Self {
            antennas: None,
            spacing_m: None,
            positions_m: Some(geometry.to_rows()),
        }
    }
}

/// Scene file: chirp settings, array, targets, noise and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDocument {
    pub seed: u64,
    #[serde(default)]
    pub noise_power_w: f64,
    #[serde(default = "default_exponent")]
    pub orientation_exponent: f64,
    #[serde(default)]
    pub chirp: ChirpConfig,
    pub array: ArraySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_offsets_rad: Option<Vec<f64>>,
    #[serde(default)]
    pub targets: Vec<SceneTarget>,
}

fn default_exponent() -> f64 {
    2.0
}

impl SceneDocument {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Scene(e.message().to_string()))
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("scene serialises")
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        self.array.build(&self.chirp)
    }

    pub fn options(&self) -> SimulationOptions {
        SimulationOptions {
            orientation_exponent: self.orientation_exponent,
            phase_offsets_rad: self.phase_offsets_rad.clone(),
        }
    }

    pub fn synthesize(&self) -> Result<RadarCube> {
        let geometry = self.geometry()?;
        super::synthesize_frame_with(
            &self.targets,
            &self.chirp,
            &geometry,
            self.noise_power_w,
            self.seed,
            &self.options(),
        )
    }
}
