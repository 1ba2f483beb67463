//! Range-Doppler and range-angle processing, beamforming and gated detection.

use nalgebra::Vector3;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::signal_model::{ArrayGeometry, ChirpConfig, RadarCube};

/// Taper applied along one FFT axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    None,
    Hann,
}

impl Window {
    fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::None => vec![1.0; len],
            Window::Hann if len < 2 => vec![1.0; len],
            Window::Hann => (0..len)
                .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SpectralOptions {
    #[serde(default)]
    pub range_window: Window,
    #[serde(default)]
    pub doppler_window: Window,
}

/// Default azimuth grid: 181 cell-centred points tiling (−90°, +90°).
pub fn default_angle_grid() -> Vec<f64> {
    uniform_angle_grid(181)
}

/// `count` cell-centred points tiling the open interval (−π/2, π/2).
pub fn uniform_angle_grid(count: usize) -> Vec<f64> {
    let step = PI / count as f64;
    (0..count)
        .map(|k| -PI / 2.0 + (k as f64 + 0.5) * step)
        .collect()
}

/// Range FFT of every chirp on every antenna, normalised by the window sum.
/// Layout: `[antenna][chirp][range_bin]`.
fn range_profiles(cube: &RadarCube, window: Window) -> Vec<Complex64> {
    let cfg = cube.config();
    let ns = cfg.samples_per_chirp;
    let nr = cfg.range_fft_len();
    let nc = cfg.chirps_per_frame;
    let w = window.coefficients(ns);
    let gain: f64 = w.iter().sum();
    let fft = FftPlanner::new().plan_fft_forward(nr);
    let mut out = vec![Complex64::new(0.0, 0.0); cube.antennas() * nc * nr];
    out.par_chunks_mut(nr).enumerate().for_each(|(row, buf)| {
        let (a, c) = (row / nc, row % nc);
        for ((dst, s), wk) in buf.iter_mut().zip(cube.chirp(c, a)).zip(&w) {
            *dst = s * (wk / gain);
        }
        fft.process(buf);
    });
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerMap {
    range_bins: usize,
    doppler_bins: usize,
    antennas: usize,
    range_bin_m: f64,
    velocity_bin_m_s: f64,
    magnitudes: Vec<f64>,
    spectrum: Vec<Complex64>,
}

impl RangeDopplerMap {
    pub fn range_bins(&self) -> usize {
        self.range_bins
    }

    pub fn doppler_bins(&self) -> usize {
        self.doppler_bins
    }

    pub fn range_bin_m(&self) -> f64 {
        self.range_bin_m
    }

    pub fn velocity_bin_m_s(&self) -> f64 {
        self.velocity_bin_m_s
    }

    /// Doppler bins are shifted so that zero velocity sits at `doppler_bins / 2`.
    pub fn zero_doppler_bin(&self) -> usize {
        self.doppler_bins / 2
    }

    pub fn magnitude(&self, range_bin: usize, doppler_bin: usize) -> f64 {
        self.magnitudes[range_bin * self.doppler_bins + doppler_bin]
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn range_of_bin(&self, range_bin: usize) -> f64 {
        range_bin as f64 * self.range_bin_m
    }

    /// Radial velocity of a Doppler bin; positive means receding.
    pub fn velocity_of_bin(&self, doppler_bin: usize) -> f64 {
        -(doppler_bin as f64 - self.zero_doppler_bin() as f64) * self.velocity_bin_m_s
    }

    /// Complex per-antenna values of one range-Doppler cell.
    pub fn cell_signal(&self, range_bin: usize, doppler_bin: usize) -> Vec<Complex64> {
        let start = (range_bin * self.doppler_bins + doppler_bin) * self.antennas;
        self.spectrum[start..start + self.antennas].to_vec()
    }

    /// Range-major `(range_bin, doppler_bin)` of the strongest cell.
    pub fn peak(&self) -> (usize, usize) {
        let i = argmax(&self.magnitudes);
        (i / self.doppler_bins, i % self.doppler_bins)
    }

    /// Noise power per cell and antenna, from the median cell power of a
    /// target-free frame. For circular Gaussian noise `|X|²` is exponential,
    /// so the mean is `median / ln 2`.
    pub fn noise_power_estimate(&self) -> f64 {
        let mut powers: Vec<f64> = self.spectrum.iter().map(|x| x.norm_sqr()).collect();
        median_in_place(&mut powers) / std::f64::consts::LN_2
    }

    pub fn to_text(&self) -> String {
        MapDocument {
            kind: "range-doppler".into(),
            rows: self.range_bins,
            cols: self.doppler_bins,
            range_bin_m: self.range_bin_m,
            velocity_bin_m_s: Some(self.velocity_bin_m_s),
            first_range_bin: 0,
            angle_grid_rad: None,
            magnitudes: self.magnitudes.clone(),
        }
        .to_text()
    }
}

pub fn range_doppler(cube: &RadarCube) -> Result<RangeDopplerMap> {
    range_doppler_with(cube, &SpectralOptions::default())
}

pub fn range_doppler_with(cube: &RadarCube, options: &SpectralOptions) -> Result<RangeDopplerMap> {
    let cfg = cube.config();
    let nc = cfg.chirps_per_frame;
    if nc < 2 {
        return Err(Error::Domain(format!(
            "range-Doppler processing needs at least 2 chirps, got {nc}"
        )));
    }
    let nr = cfg.range_fft_len();
    let nd = cfg.doppler_fft_len();
    let na = cube.antennas();
    let profiles = range_profiles(cube, options.range_window);

    let w = options.doppler_window.coefficients(nc);
    let gain: f64 = w.iter().sum();
    let fft = FftPlanner::new().plan_fft_forward(nd);
    // [antenna][range][doppler], shifted
    let mut slow = vec![Complex64::new(0.0, 0.0); na * nr * nd];
    slow.par_chunks_mut(nd).enumerate().for_each(|(row, buf)| {
        let (a, r) = (row / nr, row % nr);
        let mut tmp = vec![Complex64::new(0.0, 0.0); nd];
        for c in 0..nc {
            tmp[c] = profiles[(a * nc + c) * nr + r] * (w[c] / gain);
        }
        fft.process(&mut tmp);
        for (d, dst) in buf.iter_mut().enumerate() {
            *dst = tmp[(d + nd / 2) % nd];
        }
    });

    let mut spectrum = vec![Complex64::new(0.0, 0.0); nr * nd * na];
    let mut magnitudes = vec![0.0; nr * nd];
    for r in 0..nr {
        for d in 0..nd {
            let cell = r * nd + d;
            for a in 0..na {
                let v = slow[(a * nr + r) * nd + d];
                spectrum[cell * na + a] = v;
                magnitudes[cell] += v.norm();
            }
        }
    }

    Ok(RangeDopplerMap {
        range_bins: nr,
        doppler_bins: nd,
        antennas: na,
        range_bin_m: cfg.range_bin_m(),
        velocity_bin_m_s: cfg.velocity_bin_m_s(),
        magnitudes,
        spectrum,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeAngleMap {
    magnitudes: Vec<f64>,
    angle_grid_rad: Vec<f64>,
    range_bin_m: f64,
    first_range_bin: usize,
    rows: usize,
}

impl RangeAngleMap {
    /// Builds a map from explicit magnitudes; rows are range bins starting at
    /// `first_range_bin`.
    pub fn from_parts(
        magnitudes: Vec<f64>,
        angle_grid_rad: Vec<f64>,
        range_bin_m: f64,
        first_range_bin: usize,
    ) -> Result<Self> {
        validate_grid(&angle_grid_rad)?;
        if !(range_bin_m > 0.0) {
            return Err(Error::Domain("range bin size must be positive".into()));
        }
        let cols = angle_grid_rad.len();
        if !magnitudes.len().is_multiple_of(cols) {
            return Err(Error::Domain(format!(
                "{} magnitudes do not fill rows of {cols} angles",
                magnitudes.len()
            )));
        }
        if magnitudes.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::Domain("map magnitudes must be finite and >= 0".into()));
        }
        Ok(Self {
            rows: magnitudes.len() / cols,
            magnitudes,
            angle_grid_rad,
            range_bin_m,
            first_range_bin,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.angle_grid_rad.len()
    }

    pub fn angle_grid_rad(&self) -> &[f64] {
        &self.angle_grid_rad
    }

    pub fn range_bin_m(&self) -> f64 {
        self.range_bin_m
    }

    pub fn first_range_bin(&self) -> usize {
        self.first_range_bin
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    /// Magnitude at local row `row` (range bin `first_range_bin + row`).
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.magnitudes[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.cols();
        &self.magnitudes[row * c..(row + 1) * c]
    }

    /// Angle-bin edges: midpoints between grid points, mirrored at the ends.
    pub fn angle_edges(&self) -> Vec<f64> {
        let g = &self.angle_grid_rad;
        let mut edges = Vec::with_capacity(g.len() + 1);
        if g.len() == 1 {
            let half = 0.5 * PI / 180.0;
            return vec![g[0] - half, g[0] + half];
        }
        edges.push(g[0] - 0.5 * (g[1] - g[0]));
        for w in g.windows(2) {
            edges.push(0.5 * (w[0] + w[1]));
        }
        let n = g.len();
        edges.push(g[n - 1] + 0.5 * (g[n - 1] - g[n - 2]));
        edges
    }

    /// Sub-map restricted to range bins whose centres fall inside `gate`.
    pub fn gated(&self, gate: (f64, f64)) -> Result<RangeAngleMap> {
        let rows: Vec<usize> = (0..self.rows)
            .filter(|&r| {
                let range = (self.first_range_bin + r) as f64 * self.range_bin_m;
                range >= gate.0 && range <= gate.1
            })
            .collect();
        let (Some(&lo), Some(&hi)) = (rows.first(), rows.last()) else {
            return Err(Error::Domain(format!(
                "gate [{}, {}] m covers no range bin",
                gate.0, gate.1
            )));
        };
        let c = self.cols();
        Self::from_parts(
            self.magnitudes[lo * c..(hi + 1) * c].to_vec(),
            self.angle_grid_rad.clone(),
            self.range_bin_m,
            self.first_range_bin + lo,
        )
    }

    pub fn to_text(&self) -> String {
        MapDocument {
            kind: "range-angle".into(),
            rows: self.rows,
            cols: self.cols(),
            range_bin_m: self.range_bin_m,
            velocity_bin_m_s: None,
            first_range_bin: self.first_range_bin,
            angle_grid_rad: Some(self.angle_grid_rad.clone()),
            magnitudes: self.magnitudes.clone(),
        }
        .to_text()
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Domain("angle grid is empty".into()));
    }
    if grid.iter().any(|a| !(a.abs() < PI / 2.0)) {
        return Err(Error::Domain("angle grid must lie inside (−π/2, π/2)".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("angle grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Two-way steering vector for the monostatic-equivalent phase centres:
/// `exp(−j·4π·(p_j·û(θ))/λ)` with `û(θ) = (sin θ, 0, cos θ)`.
pub fn steering_vector(geometry: &ArrayGeometry, angle_rad: f64, wavelength_m: f64) -> Vec<Complex64> {
    let u = Vector3::new(angle_rad.sin(), 0.0, angle_rad.cos());
    geometry
        .positions()
        .iter()
        .map(|p| Complex64::from_polar(1.0, -4.0 * PI * p.dot(&u) / wavelength_m))
        .collect()
}

/// Delay-and-sum beamformer output `(1/N)·Σ_j x_j·a_j(θ)`.
pub fn beamform(signal: &[Complex64], steering: &[Complex64]) -> Complex64 {
    let n = signal.len() as f64;
    signal.iter().zip(steering).map(|(x, a)| x * a).sum::<Complex64>() / n
}

pub fn range_angle(cube: &RadarCube, angle_grid: &[f64]) -> Result<RangeAngleMap> {
    range_angle_with(cube, angle_grid, None, &SpectralOptions::default())
}

/// Range-angle map from delay-and-sum beamforming of every chirp's range
/// profile; per-chirp magnitudes are averaged. Optional per-antenna
/// calibration phasors are applied before steering.
pub fn range_angle_with(
    cube: &RadarCube,
    angle_grid: &[f64],
    phasors: Option<&[Complex64]>,
    options: &SpectralOptions,
) -> Result<RangeAngleMap> {
    let na = cube.antennas();
    if na < 2 {
        return Err(Error::Domain("beamforming needs at least 2 antennas".into()));
    }
    validate_grid(angle_grid)?;
    if let Some(p) = phasors {
        if p.len() != na {
            return Err(Error::Calibration(format!(
                "{} phasors for {na} antennas",
                p.len()
            )));
        }
    }
    let cfg: &ChirpConfig = cube.config();
    let lambda = cfg.wavelength_m();
    let nr = cfg.range_fft_len();
    let nc = cfg.chirps_per_frame;
    let profiles = range_profiles(cube, options.range_window);
    let steering: Vec<Vec<Complex64>> = angle_grid
        .iter()
        .map(|&a| {
            let mut s = steering_vector(cube.geometry(), a, lambda);
            if let Some(p) = phasors {
                for (si, pi) in s.iter_mut().zip(p) {
                    *si *= pi;
                }
            }
            s
        })
        .collect();

    let cols = angle_grid.len();
    let mut magnitudes = vec![0.0; nr * cols];
    magnitudes
        .par_chunks_mut(cols)
        .enumerate()
        .for_each(|(r, row)| {
            let mut x = vec![Complex64::new(0.0, 0.0); na];
            for c in 0..nc {
                for (a, xa) in x.iter_mut().enumerate() {
                    *xa = profiles[(a * nc + c) * nr + r];
                }
                for (m, s) in row.iter_mut().zip(&steering) {
                    *m += beamform(&x, s).norm();
                }
            }
            for m in row.iter_mut() {
                *m /= nc as f64;
            }
        });

    RangeAngleMap::from_parts(magnitudes, angle_grid.to_vec(), cfg.range_bin_m(), 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetDetection {
    pub range_m: f64,
    pub velocity_m_s: f64,
    pub angle_rad: f64,
    pub range_bin: usize,
    pub doppler_bin: usize,
    pub angle_bin: usize,
    /// Per-antenna complex values of the detected range-Doppler cell.
    pub gated_signal: Vec<Complex64>,
}

impl TargetDetection {
    /// Cartesian position of the detected cell centre in the array frame.
    pub fn voxel(&self) -> Vector3<f64> {
        let (s, c) = self.angle_rad.sin_cos();
        Vector3::new(self.range_m * s, 0.0, self.range_m * c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    /// Required margin of the detected cell above the median map magnitude.
    pub threshold_db: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self { threshold_db: 12.0 }
    }
}

impl DetectionConfig {
    pub fn amplitude_ratio(&self) -> f64 {
        10f64.powf(self.threshold_db / 20.0)
    }
}

pub fn detect_target(
    rd_map: &RangeDopplerMap,
    ra_map: &RangeAngleMap,
    gate: (f64, f64),
) -> Result<TargetDetection> {
    detect_target_with(rd_map, ra_map, gate, &DetectionConfig::default())
}

pub fn detect_target_with(
    rd_map: &RangeDopplerMap,
    ra_map: &RangeAngleMap,
    gate: (f64, f64),
    config: &DetectionConfig,
) -> Result<TargetDetection> {
    let extent = (rd_map.range_bins() - 1) as f64 * rd_map.range_bin_m();
    if !(gate.0 >= 0.0 && gate.0 < gate.1 && gate.1 <= extent) {
        return Err(Error::Domain(format!(
            "gate [{}, {}] m is not inside the map extent [0, {extent:.3}] m",
            gate.0, gate.1
        )));
    }
    let mut mags = rd_map.magnitudes().to_vec();
    let median = median_in_place(&mut mags);
    let threshold = config.amplitude_ratio() * median;

    let mut best: Option<(usize, usize, f64)> = None;
    for r in 0..rd_map.range_bins() {
        let range = rd_map.range_of_bin(r);
        if range < gate.0 || range > gate.1 {
            continue;
        }
        for d in 0..rd_map.doppler_bins() {
            let m = rd_map.magnitude(r, d);
            if best.is_none_or(|(_, _, b)| m > b) {
                best = Some((r, d, m));
            }
        }
    }
    let (range_bin, doppler_bin, peak) = best.expect("gate covers at least one bin");
    if !(peak > 0.0 && peak >= threshold) {
        return Err(Error::NoTarget(format!(
            "strongest cell in [{}, {}] m is {peak:.3e}, threshold {threshold:.3e}",
            gate.0, gate.1
        )));
    }

    let row = range_bin
        .checked_sub(ra_map.first_range_bin())
        .filter(|&r| r < ra_map.rows())
        .ok_or_else(|| {
            Error::Domain(format!("range-angle map does not cover range bin {range_bin}"))
        })?;
    let angle_bin = argmax(ra_map.row(row));
    let gated_signal = rd_map.cell_signal(range_bin, doppler_bin);

    Ok(TargetDetection {
        range_m: rd_map.range_of_bin(range_bin),
        velocity_m_s: rd_map.velocity_of_bin(doppler_bin),
        angle_rad: ra_map.angle_grid_rad()[angle_bin],
        range_bin,
        doppler_bin,
        angle_bin,
        gated_signal,
    })
}

/// First index of the maximum (lowest index wins ties).
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn median_in_place(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MapDocument {
    kind: String,
    rows: usize,
    cols: usize,
    range_bin_m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    velocity_bin_m_s: Option<f64>,
    first_range_bin: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    angle_grid_rad: Option<Vec<f64>>,
    magnitudes: Vec<f64>,
}

impl MapDocument {
    fn to_text(&self) -> String {
        toml::to_string(self).expect("map serialises")
    }
}
