//! Two-dimensional spectra of difference signals.
//!
//! Frequencies are ordinary frequencies (cycles per time unit), so a
//! Hamiltonian written in frequency units puts a gap `ΔE` at frequency `ΔE`.

use std::fmt;
use std::str::FromStr;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{kron, pauli, ComplexMatrix, HilbertStructure, C64, ZERO};
use crate::protocol::{difference_signals, run_prepsy, PrepsyConfig, Signal2D};
use crate::states::{decompose, fano_coefficients, gibbs_state, DensityMatrix};

/// Smallest grid length along either axis.
pub const MIN_GRID: usize = 8;

/// Spectra whose maximum is below this are treated as empty.
pub const PEAK_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    None,
    Hann,
}

impl Window {
    fn weights(self, n: usize) -> Vec<f64> {
        match self {
            Window::None => vec![1.0; n],
            // Periodic Hann, so a length-n window tiles without a repeated zero.
            Window::Hann => {
                (0..n).map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()).collect()
            }
        }
    }
}

impl FromStr for Window {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "rect" => Ok(Window::None),
            "hann" => Ok(Window::Hann),
            other => Err(Error::InvalidParameters(format!("unknown window '{other}' (expected none or hann)"))),
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Window::None => "none",
            Window::Hann => "hann",
        })
    }
}

/// Magnitude spectrum with ascending frequency axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum2D {
    magnitudes: Vec<f64>,
    f1_axis: Vec<f64>,
    f2_axis: Vec<f64>,
    /// Resolution of the unpadded grid, `1/(n·spacing)` per axis.
    pub native_bin: (f64, f64),
    pub source_label: String,
}

impl Spectrum2D {
    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn f1_axis(&self) -> &[f64] {
        &self.f1_axis
    }

    pub fn f2_axis(&self) -> &[f64] {
        &self.f2_axis
    }

    pub fn rows(&self) -> usize {
        self.f1_axis.len()
    }

    pub fn cols(&self) -> usize {
        self.f2_axis.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.magnitudes[i * self.cols() + j]
    }

    pub fn max(&self) -> f64 {
        self.magnitudes.iter().copied().fold(0.0, f64::max)
    }

    /// Spacing of the (possibly padded) frequency axes.
    pub fn bin(&self) -> (f64, f64) {
        let step = |a: &[f64]| if a.len() > 1 { a[1] - a[0] } else { 0.0 };
        (step(&self.f1_axis), step(&self.f2_axis))
    }
}

/// Frequencies of a length-`n` transform with sample spacing `dt`, shifted
/// so they ascend from `−⌊n/2⌋/(n·dt)`.
fn shifted_axis(n: usize, dt: f64) -> Vec<f64> {
    let half = (n / 2) as i64;
    (0..n as i64).map(|i| (i - half) as f64 / (n as f64 * dt)).collect()
}

/// Magnitude of the 2D DFT of `signal`.
///
/// Row and column means are removed first, so every component that is
/// constant along either delay vanishes. The window is applied separably
/// after mean removal, and each axis is then zero-padded to `zero_pad`
/// times its length.
pub fn fft2(signal: &Signal2D, window: Window, zero_pad: usize) -> Result<Spectrum2D> {
    let (n1, n2) = (signal.rows(), signal.cols());
    if n1 < MIN_GRID || n2 < MIN_GRID {
        return Err(Error::InvalidParameters(format!(
            "spectra need at least {MIN_GRID} samples per axis, got {n1}x{n2}"
        )));
    }
    if zero_pad == 0 {
        return Err(Error::InvalidParameters("zero-pad factor must be at least 1".into()));
    }
    let values = signal.values();
    let row_mean: Vec<f64> = (0..n1).map(|i| values[i * n2..(i + 1) * n2].iter().sum::<f64>() / n2 as f64).collect();
    let col_mean: Vec<f64> = (0..n2).map(|j| (0..n1).map(|i| values[i * n2 + j]).sum::<f64>() / n1 as f64).collect();
    let grand = row_mean.iter().sum::<f64>() / n1 as f64;
    let (w1, w2) = (window.weights(n1), window.weights(n2));

    let (m1, m2) = (n1 * zero_pad, n2 * zero_pad);
    let mut buf = vec![ZERO; m1 * m2];
    for i in 0..n1 {
        for j in 0..n2 {
            let centered = values[i * n2 + j] - row_mean[i] - col_mean[j] + grand;
            buf[i * m2 + j] = C64::new(centered * w1[i] * w2[j], 0.0);
        }
    }

    let mut planner = FftPlanner::<f64>::new();
    let along_rows = planner.plan_fft_forward(m2);
    along_rows.process(&mut buf);
    let along_cols = planner.plan_fft_forward(m1);
    let mut column = vec![ZERO; m1];
    for j in 0..m2 {
        for i in 0..m1 {
            column[i] = buf[i * m2 + j];
        }
        along_cols.process(&mut column);
        for i in 0..m1 {
            buf[i * m2 + j] = column[i];
        }
    }

    let (h1, h2) = (m1 / 2, m2 / 2);
    let mut magnitudes = vec![0.0; m1 * m2];
    for i in 0..m1 {
        let src_i = (i + m1 - h1) % m1;
        for j in 0..m2 {
            let src_j = (j + m2 - h2) % m2;
            magnitudes[i * m2 + j] = buf[src_i * m2 + src_j].norm();
        }
    }
    Ok(Spectrum2D {
        magnitudes,
        f1_axis: shifted_axis(m1, signal.t1_spacing),
        f2_axis: shifted_axis(m2, signal.t2_spacing),
        native_bin: (1.0 / (n1 as f64 * signal.t1_spacing), 1.0 / (n2 as f64 * signal.t2_spacing)),
        source_label: signal.label.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub f1: f64,
    pub f2: f64,
    pub magnitude: f64,
}

/// Strict local maxima over the 8 neighbours (periodic at the edges) that
/// reach `rel_threshold` times the global maximum, largest first.
pub fn detect_peaks(spec: &Spectrum2D, rel_threshold: f64) -> Result<Vec<Peak>> {
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(Error::InvalidParameters(format!("peak threshold must lie in (0, 1), got {rel_threshold}")));
    }
    let max = spec.max();
    if max < PEAK_FLOOR {
        return Ok(Vec::new());
    }
    let (r, c) = (spec.rows(), spec.cols());
    let cut = rel_threshold * max;
    let mut peaks = Vec::new();
    for i in 0..r {
        for j in 0..c {
            let v = spec.get(i, j);
            if v < cut {
                continue;
            }
            let is_max = (-1i64..=1).all(|di| {
                (-1i64..=1).all(|dj| {
                    if di == 0 && dj == 0 {
                        return true;
                    }
                    let ni = (i as i64 + di).rem_euclid(r as i64) as usize;
                    let nj = (j as i64 + dj).rem_euclid(c as i64) as usize;
                    v > spec.get(ni, nj)
                })
            });
            if is_max {
                peaks.push(Peak { f1: spec.f1_axis[i], f2: spec.f2_axis[j], magnitude: v });
            }
        }
    }
    peaks.sort_by(|a, b| b.magnitude.total_cmp(&a.magnitude).then(a.f1.total_cmp(&b.f1)).then(a.f2.total_cmp(&b.f2)));
    Ok(peaks)
}

/// Peaks with both frequencies strictly positive.
pub fn positive_quadrant(peaks: &[Peak]) -> Vec<Peak> {
    peaks.iter().copied().filter(|p| p.f1 > 0.0 && p.f2 > 0.0).collect()
}

/// Sum of all magnitudes.
pub fn total_intensity(spec: &Spectrum2D) -> f64 {
    spec.magnitudes.iter().sum()
}

/// Transform settings shared by every spectrum of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analysis {
    pub window: Window,
    pub zero_pad: usize,
    pub peak_threshold: f64,
}

impl Default for Analysis {
    fn default() -> Self {
        Self { window: Window::None, zero_pad: 2, peak_threshold: 0.3 }
    }
}

impl Analysis {
    pub fn validate(&self) -> Result<()> {
        if self.zero_pad == 0 || self.zero_pad > 16 {
            return Err(Error::InvalidParameters(format!("zero_pad must be between 1 and 16, got {}", self.zero_pad)));
        }
        if !(self.peak_threshold > 0.0 && self.peak_threshold < 1.0) {
            return Err(Error::InvalidParameters(format!(
                "peak_threshold must lie in (0, 1), got {}",
                self.peak_threshold
            )));
        }
        Ok(())
    }

    pub fn spectrum(&self, signal: &Signal2D) -> Result<Spectrum2D> {
        fft2(signal, self.window, self.zero_pad)
    }

    /// ℱ summed over the spectra of all pairwise differences.
    pub fn intensity_of(&self, signals: &[Signal2D]) -> Result<f64> {
        let mut total = 0.0;
        for d in difference_signals(signals)? {
            total += total_intensity(&self.spectrum(&d)?);
        }
        Ok(total)
    }
}

/// `ℱ = slope · |c|`, fixed by one thermal anchor point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationLine {
    pub slope: f64,
    /// Correlation coefficient and ℱ of the anchor.
    pub anchor: (f64, f64),
}

impl CalibrationLine {
    pub fn through(correlation: f64, intensity: f64) -> Result<Self> {
        if !(correlation.abs() > 0.0) || !intensity.is_finite() {
            return Err(Error::Calibration(format!("cannot anchor a line at correlation {correlation}")));
        }
        Ok(Self { slope: intensity / correlation.abs(), anchor: (correlation, intensity) })
    }
}

/// Smallest thermal correlation coefficient accepted as an anchor.
pub const MIN_ANCHOR_CORRELATION: f64 = 1e-6;

/// Runs the pipeline on the thermal state of `hamiltonian` and anchors the
/// ℱ-vs-correlation line at its correlation coefficient along `probe`
/// (indices into the two-qubit correlation tensor).
///
/// `hamiltonian` and `beta` share units; the two-qubit state is
/// `e^{−βH}/Z`.
pub fn calibrate(
    hamiltonian: &ComplexMatrix,
    config: &PrepsyConfig,
    beta: f64,
    probe: (usize, usize),
    analysis: &Analysis,
) -> Result<CalibrationLine> {
    if probe.0 > 2 || probe.1 > 2 {
        return Err(Error::InvalidParameters(format!("probe axis {probe:?} must index x, y or z (0..=2)")));
    }
    let structure = HilbertStructure::qubits(2);
    let thermal = gibbs_state(hamiltonian, beta, structure)?;
    let correlation = correlation_coefficient(&thermal, probe)?;
    if correlation.abs() <= MIN_ANCHOR_CORRELATION {
        return Err(Error::Calibration(format!(
            "thermal state at beta = {beta} has correlation {correlation:.3e} along {probe:?}; choose a larger beta or another axis"
        )));
    }
    let intensity = analysis.intensity_of(&run_prepsy(&thermal, config)?)?;
    CalibrationLine::through(correlation, intensity)
}

/// Component `Tr[χ (σ_j ⊗ σ_k)]` of the correlation matrix of a two-qubit
/// state, which is `T_jk − u_j v_k` in the Fano parametrization.
pub fn correlation_coefficient(r: &DensityMatrix, probe: (usize, usize)) -> Result<f64> {
    let fano = fano_coefficients(r)?;
    let paulis = pauli::all();
    let chi = decompose(r)?.chi;
    let c = kron(&paulis[probe.0], &paulis[probe.1]).trace_product(&chi).re;
    debug_assert!((c - (fano.t[probe.0][probe.1] - fano.u[probe.0] * fano.v[probe.1])).abs() < 1e-9);
    Ok(c)
}

/// `|c| = ℱ / slope`.
pub fn measure_correlation(line: &CalibrationLine, f_value: f64) -> Result<f64> {
    if line.slope == 0.0 || !line.slope.is_finite() {
        return Err(Error::Calibration(format!("line slope is {}", line.slope)));
    }
    Ok(f_value / line.slope)
}

/// Least-squares slope of `y = a·x` and the largest residual.
pub fn fit_through_origin(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::InvalidParameters(format!(
            "need matching non-empty samples, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameters("all abscissae are zero".into()));
    }
    let slope = xs.iter().zip(ys).map(|(x, y)| x * y).sum::<f64>() / sxx;
    let residual = xs.iter().zip(ys).map(|(x, y)| (y - slope * x).abs()).fold(0.0, f64::max);
    Ok((slope, residual))
}
