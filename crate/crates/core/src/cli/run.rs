//! Executing an experiment and writing its artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::experiment::{parse_probe, ExperimentFile, StateSpec};
use super::{output, CliError};
use crate::protocol::{difference_pairs, difference_signals, run_prepsy_detailed, RunDiagnostics};
use crate::spectral::{
    calibrate, correlation_coefficient, detect_peaks, fit_through_origin, measure_correlation, positive_quadrant,
    total_intensity, Analysis, Peak,
};

/// Largest difference-signal amplitude still counted as no signal.
pub const NULL_SIGNAL_TOL: f64 = 1e-9;
/// Largest difference-spectrum ℱ still counted as no signal.
pub const NULL_INTENSITY_TOL: f64 = 1e-8;
/// Note recorded when no difference carries signal.
pub const NULL_NOTE: &str = "null result: no initial correlation detected";

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferenceSummary {
    pub pair: (usize, usize),
    pub label: String,
    pub signal_file: String,
    pub spectrum_file: String,
    pub peaks_file: String,
    pub max_abs: f64,
    pub total_intensity: f64,
    pub peak_count: usize,
    pub strongest_positive_peak: Option<Peak>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub probe: String,
    pub beta: f64,
    pub slope: f64,
    pub anchor: (f64, f64),
    /// `|c|` read off the line from this run's ℱ.
    pub measured: f64,
    /// `|c|` of the input state along the probe, when it is a two-qubit state.
    pub actual: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub dir: String,
    pub intensity: f64,
    pub correlation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub parameter: String,
    pub points: Vec<SweepPoint>,
    /// Fit `ℱ = slope·|c|` when every point has a correlation coefficient.
    pub slope: Option<f64>,
    pub max_residual: Option<f64>,
    /// `max_residual` over the largest ℱ.
    pub relative_residual: Option<f64>,
}

/// Written as `manifest.json` next to the files it lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub experiment: serde_json::Value,
    pub analysis: Analysis,
    pub timings: Vec<Timing>,
    /// Paths relative to the manifest's directory.
    pub files: Vec<String>,
    pub diagnostics: RunDiagnostics,
    pub projections: Vec<String>,
    pub probabilities: Vec<f64>,
    pub differences: Vec<DifferenceSummary>,
    pub null_result: bool,
    pub notes: Vec<String>,
    pub warnings: Vec<String>,
    pub calibration: Option<CalibrationReport>,
    pub sweep: Option<SweepReport>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self, CliError> {
        let p = dir.join(MANIFEST);
        let text = fs::read_to_string(&p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
    }
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn put(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<String, CliError> {
        let p = self.dir.join(name);
        fs::write(&p, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))?;
        self.files.push(name.to_string());
        Ok(name.to_string())
    }

    fn finish(self, mut manifest: RunManifest) -> Result<RunManifest, CliError> {
        manifest.files = self.files;
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let p = self.dir.join(MANIFEST);
        fs::write(&p, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))?;
        Ok(manifest)
    }
}

struct Clock {
    timings: Vec<Timing>,
    last: Instant,
}

impl Clock {
    fn new() -> Self {
        Self { timings: Vec::new(), last: Instant::now() }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.push(Timing { stage: stage.into(), seconds: (now - self.last).as_secs_f64() });
        self.last = now;
    }
}

/// Runs `exp` and writes everything into `out_dir`. Sweeps run their points
/// concurrently, one subdirectory each.
pub fn run_experiment(exp: &ExperimentFile, out_dir: &Path) -> Result<RunManifest, CliError> {
    match &exp.sweep {
        None => run_single(exp, out_dir),
        Some(sweep) => run_sweep(exp, &sweep.parameter, &sweep.values, out_dir),
    }
}

fn stage<T>(name: &str, r: crate::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Run(e.context(format!("stage '{name}'"))))
}

fn run_single(exp: &ExperimentFile, out_dir: &Path) -> Result<RunManifest, CliError> {
    let mut clock = Clock::new();
    let prepared = exp.prepare()?;
    let analysis = prepared.analysis;
    clock.lap("build");

    let run = stage("evolve", run_prepsy_detailed(&prepared.state, &prepared.config))?;
    clock.lap("prepare+evolve");
    let diffs = stage("difference", difference_signals(&run.signals))?;
    clock.lap("difference");
    let spectra = diffs.par_iter().map(|d| analysis.spectrum(d)).collect::<crate::Result<Vec<_>>>();
    let spectra = stage("transform", spectra)?;
    clock.lap("transform");

    let intensities: Vec<f64> = spectra.iter().map(total_intensity).collect();
    let null_result =
        diffs.iter().all(|d| d.max_abs() <= NULL_SIGNAL_TOL) && intensities.iter().all(|&f| f <= NULL_INTENSITY_TOL);
    let peaks = if null_result {
        vec![Vec::new(); spectra.len()]
    } else {
        stage(
            "detect",
            spectra.iter().map(|s| detect_peaks(s, analysis.peak_threshold)).collect::<crate::Result<Vec<_>>>(),
        )?
    };
    clock.lap("detect");

    let calibration = if exp.analysis.calibrate {
        let probe = parse_probe(&exp.analysis.probe)
            .map_err(|m| CliError::Config { path: PathBuf::from("<analysis>"), message: m })?;
        let beta = exp.analysis.calibration_beta.unwrap_or_default();
        let line = stage("calibrate", calibrate(&prepared.hamiltonian, &prepared.config, beta, probe, &analysis))?;
        let measured = stage("calibrate", measure_correlation(&line, intensities.iter().sum()))?;
        let actual = correlation_coefficient(&prepared.state, probe).ok().map(f64::abs);
        clock.lap("calibrate");
        Some(CalibrationReport {
            probe: exp.analysis.probe.clone(),
            beta,
            slope: line.slope,
            anchor: line.anchor,
            measured,
            actual,
        })
    } else {
        None
    };

    let mut w = Writer::new(out_dir)?;
    w.put("config.toml", exp.to_toml())?;
    w.put("initial_state.csv", output::matrix_csv(prepared.state.matrix()))?;
    for (k, s) in run.signals.iter().enumerate() {
        w.put(&format!("signal_{k}.csv"), output::signal_csv(s))?;
    }
    let mut differences = Vec::new();
    for (((&(i, j), d), spec), pk) in difference_pairs(run.signals.len()).iter().zip(&diffs).zip(&spectra).zip(&peaks) {
        let signal_file = w.put(&format!("difference_{i}_{j}.csv"), output::signal_csv(d))?;
        let spectrum_file = w.put(&format!("spectrum_{i}_{j}.csv"), output::spectrum_csv(spec))?;
        w.put(&format!("spectrum_{i}_{j}.pgm"), output::spectrum_pgm(spec))?;
        let peaks_file = w.put(&format!("peaks_{i}_{j}.csv"), output::peaks_csv(pk))?;
        differences.push(DifferenceSummary {
            pair: (i, j),
            label: d.label.clone(),
            signal_file,
            spectrum_file,
            peaks_file,
            max_abs: d.max_abs(),
            total_intensity: total_intensity(spec),
            peak_count: pk.len(),
            strongest_positive_peak: positive_quadrant(pk).first().copied(),
        });
    }
    clock.lap("write");

    let manifest = RunManifest {
        version: crate::VERSION.to_string(),
        experiment: serde_json::to_value(exp).expect("experiment serializes"),
        analysis,
        timings: clock.timings,
        files: Vec::new(),
        diagnostics: run.diagnostics,
        projections: prepared.config.projections.iter().map(|p| p.label().to_string()).collect(),
        probabilities: run.probabilities,
        differences,
        null_result,
        notes: if null_result { vec![NULL_NOTE.to_string()] } else { Vec::new() },
        warnings: prepared.warnings,
        calibration,
        sweep: None,
    };
    w.finish(manifest)
}

fn run_sweep(exp: &ExperimentFile, parameter: &str, values: &[f64], out_dir: &Path) -> Result<RunManifest, CliError> {
    let mut clock = Clock::new();
    let points: Vec<ExperimentFile> =
        values.iter().map(|&v| exp.with_parameter(parameter, v)).collect::<Result<_, _>>()?;
    for p in &points {
        p.prepare()?;
    }
    clock.lap("build");
    let width = values.len().saturating_sub(1).to_string().len().max(2);
    let results: Vec<Result<RunManifest, CliError>> = points
        .par_iter()
        .enumerate()
        .map(|(k, p)| run_single(p, &out_dir.join(format!("point_{k:0width$}"))))
        .collect();
    clock.lap("points");

    let probe = parse_probe(&exp.analysis.probe).unwrap_or((0, 0));
    let mut rows = Vec::new();
    let mut diagnostics = RunDiagnostics { min_eigenvalue: f64::INFINITY, ..Default::default() };
    let mut warnings = Vec::new();
    let mut w = Writer::new(out_dir)?;
    for (k, (r, p)) in results.into_iter().zip(&points).enumerate() {
        let m = r.map_err(|e| match e {
            CliError::Run(inner) => {
                CliError::Run(inner.context(format!("sweep point {k} ({parameter} = {})", values[k])))
            }
            other => other,
        })?;
        let dir = format!("point_{k:0width$}");
        for f in &m.files {
            w.files.push(format!("{dir}/{f}"));
        }
        w.files.push(format!("{dir}/{MANIFEST}"));
        diagnostics = RunDiagnostics {
            max_trace_drift: diagnostics.max_trace_drift.max(m.diagnostics.max_trace_drift),
            min_eigenvalue: diagnostics.min_eigenvalue.min(m.diagnostics.min_eigenvalue),
            max_imag_residue: diagnostics.max_imag_residue.max(m.diagnostics.max_imag_residue),
            max_picture_mismatch: diagnostics.max_picture_mismatch.max(m.diagnostics.max_picture_mismatch),
        };
        warnings.extend(m.warnings.iter().cloned());
        let correlation = match &p.state {
            StateSpec::Fano { .. } => p.prepare().ok().and_then(|pr| correlation_coefficient(&pr.state, probe).ok()),
            _ => None,
        };
        rows.push(SweepPoint {
            value: values[k],
            dir,
            intensity: m.differences.iter().map(|d| d.total_intensity).sum(),
            correlation,
        });
    }
    warnings.dedup();

    let (mut slope, mut max_residual, mut relative_residual) = (None, None, None);
    if rows.iter().all(|r| r.correlation.is_some()) {
        let xs: Vec<f64> = rows.iter().map(|r| r.correlation.unwrap_or_default().abs()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.intensity).collect();
        if let Ok((a, res)) = fit_through_origin(&xs, &ys) {
            let top = ys.iter().copied().fold(0.0, f64::max);
            slope = Some(a);
            max_residual = Some(res);
            relative_residual = (top > 0.0).then_some(res / top);
        }
    }
    let mut table = String::from("value,correlation,intensity\n");
    for r in &rows {
        let c = r.correlation.map(|c| format!("{c:.16e}")).unwrap_or_default();
        table.push_str(&format!("{:.16e},{c},{:.16e}\n", r.value, r.intensity));
    }
    w.put("sweep.csv", table)?;
    w.put("config.toml", exp.to_toml())?;
    clock.lap("write");

    let null_result = rows.iter().all(|r| r.intensity <= NULL_INTENSITY_TOL);
    let manifest = RunManifest {
        version: crate::VERSION.to_string(),
        experiment: serde_json::to_value(exp).expect("experiment serializes"),
        analysis: exp.analysis.analysis(),
        timings: clock.timings,
        files: Vec::new(),
        diagnostics,
        projections: Vec::new(),
        probabilities: Vec::new(),
        differences: Vec::new(),
        null_result,
        notes: if null_result { vec![NULL_NOTE.to_string()] } else { Vec::new() },
        warnings,
        calibration: None,
        sweep: Some(SweepReport {
            parameter: parameter.to_string(),
            points: rows,
            slope,
            max_residual,
            relative_residual,
        }),
    };
    w.finish(manifest)
}
