//! Re-checking a finished run from its files.

use std::fmt;
use std::path::Path;

use super::output::{read_grid, read_peaks};
use super::run::{RunManifest, NULL_INTENSITY_TOL, NULL_SIGNAL_TOL};
use super::CliError;
use crate::dynamics::EVOLUTION_TOL;
use crate::protocol::IMAG_TOL;
use crate::spectral::{detect_peaks, total_intensity};

/// Largest relative ℱ residual a sweep fit may have.
pub const LINEARITY_TOL: f64 = 0.01;
/// Largest relative calibration error.
pub const CALIBRATION_TOL: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn add(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, detail: detail.into() });
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.checks {
            writeln!(f, "{}  {:width$}  {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        write!(f, "{} checks, {failed} failed", self.checks.len())
    }
}

/// Re-checks the manifest in `dir` against the files next to it.
pub fn verify(dir: &Path) -> Result<VerifyReport, CliError> {
    let mut report = VerifyReport::default();
    verify_into(dir, "", &mut report)?;
    Ok(report)
}

fn verify_into(dir: &Path, prefix: &str, report: &mut VerifyReport) -> Result<(), CliError> {
    let m = RunManifest::read(dir)?;

    let missing: Vec<&String> = m.files.iter().filter(|f| !dir.join(f).is_file()).collect();
    report.add(
        format!("{prefix}files"),
        missing.is_empty(),
        if missing.is_empty() {
            format!("{} listed files present", m.files.len())
        } else {
            format!("missing: {missing:?}")
        },
    );

    let d = &m.diagnostics;
    report.add(
        format!("{prefix}trace drift"),
        d.max_trace_drift <= EVOLUTION_TOL,
        format!("{:.3e} (limit {EVOLUTION_TOL:.0e})", d.max_trace_drift),
    );
    report.add(
        format!("{prefix}min eigenvalue"),
        d.min_eigenvalue >= -EVOLUTION_TOL,
        format!("{:.3e} (limit -{EVOLUTION_TOL:.0e})", d.min_eigenvalue),
    );
    report.add(
        format!("{prefix}imaginary residue"),
        d.max_imag_residue <= IMAG_TOL,
        format!("{:.3e} (limit {IMAG_TOL:.0e})", d.max_imag_residue),
    );

    if let Some(sweep) = &m.sweep {
        for p in &sweep.points {
            verify_into(&dir.join(&p.dir), &format!("{}/", p.dir), report)?;
        }
        if let Some(rel) = sweep.relative_residual {
            report.add(
                format!("{prefix}linearity"),
                rel <= LINEARITY_TOL,
                format!("max residual {:.3e} of max ℱ (limit {LINEARITY_TOL})", rel),
            );
        }
        return Ok(());
    }

    let mut all_null = true;
    let mut complete = true;
    for s in &m.differences {
        let tag = format!("{prefix}{}", s.signal_file);
        let (i, j) = s.pair;
        let loaded = (|| -> Result<_, String> {
            let a = read_grid(&dir.join(format!("signal_{i}.csv")))?.to_signal("a")?;
            let b = read_grid(&dir.join(format!("signal_{j}.csv")))?.to_signal("b")?;
            let diff = read_grid(&dir.join(&s.signal_file))?.to_signal(&s.label)?;
            let spec = read_grid(&dir.join(&s.spectrum_file))?;
            let peaks = read_peaks(&dir.join(&s.peaks_file))?;
            Ok((a, b, diff, spec, peaks))
        })();
        let (a, b, diff, spec, peaks) = match loaded {
            Ok(v) => v,
            Err(e) => {
                report.add(tag, false, e);
                complete = false;
                continue;
            }
        };
        let gap = a
            .values()
            .iter()
            .zip(b.values())
            .zip(diff.values())
            .fold(0.0f64, |acc, ((x, y), d)| acc.max((x - y - d).abs()));
        report.add(format!("{tag} = signal_{i} - signal_{j}"), gap <= 1e-15, format!("max deviation {gap:.3e}"));

        match m.analysis.spectrum(&diff) {
            Ok(fresh) => {
                let scale = fresh.max().max(1e-300);
                let dev =
                    fresh.magnitudes().iter().zip(&spec.values).fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
                let shape = fresh.magnitudes().len() == spec.values.len();
                report.add(
                    format!("{prefix}{} matches transform", s.spectrum_file),
                    shape && dev <= 1e-9 * scale,
                    format!("relative deviation {:.3e}", dev / scale),
                );
                let f = total_intensity(&fresh);
                report.add(
                    format!("{prefix}{} intensity", s.spectrum_file),
                    (f - s.total_intensity).abs() <= 1e-9 * f.max(1e-300),
                    format!("ℱ = {f:.6e}"),
                );
                let null = diff.max_abs() <= NULL_SIGNAL_TOL && f <= NULL_INTENSITY_TOL;
                all_null &= null;
                if !null {
                    let want = detect_peaks(&fresh, m.analysis.peak_threshold).map(|p| p.len()).unwrap_or(usize::MAX);
                    report.add(
                        format!("{prefix}{} peaks", s.peaks_file),
                        want == peaks.len() && !peaks.is_empty(),
                        format!("{} peaks", peaks.len()),
                    );
                }
            }
            Err(e) => {
                report.add(format!("{prefix}{} matches transform", s.spectrum_file), false, e.to_string());
                complete = false;
            }
        }
    }
    // Without every difference loaded the flag cannot be judged.
    if complete {
        report.add(
            format!("{prefix}null-result flag"),
            m.null_result == all_null && m.null_result == m.notes.iter().any(|n| n == super::run::NULL_NOTE),
            if all_null { "no difference carries signal" } else { "correlation signal present" },
        );
    }

    if let Some(c) = &m.calibration {
        if let Some(actual) = c.actual {
            let rel = if actual > 0.0 { (c.measured - actual).abs() / actual } else { c.measured.abs() };
            report.add(
                format!("{prefix}calibration"),
                rel <= CALIBRATION_TOL,
                format!("measured |c| = {:.5}, actual {:.5} (relative error {:.2e})", c.measured, actual, rel),
            );
        }
    }
    Ok(())
}
