//! File formats written by a run.
//!
//! Grids (signals and spectra) are CSV with the second axis in the header
//! row and the first axis in the first column. Numbers are written with 17
//! significant digits so they read back bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::linalg::{ComplexMatrix, C64};
use crate::protocol::Signal2D;
use crate::spectral::{Peak, Spectrum2D};

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn grid_csv(corner: &str, rows: &[f64], cols: &[f64], value: impl Fn(usize, usize) -> f64) -> String {
    let mut s = String::with_capacity((rows.len() + 1) * (cols.len() + 1) * 24);
    s.push_str(corner);
    for c in cols {
        s.push(',');
        s.push_str(&num(*c));
    }
    s.push('\n');
    for (i, r) in rows.iter().enumerate() {
        s.push_str(&num(*r));
        for j in 0..cols.len() {
            s.push(',');
            s.push_str(&num(value(i, j)));
        }
        s.push('\n');
    }
    s
}

pub fn signal_csv(signal: &Signal2D) -> String {
    let t1: Vec<f64> = signal.t1_times().collect();
    let t2: Vec<f64> = signal.t2_times().collect();
    grid_csv("t1\\t2", &t1, &t2, |i, j| signal.get(i, j))
}

pub fn spectrum_csv(spec: &Spectrum2D) -> String {
    grid_csv("f1\\f2", spec.f1_axis(), spec.f2_axis(), |i, j| spec.get(i, j))
}

pub fn peaks_csv(peaks: &[Peak]) -> String {
    let mut s = String::from("f1,f2,magnitude\n");
    for p in peaks {
        let _ = writeln!(s, "{},{},{}", num(p.f1), num(p.f2), num(p.magnitude));
    }
    s
}

/// One line per matrix entry: `row,col,re,im`.
pub fn matrix_csv(m: &ComplexMatrix) -> String {
    let mut s = String::from("row,col,re,im\n");
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let z = m[(i, j)];
            let _ = writeln!(s, "{i},{j},{},{}", num(z.re), num(z.im));
        }
    }
    s
}

/// 8-bit binary PGM, linear in magnitude and scaled to the maximum. Rows
/// run from the highest `f1` at the top to the lowest at the bottom.
pub fn spectrum_pgm(spec: &Spectrum2D) -> Vec<u8> {
    let (r, c) = (spec.rows(), spec.cols());
    let max = spec.max();
    let mut out = format!("P5\n{c} {r}\n255\n").into_bytes();
    for i in (0..r).rev() {
        for j in 0..c {
            let level = if max > 0.0 { (spec.get(i, j) / max * 255.0).round() } else { 0.0 };
            out.push(level.clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// A grid read back from CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
    pub values: Vec<f64>,
}

fn parse_f64(s: &str, line: usize) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("line {line}: '{}' is not a number", s.trim()))
}

pub fn read_grid(path: &Path) -> Result<Grid, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| format!("{}: empty file", path.display()))?;
    let cols = header.split(',').skip(1).map(|s| parse_f64(s, 1)).collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for (k, line) in lines.enumerate() {
        let mut fields = line.split(',');
        rows.push(parse_f64(fields.next().unwrap_or(""), k + 2)?);
        let before = values.len();
        for f in fields {
            values.push(parse_f64(f, k + 2)?);
        }
        if values.len() - before != cols.len() {
            return Err(format!(
                "{}: line {} has {} values, expected {}",
                path.display(),
                k + 2,
                values.len() - before,
                cols.len()
            ));
        }
    }
    Ok(Grid { rows, cols, values })
}

impl Grid {
    /// Interprets the grid as a signal on uniform delays.
    pub fn to_signal(&self, label: &str) -> Result<Signal2D, String> {
        let spacing = |a: &[f64]| if a.len() > 1 { a[1] - a[0] } else { 1.0 };
        Signal2D::new(
            self.values.clone(),
            self.rows.len(),
            self.cols.len(),
            spacing(&self.rows),
            spacing(&self.cols),
            label,
        )
        .map_err(|e| e.to_string())
    }
}

pub fn read_peaks(path: &Path) -> Result<Vec<Peak>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 3 {
                return Err(format!("{}: line {} needs f1,f2,magnitude", path.display(), k + 1));
            }
            Ok(Peak { f1: parse_f64(f[0], k + 1)?, f2: parse_f64(f[1], k + 1)?, magnitude: parse_f64(f[2], k + 1)? })
        })
        .collect()
}

/// Reads a `row,col,re,im` file into a `dim × dim` matrix. Entries not
/// listed are zero.
pub fn read_matrix_csv(path: &Path, dim: usize) -> Result<ComplexMatrix, String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut m = ComplexMatrix::zeros(dim, dim);
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (k == 0 && line.starts_with("row")) {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(format!("line {}: expected row,col,re,im", k + 1));
        }
        let idx =
            |s: &str| s.trim().parse::<usize>().map_err(|_| format!("line {}: '{}' is not an index", k + 1, s.trim()));
        let (i, j) = (idx(f[0])?, idx(f[1])?);
        if i >= dim || j >= dim {
            return Err(format!("line {}: entry ({i}, {j}) is outside a {dim}x{dim} matrix", k + 1));
        }
        m[(i, j)] = C64::new(parse_f64(f[2], k + 1)?, parse_f64(f[3], k + 1)?);
    }
    Ok(m)
}
