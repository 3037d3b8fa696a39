//! The prepare-probe pipeline.
//!
//! For every projection `|m⟩` the joint state is measured on the system,
//! the system is reset to a standard state (the environment keeps whatever
//! the outcome conditioned it to), and the pair evolves for `t₁`, receives a
//! pulse on the system, evolves for `t₂` and is read out as the population of
//! `|n⟩`. Differencing signals of different projections removes everything
//! that does not depend on the initial correlations.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{state_diagnostics, EvolutionSpec, Evolver, PulseSpec, EVOLUTION_TOL};
use crate::error::{Error, Result};
use crate::linalg::{
    embed, expm_herm_factor, kron, kron_vec, partial_trace, pauli, ComplexMatrix, HilbertStructure, C64, ONE, ZERO,
};
use crate::states::{require_bipartite, DensityMatrix};

/// Accepted deviation from unit norm for state vectors.
pub const NORM_TOL: f64 = 1e-12;

/// Accepted imaginary part of a recorded population.
pub const IMAG_TOL: f64 = 1e-10;

/// Smallest outcome probability a projection may have.
pub const MIN_PROBABILITY: f64 = 1e-12;

/// Named eigenstates of the Pauli operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
    PlusZ,
    MinusZ,
}

impl Axis {
    pub fn ket(self) -> Vec<C64> {
        let (axis, positive) = match self {
            Axis::PlusX => (0, true),
            Axis::MinusX => (0, false),
            Axis::PlusY => (1, true),
            Axis::MinusY => (1, false),
            Axis::PlusZ => (2, true),
            Axis::MinusZ => (2, false),
        };
        pauli::eigenstate(axis, positive)
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::PlusX => "+x",
            Axis::MinusX => "-x",
            Axis::PlusY => "+y",
            Axis::MinusY => "-y",
            Axis::PlusZ => "+z",
            Axis::MinusZ => "-z",
        }
    }
}

impl FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "+x" | "x" => Axis::PlusX,
            "-x" => Axis::MinusX,
            "+y" | "y" => Axis::PlusY,
            "-y" => Axis::MinusY,
            "+z" | "z" | "0" => Axis::PlusZ,
            "-z" | "1" => Axis::MinusZ,
            other => {
                return Err(Error::InvalidParameters(format!(
                    "unknown axis '{other}' (expected one of +x, -x, +y, -y, +z, -z)"
                )))
            }
        })
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A normalized pure state of the system, with a display label.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<C64>,
    label: String,
}

impl StateVector {
    /// Requires unit norm to [`NORM_TOL`].
    pub fn new(amplitudes: Vec<C64>, label: impl Into<String>) -> Result<Self> {
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if amplitudes.is_empty() || (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidParameters(format!("state vector has norm {norm}, expected 1")));
        }
        Ok(Self { amplitudes, label: label.into() })
    }

    /// Rescales to unit norm first.
    pub fn normalized(amplitudes: Vec<C64>, label: impl Into<String>) -> Result<Self> {
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidParameters("state vector has zero norm".into()));
        }
        Self::new(amplitudes.iter().map(|z| z / norm).collect(), label)
    }

    pub fn axis(axis: Axis) -> Self {
        Self { amplitudes: axis.ket(), label: axis.name().to_string() }
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn projector(&self) -> ComplexMatrix {
        ComplexMatrix::projector(&self.amplitudes)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }
}

/// `count` samples at `0, spacing, 2·spacing, …`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub count: usize,
    pub spacing: f64,
}

impl TimeGrid {
    pub fn new(count: usize, spacing: f64) -> Result<Self> {
        let grid = Self { count, spacing };
        grid.validate()?;
        Ok(grid)
    }

    /// Spacing chosen so the largest eigen-gap of `hamiltonian` (ordinary
    /// frequency units) sits at 80% of the Nyquist frequency.
    pub fn resolving(hamiltonian: &ComplexMatrix, count: usize) -> Result<Self> {
        let vals = crate::linalg::herm_eigvals(hamiltonian)?;
        let gap = vals.last().copied().unwrap_or(0.0) - vals.first().copied().unwrap_or(0.0);
        let spacing = if gap > 0.0 { 0.4 / gap } else { 1.0 };
        Self::new(count, spacing)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidParameters("time grid needs at least one sample".into()));
        }
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return Err(Error::InvalidParameters(format!("grid spacing must be positive, got {}", self.spacing)));
        }
        Ok(())
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |k| k as f64 * self.spacing)
    }
}

/// Everything the pipeline needs besides the initial state.
#[derive(Clone, Debug)]
pub struct PrepsyConfig {
    /// System states the first measurement projects onto.
    pub projections: Vec<StateVector>,
    /// State the system is reset to after the measurement.
    pub standard_state: StateVector,
    /// Pulse applied to the system between the two delays.
    pub pulse: PulseSpec,
    /// System state whose population is recorded.
    pub observable: StateVector,
    pub t1: TimeGrid,
    pub t2: TimeGrid,
    pub evolution: EvolutionSpec,
}

impl PrepsyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.projections.len() < 2 {
            return Err(Error::InvalidParameters(format!(
                "need at least 2 projections to difference, got {}",
                self.projections.len()
            )));
        }
        let d = self.standard_state.dim();
        for v in self.projections.iter().chain([&self.observable]) {
            if v.dim() != d {
                return Err(Error::Dimension(format!(
                    "state '{}' has dimension {} but the standard state has dimension {d}",
                    v.label(),
                    v.dim()
                )));
            }
        }
        if self.pulse.generator.rows() != d {
            return Err(Error::Dimension(format!(
                "pulse generator has dimension {} but the system has dimension {d}",
                self.pulse.generator.rows()
            )));
        }
        self.t1.validate()?;
        self.t2.validate()?;
        self.evolution.validate()?;
        if !self.evolution.dim().is_multiple_of(d) {
            return Err(Error::Dimension(format!(
                "generator dimension {} is not a multiple of the system dimension {d}",
                self.evolution.dim()
            )));
        }
        Ok(())
    }

    fn check_state(&self, r: &DensityMatrix) -> Result<()> {
        require_bipartite(r.structure())?;
        let d = r.structure().dims()[0];
        if d != self.standard_state.dim() || r.dim() != self.evolution.dim() {
            return Err(Error::Dimension(format!(
                "state structure {:?} does not match a system of dimension {} and generator of dimension {}",
                r.structure().dims(),
                self.standard_state.dim(),
                self.evolution.dim()
            )));
        }
        Ok(())
    }
}

/// Real time-domain signal `N(t₁, t₂)`, row-major with `t₁` along rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Signal2D {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
    pub t1_spacing: f64,
    pub t2_spacing: f64,
    pub label: String,
}

impl Signal2D {
    pub fn new(
        values: Vec<f64>,
        rows: usize,
        cols: usize,
        t1_spacing: f64,
        t2_spacing: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} signal needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameters(format!("signal contains a non-finite value {bad}")));
        }
        Ok(Self { values, rows, cols, t1_spacing, t2_spacing, label: label.into() })
    }

    /// Samples `f(t₁, t₂)` on the two grids.
    pub fn from_fn(t1: TimeGrid, t2: TimeGrid, label: impl Into<String>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = t1.times().flat_map(|a| t2.times().map(move |b| (a, b))).map(|(a, b)| f(a, b)).collect();
        Self::new(values, t1.count, t2.count, t1.spacing, t2.spacing, label)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self { values: self.values.iter().map(|v| v * alpha).collect(), ..self.clone() }
    }

    /// Max-abs difference to a congruent signal.
    pub fn max_abs_diff(&self, other: &Signal2D) -> Result<f64> {
        check_congruent(self, other)?;
        Ok(self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn t1_times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |k| k as f64 * self.t1_spacing)
    }

    pub fn t2_times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.cols).map(move |k| k as f64 * self.t2_spacing)
    }
}

fn check_congruent(a: &Signal2D, b: &Signal2D) -> Result<()> {
    let same_spacing = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs());
    if a.rows != b.rows
        || a.cols != b.cols
        || !same_spacing(a.t1_spacing, b.t1_spacing)
        || !same_spacing(a.t2_spacing, b.t2_spacing)
    {
        return Err(Error::GridMismatch(format!(
            "'{}' is {}x{} (spacings {}, {}), '{}' is {}x{} (spacings {}, {})",
            a.label, a.rows, a.cols, a.t1_spacing, a.t2_spacing, b.label, b.rows, b.cols, b.t1_spacing, b.t2_spacing
        )));
    }
    Ok(())
}

/// Environment state `Tr_s[(|m⟩⟨m|⊗I) R (|m⟩⟨m|⊗I)]` before normalization.
fn conditioned_environment(r: &DensityMatrix, m: &StateVector) -> Result<ComplexMatrix> {
    require_bipartite(r.structure())?;
    let dims = r.structure().dims();
    if m.dim() != dims[0] {
        return Err(Error::Dimension(format!("projection has dimension {}, system has {}", m.dim(), dims[0])));
    }
    let proj = kron(&m.projector(), &ComplexMatrix::identity(dims[1]));
    let branch = &(&proj * r.matrix()) * &proj;
    partial_trace(&branch, r.structure(), &[1])
}

/// Measures the system on `|m⟩` and resets it to `standard`.
///
/// Returns `|standard⟩⟨standard| ⊗ σ⁽ᵐ⁾` with the normalized conditioned
/// environment `σ⁽ᵐ⁾`, and the outcome probability.
pub fn conditional_prepare(r: &DensityMatrix, m: &StateVector, standard: &StateVector) -> Result<(DensityMatrix, f64)> {
    if standard.dim() != m.dim() {
        return Err(Error::Dimension(format!(
            "standard state has dimension {}, projection {}",
            standard.dim(),
            m.dim()
        )));
    }
    let env = conditioned_environment(r, m)?;
    let p = env.trace().re;
    if !(p > MIN_PROBABILITY) {
        return Err(Error::BranchImpossible { probability: p });
    }
    let mut sigma = env.scale_real(1.0 / p);
    sigma.symmetrize_in_place();
    let joint = kron(&standard.projector(), &sigma);
    Ok((DensityMatrix::new(joint, r.structure().clone())?, p))
}

/// Numerical health of a pipeline run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    /// Largest `|Tr ρ − 1|` over the sampled states.
    pub max_trace_drift: f64,
    /// Smallest eigenvalue over the sampled states.
    pub min_eigenvalue: f64,
    /// Largest imaginary part of a recorded population.
    pub max_imag_residue: f64,
    /// Largest gap between the recorded signal and a direct forward
    /// propagation of the last `t₁` row.
    pub max_picture_mismatch: f64,
}

impl RunDiagnostics {
    fn merge(self, o: RunDiagnostics) -> RunDiagnostics {
        RunDiagnostics {
            max_trace_drift: self.max_trace_drift.max(o.max_trace_drift),
            min_eigenvalue: self.min_eigenvalue.min(o.min_eigenvalue),
            max_imag_residue: self.max_imag_residue.max(o.max_imag_residue),
            max_picture_mismatch: self.max_picture_mismatch.max(o.max_picture_mismatch),
        }
    }

    fn check(&self, context: &str) -> Result<()> {
        if !(self.max_trace_drift <= EVOLUTION_TOL && self.min_eigenvalue >= -EVOLUTION_TOL) {
            return Err(Error::Numerical { trace_drift: self.max_trace_drift, min_eigenvalue: self.min_eigenvalue }
                .context(context));
        }
        if !(self.max_imag_residue <= IMAG_TOL) {
            return Err(Error::ImaginarySignal { residue: self.max_imag_residue }.context(context));
        }
        Ok(())
    }
}

/// Output of [`run_prepsy_detailed`].
#[derive(Clone, Debug)]
pub struct PrepsyRun {
    /// One signal per projection, in configuration order.
    pub signals: Vec<Signal2D>,
    /// Outcome probability of each projection.
    pub probabilities: Vec<f64>,
    pub diagnostics: RunDiagnostics,
}

/// Runs the pipeline and returns one signal per projection.
pub fn run_prepsy(r: &DensityMatrix, config: &PrepsyConfig) -> Result<Vec<Signal2D>> {
    Ok(run_prepsy_detailed(r, config)?.signals)
}

/// Runs the pipeline, keeping probabilities and diagnostics.
///
/// `N(t₁, t₂)` is evaluated as `Tr[O(t₂) · P ρ(t₁) P†]`: states are
/// propagated along `t₁` once per projection and the readout operator
/// `O = |n⟩⟨n| ⊗ I` is propagated backwards along `t₂` once for all of them
/// with the dual map. Both chains use the same fixed-step maps, so this is
/// the same number as forward propagation through every `(t₁, t₂)` cell.
/// The last `t₁` row is additionally propagated forward to monitor trace,
/// positivity and agreement of the two pictures.
pub fn run_prepsy_detailed(r: &DensityMatrix, config: &PrepsyConfig) -> Result<PrepsyRun> {
    config.validate()?;
    config.check_state(r)?;
    let structure = r.structure().clone();
    let env_dim = structure.dims()[1];

    let evolver = Evolver::new(&config.evolution)?;
    let step1 = evolver.interval(config.t1.spacing, false)?;
    let step2 = evolver.interval(config.t2.spacing, false)?;
    let pulse = embed(&config.pulse.unitary()?, &structure, 0)?;
    let pulse_dag = pulse.dagger();

    let readout = kron(&config.observable.projector(), &ComplexMatrix::identity(env_dim));
    let mut observables = Vec::with_capacity(config.t2.count);
    observables.push(readout.clone());
    for _ in 1..config.t2.count {
        let next = step2.apply_adjoint(observables.last().expect("non-empty"));
        observables.push(next);
    }

    let per_projection: Vec<Result<(Signal2D, f64, RunDiagnostics)>> = config
        .projections
        .par_iter()
        .enumerate()
        .map(|(k, m)| {
            let context = format!("projection {k} ({})", m.label());
            let (prepared, p) = conditional_prepare(r, m, &config.standard_state).map_err(|e| e.context(&context))?;

            let mut diag = RunDiagnostics { min_eigenvalue: f64::INFINITY, ..Default::default() };
            let mut rows = Vec::with_capacity(config.t1.count);
            let mut rho = prepared.into_matrix();
            for i in 0..config.t1.count {
                if i > 0 {
                    rho = step1.apply(&rho);
                }
                let (drift, min) = state_diagnostics(&rho);
                diag.max_trace_drift = diag.max_trace_drift.max(drift);
                diag.min_eigenvalue = diag.min_eigenvalue.min(min);
                let mut pulsed = &(&pulse * &rho) * &pulse_dag;
                pulsed.symmetrize_in_place();
                rows.push(pulsed);
            }
            diag.check(&format!("{context}, t1 = {}", (config.t1.count - 1) as f64 * config.t1.spacing))?;

            let entries: Vec<(Vec<f64>, f64)> = rows
                .par_iter()
                .map(|row| {
                    let mut vals = Vec::with_capacity(observables.len());
                    let mut imag = 0.0f64;
                    for o in &observables {
                        let z = o.trace_product(row);
                        imag = imag.max(z.im.abs());
                        vals.push(z.re);
                    }
                    (vals, imag)
                })
                .collect();
            let mut values = Vec::with_capacity(config.t1.count * config.t2.count);
            for (vals, imag) in &entries {
                values.extend_from_slice(vals);
                diag.max_imag_residue = diag.max_imag_residue.max(*imag);
            }

            // Forward check along the last row.
            let last = config.t1.count - 1;
            let mut state = rows[last].clone();
            for j in 0..config.t2.count {
                if j > 0 {
                    state = step2.apply(&state);
                }
                let (drift, min) = state_diagnostics(&state);
                diag.max_trace_drift = diag.max_trace_drift.max(drift);
                diag.min_eigenvalue = diag.min_eigenvalue.min(min);
                let direct = readout.trace_product(&state).re;
                diag.max_picture_mismatch =
                    diag.max_picture_mismatch.max((direct - values[last * config.t2.count + j]).abs());
            }
            diag.check(&context)?;

            let signal = Signal2D::new(
                values,
                config.t1.count,
                config.t2.count,
                config.t1.spacing,
                config.t2.spacing,
                format!("m={}", m.label()),
            )?;
            Ok((signal, p, diag))
        })
        .collect();

    let mut signals = Vec::new();
    let mut probabilities = Vec::new();
    let mut diagnostics = RunDiagnostics { min_eigenvalue: f64::INFINITY, ..Default::default() };
    for item in per_projection {
        let (s, p, d) = item?;
        signals.push(s);
        probabilities.push(p);
        diagnostics = diagnostics.merge(d);
    }
    Ok(PrepsyRun { signals, probabilities, diagnostics })
}

/// All pairwise differences `signal_i − signal_j`, `i < j`, in
/// lexicographic order.
pub fn difference_signals(signals: &[Signal2D]) -> Result<Vec<Signal2D>> {
    if signals.len() < 2 {
        return Err(Error::InvalidParameters(format!("need at least 2 signals, got {}", signals.len())));
    }
    let mut out = Vec::with_capacity(signals.len() * (signals.len() - 1) / 2);
    for i in 0..signals.len() {
        for j in i + 1..signals.len() {
            let (a, b) = (&signals[i], &signals[j]);
            check_congruent(a, b)?;
            let values = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
            out.push(Signal2D { values, label: format!("({}) - ({})", a.label, b.label), ..a.clone() });
        }
    }
    Ok(out)
}

/// Index pairs `(i, j)` in the order [`difference_signals`] emits them.
pub fn difference_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

/// Part of the correlation matrix that survives a projection on `|m⟩`:
/// `Tr_s[(|m⟩⟨m| ⊗ I) χ] = Σ χ_{(i_s,i_e),(j_s,j_e)} ⟨j_s|m⟩⟨m|i_s⟩ |i_e⟩⟨j_e|`.
pub fn retained_correlation(
    chi: &ComplexMatrix,
    m: &StateVector,
    structure: &HilbertStructure,
) -> Result<ComplexMatrix> {
    require_bipartite(structure)?;
    structure.check_matrix(chi)?;
    let (ds, de) = (structure.dims()[0], structure.dims()[1]);
    if m.dim() != ds {
        return Err(Error::Dimension(format!("projection has dimension {}, system has {ds}", m.dim())));
    }
    let scale = chi.max_abs().max(1.0);
    for keep in [0, 1] {
        let marginal = partial_trace(chi, structure, &[keep])?;
        if marginal.max_abs() > 1e-10 * scale {
            return Err(Error::InvalidParameters(format!(
                "not a correlation matrix: its partial trace keeping subsystem {keep} has entries up to {:.3e}",
                marginal.max_abs()
            )));
        }
    }
    Ok(retained_raw(chi, m.amplitudes(), ds, de))
}

fn retained_raw(chi: &ComplexMatrix, m: &[C64], ds: usize, de: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(de, de);
    for is in 0..ds {
        for js in 0..ds {
            // ⟨j_s|m⟩⟨m|i_s⟩
            let w = m[js] * m[is].conj();
            if w == ZERO {
                continue;
            }
            for ie in 0..de {
                for je in 0..de {
                    out[(ie, je)] += chi[(is * de + ie, js * de + je)] * w;
                }
            }
        }
    }
    out
}

/// One entry `χ_{(i_s, i_e), (j_s, j_e)}` of the correlation matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChiElement {
    pub i_s: usize,
    pub j_s: usize,
    pub i_e: usize,
    pub j_e: usize,
}

impl ChiElement {
    pub fn new(i_s: usize, j_s: usize, i_e: usize, j_e: usize) -> Self {
        Self { i_s, j_s, i_e, j_e }
    }

    /// Row and column of the element in the joint matrix.
    pub fn index(&self, env_dim: usize) -> (usize, usize) {
        (self.i_s * env_dim + self.i_e, self.j_s * env_dim + self.j_e)
    }

    pub fn is_diagonal(&self) -> bool {
        self.i_s == self.j_s && self.i_e == self.j_e
    }

    /// `E + E†` for the basis element `E`, or `E` itself on the diagonal.
    pub fn hermitian_direction(&self, ds: usize, de: usize) -> ComplexMatrix {
        let n = ds * de;
        let (a, b) = self.index(de);
        let mut m = ComplexMatrix::zeros(n, n);
        m[(a, b)] += ONE;
        if a != b {
            m[(b, a)] += ONE;
        }
        m
    }
}

fn closed_protocol_unitary(
    config: &PrepsyConfig,
    structure: &HilbertStructure,
    t1: f64,
    t2: f64,
) -> Result<ComplexMatrix> {
    if !config.evolution.is_closed() {
        return Err(Error::Unsupported(
            "the signal derivative is defined for closed (unitary) evolution only; remove the dissipators".into(),
        ));
    }
    if !(t1 >= 0.0 && t2 >= 0.0) {
        return Err(Error::InvalidParameters(format!("delays must be >= 0, got t1 = {t1}, t2 = {t2}")));
    }
    let h = &config.evolution.hamiltonian;
    let u1 = expm_herm_factor(h, C64::new(0.0, -t1))?;
    let u2 = expm_herm_factor(h, C64::new(0.0, -t2))?;
    let pulse = embed(&config.pulse.unitary()?, structure, 0)?;
    Ok(&(&u2 * &pulse) * &u1)
}

fn derivative_setup(
    config: &PrepsyConfig,
    projection: usize,
    element: ChiElement,
) -> Result<(&StateVector, HilbertStructure)> {
    config.validate()?;
    let m = config
        .projections
        .get(projection)
        .ok_or_else(|| Error::InvalidParameters(format!("no projection with index {projection}")))?;
    let ds = config.standard_state.dim();
    let de = config.evolution.dim() / ds;
    if element.i_s >= ds || element.j_s >= ds || element.i_e >= de || element.j_e >= de {
        return Err(Error::Dimension(format!("element {element:?} is outside a {ds}x{de} system-environment space")));
    }
    Ok((m, HilbertStructure::bipartite(ds, de)))
}

/// Sensitivity of the signal to one correlation element in the
/// unnormalized convention: `⟨j_s|m⟩⟨m|i_s⟩ · Tr[(|n⟩⟨n|⊗I) 𝒰 |s, i_e⟩⟨s, j_e| 𝒰†]`,
/// with `𝒰 = e^{−iHt₂} P e^{−iHt₁}` and `|s⟩` the standard state.
///
/// It vanishes whenever the projection is orthogonal to `|i_s⟩` or `|j_s⟩`,
/// and whenever `|s, i_e⟩⟨s, j_e|` cannot move population into `|n⟩`.
pub fn signal_chi_kernel(
    config: &PrepsyConfig,
    projection: usize,
    element: ChiElement,
    t1: f64,
    t2: f64,
) -> Result<C64> {
    let (m, structure) = derivative_setup(config, projection, element)?;
    let de = structure.dims()[1];
    let u = closed_protocol_unitary(config, &structure, t1, t2)?;
    let weight = m.amplitudes()[element.j_s] * m.amplitudes()[element.i_s].conj();
    let basis = |k: usize| {
        let mut e = vec![ZERO; de];
        e[k] = ONE;
        kron_vec(config.standard_state.amplitudes(), &e)
    };
    let psi_i = u.apply(&basis(element.i_e));
    let psi_j = u.apply(&basis(element.j_e));
    let n = config.observable.amplitudes();
    // ⟨ψ_j| (|n⟩⟨n| ⊗ I) |ψ_i⟩
    let mut overlap = ZERO;
    for e in 0..de {
        let a: C64 = n.iter().enumerate().map(|(k, nk)| nk.conj() * psi_i[k * de + e]).sum();
        let b: C64 = n.iter().enumerate().map(|(k, nk)| nk.conj() * psi_j[k * de + e]).sum();
        overlap += b.conj() * a;
    }
    Ok(weight * overlap)
}

/// Derivative of the recorded signal `N_m(t₁, t₂)` with respect to the
/// real part of one correlation element of `r`, moving the element and its
/// Hermitian partner together.
///
/// The pipeline normalizes the conditioned environment by the outcome
/// probability `p`, so the result is
/// `(K − N·δp)/p` with `K` the kernel of [`signal_chi_kernel`] (plus its
/// conjugate partner) and `δp` the change of `p` along the same direction.
/// Only closed evolution is supported.
pub fn signal_chi_derivative(
    r: &DensityMatrix,
    config: &PrepsyConfig,
    projection: usize,
    element: ChiElement,
    t1: f64,
    t2: f64,
) -> Result<f64> {
    let (m, structure) = derivative_setup(config, projection, element)?;
    config.check_state(r)?;
    let kernel = signal_chi_kernel(config, projection, element, t1, t2)?;
    let weight = m.amplitudes()[element.j_s] * m.amplitudes()[element.i_s].conj();
    let dp = if element.i_e == element.j_e { weight } else { ZERO };

    let (prepared, p) = conditional_prepare(r, m, &config.standard_state)?;
    let u = closed_protocol_unitary(config, &structure, t1, t2)?;
    let evolved = &(&u * prepared.matrix()) * &u.dagger();
    let readout = kron(&config.observable.projector(), &ComplexMatrix::identity(structure.dims()[1]));
    let signal = readout.trace_product(&evolved).re;

    let (dk, dp) = if element.is_diagonal() { (kernel.re, dp.re) } else { (2.0 * kernel.re, 2.0 * dp.re) };
    Ok((dk - signal * dp) / p)
}
