//! Time evolution under the Lindblad master equation
//!
//! `dρ/dt = −i[H, ρ] + Σ_k γ_k (2 L_k ρ L_k† − {L_k† L_k, ρ})`
//!
//! Dissipators carry a factor 2 and no ½, so a channel of rate `γ` drains
//! population at rate `2γ`. Closed systems are propagated exactly through the
//! eigendecomposition of `H`; open systems use classical fourth-order
//! Runge-Kutta with a fixed step.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::linalg::{embed, expm_herm_factor, ComplexMatrix, HermEig, C64, HERMITIAN_TOL, I, ONE, ZERO};
use crate::models::DissipatorChannel;
use crate::states::DensityMatrix;

/// Largest accepted `dt · ‖H‖_max`.
pub const STABILITY_LIMIT: f64 = 0.1;

/// Default number of integrator steps per sampling interval.
pub const STEPS_PER_SAMPLE: usize = 20;

/// Accepted trace drift and negativity after an evolution.
pub const EVOLUTION_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Classical fourth-order Runge-Kutta.
    #[default]
    Rk4,
}

/// Generator of the dynamics and the integrator settings.
#[derive(Clone, Debug)]
pub struct EvolutionSpec {
    /// Angular-frequency Hamiltonian, the `H` in `−i[H, ρ]`.
    pub hamiltonian: ComplexMatrix,
    pub channels: Vec<DissipatorChannel>,
    pub dt: f64,
    pub method: Method,
}

impl EvolutionSpec {
    /// `hamiltonian` is used as given, in angular units.
    pub fn new(hamiltonian: ComplexMatrix, channels: Vec<DissipatorChannel>, dt: f64) -> Result<Self> {
        let spec = Self { hamiltonian, channels, dt, method: Method::Rk4 };
        spec.validate()?;
        Ok(spec)
    }

    /// Takes a Hamiltonian in ordinary-frequency units and scales it by 2π.
    pub fn from_frequency_hamiltonian(
        hamiltonian: &ComplexMatrix,
        channels: Vec<DissipatorChannel>,
        dt: f64,
    ) -> Result<Self> {
        Self::new(hamiltonian.scale_real(TAU), channels, dt)
    }

    /// Picks `dt` for sampling intervals of length `spacing`:
    /// `spacing / 20`, subdivided further until the stability guard holds.
    pub fn for_sampling(hamiltonian: &ComplexMatrix, channels: Vec<DissipatorChannel>, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidParameters(format!("sampling interval must be positive, got {spacing}")));
        }
        let norm = TAU * hamiltonian.max_abs();
        let mut steps = STEPS_PER_SAMPLE;
        let needed = (spacing * norm / STABILITY_LIMIT).ceil() as usize;
        if needed > steps {
            steps = needed;
        }
        Self::from_frequency_hamiltonian(hamiltonian, channels, spacing / steps as f64)
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.rows()
    }

    /// True when there are no active dissipators.
    pub fn is_closed(&self) -> bool {
        self.channels.iter().all(|c| c.rate == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.hamiltonian.require_square("Hamiltonian")?;
        let herm = self.hamiltonian.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation: herm });
        }
        for (k, c) in self.channels.iter().enumerate() {
            if c.operator.rows() != n || c.operator.cols() != n {
                return Err(Error::Dimension(format!(
                    "channel {k} acts on dimension {} but the Hamiltonian has dimension {n}",
                    c.operator.rows()
                )));
            }
            if !(c.rate >= 0.0) {
                return Err(Error::InvalidParameters(format!("channel {k} has negative rate {}", c.rate)));
            }
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameters(format!("time step must be positive, got {}", self.dt)));
        }
        let product = self.dt * self.hamiltonian.max_abs();
        if product > STABILITY_LIMIT * (1.0 + 1e-12) {
            return Err(Error::InvalidParameters(format!(
                "dt·‖H‖_max = {product:.4} exceeds the stability limit {STABILITY_LIMIT}; reduce dt"
            )));
        }
        Ok(())
    }
}

/// Sparse operator as `(row, col, value)` triplets.
#[derive(Clone, Debug)]
struct SparseOp {
    entries: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    fn from_dense(m: &ComplexMatrix) -> Self {
        let n = m.cols();
        let entries =
            m.as_slice().iter().enumerate().filter(|(_, z)| **z != ZERO).map(|(k, &z)| (k / n, k % n, z)).collect();
        Self { entries }
    }

    /// `out += s · A X`
    fn left_mul_acc(&self, x: &[C64], out: &mut [C64], n: usize, s: C64) {
        for &(i, k, a) in &self.entries {
            let f = s * a;
            let src = &x[k * n..(k + 1) * n];
            let dst = &mut out[i * n..(i + 1) * n];
            for (o, v) in dst.iter_mut().zip(src) {
                *o += f * v;
            }
        }
    }

    /// `out += s · X A`
    fn right_mul_acc(&self, x: &[C64], out: &mut [C64], n: usize, s: C64) {
        for &(k, j, a) in &self.entries {
            let f = s * a;
            for r in 0..n {
                out[r * n + j] += f * x[r * n + k];
            }
        }
    }

    fn dagger(&self) -> Self {
        Self { entries: self.entries.iter().map(|&(i, j, z)| (j, i, z.conj())).collect() }
    }
}

#[derive(Clone, Debug)]
struct CompiledChannel {
    jump: SparseOp,
    jump_dag: SparseOp,
    decay: SparseOp,
    rate: f64,
}

/// The Lindblad generator precompiled into sparse form.
#[derive(Clone, Debug)]
struct Generator {
    n: usize,
    hamiltonian: SparseOp,
    channels: Vec<CompiledChannel>,
}

impl Generator {
    fn new(spec: &EvolutionSpec) -> Self {
        let channels = spec
            .channels
            .iter()
            .filter(|c| c.rate > 0.0)
            .map(|c| {
                let decay = &c.operator.dagger() * &c.operator;
                let jump = SparseOp::from_dense(&c.operator);
                CompiledChannel { jump_dag: jump.dagger(), jump, decay: SparseOp::from_dense(&decay), rate: c.rate }
            })
            .collect();
        Self { n: spec.dim(), hamiltonian: SparseOp::from_dense(&spec.hamiltonian), channels }
    }

    /// Writes the generator applied to `rho` into `out`. With `adjoint`
    /// set, applies the dual generator that evolves observables instead.
    fn apply(&self, rho: &[C64], out: &mut [C64], scratch: &mut [C64], adjoint: bool) {
        let n = self.n;
        out.fill(ZERO);
        let coherent = if adjoint { I } else { -I };
        self.hamiltonian.left_mul_acc(rho, out, n, coherent);
        self.hamiltonian.right_mul_acc(rho, out, n, -coherent);
        for ch in &self.channels {
            let g = C64::new(ch.rate, 0.0);
            let (first, second) = if adjoint { (&ch.jump_dag, &ch.jump) } else { (&ch.jump, &ch.jump_dag) };
            scratch.fill(ZERO);
            first.left_mul_acc(rho, scratch, n, ONE);
            second.right_mul_acc(scratch, out, n, g * 2.0);
            ch.decay.left_mul_acc(rho, out, n, -g);
            ch.decay.right_mul_acc(rho, out, n, -g);
        }
    }
}

/// Reusable evolution machinery for one [`EvolutionSpec`].
#[derive(Clone, Debug)]
pub struct Evolver {
    spec: EvolutionSpec,
    generator: Generator,
    eig: Option<HermEig>,
}

impl Evolver {
    pub fn new(spec: &EvolutionSpec) -> Result<Self> {
        spec.validate()?;
        let eig = if spec.is_closed() { Some(crate::linalg::herm_eig(&spec.hamiltonian)?) } else { None };
        Ok(Self { spec: spec.clone(), generator: Generator::new(spec), eig })
    }

    pub fn spec(&self) -> &EvolutionSpec {
        &self.spec
    }

    /// The linear map that evolves states over an interval of length `t`.
    /// Closed systems get the exact unitary unless `force_integrator` is set.
    pub fn interval(&self, t: f64, force_integrator: bool) -> Result<IntervalMap<'_>> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameters(format!("evolution time must be finite and >= 0, got {t}")));
        }
        let kind = match &self.eig {
            Some(eig) if !force_integrator => {
                let u = eig.map(|l| (C64::new(0.0, -t) * l).exp());
                IntervalKind::Unitary { u_dag: u.dagger(), u }
            }
            _ => {
                let steps = if t == 0.0 { 0 } else { ((t / self.spec.dt) - 1e-9).ceil().max(1.0) as usize };
                let h = if steps == 0 { 0.0 } else { t / steps as f64 };
                IntervalKind::RungeKutta { steps, h }
            }
        };
        Ok(IntervalMap { generator: &self.generator, kind })
    }
}

#[derive(Clone, Debug)]
enum IntervalKind {
    Unitary { u: ComplexMatrix, u_dag: ComplexMatrix },
    RungeKutta { steps: usize, h: f64 },
}

/// Evolution over one fixed interval, in either picture.
#[derive(Clone, Debug)]
pub struct IntervalMap<'a> {
    generator: &'a Generator,
    kind: IntervalKind,
}

impl IntervalMap<'_> {
    /// Schrödinger picture: evolves a state.
    pub fn apply(&self, rho: &ComplexMatrix) -> ComplexMatrix {
        self.run(rho, false)
    }

    /// Heisenberg picture: evolves an observable with the dual map, so that
    /// `Tr[O · apply(ρ)] = Tr[apply_adjoint(O) · ρ]`.
    pub fn apply_adjoint(&self, observable: &ComplexMatrix) -> ComplexMatrix {
        self.run(observable, true)
    }

    fn run(&self, x: &ComplexMatrix, adjoint: bool) -> ComplexMatrix {
        match &self.kind {
            IntervalKind::Unitary { u, u_dag } => {
                let mut out = if adjoint { &(u_dag * x) * u } else { &(u * x) * u_dag };
                out.symmetrize_in_place();
                out
            }
            IntervalKind::RungeKutta { steps, h } => {
                let mut state = x.clone();
                let mut rk = RkScratch::new(self.generator.n);
                for _ in 0..*steps {
                    rk.step(self.generator, &mut state, *h, adjoint);
                }
                state
            }
        }
    }
}

struct RkScratch {
    k: [Vec<C64>; 4],
    stage: Vec<C64>,
    scratch: Vec<C64>,
}

impl RkScratch {
    fn new(n: usize) -> Self {
        let z = vec![ZERO; n * n];
        Self { k: [z.clone(), z.clone(), z.clone(), z.clone()], stage: z.clone(), scratch: z }
    }

    fn step(&mut self, g: &Generator, state: &mut ComplexMatrix, h: f64, adjoint: bool) {
        let x = state.as_slice();
        let [k1, k2, k3, k4] = &mut self.k;
        g.apply(x, k1, &mut self.scratch, adjoint);
        for ((s, a), b) in self.stage.iter_mut().zip(x).zip(k1.iter()) {
            *s = a + b * (0.5 * h);
        }
        g.apply(&self.stage, k2, &mut self.scratch, adjoint);
        for ((s, a), b) in self.stage.iter_mut().zip(x).zip(k2.iter()) {
            *s = a + b * (0.5 * h);
        }
        g.apply(&self.stage, k3, &mut self.scratch, adjoint);
        for ((s, a), b) in self.stage.iter_mut().zip(x).zip(k3.iter()) {
            *s = a + b * h;
        }
        g.apply(&self.stage, k4, &mut self.scratch, adjoint);
        let w = h / 6.0;
        for (i, v) in state.as_mut_slice().iter_mut().enumerate() {
            *v += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * w;
        }
        state.symmetrize_in_place();
    }
}

/// Right-hand side of the master equation at `rho`.
pub fn lindblad_rhs(rho: &ComplexMatrix, spec: &EvolutionSpec) -> Result<ComplexMatrix> {
    let n = rho.require_square("state")?;
    if n != spec.dim() {
        return Err(Error::Dimension(format!("state has dimension {n}, generator {}", spec.dim())));
    }
    let g = Generator::new(spec);
    let mut out = ComplexMatrix::zeros(n, n);
    let mut scratch = vec![ZERO; n * n];
    g.apply(rho.as_slice(), out.as_mut_slice(), &mut scratch, false);
    Ok(out)
}

/// Trace drift and smallest eigenvalue of an evolved matrix.
pub fn state_diagnostics(rho: &ComplexMatrix) -> (f64, f64) {
    let drift = (rho.trace() - ONE).norm();
    let min = crate::linalg::herm_eigvals(&rho.hermitian_part()).map(|v| v[0]).unwrap_or(f64::NAN);
    (drift, min)
}

fn checked_state(rho: ComplexMatrix, like: &DensityMatrix) -> Result<DensityMatrix> {
    let (trace_drift, min_eigenvalue) = state_diagnostics(&rho);
    if !(trace_drift <= EVOLUTION_TOL && min_eigenvalue >= -EVOLUTION_TOL) {
        return Err(Error::Numerical { trace_drift, min_eigenvalue });
    }
    Ok(DensityMatrix::from_validated(rho, like.structure().clone()))
}

fn check_dims(rho0: &DensityMatrix, spec: &EvolutionSpec) -> Result<()> {
    if rho0.dim() != spec.dim() {
        return Err(Error::Dimension(format!("state has dimension {}, generator {}", rho0.dim(), spec.dim())));
    }
    Ok(())
}

/// Evolves `rho0` for time `t`. Closed systems are propagated exactly;
/// otherwise the master equation is integrated with RK4. The result is
/// checked for trace drift and negativity.
pub fn evolve(rho0: &DensityMatrix, spec: &EvolutionSpec, t: f64) -> Result<DensityMatrix> {
    check_dims(rho0, spec)?;
    let out = Evolver::new(spec)?.interval(t, false)?.apply(rho0.matrix());
    checked_state(out, rho0)
}

/// Like [`evolve`] but always integrates, even for closed systems.
pub fn evolve_integrated(rho0: &DensityMatrix, spec: &EvolutionSpec, t: f64) -> Result<DensityMatrix> {
    check_dims(rho0, spec)?;
    let out = Evolver::new(spec)?.interval(t, true)?.apply(rho0.matrix());
    checked_state(out, rho0)
}

/// Instantaneous rotation `exp(−i·angle·A)` generated by a Hermitian `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct PulseSpec {
    pub generator: ComplexMatrix,
    pub angle: f64,
}

impl PulseSpec {
    pub fn new(generator: ComplexMatrix, angle: f64) -> Result<Self> {
        generator.require_square("pulse generator")?;
        let herm = generator.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation: herm });
        }
        if !angle.is_finite() {
            return Err(Error::InvalidParameters(format!("pulse angle must be finite, got {angle}")));
        }
        Ok(Self { generator, angle })
    }

    /// A π/2 pulse.
    pub fn quarter_turn(generator: ComplexMatrix) -> Result<Self> {
        Self::new(generator, std::f64::consts::FRAC_PI_2)
    }

    /// The unitary on the subsystem the pulse acts on.
    pub fn unitary(&self) -> Result<ComplexMatrix> {
        expm_herm_factor(&self.generator, C64::new(0.0, -self.angle))
    }
}

/// `ρ ↦ PρP†` with the pulse acting on factor `subsystem`.
pub fn apply_pulse(rho: &DensityMatrix, pulse: &PulseSpec, subsystem: usize) -> Result<DensityMatrix> {
    let p = embed(&pulse.unitary()?, rho.structure(), subsystem)?;
    let mut out = &(&p * rho.matrix()) * &p.dagger();
    out.symmetrize_in_place();
    Ok(DensityMatrix::from_validated(out, rho.structure().clone()))
}
