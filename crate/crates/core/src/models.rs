//! Model Hamiltonians and dissipators.
//!
//! Every builder takes its parameters as ordinary frequencies and returns a
//! Hamiltonian in the same units; [`crate::dynamics::EvolutionSpec`] adds the
//! factor 2π. Spin operators follow `S_i = σ_i/2`, and qubit levels are
//! ordered `|0⟩, |1⟩` with `|1⟩` the excited level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{embed, kron, pauli, ComplexMatrix, HilbertStructure, C64, MAX_DIM};

/// Largest spin count the NV Hamiltonian builders will produce (2^8 = 256).
pub const MAX_NV_SPINS: usize = 8;

/// Largest spin count for [`enumerate_levels`], which builds no matrices.
pub const MAX_ENUMERATED_SPINS: usize = 12;

/// Weight of each unordered pair in [`nv_pairwise_hamiltonian`]. With this
/// weight the uniform pairwise model equals the collective form
/// `4ξ(J² − J_z²) − 2ξN` exactly, since
/// `Σ_{i≠j} σ⁺_i σ⁻_j = J² − J_z² − N/2`.
pub const PAIR_WEIGHT: f64 = 4.0;

/// Two-spin toy model: `ω_s S_z⊗I + ω_e I⊗S_z + Σ λ_ij S_i⊗S_j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyModelParams {
    pub omega_s: f64,
    pub omega_e: f64,
    /// `lambda[i][j]` couples `S_i` of the system to `S_j` of the environment.
    pub lambda: [[f64; 3]; 3],
}

impl ToyModelParams {
    /// XYZ coupling with no local splittings.
    pub fn xyz(lxx: f64, lyy: f64, lzz: f64) -> Self {
        let mut lambda = [[0.0; 3]; 3];
        lambda[0][0] = lxx;
        lambda[1][1] = lyy;
        lambda[2][2] = lzz;
        Self { omega_s: 0.0, omega_e: 0.0, lambda }
    }

    pub fn validate(&self) -> Result<()> {
        let finite =
            self.omega_s.is_finite() && self.omega_e.is_finite() && self.lambda.iter().flatten().all(|x| x.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::InvalidParameters("toy model parameters must be finite".into()))
        }
    }
}

pub fn toy_hamiltonian(p: &ToyModelParams) -> ComplexMatrix {
    let s: Vec<ComplexMatrix> = pauli::all().iter().map(|m| m.scale_real(0.5)).collect();
    let id = pauli::identity();
    let mut h = kron(&s[2], &id).scale_real(p.omega_s);
    h.axpy(C64::new(p.omega_e, 0.0), &kron(&id, &s[2]));
    for i in 0..3 {
        for j in 0..3 {
            if p.lambda[i][j] != 0.0 {
                h.axpy(C64::new(p.lambda[i][j], 0.0), &kron(&s[i], &s[j]));
            }
        }
    }
    h
}

/// NV ensemble in a cavity after adiabatic elimination.
///
/// Only `xi` and the rates enter the simulated dynamics. The cavity
/// couplings, detuning and Raman drive are kept as metadata describing where
/// `xi` came from; no relation between them is enforced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NvCavityParams {
    pub n_spins: usize,
    /// Cavity coupling `g_j` per NV.
    pub g: Vec<f64>,
    /// Cavity detuning `Δ`.
    pub delta: f64,
    /// Raman Rabi frequency `Ω_j` per NV.
    pub omega_raman: Vec<f64>,
    /// Effective flip-flop coupling `ξ_ij`; only `i < j` entries are read.
    pub xi: Vec<Vec<f64>>,
    /// `Θ = g₁g₂/Δ`.
    pub theta: f64,
    /// Cavity decay rate `κ`.
    pub kappa: f64,
    /// `|1⟩ → |0⟩` decay rate per NV.
    pub gamma_10: Vec<f64>,
    /// Excited-manifold decay rates per NV. They act before adiabatic
    /// elimination and are not part of the effective qubit model.
    pub gamma_e0: Vec<f64>,
    pub gamma_e1: Vec<f64>,
}

impl NvCavityParams {
    /// Uniform coupling `xi` between all pairs, with the cavity metadata of
    /// the reference setup: `g = 1`, `Δ = 10g`, `Ω = 0.01g`, and no decay.
    pub fn uniform(n_spins: usize, xi: f64) -> Self {
        let g = 1.0;
        let delta = 10.0;
        Self {
            n_spins,
            g: vec![g; n_spins],
            delta,
            omega_raman: vec![0.01; n_spins],
            xi: vec![vec![xi; n_spins]; n_spins],
            theta: g * g / delta,
            kappa: 0.0,
            gamma_10: vec![0.0; n_spins],
            gamma_e0: vec![0.0; n_spins],
            gamma_e1: vec![0.0; n_spins],
        }
    }

    /// Same decay rate `gamma` on every NV.
    pub fn with_decay(mut self, gamma: f64) -> Self {
        self.gamma_10 = vec![gamma; self.n_spins];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_spins;
        if n < 2 {
            return Err(Error::InvalidParameters(format!("need at least 2 spins, got {n}")));
        }
        let per_spin = [
            ("g", &self.g),
            ("omega_raman", &self.omega_raman),
            ("gamma_10", &self.gamma_10),
            ("gamma_e0", &self.gamma_e0),
            ("gamma_e1", &self.gamma_e1),
        ];
        for (name, v) in per_spin {
            if v.len() != n {
                return Err(Error::InvalidParameters(format!("{name} has {} entries for {n} spins", v.len())));
            }
        }
        if self.xi.len() != n || self.xi.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidParameters(format!("xi must be a {n}x{n} table")));
        }
        if self.xi.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameters("xi entries must be finite".into()));
        }
        let rates =
            self.gamma_10.iter().chain(&self.gamma_e0).chain(&self.gamma_e1).chain(std::iter::once(&self.kappa));
        for &r in rates {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::InvalidParameters(format!("decay rates must be finite and >= 0, got {r}")));
            }
        }
        Ok(())
    }

    /// Human-readable warnings where the adiabatic-elimination conditions
    /// look violated (`Δ` should exceed every `g_j` by at least 10x).
    pub fn adiabatic_warnings(&self) -> Vec<String> {
        self.g
            .iter()
            .enumerate()
            .filter(|(_, g)| g.abs() > 0.0 && self.delta.abs() < 10.0 * g.abs())
            .map(|(j, g)| format!("NV {j}: detuning {} is not >> coupling {g} (ratio < 10)", self.delta))
            .collect()
    }
}

fn check_spin_count(n: usize, max: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameters(format!("need at least 2 spins, got {n}")));
    }
    if n > max {
        return Err(Error::Size { requested: n, max });
    }
    Ok(())
}

/// Flip-flop Hamiltonian `Σ_{i<j} 4ξ_ij (|1_i 0_j⟩⟨0_i 1_j| + h.c.)` on
/// `n_spins` qubits. See [`PAIR_WEIGHT`] for the factor 4.
pub fn nv_pairwise_hamiltonian(p: &NvCavityParams) -> Result<ComplexMatrix> {
    check_spin_count(p.n_spins, MAX_NV_SPINS)?;
    p.validate()?;
    let n = p.n_spins;
    let s = HilbertStructure::qubits(n);
    let raise: Vec<ComplexMatrix> = (0..n).map(|i| embed(&pauli::raising(), &s, i)).collect::<Result<_>>()?;
    let lower: Vec<ComplexMatrix> = (0..n).map(|i| embed(&pauli::lowering(), &s, i)).collect::<Result<_>>()?;
    let mut h = ComplexMatrix::zeros(s.dim(), s.dim());
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        for j in i + 1..n {
            let xi = p.xi[i][j];
            if xi == 0.0 {
                continue;
            }
            let hop = &raise[i] * &lower[j];
            h.axpy(C64::new(PAIR_WEIGHT * xi, 0.0), &hop);
            h.axpy(C64::new(PAIR_WEIGHT * xi, 0.0), &hop.dagger());
        }
    }
    Ok(h)
}

/// Collective spin operators `(J_x, J_y, J_z)` with `J_a = Σ_i σ_a^{(i)}/2`.
pub fn collective_spin_operators(n: usize) -> Result<[ComplexMatrix; 3]> {
    check_spin_count(n, MAX_NV_SPINS)?;
    let s = HilbertStructure::qubits(n);
    let build = |op: ComplexMatrix| -> Result<ComplexMatrix> {
        let half = op.scale_real(0.5);
        let mut total = ComplexMatrix::zeros(s.dim(), s.dim());
        for i in 0..n {
            total += &embed(&half, &s, i)?;
        }
        Ok(total)
    };
    Ok([build(pauli::x())?, build(pauli::y())?, build(pauli::z())?])
}

/// `4ξ(J² − J_z²) − 2ξN·I` on `n` qubits.
pub fn nv_collective_hamiltonian(n: usize, xi: f64) -> Result<ComplexMatrix> {
    let [jx, jy, _] = collective_spin_operators(n)?;
    // J² − J_z² = J_x² + J_y²
    let mut h = (&(&jx * &jx) + &(&jy * &jy)).scale_real(4.0 * xi);
    h.axpy(C64::new(-2.0 * xi * n as f64, 0.0), &ComplexMatrix::identity(h.rows()));
    Ok(h)
}

/// A Lindblad jump operator with its rate.
#[derive(Clone, Debug, PartialEq)]
pub struct DissipatorChannel {
    pub operator: ComplexMatrix,
    pub rate: f64,
}

impl DissipatorChannel {
    pub fn new(operator: ComplexMatrix, rate: f64) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::InvalidParameters(format!("channel rate must be finite and >= 0, got {rate}")));
        }
        operator.require_square("jump operator")?;
        Ok(Self { operator, rate })
    }
}

/// Decay channels of the effective NV model on `structure`.
///
/// `structure` spans the `n_spins` qubits in order, optionally followed by
/// one cavity factor as its last subsystem. Each NV with a nonzero rate
/// `γ¹⁰` gets the jump operator `|0⟩⟨1|`. With `include_cavity` set and
/// `κ > 0` the cavity lowering operator is added as well, which requires the
/// cavity factor. Excited-manifold decay is not part of the qubit model and
/// is never emitted.
pub fn nv_dissipators(
    p: &NvCavityParams,
    structure: &HilbertStructure,
    include_cavity: bool,
) -> Result<Vec<DissipatorChannel>> {
    p.validate()?;
    let spin_dim = 1usize
        .checked_shl(p.n_spins as u32)
        .filter(|&d| d <= MAX_DIM)
        .ok_or(Error::Size { requested: p.n_spins, max: MAX_NV_SPINS })?;
    let total = structure.dim();
    let cavity_dim = match total / spin_dim {
        1 if total == spin_dim => None,
        c if c * spin_dim == total && structure.dims().last() == Some(&c) => Some(c),
        _ => {
            return Err(Error::Dimension(format!(
                "structure {:?} does not hold {} qubits (optionally followed by a cavity factor)",
                structure.dims(),
                p.n_spins
            )))
        }
    };
    let wants_cavity = include_cavity && p.kappa > 0.0;
    if wants_cavity && cavity_dim.is_none() {
        return Err(Error::InvalidParameters("cavity decay requested but the structure has no cavity factor".into()));
    }

    let mut dims = vec![2; p.n_spins];
    dims.extend(cavity_dim);
    let layout = HilbertStructure::new(dims)?;
    let mut channels = Vec::new();
    for (i, &gamma) in p.gamma_10.iter().enumerate() {
        if gamma > 0.0 {
            channels.push(DissipatorChannel::new(embed(&pauli::lowering(), &layout, i)?, gamma)?);
        }
    }
    if wants_cavity {
        let c = cavity_dim.expect("checked above");
        let mut a = ComplexMatrix::zeros(c, c);
        for k in 1..c {
            a[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
        }
        channels.push(DissipatorChannel::new(embed(&a, &layout, p.n_spins)?, p.kappa)?);
    }
    Ok(channels)
}

/// One `(j, |m|)` multiplet of the collective Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Level {
    pub j: f64,
    pub m_abs: f64,
    pub energy: f64,
    /// Number of states sharing this `(j, |m|)`: the multiplicity of `j`
    /// among `n` spin-1/2 particles, doubled for `m ≠ 0`.
    pub multiplicity: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Transition {
    /// Index of the upper level in [`LevelTable::levels`].
    pub from: usize,
    /// Index of the lower level.
    pub to: usize,
    pub energy_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelTable {
    pub n_spins: usize,
    pub xi: f64,
    pub levels: Vec<Level>,
    /// Every pair of levels with a positive energy gap.
    pub transitions: Vec<Transition>,
}

impl LevelTable {
    pub fn multiplet_count(&self) -> usize {
        self.levels.len()
    }

    /// Distinct level energies, ascending, merging values closer than `tol`.
    pub fn distinct_energies(&self, tol: f64) -> Vec<f64> {
        dedup_sorted(self.levels.iter().map(|l| l.energy).collect(), tol)
    }

    /// Distinct positive transition energies, ascending.
    pub fn distinct_transition_energies(&self, tol: f64) -> Vec<f64> {
        dedup_sorted(self.transitions.iter().map(|t| t.energy_gap).collect(), tol)
    }

    /// Every eigenvalue of the collective Hamiltonian, with multiplicity,
    /// ascending.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut out: Vec<f64> =
            self.levels.iter().flat_map(|l| std::iter::repeat_n(l.energy, l.multiplicity)).collect();
        out.sort_by(f64::total_cmp);
        out
    }
}

fn dedup_sorted(mut v: Vec<f64>, tol: f64) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(v.len());
    for x in v {
        if out.last().is_none_or(|&last| x - last > tol) {
            out.push(x);
        }
    }
    out
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k.min(n - k)).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Levels of `4ξ(J² − J_z²) − 2ξn` labelled by `(j, |m|)`, and all positive
/// transition energies between them. Energies use
/// `E(j, m) = 4ξ(j(j+1) − m²) − 2ξn`.
pub fn enumerate_levels(n: usize, xi: f64) -> Result<LevelTable> {
    check_spin_count(n, MAX_ENUMERATED_SPINS)?;
    let mut levels = Vec::new();
    // k = n/2 − j counts down from the fully symmetric multiplet.
    for k in 0..=n / 2 {
        let twice_j = n - 2 * k;
        let j = twice_j as f64 / 2.0;
        let j_mult = binomial(n, k) - if k > 0 { binomial(n, k - 1) } else { 0 };
        // |m| runs over j, j−1, ... down to 0 or 1/2.
        let mut twice_m = twice_j;
        loop {
            let m = twice_m as f64 / 2.0;
            levels.push(Level {
                j,
                m_abs: m,
                energy: 4.0 * xi * (j * (j + 1.0) - m * m) - 2.0 * xi * n as f64,
                multiplicity: j_mult * if twice_m == 0 { 1 } else { 2 },
            });
            if twice_m < 2 {
                break;
            }
            twice_m -= 2;
        }
    }
    let mut transitions = Vec::new();
    let tol = 1e-12 * xi.abs().max(f64::MIN_POSITIVE);
    for (h, lh) in levels.iter().enumerate() {
        for (k, lk) in levels.iter().enumerate() {
            let gap = lh.energy - lk.energy;
            if gap > tol {
                transitions.push(Transition { from: h, to: k, energy_gap: gap });
            }
        }
    }
    Ok(LevelTable { n_spins: n, xi, levels, transitions })
}
