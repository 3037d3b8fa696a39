//! Density matrices and their decomposition into marginals and correlations.
//!
//! A joint system-environment state is split as `R = ρ⊗τ + χ`, where `ρ` and
//! `τ` are the marginals and `χ` is the correlation matrix. `χ` is traceless
//! over either factor, so it carries no information about the marginals.

use crate::error::{Error, Result};
use crate::linalg::{self, kron, partial_trace, pauli, ComplexMatrix, HilbertStructure, C64};

/// Tolerance used when validating density matrices: Hermiticity, unit trace
/// and the smallest eigenvalue are all checked against it.
pub const STATE_TOL: f64 = 1e-10;

/// A Hermitian, unit-trace, positive-semidefinite matrix tagged with the
/// tensor structure of its Hilbert space.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    structure: HilbertStructure,
}

impl DensityMatrix {
    /// Validates `matrix` at [`STATE_TOL`].
    pub fn new(matrix: ComplexMatrix, structure: HilbertStructure) -> Result<Self> {
        Self::with_tolerance(matrix, structure, STATE_TOL)
    }

    pub(crate) fn with_tolerance(matrix: ComplexMatrix, structure: HilbertStructure, tol: f64) -> Result<Self> {
        structure.check_matrix(&matrix)?;
        let herm = matrix.hermiticity_error();
        if herm > tol {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herm:.3e})")));
        }
        let tr = matrix.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > tol {
            return Err(Error::InvalidState(format!("trace is {:.12}{:+.3e}i, expected 1", tr.re, tr.im)));
        }
        let min = linalg::herm_eigvals(&matrix.hermitian_part())?[0];
        if min < -tol {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.6e}")));
        }
        Ok(Self { matrix, structure })
    }

    /// Wraps a matrix the caller has already validated.
    pub(crate) fn from_validated(matrix: ComplexMatrix, structure: HilbertStructure) -> Self {
        Self { matrix, structure }
    }

    /// Pure state `|ψ⟩⟨ψ|`; `psi` is normalized here.
    pub fn pure(psi: &[C64], structure: HilbertStructure) -> Result<Self> {
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let v: Vec<C64> = psi.iter().map(|z| z / norm).collect();
        Self::new(ComplexMatrix::projector(&v), structure)
    }

    /// Maximally mixed state `I/d`.
    pub fn maximally_mixed(structure: HilbertStructure) -> Self {
        let d = structure.dim();
        let m = ComplexMatrix::identity(d).scale_real(1.0 / d as f64);
        Self { matrix: m, structure }
    }

    /// `self ⊗ other`, with the structures concatenated.
    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        let mut dims = self.structure.dims().to_vec();
        dims.extend_from_slice(other.structure.dims());
        DensityMatrix {
            matrix: kron(&self.matrix, &other.matrix),
            structure: HilbertStructure::new(dims).expect("positive dimensions"),
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn structure(&self) -> &HilbertStructure {
        &self.structure
    }

    pub fn dim(&self) -> usize {
        self.structure.dim()
    }

    /// `Tr(R²)`.
    pub fn purity(&self) -> f64 {
        self.matrix.trace_product(&self.matrix).re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::herm_eigvals(&self.matrix).map(|v| v[0]).unwrap_or(f64::NAN)
    }

    /// Reduced state on the listed subsystems.
    pub fn reduce(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let m = partial_trace(&self.matrix, &self.structure, keep)?;
        let dims: Vec<usize> = keep.iter().map(|&k| self.structure.dims()[k]).collect();
        let structure = HilbertStructure::new(if dims.is_empty() { vec![1] } else { dims })?;
        DensityMatrix::new(m, structure)
    }

    /// Expectation value `Tr(R · op)`.
    pub fn expect(&self, op: &ComplexMatrix) -> C64 {
        self.matrix.trace_product(op)
    }
}

/// Marginals and correlation matrix of a bipartite state.
#[derive(Clone, Debug)]
pub struct BipartiteDecomposition {
    /// System marginal.
    pub rho: DensityMatrix,
    /// Environment marginal.
    pub tau: DensityMatrix,
    /// Correlation matrix, traceless over either factor.
    pub chi: ComplexMatrix,
}

impl BipartiteDecomposition {
    /// `ρ⊗τ + χ`.
    pub fn reconstruct(&self) -> ComplexMatrix {
        &kron(self.rho.matrix(), self.tau.matrix()) + &self.chi
    }

    /// The uncorrelated product of the marginals.
    pub fn product(&self) -> DensityMatrix {
        self.rho.tensor(&self.tau)
    }
}

pub(crate) fn require_bipartite(structure: &HilbertStructure) -> Result<()> {
    if structure.len() != 2 {
        return Err(Error::Dimension(format!(
            "expected a system-environment structure with 2 factors, got {:?}",
            structure.dims()
        )));
    }
    Ok(())
}

/// Splits a bipartite state into `ρ`, `τ` and `χ = R - ρ⊗τ`.
pub fn decompose(r: &DensityMatrix) -> Result<BipartiteDecomposition> {
    require_bipartite(r.structure())?;
    let rho = r.reduce(&[0])?;
    let tau = r.reduce(&[1])?;
    let chi = r.matrix() - &kron(rho.matrix(), tau.matrix());
    Ok(BipartiteDecomposition { rho, tau, chi })
}

/// Two-qubit Fano parameters: Bloch vectors `u` (system) and `v`
/// (environment) and the correlation tensor `t`, so that
/// `R = ¼(I + Σ u_j σ_j⊗I + Σ v_k I⊗σ_k + Σ t_jk σ_j⊗σ_k)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FanoTwoQubit {
    pub u: [f64; 3],
    pub v: [f64; 3],
    pub t: [[f64; 3]; 3],
}

impl FanoTwoQubit {
    /// Maximally mixed marginals with a diagonal correlation tensor.
    pub fn diagonal(c: [f64; 3]) -> Self {
        let mut t = [[0.0; 3]; 3];
        for j in 0..3 {
            t[j][j] = c[j];
        }
        Self { u: [0.0; 3], v: [0.0; 3], t }
    }

    fn matrix(&self) -> ComplexMatrix {
        let s = pauli::all();
        let id = pauli::identity();
        let mut m = ComplexMatrix::identity(4);
        for j in 0..3 {
            m.axpy(C64::new(self.u[j], 0.0), &kron(&s[j], &id));
            m.axpy(C64::new(self.v[j], 0.0), &kron(&id, &s[j]));
            for k in 0..3 {
                if self.t[j][k] != 0.0 {
                    m.axpy(C64::new(self.t[j][k], 0.0), &kron(&s[j], &s[k]));
                }
            }
        }
        m.scale_real(0.25)
    }
}

/// Builds the two-qubit state from its Fano parameters. Positivity is
/// checked on the eigenvalues of the result.
pub fn build_fano(params: &FanoTwoQubit) -> Result<DensityMatrix> {
    let m = params.matrix();
    let min = linalg::herm_eigvals(&m)?[0];
    if min < -STATE_TOL {
        return Err(Error::InvalidParameters(format!(
            "Fano parameters give a non-positive matrix (smallest eigenvalue {min:.6})"
        )));
    }
    DensityMatrix::new(m, HilbertStructure::qubits(2))
}

/// `R = ¼(I + Σ c_j σ_j⊗σ_j)`: maximally mixed marginals, diagonal
/// correlations.
pub fn build_maximally_mixed_marginal(c: [f64; 3]) -> Result<DensityMatrix> {
    build_fano(&FanoTwoQubit::diagonal(c))
}

/// Inverts [`build_fano`] with `u_j = Tr[R σ_j⊗I]`, `v_k = Tr[R I⊗σ_k]` and
/// `t_jk = Tr[R σ_j⊗σ_k]`.
pub fn fano_coefficients(r: &DensityMatrix) -> Result<FanoTwoQubit> {
    if r.structure().dims() != [2, 2] {
        return Err(Error::Dimension(format!(
            "Fano coefficients need a two-qubit state, got structure {:?}",
            r.structure().dims()
        )));
    }
    let s = pauli::all();
    let id = pauli::identity();
    let mut out = FanoTwoQubit::default();
    for j in 0..3 {
        out.u[j] = r.expect(&kron(&s[j], &id)).re;
        out.v[j] = r.expect(&kron(&id, &s[j])).re;
        for k in 0..3 {
            out.t[j][k] = r.expect(&kron(&s[j], &s[k])).re;
        }
    }
    Ok(out)
}

/// Thermal state `exp(-βH)/Tr exp(-βH)`.
///
/// Computed in the eigenbasis of `h` with the ground energy shifted to zero,
/// so large `beta` cannot overflow.
pub fn gibbs_state(h: &ComplexMatrix, beta: f64, structure: HilbertStructure) -> Result<DensityMatrix> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameters(format!("inverse temperature must be finite and >= 0, got {beta}")));
    }
    structure.check_matrix(h)?;
    let eig = linalg::herm_eig(h)?;
    let e0 = eig.values[0];
    let z: f64 = eig.values.iter().map(|&e| (-beta * (e - e0)).exp()).sum();
    let mut m = eig.map(|e| C64::new((-beta * (e - e0)).exp() / z, 0.0));
    m.symmetrize_in_place();
    DensityMatrix::new(m, structure)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fano_examples() {
        let r = build_fano(&FanoTwoQubit::default()).unwrap();
        assert!(r.matrix().max_abs_diff(&ComplexMatrix::identity(4).scale_real(0.25)) < 1e-15);

        let mut t = [[0.0; 3]; 3];
        t[0][0] = -0.8;
        let r = build_fano(&FanoTwoQubit { t, ..Default::default() }).unwrap();
        let vals = linalg::herm_eigvals(r.matrix()).unwrap();
        for (v, w) in vals.iter().zip([0.05, 0.05, 0.45, 0.45]) {
            assert!((v - w).abs() < 1e-12, "{vals:?}");
        }
        let r2 = build_maximally_mixed_marginal([-0.8, 0.0, 0.0]).unwrap();
        assert!(r.matrix().max_abs_diff(r2.matrix()) < 1e-15);
    }

    #[test]
    fn fano_rejects_non_positive() {
        let err = build_maximally_mixed_marginal([1.0, 1.0, 1.0]).unwrap_err();
        match err {
            Error::InvalidParameters(msg) => assert!(msg.contains("-0.5"), "{msg}"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn singlet_vertex() {
        let r = build_maximally_mixed_marginal([-1.0, -1.0, -1.0]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let singlet = [C64::new(0.0, 0.0), C64::new(h, 0.0), C64::new(-h, 0.0), C64::new(0.0, 0.0)];
        assert!(r.matrix().max_abs_diff(&ComplexMatrix::projector(&singlet)) < 1e-15);
        assert!((r.purity() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn decompose_diagonal_family() {
        let c = [0.3, 0.2, 0.1];
        let r = build_maximally_mixed_marginal(c).unwrap();
        let d = decompose(&r).unwrap();
        let half = ComplexMatrix::identity(2).scale_real(0.5);
        assert!(d.rho.matrix().max_abs_diff(&half) < 1e-15);
        assert!(d.tau.matrix().max_abs_diff(&half) < 1e-15);
        let s = pauli::all();
        let mut chi = ComplexMatrix::zeros(4, 4);
        for j in 0..3 {
            chi.axpy(C64::new(c[j] / 4.0, 0.0), &kron(&s[j], &s[j]));
        }
        assert!(d.chi.max_abs_diff(&chi) < 1e-15);
    }

    #[test]
    fn decompose_product_and_bell() {
        let a = DensityMatrix::pure(&pauli::eigenstate(1, true), HilbertStructure::new(vec![2]).unwrap()).unwrap();
        let b = DensityMatrix::maximally_mixed(HilbertStructure::new(vec![2]).unwrap());
        let d = decompose(&a.tensor(&b)).unwrap();
        assert!(d.chi.max_abs() < 1e-15);

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = [C64::new(h, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(h, 0.0)];
        let r = DensityMatrix::pure(&bell, HilbertStructure::qubits(2)).unwrap();
        let d = decompose(&r).unwrap();
        // R has entries 1/2 at the corners, ρ⊗τ = I/4: χ keeps the 1/2
        // coherences and ±1/4 on the diagonal.
        assert!((d.chi.max_abs() - 0.5).abs() < 1e-15);
        for (k, want) in [0.25, -0.25, -0.25, 0.25].into_iter().enumerate() {
            assert!((d.chi[(k, k)].re - want).abs() < 1e-15);
        }
    }

    #[test]
    fn decompose_rejects_wrong_arity() {
        let r = DensityMatrix::maximally_mixed(HilbertStructure::qubits(3));
        assert!(matches!(decompose(&r), Err(Error::Dimension(_))));
    }

    #[test]
    fn fano_coefficients_recover_parameters() {
        let r = DensityMatrix::maximally_mixed(HilbertStructure::qubits(2));
        assert_eq!(fano_coefficients(&r).unwrap(), FanoTwoQubit::default());
        let c = [-0.8, 0.1, 0.3];
        let f = fano_coefficients(&build_maximally_mixed_marginal(c).unwrap()).unwrap();
        let want = FanoTwoQubit::diagonal(c);
        for j in 0..3 {
            for k in 0..3 {
                assert!((f.t[j][k] - want.t[j][k]).abs() < 1e-15);
            }
        }
        assert!(fano_coefficients(&DensityMatrix::maximally_mixed(HilbertStructure::qubits(3))).is_err());
    }

    #[test]
    fn gibbs_limits() {
        let s1 = HilbertStructure::new(vec![2]).unwrap();
        let r = gibbs_state(&pauli::z(), 0.0, s1.clone()).unwrap();
        assert!(r.matrix().max_abs_diff(&ComplexMatrix::identity(2).scale_real(0.5)) < 1e-15);
        let r = gibbs_state(&pauli::z(), 50.0, s1.clone()).unwrap();
        let ground = ComplexMatrix::from_real_diagonal(&[0.0, 1.0]);
        assert!(r.matrix().max_abs_diff(&ground) < 1e-9);
        // Large beta must not overflow.
        let r = gibbs_state(&pauli::z().scale_real(1e3), 1e3, s1.clone()).unwrap();
        assert!(r.matrix().max_abs_diff(&ground) < 1e-12);
        assert!(gibbs_state(&pauli::z(), -1.0, s1).is_err());
    }

    #[test]
    fn density_matrix_validation() {
        let s = HilbertStructure::new(vec![2]).unwrap();
        assert!(DensityMatrix::new(ComplexMatrix::identity(2), s.clone()).is_err());
        assert!(DensityMatrix::new(ComplexMatrix::from_real_diagonal(&[1.5, -0.5]), s.clone()).is_err());
        assert!(DensityMatrix::new(ComplexMatrix::identity(4).scale_real(0.25), s).is_err());
    }
}
