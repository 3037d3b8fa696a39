use prepsy::dynamics::{evolve, EvolutionSpec};
use prepsy::linalg::{herm_eig, kron, partial_trace, C64};
use prepsy::protocol::{conditional_prepare, Axis, StateVector};
use prepsy::protocol::{Signal2D, TimeGrid};
use prepsy::spectral::{fft2, total_intensity, Window};
use prepsy::states::{build_fano, decompose, fano_coefficients, gibbs_state, FanoTwoQubit};
use prepsy::{ComplexMatrix, DensityMatrix, HilbertStructure};
use proptest::prelude::*;

fn matrix(n: usize) -> impl Strategy<Value = ComplexMatrix> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n)
        .prop_map(move |v| ComplexMatrix::from_vec(n, n, v.into_iter().map(|(a, b)| C64::new(a, b)).collect()).unwrap())
}

fn hermitian(n: usize) -> impl Strategy<Value = ComplexMatrix> {
    matrix(n).prop_map(|m| m.hermitian_part())
}

fn state(structure: HilbertStructure) -> impl Strategy<Value = DensityMatrix> {
    matrix(structure.dim()).prop_map(move |g| {
        let r = &g * &g.dagger();
        let r = r.scale_real(1.0 / r.trace().re).hermitian_part();
        DensityMatrix::new(r, structure.clone()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decompose_round_trip(r in state(HilbertStructure::bipartite(2, 3))) {
        let d = decompose(&r).unwrap();
        prop_assert!(d.reconstruct().max_abs_diff(r.matrix()) <= 1e-12);
        let s = r.structure();
        prop_assert!(partial_trace(&d.chi, s, &[0]).unwrap().max_abs() <= 1e-12);
        prop_assert!(partial_trace(&d.chi, s, &[1]).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn fano_round_trip(r in state(HilbertStructure::qubits(2))) {
        let f: FanoTwoQubit = fano_coefficients(&r).unwrap();
        prop_assert!(build_fano(&f).unwrap().matrix().max_abs_diff(r.matrix()) <= 1e-12);
    }

    #[test]
    fn gibbs_is_a_state(h in hermitian(4), beta in 0.0f64..100.0) {
        let g = gibbs_state(&h, beta, HilbertStructure::qubits(2)).unwrap();
        prop_assert!((g.matrix().trace().re - 1.0).abs() <= 1e-12);
        prop_assert!(g.min_eigenvalue() >= -1e-12);
    }

    #[test]
    fn eigendecomposition_reconstructs(h in hermitian(5)) {
        let e = herm_eig(&h).unwrap();
        prop_assert!(e.map(|x| C64::new(x, 0.0)).max_abs_diff(&h) <= 1e-12);
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn partial_trace_of_product(a in state(HilbertStructure::new(vec![2]).unwrap()), b in state(HilbertStructure::new(vec![3]).unwrap())) {
        let ab = kron(a.matrix(), b.matrix());
        let s = HilbertStructure::bipartite(2, 3);
        prop_assert!(partial_trace(&ab, &s, &[0]).unwrap().max_abs_diff(a.matrix()) <= 1e-13);
        prop_assert!(partial_trace(&ab, &s, &[1]).unwrap().max_abs_diff(b.matrix()) <= 1e-13);
    }

    #[test]
    fn closed_evolution_preserves_spectrum(r in state(HilbertStructure::qubits(2)), h in hermitian(4), t in 0.0f64..3.0) {
        let spec = EvolutionSpec::from_frequency_hamiltonian(&h, vec![], 0.01).unwrap();
        let out = evolve(&r, &spec, t).unwrap();
        let before = herm_eig(r.matrix()).unwrap().values;
        let after = herm_eig(out.matrix()).unwrap().values;
        for (x, y) in before.iter().zip(&after) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn conditional_preparation_is_a_state(r in state(HilbertStructure::bipartite(2, 3)), axis in 0usize..6) {
        let axes = [Axis::PlusX, Axis::MinusX, Axis::PlusY, Axis::MinusY, Axis::PlusZ, Axis::MinusZ];
        let (out, p) = conditional_prepare(&r, &StateVector::axis(axes[axis]), &StateVector::axis(Axis::PlusZ)).unwrap();
        prop_assert!(p > 0.0 && p <= 1.0 + 1e-12);
        prop_assert!(out.min_eigenvalue() >= -1e-12);
        let sys = out.reduce(&[0]).unwrap();
        prop_assert!((sys.purity() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn outcome_probabilities_sum_to_one(r in state(HilbertStructure::bipartite(2, 2)), axis in 0usize..3) {
        let pairs = [(Axis::PlusX, Axis::MinusX), (Axis::PlusY, Axis::MinusY), (Axis::PlusZ, Axis::MinusZ)];
        let (a, b) = pairs[axis];
        let std0 = StateVector::axis(Axis::PlusZ);
        let (_, pa) = conditional_prepare(&r, &StateVector::axis(a), &std0).unwrap();
        let (_, pb) = conditional_prepare(&r, &StateVector::axis(b), &std0).unwrap();
        prop_assert!((pa + pb - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn intensity_is_homogeneous(values in prop::collection::vec(-1.0f64..1.0, 100), alpha in -3.0f64..3.0) {
        let g = TimeGrid::new(10, 0.1).unwrap();
        let s = Signal2D::new(values, 10, 10, g.spacing, g.spacing, "s").unwrap();
        let base = total_intensity(&fft2(&s, Window::None, 2).unwrap());
        let scaled = total_intensity(&fft2(&s.scaled(alpha), Window::None, 2).unwrap());
        prop_assert!((scaled - alpha.abs() * base).abs() <= 1e-9 * base.max(1.0));
    }
}
