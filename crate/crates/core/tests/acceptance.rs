//! End-to-end acceptance checks. Each test prints one PASS/FAIL line.

use std::time::Instant;

use prepsy::dynamics::{evolve, evolve_integrated, state_diagnostics, EvolutionSpec, PulseSpec};
use prepsy::linalg::{embed, herm_eigvals, pauli, C64};
use prepsy::models::{
    enumerate_levels, nv_collective_hamiltonian, nv_dissipators, nv_pairwise_hamiltonian, toy_hamiltonian,
    DissipatorChannel, NvCavityParams, ToyModelParams,
};
use prepsy::protocol::{
    conditional_prepare, difference_signals, retained_correlation, run_prepsy, run_prepsy_detailed,
    signal_chi_derivative, Axis, ChiElement, PrepsyConfig, StateVector, TimeGrid,
};
use prepsy::spectral::{
    calibrate, correlation_coefficient, detect_peaks, fft2, fit_through_origin, measure_correlation, positive_quadrant,
    total_intensity, Analysis, Window,
};
use prepsy::states::{build_maximally_mixed_marginal, decompose, gibbs_state};
use prepsy::{ComplexMatrix, DensityMatrix, HilbertStructure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOY_SPACING: f64 = 0.09375;
const NV_SPACING: f64 = 7.8125;
const NV_BETA: f64 = 100.0 * std::f64::consts::PI;

fn report(id: u32, name: &str, passed: bool, detail: String, started: Instant) {
    println!(
        "criterion {id} [{}] {name}: {detail} ({:.1}s)",
        if passed { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    assert!(passed, "criterion {id} failed: {detail}");
}

fn toy_h() -> ComplexMatrix {
    toy_hamiltonian(&ToyModelParams::xyz(4.0, 3.0, 3.5))
}

fn toy_config(count: usize) -> PrepsyConfig {
    let h = toy_h();
    PrepsyConfig {
        projections: vec![StateVector::axis(Axis::PlusX), StateVector::axis(Axis::MinusX)],
        standard_state: StateVector::axis(Axis::PlusZ),
        pulse: PulseSpec::quarter_turn(pauli::z()).unwrap(),
        observable: StateVector::axis(Axis::PlusX),
        t1: TimeGrid::new(count, TOY_SPACING).unwrap(),
        t2: TimeGrid::new(count, TOY_SPACING).unwrap(),
        evolution: EvolutionSpec::for_sampling(&h, vec![], TOY_SPACING).unwrap(),
    }
}

/// Six NVs, the first probed, with `|1⟩ → |0⟩` decay on every spin.
fn nv_setup(gamma: f64) -> (ComplexMatrix, PrepsyConfig) {
    let h = nv_collective_hamiltonian(6, 0.001).unwrap();
    let params = NvCavityParams::uniform(6, 0.001).with_decay(gamma);
    let channels = nv_dissipators(&params, &HilbertStructure::qubits(6), false).unwrap();
    let config = PrepsyConfig {
        projections: vec![StateVector::axis(Axis::PlusX), StateVector::axis(Axis::MinusX)],
        standard_state: StateVector::axis(Axis::PlusX),
        pulse: PulseSpec::quarter_turn(pauli::z()).unwrap(),
        observable: StateVector::axis(Axis::PlusX),
        t1: TimeGrid::new(64, NV_SPACING).unwrap(),
        t2: TimeGrid::new(64, NV_SPACING).unwrap(),
        evolution: EvolutionSpec::for_sampling(&h, channels, NV_SPACING).unwrap(),
    };
    (h, config)
}

fn nv_structure() -> HilbertStructure {
    HilbertStructure::bipartite(2, 32)
}

fn random_state(rng: &mut ChaCha8Rng, structure: HilbertStructure) -> DensityMatrix {
    let n = structure.dim();
    let mut g = ComplexMatrix::zeros(n, n);
    for z in g.as_mut_slice() {
        *z = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    let mut r = &g * &g.dagger();
    let tr = r.trace().re;
    r = r.scale_real(1.0 / tr);
    DensityMatrix::new(r.hermitian_part(), structure).unwrap()
}

fn random_vector(rng: &mut ChaCha8Rng, d: usize) -> StateVector {
    let v = (0..d).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    StateVector::normalized(v, "random").unwrap()
}

#[test]
fn criterion_1_zero_correlation_null() {
    let started = Instant::now();
    let analysis = Analysis::default();
    let mut worst_signal = 0.0f64;
    let mut worst_intensity = 0.0f64;

    let toy = build_maximally_mixed_marginal([0.0; 3]).unwrap();
    let nv_thermal = gibbs_state(&nv_collective_hamiltonian(6, 0.001).unwrap(), NV_BETA, nv_structure()).unwrap();
    let nv_product = decompose(&nv_thermal).unwrap().product();
    let (_, nv_config) = nv_setup(1e-4);

    for (state, config) in [(&toy, toy_config(128)), (&nv_product, nv_config)] {
        for d in difference_signals(&run_prepsy(state, &config).unwrap()).unwrap() {
            worst_signal = worst_signal.max(d.max_abs());
            worst_intensity = worst_intensity.max(total_intensity(&analysis.spectrum(&d).unwrap()));
        }
    }
    report(
        1,
        "zero-correlation null",
        worst_signal <= 1e-9 && worst_intensity <= 1e-8,
        format!("max |difference| = {worst_signal:.2e} (limit 1e-9), max ℱ = {worst_intensity:.2e} (limit 1e-8)"),
        started,
    );
}

#[test]
fn criterion_2_correlation_detection() {
    let started = Instant::now();
    let analysis = Analysis::default();
    let config = toy_config(128);

    let null = build_maximally_mixed_marginal([0.0; 3]).unwrap();
    let null_diff = &difference_signals(&run_prepsy(&null, &config).unwrap()).unwrap()[0];
    let floor = analysis.spectrum(null_diff).unwrap().max();

    let r = build_maximally_mixed_marginal([-0.8, 0.0, 0.0]).unwrap();
    let diff = &difference_signals(&run_prepsy(&r, &config).unwrap()).unwrap()[0];
    let spec = analysis.spectrum(diff).unwrap();
    let peaks = detect_peaks(&spec, analysis.peak_threshold).unwrap();

    let e = herm_eigvals(&toy_h()).unwrap();
    let mut gaps = Vec::new();
    for i in 0..e.len() {
        for j in i + 1..e.len() {
            gaps.push((e[j] - e[i]).abs());
        }
    }
    let (b1, b2) = spec.native_bin;
    let near = |f: f64, bin: f64| gaps.iter().any(|g| (f.abs() - g).abs() <= bin);
    let unmatched: Vec<_> = peaks.iter().filter(|p| !(near(p.f1, b1) && near(p.f2, b2))).collect();
    let strongest = peaks.first().map(|p| p.magnitude).unwrap_or(0.0);
    let effective_floor = floor.max(1e-12);
    let passed = !peaks.is_empty() && strongest >= 100.0 * effective_floor && unmatched.is_empty();
    let top = positive_quadrant(&peaks).first().copied();
    report(
        2,
        "correlation detection",
        passed,
        format!(
            "{} peaks, strongest {strongest:.3e} vs null floor {floor:.1e}, positive-quadrant top {:?}, unmatched {}",
            peaks.len(),
            top.map(|p| (p.f1, p.f2)),
            unmatched.len()
        ),
        started,
    );
}

#[test]
fn criterion_3_linearity_of_total_intensity() {
    let started = Instant::now();
    let analysis = Analysis::default();
    let config = toy_config(128);
    let cs: Vec<f64> = (-4..=4).map(|k| 0.2 * k as f64).collect();
    let mut diffs = Vec::new();
    let mut intensities = Vec::new();
    for &c in &cs {
        let r = build_maximally_mixed_marginal([c, 0.0, 0.0]).unwrap();
        let d = difference_signals(&run_prepsy(&r, &config).unwrap()).unwrap().remove(0);
        intensities.push(total_intensity(&analysis.spectrum(&d).unwrap()));
        diffs.push(d);
    }
    let xs: Vec<f64> = cs.iter().map(|c| c.abs()).collect();
    let (slope, residual) = fit_through_origin(&xs, &intensities).unwrap();
    let f_top = intensities[8];

    // Midpoints of consecutive points: D((c_a + c_b)/2) = (D(c_a) + D(c_b))/2.
    let mut affinity = 0.0f64;
    for k in 0..8 {
        let mid = diffs[k].scaled(0.5);
        let other = diffs[k + 1].scaled(0.5);
        let r = build_maximally_mixed_marginal([0.5 * (cs[k] + cs[k + 1]), 0.0, 0.0]).unwrap();
        let d = difference_signals(&run_prepsy(&r, &config).unwrap()).unwrap().remove(0);
        for ((m, o), v) in mid.values().iter().zip(other.values()).zip(d.values()) {
            affinity = affinity.max((m + o - v).abs());
        }
    }
    report(
        3,
        "linearity of ℱ",
        residual <= 0.01 * f_top && affinity <= 1e-8,
        format!(
            "slope {slope:.6e} per unit |c_x|, max residual {:.2e} of ℱ(0.8), midpoint affinity {affinity:.2e} (limit 1e-8)",
            residual / f_top
        ),
        started,
    );
}

#[test]
fn criterion_4_calibration_round_trip() {
    let started = Instant::now();
    let analysis = Analysis::default();
    let config = toy_config(128);
    let beta = 0.125;
    let thermal = gibbs_state(&toy_h(), beta, HilbertStructure::qubits(2)).unwrap();
    let c_thermal = correlation_coefficient(&thermal, (0, 0)).unwrap();
    let line = calibrate(&toy_h(), &config, beta, (0, 0), &analysis).unwrap();

    let mut worst = 0.0f64;
    let mut details = Vec::new();
    for (cx, cy) in [(-0.2, 0.1), (0.5, 0.1), (-0.8, 0.1)] {
        let r = build_maximally_mixed_marginal([cx, cy, 0.0]).unwrap();
        let f = analysis.intensity_of(&run_prepsy(&r, &config).unwrap()).unwrap();
        let got = measure_correlation(&line, f).unwrap();
        let rel = (got - f64::abs(cx)).abs() / f64::abs(cx);
        worst = worst.max(rel);
        details.push(format!("|{cx}| -> {got:.6}"));
    }
    report(
        4,
        "calibration round trip",
        c_thermal.abs() >= 0.05 && worst <= 0.02,
        format!(
            "thermal c_xx = {c_thermal:.4} at beta {beta}, {}, worst relative error {worst:.2e}",
            details.join(", ")
        ),
        started,
    );
}

#[test]
fn criterion_5_nv_peak_position() {
    let started = Instant::now();
    let analysis = Analysis::default();
    let (h, config) = nv_setup(1e-4);
    let r = gibbs_state(&h, NV_BETA, nv_structure()).unwrap();
    let run = run_prepsy_detailed(&r, &config).unwrap();
    let d = difference_signals(&run.signals).unwrap().remove(0);
    let spec = analysis.spectrum(&d).unwrap();
    let peaks = positive_quadrant(&detect_peaks(&spec, analysis.peak_threshold).unwrap());
    let (b1, b2) = spec.native_bin;
    let hit = peaks.iter().find(|p| (p.f1 - 0.004).abs() <= b1 && (p.f2 - 0.004).abs() <= b2);
    report(
        5,
        "NV peak position",
        hit.is_some() && !config.evolution.is_closed(),
        format!(
            "peak {:?} within bin ({b1}, {b2}) of (0.004, 0.004); trace drift {:.1e}, min eigenvalue {:.1e}",
            hit.map(|p| (p.f1, p.f2)),
            run.diagnostics.max_trace_drift,
            run.diagnostics.min_eigenvalue
        ),
        started,
    );
}

#[test]
fn criterion_6_level_and_transition_counting() {
    let started = Instant::now();
    let xi = 0.001;
    let table = enumerate_levels(6, xi).unwrap();
    let multiplets = table.multiplet_count();
    let transitions = table.distinct_transition_energies(1e-9).len();

    // Brute force: distinct eigenvalues of the 64-dimensional Hamiltonian.
    let mut eig = herm_eigvals(&nv_collective_hamiltonian(6, xi).unwrap()).unwrap();
    eig.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let numeric = eig.len();
    let enumerated = table.distinct_energies(1e-9).len();
    report(
        6,
        "level and transition counting",
        multiplets == 10 && transitions == 12 && numeric == enumerated,
        format!(
            "{multiplets} (j,|m|) multiplets (expect 10), {transitions} transition energies (expect 12), \
             {numeric} distinct numeric energies (accidental degeneracy merges two multiplets)"
        ),
        started,
    );
}

#[test]
fn criterion_7_appendix_oracles() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    // (a) Correlation retained by each projection equals the shift of the
    // conditioned environment away from τ.
    let mut worst_a = 0.0f64;
    for k in 0..20 {
        let env = 2 + k % 2;
        let r = random_state(&mut rng, HilbertStructure::bipartite(2, env));
        let d = decompose(&r).unwrap();
        let m = random_vector(&mut rng, 2);
        let (prepared, p) = conditional_prepare(&r, &m, &StateVector::axis(Axis::PlusZ)).unwrap();
        let sigma = prepared.reduce(&[1]).unwrap();
        let shift = &sigma.matrix().scale_real(p) - &d.tau.matrix().scale_real(p);
        let kept = retained_correlation(&d.chi, &m, r.structure()).unwrap();
        worst_a = worst_a.max(kept.max_abs_diff(&shift));
    }

    // (b) Analytic derivative against centered differences of the full pipeline.
    let r0 = random_state(&mut rng, HilbertStructure::qubits(2));
    let eps = 1e-6;
    let mut worst_b = 0.0f64;
    for _ in 0..10 {
        let (a, b) = loop {
            let a = rng.random_range(0..4usize);
            let b = rng.random_range(0..4usize);
            if a != b {
                break (a, b);
            }
        };
        let el = ChiElement::new(a / 2, b / 2, a % 2, b % 2);
        let t1 = rng.random_range(0.05..1.5);
        let t2 = rng.random_range(0.05..1.5);
        let projection = rng.random_range(0..2usize);
        let mut config = toy_config(2);
        config.t1 = TimeGrid::new(2, t1).unwrap();
        config.t2 = TimeGrid::new(2, t2).unwrap();

        let analytic = signal_chi_derivative(&r0, &config, projection, el, t1, t2).unwrap();
        let direction = el.hermitian_direction(2, 2);
        let at = |s: f64| {
            let m = r0.matrix() + &direction.scale_real(s);
            let r = DensityMatrix::new(m, r0.structure().clone()).unwrap();
            run_prepsy(&r, &config).unwrap()[projection].get(1, 1)
        };
        let numeric = (at(eps) - at(-eps)) / (2.0 * eps);
        let err = if analytic.abs() > 1e-6 {
            (numeric - analytic).abs() / analytic.abs()
        } else {
            (numeric - analytic).abs() / 1e-5
        };
        worst_b = worst_b.max(err);
    }
    report(
        7,
        "appendix oracles",
        worst_a <= 1e-10 && worst_b <= 1e-5,
        format!("(a) max retained-correlation mismatch {worst_a:.2e} over 20 states; (b) max relative derivative error {worst_b:.2e} over 10 elements"),
        started,
    );
}

#[test]
fn criterion_8_dynamics_integrity() {
    let started = Instant::now();
    let s2 = HilbertStructure::qubits(2);
    let h = toy_h();
    let decay = DissipatorChannel::new(embed(&pauli::lowering(), &s2, 0).unwrap(), 0.3).unwrap();
    let dephase = DissipatorChannel::new(embed(&pauli::z(), &s2, 1).unwrap(), 0.2).unwrap();
    let rho0 = build_maximally_mixed_marginal([-0.6, 0.2, 0.1]).unwrap();

    // Order: errors at dt, dt/2, dt/4 against a fine reference.
    let t = 0.5;
    let open =
        |dt: f64| EvolutionSpec::from_frequency_hamiltonian(&h, vec![decay.clone(), dephase.clone()], dt).unwrap();
    let reference = evolve_integrated(&rho0, &open(0.008 / 32.0), t).unwrap();
    let errs: Vec<f64> = [0.008, 0.004, 0.002]
        .iter()
        .map(|&dt| evolve_integrated(&rho0, &open(dt), t).unwrap().matrix().max_abs_diff(reference.matrix()))
        .collect();
    let order = (errs[0] / errs[1]).log2().min((errs[1] / errs[2]).log2());

    // Trace and positivity along an open trajectory.
    let (mut drift, mut min_eig) = (0.0f64, f64::INFINITY);
    let spec = open(0.004);
    let mut rho = rho0.clone();
    for _ in 0..50 {
        rho = evolve_integrated(&rho, &spec, 0.1).unwrap();
        let (d, m) = state_diagnostics(rho.matrix());
        drift = drift.max(d);
        min_eig = min_eig.min(m);
    }

    // Closed system: integrator against the eigenbasis propagator.
    let closed = EvolutionSpec::from_frequency_hamiltonian(&h, vec![], 0.004).unwrap();
    let closed_gap = evolve_integrated(&rho0, &closed, 2.0)
        .unwrap()
        .matrix()
        .max_abs_diff(evolve(&rho0, &closed, 2.0).unwrap().matrix());

    // Single-qubit decay: population of |1⟩ falls as e^{−2γt}.
    let s1 = HilbertStructure::new(vec![2]).unwrap();
    let gamma = 0.4;
    let qubit = EvolutionSpec::new(
        ComplexMatrix::zeros(2, 2),
        vec![DissipatorChannel::new(pauli::lowering(), gamma).unwrap()],
        0.01,
    )
    .unwrap();
    let excited = DensityMatrix::pure(&Axis::MinusZ.ket(), s1).unwrap();
    let mut decay_err = 0.0f64;
    for k in 1..=10 {
        let tk = 0.3 * k as f64;
        let p1 = evolve_integrated(&excited, &qubit, tk).unwrap().matrix()[(1, 1)].re;
        decay_err = decay_err.max((p1 - (-2.0 * gamma * tk).exp()).abs());
    }

    let passed = drift <= 1e-8 && min_eig >= -1e-8 && order >= 3.5 && closed_gap <= 1e-6 && decay_err <= 1e-6;
    report(
        8,
        "dynamics integrity",
        passed,
        format!(
            "trace drift {drift:.1e}, min eigenvalue {min_eig:.1e}, observed RK4 order {order:.2}, \
             integrator vs propagator {closed_gap:.1e}, decay vs closed form {decay_err:.1e}"
        ),
        started,
    );
}

#[test]
fn criterion_9_pairwise_collective_equivalence() {
    let started = Instant::now();
    let xi = 0.001;
    let mut worst = 0.0f64;
    let mut offsets = Vec::new();
    for n in 2..=6 {
        let a = herm_eigvals(&nv_pairwise_hamiltonian(&NvCavityParams::uniform(n, xi)).unwrap()).unwrap();
        let b = herm_eigvals(&nv_collective_hamiltonian(n, xi).unwrap()).unwrap();
        let offset = a.iter().zip(&b).map(|(x, y)| x - y).sum::<f64>() / a.len() as f64;
        offsets.push(offset);
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y - offset).abs());
        }
    }
    report(
        9,
        "pairwise/collective equivalence",
        worst <= 1e-9,
        format!("max deviation {worst:.2e} after constant offsets {offsets:?}"),
        started,
    );
}

#[test]
fn fft_window_variant_keeps_toy_peaks() {
    // The Hann-windowed analysis of the detection run still resolves a gap pair.
    let r = build_maximally_mixed_marginal([-0.8, 0.0, 0.0]).unwrap();
    let d = difference_signals(&run_prepsy(&r, &toy_config(64)).unwrap()).unwrap().remove(0);
    let spec = fft2(&d, Window::Hann, 2).unwrap();
    assert!(!positive_quadrant(&detect_peaks(&spec, 0.3).unwrap()).is_empty());
}
