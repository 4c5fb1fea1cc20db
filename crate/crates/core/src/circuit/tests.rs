use super::*;
use crate::collision::CollisionPropagator;
use crate::linalg::{embed, kron_all, max_abs, trace, unitary_exp, C64};
use crate::model::{EnvironmentSpec, ExcitonSystem, LorentzianTerm, Subsystem};
use proptest::prelude::*;

fn table_dimer(env: EnvironmentSpec) -> Model {
    Model::new(ExcitonSystem::dimer(1.55, 1.46, -0.01, 1.0, 1.0).unwrap(), env).unwrap()
}

fn finite() -> EnvironmentSpec {
    EnvironmentSpec::new(vec![LorentzianTerm::finite(0.05908, 0.1, 0.0)])
}

fn mixed_state(d: usize) -> Operator {
    let psi = Operator::from_fn(d, 1, |r, _| C64::new(1.0 + r as f64 * 0.13, (r as f64 * 0.7).sin()));
    let rho = &psi * psi.adjoint() + linalg::identity(d) * C64::new(0.2, 0.0);
    let tr = trace(&rho);
    rho / tr
}

/// Unitary of a gate list on `n` qubits.
fn unitary_of(gates: &[Gate], n: usize) -> Operator {
    let mut st = RegisterState::from_operator(&linalg::identity(1 << n)).unwrap();
    for g in gates {
        st.apply_left(g).unwrap();
    }
    st.to_operator()
}

fn pauli_on(n: usize, placed: &[(usize, Pauli)]) -> Operator {
    let mut factors = vec![linalg::identity(2); n];
    for &(q, p) in placed {
        factors[q] = p.matrix();
    }
    kron_all(&factors)
}

fn exp_pauli(n: usize, placed: &[(usize, Pauli)], phi: f64) -> Operator {
    unitary_exp(&pauli_on(n, placed), phi)
}

#[test]
fn rotation_gates_follow_half_angle_convention() {
    let th = 0.37;
    let cases: Vec<(Gate, Vec<(usize, Pauli)>)> = vec![
        (Gate::RZ { qubit: 1, theta: th }, vec![(1, Pauli::Z)]),
        (Gate::RX { qubit: 2, theta: th }, vec![(2, Pauli::X)]),
        (Gate::RXX { a: 0, b: 2, theta: th }, vec![(0, Pauli::X), (2, Pauli::X)]),
        (Gate::RYY { a: 2, b: 1, theta: th }, vec![(2, Pauli::Y), (1, Pauli::Y)]),
        (Gate::RZX { a: 2, b: 0, theta: th }, vec![(2, Pauli::Z), (0, Pauli::X)]),
    ];
    for (g, placed) in cases {
        let diff = &unitary_of(&[g], 3) - exp_pauli(3, &placed, th / 2.0);
        assert!(max_abs(&diff) < 1e-14, "{g:?}");
    }
}

#[test]
fn controlled_paulis_respect_polarity() {
    let p0 = Operator::from_row_slice(2, 2, &[linalg::ONE, linalg::ZERO, linalg::ZERO, linalg::ZERO]);
    let p1 = Operator::from_row_slice(2, 2, &[linalg::ZERO, linalg::ZERO, linalg::ZERO, linalg::ONE]);
    let id = linalg::identity(2);
    for (pol, fire, idle) in [(Polarity::Closed, &p1, &p0), (Polarity::Open, &p0, &p1)] {
        let cx = unitary_of(&[Gate::CX { control: 0, target: 1, polarity: pol }], 2);
        let want = linalg::kron(fire, &linalg::pauli_x()) + linalg::kron(idle, &id);
        assert!(max_abs(&(&cx - want)) < 1e-15);
        let cy = unitary_of(&[Gate::CY { control: 1, target: 0, polarity: pol }], 2);
        let want = linalg::kron(&linalg::pauli_y(), fire) + linalg::kron(&id, idle);
        assert!(max_abs(&(&cy - want)) < 1e-15);
    }
}

#[test]
fn reset_returns_qubit_to_ground() {
    let rho = mixed_state(4);
    let mut st = RegisterState::from_operator(&rho).unwrap();
    st.reset(1);
    let out = st.to_operator();
    // partial trace over qubit 1 then |0><0|
    let mut reduced = Operator::zeros(2, 2);
    for i in 0..2 {
        for j in 0..2 {
            reduced[(i, j)] = rho[(2 * i, 2 * j)] + rho[(2 * i + 1, 2 * j + 1)];
        }
    }
    let p0 = Operator::from_row_slice(2, 2, &[linalg::ONE, linalg::ZERO, linalg::ZERO, linalg::ZERO]);
    assert!(max_abs(&(&out - linalg::kron(&reduced, &p0))) < 1e-15);
}

#[test]
fn pauli_decomposition_reconstructs_operator() {
    let a = mixed_state(8);
    let terms = pauli_decompose(&a, 0.0).unwrap();
    let mut sum = Operator::zeros(8, 8);
    for (s, c) in &terms {
        sum += s.matrix() * C64::new(*c, 0.0);
    }
    assert!(max_abs(&(&sum - &a)) < 1e-14);
    let x = pauli_decompose(&linalg::pauli_x(), 1e-14).unwrap();
    assert_eq!(x.len(), 1);
    assert_eq!(x[0].0.label(), "X");
    assert!(pauli_decompose(&linalg::sigma_plus(), 1e-14).is_err());
}

#[test]
fn trap_generator_is_four_commuting_strings() {
    let jump = linalg::kron(&linalg::sigma_minus(), &linalg::sigma_plus());
    let g = crate::collision::exchange_generator(&jump);
    let terms = pauli_decompose(&g, 1e-14).unwrap();
    let labels: Vec<(String, f64)> = terms.iter().map(|(s, c)| (s.label(), *c)).collect();
    assert_eq!(
        labels,
        vec![("XXX".into(), 0.25), ("XYY".into(), -0.25), ("YXY".into(), 0.25), ("YYX".into(), 0.25)]
    );
}

#[test]
fn interaction_gate_selection() {
    let model = table_dimer(finite());
    let layout = RegisterLayout::for_model(&model, AncillaScheme::Single);
    let ket = interaction_gates(Side::Ket, Pauli::X, 1, &layout).unwrap();
    assert_eq!(ket, vec![Gate::CX { control: 0, target: 2, polarity: Polarity::Closed }]);
    let bra = interaction_gates(Side::Bra, Pauli::Y, 0, &layout).unwrap();
    assert_eq!(bra, vec![Gate::CY { control: 0, target: 1, polarity: Polarity::Open }]);
    assert!(interaction_gates(Side::Ket, Pauli::Z, 0, &layout).is_err());
    assert!(interaction_gates(Side::Ket, Pauli::X, 2, &layout).is_err());
}

fn angle(g: &Gate) -> f64 {
    match *g {
        Gate::RZ { theta, .. } | Gate::RX { theta, .. } => theta,
        Gate::RXX { theta, .. } | Gate::RYY { theta, .. } | Gate::RZX { theta, .. } => theta,
        _ => 0.0,
    }
}

#[test]
fn trotter_step_angles_and_zero_skipping() {
    let model = table_dimer(finite());
    let layout = RegisterLayout::for_model(&model, AncillaScheme::Single);
    let dt = 0.1;
    let gates = trotter_step_circuit(&model, &layout, &CircuitSettings::new(dt), 0).unwrap();
    let h = model.hbar;
    let g = model.pseudomodes()[0].coupling;
    let expect = vec![
        Gate::RZ { qubit: 1, theta: -1.55 * dt / h },
        Gate::RZ { qubit: 2, theta: -1.46 * dt / h },
        Gate::RXX { a: 1, b: 2, theta: -0.01 * dt / h },
        Gate::RYY { a: 1, b: 2, theta: -0.01 * dt / h },
        Gate::RX { qubit: 3, theta: g * dt / h },
        Gate::RZX { a: 1, b: 3, theta: -g * dt / h },
        Gate::RX { qubit: 4, theta: g * dt / h },
        Gate::RZX { a: 2, b: 4, theta: -g * dt / h },
        Gate::RXX { a: 3, b: 5, theta: (2.0 * 0.1 * dt / h).sqrt() },
        Gate::RYY { a: 3, b: 5, theta: (2.0 * 0.1 * dt / h).sqrt() },
        Gate::Reset(5),
        Gate::RXX { a: 4, b: 5, theta: (2.0 * 0.1 * dt / h).sqrt() },
        Gate::RYY { a: 4, b: 5, theta: (2.0 * 0.1 * dt / h).sqrt() },
        Gate::Reset(5),
    ];
    assert_eq!(gates.len(), expect.len());
    for (g, e) in gates.iter().zip(&expect) {
        assert_eq!((g.name(), g.qubits()), (e.name(), e.qubits()));
        assert!((angle(g) - angle(e)).abs() <= 1e-15, "{g:?} vs {e:?}");
    }
    if let Gate::RXX { theta, .. } = gates[8] {
        assert!((theta - 0.17434).abs() < 5e-5);
    }
    let split = trotter_step_circuit(&model, &layout, &CircuitSettings::new(dt).with_trotter(2, 3), 0).unwrap();
    let rxx = split.iter().filter(|g| matches!(g, Gate::RXX { a: 3, .. })).count();
    assert_eq!(rxx, 3);
    assert_eq!(split.iter().filter(|g| matches!(g, Gate::RZ { .. })).count(), 4);
}

fn circuit_step_on_model(model: &Model, settings: &CircuitSettings, rho: &Operator) -> Operator {
    let layout = RegisterLayout::for_model(model, settings.scheme);
    let map = RegisterMap::new(model, &layout);
    let mut st = RegisterState::from_operator(&map.lift(rho, false).unwrap()).unwrap();
    for g in trotter_step_circuit(model, &layout, settings, 0).unwrap() {
        st.apply(&g).unwrap();
    }
    map.reduce(&st.to_operator())
}

#[test]
fn commuting_step_matches_collision_map_exactly() {
    // Site phases commute with dephasing, relaxation and trap collisions.
    let sys = ExcitonSystem::dimer(1.55, 1.46, 0.0, 1.0, 1.0).unwrap();
    let env = EnvironmentSpec::new(vec![LorentzianTerm::memoryless(0.05)])
        .with_relaxation(vec![0.01, 0.02])
        .with_trap(0, 0.03);
    let model = Model::new(sys, env).unwrap();
    let rho = mixed_state(model.space().dim());
    let dt = 0.5;
    let reference = {
        let mut r = rho.clone();
        CollisionPropagator::for_model(&model, dt).unwrap().step(&mut r);
        r
    };
    for scheme in [AncillaScheme::Single, AncillaScheme::PerPseudomode, AncillaScheme::PerCollision { steps: 1 }] {
        let out = circuit_step_on_model(&model, &CircuitSettings::new(dt).with_scheme(scheme), &rho);
        assert!(max_abs(&(&out - &reference)) < 1e-13, "{scheme:?}");
    }
}

#[test]
fn trotter_error_shrinks_with_hamiltonian_splitting() {
    let model = table_dimer(finite());
    let rho = mixed_state(model.space().dim());
    let dt = 1.0;
    let mut reference = rho.clone();
    CollisionPropagator::for_model(&model, dt).unwrap().step(&mut reference);
    let err = |n: usize| {
        let out = circuit_step_on_model(&model, &CircuitSettings::new(dt).with_trotter(n, 1), &rho);
        linalg::trace_distance(&out, &reference)
    };
    let (e1, e2, e4) = (err(1), err(2), err(4));
    assert!(e1 > 1e-8);
    assert!((e2 / e1 - 0.5).abs() < 0.1, "{e1} {e2}");
    assert!((e4 / e2 - 0.5).abs() < 0.1, "{e2} {e4}");
}

#[test]
fn gray_coded_pseudomode_converges() {
    let env = EnvironmentSpec::new(vec![LorentzianTerm::finite(0.05908, 0.1, 0.02).with_levels(3)]);
    let model = Model::new(ExcitonSystem::monomer(1.5, 1.0).unwrap(), env).unwrap();
    let d = model.space().dim();
    let psi = Operator::from_fn(d, 1, |r, _| if r % 3 == 2 { C64::new(0.0, 0.0) } else { C64::new(1.0, r as f64) });
    let rho = {
        let r = &psi * psi.adjoint();
        let tr = trace(&r);
        r / tr
    };
    let dt = 0.5;
    let mut reference = rho.clone();
    CollisionPropagator::for_model(&model, dt).unwrap().step(&mut reference);
    let err = |n: usize| {
        let out = circuit_step_on_model(&model, &CircuitSettings::new(dt).with_trotter(n, n), &rho);
        linalg::trace_distance(&out, &reference)
    };
    let (e1, e8) = (err(1), err(8));
    assert!(e8 < e1 / 4.0, "{e1} {e8}");
    assert!(e8 < 1e-3, "{e8}");
}

#[test]
fn register_map_round_trip() {
    let env = EnvironmentSpec::new(vec![LorentzianTerm::finite(0.05, 0.1, 0.0).with_levels(4)]).with_trap(1, 0.1);
    let model = table_dimer(env);
    let layout = RegisterLayout::for_model(&model, AncillaScheme::PerPseudomode);
    let map = RegisterMap::new(&model, &layout);
    let rho = mixed_state(model.space().dim());
    let lifted = map.lift(&rho, false).unwrap();
    assert!((trace(&lifted) - linalg::ONE).norm() < 1e-14);
    assert!(max_abs(&(&map.reduce(&lifted) - &rho)) < 1e-15);
    let rest = map.lift(&rho, true).unwrap();
    assert_eq!(rest.nrows(), 1 << (layout.n_qubits() - 1));
    assert!(max_abs(&(&map.reduce(&rest) - &rho)) < 1e-15);
    // site 1 excitation lands on qubit s2
    let pop = model.site_population(1);
    let reg_pop = map.lift(&pop, false).unwrap();
    let q = layout.n_qubits();
    let bit = 1usize << (q - 1 - layout.system(1));
    for i in 0..reg_pop.nrows() {
        let v = reg_pop[(i, i)].re;
        assert!(v == 0.0 || i & bit != 0);
    }
}

/// `Tr(P_last Phi_M(... P_1 rho ...))` with ket events acting on the left and
/// bra events on the right, using the collision map between events.
fn reference_correlator(model: &Model, dt: f64, events: &[PauliEvent], delays: &[f64]) -> C64 {
    let space = model.space();
    let prop = CollisionPropagator::for_model(model, dt).unwrap();
    let mut rho = model.initial_state(None);
    for (m, ev) in events.iter().enumerate() {
        let p = space.embed(&[Subsystem::Site(ev.site)], &ev.pauli.matrix());
        rho = match ev.side {
            SideTag::Ket => &p * &rho,
            SideTag::Bra => &rho * &p,
        };
        if m < delays.len() {
            rho = prop.evolve(&rho, delays[m]).unwrap();
        }
    }
    trace(&rho)
}

fn ev(side: SideTag, pauli: Pauli, site: usize) -> PauliEvent {
    PauliEvent { side, pauli, site }
}

#[test]
fn hadamard_test_reads_operator_trace() {
    // Memoryless dephasing on uncoupled sites keeps the Trotter step exact.
    let sys = ExcitonSystem::dimer(1.55, 1.46, 0.0, 1.0, 0.8).unwrap();
    let model = Model::new(sys, EnvironmentSpec::new(vec![LorentzianTerm::memoryless(0.05)])).unwrap();
    let dt = 0.5;
    let events = [
        ev(SideTag::Ket, Pauli::X, 0),
        ev(SideTag::Bra, Pauli::Y, 1),
        ev(SideTag::Ket, Pauli::Y, 1),
        ev(SideTag::Ket, Pauli::X, 0),
    ];
    let delays = [2.0, 1.0, 3.0];
    let want = reference_correlator(&model, dt, &events, &delays);
    let settings = CircuitSettings::new(dt);
    let mut got = C64::new(0.0, 0.0);
    for (basis, unit) in [(MeasureBasis::X, linalg::ONE), (MeasureBasis::Y, linalg::I)] {
        let circ = build_pathway_circuit(&model, &settings, &events, &delays, basis).unwrap();
        for fast in [true, false] {
            let opts = EmulatorOptions { block_fast_path: fast, ..Default::default() };
            let r = emulate(&circ, EmulationMode::Exact, &opts).unwrap();
            assert_eq!(r.variance, 0.0);
            if fast {
                got += unit * r.expectation;
            }
        }
    }
    assert!((got - want).norm() < 1e-10, "{got} vs {want}");
    assert!(want.norm() > 1e-3);
}

#[test]
fn block_path_matches_full_density_matrix() {
    let model = table_dimer(finite());
    let events = [
        ev(SideTag::Bra, Pauli::X, 1),
        ev(SideTag::Ket, Pauli::Y, 0),
        ev(SideTag::Ket, Pauli::X, 1),
        ev(SideTag::Ket, Pauli::Y, 0),
    ];
    let circ = build_pathway_circuit(&model, &CircuitSettings::new(0.5), &events, &[1.0, 0.5, 1.5], MeasureBasis::Y)
        .unwrap();
    let fast = emulate_coherence(&circ, &EmulatorOptions::default()).unwrap();
    let full = emulate_coherence(&circ, &EmulatorOptions { block_fast_path: false, ..Default::default() }).unwrap();
    assert!((fast - full).norm() < 1e-12);
    assert!(fast.norm() > 1e-3);
}

#[test]
fn ancilla_schemes_agree() {
    let model = table_dimer(finite());
    let events = [ev(SideTag::Ket, Pauli::X, 0), ev(SideTag::Bra, Pauli::X, 1), ev(SideTag::Ket, Pauli::Y, 1)];
    let delays = [0.5, 1.0];
    let values: Vec<C64> = [AncillaScheme::Single, AncillaScheme::PerPseudomode, AncillaScheme::PerCollision { steps: 0 }]
        .into_iter()
        .map(|s| {
            let settings = CircuitSettings::new(0.5).with_scheme(s);
            let c = build_pathway_circuit(&model, &settings, &events, &delays, MeasureBasis::X).unwrap();
            emulate_coherence(&c, &EmulatorOptions::default()).unwrap()
        })
        .collect();
    assert!((values[0] - values[1]).norm() < 1e-12);
    assert!((values[0] - values[2]).norm() < 1e-12);
    let fresh = build_pathway_circuit(
        &model,
        &CircuitSettings::new(0.5).with_scheme(AncillaScheme::PerCollision { steps: 0 }),
        &events,
        &delays,
        MeasureBasis::X,
    )
    .unwrap();
    assert_eq!(gate_census(&fresh).resets, 0);
    assert_eq!(fresh.layout.collision_qubits().len(), 2 * 3);
}

#[test]
fn memory_budget_is_enforced() {
    let model = table_dimer(finite());
    let events = [ev(SideTag::Ket, Pauli::X, 0), ev(SideTag::Ket, Pauli::X, 0)];
    let c = build_pathway_circuit(&model, &CircuitSettings::new(0.5), &events, &[0.5], MeasureBasis::X).unwrap();
    let tight = EmulatorOptions { memory_budget: c.layout.density_matrix_bytes() - 1, ..Default::default() };
    match emulate(&c, EmulationMode::Exact, &tight) {
        Err(Error::MemoryBudget { qubits, required, .. }) => {
            assert_eq!(qubits, 6);
            assert_eq!(required, 16 << 12);
        }
        other => panic!("expected budget error, got {other:?}"),
    }
    let exact = EmulatorOptions { memory_budget: c.layout.density_matrix_bytes(), ..Default::default() };
    assert!(emulate(&c, EmulationMode::Exact, &exact).is_ok());
}

#[test]
fn shot_estimates_are_seeded_and_unbiased() {
    let model = table_dimer(finite());
    let events = [ev(SideTag::Ket, Pauli::X, 0), ev(SideTag::Ket, Pauli::X, 0)];
    let c = build_pathway_circuit(&model, &CircuitSettings::new(0.5), &events, &[3.0], MeasureBasis::X).unwrap();
    let opts = EmulatorOptions::default();
    let exact = emulate(&c, EmulationMode::Exact, &opts).unwrap().expectation;
    let a = emulate(&c, EmulationMode::Shots { shots: 4000, seed: 7 }, &opts).unwrap();
    let b = emulate(&c, EmulationMode::Shots { shots: 4000, seed: 7 }, &opts).unwrap();
    assert_eq!(a, b);
    let n = 400;
    let mean: f64 = (0..n)
        .map(|s| emulate(&c, EmulationMode::Shots { shots: 4000, seed: s }, &opts).unwrap().expectation)
        .sum::<f64>()
        / n as f64;
    let sigma = ((1.0 - exact * exact) / (4000.0 * n as f64)).sqrt();
    assert!((mean - exact).abs() < 5.0 * sigma + 1e-12, "{mean} vs {exact}");
    assert!((a.variance - (1.0 - a.expectation.powi(2)) / 4000.0).abs() < 1e-15);
    assert!(emulate(&c, EmulationMode::Shots { shots: 0, seed: 1 }, &opts).is_err());
}

#[test]
fn validation_rejects_malformed_circuits() {
    let model = table_dimer(finite());
    let layout = RegisterLayout::for_model(&model, AncillaScheme::Single);
    let mut c = CircuitIR::new(layout);
    c.instructions = vec![Gate::Reset(1)];
    assert!(c.validate().is_err());
    c.instructions = vec![Gate::Measure { qubit: 0, basis: MeasureBasis::X }, Gate::Measure { qubit: 0, basis: MeasureBasis::Y }];
    assert!(c.validate().is_err());
    c.instructions = vec![Gate::Measure { qubit: 2, basis: MeasureBasis::X }];
    assert!(c.validate().is_err());
    c.instructions = vec![Gate::RXX { a: 1, b: 1, theta: 0.1 }];
    assert!(c.validate().is_err());
    c.instructions = vec![Gate::H(9)];
    assert!(c.validate().is_err());
    assert!(build_pathway_circuit(&model, &CircuitSettings::new(0.1), &[], &[], MeasureBasis::X).is_err());
    let two = [ev(SideTag::Ket, Pauli::X, 0), ev(SideTag::Ket, Pauli::X, 0)];
    assert!(build_pathway_circuit(&model, &CircuitSettings::new(0.1), &two, &[0.15], MeasureBasis::X).is_err());
}

#[test]
fn census_counts_hopping_pairs() {
    let all_to_all = |n: usize| {
        let couplings = (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { 0.01 }).collect()).collect();
        let sys = ExcitonSystem::new(vec![1.5; n], couplings, vec![1.0; n]).unwrap();
        let model = Model::new(sys, finite()).unwrap();
        let layout = RegisterLayout::for_model(&model, AncillaScheme::Single);
        let gates = trotter_step_circuit(&model, &layout, &CircuitSettings::new(0.1), 0).unwrap();
        census::census_of(layout.n_qubits(), &gates, |q| layout.role(q))
    };
    let c2 = all_to_all(2);
    assert_eq!(c2.system_two_qubit, 2);
    assert_eq!(c2.by_kind["reset"], 2);
    let c8 = all_to_all(8);
    assert_eq!(c8.system_two_qubit, 8 * 7);
    let ratio = all_to_all(32).system_two_qubit as f64 / all_to_all(16).system_two_qubit as f64;
    assert!((ratio - 4.0).abs() < 0.15, "{ratio}");
    let json = serde_json::to_string(&c2).unwrap();
    assert!(json.contains("\"system_two_qubit\":2"));
}

#[test]
fn qasm_export_shape() {
    let model = table_dimer(finite());
    let events = [ev(SideTag::Bra, Pauli::Y, 0), ev(SideTag::Ket, Pauli::X, 1)];
    let mut c = build_pathway_circuit(&model, &CircuitSettings::new(0.1), &events, &[0.2], MeasureBasis::Y).unwrap();
    c.metadata.label = "demo".into();
    let text = export_qasm(&c);
    assert!(text.starts_with(QASM_HEADER));
    assert!(text.contains("qubit[2] s;"));
    assert!(text.contains("x a[0]; cy a[0], s[0]; x a[0];"));
    assert!(text.contains("sdg a[0]; h a[0]; c[0] = measure a[0];"));
    let back = parse_qasm(&text).unwrap();
    assert_eq!(back, c);
    assert!(parse_qasm("h a[0];").is_err());
}

fn arb_gate(n: usize) -> impl Strategy<Value = Gate> {
    let q = 0..n;
    let pair = (0..n, 0..n).prop_filter("distinct", |(a, b)| a != b);
    let angle = -10.0f64..10.0;
    let pol = prop_oneof![Just(Polarity::Closed), Just(Polarity::Open)];
    prop_oneof![
        q.clone().prop_map(Gate::H),
        q.clone().prop_map(Gate::X),
        q.clone().prop_map(Gate::Y),
        (q.clone(), angle.clone()).prop_map(|(qubit, theta)| Gate::RZ { qubit, theta }),
        (q.clone(), angle.clone()).prop_map(|(qubit, theta)| Gate::RX { qubit, theta }),
        (pair.clone(), angle.clone()).prop_map(|((a, b), theta)| Gate::RXX { a, b, theta }),
        (pair.clone(), angle.clone()).prop_map(|((a, b), theta)| Gate::RYY { a, b, theta }),
        (pair.clone(), angle).prop_map(|((a, b), theta)| Gate::RZX { a, b, theta }),
        (pair.clone(), pol.clone()).prop_map(|((control, target), polarity)| Gate::CX { control, target, polarity }),
        (pair, pol).prop_map(|((control, target), polarity)| Gate::CY { control, target, polarity }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn qasm_round_trip(
        gates in prop::collection::vec(arb_gate(7), 0..40),
        basis in prop_oneof![Just(MeasureBasis::X), Just(MeasureBasis::Y)],
        scheme in prop_oneof![Just(AncillaScheme::Single), Just(AncillaScheme::PerPseudomode)],
        label in "[a-z0-9_]{0,12}",
        delays in prop::collection::vec(0.0f64..500.0, 0..3),
        shots in 0u64..100000,
    ) {
        let model = table_dimer(finite());
        let mut c = CircuitIR::new(RegisterLayout::for_model(&model, scheme));
        let n = c.n_qubits();
        c.instructions = gates.into_iter().filter(|g| g.qubits().iter().all(|&q| q < n)).collect();
        c.instructions.push(Gate::Reset(c.layout.collision_ancilla(0, 0)));
        c.instructions.push(Gate::Measure { qubit: 0, basis });
        c.metadata = CircuitMetadata { label, delays, shots };
        let back = parse_qasm(&export_qasm(&c)).unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn pauli_exponential_synthesis(
        string in prop::collection::vec(prop_oneof![Just(Pauli::I), Just(Pauli::X), Just(Pauli::Y), Just(Pauli::Z)], 4),
        phi in -3.0f64..3.0,
    ) {
        let placed: Vec<(usize, Pauli)> = vec![(2, string[0]), (0, string[1]), (3, string[2]), (1, string[3])];
        let gates = pauli_exponential(&placed, phi);
        let u = unitary_of(&gates, 4);
        let mut want = exp_pauli(4, &placed, phi);
        if placed.iter().all(|&(_, p)| p == Pauli::I) {
            // global phase only
            want = linalg::identity(16);
        }
        prop_assert!(max_abs(&(&u - &want)) < 1e-12);
    }

    #[test]
    fn block_emulation_matches_full(
        gates in prop::collection::vec(arb_gate(4), 1..25),
        seed_sites in prop::collection::vec((0usize..3, any::<bool>(), any::<bool>()), 1..4),
    ) {
        // Random unitaries on qubits 1..4 interleaved with controlled Paulis.
        let layout = RegisterLayout::from_parts(3, &[1], 1, AncillaScheme::Single, false);
        let mut c = CircuitIR::new(layout);
        c.instructions.push(Gate::H(0));
        let chunk = gates.len().div_ceil(seed_sites.len());
        for (k, &(site, ket, y)) in seed_sites.iter().enumerate() {
            let polarity = if ket { Polarity::Closed } else { Polarity::Open };
            let target = 1 + site;
            c.instructions.push(if y { Gate::CY { control: 0, target, polarity } } else { Gate::CX { control: 0, target, polarity } });
            for g in gates.iter().skip(k * chunk).take(chunk) {
                let shifted = match *g {
                    Gate::CX { control, target, polarity } => Gate::CX { control: control + 1, target: target + 1, polarity },
                    Gate::CY { control, target, polarity } => Gate::CY { control: control + 1, target: target + 1, polarity },
                    Gate::H(q) => Gate::H(q + 1),
                    Gate::X(q) => Gate::X(q + 1),
                    Gate::Y(q) => Gate::Y(q + 1),
                    Gate::RZ { qubit, theta } => Gate::RZ { qubit: qubit + 1, theta },
                    Gate::RX { qubit, theta } => Gate::RX { qubit: qubit + 1, theta },
                    Gate::RXX { a, b, theta } => Gate::RXX { a: a + 1, b: b + 1, theta },
                    Gate::RYY { a, b, theta } => Gate::RYY { a: a + 1, b: b + 1, theta },
                    Gate::RZX { a, b, theta } => Gate::RZX { a: a + 1, b: b + 1, theta },
                    other => other,
                };
                c.instructions.push(shifted);
            }
            c.instructions.push(Gate::Reset(5));
        }
        c.instructions.push(Gate::Measure { qubit: 0, basis: MeasureBasis::X });
        let fast = emulate_coherence(&c, &EmulatorOptions::default()).unwrap();
        let full = emulate_coherence(&c, &EmulatorOptions { block_fast_path: false, ..Default::default() }).unwrap();
        prop_assert!((fast - full).norm() < 1e-12);
    }
}

#[test]
fn rest_register_lift_feeds_block_state() {
    let model = table_dimer(finite());
    let layout = RegisterLayout::for_model(&model, AncillaScheme::Single);
    let map = RegisterMap::new(&model, &layout);
    let rho = model.initial_state(None);
    let block = BlockState::from_rest(&map.lift(&rho, true).unwrap()).unwrap();
    let fresh = BlockState::after_hadamard(layout.n_qubits());
    assert_eq!(block, fresh);
    assert!((fresh.coherence() - linalg::ONE).norm() < 1e-15);
    let _ = embed(&[2], &[0], &linalg::pauli_x());
}

