use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::circuit::{
    build_pathway_circuit, emulate_coherence, interaction_gates, sample_pauli, trotter_step_circuit, BlockState,
    CircuitSettings, EmulationMode, EmulatorOptions, Gate, MeasureBasis, Pauli, PauliEvent,
};
use crate::collision::{CollisionPropagator, CollisionStepSpec};
use crate::dynamics::{dipole_factor, DipoleTarget, Integrator, Propagator, Side};
use crate::error::{Error, Result};
use crate::linalg::{Operator, C64};
use crate::model::{AncillaScheme, Model, RegisterLayout};

use super::grid::{DelayGrid, Processing, Provenance, ResponseGrid};
use super::{decompose_site_basis, PathwaySpec, Pruning, SiteBasisPathway};

/// Propagation used between interactions by the classical engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassicalDynamics {
    Lindblad(Integrator),
    Collision { hamiltonian_trotter_steps: usize, collision_trotter_steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalOptions {
    /// Propagation step (fs).
    pub dt: f64,
    pub dynamics: ClassicalDynamics,
}

impl ClassicalOptions {
    /// Lindblad propagation with the exact step exponential.
    pub fn new(dt: f64) -> Self {
        Self { dt, dynamics: ClassicalDynamics::Lindblad(Integrator::Exponential) }
    }

    pub fn with_dynamics(mut self, dynamics: ClassicalDynamics) -> Self {
        self.dynamics = dynamics;
        self
    }
}

/// How circuit readouts are produced for a delay grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuantumStrategy {
    /// Evolve the Hadamard-test block once per delay prefix and read every
    /// grid point off the shared evolution.
    #[default]
    Scan,
    /// Build and emulate an independent circuit for each grid point.
    PerCircuit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumOptions {
    pub settings: CircuitSettings,
    pub mode: EmulationMode,
    pub pruning: Pruning,
    pub emulator: EmulatorOptions,
    pub strategy: QuantumStrategy,
}

impl QuantumOptions {
    pub fn exact(dt: f64) -> Self {
        Self {
            settings: CircuitSettings::new(dt),
            mode: EmulationMode::Exact,
            pruning: Pruning::None,
            emulator: EmulatorOptions::default(),
            strategy: QuantumStrategy::Scan,
        }
    }

    pub fn shots(dt: f64, shots: u64, seed: u64) -> Self {
        Self { mode: EmulationMode::Shots { shots, seed }, ..Self::exact(dt) }
    }

    pub fn with_settings(mut self, settings: CircuitSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn with_pruning(mut self, pruning: Pruning) -> Self {
        self.pruning = pruning;
        self
    }

    pub fn with_strategy(mut self, strategy: QuantumStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    fn provenance(&self) -> Provenance {
        let s = &self.settings;
        match self.mode {
            EmulationMode::Exact => Provenance::CircuitExact {
                hamiltonian_trotter_steps: s.hamiltonian_trotter_steps,
                collision_trotter_steps: s.collision_trotter_steps,
                scheme: s.scheme,
                pruning: self.pruning,
            },
            EmulationMode::Shots { shots, seed } => Provenance::CircuitShots {
                hamiltonian_trotter_steps: s.hamiltonian_trotter_steps,
                collision_trotter_steps: s.collision_trotter_steps,
                scheme: s.scheme,
                pruning: self.pruning,
                shots,
                seed,
            },
        }
    }
}

/// Engine that evolves a state through a pathway: the first interaction on
/// preparation, then alternating delays and interactions, closing with a
/// readout of the final emission.
trait ScanEngine: Sync {
    type State: Clone;
    fn prepare(&self) -> Result<Self::State>;
    fn interact(&self, state: &mut Self::State, event: usize) -> Result<()>;
    fn advance(&self, state: &mut Self::State, steps: usize) -> Result<()>;
    fn readout(&self, state: &Self::State) -> Result<C64>;
}

/// Readouts on the full grid in row-major order. Each delay prefix is
/// propagated once and shared by all later delays.
fn scan<E: ScanEngine>(engine: &E, steps: &[Vec<usize>]) -> Result<Vec<C64>> {
    let mut out = Vec::with_capacity(steps.iter().map(Vec::len).product());
    scan_level(engine, engine.prepare()?, 0, steps, &mut out)?;
    Ok(out)
}

fn scan_level<E: ScanEngine>(
    engine: &E,
    mut state: E::State,
    level: usize,
    steps: &[Vec<usize>],
    out: &mut Vec<C64>,
) -> Result<()> {
    let mut done = 0;
    for &n in &steps[level] {
        engine.advance(&mut state, n - done)?;
        done = n;
        if level + 1 == steps.len() {
            out.push(engine.readout(&state)?);
        } else {
            let mut next = state.clone();
            engine.interact(&mut next, level + 1)?;
            scan_level(engine, next, level + 1, steps, out)?;
        }
    }
    Ok(())
}

enum Stepper {
    Lindblad(Propagator),
    Collision(CollisionPropagator),
}

impl Stepper {
    fn new(model: &Model, options: &ClassicalOptions) -> Result<Self> {
        Ok(match options.dynamics {
            ClassicalDynamics::Lindblad(integrator) => {
                Stepper::Lindblad(Propagator::for_model(model, options.dt, integrator)?)
            }
            ClassicalDynamics::Collision { hamiltonian_trotter_steps, collision_trotter_steps } => {
                let spec = CollisionStepSpec::for_model(model, options.dt)
                    .with_trotter(hamiltonian_trotter_steps, collision_trotter_steps);
                Stepper::Collision(CollisionPropagator::new(model, spec)?)
            }
        })
    }

    fn label(options: &ClassicalOptions) -> String {
        match options.dynamics {
            ClassicalDynamics::Lindblad(Integrator::Exponential) => "lindblad-exponential".into(),
            ClassicalDynamics::Lindblad(Integrator::Rk4 { substeps }) => format!("lindblad-rk4x{substeps}"),
            ClassicalDynamics::Collision { hamiltonian_trotter_steps, collision_trotter_steps } => {
                format!("collision-{hamiltonian_trotter_steps}x{collision_trotter_steps}")
            }
        }
    }
}

struct ClassicalEngine {
    stepper: Stepper,
    rho0: Operator,
    events: Vec<(Side, Operator)>,
}

impl ClassicalEngine {
    fn apply(&self, rho: &Operator, event: usize) -> Operator {
        let (side, op) = &self.events[event];
        match side {
            Side::Ket => op * rho,
            Side::Bra => rho * op,
        }
    }
}

impl ScanEngine for ClassicalEngine {
    type State = Operator;

    fn prepare(&self) -> Result<Operator> {
        Ok(self.apply(&self.rho0, 0))
    }

    fn interact(&self, state: &mut Operator, event: usize) -> Result<()> {
        *state = self.apply(state, event);
        Ok(())
    }

    fn advance(&self, state: &mut Operator, steps: usize) -> Result<()> {
        match &self.stepper {
            Stepper::Lindblad(p) => p.advance(state, steps),
            Stepper::Collision(c) => {
                c.advance(state, steps);
                Ok(())
            }
        }
    }

    /// `Tr(O rho)` for the final ket-side operator `O`.
    fn readout(&self, state: &Operator) -> Result<C64> {
        let op = &self.events.last().expect("pathway has events").1;
        let n = op.nrows();
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n {
            for i in 0..n {
                acc += op[(i, j)] * state[(j, i)];
            }
        }
        Ok(acc)
    }
}

fn pauli_on_site(model: &Model, pauli: Pauli, site: usize) -> Result<Operator> {
    if site >= model.n_sites() {
        return Err(Error::InvalidArgument(format!("site {site} out of range")));
    }
    let up = model.site_ladder(site, true);
    let down = model.site_ladder(site, false);
    match pauli {
        Pauli::X => Ok(up + down),
        Pauli::Y => Ok((up - down) * C64::new(0.0, 1.0)),
        other => Err(Error::Unsupported(format!("interaction with Pauli {other:?}"))),
    }
}

/// Classical evaluation of a pathway with the full dipole operators.
pub fn evaluate_classical(
    pathway: &PathwaySpec,
    grid: &DelayGrid,
    model: &Model,
    options: &ClassicalOptions,
) -> Result<ResponseGrid> {
    check_order(pathway, grid)?;
    let steps = grid.step_counts(options.dt)?;
    let events = pathway
        .all_events()
        .iter()
        .map(|e| (e.side, dipole_factor(model, e.side, e.excite, DipoleTarget::Full)))
        .collect();
    let engine = ClassicalEngine { stepper: Stepper::new(model, options)?, rho0: model.initial_state(None), events };
    let prefactor = pathway.prefactor();
    let values = scan(&engine, &steps)?.into_iter().map(|c| c * prefactor).collect();
    Ok(ResponseGrid {
        name: pathway.name().to_string(),
        axes: grid.axes().to_vec(),
        dt: options.dt,
        hbar: model.hbar,
        coherence: pathway.coherence_orders(),
        values,
        variance: None,
        provenance: Provenance::Classical { dynamics: Stepper::label(options) },
        processing: Processing::default(),
    })
}

/// Classical correlator `Tr(P_{M+1} U(.. P_1 rho0 ..))` of one site-basis
/// pathway, without dipole weights, Pauli coefficients or prefactor.
pub fn site_basis_correlators(
    pathway: &SiteBasisPathway,
    grid: &DelayGrid,
    model: &Model,
    options: &ClassicalOptions,
) -> Result<Vec<C64>> {
    check_order(&pathway.pathway, grid)?;
    let steps = grid.step_counts(options.dt)?;
    let events = pathway
        .events
        .iter()
        .map(|e| Ok((Side::from(e.side), pauli_on_site(model, e.pauli, e.site)?)))
        .collect::<Result<_>>()?;
    let engine = ClassicalEngine { stepper: Stepper::new(model, options)?, rho0: model.initial_state(None), events };
    scan(&engine, &steps)
}

struct BlockEngine {
    n_qubits: usize,
    step_gates: Vec<Gate>,
    interactions: Vec<Vec<Gate>>,
}

impl ScanEngine for BlockEngine {
    type State = BlockState;

    fn prepare(&self) -> Result<BlockState> {
        let mut state = BlockState::after_hadamard(self.n_qubits);
        self.interact(&mut state, 0)?;
        Ok(state)
    }

    fn interact(&self, state: &mut BlockState, event: usize) -> Result<()> {
        self.interactions[event].iter().try_for_each(|g| state.apply(g))
    }

    fn advance(&self, state: &mut BlockState, steps: usize) -> Result<()> {
        for _ in 0..steps {
            for g in &self.step_gates {
                state.apply(g)?;
            }
        }
        Ok(())
    }

    fn readout(&self, state: &BlockState) -> Result<C64> {
        let mut last = state.clone();
        self.interact(&mut last, self.interactions.len() - 1)?;
        Ok(last.coherence())
    }
}

fn check_order(pathway: &PathwaySpec, grid: &DelayGrid) -> Result<()> {
    if grid.order() != pathway.order() {
        return Err(Error::DimensionMismatch(format!(
            "pathway {} of order {} on a grid with {} delay axes",
            pathway.name(),
            pathway.order(),
            grid.order()
        )));
    }
    Ok(())
}

fn check_budget(layout: &RegisterLayout, options: &EmulatorOptions) -> Result<()> {
    let required = layout.density_matrix_bytes();
    if required > options.memory_budget {
        return Err(Error::MemoryBudget { qubits: layout.n_qubits(), required, budget: options.memory_budget });
    }
    Ok(())
}

/// Exact Hadamard-test readouts `<X_a> + i <Y_a>` of one site-basis pathway
/// at every grid point.
pub fn hadamard_readouts(
    pathway: &SiteBasisPathway,
    grid: &DelayGrid,
    model: &Model,
    options: &QuantumOptions,
) -> Result<Vec<C64>> {
    check_order(&pathway.pathway, grid)?;
    let settings = &options.settings;
    let steps = grid.step_counts(settings.dt)?;
    let per_circuit = options.strategy == QuantumStrategy::PerCircuit
        || matches!(settings.scheme, AncillaScheme::PerCollision { .. });
    if per_circuit {
        return per_circuit_readouts(pathway, grid, model, options);
    }
    let layout = RegisterLayout::for_model(model, settings.scheme);
    check_budget(&layout, &options.emulator)?;
    let step_gates = trotter_step_circuit(model, &layout, settings, 0)?;
    let interactions = pathway
        .events
        .iter()
        .map(|e| interaction_gates(e.side.into(), e.pauli, e.site, &layout))
        .collect::<Result<_>>()?;
    let engine = BlockEngine { n_qubits: layout.n_qubits(), step_gates, interactions };
    scan(&engine, &steps)
}

fn per_circuit_readouts(
    pathway: &SiteBasisPathway,
    grid: &DelayGrid,
    model: &Model,
    options: &QuantumOptions,
) -> Result<Vec<C64>> {
    let axes = grid.axes();
    let shape = grid.shape();
    let events: &[PauliEvent] = &pathway.events;
    (0..grid.len())
        .map(|flat| {
            let mut rem = flat;
            let mut delays = vec![0.0; shape.len()];
            for m in (0..shape.len()).rev() {
                delays[m] = axes[m][rem % shape[m]];
                rem /= shape[m];
            }
            let circuit = build_pathway_circuit(model, &options.settings, events, &delays, MeasureBasis::X)?;
            emulate_coherence(&circuit, &options.emulator)
        })
        .collect()
}

/// Shot-sampled readout of one grid point: the X- and Y-basis circuits are
/// each run with the full shot count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotReadout {
    pub x: f64,
    pub y: f64,
    pub var_x: f64,
    pub var_y: f64,
}

impl ShotReadout {
    pub fn value(&self) -> C64 {
        C64::new(self.x, self.y)
    }
}

/// Samples both measurement circuits at every point from their exact
/// readouts, drawing X then Y per point from `rng` in grid order.
pub fn sample_readouts(exact: &[C64], shots: u64, rng: &mut impl rand::Rng) -> Result<Vec<ShotReadout>> {
    exact
        .iter()
        .map(|c| {
            let (x, var_x) = sample_pauli(c.re, shots, rng)?;
            let (y, var_y) = sample_pauli(c.im, shots, rng)?;
            Ok(ShotReadout { x, y, var_x, var_y })
        })
        .collect()
}

/// Circuit evaluation of a pathway: decomposes it into site-basis pathways,
/// obtains their Hadamard-test readouts (exact or shot-sampled) and sums them
/// with dipole weights, Pauli coefficients and the pathway prefactor.
///
/// Shot noise for site-basis pathway `j` is drawn from the ChaCha20 stream
/// selected by the pathway and `j`, so results do not depend on scheduling.
pub fn evaluate_quantum(
    pathway: &PathwaySpec,
    grid: &DelayGrid,
    model: &Model,
    options: &QuantumOptions,
) -> Result<ResponseGrid> {
    check_order(pathway, grid)?;
    let layout = RegisterLayout::for_model(model, options.settings.scheme);
    check_budget(&layout, &options.emulator)?;
    let terms: Vec<(usize, SiteBasisPathway)> = decompose_site_basis(pathway, model, options.pruning)?
        .into_iter()
        .enumerate()
        .filter(|(_, sb)| sb.coefficient().norm() > 0.0)
        .collect();
    let readouts: Vec<(Vec<C64>, Option<Vec<f64>>)> = terms
        .par_iter()
        .map(|(j, sb)| {
            let exact = hadamard_readouts(sb, grid, model, options)?;
            match options.mode {
                EmulationMode::Exact => Ok((exact, None)),
                EmulationMode::Shots { shots, seed } => {
                    let mut rng = ChaCha20Rng::seed_from_u64(seed);
                    rng.set_stream((pathway.tag() << 32) | *j as u64);
                    let sampled = sample_readouts(&exact, shots, &mut rng)?;
                    Ok((
                        sampled.iter().map(ShotReadout::value).collect(),
                        Some(sampled.iter().map(|s| s.var_x + s.var_y).collect()),
                    ))
                }
            }
        })
        .collect::<Result<_>>()?;
    let prefactor = pathway.prefactor();
    let mut values = vec![C64::new(0.0, 0.0); grid.len()];
    let mut variance = matches!(options.mode, EmulationMode::Shots { .. }).then(|| vec![0.0; grid.len()]);
    for ((_, sb), (vals, vars)) in terms.iter().zip(&readouts) {
        let c = sb.coefficient() * prefactor;
        for (v, r) in values.iter_mut().zip(vals) {
            *v += c * r;
        }
        if let (Some(total), Some(vars)) = (variance.as_mut(), vars) {
            for (t, s) in total.iter_mut().zip(vars) {
                *t += c.norm_sqr() * s;
            }
        }
    }
    Ok(ResponseGrid {
        name: pathway.name().to_string(),
        axes: grid.axes().to_vec(),
        dt: options.settings.dt,
        hbar: model.hbar,
        coherence: pathway.coherence_orders(),
        values,
        variance,
        provenance: options.provenance(),
        processing: Processing::default(),
    })
}
