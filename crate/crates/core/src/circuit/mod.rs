//! Gate-level circuits for the Hadamard-test response algorithm.
//!
//! A pathway circuit puts the response ancilla `a` in `|+>`, interleaves
//! ancilla-controlled Pauli interactions (closed control for ket events,
//! open control for bra events) with Trotterized collision-model steps, and
//! finally measures `a` in the X or Y basis.

mod census;
mod emulator;
mod pauli;
mod qasm;

pub use census::{gate_census, GateCensus};
pub use emulator::{
    emulate, emulate_coherence, BlockState, EmulationMode, EmulationResult, EmulatorOptions, RegisterState,
    DEFAULT_MEMORY_BUDGET,
};
pub(crate) use emulator::sample_pauli;
pub use pauli::{pauli_decompose, pauli_exponential, PauliString};
pub use qasm::{export_qasm, parse_qasm, QASM_HEADER};

use crate::dynamics::Side;
use crate::error::{Error, Result};
use crate::linalg::{self, Operator};
use crate::model::{
    gray_annihilation, gray_encode, gray_number, qubits_for_levels, Subsystem, AncillaScheme, CollisionChannel, Model, QubitRole,
    RegisterLayout,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> Operator {
        match self {
            Pauli::I => linalg::identity(2),
            Pauli::X => linalg::pauli_x(),
            Pauli::Y => linalg::pauli_y(),
            Pauli::Z => linalg::pauli_z(),
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Control polarity: `Closed` fires on `|1>`, `Open` on `|0>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Polarity {
    Closed,
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MeasureBasis {
    X,
    Y,
}

/// One circuit instruction. Rotations follow `R_P(theta) = exp(-i theta P / 2)`;
/// two-qubit rotations act with the first Pauli on the first qubit.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum Gate {
    H(usize),
    X(usize),
    Y(usize),
    CX { control: usize, target: usize, polarity: Polarity },
    CY { control: usize, target: usize, polarity: Polarity },
    RZ { qubit: usize, theta: f64 },
    RX { qubit: usize, theta: f64 },
    RXX { a: usize, b: usize, theta: f64 },
    RYY { a: usize, b: usize, theta: f64 },
    /// `exp(-i theta/2 Z_a X_b)`.
    RZX { a: usize, b: usize, theta: f64 },
    Reset(usize),
    Measure { qubit: usize, basis: MeasureBasis },
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match *self {
            Gate::H(q) | Gate::X(q) | Gate::Y(q) | Gate::Reset(q) => vec![q],
            Gate::RZ { qubit, .. } | Gate::RX { qubit, .. } | Gate::Measure { qubit, .. } => vec![qubit],
            Gate::CX { control, target, .. } | Gate::CY { control, target, .. } => vec![control, target],
            Gate::RXX { a, b, .. } | Gate::RYY { a, b, .. } | Gate::RZX { a, b, .. } => vec![a, b],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Gate::H(_) => "h",
            Gate::X(_) => "x",
            Gate::Y(_) => "y",
            Gate::CX { .. } => "cx",
            Gate::CY { .. } => "cy",
            Gate::RZ { .. } => "rz",
            Gate::RX { .. } => "rx",
            Gate::RXX { .. } => "rxx",
            Gate::RYY { .. } => "ryy",
            Gate::RZX { .. } => "rzx",
            Gate::Reset(_) => "reset",
            Gate::Measure { .. } => "measure",
        }
    }

    pub fn is_two_qubit(&self) -> bool {
        self.qubits().len() == 2
    }
}

#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct CircuitMetadata {
    pub label: String,
    /// Delay times in fs, one per interaction before the final emission.
    pub delays: Vec<f64>,
    pub shots: u64,
}

/// Register layout plus ordered instruction list.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitIR {
    pub layout: RegisterLayout,
    pub instructions: Vec<Gate>,
    pub metadata: CircuitMetadata,
}

impl CircuitIR {
    pub fn new(layout: RegisterLayout) -> Self {
        Self { layout, instructions: Vec::new(), metadata: CircuitMetadata::default() }
    }

    pub fn n_qubits(&self) -> usize {
        self.layout.n_qubits()
    }

    /// Checks indices, reset targets and the single final measurement.
    pub fn validate(&self) -> Result<()> {
        let q = self.n_qubits();
        let mut measures = 0;
        for g in &self.instructions {
            let qs = g.qubits();
            if qs.iter().any(|&x| x >= q) {
                return Err(Error::InvalidArgument(format!("{g:?} addresses a qubit outside the {q}-qubit register")));
            }
            if qs.len() == 2 && qs[0] == qs[1] {
                return Err(Error::InvalidArgument(format!("{g:?} repeats a qubit")));
            }
            match *g {
                Gate::Reset(t) if !matches!(self.layout.role(t), QubitRole::Collision(_)) => {
                    return Err(Error::InvalidArgument(format!("reset of non-ancilla qubit {t}")));
                }
                Gate::Measure { qubit, .. } => {
                    if qubit != self.layout.response_ancilla() {
                        return Err(Error::InvalidArgument("measurement must target the response ancilla".into()));
                    }
                    measures += 1;
                }
                _ => {}
            }
        }
        if measures > 1 {
            return Err(Error::InvalidArgument(format!("{measures} measurements, expected at most one")));
        }
        Ok(())
    }

    pub fn measurement(&self) -> Option<MeasureBasis> {
        self.instructions.iter().find_map(|g| match g {
            Gate::Measure { basis, .. } => Some(*basis),
            _ => None,
        })
    }
}

/// A light-matter interaction resolved to one chromophore and Pauli factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct PauliEvent {
    pub side: SideTag,
    pub pauli: Pauli,
    pub site: usize,
}

/// Serializable mirror of [`Side`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum SideTag {
    Ket,
    Bra,
}

impl From<Side> for SideTag {
    fn from(s: Side) -> Self {
        match s {
            Side::Ket => SideTag::Ket,
            Side::Bra => SideTag::Bra,
        }
    }
}

impl From<SideTag> for Side {
    fn from(s: SideTag) -> Self {
        match s {
            SideTag::Ket => Side::Ket,
            SideTag::Bra => Side::Bra,
        }
    }
}

/// Controlled Pauli from the response ancilla onto system qubit `site`:
/// closed control for ket events, open control for bra events.
pub fn interaction_gates(side: Side, pauli: Pauli, site: usize, layout: &RegisterLayout) -> Result<Vec<Gate>> {
    if site >= layout.n_sites() {
        return Err(Error::InvalidArgument(format!("site {site} out of range")));
    }
    let control = layout.response_ancilla();
    let target = layout.system(site);
    let polarity = match side {
        Side::Ket => Polarity::Closed,
        Side::Bra => Polarity::Open,
    };
    Ok(vec![match pauli {
        Pauli::X => Gate::CX { control, target, polarity },
        Pauli::Y => Gate::CY { control, target, polarity },
        other => return Err(Error::Unsupported(format!("interaction with Pauli {other:?}"))),
    }])
}

/// Settings shared by every circuit built for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitSettings {
    pub dt: f64,
    pub hamiltonian_trotter_steps: usize,
    pub collision_trotter_steps: usize,
    pub scheme: AncillaScheme,
}

impl CircuitSettings {
    pub fn new(dt: f64) -> Self {
        Self { dt, hamiltonian_trotter_steps: 1, collision_trotter_steps: 1, scheme: AncillaScheme::Single }
    }

    pub fn with_trotter(mut self, hamiltonian: usize, collision: usize) -> Self {
        self.hamiltonian_trotter_steps = hamiltonian;
        self.collision_trotter_steps = collision;
        self
    }

    pub fn with_scheme(mut self, scheme: AncillaScheme) -> Self {
        self.scheme = scheme;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step {} must be > 0", self.dt)));
        }
        if self.hamiltonian_trotter_steps == 0 || self.collision_trotter_steps == 0 {
            return Err(Error::InvalidArgument("Trotter step counts must be >= 1".into()));
        }
        Ok(())
    }
}

fn push_rotation(out: &mut Vec<Gate>, g: Gate) {
    let theta = match g {
        Gate::RZ { theta, .. } | Gate::RX { theta, .. } => theta,
        Gate::RXX { theta, .. } | Gate::RYY { theta, .. } | Gate::RZX { theta, .. } => theta,
        _ => 1.0,
    };
    if theta != 0.0 {
        out.push(g);
    }
}

/// Qubits of pseudomode `mode`, most significant code bit first (the order
/// matching Kronecker products of Gray-coded operators).
fn pseudomode_qubits_msb(layout: &RegisterLayout, mode: usize) -> Vec<usize> {
    let mut q = layout.pseudomode_qubits(mode);
    q.reverse();
    q
}

/// Gates of one time step `dt`: `n_T1` repetitions of the Hamiltonian block
/// (site phases, pseudomode phases, hopping, system-pseudomode coupling)
/// followed by the collisions in channel order, each repeated `n_T2` times and
/// followed by a reset when the scheme recycles ancillae. `step` selects the
/// ancillae under the fresh-ancilla scheme.
pub fn trotter_step_circuit(
    model: &Model,
    layout: &RegisterLayout,
    settings: &CircuitSettings,
    step: usize,
) -> Result<Vec<Gate>> {
    settings.validate()?;
    let hbar = model.hbar;
    let n1 = settings.hamiltonian_trotter_steps as f64;
    let n2 = settings.collision_trotter_steps;
    let tau = settings.dt / (hbar * n1);
    let modes = model.pseudomodes();
    let sys = &model.system;

    let mut block = Vec::new();
    for i in 0..sys.n_sites() {
        push_rotation(&mut block, Gate::RZ { qubit: layout.system(i), theta: -sys.energy(i) * tau });
    }
    for (k, pm) in modes.iter().enumerate() {
        if pm.levels == 2 {
            let q = layout.pseudomode_qubits(k)[0];
            push_rotation(&mut block, Gate::RZ { qubit: q, theta: -pm.frequency * tau });
        } else if pm.frequency != 0.0 {
            let h = gray_number(pm.levels) * linalg::C64::new(pm.frequency, 0.0);
            block.extend(pauli_terms_exponential(&h, &pseudomode_qubits_msb(layout, k), tau)?);
        }
    }
    for (i, j, jij) in sys.coupled_pairs() {
        let (a, b) = (layout.system(i), layout.system(j));
        push_rotation(&mut block, Gate::RXX { a, b, theta: jij * tau });
        push_rotation(&mut block, Gate::RYY { a, b, theta: jij * tau });
    }
    for (k, pm) in modes.iter().enumerate() {
        let s = layout.system(pm.site);
        if pm.levels == 2 {
            let p = layout.pseudomode_qubits(k)[0];
            push_rotation(&mut block, Gate::RX { qubit: p, theta: pm.coupling * tau });
            push_rotation(&mut block, Gate::RZX { a: s, b: p, theta: -pm.coupling * tau });
        } else if pm.coupling != 0.0 {
            let a = gray_annihilation(pm.levels);
            let proj = linalg::Operator::from_row_slice(2, 2, &[linalg::ZERO, linalg::ZERO, linalg::ZERO, linalg::ONE]);
            let h = linalg::kron(&proj, &(&a + a.adjoint())) * linalg::C64::new(pm.coupling, 0.0);
            let mut qubits = vec![s];
            qubits.extend(pseudomode_qubits_msb(layout, k));
            block.extend(pauli_terms_exponential(&h, &qubits, tau)?);
        }
    }

    let mut out = Vec::with_capacity(block.len() * settings.hamiltonian_trotter_steps + 8);
    for _ in 0..settings.hamiltonian_trotter_steps {
        out.extend_from_slice(&block);
    }

    for (c, channel) in model.collision_channels().into_iter().enumerate() {
        let ac = layout.collision_ancilla(c, step);
        let mut col = Vec::new();
        match channel {
            CollisionChannel::Pseudomode(k) => {
                let pm = &modes[k];
                let theta = (2.0 * pm.width * settings.dt / hbar).sqrt() / n2 as f64;
                if pm.levels == 2 {
                    let p = layout.pseudomode_qubits(k)[0];
                    push_rotation(&mut col, Gate::RXX { a: p, b: ac, theta });
                    push_rotation(&mut col, Gate::RYY { a: p, b: ac, theta });
                } else {
                    let g = crate::collision::exchange_generator(&gray_annihilation(pm.levels));
                    let mut qubits = pseudomode_qubits_msb(layout, k);
                    qubits.push(ac);
                    col.extend(pauli_terms_exponential(&g, &qubits, theta)?);
                }
            }
            CollisionChannel::Memoryless { site, term } => {
                let gamma = model.environment.terms[term].amplitude;
                let theta = (gamma * settings.dt / hbar).sqrt() / n2 as f64;
                push_rotation(&mut col, Gate::RZX { a: layout.system(site), b: ac, theta });
            }
            CollisionChannel::Relaxation { site } => {
                let rate = model.environment.relaxation_rate(site);
                let theta = (rate * settings.dt / hbar).sqrt() / n2 as f64;
                let s = layout.system(site);
                push_rotation(&mut col, Gate::RXX { a: s, b: ac, theta });
                push_rotation(&mut col, Gate::RYY { a: s, b: ac, theta });
            }
            CollisionChannel::Trap => {
                let trap = model.environment.trap.expect("trap channel without trap");
                let rc = layout.reaction_center().expect("trap without reaction-center qubit");
                let theta = (trap.rate * settings.dt / hbar).sqrt() / n2 as f64;
                let jump = linalg::kron(&linalg::sigma_minus(), &linalg::sigma_plus());
                let g = crate::collision::exchange_generator(&jump);
                col.extend(pauli_terms_exponential(&g, &[layout.system(trap.site), rc, ac], theta)?);
            }
        }
        for _ in 0..n2 {
            out.extend_from_slice(&col);
        }
        if layout.resets_ancillae() {
            out.push(Gate::Reset(ac));
        }
    }
    Ok(out)
}

/// `exp(-i tau h)` for Hermitian `h` on `qubits` (first = most significant),
/// as a first-order product over its Pauli terms.
fn pauli_terms_exponential(h: &Operator, qubits: &[usize], tau: f64) -> Result<Vec<Gate>> {
    let mut out = Vec::new();
    for (string, coeff) in pauli_decompose(h, 1e-14)? {
        let placed: Vec<(usize, Pauli)> = qubits.iter().copied().zip(string.0.iter().copied()).collect();
        out.extend(pauli_exponential(&placed, coeff * tau));
    }
    Ok(out)
}

/// Builds the measurement circuit of one site-basis pathway.
///
/// `events` holds the `M` interactions followed by the final ket-side
/// emission; `delays[m]` (fs) separates event `m` from event `m + 1`.
pub fn build_pathway_circuit(
    model: &Model,
    settings: &CircuitSettings,
    events: &[PauliEvent],
    delays: &[f64],
    basis: MeasureBasis,
) -> Result<CircuitIR> {
    settings.validate()?;
    if events.len() != delays.len() + 1 {
        return Err(Error::InvalidArgument(format!(
            "{} events need {} delays, got {}",
            events.len(),
            events.len().saturating_sub(1),
            delays.len()
        )));
    }
    let steps: Vec<usize> =
        delays.iter().map(|&t| crate::dynamics::step_count(t, settings.dt)).collect::<Result<_>>()?;
    let total: usize = steps.iter().sum();
    let scheme = match settings.scheme {
        AncillaScheme::PerCollision { .. } => AncillaScheme::PerCollision { steps: total.max(1) },
        s => s,
    };
    let layout = RegisterLayout::for_model(model, scheme);
    let mut circuit = CircuitIR::new(layout);
    circuit.metadata.delays = delays.to_vec();
    let a = circuit.layout.response_ancilla();
    circuit.instructions.push(Gate::H(a));
    let mut global_step = 0;
    for (m, ev) in events.iter().enumerate() {
        let gates = interaction_gates(ev.side.into(), ev.pauli, ev.site, &circuit.layout)?;
        circuit.instructions.extend(gates);
        if m < steps.len() {
            for _ in 0..steps[m] {
                let step = trotter_step_circuit(model, &circuit.layout, settings, global_step)?;
                circuit.instructions.extend(step);
                global_step += 1;
            }
        }
    }
    circuit.instructions.push(Gate::Measure { qubit: a, basis });
    circuit.validate()?;
    Ok(circuit)
}

/// Correspondence between model basis states and register basis states
/// with the response and collision ancillae in `|0>`.
#[derive(Debug, Clone)]
pub struct RegisterMap {
    indices: Vec<usize>,
    traced: Vec<usize>,
    n_qubits: usize,
}

impl RegisterMap {
    pub fn new(model: &Model, layout: &RegisterLayout) -> Self {
        let space = model.space();
        let q = layout.n_qubits();
        let bit = |qubit: usize| 1usize << (q - 1 - qubit);
        let mut indices = vec![0usize; space.dim()];
        for (m, slot) in indices.iter_mut().enumerate() {
            let mut rem = m;
            let mut reg = 0usize;
            for (k, sub) in space.subsystems.iter().enumerate().rev() {
                let d = space.dims[k];
                let local = rem % d;
                rem /= d;
                match *sub {
                    Subsystem::Site(i) => reg |= local * bit(layout.system(i)),
                    Subsystem::ReactionCenter => reg |= local * bit(layout.reaction_center().expect("rc qubit")),
                    Subsystem::Pseudomode(p) => {
                        let code = gray_encode(local);
                        for (j, &qb) in layout.pseudomode_qubits(p).iter().enumerate() {
                            reg |= ((code >> j) & 1) * bit(qb);
                        }
                    }
                }
            }
            *slot = reg;
        }
        let mut ancillae = vec![layout.response_ancilla()];
        ancillae.extend(layout.collision_qubits());
        let traced = (0..1usize << ancillae.len())
            .map(|c| ancillae.iter().enumerate().filter(|(j, _)| c >> j & 1 == 1).map(|(_, &qb)| bit(qb)).sum())
            .collect();
        Self { indices, traced, n_qubits: q }
    }

    /// Embeds a model operator into the register (or into the register minus
    /// the response ancilla when `without_response` is set).
    pub fn lift(&self, rho: &Operator, without_response: bool) -> Result<Operator> {
        if rho.nrows() != self.indices.len() || rho.ncols() != self.indices.len() {
            return Err(Error::DimensionMismatch(format!(
                "operator is {}x{}, model space has dimension {}",
                rho.nrows(),
                rho.ncols(),
                self.indices.len()
            )));
        }
        let dim = 1usize << (self.n_qubits - usize::from(without_response));
        let mut out = Operator::zeros(dim, dim);
        for (i, &ri) in self.indices.iter().enumerate() {
            for (j, &rj) in self.indices.iter().enumerate() {
                out[(ri, rj)] = rho[(i, j)];
            }
        }
        Ok(out)
    }

    /// Traces out the ancillae and restricts the pseudomodes to their valid
    /// Gray codes.
    pub fn reduce(&self, reg: &Operator) -> Operator {
        let n = self.indices.len();
        let mut out = Operator::zeros(n, n);
        let dim = reg.nrows();
        for &off in self.traced.iter().filter(|&&o| o < dim) {
            for (i, &ri) in self.indices.iter().enumerate() {
                for (j, &rj) in self.indices.iter().enumerate() {
                    out[(i, j)] += reg[(ri + off, rj + off)];
                }
            }
        }
        out
    }
}

/// Number of qubits a Gray-coded mode with `d` levels occupies.
pub fn mode_width(d: usize) -> usize {
    qubits_for_levels(d)
}

#[cfg(test)]
mod tests;
