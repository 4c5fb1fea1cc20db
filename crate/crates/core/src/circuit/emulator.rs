//! Density-matrix emulation of [`CircuitIR`] programs.
//!
//! States are stored column-major as a `2n`-bit vector: row (ket) qubit `q`
//! sits at bit `n - 1 - q` and column (bra) qubit `q` at bit `2n - 1 - q`.
//! `U rho U^dagger` is then `U` on the row bits and `conj(U)` on the column bits.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};

use super::{CircuitIR, Gate, MeasureBasis, Polarity};
use crate::error::{Error, Result};
use crate::linalg::{Operator, C64};

type M2 = [[C64; 2]; 2];
type M4 = [[C64; 4]; 4];

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Default emulator memory budget in bytes (2 GiB).
pub const DEFAULT_MEMORY_BUDGET: u128 = 2 << 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EmulationMode {
    Exact,
    Shots { shots: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmulatorOptions {
    pub memory_budget: u128,
    /// Evolve only the `<1_a| rho |0_a>` block when the circuit allows it.
    pub block_fast_path: bool,
}

impl Default for EmulatorOptions {
    fn default() -> Self {
        Self { memory_budget: DEFAULT_MEMORY_BUDGET, block_fast_path: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmulationResult {
    /// Exact expectation or shot estimate of the measured Pauli.
    pub expectation: f64,
    /// Variance of the estimate (zero in exact mode).
    pub variance: f64,
    /// Shots drawn; 0 in exact mode.
    pub shots: u64,
}

fn m2_1q(g: &Gate) -> Option<M2> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Some(match *g {
        Gate::H(_) => [[C64::new(s, 0.0), C64::new(s, 0.0)], [C64::new(s, 0.0), C64::new(-s, 0.0)]],
        Gate::X(_) => pauli_x(),
        Gate::Y(_) => pauli_y(),
        Gate::RZ { theta, .. } => {
            let h = theta / 2.0;
            [[C64::new(h.cos(), -h.sin()), ZERO], [ZERO, C64::new(h.cos(), h.sin())]]
        }
        Gate::RX { theta, .. } => {
            let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
            [[C64::new(c, 0.0), C64::new(0.0, -s)], [C64::new(0.0, -s), C64::new(c, 0.0)]]
        }
        _ => return None,
    })
}

fn pauli_x() -> M2 {
    [[ZERO, ONE], [ONE, ZERO]]
}

fn pauli_y() -> M2 {
    [[ZERO, C64::new(0.0, -1.0)], [C64::new(0.0, 1.0), ZERO]]
}

/// `cos(t/2) I - i sin(t/2) P` for a two-qubit Pauli product given as a 4x4
/// permutation-with-phase.
fn rotation_4(theta: f64, p: M4) -> M4 {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let mut m = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let id = if i == j { C64::new(c, 0.0) } else { ZERO };
            m[i][j] = id + C64::new(0.0, -s) * p[i][j];
        }
    }
    m
}

fn kron2(a: M2, b: M2) -> M4 {
    let mut m = [[ZERO; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = a[i >> 1][j >> 1] * b[i & 1][j & 1];
        }
    }
    m
}

fn m4_2q(g: &Gate) -> Option<M4> {
    let z = [[ONE, ZERO], [ZERO, -ONE]];
    Some(match *g {
        Gate::RXX { theta, .. } => rotation_4(theta, kron2(pauli_x(), pauli_x())),
        Gate::RYY { theta, .. } => rotation_4(theta, kron2(pauli_y(), pauli_y())),
        Gate::RZX { theta, .. } => rotation_4(theta, kron2(z, pauli_x())),
        _ => return None,
    })
}

fn conj2(m: &M2) -> M2 {
    let mut o = *m;
    o.iter_mut().flatten().for_each(|x| *x = x.conj());
    o
}

fn conj4(m: &M4) -> M4 {
    let mut o = *m;
    o.iter_mut().flatten().for_each(|x| *x = x.conj());
    o
}

fn is_diagonal2(m: &M2) -> bool {
    m[0][1] == ZERO && m[1][0] == ZERO
}

fn kernel1(data: &mut [C64], pos: usize, m: &M2) {
    let mask = 1usize << pos;
    if is_diagonal2(m) {
        let (d0, d1) = (m[0][0], m[1][1]);
        for (i, x) in data.iter_mut().enumerate() {
            *x *= if i & mask == 0 { d0 } else { d1 };
        }
        return;
    }
    let len = data.len();
    let mut base = 0;
    while base < len {
        for i in base..base + mask {
            let j = i | mask;
            let (a, b) = (data[i], data[j]);
            data[i] = m[0][0] * a + m[0][1] * b;
            data[j] = m[1][0] * a + m[1][1] * b;
        }
        base += 2 * mask;
    }
}

fn kernel2(data: &mut [C64], pos_a: usize, pos_b: usize, m: &M4) {
    let (ma, mb) = (1usize << pos_a, 1usize << pos_b);
    let both = ma | mb;
    for i in 0..data.len() {
        if i & both != 0 {
            continue;
        }
        let idx = [i, i | mb, i | ma, i | ma | mb];
        let v = [data[idx[0]], data[idx[1]], data[idx[2]], data[idx[3]]];
        for r in 0..4 {
            let row = &m[r];
            data[idx[r]] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2] + row[3] * v[3];
        }
    }
}

fn kernel_controlled(data: &mut [C64], pos_c: usize, fire_on: usize, pos_t: usize, m: &M2) {
    let (mc, mt) = (1usize << pos_c, 1usize << pos_t);
    let want = if fire_on == 1 { mc } else { 0 };
    for i in 0..data.len() {
        if i & mt != 0 || i & mc != want {
            continue;
        }
        let j = i | mt;
        let (a, b) = (data[i], data[j]);
        data[i] = m[0][0] * a + m[0][1] * b;
        data[j] = m[1][0] * a + m[1][1] * b;
    }
}

/// Dense `2^n x 2^n` operator on a qubit register.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisterState {
    n: usize,
    data: Vec<C64>,
}

impl RegisterState {
    /// `|0...0><0...0|`.
    pub fn zero(n: usize) -> Self {
        let dim = 1usize << n;
        let mut data = vec![ZERO; dim * dim];
        data[0] = ONE;
        Self { n, data }
    }

    pub fn from_operator(op: &Operator) -> Result<Self> {
        let dim = op.nrows();
        if dim != op.ncols() || !dim.is_power_of_two() {
            return Err(Error::DimensionMismatch(format!("{}x{} register operator", op.nrows(), op.ncols())));
        }
        Ok(Self { n: dim.trailing_zeros() as usize, data: op.as_slice().to_vec() })
    }

    pub fn to_operator(&self) -> Operator {
        let dim = 1usize << self.n;
        Operator::from_column_slice(dim, dim, &self.data)
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    fn row_pos(&self, q: usize) -> usize {
        self.n - 1 - q
    }

    fn col_pos(&self, q: usize) -> usize {
        2 * self.n - 1 - q
    }

    pub fn trace(&self) -> C64 {
        let dim = 1usize << self.n;
        (0..dim).map(|i| self.data[i * dim + i]).sum()
    }

    /// `U rho` for a unitary gate.
    pub fn apply_left(&mut self, g: &Gate) -> Result<()> {
        self.one_side(g, true)
    }

    /// `rho U^dagger` for a unitary gate.
    pub fn apply_right_adjoint(&mut self, g: &Gate) -> Result<()> {
        self.one_side(g, false)
    }

    fn one_side(&mut self, g: &Gate, left: bool) -> Result<()> {
        let pos = |s: &Self, q: usize| if left { s.row_pos(q) } else { s.col_pos(q) };
        if let Some(m) = m2_1q(g) {
            let q = g.qubits()[0];
            let m = if left { m } else { conj2(&m) };
            let p = pos(self, q);
            kernel1(&mut self.data, p, &m);
            return Ok(());
        }
        if let Some(m) = m4_2q(g) {
            let qs = g.qubits();
            let m = if left { m } else { conj4(&m) };
            let (pa, pb) = (pos(self, qs[0]), pos(self, qs[1]));
            kernel2(&mut self.data, pa, pb, &m);
            return Ok(());
        }
        match *g {
            Gate::CX { control, target, polarity } | Gate::CY { control, target, polarity } => {
                let m = if matches!(g, Gate::CX { .. }) { pauli_x() } else { pauli_y() };
                let m = if left { m } else { conj2(&m) };
                let fire = if polarity == Polarity::Closed { 1 } else { 0 };
                let (pc, pt) = (pos(self, control), pos(self, target));
                kernel_controlled(&mut self.data, pc, fire, pt, &m);
                Ok(())
            }
            _ => Err(Error::Unsupported(format!("{} is not a unitary gate", g.name()))),
        }
    }

    /// Applies a gate as a channel: unitary conjugation or reset.
    /// Measurements leave the state untouched.
    pub fn apply(&mut self, g: &Gate) -> Result<()> {
        match *g {
            Gate::Reset(q) => {
                self.reset(q);
                Ok(())
            }
            Gate::Measure { .. } => Ok(()),
            _ => {
                self.apply_left(g)?;
                self.apply_right_adjoint(g)
            }
        }
    }

    /// Traces qubit `q` out and re-prepares it in `|0>`.
    pub fn reset(&mut self, q: usize) {
        let (rm, cm) = (1usize << self.row_pos(q), 1usize << self.col_pos(q));
        for i in 0..self.data.len() {
            if i & (rm | cm) != 0 {
                continue;
            }
            let moved = self.data[i | rm | cm];
            self.data[i] += moved;
            self.data[i | rm] = ZERO;
            self.data[i | cm] = ZERO;
            self.data[i | rm | cm] = ZERO;
        }
    }

    /// `<X_q> + i <Y_q> = 2 Tr(<1_q| rho |0_q>)`.
    pub fn coherence(&self, q: usize) -> C64 {
        let dim = 1usize << self.n;
        let m = 1usize << self.row_pos(q);
        let mut acc = ZERO;
        for r in 0..dim {
            if r & m == 0 {
                acc += self.data[r * dim + (r | m)];
            }
        }
        acc * 2.0
    }
}

/// The off-diagonal block `<1_a| rho |0_a>` of the response ancilla (qubit 0),
/// stored as an operator on the remaining qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    inner: RegisterState,
}

impl BlockState {
    /// Block right after `H` on `|0>_a` with the rest in `|0...0>`.
    pub fn after_hadamard(n_total: usize) -> Self {
        let mut inner = RegisterState::zero(n_total - 1);
        inner.data[0] = C64::new(0.5, 0.0);
        Self { inner }
    }

    /// Block for `|+><+| (x) rest`.
    pub fn from_rest(rest: &Operator) -> Result<Self> {
        let mut inner = RegisterState::from_operator(rest)?;
        inner.data.iter_mut().for_each(|x| *x *= 0.5);
        Ok(Self { inner })
    }

    pub fn as_operator(&self) -> Operator {
        self.inner.to_operator()
    }

    fn shifted(g: &Gate) -> Result<Gate> {
        let s = |q: usize| -> Result<usize> {
            q.checked_sub(1).ok_or_else(|| Error::Unsupported("gate acts on the response ancilla".into()))
        };
        Ok(match *g {
            Gate::H(q) => Gate::H(s(q)?),
            Gate::X(q) => Gate::X(s(q)?),
            Gate::Y(q) => Gate::Y(s(q)?),
            Gate::Reset(q) => Gate::Reset(s(q)?),
            Gate::RZ { qubit, theta } => Gate::RZ { qubit: s(qubit)?, theta },
            Gate::RX { qubit, theta } => Gate::RX { qubit: s(qubit)?, theta },
            Gate::RXX { a, b, theta } => Gate::RXX { a: s(a)?, b: s(b)?, theta },
            Gate::RYY { a, b, theta } => Gate::RYY { a: s(a)?, b: s(b)?, theta },
            Gate::RZX { a, b, theta } => Gate::RZX { a: s(a)?, b: s(b)?, theta },
            Gate::CX { control, target, polarity } => Gate::CX { control: s(control)?, target: s(target)?, polarity },
            Gate::CY { control, target, polarity } => Gate::CY { control: s(control)?, target: s(target)?, polarity },
            Gate::Measure { .. } => return Err(Error::Unsupported("measurement inside block evolution".into())),
        })
    }

    /// Applies one gate. Gates controlled by the ancilla act on a single side.
    pub fn apply(&mut self, g: &Gate) -> Result<()> {
        match *g {
            Gate::CX { control: 0, target, polarity } | Gate::CY { control: 0, target, polarity } => {
                let t = target
                    .checked_sub(1)
                    .ok_or_else(|| Error::InvalidArgument("ancilla controls itself".into()))?;
                let p = if matches!(g, Gate::CX { .. }) { Gate::X(t) } else { Gate::Y(t) };
                match polarity {
                    // ket side: P B
                    Polarity::Closed => self.inner.apply_left(&p),
                    // bra side: B P^dagger
                    Polarity::Open => self.inner.apply_right_adjoint(&p),
                }
            }
            _ => self.inner.apply(&Self::shifted(g)?),
        }
    }

    /// `<X_a> + i <Y_a> = 2 Tr(B)`.
    pub fn coherence(&self) -> C64 {
        self.inner.trace() * 2.0
    }
}

/// Whether the circuit is a Hadamard test the block path can evolve: it
/// opens with `H(a)`, and `a` later appears only as a control or in the
/// final measurement.
fn block_eligible(circuit: &CircuitIR) -> bool {
    let a = circuit.layout.response_ancilla();
    if a != 0 || circuit.instructions.first() != Some(&Gate::H(a)) {
        return false;
    }
    circuit.instructions[1..].iter().all(|g| match *g {
        Gate::CX { control, target, .. } | Gate::CY { control, target, .. } => target != a || control == a,
        Gate::Measure { .. } => true,
        _ => !g.qubits().contains(&a),
    })
}

fn check_budget(circuit: &CircuitIR, options: &EmulatorOptions) -> Result<()> {
    let required = circuit.layout.density_matrix_bytes();
    if required > options.memory_budget {
        return Err(Error::MemoryBudget {
            qubits: circuit.n_qubits(),
            required,
            budget: options.memory_budget,
        });
    }
    Ok(())
}

/// Exact `<X_a> + i <Y_a>` at the end of the circuit, ignoring which basis its
/// measurement names.
pub fn emulate_coherence(circuit: &CircuitIR, options: &EmulatorOptions) -> Result<C64> {
    circuit.validate()?;
    check_budget(circuit, options)?;
    let a = circuit.layout.response_ancilla();
    if options.block_fast_path && block_eligible(circuit) {
        let mut block = BlockState::after_hadamard(circuit.n_qubits());
        for g in &circuit.instructions[1..] {
            if !matches!(g, Gate::Measure { .. }) {
                block.apply(g)?;
            }
        }
        return Ok(block.coherence());
    }
    let mut state = RegisterState::zero(circuit.n_qubits());
    for g in &circuit.instructions {
        state.apply(g)?;
    }
    Ok(state.coherence(a))
}

/// Runs the circuit and reports its measured Pauli expectation.
pub fn emulate(circuit: &CircuitIR, mode: EmulationMode, options: &EmulatorOptions) -> Result<EmulationResult> {
    let basis = circuit
        .measurement()
        .ok_or_else(|| Error::InvalidArgument("circuit has no measurement".into()))?;
    let c = emulate_coherence(circuit, options)?;
    let exact = match basis {
        MeasureBasis::X => c.re,
        MeasureBasis::Y => c.im,
    };
    match mode {
        EmulationMode::Exact => Ok(EmulationResult { expectation: exact, variance: 0.0, shots: 0 }),
        EmulationMode::Shots { shots, seed } => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let (estimate, variance) = sample_pauli(exact, shots, &mut rng)?;
            Ok(EmulationResult { expectation: estimate, variance, shots })
        }
    }
}

/// Draws `shots` +-1 outcomes with mean `expectation`; returns the sample
/// mean and its estimated variance.
pub(crate) fn sample_pauli(expectation: f64, shots: u64, rng: &mut impl rand::Rng) -> Result<(f64, f64)> {
    if shots == 0 {
        return Err(Error::InvalidArgument("shot count must be positive".into()));
    }
    let p = ((1.0 + expectation) / 2.0).clamp(0.0, 1.0);
    let dist = Binomial::new(shots, p).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let ups = dist.sample(rng);
    let est = 2.0 * ups as f64 / shots as f64 - 1.0;
    Ok((est, (1.0 - est * est).max(0.0) / shots as f64))
}
