use super::{Gate, Pauli, Polarity};
use crate::error::{Error, Result};
use crate::linalg::{self, Operator, C64};

/// Tensor product of Paulis, first factor most significant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString(pub Vec<Pauli>);

impl PauliString {
    pub fn matrix(&self) -> Operator {
        let factors: Vec<Operator> = self.0.iter().map(|p| p.matrix()).collect();
        linalg::kron_all(&factors)
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(|&p| p == Pauli::I)
    }

    pub fn label(&self) -> String {
        self.0.iter().map(|p| p.symbol()).collect()
    }
}

/// Expands a Hermitian operator on `k` qubits as `sum c_P P` with real
/// coefficients, dropping terms with `|c_P| <= tol`. Strings are returned in
/// lexicographic order (I < X < Y < Z per factor).
pub fn pauli_decompose(op: &Operator, tol: f64) -> Result<Vec<(PauliString, f64)>> {
    let dim = op.nrows();
    if dim != op.ncols() || !dim.is_power_of_two() || dim == 0 {
        return Err(Error::DimensionMismatch(format!("{}x{} is not a qubit operator", op.nrows(), op.ncols())));
    }
    if !linalg::is_hermitian(op, 1e-12) {
        return Err(Error::NotHermitian(linalg::hermiticity_error(op)));
    }
    let k = dim.trailing_zeros() as usize;
    let all = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
    let mut out = Vec::new();
    for code in 0..(1usize << (2 * k)) {
        let string = PauliString(
            (0..k).map(|pos| all[(code >> (2 * (k - 1 - pos))) & 3]).collect(),
        );
        let c = pauli_overlap(&string, op) / dim as f64;
        if c.re.abs() > tol {
            out.push((string, c.re));
        }
    }
    Ok(out)
}

/// `Tr(P A)` without forming `P` densely: each Pauli string maps a basis
/// state to one basis state with a phase.
fn pauli_overlap(string: &PauliString, op: &Operator) -> C64 {
    let k = string.0.len();
    let mut acc = C64::new(0.0, 0.0);
    for col in 0..op.ncols() {
        // P|col> = phase |row>
        let mut row = col;
        let mut phase = C64::new(1.0, 0.0);
        for (pos, p) in string.0.iter().enumerate() {
            let bit = (col >> (k - 1 - pos)) & 1;
            match p {
                Pauli::I => {}
                Pauli::X => row ^= 1 << (k - 1 - pos),
                Pauli::Y => {
                    row ^= 1 << (k - 1 - pos);
                    phase *= if bit == 0 { linalg::I } else { -linalg::I };
                }
                Pauli::Z => {
                    if bit == 1 {
                        phase = -phase;
                    }
                }
            }
        }
        // P[row, col] = phase, so Tr(PA) = sum_col P[row, col] A[col, row].
        acc += phase * op[(col, row)];
    }
    acc
}

/// Gates for `exp(-i phi P)` with `P` a Pauli string placed on qubits:
/// basis change to Z, CX ladder onto the last active qubit, `RZ(2 phi)`, then
/// the inverse ladder and basis change. Identity factors are ignored.
pub fn pauli_exponential(string: &[(usize, Pauli)], phi: f64) -> Vec<Gate> {
    let active: Vec<(usize, Pauli)> = string.iter().copied().filter(|&(_, p)| p != Pauli::I).collect();
    if active.is_empty() || phi == 0.0 {
        return Vec::new();
    }
    if let [(q, p)] = active[..] {
        match p {
            Pauli::Z => return vec![Gate::RZ { qubit: q, theta: 2.0 * phi }],
            Pauli::X => return vec![Gate::RX { qubit: q, theta: 2.0 * phi }],
            _ => {}
        }
    }
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut pre = Vec::new();
    let mut post = Vec::new();
    for &(q, p) in &active {
        match p {
            Pauli::X => {
                pre.push(Gate::H(q));
                post.push(Gate::H(q));
            }
            Pauli::Y => {
                pre.push(Gate::RX { qubit: q, theta: half_pi });
                post.push(Gate::RX { qubit: q, theta: -half_pi });
            }
            _ => {}
        }
    }
    let ladder: Vec<Gate> = active
        .windows(2)
        .map(|w| Gate::CX { control: w[0].0, target: w[1].0, polarity: Polarity::Closed })
        .collect();
    let last = active.last().unwrap().0;
    let mut out = pre;
    out.extend(ladder.iter().copied());
    out.push(Gate::RZ { qubit: last, theta: 2.0 * phi });
    out.extend(ladder.iter().rev().copied());
    out.extend(post);
    out
}
