use std::collections::BTreeMap;

use super::{CircuitIR, Gate};
use crate::model::QubitRole;

/// Gate counts and depth of a circuit, serializable as JSON.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GateCensus {
    pub qubits: usize,
    pub total: usize,
    pub by_kind: BTreeMap<String, usize>,
    pub two_qubit: usize,
    /// Two-qubit gates with both qubits in the system register.
    pub system_two_qubit: usize,
    pub resets: usize,
    pub depth: usize,
}

pub fn gate_census(circuit: &CircuitIR) -> GateCensus {
    census_of(circuit.n_qubits(), &circuit.instructions, |q| circuit.layout.role(q))
}

pub(crate) fn census_of(n_qubits: usize, gates: &[Gate], role: impl Fn(usize) -> QubitRole) -> GateCensus {
    let mut by_kind = BTreeMap::new();
    let mut frontier = vec![0usize; n_qubits];
    let mut two_qubit = 0;
    let mut system_two_qubit = 0;
    let mut resets = 0;
    for g in gates {
        *by_kind.entry(g.name().to_string()).or_insert(0) += 1;
        let qs = g.qubits();
        let layer = qs.iter().map(|&q| frontier[q]).max().unwrap_or(0) + 1;
        for &q in &qs {
            frontier[q] = layer;
        }
        if g.is_two_qubit() {
            two_qubit += 1;
            if qs.iter().all(|&q| matches!(role(q), QubitRole::System(_))) {
                system_two_qubit += 1;
            }
        }
        if matches!(g, Gate::Reset(_)) {
            resets += 1;
        }
    }
    GateCensus {
        qubits: n_qubits,
        total: gates.len(),
        by_kind,
        two_qubit,
        system_two_qubit,
        resets,
        depth: frontier.into_iter().max().unwrap_or(0),
    }
}
