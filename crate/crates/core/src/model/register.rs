//! Qubit register layout and the Gray-code pseudomode encoding.

use crate::linalg::{Operator, C64};

use super::{CollisionChannel, EnvironmentSpec, ExcitonSystem, Model};

/// How collision ancillae are provisioned in the circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AncillaScheme {
    /// A fresh ancilla for every collision of every step; no resets.
    PerCollision { steps: usize },
    /// One ancilla per collision channel, reset after each collision.
    PerPseudomode,
    /// A single ancilla reset after every collision.
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QubitRole {
    ResponseAncilla,
    System(usize),
    Pseudomode { mode: usize, bit: usize },
    Collision(usize),
    ReactionCenter,
}

/// Ordered qubit roles: `[a][s_1..s_N][p...][a_c...][rc?]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisterLayout {
    roles: Vec<QubitRole>,
    scheme: AncillaScheme,
    channels: usize,
    n_sites: usize,
    pseudomode_ranges: Vec<(usize, usize)>,
    collision_start: usize,
    collision_count: usize,
    rc: Option<usize>,
}

pub fn qubits_for_levels(d: usize) -> usize {
    assert!(d >= 1);
    (usize::BITS - (d - 1).leading_zeros()) as usize
}

pub fn gray_encode(n: usize) -> usize {
    n ^ (n >> 1)
}

pub fn gray_decode(mut g: usize) -> usize {
    let mut n = g;
    while g > 0 {
        g >>= 1;
        n ^= g;
    }
    n
}

/// Annihilation operator of a `d`-level mode on its `ceil(log2 d)` qubits,
/// level `n` stored in the computational state `gray_encode(n)`. Bit `j` of
/// the code is factor `j` counted from the least significant end, so the
/// matrix index is the code itself.
pub fn gray_annihilation(d: usize) -> Operator {
    let dim = 1usize << qubits_for_levels(d);
    let mut a = Operator::zeros(dim, dim);
    for n in 1..d {
        a[(gray_encode(n - 1), gray_encode(n))] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

pub fn gray_number(d: usize) -> Operator {
    let dim = 1usize << qubits_for_levels(d);
    let mut num = Operator::zeros(dim, dim);
    for n in 0..d {
        num[(gray_encode(n), gray_encode(n))] = C64::new(n as f64, 0.0);
    }
    num
}

pub fn layout_register(
    system: &ExcitonSystem,
    environment: &EnvironmentSpec,
    scheme: AncillaScheme,
) -> RegisterLayout {
    let model = Model {
        system: system.clone(),
        environment: environment.clone(),
        hbar: 1.0,
    };
    RegisterLayout::for_model(&model, scheme)
}

impl RegisterLayout {
    pub fn for_model(model: &Model, scheme: AncillaScheme) -> Self {
        let widths: Vec<usize> = model.pseudomodes().iter().map(|pm| qubits_for_levels(pm.levels)).collect();
        Self::from_parts(model.n_sites(), &widths, model.collision_channels().len(), scheme, model.has_trap())
    }

    /// Layout from its shape: sites, qubits per pseudomode, collision channel
    /// count, ancilla scheme and whether a reaction-center qubit is present.
    pub fn from_parts(
        n_sites: usize,
        pseudomode_widths: &[usize],
        channels: usize,
        scheme: AncillaScheme,
        reaction_center: bool,
    ) -> Self {
        let mut roles = vec![QubitRole::ResponseAncilla];
        roles.extend((0..n_sites).map(QubitRole::System));
        let mut pseudomode_ranges = Vec::new();
        for (k, &q) in pseudomode_widths.iter().enumerate() {
            pseudomode_ranges.push((roles.len(), q));
            roles.extend((0..q).map(|bit| QubitRole::Pseudomode { mode: k, bit }));
        }
        let collision_count = match scheme {
            AncillaScheme::Single => 1,
            AncillaScheme::PerPseudomode => channels,
            AncillaScheme::PerCollision { steps } => channels * steps,
        };
        let collision_start = roles.len();
        roles.extend((0..collision_count).map(QubitRole::Collision));
        let rc = reaction_center.then(|| {
            roles.push(QubitRole::ReactionCenter);
            roles.len() - 1
        });
        Self {
            roles,
            scheme,
            channels,
            n_sites,
            pseudomode_ranges,
            collision_start,
            collision_count,
            rc,
        }
    }

    /// Qubit count of each pseudomode.
    pub fn pseudomode_widths(&self) -> Vec<usize> {
        self.pseudomode_ranges.iter().map(|&(_, len)| len).collect()
    }

    pub fn n_qubits(&self) -> usize {
        self.roles.len()
    }

    pub fn roles(&self) -> &[QubitRole] {
        &self.roles
    }

    pub fn role(&self, q: usize) -> QubitRole {
        self.roles[q]
    }

    pub fn scheme(&self) -> AncillaScheme {
        self.scheme
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn response_ancilla(&self) -> usize {
        0
    }

    pub fn system(&self, site: usize) -> usize {
        1 + site
    }

    /// Qubits of pseudomode `mode`, least significant code bit first.
    pub fn pseudomode_qubits(&self, mode: usize) -> Vec<usize> {
        let (start, len) = self.pseudomode_ranges[mode];
        (start..start + len).collect()
    }

    pub fn n_pseudomodes(&self) -> usize {
        self.pseudomode_ranges.len()
    }

    pub fn collision_qubits(&self) -> std::ops::Range<usize> {
        self.collision_start..self.collision_start + self.collision_count
    }

    pub fn collision_channels(&self) -> usize {
        self.channels
    }

    /// Ancilla used by collision channel `channel` during time step `step`.
    pub fn collision_ancilla(&self, channel: usize, step: usize) -> usize {
        match self.scheme {
            AncillaScheme::Single => self.collision_start,
            AncillaScheme::PerPseudomode => self.collision_start + channel,
            AncillaScheme::PerCollision { steps } => {
                assert!(step < steps, "step {step} beyond the {steps} provisioned");
                self.collision_start + step * self.channels + channel
            }
        }
    }

    /// Whether collisions must be followed by a reset of their ancilla.
    pub fn resets_ancillae(&self) -> bool {
        !matches!(self.scheme, AncillaScheme::PerCollision { .. })
    }

    pub fn reaction_center(&self) -> Option<usize> {
        self.rc
    }

    pub fn label(&self, q: usize) -> String {
        match self.roles[q] {
            QubitRole::ResponseAncilla => "a".into(),
            QubitRole::System(i) => format!("s{}", i + 1),
            QubitRole::Pseudomode { mode, bit } => format!("p{}.{}", mode + 1, bit),
            QubitRole::Collision(k) => format!("ac{k}"),
            QubitRole::ReactionCenter => "rc".into(),
        }
    }

    /// Memory needed by a dense density-matrix emulation, `16 * 4^Q` bytes.
    pub fn density_matrix_bytes(&self) -> u128 {
        16u128 << (2 * self.n_qubits())
    }
}

impl Model {
    /// Collision channels in the fixed order used by both the collision
    /// propagator and the circuits: pseudomodes, memoryless dephasing,
    /// relaxation, trap.
    pub fn collision_channels(&self) -> Vec<CollisionChannel> {
        let mut out: Vec<CollisionChannel> = (0..self.pseudomodes().len())
            .map(CollisionChannel::Pseudomode)
            .collect();
        for site in 0..self.n_sites() {
            for (term, _) in self.environment.memoryless_terms() {
                out.push(CollisionChannel::Memoryless { site, term });
            }
        }
        for site in 0..self.n_sites() {
            if self.environment.relaxation_rate(site) > 0.0 {
                out.push(CollisionChannel::Relaxation { site });
            }
        }
        if let Some(trap) = self.environment.trap {
            if trap.rate > 0.0 {
                out.push(CollisionChannel::Trap);
            }
        }
        out
    }
}
