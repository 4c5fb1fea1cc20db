//! Physical model: Frenkel exciton aggregate, Lorentzian environment terms,
//! pseudomode embedding and the Hamiltonians acting on the composite space.

mod register;

pub use register::{
    gray_annihilation, gray_decode, gray_encode, gray_number, layout_register, qubits_for_levels,
    AncillaScheme, QubitRole, RegisterLayout,
};

use crate::error::{Error, Result};
use crate::linalg::{self, embed, kron_all, Operator, C64};

/// Reduced Planck constant in eV * fs.
pub const HBAR_EV_FS: f64 = 0.6582119569;

/// Chromophore energies, pairwise couplings and transition dipoles.
///
/// Site `i` is a two-level system with `|0>` = ground and `|1>` = excited.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitonSystem {
    energies: Vec<f64>,
    couplings: Vec<f64>,
    dipoles: Vec<f64>,
}

impl ExcitonSystem {
    /// `couplings` is the full symmetric `N x N` matrix in row-major rows.
    pub fn new(energies: Vec<f64>, couplings: Vec<Vec<f64>>, dipoles: Vec<f64>) -> Result<Self> {
        let n = energies.len();
        if n == 0 {
            return Err(Error::InvalidModel("at least one site is required".into()));
        }
        if dipoles.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} energies but {} dipoles",
                n,
                dipoles.len()
            )));
        }
        if couplings.len() != n || couplings.iter().any(|row| row.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "coupling matrix must be {n}x{n}"
            )));
        }
        if let Some(e) = energies.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
            return Err(Error::InvalidModel(format!("site energy {e} must be finite and >= 0")));
        }
        for i in 0..n {
            if couplings[i][i] != 0.0 {
                return Err(Error::InvalidModel(format!("coupling diagonal J[{i}][{i}] must be zero")));
            }
            for j in 0..n {
                if (couplings[i][j] - couplings[j][i]).abs() > 1e-14 {
                    return Err(Error::InvalidModel(format!("coupling matrix not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self {
            energies,
            couplings: couplings.into_iter().flatten().collect(),
            dipoles,
        })
    }

    pub fn monomer(energy: f64, dipole: f64) -> Result<Self> {
        Self::new(vec![energy], vec![vec![0.0]], vec![dipole])
    }

    pub fn dimer(e1: f64, e2: f64, j12: f64, mu1: f64, mu2: f64) -> Result<Self> {
        Self::new(vec![e1, e2], vec![vec![0.0, j12], vec![j12, 0.0]], vec![mu1, mu2])
    }

    pub fn n_sites(&self) -> usize {
        self.energies.len()
    }

    pub fn energy(&self, i: usize) -> f64 {
        self.energies[i]
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.couplings[i * self.n_sites() + j]
    }

    pub fn dipole(&self, i: usize) -> f64 {
        self.dipoles[i]
    }

    pub fn dipoles(&self) -> &[f64] {
        &self.dipoles
    }

    /// Pairs `i < j` with a nonzero coupling.
    pub fn coupled_pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n_sites();
        (0..n).flat_map(move |i| {
            (i + 1..n).filter_map(move |j| {
                let v = self.coupling(i, j);
                (v != 0.0).then_some((i, j, v))
            })
        })
    }

    /// Ascending one-exciton transition energies.
    pub fn exciton_energies(&self) -> Vec<f64> {
        let n = self.n_sites();
        let h = Operator::from_fn(n, n, |i, j| {
            C64::new(if i == j { self.energy(i) } else { self.coupling(i, j) }, 0.0)
        });
        linalg::hermitian_eigenvalues(&h)
    }
}

/// One Lorentzian component of the environment spectral function.
///
/// A width of `f64::INFINITY` marks a memoryless (flat) term that is
/// represented by a dephasing dissipator instead of a pseudomode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianTerm {
    pub amplitude: f64,
    pub width: f64,
    pub center: f64,
    pub split: usize,
    pub levels: usize,
}

impl LorentzianTerm {
    pub fn finite(amplitude: f64, width: f64, center: f64) -> Self {
        Self { amplitude, width, center, split: 1, levels: 2 }
    }

    pub fn memoryless(amplitude: f64) -> Self {
        Self { amplitude, width: f64::INFINITY, center: 0.0, split: 1, levels: 2 }
    }

    pub fn with_split(mut self, split: usize) -> Self {
        self.split = split;
        self
    }

    pub fn with_levels(mut self, levels: usize) -> Self {
        self.levels = levels;
        self
    }

    pub fn is_memoryless(&self) -> bool {
        self.width.is_infinite()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude > 0.0) || !self.amplitude.is_finite() {
            return Err(Error::InvalidModel(format!("amplitude {} must be > 0", self.amplitude)));
        }
        if self.is_memoryless() {
            return Ok(());
        }
        if !(self.width > 0.0) {
            return Err(Error::InvalidModel(format!("width {} must be > 0", self.width)));
        }
        if !self.center.is_finite() {
            return Err(Error::InvalidModel("center frequency must be finite".into()));
        }
        if self.split == 0 {
            return Err(Error::InvalidModel("split count must be >= 1".into()));
        }
        if self.levels < 2 {
            return Err(Error::InvalidModel(format!("truncation d = {} must be >= 2", self.levels)));
        }
        Ok(())
    }

    /// Coupling `g = sqrt(Gamma * Omega / 2)` of the unsplit term.
    pub fn coupling(&self) -> f64 {
        (self.amplitude * self.width / 2.0).sqrt()
    }

    /// Coupling of each of the `split` replicas.
    pub fn replica_coupling(&self) -> f64 {
        (self.amplitude / self.split as f64 * self.width / 2.0).sqrt()
    }

    pub fn value_at(&self, omega: f64) -> f64 {
        if self.is_memoryless() {
            self.amplitude
        } else {
            let w2 = self.width * self.width;
            let x = omega - self.center;
            self.amplitude * w2 / (x * x + w2)
        }
    }
}

/// Splits a finite Lorentzian into `replicas` identical terms with amplitude
/// `amplitude / replicas`.
pub fn split_lorentzian(term: &LorentzianTerm, replicas: usize) -> Result<Vec<LorentzianTerm>> {
    if replicas == 0 {
        return Err(Error::InvalidArgument("replica count must be >= 1".into()));
    }
    if term.is_memoryless() {
        return Err(Error::InvalidArgument("memoryless terms carry no pseudomode to split".into()));
    }
    let part = LorentzianTerm {
        amplitude: term.amplitude / replicas as f64,
        split: 1,
        ..*term
    };
    Ok(vec![part; replicas])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trap {
    pub site: usize,
    pub rate: f64,
}

/// Environment shared by every chromophore plus optional relaxation/trapping.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnvironmentSpec {
    pub terms: Vec<LorentzianTerm>,
    pub relaxation_rates: Vec<f64>,
    pub trap: Option<Trap>,
}

impl EnvironmentSpec {
    pub fn new(terms: Vec<LorentzianTerm>) -> Self {
        Self { terms, ..Default::default() }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_relaxation(mut self, rates: Vec<f64>) -> Self {
        self.relaxation_rates = rates;
        self
    }

    pub fn with_trap(mut self, site: usize, rate: f64) -> Self {
        self.trap = Some(Trap { site, rate });
        self
    }

    pub fn finite_terms(&self) -> impl Iterator<Item = (usize, &LorentzianTerm)> {
        self.terms.iter().enumerate().filter(|(_, t)| !t.is_memoryless())
    }

    pub fn memoryless_terms(&self) -> impl Iterator<Item = (usize, &LorentzianTerm)> {
        self.terms.iter().enumerate().filter(|(_, t)| t.is_memoryless())
    }

    pub fn relaxation_rate(&self, site: usize) -> f64 {
        self.relaxation_rates.get(site).copied().unwrap_or(0.0)
    }

    /// Pseudomodes per chromophore after splitting.
    pub fn pseudomodes_per_site(&self) -> usize {
        self.finite_terms().map(|(_, t)| t.split).sum()
    }

    pub fn validate(&self, n_sites: usize) -> Result<()> {
        for t in &self.terms {
            t.validate()?;
        }
        if !self.relaxation_rates.is_empty() && self.relaxation_rates.len() != n_sites {
            return Err(Error::DimensionMismatch(format!(
                "{} relaxation rates for {} sites",
                self.relaxation_rates.len(),
                n_sites
            )));
        }
        if let Some(r) = self.relaxation_rates.iter().find(|r| !(**r >= 0.0)) {
            return Err(Error::InvalidModel(format!("relaxation rate {r} must be >= 0")));
        }
        if let Some(trap) = &self.trap {
            if trap.site >= n_sites {
                return Err(Error::InvalidModel(format!("trap site {} out of range", trap.site)));
            }
            if !(trap.rate >= 0.0) {
                return Err(Error::InvalidModel("trap rate must be >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Spectral function `C(omega)` of the environment.
pub fn spectral_function(env: &EnvironmentSpec, omega: f64) -> f64 {
    env.terms.iter().map(|t| t.value_at(omega)).sum()
}

/// One truncated pseudomode replica attached to a site.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pseudomode {
    pub site: usize,
    pub term: usize,
    pub replica: usize,
    pub levels: usize,
    pub frequency: f64,
    pub width: f64,
    pub coupling: f64,
}

/// A dissipative channel realized by one collision per time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollisionChannel {
    /// Decay of pseudomode `k` (index into [`Model::pseudomodes`]).
    Pseudomode(usize),
    /// Pure dephasing of `site` from memoryless term `term`.
    Memoryless { site: usize, term: usize },
    Relaxation { site: usize },
    Trap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subsystem {
    Site(usize),
    Pseudomode(usize),
    ReactionCenter,
}

/// Tensor-product layout of the system + pseudomode (+ reaction center)
/// space used by the classical propagators. Factor 0 is most significant.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeSpace {
    pub dims: Vec<usize>,
    pub subsystems: Vec<Subsystem>,
}

impl CompositeSpace {
    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn index_of(&self, s: Subsystem) -> usize {
        self.subsystems.iter().position(|x| *x == s).expect("subsystem not in layout")
    }

    pub fn embed(&self, targets: &[Subsystem], local: &Operator) -> Operator {
        let idx: Vec<usize> = targets.iter().map(|s| self.index_of(*s)).collect();
        let mut order: Vec<usize> = (0..idx.len()).collect();
        order.sort_by_key(|&k| idx[k]);
        if order.iter().enumerate().all(|(a, &b)| a == b) {
            embed(&self.dims, &idx, local)
        } else {
            // permute the local factors into ascending subsystem order
            let local_dims: Vec<usize> = idx.iter().map(|&i| self.dims[i]).collect();
            let perm = permute_factors(local, &local_dims, &order);
            let sorted: Vec<usize> = order.iter().map(|&k| idx[k]).collect();
            embed(&self.dims, &sorted, &perm)
        }
    }
}

/// Reorders the tensor factors of `op` so that new factor `k` is old factor
/// `order[k]`.
fn permute_factors(op: &Operator, dims: &[usize], order: &[usize]) -> Operator {
    let n = op.nrows();
    let digits = |mut x: usize| -> Vec<usize> {
        let mut d = vec![0; dims.len()];
        for k in (0..dims.len()).rev() {
            d[k] = x % dims[k];
            x /= dims[k];
        }
        d
    };
    let new_index = |old: usize| -> usize {
        let d = digits(old);
        order.iter().fold(0, |acc, &k| acc * dims[k] + d[k])
    };
    let mut out = Operator::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            out[(new_index(r), new_index(c))] = op[(r, c)];
        }
    }
    out
}

/// A complete simulation model: exciton system, environment and unit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub system: ExcitonSystem,
    pub environment: EnvironmentSpec,
    /// Reduced Planck constant in (energy unit) * (time unit).
    pub hbar: f64,
}

impl Model {
    pub fn new(system: ExcitonSystem, environment: EnvironmentSpec) -> Result<Self> {
        Self::with_hbar(system, environment, HBAR_EV_FS)
    }

    /// Model in arbitrary units; `hbar = 1` gives natural units.
    pub fn with_hbar(system: ExcitonSystem, environment: EnvironmentSpec, hbar: f64) -> Result<Self> {
        environment.validate(system.n_sites())?;
        if !(hbar > 0.0) {
            return Err(Error::InvalidModel("hbar must be > 0".into()));
        }
        Ok(Self { system, environment, hbar })
    }

    pub fn n_sites(&self) -> usize {
        self.system.n_sites()
    }

    /// SHA-256 of the model's full parameter set, hex encoded.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(format!("{self:?}").as_bytes()))
    }

    /// All pseudomode replicas, site-major, then term, then replica.
    pub fn pseudomodes(&self) -> Vec<Pseudomode> {
        let mut out = Vec::new();
        for site in 0..self.n_sites() {
            for (k, term) in self.environment.finite_terms() {
                for r in 0..term.split {
                    out.push(Pseudomode {
                        site,
                        term: k,
                        replica: r,
                        levels: term.levels,
                        frequency: term.center,
                        width: term.width,
                        coupling: term.replica_coupling(),
                    });
                }
            }
        }
        out
    }

    pub fn has_trap(&self) -> bool {
        self.environment.trap.is_some()
    }

    pub fn space(&self) -> CompositeSpace {
        let n = self.n_sites();
        let mut dims = vec![2; n];
        let mut subsystems: Vec<Subsystem> = (0..n).map(Subsystem::Site).collect();
        for (k, pm) in self.pseudomodes().iter().enumerate() {
            dims.push(pm.levels);
            subsystems.push(Subsystem::Pseudomode(k));
        }
        if self.has_trap() {
            dims.push(2);
            subsystems.push(Subsystem::ReactionCenter);
        }
        CompositeSpace { dims, subsystems }
    }

    /// Whether the dynamics conserves the number of system excitations.
    pub fn conserves_excitations(&self) -> bool {
        self.environment.relaxation_rates.iter().all(|r| *r == 0.0)
            && self.environment.trap.map_or(true, |t| t.rate == 0.0)
    }

    /// Full Hamiltonian `H_S + H_P + H_EP` on the composite space.
    pub fn hamiltonian(&self) -> Operator {
        let space = self.space();
        let sites: Vec<Subsystem> = (0..self.n_sites()).map(Subsystem::Site).collect();
        let hs = build_system_hamiltonian(&self.system);
        let (hp, hep) = pseudomode_terms(&space, &self.pseudomodes());
        space.embed(&sites, &hs) + hp + hep
    }

    /// `sum_i mu_i sigma_i^+` (raising) or its adjoint on the composite space.
    pub fn dipole_operator(&self, raising: bool) -> Operator {
        let space = self.space();
        let mut out = Operator::zeros(space.dim(), space.dim());
        for i in 0..self.n_sites() {
            out += self.site_ladder(i, raising) * C64::new(self.system.dipole(i), 0.0);
        }
        out
    }

    /// `sigma_i^+` or `sigma_i^-` on the composite space.
    pub fn site_ladder(&self, site: usize, raising: bool) -> Operator {
        let local = if raising { linalg::sigma_plus() } else { linalg::sigma_minus() };
        self.space().embed(&[Subsystem::Site(site)], &local)
    }

    /// Projector `|e_i><e_i|` on the composite space.
    pub fn site_population(&self, site: usize) -> Operator {
        let p = Operator::from_row_slice(2, 2, &[linalg::ZERO, linalg::ZERO, linalg::ZERO, linalg::ONE]);
        self.space().embed(&[Subsystem::Site(site)], &p)
    }

    /// Product state: system ground state, pseudomodes in vacuum, reaction
    /// center empty. With `excited_site` the given chromophore is excited.
    pub fn initial_state(&self, excited_site: Option<usize>) -> Operator {
        let space = self.space();
        let mut index = 0usize;
        if let Some(site) = excited_site {
            let k = space.index_of(Subsystem::Site(site));
            let stride: usize = space.dims[k + 1..].iter().product();
            index = stride;
        }
        let d = space.dim();
        let mut rho = Operator::zeros(d, d);
        rho[(index, index)] = linalg::ONE;
        rho
    }
}

/// `-sum_i eps_i/2 sigma_i^z + sum_{i<j} J_ij (sigma_i^+ sigma_j^- + h.c.)`
/// on the `2^N` one-hot space, with `sigma^z = |g><g| - |e><e|`.
pub fn build_system_hamiltonian(sys: &ExcitonSystem) -> Operator {
    let n = sys.n_sites();
    let dims = vec![2; n];
    let dim = 1usize << n;
    let mut h = Operator::zeros(dim, dim);
    for i in 0..n {
        h -= embed(&dims, &[i], &linalg::pauli_z()) * C64::new(sys.energy(i) / 2.0, 0.0);
    }
    let hop = linalg::kron(&linalg::sigma_plus(), &linalg::sigma_minus())
        + linalg::kron(&linalg::sigma_minus(), &linalg::sigma_plus());
    for (i, j, jij) in sys.coupled_pairs() {
        h += embed(&dims, &[i, j], &hop) * C64::new(jij, 0.0);
    }
    h
}

/// Pseudomode Hamiltonians `(H_P, H_EP)` on the composite space of `sys`
/// plus the pseudomodes of `terms`; every term must have finite width.
pub fn build_pseudomode_hamiltonians(
    sys: &ExcitonSystem,
    terms: &[LorentzianTerm],
) -> Result<(Operator, Operator)> {
    for t in terms {
        if t.is_memoryless() {
            return Err(Error::InvalidArgument(
                "memoryless term has no pseudomode Hamiltonian".into(),
            ));
        }
        t.validate()?;
    }
    let model = Model::new(sys.clone(), EnvironmentSpec::new(terms.to_vec()))?;
    Ok(pseudomode_terms(&model.space(), &model.pseudomodes()))
}

fn pseudomode_terms(space: &CompositeSpace, modes: &[Pseudomode]) -> (Operator, Operator) {
    let d = space.dim();
    let mut hp = Operator::zeros(d, d);
    let mut hep = Operator::zeros(d, d);
    let proj_e = Operator::from_row_slice(2, 2, &[linalg::ZERO, linalg::ZERO, linalg::ZERO, linalg::ONE]);
    for (k, pm) in modes.iter().enumerate() {
        let a = linalg::annihilation(pm.levels);
        let num = a.adjoint() * &a;
        let target = Subsystem::Pseudomode(k);
        if pm.frequency != 0.0 {
            hp += space.embed(&[target], &num) * C64::new(pm.frequency, 0.0);
        }
        if pm.coupling != 0.0 {
            let x = &a + a.adjoint();
            let local = kron_all([&proj_e, &x]);
            hep += space.embed(&[Subsystem::Site(pm.site), target], &local) * C64::new(pm.coupling, 0.0);
        }
    }
    (hp, hep)
}
