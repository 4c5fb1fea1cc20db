//! Lindblad master-equation propagation on the system plus pseudomode space.
//!
//! The generator is kept in the form
//! `d rho/dt = (1/hbar) (-i K rho + i rho K^dag + sum_j g_j L_j rho L_j^dag)`
//! with the effective non-Hermitian `K = H - (i/2) sum_j g_j L_j^dag L_j`,
//! and applied with sparse left/right products. Dense superoperators are only
//! formed on request.

use crate::error::{Error, Result};
use crate::linalg::{self, max_abs, Operator, SparseOp, C64, I, ONE, ZERO};
use crate::model::{CompositeSpace, Model, Subsystem};

/// A state of the composite register.
///
/// Perturbative intermediates (after dipole interactions) are flagged
/// non-physical: they need be neither Hermitian nor normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    data: Operator,
    physical: bool,
}

impl DensityMatrix {
    /// Wraps a physical state, checking Hermiticity and unit trace.
    pub fn physical(data: Operator) -> Result<Self> {
        if !data.is_square() {
            return Err(Error::DimensionMismatch("density matrix must be square".into()));
        }
        let herm = linalg::hermiticity_error(&data);
        if herm > 1e-10 {
            return Err(Error::NotHermitian(herm));
        }
        let tr = linalg::trace(&data);
        if (tr - ONE).norm() > 1e-10 {
            return Err(Error::InvalidArgument(format!("trace {tr} differs from 1")));
        }
        Ok(Self { data, physical: true })
    }

    pub fn perturbative(data: Operator) -> Self {
        Self { data, physical: false }
    }

    pub fn is_physical(&self) -> bool {
        self.physical
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn data(&self) -> &Operator {
        &self.data
    }

    pub fn into_data(self) -> Operator {
        self.data
    }

    pub fn trace(&self) -> C64 {
        linalg::trace(&self.data)
    }

    pub fn purity(&self) -> f64 {
        (&self.data * &self.data).trace().re
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        linalg::hermitian_eigenvalues(&self.data)[0]
    }

    pub fn expectation(&self, op: &Operator) -> C64 {
        (op * &self.data).trace()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DissipatorKind {
    /// `a` at rate `2 * width`.
    PseudomodeDecay,
    /// `sigma^z` at rate `amplitude / 4`.
    MemorylessDephasing,
    /// `sigma^-` of one site.
    SiteRelaxation,
    /// `sigma_j^- sigma_rc^+`.
    Trap,
}

/// One Lindblad channel. `targets` are subsystem positions in the
/// [`CompositeSpace`] the jump operator acts on.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipatorSpec {
    pub kind: DissipatorKind,
    pub rate: f64,
    pub targets: Vec<usize>,
}

impl DissipatorSpec {
    /// Local jump operator on the target subsystems.
    pub fn local_jump(&self, space: &CompositeSpace) -> Result<Operator> {
        let expect = match self.kind {
            DissipatorKind::Trap => 2,
            _ => 1,
        };
        if self.targets.len() != expect || self.targets.iter().any(|&t| t >= space.dims.len()) {
            return Err(Error::InvalidArgument(format!("bad targets {:?} for {:?}", self.targets, self.kind)));
        }
        let d0 = space.dims[self.targets[0]];
        Ok(match self.kind {
            DissipatorKind::PseudomodeDecay => linalg::annihilation(d0),
            DissipatorKind::MemorylessDephasing => linalg::pauli_z(),
            DissipatorKind::SiteRelaxation => linalg::sigma_minus(),
            DissipatorKind::Trap => linalg::kron(&linalg::sigma_minus(), &linalg::sigma_plus()),
        })
    }

    pub fn jump(&self, space: &CompositeSpace) -> Result<Operator> {
        let local = self.local_jump(space)?;
        let subs: Vec<Subsystem> = self.targets.iter().map(|&t| space.subsystems[t]).collect();
        Ok(space.embed(&subs, &local))
    }
}

/// Dissipators implied by a model's environment, in collision-channel order.
pub fn model_dissipators(model: &Model) -> Vec<DissipatorSpec> {
    use crate::model::CollisionChannel;
    let space = model.space();
    let modes = model.pseudomodes();
    model
        .collision_channels()
        .into_iter()
        .map(|ch| match ch {
            CollisionChannel::Pseudomode(k) => DissipatorSpec {
                kind: DissipatorKind::PseudomodeDecay,
                rate: 2.0 * modes[k].width,
                targets: vec![space.index_of(Subsystem::Pseudomode(k))],
            },
            CollisionChannel::Memoryless { site, term } => DissipatorSpec {
                kind: DissipatorKind::MemorylessDephasing,
                rate: model.environment.terms[term].amplitude / 4.0,
                targets: vec![space.index_of(Subsystem::Site(site))],
            },
            CollisionChannel::Relaxation { site } => DissipatorSpec {
                kind: DissipatorKind::SiteRelaxation,
                rate: model.environment.relaxation_rate(site),
                targets: vec![space.index_of(Subsystem::Site(site))],
            },
            CollisionChannel::Trap => {
                let trap = model.environment.trap.expect("trap channel without trap");
                DissipatorSpec {
                    kind: DissipatorKind::Trap,
                    rate: trap.rate,
                    targets: vec![
                        space.index_of(Subsystem::Site(trap.site)),
                        space.index_of(Subsystem::ReactionCenter),
                    ],
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
struct Generator {
    effective: SparseOp,
    jumps: Vec<SparseOp>,
}

/// Lindblad generator acting on (possibly rectangular) operator blocks.
///
/// `ket` acts from the left and `bra` from the right; for the full space both
/// sides coincide.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    hbar: f64,
    rates: Vec<f64>,
    ket: Generator,
    bra: Generator,
    // dense copies kept for restriction
    effective_dense: Operator,
    jumps_dense: Vec<Operator>,
}

/// Builds the generator for `H` and the given dissipators on `space`.
pub fn build_liouvillian(
    h: &Operator,
    dissipators: &[DissipatorSpec],
    space: &CompositeSpace,
    hbar: f64,
) -> Result<Liouvillian> {
    let mut jumps = Vec::with_capacity(dissipators.len());
    for d in dissipators {
        if !(d.rate >= 0.0) {
            return Err(Error::InvalidArgument(format!("dissipator rate {} must be >= 0", d.rate)));
        }
        jumps.push((d.rate, d.jump(space)?));
    }
    Liouvillian::new(h, jumps, hbar)
}

impl Liouvillian {
    /// Generator from a Hermitian `h` and `(rate, jump)` pairs.
    pub fn new(h: &Operator, jumps: Vec<(f64, Operator)>, hbar: f64) -> Result<Self> {
        let herm = linalg::hermiticity_error(h);
        if herm > 1e-10 * max_abs(h).max(1.0) {
            return Err(Error::NotHermitian(herm));
        }
        let dim = h.nrows();
        let mut effective = h.clone();
        let mut rates = Vec::new();
        let mut jumps_dense = Vec::new();
        for (rate, l) in jumps {
            if l.nrows() != dim {
                return Err(Error::DimensionMismatch("jump operator dimension".into()));
            }
            if rate == 0.0 {
                continue;
            }
            effective -= SparseOp::from_dense(&l).gram() * C64::new(0.0, 0.5 * rate);
            rates.push(rate);
            jumps_dense.push(l);
        }
        let gen = Generator {
            effective: SparseOp::from_dense(&effective),
            jumps: jumps_dense.iter().map(SparseOp::from_dense).collect(),
        };
        Ok(Self {
            hbar,
            rates,
            ket: gen.clone(),
            bra: gen,
            effective_dense: effective,
            jumps_dense,
        })
    }

    pub fn for_model(model: &Model) -> Result<Self> {
        build_liouvillian(&model.hamiltonian(), &model_dissipators(model), &model.space(), model.hbar)
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// `(rows, cols)` of the operator blocks this generator acts on.
    pub fn shape(&self) -> (usize, usize) {
        (self.ket.effective.dim(), self.bra.effective.dim())
    }

    /// Restricts to the block `rho[ket, bra]`. Both index sets must span
    /// subspaces invariant under every operator of the generator.
    pub fn restrict(&self, ket: &[usize], bra: &[usize]) -> Result<Self> {
        let side = |idx: &[usize]| -> Result<Generator> {
            let effective = SparseOp::from_dense(&submatrix_checked(&self.effective_dense, idx)?);
            let jumps = self
                .jumps_dense
                .iter()
                .map(|l| submatrix_checked(l, idx).map(|m| SparseOp::from_dense(&m)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Generator { effective, jumps })
        };
        Ok(Self {
            hbar: self.hbar,
            rates: self.rates.clone(),
            ket: side(ket)?,
            bra: side(bra)?,
            effective_dense: self.effective_dense.clone(),
            jumps_dense: self.jumps_dense.clone(),
        })
    }

    /// `out = L[rho]`, using `scratch` (same shape as `rho`) as workspace.
    pub fn apply_into(&self, rho: &Operator, out: &mut Operator, scratch: &mut Operator) {
        out.fill(ZERO);
        let inv = 1.0 / self.hbar;
        self.ket.effective.left_mul_acc(C64::new(0.0, -inv), rho, out);
        self.bra.effective.right_mul_adjoint_acc(C64::new(0.0, inv), rho, out);
        for ((rate, lk), lb) in self.rates.iter().zip(&self.ket.jumps).zip(&self.bra.jumps) {
            scratch.fill(ZERO);
            lk.left_mul_acc(ONE, rho, scratch);
            lb.right_mul_adjoint_acc(C64::new(rate * inv, 0.0), scratch, out);
        }
    }

    pub fn apply(&self, rho: &Operator) -> Operator {
        let mut out = Operator::zeros(rho.nrows(), rho.ncols());
        let mut scratch = out.clone();
        self.apply_into(rho, &mut out, &mut scratch);
        out
    }

    /// Upper bound on the operator norm of the generator.
    pub fn norm_bound(&self) -> f64 {
        let mut b = self.ket.effective.norm_bound() + self.bra.effective.norm_bound();
        for ((rate, lk), lb) in self.rates.iter().zip(&self.ket.jumps).zip(&self.bra.jumps) {
            b += rate * lk.norm_bound() * lb.norm_bound();
        }
        b / self.hbar
    }

    /// Dense superoperator on column-stacked `vec(rho)`; unrestricted only.
    pub fn superoperator(&self) -> Operator {
        let d = self.effective_dense.nrows();
        let id = linalg::identity(d);
        let k = &self.effective_dense;
        let mut s = linalg::kron(&id, k) * (-I) + linalg::kron(&k.map(|z| z.conj()), &id) * I;
        for (rate, l) in self.rates.iter().zip(&self.jumps_dense) {
            s += linalg::kron(&l.map(|z| z.conj()), l) * C64::new(*rate, 0.0);
        }
        s / C64::new(self.hbar, 0.0)
    }
}

fn submatrix_checked(op: &Operator, idx: &[usize]) -> Result<Operator> {
    let n = op.nrows();
    let mut inside = vec![false; n];
    for &i in idx {
        inside[i] = true;
    }
    for &c in idx {
        for r in 0..n {
            if !inside[r] && op[(r, c)].norm() > 1e-14 {
                return Err(Error::InvalidArgument(format!(
                    "index set is not invariant: column {c} leaks into row {r}"
                )));
            }
        }
    }
    Ok(Operator::from_fn(idx.len(), idx.len(), |r, c| op[(idx[r], idx[c])]))
}

/// Number of excited chromophores (plus the reaction center) per basis index.
pub fn excitation_numbers(model: &Model) -> Vec<usize> {
    let space = model.space();
    let dim = space.dim();
    let mut strides = vec![1usize; space.dims.len()];
    for k in (0..space.dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * space.dims[k + 1];
    }
    let counted: Vec<usize> = space
        .subsystems
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, Subsystem::Site(_) | Subsystem::ReactionCenter))
        .map(|(k, _)| k)
        .collect();
    (0..dim)
        .map(|idx| counted.iter().map(|&k| (idx / strides[k]) % 2).sum())
        .collect()
}

/// Basis indices with exactly `n` excitations.
pub fn excitation_sector(model: &Model, n: usize) -> Vec<usize> {
    excitation_numbers(model)
        .into_iter()
        .enumerate()
        .filter(|(_, k)| *k == n)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Integrator {
    /// Classical fourth-order Runge-Kutta with `substeps` per step.
    Rk4 { substeps: usize },
    /// Exponential of the generator, evaluated as a scaled Taylor series
    /// converged to machine precision.
    Exponential,
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator::Rk4 { substeps: 1 }
    }
}

/// Fixed-step propagator `exp(L dt)` (exact or Runge-Kutta).
#[derive(Debug, Clone)]
pub struct Propagator {
    generator: Liouvillian,
    dt: f64,
    integrator: Integrator,
    substeps: usize,
}

/// Per-step tolerance on trace drift.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-8;

impl Propagator {
    pub fn new(generator: Liouvillian, dt: f64, integrator: Integrator) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!("time step {dt} must be > 0")));
        }
        let substeps = match integrator {
            Integrator::Rk4 { substeps } => {
                if substeps == 0 {
                    return Err(Error::InvalidArgument("substeps must be >= 1".into()));
                }
                substeps
            }
            Integrator::Exponential => ((generator.norm_bound() * dt / 0.5).ceil() as usize).max(1),
        };
        Ok(Self { generator, dt, integrator, substeps })
    }

    pub fn for_model(model: &Model, dt: f64, integrator: Integrator) -> Result<Self> {
        Self::new(Liouvillian::for_model(model)?, dt, integrator)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn generator(&self) -> &Liouvillian {
        &self.generator
    }

    /// Same propagator on the block `rho[ket, bra]`.
    pub fn restrict(&self, ket: &[usize], bra: &[usize]) -> Result<Self> {
        Self::new(self.generator.restrict(ket, bra)?, self.dt, self.integrator)
    }

    /// Number of steps covering `t`; errors unless `t` is a multiple of `dt`.
    pub fn step_count(&self, t: f64) -> Result<usize> {
        step_count(t, self.dt)
    }

    /// Advances `rho` by one step, rejecting the step on trace drift.
    pub fn step(&self, rho: &mut Operator) -> Result<()> {
        let square = rho.nrows() == rho.ncols();
        let before = if square { linalg::trace(rho) } else { ZERO };
        match self.integrator {
            Integrator::Rk4 { .. } => self.rk4(rho),
            Integrator::Exponential => self.taylor(rho),
        }
        if square {
            let after = linalg::trace(rho);
            let drift = (after - before).norm();
            if !(drift <= TRACE_DRIFT_LIMIT * before.norm().max(1.0)) {
                return Err(Error::TraceDrift { drift, limit: TRACE_DRIFT_LIMIT });
            }
        }
        Ok(())
    }

    pub fn advance(&self, rho: &mut Operator, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step(rho)?;
        }
        Ok(())
    }

    pub fn evolve(&self, rho: &Operator, t: f64) -> Result<Operator> {
        let n = self.step_count(t)?;
        let mut out = rho.clone();
        self.advance(&mut out, n)?;
        Ok(out)
    }

    pub fn propagate(&self, rho: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
        let data = self.evolve(rho.data(), t)?;
        Ok(DensityMatrix { data, physical: rho.is_physical() })
    }

    fn rk4(&self, rho: &mut Operator) {
        let h = self.dt / self.substeps as f64;
        let (r, c) = (rho.nrows(), rho.ncols());
        let mut k = Operator::zeros(r, c);
        let mut acc = Operator::zeros(r, c);
        let mut stage = Operator::zeros(r, c);
        let mut scratch = Operator::zeros(r, c);
        for _ in 0..self.substeps {
            // k1
            self.generator.apply_into(rho, &mut k, &mut scratch);
            acc.copy_from(&k);
            stage.copy_from(rho);
            axpy(&mut stage, C64::new(0.5 * h, 0.0), &k);
            // k2
            self.generator.apply_into(&stage, &mut k, &mut scratch);
            axpy(&mut acc, C64::new(2.0, 0.0), &k);
            stage.copy_from(rho);
            axpy(&mut stage, C64::new(0.5 * h, 0.0), &k);
            // k3
            self.generator.apply_into(&stage, &mut k, &mut scratch);
            axpy(&mut acc, C64::new(2.0, 0.0), &k);
            stage.copy_from(rho);
            axpy(&mut stage, C64::new(h, 0.0), &k);
            // k4
            self.generator.apply_into(&stage, &mut k, &mut scratch);
            acc += &k;
            axpy(rho, C64::new(h / 6.0, 0.0), &acc);
        }
    }

    fn taylor(&self, rho: &mut Operator) {
        let h = self.dt / self.substeps as f64;
        let (r, c) = (rho.nrows(), rho.ncols());
        let mut term = Operator::zeros(r, c);
        let mut next = Operator::zeros(r, c);
        let mut scratch = Operator::zeros(r, c);
        for _ in 0..self.substeps {
            term.copy_from(rho);
            for order in 1..=60 {
                self.generator.apply_into(&term, &mut next, &mut scratch);
                next *= C64::new(h / order as f64, 0.0);
                *rho += &next;
                std::mem::swap(&mut term, &mut next);
                let scale = max_abs(rho);
                if max_abs(&term) <= 1e-17 * scale.max(f64::MIN_POSITIVE) {
                    break;
                }
            }
        }
    }
}

/// `y += a * x`.
pub(crate) fn axpy(y: &mut Operator, a: C64, x: &Operator) {
    for (yi, xi) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yi += a * xi;
    }
}

pub fn step_count(t: f64, dt: f64) -> Result<usize> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("time {t} must be finite and >= 0")));
    }
    let n = (t / dt).round();
    if (n * dt - t).abs() > 1e-9 * t.max(dt) {
        return Err(Error::IncommensurateTime { time: t, step: dt });
    }
    Ok(n as usize)
}

/// Propagates a state of `model` for `t_total` in steps of `dt`.
pub fn propagate(
    model: &Model,
    rho: &DensityMatrix,
    t_total: f64,
    dt: f64,
    integrator: Integrator,
) -> Result<DensityMatrix> {
    Propagator::for_model(model, dt, integrator)?.propagate(rho, t_total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Ket,
    Bra,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DipoleTarget {
    Full,
    Site(usize),
}

/// Light-matter interaction on one side of the density matrix.
///
/// `excite` follows the diagram arrow: a ket-side excitation multiplies by
/// `mu^+` from the left, a bra-side excitation multiplies by
/// `(mu^+)^dag = mu^-` from the right, and conversely for de-excitations.
pub fn apply_dipole(
    model: &Model,
    rho: &DensityMatrix,
    side: Side,
    excite: bool,
    target: DipoleTarget,
) -> DensityMatrix {
    let op = dipole_factor(model, side, excite, target);
    let data = match side {
        Side::Ket => &op * rho.data(),
        Side::Bra => rho.data() * &op,
    };
    DensityMatrix::perturbative(data)
}

/// The operator multiplying `rho` (from the left for ket events, from the
/// right for bra events).
pub fn dipole_factor(model: &Model, side: Side, excite: bool, target: DipoleTarget) -> Operator {
    let raising = match side {
        Side::Ket => excite,
        Side::Bra => !excite,
    };
    match target {
        DipoleTarget::Full => model.dipole_operator(raising),
        DipoleTarget::Site(i) => model.site_ladder(i, raising) * C64::new(model.system.dipole(i), 0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    /// `<e_i|rho|e_i>` reduced over the environment.
    Population(usize),
    /// `Tr{sigma_i^- sigma_j^+ rho}`, i.e. the `|e_j><e_i|` element.
    Coherence(usize, usize),
}

impl Observable {
    pub fn label(&self) -> String {
        match self {
            Observable::Population(i) => format!("pop_{}", i + 1),
            Observable::Coherence(i, j) => format!("coh_{}_{}", i + 1, j + 1),
        }
    }

    pub fn operator(&self, model: &Model) -> Operator {
        match *self {
            Observable::Population(i) => model.site_population(i),
            Observable::Coherence(i, j) => model.site_ladder(i, false) * model.site_ladder(j, true),
        }
    }
}

/// Sampled expectation values along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    pub values: Vec<Vec<C64>>,
}

/// Propagates `rho` to `t_total`, recording `observables` every
/// `sample_every` (a multiple of the step).
pub fn trajectory(
    model: &Model,
    propagator: &Propagator,
    rho: &DensityMatrix,
    t_total: f64,
    sample_every: f64,
    observables: &[Observable],
) -> Result<Trajectory> {
    let total = propagator.step_count(t_total)?;
    let every = propagator.step_count(sample_every)?.max(1);
    let ops: Vec<SparseOp> = observables.iter().map(|o| SparseOp::from_dense(&o.operator(model))).collect();
    let mut out = Trajectory {
        times: Vec::new(),
        labels: observables.iter().map(Observable::label).collect(),
        values: Vec::new(),
    };
    let mut state = rho.data().clone();
    let mut record = |step: usize, state: &Operator| {
        out.times.push(step as f64 * propagator.dt());
        out.values.push(ops.iter().map(|o| sparse_expectation(o, state)).collect());
    };
    record(0, &state);
    for s in 1..=total {
        propagator.step(&mut state)?;
        if s % every == 0 || s == total {
            record(s, &state);
        }
    }
    Ok(out)
}

/// `Tr{A rho}` for sparse `A`.
pub fn sparse_expectation(a: &SparseOp, rho: &Operator) -> C64 {
    let dense = a.left_mul(rho);
    linalg::trace(&dense)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EnvironmentSpec, ExcitonSystem, LorentzianTerm, HBAR_EV_FS};

    fn monomer(env: EnvironmentSpec) -> Model {
        Model::new(ExcitonSystem::monomer(1.55, 1.0).unwrap(), env).unwrap()
    }

    fn plus_state(model: &Model) -> DensityMatrix {
        let d = model.space().dim();
        let mut psi = Operator::zeros(d, 1);
        let stride = d / 2;
        psi[(0, 0)] = C64::new(0.5f64.sqrt(), 0.0);
        psi[(stride, 0)] = C64::new(0.5f64.sqrt(), 0.0);
        DensityMatrix::physical(&psi * psi.adjoint()).unwrap()
    }

    #[test]
    fn memoryless_dephasing_matches_analytic() {
        let gamma = 0.05908;
        let model = monomer(EnvironmentSpec::new(vec![LorentzianTerm::memoryless(gamma)]));
        let p = Propagator::for_model(&model, 0.1, Integrator::Exponential).unwrap();
        let rho0 = plus_state(&model);
        let rho = p.propagate(&rho0, 50.0).unwrap();
        // |g> = index 0, |e> = index 1
        let expect = 0.5 * (-gamma * 50.0 / (2.0 * HBAR_EV_FS)).exp();
        assert!((rho.data()[(1, 0)].norm() - expect).abs() < 1e-12);
        assert!((rho.data()[(0, 0)].re - 0.5).abs() < 1e-13);
        assert!((rho.data()[(1, 1)].re - 0.5).abs() < 1e-13);
    }

    #[test]
    fn pseudomode_population_decays_at_twice_width() {
        let width = 0.1;
        let model = Model::new(
            ExcitonSystem::monomer(0.0, 1.0).unwrap(),
            EnvironmentSpec::new(vec![LorentzianTerm::finite(1e-30, width, 0.0)]),
        )
        .unwrap();
        let d = model.space().dim();
        let mut rho = Operator::zeros(d, d);
        rho[(1, 1)] = ONE;
        let p = Propagator::for_model(&model, 0.5, Integrator::Exponential).unwrap();
        let out = p.evolve(&rho, 20.0).unwrap();
        let expect = (-2.0 * width * 20.0 / HBAR_EV_FS).exp();
        assert!((out[(1, 1)].re - expect).abs() < 1e-10);
    }

    #[test]
    fn closed_dynamics_conserves_purity() {
        let model = Model::new(ExcitonSystem::dimer(1.55, 1.46, -0.01, 1.0, 1.0).unwrap(), EnvironmentSpec::empty()).unwrap();
        let d = model.space().dim();
        let mut psi = Operator::zeros(d, 1);
        psi[(0, 0)] = C64::new(0.6, 0.0);
        psi[(2, 0)] = C64::new(0.0, 0.8);
        let rho0 = DensityMatrix::physical(&psi * psi.adjoint()).unwrap();
        let p = Propagator::for_model(&model, 0.1, Integrator::Exponential).unwrap();
        let rho = p.propagate(&rho0, 30.0).unwrap();
        assert!((rho.purity() - 1.0).abs() < 1e-12);
        assert!((rho.trace() - ONE).norm() < 1e-12);
    }

    #[test]
    fn zero_time_is_identity() {
        let model = monomer(EnvironmentSpec::new(vec![LorentzianTerm::finite(0.05, 0.1, 0.0)]));
        let p = Propagator::for_model(&model, 0.1, Integrator::default()).unwrap();
        let rho = DensityMatrix::physical(model.initial_state(Some(0))).unwrap();
        assert_eq!(p.propagate(&rho, 0.0).unwrap(), rho);
    }

    #[test]
    fn rejects_incommensurate_time() {
        let model = monomer(EnvironmentSpec::empty());
        let p = Propagator::for_model(&model, 0.1, Integrator::default()).unwrap();
        let rho = DensityMatrix::physical(model.initial_state(None)).unwrap();
        assert!(matches!(p.propagate(&rho, 0.25), Err(Error::IncommensurateTime { .. })));
        assert!(p.step_count(10.0).unwrap() == 100);
    }

    #[test]
    fn rejects_non_hermitian_hamiltonian() {
        let h = linalg::sigma_plus();
        assert!(matches!(Liouvillian::new(&h, vec![], 1.0), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn exponential_agrees_with_dense_superoperator() {
        let env = EnvironmentSpec::new(vec![
            LorentzianTerm::finite(0.05908, 0.1, 0.02),
            LorentzianTerm::memoryless(0.02),
        ])
        .with_relaxation(vec![0.001, 0.002]);
        let model = Model::new(ExcitonSystem::dimer(1.55, 1.46, -0.01, 1.0, 0.7).unwrap(), env).unwrap();
        let l = Liouvillian::for_model(&model).unwrap();
        let rho = model.initial_state(Some(1));
        let d = rho.nrows();
        let vec_rho = Operator::from_column_slice(d * d, 1, rho.as_slice());
        let exact = (l.superoperator() * C64::new(2.0, 0.0)).exp() * vec_rho;
        let p = Propagator::new(l.clone(), 2.0, Integrator::Exponential).unwrap();
        let mut out = rho.clone();
        p.step(&mut out).unwrap();
        let diff = Operator::from_column_slice(d * d, 1, out.as_slice()) - exact;
        assert!(max_abs(&diff) < 1e-12);
        // generator applied directly equals the superoperator action
        let lr = l.apply(&rho);
        let sv = l.superoperator() * Operator::from_column_slice(d * d, 1, rho.as_slice());
        assert!(max_abs(&(Operator::from_column_slice(d * d, 1, lr.as_slice()) - sv)) < 1e-12);
    }

    #[test]
    fn rk4_converges_at_fourth_order() {
        let env = EnvironmentSpec::new(vec![LorentzianTerm::finite(0.05908, 0.1, 0.0)]);
        let model = Model::new(ExcitonSystem::dimer(1.55, 1.46, -0.01, 1.0, 1.0).unwrap(), env).unwrap();
        let l = Liouvillian::for_model(&model).unwrap();
        let rho = model.initial_state(Some(0)) * C64::new(0.5, 0.0) + model.dipole_operator(true) * model.initial_state(None) * C64::new(0.5, 0.0);
        let reference = Propagator::new(l.clone(), 1.0, Integrator::Exponential).unwrap().evolve(&rho, 8.0).unwrap();
        let err = |dt: f64| {
            let out = Propagator::new(l.clone(), dt, Integrator::Rk4 { substeps: 1 }).unwrap().evolve(&rho, 8.0).unwrap();
            max_abs(&(out - &reference))
        };
        let (e1, e2) = (err(0.4), err(0.2));
        let slope = (e1 / e2).log2();
        assert!((slope - 4.0).abs() < 0.3, "slope {slope}");
    }

    #[test]
    fn trace_and_positivity_over_long_window() {
        let env = EnvironmentSpec::new(vec![LorentzianTerm::finite(0.05908, 0.1, 0.0), LorentzianTerm::memoryless(0.01)]);
        let model = Model::new(ExcitonSystem::dimer(1.55, 1.46, -0.01, 1.0, 1.0).unwrap(), env).unwrap();
        let p = Propagator::for_model(&model, 0.1, Integrator::Rk4 { substeps: 1 }).unwrap();
        let mut rho = DensityMatrix::physical(model.initial_state(Some(0))).unwrap();
        for _ in 0..4 {
            rho = p.propagate(&rho, 50.0).unwrap();
            assert!((rho.trace() - ONE).norm() < 1e-8);
            assert!(linalg::hermiticity_error(rho.data()) < 1e-10);
            assert!(rho.min_eigenvalue() > -1e-8);
        }
    }

    #[test]
    fn composition_property() {
        let model = monomer(EnvironmentSpec::new(vec![LorentzianTerm::finite(0.05908, 0.1, 0.0).with_levels(4)]));
        let p = Propagator::for_model(&model, 0.1, Integrator::Rk4 { substeps: 1 }).unwrap();
        let rho = plus_state(&model);
        let two = p.propagate(&p.propagate(&rho, 3.0).unwrap(), 4.0).unwrap();
        let once = p.propagate(&rho, 7.0).unwrap();
        assert!(max_abs(&(two.data() - once.data())) < 1e-14);
    }

    #[test]
    fn wide_pseudomode_reproduces_memoryless_dephasing() {
        let gamma = 0.05908;
        let width = 100.0 * 1.55;
        // g^2 / width = Gamma / 2 is the dephasing rate once the mode is fast
        let wide = monomer(EnvironmentSpec::new(vec![LorentzianTerm::finite(gamma, width, 0.0).with_levels(3)]));
        let flat = monomer(EnvironmentSpec::new(vec![LorentzianTerm::memoryless(gamma)]));
        let coherence = |m: &Model, dt: f64| -> Vec<f64> {
            let p = Propagator::for_model(m, dt, Integrator::Exponential).unwrap();
            let mut rho = plus_state(m).into_data();
            let lower = SparseOp::from_dense(&m.site_ladder(0, false));
            let mut out = vec![];
            for _ in 0..10 {
                p.advance(&mut rho, p.step_count(5.0).unwrap()).unwrap();
                out.push(sparse_expectation(&lower, &rho).norm());
            }
            out
        };
        let a = coherence(&wide, 0.005);
        let b = coherence(&flat, 0.005);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() / y < 1e-2, "{x} vs {y}");
        }
    }

    #[test]
    fn dipole_ladder_algebra() {
        let model = monomer(EnvironmentSpec::empty());
        let g = DensityMatrix::physical(model.initial_state(None)).unwrap();
        let ket = apply_dipole(&model, &g, Side::Ket, true, DipoleTarget::Full);
        assert!(!ket.is_physical());
        assert_eq!(ket.data()[(1, 0)], ONE);
        let both = apply_dipole(&model, &ket, Side::Bra, true, DipoleTarget::Full);
        assert_eq!(both.data()[(1, 1)], ONE);
        let lowered = apply_dipole(&model, &g, Side::Ket, false, DipoleTarget::Full);
        assert_eq!(max_abs(lowered.data()), 0.0);
        let twice = apply_dipole(&model, &ket, Side::Ket, true, DipoleTarget::Site(0));
        assert_eq!(max_abs(twice.data()), 0.0);
    }

    #[test]
    fn sector_restriction_matches_full_propagation() {
        let env = EnvironmentSpec::new(vec![LorentzianTerm::finite(0.2, 0.1, 0.0).with_split(2)]);
        let model = Model::with_hbar(ExcitonSystem::dimer(0.0, 0.0, 1.0, 1.0, 1.0).unwrap(), env, 1.0).unwrap();
        let p = Propagator::for_model(&model, 0.05, Integrator::Rk4 { substeps: 1 }).unwrap();
        let one = excitation_sector(&model, 1);
        let sub = p.restrict(&one, &one).unwrap();
        let rho = model.initial_state(Some(0));
        let full = p.evolve(&rho, 2.0).unwrap();
        let block = Operator::from_fn(one.len(), one.len(), |r, c| rho[(one[r], one[c])]);
        let reduced = sub.evolve(&block, 2.0).unwrap();
        for (r, &i) in one.iter().enumerate() {
            for (c, &j) in one.iter().enumerate() {
                assert!((reduced[(r, c)] - full[(i, j)]).norm() < 1e-13);
            }
        }
        let relax = Model::new(
            ExcitonSystem::dimer(1.0, 1.0, 0.1, 1.0, 1.0).unwrap(),
            EnvironmentSpec::empty().with_relaxation(vec![0.1, 0.1]),
        )
        .unwrap();
        let lr = Liouvillian::for_model(&relax).unwrap();
        let s1 = excitation_sector(&relax, 1);
        assert!(lr.restrict(&s1, &s1).is_err());
    }

    #[test]
    fn trap_moves_population_to_reaction_center() {
        let model = Model::new(
            ExcitonSystem::monomer(1.0, 1.0).unwrap(),
            EnvironmentSpec::empty().with_trap(0, 0.05),
        )
        .unwrap();
        let p = Propagator::for_model(&model, 0.5, Integrator::Exponential).unwrap();
        let rho = p.evolve(&model.initial_state(Some(0)), 10.0).unwrap();
        let pe = (model.site_population(0) * &rho).trace().re;
        assert!((pe - (-0.05 * 10.0 / HBAR_EV_FS).exp()).abs() < 1e-10);
        // index 0b01 = ground site, filled reaction center
        assert!((rho[(1, 1)].re - (1.0 - pe)).abs() < 1e-10);
    }

    #[test]
    fn trajectory_samples() {
        let model = monomer(EnvironmentSpec::empty());
        let p = Propagator::for_model(&model, 0.1, Integrator::default()).unwrap();
        let rho = DensityMatrix::physical(model.initial_state(Some(0))).unwrap();
        let tr = trajectory(&model, &p, &rho, 1.0, 0.5, &[Observable::Population(0)]).unwrap();
        assert_eq!(tr.times.len(), 3);
        assert!((tr.times[2] - 1.0).abs() < 1e-12);
        assert!(tr.values.iter().all(|v| (v[0] - ONE).norm() < 1e-12));
    }
}
