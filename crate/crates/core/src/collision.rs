//! Collision-model propagation: exact Hamiltonian step followed by one
//! collision per dissipative channel with a fresh ancilla in `|0>`.
//!
//! A collision couples the jump operator `L` of a channel to its ancilla
//! through `G = L (x) sigma^+ + L^dag (x) sigma^-` for a time `dt` at strength
//! `sqrt(rate * hbar / dt)`. Tracing the ancilla out leaves the Kraus
//! operators `K_b = <b| exp(-i theta G) |0>`, `theta = sqrt(rate dt / hbar)`.

use crate::dynamics::{model_dissipators, step_count, DissipatorKind, DissipatorSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, Operator, SparseOp, C64, ONE, ZERO};
use crate::model::{CompositeSpace, Model, Subsystem};

/// One step of the collision model.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionStepSpec {
    pub dt: f64,
    /// Trotter splits of the Hamiltonian block in circuit realizations.
    pub hamiltonian_trotter_steps: usize,
    /// Trotter splits of each collision in circuit realizations.
    pub collision_trotter_steps: usize,
    /// Collisions in application order.
    pub collisions: Vec<DissipatorSpec>,
}

impl CollisionStepSpec {
    pub fn for_model(model: &Model, dt: f64) -> Self {
        Self {
            dt,
            hamiltonian_trotter_steps: 1,
            collision_trotter_steps: 1,
            collisions: model_dissipators(model),
        }
    }

    pub fn with_trotter(mut self, hamiltonian: usize, collision: usize) -> Self {
        self.hamiltonian_trotter_steps = hamiltonian;
        self.collision_trotter_steps = collision;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidArgument(format!("collision step {} must be > 0", self.dt)));
        }
        if self.hamiltonian_trotter_steps == 0 || self.collision_trotter_steps == 0 {
            return Err(Error::InvalidArgument("Trotter step counts must be >= 1".into()));
        }
        if let Some(d) = self.collisions.iter().find(|d| !(d.rate >= 0.0)) {
            return Err(Error::InvalidArgument(format!("collision rate {} must be >= 0", d.rate)));
        }
        Ok(())
    }
}

/// `G = L (x) sigma^+ + L^dag (x) sigma^-` with the ancilla as last factor.
pub fn exchange_generator(jump: &Operator) -> Operator {
    linalg::kron(jump, &linalg::sigma_plus()) + linalg::kron(&jump.adjoint(), &linalg::sigma_minus())
}

/// Collision angle `sqrt(rate dt / hbar)`.
pub fn collision_angle(rate: f64, dt: f64, hbar: f64) -> f64 {
    (rate * dt / hbar).sqrt()
}

/// Collision Hamiltonian on (target (x) ancilla) in energy units, so that
/// `exp(-i H dt / hbar)` is the collision unitary.
pub fn collision_hamiltonian(
    kind: DissipatorKind,
    rate: f64,
    dt: f64,
    hbar: f64,
    target_dim: usize,
) -> Result<Operator> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("collision step {dt} must be > 0")));
    }
    if !(rate >= 0.0) {
        return Err(Error::InvalidArgument(format!("collision rate {rate} must be >= 0")));
    }
    let jump = match kind {
        DissipatorKind::PseudomodeDecay => linalg::annihilation(target_dim),
        DissipatorKind::MemorylessDephasing => linalg::pauli_z(),
        DissipatorKind::SiteRelaxation => linalg::sigma_minus(),
        DissipatorKind::Trap => linalg::kron(&linalg::sigma_minus(), &linalg::sigma_plus()),
    };
    if jump.nrows() != target_dim {
        return Err(Error::DimensionMismatch(format!(
            "{kind:?} acts on dimension {}, got {target_dim}",
            jump.nrows()
        )));
    }
    Ok(exchange_generator(&jump) * C64::new((rate * hbar / dt).sqrt(), 0.0))
}

/// Kraus operators `<b| exp(-i theta G) |0>` of a collision on a target of
/// dimension `jump.nrows()`.
pub fn collision_kraus(jump: &Operator, theta: f64) -> [Operator; 2] {
    let d = jump.nrows();
    let u = linalg::unitary_exp(&exchange_generator(jump), theta);
    // ancilla is the least significant factor
    let block = |b: usize| Operator::from_fn(d, d, |r, c| u[(2 * r + b, 2 * c)]);
    [block(0), block(1)]
}

/// Precomputed collision step on the composite space of a model.
#[derive(Debug, Clone)]
pub struct CollisionPropagator {
    spec: CollisionStepSpec,
    unitary: Operator,
    channels: Vec<[SparseOp; 2]>,
}

impl CollisionPropagator {
    pub fn new(model: &Model, spec: CollisionStepSpec) -> Result<Self> {
        spec.validate()?;
        let space = model.space();
        let unitary = linalg::unitary_exp(&model.hamiltonian(), spec.dt / model.hbar);
        let channels = spec
            .collisions
            .iter()
            .map(|d| channel_kraus(d, &space, spec.dt, model.hbar))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spec, unitary, channels })
    }

    pub fn for_model(model: &Model, dt: f64) -> Result<Self> {
        Self::new(model, CollisionStepSpec::for_model(model, dt))
    }

    pub fn spec(&self) -> &CollisionStepSpec {
        &self.spec
    }

    pub fn dt(&self) -> f64 {
        self.spec.dt
    }

    /// One collision step applied in place to any operator.
    pub fn step(&self, rho: &mut Operator) {
        *rho = &self.unitary * &*rho * self.unitary.adjoint();
        let mut scratch = Operator::zeros(rho.nrows(), rho.ncols());
        for kraus in &self.channels {
            let mut out = Operator::zeros(rho.nrows(), rho.ncols());
            for k in kraus {
                scratch.fill(ZERO);
                k.left_mul_acc(ONE, rho, &mut scratch);
                k.right_mul_adjoint_acc(ONE, &scratch, &mut out);
            }
            *rho = out;
        }
    }

    pub fn advance(&self, rho: &mut Operator, steps: usize) {
        for _ in 0..steps {
            self.step(rho);
        }
    }

    pub fn evolve(&self, rho: &Operator, t: f64) -> Result<Operator> {
        let n = step_count(t, self.spec.dt)?;
        let mut out = rho.clone();
        self.advance(&mut out, n);
        Ok(out)
    }

    /// Dense matrix of the step map on column-stacked operators.
    pub fn superoperator(&self) -> Operator {
        let d = self.unitary.nrows();
        let mut s = Operator::zeros(d * d, d * d);
        for c in 0..d * d {
            let mut e = Operator::zeros(d, d);
            e[(c % d, c / d)] = ONE;
            self.step(&mut e);
            s.column_mut(c).copy_from_slice(e.as_slice());
        }
        s
    }

    /// Choi matrix `sum_ij |i><j| (x) Phi(|i><j|)`.
    pub fn choi(&self) -> Operator {
        let d = self.unitary.nrows();
        let mut choi = Operator::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                let mut e = Operator::zeros(d, d);
                e[(i, j)] = ONE;
                self.step(&mut e);
                choi.view_mut((i * d, j * d), (d, d)).copy_from(&e);
            }
        }
        choi
    }
}

fn channel_kraus(d: &DissipatorSpec, space: &CompositeSpace, dt: f64, hbar: f64) -> Result<[SparseOp; 2]> {
    let local = d.local_jump(space)?;
    let theta = collision_angle(d.rate, dt, hbar);
    let subs: Vec<Subsystem> = d.targets.iter().map(|&t| space.subsystems[t]).collect();
    let [k0, k1] = collision_kraus(&local, theta);
    Ok([
        SparseOp::from_dense_tol(&space.embed(&subs, &k0), 1e-300),
        SparseOp::from_dense_tol(&space.embed(&subs, &k1), 1e-300),
    ])
}

/// Applies one collision step to `rho`.
pub fn collision_step(model: &Model, rho: &Operator, spec: &CollisionStepSpec) -> Result<Operator> {
    let p = CollisionPropagator::new(model, spec.clone())?;
    let mut out = rho.clone();
    p.step(&mut out);
    Ok(out)
}

/// Composition of `t / dt` collision steps.
pub fn propagate_collisions(model: &Model, rho: &Operator, t: f64, spec: &CollisionStepSpec) -> Result<Operator> {
    CollisionPropagator::new(model, spec.clone())?.evolve(rho, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Integrator, Propagator};
    use crate::linalg::{hermitian_eigenvalues, max_abs, trace, trace_distance};
    use crate::model::{EnvironmentSpec, ExcitonSystem, LorentzianTerm, HBAR_EV_FS};
    use proptest::prelude::*;

    fn table_dimer(env: EnvironmentSpec) -> Model {
        Model::new(ExcitonSystem::dimer(1.55, 1.46, -0.01, 1.0, 1.0).unwrap(), env).unwrap()
    }

    fn finite() -> EnvironmentSpec {
        EnvironmentSpec::new(vec![LorentzianTerm::finite(0.05908, 0.1, 0.0)])
    }

    fn mixed_state(model: &Model) -> Operator {
        let d = model.space().dim();
        let psi = Operator::from_fn(d, 1, |r, _| C64::new(1.0 + r as f64 * 0.1, (r as f64 * 0.7).sin()));
        let rho = &psi * psi.adjoint() + linalg::identity(d) * C64::new(0.3, 0.0);
        let tr = trace(&rho);
        rho / tr
    }

    #[test]
    fn pseudomode_coupling_example() {
        let h = collision_hamiltonian(DissipatorKind::PseudomodeDecay, 2.0 * 0.5, 0.01, 1.0, 2).unwrap();
        // <1_p, 0_c| H |0_p, 1_c> carries sqrt(2 * 0.5 / 0.01)
        assert!((h[(2, 1)].re - 10.0).abs() < 1e-12);
        assert!(linalg::is_hermitian(&h, 1e-15));
        let zero = collision_hamiltonian(DissipatorKind::SiteRelaxation, 0.0, 0.1, 1.0, 2).unwrap();
        assert_eq!(max_abs(&zero), 0.0);
        assert!(collision_hamiltonian(DissipatorKind::SiteRelaxation, 1.0, 0.0, 1.0, 2).is_err());
        let h2 = collision_hamiltonian(DissipatorKind::PseudomodeDecay, 1.0, 0.04, 1.0, 2).unwrap();
        assert!((h2[(2, 1)].re - 5.0).abs() < 1e-12);
    }

    #[test]
    fn memoryless_collision_dephasing_factor() {
        let gamma = 0.05908;
        let model = Model::new(
            ExcitonSystem::monomer(0.0, 1.0).unwrap(),
            EnvironmentSpec::new(vec![LorentzianTerm::memoryless(gamma)]),
        )
        .unwrap();
        let h = collision_hamiltonian(DissipatorKind::MemorylessDephasing, gamma / 4.0, 0.1, HBAR_EV_FS, 2).unwrap();
        // Z (x) X form with coupling sqrt(Gamma hbar / (4 dt))
        assert!((h[(0, 1)].re - (gamma * HBAR_EV_FS / 0.4).sqrt()).abs() < 1e-14);
        let mut errs = vec![];
        for dt in [0.4, 0.2, 0.1] {
            let p = CollisionPropagator::for_model(&model, dt).unwrap();
            let mut rho = Operator::from_element(2, 2, C64::new(0.5, 0.0));
            p.step(&mut rho);
            let factor = rho[(1, 0)].re / 0.5;
            errs.push((factor - (-gamma * dt / (2.0 * HBAR_EV_FS)).exp()).abs());
        }
        let slope = (errs[0] / errs[2]).log2() / 2.0;
        assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
    }

    #[test]
    fn pseudomode_population_after_one_collision() {
        let width = 0.1;
        let model = Model::new(
            ExcitonSystem::monomer(0.0, 1.0).unwrap(),
            EnvironmentSpec::new(vec![LorentzianTerm::finite(1e-30, width, 0.0)]),
        )
        .unwrap();
        let dt = 0.1;
        let p = CollisionPropagator::for_model(&model, dt).unwrap();
        let mut rho = Operator::zeros(4, 4);
        rho[(1, 1)] = ONE;
        p.step(&mut rho);
        let x = 2.0 * width * dt / HBAR_EV_FS;
        assert!((rho[(1, 1)].re - (1.0 - x)).abs() < x * x);
        assert!((rho[(1, 1)].re - x.sqrt().cos().powi(2)).abs() < 1e-14);
    }

    #[test]
    fn no_dissipation_is_unitary_conjugation() {
        let model = table_dimer(EnvironmentSpec::empty());
        let p = CollisionPropagator::for_model(&model, 0.1).unwrap();
        let rho = mixed_state(&model);
        let mut out = rho.clone();
        p.step(&mut out);
        let u = linalg::unitary_exp(&model.hamiltonian(), 0.1 / HBAR_EV_FS);
        assert!(max_abs(&(out - &u * rho * u.adjoint())) < 1e-14);
    }

    #[test]
    fn step_is_completely_positive_and_trace_preserving() {
        let env = finite().with_relaxation(vec![0.01, 0.02]).with_trap(1, 0.03);
        let model = table_dimer(env);
        let p = CollisionPropagator::for_model(&model, 0.1).unwrap();
        let choi = p.choi();
        assert!(choi.iter().all(|z| z.re.is_finite() && z.im.is_finite()), "non-finite choi");
        assert!(linalg::is_hermitian(&choi, 1e-12));
        assert!(hermitian_eigenvalues(&choi)[0] >= -1e-9);
        let rho = mixed_state(&model);
        let mut out = rho.clone();
        p.step(&mut out);
        assert!((trace(&out) - ONE).norm() <= 1e-10);
    }

    #[test]
    fn zero_time_is_identity() {
        let model = table_dimer(finite());
        let rho = mixed_state(&model);
        let out = propagate_collisions(&model, &rho, 0.0, &CollisionStepSpec::for_model(&model, 0.1)).unwrap();
        assert_eq!(out, rho);
        assert!(propagate_collisions(&model, &rho, 0.15, &CollisionStepSpec::for_model(&model, 0.1)).is_err());
    }

    #[test]
    fn local_error_is_second_order() {
        let model = table_dimer(finite());
        let rho = mixed_state(&model);
        let err = |dt: f64| {
            let col = collision_step(&model, &rho, &CollisionStepSpec::for_model(&model, dt)).unwrap();
            let lind = Propagator::for_model(&model, dt, Integrator::Exponential).unwrap().evolve(&rho, dt).unwrap();
            trace_distance(&col, &lind)
        };
        let dts = [0.4, 0.2, 0.1, 0.05];
        let errs: Vec<f64> = dts.iter().map(|&dt| err(dt)).collect();
        for w in errs.windows(2) {
            let slope = (w[0] / w[1]).log2();
            assert!((slope - 2.0).abs() < 0.2, "slope {slope} from {errs:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn collisions_on_distinct_targets_commute(seed in 0usize..1000) {
            let env = EnvironmentSpec::new(vec![
                LorentzianTerm::finite(0.05908, 0.1, 0.0),
                LorentzianTerm::memoryless(0.02),
            ]).with_relaxation(vec![0.01, 0.0]);
            let model = table_dimer(env);
            let spec = CollisionStepSpec::for_model(&model, 0.1 + (seed % 7) as f64 * 0.05);
            let mut shuffled = spec.clone();
            let n = shuffled.collisions.len();
            shuffled.collisions.rotate_left(seed % n);
            let (a_ch, b_ch) = (seed % n, (seed / n) % n);
            shuffled.collisions.swap(a_ch, b_ch);
            let rho = mixed_state(&model);
            let a = collision_step(&model, &rho, &spec).unwrap();
            let b = collision_step(&model, &rho, &shuffled).unwrap();
            prop_assert!(max_abs(&(a - b)) < 1e-14);
        }
    }
}
