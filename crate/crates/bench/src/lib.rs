//! Fixtures shared by the benchmarks.

use pseudospec::model::{EnvironmentSpec, ExcitonSystem, LorentzianTerm, Model};

/// Two-site aggregate with one finite-memory pseudomode of `levels` states per site.
pub fn dimer(levels: usize) -> Model {
    let system = ExcitonSystem::dimer(1.55, 1.46, -0.01, 1.0, 1.0).expect("valid dimer");
    let env = EnvironmentSpec::new(vec![LorentzianTerm::finite(0.05908, 0.1, 0.0).with_levels(levels)]);
    Model::new(system, env).expect("valid model")
}

/// Single site with a memoryless environment.
pub fn monomer() -> Model {
    let system = ExcitonSystem::monomer(1.55, 1.0).expect("valid monomer");
    Model::new(system, EnvironmentSpec::new(vec![LorentzianTerm::memoryless(0.05908)])).expect("valid model")
}
