//! Run configuration files.
//!
//! A run is described by one TOML file with three required sections and
//! optional per-command sections:
//!
//! ```toml
//! [system]
//! energies = [1.55, 1.46]                    # eV, one per chromophore
//! dipoles = [1.0, 1.0]                       # optional, default 1 each
//! couplings = [[0.0, -0.01], [-0.01, 0.0]]   # optional symmetric matrix, eV
//!
//! [environment]
//! relaxation = [0.0, 0.0]                    # optional, eV per site
//! trap = { site = 1, rate = 0.01 }           # optional, 1-based site
//!
//! [[environment.terms]]
//! gamma = 0.05908                            # amplitude, eV
//! omega = 0.1                                # width, eV; omit for memoryless
//! center = 0.0                               # eV
//! split = 1                                  # identical replicas
//! levels = 2                                 # truncation per replica
//!
//! [simulation]
//! dt = 0.1                                   # fs
//! engine = "classical"                       # or "quantum-exact", "quantum-shots"
//! ```
//!
//! See [`SimulationSection`], [`DynamicsSection`], [`AbsorptionSection`],
//! [`RephasingSection`] and [`CircuitSection`] for the remaining keys.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{Integrator, Observable};
use crate::error::{Error, Result};
use crate::model::{AncillaScheme, EnvironmentSpec, ExcitonSystem, LorentzianTerm, Model};
use crate::response::Pruning;

fn config_error(field: &str, msg: impl Into<String>) -> Error {
    Error::Config { field: field.to_string(), msg: msg.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    pub environment: EnvironmentSection,
    pub simulation: SimulationSection,
    #[serde(default)]
    pub dynamics: DynamicsSection,
    #[serde(default)]
    pub absorption: AbsorptionSection,
    #[serde(default)]
    pub rephasing: RephasingSection,
    #[serde(default)]
    pub circuit: CircuitSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub energies: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dipoles: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub couplings: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default)]
    pub center: f64,
    #[serde(default = "one")]
    pub split: usize,
    #[serde(default = "two")]
    pub levels: usize,
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapConfig {
    /// 1-based chromophore index.
    pub site: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    #[serde(default)]
    pub terms: Vec<TermConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relaxation: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap: Option<TrapConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Engine {
    #[default]
    Classical,
    QuantumExact,
    QuantumShots,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Classical => "classical",
            Engine::QuantumExact => "quantum-exact",
            Engine::QuantumShots => "quantum-shots",
        }
    }
}

/// Propagator used by the classical engine and by `dynamics`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropagatorKind {
    Rk4,
    Exponential,
    Collision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeConfig {
    #[default]
    Single,
    PerPseudomode,
    PerCollision,
}

impl SchemeConfig {
    pub fn scheme(self) -> AncillaScheme {
        match self {
            SchemeConfig::Single => AncillaScheme::Single,
            SchemeConfig::PerPseudomode => AncillaScheme::PerPseudomode,
            // resized to the circuit's step count when built
            SchemeConfig::PerCollision => AncillaScheme::PerCollision { steps: 1 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PruningConfig {
    #[default]
    None,
    ExcitationConserving,
}

impl PruningConfig {
    pub fn pruning(self) -> Pruning {
        match self {
            PruningConfig::None => Pruning::None,
            PruningConfig::ExcitationConserving => Pruning::ExcitationConserving,
        }
    }
}

/// Noise floor for the absorption tail cut: a value, `"auto"` (derived
/// from the shot statistics) or `"none"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseFloorConfig {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    /// Propagation step (fs).
    pub dt: f64,
    #[serde(default)]
    pub engine: Engine,
    /// Classical-engine propagator; the default is the step exponential.
    #[serde(default = "default_response_propagator")]
    pub propagator: PropagatorKind,
    #[serde(default = "default_shots")]
    pub shots: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub hamiltonian_trotter_steps: usize,
    #[serde(default = "one")]
    pub collision_trotter_steps: usize,
    #[serde(default)]
    pub ancilla_scheme: SchemeConfig,
    #[serde(default)]
    pub pruning: PruningConfig,
    /// Rotating-frame frequency (eV) applied before transforms.
    #[serde(default)]
    pub rotating_frame: f64,
    #[serde(default = "default_pad")]
    pub pad_factor: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_floor: Option<NoiseFloorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Emulator memory budget in bytes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_budget: Option<u64>,
    /// Reduced Planck constant in (energy unit) * (time unit); the default
    /// is eV * fs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hbar: Option<f64>,
}

fn default_response_propagator() -> PropagatorKind {
    PropagatorKind::Exponential
}

fn default_shots() -> u64 {
    20_000
}

fn default_pad() -> usize {
    crate::spectra::DEFAULT_PAD_FACTOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    /// Propagation window (fs).
    #[serde(default = "default_window")]
    pub t_total: f64,
    /// Sampling interval (fs), a multiple of `dt`.
    #[serde(default = "default_sample")]
    pub sample_every: f64,
    /// 1-based initially excited chromophore; 0 starts in the ground state.
    #[serde(default = "one")]
    pub initial_site: usize,
    /// `pop_i` or `coh_i_j` labels; default all site populations.
    #[serde(default)]
    pub observables: Vec<String>,
    #[serde(default = "default_dynamics_propagator")]
    pub propagator: PropagatorKind,
}

fn default_window() -> f64 {
    200.0
}

fn default_sample() -> f64 {
    1.0
}

fn default_dynamics_propagator() -> PropagatorKind {
    PropagatorKind::Rk4
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self {
            t_total: default_window(),
            sample_every: default_sample(),
            initial_site: 1,
            observables: Vec::new(),
            propagator: default_dynamics_propagator(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbsorptionSection {
    /// Delay step (fs).
    #[serde(default = "ten")]
    pub step: f64,
    /// Number of delays, starting at zero.
    #[serde(default = "linear_count")]
    pub count: usize,
    /// Also write the exact classical spectrum next to a quantum run.
    #[serde(default)]
    pub overlay: bool,
}

fn ten() -> f64 {
    10.0
}

fn linear_count() -> usize {
    21
}

impl Default for AbsorptionSection {
    fn default() -> Self {
        Self { step: ten(), count: linear_count(), overlay: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RephasingSection {
    /// Coherence-time step (fs) for `t1` and `t3`.
    #[serde(default = "ten")]
    pub step: f64,
    /// Points per coherence axis, starting at zero.
    #[serde(default = "rephasing_count")]
    pub count: usize,
    /// Waiting times (fs).
    #[serde(default = "default_t2")]
    pub t2: Vec<f64>,
    /// Pathways to include (`GSB`, `SE`, `ESA`); default all three.
    #[serde(default)]
    pub pathways: Vec<String>,
}

fn rephasing_count() -> usize {
    12
}

fn default_t2() -> Vec<f64> {
    vec![0.0]
}

impl Default for RephasingSection {
    fn default() -> Self {
        Self { step: ten(), count: rephasing_count(), t2: default_t2(), pathways: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSection {
    /// `R1`, `R2`, `GSB`, `SE` or `ESA`.
    #[serde(default = "default_circuit_pathway")]
    pub pathway: String,
    /// Delays between interactions (fs); length is the pathway order.
    /// Defaults to one propagation step per delay.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delays: Option<Vec<f64>>,
    /// Upper bound on the number of site-basis circuits written.
    #[serde(default = "default_max_circuits")]
    pub max_circuits: usize,
}

fn default_circuit_pathway() -> String {
    "R1".into()
}

fn default_max_circuits() -> usize {
    16
}

impl Default for CircuitSection {
    fn default() -> Self {
        Self { pathway: default_circuit_pathway(), delays: None, max_circuits: default_max_circuits() }
    }
}

/// Resolved noise-floor rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseFloor {
    None,
    Auto,
    Value(f64),
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let field = e
                .span()
                .and_then(|s| text.get(..s.start))
                .map(|head| format!("line {}", head.lines().count().max(1)))
                .unwrap_or_else(|| "document".into());
            config_error(&field, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization of the effective config.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.simulation;
        positive("simulation.dt", s.dt)?;
        if s.shots == 0 {
            return Err(config_error("simulation.shots", "must be >= 1"));
        }
        if s.hamiltonian_trotter_steps == 0 {
            return Err(config_error("simulation.hamiltonian_trotter_steps", "must be >= 1"));
        }
        if s.collision_trotter_steps == 0 {
            return Err(config_error("simulation.collision_trotter_steps", "must be >= 1"));
        }
        if s.pad_factor == 0 {
            return Err(config_error("simulation.pad_factor", "must be >= 1"));
        }
        if !s.rotating_frame.is_finite() {
            return Err(config_error("simulation.rotating_frame", "must be finite"));
        }
        if s.threads == Some(0) {
            return Err(config_error("simulation.threads", "must be >= 1"));
        }
        self.noise_floor()?;
        let n = self.system.energies.len();
        let d = &self.dynamics;
        if !(d.t_total >= 0.0) {
            return Err(config_error("dynamics.t_total", "must be >= 0"));
        }
        positive("dynamics.sample_every", d.sample_every)?;
        commensurate("dynamics.t_total", d.t_total, s.dt)?;
        commensurate("dynamics.sample_every", d.sample_every, s.dt)?;
        if d.initial_site > n {
            return Err(config_error("dynamics.initial_site", format!("{} exceeds the {n} chromophores", d.initial_site)));
        }
        self.observables()?;
        positive("absorption.step", self.absorption.step)?;
        commensurate("absorption.step", self.absorption.step, s.dt)?;
        if self.absorption.count == 0 {
            return Err(config_error("absorption.count", "must be >= 1"));
        }
        let r = &self.rephasing;
        positive("rephasing.step", r.step)?;
        commensurate("rephasing.step", r.step, s.dt)?;
        if r.count == 0 {
            return Err(config_error("rephasing.count", "must be >= 1"));
        }
        if r.t2.is_empty() {
            return Err(config_error("rephasing.t2", "needs at least one waiting time"));
        }
        for &t in &r.t2 {
            if !(t >= 0.0) {
                return Err(config_error("rephasing.t2", format!("waiting time {t} must be >= 0")));
            }
            commensurate("rephasing.t2", t, s.dt)?;
        }
        for p in &r.pathways {
            if !["GSB", "SE", "ESA"].contains(&p.to_ascii_uppercase().as_str()) {
                return Err(config_error("rephasing.pathways", format!("unknown pathway `{p}`")));
            }
        }
        let c = &self.circuit;
        if !["R1", "R2", "GSB", "SE", "ESA"].contains(&c.pathway.to_ascii_uppercase().as_str()) {
            return Err(config_error("circuit.pathway", format!("unknown pathway `{}`", c.pathway)));
        }
        for &t in c.delays.iter().flatten() {
            if !(t >= 0.0) {
                return Err(config_error("circuit.delays", format!("delay {t} must be >= 0")));
            }
            commensurate("circuit.delays", t, s.dt)?;
        }
        self.model().map(|_| ())
    }

    pub fn noise_floor(&self) -> Result<NoiseFloor> {
        match &self.simulation.noise_floor {
            None => Ok(if self.simulation.engine == Engine::QuantumShots { NoiseFloor::Auto } else { NoiseFloor::None }),
            Some(NoiseFloorConfig::Value(v)) if *v > 0.0 && v.is_finite() => Ok(NoiseFloor::Value(*v)),
            Some(NoiseFloorConfig::Value(v)) => {
                Err(config_error("simulation.noise_floor", format!("{v} must be > 0 (use \"none\" to disable)")))
            }
            Some(NoiseFloorConfig::Keyword(k)) => match k.as_str() {
                "auto" => Ok(NoiseFloor::Auto),
                "none" => Ok(NoiseFloor::None),
                other => Err(config_error("simulation.noise_floor", format!("expected a number, \"auto\" or \"none\", got `{other}`"))),
            },
        }
    }

    pub fn observables(&self) -> Result<Vec<Observable>> {
        let n = self.system.energies.len();
        if self.dynamics.observables.is_empty() {
            return Ok((0..n).map(Observable::Population).collect());
        }
        self.dynamics
            .observables
            .iter()
            .map(|label| {
                let bad = || config_error("dynamics.observables", format!("unknown observable `{label}`"));
                let parts: Vec<&str> = label.split('_').collect();
                let site = |s: &str| -> Result<usize> {
                    let i: usize = s.parse().map_err(|_| bad())?;
                    if i == 0 || i > n {
                        return Err(config_error("dynamics.observables", format!("site {i} out of range in `{label}`")));
                    }
                    Ok(i - 1)
                };
                match parts.as_slice() {
                    ["pop", i] => Ok(Observable::Population(site(i)?)),
                    ["coh", i, j] => Ok(Observable::Coherence(site(i)?, site(j)?)),
                    _ => Err(bad()),
                }
            })
            .collect()
    }

    pub fn integrator(kind: PropagatorKind) -> Option<Integrator> {
        match kind {
            PropagatorKind::Rk4 => Some(Integrator::Rk4 { substeps: 1 }),
            PropagatorKind::Exponential => Some(Integrator::Exponential),
            PropagatorKind::Collision => None,
        }
    }

    /// Builds and validates the model.
    pub fn model(&self) -> Result<Model> {
        let sys = &self.system;
        let n = sys.energies.len();
        if n == 0 {
            return Err(config_error("system.energies", "needs at least one chromophore"));
        }
        let dipoles = sys.dipoles.clone().unwrap_or_else(|| vec![1.0; n]);
        if dipoles.len() != n {
            return Err(config_error("system.dipoles", format!("{} entries for {n} chromophores", dipoles.len())));
        }
        let couplings = sys.couplings.clone().unwrap_or_else(|| vec![vec![0.0; n]; n]);
        if couplings.len() != n || couplings.iter().any(|row| row.len() != n) {
            return Err(config_error("system.couplings", format!("must be a {n}x{n} matrix")));
        }
        let system = ExcitonSystem::new(sys.energies.clone(), couplings, dipoles)
            .map_err(|e| config_error("system", strip(e)))?;
        let mut terms = Vec::new();
        for (k, t) in self.environment.terms.iter().enumerate() {
            let field = format!("environment.terms[{k}]");
            let term = match t.omega {
                None => LorentzianTerm::memoryless(t.gamma),
                Some(w) => LorentzianTerm::finite(t.gamma, w, t.center).with_split(t.split).with_levels(t.levels),
            };
            term.validate().map_err(|e| config_error(&field, strip(e)))?;
            terms.push(term);
        }
        let mut env = EnvironmentSpec::new(terms);
        if !self.environment.relaxation.is_empty() {
            env = env.with_relaxation(self.environment.relaxation.clone());
        }
        if let Some(trap) = self.environment.trap {
            if trap.site == 0 || trap.site > n {
                return Err(config_error("environment.trap.site", format!("{} is not in 1..={n}", trap.site)));
            }
            env = env.with_trap(trap.site - 1, trap.rate);
        }
        env.validate(n).map_err(|e| config_error("environment", strip(e)))?;
        let hbar = self.simulation.hbar.unwrap_or(crate::model::HBAR_EV_FS);
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(config_error("simulation.hbar", format!("{hbar} must be > 0")));
        }
        Model::with_hbar(system, env, hbar).map_err(|e| config_error("system", strip(e)))
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::InvalidModel(m) | Error::DimensionMismatch(m) | Error::InvalidArgument(m) => m,
        other => other.to_string(),
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config_error(field, format!("{v} must be > 0")))
    }
}

fn commensurate(field: &str, t: f64, dt: f64) -> Result<()> {
    crate::dynamics::step_count(t, dt)
        .map(|_| ())
        .map_err(|_| config_error(field, format!("{t} fs is not a multiple of dt = {dt} fs")))
}
