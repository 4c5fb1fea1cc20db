//! Double-sided Feynman pathways, their site-basis Pauli decomposition and
//! the assembly of response functions from classical or circuit evaluations.

mod engine;
mod grid;


use std::collections::BTreeMap;

use crate::circuit::{Pauli, PauliEvent, SideTag};
use crate::dynamics::Side;
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::model::Model;

pub use engine::{
    evaluate_classical, evaluate_quantum, hadamard_readouts, sample_readouts, site_basis_correlators,
    ClassicalDynamics, ClassicalOptions, QuantumOptions, QuantumStrategy, ShotReadout,
};
pub use grid::{DelayGrid, Processing, Provenance, ResponseGrid, ResponseManifest};

/// One light-matter interaction of a pathway.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PathwayEvent {
    pub side: Side,
    /// Arrow direction: `true` raises the excitation count of its side.
    pub excite: bool,
}

impl PathwayEvent {
    pub fn new(side: Side, excite: bool) -> Self {
        Self { side, excite }
    }

    /// Whether the operator applied to the density matrix is `sigma^+`.
    pub fn raising(&self) -> bool {
        (self.side == Side::Ket) == self.excite
    }

    fn symbol(&self) -> String {
        let side = match self.side {
            Side::Ket => 'K',
            Side::Bra => 'B',
        };
        format!("{side}{}", if self.excite { '+' } else { '-' })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PathwayLabel {
    Gsb,
    Se,
    Esa,
    Linear,
    Custom,
}

impl PathwayLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            PathwayLabel::Gsb => "GSB",
            PathwayLabel::Se => "SE",
            PathwayLabel::Esa => "ESA",
            PathwayLabel::Linear => "LINEAR",
            PathwayLabel::Custom => "CUSTOM",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMatching {
    /// First-order response, both conjugate pathways.
    Linear,
    /// Third-order signal along `-k1 + k2 + k3`.
    Rephasing,
}

/// A double-sided Feynman diagram: `M` interactions followed by the implicit
/// ket-side emission.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PathwaySpec {
    events: Vec<PathwayEvent>,
    sign: i8,
    label: PathwayLabel,
    name: String,
}

/// Excitation counts of (ket, bra) after each event, or `None` once a count
/// leaves `[0, max]`.
fn walk_counts(events: &[PathwayEvent], max: usize) -> Option<(usize, usize)> {
    let (mut k, mut b) = (0i64, 0i64);
    for e in events {
        let step = if e.excite { 1 } else { -1 };
        match e.side {
            Side::Ket => k += step,
            Side::Bra => b += step,
        }
        if k < 0 || b < 0 || k > max as i64 || b > max as i64 {
            return None;
        }
    }
    Some((k as usize, b as usize))
}

impl PathwaySpec {
    /// Validates the interaction sequence against a ground-state start: no
    /// side may be de-excited below the ground state, and the ket and bra
    /// counts must end one apart so that a ket-side emission closes the trace.
    pub fn new(events: Vec<PathwayEvent>, label: PathwayLabel, name: impl Into<String>) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::InvalidArgument("a pathway needs at least one interaction".into()));
        }
        let (k, b) = walk_counts(&events, usize::MAX >> 2).ok_or_else(|| {
            Error::InvalidArgument("interaction sequence de-excites below the ground state".into())
        })?;
        if k.abs_diff(b) != 1 {
            return Err(Error::InvalidArgument(format!(
                "interaction sequence leaves ket/bra excitations {k}/{b}; a final emission cannot close it"
            )));
        }
        let bras = events.iter().filter(|e| e.side == Side::Bra).count();
        let sign = if bras % 2 == 0 { 1 } else { -1 };
        Ok(Self { events, sign, label, name: name.into() })
    }

    /// User-defined diagram.
    pub fn custom(events: Vec<PathwayEvent>) -> Result<Self> {
        let name = events.iter().map(|e| e.symbol()).collect::<Vec<_>>().join(" ");
        Self::new(events, PathwayLabel::Custom, name)
    }

    pub fn order(&self) -> usize {
        self.events.len()
    }

    pub fn events(&self) -> &[PathwayEvent] {
        &self.events
    }

    /// The closing ket-side event.
    pub fn final_event(&self) -> PathwayEvent {
        let (k, b) = walk_counts(&self.events, usize::MAX >> 2).expect("validated on construction");
        PathwayEvent { side: Side::Ket, excite: k < b }
    }

    /// All `M + 1` events including the final emission.
    pub fn all_events(&self) -> Vec<PathwayEvent> {
        let mut out = self.events.clone();
        out.push(self.final_event());
        out
    }

    /// `(-1)^(number of bra interactions)`.
    pub fn sign(&self) -> i8 {
        self.sign
    }

    pub fn label(&self) -> PathwayLabel {
        self.label
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `s * i^M`.
    pub fn prefactor(&self) -> C64 {
        let phase = match self.order() % 4 {
            0 => C64::new(1.0, 0.0),
            1 => C64::new(0.0, 1.0),
            2 => C64::new(-1.0, 0.0),
            _ => C64::new(0.0, -1.0),
        };
        phase * self.sign as f64
    }

    /// Ket minus bra excitation number during each delay.
    pub fn coherence_orders(&self) -> Vec<i8> {
        (1..=self.events.len())
            .map(|m| {
                let (k, b) = walk_counts(&self.events[..m], usize::MAX >> 2).expect("validated on construction");
                (k as i64 - b as i64) as i8
            })
            .collect()
    }

    /// Compact stream tag used to decorrelate shot noise between pathways.
    pub(crate) fn tag(&self) -> u64 {
        self.all_events().iter().fold(1u64, |acc, e| {
            (acc << 2) | ((e.side == Side::Bra) as u64) << 1 | e.excite as u64
        })
    }
}

/// Feynman pathways of order `order` that survive the rotating-wave
/// approximation and the phase-matching condition.
pub fn enumerate_pathways(order: usize, phase_matching: PhaseMatching) -> Result<Vec<PathwaySpec>> {
    if order == 0 {
        return Err(Error::InvalidArgument("response order must be >= 1".into()));
    }
    match (phase_matching, order) {
        (PhaseMatching::Linear, 1) => Ok(vec![
            PathwaySpec::new(vec![PathwayEvent::new(Side::Ket, true)], PathwayLabel::Linear, "R1")?,
            PathwaySpec::new(vec![PathwayEvent::new(Side::Bra, true)], PathwayLabel::Linear, "R2")?,
        ]),
        (PhaseMatching::Rephasing, 3) => {
            let wave = [-1i8, 1, 1];
            let mut out = Vec::new();
            for branch in 0..(1u32 << order) {
                let sides: Vec<Side> =
                    (0..order).map(|m| if branch >> (order - 1 - m) & 1 == 1 { Side::Bra } else { Side::Ket }).collect();
                // A +k field excites the ket or de-excites the bra.
                let events: Vec<PathwayEvent> = sides
                    .iter()
                    .zip(wave)
                    .map(|(&side, w)| PathwayEvent::new(side, (side == Side::Ket) == (w > 0)))
                    .collect();
                let label = match sides[..] {
                    [Side::Bra, Side::Bra, Side::Ket] => PathwayLabel::Gsb,
                    [Side::Bra, Side::Ket, Side::Bra] => PathwayLabel::Se,
                    [Side::Bra, Side::Ket, Side::Ket] => PathwayLabel::Esa,
                    _ => PathwayLabel::Custom,
                };
                if let Ok(p) = PathwaySpec::new(events, label, label.as_str()) {
                    out.push(p);
                }
            }
            out.sort_by_key(|p| p.label);
            Ok(out)
        }
        (pm, m) => Err(Error::Unsupported(format!("phase matching {pm:?} at order {m}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Pruning {
    #[default]
    None,
    /// Merge Pauli combinations whose correlators are proportional once
    /// excitation number is conserved between interactions.
    ExcitationConserving,
}

/// One Pauli-resolved correlator of a pathway.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteBasisPathway {
    pub pathway: PathwaySpec,
    /// `M + 1` events, the last being the final emission.
    pub events: Vec<PauliEvent>,
    /// Product of the transition dipoles of all addressed sites.
    pub weight: f64,
    /// Coefficient from writing each ladder operator in Paulis, summed over
    /// merged combinations after pruning.
    pub phase: C64,
}

impl SiteBasisPathway {
    pub fn coefficient(&self) -> C64 {
        self.phase * self.weight
    }
}

/// `sigma^+ = (X - iY)/2`, `sigma^- = (X + iY)/2`.
fn ladder_coefficient(pauli: Pauli, raising: bool) -> C64 {
    match (pauli, raising) {
        (Pauli::X, _) => C64::new(0.5, 0.0),
        (Pauli::Y, true) => C64::new(0.0, -0.5),
        (Pauli::Y, false) => C64::new(0.0, 0.5),
        _ => C64::new(0.0, 0.0),
    }
}

/// Power of `i` multiplying the ladder component of direction `excite` when
/// `pauli` is applied on `side`.
fn ladder_power(pauli: Pauli, side: Side, excite: bool) -> u8 {
    match pauli {
        Pauli::Y => match (side == Side::Ket) == excite {
            true => 1,
            false => 3,
        },
        _ => 0,
    }
}

fn site_tuples(n_sites: usize, len: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..n_sites.pow(len as u32)).map(move |mut code| {
        let mut sites = vec![0; len];
        for slot in sites.iter_mut().rev() {
            *slot = code % n_sites;
            code /= n_sites;
        }
        sites
    })
}

fn pauli_tuples(len: usize) -> Vec<Vec<Pauli>> {
    (0..1usize << len)
        .map(|code| (0..len).map(|m| if code >> (len - 1 - m) & 1 == 1 { Pauli::Y } else { Pauli::X }).collect())
        .collect()
}

/// Groups of Pauli tuples whose correlators are proportional, each with a
/// representative and the summed coefficient relative to it.
fn pruned_groups(pathway: &PathwaySpec, n_sites: usize) -> Vec<(Vec<Pauli>, C64)> {
    let events = pathway.all_events();
    let len = events.len();
    // Direction sequences with non-vanishing ladder correlators.
    let valid: Vec<Vec<bool>> = (0..1usize << len)
        .map(|code| (0..len).map(|m| code >> (len - 1 - m) & 1 == 1).collect::<Vec<bool>>())
        .filter(|dirs| {
            let seq: Vec<PathwayEvent> =
                events.iter().zip(dirs).map(|(e, &d)| PathwayEvent::new(e.side, d)).collect();
            matches!(walk_counts(&seq, n_sites), Some((k, b)) if k == b)
        })
        .collect();
    // Summed over Pauli choices the coefficients select the pathway's own
    // ladder sequence; if that sequence is not allowed the pathway vanishes.
    let anchor: Vec<bool> = events.iter().map(|e| e.excite).collect();
    if !valid.contains(&anchor) {
        return Vec::new();
    }
    let power = |paulis: &[Pauli], dirs: &[bool]| -> u8 {
        paulis.iter().zip(&events).zip(dirs).map(|((&p, e), &d)| ladder_power(p, e.side, d)).sum::<u8>() % 4
    };
    let mut groups: BTreeMap<Vec<u8>, (Vec<Pauli>, C64)> = BTreeMap::new();
    for paulis in pauli_tuples(len) {
        let base = power(&paulis, &anchor);
        let key: Vec<u8> = valid.iter().map(|d| (power(&paulis, d) + 4 - base) % 4).collect();
        let coeff: C64 = paulis.iter().zip(&events).map(|(&p, e)| ladder_coefficient(p, e.raising())).product();
        let entry = groups.entry(key).or_insert_with(|| (paulis.clone(), C64::new(0.0, 0.0)));
        let rep_base = power(&entry.0, &anchor);
        let lambda = C64::new(0.0, 1.0).powu(((base + 4 - rep_base) % 4) as u32);
        entry.1 += coeff * lambda;
    }
    groups.into_values().collect()
}

/// Expands a pathway into Pauli-resolved correlators, one per choice of site
/// and Pauli factor at every event.
///
/// With [`Pruning::ExcitationConserving`] combinations whose correlators are
/// proportional on every excitation-allowed ladder sequence are merged into a
/// representative carrying the summed coefficient; this requires a model whose
/// delays conserve the excitation number.
pub fn decompose_site_basis(pathway: &PathwaySpec, model: &Model, prune: Pruning) -> Result<Vec<SiteBasisPathway>> {
    let n = model.n_sites();
    let events = pathway.all_events();
    let len = events.len();
    let groups: Vec<(Vec<Pauli>, C64)> = match prune {
        Pruning::None => pauli_tuples(len)
            .into_iter()
            .map(|p| {
                let c = p.iter().zip(&events).map(|(&q, e)| ladder_coefficient(q, e.raising())).product();
                (p, c)
            })
            .collect(),
        Pruning::ExcitationConserving => {
            if !model.conserves_excitations() {
                return Err(Error::InvalidArgument(
                    "excitation-conserving pruning needs a model without relaxation or trapping".into(),
                ));
            }
            pruned_groups(pathway, n)
        }
    };
    let mut out = Vec::with_capacity(groups.len() * n.pow(len as u32));
    for sites in site_tuples(n, len) {
        let weight: f64 = sites.iter().map(|&s| model.system.dipole(s)).product();
        for (paulis, phase) in &groups {
            let events = events
                .iter()
                .zip(&sites)
                .zip(paulis)
                .map(|((e, &site), &pauli)| PauliEvent { side: SideTag::from(e.side), pauli, site })
                .collect();
            out.push(SiteBasisPathway { pathway: pathway.clone(), events, weight, phase: *phase });
        }
    }
    Ok(out)
}
