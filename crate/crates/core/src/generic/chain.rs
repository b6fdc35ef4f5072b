//! Chains of systems and their logs.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::PSystem;
use crate::class::ClassSpec;
use crate::error::{Error, Result};
use crate::limit::{
    extend_partial_iso, universality_of, BnfBudget, BnfFailure, Budget, Chain, Growth,
    ScheduleEntry, UniversalityReport,
};
use crate::structure::{Elem, Embedding, FinStructure, PartialIso};

/// Which end of the map a totality task extends.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapSide {
    Domain,
    Range,
}

/// One logged action. Growths are applied before the new pairs, and every
/// entry is checked against the system right after it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum AutEntry {
    Start {
        label: String,
        steps: usize,
        seed: u64,
        budget: Budget,
    },
    /// A stage of a plain chain taken over together with the given pairs.
    Import {
        step: usize,
        growth: Growth,
        pairs: Vec<(Elem, Elem)>,
    },
    /// The system type `ty`, number `type_index` in the enumeration, placed
    /// by a strong system embedding.
    Jep {
        step: usize,
        type_index: usize,
        ty: PSystem,
        placement: Embedding,
        growth: Option<Growth>,
        pairs: Vec<(Elem, Elem)>,
    },
    /// `element` entered the domain or range of the map through `pair`.
    Totality {
        step: usize,
        element: Elem,
        side: MapSide,
        pair: (Elem, Elem),
        growth: Option<Growth>,
    },
    /// A one-point system extension of the system on `anchor`, realized by
    /// a strong system embedding fixing the anchor.
    Saturation {
        step: usize,
        anchor: Vec<Elem>,
        extension: PSystem,
        resolution: Embedding,
        growth: Option<Growth>,
        pairs: Vec<(Elem, Elem)>,
    },
    Stalled {
        step: usize,
        reason: String,
    },
}

impl AutEntry {
    pub fn step(&self) -> Option<usize> {
        match self {
            AutEntry::Start { .. } => None,
            AutEntry::Import { step, .. }
            | AutEntry::Jep { step, .. }
            | AutEntry::Totality { step, .. }
            | AutEntry::Saturation { step, .. }
            | AutEntry::Stalled { step, .. } => Some(*step),
        }
    }

    pub fn growth(&self) -> Option<&Growth> {
        match self {
            AutEntry::Import { growth, .. } => Some(growth),
            AutEntry::Jep { growth, .. }
            | AutEntry::Totality { growth, .. }
            | AutEntry::Saturation { growth, .. } => growth.as_ref(),
            _ => None,
        }
    }

    pub fn pairs(&self) -> Vec<(Elem, Elem)> {
        match self {
            AutEntry::Import { pairs, .. }
            | AutEntry::Jep { pairs, .. }
            | AutEntry::Saturation { pairs, .. } => pairs.clone(),
            AutEntry::Totality { pair, .. } => vec![*pair],
            _ => Vec::new(),
        }
    }
}

/// Ascending systems `S_0 ⊆ S_1 ⊆ …` stored as the top carrier, the union
/// map `g` with its pairs in insertion order, and the carrier size and
/// number of pairs of every stage.
#[derive(Clone, Debug)]
pub struct AutChain {
    pub(super) spec: ClassSpec,
    pub(super) top: FinStructure,
    pub(super) map: BTreeMap<Elem, Elem>,
    pub(super) pairs: Vec<(Elem, Elem)>,
    pub(super) stage_sizes: Vec<usize>,
    pub(super) stage_pairs: Vec<usize>,
    pub(super) log: Vec<AutEntry>,
}

impl AutChain {
    pub(super) fn start(spec: ClassSpec, steps: usize, seed: u64, budget: Budget) -> AutChain {
        let log = vec![AutEntry::Start {
            label: spec.label().to_string(),
            steps,
            seed,
            budget,
        }];
        AutChain {
            top: spec.empty_structure(),
            spec,
            map: BTreeMap::new(),
            pairs: Vec::new(),
            stage_sizes: vec![0],
            stage_pairs: vec![0],
            log,
        }
    }

    /// The chain with the identity as its map, one stage per stage.
    pub fn identity_of(chain: &Chain) -> Result<AutChain> {
        let (steps, seed, budget) = match chain.log().first() {
            Some(ScheduleEntry::Start {
                steps,
                seed,
                budget,
                ..
            }) => (*steps, *seed, budget.clone()),
            _ => (0, 0, Budget::default()),
        };
        let mut log = vec![AutEntry::Start {
            label: chain.spec().label().to_string(),
            steps,
            seed,
            budget,
        }];
        for (i, w) in chain.stage_sizes().windows(2).enumerate() {
            let stage = chain.stage(i + 1)?;
            log.push(AutEntry::Import {
                step: i,
                growth: Growth::between(w[0], &stage),
                pairs: (w[0]..w[1]).map(|x| (x, x)).collect(),
            });
        }
        AutChain::replay(chain.spec().clone(), log)
    }

    pub fn spec(&self) -> &ClassSpec {
        &self.spec
    }

    /// The carrier of the top system.
    pub fn carrier(&self) -> &FinStructure {
        &self.top
    }

    /// The union map `g`.
    pub fn map(&self) -> &BTreeMap<Elem, Elem> {
        &self.map
    }

    /// The pairs of `g` in the order they were added.
    pub fn pairs(&self) -> &[(Elem, Elem)] {
        &self.pairs
    }

    pub fn top_system(&self) -> PSystem {
        PSystem {
            carrier: self.top.clone(),
            psi: self.map.clone(),
        }
    }

    pub fn log(&self) -> &[AutEntry] {
        &self.log
    }

    pub fn stage_count(&self) -> usize {
        self.stage_sizes.len()
    }

    pub fn stage_sizes(&self) -> &[usize] {
        &self.stage_sizes
    }

    pub fn stage(&self, i: usize) -> Result<PSystem> {
        let (&n, &p) = self
            .stage_sizes
            .get(i)
            .zip(self.stage_pairs.get(i))
            .ok_or_else(|| Error::Domain(format!("no stage {i}")))?;
        Ok(PSystem {
            carrier: self.top.induced(&(0..n).collect::<Vec<_>>())?,
            psi: self.pairs[..p].iter().copied().collect(),
        })
    }

    /// Every stage, first to last.
    pub fn systems(&self) -> Result<Vec<PSystem>> {
        (0..self.stage_count()).map(|i| self.stage(i)).collect()
    }

    /// The largest `m` with `{0..m} ⊆ dom(g) ∩ ran(g)`.
    pub fn total_prefix(&self) -> usize {
        let ran: BTreeSet<Elem> = self.map.values().copied().collect();
        (0..)
            .find(|x| !self.map.contains_key(x) || !ran.contains(x))
            .expect("the map is finite")
    }

    /// Universality of the carrier of the top for the base class.
    pub fn verify_universality(&self, size_bound: usize) -> Result<UniversalityReport> {
        universality_of(&self.spec, &self.top, size_bound)
    }

    /// Re-checks membership, that `g` is a partial automorphism of the top,
    /// every log entry, and that the log rebuilds the chain.
    pub fn validate(&self) -> Result<()> {
        if !self.spec.is_member(&self.top) {
            return Err(Error::Invalid("the top carrier is not a member".into()));
        }
        if !self.top.is_partial_iso_into(&self.top, &self.map) {
            return Err(Error::Invalid(
                "the map is not a partial automorphism of the top".into(),
            ));
        }
        let replayed = rebuild(self.spec.clone(), self.log.clone(), true)?;
        if replayed.top != self.top
            || replayed.pairs != self.pairs
            || replayed.stage_sizes != self.stage_sizes
            || replayed.stage_pairs != self.stage_pairs
        {
            return Err(Error::Invalid("log does not replay to the chain".into()));
        }
        Ok(())
    }

    /// Rebuilds a chain from its log; a stage ends with every step that
    /// changed the system.
    pub fn replay(spec: ClassSpec, log: Vec<AutEntry>) -> Result<AutChain> {
        rebuild(spec, log, false)
    }

    pub fn write_log(&self, mut out: impl Write) -> Result<()> {
        for e in &self.log {
            let line = serde_json::to_string(e).expect("entries serialize");
            writeln!(out, "{line}").map_err(|e| Error::Invalid(format!("writing log: {e}")))?;
        }
        Ok(())
    }

    pub fn read_log(input: impl BufRead) -> Result<Vec<AutEntry>> {
        let mut out = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse(format!("reading log: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(
                serde_json::from_str(&line)
                    .map_err(|e| Error::Parse(format!("log line {}: {e}", i + 1)))?,
            );
        }
        Ok(out)
    }

    pub(super) fn push_stage_if_changed(&mut self) {
        if self.stage_sizes.last() != Some(&self.top.len())
            || self.stage_pairs.last() != Some(&self.pairs.len())
        {
            self.stage_sizes.push(self.top.len());
            self.stage_pairs.push(self.pairs.len());
        }
    }

    pub(super) fn add_pair(&mut self, x: Elem, y: Elem) -> Result<()> {
        if self.map.contains_key(&x) || self.map.values().any(|&z| z == y) {
            return Err(Error::Invalid(format!(
                "pair ({x}, {y}) clashes with the map"
            )));
        }
        self.map.insert(x, y);
        self.pairs.push((x, y));
        Ok(())
    }
}

fn rebuild(spec: ClassSpec, log: Vec<AutEntry>, check: bool) -> Result<AutChain> {
    let mut c = AutChain::start(spec, 0, 0, Budget::default());
    c.log.clear();
    let mut last_step = None;
    for entry in &log {
        if entry.step() != last_step {
            c.push_stage_if_changed();
        }
        last_step = entry.step();
        if let Some(g) = entry.growth() {
            c.top = g.apply(&c.top)?;
        }
        for (x, y) in entry.pairs() {
            if !c.top.contains(x) || !c.top.contains(y) {
                return Err(Error::Invalid(format!(
                    "pair ({x}, {y}) leaves the carrier"
                )));
            }
            c.add_pair(x, y)?;
        }
        if check {
            check_entry(&c, entry)?;
        }
    }
    c.push_stage_if_changed();
    c.log = log;
    Ok(c)
}

fn check_entry(c: &AutChain, entry: &AutEntry) -> Result<()> {
    match entry {
        AutEntry::Start { label, .. } => {
            if label != c.spec.label() {
                return Err(Error::Invalid("log was built for another class".into()));
            }
        }
        AutEntry::Jep { ty, placement, .. } => {
            ty.validate(&c.spec)?;
            if !strongly_into(placement, ty, &c.top, &c.map) {
                return Err(Error::Invalid(
                    "joint embedding placement is invalid".into(),
                ));
            }
        }
        AutEntry::Totality {
            element,
            side,
            pair,
            ..
        } => {
            let end = match side {
                MapSide::Domain => pair.0,
                MapSide::Range => pair.1,
            };
            if end != *element {
                return Err(Error::Invalid("totality pair misses its element".into()));
            }
        }
        AutEntry::Saturation {
            anchor,
            extension,
            resolution,
            ..
        } => {
            extension.validate(&c.spec)?;
            let ok = extension.len() == anchor.len() + 1
                && anchor.iter().all(|&a| extension.carrier.contains(a))
                && anchor.iter().all(|a| resolution.map.get(a) == Some(a))
                && strongly_into(resolution, extension, &c.top, &c.map);
            if !ok {
                return Err(Error::Invalid("task resolution is invalid".into()));
            }
        }
        AutEntry::Import { .. } | AutEntry::Stalled { .. } => {}
    }
    Ok(())
}

/// Whether `f` embeds `s` into `⟨top, map⟩` preserving and reflecting the
/// map.
pub(super) fn strongly_into(
    f: &Embedding,
    s: &PSystem,
    top: &FinStructure,
    map: &BTreeMap<Elem, Elem>,
) -> bool {
    if !f.is_valid(&s.carrier, top) {
        return false;
    }
    let back: BTreeMap<Elem, Elem> = f.map.iter().map(|(&a, &b)| (b, a)).collect();
    s.carrier.universe().iter().all(|a| {
        let expected = s.psi.get(a).map(|b| f.map[b]);
        match map.get(&f.map[a]) {
            Some(y) if back.contains_key(y) => expected == Some(*y),
            _ => expected.is_none(),
        }
    })
}

/// A partial isomorphism between the tops of two chains that also carries
/// one map onto the other where both are defined on covered elements,
/// covering `{0..=depth}` on both sides.
pub fn system_back_and_forth(
    m: &AutChain,
    n: &AutChain,
    depth: usize,
    budget: &BnfBudget,
) -> Result<std::result::Result<PartialIso, BnfFailure>> {
    if m.spec() != n.spec() {
        return Err(Error::Precondition(
            "the chains are over different classes".into(),
        ));
    }
    if m.top.len() <= depth || n.top.len() <= depth {
        return Err(Error::Domain(format!(
            "a chain has fewer than {} elements",
            depth + 1
        )));
    }
    let need: Vec<Elem> = (0..=depth).collect();
    extend_partial_iso(
        &m.top_system().expanded(),
        &n.top_system().expanded(),
        &PartialIso::default(),
        &need,
        &need,
        None,
        budget,
        &|_, _, _| true,
    )
}
