//! The construction of a chain of systems.
//!
//! Even steps joint-embed the next system type. Odd steps alternate between
//! totality tasks, which put the next element into the domain or range of
//! the map, and saturation tasks, which realize one-point system extensions
//! over anchors taken element by element as in the plain chain.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::chain::{AutChain, AutEntry, MapSide};
use super::{partial_isos_extending, PSystem};
use crate::canon::{canonical_code, CanonCode};
use crate::class::ClassSpec;
use crate::error::{Error, Result};
use crate::glue::{GlueOutcome, GlueProblem};
use crate::limit::{anchors_of, Budget, Growth};
use crate::search::EmbeddingSearch;
use crate::structure::{Elem, Embedding, FinStructure};

pub fn build_generic_automorphism(
    spec: &ClassSpec,
    steps: usize,
    budget: &Budget,
    seed: u64,
) -> Result<AutChain> {
    certify_small(spec, budget)?;
    let mut b = Builder {
        chain: AutChain::start(spec.clone(), steps, seed, budget.clone()),
        inv: BTreeMap::new(),
        budget: budget.clone(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        types: SystemTypes::new(spec),
        cursor: (0, MapSide::Domain),
        sched: Schedule::default(),
        step: 0,
    };
    for step in 0..steps {
        b.step = step;
        if step % 2 == 0 {
            b.even_step()?;
        } else if step % 4 == 1 {
            b.totality_step()?;
        } else {
            b.saturation_step()?;
        }
        b.chain.push_stage_if_changed();
    }
    Ok(b.chain)
}

/// Amalgamation of the base class over its types of size at most one,
/// with extensions of up to three elements.
fn certify_small(spec: &ClassSpec, budget: &Budget) -> Result<()> {
    if spec.enumerate_types(1).iter().all(|t| t.is_empty()) {
        return Err(Error::Precondition(format!(
            "`{}` has no one-element member",
            spec.label()
        )));
    }
    for a in spec.enumerate_types(1) {
        let id = Embedding::identity(a.universe());
        let bound = budget.amalgam_bound.max(4);
        if let Some((b1, b2)) = spec.certifies(&a, &a, &id, 3, bound)? {
            return Err(Error::Precondition(format!(
                "`{}` does not amalgamate {b1:?} and {b2:?} over {a:?} within {bound}",
                spec.label()
            )));
        }
    }
    Ok(())
}

/// Lists the system types in rounds: round `r` lists every type with at
/// most `r` elements, by carrier size, base type and map.
struct SystemTypes {
    /// Base types by size, starting with the empty structure.
    layers: Vec<Vec<FinStructure>>,
    /// System types by carrier size, filled on demand.
    systems: Vec<Vec<PSystem>>,
    round: usize,
    size: usize,
    pos: usize,
    index: usize,
}

impl SystemTypes {
    fn new(spec: &ClassSpec) -> Self {
        SystemTypes {
            layers: vec![vec![spec.empty_structure()]],
            systems: Vec::new(),
            round: 1,
            size: 1,
            pos: 0,
            index: 0,
        }
    }

    fn layer(&mut self, spec: &ClassSpec, size: usize) -> bool {
        while self.systems.len() <= size {
            let k = self.systems.len();
            if k == self.layers.len() {
                let next = spec.next_type_layer(self.layers.last().expect("layers are nonempty"));
                if next.is_empty() {
                    return false;
                }
                self.layers.push(next);
            }
            let mut seen: HashSet<CanonCode> = HashSet::new();
            let mut out = Vec::new();
            for t in &self.layers[k] {
                for psi in partial_isos_extending(t, &BTreeMap::new()) {
                    let s = PSystem {
                        carrier: t.clone(),
                        psi,
                    };
                    if seen.insert(canonical_code(&s.expanded())) {
                        out.push(s);
                    }
                }
            }
            self.systems.push(out);
        }
        true
    }

    fn next(&mut self, spec: &ClassSpec) -> Option<(usize, PSystem)> {
        loop {
            if self.size > self.round {
                self.round += 1;
                self.size = 1;
            }
            if !self.layer(spec, self.size) {
                return None;
            }
            if let Some(t) = self.systems[self.size].get(self.pos) {
                let t = t.clone();
                self.pos += 1;
                self.index += 1;
                return Some((self.index - 1, t));
            }
            self.size += 1;
            self.pos = 0;
        }
    }
}

#[derive(Default)]
struct Schedule {
    next_elem: usize,
    anchors: VecDeque<Vec<Elem>>,
    /// The anchor whose tasks are queued, with its system when they were
    /// made.
    current: Option<(Vec<Elem>, PSystem)>,
    tasks: VecDeque<PSystem>,
}

struct Builder {
    chain: AutChain,
    /// `g⁻¹`.
    inv: BTreeMap<Elem, Elem>,
    budget: Budget,
    rng: ChaCha8Rng,
    types: SystemTypes,
    /// The next totality task.
    cursor: (Elem, MapSide),
    sched: Schedule,
    step: usize,
}

impl Builder {
    fn log(&mut self, entry: AutEntry) {
        self.chain.log.push(entry);
    }

    fn stall(&mut self, reason: String) {
        let step = self.step;
        self.log(AutEntry::Stalled { step, reason });
    }

    fn grow(&mut self, result: FinStructure) -> Option<Growth> {
        let before = self.chain.top.len();
        if result.len() == before {
            return None;
        }
        self.chain.top = result;
        Some(Growth::between(before, &self.chain.top))
    }

    /// Adds the pairs of `united` that `g` lacks, in order of their source.
    fn absorb(&mut self, united: &BTreeMap<Elem, Elem>) -> Result<Vec<(Elem, Elem)>> {
        let new: Vec<(Elem, Elem)> = united
            .iter()
            .filter(|(a, _)| !self.chain.map.contains_key(a))
            .map(|(&a, &b)| (a, b))
            .collect();
        for &(a, b) in &new {
            self.add_pair(a, b)?;
        }
        Ok(new)
    }

    fn add_pair(&mut self, a: Elem, b: Elem) -> Result<()> {
        self.chain.add_pair(a, b)?;
        self.inv.insert(b, a);
        Ok(())
    }

    fn fresh_order(&mut self, ext: &FinStructure, known: &BTreeMap<Elem, Elem>) -> Vec<Elem> {
        let mut rest: Vec<Elem> = ext
            .universe()
            .iter()
            .copied()
            .filter(|x| !known.contains_key(x))
            .collect();
        rest.shuffle(&mut self.rng);
        rest
    }

    fn even_step(&mut self) -> Result<()> {
        let spec = self.chain.spec.clone();
        let Some((type_index, ty)) = self.types.next(&spec) else {
            self.stall("the class has no further system types".into());
            return Ok(());
        };
        let top = self.chain.top_system().expanded();
        let existing = EmbeddingSearch::new(&ty.expanded(), &top)?.first();
        let (placement, growth, pairs) = match existing {
            Some(f) => (f, None, Vec::new()),
            None => {
                let none = BTreeMap::new();
                let order = self.fresh_order(&ty.carrier, &none);
                let outcome = GlueProblem::new(&self.chain.top, &ty.carrier, spec.forbidden())
                    .systems(&self.chain.map, &ty.psi)
                    .new_order(order)
                    .budget(self.budget.search_nodes)
                    .max_size(self.chain.top.len() + self.budget.jep_bound.max(ty.len()))
                    .solve();
                let GlueOutcome::Found(g) = outcome else {
                    self.stall(format!(
                        "system type {type_index} has no joint embedding with the chain within the bound"
                    ));
                    return Ok(());
                };
                let pairs = self.absorb(g.psi.as_ref().expect("glued in system mode"))?;
                let growth = self.grow(g.result);
                (Embedding::new(g.ext_map), growth, pairs)
            }
        };
        let step = self.step;
        self.log(AutEntry::Jep {
            step,
            type_index,
            ty,
            placement,
            growth,
            pairs,
        });
        Ok(())
    }

    fn totality_step(&mut self) -> Result<()> {
        for _ in 0..self.budget.checks_per_step.max(1) {
            let (x, side) = self.cursor;
            if x >= self.chain.top.len() {
                self.stall("no element awaits the map".into());
                return Ok(());
            }
            self.cursor = match side {
                MapSide::Domain => (x, MapSide::Range),
                MapSide::Range => (x + 1, MapSide::Domain),
            };
            let done = match side {
                MapSide::Domain => self.chain.map.contains_key(&x),
                MapSide::Range => self.inv.contains_key(&x),
            };
            if !done {
                return self.extend_map(x, side);
            }
        }
        Ok(())
    }

    /// Puts `x` into the domain (or range) of `g`: a partner already in the
    /// top is chosen at random, otherwise a new one is glued on.
    fn extend_map(&mut self, x: Elem, side: MapSide) -> Result<()> {
        let f = match side {
            MapSide::Domain => self.chain.map.clone(),
            MapSide::Range => self.inv.clone(),
        };
        let taken: BTreeSet<Elem> = f.values().copied().collect();
        let mut support: Vec<Elem> = f.keys().copied().collect();
        support.push(x);
        support.sort_unstable();
        let src = self.chain.top.induced(&support)?;
        let top = &self.chain.top;
        let cands: Vec<Elem> = top
            .universe()
            .iter()
            .copied()
            .filter(|y| !taken.contains(y))
            .collect();
        let found: Vec<Elem> = EmbeddingSearch::pinned(&src, top, &f)?
            .within(cands)
            .all()
            .into_iter()
            .map(|e| e.map[&x])
            .collect();
        let (y, growth) = if let Some(&y) = found.choose(&mut self.rng) {
            (y, None)
        } else {
            let label = top.max_elem().map_or(0, |m| m + 1);
            let mut relabel = f.clone();
            relabel.insert(x, label);
            let ext = src.relabel(&relabel)?;
            let ident: BTreeMap<Elem, Elem> = taken.iter().map(|&y| (y, y)).collect();
            let outcome = GlueProblem::new(top, &ext, self.chain.spec.forbidden())
                .ident(ident)
                .budget(self.budget.search_nodes)
                .max_size(top.len() + 1)
                .solve();
            let GlueOutcome::Found(g) = outcome else {
                self.stall(format!("no partner for element {x} within the bound"));
                return Ok(());
            };
            let y = g.ext_map[&label];
            (y, self.grow(g.result))
        };
        let pair = match side {
            MapSide::Domain => (x, y),
            MapSide::Range => (y, x),
        };
        self.add_pair(pair.0, pair.1)?;
        let step = self.step;
        self.log(AutEntry::Totality {
            step,
            element: x,
            side,
            pair,
            growth,
        });
        Ok(())
    }

    fn saturation_step(&mut self) -> Result<()> {
        for _ in 0..self.budget.checks_per_step.max(1) {
            let Some((anchor, ext)) = self.next_task()? else {
                self.stall("no pending saturation task".into());
                return Ok(());
            };
            if self.resolve(anchor, ext)? {
                return Ok(());
            }
        }
        Ok(())
    }

    /// The next task whose anchor still carries the system it was made
    /// for; an anchor whose system changed gets fresh tasks.
    fn next_task(&mut self) -> Result<Option<(Vec<Elem>, PSystem)>> {
        loop {
            if let Some((anchor, pivot)) = &self.sched.current {
                if self.chain.top_system().restrict(anchor)? != *pivot {
                    let anchor = anchor.clone();
                    self.sched.tasks.clear();
                    self.sched.anchors.push_front(anchor);
                    self.sched.current = None;
                } else if let Some(ext) = self.sched.tasks.pop_front() {
                    return Ok(Some((anchor.clone(), ext)));
                } else {
                    self.sched.current = None;
                }
            }
            if let Some(anchor) = self.sched.anchors.pop_front() {
                let pivot = self.chain.top_system().restrict(&anchor)?;
                self.sched.tasks = self.one_point_extensions(&pivot).into();
                self.sched.current = Some((anchor, pivot));
                continue;
            }
            let n = self.sched.next_elem;
            if n >= self.chain.top.len() {
                return Ok(None);
            }
            if n == 0 {
                self.sched.anchors.push_back(Vec::new());
            }
            let cap = self.budget.extension_bound.saturating_sub(1);
            self.sched.anchors.extend(anchors_of(n, cap));
            self.sched.next_elem += 1;
        }
    }

    /// One-point extensions of the base class, each with every way of
    /// relating the new point `z` by the map to itself or to anchor points
    /// that the whole of `g` leaves free on that side.
    fn one_point_extensions(&self, pivot: &PSystem) -> Vec<PSystem> {
        let z = self.chain.top.max_elem().map_or(0, |m| m + 1);
        let outs: Vec<Option<Elem>> = [None, Some(z)]
            .into_iter()
            .chain(
                pivot
                    .carrier
                    .universe()
                    .iter()
                    .filter(|s| !self.inv.contains_key(s))
                    .map(|&s| Some(s)),
            )
            .collect();
        let ins: Vec<Option<Elem>> = [None]
            .into_iter()
            .chain(
                pivot
                    .carrier
                    .universe()
                    .iter()
                    .filter(|s| !self.chain.map.contains_key(s))
                    .map(|&s| Some(s)),
            )
            .collect();
        let mut out = Vec::new();
        for d in self.chain.spec.one_point_extensions(&pivot.carrier, z) {
            for &o in &outs {
                for &i in &ins {
                    let mut psi = pivot.psi.clone();
                    if let Some(o) = o {
                        psi.insert(z, o);
                    }
                    if let Some(i) = i {
                        if psi.values().any(|&v| v == z) {
                            continue;
                        }
                        psi.insert(i, z);
                    }
                    if let Ok(s) = PSystem::new(d.clone(), psi) {
                        out.push(s);
                    }
                }
            }
        }
        out
    }

    /// Realizes `ext` over `anchor`; returns whether the chain changed.
    fn resolve(&mut self, anchor: Vec<Elem>, ext: PSystem) -> Result<bool> {
        let pins: BTreeMap<Elem, Elem> = anchor.iter().map(|&a| (a, a)).collect();
        let step = self.step;
        let top = self.chain.top_system().expanded();
        if let Some(r) = EmbeddingSearch::pinned(&ext.expanded(), &top, &pins)?.first() {
            self.log(AutEntry::Saturation {
                step,
                anchor,
                extension: ext,
                resolution: r,
                growth: None,
                pairs: Vec::new(),
            });
            return Ok(false);
        }
        let order = self.fresh_order(&ext.carrier, &pins);
        let outcome = GlueProblem::new(&self.chain.top, &ext.carrier, self.chain.spec.forbidden())
            .ident(pins)
            .systems(&self.chain.map, &ext.psi)
            .new_order(order)
            .budget(self.budget.search_nodes)
            .max_size(self.chain.top.len() + self.budget.amalgam_bound)
            .solve();
        match outcome {
            GlueOutcome::Found(g) => {
                let pairs = self.absorb(g.psi.as_ref().expect("glued in system mode"))?;
                let growth = self.grow(g.result);
                self.log(AutEntry::Saturation {
                    step,
                    anchor,
                    extension: ext,
                    resolution: Embedding::new(g.ext_map),
                    growth,
                    pairs,
                });
                Ok(true)
            }
            GlueOutcome::Infeasible => {
                self.stall(format!(
                    "extension {ext:?} of anchor {anchor:?} cannot be glued on"
                ));
                Ok(false)
            }
            GlueOutcome::BudgetExhausted => {
                self.stall(format!(
                    "extension {ext:?} of anchor {anchor:?} ran out of budget"
                ));
                Ok(false)
            }
        }
    }
}
