//! The chain construction.
//!
//! Even steps joint-embed the next enumerated type and place a weak
//! amalgamation witness over its copy. Odd steps work through saturation
//! tasks until one needs the chain to grow.
//!
//! Tasks belong to the largest element of their anchor, and each element has
//! finitely many, so the schedule takes the elements in order: an element's
//! anchors by size then lexicographically, each anchor's one-point extensions
//! in the class order, then the element's requeued tasks. Every task has
//! finitely many predecessors. Tasks already realized in the chain are logged
//! as resolved without using up the step.

use std::collections::{BTreeMap, HashMap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Budget, Chain, Growth, SaturationTask, ScheduleEntry};
use crate::canon::{canonical_form, CanonCode};
use crate::class::{ClassSpec, WapWitness};
use crate::error::{Error, Result};
use crate::glue::{GlueOutcome, GlueProblem, Glued};
use crate::search::EmbeddingSearch;
use crate::structure::{Elem, Embedding, FinStructure};

pub fn build_limit(spec: &ClassSpec, steps: usize, budget: &Budget, seed: u64) -> Result<Chain> {
    let singletons = spec.enumerate_types(1);
    if singletons.iter().all(|t| t.is_empty()) {
        return Err(Error::Precondition(format!(
            "`{}` has no one-element member",
            spec.label()
        )));
    }
    let mut b = Builder {
        chain: Chain::start(spec.clone(), steps, seed, budget.clone()),
        budget: budget.clone(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        witnesses: HashMap::new(),
        types: TypeStream::new(spec),
        sched: Schedule::default(),
        step: 0,
    };
    for step in 0..steps {
        b.step = step;
        let before = b.chain.top.len();
        if step % 2 == 0 {
            b.even_step()?;
        } else {
            b.odd_step()?;
        }
        if b.chain.top.len() != before {
            b.chain.stage_sizes.push(b.chain.top.len());
        }
    }
    Ok(b.chain)
}

/// Lists the types in rounds: round `r` lists every type of size 1 to `r`
/// in size order, so each type recurs and sizes grow only with the rounds.
struct TypeStream {
    /// Types by size, starting with the empty structure.
    layers: Vec<Vec<FinStructure>>,
    round: usize,
    size: usize,
    pos: usize,
    index: usize,
}

impl TypeStream {
    fn new(spec: &ClassSpec) -> Self {
        TypeStream {
            layers: vec![vec![spec.empty_structure()]],
            round: 1,
            size: 1,
            pos: 0,
            index: 0,
        }
    }

    fn next(&mut self, spec: &ClassSpec) -> Option<(usize, FinStructure)> {
        loop {
            if self.size > self.round {
                self.round += 1;
                self.size = 1;
            }
            if self.size == self.layers.len() {
                let next = spec.next_type_layer(self.layers.last().expect("layers are nonempty"));
                if next.is_empty() {
                    return None;
                }
                self.layers.push(next);
            }
            if let Some(t) = self.layers[self.size].get(self.pos) {
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

struct Pending {
    task: SaturationTask,
    attempts: u32,
    nodes: u64,
}

#[derive(Default)]
struct Schedule {
    next_elem: usize,
    anchors: VecDeque<Vec<Elem>>,
    tasks: VecDeque<Pending>,
    retry: VecDeque<Pending>,
}

enum Next {
    Task(Pending),
    Grew,
    Empty,
}

enum Placed {
    At(Embedding),
    Failed(String),
}

struct Builder {
    chain: Chain,
    budget: Budget,
    rng: ChaCha8Rng,
    witnesses: HashMap<CanonCode, Option<WapWitness>>,
    types: TypeStream,
    sched: Schedule,
    step: usize,
}

/// Subsets of `{0..=n}` containing `n` with at most `cap` elements, by size
/// then lexicographically.
pub(crate) fn anchors_of(n: Elem, cap: usize) -> Vec<Vec<Elem>> {
    let mut out = Vec::new();
    let below: Vec<Elem> = (0..n).collect();
    for k in 0..cap.min(n + 1) {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let mut s: Vec<Elem> = idx.iter().map(|&i| below[i]).collect();
            s.push(n);
            out.push(s);
            let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
                break;
            };
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

impl Builder {
    fn spec(&self) -> &ClassSpec {
        &self.chain.spec
    }

    fn stage(&self) -> usize {
        self.chain.stage_sizes.len() - 1
            + usize::from(self.chain.top.len() != *self.chain.stage_sizes.last().unwrap())
    }

    fn log(&mut self, entry: ScheduleEntry) {
        self.chain.log.push(entry);
    }

    fn stall(&mut self, reason: String, task: Option<SaturationTask>) {
        let step = self.step;
        self.log(ScheduleEntry::Stalled { step, reason, task });
    }

    /// Replaces the top by a glued result; returns the growth.
    fn grow(&mut self, result: FinStructure) -> Option<Growth> {
        let before = self.chain.top.len();
        debug_assert!(result.len() > before);
        self.chain.top = result;
        Some(Growth::between(before, &self.chain.top))
    }

    fn shuffled(&mut self, mut elems: Vec<Elem>) -> Vec<Elem> {
        elems.shuffle(&mut self.rng);
        elems
    }

    /// The weak amalgamation witness for a canonical representative.
    fn witness(&mut self, rep: &FinStructure, code: CanonCode) -> Result<Option<WapWitness>> {
        if let Some(w) = self.witnesses.get(&code) {
            return Ok(w.clone());
        }
        let size = rep.len();
        let bound = size + self.budget.witness_slack;
        let w = self
            .spec()
            .find_wap_witness(rep, bound, bound + 1, 2 * bound + 2)?
            .into_witness();
        self.witnesses.insert(code, w.clone());
        Ok(w)
    }

    /// Places the pivot of `w` in the top over `anchor`, gluing it on if no
    /// copy exists.
    fn place(&mut self, w: &WapWitness, anchor: &[Elem]) -> Result<(Placed, Option<Growth>)> {
        let pins: BTreeMap<Elem, Elem> = w
            .source
            .universe()
            .iter()
            .map(|&i| (w.e.map[&i], anchor[i]))
            .collect();
        if let Some(f) = EmbeddingSearch::pinned(&w.pivot, &self.chain.top, &pins)?.first() {
            return Ok((Placed::At(f), None));
        }
        let fresh: Vec<Elem> = w
            .pivot
            .universe()
            .iter()
            .copied()
            .filter(|x| !pins.contains_key(x))
            .collect();
        let order = self.shuffled(fresh);
        let outcome = GlueProblem::new(&self.chain.top, &w.pivot, self.chain.spec.forbidden())
            .ident(pins)
            .new_order(order)
            .budget(self.budget.search_nodes)
            .max_size(self.chain.top.len() + self.budget.amalgam_bound)
            .solve();
        Ok(match outcome {
            GlueOutcome::Found(g) => {
                let growth = self.grow(g.result);
                (Placed::At(Embedding::new(g.ext_map)), growth)
            }
            GlueOutcome::Infeasible => (
                Placed::Failed("witness pivot cannot be glued over its anchor".into()),
                None,
            ),
            GlueOutcome::BudgetExhausted => (
                Placed::Failed("witness placement ran out of budget".into()),
                None,
            ),
        })
    }

    /// Computes and places the witness for `anchor` (chain elements) and
    /// logs the placement. Returns the witness, anchor in source order and
    /// placement.
    fn place_witness_for(
        &mut self,
        anchor_set: &[Elem],
    ) -> Result<Option<(WapWitness, Vec<Elem>, Embedding, bool)>> {
        let a = self.chain.top.induced(anchor_set)?;
        let c = canonical_form(&a);
        let rep = c.representative(&a);
        let mut anchor = vec![0; anchor_set.len()];
        for (&x, &i) in &c.relabeling {
            anchor[i] = x;
        }
        let Some(w) = self.witness(&rep, c.code)? else {
            self.stall(
                format!("no weak amalgamation witness for anchor {anchor_set:?} within the bound"),
                None,
            );
            return Ok(None);
        };
        let (placed, growth) = self.place(&w, &anchor)?;
        match placed {
            Placed::At(f) => {
                let grew = growth.is_some();
                if grew || !w.is_trivial() {
                    let (step, stage) = (self.step, self.stage());
                    self.log(ScheduleEntry::WapWitness {
                        step,
                        witness: w.clone(),
                        anchor: anchor.clone(),
                        placement: f.clone(),
                        stage,
                        growth,
                    });
                }
                Ok(Some((w, anchor, f, grew)))
            }
            Placed::Failed(reason) => {
                self.stall(format!("{reason} (anchor {anchor_set:?})"), None);
                Ok(None)
            }
        }
    }

    fn even_step(&mut self) -> Result<()> {
        let spec = self.chain.spec.clone();
        let Some((type_index, ty)) = self.types.next(&spec) else {
            self.stall("the class has no further types".into(), None);
            return Ok(());
        };
        let existing = EmbeddingSearch::new(&ty, &self.chain.top)?.first();
        let (placement, growth) = match existing {
            Some(f) => (f, None),
            None => match self.joint_embed(&ty)? {
                Some(g) => {
                    let growth = self.grow(g.result);
                    (Embedding::new(g.ext_map), growth)
                }
                None => {
                    self.stall(format!("type {type_index} has no joint embedding with the chain within the bound"), None);
                    return Ok(());
                }
            },
        };
        let image: Vec<Elem> = {
            let mut v: Vec<Elem> = placement.map.values().copied().collect();
            v.sort_unstable();
            v
        };
        let (step, stage) = (self.step, self.stage());
        self.log(ScheduleEntry::Jep {
            step,
            type_index,
            ty,
            placement,
            stage,
            growth,
        });
        if image.len() < self.budget.extension_bound {
            self.place_witness_for(&image)?;
        }
        Ok(())
    }

    /// Glues `ty` to the top over an embedding of its longest initial
    /// segment that embeds, falling back to a disjoint copy.
    fn joint_embed(&mut self, ty: &FinStructure) -> Result<Option<Glued>> {
        let elems = ty.universe().to_vec();
        let embeds = |k: usize| -> Result<Option<Embedding>> {
            let prefix = ty.induced(&elems[..k])?;
            Ok(EmbeddingSearch::new(&prefix, &self.chain.top)?.first())
        };
        let (mut lo, mut hi) = (0, elems.len() - 1);
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if embeds(mid)?.is_some() {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        let over = if lo == 0 { None } else { embeds(lo)? };
        let max_size = self.chain.top.len() + self.budget.jep_bound;
        for ident in over.into_iter().map(|e| e.map).chain([BTreeMap::new()]) {
            let rest: Vec<Elem> = elems
                .iter()
                .copied()
                .filter(|x| !ident.contains_key(x))
                .collect();
            let order = self.shuffled(rest);
            let outcome = GlueProblem::new(&self.chain.top, ty, self.chain.spec.forbidden())
                .ident(ident)
                .new_order(order)
                .budget(self.budget.search_nodes)
                .max_size(max_size)
                .solve();
            if let GlueOutcome::Found(g) = outcome {
                return Ok(Some(g));
            }
        }
        Ok(None)
    }

    fn next_pending(&mut self) -> Result<Next> {
        loop {
            if let Some(p) = self.sched.tasks.pop_front() {
                return Ok(Next::Task(p));
            }
            if let Some(anchor_set) = self.sched.anchors.pop_front() {
                let Some((witness, anchor, into_chain, grew)) =
                    self.place_witness_for(&anchor_set)?
                else {
                    continue;
                };
                let fresh = witness.pivot.max_elem().map_or(0, |m| m + 1);
                for d in self.chain.spec.one_point_extensions(&witness.pivot, fresh) {
                    self.sched.tasks.push_back(Pending {
                        task: SaturationTask {
                            anchor: anchor.clone(),
                            witness: witness.clone(),
                            into_chain: into_chain.clone(),
                            into_ext: Embedding::identity(witness.pivot.universe()),
                            extension: d,
                        },
                        attempts: 0,
                        nodes: self.budget.search_nodes,
                    });
                }
                if grew {
                    return Ok(Next::Grew);
                }
                continue;
            }
            if let Some(p) = self.sched.retry.pop_front() {
                return Ok(Next::Task(p));
            }
            let n = self.sched.next_elem;
            if n >= self.chain.top.len() {
                return Ok(Next::Empty);
            }
            let cap = self.budget.extension_bound.saturating_sub(1);
            if n == 0 {
                self.sched.anchors.push_back(Vec::new());
            }
            self.sched.anchors.extend(anchors_of(n, cap));
            self.sched.next_elem += 1;
        }
    }

    fn odd_step(&mut self) -> Result<()> {
        for _ in 0..self.budget.checks_per_step.max(1) {
            match self.next_pending()? {
                Next::Grew => return Ok(()),
                Next::Empty => {
                    self.stall("no pending saturation task".into(), None);
                    return Ok(());
                }
                Next::Task(p) => {
                    if self.resolve(p)? {
                        return Ok(());
                    }
                }
            }
        }
        Ok(())
    }

    /// Resolves a task; returns whether the chain grew.
    fn resolve(&mut self, p: Pending) -> Result<bool> {
        let task = &p.task;
        let d = &task.extension;
        let pins_b = task.pins();
        let pins_d: BTreeMap<Elem, Elem> = pins_b
            .iter()
            .map(|(b, m)| (task.into_ext.map[b], *m))
            .collect();
        let (step, stage) = (self.step, self.stage());
        if let Some(r) = EmbeddingSearch::pinned(d, &self.chain.top, &pins_d)?.first() {
            self.log(ScheduleEntry::Saturation {
                step,
                task: p.task,
                resolution: r,
                stage,
                growth: None,
            });
            return Ok(false);
        }
        let over_b: BTreeMap<Elem, Elem> = task
            .into_ext
            .map
            .iter()
            .map(|(b, dx)| (*dx, task.into_chain.map[b]))
            .collect();
        let max_size = self.chain.top.len() + self.budget.amalgam_bound;
        let forbidden = self.chain.spec.forbidden();
        let mut outcome = GlueProblem::new(&self.chain.top, d, forbidden)
            .ident(over_b.clone())
            .budget(p.nodes)
            .max_size(max_size)
            .solve();
        if !matches!(outcome, GlueOutcome::Found(_)) {
            let fresh: Vec<Elem> = d
                .universe()
                .iter()
                .copied()
                .filter(|x| !pins_d.contains_key(x))
                .collect();
            let order = self.shuffled(fresh);
            let forbidden = self.chain.spec.forbidden();
            outcome = GlueProblem::new(&self.chain.top, d, forbidden)
                .ident(pins_d)
                .new_order(order)
                .budget(p.nodes)
                .max_size(max_size)
                .solve();
        }
        match outcome {
            GlueOutcome::Found(g) => {
                let growth = self.grow(g.result);
                let stage = self.stage();
                let resolution = Embedding::new(g.ext_map);
                self.log(ScheduleEntry::Saturation {
                    step,
                    task: p.task,
                    resolution,
                    stage,
                    growth,
                });
                Ok(true)
            }
            GlueOutcome::BudgetExhausted if p.attempts < self.budget.max_retries => {
                let next = Pending {
                    task: p.task.clone(),
                    attempts: p.attempts + 1,
                    nodes: p.nodes.saturating_mul(4),
                };
                self.log(ScheduleEntry::Requeued {
                    step,
                    task: p.task,
                    next_budget: next.nodes,
                });
                self.sched.retry.push_back(next);
                Ok(false)
            }
            GlueOutcome::BudgetExhausted => {
                self.stall(
                    "gluing ran out of budget on every retry".into(),
                    Some(p.task),
                );
                Ok(false)
            }
            GlueOutcome::Infeasible => {
                self.stall(
                    "no gluing over the anchor within the amalgam bound".into(),
                    Some(p.task),
                );
                Ok(false)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors_are_listed_by_size() {
        assert_eq!(anchors_of(0, 3), vec![vec![0]]);
        assert_eq!(
            anchors_of(2, 3),
            vec![vec![2], vec![0, 2], vec![1, 2], vec![0, 1, 2]]
        );
        assert_eq!(
            anchors_of(3, 2),
            vec![vec![3], vec![0, 3], vec![1, 3], vec![2, 3]]
        );
        assert!(anchors_of(3, 0).is_empty());
    }
}
