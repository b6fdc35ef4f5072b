//! The limit of a class as an ascending chain of finite stages, and checks of
//! universality, weak saturation and weak homogeneity on it.
//!
//! All stages are initial segments of one growing structure, the top, so a
//! chain stores the top and the size of every stage. Each growth is logged
//! as a delta, which makes the log replayable.

mod build;
mod verify;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::class::{ClassSpec, WapWitness};
use crate::error::{Error, Result};
use crate::structure::{Elem, Embedding, FinStructure, Tuple};

pub(crate) use build::anchors_of;
pub use build::build_limit;
pub use verify::{
    back_and_forth, extend_partial_iso, universality_of, verify_universality,
    verify_weak_homogeneity, verify_weak_saturation, BnfBudget, BnfFailure, Side, StarWitness,
    UniversalityReport,
};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    /// Most elements a joint-embedding step may add.
    pub jep_bound: usize,
    /// Most elements a saturation step may add.
    pub amalgam_bound: usize,
    /// Largest extension `D` scheduled as a saturation task; anchors have at
    /// most `extension_bound - 1` elements.
    pub extension_bound: usize,
    /// Weak amalgamation witnesses are searched among pivots with at most
    /// this many elements more than the anchor.
    pub witness_slack: usize,
    /// Initial node budget for a single gluing search.
    pub search_nodes: u64,
    /// Retries of a task whose gluing ran out of budget, each with four
    /// times the previous budget.
    pub max_retries: u32,
    /// Most tasks an odd step may find already realized before it ends
    /// without growth.
    pub checks_per_step: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            jep_bound: 16,
            amalgam_bound: 8,
            extension_bound: 7,
            witness_slack: 0,
            search_nodes: 200_000,
            checks_per_step: 256,
            max_retries: 4,
        }
    }
}

/// The elements and tuples a growth adds to the top.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Growth {
    pub elements: Vec<Elem>,
    pub tuples: BTreeMap<String, Vec<Tuple>>,
}

impl Growth {
    pub(crate) fn between(before: usize, after: &FinStructure) -> Growth {
        let mut tuples = BTreeMap::new();
        for (r, sym) in after.sig().relations().iter().enumerate() {
            let ts: Vec<Tuple> = after
                .tuples(r)
                .iter()
                .filter(|t| t.iter().any(|&x| x >= before))
                .cloned()
                .collect();
            if !ts.is_empty() {
                tuples.insert(sym.name.clone(), ts);
            }
        }
        Growth {
            elements: (before..after.len()).collect(),
            tuples,
        }
    }

    pub(crate) fn apply(&self, top: &FinStructure) -> Result<FinStructure> {
        if self
            .elements
            .iter()
            .enumerate()
            .any(|(i, &x)| x != top.len() + i)
        {
            return Err(Error::Invalid(
                "growth does not continue the initial segment".into(),
            ));
        }
        let mut tuples = Vec::new();
        for (name, ts) in &self.tuples {
            let r = top
                .sig()
                .index_of(name)
                .ok_or_else(|| Error::Invalid(format!("unknown relation `{name}`")))?;
            for t in ts {
                if t.iter().all(|&x| x < top.len()) {
                    return Err(Error::Invalid("growth tuple touches no new element".into()));
                }
                tuples.push((r, t.clone()));
            }
        }
        top.extended(self.elements.iter().copied(), tuples)
    }
}

/// A one-point extension `D` of the pivot of the weak amalgamation witness
/// for an anchor of the chain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaturationTask {
    /// `anchor[i]` is the chain element playing element `i` of the witness
    /// source.
    pub anchor: Vec<Elem>,
    pub witness: WapWitness,
    /// `B → M`.
    pub into_chain: Embedding,
    pub extension: FinStructure,
    /// `B → D`.
    pub into_ext: Embedding,
}

impl SaturationTask {
    /// Witness pivot element ↦ chain element, on the image of the source.
    pub fn pins(&self) -> BTreeMap<Elem, Elem> {
        self.witness
            .source
            .universe()
            .iter()
            .map(|&i| (self.witness.e.map[&i], self.anchor[i]))
            .collect()
    }

    pub fn anchor_set(&self) -> Vec<Elem> {
        let mut s = self.anchor.clone();
        s.sort_unstable();
        s
    }

    fn validate(&self, class: &ClassSpec, top: &FinStructure, stage_len: usize) -> Result<()> {
        let w = &self.witness;
        if !class.check_wap_witness(w) || self.anchor.len() != w.source.len() {
            return Err(Error::Invalid("task witness does not re-validate".into()));
        }
        if !into_stage(&self.into_chain, &w.pivot, top, stage_len) {
            return Err(Error::Invalid(
                "task embedding into the chain is invalid".into(),
            ));
        }
        if self
            .pins()
            .iter()
            .any(|(b, m)| self.into_chain.map[b] != *m)
        {
            return Err(Error::Invalid(
                "task embedding does not extend the anchor".into(),
            ));
        }
        if !class.is_member(&self.extension) || !self.into_ext.is_valid(&w.pivot, &self.extension) {
            return Err(Error::Invalid("task extension is invalid".into()));
        }
        Ok(())
    }
}

fn into_stage(f: &Embedding, src: &FinStructure, top: &FinStructure, stage_len: usize) -> bool {
    f.map.values().all(|&y| y < stage_len) && f.is_valid(src, top)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum ScheduleEntry {
    Start {
        label: String,
        steps: usize,
        seed: u64,
        budget: Budget,
    },
    /// The type `ty`, number `type_index` in the enumeration, placed in the
    /// stage; the stage itself includes the previous one literally.
    Jep {
        step: usize,
        type_index: usize,
        ty: FinStructure,
        placement: Embedding,
        stage: usize,
        growth: Option<Growth>,
    },
    WapWitness {
        step: usize,
        witness: WapWitness,
        anchor: Vec<Elem>,
        placement: Embedding,
        stage: usize,
        growth: Option<Growth>,
    },
    Saturation {
        step: usize,
        task: SaturationTask,
        resolution: Embedding,
        stage: usize,
        growth: Option<Growth>,
    },
    Requeued {
        step: usize,
        task: SaturationTask,
        next_budget: u64,
    },
    Stalled {
        step: usize,
        reason: String,
        task: Option<SaturationTask>,
    },
}

impl ScheduleEntry {
    pub fn step(&self) -> Option<usize> {
        match self {
            ScheduleEntry::Start { .. } => None,
            ScheduleEntry::Jep { step, .. }
            | ScheduleEntry::WapWitness { step, .. }
            | ScheduleEntry::Saturation { step, .. }
            | ScheduleEntry::Requeued { step, .. }
            | ScheduleEntry::Stalled { step, .. } => Some(*step),
        }
    }

    pub fn growth(&self) -> Option<&Growth> {
        match self {
            ScheduleEntry::Jep { growth, .. }
            | ScheduleEntry::WapWitness { growth, .. }
            | ScheduleEntry::Saturation { growth, .. } => growth.as_ref(),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Chain {
    spec: ClassSpec,
    top: FinStructure,
    stage_sizes: Vec<usize>,
    log: Vec<ScheduleEntry>,
}

impl Chain {
    fn start(spec: ClassSpec, steps: usize, seed: u64, budget: Budget) -> Chain {
        let top = spec.empty_structure();
        let log = vec![ScheduleEntry::Start {
            label: spec.label().to_string(),
            steps,
            seed,
            budget,
        }];
        Chain {
            spec,
            top,
            stage_sizes: vec![0],
            log,
        }
    }

    pub fn spec(&self) -> &ClassSpec {
        &self.spec
    }

    pub fn top(&self) -> &FinStructure {
        &self.top
    }

    pub fn log(&self) -> &[ScheduleEntry] {
        &self.log
    }

    pub fn stage_count(&self) -> usize {
        self.stage_sizes.len()
    }

    pub fn stage_sizes(&self) -> &[usize] {
        &self.stage_sizes
    }

    pub fn stage(&self, i: usize) -> Result<FinStructure> {
        let n = *self
            .stage_sizes
            .get(i)
            .ok_or_else(|| Error::Domain(format!("no stage {i}")))?;
        self.top.induced(&(0..n).collect::<Vec<_>>())
    }

    /// Saturation tasks that were resolved, with their resolutions.
    pub fn resolved_tasks(&self) -> impl Iterator<Item = (&SaturationTask, &Embedding)> {
        self.log.iter().filter_map(|e| match e {
            ScheduleEntry::Saturation {
                task, resolution, ..
            } => Some((task, resolution)),
            _ => None,
        })
    }

    /// Tasks stalled or requeued and never resolved afterwards.
    pub fn open_tasks(&self) -> Vec<&SaturationTask> {
        let mut open: Vec<&SaturationTask> = Vec::new();
        for e in &self.log {
            match e {
                ScheduleEntry::Requeued { task, .. }
                | ScheduleEntry::Stalled {
                    task: Some(task), ..
                } => {
                    if !open.contains(&task) {
                        open.push(task);
                    }
                }
                ScheduleEntry::Saturation { task, .. } => open.retain(|t| *t != task),
                _ => {}
            }
        }
        open
    }

    /// Re-checks coherence, membership and every log entry, and that the
    /// logged growths rebuild the top.
    pub fn validate(&self) -> Result<()> {
        if !self.spec.is_member(&self.top) {
            return Err(Error::Invalid("top stage is not a member".into()));
        }
        let replayed = Chain::replay(self.spec.clone(), self.log.clone())?;
        if replayed.top != self.top || replayed.stage_sizes != self.stage_sizes {
            return Err(Error::Invalid("log does not replay to the chain".into()));
        }
        for entry in &self.log {
            self.validate_entry(entry)?;
        }
        Ok(())
    }

    fn stage_len(&self, stage: usize) -> Result<usize> {
        self.stage_sizes
            .get(stage)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("entry names missing stage {stage}")))
    }

    fn validate_entry(&self, entry: &ScheduleEntry) -> Result<()> {
        let top = &self.top;
        match entry {
            ScheduleEntry::Jep {
                ty,
                placement,
                stage,
                ..
            } => {
                if !into_stage(placement, ty, top, self.stage_len(*stage)?) {
                    return Err(Error::Invalid(
                        "joint embedding placement is invalid".into(),
                    ));
                }
            }
            ScheduleEntry::WapWitness {
                witness,
                anchor,
                placement,
                stage,
                ..
            } => {
                let ok = self.spec.check_wap_witness(witness)
                    && anchor.len() == witness.source.len()
                    && into_stage(placement, &witness.pivot, top, self.stage_len(*stage)?)
                    && witness
                        .source
                        .universe()
                        .iter()
                        .all(|&i| placement.map[&witness.e.map[&i]] == anchor[i]);
                if !ok {
                    return Err(Error::Invalid("witness placement is invalid".into()));
                }
            }
            ScheduleEntry::Saturation {
                task,
                resolution,
                stage,
                ..
            } => {
                let n = self.stage_len(*stage)?;
                task.validate(&self.spec, top, n)?;
                if !into_stage(resolution, &task.extension, top, n)
                    || task
                        .pins()
                        .iter()
                        .any(|(d, m)| resolution.map[&task.into_ext.map[d]] != *m)
                {
                    return Err(Error::Invalid("task resolution is invalid".into()));
                }
            }
            ScheduleEntry::Start { label, .. } => {
                if label != self.spec.label() {
                    return Err(Error::Invalid("log was built for another class".into()));
                }
            }
            ScheduleEntry::Requeued { .. } | ScheduleEntry::Stalled { .. } => {}
        }
        Ok(())
    }

    /// Rebuilds a chain from its log: growths are applied in order and a
    /// stage is recorded at the end of every step that grew.
    pub fn replay(spec: ClassSpec, log: Vec<ScheduleEntry>) -> Result<Chain> {
        let mut top = spec.empty_structure();
        let mut stage_sizes = vec![0];
        let mut last_step = None;
        for entry in &log {
            if entry.step() != last_step && stage_sizes.last() != Some(&top.len()) {
                stage_sizes.push(top.len());
            }
            last_step = entry.step();
            if let Some(g) = entry.growth() {
                top = g.apply(&top)?;
            }
        }
        if stage_sizes.last() != Some(&top.len()) {
            stage_sizes.push(top.len());
        }
        Ok(Chain {
            spec,
            top,
            stage_sizes,
            log,
        })
    }

    pub fn write_log(&self, mut out: impl Write) -> Result<()> {
        for e in &self.log {
            let line = serde_json::to_string(e).expect("entries serialize");
            writeln!(out, "{line}").map_err(|e| Error::Invalid(format!("writing log: {e}")))?;
        }
        Ok(())
    }

    pub fn read_log(input: impl BufRead) -> Result<Vec<ScheduleEntry>> {
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
}

#[cfg(test)]
mod tests;
