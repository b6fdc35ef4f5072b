//! Systems `⟨A, ψ⟩` of a member `A` with a partial isomorphism `ψ` between
//! two of its substructures, their embeddings, bounded joint embedding and
//! weak amalgamation, and chains of systems whose union map approximates a
//! generic automorphism.
//!
//! A system is also read as a structure in the signature extended by a
//! binary relation holding the graph of `ψ`. Embeddings of those expanded
//! structures are the strong system embeddings: they reflect `ψ` as well as
//! preserve it.

mod build;
mod chain;
#[cfg(test)]
mod tests;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::class::{ClassSpec, Verdict};
use crate::error::{Error, Result};
use crate::search::EmbeddingSearch;
use crate::structure::{pair_list, Elem, Embedding, FinStructure, RelSymbol, Signature};

pub use build::build_generic_automorphism;
pub use chain::{system_back_and_forth, AutChain, AutEntry, MapSide};

/// A carrier with a partial isomorphism `psi: dom_loc → ran_loc` of it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SystemDoc", into = "SystemDoc")]
pub struct PSystem {
    carrier: FinStructure,
    psi: BTreeMap<Elem, Elem>,
}

#[derive(Serialize, Deserialize)]
struct SystemDoc {
    carrier: FinStructure,
    #[serde(with = "pair_list")]
    psi: BTreeMap<Elem, Elem>,
}

impl TryFrom<SystemDoc> for PSystem {
    type Error = Error;

    fn try_from(d: SystemDoc) -> Result<Self> {
        PSystem::new(d.carrier, d.psi)
    }
}

impl From<PSystem> for SystemDoc {
    fn from(s: PSystem) -> Self {
        SystemDoc {
            carrier: s.carrier,
            psi: s.psi,
        }
    }
}

impl PSystem {
    pub fn new(carrier: FinStructure, psi: BTreeMap<Elem, Elem>) -> Result<Self> {
        if !carrier.is_partial_iso_into(&carrier, &psi) {
            return Err(Error::Invalid(format!(
                "{psi:?} is not a partial isomorphism of {carrier:?}"
            )));
        }
        Ok(PSystem { carrier, psi })
    }

    /// The carrier with the empty map.
    pub fn plain(carrier: FinStructure) -> Self {
        PSystem {
            carrier,
            psi: BTreeMap::new(),
        }
    }

    pub fn carrier(&self) -> &FinStructure {
        &self.carrier
    }

    pub fn psi(&self) -> &BTreeMap<Elem, Elem> {
        &self.psi
    }

    pub fn dom_loc(&self) -> BTreeSet<Elem> {
        self.psi.keys().copied().collect()
    }

    pub fn ran_loc(&self) -> BTreeSet<Elem> {
        self.psi.values().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.carrier.len()
    }

    pub fn is_empty(&self) -> bool {
        self.carrier.is_empty()
    }

    /// Whether the carrier, and hence both ends of the map, are members.
    pub fn validate(&self, spec: &ClassSpec) -> Result<()> {
        if spec.membership(&self.carrier)? {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "the carrier {:?} is not a member of `{}`",
                self.carrier,
                spec.label()
            )))
        }
    }

    /// The carrier with the graph of the map as one more binary relation.
    pub fn expanded(&self) -> FinStructure {
        let sig = expanded_sig(self.carrier.sig());
        let p = sig.len() - 1;
        let tuples = (0..self.carrier.sig().len())
            .flat_map(|r| self.carrier.tuples(r).iter().map(move |t| (r, t.clone())))
            .chain(self.psi.iter().map(|(&a, &b)| (p, vec![a, b])));
        FinStructure::new(
            Arc::new(sig),
            self.carrier.universe().iter().copied(),
            tuples,
        )
        .expect("the map lives on the carrier")
    }

    /// The subsystem on `subset`: the induced carrier and the map restricted
    /// to pairs inside it.
    pub fn restrict(&self, subset: &[Elem]) -> Result<PSystem> {
        let carrier = self.carrier.induced(subset)?;
        let psi = self
            .psi
            .iter()
            .filter(|(a, b)| carrier.contains(**a) && carrier.contains(**b))
            .map(|(&a, &b)| (a, b))
            .collect();
        Ok(PSystem { carrier, psi })
    }
}

/// `sig` followed by a fresh plain binary symbol for the map.
pub fn expanded_sig(sig: &Signature) -> Signature {
    let mut name = "psi".to_string();
    while sig.index_of(&name).is_some() {
        name.push('\'');
    }
    let mut rels = sig.relations().to_vec();
    rels.push(RelSymbol::plain(&name, 2));
    Signature::new(rels).expect("the name is fresh")
}

/// Whether `f` maps `dom(ψ_S)` into `dom(φ_T)`, `ran(ψ_S)` into `ran(φ_T)`
/// and satisfies `f∘ψ_S ⊆ φ_T∘f`, besides embedding the carriers.
pub fn is_system_embedding(f: &Embedding, s: &PSystem, t: &PSystem) -> Result<bool> {
    s.carrier.same_sig(&t.carrier)?;
    if f.map.len() != s.len() || s.carrier.universe().iter().any(|x| !f.map.contains_key(x)) {
        return Err(Error::Domain(
            "the map is not defined exactly on the source carrier".into(),
        ));
    }
    if f.map.values().any(|&y| !t.carrier.contains(y)) {
        return Err(Error::Domain("the map leaves the target carrier".into()));
    }
    if !f.is_valid(&s.carrier, &t.carrier) {
        return Ok(false);
    }
    Ok(s.psi
        .iter()
        .all(|(a, b)| t.psi.get(&f.map[a]) == Some(&f.map[b])))
}

/// Whether `f` is a system embedding that also reflects the map: `φ_T`
/// relates two images only if `ψ_S` relates their sources.
pub fn is_strong_system_embedding(f: &Embedding, s: &PSystem, t: &PSystem) -> Result<bool> {
    if !is_system_embedding(f, s, t)? {
        return Ok(false);
    }
    Ok(s.carrier.universe().iter().all(|a| {
        let fa = f.map[a];
        match t.psi.get(&fa) {
            Some(y) => s.psi.get(a).map(|b| f.map[b]) == Some(*y) || !f.image().contains(y),
            None => true,
        }
    }))
}

/// Every partial isomorphism of `d` extending `base`, with the new pairs
/// chosen in increasing order of their source.
pub fn partial_isos_extending(
    d: &FinStructure,
    base: &BTreeMap<Elem, Elem>,
) -> Vec<BTreeMap<Elem, Elem>> {
    fn rec(
        d: &FinStructure,
        free: &[Elem],
        map: &mut BTreeMap<Elem, Elem>,
        out: &mut Vec<BTreeMap<Elem, Elem>>,
    ) {
        let Some((&x, rest)) = free.split_first() else {
            out.push(map.clone());
            return;
        };
        rec(d, rest, map, out);
        let used: BTreeSet<Elem> = map.values().copied().collect();
        for &y in d.universe() {
            if used.contains(&y) {
                continue;
            }
            map.insert(x, y);
            if d.is_partial_iso_into(d, map) {
                rec(d, rest, map, out);
            }
            map.remove(&x);
        }
    }
    if !d.is_partial_iso_into(d, base) {
        return Vec::new();
    }
    let free: Vec<Elem> = d
        .universe()
        .iter()
        .copied()
        .filter(|x| !base.contains_key(x))
        .collect();
    let mut out = Vec::new();
    rec(d, &free, &mut base.clone(), &mut out);
    out
}

/// Systems containing `t` literally, with carriers of at most `max_size`
/// elements and maps extending that of `t`; `t` itself comes first.
pub fn system_extensions(spec: &ClassSpec, t: &PSystem, max_size: usize) -> Vec<PSystem> {
    let mut carriers = vec![t.carrier.clone()];
    carriers.extend(spec.extensions(&t.carrier, max_size));
    let mut out = Vec::new();
    for c in carriers {
        for psi in partial_isos_extending(&c, &t.psi) {
            out.push(PSystem {
                carrier: c.clone(),
                psi,
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemJoint {
    pub joint: PSystem,
    pub from_s: Embedding,
    pub from_t: Embedding,
}

/// A system into which both `s` and `t` system-embed, with at most `bound`
/// elements; disjoint placements are tried first.
pub fn solve_jep_p(
    spec: &ClassSpec,
    s: &PSystem,
    t: &PSystem,
    bound: usize,
) -> Result<Verdict<SystemJoint>> {
    s.validate(spec)?;
    t.validate(spec)?;
    let found = spec.glue_any(
        &s.carrier,
        &t.carrier,
        &BTreeMap::new(),
        bound,
        Some((&s.psi, &t.psi)),
        |g| {
            Some(SystemJoint {
                joint: PSystem {
                    carrier: g.result.clone(),
                    psi: g.psi.clone().expect("glued in system mode"),
                },
                from_s: Embedding::identity(s.carrier.universe()),
                from_t: Embedding::new(g.ext_map.clone()),
            })
        },
    );
    Ok(match found {
        Some(w) => Verdict::Witnessed(w),
        None => Verdict::NoneUpTo { bound },
    })
}

/// The `T` and `e: S → T` of weak amalgamation for systems.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemWapWitness {
    pub source: PSystem,
    pub pivot: PSystem,
    pub e: Embedding,
    pub certified_extension_bound: usize,
}

/// Searches for `T` with at most `witness_bound` elements and a system
/// embedding `e: S → T` such that every two system extensions of `T` with
/// at most `extension_bound` elements amalgamate over `S` within
/// `amalgam_bound`. Candidates are `T = S`, `e = id` first, then by size,
/// base type, map and `e`.
pub fn solve_wap_p(
    spec: &ClassSpec,
    s: &PSystem,
    witness_bound: usize,
    extension_bound: usize,
    amalgam_bound: usize,
) -> Result<Verdict<SystemWapWitness>> {
    s.validate(spec)?;
    let id = Embedding::identity(s.carrier.universe());
    if let Some((b1, b2)) =
        spec.certifies(&s.carrier, &s.carrier, &id, extension_bound, amalgam_bound)?
    {
        return Err(Error::Precondition(format!(
            "`{}` does not amalgamate {b1:?} and {b2:?} over {:?} within {amalgam_bound}",
            spec.label(),
            s.carrier
        )));
    }
    let mut candidates: Vec<(PSystem, Embedding)> = Vec::new();
    if s.len() <= witness_bound {
        candidates.push((s.clone(), id));
    }
    for c in spec.enumerate_types(witness_bound) {
        if c.len() < s.len() {
            continue;
        }
        let embeddings = EmbeddingSearch::new(&s.carrier, &c)?.all();
        for psi in partial_isos_extending(&c, &BTreeMap::new()) {
            let t = PSystem {
                carrier: c.clone(),
                psi,
            };
            for e in &embeddings {
                if is_system_embedding(e, s, &t)? {
                    candidates.push((t.clone(), e.clone()));
                }
            }
        }
    }
    for (pivot, e) in candidates {
        if certifies_p(spec, &pivot, &e, extension_bound, amalgam_bound).is_none() {
            return Ok(Verdict::Witnessed(SystemWapWitness {
                source: s.clone(),
                pivot,
                e,
                certified_extension_bound: extension_bound,
            }));
        }
    }
    Ok(Verdict::NoneUpTo {
        bound: witness_bound,
    })
}

/// The first pair of system extensions of `pivot` that do not amalgamate
/// over the image of `e`.
pub fn certifies_p(
    spec: &ClassSpec,
    pivot: &PSystem,
    e: &Embedding,
    extension_bound: usize,
    amalgam_bound: usize,
) -> Option<(PSystem, PSystem)> {
    let exts = system_extensions(spec, pivot, extension_bound);
    let forced: BTreeMap<Elem, Elem> = e.map.values().map(|&x| (x, x)).collect();
    for i in 0..exts.len() {
        for j in i..exts.len() {
            let (d1, d2) = (&exts[i], &exts[j]);
            let found = spec.glue_any(
                &d1.carrier,
                &d2.carrier,
                &forced,
                amalgam_bound,
                Some((&d1.psi, &d2.psi)),
                |_| Some(()),
            );
            if found.is_none() {
                return Some((d1.clone(), d2.clone()));
            }
        }
    }
    None
}
