//! Finite relational structures, embeddings and partial isomorphisms.
//!
//! Elements are naturals. A structure lives on a finite strictly increasing
//! set of naturals and interprets each relation symbol of its signature as a
//! finite set of tuples over that set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Elem = usize;
pub type Tuple = Vec<Elem>;

/// A relation symbol. Binary symbols may be declared `symmetric` and/or
/// `irreflexive`; structures over such symbols are closed under swapping and
/// carry no loops, which is how simple graphs are expressed without
/// forbidden patterns.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelSymbol {
    pub name: String,
    pub arity: usize,
    pub symmetric: bool,
    pub irreflexive: bool,
}

impl RelSymbol {
    pub fn plain(name: &str, arity: usize) -> Self {
        RelSymbol {
            name: name.to_string(),
            arity,
            symmetric: false,
            irreflexive: false,
        }
    }

    /// A symmetric irreflexive binary symbol (a simple-graph edge relation).
    pub fn edge(name: &str) -> Self {
        RelSymbol {
            name: name.to_string(),
            arity: 2,
            symmetric: true,
            irreflexive: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Signature {
    relations: Vec<RelSymbol>,
}

impl Signature {
    pub fn new(relations: Vec<RelSymbol>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in &relations {
            if r.arity == 0 {
                return Err(Error::Invalid(format!("relation `{}` has arity 0", r.name)));
            }
            if !seen.insert(r.name.clone()) {
                return Err(Error::Invalid(format!(
                    "duplicate relation name `{}`",
                    r.name
                )));
            }
            if (r.symmetric || r.irreflexive) && r.arity != 2 {
                return Err(Error::Invalid(format!(
                    "relation `{}`: symmetric/irreflexive flags require arity 2",
                    r.name
                )));
            }
        }
        Ok(Signature { relations })
    }

    /// Simple graphs: one symmetric irreflexive binary relation `E`.
    pub fn graph() -> Self {
        Signature {
            relations: vec![RelSymbol::edge("E")],
        }
    }

    pub fn relations(&self) -> &[RelSymbol] {
        &self.relations
    }

    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.relations.iter().position(|r| r.name == name)
    }

    pub fn is_single_binary(&self) -> bool {
        self.relations.len() == 1 && self.relations[0].arity == 2
    }

    /// Groups of tuples of relation `rel` over `elems` that contain `fresh`.
    /// Each group is an all-or-nothing unit: for symmetric symbols the two
    /// orientations of a pair, otherwise a single tuple. Loops are omitted for
    /// irreflexive symbols.
    pub fn fresh_groups(&self, rel: usize, fresh: Elem, elems: &[Elem]) -> Vec<Vec<Tuple>> {
        let sym = &self.relations[rel];
        let mut pool: Vec<Elem> = elems.iter().copied().filter(|&x| x != fresh).collect();
        pool.push(fresh);
        let mut groups = Vec::new();
        let mut seen: BTreeSet<Tuple> = BTreeSet::new();
        for t in tuples_over(sym.arity, &pool) {
            if !t.contains(&fresh) || seen.contains(&t) {
                continue;
            }
            if sym.irreflexive && t[0] == t[1] {
                continue;
            }
            if sym.symmetric && t[0] != t[1] {
                let rev = vec![t[1], t[0]];
                seen.insert(rev.clone());
                seen.insert(t.clone());
                groups.push(vec![t, rev]);
            } else {
                seen.insert(t.clone());
                groups.push(vec![t]);
            }
        }
        groups
    }
}

/// All tuples of the given arity over `elems`, in lexicographic order of
/// positions in `elems`.
pub fn tuples_over(arity: usize, elems: &[Elem]) -> impl Iterator<Item = Tuple> + '_ {
    let n = elems.len();
    let total = if n == 0 { 0 } else { n.pow(arity as u32) };
    (0..total).map(move |mut code| {
        let mut t = vec![0; arity];
        for slot in t.iter_mut().rev() {
            *slot = elems[code % n];
            code /= n;
        }
        t
    })
}

/// Tuples of the given arity over `0..=k` that contain `k`.
pub fn tuples_through(arity: usize, k: usize) -> Vec<Tuple> {
    fn rec(arity: usize, k: usize, cur: &mut Vec<usize>, hit: bool, out: &mut Vec<Tuple>) {
        if cur.len() == arity {
            if hit {
                out.push(cur.clone());
            }
            return;
        }
        let from = if !hit && cur.len() + 1 == arity { k } else { 0 };
        for l in from..=k {
            cur.push(l);
            rec(arity, k, cur, hit || l == k, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(arity, k, &mut Vec::with_capacity(arity), false, &mut out);
    out
}

/// A finite relational structure on a finite set of naturals.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FinStructure {
    sig: Arc<Signature>,
    universe: Vec<Elem>,
    rels: Vec<BTreeSet<Tuple>>,
}

impl FinStructure {
    /// Builds a structure from `(relation index, tuple)` pairs. Symmetric
    /// relations are closed under swapping.
    pub fn new(
        sig: Arc<Signature>,
        universe: impl IntoIterator<Item = Elem>,
        tuples: impl IntoIterator<Item = (usize, Tuple)>,
    ) -> Result<Self> {
        let universe: BTreeSet<Elem> = universe.into_iter().collect();
        let mut rels = vec![BTreeSet::new(); sig.len()];
        for (r, t) in tuples {
            let sym = sig
                .relations
                .get(r)
                .ok_or_else(|| Error::Invalid(format!("relation index {r} out of range")))?;
            if t.len() != sym.arity {
                return Err(Error::Invalid(format!(
                    "tuple {:?} has length {} but `{}` has arity {}",
                    t,
                    t.len(),
                    sym.name,
                    sym.arity
                )));
            }
            if let Some(x) = t.iter().find(|x| !universe.contains(x)) {
                return Err(Error::Invalid(format!(
                    "tuple {:?} of `{}` mentions {x}, which is outside the universe",
                    t, sym.name
                )));
            }
            if sym.irreflexive && t[0] == t[1] {
                return Err(Error::Invalid(format!(
                    "loop {:?} in irreflexive `{}`",
                    t, sym.name
                )));
            }
            if sym.symmetric {
                rels[r].insert(vec![t[1], t[0]]);
            }
            rels[r].insert(t);
        }
        Ok(FinStructure {
            sig,
            universe: universe.into_iter().collect(),
            rels,
        })
    }

    pub fn empty(sig: Arc<Signature>) -> Self {
        let rels = vec![BTreeSet::new(); sig.len()];
        FinStructure {
            sig,
            universe: Vec::new(),
            rels,
        }
    }

    /// A simple graph on `universe` with the given undirected edges.
    pub fn graph(universe: impl IntoIterator<Item = Elem>, edges: &[(Elem, Elem)]) -> Result<Self> {
        Self::new(
            Arc::new(Signature::graph()),
            universe,
            edges.iter().map(|&(a, b)| (0, vec![a, b])),
        )
    }

    pub fn sig(&self) -> &Signature {
        &self.sig
    }

    pub fn sig_arc(&self) -> &Arc<Signature> {
        &self.sig
    }

    pub fn universe(&self) -> &[Elem] {
        &self.universe
    }

    pub fn len(&self) -> usize {
        self.universe.len()
    }

    pub fn is_empty(&self) -> bool {
        self.universe.is_empty()
    }

    pub fn contains(&self, x: Elem) -> bool {
        self.universe.binary_search(&x).is_ok()
    }

    pub fn max_elem(&self) -> Option<Elem> {
        self.universe.last().copied()
    }

    pub fn holds(&self, rel: usize, t: &[Elem]) -> bool {
        self.rels[rel].contains(t)
    }

    pub fn tuples(&self, rel: usize) -> &BTreeSet<Tuple> {
        &self.rels[rel]
    }

    pub fn tuple_count(&self) -> usize {
        self.rels.iter().map(|r| r.len()).sum()
    }

    pub fn same_sig(&self, other: &FinStructure) -> Result<()> {
        if Arc::ptr_eq(&self.sig, &other.sig) || self.sig == other.sig {
            Ok(())
        } else {
            Err(Error::SignatureMismatch(format!(
                "{:?} vs {:?}",
                self.sig, other.sig
            )))
        }
    }

    /// The substructure induced on `subset`.
    pub fn induced(&self, subset: &[Elem]) -> Result<FinStructure> {
        if let Some(x) = subset.iter().find(|&&x| !self.contains(x)) {
            return Err(Error::Domain(format!("{x} is not in the universe")));
        }
        let keep: BTreeSet<Elem> = subset.iter().copied().collect();
        Ok(self.induced_unchecked(&keep))
    }

    pub(crate) fn induced_unchecked(&self, keep: &BTreeSet<Elem>) -> FinStructure {
        let rels = self
            .rels
            .iter()
            .map(|r| {
                r.iter()
                    .filter(|t| t.iter().all(|x| keep.contains(x)))
                    .cloned()
                    .collect()
            })
            .collect();
        FinStructure {
            sig: self.sig.clone(),
            universe: keep.iter().copied().collect(),
            rels,
        }
    }

    /// Transports the structure along an injective relabeling defined on the
    /// whole universe.
    pub fn relabel(&self, map: &BTreeMap<Elem, Elem>) -> Result<FinStructure> {
        let mut image = BTreeSet::new();
        for &x in &self.universe {
            let y = *map
                .get(&x)
                .ok_or_else(|| Error::Domain(format!("relabeling misses {x}")))?;
            if !image.insert(y) {
                return Err(Error::Domain(format!("relabeling is not injective at {y}")));
            }
        }
        let rels = self
            .rels
            .iter()
            .map(|r| {
                r.iter()
                    .map(|t| t.iter().map(|x| map[x]).collect())
                    .collect()
            })
            .collect();
        Ok(FinStructure {
            sig: self.sig.clone(),
            universe: image.into_iter().collect(),
            rels,
        })
    }

    /// Relabels onto `{0..n}` in increasing order.
    pub fn compact(&self) -> (FinStructure, BTreeMap<Elem, Elem>) {
        let map: BTreeMap<Elem, Elem> = self
            .universe
            .iter()
            .enumerate()
            .map(|(i, &x)| (x, i))
            .collect();
        (self.relabel(&map).expect("compaction is a bijection"), map)
    }

    /// Adds new elements and tuples. Tuples may mention old and new elements.
    pub fn extended(
        &self,
        new_elems: impl IntoIterator<Item = Elem>,
        tuples: impl IntoIterator<Item = (usize, Tuple)>,
    ) -> Result<FinStructure> {
        let universe = self.universe.iter().copied().chain(new_elems);
        let old = self
            .rels
            .iter()
            .enumerate()
            .flat_map(|(r, ts)| ts.iter().map(move |t| (r, t.clone())));
        FinStructure::new(self.sig.clone(), universe, old.chain(tuples))
    }

    pub(crate) fn insert_tuple(&mut self, rel: usize, t: Tuple) {
        self.rels[rel].insert(t);
    }

    pub(crate) fn remove_tuple(&mut self, rel: usize, t: &[Elem]) {
        self.rels[rel].remove(t);
    }

    /// Checks that `t` only uses universe elements and that every tuple has
    /// the declared arity; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        for (r, ts) in self.rels.iter().enumerate() {
            let sym = &self.sig.relations[r];
            for t in ts {
                if t.len() != sym.arity || t.iter().any(|&x| !self.contains(x)) {
                    return Err(Error::Invalid(format!(
                        "bad tuple {:?} in `{}`",
                        t, sym.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Whether `map` (defined on a subset of this universe) is a partial
    /// isomorphism into `other`: injective, and every tuple over its domain
    /// holds here iff its image holds there.
    pub fn is_partial_iso_into(&self, other: &FinStructure, map: &BTreeMap<Elem, Elem>) -> bool {
        let mut image = BTreeSet::new();
        for (&x, &y) in map {
            if !self.contains(x) || !other.contains(y) || !image.insert(y) {
                return false;
            }
        }
        let dom: Vec<Elem> = map.keys().copied().collect();
        for (r, sym) in self.sig.relations.iter().enumerate() {
            for t in tuples_over(sym.arity, &dom) {
                let img: Tuple = t.iter().map(|x| map[x]).collect();
                if self.holds(r, &t) != other.holds(r, &img) {
                    return false;
                }
            }
        }
        true
    }
}

impl fmt::Debug for FinStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, x) in self.universe.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, "}}")?;
        for (r, sym) in self.sig.relations.iter().enumerate() {
            write!(f, " {}:", sym.name)?;
            let mut first = true;
            for t in &self.rels[r] {
                if sym.symmetric && t[0] > t[1] {
                    continue;
                }
                write!(f, "{}{:?}", if first { "" } else { "," }, t)?;
                first = false;
            }
        }
        Ok(())
    }
}

/// An injective map between universes that preserves and reflects every
/// relation. Carries only the map; source and target are supplied when
/// validating.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Embedding {
    #[serde(with = "pair_list")]
    pub map: BTreeMap<Elem, Elem>,
}

impl Embedding {
    pub fn new(map: BTreeMap<Elem, Elem>) -> Self {
        Embedding { map }
    }

    pub fn identity(on: &[Elem]) -> Self {
        Embedding {
            map: on.iter().map(|&x| (x, x)).collect(),
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Elem, Elem)>) -> Self {
        Embedding {
            map: pairs.into_iter().collect(),
        }
    }

    pub fn apply(&self, x: Elem) -> Option<Elem> {
        self.map.get(&x).copied()
    }

    pub fn image(&self) -> BTreeSet<Elem> {
        self.map.values().copied().collect()
    }

    pub fn is_valid(&self, source: &FinStructure, target: &FinStructure) -> bool {
        source.sig() == target.sig()
            && self.map.len() == source.len()
            && source.universe().iter().all(|x| self.map.contains_key(x))
            && source.is_partial_iso_into(target, &self.map)
    }

    pub fn validate(&self, source: &FinStructure, target: &FinStructure) -> Result<()> {
        source.same_sig(target)?;
        if self.is_valid(source, target) {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "{:?} is not an embedding of {:?} into {:?}",
                self.map, source, target
            )))
        }
    }

    /// `other ∘ self`.
    pub fn then(&self, other: &Embedding) -> Option<Embedding> {
        self.map
            .iter()
            .map(|(&x, y)| other.apply(*y).map(|z| (x, z)))
            .collect::<Option<BTreeMap<_, _>>>()
            .map(Embedding::new)
    }

    /// Agreement of two maps on the given points.
    pub fn agrees_on(&self, other: &Embedding, points: &[Elem]) -> bool {
        points
            .iter()
            .all(|&x| self.apply(x).is_some() && self.apply(x) == other.apply(x))
    }
}

/// A finite injective partial map between two structures whose restriction
/// is an isomorphism of the induced substructures on its domain and range.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PartialIso {
    #[serde(with = "pair_list")]
    pub pairs: BTreeMap<Elem, Elem>,
}

impl PartialIso {
    pub fn new(pairs: BTreeMap<Elem, Elem>) -> Self {
        PartialIso { pairs }
    }

    pub fn is_valid(&self, left: &FinStructure, right: &FinStructure) -> bool {
        left.sig() == right.sig() && left.is_partial_iso_into(right, &self.pairs)
    }

    pub fn domain(&self) -> BTreeSet<Elem> {
        self.pairs.keys().copied().collect()
    }

    pub fn range(&self) -> BTreeSet<Elem> {
        self.pairs.values().copied().collect()
    }

    pub fn inverse(&self) -> PartialIso {
        PartialIso {
            pairs: self.pairs.iter().map(|(&a, &b)| (b, a)).collect(),
        }
    }

    pub fn restrict(&self, to: &BTreeSet<Elem>) -> PartialIso {
        PartialIso {
            pairs: self
                .pairs
                .iter()
                .filter(|(a, _)| to.contains(a))
                .map(|(&a, &b)| (a, b))
                .collect(),
        }
    }

    pub fn extends(&self, smaller: &PartialIso) -> bool {
        smaller
            .pairs
            .iter()
            .all(|(a, b)| self.pairs.get(a) == Some(b))
    }
}

/// Maps serialize as `[[x, y], ...]` so they survive formats without
/// integer keys.
pub(crate) mod pair_list {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serializer};

    use super::Elem;

    pub fn serialize<S: Serializer>(m: &BTreeMap<Elem, Elem>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Elem, Elem>, D::Error> {
        let pairs: Vec<(Elem, Elem)> = Vec::deserialize(d)?;
        let n = pairs.len();
        let map: BTreeMap<Elem, Elem> = pairs.into_iter().collect();
        if map.len() != n {
            return Err(serde::de::Error::custom("an element is mapped twice"));
        }
        Ok(map)
    }
}
