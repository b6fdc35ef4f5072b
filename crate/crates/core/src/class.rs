//! Hereditary classes presented by finitely many forbidden substructures, and
//! bounded decision procedures for joint embedding and (weak) amalgamation.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::canon::{canonical_form, CanonCode};
use crate::error::{Error, Result};
use crate::glue::{hits_fresh, GlueOutcome, GlueProblem};
use crate::search::EmbeddingSearch;
use crate::structure::{Elem, Embedding, FinStructure, Signature, Tuple};

/// A hereditary class: every structure over `sig` into which no forbidden
/// structure embeds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassSpec {
    sig: Arc<Signature>,
    forbidden: Vec<FinStructure>,
    label: String,
}

/// Bounded three-valued knowledge: a checkable certificate, or exhaustive
/// failure for every candidate within the bound and nothing beyond.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict<W> {
    Witnessed(W),
    NoneUpTo { bound: usize },
}

impl<W> Verdict<W> {
    pub fn witness(&self) -> Option<&W> {
        match self {
            Verdict::Witnessed(w) => Some(w),
            Verdict::NoneUpTo { .. } => None,
        }
    }

    pub fn into_witness(self) -> Option<W> {
        match self {
            Verdict::Witnessed(w) => Some(w),
            Verdict::NoneUpTo { .. } => None,
        }
    }

    pub fn is_witnessed(&self) -> bool {
        matches!(self, Verdict::Witnessed(_))
    }

    pub fn none_up_to(&self) -> Option<usize> {
        match self {
            Verdict::NoneUpTo { bound } => Some(*bound),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JepWitness {
    pub joint: FinStructure,
    pub from_a: Embedding,
    pub from_b: Embedding,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Amalgam {
    pub amalgam: FinStructure,
    pub g1: Embedding,
    pub g2: Embedding,
}

/// The `B` and `e: A → B` of weak amalgamation for a given `A`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WapWitness {
    pub source: FinStructure,
    pub pivot: FinStructure,
    pub e: Embedding,
    pub certified_extension_bound: usize,
}

impl WapWitness {
    pub fn is_trivial(&self) -> bool {
        self.source == self.pivot && self.e == Embedding::identity(self.source.universe())
    }
}

/// An amalgamation problem: `e: A → B`, `h1: B → B1`, `h2: B → B2`.
#[derive(Clone, Debug)]
pub struct ApInstance<'a> {
    pub a: &'a FinStructure,
    pub pivot: &'a FinStructure,
    pub e: &'a Embedding,
    pub b1: &'a FinStructure,
    pub h1: &'a Embedding,
    pub b2: &'a FinStructure,
    pub h2: &'a Embedding,
}

impl ClassSpec {
    pub fn new(sig: Arc<Signature>, forbidden: Vec<FinStructure>, label: &str) -> Result<Self> {
        for f in &forbidden {
            if f.sig() != sig.as_ref() {
                return Err(Error::SignatureMismatch(format!(
                    "forbidden structure {f:?}"
                )));
            }
            if f.is_empty() {
                return Err(Error::Invalid(
                    "forbidden structures must be nonempty".into(),
                ));
            }
            f.validate()?;
        }
        Ok(ClassSpec {
            sig,
            forbidden,
            label: label.to_string(),
        })
    }

    pub fn sig(&self) -> &Arc<Signature> {
        &self.sig
    }

    pub fn forbidden(&self) -> &[FinStructure] {
        &self.forbidden
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn empty_structure(&self) -> FinStructure {
        FinStructure::empty(self.sig.clone())
    }

    fn check_sig(&self, a: &FinStructure) -> Result<()> {
        if a.sig() == self.sig.as_ref() {
            Ok(())
        } else {
            Err(Error::SignatureMismatch(format!(
                "{:?} is not over the class signature",
                a
            )))
        }
    }

    pub fn membership(&self, a: &FinStructure) -> Result<bool> {
        self.check_sig(a)?;
        Ok(self.is_member(a))
    }

    pub(crate) fn is_member(&self, a: &FinStructure) -> bool {
        self.forbidden.iter().all(|f| {
            f.len() > a.len() || !EmbeddingSearch::new(f, a).expect("same signature").exists()
        })
    }

    fn require_member(&self, a: &FinStructure, what: &str) -> Result<()> {
        if self.membership(a)? {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "{what} {a:?} is not a member of `{}`",
                self.label
            )))
        }
    }

    /// Canonical representatives of every isomorphism type of size `<= n`,
    /// sorted by size and canonical code.
    pub fn enumerate_types(&self, n: usize) -> Vec<FinStructure> {
        let mut out = Vec::new();
        let mut layer = vec![self.empty_structure()];
        if self.is_member(&layer[0]) {
            out.push(layer[0].clone());
        } else {
            return out;
        }
        for _ in 1..=n {
            layer = self.next_type_layer(&layer);
            if layer.is_empty() {
                break;
            }
            out.extend(layer.iter().cloned());
        }
        out
    }

    /// Pairs `(member, part)` where `member` is a type of at most `max_size`
    /// elements and `part` an induced substructure of it outside the class.
    pub fn hereditarity_violations(&self, max_size: usize) -> Vec<(FinStructure, FinStructure)> {
        let mut out = Vec::new();
        for t in self.enumerate_types(max_size) {
            let elems = t.universe();
            for mask in 0u64..(1u64 << elems.len()) {
                let part: Vec<Elem> = (0..elems.len())
                    .filter(|i| mask >> i & 1 == 1)
                    .map(|i| elems[i])
                    .collect();
                let sub = t.induced(&part).expect("subset of the universe");
                if !self.is_member(&sub) {
                    out.push((t.clone(), sub));
                }
            }
        }
        out
    }

    /// Canonical representatives of the types one element larger than the
    /// types in `layer`, which must be every type of one size.
    pub fn next_type_layer(&self, layer: &[FinStructure]) -> Vec<FinStructure> {
        let mut next: BTreeMap<CanonCode, FinStructure> = BTreeMap::new();
        for t in layer {
            for ext in self.one_point_extensions(t, t.len()) {
                let c = canonical_form(&ext);
                next.entry(c.code.clone())
                    .or_insert_with(|| c.representative(&ext));
            }
        }
        next.into_values().collect()
    }

    /// Member structures obtained from `b` by adding the element `fresh`
    /// with every admissible choice of tuples involving it.
    ///
    /// Tuples are decided per old element in universe order, together with
    /// the tuples on `fresh` alone first; after each level every forbidden
    /// pattern through that element and `fresh` is ruled out.
    pub fn one_point_extensions(&self, b: &FinStructure, fresh: Elem) -> Vec<FinStructure> {
        if b.contains(fresh) || !self.is_member(b) {
            return Vec::new();
        }
        let pos: BTreeMap<Elem, usize> = b
            .universe()
            .iter()
            .enumerate()
            .map(|(i, &x)| (x, i + 1))
            .collect();
        let mut elems: Vec<Elem> = b.universe().to_vec();
        elems.push(fresh);
        let mut levels: Vec<Vec<(usize, Vec<Tuple>)>> = vec![Vec::new(); b.len() + 1];
        for r in 0..self.sig.len() {
            for g in self.sig.fresh_groups(r, fresh, &elems) {
                let level = g
                    .iter()
                    .flatten()
                    .filter_map(|x| pos.get(x))
                    .max()
                    .copied()
                    .unwrap_or(0);
                levels[level].push((r, g));
            }
        }
        assert!(
            levels.iter().all(|l| l.len() < 24),
            "too many tuple choices for a single new element"
        );
        let mut work = b.extended([fresh], []).expect("fresh element is new");
        let mut out = Vec::new();
        let fresh_set = BTreeSet::from([fresh]);
        let mut pool = vec![fresh];
        self.extend_level(b, &levels, 0, &mut work, &mut pool, &fresh_set, &mut out);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn extend_level(
        &self,
        b: &FinStructure,
        levels: &[Vec<(usize, Vec<Tuple>)>],
        level: usize,
        work: &mut FinStructure,
        pool: &mut Vec<Elem>,
        fresh: &BTreeSet<Elem>,
        out: &mut Vec<FinStructure>,
    ) {
        if level == levels.len() {
            out.push(work.clone());
            return;
        }
        let must = level.checked_sub(1).map(|i| b.universe()[i]);
        if let Some(m) = must {
            pool.push(m);
        }
        let groups = &levels[level];
        for mask in 0u32..(1 << groups.len()) {
            let chosen = || {
                groups
                    .iter()
                    .enumerate()
                    .filter(move |(i, _)| mask >> i & 1 == 1)
                    .map(|(_, g)| g)
            };
            for (r, g) in chosen() {
                for t in g {
                    work.insert_tuple(*r, t.clone());
                }
            }
            if !self
                .forbidden
                .iter()
                .any(|f| hits_fresh(f, work, pool, must, fresh))
            {
                self.extend_level(b, levels, level + 1, work, pool, fresh, out);
            }
            for (r, g) in chosen() {
                for t in g {
                    work.remove_tuple(*r, t);
                }
            }
        }
        if must.is_some() {
            pool.pop();
        }
    }

    /// Member structures containing `b` literally, with between 1 and
    /// `max_size - |b|` new elements labelled after the largest element of
    /// `b`.
    pub fn extensions(&self, b: &FinStructure, max_size: usize) -> Vec<FinStructure> {
        let mut out = Vec::new();
        let mut layer = vec![b.clone()];
        let start = b.max_elem().map_or(0, |m| m + 1);
        let mut fresh = start;
        while b.len() + (fresh - start) < max_size {
            let mut next = Vec::new();
            for d in &layer {
                next.extend(self.one_point_extensions(d, fresh));
            }
            out.extend(next.iter().cloned());
            layer = next;
            fresh += 1;
        }
        out
    }

    pub fn solve_jep(
        &self,
        a: &FinStructure,
        b: &FinStructure,
        bound: usize,
    ) -> Result<Verdict<JepWitness>> {
        self.require_member(a, "A")?;
        self.require_member(b, "B")?;
        let found = self.glue_any(a, b, &BTreeMap::new(), bound, None, |g| {
            Some(JepWitness {
                joint: g.result.clone(),
                from_a: Embedding::identity(a.universe()),
                from_b: Embedding::new(g.ext_map.clone()),
            })
        });
        Ok(match found {
            Some(w) => Verdict::Witnessed(w),
            None => Verdict::NoneUpTo { bound },
        })
    }

    pub fn solve_ap(&self, inst: &ApInstance<'_>, bound: usize) -> Result<Verdict<Amalgam>> {
        for s in [inst.a, inst.pivot, inst.b1, inst.b2] {
            self.require_member(s, "structure")?;
        }
        inst.e.validate(inst.a, inst.pivot)?;
        inst.h1.validate(inst.pivot, inst.b1)?;
        inst.h2.validate(inst.pivot, inst.b2)?;
        let mut forced = BTreeMap::new();
        for &x in inst.a.universe() {
            let y = inst.e.map[&x];
            forced.insert(inst.h2.map[&y], inst.h1.map[&y]);
        }
        let found = self.glue_any(inst.b1, inst.b2, &forced, bound, None, |g| {
            Some(Amalgam {
                amalgam: g.result.clone(),
                g1: Embedding::identity(inst.b1.universe()),
                g2: Embedding::new(g.ext_map.clone()),
            })
        });
        Ok(match found {
            Some(w) => Verdict::Witnessed(w),
            None => Verdict::NoneUpTo { bound },
        })
    }

    /// Plain amalgamation over `b` (the `A = B`, `e = id` case).
    pub fn solve_plain_ap(
        &self,
        b: &FinStructure,
        b1: &FinStructure,
        h1: &Embedding,
        b2: &FinStructure,
        h2: &Embedding,
        bound: usize,
    ) -> Result<Verdict<Amalgam>> {
        let id = Embedding::identity(b.universe());
        self.solve_ap(
            &ApInstance {
                a: b,
                pivot: b,
                e: &id,
                b1,
                h1,
                b2,
                h2,
            },
            bound,
        )
    }

    /// Tries every identification extending `forced`, fewest extra
    /// identifications first, and returns the first successful gluing.
    /// With `psi`, the gluing also unites the two partial maps.
    pub(crate) fn glue_any<W>(
        &self,
        base: &FinStructure,
        ext: &FinStructure,
        forced: &BTreeMap<Elem, Elem>,
        bound: usize,
        psi: Option<(&BTreeMap<Elem, Elem>, &BTreeMap<Elem, Elem>)>,
        mut accept: impl FnMut(&crate::glue::Glued) -> Option<W>,
    ) -> Option<W> {
        let ext_free: Vec<Elem> = ext
            .universe()
            .iter()
            .copied()
            .filter(|x| !forced.contains_key(x))
            .collect();
        let used: BTreeSet<Elem> = forced.values().copied().collect();
        let base_free: Vec<Elem> = base
            .universe()
            .iter()
            .copied()
            .filter(|x| !used.contains(x))
            .collect();
        let max_extra = ext_free.len().min(base_free.len());
        for extra in 0..=max_extra {
            if base.len() + ext_free.len() - extra > bound {
                continue;
            }
            let mut result = None;
            for_each_matching(&ext_free, &base_free, extra, &mut |pairs| {
                let mut ident = forced.clone();
                ident.extend(pairs.iter().copied());
                let mut problem = GlueProblem::new(base, ext, &self.forbidden)
                    .ident(ident)
                    .max_size(bound);
                if let Some((b, e)) = psi {
                    problem = problem.systems(b, e);
                }
                if let GlueOutcome::Found(g) = problem.solve() {
                    if let Some(w) = accept(&g) {
                        result = Some(w);
                        return true;
                    }
                }
                false
            });
            if result.is_some() {
                return result;
            }
        }
        None
    }

    /// Searches for a weak amalgamation witness for `a`. Candidates are
    /// tried as `B = A`, `e = id` first, then by size of `B`, canonical code
    /// and lexicographic `e`.
    pub fn find_wap_witness(
        &self,
        a: &FinStructure,
        witness_bound: usize,
        extension_bound: usize,
        amalgam_bound: usize,
    ) -> Result<Verdict<WapWitness>> {
        self.require_member(a, "A")?;
        let mut candidates: Vec<(FinStructure, Embedding)> = Vec::new();
        if a.len() <= witness_bound {
            candidates.push((a.clone(), Embedding::identity(a.universe())));
        }
        for t in self.enumerate_types(witness_bound) {
            if t.len() <= a.len() {
                continue;
            }
            for e in EmbeddingSearch::new(a, &t)?.all() {
                candidates.push((t.clone(), e));
            }
        }
        for (pivot, e) in candidates {
            if self
                .certifies(a, &pivot, &e, extension_bound, amalgam_bound)?
                .is_none()
            {
                return Ok(Verdict::Witnessed(WapWitness {
                    source: a.clone(),
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

    /// Checks a candidate witness against every pair of extensions of the
    /// pivot within `extension_bound`; returns the first failing pair.
    pub fn certifies(
        &self,
        a: &FinStructure,
        pivot: &FinStructure,
        e: &Embedding,
        extension_bound: usize,
        amalgam_bound: usize,
    ) -> Result<Option<(FinStructure, FinStructure)>> {
        let mut exts = vec![pivot.clone()];
        exts.extend(self.extensions(pivot, extension_bound));
        let incl = Embedding::identity(pivot.universe());
        for i in 0..exts.len() {
            for j in i..exts.len() {
                let inst = ApInstance {
                    a,
                    pivot,
                    e,
                    b1: &exts[i],
                    h1: &incl,
                    b2: &exts[j],
                    h2: &incl,
                };
                if !self.solve_ap(&inst, amalgam_bound)?.is_witnessed() {
                    return Ok(Some((exts[i].clone(), exts[j].clone())));
                }
            }
        }
        Ok(None)
    }

    /// Re-checks a JEP certificate.
    pub fn check_jep(&self, a: &FinStructure, b: &FinStructure, w: &JepWitness) -> bool {
        self.is_member(&w.joint) && w.from_a.is_valid(a, &w.joint) && w.from_b.is_valid(b, &w.joint)
    }

    /// Re-checks an amalgam certificate against its instance.
    pub fn check_amalgam(&self, inst: &ApInstance<'_>, w: &Amalgam) -> bool {
        if !(self.is_member(&w.amalgam)
            && w.g1.is_valid(inst.b1, &w.amalgam)
            && w.g2.is_valid(inst.b2, &w.amalgam))
        {
            return false;
        }
        let left = inst.e.then(inst.h1).and_then(|m| m.then(&w.g1));
        let right = inst.e.then(inst.h2).and_then(|m| m.then(&w.g2));
        left.is_some() && left == right
    }

    pub fn check_wap_witness(&self, w: &WapWitness) -> bool {
        self.is_member(&w.source) && self.is_member(&w.pivot) && w.e.is_valid(&w.source, &w.pivot)
    }
}

/// Calls `f` with every injective matching of exactly `k` pairs from
/// `left × right`, in lexicographic order; stops when `f` returns true.
pub(crate) fn for_each_matching(
    left: &[Elem],
    right: &[Elem],
    k: usize,
    f: &mut dyn FnMut(&[(Elem, Elem)]) -> bool,
) -> bool {
    fn rec(
        left: &[Elem],
        right: &[Elem],
        k: usize,
        from: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<(Elem, Elem)>,
        f: &mut dyn FnMut(&[(Elem, Elem)]) -> bool,
    ) -> bool {
        if cur.len() == k {
            return f(cur);
        }
        for i in from..left.len() {
            if left.len() - i < k - cur.len() {
                break;
            }
            for (j, &r) in right.iter().enumerate() {
                if used[j] {
                    continue;
                }
                used[j] = true;
                cur.push((left[i], r));
                let stop = rec(left, right, k, i + 1, used, cur, f);
                cur.pop();
                used[j] = false;
                if stop {
                    return true;
                }
            }
        }
        false
    }
    rec(
        left,
        right,
        k,
        0,
        &mut vec![false; right.len()],
        &mut Vec::new(),
        f,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    #[test]
    fn triangle_free_membership() {
        let tf = bundled::triangle_free();
        let k3 = FinStructure::graph(0..3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let c5 = FinStructure::graph(0..5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0)]).unwrap();
        assert!(!tf.membership(&k3).unwrap());
        assert!(tf.membership(&c5).unwrap());
    }

    #[test]
    fn chain_is_a_linear_order() {
        let lo = bundled::linear_orders();
        assert!(lo.membership(&bundled::chain(3)).unwrap());
        let sig = lo.sig().clone();
        let cyc = FinStructure::new(
            sig,
            0..3,
            [(0, vec![0, 1]), (0, vec![1, 2]), (0, vec![2, 0])],
        )
        .unwrap();
        assert!(!lo.membership(&cyc).unwrap());
    }

    #[test]
    fn membership_rejects_foreign_signature() {
        let k2 = FinStructure::graph(0..2, &[(0, 1)]).unwrap();
        assert!(matches!(
            bundled::linear_orders().membership(&k2),
            Err(Error::SignatureMismatch(_))
        ));
    }

    #[test]
    fn graph_type_counts() {
        let g = bundled::graphs();
        assert_eq!(g.enumerate_types(3).len(), 8);
        assert_eq!(g.enumerate_types(4).len(), 19);
    }

    #[test]
    fn linear_orders_have_one_type_per_size() {
        assert_eq!(bundled::linear_orders().enumerate_types(5).len(), 6);
    }

    #[test]
    fn graph_jep_disjoint_union() {
        let g = bundled::graphs();
        let k2 = FinStructure::graph(0..2, &[(0, 1)]).unwrap();
        let v = g.solve_jep(&k2, &k2, 4).unwrap();
        let w = v.witness().unwrap();
        assert_eq!(w.joint.len(), 4);
        assert!(g.check_jep(&k2, &k2, w));
    }

    #[test]
    fn split_class_fails_jep() {
        let s = bundled::split();
        let (p, q) = (bundled::split_point(true), bundled::split_point(false));
        assert_eq!(
            s.solve_jep(&p, &q, 5).unwrap(),
            Verdict::NoneUpTo { bound: 5 }
        );
    }

    #[test]
    fn linear_order_jep_at_three() {
        let lo = bundled::linear_orders();
        let v = lo
            .solve_jep(&bundled::chain(2), &bundled::chain(1), 3)
            .unwrap();
        let w = v.witness().unwrap();
        assert_eq!(w.joint.len(), 3);
        assert!(lo.membership(&w.joint).unwrap());
    }

    #[test]
    fn jep_rejects_non_members() {
        let tf = bundled::triangle_free();
        let k3 = FinStructure::graph(0..3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert!(matches!(
            tf.solve_jep(&k3, &k3, 6),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn order_amalgam_places_both_sides() {
        let lo = bundled::linear_orders();
        let sig = lo.sig().clone();
        // b = 0; B1: 0 < 1; B2: 2 < 0
        let b = FinStructure::new(sig.clone(), [0], []).unwrap();
        let b1 = FinStructure::new(sig.clone(), [0, 1], [(0, vec![0, 1])]).unwrap();
        let b2 = FinStructure::new(sig, [0, 2], [(0, vec![2, 0])]).unwrap();
        let id = Embedding::identity(&[0]);
        let v = lo.solve_plain_ap(&b, &b1, &id, &b2, &id, 3).unwrap();
        let w = v.witness().unwrap();
        assert_eq!(w.amalgam.len(), 3);
        let y = w.g2.apply(2).unwrap();
        assert!(
            w.amalgam.holds(0, &[y, 0])
                && w.amalgam.holds(0, &[0, 1])
                && w.amalgam.holds(0, &[y, 1])
        );
    }

    #[test]
    fn linear_forest_amalgam_fails() {
        let lf = bundled::linear_forests();
        let (b, b1, b2) = bundled::linear_forest_ap_instance();
        let id = Embedding::identity(b.universe());
        let v = lf.solve_plain_ap(&b, &b1, &id, &b2, &id, 6).unwrap();
        assert_eq!(v, Verdict::NoneUpTo { bound: 6 });
    }

    #[test]
    fn wap_witnesses_are_trivial_for_fraisse_classes() {
        let k2 = FinStructure::graph(0..2, &[(0, 1)]).unwrap();
        let w = bundled::graphs()
            .find_wap_witness(&k2, 2, 4, 8)
            .unwrap()
            .into_witness()
            .unwrap();
        assert!(w.is_trivial());
        assert_eq!(w.certified_extension_bound, 4);
        let w = bundled::linear_orders()
            .find_wap_witness(&bundled::chain(2), 2, 4, 8)
            .unwrap();
        assert!(w.witness().unwrap().is_trivial());
        let w = bundled::split()
            .find_wap_witness(&bundled::split_point(true), 3, 4, 8)
            .unwrap();
        assert!(w.witness().unwrap().is_trivial());
    }

    #[test]
    fn matchings_count() {
        let mut n = 0;
        for_each_matching(&[0, 1], &[5, 6, 7], 2, &mut |_| {
            n += 1;
            false
        });
        assert_eq!(n, 6);
    }
}
