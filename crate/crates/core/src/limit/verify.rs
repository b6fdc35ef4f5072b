use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::Chain;
use crate::class::{ClassSpec, Verdict, WapWitness};
use crate::error::{Error, Result};
use crate::search::EmbeddingSearch;
use crate::structure::{tuples_over, Elem, FinStructure, PartialIso};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UniversalityReport {
    pub size_bound: usize,
    pub types_checked: usize,
    /// Types of the class that do not embed into the top.
    pub missing: Vec<FinStructure>,
    /// Induced substructures of the top that are not members.
    pub non_members: Vec<FinStructure>,
}

impl UniversalityReport {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty() && self.non_members.is_empty()
    }
}

/// Checks age(top) = class up to `size_bound` in both directions. A
/// substructure of size at most `size_bound` fails membership exactly when a
/// forbidden structure of at most that size embeds into the top.
pub fn verify_universality(chain: &Chain, size_bound: usize) -> Result<UniversalityReport> {
    universality_of(chain.spec(), chain.top(), size_bound)
}

/// The universality check for any structure standing in for a top.
pub fn universality_of(
    spec: &ClassSpec,
    top: &FinStructure,
    size_bound: usize,
) -> Result<UniversalityReport> {
    top.same_sig(&spec.empty_structure())?;
    let mut non_members = Vec::new();
    for f in spec.forbidden() {
        if f.len() <= size_bound {
            if let Some(g) = EmbeddingSearch::new(f, top)?.first() {
                non_members.push(top.induced(&g.image().into_iter().collect::<Vec<_>>())?);
            }
        }
    }
    let types = spec.enumerate_types(size_bound);
    let mut missing = Vec::new();
    for t in &types {
        if !EmbeddingSearch::new(t, top)?.exists() {
            missing.push(t.clone());
        }
    }
    Ok(UniversalityReport {
        size_bound,
        types_checked: types.len(),
        missing,
        non_members,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StarWitness {
    pub a: FinStructure,
    pub b: FinStructure,
    pub certified_bound: usize,
}

/// Searches chain substructures `B ⊇ A` with `|B| < extension_bound`,
/// smallest first, such that every member `D ⊇ B` with `|D| <=
/// extension_bound` embeds into the top fixing `A` pointwise.
pub fn verify_weak_saturation(
    chain: &Chain,
    a_loc: &[Elem],
    extension_bound: usize,
) -> Result<Verdict<StarWitness>> {
    let top = chain.top();
    let a = top.induced(a_loc)?;
    if !chain.spec().is_member(&a) {
        return Err(Error::Precondition(format!(
            "{a_loc:?} does not induce a member"
        )));
    }
    let cap = a.len().max(extension_bound.saturating_sub(1));
    let pins: BTreeMap<Elem, Elem> = a.universe().iter().map(|&x| (x, x)).collect();
    let others: Vec<Elem> = top
        .universe()
        .iter()
        .copied()
        .filter(|x| !pins.contains_key(x))
        .collect();
    let mut found = None;
    for extra in 0..=cap - a.len() {
        for_each_subset(&others, extra, &mut |t| {
            let mut b_loc: Vec<Elem> = a.universe().to_vec();
            b_loc.extend_from_slice(t);
            let b = top.induced(&b_loc).expect("elements of the top");
            let absorbs = chain
                .spec()
                .extensions(&b, extension_bound)
                .iter()
                .all(|d| {
                    EmbeddingSearch::pinned(d, top, &pins)
                        .expect("same signature")
                        .exists()
                });
            if absorbs {
                found = Some(StarWitness {
                    a: a.clone(),
                    b,
                    certified_bound: extension_bound,
                });
            }
            found.is_some()
        });
        if let Some(w) = found {
            return Ok(Verdict::Witnessed(w));
        }
    }
    Ok(Verdict::NoneUpTo { bound: cap })
}

fn for_each_subset(pool: &[Elem], k: usize, f: &mut dyn FnMut(&[Elem]) -> bool) -> bool {
    fn rec(
        pool: &[Elem],
        k: usize,
        from: usize,
        cur: &mut Vec<Elem>,
        f: &mut dyn FnMut(&[Elem]) -> bool,
    ) -> bool {
        if cur.len() == k {
            return f(cur);
        }
        for i in from..pool.len() {
            if pool.len() - i < k - cur.len() {
                break;
            }
            cur.push(pool[i]);
            if rec(pool, k, i + 1, cur, f) {
                return true;
            }
            cur.pop();
        }
        false
    }
    rec(pool, k, 0, &mut Vec::with_capacity(k), f)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Forth,
    Back,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BnfFailure {
    /// The goal on which the search got stuck deepest.
    pub side: Side,
    pub element: Elem,
    /// The partial map when that goal was first reached.
    pub partial: PartialIso,
    pub nodes: u64,
    pub budget_exhausted: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BnfBudget {
    pub nodes: u64,
    /// Absorbed sets with fewer elements than this must be one-point
    /// saturated on their side: every one-point extension in the class
    /// embeds into the structure fixing the set.
    pub extension_bound: usize,
}

impl Default for BnfBudget {
    fn default() -> Self {
        BnfBudget {
            nodes: 1_000_000,
            extension_bound: 7,
        }
    }
}

/// Extends `start` to a partial isomorphism `left → right` whose domain
/// contains `forth` and whose range contains `back`, taking the goals
/// alternately and backtracking over candidates in increasing order.
/// With `class`, every domain and range reached below the extension bound
/// must be one-point saturated. `allowed(map, x, y)` may reject a pair
/// beyond these checks.
#[allow(clippy::too_many_arguments)]
pub fn extend_partial_iso(
    left: &FinStructure,
    right: &FinStructure,
    start: &PartialIso,
    forth: &[Elem],
    back: &[Elem],
    class: Option<&ClassSpec>,
    budget: &BnfBudget,
    allowed: &dyn Fn(&BTreeMap<Elem, Elem>, Elem, Elem) -> bool,
) -> Result<std::result::Result<PartialIso, BnfFailure>> {
    left.same_sig(right)?;
    if !start.is_valid(left, right) {
        return Err(Error::Precondition(
            "the starting map is not a partial isomorphism".into(),
        ));
    }
    for (x, side) in forth
        .iter()
        .map(|x| (x, left))
        .chain(back.iter().map(|x| (x, right)))
    {
        if !side.contains(*x) {
            return Err(Error::Domain(format!(
                "element {x} is not in the structure"
            )));
        }
    }
    let mut goals = Vec::new();
    for i in 0..forth.len().max(back.len()) {
        if let Some(&x) = forth.get(i) {
            goals.push((Side::Forth, x));
        }
        if let Some(&y) = back.get(i) {
            goals.push((Side::Back, y));
        }
    }
    let mut s = Bnf {
        left,
        right,
        allowed,
        goals,
        map: start.pairs.clone(),
        inv: start.pairs.iter().map(|(&x, &y)| (y, x)).collect(),
        nodes: 0,
        budget: budget.nodes,
        deepest: None,
        class,
        star_cap: budget.extension_bound.saturating_sub(1),
        saturated: [HashMap::new(), HashMap::new()],
    };
    if s.rec(0) {
        return Ok(Ok(PartialIso::new(s.map)));
    }
    let (side, element, partial) = s
        .deepest
        .expect("an unmet goal exists when the search fails");
    Ok(Err(BnfFailure {
        side,
        element,
        partial,
        nodes: s.nodes,
        budget_exhausted: s.nodes >= s.budget,
    }))
}

struct Bnf<'a> {
    left: &'a FinStructure,
    right: &'a FinStructure,
    allowed: &'a dyn Fn(&BTreeMap<Elem, Elem>, Elem, Elem) -> bool,
    goals: Vec<(Side, Elem)>,
    map: BTreeMap<Elem, Elem>,
    inv: BTreeMap<Elem, Elem>,
    nodes: u64,
    budget: u64,
    deepest: Option<(Side, Elem, PartialIso)>,
    class: Option<&'a ClassSpec>,
    star_cap: usize,
    saturated: [HashMap<Vec<Elem>, bool>; 2],
}

/// Whether every one-point extension of `s[set]` embeds into `s` over `set`.
pub(crate) fn one_point_saturated(class: &ClassSpec, s: &FinStructure, set: &[Elem]) -> bool {
    let sub = s.induced(set).expect("elements of the structure");
    let fresh = s.max_elem().map_or(0, |m| m + 1);
    let pins: BTreeMap<Elem, Elem> = set.iter().map(|&x| (x, x)).collect();
    class.one_point_extensions(&sub, fresh).iter().all(|d| {
        EmbeddingSearch::pinned(d, s, &pins)
            .expect("same signature")
            .exists()
    })
}

impl Bnf<'_> {
    fn star_ok(&mut self, x: Elem, y: Elem) -> bool {
        let Some(class) = self.class else { return true };
        if self.map.len() + 1 > self.star_cap {
            return true;
        }
        for (i, (s, keys, z)) in [(self.left, true, x), (self.right, false, y)]
            .into_iter()
            .enumerate()
        {
            let mut set: Vec<Elem> = if keys {
                self.map.keys().copied().collect()
            } else {
                self.inv.keys().copied().collect()
            };
            set.push(z);
            set.sort_unstable();
            let ok = match self.saturated[i].get(&set) {
                Some(&ok) => ok,
                None => {
                    let ok = one_point_saturated(class, s, &set);
                    self.saturated[i].insert(set, ok);
                    ok
                }
            };
            if !ok {
                return false;
            }
        }
        true
    }

    /// Whether adding `x ↦ y` keeps the map a partial isomorphism.
    fn fits(&self, x: Elem, y: Elem) -> bool {
        let mut dom: Vec<Elem> = self.map.keys().copied().collect();
        dom.push(x);
        let img = |z: Elem| if z == x { y } else { self.map[&z] };
        let mut buf = Vec::new();
        for (r, sym) in self.left.sig().relations().iter().enumerate() {
            for t in tuples_over(sym.arity, &dom) {
                if !t.contains(&x) {
                    continue;
                }
                buf.clear();
                buf.extend(t.iter().map(|&z| img(z)));
                if self.left.holds(r, &t) != self.right.holds(r, &buf) {
                    return false;
                }
            }
        }
        true
    }

    fn rec(&mut self, g: usize) -> bool {
        let mut g = g;
        while g < self.goals.len() {
            let (side, z) = self.goals[g];
            let done = match side {
                Side::Forth => self.map.contains_key(&z),
                Side::Back => self.inv.contains_key(&z),
            };
            if !done {
                break;
            }
            g += 1;
        }
        if g == self.goals.len() {
            return true;
        }
        let (side, z) = self.goals[g];
        let deeper = match &self.deepest {
            None => true,
            Some((s, e, _)) => self
                .goals
                .iter()
                .position(|&q| q == (*s, *e))
                .is_some_and(|p| g > p),
        };
        if deeper {
            self.deepest = Some((side, z, PartialIso::new(self.map.clone())));
        }
        let cands: Vec<Elem> = match side {
            Side::Forth => self
                .right
                .universe()
                .iter()
                .copied()
                .filter(|y| !self.inv.contains_key(y))
                .collect(),
            Side::Back => self
                .left
                .universe()
                .iter()
                .copied()
                .filter(|x| !self.map.contains_key(x))
                .collect(),
        };
        for c in cands {
            if self.nodes >= self.budget {
                return false;
            }
            self.nodes += 1;
            let (x, y) = match side {
                Side::Forth => (z, c),
                Side::Back => (c, z),
            };
            if !self.fits(x, y) || !(self.allowed)(&self.map, x, y) || !self.star_ok(x, y) {
                continue;
            }
            self.map.insert(x, y);
            self.inv.insert(y, x);
            if self.rec(g + 1) {
                return true;
            }
            self.map.remove(&x);
            self.inv.remove(&y);
        }
        false
    }
}

/// A partial isomorphism between the tops of two chains over the same class
/// covering `{0..=depth}` on both sides.
pub fn back_and_forth(
    m: &Chain,
    n: &Chain,
    depth: usize,
    budget: &BnfBudget,
) -> Result<std::result::Result<PartialIso, BnfFailure>> {
    if m.spec() != n.spec() {
        return Err(Error::Precondition(
            "the chains are over different classes".into(),
        ));
    }
    let need: Vec<Elem> = (0..=depth).collect();
    if m.top().len() <= depth || n.top().len() <= depth {
        return Err(Error::Domain(format!(
            "a chain has fewer than {} elements",
            depth + 1
        )));
    }
    extend_partial_iso(
        m.top(),
        n.top(),
        &PartialIso::default(),
        &need,
        &need,
        Some(m.spec()),
        budget,
        &|_, _, _| true,
    )
}

/// Whether `(a_loc, b_loc)` has the shape `(e(A), B)` of the witness.
fn has_witness_shape(
    top: &FinStructure,
    w: &WapWitness,
    a_loc: &[Elem],
    b_loc: &[Elem],
) -> Result<bool> {
    let b = top.induced(b_loc)?;
    let a_set: BTreeSet<Elem> = a_loc.iter().copied().collect();
    if b.len() != w.pivot.len()
        || a_set.len() != w.source.len()
        || !a_set.iter().all(|x| b.contains(*x))
    {
        return Ok(false);
    }
    let e_img = w.e.image();
    let mut ok = false;
    EmbeddingSearch::new(&w.pivot, &b)?.for_each(|pairs| {
        ok = pairs
            .iter()
            .all(|(p, q)| e_img.contains(p) == a_set.contains(q));
        if ok {
            std::ops::ControlFlow::Break(())
        } else {
            std::ops::ControlFlow::Continue(())
        }
    });
    Ok(ok)
}

/// Extends `iso` restricted to `A1` to a partial automorphism of the top
/// defined forwards and backwards on its first `depth` elements.
pub fn verify_weak_homogeneity(
    chain: &Chain,
    witness: &WapWitness,
    pair1: (&[Elem], &[Elem]),
    pair2: (&[Elem], &[Elem]),
    iso: &PartialIso,
    depth: usize,
    budget: &BnfBudget,
) -> Result<std::result::Result<PartialIso, BnfFailure>> {
    let top = chain.top();
    for (a, b) in [pair1, pair2] {
        if !has_witness_shape(top, witness, a, b)? {
            return Err(Error::Precondition(format!(
                "({a:?}, {b:?}) is not of the witnessed shape"
            )));
        }
    }
    let set = |s: &[Elem]| s.iter().copied().collect::<BTreeSet<Elem>>();
    let maps_pair = iso.domain() == set(pair1.1)
        && iso.range() == set(pair2.1)
        && pair1.0.iter().all(|x| pair2.0.contains(&iso.pairs[x]))
        && iso.is_valid(top, top);
    if !maps_pair {
        return Err(Error::Precondition(
            "the map does not send the first pair onto the second".into(),
        ));
    }
    if top.len() < depth {
        return Err(Error::Domain(format!(
            "the top has fewer than {depth} elements"
        )));
    }
    let start = iso.restrict(&set(pair1.0));
    let need: Vec<Elem> = (0..depth).collect();
    extend_partial_iso(
        top,
        top,
        &start,
        &need,
        &need,
        Some(chain.spec()),
        budget,
        &|_, _, _| true,
    )
}
