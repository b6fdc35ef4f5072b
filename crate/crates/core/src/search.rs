//! Backtracking enumeration of embeddings with forward checking.
//!
//! Source elements are assigned in a fixed order: pinned elements first,
//! then repeatedly the element with the most tuples into those already
//! ordered. Every unassigned element keeps a domain of target candidates. A
//! present binary tuple back to an assigned element narrows the domain to
//! that element's successors; small domains are also filtered through every
//! other tuple between the two. A branch is abandoned when a domain empties
//! or the remaining domains together are too small.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::ControlFlow;

use crate::error::Result;
use crate::structure::{tuples_through, Elem, Embedding, FinStructure};

/// A tuple over assignment levels that must be present or absent in the
/// target.
struct Check {
    rel: usize,
    levels: Vec<usize>,
    present: bool,
}

/// Domains at most this large are filtered through every tuple between
/// two elements as soon as one of them is assigned.
const SMALL_DOMAIN: usize = 64;

/// The unpinned elements of `source`, each chosen to maximize the tuples it
/// shares with the elements before it, then its tuple count, then to
/// minimize its label.
fn connectivity_order(source: &FinStructure, pinned: &[Elem]) -> Vec<Elem> {
    let mut placed: BTreeSet<Elem> = pinned.iter().copied().collect();
    let mut degree: HashMap<Elem, usize> = source.universe().iter().map(|&x| (x, 0)).collect();
    let mut links: HashMap<Elem, usize> = degree.clone();
    let mut tuples: Vec<Vec<Elem>> = Vec::new();
    let mut by_elem: HashMap<Elem, Vec<usize>> = HashMap::new();
    for r in 0..source.sig().len() {
        for t in source.tuples(r) {
            let mut d = t.clone();
            d.sort_unstable();
            d.dedup();
            for &x in &d {
                *degree
                    .get_mut(&x)
                    .expect("tuple elements are in the universe") += 1;
                by_elem.entry(x).or_default().push(tuples.len());
            }
            tuples.push(d);
        }
    }
    // Unplaced elements per tuple; a tuple with one left links to it.
    let mut open: Vec<usize> = tuples
        .iter()
        .map(|t| t.iter().filter(|x| !placed.contains(x)).count())
        .collect();
    for (i, t) in tuples.iter().enumerate() {
        if open[i] == 1 {
            let z = t
                .iter()
                .find(|x| !placed.contains(x))
                .expect("one element is open");
            *links
                .get_mut(z)
                .expect("tuple elements are in the universe") += 1;
        }
    }
    let mut rest: Vec<Elem> = source
        .universe()
        .iter()
        .copied()
        .filter(|x| !placed.contains(x))
        .collect();
    let mut out = Vec::with_capacity(rest.len());
    while !rest.is_empty() {
        let (i, _) = rest
            .iter()
            .enumerate()
            .max_by_key(|&(_, x)| (links[x], degree[x], std::cmp::Reverse(*x)))
            .expect("rest is nonempty");
        let x = rest.swap_remove(i);
        placed.insert(x);
        out.push(x);
        for &ti in by_elem.get(&x).map_or(&[][..], |v| v.as_slice()) {
            open[ti] -= 1;
            if open[ti] == 1 {
                let z = tuples[ti]
                    .iter()
                    .find(|y| !placed.contains(y))
                    .expect("one element is open");
                *links
                    .get_mut(z)
                    .expect("tuple elements are in the universe") += 1;
            }
        }
    }
    out
}

pub struct EmbeddingSearch<'a> {
    target: &'a FinStructure,
    order: Vec<Elem>,
    pinned: Vec<Option<Elem>>,
    /// Checks whose largest level is `k`, by `k`.
    checks: Vec<Vec<Check>>,
    /// Checks whose levels are exactly `{k, l}`, by `(k, l)` with `k < l`.
    pair_checks: BTreeMap<(usize, usize), Vec<usize>>,
    candidates: Option<Vec<Elem>>,
    /// Binary degrees of the source elements by level, for searches with
    /// enough unpinned elements to profit from the filter.
    degrees: Option<Vec<Vec<usize>>>,
    source_len: usize,
}

/// Searches with fewer unpinned elements skip the degree filter.
const DEGREE_FILTER_FROM: usize = 4;

/// Out- and in-degree of every element along every binary relation,
/// ignoring loops.
fn binary_degrees(s: &FinStructure) -> HashMap<Elem, Vec<usize>> {
    let binary: Vec<usize> = s
        .sig()
        .relations()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.arity == 2)
        .map(|(i, _)| i)
        .collect();
    let mut out: HashMap<Elem, Vec<usize>> = s
        .universe()
        .iter()
        .map(|&x| (x, vec![0; 2 * binary.len()]))
        .collect();
    for (i, &r) in binary.iter().enumerate() {
        for t in s.tuples(r) {
            if t[0] != t[1] {
                out.get_mut(&t[0])
                    .expect("tuple elements are in the universe")[2 * i] += 1;
                out.get_mut(&t[1])
                    .expect("tuple elements are in the universe")[2 * i + 1] += 1;
            }
        }
    }
    out
}

impl<'a> EmbeddingSearch<'a> {
    pub fn new(source: &'a FinStructure, target: &'a FinStructure) -> Result<Self> {
        Self::pinned(source, target, &BTreeMap::new())
    }

    /// Embeddings that send each key of `pins` to its value.
    pub fn pinned(
        source: &'a FinStructure,
        target: &'a FinStructure,
        pins: &BTreeMap<Elem, Elem>,
    ) -> Result<Self> {
        source.same_sig(target)?;
        let mut order: Vec<Elem> = pins
            .keys()
            .copied()
            .filter(|x| source.contains(*x))
            .collect();
        order.extend(connectivity_order(source, &order));
        let pinned = order.iter().map(|x| pins.get(x).copied()).collect();
        let mut checks = Vec::with_capacity(order.len());
        let mut pair_checks: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for k in 0..order.len() {
            let mut level = Vec::new();
            for (r, sym) in source.sig().relations().iter().enumerate() {
                for t in tuples_through(sym.arity, k) {
                    let src: Vec<Elem> = t.iter().map(|&l| order[l]).collect();
                    let lo = *t.iter().min().expect("arity is positive");
                    if lo < k && t.iter().all(|&l| l == lo || l == k) {
                        pair_checks.entry((lo, k)).or_default().push(level.len());
                    }
                    level.push(Check {
                        rel: r,
                        present: source.holds(r, &src),
                        levels: t,
                    });
                }
            }
            checks.push(level);
        }
        let unpinned = order.len() - pins.keys().filter(|x| source.contains(**x)).count();
        let degrees = (unpinned >= DEGREE_FILTER_FROM).then(|| {
            let d = binary_degrees(source);
            order.iter().map(|x| d[x].clone()).collect()
        });
        Ok(EmbeddingSearch {
            target,
            order,
            pinned,
            checks,
            pair_checks,
            candidates: None,
            degrees,
            source_len: source.len(),
        })
    }

    /// Restricts the images of unpinned elements to `cands` (kept sorted).
    pub fn within(mut self, mut cands: Vec<Elem>) -> Self {
        cands.sort_unstable();
        cands.dedup();
        self.candidates = Some(cands);
        self
    }

    /// The relation of a present binary check `(k, l)` whose target tuples
    /// starting at the image of `k` list the admissible images of `l`.
    fn successor_rel(&self, c: &Check, k: usize) -> Option<usize> {
        let sym = &self.target.sig().relations()[c.rel];
        (c.present
            && c.levels.len() == 2
            && c.levels[0] != c.levels[1]
            && (c.levels[0] == k || sym.symmetric))
            .then_some(c.rel)
    }

    /// Whether `c`, read through `assign`, agrees with the target.
    fn holds_with(&self, c: &Check, assign: &[Elem], buf: &mut Vec<Elem>) -> bool {
        buf.clear();
        buf.extend(c.levels.iter().map(|&l| assign[l]));
        self.target.holds(c.rel, buf) == c.present
    }

    fn initial_domains(&self) -> Vec<Vec<Elem>> {
        let all = self.candidates.as_deref().unwrap_or(self.target.universe());
        let mut buf = Vec::new();
        let target_degrees = self.degrees.as_ref().map(|_| binary_degrees(self.target));
        // Along each binary relation an element has at least as many
        // neighbours and non-neighbours as its preimage.
        let (sn, tn) = (self.source_len, self.target.len());
        let room = |k: usize, y: Elem| match (&self.degrees, &target_degrees) {
            (Some(sd), Some(td)) => td.get(&y).is_some_and(|t| {
                sd[k]
                    .iter()
                    .zip(t)
                    .all(|(&a, &b)| a <= b && sn - a <= tn - b)
            }),
            _ => true,
        };
        (0..self.order.len())
            .map(|k| {
                let base: Vec<Elem> = match self.pinned[k] {
                    Some(y) if self.target.contains(y) => vec![y],
                    Some(_) => Vec::new(),
                    None => all.to_vec(),
                };
                let unary: Vec<&Check> = self.checks[k]
                    .iter()
                    .filter(|c| c.levels.iter().all(|&l| l == k))
                    .collect();
                base.into_iter()
                    .filter(|&y| {
                        room(k, y)
                            && unary.iter().all(|c| {
                                buf.clear();
                                buf.extend(std::iter::repeat_n(y, c.levels.len()));
                                self.target.holds(c.rel, &buf) == c.present
                            })
                    })
                    .collect()
            })
            .collect()
    }

    /// Calls `f` on every embedding, as `(source, target)` pairs in
    /// assignment order, until it breaks.
    pub fn for_each(&self, mut f: impl FnMut(&[(Elem, Elem)]) -> ControlFlow<()>) {
        let n = self.order.len();
        let domains = self.initial_domains();
        if domains.iter().any(|d| d.is_empty()) || !self.enough_room(&domains, 0) {
            return;
        }
        let mut assign: Vec<Elem> = Vec::with_capacity(n);
        let _ = self.rec(0, &mut assign, domains, &mut f);
    }

    /// Whether the domains from level `from` on jointly offer at least as
    /// many distinct elements as there are levels left.
    fn enough_room(&self, domains: &[Vec<Elem>], from: usize) -> bool {
        let need = domains.len() - from;
        if need <= 1 {
            return true;
        }
        if domains[from..].iter().any(|d| d.len() >= need) {
            return true;
        }
        let mut seen = std::collections::HashSet::new();
        for d in &domains[from..] {
            for &y in d {
                seen.insert(y);
                if seen.len() >= need {
                    return true;
                }
            }
        }
        false
    }

    fn rec(
        &self,
        k: usize,
        assign: &mut Vec<Elem>,
        domains: Vec<Vec<Elem>>,
        f: &mut impl FnMut(&[(Elem, Elem)]) -> ControlFlow<()>,
    ) -> ControlFlow<()> {
        let n = self.order.len();
        if k == n {
            let pairs: Vec<(Elem, Elem)> = self
                .order
                .iter()
                .copied()
                .zip(assign.iter().copied())
                .collect();
            return f(&pairs);
        }
        let mut buf = Vec::with_capacity(4);
        for &y in &domains[k] {
            if assign.contains(&y) {
                continue;
            }
            assign.push(y);
            let ok = self.checks[k]
                .iter()
                .all(|c| self.holds_with(c, assign, &mut buf));
            if !ok {
                assign.pop();
                continue;
            }
            let mut next = domains.clone();
            let mut alive = true;
            for l in k + 1..n {
                let Some(cs) = self.pair_checks.get(&(k, l)) else {
                    continue;
                };
                let mut d = std::mem::take(&mut next[l]);
                if let Some(rel) = cs
                    .iter()
                    .map(|&i| &self.checks[l][i])
                    .find_map(|c| self.successor_rel(c, k))
                {
                    d = self
                        .target
                        .tuples(rel)
                        .range(vec![y]..vec![y + 1])
                        .map(|t| t[1])
                        .filter(|z| d.binary_search(z).is_ok())
                        .collect();
                }
                if d.len() <= SMALL_DOMAIN {
                    d.retain(|&z| {
                        z != y
                            && cs.iter().all(|&i| {
                                let c = &self.checks[l][i];
                                buf.clear();
                                buf.extend(c.levels.iter().map(|&m| if m == k { y } else { z }));
                                self.target.holds(c.rel, &buf) == c.present
                            })
                    });
                }
                if d.is_empty() {
                    alive = false;
                    break;
                }
                next[l] = d;
            }
            if alive && self.enough_room(&next, k + 1) {
                let flow = self.rec(k + 1, assign, next, f);
                if flow.is_break() {
                    assign.pop();
                    return flow;
                }
            }
            assign.pop();
        }
        ControlFlow::Continue(())
    }

    pub fn first(&self) -> Option<Embedding> {
        let mut out = None;
        self.for_each(|pairs| {
            out = Some(Embedding::from_pairs(pairs.iter().copied()));
            ControlFlow::Break(())
        });
        out
    }

    pub fn exists(&self) -> bool {
        self.first().is_some()
    }

    /// Every embedding, in lexicographic order of the map.
    pub fn all(&self) -> Vec<Embedding> {
        let mut out = Vec::new();
        self.for_each(|pairs| {
            out.push(Embedding::from_pairs(pairs.iter().copied()));
            ControlFlow::Continue(())
        });
        out.sort();
        out
    }

    pub fn count(&self) -> usize {
        let mut n = 0;
        self.for_each(|_| {
            n += 1;
            ControlFlow::Continue(())
        });
        n
    }
}

/// All embeddings of `a` into `b`, in lexicographic order of the map.
pub fn enumerate_embeddings(a: &FinStructure, b: &FinStructure) -> Result<Vec<Embedding>> {
    Ok(EmbeddingSearch::new(a, b)?.all())
}

/// Whether `a` embeds into `b` extending `pins`.
pub fn embeds_over(
    a: &FinStructure,
    b: &FinStructure,
    pins: &BTreeMap<Elem, Elem>,
) -> Result<bool> {
    Ok(EmbeddingSearch::pinned(a, b, pins)?.exists())
}
