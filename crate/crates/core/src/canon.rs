//! Canonical forms by minimum encoding over invariant-respecting orderings.
//!
//! Elements are first split into cells by an isomorphism-invariant profile
//! (occurrence counts per relation and position). Only orderings that list
//! the cells in profile order are considered, interchangeable twins are tried
//! once, and the adjacency bit string is minimized with prefix pruning. The
//! bit string for position `p` covers every tuple whose largest position is
//! `p`, so prefixes are final as soon as they are written.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::Result;
use crate::structure::{tuples_through, Elem, FinStructure};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonCode(pub Vec<u8>);

#[derive(Clone, Debug)]
pub struct Canonical {
    pub code: CanonCode,
    /// Element of the input ↦ position in the canonical representative.
    pub relabeling: BTreeMap<Elem, Elem>,
}

impl Canonical {
    /// The canonical representative on `{0..n}`.
    pub fn representative(&self, a: &FinStructure) -> FinStructure {
        a.relabel(&self.relabeling)
            .expect("canonical relabeling is a bijection")
    }
}

/// Occurrence counts per relation and position, plus all-equal tuples,
/// for every element.
fn profiles(a: &FinStructure) -> BTreeMap<Elem, Vec<usize>> {
    let width: usize = a.sig().relations().iter().map(|r| r.arity + 1).sum();
    let mut out: BTreeMap<Elem, Vec<usize>> =
        a.universe().iter().map(|&x| (x, vec![0; width])).collect();
    let mut offset = 0;
    for (r, sym) in a.sig().relations().iter().enumerate() {
        for t in a.tuples(r) {
            for (i, y) in t.iter().enumerate() {
                out.get_mut(y).expect("tuple elements are in the universe")[offset + i] += 1;
            }
            if t.iter().all(|y| *y == t[0]) {
                out.get_mut(&t[0])
                    .expect("tuple elements are in the universe")[offset + sym.arity] += 1;
            }
        }
        offset += sym.arity + 1;
    }
    out
}

fn are_twins(a: &FinStructure, x: Elem, y: Elem) -> bool {
    let swap = |z: Elem| {
        if z == x {
            y
        } else if z == y {
            x
        } else {
            z
        }
    };
    (0..a.sig().len()).all(|r| {
        a.tuples(r).iter().all(|t| {
            let s: Vec<Elem> = t.iter().map(|&z| swap(z)).collect();
            a.holds(r, &s)
        })
    })
}

struct Search<'a> {
    a: &'a FinStructure,
    cell_of_pos: Vec<usize>,
    cells: Vec<Vec<Elem>>,
    twin_rep: BTreeMap<Elem, Elem>,
    best: Option<(Vec<bool>, Vec<Elem>)>,
    cur_bits: Vec<bool>,
    order: Vec<Elem>,
    used: BTreeSet<Elem>,
}

impl<'a> Search<'a> {
    fn bits_for(&self, p: usize) -> Vec<bool> {
        let mut out = Vec::new();
        let mut buf = Vec::new();
        for (r, sym) in self.a.sig().relations().iter().enumerate() {
            for t in tuples_through(sym.arity, p) {
                buf.clear();
                buf.extend(t.iter().map(|&i| self.order[i]));
                out.push(self.a.holds(r, &buf));
            }
        }
        out
    }

    fn rec(&mut self, p: usize) {
        let n = self.a.len();
        if p == n {
            if self
                .best
                .as_ref()
                .is_none_or(|(best, _)| self.cur_bits < *best)
            {
                self.best = Some((self.cur_bits.clone(), self.order.clone()));
            }
            return;
        }
        let cell = self.cells[self.cell_of_pos[p]].clone();
        let mut tried_twin_classes = BTreeSet::new();
        for x in cell {
            if self.used.contains(&x) || !tried_twin_classes.insert(self.twin_rep[&x]) {
                continue;
            }
            self.order.push(x);
            self.used.insert(x);
            let bits = self.bits_for(p);
            let start = self.cur_bits.len();
            self.cur_bits.extend(bits);
            let worse = self
                .best
                .as_ref()
                .is_some_and(|(best, _)| self.cur_bits[..] > best[..self.cur_bits.len()]);
            if !worse {
                self.rec(p + 1);
            }
            self.cur_bits.truncate(start);
            self.used.remove(&x);
            self.order.pop();
        }
    }
}

pub fn canonical_form(a: &FinStructure) -> Canonical {
    let n = a.len();
    let mut by_profile: BTreeMap<Vec<usize>, Vec<Elem>> = BTreeMap::new();
    for (x, p) in profiles(a) {
        by_profile.entry(p).or_default().push(x);
    }
    let cells: Vec<Vec<Elem>> = by_profile.into_values().collect();
    let mut cell_of_pos = Vec::with_capacity(n);
    for (i, c) in cells.iter().enumerate() {
        cell_of_pos.extend(std::iter::repeat_n(i, c.len()));
    }
    let mut twin_rep = BTreeMap::new();
    for c in &cells {
        for (i, &x) in c.iter().enumerate() {
            let rep = c[..i]
                .iter()
                .copied()
                .find(|&y| twin_rep[&y] == y && are_twins(a, x, y));
            twin_rep.insert(x, rep.unwrap_or(x));
        }
    }
    let mut s = Search {
        a,
        cell_of_pos,
        cells,
        twin_rep,
        best: None,
        cur_bits: Vec::new(),
        order: Vec::new(),
        used: BTreeSet::new(),
    };
    s.rec(0);
    let (bits, order) = s.best.expect("at least one ordering exists");
    let mut code = Vec::with_capacity(4 + bits.len() / 8 + 1);
    code.extend_from_slice(&(n as u32).to_be_bytes());
    for chunk in bits.chunks(8) {
        let mut byte = 0u8;
        for (i, &b) in chunk.iter().enumerate() {
            if b {
                byte |= 0x80 >> i;
            }
        }
        code.push(byte);
    }
    let relabeling = order.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    Canonical {
        code: CanonCode(code),
        relabeling,
    }
}

pub fn canonical_code(a: &FinStructure) -> CanonCode {
    canonical_form(a).code
}

pub fn are_isomorphic(a: &FinStructure, b: &FinStructure) -> Result<bool> {
    a.same_sig(b)?;
    Ok(a.len() == b.len()
        && a.tuple_count() == b.tuple_count()
        && canonical_code(a) == canonical_code(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{RelSymbol, Signature};
    use std::sync::Arc;

    #[test]
    fn relabeled_paths_share_a_code() {
        let p = FinStructure::graph([0, 1, 2], &[(0, 1), (1, 2)]).unwrap();
        let q = FinStructure::graph([5, 9, 7], &[(5, 9), (9, 7)]).unwrap();
        assert_eq!(canonical_code(&p), canonical_code(&q));
        assert!(are_isomorphic(&p, &q).unwrap());
    }

    #[test]
    fn triangle_and_path_differ() {
        let p = FinStructure::graph(0..3, &[(0, 1), (1, 2)]).unwrap();
        let k3 = FinStructure::graph(0..3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_ne!(canonical_code(&p), canonical_code(&k3));
        assert!(!are_isomorphic(&p, &k3).unwrap());
    }

    #[test]
    fn representative_is_isomorphic_copy() {
        let p = FinStructure::graph([3, 8, 4, 1], &[(3, 8), (8, 4), (1, 3)]).unwrap();
        let c = canonical_form(&p);
        let rep = c.representative(&p);
        assert_eq!(rep.universe(), &[0, 1, 2, 3]);
        assert_eq!(canonical_code(&rep), c.code);
    }

    #[test]
    fn directed_structures_distinguish_orientation() {
        let sig = Arc::new(Signature::new(vec![RelSymbol::plain("R", 2)]).unwrap());
        let a = FinStructure::new(sig.clone(), 0..3, [(0, vec![0, 1]), (0, vec![1, 2])]).unwrap();
        let b = FinStructure::new(sig.clone(), 0..3, [(0, vec![0, 1]), (0, vec![2, 1])]).unwrap();
        let c = FinStructure::new(sig, 0..3, [(0, vec![2, 0]), (0, vec![1, 2])]).unwrap();
        assert_ne!(canonical_code(&a), canonical_code(&b));
        assert_eq!(canonical_code(&a), canonical_code(&c));
    }
}
