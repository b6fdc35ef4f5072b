//! The space of countable structures on the naturals, seen through finite
//! prefixes: the ultrametric `d(M, N) = 2^-k` and the basic open sets `O_B`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::class::ClassSpec;
use crate::error::{Error, Result};
use crate::search::EmbeddingSearch;
use crate::structure::{Elem, FinStructure};

/// A structure on `{0, ..., depth}`, read as the first `depth + 1` elements
/// of a point of the space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointApprox {
    structure: FinStructure,
    depth: usize,
}

impl PointApprox {
    pub fn new(structure: FinStructure) -> Result<Self> {
        let n = structure.len();
        if n == 0
            || structure
                .universe()
                .iter()
                .enumerate()
                .any(|(i, &x)| i != x)
        {
            return Err(Error::Domain(
                "an approximation lives on {0, ..., depth}".into(),
            ));
        }
        Ok(PointApprox {
            structure,
            depth: n - 1,
        })
    }

    /// The first `depth + 1` elements of `s`, which must contain them all.
    pub fn prefix_of(s: &FinStructure, depth: usize) -> Result<Self> {
        let elems: Vec<Elem> = (0..=depth).collect();
        Self::new(s.induced(&elems)?)
    }

    pub fn structure(&self) -> &FinStructure {
        &self.structure
    }

    pub fn depth(&self) -> usize {
        self.depth
    }
}

/// A distance `2^-exponent`, known exactly or only as an upper bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distance {
    Exact { exponent: usize },
    AtMost { exponent: usize },
}

impl Distance {
    pub fn exponent(&self) -> usize {
        match *self {
            Distance::Exact { exponent } | Distance::AtMost { exponent } => exponent,
        }
    }

    pub fn value(&self) -> f64 {
        0.5f64.powi(self.exponent() as i32)
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Distance::Exact { .. })
    }
}

pub fn distance_at_depth(m: &PointApprox, n: &PointApprox) -> Result<Distance> {
    m.structure.same_sig(&n.structure)?;
    let common = m.depth.min(n.depth);
    let mut prefix = BTreeSet::new();
    for k in 0..=common {
        prefix.insert(k);
        if m.structure.induced_unchecked(&prefix) != n.structure.induced_unchecked(&prefix) {
            return Ok(Distance::Exact { exponent: k });
        }
    }
    Ok(Distance::AtMost {
        exponent: common + 1,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Yes,
    No,
    Unknown,
}

pub fn in_basic_open(b: &FinStructure, m: &PointApprox) -> Result<Membership> {
    b.same_sig(&m.structure)?;
    if b.max_elem().is_some_and(|x| x > m.depth) {
        return Ok(Membership::Unknown);
    }
    let keep: BTreeSet<Elem> = b.universe().iter().copied().collect();
    Ok(if &m.structure.induced_unchecked(&keep) == b {
        Membership::Yes
    } else {
        Membership::No
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeFailure {
    pub extension: FinStructure,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub fixed: Vec<Elem>,
    pub pivot: FinStructure,
    pub extension_bound: usize,
    pub checked: usize,
    pub failures: Vec<ProbeFailure>,
}

impl ProbeReport {
    pub fn dense_up_to_bound(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks that every member extension `D` of `pivot` with `|D| <= bound`
/// embeds into `top` by a map fixing `fixed` pointwise.
pub fn orbit_density_probe(
    class: &ClassSpec,
    top: &FinStructure,
    fixed: &[Elem],
    pivot: &FinStructure,
    extension_bound: usize,
) -> Result<ProbeReport> {
    top.same_sig(pivot)?;
    let keep: BTreeSet<Elem> = pivot.universe().iter().copied().collect();
    if !pivot.universe().iter().all(|&x| top.contains(x)) || &top.induced_unchecked(&keep) != pivot
    {
        return Err(Error::Precondition(
            "the pivot is not an induced substructure of the top".into(),
        ));
    }
    if !fixed.iter().all(|x| keep.contains(x)) {
        return Err(Error::Precondition(
            "the fixed set is not inside the pivot".into(),
        ));
    }
    let pins: BTreeMap<Elem, Elem> = fixed.iter().map(|&x| (x, x)).collect();
    let extensions = class.extensions(pivot, extension_bound);
    let mut failures = Vec::new();
    for d in &extensions {
        if !EmbeddingSearch::pinned(d, top, &pins)?.exists() {
            failures.push(ProbeFailure {
                extension: d.clone(),
            });
        }
    }
    Ok(ProbeReport {
        fixed: fixed.to_vec(),
        pivot: pivot.clone(),
        extension_bound,
        checked: extensions.len(),
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    fn approx(n: usize, edges: &[(Elem, Elem)]) -> PointApprox {
        PointApprox::new(FinStructure::graph(0..n, edges).unwrap()).unwrap()
    }

    #[test]
    fn identical_approximations_are_close_up_to_depth() {
        let m = approx(6, &[(0, 3), (2, 5)]);
        assert_eq!(
            distance_at_depth(&m, &m).unwrap(),
            Distance::AtMost { exponent: 6 }
        );
    }

    #[test]
    fn first_difference_sets_the_exponent() {
        let a = approx(4, &[(0, 1)]);
        let b = approx(4, &[]);
        assert_eq!(
            distance_at_depth(&a, &b).unwrap(),
            Distance::Exact { exponent: 1 }
        );
        let c = approx(4, &[(0, 2)]);
        assert_eq!(
            distance_at_depth(&b, &c).unwrap(),
            Distance::Exact { exponent: 2 }
        );
        assert_eq!(Distance::Exact { exponent: 2 }.value(), 0.25);
    }

    #[test]
    fn unary_difference_at_zero_is_distance_one() {
        let a = PointApprox::new(bundled::split_point(true)).unwrap();
        let b = PointApprox::new(bundled::split_point(false)).unwrap();
        assert_eq!(
            distance_at_depth(&a, &b).unwrap(),
            Distance::Exact { exponent: 0 }
        );
    }

    #[test]
    fn approximation_needs_an_initial_segment() {
        assert!(PointApprox::new(FinStructure::graph([0, 2], &[]).unwrap()).is_err());
    }

    #[test]
    fn basic_open_verdicts() {
        let edge = FinStructure::graph([0, 1], &[(0, 1)]).unwrap();
        assert_eq!(
            in_basic_open(&edge, &approx(6, &[(0, 1), (1, 2)])).unwrap(),
            Membership::Yes
        );
        assert_eq!(
            in_basic_open(&edge, &approx(6, &[(1, 2)])).unwrap(),
            Membership::No
        );
        let far = FinStructure::graph([0, 12], &[]).unwrap();
        assert_eq!(
            in_basic_open(&far, &approx(6, &[])).unwrap(),
            Membership::Unknown
        );
    }

    #[test]
    fn probe_on_edgeless_top_lists_the_adjacent_vertex() {
        let top = FinStructure::graph(0..5, &[]).unwrap();
        let pivot = top.induced(&[0]).unwrap();
        let r = orbit_density_probe(&bundled::graphs(), &top, &[0], &pivot, 2).unwrap();
        assert_eq!(r.checked, 2);
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].extension.tuple_count(), 2);
        let vacuous = orbit_density_probe(&bundled::graphs(), &top, &[0], &pivot, 0).unwrap();
        assert!(vacuous.dense_up_to_bound() && vacuous.checked == 0);
    }

    #[test]
    fn probe_rejects_unrealized_pivot() {
        let top = FinStructure::graph(0..3, &[]).unwrap();
        let pivot = FinStructure::graph([0, 1], &[(0, 1)]).unwrap();
        assert!(matches!(
            orbit_density_probe(&bundled::graphs(), &top, &[0], &pivot, 3),
            Err(Error::Precondition(_))
        ));
    }
}
