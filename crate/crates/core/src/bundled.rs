//! Class specs shipped with the repository, plus a few named structures
//! used by examples and tests.

use crate::class::ClassSpec;
use crate::io::class_spec_from_json;
use crate::structure::FinStructure;

pub const GRAPHS: &str = include_str!("../../../specs/graphs.spec");
pub const TRIANGLE_FREE: &str = include_str!("../../../specs/triangle-free.spec");
pub const LINEAR_ORDERS: &str = include_str!("../../../specs/linear-orders.spec");
pub const LINEAR_FORESTS: &str = include_str!("../../../specs/linear-forests.spec");
pub const SPLIT: &str = include_str!("../../../specs/split.spec");
pub const SETS: &str = include_str!("../../../specs/sets.spec");

pub const ALL: [(&str, &str); 6] = [
    ("graphs", GRAPHS),
    ("triangle-free", TRIANGLE_FREE),
    ("linear-orders", LINEAR_ORDERS),
    ("linear-forests", LINEAR_FORESTS),
    ("split", SPLIT),
    ("sets", SETS),
];

fn load(text: &str) -> ClassSpec {
    class_spec_from_json(text).expect("bundled spec is valid")
}

pub fn graphs() -> ClassSpec {
    load(GRAPHS)
}

pub fn triangle_free() -> ClassSpec {
    load(TRIANGLE_FREE)
}

pub fn linear_orders() -> ClassSpec {
    load(LINEAR_ORDERS)
}

/// Graphs of maximum degree two without cycles of length up to eight.
/// Agrees with the class of linear forests on structures of size at most 8.
pub fn linear_forests() -> ClassSpec {
    load(LINEAR_FORESTS)
}

/// One unary predicate; a structure is a member iff the predicate holds
/// everywhere or nowhere.
pub fn split() -> ClassSpec {
    load(SPLIT)
}

/// Pure sets (empty signature).
pub fn sets() -> ClassSpec {
    load(SETS)
}

/// The chain `0 < 1 < ... < n-1`.
pub fn chain(n: usize) -> FinStructure {
    let spec = linear_orders();
    let tuples = (0..n).flat_map(|i| (i + 1..n).map(move |j| (0, vec![i, j])));
    FinStructure::new(spec.sig().clone(), 0..n, tuples).expect("chain is well formed")
}

/// A single point of the split class, inside or outside the predicate.
pub fn split_point(inside: bool) -> FinStructure {
    let spec = split();
    let tuples = inside.then(|| (0, vec![0]));
    FinStructure::new(spec.sig().clone(), [0], tuples).expect("point is well formed")
}

/// The failing amalgamation instance for linear forests: two isolated
/// vertices `0, 1`; `B1` joins them by a path of length two through `2`;
/// `B2` joins them by a path of length three through `3, 4`. Any amalgam
/// closes a cycle.
pub fn linear_forest_ap_instance() -> (FinStructure, FinStructure, FinStructure) {
    let b = FinStructure::graph([0, 1], &[]).unwrap();
    let b1 = FinStructure::graph([0, 1, 2], &[(0, 2), (2, 1)]).unwrap();
    let b2 = FinStructure::graph([0, 1, 3, 4], &[(0, 3), (3, 4), (4, 1)]).unwrap();
    (b, b1, b2)
}
