use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use fraisse_core::bundled;
use fraisse_core::canon::canonical_code;
use fraisse_core::generic::{is_system_embedding, partial_isos_extending, PSystem};
use fraisse_core::search::enumerate_embeddings;
use fraisse_core::space::{distance_at_depth, in_basic_open, Membership, PointApprox};
use fraisse_core::structure::RelSymbol;
use fraisse_core::{ClassSpec, Elem, Embedding, FinStructure, Signature};
use proptest::prelude::*;

fn digraph_sig() -> Arc<Signature> {
    Arc::new(Signature::new(vec![RelSymbol::plain("R", 2)]).unwrap())
}

/// A loop-free directed graph on `0..n` whose arcs are read off `bits`.
fn digraph(n: usize, bits: &[bool]) -> FinStructure {
    let arcs = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .filter(|(a, b)| a != b)
        .zip(bits.iter().cycle())
        .filter(|(_, &on)| on)
        .map(|((a, b), _)| (0, vec![a, b]));
    FinStructure::new(digraph_sig(), 0..n, arcs).unwrap()
}

fn graph(n: usize, bits: &[bool]) -> FinStructure {
    let edges: Vec<(Elem, Elem)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .zip(bits.iter().cycle())
        .filter(|(_, &on)| on)
        .map(|(e, _)| e)
        .collect();
    FinStructure::graph(0..n, &edges).unwrap()
}

fn arb_digraph(max: usize) -> impl Strategy<Value = FinStructure> {
    (0..=max, prop::collection::vec(any::<bool>(), 1..=max * max))
        .prop_map(|(n, bits)| digraph(n, &bits))
}

fn arb_graph(n: usize) -> impl Strategy<Value = FinStructure> {
    prop::collection::vec(any::<bool>(), n * n).prop_map(move |bits| graph(n, &bits))
}

fn permutations(n: usize) -> Vec<Vec<Elem>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn arcs(s: &FinStructure) -> BTreeSet<(Elem, Elem)> {
    s.tuples(0).iter().map(|t| (t[0], t[1])).collect()
}

fn isomorphic_by_permutation(a: &FinStructure, b: &FinStructure) -> bool {
    a.len() == b.len() && {
        let (ea, eb) = (arcs(a), arcs(b));
        permutations(a.len()).iter().any(|p| {
            ea.iter()
                .map(|&(x, y)| (p[x], p[y]))
                .collect::<BTreeSet<_>>()
                == eb
        })
    }
}

/// Injective maps `a -> b` preserving and reflecting arcs.
fn brute_embedding_count(a: &FinStructure, b: &FinStructure) -> usize {
    fn rec(a: &FinStructure, b: &FinStructure, map: &mut Vec<Elem>) -> usize {
        if map.len() == a.len() {
            let (ea, eb) = (arcs(a), arcs(b));
            let ok = (0..a.len()).all(|x| {
                (0..a.len()).all(|y| ea.contains(&(x, y)) == eb.contains(&(map[x], map[y])))
            });
            return usize::from(ok);
        }
        let mut total = 0;
        for y in 0..b.len() {
            if !map.contains(&y) {
                map.push(y);
                total += rec(a, b, map);
                map.pop();
            }
        }
        total
    }
    rec(a, b, &mut Vec::new())
}

fn bundled_specs() -> Vec<ClassSpec> {
    vec![
        bundled::graphs(),
        bundled::triangle_free(),
        bundled::linear_orders(),
        bundled::linear_forests(),
        bundled::split(),
        bundled::sets(),
    ]
}

/// A structure over `spec`'s signature on `0..n`, each possible tuple
/// present according to `bits`.
fn structure_over(spec: &ClassSpec, n: usize, bits: &[bool]) -> FinStructure {
    let mut bit = bits.iter().cycle();
    let mut tuples = Vec::new();
    for (r, sym) in spec.sig().relations().iter().enumerate() {
        let mut t = vec![0; sym.arity];
        'all: loop {
            let loopy = t.windows(2).any(|w| w[0] == w[1]) || (sym.arity == 2 && t[0] == t[1]);
            let ordered = !sym.symmetric || t[0] < t[1];
            if n > 0 && !(sym.irreflexive && loopy) && ordered && *bit.next().unwrap() {
                tuples.push((r, t.clone()));
            }
            for i in (0..sym.arity).rev() {
                t[i] += 1;
                if t[i] < n {
                    continue 'all;
                }
                t[i] = 0;
            }
            break;
        }
    }
    FinStructure::new(spec.sig().clone(), 0..n, tuples).unwrap()
}

fn subsets(n: usize) -> impl Iterator<Item = Vec<Elem>> {
    (0u32..1 << n).map(move |m| (0..n).filter(|&i| m >> i & 1 == 1).collect())
}

/// Copies `base` and re-draws every pair involving an element `>= from`.
fn perturb(base: &FinStructure, from: usize, bits: &[bool]) -> FinStructure {
    let n = base.len();
    let mut bit = bits.iter().cycle();
    let edges: Vec<(Elem, Elem)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .filter(|&(a, b)| {
            if b >= from {
                *bit.next().unwrap()
            } else {
                base.holds(0, &[a, b])
            }
        })
        .collect();
    FinStructure::graph(0..n, &edges).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn canonical_code_decides_isomorphism(a in arb_digraph(5), b in arb_digraph(5)) {
        let same = canonical_code(&a) == canonical_code(&b);
        prop_assert_eq!(same, isomorphic_by_permutation(&a, &b));
    }

    #[test]
    fn canonical_code_ignores_relabeling(a in arb_digraph(5), shift in 0usize..20, seed in any::<u64>()) {
        let mut perm = permutations(a.len());
        let p = if perm.is_empty() { Vec::new() } else { perm.swap_remove(seed as usize % perm.len()) };
        let map: BTreeMap<Elem, Elem> = (0..a.len()).map(|x| (x, p[x] * 3 + shift)).collect();
        prop_assert_eq!(canonical_code(&a), canonical_code(&a.relabel(&map).unwrap()));
    }

    #[test]
    fn embedding_count_matches_brute_force(a in arb_digraph(3), b in arb_digraph(5)) {
        let found = enumerate_embeddings(&a, &b).unwrap();
        prop_assert_eq!(found.len(), brute_embedding_count(&a, &b));
        let mut sorted = found.clone();
        sorted.sort_by(|x, y| x.map.iter().cmp(y.map.iter()));
        prop_assert_eq!(sorted, found);
    }

    #[test]
    fn embeddings_compose(a in arb_digraph(2), b in arb_digraph(3), c in arb_digraph(4)) {
        for f in enumerate_embeddings(&a, &b).unwrap() {
            for g in enumerate_embeddings(&b, &c).unwrap() {
                prop_assert!(f.then(&g).unwrap().is_valid(&a, &c));
            }
        }
    }

    #[test]
    fn induced_on_everything_is_identity(a in arb_digraph(5)) {
        prop_assert_eq!(a.induced(a.universe()).unwrap(), a);
    }

    #[test]
    fn members_are_closed_under_substructures(
        which in 0usize..6,
        n in 0usize..=5,
        bits in prop::collection::vec(any::<bool>(), 1..64),
    ) {
        let spec = &bundled_specs()[which];
        let a = structure_over(spec, n, &bits);
        prop_assume!(spec.membership(&a).unwrap());
        for s in subsets(n) {
            prop_assert!(spec.membership(&a.induced(&s).unwrap()).unwrap());
        }
    }

    #[test]
    fn solvers_are_deterministic(a in arb_graph(2), b in arb_graph(2)) {
        let spec = bundled::triangle_free();
        prop_assume!(spec.membership(&a).unwrap() && spec.membership(&b).unwrap());
        let first = spec.solve_jep(&a, &b, 4).unwrap();
        prop_assert_eq!(first, spec.solve_jep(&a, &b, 4).unwrap());
    }

    #[test]
    fn distance_is_symmetric_and_ultrametric(
        base in arb_graph(9),
        cuts in (0usize..=9, 0usize..=9),
        bits in prop::collection::vec(any::<bool>(), 72),
    ) {
        let m = PointApprox::new(base.clone()).unwrap();
        let n = PointApprox::new(perturb(&base, cuts.0, &bits)).unwrap();
        let p = PointApprox::new(perturb(&base, cuts.1, &bits[36..])).unwrap();
        let d = |x: &PointApprox, y: &PointApprox| distance_at_depth(x, y).unwrap();
        for (x, y) in [(&m, &n), (&n, &p), (&m, &p)] {
            prop_assert_eq!(d(x, y), d(y, x));
        }
        let all = [d(&m, &n), d(&m, &p), d(&p, &n)];
        if all.iter().all(|x| x.is_exact()) {
            prop_assert!(all[0].value() <= all[1].value().max(all[2].value()));
        }
    }

    #[test]
    fn distance_measures_the_common_prefix(
        base in arb_graph(7),
        cut in 0usize..=7,
        bits in prop::collection::vec(any::<bool>(), 28),
    ) {
        let other = perturb(&base, cut, &bits);
        let d = distance_at_depth(
            &PointApprox::new(base.clone()).unwrap(),
            &PointApprox::new(other.clone()).unwrap(),
        )
        .unwrap();
        for k in 0..=7 {
            let pre: Vec<Elem> = (0..k).collect();
            let agree = base.induced(&pre).unwrap() == other.induced(&pre).unwrap();
            let close = d.exponent() >= k;
            prop_assert_eq!(agree, close, "k = {}, d = {:?}", k, d);
        }
    }

    #[test]
    fn basic_open_verdicts_are_stable(
        top in arb_graph(8),
        pick in any::<u8>(),
        flip in any::<bool>(),
    ) {
        let support: Vec<Elem> = (0..8).filter(|i| pick >> i & 1 == 1).collect();
        let mut b = top.induced(&support).unwrap();
        if flip && support.len() >= 2 {
            let (x, y) = (support[0], support[1]);
            let edges: Vec<(Elem, Elem)> = b
                .tuples(0)
                .iter()
                .filter(|t| t[0] < t[1] && (t[0], t[1]) != (x, y))
                .map(|t| (t[0], t[1]))
                .chain((!b.holds(0, &[x, y])).then_some((x, y)))
                .collect();
            b = FinStructure::graph(support.iter().copied(), &edges).unwrap();
        }
        let mut settled = None;
        for depth in 0..8 {
            let m = PointApprox::prefix_of(&top, depth).unwrap();
            let v = in_basic_open(&b, &m).unwrap();
            match (settled, v) {
                (_, Membership::Unknown) => prop_assert!(settled.is_none()),
                (None, v) => settled = Some(v),
                (Some(s), v) => prop_assert_eq!(s, v),
            }
        }
        prop_assert_eq!(settled.unwrap(), if b == top.induced(&support).unwrap() {
            Membership::Yes
        } else {
            Membership::No
        });
    }
}

fn systems_up_to(spec: &ClassSpec, n: usize) -> Vec<PSystem> {
    spec.enumerate_types(n)
        .into_iter()
        .flat_map(|a| {
            partial_isos_extending(&a, &BTreeMap::new())
                .into_iter()
                .map(move |psi| PSystem::new(a.clone(), psi).unwrap())
        })
        .collect()
}

fn check_system_composition(spec: &ClassSpec) -> usize {
    let systems = systems_up_to(spec, 3);
    let arrows: Vec<Vec<Vec<Embedding>>> = systems
        .iter()
        .map(|s| {
            systems
                .iter()
                .map(|t| {
                    enumerate_embeddings(s.carrier(), t.carrier())
                        .unwrap()
                        .into_iter()
                        .filter(|f| is_system_embedding(f, s, t).unwrap())
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut composed = 0;
    for (i, s) in systems.iter().enumerate() {
        for (j, _) in systems.iter().enumerate() {
            for (k, u) in systems.iter().enumerate() {
                for f in &arrows[i][j] {
                    for g in &arrows[j][k] {
                        let h = f.then(g).unwrap();
                        assert!(is_system_embedding(&h, s, u).unwrap(), "{s:?} -> {u:?}");
                        composed += 1;
                    }
                }
            }
        }
    }
    composed
}

#[test]
fn system_embeddings_compose_for_orders() {
    assert!(check_system_composition(&bundled::linear_orders()) > 0);
}

#[test]
fn system_embeddings_compose_for_graphs() {
    assert!(check_system_composition(&bundled::graphs()) > 0);
}

#[test]
fn every_bundled_spec_is_hereditary_to_five() {
    for spec in bundled_specs() {
        assert!(
            spec.hereditarity_violations(5).is_empty(),
            "{}",
            spec.label()
        );
    }
}

/// The size and the least sorted arc list over all relabelings.
fn brute_canon(a: &FinStructure) -> (usize, Vec<(Elem, Elem)>) {
    let e = arcs(a);
    let least = permutations(a.len())
        .iter()
        .map(|p| {
            let mut v: Vec<_> = e.iter().map(|&(x, y)| (p[x], p[y])).collect();
            v.sort_unstable();
            v
        })
        .min()
        .unwrap_or_default();
    (a.len(), least)
}

fn check_canon_exhaustively(all: Vec<FinStructure>) {
    let mut by_code = BTreeMap::new();
    let mut by_brute = BTreeMap::new();
    for a in &all {
        let code = canonical_code(a);
        let brute = brute_canon(a);
        assert_eq!(
            *by_code.entry(code.clone()).or_insert_with(|| brute.clone()),
            brute
        );
        assert_eq!(*by_brute.entry(brute).or_insert(code.clone()), code);
    }
}

#[test]
fn canonical_codes_of_all_small_graphs() {
    let all = (0usize..=5)
        .flat_map(|n| {
            let pairs = n * n.saturating_sub(1) / 2;
            (0u32..1 << pairs).map(move |m| {
                let bits: Vec<bool> = (0..pairs.max(1)).map(|i| m >> i & 1 == 1).collect();
                graph(n, &bits)
            })
        })
        .collect();
    check_canon_exhaustively(all);
}

#[test]
fn canonical_codes_of_all_small_digraphs() {
    let all = (0usize..=4)
        .flat_map(|n| {
            let pairs = n * n.saturating_sub(1);
            (0u32..1 << pairs).map(move |m| {
                let bits: Vec<bool> = (0..pairs.max(1)).map(|i| m >> i & 1 == 1).collect();
                digraph(n, &bits)
            })
        })
        .collect();
    check_canon_exhaustively(all);
}
