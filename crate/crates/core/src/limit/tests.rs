use super::*;
use crate::bundled;
use crate::search::EmbeddingSearch;
use crate::structure::PartialIso;

fn graph_chain(steps: usize, seed: u64) -> Chain {
    build_limit(&bundled::graphs(), steps, &Budget::default(), seed).unwrap()
}

/// A chain over the graph class whose top has no edges.
fn edgeless_chain(n: usize) -> Chain {
    let spec = bundled::graphs();
    let mut chain = Chain::start(spec.clone(), 0, 0, Budget::default());
    chain.top = FinStructure::graph(0..n, &[]).unwrap();
    chain.stage_sizes.push(n);
    chain
}

#[test]
fn graph_chain_is_coherent_and_universal_for_triples() {
    let chain = graph_chain(50, 0);
    chain.validate().unwrap();
    let r = verify_universality(&chain, 3).unwrap();
    assert!(r.is_complete(), "{r:?}");
    assert_eq!(r.types_checked, 8);
    for w in chain.stage_sizes().windows(2) {
        assert!(w[0] < w[1]);
    }
}

#[test]
fn chain_is_determined_by_its_parameters() {
    let a = graph_chain(30, 3);
    let b = graph_chain(30, 3);
    assert_eq!(a.top(), b.top());
    assert_eq!(a.log(), b.log());
}

#[test]
fn log_round_trips_and_replays() {
    let chain = graph_chain(40, 1);
    let mut buf = Vec::new();
    chain.write_log(&mut buf).unwrap();
    let entries = Chain::read_log(buf.as_slice()).unwrap();
    let back = Chain::replay(bundled::graphs(), entries).unwrap();
    assert_eq!(back.top(), chain.top());
    assert_eq!(back.stage_sizes(), chain.stage_sizes());
    back.validate().unwrap();
}

#[test]
fn tampered_log_fails_validation() {
    let chain = graph_chain(20, 0);
    let mut log = chain.log().to_vec();
    let pos = log
        .iter()
        .position(|e| matches!(e, ScheduleEntry::Saturation { .. }))
        .unwrap();
    if let ScheduleEntry::Saturation { resolution, .. } = &mut log[pos] {
        let (_, v) = resolution.map.iter_mut().next().unwrap();
        *v += 1000;
    }
    let back = Chain::replay(bundled::graphs(), log).unwrap();
    assert!(back.validate().is_err());
}

#[test]
fn linear_order_chain_stays_a_linear_order() {
    let spec = bundled::linear_orders();
    let chain = build_limit(&spec, 50, &Budget::default(), 0).unwrap();
    chain.validate().unwrap();
    assert!(spec.membership(chain.top()).unwrap());
    assert!(chain.top().len() >= 4);
    let midpoints = chain
        .resolved_tasks()
        .filter(|(t, _)| t.anchor.len() == 2 && t.anchor.iter().all(|&x| x < 4))
        .count();
    assert!(midpoints > 0);
}

#[test]
fn sets_grow_by_isolated_points() {
    let chain = build_limit(&bundled::sets(), 10, &Budget::default(), 0).unwrap();
    chain.validate().unwrap();
    assert!(chain.top().len() >= 2);
    assert_eq!(chain.top().tuple_count(), 0);
}

#[test]
fn edgeless_top_misses_an_edge() {
    let r = verify_universality(&edgeless_chain(4), 2).unwrap();
    assert_eq!(r.missing.len(), 1);
    assert_eq!(r.missing[0].tuple_count(), 2);
    assert!(verify_universality(&edgeless_chain(4), 0)
        .unwrap()
        .is_complete());
}

#[test]
fn weak_saturation_examples() {
    let chain = graph_chain(60, 0);
    let w = verify_weak_saturation(&chain, &[0], 2)
        .unwrap()
        .into_witness()
        .unwrap();
    assert_eq!(w.a, w.b);
    assert!(verify_weak_saturation(&edgeless_chain(4), &[0], 2)
        .unwrap()
        .none_up_to()
        .is_some());
    let empty = verify_weak_saturation(&edgeless_chain(4), &[], 0)
        .unwrap()
        .into_witness()
        .unwrap();
    assert!(empty.b.is_empty());
}

#[test]
fn chain_against_itself_gives_the_identity() {
    let chain = graph_chain(40, 0);
    let iso = back_and_forth(
        &chain,
        &chain,
        4,
        &BnfBudget {
            nodes: 10_000,
            extension_bound: 3,
        },
    )
    .unwrap()
    .unwrap();
    assert!(iso.pairs.iter().all(|(x, y)| x == y));
}

#[test]
fn edgeless_chain_cannot_match_a_saturated_one() {
    let m = edgeless_chain(6);
    let n = graph_chain(60, 0);
    let fail = back_and_forth(
        &m,
        &n,
        1,
        &BnfBudget {
            nodes: 100_000,
            extension_bound: 3,
        },
    )
    .unwrap()
    .unwrap_err();
    assert!(!fail.budget_exhausted);
    assert!(fail.element <= 1);
}

#[test]
fn vertex_homogeneity_at_small_depth() {
    let chain = graph_chain(80, 0);
    let spec = chain.spec().clone();
    let a = chain
        .top()
        .induced(&[0])
        .unwrap()
        .relabel(&[(0, 0)].into_iter().collect())
        .unwrap();
    let w = spec
        .find_wap_witness(&a, 1, 2, 4)
        .unwrap()
        .into_witness()
        .unwrap();
    let iso = PartialIso::new([(0, 1)].into_iter().collect());
    let out = verify_weak_homogeneity(
        &chain,
        &w,
        (&[0], &[0]),
        (&[1], &[1]),
        &iso,
        4,
        &BnfBudget {
            nodes: 1_000_000,
            extension_bound: 3,
        },
    )
    .unwrap();
    let p = out.unwrap();
    assert_eq!(p.pairs[&0], 1);
    assert!(p.is_valid(chain.top(), chain.top()));
    let id = PartialIso::new([(0, 0)].into_iter().collect());
    let trivial = verify_weak_homogeneity(
        &chain,
        &w,
        (&[0], &[0]),
        (&[0], &[0]),
        &id,
        0,
        &BnfBudget {
            nodes: 1,
            extension_bound: 3,
        },
    )
    .unwrap()
    .unwrap();
    assert_eq!(trivial, id);
}

#[test]
fn resolutions_fix_the_anchor() {
    let chain = graph_chain(40, 2);
    for (task, r) in chain.resolved_tasks() {
        assert!(EmbeddingSearch::new(&task.extension, chain.top())
            .unwrap()
            .exists());
        for (d, m) in task.pins() {
            assert_eq!(r.map[&task.into_ext.map[&d]], m);
        }
    }
}
