use super::*;
use crate::bundled;
use crate::limit::{build_limit, BnfBudget, Budget};
use crate::structure::PartialIso;

fn sys(carrier: FinStructure, pairs: &[(Elem, Elem)]) -> PSystem {
    PSystem::new(carrier, pairs.iter().copied().collect()).unwrap()
}

fn order_budget() -> Budget {
    Budget {
        extension_bound: 3,
        ..Budget::default()
    }
}

#[test]
fn inclusion_of_shifting_chains() {
    let s = sys(bundled::chain(2), &[(0, 1)]);
    let t = sys(bundled::chain(3), &[(0, 1), (1, 2)]);
    let f = Embedding::identity(&[0, 1]);
    assert!(is_system_embedding(&f, &s, &t).unwrap());
    assert!(!is_system_embedding(
        &f,
        &t.restrict(&[0, 1]).unwrap(),
        &sys(bundled::chain(3), &[])
    )
    .unwrap());
}

#[test]
fn order_reversing_map_is_rejected() {
    let bad = PSystem::new(bundled::chain(3), [(0, 2), (1, 1)].into_iter().collect());
    assert!(bad.is_err());
}

#[test]
fn empty_map_embeds_vacuously() {
    let s = sys(bundled::chain(2), &[]);
    let t = sys(bundled::chain(3), &[(2, 1)]);
    for e in EmbeddingSearch::new(s.carrier(), t.carrier())
        .unwrap()
        .all()
    {
        assert!(is_system_embedding(&e, &s, &t).unwrap());
    }
}

#[test]
fn map_outside_the_carrier_is_a_domain_error() {
    let s = sys(bundled::chain(2), &[]);
    let f = Embedding::from_pairs([(0, 0)]);
    assert!(matches!(
        is_system_embedding(&f, &s, &s),
        Err(Error::Domain(_))
    ));
}

#[test]
fn strong_embeddings_reflect_the_map() {
    let s = sys(bundled::chain(2), &[]);
    let t = sys(bundled::chain(2), &[(0, 1)]);
    let id = Embedding::identity(&[0, 1]);
    assert!(is_system_embedding(&id, &s, &t).unwrap());
    assert!(!is_strong_system_embedding(&id, &s, &t).unwrap());
    assert!(is_strong_system_embedding(&id, &t, &t).unwrap());
}

#[test]
fn joint_embedding_of_plain_graphs() {
    let spec = bundled::graphs();
    let k2 = PSystem::plain(FinStructure::graph(0..2, &[(0, 1)]).unwrap());
    let e2 = PSystem::plain(FinStructure::graph(0..2, &[]).unwrap());
    let w = solve_jep_p(&spec, &k2, &e2, 4)
        .unwrap()
        .into_witness()
        .unwrap();
    assert!(w.joint.psi().is_empty());
    let base = spec
        .solve_jep(k2.carrier(), e2.carrier(), 4)
        .unwrap()
        .into_witness()
        .unwrap();
    assert_eq!(w.joint.carrier(), &base.joint);
    assert!(is_system_embedding(&w.from_s, &k2, &w.joint).unwrap());
    assert!(is_system_embedding(&w.from_t, &e2, &w.joint).unwrap());
}

#[test]
fn joint_embedding_of_fixed_vertices() {
    let spec = bundled::graphs();
    let v = sys(FinStructure::graph([0], &[]).unwrap(), &[(0, 0)]);
    let w = solve_jep_p(&spec, &v, &v, 2)
        .unwrap()
        .into_witness()
        .unwrap();
    assert_eq!(w.joint.len(), 2);
    assert!(w.joint.psi().iter().all(|(a, b)| a == b));
    assert_eq!(w.joint.psi().len(), 2);
}

#[test]
fn split_class_has_no_joint_system() {
    let spec = bundled::split();
    let p = PSystem::plain(bundled::split_point(true));
    let q = PSystem::plain(bundled::split_point(false));
    assert_eq!(solve_jep_p(&spec, &p, &q, 5).unwrap().none_up_to(), Some(5));
}

#[test]
fn weak_amalgamation_examples() {
    let orders = bundled::linear_orders();
    let a = PSystem::plain(bundled::chain(1));
    let w = solve_wap_p(&orders, &a, 3, 3, 8)
        .unwrap()
        .into_witness()
        .unwrap();
    assert!(is_system_embedding(&w.e, &a, &w.pivot).unwrap());
    assert!(certifies_p(&orders, &w.pivot, &w.e, 3, 8).is_none());

    let graphs = bundled::graphs();
    let v = sys(FinStructure::graph([0], &[]).unwrap(), &[(0, 0)]);
    assert!(solve_wap_p(&graphs, &v, 2, 3, 8).unwrap().is_witnessed());

    let empty = PSystem::plain(graphs.empty_structure());
    assert!(solve_wap_p(&graphs, &empty, 0, 0, 0)
        .unwrap()
        .is_witnessed());
}

#[test]
fn weak_amalgamation_needs_a_base_amalgamating_class() {
    let spec = bundled::split();
    let empty = PSystem::plain(spec.empty_structure());
    assert!(matches!(
        solve_wap_p(&spec, &empty, 1, 2, 4),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn partial_isos_of_a_chain() {
    // Order-preserving partial bijections of a 3-chain: C(3,k)^2 for each k.
    assert_eq!(
        partial_isos_extending(&bundled::chain(3), &BTreeMap::new()).len(),
        20
    );
}

#[test]
fn zero_steps_give_the_empty_system() {
    let c = build_generic_automorphism(&bundled::graphs(), 0, &Budget::default(), 0).unwrap();
    assert!(c.carrier().is_empty());
    assert!(c.map().is_empty());
    c.validate().unwrap();
}

#[test]
fn order_automorphism_is_coherent() {
    let spec = bundled::linear_orders();
    let c = build_generic_automorphism(&spec, 60, &order_budget(), 0).unwrap();
    c.validate().unwrap();
    let top = c.carrier();
    assert!(spec.membership(top).unwrap());
    assert!(top.is_partial_iso_into(top, c.map()));
    assert!(c.total_prefix() >= 3, "{}", c.total_prefix());
    let systems = c.systems().unwrap();
    for w in systems.windows(2) {
        let id = Embedding::identity(w[0].carrier().universe());
        assert!(is_system_embedding(&id, &w[0], &w[1]).unwrap());
    }
}

#[test]
fn graph_automorphism_reflects_edges() {
    let spec = bundled::graphs();
    let c = build_generic_automorphism(&spec, 60, &order_budget(), 1).unwrap();
    c.validate().unwrap();
    assert!(c.carrier().is_partial_iso_into(c.carrier(), c.map()));
    assert!(c.map().iter().any(|(a, b)| a != b));
}

#[test]
fn log_replays_and_detects_tampering() {
    let spec = bundled::linear_orders();
    let c = build_generic_automorphism(&spec, 40, &order_budget(), 2).unwrap();
    let mut buf = Vec::new();
    c.write_log(&mut buf).unwrap();
    let entries = AutChain::read_log(buf.as_slice()).unwrap();
    let back = AutChain::replay(spec.clone(), entries.clone()).unwrap();
    assert_eq!(back.carrier(), c.carrier());
    assert_eq!(back.pairs(), c.pairs());
    back.validate().unwrap();

    let mut bad = entries;
    let pos = bad
        .iter()
        .position(|e| matches!(e, AutEntry::Totality { .. }))
        .unwrap();
    if let AutEntry::Totality { element, .. } = &mut bad[pos] {
        *element += 1;
    }
    assert!(AutChain::replay(spec, bad).unwrap().validate().is_err());
}

#[test]
fn a_chain_is_system_isomorphic_to_itself() {
    let spec = bundled::linear_orders();
    let c = build_generic_automorphism(&spec, 40, &order_budget(), 0).unwrap();
    let iso = system_back_and_forth(&c, &c, 3, &BnfBudget::default())
        .unwrap()
        .unwrap();
    assert!(iso.pairs.iter().all(|(x, y)| x == y));
}

#[test]
fn identity_chain_differs_from_a_generic_one() {
    let spec = bundled::graphs();
    let plain = build_limit(&spec, 40, &Budget::default(), 0).unwrap();
    let id = AutChain::identity_of(&plain).unwrap();
    id.validate().unwrap();
    assert!(id.map().iter().all(|(a, b)| a == b));
    assert_eq!(id.map().len(), plain.top().len());
    let g = build_generic_automorphism(&spec, 60, &order_budget(), 0).unwrap();
    let out = system_back_and_forth(&g, &id, 2, &BnfBudget::default()).unwrap();
    assert!(out.is_err());
    let same = system_back_and_forth(&id, &id, 2, &BnfBudget::default()).unwrap();
    assert_eq!(
        same.unwrap(),
        PartialIso::new((0..=2).map(|x| (x, x)).collect())
    );
}
