//! Gluing an extension onto a base structure.
//!
//! Every amalgam, joint embedding and chain extension in the crate is an
//! instance of one problem: keep the base structure as it is, identify part
//! of an extension `D` with base elements, add the remaining elements of `D`
//! under fresh labels, and decide the tuples that mix new elements with
//! unidentified base elements so that no forbidden pattern appears.
//!
//! Any amalgam restricts to the images of its two factors and stays in a
//! hereditary class, so searching over identifications and mixed tuples is
//! exhaustive: no proper extension is ever needed.
//!
//! Mixed tuples are decided base element by base element, in increasing
//! order. Once every mixed tuple up to base element `u` is decided, the
//! structure on the identified part, the new part and the base elements up
//! to `u` is final, and any forbidden pattern using `u` and a new element is
//! rejected there. The all-absent assignment (the free amalgam) is tried
//! first.
//!
//! In system mode the two partial maps are united and mixed tuples that the
//! united map sends to one another are decided together.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::ControlFlow;

use crate::search::EmbeddingSearch;
use crate::structure::{Elem, FinStructure, Tuple};

#[derive(Clone, Debug)]
pub struct Glued {
    pub result: FinStructure,
    /// Element of the extension ↦ element of the result.
    pub ext_map: BTreeMap<Elem, Elem>,
    /// The united partial map (system mode only).
    pub psi: Option<BTreeMap<Elem, Elem>>,
}

#[derive(Clone, Debug)]
pub enum GlueOutcome {
    Found(Glued),
    Infeasible,
    BudgetExhausted,
}

impl GlueOutcome {
    pub fn found(self) -> Option<Glued> {
        match self {
            GlueOutcome::Found(g) => Some(g),
            _ => None,
        }
    }
}

pub struct GlueProblem<'a> {
    pub base: &'a FinStructure,
    pub ext: &'a FinStructure,
    /// Extension element ↦ base element.
    pub ident: BTreeMap<Elem, Elem>,
    pub forbidden: &'a [FinStructure],
    pub max_size: Option<usize>,
    pub node_budget: u64,
    /// Order in which unidentified extension elements receive fresh labels;
    /// defaults to increasing order.
    pub new_order: Option<Vec<Elem>>,
    /// `(partial map on base, partial map on extension)` for system mode.
    pub psi: Option<(&'a BTreeMap<Elem, Elem>, &'a BTreeMap<Elem, Elem>)>,
}

impl<'a> GlueProblem<'a> {
    pub fn new(
        base: &'a FinStructure,
        ext: &'a FinStructure,
        forbidden: &'a [FinStructure],
    ) -> Self {
        GlueProblem {
            base,
            ext,
            ident: BTreeMap::new(),
            forbidden,
            max_size: None,
            node_budget: u64::MAX,
            new_order: None,
            psi: None,
        }
    }

    pub fn ident(mut self, ident: BTreeMap<Elem, Elem>) -> Self {
        self.ident = ident;
        self
    }

    pub fn max_size(mut self, n: usize) -> Self {
        self.max_size = Some(n);
        self
    }

    pub fn budget(mut self, nodes: u64) -> Self {
        self.node_budget = nodes;
        self
    }

    pub fn new_order(mut self, order: Vec<Elem>) -> Self {
        self.new_order = Some(order);
        self
    }

    pub fn systems(
        mut self,
        base_psi: &'a BTreeMap<Elem, Elem>,
        ext_psi: &'a BTreeMap<Elem, Elem>,
    ) -> Self {
        self.psi = Some((base_psi, ext_psi));
        self
    }

    pub fn solve(&self) -> GlueOutcome {
        solve(self)
    }
}

struct Unit {
    members: Vec<(usize, Tuple)>,
    fixed: Option<bool>,
    level: usize,
    /// Position in the fresh order of the last fresh element its first
    /// visible member touches.
    sub: usize,
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let n = self.0[y];
            self.0[y] = r;
            y = n;
        }
        r
    }
    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.0[a.max(b)] = a.min(b);
        }
    }
}

/// Tuples of the given arity containing `u` and at least one element of
/// `fresh`, with remaining slots drawn from `old`.
fn mixed_tuples(arity: usize, u: Elem, fresh: &[Elem], old: &[Elem], out: &mut Vec<Tuple>) {
    fn rec(
        arity: usize,
        u: Elem,
        fresh: &[Elem],
        old: &[Elem],
        cur: &mut Tuple,
        has_u: bool,
        has_new: bool,
        out: &mut Vec<Tuple>,
    ) {
        let rem = arity - cur.len();
        if rem == 0 {
            if has_u && has_new {
                out.push(cur.clone());
            }
            return;
        }
        let need = usize::from(!has_u) + usize::from(!has_new);
        if need > rem {
            return;
        }
        cur.push(u);
        rec(arity, u, fresh, old, cur, true, has_new, out);
        cur.pop();
        for &x in fresh {
            cur.push(x);
            rec(arity, u, fresh, old, cur, has_u, true, out);
            cur.pop();
        }
        if need < rem {
            for &x in old {
                cur.push(x);
                rec(arity, u, fresh, old, cur, has_u, has_new, out);
                cur.pop();
            }
        }
    }
    rec(
        arity,
        u,
        fresh,
        old,
        &mut Vec::with_capacity(arity),
        false,
        false,
        out,
    );
}

fn solve(p: &GlueProblem<'_>) -> GlueOutcome {
    let base = p.base;
    let ext = p.ext;
    if base.same_sig(ext).is_err() {
        return GlueOutcome::Infeasible;
    }
    // Identification must be an injective partial isomorphism.
    if !ext.is_partial_iso_into(base, &p.ident) {
        return GlueOutcome::Infeasible;
    }
    let new_ext: Vec<Elem> = match &p.new_order {
        Some(o) => o
            .iter()
            .copied()
            .filter(|x| !p.ident.contains_key(x))
            .collect(),
        None => ext
            .universe()
            .iter()
            .copied()
            .filter(|x| !p.ident.contains_key(x))
            .collect(),
    };
    if let Some(max) = p.max_size {
        if base.len() + new_ext.len() > max {
            return GlueOutcome::Infeasible;
        }
    }
    let first_fresh = base.max_elem().map_or(0, |m| m + 1);
    let mut ext_map = p.ident.clone();
    for (i, &x) in new_ext.iter().enumerate() {
        ext_map.insert(x, first_fresh + i);
    }
    let fresh: Vec<Elem> = (first_fresh..first_fresh + new_ext.len()).collect();
    let fresh_set: BTreeSet<Elem> = fresh.iter().copied().collect();
    let known: BTreeSet<Elem> = p.ident.values().copied().collect();

    // Working structure: base, plus the transported extension.
    let transported = ext.relabel(&ext_map).expect("ext_map is injective");
    let mut work = base
        .extended(
            fresh.iter().copied(),
            (0..ext.sig().len())
                .flat_map(|r| transported.tuples(r).iter().map(move |t| (r, t.clone()))),
        )
        .expect("labels are consistent");

    let unknown: Vec<Elem> = base
        .universe()
        .iter()
        .copied()
        .filter(|x| !known.contains(x))
        .collect();
    let level_of: HashMap<Elem, usize> = unknown.iter().enumerate().map(|(i, &u)| (u, i)).collect();

    // Collect mixed tuples.
    let mut tuples: Vec<(usize, Tuple)> = Vec::new();
    let mut index: HashMap<(usize, Tuple), usize> = HashMap::new();
    let mut old: Vec<Elem> = known.iter().copied().collect();
    let mut buf = Vec::new();
    for &u in &unknown {
        for (r, sym) in ext.sig().relations().iter().enumerate() {
            buf.clear();
            mixed_tuples(sym.arity, u, &fresh, &old, &mut buf);
            for t in buf.drain(..) {
                if sym.irreflexive && t[0] == t[1] {
                    continue;
                }
                index.insert((r, t.clone()), tuples.len());
                tuples.push((r, t));
            }
        }
        old.push(u);
    }

    let mut dsu = Dsu((0..tuples.len()).collect());
    let mut fixed: HashMap<usize, bool> = HashMap::new();
    for (i, (r, t)) in tuples.iter().enumerate() {
        if ext.sig().relations()[*r].symmetric {
            if let Some(&j) = index.get(&(*r, vec![t[1], t[0]])) {
                dsu.union(i, j);
            }
        }
    }

    let united = match p.psi {
        None => None,
        Some((base_psi, ext_psi)) => {
            let mut u: BTreeMap<Elem, Elem> = base_psi.clone();
            for (&a, &b) in ext_psi {
                let (a, b) = (ext_map[&a], ext_map[&b]);
                match u.get(&a) {
                    Some(&c) if c != b => return GlueOutcome::Infeasible,
                    _ => {
                        u.insert(a, b);
                    }
                }
            }
            let ran: BTreeSet<Elem> = u.values().copied().collect();
            if ran.len() != u.len() {
                return GlueOutcome::Infeasible;
            }
            Some(u)
        }
    };
    if let Some(u) = &united {
        let inv: BTreeMap<Elem, Elem> = u.iter().map(|(&a, &b)| (b, a)).collect();
        let mixed_free = |t: &Tuple| {
            t.iter().any(|x| fresh_set.contains(x)) && t.iter().any(|x| level_of.contains_key(x))
        };
        for i in 0..tuples.len() {
            let (r, t) = tuples[i].clone();
            for map in [u, &inv] {
                if !t.iter().all(|x| map.contains_key(x)) {
                    continue;
                }
                let img: Tuple = t.iter().map(|x| map[x]).collect();
                if mixed_free(&img) {
                    if let Some(&j) = index.get(&(r, img)) {
                        dsu.union(i, j);
                    }
                } else {
                    let v = work.holds(r, &img);
                    match fixed.insert(i, v) {
                        Some(prev) if prev != v => return GlueOutcome::Infeasible,
                        _ => {}
                    }
                }
            }
        }
    }

    // Build units.
    let mut by_root: BTreeMap<usize, usize> = BTreeMap::new();
    let mut units: Vec<Unit> = Vec::new();
    for i in 0..tuples.len() {
        let root = dsu.find(i);
        let uid = *by_root.entry(root).or_insert_with(|| {
            units.push(Unit {
                members: Vec::new(),
                fixed: None,
                level: usize::MAX,
                sub: usize::MAX,
            });
            units.len() - 1
        });
        let (r, t) = &tuples[i];
        let lvl = t
            .iter()
            .filter_map(|x| level_of.get(x))
            .copied()
            .max()
            .unwrap_or(0);
        let sub = t
            .iter()
            .filter(|x| fresh_set.contains(x))
            .map(|x| x - first_fresh)
            .max()
            .unwrap_or(0);
        // A unit is decided when its first member becomes visible.
        let unit = &mut units[uid];
        (unit.level, unit.sub) = (unit.level, unit.sub).min((lvl, sub));
        unit.members.push((*r, t.clone()));
        if let Some(&v) = fixed.get(&i) {
            match unit.fixed {
                Some(w) if w != v => return GlueOutcome::Infeasible,
                _ => unit.fixed = Some(v),
            }
        }
    }
    let mut levels: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); fresh.len()]; unknown.len()];
    for (i, u) in units.iter().enumerate() {
        levels[u.level][u.sub].push(i);
    }

    let mut forbidden: Vec<&FinStructure> = p.forbidden.iter().collect();
    forbidden.sort_by_key(|f| f.len());

    // Patterns that live inside the identified part plus the new part were
    // excluded by membership of the extension; if the extension is not a
    // member, fail early.
    let whole: Vec<Elem> = known.iter().copied().chain(fresh.iter().copied()).collect();
    if forbidden
        .iter()
        .any(|f| hits_fresh(f, &work, &whole, None, &fresh_set))
    {
        return GlueOutcome::Infeasible;
    }

    let mut pool: Vec<Elem> = known.iter().copied().collect();
    let mut state = Dfs {
        work: &mut work,
        units: &units,
        levels: &levels,
        unknown: &unknown,
        forbidden: &forbidden,
        fresh: &fresh,
        nodes: 0,
        budget: p.node_budget,
        exhausted: false,
    };
    let found = state.rec(0, &mut pool);
    let exhausted = state.exhausted;
    if !found {
        return if exhausted {
            GlueOutcome::BudgetExhausted
        } else {
            GlueOutcome::Infeasible
        };
    }
    if let Some(u) = &united {
        if !work.is_partial_iso_into(&work, u) {
            return GlueOutcome::Infeasible;
        }
    }
    GlueOutcome::Found(Glued {
        result: work,
        ext_map,
        psi: united,
    })
}

/// Decides the mixed tuples one old element at a time and, within it, one
/// fresh element at a time, so that every check sees only decided tuples.
struct Dfs<'s> {
    work: &'s mut FinStructure,
    units: &'s [Unit],
    levels: &'s [Vec<Vec<usize>>],
    unknown: &'s [Elem],
    forbidden: &'s [&'s FinStructure],
    fresh: &'s [Elem],
    nodes: u64,
    budget: u64,
    exhausted: bool,
}

impl Dfs<'_> {
    /// `pool` holds the identified elements and the old elements decided so far.
    fn rec(&mut self, j: usize, pool: &mut Vec<Elem>) -> bool {
        if j == self.unknown.len() {
            return true;
        }
        for &i in self.levels[j].iter().flatten() {
            if let Some(v) = self.units[i].fixed {
                self.set(i, v);
            }
        }
        pool.push(self.unknown[j]);
        if self.sub(j, 0, pool) {
            return true;
        }
        pool.pop();
        for &i in self.levels[j].iter().flatten() {
            self.set(i, false);
        }
        false
    }

    /// `pool` additionally holds the fresh elements before position `s`.
    fn sub(&mut self, j: usize, s: usize, pool: &mut Vec<Elem>) -> bool {
        if s == self.fresh.len() {
            let mut next = pool[..pool.len() - s].to_vec();
            return self.rec(j + 1, &mut next);
        }
        let (u, f) = (self.unknown[j], self.fresh[s]);
        let free: Vec<usize> = self.levels[j][s]
            .iter()
            .copied()
            .filter(|&i| self.units[i].fixed.is_none())
            .collect();
        if free.len() >= 63 {
            // Too many coupled choices at one step to enumerate.
            self.exhausted = true;
            return false;
        }
        let only = BTreeSet::from([f]);
        pool.push(f);
        for mask in 0u64..(1u64 << free.len()) {
            self.nodes += 1;
            if self.nodes > self.budget {
                self.exhausted = true;
                break;
            }
            for (bit, &i) in free.iter().enumerate() {
                self.set(i, mask >> bit & 1 == 1);
            }
            let bad = self
                .forbidden
                .iter()
                .any(|g| hits_fresh(g, self.work, pool, Some(u), &only));
            if !bad && self.sub(j, s + 1, pool) {
                return true;
            }
            if self.exhausted {
                break;
            }
        }
        pool.pop();
        for &i in &free {
            self.set(i, false);
        }
        false
    }

    fn set(&mut self, unit: usize, v: bool) {
        for (r, t) in &self.units[unit].members {
            if v {
                self.work.insert_tuple(*r, t.clone());
            } else {
                self.work.remove_tuple(*r, t);
            }
        }
    }
}

/// Whether `f` embeds into `work` restricted to `pool` with an image that
/// contains a fresh element and, if given, `must`.
pub(crate) fn hits_fresh(
    f: &FinStructure,
    work: &FinStructure,
    pool: &[Elem],
    must: Option<Elem>,
    fresh: &BTreeSet<Elem>,
) -> bool {
    let fu = f.universe();
    let fresh_in_pool: Vec<Elem> = pool.iter().copied().filter(|x| fresh.contains(x)).collect();
    for (i, &a) in fu.iter().enumerate() {
        for (j, &b) in fu.iter().enumerate() {
            let mut pins = BTreeMap::new();
            match must {
                Some(m) => {
                    if i == j || fu.len() < 2 {
                        continue;
                    }
                    pins.insert(a, m);
                }
                None => {
                    if i != j {
                        continue;
                    }
                }
            }
            for &x in &fresh_in_pool {
                pins.insert(b, x);
                let search = EmbeddingSearch::pinned(f, work, &pins)
                    .expect("same signature")
                    .within(pool.to_vec());
                let mut hit = false;
                search.for_each(|_| {
                    hit = true;
                    ControlFlow::Break(())
                });
                if hit {
                    return true;
                }
            }
        }
    }
    false
}
