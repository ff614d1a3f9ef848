//! Finite multi-sorted structures: relations as explicit tuple sets, total
//! functions as tables, partial maps, generated substructures, partial
//! isomorphism, and quantifier-free type equality over a parameter set.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type SortId = usize;

/// An element of a structure: a sort together with an index inside that sort.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct Elem {
    pub sort: SortId,
    pub idx: usize,
}

impl Elem {
    pub fn new(sort: SortId, idx: usize) -> Self {
        Elem { sort, idx }
    }
}

impl fmt::Display for Elem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}e{}", self.sort, self.idx)
    }
}

/// Relation declaration: name plus the sort of each argument position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelDecl {
    pub name: String,
    pub profile: Vec<SortId>,
}

/// Function declaration: argument sorts plus result sort. Interpretations are
/// total on the universe.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FnDecl {
    pub name: String,
    pub profile: Vec<SortId>,
    pub result: SortId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub sorts: Vec<String>,
    pub relations: Vec<RelDecl>,
    pub functions: Vec<FnDecl>,
}

impl Signature {
    pub fn relational(sorts: Vec<String>, relations: Vec<RelDecl>) -> Self {
        Signature {
            sorts,
            relations,
            functions: Vec::new(),
        }
    }

    pub fn is_relational(&self) -> bool {
        self.functions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut names: BTreeSet<&str> = BTreeSet::new();
        for r in &self.relations {
            if !names.insert(&r.name) {
                return Err(Error::InvalidParams(format!("duplicate symbol {}", r.name)));
            }
            if r.profile.iter().any(|&s| s >= self.sorts.len()) {
                return Err(Error::SortMismatch(format!(
                    "relation {} profile out of range",
                    r.name
                )));
            }
        }
        for f in &self.functions {
            if !names.insert(&f.name) {
                return Err(Error::InvalidParams(format!("duplicate symbol {}", f.name)));
            }
            if f.profile.iter().any(|&s| s >= self.sorts.len()) || f.result >= self.sorts.len() {
                return Err(Error::SortMismatch(format!(
                    "function {} profile out of range",
                    f.name
                )));
            }
        }
        Ok(())
    }
}

/// A finite structure. Universes are arbitrary index sets per sort; relation
/// interpretations store exactly the true tuples; function interpretations are
/// total tables over the universe.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Structure {
    pub sig: Signature,
    pub universe: Vec<BTreeSet<usize>>,
    pub rel_interp: Vec<BTreeSet<Vec<Elem>>>,
    pub fn_interp: Vec<BTreeMap<Vec<Elem>, Elem>>,
}

impl Structure {
    pub fn new(sig: Signature) -> Self {
        let ns = sig.sorts.len();
        let nr = sig.relations.len();
        let nf = sig.functions.len();
        Structure {
            sig,
            universe: vec![BTreeSet::new(); ns],
            rel_interp: vec![BTreeSet::new(); nr],
            fn_interp: vec![BTreeMap::new(); nf],
        }
    }

    /// Adds a fresh element of `sort` with the next unused index.
    pub fn add_elem(&mut self, sort: SortId) -> Elem {
        let idx = self.universe[sort].iter().next_back().map_or(0, |&m| m + 1);
        self.universe[sort].insert(idx);
        Elem { sort, idx }
    }

    pub fn insert_elem(&mut self, e: Elem) {
        self.universe[e.sort].insert(e.idx);
    }

    pub fn contains(&self, e: Elem) -> bool {
        e.sort < self.universe.len() && self.universe[e.sort].contains(&e.idx)
    }

    pub fn size(&self) -> usize {
        self.universe.iter().map(|u| u.len()).sum()
    }

    /// All elements, ordered by (sort, idx).
    pub fn elems(&self) -> Vec<Elem> {
        let mut out = Vec::with_capacity(self.size());
        for (s, u) in self.universe.iter().enumerate() {
            out.extend(u.iter().map(|&idx| Elem { sort: s, idx }));
        }
        out
    }

    pub fn rel_id(&self, name: &str) -> Option<usize> {
        self.sig.relations.iter().position(|r| r.name == name)
    }

    pub fn fn_id(&self, name: &str) -> Option<usize> {
        self.sig.functions.iter().position(|f| f.name == name)
    }

    fn check_profile(&self, profile: &[SortId], tuple: &[Elem]) -> Result<()> {
        if profile.len() != tuple.len() {
            return Err(Error::SortMismatch(format!(
                "arity {} expected, tuple has {}",
                profile.len(),
                tuple.len()
            )));
        }
        for (e, &s) in tuple.iter().zip(profile) {
            if e.sort != s {
                return Err(Error::SortMismatch(format!(
                    "element {e} where sort {s} expected"
                )));
            }
            if !self.contains(*e) {
                return Err(Error::InvalidParams(format!(
                    "element {e} outside the universe"
                )));
            }
        }
        Ok(())
    }

    pub fn add_rel_tuple(&mut self, rel: usize, tuple: Vec<Elem>) -> Result<()> {
        self.check_profile(&self.sig.relations[rel].profile.clone(), &tuple)?;
        self.rel_interp[rel].insert(tuple);
        Ok(())
    }

    pub fn rel_holds(&self, rel: usize, tuple: &[Elem]) -> bool {
        self.rel_interp[rel].contains(tuple)
    }

    pub fn set_fn(&mut self, f: usize, args: Vec<Elem>, val: Elem) -> Result<()> {
        self.check_profile(&self.sig.functions[f].profile.clone(), &args)?;
        if val.sort != self.sig.functions[f].result || !self.contains(val) {
            return Err(Error::SortMismatch(format!(
                "function value {val} has wrong sort"
            )));
        }
        self.fn_interp[f].insert(args, val);
        Ok(())
    }

    pub fn apply(&self, f: usize, args: &[Elem]) -> Option<Elem> {
        self.fn_interp[f].get(args).copied()
    }

    /// Checks internal consistency: tuples respect profiles and the universe,
    /// functions are total tables with in-universe values.
    pub fn validate(&self) -> Result<()> {
        self.sig.validate()?;
        for (r, interp) in self.rel_interp.iter().enumerate() {
            for t in interp {
                self.check_profile(&self.sig.relations[r].profile, t)?;
            }
        }
        for (f, interp) in self.fn_interp.iter().enumerate() {
            let decl = &self.sig.functions[f];
            let expected: u64 = decl
                .profile
                .iter()
                .map(|&s| self.universe[s].len() as u64)
                .product();
            if interp.len() as u64 != expected {
                return Err(Error::InvalidParams(format!(
                    "function {} is not total: {} of {} entries",
                    decl.name,
                    interp.len(),
                    expected
                )));
            }
            for (args, val) in interp {
                self.check_profile(&decl.profile, args)?;
                if val.sort != decl.result || !self.contains(*val) {
                    return Err(Error::SortMismatch(format!(
                        "function {} value {val} out of sort",
                        decl.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Outcome of inserting a pair into a [`PartialMap`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapInsert {
    Added,
    Present,
    /// The pair contradicts functionality or injectivity.
    Conflict,
}

/// A finite partial map between elements: functional, injective, and
/// sort-respecting by construction.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PartialMap {
    fwd: BTreeMap<Elem, Elem>,
    bwd: BTreeMap<Elem, Elem>,
}

impl PartialMap {
    pub fn new() -> Self {
        PartialMap::default()
    }

    pub fn identity_on<I: IntoIterator<Item = Elem>>(iter: I) -> Self {
        let mut m = PartialMap::new();
        for e in iter {
            let _ = m.try_insert(e, e);
        }
        m
    }

    /// Attempts to add `a -> b`. Sort mismatches count as conflicts.
    pub fn try_insert(&mut self, a: Elem, b: Elem) -> MapInsert {
        if a.sort != b.sort {
            return MapInsert::Conflict;
        }
        match (self.fwd.get(&a), self.bwd.get(&b)) {
            (Some(&b0), _) if b0 == b => MapInsert::Present,
            (Some(_), _) => MapInsert::Conflict,
            (None, Some(_)) => MapInsert::Conflict,
            (None, None) => {
                self.fwd.insert(a, b);
                self.bwd.insert(b, a);
                MapInsert::Added
            }
        }
    }

    pub fn insert(&mut self, a: Elem, b: Elem) -> Result<()> {
        match self.try_insert(a, b) {
            MapInsert::Conflict => Err(Error::InvalidParams(format!(
                "map conflict inserting {a} -> {b}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn get(&self, a: Elem) -> Option<Elem> {
        self.fwd.get(&a).copied()
    }

    pub fn get_inv(&self, b: Elem) -> Option<Elem> {
        self.bwd.get(&b).copied()
    }

    pub fn inverse(&self) -> PartialMap {
        PartialMap {
            fwd: self.bwd.clone(),
            bwd: self.fwd.clone(),
        }
    }

    pub fn domain(&self) -> impl Iterator<Item = Elem> + '_ {
        self.fwd.keys().copied()
    }

    pub fn image(&self) -> impl Iterator<Item = Elem> + '_ {
        self.bwd.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.fwd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fwd.is_empty()
    }

    pub fn map_tuple(&self, tuple: &[Elem]) -> Option<Vec<Elem>> {
        tuple.iter().map(|&e| self.get(e)).collect()
    }

    fn map_tuple_inv(&self, tuple: &[Elem]) -> Option<Vec<Elem>> {
        tuple.iter().map(|&e| self.get_inv(e)).collect()
    }
}

/// Smallest subset of the universe containing `seed` and closed under every
/// function of the structure.
pub fn generated_set(s: &Structure, seed: &BTreeSet<Elem>) -> BTreeSet<Elem> {
    let mut set: BTreeSet<Elem> = seed.iter().copied().filter(|&e| s.contains(e)).collect();
    let mut frontier: Vec<Elem> = set.iter().copied().collect();
    while !frontier.is_empty() {
        let mut produced = Vec::new();
        for (f, decl) in s.sig.functions.iter().enumerate() {
            // Argument tuples over `set` using at least one frontier element.
            let mut args = vec![Elem::new(0, 0); decl.profile.len()];
            apply_over(
                s,
                f,
                &decl.profile.clone(),
                &set,
                &frontier,
                &mut args,
                0,
                false,
                &mut |v| {
                    produced.push(v);
                },
            );
        }
        frontier = produced.into_iter().filter(|&v| set.insert(v)).collect();
    }
    set
}

/// Recursively enumerates argument tuples over `set`, requiring at least one
/// coordinate from `frontier` (tracked by the `used` flag), and feeds each
/// function value to `out`.
#[allow(clippy::too_many_arguments)]
fn apply_over(
    s: &Structure,
    f: usize,
    profile: &[SortId],
    set: &BTreeSet<Elem>,
    frontier: &[Elem],
    args: &mut Vec<Elem>,
    pos: usize,
    used_frontier: bool,
    out: &mut impl FnMut(Elem),
) {
    if pos == profile.len() {
        if used_frontier || profile.is_empty() {
            if let Some(v) = s.apply(f, args) {
                out(v);
            }
        }
        return;
    }
    let frontier_set: BTreeSet<Elem> = frontier.iter().copied().collect();
    for &e in set.iter().filter(|e| e.sort == profile[pos]) {
        args[pos] = e;
        let on_frontier = frontier_set.contains(&e);
        // Last position must hit the frontier if nothing before it did.
        if pos + 1 == profile.len() && !used_frontier && !on_frontier {
            continue;
        }
        apply_over(
            s,
            f,
            profile,
            set,
            frontier,
            args,
            pos + 1,
            used_frontier || on_frontier,
            out,
        );
    }
}

/// Restriction of `s` to `set`. Fails with `NotSubstructure` when `set` is not
/// closed under some function.
pub fn restrict(s: &Structure, set: &BTreeSet<Elem>) -> Result<Structure> {
    let mut out = Structure::new(s.sig.clone());
    for &e in set {
        if !s.contains(e) {
            return Err(Error::NotSubstructure(format!(
                "element {e} outside the universe"
            )));
        }
        out.insert_elem(e);
    }
    for (r, interp) in s.rel_interp.iter().enumerate() {
        for t in interp {
            if t.iter().all(|e| set.contains(e)) {
                out.rel_interp[r].insert(t.clone());
            }
        }
    }
    for (f, interp) in s.fn_interp.iter().enumerate() {
        for (args, val) in interp {
            if args.iter().all(|e| set.contains(e)) {
                if !set.contains(val) {
                    return Err(Error::NotSubstructure(format!(
                        "function {} escapes the set at {val}",
                        s.sig.functions[f].name
                    )));
                }
                out.fn_interp[f].insert(args.clone(), *val);
            }
        }
    }
    Ok(out)
}

/// Substructure generated by `seed`: closure under all functions, with
/// relations and functions restricted.
pub fn generated_substructure(s: &Structure, seed: &BTreeSet<Elem>) -> Structure {
    let set = generated_set(s, seed);
    restrict(s, &set).expect("generated set is closed by construction")
}

/// Checks that `m` is a partial isomorphism of `s` into itself: relation
/// tuples inside the domain map to true tuples and vice versa, and function
/// values inside the domain (resp. image) commute with the map.
pub fn is_partial_isomorphism(s: &Structure, m: &PartialMap) -> bool {
    let dom: BTreeSet<Elem> = m.domain().collect();
    let img: BTreeSet<Elem> = m.image().collect();
    if dom.iter().any(|&e| !s.contains(e)) || img.iter().any(|&e| !s.contains(e)) {
        return false;
    }
    for interp in &s.rel_interp {
        for t in interp {
            if t.iter().all(|e| dom.contains(e)) {
                let mt = m.map_tuple(t).expect("tuple inside domain");
                if !interp.contains(&mt) {
                    return false;
                }
            }
            if t.iter().all(|e| img.contains(e)) {
                let mt = m.map_tuple_inv(t).expect("tuple inside image");
                if !interp.contains(&mt) {
                    return false;
                }
            }
        }
    }
    for (f, decl) in s.sig.functions.iter().enumerate() {
        let profile = decl.profile.clone();
        let mut ok = true;
        let mut args = vec![Elem::new(0, 0); profile.len()];
        let all: Vec<Elem> = dom.iter().copied().collect();
        tuples_over(&all, &profile, &mut args, 0, &mut |args| {
            if let Some(v) = s.apply(f, args) {
                if dom.contains(&v) {
                    let margs = m.map_tuple(args).expect("args in domain");
                    if s.apply(f, &margs) != m.get(v) {
                        ok = false;
                    }
                }
            }
        });
        if !ok {
            return false;
        }
        let all_img: Vec<Elem> = img.iter().copied().collect();
        tuples_over(&all_img, &profile, &mut args, 0, &mut |args| {
            if let Some(v) = s.apply(f, args) {
                if img.contains(&v) {
                    let margs = m.map_tuple_inv(args).expect("args in image");
                    if s.apply(f, &margs) != m.get_inv(v) {
                        ok = false;
                    }
                }
            }
        });
        if !ok {
            return false;
        }
    }
    true
}

/// Enumerates all tuples over `pool` matching `profile` (sorts filtered).
pub(crate) fn tuples_over(
    pool: &[Elem],
    profile: &[SortId],
    args: &mut Vec<Elem>,
    pos: usize,
    out: &mut impl FnMut(&[Elem]),
) {
    if pos == profile.len() {
        out(args);
        return;
    }
    for &e in pool.iter().filter(|e| e.sort == profile[pos]) {
        args[pos] = e;
        tuples_over(pool, profile, args, pos + 1, out);
    }
}

/// Quantifier-free type equality of `a` and `b` over parameter set `c`:
/// whether identity on `c` together with `a -> b` extends to an isomorphism
/// between the substructures generated by `c ∪ a` and `c ∪ b`.
///
/// Errors with `SortMismatch` when the tuples differ in length or sorts.
pub fn qf_type_equal(s: &Structure, a: &[Elem], b: &[Elem], c: &BTreeSet<Elem>) -> Result<bool> {
    if a.len() != b.len() {
        return Err(Error::SortMismatch(format!(
            "tuple lengths {} and {} differ",
            a.len(),
            b.len()
        )));
    }
    for (x, y) in a.iter().zip(b) {
        if x.sort != y.sort {
            return Err(Error::SortMismatch(format!(
                "{x} and {y} have different sorts"
            )));
        }
    }
    for e in a.iter().chain(b).chain(c.iter()) {
        if !s.contains(*e) {
            return Err(Error::InvalidParams(format!(
                "element {e} outside the universe"
            )));
        }
    }
    let mut m = PartialMap::identity_on(c.iter().copied());
    for (&x, &y) in a.iter().zip(b) {
        if m.try_insert(x, y) == MapInsert::Conflict {
            return Ok(false);
        }
    }
    if !s.sig.is_relational() {
        // Close the map under functions. A forced conflict means the types
        // differ; otherwise the closed map covers the generated substructures.
        let mut frontier: Vec<Elem> = m.domain().collect();
        while !frontier.is_empty() {
            let dom: Vec<Elem> = m.domain().collect();
            let frontier_set: BTreeSet<Elem> = frontier.iter().copied().collect();
            let mut next = Vec::new();
            for (f, decl) in s.sig.functions.iter().enumerate() {
                let profile = decl.profile.clone();
                let mut args = vec![Elem::new(0, 0); profile.len()];
                let mut conflict = false;
                tuples_over(&dom, &profile, &mut args, 0, &mut |args| {
                    if conflict {
                        return;
                    }
                    if !profile.is_empty() && !args.iter().any(|e| frontier_set.contains(e)) {
                        return;
                    }
                    let v = s.apply(f, args).expect("functions are total");
                    let margs = m.map_tuple(args).expect("args in domain");
                    let w = s.apply(f, &margs).expect("functions are total");
                    match m.try_insert(v, w) {
                        MapInsert::Added => next.push(v),
                        MapInsert::Present => {}
                        MapInsert::Conflict => conflict = true,
                    }
                });
                if conflict {
                    return Ok(false);
                }
            }
            frontier = next;
        }
    }
    Ok(is_partial_isomorphism(s, &m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_sort_sig() -> Signature {
        Signature {
            sorts: vec!["A".into(), "B".into()],
            relations: vec![RelDecl {
                name: "R".into(),
                profile: vec![0, 1],
            }],
            functions: vec![],
        }
    }

    #[test]
    fn add_and_query_elements() {
        let mut s = Structure::new(two_sort_sig());
        let a0 = s.add_elem(0);
        let b0 = s.add_elem(1);
        assert_eq!(a0, Elem::new(0, 0));
        assert_eq!(b0, Elem::new(1, 0));
        s.add_rel_tuple(0, vec![a0, b0]).unwrap();
        assert!(s.rel_holds(0, &[a0, b0]));
        assert!(!s.rel_holds(0, &[a0, Elem::new(1, 5)]));
        s.validate().unwrap();
    }

    #[test]
    fn rel_tuple_sort_checked() {
        let mut s = Structure::new(two_sort_sig());
        let a0 = s.add_elem(0);
        assert!(matches!(
            s.add_rel_tuple(0, vec![a0, a0]),
            Err(Error::SortMismatch(_))
        ));
    }

    #[test]
    fn partial_map_injective_functional() {
        let mut m = PartialMap::new();
        let (a, b, c) = (Elem::new(0, 0), Elem::new(0, 1), Elem::new(0, 2));
        assert_eq!(m.try_insert(a, b), MapInsert::Added);
        assert_eq!(m.try_insert(a, b), MapInsert::Present);
        assert_eq!(m.try_insert(a, c), MapInsert::Conflict);
        assert_eq!(m.try_insert(c, b), MapInsert::Conflict);
        assert_eq!(m.try_insert(b, b), MapInsert::Conflict);
        assert_eq!(
            m.try_insert(Elem::new(1, 0), Elem::new(0, 3)),
            MapInsert::Conflict
        );
    }

    #[test]
    fn generated_set_closes_under_functions() {
        // One sort, successor-with-cap function on 0..3.
        let sig = Signature {
            sorts: vec!["N".into()],
            relations: vec![],
            functions: vec![FnDecl {
                name: "s".into(),
                profile: vec![0],
                result: 0,
            }],
        };
        let mut s = Structure::new(sig);
        let e: Vec<Elem> = (0..4).map(|_| s.add_elem(0)).collect();
        for i in 0..4 {
            let next = e[(i + 1).min(3)];
            s.set_fn(0, vec![e[i]], next).unwrap();
        }
        let seed: BTreeSet<Elem> = [e[1]].into_iter().collect();
        let set = generated_set(&s, &seed);
        assert_eq!(set, [e[1], e[2], e[3]].into_iter().collect());
        let sub = generated_substructure(&s, &seed);
        sub.validate().unwrap();
        assert_eq!(sub.size(), 3);
    }
}
