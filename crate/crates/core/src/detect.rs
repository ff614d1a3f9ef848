//! Detectors for splitting of partitioned types, end-homogeneity, and
//! indiscernibility, together with the Ramsey-based extraction of
//! end-homogeneous subsequences, splitting-chain search, and minimal
//! non-splitting bases.
//!
//! A partitioned type is given by the realized tuples of its blocks plus a
//! pool of elements that witnesses may be drawn from. The splitting detector
//! looks for two injective witness tuples from the pool that have the same
//! quantifier-free type over the base joined with all blocks but one (for
//! every choice of the dropped block) while the types of the joined
//! blocks-plus-witness tuples differ over the base alone. Restricting the
//! search to injective witnesses loses nothing: duplicated coordinates are
//! forced to mirror each other, so any witness pair can be deduplicated into
//! an injective pair of the same or shorter length.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::structure::{qf_type_equal, Elem, SortId, Structure};
use crate::{Error, Result};

/// Step counter with a hard cap. Exhaustive searches charge their unit of
/// work here; exceeding the cap aborts with an error so that "no witness
/// found" is never silently conflated with "search truncated".
#[derive(Clone, Debug)]
pub struct Budget {
    cap: u64,
    steps: u64,
}

impl Budget {
    pub fn new(cap: u64) -> Self {
        Budget { cap, steps: 0 }
    }

    pub fn step(&mut self, n: u64) -> Result<()> {
        self.steps = self.steps.saturating_add(n);
        if self.steps > self.cap {
            Err(Error::BudgetExceeded {
                steps: self.steps,
                cap: self.cap,
            })
        } else {
            Ok(())
        }
    }

    pub fn used(&self) -> u64 {
        self.steps
    }
}

impl Default for Budget {
    fn default() -> Self {
        Budget::new(50_000_000)
    }
}

/// A partitioned quantifier-free type at the level of realized tuples: the
/// blocks, plus the pool witnesses are drawn from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionedType {
    pub blocks: Vec<Vec<Elem>>,
    pub params: Vec<Elem>,
}

/// Two witness tuples certifying a split, with a short human-readable note on
/// where their joined types first differ.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitWitness {
    pub len: usize,
    pub b: Vec<Elem>,
    pub b_prime: Vec<Elem>,
    pub note: String,
}

/// A sequence of same-shape tuples over a common base tuple.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sequence {
    pub base: Vec<Elem>,
    pub items: Vec<Vec<Elem>>,
}

impl Sequence {
    pub fn base_set(&self) -> BTreeSet<Elem> {
        self.base.iter().copied().collect()
    }

    pub fn item_len(&self) -> usize {
        self.items.first().map_or(0, Vec::len)
    }
}

fn validate_sequence(s: &Structure, seq: &Sequence) -> Result<()> {
    for e in seq.base.iter().chain(seq.items.iter().flatten()) {
        if !s.contains(*e) {
            return Err(Error::InvalidParams(format!(
                "element {e} outside the universe"
            )));
        }
    }
    if let Some(first) = seq.items.first() {
        let shape: Vec<SortId> = first.iter().map(|e| e.sort).collect();
        for it in &seq.items {
            if it.iter().map(|e| e.sort).collect::<Vec<_>>() != shape {
                return Err(Error::SortMismatch(
                    "sequence items must share one shape".into(),
                ));
            }
        }
    }
    Ok(())
}

/// All increasing k-tuples over 0..n in lexicographic order.
pub fn increasing_tuples(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(n, k, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(n, k, 0, &mut cur, &mut out);
    out
}

fn concat_items(seq: &Sequence, idxs: &[usize]) -> Vec<Elem> {
    idxs.iter()
        .flat_map(|&i| seq.items[i].iter().copied())
        .collect()
}

// ---------------------------------------------------------------------------
// Type fingerprints (relational signatures).
// ---------------------------------------------------------------------------

/// One coordinate of an atom fingerprint: a tuple position or a parameter.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Arg {
    Pos(u16),
    Par(Elem),
}

/// Canonical fingerprint of the quantifier-free type of a tuple over a
/// parameter set in a purely relational structure. Two tuples have equal
/// fingerprints exactly when their quantifier-free types over the parameters
/// agree (tuples of different shapes always differ via `sorts`).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypeKey {
    pub sorts: Vec<SortId>,
    /// Per position: first earlier position holding the same element, and the
    /// element itself when it is a parameter.
    pub eq: Vec<(Option<u16>, Option<Elem>)>,
    /// True atoms whose coordinates all lie in the parameters or the tuple,
    /// with at least one coordinate outside the parameters. Parameters are
    /// kept by value, tuple coordinates by first occurrence.
    pub atoms: BTreeSet<(usize, Vec<Arg>)>,
}

pub fn type_key(s: &Structure, params: &BTreeSet<Elem>, tuple: &[Elem]) -> Result<TypeKey> {
    if !s.sig.is_relational() {
        return Err(Error::InvalidParams(
            "type fingerprints need a relational signature".into(),
        ));
    }
    for e in tuple.iter().chain(params.iter()) {
        if !s.contains(*e) {
            return Err(Error::InvalidParams(format!(
                "element {e} outside the universe"
            )));
        }
    }
    let tset: BTreeSet<Elem> = tuple.iter().copied().collect();
    let mut eq = Vec::with_capacity(tuple.len());
    for (j, &e) in tuple.iter().enumerate() {
        let prev = tuple[..j].iter().position(|&x| x == e).map(|p| p as u16);
        let par = if params.contains(&e) { Some(e) } else { None };
        eq.push((prev, par));
    }
    let mut atoms = BTreeSet::new();
    for (r, interp) in s.rel_interp.iter().enumerate() {
        'tuple: for t in interp {
            let mut outside = false;
            for c in t {
                if params.contains(c) {
                    continue;
                }
                if tset.contains(c) {
                    outside = true;
                } else {
                    continue 'tuple;
                }
            }
            if !outside {
                continue;
            }
            let args = t
                .iter()
                .map(|&c| {
                    if params.contains(&c) {
                        Arg::Par(c)
                    } else {
                        Arg::Pos(tuple.iter().position(|&x| x == c).unwrap() as u16)
                    }
                })
                .collect();
            atoms.insert((r, args));
        }
    }
    Ok(TypeKey {
        sorts: tuple.iter().map(|e| e.sort).collect(),
        eq,
        atoms,
    })
}

// ---------------------------------------------------------------------------
// Splitting detector.
// ---------------------------------------------------------------------------

/// Which engine the splitting detector uses. Both produce the identical
/// first witness pair in (length, first tuple, second tuple) order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitStrategy {
    /// Fingerprint bucketing when the signature is relational and the pool is
    /// small enough, pairwise comparison otherwise.
    Auto,
    /// Force fingerprint bucketing (relational signatures only).
    Fingerprint,
    /// Force pairwise type comparison.
    Pairwise,
}

pub fn k_splits_over(
    s: &Structure,
    pt: &PartitionedType,
    base: &BTreeSet<Elem>,
    max_witness_len: usize,
    budget: &mut Budget,
) -> Result<Option<SplitWitness>> {
    k_splits_over_strategy(s, pt, base, max_witness_len, budget, SplitStrategy::Auto)
}

pub fn k_splits_over_strategy(
    s: &Structure,
    pt: &PartitionedType,
    base: &BTreeSet<Elem>,
    max_witness_len: usize,
    budget: &mut Budget,
    strategy: SplitStrategy,
) -> Result<Option<SplitWitness>> {
    if pt.blocks.is_empty() {
        return Err(Error::InvalidParams(
            "a partitioned type needs at least one block".into(),
        ));
    }
    for e in pt
        .blocks
        .iter()
        .flatten()
        .chain(pt.params.iter())
        .chain(base.iter())
    {
        if !s.contains(*e) {
            return Err(Error::InvalidParams(format!(
                "element {e} outside the universe"
            )));
        }
    }
    let pool: Vec<Elem> = pt
        .params
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let k = pt.blocks.len();
    let flat: Vec<Elem> = pt.blocks.iter().flatten().copied().collect();
    let blockvals: BTreeSet<Elem> = flat.iter().copied().collect();
    // Parameter set for the "drop block i" comparison.
    let qset = |drop: usize| -> BTreeSet<Elem> {
        let mut q = base.clone();
        for (j, b) in pt.blocks.iter().enumerate() {
            if j != drop {
                q.extend(b.iter().copied());
            }
        }
        q
    };
    let qsets: Vec<BTreeSet<Elem>> = (0..k).map(qset).collect();

    let fingerprint = match strategy {
        SplitStrategy::Auto => s.sig.is_relational() && pool.len() <= 128,
        SplitStrategy::Fingerprint => {
            if !s.sig.is_relational() {
                return Err(Error::InvalidParams(
                    "fingerprint splitting needs a relational signature".into(),
                ));
            }
            if pool.len() > 128 {
                return Err(Error::InvalidParams(
                    "fingerprint splitting caps the pool at 128".into(),
                ));
            }
            true
        }
        SplitStrategy::Pairwise => false,
    };
    if fingerprint {
        k_splits_fingerprint(s, &flat, &pool, base, &qsets, max_witness_len, budget)
    } else {
        k_splits_pairwise(
            s,
            &flat,
            &blockvals,
            &pool,
            base,
            &qsets,
            k,
            max_witness_len,
            budget,
        )
    }
}

// --- fingerprint engine ----------------------------------------------------

#[derive(Clone, Copy)]
enum TArg {
    Par(Elem),
    FlatPos(u16),
    Slot(u8),
}

struct AtomT {
    rel: u32,
    args: Vec<TArg>,
    mask: u128,
}

/// Per-candidate fingerprint: the forced-equality pattern of the witness
/// positions plus the fired atoms, encoded positionally.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct FpKey {
    eq: Vec<(Option<u16>, Option<Elem>)>,
    atoms: Vec<(u32, Vec<Arg>)>,
}

/// Fingerprint context for one parameter set, specialised to witness tuples
/// drawn from a fixed pool, optionally preceded by a fixed joined prefix.
struct FpCtx {
    q: BTreeSet<Elem>,
    flat_pos: BTreeMap<Elem, u16>,
    offset: u16,
    atoms: Vec<AtomT>,
    by_slot: Vec<Vec<u32>>,
    seen: Vec<u32>,
    stamp: u32,
}

impl FpCtx {
    fn new(
        s: &Structure,
        q: BTreeSet<Elem>,
        flat: &[Elem],
        pool: &[Elem],
        pool_idx: &BTreeMap<Elem, u8>,
    ) -> FpCtx {
        let mut flat_pos: BTreeMap<Elem, u16> = BTreeMap::new();
        for (p, &e) in flat.iter().enumerate() {
            flat_pos.entry(e).or_insert(p as u16);
        }
        let mut atoms: Vec<AtomT> = Vec::new();
        let mut by_slot = vec![Vec::new(); pool.len()];
        for (r, interp) in s.rel_interp.iter().enumerate() {
            'tuple: for t in interp {
                let mut args = Vec::with_capacity(t.len());
                let mut mask = 0u128;
                let mut slots: BTreeSet<u8> = BTreeSet::new();
                for c in t {
                    if q.contains(c) {
                        args.push(TArg::Par(*c));
                    } else if let Some(&p) = flat_pos.get(c) {
                        args.push(TArg::FlatPos(p));
                    } else if let Some(&sl) = pool_idx.get(c) {
                        args.push(TArg::Slot(sl));
                        mask |= 1u128 << sl;
                        slots.insert(sl);
                    } else {
                        // A coordinate no witness can cover: the atom never fires.
                        continue 'tuple;
                    }
                }
                if slots.is_empty() {
                    // Constant across all candidates: drop it from every key.
                    continue;
                }
                let id = atoms.len() as u32;
                atoms.push(AtomT {
                    rel: r as u32,
                    args,
                    mask,
                });
                for sl in slots {
                    by_slot[sl as usize].push(id);
                }
            }
        }
        let seen = vec![0u32; atoms.len()];
        FpCtx {
            q,
            flat_pos,
            offset: flat.len() as u16,
            atoms,
            by_slot,
            seen,
            stamp: 0,
        }
    }

    fn key(&mut self, pool: &[Elem], b: &[u8], b_mask: u128, pos_of: &[u16]) -> FpKey {
        self.stamp += 1;
        let mut eq = Vec::with_capacity(b.len());
        for &bi in b {
            let e = pool[bi as usize];
            let par = if self.q.contains(&e) { Some(e) } else { None };
            eq.push((self.flat_pos.get(&e).copied(), par));
        }
        let mut fired: Vec<(u32, Vec<Arg>)> = Vec::new();
        for &bi in b {
            for &aid in &self.by_slot[bi as usize] {
                let a = aid as usize;
                if self.seen[a] == self.stamp {
                    continue;
                }
                self.seen[a] = self.stamp;
                let at = &self.atoms[a];
                if at.mask & !b_mask != 0 {
                    continue;
                }
                let args = at
                    .args
                    .iter()
                    .map(|ta| match *ta {
                        TArg::Par(e) => Arg::Par(e),
                        TArg::FlatPos(p) => Arg::Pos(p),
                        TArg::Slot(sl) => Arg::Pos(self.offset + pos_of[sl as usize]),
                    })
                    .collect();
                fired.push((at.rel, args));
            }
        }
        fired.sort();
        FpKey { eq, atoms: fired }
    }
}

#[derive(Default)]
struct Intern {
    map: HashMap<FpKey, u32>,
}

impl Intern {
    fn id(&mut self, k: FpKey) -> u32 {
        let next = self.map.len() as u32;
        *self.map.entry(k).or_insert(next)
    }
}

struct Bucket {
    first_ord: u64,
    first: Vec<u8>,
    first_k2: u32,
    diff: Option<(u64, Vec<u8>)>,
}

fn render_atom(s: &Structure, atom: &(u32, Vec<Arg>)) -> String {
    let name = &s.sig.relations[atom.0 as usize].name;
    let args: Vec<String> = atom
        .1
        .iter()
        .map(|a| match a {
            Arg::Pos(p) => format!("t{p}"),
            Arg::Par(e) => e.to_string(),
        })
        .collect();
    format!("{name}({})", args.join(","))
}

fn joined_diff_note(s: &Structure, ka: &FpKey, kb: &FpKey) -> String {
    for (j, (ea, eb)) in ka.eq.iter().zip(&kb.eq).enumerate() {
        if ea != eb {
            return format!("witness position {j} meets the anchored parameters differently");
        }
    }
    let sa: BTreeSet<&(u32, Vec<Arg>)> = ka.atoms.iter().collect();
    let sb: BTreeSet<&(u32, Vec<Arg>)> = kb.atoms.iter().collect();
    if let Some(a) = sa.difference(&sb).next() {
        return format!(
            "atom {} holds with the first witness only",
            render_atom(s, a)
        );
    }
    if let Some(a) = sb.difference(&sa).next() {
        return format!(
            "atom {} holds with the second witness only",
            render_atom(s, a)
        );
    }
    "joined types differ".into()
}

/// Callback receiving an injective tuple, its occupancy mask, and the
/// position table.
type TupleVisitor<'a> = dyn FnMut(&[u8], u128, &[u16]) -> Result<()> + 'a;

fn gen_injective(
    n: u8,
    m: usize,
    b: &mut Vec<u8>,
    mask: &mut u128,
    pos_of: &mut [u16],
    f: &mut TupleVisitor,
) -> Result<()> {
    if b.len() == m {
        return f(b, *mask, pos_of);
    }
    for idx in 0..n {
        let bit = 1u128 << idx;
        if *mask & bit != 0 {
            continue;
        }
        pos_of[idx as usize] = b.len() as u16;
        b.push(idx);
        *mask |= bit;
        gen_injective(n, m, b, mask, pos_of, f)?;
        b.pop();
        *mask &= !bit;
    }
    Ok(())
}

fn k_splits_fingerprint(
    s: &Structure,
    flat: &[Elem],
    pool: &[Elem],
    base: &BTreeSet<Elem>,
    qsets: &[BTreeSet<Elem>],
    max_witness_len: usize,
    budget: &mut Budget,
) -> Result<Option<SplitWitness>> {
    let pool_idx: BTreeMap<Elem, u8> = pool
        .iter()
        .enumerate()
        .map(|(i, &e)| (e, i as u8))
        .collect();
    let mut ctxs: Vec<FpCtx> = qsets
        .iter()
        .map(|q| FpCtx::new(s, q.clone(), &[], pool, &pool_idx))
        .collect();
    let mut ctx2 = FpCtx::new(s, base.clone(), flat, pool, &pool_idx);
    let n = pool.len() as u8;

    for m in 1..=max_witness_len.min(pool.len()) {
        let mut interns: Vec<Intern> = (0..ctxs.len()).map(|_| Intern::default()).collect();
        let mut intern2 = Intern::default();
        let mut buckets: HashMap<(Vec<SortId>, Vec<u32>), Bucket> = HashMap::new();
        let mut best: Option<(u64, u64, Vec<u8>, Vec<u8>)> = None;
        let mut ord: u64 = 0;

        let mut b = Vec::with_capacity(m);
        let mut mask = 0u128;
        let mut pos_of = vec![0u16; pool.len()];
        gen_injective(
            n,
            m,
            &mut b,
            &mut mask,
            &mut pos_of,
            &mut |b, b_mask, pos_of| {
                budget.step(1)?;
                let profile: Vec<SortId> = b.iter().map(|&bi| pool[bi as usize].sort).collect();
                let mut ids = Vec::with_capacity(ctxs.len());
                for (ctx, intern) in ctxs.iter_mut().zip(interns.iter_mut()) {
                    ids.push(intern.id(ctx.key(pool, b, b_mask, pos_of)));
                }
                let k2 = intern2.id(ctx2.key(pool, b, b_mask, pos_of));
                match buckets.get_mut(&(profile.clone(), ids.clone())) {
                    None => {
                        buckets.insert(
                            (profile, ids),
                            Bucket {
                                first_ord: ord,
                                first: b.to_vec(),
                                first_k2: k2,
                                diff: None,
                            },
                        );
                    }
                    Some(bk) => {
                        if bk.diff.is_none() && k2 != bk.first_k2 {
                            bk.diff = Some((ord, b.to_vec()));
                            let cand = (bk.first_ord, ord, bk.first.clone(), b.to_vec());
                            if best
                                .as_ref()
                                .is_none_or(|cur| (cand.0, cand.1) < (cur.0, cur.1))
                            {
                                best = Some(cand);
                            }
                        }
                    }
                }
                ord += 1;
                Ok(())
            },
        )?;

        if let Some((_, _, sb, tb)) = best {
            let to_elems =
                |v: &[u8]| -> Vec<Elem> { v.iter().map(|&i| pool[i as usize]).collect() };
            let b = to_elems(&sb);
            let b_prime = to_elems(&tb);
            // Re-derive the joined keys of the two winners for the note.
            let mut rk = |t: &[u8]| {
                let mut mask = 0u128;
                let mut pos_of = vec![0u16; pool.len()];
                for (p, &i) in t.iter().enumerate() {
                    mask |= 1u128 << i;
                    pos_of[i as usize] = p as u16;
                }
                ctx2.key(pool, t, mask, &pos_of)
            };
            let (ka, kb) = (rk(&sb), rk(&tb));
            let note = joined_diff_note(s, &ka, &kb);
            return Ok(Some(SplitWitness {
                len: m,
                b,
                b_prime,
                note,
            }));
        }
    }
    Ok(None)
}

// --- pairwise engine -------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn k_splits_pairwise(
    s: &Structure,
    flat: &[Elem],
    blockvals: &BTreeSet<Elem>,
    pool: &[Elem],
    base: &BTreeSet<Elem>,
    qsets: &[BTreeSet<Elem>],
    k: usize,
    max_witness_len: usize,
    budget: &mut Budget,
) -> Result<Option<SplitWitness>> {
    // Elements whose image is forced to be themselves by some "drop one
    // block" comparison: mismatching on them can never give a witness pair.
    let mut forced = base.clone();
    if k >= 2 {
        forced.extend(blockvals.iter().copied());
    }
    for m in 1..=max_witness_len.min(pool.len()) {
        let mut cands: Vec<Vec<Elem>> = Vec::new();
        let mut b = Vec::with_capacity(m);
        let mut mask = 0u128;
        let mut pos_of = vec![0u16; pool.len().max(1)];
        if pool.len() <= 128 {
            gen_injective(
                pool.len() as u8,
                m,
                &mut b,
                &mut mask,
                &mut pos_of,
                &mut |b, _, _| {
                    budget.step(1)?;
                    cands.push(b.iter().map(|&i| pool[i as usize]).collect());
                    Ok(())
                },
            )?;
        } else {
            gen_injective_large(pool, m, &mut Vec::new(), &mut |t| {
                budget.step(1)?;
                cands.push(t.to_vec());
                Ok(())
            })?;
        }
        for i in 0..cands.len() {
            'pair: for j in i + 1..cands.len() {
                budget.step(1)?;
                let (x, y) = (&cands[i], &cands[j]);
                for (a, b) in x.iter().zip(y) {
                    if a.sort != b.sort {
                        continue 'pair;
                    }
                    if (forced.contains(a) || forced.contains(b)) && a != b {
                        continue 'pair;
                    }
                }
                let mut ok = true;
                for q in qsets {
                    if !qf_type_equal(s, x, y, q)? {
                        ok = false;
                        break;
                    }
                }
                if !ok {
                    continue;
                }
                let fx: Vec<Elem> = flat.iter().chain(x.iter()).copied().collect();
                let fy: Vec<Elem> = flat.iter().chain(y.iter()).copied().collect();
                if !qf_type_equal(s, &fx, &fy, base)? {
                    return Ok(Some(SplitWitness {
                        len: m,
                        b: x.clone(),
                        b_prime: y.clone(),
                        note: "joined types over the base differ".into(),
                    }));
                }
            }
        }
    }
    Ok(None)
}

/// Injective tuple enumeration without the 128-element pool cap.
fn gen_injective_large(
    pool: &[Elem],
    m: usize,
    cur: &mut Vec<Elem>,
    f: &mut dyn FnMut(&[Elem]) -> Result<()>,
) -> Result<()> {
    if cur.len() == m {
        return f(cur);
    }
    for &e in pool {
        if cur.contains(&e) {
            continue;
        }
        cur.push(e);
        gen_injective_large(pool, m, cur, f)?;
        cur.pop();
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// End-homogeneity and indiscernibility.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndHomViolation {
    pub cut: usize,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndHomReport {
    pub holds: bool,
    pub violation: Option<EndHomViolation>,
}

/// Checks width-k end-homogeneity: at every cut position i, all increasing
/// k-tuples of items with indices at or beyond the cut realize one
/// quantifier-free type over the base joined with the items before the cut.
pub fn is_end_homogeneous(s: &Structure, seq: &Sequence, k: usize) -> Result<EndHomReport> {
    validate_sequence(s, seq)?;
    if k == 0 {
        return Err(Error::InvalidParams("width must be positive".into()));
    }
    let n = seq.items.len();
    let mut params = seq.base_set();
    for cut in 0..=n.saturating_sub(k) {
        if cut > 0 {
            params.extend(seq.items[cut - 1].iter().copied());
        }
        let combos = increasing_tuples(n - cut, k);
        if combos.len() < 2 {
            continue;
        }
        let shift = |c: &[usize]| -> Vec<usize> { c.iter().map(|&i| i + cut).collect() };
        let left = shift(&combos[0]);
        let reference = concat_items(seq, &left);
        for c in &combos[1..] {
            let right = shift(c);
            if !qf_type_equal(s, &reference, &concat_items(seq, &right), &params)? {
                return Ok(EndHomReport {
                    holds: false,
                    violation: Some(EndHomViolation { cut, left, right }),
                });
            }
        }
    }
    Ok(EndHomReport {
        holds: true,
        violation: None,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndiscReport {
    pub holds: bool,
    pub violation: Option<(Vec<usize>, Vec<usize>)>,
}

/// Checks width-n indiscernibility over the base: all increasing n-tuples of
/// items realize one quantifier-free type over the base.
pub fn is_n_indiscernible(s: &Structure, seq: &Sequence, n: usize) -> Result<IndiscReport> {
    validate_sequence(s, seq)?;
    let len = seq.items.len();
    if n == 0 || n > len {
        return Ok(IndiscReport {
            holds: true,
            violation: None,
        });
    }
    let params = seq.base_set();
    let combos = increasing_tuples(len, n);
    let reference = concat_items(seq, &combos[0]);
    for c in &combos[1..] {
        if !qf_type_equal(s, &reference, &concat_items(seq, c), &params)? {
            return Ok(IndiscReport {
                holds: false,
                violation: Some((combos[0].clone(), c.clone())),
            });
        }
    }
    Ok(IndiscReport {
        holds: true,
        violation: None,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionReport {
    pub width: usize,
    pub witness_len: usize,
    /// Witness length at which the implication below is guaranteed to hold.
    pub sufficient_witness_len: usize,
    pub end_homogeneous: bool,
    pub end_hom_violation: Option<EndHomViolation>,
    pub split_searched: bool,
    pub split: Option<(Vec<usize>, SplitWitness)>,
    pub hypotheses_hold: bool,
    pub indiscernible: bool,
    pub first_failing_width: Option<usize>,
    pub implication_holds: bool,
}

/// Verifies the criterion "end-homogeneous plus nowhere-splitting implies
/// indiscernible" on one sequence.
///
/// Hypotheses: the sequence is width-k end-homogeneous over its base, and for
/// every increasing k-tuple of item indices, the partitioned type of those
/// items does not split over the base with witnesses drawn from the base
/// joined with the items before the first chosen index, up to the given
/// witness length. Conclusion: the sequence is width-n indiscernible over the
/// base for every n up to its length. The implication is guaranteed once the
/// witness length reaches `(len - k) * item_len`; below that, failures of the
/// conclusion with intact hypotheses may reflect witnesses that are merely
/// longer than the cap.
pub fn verify_indiscernibility_criterion(
    s: &Structure,
    seq: &Sequence,
    k: usize,
    witness_len: usize,
    budget: &mut Budget,
) -> Result<CriterionReport> {
    validate_sequence(s, seq)?;
    if k == 0 {
        return Err(Error::InvalidParams("width must be positive".into()));
    }
    let len = seq.items.len();
    let eh = is_end_homogeneous(s, seq, k)?;
    let base_set = seq.base_set();
    let mut split = None;
    let split_searched = eh.holds;
    if eh.holds {
        for combo in increasing_tuples(len, k) {
            let blocks: Vec<Vec<Elem>> = combo.iter().map(|&i| seq.items[i].clone()).collect();
            let mut pool: BTreeSet<Elem> = base_set.clone();
            for it in &seq.items[..combo[0]] {
                pool.extend(it.iter().copied());
            }
            let pt = PartitionedType {
                blocks,
                params: pool.into_iter().collect(),
            };
            if let Some(w) = k_splits_over(s, &pt, &base_set, witness_len, budget)? {
                split = Some((combo, w));
                break;
            }
        }
    }
    let hypotheses_hold = eh.holds && split.is_none();
    let mut indiscernible = true;
    let mut first_failing_width = None;
    for n in 1..=len {
        if !is_n_indiscernible(s, seq, n)?.holds {
            indiscernible = false;
            first_failing_width = Some(n);
            break;
        }
    }
    Ok(CriterionReport {
        width: k,
        witness_len,
        sufficient_witness_len: len.saturating_sub(k) * seq.item_len(),
        end_homogeneous: eh.holds,
        end_hom_violation: eh.violation,
        split_searched,
        split,
        hypotheses_hold,
        indiscernible,
        first_failing_width,
        implication_holds: !hypotheses_hold || indiscernible,
    })
}

// ---------------------------------------------------------------------------
// Extraction.
// ---------------------------------------------------------------------------

/// Order-preserving homogeneous subset for a coloring of increasing k-tuples.
///
/// `pool` lists item ids in order; `color` is consulted on increasing tuples
/// of those ids. The returned subsequence has all its increasing k-tuples
/// colored alike. The classic recursion applies: repeatedly homogenize the
/// tail against the head one width down, then keep the majority head color
/// (ties resolved toward the earliest head).
pub fn ramsey_homogeneous(
    pool: &[usize],
    k: usize,
    color: &mut dyn FnMut(&[usize]) -> u64,
) -> Vec<usize> {
    if k == 0 || pool.len() <= k {
        return pool.to_vec();
    }
    if k == 1 {
        let cols: Vec<u64> = pool.iter().map(|&x| color(&[x])).collect();
        let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
        for &c in &cols {
            *counts.entry(c).or_default() += 1;
        }
        let maxc = counts.values().copied().max().unwrap();
        let maj = cols.iter().copied().find(|c| counts[c] == maxc).unwrap();
        return pool
            .iter()
            .zip(&cols)
            .filter(|(_, &c)| c == maj)
            .map(|(&x, _)| x)
            .collect();
    }
    let mut s = pool.to_vec();
    let mut pre: Vec<(usize, u64)> = Vec::new();
    let leftover;
    loop {
        if s.len() < k {
            leftover = s;
            break;
        }
        let head = s[0];
        let rest: Vec<usize> = s[1..].to_vec();
        let mut induced = |t: &[usize]| {
            let mut full = Vec::with_capacity(k);
            full.push(head);
            full.extend_from_slice(t);
            color(&full)
        };
        let h = ramsey_homogeneous(&rest, k - 1, &mut induced);
        if h.len() >= k - 1 {
            let mut full = Vec::with_capacity(k);
            full.push(head);
            full.extend_from_slice(&h[..k - 1]);
            let chi = color(&full);
            pre.push((head, chi));
            s = h;
        } else {
            let mut l = vec![head];
            l.extend_from_slice(&h);
            leftover = l;
            break;
        }
    }
    if pre.is_empty() {
        return leftover;
    }
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for (_, c) in &pre {
        *counts.entry(*c).or_default() += 1;
    }
    let maxc = counts.values().copied().max().unwrap();
    let maj = pre.iter().find(|(_, c)| counts[c] == maxc).unwrap().1;
    let mut out: Vec<usize> = pre
        .iter()
        .filter(|(_, c)| *c == maj)
        .map(|&(h, _)| h)
        .collect();
    out.extend(leftover);
    out
}

/// Extracts a width-k end-homogeneous subsequence: repeatedly homogenize the
/// remaining pool with tuple colors taken over the base joined with the items
/// chosen so far, then promote the first element of the homogeneous pool.
/// Returns the chosen item indices in order.
pub fn end_homogenize(
    s: &Structure,
    base: &[Elem],
    items: &[Vec<Elem>],
    k: usize,
) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidParams("width must be positive".into()));
    }
    let seq = Sequence {
        base: base.to_vec(),
        items: items.to_vec(),
    };
    validate_sequence(s, &seq)?;
    let relational = s.sig.is_relational();
    let mut chosen = Vec::new();
    let mut pool: Vec<usize> = (0..items.len()).collect();
    let mut params: BTreeSet<Elem> = base.iter().copied().collect();
    while !pool.is_empty() {
        let head = {
            let mut memo: HashMap<Vec<usize>, u64> = HashMap::new();
            let mut keys: HashMap<TypeKey, u64> = HashMap::new();
            let mut reps: Vec<Vec<Elem>> = Vec::new();
            let mut color = |t: &[usize]| -> u64 {
                if let Some(&c) = memo.get(t) {
                    return c;
                }
                let tup: Vec<Elem> = t.iter().flat_map(|&i| items[i].iter().copied()).collect();
                let c = if relational {
                    let key = type_key(s, &params, &tup).expect("validated relational input");
                    let next = keys.len() as u64;
                    *keys.entry(key).or_insert(next)
                } else {
                    match reps
                        .iter()
                        .position(|r| qf_type_equal(s, r, &tup, &params).expect("validated input"))
                    {
                        Some(i) => i as u64,
                        None => {
                            reps.push(tup);
                            (reps.len() - 1) as u64
                        }
                    }
                };
                memo.insert(t.to_vec(), c);
                c
            };
            let h = ramsey_homogeneous(&pool, k, &mut color);
            pool = h[1..].to_vec();
            h[0]
        };
        chosen.push(head);
        params.extend(items[head].iter().copied());
    }
    Ok(chosen)
}

// ---------------------------------------------------------------------------
// Splitting chains and minimal bases.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainReport {
    pub stage_witnesses: Vec<Option<SplitWitness>>,
    /// Stages witnessed from the bottom before the first gap.
    pub chain_length: usize,
    pub complete: bool,
}

/// Checks a chain of base sets: for each stage but the last, whether the
/// blocks split over that stage with witnesses drawn from the final stage.
pub fn find_splitting_chain(
    s: &Structure,
    blocks: &[Vec<Elem>],
    stages: &[Vec<Elem>],
    witness_len: usize,
    budget: &mut Budget,
) -> Result<ChainReport> {
    if stages.is_empty() {
        return Err(Error::InvalidParams(
            "a chain needs at least one stage".into(),
        ));
    }
    let pt = PartitionedType {
        blocks: blocks.to_vec(),
        params: stages.last().unwrap().clone(),
    };
    let mut stage_witnesses = Vec::new();
    for stage in &stages[..stages.len() - 1] {
        let c: BTreeSet<Elem> = stage.iter().copied().collect();
        stage_witnesses.push(k_splits_over(s, &pt, &c, witness_len, budget)?);
    }
    let chain_length = stage_witnesses.iter().take_while(|w| w.is_some()).count();
    let complete = chain_length == stage_witnesses.len();
    Ok(ChainReport {
        stage_witnesses,
        chain_length,
        complete,
    })
}

/// First subset of `candidates` of size at most `cap` (smallest size, then
/// lexicographic) over which the partitioned type does not split. `None`
/// when every subset within the cap admits a witness.
pub fn minimal_nonsplitting_base(
    s: &Structure,
    pt: &PartitionedType,
    candidates: &[Elem],
    cap: usize,
    witness_len: usize,
    budget: &mut Budget,
) -> Result<Option<Vec<Elem>>> {
    let cand: Vec<Elem> = candidates
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    for size in 0..=cand.len().min(cap) {
        for subset in increasing_tuples(cand.len(), size) {
            budget.step(1)?;
            let c: BTreeSet<Elem> = subset.iter().map(|&i| cand[i]).collect();
            if k_splits_over(s, pt, &c, witness_len, budget)?.is_none() {
                return Ok(Some(c.into_iter().collect()));
            }
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{RelDecl, Signature};

    fn edge_structure() -> (Structure, Elem, Elem, Elem) {
        let sig = Signature::relational(
            vec!["V".into()],
            vec![RelDecl {
                name: "E".into(),
                profile: vec![0, 0],
            }],
        );
        let mut s = Structure::new(sig);
        let a = s.add_elem(0);
        let b = s.add_elem(0);
        let bp = s.add_elem(0);
        s.add_rel_tuple(0, vec![a, b]).unwrap();
        (s, a, b, bp)
    }

    #[test]
    fn single_edge_splits() {
        let (s, a, b, bp) = edge_structure();
        let pt = PartitionedType {
            blocks: vec![vec![a]],
            params: vec![b, bp],
        };
        let mut budget = Budget::default();
        let w = k_splits_over(&s, &pt, &BTreeSet::new(), 2, &mut budget)
            .unwrap()
            .unwrap();
        assert_eq!(
            (w.len, w.b.clone(), w.b_prime.clone()),
            (1, vec![b], vec![bp])
        );
        let w2 = k_splits_over_strategy(
            &s,
            &pt,
            &BTreeSet::new(),
            2,
            &mut Budget::default(),
            SplitStrategy::Pairwise,
        )
        .unwrap()
        .unwrap();
        assert_eq!((w2.len, w2.b, w2.b_prime), (1, w.b, w.b_prime));
    }

    #[test]
    fn anchored_base_blocks_split() {
        // With the edge endpoint in the base, the witnesses are told apart
        // there already, so no pair survives the equal-type requirement.
        let (s, a, b, bp) = edge_structure();
        let pt = PartitionedType {
            blocks: vec![vec![a]],
            params: vec![b, bp],
        };
        let base: BTreeSet<Elem> = [b].into_iter().collect();
        let mut budget = Budget::default();
        assert!(k_splits_over(&s, &pt, &base, 2, &mut budget)
            .unwrap()
            .is_none());
    }

    #[test]
    fn budget_is_enforced() {
        let (s, a, b, bp) = edge_structure();
        let pt = PartitionedType {
            blocks: vec![vec![a]],
            params: vec![b, bp],
        };
        let mut budget = Budget::new(1);
        let err = k_splits_over(&s, &pt, &BTreeSet::new(), 2, &mut budget).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }

    #[test]
    fn ramsey_output_is_homogeneous() {
        // Color pairs by parity of their sum; check the result by brute force.
        let pool: Vec<usize> = (0..9).collect();
        let mut color = |t: &[usize]| (t.iter().sum::<usize>() % 2) as u64;
        let h = ramsey_homogeneous(&pool, 2, &mut color);
        assert!(h.len() >= 2);
        let mut seen = BTreeSet::new();
        for c in increasing_tuples(h.len(), 2) {
            seen.insert(color(&[h[c[0]], h[c[1]]]));
        }
        assert_eq!(seen.len(), 1);
        // Order preserved.
        let mut sorted = h.clone();
        sorted.sort_unstable();
        assert_eq!(h, sorted);
    }
}
