//! Randomized invariants: the indiscernibility criterion can never be
//! refuted at a sufficient witness length, amalgams stay valid and free,
//! saturated block counts kill splitting, short tuples in injectively
//! colored models are classified by their equality pattern alone, and
//! class-based relations admit no two-step order pattern.

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ksplit_core::detect::{
    k_splits_over, verify_indiscernibility_criterion, Budget, PartitionedType, Sequence,
};
use ksplit_core::gallery::{
    extend_with_fresh, find_order_property, free_amalgam, random_equiv_k, staged_equiv_witness,
    EquivKModel,
};
use ksplit_core::grid::{enumerate_downright, verify_wedge_decomposition, DownrightGrid};
use ksplit_core::structure::{qf_type_equal, Elem};

fn increasing_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(n: usize, k: usize, from: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in from..n {
            cur.push(i);
            rec(n, k, i + 1, cur, out);
            cur.pop();
        }
    }
    rec(n, k, 0, &mut cur, &mut out);
    out
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    /// At the sufficient witness length, hypotheses passing forces the
    /// conclusion; the report can never come back with a broken implication.
    #[test]
    fn criterion_implication_never_refuted(
        seed in 0u64..1u64 << 48,
        n in 4usize..9,
        colors in 2u64..6,
        width in 1usize..4,
        take in 3usize..7,
    ) {
        let model = random_equiv_k(n, 2, colors, seed).unwrap();
        let s = model.to_structure();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd1ce);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in (1..pool.len()).rev() {
            pool.swap(i, rng.gen_range(0..=i));
        }
        let take = take.min(n);
        let mut picked: Vec<usize> = pool[..take].to_vec();
        picked.sort_unstable();
        let items: Vec<Vec<Elem>> =
            picked.iter().map(|&i| vec![Elem { sort: 0, idx: i }]).collect();
        let seq = Sequence { base: vec![], items };
        let width = width.min(take);
        let sufficient = (take - width).max(1);
        let mut budget = Budget::new(100_000_000);
        let rep = verify_indiscernibility_criterion(&s, &seq, width, sufficient, &mut budget)
            .unwrap();
        prop_assert!(
            rep.implication_holds,
            "seed {seed}: hypotheses hold but width {:?} fails",
            rep.first_failing_width
        );
    }

    /// Gluing along a shared segment keeps both sides' class patterns intact
    /// and relates nothing else: every straddling subset is alone in its
    /// class.
    #[test]
    fn amalgam_is_valid_and_free(
        seed in 0u64..1u64 << 48,
        nl in 2usize..6,
        nr in 2usize..6,
        shared_raw in 0usize..6,
        colors in 1u64..5,
    ) {
        let shared = shared_raw.min(nl).min(nr);
        let left = random_equiv_k(nl, 2, colors, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xa3a1);
        let mut color = std::collections::BTreeMap::new();
        for s in increasing_subsets(nr, 2) {
            let c = if s.iter().all(|&i| i < shared) {
                left.color[&s]
            } else {
                1000 + rng.gen_range(0..colors.max(2))
            };
            color.insert(s, c);
        }
        let right = EquivKModel { n: nr, k: 2, color };
        let glued = free_amalgam(&left, &right, shared).unwrap();
        glued.validate().unwrap();
        prop_assert_eq!(glued.n, nl + nr - shared);
        // Left pattern preserved verbatim.
        let ls = increasing_subsets(nl, 2);
        for u in &ls {
            for v in &ls {
                prop_assert_eq!(
                    glued.color[u] == glued.color[v],
                    left.color[u] == left.color[v]
                );
            }
        }
        // Right pattern preserved under the index shift.
        let shift = |s: &Vec<usize>| -> Vec<usize> {
            s.iter().map(|&i| if i < shared { i } else { i + nl - shared }).collect()
        };
        let rs = increasing_subsets(nr, 2);
        for u in &rs {
            for v in &rs {
                prop_assert_eq!(
                    glued.color[&shift(u)] == glued.color[&shift(v)],
                    right.color[u] == right.color[v]
                );
            }
        }
        // Straddling subsets are fresh singleton classes.
        let mut seen = std::collections::BTreeMap::new();
        for (s, c) in &glued.color {
            *seen.entry(*c).or_insert(0usize) += 1;
            let _ = s;
        }
        for (s, c) in &glued.color {
            let pure_left = s.iter().all(|&i| i < nl);
            let pure_right = s.iter().all(|&i| i < shared || i >= nl);
            if !pure_left && !pure_right {
                prop_assert_eq!(seen[c], 1, "straddler {:?} shares class {}", s, c);
            }
        }
    }
}

#[test]
fn saturated_block_count_never_splits() {
    // With as many blocks as the relation arity, every atom that mentions a
    // candidate witness misses a block, so agreement over the drop-one sets
    // pins the whole joined type.
    for k in [2usize, 3] {
        let w = staged_equiv_witness(k, 2).unwrap();
        let grown = extend_with_fresh(&w.model, 2);
        let s = grown.to_structure();
        let e = |i: usize| Elem { sort: 0, idx: i };
        let mut blocks: Vec<Vec<Elem>> = w.a.iter().map(|&i| vec![e(i)]).collect();
        blocks.push(vec![e(w.model.n)]);
        blocks.push(vec![e(w.model.n + 1)]);
        assert_eq!(blocks.len(), 2 * k);
        let pool: Vec<Elem> =
            w.b.iter()
                .chain(w.c.iter())
                .chain(w.b_prime.iter())
                .chain(w.c_prime.iter())
                .map(|&i| e(i))
                .collect();
        let pt = PartitionedType {
            blocks,
            params: pool,
        };
        for len in 1..=2usize {
            let mut budget = Budget::new(200_000_000);
            let got = k_splits_over(&s, &pt, &BTreeSet::new(), len, &mut budget).unwrap();
            assert_eq!(got, None, "k {k}, len {len}");
        }
    }
}

#[test]
fn injective_colorings_classify_short_tuples_by_equality_pattern() {
    // Distinct classes per subset: any two overlapping subsets relate only
    // when equal, which the equality pattern already records.
    for (n, k) in [(5usize, 2usize), (6, 2), (6, 3)] {
        let mut color = std::collections::BTreeMap::new();
        for (rank, s) in increasing_subsets(n, k).into_iter().enumerate() {
            color.insert(s, rank as u64);
        }
        let model = EquivKModel { n, k, color };
        model.validate().unwrap();
        let s = model.to_structure();
        let e = |i: usize| Elem { sort: 0, idx: i };
        let mut rng = ChaCha8Rng::seed_from_u64(0x1e55 + n as u64);
        let empty = BTreeSet::new();
        for _ in 0..300 {
            let m = rng.gen_range(1..2 * k);
            let a: Vec<Elem> = (0..m).map(|_| e(rng.gen_range(0..n))).collect();
            let b: Vec<Elem> = (0..m).map(|_| e(rng.gen_range(0..n))).collect();
            let pat = |t: &[Elem]| -> Vec<usize> {
                t.iter()
                    .map(|x| t.iter().position(|y| y == x).unwrap())
                    .collect()
            };
            let want = pat(&a) == pat(&b);
            let got = qf_type_equal(&s, &a, &b, &empty).unwrap();
            assert_eq!(got, want, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn class_coincidences_break_the_pattern_rule() {
    // Two overlapping pairs in one class: the tuples (0,1,2) and (0,1,3)
    // share an equality pattern yet differ over nothing, because one linked
    // atom survives the swap and the other does not.
    let mut color = std::collections::BTreeMap::new();
    let mut next = 1u64;
    for s in increasing_subsets(4, 2) {
        if s == [0, 1] || s == [1, 2] {
            color.insert(s, 0);
        } else {
            color.insert(s, next);
            next += 1;
        }
    }
    let model = EquivKModel { n: 4, k: 2, color };
    model.validate().unwrap();
    let s = model.to_structure();
    let e = |i: usize| Elem { sort: 0, idx: i };
    let equal = qf_type_equal(
        &s,
        &[e(0), e(1), e(2)],
        &[e(0), e(1), e(3)],
        &BTreeSet::new(),
    )
    .unwrap();
    assert!(!equal, "the coincidence E({{0,1}},{{1,2}}) pins index 2");
}

#[test]
fn class_relations_admit_no_two_step_order_pattern() {
    // A first row related to every column forces all columns into one
    // class, leaving nothing for a second row to disagree on.
    for seed in 0..12u64 {
        let model = random_equiv_k(6, 2, 3, 0xc0de + seed).unwrap();
        let s = model.to_structure();
        let rel = s.rel_id("E").unwrap();
        let mut budget = Budget::new(500_000_000);
        let found = find_order_property(&s, rel, 2, 2, &mut budget).unwrap();
        assert_eq!(found, None, "seed {seed} produced {found:?}");
        if !s.rel_interp[rel].is_empty() {
            let mut budget = Budget::new(500_000_000);
            let one = find_order_property(&s, rel, 2, 1, &mut budget).unwrap();
            assert!(one.is_some(), "length one only needs a related pair");
        }
    }
}

#[test]
fn wedge_decomposition_holds_at_every_small_size() {
    for depth in 1..=3usize {
        for branching in 1..=3u8 {
            let rep = verify_wedge_decomposition(depth, branching).unwrap();
            assert!(
                rep.holds,
                "depth {depth} branching {branching}: {:?}",
                rep.failures
            );
        }
    }
}

#[test]
fn downright_grid_enumeration_counts_and_round_trips() {
    // Downright-closed subsets of an n-by-n grid are counted by the central
    // binomial coefficient: lattice paths over the boundary staircase.
    let expect = [2usize, 6, 20, 70];
    for n in 1..=4usize {
        let all = enumerate_downright(n);
        assert_eq!(all.len(), expect[n - 1], "size {n}");
        for g in &all {
            let p = g.profile();
            let back = DownrightGrid::from_profile(&p).unwrap();
            assert_eq!(&back, g);
        }
    }
}
