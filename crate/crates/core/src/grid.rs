//! Leaves of complete finitely-branching trees, wedge decompositions of
//! leaf-pair sets, downright-closed grids with their staircase profiles, and
//! the four-leaf order pattern.
//!
//! Leaves of depth d are symbol vectors of length d, ordered
//! lexicographically. The wedge comparison asks whether the meet with a
//! fixed leaf sits strictly below the meet of the pair; the decomposition
//! lemma states that the wedge set over a leaf is the difference of two
//! downright-closed pair sets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Node = Vec<u8>;

/// Set of index pairs: wedge leaf pairs or grid cells.
pub type PairSet = BTreeSet<(usize, usize)>;

/// Longest common prefix.
pub fn meet(a: &[u8], b: &[u8]) -> Node {
    a.iter()
        .zip(b)
        .take_while(|(x, y)| x == y)
        .map(|(&x, _)| x)
        .collect()
}

/// Proper initial segment.
pub fn strictly_below(a: &[u8], b: &[u8]) -> bool {
    a.len() < b.len() && b[..a.len()] == *a
}

/// All leaves of the complete tree of the given depth and branching factor,
/// in lexicographic order.
pub fn leaves(depth: usize, branching: u8) -> Vec<Node> {
    let mut out = vec![Vec::new()];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(out.len() * branching as usize);
        for l in out {
            for sym in 0..branching {
                let mut a = l.clone();
                a.push(sym);
                next.push(a);
            }
        }
        out = next;
    }
    out
}

/// The three pair sets over a fixed leaf, as index pairs into `leaves(depth)`:
/// - wedge: later pairs whose meet sits strictly above the meet with the leaf;
/// - cover: the wedge condition relaxed by allowing out-of-order pairs;
/// - order: the out-of-order pairs themselves.
pub fn wedge_sets(depth: usize, branching: u8, eta: &[u8]) -> (PairSet, PairSet, PairSet) {
    let lv = leaves(depth, branching);
    let mut x = BTreeSet::new();
    let mut y = BTreeSet::new();
    let mut z = BTreeSet::new();
    for (i, nu) in lv.iter().enumerate() {
        for (j, xi) in lv.iter().enumerate() {
            let wedge = strictly_below(&meet(eta, nu), &meet(nu, xi));
            if eta < nu && nu < xi && wedge {
                x.insert((i, j));
            }
            if eta < nu && (wedge || nu >= xi) {
                y.insert((i, j));
            }
            if nu >= xi {
                z.insert((i, j));
            }
        }
    }
    (x, y, z)
}

/// Downright closure over an n-by-n index grid: every cell keeps all cells
/// with a later row and an earlier column. Checking the two unit steps
/// suffices.
pub fn is_downright_closed(n: usize, cells: &PairSet) -> bool {
    cells.iter().all(|&(i, j)| {
        (i + 1 >= n || cells.contains(&(i + 1, j))) && (j == 0 || cells.contains(&(i, j - 1)))
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WedgeReport {
    pub depth: usize,
    pub branching: u8,
    pub leaves_checked: usize,
    pub holds: bool,
    /// Leaves (by index) where some part of the decomposition failed.
    pub failures: Vec<(usize, String)>,
}

/// Checks, for every leaf of the given depth, that the wedge set is exactly
/// the difference of the cover and order sets and that both of those are
/// downright closed.
pub fn verify_wedge_decomposition(depth: usize, branching: u8) -> Result<WedgeReport> {
    if depth == 0 || branching == 0 {
        return Err(Error::InvalidParams(
            "depth and branching must be positive".into(),
        ));
    }
    // The check walks all leaf pairs per leaf, so leaf count is cubed.
    let count = (branching as u128)
        .checked_pow(u32::try_from(depth).unwrap_or(u32::MAX))
        .unwrap_or(u128::MAX);
    if depth > 64 || count > 300 {
        return Err(Error::InvalidParams(
            "tree depth or leaf count beyond desk scale".into(),
        ));
    }
    let lv = leaves(depth, branching);
    let n = lv.len();
    let mut failures = Vec::new();
    for (e, eta) in lv.iter().enumerate() {
        let (x, y, z) = wedge_sets(depth, branching, eta);
        let diff: PairSet = y.difference(&z).copied().collect();
        if x != diff {
            failures.push((e, "wedge set is not the set difference".to_string()));
        }
        if !is_downright_closed(n, &y) {
            failures.push((e, "cover set is not downright closed".to_string()));
        }
        if !is_downright_closed(n, &z) {
            failures.push((e, "order set is not downright closed".to_string()));
        }
    }
    Ok(WedgeReport {
        depth,
        branching,
        leaves_checked: n,
        holds: failures.is_empty(),
        failures,
    })
}

// ---------------------------------------------------------------------------
// Downright grids and staircase profiles.
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DownrightGrid {
    pub size: usize,
    pub cells: PairSet,
}

impl DownrightGrid {
    pub fn new(size: usize, cells: PairSet) -> Result<Self> {
        if cells.iter().any(|&(i, j)| i >= size || j >= size) {
            return Err(Error::InvalidParams("cell outside the grid".into()));
        }
        if !is_downright_closed(size, &cells) {
            return Err(Error::NotDownrightClosed);
        }
        Ok(DownrightGrid { size, cells })
    }

    /// Per row, the largest filled column (rows fill a prefix of columns).
    pub fn profile(&self) -> Vec<Option<usize>> {
        (0..self.size)
            .map(|i| {
                self.cells
                    .iter()
                    .filter(|&&(r, _)| r == i)
                    .map(|&(_, j)| j)
                    .max()
            })
            .collect()
    }

    /// Rebuilds the grid from a profile: row i carries columns 0..=f(i).
    /// The profile must be non-decreasing (empty rows first).
    pub fn from_profile(profile: &[Option<usize>]) -> Result<Self> {
        let rank = |p: &Option<usize>| p.map_or(0, |v| v + 1);
        if profile.windows(2).any(|w| rank(&w[0]) > rank(&w[1])) {
            return Err(Error::NotDownrightClosed);
        }
        let size = profile.len();
        if profile.iter().flatten().any(|&j| j >= size) {
            return Err(Error::InvalidParams(
                "profile column outside the grid".into(),
            ));
        }
        let mut cells = BTreeSet::new();
        for (i, p) in profile.iter().enumerate() {
            if let Some(f) = p {
                for j in 0..=*f {
                    cells.insert((i, j));
                }
            }
        }
        Ok(DownrightGrid { size, cells })
    }
}

/// All downright-closed grids of the given size, by enumerating
/// non-decreasing profiles in lexicographic order.
pub fn enumerate_downright(size: usize) -> Vec<DownrightGrid> {
    let mut out = Vec::new();
    let mut profile: Vec<Option<usize>> = Vec::with_capacity(size);
    fn rec(size: usize, profile: &mut Vec<Option<usize>>, out: &mut Vec<DownrightGrid>) {
        if profile.len() == size {
            out.push(DownrightGrid::from_profile(profile).expect("profiles are monotone"));
            return;
        }
        let floor = profile.last().copied().unwrap_or(None);
        let start = floor.map_or(0, |v| v);
        if floor.is_none() {
            profile.push(None);
            rec(size, profile, out);
            profile.pop();
        }
        for v in start..size {
            profile.push(Some(v));
            rec(size, profile, out);
            profile.pop();
        }
    }
    rec(size, &mut profile, &mut out);
    out
}

// ---------------------------------------------------------------------------
// Four-leaf order pattern.
// ---------------------------------------------------------------------------

/// The strict four-leaf pattern: leaves in increasing order where the meet of
/// the outer-second pair sits strictly below the meet of the first pair, and
/// the meet of the first-with-third sits strictly below the meet of the last
/// pair.
pub fn is_order_quad(q: &[&[u8]; 4]) -> bool {
    q[0] < q[1]
        && q[1] < q[2]
        && q[2] < q[3]
        && strictly_below(&meet(q[1], q[3]), &meet(q[0], q[1]))
        && strictly_below(&meet(q[0], q[2]), &meet(q[2], q[3]))
}

/// All valid quads at the given depth, as leaf indices in lexicographic
/// order of the quadruple.
pub fn order_quads(depth: usize) -> Vec<[usize; 4]> {
    let lv = leaves(depth, 2);
    let n = lv.len();
    let mut out = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                for d in c + 1..n {
                    if is_order_quad(&[&lv[a], &lv[b], &lv[c], &lv[d]]) {
                        out.push([a, b, c, d]);
                    }
                }
            }
        }
    }
    out
}
