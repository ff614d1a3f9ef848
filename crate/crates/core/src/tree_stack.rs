//! A tower of binary trees with transfer maps between adjacent trees, the
//! term that chains those maps, and verifiers for the generated-closure and
//! transfer-isomorphism laws at finite scale.
//!
//! The model has one tree per binary string of length at most k. Each tree's
//! nodes are binary strings of height at most L*Bc, grouped into bands of L
//! levels. Every tree carries its prefix order, a meet, and a blocked
//! successor-toward (stepping onto a band boundary is refused); every tree of
//! length < k carries one transfer map per child. The transfer map along the
//! all-zeros spine sends the band of the branching point at band d to the
//! next tree's bookmark for band d (or, from the last spine tree, to one of
//! two antipodal long branches picked by the parity of d), and everything
//! else to the child's root.
//!
//! The verifiers never materialize a tree: a closure is an implicit core
//! (all nodes below a height threshold, in every tree) plus an explicit set
//! of extras. Meets, successors, and prefix facts between a core node and
//! anything else are decided by a prefix rule; the only operation that
//! escapes the core is the transfer map on band nodes, covered by a symbolic
//! scan.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::structure::{Elem, FnDecl, RelDecl, Signature, Structure};
use crate::{Error, Result};

/// A binary string of bounded length: bit i is (bits >> i) & 1, bit 0 being
/// the symbol next to the root. Invariant: bits < 2^len.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MNode {
    pub len: u8,
    pub bits: u32,
}

impl MNode {
    pub const ROOT: MNode = MNode { len: 0, bits: 0 };

    pub fn zeros(n: usize) -> MNode {
        MNode {
            len: n as u8,
            bits: 0,
        }
    }

    pub fn ones(n: usize) -> MNode {
        MNode {
            len: n as u8,
            bits: ((1u64 << n) - 1) as u32,
        }
    }

    pub fn push(self, bit: u8) -> MNode {
        MNode {
            len: self.len + 1,
            bits: self.bits | ((bit as u32) << self.len),
        }
    }

    pub fn prefix(self, n: usize) -> MNode {
        MNode {
            len: n as u8,
            bits: self.bits & (((1u64 << n) - 1) as u32),
        }
    }

    pub fn is_prefix_of(self, other: MNode) -> bool {
        self.len <= other.len && other.prefix(self.len as usize) == self
    }

    pub fn meet(self, other: MNode) -> MNode {
        let diff = self.bits ^ other.bits;
        let agree = if diff == 0 { 32 } else { diff.trailing_zeros() } as u8;
        let n = self.len.min(other.len).min(agree);
        self.prefix(n as usize)
    }

    pub fn bit(self, i: usize) -> u8 {
        ((self.bits >> i) & 1) as u8
    }
}

impl fmt::Debug for MNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len == 0 {
            return write!(f, "e");
        }
        for i in 0..self.len as usize {
            write!(f, "{}", self.bit(i))?;
        }
        Ok(())
    }
}

impl fmt::Display for MNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A node of one tree of the tower: which tree, then which node inside it.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MElem {
    pub tree: MNode,
    pub node: MNode,
}

impl fmt::Debug for MElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.node, self.tree)
    }
}

impl fmt::Display for MElem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Parameters of the tower: k trees on the zero spine (and all other trees
/// indexed by strings of length <= k), bands of l levels, bc bands.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ModelM {
    pub k: usize,
    pub l: usize,
    pub bc: usize,
}

impl ModelM {
    pub fn new(k: usize, l: usize, bc: usize) -> Result<ModelM> {
        if k < 2 {
            return Err(Error::InvalidParams("need at least two spine trees".into()));
        }
        if l < 2 || bc < 1 {
            return Err(Error::InvalidParams(
                "need band height >= 2 and >= 1 band".into(),
            ));
        }
        if l * bc > 30 || k > 12 {
            return Err(Error::InvalidParams(
                "tower too tall for packed nodes".into(),
            ));
        }
        Ok(ModelM { k, l, bc })
    }

    /// Maximum node height; every named point lives at or below it.
    pub fn height(&self) -> usize {
        self.l * self.bc
    }

    /// All tree indices, by (length, bits).
    pub fn trees(&self) -> Vec<MNode> {
        let mut out = Vec::new();
        for len in 0..=self.k {
            for bits in 0..(1u32 << len) {
                out.push(MNode {
                    len: len as u8,
                    bits,
                });
            }
        }
        out
    }

    /// The long zero branch of spine tree i.
    pub fn a(&self, i: usize) -> MElem {
        MElem {
            tree: MNode::zeros(i),
            node: MNode::zeros(self.height()),
        }
    }

    /// The long one branch of the last spine tree.
    pub fn a_prime(&self) -> MElem {
        MElem {
            tree: MNode::zeros(self.k - 1),
            node: MNode::ones(self.height()),
        }
    }

    /// Branching point of band d: the zero chain down to the band floor,
    /// then a single one.
    pub fn c_node(&self, d: usize) -> MNode {
        MNode::zeros(self.l * d).push(1)
    }

    /// Bookmark of band d: the zero chain to the band floor, then ones to
    /// the next floor.
    pub fn b_node(&self, d: usize) -> MNode {
        let mut n = MNode::zeros(self.l * d);
        for _ in 0..self.l {
            n = n.push(1);
        }
        n
    }

    /// Bookmark of band d placed in spine tree j.
    pub fn b(&self, j: usize, d: usize) -> MElem {
        MElem {
            tree: MNode::zeros(j),
            node: self.b_node(d),
        }
    }

    /// Nodes strictly below height l*beta form the implicit core.
    pub fn is_core(&self, e: &MElem, beta: usize) -> bool {
        (e.node.len as usize) < self.l * beta
    }

    /// Number of core nodes at threshold beta, across all trees.
    pub fn core_size(&self, beta: usize) -> u64 {
        let per_tree = (1u64 << (self.l * beta)) - 1;
        per_tree * self.trees().len() as u64
    }

    /// Successor of s toward t: the one-longer prefix of t when s is a
    /// proper prefix of t and the step does not land on a band boundary;
    /// otherwise t itself.
    pub fn suc(&self, s: MNode, t: MNode) -> MNode {
        let n = s.len as usize + 1;
        if s.len < t.len && s.is_prefix_of(t) && !n.is_multiple_of(self.l) {
            t.prefix(n)
        } else {
            t
        }
    }

    /// The band a node sits in, if it sits strictly inside one above its
    /// branching point: height in [l*d+1, l*(d+1)) and the node extends
    /// c(d).
    pub fn band_of(&self, node: MNode) -> Option<usize> {
        let h = node.len as usize;
        if h == 0 || h.is_multiple_of(self.l) {
            return None;
        }
        let d = (h - 1) / self.l;
        if self.c_node(d).is_prefix_of(node) {
            Some(d)
        } else {
            None
        }
    }

    /// Transfer map from `tree` to its `bit`-child, applied to `node`.
    /// Band nodes of a spine tree's zero-child map move to the next
    /// bookmark, or from the last interior spine tree to a long branch
    /// picked by band parity; everything else lands on the child's root.
    pub fn g(&self, tree: MNode, bit: u8, node: MNode) -> MElem {
        let child = tree.push(bit);
        let j = tree.len as usize;
        if tree.bits == 0 && bit == 0 && j + 2 <= self.k {
            if let Some(d) = self.band_of(node) {
                if j + 2 < self.k {
                    return MElem {
                        tree: child,
                        node: self.b_node(d),
                    };
                }
                return if d % 2 == 0 {
                    self.a(self.k - 1)
                } else {
                    self.a_prime()
                };
            }
        }
        MElem {
            tree: child,
            node: MNode::ROOT,
        }
    }

    /// Materialize the core below threshold beta; refused above `cap`
    /// elements so a typo cannot allocate the tower.
    pub fn m_beta(&self, beta: usize, cap: usize) -> Result<Vec<MElem>> {
        if self.core_size(beta) > cap as u64 {
            return Err(Error::InvalidParams(format!(
                "core at threshold {beta} has {} nodes, cap is {cap}",
                self.core_size(beta)
            )));
        }
        let mut out = Vec::new();
        for tree in self.trees() {
            for len in 0..(self.l * beta) {
                for bits in 0..(1u32 << len) {
                    out.push(MElem {
                        tree,
                        node: MNode {
                            len: len as u8,
                            bits,
                        },
                    });
                }
            }
        }
        Ok(out)
    }

    fn check_stage(&self, i: usize, beta: usize, gamma: usize) -> Result<()> {
        if i >= self.k {
            return Err(Error::InvalidParams(format!(
                "spine index {i} out of range"
            )));
        }
        if beta > self.bc || gamma >= self.bc || gamma < beta {
            return Err(Error::InvalidParams(format!(
                "need threshold <= {} and band in [{beta}, {})",
                self.bc, self.bc
            )));
        }
        Ok(())
    }

    /// Explicit generators for the closure at (i, beta, gamma): every long
    /// zero branch except the i-th, and the band-gamma bookmark of the root
    /// tree. The core at threshold beta is an implicit extra generator.
    pub fn generators(&self, i: usize, beta: usize, gamma: usize) -> Result<Vec<MElem>> {
        self.check_stage(i, beta, gamma)?;
        let mut out = Vec::new();
        for j in 0..self.k {
            if j != i {
                out.push(self.a(j));
            }
        }
        out.push(self.b(0, gamma));
        Ok(out)
    }
}

/// A generated set: every node below the threshold in every tree, plus the
/// listed extras (none of which are core nodes).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosureSet {
    pub beta: usize,
    pub extras: BTreeSet<MElem>,
}

impl ClosureSet {
    pub fn contains(&self, m: &ModelM, e: &MElem) -> bool {
        m.is_core(e, self.beta) || self.extras.contains(e)
    }

    pub fn size(&self, m: &ModelM) -> u64 {
        m.core_size(self.beta) + self.extras.len() as u64
    }
}

/// Closure of the core at `beta` together with `seeds` under meet,
/// successor-toward, and the transfer maps.
///
/// Core-core and core-extra meets and successors never leave the core
/// (results are prefixes below the threshold, or the blocked argument
/// itself), so only extra-extra pairs are enumerated. The transfer map does
/// escape the core, exactly on band nodes, and those images are added by a
/// symbolic scan over (spine tree, band) pairs instead of node enumeration.
pub fn generated_closure(m: &ModelM, beta: usize, seeds: &[MElem]) -> ClosureSet {
    let mut extras: BTreeSet<MElem> = BTreeSet::new();
    let mut frontier: Vec<MElem> = Vec::new();
    let add = |e: MElem, extras: &mut BTreeSet<MElem>, frontier: &mut Vec<MElem>| {
        if !m.is_core(&e, beta) && extras.insert(e) {
            frontier.push(e);
        }
    };
    for &s in seeds {
        add(s, &mut extras, &mut frontier);
    }
    // Transfer images of core nodes: every band d < beta of every interior
    // spine tree is fully inside the core, and its image is one point.
    for j in 0..m.k.saturating_sub(1) {
        for d in 0..beta {
            let img = m.g(MNode::zeros(j), 0, m.c_node(d));
            add(img, &mut extras, &mut frontier);
        }
    }
    while let Some(x) = frontier.pop() {
        let peers: Vec<MElem> = extras
            .iter()
            .copied()
            .filter(|y| y.tree == x.tree)
            .collect();
        let mut produced: Vec<MElem> = Vec::new();
        for y in peers {
            produced.push(MElem {
                tree: x.tree,
                node: x.node.meet(y.node),
            });
            produced.push(MElem {
                tree: x.tree,
                node: m.suc(x.node, y.node),
            });
            produced.push(MElem {
                tree: x.tree,
                node: m.suc(y.node, x.node),
            });
        }
        if (x.tree.len as usize) < m.k {
            produced.push(m.g(x.tree, 0, x.node));
            produced.push(m.g(x.tree, 1, x.node));
        }
        // Successors from core nodes toward x stop at the threshold (the
        // step onto it is blocked), so they add nothing new; meets with
        // core nodes are core. Only the extras above matter.
        for e in produced {
            add(e, &mut extras, &mut frontier);
        }
    }
    ClosureSet { beta, extras }
}

/// The closure the law predicts for generators(i, beta, gamma), built from
/// the rule list rather than by iteration.
pub fn expected_closure(m: &ModelM, i: usize, beta: usize, gamma: usize) -> Result<ClosureSet> {
    m.check_stage(i, beta, gamma)?;
    let mut extras: BTreeSet<MElem> = BTreeSet::new();
    let add = |e: MElem, extras: &mut BTreeSet<MElem>| {
        if !m.is_core(&e, beta) {
            extras.insert(e);
        }
    };
    // Roots: every non-root tree always; the root tree's root only when it
    // is in the core or arises as a meet (missing zero branch present and
    // the bookmark branches immediately).
    for tree in m.trees() {
        if tree.len > 0 {
            add(
                MElem {
                    tree,
                    node: MNode::ROOT,
                },
                &mut extras,
            );
        }
    }
    if beta >= 1 || (i >= 1 && gamma == 0) {
        add(
            MElem {
                tree: MNode::ROOT,
                node: MNode::ROOT,
            },
            &mut extras,
        );
    }
    // Generators.
    for g in m.generators(i, beta, gamma)? {
        add(g, &mut extras);
    }
    // Transfer images of core bands.
    if beta >= 1 {
        for d in 0..beta {
            for j in 1..=m.k.saturating_sub(2) {
                add(m.b(j, d), &mut extras);
            }
        }
        add(m.a(m.k - 1), &mut extras);
        if beta >= 2 {
            add(m.a_prime(), &mut extras);
        }
    }
    // Ladders: in every spine tree before the missing branch, the meet of
    // the long branch with the bookmark opens band gamma on both sides.
    for j in 0..i {
        let tree = MNode::zeros(j);
        for n in 0..m.l {
            add(
                MElem {
                    tree,
                    node: MNode::zeros(m.l * gamma + n),
                },
                &mut extras,
            );
        }
        let mut c = m.c_node(gamma);
        for _ in 0..m.l - 1 {
            add(MElem { tree, node: c }, &mut extras);
            c = c.push(1);
        }
    }
    // Bookmarks pushed forward by the transfer map, one tree past each
    // ladder, stopping at the missing branch or the end of the interior.
    for j in 1..=i.min(m.k.saturating_sub(2)) {
        add(m.b(j, gamma), &mut extras);
    }
    // With every long branch present, the push reaches the last tree and
    // picks a long branch by parity.
    if i == m.k - 1 {
        let tgt = if gamma.is_multiple_of(2) {
            m.a(m.k - 1)
        } else {
            m.a_prime()
        };
        add(tgt, &mut extras);
    }
    if beta == 0 {
        // Band-zero bookmarks sit directly above the root, so the climb
        // from the root regenerates band zero and the push crosses every
        // remaining interior tree.
        if gamma == 0 && i >= 1 {
            for j in 1..=m.k.saturating_sub(2) {
                add(m.b(j, 0), &mut extras);
            }
            add(m.a(m.k - 1), &mut extras);
        }
        // Climbs: in any tree whose root is present, the successor walks
        // from the root toward each known node, stopping under the first
        // band boundary.
        let targets: Vec<MElem> = extras.iter().copied().filter(|e| e.node.len > 0).collect();
        let have_root: BTreeSet<MNode> = extras
            .iter()
            .filter(|e| e.node == MNode::ROOT)
            .map(|e| e.tree)
            .collect();
        for t in targets {
            if !have_root.contains(&t.tree) {
                continue;
            }
            for n in 1..m.l.min(t.node.len as usize) {
                add(
                    MElem {
                        tree: t.tree,
                        node: t.node.prefix(n),
                    },
                    &mut extras,
                );
            }
        }
    }
    Ok(ClosureSet { beta, extras })
}

/// Side-by-side result of the iterated closure and the rule list.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClosureReport {
    pub i: usize,
    pub beta: usize,
    pub gamma: usize,
    pub size: u64,
    pub matches: bool,
    pub missing: Vec<MElem>,
    pub surplus: Vec<MElem>,
}

/// Check that the iterated closure of generators(i, beta, gamma) equals the
/// rule-list prediction.
pub fn verify_generated_closure(
    m: &ModelM,
    i: usize,
    beta: usize,
    gamma: usize,
) -> Result<ClosureReport> {
    let seeds = m.generators(i, beta, gamma)?;
    let actual = generated_closure(m, beta, &seeds);
    let expected = expected_closure(m, i, beta, gamma)?;
    let missing: Vec<MElem> = expected
        .extras
        .difference(&actual.extras)
        .copied()
        .collect();
    let surplus: Vec<MElem> = actual
        .extras
        .difference(&expected.extras)
        .copied()
        .collect();
    Ok(ClosureReport {
        i,
        beta,
        gamma,
        size: actual.size(m),
        matches: missing.is_empty() && surplus.is_empty(),
        missing,
        surplus,
    })
}

/// Why a partial map failed to extend to an isomorphism.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtensionClash {
    pub kind: String,
    pub detail: String,
}

/// Result of the transfer-isomorphism check at (i, beta, gamma, gamma').
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransferReport {
    pub i: usize,
    pub beta: usize,
    pub gamma: usize,
    pub gamma_prime: usize,
    pub holds: bool,
    pub pairs: usize,
    pub left_extras: usize,
    pub right_extras: usize,
    pub clash: Option<ExtensionClash>,
}

struct PairCloser<'a> {
    m: &'a ModelM,
    beta: usize,
    fwd: BTreeMap<MElem, MElem>,
    bwd: BTreeMap<MElem, MElem>,
    frontier: Vec<(MElem, MElem)>,
    clash: Option<ExtensionClash>,
}

impl<'a> PairCloser<'a> {
    fn fail(&mut self, kind: &str, detail: String) {
        if self.clash.is_none() {
            self.clash = Some(ExtensionClash {
                kind: kind.into(),
                detail,
            });
        }
    }

    /// Record x -> x'. Core nodes are implicitly fixed, so a pair that
    /// touches the core must be the identity on it; explicit pairs must
    /// stay functional, injective, tree-preserving, and agree below the
    /// threshold (which settles every meet, successor, and prefix fact
    /// against core nodes at once).
    fn push(&mut self, x: MElem, xp: MElem) {
        if self.clash.is_some() {
            return;
        }
        if x.tree != xp.tree {
            self.fail("tree-mismatch", format!("{x} vs {xp}"));
            return;
        }
        let lc = self.m.is_core(&x, self.beta);
        let rc = self.m.is_core(&xp, self.beta);
        if lc || rc {
            if x != xp {
                self.fail("core-clash", format!("{x} vs {xp} with the core fixed"));
            }
            return;
        }
        let t = self.l_threshold();
        if x.node.prefix(t) != xp.node.prefix(t) {
            self.fail(
                "prefix-clash",
                format!("{x} and {xp} disagree below height {t} over the fixed core"),
            );
            return;
        }
        match self.fwd.get(&x) {
            Some(&prev) if prev != xp => {
                self.fail("functional-clash", format!("{x} to both {prev} and {xp}"));
                return;
            }
            Some(_) => return,
            None => {}
        }
        if let Some(&prev) = self.bwd.get(&xp) {
            if prev != x {
                self.fail(
                    "injective-clash",
                    format!("{xp} hit from both {prev} and {x}"),
                );
                return;
            }
        }
        self.fwd.insert(x, xp);
        self.bwd.insert(xp, x);
        self.frontier.push((x, xp));
    }

    fn l_threshold(&self) -> usize {
        self.m.l * self.beta
    }

    fn run(&mut self) {
        while let Some((x, xp)) = self.frontier.pop() {
            if self.clash.is_some() {
                return;
            }
            let peers: Vec<(MElem, MElem)> = self
                .fwd
                .iter()
                .filter(|(y, _)| y.tree == x.tree)
                .map(|(&y, &yp)| (y, yp))
                .collect();
            for (y, yp) in peers {
                if x.node.is_prefix_of(y.node) != xp.node.is_prefix_of(yp.node)
                    || y.node.is_prefix_of(x.node) != yp.node.is_prefix_of(xp.node)
                {
                    self.fail("order-clash", format!("{x}<={y} vs {xp}<={yp}"));
                    return;
                }
                let t = x.tree;
                self.push(
                    MElem {
                        tree: t,
                        node: x.node.meet(y.node),
                    },
                    MElem {
                        tree: t,
                        node: xp.node.meet(yp.node),
                    },
                );
                self.push(
                    MElem {
                        tree: t,
                        node: self.m.suc(x.node, y.node),
                    },
                    MElem {
                        tree: t,
                        node: self.m.suc(xp.node, yp.node),
                    },
                );
                self.push(
                    MElem {
                        tree: t,
                        node: self.m.suc(y.node, x.node),
                    },
                    MElem {
                        tree: t,
                        node: self.m.suc(yp.node, xp.node),
                    },
                );
                if self.clash.is_some() {
                    return;
                }
            }
            if (x.tree.len as usize) < self.m.k {
                for bit in 0..2 {
                    self.push(
                        self.m.g(x.tree, bit, x.node),
                        self.m.g(xp.tree, bit, xp.node),
                    );
                }
            }
        }
    }
}

/// Check that fixing the core at `beta` and the long branches except the
/// i-th, while swapping the band-gamma bookmark for the band-gamma' one,
/// extends to an isomorphism of generated substructures. The extension is
/// closed pair by pair and every obstruction is reported, never suppressed.
pub fn verify_transfer_isomorphism(
    m: &ModelM,
    i: usize,
    beta: usize,
    gamma: usize,
    gamma_prime: usize,
) -> Result<TransferReport> {
    let left_seeds = m.generators(i, beta, gamma)?;
    let right_seeds = m.generators(i, beta, gamma_prime)?;
    let left = generated_closure(m, beta, &left_seeds);
    let right = generated_closure(m, beta, &right_seeds);
    let mut closer = PairCloser {
        m,
        beta,
        fwd: BTreeMap::new(),
        bwd: BTreeMap::new(),
        frontier: Vec::new(),
        clash: None,
    };
    for (&x, &xp) in left_seeds.iter().zip(right_seeds.iter()) {
        closer.push(x, xp);
    }
    // The transfer images of core bands are fixed along with the core.
    for j in 0..m.k.saturating_sub(1) {
        for d in 0..beta {
            let img = m.g(MNode::zeros(j), 0, m.c_node(d));
            closer.push(img, img);
        }
    }
    closer.run();
    let mut clash = closer.clash;
    if clash.is_none() {
        let image: BTreeSet<MElem> = closer.bwd.keys().copied().collect();
        let domain: BTreeSet<MElem> = closer.fwd.keys().copied().collect();
        if domain != left.extras {
            clash = Some(ExtensionClash {
                kind: "domain-mismatch".into(),
                detail: "pair closure did not cover the left closure".into(),
            });
        } else if image != right.extras {
            clash = Some(ExtensionClash {
                kind: "image-mismatch".into(),
                detail: "pair closure is not onto the right closure".into(),
            });
        }
    }
    Ok(TransferReport {
        i,
        beta,
        gamma,
        gamma_prime,
        holds: clash.is_none(),
        pairs: closer.fwd.len(),
        left_extras: left.extras.len(),
        right_extras: right.extras.len(),
        clash,
    })
}

/// The prediction the checks are measured against: the extension fails
/// exactly when the parity branch is pinned while the bands disagree mod 2,
/// or, with at least one interior tree past the first, when exactly one
/// side's bookmark sits at band zero directly above the root.
pub fn transfer_prediction(
    m: &ModelM,
    i: usize,
    beta: usize,
    gamma: usize,
    gamma_prime: usize,
) -> bool {
    let parity_pin = i == m.k - 1 && beta >= 1 && gamma % 2 != gamma_prime % 2;
    let zero_mix = m.k >= 3 && i >= 1 && beta == 0 && ((gamma == 0) != (gamma_prime == 0));
    !(parity_pin || zero_mix)
}

/// Evaluate the chained-transfer term: walk the meet of each long-branch
/// argument with the running value, step toward it, transfer to the next
/// tree, and compare the result with the last argument.
pub fn eval_phi(m: &ModelM, xs: &[MNode], y: MNode) -> Result<bool> {
    let steps = phi_intermediates(m, xs, y)?;
    Ok(steps.last().expect("k >= 2 gives at least one step").node == xs[m.k - 1])
}

/// The intermediate values of the chained-transfer term, one per interior
/// tree.
pub fn phi_intermediates(m: &ModelM, xs: &[MNode], y: MNode) -> Result<Vec<MElem>> {
    if xs.len() != m.k {
        return Err(Error::InvalidParams(format!(
            "term takes {} long-branch arguments, got {}",
            m.k,
            xs.len()
        )));
    }
    let mut out = Vec::new();
    let mut cur = y;
    for (i, x) in xs.iter().enumerate().take(m.k - 1) {
        let tree = MNode::zeros(i);
        let stepped = m.suc(x.meet(cur), cur);
        let next = m.g(tree, 0, stepped);
        out.push(next);
        cur = next.node;
    }
    Ok(out)
}

/// One stage of the alternating-bookmark chain.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageReport {
    pub beta: usize,
    pub iso: Vec<TransferReport>,
    pub phi_left: bool,
    pub phi_right: bool,
    pub pass: bool,
}

/// The chain verdict: consecutive passing stages from the bottom.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TreeChainReport {
    pub stages: Vec<StageReport>,
    pub chain_length: usize,
}

/// At each even threshold beta, check that the bookmarks of bands beta and
/// beta+1 extend to isomorphisms over the core and every punctured set of
/// long branches, while the chained-transfer term tells them apart.
pub fn verify_splitting_chain(m: &ModelM, max_stages: usize) -> Result<TreeChainReport> {
    let xs: Vec<MNode> = (0..m.k).map(|_| MNode::zeros(m.height())).collect();
    let mut stages = Vec::new();
    let mut beta = 0usize;
    while beta + 1 < m.bc && stages.len() < max_stages {
        let mut iso = Vec::new();
        for i in 0..m.k {
            iso.push(verify_transfer_isomorphism(m, i, beta, beta, beta + 1)?);
        }
        let phi_left = eval_phi(m, &xs, m.b_node(beta))?;
        let phi_right = eval_phi(m, &xs, m.b_node(beta + 1))?;
        let pass = iso.iter().all(|r| r.holds) && phi_left != phi_right;
        stages.push(StageReport {
            beta,
            iso,
            phi_left,
            phi_right,
            pass,
        });
        beta += 2;
    }
    let chain_length = stages.iter().take_while(|s| s.pass).count();
    Ok(TreeChainReport {
        stages,
        chain_length,
    })
}

/// Translation table between tower nodes and the flat multi-sorted
/// structure: one sort per tree, nodes numbered level by level.
#[derive(Clone, Debug)]
pub struct StructureMap {
    pub trees: Vec<MNode>,
    pub height: usize,
}

impl StructureMap {
    pub fn to_elem(&self, e: MElem) -> Elem {
        let sort = self
            .trees
            .iter()
            .position(|&t| t == e.tree)
            .expect("tree in range");
        Elem {
            sort,
            idx: ((1u64 << e.node.len) - 1) as usize + e.node.bits as usize,
        }
    }

    pub fn from_elem(&self, e: Elem) -> MElem {
        let mut len = 0usize;
        let mut idx = e.idx;
        while idx >= (1 << len) {
            idx -= 1 << len;
            len += 1;
        }
        MElem {
            tree: self.trees[e.sort],
            node: MNode {
                len: len as u8,
                bits: idx as u32,
            },
        }
    }
}

fn tree_label(t: MNode) -> String {
    if t.len == 0 {
        "e".into()
    } else {
        (0..t.len as usize)
            .map(|i| char::from(b'0' + t.bit(i)))
            .collect()
    }
}

/// Flatten the whole tower into an explicit multi-sorted structure: per
/// tree a prefix order, meet, and successor-toward; per interior tree the
/// two transfer maps. Refused when the node count would be large; this
/// exists so the generic machinery can cross-check the symbolic verifiers.
pub fn to_structure(m: &ModelM) -> Result<(Structure, StructureMap)> {
    let trees = m.trees();
    let per_tree = (1u64 << (m.height() + 1)) - 1;
    if per_tree * trees.len() as u64 > 200_000 {
        return Err(Error::InvalidParams("tower too large to flatten".into()));
    }
    let mut rels = Vec::new();
    let mut fns = Vec::new();
    for (si, &t) in trees.iter().enumerate() {
        let label = tree_label(t);
        rels.push(RelDecl {
            name: format!("ord_{label}"),
            profile: vec![si, si],
        });
        fns.push(FnDecl {
            name: format!("meet_{label}"),
            profile: vec![si, si],
            result: si,
        });
        fns.push(FnDecl {
            name: format!("suc_{label}"),
            profile: vec![si, si],
            result: si,
        });
        if (t.len as usize) < m.k {
            for bit in 0..2u8 {
                let child = t.push(bit);
                let ci = trees.iter().position(|&u| u == child).expect("child tree");
                fns.push(FnDecl {
                    name: format!("g_{label}_{bit}"),
                    profile: vec![si],
                    result: ci,
                });
            }
        }
    }
    let sig = Signature {
        sorts: trees
            .iter()
            .map(|&t| format!("T{}", tree_label(t)))
            .collect(),
        relations: rels,
        functions: fns,
    };
    let mut s = Structure::new(sig);
    let map = StructureMap {
        trees: trees.clone(),
        height: m.height(),
    };
    let mut nodes = Vec::new();
    for len in 0..=m.height() {
        for bits in 0..(1u32 << len) {
            nodes.push(MNode {
                len: len as u8,
                bits,
            });
        }
    }
    for (si, _) in trees.iter().enumerate() {
        for _ in &nodes {
            s.add_elem(si);
        }
    }
    for &t in trees.iter() {
        let label = tree_label(t);
        let ord = s.rel_id(&format!("ord_{label}")).expect("declared above");
        let meet = s.fn_id(&format!("meet_{label}")).expect("declared above");
        let suc = s.fn_id(&format!("suc_{label}")).expect("declared above");
        for &x in &nodes {
            let ex = map.to_elem(MElem { tree: t, node: x });
            for &y in &nodes {
                let ey = map.to_elem(MElem { tree: t, node: y });
                if x.is_prefix_of(y) {
                    s.add_rel_tuple(ord, vec![ex, ey])?;
                }
                let em = map.to_elem(MElem {
                    tree: t,
                    node: x.meet(y),
                });
                s.set_fn(meet, vec![ex, ey], em)?;
                let es = map.to_elem(MElem {
                    tree: t,
                    node: m.suc(x, y),
                });
                s.set_fn(suc, vec![ex, ey], es)?;
            }
            if (t.len as usize) < m.k {
                for bit in 0..2u8 {
                    let g = s
                        .fn_id(&format!("g_{label}_{bit}"))
                        .expect("declared above");
                    s.set_fn(g, vec![ex], map.to_elem(m.g(t, bit, x)))?;
                }
            }
        }
    }
    s.validate()?;
    Ok((s, map))
}
