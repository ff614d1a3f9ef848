//! Structure files: the generators write them, extraction and fuzzing read
//! them back. A file is either a bare structure document or a wrapper that
//! adds the generator kind, parameter echo, and a name table. Generation is
//! deterministic per seed so files can be compared byte for byte.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use ksplit_core::detect::{end_homogenize, is_end_homogeneous, Sequence};
use ksplit_core::gallery::{
    build_layered_order, hypergraph_witness, independence_pattern, pair_witness_equiv,
    random_equiv_k, random_hypergraph, staged_equiv_witness,
};
use ksplit_core::json::{from_json, to_json};
use ksplit_core::structure::{Elem, Structure};
use ksplit_core::tree_stack::{to_structure as tree_to_structure, ModelM};

use crate::Common;

#[derive(Args)]
pub struct GenerateCmd {
    #[command(subcommand)]
    kind: GenKind,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum GenKind {
    /// Random colored-equivalence model on k-subsets.
    EquivRandom(EquivRandomArgs),
    /// Staged witness with linked and fresh pairs per stage.
    EquivWitness(EquivWitnessArgs),
    /// Two-class witness with a shared anchor block.
    EquivPair(EquivPairArgs),
    /// Witness realizing one subset of a grid pattern.
    IndependencePattern(IndependencePatternArgs),
    /// Random uniform hypergraph.
    HypergraphRandom(HypergraphRandomArgs),
    /// Spine witness: joined vertices plus one isolated vertex.
    HypergraphWitness(HypergraphWitnessArgs),
    /// Layered order configuration.
    OrderConfig(OrderConfigArgs),
    /// Tower-of-trees model as an explicit structure.
    TreeStack(TreeStackArgs),
}

#[derive(Args, Serialize)]
struct EquivRandomArgs {
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Subset width.
    #[arg(long, default_value_t = 2)]
    width: usize,
    #[arg(long, default_value_t = 3)]
    colors: u64,
}

#[derive(Args, Serialize)]
struct EquivWitnessArgs {
    /// Subset width.
    #[arg(long, default_value_t = 2)]
    width: usize,
    #[arg(long, default_value_t = 4)]
    stages: usize,
}

#[derive(Args, Serialize)]
struct EquivPairArgs {
    /// Subset width.
    #[arg(long, default_value_t = 2)]
    width: usize,
}

#[derive(Args, Serialize)]
struct IndependencePatternArgs {
    /// Block width.
    #[arg(long, default_value_t = 2)]
    width: usize,
    /// Comma-separated extents, one per dimension (width - 1 of them).
    #[arg(long, default_value = "3")]
    dims: String,
    /// Semicolon-separated cells, each a comma-separated tuple; empty for
    /// the empty pattern.
    #[arg(long, default_value = "")]
    pattern: String,
}

#[derive(Args, Serialize)]
struct HypergraphRandomArgs {
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Edge arity.
    #[arg(long, default_value_t = 3)]
    arity: usize,
    /// Edge probability numerator.
    #[arg(long, default_value_t = 1)]
    num: u32,
    /// Edge probability denominator.
    #[arg(long, default_value_t = 2)]
    den: u32,
}

#[derive(Args, Serialize)]
struct HypergraphWitnessArgs {
    /// Edge arity.
    #[arg(long, default_value_t = 3)]
    arity: usize,
    /// Number of joined vertices.
    #[arg(long, default_value_t = 4)]
    joined: usize,
}

#[derive(Args, Serialize)]
struct OrderConfigArgs {
    /// Number of marker layers.
    #[arg(long, default_value_t = 2)]
    width: usize,
    /// Number of bottom-layer pairs.
    #[arg(long, default_value_t = 3)]
    depth: usize,
}

#[derive(Args, Serialize)]
struct TreeStackArgs {
    /// Number of stacked trees.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Band height.
    #[arg(long, default_value_t = 2)]
    l: usize,
    /// Number of bands.
    #[arg(long, default_value_t = 2)]
    bc: usize,
}

fn idxs(elems: &[Elem]) -> Vec<usize> {
    elems.iter().map(|e| e.idx).collect()
}

pub fn generate(cmd: &GenerateCmd) -> anyhow::Result<()> {
    let seed = cmd.common.seed;
    let (kind, params, structure, names) = match &cmd.kind {
        GenKind::EquivRandom(a) => {
            let m = random_equiv_k(a.n, a.width, a.colors, seed)?;
            (
                "equiv-random",
                serde_json::to_value(a)?,
                m.to_structure(),
                json!({"classes": m.classes().len()}),
            )
        }
        GenKind::EquivWitness(a) => {
            let w = staged_equiv_witness(a.width, a.stages)?;
            (
                "equiv-witness",
                serde_json::to_value(a)?,
                w.model.to_structure(),
                json!({
                    "a": w.a, "b": w.b, "c": w.c,
                    "b_prime": w.b_prime, "c_prime": w.c_prime,
                }),
            )
        }
        GenKind::EquivPair(a) => {
            let w = pair_witness_equiv(a.width)?;
            (
                "equiv-pair",
                serde_json::to_value(a)?,
                w.model.to_structure(),
                json!({"anchors": w.anchors, "b": w.b, "c": w.c}),
            )
        }
        GenKind::IndependencePattern(a) => {
            let dims: Vec<usize> = a
                .dims
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .context("dims must be comma-separated integers")
                })
                .collect::<anyhow::Result<_>>()?;
            let mut pattern: BTreeSet<Vec<usize>> = BTreeSet::new();
            for cell in a.pattern.split(';').filter(|c| !c.trim().is_empty()) {
                pattern.insert(
                    cell.split(',')
                        .map(|p| p.trim().parse().context("pattern cells must be integers"))
                        .collect::<anyhow::Result<_>>()?,
                );
            }
            let w = independence_pattern(a.width, &dims, &pattern)?;
            (
                "independence-pattern",
                serde_json::to_value(a)?,
                w.model.to_structure(),
                json!({"grid": w.grid, "joint": w.joint, "anchor": w.anchor}),
            )
        }
        GenKind::HypergraphRandom(a) => (
            "hypergraph-random",
            serde_json::to_value(a)?,
            random_hypergraph(a.n, a.arity, a.num, a.den, seed)?,
            json!({}),
        ),
        GenKind::HypergraphWitness(a) => {
            let w = hypergraph_witness(a.arity, a.joined)?;
            let spine: Vec<usize> = w.blocks.iter().map(|b| b[0].idx).collect();
            (
                "hypergraph-witness",
                serde_json::to_value(a)?,
                w.s,
                json!({"spine": spine, "joined": idxs(&w.joined), "apart": w.apart.idx}),
            )
        }
        GenKind::OrderConfig(a) => {
            let cfg = build_layered_order(a.width, a.depth)?;
            (
                "order-config",
                serde_json::to_value(a)?,
                cfg.s,
                json!({"b": idxs(&cfg.b), "c": idxs(&cfg.c), "a": idxs(&cfg.a)}),
            )
        }
        GenKind::TreeStack(a) => {
            let m = ModelM::new(a.k, a.l, a.bc)?;
            let (s, map) = tree_to_structure(&m)?;
            (
                "tree-stack",
                serde_json::to_value(a)?,
                s,
                json!({"height": map.height, "trees": map.trees.len()}),
            )
        }
    };
    let doc = json!({
        "format": "ksplit-structure",
        "kind": kind,
        "seed": seed,
        "params": params,
        "names": names,
        "structure": serde_json::from_str::<Value>(&to_json(&structure))?,
    });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    match &cmd.common.out {
        Some(path) => std::fs::write(path, &text)
            .with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Accepts either a bare structure document or a generator wrapper.
pub fn parse_structure(text: &str) -> anyhow::Result<Structure> {
    let value: Value = serde_json::from_str(text).context("not JSON")?;
    let doc = match value.get("structure") {
        Some(inner) => serde_json::to_string(inner)?,
        None => text.to_string(),
    };
    Ok(from_json(&doc)?)
}

pub fn load_structure(path: &Path) -> anyhow::Result<Structure> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_structure(&text)
}

#[derive(Args)]
pub struct ExtractCmd {
    /// Structure file to extract from.
    pub file: PathBuf,
    /// Width of the extracted end-homogeneity.
    pub k: Option<usize>,
    /// Comma-separated element indices pinned as the base.
    #[arg(long, default_value = "")]
    pub base: String,
    /// Sort whose elements form the candidate sequence.
    #[arg(long, default_value_t = 0)]
    pub sort: usize,
    #[command(flatten)]
    pub common: Common,
}

impl ExtractCmd {
    pub fn width(&self) -> usize {
        self.k.unwrap_or(2)
    }
}

pub fn extract(cmd: &ExtractCmd) -> anyhow::Result<(bool, Value)> {
    let s = load_structure(&cmd.file)?;
    if cmd.sort >= s.universe.len() {
        bail!("sort {} out of range", cmd.sort);
    }
    let mut base = Vec::new();
    for part in cmd.base.split(',').filter(|p| !p.trim().is_empty()) {
        let idx: usize = part
            .trim()
            .parse()
            .context("base must be comma-separated indices")?;
        let e = Elem {
            sort: cmd.sort,
            idx,
        };
        if !s.contains(e) {
            bail!("base element {idx} outside the universe");
        }
        base.push(e);
    }
    let items: Vec<Vec<Elem>> = s.universe[cmd.sort]
        .iter()
        .map(|&i| Elem {
            sort: cmd.sort,
            idx: i,
        })
        .filter(|e| !base.contains(e))
        .map(|e| vec![e])
        .collect();
    if items.is_empty() {
        bail!("nothing to extract from");
    }
    let k = cmd.width();
    let chosen = end_homogenize(&s, &base, &items, k)?;
    let seq = Sequence {
        base: base.clone(),
        items: chosen.iter().map(|&i| items[i].clone()).collect(),
    };
    let rep = is_end_homogeneous(&s, &seq, k)?;
    let body = json!({
        "chosen_items": chosen,
        "chosen_elements": chosen.iter().map(|&i| items[i][0].idx).collect::<Vec<_>>(),
        "kept": chosen.len(),
        "of": items.len(),
        "end_homogeneous": rep.holds,
    });
    Ok((rep.holds, body))
}
