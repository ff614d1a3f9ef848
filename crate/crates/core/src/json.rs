//! Canonical JSON form for structures.
//!
//! Serialization first compacts the structure: element indices within each
//! sort are re-numbered by rank, so structures that differ only by index
//! labels serialize identically. Relation tuples and function tables are
//! emitted in lexicographic order (guaranteed by the BTree containers), which
//! makes the output byte-deterministic.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::structure::{Elem, Signature, Structure};
use crate::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SortJson {
    name: String,
    count: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RelJson {
    name: String,
    profile: Vec<usize>,
    tuples: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct FnJson {
    name: String,
    profile: Vec<usize>,
    result: usize,
    /// Values in lexicographic argument order over the compacted universe.
    table: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct StructureJson {
    sorts: Vec<SortJson>,
    relations: Vec<RelJson>,
    functions: Vec<FnJson>,
}

/// Re-numbers every sort's elements as 0..count by rank. The result is
/// isomorphic to the input and is a fixed point of compaction.
pub fn compact(s: &Structure) -> Structure {
    let maps: Vec<BTreeMap<usize, usize>> = s
        .universe
        .iter()
        .map(|u| u.iter().enumerate().map(|(new, &old)| (old, new)).collect())
        .collect();
    let remap = |e: &Elem| Elem::new(e.sort, maps[e.sort][&e.idx]);
    let mut out = Structure::new(s.sig.clone());
    for (sort, u) in s.universe.iter().enumerate() {
        for _ in 0..u.len() {
            out.add_elem(sort);
        }
    }
    for (r, interp) in s.rel_interp.iter().enumerate() {
        for t in interp {
            out.rel_interp[r].insert(t.iter().map(remap).collect());
        }
    }
    for (f, interp) in s.fn_interp.iter().enumerate() {
        for (args, val) in interp {
            out.fn_interp[f].insert(args.iter().map(remap).collect(), remap(val));
        }
    }
    out
}

/// Lexicographic enumeration of argument tuples over compacted universes.
fn arg_tuples(counts: &[usize], profile: &[usize]) -> Vec<Vec<Elem>> {
    let mut out = vec![Vec::new()];
    for &sort in profile {
        let mut next = Vec::new();
        for t in &out {
            for idx in 0..counts[sort] {
                let mut t2 = t.clone();
                t2.push(Elem::new(sort, idx));
                next.push(t2);
            }
        }
        out = next;
    }
    out
}

pub fn to_json(s: &Structure) -> String {
    let c = compact(s);
    let counts: Vec<usize> = c.universe.iter().map(|u| u.len()).collect();
    let sorts = c
        .sig
        .sorts
        .iter()
        .zip(&counts)
        .map(|(name, &count)| SortJson {
            name: name.clone(),
            count,
        })
        .collect();
    let relations = c
        .sig
        .relations
        .iter()
        .zip(&c.rel_interp)
        .map(|(decl, interp)| RelJson {
            name: decl.name.clone(),
            profile: decl.profile.clone(),
            tuples: interp
                .iter()
                .map(|t| t.iter().map(|e| e.idx).collect())
                .collect(),
        })
        .collect();
    let functions = c
        .sig
        .functions
        .iter()
        .enumerate()
        .map(|(f, decl)| FnJson {
            name: decl.name.clone(),
            profile: decl.profile.clone(),
            result: decl.result,
            table: arg_tuples(&counts, &decl.profile)
                .iter()
                .map(|args| c.apply(f, args).map_or(usize::MAX, |v| v.idx))
                .collect(),
        })
        .collect();
    let doc = StructureJson {
        sorts,
        relations,
        functions,
    };
    serde_json::to_string_pretty(&doc).expect("structure serializes")
}

pub fn from_json(text: &str) -> Result<Structure> {
    let doc: StructureJson =
        serde_json::from_str(text).map_err(|e| Error::InvalidParams(format!("bad json: {e}")))?;
    let sig = Signature {
        sorts: doc.sorts.iter().map(|s| s.name.clone()).collect(),
        relations: doc
            .relations
            .iter()
            .map(|r| crate::structure::RelDecl {
                name: r.name.clone(),
                profile: r.profile.clone(),
            })
            .collect(),
        functions: doc
            .functions
            .iter()
            .map(|f| crate::structure::FnDecl {
                name: f.name.clone(),
                profile: f.profile.clone(),
                result: f.result,
            })
            .collect(),
    };
    sig.validate()?;
    let mut s = Structure::new(sig);
    let counts: Vec<usize> = doc.sorts.iter().map(|x| x.count).collect();
    for (sort, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            s.add_elem(sort);
        }
    }
    for (r, rel) in doc.relations.iter().enumerate() {
        for t in &rel.tuples {
            if t.len() != rel.profile.len() {
                return Err(Error::SortMismatch(format!(
                    "tuple arity in relation {}",
                    rel.name
                )));
            }
            let tuple: Vec<Elem> = t
                .iter()
                .zip(&rel.profile)
                .map(|(&idx, &sort)| Elem::new(sort, idx))
                .collect();
            s.add_rel_tuple(r, tuple)?;
        }
    }
    for (f, fun) in doc.functions.iter().enumerate() {
        let args = arg_tuples(&counts, &fun.profile);
        if args.len() != fun.table.len() {
            return Err(Error::InvalidParams(format!(
                "function {} table has {} entries, expected {}",
                fun.name,
                fun.table.len(),
                args.len()
            )));
        }
        for (t, &v) in args.into_iter().zip(&fun.table) {
            s.set_fn(f, t, Elem::new(fun.result, v))?;
        }
    }
    s.validate()?;
    Ok(s)
}
