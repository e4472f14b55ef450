//! Reaching definitions.
//!
//! For every node the table holds the Assignment nodes whose definitions
//! reach the point just after it. Assignment nodes replace the definitions
//! they overwrite with themselves; every other node passes its join through.
//! The fixed point is computed with a FIFO worklist.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write;

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::cfg::{Cfg, NodeId};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DataflowError {
    #[error("reaching definitions for {cfg} did not converge within {budget} iterations")]
    IterationBudgetExceeded { cfg: String, budget: u64 },
}

/// Node id -> set of reaching Assignment node ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintTable {
    sets: Vec<FixedBitSet>,
}

impl ConstraintTable {
    pub fn empty(n: usize) -> Self {
        ConstraintTable { sets: vec![FixedBitSet::with_capacity(n); n] }
    }

    pub fn get(&self, node: NodeId) -> &FixedBitSet {
        &self.sets[node]
    }

    pub fn defs(&self, node: NodeId) -> Vec<NodeId> {
        self.sets[node].ones().collect()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Definitions reaching the point just before `node`.
    pub fn reaching_in(&self, cfg: &Cfg, node: NodeId) -> FixedBitSet {
        join(cfg, self, node)
    }

    /// `id (label): a b c` per node, for golden files.
    pub fn to_text(&self, cfg: &Cfg) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {} ({})", cfg.name, cfg.file);
        for n in &cfg.nodes {
            let ids: Vec<String> = self.sets[n.id].ones().map(|i| i.to_string()).collect();
            let _ = writeln!(out, "{} [{}] {}: {}", n.id, n.kind, n.label, ids.join(" "));
        }
        out
    }
}

/// Precomputed kill sets: `mask[a]` holds every Assignment whose definitions
/// are all overwritten by Assignment `a`.
#[derive(Debug, Clone)]
pub struct Kills {
    masks: Vec<Option<FixedBitSet>>,
    assignments: usize,
}

impl Kills {
    pub fn new(cfg: &Cfg) -> Self {
        let n = cfg.nodes.len();
        let mut by_base: HashMap<&str, Vec<NodeId>> = HashMap::new();
        for a in cfg.assignments() {
            for p in &a.lh {
                let v = by_base.entry(p.base.as_str()).or_default();
                if v.last() != Some(&a.id) {
                    v.push(a.id);
                }
            }
        }
        let mut masks = vec![None; n];
        let mut assignments = 0;
        for a in cfg.assignments() {
            assignments += 1;
            let mut mask = FixedBitSet::with_capacity(n);
            for p in &a.lh {
                for &b in by_base.get(p.base.as_str()).into_iter().flatten() {
                    let other = &cfg.nodes[b];
                    if !other.lh.is_empty() && other.lh.iter().all(|q| a.lh.iter().any(|d| d.kills(q))) {
                        mask.insert(b);
                    }
                }
            }
            masks[a.id] = Some(mask);
        }
        Kills { masks, assignments }
    }

    pub fn mask(&self, node: NodeId) -> Option<&FixedBitSet> {
        self.masks[node].as_ref()
    }
}

/// Union of the predecessors' sets; empty for Entry.
pub fn join(cfg: &Cfg, ct: &ConstraintTable, v: NodeId) -> FixedBitSet {
    let mut out = FixedBitSet::with_capacity(cfg.nodes.len());
    for &p in &cfg.nodes[v].preds {
        out.union_with(&ct.sets[p]);
    }
    out
}

/// Assignment: drop the killed definitions and add `v`. Others: identity.
pub fn transfer(kills: &Kills, v: NodeId, joined: &FixedBitSet) -> FixedBitSet {
    let mut out = joined.clone();
    if let Some(mask) = kills.mask(v) {
        out.difference_with(mask);
        out.insert(v);
    }
    out
}

pub fn analyze(cfg: &Cfg) -> Result<ConstraintTable, DataflowError> {
    let order: Vec<NodeId> = (0..cfg.nodes.len()).collect();
    analyze_with(cfg, &order, |_, _, _| {})
}

/// Worklist iteration seeded with `order`. `observe(node, old, new)` is
/// called on every change.
pub fn analyze_with(
    cfg: &Cfg,
    order: &[NodeId],
    mut observe: impl FnMut(NodeId, &FixedBitSet, &FixedBitSet),
) -> Result<ConstraintTable, DataflowError> {
    let n = cfg.nodes.len();
    let kills = Kills::new(cfg);
    let mut ct = ConstraintTable::empty(n);
    let mut queue: VecDeque<NodeId> = VecDeque::with_capacity(n);
    let mut queued = FixedBitSet::with_capacity(n);
    for &v in order {
        if !queued.put(v) {
            queue.push_back(v);
        }
    }
    let budget = (n as u64).pow(2) * (kills.assignments.max(1) as u64) + n as u64;
    let mut steps = 0u64;
    while let Some(v) = queue.pop_front() {
        queued.set(v, false);
        steps += 1;
        if steps > budget {
            return Err(DataflowError::IterationBudgetExceeded { cfg: cfg.name.clone(), budget });
        }
        let new = transfer(&kills, v, &join(cfg, &ct, v));
        if new != ct.sets[v] {
            observe(v, &ct.sets[v], &new);
            ct.sets[v] = new;
            for &s in &cfg.nodes[v].succs {
                if !queued.put(s) {
                    queue.push_back(s);
                }
            }
        }
    }
    Ok(ct)
}
