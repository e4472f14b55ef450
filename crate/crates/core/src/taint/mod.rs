//! Sink-first taint analysis.
//!
//! For every sink call in an (inlined) root Cfg, each declared argument is
//! backtracked to its leaves. Every source call or root parameter it reaches
//! yields a [`TaintFlow`] whose chain is the shortest dependency path, taken
//! through the nodes the field-sensitive propagation marks when possible.

pub mod backtrack;
pub mod framework;
pub mod propagate;
pub mod trigger;

use std::collections::HashMap;

use fixedbitset::FixedBitSet;
use serde::Serialize;

use crate::cfg::{Cfg, NodeId};
use crate::dataflow::ConstraintTable;

pub use backtrack::{FactGraph, Leaf, Provenance};
pub use framework::{apply_framework_rules, CallSiteIndex, DropReason, Verdict};
pub use propagate::{propagate_taint, Propagation};
pub use trigger::{ConfigError, Sink, TriggerWords, VulnType};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceKind {
    Call { name: String },
    /// A parameter of the analyzed root function.
    Param { function: String, param: String, index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceSite {
    pub kind: SourceKind,
    pub node: NodeId,
    pub file: String,
    pub line: u32,
    pub col: u32,
    pub offset: usize,
}

impl SourceSite {
    /// `luci.http.formvalue`, or `add_br(http_form)` for a parameter.
    pub fn name(&self) -> String {
        match &self.kind {
            SourceKind::Call { name } => name.clone(),
            SourceKind::Param { function, param, .. } => format!("{function}({param})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SinkSite {
    pub name: String,
    pub vuln: VulnType,
    /// 1-based argument position.
    pub arg: usize,
    pub node: NodeId,
    pub function: String,
    pub file: String,
    pub line: u32,
    pub col: u32,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, serde::Deserialize)]
pub struct ChainStep {
    pub file: String,
    pub line: u32,
    pub col: u32,
    pub excerpt: String,
    pub function: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaintFlow {
    /// Root Cfg the flow was found in.
    pub root: String,
    pub root_file: String,
    pub source: SourceSite,
    pub sink: SinkSite,
    /// Node ids of the inlined root, source first, sink last.
    pub chain: Vec<NodeId>,
    pub steps: Vec<ChainStep>,
    pub tainted_attrs: Vec<String>,
    pub sanitized: bool,
    pub web_reachable: bool,
}

impl TaintFlow {
    /// Consecutive distinct functions along the chain.
    pub fn call_path(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for s in &self.steps {
            if out.last() != Some(&s.function) {
                out.push(s.function.clone());
            }
        }
        out
    }
}

/// Sink call sites in reverse node order, with the matching trigger word.
pub fn find_sinks<'a>(cfg: &Cfg, tw: &'a TriggerWords) -> Vec<(NodeId, &'a Sink)> {
    let mut out: Vec<(NodeId, &Sink)> =
        cfg.nodes.iter().filter_map(|n| Some((n.id, tw.sink_for(n.top_call()?)?))).collect();
    out.reverse();
    out
}

/// Whether some chain node applies a sanitizer to a value defined earlier
/// on the chain.
pub fn is_sanitized(cfg: &Cfg, chain: &[NodeId], tw: &TriggerWords) -> bool {
    chain.iter().enumerate().any(|(i, &id)| {
        let n = &cfg.nodes[id];
        n.top_call().is_some_and(|c| tw.is_sanitizer(c))
            && chain[..i].iter().any(|&p| cfg.nodes[p].lh.iter().any(|l| n.rh.iter().any(|r| l.overlaps(r))))
    })
}

/// Argument provenance at one sink; parameters count as tainted when the
/// root is web reachable.
pub fn backtrack_argument(cfg: &Cfg, ct: &ConstraintTable, tw: &TriggerWords, sink: NodeId, arg: usize) -> Provenance {
    let Some(v) = cfg.nodes[sink].top_call().and_then(|c| c.args.get(arg.wrapping_sub(1))) else {
        return Provenance::Constant;
    };
    FactGraph::build(cfg, ct, tw, sink, v, &mut HashMap::new()).provenance(cfg.web_reachable)
}

fn source_site(cfg: &Cfg, leaf: &Leaf) -> Option<SourceSite> {
    let (node, kind) = match leaf {
        Leaf::Source { node, name } => (*node, SourceKind::Call { name: name.clone() }),
        Leaf::Param { node, name } => {
            let index = cfg.params.iter().position(|p| p == name)?;
            (*node, SourceKind::Param { function: cfg.name.clone(), param: name.clone(), index })
        }
        Leaf::Constant | Leaf::Unknown(_) => return None,
    };
    let n = &cfg.nodes[node];
    let span = match kind {
        SourceKind::Call { .. } => n.top_call().map(|c| c.span).unwrap_or(n.span),
        SourceKind::Param { .. } => n.span,
    };
    Some(SourceSite {
        kind,
        node,
        file: n.file.clone(),
        line: span.start.line,
        col: span.start.col,
        offset: span.start.offset,
    })
}

/// All flows into sinks of `cfg`, sanitized ones included (marked).
pub fn trace_flows(cfg: &Cfg, ct: &ConstraintTable, tw: &TriggerWords) -> Vec<TaintFlow> {
    let order: Vec<NodeId> = cfg.reverse_postorder().into_iter().filter(|&i| cfg.nodes[i].is_assignment()).collect();
    let mut ins: HashMap<NodeId, FixedBitSet> = HashMap::new();
    let mut props: HashMap<NodeId, Propagation> = HashMap::new();
    let mut flows = Vec::new();
    for (k, sink) in find_sinks(cfg, tw) {
        let node = &cfg.nodes[k];
        let call = node.top_call().expect("sink is a call");
        for &arg in &sink.args {
            let Some(value) = call.args.get(arg - 1) else { continue };
            let graph = FactGraph::build(cfg, ct, tw, k, value, &mut ins);
            let clean = graph.reachable_leaves(false);
            for leaf in graph.reachable_leaves(true) {
                let Some(source) = source_site(cfg, &graph.leaves[leaf]) else { continue };
                let sanitized = !clean.contains(&leaf);
                let prop =
                    props.entry(source.node).or_insert_with(|| propagate_taint(cfg, ct, source.node, &order));
                let path = graph
                    .shortest_path(leaf, sanitized, |n| prop.contains(n))
                    .or_else(|| graph.shortest_path(leaf, sanitized, |_| true))
                    .unwrap_or_default();
                let mut chain: Vec<NodeId> = Vec::new();
                for f in path.iter().rev() {
                    let n = graph.facts[*f].node;
                    if chain.last() != Some(&n) {
                        chain.push(n);
                    }
                }
                if chain.first() != Some(&source.node) {
                    chain.insert(0, source.node);
                }
                chain.push(k);
                let steps = chain
                    .iter()
                    .map(|&id| {
                        let n = &cfg.nodes[id];
                        ChainStep {
                            file: n.file.clone(),
                            line: n.span.start.line,
                            col: n.span.start.col,
                            excerpt: n.label.clone(),
                            function: n.func.clone(),
                        }
                    })
                    .collect();
                flows.push(TaintFlow {
                    root: cfg.name.clone(),
                    root_file: cfg.file.clone(),
                    sink: SinkSite {
                        name: call.name.clone().unwrap_or_else(|| sink.name.clone()),
                        vuln: sink.vuln,
                        arg,
                        node: k,
                        function: node.func.clone(),
                        file: node.file.clone(),
                        line: call.span.start.line,
                        col: call.span.start.col,
                        offset: call.span.start.offset,
                    },
                    source,
                    chain,
                    steps,
                    tainted_attrs: prop.tainted_attrs().iter().map(|p| p.to_string()).collect(),
                    sanitized,
                    web_reachable: cfg.web_reachable,
                });
            }
        }
    }
    flows
}
