//! Argument backtracking.
//!
//! A fact is "the value defined by target `idx` of Assignment `node`, read
//! through the key suffix `suffix`". Starting from a sink argument, the graph
//! links each fact to the facts and leaves its value depends on, following
//! the reaching definitions at the node where the value is evaluated. Edges
//! that pass through a sanitizer call are marked.

use std::collections::{HashMap, VecDeque};

use fixedbitset::FixedBitSet;

use super::TriggerWords;
use crate::cfg::{Cfg, Key, NodeId, Value, VarPath};
use crate::dataflow::{join, ConstraintTable};

/// Longest key suffix tracked before the tail is dropped (reading a prefix
/// over-approximates the value).
const MAX_SUFFIX: usize = 6;
const MAX_FACTS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fact {
    pub node: NodeId,
    pub idx: usize,
    pub suffix: Vec<Key>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Leaf {
    Constant,
    /// A source call evaluated at `node`.
    Source { node: NodeId, name: String },
    /// The incoming value of a root parameter, bound at `node`.
    Param { node: NodeId, name: String },
    /// A global read with no reaching definition.
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Fact(usize),
    Leaf(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub to: Target,
    pub sanitized: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    Constant,
    SourceTainted { node: NodeId, name: String },
    Unknown,
}

/// Dependency graph of one sink argument.
#[derive(Debug, Clone)]
pub struct FactGraph {
    pub facts: Vec<Fact>,
    pub leaves: Vec<Leaf>,
    pub edges: Vec<Vec<Edge>>,
    pub roots: Vec<Edge>,
    /// Exploration stopped at the fact limit.
    pub truncated: bool,
}

struct Builder<'a> {
    cfg: &'a Cfg,
    ct: &'a ConstraintTable,
    tw: &'a TriggerWords,
    ins: &'a mut HashMap<NodeId, FixedBitSet>,
    facts: Vec<Fact>,
    fact_ids: HashMap<Fact, usize>,
    leaves: Vec<Leaf>,
    leaf_ids: HashMap<Leaf, usize>,
    edges: Vec<Vec<Edge>>,
    pending: VecDeque<usize>,
}

impl Builder<'_> {
    fn leaf(&mut self, leaf: Leaf, sanitized: bool, out: &mut Vec<Edge>) {
        let next = self.leaves.len();
        let id = *self.leaf_ids.entry(leaf.clone()).or_insert(next);
        if id == next {
            self.leaves.push(leaf);
        }
        out.push(Edge { to: Target::Leaf(id), sanitized });
    }

    fn fact(&mut self, fact: Fact, sanitized: bool, out: &mut Vec<Edge>) {
        let next = self.facts.len();
        let id = *self.fact_ids.entry(fact.clone()).or_insert(next);
        if id == next {
            self.facts.push(fact);
            self.edges.push(Vec::new());
            self.pending.push_back(id);
        }
        out.push(Edge { to: Target::Fact(id), sanitized });
    }

    fn reaching(&mut self, at: NodeId) -> &FixedBitSet {
        let (cfg, ct) = (self.cfg, self.ct);
        self.ins.entry(at).or_insert_with(|| join(cfg, ct, at))
    }

    fn read(&mut self, at: NodeId, path: &VarPath, sanitized: bool, out: &mut Vec<Edge>) {
        let mut q = path.clone();
        q.fields.truncate(MAX_SUFFIX);
        let cfg = self.cfg;
        let defs: Vec<NodeId> = self.reaching(at).ones().collect();
        let mut matched = false;
        for d in defs {
            for (j, l) in cfg.nodes[d].lh.iter().enumerate() {
                if l.may_prefix(&q) {
                    let suffix = q.fields[l.fields.len()..].to_vec();
                    self.fact(Fact { node: d, idx: j, suffix }, sanitized, out);
                    matched = true;
                } else if q.may_prefix(l) {
                    // a field of the value being read
                    self.fact(Fact { node: d, idx: j, suffix: Vec::new() }, sanitized, out);
                    matched = true;
                }
            }
        }
        if !matched {
            let local = cfg.locals.contains(&q.base) || q.base.contains('#') || q.base.starts_with('%');
            let leaf = if local { Leaf::Constant } else { Leaf::Unknown(q.base.clone()) };
            self.leaf(leaf, sanitized, out);
        }
    }

    fn value(&mut self, at: NodeId, v: &Value, suffix: &[Key], sanitized: bool, out: &mut Vec<Edge>) {
        match v {
            Value::Nil | Value::Bool(_) | Value::Number(_) | Value::Str(_) | Value::Closure(_) => {
                self.leaf(Leaf::Constant, sanitized, out)
            }
            Value::Param(p) => self.leaf(Leaf::Param { node: at, name: p.clone() }, sanitized, out),
            Value::Read(p) => self.read(at, &p.extended(suffix), sanitized, out),
            Value::Call(c) => {
                if let Some(name) = self.tw.source_for(c) {
                    let name = name.to_string();
                    self.leaf(Leaf::Source { node: at, name }, sanitized, out);
                    return;
                }
                let through = sanitized || self.tw.is_sanitizer(c);
                let args = c.effective_args();
                if args.is_empty() {
                    self.leaf(Leaf::Constant, sanitized, out);
                }
                // unknown calls: the result may carry any part of any argument
                for a in args {
                    self.value(at, a, &[], through, out);
                }
            }
            Value::Table(items) => {
                let Some((first, rest)) = suffix.split_first() else {
                    if items.is_empty() {
                        self.leaf(Leaf::Constant, sanitized, out);
                    }
                    for (_, iv) in items {
                        self.value(at, iv, &[], sanitized, out);
                    }
                    return;
                };
                let mut any = false;
                for (k, iv) in items {
                    if k == first || *k == Key::Any || *first == Key::Any {
                        self.value(at, iv, rest, sanitized, out);
                        any = true;
                    }
                }
                if !any {
                    self.leaf(Leaf::Constant, sanitized, out);
                }
            }
            Value::Binary { lhs, rhs, .. } => {
                self.value(at, lhs, &[], sanitized, out);
                self.value(at, rhs, &[], sanitized, out);
            }
            Value::Unary { operand, .. } => self.value(at, operand, &[], sanitized, out),
            Value::Join(vs) => {
                for alt in vs {
                    self.value(at, alt, suffix, sanitized, out);
                }
            }
        }
    }

    fn expand(&mut self, id: usize) {
        let Fact { node, idx, suffix } = self.facts[id].clone();
        let cfg = self.cfg;
        let mut out = Vec::new();
        match cfg.nodes[node].op.value_for(idx) {
            Some(v) => self.value(node, v, &suffix, false, &mut out),
            None => self.leaf(Leaf::Constant, false, &mut out),
        }
        self.edges[id] = out;
    }
}

impl FactGraph {
    /// Build the graph for `value` evaluated at node `at`.
    pub fn build(
        cfg: &Cfg,
        ct: &ConstraintTable,
        tw: &TriggerWords,
        at: NodeId,
        value: &Value,
        ins: &mut HashMap<NodeId, FixedBitSet>,
    ) -> FactGraph {
        let mut b = Builder {
            cfg,
            ct,
            tw,
            ins,
            facts: Vec::new(),
            fact_ids: HashMap::new(),
            leaves: Vec::new(),
            leaf_ids: HashMap::new(),
            edges: Vec::new(),
            pending: VecDeque::new(),
        };
        let mut roots = Vec::new();
        b.value(at, value, &[], false, &mut roots);
        let mut truncated = false;
        while let Some(id) = b.pending.pop_front() {
            if b.facts.len() > MAX_FACTS {
                truncated = true;
                break;
            }
            b.expand(id);
        }
        FactGraph { facts: b.facts, leaves: b.leaves, edges: b.edges, roots, truncated }
    }

    /// Shortest path from the sink argument to leaf `leaf`, as fact indices
    /// in sink-to-source order. Only facts whose node passes `allow` are
    /// visited; sanitized edges are skipped unless `through_sanitizers`.
    pub fn shortest_path(
        &self,
        leaf: usize,
        through_sanitizers: bool,
        allow: impl Fn(NodeId) -> bool,
    ) -> Option<Vec<usize>> {
        const START: usize = usize::MAX;
        let mut parent: Vec<Option<usize>> = vec![None; self.facts.len()];
        let mut queue = VecDeque::new();
        let usable = |e: &Edge| through_sanitizers || !e.sanitized;
        let walk = |from: usize, edges: &[Edge], parent: &mut Vec<Option<usize>>, queue: &mut VecDeque<usize>| {
            for e in edges.iter().filter(|e| usable(e)) {
                match e.to {
                    Target::Leaf(l) if l == leaf => return true,
                    Target::Fact(f) if parent[f].is_none() && allow(self.facts[f].node) => {
                        parent[f] = Some(from);
                        queue.push_back(f);
                    }
                    _ => {}
                }
            }
            false
        };
        let finish = |mut at: usize, parent: &[Option<usize>]| {
            let mut path = vec![];
            while at != START {
                path.push(at);
                at = parent[at].expect("visited");
            }
            path.reverse();
            path
        };
        if walk(START, &self.roots, &mut parent, &mut queue) {
            return Some(Vec::new());
        }
        while let Some(f) = queue.pop_front() {
            if walk(f, &self.edges[f], &mut parent, &mut queue) {
                return Some(finish(f, &parent));
            }
        }
        None
    }

    /// Leaves reachable from the sink argument; with `through_sanitizers`
    /// false only over unsanitized edges.
    pub fn reachable_leaves(&self, through_sanitizers: bool) -> Vec<usize> {
        let mut seen_fact = vec![false; self.facts.len()];
        let mut seen_leaf = vec![false; self.leaves.len()];
        let mut queue = VecDeque::new();
        let mut visit = |edges: &[Edge], queue: &mut VecDeque<usize>| {
            for e in edges.iter().filter(|e| through_sanitizers || !e.sanitized) {
                match e.to {
                    Target::Leaf(l) => seen_leaf[l] = true,
                    Target::Fact(f) if !seen_fact[f] => {
                        seen_fact[f] = true;
                        queue.push_back(f);
                    }
                    Target::Fact(_) => {}
                }
            }
        };
        visit(&self.roots, &mut queue);
        while let Some(f) = queue.pop_front() {
            visit(&self.edges[f], &mut queue);
        }
        (0..self.leaves.len()).filter(|&l| seen_leaf[l]).collect()
    }

    /// Classify the argument. Root parameters count as tainted when
    /// `tainted_params` is set.
    pub fn provenance(&self, tainted_params: bool) -> Provenance {
        let leaves = self.reachable_leaves(false);
        let mut all_constant = true;
        for &l in &leaves {
            match &self.leaves[l] {
                Leaf::Source { node, name } => return Provenance::SourceTainted { node: *node, name: name.clone() },
                Leaf::Constant => {}
                _ => all_constant = false,
            }
        }
        if tainted_params {
            for &l in &leaves {
                if let Leaf::Param { node, name } = &self.leaves[l] {
                    return Provenance::SourceTainted { node: *node, name: name.clone() };
                }
            }
        }
        // a sanitized path still means the value is not a plain constant
        if all_constant && leaves.len() == self.reachable_leaves(true).len() {
            Provenance::Constant
        } else {
            Provenance::Unknown
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::build_cfgs;
    use crate::dataflow::analyze;
    use crate::frontend::parse_chunk;

    fn prov(src: &str, tainted_params: bool) -> Provenance {
        let chunk = parse_chunk(src.as_bytes(), "t.lua").unwrap();
        let cfgs = build_cfgs(&chunk, src.as_bytes()).cfgs;
        let cfg = cfgs.last().unwrap();
        let ct = analyze(cfg).unwrap();
        let tw = TriggerWords::default();
        let sink = cfg.nodes.iter().rev().find(|n| n.top_call().is_some_and(|c| tw.sink_for(c).is_some())).unwrap();
        let arg = &sink.top_call().unwrap().args[0];
        FactGraph::build(cfg, &ct, &tw, sink.id, arg, &mut HashMap::new()).provenance(tainted_params)
    }

    #[test]
    fn concatenated_parameter() {
        let src = "function get(iface) local cmd = \"prefix\" .. iface io.popen(cmd) end";
        assert!(matches!(prov(src, true), Provenance::SourceTainted { name, .. } if name == "iface"));
        assert_eq!(prov(src, false), Provenance::Unknown);
    }

    #[test]
    fn literal_argument() {
        assert_eq!(prov("os.execute(\"echo hi\")", false), Provenance::Constant);
        assert_eq!(prov("local a = \"x\" local b = a .. \"y\" os.execute(b)", false), Provenance::Constant);
    }

    #[test]
    fn form_value_source() {
        let p = prov("local name = luci.http.formvalue(\"set\") os.remove(name)", false);
        assert!(matches!(p, Provenance::SourceTainted { name, .. } if name == "luci.http.formvalue"));
    }

    #[test]
    fn unknown_global() {
        assert_eq!(prov("os.execute(cmd)", false), Provenance::Unknown);
    }

    #[test]
    fn sanitized_source_is_not_tainted() {
        let src = "local t = luci.http.formvalue(\"a\") local s = luci.util.shellquote(t) os.execute(\"echo \" .. s)";
        assert_eq!(prov(src, false), Provenance::Unknown);
    }

    #[test]
    fn field_projection() {
        let src = "local t = {} t.a = os.getenv(\"x\") t.b = \"ok\" os.execute(t.b)";
        assert_eq!(prov(src, false), Provenance::Constant);
        let src = "local t = {a = os.getenv(\"x\"), b = \"ok\"} os.execute(t.a)";
        assert!(matches!(prov(src, false), Provenance::SourceTainted { .. }));
        let src = "local t = {a = os.getenv(\"x\"), b = \"ok\"} os.execute(t.b)";
        assert_eq!(prov(src, false), Provenance::Constant);
    }

    #[test]
    fn loops_terminate() {
        let src = "local x = {} while c do x = x.next end os.execute(x.a)";
        assert_eq!(prov(src, false), Provenance::Constant);
        let src = "local x = \"a\" for i = 1, 3 do x = x .. x end os.execute(x)";
        assert_eq!(prov(src, false), Provenance::Constant);
    }
}
