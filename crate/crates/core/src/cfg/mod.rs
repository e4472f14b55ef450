//! Control-flow graphs over a small value IR.
//!
//! Every function body and every file's top-level chunk lowers to one [`Cfg`].
//! Nodes carry the variables they define (`lh`) and use (`rh`) as attribute
//! paths, which is what the dataflow and taint passes work on.

pub mod dict;
pub mod dispatch;
pub mod dot;
pub mod inline;
pub mod lower;

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::frontend::ast::{BinOp, Span, UnOp};

pub use dict::FunctionDict;
pub use dispatch::{attach_dispatched, extract_dispatch_entries, DispatchEntry, DispatchTarget, Segment};
pub use inline::{expand, inline_call, InlineOptions};
pub use lower::{build_cfgs, FileCfgs};

pub type NodeId = usize;

/// Name given to the Cfg of a file's top-level code.
pub const CHUNK_NAME: &str = "<chunk>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    Entry,
    Exit,
    Assignment,
    Statement,
    Condition,
    CallSite,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NodeKind::Entry => "Entry",
            NodeKind::Exit => "Exit",
            NodeKind::Assignment => "Assignment",
            NodeKind::Statement => "Statement",
            NodeKind::Condition => "Condition",
            NodeKind::CallSite => "CallSite",
        };
        f.write_str(s)
    }
}

/// One step of an attribute path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Key {
    Field(String),
    /// A key not known statically (`t[k]`).
    Any,
}

/// A variable identity: a base name plus zero or more table keys.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarPath {
    pub base: String,
    pub fields: Vec<Key>,
}

impl VarPath {
    pub fn ident(name: impl Into<String>) -> Self {
        VarPath { base: name.into(), fields: Vec::new() }
    }

    /// Parse `a.b.c`, with `[*]` for a dynamic key. Mostly for tests.
    pub fn parse(s: &str) -> Self {
        let mut parts = s.split('.');
        let base = parts.next().unwrap_or_default();
        let mut path = VarPath::ident(base.trim_end_matches("[*]"));
        if base.ends_with("[*]") {
            path.fields.push(Key::Any);
        }
        for p in parts {
            let name = p.trim_end_matches("[*]");
            path.fields.push(Key::Field(name.to_string()));
            if p.ends_with("[*]") {
                path.fields.push(Key::Any);
            }
        }
        path
    }

    pub fn is_plain(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn has_dynamic_key(&self) -> bool {
        self.fields.contains(&Key::Any)
    }

    pub fn child(&self, key: Key) -> VarPath {
        let mut p = self.clone();
        p.fields.push(key);
        p
    }

    pub fn extended(&self, suffix: &[Key]) -> VarPath {
        let mut p = self.clone();
        p.fields.extend_from_slice(suffix);
        p
    }

    /// Exact, key-by-key prefix test (`t` is a prefix of `t.a`).
    pub fn is_prefix_of(&self, other: &VarPath) -> bool {
        self.base == other.base
            && self.fields.len() <= other.fields.len()
            && self.fields.iter().zip(&other.fields).all(|(a, b)| a == b)
    }

    /// Like [`is_prefix_of`](Self::is_prefix_of) but `Any` matches any key.
    pub fn may_prefix(&self, other: &VarPath) -> bool {
        self.base == other.base
            && self.fields.len() <= other.fields.len()
            && self.fields.iter().zip(&other.fields).all(|(a, b)| keys_may_alias(a, b))
    }

    /// Whether the two paths may name overlapping storage.
    pub fn overlaps(&self, other: &VarPath) -> bool {
        self.may_prefix(other) || other.may_prefix(self)
    }

    /// Does a definition of `self` overwrite every definition of `other`?
    ///
    /// A plain name kills the name and all of its fields, `t.a` kills `t.a`
    /// and its sub-paths, and a definition through a dynamic key kills nothing.
    pub fn kills(&self, other: &VarPath) -> bool {
        !self.has_dynamic_key() && self.is_prefix_of(other)
    }

    /// Replace the base (and `from`'s fields) with `to`: `self.name` rebased
    /// from `self` to `bean` is `bean.name`.
    pub fn rebase(&self, from: &VarPath, to: &VarPath) -> Option<VarPath> {
        if !from.is_prefix_of(self) {
            return None;
        }
        Some(to.extended(&self.fields[from.fields.len()..]))
    }
}

fn keys_may_alias(a: &Key, b: &Key) -> bool {
    matches!((a, b), (Key::Any, _) | (_, Key::Any)) || a == b
}

impl fmt::Display for VarPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.base)?;
        for k in &self.fields {
            match k {
                Key::Any => f.write_str("[*]")?,
                Key::Field(s) if crate::frontend::ast::is_identifier(s.as_bytes()) => write!(f, ".{s}")?,
                Key::Field(s) => write!(f, "[{s}]")?,
            }
        }
        Ok(())
    }
}

impl Serialize for VarPath {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// A call inside the value IR.
#[derive(Debug, Clone, PartialEq)]
pub struct CallValue {
    /// Qualified callee name (`os.execute`, `Bean.new`) when static.
    pub name: Option<String>,
    /// Method name for `obj:m(...)` calls.
    pub method: Option<String>,
    /// Receiver of a method call; passed as the first argument.
    pub receiver: Option<Value>,
    pub args: Vec<Value>,
    pub arg_spans: Vec<Span>,
    pub span: Span,
}

impl CallValue {
    /// Arguments as the callee sees them (receiver first for `:` calls).
    pub fn effective_args(&self) -> Vec<&Value> {
        self.receiver.iter().chain(self.args.iter()).collect()
    }
}

/// Expression values after lowering. Nested calls have been hoisted into
/// temporaries, so a `Call` only appears at the top of a node's value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Nil,
    Bool(bool),
    Number(String),
    Str(Vec<u8>),
    Read(VarPath),
    Call(Box<CallValue>),
    Table(Vec<(Key, Value)>),
    Binary { op: BinOp, lhs: Box<Value>, rhs: Box<Value> },
    Unary { op: UnOp, operand: Box<Value> },
    Closure(String),
    /// Incoming value of a formal parameter.
    Param(String),
    /// Any of several values (merged alternatives).
    Join(Vec<Value>),
}

impl Value {
    pub fn is_literal(&self) -> bool {
        matches!(self, Value::Nil | Value::Bool(_) | Value::Number(_) | Value::Str(_))
    }

    pub fn as_call(&self) -> Option<&CallValue> {
        match self {
            Value::Call(c) => Some(c),
            _ => None,
        }
    }

    /// Whether the value can yield several results (`f()`, `...`).
    pub fn is_multi(&self) -> bool {
        match self {
            Value::Call(_) => true,
            Value::Read(p) => p.base == "..." || p.base.starts_with("...#"),
            _ => false,
        }
    }

    /// Collect every path read by this value, in order of appearance.
    pub fn reads(&self, out: &mut Vec<VarPath>) {
        match self {
            Value::Read(p) => out.push(p.clone()),
            Value::Call(c) => {
                for a in c.effective_args() {
                    a.reads(out);
                }
            }
            Value::Table(items) => items.iter().for_each(|(_, v)| v.reads(out)),
            Value::Binary { lhs, rhs, .. } => {
                lhs.reads(out);
                rhs.reads(out);
            }
            Value::Unary { operand, .. } => operand.reads(out),
            Value::Join(vs) => vs.iter().for_each(|v| v.reads(out)),
            Value::Nil
            | Value::Bool(_)
            | Value::Number(_)
            | Value::Str(_)
            | Value::Closure(_)
            | Value::Param(_) => {}
        }
    }

    pub fn callees(&self, out: &mut Vec<String>) {
        match self {
            Value::Call(c) => {
                if let Some(n) = &c.name {
                    out.push(n.clone());
                }
                c.effective_args().into_iter().for_each(|a| a.callees(out));
            }
            Value::Table(items) => items.iter().for_each(|(_, v)| v.callees(out)),
            Value::Binary { lhs, rhs, .. } => {
                lhs.callees(out);
                rhs.callees(out);
            }
            Value::Unary { operand, .. } => operand.callees(out),
            Value::Join(vs) => vs.iter().for_each(|v| v.callees(out)),
            _ => {}
        }
    }

    /// Apply `f` to every path in the value.
    pub fn map_paths(&mut self, f: &mut impl FnMut(&mut VarPath)) {
        match self {
            Value::Read(p) => f(p),
            Value::Call(c) => {
                if let Some(r) = &mut c.receiver {
                    r.map_paths(f);
                }
                c.args.iter_mut().for_each(|a| a.map_paths(f));
            }
            Value::Table(items) => items.iter_mut().for_each(|(_, v)| v.map_paths(f)),
            Value::Binary { lhs, rhs, .. } => {
                lhs.map_paths(f);
                rhs.map_paths(f);
            }
            Value::Unary { operand, .. } => operand.map_paths(f),
            Value::Join(vs) => vs.iter_mut().for_each(|v| v.map_paths(f)),
            _ => {}
        }
    }
}

/// What a node does.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Op {
    #[default]
    Nop,
    Assign { targets: Vec<VarPath>, values: Vec<Value> },
    /// A call evaluated for its side effects.
    Eval(Value),
    Branch(Value),
    Return(Vec<Value>),
}

impl Op {
    /// The value assigned to the `i`th target, following Lua's
    /// multiple-assignment adjustment rules.
    pub fn value_for(&self, i: usize) -> Option<&Value> {
        let Op::Assign { values, .. } = self else { return None };
        if i + 1 < values.len() {
            return values.get(i);
        }
        let last = values.last()?;
        if i + 1 == values.len() || last.is_multi() {
            Some(last)
        } else {
            None
        }
    }

    pub fn values(&self) -> Vec<&Value> {
        match self {
            Op::Nop => Vec::new(),
            Op::Assign { values, .. } | Op::Return(values) => values.iter().collect(),
            Op::Eval(v) | Op::Branch(v) => vec![v],
        }
    }

    fn values_mut(&mut self) -> Vec<&mut Value> {
        match self {
            Op::Nop => Vec::new(),
            Op::Assign { values, .. } | Op::Return(values) => values.iter_mut().collect(),
            Op::Eval(v) | Op::Branch(v) => vec![v],
        }
    }

    /// The call at the top of this node, if any.
    pub fn top_call(&self) -> Option<&CallValue> {
        match self {
            Op::Eval(v) => v.as_call(),
            Op::Assign { values, .. } | Op::Return(values) if values.len() == 1 => values[0].as_call(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfgNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub op: Op,
    /// Short source excerpt.
    pub label: String,
    pub span: Span,
    pub preds: Vec<NodeId>,
    pub succs: Vec<NodeId>,
    /// Defined paths (Assignment nodes only).
    pub lh: Vec<VarPath>,
    /// Used paths.
    pub rh: Vec<VarPath>,
    /// Qualified names of called functions.
    pub callees: Vec<String>,
    /// Function whose source this node came from.
    pub func: String,
    /// File the node's span refers to.
    pub file: String,
    /// Inlining depth (0 for nodes of the root function).
    pub depth: u32,
}

impl CfgNode {
    pub fn new(kind: NodeKind, op: Op, label: impl Into<String>, span: Span) -> Self {
        let mut n = CfgNode {
            id: 0,
            kind,
            op,
            label: label.into(),
            span,
            preds: Vec::new(),
            succs: Vec::new(),
            lh: Vec::new(),
            rh: Vec::new(),
            callees: Vec::new(),
            func: String::new(),
            file: String::new(),
            depth: 0,
        };
        n.refresh();
        n
    }

    /// Recompute `lh`, `rh` and `callees` from `op`.
    pub fn refresh(&mut self) {
        self.lh.clear();
        self.rh.clear();
        self.callees.clear();
        if let Op::Assign { targets, .. } = &self.op {
            self.lh = targets.clone();
            // `t.a = v` reads `t`, and `t[k] = v` reads nothing else here.
        }
        for v in self.op.values() {
            v.reads(&mut self.rh);
            v.callees(&mut self.callees);
        }
        let mut seen = BTreeSet::new();
        self.rh.retain(|p| seen.insert(p.clone()));
    }

    pub fn is_assignment(&self) -> bool {
        self.kind == NodeKind::Assignment
    }

    pub fn top_call(&self) -> Option<&CallValue> {
        self.op.top_call()
    }

    pub fn map_paths(&mut self, mut f: impl FnMut(&mut VarPath)) {
        if let Op::Assign { targets, .. } = &mut self.op {
            targets.iter_mut().for_each(&mut f);
        }
        for v in self.op.values_mut() {
            v.map_paths(&mut f);
        }
        self.refresh();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CfgKind {
    Chunk,
    Function,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cfg {
    /// Qualified function name, or [`CHUNK_NAME`].
    pub name: String,
    pub kind: CfgKind,
    pub file: String,
    pub params: Vec<String>,
    pub is_vararg: bool,
    /// Names local to this function (params, locals, temporaries).
    pub locals: BTreeSet<String>,
    pub nodes: Vec<CfgNode>,
    pub entry: NodeId,
    pub exit: NodeId,
    pub span: Span,
    /// Set for functions registered with the LuCI dispatcher.
    pub web_reachable: bool,
}

impl Cfg {
    /// An empty graph with connected Entry and Exit.
    pub fn new(name: impl Into<String>, file: impl Into<String>, kind: CfgKind, span: Span) -> Self {
        let name = name.into();
        let file = file.into();
        let mut cfg = Cfg {
            name,
            kind,
            file,
            params: Vec::new(),
            is_vararg: false,
            locals: BTreeSet::new(),
            nodes: Vec::new(),
            entry: 0,
            exit: 0,
            span,
            web_reachable: false,
        };
        cfg.entry = cfg.push(CfgNode::new(NodeKind::Entry, Op::Nop, "entry", span));
        cfg.exit = cfg.push(CfgNode::new(NodeKind::Exit, Op::Nop, "exit", span));
        cfg
    }

    /// Append a node, stamping its id and (if unset) origin.
    pub fn push(&mut self, mut node: CfgNode) -> NodeId {
        let id = self.nodes.len();
        node.id = id;
        if node.func.is_empty() {
            node.func = self.name.clone();
        }
        if node.file.is_empty() {
            node.file = self.file.clone();
        }
        self.nodes.push(node);
        id
    }

    pub fn add_edge(&mut self, from: NodeId, to: NodeId) {
        if !self.nodes[from].succs.contains(&to) {
            self.nodes[from].succs.push(to);
            self.nodes[to].preds.push(from);
        }
    }

    pub fn remove_edge(&mut self, from: NodeId, to: NodeId) {
        self.nodes[from].succs.retain(|&s| s != to);
        self.nodes[to].preds.retain(|&p| p != from);
    }

    pub fn node(&self, id: NodeId) -> &CfgNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn assignments(&self) -> impl Iterator<Item = &CfgNode> {
        self.nodes.iter().filter(|n| n.is_assignment())
    }

    /// Nodes reachable from Entry in reverse postorder.
    pub fn reverse_postorder(&self) -> Vec<NodeId> {
        let mut seen = FixedBitSet::with_capacity(self.nodes.len());
        let mut post = Vec::with_capacity(self.nodes.len());
        // iterative DFS: (node, next successor index)
        let mut stack = vec![(self.entry, 0usize)];
        seen.insert(self.entry);
        while let Some(&mut (n, ref mut i)) = stack.last_mut() {
            if let Some(&s) = self.nodes[n].succs.get(*i) {
                *i += 1;
                if !seen.put(s) {
                    stack.push((s, 0));
                }
            } else {
                post.push(n);
                stack.pop();
            }
        }
        post.reverse();
        post
    }

    /// Forward reachability from `from` (including `from` itself).
    pub fn reachable_from(&self, from: NodeId) -> FixedBitSet {
        let mut seen = FixedBitSet::with_capacity(self.nodes.len());
        let mut queue = VecDeque::from([from]);
        seen.insert(from);
        while let Some(n) = queue.pop_front() {
            for &s in &self.nodes[n].succs {
                if !seen.put(s) {
                    queue.push_back(s);
                }
            }
        }
        seen
    }

    /// Check the structural invariants; returns a description of the first violation.
    pub fn validate(&self) -> Result<(), String> {
        let entries = self.nodes.iter().filter(|n| n.kind == NodeKind::Entry).count();
        let exits = self.nodes.iter().filter(|n| n.kind == NodeKind::Exit).count();
        if entries != 1 || exits != 1 {
            return Err(format!("{}: {entries} entry and {exits} exit nodes", self.name));
        }
        let entry = &self.nodes[self.entry];
        if !entry.preds.is_empty() || entry.succs.len() != 1 {
            return Err(format!("{}: entry has {} preds, {} succs", self.name, entry.preds.len(), entry.succs.len()));
        }
        let exit = &self.nodes[self.exit];
        if !exit.succs.is_empty() || exit.preds.is_empty() {
            return Err(format!("{}: exit has {} preds, {} succs", self.name, exit.preds.len(), exit.succs.len()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(format!("{}: node {i} carries id {}", self.name, n.id));
            }
            for &s in &n.succs {
                if !self.nodes[s].preds.contains(&i) {
                    return Err(format!("{}: edge {i}->{s} missing from preds", self.name));
                }
            }
            for &p in &n.preds {
                if !self.nodes[p].succs.contains(&i) {
                    return Err(format!("{}: edge {p}->{i} missing from succs", self.name));
                }
            }
        }
        let reach = self.reachable_from(self.entry);
        if let Some(n) = (0..self.nodes.len()).find(|&i| !reach.contains(i)) {
            return Err(format!("{}: node {n} ({}) unreachable", self.name, self.nodes[n].label));
        }
        Ok(())
    }

    /// Drop nodes unreachable from Entry (Exit is always kept) and renumber.
    pub fn prune_unreachable(&mut self) {
        let reach = self.reachable_from(self.entry);
        let keep: Vec<bool> = (0..self.nodes.len()).map(|i| reach.contains(i) || i == self.exit).collect();
        if keep.iter().all(|&k| k) {
            return;
        }
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut next = 0;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                remap[i] = next;
                next += 1;
            }
        }
        let old = std::mem::take(&mut self.nodes);
        for (i, mut n) in old.into_iter().enumerate() {
            if !keep[i] {
                continue;
            }
            n.id = remap[i];
            n.preds = n.preds.iter().filter(|&&p| keep[p]).map(|&p| remap[p]).collect();
            n.succs = n.succs.iter().filter(|&&s| keep[s]).map(|&s| remap[s]).collect();
            self.nodes.push(n);
        }
        self.entry = remap[self.entry];
        self.exit = remap[self.exit];
    }
}

/// Something the CFG layer could not model or resolve. Never fatal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub file: String,
    pub line: u32,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    Lowering,
    UnresolvedCallee,
    DepthExceeded,
    NodeBudget,
    MalformedEntry,
    TargetNotFound,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {:?}: {}", self.file, self.line, self.kind, self.message)
    }
}

/// Small helper for hand-built graphs in tests and tools.
pub struct CfgBuilder {
    cfg: Cfg,
}

impl CfgBuilder {
    pub fn new(name: &str) -> Self {
        CfgBuilder { cfg: Cfg::new(name, "<test>", CfgKind::Function, Span::default()) }
    }

    /// Add `targets := <reads of uses>`.
    pub fn assign(&mut self, targets: &[&str], uses: &[&str]) -> NodeId {
        let values = if uses.is_empty() {
            vec![Value::Number("1".into())]
        } else {
            vec![uses.iter().map(|u| Value::Read(VarPath::parse(u))).reduce(concat).unwrap()]
        };
        let op = Op::Assign { targets: targets.iter().map(|t| VarPath::parse(t)).collect(), values };
        let label = format!("{} := {}", targets.join(", "), uses.join(" .. "));
        self.cfg.push(CfgNode::new(NodeKind::Assignment, op, label, Span::default()))
    }

    pub fn condition(&mut self, uses: &[&str]) -> NodeId {
        let v = uses.iter().map(|u| Value::Read(VarPath::parse(u))).reduce(concat).unwrap_or(Value::Bool(true));
        self.cfg.push(CfgNode::new(NodeKind::Condition, Op::Branch(v), "cond", Span::default()))
    }

    pub fn call(&mut self, name: &str, uses: &[&str]) -> NodeId {
        let call = CallValue {
            name: Some(name.into()),
            method: None,
            receiver: None,
            args: uses.iter().map(|u| Value::Read(VarPath::parse(u))).collect(),
            arg_spans: vec![Span::default(); uses.len()],
            span: Span::default(),
        };
        self.cfg.push(CfgNode::new(NodeKind::CallSite, Op::Eval(Value::Call(Box::new(call))), name, Span::default()))
    }

    pub fn entry(&self) -> NodeId {
        self.cfg.entry
    }

    pub fn exit(&self) -> NodeId {
        self.cfg.exit
    }

    pub fn edge(&mut self, from: NodeId, to: NodeId) -> &mut Self {
        self.cfg.add_edge(from, to);
        self
    }

    /// Chain `ids` with edges in order.
    pub fn seq(&mut self, ids: &[NodeId]) -> &mut Self {
        for w in ids.windows(2) {
            self.cfg.add_edge(w[0], w[1]);
        }
        self
    }

    pub fn build(self) -> Cfg {
        self.cfg
    }
}

fn concat(a: Value, b: Value) -> Value {
    Value::Binary { op: BinOp::Concat, lhs: Box::new(a), rhs: Box::new(b) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_relations() {
        let t = VarPath::parse("t");
        let ta = VarPath::parse("t.a");
        let tab = VarPath::parse("t.a.b");
        let tdyn = VarPath::parse("t[*]");
        assert!(t.kills(&ta) && t.kills(&t) && ta.kills(&tab));
        assert!(!ta.kills(&t) && !ta.kills(&VarPath::parse("t.b")));
        assert!(!tdyn.kills(&ta) && !tdyn.kills(&tdyn));
        assert!(tdyn.overlaps(&ta) && ta.overlaps(&tab) && !ta.overlaps(&VarPath::parse("t.b")));
        assert_eq!(ta.rebase(&t, &VarPath::ident("bean")).unwrap().to_string(), "bean.a");
        assert_eq!(tdyn.to_string(), "t[*]");
        assert_eq!(VarPath::parse("self.name").fields, vec![Key::Field("name".into())]);
    }

    #[test]
    fn value_for_adjusts_like_lua() {
        let call = Value::Call(Box::new(CallValue {
            name: Some("f".into()),
            method: None,
            receiver: None,
            args: vec![],
            arg_spans: vec![],
            span: Span::default(),
        }));
        let op = Op::Assign { targets: vec![VarPath::ident("a"), VarPath::ident("b")], values: vec![call] };
        assert!(op.value_for(1).unwrap().as_call().is_some());
        let op = Op::Assign {
            targets: vec![VarPath::ident("a"), VarPath::ident("b")],
            values: vec![Value::Number("1".into())],
        };
        assert!(op.value_for(1).is_none());
    }

    #[test]
    fn builder_graph_validates_and_prunes() {
        let mut b = CfgBuilder::new("f");
        let x = b.assign(&["x"], &[]);
        let dead = b.assign(&["y"], &["x"]);
        let (e, exit) = (b.entry(), b.exit());
        b.seq(&[e, x, exit]);
        let mut cfg = b.build();
        assert!(cfg.validate().is_err());
        cfg.prune_unreachable();
        cfg.validate().unwrap();
        assert_eq!(cfg.len(), 3);
        assert!(cfg.nodes.iter().all(|n| n.label != "y := x") || dead == 0);
    }

    #[test]
    fn reverse_postorder_visits_loop_head_first() {
        let mut b = CfgBuilder::new("f");
        let c = b.condition(&["c"]);
        let body = b.assign(&["x"], &["x"]);
        let (e, exit) = (b.entry(), b.exit());
        b.seq(&[e, c, body, c]).edge(c, exit);
        let cfg = b.build();
        let rpo = cfg.reverse_postorder();
        assert_eq!(rpo[0], e);
        assert!(rpo.iter().position(|&n| n == c) < rpo.iter().position(|&n| n == body));
    }
}
