//! Field-sensitive forward propagation from one source node.
//!
//! Starting from `list_tf = [source]`, an Assignment joins the list when a
//! member reaches it (control-flow reachability and a reaching definition),
//! it reads something that member defines, and what it reads is tainted at
//! the attribute level. The tainted paths grow as nodes are added.

use std::collections::{BTreeSet, HashMap};

use fixedbitset::FixedBitSet;

use crate::cfg::{Cfg, NodeId, Value, VarPath};
use crate::dataflow::{join, ConstraintTable};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Propagation {
    /// Chain members in the order they were added; `list_tf[0]` is the source.
    pub list_tf: Vec<NodeId>,
    /// Every tainted identity, plain or attribute path.
    pub tainted: BTreeSet<VarPath>,
}

impl Propagation {
    /// The attribute paths among the tainted identities.
    pub fn tainted_attrs(&self) -> Vec<VarPath> {
        self.tainted.iter().filter(|p| !p.is_plain()).cloned().collect()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.list_tf.contains(&node)
    }
}

/// `read` is tainted as a whole.
fn covered(tainted: &BTreeSet<VarPath>, read: &VarPath) -> bool {
    tainted.iter().any(|t| t.may_prefix(read))
}

/// `read` is a table holding a tainted field.
fn holds_tainted(tainted: &BTreeSet<VarPath>, read: &VarPath) -> bool {
    tainted.iter().any(|t| read.may_prefix(t))
}

/// The identities defined by `target` that become tainted when it receives
/// `value`. Realizes `trace_tainted_attr`.
fn tainted_parts(tainted: &BTreeSet<VarPath>, value: &Value, target: &VarPath, out: &mut Vec<VarPath>) {
    match value {
        Value::Table(items) => {
            for (k, v) in items {
                tainted_parts(tainted, v, &target.child(k.clone()), out);
            }
        }
        Value::Read(r) => {
            if covered(tainted, r) {
                out.push(target.clone());
                return;
            }
            for t in tainted.iter().filter(|t| r.may_prefix(t)) {
                match t.rebase(r, target) {
                    Some(p) => out.push(p),
                    None => out.push(target.clone()),
                }
            }
        }
        Value::Join(vs) => vs.iter().for_each(|v| tainted_parts(tainted, v, target, out)),
        _ => {
            let mut reads = Vec::new();
            value.reads(&mut reads);
            if reads.iter().any(|r| covered(tainted, r) || holds_tainted(tainted, r)) {
                out.push(target.clone());
            }
        }
    }
}

/// Run the propagation over `order` (the Assignment nodes, `list_AN`) until
/// nothing changes.
pub fn propagate_taint(cfg: &Cfg, ct: &ConstraintTable, source: NodeId, order: &[NodeId]) -> Propagation {
    let n = cfg.nodes.len();
    let mut list_tf = vec![source];
    let mut in_tf = FixedBitSet::with_capacity(n);
    in_tf.insert(source);
    let mut tainted: BTreeSet<VarPath> = cfg.nodes[source].lh.iter().cloned().collect();
    let mut reach: HashMap<NodeId, FixedBitSet> = HashMap::new();
    let mut ins: HashMap<NodeId, FixedBitSet> = HashMap::new();

    let mut changed = true;
    while changed {
        changed = false;
        for &node in order {
            if in_tf.contains(node) {
                continue;
            }
            let nd = &cfg.nodes[node];
            if nd.rh.is_empty() {
                continue;
            }
            let reaching = ins.entry(node).or_insert_with(|| join(cfg, ct, node));
            let mut members = reaching.clone();
            members.intersect_with(&in_tf);
            let mut relevant: Vec<&VarPath> = Vec::new();
            for other in members.ones() {
                if !reach.entry(other).or_insert_with(|| cfg.reachable_from(other)).contains(node) {
                    continue;
                }
                for r in &nd.rh {
                    if cfg.nodes[other].lh.iter().any(|l| l.overlaps(r)) && !relevant.contains(&r) {
                        relevant.push(r);
                    }
                }
            }
            // an attribute read must hit a tainted attribute
            if !relevant.iter().any(|r| covered(&tainted, r) || holds_tainted(&tainted, r)) {
                continue;
            }
            let mut parts = Vec::new();
            for (j, target) in nd.lh.iter().enumerate() {
                if let Some(v) = nd.op.value_for(j) {
                    tainted_parts(&tainted, v, target, &mut parts);
                }
            }
            if parts.is_empty() {
                continue;
            }
            tainted.extend(parts);
            list_tf.push(node);
            in_tf.insert(node);
            changed = true;
        }
    }
    Propagation { list_tf, tainted }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::{build_cfgs, expand, CfgBuilder, FunctionDict, InlineOptions};
    use crate::dataflow::analyze;
    use crate::frontend::parse_chunk;

    fn order(cfg: &Cfg) -> Vec<NodeId> {
        cfg.reverse_postorder().into_iter().filter(|&i| cfg.nodes[i].is_assignment()).collect()
    }

    fn labels(cfg: &Cfg, ids: &[NodeId]) -> Vec<String> {
        ids.iter().map(|&i| cfg.nodes[i].label.clone()).collect()
    }

    #[test]
    fn source_without_dependents() {
        let mut b = CfgBuilder::new("f");
        let s = b.assign(&["a"], &[]);
        let x = b.assign(&["x"], &["y"]);
        let (e, exit) = (b.entry(), b.exit());
        b.seq(&[e, s, x, exit]);
        let cfg = b.build();
        let ct = analyze(&cfg).unwrap();
        assert_eq!(propagate_taint(&cfg, &ct, s, &order(&cfg)).list_tf, vec![s]);
    }

    #[test]
    fn rename_chain() {
        let mut b = CfgBuilder::new("f");
        let s = b.assign(&["a"], &[]);
        let n1 = b.assign(&["b"], &["a"]);
        let n2 = b.assign(&["c"], &["b"]);
        let sink = b.call("sink", &["c"]);
        let (e, exit) = (b.entry(), b.exit());
        b.seq(&[e, s, n1, n2, sink, exit]);
        let cfg = b.build();
        let ct = analyze(&cfg).unwrap();
        assert_eq!(propagate_taint(&cfg, &ct, s, &order(&cfg)).list_tf, vec![s, n1, n2]);
    }

    #[test]
    fn unreachable_or_killed_definitions_do_not_extend() {
        let mut b = CfgBuilder::new("f");
        let read_first = b.assign(&["b"], &["a"]);
        let s = b.assign(&["a"], &[]);
        let kill = b.assign(&["a"], &[]);
        let after = b.assign(&["c"], &["a"]);
        let (e, exit) = (b.entry(), b.exit());
        b.seq(&[e, read_first, s, kill, after, exit]);
        let cfg = b.build();
        let ct = analyze(&cfg).unwrap();
        assert_eq!(propagate_taint(&cfg, &ct, s, &order(&cfg)).list_tf, vec![s]);
    }

    #[test]
    fn field_sensitive_constructor() {
        let src = include_str!("../../tests/fixtures/field/usr/lib/lua/luci/controller/bean.lua");
        let chunk = parse_chunk(src.as_bytes(), "bean.lua").unwrap();
        let cfgs = build_cfgs(&chunk, src.as_bytes()).cfgs;
        let dict = FunctionDict::build(&cfgs, false);
        let cfg = expand(&cfgs[0], &cfgs, &dict, &InlineOptions::default()).cfg;
        let ct = analyze(&cfg).unwrap();
        let source = cfg.nodes.iter().find(|n| n.callees == ["os.getenv"]).unwrap().id;
        let p = propagate_taint(&cfg, &ct, source, &order(&cfg));
        let chain = labels(&cfg, &p.list_tf);
        assert!(chain.contains(&"local command1 = \"echo \" .. bean.name".to_string()), "{chain:?}");
        assert!(!chain.iter().any(|l| l.contains("command2")), "{chain:?}");
        let attrs: Vec<String> = p.tainted_attrs().iter().map(|a| a.to_string()).collect();
        assert!(attrs.contains(&"bean.name".to_string()), "{attrs:?}");
        assert!(!attrs.iter().any(|a| a.ends_with("gender")), "{attrs:?}");
    }

    #[test]
    fn table_constructor_fields() {
        let src = "local s = os.getenv(\"x\") local t = {a = s, b = \"k\"} local u = t.a local v = t.b";
        let chunk = parse_chunk(src.as_bytes(), "t.lua").unwrap();
        let cfg = build_cfgs(&chunk, src.as_bytes()).cfgs.remove(0);
        let ct = analyze(&cfg).unwrap();
        let source = cfg.nodes.iter().find(|n| n.callees == ["os.getenv"]).unwrap().id;
        let p = propagate_taint(&cfg, &ct, source, &order(&cfg));
        let chain = labels(&cfg, &p.list_tf);
        assert_eq!(chain.len(), 3, "{chain:?}");
        assert!(chain[2].contains("local u"));
    }
}
