//! Per-call-site inlining with shadow variables.
//!
//! Each inlined call gets a fresh site number `s`. The callee's parameters
//! become `param#s := arg` assignments, its locals are renamed `x#s`, and its
//! returns assign `fname$ret#s` (then `fname$ret2#s`, ...), which the call
//! node reads in place of the call.

use std::collections::HashSet;

use thiserror::Error;

use super::{Cfg, CfgNode, Diagnostic, DiagnosticKind, FunctionDict, NodeId, NodeKind, Op, Value, VarPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InlineOptions {
    pub max_depth: u32,
    /// Stop inlining once the expanded graph has this many nodes.
    pub max_nodes: usize,
}

impl Default for InlineOptions {
    fn default() -> Self {
        InlineOptions { max_depth: 3, max_nodes: 200_000 }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InlineError {
    #[error("node {0} has no call")]
    NotACall(NodeId),
    #[error("callee {0} does not resolve")]
    UnresolvedCallee(String),
}

/// A root Cfg after inlining.
#[derive(Debug, Clone)]
pub struct Expanded {
    pub cfg: Cfg,
    pub diagnostics: Vec<Diagnostic>,
    /// Number of call sites inlined.
    pub sites: u32,
}

/// Inline every resolvable call in `root`, recursively, up to the depth limit.
pub fn expand(root: &Cfg, cfgs: &[Cfg], dict: &FunctionDict, opts: &InlineOptions) -> Expanded {
    let mut cfg = root.clone();
    let mut diagnostics = Vec::new();
    let mut next_site = 0u32;
    let mut i = 0;
    while i < cfg.nodes.len() {
        let node = &cfg.nodes[i];
        let Some(name) = node.top_call().and_then(|c| c.name.as_ref()) else {
            i += 1;
            continue;
        };
        let targets = dict.resolve(name, &node.file);
        if targets.is_empty() {
            i += 1;
            continue;
        }
        let diag = |kind, message: String| Diagnostic { kind, file: node.file.clone(), line: node.span.start.line, message };
        if node.depth >= opts.max_depth {
            diagnostics.push(diag(
                DiagnosticKind::DepthExceeded,
                format!("call to {name} in {} left opaque at depth {}", root.name, node.depth),
            ));
        } else if cfg.nodes.len() >= opts.max_nodes {
            diagnostics.push(diag(DiagnosticKind::NodeBudget, format!("call to {name} in {} left opaque", root.name)));
        } else {
            let callees: Vec<&Cfg> = targets.iter().map(|&t| &cfgs[t]).collect();
            inline_call(&mut cfg, i, &callees, &mut next_site).expect("call resolved above");
        }
        i += 1;
    }
    Expanded { cfg, diagnostics, sites: next_site }
}

/// Splice a renamed copy of each callee at `site`. Several callees (exact
/// dictionary mode) become alternative branches. Returns the new node ids.
pub fn inline_call(
    caller: &mut Cfg,
    site: NodeId,
    callees: &[&Cfg],
    next_site: &mut u32,
) -> Result<Vec<NodeId>, InlineError> {
    let node = caller.nodes[site].clone();
    let call = node.top_call().ok_or(InlineError::NotACall(site))?.clone();
    if callees.is_empty() {
        return Err(InlineError::UnresolvedCallee(call.name.clone().unwrap_or_default()));
    }
    let first_new = caller.nodes.len();
    let preds = node.preds.clone();
    for &p in &preds {
        caller.remove_edge(p, site);
    }
    let fork = if callees.len() > 1 {
        let mut f = CfgNode::new(NodeKind::Statement, Op::Nop, format!("call {}", callees[0].name), call.span);
        f.func = node.func.clone();
        f.file = node.file.clone();
        f.depth = node.depth;
        let id = caller.push(f);
        for &p in &preds {
            caller.add_edge(p, id);
        }
        Some(id)
    } else {
        None
    };

    let mut returns: Vec<Vec<VarPath>> = Vec::new();
    for callee in callees {
        *next_site += 1;
        let (first, rets) = splice(caller, callee, &call, &node, *next_site, site);
        match fork {
            Some(f) => caller.add_edge(f, first),
            None => preds.iter().for_each(|&p| caller.add_edge(p, first)),
        }
        returns.push(rets);
    }

    let arity = returns.iter().map(Vec::len).max().unwrap_or(0);
    let ret_value = |j: usize| {
        let mut alts: Vec<Value> =
            returns.iter().filter_map(|r| r.get(j)).map(|p| Value::Read(p.clone())).collect();
        match alts.len() {
            0 => Value::Nil,
            1 => alts.remove(0),
            _ => Value::Join(alts),
        }
    };
    let cont = &mut caller.nodes[site];
    match &cont.op {
        Op::Assign { targets, .. } => {
            let targets = targets.clone();
            let values = (0..targets.len()).map(ret_value).collect();
            cont.op = Op::Assign { targets, values };
        }
        Op::Return(_) => cont.op = Op::Return((0..arity.max(1)).map(ret_value).collect()),
        _ => {
            cont.op = Op::Nop;
            cont.kind = NodeKind::Statement;
        }
    }
    cont.refresh();
    Ok((first_new..caller.nodes.len()).collect())
}

pub fn shadow_name(name: &str, site: u32) -> String {
    format!("{name}#{site}")
}

pub fn return_name(func: &str, position: usize, site: u32) -> String {
    if position == 0 {
        format!("{func}$ret#{site}")
    } else {
        format!("{func}$ret{}#{site}", position + 1)
    }
}

fn is_param_node(n: &CfgNode) -> bool {
    matches!(&n.op, Op::Assign { values, .. } if matches!(values.as_slice(), [Value::Param(_)]))
}

/// Copy one callee in front of `site`; returns the first new node and the
/// return shadow paths.
fn splice(
    caller: &mut Cfg,
    callee: &Cfg,
    call: &super::CallValue,
    call_node: &CfgNode,
    s: u32,
    site: NodeId,
) -> (NodeId, Vec<VarPath>) {
    let depth = call_node.depth + 1;
    let rename = |p: &mut VarPath| {
        if callee.locals.contains(&p.base) {
            p.base = shadow_name(&p.base, s);
        }
    };

    // parameter shadows, bound to the actual arguments
    let args = call.effective_args();
    let spans: Vec<_> =
        call.receiver.iter().map(|_| call.span).chain(call.arg_spans.iter().copied()).collect();
    let mut shadows = Vec::with_capacity(callee.params.len());
    for (i, param) in callee.params.iter().enumerate() {
        let value = if param == "..." {
            Value::Join(args.iter().skip(i).map(|v| (*v).clone()).collect())
        } else {
            args.get(i).map(|v| (*v).clone()).unwrap_or(Value::Nil)
        };
        let target = VarPath::ident(shadow_name(param, s));
        let label = format!("{target} := arg {} of {}", i + 1, callee.name);
        let span = spans.get(i).copied().unwrap_or(call.span);
        let mut n = CfgNode::new(NodeKind::Assignment, Op::Assign { targets: vec![target], values: vec![value] }, label, span);
        n.func = callee.name.clone();
        n.file = call_node.file.clone();
        n.depth = depth;
        shadows.push(caller.push(n));
    }
    for w in shadows.windows(2) {
        caller.add_edge(w[0], w[1]);
    }

    // body copy
    let mut skip: HashSet<NodeId> = HashSet::from([callee.entry, callee.exit]);
    let mut last_param = callee.entry;
    while let Some(&next) = callee.nodes[last_param].succs.first() {
        if !is_param_node(&callee.nodes[next]) || skip.contains(&next) {
            break;
        }
        skip.insert(next);
        last_param = next;
    }
    let body_start = callee.nodes[last_param].succs.first().copied().unwrap_or(callee.exit);

    let mut map = vec![usize::MAX; callee.nodes.len()];
    let mut ret_paths: Vec<VarPath> = Vec::new();
    for n in &callee.nodes {
        if skip.contains(&n.id) {
            continue;
        }
        let mut c = n.clone();
        c.preds.clear();
        c.succs.clear();
        c.depth = n.depth + depth;
        c.map_paths(rename);
        if let Op::Return(values) = &c.op {
            if values.is_empty() {
                c.op = Op::Nop;
            } else {
                let targets: Vec<VarPath> =
                    (0..values.len()).map(|j| VarPath::ident(return_name(&callee.name, j, s))).collect();
                if targets.len() > ret_paths.len() {
                    ret_paths = targets.clone();
                }
                c.op = Op::Assign { targets, values: values.clone() };
                c.kind = NodeKind::Assignment;
            }
            c.refresh();
        }
        map[n.id] = caller.push(c);
    }
    for n in &callee.nodes {
        if skip.contains(&n.id) {
            continue;
        }
        for &t in &n.succs {
            if t == callee.exit {
                caller.add_edge(map[n.id], site);
            } else if map[t] != usize::MAX {
                caller.add_edge(map[n.id], map[t]);
            }
        }
    }

    let body_first = if body_start == callee.exit { site } else { map[body_start] };
    let first = match (shadows.first(), shadows.last()) {
        (Some(&f), Some(&l)) => {
            caller.add_edge(l, body_first);
            f
        }
        _ => body_first,
    };
    (first, ret_paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::build_cfgs;
    use crate::frontend::parse_chunk;

    fn program(src: &str) -> (Vec<Cfg>, FunctionDict) {
        let chunk = parse_chunk(src.as_bytes(), "t.lua").unwrap();
        let cfgs = build_cfgs(&chunk, src.as_bytes()).cfgs;
        let dict = FunctionDict::build(&cfgs, false);
        (cfgs, dict)
    }

    fn named<'a>(cfgs: &'a [Cfg], name: &str) -> &'a Cfg {
        cfgs.iter().find(|c| c.name == name).unwrap()
    }

    #[test]
    fn parameter_becomes_shadow_assignment() {
        let (cfgs, dict) = program("function f(x) g(x) end\nfunction caller(a) f(a) end");
        let out = expand(named(&cfgs, "caller"), &cfgs, &dict, &InlineOptions::default());
        out.cfg.validate().unwrap();
        let shadow = out.cfg.nodes.iter().find(|n| n.lh == vec![VarPath::ident("x#1")]).unwrap();
        assert_eq!(shadow.rh, vec![VarPath::ident("a")]);
        let g = out.cfg.nodes.iter().find(|n| n.callees == ["g"]).unwrap();
        assert_eq!(g.rh, vec![VarPath::ident("x#1")]);
        assert!(shadow.succs.contains(&g.id));
    }

    #[test]
    fn two_sites_get_disjoint_instances() {
        let (cfgs, _) = program("function f(x) local y = x return y end\nfunction c(a, b) local p = f(a) local q = f(b) end");
        let root = named(&cfgs, "c");
        let mut cfg = root.clone();
        let mut site = 0;
        let call_nodes: Vec<NodeId> = cfg.nodes.iter().filter(|n| n.top_call().is_some()).map(|n| n.id).collect();
        let f = named(&cfgs, "f");
        let first = inline_call(&mut cfg, call_nodes[0], &[f], &mut site).unwrap();
        let second = inline_call(&mut cfg, call_nodes[1], &[f], &mut site).unwrap();
        assert!(first.iter().all(|n| !second.contains(n)));
        let defs = |ids: &[NodeId]| -> HashSet<String> {
            ids.iter().flat_map(|&i| cfg.nodes[i].lh.iter().map(|p| p.base.clone())).collect()
        };
        assert!(defs(&first).is_disjoint(&defs(&second)));
        assert!(defs(&first).contains("y#1") && defs(&second).contains("y#2"));
        cfg.validate().unwrap();
        let p = cfg.nodes.iter().find(|n| n.lh == vec![VarPath::ident("p")]).unwrap();
        assert_eq!(p.rh, vec![VarPath::ident("f$ret#1")]);
    }

    /// Node count of a root after expansion, computed by walking the original
    /// graphs instead of building the expansion.
    fn expected_nodes(cfgs: &[Cfg], dict: &FunctionDict, root: &Cfg, max_depth: u32) -> usize {
        fn added(cfgs: &[Cfg], dict: &FunctionDict, callee: &Cfg, depth: u32, max_depth: u32) -> usize {
            let params = callee.params.len();
            // copies everything but entry, exit and the parameter nodes
            let body = callee.nodes.len() - 2 - params;
            let nested: usize = callee
                .nodes
                .iter()
                .filter_map(|n| n.top_call().and_then(|c| c.name.clone()))
                .filter_map(|name| dict.get(&name))
                .map(|d| if depth + 1 < max_depth { added(cfgs, dict, &cfgs[d.index], depth + 1, max_depth) } else { 0 })
                .sum();
            params + body + nested
        }
        let direct: usize = root
            .nodes
            .iter()
            .filter_map(|n| n.top_call().and_then(|c| c.name.clone()))
            .filter_map(|name| dict.get(&name))
            .map(|d| if max_depth > 0 { added(cfgs, dict, &cfgs[d.index], 0, max_depth) } else { 0 })
            .sum();
        root.nodes.len() + direct
    }

    #[test]
    fn recursion_stops_at_depth_limit() {
        let (cfgs, dict) = program("function f(x) if x then f(x .. 1) end end");
        let f = named(&cfgs, "f");
        for depth in 0..5 {
            let opts = InlineOptions { max_depth: depth, ..Default::default() };
            let out = expand(f, &cfgs, &dict, &opts);
            out.cfg.validate().unwrap();
            assert_eq!(out.sites, depth);
            assert_eq!(out.cfg.len(), expected_nodes(&cfgs, &dict, f, depth), "depth {depth}");
            assert_eq!(out.diagnostics.len(), 1);
            assert_eq!(out.diagnostics[0].kind, DiagnosticKind::DepthExceeded);
        }
    }

    #[test]
    fn expansion_count_matches_walk_for_call_trees() {
        let src = "function a(x) b(x) c(x) end\nfunction b(y) c(y) c(y) end\nfunction c(z) os.execute(z) end\nfunction r(q) a(q) b(q) end";
        let (cfgs, dict) = program(src);
        for depth in 0..4 {
            let opts = InlineOptions { max_depth: depth, ..Default::default() };
            let root = named(&cfgs, "r");
            let out = expand(root, &cfgs, &dict, &opts);
            out.cfg.validate().unwrap();
            assert_eq!(out.cfg.len(), expected_nodes(&cfgs, &dict, root, depth));
        }
    }

    #[test]
    fn method_call_passes_receiver_as_self() {
        let src = "local Bean = {}\nfunction Bean:new(name) local o = {} o.name = name return o end\nlocal b = Bean:new(n)";
        let (cfgs, dict) = program(src);
        let out = expand(&cfgs[0], &cfgs, &dict, &InlineOptions::default());
        out.cfg.validate().unwrap();
        let selfp = out.cfg.nodes.iter().find(|n| n.lh == vec![VarPath::ident("self#1")]).unwrap();
        assert_eq!(selfp.rh, vec![VarPath::ident("Bean")]);
        let name = out.cfg.nodes.iter().find(|n| n.lh == vec![VarPath::ident("name#1")]).unwrap();
        assert_eq!(name.rh, vec![VarPath::ident("n")]);
        let b = out.cfg.nodes.iter().find(|n| n.lh == vec![VarPath::ident("b")]).unwrap();
        assert_eq!(b.rh, vec![VarPath::ident("Bean.new$ret#1")]);
    }

    #[test]
    fn exact_mode_splices_every_instance() {
        let a = parse_chunk(b"function h(x) return x end", "a.lua").unwrap();
        let b = parse_chunk(b"function h(x) return x .. 1 end", "b.lua").unwrap();
        let c = parse_chunk(b"function r(v) local w = h(v) end", "c.lua").unwrap();
        let mut cfgs = build_cfgs(&a, b"function h(x) return x end").cfgs;
        cfgs.extend(build_cfgs(&b, b"function h(x) return x .. 1 end").cfgs);
        cfgs.extend(build_cfgs(&c, b"function r(v) local w = h(v) end").cfgs);
        let root = named(&cfgs, "r");
        let approx = expand(root, &cfgs, &FunctionDict::build(&cfgs, false), &InlineOptions::default());
        let exact = expand(root, &cfgs, &FunctionDict::build(&cfgs, true), &InlineOptions::default());
        assert_eq!(approx.sites, 1);
        assert_eq!(exact.sites, 2);
        exact.cfg.validate().unwrap();
        let w = exact.cfg.nodes.iter().find(|n| n.lh == vec![VarPath::ident("w")]).unwrap();
        assert_eq!(w.rh.len(), 2);
    }
}
