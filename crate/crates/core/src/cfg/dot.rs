//! Graphviz output for debugging.

use std::fmt::Write;

use super::Cfg;

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Render `cfg` as a DOT digraph; node labels are `kind: excerpt`.
pub fn to_dot(cfg: &Cfg) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{}\" {{", escape(&format!("{}:{}", cfg.file, cfg.name)));
    let _ = writeln!(out, "  node [shape=box, fontname=\"monospace\"];");
    for n in &cfg.nodes {
        let _ = writeln!(out, "  n{} [label=\"{}: {}\"];", n.id, n.kind, escape(&n.label));
    }
    for n in &cfg.nodes {
        for s in &n.succs {
            let _ = writeln!(out, "  n{} -> n{};", n.id, s);
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::CfgBuilder;

    #[test]
    fn dot_lists_nodes_and_edges() {
        let mut b = CfgBuilder::new("f");
        let x = b.assign(&["x"], &[]);
        let (e, exit) = (b.entry(), b.exit());
        b.seq(&[e, x, exit]);
        let dot = to_dot(&b.build());
        assert!(dot.starts_with("digraph"));
        assert!(dot.contains("n2 [label=\"Assignment: x := \"]"));
        assert!(dot.contains("n0 -> n2;") && dot.contains("n2 -> n1;"));
    }
}
