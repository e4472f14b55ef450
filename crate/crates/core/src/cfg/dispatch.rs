//! LuCI dispatcher entries: `entry(path, target, title, order)`.
//!
//! Controllers register URL handlers this way, so a registered function is
//! reachable from HTTP even though no Lua code calls it.

use serde::Serialize;

use super::{Cfg, Diagnostic, DiagnosticKind, FunctionDict};
use crate::frontend::ast::{walk_expr, Chunk, Expr, ExprKind, Span, Visitor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Literal(String),
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DispatchTarget {
    /// `call("f")`, `post("f")`, or a bare function reference.
    Function(String),
    Template(String),
    Cbi(String),
    Other(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchEntry {
    pub path_segments: Vec<Segment>,
    pub target: DispatchTarget,
    pub title: Option<String>,
    pub order: Option<f64>,
    pub file: String,
    #[serde(skip)]
    pub span: Span,
    /// The defining file lies under a `controller` directory.
    pub in_controller: bool,
}

impl DispatchEntry {
    pub fn is_dynamic(&self) -> bool {
        self.path_segments.contains(&Segment::Dynamic)
    }

    pub fn function(&self) -> Option<&str> {
        match &self.target {
            DispatchTarget::Function(f) => Some(f),
            _ => None,
        }
    }

    /// URL path such as `admin/network/iface_reconnect`.
    pub fn url(&self) -> String {
        self.path_segments
            .iter()
            .map(|s| match s {
                Segment::Literal(l) => l.as_str(),
                Segment::Dynamic => "*",
            })
            .collect::<Vec<_>>()
            .join("/")
    }
}

/// Whether a relative path has a `controller` directory component.
pub fn is_controller_path(path: &str) -> bool {
    let mut parts: Vec<&str> = path.split('/').collect();
    parts.pop();
    parts.contains(&"controller")
}

/// Collect every `entry(...)` call in the chunk.
pub fn extract_dispatch_entries(chunk: &Chunk) -> (Vec<DispatchEntry>, Vec<Diagnostic>) {
    let mut v = EntryVisitor {
        file: &chunk.path,
        in_controller: is_controller_path(&chunk.path),
        entries: Vec::new(),
        diagnostics: Vec::new(),
    };
    v.visit_block(&chunk.block);
    (v.entries, v.diagnostics)
}

struct EntryVisitor<'a> {
    file: &'a str,
    in_controller: bool,
    entries: Vec<DispatchEntry>,
    diagnostics: Vec<Diagnostic>,
}

fn string_lit(e: &Expr) -> Option<String> {
    match &e.kind {
        ExprKind::Str(s) => Some(String::from_utf8_lossy(s).into_owned()),
        ExprKind::Paren(inner) => string_lit(inner),
        _ => None,
    }
}

fn target_of(e: &Expr) -> DispatchTarget {
    if let ExprKind::Call(call) = &e.kind {
        let helper = call.func.static_name().unwrap_or_default();
        let helper = helper.rsplit('.').next().unwrap_or_default();
        let first = call.args.first().and_then(string_lit);
        match (helper, first) {
            ("call" | "post" | "post_on", Some(f)) => return DispatchTarget::Function(f),
            ("template", Some(t)) => return DispatchTarget::Template(t),
            ("cbi" | "form", Some(m)) => return DispatchTarget::Cbi(m),
            _ => {}
        }
        return DispatchTarget::Other(helper.to_string());
    }
    match &e.kind {
        ExprKind::Name(n) => DispatchTarget::Function(n.clone()),
        ExprKind::Nil => DispatchTarget::Other("nil".into()),
        _ => match e.static_name() {
            Some(n) => DispatchTarget::Function(n),
            None => DispatchTarget::Other("expression".into()),
        },
    }
}

impl Visitor for EntryVisitor<'_> {
    fn visit_expr(&mut self, expr: &Expr) {
        walk_expr(self, expr);
        let ExprKind::Call(call) = &expr.kind else { return };
        if call.method.is_some() {
            return;
        }
        let name = call.func.static_name().unwrap_or_default();
        if name != "entry" && !name.ends_with(".entry") {
            return;
        }
        let malformed = |msg: &str| Diagnostic {
            kind: DiagnosticKind::MalformedEntry,
            file: self.file.to_string(),
            line: expr.span.start.line,
            message: msg.to_string(),
        };
        let Some(path) = call.args.first() else {
            self.diagnostics.push(malformed("entry() without a path"));
            return;
        };
        let path_segments = match &path.kind {
            ExprKind::Table(fields) => fields
                .iter()
                .map(|f| match f {
                    crate::frontend::ast::TableField::Item(e) => {
                        string_lit(e).map(Segment::Literal).unwrap_or(Segment::Dynamic)
                    }
                    _ => Segment::Dynamic,
                })
                .collect(),
            _ => vec![Segment::Dynamic],
        };
        if path_segments.is_empty() {
            self.diagnostics.push(malformed("entry() with an empty path"));
            return;
        }
        let target = call.args.get(1).map(target_of).unwrap_or(DispatchTarget::Other("nil".into()));
        let title = call.args.get(2).and_then(|e| match &e.kind {
            ExprKind::Call(c) => c.args.first().and_then(string_lit),
            _ => string_lit(e),
        });
        let order = call.args.get(3).and_then(|e| match &e.kind {
            ExprKind::Number(n) => n.parse().ok(),
            _ => None,
        });
        self.entries.push(DispatchEntry {
            path_segments,
            target,
            title,
            order,
            file: self.file.to_string(),
            span: expr.span,
            in_controller: self.in_controller,
        });
    }
}

/// Mark the Cfgs of dispatched functions as web reachable. All Cfgs already
/// form the analysis root set; a same-file definition is preferred.
pub fn attach_dispatched(cfgs: &mut [Cfg], entries: &[DispatchEntry], dict: &FunctionDict) -> Vec<Diagnostic> {
    let mut diagnostics = Vec::new();
    for entry in entries {
        let Some(fname) = entry.function() else { continue };
        let local = cfgs.iter().position(|c| c.file == entry.file && c.name == fname);
        match local.or_else(|| dict.get(fname).map(|d| d.index)) {
            Some(i) => cfgs[i].web_reachable = true,
            None => diagnostics.push(Diagnostic {
                kind: DiagnosticKind::TargetNotFound,
                file: entry.file.clone(),
                line: entry.span.start.line,
                message: format!("dispatch target {fname} ({}) not defined", entry.url()),
            }),
        }
    }
    diagnostics
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::build_cfgs;
    use crate::frontend::parse_chunk;

    fn entries(src: &str, path: &str) -> (Vec<DispatchEntry>, Vec<Diagnostic>) {
        extract_dispatch_entries(&parse_chunk(src.as_bytes(), path).unwrap())
    }

    #[test]
    fn call_target_with_literal_path() {
        let (e, d) = entries(
            r#"function index() entry({"admin","loogson","control"}, call("action_ctl")) end"#,
            "usr/lib/lua/luci/controller/loogson.lua",
        );
        assert!(d.is_empty());
        assert_eq!(e.len(), 1);
        let names: Vec<_> = e[0].path_segments.iter().map(|s| format!("{s:?}")).collect();
        assert_eq!(names, [r#"Literal("admin")"#, r#"Literal("loogson")"#, r#"Literal("control")"#]);
        assert_eq!(e[0].function(), Some("action_ctl"));
        assert!(e[0].in_controller);
    }

    #[test]
    fn no_entries() {
        assert!(entries("x = 1", "a.lua").0.is_empty());
    }

    #[test]
    fn dynamic_path_is_flagged() {
        let (e, _) = entries(r#"entry(p, call("f"))"#, "a.lua");
        assert_eq!(e.len(), 1);
        assert!(e[0].is_dynamic());
        assert!(!e[0].in_controller);
    }

    #[test]
    fn other_target_forms() {
        let src = r#"
entry({"admin","network","iface_reconnect"}, post("iface_reconnect"), nil).leaf = true
entry({"admin","status"}, template("admin_status/index"), _("Status"), 20)
entry({"admin","net"}, cbi("admin_network/network"), "Net")
entry({"admin","x"}, action_x)
entry()
"#;
        let (e, d) = entries(src, "controller/admin/network.lua");
        assert_eq!(e.len(), 4);
        assert_eq!(e[0].function(), Some("iface_reconnect"));
        assert_eq!(e[1].target, DispatchTarget::Template("admin_status/index".into()));
        assert_eq!(e[1].title.as_deref(), Some("Status"));
        assert_eq!(e[1].order, Some(20.0));
        assert_eq!(e[2].target, DispatchTarget::Cbi("admin_network/network".into()));
        assert_eq!(e[3].function(), Some("action_x"));
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagnosticKind::MalformedEntry);
    }

    #[test]
    fn attach_marks_targets_and_reports_missing() {
        let src = r#"function index()
  entry({"admin","status","realtime","bandwidth_status"}, call("action_bandwidth"))
  entry({"admin","missing"}, call("nope"))
end
function action_bandwidth(iface) end"#;
        let chunk = parse_chunk(src.as_bytes(), "controller/status.lua").unwrap();
        let mut cfgs = build_cfgs(&chunk, src.as_bytes()).cfgs;
        let dict = FunctionDict::build(&cfgs, false);
        let (e, _) = extract_dispatch_entries(&chunk);
        let before = cfgs.len();
        let diags = attach_dispatched(&mut cfgs, &e, &dict);
        assert_eq!(cfgs.len(), before);
        assert!(cfgs.iter().find(|c| c.name == "action_bandwidth").unwrap().web_reachable);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].kind, DiagnosticKind::TargetNotFound);
        assert!(attach_dispatched(&mut cfgs, &[], &dict).is_empty());
    }
}
