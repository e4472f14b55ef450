//! Lowering of a parsed chunk into one Cfg per function plus one for the chunk.
//!
//! Calls nested inside expressions are hoisted into temporaries (`%c1`, ...)
//! so that every node carries at most one call, at the top of its value.
//! Locals that shadow a name from an enclosing block are renamed `x~N`.

use std::collections::{HashMap, HashSet};

use super::{Cfg, CfgKind, CfgNode, Diagnostic, DiagnosticKind, Key, NodeId, NodeKind, Op, Value, VarPath, CHUNK_NAME};
use crate::frontend::ast::{
    BinOp, Block, CallExpr, Chunk, Expr, ExprKind, FuncName, FunctionBody, Name, Span, Stmt, StmtKind, TableField,
};
use crate::frontend::slice_text;

/// Result of lowering one file.
#[derive(Debug, Clone, Default)]
pub struct FileCfgs {
    /// The chunk Cfg first, then functions in order of definition.
    pub cfgs: Vec<Cfg>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Lower `chunk` (whose source bytes are `text`) into control-flow graphs.
pub fn build_cfgs(chunk: &Chunk, text: &[u8]) -> FileCfgs {
    let mut lw = Lowerer {
        file: &chunk.path,
        text,
        stack: Vec::new(),
        done: Vec::new(),
        diagnostics: Vec::new(),
        used_names: HashSet::new(),
    };
    lw.stack.push(FnState::new(Cfg::new(CHUNK_NAME, lw.file, CfgKind::Chunk, chunk.block.span)));
    lw.lower_stmts(&chunk.block.stmts);
    lw.finish_function();
    let mut cfgs = lw.done;
    // finishing order is innermost-first; present definitions in source order
    cfgs.sort_by_key(|c| (c.kind != CfgKind::Chunk, c.span.start.offset));
    FileCfgs { cfgs, diagnostics: lw.diagnostics }
}

#[derive(Debug, Clone, Default)]
struct Local {
    name: String,
    /// Qualified name when the local holds a known function.
    func: Option<String>,
    /// Module or global name the local stands for (`local http = require "luci.http"`).
    alias: Option<String>,
}

struct FnState {
    cfg: Cfg,
    frontier: Vec<NodeId>,
    returns: Vec<NodeId>,
    breaks: Vec<Vec<NodeId>>,
    scopes: Vec<HashMap<String, Local>>,
    temps: u32,
    renames: u32,
}

impl FnState {
    fn new(cfg: Cfg) -> Self {
        let entry = cfg.entry;
        FnState {
            cfg,
            frontier: vec![entry],
            returns: Vec::new(),
            breaks: Vec::new(),
            scopes: vec![HashMap::new()],
            temps: 0,
            renames: 0,
        }
    }

    fn lookup(&self, name: &str) -> Option<&Local> {
        self.scopes.iter().rev().find_map(|s| s.get(name))
    }
}

struct Lowerer<'a> {
    file: &'a str,
    text: &'a [u8],
    stack: Vec<FnState>,
    done: Vec<Cfg>,
    diagnostics: Vec<Diagnostic>,
    used_names: HashSet<String>,
}

impl Lowerer<'_> {
    fn cur(&mut self) -> &mut FnState {
        self.stack.last_mut().expect("function stack never empty while lowering")
    }

    fn excerpt(&self, span: Span) -> String {
        let raw = slice_text(self.text, span);
        let mut out = String::new();
        for word in raw.split_whitespace() {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(word);
        }
        if out.chars().count() > 80 {
            out = out.chars().take(77).collect::<String>() + "...";
        }
        out
    }

    /// Create a node after the current frontier.
    fn emit(&mut self, kind: NodeKind, op: Op, span: Span, label: Option<String>) -> NodeId {
        let label = label.unwrap_or_else(|| self.excerpt(span));
        let st = self.cur();
        let id = st.cfg.push(CfgNode::new(kind, op, label, span));
        for f in std::mem::take(&mut st.frontier) {
            st.cfg.add_edge(f, id);
        }
        st.frontier.push(id);
        id
    }

    fn declare(&mut self, name: &str, func: Option<String>, alias: Option<String>) -> String {
        let st = self.cur();
        let scope_depth = st.scopes.len();
        if let Some(existing) = st.scopes[scope_depth - 1].get_mut(name) {
            existing.func = func;
            existing.alias = alias;
            return existing.name.clone();
        }
        let shadows = st.scopes[..scope_depth - 1].iter().any(|s| s.contains_key(name));
        let renamed = if shadows {
            st.renames += 1;
            format!("{name}~{}", st.renames)
        } else {
            name.to_string()
        };
        st.cfg.locals.insert(renamed.clone());
        st.scopes[scope_depth - 1].insert(name.to_string(), Local { name: renamed.clone(), func, alias });
        renamed
    }

    /// Local binding for `name` in this function or an enclosing one.
    fn resolve(&self, name: &str) -> Option<&Local> {
        self.stack.iter().rev().find_map(|f| f.lookup(name))
    }

    fn var_name(&self, name: &str) -> String {
        self.resolve(name).map(|l| l.name.clone()).unwrap_or_else(|| name.to_string())
    }

    /// Qualified name for a static name chain, resolving local functions and aliases.
    fn qualify(&self, dotted: &str) -> String {
        let (first, rest) = match dotted.split_once('.') {
            Some((a, b)) => (a, Some(b)),
            None => (dotted, None),
        };
        let head = match self.resolve(first) {
            Some(Local { func: Some(q), .. }) => q.clone(),
            Some(Local { alias: Some(a), .. }) => a.clone(),
            _ => first.to_string(),
        };
        match rest {
            Some(r) => format!("{head}.{r}"),
            None => head,
        }
    }

    fn callee_name(&self, e: &Expr) -> Option<String> {
        match &e.kind {
            ExprKind::Paren(inner) => self.callee_name(inner),
            _ => e.static_name().map(|n| self.qualify(&n)),
        }
    }

    fn new_temp(&mut self) -> String {
        let st = self.cur();
        st.temps += 1;
        let name = format!("%c{}", st.temps);
        st.cfg.locals.insert(name.clone());
        name
    }

    fn lower_stmts(&mut self, stmts: &[Stmt]) {
        for s in stmts {
            self.lower_stmt(s);
        }
    }

    fn lower_block(&mut self, block: &Block) {
        self.cur().scopes.push(HashMap::new());
        self.lower_stmts(&block.stmts);
        self.cur().scopes.pop();
    }

    fn lower_stmt(&mut self, stmt: &Stmt) {
        match &stmt.kind {
            StmtKind::Local { names, values } => self.lower_local(stmt, names, values),
            StmtKind::Assign { targets, values } => self.lower_assign(stmt, targets, values),
            StmtKind::Call(e) => {
                let ExprKind::Call(call) = &e.kind else { unreachable!("call statement holds a call") };
                let cv = self.lower_call(call, e.span);
                self.emit(NodeKind::CallSite, Op::Eval(Value::Call(Box::new(cv))), stmt.span, None);
            }
            StmtKind::Do(b) => self.lower_block(b),
            StmtKind::While { cond, body } => {
                let head = self.cur().cfg.len();
                let v = self.lower_expr(cond, false);
                let label = format!("while {}", self.excerpt(cond.span));
                let c = self.emit(NodeKind::Condition, Op::Branch(v), cond.span, Some(label));
                self.loop_body(head, c, |lw| lw.lower_block(body));
                self.join(stmt.span, "end while");
            }
            StmtKind::Repeat { body, cond } => {
                let head = self.cur().cfg.len();
                self.cur().breaks.push(Vec::new());
                self.cur().scopes.push(HashMap::new());
                self.lower_stmts(&body.stmts);
                let v = self.lower_expr(cond, false);
                let label = format!("until {}", self.excerpt(cond.span));
                let c = self.emit(NodeKind::Condition, Op::Branch(v), cond.span, Some(label));
                self.cur().scopes.pop();
                let st = self.cur();
                st.cfg.add_edge(c, head);
                let mut exits = st.breaks.pop().unwrap_or_default();
                exits.push(c);
                st.frontier = exits;
                self.join(stmt.span, "end repeat");
            }
            StmtKind::If { clauses, else_block } => {
                let mut join_preds = Vec::new();
                for (cond, body) in clauses {
                    let v = self.lower_expr(cond, false);
                    let label = format!("if {}", self.excerpt(cond.span));
                    let c = self.emit(NodeKind::Condition, Op::Branch(v), cond.span, Some(label));
                    self.lower_block(body);
                    join_preds.append(&mut self.cur().frontier);
                    self.cur().frontier = vec![c];
                }
                if let Some(b) = else_block {
                    self.lower_block(b);
                }
                join_preds.append(&mut self.cur().frontier);
                dedup_keep_order(&mut join_preds);
                self.cur().frontier = join_preds;
                self.join(stmt.span, "end if");
            }
            StmtKind::NumericFor { var, start, limit, step, body } => {
                let s = self.lower_expr(start, false);
                let mut bounds = vec![self.lower_expr(limit, false)];
                if let Some(st) = step {
                    bounds.push(self.lower_expr(st, false));
                }
                self.cur().scopes.push(HashMap::new());
                let v = self.declare(&var.name, None, None);
                let init_span = var.span.to(start.span);
                self.emit(
                    NodeKind::Assignment,
                    Op::Assign { targets: vec![VarPath::ident(&v)], values: vec![s] },
                    init_span,
                    None,
                );
                bounds.insert(0, Value::Read(VarPath::ident(&v)));
                let label = format!("for {}", self.excerpt(var.span.to(limit.span)));
                let head = self.emit(NodeKind::Condition, Op::Branch(Value::Join(bounds)), limit.span, Some(label));
                self.loop_body(head, head, |lw| lw.lower_block(body));
                self.cur().scopes.pop();
                self.join(stmt.span, "end for");
            }
            StmtKind::GenericFor { vars, exprs, body } => {
                let mut vals: Vec<Value> = exprs.iter().map(|e| self.lower_expr(e, false)).collect();
                let iter = if vals.len() == 1 { vals.remove(0) } else { Value::Join(vals) };
                let exprs_span = exprs[0].span.to(exprs[exprs.len() - 1].span);
                let label = format!("for ... in {}", self.excerpt(exprs_span));
                let head = self.emit(NodeKind::Condition, Op::Branch(iter.clone()), exprs_span, Some(label));
                self.cur().scopes.push(HashMap::new());
                let targets: Vec<VarPath> =
                    vars.iter().map(|v| VarPath::ident(self.declare(&v.name, None, None))).collect();
                let values = vec![iter; targets.len()];
                let bind_span = vars[0].span.to(exprs_span);
                self.loop_body(head, head, |lw| {
                    lw.emit(NodeKind::Assignment, Op::Assign { targets, values }, bind_span, None);
                    lw.lower_block(body);
                });
                self.cur().scopes.pop();
                self.join(stmt.span, "end for");
            }
            StmtKind::Function { name, func } => {
                let qualified = self.qualify(&name.qualified());
                let target = self.funcname_path(name);
                self.lower_function(qualified.clone(), func, name.method.is_some());
                let label = format!("function {}", name.qualified());
                self.emit(
                    NodeKind::Assignment,
                    Op::Assign { targets: vec![target], values: vec![Value::Closure(qualified)] },
                    stmt.span,
                    Some(label),
                );
            }
            StmtKind::LocalFunction { name, func } => {
                let qualified = self.nested_name(&name.name);
                let local = self.declare(&name.name, Some(qualified.clone()), None);
                self.lower_function(qualified.clone(), func, false);
                self.emit(
                    NodeKind::Assignment,
                    Op::Assign { targets: vec![VarPath::ident(local)], values: vec![Value::Closure(qualified)] },
                    stmt.span,
                    Some(format!("local function {}", name.name)),
                );
            }
            StmtKind::Return(values) => {
                let vals = self.lower_values(values);
                let n = self.emit(NodeKind::Statement, Op::Return(vals), stmt.span, None);
                let st = self.cur();
                st.returns.push(n);
                st.frontier.clear();
            }
            StmtKind::Break => {
                let st = self.cur();
                let frontier = std::mem::take(&mut st.frontier);
                match st.breaks.last_mut() {
                    Some(b) => b.extend(frontier),
                    None => self.diagnostics.push(Diagnostic {
                        kind: DiagnosticKind::Lowering,
                        file: self.file.to_string(),
                        line: stmt.span.start.line,
                        message: "break outside a loop".into(),
                    }),
                }
            }
        }
    }

    /// Lower a loop body starting from `cond`, add back-edges to `head`, and
    /// leave the frontier at the loop exits (condition false edge plus breaks).
    fn loop_body(&mut self, head: NodeId, cond: NodeId, body: impl FnOnce(&mut Self)) {
        self.cur().breaks.push(Vec::new());
        self.cur().frontier = vec![cond];
        body(self);
        let st = self.cur();
        for f in std::mem::take(&mut st.frontier) {
            st.cfg.add_edge(f, head);
        }
        let mut exits = st.breaks.pop().unwrap_or_default();
        exits.push(cond);
        dedup_keep_order(&mut exits);
        st.frontier = exits;
    }

    fn join(&mut self, span: Span, label: &str) {
        if !self.cur().frontier.is_empty() {
            let end = Span { start: span.end, end: span.end };
            self.emit(NodeKind::Statement, Op::Nop, end, Some(label.to_string()));
        }
    }

    fn nested_name(&self, name: &str) -> String {
        let cur = &self.stack.last().expect("stack").cfg;
        if cur.kind == CfgKind::Chunk {
            name.to_string()
        } else {
            format!("{}.{name}", cur.name)
        }
    }

    fn funcname_path(&self, name: &FuncName) -> VarPath {
        let mut path = VarPath::ident(self.var_name(&name.path[0].name));
        for n in name.path[1..].iter().chain(name.method.iter()) {
            path.fields.push(Key::Field(n.name.clone()));
        }
        path
    }

    fn anon_name(&mut self, span: Span) -> String {
        let base = format!("<anon:{}:{}>", self.file, span.start.line);
        if self.used_names.insert(base.clone()) {
            return base;
        }
        let alt = format!("<anon:{}:{}:{}>", self.file, span.start.line, span.start.col);
        self.used_names.insert(alt.clone());
        alt
    }

    fn lower_function(&mut self, name: String, func: &FunctionBody, method: bool) {
        let mut cfg = Cfg::new(name, self.file, CfgKind::Function, func.span);
        cfg.is_vararg = func.is_vararg;
        self.stack.push(FnState::new(cfg));
        // the parser already lists the implicit `self` of `function T:m()`
        debug_assert!(!method || func.params.first().is_some_and(|p| p.name == "self"));
        let mut params: Vec<(String, Span)> = Vec::new();
        params.extend(func.params.iter().map(|p| (p.name.clone(), p.span)));
        if func.is_vararg {
            params.push(("...".into(), func.span));
        }
        for (p, span) in &params {
            let local = self.declare(p, None, None);
            self.cur().cfg.params.push(local.clone());
            self.emit(
                NodeKind::Assignment,
                Op::Assign { targets: vec![VarPath::ident(&local)], values: vec![Value::Param(local.clone())] },
                *span,
                Some(format!("param {p}")),
            );
        }
        // the body shares the parameters' scope
        self.lower_stmts(&func.body.stmts);
        self.finish_function();
    }

    fn finish_function(&mut self) {
        let mut st = self.stack.pop().expect("stack");
        let exit = st.cfg.exit;
        for n in st.frontier.drain(..).chain(st.returns.drain(..)) {
            st.cfg.add_edge(n, exit);
        }
        st.cfg.prune_unreachable();
        if st.cfg.nodes[st.cfg.exit].preds.is_empty() {
            // every path loops forever; keep Exit attached so the graph stays well formed
            let (entry, exit) = (st.cfg.entry, st.cfg.exit);
            let first = st.cfg.nodes[entry].succs.first().copied().unwrap_or(exit);
            if first == exit {
                st.cfg.add_edge(entry, exit);
            } else {
                st.cfg.add_edge(first, exit);
            }
        }
        self.done.push(st.cfg);
    }

    fn lower_local(&mut self, stmt: &Stmt, names: &[Name], values: &[Expr]) {
        if let ([name], [Expr { kind: ExprKind::Function(body), .. }]) = (names, values) {
            let qualified = self.nested_name(&name.name);
            self.lower_function(qualified.clone(), body, false);
            let local = self.declare(&name.name, Some(qualified.clone()), None);
            self.emit(
                NodeKind::Assignment,
                Op::Assign { targets: vec![VarPath::ident(local)], values: vec![Value::Closure(qualified)] },
                stmt.span,
                None,
            );
            return;
        }
        let alias = match (names, values) {
            ([_], [v]) => self.alias_of(v),
            _ => None,
        };
        let mut vals = self.lower_values(values);
        if vals.is_empty() {
            vals.push(Value::Nil);
        }
        let targets: Vec<VarPath> = names
            .iter()
            .map(|n| VarPath::ident(self.declare(&n.name, None, alias.clone())))
            .collect();
        self.emit(NodeKind::Assignment, Op::Assign { targets, values: vals }, stmt.span, None);
    }

    /// `require "mod"` or a global name chain, as an alias for callee resolution.
    fn alias_of(&self, e: &Expr) -> Option<String> {
        if let ExprKind::Call(call) = &e.kind {
            if call.method.is_none() && call.func.static_name().as_deref() == Some("require") {
                if let [Expr { kind: ExprKind::Str(s), .. }] = call.args.as_slice() {
                    return Some(String::from_utf8_lossy(s).into_owned());
                }
            }
            return None;
        }
        let name = e.static_name()?;
        let first = name.split('.').next().unwrap_or_default();
        match self.resolve(first) {
            None => Some(name),
            Some(Local { func: Some(_), .. }) | Some(Local { alias: Some(_), .. }) => Some(self.qualify(&name)),
            Some(_) => None,
        }
    }

    fn lower_assign(&mut self, stmt: &Stmt, targets: &[Expr], values: &[Expr]) {
        if let ([target], [Expr { kind: ExprKind::Function(body), .. }]) = (targets, values) {
            if let Some(name) = self.callee_name(target) {
                let path = self.lower_target(target);
                self.lower_function(name.clone(), body, false);
                self.emit(
                    NodeKind::Assignment,
                    Op::Assign { targets: vec![path], values: vec![Value::Closure(name)] },
                    stmt.span,
                    None,
                );
                return;
            }
        }
        let vals = self.lower_values(values);
        let paths = targets.iter().map(|t| self.lower_target(t)).collect();
        self.emit(NodeKind::Assignment, Op::Assign { targets: paths, values: vals }, stmt.span, None);
    }

    fn lower_target(&mut self, e: &Expr) -> VarPath {
        self.lower_path(e)
    }

    fn lower_values(&mut self, values: &[Expr]) -> Vec<Value> {
        let single = values.len() == 1;
        values.iter().map(|v| self.lower_expr(v, single)).collect()
    }

    /// Path for a `Name`/`Index` expression; other bases are evaluated into a temporary.
    fn lower_path(&mut self, e: &Expr) -> VarPath {
        match &e.kind {
            ExprKind::Name(n) => VarPath::ident(self.var_name(n)),
            ExprKind::Paren(inner) if matches!(inner.kind, ExprKind::Name(_) | ExprKind::Index { .. }) => {
                self.lower_path(inner)
            }
            ExprKind::Index { object, key } => {
                let base = self.lower_path(object);
                let key = match &key.kind {
                    ExprKind::Str(s) => Key::Field(String::from_utf8_lossy(s).into_owned()),
                    ExprKind::Number(n) => Key::Field(n.clone()),
                    _ => {
                        // evaluate for hoisted calls; the key itself is not tracked
                        self.lower_expr(key, false);
                        Key::Any
                    }
                };
                base.child(key)
            }
            _ => match self.lower_expr(e, false) {
                Value::Read(p) => p,
                v => {
                    let t = self.new_temp();
                    let op = Op::Assign { targets: vec![VarPath::ident(&t)], values: vec![v] };
                    self.emit(NodeKind::Assignment, op, e.span, None);
                    VarPath::ident(t)
                }
            },
        }
    }

    fn lower_call(&mut self, call: &CallExpr, span: Span) -> super::CallValue {
        let (name, method, receiver) = match &call.method {
            Some(m) => {
                let name = self.callee_name(&call.func).map(|n| format!("{n}.{}", m.name));
                let recv = self.lower_expr(&call.func, false);
                (name, Some(m.name.clone()), Some(recv))
            }
            None => {
                let name = self.callee_name(&call.func);
                if name.is_none() {
                    // dynamic callee: still evaluate it for nested calls
                    self.lower_expr(&call.func, false);
                }
                (name, None, None)
            }
        };
        let args = call.args.iter().map(|a| self.lower_expr(a, false)).collect();
        let arg_spans = call.args.iter().map(|a| a.span).collect();
        super::CallValue { name, method, receiver, args, arg_spans, span }
    }

    fn lower_expr(&mut self, e: &Expr, top: bool) -> Value {
        match &e.kind {
            ExprKind::Nil => Value::Nil,
            ExprKind::True => Value::Bool(true),
            ExprKind::False => Value::Bool(false),
            ExprKind::Number(n) => Value::Number(n.clone()),
            ExprKind::Str(s) => Value::Str(s.clone()),
            ExprKind::Vararg => Value::Read(VarPath::ident(self.var_name("..."))),
            ExprKind::Function(body) => {
                let name = self.anon_name(e.span);
                self.lower_function(name.clone(), body, false);
                Value::Closure(name)
            }
            ExprKind::Table(fields) => {
                let mut items = Vec::with_capacity(fields.len());
                let mut position = 0;
                for f in fields {
                    match f {
                        TableField::Named(n, v) => items.push((Key::Field(n.name.clone()), self.lower_expr(v, false))),
                        TableField::Keyed(k, v) => {
                            let key = match &k.kind {
                                ExprKind::Str(s) => Key::Field(String::from_utf8_lossy(s).into_owned()),
                                ExprKind::Number(n) => Key::Field(n.clone()),
                                _ => {
                                    self.lower_expr(k, false);
                                    Key::Any
                                }
                            };
                            items.push((key, self.lower_expr(v, false)));
                        }
                        TableField::Item(v) => {
                            position += 1;
                            items.push((Key::Field(position.to_string()), self.lower_expr(v, false)));
                        }
                    }
                }
                Value::Table(items)
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let l = self.lower_expr(lhs, false);
                let r = self.lower_expr(rhs, false);
                Value::Binary { op: *op, lhs: Box::new(l), rhs: Box::new(r) }
            }
            ExprKind::Unary { op, operand } => {
                let v = self.lower_expr(operand, false);
                Value::Unary { op: *op, operand: Box::new(v) }
            }
            ExprKind::Name(_) | ExprKind::Index { .. } => Value::Read(self.lower_path(e)),
            ExprKind::Call(call) => {
                let cv = self.lower_call(call, e.span);
                let v = Value::Call(Box::new(cv));
                if top {
                    return v;
                }
                let t = self.new_temp();
                let op = Op::Assign { targets: vec![VarPath::ident(&t)], values: vec![v] };
                self.emit(NodeKind::Assignment, op, e.span, None);
                Value::Read(VarPath::ident(t))
            }
            ExprKind::Paren(inner) => self.lower_expr(inner, top),
        }
    }
}

fn dedup_keep_order(v: &mut Vec<NodeId>) {
    let mut seen = HashSet::new();
    v.retain(|x| seen.insert(*x));
}

/// `a .. b` helper used by tests and the inliner.
#[allow(dead_code)]
pub(crate) fn concat(a: Value, b: Value) -> Value {
    Value::Binary { op: BinOp::Concat, lhs: Box::new(a), rhs: Box::new(b) }
}
