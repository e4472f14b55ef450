//! Lua 5.1 syntax tree.

use std::fmt;

/// A 1-based line/column position plus the 0-based byte offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
    pub offset: usize,
}

/// Half-open byte range `[start, end)` with line/column for both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Span {
    pub start: Pos,
    pub end: Pos,
}

impl Span {
    pub fn to(self, other: Span) -> Span {
        Span { start: self.start, end: other.end }
    }

    pub fn contains(&self, inner: &Span) -> bool {
        self.start.offset <= inner.start.offset && inner.end.offset <= self.end.offset
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start.line, self.start.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Name {
    pub name: String,
    pub span: Span,
}

/// Root of a parsed file.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub path: String,
    pub block: Block,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub stmts: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Local { names: Vec<Name>, values: Vec<Expr> },
    Assign { targets: Vec<Expr>, values: Vec<Expr> },
    /// A call used as a statement; the expression is always `ExprKind::Call`.
    Call(Expr),
    Do(Block),
    While { cond: Expr, body: Block },
    Repeat { body: Block, cond: Expr },
    If { clauses: Vec<(Expr, Block)>, else_block: Option<Block> },
    NumericFor { var: Name, start: Expr, limit: Expr, step: Option<Expr>, body: Block },
    GenericFor { vars: Vec<Name>, exprs: Vec<Expr>, body: Block },
    Function { name: FuncName, func: FunctionBody },
    LocalFunction { name: Name, func: FunctionBody },
    Return(Vec<Expr>),
    Break,
}

/// `a.b.c` or `a.b:c` in a function statement.
#[derive(Debug, Clone, PartialEq)]
pub struct FuncName {
    pub path: Vec<Name>,
    pub method: Option<Name>,
}

impl FuncName {
    /// Dotted name; methods use `.` too (`T:m` registers as `T.m`).
    pub fn qualified(&self) -> String {
        let mut parts: Vec<&str> = self.path.iter().map(|n| n.name.as_str()).collect();
        if let Some(m) = &self.method {
            parts.push(&m.name);
        }
        parts.join(".")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionBody {
    pub params: Vec<Name>,
    pub is_vararg: bool,
    pub body: Block,
    /// From the `function` keyword through the closing `end`.
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Pow,
    Concat,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Pow => "^",
            BinOp::Concat => "..",
            BinOp::Eq => "==",
            BinOp::Ne => "~=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "and",
            BinOp::Or => "or",
        }
    }

    /// Comparisons yield booleans and never carry operand data.
    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
    Len,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TableField {
    /// `name = value`
    Named(Name, Expr),
    /// `[key] = value`
    Keyed(Expr, Expr),
    /// positional item
    Item(Expr),
}

/// Callee of a call expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Callee {
    /// The callee is a static name chain, e.g. `os.execute` or `obj:method`.
    Static(String),
    Dynamic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallExpr {
    pub func: Expr,
    /// Set for `obj:method(...)`; `func` is then the receiver `obj`.
    pub method: Option<Name>,
    pub args: Vec<Expr>,
    pub callee: Callee,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Nil,
    True,
    False,
    Number(String),
    Str(Vec<u8>),
    Vararg,
    Function(Box<FunctionBody>),
    Table(Vec<TableField>),
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Unary { op: UnOp, operand: Box<Expr> },
    Name(String),
    /// `obj.key` (key is a string literal) or `obj[key]`.
    Index { object: Box<Expr>, key: Box<Expr> },
    Call(Box<CallExpr>),
    Paren(Box<Expr>),
}

impl Expr {
    /// Static dotted name for `a`, `a.b`, `a["b"]` chains.
    pub fn static_name(&self) -> Option<String> {
        match &self.kind {
            ExprKind::Name(n) => Some(n.clone()),
            ExprKind::Index { object, key } => {
                let base = object.static_name()?;
                match &key.kind {
                    ExprKind::Str(s) if is_identifier(s) => {
                        Some(format!("{base}.{}", String::from_utf8_lossy(s)))
                    }
                    _ => None,
                }
            }
            _ => None,
        }
    }

    pub fn as_call(&self) -> Option<&CallExpr> {
        match &self.kind {
            ExprKind::Call(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_literal(&self) -> bool {
        matches!(
            self.kind,
            ExprKind::Nil | ExprKind::True | ExprKind::False | ExprKind::Number(_) | ExprKind::Str(_)
        )
    }
}

pub(crate) fn is_identifier(s: &[u8]) -> bool {
    !s.is_empty()
        && (s[0].is_ascii_alphabetic() || s[0] == b'_')
        && s.iter().all(|c| c.is_ascii_alphanumeric() || *c == b'_')
}

/// Coarse node categories, for counting and diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AstKind {
    Chunk,
    FunctionDef,
    LocalAssign,
    Assign,
    Call,
    MethodCall,
    Index,
    If,
    While,
    NumericFor,
    GenericFor,
    Repeat,
    Return,
    Break,
    Do,
    Name,
    StringLit,
    NumberLit,
    BoolLit,
    NilLit,
    BinOp,
    UnOp,
    Varargs,
    TableConstructor,
    Paren,
}

impl Stmt {
    pub fn ast_kind(&self) -> AstKind {
        match &self.kind {
            StmtKind::Local { .. } => AstKind::LocalAssign,
            StmtKind::Assign { .. } => AstKind::Assign,
            StmtKind::Call(e) => e.ast_kind(),
            StmtKind::Do(_) => AstKind::Do,
            StmtKind::While { .. } => AstKind::While,
            StmtKind::Repeat { .. } => AstKind::Repeat,
            StmtKind::If { .. } => AstKind::If,
            StmtKind::NumericFor { .. } => AstKind::NumericFor,
            StmtKind::GenericFor { .. } => AstKind::GenericFor,
            StmtKind::Function { .. } | StmtKind::LocalFunction { .. } => AstKind::FunctionDef,
            StmtKind::Return(_) => AstKind::Return,
            StmtKind::Break => AstKind::Break,
        }
    }
}

impl Expr {
    pub fn ast_kind(&self) -> AstKind {
        match &self.kind {
            ExprKind::Nil => AstKind::NilLit,
            ExprKind::True | ExprKind::False => AstKind::BoolLit,
            ExprKind::Number(_) => AstKind::NumberLit,
            ExprKind::Str(_) => AstKind::StringLit,
            ExprKind::Vararg => AstKind::Varargs,
            ExprKind::Function(_) => AstKind::FunctionDef,
            ExprKind::Table(_) => AstKind::TableConstructor,
            ExprKind::Binary { .. } => AstKind::BinOp,
            ExprKind::Unary { .. } => AstKind::UnOp,
            ExprKind::Name(_) => AstKind::Name,
            ExprKind::Index { .. } => AstKind::Index,
            ExprKind::Call(c) if c.method.is_some() => AstKind::MethodCall,
            ExprKind::Call(_) => AstKind::Call,
            ExprKind::Paren(_) => AstKind::Paren,
        }
    }
}

/// Depth-first traversal hooks. Default methods recurse into children.
pub trait Visitor {
    fn visit_block(&mut self, block: &Block) {
        walk_block(self, block);
    }
    fn visit_stmt(&mut self, stmt: &Stmt) {
        walk_stmt(self, stmt);
    }
    fn visit_expr(&mut self, expr: &Expr) {
        walk_expr(self, expr);
    }
    fn visit_function(&mut self, func: &FunctionBody) {
        self.visit_block(&func.body);
    }
}

pub fn walk_block<V: Visitor + ?Sized>(v: &mut V, block: &Block) {
    for stmt in &block.stmts {
        v.visit_stmt(stmt);
    }
}

pub fn walk_stmt<V: Visitor + ?Sized>(v: &mut V, stmt: &Stmt) {
    match &stmt.kind {
        StmtKind::Local { values, .. } => values.iter().for_each(|e| v.visit_expr(e)),
        StmtKind::Assign { targets, values } => {
            targets.iter().chain(values).for_each(|e| v.visit_expr(e))
        }
        StmtKind::Call(e) => v.visit_expr(e),
        StmtKind::Do(b) => v.visit_block(b),
        StmtKind::While { cond, body } => {
            v.visit_expr(cond);
            v.visit_block(body);
        }
        StmtKind::Repeat { body, cond } => {
            v.visit_block(body);
            v.visit_expr(cond);
        }
        StmtKind::If { clauses, else_block } => {
            for (cond, body) in clauses {
                v.visit_expr(cond);
                v.visit_block(body);
            }
            if let Some(b) = else_block {
                v.visit_block(b);
            }
        }
        StmtKind::NumericFor { start, limit, step, body, .. } => {
            v.visit_expr(start);
            v.visit_expr(limit);
            if let Some(s) = step {
                v.visit_expr(s);
            }
            v.visit_block(body);
        }
        StmtKind::GenericFor { exprs, body, .. } => {
            exprs.iter().for_each(|e| v.visit_expr(e));
            v.visit_block(body);
        }
        StmtKind::Function { func, .. } | StmtKind::LocalFunction { func, .. } => {
            v.visit_function(func)
        }
        StmtKind::Return(values) => values.iter().for_each(|e| v.visit_expr(e)),
        StmtKind::Break => {}
    }
}

pub fn walk_expr<V: Visitor + ?Sized>(v: &mut V, expr: &Expr) {
    match &expr.kind {
        ExprKind::Function(f) => v.visit_function(f),
        ExprKind::Table(fields) => {
            for field in fields {
                match field {
                    TableField::Named(_, e) | TableField::Item(e) => v.visit_expr(e),
                    TableField::Keyed(k, e) => {
                        v.visit_expr(k);
                        v.visit_expr(e);
                    }
                }
            }
        }
        ExprKind::Binary { lhs, rhs, .. } => {
            v.visit_expr(lhs);
            v.visit_expr(rhs);
        }
        ExprKind::Unary { operand, .. } => v.visit_expr(operand),
        ExprKind::Index { object, key } => {
            v.visit_expr(object);
            v.visit_expr(key);
        }
        ExprKind::Call(call) => {
            v.visit_expr(&call.func);
            call.args.iter().for_each(|e| v.visit_expr(e));
        }
        ExprKind::Paren(e) => v.visit_expr(e),
        ExprKind::Nil
        | ExprKind::True
        | ExprKind::False
        | ExprKind::Number(_)
        | ExprKind::Str(_)
        | ExprKind::Vararg
        | ExprKind::Name(_) => {}
    }
}
