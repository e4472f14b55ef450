//! Recursive-descent parser for Lua 5.1.

use super::ast::*;
use super::lexer::{tokenize, Token, TokenKind};
use super::SyntaxError;

/// Parse sanitized source text into a chunk.
pub fn parse_chunk(text: &[u8], path: &str) -> Result<Chunk, SyntaxError> {
    let tokens = tokenize(text).map_err(|e| SyntaxError {
        path: path.to_string(),
        line: e.line,
        col: e.col,
        message: e.message,
    })?;
    let mut parser = Parser { tokens, pos: 0, path, vararg: vec![true] };
    let block = parser.block()?;
    if !parser.check(&TokenKind::Eof) {
        return Err(parser.unexpected("'<eof>'"));
    }
    Ok(Chunk { path: path.to_string(), block })
}

struct Parser<'p> {
    tokens: Vec<Token>,
    pos: usize,
    path: &'p str,
    /// Whether `...` is legal in each enclosing function.
    vararg: Vec<bool>,
}

type PResult<T> = Result<T, SyntaxError>;

impl Parser<'_> {
    fn peek(&self) -> &TokenKind {
        &self.tokens[self.pos].kind
    }

    fn peek_at(&self, n: usize) -> &TokenKind {
        let i = (self.pos + n).min(self.tokens.len() - 1);
        &self.tokens[i].kind
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    /// End of the most recently consumed token.
    fn prev_end(&self) -> Pos {
        if self.pos == 0 {
            self.tokens[0].span.start
        } else {
            self.tokens[self.pos - 1].span.end
        }
    }

    fn check(&self, kind: &TokenKind) -> bool {
        self.peek() == kind
    }

    fn advance(&mut self) -> Token {
        let tok = self.tokens[self.pos].clone();
        if tok.kind != TokenKind::Eof {
            self.pos += 1;
        }
        tok
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.check(kind) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn error_at(&self, span: Span, message: String) -> SyntaxError {
        SyntaxError {
            path: self.path.to_string(),
            line: span.start.line,
            col: span.start.col,
            message,
        }
    }

    fn unexpected(&self, expected: &str) -> SyntaxError {
        self.error_at(self.span(), format!("{expected} expected near {}", self.peek()))
    }

    fn expect(&mut self, kind: TokenKind) -> PResult<Token> {
        if self.check(&kind) {
            Ok(self.advance())
        } else {
            Err(self.unexpected(&kind.to_string()))
        }
    }

    fn expect_match(&mut self, kind: TokenKind, opener: &str, open_span: Span) -> PResult<Token> {
        if self.check(&kind) {
            return Ok(self.advance());
        }
        let msg = if open_span.start.line == self.span().start.line {
            format!("{kind} expected near {}", self.peek())
        } else {
            format!(
                "{kind} expected (to close {opener} at line {}) near {}",
                open_span.start.line,
                self.peek()
            )
        };
        Err(self.error_at(self.span(), msg))
    }

    fn name(&mut self) -> PResult<Name> {
        match self.peek().clone() {
            TokenKind::Name(name) => {
                let span = self.advance().span;
                Ok(Name { name, span })
            }
            _ => Err(self.unexpected("<name>")),
        }
    }

    fn block_follow(&self) -> bool {
        matches!(
            self.peek(),
            TokenKind::Else | TokenKind::Elseif | TokenKind::End | TokenKind::Until | TokenKind::Eof
        )
    }

    fn block(&mut self) -> PResult<Block> {
        let start = self.span().start;
        let mut stmts = Vec::new();
        while !self.block_follow() {
            let last = matches!(self.peek(), TokenKind::Return | TokenKind::Break);
            stmts.push(self.statement()?);
            self.eat(&TokenKind::Semi);
            if last {
                if !self.block_follow() {
                    return Err(self.unexpected("'<eof>'"));
                }
                break;
            }
        }
        let end = if stmts.is_empty() { start } else { self.prev_end() };
        Ok(Block { stmts, span: Span { start, end } })
    }

    fn statement(&mut self) -> PResult<Stmt> {
        let start = self.span();
        let kind = match self.peek() {
            TokenKind::If => self.if_stmt()?,
            TokenKind::While => {
                self.advance();
                let cond = self.expr()?;
                self.expect(TokenKind::Do)?;
                let body = self.block()?;
                self.expect_match(TokenKind::End, "'while'", start)?;
                StmtKind::While { cond, body }
            }
            TokenKind::Do => {
                self.advance();
                let body = self.block()?;
                self.expect_match(TokenKind::End, "'do'", start)?;
                StmtKind::Do(body)
            }
            TokenKind::For => self.for_stmt(start)?,
            TokenKind::Repeat => {
                self.advance();
                let body = self.block()?;
                self.expect_match(TokenKind::Until, "'repeat'", start)?;
                let cond = self.expr()?;
                StmtKind::Repeat { body, cond }
            }
            TokenKind::Function => {
                self.advance();
                let mut path = vec![self.name()?];
                while self.eat(&TokenKind::Dot) {
                    path.push(self.name()?);
                }
                let method = if self.eat(&TokenKind::Colon) { Some(self.name()?) } else { None };
                let func = self.func_body(start, method.is_some())?;
                StmtKind::Function { name: FuncName { path, method }, func }
            }
            TokenKind::Local => {
                self.advance();
                if self.eat(&TokenKind::Function) {
                    let name = self.name()?;
                    let func = self.func_body(start, false)?;
                    StmtKind::LocalFunction { name, func }
                } else {
                    let mut names = vec![self.name()?];
                    while self.eat(&TokenKind::Comma) {
                        names.push(self.name()?);
                    }
                    let values =
                        if self.eat(&TokenKind::Assign) { self.expr_list()? } else { Vec::new() };
                    StmtKind::Local { names, values }
                }
            }
            TokenKind::Return => {
                self.advance();
                let values = if self.block_follow() || self.check(&TokenKind::Semi) {
                    Vec::new()
                } else {
                    self.expr_list()?
                };
                StmtKind::Return(values)
            }
            TokenKind::Break => {
                self.advance();
                StmtKind::Break
            }
            TokenKind::Name(n) if n == "goto" && matches!(self.peek_at(1), TokenKind::Name(_)) => {
                return Err(self.error_at(start, "'goto' is not part of Lua 5.1".into()));
            }
            _ => self.expr_stmt()?,
        };
        Ok(Stmt { kind, span: Span { start: start.start, end: self.prev_end() } })
    }

    fn if_stmt(&mut self) -> PResult<StmtKind> {
        let open = self.advance().span;
        let mut clauses = Vec::new();
        let cond = self.expr()?;
        self.expect(TokenKind::Then)?;
        clauses.push((cond, self.block()?));
        let mut else_block = None;
        loop {
            match self.peek() {
                TokenKind::Elseif => {
                    self.advance();
                    let cond = self.expr()?;
                    self.expect(TokenKind::Then)?;
                    clauses.push((cond, self.block()?));
                }
                TokenKind::Else => {
                    self.advance();
                    else_block = Some(self.block()?);
                    self.expect_match(TokenKind::End, "'if'", open)?;
                    break;
                }
                _ => {
                    self.expect_match(TokenKind::End, "'if'", open)?;
                    break;
                }
            }
        }
        Ok(StmtKind::If { clauses, else_block })
    }

    fn for_stmt(&mut self, open: Span) -> PResult<StmtKind> {
        self.advance();
        let first = self.name()?;
        if self.eat(&TokenKind::Assign) {
            let start = self.expr()?;
            self.expect(TokenKind::Comma)?;
            let limit = self.expr()?;
            let step = if self.eat(&TokenKind::Comma) { Some(self.expr()?) } else { None };
            self.expect(TokenKind::Do)?;
            let body = self.block()?;
            self.expect_match(TokenKind::End, "'for'", open)?;
            return Ok(StmtKind::NumericFor { var: first, start, limit, step, body });
        }
        let mut vars = vec![first];
        while self.eat(&TokenKind::Comma) {
            vars.push(self.name()?);
        }
        if !self.check(&TokenKind::In) {
            return Err(self.unexpected("'=' or 'in'"));
        }
        self.advance();
        let exprs = self.expr_list()?;
        self.expect(TokenKind::Do)?;
        let body = self.block()?;
        self.expect_match(TokenKind::End, "'for'", open)?;
        Ok(StmtKind::GenericFor { vars, exprs, body })
    }

    /// Parameter list and body; `start` is the span of the introducing keyword.
    fn func_body(&mut self, start: Span, is_method: bool) -> PResult<FunctionBody> {
        let open = self.expect(TokenKind::LParen)?.span;
        let mut params = Vec::new();
        if is_method {
            params.push(Name { name: "self".into(), span: open });
        }
        let mut is_vararg = false;
        if !self.check(&TokenKind::RParen) {
            loop {
                if self.eat(&TokenKind::Ellipsis) {
                    is_vararg = true;
                    break;
                }
                params.push(self.name()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        self.expect_match(TokenKind::RParen, "'('", open)?;
        self.vararg.push(is_vararg);
        let body = self.block();
        self.vararg.pop();
        let body = body?;
        self.expect_match(TokenKind::End, "'function'", start)?;
        Ok(FunctionBody {
            params,
            is_vararg,
            body,
            span: Span { start: start.start, end: self.prev_end() },
        })
    }

    fn expr_stmt(&mut self) -> PResult<StmtKind> {
        let first = self.suffixed_expr()?;
        if self.check(&TokenKind::Assign) || self.check(&TokenKind::Comma) {
            let mut targets = vec![first];
            while self.eat(&TokenKind::Comma) {
                targets.push(self.suffixed_expr()?);
            }
            for t in &targets {
                if !matches!(t.kind, ExprKind::Name(_) | ExprKind::Index { .. }) {
                    return Err(self.error_at(t.span, "syntax error: cannot assign to this expression".into()));
                }
            }
            self.expect(TokenKind::Assign)?;
            let values = self.expr_list()?;
            return Ok(StmtKind::Assign { targets, values });
        }
        if matches!(first.kind, ExprKind::Call(_)) {
            Ok(StmtKind::Call(first))
        } else {
            Err(self.error_at(self.span(), format!("syntax error near {}", self.peek())))
        }
    }

    fn expr_list(&mut self) -> PResult<Vec<Expr>> {
        let mut out = vec![self.expr()?];
        while self.eat(&TokenKind::Comma) {
            out.push(self.expr()?);
        }
        Ok(out)
    }

    fn primary_expr(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            TokenKind::Name(name) => {
                let span = self.advance().span;
                Ok(Expr { kind: ExprKind::Name(name), span })
            }
            TokenKind::LParen => {
                let open = self.advance().span;
                let inner = self.expr()?;
                let close = self.expect_match(TokenKind::RParen, "'('", open)?.span;
                Ok(Expr { kind: ExprKind::Paren(Box::new(inner)), span: open.to(close) })
            }
            _ => Err(self.error_at(self.span(), format!("unexpected symbol near {}", self.peek()))),
        }
    }

    fn suffixed_expr(&mut self) -> PResult<Expr> {
        let mut expr = self.primary_expr()?;
        loop {
            match self.peek().clone() {
                TokenKind::Dot => {
                    self.advance();
                    let key = self.name()?;
                    let span = expr.span.to(key.span);
                    let key = Expr { kind: ExprKind::Str(key.name.into_bytes()), span: key.span };
                    expr = Expr {
                        kind: ExprKind::Index { object: Box::new(expr), key: Box::new(key) },
                        span,
                    };
                }
                TokenKind::LBracket => {
                    let open = self.advance().span;
                    let key = self.expr()?;
                    let close = self.expect_match(TokenKind::RBracket, "'['", open)?.span;
                    let span = expr.span.to(close);
                    expr = Expr {
                        kind: ExprKind::Index { object: Box::new(expr), key: Box::new(key) },
                        span,
                    };
                }
                TokenKind::Colon => {
                    self.advance();
                    let method = self.name()?;
                    let args = self.call_args()?;
                    let span = Span { start: expr.span.start, end: self.prev_end() };
                    let callee = match expr.static_name() {
                        Some(base) => Callee::Static(format!("{base}.{}", method.name)),
                        None => Callee::Dynamic,
                    };
                    expr = Expr {
                        kind: ExprKind::Call(Box::new(CallExpr {
                            func: expr,
                            method: Some(method),
                            args,
                            callee,
                        })),
                        span,
                    };
                }
                TokenKind::LParen | TokenKind::Str(_) | TokenKind::LBrace => {
                    let args = self.call_args()?;
                    let span = Span { start: expr.span.start, end: self.prev_end() };
                    let callee = match expr.static_name() {
                        Some(name) => Callee::Static(name),
                        None => Callee::Dynamic,
                    };
                    expr = Expr {
                        kind: ExprKind::Call(Box::new(CallExpr { func: expr, method: None, args, callee })),
                        span,
                    };
                }
                _ => return Ok(expr),
            }
        }
    }

    fn call_args(&mut self) -> PResult<Vec<Expr>> {
        match self.peek().clone() {
            TokenKind::Str(s) => {
                let span = self.advance().span;
                Ok(vec![Expr { kind: ExprKind::Str(s), span }])
            }
            TokenKind::LBrace => Ok(vec![self.table()?]),
            TokenKind::LParen => {
                let open = self.advance().span;
                let args = if self.check(&TokenKind::RParen) { Vec::new() } else { self.expr_list()? };
                self.expect_match(TokenKind::RParen, "'('", open)?;
                Ok(args)
            }
            _ => Err(self.unexpected("function arguments")),
        }
    }

    fn table(&mut self) -> PResult<Expr> {
        let open = self.expect(TokenKind::LBrace)?.span;
        let mut fields = Vec::new();
        while !self.check(&TokenKind::RBrace) {
            let field = match self.peek().clone() {
                TokenKind::Name(_) if self.peek_at(1) == &TokenKind::Assign => {
                    let name = self.name()?;
                    self.advance();
                    TableField::Named(name, self.expr()?)
                }
                TokenKind::LBracket => {
                    let lb = self.advance().span;
                    let key = self.expr()?;
                    self.expect_match(TokenKind::RBracket, "'['", lb)?;
                    self.expect(TokenKind::Assign)?;
                    TableField::Keyed(key, self.expr()?)
                }
                _ => TableField::Item(self.expr()?),
            };
            fields.push(field);
            if !self.eat(&TokenKind::Comma) && !self.eat(&TokenKind::Semi) {
                break;
            }
        }
        let close = self.expect_match(TokenKind::RBrace, "'{'", open)?.span;
        Ok(Expr { kind: ExprKind::Table(fields), span: open.to(close) })
    }

    fn simple_expr(&mut self) -> PResult<Expr> {
        let span = self.span();
        let kind = match self.peek().clone() {
            TokenKind::Nil => ExprKind::Nil,
            TokenKind::True => ExprKind::True,
            TokenKind::False => ExprKind::False,
            TokenKind::Number(n) => ExprKind::Number(n),
            TokenKind::Str(s) => ExprKind::Str(s),
            TokenKind::Ellipsis => {
                if !self.vararg.last().copied().unwrap_or(false) {
                    return Err(self.error_at(span, "cannot use '...' outside a vararg function".into()));
                }
                ExprKind::Vararg
            }
            TokenKind::LBrace => return self.table(),
            TokenKind::Function => {
                self.advance();
                let body = self.func_body(span, false)?;
                let full = body.span;
                return Ok(Expr { kind: ExprKind::Function(Box::new(body)), span: full });
            }
            _ => return self.suffixed_expr(),
        };
        self.advance();
        Ok(Expr { kind, span })
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.sub_expr(0)
    }

    fn sub_expr(&mut self, limit: u8) -> PResult<Expr> {
        const UNARY_PRIORITY: u8 = 8;
        let unary = match self.peek() {
            TokenKind::Not => Some(UnOp::Not),
            TokenKind::Minus => Some(UnOp::Neg),
            TokenKind::Hash => Some(UnOp::Len),
            _ => None,
        };
        let mut lhs = if let Some(op) = unary {
            let start = self.advance().span;
            let operand = self.sub_expr(UNARY_PRIORITY)?;
            let span = start.to(operand.span);
            Expr { kind: ExprKind::Unary { op, operand: Box::new(operand) }, span }
        } else {
            self.simple_expr()?
        };
        while let Some((op, left, right)) = binary_op(self.peek()) {
            if left <= limit {
                break;
            }
            self.advance();
            let rhs = self.sub_expr(right)?;
            let span = lhs.span.to(rhs.span);
            lhs = Expr { kind: ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span };
        }
        Ok(lhs)
    }
}

/// Operator with its (left, right) binding priorities from the reference grammar.
fn binary_op(tok: &TokenKind) -> Option<(BinOp, u8, u8)> {
    use TokenKind::*;
    Some(match tok {
        Plus => (BinOp::Add, 6, 6),
        Minus => (BinOp::Sub, 6, 6),
        Star => (BinOp::Mul, 7, 7),
        Slash => (BinOp::Div, 7, 7),
        Percent => (BinOp::Mod, 7, 7),
        Caret => (BinOp::Pow, 10, 9),
        Concat => (BinOp::Concat, 5, 4),
        EqEq => (BinOp::Eq, 3, 3),
        NotEq => (BinOp::Ne, 3, 3),
        Lt => (BinOp::Lt, 3, 3),
        LtEq => (BinOp::Le, 3, 3),
        Gt => (BinOp::Gt, 3, 3),
        GtEq => (BinOp::Ge, 3, 3),
        And => (BinOp::And, 2, 2),
        Or => (BinOp::Or, 1, 1),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(src: &str) -> Chunk {
        parse_chunk(src.as_bytes(), "t.lua").unwrap_or_else(|e| panic!("{e}"))
    }

    #[test]
    fn empty_chunk() {
        assert!(parse("").block.stmts.is_empty());
    }

    #[test]
    fn while_with_empty_body() {
        let chunk = parse("while x do end");
        let StmtKind::While { cond, body } = &chunk.block.stmts[0].kind else { panic!() };
        assert_eq!(cond.kind, ExprKind::Name("x".into()));
        assert!(body.stmts.is_empty());
    }

    #[test]
    fn empty_bodies_for_every_construct() {
        parse("if a then elseif b then else end for i=1,2 do end for k,v in pairs(t) do end repeat until x");
    }

    #[test]
    fn precedence() {
        let chunk = parse("x = a .. b .. c + 1 * 2 ^ 3 ^ 4");
        let StmtKind::Assign { values, .. } = &chunk.block.stmts[0].kind else { panic!() };
        // concat is right associative and binds looser than +
        let ExprKind::Binary { op: BinOp::Concat, lhs, rhs } = &values[0].kind else { panic!() };
        assert_eq!(lhs.kind, ExprKind::Name("a".into()));
        let ExprKind::Binary { op: BinOp::Concat, rhs: inner, .. } = &rhs.kind else { panic!() };
        let ExprKind::Binary { op: BinOp::Add, rhs: mul, .. } = &inner.kind else { panic!() };
        let ExprKind::Binary { op: BinOp::Mul, rhs: pow, .. } = &mul.kind else { panic!() };
        let ExprKind::Binary { op: BinOp::Pow, rhs: pow2, .. } = &pow.kind else { panic!() };
        assert!(matches!(pow2.kind, ExprKind::Binary { op: BinOp::Pow, .. }));
    }

    #[test]
    fn unary_binds_tighter_than_pow_on_left_only() {
        let chunk = parse("x = -a ^ 2");
        let StmtKind::Assign { values, .. } = &chunk.block.stmts[0].kind else { panic!() };
        assert!(matches!(values[0].kind, ExprKind::Unary { op: UnOp::Neg, .. }));
    }

    #[test]
    fn method_calls_and_callee_names() {
        let chunk = parse("local b = Bean:new(n, 'male') os.execute(cmd) f()(); (g)(1)");
        let StmtKind::Local { values, .. } = &chunk.block.stmts[0].kind else { panic!() };
        let call = values[0].as_call().unwrap();
        assert_eq!(call.callee, Callee::Static("Bean.new".into()));
        assert_eq!(call.method.as_ref().unwrap().name, "new");
        let StmtKind::Call(e) = &chunk.block.stmts[1].kind else { panic!() };
        assert_eq!(e.as_call().unwrap().callee, Callee::Static("os.execute".into()));
        let StmtKind::Call(e) = &chunk.block.stmts[2].kind else { panic!() };
        assert_eq!(e.as_call().unwrap().callee, Callee::Dynamic);
        let StmtKind::Call(e) = &chunk.block.stmts[3].kind else { panic!() };
        assert_eq!(e.as_call().unwrap().callee, Callee::Dynamic);
    }

    #[test]
    fn string_and_table_call_sugar() {
        let chunk = parse(r#"local m = require "luci.model.network".init() entry{"a"}"#);
        let StmtKind::Local { values, .. } = &chunk.block.stmts[0].kind else { panic!() };
        let outer = values[0].as_call().unwrap();
        assert_eq!(outer.callee, Callee::Dynamic);
        let ExprKind::Index { object, .. } = &outer.func.kind else { panic!() };
        assert_eq!(object.as_call().unwrap().callee, Callee::Static("require".into()));
    }

    #[test]
    fn multiple_assignment_and_varargs() {
        let chunk = parse("local a, b = f() function g(x, ...) return ... end");
        let StmtKind::Local { names, .. } = &chunk.block.stmts[0].kind else { panic!() };
        assert_eq!(names.len(), 2);
        let StmtKind::Function { func, .. } = &chunk.block.stmts[1].kind else { panic!() };
        assert!(func.is_vararg);
        assert_eq!(func.params.len(), 1);
    }

    #[test]
    fn method_definition_gets_self() {
        let chunk = parse("function Bean:new(name, gender) return self end");
        let StmtKind::Function { name, func } = &chunk.block.stmts[0].kind else { panic!() };
        assert_eq!(name.qualified(), "Bean.new");
        let params: Vec<_> = func.params.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(params, ["self", "name", "gender"]);
    }

    #[test]
    fn field_assignment_on_call_result() {
        parse(r#"entry({"admin", "network"}, post("x"), nil).leaf = true"#);
    }

    #[test]
    fn errors() {
        let err = parse_chunk(b"x = ", "e.lua").unwrap_err();
        assert_eq!(err.path, "e.lua");
        assert!(parse_chunk(b"goto done", "e.lua").unwrap_err().message.contains("goto"));
        assert!(parse_chunk(b"function f() return 1 x = 2 end", "e.lua").is_err());
        assert!(parse_chunk(b"function f() return ... end", "e.lua").is_err());
        assert!(parse_chunk(b"x", "e.lua").is_err());
        let err = parse_chunk(b"if x then\n\n", "e.lua").unwrap_err();
        assert_eq!(err.line, 3);
    }

    #[test]
    fn vararg_allowed_in_main_chunk() {
        parse("local a = ...");
    }
}
