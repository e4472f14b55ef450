//! Byte-oriented Lua 5.1 tokenizer.
//!
//! Source text is handled as raw bytes so that latin-1 and other non-UTF-8
//! content inside string literals and comments survives untouched.

use std::fmt;

use super::ast::{Pos, Span};

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Name(String),
    Str(Vec<u8>),
    Number(String),
    // keywords
    And,
    Break,
    Do,
    Else,
    Elseif,
    End,
    False,
    For,
    Function,
    If,
    In,
    Local,
    Nil,
    Not,
    Or,
    Repeat,
    Return,
    Then,
    True,
    Until,
    While,
    // symbols
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Caret,
    Hash,
    EqEq,
    NotEq,
    LtEq,
    GtEq,
    Lt,
    Gt,
    Assign,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Semi,
    Colon,
    Comma,
    Dot,
    Concat,
    Ellipsis,
    Eof,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use TokenKind::*;
        let s = match self {
            Name(n) => return write!(f, "name '{n}'"),
            Str(_) => "string",
            Number(n) => return write!(f, "number '{n}'"),
            And => "'and'",
            Break => "'break'",
            Do => "'do'",
            Else => "'else'",
            Elseif => "'elseif'",
            End => "'end'",
            False => "'false'",
            For => "'for'",
            Function => "'function'",
            If => "'if'",
            In => "'in'",
            Local => "'local'",
            Nil => "'nil'",
            Not => "'not'",
            Or => "'or'",
            Repeat => "'repeat'",
            Return => "'return'",
            Then => "'then'",
            True => "'true'",
            Until => "'until'",
            While => "'while'",
            Plus => "'+'",
            Minus => "'-'",
            Star => "'*'",
            Slash => "'/'",
            Percent => "'%'",
            Caret => "'^'",
            Hash => "'#'",
            EqEq => "'=='",
            NotEq => "'~='",
            LtEq => "'<='",
            GtEq => "'>='",
            Lt => "'<'",
            Gt => "'>'",
            Assign => "'='",
            LParen => "'('",
            RParen => "')'",
            LBrace => "'{'",
            RBrace => "'}'",
            LBracket => "'['",
            RBracket => "']'",
            Semi => "';'",
            Colon => "':'",
            Comma => "','",
            Dot => "'.'",
            Concat => "'..'",
            Ellipsis => "'...'",
            Eof => "end of file",
        };
        f.write_str(s)
    }
}

fn keyword(name: &str) -> Option<TokenKind> {
    use TokenKind::*;
    Some(match name {
        "and" => And,
        "break" => Break,
        "do" => Do,
        "else" => Else,
        "elseif" => Elseif,
        "end" => End,
        "false" => False,
        "for" => For,
        "function" => Function,
        "if" => If,
        "in" => In,
        "local" => Local,
        "nil" => Nil,
        "not" => Not,
        "or" => Or,
        "repeat" => Repeat,
        "return" => Return,
        "then" => Then,
        "true" => True,
        "until" => Until,
        "while" => While,
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

pub struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    line_start: usize,
}

impl<'a> Lexer<'a> {
    pub fn new(src: &'a [u8]) -> Self {
        let mut lexer = Lexer { src, pos: 0, line: 1, line_start: 0 };
        // A leading "#" line (shebang) is ignored by the reference interpreter.
        if src.first() == Some(&b'#') {
            while lexer.pos < src.len() && src[lexer.pos] != b'\n' {
                lexer.pos += 1;
            }
        }
        lexer
    }

    /// Tokenize the whole input; the final token is always `Eof`.
    pub fn tokenize(mut self) -> Result<Vec<Token>, LexError> {
        let mut out = Vec::new();
        loop {
            let tok = self.next_token()?;
            let eof = tok.kind == TokenKind::Eof;
            out.push(tok);
            if eof {
                return Ok(out);
            }
        }
    }

    fn here(&self) -> Pos {
        Pos {
            line: self.line,
            col: (self.pos - self.line_start) as u32 + 1,
            offset: self.pos,
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek_at(&self, ahead: usize) -> Option<u8> {
        self.src.get(self.pos + ahead).copied()
    }

    fn error(&self, message: impl Into<String>) -> LexError {
        let p = self.here();
        LexError { line: p.line, col: p.col, message: message.into() }
    }

    /// Consume one byte, tracking line starts.
    fn bump(&mut self) -> Option<u8> {
        let c = self.peek()?;
        self.pos += 1;
        if c == b'\n' {
            self.line += 1;
            self.line_start = self.pos;
        } else if c == b'\r' {
            // \r\n is a single line break; a lone \r also counts as one.
            if self.peek() == Some(b'\n') {
                self.pos += 1;
            }
            self.line += 1;
            self.line_start = self.pos;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) -> Result<(), LexError> {
        loop {
            match self.peek() {
                Some(b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c) => {
                    self.bump();
                }
                Some(b'-') if self.peek_at(1) == Some(b'-') => {
                    self.pos += 2;
                    if self.peek() == Some(b'[') {
                        if let Some(level) = self.long_bracket_level() {
                            self.read_long_bracket(level)?;
                            continue;
                        }
                    }
                    while let Some(c) = self.peek() {
                        if c == b'\n' || c == b'\r' {
                            break;
                        }
                        self.pos += 1;
                    }
                }
                _ => return Ok(()),
            }
        }
    }

    /// If positioned at `[=*[`, return the number of `=` signs.
    fn long_bracket_level(&self) -> Option<usize> {
        if self.peek() != Some(b'[') {
            return None;
        }
        let mut i = 1;
        while self.peek_at(i) == Some(b'=') {
            i += 1;
        }
        (self.peek_at(i) == Some(b'[')).then_some(i - 1)
    }

    fn read_long_bracket(&mut self, level: usize) -> Result<Vec<u8>, LexError> {
        let start = self.here();
        self.pos += level + 2;
        // first newline directly after the opening bracket is skipped
        if matches!(self.peek(), Some(b'\n' | b'\r')) {
            self.bump();
        }
        let mut buf = Vec::new();
        loop {
            match self.peek() {
                None => {
                    return Err(LexError {
                        line: start.line,
                        col: start.col,
                        message: "unfinished long string or comment".into(),
                    })
                }
                Some(b']') => {
                    let mut i = 1;
                    while self.peek_at(i) == Some(b'=') {
                        i += 1;
                    }
                    if i - 1 == level && self.peek_at(i) == Some(b']') {
                        self.pos += level + 2;
                        return Ok(buf);
                    }
                    buf.push(b']');
                    self.pos += 1;
                }
                Some(b'\n' | b'\r') => {
                    self.bump();
                    buf.push(b'\n');
                }
                Some(c) => {
                    buf.push(c);
                    self.pos += 1;
                }
            }
        }
    }

    fn read_short_string(&mut self, quote: u8) -> Result<Vec<u8>, LexError> {
        self.pos += 1;
        let mut buf = Vec::new();
        loop {
            let Some(c) = self.peek() else {
                return Err(self.error("unfinished string"));
            };
            match c {
                b'\n' | b'\r' => return Err(self.error("unfinished string")),
                b'\\' => {
                    let esc = self.peek_at(1).ok_or_else(|| self.error("unfinished string"))?;
                    match esc {
                        b'a' => buf.push(0x07),
                        b'b' => buf.push(0x08),
                        b'f' => buf.push(0x0c),
                        b'n' => buf.push(b'\n'),
                        b'r' => buf.push(b'\r'),
                        b't' => buf.push(b'\t'),
                        b'v' => buf.push(0x0b),
                        b'\\' => buf.push(b'\\'),
                        b'"' => buf.push(b'"'),
                        b'\'' => buf.push(b'\''),
                        b'\n' | b'\r' => {
                            self.pos += 1;
                            self.bump();
                            buf.push(b'\n');
                            continue;
                        }
                        b'0'..=b'9' => {
                            self.pos += 1;
                            let mut value: u32 = 0;
                            let mut digits = 0;
                            while digits < 3 {
                                match self.peek() {
                                    Some(d @ b'0'..=b'9') => {
                                        value = value * 10 + u32::from(d - b'0');
                                        self.pos += 1;
                                        digits += 1;
                                    }
                                    _ => break,
                                }
                            }
                            if value > 255 {
                                return Err(self.error("escape sequence too large"));
                            }
                            buf.push(value as u8);
                            continue;
                        }
                        other => {
                            self.pos += 1;
                            return Err(self.error(format!(
                                "invalid escape sequence '\\{}'",
                                char::from(other)
                            )));
                        }
                    }
                    self.pos += 2;
                }
                c if c == quote => {
                    self.pos += 1;
                    return Ok(buf);
                }
                c => {
                    buf.push(c);
                    self.pos += 1;
                }
            }
        }
    }

    fn read_number(&mut self) -> Result<String, LexError> {
        let start = self.pos;
        if self.peek() == Some(b'0') && matches!(self.peek_at(1), Some(b'x' | b'X')) {
            self.pos += 2;
            while matches!(self.peek(), Some(c) if c.is_ascii_hexdigit()) {
                self.pos += 1;
            }
        } else {
            while let Some(c) = self.peek() {
                if c.is_ascii_digit() || c == b'.' {
                    self.pos += 1;
                } else if c == b'e' || c == b'E' {
                    self.pos += 1;
                    if matches!(self.peek(), Some(b'+' | b'-')) {
                        self.pos += 1;
                    }
                } else {
                    break;
                }
            }
        }
        // Lua reads trailing alphanumerics into the numeral and rejects it.
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        let text = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        let valid = if let Some(hex) = text.strip_prefix("0x").or_else(|| text.strip_prefix("0X")) {
            !hex.is_empty() && hex.bytes().all(|c| c.is_ascii_hexdigit())
        } else {
            text.parse::<f64>().is_ok()
        };
        if !valid {
            return Err(self.error(format!("malformed number near '{text}'")));
        }
        Ok(text)
    }

    pub fn next_token(&mut self) -> Result<Token, LexError> {
        use TokenKind::*;
        self.skip_trivia()?;
        let start = self.here();
        let Some(c) = self.peek() else {
            return Ok(Token { kind: Eof, span: Span { start, end: start } });
        };
        let kind = match c {
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let begin = self.pos;
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
                    self.pos += 1;
                }
                let word = std::str::from_utf8(&self.src[begin..self.pos])
                    .expect("ascii identifier")
                    .to_string();
                keyword(&word).unwrap_or(Name(word))
            }
            b'0'..=b'9' => Number(self.read_number()?),
            b'.' if matches!(self.peek_at(1), Some(b'0'..=b'9')) => Number(self.read_number()?),
            b'"' | b'\'' => Str(self.read_short_string(c)?),
            b'[' => match self.long_bracket_level() {
                Some(level) => Str(self.read_long_bracket(level)?),
                None => {
                    self.pos += 1;
                    LBracket
                }
            },
            _ => {
                let two = (c, self.peek_at(1).unwrap_or(0));
                let (kind, len) = match two {
                    (b'.', b'.') if self.peek_at(2) == Some(b'.') => (Ellipsis, 3),
                    (b'.', b'.') => (Concat, 2),
                    (b'=', b'=') => (EqEq, 2),
                    (b'~', b'=') => (NotEq, 2),
                    (b'<', b'=') => (LtEq, 2),
                    (b'>', b'=') => (GtEq, 2),
                    (b'+', _) => (Plus, 1),
                    (b'-', _) => (Minus, 1),
                    (b'*', _) => (Star, 1),
                    (b'/', _) => (Slash, 1),
                    (b'%', _) => (Percent, 1),
                    (b'^', _) => (Caret, 1),
                    (b'#', _) => (Hash, 1),
                    (b'<', _) => (Lt, 1),
                    (b'>', _) => (Gt, 1),
                    (b'=', _) => (Assign, 1),
                    (b'(', _) => (LParen, 1),
                    (b')', _) => (RParen, 1),
                    (b'{', _) => (LBrace, 1),
                    (b'}', _) => (RBrace, 1),
                    (b']', _) => (RBracket, 1),
                    (b';', _) => (Semi, 1),
                    (b':', _) => (Colon, 1),
                    (b',', _) => (Comma, 1),
                    (b'.', _) => (Dot, 1),
                    _ => {
                        let shown = if c.is_ascii_graphic() {
                            format!("'{}'", char::from(c))
                        } else {
                            format!("byte 0x{c:02x}")
                        };
                        return Err(self.error(format!("unexpected symbol {shown}")));
                    }
                };
                self.pos += len;
                kind
            }
        };
        Ok(Token { kind, span: Span { start, end: self.here() } })
    }
}

/// Tokenize a byte slice.
pub fn tokenize(src: &[u8]) -> Result<Vec<Token>, LexError> {
    Lexer::new(src).tokenize()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<TokenKind> {
        tokenize(src.as_bytes()).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn operators_and_keywords() {
        use TokenKind::*;
        assert_eq!(
            kinds("local a = b .. c ~= ..."),
            vec![
                Local,
                Name("a".into()),
                Assign,
                Name("b".into()),
                Concat,
                Name("c".into()),
                NotEq,
                Ellipsis,
                Eof
            ]
        );
    }

    #[test]
    fn strings_and_escapes() {
        let toks = kinds(r#"'a\n' "q\"x" "\65\066" [[long
text]] [==[a]]b]==]"#);
        assert_eq!(toks[0], TokenKind::Str(b"a\n".to_vec()));
        assert_eq!(toks[1], TokenKind::Str(b"q\"x".to_vec()));
        assert_eq!(toks[2], TokenKind::Str(b"AB".to_vec()));
        assert_eq!(toks[3], TokenKind::Str(b"long\ntext".to_vec()));
        assert_eq!(toks[4], TokenKind::Str(b"a]]b".to_vec()));
    }

    #[test]
    fn rejects_unknown_escape() {
        let err = tokenize(br#"x = "\*""#).unwrap_err();
        assert!(err.message.contains("invalid escape"), "{err:?}");
        assert_eq!(err.line, 1);
    }

    #[test]
    fn comments_are_skipped() {
        assert_eq!(
            kinds("--[[ block\n comment ]] x -- tail\n--[==[ x ]==]"),
            vec![TokenKind::Name("x".into()), TokenKind::Eof]
        );
    }

    #[test]
    fn numbers() {
        assert_eq!(
            kinds("3 3.0 0x1F 1e10 .5 2E-3"),
            vec![
                TokenKind::Number("3".into()),
                TokenKind::Number("3.0".into()),
                TokenKind::Number("0x1F".into()),
                TokenKind::Number("1e10".into()),
                TokenKind::Number(".5".into()),
                TokenKind::Number("2E-3".into()),
                TokenKind::Eof
            ]
        );
        assert!(tokenize(b"3x").is_err());
    }

    #[test]
    fn positions_are_one_based() {
        let toks = tokenize(b"a\n  bb").unwrap();
        assert_eq!((toks[1].span.start.line, toks[1].span.start.col), (2, 3));
        assert_eq!(toks[1].span.end.offset, 6);
    }

    #[test]
    fn non_utf8_bytes_in_strings_survive() {
        let toks = tokenize(b"s = '\xe9t\xe9'").unwrap();
        assert_eq!(toks[2].kind, TokenKind::Str(vec![0xe9, b't', 0xe9]));
    }
}
