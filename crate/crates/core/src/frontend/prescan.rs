//! Pre-parse repair of escape sequences the strict parser rejects.
//!
//! Firmware Lua frequently writes pattern escapes such as `"\*"` or `"\-"`
//! where `"%*"` / `"%-"` was meant. The prescan runs a small string-literal
//! scanner (not the parser, so it works on files the parser would reject)
//! and rewrites escapes found in a configurable table, recording every
//! rewrite so the original bytes can be restored.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FrontendError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixupRule {
    pub from: Vec<u8>,
    pub to: Vec<u8>,
}

/// Escape rewrite table. Rules are tried longest-`from` first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixupTable {
    rules: Vec<FixupRule>,
}

impl Default for FixupTable {
    fn default() -> Self {
        FixupTable {
            rules: vec![
                FixupRule { from: b"\\*".to_vec(), to: b"%*".to_vec() },
                FixupRule { from: b"\\-".to_vec(), to: b"%-".to_vec() },
            ],
        }
    }
}

impl FixupTable {
    pub fn new(rules: Vec<FixupRule>) -> Result<Self, String> {
        for r in &rules {
            validate_rule(r)?;
        }
        let mut table = FixupTable { rules };
        table.sort();
        Ok(table)
    }

    fn sort(&mut self) {
        self.rules.sort_by(|a, b| b.from.len().cmp(&a.from.len()).then(a.from.cmp(&b.from)));
        self.rules.dedup_by(|a, b| a.from == b.from);
    }

    pub fn rules(&self) -> &[FixupRule] {
        &self.rules
    }

    /// Parse `FROM<TAB>TO` lines (with `#` comments) and add them to the defaults.
    pub fn extend_from_text(&mut self, text: &str) -> Result<(), FrontendError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let bad = |message: String| FrontendError::FixupTable { line: idx + 1, message };
            let (from, to) =
                line.split_once('\t').ok_or_else(|| bad("expected FROM<TAB>TO".into()))?;
            let rule = FixupRule { from: from.as_bytes().to_vec(), to: to.as_bytes().to_vec() };
            validate_rule(&rule).map_err(bad)?;
            // a later rule for the same escape overrides
            self.rules.retain(|r| r.from != rule.from);
            self.rules.push(rule);
        }
        self.sort();
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FrontendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FrontendError::Io { path: path.display().to_string(), source: e })?;
        let mut table = FixupTable::default();
        table.extend_from_text(&text)?;
        Ok(table)
    }
}

fn validate_rule(rule: &FixupRule) -> Result<(), String> {
    if rule.from.len() < 2 || rule.from[0] != b'\\' {
        return Err("FROM must be a backslash escape such as \\*".into());
    }
    if rule.from[1..].iter().any(|c| matches!(c, b'\\' | b'\n' | b'\r')) {
        return Err("FROM may contain only one leading backslash".into());
    }
    // Replacements must not reintroduce escapes or end the literal.
    if rule.to.iter().any(|c| matches!(c, b'\\' | b'"' | b'\'' | b'\n' | b'\r')) {
        return Err("TO must not contain backslashes, quotes or newlines".into());
    }
    Ok(())
}

/// One rewrite performed by the prescan. `offset` is into the raw text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fixup {
    pub line: u32,
    pub column: u32,
    pub offset: usize,
    pub original: String,
    pub replacement: String,
}

impl fmt::Display for Fixup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {} -> {}", self.line, self.column, self.original, self.replacement)
    }
}

/// Rewrite escapes inside string literals according to `table`.
pub fn prescan_source(raw: &[u8], table: &FixupTable) -> (Vec<u8>, Vec<Fixup>) {
    let mut scan = Scanner { src: raw, pos: 0, line: 1, line_start: 0, out: Vec::with_capacity(raw.len()), fixups: Vec::new() };
    scan.run(table);
    (scan.out, scan.fixups)
}

/// Undo a prescan: reapply the original bytes at each recorded fixup.
pub fn restore(sanitized: &[u8], fixups: &[Fixup]) -> Vec<u8> {
    let mut out = Vec::with_capacity(sanitized.len());
    let mut cursor = 0usize;
    let mut delta: isize = 0;
    for fx in fixups {
        let at = (fx.offset as isize + delta) as usize;
        out.extend_from_slice(&sanitized[cursor..at]);
        out.extend_from_slice(fx.original.as_bytes());
        cursor = at + fx.replacement.len();
        delta += fx.replacement.len() as isize - fx.original.len() as isize;
    }
    out.extend_from_slice(&sanitized[cursor..]);
    out
}

struct Scanner<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    line_start: usize,
    out: Vec<u8>,
    fixups: Vec<Fixup>,
}

impl Scanner<'_> {
    fn at(&self, i: usize) -> Option<u8> {
        self.src.get(self.pos + i).copied()
    }

    fn copy(&mut self, n: usize) {
        for _ in 0..n {
            let Some(c) = self.at(0) else { return };
            self.out.push(c);
            self.pos += 1;
            if c == b'\n' {
                self.line += 1;
                self.line_start = self.pos;
            }
        }
    }

    fn long_level(&self) -> Option<usize> {
        if self.at(0) != Some(b'[') {
            return None;
        }
        let mut i = 1;
        while self.at(i) == Some(b'=') {
            i += 1;
        }
        (self.at(i) == Some(b'[')).then_some(i - 1)
    }

    fn skip_long(&mut self, level: usize) {
        self.copy(level + 2);
        while self.pos < self.src.len() {
            if self.at(0) == Some(b']') {
                let mut i = 1;
                while self.at(i) == Some(b'=') {
                    i += 1;
                }
                if i - 1 == level && self.at(i) == Some(b']') {
                    self.copy(level + 2);
                    return;
                }
            }
            self.copy(1);
        }
    }

    fn run(&mut self, table: &FixupTable) {
        while let Some(c) = self.at(0) {
            match c {
                b'-' if self.at(1) == Some(b'-') => {
                    self.copy(2);
                    if let Some(level) = self.long_level() {
                        self.skip_long(level);
                    } else {
                        while let Some(c) = self.at(0) {
                            if c == b'\n' {
                                break;
                            }
                            self.copy(1);
                        }
                    }
                }
                b'[' => match self.long_level() {
                    Some(level) => self.skip_long(level),
                    None => self.copy(1),
                },
                b'"' | b'\'' => self.short_string(c, table),
                _ => self.copy(1),
            }
        }
    }

    fn short_string(&mut self, quote: u8, table: &FixupTable) {
        self.copy(1);
        while let Some(c) = self.at(0) {
            if c == quote {
                self.copy(1);
                return;
            }
            if c == b'\n' {
                // unterminated literal: leave the rest to the parser's diagnostics
                return;
            }
            if c != b'\\' {
                self.copy(1);
                continue;
            }
            let rest = &self.src[self.pos..];
            if let Some(rule) = table.rules.iter().find(|r| rest.starts_with(&r.from)) {
                self.fixups.push(Fixup {
                    line: self.line,
                    column: (self.pos - self.line_start) as u32 + 1,
                    offset: self.pos,
                    original: String::from_utf8_lossy(&rule.from).into_owned(),
                    replacement: String::from_utf8_lossy(&rule.to).into_owned(),
                });
                self.out.extend_from_slice(&rule.to);
                self.pos += rule.from.len();
            } else {
                // keep the escape pair intact (covers \\ and \")
                self.copy(2);
            }
        }
    }
}
