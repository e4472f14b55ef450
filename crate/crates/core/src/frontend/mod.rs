//! Lua frontend: file discovery, escape repair, and parsing.

pub mod ast;
pub mod files;
pub mod lexer;
pub mod parser;
pub mod prescan;

use std::fmt;

use thiserror::Error;

pub use ast::Chunk;
pub use files::{collect_files, FileFilter};
pub use parser::parse_chunk;
pub use prescan::{prescan_source, Fixup, FixupTable};

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SyntaxError {
    pub path: String,
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}: {}", self.path, self.line, self.col, self.message)
    }
}

impl std::error::Error for SyntaxError {}

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("scan root not found or not a directory: {0}")]
    RootNotFound(String),
    #[error("invalid glob {pattern:?}: {message}")]
    Glob { pattern: String, message: String },
    #[error("fixup table line {line}: {message}")]
    FixupTable { line: usize, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A Lua file as read from disk and repaired by the prescan.
#[derive(Debug, Clone)]
pub struct SourceFile {
    /// Relative to the scan root.
    pub path: String,
    pub raw_text: Vec<u8>,
    pub sanitized_text: Vec<u8>,
    pub fixups: Vec<Fixup>,
}

impl SourceFile {
    pub fn new(path: impl Into<String>, raw_text: Vec<u8>, table: &FixupTable) -> Self {
        let (sanitized_text, fixups) = prescan_source(&raw_text, table);
        SourceFile { path: path.into(), raw_text, sanitized_text, fixups }
    }

    pub fn parse(&self) -> Result<Chunk, SyntaxError> {
        parse_chunk(&self.sanitized_text, &self.path)
    }

    /// Source bytes covered by `span`, lossily decoded.
    pub fn excerpt(&self, span: ast::Span) -> String {
        slice_text(&self.sanitized_text, span)
    }
}

pub(crate) fn slice_text(text: &[u8], span: ast::Span) -> String {
    let end = span.end.offset.min(text.len());
    let start = span.start.offset.min(end);
    String::from_utf8_lossy(&text[start..end]).into_owned()
}
