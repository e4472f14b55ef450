//! Discovery of Lua sources under an extracted firmware root.

use std::path::{Path, PathBuf};

use globset::{Glob, GlobSet, GlobSetBuilder};
use walkdir::WalkDir;

use super::FrontendError;

/// Conventional LuCI install location inside a root filesystem.
pub const LUCI_SUBTREE: &str = "usr/lib/lua/luci";

#[derive(Debug, Clone)]
pub struct FileFilter {
    pub include: Vec<String>,
    pub exclude: Vec<String>,
    pub luci_only: bool,
}

impl Default for FileFilter {
    fn default() -> Self {
        FileFilter { include: vec!["**/*.lua".into()], exclude: Vec::new(), luci_only: false }
    }
}

#[derive(Debug, Default)]
pub struct Discovered {
    /// Paths relative to the scan root, `/`-separated, sorted.
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

fn build_set(patterns: &[String]) -> Result<GlobSet, FrontendError> {
    let mut builder = GlobSetBuilder::new();
    for p in patterns {
        let glob = Glob::new(p).map_err(|e| FrontendError::Glob { pattern: p.clone(), message: e.to_string() })?;
        builder.add(glob);
    }
    builder.build().map_err(|e| FrontendError::Glob { pattern: patterns.join(","), message: e.to_string() })
}

/// Walk `root` and return matching files in lexicographic order of their
/// relative path. Unreadable entries are reported as warnings.
pub fn collect_files(root: &Path, filter: &FileFilter) -> Result<Discovered, FrontendError> {
    if !root.is_dir() {
        return Err(FrontendError::RootNotFound(root.display().to_string()));
    }
    let include = build_set(&filter.include)?;
    let exclude = build_set(&filter.exclude)?;
    let luci = root.join(LUCI_SUBTREE);
    let walk_root: PathBuf = if filter.luci_only && luci.is_dir() { luci } else { root.to_path_buf() };

    let mut out = Discovered::default();
    for entry in WalkDir::new(&walk_root).follow_links(false) {
        let entry = match entry {
            Ok(e) => e,
            Err(err) => {
                let at = err.path().map(|p| p.display().to_string()).unwrap_or_default();
                out.warnings.push(format!("cannot read {at}: {err}"));
                continue;
            }
        };
        if !entry.file_type().is_file() {
            continue;
        }
        let Ok(rel) = entry.path().strip_prefix(root) else { continue };
        let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        if include.is_match(&rel) && !exclude.is_match(&rel) {
            out.files.push(rel);
        }
    }
    out.files.sort();
    Ok(out)
}
