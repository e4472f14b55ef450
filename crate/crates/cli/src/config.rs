//! Optional TOML configuration file. Keys mirror the `scan` flags; a flag
//! given on the command line wins over the file.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

use luciscan_core::report::Format;

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub luci_only: Option<bool>,
    pub include: Option<Vec<String>>,
    pub exclude: Option<Vec<String>>,
    pub trigger_words: Option<PathBuf>,
    pub fixups: Option<PathBuf>,
    pub framework_rules: Option<bool>,
    pub inline_depth: Option<u32>,
    pub dict_approx: Option<bool>,
    pub llm_prune: Option<bool>,
    pub llm_endpoint: Option<String>,
    pub llm_model: Option<String>,
    pub llm_votes: Option<usize>,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub timings: Option<bool>,
}

impl FileConfig {
    /// Relative paths in the file resolve against the file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.trigger_words, &mut cfg.fixups, &mut cfg.output].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}
