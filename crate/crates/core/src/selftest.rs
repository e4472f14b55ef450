//! Corpus self-test: scan each annotated fixture and diff against its
//! `expect.json` sidecar.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::ScanReport;
use crate::scan::{scan, ScanConfig, ScanError};
use crate::taint::{ConfigError, DropReason, TriggerWords, VulnType};

pub const SIDECAR: &str = "expect.json";
/// Optional corpus-wide trigger-word file, merged over the defaults.
pub const CORPUS_TRIGGER_WORDS: &str = "trigger_words.json";

#[derive(Debug, Error)]
pub enum SelftestError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad sidecar: {message}")]
    Sidecar { path: String, message: String },
    #[error(transparent)]
    TriggerWords(#[from] ConfigError),
    #[error("{fixture}: {source}")]
    Scan {
        fixture: String,
        #[source]
        source: ScanError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedFinding {
    #[serde(rename = "type")]
    pub vuln: VulnType,
    pub sink: String,
    pub file: String,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    #[serde(rename = "type")]
    pub vuln: VulnType,
    #[serde(default)]
    pub category: String,
    #[serde(default)]
    pub variant: String,
    /// False for fixtures whose flow does not stem from the HTTP interface;
    /// the framework rules should remove their findings.
    #[serde(default = "yes")]
    pub web_reachable: bool,
    #[serde(default)]
    pub drop_reason: Option<DropReason>,
    /// Findings expected with the framework rules enabled.
    pub findings: Vec<ExpectedFinding>,
    /// Source names of flows that only appear with the framework rules
    /// disabled (parameters of functions no dispatched entry reaches, or
    /// non-HTTP sources outside controllers).
    #[serde(default)]
    pub unreachable_sources: Vec<String>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: String,
    pub dir: PathBuf,
    pub expect: Expectation,
}

#[derive(Debug, Clone)]
pub struct FixtureResult {
    pub name: String,
    pub vuln: VulnType,
    pub expected: usize,
    pub matched: usize,
    pub missing: Vec<ExpectedFinding>,
    pub unexpected: Vec<ExpectedFinding>,
}

impl FixtureResult {
    pub fn passed(&self) -> bool {
        self.missing.is_empty() && self.unexpected.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TypeCounts {
    pub fixtures: usize,
    pub expected: usize,
    pub detected: usize,
    pub false_positives: usize,
}

impl TypeCounts {
    pub fn recall(&self) -> Option<f64> {
        (self.expected > 0).then(|| self.detected as f64 / self.expected as f64)
    }

    pub fn precision(&self) -> Option<f64> {
        let reported = self.detected + self.false_positives;
        (reported > 0).then(|| self.detected as f64 / reported as f64)
    }

    fn add(&mut self, o: &TypeCounts) {
        self.fixtures += o.fixtures;
        self.expected += o.expected;
        self.detected += o.detected;
        self.false_positives += o.false_positives;
    }
}

#[derive(Debug, Clone, Default)]
pub struct Summary {
    pub results: Vec<FixtureResult>,
    pub per_type: BTreeMap<VulnType, TypeCounts>,
}

impl Summary {
    pub fn failures(&self) -> impl Iterator<Item = &FixtureResult> {
        self.results.iter().filter(|r| !r.passed())
    }

    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }

    pub fn total(&self) -> TypeCounts {
        let mut t = TypeCounts::default();
        for c in self.per_type.values() {
            t.add(c);
        }
        t
    }

    /// Table with one column per vulnerability type plus a total, followed by
    /// any failing fixtures.
    pub fn render(&self) -> String {
        let pct = |v: Option<f64>| v.map(|v| format!("{:.2}%", v * 100.0)).unwrap_or_else(|| "-".into());
        let mut cols: Vec<(String, TypeCounts)> =
            VulnType::ALL.iter().map(|t| (t.to_string(), self.per_type.get(t).copied().unwrap_or_default())).collect();
        cols.push(("Total".into(), self.total()));
        let mut s = String::new();
        let row = |s: &mut String, label: &str, cells: Vec<String>| {
            let _ = write!(s, "{label:<12}");
            for c in cells {
                let _ = write!(s, "{c:>10}");
            }
            s.push('\n');
        };
        row(&mut s, "Type", cols.iter().map(|c| c.0.clone()).collect());
        row(&mut s, "Fixtures", cols.iter().map(|c| c.1.fixtures.to_string()).collect());
        row(&mut s, "Number", cols.iter().map(|c| c.1.expected.to_string()).collect());
        row(&mut s, "Detected", cols.iter().map(|c| c.1.detected.to_string()).collect());
        row(&mut s, "Recall Rate", cols.iter().map(|c| pct(c.1.recall())).collect());
        row(&mut s, "Precision", cols.iter().map(|c| pct(c.1.precision())).collect());
        let failures: Vec<&FixtureResult> = self.failures().collect();
        let _ = writeln!(s, "\n{} fixtures, {} failed", self.results.len(), failures.len());
        for f in failures {
            let _ = writeln!(s, "FAIL {}", f.name);
            for m in &f.missing {
                let _ = writeln!(s, "  missing    {} {} at {}:{}", m.vuln, m.sink, m.file, m.line);
            }
            for u in &f.unexpected {
                let _ = writeln!(s, "  unexpected {} {} at {}:{}", u.vuln, u.sink, u.file, u.line);
            }
        }
        s
    }
}

/// Fixture directories (those holding a sidecar), sorted by name.
pub fn load_corpus(dir: &Path) -> Result<Vec<Fixture>, SelftestError> {
    let io = |e| SelftestError::Io { path: dir.display().to_string(), source: e };
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        let sidecar = path.join(SIDECAR);
        if !sidecar.is_file() {
            continue;
        }
        let text = std::fs::read_to_string(&sidecar)
            .map_err(|e| SelftestError::Io { path: sidecar.display().to_string(), source: e })?;
        let expect: Expectation = serde_json::from_str(&text)
            .map_err(|e| SelftestError::Sidecar { path: sidecar.display().to_string(), message: e.to_string() })?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        out.push(Fixture { name, dir: path, expect });
    }
    out.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(out)
}

/// Trigger words for a corpus: defaults, plus the corpus file if present.
pub fn corpus_trigger_words(dir: &Path) -> Result<TriggerWords, SelftestError> {
    let p = dir.join(CORPUS_TRIGGER_WORDS);
    Ok(if p.is_file() { TriggerWords::load(&p)? } else { TriggerWords::default() })
}

pub fn observed(report: &ScanReport) -> BTreeSet<ExpectedFinding> {
    report
        .findings
        .iter()
        .map(|f| ExpectedFinding { vuln: f.vuln, sink: f.sink.name.clone(), file: f.file.clone(), line: f.sink.line })
        .collect()
}

/// Scan every fixture with `base` (its root replaced) and compare.
pub fn run(dir: &Path, base: &ScanConfig) -> Result<Summary, SelftestError> {
    let mut summary = Summary::default();
    for t in VulnType::ALL {
        summary.per_type.insert(t, TypeCounts::default());
    }
    for fx in load_corpus(dir)? {
        let config = ScanConfig { root: fx.dir.clone(), ..base.clone() };
        let out = scan(&config).map_err(|e| SelftestError::Scan { fixture: fx.name.clone(), source: e })?;
        let got = observed(&out.report);
        let want: BTreeSet<ExpectedFinding> = fx.expect.findings.iter().cloned().collect();
        let result = FixtureResult {
            name: fx.name.clone(),
            vuln: fx.expect.vuln,
            expected: want.len(),
            matched: want.intersection(&got).count(),
            missing: want.difference(&got).cloned().collect(),
            unexpected: got.difference(&want).cloned().collect(),
        };
        let c = summary.per_type.entry(fx.expect.vuln).or_default();
        c.fixtures += 1;
        c.expected += result.expected;
        c.detected += result.matched;
        c.false_positives += result.unexpected.len();
        summary.results.push(result);
    }
    Ok(summary)
}
