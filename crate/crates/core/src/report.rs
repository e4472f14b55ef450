//! Findings and the scan report.
//!
//! Reports carry no timestamps or absolute paths, so two scans of the same
//! tree serialize to the same bytes.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::llm::{LlmLabel, VoteTally};
use crate::taint::{ChainStep, TaintFlow, VulnType};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SinkInfo {
    pub name: String,
    pub line: u32,
    pub col: u32,
    pub arg: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceInfo {
    pub name: String,
    pub file: String,
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub id: String,
    #[serde(rename = "type")]
    pub vuln: VulnType,
    pub file: String,
    /// Function containing the sink call.
    pub function: String,
    pub sink: SinkInfo,
    pub source: SourceInfo,
    pub chain: Vec<ChainStep>,
    pub call_path: Vec<String>,
    pub tainted_attrs: Vec<String>,
    pub web_reachable: bool,
    pub sanitized: bool,
    pub duplicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_label: Option<LlmLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_votes: Option<VoteTally>,
}

pub fn finding_id(file: &str, function: &str, sink: &str, arg: usize, source: &str) -> String {
    let digest = Sha256::digest(format!("{file}|{function}|{sink}|{arg}|{source}").as_bytes());
    hex::encode(&digest[..8])
}

impl Finding {
    pub fn from_flow(flow: &TaintFlow) -> Self {
        let source = flow.source.name();
        Finding {
            id: finding_id(&flow.sink.file, &flow.sink.function, &flow.sink.name, flow.sink.arg, &source),
            vuln: flow.sink.vuln,
            file: flow.sink.file.clone(),
            function: flow.sink.function.clone(),
            sink: SinkInfo {
                name: flow.sink.name.clone(),
                line: flow.sink.line,
                col: flow.sink.col,
                arg: flow.sink.arg,
            },
            source: SourceInfo {
                name: source,
                file: flow.source.file.clone(),
                line: flow.source.line,
                col: flow.source.col,
            },
            chain: flow.steps.clone(),
            call_path: flow.call_path(),
            tainted_attrs: flow.tainted_attrs.clone(),
            web_reachable: flow.web_reachable,
            sanitized: false,
            duplicates: 1,
            llm_label: None,
            llm_votes: None,
        }
    }

    fn sort_key(&self) -> (&str, u32, usize, u32, &str) {
        (&self.file, self.sink.line, self.sink.arg, self.sink.col, &self.id)
    }
}

/// Collapse findings that share (sink function, sink name, argument, source
/// name). The representative has the smallest file and line; its
/// `duplicates` is the group size.
pub fn dedup(findings: Vec<Finding>) -> Vec<Finding> {
    let mut groups: BTreeMap<(String, String, usize, String), Vec<Finding>> = BTreeMap::new();
    for f in findings {
        let key = (f.function.clone(), f.sink.name.clone(), f.sink.arg, f.source.name.clone());
        groups.entry(key).or_default().push(f);
    }
    let mut out: Vec<Finding> = groups
        .into_values()
        .map(|mut g| {
            let total: usize = g.iter().map(|f| f.duplicates).sum();
            g.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
            let mut rep = g.swap_remove(0);
            rep.duplicates = total;
            rep
        })
        .collect();
    sort_findings(&mut out);
    out
}

pub fn sort_findings(findings: &mut [Finding]) {
    findings.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub path: String,
    pub line: u32,
    pub col: u32,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    /// Finding count per vulnerability type; every type is listed.
    pub per_type: BTreeMap<VulnType, usize>,
    pub pruned: usize,
    /// Flows removed by the framework rules, per reason.
    pub framework_dropped: BTreeMap<String, usize>,
    pub sanitized_flows: usize,
    pub roots: usize,
    pub inlined_sites: u64,
    pub expanded_nodes: u64,
    /// Largest single expanded graph, a proxy for peak working set.
    pub peak_nodes: usize,
    pub diagnostics: BTreeMap<String, usize>,
    pub llm_requests: u64,
    pub llm_prompt_tokens: u64,
    pub llm_completion_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

impl Stats {
    pub fn count_types(&mut self, findings: &[Finding]) {
        self.per_type = VulnType::ALL.iter().map(|&t| (t, 0)).collect();
        for f in findings {
            *self.per_type.entry(f.vuln).or_default() += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub tool_version: String,
    /// Final component of the scan root.
    pub scan_root: String,
    pub file_count: usize,
    pub parse_failures: Vec<ParseFailure>,
    pub findings: Vec<Finding>,
    /// Findings labeled FALSE_ALARM by the pruner.
    pub pruned: Vec<Finding>,
    pub stats: Stats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Text,
}

impl ScanReport {
    pub fn new(scan_root: &str) -> Self {
        let mut stats = Stats::default();
        stats.count_types(&[]);
        ScanReport {
            tool_version: TOOL_VERSION.to_string(),
            scan_root: scan_root.to_string(),
            file_count: 0,
            parse_failures: Vec::new(),
            findings: Vec::new(),
            pruned: Vec::new(),
            stats,
        }
    }

    /// 0 when clean, 1 when findings remain.
    pub fn exit_code(&self) -> i32 {
        i32::from(!self.findings.is_empty())
    }

    pub fn emit(&self, format: Format) -> Vec<u8> {
        match format {
            Format::Json => {
                let mut out = serde_json::to_vec_pretty(self).expect("report serializes");
                out.push(b'\n');
                out
            }
            Format::Text => self.to_text().into_bytes(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "luciscan {} scan of {} ({} files)", self.tool_version, self.scan_root, self.file_count);
        for p in &self.parse_failures {
            let _ = writeln!(out, "parse failure: {}:{}:{}: {}", p.path, p.line, p.col, p.message);
        }
        for f in &self.findings {
            out.push('\n');
            write_finding(&mut out, f);
        }
        if !self.pruned.is_empty() {
            let _ = writeln!(out, "\npruned as false alarms:");
            for f in &self.pruned {
                out.push('\n');
                write_finding(&mut out, f);
            }
        }
        let counts: Vec<String> = self.stats.per_type.iter().map(|(t, n)| format!("{t} {n}")).collect();
        let _ = writeln!(
            out,
            "\n{} findings ({}), {} pruned",
            self.findings.len(),
            counts.join(", "),
            self.stats.pruned
        );
        out
    }
}

fn write_finding(out: &mut String, f: &Finding) {
    let _ = writeln!(
        out,
        "[{}] {}:{}:{} {} (argument {}) in {}",
        f.vuln, f.file, f.sink.line, f.sink.col, f.sink.name, f.sink.arg, f.function
    );
    let _ = writeln!(out, "  id: {}", f.id);
    let _ = writeln!(out, "  source: {} at {}:{}:{}", f.source.name, f.source.file, f.source.line, f.source.col);
    let _ = writeln!(out, "  call path: {}", f.call_path.join(" → "));
    if f.duplicates > 1 {
        let _ = writeln!(out, "  duplicates: {}", f.duplicates);
    }
    if let Some(label) = f.llm_label {
        let votes = f.llm_votes.as_ref().map(|v| format!(" ({:.0}% of {} votes)", v.confidence * 100.0, v.votes.len()));
        let _ = writeln!(out, "  llm: {}{}", label.as_str(), votes.unwrap_or_default());
    }
    let _ = writeln!(out, "  chain:");
    for s in &f.chain {
        let _ = writeln!(out, "    {}:{} [{}] {}", s.file, s.line, s.function, s.excerpt);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn finding(file: &str, function: &str, sink: &str, line: u32, source: &str) -> Finding {
        Finding {
            id: finding_id(file, function, sink, 1, source),
            vuln: VulnType::Ci,
            file: file.into(),
            function: function.into(),
            sink: SinkInfo { name: sink.into(), line, col: 5, arg: 1 },
            source: SourceInfo { name: source.into(), file: file.into(), line: 1, col: 1 },
            chain: vec![ChainStep {
                file: file.into(),
                line,
                col: 5,
                excerpt: format!("{sink}(cmd)"),
                function: function.into(),
            }],
            call_path: vec![function.into()],
            tainted_attrs: vec![],
            web_reachable: true,
            sanitized: false,
            duplicates: 1,
            llm_label: None,
            llm_votes: None,
        }
    }

    #[test]
    fn ids_are_stable() {
        let a = finding_id("a.lua", "f", "io.popen", 1, "luci.http.formvalue");
        assert_eq!(a, finding_id("a.lua", "f", "io.popen", 1, "luci.http.formvalue"));
        assert_ne!(a, finding_id("a.lua", "f", "io.popen", 2, "luci.http.formvalue"));
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn dedup_collapses_copies() {
        let one = finding("fw2/bridge.lua", "get_device_byif", "io.popen", 10, "add_br(http_form)");
        let two = finding("fw1/bridge.lua", "get_device_byif", "io.popen", 10, "add_br(http_form)");
        let out = dedup(vec![one, two]);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].duplicates, 2);
        assert_eq!(out[0].file, "fw1/bridge.lua");
        let a = finding("x.lua", "f", "io.popen", 3, "s");
        let b = finding("x.lua", "f", "os.execute", 4, "s");
        assert_eq!(dedup(vec![b, a]).len(), 2);
        assert!(dedup(vec![]).is_empty());
    }

    #[test]
    fn empty_report() {
        let r = ScanReport::new("root");
        let json = String::from_utf8(r.emit(Format::Json)).unwrap();
        assert!(json.contains("\"findings\": []"));
        assert!(json.contains("\"CI\": 0"));
        assert_eq!(r.exit_code(), 0);
        let back: ScanReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn round_trip_and_text() {
        let mut r = ScanReport::new("root");
        r.findings = vec![finding("controller/admin/network.lua", "iface_reconnect", "luci.sys.call", 12, "iface_reconnect(iface)")];
        r.stats.count_types(&r.findings);
        let json = r.emit(Format::Json);
        assert_eq!(serde_json::from_slice::<ScanReport>(&json).unwrap(), r);
        assert_eq!(json, r.emit(Format::Json));
        let text = r.to_text();
        assert!(text.contains("luci.sys.call"));
        assert!(text.contains("call path: iface_reconnect"));
        assert_eq!(r.exit_code(), 1);
    }
}
