//! Optional alarm pruning with a chat-completion model.
//!
//! Each finding becomes a prompt holding the source of every function on its
//! chain. The prompt is sent `votes` times; the majority verdict labels the
//! finding and ties go to TRUE_ALARM. FALSE_ALARM findings move to the
//! report's `pruned` list.

#[cfg(feature = "llm")]
mod http;

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::report::{Finding, ScanReport};

#[cfg(feature = "llm")]
pub use http::HttpClient;

/// Environment variables holding the API key, in lookup order.
pub const API_KEY_VARS: [&str; 2] = ["LUCISCAN_API_KEY", "OPENAI_API_KEY"];
pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_MODEL: &str = "gpt-4";
pub const INSTRUCTION: &str = "Answer exactly TRUE_ALARM or FALSE_ALARM, then justify.";

pub fn api_key_from_env() -> Option<String> {
    API_KEY_VARS.iter().find_map(|v| std::env::var(v).ok().filter(|k| !k.is_empty()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Vote {
    TrueAlarm,
    FalseAlarm,
    Unparseable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LlmLabel {
    TrueAlarm,
    FalseAlarm,
    Unevaluated,
}

impl LlmLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            LlmLabel::TrueAlarm => "TRUE_ALARM",
            LlmLabel::FalseAlarm => "FALSE_ALARM",
            LlmLabel::Unevaluated => "UNEVALUATED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteTally {
    pub votes: Vec<Vote>,
    pub label: LlmLabel,
    /// Share of all votes that agree with the label.
    pub confidence: f64,
}

impl VoteTally {
    pub fn from_votes(votes: Vec<Vote>) -> Self {
        let t = votes.iter().filter(|v| **v == Vote::TrueAlarm).count();
        let f = votes.iter().filter(|v| **v == Vote::FalseAlarm).count();
        let (label, agree) = if t + f == 0 {
            (LlmLabel::Unevaluated, 0)
        } else if t >= f {
            (LlmLabel::TrueAlarm, t)
        } else {
            (LlmLabel::FalseAlarm, f)
        };
        let confidence = if votes.is_empty() { 0.0 } else { agree as f64 / votes.len() as f64 };
        VoteTally { votes, label, confidence }
    }
}

/// First verdict token in the text, case-insensitively. Both tokens present
/// is ambiguous.
pub fn parse_verdict(text: &str) -> Vote {
    let lower = text.to_ascii_lowercase();
    match (lower.contains("true_alarm"), lower.contains("false_alarm")) {
        (true, false) => Vote::TrueAlarm,
        (false, true) => Vote::FalseAlarm,
        _ => Vote::Unparseable,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub prompt: String,
    pub temperature: f32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LlmError {
    #[error("service unavailable: {0}")]
    ServiceUnavailable(String),
    #[error("malformed response: {0}")]
    BadResponse(String),
    #[error("no API key: set {} in the environment", API_KEY_VARS.join(" or "))]
    MissingCredential,
}

pub trait ChatClient: Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

impl<F> ChatClient for F
where
    F: Fn(&ChatRequest) -> Result<ChatResponse, LlmError> + Sync,
{
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        self(req)
    }
}

pub const SYSTEM_PROMPT: &str = "You are a security auditor reviewing alarms from a static taint analyzer \
for Lua code in the LuCI web interface of router firmware. Decide whether untrusted input really reaches \
the dangerous call without being validated or sanitized.";

/// Source text of every analyzed function, by name.
#[derive(Debug, Clone, Default)]
pub struct FunctionSources {
    by_name: BTreeMap<String, Vec<(String, String)>>,
}

impl FunctionSources {
    pub fn insert(&mut self, name: &str, file: &str, text: String) {
        self.by_name.entry(name.to_string()).or_default().push((file.to_string(), text));
    }

    /// Prefer the definition in `file`, else the first one.
    pub fn get(&self, name: &str, file: &str) -> Option<&(String, String)> {
        let defs = self.by_name.get(name)?;
        defs.iter().find(|(f, _)| f == file).or(defs.first())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneRequest {
    pub finding_id: String,
    pub prompt_text: String,
    pub model: String,
    pub temperature: f32,
    pub truncated: bool,
}

/// Build the prompt for one finding. When the code exceeds `max_chars`,
/// middle functions of the chain are dropped; the first (source side) and
/// last (sink side) are always kept.
pub fn build_prompt(finding: &Finding, sources: &FunctionSources, model: &str, max_chars: usize) -> PruneRequest {
    // (function, file) in chain order, each once
    let mut funcs: Vec<(String, String)> = Vec::new();
    for s in &finding.chain {
        if !funcs.iter().any(|(f, _)| *f == s.function) {
            funcs.push((s.function.clone(), s.file.clone()));
        }
    }
    let fences: Vec<String> = funcs
        .iter()
        .map(|(name, file)| {
            let (file, text) = sources.get(name, file).cloned().unwrap_or((file.clone(), String::new()));
            format!("-- {name} ({file})\n```lua\n{}\n```\n", text.trim_end())
        })
        .collect();

    let mut header = String::new();
    let _ = writeln!(
        header,
        "The analyzer reports a {} flow into `{}` (argument {}) in function `{}` of {}.",
        finding.vuln, finding.sink.name, finding.sink.arg, finding.function, finding.file
    );
    let _ = writeln!(header, "Source: `{}` at {}:{}.", finding.source.name, finding.source.file, finding.source.line);
    let _ = writeln!(header, "Call path: {}", finding.call_path.join(" -> "));
    let mut chain = String::from("Flow:\n");
    for s in &finding.chain {
        let _ = writeln!(chain, "  {}:{} [{}] {}", s.file, s.line, s.function, s.excerpt);
    }

    let fixed = header.len() + chain.len() + INSTRUCTION.len() + 8;
    let mut keep: Vec<bool> = vec![true; fences.len()];
    let mut total: usize = fixed + fences.iter().map(String::len).sum::<usize>();
    let mut truncated = false;
    // drop from the middle outward
    let mut middle: Vec<usize> = (1..fences.len().saturating_sub(1)).collect();
    let mid = fences.len() as f64 / 2.0;
    middle.sort_by(|a, b| (*a as f64 - mid).abs().total_cmp(&(*b as f64 - mid).abs()).then(a.cmp(b)));
    for i in middle {
        if total <= max_chars {
            break;
        }
        keep[i] = false;
        total -= fences[i].len();
        truncated = true;
    }

    let mut prompt = header;
    prompt.push('\n');
    let mut omitted = 0;
    for (i, f) in fences.iter().enumerate() {
        if keep[i] {
            if omitted > 0 {
                let _ = writeln!(prompt, "-- ({omitted} intermediate functions omitted)\n");
                omitted = 0;
            }
            prompt.push_str(f);
            prompt.push('\n');
        } else {
            omitted += 1;
        }
    }
    prompt.push_str(&chain);
    prompt.push('\n');
    prompt.push_str(INSTRUCTION);
    prompt.push('\n');
    PruneRequest {
        finding_id: finding.id.clone(),
        prompt_text: prompt,
        model: model.to_string(),
        temperature: 0.0,
        truncated,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneOptions {
    pub model: String,
    pub votes: usize,
    pub max_prompt_chars: usize,
    /// Requests in flight at once.
    pub in_flight: usize,
}

impl Default for PruneOptions {
    fn default() -> Self {
        PruneOptions { model: DEFAULT_MODEL.to_string(), votes: 5, max_prompt_chars: 48_000, in_flight: 4 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PruneStats {
    pub requests: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub pruned: usize,
    pub failed_requests: u64,
}

/// Label every finding; move FALSE_ALARM ones to `report.pruned`. Identical
/// prompts are asked once and share the tally.
pub fn prune(report: &mut ScanReport, sources: &FunctionSources, client: &dyn ChatClient, opts: &PruneOptions) -> PruneStats {
    let requests: Vec<PruneRequest> =
        report.findings.iter().map(|f| build_prompt(f, sources, &opts.model, opts.max_prompt_chars)).collect();
    let mut unique: Vec<&str> = Vec::new();
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for r in &requests {
        seen.entry(&r.prompt_text).or_insert_with(|| {
            unique.push(&r.prompt_text);
            unique.len() - 1
        });
    }

    let jobs: Vec<(usize, usize)> = (0..unique.len()).flat_map(|u| (0..opts.votes).map(move |v| (u, v))).collect();
    let counters = [AtomicU64::new(0), AtomicU64::new(0), AtomicU64::new(0), AtomicU64::new(0)];
    let ask = |&(u, _): &(usize, usize)| -> Vote {
        let req = ChatRequest {
            model: opts.model.clone(),
            system: SYSTEM_PROMPT.to_string(),
            prompt: unique[u].to_string(),
            temperature: 0.0,
        };
        counters[0].fetch_add(1, Ordering::Relaxed);
        match client.complete(&req) {
            Ok(resp) => {
                counters[1].fetch_add(resp.prompt_tokens, Ordering::Relaxed);
                counters[2].fetch_add(resp.completion_tokens, Ordering::Relaxed);
                parse_verdict(&resp.text)
            }
            Err(e) => {
                log::warn!("llm request failed: {e}");
                counters[3].fetch_add(1, Ordering::Relaxed);
                Vote::Unparseable
            }
        }
    };
    let answers: Vec<Vote> = match rayon::ThreadPoolBuilder::new().num_threads(opts.in_flight.max(1)).build() {
        Ok(pool) => pool.install(|| jobs.par_iter().map(ask).collect()),
        Err(_) => jobs.iter().map(ask).collect(),
    };
    let tallies: Vec<VoteTally> =
        answers.chunks(opts.votes.max(1)).map(|c| VoteTally::from_votes(c.to_vec())).collect();

    let findings = std::mem::take(&mut report.findings);
    let mut stats = PruneStats::default();
    for (mut f, r) in findings.into_iter().zip(&requests) {
        let tally = if opts.votes == 0 {
            VoteTally::from_votes(Vec::new())
        } else {
            tallies[seen[r.prompt_text.as_str()]].clone()
        };
        f.llm_label = Some(tally.label);
        f.llm_votes = Some(tally);
        if f.llm_label == Some(LlmLabel::FalseAlarm) {
            stats.pruned += 1;
            report.pruned.push(f);
        } else {
            report.findings.push(f);
        }
    }
    stats.requests = counters[0].load(Ordering::Relaxed);
    stats.prompt_tokens = counters[1].load(Ordering::Relaxed);
    stats.completion_tokens = counters[2].load(Ordering::Relaxed);
    stats.failed_requests = counters[3].load(Ordering::Relaxed);
    report.stats.pruned += stats.pruned;
    report.stats.llm_requests += stats.requests;
    report.stats.llm_prompt_tokens += stats.prompt_tokens;
    report.stats.llm_completion_tokens += stats.completion_tokens;
    report.stats.count_types(&report.findings);
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::{SinkInfo, SourceInfo};
    use crate::taint::{ChainStep, VulnType};
    use std::sync::Mutex;

    fn finding(funcs: &[&str]) -> Finding {
        Finding {
            id: "f1".into(),
            vuln: VulnType::Pat,
            file: "controller/commands.lua".into(),
            function: funcs.last().unwrap().to_string(),
            sink: SinkInfo { name: "os.remove".into(), line: 5, col: 5, arg: 1 },
            source: SourceInfo { name: "luci.http.formvalue".into(), file: "controller/commands.lua".into(), line: 3, col: 18 },
            chain: funcs
                .iter()
                .enumerate()
                .map(|(i, f)| ChainStep {
                    file: "controller/commands.lua".into(),
                    line: i as u32 + 1,
                    col: 1,
                    excerpt: format!("step {i}"),
                    function: f.to_string(),
                })
                .collect(),
            call_path: funcs.iter().map(|s| s.to_string()).collect(),
            tainted_attrs: vec![],
            web_reachable: true,
            sanitized: false,
            duplicates: 1,
            llm_label: None,
            llm_votes: None,
        }
    }

    #[test]
    fn verdicts() {
        assert_eq!(parse_verdict("TRUE_ALARM, the parameter flows unsanitized"), Vote::TrueAlarm);
        assert_eq!(parse_verdict("false_alarm: input is shellquoted"), Vote::FalseAlarm);
        assert_eq!(parse_verdict("It depends."), Vote::Unparseable);
        assert_eq!(parse_verdict("TRUE_ALARM or FALSE_ALARM?"), Vote::Unparseable);
    }

    #[test]
    fn tallies() {
        use Vote::*;
        let t = VoteTally::from_votes(vec![TrueAlarm, TrueAlarm, FalseAlarm, TrueAlarm, FalseAlarm]);
        assert_eq!(t.label, LlmLabel::TrueAlarm);
        assert!((t.confidence - 0.6).abs() < 1e-9);
        let t = VoteTally::from_votes(vec![TrueAlarm, FalseAlarm, Unparseable, Unparseable]);
        assert_eq!(t.label, LlmLabel::TrueAlarm);
        assert_eq!(VoteTally::from_votes(vec![FalseAlarm; 5]).label, LlmLabel::FalseAlarm);
        assert_eq!(VoteTally::from_votes(vec![Unparseable; 5]).label, LlmLabel::Unevaluated);
    }

    #[test]
    fn prompt_shape() {
        let mut src = FunctionSources::default();
        src.insert("action_del_script", "controller/commands.lua", "function action_del_script()\n  os.remove(name)\nend".into());
        let p = build_prompt(&finding(&["action_del_script"]), &src, "m", 10_000);
        assert_eq!(p.prompt_text.matches("```lua").count(), 1);
        assert!(p.prompt_text.contains("function action_del_script()"));
        assert!(p.prompt_text.contains("`os.remove`"));
        assert!(p.prompt_text.trim_end().ends_with(INSTRUCTION));
        assert!(!p.truncated);
        assert_eq!(p.temperature, 0.0);
    }

    #[test]
    fn long_chains_keep_endpoints() {
        let names: Vec<String> = (0..50).map(|i| format!("f{i}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut src = FunctionSources::default();
        for n in &names {
            src.insert(n, "controller/commands.lua", format!("function {n}()\n{}\nend", "  x = 1\n".repeat(40)));
        }
        let p = build_prompt(&finding(&refs), &src, "m", 4_000);
        assert!(p.truncated);
        assert!(p.prompt_text.contains("function f0()"));
        assert!(p.prompt_text.contains("function f49()"));
        assert!(!p.prompt_text.contains("function f25()"));
        assert!(p.prompt_text.contains("intermediate functions omitted"));
    }

    #[test]
    fn prune_moves_false_alarms_and_caches() {
        let calls = Mutex::new(0);
        let client = |_: &ChatRequest| {
            *calls.lock().unwrap() += 1;
            Ok(ChatResponse { text: "FALSE_ALARM".into(), prompt_tokens: 10, completion_tokens: 2 })
        };
        let mut report = ScanReport::new("r");
        for i in 0..3 {
            let mut f = finding(&["action_del_script"]);
            f.id = format!("f{i}");
            report.findings.push(f);
        }
        let stats = prune(&mut report, &FunctionSources::default(), &client, &PruneOptions::default());
        assert_eq!(*calls.lock().unwrap(), 5);
        assert_eq!(stats.requests, 5);
        assert!(report.findings.is_empty());
        assert_eq!(report.pruned.len(), 3);
        assert_eq!(report.stats.pruned, 3);
        assert_eq!(report.stats.llm_prompt_tokens, 50);
        assert_eq!(report.pruned[0].llm_votes.as_ref().unwrap().votes.len(), 5);
    }

    #[test]
    fn outage_is_unevaluated() {
        let client = |_: &ChatRequest| Err(LlmError::ServiceUnavailable("down".into()));
        let mut report = ScanReport::new("r");
        report.findings.push(finding(&["a"]));
        prune(&mut report, &FunctionSources::default(), &client, &PruneOptions::default());
        assert_eq!(report.findings.len(), 1);
        assert_eq!(report.findings[0].llm_label, Some(LlmLabel::Unevaluated));
    }
}
