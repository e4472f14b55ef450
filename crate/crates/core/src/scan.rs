//! The whole pipeline: discover, parse, lower, index, inline, analyze,
//! filter, report.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use crate::cfg::{
    attach_dispatched, build_cfgs, expand, extract_dispatch_entries, Cfg, CfgKind, Diagnostic, DispatchEntry,
    FunctionDict, InlineOptions,
};
use crate::dataflow::analyze;
use crate::frontend::{collect_files, FileFilter, FixupTable, FrontendError, SourceFile};
use crate::llm::FunctionSources;
use crate::report::{dedup, Finding, ParseFailure, ScanReport, Stats, Timings};
use crate::taint::{apply_framework_rules, trace_flows, CallSiteIndex, DropReason, SourceKind, TaintFlow, TriggerWords, Verdict};

#[derive(Debug, Error)]
pub enum ScanError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub root: PathBuf,
    pub filter: FileFilter,
    pub trigger_words: TriggerWords,
    pub fixups: FixupTable,
    pub framework_rules: bool,
    pub inline: InlineOptions,
    /// Name-keyed function dictionary; off keeps every definition instance.
    pub dict_approx: bool,
    pub workers: usize,
    pub timings: bool,
}

impl ScanConfig {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ScanConfig {
            root: root.into(),
            filter: FileFilter::default(),
            trigger_words: TriggerWords::default(),
            fixups: FixupTable::default(),
            framework_rules: true,
            inline: InlineOptions::default(),
            dict_approx: true,
            workers: 1,
            timings: false,
        }
    }

    pub fn validate(&self) -> Result<(), ScanError> {
        if self.workers == 0 {
            return Err(ScanError::Config("worker count must be at least 1".into()));
        }
        if self.inline.max_nodes == 0 {
            return Err(ScanError::Config("inline node budget must be positive".into()));
        }
        self.trigger_words.validate().map_err(ScanError::Config)
    }
}

/// Everything a scan produced; the report plus material for tests and the
/// pruner.
#[derive(Debug, Clone)]
pub struct ScanOutput {
    pub report: ScanReport,
    /// Kept, unsanitized flows (one per sink site, argument and source site).
    pub flows: Vec<TaintFlow>,
    pub dropped: Vec<(TaintFlow, DropReason)>,
    pub diagnostics: Vec<Diagnostic>,
    pub entries: Vec<DispatchEntry>,
    pub sources: FunctionSources,
}

struct Parsed {
    file: SourceFile,
    cfgs: Vec<Cfg>,
    entries: Vec<DispatchEntry>,
    diagnostics: Vec<Diagnostic>,
    failure: Option<ParseFailure>,
}

fn load(root: &Path, rel: &str, fixups: &FixupTable) -> Parsed {
    let raw = match std::fs::read(root.join(rel)) {
        Ok(b) => b,
        Err(e) => {
            return Parsed {
                file: SourceFile::new(rel, Vec::new(), fixups),
                cfgs: Vec::new(),
                entries: Vec::new(),
                diagnostics: Vec::new(),
                failure: Some(ParseFailure { path: rel.to_string(), line: 0, col: 0, message: e.to_string() }),
            }
        }
    };
    let file = SourceFile::new(rel, raw, fixups);
    match file.parse() {
        Ok(chunk) => {
            let lowered = build_cfgs(&chunk, &file.sanitized_text);
            let (entries, mut diagnostics) = extract_dispatch_entries(&chunk);
            diagnostics.extend(lowered.diagnostics);
            Parsed { file, cfgs: lowered.cfgs, entries, diagnostics, failure: None }
        }
        Err(e) => {
            log::warn!("skipping {e}");
            let failure = ParseFailure { path: e.path, line: e.line, col: e.col, message: e.message };
            Parsed { file, cfgs: Vec::new(), entries: Vec::new(), diagnostics: Vec::new(), failure: Some(failure) }
        }
    }
}

struct RootResult {
    flows: Vec<TaintFlow>,
    diagnostics: Vec<Diagnostic>,
    nodes: usize,
    sites: u32,
}

fn analyze_root(root: &Cfg, cfgs: &[Cfg], dict: &FunctionDict, config: &ScanConfig) -> RootResult {
    let expanded = expand(root, cfgs, dict, &config.inline);
    let mut diagnostics = expanded.diagnostics;
    let nodes = expanded.cfg.nodes.len();
    let flows = match analyze(&expanded.cfg) {
        Ok(ct) => trace_flows(&expanded.cfg, &ct, &config.trigger_words),
        Err(e) => {
            diagnostics.push(Diagnostic {
                kind: crate::cfg::DiagnosticKind::Lowering,
                file: root.file.clone(),
                line: root.span.start.line,
                message: e.to_string(),
            });
            Vec::new()
        }
    };
    RootResult { flows, diagnostics, nodes, sites: expanded.sites }
}

/// Identity of a flow across roots: sink site, argument, source site.
type FlowKey = (String, usize, String, usize, String, usize, String);

fn flow_key(f: &TaintFlow) -> FlowKey {
    let source = match &f.source.kind {
        SourceKind::Call { name } => (f.source.file.clone(), f.source.offset, name.clone()),
        SourceKind::Param { function, param, .. } => (f.root_file.clone(), usize::MAX, format!("{function}({param})")),
    };
    (f.sink.file.clone(), f.sink.offset, f.sink.name.clone(), f.sink.arg, source.0, source.1, source.2)
}

fn serde_name<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

pub fn scan(config: &ScanConfig) -> Result<ScanOutput, ScanError> {
    config.validate()?;
    let started = Instant::now();
    let discovered = collect_files(&config.root, &config.filter)?;
    for w in &discovered.warnings {
        log::warn!("{w}");
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| ScanError::Config(format!("thread pool: {e}")))?;

    let parsed: Vec<Parsed> =
        pool.install(|| discovered.files.par_iter().map(|f| load(&config.root, f, &config.fixups)).collect());

    // serial merge in sorted path order, so last-definition-wins is stable
    let mut cfgs: Vec<Cfg> = Vec::new();
    let mut entries: Vec<DispatchEntry> = Vec::new();
    let mut diagnostics: Vec<Diagnostic> = Vec::new();
    let mut failures: Vec<ParseFailure> = discovered
        .warnings
        .iter()
        .map(|w| ParseFailure { path: String::new(), line: 0, col: 0, message: w.clone() })
        .collect();
    let mut sources = FunctionSources::default();
    for p in parsed {
        if let Some(f) = p.failure {
            failures.push(f);
        }
        for c in &p.cfgs {
            let text = match c.kind {
                CfgKind::Chunk => String::from_utf8_lossy(&p.file.sanitized_text).into_owned(),
                CfgKind::Function => p.file.excerpt(c.span),
            };
            sources.insert(&c.name, &c.file, text);
        }
        cfgs.extend(p.cfgs);
        entries.extend(p.entries);
        diagnostics.extend(p.diagnostics);
    }
    let mut dict = FunctionDict::build(&cfgs, !config.dict_approx);
    for name in config.trigger_words.names() {
        dict.remove(name);
    }
    diagnostics.extend(attach_dispatched(&mut cfgs, &entries, &dict));
    let calls = CallSiteIndex::build(&cfgs);

    let results: Vec<RootResult> =
        pool.install(|| cfgs.par_iter().map(|root| analyze_root(root, &cfgs, &dict, config)).collect());

    let mut stats = Stats { roots: cfgs.len(), ..Stats::default() };
    let mut unsanitized: BTreeMap<FlowKey, Vec<TaintFlow>> = BTreeMap::new();
    let mut sanitized: HashMap<FlowKey, ()> = HashMap::new();
    for r in results {
        stats.expanded_nodes += r.nodes as u64;
        stats.peak_nodes = stats.peak_nodes.max(r.nodes);
        stats.inlined_sites += u64::from(r.sites);
        diagnostics.extend(r.diagnostics);
        for f in r.flows {
            if f.sanitized {
                sanitized.insert(flow_key(&f), ());
            } else {
                unsanitized.entry(flow_key(&f)).or_default().push(f);
            }
        }
    }
    stats.sanitized_flows = sanitized.keys().filter(|k| !unsanitized.contains_key(*k)).count();

    let mut flows = Vec::new();
    let mut dropped = Vec::new();
    for (_, group) in unsanitized {
        let verdicts: Vec<Verdict> = group
            .iter()
            .map(|f| if config.framework_rules { apply_framework_rules(f, &calls) } else { Verdict::Keep })
            .collect();
        let best = |keep: bool| {
            group
                .iter()
                .zip(&verdicts)
                .filter(|(_, v)| (**v == Verdict::Keep) == keep)
                .min_by_key(|(f, _)| f.chain.len())
                .map(|(f, v)| (f.clone(), *v))
        };
        match best(true).or_else(|| best(false)) {
            Some((f, Verdict::Keep)) => flows.push(f),
            Some((f, Verdict::Drop(reason))) => {
                *stats.framework_dropped.entry(serde_name(&reason)).or_default() += 1;
                dropped.push((f, reason));
            }
            None => {}
        }
    }

    diagnostics.sort();
    diagnostics.dedup();
    for d in &diagnostics {
        *stats.diagnostics.entry(serde_name(&d.kind)).or_default() += 1;
    }
    let findings: Vec<Finding> = dedup(flows.iter().map(Finding::from_flow).collect());
    stats.count_types(&findings);
    if config.timings {
        stats.timings = Some(Timings { wall_ms: started.elapsed().as_millis() as u64 });
    }
    let scan_root = config
        .root
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| config.root.display().to_string());
    let report = ScanReport {
        file_count: discovered.files.len(),
        parse_failures: failures,
        findings,
        stats,
        ..ScanReport::new(&scan_root)
    };
    Ok(ScanOutput { report, flows, dropped, diagnostics, entries, sources })
}
