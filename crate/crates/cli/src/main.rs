//! `luciscan`: taint analysis for LuCI web interfaces in extracted firmware.
//!
//! Exit status: 0 clean, 1 findings (or selftest failures), 2 fatal error.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use luciscan_core::cfg::{build_cfgs, dot::to_dot, InlineOptions};
use luciscan_core::dataflow::analyze;
use luciscan_core::frontend::{FileFilter, FixupTable, SourceFile};
use luciscan_core::report::Format;
use luciscan_core::scan::{scan, ScanConfig};
use luciscan_core::selftest;
use luciscan_core::taint::TriggerWords;

use config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "luciscan", version, about = "Static taint analysis for Lua/LuCI firmware web interfaces")]
struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scan an extracted firmware tree.
    Scan(ScanArgs),
    /// Run the annotated fixture corpus and print recall per type.
    Selftest(SelftestArgs),
    /// Print control-flow graphs of a Lua file in DOT.
    DumpCfg(DumpArgs),
    /// Print the reaching-definitions table of a Lua file.
    DumpReaching(DumpArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Text,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Text => Format::Text,
        }
    }
}

#[derive(Debug, Args)]
struct ScanArgs {
    /// Root of the extracted filesystem.
    root: PathBuf,
    /// TOML file with defaults for the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Restrict discovery to usr/lib/lua/luci when present.
    #[arg(long)]
    luci_only: bool,
    /// Glob of files to include (repeatable; default **/*.lua).
    #[arg(long)]
    include: Vec<String>,
    #[arg(long)]
    exclude: Vec<String>,
    /// JSON file of extra sources, sinks and sanitizers.
    #[arg(long)]
    trigger_words: Option<PathBuf>,
    /// Extra prescan rules, one `FROM<TAB>TO` per line.
    #[arg(long)]
    fixups: Option<PathBuf>,
    #[arg(long)]
    no_framework_rules: bool,
    #[arg(long)]
    inline_depth: Option<u32>,
    /// Key the function dictionary by definition site instead of name.
    #[arg(long)]
    no_dict_approx: bool,
    /// Label findings with an LLM; the key is read from LUCISCAN_API_KEY or OPENAI_API_KEY.
    #[arg(long)]
    llm_prune: bool,
    #[arg(long)]
    llm_endpoint: Option<String>,
    #[arg(long)]
    llm_model: Option<String>,
    #[arg(long)]
    llm_votes: Option<usize>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Write the report here instead of standard output.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Record wall time in the report (makes output run-dependent).
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    /// Directory of fixtures, each with an expect.json sidecar.
    corpus: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Args)]
struct DumpArgs {
    /// A Lua source file.
    path: PathBuf,
    /// Only this function (qualified name, or `<chunk>`).
    #[arg(long)]
    function: Option<String>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
struct LlmSettings {
    endpoint: String,
    model: String,
    votes: usize,
}

#[derive(Debug)]
struct Resolved {
    scan: ScanConfig,
    llm: Option<LlmSettings>,
    format: Format,
    output: Option<PathBuf>,
}

fn resolve(args: &ScanArgs) -> anyhow::Result<Resolved> {
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let mut scan = ScanConfig::new(&args.root);
    let include = if args.include.is_empty() { file.include.clone() } else { Some(args.include.clone()) };
    let exclude = if args.exclude.is_empty() { file.exclude.clone() } else { Some(args.exclude.clone()) };
    scan.filter = FileFilter {
        include: include.unwrap_or_else(|| FileFilter::default().include),
        exclude: exclude.unwrap_or_default(),
        luci_only: args.luci_only || file.luci_only.unwrap_or(false),
    };
    if let Some(p) = args.trigger_words.as_ref().or(file.trigger_words.as_ref()) {
        scan.trigger_words = TriggerWords::load(p)?;
    }
    if let Some(p) = args.fixups.as_ref().or(file.fixups.as_ref()) {
        scan.fixups = FixupTable::load(p)?;
    }
    scan.framework_rules = !args.no_framework_rules && file.framework_rules.unwrap_or(true);
    scan.dict_approx = !args.no_dict_approx && file.dict_approx.unwrap_or(true);
    scan.inline = InlineOptions {
        max_depth: args.inline_depth.or(file.inline_depth).unwrap_or(InlineOptions::default().max_depth),
        ..InlineOptions::default()
    };
    scan.workers = args.workers.or(file.workers).unwrap_or(1);
    scan.timings = args.timings || file.timings.unwrap_or(false);
    scan.validate()?;

    let prune = args.llm_prune || file.llm_prune.unwrap_or(false);
    let endpoint = args.llm_endpoint.clone().or(file.llm_endpoint);
    let model = args.llm_model.clone().or(file.llm_model);
    let votes = args.llm_votes.or(file.llm_votes);
    if !prune && (endpoint.is_some() || model.is_some() || votes.is_some()) {
        bail!("--llm-endpoint, --llm-model and --llm-votes need --llm-prune");
    }
    if votes == Some(0) {
        bail!("--llm-votes must be at least 1");
    }
    let llm = prune.then(|| LlmSettings {
        endpoint: endpoint.unwrap_or_else(|| default_endpoint().to_string()),
        model: model.unwrap_or_else(|| default_model().to_string()),
        votes: votes.unwrap_or(5),
    });
    Ok(Resolved {
        scan,
        llm,
        format: args.format.map(Format::from).or(file.format).unwrap_or_default(),
        output: args.output.clone().or(file.output),
    })
}

#[cfg(feature = "llm")]
fn default_endpoint() -> &'static str {
    luciscan_core::llm::DEFAULT_ENDPOINT
}

#[cfg(feature = "llm")]
fn default_model() -> &'static str {
    luciscan_core::llm::DEFAULT_MODEL
}

#[cfg(not(feature = "llm"))]
fn default_endpoint() -> &'static str {
    ""
}

#[cfg(not(feature = "llm"))]
fn default_model() -> &'static str {
    ""
}

fn write_out(output: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match output {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn run_scan(args: &ScanArgs) -> anyhow::Result<u8> {
    let resolved = resolve(args)?;
    #[allow(unused_mut)]
    let mut out = scan(&resolved.scan)?;
    if let Some(llm) = &resolved.llm {
        prune(&mut out, llm)?;
    }
    write_out(resolved.output.as_deref(), &out.report.emit(resolved.format))?;
    Ok(out.report.exit_code() as u8)
}

#[cfg(feature = "llm")]
fn prune(out: &mut luciscan_core::scan::ScanOutput, llm: &LlmSettings) -> anyhow::Result<()> {
    use luciscan_core::llm::{self, HttpClient, PruneOptions};
    let client = HttpClient::from_env(&llm.endpoint)
        .with_context(|| format!("set {} to use --llm-prune", llm::API_KEY_VARS.join(" or ")))?;
    let opts = PruneOptions { model: llm.model.clone(), votes: llm.votes, ..PruneOptions::default() };
    let stats = llm::prune(&mut out.report, &out.sources, &client, &opts);
    if stats.failed_requests > 0 {
        log::warn!("{} LLM requests failed; affected findings stay unevaluated", stats.failed_requests);
    }
    Ok(())
}

#[cfg(not(feature = "llm"))]
fn prune(_: &mut luciscan_core::scan::ScanOutput, _: &LlmSettings) -> anyhow::Result<()> {
    bail!("this build has no LLM support")
}

fn run_selftest(args: &SelftestArgs) -> anyhow::Result<u8> {
    let mut base = ScanConfig::new(&args.corpus);
    base.trigger_words = selftest::corpus_trigger_words(&args.corpus)?;
    base.workers = args.workers;
    base.validate()?;
    let summary = selftest::run(&args.corpus, &base)?;
    print!("{}", summary.render());
    Ok(if summary.passed() { 0 } else { 1 })
}

fn run_dump(args: &DumpArgs, reaching: bool) -> anyhow::Result<u8> {
    let raw = std::fs::read(&args.path).with_context(|| format!("cannot read {}", args.path.display()))?;
    let file = SourceFile::new(args.path.display().to_string(), raw, &FixupTable::default());
    let chunk = file.parse()?;
    let cfgs = build_cfgs(&chunk, &file.sanitized_text).cfgs;
    let mut text = String::new();
    let mut any = false;
    for cfg in cfgs.iter().filter(|c| args.function.as_deref().is_none_or(|f| c.name == f)) {
        any = true;
        if reaching {
            text.push_str(&analyze(cfg)?.to_text(cfg));
        } else {
            text.push_str(&to_dot(cfg));
        }
    }
    if !any {
        bail!("no function named {:?} in {}", args.function.as_deref().unwrap_or(""), args.path.display());
    }
    write_out(args.output.as_deref(), text.as_bytes())?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Scan(a) => run_scan(a),
        Command::Selftest(a) => run_selftest(a),
        Command::DumpCfg(a) => run_dump(a, false),
        Command::DumpReaching(a) => run_dump(a, true),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(extra: &[&str]) -> ScanArgs {
        let mut argv = vec!["luciscan", "scan", "root"];
        argv.extend_from_slice(extra);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Scan(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn llm_options_need_prune() {
        assert!(resolve(&args(&["--llm-model", "x"])).is_err());
        assert!(resolve(&args(&["--llm-prune", "--llm-votes", "0"])).is_err());
        let r = resolve(&args(&["--llm-prune", "--llm-votes", "3"])).unwrap();
        assert_eq!(r.llm.unwrap().votes, 3);
    }

    #[test]
    fn zero_workers_rejected() {
        assert!(resolve(&args(&["--workers", "0"])).is_err());
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "workers = 3\nframework-rules = false\nformat = \"text\"\n").unwrap();
        let p = p.to_string_lossy().into_owned();
        let r = resolve(&args(&["--config", &p, "--workers", "2"])).unwrap();
        assert_eq!(r.scan.workers, 2);
        assert!(!r.scan.framework_rules);
        assert_eq!(r.format, Format::Text);
    }

    #[test]
    fn no_api_key_flag() {
        assert!(Cli::try_parse_from(["luciscan", "scan", "r", "--api-key", "k"]).is_err());
    }
}
