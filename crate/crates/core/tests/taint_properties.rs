mod common;

use std::path::Path;

use proptest::prelude::*;

use luciscan_core::report::ScanReport;
use luciscan_core::scan::{scan, ScanConfig};
use luciscan_core::selftest::corpus_trigger_words;
use luciscan_core::taint::DropReason;

fn write_controller(dir: &Path, body: &str) {
    let ctl = dir.join("usr/lib/lua/luci/controller");
    std::fs::create_dir_all(&ctl).unwrap();
    let text = format!("function index()\n\tentry({{\"t\"}}, call(\"go\"))\nend\n\nfunction go()\n{body}end\n");
    std::fs::write(ctl.join("t.lua"), text).unwrap();
}

fn scan_body(body: &str) -> ScanReport {
    let dir = tempfile::tempdir().unwrap();
    write_controller(dir.path(), body);
    scan(&ScanConfig::new(dir.path())).unwrap().report
}

#[test]
fn chains_run_from_source_to_sink() {
    let mut c = ScanConfig::new(common::corpus());
    c.trigger_words = corpus_trigger_words(&common::corpus()).unwrap();
    c.framework_rules = false;
    let report = scan(&c).unwrap().report;
    assert!(!report.findings.is_empty());
    for f in &report.findings {
        let first = f.chain.first().expect("empty chain");
        let last = f.chain.last().unwrap();
        assert_eq!((first.file.as_str(), first.line), (f.source.file.as_str(), f.source.line), "{}", f.id);
        assert_eq!((last.file.as_str(), last.line), (f.file.as_str(), f.sink.line), "{}", f.id);
        let is_source = c.trigger_words.sources.contains(&f.source.name) || f.source.name.ends_with(')');
        assert!(is_source, "{} starts at {}", f.id, f.source.name);
        assert_eq!(f.call_path.first(), f.chain.first().map(|s| &s.function));
    }
}

#[test]
fn sanitizer_on_unrelated_identity_keeps_finding() {
    let base = "\tlocal v = luci.http.formvalue(\"a\")\n";
    let sink = "\tos.execute(\"ls \" .. v)\n";
    assert_eq!(scan_body(&format!("{base}{sink}")).findings.len(), 1);
    let unrelated = "\tlocal w = luci.util.shellquote(luci.http.formvalue(\"b\"))\n";
    assert_eq!(scan_body(&format!("{base}{unrelated}{sink}")).findings.len(), 1);
    let on_chain = "\tv = luci.util.shellquote(v)\n";
    assert_eq!(scan_body(&format!("{base}{on_chain}{sink}")).findings.len(), 0);
}

#[test]
fn library_getenv_is_dropped_as_not_web_reachable() {
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path().join("usr/lib/lua/luci/tools");
    std::fs::create_dir_all(&lib).unwrap();
    std::fs::write(lib.join("env.lua"), "function f()\n\tos.execute(os.getenv(\"X\"))\nend\n").unwrap();
    let out = scan(&ScanConfig::new(dir.path())).unwrap();
    assert!(out.report.findings.is_empty());
    assert_eq!(out.dropped.len(), 1);
    assert_eq!(out.dropped[0].1, DropReason::NotWebReachable);
}

#[test]
fn literal_only_parameter_is_dropped_as_constant() {
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path().join("usr/lib/lua/luci/model");
    std::fs::create_dir_all(&lib).unwrap();
    std::fs::write(lib.join("m.lua"), "function run(c)\n\tos.execute(c)\nend\nfunction boot()\n\trun(\"true\")\nend\n")
        .unwrap();
    let out = scan(&ScanConfig::new(dir.path())).unwrap();
    assert!(out.report.findings.is_empty());
    assert_eq!(out.dropped.iter().map(|d| d.1).collect::<Vec<_>>(), [DropReason::ConstantParameter]);
}

const FIELDS: [&str; 4] = ["name", "mode", "dev", "path"];

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    /// One tainted and one clean field; only the tainted one is flagged.
    #[test]
    fn only_the_tainted_field_is_flagged(t in 0usize..4, d in 1usize..4, use_tainted: bool, ctor: bool) {
        let (tf, cf) = (FIELDS[t], FIELDS[(t + d) % 4]);
        let setup = if ctor {
            format!("\tlocal o = {{ {tf} = luci.http.formvalue(\"q\"), {cf} = \"fixed\" }}\n")
        } else {
            format!("\tlocal o = {{}}\n\to.{tf} = luci.http.formvalue(\"q\")\n\to.{cf} = \"fixed\"\n")
        };
        let used = if use_tainted { tf } else { cf };
        let r = scan_body(&format!("{setup}\tos.execute(\"x \" .. o.{used})\n"));
        prop_assert_eq!(r.findings.len(), usize::from(use_tainted));
        if use_tainted {
            let attr = format!("o.{tf}");
            prop_assert!(r.findings[0].tainted_attrs.contains(&attr));
        }
    }
}
