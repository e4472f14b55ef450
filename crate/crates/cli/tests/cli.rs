#[cfg(feature = "llm")]
use std::io::{BufRead, BufReader, Read, Write};
#[cfg(feature = "llm")]
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_luciscan"));
    c.env_remove("LUCISCAN_API_KEY").env_remove("OPENAI_API_KEY").env("RUST_LOG", "error");
    c
}

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixtures() -> PathBuf {
    repo().join("crates/core/tests/fixtures")
}

fn run(c: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = c.output().unwrap();
    (status.code().unwrap(), String::from_utf8(stdout).unwrap(), String::from_utf8(stderr).unwrap())
}

#[test]
fn scan_listings_reports_findings_with_exit_1() {
    let (code, out, _) = run(bin().arg("scan").arg(fixtures().join("listings")));
    assert_eq!(code, 1);
    let v: Value = serde_json::from_str(&out).unwrap();
    let types: Vec<&str> = v["findings"].as_array().unwrap().iter().map(|f| f["type"].as_str().unwrap()).collect();
    assert_eq!(types, ["CI", "CI", "PAT"]);
    assert_eq!(v["scan_root"], "listings");
    assert!(v["stats"].get("timings").is_none());
}

#[test]
fn clean_tree_exits_0() {
    let (code, out, _) = run(bin().arg("scan").arg(fixtures().join("listings_sanitized")));
    assert_eq!(code, 0, "{out}");
}

#[test]
fn missing_root_exits_2() {
    let (code, _, err) = run(bin().args(["scan", "/definitely/not/here"]));
    assert_eq!(code, 2);
    assert!(err.contains("error:"), "{err}");
}

#[test]
fn text_format_and_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.txt");
    let (code, stdout, _) = run(bin()
        .arg("scan")
        .arg(fixtures().join("listings"))
        .args(["--format", "text", "--output"])
        .arg(&out));
    assert_eq!(code, 1);
    assert!(stdout.is_empty());
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.contains("add_br → check_section_available → tophy → get_device_byif"), "{text}");
}

#[test]
fn no_framework_rules_is_a_superset() {
    let scan = |extra: &[&str]| -> Vec<String> {
        let (_, out, _) = run(bin().arg("scan").arg(fixtures().join("listings")).args(extra));
        let v: Value = serde_json::from_str(&out).unwrap();
        v["findings"].as_array().unwrap().iter().map(|f| f["id"].as_str().unwrap().to_string()).collect()
    };
    let on = scan(&[]);
    let off = scan(&["--no-framework-rules"]);
    assert!(on.iter().all(|id| off.contains(id)));
    assert!(off.len() > on.len());
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("luciscan.toml");
    std::fs::write(&cfg, "format = \"text\"\ntimings = true\n").unwrap();
    let (code, out, _) = run(bin().arg("scan").arg(fixtures().join("listings")).arg("--config").arg(&cfg));
    assert_eq!(code, 1);
    assert!(out.starts_with("luciscan"), "{out}");
    std::fs::write(&cfg, "api-key = \"sk-nope\"\n").unwrap();
    let (code, _, err) = run(bin().arg("scan").arg(fixtures().join("listings")).arg("--config").arg(&cfg));
    assert_eq!(code, 2, "{err}");
}

#[test]
fn invalid_flag_combinations_exit_2() {
    let root = fixtures().join("listings");
    assert_eq!(run(bin().arg("scan").arg(&root).args(["--workers", "0"])).0, 2);
    assert_eq!(run(bin().arg("scan").arg(&root).args(["--llm-model", "m"])).0, 2);
    assert_eq!(run(bin().arg("scan").arg(&root).args(["--trigger-words", "/nope.json"])).0, 2);
    assert_eq!(run(bin().arg("scan").arg(&root).args(["--api-key", "k"])).0, 2);
}

#[test]
fn trigger_words_file_adds_a_sink() {
    let dir = tempfile::tempdir().unwrap();
    let ctl = dir.path().join("usr/lib/lua/luci/controller");
    std::fs::create_dir_all(&ctl).unwrap();
    std::fs::write(
        ctl.join("x.lua"),
        "function index()\n\tentry({\"x\"}, call(\"go\"))\nend\nfunction go()\n\tluci.util.exec(luci.http.formvalue(\"c\"))\nend\n",
    )
    .unwrap();
    assert_eq!(run(bin().arg("scan").arg(dir.path())).0, 0);
    let tw = dir.path().join("tw.json");
    std::fs::write(&tw, r#"{"sinks": [{"name": "luci.util.exec", "args": [1], "type": "CI"}]}"#).unwrap();
    let (code, out, _) = run(bin().arg("scan").arg(dir.path()).arg("--trigger-words").arg(&tw));
    assert_eq!(code, 1, "{out}");
}

#[test]
fn selftest_on_shipped_corpus() {
    let (code, out, _) = run(bin().arg("selftest").arg(repo().join("corpus")));
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("Recall Rate"));
    assert!(out.contains("100.00%"));
    assert!(out.contains(", 0 failed"));
}

#[test]
fn selftest_empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = run(bin().arg("selftest").arg(dir.path()));
    assert_eq!(code, 0);
    assert!(out.contains("0 fixtures, 0 failed"), "{out}");
}

#[test]
fn dump_subcommands() {
    let f = fixtures().join("field/usr/lib/lua/luci/controller/bean.lua");
    let (code, out, _) = run(bin().arg("dump-cfg").arg(&f));
    assert_eq!(code, 0);
    assert!(out.starts_with("digraph"), "{out}");
    let (code, out, _) = run(bin().arg("dump-reaching").arg(&f).args(["--function", "Bean.new"]));
    assert_eq!(code, 0);
    assert!(out.starts_with("# Bean.new"), "{out}");
    assert_eq!(run(bin().arg("dump-cfg").arg(&f).args(["--function", "nope"])).0, 2);
}

#[cfg(feature = "llm")]
#[test]
fn llm_prune_needs_env_credential() {
    let (code, _, err) = run(bin().arg("scan").arg(fixtures().join("field")).arg("--llm-prune"));
    assert_eq!(code, 2);
    assert!(err.contains("LUCISCAN_API_KEY"), "{err}");
}

#[cfg(feature = "llm")]
/// Answers every request with FALSE_ALARM and records the Authorization header.
fn false_alarm_server() -> (String, std::sync::mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let tx = tx.clone();
            std::thread::spawn(move || {
                let mut r = BufReader::new(stream.try_clone().unwrap());
                let mut w = stream;
                loop {
                    let mut line = String::new();
                    if r.read_line(&mut line).unwrap_or(0) == 0 {
                        return;
                    }
                    let mut len = 0;
                    loop {
                        let mut h = String::new();
                        r.read_line(&mut h).unwrap();
                        let h = h.trim_end().to_string();
                        if h.is_empty() {
                            break;
                        }
                        let lower = h.to_ascii_lowercase();
                        if let Some(v) = lower.strip_prefix("content-length:") {
                            len = v.trim().parse().unwrap();
                        }
                        if lower.starts_with("authorization:") {
                            let _ = tx.send(h[14..].trim().to_string());
                        }
                    }
                    let mut body = vec![0; len];
                    r.read_exact(&mut body).unwrap();
                    let reply = r#"{"choices":[{"message":{"content":"FALSE_ALARM: constant"}}],"usage":{"prompt_tokens":10,"completion_tokens":3}}"#;
                    let _ = write!(w, "HTTP/1.1 200 OK\r\nContent-Length: {}\r\n\r\n{reply}", reply.len());
                }
            });
        }
    });
    (url, rx)
}

#[cfg(feature = "llm")]
#[test]
fn llm_prune_end_to_end_with_mock() {
    let (url, auth) = false_alarm_server();
    let (code, out, err) = run(bin()
        .env("LUCISCAN_API_KEY", "sk-test")
        .arg("scan")
        .arg(fixtures().join("field"))
        .args(["--llm-prune", "--llm-votes", "3", "--llm-endpoint", &url]));
    assert_eq!(code, 0, "{err}");
    let v: Value = serde_json::from_str(&out).unwrap();
    assert!(v["findings"].as_array().unwrap().is_empty());
    let pruned = &v["pruned"][0];
    assert_eq!(pruned["llm_label"], "FALSE_ALARM");
    assert_eq!(pruned["llm_votes"]["votes"].as_array().unwrap().len(), 3);
    assert_eq!(v["stats"]["llm_requests"], 3);
    assert_eq!(v["stats"]["llm_completion_tokens"], 9);
    assert_eq!(auth.recv().unwrap(), "Bearer sk-test");
}
