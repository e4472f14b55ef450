//! The ⟨sources, sinks, sanitizers⟩ vocabulary.
//!
//! Names are qualified call names (`luci.http.formvalue`). A name starting
//! with `:` matches any method call with that method name (`:execute`).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfg::CallValue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum VulnType {
    Ci,
    Rce,
    Pat,
    Sqli,
}

impl VulnType {
    pub const ALL: [VulnType; 4] = [VulnType::Ci, VulnType::Rce, VulnType::Pat, VulnType::Sqli];

    pub fn as_str(self) -> &'static str {
        match self {
            VulnType::Ci => "CI",
            VulnType::Rce => "RCE",
            VulnType::Pat => "PAT",
            VulnType::Sqli => "SQLI",
        }
    }
}

impl fmt::Display for VulnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sink {
    pub name: String,
    /// 1-based positions of the arguments that must not carry taint.
    pub args: Vec<usize>,
    #[serde(rename = "type")]
    pub vuln: VulnType,
}

impl Sink {
    pub fn new(name: &str, args: &[usize], vuln: VulnType) -> Self {
        Sink { name: name.to_string(), args: args.to_vec(), vuln }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{path}{}: {message}", .line.map(|l| format!(":{l}")).unwrap_or_default())]
pub struct ConfigError {
    pub path: String,
    pub line: Option<usize>,
    pub message: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TriggerFile {
    #[serde(default)]
    sources: Vec<String>,
    #[serde(default)]
    sinks: Vec<Sink>,
    #[serde(default)]
    sanitizers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TriggerWords {
    pub sources: Vec<String>,
    pub sinks: Vec<Sink>,
    pub sanitizers: Vec<String>,
}

impl Default for TriggerWords {
    fn default() -> Self {
        TriggerWords {
            sources: vec!["luci.http.formvalue".into(), "os.getenv".into()],
            sinks: vec![
                Sink::new("os.execute", &[1], VulnType::Ci),
                Sink::new("io.popen", &[1], VulnType::Ci),
                Sink::new("luci.sys.call", &[1], VulnType::Ci),
                Sink::new("os.remove", &[1], VulnType::Pat),
            ],
            sanitizers: vec!["luci.util.shellquote".into()],
        }
    }
}

fn matches(pattern: &str, call: &CallValue) -> bool {
    match pattern.strip_prefix(':') {
        Some(m) => call.method.as_deref() == Some(m),
        None => call.name.as_deref() == Some(pattern),
    }
}

impl TriggerWords {
    /// Defaults merged with the JSON file at `path`. A sink listed in the file
    /// replaces the default sink of the same name.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.display().to_string(),
            line: None,
            message: e.to_string(),
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn from_json(text: &str, path: &str) -> Result<Self, ConfigError> {
        let file: TriggerFile = serde_json::from_str(text).map_err(|e| ConfigError {
            path: path.to_string(),
            line: Some(e.line()),
            message: e.to_string(),
        })?;
        let mut tw = TriggerWords::default();
        tw.merge(file);
        tw.validate().map_err(|message| ConfigError { path: path.to_string(), line: None, message })?;
        Ok(tw)
    }

    fn merge(&mut self, file: TriggerFile) {
        for s in file.sources {
            if !self.sources.contains(&s) {
                self.sources.push(s);
            }
        }
        for s in file.sanitizers {
            if !self.sanitizers.contains(&s) {
                self.sanitizers.push(s);
            }
        }
        for sink in file.sinks {
            match self.sinks.iter_mut().find(|s| s.name == sink.name) {
                Some(slot) => *slot = sink,
                None => self.sinks.push(sink),
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        let all = self
            .sources
            .iter()
            .map(|s| (s.as_str(), "source"))
            .chain(self.sinks.iter().map(|s| (s.name.as_str(), "sink")))
            .chain(self.sanitizers.iter().map(|s| (s.as_str(), "sanitizer")));
        for (name, role) in all {
            if name.is_empty() || name == ":" {
                return Err(format!("empty {role} name"));
            }
            if let Some(prev) = seen.insert(name, role) {
                return Err(format!("{name} is listed as both {prev} and {role}"));
            }
        }
        for s in &self.sinks {
            if s.args.is_empty() {
                return Err(format!("sink {} declares no argument positions", s.name));
            }
            if s.args.contains(&0) {
                return Err(format!("sink {}: argument positions are 1-based", s.name));
            }
        }
        Ok(())
    }

    pub fn sink_for(&self, call: &CallValue) -> Option<&Sink> {
        self.sinks.iter().find(|s| matches(&s.name, call))
    }

    pub fn source_for(&self, call: &CallValue) -> Option<&str> {
        self.sources.iter().find(|s| matches(s, call)).map(String::as_str)
    }

    pub fn is_sanitizer(&self, call: &CallValue) -> bool {
        self.sanitizers.iter().any(|s| matches(s, call))
    }

    pub fn classify(&self, sink_name: &str) -> Option<VulnType> {
        self.sinks.iter().find(|s| s.name == sink_name).map(|s| s.vuln)
    }

    /// Every plain (non-method) name; calls to these are never inlined.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.sources
            .iter()
            .map(String::as_str)
            .chain(self.sinks.iter().map(|s| s.name.as_str()))
            .chain(self.sanitizers.iter().map(String::as_str))
            .filter(|n| !n.starts_with(':'))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::ast::Span;

    fn call(name: &str) -> CallValue {
        CallValue {
            name: Some(name.into()),
            method: name.rsplit_once('.').map(|(_, m)| m.to_string()),
            receiver: None,
            args: vec![],
            arg_spans: vec![],
            span: Span::default(),
        }
    }

    #[test]
    fn defaults() {
        let tw = TriggerWords::default();
        assert_eq!(tw.classify("io.popen"), Some(VulnType::Ci));
        assert_eq!(tw.classify("os.remove"), Some(VulnType::Pat));
        assert_eq!(tw.classify("nope"), None);
        assert!(tw.is_sanitizer(&call("luci.util.shellquote")));
        assert_eq!(tw.source_for(&call("os.getenv")), Some("os.getenv"));
        assert!(tw.validate().is_ok());
    }

    #[test]
    fn file_is_merged_over_defaults() {
        let tw = TriggerWords::from_json(
            r#"{"sinks": [{"name": "luci.util.exec", "args": [1], "type": "CI"},
                          {"name": ":execute", "args": [1], "type": "SQLI"}]}"#,
            "tw.json",
        )
        .unwrap();
        let names: Vec<&str> = tw.sinks.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["os.execute", "io.popen", "luci.sys.call", "os.remove", "luci.util.exec", ":execute"]);
        assert_eq!(tw.sink_for(&call("conn.execute")).unwrap().vuln, VulnType::Sqli);
        assert!(!tw.names().any(|n| n == ":execute"));
    }

    #[test]
    fn overlapping_roles_are_rejected() {
        let err = TriggerWords::from_json(r#"{"sanitizers": ["os.execute"]}"#, "tw.json").unwrap_err();
        assert!(err.message.contains("both sink and sanitizer"), "{err}");
    }

    #[test]
    fn parse_errors_carry_lines() {
        let err = TriggerWords::from_json("{\n  \"sinks\": [\n    {\"name\": 3}\n  ]\n}", "tw.json").unwrap_err();
        assert_eq!(err.line, Some(3));
        let err = TriggerWords::from_json(r#"{"sinks": [{"name": "x", "args": [], "type": "CI"}]}"#, "t").unwrap_err();
        assert!(err.message.contains("no argument positions"));
        assert!(TriggerWords::from_json(r#"{"bogus": 1}"#, "t").is_err());
    }

    #[test]
    fn missing_file() {
        let err = TriggerWords::load(Path::new("/nonexistent/tw.json")).unwrap_err();
        assert_eq!(err.line, None);
    }
}
