//! LuCI-aware filtering: keep a flow only when its source can come from an
//! HTTP request.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{SourceKind, TaintFlow};
use crate::cfg::dispatch::is_controller_path;
use crate::cfg::Cfg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Every call site passes a literal for the tainted parameter.
    ConstantParameter,
    NotWebReachable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Drop(DropReason),
}

/// For each callee name, the literal-ness of every argument at every call site.
#[derive(Debug, Clone, Default)]
pub struct CallSiteIndex {
    sites: HashMap<String, Vec<Vec<bool>>>,
}

impl CallSiteIndex {
    pub fn build<'a>(cfgs: impl IntoIterator<Item = &'a Cfg>) -> Self {
        let mut sites: HashMap<String, Vec<Vec<bool>>> = HashMap::new();
        for cfg in cfgs {
            for n in &cfg.nodes {
                let Some(call) = n.top_call() else { continue };
                let Some(name) = &call.name else { continue };
                let literal = call.effective_args().iter().map(|a| a.is_literal()).collect();
                sites.entry(name.clone()).or_default().push(literal);
            }
        }
        CallSiteIndex { sites }
    }

    /// `Some(true)` when `func` has call sites and all of them pass a literal
    /// (or nothing) at parameter `index`.
    pub fn all_literal(&self, func: &str, index: usize) -> Option<bool> {
        let sites = self.sites.get(func)?;
        Some(sites.iter().all(|s| s.get(index).copied().unwrap_or(true)))
    }
}

pub fn apply_framework_rules(flow: &TaintFlow, calls: &CallSiteIndex) -> Verdict {
    match &flow.source.kind {
        SourceKind::Call { name } if name.starts_with("luci.http.") => Verdict::Keep,
        SourceKind::Call { .. } => {
            if flow.web_reachable || is_controller_path(&flow.root_file) {
                Verdict::Keep
            } else {
                Verdict::Drop(DropReason::NotWebReachable)
            }
        }
        SourceKind::Param { function, index, .. } => {
            if flow.web_reachable {
                Verdict::Keep
            } else if calls.all_literal(function, *index) == Some(true) {
                Verdict::Drop(DropReason::ConstantParameter)
            } else {
                Verdict::Drop(DropReason::NotWebReachable)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::build_cfgs;
    use crate::frontend::parse_chunk;

    #[test]
    fn call_site_literals() {
        let src = "function f(a, b) end f(\"x\", y) f(\"z\") obj:m(1)";
        let chunk = parse_chunk(src.as_bytes(), "t.lua").unwrap();
        let cfgs = build_cfgs(&chunk, src.as_bytes()).cfgs;
        let idx = CallSiteIndex::build(&cfgs);
        assert_eq!(idx.all_literal("f", 0), Some(true));
        assert_eq!(idx.all_literal("f", 1), Some(false));
        assert_eq!(idx.all_literal("g", 0), None);
        // receiver first
        assert_eq!(idx.all_literal("obj.m", 0), Some(false));
        assert_eq!(idx.all_literal("obj.m", 1), Some(true));
    }
}
