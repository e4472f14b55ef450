//! Function dictionary keyed by qualified name.

use std::collections::BTreeMap;

use super::Cfg;

/// A definition site, pointing into the scan's list of Cfgs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct DefRef {
    pub index: usize,
    pub file: String,
    pub line: u32,
}

/// Maps qualified function names to their definitions.
///
/// In the default (approximate) mode a name holds one definition and a later
/// definition replaces the earlier one. In exact mode every instance is kept,
/// ordered by (file, line).
#[derive(Debug, Clone, Default)]
pub struct FunctionDict {
    exact: bool,
    by_name: BTreeMap<String, Vec<DefRef>>,
}

impl FunctionDict {
    pub fn new(exact: bool) -> Self {
        FunctionDict { exact, by_name: BTreeMap::new() }
    }

    /// Build from Cfgs in processing order; chunk Cfgs are skipped.
    pub fn build<'a>(cfgs: impl IntoIterator<Item = &'a Cfg>, exact: bool) -> Self {
        let mut dict = FunctionDict::new(exact);
        for (index, cfg) in cfgs.into_iter().enumerate() {
            if cfg.kind == super::CfgKind::Function {
                dict.insert(&cfg.name, DefRef { index, file: cfg.file.clone(), line: cfg.span.start.line });
            }
        }
        dict
    }

    pub fn insert(&mut self, name: &str, def: DefRef) {
        let slot = self.by_name.entry(name.to_string()).or_default();
        if self.exact {
            let at = slot.partition_point(|d| (&d.file, d.line) <= (&def.file, def.line));
            slot.insert(at, def);
        } else {
            slot.clear();
            slot.push(def);
        }
    }

    /// Forget a name, so calls to it stay opaque.
    pub fn remove(&mut self, name: &str) -> bool {
        self.by_name.remove(name).is_some()
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(String::as_str)
    }

    /// The single definition a name resolves to in approximate mode (the
    /// last one in exact mode).
    pub fn get(&self, name: &str) -> Option<&DefRef> {
        self.by_name.get(name).and_then(|v| v.last())
    }

    pub fn instances(&self, name: &str) -> &[DefRef] {
        self.by_name.get(name).map(Vec::as_slice).unwrap_or_default()
    }

    /// Definitions a call to `name` from `file` may reach.
    ///
    /// Approximate mode returns the one stored definition. Exact mode prefers
    /// the last definition in the calling file and otherwise returns every
    /// instance.
    pub fn resolve(&self, name: &str, file: &str) -> Vec<usize> {
        let defs = self.instances(name);
        if !self.exact {
            return defs.iter().map(|d| d.index).collect();
        }
        match defs.iter().rev().find(|d| d.file == file) {
            Some(d) => vec![d.index],
            None => defs.iter().map(|d| d.index).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::{CfgKind, Span};

    fn cfg(name: &str, file: &str, line: u32) -> Cfg {
        let mut span = Span::default();
        span.start.line = line;
        Cfg::new(name, file, CfgKind::Function, span)
    }

    #[test]
    fn later_definition_replaces_earlier() {
        let cfgs = [cfg("get_network", "a.lua", 3), cfg("get_network", "b.lua", 7)];
        let dict = FunctionDict::build(&cfgs, false);
        assert_eq!(dict.get("get_network").unwrap().file, "b.lua");
        assert_eq!(dict.resolve("get_network", "a.lua"), vec![1]);
    }

    #[test]
    fn empty_input() {
        let dict = FunctionDict::build(&[], false);
        assert!(dict.is_empty());
    }

    #[test]
    fn exact_mode_keeps_instances_and_prefers_same_file() {
        let cfgs = [cfg("f", "b.lua", 1), cfg("f", "a.lua", 2), cfg("g", "a.lua", 9)];
        let dict = FunctionDict::build(&cfgs, true);
        assert_eq!(dict.instances("f").len(), 2);
        assert_eq!(dict.resolve("f", "b.lua"), vec![0]);
        assert_eq!(dict.resolve("f", "c.lua"), vec![1, 0]);
        assert!(dict.resolve("h", "a.lua").is_empty());
    }

    #[test]
    fn chunks_are_not_registered() {
        let chunk = Cfg::new(crate::cfg::CHUNK_NAME, "a.lua", CfgKind::Chunk, Span::default());
        assert!(FunctionDict::build([&chunk], false).is_empty());
    }
}
