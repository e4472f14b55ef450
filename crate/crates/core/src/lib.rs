//! Static taint analysis for Lua web-configuration code (LuCI) found in
//! extracted IoT firmware trees.

pub mod frontend;
pub mod cfg;
pub mod dataflow;
pub mod llm;
pub mod report;
pub mod scan;
pub mod selftest;
pub mod taint;
