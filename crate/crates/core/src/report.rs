//! Run reports in a structured (JSON) and a human (tabular) rendering.
//!
//! The structured form carries no timings, so identical inputs give
//! byte-identical output. Its layout is described by `schema/report.schema.json`.

use std::fmt::Write as _;
use std::time::Duration;

use serde_json::{Map, Value};

use crate::serialize::{number, SerializeError};
use crate::wha::{CheckResult, VerificationReport};

pub const SCHEMA: &str = include_str!("../schema/report.schema.json");

/// A named group of checks with the time it took to produce them.
#[derive(Debug, Clone)]
pub struct Section {
    pub id: String,
    pub checks: Vec<CheckResult>,
    pub elapsed: Duration,
}

impl Section {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub input: Vec<(String, String)>,
    pub seed: Option<u64>,
    pub sections: Vec<Section>,
    pub results: Map<String, Value>,
}

impl Report {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            tool: "ty".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            input: Vec::new(),
            seed: None,
            sections: Vec::new(),
            results: Map::new(),
        }
    }

    pub fn echo(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.input.push((key.into(), value.into()));
    }

    pub fn section(&mut self, id: impl Into<String>, checks: impl IntoIterator<Item = CheckResult>, elapsed: Duration) {
        self.sections.push(Section {
            id: id.into(),
            checks: checks.into_iter().collect(),
            elapsed,
        });
    }

    pub fn verification(&mut self, id: impl Into<String>, rep: &VerificationReport, elapsed: Duration) {
        self.section(id, rep.checks.clone(), elapsed);
    }

    pub fn result(&mut self, key: impl Into<String>, value: Value) {
        self.results.insert(key.into(), value);
    }

    pub fn passed(&self) -> bool {
        self.sections.iter().all(Section::passed)
    }

    pub fn check_count(&self) -> usize {
        self.sections.iter().map(|s| s.checks.len()).sum()
    }

    pub fn to_value(&self) -> Result<Value, SerializeError> {
        let mut root = Map::new();
        root.insert("tool".into(), Value::from(self.tool.as_str()));
        root.insert("version".into(), Value::from(self.version.as_str()));
        root.insert("command".into(), Value::from(self.command.as_str()));
        let input: Map<String, Value> = self
            .input
            .iter()
            .map(|(k, v)| (k.clone(), Value::from(v.as_str())))
            .collect();
        root.insert("input".into(), Value::Object(input));
        root.insert("seed".into(), self.seed.map_or(Value::Null, Value::from));
        let mut sections = Vec::new();
        for s in &self.sections {
            let mut checks = Vec::new();
            for c in &s.checks {
                let mut m = Map::new();
                m.insert("id".into(), Value::from(c.id.as_str()));
                m.insert("status".into(), Value::from(if c.passed { "pass" } else { "fail" }));
                // a residual that could not be computed is written as null
                let r = if c.max_residual.is_finite() { number(c.max_residual)? } else { Value::Null };
                m.insert("max_residual".into(), r);
                m.insert("worst".into(), Value::from(c.worst.clone()));
                checks.push(Value::Object(m));
            }
            let mut m = Map::new();
            m.insert("id".into(), Value::from(s.id.as_str()));
            m.insert("status".into(), Value::from(if s.passed() { "pass" } else { "fail" }));
            m.insert("checks".into(), Value::Array(checks));
            sections.push(Value::Object(m));
        }
        root.insert("sections".into(), Value::Array(sections));
        root.insert("results".into(), Value::Object(self.results.clone()));
        root.insert("verdict".into(), Value::from(if self.passed() { "pass" } else { "fail" }));
        Ok(Value::Object(root))
    }

    /// Pretty-printed JSON followed by a newline.
    pub fn to_json(&self) -> Result<String, SerializeError> {
        let mut s = serde_json::to_string_pretty(&self.to_value()?).expect("values serialize");
        s.push('\n');
        Ok(s)
    }

    /// Tabular rendering with per-section timings.
    pub fn to_human(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {}", self.tool, self.version, self.command);
        for (k, v) in &self.input {
            let _ = writeln!(out, "  {k}: {v}");
        }
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "  seed: {seed}");
        }
        let width = self
            .sections
            .iter()
            .flat_map(|s| s.checks.iter().map(|c| c.id.len()))
            .max()
            .unwrap_or(0)
            .max(8);
        for s in &self.sections {
            let status = if s.passed() { "pass" } else { "FAIL" };
            let _ = writeln!(out, "\n[{status}] {} ({:.3} s)", s.id, s.elapsed.as_secs_f64());
            for c in &s.checks {
                let st = if c.passed { "ok" } else { "FAIL" };
                let _ = writeln!(out, "  {:<width$}  {:<4}  {:.3e}", c.id, st, c.max_residual);
            }
        }
        if !self.results.is_empty() {
            out.push('\n');
            for (k, v) in &self.results {
                let _ = writeln!(out, "{k}: {}", human_value(v));
            }
        }
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "\n{verdict}: {} checks in {} sections", self.check_count(), self.sections.len());
        out
    }
}

fn human_value(v: &Value) -> String {
    match v {
        Value::Array(a) if a.iter().all(|x| !x.is_object() && !x.is_array()) => {
            a.iter().map(human_value).collect::<Vec<_>>().join(", ")
        }
        Value::Array(a) => a.iter().map(|x| format!("\n  {}", human_value(x))).collect(),
        Value::Object(m) => m
            .iter()
            .map(|(k, x)| format!("{k}={}", human_value(x)))
            .collect::<Vec<_>>()
            .join(" "),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let mut r = Report::new("verify");
        r.echo("group", "2");
        r.section(
            "axioms",
            vec![CheckResult::residual("counit_left", 1.5e-17, vec![], 1e-9)],
            Duration::from_millis(12),
        );
        r.result("dim", Value::from(34));
        r
    }

    #[test]
    fn structured_output_has_no_timing() {
        let r = sample();
        let mut slower = r.clone();
        slower.sections[0].elapsed = Duration::from_secs(9);
        assert_eq!(r.to_json().unwrap(), slower.to_json().unwrap());
        assert!(r.to_json().unwrap().contains("1.5000000000000000e-17"));
    }

    #[test]
    fn verdict_follows_checks() {
        let mut r = sample();
        assert!(r.passed());
        r.section("bad", vec![CheckResult::flag("x", false, 0.0)], Duration::ZERO);
        assert!(!r.passed());
        assert!(r.to_json().unwrap().contains("\"verdict\": \"fail\""));
        assert!(r.to_human().contains("FAIL"));
    }

    #[test]
    fn uncomputed_residual_is_null() {
        let mut r = sample();
        r.section("bad", vec![CheckResult::flag("x", false, f64::INFINITY)], Duration::ZERO);
        let v = r.to_value().unwrap();
        assert!(v["sections"][1]["checks"][0]["max_residual"].is_null());
    }

    #[test]
    fn output_matches_schema_keys() {
        let schema: Value = serde_json::from_str(SCHEMA).unwrap();
        let v = sample().to_value().unwrap();
        for key in schema["required"].as_array().unwrap() {
            assert!(v.get(key.as_str().unwrap()).is_some(), "{key}");
        }
        let props = schema["properties"].as_object().unwrap();
        for key in v.as_object().unwrap().keys() {
            assert!(props.contains_key(key), "{key}");
        }
    }
}
