//! Machine-readable run reports.

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_NAME: &str = "cbs-forge";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Whether a trial gates the exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    Asserted,
    /// Recorded for inspection only; open conjectures land here.
    ReportOnly,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub suite: String,
    pub label: String,
    pub kind: CheckKind,
    pub pass: bool,
    pub data: Value,
}

impl TrialRecord {
    pub fn asserted(suite: &str, label: impl Into<String>, pass: bool, data: impl Serialize) -> Result<Self> {
        Self::build(suite, label, CheckKind::Asserted, pass, data)
    }

    pub fn report_only(suite: &str, label: impl Into<String>, pass: bool, data: impl Serialize) -> Result<Self> {
        Self::build(suite, label, CheckKind::ReportOnly, pass, data)
    }

    fn build(suite: &str, label: impl Into<String>, kind: CheckKind, pass: bool, data: impl Serialize) -> Result<Self> {
        Ok(Self { suite: suite.to_string(), label: label.into(), kind, pass, data: serde_json::to_value(data)? })
    }

    pub fn is_failure(&self) -> bool {
        self.kind == CheckKind::Asserted && !self.pass
    }
}

/// SHA-256 of an input file consumed by the run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<InputDigest>,
    pub trials: Vec<TrialRecord>,
    pub asserted: usize,
    pub failed: usize,
    pub report_only: usize,
    pub pass: bool,
    pub wall_time_secs: f64,
}

impl RunReport {
    pub fn new(command: impl Into<String>, config: impl Serialize, seeds: Vec<u64>) -> Result<Self> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            tool: TOOL_NAME,
            version: TOOL_VERSION,
            command: command.into(),
            config: serde_json::to_value(config)?,
            seeds,
            inputs: Vec::new(),
            trials: Vec::new(),
            asserted: 0,
            failed: 0,
            report_only: 0,
            pass: true,
            wall_time_secs: 0.0,
        })
    }

    pub fn extend(&mut self, trials: impl IntoIterator<Item = TrialRecord>) {
        for t in trials {
            match t.kind {
                CheckKind::Asserted => self.asserted += 1,
                CheckKind::ReportOnly => self.report_only += 1,
            }
            if t.is_failure() {
                self.failed += 1;
                self.pass = false;
            }
            self.trials.push(t);
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &TrialRecord> {
        self.trials.iter().filter(|t| t.is_failure())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn report_only_failures_do_not_gate() {
        let mut r = RunReport::new("suite", json!({"seed": 1}), vec![1]).unwrap();
        r.extend([
            TrialRecord::asserted("a", "one", true, json!({})).unwrap(),
            TrialRecord::report_only("b", "two", false, json!({"x": 1})).unwrap(),
        ]);
        assert!(r.pass);
        assert_eq!((r.asserted, r.report_only, r.failed), (1, 1, 0));
        r.extend([TrialRecord::asserted("a", "three", false, json!(null)).unwrap()]);
        assert!(!r.pass);
        assert_eq!(r.failures().count(), 1);
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["trials"][1]["kind"], "report-only");
    }
}
