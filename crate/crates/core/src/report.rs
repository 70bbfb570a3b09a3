//! Structured JSON run reports shared by every CLI command.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::mrf::EstimateStats;

pub const SCHEMA_VERSION: u32 = 1;

/// One run's outcome: echoed configuration, metrics, and pipeline counters.
/// Optional sections are omitted from the JSON when absent.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    /// Effective configuration after defaults, config file, and flags.
    pub config: Map<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub age: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ep: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cep: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarity_direct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub splits: Option<Vec<SplitReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub peak_model_bytes: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<StageCounters>,
    pub runtime_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames_per_second: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub outputs: Vec<String>,
}

impl RunReport {
    pub fn new(command: &str) -> RunReport {
        RunReport {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            config: Map::new(),
            age: None,
            ep: None,
            cep: None,
            similarity: None,
            similarity_direct: None,
            splits: None,
            peak_model_bytes: None,
            stats: None,
            runtime_ms: 0.0,
            frames_per_second: None,
            outputs: Vec::new(),
        }
    }

    pub fn set_config(&mut self, key: &str, value: impl Into<Value>) {
        self.config.insert(key.to_string(), value.into());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    /// Single-line human summary of whichever metrics the run produced.
    pub fn summary_line(&self) -> String {
        let mut parts = vec![format!("command={}", self.command)];
        if let Some(v) = self.age {
            parts.push(format!("age={v:.4}"));
        }
        if let Some(v) = self.ep {
            parts.push(format!("ep={v}"));
        }
        if let Some(v) = self.cep {
            parts.push(format!("cep={v}"));
        }
        if let Some(v) = self.similarity {
            parts.push(format!("similarity={v:.4}"));
        }
        if let Some(v) = self.similarity_direct {
            parts.push(format!("similarity_direct={v:.4}"));
        }
        if let Some(v) = self.frames_per_second {
            parts.push(format!("fps={v:.2}"));
        }
        parts.push(format!("runtime_ms={:.1}", self.runtime_ms));
        parts.join(" ")
    }
}

/// Per-sub-sequence metrics when an evaluation splits the input.
#[derive(Debug, Clone, Serialize)]
pub struct SplitReport {
    pub frames: usize,
    pub age: f64,
    pub ep: u64,
    pub cep: u64,
}

/// Pipeline counters copied from the estimator.
#[derive(Debug, Clone, Serialize)]
pub struct StageCounters {
    pub frames: usize,
    pub grid_cols: u32,
    pub grid_rows: u32,
    pub t2: f64,
    /// Representative-count histogram: size -> number of nodes.
    pub s_histogram: BTreeMap<usize, usize>,
    pub nodes_initialised: usize,
    pub corner_seeded: bool,
    pub fill_full_passes: u32,
    pub fill_fallback_passes: u32,
    pub valve_assignments: u32,
    pub icm_iterations_run: u32,
    pub icm_changes: Vec<u32>,
    pub peak_model_bytes: u64,
}

impl StageCounters {
    pub fn from_stats(stats: &EstimateStats) -> StageCounters {
        StageCounters {
            frames: stats.frames,
            grid_cols: stats.grid_cols,
            grid_rows: stats.grid_rows,
            t2: stats.t2,
            s_histogram: stats.s_histogram.clone(),
            nodes_initialised: stats.partial_initialised,
            corner_seeded: stats.corner_seeded,
            fill_full_passes: stats.fill.full_passes,
            fill_fallback_passes: stats.fill.fallback_passes,
            valve_assignments: stats.fill.valve_assignments,
            icm_iterations_run: stats.icm.iterations_run,
            icm_changes: stats.icm.changes_per_iteration.clone(),
            peak_model_bytes: stats.peak_model_bytes as u64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_omits_absent_sections() {
        let mut report = RunReport::new("estimate");
        report.set_config("block_size", 16);
        report.runtime_ms = 12.5;
        let json = report.to_json();
        assert!(json.contains("\"schema_version\": 1"));
        assert!(json.contains("\"block_size\": 16"));
        assert!(!json.contains("\"age\""));
        assert!(!json.contains("\"splits\""));
    }

    #[test]
    fn report_keys_are_sorted_for_determinism() {
        let mut report = RunReport::new("estimate");
        report.set_config("t1", 0.8);
        report.set_config("block_size", 16);
        let json = report.to_json();
        let block = json.find("\"block_size\"").unwrap();
        let t1 = json.find("\"t1\"").unwrap();
        assert!(block < t1, "config keys should serialize sorted");
    }

    #[test]
    fn summary_line_lists_present_metrics() {
        let mut report = RunReport::new("evaluate");
        report.age = Some(1.25);
        report.ep = Some(3.0);
        report.runtime_ms = 7.0;
        let line = report.summary_line();
        assert!(line.contains("age=1.2500"));
        assert!(line.contains("ep=3"));
        assert!(!line.contains("similarity"));
    }
}
