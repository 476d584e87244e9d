//! Scenario reports: scalar results, named numeric series and a config echo.
//!
//! JSON output relies on serde_json's shortest round-trip float formatting,
//! so a parsed report reproduces every value bit for bit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SCHEMA_VERSION: u32 = 1;

/// A table of numbers with a header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// Header row plus one line per row. Numbers use Rust's shortest
    /// round-trip `Display`, which is locale independent.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub schema_version: u32,
    pub engine_version: String,
    pub scenario: String,
    pub seed: u64,
    /// Full config as run, overrides applied.
    pub config: Value,
    pub scalars: BTreeMap<String, Value>,
    pub series: Vec<Series>,
}

impl ScenarioReport {
    pub fn new(scenario: &str, seed: u64, config: Value) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            engine_version: crate::VERSION.to_string(),
            scenario: scenario.to_string(),
            seed,
            config,
            scalars: BTreeMap::new(),
            series: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.scalars.insert(key.to_string(), v);
    }

    pub fn scalar_f64(&self, key: &str) -> Option<f64> {
        self.scalars.get(key).and_then(Value::as_f64)
    }

    pub fn scalar_bool(&self, key: &str) -> Option<bool> {
        self.scalars.get(key).and_then(Value::as_bool)
    }

    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
