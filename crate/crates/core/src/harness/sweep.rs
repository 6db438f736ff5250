//! One-axis parameter sweeps over a template config.

use serde::Serialize;
use toml::Value;

use crate::error::{Error, Result};
use crate::par::{map_slice, Parallelism};

use super::config::ScenarioConfig;
use super::run::{run_scenario, RunStatus};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub status: Option<RunStatus>,
    pub final_ne_error: Option<f64>,
    pub final_time: Option<f64>,
    pub condition_held: Option<bool>,
    pub min_k_star: Option<f64>,
    pub config_hash: Option<String>,
    /// Set when the run could not be carried out.
    pub error: Option<String>,
}

pub const SWEEP_COLUMNS: [&str; 8] = [
    "value",
    "status",
    "final_ne_error",
    "final_time",
    "condition_held",
    "min_k_star",
    "config_hash",
    "error",
];

impl SweepRow {
    fn failed(value: f64, e: Error) -> Self {
        Self {
            value,
            status: None,
            final_ne_error: None,
            final_time: None,
            condition_held: None,
            min_k_star: None,
            config_hash: None,
            error: Some(e.to_string()),
        }
    }

    pub fn csv_line(&self) -> String {
        fn opt<T: ToString>(v: &Option<T>) -> String {
            v.as_ref().map(T::to_string).unwrap_or_default()
        }
        let num = |v: Option<f64>| v.map(|x| format!("{x:.16e}")).unwrap_or_default();
        let status = self.status.map(|s| {
            serde_json::to_value(s)
                .ok()
                .and_then(|v| v.as_str().map(String::from))
                .unwrap_or_default()
        });
        let error = self.error.as_ref().map(|e| format!("\"{}\"", e.replace('"', "'")));
        [
            format!("{:.16e}", self.value),
            status.unwrap_or_default(),
            num(self.final_ne_error),
            num(self.final_time),
            opt(&self.condition_held),
            num(self.min_k_star),
            opt(&self.config_hash),
            error.unwrap_or_default(),
        ]
        .join(",")
    }
}

/// Replace the numeric field at dotted `axis` with `value`. Numeric arrays
/// are overwritten entry by entry, so `dai.gamma` sets every agent's gain.
pub fn with_axis(template: &ScenarioConfig, axis: &str, value: f64) -> Result<ScenarioConfig> {
    let mut doc = Value::try_from(template).map_err(|e| Error::config(axis, e.to_string()))?;
    let mut slot = &mut doc;
    for key in axis.split('.') {
        slot = match slot {
            Value::Table(t) => t.get_mut(key),
            Value::Array(a) => key.parse::<usize>().ok().and_then(|i| a.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::config(axis, format!("no field `{key}`")))?;
    }
    set_number(slot, value).map_err(|msg| Error::config(axis, msg))?;
    doc.try_into::<ScenarioConfig>().map_err(|e| Error::config(axis, e.to_string()))
}

fn set_number(slot: &mut Value, value: f64) -> std::result::Result<(), String> {
    match slot {
        Value::Float(f) => *f = value,
        Value::Integer(i) => {
            if value.fract() != 0.0 || !value.is_finite() {
                return Err(format!("integer field cannot take {value}"));
            }
            *i = value as i64;
        }
        Value::Array(items) if !items.is_empty() => {
            for item in items.iter_mut() {
                set_number(item, value)?;
            }
        }
        _ => return Err("not a numeric field".into()),
    }
    Ok(())
}

/// One summary row per value. Failed runs are recorded in their row and
/// the sweep continues; only an unusable axis aborts.
pub fn sweep(template: &ScenarioConfig, axis: &str, values: &[f64], mode: Parallelism) -> Result<Vec<SweepRow>> {
    if let Some(v) = values.first() {
        with_axis(template, axis, *v)?;
    }
    Ok(map_slice(values, mode, |&value| {
        let outcome = with_axis(template, axis, value).and_then(|c| run_scenario(&c));
        match outcome {
            Ok(out) => {
                let s = out.summary;
                SweepRow {
                    value,
                    status: Some(s.status),
                    final_ne_error: Some(s.final_ne_error),
                    final_time: Some(s.final_time),
                    condition_held: s.condition_held,
                    min_k_star: s.min_k_star,
                    config_hash: Some(s.config_hash),
                    error: None,
                }
            }
            Err(e) => SweepRow::failed(value, e),
        }
    }))
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = SWEEP_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_line());
        out.push('\n');
    }
    out
}
