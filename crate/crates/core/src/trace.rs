//! Per-step records of an evolution.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    pub max_velocity: f64,
    /// Set when the step included a non-descent operation (resampling or
    /// reinitialization); such rows are excluded from monotonicity checks.
    pub exempt: bool,
    pub extras: BTreeMap<String, f64>,
}

impl TraceRow {
    pub fn new(step: usize, time: f64, energy: f64, max_velocity: f64) -> Self {
        Self { step, time, energy, max_velocity, exempt: false, extras: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.extras.insert(key.to_string(), value);
        self
    }

    pub fn exempt(mut self, exempt: bool) -> Self {
        self.exempt = exempt;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvolutionTrace {
    rows: Vec<TraceRow>,
}

impl EvolutionTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: TraceRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.step <= last.step {
                return Err(Error::InvalidParameter(format!(
                    "trace steps must increase ({} after {})",
                    row.step, last.step
                )));
            }
        }
        if !row.energy.is_finite() {
            return Err(Error::Numerical(format!("non-finite energy at step {}", row.step)));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// First non-exempt row whose energy exceeds the previous row's, if any.
    pub fn first_energy_increase(&self) -> Option<&TraceRow> {
        self.rows.windows(2).find(|w| !w[1].exempt && w[1].energy > w[0].energy).map(|w| &w[1])
    }

    /// CSV with columns `step,time,energy,max_velocity,exempt` followed by the
    /// extras of the first row in key order.
    pub fn to_csv(&self) -> String {
        let keys: Vec<&String> = self.rows.first().map(|r| r.extras.keys().collect()).unwrap_or_default();
        let mut out = String::from("step,time,energy,max_velocity,exempt");
        for k in &keys {
            out.push(',');
            out.push_str(k);
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{},{},{}", r.step, r.time, r.energy, r.max_velocity, u8::from(r.exempt));
            for k in &keys {
                let _ = write!(out, ",{}", r.extras.get(*k).copied().unwrap_or(f64::NAN));
            }
            out.push('\n');
        }
        out
    }
}
