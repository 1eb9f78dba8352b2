//! Condition records and verdicts.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::model::RegularityReport;

pub const NONNEG_DENSITY: &str = "NONNEG_DENSITY";
pub const NONNEG_ATOMS: &str = "NONNEG_ATOMS";
pub const NONNEG_H: &str = "NONNEG_H";
pub const COMP_SLACK_STATE: &str = "COMP_SLACK_STATE";
pub const COMP_SLACK_CONTROL: &str = "COMP_SLACK_CONTROL";
pub const ADJOINT: &str = "ADJOINT";
pub const TRANSVERSALITY: &str = "TRANSVERSALITY";
pub const JUMP_CONDITIONS: &str = "JUMP_CONDITIONS";
pub const SOLVABILITY: &str = "SOLVABILITY";
pub const ENERGY_CONSERVATION: &str = "ENERGY_CONSERVATION";
pub const CONTROL_STATIONARITY: &str = "CONTROL_STATIONARITY";
pub const REGULARITY: &str = "REGULARITY";

/// One checked condition. `pass` is `residual <= tol`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConditionRecord {
    pub name: String,
    pub residual: f64,
    pub tol: f64,
    pub pass: bool,
    /// Extra scalar for sign conditions (the observed minimum).
    #[cfg_attr(feature = "serde", serde(skip_serializing_if = "Option::is_none", default))]
    pub value: Option<f64>,
}

impl ConditionRecord {
    pub fn new(name: &str, residual: f64, tol: f64) -> ConditionRecord {
        ConditionRecord { name: name.to_string(), residual, tol, pass: residual <= tol, value: None }
    }

    /// Sign condition `min ≥ −tol`; the residual is the amount of violation.
    pub fn sign(name: &str, min: f64, tol: f64) -> ConditionRecord {
        let residual = if min.is_finite() { (-min).max(0.0) } else { 0.0 };
        ConditionRecord { value: Some(min), ..ConditionRecord::new(name, residual, tol) }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StationarityReport {
    pub conditions: Vec<ConditionRecord>,
    /// Atoms of the measure at `t1` and `t2`.
    pub atoms: [f64; 2],
    pub c: f64,
    /// Minimum of the density over the arc.
    pub min_density: f64,
    pub regularity: Option<RegularityReport>,
}

impl StationarityReport {
    pub fn verdict(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    pub fn violations(&self) -> Vec<&str> {
        self.conditions.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&ConditionRecord> {
        self.conditions.iter().find(|c| c.name == name)
    }

    /// Per-condition pass flags, in record order.
    pub fn verdicts(&self) -> Vec<(&str, bool)> {
        self.conditions.iter().map(|c| (c.name.as_str(), c.pass)).collect()
    }
}

/// A list of condition records without the stationarity extras.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConditionSet {
    pub conditions: Vec<ConditionRecord>,
}

impl ConditionSet {
    pub fn push(&mut self, r: ConditionRecord) {
        self.conditions.push(r);
    }

    pub fn verdict(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }

    pub fn violations(&self) -> Vec<&str> {
        self.conditions.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&ConditionRecord> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn max_residual(&self) -> f64 {
        self.conditions.iter().fold(0.0, |m, c| m.max(c.residual))
    }
}
