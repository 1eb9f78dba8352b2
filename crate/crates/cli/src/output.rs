//! JSON reports and CSV signal dumps.

use std::path::Path;

use serde::Serialize;
use statecon_core::integrate::GridSignal;
use statecon_core::model::RegularityReport;
use statecon_core::report::{ConditionRecord, StationarityReport};

use crate::error::CliResult;

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Atoms {
    pub t1: f64,
    pub t2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyJson<'a> {
    pub schema: u32,
    pub problem: &'a str,
    pub kind: &'a str,
    pub grid: usize,
    pub conditions: &'a [ConditionRecord],
    pub verdict: bool,
    pub violations: Vec<&'a str>,
    pub atoms: Atoms,
    pub c: f64,
    pub min_density: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regularity: Option<&'a RegularityReport>,
}

impl<'a> VerifyJson<'a> {
    pub fn new(problem: &'a str, kind: &'a str, grid: usize, r: &'a StationarityReport) -> Self {
        VerifyJson {
            schema: SCHEMA,
            problem,
            kind,
            grid,
            conditions: &r.conditions,
            verdict: r.verdict(),
            violations: r.violations(),
            atoms: Atoms { t1: r.atoms[0], t2: r.atoms[1] },
            c: r.c,
            min_density: r.min_density,
            regularity: r.regularity.as_ref(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReduceJson<'a> {
    pub schema: u32,
    pub problem: &'a str,
    pub grid: usize,
    pub rho: [f64; 3],
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta_t: [f64; 4],
    pub beta5: &'a [f64],
    pub beta6: &'a [f64],
    pub beta7: f64,
    pub beta8: f64,
    pub conditions: &'a [ConditionRecord],
    pub verdict: bool,
    pub violations: Vec<&'a str>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderStep {
    pub eps: f64,
    pub quotient: f64,
    pub error: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct KappaJson {
    pub kappa: String,
    pub pairing_lhs: f64,
    pub pairing_rhs: f64,
    pub pairing_abs: f64,
    pub pairing_rel: f64,
    pub directional_derivative: f64,
    pub measure_pairing: f64,
    pub ladder: Vec<LadderStep>,
    /// Log–log slope of the ladder errors.
    pub slope: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyJson {
    pub size: usize,
    pub min_value: f64,
    pub argmin: String,
    pub nonnegative: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VariationJson<'a> {
    pub schema: u32,
    pub problem: &'a str,
    pub grid: usize,
    pub kappas: Vec<KappaJson>,
    pub family: FamilyJson,
    pub verdict: bool,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// Write signals sharing one three-interval grid. Junction nodes appear
/// twice, marked `L` (end of the left interval) and `R` (start of the right
/// one); other rows leave the side empty.
pub fn write_signals_csv(path: &Path, header: &[String], signals: &[&GridSignal]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut row = vec!["t".to_string(), "side".to_string()];
    row.extend(header.iter().cloned());
    w.write_record(&row)?;
    let base = signals[0];
    let count = base.pieces().len();
    for (k, p) in base.pieces().iter().enumerate() {
        for i in 0..=p.steps {
            let side = if i == 0 && k > 0 {
                "R"
            } else if i == p.steps && k + 1 < count {
                "L"
            } else {
                ""
            };
            let mut rec = vec![format!("{:.17e}", p.time(i)), side.to_string()];
            for s in signals {
                rec.extend(s.piece(k).node(i).iter().map(|v| format!("{v:.17e}")));
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
