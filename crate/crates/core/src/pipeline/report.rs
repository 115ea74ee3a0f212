use std::io::{BufRead, Write};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{PipelineError, Stage};
use crate::fmap::FunctionKind;

/// `(MAE, STD)` of `|g − gt|` (population standard deviation).
pub fn evaluate_transfer(transferred: &[f64], ground_truth: &[f64]) -> Result<(f64, f64), PipelineError> {
    if transferred.len() != ground_truth.len() {
        return Err(PipelineError::LengthMismatch { expected: ground_truth.len(), found: transferred.len() });
    }
    if transferred.is_empty() {
        return Ok((0.0, 0.0));
    }
    let n = transferred.len() as f64;
    let errs: Vec<f64> = transferred.iter().zip(ground_truth).map(|(g, t)| (g - t).abs()).collect();
    let mae = errs.iter().sum::<f64>() / n;
    let var = errs.iter().map(|e| (e - mae).powi(2)).sum::<f64>() / n;
    Ok((mae, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionError {
    pub kind: FunctionKind,
    pub mae: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub functions: Vec<FunctionError>,
    /// Mean of the per-function MAEs.
    pub total_mae: f64,
    pub transfer_seconds: f64,
    /// Per operation: RIF MAE within budget and the transferred RIF peak
    /// within `λ_D` of the annotated one.
    pub success: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: Stage,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub stages: Vec<StageTiming>,
    pub total_seconds: f64,
    /// Time spent estimating and refining functional maps.
    pub fmap_seconds: f64,
    pub fmap_fraction: f64,
}

/// Sums repeated stages (first-occurrence order) and isolates the map stages.
pub fn timing_report(timings: &[(Stage, Duration)]) -> TimingReport {
    let mut stages: Vec<StageTiming> = Vec::new();
    for (stage, d) in timings {
        match stages.iter_mut().find(|s| s.stage == *stage) {
            Some(s) => s.seconds += d.as_secs_f64(),
            None => stages.push(StageTiming { stage: *stage, seconds: d.as_secs_f64() }),
        }
    }
    let total_seconds: f64 = stages.iter().map(|s| s.seconds).sum();
    let fmap_seconds: f64 = stages.iter().filter(|s| s.stage.is_fmap()).map(|s| s.seconds).sum();
    let fmap_fraction = if total_seconds > 0.0 { fmap_seconds / total_seconds } else { 0.0 };
    TimingReport { stages, total_seconds, fmap_seconds, fmap_fraction }
}

/// `vertex,value` rows with a header line.
pub fn write_function_csv(values: &[f64], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "vertex,value")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{i},{v:?}")?;
    }
    Ok(())
}

/// Reads `vertex,value` rows (header optional, any row order).
pub fn read_function_csv(input: impl BufRead) -> Result<Vec<f64>, String> {
    let mut rows: Vec<(usize, f64)> = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.starts_with("vertex")) {
            continue;
        }
        let (i, v) = line.split_once(',').ok_or_else(|| format!("line {}: expected `vertex,value`", n + 1))?;
        let i: usize = i.trim().parse().map_err(|e| format!("line {}: {e}", n + 1))?;
        let v: f64 = v.trim().parse().map_err(|e| format!("line {}: {e}", n + 1))?;
        rows.push((i, v));
    }
    rows.sort_by_key(|r| r.0);
    for (k, (i, _)) in rows.iter().enumerate() {
        if *i != k {
            return Err(format!("vertex indices are not 0..{} (missing or repeated {k})", rows.len()));
        }
    }
    Ok(rows.into_iter().map(|r| r.1).collect())
}
