use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{best_lag, mean, spearman, std_dev, wilcoxon_signed_rank};
use crate::error::{Error, Result};
use crate::model::{derivative, jerk_of, Scene, VehicleClass, VehicleTrack};
use crate::risk::{ego_samples, risk_from_samples, ModelConfig, ModelId, RiskModel, RiskSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Largest reaction delay (s) accepted when aligning jerk to risk.
    pub max_lag_seconds: f64,
    /// Minimum number of overlapping samples after the shift.
    pub min_overlap: usize,
    pub significance: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { max_lag_seconds: 2.0, min_overlap: 75, significance: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub model: ModelId,
    pub recording_id: String,
    pub ego_id: u32,
    pub lag_frames: usize,
    pub lag_seconds: f64,
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
    pub significant: bool,
    pub diagnostic: Option<String>,
}

/// Correlates |d risk / dt| with |jerk| after shifting jerk by the best lag.
/// Constant inputs give a non-significant result with a diagnostic.
pub fn evaluate_ego(risk: &RiskSeries, track: &VehicleTrack, cfg: &EvalConfig) -> Result<CorrelationResult> {
    if risk.len() != track.len() {
        return Err(Error::LengthMismatch { left: risk.len(), right: track.len() });
    }
    let dt = 1.0 / risk.frame_rate;
    let g: Vec<f64> = derivative(&risk.overall, dt)?.iter().map(|v| v.abs()).collect();
    let j: Vec<f64> = jerk_of(track)?.iter().map(|v| v.abs()).collect();
    let result = |lag_frames: usize, rho: f64, p_value: f64, n: usize, diagnostic: Option<String>| CorrelationResult {
        model: risk.model,
        recording_id: risk.recording_id.clone(),
        ego_id: risk.ego_id,
        lag_frames,
        lag_seconds: lag_frames as f64 * dt,
        rho,
        p_value,
        n,
        significant: p_value < cfg.significance,
        diagnostic,
    };
    let flat = |what: &str| Some(format!("{what} has zero variance"));

    let lag = match best_lag(&g, &j, risk.frame_rate, cfg.max_lag_seconds) {
        Ok(lag) => lag,
        Err(Error::ZeroVariance) => return Ok(result(0, 0.0, 1.0, g.len(), flat("risk gradient or jerk"))),
        Err(e) => return Err(e),
    };
    let k = lag.frames;
    let n = g.len() - k;
    if n < cfg.min_overlap {
        return Err(Error::SeriesTooShort { len: n, min: cfg.min_overlap });
    }
    match spearman(&g[..n], &j[k..]) {
        Ok((rho, p)) => Ok(result(k, rho, p, n, None)),
        Err(Error::ZeroVariance) => Ok(result(k, 0.0, 1.0, n, flat("shifted overlap"))),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoFailure {
    pub model: ModelId,
    pub recording_id: String,
    pub ego_id: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub model: ModelId,
    pub evaluated: usize,
    pub significant: usize,
    pub failed: usize,
    pub significant_fraction: f64,
    /// Mean and population standard deviation of the significant rho values.
    pub mean_rho: Option<f64>,
    pub std_rho: Option<f64>,
}

pub fn summarize(model: ModelId, results: &[CorrelationResult], failed: usize) -> Summary {
    let rhos: Vec<f64> = results.iter().filter(|r| r.significant).map(|r| r.rho).collect();
    Summary {
        model,
        evaluated: results.len(),
        significant: rhos.len(),
        failed,
        significant_fraction: if results.is_empty() { 0.0 } else { rhos.len() as f64 / results.len() as f64 },
        mean_rho: mean(&rhos),
        std_rho: std_dev(&rhos),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEvaluation {
    pub results: BTreeMap<ModelId, Vec<CorrelationResult>>,
    pub failures: Vec<EgoFailure>,
    pub summaries: BTreeMap<ModelId, Summary>,
}

/// Evaluates every car of every scene under each model. Neighbor SSMs are
/// computed once per ego and shared by all models. Per-ego errors are
/// recorded as failures and excluded from the summaries.
pub fn evaluate_corpus(
    scenes: &[Scene],
    models: &[RiskModel],
    model_cfg: &ModelConfig,
    eval_cfg: &EvalConfig,
) -> Result<CorpusEvaluation> {
    let egos: Vec<(&Scene, &VehicleTrack)> = scenes
        .iter()
        .flat_map(|s| s.tracks().values().filter(|t| t.class() == VehicleClass::Car).map(move |t| (s, t)))
        .collect();
    if egos.is_empty() {
        return Err(Error::NoEgoCandidates);
    }

    type EgoOutcome = Vec<std::result::Result<CorrelationResult, EgoFailure>>;
    let outcomes: Vec<EgoOutcome> = egos
        .par_iter()
        .map(|&(scene, track)| {
            let fail = |model: &RiskModel, e: &Error| EgoFailure {
                model: model.id,
                recording_id: scene.recording_id().to_string(),
                ego_id: track.id(),
                reason: e.to_string(),
            };
            let min = model_cfg.min_series_frames(scene.frame_rate());
            let samples = if track.len() < min {
                Err(Error::TrackTooShort { vehicle_id: track.id(), frames: track.len(), min })
            } else {
                ego_samples(scene, track.id(), &model_cfg.neighbors)
            };
            match samples {
                Err(e) => models.iter().map(|m| Err(fail(m, &e))).collect(),
                Ok(samples) => models
                    .iter()
                    .map(|m| evaluate_ego(&risk_from_samples(m, &samples), track, eval_cfg).map_err(|e| fail(m, &e)))
                    .collect(),
            }
        })
        .collect();

    let mut results: BTreeMap<ModelId, Vec<CorrelationResult>> = models.iter().map(|m| (m.id, Vec::new())).collect();
    let mut failures = Vec::new();
    for outcome in outcomes.into_iter().flatten() {
        match outcome {
            Ok(r) => results.entry(r.model).or_default().push(r),
            Err(f) => failures.push(f),
        }
    }
    let summaries = results
        .iter()
        .map(|(&id, rs)| {
            let failed = failures.iter().filter(|f| f.model == id).count();
            (id, summarize(id, rs, failed))
        })
        .collect();
    Ok(CorpusEvaluation { results, failures, summaries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "r")]
    Rejected,
    #[serde(rename = "n")]
    NotRejected,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Rejected => "r",
            Verdict::NotRejected => "n",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigComparison {
    pub row: ModelId,
    pub col: ModelId,
    pub pairs: usize,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub verdict: Verdict,
}

/// One-sided Wilcoxon tests of rho(row) − rho(col) for every ordered pair of
/// models, over egos significant under both.
pub fn compare_configs(
    results: &BTreeMap<ModelId, Vec<CorrelationResult>>,
    significance: f64,
) -> Result<Vec<ConfigComparison>> {
    type Key = (String, u32);
    let keyed: BTreeMap<ModelId, BTreeMap<Key, &CorrelationResult>> = results
        .iter()
        .map(|(&id, rs)| (id, rs.iter().map(|r| ((r.recording_id.clone(), r.ego_id), r)).collect()))
        .collect();
    let mut out = Vec::new();
    for (&row, row_map) in &keyed {
        for (&col, col_map) in &keyed {
            if row == col {
                continue;
            }
            let row_keys: BTreeSet<&Key> = row_map.keys().collect();
            if !row_map.is_empty() && !col_map.is_empty() && !col_map.keys().any(|k| row_keys.contains(k)) {
                return Err(Error::MismatchedCorpora(format!("{row} and {col}")));
            }
            let diffs: Vec<f64> = row_map
                .iter()
                .filter_map(|(k, a)| {
                    let b = col_map.get(k)?;
                    (a.significant && b.significant).then_some(a.rho - b.rho)
                })
                .collect();
            let (statistic, p_value, verdict) = match wilcoxon_signed_rank(&diffs) {
                Ok(w) => {
                    let v = if w.p_value < significance { Verdict::Rejected } else { Verdict::NotRejected };
                    (Some(w.statistic), Some(w.p_value), v)
                }
                // Identical distributions: nothing to reject.
                Err(Error::AllZeroDiffs) => (None, Some(1.0), Verdict::NotRejected),
                // Too few pairs for the test to reach significance.
                Err(Error::SeriesTooShort { .. }) => (None, None, Verdict::NotRejected),
                Err(e) => return Err(e),
            };
            out.push(ConfigComparison { row, col, pairs: diffs.len(), statistic, p_value, verdict });
        }
    }
    Ok(out)
}

pub fn write_results_csv<'a, W: Write>(
    output: W,
    results: impl IntoIterator<Item = &'a CorrelationResult>,
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(output);
    let mut any = false;
    for r in results {
        writer.serialize(r)?;
        any = true;
    }
    if !any {
        writer.write_record([
            "model",
            "recording_id",
            "ego_id",
            "lag_frames",
            "lag_seconds",
            "rho",
            "p_value",
            "n",
            "significant",
            "diagnostic",
        ])?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_results_csv<R: Read>(input: R) -> Result<Vec<CorrelationResult>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in reader.deserialize() {
        out.push(row.map_err(|e| match e.position() {
            Some(pos) => Error::MalformedRow { line: pos.line(), reason: e.to_string() },
            None => Error::Csv(e),
        })?);
    }
    Ok(out)
}

/// Square r/n matrix with a dash diagonal; rows minus columns.
pub fn write_comparison_csv<W: Write>(output: W, models: &[ModelId], comparisons: &[ConfigComparison]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(output);
    let mut header = vec![String::new()];
    header.extend(models.iter().map(ToString::to_string));
    writer.write_record(&header)?;
    for row in models {
        let mut record = vec![row.to_string()];
        for col in models {
            let cell = if row == col {
                "-".to_string()
            } else {
                comparisons
                    .iter()
                    .find(|c| c.row == *row && c.col == *col)
                    .map_or(String::new(), |c| c.verdict.to_string())
            };
            record.push(cell);
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_comparison_long_csv<W: Write>(output: W, comparisons: &[ConfigComparison]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(output);
    writer.write_record(["row", "col", "pairs", "statistic", "p_value", "verdict"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for c in comparisons {
        writer.write_record([
            c.row.to_string(),
            c.col.to_string(),
            c.pairs.to_string(),
            opt(c.statistic),
            opt(c.p_value),
            c.verdict.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
