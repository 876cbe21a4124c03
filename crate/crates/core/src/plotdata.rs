//! Numeric series behind the distance plots: per-sample metric traces and
//! the shifted-distribution sweep.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::benchmark::BenchmarkReport;
use crate::classifier::{ClassifierConfig, IntentSession};
use crate::distributions::{histogram, to_signature, BinEdges, DistanceSample, DistanceSource};
use crate::error::{Error, Result};
use crate::metrics::{bhattacharyya_with_eps, emd, kl_divergence};
use crate::model::{GazeSample, Label, ObjectId, SceneFrame};
use crate::patch::PatchLibrary;
use crate::sessionlog::{PredictionLog, Record, SessionLog};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub emd: f64,
    pub kl: f64,
    pub bhatt: f64,
    /// Mean gaze-to-nearest-hypothetic-point distance over the window, px.
    pub euclidean: f64,
    pub truth: Label,
}

/// Distance traces of one object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSet {
    pub object_id: ObjectId,
    pub rows: Vec<TraceRow>,
}

impl TraceSet {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["t", "emd", "kl", "bhatt", "euclidean", "truth"]).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.t.to_string(),
                r.emd.to_string(),
                r.kl.to_string(),
                r.bhatt.to_string(),
                r.euclidean.to_string(),
                r.truth.clone().unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
    }

    /// Checks that rows and per-sample predictions line up one to one.
    pub fn check_alignment(&self, predictions: &PredictionLog) -> Result<()> {
        let times: Vec<f64> = predictions.predictions().map(|(t, _, _)| t).collect();
        if times.len() != self.rows.len() {
            return Err(Error::LengthMismatch(format!("{} trace rows vs {} predictions", self.rows.len(), times.len())));
        }
        if let Some((r, t)) = self.rows.iter().zip(&times).find(|(r, t)| (r.t - **t).abs() > 1e-6) {
            return Err(Error::LengthMismatch(format!("trace row at t={} vs prediction at t={t}", r.t)));
        }
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

/// Streams the session and records every metric against `object_id`
/// wherever the classifier emits a prediction.
pub fn compute_traces(log: &SessionLog, library: Arc<PatchLibrary>, object_id: ObjectId, cfg: &ClassifierConfig) -> Result<TraceSet> {
    let truth = log.truth().ok().map(|t| t.labels);
    let mut session = IntentSession::new(cfg.clone(), library)?;
    let mut frame: Option<SceneFrame> = None;
    let first = log.frames()?.frames().first().cloned().ok_or(Error::Log { line: 0, reason: "session has no frame records".into() })?;
    let mut rows = Vec::new();
    let mut idx = 0usize;
    for r in &log.records {
        match r {
            Record::Frame { t, boxes } => frame = Some(log.scene_frame(*t, boxes)?),
            Record::Gaze { t, x, y, conf } => {
                let current = frame.as_ref().unwrap_or(&first);
                let sample = GazeSample::new(*t, *x, *y, *conf);
                if session.stream_update(sample, current)?.is_some() {
                    if let Some(s) = session.trace_scores(current, object_id)? {
                        rows.push(TraceRow {
                            t: *t,
                            emd: s.emd,
                            kl: s.kl,
                            bhatt: s.bhatt,
                            euclidean: s.euclidean,
                            truth: truth.as_ref().and_then(|l| l[idx].clone()),
                        });
                    }
                }
                idx += 1;
            }
            _ => {}
        }
    }
    Ok(TraceSet { object_id, rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub emd: f64,
    pub kl: f64,
    pub bhatt: f64,
}

/// Metrics between `base` and copies of it shifted by each `delta`.
pub fn shift_sweep(base: &DistanceSample, deltas: &[f64], edges: &BinEdges, eps: f64) -> Result<Vec<SweepRow>> {
    let reference = histogram(base, edges)?;
    let reference_sig = to_signature(&reference)?;
    deltas
        .iter()
        .map(|&delta| {
            let shifted = DistanceSample {
                values: base.values.iter().map(|v| v + delta).collect(),
                source: DistanceSource::Actual,
            };
            let h = histogram(&shifted, edges)?;
            Ok(SweepRow {
                delta,
                emd: emd(&to_signature(&h)?, &reference_sig)?,
                kl: kl_divergence(&h, &reference, eps)?,
                bhatt: bhattacharyya_with_eps(&h, &reference, eps)?,
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of numbers"))
}

/// Least-squares line through `(x, y)`: `(slope, intercept, r_squared)`.
/// A constant `y` has an R² of 1.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("linear fit needs two or more paired points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("linear fit needs distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((slope, intercept, r2))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaturationSummary {
    pub emd_r2: f64,
    pub emd_slope: f64,
    pub kl_small_slope: f64,
    pub kl_large_slope: f64,
    pub bhatt_small_slope: f64,
    pub bhatt_large_slope: f64,
}

impl SaturationSummary {
    /// Ratio of large-shift to small-shift slope magnitude.
    pub fn kl_ratio(&self) -> f64 {
        self.kl_large_slope.abs() / self.kl_small_slope.abs()
    }

    pub fn bhatt_ratio(&self) -> f64 {
        self.bhatt_large_slope.abs() / self.bhatt_small_slope.abs()
    }
}

/// EMD linearity over the whole sweep, and the KL/Bhattacharyya slopes
/// over the first and last fifth of the shift range.
pub fn saturation_summary(rows: &[SweepRow]) -> Result<SaturationSummary> {
    let deltas: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    let (lo, hi) = deltas
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &d| (a.min(d), b.max(d)));
    let span = hi - lo;
    let part = |pick: fn(&SweepRow) -> f64, from: f64, to: f64| -> Result<f64> {
        let (x, y): (Vec<f64>, Vec<f64>) =
            rows.iter().filter(|r| r.delta >= from && r.delta <= to).map(|r| (r.delta, pick(r))).unzip();
        Ok(linear_fit(&x, &y)?.0)
    };
    let (emd_slope, _, emd_r2) = linear_fit(&deltas, &rows.iter().map(|r| r.emd).collect::<Vec<_>>())?;
    let small = (lo, lo + 0.2 * span);
    let large = (hi - 0.2 * span, hi);
    Ok(SaturationSummary {
        emd_r2,
        emd_slope,
        kl_small_slope: part(|r| r.kl, small.0, small.1)?,
        kl_large_slope: part(|r| r.kl, large.0, large.1)?,
        bhatt_small_slope: part(|r| r.bhatt, small.0, small.1)?,
        bhatt_large_slope: part(|r| r.bhatt, large.0, large.1)?,
    })
}

/// Per-seed kappa of every method, one row each: `method,seed,kappa`.
/// Sessions without a scored sample leave the kappa cell empty.
pub fn kappa_csv(report: &BenchmarkReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["method", "seed", "kappa"]).map_err(csv_err)?;
    for (method, summary) in &report.methods {
        for (seed, kappa) in report.seeds.iter().zip(&summary.kappa_per_seed) {
            w.write_record([method.clone(), seed.to_string(), kappa.map(|k| k.to_string()).unwrap_or_default()])
                .map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}
