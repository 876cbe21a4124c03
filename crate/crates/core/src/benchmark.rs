//! Session scoring and multi-seed benchmark runs.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{
    event_analysis, interaction_analysis, kappa_on_predicted, match_attempts, EventInputs, EventReport,
    InteractionReport, MethodFamily,
};
use crate::patch::PatchLibrary;
use crate::replay::{classify_log, Method, PipelineConfig};
use crate::sessionlog::{PredictionLog, Record, SessionLog};
use crate::simulator::{make_scene, simulate_session, SimulationConfig};

/// Timestamp tolerance when pairing records of two logs.
pub const TIME_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub method: Option<String>,
    pub samples: usize,
    pub scored_samples: usize,
    /// `null` when no sample carried a prediction or the session has no truth.
    pub kappa: Option<f64>,
    /// `null` when the session has no truth records.
    pub events: Option<EventReport>,
    pub interaction: InteractionReport,
}

/// Per-sample predictions of a prediction log aligned to the session's
/// gaze samples. Every prediction must land on a gaze timestamp.
pub fn align_predictions(log: &SessionLog, predictions: &PredictionLog) -> Result<Vec<Option<crate::model::Label>>> {
    let gaze = log.gaze();
    let mut out = vec![None; gaze.len()];
    let mut cursor = 0usize;
    for (t, label, _) in predictions.predictions() {
        while cursor < gaze.len() && gaze[cursor].t < t - TIME_TOLERANCE {
            cursor += 1;
        }
        if cursor == gaze.len() || (gaze[cursor].t - t).abs() > TIME_TOLERANCE {
            return Err(Error::LengthMismatch(format!("prediction at t={t} matches no gaze sample")));
        }
        out[cursor] = Some(label.clone());
        cursor += 1;
    }
    Ok(out)
}

/// Full report of one session. Sample and event analysis need truth
/// records; interaction analysis only needs selection records.
pub fn evaluate_session(
    log: &SessionLog,
    predictions: &PredictionLog,
    method: Option<Method>,
) -> Result<SessionReport> {
    let per_sample = align_predictions(log, predictions)?;
    let gaze = log.gaze();
    let scored = per_sample.iter().filter(|p| p.is_some()).count();
    let has_truth = log.records.iter().any(|r| matches!(r, Record::Truth { .. }));
    let (kappa, events) = if has_truth {
        let truth = log.truth()?;
        let frames = log.frames()?;
        let flat: Vec<_> = per_sample.iter().map(|p| p.clone().flatten()).collect();
        let family = method.map_or_else(|| infer_family(predictions), Method::family);
        let events = event_analysis(
            EventInputs { pred: &flat, truth: &truth.labels, gaze: &gaze, frames: &frames, saccade: &truth.saccade },
            family,
        )?;
        let kappa = if scored > 0 { Some(kappa_on_predicted(&per_sample, &truth.labels)?) } else { None };
        (kappa, Some(events))
    } else {
        (None, None)
    };
    let selections: Vec<_> = predictions.selections().map(|(t, p)| (t, p.clone())).collect();
    let attempts = match_attempts(&log.selections(), &selections, TIME_TOLERANCE);
    Ok(SessionReport {
        method: method.map(|m| m.name().to_string()),
        samples: gaze.len(),
        scored_samples: scored,
        kappa,
        events,
        interaction: interaction_analysis(&attempts),
    })
}

/// Fixation predictions carry no scores; similarity predictions always do
/// once the scene has an object.
fn infer_family(predictions: &PredictionLog) -> MethodFamily {
    let mut preds = predictions.predictions().peekable();
    if preds.peek().is_some() && preds.all(|(_, _, s)| s.is_empty()) {
        MethodFamily::Fixation
    } else {
        MethodFamily::Similarity
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub kappa_per_seed: Vec<Option<f64>>,
    pub kappa_mean: Option<f64>,
    pub events: EventReport,
    pub interaction: InteractionReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub seeds: Vec<u64>,
    pub methods: BTreeMap<String, MethodSummary>,
}

/// Simulates one session per seed and scores every method on it.
pub fn run_benchmark(
    sim: &SimulationConfig,
    pipeline: &PipelineConfig,
    seeds: &[u64],
    methods: &[Method],
) -> Result<BenchmarkReport> {
    sim.validate()?;
    pipeline.validate()?;
    let per_seed: Vec<Result<Vec<SessionReport>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                scope.spawn(move || -> Result<Vec<SessionReport>> {
                    let scene = make_scene(&sim.scene, seed)?;
                    let session = simulate_session(&scene, &sim.script, &sim.noise, seed)?;
                    let lib = Arc::new(scene.library.clone());
                    methods
                        .iter()
                        .map(|&m| {
                            let out = classify_log(&session.log, Arc::clone(&lib) as Arc<PatchLibrary>, m, pipeline)?;
                            evaluate_session(&session.log, &out.predictions, Some(m))
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("benchmark worker panicked")).collect()
    });
    let mut methods_out: BTreeMap<String, MethodSummary> = BTreeMap::new();
    for reports in per_seed {
        for (m, r) in methods.iter().zip(reports?) {
            let entry = methods_out.entry(m.name().to_string()).or_insert_with(|| MethodSummary {
                kappa_per_seed: Vec::new(),
                kappa_mean: None,
                events: EventReport::empty(m.family()),
                interaction: interaction_analysis(&[]),
            });
            entry.kappa_per_seed.push(r.kappa);
            if let Some(e) = &r.events {
                entry.events.merge(e);
            }
            let i = &mut entry.interaction;
            i.attempts += r.interaction.attempts;
            i.correct += r.interaction.correct;
            i.deletion_misclassification += r.interaction.deletion_misclassification;
            i.deletion_missed_detection += r.interaction.deletion_missed_detection;
        }
    }
    for s in methods_out.values_mut() {
        let ks: Vec<f64> = s.kappa_per_seed.iter().flatten().copied().collect();
        s.kappa_mean = (!ks.is_empty()).then(|| ks.iter().sum::<f64>() / ks.len() as f64);
        let i = &mut s.interaction;
        let denom = i.correct + i.deletion_misclassification;
        i.success_rate = (denom > 0).then(|| i.correct as f64 / denom as f64);
        i.error = (denom == 0).then(|| "success rate undefined: no selection carried a prediction".to_string());
    }
    Ok(BenchmarkReport { seeds: seeds.to_vec(), methods: methods_out })
}
