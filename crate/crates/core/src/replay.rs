//! Offline classification of a recorded session.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierConfig, Metric};
use crate::error::{Error, Result};
use crate::evaluation::MethodFamily;
use crate::fixation::{baseline_labels, IdtConfig};
use crate::gesture::{GestureConfig, GestureDetector};
use crate::interaction::{SelectionSession, SessionOutput};
use crate::model::{Label, SceneFrame};
use crate::patch::PatchLibrary;
use crate::sessionlog::{PredictionLog, PredictionRecord, Record, SessionLog};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Emd,
    Kl,
    Bhatt,
    Fixation,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Emd, Method::Kl, Method::Bhatt, Method::Fixation];

    pub fn metric(self) -> Option<Metric> {
        match self {
            Method::Emd => Some(Metric::Emd),
            Method::Kl => Some(Metric::Kl),
            Method::Bhatt => Some(Metric::Bhattacharyya),
            Method::Fixation => None,
        }
    }

    pub fn family(self) -> MethodFamily {
        match self {
            Method::Fixation => MethodFamily::Fixation,
            _ => MethodFamily::Similarity,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Emd => "emd",
            Method::Kl => "kl",
            Method::Bhatt => "bhatt",
            Method::Fixation => "fixation",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "emd" => Ok(Method::Emd),
            "kl" => Ok(Method::Kl),
            "bhatt" | "bhattacharyya" => Ok(Method::Bhatt),
            "fixation" | "fix" => Ok(Method::Fixation),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}` (expected emd|kl|bhatt|fixation)"))),
        }
    }
}

/// Every knob of the replay pipelines, as read from a classify config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub classifier: ClassifierConfig,
    pub gesture: GestureConfig,
    pub idt: IdtConfig,
}

impl PipelineConfig {
    /// Classifier config with the metric of `method`. The rejection threshold
    /// applies only when it was set for that same metric.
    pub fn classifier_for(&self, method: Method) -> ClassifierConfig {
        let mut cfg = self.classifier.clone();
        if let Some(m) = method.metric() {
            if m != cfg.metric {
                cfg.rejection_threshold = None;
            }
            cfg.metric = m;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.classifier.validate()?;
        self.gesture.validate()?;
        self.idt.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplayOutput {
    pub predictions: PredictionLog,
    /// Per gaze sample: `None` where no prediction was emitted.
    pub per_sample: Vec<Option<Label>>,
}

/// Runs `method` over the session in stream order.
pub fn classify_log(log: &SessionLog, library: Arc<PatchLibrary>, method: Method, cfg: &PipelineConfig) -> Result<ReplayOutput> {
    match method {
        Method::Fixation => classify_fixation(log, cfg),
        _ => classify_streaming(log, library, method, cfg),
    }
}

fn classify_streaming(log: &SessionLog, library: Arc<PatchLibrary>, method: Method, cfg: &PipelineConfig) -> Result<ReplayOutput> {
    let mut session = SelectionSession::new(cfg.classifier_for(method), cfg.gesture, library)?;
    let first_frame = log
        .records
        .iter()
        .find_map(|r| match r {
            Record::Frame { t, boxes } => Some(log.scene_frame(*t, boxes)),
            _ => None,
        })
        .transpose()?;
    let mut frame: Option<SceneFrame> = None;
    let mut out = ReplayOutput { predictions: PredictionLog::default(), per_sample: Vec::new() };
    for r in &log.records {
        match r {
            Record::Frame { t, boxes } => frame = Some(log.scene_frame(*t, boxes)?),
            Record::Gaze { t, x, y, conf } => {
                let current = frame
                    .as_ref()
                    .or(first_frame.as_ref())
                    .ok_or_else(|| Error::Log { line: 0, reason: "session has no frame records".into() })?;
                let mut predicted = None;
                for o in session.push(crate::model::GazeSample::new(*t, *x, *y, *conf), current)? {
                    match o {
                        SessionOutput::Prediction(p) => {
                            predicted = Some(p.label.clone());
                            out.predictions.records.push(PredictionRecord::Prediction { t: p.t, label: p.label, scores: p.scores });
                        }
                        SessionOutput::Selection(s) => {
                            out.predictions.records.push(PredictionRecord::selection(s.t, s.predicted));
                        }
                    }
                }
                out.per_sample.push(predicted);
            }
            Record::Selection { intended, .. } => session.set_intended(intended.clone()),
            _ => {}
        }
    }
    Ok(out)
}

fn classify_fixation(log: &SessionLog, cfg: &PipelineConfig) -> Result<ReplayOutput> {
    cfg.idt.validate()?;
    let gaze = log.gaze();
    let frames = log.frames()?;
    let labels = baseline_labels(&gaze, &frames, &cfg.idt, cfg.classifier.blink_confidence);
    let mut predictions = PredictionLog::default();
    let mut detector = GestureDetector::new(cfg.gesture);
    let mut last: Option<Label> = None;
    let mut at_onset: Option<Label> = None;
    for (g, label) in gaze.iter().zip(&labels) {
        let was_closed = detector.is_closed();
        let gesture = detector.push(g.t, g.confidence);
        if !was_closed && detector.is_closed() {
            at_onset = last.clone();
        }
        if let Some(gi) = gesture {
            predictions.records.push(PredictionRecord::selection(gi.end_t, at_onset.take().flatten()));
        }
        if let Some(label) = label {
            last = Some(label.clone());
            predictions.records.push(PredictionRecord::Prediction { t: g.t, label: label.clone(), scores: Default::default() });
        }
    }
    Ok(ReplayOutput { predictions, per_sample: labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{make_scene, simulate_session, NoiseProfile, Phase, SessionScript, SimulationConfig};

    #[test]
    fn method_parsing() {
        assert_eq!("emd".parse::<Method>().unwrap(), Method::Emd);
        assert_eq!("bhatt".parse::<Method>().unwrap(), Method::Bhatt);
        assert!("euclid".parse::<Method>().is_err());
    }

    #[test]
    fn replay_is_deterministic_and_aligned() {
        let cfg = SimulationConfig::benchmark();
        let scene = make_scene(&cfg.scene, 3).unwrap();
        let script = SessionScript {
            phases: vec![Phase::Observe { object_id: 2, duration: 1.5 }, Phase::Select { object_id: 2, duration: 1.0 }],
        };
        let sim = simulate_session(&scene, &script, &NoiseProfile::clean(), 3).unwrap();
        let lib = Arc::new(scene.library.clone());
        for method in Method::ALL {
            let a = classify_log(&sim.log, lib.clone(), method, &PipelineConfig::default()).unwrap();
            let b = classify_log(&sim.log, lib.clone(), method, &PipelineConfig::default()).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.per_sample.len(), sim.log.gaze().len());
            let sel: Vec<_> = a.predictions.selections().collect();
            assert_eq!(sel.len(), 1, "{method}");
            assert_eq!(sel[0].1.as_deref(), Some("cup"), "{method}");
        }
    }
}
