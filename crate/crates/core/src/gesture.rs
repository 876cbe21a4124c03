//! Eye-closure confirmation gesture.
//!
//! A gesture is a maximal run of low-confidence samples lasting between
//! `min_closed_duration` and `max_closed_duration`, followed by an open
//! sample. The run lasts from its first closed sample to the first open
//! sample after it; a run still open at the end of the stream emits nothing.

use serde::{Deserialize, Serialize};

use crate::classifier::IntentPrediction;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GestureConfig {
    pub closed_confidence_below: f64,
    /// s
    pub min_closed_duration: f64,
    /// s
    pub max_closed_duration: f64,
}

impl Default for GestureConfig {
    fn default() -> Self {
        Self { closed_confidence_below: 0.6, min_closed_duration: 0.5, max_closed_duration: 2.0 }
    }
}

impl GestureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.closed_confidence_below) {
            return Err(Error::InvalidConfig("closed_confidence_below must be in [0, 1]".into()));
        }
        if !(self.min_closed_duration > 0.0 && self.min_closed_duration <= self.max_closed_duration) {
            return Err(Error::InvalidConfig(
                "gesture durations need 0 < min_closed_duration <= max_closed_duration".into(),
            ));
        }
        Ok(())
    }

    fn in_band(&self, duration: f64) -> bool {
        // timestamps are rounded decimals; a 0.5 s closure must not read as 0.4999999
        const SLACK: f64 = 1e-9;
        duration >= self.min_closed_duration - SLACK && duration <= self.max_closed_duration + SLACK
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GestureInterval {
    /// First closed sample.
    pub start_t: f64,
    /// First open sample after the closure; the gesture fires here.
    pub end_t: f64,
}

impl GestureInterval {
    pub fn duration(&self) -> f64 {
        self.end_t - self.start_t
    }
}

/// Incremental detector for one stream.
#[derive(Clone, Debug)]
pub struct GestureDetector {
    cfg: GestureConfig,
    closed_since: Option<f64>,
}

impl GestureDetector {
    pub fn new(cfg: GestureConfig) -> Self {
        Self { cfg, closed_since: None }
    }

    pub fn is_closed(&self) -> bool {
        self.closed_since.is_some()
    }

    /// Start of the closure in progress.
    pub fn closed_since(&self) -> Option<f64> {
        self.closed_since
    }

    pub fn push(&mut self, t: f64, confidence: f64) -> Option<GestureInterval> {
        if confidence < self.cfg.closed_confidence_below {
            self.closed_since.get_or_insert(t);
            return None;
        }
        let start_t = self.closed_since.take()?;
        let g = GestureInterval { start_t, end_t: t };
        self.cfg.in_band(g.duration()).then_some(g)
    }
}

pub fn detect_gesture(stream: &[(f64, f64)], cfg: &GestureConfig) -> Vec<GestureInterval> {
    let mut det = GestureDetector::new(*cfg);
    stream.iter().filter_map(|&(t, c)| det.push(t, c)).collect()
}

/// The unit of interaction analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionEvent {
    /// Gesture end.
    pub t: f64,
    pub predicted: Option<String>,
    pub intended: Option<String>,
}

/// Binds a gesture to the last prediction made before the closure began.
pub fn confirm_selection(
    gesture: &GestureInterval,
    last_prediction_before_closure: Option<&IntentPrediction>,
    intended: Option<String>,
) -> SelectionEvent {
    let predicted = last_prediction_before_closure
        .filter(|p| p.t < gesture.start_t)
        .and_then(|p| p.label.clone());
    SelectionEvent { t: gesture.end_t, predicted, intended }
}
