//! Streaming intent classification combined with gesture confirmation: the
//! full select-by-gaze loop for one stream.

use std::sync::Arc;

use crate::classifier::{ClassifierConfig, IntentPrediction, IntentSession};
use crate::error::Result;
use crate::gesture::{confirm_selection, GestureConfig, GestureDetector, SelectionEvent};
use crate::model::{GazeSample, SceneFrame};
use crate::patch::PatchLibrary;

#[derive(Clone, Debug, PartialEq)]
pub enum SessionOutput {
    Prediction(IntentPrediction),
    Selection(SelectionEvent),
}

#[derive(Debug)]
pub struct SelectionSession {
    intent: IntentSession,
    gesture: GestureDetector,
    last_prediction: Option<IntentPrediction>,
    /// Last prediction before the closure in progress began.
    onset_prediction: Option<IntentPrediction>,
    intended: Option<String>,
}

impl SelectionSession {
    pub fn new(cfg: ClassifierConfig, gesture: GestureConfig, library: Arc<PatchLibrary>) -> Result<Self> {
        gesture.validate()?;
        Ok(Self {
            intent: IntentSession::new(cfg, library)?,
            gesture: GestureDetector::new(gesture),
            last_prediction: None,
            onset_prediction: None,
            intended: None,
        })
    }

    pub fn set_intended(&mut self, label: Option<String>) {
        self.intended = label;
    }

    pub fn intended(&self) -> Option<&str> {
        self.intended.as_deref()
    }

    pub fn intent(&mut self) -> &mut IntentSession {
        &mut self.intent
    }

    pub fn last_prediction(&self) -> Option<&IntentPrediction> {
        self.last_prediction.as_ref()
    }

    /// Feeds one sample. A selection, when a gesture completes on this
    /// sample, precedes the sample's own prediction.
    pub fn push(&mut self, sample: GazeSample, frame: &SceneFrame) -> Result<Vec<SessionOutput>> {
        let prediction = self.intent.stream_update(sample, frame)?;
        let mut out = Vec::new();
        let was_closed = self.gesture.is_closed();
        let gesture = self.gesture.push(sample.t, sample.confidence);
        if !was_closed && self.gesture.is_closed() {
            self.onset_prediction = self.last_prediction.clone();
        }
        if was_closed && !self.gesture.is_closed() {
            let onset = self.onset_prediction.take();
            if let Some(g) = gesture {
                out.push(SessionOutput::Selection(confirm_selection(&g, onset.as_ref(), self.intended.clone())));
            }
        }
        if let Some(p) = prediction {
            self.last_prediction = Some(p.clone());
            out.push(SessionOutput::Prediction(p));
        }
        Ok(out)
    }
}
