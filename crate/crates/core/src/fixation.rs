//! Dispersion-threshold (I-DT) fixation detection and the
//! fixation-center-in-box intention baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrameTimeline, GazeSample, Label, Point, SceneFrame};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Fixation,
    Saccade,
}

/// A fixation or saccade spanning samples `start..end`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EyeEvent {
    pub kind: EventKind,
    pub start_t: f64,
    pub end_t: f64,
    pub start: usize,
    pub end: usize,
    /// Mean gaze point, fixations only.
    pub centroid: Option<Point>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DispersionMetric {
    /// `(max x - min x) + (max y - min y)`
    SumOfExtents,
    /// `max(max x - min x, max y - min y)`
    MaxOfExtents,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdtConfig {
    /// px
    pub dispersion_threshold: f64,
    /// s
    pub min_duration: f64,
    pub dispersion: DispersionMetric,
}

impl Default for IdtConfig {
    fn default() -> Self {
        Self { dispersion_threshold: 25.0, min_duration: 0.100, dispersion: DispersionMetric::SumOfExtents }
    }
}

impl IdtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dispersion_threshold > 0.0) || !(self.min_duration > 0.0) {
            return Err(Error::InvalidConfig("idt dispersion_threshold and min_duration must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Extent {
    min_x: f64,
    max_x: f64,
    min_y: f64,
    max_y: f64,
}

impl Extent {
    fn of(g: &GazeSample) -> Self {
        Self { min_x: g.x, max_x: g.x, min_y: g.y, max_y: g.y }
    }

    fn add(&mut self, g: &GazeSample) {
        self.min_x = self.min_x.min(g.x);
        self.max_x = self.max_x.max(g.x);
        self.min_y = self.min_y.min(g.y);
        self.max_y = self.max_y.max(g.y);
    }

    fn dispersion(&self, metric: DispersionMetric) -> f64 {
        let (dx, dy) = (self.max_x - self.min_x, self.max_y - self.min_y);
        match metric {
            DispersionMetric::SumOfExtents => dx + dy,
            DispersionMetric::MaxOfExtents => dx.max(dy),
        }
    }
}

/// Slack for sample timestamps that are rounded decimals.
const TIME_SLACK: f64 = 1e-9;

/// Classic I-DT: open a window covering `min_duration`, grow it while the
/// dispersion stays within the threshold and emit it as a fixation; samples
/// outside fixations form saccade events. Events tile the input.
pub fn idt_detect(gaze: &[GazeSample], cfg: &IdtConfig) -> Vec<EyeEvent> {
    let n = gaze.len();
    let mut fixations: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    let mut j = 0;
    while i < n {
        // smallest window starting at i that spans min_duration
        j = j.max(i);
        while j < n && gaze[j].t - gaze[i].t < cfg.min_duration - TIME_SLACK {
            j += 1;
        }
        if j >= n {
            break;
        }
        let mut ext = Extent::of(&gaze[i]);
        for g in &gaze[i + 1..=j] {
            ext.add(g);
        }
        if ext.dispersion(cfg.dispersion) <= cfg.dispersion_threshold {
            let mut end = j + 1;
            while end < n {
                let mut grown = ext;
                grown.add(&gaze[end]);
                if grown.dispersion(cfg.dispersion) > cfg.dispersion_threshold {
                    break;
                }
                ext = grown;
                end += 1;
            }
            fixations.push((i, end));
            i = end;
        } else {
            i += 1;
        }
    }
    tile(gaze, &fixations)
}

fn boundary_time(gaze: &[GazeSample], idx: usize) -> f64 {
    if let Some(g) = gaze.get(idx) {
        return g.t;
    }
    let last = gaze[gaze.len() - 1].t;
    match gaze.len() {
        1 => last.next_up(),
        n => {
            let step = last - gaze[n - 2].t;
            if step > 0.0 {
                last + step
            } else {
                last.next_up()
            }
        }
    }
}

fn tile(gaze: &[GazeSample], fixations: &[(usize, usize)]) -> Vec<EyeEvent> {
    let mut events = Vec::new();
    let mut cursor = 0;
    let saccade = |from: usize, to: usize, events: &mut Vec<EyeEvent>| {
        if from < to {
            events.push(EyeEvent {
                kind: EventKind::Saccade,
                start_t: boundary_time(gaze, from),
                end_t: boundary_time(gaze, to),
                start: from,
                end: to,
                centroid: None,
            });
        }
    };
    for &(s, e) in fixations {
        saccade(cursor, s, &mut events);
        let m = (e - s) as f64;
        let centroid = Point::new(
            gaze[s..e].iter().map(|g| g.x).sum::<f64>() / m,
            gaze[s..e].iter().map(|g| g.y).sum::<f64>() / m,
        );
        events.push(EyeEvent {
            kind: EventKind::Fixation,
            start_t: boundary_time(gaze, s),
            end_t: boundary_time(gaze, e),
            start: s,
            end: e,
            centroid: Some(centroid),
        });
        cursor = e;
    }
    saccade(cursor, gaze.len(), &mut events);
    events
}

/// Label of the lowest-id box containing the fixation centroid; saccades map to `None`.
pub fn fixation_intent(event: &EyeEvent, frame: &SceneFrame) -> Label {
    let centroid = match (event.kind, event.centroid) {
        (EventKind::Fixation, Some(c)) => c,
        _ => return None,
    };
    frame
        .objects
        .iter()
        .filter(|b| b.contains(centroid))
        .min_by_key(|b| b.object_id)
        .map(|b| b.label.clone())
}

/// Per-sample baseline output. Blink samples (confidence below
/// `blink_confidence`) are removed before detection and get no prediction
/// (`None`); every other sample carries the label of its event, judged
/// against the frame current at the fixation's last sample.
pub fn baseline_labels(
    gaze: &[GazeSample],
    frames: &FrameTimeline,
    cfg: &IdtConfig,
    blink_confidence: f64,
) -> Vec<Option<Label>> {
    let kept: Vec<usize> = (0..gaze.len()).filter(|&i| gaze[i].confidence >= blink_confidence).collect();
    let samples: Vec<GazeSample> = kept.iter().map(|&i| gaze[i]).collect();
    let mut out = vec![None; gaze.len()];
    for event in idt_detect(&samples, cfg) {
        let label = match event.kind {
            EventKind::Saccade => None,
            EventKind::Fixation => frames
                .at(samples[event.end - 1].t)
                .and_then(|f| fixation_intent(&event, f)),
        };
        for &orig in &kept[event.start..event.end] {
            out[orig] = Some(label.clone());
        }
    }
    out
}
