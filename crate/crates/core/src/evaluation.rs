//! Sample-level agreement, event-level deletion attribution and
//! interaction tallies.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FrameTimeline, GazeSample, Label};

/// Square count matrix over the labels seen in either sequence; `None` is a label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<Label>,
    /// `counts[truth][pred]`.
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_labels(pred: &[Label], truth: &[Label]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::LengthMismatch(format!("{} predictions vs {} truth labels", pred.len(), truth.len())));
        }
        let labels: Vec<Label> = pred.iter().chain(truth).cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let index: BTreeMap<&Label, usize> = labels.iter().enumerate().map(|(i, l)| (l, i)).collect();
        let mut counts = vec![vec![0u64; labels.len()]; labels.len()];
        for (p, t) in pred.iter().zip(truth) {
            counts[index[t]][index[p]] += 1;
        }
        Ok(Self { labels, counts })
    }

    pub fn from_counts(labels: Vec<Label>, counts: Vec<Vec<u64>>) -> Result<Self> {
        if counts.len() != labels.len() || counts.iter().any(|r| r.len() != labels.len()) {
            return Err(Error::ShapeMismatch("confusion matrix must be square over its labels".into()));
        }
        Ok(Self { labels, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn kappa(&self) -> Result<f64> {
        let n = self.total() as f64;
        if n == 0.0 {
            return Err(Error::InvalidArgument("kappa of an empty sequence".into()));
        }
        let k = self.labels.len();
        let agree: u64 = (0..k).map(|i| self.counts[i][i]).sum();
        let p_o = agree as f64 / n;
        let p_e: f64 = (0..k)
            .map(|i| {
                let row: u64 = self.counts[i].iter().sum();
                let col: u64 = self.counts.iter().map(|r| r[i]).sum();
                (row as f64 / n) * (col as f64 / n)
            })
            .sum();
        if p_e >= 1.0 {
            return Ok(if p_o >= 1.0 { 1.0 } else { 0.0 });
        }
        Ok((p_o - p_e) / (1.0 - p_e))
    }
}

pub fn cohens_kappa(pred: &[Label], truth: &[Label]) -> Result<f64> {
    ConfusionMatrix::from_labels(pred, truth)?.kappa()
}

/// Kappa over the samples where a prediction exists.
pub fn kappa_on_predicted(pred: &[Option<Label>], truth: &[Label]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(format!("{} predictions vs {} truth labels", pred.len(), truth.len())));
    }
    let (p, t): (Vec<Label>, Vec<Label>) =
        pred.iter().zip(truth).filter_map(|(p, t)| p.clone().map(|p| (p, t.clone()))).unzip();
    cohens_kappa(&p, &t)
}

/// Maximal run of one label over samples `start..end`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub label: Label,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

pub fn segment_events(labels: &[Label]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(seg) if seg.label == *l => seg.end = i + 1,
            _ => out.push(Segment { label: l.clone(), start: i, end: i + 1 }),
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodFamily {
    /// Distribution-similarity pipelines (EMD, KL, Bhattacharyya).
    Similarity,
    Fixation,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventCounts {
    pub total: usize,
    pub correct: usize,
    /// `None` where the cause does not apply to the method.
    pub deletion_algo: Option<usize>,
    pub deletion_bbox: usize,
    pub deletion_saccade: usize,
}

impl EventCounts {
    fn pct(&self, n: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * n as f64 / self.total as f64
        }
    }

    pub fn correct_pct(&self) -> f64 {
        self.pct(self.correct)
    }

    pub fn deletion_algo_pct(&self) -> Option<f64> {
        self.deletion_algo.map(|n| self.pct(n))
    }

    pub fn deletion_bbox_pct(&self) -> f64 {
        self.pct(self.deletion_bbox)
    }

    pub fn deletion_saccade_pct(&self) -> f64 {
        self.pct(self.deletion_saccade)
    }

    pub fn deletions(&self) -> usize {
        self.deletion_algo.unwrap_or(0) + self.deletion_bbox + self.deletion_saccade
    }

    pub fn add(&mut self, other: &EventCounts) {
        self.total += other.total;
        self.correct += other.correct;
        self.deletion_algo = match (self.deletion_algo, other.deletion_algo) {
            (Some(a), Some(b)) => Some(a + b),
            (a, b) => a.or(b),
        };
        self.deletion_bbox += other.deletion_bbox;
        self.deletion_saccade += other.deletion_saccade;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub method: MethodFamily,
    pub per_object: BTreeMap<String, EventCounts>,
    pub overall: EventCounts,
}

impl EventReport {
    pub fn empty(method: MethodFamily) -> Self {
        let zero = match method {
            MethodFamily::Similarity => Some(0),
            MethodFamily::Fixation => None,
        };
        Self { method, per_object: BTreeMap::new(), overall: EventCounts { deletion_algo: zero, ..Default::default() } }
    }

    /// Sums reports of several sessions of the same method.
    pub fn merge(&mut self, other: &EventReport) {
        for (label, c) in &other.per_object {
            self.per_object
                .entry(label.clone())
                .or_insert_with(|| EventCounts { deletion_algo: c.deletion_algo.map(|_| 0), ..Default::default() })
                .add(c);
        }
        self.overall.add(&other.overall);
    }

    /// Table rows: object, total, correct, deletion causes, percentages.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "object,total,correct,deletion_algo,deletion_bbox,deletion_saccade,correct_pct,deletion_algo_pct,deletion_bbox_pct,deletion_saccade_pct\n",
        );
        let rows = self.per_object.iter().map(|(k, v)| (k.as_str(), v)).chain(std::iter::once(("all", &self.overall)));
        for (name, c) in rows {
            let na = |v: Option<String>| v.unwrap_or_else(|| "n/a".into());
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.3},{},{:.3},{:.3}\n",
                csv_field(name),
                c.total,
                c.correct,
                na(c.deletion_algo.map(|n| n.to_string())),
                c.deletion_bbox,
                c.deletion_saccade,
                c.correct_pct(),
                na(c.deletion_algo_pct().map(|p| format!("{p:.3}"))),
                c.deletion_bbox_pct(),
                c.deletion_saccade_pct(),
            ));
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Per-sample inputs of [`event_analysis`], all aligned by index.
#[derive(Clone, Copy, Debug)]
pub struct EventInputs<'a> {
    /// Predicted label; `None` for rejection and for samples without a prediction.
    pub pred: &'a [Label],
    pub truth: &'a [Label],
    pub gaze: &'a [GazeSample],
    pub frames: &'a FrameTimeline,
    pub saccade: &'a [bool],
}

/// Scores every on-object truth event.
///
/// An event is correct when at least half of its samples carry its label
/// in `pred`. A deletion is blamed on the box when more than half of its
/// gaze lies outside every box of that label, else on saccades when more
/// than half is saccade-masked, else on the algorithm. The fixation method
/// has no separate algorithm cause: its only decision is the box test, so
/// residual deletions count against the box.
pub fn event_analysis(inputs: EventInputs<'_>, method: MethodFamily) -> Result<EventReport> {
    let n = inputs.truth.len();
    for (name, len) in [("pred", inputs.pred.len()), ("gaze", inputs.gaze.len()), ("saccade", inputs.saccade.len())] {
        if len != n {
            return Err(Error::LengthMismatch(format!("{name} has {len} samples, truth has {n}")));
        }
    }
    let mut report = EventReport::empty(method);
    for seg in segment_events(inputs.truth) {
        let Some(label) = seg.label.as_deref() else { continue };
        let len = seg.len();
        let hits = (seg.start..seg.end).filter(|&i| inputs.pred[i].as_deref() == Some(label)).count();
        let entry = report.per_object.entry(label.to_string()).or_insert_with(|| EventCounts {
            deletion_algo: match method {
                MethodFamily::Similarity => Some(0),
                MethodFamily::Fixation => None,
            },
            ..Default::default()
        });
        let mut this = EventCounts { total: 1, deletion_algo: entry.deletion_algo.map(|_| 0), ..Default::default() };
        if 2 * hits >= len {
            this.correct = 1;
        } else {
            let outside = (seg.start..seg.end)
                .filter(|&i| {
                    let g = inputs.gaze[i];
                    match inputs.frames.at(g.t) {
                        Some(frame) => !frame.objects_labelled(label).any(|b| b.contains(g.point())),
                        None => true,
                    }
                })
                .count();
            let masked = (seg.start..seg.end).filter(|&i| inputs.saccade[i]).count();
            if 2 * outside > len {
                this.deletion_bbox = 1;
            } else if 2 * masked > len {
                this.deletion_saccade = 1;
            } else {
                match this.deletion_algo.as_mut() {
                    Some(a) => *a += 1,
                    None => this.deletion_bbox = 1,
                }
            }
        }
        entry.add(&this);
        report.overall.add(&this);
    }
    Ok(report)
}

/// One selection attempt: what the user meant and what the system confirmed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub t: f64,
    pub intended: Label,
    /// `None` when no gesture was recognized; `Some(None)` when a gesture
    /// arrived before any prediction existed.
    pub predicted: Option<Label>,
}

/// Pairs attempt records with confirmed selections whose times agree within `tol`.
pub fn match_attempts(attempts: &[(f64, Label)], selections: &[(f64, Label)], tol: f64) -> Vec<Attempt> {
    let mut used = vec![false; selections.len()];
    attempts
        .iter()
        .map(|(t, intended)| {
            let found = selections
                .iter()
                .enumerate()
                .find(|(j, (st, _))| !used[*j] && (st - t).abs() <= tol)
                .map(|(j, (_, p))| (j, p.clone()));
            let predicted = found.map(|(j, p)| {
                used[j] = true;
                p
            });
            Attempt { t: *t, intended: intended.clone(), predicted }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionReport {
    pub attempts: usize,
    pub correct: usize,
    pub deletion_misclassification: usize,
    pub deletion_missed_detection: usize,
    /// `correct / (correct + misclassification)`; `null` when no selection
    /// carried a prediction.
    pub success_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn interaction_analysis(attempts: &[Attempt]) -> InteractionReport {
    let mut correct = 0;
    let mut mis = 0;
    let mut missed = 0;
    for a in attempts {
        match &a.predicted {
            None | Some(None) => missed += 1,
            Some(p) if *p == a.intended => correct += 1,
            Some(_) => mis += 1,
        }
    }
    let denom = correct + mis;
    InteractionReport {
        attempts: attempts.len(),
        correct,
        deletion_misclassification: mis,
        deletion_missed_detection: missed,
        success_rate: (denom > 0).then(|| correct as f64 / denom as f64),
        error: (denom == 0).then(|| "success rate undefined: no selection carried a prediction".to_string()),
    }
}
