//! JSONL session and prediction logs.
//!
//! A session log starts with exactly one `meta` record followed by
//! `frame`, `gaze`, `truth` and `selection` records in stream order.
//! Writing a parsed log reproduces it byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoundingBox, FrameTimeline, GazeSample, Label, ObjectId, SceneFrame};
use crate::patch::{GrayPatch, PatchLibrary};

/// Rounds a timestamp to microseconds.
pub fn round_time(t: f64) -> f64 {
    (t * 1e6).round() / 1e6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaObject {
    pub id: ObjectId,
    pub label: String,
    /// Patch image path, relative to the log file.
    pub patch: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub frame_width: u32,
    pub frame_height: u32,
    pub objects: Vec<MetaObject>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub id: ObjectId,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Record {
    Meta(Meta),
    Frame {
        t: f64,
        boxes: Vec<BoxRecord>,
    },
    Gaze {
        t: f64,
        x: f64,
        y: f64,
        conf: f64,
    },
    Truth {
        t: f64,
        label: Label,
        /// Sample belongs to a saccade (simulator ground truth).
        #[serde(default, skip_serializing_if = "is_false")]
        saccade: bool,
    },
    /// A selection attempt: the gesture end time and the object the user meant.
    Selection {
        t: f64,
        intended: Label,
    },
}

impl Record {
    fn kind(&self) -> &'static str {
        match self {
            Record::Meta(_) => "meta",
            Record::Frame { .. } => "frame",
            Record::Gaze { .. } => "gaze",
            Record::Truth { .. } => "truth",
            Record::Selection { .. } => "selection",
        }
    }

    fn time(&self) -> Option<f64> {
        match self {
            Record::Meta(_) => None,
            Record::Frame { t, .. } | Record::Gaze { t, .. } | Record::Truth { t, .. } | Record::Selection { t, .. } => {
                Some(*t)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionLog {
    pub meta: Meta,
    /// Everything after the meta line, in file order.
    pub records: Vec<Record>,
}

/// Per-sample ground truth aligned with the gaze records.
#[derive(Clone, Debug, PartialEq)]
pub struct TruthTrack {
    pub labels: Vec<Label>,
    pub saccade: Vec<bool>,
}

impl SessionLog {
    pub fn new(meta: Meta) -> Self {
        Self { meta, records: Vec::new() }
    }

    pub fn push(&mut self, record: Record) {
        self.records.push(record);
    }

    /// Parses and validates a JSONL log.
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut meta = None;
        let mut records = Vec::new();
        let mut last_t: BTreeMap<&'static str, f64> = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record =
                serde_json::from_str(&line).map_err(|e| Error::Log { line: lineno, reason: e.to_string() })?;
            if let Record::Meta(m) = record {
                if meta.is_some() || !records.is_empty() {
                    return Err(Error::Log { line: lineno, reason: "meta must be the single first record".into() });
                }
                meta = Some(m);
                continue;
            }
            let Some(m) = meta.as_ref() else {
                return Err(Error::Log { line: lineno, reason: "first record must be meta".into() });
            };
            if let Some(t) = record.time() {
                let kind = record.kind();
                if let Some(&prev) = last_t.get(kind) {
                    if t < prev {
                        return Err(Error::Log {
                            line: lineno,
                            reason: format!("{kind} timestamp {t} after {prev}"),
                        });
                    }
                }
                last_t.insert(kind, t);
            }
            if let Record::Frame { boxes, .. } = &record {
                let declared: BTreeSet<ObjectId> = m.objects.iter().map(|o| o.id).collect();
                if let Some(b) = boxes.iter().find(|b| !declared.contains(&b.id)) {
                    return Err(Error::Log { line: lineno, reason: format!("object {} not declared in meta", b.id) });
                }
            }
            records.push(record);
        }
        let meta = meta.ok_or(Error::Log { line: 0, reason: "empty log".into() })?;
        Ok(Self { meta, records })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        serde_json::to_writer(&mut w, &Record::Meta(self.meta.clone()))?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits utf-8")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn label_of(&self, id: ObjectId) -> Option<&str> {
        self.meta.objects.iter().find(|o| o.id == id).map(|o| o.label.as_str())
    }

    /// Converts a frame record into a scene frame with labels and patch refs from meta.
    pub fn scene_frame(&self, t: f64, boxes: &[BoxRecord]) -> Result<SceneFrame> {
        let mut objects = Vec::with_capacity(boxes.len());
        let mut refs = BTreeMap::new();
        for b in boxes {
            let obj = self
                .meta
                .objects
                .iter()
                .find(|o| o.id == b.id)
                .ok_or(Error::UnknownObject(b.id))?;
            objects.push(BoundingBox::new(b.id, obj.label.clone(), b.cx, b.cy, b.w, b.h)?);
            refs.insert(b.id, obj.patch.clone());
        }
        SceneFrame::new(t, self.meta.frame_width, self.meta.frame_height, objects, refs)
    }

    pub fn frames(&self) -> Result<FrameTimeline> {
        let frames = self
            .records
            .iter()
            .filter_map(|r| match r {
                Record::Frame { t, boxes } => Some(self.scene_frame(*t, boxes)),
                _ => None,
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FrameTimeline::new(frames))
    }

    pub fn gaze(&self) -> Vec<GazeSample> {
        self.records
            .iter()
            .filter_map(|r| match *r {
                Record::Gaze { t, x, y, conf } => Some(GazeSample::new(t, x, y, conf)),
                _ => None,
            })
            .collect()
    }

    /// Truth records, which must pair one-to-one with gaze records by timestamp.
    pub fn truth(&self) -> Result<TruthTrack> {
        let gaze = self.gaze();
        let mut labels = Vec::new();
        let mut saccade = Vec::new();
        for r in &self.records {
            if let Record::Truth { t, label, saccade: s } = r {
                match gaze.get(labels.len()) {
                    Some(g) if g.t == *t => {}
                    _ => return Err(Error::LengthMismatch(format!("truth record at t={t} has no matching gaze sample"))),
                }
                labels.push(label.clone());
                saccade.push(*s);
            }
        }
        if labels.len() != gaze.len() {
            return Err(Error::LengthMismatch(format!("{} truth records for {} gaze samples", labels.len(), gaze.len())));
        }
        Ok(TruthTrack { labels, saccade })
    }

    /// Selection attempts as `(t, intended)`.
    pub fn selections(&self) -> Vec<(f64, Label)> {
        self.records
            .iter()
            .filter_map(|r| match r {
                Record::Selection { t, intended } => Some((*t, intended.clone())),
                _ => None,
            })
            .collect()
    }

    /// Loads every patch named in meta, resolving paths against `base_dir`.
    pub fn load_patches(&self, base_dir: impl AsRef<Path>) -> Result<PatchLibrary> {
        let mut lib = PatchLibrary::new();
        for o in &self.meta.objects {
            let patch = GrayPatch::read_pnm(base_dir.as_ref().join(&o.patch))?;
            lib.insert(o.patch.clone(), patch);
        }
        Ok(lib)
    }
}

impl FromStr for SessionLog {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_reader(s.as_bytes())
    }
}

/// One line of a prediction log. Per-sample predictions carry no `type`
/// field; gesture-confirmed selections are tagged `selection_pred`.
#[derive(Clone, Debug, PartialEq)]
pub enum PredictionRecord {
    Prediction {
        t: f64,
        label: Label,
        scores: BTreeMap<ObjectId, f64>,
    },
    SelectionPred {
        t: f64,
        predicted: Label,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionLine {
    t: f64,
    label: Label,
    scores: BTreeMap<ObjectId, f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SelectionPredTag {
    SelectionPred,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectionPredLine {
    #[serde(rename = "type")]
    kind: SelectionPredTag,
    t: f64,
    predicted: Label,
}

impl Serialize for PredictionRecord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Prediction { t, label, scores } => {
                PredictionLine { t: *t, label: label.clone(), scores: scores.clone() }.serialize(s)
            }
            Self::SelectionPred { t, predicted } => {
                SelectionPredLine { kind: SelectionPredTag::SelectionPred, t: *t, predicted: predicted.clone() }.serialize(s)
            }
        }
    }
}

impl PredictionRecord {
    pub fn selection(t: f64, predicted: Label) -> Self {
        Self::SelectionPred { t, predicted }
    }

    pub fn parse(line: &str) -> std::result::Result<Self, serde_json::Error> {
        let value: serde_json::Value = serde_json::from_str(line)?;
        if value.get("type").is_some() {
            let r: SelectionPredLine = serde_json::from_str(line)?;
            Ok(Self::SelectionPred { t: r.t, predicted: r.predicted })
        } else {
            let r: PredictionLine = serde_json::from_str(line)?;
            Ok(Self::Prediction { t: r.t, label: r.label, scores: r.scores })
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PredictionLog {
    pub records: Vec<PredictionRecord>,
}

impl PredictionLog {
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut records = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                PredictionRecord::parse(&line).map_err(|e| Error::Log { line: idx + 1, reason: e.to_string() })?,
            );
        }
        Ok(Self { records })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits utf-8")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    /// `(t, label, scores)` of every per-sample prediction.
    pub fn predictions(&self) -> impl Iterator<Item = (f64, &Label, &BTreeMap<ObjectId, f64>)> {
        self.records.iter().filter_map(|r| match r {
            PredictionRecord::Prediction { t, label, scores } => Some((*t, label, scores)),
            _ => None,
        })
    }

    pub fn selections(&self) -> impl Iterator<Item = (f64, &Label)> {
        self.records.iter().filter_map(|r| match r {
            PredictionRecord::SelectionPred { t, predicted } => Some((*t, predicted)),
            _ => None,
        })
    }
}
