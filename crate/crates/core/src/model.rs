//! Frames, detected objects and gaze samples in world-image pixel space.
//!
//! Coordinates have their origin at the top-left corner of the world image,
//! x growing right and y growing down. Gaze may be sub-pixel.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ObjectId = u32;

/// Object class name, or `None` for the empty class.
pub type Label = Option<String>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GazeSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl GazeSample {
    pub fn new(t: f64, x: f64, y: f64, confidence: f64) -> Self {
        Self { t, x, y, confidence }
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// A detected object: center, extent and class label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub object_id: ObjectId,
    pub label: String,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(
        object_id: ObjectId,
        label: impl Into<String>,
        cx: f64,
        cy: f64,
        w: f64,
        h: f64,
    ) -> Result<Self> {
        // NaN fails both comparisons too
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bounding box {object_id} needs positive extent, got {w}x{h}"
            )));
        }
        Ok(Self { object_id, label: label.into(), cx, cy, w, h })
    }

    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }

    pub fn left(&self) -> f64 {
        self.cx - self.w / 2.0
    }

    pub fn top(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    /// Boundary inclusive.
    pub fn contains(&self, pt: Point) -> bool {
        (pt.x - self.cx).abs() <= self.w / 2.0 && (pt.y - self.cy).abs() <= self.h / 2.0
    }

    /// Euclidean distance from `pt` to the box center.
    pub fn center_distance(&self, pt: Point) -> f64 {
        (pt.x - self.cx).hypot(pt.y - self.cy)
    }

    /// Largest absolute change of center or extent against `other`.
    pub fn max_geometry_delta(&self, other: &BoundingBox) -> f64 {
        [
            (self.cx - other.cx).abs(),
            (self.cy - other.cy).abs(),
            (self.w - other.w).abs(),
            (self.h - other.h).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// One world-camera frame reduced to its detections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFrame {
    pub t: f64,
    pub frame_width: u32,
    pub frame_height: u32,
    pub objects: Vec<BoundingBox>,
    /// object id -> patch image reference (a key into a [`crate::patch::PatchLibrary`]).
    pub patch_refs: BTreeMap<ObjectId, String>,
}

impl SceneFrame {
    pub fn new(
        t: f64,
        frame_width: u32,
        frame_height: u32,
        objects: Vec<BoundingBox>,
        patch_refs: BTreeMap<ObjectId, String>,
    ) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for b in &objects {
            if !seen.insert(b.object_id) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate object id {} in frame",
                    b.object_id
                )));
            }
        }
        Ok(Self { t, frame_width, frame_height, objects, patch_refs })
    }

    pub fn object(&self, id: ObjectId) -> Option<&BoundingBox> {
        self.objects.iter().find(|b| b.object_id == id)
    }

    /// Boxes whose label equals `label`.
    pub fn objects_labelled<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a BoundingBox> {
        self.objects.iter().filter(move |b| b.label == label)
    }
}

/// Time-ordered frames with "latest frame at or before t" lookup.
#[derive(Clone, Debug, Default)]
pub struct FrameTimeline {
    frames: Vec<SceneFrame>,
}

impl FrameTimeline {
    pub fn new(mut frames: Vec<SceneFrame>) -> Self {
        frames.sort_by(|a, b| a.t.total_cmp(&b.t));
        Self { frames }
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[SceneFrame] {
        &self.frames
    }

    /// Latest frame with `frame.t <= t`; samples before the first frame see the first frame.
    pub fn at(&self, t: f64) -> Option<&SceneFrame> {
        let idx = self.frames.partition_point(|f| f.t <= t);
        self.frames.get(idx.saturating_sub(1))
    }
}
