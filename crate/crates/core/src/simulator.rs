//! Synthetic scenes and scripted gaze sessions with ground truth.
//!
//! Gaze during an observe phase fixates salient pixels of the object
//! (Gaussian rank law over the top-`l` ranking), with white noise, a
//! calibration offset and Poisson-timed ballistic jumps between salient
//! regions. Look-away phases fixate background points clear of every box.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::classifier::derive_seed;
use crate::distributions::{gaussian_rank_index, patch_pixel_to_world};
use crate::error::{Error, Result};
use crate::model::{BoundingBox, ObjectId, Point, SceneFrame};
use crate::patch::{GrayPatch, PatchLibrary};
use crate::saliency::{rank_pixels, saliency_map, RankedPixels, SaliencyConfig};
use crate::sessionlog::{round_time, BoxRecord, Meta, MetaObject, Record, SessionLog};

const STREAM_PATCH: u64 = 1;
const STREAM_GAZE: u64 = 2;
const STREAM_JITTER: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PatchSource {
    Generated {
        blobs: usize,
        texture_seed: u64,
    },
    /// PGM/PPM file; relative paths resolve against the config file.
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub id: ObjectId,
    pub label: String,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub patch: PatchSource,
}

fn default_frame_rate() -> f64 {
    30.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub frame_width: u32,
    pub frame_height: u32,
    /// Rate of emitted frame records.
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    pub objects: Vec<ObjectSpec>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frame_width == 0 || self.frame_height == 0 {
            return Err(Error::InvalidConfig("frame_width/frame_height must be > 0".into()));
        }
        if !(self.frame_rate > 0.0) {
            return Err(Error::InvalidConfig("frame_rate must be > 0".into()));
        }
        if self.objects.is_empty() {
            return Err(Error::InvalidConfig("objects must not be empty".into()));
        }
        for o in &self.objects {
            let b = BoundingBox::new(o.id, o.label.clone(), o.cx, o.cy, o.w, o.h)
                .map_err(|e| Error::InvalidConfig(format!("objects[{}]: {e}", o.id)))?;
            if b.left() < 0.0
                || b.top() < 0.0
                || b.left() + b.w > self.frame_width as f64
                || b.top() + b.h > self.frame_height as f64
            {
                return Err(Error::InvalidConfig(format!("objects[{}]: box outside the frame", o.id)));
            }
            if let PatchSource::Generated { blobs, .. } = o.patch {
                if blobs == 0 {
                    return Err(Error::InvalidConfig(format!("objects[{}].patch.blobs must be >= 1", o.id)));
                }
            }
        }
        let mut ids: Vec<_> = self.objects.iter().map(|o| o.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.objects.len() {
            return Err(Error::InvalidConfig("objects: duplicate id".into()));
        }
        Ok(())
    }

    /// Makes relative patch paths absolute against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for o in &mut self.objects {
            if let PatchSource::File { path } = &mut o.patch {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Phase {
    Observe { object_id: ObjectId, duration: f64 },
    LookAway { duration: f64 },
    Select { object_id: ObjectId, duration: f64 },
}

impl Phase {
    pub fn duration(&self) -> f64 {
        match *self {
            Phase::Observe { duration, .. } | Phase::LookAway { duration } | Phase::Select { duration, .. } => duration,
        }
    }

    pub fn object(&self) -> Option<ObjectId> {
        match *self {
            Phase::Observe { object_id, .. } | Phase::Select { object_id, .. } => Some(object_id),
            Phase::LookAway { .. } => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionScript {
    pub phases: Vec<Phase>,
}

impl SessionScript {
    pub fn validate(&self, scene: &SceneSpec) -> Result<()> {
        if self.phases.is_empty() {
            return Err(Error::InvalidConfig("phases must not be empty".into()));
        }
        for (i, p) in self.phases.iter().enumerate() {
            if !(p.duration() > 0.0) || !p.duration().is_finite() {
                return Err(Error::InvalidConfig(format!("phases[{i}].duration must be > 0")));
            }
            if let Some(id) = p.object() {
                if !scene.objects.iter().any(|o| o.id == id) {
                    return Err(Error::InvalidConfig(format!("phases[{i}].object_id {id} is not in the scene")));
                }
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.phases.iter().map(Phase::duration).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftPoint {
    pub t: f64,
    pub offset: [f64; 2],
}

/// Constant `[dx, dy]` or a piecewise-constant schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CalibrationOffset {
    Constant([f64; 2]),
    Drift(Vec<DriftPoint>),
}

impl Default for CalibrationOffset {
    fn default() -> Self {
        CalibrationOffset::Constant([0.0, 0.0])
    }
}

impl CalibrationOffset {
    pub fn at(&self, t: f64) -> [f64; 2] {
        match self {
            CalibrationOffset::Constant(o) => *o,
            CalibrationOffset::Drift(points) => points
                .iter()
                .take_while(|p| p.t <= t)
                .last()
                .or(points.first())
                .map_or([0.0, 0.0], |p| p.offset),
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            CalibrationOffset::Constant(o) => o.to_vec(),
            CalibrationOffset::Drift(points) => points.iter().flat_map(|p| [p.t, p.offset[0], p.offset[1]]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseProfile {
    /// Per-sample isotropic gaze noise, px.
    pub gaze_noise_sigma: f64,
    pub calibration_offset: CalibrationOffset,
    /// Per-frame box jitter as a fraction of w/h.
    pub bbox_jitter_pct: f64,
    /// Intra-object saccades per second.
    pub saccade_rate: f64,
    pub sample_rate: f64,
    /// Closure durations (s) of successive select phases, cycled.
    pub blink_schedule: Vec<f64>,
    /// Number of salient pixels gaze targets are drawn from.
    pub salient_pixels: usize,
    /// Minimum jump of an intra-object saccade, as a fraction of min(w, h).
    pub min_saccade_jump: f64,
    /// Clearance (px) between look-away targets and every box's circumcircle.
    pub look_away_clearance: f64,
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self {
            gaze_noise_sigma: 0.0,
            calibration_offset: CalibrationOffset::default(),
            bbox_jitter_pct: 0.0,
            saccade_rate: 0.0,
            sample_rate: 120.0,
            blink_schedule: vec![0.6],
            salient_pixels: 200,
            min_saccade_jump: 0.25,
            look_away_clearance: 120.0,
        }
    }
}

impl NoiseProfile {
    /// Zero noise, no saccades.
    pub fn clean() -> Self {
        Self::default()
    }

    /// Benchmark profile: sigma 4 px, offset 15 px, 10% jitter, 1.5 saccades/s.
    pub fn benchmark() -> Self {
        Self {
            gaze_noise_sigma: 4.0,
            calibration_offset: CalibrationOffset::Constant([12.0, -9.0]),
            bbox_jitter_pct: 0.10,
            saccade_rate: 1.5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let non_negative = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be a finite value >= 0")))
            }
        };
        non_negative("gaze_noise_sigma", self.gaze_noise_sigma)?;
        non_negative("saccade_rate", self.saccade_rate)?;
        non_negative("min_saccade_jump", self.min_saccade_jump)?;
        non_negative("look_away_clearance", self.look_away_clearance)?;
        if !(0.0..0.5).contains(&self.bbox_jitter_pct) {
            return Err(Error::InvalidConfig("bbox_jitter_pct must be in [0, 0.5)".into()));
        }
        if !(self.sample_rate > 0.0) || !self.sample_rate.is_finite() {
            return Err(Error::InvalidConfig("sample_rate must be > 0".into()));
        }
        if self.saccade_rate >= self.sample_rate {
            return Err(Error::InvalidConfig("saccade_rate must be below sample_rate".into()));
        }
        if self.salient_pixels == 0 {
            return Err(Error::InvalidConfig("salient_pixels must be >= 1".into()));
        }
        if self.blink_schedule.iter().any(|b| !(*b > 0.0)) {
            return Err(Error::InvalidConfig("blink_schedule entries must be > 0".into()));
        }
        for v in self.calibration_offset.values() {
            if !v.is_finite() {
                return Err(Error::InvalidConfig("calibration_offset must be finite".into()));
            }
        }
        if let CalibrationOffset::Drift(points) = &self.calibration_offset {
            if points.windows(2).any(|w| w[1].t < w[0].t) {
                return Err(Error::InvalidConfig("calibration_offset drift times must be non-decreasing".into()));
            }
        }
        Ok(())
    }
}

/// Complete simulator input as read from a JSON config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub scene: SceneSpec,
    pub script: SessionScript,
    #[serde(default)]
    pub noise: NoiseProfile,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.script.validate(&self.scene)?;
        self.noise.validate()
    }

    /// Three objects on a table; each is observed for 10 s, then gaze leaves
    /// the objects for 10 s.
    pub fn benchmark() -> Self {
        let object = |id, label: &str, cx, cy, w, h| ObjectSpec {
            id,
            label: label.into(),
            cx,
            cy,
            w,
            h,
            patch: PatchSource::Generated { blobs: 3, texture_seed: id as u64 },
        };
        let scene = SceneSpec {
            frame_width: 1280,
            frame_height: 720,
            frame_rate: 30.0,
            objects: vec![
                object(1, "bottle", 360.0, 440.0, 80.0, 170.0),
                object(2, "cup", 640.0, 460.0, 110.0, 110.0),
                object(3, "scissors", 920.0, 450.0, 150.0, 90.0),
            ],
        };
        let phases = (1..=3)
            .flat_map(|id| [Phase::Observe { object_id: id, duration: 10.0 }, Phase::LookAway { duration: 10.0 }])
            .collect();
        Self { scene, script: SessionScript { phases }, noise: NoiseProfile::benchmark() }
    }
}

/// Scene template plus everything the gaze model needs.
#[derive(Clone, Debug)]
pub struct Scene {
    pub spec: SceneSpec,
    pub template: SceneFrame,
    pub library: PatchLibrary,
    /// Saliency ranking of each object's patch, best first.
    pub ranked: BTreeMap<ObjectId, RankedPixels>,
}

impl Scene {
    pub fn bbox(&self, id: ObjectId) -> Result<&BoundingBox> {
        self.template.object(id).ok_or(Error::UnknownObject(id))
    }

    pub fn patch_ref(&self, id: ObjectId) -> Result<&str> {
        self.template.patch_refs.get(&id).map(String::as_str).ok_or(Error::MissingPatch(id))
    }

    /// Writes every patch into `dir` under its reference name.
    pub fn write_patches(&self, dir: impl AsRef<Path>) -> Result<()> {
        for (name, patch) in self.library.iter() {
            patch.write_pnm(dir.as_ref().join(name))?;
        }
        Ok(())
    }

    pub fn meta(&self) -> Meta {
        Meta {
            frame_width: self.spec.frame_width,
            frame_height: self.spec.frame_height,
            objects: self
                .template
                .objects
                .iter()
                .map(|b| MetaObject { id: b.object_id, label: b.label.clone(), patch: self.template.patch_refs[&b.object_id].clone() })
                .collect(),
        }
    }
}

/// Textured-blob patch: smooth low-contrast background with `blobs`
/// Gaussian spots of high contrast.
pub fn generate_patch(width: usize, height: usize, blobs: usize, texture_seed: u64) -> Result<GrayPatch> {
    if width == 0 || height == 0 {
        return Err(Error::EmptyPatch);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(texture_seed, STREAM_PATCH, 0));
    let base: f64 = rng.random_range(95.0..135.0);
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.02..0.12),
                rng.random_range(0.02..0.12),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(2.0..5.0),
            )
        })
        .collect();
    let short = width.min(height) as f64;
    let mut spots: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(blobs);
    for _ in 0..blobs {
        let radius = short * rng.random_range(0.07..0.11);
        let margin = (1.5 * radius).min(short / 2.0 - 0.5);
        let mut best = None;
        let mut best_gap = f64::NEG_INFINITY;
        for _ in 0..64 {
            let x = rng.random_range(margin..=(width as f64 - margin).max(margin));
            let y = rng.random_range(margin..=(height as f64 - margin).max(margin));
            let gap = spots
                .iter()
                .map(|&(sx, sy, sr, _)| ((sx - x).hypot(sy - y)) / (sr + radius))
                .fold(f64::INFINITY, f64::min);
            if gap > best_gap {
                best_gap = gap;
                best = Some((x, y));
            }
            if gap >= 2.5 {
                break;
            }
        }
        let (x, y) = best.expect("at least one candidate");
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        spots.push((x, y, radius, sign * rng.random_range(80.0..110.0)));
    }
    let mut pixels = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (xf, yf) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut v = base;
            for &(fx, fy, phase, amp) in &waves {
                v += amp * (fx * xf + fy * yf + phase).sin();
            }
            for &(sx, sy, r, amp) in &spots {
                let d2 = (xf - sx).powi(2) + (yf - sy).powi(2);
                v += amp * (-d2 / (2.0 * r * r)).exp();
            }
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayPatch::from_gray(width, height, pixels)
}

/// Builds patches, boxes and saliency rankings for a scene.
pub fn make_scene(spec: &SceneSpec, seed: u64) -> Result<Scene> {
    spec.validate()?;
    let mut library = PatchLibrary::new();
    let mut objects = Vec::new();
    let mut refs = BTreeMap::new();
    let mut ranked = BTreeMap::new();
    let saliency = SaliencyConfig::default();
    for o in &spec.objects {
        let patch = match &o.patch {
            PatchSource::Generated { blobs, texture_seed } => {
                let w = o.w.round().max(1.0) as usize;
                let h = o.h.round().max(1.0) as usize;
                generate_patch(w, h, *blobs, derive_seed(seed, *texture_seed, o.id as u64))?
            }
            PatchSource::File { path } => GrayPatch::read_pnm(path)
                .map_err(|e| Error::InvalidConfig(format!("objects[{}].patch: {}: {e}", o.id, path.display())))?,
        };
        let ext = if patch.color().is_some() { "ppm" } else { "pgm" };
        let name = format!("obj{}.{ext}", o.id);
        ranked.insert(o.id, rank_pixels(&saliency_map(&patch, &saliency)?, patch.width() * patch.height())?);
        library.insert(name.clone(), patch);
        refs.insert(o.id, name);
        objects.push(BoundingBox::new(o.id, o.label.clone(), o.cx, o.cy, o.w, o.h)?);
    }
    let template = SceneFrame::new(0.0, spec.frame_width, spec.frame_height, objects, refs)?;
    Ok(Scene { spec: spec.clone(), template, library, ranked })
}

/// Simulated session: the log plus per-gaze-sample truth in memory.
#[derive(Clone, Debug)]
pub struct SimulatedSession {
    pub log: SessionLog,
    pub truth: Vec<Option<String>>,
    pub saccade: Vec<bool>,
    /// Index of the phase each gaze sample belongs to.
    pub phase_of_sample: Vec<usize>,
}

struct GazeModel<'a> {
    scene: &'a Scene,
    noise: &'a NoiseProfile,
    rng: ChaCha8Rng,
    normal: Normal<f64>,
    /// Current fixation target without noise or offset.
    target: Option<Point>,
}

impl GazeModel<'_> {
    fn salient_target(&mut self, id: ObjectId) -> Result<Point> {
        let bbox = self.scene.bbox(id)?;
        let ranked = &self.scene.ranked[&id];
        let l_eff = self.noise.salient_pixels.min(ranked.len());
        let z: f64 = self.rng.sample(StandardNormal);
        let px = ranked.pixels[gaussian_rank_index(z, l_eff)];
        Ok(patch_pixel_to_world(bbox, ranked.width, ranked.height, px.x, px.y))
    }

    /// Salient target at least the configured jump away from `from`; the
    /// farthest of a bounded number of draws otherwise.
    fn distinct_salient_target(&mut self, id: ObjectId, from: Point) -> Result<Point> {
        let bbox = self.scene.bbox(id)?;
        let min_jump = self.noise.min_saccade_jump * bbox.w.min(bbox.h);
        let mut best = self.salient_target(id)?;
        for _ in 0..32 {
            if best.distance(&from) >= min_jump {
                break;
            }
            let cand = self.salient_target(id)?;
            if cand.distance(&from) > best.distance(&from) {
                best = cand;
            }
        }
        Ok(best)
    }

    fn background_target(&mut self) -> Result<Point> {
        let (fw, fh) = (self.scene.spec.frame_width as f64, self.scene.spec.frame_height as f64);
        let margin = 20.0f64.min(fw / 4.0).min(fh / 4.0);
        for _ in 0..10_000 {
            let p = Point::new(self.rng.random_range(margin..fw - margin), self.rng.random_range(margin..fh - margin));
            let clear = self.scene.template.objects.iter().all(|b| {
                b.center_distance(p) >= 0.5 * b.w.hypot(b.h) + self.noise.look_away_clearance
            });
            if clear {
                return Ok(p);
            }
        }
        Err(Error::InvalidConfig("look_away: no background region clear of every object".into()))
    }

    fn noisy(&mut self, p: Point, offset: [f64; 2]) -> Point {
        Point::new(
            p.x + offset[0] + self.normal.sample(&mut self.rng),
            p.y + offset[1] + self.normal.sample(&mut self.rng),
        )
    }

    fn ballistic_len(&mut self) -> usize {
        self.rng.random_range(2..=4)
    }

    fn saccade_now(&mut self) -> bool {
        let p = self.noise.saccade_rate / self.noise.sample_rate;
        p > 0.0 && self.rng.random_bool(p.min(1.0))
    }
}

#[derive(Clone, Copy, Debug)]
struct SampleSpec {
    point: Point,
    conf: f64,
    saccade: bool,
    truth: Option<ObjectId>,
    phase: usize,
}

fn round_px(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

/// Runs a script over a scene and returns the session log with ground truth.
pub fn simulate_session(scene: &Scene, script: &SessionScript, noise: &NoiseProfile, seed: u64) -> Result<SimulatedSession> {
    script.validate(&scene.spec)?;
    noise.validate()?;
    let mut model = GazeModel {
        scene,
        noise,
        rng: ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_GAZE, 0)),
        normal: Normal::new(0.0, noise.gaze_noise_sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?,
        target: None,
    };
    let rate = noise.sample_rate;
    let time_of = |i: usize| round_time(i as f64 / rate);

    let mut samples: Vec<SampleSpec> = Vec::new();
    // (gaze index of the reopen sample, intended object)
    let mut selections: Vec<(usize, ObjectId)> = Vec::new();
    let mut phase_start = 0.0f64;
    let mut select_count = 0usize;
    for (pi, phase) in script.phases.iter().enumerate() {
        let phase_end = phase_start + phase.duration();
        let n_look = ((phase_end * rate).round() as usize).saturating_sub((phase_start * rate).round() as usize);
        let blink = match phase {
            Phase::Select { .. } if !noise.blink_schedule.is_empty() => {
                let b = noise.blink_schedule[select_count % noise.blink_schedule.len()];
                select_count += 1;
                Some(b)
            }
            _ => None,
        };
        let object = phase.object();
        let mut emitted = 0usize;
        let first = samples.len();

        // inter-phase transition: ballistic, truth None
        let new_target = match object {
            Some(id) => model.salient_target(id)?,
            None => model.background_target()?,
        };
        if let Some(from) = model.target {
            let n = model.ballistic_len().min(n_look);
            for s in 1..=n {
                let f = s as f64 / (n + 1) as f64;
                let t = time_of(samples.len());
                let o = noise.calibration_offset.at(t);
                let p = Point::new(from.x + f * (new_target.x - from.x) + o[0], from.y + f * (new_target.y - from.y) + o[1]);
                samples.push(SampleSpec { point: p, conf: 1.0, saccade: true, truth: None, phase: pi });
            }
            emitted = n;
        }
        model.target = Some(new_target);

        while emitted < n_look {
            let here = model.target.expect("target set above");
            if model.saccade_now() {
                let next = match object {
                    Some(id) => model.distinct_salient_target(id, here)?,
                    None => model.background_target()?,
                };
                let n = model.ballistic_len().min(n_look - emitted);
                for s in 1..=n {
                    let f = s as f64 / (n + 1) as f64;
                    let t = time_of(samples.len());
                    let o = noise.calibration_offset.at(t);
                    let p = Point::new(here.x + f * (next.x - here.x) + o[0], here.y + f * (next.y - here.y) + o[1]);
                    samples.push(SampleSpec { point: p, conf: 1.0, saccade: true, truth: object, phase: pi });
                }
                emitted += n;
                model.target = Some(next);
                continue;
            }
            let t = time_of(samples.len());
            let p = model.noisy(here, noise.calibration_offset.at(t));
            samples.push(SampleSpec { point: p, conf: 1.0, saccade: false, truth: object, phase: pi });
            emitted += 1;
        }

        let mut end = phase_end;
        if let (Some(b), Some(id)) = (blink, object) {
            end += b;
            let n_blink = ((end * rate).round() as usize).saturating_sub(first + emitted);
            let last = samples.last().map_or_else(|| model.target.expect("target set"), |s| s.point);
            for _ in 0..n_blink {
                samples.push(SampleSpec { point: last, conf: 0.0, saccade: false, truth: object, phase: pi });
            }
            selections.push((samples.len(), id));
        }
        phase_start = end;
    }
    // a trailing selection needs a reopen sample
    if selections.last().is_some_and(|&(i, _)| i == samples.len()) {
        let last = *samples.last().expect("selection implies samples");
        let here = model.target.expect("target set");
        let t = time_of(samples.len());
        let p = model.noisy(here, noise.calibration_offset.at(t));
        samples.push(SampleSpec { point: p, conf: 1.0, saccade: false, truth: last.truth, phase: last.phase });
    }

    let label = |id: Option<ObjectId>| -> Option<String> {
        id.map(|id| scene.template.object(id).expect("validated").label.clone())
    };

    // frames
    let mut jitter_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_JITTER, 0));
    let last_t = samples.last().map_or(0.0, |_| time_of(samples.len() - 1));
    let n_frames = (last_t * scene.spec.frame_rate).floor() as usize + 1;
    let mut frames: Vec<(f64, Vec<BoxRecord>)> = Vec::with_capacity(n_frames);
    for j in 0..n_frames {
        let t = round_time(j as f64 / scene.spec.frame_rate);
        let jit = noise.bbox_jitter_pct;
        let boxes = scene
            .template
            .objects
            .iter()
            .map(|b| {
                let mut u = || if jit > 0.0 { jitter_rng.random_range(-1.0..=1.0) } else { 0.0 };
                let (uw, uh, ux, uy) = (u(), u(), u(), u());
                BoxRecord {
                    id: b.object_id,
                    cx: round_px(b.cx + jit * ux * b.w / 2.0),
                    cy: round_px(b.cy + jit * uy * b.h / 2.0),
                    w: round_px(b.w * (1.0 + jit * uw)),
                    h: round_px(b.h * (1.0 + jit * uh)),
                }
            })
            .collect();
        frames.push((t, boxes));
    }

    let mut log = SessionLog::new(scene.meta());
    let mut next_frame = 0usize;
    let mut next_selection = 0usize;
    for (i, s) in samples.iter().enumerate() {
        let t = time_of(i);
        while next_frame < frames.len() && frames[next_frame].0 <= t {
            let (ft, boxes) = frames[next_frame].clone();
            log.push(Record::Frame { t: ft, boxes });
            next_frame += 1;
        }
        log.push(Record::Gaze { t, x: round_px(s.point.x), y: round_px(s.point.y), conf: s.conf });
        log.push(Record::Truth { t, label: label(s.truth), saccade: s.saccade });
        while next_selection < selections.len() && selections[next_selection].0 == i {
            log.push(Record::Selection { t, intended: label(Some(selections[next_selection].1)) });
            next_selection += 1;
        }
    }

    Ok(SimulatedSession {
        log,
        truth: samples.iter().map(|s| label(s.truth)).collect(),
        saccade: samples.iter().map(|s| s.saccade).collect(),
        phase_of_sample: samples.iter().map(|s| s.phase).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_object_spec() -> SceneSpec {
        SceneSpec {
            frame_width: 640,
            frame_height: 480,
            frame_rate: 30.0,
            objects: vec![ObjectSpec {
                id: 1,
                label: "cup".into(),
                cx: 320.0,
                cy: 300.0,
                w: 100.0,
                h: 100.0,
                patch: PatchSource::Generated { blobs: 3, texture_seed: 5 },
            }],
        }
    }

    /// Strict 8-neighbour maxima above half the global peak.
    fn strong_local_maxima(map: &crate::saliency::SaliencyMap) -> usize {
        let mut count = 0;
        for y in 1..map.height - 1 {
            for x in 1..map.width - 1 {
                let v = map.at(x, y);
                if v < 0.5 {
                    continue;
                }
                let mut is_max = true;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if (dx, dy) != (0, 0) && map.at((x as i64 + dx) as usize, (y as i64 + dy) as usize) >= v {
                            is_max = false;
                        }
                    }
                }
                count += is_max as usize;
            }
        }
        count
    }

    #[test]
    fn same_seed_same_patches() {
        let a = make_scene(&one_object_spec(), 7).unwrap();
        let b = make_scene(&one_object_spec(), 7).unwrap();
        assert_eq!(a.library.get("obj1.pgm"), b.library.get("obj1.pgm"));
        let c = make_scene(&one_object_spec(), 8).unwrap();
        assert_ne!(a.library.get("obj1.pgm"), c.library.get("obj1.pgm"));
    }

    #[test]
    fn three_blobs_give_three_maxima() {
        for seed in 0..20 {
            let patch = generate_patch(120, 100, 3, seed).unwrap();
            let map = saliency_map(&patch, &SaliencyConfig::default()).unwrap();
            assert!(strong_local_maxima(&map) >= 3, "seed {seed}");
        }
    }

    #[test]
    fn out_of_frame_box_is_rejected() {
        let mut spec = one_object_spec();
        spec.objects[0].cx = 620.0;
        assert!(make_scene(&spec, 0).is_err());
    }

    #[test]
    fn zero_jitter_keeps_boxes_constant() {
        let scene = make_scene(&one_object_spec(), 1).unwrap();
        let script = SessionScript { phases: vec![Phase::Observe { object_id: 1, duration: 1.0 }] };
        let sim = simulate_session(&scene, &script, &NoiseProfile::clean(), 3).unwrap();
        let frames = sim.log.frames().unwrap();
        assert!(frames.frames().len() >= 30);
        for f in frames.frames() {
            assert_eq!(f.objects[0], scene.template.objects[0]);
        }
    }

    #[test]
    fn offset_shifts_gaze_out_of_the_box() {
        let mut spec = one_object_spec();
        spec.objects[0].w = 60.0;
        spec.objects[0].h = 60.0;
        let scene = make_scene(&spec, 1).unwrap();
        let script = SessionScript { phases: vec![Phase::Observe { object_id: 1, duration: 5.0 }] };
        let shifted = NoiseProfile { calibration_offset: CalibrationOffset::Constant([12.0, -8.0]), ..NoiseProfile::clean() };
        let clean = simulate_session(&scene, &script, &NoiseProfile::clean(), 4).unwrap().log.gaze();
        let off = simulate_session(&scene, &script, &shifted, 4).unwrap().log.gaze();
        let bbox = &scene.template.objects[0];
        let mut expected_outside = 0;
        for (c, o) in clean.iter().zip(&off) {
            assert!((o.x - c.x - 12.0).abs() < 1e-3 && (o.y - c.y + 8.0).abs() < 1e-3);
            expected_outside += usize::from(!bbox.contains(Point::new(c.x + 12.0, c.y - 8.0)));
        }
        let outside = off.iter().filter(|g| !bbox.contains(g.point())).count();
        assert_eq!(outside, expected_outside);
        assert!(outside > 0, "offset leaves every sample inside the box");
    }

    #[test]
    fn clean_observe_samples_stay_in_box() {
        let scene = make_scene(&one_object_spec(), 1).unwrap();
        let script = SessionScript {
            phases: vec![
                Phase::Observe { object_id: 1, duration: 2.0 },
                Phase::LookAway { duration: 1.0 },
                Phase::Observe { object_id: 1, duration: 2.0 },
            ],
        };
        let sim = simulate_session(&scene, &script, &NoiseProfile::clean(), 11).unwrap();
        let gaze = sim.log.gaze();
        assert_eq!(gaze.len(), 600);
        let bbox = &scene.template.objects[0];
        for (g, truth) in gaze.iter().zip(&sim.truth) {
            if truth.is_some() {
                assert!(bbox.contains(g.point()));
            }
        }
        // phase boundaries exact to one sample: the look-away phase covers samples 240..360
        let none_run: Vec<usize> = (0..600).filter(|&i| sim.truth[i].is_none()).collect();
        assert_eq!(*none_run.first().unwrap(), 240);
        assert!(*none_run.last().unwrap() <= 364);
    }

    #[test]
    fn select_phase_appends_blink_and_selection() {
        let scene = make_scene(&one_object_spec(), 1).unwrap();
        let script = SessionScript { phases: vec![Phase::Select { object_id: 1, duration: 1.0 }, Phase::LookAway { duration: 0.5 }] };
        let sim = simulate_session(&scene, &script, &NoiseProfile::clean(), 2).unwrap();
        let gaze = sim.log.gaze();
        let closed = gaze.iter().filter(|g| g.confidence < 0.6).count();
        assert_eq!(closed, 72);
        let sel = sim.log.selections();
        assert_eq!(sel.len(), 1);
        assert_eq!(sel[0].1.as_deref(), Some("cup"));
        assert_eq!(sel[0].0, gaze[120 + 72].t);
        assert_eq!(gaze.len(), 120 + 72 + 60);
    }

    #[test]
    fn trailing_selection_gets_reopen_sample() {
        let scene = make_scene(&one_object_spec(), 1).unwrap();
        let script = SessionScript { phases: vec![Phase::Select { object_id: 1, duration: 1.0 }] };
        let sim = simulate_session(&scene, &script, &NoiseProfile::clean(), 2).unwrap();
        let gaze = sim.log.gaze();
        assert_eq!(gaze.last().unwrap().confidence, 1.0);
        assert_eq!(sim.log.selections()[0].0, gaze.last().unwrap().t);
    }

    #[test]
    fn determinism() {
        let cfg = SimulationConfig::benchmark();
        let scene = make_scene(&cfg.scene, 42).unwrap();
        let a = simulate_session(&scene, &cfg.script, &cfg.noise, 42).unwrap();
        let b = simulate_session(&scene, &cfg.script, &cfg.noise, 42).unwrap();
        assert_eq!(a.log.to_jsonl(), b.log.to_jsonl());
        assert_eq!(a.log.gaze().len(), 7200);
    }

    #[test]
    fn drift_offset_is_piecewise_constant() {
        let off = CalibrationOffset::Drift(vec![
            DriftPoint { t: 1.0, offset: [1.0, 2.0] },
            DriftPoint { t: 2.0, offset: [3.0, 4.0] },
        ]);
        assert_eq!(off.at(0.0), [1.0, 2.0]);
        assert_eq!(off.at(1.5), [1.0, 2.0]);
        assert_eq!(off.at(2.0), [3.0, 4.0]);
    }
}
