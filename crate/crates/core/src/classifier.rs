//! 1-NN object selection with null rejection over a sliding gaze window.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    histogram, sample_hypothetic_points, to_signature, window_actual, BinEdges, BinSpec,
    DistanceHistogram, DistanceSample, DistanceSource, SamplerConfig, Signature,
};
use crate::error::{Error, Result};
use crate::metrics::{bhattacharyya, emd, kl_divergence, DEFAULT_EPS};
use crate::model::{BoundingBox, GazeSample, ObjectId, Point, SceneFrame};
use crate::patch::PatchLibrary;
use crate::saliency::{rank_pixels, saliency_map, RankedPixels, SaliencyConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Emd,
    Kl,
    #[serde(alias = "bhatt")]
    Bhattacharyya,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Emd, Metric::Kl, Metric::Bhattacharyya];

    /// Rejection threshold used when the config leaves it unset.
    pub fn default_threshold(self) -> f64 {
        match self {
            Metric::Emd => 48.0,
            Metric::Kl => 18.0,
            Metric::Bhattacharyya => 4.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Emd => "emd",
            Metric::Kl => "kl",
            Metric::Bhattacharyya => "bhattacharyya",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// Largest accepted score of the nearest object; `None` picks the metric default.
    pub rejection_threshold: Option<f64>,
    pub metric: Metric,
    pub sampler: SamplerConfig,
    pub bins: BinSpec,
    /// Explicit bin edges; overrides `bins` when present.
    pub bin_edges: Option<BinEdges>,
    /// Redraw hypothetic samples every this many frames; `None` redraws
    /// only when the bounding box moves.
    pub resample_hypothetic_every: Option<u64>,
    /// Box change (px, any of cx/cy/w/h) that invalidates a cached signature.
    pub cache_tolerance: f64,
    /// Samples below this confidence are blinks and never enter the window.
    pub blink_confidence: f64,
    pub kl_eps: f64,
    pub saliency: SaliencyConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            rejection_threshold: None,
            metric: Metric::Emd,
            sampler: SamplerConfig::default(),
            bins: BinSpec::default(),
            bin_edges: None,
            resample_hypothetic_every: None,
            cache_tolerance: 1.0,
            blink_confidence: 0.6,
            kl_eps: DEFAULT_EPS,
            saliency: SaliencyConfig::default(),
        }
    }
}

impl ClassifierConfig {
    pub fn with_metric(metric: Metric) -> Self {
        Self { metric, ..Self::default() }
    }

    pub fn threshold(&self) -> f64 {
        self.rejection_threshold.unwrap_or_else(|| self.metric.default_threshold())
    }

    pub fn edges(&self) -> Result<BinEdges> {
        match &self.bin_edges {
            Some(e) => Ok(e.clone()),
            None => self.bins.edges(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        self.edges()?;
        if !(self.threshold() > 0.0) {
            return Err(Error::InvalidConfig("rejection_threshold must be > 0".into()));
        }
        if !(self.kl_eps > 0.0) {
            return Err(Error::InvalidConfig("kl_eps must be > 0".into()));
        }
        if self.resample_hypothetic_every == Some(0) {
            return Err(Error::InvalidConfig("resample_hypothetic_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-window decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntentPrediction {
    pub t: f64,
    pub label: Option<String>,
    pub object_id: Option<ObjectId>,
    pub scores: BTreeMap<ObjectId, f64>,
    pub window_mean_gaze: Point,
}

/// Hypothetic gaze of one object under one bounding box.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectHypothesis {
    pub bbox: BoundingBox,
    pub epoch: u64,
    /// Sampled hypothetic gaze points in world coordinates.
    pub points: Vec<Point>,
    pub histogram: DistanceHistogram,
    pub signature: Signature,
}

impl ObjectHypothesis {
    /// Mean over `window` of the distance from each gaze point to its
    /// nearest hypothetic point.
    pub fn mean_nearest_distance(&self, window: &[GazeSample]) -> f64 {
        let total: f64 = window
            .iter()
            .map(|g| {
                self.points
                    .iter()
                    .map(|p| p.distance(&g.point()))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        total / window.len() as f64
    }
}

/// SplitMix64 finalizer over a seed and two stream indices.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Builds and caches hypothetic signatures. Saliency ranking is cached per
/// patch; signatures per object until its box moves.
#[derive(Debug)]
pub struct HypothesisBuilder {
    library: Arc<PatchLibrary>,
    ranked: HashMap<String, Arc<RankedPixels>>,
    objects: HashMap<ObjectId, ObjectHypothesis>,
    builds: usize,
}

impl HypothesisBuilder {
    pub fn new(library: Arc<PatchLibrary>) -> Self {
        Self { library, ranked: HashMap::new(), objects: HashMap::new(), builds: 0 }
    }

    /// Number of signature (re)builds so far.
    pub fn builds(&self) -> usize {
        self.builds
    }

    pub fn library(&self) -> &Arc<PatchLibrary> {
        &self.library
    }

    fn ranked_for(&mut self, object_id: ObjectId, frame: &SceneFrame, cfg: &ClassifierConfig) -> Result<Arc<RankedPixels>> {
        let key = frame.patch_refs.get(&object_id).ok_or(Error::MissingPatch(object_id))?;
        if let Some(r) = self.ranked.get(key) {
            return Ok(r.clone());
        }
        let patch = self.library.get(key).ok_or(Error::MissingPatch(object_id))?;
        let map = saliency_map(patch, &cfg.saliency)?;
        let ranked = Arc::new(rank_pixels(&map, cfg.sampler.l)?);
        self.ranked.insert(key.clone(), ranked.clone());
        Ok(ranked)
    }

    /// Saliency, top-`l` ranking, `k` Gaussian-rank draws, histogram and
    /// signature for `object_id`; reused while the box stays within the
    /// cache tolerance and the epoch is unchanged.
    pub fn build_object_signature(
        &mut self,
        frame: &SceneFrame,
        object_id: ObjectId,
        cfg: &ClassifierConfig,
        epoch: u64,
    ) -> Result<&ObjectHypothesis> {
        let bbox = frame.object(object_id).ok_or(Error::UnknownObject(object_id))?;
        let fresh = self
            .objects
            .get(&object_id)
            .is_some_and(|h| h.epoch == epoch && h.bbox.max_geometry_delta(bbox) <= cfg.cache_tolerance);
        if !fresh {
            let ranked = self.ranked_for(object_id, frame, cfg)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.sampler.seed, object_id as u64, epoch));
            let points = sample_hypothetic_points(&ranked, bbox, &cfg.sampler, &mut rng)?;
            let sample = DistanceSample {
                values: points.iter().map(|p| bbox.center_distance(*p)).collect(),
                source: DistanceSource::Hypothetic,
            };
            let hist = histogram(&sample, &cfg.edges()?)?;
            let signature = to_signature(&hist)?;
            self.builds += 1;
            self.objects.insert(
                object_id,
                ObjectHypothesis { bbox: bbox.clone(), epoch, points, histogram: hist, signature },
            );
        }
        Ok(&self.objects[&object_id])
    }
}

/// Scores of every metric for one object and window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricScores {
    pub emd: f64,
    pub kl: f64,
    pub bhatt: f64,
    /// Mean gaze-to-nearest-hypothetic-point distance in px.
    pub euclidean: f64,
}

impl MetricScores {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Emd => self.emd,
            Metric::Kl => self.kl,
            Metric::Bhattacharyya => self.bhatt,
        }
    }
}

fn actual_histogram(window: &[GazeSample], bbox: &BoundingBox, cfg: &ClassifierConfig) -> Result<DistanceHistogram> {
    let actual = window_actual(window, bbox, window.len())?;
    histogram(&actual, &cfg.edges()?)
}

fn score(metric: Metric, actual: &DistanceHistogram, hyp: &ObjectHypothesis, cfg: &ClassifierConfig) -> Result<f64> {
    match metric {
        Metric::Emd => emd(&to_signature(actual)?, &hyp.signature),
        Metric::Kl => kl_divergence(actual, &hyp.histogram, cfg.kl_eps),
        Metric::Bhattacharyya => bhattacharyya(actual, &hyp.histogram),
    }
}

/// All metrics of `window` against one object's hypothesis.
pub fn score_all(window: &[GazeSample], hyp: &ObjectHypothesis, cfg: &ClassifierConfig) -> Result<MetricScores> {
    let actual = actual_histogram(window, &hyp.bbox, cfg)?;
    Ok(MetricScores {
        emd: score(Metric::Emd, &actual, hyp, cfg)?,
        kl: score(Metric::Kl, &actual, hyp, cfg)?,
        bhatt: score(Metric::Bhattacharyya, &actual, hyp, cfg)?,
        euclidean: hyp.mean_nearest_distance(window),
    })
}

fn mean_point(window: &[GazeSample]) -> Point {
    let n = window.len().max(1) as f64;
    Point::new(
        window.iter().map(|g| g.x).sum::<f64>() / n,
        window.iter().map(|g| g.y).sum::<f64>() / n,
    )
}

/// Nearest object under `scores`, or `None` when its score exceeds
/// `threshold`. Equal minima go to the box center nearest `mean_gaze`,
/// then to the lowest id.
pub fn select_object(
    scores: &BTreeMap<ObjectId, f64>,
    frame: &SceneFrame,
    mean_gaze: Point,
    threshold: f64,
) -> Option<ObjectId> {
    let min = scores.values().copied().fold(f64::INFINITY, f64::min);
    if !(min <= threshold) {
        return None;
    }
    scores
        .iter()
        .filter(|(_, &s)| s == min)
        .map(|(&id, _)| {
            let d = frame.object(id).map_or(f64::INFINITY, |b| b.center_distance(mean_gaze));
            (id, d)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(id, _)| id)
}

/// Scores every object of `frame` against a full gaze window.
pub fn classify_window(
    window: &[GazeSample],
    frame: &SceneFrame,
    cfg: &ClassifierConfig,
    builder: &mut HypothesisBuilder,
    epoch: u64,
) -> Result<IntentPrediction> {
    let k = cfg.sampler.k;
    if window.len() != k {
        return Err(Error::WindowNotFull { have: window.len(), need: k });
    }
    let mean = mean_point(window);
    let t = window.last().map_or(0.0, |g| g.t);
    let mut scores = BTreeMap::new();
    for bbox in &frame.objects {
        let hyp = builder.build_object_signature(frame, bbox.object_id, cfg, epoch)?;
        let actual = actual_histogram(window, bbox, cfg)?;
        scores.insert(bbox.object_id, score(cfg.metric, &actual, hyp, cfg)?);
    }
    let object_id = select_object(&scores, frame, mean, cfg.threshold());
    let label = object_id.and_then(|id| frame.object(id)).map(|b| b.label.clone());
    Ok(IntentPrediction { t, label, object_id, scores, window_mean_gaze: mean })
}

/// Rolling-window classifier for one gaze stream.
#[derive(Debug)]
pub struct IntentSession {
    cfg: ClassifierConfig,
    builder: HypothesisBuilder,
    buffer: VecDeque<GazeSample>,
    last_t: Option<f64>,
    frames_seen: u64,
    last_frame_t: Option<f64>,
}

impl IntentSession {
    pub fn new(cfg: ClassifierConfig, library: Arc<PatchLibrary>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            builder: HypothesisBuilder::new(library),
            buffer: VecDeque::with_capacity(cfg.sampler.k),
            cfg,
            last_t: None,
            frames_seen: 0,
            last_frame_t: None,
        })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.cfg
    }

    pub fn builder(&self) -> &HypothesisBuilder {
        &self.builder
    }

    pub fn is_blink(&self, sample: &GazeSample) -> bool {
        sample.confidence < self.cfg.blink_confidence
    }

    /// Current window, oldest first.
    pub fn window(&self) -> Vec<GazeSample> {
        self.buffer.iter().copied().collect()
    }

    fn epoch(&self) -> u64 {
        self.cfg.resample_hypothetic_every.map_or(0, |n| self.frames_seen / n)
    }

    /// Pushes `sample` and classifies once `k` non-blink samples are buffered.
    pub fn stream_update(&mut self, sample: GazeSample, frame: &SceneFrame) -> Result<Option<IntentPrediction>> {
        if let Some(prev) = self.last_t {
            if sample.t < prev {
                return Err(Error::NonMonotonicTimestamp { prev, got: sample.t });
            }
        }
        self.last_t = Some(sample.t);
        if self.last_frame_t != Some(frame.t) {
            if self.last_frame_t.is_some() {
                self.frames_seen += 1;
            }
            self.last_frame_t = Some(frame.t);
        }
        if self.is_blink(&sample) {
            return Ok(None);
        }
        if self.buffer.len() == self.cfg.sampler.k {
            self.buffer.pop_front();
        }
        self.buffer.push_back(sample);
        if self.buffer.len() < self.cfg.sampler.k {
            return Ok(None);
        }
        let window = self.buffer.make_contiguous().to_vec();
        let epoch = self.epoch();
        classify_window(&window, frame, &self.cfg, &mut self.builder, epoch).map(Some)
    }

    /// All metric scores of the current window for `object_id`, when the window is full.
    pub fn trace_scores(&mut self, frame: &SceneFrame, object_id: ObjectId) -> Result<Option<MetricScores>> {
        if self.buffer.len() < self.cfg.sampler.k {
            return Ok(None);
        }
        let window = self.buffer.make_contiguous().to_vec();
        let epoch = self.epoch();
        let cfg = self.cfg.clone();
        let hyp = self.builder.build_object_signature(frame, object_id, &cfg, epoch)?;
        score_all(&window, hyp, &cfg).map(Some)
    }
}
