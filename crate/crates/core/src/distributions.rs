//! Hypothetic and actual gaze distance distributions, their histograms and
//! signatures.
//!
//! Both distributions are radial: every point (salient pixel or measured
//! gaze) is reduced to its Euclidean distance from the bounding-box center.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoundingBox, GazeSample, Point};
use crate::saliency::RankedPixels;

/// Mass tolerance for normalized histograms and signatures.
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Number of top salient pixels eligible for sampling.
    pub l: usize,
    /// Hypothetic draws per object, and the gaze window length in samples.
    pub k: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { l: 200, k: 60, seed: 0 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l < 1 || self.k < 1 {
            return Err(Error::InvalidConfig("sampler.l and sampler.k must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceSource {
    Hypothetic,
    Actual,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceSample {
    pub values: Vec<f64>,
    pub source: DistanceSource,
}

/// Rank drawn for a standard normal variate `z` over a list of `l_eff` entries.
///
/// `|z|` is stretched so that three standard deviations cover the list.
pub fn gaussian_rank_index(z: f64, l_eff: usize) -> usize {
    let idx = (z.abs() * l_eff as f64 / 3.0).floor();
    // NaN and huge values both land on the last rank
    if idx.is_finite() && idx < (l_eff - 1) as f64 {
        idx as usize
    } else {
        l_eff - 1
    }
}

/// World position of the center of patch pixel `(x, y)` when the patch is
/// stretched over `bbox`.
pub fn patch_pixel_to_world(bbox: &BoundingBox, patch_w: usize, patch_h: usize, x: usize, y: usize) -> Point {
    Point::new(
        bbox.left() + (x as f64 + 0.5) * bbox.w / patch_w as f64,
        bbox.top() + (y as f64 + 0.5) * bbox.h / patch_h as f64,
    )
}

/// Draws `k` hypothetic gaze points (with replacement) from the top-`l`
/// ranked pixels using Gaussian rank selection.
pub fn sample_hypothetic_points<R: Rng + ?Sized>(
    ranked: &RankedPixels,
    bbox: &BoundingBox,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<Point>> {
    if ranked.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    cfg.validate()?;
    let l_eff = cfg.l.min(ranked.len());
    Ok((0..cfg.k)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            let px = ranked.pixels[gaussian_rank_index(z, l_eff)];
            patch_pixel_to_world(bbox, ranked.width, ranked.height, px.x, px.y)
        })
        .collect())
}

/// Hypothetic gaze distribution: distances of the sampled points to the box center.
pub fn sample_hypothetic<R: Rng + ?Sized>(
    ranked: &RankedPixels,
    bbox: &BoundingBox,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<DistanceSample> {
    let points = sample_hypothetic_points(ranked, bbox, cfg, rng)?;
    Ok(DistanceSample {
        values: points.iter().map(|p| bbox.center_distance(*p)).collect(),
        source: DistanceSource::Hypothetic,
    })
}

/// Actual gaze distribution over the most recent `k` samples.
pub fn window_actual(gaze: &[GazeSample], bbox: &BoundingBox, k: usize) -> Result<DistanceSample> {
    if k == 0 || gaze.len() < k {
        return Err(Error::WindowNotFull { have: gaze.len(), need: k });
    }
    Ok(DistanceSample {
        values: gaze[gaze.len() - k..]
            .iter()
            .map(|g| bbox.center_distance(g.point()))
            .collect(),
        source: DistanceSource::Actual,
    })
}

/// Shared histogram binning.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinSpec {
    pub bins: usize,
    pub max_distance: f64,
}

impl Default for BinSpec {
    fn default() -> Self {
        Self { bins: 64, max_distance: 512.0 }
    }
}

impl BinSpec {
    pub fn edges(&self) -> Result<BinEdges> {
        BinEdges::uniform(self.bins, 0.0, self.max_distance)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BinEdges(Vec<f64>);

impl BinEdges {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidArgument("need at least two bin edges".into()));
        }
        if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("bin edges must be finite and strictly ascending".into()));
        }
        Ok(Self(edges))
    }

    pub fn uniform(bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(Error::InvalidArgument(format!("cannot build {bins} bins over [{lo}, {hi}]")));
        }
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..bins).map(|i| lo + i as f64 * width).collect();
        edges.push(hi);
        Self::new(edges)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn bin_count(&self) -> usize {
        self.0.len() - 1
    }

    /// Lower edge inclusive; values outside the range clamp to the end bins.
    pub fn bin_of(&self, v: f64) -> usize {
        let upper = self.0.partition_point(|&e| e <= v);
        upper.saturating_sub(1).min(self.bin_count() - 1)
    }

    pub fn midpoint(&self, bin: usize) -> f64 {
        0.5 * (self.0[bin] + self.0[bin + 1])
    }
}

impl TryFrom<Vec<f64>> for BinEdges {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BinEdges> for Vec<f64> {
    fn from(e: BinEdges) -> Self {
        e.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceHistogram {
    pub edges: BinEdges,
    pub counts: Vec<f64>,
    pub normalized: bool,
}

impl DistanceHistogram {
    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Midpoint-weighted mean.
    pub fn mean(&self) -> f64 {
        self.counts
            .iter()
            .enumerate()
            .map(|(i, c)| c * self.edges.midpoint(i))
            .sum::<f64>()
            / self.total()
    }
}

/// Bins `d` with lower-inclusive edges and returns unit-mass counts.
pub fn histogram(d: &DistanceSample, edges: &BinEdges) -> Result<DistanceHistogram> {
    if d.values.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let mut counts = vec![0.0; edges.bin_count()];
    for &v in &d.values {
        counts[edges.bin_of(v)] += 1.0;
    }
    let n = d.values.len() as f64;
    for c in &mut counts {
        *c /= n;
    }
    Ok(DistanceHistogram { edges: edges.clone(), counts, normalized: true })
}

/// Weighted 1D point set: bin midpoints carrying the bin masses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    positions: Vec<f64>,
    masses: Vec<f64>,
}

impl Signature {
    /// Validates ascending positions, non-negative masses and unit total mass.
    /// Zero-mass entries are dropped.
    pub fn new(positions: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if positions.len() != masses.len() {
            return Err(Error::LengthMismatch("signature positions vs masses".into()));
        }
        if positions.windows(2).any(|w| !(w[0] < w[1])) || positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("signature positions must be strictly ascending".into()));
        }
        if masses.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::InvalidArgument("signature masses must be non-negative".into()));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::UnnormalizedSignature(total));
        }
        let (positions, masses) = positions.into_iter().zip(masses).filter(|(_, m)| *m > 0.0).unzip();
        Ok(Self { positions, masses })
    }

    /// A single unit mass at `position`.
    pub fn point_mass(position: f64) -> Self {
        Self { positions: vec![position], masses: vec![1.0] }
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.positions.iter().zip(&self.masses).map(|(p, m)| p * m).sum()
    }

    /// Every position moved by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            positions: self.positions.iter().map(|p| p + delta).collect(),
            masses: self.masses.clone(),
        }
    }
}

pub fn to_signature(h: &DistanceHistogram) -> Result<Signature> {
    if h.counts.iter().all(|&c| c == 0.0) {
        return Err(Error::EmptyDistribution);
    }
    if !h.normalized {
        return Err(Error::UnnormalizedSignature(h.total()));
    }
    let (positions, masses) = h
        .counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0.0)
        .map(|(i, &c)| (h.edges.midpoint(i), c))
        .unzip();
    Signature::new(positions, masses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saliency::RankedPixel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ranked_line(n: usize) -> RankedPixels {
        RankedPixels {
            width: n,
            height: 1,
            pixels: (0..n)
                .map(|x| RankedPixel { x, y: 0, salience: 1.0 - x as f64 / n as f64 })
                .collect(),
        }
    }

    #[test]
    fn single_ranked_pixel_repeats() {
        let ranked = ranked_line(1);
        let bbox = BoundingBox::new(0, "x", 10.0, 10.0, 20.0, 20.0).unwrap();
        let cfg = SamplerConfig { l: 50, k: 17, seed: 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = sample_hypothetic(&ranked, &bbox, &cfg, &mut rng).unwrap();
        assert_eq!(d.values.len(), 17);
        let expected = bbox.center_distance(Point::new(10.0, 10.0));
        assert!(d.values.iter().all(|&v| v == expected));
    }

    #[test]
    fn same_seed_same_draws() {
        let ranked = ranked_line(300);
        let bbox = BoundingBox::new(0, "x", 150.0, 0.5, 300.0, 1.0).unwrap();
        let cfg = SamplerConfig::default();
        let a = sample_hypothetic(&ranked, &bbox, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = sample_hypothetic(&ranked, &bbox, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_ranked_list_is_an_error() {
        let ranked = RankedPixels { width: 1, height: 1, pixels: vec![] };
        let bbox = BoundingBox::new(0, "x", 0.0, 0.0, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_hypothetic(&ranked, &bbox, &SamplerConfig::default(), &mut rng).is_err());
    }

    #[test]
    fn hypothetic_distances_are_realizable() {
        let ranked = ranked_line(40);
        let bbox = BoundingBox::new(0, "x", 20.0, 0.5, 40.0, 1.0).unwrap();
        let cfg = SamplerConfig { l: 25, k: 500, seed: 0 };
        let allowed: Vec<f64> = ranked.pixels[..25]
            .iter()
            .map(|p| bbox.center_distance(patch_pixel_to_world(&bbox, 40, 1, p.x, p.y)))
            .collect();
        let d = sample_hypothetic(&ranked, &bbox, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert!(d.values.iter().all(|v| allowed.contains(v)));
    }

    #[test]
    fn rank_index_edges() {
        assert_eq!(gaussian_rank_index(0.0, 10), 0);
        assert_eq!(gaussian_rank_index(-0.31, 10), 1);
        assert_eq!(gaussian_rank_index(2.99, 10), 9);
        assert_eq!(gaussian_rank_index(50.0, 10), 9);
        assert_eq!(gaussian_rank_index(f64::NAN, 10), 9);
        assert_eq!(gaussian_rank_index(1.0, 1), 0);
    }

    #[test]
    fn window_examples() {
        let bbox = BoundingBox::new(0, "x", 0.0, 0.0, 10.0, 10.0).unwrap();
        let at_center: Vec<_> = (0..5).map(|i| GazeSample::new(i as f64, 0.0, 0.0, 1.0)).collect();
        assert_eq!(window_actual(&at_center, &bbox, 5).unwrap().values, vec![0.0; 5]);
        let g = [GazeSample::new(0.0, 3.0, 4.0, 1.0)];
        assert_eq!(window_actual(&g, &bbox, 1).unwrap().values, vec![5.0]);
        assert!(matches!(
            window_actual(&g, &bbox, 2),
            Err(Error::WindowNotFull { have: 1, need: 2 })
        ));
    }

    #[test]
    fn window_slides_like_a_reslice() {
        let bbox = BoundingBox::new(0, "x", 1.0, 2.0, 10.0, 10.0).unwrap();
        let stream: Vec<_> = (0..30)
            .map(|i| GazeSample::new(i as f64, (i * 7 % 11) as f64, (i * 3 % 5) as f64, 1.0))
            .collect();
        let k = 8;
        for end in k..=stream.len() {
            let got = window_actual(&stream[..end], &bbox, k).unwrap().values;
            let expected: Vec<f64> = stream[end - k..end].iter().map(|g| bbox.center_distance(g.point())).collect();
            assert_eq!(got, expected);
        }
    }

    #[test]
    fn histogram_conventions() {
        let edges = BinEdges::new(vec![0.0, 8.0, 16.0, 24.0]).unwrap();
        let d = |v: Vec<f64>| DistanceSample { values: v, source: DistanceSource::Actual };

        let h = histogram(&d(vec![1.0, 2.0, 7.9]), &edges).unwrap();
        assert_eq!(h.counts, vec![1.0, 0.0, 0.0]);

        let h = histogram(&d(vec![8.0]), &edges).unwrap();
        assert_eq!(h.counts, vec![0.0, 1.0, 0.0]);

        // last edge inclusive, overflow clamps
        let h = histogram(&d(vec![24.0, 1000.0]), &edges).unwrap();
        assert_eq!(h.counts, vec![0.0, 0.0, 1.0]);

        assert!(matches!(histogram(&d(vec![]), &edges), Err(Error::EmptyDistribution)));
    }

    #[test]
    fn histogram_matches_linear_scan() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let edges = BinSpec::default().edges().unwrap();
        let e = edges.as_slice();
        let values: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..600.0)).collect();
        let h = histogram(&DistanceSample { values: values.clone(), source: DistanceSource::Actual }, &edges).unwrap();
        let mut counts = vec![0usize; 64];
        for v in values {
            let mut bin = 63;
            for i in 0..64 {
                if v >= e[i] && v < e[i + 1] {
                    bin = i;
                    break;
                }
            }
            counts[bin] += 1;
        }
        let expected: Vec<f64> = counts.iter().map(|&c| c as f64 / 1000.0).collect();
        assert_eq!(h.counts, expected);
    }

    #[test]
    fn signature_examples() {
        let edges = BinEdges::new(vec![0.0, 8.0, 16.0]).unwrap();
        let h = DistanceHistogram { edges: edges.clone(), counts: vec![1.0, 0.0], normalized: true };
        let s = to_signature(&h).unwrap();
        assert_eq!(s.positions(), &[4.0]);
        assert_eq!(s.masses(), &[1.0]);

        let edges = BinEdges::uniform(4, 0.0, 32.0).unwrap();
        let h = DistanceHistogram { edges, counts: vec![0.25; 4], normalized: true };
        let s = to_signature(&h).unwrap();
        assert_eq!(s.positions(), &[4.0, 12.0, 20.0, 28.0]);
        assert_eq!(s.masses(), &[0.25; 4]);

        let h = DistanceHistogram { edges: BinEdges::uniform(2, 0.0, 2.0).unwrap(), counts: vec![0.0, 0.0], normalized: true };
        assert!(to_signature(&h).is_err());
    }

    #[test]
    fn signature_rejects_bad_mass() {
        assert!(matches!(
            Signature::new(vec![1.0, 2.0], vec![0.5, 0.6]),
            Err(Error::UnnormalizedSignature(_))
        ));
        assert!(Signature::new(vec![2.0, 1.0], vec![0.5, 0.5]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn histogram_is_order_invariant(mut values in prop::collection::vec(0.0f64..700.0, 1..200), seed in any::<u64>()) {
                use rand::seq::SliceRandom;
                let edges = BinSpec::default().edges().unwrap();
                let a = histogram(&DistanceSample { values: values.clone(), source: DistanceSource::Actual }, &edges).unwrap();
                values.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
                let b = histogram(&DistanceSample { values, source: DistanceSource::Actual }, &edges).unwrap();
                prop_assert_eq!(a, b);
            }

            #[test]
            fn signature_preserves_mass_and_mean(values in prop::collection::vec(0.0f64..700.0, 1..200)) {
                let edges = BinSpec::default().edges().unwrap();
                let h = histogram(&DistanceSample { values, source: DistanceSource::Actual }, &edges).unwrap();
                let s = to_signature(&h).unwrap();
                prop_assert!((s.total_mass() - 1.0).abs() <= MASS_TOLERANCE);
                let hist_mean: f64 = h.counts.iter().enumerate().map(|(i, c)| c * h.edges.midpoint(i)).sum();
                prop_assert!((s.mean() - hist_mean).abs() <= 1e-9);
                // exact midpoint/mass recomputation
                let mut j = 0;
                for (i, &c) in h.counts.iter().enumerate() {
                    if c > 0.0 {
                        prop_assert_eq!(s.positions()[j], (h.edges.as_slice()[i] + h.edges.as_slice()[i + 1]) / 2.0);
                        prop_assert_eq!(s.masses()[j], c);
                        j += 1;
                    }
                }
                prop_assert_eq!(j, s.len());
            }
        }
    }
}
