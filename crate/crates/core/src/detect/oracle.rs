//! Ground-truth detectors with optional, seeded degradation.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{MarkDetector, VehicleDetector};
use crate::model::{BBox, ClassSet, CountingLine, Detection, Frame};
use crate::synth::GroundTruth;
use crate::vr::{Mark, SegmentSpec, VrImage};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorNoise {
    /// Each box edge moves by a uniform integer in `[-jitter_px, jitter_px]`.
    pub jitter_px: u32,
    pub miss_rate: f64,
    /// Expected false boxes per call.
    pub spurious_rate: f64,
    pub seed: u64,
}

impl Default for DetectorNoise {
    fn default() -> Self {
        DetectorNoise {
            jitter_px: 0,
            miss_rate: 0.0,
            spurious_rate: 0.0,
            seed: 0,
        }
    }
}

impl DetectorNoise {
    pub fn is_zero(&self) -> bool {
        self.jitter_px == 0 && self.miss_rate == 0.0 && self.spurious_rate == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.miss_rate) {
            return Err(Error::invalid("miss_rate", "must be in [0, 1]"));
        }
        if !(self.spurious_rate >= 0.0 && self.spurious_rate.is_finite()) {
            return Err(Error::invalid("spurious_rate", "must be >= 0"));
        }
        Ok(())
    }
}

/// Exact marks for every crossing that overlaps the segment.
pub fn oracle_detect_marks(
    gt: &GroundTruth,
    segment_index: usize,
    spec: &SegmentSpec,
) -> Vec<Mark> {
    let start = spec.segment_start(segment_index);
    let rows = spec.segment_rows(segment_index, gt.meta.frame_count);
    if rows == 0 {
        return Vec::new();
    }
    let end = start + rows - 1;
    let width = gt.meta.width_px;
    let mut marks: Vec<Mark> = gt
        .crossings(spec.line)
        .into_iter()
        .filter_map(|c| {
            let (first, last) = c.frame_interval;
            if last < start || first > end {
                return None;
            }
            let y0 = (first.max(start) - start) as i32;
            let y1 = (last.min(end) - start) as i32 + 1;
            let bbox = BBox::new(c.x_extent.0, y0, c.x_extent.1, y1)?.clamp_to(width, rows as u32)?;
            Some(Mark::new(bbox, 1.0))
        })
        .collect();
    marks.sort_by_key(|m| (m.bbox.y0, m.bbox.x0));
    marks
}

fn frame_rng(seed: u64, frame_index: usize) -> ChaCha8Rng {
    // splitmix64 finaliser over (seed, frame)
    let mut z = seed ^ (frame_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

/// Boxes of every visible object whose class is in `classes`, degraded by
/// `noise`. Spurious boxes draw their labels from `classes` too. Output
/// depends only on the arguments.
pub fn oracle_detect_vehicles(
    gt: &GroundTruth,
    frame_index: usize,
    noise: &DetectorNoise,
    classes: &ClassSet,
) -> Vec<Detection> {
    let (w, h) = (gt.meta.width_px, gt.meta.height_px);
    let mut out: Vec<Detection> = gt
        .objects
        .iter()
        .filter(|o| classes.contains(&o.class_label))
        .filter_map(|o| {
            let b = o.bbox_at(frame_index)?.clamp_to(w, h)?;
            Some(Detection::new(b, o.class_label.clone(), 1.0))
        })
        .collect();
    if noise.is_zero() {
        return out;
    }

    let mut rng = frame_rng(noise.seed, frame_index);
    let j = noise.jitter_px as i32;
    out.retain_mut(|d| {
        let miss = rng.random_bool(noise.miss_rate);
        if j > 0 {
            let mut e = [d.bbox.x0, d.bbox.y0, d.bbox.x1, d.bbox.y1];
            for v in &mut e {
                *v += rng.random_range(-j..=j);
            }
            if e[2] <= e[0] {
                e[2] = e[0] + 1;
            }
            if e[3] <= e[1] {
                e[3] = e[1] + 1;
            }
            match BBox::new(e[0], e[1], e[2], e[3]).and_then(|b| b.clamp_to(w, h)) {
                Some(b) => d.bbox = b,
                None => return false,
            }
        }
        !miss
    });

    if noise.spurious_rate > 0.0 {
        let n = Poisson::new(noise.spurious_rate)
            .map(|p| p.sample(&mut rng) as usize)
            .unwrap_or(0);
        for _ in 0..n {
            let bw = rng.random_range(4..=w.clamp(4, 60)) as i32;
            let bh = rng.random_range(4..=h.clamp(4, 60)) as i32;
            let x = rng.random_range(0..w.max(1)) as i32;
            let y = rng.random_range(0..h.max(1)) as i32;
            let label = &classes.labels()[rng.random_range(0..classes.len())];
            let conf = rng.random_range(0.05..0.95);
            if let Some(b) = BBox::new(x, y, x + bw, y + bh).and_then(|b| b.clamp_to(w, h)) {
                out.push(Detection::new(b, label.clone(), conf));
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct OracleMarkDetector {
    gt: Arc<GroundTruth>,
    spec: SegmentSpec,
}

impl OracleMarkDetector {
    pub fn new(gt: Arc<GroundTruth>, spec: SegmentSpec) -> Self {
        OracleMarkDetector { gt, spec }
    }

    pub fn line(&self) -> CountingLine {
        self.spec.line
    }
}

impl MarkDetector for OracleMarkDetector {
    fn detect_marks(&self, vr: &VrImage) -> Result<Vec<Mark>> {
        Ok(oracle_detect_marks(&self.gt, vr.segment_index, &self.spec))
    }

    fn name(&self) -> &str {
        "oracle"
    }
}

#[derive(Debug, Clone)]
pub struct OracleVehicleDetector {
    gt: Arc<GroundTruth>,
    noise: DetectorNoise,
    classes: ClassSet,
}

impl OracleVehicleDetector {
    pub fn new(gt: Arc<GroundTruth>, noise: DetectorNoise) -> Result<Self> {
        noise.validate()?;
        Ok(OracleVehicleDetector {
            gt,
            noise,
            classes: ClassSet::default(),
        })
    }

    pub fn with_classes(mut self, classes: ClassSet) -> Self {
        self.classes = classes;
        self
    }
}

impl VehicleDetector for OracleVehicleDetector {
    fn detect_vehicles(&self, frame: &Frame) -> Result<Vec<Detection>> {
        Ok(oracle_detect_vehicles(&self.gt, frame.index, &self.noise, &self.classes))
    }

    fn name(&self) -> &str {
        "oracle"
    }
}
