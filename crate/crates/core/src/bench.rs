//! Accuracy scoring against ground truth and the head-to-head comparison of
//! the visual-rhythm counter with the tracking baseline.
//!
//! Counting accuracy is `max(0, 100 * (1 - |predicted - actual| / actual))`,
//! 100 when both are zero. It ignores classes. Per-class figures come from
//! pairing predictions with ground-truth crossings one to one.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::baseline::{baseline_count, TrackerParams};
use crate::count::{count_video, CountReport, CountedVehicle, MatchParams};
use crate::detect::{DetectorSetup, Instrumented};
use crate::ingest::{ManifestVideo, VideoInput};
use crate::model::CountingLine;
use crate::synth::{CrossingEvent, GroundTruth};
use crate::vr::SegmentSpec;
use crate::{Error, Result};

pub const DEFAULT_MATCH_TOLERANCE_FRAMES: usize = 5;

/// Label used in the confusion table for an unpaired side.
pub const UNPAIRED: &str = "-";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyResult {
    pub predicted: usize,
    pub actual: usize,
    pub counting_accuracy_pct: f64,
    /// Correct pairs over `actual + predicted - correct` for each label.
    pub per_class_accuracy: BTreeMap<String, f64>,
    /// Ground-truth label to predicted label to count.
    pub confusion: BTreeMap<String, BTreeMap<String, usize>>,
    pub paired: usize,
    pub unpaired_predictions: usize,
    pub missed_crossings: usize,
}

pub fn counting_accuracy(predicted: usize, actual: usize) -> f64 {
    if actual == 0 {
        return if predicted == 0 { 100.0 } else { 0.0 };
    }
    let err = (predicted as f64 - actual as f64).abs() / actual as f64;
    (100.0 * (1.0 - err)).max(0.0)
}

fn overlaps(a: (i32, i32), b: (i32, i32)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

fn pair_distance(v: &CountedVehicle, e: &CrossingEvent, tolerance: usize) -> Option<usize> {
    let extent = v.x_extent()?;
    if !overlaps(extent, e.x_extent) {
        return None;
    }
    let f = v.global_frame;
    let dist = f.abs_diff(e.center_frame);
    // a straddling crossing is counted from whichever segment kept its mark,
    // so any frame inside the crossing interval is a legitimate pairing
    let inside = e.frame_interval.0 <= f && f <= e.frame_interval.1;
    (dist <= tolerance || inside).then_some(dist)
}

/// Scores a report against the crossings of `line`.
///
/// Predictions and crossings are paired greedily, nearest frame first, among
/// pairs whose column ranges overlap and whose frames lie within
/// `match_tolerance_frames` of the crossing center (or inside the crossing).
pub fn score_counts(
    report: &CountReport,
    gt: &GroundTruth,
    line: CountingLine,
    match_tolerance_frames: usize,
) -> AccuracyResult {
    let events = gt.crossings(line);
    let preds = &report.counted;

    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (pi, v) in preds.iter().enumerate() {
        for (ei, e) in events.iter().enumerate() {
            if let Some(d) = pair_distance(v, e, match_tolerance_frames) {
                pairs.push((d, pi, ei));
            }
        }
    }
    // order-independent tie-breaking: by event identity, then prediction content
    let pred_key = |i: usize| {
        let v = &preds[i];
        (v.global_frame, v.x_extent(), v.class_label.clone())
    };
    pairs.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(events[a.2].object_id.cmp(&events[b.2].object_id))
            .then_with(|| pred_key(a.1).cmp(&pred_key(b.1)))
    });

    let mut pred_used = vec![false; preds.len()];
    let mut event_used = vec![false; events.len()];
    let mut confusion: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut bump = |g: &str, p: &str| {
        *confusion
            .entry(g.to_string())
            .or_default()
            .entry(p.to_string())
            .or_default() += 1;
    };
    let mut paired = 0;
    for (_, pi, ei) in pairs {
        if pred_used[pi] || event_used[ei] {
            continue;
        }
        pred_used[pi] = true;
        event_used[ei] = true;
        paired += 1;
        bump(&events[ei].class_label, &preds[pi].class_label);
    }
    for (ei, e) in events.iter().enumerate() {
        if !event_used[ei] {
            bump(&e.class_label, UNPAIRED);
        }
    }
    for (pi, v) in preds.iter().enumerate() {
        if !pred_used[pi] {
            bump(UNPAIRED, &v.class_label);
        }
    }

    let mut actual_by: BTreeMap<String, usize> = BTreeMap::new();
    for e in &events {
        *actual_by.entry(e.class_label.clone()).or_default() += 1;
    }
    let mut predicted_by: BTreeMap<String, usize> = BTreeMap::new();
    for v in preds {
        *predicted_by.entry(v.class_label.clone()).or_default() += 1;
    }
    let mut per_class_accuracy = BTreeMap::new();
    for label in actual_by.keys().chain(predicted_by.keys()) {
        if per_class_accuracy.contains_key(label) {
            continue;
        }
        let a = actual_by.get(label).copied().unwrap_or(0);
        let p = predicted_by.get(label).copied().unwrap_or(0);
        let correct = confusion
            .get(label)
            .and_then(|row| row.get(label))
            .copied()
            .unwrap_or(0);
        let denom = a + p - correct;
        per_class_accuracy.insert(label.clone(), 100.0 * correct as f64 / denom as f64);
    }

    AccuracyResult {
        predicted: preds.len(),
        actual: events.len(),
        counting_accuracy_pct: counting_accuracy(preds.len(), events.len()),
        per_class_accuracy,
        confusion,
        paired,
        unpaired_predictions: pred_used.iter().filter(|u| !**u).count(),
        missed_crossings: event_used.iter().filter(|u| !**u).count(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemRun {
    pub system: String,
    pub wall_seconds: f64,
    pub fps: f64,
    /// Mark-detector plus vehicle-detector calls.
    pub detector_invocations: usize,
    pub mark_detector_calls: usize,
    pub vehicle_detector_calls: usize,
    pub total: usize,
}

impl SystemRun {
    fn new(report: &CountReport, frames: usize, wall: Duration, mark_calls: usize, vehicle_calls: usize) -> Self {
        let wall_seconds = wall.as_secs_f64();
        SystemRun {
            system: report.system.clone(),
            wall_seconds,
            fps: if wall_seconds > 0.0 { frames as f64 / wall_seconds } else { f64::INFINITY },
            detector_invocations: mark_calls + vehicle_calls,
            mark_detector_calls: mark_calls,
            vehicle_detector_calls: vehicle_calls,
            total: report.total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub frames_processed: usize,
    pub stub_latency_ms: f64,
    pub visual_rhythm: SystemRun,
    pub baseline: SystemRun,
    /// `visual_rhythm.fps / baseline.fps`.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComparisonConfig {
    pub spec: SegmentSpec,
    pub detectors: DetectorSetup,
    pub match_params: MatchParams,
    pub tracker: TrackerParams,
    /// Sleep added to every detector call on both sides.
    pub stub_latency_ms: f64,
    pub match_tolerance_frames: usize,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        ComparisonConfig {
            spec: SegmentSpec::default(),
            detectors: DetectorSetup::default(),
            match_params: MatchParams::default(),
            tracker: TrackerParams::default(),
            stub_latency_ms: 0.0,
            match_tolerance_frames: DEFAULT_MATCH_TOLERANCE_FRAMES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub bench: BenchResult,
    pub visual_rhythm: CountReport,
    pub baseline: CountReport,
    pub visual_rhythm_accuracy: Option<AccuracyResult>,
    pub baseline_accuracy: Option<AccuracyResult>,
}

fn labeled<T>(system: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::System {
        system: system.to_string(),
        source: Box::new(e),
    })
}

/// Runs both counters on `input` one after the other with the same vehicle detector.
pub fn compare_systems(
    input: &dyn VideoInput,
    gt: Option<Arc<GroundTruth>>,
    config: &ComparisonConfig,
) -> Result<Comparison> {
    if !(config.stub_latency_ms >= 0.0 && config.stub_latency_ms.is_finite()) {
        return Err(Error::invalid("stub_latency_ms", "must be >= 0"));
    }
    config.detectors.validate()?;
    let meta = input.meta();
    config.spec.validate(&meta)?;
    let latency = Duration::from_secs_f64(config.stub_latency_ms / 1000.0);
    let vehicle = config.detectors.vehicle_detector(gt.as_ref())?;
    let marks = config.detectors.mark_detector(gt.as_ref(), config.spec)?;

    let vr_marks = Instrumented::with_latency(&*marks, latency);
    let vr_vehicle = Instrumented::with_latency(&*vehicle, latency);
    let t0 = Instant::now();
    let vr_report = labeled(
        "visual-rhythm",
        count_video(input, &config.spec, &vr_marks, &vr_vehicle, &config.match_params),
    )?;
    let vr_run = SystemRun::new(&vr_report, meta.frame_count, t0.elapsed(), vr_marks.calls(), vr_vehicle.calls());

    let bl_vehicle = Instrumented::with_latency(&*vehicle, latency);
    let t0 = Instant::now();
    let bl_report = labeled(
        "tracking-baseline",
        baseline_count(input, config.spec.line, &bl_vehicle, &config.tracker),
    )?;
    let bl_run = SystemRun::new(&bl_report, meta.frame_count, t0.elapsed(), 0, bl_vehicle.calls());

    let score = |r: &CountReport| {
        gt.as_ref()
            .map(|g| score_counts(r, g, config.spec.line, config.match_tolerance_frames))
    };
    Ok(Comparison {
        bench: BenchResult {
            frames_processed: meta.frame_count,
            stub_latency_ms: config.stub_latency_ms,
            speedup: vr_run.fps / bl_run.fps,
            visual_rhythm: vr_run,
            baseline: bl_run,
        },
        visual_rhythm_accuracy: score(&vr_report),
        baseline_accuracy: score(&bl_report),
        visual_rhythm: vr_report,
        baseline: bl_report,
    })
}

/// [`compare_systems`] on a video described by a source manifest, with
/// optional ground truth for oracle detectors and accuracy scoring.
pub fn run_comparison(manifest: &Path, gt: Option<&Path>, config: &ComparisonConfig) -> Result<Comparison> {
    let video = ManifestVideo::open(manifest)?;
    let gt = gt.map(GroundTruth::load).transpose()?.map(Arc::new);
    if let Some(g) = &gt {
        if g.meta != video.meta() {
            return Err(Error::GeometryMismatch {
                field: "ground truth",
                declared: format!("{:?}", g.meta),
                found: format!("{:?}", video.meta()),
            });
        }
    }
    compare_systems(&video, gt, config)
}
