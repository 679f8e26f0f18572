//! Frame-by-frame detect-and-track counter used as the comparison system.
//!
//! The detector runs on every frame. Detections are linked to tracks by greedy
//! IoU association and a track is counted once, the first time its vertical
//! center moves across the counting line between two observations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::count::{CountReport, CountedVehicle};
use crate::detect::VehicleDetector;
use crate::ingest::VideoInput;
use crate::model::{bbox_iou, BBox, CountingLine, Detection};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerParams {
    pub iou_threshold: f64,
    pub max_age_frames: usize,
    pub min_hits: usize,
}

impl Default for TrackerParams {
    fn default() -> Self {
        TrackerParams {
            iou_threshold: 0.3,
            max_age_frames: 5,
            min_hits: 2,
        }
    }
}

impl TrackerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::invalid("iou_threshold", "must be in (0, 1]"));
        }
        if self.max_age_frames < 1 {
            return Err(Error::invalid("max_age_frames", "must be >= 1"));
        }
        if self.min_hits < 1 {
            return Err(Error::invalid("min_hits", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    pub last_bbox: BBox,
    pub last_frame: usize,
    pub class_votes: BTreeMap<String, usize>,
    pub crossed: bool,
    /// `(frame, twice the vertical center)` per observation.
    pub history: Vec<(usize, i64)>,
}

impl Track {
    fn open(id: u64, d: &Detection, frame: usize) -> Self {
        Track {
            id,
            last_bbox: d.bbox,
            last_frame: frame,
            class_votes: BTreeMap::from([(d.class_label.clone(), 1)]),
            crossed: false,
            history: vec![(frame, d.bbox.y_center2())],
        }
    }

    fn update(&mut self, d: &Detection, frame: usize) {
        self.last_bbox = d.bbox;
        self.last_frame = frame;
        *self.class_votes.entry(d.class_label.clone()).or_default() += 1;
        self.history.push((frame, d.bbox.y_center2()));
    }

    pub fn hits(&self) -> usize {
        self.history.len()
    }

    /// Most voted label; the alphabetically first wins a tie.
    pub fn majority_class(&self) -> Option<&str> {
        self.class_votes
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(l, _)| l.as_str())
    }

    /// Whether the last two observations lie on opposite sides of `line`.
    fn just_crossed(&self, line: CountingLine) -> bool {
        let [.., (_, a), (_, b)] = self.history.as_slice() else {
            return false;
        };
        // the line row's center is row + 0.5; doubled it is odd, so no center sits on it
        let mid = 2 * i64::from(line.row_px) + 1;
        (*a < mid) != (*b < mid)
    }
}

/// Greedy one-to-one association by descending IoU. Returns `(track, detection)` pairs.
pub fn associate(tracks: &[Track], detections: &[Detection], iou_threshold: f64) -> Vec<(usize, usize)> {
    greedy_pairs(tracks.len(), detections.len(), iou_threshold, |t, d| {
        bbox_iou(&tracks[t].last_bbox, &detections[d].bbox)
    })
}

/// Greedy one-to-one assignment over a score matrix: highest score first,
/// ties by lower row then lower column; scores below `threshold` or zero never pair.
pub fn greedy_pairs(
    rows: usize,
    cols: usize,
    threshold: f64,
    score: impl Fn(usize, usize) -> f64,
) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let s = score(r, c);
            if s >= threshold && s > 0.0 {
                pairs.push((s, r, c));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    let mut out = Vec::new();
    for (_, r, c) in pairs {
        if row_used[r] || col_used[c] {
            continue;
        }
        row_used[r] = true;
        col_used[c] = true;
        out.push((r, c));
    }
    out
}

/// Advances `tracks` by one frame: matched tracks are updated, unmatched
/// detections open new tracks, and tracks unseen for more than
/// `max_age_frames` are retired. Returns the indices (into the updated list)
/// of tracks that received a detection this frame, paired with it.
pub fn tracker_step(
    tracks: &mut Vec<Track>,
    detections: &[Detection],
    frame: usize,
    params: &TrackerParams,
    next_id: &mut u64,
) -> Vec<(u64, usize)> {
    debug_assert!(tracks.iter().all(|t| t.last_frame < frame));
    let pairs = associate(tracks, detections, params.iou_threshold);
    let mut det_used = vec![false; detections.len()];
    let mut touched = Vec::with_capacity(detections.len());
    for (ti, di) in pairs {
        tracks[ti].update(&detections[di], frame);
        det_used[di] = true;
        touched.push((tracks[ti].id, di));
    }
    for (di, d) in detections.iter().enumerate() {
        if !det_used[di] {
            tracks.push(Track::open(*next_id, d, frame));
            touched.push((*next_id, di));
            *next_id += 1;
        }
    }
    tracks.retain(|t| frame - t.last_frame <= params.max_age_frames);
    touched
}

/// Stateful tracker plus the crossing latch.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub params: TrackerParams,
    pub line: CountingLine,
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(params: TrackerParams, line: CountingLine) -> Result<Self> {
        params.validate()?;
        Ok(Tracker {
            params,
            line,
            tracks: Vec::new(),
            next_id: 0,
        })
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Feeds one frame of detections; returns the tracks that crossed the line
    /// in this frame along with the detection that completed the crossing.
    pub fn step(&mut self, detections: &[Detection], frame: usize) -> Vec<(Track, Detection)> {
        let touched = tracker_step(
            &mut self.tracks,
            detections,
            frame,
            &self.params,
            &mut self.next_id,
        );
        let mut crossed = Vec::new();
        for (id, di) in touched {
            let Some(t) = self.tracks.iter_mut().find(|t| t.id == id) else {
                continue;
            };
            if !t.crossed && t.hits() >= self.params.min_hits && t.just_crossed(self.line) {
                t.crossed = true;
                crossed.push((t.clone(), detections[di].clone()));
            }
        }
        crossed
    }
}

/// Counts line crossings by running `vehicle_detector` on every frame.
pub fn baseline_count(
    input: &dyn VideoInput,
    line: CountingLine,
    vehicle_detector: &dyn VehicleDetector,
    params: &TrackerParams,
) -> Result<CountReport> {
    let meta = input.meta();
    line.validate(&meta)?;
    let mut tracker = Tracker::new(*params, line)?;
    let mut report = CountReport::new("tracking-baseline");
    report.frames = meta.frame_count;
    let mut source = input.open_stream()?;
    while let Some(frame) = source.next_frame()? {
        let dets = vehicle_detector.detect_vehicles(&frame)?;
        report.vehicle_detector_calls += 1;
        for (track, det) in tracker.step(&dets, frame.index) {
            let label = track
                .majority_class()
                .unwrap_or(det.class_label.as_str())
                .to_string();
            report.push(CountedVehicle {
                global_frame: frame.index,
                class_label: label,
                mark: None,
                detection: Some(det),
                score: None,
                segment_index: None,
            });
        }
    }
    Ok(report)
}
