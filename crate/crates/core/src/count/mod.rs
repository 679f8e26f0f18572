//! Mark-to-vehicle association and per-class counting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::Detection;
use crate::vr::Mark;
use crate::{Error, Result};

mod dedup;
mod matching;
mod pipeline;

pub use dedup::{dedup_filter, EdgeMarkLedger};
pub use matching::{assign_marks, mark_to_frame, match_mark, match_mark_among, MatchOutcome};
pub use pipeline::count_video;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchParams {
    /// Detections must overlap rows `[line - band, line + band]`.
    pub band_margin_px: u32,
    /// A match is rejected when its edge distance exceeds this fraction of the mark width.
    pub max_interval_dist_frac: f64,
    pub min_det_conf: f64,
    /// Rows from a VR edge within which a mark counts as touching it.
    pub edge_margin_px: u32,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            band_margin_px: 100,
            max_interval_dist_frac: 0.5,
            min_det_conf: 0.0,
            edge_margin_px: 2,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_interval_dist_frac > 0.0 && self.max_interval_dist_frac.is_finite()) {
            return Err(Error::invalid("max_interval_dist_frac", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.min_det_conf) {
            return Err(Error::invalid("min_det_conf", "must be in [0, 1]"));
        }
        Ok(())
    }
}

/// One counted crossing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountedVehicle {
    pub global_frame: usize,
    pub class_label: String,
    /// Absent for the tracking baseline, which has no marks.
    pub mark: Option<Mark>,
    pub detection: Option<Detection>,
    /// Edge distance of the accepted match.
    pub score: Option<i64>,
    pub segment_index: Option<usize>,
}

impl CountedVehicle {
    /// Column range used to pair the vehicle with ground truth.
    pub fn x_extent(&self) -> Option<(i32, i32)> {
        self.mark
            .map(|m| (m.bbox.x0, m.bbox.x1))
            .or_else(|| self.detection.as_ref().map(|d| (d.bbox.x0, d.bbox.x1)))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    pub system: String,
    pub per_class: BTreeMap<String, usize>,
    pub total: usize,
    pub counted: Vec<CountedVehicle>,
    pub rejected_marks: usize,
    pub frames: usize,
    pub segments: usize,
    pub mark_detector_calls: usize,
    pub vehicle_detector_calls: usize,
}

impl CountReport {
    pub fn new(system: impl Into<String>) -> Self {
        CountReport {
            system: system.into(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, vehicle: CountedVehicle) {
        *self.per_class.entry(vehicle.class_label.clone()).or_default() += 1;
        self.total += 1;
        self.counted.push(vehicle);
    }

    pub fn count_of(&self, label: &str) -> usize {
        self.per_class.get(label).copied().unwrap_or(0)
    }

    /// `total == sum(per_class) == counted.len()`.
    pub fn is_consistent(&self) -> bool {
        self.total == self.per_class.values().sum::<usize>() && self.total == self.counted.len()
    }
}
