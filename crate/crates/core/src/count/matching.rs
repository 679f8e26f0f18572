use crate::model::{CountingLine, Detection};
use crate::vr::Mark;

use super::MatchParams;

/// Global index of the frame at the mark's center row (earlier row on ties).
pub fn mark_to_frame(mark: &Mark, segment_start: usize) -> usize {
    let center = (i64::from(mark.bbox.y0) + i64::from(mark.bbox.y1) - 1).div_euclid(2);
    segment_start + center.max(0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchOutcome {
    pub index: usize,
    /// `|dx0| + |dx1|` between detection and mark.
    pub score: i64,
}

fn edge_distance(mark: &Mark, d: &Detection) -> i64 {
    (i64::from(d.bbox.x0) - i64::from(mark.bbox.x0)).abs()
        + (i64::from(d.bbox.x1) - i64::from(mark.bbox.x1)).abs()
}

/// Best detection among those with `available[i] == true`.
pub fn match_mark_among(
    mark: &Mark,
    detections: &[Detection],
    available: &[bool],
    line: CountingLine,
    params: &MatchParams,
) -> Option<MatchOutcome> {
    let row = i64::from(line.row_px);
    let band = i64::from(params.band_margin_px);
    let (lo, hi) = (row - band, row + band + 1);
    let best = detections
        .iter()
        .enumerate()
        .filter(|(i, _)| available.get(*i).copied().unwrap_or(true))
        .filter(|(_, d)| d.confidence >= params.min_det_conf)
        .filter(|(_, d)| i64::from(d.bbox.y0) < hi && lo < i64::from(d.bbox.y1))
        .min_by_key(|(_, d)| {
            (
                edge_distance(mark, d),
                (d.bbox.y_center2() - (2 * row + 1)).abs(),
                d.bbox.x0,
            )
        })?;
    let score = edge_distance(mark, best.1);
    let limit = params.max_interval_dist_frac * f64::from(mark.bbox.width());
    (score as f64 <= limit).then_some(MatchOutcome {
        index: best.0,
        score,
    })
}

/// Matches one mark against the detections of its key frame.
///
/// Candidates must reach `min_det_conf` and overlap the band around the line.
/// The smallest left-plus-right edge distance wins; ties go to the box whose
/// vertical center is nearest the line, then to the smaller `x0`.
pub fn match_mark(
    mark: &Mark,
    detections: &[Detection],
    line: CountingLine,
    params: &MatchParams,
) -> Option<MatchOutcome> {
    match_mark_among(mark, detections, &[], line, params)
}

/// Matches marks in order, each consuming its detection.
pub fn assign_marks(
    marks: &[Mark],
    detections: &[Detection],
    line: CountingLine,
    params: &MatchParams,
) -> Vec<Option<MatchOutcome>> {
    let mut available = vec![true; detections.len()];
    marks
        .iter()
        .map(|m| {
            let hit = match_mark_among(m, detections, &available, line, params);
            if let Some(h) = hit {
                available[h.index] = false;
            }
            hit
        })
        .collect()
}
