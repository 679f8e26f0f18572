use serde::{Deserialize, Serialize};

use crate::vr::Mark;
use crate::{Error, Result};

/// Column intervals of the marks touching the bottom edge of one segment's VR image.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeMarkLedger {
    pub segment_index: usize,
    pub intervals: Vec<(i32, i32)>,
}

impl EdgeMarkLedger {
    pub fn new(segment_index: usize) -> Self {
        EdgeMarkLedger {
            segment_index,
            intervals: Vec::new(),
        }
    }

    /// Whether the column center of `mark` lies inside a stored interval.
    pub fn covers(&self, mark: &Mark) -> bool {
        let c2 = mark.bbox.x_center2();
        self.intervals
            .iter()
            .any(|&(x0, x1)| 2 * i64::from(x0) <= c2 && c2 < 2 * i64::from(x1))
    }
}

/// Drops marks that continue a crossing already seen at the bottom of the
/// previous segment and records this segment's bottom-edge marks.
///
/// A mark touching the top edge (`y0 <= edge_margin_px`) is dropped iff its
/// column center lies in an interval of `ledger_prev`. Every mark touching the
/// bottom edge goes into the returned ledger, dropped or not, so a crossing
/// spanning several segments is followed all the way.
pub fn dedup_filter(
    marks: Vec<Mark>,
    ledger_prev: Option<&EdgeMarkLedger>,
    segment_index: usize,
    vr_height: usize,
    edge_margin_px: u32,
) -> Result<(Vec<Mark>, EdgeMarkLedger)> {
    if let Some(prev) = ledger_prev {
        if prev.segment_index + 1 != segment_index {
            return Err(Error::LedgerAdjacency {
                ledger: prev.segment_index,
                segment: segment_index,
            });
        }
    }
    let margin = i64::from(edge_margin_px);
    let bottom = vr_height as i64 - margin;
    let mut next = EdgeMarkLedger::new(segment_index);
    let mut kept = Vec::with_capacity(marks.len());
    for m in marks {
        if i64::from(m.bbox.y1) >= bottom {
            next.intervals.push((m.bbox.x0, m.bbox.x1));
        }
        let touches_top = i64::from(m.bbox.y0) <= margin;
        if touches_top && ledger_prev.is_some_and(|l| l.covers(&m)) {
            continue;
        }
        kept.push(m);
    }
    Ok((kept, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BBox;

    fn mark(x0: i32, y0: i32, x1: i32, y1: i32) -> Mark {
        Mark::new(BBox::new(x0, y0, x1, y1).unwrap(), 1.0)
    }

    #[test]
    fn continuation_mark_discarded() {
        let prev = EdgeMarkLedger {
            segment_index: 0,
            intervals: vec![(100, 140)],
        };
        let m = mark(105, 0, 135, 4); // center 120
        let (kept, _) = dedup_filter(vec![m], Some(&prev), 1, 900, 2).unwrap();
        assert!(kept.is_empty());
    }

    #[test]
    fn no_ledger_keeps_everything() {
        let marks = vec![mark(0, 0, 10, 3), mark(20, 400, 30, 410), mark(40, 897, 50, 900)];
        let (kept, next) = dedup_filter(marks.clone(), None, 0, 900, 2).unwrap();
        assert_eq!(kept, marks);
        assert_eq!(next.intervals, vec![(40, 50)]);
        let empty = EdgeMarkLedger::new(0);
        let (kept, _) = dedup_filter(marks.clone(), Some(&empty), 1, 900, 2).unwrap();
        assert_eq!(kept, marks);
    }

    #[test]
    fn only_top_edge_marks_are_candidates() {
        let prev = EdgeMarkLedger {
            segment_index: 4,
            intervals: vec![(100, 140)],
        };
        let low = mark(100, 3, 140, 9); // y0 = 3 > margin 2
        let top = mark(100, 2, 140, 9);
        let other_lane = mark(10, 0, 40, 5);
        let (kept, _) = dedup_filter(vec![low, top, other_lane], Some(&prev), 5, 900, 2).unwrap();
        assert_eq!(kept, vec![low, other_lane]);
    }

    #[test]
    fn center_on_interval_edges() {
        let prev = EdgeMarkLedger {
            segment_index: 0,
            intervals: vec![(100, 140)],
        };
        // center exactly 100 is inside, exactly 140 is outside (half-open)
        let at_start = mark(90, 0, 110, 3);
        let at_end = mark(130, 0, 150, 3);
        let (kept, _) = dedup_filter(vec![at_start, at_end], Some(&prev), 1, 900, 2).unwrap();
        assert_eq!(kept, vec![at_end]);
    }

    #[test]
    fn spanning_mark_propagates_through_segments() {
        // a crossing longer than a segment touches both edges of the middle one
        let prev = EdgeMarkLedger {
            segment_index: 0,
            intervals: vec![(10, 30)],
        };
        let full = mark(10, 0, 30, 50);
        let (kept, next) = dedup_filter(vec![full], Some(&prev), 1, 50, 2).unwrap();
        assert!(kept.is_empty());
        assert_eq!(next.intervals, vec![(10, 30)]);
    }

    #[test]
    fn non_adjacent_ledger_is_an_error() {
        let prev = EdgeMarkLedger::new(2);
        assert!(matches!(
            dedup_filter(vec![], Some(&prev), 4, 900, 2),
            Err(Error::LedgerAdjacency { ledger: 2, segment: 4 })
        ));
    }
}
