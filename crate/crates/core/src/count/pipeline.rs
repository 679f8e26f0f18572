use rayon::prelude::*;

use crate::detect::{MarkDetector, VehicleDetector};
use crate::ingest::VideoInput;
use crate::model::BBox;
use crate::vr::{vr_build, Mark, SegmentSpec, VrImage};
use crate::Result;

use super::{dedup_filter, mark_to_frame, match_mark_among, CountReport, CountedVehicle, EdgeMarkLedger, MatchParams};

/// Runs the visual-rhythm counter over a whole video.
///
/// Per segment: build the VR image, detect marks, drop cross-segment
/// duplicates, then for every remaining mark fetch its key frame, run the
/// vehicle detector once and match. VR images are built sequentially from one
/// stream and mark detection runs in parallel over a batch of segments sized
/// to the current rayon pool; de-duplication and counting then proceed in
/// segment order. Key frames are read through a second reader.
pub fn count_video(
    input: &dyn VideoInput,
    spec: &SegmentSpec,
    mark_detector: &dyn MarkDetector,
    vehicle_detector: &dyn VehicleDetector,
    params: &MatchParams,
) -> Result<CountReport> {
    params.validate()?;
    let meta = input.meta();
    let mut builder = vr_build(input.open_stream()?, *spec)?;
    let mut fetch = input.open_reader()?;
    let mut report = CountReport::new("visual-rhythm");
    report.frames = meta.frame_count;
    report.segments = builder.segment_count();

    let batch = rayon::current_num_threads().max(1);
    let mut ledger: Option<EdgeMarkLedger> = None;
    loop {
        let vrs: Vec<VrImage> = builder.by_ref().take(batch).collect::<Result<_>>()?;
        if vrs.is_empty() {
            break;
        }
        let detected: Vec<Vec<Mark>> = vrs
            .par_iter()
            .map(|vr| {
                mark_detector
                    .detect_marks(vr)
                    .map_err(|e| e.in_segment(vr.segment_index))
            })
            .collect::<Result<_>>()?;
        report.mark_detector_calls += vrs.len();

        for (vr, marks) in vrs.iter().zip(detected) {
            let k = vr.segment_index;
            let (kept, next) =
                dedup_filter(marks, ledger.as_ref(), k, vr.rows(), params.edge_margin_px)
                    .map_err(|e| e.in_segment(k))?;
            ledger = Some(next);

            // detections already claimed, per key frame of this segment
            let mut claimed: Vec<(usize, BBox, String)> = Vec::new();
            for mark in kept {
                let frame_index = mark_to_frame(&mark, vr.start_frame);
                let frame = fetch.read_frame(frame_index).map_err(|e| e.in_segment(k))?;
                let dets = vehicle_detector
                    .detect_vehicles(&frame)
                    .map_err(|e| e.in_segment(k))?;
                report.vehicle_detector_calls += 1;

                let mut available = vec![true; dets.len()];
                for (f, b, label) in &claimed {
                    if *f != frame_index {
                        continue;
                    }
                    if let Some(i) = (0..dets.len())
                        .find(|&i| available[i] && dets[i].bbox == *b && dets[i].class_label == *label)
                    {
                        available[i] = false;
                    }
                }

                match match_mark_among(&mark, &dets, &available, spec.line, params) {
                    Some(hit) => {
                        let d = dets[hit.index].clone();
                        claimed.push((frame_index, d.bbox, d.class_label.clone()));
                        report.push(CountedVehicle {
                            global_frame: frame_index,
                            class_label: d.class_label.clone(),
                            mark: Some(mark),
                            detection: Some(d),
                            score: Some(hit.score),
                            segment_index: Some(k),
                        });
                    }
                    None => report.rejected_marks += 1,
                }
            }
        }
    }
    log::debug!(
        "counted {} vehicles over {} segments ({} marks rejected)",
        report.total,
        report.segments,
        report.rejected_marks
    );
    Ok(report)
}
