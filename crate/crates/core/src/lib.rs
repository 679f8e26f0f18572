//! Line-crossing object counting from visual-rhythm images.
//!
//! A video is cut into fixed-length segments. For every segment the pixel row
//! under the counting line is stacked frame by frame into a time-spatial
//! image (the visual rhythm). Every object crossing the line leaves a mark in
//! that image; the mark's vertical center is the frame at which the object's
//! center crossed, so the object detector only runs on those key frames.
//!
//! The crate also ships a frame-by-frame detect-and-track counter used as the
//! comparison baseline, a synthetic scene generator with exact ground truth,
//! and a benchmark harness.

pub mod baseline;
pub mod bench;
pub mod count;
pub mod detect;
pub mod ingest;
pub mod model;
pub mod report;
pub mod synth;
pub mod vr;

mod error;

pub use error::Error;

pub use baseline::{baseline_count, Track, Tracker, TrackerParams};
pub use bench::{
    compare_systems, run_comparison, score_counts, AccuracyResult, BenchResult, Comparison,
    ComparisonConfig,
};
pub use count::{
    count_video, dedup_filter, mark_to_frame, match_mark, CountReport, CountedVehicle,
    EdgeMarkLedger, MatchParams,
};
pub use detect::{DetectorKind, DetectorSetup, MarkDetector, VehicleDetector};
pub use ingest::{FrameReader, FrameSource, SourceManifest, VideoInput};
pub use model::{bbox_iou, BBox, ClassSet, CountingLine, Detection, Frame, Raster, VideoMeta};
pub use synth::{gen_scene, CrossingEvent, GroundTruth, SceneConfig};
pub use vr::{vr_build, Mark, SegmentSpec, VrImage};

pub type Result<T, E = Error> = std::result::Result<T, E>;
