#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vrcount::detect::{DetectorNoise, OracleMarkDetector, OracleVehicleDetector};
use vrcount::synth::{SceneVideo, SpawnMode};
use vrcount::{
    count_video, gen_scene, CountReport, GroundTruth, MatchParams, SceneConfig, SegmentSpec,
    VideoMeta,
};

/// A random scene of 2 to 4 lanes and 600 to 2000 frames, with a short
/// segment length so that many crossings straddle a segment boundary.
pub fn random_scene(seed: u64) -> (Arc<GroundTruth>, SegmentSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lanes = rng.random_range(2..=4);
    let frames = rng.random_range(600..=2000);
    let cfg = SceneConfig {
        meta: VideoMeta::new(80 * lanes, 240, frames, 30),
        lanes,
        spawn_rate: rng.random_range(2.0..6.0),
        seed,
        ..SceneConfig::default()
    };
    let gt = gen_scene(&cfg).expect("scene");
    let spec = SegmentSpec::new(rng.random_range(40..=120), cfg.line_row);
    (Arc::new(gt), spec)
}

pub fn aligned_scene(seed: u64, period: usize, frames: usize) -> (Arc<GroundTruth>, SegmentSpec) {
    let cfg = SceneConfig {
        meta: VideoMeta::new(240, 240, frames, 30),
        lanes: 3,
        spawn_mode: SpawnMode::BoundaryAligned { period },
        seed,
        ..SceneConfig::default()
    };
    (Arc::new(gen_scene(&cfg).expect("scene")), SegmentSpec::new(period, cfg.line_row))
}

pub fn oracle_count(gt: &Arc<GroundTruth>, spec: &SegmentSpec) -> CountReport {
    let video = SceneVideo::new(gt.clone());
    let marks = OracleMarkDetector::new(gt.clone(), *spec);
    let vehicles = OracleVehicleDetector::new(gt.clone(), DetectorNoise::default()).unwrap();
    count_video(&video, spec, &marks, &vehicles, &MatchParams::default()).expect("count")
}

pub fn straddles(interval: (usize, usize), segment_length: usize) -> bool {
    interval.0 / segment_length != interval.1 / segment_length
}

pub fn per_class_truth(gt: &GroundTruth, spec: &SegmentSpec) -> std::collections::BTreeMap<String, usize> {
    let mut m = std::collections::BTreeMap::new();
    for c in gt.crossings(spec.line) {
        *m.entry(c.class_label).or_insert(0) += 1;
    }
    m
}
