mod common;

use std::sync::Arc;

use common::{aligned_scene, oracle_count, per_class_truth, random_scene, straddles};
use vrcount::detect::{DetectorNoise, Instrumented, OracleMarkDetector, OracleVehicleDetector};
use vrcount::ingest::{ManifestVideo, MemoryVideo, SourceKind, VideoWriter};
use vrcount::synth::{render_frame, RenderStyle, SceneObject, SceneVideo};
use vrcount::{
    count_video, gen_scene, CountReport, GroundTruth, MatchParams, Raster, SceneConfig,
    SegmentSpec, VideoInput, VideoMeta,
};

fn assert_matches_truth(report: &CountReport, gt: &GroundTruth, spec: &SegmentSpec) {
    assert!(report.is_consistent());
    assert_eq!(report.total, gt.crossings(spec.line).len());
    assert_eq!(report.per_class, per_class_truth(gt, spec));
    assert_eq!(report.rejected_marks, 0);
}

#[test]
fn oracle_counts_equal_truth_on_random_scenes() {
    let mut straddling = 0;
    for seed in 0..20 {
        let (gt, spec) = random_scene(1000 + seed);
        let report = oracle_count(&gt, &spec);
        assert_matches_truth(&report, &gt, &spec);
        straddling += gt
            .crossings(spec.line)
            .iter()
            .filter(|c| straddles(c.frame_interval, spec.segment_length_frames))
            .count();
    }
    assert!(straddling > 50, "only {straddling} straddling crossings");
}

#[test]
fn oracle_counts_with_default_segments() {
    let cfg = SceneConfig {
        meta: VideoMeta::new(320, 240, 2000, 30),
        seed: 11,
        ..SceneConfig::default()
    };
    let gt = Arc::new(gen_scene(&cfg).unwrap());
    let spec = SegmentSpec::default();
    let report = oracle_count(&gt, &spec);
    assert_eq!(report.segments, 3);
    assert_matches_truth(&report, &gt, &spec);
}

#[test]
fn every_vehicle_straddling_is_counted_once() {
    for seed in 0..5 {
        let (gt, spec) = aligned_scene(seed, 150, 900);
        let crossings = gt.crossings(spec.line);
        assert!(crossings
            .iter()
            .all(|c| straddles(c.frame_interval, spec.segment_length_frames)));
        let report = oracle_count(&gt, &spec);
        assert_eq!(report.total, gt.objects.len());
        assert_matches_truth(&report, &gt, &spec);
    }
}

#[test]
fn empty_video_counts_nothing() {
    let meta = VideoMeta::new(32, 32, 0, 30);
    let video = MemoryVideo::new(meta, Vec::new()).unwrap();
    let gt = Arc::new(GroundTruth {
        meta,
        style: RenderStyle { background_luma: 90, contrast: 75 },
        objects: Vec::new(),
    });
    let spec = SegmentSpec::new(900, 10);
    let report = count_video(
        &video,
        &spec,
        &OracleMarkDetector::new(gt.clone(), spec),
        &OracleVehicleDetector::new(gt, DetectorNoise::default()).unwrap(),
        &MatchParams::default(),
    )
    .unwrap();
    assert_eq!((report.total, report.rejected_marks, report.segments), (0, 0, 0));
}

fn one_car_scene() -> Arc<GroundTruth> {
    let meta = VideoMeta::new(64, 240, 200, 30);
    let car = SceneObject {
        id: 0,
        class_label: "Car".into(),
        lane: 0,
        direction: vrcount::synth::Direction::Down,
        speed: num_rational::Rational64::from_integer(4),
        spawn_frame: 10,
        entry_row: -40,
        x0: 20,
        x1: 40,
        length: 40,
    };
    Arc::new(GroundTruth {
        meta,
        style: RenderStyle { background_luma: 90, contrast: 75 },
        objects: vec![car],
    })
}

#[test]
fn single_car_trace() {
    let gt = one_car_scene();
    let spec = SegmentSpec::new(900, 120);
    let report = oracle_count(&gt, &spec);
    assert_eq!(report.total, 1);
    assert_eq!(report.count_of("Car"), 1);
    let v = &report.counted[0];
    let truth = &gt.crossings(spec.line)[0];
    assert!(v.global_frame.abs_diff(truth.center_frame) <= 1);
    assert_eq!(v.score, Some(0));
}

#[test]
fn detector_calls_are_frugal() {
    for seed in 0..5 {
        let (gt, spec) = random_scene(2000 + seed);
        let video = SceneVideo::new(gt.clone());
        let marks = Instrumented::new(OracleMarkDetector::new(gt.clone(), spec));
        let vehicles =
            Instrumented::new(OracleVehicleDetector::new(gt.clone(), DetectorNoise::default()).unwrap());
        let report = count_video(&video, &spec, &marks, &vehicles, &MatchParams::default()).unwrap();
        let segments = spec.segment_count(gt.meta.frame_count);
        assert_eq!(marks.calls(), segments);
        assert_eq!(report.mark_detector_calls, segments);
        // every kept mark is either counted or rejected
        assert_eq!(vehicles.calls(), report.total + report.rejected_marks);
        assert_eq!(report.vehicle_detector_calls, vehicles.calls());
    }
}

#[test]
fn raising_min_conf_never_increases_count() {
    let (gt, spec) = random_scene(31);
    let video = SceneVideo::new(gt.clone());
    let marks = OracleMarkDetector::new(gt.clone(), spec);
    let noise = DetectorNoise {
        jitter_px: 3,
        miss_rate: 0.1,
        spurious_rate: 2.0,
        seed: 5,
    };
    let vehicles = OracleVehicleDetector::new(gt.clone(), noise).unwrap();
    let mut last = usize::MAX;
    for conf in [0.0, 0.2, 0.5, 0.8, 1.0] {
        let params = MatchParams {
            min_det_conf: conf,
            ..Default::default()
        };
        let total = count_video(&video, &spec, &marks, &vehicles, &params).unwrap().total;
        assert!(total <= last, "min_det_conf {conf}: {total} > {last}");
        last = total;
    }
}

#[test]
fn thread_count_does_not_change_result() {
    let (gt, spec) = random_scene(77);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| oracle_count(&gt, &spec))
    };
    let one = run(1);
    for n in [2, 3, 8] {
        assert_eq!(run(n), one);
    }
}

#[test]
fn manifest_and_memory_inputs_agree() {
    let cfg = SceneConfig {
        meta: VideoMeta::new(96, 160, 240, 30),
        lanes: 2,
        line_row: 80,
        spawn_rate: 6.0,
        seed: 4,
        ..SceneConfig::default()
    };
    let gt = Arc::new(gen_scene(&cfg).unwrap());
    let spec = SegmentSpec::new(60, 80);
    let dir = tempfile::tempdir().unwrap();
    let mut w = VideoWriter::create(SourceKind::RawVideo, &dir.path().join("v.rgb"), gt.meta).unwrap();
    let mut frames: Vec<Raster> = Vec::new();
    for t in 0..gt.meta.frame_count {
        let f = render_frame(&gt, t).unwrap();
        w.push(&f).unwrap();
        frames.push(f.raster);
    }
    let manifest = w.finish().unwrap();
    let manifest_path = dir.path().join("v.toml");
    manifest.save(&manifest_path).unwrap();

    let on_disk = ManifestVideo::open(&manifest_path).unwrap();
    let in_memory = MemoryVideo::new(gt.meta, frames).unwrap();
    assert_eq!(on_disk.meta(), in_memory.meta());
    let marks = OracleMarkDetector::new(gt.clone(), spec);
    let vehicles = OracleVehicleDetector::new(gt.clone(), DetectorNoise::default()).unwrap();
    let a = count_video(&on_disk, &spec, &marks, &vehicles, &MatchParams::default()).unwrap();
    let b = count_video(&in_memory, &spec, &marks, &vehicles, &MatchParams::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.total, gt.crossings(spec.line).len());
}
