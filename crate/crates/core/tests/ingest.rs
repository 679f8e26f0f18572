use std::sync::Arc;

use vrcount::ingest::{open_source, ManifestVideo, SourceKind, VideoWriter};
use vrcount::synth::{render_frame, SceneVideo};
use vrcount::{gen_scene, SceneConfig, SourceManifest, VideoInput, VideoMeta};

fn scene(meta: VideoMeta, seed: u64) -> Arc<vrcount::GroundTruth> {
    let cfg = SceneConfig {
        meta,
        lanes: 4,
        line_row: meta.height_px / 2,
        seed,
        ..SceneConfig::default()
    };
    Arc::new(gen_scene(&cfg).unwrap())
}

fn write(kind: SourceKind, dir: &std::path::Path, gt: &vrcount::GroundTruth) -> std::path::PathBuf {
    let target = match kind {
        SourceKind::FrameDir => dir.join("frames"),
        SourceKind::RawVideo => dir.join("video.rgb"),
    };
    let mut w = VideoWriter::create(kind, &target, gt.meta).unwrap();
    for t in 0..gt.meta.frame_count {
        w.push(&render_frame(gt, t).unwrap()).unwrap();
    }
    let manifest = dir.join("video.toml");
    w.finish().unwrap().save(&manifest).unwrap();
    manifest
}

#[test]
fn full_size_frame_directory_reopens_with_its_geometry() {
    let meta = VideoMeta::new(1280, 720, 900, 30);
    let gt = scene(meta, 3);
    let dir = tempfile::tempdir().unwrap();
    let manifest = write(SourceKind::FrameDir, dir.path(), &gt);
    assert!(dir.path().join("frames/000000.png").is_file());
    assert!(dir.path().join("frames/000899.png").is_file());
    let m = SourceManifest::load(&manifest).unwrap();
    m.verify().unwrap();
    assert_eq!(ManifestVideo::open(&manifest).unwrap().meta(), meta);
}

#[test]
fn written_frames_read_back_identically() {
    for kind in [SourceKind::RawVideo, SourceKind::FrameDir] {
        let gt = scene(VideoMeta::new(160, 120, 90, 25), 5);
        let dir = tempfile::tempdir().unwrap();
        let manifest = write(kind, dir.path(), &gt);
        let mut source = open_source(&manifest).unwrap();
        let mut n = 0;
        while let Some(frame) = source.next_frame().unwrap() {
            assert_eq!(frame.index, n);
            assert_eq!(frame.raster, render_frame(&gt, n).unwrap().raster, "{kind:?} frame {n}");
            n += 1;
        }
        assert_eq!(n, 90);
        assert!(source.next_frame().unwrap().is_none());

        // random access agrees with the stream and with the in-memory scene
        let video = ManifestVideo::open(&manifest).unwrap();
        let mut reader = video.open_reader().unwrap();
        let mut scene_reader = SceneVideo::new(gt.clone()).open_reader().unwrap();
        for t in [89, 0, 45, 44, 46] {
            assert_eq!(reader.read_frame(t).unwrap().raster, scene_reader.read_frame(t).unwrap().raster);
        }
        assert!(reader.read_frame(90).is_err());
    }
}

#[test]
fn generation_is_deterministic_on_disk() {
    let gt = scene(VideoMeta::new(160, 64, 40, 30), 7);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write(SourceKind::RawVideo, a.path(), &gt);
    let gt2 = scene(VideoMeta::new(160, 64, 40, 30), 7);
    write(SourceKind::RawVideo, b.path(), &gt2);
    assert_eq!(
        std::fs::read(a.path().join("video.rgb")).unwrap(),
        std::fs::read(b.path().join("video.rgb")).unwrap()
    );
}
