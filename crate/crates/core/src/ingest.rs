//! Frame ingestion from a raw RGB24 file or a directory of numbered PNGs.
//!
//! Both layouts are described by a TOML sidecar manifest:
//!
//! ```toml
//! kind = "raw_video"      # or "frame_dir"
//! path = "video.rgb"      # relative to the manifest's directory
//! width = 1280
//! height = 720
//! frame_count = 900
//! fps_num = 30
//! fps_den = 1
//! ```
//!
//! A raw video is headerless packed RGB24, frame after frame, so its length
//! must be exactly `frame_count * width * height * 3` bytes. A frame directory
//! holds `000000.png`, `000001.png`, ... with exactly `frame_count` entries.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::model::{Frame, Raster, VideoMeta};
use crate::{Error, Result};

pub const FRAME_EXT: &str = "png";

/// Random-access reader over one video. Readers are cheap to open, so each
/// consumer (streaming VR build, key-frame fetch) owns its own.
pub trait FrameReader: Send {
    fn meta(&self) -> &VideoMeta;
    fn read_frame(&mut self, index: usize) -> Result<Frame>;
}

/// Anything that can hand out independent readers over the same frames.
pub trait VideoInput: Sync {
    fn meta(&self) -> VideoMeta;
    fn open_reader(&self) -> Result<Box<dyn FrameReader>>;

    fn open_stream(&self) -> Result<FrameSource> {
        Ok(FrameSource::new(self.open_reader()?))
    }
}

/// Forward-only frame stream. Frames come out strictly in index order.
pub struct FrameSource {
    reader: Box<dyn FrameReader>,
    cursor: usize,
}

impl FrameSource {
    pub fn new(reader: Box<dyn FrameReader>) -> Self {
        FrameSource { reader, cursor: 0 }
    }

    pub fn meta(&self) -> &VideoMeta {
        self.reader.meta()
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// `Ok(None)` once every frame has been delivered.
    pub fn next_frame(&mut self) -> Result<Option<Frame>> {
        if self.cursor >= self.reader.meta().frame_count {
            return Ok(None);
        }
        let frame = self.reader.read_frame(self.cursor)?;
        self.cursor += 1;
        Ok(Some(frame))
    }
}

impl Iterator for FrameSource {
    type Item = Result<Frame>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame().transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    FrameDir,
    RawVideo,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceManifest {
    pub kind: SourceKind,
    /// Resolved data path.
    pub path: PathBuf,
    pub meta: VideoMeta,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    kind: SourceKind,
    path: PathBuf,
    width: u32,
    height: u32,
    frame_count: usize,
    fps_num: u32,
    #[serde(default = "one")]
    fps_den: u32,
}

fn one() -> u32 {
    1
}

impl SourceManifest {
    /// Parses the manifest without touching the referenced data.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        if !manifest_path.is_file() {
            return Err(Error::MissingFile(manifest_path.to_path_buf()));
        }
        let text =
            fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        let file: ManifestFile = toml::from_str(&text).map_err(|e| Error::MalformedManifest {
            path: manifest_path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let meta = VideoMeta {
            width_px: file.width,
            height_px: file.height,
            frame_count: file.frame_count,
            fps_num: file.fps_num,
            fps_den: file.fps_den,
        };
        meta.validate().map_err(|e| Error::MalformedManifest {
            path: manifest_path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        Ok(SourceManifest {
            kind: file.kind,
            path: base.join(file.path),
            meta,
        })
    }

    /// Writes the manifest with `path` stored relative to the manifest's directory
    /// when possible.
    pub fn save(&self, manifest_path: &Path) -> Result<()> {
        let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        let rel = self
            .path
            .strip_prefix(base)
            .map(Path::to_path_buf)
            .unwrap_or_else(|_| self.path.clone());
        let file = ManifestFile {
            kind: self.kind,
            path: rel,
            width: self.meta.width_px,
            height: self.meta.height_px,
            frame_count: self.meta.frame_count,
            fps_num: self.meta.fps_num,
            fps_den: self.meta.fps_den,
        };
        let text = toml::to_string(&file).map_err(|e| Error::Serde(e.to_string()))?;
        fs::write(manifest_path, text).map_err(|e| Error::io(manifest_path, e))
    }

    /// Checks the declared geometry against the data on disk.
    pub fn verify(&self) -> Result<()> {
        match self.kind {
            SourceKind::RawVideo => {
                let md = fs::metadata(&self.path).map_err(|e| {
                    if e.kind() == std::io::ErrorKind::NotFound {
                        Error::MissingFile(self.path.clone())
                    } else {
                        Error::io(&self.path, e)
                    }
                })?;
                let declared = self.meta.frame_count as u64 * self.meta.frame_bytes() as u64;
                if md.len() != declared {
                    return Err(Error::GeometryMismatch {
                        field: "frame_count",
                        declared: format!(
                            "{} frames of {}x{} ({declared} bytes)",
                            self.meta.frame_count, self.meta.width_px, self.meta.height_px
                        ),
                        found: format!("{} bytes", md.len()),
                    });
                }
                Ok(())
            }
            SourceKind::FrameDir => {
                if !self.path.is_dir() {
                    return Err(Error::MissingFile(self.path.clone()));
                }
                let mut found = 0usize;
                for entry in fs::read_dir(&self.path).map_err(|e| Error::io(&self.path, e))? {
                    let entry = entry.map_err(|e| Error::io(&self.path, e))?;
                    if is_frame_name(&entry.file_name().to_string_lossy()) {
                        found += 1;
                    }
                }
                if found != self.meta.frame_count {
                    return Err(Error::GeometryMismatch {
                        field: "frame_count",
                        declared: self.meta.frame_count.to_string(),
                        found: format!("{found} frame images"),
                    });
                }
                for index in 0..self.meta.frame_count {
                    let p = frame_path(&self.path, index);
                    if !p.is_file() {
                        return Err(Error::MissingFile(p));
                    }
                    let (w, h) = image::image_dimensions(&p)
                        .map_err(|e| Error::Image { path: p.clone(), source: e })?;
                    if w != self.meta.width_px {
                        return Err(Error::GeometryMismatch {
                            field: "width",
                            declared: self.meta.width_px.to_string(),
                            found: format!("{w} in {}", p.display()),
                        });
                    }
                    if h != self.meta.height_px {
                        return Err(Error::GeometryMismatch {
                            field: "height",
                            declared: self.meta.height_px.to_string(),
                            found: format!("{h} in {}", p.display()),
                        });
                    }
                }
                Ok(())
            }
        }
    }

    fn reader(&self) -> Result<Box<dyn FrameReader>> {
        Ok(match self.kind {
            SourceKind::RawVideo => Box::new(RawVideoReader::open(&self.path, self.meta)?),
            SourceKind::FrameDir => Box::new(FrameDirReader {
                dir: self.path.clone(),
                meta: self.meta,
            }),
        })
    }
}

/// Manifest-backed video, verified once at open.
#[derive(Debug, Clone)]
pub struct ManifestVideo {
    manifest: SourceManifest,
}

impl ManifestVideo {
    pub fn open(manifest_path: &Path) -> Result<Self> {
        let manifest = SourceManifest::load(manifest_path)?;
        manifest.verify()?;
        Ok(ManifestVideo { manifest })
    }

    pub fn manifest(&self) -> &SourceManifest {
        &self.manifest
    }
}

impl VideoInput for ManifestVideo {
    fn meta(&self) -> VideoMeta {
        self.manifest.meta
    }

    fn open_reader(&self) -> Result<Box<dyn FrameReader>> {
        self.manifest.reader()
    }
}

/// Opens the manifest, validates it against the data and returns a stream at frame 0.
pub fn open_source(manifest_path: &Path) -> Result<FrameSource> {
    ManifestVideo::open(manifest_path)?.open_stream()
}

fn is_frame_name(name: &str) -> bool {
    match name.strip_suffix(FRAME_EXT).and_then(|s| s.strip_suffix('.')) {
        Some(stem) => stem.len() == 6 && stem.bytes().all(|b| b.is_ascii_digit()),
        None => false,
    }
}

pub fn frame_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("{index:06}.{FRAME_EXT}"))
}

struct RawVideoReader {
    file: BufReader<File>,
    meta: VideoMeta,
    // frame index the file cursor sits at
    position: usize,
}

impl RawVideoReader {
    fn open(path: &Path, meta: VideoMeta) -> Result<Self> {
        let file = File::open(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(path.to_path_buf())
            } else {
                Error::io(path, e)
            }
        })?;
        Ok(RawVideoReader {
            file: BufReader::with_capacity(meta.frame_bytes().clamp(8192, 1 << 22), file),
            meta,
            position: 0,
        })
    }
}

impl FrameReader for RawVideoReader {
    fn meta(&self) -> &VideoMeta {
        &self.meta
    }

    fn read_frame(&mut self, index: usize) -> Result<Frame> {
        if index >= self.meta.frame_count {
            return Err(Error::invalid(
                "frame",
                format!("index {index} beyond frame_count {}", self.meta.frame_count),
            ));
        }
        let n = self.meta.frame_bytes();
        if index != self.position {
            self.file
                .seek(SeekFrom::Start(index as u64 * n as u64))
                .map_err(|source| Error::FrameIo { frame: index, source })?;
        }
        let mut data = vec![0u8; n];
        self.file
            .read_exact(&mut data)
            .map_err(|source| Error::FrameIo { frame: index, source })?;
        self.position = index + 1;
        let raster = Raster::from_raw(self.meta.width_px, self.meta.height_px, data)?;
        Frame::new(index, raster, &self.meta)
    }
}

struct FrameDirReader {
    dir: PathBuf,
    meta: VideoMeta,
}

impl FrameReader for FrameDirReader {
    fn meta(&self) -> &VideoMeta {
        &self.meta
    }

    fn read_frame(&mut self, index: usize) -> Result<Frame> {
        let path = frame_path(&self.dir, index);
        let img = image::open(&path)
            .map_err(|e| match e {
                image::ImageError::IoError(source) => Error::FrameIo { frame: index, source },
                other => Error::Image { path: path.clone(), source: other },
            })?
            .to_rgb8();
        let (w, h) = img.dimensions();
        let raster = Raster::from_raw(w, h, img.into_raw())?;
        Frame::new(index, raster, &self.meta)
    }
}

/// Writes frames to disk in either layout and produces the matching manifest.
pub struct VideoWriter {
    kind: SourceKind,
    path: PathBuf,
    meta: VideoMeta,
    raw: Option<BufWriter<File>>,
    written: usize,
}

impl VideoWriter {
    pub fn create(kind: SourceKind, path: &Path, meta: VideoMeta) -> Result<Self> {
        meta.validate()?;
        let raw = match kind {
            SourceKind::RawVideo => {
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
                let f = File::create(path).map_err(|e| Error::io(path, e))?;
                Some(BufWriter::with_capacity(1 << 20, f))
            }
            SourceKind::FrameDir => {
                fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
                None
            }
        };
        Ok(VideoWriter {
            kind,
            path: path.to_path_buf(),
            meta,
            raw,
            written: 0,
        })
    }

    pub fn push(&mut self, frame: &Frame) -> Result<()> {
        if frame.index != self.written {
            return Err(Error::invalid(
                "frame",
                format!("expected frame {}, got {}", self.written, frame.index),
            ));
        }
        if frame.raster.width != self.meta.width_px || frame.raster.height != self.meta.height_px
        {
            return Err(Error::invalid("frame", "raster size differs from stream geometry"));
        }
        match &mut self.raw {
            Some(w) => w
                .write_all(&frame.raster.data)
                .map_err(|e| Error::io(&self.path, e))?,
            None => {
                let p = frame_path(&self.path, frame.index);
                frame
                    .raster
                    .to_image()
                    .save_with_format(&p, image::ImageFormat::Png)
                    .map_err(|e| Error::Image { path: p, source: e })?;
            }
        }
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<SourceManifest> {
        if let Some(mut w) = self.raw.take() {
            w.flush().map_err(|e| Error::io(&self.path, e))?;
        }
        if self.written != self.meta.frame_count {
            return Err(Error::GeometryMismatch {
                field: "frame_count",
                declared: self.meta.frame_count.to_string(),
                found: format!("{} frames written", self.written),
            });
        }
        Ok(SourceManifest {
            kind: self.kind,
            path: self.path,
            meta: self.meta,
        })
    }
}

/// In-memory video, handy for tests and small tools.
#[derive(Debug, Clone)]
pub struct MemoryVideo {
    meta: VideoMeta,
    frames: Arc<Vec<Raster>>,
}

impl MemoryVideo {
    pub fn new(meta: VideoMeta, frames: Vec<Raster>) -> Result<Self> {
        meta.validate()?;
        if frames.len() != meta.frame_count {
            return Err(Error::GeometryMismatch {
                field: "frame_count",
                declared: meta.frame_count.to_string(),
                found: frames.len().to_string(),
            });
        }
        if frames
            .iter()
            .any(|r| r.width != meta.width_px || r.height != meta.height_px)
        {
            return Err(Error::invalid("frame", "raster size differs from stream geometry"));
        }
        Ok(MemoryVideo {
            meta,
            frames: Arc::new(frames),
        })
    }
}

impl VideoInput for MemoryVideo {
    fn meta(&self) -> VideoMeta {
        self.meta
    }

    fn open_reader(&self) -> Result<Box<dyn FrameReader>> {
        Ok(Box::new(self.clone()))
    }
}

impl FrameReader for MemoryVideo {
    fn meta(&self) -> &VideoMeta {
        &self.meta
    }

    fn read_frame(&mut self, index: usize) -> Result<Frame> {
        let raster = self
            .frames
            .get(index)
            .cloned()
            .ok_or_else(|| Error::invalid("frame", format!("index {index} out of range")))?;
        Frame::new(index, raster, &self.meta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_frames(meta: &VideoMeta) -> Vec<Raster> {
        (0..meta.frame_count)
            .map(|t| {
                let mut r = Raster::filled(meta.width_px, meta.height_px, [0; 3]);
                for (i, b) in r.data.iter_mut().enumerate() {
                    *b = ((i * 7 + t * 13) % 251) as u8;
                }
                r
            })
            .collect()
    }

    fn write_video(dir: &Path, kind: SourceKind, meta: VideoMeta) -> PathBuf {
        let data = match kind {
            SourceKind::RawVideo => dir.join("video.rgb"),
            SourceKind::FrameDir => dir.join("frames"),
        };
        let mut w = VideoWriter::create(kind, &data, meta).unwrap();
        for (t, r) in gradient_frames(&meta).into_iter().enumerate() {
            w.push(&Frame::new(t, r, &meta).unwrap()).unwrap();
        }
        let manifest = w.finish().unwrap();
        let mpath = dir.join("manifest.toml");
        manifest.save(&mpath).unwrap();
        mpath
    }

    #[test]
    fn raw_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let meta = VideoMeta::new(5, 4, 6, 30);
        let mpath = write_video(dir.path(), SourceKind::RawVideo, meta);
        let mut src = open_source(&mpath).unwrap();
        assert_eq!(*src.meta(), meta);
        let expected = gradient_frames(&meta);
        for (t, want) in expected.iter().enumerate() {
            let f = src.next_frame().unwrap().unwrap();
            assert_eq!(f.index, t);
            assert_eq!(&f.raster, want);
        }
        assert!(src.next_frame().unwrap().is_none());
        assert_eq!(src.cursor(), meta.frame_count);
    }

    #[test]
    fn frame_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let meta = VideoMeta::new(7, 3, 4, 25);
        let mpath = write_video(dir.path(), SourceKind::FrameDir, meta);
        let frames: Vec<Frame> = open_source(&mpath).unwrap().map(Result::unwrap).collect();
        assert_eq!(frames.len(), 4);
        for (f, want) in frames.iter().zip(gradient_frames(&meta)) {
            assert_eq!(f.raster, want);
        }
    }

    #[test]
    fn truncated_raw_file_is_geometry_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let meta = VideoMeta::new(5, 4, 6, 30);
        let mpath = write_video(dir.path(), SourceKind::RawVideo, meta);
        let data = dir.path().join("video.rgb");
        let len = fs::metadata(&data).unwrap().len();
        let f = fs::OpenOptions::new().write(true).open(&data).unwrap();
        f.set_len(len - 1).unwrap();
        match open_source(&mpath) {
            Err(Error::GeometryMismatch { field, .. }) => assert_eq!(field, "frame_count"),
            other => panic!("expected geometry mismatch, got {:?}", other.err()),
        }
    }

    #[test]
    fn frame_dir_missing_frame_detected() {
        let dir = tempfile::tempdir().unwrap();
        let meta = VideoMeta::new(4, 4, 3, 30);
        let mpath = write_video(dir.path(), SourceKind::FrameDir, meta);
        fs::remove_file(frame_path(&dir.path().join("frames"), 1)).unwrap();
        assert!(matches!(
            open_source(&mpath),
            Err(Error::GeometryMismatch { field: "frame_count", .. })
        ));
    }

    #[test]
    fn frame_dir_wrong_size_detected() {
        let dir = tempfile::tempdir().unwrap();
        let meta = VideoMeta::new(4, 4, 2, 30);
        let mpath = write_video(dir.path(), SourceKind::FrameDir, meta);
        let bad = Raster::filled(5, 4, [1, 2, 3]);
        bad.to_image()
            .save(frame_path(&dir.path().join("frames"), 1))
            .unwrap();
        assert!(matches!(
            open_source(&mpath),
            Err(Error::GeometryMismatch { field: "width", .. })
        ));
    }

    #[test]
    fn missing_and_malformed_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.toml");
        assert!(matches!(open_source(&missing), Err(Error::MissingFile(_))));

        let bad = dir.path().join("bad.toml");
        fs::write(&bad, "kind = \"raw_video\"\nwidth = 4\n").unwrap();
        match open_source(&bad) {
            Err(Error::MalformedManifest { reason, .. }) => {
                assert!(reason.contains("height") || reason.contains("missing"), "{reason}")
            }
            other => panic!("unexpected {:?}", other.err()),
        }

        let zero = dir.path().join("zero.toml");
        fs::write(
            &zero,
            "kind = \"raw_video\"\npath = \"v.rgb\"\nwidth = 0\nheight = 4\nframe_count = 1\nfps_num = 30\n",
        )
        .unwrap();
        assert!(matches!(open_source(&zero), Err(Error::MalformedManifest { .. })));

        let no_data = dir.path().join("nodata.toml");
        fs::write(
            &no_data,
            "kind = \"raw_video\"\npath = \"v.rgb\"\nwidth = 2\nheight = 2\nframe_count = 1\nfps_num = 30\n",
        )
        .unwrap();
        assert!(matches!(open_source(&no_data), Err(Error::MissingFile(_))));
    }

    #[test]
    fn empty_video_ends_immediately() {
        let dir = tempfile::tempdir().unwrap();
        let meta = VideoMeta::new(2, 2, 0, 30);
        let mpath = write_video(dir.path(), SourceKind::RawVideo, meta);
        let mut src = open_source(&mpath).unwrap();
        assert!(src.next_frame().unwrap().is_none());
    }

    #[test]
    fn random_access_reads_match_stream() {
        let dir = tempfile::tempdir().unwrap();
        let meta = VideoMeta::new(3, 3, 8, 30);
        let mpath = write_video(dir.path(), SourceKind::RawVideo, meta);
        let video = ManifestVideo::open(&mpath).unwrap();
        let mut reader = video.open_reader().unwrap();
        let frames = gradient_frames(&meta);
        for &i in &[5usize, 2, 7, 0, 3] {
            assert_eq!(reader.read_frame(i).unwrap().raster, frames[i]);
        }
        assert!(reader.read_frame(8).is_err());
    }
}
