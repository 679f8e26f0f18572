//! Visual-rhythm construction.
//!
//! Segment `k` covers frames `[k*T, (k+1)*T)`. Its VR image has one row per
//! frame: row `r` is the counting-line row of frame `k*T + r`. The last
//! segment may be shorter than `T`; it is never padded.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ingest::FrameSource;
use crate::model::{BBox, CountingLine, Raster, VideoMeta};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub segment_length_frames: usize,
    pub line: CountingLine,
}

impl SegmentSpec {
    pub const DEFAULT_LENGTH: usize = 900;

    pub fn new(segment_length_frames: usize, line_row: u32) -> Self {
        SegmentSpec {
            segment_length_frames,
            line: CountingLine::new(line_row),
        }
    }

    pub fn validate(&self, meta: &VideoMeta) -> Result<()> {
        if self.segment_length_frames < 2 {
            return Err(Error::invalid("segment_length", "must be >= 2"));
        }
        self.line.validate(meta)
    }

    pub fn segment_count(&self, frame_count: usize) -> usize {
        frame_count.div_ceil(self.segment_length_frames)
    }

    pub fn segment_start(&self, segment: usize) -> usize {
        segment * self.segment_length_frames
    }

    /// Number of frames in `segment` for a video of `frame_count` frames.
    pub fn segment_rows(&self, segment: usize, frame_count: usize) -> usize {
        let start = self.segment_start(segment);
        frame_count
            .saturating_sub(start)
            .min(self.segment_length_frames)
    }
}

impl Default for SegmentSpec {
    fn default() -> Self {
        SegmentSpec {
            segment_length_frames: Self::DEFAULT_LENGTH,
            line: CountingLine::default(),
        }
    }
}

/// Time-spatial image of one segment. `y` is time, `x` is the line's columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VrImage {
    pub segment_index: usize,
    pub start_frame: usize,
    pub raster: Raster,
}

impl VrImage {
    pub fn rows(&self) -> usize {
        self.raster.height as usize
    }

    pub fn width(&self) -> u32 {
        self.raster.width
    }
}

/// Region left in a VR image by one object crossing the line. Its height is
/// the number of frames the object touched the line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mark {
    pub bbox: BBox,
    pub confidence: f64,
}

impl Mark {
    pub fn new(bbox: BBox, confidence: f64) -> Self {
        Mark { bbox, confidence }
    }
}

/// Streams VR images out of a frame source, one segment at a time. At most one
/// frame and one partially built VR image are held in memory.
pub struct VrBuilder {
    source: FrameSource,
    spec: SegmentSpec,
    segment: usize,
    segments: usize,
}

pub fn vr_build(source: FrameSource, spec: SegmentSpec) -> Result<VrBuilder> {
    let meta = *source.meta();
    spec.validate(&meta)?;
    if source.cursor() != 0 {
        return Err(Error::invalid("source", "VR build needs a source positioned at frame 0"));
    }
    Ok(VrBuilder {
        segments: spec.segment_count(meta.frame_count),
        source,
        spec,
        segment: 0,
    })
}

impl VrBuilder {
    pub fn segment_count(&self) -> usize {
        self.segments
    }

    pub fn meta(&self) -> &VideoMeta {
        self.source.meta()
    }

    fn build_next(&mut self) -> Result<VrImage> {
        let meta = *self.source.meta();
        let k = self.segment;
        let start = self.spec.segment_start(k);
        let rows = self.spec.segment_rows(k, meta.frame_count);
        let line = self.spec.line.row_px;
        let stride = meta.width_px as usize * 3;
        let mut data = Vec::with_capacity(rows * stride);
        for r in 0..rows {
            let frame = self
                .source
                .next_frame()
                .map_err(|e| e.in_segment(k))?
                .ok_or_else(|| {
                    Error::invalid("source", format!("stream ended before frame {}", start + r))
                        .in_segment(k)
                })?;
            debug_assert_eq!(frame.index, start + r);
            data.extend_from_slice(frame.raster.row(line));
        }
        Ok(VrImage {
            segment_index: k,
            start_frame: start,
            raster: Raster::from_raw(meta.width_px, rows as u32, data)?,
        })
    }
}

impl Iterator for VrBuilder {
    type Item = Result<VrImage>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.segment >= self.segments {
            return None;
        }
        let out = self.build_next();
        self.segment = if out.is_ok() {
            self.segment + 1
        } else {
            self.segments
        };
        Some(out)
    }
}

pub const OVERLAY_RGB: [u8; 3] = [0, 255, 0];

/// Draws a one-pixel outline for every mark. Pixels off the outlines are untouched.
pub fn draw_marks(raster: &mut Raster, marks: &[Mark], rgb: [u8; 3]) {
    for m in marks {
        let Some(b) = m.bbox.clamp_to(raster.width, raster.height) else {
            continue;
        };
        let (x0, y0, x1, y1) = (b.x0 as u32, b.y0 as u32, b.x1 as u32 - 1, b.y1 as u32 - 1);
        for x in x0..=x1 {
            raster.put_pixel(x, y0, rgb);
            raster.put_pixel(x, y1, rgb);
        }
        for y in y0..=y1 {
            raster.put_pixel(x0, y, rgb);
            raster.put_pixel(x1, y, rgb);
        }
    }
}

/// Writes the VR raster with mark outlines as a PNG.
pub fn vr_render(vr: &VrImage, marks: &[Mark], out: &Path) -> Result<()> {
    let mut raster = vr.raster.clone();
    draw_marks(&mut raster, marks, OVERLAY_RGB);
    if raster.height == 0 {
        return Err(Error::invalid("vr", "cannot render an empty VR image"));
    }
    raster
        .to_image()
        .save_with_format(out, image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: out.to_path_buf(),
            source: e,
        })
}
