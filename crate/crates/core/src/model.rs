//! Domain types shared by every stage of the pipeline.
//!
//! Coordinates are 0-based pixels. Boxes are half-open on the max side, so a
//! box `[x0, x1) x [y0, y1)` has width `x1 - x0`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::Error;

/// Stream geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub width_px: u32,
    pub height_px: u32,
    pub frame_count: usize,
    pub fps_num: u32,
    pub fps_den: u32,
}

impl VideoMeta {
    pub fn new(width_px: u32, height_px: u32, frame_count: usize, fps: u32) -> Self {
        VideoMeta {
            width_px,
            height_px,
            frame_count,
            fps_num: fps,
            fps_den: 1,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.width_px == 0 {
            return Err(Error::invalid("width_px", "must be >= 1"));
        }
        if self.height_px == 0 {
            return Err(Error::invalid("height_px", "must be >= 1"));
        }
        if self.fps_num == 0 || self.fps_den == 0 {
            return Err(Error::invalid("fps", "must be > 0"));
        }
        Ok(())
    }

    pub fn fps(&self) -> f64 {
        f64::from(self.fps_num) / f64::from(self.fps_den)
    }

    /// Bytes of one packed RGB24 frame.
    pub fn frame_bytes(&self) -> usize {
        self.width_px as usize * self.height_px as usize * 3
    }
}

/// Packed 8-bit RGB raster, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl Raster {
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            data.extend_from_slice(&rgb);
        }
        Raster {
            width,
            height,
            data,
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self, Error> {
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(Error::invalid(
                "raster",
                format!("expected {expected} bytes for {width}x{height}, got {}", data.len()),
            ));
        }
        Ok(Raster {
            width,
            height,
            data,
        })
    }

    pub fn row(&self, y: u32) -> &[u8] {
        let stride = self.width as usize * 3;
        let start = y as usize * stride;
        &self.data[start..start + stride]
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Fills the part of `bbox` that lies inside the raster.
    pub fn fill_box(&mut self, bbox: &BBox, rgb: [u8; 3]) {
        let Some(b) = bbox.clamp_to(self.width, self.height) else {
            return;
        };
        let stride = self.width as usize * 3;
        for y in b.y0..b.y1 {
            let row = &mut self.data[y as usize * stride..(y as usize + 1) * stride];
            for px in row[b.x0 as usize * 3..b.x1 as usize * 3].chunks_exact_mut(3) {
                px.copy_from_slice(&rgb);
            }
        }
    }

    pub fn to_luma(&self) -> Vec<u8> {
        luma(&self.data)
    }

    pub fn to_image(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("raster length matches its dimensions")
    }
}

impl fmt::Debug for Raster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Raster({}x{})", self.width, self.height)
    }
}

/// One decoded video frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub index: usize,
    pub raster: Raster,
}

impl Frame {
    pub fn new(index: usize, raster: Raster, meta: &VideoMeta) -> Result<Self, Error> {
        if raster.width != meta.width_px || raster.height != meta.height_px {
            return Err(Error::invalid(
                "frame",
                format!(
                    "frame {index} is {}x{}, stream is {}x{}",
                    raster.width, raster.height, meta.width_px, meta.height_px
                ),
            ));
        }
        if index >= meta.frame_count {
            return Err(Error::invalid(
                "frame",
                format!("index {index} beyond frame_count {}", meta.frame_count),
            ));
        }
        Ok(Frame { index, raster })
    }
}

/// Horizontal counting line, one pixel row tall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountingLine {
    pub row_px: u32,
}

impl CountingLine {
    pub const DEFAULT_ROW: u32 = 120;

    pub fn new(row_px: u32) -> Self {
        CountingLine { row_px }
    }

    pub fn validate(&self, meta: &VideoMeta) -> Result<(), Error> {
        if self.row_px >= meta.height_px {
            return Err(Error::invalid(
                "line_row",
                format!("row {} outside frame height {}", self.row_px, meta.height_px),
            ));
        }
        Ok(())
    }
}

impl Default for CountingLine {
    fn default() -> Self {
        CountingLine::new(Self::DEFAULT_ROW)
    }
}

/// Axis-aligned half-open box in integer pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl BBox {
    /// Returns `None` for empty boxes.
    pub fn new(x0: i32, y0: i32, x1: i32, y1: i32) -> Option<Self> {
        (x0 < x1 && y0 < y1).then_some(BBox { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> i32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> i32 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> i64 {
        i64::from(self.width()) * i64::from(self.height())
    }

    /// Twice the vertical center, kept integral.
    pub fn y_center2(&self) -> i64 {
        i64::from(self.y0) + i64::from(self.y1)
    }

    pub fn x_center2(&self) -> i64 {
        i64::from(self.x0) + i64::from(self.x1)
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        BBox::new(
            self.x0.max(other.x0),
            self.y0.max(other.y0),
            self.x1.min(other.x1),
            self.y1.min(other.y1),
        )
    }

    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BBox> {
        let w = i32::try_from(width).unwrap_or(i32::MAX);
        let h = i32::try_from(height).unwrap_or(i32::MAX);
        BBox::new(
            self.x0.clamp(0, w),
            self.y0.clamp(0, h),
            self.x1.clamp(0, w),
            self.y1.clamp(0, h),
        )
    }

    pub fn overlaps_rows(&self, lo: i32, hi_exclusive: i32) -> bool {
        self.y0 < hi_exclusive && lo < self.y1
    }

    pub fn overlaps_cols(&self, x0: i32, x1: i32) -> bool {
        self.x0 < x1 && x0 < self.x1
    }
}

impl fmt::Display for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{},{},{})", self.x0, self.y0, self.x1, self.y1)
    }
}

/// Intersection over union; 0 when the boxes are disjoint.
pub fn bbox_iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b).map_or(0, |i| i.area());
    if inter == 0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub class_label: String,
    pub confidence: f64,
}

impl Detection {
    pub fn new(bbox: BBox, class_label: impl Into<String>, confidence: f64) -> Self {
        Detection {
            bbox,
            class_label: class_label.into(),
            confidence,
        }
    }
}

/// Ordered, non-empty set of unique class labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ClassSet {
    labels: Vec<String>,
}

impl ClassSet {
    pub const VEHICLES: [&'static str; 6] = ["Bus", "Car", "Motorbike", "Pickup", "Truck", "Van"];

    pub fn new<I, S>(labels: I) -> Result<Self, Error>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::invalid("class_set", "must not be empty"));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::invalid("class_set", format!("duplicate label {l:?}")));
            }
        }
        Ok(ClassSet { labels })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl Default for ClassSet {
    fn default() -> Self {
        ClassSet::new(Self::VEHICLES).expect("default labels are unique")
    }
}

impl TryFrom<Vec<String>> for ClassSet {
    type Error = Error;
    fn try_from(v: Vec<String>) -> Result<Self, Error> {
        ClassSet::new(v)
    }
}

impl From<ClassSet> for Vec<String> {
    fn from(c: ClassSet) -> Self {
        c.labels
    }
}

/// BT.601 luma of packed RGB pixels: `round(0.299 R + 0.587 G + 0.114 B)`.
pub fn luma(rgb: &[u8]) -> Vec<u8> {
    rgb.chunks_exact(3)
        .map(|p| luma_px([p[0], p[1], p[2]]))
        .collect()
}

#[inline]
pub fn luma_px(p: [u8; 3]) -> u8 {
    // fixed point, weights scaled by 1000
    let y = 299 * u32::from(p[0]) + 587 * u32::from(p[1]) + 114 * u32::from(p[2]);
    ((y + 500) / 1000).min(255) as u8
}
