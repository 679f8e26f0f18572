//! Background-subtraction mark detector.
//!
//! The VR background is the per-column temporal median of luma; marks occupy a
//! minority of rows, so the median ignores them. Pixels deviating by more than
//! `luma_threshold` form a mask that is closed with a square structuring
//! element and split into 8-connected components.

use serde::{Deserialize, Serialize};

use super::MarkDetector;
use crate::model::BBox;
use crate::vr::{Mark, VrImage};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MarkDetectorParams {
    pub luma_threshold: u8,
    pub min_area_px: u32,
    pub min_height_px: u32,
    pub morph_close_radius: u32,
}

impl Default for MarkDetectorParams {
    fn default() -> Self {
        MarkDetectorParams {
            luma_threshold: 25,
            min_area_px: 40,
            min_height_px: 2,
            morph_close_radius: 1,
        }
    }
}

impl MarkDetectorParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_height_px < 1 {
            return Err(Error::invalid("min_height_px", "must be >= 1"));
        }
        Ok(())
    }
}

/// Per-column temporal median (lower median) of the VR luma.
pub fn estimate_background(vr: &VrImage) -> Vec<u8> {
    let width = vr.width() as usize;
    let rows = vr.rows();
    if rows == 0 {
        return vec![0; width];
    }
    let luma = vr.raster.to_luma();
    let mut hist = vec![[0u32; 256]; width];
    for row in luma.chunks_exact(width) {
        for (h, &v) in hist.iter_mut().zip(row) {
            h[v as usize] += 1;
        }
    }
    let rank = ((rows - 1) / 2) as u32;
    hist.iter()
        .map(|h| {
            let mut seen = 0u32;
            for (v, &n) in h.iter().enumerate() {
                seen += n;
                if seen > rank {
                    return v as u8;
                }
            }
            255
        })
        .collect()
}

/// Binary mask stored row-major as bytes (0/1).
struct Mask {
    width: usize,
    height: usize,
    bits: Vec<u8>,
}

impl Mask {
    /// Sliding-window pass along rows (`horizontal`) or columns. A pixel is set
    /// when the count of set pixels in its window reaches `need(window_len)`;
    /// out-of-bounds pixels count as `oob`.
    fn window_pass(&self, radius: usize, horizontal: bool, dilate: bool) -> Mask {
        let (lines, len) = if horizontal {
            (self.height, self.width)
        } else {
            (self.width, self.height)
        };
        let idx = |line: usize, i: usize| {
            if horizontal {
                line * self.width + i
            } else {
                i * self.width + line
            }
        };
        let mut out = vec![0u8; self.bits.len()];
        let mut prefix = vec![0u32; len + 1];
        for line in 0..lines {
            for i in 0..len {
                prefix[i + 1] = prefix[i] + u32::from(self.bits[idx(line, i)]);
            }
            for i in 0..len {
                let lo = i.saturating_sub(radius);
                let hi = (i + radius + 1).min(len);
                let set = prefix[hi] - prefix[lo];
                let on = if dilate {
                    set > 0
                } else {
                    // out-of-bounds neighbours count as set
                    set as usize == hi - lo
                };
                out[idx(line, i)] = u8::from(on);
            }
        }
        Mask {
            width: self.width,
            height: self.height,
            bits: out,
        }
    }

    /// Closing with a `(2r+1)^2` square, computed as if the mask were
    /// surrounded by unset pixels. Never removes set pixels.
    fn close(&self, radius: usize) -> Mask {
        if radius == 0 {
            return Mask {
                width: self.width,
                height: self.height,
                bits: self.bits.clone(),
            };
        }
        let (pw, ph) = (self.width + 2 * radius, self.height + 2 * radius);
        let mut padded = vec![0u8; pw * ph];
        for (y, row) in self.bits.chunks_exact(self.width).enumerate() {
            let at = (y + radius) * pw + radius;
            padded[at..at + self.width].copy_from_slice(row);
        }
        let closed = Mask {
            width: pw,
            height: ph,
            bits: padded,
        }
        .window_pass(radius, true, true)
        .window_pass(radius, false, true)
        .window_pass(radius, true, false)
        .window_pass(radius, false, false);
        // erosion windows of interior pixels stay inside the padding
        let mut bits = Vec::with_capacity(self.bits.len());
        for y in 0..self.height {
            let at = (y + radius) * pw + radius;
            bits.extend_from_slice(&closed.bits[at..at + self.width]);
        }
        Mask {
            width: self.width,
            height: self.height,
            bits,
        }
    }

    /// 8-connected components as (bbox, pixel count).
    fn components(&self) -> Vec<(BBox, u32)> {
        let (w, h) = (self.width, self.height);
        let mut seen = vec![false; self.bits.len()];
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for start in 0..self.bits.len() {
            if self.bits[start] == 0 || seen[start] {
                continue;
            }
            seen[start] = true;
            stack.push(start);
            let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
            let mut area = 0u32;
            while let Some(p) = stack.pop() {
                let (x, y) = (p % w, p / w);
                area += 1;
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
                for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                    for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                        let q = ny * w + nx;
                        if self.bits[q] != 0 && !seen[q] {
                            seen[q] = true;
                            stack.push(q);
                        }
                    }
                }
            }
            let bbox = BBox::new(x0 as i32, y0 as i32, x1 as i32 + 1, y1 as i32 + 1)
                .expect("component has at least one pixel");
            out.push((bbox, area));
        }
        out
    }
}

pub fn detect_marks_classical(vr: &VrImage, params: &MarkDetectorParams) -> Vec<Mark> {
    let width = vr.width() as usize;
    let height = vr.rows();
    if width == 0 || height == 0 {
        return Vec::new();
    }
    let background = estimate_background(vr);
    let luma = vr.raster.to_luma();
    let bits = luma
        .chunks_exact(width)
        .flat_map(|row| {
            row.iter()
                .zip(&background)
                .map(|(&v, &b)| u8::from(v.abs_diff(b) > params.luma_threshold))
        })
        .collect();
    let mask = Mask {
        width,
        height,
        bits,
    }
    .close(params.morph_close_radius as usize);

    let mut marks: Vec<Mark> = mask
        .components()
        .into_iter()
        .filter(|(b, area)| *area >= params.min_area_px && b.height() as u32 >= params.min_height_px)
        .map(|(b, area)| {
            let confidence = if params.min_area_px == 0 {
                1.0
            } else {
                (f64::from(area) / (2.0 * f64::from(params.min_area_px))).min(1.0)
            };
            Mark::new(b, confidence)
        })
        .collect();
    marks.sort_by_key(|m| (m.bbox.y0, m.bbox.x0));
    marks
}

#[derive(Debug, Clone, Default)]
pub struct ClassicalMarkDetector {
    pub params: MarkDetectorParams,
}

impl ClassicalMarkDetector {
    pub fn new(params: MarkDetectorParams) -> Result<Self> {
        params.validate()?;
        Ok(ClassicalMarkDetector { params })
    }
}

impl MarkDetector for ClassicalMarkDetector {
    fn detect_marks(&self, vr: &VrImage) -> Result<Vec<Mark>> {
        Ok(detect_marks_classical(vr, &self.params))
    }

    fn name(&self) -> &str {
        "classical"
    }
}
