//! Deterministic synthetic traffic scenes with exact ground truth.
//!
//! Vehicles are axis-aligned rectangles travelling straight up or down their
//! lane at a constant rational speed. Positions are exact rationals; a
//! vehicle's drawn rows at frame `t` are `[floor(top(t)), floor(top(t)) + L)`.
//! Crossing intervals are derived in closed form from the same trajectory.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use num_rational::Rational64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{FrameReader, VideoInput};
use crate::model::{BBox, CountingLine, Frame, Raster, VideoMeta};
use crate::{Error, Result};

/// Speeds are drawn on a 1/16 px/frame grid.
const SPEED_DENOM: i64 = 16;
/// A pending vehicle waiting longer than this for a clear lane makes the scene infeasible.
const MAX_SPAWN_DELAY_FRAMES: usize = 2_000;
/// Minimum empty rows between consecutive vehicles of a lane.
const MIN_SPATIAL_GAP_PX: i64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Down,
    Up,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VehicleSize {
    pub width_px: u32,
    pub length_px: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpawnMode {
    /// Independent arrivals at `spawn_rate`.
    Random,
    /// One vehicle per lane centred on every multiple of `period`, so each
    /// crossing straddles a segment boundary when `period` is the segment length.
    BoundaryAligned { period: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub meta: VideoMeta,
    pub lanes: u32,
    /// Cycled over lanes when shorter than `lanes`.
    pub lane_directions: Vec<Direction>,
    /// Expected vehicles per 100 frames, summed over all lanes.
    pub spawn_rate: f64,
    /// px/frame, inclusive.
    pub speed_range: (f64, f64),
    pub class_mix: BTreeMap<String, f64>,
    pub size_table: BTreeMap<String, VehicleSize>,
    pub background_luma: u8,
    pub contrast: u8,
    /// Free columns kept on both sides of every lane.
    pub lane_margin_px: u32,
    /// Idle frames required at the line between consecutive crossings of a lane.
    pub min_gap_frames: usize,
    /// Line used for the headway rule.
    pub line_row: u32,
    pub spawn_mode: SpawnMode,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let size = |w, l| VehicleSize {
            width_px: w,
            length_px: l,
        };
        let size_table = BTreeMap::from([
            ("Bus".to_string(), size(28, 90)),
            ("Car".to_string(), size(20, 40)),
            ("Motorbike".to_string(), size(10, 24)),
            ("Pickup".to_string(), size(22, 46)),
            ("Truck".to_string(), size(28, 76)),
            ("Van".to_string(), size(24, 50)),
        ]);
        let class_mix = BTreeMap::from([
            ("Bus".to_string(), 0.05),
            ("Car".to_string(), 0.60),
            ("Motorbike".to_string(), 0.08),
            ("Pickup".to_string(), 0.10),
            ("Truck".to_string(), 0.07),
            ("Van".to_string(), 0.10),
        ]);
        SceneConfig {
            meta: VideoMeta::new(320, 240, 1800, 30),
            lanes: 3,
            lane_directions: vec![Direction::Down, Direction::Up],
            spawn_rate: 4.0,
            speed_range: (1.5, 6.0),
            class_mix,
            size_table,
            background_luma: 90,
            contrast: 75,
            lane_margin_px: 4,
            min_gap_frames: 6,
            line_row: CountingLine::DEFAULT_ROW,
            spawn_mode: SpawnMode::Random,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn lane_width(&self) -> u32 {
        self.meta.width_px / self.lanes.max(1)
    }

    pub fn lane_direction(&self, lane: u32) -> Direction {
        if self.lane_directions.is_empty() {
            return Direction::Down;
        }
        self.lane_directions[lane as usize % self.lane_directions.len()]
    }

    fn active_classes(&self) -> Vec<(&String, f64, VehicleSize)> {
        self.class_mix
            .iter()
            .filter(|(_, w)| **w > 0.0)
            .filter_map(|(c, w)| self.size_table.get(c).map(|s| (c, *w, *s)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.meta.validate()?;
        if self.lanes == 0 {
            return Err(Error::invalid("lanes", "must be >= 1"));
        }
        CountingLine::new(self.line_row).validate(&self.meta)?;
        if !(self.spawn_rate >= 0.0 && self.spawn_rate.is_finite()) {
            return Err(Error::invalid("spawn_rate", "must be a non-negative number"));
        }
        if self.class_mix.values().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::invalid("class_mix", "weights must be non-negative"));
        }
        for c in self.class_mix.keys() {
            if !self.size_table.contains_key(c) {
                return Err(Error::invalid("size_table", format!("no size for class {c:?}")));
            }
        }
        let active = self.active_classes();
        if active.is_empty() {
            return Err(Error::invalid("class_mix", "weights must not all be zero"));
        }
        let (v_min, v_max) = self.speed_range;
        if v_min.is_nan() || v_min < 1.0 {
            return Err(Error::invalid("speed_range", "minimum speed must be >= 1 px/frame"));
        }
        if v_max < v_min {
            return Err(Error::invalid("speed_range", "maximum below minimum"));
        }
        let min_len = active.iter().map(|(_, _, s)| s.length_px).min().unwrap_or(0);
        if v_max > f64::from(min_len) {
            return Err(Error::invalid(
                "speed_range",
                format!("maximum speed {v_max} exceeds shortest vehicle length {min_len}"),
            ));
        }
        if speed_grid(v_min, v_max).is_empty() {
            return Err(Error::invalid("speed_range", "no speed on the 1/16 px grid in range"));
        }
        let usable = i64::from(self.lane_width()) - 2 * i64::from(self.lane_margin_px);
        for (c, _, s) in &active {
            if s.width_px == 0 || s.length_px == 0 {
                return Err(Error::invalid("size_table", format!("{c:?} has a zero dimension")));
            }
            if i64::from(s.width_px) > usable {
                return Err(Error::invalid(
                    "size_table",
                    format!(
                        "{c:?} is {} px wide but lanes only fit {usable} px",
                        s.width_px
                    ),
                ));
            }
        }
        if let SpawnMode::BoundaryAligned { period } = self.spawn_mode {
            if period < 2 {
                return Err(Error::invalid("spawn_mode.period", "must be >= 2"));
            }
        }
        Ok(())
    }
}

fn speed_grid(v_min: f64, v_max: f64) -> std::ops::RangeInclusive<i64> {
    let lo = (v_min * SPEED_DENOM as f64).ceil() as i64;
    let hi = (v_max * SPEED_DENOM as f64).floor() as i64;
    lo..=hi
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderStyle {
    pub background_luma: u8,
    pub contrast: u8,
}

/// One vehicle and its complete trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneObject {
    pub id: u32,
    pub class_label: String,
    pub lane: u32,
    pub direction: Direction,
    /// px per frame.
    pub speed: Rational64,
    pub spawn_frame: usize,
    /// Top row at `spawn_frame`.
    pub entry_row: i64,
    pub x0: i32,
    pub x1: i32,
    pub length: u32,
}

fn floor_div(a: i64, b: i64) -> i64 {
    a.div_euclid(b)
}

fn ceil_div(a: i64, b: i64) -> i64 {
    -((-a).div_euclid(b))
}

impl SceneObject {
    /// Drawn top row at frame `t`, or `None` before the object exists.
    pub fn top_row(&self, t: usize) -> Option<i64> {
        if t < self.spawn_frame {
            return None;
        }
        let (p, q) = (*self.speed.numer(), *self.speed.denom());
        let dt = (t - self.spawn_frame) as i64;
        let step = match self.direction {
            Direction::Down => p * dt,
            Direction::Up => -p * dt,
        };
        Some(floor_div(self.entry_row * q + step, q))
    }

    /// Unclipped box at frame `t`.
    pub fn bbox_at(&self, t: usize) -> Option<BBox> {
        let y = self.top_row(t)?;
        BBox::new(self.x0, y as i32, self.x1, (y + i64::from(self.length)) as i32)
    }

    pub fn visible_at(&self, t: usize, meta: &VideoMeta) -> bool {
        self.bbox_at(t)
            .is_some_and(|b| b.y1 > 0 && b.y0 < meta.height_px as i32)
    }

    /// Frames `[first, last]` during which the drawn box covers `row`, from the
    /// trajectory in closed form. Not clipped to the video.
    pub fn line_interval(&self, row: u32) -> Option<(usize, usize)> {
        let (p, q) = (*self.speed.numer(), *self.speed.denom());
        let r = i64::from(row);
        let a = r - i64::from(self.length) + 1;
        let e = self.entry_row;
        // offsets relative to spawn_frame
        let (first, last) = match self.direction {
            // top >= a  and  top <= r
            Direction::Down => (ceil_div((a - e) * q, p), ceil_div((r + 1 - e) * q, p) - 1),
            Direction::Up => (floor_div((e - r - 1) * q, p) + 1, floor_div((e - a) * q, p)),
        };
        let first = first.max(0);
        if first > last {
            return None;
        }
        let t0 = self.spawn_frame as i64;
        Some(((t0 + first) as usize, (t0 + last) as usize))
    }

    /// Frame in `[first, last]` whose drawn center is nearest the line; earliest on ties.
    fn center_frame(&self, row: u32, first: usize, last: usize) -> usize {
        let target = 2 * i64::from(row) + 1 - i64::from(self.length);
        (first..=last)
            .min_by_key(|&t| (2 * self.top_row(t).unwrap_or(i64::MIN / 4) - target).abs())
            .unwrap_or(first)
    }

    /// First frame at which the object is entirely beyond the far edge.
    fn exit_frame(&self, meta: &VideoMeta) -> usize {
        let (p, q) = (*self.speed.numer(), *self.speed.denom());
        let e = self.entry_row;
        let travel = match self.direction {
            // need top >= height
            Direction::Down => i64::from(meta.height_px) - e,
            // need top + length <= 0
            Direction::Up => e + i64::from(self.length),
        };
        self.spawn_frame + ceil_div(travel.max(0) * q, p).max(0) as usize
    }
}

/// A ground-truth line crossing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub object_id: u32,
    pub class_label: String,
    pub center_frame: usize,
    /// Inclusive `(first, last)` frames touching the line.
    pub frame_interval: (usize, usize),
    /// Half-open column range.
    pub x_extent: (i32, i32),
}

impl CrossingEvent {
    pub fn duration(&self) -> usize {
        self.frame_interval.1 - self.frame_interval.0 + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub meta: VideoMeta,
    pub style: RenderStyle,
    pub objects: Vec<SceneObject>,
}

impl GroundTruth {
    pub fn crossings(&self, line: CountingLine) -> Vec<CrossingEvent> {
        crossings(self, line)
    }

    pub fn object(&self, id: u32) -> Option<&SceneObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Writes objects plus the crossings of `line` as pretty JSON.
    pub fn save(&self, path: &Path, line: CountingLine) -> Result<()> {
        let file = GroundTruthFile {
            meta: self.meta,
            style: self.style,
            line_row: line.row_px,
            objects: self.objects.clone(),
            crossings: self.crossings(line),
        };
        let text = serde_json::to_string_pretty(&file).map_err(|e| Error::Serde(e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: GroundTruthFile =
            serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
        Ok(GroundTruth {
            meta: file.meta,
            style: file.style,
            objects: file.objects,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct GroundTruthFile {
    meta: VideoMeta,
    style: RenderStyle,
    line_row: u32,
    objects: Vec<SceneObject>,
    crossings: Vec<CrossingEvent>,
}

/// Line crossings that lie within the video, sorted by center frame.
pub fn crossings(gt: &GroundTruth, line: CountingLine) -> Vec<CrossingEvent> {
    let n = gt.meta.frame_count;
    let mut out: Vec<CrossingEvent> = gt
        .objects
        .iter()
        .filter_map(|o| {
            let (first, last) = o.line_interval(line.row_px)?;
            if n == 0 || first >= n {
                return None;
            }
            let last = last.min(n - 1);
            Some(CrossingEvent {
                object_id: o.id,
                class_label: o.class_label.clone(),
                center_frame: o.center_frame(line.row_px, first, last),
                frame_interval: (first, last),
                x_extent: (o.x0, o.x1),
            })
        })
        .collect();
    out.sort_by_key(|c| (c.center_frame, c.x_extent.0, c.object_id));
    out
}

struct Candidate {
    class: String,
    size: VehicleSize,
    speed: Rational64,
    offset: u32,
    arrival: usize,
}

struct SceneBuilder<'a> {
    config: &'a SceneConfig,
    objects: Vec<SceneObject>,
    last_in_lane: Vec<Option<usize>>,
}

impl<'a> SceneBuilder<'a> {
    fn object(&self, c: &Candidate, lane: u32, spawn: usize) -> SceneObject {
        let cfg = self.config;
        let direction = cfg.lane_direction(lane);
        let x0 = (lane * cfg.lane_width() + cfg.lane_margin_px + c.offset) as i32;
        SceneObject {
            id: self.objects.len() as u32,
            class_label: c.class.clone(),
            lane,
            direction,
            speed: c.speed,
            spawn_frame: spawn,
            entry_row: match direction {
                Direction::Down => -i64::from(c.size.length_px),
                Direction::Up => i64::from(cfg.meta.height_px),
            },
            x0,
            x1: x0 + c.size.width_px as i32,
            length: c.size.length_px,
        }
    }

    /// Whether `obj` can join its lane behind the previous vehicle.
    fn clear(&self, obj: &SceneObject) -> bool {
        let Some(prev) = self.last_in_lane[obj.lane as usize].map(|i| &self.objects[i]) else {
            return true;
        };
        let row = self.config.line_row;
        let (Some((_, prev_last)), Some((first, _))) =
            (prev.line_interval(row), obj.line_interval(row))
        else {
            return false;
        };
        if first <= prev_last + self.config.min_gap_frames {
            return false;
        }
        let meta = &self.config.meta;
        let end = prev.exit_frame(meta).min(obj.exit_frame(meta));
        for t in obj.spawn_frame..=end {
            let (Some(a), Some(b)) = (prev.bbox_at(t), obj.bbox_at(t)) else {
                continue;
            };
            let gap = if a.y0 <= b.y0 {
                i64::from(b.y0) - i64::from(a.y1)
            } else {
                i64::from(a.y0) - i64::from(b.y1)
            };
            if gap < MIN_SPATIAL_GAP_PX {
                return false;
            }
        }
        true
    }

    fn push(&mut self, obj: SceneObject) {
        self.last_in_lane[obj.lane as usize] = Some(self.objects.len());
        self.objects.push(obj);
    }
}

struct Sampler {
    rng: ChaCha8Rng,
    classes: Vec<(String, VehicleSize)>,
    weights: WeightedIndex<f64>,
    speeds: std::ops::RangeInclusive<i64>,
}

impl Sampler {
    fn new(config: &SceneConfig) -> Result<Self> {
        let active = config.active_classes();
        let weights = WeightedIndex::new(active.iter().map(|(_, w, _)| *w))
            .map_err(|e| Error::invalid("class_mix", e.to_string()))?;
        Ok(Sampler {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            classes: active.into_iter().map(|(c, _, s)| (c.clone(), s)).collect(),
            weights,
            speeds: speed_grid(config.speed_range.0, config.speed_range.1),
        })
    }

    fn vehicle(&mut self, config: &SceneConfig, arrival: usize, max_speed: Option<Rational64>) -> Candidate {
        let (class, size) = self.classes[self.weights.sample(&mut self.rng)].clone();
        let mut hi = *self.speeds.end();
        if let Some(cap) = max_speed {
            hi = hi.min((cap * SPEED_DENOM).floor().to_integer());
        }
        let lo = (*self.speeds.start()).min(hi);
        let speed = Rational64::new(self.rng.random_range(lo..=hi), SPEED_DENOM);
        let slack = config.lane_width() - 2 * config.lane_margin_px - size.width_px;
        let offset = self.rng.random_range(0..=slack);
        Candidate {
            class,
            size,
            speed,
            offset,
            arrival,
        }
    }
}

/// Generates a scene. Same config, same scene.
pub fn gen_scene(config: &SceneConfig) -> Result<GroundTruth> {
    config.validate()?;
    let mut builder = SceneBuilder {
        config,
        objects: Vec::new(),
        last_in_lane: vec![None; config.lanes as usize],
    };
    let mut sampler = Sampler::new(config)?;
    match config.spawn_mode {
        SpawnMode::Random => gen_random(&mut builder, &mut sampler)?,
        SpawnMode::BoundaryAligned { period } => gen_aligned(&mut builder, &mut sampler, period)?,
    }
    Ok(GroundTruth {
        meta: config.meta,
        style: RenderStyle {
            background_luma: config.background_luma,
            contrast: config.contrast,
        },
        objects: builder.objects,
    })
}

fn gen_random(builder: &mut SceneBuilder<'_>, sampler: &mut Sampler) -> Result<()> {
    let config = builder.config;
    let frames = config.meta.frame_count;
    let p_lane = config.spawn_rate / 100.0 / f64::from(config.lanes);
    if p_lane <= 0.0 {
        return Ok(());
    }
    if p_lane > 1.0 {
        return Err(Error::Infeasible(format!(
            "spawn_rate {} exceeds one vehicle per lane per frame",
            config.spawn_rate
        )));
    }
    let mut queues: Vec<VecDeque<Candidate>> = (0..config.lanes).map(|_| VecDeque::new()).collect();
    for t in 0..frames {
        for lane in 0..config.lanes {
            if sampler.rng.random_bool(p_lane) {
                let c = sampler.vehicle(config, t, None);
                queues[lane as usize].push_back(c);
            }
            let Some(head) = queues[lane as usize].front() else {
                continue;
            };
            let obj = builder.object(head, lane, t);
            match obj.line_interval(config.line_row) {
                // the crossing would not finish inside the video
                Some((_, last)) if last >= frames => {
                    queues[lane as usize].pop_front();
                }
                None => {
                    queues[lane as usize].pop_front();
                }
                Some(_) => {
                    if builder.clear(&obj) {
                        builder.push(obj);
                        queues[lane as usize].pop_front();
                    } else if t - head.arrival > MAX_SPAWN_DELAY_FRAMES {
                        return Err(Error::Infeasible(format!(
                            "lane {lane} stayed blocked for {MAX_SPAWN_DELAY_FRAMES} frames; \
                             lower spawn_rate ({})",
                            config.spawn_rate
                        )));
                    }
                }
            }
        }
    }
    Ok(())
}

fn gen_aligned(builder: &mut SceneBuilder<'_>, sampler: &mut Sampler, period: usize) -> Result<()> {
    let config = builder.config;
    let frames = config.meta.frame_count;
    let mut boundary = period;
    while boundary < frames {
        for lane in 0..config.lanes {
            let mut placed = false;
            for _attempt in 0..32 {
                // at least two frames on the line so the crossing can straddle
                let probe = sampler.vehicle(config, boundary, None);
                let cap = Rational64::from_integer(i64::from(probe.size.length_px)) / 2;
                let c = if probe.speed > cap {
                    sampler.vehicle(config, boundary, Some(cap))
                } else {
                    probe
                };
                let probe_obj = builder.object(&c, lane, 0);
                let Some((f, l)) = probe_obj.line_interval(config.line_row) else {
                    continue;
                };
                if l <= f {
                    continue;
                }
                let half = (l - f).div_ceil(2);
                let Some(spawn) = boundary.checked_sub(f + half) else {
                    continue;
                };
                let obj = builder.object(&c, lane, spawn);
                match obj.line_interval(config.line_row) {
                    Some((first, last)) if first < boundary && last >= boundary && last < frames => {}
                    _ => continue,
                }
                if builder.clear(&obj) {
                    builder.push(obj);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::Infeasible(format!(
                    "could not place a vehicle across boundary {boundary} in lane {lane}; \
                     period {period} is too short for the vehicle sizes"
                )));
            }
        }
        boundary += period;
    }
    Ok(())
}

/// Colour offsets per class; each has near-zero luma so marks keep the target contrast.
fn class_tint(label: &str) -> [i32; 3] {
    match label {
        "Car" => [30, -12, -21],
        "Bus" => [-20, 6, 22],
        "Truck" => [12, -8, 10],
        "Van" => [-10, 0, 26],
        "Pickup" => [16, -4, -21],
        "Motorbike" => [0, 6, -31],
        _ => [0, 0, 0],
    }
}

pub fn object_rgb(style: &RenderStyle, label: &str) -> [u8; 3] {
    let base = i32::from(style.background_luma) + i32::from(style.contrast);
    let tint = class_tint(label);
    [0, 1, 2].map(|i| (base + tint[i]).clamp(0, 255) as u8)
}

/// Renders frame `t`: flat background, one filled rectangle per visible object.
pub fn render_frame(gt: &GroundTruth, t: usize) -> Result<Frame> {
    if t >= gt.meta.frame_count {
        return Err(Error::invalid(
            "frame",
            format!("index {t} beyond frame_count {}", gt.meta.frame_count),
        ));
    }
    let bg = gt.style.background_luma;
    let mut raster = Raster::filled(gt.meta.width_px, gt.meta.height_px, [bg; 3]);
    for o in &gt.objects {
        if let Some(b) = o.bbox_at(t) {
            raster.fill_box(&b, object_rgb(&gt.style, &o.class_label));
        }
    }
    Frame::new(t, raster, &gt.meta)
}

/// Renders frames on demand, so large scenes never touch the disk.
#[derive(Debug, Clone)]
pub struct SceneVideo {
    gt: Arc<GroundTruth>,
}

impl SceneVideo {
    pub fn new(gt: Arc<GroundTruth>) -> Self {
        SceneVideo { gt }
    }

    pub fn ground_truth(&self) -> &Arc<GroundTruth> {
        &self.gt
    }
}

impl VideoInput for SceneVideo {
    fn meta(&self) -> VideoMeta {
        self.gt.meta
    }

    fn open_reader(&self) -> Result<Box<dyn FrameReader>> {
        Ok(Box::new(self.clone()))
    }
}

impl FrameReader for SceneVideo {
    fn meta(&self) -> &VideoMeta {
        &self.gt.meta
    }

    fn read_frame(&mut self, index: usize) -> Result<Frame> {
        render_frame(&self.gt, index)
    }
}
