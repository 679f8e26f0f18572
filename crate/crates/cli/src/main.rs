//! `vrcount`: count line-crossing vehicles from visual-rhythm images, run the
//! tracking baseline, generate synthetic scenes, and compare the two counters.
//!
//! Exit status is 0 on success, 1 when the pipeline fails, and 2 for bad
//! flags, bad config, or missing inputs.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use config::{RunConfig, OUTPUT_DIR_ENV};
use vrcount::detect::DetectorKind;
use vrcount::ingest::{ManifestVideo, SourceKind, VideoWriter};
use vrcount::synth::{render_frame, SpawnMode};
use vrcount::vr::vr_render;
use vrcount::{
    baseline_count, compare_systems, count_video, gen_scene, report, score_counts, vr_build,
    ClassSet, CountReport, CountingLine, GroundTruth, Mark, VideoInput,
};

#[derive(Parser, Debug)]
#[command(name = "vrcount", version, about = "Vehicle counting with visual rhythm", propagate_version = true)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. They override the config file.
#[derive(Args, Debug, Default)]
struct Common {
    /// TOML config file; flags win over its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory [default: vrcount-out].
    #[arg(long, global = true, env = OUTPUT_DIR_ENV, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads, 0 for all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Frames per visual-rhythm segment [default: 900].
    #[arg(long, global = true, value_name = "FRAMES")]
    segment_length: Option<usize>,
    /// Row of the horizontal counting line [default: 120].
    #[arg(long, global = true, value_name = "ROW")]
    line_row: Option<u32>,

    /// Backend for both roles (classical sets only the mark detector).
    #[arg(long, global = true, value_name = "KIND")]
    detector: Option<DetectorKind>,
    /// classical | oracle | external
    #[arg(long, global = true, value_name = "KIND")]
    mark_detector: Option<DetectorKind>,
    /// oracle | external
    #[arg(long, global = true, value_name = "KIND")]
    vehicle_detector: Option<DetectorKind>,
    /// External detector program and arguments, split on whitespace.
    #[arg(long, global = true, value_name = "CMD")]
    external_cmd: Option<String>,
    #[arg(long, global = true, value_name = "SECS")]
    external_timeout: Option<f64>,
    /// Comma-separated class labels kept from the vehicle detector.
    #[arg(long, global = true, value_delimiter = ',', value_name = "LABELS")]
    classes: Option<Vec<String>>,

    #[arg(long, global = true)]
    luma_threshold: Option<u8>,
    #[arg(long, global = true, value_name = "PX")]
    min_area: Option<u32>,
    #[arg(long, global = true, value_name = "PX")]
    band_margin: Option<u32>,
    #[arg(long, global = true, value_name = "FRAC")]
    max_dist_frac: Option<f64>,
    #[arg(long, global = true, value_name = "CONF")]
    min_det_conf: Option<f64>,
    #[arg(long, global = true, value_name = "PX")]
    edge_margin: Option<u32>,

    /// Oracle noise: box edge jitter.
    #[arg(long, global = true, value_name = "PX")]
    jitter: Option<u32>,
    #[arg(long, global = true, value_name = "P")]
    miss_rate: Option<f64>,
    #[arg(long, global = true, value_name = "RATE")]
    spurious_rate: Option<f64>,
    #[arg(long, global = true)]
    noise_seed: Option<u64>,

    #[arg(long, global = true)]
    iou_threshold: Option<f64>,
    #[arg(long, global = true, value_name = "FRAMES")]
    max_age: Option<usize>,
    #[arg(long, global = true)]
    min_hits: Option<usize>,
}

#[derive(Args, Debug)]
struct Input {
    /// Source manifest (TOML) of the video.
    manifest: PathBuf,
    /// Ground-truth file; required by oracle detectors, enables accuracy scoring.
    #[arg(long, value_name = "FILE")]
    gt: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Raw,
    Frames,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Count vehicles with the visual-rhythm pipeline.
    Count(Input),
    /// Count vehicles with the frame-by-frame tracking baseline.
    Baseline(Input),
    /// Generate a synthetic scene: video, manifest, and ground truth.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long, value_name = "PX")]
        width: Option<u32>,
        #[arg(long, value_name = "PX")]
        height: Option<u32>,
        #[arg(long)]
        lanes: Option<u32>,
        /// Vehicles per 100 frames over all lanes.
        #[arg(long)]
        spawn_rate: Option<f64>,
        /// Center one vehicle per lane on every multiple of this many frames.
        #[arg(long, value_name = "FRAMES")]
        aligned_period: Option<usize>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Run both counters on one video and compare cost and accuracy.
    Bench {
        #[command(flatten)]
        input: Input,
        /// Sleep added to every detector call.
        #[arg(long, value_name = "MS")]
        stub_latency_ms: Option<f64>,
        #[arg(long, value_name = "FRAMES")]
        match_tolerance: Option<usize>,
    },
    /// Write every segment's VR image with detected marks outlined.
    VrRender(Input),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Count(_) => "count",
            Command::Baseline(_) => "baseline",
            Command::Synth { .. } => "synth",
            Command::Bench { .. } => "bench",
            Command::VrRender(_) => "vr-render",
        }
    }

    fn input(&self) -> Option<&Input> {
        match self {
            Command::Count(i) | Command::Baseline(i) | Command::VrRender(i) => Some(i),
            Command::Bench { input, .. } => Some(input),
            Command::Synth { .. } => None,
        }
    }
}

/// A failure and the exit status it maps to.
enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

trait Stage<T> {
    fn config(self) -> Result<T, Failure>;
    fn run(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Stage<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }
    fn run(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Run(e.into()))
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn resolve(cli: &Cli) -> anyhow::Result<RunConfig> {
    let a = &cli.common;
    let mut c = match &a.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    set(&mut c.output_dir, a.out.clone());
    set(&mut c.threads, a.threads);
    set(&mut c.segment_length, a.segment_length);
    if let Some(row) = a.line_row {
        c.line_row = row;
        c.scene.line_row = row;
    }

    let d = &mut c.detectors;
    if let Some(k) = a.detector {
        d.mark = k;
        if k != DetectorKind::Classical {
            d.vehicle = k;
        }
    }
    set(&mut d.mark, a.mark_detector);
    set(&mut d.vehicle, a.vehicle_detector);
    if let Some(cmd) = &a.external_cmd {
        d.external.command = cmd.split_whitespace().map(String::from).collect();
    }
    set(&mut d.external.timeout_secs, a.external_timeout);
    if let Some(labels) = &a.classes {
        d.classes = ClassSet::new(labels.iter().map(|s| s.trim())).context("--classes")?;
    }
    set(&mut d.mark_params.luma_threshold, a.luma_threshold);
    set(&mut d.mark_params.min_area_px, a.min_area);
    set(&mut d.noise.jitter_px, a.jitter);
    set(&mut d.noise.miss_rate, a.miss_rate);
    set(&mut d.noise.spurious_rate, a.spurious_rate);
    set(&mut d.noise.seed, a.noise_seed);

    let m = &mut c.matching;
    set(&mut m.band_margin_px, a.band_margin);
    set(&mut m.max_interval_dist_frac, a.max_dist_frac);
    set(&mut m.min_det_conf, a.min_det_conf);
    set(&mut m.edge_margin_px, a.edge_margin);

    let t = &mut c.tracker;
    set(&mut t.iou_threshold, a.iou_threshold);
    set(&mut t.max_age_frames, a.max_age);
    set(&mut t.min_hits, a.min_hits);

    match &cli.command {
        Command::Synth {
            seed,
            frames,
            width,
            height,
            lanes,
            spawn_rate,
            aligned_period,
            format,
        } => {
            let s = &mut c.scene;
            set(&mut s.seed, *seed);
            set(&mut s.meta.frame_count, *frames);
            set(&mut s.meta.width_px, *width);
            set(&mut s.meta.height_px, *height);
            set(&mut s.lanes, *lanes);
            set(&mut s.spawn_rate, *spawn_rate);
            if let Some(period) = aligned_period {
                s.spawn_mode = SpawnMode::BoundaryAligned { period: *period };
            }
            if let Some(f) = format {
                c.synth.format = match f {
                    Format::Raw => SourceKind::RawVideo,
                    Format::Frames => SourceKind::FrameDir,
                };
            }
            c.scene.validate().context("scene")?;
        }
        Command::Bench {
            stub_latency_ms,
            match_tolerance,
            ..
        } => {
            set(&mut c.bench.stub_latency_ms, *stub_latency_ms);
            set(&mut c.bench.match_tolerance_frames, *match_tolerance);
        }
        _ => {}
    }
    c.validate()?;
    Ok(c)
}

/// Video and optional ground truth, checked against the config.
struct Loaded {
    video: ManifestVideo,
    gt: Option<Arc<GroundTruth>>,
}

/// Detector roles a subcommand uses.
#[derive(Clone, Copy)]
struct Roles {
    mark: bool,
    vehicle: bool,
}

const BOTH: Roles = Roles { mark: true, vehicle: true };

fn load_input(input: &Input, c: &RunConfig, roles: Roles) -> anyhow::Result<Loaded> {
    let video = ManifestVideo::open(&input.manifest).with_context(|| format!("manifest {}", input.manifest.display()))?;
    let meta = video.meta();
    c.spec()
        .validate(&meta)
        .context("--segment-length/--line-row do not fit the video")?;
    let gt = match &input.gt {
        Some(p) => {
            let g = GroundTruth::load(p).context("--gt")?;
            if g.meta != meta {
                bail!("--gt {}: geometry {:?} differs from the video {:?}", p.display(), g.meta, meta);
            }
            Some(Arc::new(g))
        }
        None => None,
    };
    let d = &c.detectors;
    let oracle = (roles.mark && d.mark == DetectorKind::Oracle)
        || (roles.vehicle && d.vehicle == DetectorKind::Oracle);
    if gt.is_none() && oracle {
        bail!("--gt: required by the oracle detector (choose another with --detector)");
    }
    Ok(Loaded { video, gt })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, report::to_json(value)?).with_context(|| format!("writing {}", path.display()))
}

/// Writes `<stem>.json`/`.txt`, plus `<stem>_accuracy.json` when ground truth is known.
fn finish_report(r: &CountReport, stem: &str, c: &RunConfig, gt: Option<&Arc<GroundTruth>>) -> anyhow::Result<()> {
    let (json, _) = report::write_report(r, &c.output_dir, stem)?;
    println!("{}: counted {} vehicles over {} frames", r.system, r.total, r.frames);
    for (label, n) in &r.per_class {
        println!("  {label:<12} {n:>6}");
    }
    if let Some(g) = gt {
        let acc = score_counts(r, g, CountingLine::new(c.line_row), c.bench.match_tolerance_frames);
        write_json(&c.output_dir.join(format!("{stem}_accuracy.json")), &acc)?;
        print!("{}", report::accuracy_table(&acc));
    }
    println!("report: {}", json.display());
    Ok(())
}

fn synth(c: &RunConfig) -> Result<(), Failure> {
    let gt = gen_scene(&c.scene).run()?;
    let out = &c.output_dir;
    let kind = c.synth.format;
    let target = match kind {
        SourceKind::RawVideo => out.join("video.rgb"),
        SourceKind::FrameDir => out.join("frames"),
    };
    let mut w = VideoWriter::create(kind, &target, gt.meta).run()?;
    for t in 0..gt.meta.frame_count {
        w.push(&render_frame(&gt, t).run()?).run()?;
    }
    let manifest = out.join("video.toml");
    w.finish().run()?.save(&manifest).run()?;
    let line = CountingLine::new(c.line_row);
    gt.save(&out.join("ground_truth.json"), line).run()?;
    println!(
        "{} frames, {} vehicles, {} crossings of row {}",
        gt.meta.frame_count,
        gt.objects.len(),
        gt.crossings(line).len(),
        c.line_row
    );
    println!("manifest: {}", manifest.display());
    Ok(())
}

fn count(input: &Input, c: &RunConfig) -> Result<(), Failure> {
    let l = load_input(input, c, BOTH).config()?;
    let spec = c.spec();
    let marks = c.detectors.mark_detector(l.gt.as_ref(), spec).config()?;
    let vehicles = c.detectors.vehicle_detector(l.gt.as_ref()).config()?;
    let r = count_video(&l.video, &spec, &*marks, &*vehicles, &c.matching).run()?;
    finish_report(&r, "count", c, l.gt.as_ref()).run()
}

fn baseline(input: &Input, c: &RunConfig) -> Result<(), Failure> {
    let l = load_input(input, c, Roles { mark: false, vehicle: true }).config()?;
    let vehicles = c.detectors.vehicle_detector(l.gt.as_ref()).config()?;
    let r = baseline_count(&l.video, CountingLine::new(c.line_row), &*vehicles, &c.tracker).run()?;
    finish_report(&r, "baseline", c, l.gt.as_ref()).run()
}

fn bench(input: &Input, c: &RunConfig) -> Result<(), Failure> {
    let l = load_input(input, c, BOTH).config()?;
    let cmp = compare_systems(&l.video, l.gt, &c.comparison()).run()?;
    let (json, _) = report::write_comparison(&cmp, &c.output_dir).run()?;
    print!("{}", report::comparison_table(&cmp));
    println!("report: {}", json.display());
    Ok(())
}

#[derive(Serialize)]
struct SegmentMarks {
    segment_index: usize,
    start_frame: usize,
    rows: usize,
    image: PathBuf,
    marks: Vec<Mark>,
}

fn render(input: &Input, c: &RunConfig) -> Result<(), Failure> {
    let l = load_input(input, c, Roles { mark: true, vehicle: false }).config()?;
    let spec = c.spec();
    let detector = c.detectors.mark_detector(l.gt.as_ref(), spec).config()?;
    let dir = c.output_dir.join("vr");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display())).run()?;
    let mut index = Vec::new();
    for vr in vr_build(l.video.open_stream().run()?, spec).run()? {
        let vr = vr.run()?;
        let marks = detector.detect_marks(&vr).run()?;
        let name = PathBuf::from(format!("segment_{:04}.png", vr.segment_index));
        vr_render(&vr, &marks, &dir.join(&name)).run()?;
        index.push(SegmentMarks {
            segment_index: vr.segment_index,
            start_frame: vr.start_frame,
            rows: vr.rows(),
            image: name,
            marks,
        });
    }
    write_json(&dir.join("marks.json"), &index).run()?;
    let total: usize = index.iter().map(|s| s.marks.len()).sum();
    println!("{} segments, {total} marks: {}", index.len(), dir.display());
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let c = resolve(cli).config()?;
    if let Some(i) = cli.command.input() {
        if !i.manifest.is_file() {
            return Err(Failure::Config(anyhow!("manifest: no such file {}", i.manifest.display())));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(c.threads)
        .build()
        .map_err(|e| anyhow!("--threads: {e}"))
        .config()?;
    // written up front so failed runs leave their settings behind too
    c.write_record(&c.output_dir, cli.command.name()).run()?;
    log::info!("{} with {} threads into {}", cli.command.name(), pool.current_num_threads(), c.output_dir.display());
    pool.install(|| match &cli.command {
        Command::Synth { .. } => synth(&c),
        Command::Count(i) => count(i, &c),
        Command::Baseline(i) => baseline(i, &c),
        Command::Bench { input, .. } => bench(input, &c),
        Command::VrRender(i) => render(i, &c),
    })
}

/// The error chain, skipping causes whose text an outer message already carries.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let s = cause.to_string();
        if out.contains(&s) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&s);
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}
