//! Run configuration: TOML file, command-line overrides, and the resolved
//! record written next to every run's outputs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use vrcount::bench::{ComparisonConfig, DEFAULT_MATCH_TOLERANCE_FRAMES};
use vrcount::ingest::SourceKind;
use vrcount::{DetectorSetup, MatchParams, SceneConfig, SegmentSpec, TrackerParams};

pub const OUTPUT_DIR_ENV: &str = "VRCOUNT_OUTPUT_DIR";
pub const RECORD_FILE: &str = "run_config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSettings {
    /// Sleep added to every detector call, both systems.
    pub stub_latency_ms: f64,
    pub match_tolerance_frames: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            stub_latency_ms: 0.0,
            match_tolerance_frames: DEFAULT_MATCH_TOLERANCE_FRAMES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSettings {
    /// `raw_video` (one packed RGB24 file) or `frame_dir` (one PNG per frame).
    pub format: SourceKind,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            format: SourceKind::RawVideo,
        }
    }
}

/// Every tunable of a run. Missing keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
    pub segment_length: usize,
    pub line_row: u32,
    pub matching: MatchParams,
    pub detectors: DetectorSetup,
    pub tracker: TrackerParams,
    pub bench: BenchSettings,
    pub synth: SynthSettings,
    pub scene: SceneConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: PathBuf::from("vrcount-out"),
            threads: 0,
            segment_length: SegmentSpec::DEFAULT_LENGTH,
            line_row: vrcount::CountingLine::DEFAULT_ROW,
            matching: MatchParams::default(),
            detectors: DetectorSetup::default(),
            tracker: TrackerParams::default(),
            bench: BenchSettings::default(),
            synth: SynthSettings::default(),
            scene: SceneConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            bail!("--config: no such file {}", path.display());
        }
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("--config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn spec(&self) -> SegmentSpec {
        SegmentSpec::new(self.segment_length, self.line_row)
    }

    pub fn comparison(&self) -> ComparisonConfig {
        ComparisonConfig {
            spec: self.spec(),
            detectors: self.detectors.clone(),
            match_params: self.matching,
            tracker: self.tracker,
            stub_latency_ms: self.bench.stub_latency_ms,
            match_tolerance_frames: self.bench.match_tolerance_frames,
        }
    }

    /// Range checks shared by every subcommand. Geometry checks against a
    /// particular video happen once the video is known.
    pub fn validate(&self) -> Result<()> {
        if self.segment_length < 2 {
            bail!("segment_length (--segment-length): must be >= 2, got {}", self.segment_length);
        }
        if !(self.bench.stub_latency_ms >= 0.0 && self.bench.stub_latency_ms.is_finite()) {
            bail!("bench.stub_latency_ms (--stub-latency-ms): must be >= 0");
        }
        self.matching.validate().context("matching")?;
        self.tracker.validate().context("tracker")?;
        self.detectors.validate().context("detectors")?;
        Ok(())
    }

    /// Writes the resolved config as `run_config.toml` in `dir`, headed by
    /// the subcommand as a comment. The file loads back through `--config`.
    pub fn write_record(&self, dir: &Path, command: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(RECORD_FILE);
        let text = format!(
            "# vrcount {command} {}\n{}",
            env!("CARGO_PKG_VERSION"),
            self.to_toml()?
        );
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
