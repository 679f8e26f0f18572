//! Detector contracts and backends.
//!
//! Two roles exist: a mark detector runs once per VR image, a vehicle
//! detector runs on individual frames. Backends: a classical
//! background-subtraction mark detector, ground-truth oracles for both roles,
//! and an adapter for out-of-process detectors.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::model::{ClassSet, Detection, Frame};
use crate::synth::GroundTruth;
use crate::vr::{Mark, SegmentSpec, VrImage};
use crate::{Error, Result};

pub mod classical;
pub mod external;
pub mod oracle;

pub use classical::{detect_marks_classical, estimate_background, ClassicalMarkDetector, MarkDetectorParams};
pub use external::{external_detect, ExternalDetector, ExternalDetectorConfig, ExternalMarkDetector};
pub use oracle::{oracle_detect_marks, oracle_detect_vehicles, DetectorNoise, OracleMarkDetector, OracleVehicleDetector};

pub trait MarkDetector: Send + Sync {
    fn detect_marks(&self, vr: &VrImage) -> Result<Vec<Mark>>;

    fn name(&self) -> &str;
}

pub trait VehicleDetector: Send + Sync {
    fn detect_vehicles(&self, frame: &Frame) -> Result<Vec<Detection>>;

    fn name(&self) -> &str;
}

impl<T: MarkDetector + ?Sized> MarkDetector for &T {
    fn detect_marks(&self, vr: &VrImage) -> Result<Vec<Mark>> {
        (**self).detect_marks(vr)
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<T: VehicleDetector + ?Sized> VehicleDetector for &T {
    fn detect_vehicles(&self, frame: &Frame) -> Result<Vec<Detection>> {
        (**self).detect_vehicles(frame)
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<T: MarkDetector + ?Sized> MarkDetector for Box<T> {
    fn detect_marks(&self, vr: &VrImage) -> Result<Vec<Mark>> {
        (**self).detect_marks(vr)
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<T: VehicleDetector + ?Sized> VehicleDetector for Box<T> {
    fn detect_vehicles(&self, frame: &Frame) -> Result<Vec<Detection>> {
        (**self).detect_vehicles(frame)
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Counts every call and optionally sleeps to model inference cost.
pub struct Instrumented<D> {
    inner: D,
    latency: Duration,
    calls: AtomicUsize,
}

impl<D> Instrumented<D> {
    pub fn new(inner: D) -> Self {
        Self::with_latency(inner, Duration::ZERO)
    }

    pub fn with_latency(inner: D, latency: Duration) -> Self {
        Instrumented {
            inner,
            latency,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &D {
        &self.inner
    }

    fn tick(&self) {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
    }
}

impl<D: MarkDetector> MarkDetector for Instrumented<D> {
    fn detect_marks(&self, vr: &VrImage) -> Result<Vec<Mark>> {
        self.tick();
        self.inner.detect_marks(vr)
    }
    fn name(&self) -> &str {
        self.inner.name()
    }
}

impl<D: VehicleDetector> VehicleDetector for Instrumented<D> {
    fn detect_vehicles(&self, frame: &Frame) -> Result<Vec<Detection>> {
        self.tick();
        self.inner.detect_vehicles(frame)
    }
    fn name(&self) -> &str {
        self.inner.name()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    #[default]
    Classical,
    Oracle,
    External,
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(DetectorKind::Classical),
            "oracle" => Ok(DetectorKind::Oracle),
            "external" => Ok(DetectorKind::External),
            other => Err(Error::invalid("detector", format!("unknown kind `{other}`"))),
        }
    }
}

/// Backend choice and settings for both detector roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSetup {
    pub mark: DetectorKind,
    /// `classical` is not a valid vehicle detector.
    pub vehicle: DetectorKind,
    pub mark_params: MarkDetectorParams,
    pub noise: DetectorNoise,
    pub external: ExternalDetectorConfig,
    pub classes: ClassSet,
}

impl Default for DetectorSetup {
    fn default() -> Self {
        DetectorSetup {
            mark: DetectorKind::Classical,
            vehicle: DetectorKind::Oracle,
            mark_params: MarkDetectorParams::default(),
            noise: DetectorNoise::default(),
            external: ExternalDetectorConfig::default(),
            classes: ClassSet::default(),
        }
    }
}

fn need_gt(gt: Option<&Arc<GroundTruth>>, role: &str) -> Result<Arc<GroundTruth>> {
    gt.cloned()
        .ok_or_else(|| Error::invalid(role, "the oracle detector needs ground truth"))
}

impl DetectorSetup {
    pub fn validate(&self) -> Result<()> {
        self.mark_params.validate()?;
        self.noise.validate()?;
        if self.vehicle == DetectorKind::Classical {
            return Err(Error::invalid("vehicle detector", "classical only detects marks"));
        }
        if self.mark == DetectorKind::External || self.vehicle == DetectorKind::External {
            self.external.validate()?;
        }
        Ok(())
    }

    pub fn mark_detector(
        &self,
        gt: Option<&Arc<GroundTruth>>,
        spec: SegmentSpec,
    ) -> Result<Box<dyn MarkDetector>> {
        Ok(match self.mark {
            DetectorKind::Classical => Box::new(ClassicalMarkDetector::new(self.mark_params)?),
            DetectorKind::Oracle => Box::new(OracleMarkDetector::new(need_gt(gt, "mark detector")?, spec)),
            DetectorKind::External => Box::new(ExternalMarkDetector::new(self.external.clone())?),
        })
    }

    pub fn vehicle_detector(&self, gt: Option<&Arc<GroundTruth>>) -> Result<Box<dyn VehicleDetector>> {
        Ok(match self.vehicle {
            DetectorKind::Classical => {
                return Err(Error::invalid("vehicle detector", "classical only detects marks"))
            }
            DetectorKind::Oracle => Box::new(
                OracleVehicleDetector::new(need_gt(gt, "vehicle detector")?, self.noise)?
                    .with_classes(self.classes.clone()),
            ),
            DetectorKind::External => Box::new(ExternalDetector::new(
                self.external.clone(),
                Some(self.classes.clone()),
            )?),
        })
    }
}
