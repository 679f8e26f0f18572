//! Out-of-process detectors speaking newline-delimited JSON.
//!
//! For each image the adapter writes a PNG to a temporary file and sends one
//! request line on the child's stdin:
//!
//! ```text
//! {"image": "/abs/path.png", "id": "17"}
//! ```
//!
//! and expects exactly one response line on its stdout:
//!
//! ```text
//! {"id": "17", "detections": [{"class": "Car", "conf": 0.9, "x0": 10, "y0": 10, "x1": 50, "y1": 30}]}
//! ```
//!
//! or `{"id": "17", "error": "message"}`. Coordinates are pixels, boxes
//! half-open. The child process is started lazily, kept alive between calls,
//! and serves one request at a time.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{MarkDetector, VehicleDetector};
use crate::model::{BBox, ClassSet, Detection, Frame, Raster};
use crate::vr::{Mark, VrImage};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExternalDetectorConfig {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    pub timeout_secs: f64,
}

impl Default for ExternalDetectorConfig {
    fn default() -> Self {
        ExternalDetectorConfig {
            command: Vec::new(),
            timeout_secs: 30.0,
        }
    }
}

impl ExternalDetectorConfig {
    pub fn new<I, S>(command: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ExternalDetectorConfig {
            command: command.into_iter().map(Into::into).collect(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.command.is_empty() {
            return Err(Error::invalid("external.command", "must name a program"));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(Error::invalid("external.timeout_secs", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Request<'a> {
    image: &'a str,
    id: &'a str,
}

#[derive(Deserialize)]
struct Response {
    id: String,
    #[serde(default)]
    detections: Option<Vec<WireDetection>>,
    #[serde(default)]
    error: Option<String>,
}

#[derive(Deserialize)]
struct WireDetection {
    class: String,
    conf: f64,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    // bytes of stdout consumed so far
    offset: usize,
}

impl Process {
    fn spawn(config: &ExternalDetectorConfig) -> Result<Self> {
        let display = config.command.join(" ");
        let mut child = Command::new(&config.command[0])
            .args(&config.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| Error::Spawn {
                command: display.clone(),
                source,
            })?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Ok(Process {
            child,
            stdin,
            lines: rx,
            offset: 0,
        })
    }
}

impl Drop for Process {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Handle to one external detector process. Requests are serialized.
pub struct ExternalDetector {
    config: ExternalDetectorConfig,
    classes: Option<ClassSet>,
    process: Mutex<Option<Process>>,
    next_id: AtomicU64,
    scratch: tempfile::TempDir,
}

impl ExternalDetector {
    /// `classes = None` accepts every label.
    pub fn new(config: ExternalDetectorConfig, classes: Option<ClassSet>) -> Result<Self> {
        config.validate()?;
        let scratch = tempfile::Builder::new()
            .prefix("vrcount-ext")
            .tempdir()
            .map_err(|e| Error::io(std::env::temp_dir(), e))?;
        Ok(ExternalDetector {
            config,
            classes,
            process: Mutex::new(None),
            next_id: AtomicU64::new(0),
            scratch,
        })
    }

    pub fn config(&self) -> &ExternalDetectorConfig {
        &self.config
    }

    pub fn detect(&self, image: &Raster) -> Result<Vec<Detection>> {
        let id = self.next_id.fetch_add(1, Ordering::SeqCst).to_string();
        let path = self.write_image(image, &id)?;
        let result = self.round_trip(&path, &id);
        let _ = std::fs::remove_file(&path);
        let wire = result?;
        wire.into_iter()
            .filter_map(|d| self.convert(d, image.width, image.height).transpose())
            .collect()
    }

    fn write_image(&self, image: &Raster, id: &str) -> Result<PathBuf> {
        let path = std::path::absolute(self.scratch.path().join(format!("req-{id}.png")))
            .map_err(|e| Error::io(self.scratch.path(), e))?;
        image
            .to_image()
            .save_with_format(&path, image::ImageFormat::Png)
            .map_err(|e| Error::Image {
                path: path.clone(),
                source: e,
            })?;
        Ok(path)
    }

    fn round_trip(&self, path: &std::path::Path, id: &str) -> Result<Vec<WireDetection>> {
        let mut guard = self.process.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(Process::spawn(&self.config)?);
        }
        let proc = guard.as_mut().expect("spawned above");

        let image = path.to_string_lossy();
        let mut line = serde_json::to_string(&Request { image: &image, id })
            .map_err(|e| Error::Serde(e.to_string()))?;
        line.push('\n');
        if let Err(e) = proc
            .stdin
            .write_all(line.as_bytes())
            .and_then(|_| proc.stdin.flush())
        {
            *guard = None;
            return Err(Error::Protocol {
                offset: 0,
                reason: format!("detector stopped reading requests: {e}"),
            });
        }

        let timeout = Duration::from_secs_f64(self.config.timeout_secs);
        let reply = match proc.lines.recv_timeout(timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => {
                let offset = proc.offset;
                *guard = None;
                return Err(Error::Protocol {
                    offset,
                    reason: format!("reading detector output: {e}"),
                });
            }
            Err(RecvTimeoutError::Timeout) => {
                // the stream is out of step now; start over on the next call
                *guard = None;
                return Err(Error::Timeout(self.config.timeout_secs));
            }
            Err(RecvTimeoutError::Disconnected) => {
                let offset = proc.offset;
                *guard = None;
                return Err(Error::Protocol {
                    offset,
                    reason: "detector closed its output".into(),
                });
            }
        };
        let line_start = proc.offset;
        proc.offset += reply.len();

        let response: Response = serde_json::from_str(reply.trim_end_matches(['\n', '\r']))
            .map_err(|e| Error::Protocol {
                offset: line_start + e.column().saturating_sub(1),
                reason: format!("malformed response record: {e}"),
            })?;
        if response.id != id {
            *guard = None;
            return Err(Error::Protocol {
                offset: line_start,
                reason: format!("expected response id {id:?}, got {:?}", response.id),
            });
        }
        if let Some(message) = response.error {
            return Err(Error::Remote {
                id: response.id,
                message,
            });
        }
        response.detections.ok_or_else(|| Error::Protocol {
            offset: line_start,
            reason: "response has neither `detections` nor `error`".into(),
        })
    }

    fn convert(&self, d: WireDetection, width: u32, height: u32) -> Result<Option<Detection>> {
        let coords = [d.x0, d.y0, d.x1, d.y1, d.conf];
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::Protocol {
                offset: 0,
                reason: format!("non-finite value in detection {:?}", d.class),
            });
        }
        if let Some(classes) = &self.classes {
            if !classes.contains(&d.class) {
                return Ok(None);
            }
        }
        let snap = |v: f64, up: bool| {
            let v = if up { v.ceil() } else { v.floor() };
            v.clamp(i32::MIN as f64, i32::MAX as f64) as i32
        };
        let bbox = BBox::new(
            snap(d.x0, false),
            snap(d.y0, false),
            snap(d.x1, true),
            snap(d.y1, true),
        )
        .and_then(|b| b.clamp_to(width, height));
        Ok(bbox.map(|b| Detection::new(b, d.class, d.conf.clamp(0.0, 1.0))))
    }
}

/// One request/response exchange with `endpoint` for `image`. Labels outside
/// `class_set` are dropped; boxes are clamped to the image.
pub fn external_detect(
    image: &Raster,
    class_set: &ClassSet,
    endpoint: &ExternalDetector,
) -> Result<Vec<Detection>> {
    Ok(endpoint
        .detect(image)?
        .into_iter()
        .filter(|d| class_set.contains(&d.class_label))
        .collect())
}

impl VehicleDetector for ExternalDetector {
    fn detect_vehicles(&self, frame: &Frame) -> Result<Vec<Detection>> {
        self.detect(&frame.raster)
    }

    fn name(&self) -> &str {
        "external"
    }
}

/// Uses an external detector on VR images; every returned box becomes a mark.
pub struct ExternalMarkDetector {
    inner: ExternalDetector,
}

impl ExternalMarkDetector {
    pub fn new(config: ExternalDetectorConfig) -> Result<Self> {
        Ok(ExternalMarkDetector {
            inner: ExternalDetector::new(config, None)?,
        })
    }
}

impl MarkDetector for ExternalMarkDetector {
    fn detect_marks(&self, vr: &VrImage) -> Result<Vec<Mark>> {
        if vr.rows() == 0 {
            return Ok(Vec::new());
        }
        let mut marks: Vec<Mark> = self
            .inner
            .detect(&vr.raster)?
            .into_iter()
            .map(|d| Mark::new(d.bbox, d.confidence))
            .collect();
        marks.sort_by_key(|m| (m.bbox.y0, m.bbox.x0));
        Ok(marks)
    }

    fn name(&self) -> &str {
        "external"
    }
}
