//! JSON and plain-text writers for count and benchmark results.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bench::{AccuracyResult, Comparison};
use crate::count::CountReport;
use crate::model::BBox;
use crate::{Error, Result};

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn fmt_box(b: Option<BBox>) -> String {
    b.map_or_else(|| "-".to_string(), |b| b.to_string())
}

pub fn report_table(report: &CountReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "system: {}", report.system);
    let _ = writeln!(
        s,
        "frames: {}  segments: {}  mark detector calls: {}  vehicle detector calls: {}",
        report.frames, report.segments, report.mark_detector_calls, report.vehicle_detector_calls
    );
    let _ = writeln!(s, "total: {}  rejected marks: {}", report.total, report.rejected_marks);
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<12} {:>6}", "class", "count");
    for (label, n) in &report.per_class {
        let _ = writeln!(s, "{label:<12} {n:>6}");
    }
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:>8} {:<10} {:<22} {:<22} {:>5}",
        "frame", "class", "mark", "detection", "score"
    );
    for v in &report.counted {
        let _ = writeln!(
            s,
            "{:>8} {:<10} {:<22} {:<22} {:>5}",
            v.global_frame,
            v.class_label,
            fmt_box(v.mark.map(|m| m.bbox)),
            fmt_box(v.detection.as_ref().map(|d| d.bbox)),
            v.score.map_or_else(|| "-".to_string(), |x| x.to_string()),
        );
    }
    s
}

/// Writes `<stem>.json` and `<stem>.txt` under `dir`.
pub fn write_report(report: &CountReport, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
    let json = dir.join(format!("{stem}.json"));
    let txt = dir.join(format!("{stem}.txt"));
    write(&json, &to_json(report)?)?;
    write(&txt, &report_table(report))?;
    Ok((json, txt))
}

pub fn accuracy_table(acc: &AccuracyResult) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "predicted {}  actual {}  counting accuracy {:.2}%",
        acc.predicted, acc.actual, acc.counting_accuracy_pct
    );
    let _ = writeln!(
        s,
        "paired {}  unpaired predictions {}  missed crossings {}",
        acc.paired, acc.unpaired_predictions, acc.missed_crossings
    );
    for (label, pct) in &acc.per_class_accuracy {
        let _ = writeln!(s, "  {label:<12} {pct:>7.2}%");
    }
    s
}

pub fn comparison_table(c: &Comparison) -> String {
    let b = &c.bench;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "frames: {}  stub latency: {} ms",
        b.frames_processed, b.stub_latency_ms
    );
    let _ = writeln!(
        s,
        "{:<18} {:>10} {:>10} {:>12} {:>7} {:>10}",
        "system", "fps", "seconds", "invocations", "count", "accuracy"
    );
    let rows = [
        (&b.visual_rhythm, &c.visual_rhythm_accuracy),
        (&b.baseline, &c.baseline_accuracy),
    ];
    for (run, acc) in rows {
        let acc = acc
            .as_ref()
            .map_or_else(|| "-".to_string(), |a| format!("{:.2}%", a.counting_accuracy_pct));
        let _ = writeln!(
            s,
            "{:<18} {:>10.1} {:>10.3} {:>12} {:>7} {:>10}",
            run.system, run.fps, run.wall_seconds, run.detector_invocations, run.total, acc
        );
    }
    let _ = writeln!(s, "speedup: {:.2}x", b.speedup);
    s
}

/// Writes `bench.json` and `bench.txt` under `dir`.
pub fn write_comparison(c: &Comparison, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let json = dir.join("bench.json");
    let txt = dir.join("bench.txt");
    write(&json, &to_json(c)?)?;
    write(&txt, &comparison_table(c))?;
    Ok((json, txt))
}
