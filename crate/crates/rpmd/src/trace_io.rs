//! CSV energy traces and plain-text run summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rpmd_core::{EnergyTrace, StabilityMetrics, TraceMeta, TraceRow};

use crate::error::CliError;

pub const TRACE_HEADER: &str = "step,time,kinetic,spring,potential,total,max_g,max_f";

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn trace_to_csv(trace: &EnergyTrace) -> String {
    let mut out = String::with_capacity(64 * (trace.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in trace.rows() {
        let _ = write!(out, "{}", r.step);
        for v in [r.time, r.kinetic, r.spring, r.potential, r.total, r.max_g, r.max_f] {
            out.push(',');
            out.push_str(&format_float(v));
        }
        out.push('\n');
    }
    out
}

pub fn trace_from_csv(text: &str, path: &Path, meta: TraceMeta) -> Result<EnergyTrace, CliError> {
    let err = |line: usize, message: String| CliError::Trace { path: path.to_path_buf(), line, message };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == TRACE_HEADER => {}
        _ => return Err(err(1, format!("expected header `{TRACE_HEADER}`"))),
    }
    let mut trace = EnergyTrace::new(meta);
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 8 {
            return Err(err(line_no, format!("expected 8 fields, found {}", fields.len())));
        }
        let step = fields[0].parse::<usize>().map_err(|_| err(line_no, format!("bad step `{}`", fields[0])))?;
        let mut v = [0.0; 7];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f.parse::<f64>().map_err(|_| err(line_no, format!("bad number `{f}`")))?;
        }
        let row = TraceRow {
            step,
            time: v[0],
            kinetic: v[1],
            spring: v[2],
            potential: v[3],
            total: v[4],
            max_g: v[5],
            max_f: v[6],
        };
        trace.push(row).map_err(|e| err(line_no, e.to_string()))?;
    }
    Ok(trace)
}

pub fn write_trace(path: &Path, trace: &EnergyTrace) -> Result<(), CliError> {
    fs::write(path, trace_to_csv(trace)).map_err(|e| CliError::io(path, e))
}

/// Reads a trace and, when present, the metadata of its summary file.
pub fn read_trace(path: &Path) -> Result<EnergyTrace, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let meta = match fs::read_to_string(summary_path(path)) {
        Ok(summary) => meta_from_summary(&summary),
        Err(_) => TraceMeta { scheme: "unknown".into(), ..TraceMeta::default() },
    };
    let mut trace = trace_from_csv(&text, path, meta)?;
    if trace.meta.h == 0.0 {
        if let [a, b, ..] = trace.rows() {
            let h = (b.time - a.time) / (b.step - a.step) as f64;
            trace.meta.h = h;
            trace.meta.delta_h = h;
        }
    }
    Ok(trace)
}

/// `trace.csv` -> `trace.csv.summary`.
pub fn summary_path(trace: &Path) -> PathBuf {
    let mut name = trace.as_os_str().to_owned();
    name.push(".summary");
    PathBuf::from(name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub meta: TraceMeta,
    pub steps_requested: usize,
    pub steps_completed: usize,
    pub failure: Option<String>,
    pub metrics: Option<StabilityMetrics>,
    pub max_position_iterations: usize,
    pub max_g: f64,
    pub max_f: f64,
    pub max_energy_error: f64,
}

impl Summary {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("scenario", self.meta.scenario.clone());
        kv("scheme", self.meta.scheme.clone());
        kv("h", self.meta.h.to_string());
        kv("delta_h", self.meta.delta_h.to_string());
        kv("seed", self.meta.seed.to_string());
        kv("steps_requested", self.steps_requested.to_string());
        kv("steps_completed", self.steps_completed.to_string());
        kv("status", if self.failure.is_some() { "failed".into() } else { "ok".into() });
        if let Some(f) = &self.failure {
            kv("failure", f.clone());
        }
        if let Some(m) = &self.metrics {
            kv("drift", format_float(m.drift));
            kv("noise", format_float(m.noise));
            kv("delta_e", format_float(m.delta_e));
            kv("delta_e_r", format_float(m.delta_e_r));
            kv("mean_kinetic", format_float(m.mean_kinetic));
        }
        kv("max_energy_error", format_float(self.max_energy_error));
        kv("max_position_iterations", self.max_position_iterations.to_string());
        kv("max_g", format_float(self.max_g));
        kv("max_f", format_float(self.max_f));
        out
    }
}

/// Metadata keys of a summary file; other keys are ignored.
pub fn meta_from_summary(text: &str) -> TraceMeta {
    let mut meta = TraceMeta { scheme: "unknown".into(), ..TraceMeta::default() };
    for line in text.lines() {
        let Some((k, v)) = line.split_once('=') else { continue };
        let v = v.trim();
        match k.trim() {
            "scenario" => meta.scenario = v.to_string(),
            "scheme" => meta.scheme = v.to_string(),
            "h" => meta.h = v.parse().unwrap_or(0.0),
            "delta_h" => meta.delta_h = v.parse().unwrap_or(0.0),
            "seed" => meta.seed = v.parse().unwrap_or(0),
            _ => {}
        }
    }
    meta
}
