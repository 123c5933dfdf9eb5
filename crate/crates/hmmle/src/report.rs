//! Report serialization: CSV record formats, JSON study reports, and the
//! run manifest. Floats are written with Rust's shortest round-trip
//! formatting, so parse(write(x)) reproduces every value bit-exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::asymptotics::McReport;
use crate::filter::FilterRun;
use crate::simulate::{ChainPath, ObsPath};
use crate::{Error, Result};

fn parse_err(label: &str, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: label.to_string(),
        msg: msg.into(),
    }
}

fn parse_f64(label: &str, field: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| parse_err(label, format!("bad float `{field}`")))
}

/// Chain path as CSV `jump_time,state`, starting with a `0,<initial>` row.
pub fn chain_to_csv(path: &ChainPath) -> String {
    let mut out = String::from("jump_time,state\n");
    let _ = writeln!(out, "0,{}", path.states()[0]);
    for (t, s) in path.jump_times().iter().zip(&path.states()[1..]) {
        let _ = writeln!(out, "{t},{s}");
    }
    out
}

/// Inverse of `chain_to_csv`; the horizon is not stored in the CSV and must
/// be supplied (it lives in the manifest).
pub fn chain_from_csv(text: &str, horizon: f64, label: &str) -> Result<ChainPath> {
    let mut lines = text.lines();
    match lines.next() {
        Some("jump_time,state") => {}
        other => return Err(parse_err(label, format!("bad header {other:?}"))),
    }
    let mut jump_times = Vec::new();
    let mut states = Vec::new();
    for (i, line) in lines.enumerate() {
        let (t, s) = line
            .split_once(',')
            .ok_or_else(|| parse_err(label, format!("row {i}: expected 2 fields")))?;
        let t = parse_f64(label, t)?;
        let s: usize = s
            .trim()
            .parse()
            .map_err(|_| parse_err(label, format!("bad state `{s}`")))?;
        if i == 0 {
            if t != 0.0 {
                return Err(parse_err(label, "first row must have jump_time 0"));
            }
        } else {
            jump_times.push(t);
        }
        states.push(s);
    }
    if states.is_empty() {
        return Err(parse_err(label, "no initial-state row"));
    }
    ChainPath::new(horizon, jump_times, states)
}

/// Observation increments as CSV `k,dx`.
pub fn obs_to_csv(obs: &ObsPath) -> String {
    let mut out = String::from("k,dx\n");
    for (k, dx) in obs.increments().iter().enumerate() {
        let _ = writeln!(out, "{k},{dx}");
    }
    out
}

/// Inverse of `obs_to_csv`; dt is supplied by the caller.
pub fn obs_from_csv(text: &str, dt: f64, label: &str) -> Result<ObsPath> {
    let mut lines = text.lines();
    match lines.next() {
        Some("k,dx") => {}
        other => return Err(parse_err(label, format!("bad header {other:?}"))),
    }
    let mut increments = Vec::new();
    for (i, line) in lines.enumerate() {
        let (k, dx) = line
            .split_once(',')
            .ok_or_else(|| parse_err(label, format!("row {i}: expected 2 fields")))?;
        if k.trim() != i.to_string() {
            return Err(parse_err(label, format!("row {i}: index `{k}` out of order")));
        }
        increments.push(parse_f64(label, dx)?);
    }
    ObsPath::new(dt, increments)
}

/// Filter trajectory as CSV `k,t,pi_0..pi_{d-1},loglik_partial` with
/// optional `dpi_*` sensitivity columns. The partial log-likelihood at row k
/// covers increments 0..k and is reconstructed from the stored innovations.
pub fn filter_run_to_csv(run: &FilterRun, h: &[f64]) -> String {
    let d = run.pis[0].entries().len();
    let mut out = String::from("k,t");
    for i in 0..d {
        let _ = write!(out, ",pi_{i}");
    }
    out.push_str(",loglik_partial");
    if run.sensitivity.is_some() {
        for i in 0..d {
            let _ = write!(out, ",dpi_{i}");
        }
    }
    out.push('\n');

    let mut partial = 0.0;
    for (k, pi) in run.pis.iter().enumerate() {
        let t = k as f64 * run.dt;
        let _ = write!(out, "{k},{t}");
        for x in pi.entries() {
            let _ = write!(out, ",{x}");
        }
        let _ = write!(out, ",{partial}");
        if let Some(sens) = &run.sensitivity {
            for x in &sens[k] {
                let _ = write!(out, ",{x}");
            }
        }
        out.push('\n');
        if k < run.innovations.len() {
            let m: f64 = h.iter().zip(pi.entries()).map(|(a, b)| a * b).sum();
            let dx = run.innovations[k] + m * run.dt;
            partial += m * dx - 0.5 * m * m * run.dt;
        }
    }
    out
}

/// Two-column CSV of (x, y) points under the given header, used for both
/// `theta,loglik` and `u,logZ` profiles.
pub fn points_to_csv(header: &str, points: &[(f64, f64)]) -> String {
    let mut out = format!("{header}\n");
    for (x, y) in points {
        let _ = writeln!(out, "{x},{y}");
    }
    out
}

pub fn points_from_csv(text: &str, header: &str, label: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(parse_err(label, format!("expected header `{header}`")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let (x, y) = line
                .split_once(',')
                .ok_or_else(|| parse_err(label, format!("row {i}: expected 2 fields")))?;
            Ok((parse_f64(label, x)?, parse_f64(label, y)?))
        })
        .collect()
}

/// One-column CSV of coupling times under header `tau`.
pub fn taus_to_csv(taus: &[f64]) -> String {
    let mut out = String::from("tau\n");
    for t in taus {
        let _ = writeln!(out, "{t}");
    }
    out
}

/// Flat CSV of study records: `index,seed` followed by the sorted union of
/// value keys; records missing a key leave the cell empty.
pub fn records_to_csv(report: &McReport) -> String {
    let mut keys: Vec<&str> = report
        .records
        .iter()
        .flat_map(|r| r.values.keys().map(String::as_str))
        .collect();
    keys.sort_unstable();
    keys.dedup();

    let mut out = String::from("index,seed");
    for k in &keys {
        let _ = write!(out, ",{k}");
    }
    out.push('\n');
    for r in &report.records {
        let _ = write!(out, "{},{}", r.index, r.seed);
        for k in &keys {
            match r.values.get(*k) {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

pub fn mc_report_to_json(report: &McReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::Json {
        path: "report.json".into(),
        source: e,
    })
}

pub fn mc_report_from_json(text: &str, label: &str) -> Result<McReport> {
    serde_json::from_str(text).map_err(|e| Error::Json {
        path: label.to_string(),
        source: e,
    })
}

/// Run manifest: what ran, with which configuration, and what it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub master_seed: u64,
    /// Raw key-value configuration as parsed.
    pub config: BTreeMap<String, String>,
    pub wall_seconds: f64,
    /// File names written into the output directory, sorted.
    pub outputs: Vec<String>,
}

/// Write one UTF-8 artifact into the output directory, overwriting any
/// previous version, and record its name.
pub struct ArtifactWriter {
    dir: PathBuf,
    names: Vec<String>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<ArtifactWriter> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            names: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))?;
        self.names.push(name.to_string());
        Ok(path)
    }

    /// Write `manifest.json` listing everything written so far (plus itself).
    pub fn finish(mut self, mut manifest: Manifest) -> Result<PathBuf> {
        self.names.push("manifest.json".to_string());
        self.names.sort_unstable();
        manifest.outputs = self.names.clone();
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
            path: "manifest.json".into(),
            source: e,
        })?;
        let path = self.dir.join("manifest.json");
        std::fs::write(&path, &text).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(path)
    }
}
