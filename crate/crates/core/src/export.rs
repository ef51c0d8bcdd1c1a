//! Trajectory tables (CSV with `#` metadata lines), SVG state plots and
//! JSON certificate reports.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::CertificateReport;
use crate::model::Trajectory;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed table: {0}")]
    Malformed(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Ordered `key: value` pairs written as `#` comment lines above the table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Metadata(pub Vec<(String, String)>);

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.0.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn column_names(n: usize, m: usize, p: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.extend((1..=m).map(|i| format!("u{i}")));
    cols.extend((1..=p).map(|i| format!("y{i}")));
    cols.extend((1..=p).map(|i| format!("ydot{i}")));
    cols.push("mode".into());
    cols.push("event".into());
    cols
}

/// Writes the trajectory table. Floats use the shortest representation that
/// parses back to the same bits.
pub fn write_trajectory<W: Write>(
    traj: &Trajectory,
    meta: &Metadata,
    mut out: W,
) -> Result<(), ExportError> {
    let first = traj.first().ok_or(ExportError::EmptyTrajectory)?;
    let (n, m, p) = (first.x.len(), first.input.dim(), first.y.len());
    let stdout_err = |source| ExportError::Io {
        path: "<stream>".into(),
        source,
    };
    for (k, v) in &meta.0 {
        writeln!(out, "# {k}: {v}").map_err(stdout_err)?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(column_names(n, m, p))?;
    let mut events = traj.switch_events.iter().peekable();
    let mut row: Vec<String> = Vec::with_capacity(n + m + 2 * p + 3);
    for (idx, s) in traj.samples.iter().enumerate() {
        row.clear();
        row.push(s.t.to_string());
        row.extend(s.x.iter().map(f64::to_string));
        row.extend(s.input.value.iter().map(f64::to_string));
        row.extend(s.y.iter().map(f64::to_string));
        row.extend(s.ydot.iter().map(f64::to_string));
        row.push(s.mode.get().to_string());
        let is_event = match events.peek() {
            Some(ev) if ev.t == s.t && ev.to == s.mode => {
                // the event row is the first sample recorded at the event time
                let prev_same_t = idx > 0 && traj.samples[idx - 1].t == s.t;
                if !prev_same_t {
                    events.next();
                }
                !prev_same_t
            }
            _ => false,
        };
        row.push(u8::from(is_event).to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(stdout_err)?;
    Ok(())
}

pub fn emit_trajectory(traj: &Trajectory, meta: &Metadata, path: &Path) -> Result<(), ExportError> {
    if traj.is_empty() {
        return Err(ExportError::EmptyTrajectory);
    }
    let file = File::create(path).map_err(io_err(path))?;
    write_trajectory(traj, meta, BufWriter::new(file))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub ydot: Vec<f64>,
    pub mode: usize,
    pub event: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub metadata: Metadata,
    pub state_dim: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub rows: Vec<TableRow>,
}

pub fn parse_trajectory<R: Read>(mut input: R) -> Result<TrajectoryTable, ExportError> {
    let mut text = String::new();
    input.read_to_string(&mut text).map_err(|source| ExportError::Io {
        path: "<stream>".into(),
        source,
    })?;
    let mut metadata = Metadata::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        let body = line.trim_start_matches('#').trim();
        if let Some((k, v)) = body.split_once(": ") {
            metadata.0.push((k.to_string(), v.to_string()));
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let count = |prefix: &str| {
        headers
            .iter()
            .filter(|h| {
                h.strip_prefix(prefix)
                    .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
            })
            .count()
    };
    let (n, m, p) = (count("x"), count("u"), count("ydot"));
    if count("y") != p || headers.len() != 3 + n + m + 2 * p {
        return Err(ExportError::Malformed("unexpected column layout".into()));
    }
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64, ExportError> {
            rec[i].parse::<f64>().map_err(|e| {
                ExportError::Malformed(format!("row {}, column {}: {e}", line + 1, &headers[i]))
            })
        };
        let take = |from: usize, len: usize| (from..from + len).map(num).collect::<Result<Vec<_>, _>>();
        let mode = rec[1 + n + m + 2 * p]
            .parse::<usize>()
            .map_err(|e| ExportError::Malformed(format!("row {}: mode: {e}", line + 1)))?;
        rows.push(TableRow {
            t: num(0)?,
            x: take(1, n)?,
            u: take(1 + n, m)?,
            y: take(1 + n + m, p)?,
            ydot: take(1 + n + m + p, p)?,
            mode,
            event: &rec[2 + n + m + 2 * p] == "1",
        });
    }
    Ok(TrajectoryTable {
        metadata,
        state_dim: n,
        input_dim: m,
        output_dim: p,
        rows,
    })
}

/// Plot appearance; `labels` name the state components in order.
#[derive(Debug, Clone)]
pub struct PlotOptions {
    pub title: String,
    pub labels: Vec<String>,
    pub width: u32,
    pub height: u32,
    /// Upper bound on plotted points per series.
    pub max_points: usize,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self {
            title: "State trajectories".into(),
            labels: Vec::new(),
            width: 900,
            height: 480,
            max_points: 3000,
        }
    }
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Renders states against time as SVG, with dashed vertical lines at
/// switching instants.
pub fn render_plot(traj: &Trajectory, opts: &PlotOptions) -> Result<String, ExportError> {
    let first = traj.first().ok_or(ExportError::EmptyTrajectory)?;
    let last = traj.last().expect("nonempty");
    let n = first.x.len();
    let (w, h) = (opts.width as f64, opts.height as f64);
    let (ml, mr, mt, mb) = (60.0, 150.0, 40.0, 45.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);

    let t0 = first.t;
    let t1 = if last.t > t0 { last.t } else { t0 + 1.0 };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in &traj.samples {
        for v in s.x.iter().filter(|v| v.is_finite()) {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if !(hi > lo) {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let sx = |t: f64| ml + (t - t0) / (t1 - t0) * pw;
    let sy = |v: f64| mt + (hi - v) / (hi - lo) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        ml + pw / 2.0,
        escape(&opts.title)
    );

    // axes and ticks
    let _ = writeln!(
        svg,
        r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for t in nice_ticks(t0, t1) {
        let x = sx(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            mt,
            mt + ph,
            mt + ph + 18.0,
            tick(t)
        );
    }
    for v in nice_ticks(lo, hi) {
        let y = sy(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{ml}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            ml + pw,
            ml - 6.0,
            y + 4.0,
            tick(v)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">time [s]</text>"#,
        ml + pw / 2.0,
        h - 8.0
    );

    for ev in &traj.switch_events {
        let x = sx(ev.t);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{mt}" x2="{x:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
            mt + ph
        );
    }

    let stride = traj.len().div_ceil(opts.max_points.max(2)).max(1);
    for i in 0..n {
        let color = COLORS[i % COLORS.len()];
        let mut pts = String::new();
        for (k, s) in traj.samples.iter().enumerate() {
            if k % stride != 0 && k + 1 != traj.len() {
                continue;
            }
            if s.x[i].is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", sx(s.t), sy(s.x[i]));
            }
        }
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.trim_end()
        );
        let label = opts.labels.get(i).cloned().unwrap_or_else(|| format!("x{}", i + 1));
        let ly = mt + 20.0 + 20.0 * i as f64;
        let lx = ml + pw + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            escape(&label)
        );
    }
    if !traj.switch_events.is_empty() {
        let ly = mt + 20.0 + 20.0 * n as f64;
        let lx = ml + pw + 12.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="#888" stroke-dasharray="4 3"/><text x="{}" y="{}">mode change</text>"##,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot(traj: &Trajectory, opts: &PlotOptions, path: &Path) -> Result<(), ExportError> {
    let svg = render_plot(traj, opts)?;
    std::fs::write(path, svg).map_err(io_err(path))
}

/// Tick positions at multiples of 1, 2 or 5 times a power of ten.
fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let raw = (hi - lo) / 6.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Report file contents. No timestamps, so identical runs give identical
/// bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub scenario: String,
    pub scenario_hash: String,
    pub step: f64,
    pub t_end: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub switch_events: usize,
    pub final_state: Vec<f64>,
    pub exit_code: i32,
    pub reports: Vec<CertificateReport>,
}

pub fn emit_report(report: &ReportFile, path: &Path) -> Result<(), ExportError> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}
