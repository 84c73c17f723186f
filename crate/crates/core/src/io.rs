//! File formats: graph and raster CSV, fit traces, ground-truth bundles,
//! selection reports, spike-event files, and run manifests.
//!
//! All floating-point values are printed with 17 significant digits so that
//! write-then-read round-trips are lossless.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ising::{param_dim, GraphMatrix};
use crate::raster::{BinaryRaster, SpikeEvent};
use crate::select::SelectionReport;
use crate::synth::{GroundTruthBundle, WeightSchedule};
use crate::trace::{FitRecord, FitTrace};

/// Render a float with 17 significant digits (lossless for f64).
pub fn fmt_float(value: f64) -> String {
    format!("{value:.16e}")
}

fn parse_float(path: &Path, token: &str) -> Result<f64> {
    token
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::parse(path.display().to_string(), format!("bad float {token:?}: {e}")))
}

fn parse_usize(path: &Path, token: &str) -> Result<usize> {
    token
        .trim()
        .parse::<usize>()
        .map_err(|e| Error::parse(path.display().to_string(), format!("bad count {token:?}: {e}")))
}

/// Write a graph matrix: header `#N=<N>,D=<D>`, then d rows of D
/// comma-separated values in canonical row order.
pub fn write_graphs_csv(path: &Path, graphs: &GraphMatrix) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "#N={},D={}\n",
        graphs.node_count(),
        graphs.graph_count()
    ));
    for r in 0..graphs.param_dim() {
        let row: Vec<String> = (0..graphs.graph_count())
            .map(|c| fmt_float(graphs.values()[(r, c)]))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_graphs_csv(path: &Path) -> Result<GraphMatrix> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path.display().to_string(), "empty file"))?;
    let header = header
        .strip_prefix("#N=")
        .ok_or_else(|| Error::parse(path.display().to_string(), "missing #N=<N>,D=<D> header"))?;
    let (n_str, d_str) = header
        .split_once(",D=")
        .ok_or_else(|| Error::parse(path.display().to_string(), "missing ,D= in header"))?;
    let n = parse_usize(path, n_str)?;
    let d_graphs = parse_usize(path, d_str)?;
    let d = param_dim(n);

    let mut values = Vec::with_capacity(d * d_graphs);
    let mut rows = 0usize;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d_graphs {
            return Err(Error::parse(
                path.display().to_string(),
                format!("row {rows} has {} fields, expected {d_graphs}", fields.len()),
            ));
        }
        for f in fields {
            values.push(parse_float(path, f)?);
        }
        rows += 1;
    }
    if rows != d {
        return Err(Error::parse(
            path.display().to_string(),
            format!("{rows} rows, expected {d} for N={n}"),
        ));
    }
    GraphMatrix::new(n, DMatrix::from_row_slice(d, d_graphs, &values))
}

/// Write a raster: optional `#labels=` header, then one row of 0/1 per bin.
pub fn write_raster_csv(path: &Path, raster: &BinaryRaster) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    if let Some(labels) = raster.labels() {
        writeln!(out, "#labels={}", labels.join(","))?;
    }
    for t in 0..raster.len() {
        let row: Vec<&str> = raster
            .row(t)
            .iter()
            .map(|&b| if b == 1 { "1" } else { "0" })
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_raster_csv(path: &Path) -> Result<BinaryRaster> {
    let text = fs::read_to_string(path)?;
    let mut labels = None;
    let mut rows: Vec<Vec<u8>> = Vec::new();
    for line in text.lines() {
        if let Some(l) = line.strip_prefix("#labels=") {
            labels = Some(l.split(',').map(str::to_string).collect());
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<u8>> = line
            .split(',')
            .map(|f| match f.trim() {
                "0" => Ok(0u8),
                "1" => Ok(1u8),
                other => Err(Error::parse(
                    path.display().to_string(),
                    format!("raster entry {other:?} is not 0 or 1"),
                )),
            })
            .collect();
        rows.push(row?);
    }
    if rows.is_empty() {
        return Err(Error::parse(path.display().to_string(), "no raster rows"));
    }
    BinaryRaster::from_rows(&rows, labels)
}

/// Write a fit trace: header `t,theta_1..theta_D,w_11..w_DD,loglik`, then one
/// row per bin. The w columns are the filtered covariance diagonal.
pub fn write_trace_csv(path: &Path, trace: &FitTrace) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    let d = trace.graph_count();
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|k| format!("theta_{k}")));
    header.extend((1..=d).map(|k| format!("w_{k}{k}")));
    header.push("loglik".to_string());
    writeln!(out, "{}", header.join(","))?;
    for rec in trace.records() {
        let mut fields = vec![rec.time_index.to_string()];
        fields.extend(rec.weight_mean.iter().map(|&v| fmt_float(v)));
        fields.extend(rec.weight_var.iter().map(|&v| fmt_float(v)));
        fields.push(fmt_float(rec.loglik));
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<FitTrace> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path.display().to_string(), "empty trace"))?;
    let columns = header.split(',').count();
    if columns < 4 || columns % 2 != 0 {
        return Err(Error::parse(
            path.display().to_string(),
            "trace header must be t,theta_1..theta_D,w_11..w_DD,loglik",
        ));
    }
    let d = (columns - 2) / 2;
    let mut trace = FitTrace::new(d);
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(Error::parse(
                path.display().to_string(),
                format!("row has {} fields, expected {columns}", fields.len()),
            ));
        }
        let time_index = parse_usize(path, fields[0])?;
        let mean: Result<Vec<f64>> =
            fields[1..1 + d].iter().map(|f| parse_float(path, f)).collect();
        let var: Result<Vec<f64>> = fields[1 + d..1 + 2 * d]
            .iter()
            .map(|f| parse_float(path, f))
            .collect();
        let loglik = parse_float(path, fields[columns - 1])?;
        trace.push(FitRecord {
            time_index,
            weight_mean: DVector::from_vec(mean?),
            weight_var: DVector::from_vec(var?),
            loglik,
        })?;
    }
    Ok(trace)
}

/// Write a weight schedule: header `t,theta_1..theta_D`, one row per bin.
pub fn write_schedule_csv(path: &Path, schedule: &WeightSchedule) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    let d = schedule.graph_count();
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|k| format!("theta_{k}")));
    writeln!(out, "{}", header.join(","))?;
    for t in 1..=schedule.len() {
        let theta = schedule.theta_at(t).expect("in range");
        let mut fields = vec![t.to_string()];
        fields.extend(theta.iter().map(|&v| fmt_float(v)));
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn read_schedule_csv(path: &Path, epoch_len: usize) -> Result<WeightSchedule> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path.display().to_string(), "empty schedule"))?;
    let d = header.split(',').count() - 1;
    let mut values: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 1 {
            return Err(Error::parse(
                path.display().to_string(),
                format!("row has {} fields, expected {}", fields.len(), d + 1),
            ));
        }
        for f in &fields[1..] {
            values.push(parse_float(path, f)?);
        }
        rows += 1;
    }
    WeightSchedule::new(DMatrix::from_row_slice(rows, d, &values), epoch_len)
}

/// Selection report CSV: `D,m,loglik,AIC`, one row per candidate.
pub fn write_selection_csv(path: &Path, report: &SelectionReport) -> Result<()> {
    let mut out = String::from("D,m,loglik,AIC\n");
    for row in &report.rows {
        match (row.window_loglik, row.aic) {
            (Some(l), Some(a)) => {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    row.graph_count,
                    row.free_params,
                    fmt_float(l),
                    fmt_float(a)
                ));
            }
            _ => {
                out.push_str(&format!("{},{},,\n", row.graph_count, row.free_params));
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Spike events CSV: `unit,time_s` rows, optional header. Returns events in
/// file order.
pub fn read_spike_events_csv(path: &Path) -> Result<Vec<SpikeEvent>> {
    let text = fs::read_to_string(path)?;
    let mut events = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (unit_str, time_str) = line.split_once(',').ok_or_else(|| {
            Error::parse(
                path.display().to_string(),
                format!("line {}: expected unit,time_s", idx + 1),
            )
        })?;
        if idx == 0 && unit_str.trim().parse::<u32>().is_err() {
            // Header row.
            continue;
        }
        let unit = unit_str.trim().parse::<u32>().map_err(|e| {
            Error::parse(
                path.display().to_string(),
                format!("line {}: bad unit id {unit_str:?}: {e}", idx + 1),
            )
        })?;
        let time_s = parse_float(path, time_str)?;
        events.push(SpikeEvent { unit, time_s });
    }
    if events.is_empty() {
        return Err(Error::parse(path.display().to_string(), "no spike events"));
    }
    Ok(events)
}

pub fn write_spike_events_csv(path: &Path, events: &[SpikeEvent]) -> Result<()> {
    let mut out = String::from("unit,time_s\n");
    for e in events {
        out.push_str(&format!("{},{}\n", e.unit, fmt_float(e.time_s)));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Sidecar metadata of a ground-truth bundle.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct BundleMeta {
    pub node_count: usize,
    pub graph_count: usize,
    pub epoch_len: usize,
    pub epochs: usize,
    pub seed: u64,
}

/// Write a ground-truth bundle into a directory: `raster.csv`, `J_true.csv`,
/// `theta_true.csv`, `meta.json`.
pub fn write_bundle(dir: &Path, bundle: &GroundTruthBundle) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_raster_csv(&dir.join("raster.csv"), &bundle.raster)?;
    write_graphs_csv(&dir.join("J_true.csv"), &bundle.graphs)?;
    write_schedule_csv(&dir.join("theta_true.csv"), &bundle.schedule)?;
    let meta = BundleMeta {
        node_count: bundle.graphs.node_count(),
        graph_count: bundle.graphs.graph_count(),
        epoch_len: bundle.schedule.epoch_len(),
        epochs: bundle.schedule.epochs(),
        seed: bundle.seed,
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_bundle(dir: &Path) -> Result<GroundTruthBundle> {
    let meta_path = dir.join("meta.json");
    let meta: BundleMeta = serde_json::from_str(&fs::read_to_string(&meta_path)?)
        .map_err(|e| Error::parse(meta_path.display().to_string(), e.to_string()))?;
    let raster = read_raster_csv(&dir.join("raster.csv"))?;
    let graphs = read_graphs_csv(&dir.join("J_true.csv"))?;
    let schedule = read_schedule_csv(&dir.join("theta_true.csv"), meta.epoch_len)?;
    if graphs.node_count() != meta.node_count
        || graphs.graph_count() != meta.graph_count
        || schedule.epochs() != meta.epochs
        || raster.len() != schedule.len()
    {
        return Err(Error::parse(
            dir.display().to_string(),
            "bundle files disagree with meta.json",
        ));
    }
    Ok(GroundTruthBundle {
        graphs,
        schedule,
        raster,
        seed: meta.seed,
    })
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse {
            path: "<json>".to_string(),
            message: e.to_string(),
        }
    }
}

/// SHA-256 digest of one input file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

pub fn file_sha256(path: &Path) -> Result<FileDigest> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hex,
    })
}

/// Record of one CLI run: enough to reproduce it bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<String>,
    pub started_unix_ms: u64,
    pub wall_clock_ms: u64,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let manifest = serde_json::from_str(&fs::read_to_string(path)?)?;
        Ok(manifest)
    }
}

/// Paths of the artifacts a fit writes into its output directory.
pub fn snapshot_filename(time_index: usize) -> PathBuf {
    PathBuf::from(format!("J_t{time_index}.csv"))
}
