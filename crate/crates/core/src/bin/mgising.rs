//! Command-line driver: dataset simulation, online fitting, model selection,
//! the full-model baseline, PCA comparison, graph evaluation, and spike
//! binning. Every run writes a manifest with its configuration, seeds, input
//! digests and outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use mgising::io::{self, RunManifest};
use mgising::learner::{self, run_online, GraphInit, LearnerConfig};
use mgising::select::{self, EvalWindow};
use mgising::synth;
use mgising::{Error, FilterSettings, GraphMatrix, Result};

#[derive(Parser)]
#[command(name = "mgising", version)]
#[command(about = "State-space multi-graph Ising modeling of binary pattern sequences")]
struct Cli {
    /// Output directory (falls back to $MGISING_OUT, then "out").
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every fitting subcommand.
#[derive(Args, Debug, Clone)]
struct FitOpts {
    /// State-noise precision of the weight random walk.
    #[arg(long, default_value_t = 1000.0)]
    lambda: f64,

    /// Learning rate of the online graph update.
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,

    /// Posterior samples per gradient step (0 = plug-in filtered mean).
    #[arg(long = "mc-samples", default_value_t = 100)]
    mc_samples: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Rescale graph columns to unit variance every bin.
    #[arg(long = "scale-columns", default_value_t = true, action = clap::ArgAction::Set)]
    scale_columns: bool,

    /// Counter-scale the weight state when rescaling columns.
    #[arg(long = "compensate-state", default_value_t = true, action = clap::ArgAction::Set)]
    compensate_state: bool,

    /// Scalar prior mean for the first-bin weights.
    #[arg(long = "prior-mean", default_value_t = 0.0)]
    prior_mean: f64,

    /// Scalar prior variance for the first-bin weights.
    #[arg(long = "prior-var", default_value_t = 1.0)]
    prior_var: f64,

    /// Newton stopping tolerance (gradient infinity norm).
    #[arg(long = "newton-tol", default_value_t = 1e-8)]
    newton_tol: f64,

    #[arg(long = "newton-max-iter", default_value_t = 100)]
    newton_max_iter: usize,
}

impl FitOpts {
    fn settings(&self) -> FilterSettings {
        FilterSettings {
            lambda: self.lambda,
            prior_mean: self.prior_mean,
            prior_var: self.prior_var,
            newton_tol: self.newton_tol,
            newton_max_iter: self.newton_max_iter,
        }
    }

    fn learner(&self, snapshot_every: Option<usize>) -> LearnerConfig {
        LearnerConfig {
            epsilon: self.epsilon,
            mc_samples: self.mc_samples,
            scale_columns: self.scale_columns,
            compensate_state: self.compensate_state,
            seed: self.seed,
            snapshot_every,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        json!({
            "lambda": self.lambda,
            "epsilon": self.epsilon,
            "mc_samples": self.mc_samples,
            "seed": self.seed,
            "scale_columns": self.scale_columns,
            "compensate_state": self.compensate_state,
            "prior_mean": self.prior_mean,
            "prior_var": self.prior_var,
            "newton_tol": self.newton_tol,
            "newton_max_iter": self.newton_max_iter,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset: fixed graphs, sinusoidal weights.
    Simulate {
        /// Nodes per pattern.
        #[arg(long)]
        n: usize,
        /// Number of generative graphs.
        #[arg(long)]
        d: usize,
        /// Epoch length (sinusoid period) in bins.
        #[arg(long = "t-ep")]
        t_ep: usize,
        #[arg(long)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        baseline: f64,
        #[arg(long, default_value_t = 0.5)]
        amplitude: f64,
        /// Comma-separated phase offsets (default: 2 pi k / D).
        #[arg(long)]
        phases: Option<String>,
        /// Graph source: auto | plus-t | gaussian | <path.csv>.
        #[arg(long, default_value = "auto")]
        graphs: String,
    },

    /// Fit the multi-graph model online to a binary raster.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "num-graphs")]
        num_graphs: usize,
        /// Store a graph snapshot every this many bins.
        #[arg(long = "snapshot-every")]
        snapshot_every: Option<usize>,
        /// Initial graphs CSV (default: random standard normal from --seed).
        #[arg(long = "init-graphs")]
        init_graphs: Option<PathBuf>,
        #[command(flatten)]
        opts: FitOpts,
    },

    /// Sweep candidate graph counts and select by windowed AIC.
    Select {
        #[arg(long)]
        data: PathBuf,
        /// Candidate graph counts.
        #[arg(long, value_delimiter = ',')]
        candidates: Vec<usize>,
        /// Epoch length defining the last-epoch window.
        #[arg(long = "t-ep")]
        t_ep: Option<usize>,
        /// Evaluation window: last-epoch (needs --t-ep) or latter-half.
        #[arg(long)]
        window: Option<String>,
        #[command(flatten)]
        opts: FitOpts,
    },

    /// Fit the time-dependent full Ising model (identity graphs, no learning).
    Full {
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "t-ep")]
        t_ep: Option<usize>,
        #[arg(long)]
        window: Option<String>,
        #[command(flatten)]
        opts: FitOpts,
    },

    /// Score trace principal components against reference graphs.
    Pca {
        /// Fit trace of the full model.
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        components: usize,
    },

    /// Correlate learned graphs against a reference and snapshots against
    /// the final graphs.
    Eval {
        #[arg(long)]
        learned: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Directory holding J_t<step>.csv snapshots.
        #[arg(long = "snapshots-dir")]
        snapshots_dir: Option<PathBuf>,
    },

    /// Bin spike-time events (CSV: unit,time_s) into a binary raster.
    Bin {
        #[arg(long)]
        events: PathBuf,
        #[arg(long = "bin-width", default_value_t = 0.010)]
        bin_width: f64,
        /// Range start in seconds (default: first event time).
        #[arg(long = "t-start")]
        t_start: Option<f64>,
        /// Range end in seconds, exclusive (default: last event + one bin).
        #[arg(long = "t-end")]
        t_end: Option<f64>,
        /// Keep only the most active units (default 12, capped at the unit
        /// count; 0 keeps all).
        #[arg(long = "top-units", default_value_t = 12)]
        top_units: usize,
    },
}

fn out_dir(cli_out: &Option<PathBuf>) -> PathBuf {
    cli_out
        .clone()
        .or_else(|| std::env::var_os("MGISING_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn parse_window(window: &Option<String>, t_ep: Option<usize>) -> Result<EvalWindow> {
    match (window.as_deref(), t_ep) {
        (Some("latter-half"), _) => Ok(EvalWindow::LatterHalf),
        (Some("last-epoch"), Some(epoch_len)) | (None, Some(epoch_len)) => {
            Ok(EvalWindow::LastEpoch { epoch_len })
        }
        (Some("last-epoch"), None) => Err(Error::invalid("--window last-epoch requires --t-ep")),
        (None, None) => Ok(EvalWindow::LatterHalf),
        (Some(other), _) => Err(Error::invalid(format!(
            "unknown window {other:?}; use last-epoch or latter-half"
        ))),
    }
}

struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<io::FileDigest>,
    outputs: Vec<String>,
    started: Instant,
    started_unix_ms: u64,
}

impl ManifestBuilder {
    fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            config,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
            started_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        }
    }

    fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    fn input(&mut self, path: &Path) -> Result<&mut Self> {
        self.inputs.push(io::file_sha256(path)?);
        Ok(self)
    }

    fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.display().to_string());
        self
    }

    fn write(self, dir: &Path) -> Result<()> {
        let manifest = RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command,
            argv: std::env::args().collect(),
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs: self.outputs,
            started_unix_ms: self.started_unix_ms,
            wall_clock_ms: self.started.elapsed().as_millis() as u64,
        };
        manifest.write(&dir.join("manifest.json"))
    }
}

fn run(cli: Cli) -> Result<()> {
    let dir = out_dir(&cli.out);
    std::fs::create_dir_all(&dir)?;
    match cli.command {
        Command::Simulate {
            n,
            d,
            t_ep,
            epochs,
            seed,
            baseline,
            amplitude,
            phases,
            graphs,
        } => {
            let phases: Vec<f64> = match phases {
                Some(spec) => spec
                    .split(',')
                    .map(|p| {
                        p.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::invalid(format!("bad phase {p:?}: {e}")))
                    })
                    .collect::<Result<_>>()?,
                None => (0..d)
                    .map(|k| 2.0 * std::f64::consts::PI * k as f64 / d as f64)
                    .collect(),
            };
            if phases.len() != d {
                return Err(Error::invalid(format!(
                    "{} phases given for {d} graphs",
                    phases.len()
                )));
            }
            let mut manifest = ManifestBuilder::new(
                "simulate",
                json!({
                    "n": n, "d": d, "t_ep": t_ep, "epochs": epochs,
                    "baseline": baseline, "amplitude": amplitude,
                    "phases": phases, "graphs": graphs,
                }),
            );
            manifest.seed("simulate", seed);
            let graph_matrix = match graphs.as_str() {
                "plus-t" => synth::plus_t_graphs(),
                "gaussian" => GraphMatrix::random_gaussian(n, d, seed)?,
                "auto" => {
                    if n == 9 && d == 2 {
                        synth::plus_t_graphs()
                    } else {
                        GraphMatrix::random_gaussian(n, d, seed)?
                    }
                }
                path => {
                    let p = PathBuf::from(path);
                    manifest.input(&p)?;
                    io::read_graphs_csv(&p)?
                }
            };
            if graph_matrix.node_count() != n || graph_matrix.graph_count() != d {
                return Err(Error::dims(format!(
                    "graph source is {}x{} graphs, requested n={n}, d={d}",
                    graph_matrix.node_count(),
                    graph_matrix.graph_count()
                )));
            }
            let schedule = synth::sinusoid_weights(t_ep, epochs, baseline, amplitude, &phases)?;
            let bundle = synth::generate_dataset(&graph_matrix, &schedule, seed)?;
            io::write_bundle(&dir, &bundle)?;
            for name in ["raster.csv", "J_true.csv", "theta_true.csv", "meta.json"] {
                manifest.output(&dir.join(name));
            }
            manifest.write(&dir)?;
            println!(
                "wrote {} bins of {}-node data to {}",
                bundle.raster.len(),
                n,
                dir.display()
            );
        }

        Command::Fit {
            data,
            num_graphs,
            snapshot_every,
            init_graphs,
            opts,
        } => {
            let mut manifest = ManifestBuilder::new(
                "fit",
                json!({
                    "data": data.display().to_string(),
                    "num_graphs": num_graphs,
                    "snapshot_every": snapshot_every,
                    "init_graphs": init_graphs.as_ref().map(|p| p.display().to_string()),
                    "fit": opts.to_json(),
                }),
            );
            manifest.seed("fit", opts.seed);
            manifest.input(&data)?;
            let raster = io::read_raster_csv(&data)?;
            let init = match &init_graphs {
                Some(path) => {
                    manifest.input(path)?;
                    GraphInit::Matrix(io::read_graphs_csv(path)?)
                }
                None => GraphInit::Seed(opts.seed),
            };
            let fcfg = opts.settings().config_for(num_graphs)?;
            let lcfg = opts.learner(snapshot_every);
            let result = run_online(&raster, num_graphs, &fcfg, &lcfg, init)?;

            let trace_path = dir.join("trace.csv");
            io::write_trace_csv(&trace_path, &result.trace)?;
            manifest.output(&trace_path);
            let final_path = dir.join("J_final.csv");
            io::write_graphs_csv(&final_path, &result.final_graphs)?;
            manifest.output(&final_path);
            for (t, snap) in &result.graph_snapshots {
                let path = dir.join(io::snapshot_filename(*t));
                io::write_graphs_csv(&path, snap)?;
                manifest.output(&path);
            }
            manifest.write(&dir)?;
            let total: f64 = result.trace.logliks().iter().sum();
            println!(
                "fitted {} bins with {} graphs; total marginal loglik {:.4}; outputs in {}",
                result.trace.len(),
                num_graphs,
                total,
                dir.display()
            );
        }

        Command::Select {
            data,
            candidates,
            t_ep,
            window,
            opts,
        } => {
            let window = parse_window(&window, t_ep)?;
            let mut manifest = ManifestBuilder::new(
                "select",
                json!({
                    "data": data.display().to_string(),
                    "candidates": candidates,
                    "window": window.to_string(),
                    "fit": opts.to_json(),
                }),
            );
            manifest.seed("fit", opts.seed);
            manifest.input(&data)?;
            let raster = io::read_raster_csv(&data)?;
            let report = select::sweep(
                &raster,
                &candidates,
                &opts.settings(),
                &opts.learner(None),
                window,
            )?;
            let report_path = dir.join("selection.csv");
            io::write_selection_csv(&report_path, &report)?;
            manifest.output(&report_path);
            manifest.write(&dir)?;
            print!("{report}");
        }

        Command::Full {
            data,
            t_ep,
            window,
            opts,
        } => {
            let window = parse_window(&window, t_ep)?;
            let mut manifest = ManifestBuilder::new(
                "full",
                json!({
                    "data": data.display().to_string(),
                    "window": window.to_string(),
                    "fit": opts.to_json(),
                }),
            );
            manifest.input(&data)?;
            let raster = io::read_raster_csv(&data)?;
            let trace = select::fit_full_model(&raster, &opts.settings())?;
            let trace_path = dir.join("full_trace.csv");
            io::write_trace_csv(&trace_path, &trace)?;
            manifest.output(&trace_path);

            let loglik = select::window_loglik(&trace, window)?;
            let m = mgising::ising::param_dim(raster.node_count());
            let aic = select::aic(loglik, m);
            let aic_path = dir.join("full_aic.csv");
            std::fs::write(
                &aic_path,
                format!("m,loglik,AIC\n{m},{},{}\n", io::fmt_float(loglik), io::fmt_float(aic)),
            )?;
            manifest.output(&aic_path);
            manifest.write(&dir)?;
            println!("full model: m = {m}, window loglik = {loglik:.4}, AIC = {aic:.4}");
        }

        Command::Pca {
            trace,
            reference,
            components,
        } => {
            let mut manifest = ManifestBuilder::new(
                "pca",
                json!({
                    "trace": trace.display().to_string(),
                    "reference": reference.display().to_string(),
                    "components": components,
                }),
            );
            manifest.input(&trace)?;
            manifest.input(&reference)?;
            let fit_trace = io::read_trace_csv(&trace)?;
            let reference_graphs = io::read_graphs_csv(&reference)?;
            let correlations = select::pca_baseline(&fit_trace, components, &reference_graphs)?;
            let pca_path = dir.join("pca.csv");
            let mut text = String::from("component,abs_corr\n");
            for (i, c) in correlations.iter().enumerate() {
                text.push_str(&format!("{},{}\n", i + 1, io::fmt_float(*c)));
                println!("component {}: |corr| = {c:.4}", i + 1);
            }
            std::fs::write(&pca_path, text)?;
            manifest.output(&pca_path);
            manifest.write(&dir)?;
            let mean = correlations.iter().sum::<f64>() / correlations.len() as f64;
            println!("mean |corr| over {} components: {mean:.4}", correlations.len());
        }

        Command::Eval {
            learned,
            reference,
            snapshots_dir,
        } => {
            let mut manifest = ManifestBuilder::new(
                "eval",
                json!({
                    "learned": learned.display().to_string(),
                    "reference": reference.as_ref().map(|p| p.display().to_string()),
                    "snapshots_dir": snapshots_dir.as_ref().map(|p| p.display().to_string()),
                }),
            );
            manifest.input(&learned)?;
            let learned_graphs = io::read_graphs_csv(&learned)?;

            if let Some(ref_path) = reference {
                manifest.input(&ref_path)?;
                let reference_graphs = io::read_graphs_csv(&ref_path)?;
                let matches = learner::match_graph_columns(&learned_graphs, &reference_graphs)?;
                let eval_path = dir.join("eval.csv");
                let mut text = String::from("learned,reference,corr\n");
                for m in &matches {
                    text.push_str(&format!(
                        "{},{},{}\n",
                        m.learned + 1,
                        m.reference + 1,
                        io::fmt_float(m.correlation)
                    ));
                    println!(
                        "learned column {} ~ reference column {}: corr = {:.4}",
                        m.learned + 1,
                        m.reference + 1,
                        m.correlation
                    );
                }
                std::fs::write(&eval_path, text)?;
                manifest.output(&eval_path);
            }

            if let Some(snap_dir) = snapshots_dir {
                let mut snapshots: Vec<(usize, PathBuf)> = Vec::new();
                for entry in std::fs::read_dir(&snap_dir)? {
                    let path = entry?.path();
                    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
                    if let Some(step) = name
                        .strip_prefix("J_t")
                        .and_then(|s| s.strip_suffix(".csv"))
                        .and_then(|s| s.parse::<usize>().ok())
                    {
                        snapshots.push((step, path));
                    }
                }
                snapshots.sort();
                if snapshots.is_empty() {
                    return Err(Error::invalid(format!(
                        "no J_t<step>.csv snapshots in {}",
                        snap_dir.display()
                    )));
                }
                let d = learned_graphs.graph_count();
                let stability_path = dir.join("stability.csv");
                let mut text = String::from("t");
                for k in 1..=d {
                    text.push_str(&format!(",corr_{k}"));
                }
                text.push('\n');
                for (step, path) in &snapshots {
                    let snap = io::read_graphs_csv(path)?;
                    if snap.graph_count() != d {
                        return Err(Error::dims(format!(
                            "snapshot {} has {} columns, expected {d}",
                            path.display(),
                            snap.graph_count()
                        )));
                    }
                    text.push_str(&step.to_string());
                    for k in 0..d {
                        let corr = learner::column_correlation(
                            &snap.column(k)?,
                            &learned_graphs.column(k)?,
                        )?;
                        text.push_str(&format!(",{}", io::fmt_float(corr)));
                    }
                    text.push('\n');
                }
                std::fs::write(&stability_path, text)?;
                manifest.output(&stability_path);
                println!(
                    "stability curve over {} snapshots written to {}",
                    snapshots.len(),
                    stability_path.display()
                );
            }
            manifest.write(&dir)?;
        }

        Command::Bin {
            events,
            bin_width,
            t_start,
            t_end,
            top_units,
        } => {
            let mut manifest = ManifestBuilder::new(
                "bin",
                json!({
                    "events": events.display().to_string(),
                    "bin_width": bin_width,
                    "t_start": t_start,
                    "t_end": t_end,
                    "top_units": top_units,
                }),
            );
            manifest.input(&events)?;
            let spikes = io::read_spike_events_csv(&events)?;
            let start = t_start.unwrap_or_else(|| {
                spikes.iter().map(|e| e.time_s).fold(f64::INFINITY, f64::min)
            });
            let end = t_end.unwrap_or_else(|| {
                spikes
                    .iter()
                    .map(|e| e.time_s)
                    .fold(f64::NEG_INFINITY, f64::max)
                    + bin_width
            });
            let binned = mgising::raster::bin_spike_times(&spikes, bin_width, start, end)?;
            let dropped = binned.dropped;
            let raster = if top_units == 0 || top_units >= binned.raster.node_count() {
                binned.raster
            } else {
                mgising::raster::select_top_units(&binned.raster, top_units)?
            };
            let raster_path = dir.join("raster.csv");
            io::write_raster_csv(&raster_path, &raster)?;
            manifest.output(&raster_path);
            manifest.write(&dir)?;
            println!(
                "binned {} bins x {} units (dropped {dropped} out-of-range events) into {}",
                raster.len(),
                raster.node_count(),
                raster_path.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_default_env()
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            if e.is_numeric() {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
