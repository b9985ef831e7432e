//! Command-line front end for the control pipeline. Each subcommand wraps
//! one stage; `run-pipeline` chains them all and `report` turns run
//! artifacts into a plot-data bundle.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure. `DESYNC_SEED` overrides every seed and `DESYNC_OUT_DIR`
//! re-roots relative output paths.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use desync_core::connectivity::{plv_matrix, threshold_adjacency, GraphJson, ThresholdMode};
use desync_core::error::{Error, Result};
use desync_core::graphsel::{centralities, select_nodes, ControlMatrixJson};
use desync_core::koopman::{
    prediction_metrics, KoopmanModel, KoopmanModelJson, PredictionMetrics, ReservoirConfig,
};
use desync_core::mfg::{rollout, train, LatentData, MfgConfig, MfgPolicyJson, RolloutMode};
use desync_core::mpc::{mpc_rollout, MpcConfig};
use desync_core::pipeline::{control_artifact, report as build_report, run_pipeline, PipelineConfig};
use desync_core::synthgen::{generate, load_csv, save_csv, OscillatorConfig};

#[derive(Parser)]
#[command(
    name = "desync",
    about = "Graph-regularized Koopman mean-field-game control of networked dynamics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic coupled-oscillator data.
    Synth {
        /// TOML oscillator config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the functional graph from a signal window.
    Network {
        #[arg(long = "in")]
        input: PathBuf,
        /// Half-open window "a:b".
        #[arg(long)]
        window: String,
        /// "abs:0.4" or "pct:90".
        #[arg(long, default_value = "abs:0.4")]
        threshold: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank nodes by combined centrality and build the control matrix.
    SelectNodes {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        /// Comma-separated degree,betweenness,eigenvector weights.
        #[arg(long, default_value = "1,1,1")]
        weights: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the reservoir Koopman surrogate.
    FitKoopman {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        bmatrix: PathBuf,
        /// TOML reservoir config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Optional fit window "a:b"; overrides the config's fit_window.
        #[arg(long)]
        window: Option<String>,
        /// Embed the frozen random matrices instead of regenerating them
        /// from the seed on load.
        #[arg(long, default_value_t = false)]
        inline_matrices: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Free-run forecast over a window, with fidelity metrics.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        window: String,
        #[arg(long)]
        report: PathBuf,
    },
    /// Train the value/generator pair against the HJB residual.
    TrainMfg {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        bmatrix: PathBuf,
        /// TOML solver config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Signal CSV supplying the latent training transitions.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-loop feedback rollouts from a trained policy.
    Control {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        window: String,
        #[arg(long, default_value = "0:500")]
        healthy_window: String,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long)]
        report: PathBuf,
    },
    /// Receding-horizon baseline rollouts on the same surrogate.
    Mpc {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        bmatrix: PathBuf,
        /// TOML MPC config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        window: String,
        #[arg(long, default_value = "0:500")]
        healthy_window: String,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run every stage end to end.
    RunPipeline {
        /// TOML pipeline config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        /// Print the effective config as TOML and exit.
        #[arg(long, default_value_t = false)]
        print_config: bool,
    },
    /// Assemble a plot-data bundle from one or more run artifacts.
    Report {
        #[arg(long)]
        out: PathBuf,
        /// control.json / mpc.json inputs.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn parse_window(text: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 2 {
        return Err(Error::Config(format!("window '{text}' must look like a:b")));
    }
    let a: usize = parts[0]
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad window start '{}'", parts[0])))?;
    let b: usize = parts[1]
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad window end '{}'", parts[1])))?;
    if a >= b {
        return Err(Error::Config(format!("window '{text}' must satisfy a < b")));
    }
    Ok((a, b))
}

fn parse_threshold(text: &str) -> Result<ThresholdMode> {
    let (kind, value) = text
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("threshold '{text}' must look like abs:0.4 or pct:90")))?;
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad threshold value '{value}'")))?;
    match kind.trim() {
        "abs" => Ok(ThresholdMode::Absolute(v)),
        "pct" => Ok(ThresholdMode::Percentile(v)),
        other => Err(Error::Config(format!("unknown threshold kind '{other}'"))),
    }
}

fn parse_weights(text: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!("weights '{text}' must have three components")));
    }
    let mut out = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        out[i] = p
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad weight '{p}'")))?;
    }
    Ok(out)
}

fn load_toml<T: serde::de::DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    std::fs::write(path, text)?;
    Ok(())
}

fn env_seed() -> Option<u64> {
    std::env::var("DESYNC_SEED").ok().and_then(|s| s.parse().ok())
}

/// Re-root a relative output path under DESYNC_OUT_DIR when set.
fn out_path(path: PathBuf) -> PathBuf {
    match std::env::var("DESYNC_OUT_DIR") {
        Ok(dir) if path.is_relative() => PathBuf::from(dir).join(path),
        _ => path,
    }
}

#[derive(serde::Serialize)]
struct PredictReport {
    kind: String,
    schema_version: u32,
    window: (usize, usize),
    metrics: PredictionMetrics,
    truth: desync_core::linalg::MatrixJson,
    predicted: desync_core::linalg::MatrixJson,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { config, out } => {
            let mut cfg: OscillatorConfig = load_toml(&config)?;
            if let Some(seed) = env_seed() {
                cfg.seed = seed;
            }
            let signals = generate(&cfg)?;
            save_csv(&signals, &out_path(out))?;
        }
        Command::Network {
            input,
            window,
            threshold,
            out,
        } => {
            let signals = load_csv(&input)?;
            let window = parse_window(&window)?;
            let mode = parse_threshold(&threshold)?;
            let plv = plv_matrix(&signals, window)?;
            let graph = threshold_adjacency(&plv, mode)?;
            write_json(&out_path(out), &GraphJson::from_graph(&graph))?;
        }
        Command::SelectNodes {
            graph,
            k,
            weights,
            out,
        } => {
            let graph_json: GraphJson = read_json(&graph)?;
            let g = graph_json.to_graph()?;
            let weights = parse_weights(&weights)?;
            let report = centralities(&g)?;
            let (cm, report) = select_nodes(&report, k, weights)?;
            write_json(&out_path(out), &ControlMatrixJson::new(&cm, weights, &report))?;
        }
        Command::FitKoopman {
            input,
            graph,
            bmatrix,
            config,
            window,
            inline_matrices,
            out,
        } => {
            let signals = load_csv(&input)?;
            let graph_json: GraphJson = read_json(&graph)?;
            let g = graph_json.to_graph()?;
            let bm: ControlMatrixJson = read_json(&bmatrix)?;
            let b = bm.to_control_matrix()?;
            let mut cfg: ReservoirConfig = load_toml(&config)?;
            if let Some(seed) = env_seed() {
                cfg.seed = seed;
            }
            if let Some(w) = &window {
                cfg.fit_window = Some(parse_window(w)?);
            }
            let model = KoopmanModel::fit(&signals, &g, &b, &cfg)?;
            write_json(&out_path(out), &KoopmanModelJson::from_model(&model, &g, inline_matrices))?;
        }
        Command::Predict {
            model,
            input,
            window,
            report,
        } => {
            let model_json: KoopmanModelJson = read_json(&model)?;
            let g = model_json.to_graph()?;
            let model = model_json.to_model()?;
            let signals = load_csv(&input)?;
            let (a, b) = parse_window(&window)?;
            if b > signals.n_samples() {
                return Err(Error::Config(format!(
                    "window [{a}, {b}) exceeds {} samples",
                    signals.n_samples()
                )));
            }
            let z0 = model.warmup_state(&signals, &g, a)?;
            let steps = b - a - 1;
            if steps == 0 {
                return Err(Error::Config("window must span at least two samples".to_string()));
            }
            let (_, predicted) = model.forecast(&z0, steps)?;
            let mut truth = nalgebra::DMatrix::zeros(signals.n_channels(), steps + 1);
            for (col, t) in (a..b).enumerate() {
                for i in 0..signals.n_channels() {
                    truth[(i, col)] = signals.value(i, t);
                }
            }
            let metrics = prediction_metrics(&truth, &predicted)?;
            write_json(
                &out_path(report),
                &PredictReport {
                    kind: "prediction".to_string(),
                    schema_version: 1,
                    window: (a, b),
                    metrics,
                    truth: desync_core::linalg::MatrixJson::from_matrix(&truth),
                    predicted: desync_core::linalg::MatrixJson::from_matrix(&predicted),
                },
            )?;
        }
        Command::TrainMfg {
            model,
            graph,
            bmatrix,
            config,
            input,
            out,
        } => {
            let model_json: KoopmanModelJson = read_json(&model)?;
            let model = model_json.to_model()?;
            let graph_json: GraphJson = read_json(&graph)?;
            let g = graph_json.to_graph()?;
            let bm: ControlMatrixJson = read_json(&bmatrix)?;
            let b = bm.to_control_matrix()?;
            if b.actuated != model.actuated {
                return Err(Error::Config(format!(
                    "bmatrix actuators {:?} disagree with the model's {:?}",
                    b.actuated, model.actuated
                )));
            }
            let mut cfg: MfgConfig = load_toml(&config)?;
            if let Some(seed) = env_seed() {
                cfg.seed = seed;
            }
            let signals = load_csv(&input)?;
            let run = model.training_run(&signals, &g)?;
            let latent = LatentData::from_run(&run, cfg.horizon);
            let policy = train(&model, &g, &latent, &cfg)?;
            write_json(&out_path(out), &MfgPolicyJson::from_policy(&policy, &g))?;
        }
        Command::Control {
            policy,
            input,
            window,
            healthy_window,
            seeds,
            report,
        } => {
            let policy_json: MfgPolicyJson = read_json(&policy)?;
            let g = policy_json.to_graph()?;
            let policy = policy_json.to_policy()?;
            let signals = load_csv(&input)?;
            let (a, b) = parse_window(&window)?;
            let healthy = signals.pooled(parse_window(&healthy_window)?)?;
            let z0 = policy.model.warmup_state(&signals, &g, a)?;
            let mut runs = Vec::new();
            let mut noise_seeds = Vec::new();
            for i in 0..seeds.max(1) {
                let noise_seed = policy.config.seed.wrapping_add(1000 + i as u64);
                runs.push(rollout(
                    &policy,
                    &g,
                    &z0,
                    b - a,
                    RolloutMode::Controlled,
                    noise_seed,
                    &healthy,
                )?);
                noise_seeds.push(noise_seed);
            }
            let artifact = control_artifact(
                "mfg",
                (a, b),
                &policy.model.actuated,
                &runs,
                &noise_seeds,
                &healthy,
                &policy.loss_phi,
                &policy.loss_gen,
                &g,
            )?;
            write_json(&out_path(report), &artifact)?;
        }
        Command::Mpc {
            model,
            graph,
            bmatrix,
            config,
            input,
            window,
            healthy_window,
            seeds,
            report,
        } => {
            let model_json: KoopmanModelJson = read_json(&model)?;
            let model = model_json.to_model()?;
            let graph_json: GraphJson = read_json(&graph)?;
            let g = graph_json.to_graph()?;
            let bm: ControlMatrixJson = read_json(&bmatrix)?;
            let b = bm.to_control_matrix()?;
            if b.actuated != model.actuated {
                return Err(Error::Config(format!(
                    "bmatrix actuators {:?} disagree with the model's {:?}",
                    b.actuated, model.actuated
                )));
            }
            let cfg: MpcConfig = load_toml(&config)?;
            let signals = load_csv(&input)?;
            let (a, bw) = parse_window(&window)?;
            let healthy = signals.pooled(parse_window(&healthy_window)?)?;
            let z0 = model.warmup_state(&signals, &g, a)?;
            let mut runs = Vec::new();
            let mut noise_seeds = Vec::new();
            for i in 0..seeds.max(1) {
                let noise_seed = model.config.seed.wrapping_add(1000 + i as u64);
                runs.push(mpc_rollout(&model, &g, &cfg, &z0, bw - a, noise_seed, &healthy)?);
                noise_seeds.push(noise_seed);
            }
            let artifact = control_artifact(
                "mpc",
                (a, bw),
                &model.actuated,
                &runs,
                &noise_seeds,
                &healthy,
                &[],
                &[],
                &g,
            )?;
            write_json(&out_path(report), &artifact)?;
        }
        Command::RunPipeline {
            config,
            out_dir,
            print_config,
        } => {
            let mut cfg: PipelineConfig = load_toml(&config)?;
            if let Some(seed) = env_seed() {
                cfg.seed = seed;
            }
            if print_config {
                let text = toml::to_string_pretty(&cfg.normalized())
                    .map_err(|e| Error::Config(e.to_string()))?;
                println!("{text}");
                return Ok(());
            }
            let summary = run_pipeline(&cfg, &out_path(out_dir))?;
            println!(
                "selected nodes: {:?}  rho(K): {:.4}",
                summary.selected_nodes, summary.spectral_radius_k
            );
            println!(
                "median W1 to healthy  uncontrolled: {:.4}  mpc: {:.4}  mfg: {:.4}",
                summary.median_w1_uncontrolled, summary.median_w1_mpc, summary.median_w1_mfg
            );
        }
        Command::Report { out, inputs } => {
            let bundle = build_report(&inputs)?;
            write_json(&out_path(out), &bundle)?;
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
