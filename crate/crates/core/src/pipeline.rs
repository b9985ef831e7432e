//! End-to-end orchestration: synthesize or load data, build the functional
//! graph, pick actuators, fit the surrogate, train the feedback policy, run
//! the paired closed-loop benchmark against the receding-horizon baseline,
//! and emit self-describing JSON artifacts plus a summary table.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::connectivity::{plv_matrix, threshold_adjacency, BrainGraph, GraphJson, ThresholdMode};
use crate::error::{Error, Result};
use crate::graphsel::{centralities, select_nodes, ControlMatrixJson};
use crate::koopman::{
    prediction_metrics, KoopmanModel, KoopmanModelJson, PredictionMetrics, ReservoirConfig,
};
use crate::metrics::{histogram, symmetric_range};
use crate::mfg::{
    rollout, train, ControlMetrics, ControlRun, LatentData, MfgConfig, MfgPolicyJson,
    RolloutMode,
};
use crate::mpc::{mpc_rollout, MpcConfig};
use crate::synthgen::{generate, load_csv, save_csv, OscillatorConfig, SignalMatrix};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ConnectivitySection {
    /// Half-open PLV estimation window.
    pub window: (usize, usize),
    pub threshold: ThresholdMode,
}

impl Default for ConnectivitySection {
    fn default() -> Self {
        ConnectivitySection {
            window: (1300, 1500),
            threshold: ThresholdMode::Absolute(0.4),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphselSection {
    pub k: usize,
    /// [degree, betweenness, eigenvector] combination weights.
    pub weights: [f64; 3],
}

impl Default for GraphselSection {
    fn default() -> Self {
        GraphselSection {
            k: 5,
            weights: [1.0, 1.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlSection {
    /// Half-open rollout window in sample indices. The initial latent state
    /// is the reservoir state at the window start, so the start should sit
    /// a short way into the pathological regime.
    pub window: (usize, usize),
    /// Window providing the pooled healthy reference amplitudes.
    pub healthy_window: (usize, usize),
    /// Paired-noise rollout seeds.
    pub n_seeds: usize,
}

impl Default for ControlSection {
    fn default() -> Self {
        ControlSection {
            window: (1340, 1500),
            healthy_window: (0, 500),
            n_seeds: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Global seed; stage seeds derive from it unless set per stage.
    pub seed: u64,
    /// Synthetic generator config; ignored when `input_csv` is set.
    pub synth: OscillatorConfig,
    /// Optional path to an existing CSV record.
    pub input_csv: Option<PathBuf>,
    pub connectivity: ConnectivitySection,
    pub graphsel: GraphselSection,
    pub koopman: ReservoirConfig,
    pub mfg: MfgConfig,
    pub mpc: MpcConfig,
    pub control: ControlSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 7,
            synth: OscillatorConfig::default(),
            input_csv: None,
            connectivity: ConnectivitySection::default(),
            graphsel: GraphselSection::default(),
            koopman: ReservoirConfig {
                input_scale: 0.1,
                tau: 4,
                washout: 10,
                lambda_reg: 1e-3,
                lambda_readout: Some(0.1),
                fit_window: Some((1300, 1500)),
                ..ReservoirConfig::default()
            },
            mfg: MfgConfig {
                // Policy clock in samples across the fit window, matching
                // the one-sample-per-step rollout and the baseline's
                // planning model.
                horizon: 200.0,
                lr_phi: 2e-3,
                lr_gen: 2e-4,
                lr_decay: 0.9995,
                lambda_real: 5.0,
                terminal_weight: 5.0,
                ..MfgConfig::default()
            },
            mpc: MpcConfig::default(),
            control: ControlSection::default(),
        }
    }
}

impl PipelineConfig {
    /// Propagate the global seed and the shared cost weights into the
    /// stage configs. The baseline shares gamma, R, diffusion, and the
    /// cost kind with the feedback policy so the comparison isolates the
    /// control paradigm rather than the tuning.
    pub fn normalized(&self) -> PipelineConfig {
        let mut c = self.clone();
        c.synth.seed = c.seed;
        c.koopman.seed = c.seed;
        c.mfg.seed = c.seed;
        c.mpc.gamma = c.mfg.gamma;
        c.mpc.r_weight = c.mfg.r_weight.clone();
        c.mpc.sigma_scale = c.mfg.sigma_scale;
        c.mpc.sigma_override = c.mfg.sigma_override;
        c.mpc.cost_kind = c.mfg.cost_kind;
        c
    }
}

/// Per-seed paired benchmark outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub noise_seed: u64,
    pub w1_uncontrolled: f64,
    pub w1_mpc: f64,
    pub w1_mfg: f64,
    pub variance_ratio_mfg: f64,
    pub variance_ratio_mpc: f64,
    pub control_total_variation_mfg: f64,
    pub control_std_mfg: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderingCounts {
    pub mfg_le_mpc: usize,
    pub mpc_le_uncontrolled: usize,
    pub mfg_le_uncontrolled: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KoopmanFidelity {
    pub one_step_rmse_surrogate: f64,
    pub one_step_rmse_persistence: f64,
    pub forecast: PredictionMetrics,
    /// Offset into the rollout window at which the forecast starts.
    pub forecast_window: (usize, usize),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub kind: String,
    pub schema_version: u32,
    pub seed: u64,
    pub selected_nodes: Vec<usize>,
    pub spectral_radius_k: f64,
    pub mfg_trained: bool,
    pub koopman: KoopmanFidelity,
    pub seeds: Vec<SeedOutcome>,
    pub median_w1_uncontrolled: f64,
    pub median_w1_mpc: f64,
    pub median_w1_mfg: f64,
    pub ordering: OrderingCounts,
    pub loss_phi: Vec<f64>,
    pub loss_gen: Vec<f64>,
    pub config: PipelineConfig,
    /// Wall-clock seconds per stage; the only non-deterministic field.
    pub timings: Vec<(String, f64)>,
}

/// Serialized closed-loop run artifact (control.json / mpc.json): first
/// seed's trajectories plus every seed's metrics, with the graph and the
/// loss curves inlined so plots can be regenerated from this file alone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlRunJson {
    pub kind: String,
    pub schema_version: u32,
    pub label: String,
    pub window: (usize, usize),
    pub actuated: Vec<usize>,
    pub noise_seeds: Vec<u64>,
    pub metrics: Vec<ControlMetrics>,
    /// n x (steps+1), first seed.
    pub physical: crate::linalg::MatrixJson,
    pub uncontrolled_physical: crate::linalg::MatrixJson,
    /// k x steps, first seed.
    pub controls: crate::linalg::MatrixJson,
    pub histograms: RunHistograms,
    pub loss_phi: Vec<f64>,
    pub loss_gen: Vec<f64>,
    pub graph: GraphJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunHistograms {
    pub edges: Vec<f64>,
    pub controlled: Vec<f64>,
    pub uncontrolled: Vec<f64>,
    pub healthy: Vec<f64>,
}

fn build_run_histograms(
    controlled: &[f64],
    uncontrolled: &[f64],
    healthy: &[f64],
) -> Result<RunHistograms> {
    let mut pooled = Vec::with_capacity(controlled.len() + uncontrolled.len() + healthy.len());
    pooled.extend_from_slice(controlled);
    pooled.extend_from_slice(uncontrolled);
    pooled.extend_from_slice(healthy);
    let range = symmetric_range(&pooled, 0.995)?;
    let h_ctrl = histogram(controlled, 100, range)?;
    let h_unc = histogram(uncontrolled, 100, range)?;
    let h_heal = histogram(healthy, 100, range)?;
    Ok(RunHistograms {
        edges: h_ctrl.edges,
        controlled: h_ctrl.density,
        uncontrolled: h_unc.density,
        healthy: h_heal.density,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text)?;
    Ok(())
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

/// Execute every stage and write all artifacts under `out_dir`. Returns
/// the summary (also written as summary.json).
pub fn run_pipeline(config: &PipelineConfig, out_dir: &Path) -> Result<PipelineSummary> {
    std::fs::create_dir_all(out_dir)?;
    let config = config.normalized();
    let mut timings: Vec<(String, f64)> = Vec::new();
    let stage = |timings: &mut Vec<(String, f64)>, name: &str, start: Instant| {
        timings.push((name.to_string(), start.elapsed().as_secs_f64()));
    };

    // --- data ------------------------------------------------------------
    let t0 = Instant::now();
    let signals: SignalMatrix = match &config.input_csv {
        Some(path) => load_csv(path).map_err(|e| Error::Data(format!("stage data: {e}")))?,
        None => generate(&config.synth).map_err(|e| Error::Config(format!("stage data: {e}")))?,
    };
    save_csv(&signals, &out_dir.join("data.csv"))?;
    stage(&mut timings, "data", t0);

    // --- stage 1: graph + actuators ---------------------------------------
    let t1 = Instant::now();
    let plv = plv_matrix(&signals, config.connectivity.window)
        .map_err(|e| Error::Data(format!("stage connectivity: {e}")))?;
    let graph = threshold_adjacency(&plv, config.connectivity.threshold)
        .map_err(|e| Error::Data(format!("stage connectivity: {e}")))?;
    write_json(&out_dir.join("graph.json"), &GraphJson::from_graph(&graph))?;

    let report = centralities(&graph).map_err(|e| Error::Numeric(format!("stage graphsel: {e}")))?;
    let (b_phys, report) = select_nodes(&report, config.graphsel.k, config.graphsel.weights)
        .map_err(|e| Error::Config(format!("stage graphsel: {e}")))?;
    write_json(
        &out_dir.join("bmatrix.json"),
        &ControlMatrixJson::new(&b_phys, config.graphsel.weights, &report),
    )?;
    stage(&mut timings, "graph", t1);

    // --- stage 2: surrogate -----------------------------------------------
    let t2 = Instant::now();
    let model = KoopmanModel::fit(&signals, &graph, &b_phys, &config.koopman)
        .map_err(|e| Error::Numeric(format!("stage koopman: {e}")))?;
    write_json(&out_dir.join("model.json"), &KoopmanModelJson::from_model(&model, &graph, false))?;

    let run = model
        .training_run(&signals, &graph)
        .map_err(|e| Error::Data(format!("stage koopman: {e}")))?;
    let koopman_fidelity = koopman_fidelity(&signals, &graph, &model, &run, &config)?;
    stage(&mut timings, "koopman", t2);

    // --- stage 3: policy ---------------------------------------------------
    let t3 = Instant::now();
    let latent = LatentData::from_run(&run, config.mfg.horizon);
    let policy = train(&model, &graph, &latent, &config.mfg)
        .map_err(|e| Error::Numeric(format!("stage mfg: {e}")))?;
    write_json(&out_dir.join("policy.json"), &MfgPolicyJson::from_policy(&policy, &graph))?;
    stage(&mut timings, "mfg", t3);

    // --- stage 4: paired benchmark -----------------------------------------
    let t4 = Instant::now();
    let (ctrl_a, ctrl_b) = config.control.window;
    if ctrl_a >= ctrl_b || ctrl_b > signals.n_samples() {
        return Err(Error::Config(format!(
            "stage control: window [{ctrl_a}, {ctrl_b}) invalid ({} samples)",
            signals.n_samples()
        )));
    }
    let z0 = model
        .warmup_state(&signals, &graph, ctrl_a)
        .map_err(|e| Error::Config(format!("stage control: {e}")))?;
    let steps = ctrl_b - ctrl_a;
    let healthy = signals
        .pooled(config.control.healthy_window)
        .map_err(|e| Error::Config(format!("stage control: {e}")))?;

    let mut seed_outcomes = Vec::new();
    let mut mfg_runs: Vec<ControlRun> = Vec::new();
    let mut mpc_runs: Vec<ControlRun> = Vec::new();
    for i in 0..config.control.n_seeds.max(1) {
        let noise_seed = config.seed.wrapping_add(1000).wrapping_add(i as u64);
        let run_mfg = rollout(
            &policy,
            &graph,
            &z0,
            steps,
            RolloutMode::Controlled,
            noise_seed,
            &healthy,
        )
        .map_err(|e| Error::Numeric(format!("stage control (mfg, seed {i}): {e}")))?;
        let run_mpc = mpc_rollout(&model, &graph, &config.mpc, &z0, steps, noise_seed, &healthy)
            .map_err(|e| Error::Numeric(format!("stage control (mpc, seed {i}): {e}")))?;
        seed_outcomes.push(SeedOutcome {
            noise_seed,
            w1_uncontrolled: run_mfg.metrics.w1_vs_healthy_uncontrolled,
            w1_mpc: run_mpc.metrics.w1_vs_healthy_controlled,
            w1_mfg: run_mfg.metrics.w1_vs_healthy_controlled,
            variance_ratio_mfg: run_mfg.metrics.amplitude_variance_ratio,
            variance_ratio_mpc: run_mpc.metrics.amplitude_variance_ratio,
            control_total_variation_mfg: run_mfg.metrics.control_total_variation,
            control_std_mfg: run_mfg.metrics.control_std,
        });
        mfg_runs.push(run_mfg);
        mpc_runs.push(run_mpc);
    }

    let noise_seeds: Vec<u64> = seed_outcomes.iter().map(|o| o.noise_seed).collect();
    write_json(
        &out_dir.join("control.json"),
        &control_artifact(
            "mfg",
            config.control.window,
            &model.actuated,
            &mfg_runs,
            &noise_seeds,
            &healthy,
            &policy.loss_phi,
            &policy.loss_gen,
            &graph,
        )?,
    )?;
    write_json(
        &out_dir.join("mpc.json"),
        &control_artifact(
            "mpc",
            config.control.window,
            &model.actuated,
            &mpc_runs,
            &noise_seeds,
            &healthy,
            &[],
            &[],
            &graph,
        )?,
    )?;
    stage(&mut timings, "control", t4);

    let w1_unc: Vec<f64> = seed_outcomes.iter().map(|s| s.w1_uncontrolled).collect();
    let w1_mpc: Vec<f64> = seed_outcomes.iter().map(|s| s.w1_mpc).collect();
    let w1_mfg: Vec<f64> = seed_outcomes.iter().map(|s| s.w1_mfg).collect();
    let ordering = OrderingCounts {
        mfg_le_mpc: seed_outcomes.iter().filter(|s| s.w1_mfg <= s.w1_mpc).count(),
        mpc_le_uncontrolled: seed_outcomes.iter().filter(|s| s.w1_mpc <= s.w1_uncontrolled).count(),
        mfg_le_uncontrolled: seed_outcomes.iter().filter(|s| s.w1_mfg <= s.w1_uncontrolled).count(),
        total: seed_outcomes.len(),
    };

    let summary = PipelineSummary {
        kind: "pipeline_summary".to_string(),
        schema_version: 1,
        seed: config.seed,
        selected_nodes: b_phys.actuated.clone(),
        spectral_radius_k: model.spectral_radius_k,
        mfg_trained: config.mfg.n_iter > 0,
        koopman: koopman_fidelity,
        seeds: seed_outcomes,
        median_w1_uncontrolled: median(&w1_unc),
        median_w1_mpc: median(&w1_mpc),
        median_w1_mfg: median(&w1_mfg),
        ordering,
        loss_phi: policy.loss_phi.clone(),
        loss_gen: policy.loss_gen.clone(),
        config: config.clone(),
        timings,
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// One-step fidelity against persistence plus a free-run forecast over the
/// tail of the rollout window.
fn koopman_fidelity(
    signals: &SignalMatrix,
    graph: &BrainGraph,
    model: &KoopmanModel,
    run: &crate::koopman::ReservoirRun,
    config: &PipelineConfig,
) -> Result<KoopmanFidelity> {
    let n = signals.n_channels();
    let fit_start = config.koopman.fit_window.map_or(0, |w| w.0);
    let pred = &model.w_out * (&model.k * &run.curr);
    let mut surrogate_sq = 0.0;
    let mut persistence_sq = 0.0;
    let mut count = 0usize;
    for c in 0..run.curr.ncols() {
        let t = fit_start + run.t0 + c;
        for i in 0..n {
            let truth = signals.value(i, t + 1);
            surrogate_sq += (pred[(i, c)] - truth).powi(2);
            persistence_sq += (signals.value(i, t) - truth).powi(2);
            count += 1;
        }
    }
    let one_step_rmse_surrogate = (surrogate_sq / count as f64).sqrt();
    let one_step_rmse_persistence = (persistence_sq / count as f64).sqrt();

    // Free-run forecast across the rollout window, starting from the
    // reservoir state at the window start.
    let (a, b) = config.control.window;
    if b > signals.n_samples() || a >= b {
        return Err(Error::Config(format!("forecast window [{a}, {b}) invalid")));
    }
    let z0 = model.warmup_state(signals, graph, a)?;
    let steps = b - a - 1;
    let (_, physical) = model.forecast(&z0, steps)?;
    let mut truth = nalgebra::DMatrix::zeros(n, steps + 1);
    for (col, t) in (a..b).enumerate() {
        for i in 0..n {
            truth[(i, col)] = signals.value(i, t);
        }
    }
    let forecast = prediction_metrics(&truth, &physical)?;
    Ok(KoopmanFidelity {
        one_step_rmse_surrogate,
        one_step_rmse_persistence,
        forecast,
        forecast_window: (a, b),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn control_artifact(
    label: &str,
    window: (usize, usize),
    actuated: &[usize],
    runs: &[ControlRun],
    noise_seeds: &[u64],
    healthy: &[f64],
    loss_phi: &[f64],
    loss_gen: &[f64],
    graph: &BrainGraph,
) -> Result<ControlRunJson> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Data("no rollouts to serialize".to_string()))?;
    let controlled: Vec<f64> = first.physical.iter().cloned().collect();
    let uncontrolled: Vec<f64> = first.uncontrolled_physical.iter().cloned().collect();
    Ok(ControlRunJson {
        kind: "control_run".to_string(),
        schema_version: 1,
        label: label.to_string(),
        window,
        actuated: actuated.to_vec(),
        noise_seeds: noise_seeds.to_vec(),
        metrics: runs.iter().map(|r| r.metrics.clone()).collect(),
        physical: crate::linalg::MatrixJson::from_matrix(&first.physical),
        uncontrolled_physical: crate::linalg::MatrixJson::from_matrix(&first.uncontrolled_physical),
        controls: crate::linalg::MatrixJson::from_matrix(&first.controls),
        histograms: build_run_histograms(&controlled, &uncontrolled, healthy)?,
        loss_phi: loss_phi.to_vec(),
        loss_gen: loss_gen.to_vec(),
        graph: GraphJson::from_graph(graph),
    })
}

// ---------------------------------------------------------------------------
// report: plot-data bundle assembled from one or more run artifacts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeEntry {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySeries {
    pub run_label: String,
    pub channel: usize,
    pub controlled: Vec<f64>,
    pub uncontrolled: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlSeries {
    pub run_label: String,
    pub actuator: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramSection {
    pub run_label: String,
    pub edges: Vec<f64>,
    pub controlled: Vec<f64>,
    pub uncontrolled: Vec<f64>,
    pub healthy: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossCurves {
    pub run_label: String,
    pub phi: Vec<f64>,
    pub gen: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBundle {
    pub kind: String,
    pub schema_version: u32,
    pub adjacency_n: usize,
    /// Row-major adjacency for heatmap rendering.
    pub adjacency: Vec<f64>,
    pub edges: Vec<EdgeEntry>,
    pub trajectories: Vec<TrajectorySeries>,
    pub controls: Vec<ControlSeries>,
    pub histograms: Vec<HistogramSection>,
    pub loss_curves: Vec<LossCurves>,
}

/// Assemble the plot-data bundle from control-run artifacts. Every input
/// must be a `control_run` JSON with the same schema version.
pub fn report(inputs: &[PathBuf]) -> Result<ReportBundle> {
    if inputs.is_empty() {
        return Err(Error::Config("report needs at least one run JSON".to_string()));
    }
    let mut runs: Vec<ControlRunJson> = Vec::new();
    for path in inputs {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        let kind = value.get("kind").and_then(|k| k.as_str()).unwrap_or("?");
        if kind != "control_run" {
            return Err(Error::Data(format!(
                "{}: kind '{kind}' is not a control run artifact",
                path.display()
            )));
        }
        let run: ControlRunJson = serde_json::from_value(value)?;
        if run.schema_version != 1 {
            return Err(Error::Data(format!(
                "{}: schema_version {} does not match supported version 1",
                path.display(),
                run.schema_version
            )));
        }
        runs.push(run);
    }
    let schema = runs[0].schema_version;
    if runs.iter().any(|r| r.schema_version != schema) {
        return Err(Error::Data("schema_version mismatch between runs".to_string()));
    }

    let graph = &runs[0].graph;
    let adjacency = graph.adjacency.data.clone();
    let n = graph.n;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let w = adjacency[i * n + j];
            if w > 0.0 {
                edges.push(EdgeEntry { i, j, w });
            }
        }
    }

    let mut trajectories = Vec::new();
    let mut controls = Vec::new();
    let mut histograms = Vec::new();
    let mut loss_curves = Vec::new();
    for run in &runs {
        let phys = run.physical.to_matrix()?;
        let unc = run.uncontrolled_physical.to_matrix()?;
        for &ch in &run.actuated {
            if ch < phys.nrows() {
                trajectories.push(TrajectorySeries {
                    run_label: run.label.clone(),
                    channel: ch,
                    controlled: phys.row(ch).iter().cloned().collect(),
                    uncontrolled: unc.row(ch).iter().cloned().collect(),
                });
            }
        }
        let u = run.controls.to_matrix()?;
        for (row, &actuator) in run.actuated.iter().enumerate() {
            if row < u.nrows() {
                controls.push(ControlSeries {
                    run_label: run.label.clone(),
                    actuator,
                    values: u.row(row).iter().cloned().collect(),
                });
            }
        }
        histograms.push(HistogramSection {
            run_label: run.label.clone(),
            edges: run.histograms.edges.clone(),
            controlled: run.histograms.controlled.clone(),
            uncontrolled: run.histograms.uncontrolled.clone(),
            healthy: run.histograms.healthy.clone(),
        });
        if !run.loss_phi.is_empty() {
            loss_curves.push(LossCurves {
                run_label: run.label.clone(),
                phi: run.loss_phi.clone(),
                gen: run.loss_gen.clone(),
            });
        }
    }

    Ok(ReportBundle {
        kind: "report_bundle".to_string(),
        schema_version: 1,
        adjacency_n: n,
        adjacency,
        edges,
        trajectories,
        controls,
        histograms,
        loss_curves,
    })
}
