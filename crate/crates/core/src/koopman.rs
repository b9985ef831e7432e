//! Linear latent surrogate of the signal dynamics: a frozen echo-state
//! reservoir lifts graph-augmented, delay-embedded inputs into a latent
//! space where the one-step transition K and the readout W_out are fit in
//! closed form by ridge regression. The transition is clamped to spectral
//! radius one, and the physical control matrix is projected through the
//! current-state block of the input weights.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::connectivity::{BrainGraph, GraphJson};
use crate::error::{Error, Result};
use crate::graphsel::ControlMatrix;
use crate::linalg::{ridge_solve, spectral_radius, MatrixJson};
use crate::metrics::{rmse, wasserstein_1d};
use crate::synthgen::SignalMatrix;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ReservoirConfig {
    pub n_res: usize,
    /// Leak rate alpha in (0, 1].
    pub alpha: f64,
    /// Fraction of nonzero recurrent weights, in (0, 1].
    pub density: f64,
    /// Target spectral radius of the recurrent weights.
    pub res_spectral_radius: f64,
    pub input_scale: f64,
    /// Delay embedding depth tau >= 0.
    pub tau: usize,
    /// Leading reservoir states discarded before fitting.
    pub washout: usize,
    pub lambda_reg: f64,
    /// Ridge strength for the readout fit; defaults to `lambda_reg`. A
    /// stronger readout ridge tames the reconstruction gain away from the
    /// training manifold, which the downstream cost geometry inherits.
    pub lambda_readout: Option<f64>,
    /// Optional half-open sample window the fit is restricted to; the
    /// whole record otherwise. Forecast warm-up replays the same window.
    pub fit_window: Option<(usize, usize)>,
    pub seed: u64,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        ReservoirConfig {
            n_res: 200,
            alpha: 0.3,
            density: 0.05,
            res_spectral_radius: 0.9,
            input_scale: 0.5,
            tau: 2,
            washout: 50,
            lambda_reg: 1e-4,
            lambda_readout: None,
            fit_window: None,
            seed: 42,
        }
    }
}

impl ReservoirConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_res == 0 {
            return Err(Error::Config("n_res must be >= 1".to_string()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must be in (0,1], got {}", self.alpha)));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::Config(format!("density must be in (0,1], got {}", self.density)));
        }
        if !(self.res_spectral_radius > 0.0 && self.res_spectral_radius.is_finite()) {
            return Err(Error::Config(format!(
                "res_spectral_radius must be positive, got {}",
                self.res_spectral_radius
            )));
        }
        if self.lambda_reg < 0.0 || !self.lambda_reg.is_finite() {
            return Err(Error::Config(format!("lambda_reg must be >= 0, got {}", self.lambda_reg)));
        }
        if !self.input_scale.is_finite() {
            return Err(Error::Config("input_scale must be finite".to_string()));
        }
        Ok(())
    }
}

/// Frozen reservoir weights plus the fitted latent operators.
#[derive(Debug, Clone)]
pub struct KoopmanModel {
    pub config: ReservoirConfig,
    /// Physical channel count n.
    pub n_channels: usize,
    /// Frozen input weights, n_res x n(2 + tau).
    pub w_in: DMatrix<f64>,
    /// Frozen recurrent weights, n_res x n_res.
    pub w_res: DMatrix<f64>,
    /// Latent transition after the spectral clamp.
    pub k: DMatrix<f64>,
    /// Readout, n x n_res.
    pub w_out: DMatrix<f64>,
    /// Latent control projection, n_res x n.
    pub b_latent: DMatrix<f64>,
    /// Spectral radius of the stored K.
    pub spectral_radius_k: f64,
    /// Diagonal latent diffusion estimated from one-step residuals.
    pub sigma_latent: Vec<f64>,
    /// Actuated node indices; the nonzero columns of b_latent.
    pub actuated: Vec<usize>,
}

/// Aligned latent data extracted from a reservoir run: columns of `curr`
/// and `next` are one step apart, `targets` holds the physical states
/// aligned with `curr`, and `t0` is the sample index of the first column.
#[derive(Debug, Clone)]
pub struct ReservoirRun {
    pub curr: DMatrix<f64>,
    pub next: DMatrix<f64>,
    pub targets: DMatrix<f64>,
    pub t0: usize,
    pub n_samples_total: usize,
}

/// Frozen random weights regenerated from the seed: W_in uniform in
/// +-input_scale, dense; W_res uniform in +-1 kept with probability
/// `density`, rescaled to the target spectral radius.
pub fn init_weights(config: &ReservoirConfig, n_channels: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    config.validate()?;
    let d_in = n_channels * (2 + config.tau);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let w_in = DMatrix::from_fn(config.n_res, d_in, |_, _| {
        (rng.random::<f64>() * 2.0 - 1.0) * config.input_scale
    });
    let mut w_res = DMatrix::zeros(config.n_res, config.n_res);
    for i in 0..config.n_res {
        for j in 0..config.n_res {
            let keep = rng.random::<f64>() < config.density;
            let value = rng.random::<f64>() * 2.0 - 1.0;
            if keep {
                w_res[(i, j)] = value;
            }
        }
    }
    let rho = spectral_radius(&w_res)?;
    if rho > 1e-12 {
        w_res *= config.res_spectral_radius / rho;
    }
    Ok((w_in, w_res))
}

/// Augmented input `[x_t; A x_t; x_{t-1}; ...; x_{t-tau}]` of dim n(2+tau).
pub fn build_input(
    signals: &SignalMatrix,
    graph: &BrainGraph,
    t: usize,
    tau: usize,
) -> Result<DVector<f64>> {
    if t < tau {
        return Err(Error::Data(format!("build_input needs t >= tau, got t={t}, tau={tau}")));
    }
    if t >= signals.n_samples() {
        return Err(Error::Data(format!(
            "build_input: t={t} out of range for {} samples",
            signals.n_samples()
        )));
    }
    let n = signals.n_channels();
    if graph.n() != n {
        return Err(Error::Data(format!("graph n={} vs {} channels", graph.n(), n)));
    }
    let mut out = DVector::zeros(n * (2 + tau));
    let x_t = signals.sample(t);
    for i in 0..n {
        out[i] = x_t[i];
    }
    let adj = graph.adjacency();
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += adj[(i, j)] * x_t[j];
        }
        out[n + i] = acc;
    }
    for d in 1..=tau {
        for i in 0..n {
            out[(1 + d) * n + i] = signals.value(i, t - d);
        }
    }
    Ok(out)
}

/// Leaky-tanh reservoir update over the full record, starting from the zero
/// state at sample `tau`:
/// `r_{t+1} = (1-alpha) r_t + alpha tanh(W_in u_in(t) + W_res r_t)`.
/// Returns every state r_t for t in [tau, n_samples).
pub fn reservoir_states(
    signals: &SignalMatrix,
    graph: &BrainGraph,
    config: &ReservoirConfig,
    w_in: &DMatrix<f64>,
    w_res: &DMatrix<f64>,
) -> Result<Vec<DVector<f64>>> {
    let t_max = signals.n_samples();
    let tau = config.tau;
    if t_max < tau + 2 {
        return Err(Error::Data("not enough samples to drive the reservoir".to_string()));
    }
    let mut states = Vec::with_capacity(t_max - tau);
    let mut r = DVector::zeros(config.n_res);
    states.push(r.clone());
    for t in tau..(t_max - 1) {
        let u = build_input(signals, graph, t, tau)?;
        let mut pre = w_in * &u;
        pre += w_res * &r;
        let activated = pre.map(f64::tanh);
        r = &r * (1.0 - config.alpha) + activated * config.alpha;
        states.push(r.clone());
    }
    Ok(states)
}

/// Drive the reservoir and collect the post-washout transition pairs plus
/// the aligned physical targets.
pub fn run_reservoir(
    signals: &SignalMatrix,
    graph: &BrainGraph,
    config: &ReservoirConfig,
) -> Result<ReservoirRun> {
    config.validate()?;
    let (w_in, w_res) = init_weights(config, signals.n_channels())?;
    run_reservoir_with(signals, graph, config, &w_in, &w_res)
}

/// As `run_reservoir` but with externally supplied frozen weights.
pub fn run_reservoir_with(
    signals: &SignalMatrix,
    graph: &BrainGraph,
    config: &ReservoirConfig,
    w_in: &DMatrix<f64>,
    w_res: &DMatrix<f64>,
) -> Result<ReservoirRun> {
    let tau = config.tau;
    let t_max = signals.n_samples();
    let usable = t_max.saturating_sub(tau + config.washout + 1);
    if usable < 2 {
        return Err(Error::Data(format!(
            "insufficient samples: {t_max} total, tau={tau}, washout={}",
            config.washout
        )));
    }
    let states = reservoir_states(signals, graph, config, w_in, w_res)?;
    // states[i] is r_{tau + i}; usable pairs start after the washout.
    let first = config.washout;
    let cols = states.len() - first - 1;
    let n = signals.n_channels();
    let mut curr = DMatrix::zeros(config.n_res, cols);
    let mut next = DMatrix::zeros(config.n_res, cols);
    let mut targets = DMatrix::zeros(n, cols);
    for c in 0..cols {
        curr.set_column(c, &states[first + c]);
        next.set_column(c, &states[first + c + 1]);
        let t = tau + first + c;
        for i in 0..n {
            targets[(i, c)] = signals.value(i, t);
        }
    }
    Ok(ReservoirRun {
        curr,
        next,
        targets,
        t0: tau + first,
        n_samples_total: t_max,
    })
}

/// Ridge fit of the latent transition: K = R_next R_curr^T (R_curr R_curr^T + lambda I)^{-1}.
pub fn fit_transition(r_curr: &DMatrix<f64>, r_next: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    ridge_solve(r_next, r_curr, lambda)
}

/// Ridge fit of the readout mapping latent states to physical states.
pub fn fit_readout(r_curr: &DMatrix<f64>, x_target: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    ridge_solve(x_target, r_curr, lambda)
}

/// Clamp the transition to spectral radius <= 1: K/rho(K) when rho > 1,
/// unchanged otherwise. Returns the matrix and the spectral radius of the
/// returned matrix.
pub fn stabilize(k: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let rho = spectral_radius(k)?;
    if rho > 1.0 {
        Ok((k / rho, 1.0))
    } else {
        Ok((k.clone(), rho))
    }
}

/// Latent control projection: only the current-state block of W_in
/// participates, since control acts on x_t rather than its delayed copies.
pub fn project_control(
    w_in: &DMatrix<f64>,
    b_phys: &ControlMatrix,
    n_channels: usize,
    tau: usize,
) -> Result<DMatrix<f64>> {
    if b_phys.n != n_channels {
        return Err(Error::Data(format!(
            "control matrix n={} vs {} channels",
            b_phys.n, n_channels
        )));
    }
    if w_in.ncols() != n_channels * (2 + tau) {
        return Err(Error::Data(format!(
            "w_in has {} columns, expected {}",
            w_in.ncols(),
            n_channels * (2 + tau)
        )));
    }
    let block = w_in.columns(0, n_channels);
    Ok(&block * b_phys.dense())
}

impl KoopmanModel {
    /// Fit the full surrogate from signals, functional graph, and control
    /// matrix. Deterministic for a fixed config.
    pub fn fit(
        signals: &SignalMatrix,
        graph: &BrainGraph,
        b_phys: &ControlMatrix,
        config: &ReservoirConfig,
    ) -> Result<Self> {
        config.validate()?;
        let n = signals.n_channels();
        let data = match config.fit_window {
            Some(w) => signals.slice(w)?,
            None => signals.clone(),
        };
        let (w_in, w_res) = init_weights(config, n)?;
        let run = run_reservoir_with(&data, graph, config, &w_in, &w_res)?;
        let k_raw = fit_transition(&run.curr, &run.next, config.lambda_reg)?;
        let (k, rho) = stabilize(&k_raw)?;
        let lambda_out = config.lambda_readout.unwrap_or(config.lambda_reg);
        let w_out = fit_readout(&run.curr, &run.targets, lambda_out)?;
        let b_latent = project_control(&w_in, b_phys, n, config.tau)?;

        // Diagonal diffusion from the one-step residuals of the clamped K.
        let resid = &run.next - &k * &run.curr;
        let cols = resid.ncols() as f64;
        let sigma_latent: Vec<f64> = (0..config.n_res)
            .map(|i| {
                let row = resid.row(i);
                let mean = row.sum() / cols;
                (row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols).sqrt()
            })
            .collect();

        Ok(KoopmanModel {
            config: config.clone(),
            n_channels: n,
            w_in,
            w_res,
            k,
            w_out,
            b_latent,
            spectral_radius_k: rho,
            sigma_latent,
            actuated: b_phys.actuated.clone(),
        })
    }

    pub fn n_res(&self) -> usize {
        self.config.n_res
    }

    /// Replay the reservoir pass the fit saw, on (the configured window
    /// of) the given record.
    pub fn training_run(&self, signals: &SignalMatrix, graph: &BrainGraph) -> Result<ReservoirRun> {
        let data = match self.config.fit_window {
            Some(w) => signals.slice(w)?,
            None => signals.clone(),
        };
        run_reservoir_with(&data, graph, &self.config, &self.w_in, &self.w_res)
    }

    /// Reservoir state at absolute sample index `t`, warmed up from the
    /// start of the fit window with the frozen weights.
    pub fn warmup_state(
        &self,
        signals: &SignalMatrix,
        graph: &BrainGraph,
        t: usize,
    ) -> Result<DVector<f64>> {
        let start = self.config.fit_window.map_or(0, |w| w.0);
        let tau = self.config.tau;
        if t < start + tau + 1 || t >= signals.n_samples() {
            return Err(Error::Data(format!(
                "warm-up index {t} out of range (window start {start}, tau {tau}, {} samples)",
                signals.n_samples()
            )));
        }
        let data = signals.slice((start, t + 1))?;
        let states = reservoir_states(&data, graph, &self.config, &self.w_in, &self.w_res)?;
        Ok(states
            .last()
            .ok_or_else(|| Error::Data("empty warm-up".to_string()))?
            .clone())
    }

    /// Project a latent state back to physical space.
    pub fn readout(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.w_out * z
    }

    /// Free-run the linear latent dynamics for `steps` steps from `z0`.
    /// Returns the latent and physical trajectories, both with steps + 1
    /// columns including the initial state.
    pub fn forecast(&self, z0: &DVector<f64>, steps: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if steps == 0 {
            return Err(Error::Data("forecast needs steps >= 1".to_string()));
        }
        if z0.len() != self.n_res() {
            return Err(Error::Data(format!(
                "forecast: z0 has dim {}, expected {}",
                z0.len(),
                self.n_res()
            )));
        }
        let mut latent = DMatrix::zeros(self.n_res(), steps + 1);
        let mut physical = DMatrix::zeros(self.n_channels, steps + 1);
        let mut z = z0.clone();
        for s in 0..=steps {
            latent.set_column(s, &z);
            physical.set_column(s, &self.readout(&z));
            if s < steps {
                z = &self.k * z;
            }
        }
        Ok((latent, physical))
    }
}

/// Pointwise and distributional fidelity of a prediction against truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionMetrics {
    pub rmse_global: f64,
    pub rmse_per_channel: Vec<f64>,
    pub w1_global: f64,
    pub w1_per_channel: Vec<f64>,
}

/// RMSE over all entries plus pooled and per-channel 1-D Wasserstein
/// distances between the value distributions.
pub fn prediction_metrics(truth: &DMatrix<f64>, pred: &DMatrix<f64>) -> Result<PredictionMetrics> {
    if truth.shape() != pred.shape() {
        return Err(Error::Data(format!(
            "metrics: shape mismatch {:?} vs {:?}",
            truth.shape(),
            pred.shape()
        )));
    }
    let n = truth.nrows();
    let mut rmse_per_channel = Vec::with_capacity(n);
    let mut w1_per_channel = Vec::with_capacity(n);
    for i in 0..n {
        let t_row: Vec<f64> = truth.row(i).iter().cloned().collect();
        let p_row: Vec<f64> = pred.row(i).iter().cloned().collect();
        rmse_per_channel.push(rmse(&t_row, &p_row)?);
        w1_per_channel.push(wasserstein_1d(&t_row, &p_row)?);
    }
    let t_all: Vec<f64> = truth.iter().cloned().collect();
    let p_all: Vec<f64> = pred.iter().cloned().collect();
    Ok(PredictionMetrics {
        rmse_global: rmse(&t_all, &p_all)?,
        rmse_per_channel,
        w1_global: wasserstein_1d(&t_all, &p_all)?,
        w1_per_channel,
    })
}

/// Serialized model artifact (model.json). W_in and W_res are regenerated
/// from the seed unless `matrices_inline` asks for full dumps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KoopmanModelJson {
    pub kind: String,
    pub schema_version: u32,
    pub config: ReservoirConfig,
    pub n_channels: usize,
    /// The functional graph the surrogate was fitted against; the input
    /// coupling depends on it, so forecasts need it too.
    pub graph: GraphJson,
    pub k: MatrixJson,
    pub w_out: MatrixJson,
    pub b_latent: MatrixJson,
    pub spectral_radius_k: f64,
    pub sigma_latent: Vec<f64>,
    pub actuated: Vec<usize>,
    pub matrices_inline: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_in: Option<MatrixJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_res: Option<MatrixJson>,
}

impl KoopmanModelJson {
    pub fn from_model(model: &KoopmanModel, graph: &BrainGraph, matrices_inline: bool) -> Self {
        KoopmanModelJson {
            kind: "koopman_model".to_string(),
            schema_version: 1,
            config: model.config.clone(),
            n_channels: model.n_channels,
            graph: GraphJson::from_graph(graph),
            k: MatrixJson::from_matrix(&model.k),
            w_out: MatrixJson::from_matrix(&model.w_out),
            b_latent: MatrixJson::from_matrix(&model.b_latent),
            spectral_radius_k: model.spectral_radius_k,
            sigma_latent: model.sigma_latent.clone(),
            actuated: model.actuated.clone(),
            matrices_inline,
            w_in: matrices_inline.then(|| MatrixJson::from_matrix(&model.w_in)),
            w_res: matrices_inline.then(|| MatrixJson::from_matrix(&model.w_res)),
        }
    }

    pub fn to_graph(&self) -> Result<BrainGraph> {
        self.graph.to_graph()
    }

    pub fn to_model(&self) -> Result<KoopmanModel> {
        let (w_in, w_res) = match (&self.w_in, &self.w_res) {
            (Some(a), Some(b)) if self.matrices_inline => (a.to_matrix()?, b.to_matrix()?),
            _ => init_weights(&self.config, self.n_channels)?,
        };
        Ok(KoopmanModel {
            config: self.config.clone(),
            n_channels: self.n_channels,
            w_in,
            w_res,
            k: self.k.to_matrix()?,
            w_out: self.w_out.to_matrix()?,
            b_latent: self.b_latent.to_matrix()?,
            spectral_radius_k: self.spectral_radius_k,
            sigma_latent: self.sigma_latent.clone(),
            actuated: self.actuated.clone(),
        })
    }
}
