//! Adversarial solver for the graph-regularized stochastic control problem
//! in the Koopman latent space.
//!
//! A value network phi(z, t) is trained to zero the residual of the
//! Hamilton-Jacobi-Bellman equation
//!
//! ```text
//! d_t phi + 1/2 Tr(Sigma Sigma^T Hess_z phi) + C_state(W_out z) + H(z, grad_z phi) = 0
//! ```
//!
//! with the analytic Hamiltonian available because the latent drift is
//! linear and the control cost quadratic:
//!
//! ```text
//! H(z, p) = p^T (K - I) z - 1/(4 gamma) p^T B R^{-1} B^T p
//! ```
//!
//! A generator network G(z_0, t) pushes sampled initial states forward in
//! time and supplies the training distribution, while observed latent
//! transitions anchor the value surface through a discrete Bellman residual
//! and the terminal condition pins phi at the horizon. The closed-form
//! feedback `u* = -1/(2 gamma) R^{-1} B^T grad_z phi` then drives the
//! closed-loop rollouts.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::connectivity::{BrainGraph, StateCostKind};
use crate::diffnet::{adam_step, AdamState, DiffMlp};
use crate::error::{Error, Result};
use crate::koopman::{KoopmanModel, ReservoirRun};
use crate::linalg::MatrixJson;
use crate::metrics::wasserstein_1d;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MfgConfig {
    /// Control tolerance gamma > 0; the running control cost is
    /// gamma u^T R u.
    pub gamma: f64,
    /// Positive-definite k x k control weight; None means identity.
    pub r_weight: Option<MatrixJson>,
    /// Multiplier on the model's estimated latent diffusion.
    pub sigma_scale: f64,
    /// Constant diffusion override; replaces the estimated diagonal.
    pub sigma_override: Option<f64>,
    /// Time horizon; training time is normalized to [0, horizon].
    pub horizon: f64,
    pub batch_size: usize,
    pub n_iter: usize,
    pub lr_phi: f64,
    pub lr_gen: f64,
    /// Per-iteration multiplicative learning-rate decay (1.0 = constant).
    pub lr_decay: f64,
    /// Weight of the empirical Bellman residual on real latent pairs.
    pub lambda_real: f64,
    /// Weight of the terminal-condition residual |phi(z, T) - G_T(z)|^2.
    pub terminal_weight: f64,
    /// Coefficient q of the optional quadratic terminal cost q ||z||^2;
    /// None means zero terminal cost.
    pub terminal_q: Option<f64>,
    /// Hutchinson probe count for the diffusion trace; 0 selects the exact
    /// coordinate sweep.
    pub hutchinson_probes: usize,
    /// Probability of drawing z_0 from the real latent columns rather than
    /// the Gaussian prior.
    pub p_real: f64,
    /// Feature scale for the network inputs and the generator output.
    /// Training sets it to the pooled latent std and records it in the
    /// policy snapshot; None means no rescaling.
    pub latent_scale: Option<f64>,
    /// Output scale of the value network: phi = value_scale * N(input).
    /// Training sets it from the running-cost magnitude times the horizon
    /// and records it in the policy snapshot; None means 1.
    pub value_scale: Option<f64>,
    /// Std of the Gaussian prior; None uses the empirical latent std.
    pub gaussian_scale: Option<f64>,
    pub hidden_phi: Vec<usize>,
    pub hidden_gen: Vec<usize>,
    pub cost_kind: StateCostKind,
    pub seed: u64,
}

impl Default for MfgConfig {
    fn default() -> Self {
        MfgConfig {
            gamma: 0.25,
            r_weight: None,
            sigma_scale: 1.0,
            sigma_override: None,
            horizon: 1.0,
            batch_size: 64,
            n_iter: 2000,
            lr_phi: 1e-4,
            lr_gen: 4e-4,
            lr_decay: 1.0,
            lambda_real: 1.0,
            terminal_weight: 1.0,
            terminal_q: None,
            hutchinson_probes: 8,
            p_real: 0.5,
            latent_scale: None,
            value_scale: None,
            gaussian_scale: None,
            hidden_phi: vec![128, 128],
            hidden_gen: vec![128, 128],
            cost_kind: StateCostKind::SquaredOperator,
            seed: 7,
        }
    }
}

impl MfgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be > 0, got {}", self.horizon)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".to_string()));
        }
        if self.lambda_real < 0.0 || self.terminal_weight < 0.0 {
            return Err(Error::Config("loss weights must be nonnegative".to_string()));
        }
        if !(0.0..=1.0).contains(&self.p_real) {
            return Err(Error::Config(format!("p_real must be in [0,1], got {}", self.p_real)));
        }
        if self.sigma_scale < 0.0 {
            return Err(Error::Config("sigma_scale must be >= 0".to_string()));
        }
        Ok(())
    }
}

/// Value/generator pair plus the surrogate it was trained against.
#[derive(Debug, Clone)]
pub struct MfgPolicy {
    pub value_net: DiffMlp,
    pub generator_net: DiffMlp,
    pub model: KoopmanModel,
    pub config: MfgConfig,
    pub loss_phi: Vec<f64>,
    pub loss_gen: Vec<f64>,
}

/// Distribution-level outcome metrics of one closed-loop rollout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlMetrics {
    pub w1_vs_healthy_controlled: f64,
    pub w1_vs_healthy_uncontrolled: f64,
    pub amplitude_variance_ratio: f64,
    /// Mean |u_{t+1} - u_t| over steps and components.
    pub control_total_variation: f64,
    /// Std of all control samples.
    pub control_std: f64,
}

/// Closed-loop trajectories and metrics for one experiment.
#[derive(Debug, Clone)]
pub struct ControlRun {
    pub latent: DMatrix<f64>,
    pub physical: DMatrix<f64>,
    /// k x steps control inputs (zero in uncontrolled mode).
    pub controls: DMatrix<f64>,
    /// Paired-noise reference trajectory with u = 0.
    pub uncontrolled_physical: DMatrix<f64>,
    pub metrics: ControlMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RolloutMode {
    Controlled,
    Uncontrolled,
}

/// Real latent transitions used for sampling and the empirical anchor.
#[derive(Debug, Clone)]
pub struct LatentData {
    /// n_res x m states r_t.
    pub states: DMatrix<f64>,
    /// n_res x m successors r_{t+dt}.
    pub next: DMatrix<f64>,
    /// Normalized time of each column, in [0, 1).
    pub times: Vec<f64>,
    /// Normalized step between a state and its successor.
    pub dt: f64,
}

impl LatentData {
    /// Map a reservoir run onto the policy clock: the record spans
    /// [0, horizon], so one sample advances the clock by horizon / total.
    pub fn from_run(run: &ReservoirRun, horizon: f64) -> Self {
        let m = run.curr.ncols();
        let total = run.n_samples_total as f64;
        LatentData {
            states: run.curr.clone(),
            next: run.next.clone(),
            times: (0..m).map(|i| (run.t0 + i) as f64 * horizon / total).collect(),
            dt: horizon / total,
        }
    }

    pub fn len(&self) -> usize {
        self.states.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.states.ncols() == 0
    }

    /// Pooled standard deviation of all latent entries.
    pub fn pooled_std(&self) -> f64 {
        let m = self.states.len() as f64;
        let mean = self.states.iter().sum::<f64>() / m;
        (self.states.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m).sqrt()
    }

    /// Mean and principal axes (scaled by the component stds) of the
    /// latent states: the empirical Gaussian of the data.
    pub fn empirical_gaussian(&self) -> (DVector<f64>, DMatrix<f64>) {
        let (d, m) = (self.states.nrows(), self.states.ncols() as f64);
        let mean = DVector::from_fn(d, |i, _| self.states.row(i).sum() / m);
        let mut cov = DMatrix::zeros(d, d);
        for c in 0..self.states.ncols() {
            let centered = self.states.column(c) - &mean;
            cov.syger(1.0 / m, &centered, &centered, 1.0);
        }
        // syger fills the lower triangle; mirror it.
        for i in 0..d {
            for j in (i + 1)..d {
                cov[(i, j)] = cov[(j, i)];
            }
        }
        let eig = cov.symmetric_eigen();
        let mut axes = eig.eigenvectors;
        for (j, lam) in eig.eigenvalues.iter().enumerate() {
            let scale = lam.max(0.0).sqrt();
            for i in 0..d {
                axes[(i, j)] *= scale;
            }
        }
        (mean, axes)
    }
}

/// Precomputed operators shared by every loss evaluation.
pub struct HjbOps<'a> {
    pub drift: DMatrix<f64>,
    pub b_ctrl: DMatrix<f64>,
    /// R^{-1} B^T, the feedback map up to -1/(2 gamma).
    pub r_inv_bt: DMatrix<f64>,
    /// B R^{-1} B^T.
    pub m: DMatrix<f64>,
    /// Per-dimension 1/2 sigma_i^2 weights of the diffusion trace.
    pub sigma2_half: Vec<f64>,
    pub gamma: f64,
    pub horizon: f64,
    pub cost_kind: StateCostKind,
    /// Feature scale s: the nets see [z / s; t] and the generator's raw
    /// output is multiplied by s.
    pub z_scale: f64,
    /// Output scale of the value net: phi = value_scale * N([z/s; t]).
    pub value_scale: f64,
    pub model: &'a KoopmanModel,
    pub graph: &'a BrainGraph,
}

impl<'a> HjbOps<'a> {
    pub fn new(model: &'a KoopmanModel, graph: &'a BrainGraph, config: &MfgConfig) -> Result<Self> {
        config.validate()?;
        let d = model.n_res();
        if graph.n() != model.n_channels {
            return Err(Error::Data(format!(
                "graph n={} vs model channels {}",
                graph.n(),
                model.n_channels
            )));
        }
        let k = model.actuated.len();
        let mut b_ctrl = DMatrix::zeros(d, k.max(1));
        for (col, &node) in model.actuated.iter().enumerate() {
            b_ctrl.set_column(col, &model.b_latent.column(node));
        }
        if k == 0 {
            // No actuators: keep a zero column so the shapes stay valid.
            b_ctrl = DMatrix::zeros(d, 1);
        }
        let k_eff = b_ctrl.ncols();
        let r = match &config.r_weight {
            Some(mj) => {
                let m = mj.to_matrix()?;
                if m.nrows() != k_eff || m.ncols() != k_eff {
                    return Err(Error::Config(format!(
                        "R is {}x{}, expected {k_eff}x{k_eff}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                m
            }
            None => DMatrix::identity(k_eff, k_eff),
        };
        let chol: Cholesky<f64, Dyn> = Cholesky::new(r)
            .ok_or_else(|| Error::Config("R must be symmetric positive definite".to_string()))?;
        let r_inv_bt = chol.solve(&b_ctrl.transpose());
        let m = &b_ctrl * &r_inv_bt;

        let sigma: Vec<f64> = match config.sigma_override {
            Some(s) => vec![s; d],
            None => model.sigma_latent.iter().map(|s| s * config.sigma_scale).collect(),
        };
        let sigma2_half = sigma.iter().map(|s| 0.5 * s * s).collect();

        let mut drift = model.k.clone();
        for i in 0..d {
            drift[(i, i)] -= 1.0;
        }

        Ok(HjbOps {
            drift,
            b_ctrl,
            r_inv_bt,
            m,
            sigma2_half,
            gamma: config.gamma,
            horizon: config.horizon,
            cost_kind: config.cost_kind,
            z_scale: config.latent_scale.unwrap_or(1.0),
            value_scale: config.value_scale.unwrap_or(1.0),
            model,
            graph,
        })
    }

    pub fn d(&self) -> usize {
        self.drift.nrows()
    }

    /// Network input [z / s; t].
    pub fn net_input(&self, z: &[f64], t: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(z.len() + 1);
        out.extend(z.iter().map(|v| v / self.z_scale));
        out.push(t);
        out
    }

    /// grad_z phi from the net's input gradient.
    fn costate_from_net_grad(&self, g: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.d(), |i, _| g[i] * self.value_scale / self.z_scale)
    }

    pub fn k_ctrl(&self) -> usize {
        self.b_ctrl.ncols()
    }

    /// Analytic Hamiltonian H(z, p).
    pub fn hamiltonian(&self, z: &DVector<f64>, p: &DVector<f64>) -> f64 {
        let drift_term = p.dot(&(&self.drift * z));
        let quad = p.dot(&(&self.m * p));
        drift_term - quad / (4.0 * self.gamma)
    }

    /// dH/dp = (K - I) z - 1/(2 gamma) M p.
    pub fn hamiltonian_dp(&self, z: &DVector<f64>, p: &DVector<f64>) -> DVector<f64> {
        &self.drift * z - (&self.m * p) / (2.0 * self.gamma)
    }

    /// The control benefit q(p) = 1/(4 gamma) p^T M p and its gradient.
    pub fn control_benefit(&self, p: &DVector<f64>) -> f64 {
        p.dot(&(&self.m * p)) / (4.0 * self.gamma)
    }

    fn control_benefit_dp(&self, p: &DVector<f64>) -> DVector<f64> {
        (&self.m * p) / (2.0 * self.gamma)
    }

    /// Closed-form minimizer of gamma u^T R u + p^T B u.
    pub fn control_from_costate(&self, p: &DVector<f64>) -> DVector<f64> {
        -(&self.r_inv_bt * p) / (2.0 * self.gamma)
    }

    /// Graph state cost of the physical projection of z.
    pub fn state_cost(&self, z: &DVector<f64>) -> Result<f64> {
        let x = self.model.readout(z);
        self.graph.state_cost_with(x.as_slice(), self.cost_kind)
    }

    /// Gradient of the state cost with respect to z.
    pub fn state_cost_grad_z(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let x = self.model.readout(z);
        let gx = self.graph.state_cost_grad(x.as_slice(), self.cost_kind)?;
        Ok(self.model.w_out.transpose() * DVector::from_column_slice(&gx))
    }
}

/// Analytic Hamiltonian of the latent control problem.
pub fn hamiltonian(
    z: &DVector<f64>,
    p: &DVector<f64>,
    model: &KoopmanModel,
    graph: &BrainGraph,
    config: &MfgConfig,
) -> Result<f64> {
    let ops = HjbOps::new(model, graph, config)?;
    if z.len() != ops.d() || p.len() != ops.d() {
        return Err(Error::Data("hamiltonian: dimension mismatch".to_string()));
    }
    Ok(ops.hamiltonian(z, p))
}

/// Closed-form feedback law at normalized time t.
pub fn optimal_control(policy: &MfgPolicy, graph: &BrainGraph, z: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    let ops = HjbOps::new(&policy.model, graph, &policy.config)?;
    let p = costate(&policy.value_net, &ops, z, t)?;
    Ok(ops.control_from_costate(&p))
}

/// grad_z phi at (z, t).
fn costate(value_net: &DiffMlp, ops: &HjbOps, z: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    let g = value_net.grad_input(&ops.net_input(z.as_slice(), t))?;
    Ok(ops.costate_from_net_grad(&g))
}

/// Diffusion-trace probes for one sample: either the weighted coordinate
/// sweep (exact) or scaled Rademacher probes. Each probe is a direction in
/// the stacked [z; t] input with zero time component, plus its weight.
fn trace_probes(
    sigma2_half: &[f64],
    d: usize,
    hutchinson: usize,
    probe_seed: u64,
) -> Vec<(Vec<f64>, f64)> {
    if hutchinson == 0 {
        sigma2_half
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, c)| {
                let mut v = vec![0.0; d + 1];
                v[i] = 1.0;
                (v, *c)
            })
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(probe_seed);
        let weight = 1.0 / hutchinson as f64;
        (0..hutchinson)
            .map(|_| {
                let mut v = vec![0.0; d + 1];
                for i in 0..d {
                    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    v[i] = sign * sigma2_half[i].sqrt();
                }
                (v, weight)
            })
            .collect()
    }
}

/// Per-sample HJB residual and, optionally, its gradient with respect to
/// the value-net parameters.
fn hjb_residual_sample(
    value_net: &DiffMlp,
    ops: &HjbOps,
    z: &DVector<f64>,
    t: f64,
    hutchinson: usize,
    probe_seed: u64,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    let d = ops.d();
    let s = ops.net_input(z.as_slice(), t);
    let (_, g) = value_net.value_and_grad_input(&s)?;
    let p = ops.costate_from_net_grad(&g);
    let g_t = g[d] * ops.value_scale;

    // Trace weights in net coordinates: Hess_z phi = (vs/s^2) Hess_input N.
    let s2 = ops.z_scale * ops.z_scale;
    let eff_weights: Vec<f64> = ops
        .sigma2_half
        .iter()
        .map(|c| c * ops.value_scale / s2)
        .collect();
    let probes = trace_probes(&eff_weights, d, hutchinson, probe_seed);
    let mut trace_term = 0.0;
    let mut trace_grad: Option<Vec<f64>> = None;
    for (v, w) in &probes {
        if want_grad {
            let pack = value_net.grad_params_of_directional_second(&s, v)?;
            trace_term += w * pack.quadratic;
            match trace_grad.as_mut() {
                Some(acc) => {
                    for (a, gq) in acc.iter_mut().zip(&pack.param_grad_quadratic) {
                        *a += w * gq;
                    }
                }
                None => {
                    trace_grad =
                        Some(pack.param_grad_quadratic.iter().map(|gq| w * gq).collect());
                }
            }
        } else {
            trace_term += w * value_net.directional_second(&s, v)?;
        }
    }

    let cost = ops.state_cost(z)?;
    let ham = ops.hamiltonian(z, &p);
    let residual = g_t + trace_term + cost + ham;

    if !want_grad {
        return Ok((residual, None));
    }

    // d(residual)/d(net gradient): dH/dp scaled into net coordinates in
    // the z block, 1 in the t slot, both times the output scale.
    let dp = ops.hamiltonian_dp(z, &p);
    let mut w_dir = vec![0.0; d + 1];
    for i in 0..d {
        w_dir[i] = dp[i] * ops.value_scale / ops.z_scale;
    }
    w_dir[d] = ops.value_scale;
    let pack = value_net.grad_params_of_directional_grad(&s, &w_dir)?;

    let mut grad = pack.param_grad_dir;
    if let Some(tg) = trace_grad {
        for (a, b) in grad.iter_mut().zip(&tg) {
            *a += b;
        }
    }
    for gi in grad.iter_mut() {
        *gi *= 2.0 * residual;
    }
    Ok((residual, Some(grad)))
}

/// Mean squared HJB residual over a batch of (z, t) samples.
pub fn hjb_residual_loss(
    batch: &[(DVector<f64>, f64)],
    value_net: &DiffMlp,
    model: &KoopmanModel,
    graph: &BrainGraph,
    config: &MfgConfig,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Data("hjb residual loss over an empty batch".to_string()));
    }
    let ops = HjbOps::new(model, graph, config)?;
    let mut total = 0.0;
    for (idx, (z, t)) in batch.iter().enumerate() {
        let probe_seed = config.seed ^ (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let (r, _) =
            hjb_residual_sample(value_net, &ops, z, *t, config.hutchinson_probes, probe_seed, false)?;
        if !r.is_finite() {
            return Err(Error::Numeric(format!("non-finite HJB residual at sample {idx}")));
        }
        total += r * r;
    }
    Ok(total / batch.len() as f64)
}

/// Mean-loss gradient of the interior residual with respect to the value
/// parameters, via the same per-sample assembly the training loop uses.
pub fn hjb_residual_loss_grad(
    batch: &[(DVector<f64>, f64)],
    value_net: &DiffMlp,
    model: &KoopmanModel,
    graph: &BrainGraph,
    config: &MfgConfig,
) -> Result<Vec<f64>> {
    let ops = HjbOps::new(model, graph, config)?;
    let mut grad = vec![0.0; value_net.param_count()];
    for (idx, (z, t)) in batch.iter().enumerate() {
        let probe_seed = config.seed ^ (idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let (_, g) =
            hjb_residual_sample(value_net, &ops, z, *t, config.hutchinson_probes, probe_seed, true)?;
        for (a, b) in grad.iter_mut().zip(&g.unwrap()) {
            *a += b / batch.len() as f64;
        }
    }
    Ok(grad)
}

/// Mean-loss gradient of the empirical Bellman residual (spec scaling,
/// without the training loop's rate normalization).
pub fn empirical_hjb_loss_grad(
    pairs: &[(DVector<f64>, DVector<f64>, f64)],
    dt: f64,
    value_net: &DiffMlp,
    model: &KoopmanModel,
    graph: &BrainGraph,
    config: &MfgConfig,
) -> Result<Vec<f64>> {
    let ops = HjbOps::new(model, graph, config)?;
    let mut grad = vec![0.0; value_net.param_count()];
    for (r, r_next, t) in pairs {
        let (_, g) = empirical_residual_sample(value_net, &ops, r, r_next, *t, dt, true)?;
        for (a, b) in grad.iter_mut().zip(&g.unwrap()) {
            *a += b / pairs.len() as f64;
        }
    }
    Ok(grad)
}

/// Mean-loss gradient of the generator objective with respect to the
/// generator parameters.
pub fn generator_loss_grad(
    batch: &[(DVector<f64>, f64)],
    value_net: &DiffMlp,
    generator_net: &DiffMlp,
    model: &KoopmanModel,
    graph: &BrainGraph,
    config: &MfgConfig,
) -> Result<Vec<f64>> {
    let ops = HjbOps::new(model, graph, config)?;
    let mut grad = vec![0.0; generator_net.param_count()];
    for (z0, t) in batch {
        let (_, g) = generator_sample(value_net, generator_net, &ops, z0, *t, true)?;
        for (a, b) in grad.iter_mut().zip(&g.unwrap()) {
            *a += b / batch.len() as f64;
        }
    }
    Ok(grad)
}

/// Discrete empirical Bellman residual on real latent pairs:
/// mean |phi(r', t + dt) - phi(r, t) + (C(r) - q(p)) dt|^2 with the control
/// benefit q(p) = 1/(4 gamma) p^T M p. Along uncontrolled transitions the
/// drift term of the expansion of phi(r') - phi(r) already carries
/// grad . (K - I) r, so only the cost and the control benefit remain; the
/// expectation vanishes under the true value function as dt -> 0.
pub fn empirical_hjb_loss(
    pairs: &[(DVector<f64>, DVector<f64>, f64)],
    dt: f64,
    value_net: &DiffMlp,
    model: &KoopmanModel,
    graph: &BrainGraph,
    config: &MfgConfig,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Data("empirical loss over an empty batch".to_string()));
    }
    let ops = HjbOps::new(model, graph, config)?;
    let mut total = 0.0;
    for (r, r_next, t) in pairs {
        let (res, _) = empirical_residual_sample(value_net, &ops, r, r_next, *t, dt, false)?;
        total += res * res;
    }
    Ok(total / pairs.len() as f64)
}

fn empirical_residual_sample(
    value_net: &DiffMlp,
    ops: &HjbOps,
    r: &DVector<f64>,
    r_next: &DVector<f64>,
    t: f64,
    dt: f64,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    let d = ops.d();
    let s1 = ops.net_input(r.as_slice(), t);
    let s2 = ops.net_input(r_next.as_slice(), t + dt);

    let (phi1_raw, g1) = value_net.value_and_grad_input(&s1)?;
    let p1 = ops.costate_from_net_grad(&g1);
    let cost = ops.state_cost(r)?;
    let benefit = ops.control_benefit(&p1);
    let phi2 = value_net.forward_scalar(&s2)? * ops.value_scale;
    let phi1 = phi1_raw * ops.value_scale;
    let residual = phi2 - phi1 + (cost - benefit) * dt;

    if !want_grad {
        return Ok((residual, None));
    }

    // d(residual)/d(params) = dphi2 - dphi1 - dt * dq/dp . d(p1)/d(params).
    let dq = ops.control_benefit_dp(&p1);
    let mut w_dir = vec![0.0; d + 1];
    for i in 0..d {
        w_dir[i] = -dt * dq[i] * ops.value_scale / ops.z_scale;
    }
    let pack1 = value_net.grad_params_of_directional_grad(&s1, &w_dir)?;
    let (_, pg2) = value_net.value_and_grad_params(&s2)?;

    let vs = ops.value_scale;
    let mut grad: Vec<f64> = pg2
        .iter()
        .zip(&pack1.param_grad_value)
        .zip(&pack1.param_grad_dir)
        .map(|((a, b), c)| vs * (a - b) + c)
        .collect();
    for g in grad.iter_mut() {
        *g *= 2.0 * residual;
    }
    Ok((residual, Some(grad)))
}

/// Control-variate rate form of the Bellman anchor used in training: the
/// identifiable transition-noise component p^T (r' - r - (K-I) r dt) is
/// subtracted from phi' - phi before dividing by dt, so the residual's
/// expectation AND noise both vanish at the true value function:
///
/// ```text
/// r_tilde = (phi(r',t+dt) - phi(r,t) - p^T w_cv) / dt + C(r) - q(p),
/// w_cv    = r' - r - (K - I) r dt
/// ```
///
/// which converges to the interior HJB residual along the data.
fn empirical_anchor_sample(
    value_net: &DiffMlp,
    ops: &HjbOps,
    r: &DVector<f64>,
    r_next: &DVector<f64>,
    t: f64,
    dt: f64,
) -> Result<(f64, Vec<f64>)> {
    let d = ops.d();
    let s1 = ops.net_input(r.as_slice(), t);
    let s2 = ops.net_input(r_next.as_slice(), t + dt);
    let vs = ops.value_scale;

    let (n1, g1) = value_net.value_and_grad_input(&s1)?;
    let p1 = ops.costate_from_net_grad(&g1);
    let cost = ops.state_cost(r)?;
    let benefit = ops.control_benefit(&p1);
    let n2 = value_net.forward_scalar(&s2)?;

    let w_cv = r_next - r - (&ops.drift * r) * dt;
    let rate_res = (vs * (n2 - n1) - p1.dot(&w_cv)) / dt + cost - benefit;

    // d(rate_res)/d(net gradient at s1): -(w_cv / dt + dq) in costate
    // coordinates, mapped through vs / s.
    let dq = ops.control_benefit_dp(&p1);
    let mut w_dir = vec![0.0; d + 1];
    for i in 0..d {
        w_dir[i] = -(w_cv[i] / dt + dq[i]) * vs / ops.z_scale;
    }
    let pack1 = value_net.grad_params_of_directional_grad(&s1, &w_dir)?;
    let (_, pg2) = value_net.value_and_grad_params(&s2)?;

    let scale = 2.0 * rate_res;
    let grad: Vec<f64> = pg2
        .iter()
        .zip(&pack1.param_grad_value)
        .zip(&pack1.param_grad_dir)
        .map(|((a, b), c)| scale * (vs * (a - b) / dt + c))
        .collect();
    Ok((rate_res * rate_res, grad))
}

/// Generator objective: mean of d_t phi + H + C_state at z_t = G(z_0, t).
pub fn generator_loss(
    batch: &[(DVector<f64>, f64)],
    value_net: &DiffMlp,
    generator_net: &DiffMlp,
    model: &KoopmanModel,
    graph: &BrainGraph,
    config: &MfgConfig,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Data("generator loss over an empty batch".to_string()));
    }
    let ops = HjbOps::new(model, graph, config)?;
    let mut total = 0.0;
    for (z0, t) in batch {
        let (value, _) = generator_sample(value_net, generator_net, &ops, z0, *t, false)?;
        total += value;
    }
    Ok(total / batch.len() as f64)
}

/// Per-sample generator integrand and, optionally, its gradient with
/// respect to the generator parameters.
fn generator_sample(
    value_net: &DiffMlp,
    generator_net: &DiffMlp,
    ops: &HjbOps,
    z0: &DVector<f64>,
    t: f64,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    let d = ops.d();
    let s0 = ops.net_input(z0.as_slice(), t);
    let raw = generator_net.forward(&s0)?;
    // Residual pushforward: the generator perturbs its input, so the
    // initial density starts on the latent data manifold.
    let zv = DVector::from_fn(d, |i, _| z0[i] + raw[i] * ops.z_scale);
    let s = ops.net_input(zv.as_slice(), t);

    let (_, g) = value_net.value_and_grad_input(&s)?;
    let p = ops.costate_from_net_grad(&g);
    let g_t = g[d] * ops.value_scale;
    let cost = ops.state_cost(&zv)?;
    let ham = ops.hamiltonian(&zv, &p);
    let value = g_t + ham + cost;

    if !want_grad {
        return Ok((value, None));
    }

    // d(value)/dz = Hess(phi) . u_ext (z rows) + dH/dz|_p + dC/dz, where
    // u_ext carries dH/dp in the z block and 1 in the t slot; both the
    // direction and the resulting rows convert through the feature scale,
    // and the generator's output scale multiplies the cotangent.
    let dp = ops.hamiltonian_dp(&zv, &p);
    let mut u_ext = vec![0.0; d + 1];
    for i in 0..d {
        u_ext[i] = dp[i] / ops.z_scale;
    }
    u_ext[d] = 1.0;
    let (_, hvp) = value_net.hvp_input(&s, &u_ext)?;
    let direct = ops.drift.transpose() * &p + ops.state_cost_grad_z(&zv)?;
    let cot: Vec<f64> = (0..d)
        .map(|i| (hvp[i] * ops.value_scale / ops.z_scale + direct[i]) * ops.z_scale)
        .collect();
    let (pg, _) = generator_net.vjp(&s0, &cot)?;
    Ok((value, Some(pg)))
}

/// One training iteration's batch: stacked initial states and times.
struct Batch {
    z0: Vec<DVector<f64>>,
    t: Vec<f64>,
    /// Indices into the latent pairs for the empirical anchor.
    real_idx: Vec<usize>,
}

/// Gaussian prior for initial states: either isotropic with a forced
/// scale, or the empirical (mean, covariance) Gaussian of the latent data.
enum Prior {
    Isotropic(f64),
    Empirical { mean: DVector<f64>, axes: DMatrix<f64> },
}

impl Prior {
    fn sample(&self, d: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let xi = DVector::from_fn(d, |_, _| {
            let g: f64 = StandardNormal.sample(rng);
            g
        });
        match self {
            Prior::Isotropic(s) => xi * *s,
            Prior::Empirical { mean, axes } => mean + axes * xi,
        }
    }
}

fn draw_batch(
    rng: &mut ChaCha8Rng,
    latent: &LatentData,
    config: &MfgConfig,
    d: usize,
    prior: &Prior,
) -> Batch {
    let mut z0 = Vec::with_capacity(config.batch_size);
    let mut t = Vec::with_capacity(config.batch_size);
    let mut real_idx = Vec::with_capacity(config.batch_size);
    for _ in 0..config.batch_size {
        let from_real = rng.random::<f64>() < config.p_real && latent.len() > 0;
        if from_real {
            let col = rng.random_range(0..latent.len());
            z0.push(latent.states.column(col).into_owned());
        } else {
            z0.push(prior.sample(d, rng));
        }
        t.push(rng.random::<f64>() * config.horizon);
        real_idx.push(rng.random_range(0..latent.len()));
    }
    Batch { z0, t, real_idx }
}

/// Alternating adversarial training of the value and generator networks.
pub fn train(
    model: &KoopmanModel,
    graph: &BrainGraph,
    latent: &LatentData,
    config: &MfgConfig,
) -> Result<MfgPolicy> {
    config.validate()?;
    if latent.is_empty() {
        return Err(Error::Data("training needs latent transition data".to_string()));
    }
    let d = model.n_res();
    if latent.states.nrows() != d {
        return Err(Error::Data(format!(
            "latent data dim {} vs model n_res {d}",
            latent.states.nrows()
        )));
    }
    // Gaussian prior: covariance-matched to the latent data unless an
    // isotropic scale is forced through the config.
    let prior = match config.gaussian_scale {
        Some(s) => Prior::Isotropic(s),
        None => {
            let (mean, axes) = latent.empirical_gaussian();
            Prior::Empirical { mean, axes }
        }
    };
    let mut config = config.clone();
    if config.latent_scale.is_none() {
        config.latent_scale = Some(latent.pooled_std().max(1e-9));
    }
    if config.value_scale.is_none() {
        // Calibrate the value output to the running cost over the horizon.
        let probe_ops = HjbOps::new(model, graph, &config)?;
        let cols = latent.len().min(256);
        let mut mean_cost = 0.0;
        for c in 0..cols {
            mean_cost += probe_ops.state_cost(&latent.states.column(c).into_owned())?;
        }
        mean_cost /= cols.max(1) as f64;
        config.value_scale = Some((mean_cost * config.horizon).max(1.0));
    }
    let config = &config;
    let ops = HjbOps::new(model, graph, config)?;

    let mut phi_dims = vec![d + 1];
    phi_dims.extend_from_slice(&config.hidden_phi);
    phi_dims.push(1);
    let mut gen_dims = vec![d + 1];
    gen_dims.extend_from_slice(&config.hidden_gen);
    gen_dims.push(d);
    let mut value_net = DiffMlp::new(&phi_dims, config.seed ^ 0x5601_55a1)?;
    let mut generator_net = DiffMlp::new(&gen_dims, config.seed ^ 0x9e01_77f3)?;
    // Zeroed output layers: phi starts as the zero function and the
    // pushforward as the identity, so the first residuals sit at the
    // data's own cost scale.
    value_net.zero_last_layer();
    generator_net.zero_last_layer();

    let mut adam_phi = AdamState::new(value_net.param_count(), config.lr_phi);
    let mut adam_gen = AdamState::new(generator_net.param_count(), config.lr_gen);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut loss_phi_hist = Vec::with_capacity(config.n_iter);
    let mut loss_gen_hist = Vec::with_capacity(config.n_iter);

    for iter in 0..config.n_iter {
        let batch = draw_batch(&mut rng, latent, config, d, &prior);
        let probe_base = config
            .seed
            .wrapping_add((iter as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));

        // Generator pushforward of the sampled initial states (fixed
        // during the phi update).
        let z_t: Vec<DVector<f64>> = batch
            .z0
            .par_iter()
            .zip(batch.t.par_iter())
            .map(|(z0, t)| {
                let raw = generator_net.forward(&ops.net_input(z0.as_slice(), *t))?;
                Ok(DVector::from_fn(d, |i, _| z0[i] + raw[i] * ops.z_scale))
            })
            .collect::<Result<_>>()?;

        // --- phi update -------------------------------------------------
        // Interior residual at the generator pushforwards and at the raw
        // initial samples: the union keeps the collocation support covering
        // the sampling prior even while the generator explores.
        let n_push = batch.z0.len();
        let hjb: Vec<(f64, Vec<f64>)> = (0..2 * n_push)
            .into_par_iter()
            .map(|i| {
                let (z, t) = if i < n_push {
                    (&z_t[i], batch.t[i])
                } else {
                    (&batch.z0[i - n_push], batch.t[i - n_push])
                };
                let probe_seed = probe_base ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                let (r, g) = hjb_residual_sample(
                    &value_net,
                    &ops,
                    z,
                    t,
                    config.hutchinson_probes,
                    probe_seed,
                    true,
                )?;
                Ok((r, g.unwrap()))
            })
            .collect::<Result<_>>()?;

        // Rate-normalized, variance-corrected Bellman anchor on real
        // transitions; see `empirical_anchor_sample`.
        let emp: Vec<(f64, Vec<f64>)> = if config.lambda_real > 0.0 {
            batch
                .real_idx
                .par_iter()
                .map(|&col| {
                    let r = latent.states.column(col).into_owned();
                    let rn = latent.next.column(col).into_owned();
                    empirical_anchor_sample(&value_net, &ops, &r, &rn, latent.times[col], latent.dt)
                })
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };

        // Terminal condition on both the pushforwards and the raw prior
        // samples, so the horizon constraint covers the state space even
        // if the generator concentrates.
        let term: Vec<(f64, Vec<f64>)> = if config.terminal_weight > 0.0 {
            z_t.par_iter()
                .chain(batch.z0.par_iter())
                .map(|z| {
                    let s = ops.net_input(z.as_slice(), config.horizon);
                    let (phi_raw, pg) = value_net.value_and_grad_params(&s)?;
                    let target = config.terminal_q.map_or(0.0, |q| q * z.norm_squared());
                    let res = phi_raw * ops.value_scale - target;
                    let grad: Vec<f64> =
                        pg.iter().map(|g| 2.0 * res * g * ops.value_scale).collect();
                    Ok((res, grad))
                })
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };

        let n_batch = batch.z0.len() as f64;
        let n_hjb = hjb.len() as f64;
        let mut phi_grad = vec![0.0; value_net.param_count()];
        let mut phi_loss = 0.0;
        for (r, g) in &hjb {
            phi_loss += r * r / n_hjb;
            for (a, b) in phi_grad.iter_mut().zip(g) {
                *a += b / n_hjb;
            }
        }
        if !emp.is_empty() {
            let n_emp = emp.len() as f64;
            for (l, g) in &emp {
                phi_loss += config.lambda_real * l / n_emp;
                for (a, b) in phi_grad.iter_mut().zip(g) {
                    *a += config.lambda_real * b / n_emp;
                }
            }
        }
        if !term.is_empty() {
            let n_term = term.len() as f64;
            for (r, g) in &term {
                phi_loss += config.terminal_weight * r * r / n_term;
                for (a, b) in phi_grad.iter_mut().zip(g) {
                    *a += config.terminal_weight * b / n_term;
                }
            }
        }

        if !phi_loss.is_finite() || phi_loss > 1e8 {
            return Err(Error::Numeric(format!(
                "value loss diverged at iteration {iter}: {phi_loss}"
            )));
        }

        let mut phi_params = value_net.params_flat();
        adam_step(&mut phi_params, &phi_grad, &mut adam_phi)?;
        value_net.set_params_flat(&phi_params)?;

        // --- generator update -------------------------------------------
        let gen: Vec<(f64, Vec<f64>)> = (0..batch.z0.len())
            .into_par_iter()
            .map(|i| {
                let (v, g) =
                    generator_sample(&value_net, &generator_net, &ops, &batch.z0[i], batch.t[i], true)?;
                Ok((v, g.unwrap()))
            })
            .collect::<Result<_>>()?;
        let mut gen_grad = vec![0.0; generator_net.param_count()];
        let mut gen_loss = 0.0;
        for (v, g) in &gen {
            gen_loss += v / n_batch;
            for (a, b) in gen_grad.iter_mut().zip(g) {
                *a += b / n_batch;
            }
        }
        if !gen_loss.is_finite() || gen_loss.abs() > 1e8 {
            return Err(Error::Numeric(format!(
                "generator loss diverged at iteration {iter}: {gen_loss}"
            )));
        }
        let mut gen_params = generator_net.params_flat();
        adam_step(&mut gen_params, &gen_grad, &mut adam_gen)?;
        generator_net.set_params_flat(&gen_params)?;

        loss_phi_hist.push(phi_loss);
        loss_gen_hist.push(gen_loss);
        adam_phi.lr *= config.lr_decay;
        adam_gen.lr *= config.lr_decay;
    }

    value_net.assert_finite()?;
    generator_net.assert_finite()?;
    Ok(MfgPolicy {
        value_net,
        generator_net,
        model: model.clone(),
        config: config.clone(),
        loss_phi: loss_phi_hist,
        loss_gen: loss_gen_hist,
    })
}

/// Shared noise path so paired rollouts see identical disturbances.
pub fn noise_path(d: usize, steps: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(d, steps, |_, _| StandardNormal.sample(&mut rng))
}

/// Euler-Maruyama closed-loop rollout in latent space, one sample per unit
/// time so the uncontrolled drift replays the fitted surrogate
/// z' = K z + Sigma xi. The controlled and reference paths share the noise
/// realization. `healthy_ref` supplies the pooled healthy amplitude samples
/// for the W1 metrics.
pub fn rollout(
    policy: &MfgPolicy,
    graph: &BrainGraph,
    z0: &DVector<f64>,
    steps: usize,
    mode: RolloutMode,
    noise_seed: u64,
    healthy_ref: &[f64],
) -> Result<ControlRun> {
    if steps == 0 {
        return Err(Error::Data("rollout needs steps >= 1".to_string()));
    }
    let ops = HjbOps::new(&policy.model, graph, &policy.config)?;
    let d = ops.d();
    if z0.len() != d {
        return Err(Error::Data(format!("rollout z0 dim {} vs n_res {d}", z0.len())));
    }
    let k = ops.k_ctrl();
    let noise = noise_path(d, steps, noise_seed);
    let sigma: Vec<f64> = ops.sigma2_half.iter().map(|c| (2.0 * c).sqrt()).collect();

    let n = policy.model.n_channels;
    let mut latent = DMatrix::zeros(d, steps + 1);
    let mut physical = DMatrix::zeros(n, steps + 1);
    let mut uncontrolled_physical = DMatrix::zeros(n, steps + 1);
    let mut controls = DMatrix::zeros(k, steps);

    let mut z = z0.clone();
    let mut z_ref = z0.clone();
    latent.set_column(0, &z);
    physical.set_column(0, &policy.model.readout(&z));
    uncontrolled_physical.set_column(0, &policy.model.readout(&z_ref));

    for step in 0..steps {
        let t_norm = step as f64 / steps as f64 * policy.config.horizon;
        let u = match mode {
            RolloutMode::Controlled => {
                let p = costate(&policy.value_net, &ops, &z, t_norm)?;
                ops.control_from_costate(&p)
            }
            RolloutMode::Uncontrolled => DVector::zeros(k),
        };
        controls.set_column(step, &u);

        let mut drift = &ops.drift * &z + &ops.b_ctrl * &u;
        for i in 0..d {
            drift[i] += sigma[i] * noise[(i, step)];
        }
        z += drift;

        let mut drift_ref = &ops.drift * &z_ref;
        for i in 0..d {
            drift_ref[i] += sigma[i] * noise[(i, step)];
        }
        z_ref += drift_ref;

        if z.iter().any(|v| !v.is_finite()) || z_ref.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("rollout diverged at step {step}")));
        }
        latent.set_column(step + 1, &z);
        physical.set_column(step + 1, &policy.model.readout(&z));
        uncontrolled_physical.set_column(step + 1, &policy.model.readout(&z_ref));
    }

    let ctrl_samples: Vec<f64> = physical.iter().cloned().collect();
    let ref_samples: Vec<f64> = uncontrolled_physical.iter().cloned().collect();
    let var = |xs: &[f64]| crate::linalg::variance(xs);
    let var_ref = var(&ref_samples);

    let u_all: Vec<f64> = controls.iter().cloned().collect();
    let mut tv = 0.0;
    if steps > 1 {
        for i in 0..k {
            for s in 0..steps - 1 {
                tv += (controls[(i, s + 1)] - controls[(i, s)]).abs();
            }
        }
        tv /= (k * (steps - 1)) as f64;
    }

    let metrics = ControlMetrics {
        w1_vs_healthy_controlled: wasserstein_1d(&ctrl_samples, healthy_ref)?,
        w1_vs_healthy_uncontrolled: wasserstein_1d(&ref_samples, healthy_ref)?,
        amplitude_variance_ratio: if var_ref > 0.0 { var(&ctrl_samples) / var_ref } else { 1.0 },
        control_total_variation: tv,
        control_std: var(&u_all).sqrt(),
    };

    Ok(ControlRun {
        latent,
        physical,
        controls,
        uncontrolled_physical,
        metrics,
    })
}

/// Serialized network: layer dims plus the flat parameter vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetJson {
    pub layer_dims: Vec<usize>,
    pub params: Vec<f64>,
}

impl NetJson {
    pub fn from_net(net: &DiffMlp) -> Self {
        NetJson {
            layer_dims: net.layer_dims().to_vec(),
            params: net.params_flat(),
        }
    }

    pub fn to_net(&self) -> Result<DiffMlp> {
        let mut net = DiffMlp::new(&self.layer_dims, 0)?;
        net.set_params_flat(&self.params)?;
        Ok(net)
    }
}

/// Serialized policy artifact (policy.json), with the surrogate inlined so
/// the policy is self-contained.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MfgPolicyJson {
    pub kind: String,
    pub schema_version: u32,
    pub config: MfgConfig,
    pub value_net: NetJson,
    pub generator_net: NetJson,
    pub model: crate::koopman::KoopmanModelJson,
    pub graph: crate::connectivity::GraphJson,
    pub loss_phi: Vec<f64>,
    pub loss_gen: Vec<f64>,
}

impl MfgPolicyJson {
    pub fn from_policy(policy: &MfgPolicy, graph: &BrainGraph) -> Self {
        MfgPolicyJson {
            kind: "mfg_policy".to_string(),
            schema_version: 1,
            config: policy.config.clone(),
            value_net: NetJson::from_net(&policy.value_net),
            generator_net: NetJson::from_net(&policy.generator_net),
            model: crate::koopman::KoopmanModelJson::from_model(&policy.model, graph, false),
            graph: crate::connectivity::GraphJson::from_graph(graph),
            loss_phi: policy.loss_phi.clone(),
            loss_gen: policy.loss_gen.clone(),
        }
    }

    pub fn to_graph(&self) -> Result<BrainGraph> {
        self.graph.to_graph()
    }

    pub fn to_policy(&self) -> Result<MfgPolicy> {
        Ok(MfgPolicy {
            value_net: self.value_net.to_net()?,
            generator_net: self.generator_net.to_net()?,
            model: self.model.to_model()?,
            config: self.config.clone(),
            loss_phi: self.loss_phi.clone(),
            loss_gen: self.loss_gen.clone(),
        })
    }
}
