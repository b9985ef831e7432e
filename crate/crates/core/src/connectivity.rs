//! Functional graph construction from multichannel signals: analytic-signal
//! instantaneous phase, phase-locking-value adjacency, thresholding, degree
//! and Laplacian matrices, and the graph-regularized state cost.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, MatrixJson};
use crate::synthgen::SignalMatrix;

/// How the full PLV matrix is pruned to an adjacency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "value")]
pub enum ThresholdMode {
    /// Keep weights strictly above a fixed cutoff in [0, 1).
    Absolute(f64),
    /// Keep the off-diagonal weights strictly above the p-th percentile,
    /// p in (0, 100).
    Percentile(f64),
}

/// Which algebraic form the graph state cost takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StateCostKind {
    /// `||(I+L)x||^2`, the squared-operator form. Always nonnegative.
    #[default]
    SquaredOperator,
    /// `x^T (I+L) x`, the plain quadratic form, kept for ablation.
    QuadraticForm,
}

/// Functional connectivity graph: adjacency, degree, Laplacian.
#[derive(Debug, Clone)]
pub struct BrainGraph {
    adjacency: DMatrix<f64>,
    laplacian: DMatrix<f64>,
    degree: Vec<f64>,
    pub threshold_used: f64,
}

impl BrainGraph {
    /// Build from a symmetric nonnegative adjacency with zero diagonal.
    pub fn from_adjacency(adjacency: DMatrix<f64>, threshold_used: f64) -> Result<Self> {
        let n = adjacency.nrows();
        if n != adjacency.ncols() || n < 2 {
            return Err(Error::Data(format!(
                "adjacency must be square with n >= 2, got {}x{}",
                n,
                adjacency.ncols()
            )));
        }
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::Data(format!("adjacency diagonal must be zero at {i}")));
            }
            for j in 0..n {
                let v = adjacency[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Data(format!("adjacency entry ({i},{j}) = {v} invalid")));
                }
                if (v - adjacency[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Data(format!("adjacency not symmetric at ({i},{j})")));
                }
            }
        }
        let degree: Vec<f64> = (0..n).map(|i| adjacency.row(i).sum()).collect();
        let mut laplacian = -adjacency.clone();
        for i in 0..n {
            laplacian[(i, i)] = degree[i];
        }
        Ok(BrainGraph {
            adjacency,
            laplacian,
            degree,
            threshold_used,
        })
    }

    /// Empty graph (no edges) on n nodes.
    pub fn empty(n: usize) -> Result<Self> {
        Self::from_adjacency(DMatrix::zeros(n, n), 0.0)
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degree
    }

    /// `(I + L) x`.
    fn i_plus_l_times(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..n {
                acc += self.laplacian[(i, j)] * x[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Graph-regularized state cost of a physical state vector.
    pub fn state_cost_with(&self, x: &[f64], kind: StateCostKind) -> Result<f64> {
        if x.len() != self.n() {
            return Err(Error::Data(format!(
                "state cost: state dim {} vs graph n {}",
                x.len(),
                self.n()
            )));
        }
        let y = self.i_plus_l_times(x);
        Ok(match kind {
            StateCostKind::SquaredOperator => y.iter().map(|v| v * v).sum(),
            StateCostKind::QuadraticForm => x.iter().zip(&y).map(|(a, b)| a * b).sum(),
        })
    }

    /// Default squared-operator state cost `||(I+L)x||^2`.
    pub fn state_cost(&self, x: &[f64]) -> Result<f64> {
        self.state_cost_with(x, StateCostKind::SquaredOperator)
    }

    /// Gradient of the state cost with respect to the physical state.
    pub fn state_cost_grad(&self, x: &[f64], kind: StateCostKind) -> Result<Vec<f64>> {
        if x.len() != self.n() {
            return Err(Error::Data(format!(
                "state cost grad: state dim {} vs graph n {}",
                x.len(),
                self.n()
            )));
        }
        let y = self.i_plus_l_times(x);
        Ok(match kind {
            // d/dx ||(I+L)x||^2 = 2 (I+L)^T (I+L) x, and (I+L) is symmetric.
            StateCostKind::SquaredOperator => {
                let z = self.i_plus_l_times(&y);
                z.iter().map(|v| 2.0 * v).collect()
            }
            StateCostKind::QuadraticForm => y.iter().map(|v| 2.0 * v).collect(),
        })
    }

    /// Cost matrix Q with `cost(x) = x^T Q x` for the configured kind.
    pub fn cost_matrix(&self, kind: StateCostKind) -> DMatrix<f64> {
        let n = self.n();
        let mut ipl = self.laplacian.clone();
        for i in 0..n {
            ipl[(i, i)] += 1.0;
        }
        match kind {
            StateCostKind::SquaredOperator => &ipl.transpose() * &ipl,
            StateCostKind::QuadraticForm => ipl,
        }
    }
}

/// Serialized graph artifact (graph.json).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphJson {
    pub kind: String,
    pub schema_version: u32,
    pub n: usize,
    pub adjacency: MatrixJson,
    pub laplacian: MatrixJson,
    pub threshold_used: f64,
}

impl GraphJson {
    pub fn from_graph(g: &BrainGraph) -> Self {
        GraphJson {
            kind: "graph".to_string(),
            schema_version: 1,
            n: g.n(),
            adjacency: MatrixJson::from_matrix(g.adjacency()),
            laplacian: MatrixJson::from_matrix(g.laplacian()),
            threshold_used: g.threshold_used,
        }
    }

    pub fn to_graph(&self) -> Result<BrainGraph> {
        BrainGraph::from_adjacency(self.adjacency.to_matrix()?, self.threshold_used)
    }
}

/// Analytic signal of a real sequence by the frequency-domain method:
/// zero the negative-frequency bins, double the positive ones, keep DC and
/// Nyquist at unit weight.
pub fn analytic_signal(signal: &[f64]) -> Result<Vec<Complex<f64>>> {
    let m = signal.len();
    if m < 4 {
        return Err(Error::Data(format!("analytic signal needs >= 4 samples, got {m}")));
    }
    if signal.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("analytic signal input contains non-finite values".to_string()));
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    let ifft = planner.plan_fft_inverse(m);

    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x, 0.0)).collect();
    fft.process(&mut buf);

    let half = m / 2;
    for (k, v) in buf.iter_mut().enumerate() {
        if k == 0 || (m % 2 == 0 && k == half) {
            // DC and Nyquist stay at unit weight.
        } else if k < half || (m % 2 == 1 && k == half) {
            *v *= 2.0;
        } else {
            *v = Complex::new(0.0, 0.0);
        }
    }
    ifft.process(&mut buf);
    let scale = 1.0 / m as f64;
    Ok(buf.into_iter().map(|v| v * scale).collect())
}

/// Instantaneous phase of the analytic signal.
pub fn analytic_phase(signal: &[f64]) -> Result<Vec<f64>> {
    Ok(analytic_signal(signal)?.iter().map(|z| z.im.atan2(z.re)).collect())
}

/// Resultant magnitude of the wrapped phase differences: the PLV kernel.
pub fn plv_from_phases(phi_i: &[f64], phi_j: &[f64]) -> f64 {
    debug_assert_eq!(phi_i.len(), phi_j.len());
    let m = phi_i.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (a, b) in phi_i.iter().zip(phi_j) {
        let d = a - b;
        re += d.cos();
        im += d.sin();
    }
    (re * re + im * im).sqrt() / m
}

/// Full PLV matrix over a half-open sample window. Phases come from the
/// analytic signal of each complete channel; only the windowed samples enter
/// the average. The diagonal is 1 by construction.
pub fn plv_matrix(signals: &SignalMatrix, window: (usize, usize)) -> Result<DMatrix<f64>> {
    let (a, b) = window;
    if b > signals.n_samples() || a >= b {
        return Err(Error::Data(format!(
            "window [{a}, {b}) out of bounds for {} samples",
            signals.n_samples()
        )));
    }
    if b - a < 8 {
        return Err(Error::Data(format!("PLV window needs >= 8 samples, got {}", b - a)));
    }
    let n = signals.n_channels();
    let phases: Vec<Vec<f64>> = (0..n)
        .map(|c| analytic_phase(signals.channel(c)).map(|p| p[a..b].to_vec()))
        .collect::<Result<_>>()?;

    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        w[(i, i)] = 1.0;
        for j in (i + 1)..n {
            let v = plv_from_phases(&phases[i], &phases[j]);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    Ok(w)
}

/// Threshold a full symmetric weight matrix into a sparse functional graph.
/// Entries at or below the cutoff are dropped; survivors keep their weight.
pub fn threshold_adjacency(full: &DMatrix<f64>, mode: ThresholdMode) -> Result<BrainGraph> {
    let n = full.nrows();
    if n != full.ncols() || n < 2 {
        return Err(Error::Data(format!("weight matrix must be square, n >= 2, got {n}x{}", full.ncols())));
    }
    for i in 0..n {
        for j in 0..n {
            let v = full[(i, j)];
            if !v.is_finite() || !(0.0..=1.0 + 1e-12).contains(&v) {
                return Err(Error::Data(format!("weight ({i},{j}) = {v} outside [0,1]")));
            }
            if (v - full[(j, i)]).abs() > 1e-9 {
                return Err(Error::Data(format!("weight matrix not symmetric at ({i},{j})")));
            }
        }
    }

    let cutoff = match mode {
        ThresholdMode::Absolute(tau) => {
            if !(0.0..1.0).contains(&tau) {
                return Err(Error::Config(format!("absolute threshold must be in [0,1), got {tau}")));
            }
            tau
        }
        ThresholdMode::Percentile(p) => {
            if !(p > 0.0 && p < 100.0) {
                return Err(Error::Config(format!("percentile must be in (0,100), got {p}")));
            }
            // Keep exactly ceil(m * (100-p)/100) of the m upper-triangle
            // weights: the cutoff is the value just below that count in the
            // descending order; ties fall below (strictly-above rule).
            let mut upper: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in (i + 1)..n {
                    upper.push(full[(i, j)]);
                }
            }
            upper.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let m = upper.len();
            let keep = ((m as f64) * (100.0 - p) / 100.0).ceil() as usize;
            if keep >= m {
                -1.0 // keep everything
            } else {
                upper[m - keep - 1]
            }
        }
    };

    let mut adjacency = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j && full[(i, j)] > cutoff {
                adjacency[(i, j)] = full[(i, j)].min(1.0);
            }
        }
    }
    symmetrize(&mut adjacency);
    BrainGraph::from_adjacency(adjacency, cutoff.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::SignalMatrix;

    fn sine_signals(n_samples: usize) -> SignalMatrix {
        // Whole number of periods in the record keeps the frequency-domain
        // analytic signal free of edge leakage.
        let omega = std::f64::consts::TAU * 24.0 / n_samples as f64;
        let mut data = Vec::new();
        // channel 0: cos, channel 1: sin, channel 2: cos scaled by 3
        for t in 0..n_samples {
            data.push((omega * t as f64).cos());
        }
        for t in 0..n_samples {
            data.push((omega * t as f64).sin());
        }
        for t in 0..n_samples {
            data.push(3.0 * (omega * t as f64).cos());
        }
        SignalMatrix::new(3, n_samples, data).unwrap()
    }

    fn wrap(mut d: f64) -> f64 {
        while d < -std::f64::consts::PI {
            d += std::f64::consts::TAU;
        }
        while d > std::f64::consts::PI {
            d -= std::f64::consts::TAU;
        }
        d
    }

    #[test]
    fn cosine_phase_increments_at_omega() {
        // Exact oracle: the analytic signal of cos(wt) is e^{jwt}, realized
        // without leakage when w sits on a DFT bin.
        let m = 8192;
        let omega = std::f64::consts::TAU * 391.0 / m as f64; // ~0.2999
        let x: Vec<f64> = (0..m).map(|t| (omega * t as f64).cos()).collect();
        let phase = analytic_phase(&x).unwrap();
        let margin = m / 20; // exclude 5% at each end
        for t in margin..(m - margin - 1) {
            let d = wrap(phase[t + 1] - phase[t]);
            assert!(
                (d - omega).abs() < 1e-6,
                "phase increment {d} at t={t}, expected {omega}"
            );
        }
    }

    #[test]
    fn off_bin_edge_leakage_decays_into_the_interior() {
        // Off-bin frequency: leakage concentrates at the record edges; with
        // 5% excluded on each side the interior error is small and shrinks
        // as the record grows.
        let omega = 0.3;
        let mut errs = Vec::new();
        for m in [4096usize, 65536] {
            let x: Vec<f64> = (0..m).map(|t| (omega * t as f64).cos()).collect();
            let phase = analytic_phase(&x).unwrap();
            let margin = m / 20;
            let worst = (margin..(m - margin - 1))
                .map(|t| (wrap(phase[t + 1] - phase[t]) - omega).abs())
                .fold(0.0, f64::max);
            errs.push(worst);
        }
        assert!(errs[1] < 1e-3, "interior error {} too large", errs[1]);
        assert!(errs[1] < errs[0] / 4.0, "edge leakage should decay: {errs:?}");
    }

    #[test]
    fn sine_lags_cosine_by_half_pi() {
        let m = 8192;
        let omega = std::f64::consts::TAU * 391.0 / m as f64;
        let c: Vec<f64> = (0..m).map(|t| (omega * t as f64).cos()).collect();
        let s: Vec<f64> = (0..m).map(|t| (omega * t as f64).sin()).collect();
        let pc = analytic_phase(&c).unwrap();
        let ps = analytic_phase(&s).unwrap();
        let margin = m / 20;
        for t in margin..(m - margin) {
            let d = wrap(pc[t] - ps[t] - std::f64::consts::FRAC_PI_2);
            assert!(d.abs() < 1e-6, "lag error {d} at t={t}");
        }
    }

    #[test]
    fn plv_identities() {
        let signals = sine_signals(512);
        let w = plv_matrix(&signals, (32, 480)).unwrap();
        // identical content up to amplitude: channels 0 and 2
        assert!((w[(0, 2)] - 1.0).abs() < 1e-9, "identical-content PLV {}", w[(0, 2)]);
        // constant offset: channels 0 and 1
        assert!((w[(0, 1)] - 1.0).abs() < 1e-6, "constant-offset PLV {}", w[(0, 1)]);
        // symmetry and range
        for i in 0..3 {
            for j in 0..3 {
                assert!((w[(i, j)] - w[(j, i)]).abs() < 1e-12);
                assert!((-1e-12..=1.0 + 1e-12).contains(&w[(i, j)]));
            }
        }
        assert_eq!(w[(1, 1)], 1.0);
    }

    #[test]
    fn plv_amplitude_invariance() {
        let signals = sine_signals(512);
        let mut scaled_data = Vec::new();
        for c in 0..3 {
            let gain = if c == 1 { 17.5 } else { 1.0 };
            scaled_data.extend(signals.channel(c).iter().map(|v| v * gain));
        }
        let scaled = SignalMatrix::new(3, 512, scaled_data).unwrap();
        let w0 = plv_matrix(&signals, (32, 480)).unwrap();
        let w1 = plv_matrix(&scaled, (32, 480)).unwrap();
        assert!((&w0 - &w1).abs().max() < 1e-9);
    }

    #[test]
    fn random_phase_plv_matches_rayleigh_prediction() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let m = 1000;
        let trials = 200;
        let mut values = Vec::with_capacity(trials);
        for _ in 0..trials {
            let pi: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
            let pj: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
            values.push(plv_from_phases(&pi, &pj));
        }
        let mean = crate::linalg::mean(&values);
        // |mean phasor| is Rayleigh with sigma^2 = 1/(2M): mean sqrt(pi)/(2 sqrt(M)),
        // var (2 - pi/2)/(2M).
        let predicted = std::f64::consts::PI.sqrt() / (2.0 * (m as f64).sqrt());
        let sd = ((2.0 - std::f64::consts::FRAC_PI_2) / (2.0 * m as f64)).sqrt();
        let se = sd / (trials as f64).sqrt();
        assert!(
            (mean - predicted).abs() < 3.0 * se,
            "mean PLV {mean} vs Rayleigh {predicted} (3se = {})",
            3.0 * se
        );
        assert!(values.iter().all(|v| *v < 0.1));
    }

    #[test]
    fn threshold_absolute_modes() {
        let mut full = DMatrix::from_element(4, 4, 0.5);
        for i in 0..4 {
            full[(i, i)] = 1.0;
        }
        let g = threshold_adjacency(&full, ThresholdMode::Absolute(0.4)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(g.adjacency()[(i, j)], 0.5);
                }
            }
        }

        let mut low = DMatrix::from_element(4, 4, 0.3);
        for i in 0..4 {
            low[(i, i)] = 1.0;
        }
        let g = threshold_adjacency(&low, ThresholdMode::Absolute(0.4)).unwrap();
        assert_eq!(g.adjacency().amax(), 0.0);
        assert_eq!(g.laplacian().amax(), 0.0);
    }

    #[test]
    fn threshold_percentile_matches_sort_oracle() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 9;
        let mut full = DMatrix::zeros(n, n);
        for i in 0..n {
            full[(i, i)] = 1.0;
            for j in (i + 1)..n {
                let v: f64 = rng.random();
                full[(i, j)] = v;
                full[(j, i)] = v;
            }
        }
        let p = 90.0;
        let g = threshold_adjacency(&full, ThresholdMode::Percentile(p)).unwrap();

        // Sort-based oracle: expected count of retained upper-triangle edges.
        let m = n * (n - 1) / 2;
        let expect = ((m as f64) * (100.0 - p) / 100.0).ceil() as usize;
        let mut kept = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if g.adjacency()[(i, j)] > 0.0 {
                    kept += 1;
                }
            }
        }
        assert_eq!(kept, expect, "kept {kept} of {m}, expected {expect}");

        // The survivors must be exactly the top-k weights.
        let mut upper: Vec<f64> = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                upper.push(full[(i, j)]);
            }
        }
        upper.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let min_kept = upper[expect - 1];
        for i in 0..n {
            for j in (i + 1)..n {
                let retained = g.adjacency()[(i, j)] > 0.0;
                assert_eq!(retained, full[(i, j)] >= min_kept - 1e-15);
            }
        }
    }

    #[test]
    fn threshold_rejects_bad_parameters() {
        let full = DMatrix::from_element(3, 3, 0.0);
        assert!(threshold_adjacency(&full, ThresholdMode::Absolute(1.0)).is_err());
        assert!(threshold_adjacency(&full, ThresholdMode::Percentile(0.0)).is_err());
        assert!(threshold_adjacency(&full, ThresholdMode::Percentile(100.0)).is_err());
    }

    #[test]
    fn laplacian_algebra() {
        let mut adj = DMatrix::zeros(4, 4);
        for (i, j, w) in [(0usize, 1usize, 0.8), (1, 2, 0.5), (2, 3, 0.9), (0, 3, 0.4)] {
            adj[(i, j)] = w;
            adj[(j, i)] = w;
        }
        let g = BrainGraph::from_adjacency(adj, 0.0).unwrap();
        for i in 0..4 {
            assert!(g.laplacian().row(i).sum().abs() < 1e-12);
        }
        let l = g.laplacian().clone();
        let eigs = l.symmetric_eigenvalues();
        assert!(eigs.iter().cloned().fold(f64::INFINITY, f64::min) > -1e-10);
    }

    #[test]
    fn zero_eigenvalue_count_equals_components() {
        // Two disjoint edges: 4 nodes, 2 components.
        let mut adj = DMatrix::zeros(4, 4);
        adj[(0, 1)] = 1.0;
        adj[(1, 0)] = 1.0;
        adj[(2, 3)] = 1.0;
        adj[(3, 2)] = 1.0;
        let g = BrainGraph::from_adjacency(adj, 0.0).unwrap();
        let eigs = g.laplacian().clone().symmetric_eigenvalues();
        let zeros = eigs.iter().filter(|e| e.abs() < 1e-10).count();
        assert_eq!(zeros, 2);
    }

    #[test]
    fn state_cost_hand_case() {
        let mut adj = DMatrix::zeros(2, 2);
        adj[(0, 1)] = 1.0;
        adj[(1, 0)] = 1.0;
        let g = BrainGraph::from_adjacency(adj, 0.0).unwrap();
        // L = [[1,-1],[-1,1]], x = [1,-1] -> (I+L)x = [3,-3], cost = 18
        let cost = g.state_cost(&[1.0, -1.0]).unwrap();
        assert!((cost - 18.0).abs() < 1e-12);

        // x = 0 -> 0; empty graph -> ||x||^2
        assert_eq!(g.state_cost(&[0.0, 0.0]).unwrap(), 0.0);
        let empty = BrainGraph::empty(3).unwrap();
        let x = [1.0, 2.0, -2.0];
        assert!((empty.state_cost(&x).unwrap() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn state_cost_grad_matches_finite_differences() {
        let mut adj = DMatrix::zeros(3, 3);
        for (i, j, w) in [(0usize, 1usize, 0.7), (1, 2, 0.4)] {
            adj[(i, j)] = w;
            adj[(j, i)] = w;
        }
        let g = BrainGraph::from_adjacency(adj, 0.0).unwrap();
        let x = [0.3, -1.1, 0.8];
        for kind in [StateCostKind::SquaredOperator, StateCostKind::QuadraticForm] {
            let grad = g.state_cost_grad(&x, kind).unwrap();
            for i in 0..3 {
                let h = 1e-6;
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let fd = (g.state_cost_with(&xp, kind).unwrap() - g.state_cost_with(&xm, kind).unwrap())
                    / (2.0 * h);
                assert!((grad[i] - fd).abs() < 1e-5, "kind {kind:?} dim {i}: {} vs {fd}", grad[i]);
            }
        }
    }

    #[test]
    fn cost_matrix_agrees_with_state_cost() {
        let mut adj = DMatrix::zeros(3, 3);
        adj[(0, 2)] = 0.6;
        adj[(2, 0)] = 0.6;
        let g = BrainGraph::from_adjacency(adj, 0.0).unwrap();
        let x = nalgebra::DVector::from_column_slice(&[0.5, -0.2, 1.0]);
        for kind in [StateCostKind::SquaredOperator, StateCostKind::QuadraticForm] {
            let q = g.cost_matrix(kind);
            let via_q = (x.transpose() * &q * &x)[(0, 0)];
            let direct = g.state_cost_with(x.as_slice(), kind).unwrap();
            assert!((via_q - direct).abs() < 1e-12);
        }
    }
}
