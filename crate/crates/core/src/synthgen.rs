//! Synthetic multichannel oscillator data with a low-synchrony "healthy"
//! regime and a high-synchrony, high-amplitude "seizure" regime.
//!
//! Channels are Kuramoto phase oscillators coupled over a structural
//! topology:
//!
//! ```text
//! theta_i' = omega_i + (c/N) * sum_j A_ij sin(theta_j - theta_i) + noise
//! x_i      = amp_i * sin(theta_i)
//! ```
//!
//! Inside the configured seizure window the coupling switches to the strong
//! value and amplitudes are scaled up, so phase-based connectivity measures
//! see a sharp contrast between the two regimes.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Structural coupling topology for the phase oscillators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Ring,
    SmallWorld,
    ScaleFree,
}

/// Per-sample regime tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Healthy,
    Seizure,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OscillatorConfig {
    pub n_channels: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub coupling_healthy: f64,
    pub coupling_seizure: f64,
    /// Half-open sample index range [start, end) with strong coupling.
    pub seizure_window: (usize, usize),
    pub noise_std: f64,
    /// Per-channel angular frequency in radians per sample. Empty means the
    /// default spread over [0.15, 0.35].
    pub base_freqs: Vec<f64>,
    pub amp_seizure_gain: f64,
    pub topology: Topology,
}

impl Default for OscillatorConfig {
    fn default() -> Self {
        OscillatorConfig {
            n_channels: 23,
            n_samples: 2000,
            seed: 7,
            coupling_healthy: 0.1,
            coupling_seizure: 6.0,
            seizure_window: (1300, 1500),
            noise_std: 0.03,
            base_freqs: Vec::new(),
            amp_seizure_gain: 2.0,
            topology: Topology::SmallWorld,
        }
    }
}

impl OscillatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_channels < 2 {
            return Err(Error::Config(format!("need at least 2 channels, got {}", self.n_channels)));
        }
        if self.n_samples < 16 {
            return Err(Error::Config(format!("need at least 16 samples, got {}", self.n_samples)));
        }
        let (a, b) = self.seizure_window;
        if !(a < b && b <= self.n_samples) {
            return Err(Error::Config(format!(
                "seizure window [{a}, {b}) must satisfy 0 <= start < end <= {}",
                self.n_samples
            )));
        }
        if self.coupling_seizure < self.coupling_healthy {
            return Err(Error::Config(format!(
                "coupling_seizure ({}) must be >= coupling_healthy ({})",
                self.coupling_seizure, self.coupling_healthy
            )));
        }
        for v in [
            self.coupling_healthy,
            self.coupling_seizure,
            self.noise_std,
            self.amp_seizure_gain,
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("non-finite or negative parameter: {v}")));
            }
        }
        if self.amp_seizure_gain < 1.0 {
            return Err(Error::Config(format!(
                "amp_seizure_gain must be >= 1, got {}",
                self.amp_seizure_gain
            )));
        }
        if !self.base_freqs.is_empty() && self.base_freqs.len() != self.n_channels {
            return Err(Error::Config(format!(
                "base_freqs has {} entries for {} channels",
                self.base_freqs.len(),
                self.n_channels
            )));
        }
        if self.base_freqs.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("non-finite base frequency".to_string()));
        }
        Ok(())
    }

    fn freqs(&self) -> Vec<f64> {
        if !self.base_freqs.is_empty() {
            return self.base_freqs.clone();
        }
        let n = self.n_channels;
        (0..n)
            .map(|i| 0.15 + 0.20 * (i as f64) / ((n - 1).max(1) as f64))
            .collect()
    }
}

/// Multichannel time series, channels x samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    /// Row-major storage: `data[ch * n_samples + t]`.
    data: Vec<f64>,
    n_channels: usize,
    n_samples: usize,
    pub channel_names: Vec<String>,
    pub sample_labels: Option<Vec<Regime>>,
}

impl SignalMatrix {
    pub fn new(n_channels: usize, n_samples: usize, data: Vec<f64>) -> Result<Self> {
        if n_channels < 2 {
            return Err(Error::Data(format!("need at least 2 channels, got {n_channels}")));
        }
        if n_samples < 16 {
            return Err(Error::Data(format!("need at least 16 samples, got {n_samples}")));
        }
        if data.len() != n_channels * n_samples {
            return Err(Error::Data(format!(
                "signal payload has {} entries, expected {n_channels}x{n_samples}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("signal contains non-finite entries".to_string()));
        }
        let channel_names = (0..n_channels).map(|i| format!("ch{:02}", i + 1)).collect();
        Ok(SignalMatrix {
            data,
            n_channels,
            n_samples,
            channel_names,
            sample_labels: None,
        })
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn value(&self, ch: usize, t: usize) -> f64 {
        self.data[ch * self.n_samples + t]
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        &self.data[ch * self.n_samples..(ch + 1) * self.n_samples]
    }

    /// Column `x_t` as a vector over channels.
    pub fn sample(&self, t: usize) -> Vec<f64> {
        (0..self.n_channels).map(|c| self.value(c, t)).collect()
    }

    /// Copy of a half-open sample window as its own record.
    pub fn slice(&self, window: (usize, usize)) -> Result<SignalMatrix> {
        let (a, b) = window;
        if !(a < b && b <= self.n_samples) {
            return Err(Error::Data(format!(
                "slice [{a}, {b}) out of bounds for {} samples",
                self.n_samples
            )));
        }
        let mut data = Vec::with_capacity(self.n_channels * (b - a));
        for c in 0..self.n_channels {
            data.extend_from_slice(&self.channel(c)[a..b]);
        }
        let mut out = SignalMatrix::new(self.n_channels, b - a, data)?;
        out.channel_names = self.channel_names.clone();
        out.sample_labels = self
            .sample_labels
            .as_ref()
            .map(|labels| labels[a..b].to_vec());
        Ok(out)
    }

    /// All values in a half-open sample window, pooled across channels.
    pub fn pooled(&self, window: (usize, usize)) -> Result<Vec<f64>> {
        let (a, b) = window;
        if !(a < b && b <= self.n_samples) {
            return Err(Error::Data(format!(
                "window [{a}, {b}) out of bounds for {} samples",
                self.n_samples
            )));
        }
        let mut out = Vec::with_capacity(self.n_channels * (b - a));
        for c in 0..self.n_channels {
            out.extend_from_slice(&self.channel(c)[a..b]);
        }
        Ok(out)
    }
}

/// Structural 0/1 adjacency used for the phase coupling, not to be confused
/// with the functional graph estimated downstream.
fn topology_adjacency(n: usize, topology: Topology, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n]; n];
    let connect = |a: &mut Vec<Vec<f64>>, i: usize, j: usize| {
        if i != j {
            a[i][j] = 1.0;
            a[j][i] = 1.0;
        }
    };
    match topology {
        Topology::Ring => {
            for i in 0..n {
                connect(&mut a, i, (i + 1) % n);
            }
        }
        Topology::SmallWorld => {
            // Watts-Strogatz: ring with k=4 neighbours, rewiring prob 0.1.
            for i in 0..n {
                for d in 1..=2usize {
                    connect(&mut a, i, (i + d) % n);
                }
            }
            for i in 0..n {
                for d in 1..=2usize {
                    if rng.random::<f64>() < 0.1 {
                        let j = (i + d) % n;
                        let k = rng.random_range(0..n);
                        if k != i && a[i][k] == 0.0 {
                            a[i][j] = 0.0;
                            a[j][i] = 0.0;
                            connect(&mut a, i, k);
                        }
                    }
                }
            }
        }
        Topology::ScaleFree => {
            // Barabasi-Albert with m = 2, seeded from a triangle.
            let m0 = 3.min(n);
            for i in 0..m0 {
                for j in (i + 1)..m0 {
                    connect(&mut a, i, j);
                }
            }
            let mut degree: Vec<f64> = (0..n).map(|i| a[i].iter().sum()).collect();
            for v in m0..n {
                let mut attached = 0;
                let mut guard = 0;
                while attached < 2.min(v) && guard < 10_000 {
                    guard += 1;
                    let total: f64 = degree[..v].iter().sum();
                    let mut pick = rng.random::<f64>() * total;
                    let mut target = 0;
                    for (j, d) in degree[..v].iter().enumerate() {
                        pick -= d;
                        if pick <= 0.0 {
                            target = j;
                            break;
                        }
                    }
                    if a[v][target] == 0.0 && target != v {
                        connect(&mut a, v, target);
                        degree[v] += 1.0;
                        degree[target] += 1.0;
                        attached += 1;
                    }
                }
            }
        }
    }
    a
}

/// Generate the coupled-oscillator record. Deterministic for a fixed config.
pub fn generate(config: &OscillatorConfig) -> Result<SignalMatrix> {
    config.validate()?;
    let n = config.n_channels;
    let t_max = config.n_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let adjacency = topology_adjacency(n, config.topology, &mut rng);
    let omega = config.freqs();

    // Random initial phases over [0, 2pi).
    let mut theta: Vec<f64> = (0..n)
        .map(|_| rng.random::<f64>() * std::f64::consts::TAU)
        .collect();

    let (win_a, win_b) = config.seizure_window;
    let mut data = vec![0.0; n * t_max];
    let mut labels = Vec::with_capacity(t_max);
    let mut next_theta = vec![0.0; n];

    for t in 0..t_max {
        let in_seizure = t >= win_a && t < win_b;
        let coupling = if in_seizure { config.coupling_seizure } else { config.coupling_healthy };
        let amp = if in_seizure { config.amp_seizure_gain } else { 1.0 };
        labels.push(if in_seizure { Regime::Seizure } else { Regime::Healthy });

        for i in 0..n {
            data[i * t_max + t] = amp * theta[i].sin();
        }

        // Euler step of size one sample.
        for i in 0..n {
            let mut pull = 0.0;
            for j in 0..n {
                if adjacency[i][j] != 0.0 {
                    pull += adjacency[i][j] * (theta[j] - theta[i]).sin();
                }
            }
            let noise: f64 = if config.noise_std > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                config.noise_std * z
            } else {
                0.0
            };
            next_theta[i] = theta[i] + omega[i] + coupling / n as f64 * pull + noise;
        }
        theta.copy_from_slice(&next_theta);
    }

    let mut signals = SignalMatrix::new(n, t_max, data)?;
    signals.sample_labels = Some(labels);
    Ok(signals)
}

/// Write a signal matrix as CSV: header row of channel names, then one row
/// per time sample. Values use the shortest exact decimal representation.
pub fn save_csv(signals: &SignalMatrix, path: &std::path::Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&signals.channel_names.join(","));
    out.push('\n');
    for t in 0..signals.n_samples() {
        for c in 0..signals.n_channels() {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", signals.value(c, t)));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Load a signal matrix from CSV. Errors name the offending 1-based row and
/// column; the header counts as row 1.
pub fn load_csv(path: &std::path::Path) -> Result<SignalMatrix> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty file", path.display())))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    let n_channels = names.len();
    if n_channels < 2 {
        return Err(Error::Data(format!(
            "{}: need at least 2 channels, header has {n_channels}",
            path.display()
        )));
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n_channels];
    for (row_idx, line) in lines.enumerate() {
        let row = row_idx + 2; // 1-based, after the header
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != n_channels {
            return Err(Error::Data(format!(
                "{}: row {row} has {} cells, expected {n_channels}",
                path.display(),
                cells.len()
            )));
        }
        for (col, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "{}: row {row}, column {}: cannot parse '{}' as a number",
                    path.display(),
                    col + 1,
                    cell.trim()
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!(
                    "{}: row {row}, column {}: non-finite value '{}'",
                    path.display(),
                    col + 1,
                    cell.trim()
                )));
            }
            columns[col].push(v);
        }
    }

    let n_samples = columns[0].len();
    let mut data = Vec::with_capacity(n_channels * n_samples);
    for col in &columns {
        data.extend_from_slice(col);
    }
    let mut signals = SignalMatrix::new(n_channels, n_samples, data)?;
    signals.channel_names = names;
    Ok(signals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoupled_noiseless_channels_are_pure_sinusoids() {
        let config = OscillatorConfig {
            n_channels: 4,
            n_samples: 256,
            coupling_healthy: 0.0,
            coupling_seizure: 0.0,
            noise_std: 0.0,
            amp_seizure_gain: 1.0,
            seizure_window: (100, 120),
            ..OscillatorConfig::default()
        };
        let signals = generate(&config).unwrap();
        let omega = config.freqs();
        // Recover the initial phase from the first sample pair and check the
        // whole trace against amp*sin(theta0 + omega*t).
        for c in 0..4 {
            let x0 = signals.value(c, 0);
            let x1 = signals.value(c, 1);
            // sin(p + w) = x1, sin(p) = x0; solve for p via atan2.
            let w = omega[c];
            let p = f64::atan2(x0 * w.sin(), x1 - x0 * w.cos());
            for t in 0..256 {
                let expected = (p + w * t as f64).sin();
                assert!(
                    (signals.value(c, t) - expected).abs() < 1e-9,
                    "channel {c} sample {t}"
                );
            }
        }
    }

    #[test]
    fn deterministic_for_equal_seed() {
        let config = OscillatorConfig {
            n_samples: 300,
            seizure_window: (150, 250),
            ..OscillatorConfig::default()
        };
        let a = generate(&config).unwrap();
        let b = generate(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seizure_window_raises_common_mode_variance() {
        let config = OscillatorConfig::default();
        let signals = generate(&config).unwrap();
        let (a, b) = config.seizure_window;
        let mean_at = |t: usize| -> f64 {
            (0..signals.n_channels()).map(|c| signals.value(c, t)).sum::<f64>()
                / signals.n_channels() as f64
        };
        let inside: Vec<f64> = (a..b).map(mean_at).collect();
        let outside: Vec<f64> = (64..a).map(mean_at).collect();
        let var = |xs: &[f64]| crate::linalg::variance(xs);
        assert!(
            var(&inside) > var(&outside),
            "synchrony should raise common-mode variance: {} vs {}",
            var(&inside),
            var(&outside)
        );
    }

    #[test]
    fn invalid_window_rejected() {
        let config = OscillatorConfig {
            seizure_window: (1500, 1300),
            ..OscillatorConfig::default()
        };
        assert!(matches!(generate(&config), Err(Error::Config(_))));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let config = OscillatorConfig {
            n_channels: 3,
            n_samples: 32,
            seizure_window: (10, 20),
            ..OscillatorConfig::default()
        };
        let signals = generate(&config).unwrap();
        let path = dir.path().join("sig.csv");
        save_csv(&signals, &path).unwrap();
        let loaded = load_csv(&path).unwrap();
        assert_eq!(loaded.n_channels(), 3);
        assert_eq!(loaded.n_samples(), 32);
        for c in 0..3 {
            for t in 0..32 {
                assert!((loaded.value(c, t) - signals.value(c, t)).abs() < 1e-12);
            }
        }

        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "a,b\n1.0,2.0\n3.0,NaN\n").unwrap();
        let err = load_csv(&bad).unwrap_err().to_string();
        assert!(err.contains("row 3"), "{err}");
        assert!(err.contains("column 2"), "{err}");

        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "a,b\n1.0,2.0\n3.0\n").unwrap();
        assert!(load_csv(&ragged).is_err());
    }

    #[test]
    fn twenty_three_channel_file_loads() {
        let dir = tempfile::tempdir().unwrap();
        let config = OscillatorConfig {
            n_samples: 64,
            seizure_window: (30, 50),
            ..OscillatorConfig::default()
        };
        let signals = generate(&config).unwrap();
        let path = dir.path().join("sig23.csv");
        save_csv(&signals, &path).unwrap();
        assert_eq!(load_csv(&path).unwrap().n_channels(), 23);
    }
}
