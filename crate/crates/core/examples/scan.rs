use desync_core::connectivity::{plv_matrix, threshold_adjacency, ThresholdMode};
use desync_core::graphsel::{centralities, select_nodes};
use desync_core::koopman::*;
use desync_core::synthgen::{generate, OscillatorConfig};

fn main() {
    for &lam_out in &[1e-3, 1e-2, 1e-1, 1.0] {
        let mut w1s = Vec::new();
        let mut wnorms = Vec::new();
        for seed in [7u64, 8, 9] {
            let synth = OscillatorConfig { seed, ..OscillatorConfig::default() };
            let signals = generate(&synth).unwrap();
            let plv = plv_matrix(&signals, (1300, 1500)).unwrap();
            let graph = threshold_adjacency(&plv, ThresholdMode::Absolute(0.4)).unwrap();
            let report = centralities(&graph).unwrap();
            let (b, _) = select_nodes(&report, 5, [1.0, 1.0, 1.0]).unwrap();
            let rc = ReservoirConfig {
                input_scale: 0.1, tau: 4, washout: 10, lambda_reg: 1e-3,
                lambda_readout: Some(lam_out), fit_window: Some((1300, 1500)),
                ..ReservoirConfig::default()
            };
            let model = KoopmanModel::fit(&signals, &graph, &b, &rc).unwrap();
            let z0 = model.warmup_state(&signals, &graph, 1340).unwrap();
            let (_, phys) = model.forecast(&z0, 159).unwrap();
            let mut truth = nalgebra::DMatrix::zeros(23, 160);
            for (col, t) in (1340..1500).enumerate() {
                for i in 0..23 { truth[(i, col)] = signals.value(i, t); }
            }
            let m = prediction_metrics(&truth, &phys).unwrap();
            w1s.push((m.w1_global * 1000.0).round() / 1000.0);
            wnorms.push(model.w_out.norm().round());
        }
        println!("lam_out={lam_out:<7.0e} w1 {w1s:?}  |W_out|_F {wnorms:?}");
    }
}
