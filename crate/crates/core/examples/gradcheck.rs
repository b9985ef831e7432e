use desync_core::connectivity::BrainGraph;
use desync_core::diffnet::DiffMlp;
use desync_core::koopman::{KoopmanModel, ReservoirConfig};
use desync_core::mfg::{empirical_hjb_loss, hjb_residual_loss, generator_loss, MfgConfig};
use nalgebra::{DMatrix, DVector};

fn main() {
    let mut b_latent = DMatrix::zeros(2, 2);
    b_latent[(0, 0)] = 1.0;
    b_latent[(1, 0)] = 0.4;
    let model = KoopmanModel {
        config: ReservoirConfig { n_res: 2, tau: 0, washout: 0, ..ReservoirConfig::default() },
        n_channels: 2,
        w_in: DMatrix::zeros(2, 4),
        w_res: DMatrix::zeros(2, 2),
        k: DMatrix::from_row_slice(2, 2, &[0.9, 0.12, -0.08, 0.95]),
        w_out: DMatrix::identity(2, 2),
        b_latent,
        spectral_radius_k: 1.0,
        sigma_latent: vec![0.1, 0.1],
        actuated: vec![0],
    };
    let mut adj = DMatrix::zeros(2, 2);
    adj[(0, 1)] = 1.0;
    adj[(1, 0)] = 1.0;
    let graph = BrainGraph::from_adjacency(adj, 0.0).unwrap();
    let config = MfgConfig {
        gamma: 0.5,
        sigma_override: Some(0.1),
        hutchinson_probes: 0,
        latent_scale: Some(0.9),
        value_scale: Some(3.0),
        ..MfgConfig::default()
    };

    let net = DiffMlp::new(&[3, 10, 8, 1], 5).unwrap();
    let batch = vec![
        (DVector::from_column_slice(&[0.7, -0.4]), 0.3),
        (DVector::from_column_slice(&[-1.1, 0.5]), 0.8),
        (DVector::from_column_slice(&[0.2, 1.3]), 0.1),
    ];

    // FD check of the interior loss gradient via the training-path assembly.
    let loss_of = |n: &DiffMlp| hjb_residual_loss(&batch, n, &model, &graph, &config).unwrap();
    let grad = desync_core::mfg::hjb_residual_loss_grad(&batch, &net, &model, &graph, &config).unwrap();
    let params = net.params_flat();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for idx in (0..params.len()).step_by(7) {
        let mut pp = params.clone();
        let mut pm = params.clone();
        pp[idx] += h;
        pm[idx] -= h;
        let mut np = net.clone();
        np.set_params_flat(&pp).unwrap();
        let mut nm = net.clone();
        nm.set_params_flat(&pm).unwrap();
        let fd = (loss_of(&np) - loss_of(&nm)) / (2.0 * h);
        let err = (grad[idx] - fd).abs() / (1.0 + fd.abs());
        worst = worst.max(err);
        if err > 1e-4 {
            println!("param {idx}: analytic {} vs fd {fd}", grad[idx]);
        }
    }
    println!("interior-loss grad check worst rel err = {worst:.3e}");

    // Same for the empirical anchor.
    let pairs = vec![
        (DVector::from_column_slice(&[0.7, -0.4]), DVector::from_column_slice(&[0.72, -0.38]), 0.3),
        (DVector::from_column_slice(&[-0.9, 0.2]), DVector::from_column_slice(&[-0.88, 0.21]), 0.6),
    ];
    let dt = 0.01;
    let eloss_of = |n: &DiffMlp| empirical_hjb_loss(&pairs, dt, n, &model, &graph, &config).unwrap();
    let egrad = desync_core::mfg::empirical_hjb_loss_grad(&pairs, dt, &net, &model, &graph, &config).unwrap();
    let mut worst_e: f64 = 0.0;
    for idx in (0..params.len()).step_by(7) {
        let mut pp = params.clone();
        let mut pm = params.clone();
        pp[idx] += h;
        pm[idx] -= h;
        let mut np = net.clone();
        np.set_params_flat(&pp).unwrap();
        let mut nm = net.clone();
        nm.set_params_flat(&pm).unwrap();
        let fd = (eloss_of(&np) - eloss_of(&nm)) / (2.0 * h);
        let err = (egrad[idx] - fd).abs() / (1.0 + fd.abs());
        worst_e = worst_e.max(err);
    }
    println!("empirical-loss grad check worst rel err = {worst_e:.3e}");

    // Generator loss gradient w.r.t. generator params.
    let gen = DiffMlp::new(&[3, 10, 8, 2], 6).unwrap();
    let gbatch = vec![
        (DVector::from_column_slice(&[0.5, -0.2]), 0.4),
        (DVector::from_column_slice(&[-0.3, 0.9]), 0.7),
    ];
    let gloss_of = |g: &DiffMlp| generator_loss(&gbatch, &net, g, &model, &graph, &config).unwrap();
    let ggrad = desync_core::mfg::generator_loss_grad(&gbatch, &net, &gen, &model, &graph, &config).unwrap();
    let gparams = gen.params_flat();
    let mut worst_g: f64 = 0.0;
    for idx in (0..gparams.len()).step_by(5) {
        let mut pp = gparams.clone();
        let mut pm = gparams.clone();
        pp[idx] += h;
        pm[idx] -= h;
        let mut np = gen.clone();
        np.set_params_flat(&pp).unwrap();
        let mut nm = gen.clone();
        nm.set_params_flat(&pm).unwrap();
        let fd = (gloss_of(&np) - gloss_of(&nm)) / (2.0 * h);
        let err = (ggrad[idx] - fd).abs() / (1.0 + fd.abs());
        worst_g = worst_g.max(err);
    }
    println!("generator-loss grad check worst rel err = {worst_g:.3e}");
}
