use desync_core::connectivity::BrainGraph;
use desync_core::koopman::{KoopmanModel, ReservoirConfig};
use desync_core::mfg::{optimal_control, train, LatentData, MfgConfig};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn toy_model() -> KoopmanModel {
    let mut b_latent = DMatrix::zeros(2, 2);
    b_latent[(0, 0)] = 1.0;
    b_latent[(1, 0)] = 0.4;
    KoopmanModel {
        config: ReservoirConfig { n_res: 2, tau: 0, washout: 0, ..ReservoirConfig::default() },
        n_channels: 2,
        w_in: DMatrix::zeros(2, 4),
        w_res: DMatrix::zeros(2, 2),
        k: DMatrix::from_row_slice(2, 2, &[0.92, 0.05, -0.04, 0.9]),
        w_out: DMatrix::identity(2, 2),
        b_latent,
        spectral_radius_k: 1.0,
        sigma_latent: vec![0.1, 0.1],
        actuated: vec![0],
    }
}

fn toy_graph() -> BrainGraph {
    let mut adj = DMatrix::zeros(2, 2);
    adj[(0, 1)] = 0.3;
    adj[(1, 0)] = 0.3;
    BrainGraph::from_adjacency(adj, 0.0).unwrap()
}

/// Backward RK4 on dP/dt = -Q - PA - A^T P + (1/gamma) P M P, P(T) = 0.
fn riccati(a: &DMatrix<f64>, m: &DMatrix<f64>, q: &DMatrix<f64>, gamma: f64, t_grid: &[f64]) -> Vec<DMatrix<f64>> {
    let horizon = 1.0;
    let n_steps = 4000usize;
    let dt = horizon / n_steps as f64;
    let rhs = |p: &DMatrix<f64>| -> DMatrix<f64> {
        -(q + p * a + a.transpose() * p) + p * m * p / gamma
    };
    let mut p = DMatrix::zeros(2, 2);
    let mut out: Vec<(f64, DMatrix<f64>)> = vec![(horizon, p.clone())];
    // integrate backward: t from T to 0, dP/d(-t) = -rhs
    for i in 0..n_steps {
        let _t = horizon - i as f64 * dt;
        let k1 = rhs(&p);
        let k2 = rhs(&(&p - &k1 * (dt / 2.0)));
        let k3 = rhs(&(&p - &k2 * (dt / 2.0)));
        let k4 = rhs(&(&p - &k3 * dt));
        p = &p - (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        out.push((horizon - (i + 1) as f64 * dt, p.clone()));
    }
    t_grid
        .iter()
        .map(|t| {
            let idx = ((horizon - t) / dt).round() as usize;
            out[idx.min(out.len() - 1)].1.clone()
        })
        .collect()
}

fn main() {
    let model = toy_model();
    let graph = toy_graph();
    let a = &model.k - DMatrix::identity(2, 2);
    let m = {
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 0.4]);
        &b * b.transpose()
    };
    // Q = (I+L)^T (I+L), L = [[1,-1],[-1,1]]
    let q = DMatrix::from_row_slice(2, 2, &[1.78, -0.78, -0.78, 1.78]);
    let gamma = 0.5;

    // latent pairs from simulated uncontrolled SDE
    let dt = 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (n_traj, n_step) = (60usize, 100usize);
    let mut states = DMatrix::zeros(2, n_traj * n_step);
    let mut next = DMatrix::zeros(2, n_traj * n_step);
    let mut times = Vec::new();
    let mut col = 0;
    for _ in 0..n_traj {
        let mut z = DVector::from_fn(2, |_, _| { let g: f64 = StandardNormal.sample(&mut rng); g * 1.3 });
        for s in 0..n_step {
            states.set_column(col, &z);
            let mut zn = &z + (&a * &z) * dt;
            for i in 0..2 {
                let g: f64 = StandardNormal.sample(&mut rng);
                zn[i] += 0.1 * dt.sqrt() * g;
            }
            next.set_column(col, &zn);
            times.push(s as f64 * dt);
            z = zn;
            col += 1;
        }
    }
    let latent = LatentData { states, next, times, dt };

    let config = MfgConfig {
        gamma,
        sigma_override: Some(0.1),
        horizon: 1.0,
        batch_size: std::env::args().nth(8).and_then(|s| s.parse().ok()).unwrap_or(128),
        n_iter: std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5000),
        lr_phi: std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(1e-3),
        lr_gen: std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(2e-4),
        lr_decay: std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(0.9995),
        lambda_real: std::env::args().nth(6).and_then(|s| s.parse().ok()).unwrap_or(0.5),
        terminal_weight: std::env::args().nth(7).and_then(|s| s.parse().ok()).unwrap_or(1.0),
        hutchinson_probes: 0,
        p_real: std::env::args().nth(5).and_then(|s| s.parse().ok()).unwrap_or(0.5),
        gaussian_scale: Some(1.2),
        hidden_phi: vec![std::env::args().nth(9).and_then(|s| s.parse().ok()).unwrap_or(32); 2],
        hidden_gen: vec![32, 32],
        seed: std::env::args().nth(10).and_then(|s| s.parse().ok()).unwrap_or(3),
        ..MfgConfig::default()
    };
    let t0 = std::time::Instant::now();
    let policy = train(&model, &graph, &latent, &config).unwrap();
    // quick look at the trained value surface
    {
        use desync_core::mfg::HjbOps;
        let ops = HjbOps::new(&policy.model, &graph, &policy.config).unwrap();
        for t in [0.0, 0.5, 0.9] {
            let phi = |z: &[f64]| policy.value_net.forward_scalar(&ops.net_input(z, t)).unwrap() * ops.value_scale;
            println!("t={t}: phi(0,0)={:.3} phi(1,1)={:.3} phi(1,-1)={:.3} phi(2,0)={:.3}",
                phi(&[0.0,0.0]), phi(&[1.0,1.0]), phi(&[1.0,-1.0]), phi(&[2.0,0.0]));
        }
        println!("scales: z {:.4} value {:.4}", ops.z_scale, ops.value_scale);
        println!("config snapshot: latent {:?} value {:?}", policy.config.latent_scale, policy.config.value_scale);
        let mut mc = 0.0;
        for c in 0..latent.len().min(256) {
            mc += ops.state_cost(&latent.states.column(c).into_owned()).unwrap();
        }
        println!("probe mean C = {}", mc / 256.0);
    }
    println!("trained in {:.1?}s, loss head {:.3e} tail {:.3e}",
        t0.elapsed().as_secs_f64(),
        policy.loss_phi[..50].iter().sum::<f64>() / 50.0,
        policy.loss_phi[policy.loss_phi.len()-50..].iter().sum::<f64>() / 50.0);

    // Independent cross-check of the continuous Riccati oracle: fine-step
    // discrete-time dynamic programming on the discretized system.
    {
        let steps = 2000usize;
        let delta = 1.0 / steps as f64;
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 0.4]);
        let a_hat = DMatrix::identity(2, 2) + &a * delta;
        let b_hat = &b * delta;
        let q_tilde = &q * delta;
        let r_tilde = DMatrix::from_element(1, 1, gamma * delta);
        let mut p = DMatrix::zeros(2, 2);
        let mut f_at = std::collections::BTreeMap::new();
        for k in (0..steps).rev() {
            let s_mat = &r_tilde + b_hat.transpose() * &p * &b_hat;
            let s_inv = s_mat.try_inverse().unwrap();
            let gain = &s_inv * b_hat.transpose() * &p * &a_hat; // 1x2
            p = &q_tilde + a_hat.transpose() * &p * &a_hat
                - a_hat.transpose() * &p * &b_hat * &s_inv * b_hat.transpose() * &p * &a_hat;
            let t = k as f64 * delta;
            for probe in [0.25f64, 0.5] {
                if (t - probe).abs() < delta / 2.0 {
                    // discrete gain / delta approximates the continuous rate gain
                    f_at.insert((probe * 100.0) as i64, gain.clone() / delta);
                }
            }
        }
        for (tk, f) in &f_at {
            println!("DP oracle t={}: F = [{:.4}, {:.4}]", *tk as f64 / 100.0, f[(0,0)] / steps as f64, f[(0,1)] / steps as f64);
        }
    }

    // residual of the trained phi on a fixed grid
    {
        use desync_core::mfg::hjb_residual_loss;
        let mut grid = Vec::new();
        for zi in [-1.5f64, -0.75, 0.0, 0.75, 1.5] {
            for zj in [-1.5f64, -0.75, 0.0, 0.75, 1.5] {
                for t in [0.1, 0.4, 0.7] {
                    grid.push((DVector::from_column_slice(&[zi, zj]), t));
                }
            }
        }
        let l = hjb_residual_loss(&grid, &policy.value_net, &policy.model, &graph, &policy.config).unwrap();
        println!("grid residual mse = {l:.4}");
    }

    let t_grid = [0.25, 0.5];
    let ps = riccati(&a, &m, &q, gamma, &t_grid);
    for (t, p) in t_grid.iter().zip(&ps) {
        // F_ric = (1/gamma) R^{-1} B^T P (1x2)
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 0.4]);
        let f_ric = (b.transpose() * p) / gamma;
        // F_net by least squares on probe grid: u = c - F z
        let mut rows = Vec::new();
        let mut us = Vec::new();
        for zi in [-1.0f64, -0.5, 0.0, 0.5, 1.0] {
            for zj in [-1.0f64, -0.5, 0.0, 0.5, 1.0] {
                let z = DVector::from_column_slice(&[zi, zj]);
                let u = optimal_control(&policy, &graph, &z, *t).unwrap();
                rows.push([1.0, zi, zj]);
                us.push(u[0]);
            }
        }
        let x = DMatrix::from_fn(rows.len(), 3, |r, c| rows[r][c]);
        let y = DVector::from_column_slice(&us);
        let beta = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * y;
        let f_net = [-beta[1], -beta[2]];
        // local Jacobian probe at the origin via finite differences of u*
        let h = 0.05;
        let mut f_local = [0.0; 2];
        for j in 0..2 {
            let mut zp = DVector::zeros(2);
            let mut zm = DVector::zeros(2);
            zp[j] = h;
            zm[j] = -h;
            let up = optimal_control(&policy, &graph, &zp, *t).unwrap()[0];
            let um = optimal_control(&policy, &graph, &zm, *t).unwrap()[0];
            f_local[j] = -(up - um) / (2.0 * h);
        }
        println!("  local-jacobian probe: F = [{:.4}, {:.4}]", f_local[0], f_local[1]);
        let err = ((f_net[0] - f_ric[(0, 0)]).powi(2) + (f_net[1] - f_ric[(0, 1)]).powi(2)).sqrt()
            / (f_ric[(0, 0)].powi(2) + f_ric[(0, 1)].powi(2)).sqrt();
        println!(
            "t={t}: F_ric = [{:.4}, {:.4}]  F_net = [{:.4}, {:.4}]  rel err {:.3}",
            f_ric[(0, 0)], f_ric[(0, 1)], f_net[0], f_net[1], err
        );
    }
}
