//! Minimal differentiable feed-forward stack: affine layers with softplus
//! hidden activations (twice continuously differentiable, so the diffusion
//! term of the value-function residual stays well defined), exact input
//! gradients and Hessian quadratic forms, Hessian-trace estimators, and an
//! Adam optimizer.
//!
//! The forward and reverse passes are generic over the jet scalars in
//! [`jet`]; seeding the input with a direction turns the same two passes
//! into machinery for directional first and second derivatives and their
//! parameter gradients, which is everything the value-function training
//! loop needs.

pub mod jet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use jet::{Ad, Dual, Jet2};

/// Feed-forward network with softplus hidden layers and an affine output.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffMlp {
    layer_dims: Vec<usize>,
    /// Row-major `out x in` weight matrix per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// How to evaluate the Hessian trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum HessianMode {
    /// Coordinate sweep: one second-order pass per input dimension.
    Exact,
    /// Rademacher probe average with `probes` samples.
    Hutchinson { probes: usize, seed: u64 },
}

impl DiffMlp {
    /// Glorot-uniform initialization, seeded.
    pub fn new(layer_dims: &[usize], seed: u64) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("invalid layer dims {layer_dims:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_dims.len() - 1 {
            let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        Ok(DiffMlp {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    /// Zero the output layer, making the network the constant zero map at
    /// initialization while hidden features stay random.
    pub fn zero_last_layer(&mut self) {
        let last = self.weights.len() - 1;
        self.weights[last].iter_mut().for_each(|w| *w = 0.0);
        self.biases[last].iter_mut().for_each(|b| *b = 0.0);
    }

    pub fn in_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Flatten parameters as [W0, b0, W1, b1, ...].
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in 0..self.weights.len() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Data(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("non-finite network parameter".to_string()));
        }
        let mut offset = 0;
        for l in 0..self.weights.len() {
            let w_len = self.weights[l].len();
            self.weights[l].copy_from_slice(&params[offset..offset + w_len]);
            offset += w_len;
            let b_len = self.biases[l].len();
            self.biases[l].copy_from_slice(&params[offset..offset + b_len]);
            offset += b_len;
        }
        Ok(())
    }

    pub fn assert_finite(&self) -> Result<()> {
        let bad = self
            .weights
            .iter()
            .chain(self.biases.iter())
            .flat_map(|v| v.iter())
            .any(|p| !p.is_finite());
        if bad {
            return Err(Error::Numeric("network parameters are non-finite".to_string()));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.in_dim() {
            return Err(Error::Data(format!(
                "input dim {} vs network in_dim {}",
                x.len(),
                self.in_dim()
            )));
        }
        Ok(())
    }

    /// Forward pass keeping pre-activations and activations for the
    /// reverse pass.
    fn forward_tape<S: Ad>(&self, x: &[S]) -> Tape<S> {
        let layers = self.weights.len();
        let mut acts: Vec<Vec<S>> = Vec::with_capacity(layers + 1);
        let mut pres: Vec<Vec<S>> = Vec::with_capacity(layers);
        acts.push(x.to_vec());
        for l in 0..layers {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let w = &self.weights[l];
            let mut pre: Vec<S> = Vec::with_capacity(n_out);
            for i in 0..n_out {
                let row = &w[i * n_in..(i + 1) * n_in];
                let mut acc = S::from_f64(self.biases[l][i]);
                for (j, wij) in row.iter().enumerate() {
                    acc = acc + acts[l][j].scale(*wij);
                }
                pre.push(acc);
            }
            let act: Vec<S> = if l < layers - 1 {
                pre.iter().map(|p| p.softplus()).collect()
            } else {
                pre.clone()
            };
            pres.push(pre);
            acts.push(act);
        }
        Tape { pres, acts }
    }

    /// Reverse pass from an output cotangent. Returns flat parameter
    /// adjoints (when requested) and the input adjoint.
    fn backward_tape<S: Ad>(
        &self,
        tape: &Tape<S>,
        cotangent: &[S],
        want_params: bool,
    ) -> (Option<Vec<S>>, Vec<S>) {
        let layers = self.weights.len();
        let mut param_grads = if want_params {
            Some(vec![S::zero(); self.param_count()])
        } else {
            None
        };
        // Flat offsets of each layer's weight block.
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.weights[l].len() + self.biases[l].len();
        }

        let mut delta: Vec<S> = cotangent.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            // delta currently holds d(output)/d(pre[l]).
            if let Some(pg) = param_grads.as_mut() {
                let base = offsets[l];
                for i in 0..n_out {
                    let di = delta[i];
                    let w_row = base + i * n_in;
                    for j in 0..n_in {
                        pg[w_row + j] = pg[w_row + j] + di * tape.acts[l][j];
                    }
                    pg[base + n_in * n_out + i] = pg[base + n_in * n_out + i] + di;
                }
            }
            let w = &self.weights[l];
            let mut prev = vec![S::zero(); n_in];
            for i in 0..n_out {
                let di = delta[i];
                let row = &w[i * n_in..(i + 1) * n_in];
                for (j, wij) in row.iter().enumerate() {
                    prev[j] = prev[j] + di.scale(*wij);
                }
            }
            if l > 0 {
                // Chain through the softplus of the previous layer.
                for (j, p) in prev.iter_mut().enumerate() {
                    *p = *p * tape.pres[l - 1][j].sigmoid();
                }
            }
            delta = prev;
        }
        (param_grads, delta)
    }

    /// Plain forward evaluation.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let tape = self.forward_tape::<f64>(x);
        Ok(tape.acts.last().unwrap().clone())
    }

    /// Forward for scalar-output networks.
    pub fn forward_scalar(&self, x: &[f64]) -> Result<f64> {
        if self.out_dim() != 1 {
            return Err(Error::Data(format!("output dim {} is not scalar", self.out_dim())));
        }
        Ok(self.forward(x)?[0])
    }

    /// Exact gradient of the scalar output with respect to the input.
    pub fn grad_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_and_grad_input(x)?.1)
    }

    /// Scalar output and its input gradient in one reverse pass.
    pub fn value_and_grad_input(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        if self.out_dim() != 1 {
            return Err(Error::Data(format!("output dim {} is not scalar", self.out_dim())));
        }
        let tape = self.forward_tape::<f64>(x);
        let value = tape.acts.last().unwrap()[0];
        let (_, grad) = self.backward_tape::<f64>(&tape, &[1.0], false);
        Ok((value, grad))
    }

    /// Scalar output value and its flat parameter gradient.
    pub fn value_and_grad_params(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        if self.out_dim() != 1 {
            return Err(Error::Data(format!("output dim {} is not scalar", self.out_dim())));
        }
        let tape = self.forward_tape::<f64>(x);
        let value = tape.acts.last().unwrap()[0];
        let (pg, _) = self.backward_tape::<f64>(&tape, &[1.0], true);
        Ok((value, pg.unwrap()))
    }

    /// Vector-Jacobian product: for output cotangent c, the flat parameter
    /// gradient and input gradient of `c . output`.
    pub fn vjp(&self, x: &[f64], cotangent: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(x)?;
        if cotangent.len() != self.out_dim() {
            return Err(Error::Data(format!(
                "cotangent dim {} vs output dim {}",
                cotangent.len(),
                self.out_dim()
            )));
        }
        let tape = self.forward_tape::<f64>(x);
        let (pg, ig) = self.backward_tape::<f64>(&tape, cotangent, true);
        Ok((pg.unwrap(), ig))
    }

    /// Hessian-vector product `H v` of the scalar output at x, plus the
    /// plain gradient, from one dual-valued forward/reverse pair.
    pub fn hvp_input(&self, x: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_input(x)?;
        if v.len() != self.in_dim() {
            return Err(Error::Data("direction dim mismatch".to_string()));
        }
        let seeded: Vec<Dual> = x.iter().zip(v).map(|(&xv, &dv)| Dual::new(xv, dv)).collect();
        let tape = self.forward_tape::<Dual>(&seeded);
        let (_, grad) = self.backward_tape::<Dual>(&tape, &[Dual::new(1.0, 0.0)], false);
        let plain = grad.iter().map(|g| g.v).collect();
        let hv = grad.iter().map(|g| g.d).collect();
        Ok((plain, hv))
    }

    /// Second directional derivative `v^T H v` of the scalar output,
    /// forward-only via a second-order jet.
    pub fn directional_second(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let seeded: Vec<Jet2> = x.iter().zip(v).map(|(&xv, &dv)| Jet2::new(xv, dv, 0.0)).collect();
        let tape = self.forward_tape::<Jet2>(&seeded);
        Ok(tape.acts.last().unwrap()[0].second())
    }

    /// Parameter gradient of the directional derivative `grad(x) . w`, plus
    /// the directional derivative itself and the plain parameter gradient
    /// of the output: one dual forward/reverse pair.
    pub fn grad_params_of_directional_grad(
        &self,
        x: &[f64],
        w: &[f64],
    ) -> Result<DirectionalGradPack> {
        self.check_input(x)?;
        let seeded: Vec<Dual> = x.iter().zip(w).map(|(&xv, &dv)| Dual::new(xv, dv)).collect();
        let tape = self.forward_tape::<Dual>(&seeded);
        let out = tape.acts.last().unwrap()[0];
        let (pg, ig) = self.backward_tape::<Dual>(&tape, &[Dual::new(1.0, 0.0)], true);
        let pg = pg.unwrap();
        Ok(DirectionalGradPack {
            value: out.v,
            dir_grad: out.d,
            grad_input: ig.iter().map(|g| g.v).collect(),
            param_grad_value: pg.iter().map(|g| g.v).collect(),
            param_grad_dir: pg.iter().map(|g| g.d).collect(),
        })
    }

    /// `v^T H v` and its parameter gradient from one second-order
    /// forward/reverse pair.
    pub fn grad_params_of_directional_second(&self, x: &[f64], v: &[f64]) -> Result<SecondPack> {
        self.check_input(x)?;
        let seeded: Vec<Jet2> = x.iter().zip(v).map(|(&xv, &dv)| Jet2::new(xv, dv, 0.0)).collect();
        let tape = self.forward_tape::<Jet2>(&seeded);
        let out = tape.acts.last().unwrap()[0];
        let (pg, _) = self.backward_tape::<Jet2>(&tape, &[Jet2::new(1.0, 0.0, 0.0)], true);
        let pg = pg.unwrap();
        Ok(SecondPack {
            quadratic: out.second(),
            param_grad_quadratic: pg.iter().map(|g| g.second()).collect(),
        })
    }

    /// Trace of the Hessian of the scalar output with respect to the input.
    pub fn hessian_trace(&self, x: &[f64], mode: HessianMode) -> Result<f64> {
        match mode {
            HessianMode::Exact => {
                let n = self.in_dim();
                let mut total = 0.0;
                let mut v = vec![0.0; n];
                for i in 0..n {
                    v[i] = 1.0;
                    total += self.directional_second(x, &v)?;
                    v[i] = 0.0;
                }
                Ok(total)
            }
            HessianMode::Hutchinson { probes, seed } => {
                Ok(self.hutchinson_trace_with_se(x, probes, seed)?.0)
            }
        }
    }

    /// Hutchinson estimate of the Hessian trace with its standard error.
    pub fn hutchinson_trace_with_se(&self, x: &[f64], probes: usize, seed: u64) -> Result<(f64, f64)> {
        if probes == 0 {
            return Err(Error::Config("hutchinson needs at least one probe".to_string()));
        }
        let n = self.in_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut v = vec![0.0; n];
        for _ in 0..probes {
            for vi in v.iter_mut() {
                *vi = if rng.random::<bool>() { 1.0 } else { -1.0 };
            }
            let q = self.directional_second(x, &v)?;
            sum += q;
            sum_sq += q * q;
        }
        let mean = sum / probes as f64;
        let var = (sum_sq / probes as f64 - mean * mean).max(0.0);
        let se = (var / probes as f64).sqrt();
        Ok((mean, se))
    }
}

struct Tape<S> {
    pres: Vec<Vec<S>>,
    acts: Vec<Vec<S>>,
}

/// Outputs of [`DiffMlp::grad_params_of_directional_grad`].
pub struct DirectionalGradPack {
    /// phi(x)
    pub value: f64,
    /// grad(x) . w
    pub dir_grad: f64,
    /// grad(x)
    pub grad_input: Vec<f64>,
    /// d phi / d params
    pub param_grad_value: Vec<f64>,
    /// d (grad . w) / d params
    pub param_grad_dir: Vec<f64>,
}

/// Outputs of [`DiffMlp::grad_params_of_directional_second`].
pub struct SecondPack {
    /// v^T H v
    pub quadratic: f64,
    /// d (v^T H v) / d params
    pub param_grad_quadratic: Vec<f64>,
}

/// Adam optimizer state over a flat parameter vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub lr: f64,
}

impl AdamState {
    pub fn new(param_count: usize, lr: f64) -> Self {
        AdamState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lr,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Data(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let b1t = 1.0 - state.beta1.powi(state.step as i32);
    let b2t = 1.0 - state.beta2.powi(state.step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / b1t;
        let v_hat = state.v[i] / b2t;
        params[i] -= state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seeded_input(dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
    }

    /// Independent forward implementation used as the dual-route oracle.
    fn forward_oracle(net: &DiffMlp, x: &[f64]) -> Vec<f64> {
        let params = net.params_flat();
        let dims = net.layer_dims().to_vec();
        let mut offset = 0;
        let mut a = x.to_vec();
        for l in 0..dims.len() - 1 {
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let w = &params[offset..offset + n_in * n_out];
            offset += n_in * n_out;
            let b = &params[offset..offset + n_out];
            offset += n_out;
            let mut out = vec![0.0; n_out];
            for i in 0..n_out {
                let mut acc = b[i];
                for j in 0..n_in {
                    acc += w[i * n_in + j] * a[j];
                }
                out[i] = acc;
            }
            if l < dims.len() - 2 {
                for o in out.iter_mut() {
                    *o = jet::softplus_f64(*o);
                }
            }
            a = out;
        }
        a
    }

    #[test]
    fn forward_matches_independent_implementation() {
        for (arch, seed) in [(vec![3, 8, 6, 1], 1u64), (vec![5, 16, 1], 2), (vec![2, 4, 4, 2], 3)] {
            let net = DiffMlp::new(&arch, seed).unwrap();
            for trial in 0..20 {
                let x = seeded_input(arch[0], 100 + trial);
                let got = net.forward(&x).unwrap();
                let want = forward_oracle(&net, &x);
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() < 1e-12, "arch {arch:?}: {g} vs {w}");
                }
            }
        }
    }

    #[test]
    fn affine_output_net_hand_case() {
        // No hidden layer: phi(z) = w^T z + b.
        let mut net = DiffMlp::new(&[3, 1], 7).unwrap();
        net.set_params_flat(&[0.5, -1.0, 2.0, 0.25]).unwrap();
        let x = [1.0, 2.0, 3.0];
        let y = net.forward_scalar(&x).unwrap();
        assert!((y - (0.5 - 2.0 + 6.0 + 0.25)).abs() < 1e-15);
        let g = net.grad_input(&x).unwrap();
        assert_eq!(g, vec![0.5, -1.0, 2.0]);
        // Affine -> zero Hessian trace, exactly.
        assert_eq!(net.hessian_trace(&x, HessianMode::Exact).unwrap(), 0.0);
    }

    #[test]
    fn zero_output_weights_give_zero() {
        let mut net = DiffMlp::new(&[2, 4, 1], 7).unwrap();
        let mut params = net.params_flat();
        let n_first = 2 * 4 + 4;
        for p in params.iter_mut().skip(n_first) {
            *p = 0.0;
        }
        net.set_params_flat(&params).unwrap();
        assert_eq!(net.forward_scalar(&[0.3, -0.7]).unwrap(), 0.0);
    }

    #[test]
    fn softplus_unit_gradient_at_zero() {
        // Single-unit chain: phi(x) = softplus(x), d/dx at 0 = sigma(0) = 0.5.
        let mut net = DiffMlp::new(&[1, 1, 1], 7).unwrap();
        net.set_params_flat(&[1.0, 0.0, 1.0, 0.0]).unwrap();
        let g = net.grad_input(&[0.0]).unwrap();
        assert!((g[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn grad_input_matches_finite_differences() {
        for (arch, seed) in [(vec![3, 8, 6, 1], 11u64), (vec![5, 16, 1], 12), (vec![2, 4, 4, 1], 13)] {
            let net = DiffMlp::new(&arch, seed).unwrap();
            for trial in 0..40 {
                let x = seeded_input(arch[0], 500 + trial);
                let grad = net.grad_input(&x).unwrap();
                let h = 1e-5;
                for i in 0..arch[0] {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (net.forward_scalar(&xp).unwrap() - net.forward_scalar(&xm).unwrap())
                        / (2.0 * h);
                    let denom = fd.abs().max(1e-3);
                    assert!(
                        (grad[i] - fd).abs() / denom < 1e-4,
                        "arch {arch:?} trial {trial} dim {i}: {} vs {fd}",
                        grad[i]
                    );
                }
            }
        }
    }

    #[test]
    fn param_grads_match_finite_differences() {
        let arch = [3usize, 6, 1];
        let net = DiffMlp::new(&arch, 21).unwrap();
        let x = seeded_input(3, 900);
        let (_, pg) = net.value_and_grad_params(&x).unwrap();
        let params = net.params_flat();
        let h = 1e-6;
        for idx in [0usize, 5, 10, 17, params.len() - 1] {
            let mut pp = params.clone();
            let mut pm = params.clone();
            pp[idx] += h;
            pm[idx] -= h;
            let mut np = net.clone();
            np.set_params_flat(&pp).unwrap();
            let mut nm = net.clone();
            nm.set_params_flat(&pm).unwrap();
            let fd = (np.forward_scalar(&x).unwrap() - nm.forward_scalar(&x).unwrap()) / (2.0 * h);
            assert!(
                (pg[idx] - fd).abs() < 1e-6 * (1.0 + fd.abs()),
                "param {idx}: {} vs {fd}",
                pg[idx]
            );
        }
    }

    #[test]
    fn hessian_trace_exact_matches_finite_differences() {
        for (arch, seed) in [(vec![3, 8, 6, 1], 31u64), (vec![4, 10, 1], 32), (vec![2, 4, 4, 1], 33)] {
            let net = DiffMlp::new(&arch, seed).unwrap();
            for trial in 0..25 {
                let x = seeded_input(arch[0], 700 + trial);
                let got = net.hessian_trace(&x, HessianMode::Exact).unwrap();
                let h = 1e-4;
                let f0 = net.forward_scalar(&x).unwrap();
                let mut fd = 0.0;
                for i in 0..arch[0] {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    fd += (net.forward_scalar(&xp).unwrap() - 2.0 * f0
                        + net.forward_scalar(&xm).unwrap())
                        / (h * h);
                }
                let denom = fd.abs().max(1e-2);
                assert!(
                    (got - fd).abs() / denom < 1e-3,
                    "arch {arch:?} trial {trial}: {got} vs {fd}"
                );
            }
        }
    }

    #[test]
    fn hutchinson_agrees_with_exact_within_three_standard_errors() {
        let net = DiffMlp::new(&[6, 12, 8, 1], 41).unwrap();
        let x = seeded_input(6, 808);
        let exact = net.hessian_trace(&x, HessianMode::Exact).unwrap();
        let (est, se) = net.hutchinson_trace_with_se(&x, 10_000, 99).unwrap();
        assert!(
            (est - exact).abs() <= 3.0 * se.max(1e-12),
            "hutchinson {est} vs exact {exact}, se {se}"
        );
    }

    #[test]
    fn hvp_matches_hessian_columns() {
        let net = DiffMlp::new(&[4, 9, 1], 51).unwrap();
        let x = seeded_input(4, 246);
        // Assemble H columns via HVP with basis vectors, compare with
        // the quadratic form along random directions.
        let mut h_cols = Vec::new();
        for i in 0..4 {
            let mut e = vec![0.0; 4];
            e[i] = 1.0;
            let (_, hv) = net.hvp_input(&x, &e).unwrap();
            h_cols.push(hv);
        }
        let v = seeded_input(4, 135);
        let quad = net.directional_second(&x, &v).unwrap();
        let mut via_cols = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                via_cols += v[i] * h_cols[j][i] * v[j];
            }
        }
        assert!((quad - via_cols).abs() < 1e-10, "{quad} vs {via_cols}");
    }

    #[test]
    fn directional_grad_param_pack_consistency() {
        let net = DiffMlp::new(&[3, 7, 1], 61).unwrap();
        let x = seeded_input(3, 31);
        let w = seeded_input(3, 32);
        let pack = net.grad_params_of_directional_grad(&x, &w).unwrap();

        // dir_grad must equal grad . w
        let grad = net.grad_input(&x).unwrap();
        let dot: f64 = grad.iter().zip(&w).map(|(a, b)| a * b).sum();
        assert!((pack.dir_grad - dot).abs() < 1e-12);

        // parameter gradient of (grad . w) against finite differences
        let params = net.params_flat();
        let h = 1e-6;
        for idx in [0usize, 7, 13, params.len() - 1] {
            let mut pp = params.clone();
            let mut pm = params.clone();
            pp[idx] += h;
            pm[idx] -= h;
            let mut np = net.clone();
            np.set_params_flat(&pp).unwrap();
            let mut nm = net.clone();
            nm.set_params_flat(&pm).unwrap();
            let f = |n: &DiffMlp| -> f64 {
                n.grad_input(&x).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum()
            };
            let fd = (f(&np) - f(&nm)) / (2.0 * h);
            assert!(
                (pack.param_grad_dir[idx] - fd).abs() < 1e-5 * (1.0 + fd.abs()),
                "param {idx}: {} vs {fd}",
                pack.param_grad_dir[idx]
            );
        }
    }

    #[test]
    fn directional_second_param_pack_consistency() {
        let net = DiffMlp::new(&[3, 7, 1], 71).unwrap();
        let x = seeded_input(3, 41);
        let v = seeded_input(3, 42);
        let pack = net.grad_params_of_directional_second(&x, &v).unwrap();
        assert!((pack.quadratic - net.directional_second(&x, &v).unwrap()).abs() < 1e-12);

        let params = net.params_flat();
        let h = 1e-5;
        for idx in [2usize, 9, 20, params.len() - 2] {
            let mut pp = params.clone();
            let mut pm = params.clone();
            pp[idx] += h;
            pm[idx] -= h;
            let mut np = net.clone();
            np.set_params_flat(&pp).unwrap();
            let mut nm = net.clone();
            nm.set_params_flat(&pm).unwrap();
            let fd = (np.directional_second(&x, &v).unwrap() - nm.directional_second(&x, &v).unwrap())
                / (2.0 * h);
            assert!(
                (pack.param_grad_quadratic[idx] - fd).abs() < 1e-4 * (1.0 + fd.abs()),
                "param {idx}: {} vs {fd}",
                pack.param_grad_quadratic[idx]
            );
        }
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let mut params = vec![1.0];
        let mut state = AdamState::new(1, 0.01);
        adam_step(&mut params, &[0.37], &mut state).unwrap();
        assert!(
            (params[0] - (1.0 - 0.01)).abs() < 1e-6,
            "first bias-corrected step should be ~ -lr*sign(g), got {}",
            params[0]
        );
    }

    #[test]
    fn adam_zero_gradient_freezes_params() {
        let mut params = vec![0.5, -0.25];
        let mut state = AdamState::new(2, 0.1);
        for _ in 0..50 {
            adam_step(&mut params, &[0.0, 0.0], &mut state).unwrap();
        }
        assert_eq!(params, vec![0.5, -0.25]);
    }

    #[test]
    fn adam_trajectory_matches_independent_oracle() {
        // Ten steps on two parameters against a from-scratch recurrence.
        let grads: Vec<[f64; 2]> = (0..10)
            .map(|i| [0.3 * (i as f64 * 0.7).sin() + 0.1, -0.2 * (i as f64 * 0.3).cos()])
            .collect();
        let mut params = vec![0.4, -0.9];
        let mut state = AdamState::new(2, 0.005);
        for g in &grads {
            adam_step(&mut params, g, &mut state).unwrap();
        }

        let (b1, b2, eps, lr) = (0.9, 0.999, 1e-8, 0.005);
        let mut p = [0.4, -0.9];
        let mut m = [0.0; 2];
        let mut v = [0.0; 2];
        for (t, g) in grads.iter().enumerate() {
            let step = (t + 1) as i32;
            for i in 0..2 {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / (1.0 - f64::powi(b1, step));
                let vh = v[i] / (1.0 - f64::powi(b2, step));
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        for i in 0..2 {
            assert!((params[i] - p[i]).abs() < 1e-10, "param {i}: {} vs {}", params[i], p[i]);
        }
    }

    #[test]
    fn initialization_is_deterministic() {
        let a = DiffMlp::new(&[4, 8, 1], 123).unwrap();
        let b = DiffMlp::new(&[4, 8, 1], 123).unwrap();
        assert_eq!(a.params_flat(), b.params_flat());
        let c = DiffMlp::new(&[4, 8, 1], 124).unwrap();
        assert_ne!(a.params_flat(), c.params_flat());
    }

    #[test]
    fn forward_finite_for_large_inputs() {
        let net = DiffMlp::new(&[2, 6, 1], 81).unwrap();
        for &x in &[-1e6, -1e3, 0.0, 1e3, 1e6] {
            let y = net.forward_scalar(&[x, -x]).unwrap();
            assert!(y.is_finite(), "forward({x}) = {y}");
        }
    }
}
