//! Differentiable-computation core: the lift/residual/project network, the
//! Gaussian policy head, hand-derived reverse-mode gradients, and Adam.
//!
//! The architecture is fixed to the family
//! `project ∘ block_K ∘ … ∘ block_1 ∘ Ξ(lift)` with
//! `block(x) = Ξ(x + Z_n(Ξ(…Ξ(Z_1(x))…)))`, so backprop is written out by
//! hand; the contract is agreement with central finite differences.

use rand::distributions::Uniform;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{compensated_log_price, MarketParams};
use crate::qlbs::QlbsPolicy;
use crate::rlop::RlopPolicy;
use crate::scalar::Scalar;

/// Network-wide activation Ξ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    fn apply<S: Scalar>(self, y: S) -> S {
        match self {
            Activation::Tanh => y.tanh(),
            Activation::Linear => y,
        }
    }

    /// Derivative at pre-activation `y`.
    #[inline]
    fn derivative<S: Scalar>(self, y: S) -> S {
        match self {
            Activation::Tanh => {
                let t = y.tanh();
                S::one() - t * t
            }
            Activation::Linear => S::one(),
        }
    }
}

/// Dense affine map, weights row-major `rows × cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine<S> {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<S>,
    pub b: Vec<S>,
}

impl<S: Scalar> Affine<S> {
    /// Weights uniform in `[−1/√fan_in, +1/√fan_in]`, biases zero.
    fn init<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = S::one() / S::from_usize_c(cols).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let w = (0..rows * cols).map(|_| rng.sample(&dist)).collect();
        Affine { rows, cols, w, b: vec![S::zero(); rows] }
    }

    fn zeros(rows: usize, cols: usize) -> Self {
        Affine { rows, cols, w: vec![S::zero(); rows * cols], b: vec![S::zero(); rows] }
    }

    fn apply(&self, x: &[S]) -> Vec<S> {
        debug_assert_eq!(x.len(), self.cols);
        let mut out = self.b.clone();
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let mut acc = S::zero();
            for (wi, xi) in row.iter().zip(x) {
                acc += *wi * *xi;
            }
            out[r] += acc;
        }
        out
    }

    /// Accumulate `g·xᵀ` into the weight grads and `g` into the bias grads;
    /// returns `Wᵀg`, the gradient with respect to the input.
    fn backward(&self, x: &[S], g: &[S], dw: &mut [S], db: &mut [S]) -> Vec<S> {
        let mut gx = vec![S::zero(); self.cols];
        for r in 0..self.rows {
            let gr = g[r];
            db[r] += gr;
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let drow = &mut dw[r * self.cols..(r + 1) * self.cols];
            for c in 0..self.cols {
                drow[c] += gr * x[c];
                gx[c] += row[c] * gr;
            }
        }
        gx
    }

    fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Architecture hyperparameters; the experiment defaults are latent dimension
/// 10 with two residual blocks of two affine transforms each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub blocks: usize,
    pub layers_per_block: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            input_dim: 8,
            latent_dim: 10,
            blocks: 2,
            layers_per_block: 2,
            output_dim: 1,
            activation: Activation::Tanh,
        }
    }
}

/// Lift/residual-blocks/project network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ResNet<S> {
    pub lift: Affine<S>,
    pub blocks: Vec<Vec<Affine<S>>>,
    pub project: Affine<S>,
    pub activation: Activation,
}

/// Intermediates of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<S> {
    input: Vec<S>,
    lift_y: Vec<S>,
    /// Activations entering each block; `acts[0]` is the lifted input,
    /// `acts[k]` the output of block `k`.
    acts: Vec<Vec<S>>,
    /// Per block: pre-activations `y_1..y_n` of its layers.
    block_ys: Vec<Vec<Vec<S>>>,
    /// Per block: post-activations `h_1..h_{n−1}` between its layers.
    block_hs: Vec<Vec<Vec<S>>>,
    /// Per block: the residual sum `input + y_n` before the final Ξ.
    block_sums: Vec<Vec<S>>,
    output: Vec<S>,
}

impl<S: Scalar> ForwardTrace<S> {
    pub fn output(&self) -> &[S] {
        &self.output
    }
}

impl<S: Scalar> ResNet<S> {
    /// Fresh network; draws weights in declaration order (lift, blocks by
    /// index, project), each matrix row-major.
    pub fn init<R: Rng + ?Sized>(cfg: &NetConfig, rng: &mut R) -> Self {
        let d = cfg.latent_dim;
        let lift = Affine::init(d, cfg.input_dim, rng);
        let blocks = (0..cfg.blocks)
            .map(|_| (0..cfg.layers_per_block).map(|_| Affine::init(d, d, rng)).collect())
            .collect();
        let project = Affine::init(cfg.output_dim, d, rng);
        ResNet { lift, blocks, project, activation: cfg.activation }
    }

    pub fn input_dim(&self) -> usize {
        self.lift.cols
    }

    pub fn output_dim(&self) -> usize {
        self.project.rows
    }

    /// Same shapes, all parameters zero; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        ResNet {
            lift: Affine::zeros(self.lift.rows, self.lift.cols),
            blocks: self
                .blocks
                .iter()
                .map(|b| b.iter().map(|a| Affine::zeros(a.rows, a.cols)).collect())
                .collect(),
            project: Affine::zeros(self.project.rows, self.project.cols),
            activation: self.activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.lift.param_count()
            + self.blocks.iter().flatten().map(Affine::param_count).sum::<usize>()
            + self.project.param_count()
    }

    /// Flatten parameters in the canonical order: lift (w then b), blocks in
    /// index order with each layer's w then b, project (w then b).
    pub fn to_flat(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.param_count());
        let mut push = |a: &Affine<S>| {
            out.extend_from_slice(&a.w);
            out.extend_from_slice(&a.b);
        };
        push(&self.lift);
        for block in &self.blocks {
            for layer in block {
                push(layer);
            }
        }
        push(&self.project);
        out
    }

    /// Inverse of [`to_flat`]; shapes must match.
    pub fn set_from_flat(&mut self, flat: &[S]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::DimensionMismatch { expected: self.param_count(), got: flat.len() });
        }
        let mut pos = 0usize;
        let pull = |a: &mut Affine<S>, pos: &mut usize| {
            let nw = a.w.len();
            let nb = a.b.len();
            a.w.copy_from_slice(&flat[*pos..*pos + nw]);
            *pos += nw;
            a.b.copy_from_slice(&flat[*pos..*pos + nb]);
            *pos += nb;
        };
        pull(&mut self.lift, &mut pos);
        for block in &mut self.blocks {
            for layer in block {
                pull(layer, &mut pos);
            }
        }
        pull(&mut self.project, &mut pos);
        Ok(())
    }

    /// Forward pass keeping intermediates for [`backward`](Self::backward).
    pub fn forward_trace(&self, features: &[S]) -> Result<ForwardTrace<S>> {
        if features.len() != self.lift.cols {
            return Err(Error::DimensionMismatch { expected: self.lift.cols, got: features.len() });
        }
        let act = self.activation;
        let lift_y = self.lift.apply(features);
        let a0: Vec<S> = lift_y.iter().map(|&y| act.apply(y)).collect();

        let mut acts = Vec::with_capacity(self.blocks.len() + 1);
        acts.push(a0);
        let mut block_ys = Vec::with_capacity(self.blocks.len());
        let mut block_hs = Vec::with_capacity(self.blocks.len());
        let mut block_sums = Vec::with_capacity(self.blocks.len());

        for block in &self.blocks {
            let a_in = acts.last().unwrap().clone();
            let n = block.len();
            let mut ys = Vec::with_capacity(n);
            let mut hs = Vec::with_capacity(n.saturating_sub(1));
            let mut h = a_in.clone();
            for (l, layer) in block.iter().enumerate() {
                let y = layer.apply(&h);
                if l + 1 < n {
                    h = y.iter().map(|&v| act.apply(v)).collect();
                    hs.push(h.clone());
                }
                ys.push(y);
            }
            let y_last = ys.last().unwrap();
            let sum: Vec<S> = a_in.iter().zip(y_last).map(|(&a, &y)| a + y).collect();
            let out: Vec<S> = sum.iter().map(|&v| act.apply(v)).collect();
            block_ys.push(ys);
            block_hs.push(hs);
            block_sums.push(sum);
            acts.push(out);
        }

        let output = self.project.apply(acts.last().unwrap());
        Ok(ForwardTrace { input: features.to_vec(), lift_y, acts, block_ys, block_hs, block_sums, output })
    }

    /// Plain forward pass.
    pub fn forward(&self, features: &[S]) -> Result<Vec<S>> {
        Ok(self.forward_trace(features)?.output)
    }

    /// Reverse-mode gradients of `upstreamᵀ·output` with respect to all
    /// parameters (flat, canonical order) and to the input features.
    pub fn backward(&self, trace: &ForwardTrace<S>, upstream: &[S]) -> Result<(Vec<S>, Vec<S>)> {
        if upstream.len() != self.project.rows {
            return Err(Error::DimensionMismatch { expected: self.project.rows, got: upstream.len() });
        }
        let act = self.activation;
        let mut grads = self.zeros_like();

        let a_last = trace.acts.last().unwrap();
        let mut g =
            self.project.backward(a_last, upstream, &mut grads.project.w, &mut grads.project.b);

        for (k, block) in self.blocks.iter().enumerate().rev() {
            let n = block.len();
            // through the closing Ξ of the residual sum
            let gs: Vec<S> = g
                .iter()
                .zip(&trace.block_sums[k])
                .map(|(&gi, &si)| gi * act.derivative(si))
                .collect();
            // down the affine chain
            let mut gy = gs.clone();
            for l in (0..n).rev() {
                let h_in: &[S] = if l == 0 { &trace.acts[k] } else { &trace.block_hs[k][l - 1] };
                let gb = &mut grads.blocks[k][l];
                let gh = block[l].backward(h_in, &gy, &mut gb.w, &mut gb.b);
                if l > 0 {
                    gy = gh
                        .iter()
                        .zip(&trace.block_ys[k][l - 1])
                        .map(|(&gi, &yi)| gi * act.derivative(yi))
                        .collect();
                } else {
                    gy = gh;
                }
            }
            // identity branch + chain branch
            g = gs.iter().zip(&gy).map(|(&a, &b)| a + b).collect();
        }

        // through the lift activation and affine
        let gy: Vec<S> =
            g.iter().zip(&trace.lift_y).map(|(&gi, &yi)| gi * act.derivative(yi)).collect();
        let g_input = self.lift.backward(&trace.input, &gy, &mut grads.lift.w, &mut grads.lift.b);

        Ok((grads.to_flat(), g_input))
    }
}

/// Numerically stable `ln(1 + e^z)`.
fn softplus<S: Scalar>(z: S) -> S {
    if z > S::zero() {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid<S: Scalar>(z: S) -> S {
    S::one() / (S::one() + (-z).exp())
}

/// Gaussian policy `N(μ(x), σ(x))` with two separate networks; the std head is
/// made strictly positive by `σ = softplus(z) + std_floor`.
#[derive(Debug, Clone)]
pub struct GaussianPolicy<S> {
    pub mean_net: ResNet<S>,
    pub std_net: ResNet<S>,
    pub std_floor: S,
}

/// Flat gradients of one score-function term for both policy networks.
#[derive(Debug, Clone)]
pub struct PolicyGrads<S> {
    pub mean: Vec<S>,
    pub std: Vec<S>,
}

impl<S: Scalar> GaussianPolicy<S> {
    /// Two fresh scalar-output networks drawn back to back (mean first).
    pub fn init<R: Rng + ?Sized>(cfg: &NetConfig, std_floor: S, rng: &mut R) -> Self {
        let mut head_cfg = *cfg;
        head_cfg.output_dim = 1;
        GaussianPolicy {
            mean_net: ResNet::init(&head_cfg, rng),
            std_net: ResNet::init(&head_cfg, rng),
            std_floor,
        }
    }

    /// `(μ, σ)` at `features`; rejects non-finite head outputs.
    pub fn mean_std(&self, features: &[S]) -> Result<(S, S)> {
        let mu = self.mean_net.forward(features)?[0];
        let z = self.std_net.forward(features)?[0];
        if !mu.is_finite() || !z.is_finite() {
            return Err(Error::NonFinite("policy head output"));
        }
        Ok((mu, softplus(z) + self.std_floor))
    }

    /// Deterministic action: the mean head.
    pub fn mean_action(&self, features: &[S]) -> Result<S> {
        Ok(self.mean_std(features)?.0)
    }

    /// Draw `a = μ + σ·Z` and return it with its log-density.
    pub fn sample_action<R: Rng + ?Sized>(&self, features: &[S], rng: &mut R) -> Result<(S, S)> {
        let (mu, sigma) = self.mean_std(features)?;
        let a = mu + sigma * S::standard_normal(rng);
        Ok((a, self.log_prob_given(mu, sigma, a)))
    }

    /// `log π(action | features)`.
    pub fn log_prob(&self, features: &[S], action: S) -> Result<S> {
        let (mu, sigma) = self.mean_std(features)?;
        Ok(self.log_prob_given(mu, sigma, action))
    }

    fn log_prob_given(&self, mu: S, sigma: S, action: S) -> S {
        let half = S::from_f64_c(0.5);
        let z = (action - mu) / sigma;
        -half * z * z - sigma.ln() - half * (S::PI() + S::PI()).ln()
    }

    /// Gradients of `advantage · log π(action | features)` with respect to the
    /// parameters of both networks (flat, canonical order each).
    pub fn log_prob_gradients(&self, features: &[S], action: S, advantage: S) -> Result<PolicyGrads<S>> {
        let mean_trace = self.mean_net.forward_trace(features)?;
        let std_trace = self.std_net.forward_trace(features)?;
        let mu = mean_trace.output[0];
        let z = std_trace.output[0];
        if !mu.is_finite() || !z.is_finite() {
            return Err(Error::NonFinite("policy head output"));
        }
        let sigma = softplus(z) + self.std_floor;

        let diff = action - mu;
        let inv_sig = S::one() / sigma;
        let dlogp_dmu = diff * inv_sig * inv_sig;
        let dlogp_dsigma = (diff * diff * inv_sig * inv_sig - S::one()) * inv_sig;
        let dlogp_dz = dlogp_dsigma * sigmoid(z);

        let (mean_grads, _) = self.mean_net.backward(&mean_trace, &[advantage * dlogp_dmu])?;
        let (std_grads, _) = self.std_net.backward(&std_trace, &[advantage * dlogp_dz])?;
        Ok(PolicyGrads { mean: mean_grads, std: std_grads })
    }
}

/// QLBS features `[X_t, t/T, r, μ, σ, T·dt, K, λ]`.
pub fn qlbs_features<S: Scalar>(t: usize, spot: S, params: &MarketParams<S>) -> [S; 8] {
    let x = compensated_log_price(params, t, spot).expect("positive spot");
    [
        x,
        S::from_usize_c(t) / S::from_usize_c(params.steps),
        params.r,
        params.mu,
        params.sigma,
        params.horizon(),
        params.strike,
        params.lambda,
    ]
}

/// RLOP features `[ln S_t, (i−t)/T, Π_t, r, μ, σ, K, ε]`.
pub fn rlop_features<S: Scalar>(
    t: usize,
    spot: S,
    pi: S,
    maturity: usize,
    params: &MarketParams<S>,
) -> [S; 8] {
    [
        spot.ln(),
        S::from_usize_c(maturity - t) / S::from_usize_c(params.steps),
        pi,
        params.r,
        params.mu,
        params.sigma,
        params.strike,
        params.epsilon,
    ]
}

impl<S: Scalar> QlbsPolicy<S> for GaussianPolicy<S> {
    fn action<R: Rng + ?Sized>(&self, t: usize, spot: S, params: &MarketParams<S>, rng: &mut R) -> S {
        let features = qlbs_features(t, spot, params);
        self.sample_action(&features, rng).expect("finite policy output").0
    }
}

impl<S: Scalar> RlopPolicy<S> for GaussianPolicy<S> {
    fn action<R: Rng + ?Sized>(
        &self,
        t: usize,
        spot: S,
        pi: S,
        maturity: usize,
        params: &MarketParams<S>,
        rng: &mut R,
    ) -> S {
        let features = rlop_features(t, spot, pi, maturity, params);
        self.sample_action(&features, rng).expect("finite policy output").0
    }
}

/// Adam accumulators for one parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState<S> {
    pub m: Vec<S>,
    pub v: Vec<S>,
    pub step: u64,
    pub lr: S,
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
}

impl<S: Scalar> AdamState<S> {
    /// Default hyperparameters: β₁=0.9, β₂=0.999, ε=1e−8.
    pub fn new(param_count: usize, lr: S) -> Self {
        AdamState {
            m: vec![S::zero(); param_count],
            v: vec![S::zero(); param_count],
            step: 0,
            lr,
            beta1: S::from_f64_c(0.9),
            beta2: S::from_f64_c(0.999),
            eps: S::from_f64_c(1e-8),
        }
    }
}

/// One bias-corrected Adam update of `net` along `grads` (minimization).
pub fn adam_step<S: Scalar>(net: &mut ResNet<S>, grads: &[S], state: &mut AdamState<S>) -> Result<()> {
    let n = net.param_count();
    if grads.len() != n || state.m.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: grads.len() });
    }
    state.step += 1;
    let one = S::one();
    let t = state.step as i32;
    let bc1 = one - state.beta1.powi(t);
    let bc2 = one - state.beta2.powi(t);
    let mut params = net.to_flat();
    for i in 0..n {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (one - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (one - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    net.set_from_flat(&params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn small_cfg(blocks: usize, latent: usize) -> NetConfig {
        NetConfig {
            input_dim: 8,
            latent_dim: latent,
            blocks,
            layers_per_block: 2,
            output_dim: 1,
            activation: Activation::Tanh,
        }
    }

    fn rand_features(rng: &mut ChaCha12Rng) -> [f64; 8] {
        let mut f = [0.0; 8];
        for v in &mut f {
            *v = rng.gen_range(-1.5..1.5);
        }
        f
    }

    /// Straight-line re-implementation of the forward pass with explicit
    /// loops, no shared code with `ResNet::forward`.
    fn hand_forward(net: &ResNet<f64>, x: &[f64]) -> Vec<f64> {
        let tanh = |v: &Vec<f64>| -> Vec<f64> { v.iter().map(|&y| y.tanh()).collect() };
        let affine = |a: &Affine<f64>, x: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; a.rows];
            for r in 0..a.rows {
                let mut acc = a.b[r];
                for c in 0..a.cols {
                    acc += a.w[r * a.cols + c] * x[c];
                }
                out[r] = acc;
            }
            out
        };
        let mut a = tanh(&affine(&net.lift, x));
        for block in &net.blocks {
            let mut h = a.clone();
            for (l, layer) in block.iter().enumerate() {
                let y = affine(layer, &h);
                h = if l + 1 < block.len() { tanh(&y) } else { y };
            }
            let sum: Vec<f64> = a.iter().zip(&h).map(|(&ai, &yi)| ai + yi).collect();
            a = tanh(&sum);
        }
        affine(&net.project, &a)
    }

    #[test]
    fn forward_matches_hand_rolled() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..20 {
            let net = ResNet::<f64>::init(&small_cfg(2, 10), &mut rng);
            let x = rand_features(&mut rng);
            let got = net.forward(&x).unwrap();
            let want = hand_forward(&net, &x);
            assert!((got[0] - want[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_blocks_reduce_to_activated_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut net = ResNet::<f64>::init(&small_cfg(2, 6), &mut rng);
        for block in &mut net.blocks {
            for layer in block {
                layer.w.iter_mut().for_each(|w| *w = 0.0);
                layer.b.iter_mut().for_each(|b| *b = 0.0);
            }
        }
        let x = rand_features(&mut rng);
        let got = net.forward(&x).unwrap()[0];

        // project(Ξ(Ξ(Ξ(lift_affine(x)))))
        let mut a = net.lift.apply(&x);
        a.iter_mut().for_each(|v| *v = v.tanh()); // lift activation
        a.iter_mut().for_each(|v| *v = v.tanh()); // block 1 residual Ξ
        a.iter_mut().for_each(|v| *v = v.tanh()); // block 2 residual Ξ
        let want = net.project.apply(&a)[0];
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn all_zero_params_output_project_bias() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut net = ResNet::<f64>::init(&small_cfg(2, 5), &mut rng);
        let zeros = vec![0.0; net.param_count()];
        net.set_from_flat(&zeros).unwrap();
        net.project.b[0] = 0.37;
        let x = rand_features(&mut rng);
        assert_eq!(net.forward(&x).unwrap()[0], 0.37);
    }

    #[test]
    fn flat_round_trip_and_shape_guards() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut net = ResNet::<f64>::init(&small_cfg(2, 10), &mut rng);
        let flat = net.to_flat();
        assert_eq!(flat.len(), net.param_count());
        let copy = net.clone();
        net.set_from_flat(&flat).unwrap();
        assert_eq!(net, copy);
        assert!(net.set_from_flat(&flat[1..]).is_err());
        assert!(net.forward(&[0.0; 7]).is_err());
    }

    /// Central finite difference of a scalar function of the flat parameters.
    fn fd_grad(net: &ResNet<f64>, x: &[f64], i: usize, h: f64) -> f64 {
        let mut n = net.clone();
        let mut flat = net.to_flat();
        let orig = flat[i];
        flat[i] = orig + h;
        n.set_from_flat(&flat).unwrap();
        let up = n.forward(x).unwrap()[0];
        flat[i] = orig - h;
        n.set_from_flat(&flat).unwrap();
        let down = n.forward(x).unwrap()[0];
        (up - down) / (2.0 * h)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for (blocks, latent) in [(1usize, 4usize), (2, 10)] {
            let net = ResNet::<f64>::init(&small_cfg(blocks, latent), &mut rng);
            let x = rand_features(&mut rng);
            let trace = net.forward_trace(&x).unwrap();
            let (grads, _) = net.backward(&trace, &[1.0]).unwrap();
            for i in (0..net.param_count()).step_by(7) {
                let fd = fd_grad(&net, &x, i, 1e-5);
                assert!(rel_err(grads[i], fd) < 1e-4, "param {i}: analytic {} fd {fd}", grads[i]);
            }
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let net = ResNet::<f64>::init(&small_cfg(2, 10), &mut rng);
        let x = rand_features(&mut rng);
        let trace = net.forward_trace(&x).unwrap();
        let (_, gx) = net.backward(&trace, &[1.0]).unwrap();
        for i in 0..8 {
            let h = 1e-5;
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let fd = (net.forward(&xp).unwrap()[0] - net.forward(&xm).unwrap()[0]) / (2.0 * h);
            assert!(rel_err(gx[i], fd) < 1e-4);
        }
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let net = ResNet::<f64>::init(&small_cfg(2, 10), &mut rng);
        let x = rand_features(&mut rng);
        let trace = net.forward_trace(&x).unwrap();
        let (grads, gx) = net.backward(&trace, &[0.0]).unwrap();
        assert!(grads.iter().all(|&g| g == 0.0));
        assert!(gx.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_single_affine_gradient_closed_form() {
        // no blocks + linear activation: out = W_p(W_l x + b_l) + b_p, so
        // dW_p = a, db_p = 1, dW_l = w_pᵀ xᵀ, db_l = w_pᵀ
        let cfg = NetConfig {
            input_dim: 3,
            latent_dim: 2,
            blocks: 0,
            layers_per_block: 2,
            output_dim: 1,
            activation: Activation::Linear,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let net = ResNet::<f64>::init(&cfg, &mut rng);
        let x = [0.3, -0.7, 1.1];
        let trace = net.forward_trace(&x).unwrap();
        let (grads, _) = net.backward(&trace, &[1.0]).unwrap();

        let a = net.lift.apply(&x);
        let wp = &net.project.w;
        let mut want = Vec::new();
        for r in 0..2 {
            for c in 0..3 {
                want.push(wp[r] * x[c]); // lift weights
            }
        }
        want.extend_from_slice(&[wp[0], wp[1]]); // lift biases
        want.extend_from_slice(&[a[0], a[1]]); // project weights
        want.push(1.0); // project bias
        assert_eq!(grads.len(), want.len());
        for (g, w) in grads.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_continuity_toward_zero_weights() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let base = ResNet::<f64>::init(&small_cfg(2, 8), &mut rng);
        let x = rand_features(&mut rng);

        let scaled = |eps: f64| {
            let mut n = base.clone();
            for block in &mut n.blocks {
                for layer in block {
                    layer.w.iter_mut().for_each(|w| *w *= eps);
                    layer.b.iter_mut().for_each(|b| *b *= eps);
                }
            }
            n.forward(&x).unwrap()[0]
        };
        let limit = scaled(0.0);
        let mut prev = (scaled(1e-2) - limit).abs();
        for eps in [1e-4, 1e-6] {
            let gap = (scaled(eps) - limit).abs();
            assert!(gap <= prev);
            prev = gap;
        }
    }

    #[test]
    fn sample_action_moments() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let policy = GaussianPolicy::<f64>::init(&small_cfg(2, 10), 1e-3, &mut rng);
        let x = rand_features(&mut rng);
        let (mu, sigma) = policy.mean_std(&x).unwrap();
        assert!(sigma > 0.0);

        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let (a, _) = policy.sample_action(&x, &mut rng).unwrap();
            sum += a;
            sumsq += a * a;
        }
        let m = sum / n as f64;
        let sd = (sumsq / n as f64 - m * m).sqrt();
        let se_m = sigma / (n as f64).sqrt();
        assert!((m - mu).abs() < 3.0 * se_m);
        assert!((sd - sigma).abs() < 3.0 * sigma * (0.5 / n as f64).sqrt());
    }

    #[test]
    fn log_prob_at_mean() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let policy = GaussianPolicy::<f64>::init(&small_cfg(2, 10), 1e-3, &mut rng);
        let x = rand_features(&mut rng);
        let (mu, sigma) = policy.mean_std(&x).unwrap();
        let lp = policy.log_prob(&x, mu).unwrap();
        let want = -sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((lp - want).abs() < 1e-12);
    }

    #[test]
    fn score_gradients_vanish_where_expected() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let policy = GaussianPolicy::<f64>::init(&small_cfg(2, 10), 1e-3, &mut rng);
        let x = rand_features(&mut rng);

        // advantage 0 → all-zero grads
        let g = policy.log_prob_gradients(&x, 0.8, 0.0).unwrap();
        assert!(g.mean.iter().all(|&v| v == 0.0));
        assert!(g.std.iter().all(|&v| v == 0.0));

        // action at the mean → mean-net grads vanish, std grads don't
        let (mu, _) = policy.mean_std(&x).unwrap();
        let g = policy.log_prob_gradients(&x, mu, 1.0).unwrap();
        assert!(g.mean.iter().all(|&v| v == 0.0));
        assert!(g.std.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn score_gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let policy = GaussianPolicy::<f64>::init(&small_cfg(2, 10), 1e-3, &mut rng);
        let x = rand_features(&mut rng);
        let action = 0.42;
        let advantage = -1.3;
        let grads = policy.log_prob_gradients(&x, action, advantage).unwrap();

        let h = 1e-5;
        let fd_on = |which_mean: bool, i: usize| -> f64 {
            let mut p = policy.clone();
            let net = if which_mean { &mut p.mean_net } else { &mut p.std_net };
            let mut flat = net.to_flat();
            let orig = flat[i];
            flat[i] = orig + h;
            net.set_from_flat(&flat).unwrap();
            let up = advantage * p.log_prob(&x, action).unwrap();
            let net = if which_mean { &mut p.mean_net } else { &mut p.std_net };
            flat[i] = orig - h;
            net.set_from_flat(&flat).unwrap();
            let down = advantage * p.log_prob(&x, action).unwrap();
            (up - down) / (2.0 * h)
        };
        for i in (0..policy.mean_net.param_count()).step_by(13) {
            let fd = fd_on(true, i);
            assert!(rel_err(grads.mean[i], fd) < 1e-4, "mean param {i}");
        }
        for i in (0..policy.std_net.param_count()).step_by(13) {
            let fd = fd_on(false, i);
            assert!(rel_err(grads.std[i], fd) < 1e-4, "std param {i}");
        }
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut rng = ChaCha12Rng::seed_from_u64(14);
        let mut net = ResNet::<f64>::init(&small_cfg(1, 4), &mut rng);
        let before = net.to_flat();
        let zeros = vec![0.0; net.param_count()];
        let mut state = AdamState::new(net.param_count(), 1e-4);
        for _ in 0..10 {
            adam_step(&mut net, &zeros, &mut state).unwrap();
        }
        assert_eq!(net.to_flat(), before);
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        let mut rng = ChaCha12Rng::seed_from_u64(15);
        let mut net = ResNet::<f64>::init(&small_cfg(1, 4), &mut rng);
        let before = net.to_flat();
        let n = net.param_count();
        let mut grads = vec![0.0; n];
        for (i, g) in grads.iter_mut().enumerate() {
            *g = if i % 2 == 0 { 0.5 } else { -2.0 };
        }
        let lr = 1e-4;
        let mut state = AdamState::new(n, lr);
        adam_step(&mut net, &grads, &mut state).unwrap();
        let after = net.to_flat();
        for i in 0..n {
            let step = after[i] - before[i];
            let want = -lr * grads[i].signum();
            assert!((step - want).abs() < 1e-8, "i={i} step={step}");
        }
    }

    #[test]
    fn adam_descends_convex_quadratic() {
        // f(w) = |w − w*|² on the flat params of a tiny linear net
        let cfg = NetConfig {
            input_dim: 2,
            latent_dim: 2,
            blocks: 0,
            layers_per_block: 1,
            output_dim: 1,
            activation: Activation::Linear,
        };
        let mut rng = ChaCha12Rng::seed_from_u64(16);
        let mut net = ResNet::<f64>::init(&cfg, &mut rng);
        let n = net.param_count();
        let target: Vec<f64> = (0..n).map(|i| (i as f64) * 0.1 - 0.3).collect();
        let mut state = AdamState::new(n, 0.05);
        let f = |w: &[f64]| -> f64 { w.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum() };
        let start = f(&net.to_flat());
        for _ in 0..200 {
            let w = net.to_flat();
            let grads: Vec<f64> = w.iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
            adam_step(&mut net, &grads, &mut state).unwrap();
        }
        let end = f(&net.to_flat());
        // steps stay O(lr) near the optimum, so expect convergence to within
        // a few lr of the target, not monotone descent
        assert!(end < 0.05 * start, "start {start} end {end}");
        assert!(end < 0.02);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn std_head_strictly_positive(seed in 0u64..500, scale in 0.1f64..50.0) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let policy = GaussianPolicy::<f64>::init(&small_cfg(2, 10), 1e-3, &mut rng);
            let mut x = rand_features(&mut rng);
            x.iter_mut().for_each(|v| *v *= scale);
            let (_, sigma) = policy.mean_std(&x).unwrap();
            prop_assert!(sigma >= 1e-3 && sigma.is_finite());
        }
    }
}
