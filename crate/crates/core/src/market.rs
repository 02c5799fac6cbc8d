//! Market model: geometric-Brownian-motion paths, the compensated log price
//! used as the QLBS state coordinate, and the Poisson-triggered parameter
//! adjustment applied between training episodes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// World model shared by both environments.
///
/// `steps` is the maturity `T` in rebalancing steps; physical time is
/// `step · dt` throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketParams<S> {
    /// Risk-free rate per unit time.
    pub r: S,
    /// Drift per unit time.
    pub mu: S,
    /// Volatility per sqrt(unit time).
    pub sigma: S,
    /// Maturity in steps.
    pub steps: usize,
    /// Step length in time units.
    pub dt: S,
    /// Initial asset price.
    pub s0: S,
    /// Strike price.
    pub strike: S,
    /// Risk-aversion weight on the std-dev penalty.
    pub lambda: S,
    /// Bid-ask friction as a fraction of mid price.
    pub epsilon: S,
}

impl<S: Scalar> MarketParams<S> {
    /// The experiment defaults: r=0.01, μ=0, σ=0.1, T=5, Δt=1, S0=1, K=1, λ=0, ε=0.
    pub fn paper_default() -> Self {
        MarketParams {
            r: S::from_f64_c(0.01),
            mu: S::zero(),
            sigma: S::from_f64_c(0.1),
            steps: 5,
            dt: S::one(),
            s0: S::one(),
            strike: S::one(),
            lambda: S::zero(),
            epsilon: S::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.r.is_finite()
            && self.mu.is_finite()
            && self.sigma.is_finite()
            && self.dt.is_finite()
            && self.s0.is_finite()
            && self.strike.is_finite()
            && self.lambda.is_finite()
            && self.epsilon.is_finite();
        if !finite {
            return Err(Error::InvalidParams("non-finite market parameter".into()));
        }
        if self.sigma < S::zero() {
            return Err(Error::InvalidParams(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if self.dt <= S::zero() {
            return Err(Error::InvalidParams(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.steps < 1 {
            return Err(Error::InvalidParams("steps must be >= 1".into()));
        }
        if self.s0 <= S::zero() {
            return Err(Error::InvalidParams(format!("s0 must be > 0, got {}", self.s0)));
        }
        if self.strike <= S::zero() {
            return Err(Error::InvalidParams(format!("strike must be > 0, got {}", self.strike)));
        }
        if self.lambda < S::zero() {
            return Err(Error::InvalidParams(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.epsilon < S::zero() {
            return Err(Error::InvalidParams(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        Ok(())
    }

    /// Total horizon in time units, `steps · dt`.
    pub fn horizon(&self) -> S {
        S::from_usize_c(self.steps) * self.dt
    }

    /// Time remaining at step `t`, `(steps − t) · dt`.
    pub fn tau(&self, t: usize) -> S {
        debug_assert!(t <= self.steps);
        S::from_usize_c(self.steps - t) * self.dt
    }

    /// One-step discount factor `e^{−r·dt}`.
    pub fn gamma(&self) -> S {
        (-self.r * self.dt).exp()
    }
}

/// One simulated asset trajectory `S_0..S_T` plus the params that produced it.
#[derive(Debug, Clone)]
pub struct PricePath<S> {
    pub prices: Vec<S>,
    pub params: MarketParams<S>,
}

impl<S: Scalar> PricePath<S> {
    pub fn price(&self, t: usize) -> S {
        self.prices[t]
    }

    /// Number of steps (`prices.len() − 1`).
    pub fn steps(&self) -> usize {
        self.prices.len() - 1
    }
}

/// Which parameters the between-episode adjustment may perturb.
///
/// Restricted to strictly positive parameters so the multiplicative law keeps
/// them valid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdjustTarget {
    S0,
    Sigma,
    Strike,
}

/// Poisson-triggered random parameter adjustment, applied at episode starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentProcess<S> {
    /// Poisson intensity Υ per episode; the per-episode firing probability is
    /// `1 − exp(−Υ)`.
    pub intensity: S,
    /// Log-normal perturbation scale: a fired target is multiplied by `exp(scale·Z)`.
    pub scale: S,
    pub targets: Vec<AdjustTarget>,
}

impl<S: Scalar> AdjustmentProcess<S> {
    /// No adjustment at all (intensity zero).
    pub fn off() -> Self {
        AdjustmentProcess { intensity: S::zero(), scale: S::zero(), targets: Vec::new() }
    }

    /// Default experiment setting: intensity Υ on the initial price only, scale 0.1.
    pub fn on_s0(intensity: S) -> Self {
        AdjustmentProcess { intensity, scale: S::from_f64_c(0.1), targets: vec![AdjustTarget::S0] }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.intensity.is_finite() || self.intensity < S::zero() {
            return Err(Error::InvalidParams("adjustment intensity must be >= 0".into()));
        }
        if !self.scale.is_finite() || self.scale < S::zero() {
            return Err(Error::InvalidParams("adjustment scale must be >= 0".into()));
        }
        Ok(())
    }
}

/// Simulate one GBM path with exact log-normal stepping:
/// `S_{t+1} = S_t · exp((μ − σ²/2)·dt + σ·√dt·Z_t)`.
///
/// Exact stepping (not Euler) so discrete-hedging error is the only
/// discretization effect in the lab. Draws exactly `steps` normals in order.
pub fn simulate_gbm_path<S: Scalar, R: Rng + ?Sized>(
    params: &MarketParams<S>,
    rng: &mut R,
) -> Result<PricePath<S>> {
    params.validate()?;
    let half = S::from_f64_c(0.5);
    let drift = (params.mu - half * params.sigma * params.sigma) * params.dt;
    let vol = params.sigma * params.dt.sqrt();
    let mut prices = Vec::with_capacity(params.steps + 1);
    prices.push(params.s0);
    let mut s = params.s0;
    for _ in 0..params.steps {
        let z = S::standard_normal(rng);
        s = s * (drift + vol * z).exp();
        prices.push(s);
    }
    Ok(PricePath { prices, params: params.clone() })
}

/// Compensated log price `X_t = −(μ − σ²/2)·(t·dt) + ln s`, the QLBS state
/// coordinate.
pub fn compensated_log_price<S: Scalar>(params: &MarketParams<S>, t: usize, s: S) -> Result<S> {
    if s <= S::zero() || !s.is_finite() {
        return Err(Error::InvalidParams(format!("price must be > 0, got {}", s)));
    }
    let half = S::from_f64_c(0.5);
    let comp = params.mu - half * params.sigma * params.sigma;
    Ok(-(comp * S::from_usize_c(t) * params.dt) + s.ln())
}

/// Apply the between-episode adjustment: with probability `1 − exp(−Υ)` every
/// target is multiplied by an independent `exp(scale·Z)`. Returns the (maybe)
/// new params and whether the trigger fired.
///
/// Exactly one uniform is always drawn so the caller's stream stays aligned
/// regardless of intensity; normals are drawn only on a firing.
pub fn maybe_adjust<S: Scalar, R: Rng + ?Sized>(
    params: &MarketParams<S>,
    proc: &AdjustmentProcess<S>,
    rng: &mut R,
) -> (MarketParams<S>, bool) {
    let u: f64 = rng.gen();
    let p = 1.0 - (-proc.intensity.to_f64_c()).exp();
    if u >= p {
        return (params.clone(), false);
    }
    let mut out = params.clone();
    for target in &proc.targets {
        let z = S::standard_normal(rng);
        let factor = (proc.scale * z).exp();
        match target {
            AdjustTarget::S0 => out.s0 = out.s0 * factor,
            AdjustTarget::Sigma => out.sigma = out.sigma * factor,
            AdjustTarget::Strike => out.strike = out.strike * factor,
        }
    }
    (out, true)
}

/// European call payoff `max(s − k, 0)`.
pub fn payoff_european_call<S: Scalar>(s: S, k: S) -> S {
    debug_assert!(s >= S::zero() && k > S::zero());
    (s - k).max(S::zero())
}
