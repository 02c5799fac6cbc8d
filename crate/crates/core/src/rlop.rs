//! The RLOP forward environment: a stack of `T` replication portfolios, one
//! per maturity `i ∈ {1..T}`, stepped under self-financing with transaction
//! costs. Each portfolio emits one terminal penalty comparing its value to the
//! option payoff at its own maturity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blackscholes::{bs_delta, bs_price_at, BsHedgePolicy};
use crate::costs::transaction_cost;
use crate::error::{Error, Result};
use crate::market::{payoff_european_call, MarketParams, PricePath};
use crate::scalar::Scalar;

/// Per-portfolio state: time, spot, current value, and this portfolio's
/// maturity step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlopState<S> {
    pub t: usize,
    pub s: S,
    pub pi: S,
    pub maturity: usize,
}

/// Which penalty `H` scores terminal replication error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltyKind {
    Squared,
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
}

impl Default for PenaltySpec {
    fn default() -> Self {
        PenaltySpec { kind: PenaltyKind::Squared }
    }
}

/// How the stack of portfolios is funded at t=0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Pi0Rule<S> {
    Constant(S),
    /// `Π_0^{(i)} = bs_price(0, S_0)` for maturity `i`: the default, so
    /// learning focuses on hedging rather than price search.
    BsOracle,
    /// Uniform in `[0, 2·bs_price]` per portfolio.
    UniformRandom,
}

/// The family of concurrently managed portfolios. Portfolio `i` (index `i−1`)
/// is live while `t < i`; its exposed value is the pre-rehedge value at the
/// current time.
#[derive(Debug, Clone)]
pub struct RlopStack<S> {
    pub states: Vec<RlopState<S>>,
    pub prev_positions: Vec<S>,
    pub terminated: Vec<bool>,
    t: usize,
    s: S,
    params: MarketParams<S>,
    penalty: PenaltySpec,
}

/// One self-financing step of a single portfolio:
/// grow `e^{r·dt}·(pi_t − u_prev·s_t) + u_prev·s_next`, then deduct
/// `TC(u_new − u_prev, s_next)`: the charge lands when `u_new` is chosen at
/// `t+1`.
pub fn forward_portfolio_step<S: Scalar>(
    pi_t: S,
    u_prev: S,
    u_new: S,
    s_t: S,
    s_next: S,
    r: S,
    dt: S,
    epsilon: S,
) -> Result<S> {
    if s_t <= S::zero() || s_next <= S::zero() {
        return Err(Error::InvalidParams(format!("prices must be > 0, got s_t={}, s_next={}", s_t, s_next)));
    }
    let grown = (r * dt).exp() * (pi_t - u_prev * s_t) + u_prev * s_next;
    Ok(grown - transaction_cost(u_new - u_prev, s_next, epsilon))
}

/// Terminal penalty `H`: `−(payoff − pi)²` or `−|payoff − pi|`.
pub fn terminal_penalty<S: Scalar>(payoff: S, pi: S, spec: PenaltySpec) -> S {
    let gap = payoff - pi;
    match spec.kind {
        PenaltyKind::Squared => -(gap * gap),
        PenaltyKind::Absolute => -gap.abs(),
    }
}

/// Build the stack at t=0 on `path`: one live portfolio per maturity
/// `i ∈ {1..T}`, funded by `rule`, previous positions all zero.
pub fn init_stack<S: Scalar, R: Rng + ?Sized>(
    path: &PricePath<S>,
    rule: &Pi0Rule<S>,
    penalty: PenaltySpec,
    rng: &mut R,
) -> RlopStack<S> {
    let params = path.params.clone();
    let s0 = params.s0;
    let two = S::from_f64_c(2.0);
    let states = (1..=params.steps)
        .map(|i| {
            let pi0 = match rule {
                Pi0Rule::Constant(c) => *c,
                Pi0Rule::BsOracle => {
                    let tau = S::from_usize_c(i) * params.dt;
                    bs_price_at(tau, s0, params.strike, params.r, params.sigma)
                        .expect("positive initial price")
                }
                Pi0Rule::UniformRandom => {
                    let tau = S::from_usize_c(i) * params.dt;
                    let hi = two
                        * bs_price_at(tau, s0, params.strike, params.r, params.sigma)
                            .expect("positive initial price");
                    if hi > S::zero() {
                        rng.gen_range(S::zero()..hi)
                    } else {
                        S::zero()
                    }
                }
            };
            RlopState { t: 0, s: s0, pi: pi0, maturity: i }
        })
        .collect();
    RlopStack {
        states,
        prev_positions: vec![S::zero(); params.steps],
        terminated: vec![false; params.steps],
        t: 0,
        s: s0,
        params,
        penalty,
    }
}

impl<S: Scalar> RlopStack<S> {
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn current_price(&self) -> S {
        self.s
    }

    pub fn params(&self) -> &MarketParams<S> {
        &self.params
    }

    /// Maturities still live at the current time, ascending.
    pub fn live_maturities(&self) -> Vec<usize> {
        (self.t + 1..=self.params.steps).collect()
    }

    pub fn all_terminated(&self) -> bool {
        self.terminated.iter().all(|&d| d)
    }
}

/// Advance every live portfolio from `t` to `t+1` given one action per live
/// portfolio (ascending maturity order) and the next asset price.
///
/// The rehedge into each action is charged at the current price; the portfolio
/// maturing at `t+1` is then liquidated (`u := 0`, charged at `s_next`) and
/// emits `H(payoff(s_next), Π)`. Returns per-portfolio rewards indexed by
/// `maturity − 1`, zero everywhere except the maturing slot.
pub fn step_stack<S: Scalar>(stack: &mut RlopStack<S>, actions: &[S], s_next: S) -> Result<Vec<S>> {
    let t = stack.t;
    let t_max = stack.params.steps;
    if t >= t_max {
        return Err(Error::InvalidParams("stack is fully terminated".into()));
    }
    let live = t_max - t;
    if actions.len() != live {
        return Err(Error::DimensionMismatch { expected: live, got: actions.len() });
    }
    if s_next <= S::zero() || !s_next.is_finite() {
        return Err(Error::InvalidParams(format!("s_next must be > 0, got {}", s_next)));
    }
    let p = stack.params.clone();
    let s_t = stack.s;
    let grow = (p.r * p.dt).exp();
    let mut rewards = vec![S::zero(); t_max];
    for (idx, i) in (t + 1..=t_max).enumerate() {
        let k = i - 1;
        let u_prev = stack.prev_positions[k];
        let u = actions[idx];
        // the deferred TC phase of the previous forward step: adopting u at S_t
        let charged = stack.states[k].pi - transaction_cost(u - u_prev, s_t, p.epsilon);
        let grown = grow * (charged - u * s_t) + u * s_next;
        if i == t + 1 {
            let pi_final = grown - transaction_cost(S::zero() - u, s_next, p.epsilon);
            rewards[k] = terminal_penalty(payoff_european_call(s_next, p.strike), pi_final, stack.penalty);
            stack.states[k] = RlopState { t: t + 1, s: s_next, pi: pi_final, maturity: i };
            stack.prev_positions[k] = S::zero();
            stack.terminated[k] = true;
        } else {
            stack.states[k] = RlopState { t: t + 1, s: s_next, pi: grown, maturity: i };
            stack.prev_positions[k] = u;
        }
    }
    stack.t = t + 1;
    stack.s = s_next;
    Ok(rewards)
}

/// A hedging policy as the RLOP environment sees it: the observation carries
/// the time, spot, this portfolio's pre-rehedge value, and its maturity.
pub trait RlopPolicy<S: Scalar> {
    fn action<R: Rng + ?Sized>(
        &self,
        t: usize,
        spot: S,
        pi: S,
        maturity: usize,
        params: &MarketParams<S>,
        rng: &mut R,
    ) -> S;
}

impl<S: Scalar> RlopPolicy<S> for BsHedgePolicy {
    fn action<R: Rng + ?Sized>(
        &self,
        t: usize,
        spot: S,
        _pi: S,
        maturity: usize,
        params: &MarketParams<S>,
        _rng: &mut R,
    ) -> S {
        // delta for the maturity-i option: time-to-maturity (i − t)·dt
        let mut p = params.clone();
        p.steps = maturity;
        bs_delta(t, spot, &p).expect("BS delta on positive spot")
    }
}

/// One row of the exportable stack trace (`t,S,maturity,position,portfolio,reward`).
#[derive(Debug, Clone, Copy)]
pub struct RlopTraceRow<S> {
    pub t: usize,
    pub s: S,
    pub maturity: usize,
    pub position: S,
    pub portfolio: S,
    pub reward: S,
}

/// Render trace rows as CSV with the documented header.
pub fn trace_to_csv<S: Scalar>(rows: &[RlopTraceRow<S>]) -> String {
    let mut out = String::from("t,S,maturity,position,portfolio,reward\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{},{}\n", r.t, r.s, r.maturity, r.position, r.portfolio, r.reward));
    }
    out
}
