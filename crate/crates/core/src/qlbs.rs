//! The modified QLBS episodic environment.
//!
//! States are `(t, X_t)` with `X_t` the compensated log price; actions are
//! hedge positions in shares. Portfolio values are backward-solved under
//! transaction costs, and the per-step reward is the diminishing-factor
//! cashflow term minus a std-dev risk penalty estimated from sub-rollouts.

use rand::Rng;

use crate::blackscholes::{bs_policy, BsHedgePolicy};
use crate::costs::transaction_cost;
use crate::error::{Error, Result};
use crate::market::{compensated_log_price, payoff_european_call, MarketParams, PricePath};
use crate::scalar::Scalar;
use crate::stats;

/// QLBS state: step index and compensated log price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QlbsState<S> {
    pub t: usize,
    pub x: S,
}

/// One complete episode: realized path, actions, the backward-solved portfolio
/// series for the realized actions, and the estimated rewards `R_1..R_T`.
#[derive(Debug, Clone)]
pub struct QlbsEpisode<S> {
    pub path: PricePath<S>,
    pub actions: Vec<S>,
    pub portfolio: Vec<S>,
    pub rewards: Vec<S>,
    pub gamma: S,
}

/// Sub-rollout count for the per-step reward estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RewardEstimatorConfig {
    pub m_subrollouts: usize,
}

impl Default for RewardEstimatorConfig {
    fn default() -> Self {
        RewardEstimatorConfig { m_subrollouts: 16 }
    }
}

/// A hedging policy as the QLBS environment sees it: given `(t, S_t)` produce
/// an action, drawing from `rng` if stochastic.
pub trait QlbsPolicy<S: Scalar> {
    fn action<R: Rng + ?Sized>(&self, t: usize, spot: S, params: &MarketParams<S>, rng: &mut R) -> S;
}

impl<S: Scalar> QlbsPolicy<S> for BsHedgePolicy {
    fn action<R: Rng + ?Sized>(&self, t: usize, spot: S, params: &MarketParams<S>, _rng: &mut R) -> S {
        bs_policy(t, spot, params).expect("BS policy on positive spot")
    }
}

/// Invert the compensated log price back to the spot: `S_t = e^{x + (μ−σ²/2)·t·dt}`.
pub fn spot_from_state<S: Scalar>(params: &MarketParams<S>, state: &QlbsState<S>) -> S {
    let half = S::from_f64_c(0.5);
    let comp = params.mu - half * params.sigma * params.sigma;
    (state.x + comp * S::from_usize_c(state.t) * params.dt).exp()
}

/// Backward solve over an arbitrary tail window `prices = S_t..S_T`,
/// `positions = u_t..u_{T−1}`, with the liquidation convention `u_T := 0`:
///
/// `Π_T = payoff(S_T)`;
/// `Π_j = e^{−r·dt}·[Π_{j+1} + TC(u_{j+1}−u_j, S_{j+1}) − u_j·S_{j+1}] + u_j·S_j`.
pub(crate) fn solve_backward_window<S: Scalar>(
    prices: &[S],
    positions: &[S],
    strike: S,
    r: S,
    dt: S,
    epsilon: S,
) -> Vec<S> {
    let n = prices.len() - 1;
    debug_assert_eq!(positions.len(), n);
    let gamma = (-r * dt).exp();
    let mut pi = vec![S::zero(); n + 1];
    pi[n] = payoff_european_call(prices[n], strike);
    for j in (0..n).rev() {
        let u_next = if j + 1 < n { positions[j + 1] } else { S::zero() };
        let u = positions[j];
        let tc = transaction_cost(u_next - u, prices[j + 1], epsilon);
        pi[j] = gamma * (pi[j + 1] + tc - u * prices[j + 1]) + u * prices[j];
    }
    pi
}

/// Backward-solve the replication portfolio for a full path and position
/// sequence `u_0..u_{T−1}` under friction `epsilon`. Returns `Π_0..Π_T`.
pub fn solve_portfolio_backward<S: Scalar>(
    path: &PricePath<S>,
    positions: &[S],
    epsilon: S,
) -> Result<Vec<S>> {
    if positions.len() != path.steps() {
        return Err(Error::DimensionMismatch { expected: path.steps(), got: positions.len() });
    }
    let p = &path.params;
    Ok(solve_backward_window(&path.prices, positions, p.strike, p.r, p.dt, epsilon))
}

/// Advance the QLBS state along a realized path. The action does not influence
/// the transition (prices are exogenous); it is part of the signature because
/// the MDP's step is defined over (state, action).
pub fn step<S: Scalar>(
    state: &QlbsState<S>,
    _action: S,
    path: &PricePath<S>,
) -> Result<(QlbsState<S>, bool)> {
    let t_max = path.steps();
    if state.t >= t_max {
        return Err(Error::InvalidParams(format!("cannot step terminal state t={}", state.t)));
    }
    let t_next = state.t + 1;
    let x = compensated_log_price(&path.params, t_next, path.prices[t_next])?;
    Ok((QlbsState { t: t_next, x }, t_next == t_max))
}

/// Cashflow and risk components of one estimated reward; `reward = cash + risk`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParts<S> {
    pub cash: S,
    pub risk: S,
}

impl<S: Scalar> RewardParts<S> {
    pub fn reward(&self) -> S {
        self.cash + self.risk
    }
}

/// Run `m` sub-rollouts from `(t, S_t)` applying `action` now and the policy
/// afterwards; returns the per-rollout `(Π_t, Π_{t+1})` pairs.
///
/// Draw order per rollout: the `T−t` tail normals first, then one policy query
/// per future step `t+1..T−1` in order.
pub(crate) fn subrollout_portfolios<S: Scalar, P: QlbsPolicy<S>, R: Rng + ?Sized>(
    state: &QlbsState<S>,
    action: S,
    policy: &P,
    m: usize,
    params: &MarketParams<S>,
    rng: &mut R,
) -> Result<Vec<(S, S)>> {
    let t = state.t;
    let remaining = params.steps - t;
    let spot = spot_from_state(params, state);
    let half = S::from_f64_c(0.5);
    let drift = (params.mu - half * params.sigma * params.sigma) * params.dt;
    let vol = params.sigma * params.dt.sqrt();

    let mut out = Vec::with_capacity(m);
    let mut prices = Vec::with_capacity(remaining + 1);
    let mut positions = Vec::with_capacity(remaining);
    for _ in 0..m {
        prices.clear();
        prices.push(spot);
        let mut s = spot;
        for _ in 0..remaining {
            let z = S::standard_normal(rng);
            s = s * (drift + vol * z).exp();
            prices.push(s);
        }
        positions.clear();
        positions.push(action);
        for tau in t + 1..params.steps {
            positions.push(policy.action(tau, prices[tau - t], params, rng));
        }
        let pis = solve_backward_window(&prices, &positions, params.strike, params.r, params.dt, params.epsilon);
        out.push((pis[0], pis[1]));
    }
    Ok(out)
}

/// Estimate the modified QLBS reward for taking `action` in `state`:
/// mean over sub-rollouts of `(1−(t+1)/T)·Π_{t+1} − (1−t/T)·Π_t`, minus
/// `λ` times the unbiased sample std of `Π_t` across the rollouts.
pub fn estimate_reward_parts<S: Scalar, P: QlbsPolicy<S>, R: Rng + ?Sized>(
    state: &QlbsState<S>,
    action: S,
    policy: &P,
    cfg: &RewardEstimatorConfig,
    params: &MarketParams<S>,
    rng: &mut R,
) -> Result<RewardParts<S>> {
    if state.t >= params.steps {
        return Err(Error::InvalidParams("estimate_reward on terminal state".into()));
    }
    if cfg.m_subrollouts == 0 {
        return Err(Error::InvalidParams("m_subrollouts must be >= 1".into()));
    }
    if params.lambda > S::zero() && cfg.m_subrollouts < 2 {
        return Err(Error::InvalidParams(
            "m_subrollouts must be >= 2 when lambda > 0 (std needs two samples)".into(),
        ));
    }
    let t_frac = S::from_usize_c(state.t) / S::from_usize_c(params.steps);
    let t1_frac = S::from_usize_c(state.t + 1) / S::from_usize_c(params.steps);
    let one = S::one();

    let pairs = subrollout_portfolios(state, action, policy, cfg.m_subrollouts, params, rng)?;
    let cash_terms: Vec<S> =
        pairs.iter().map(|&(pi_t, pi_next)| (one - t1_frac) * pi_next - (one - t_frac) * pi_t).collect();
    let pi_t_samples: Vec<S> = pairs.iter().map(|&(pi_t, _)| pi_t).collect();

    let cash = stats::mean(&cash_terms);
    let risk = -params.lambda * stats::sample_std(&pi_t_samples);
    Ok(RewardParts { cash, risk })
}

/// See [`estimate_reward_parts`]; returns just the scalar reward.
pub fn estimate_reward<S: Scalar, P: QlbsPolicy<S>, R: Rng + ?Sized>(
    state: &QlbsState<S>,
    action: S,
    policy: &P,
    cfg: &RewardEstimatorConfig,
    params: &MarketParams<S>,
    rng: &mut R,
) -> Result<S> {
    Ok(estimate_reward_parts(state, action, policy, cfg, params, rng)?.reward())
}

/// Negative episodic return as the option price: `−(R_1 + … + R_T)`.
pub fn episode_price<S: Scalar>(episode: &QlbsEpisode<S>) -> Result<S> {
    let t_max = episode.path.steps();
    if episode.rewards.len() != t_max || episode.actions.len() != t_max || episode.portfolio.len() != t_max + 1 {
        return Err(Error::InvalidParams("incomplete episode".into()));
    }
    Ok(-episode.rewards.iter().copied().sum::<S>())
}

impl<S: Scalar> QlbsEpisode<S> {
    /// Trace as CSV `t,S,X,action,portfolio,reward`; the action cell is empty
    /// at `t = T` and the reward cell at `t = 0`.
    pub fn to_csv(&self) -> String {
        let params = &self.path.params;
        let mut out = String::from("t,S,X,action,portfolio,reward\n");
        for t in 0..=self.path.steps() {
            let s = self.path.prices[t];
            let x = compensated_log_price(params, t, s).expect("positive path price");
            let action = if t < self.actions.len() { self.actions[t].to_string() } else { String::new() };
            let reward = if t >= 1 { self.rewards[t - 1].to_string() } else { String::new() };
            out.push_str(&format!("{},{},{},{},{},{}\n", t, s, x, action, self.portfolio[t], reward));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::simulate_gbm_path;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn paper() -> MarketParams<f64> {
        MarketParams::paper_default()
    }

    /// Deterministic policy holding a constant position.
    struct ConstPolicy(f64);
    impl QlbsPolicy<f64> for ConstPolicy {
        fn action<R: Rng + ?Sized>(&self, _t: usize, _s: f64, _p: &MarketParams<f64>, _rng: &mut R) -> f64 {
            self.0
        }
    }

    #[test]
    fn backward_solve_fixture() {
        // frozen with arbitrary-precision arithmetic before the build
        let mut params = paper();
        params.steps = 2;
        params.epsilon = 0.02;
        let path = PricePath { prices: vec![1.0, 1.05, 0.98], params };
        let pis = solve_portfolio_backward(&path, &[0.6, 0.55], 0.02).unwrap();
        assert!((pis[0] - 0.025498345827669294).abs() < 1e-15);
        assert!((pis[1] - 0.049199508213106435).abs() < 1e-15);
        assert_eq!(pis[2], 0.0);
    }

    #[test]
    fn backward_solve_zero_positions_discounts_payoff() {
        let params = paper();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let path = simulate_gbm_path(&params, &mut rng).unwrap();
        let payoff = payoff_european_call(path.prices[5], 1.0);
        let pis = solve_portfolio_backward(&path, &[0.0; 5], 0.0).unwrap();
        for t in 0..=5 {
            let want = (-0.01 * (5 - t) as f64).exp() * payoff;
            assert!((pis[t] - want).abs() < 1e-14);
        }

        let mut params0 = params.clone();
        params0.r = 0.0;
        let path0 = PricePath { prices: path.prices.clone(), params: params0 };
        let pis0 = solve_portfolio_backward(&path0, &[0.0; 5], 0.0).unwrap();
        for t in 0..=5 {
            assert!((pis0[t] - payoff).abs() < 1e-14);
        }
    }

    #[test]
    fn backward_solve_rejects_length_mismatch() {
        let params = paper();
        let path = simulate_gbm_path(&params, &mut ChaCha12Rng::seed_from_u64(2)).unwrap();
        assert!(solve_portfolio_backward(&path, &[0.0; 4], 0.0).is_err());
    }

    #[test]
    fn step_walks_the_path() {
        let params = paper();
        let path = simulate_gbm_path(&params, &mut ChaCha12Rng::seed_from_u64(3)).unwrap();
        let mut state = QlbsState { t: 0, x: 0.0 };
        for t in 0..5 {
            let (next, done) = step(&state, 0.3, &path).unwrap();
            assert_eq!(next.t, t + 1);
            let want = compensated_log_price(&params, t + 1, path.prices[t + 1]).unwrap();
            assert_eq!(next.x, want);
            assert_eq!(done, t + 1 == 5);
            state = next;
        }
        assert!(step(&state, 0.0, &path).is_err());
    }

    #[test]
    fn spot_round_trips_through_state() {
        let params = paper();
        let path = simulate_gbm_path(&params, &mut ChaCha12Rng::seed_from_u64(4)).unwrap();
        for t in 0..=5 {
            let x = compensated_log_price(&params, t, path.prices[t]).unwrap();
            let spot = spot_from_state(&params, &QlbsState { t, x });
            assert!((spot - path.prices[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn reward_last_step_closed_form() {
        // t=T−1, λ=0, ε=0, r=0, σ=0: reward = −Π_{T−1}/T exactly
        let mut params = paper();
        params.r = 0.0;
        params.sigma = 0.0;
        params.mu = 0.05;
        let t = 4;
        let spot = params.s0 * (params.mu * t as f64).exp();
        let x = compensated_log_price(&params, t, spot).unwrap();
        let state = QlbsState { t, x };
        let action = 0.7;
        let cfg = RewardEstimatorConfig { m_subrollouts: 4 };
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let r = estimate_reward(&state, action, &ConstPolicy(0.0), &cfg, &params, &mut rng).unwrap();

        // by hand: S_T = spot·e^{mu}, Π_T = payoff, Π_{T−1} = Π_T − u(S_T − S_{T−1})
        let s_t = spot * params.mu.exp();
        let payoff = (s_t - 1.0f64).max(0.0);
        let pi_prev = payoff - action * (s_t - spot);
        assert!((r - (-pi_prev / 5.0)).abs() < 1e-12, "r={r}");
    }

    #[test]
    fn reward_deterministic_when_sigma_zero() {
        let mut params = paper();
        params.sigma = 0.0;
        let state = QlbsState { t: 1, x: 0.0 };
        let cfg = RewardEstimatorConfig { m_subrollouts: 3 };
        let a = estimate_reward(&state, 0.4, &BsHedgePolicy, &cfg, &params, &mut ChaCha12Rng::seed_from_u64(1)).unwrap();
        let b = estimate_reward(&state, 0.4, &BsHedgePolicy, &cfg, &params, &mut ChaCha12Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reward_estimator_config_guards() {
        let mut params = paper();
        params.lambda = 1.0;
        let state = QlbsState { t: 0, x: 0.0 };
        let cfg = RewardEstimatorConfig { m_subrollouts: 1 };
        let res = estimate_reward(&state, 0.0, &BsHedgePolicy, &cfg, &params, &mut ChaCha12Rng::seed_from_u64(1));
        assert!(res.is_err());

        // lambda = 0 tolerates m = 1
        params.lambda = 0.0;
        let res = estimate_reward(&state, 0.0, &BsHedgePolicy, &cfg, &params, &mut ChaCha12Rng::seed_from_u64(1));
        assert!(res.is_ok());
    }

    #[test]
    fn cashflow_telescopes_on_frozen_path() {
        // σ=0 freezes the path, BS policy is deterministic, so every
        // sub-rollout sees the same portfolio series and the summed cashflow
        // components telescope to −Π_0.
        let mut params = paper();
        params.sigma = 0.0;
        params.mu = 0.03;
        params.epsilon = 0.01;
        let path = simulate_gbm_path(&params, &mut ChaCha12Rng::seed_from_u64(6)).unwrap();
        let cfg = RewardEstimatorConfig { m_subrollouts: 2 };
        let policy = BsHedgePolicy;
        let mut rng = ChaCha12Rng::seed_from_u64(7);

        let mut actions = Vec::new();
        let mut cash_sum = 0.0;
        let mut state = QlbsState { t: 0, x: compensated_log_price(&params, 0, path.prices[0]).unwrap() };
        for t in 0..5 {
            let a = policy.action(t, path.prices[t], &params, &mut rng);
            let parts = estimate_reward_parts(&state, a, &policy, &cfg, &params, &mut rng).unwrap();
            cash_sum += parts.cash;
            actions.push(a);
            if t < 4 {
                state = step(&state, a, &path).unwrap().0;
            }
        }
        let pis = solve_portfolio_backward(&path, &actions, params.epsilon).unwrap();
        assert!((cash_sum + pis[0]).abs() < 1e-10, "sum {cash_sum} pi0 {}", pis[0]);
    }

    #[test]
    fn episode_price_matches_pi0_when_deterministic() {
        let mut params = paper();
        params.sigma = 0.0;
        params.mu = 0.04;
        let path = simulate_gbm_path(&params, &mut ChaCha12Rng::seed_from_u64(8)).unwrap();
        let cfg = RewardEstimatorConfig { m_subrollouts: 2 };
        let policy = ConstPolicy(0.25);
        let mut rng = ChaCha12Rng::seed_from_u64(9);

        let mut actions = Vec::new();
        let mut rewards = Vec::new();
        let mut state = QlbsState { t: 0, x: 0.0 };
        for t in 0..5 {
            let a = 0.25;
            rewards.push(estimate_reward(&state, a, &policy, &cfg, &params, &mut rng).unwrap());
            actions.push(a);
            if t < 4 {
                state = step(&state, a, &path).unwrap().0;
            }
        }
        let portfolio = solve_portfolio_backward(&path, &actions, 0.0).unwrap();
        let episode = QlbsEpisode {
            path: path.clone(),
            actions,
            portfolio: portfolio.clone(),
            rewards,
            gamma: params.gamma(),
        };
        let price = episode_price(&episode).unwrap();
        assert!((price - portfolio[0]).abs() < 1e-10);

        // zero positions, zero epsilon: price = discounted payoff
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let mut rewards0 = Vec::new();
        let mut state = QlbsState { t: 0, x: 0.0 };
        for t in 0..5 {
            rewards0.push(estimate_reward(&state, 0.0, &ConstPolicy(0.0), &cfg, &params, &mut rng).unwrap());
            if t < 4 {
                state = step(&state, 0.0, &path).unwrap().0;
            }
        }
        let portfolio0 = solve_portfolio_backward(&path, &[0.0; 5], 0.0).unwrap();
        let episode0 = QlbsEpisode {
            path: path.clone(),
            actions: vec![0.0; 5],
            portfolio: portfolio0,
            rewards: rewards0,
            gamma: params.gamma(),
        };
        let want = (-0.01f64 * 5.0).exp() * payoff_european_call(path.prices[5], 1.0);
        assert!((episode_price(&episode0).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn episode_price_rejects_incomplete() {
        let params = paper();
        let path = simulate_gbm_path(&params, &mut ChaCha12Rng::seed_from_u64(1)).unwrap();
        let episode = QlbsEpisode {
            path,
            actions: vec![0.0; 5],
            portfolio: vec![0.0; 6],
            rewards: vec![0.0; 3],
            gamma: params.gamma(),
        };
        assert!(episode_price(&episode).is_err());
    }

    #[test]
    fn price_non_decreasing_in_lambda_paired_draws() {
        // identical seeds per λ: the draw sequence does not depend on λ, so the
        // risk term is added to an identical cashflow
        let cfg = RewardEstimatorConfig { m_subrollouts: 8 };
        let mut prices = Vec::new();
        for &lambda in &[0.0, 1.0, 2.0] {
            let mut params = paper();
            params.lambda = lambda;
            let path = simulate_gbm_path(&params, &mut ChaCha12Rng::seed_from_u64(20)).unwrap();
            let mut rng = ChaCha12Rng::seed_from_u64(21);
            let mut total = 0.0;
            let mut state = QlbsState { t: 0, x: 0.0 };
            for t in 0..5 {
                let a = BsHedgePolicy.action(t, path.prices[t], &params, &mut rng);
                total += estimate_reward(&state, a, &BsHedgePolicy, &cfg, &params, &mut rng).unwrap();
                if t < 4 {
                    state = step(&state, a, &path).unwrap().0;
                }
            }
            prices.push(-total);
        }
        assert!(prices[1] > prices[0] && prices[2] > prices[1], "{prices:?}");
    }

    #[test]
    fn subrollout_batches_agree_in_mean() {
        // adaptedness: two batches sharing the prefix state but different
        // future randomness estimate the same E[Π_t] (3 combined SE)
        let params = paper();
        let state = QlbsState { t: 2, x: 0.05 };
        let m = 4000;
        let a = subrollout_portfolios(&state, 0.5, &BsHedgePolicy, m, &params, &mut ChaCha12Rng::seed_from_u64(31)).unwrap();
        let b = subrollout_portfolios(&state, 0.5, &BsHedgePolicy, m, &params, &mut ChaCha12Rng::seed_from_u64(32)).unwrap();
        let pa: Vec<f64> = a.iter().map(|&(p, _)| p).collect();
        let pb: Vec<f64> = b.iter().map(|&(p, _)| p).collect();
        let (ma, mb) = (stats::mean(&pa), stats::mean(&pb));
        let se = (stats::standard_error(&pa).powi(2) + stats::standard_error(&pb).powi(2)).sqrt();
        assert!((ma - mb).abs() < 3.0 * se, "ma {ma} mb {mb} se {se}");
    }

    #[test]
    fn terminal_portfolio_is_payoff_in_every_rollout() {
        let params = paper();
        let mut rng = ChaCha12Rng::seed_from_u64(40);
        for _ in 0..50 {
            let path = simulate_gbm_path(&params, &mut rng).unwrap();
            let us: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.5)).collect();
            let pis = solve_portfolio_backward(&path, &us, 0.02).unwrap();
            let want = payoff_european_call(path.prices[5], 1.0);
            assert_eq!(pis[5], want);
        }
    }

    #[test]
    fn trace_csv_shape() {
        let params = paper();
        let path = simulate_gbm_path(&params, &mut ChaCha12Rng::seed_from_u64(1)).unwrap();
        let portfolio = solve_portfolio_backward(&path, &[0.1; 5], 0.0).unwrap();
        let episode = QlbsEpisode {
            path,
            actions: vec![0.1; 5],
            portfolio,
            rewards: vec![0.0; 5],
            gamma: params.gamma(),
        };
        let csv = episode.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,S,X,action,portfolio,reward");
        assert_eq!(lines.len(), 7);
        assert!(lines[1].ends_with(',')); // no reward at t=0
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn telescoping_identity_random(
            seed in 0u64..1000,
            epsilon in 0.0f64..0.05,
            shift in -0.5f64..0.5,
        ) {
            // pathwise: Σ[(1−(t+1)/T)Π_{t+1} − (1−t/T)Π_t] = −Π_0 exactly
            let params = MarketParams::<f64>::paper_default();
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let path = simulate_gbm_path(&params, &mut rng).unwrap();
            let us: Vec<f64> = (0..5).map(|t| shift + 0.2 * t as f64).collect();
            let pis = solve_portfolio_backward(&path, &us, epsilon).unwrap();
            let t_max = 5.0;
            let mut sum = 0.0;
            for t in 0..5 {
                sum += (1.0 - (t + 1) as f64 / t_max) * pis[t + 1] - (1.0 - t as f64 / t_max) * pis[t];
            }
            prop_assert!((sum + pis[0]).abs() < 1e-10);
        }
    }
}
