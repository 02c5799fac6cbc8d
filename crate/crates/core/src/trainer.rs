//! REINFORCE training loops for both environments: episode rollouts, the
//! with-baseline update for QLBS and the baseline-free update for RLOP,
//! Poisson parameter adjustment between episodes, evaluation helpers, and the
//! two-condition mixing/fine-tuning protocol.
//!
//! Every source of randomness is a dedicated `ChaCha12` stream keyed by
//! `(master seed, episode index, stream tag)`, so runs are reproducible and
//! resumable from any episode boundary, and evaluations under different
//! `(λ, ε)` share identical draw sequences for paired comparisons.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::blackscholes::bs_price_at;
use crate::error::{Error, Result};
use crate::market::{
    compensated_log_price, maybe_adjust, simulate_gbm_path, AdjustmentProcess, MarketParams,
    PricePath,
};
use crate::net::{
    adam_step, qlbs_features, rlop_features, AdamState, GaussianPolicy, NetConfig, PolicyGrads,
    ResNet,
};
use crate::qlbs::{
    self, solve_portfolio_backward, QlbsEpisode, QlbsPolicy, QlbsState, RewardEstimatorConfig,
    RewardParts,
};
use crate::rlop::{init_stack, step_stack, PenaltySpec, Pi0Rule, RlopPolicy, RlopTraceRow};
use crate::scalar::Scalar;
use crate::stats;

/// Stream tags; each `(seed, episode, tag)` triple owns an independent RNG.
pub mod stream {
    pub const PATH: u64 = 0;
    pub const ACTION: u64 = 1;
    pub const SUBROLLOUT: u64 = 2;
    pub const ADJUST: u64 = 3;
    pub const NET_INIT: u64 = 4;
    pub const PI0: u64 = 5;
    pub const EVAL_PATH: u64 = 6;
    pub const EVAL_ACTION: u64 = 7;
    pub const EVAL_SUBROLLOUT: u64 = 8;
    pub const EVAL_PI0: u64 = 9;
    pub const MIX: u64 = 10;
}

/// The RNG for one `(master seed, episode, tag)` triple.
pub fn stream_rng(master: u64, episode: u64, tag: u64) -> ChaCha12Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&master.to_le_bytes());
    seed[8..16].copy_from_slice(&episode.to_le_bytes());
    seed[16..24].copy_from_slice(&tag.to_le_bytes());
    ChaCha12Rng::from_seed(seed)
}

/// FNV-1a over the bit patterns of the market parameters; logged per episode
/// so adjustments are visible in the record.
pub fn params_hash<S: Scalar>(params: &MarketParams<S>) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let mut eat = |word: u64| {
        for b in word.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    for v in [
        params.r,
        params.mu,
        params.sigma,
        params.dt,
        params.s0,
        params.strike,
        params.lambda,
        params.epsilon,
    ] {
        eat(v.to_f64_c().to_bits());
    }
    eat(params.steps as u64);
    h
}

/// Which environment a run trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvKind {
    Qlbs,
    Rlop,
}

/// One full training specification; identical configs give identical logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<S> {
    pub env: EnvKind,
    pub market: MarketParams<S>,
    pub adjustment: AdjustmentProcess<S>,
    pub episodes: usize,
    pub lr_policy: S,
    pub lr_baseline: S,
    pub m_subrollouts: usize,
    pub penalty: PenaltySpec,
    pub pi0: Pi0Rule<S>,
    pub net: NetConfig,
    pub std_floor: S,
    pub ema_halflife: S,
    pub seed: u64,
    /// Emit a checkpoint event every this many episodes; 0 disables.
    pub checkpoint_every: usize,
}

impl<S: Scalar> TrainConfig<S> {
    /// The experiment defaults: paper market, no adjustment, learning rate
    /// 1e−4, 16 sub-rollouts, squared penalty, oracle funding.
    pub fn paper_default(env: EnvKind, seed: u64) -> Self {
        TrainConfig {
            env,
            market: MarketParams::paper_default(),
            adjustment: AdjustmentProcess::off(),
            episodes: match env {
                EnvKind::Qlbs => 4000,
                EnvKind::Rlop => 8000,
            },
            lr_policy: S::from_f64_c(1e-4),
            lr_baseline: S::from_f64_c(1e-4),
            m_subrollouts: 16,
            penalty: PenaltySpec::default(),
            pi0: Pi0Rule::BsOracle,
            net: NetConfig::default(),
            std_floor: S::from_f64_c(1e-3),
            ema_halflife: S::from_f64_c(100.0),
            seed,
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        self.adjustment.validate()?;
        if !(self.lr_policy > S::zero()) || !(self.lr_baseline > S::zero()) {
            return Err(Error::InvalidParams("learning rates must be > 0".into()));
        }
        if !(self.ema_halflife > S::zero()) {
            return Err(Error::InvalidParams("ema_halflife must be > 0".into()));
        }
        if !(self.std_floor > S::zero()) {
            return Err(Error::InvalidParams("std_floor must be > 0".into()));
        }
        if self.env == EnvKind::Qlbs {
            if self.m_subrollouts == 0 {
                return Err(Error::InvalidParams("m_subrollouts must be >= 1".into()));
            }
            if self.market.lambda > S::zero() && self.m_subrollouts < 2 {
                return Err(Error::InvalidParams(
                    "m_subrollouts must be >= 2 when lambda > 0".into(),
                ));
            }
        }
        if self.net.input_dim != 8 || self.net.output_dim != 1 {
            return Err(Error::InvalidParams(
                "policy networks take the 8-wide feature vector to a scalar".into(),
            ));
        }
        Ok(())
    }
}

/// One per-episode record of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow<S> {
    pub episode: usize,
    pub ret: S,
    pub ema: S,
    pub cashflow: S,
    pub risk: S,
    pub adjusted: bool,
    pub params_hash: u64,
}

/// Episode-indexed training record; renders as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog<S> {
    pub rows: Vec<LogRow<S>>,
}

impl<S> Default for TrainLog<S> {
    fn default() -> Self {
        TrainLog { rows: Vec::new() }
    }
}

impl<S: Scalar> TrainLog<S> {
    pub const CSV_HEADER: &'static str = "episode,return,ema,cashflow,risk,adjusted,params_hash";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{:016x}\n",
                r.episode,
                r.ret,
                r.ema,
                r.cashflow,
                r.risk,
                u8::from(r.adjusted),
                r.params_hash
            ));
        }
        out
    }
}

/// Undiscounted return-to-go: `G_t = Σ_{k≥t} R_{k+1}`.
pub fn returns_to_go<S: Scalar>(rewards: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); rewards.len()];
    let mut acc = S::zero();
    for t in (0..rewards.len()).rev() {
        acc += rewards[t];
        out[t] = acc;
    }
    out
}

/// One trajectory of a REINFORCE batch: per-step rewards, unit-advantage
/// score gradients, and (QLBS only) baseline values with their parameter
/// gradients.
#[derive(Debug, Clone)]
pub struct Trajectory<S> {
    pub rewards: Vec<S>,
    pub logp_grads: Vec<PolicyGrads<S>>,
    pub baseline_evals: Option<Vec<(S, Vec<S>)>>,
}

/// One REINFORCE update from a batch of trajectories: policy ascent along
/// `Σ_t A_t·∇log π(a_t|s_t)` with `A_t = G_t − b(s_t)`, baseline descent along
/// the gradient of `½(b − G_t)²`, one Adam step per network. Trajectories
/// without baseline evaluations run with baseline ≡ 0.
pub fn reinforce_update<S: Scalar>(
    trajectories: &[Trajectory<S>],
    policy: &mut GaussianPolicy<S>,
    opt_mean: &mut AdamState<S>,
    opt_std: &mut AdamState<S>,
    baseline: Option<(&mut ResNet<S>, &mut AdamState<S>)>,
) -> Result<()> {
    let mut acc_mean = vec![S::zero(); policy.mean_net.param_count()];
    let mut acc_std = vec![S::zero(); policy.std_net.param_count()];
    let mut acc_base = baseline.as_ref().map(|(net, _)| vec![S::zero(); net.param_count()]);

    for traj in trajectories {
        let n = traj.rewards.len();
        if traj.logp_grads.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: traj.logp_grads.len() });
        }
        if let Some(evals) = &traj.baseline_evals {
            if evals.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: evals.len() });
            }
            if acc_base.is_none() {
                return Err(Error::InvalidParams(
                    "baseline evaluations supplied without a baseline network".into(),
                ));
            }
        }
        let gs = returns_to_go(&traj.rewards);
        for t in 0..n {
            let b_t = traj.baseline_evals.as_ref().map_or(S::zero(), |e| e[t].0);
            let advantage = gs[t] - b_t;
            let pg = &traj.logp_grads[t];
            if pg.mean.len() != acc_mean.len() || pg.std.len() != acc_std.len() {
                return Err(Error::DimensionMismatch {
                    expected: acc_mean.len(),
                    got: pg.mean.len(),
                });
            }
            for (acc, g) in acc_mean.iter_mut().zip(&pg.mean) {
                *acc += advantage * *g;
            }
            for (acc, g) in acc_std.iter_mut().zip(&pg.std) {
                *acc += advantage * *g;
            }
            if let (Some(acc_b), Some(evals)) = (acc_base.as_mut(), &traj.baseline_evals) {
                let (b, gb) = &evals[t];
                if gb.len() != acc_b.len() {
                    return Err(Error::DimensionMismatch { expected: acc_b.len(), got: gb.len() });
                }
                let err = *b - gs[t];
                for (acc, g) in acc_b.iter_mut().zip(gb) {
                    *acc += err * *g;
                }
            }
        }
    }

    // ascent on the return: descend the negated accumulation
    acc_mean.iter_mut().for_each(|g| *g = -*g);
    acc_std.iter_mut().for_each(|g| *g = -*g);
    adam_step(&mut policy.mean_net, &acc_mean, opt_mean)?;
    adam_step(&mut policy.std_net, &acc_std, opt_std)?;
    if let (Some((net, opt)), Some(acc_b)) = (baseline, acc_base) {
        adam_step(net, &acc_b, opt)?;
    }
    Ok(())
}

/// Roll one QLBS episode: simulate a path, sample one action per step,
/// estimate each step's reward parts, and backward-solve the realized
/// portfolio. The three RNGs drive the path, the action draws, and the
/// sub-rollouts respectively.
fn qlbs_episode_impl<S, P, R1, R2, R3>(
    policy: &P,
    est: &RewardEstimatorConfig,
    params: &MarketParams<S>,
    path_rng: &mut R1,
    action_rng: &mut R2,
    sub_rng: &mut R3,
) -> Result<(QlbsEpisode<S>, Vec<RewardParts<S>>)>
where
    S: Scalar,
    P: QlbsPolicy<S>,
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
    R3: Rng + ?Sized,
{
    let path = simulate_gbm_path(params, path_rng)?;
    let t_max = params.steps;
    let mut state = QlbsState { t: 0, x: compensated_log_price(params, 0, path.prices[0])? };
    let mut actions = Vec::with_capacity(t_max);
    let mut parts = Vec::with_capacity(t_max);
    for t in 0..t_max {
        let spot = path.prices[t];
        let a = policy.action(t, spot, params, action_rng);
        let p = qlbs::estimate_reward_parts(&state, a, policy, est, params, sub_rng)?;
        actions.push(a);
        parts.push(p);
        let (next, _) = qlbs::step(&state, a, &path)?;
        state = next;
    }
    let portfolio = solve_portfolio_backward(&path, &actions, params.epsilon)?;
    let rewards = parts.iter().map(RewardParts::reward).collect();
    let gamma = params.gamma();
    Ok((QlbsEpisode { path, actions, portfolio, rewards, gamma }, parts))
}

/// Public single-RNG episode runner; splits `rng` into independent path,
/// action, and sub-rollout streams.
pub fn run_episode_qlbs<S, P, R>(
    policy: &P,
    est: &RewardEstimatorConfig,
    params: &MarketParams<S>,
    rng: &mut R,
) -> Result<(QlbsEpisode<S>, Vec<RewardParts<S>>)>
where
    S: Scalar,
    P: QlbsPolicy<S>,
    R: Rng + ?Sized,
{
    let mut seeds = [[0u8; 32]; 3];
    for s in &mut seeds {
        rng.fill(&mut s[..]);
    }
    let mut path_rng = ChaCha12Rng::from_seed(seeds[0]);
    let mut action_rng = ChaCha12Rng::from_seed(seeds[1]);
    let mut sub_rng = ChaCha12Rng::from_seed(seeds[2]);
    qlbs_episode_impl(policy, est, params, &mut path_rng, &mut action_rng, &mut sub_rng)
}

/// One decision of one stacked portfolio: what the policy saw and chose.
#[derive(Debug, Clone, Copy)]
pub struct RlopDecision<S> {
    pub t: usize,
    pub spot: S,
    /// Pre-rehedge portfolio value exposed to the policy.
    pub pi: S,
    pub maturity: usize,
    pub action: S,
}

/// One RLOP episode: the path, the per-maturity decision sequences, and the
/// terminal penalty collected by each maturity.
#[derive(Debug, Clone)]
pub struct RlopEpisodeOut<S> {
    pub path: PricePath<S>,
    /// `decisions[i−1]` is the trajectory of the maturity-`i` portfolio.
    pub decisions: Vec<Vec<RlopDecision<S>>>,
    /// `rewards[i−1] = H(payoff, Π)` for maturity `i`.
    pub rewards: Vec<S>,
}

impl<S: Scalar> RlopEpisodeOut<S> {
    pub fn episode_return(&self) -> S {
        self.rewards.iter().copied().sum()
    }

    /// Decision-time rows for export; each maturity's terminal penalty is
    /// attached to its final decision row.
    pub fn trace_rows(&self) -> Vec<RlopTraceRow<S>> {
        let mut rows = Vec::new();
        let t_max = self.decisions.len();
        for t in 0..t_max {
            for traj in &self.decisions {
                if let Some(d) = traj.get(t) {
                    let is_last = t + 1 == d.maturity;
                    rows.push(RlopTraceRow {
                        t: d.t,
                        s: d.spot,
                        maturity: d.maturity,
                        position: d.action,
                        portfolio: d.pi,
                        reward: if is_last { self.rewards[d.maturity - 1] } else { S::zero() },
                    });
                }
            }
        }
        rows
    }
}

fn rlop_episode_impl<S, P, R1, R2, R3>(
    policy: &P,
    params: &MarketParams<S>,
    penalty: PenaltySpec,
    pi0: &Pi0Rule<S>,
    path_rng: &mut R1,
    pi0_rng: &mut R2,
    action_rng: &mut R3,
) -> Result<RlopEpisodeOut<S>>
where
    S: Scalar,
    P: RlopPolicy<S>,
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
    R3: Rng + ?Sized,
{
    let path = simulate_gbm_path(params, path_rng)?;
    let t_max = params.steps;
    let mut stack = init_stack(&path, pi0, penalty, pi0_rng);
    let mut decisions: Vec<Vec<RlopDecision<S>>> = vec![Vec::new(); t_max];
    let mut rewards = vec![S::zero(); t_max];
    for t in 0..t_max {
        let spot = path.prices[t];
        let live = stack.live_maturities();
        let mut actions = Vec::with_capacity(live.len());
        for &i in &live {
            let pi = stack.states[i - 1].pi;
            let a = policy.action(t, spot, pi, i, params, action_rng);
            decisions[i - 1].push(RlopDecision { t, spot, pi, maturity: i, action: a });
            actions.push(a);
        }
        let step_rewards = step_stack(&mut stack, &actions, path.prices[t + 1])?;
        rewards[t] = step_rewards[t];
    }
    Ok(RlopEpisodeOut { path, decisions, rewards })
}

/// Public single-RNG RLOP episode runner.
pub fn run_episode_rlop<S, P, R>(
    policy: &P,
    params: &MarketParams<S>,
    penalty: PenaltySpec,
    pi0: &Pi0Rule<S>,
    rng: &mut R,
) -> Result<RlopEpisodeOut<S>>
where
    S: Scalar,
    P: RlopPolicy<S>,
    R: Rng + ?Sized,
{
    let mut seeds = [[0u8; 32]; 3];
    for s in &mut seeds {
        rng.fill(&mut s[..]);
    }
    let mut path_rng = ChaCha12Rng::from_seed(seeds[0]);
    let mut pi0_rng = ChaCha12Rng::from_seed(seeds[1]);
    let mut action_rng = ChaCha12Rng::from_seed(seeds[2]);
    rlop_episode_impl(policy, params, penalty, pi0, &mut path_rng, &mut pi0_rng, &mut action_rng)
}

/// Everything a run needs to continue: networks, optimizer moments, the
/// possibly-adjusted market, and the episode cursor.
#[derive(Debug, Clone)]
pub struct TrainerState<S> {
    pub config: TrainConfig<S>,
    pub market: MarketParams<S>,
    pub episode: usize,
    pub ema: Option<S>,
    pub policy: GaussianPolicy<S>,
    pub baseline: Option<ResNet<S>>,
    pub opt_mean: AdamState<S>,
    pub opt_std: AdamState<S>,
    pub opt_baseline: Option<AdamState<S>>,
}

/// Observer notifications during [`Trainer::run`].
pub enum TrainEvent<'a, S> {
    Episode(&'a LogRow<S>),
    Checkpoint(&'a TrainerState<S>),
}

/// Sequential trainer over one environment; resumable via [`TrainerState`].
pub struct Trainer<S: Scalar> {
    state: TrainerState<S>,
}

impl<S: Scalar> Trainer<S> {
    pub fn new(config: TrainConfig<S>) -> Result<Self> {
        config.validate()?;
        let mut init_rng = stream_rng(config.seed, 0, stream::NET_INIT);
        let policy = GaussianPolicy::init(&config.net, config.std_floor, &mut init_rng);
        let (baseline, opt_baseline) = match config.env {
            EnvKind::Qlbs => {
                let net = ResNet::init(&config.net, &mut init_rng);
                let opt = AdamState::new(net.param_count(), config.lr_baseline);
                (Some(net), Some(opt))
            }
            EnvKind::Rlop => (None, None),
        };
        let opt_mean = AdamState::new(policy.mean_net.param_count(), config.lr_policy);
        let opt_std = AdamState::new(policy.std_net.param_count(), config.lr_policy);
        let market = config.market.clone();
        Ok(Trainer {
            state: TrainerState {
                config,
                market,
                episode: 0,
                ema: None,
                policy,
                baseline,
                opt_mean,
                opt_std,
                opt_baseline,
            },
        })
    }

    pub fn from_state(state: TrainerState<S>) -> Result<Self> {
        state.config.validate()?;
        state.market.validate()?;
        Ok(Trainer { state })
    }

    pub fn state(&self) -> &TrainerState<S> {
        &self.state
    }

    pub fn into_state(self) -> TrainerState<S> {
        self.state
    }

    pub fn policy(&self) -> &GaussianPolicy<S> {
        &self.state.policy
    }

    pub fn market(&self) -> &MarketParams<S> {
        &self.state.market
    }

    /// Replace the active market condition (used by the mixing protocol).
    pub fn set_market(&mut self, market: MarketParams<S>) -> Result<()> {
        market.validate()?;
        self.state.market = market;
        Ok(())
    }

    fn push_ema(&mut self, ret: S) -> S {
        let decay = (-(S::from_f64_c(2.0)).ln() / self.state.config.ema_halflife).exp();
        let ema = match self.state.ema {
            None => ret,
            Some(prev) => decay * prev + (S::one() - decay) * ret,
        };
        self.state.ema = Some(ema);
        ema
    }

    /// Run exactly one episode: adjust, roll out, update, log.
    pub fn run_one(&mut self) -> Result<LogRow<S>> {
        let ep = self.state.episode as u64;
        let seed = self.state.config.seed;

        let mut adj_rng = stream_rng(seed, ep, stream::ADJUST);
        let (market, adjusted) =
            maybe_adjust(&self.state.market, &self.state.config.adjustment, &mut adj_rng);
        self.state.market = market;

        let (ret, cashflow, risk) = match self.state.config.env {
            EnvKind::Qlbs => self.qlbs_episode(ep)?,
            EnvKind::Rlop => self.rlop_episode(ep)?,
        };
        let ema = self.push_ema(ret);
        let row = LogRow {
            episode: self.state.episode,
            ret,
            ema,
            cashflow,
            risk,
            adjusted,
            params_hash: params_hash(&self.state.market),
        };
        self.state.episode += 1;
        Ok(row)
    }

    fn qlbs_episode(&mut self, ep: u64) -> Result<(S, S, S)> {
        let seed = self.state.config.seed;
        let market = self.state.market.clone();
        let est = RewardEstimatorConfig { m_subrollouts: self.state.config.m_subrollouts };
        let mut path_rng = stream_rng(seed, ep, stream::PATH);
        let mut action_rng = stream_rng(seed, ep, stream::ACTION);
        let mut sub_rng = stream_rng(seed, ep, stream::SUBROLLOUT);
        let (episode, parts) = qlbs_episode_impl(
            &self.state.policy,
            &est,
            &market,
            &mut path_rng,
            &mut action_rng,
            &mut sub_rng,
        )?;

        let st = &mut self.state;
        let baseline = st.baseline.as_mut().expect("qlbs trains with a baseline");
        let mut logp_grads = Vec::with_capacity(market.steps);
        let mut baseline_evals = Vec::with_capacity(market.steps);
        for t in 0..market.steps {
            let features = qlbs_features(t, episode.path.prices[t], &market);
            logp_grads.push(st.policy.log_prob_gradients(&features, episode.actions[t], S::one())?);
            let trace = baseline.forward_trace(&features)?;
            let value = trace.output()[0];
            let (grad, _) = baseline.backward(&trace, &[S::one()])?;
            baseline_evals.push((value, grad));
        }
        let traj = Trajectory {
            rewards: episode.rewards.clone(),
            logp_grads,
            baseline_evals: Some(baseline_evals),
        };
        reinforce_update(
            &[traj],
            &mut st.policy,
            &mut st.opt_mean,
            &mut st.opt_std,
            Some((baseline, st.opt_baseline.as_mut().expect("qlbs baseline optimizer"))),
        )?;

        let cashflow = parts.iter().map(|p| p.cash).sum::<S>();
        let risk = parts.iter().map(|p| p.risk).sum::<S>();
        Ok((cashflow + risk, cashflow, risk))
    }

    fn rlop_episode(&mut self, ep: u64) -> Result<(S, S, S)> {
        let seed = self.state.config.seed;
        let market = self.state.market.clone();
        let penalty = self.state.config.penalty;
        let pi0 = self.state.config.pi0;
        let mut path_rng = stream_rng(seed, ep, stream::PATH);
        let mut pi0_rng = stream_rng(seed, ep, stream::PI0);
        let mut action_rng = stream_rng(seed, ep, stream::ACTION);
        let out = rlop_episode_impl(
            &self.state.policy,
            &market,
            penalty,
            &pi0,
            &mut path_rng,
            &mut pi0_rng,
            &mut action_rng,
        )?;

        let st = &mut self.state;
        let mut trajectories = Vec::with_capacity(market.steps);
        for (k, traj) in out.decisions.iter().enumerate() {
            let n = traj.len();
            let mut rewards = vec![S::zero(); n];
            rewards[n - 1] = out.rewards[k];
            let mut logp_grads = Vec::with_capacity(n);
            for d in traj {
                let features = rlop_features(d.t, d.spot, d.pi, d.maturity, &market);
                logp_grads.push(st.policy.log_prob_gradients(&features, d.action, S::one())?);
            }
            trajectories.push(Trajectory { rewards, logp_grads, baseline_evals: None });
        }
        reinforce_update(&trajectories, &mut st.policy, &mut st.opt_mean, &mut st.opt_std, None)?;

        let ret = out.episode_return();
        Ok((ret, ret, S::zero()))
    }

    /// Run `episodes` more episodes, notifying `observer` after each and at
    /// every checkpoint interval; returns the log of exactly these episodes.
    pub fn run(
        &mut self,
        episodes: usize,
        mut observer: impl FnMut(TrainEvent<'_, S>),
    ) -> Result<TrainLog<S>> {
        let mut log = TrainLog::default();
        let every = self.state.config.checkpoint_every;
        for _ in 0..episodes {
            let row = self.run_one()?;
            observer(TrainEvent::Episode(&row));
            log.rows.push(row);
            if every > 0 && self.state.episode % every == 0 {
                observer(TrainEvent::Checkpoint(&self.state));
            }
        }
        Ok(log)
    }
}

/// Final state and full log of one training run.
pub struct TrainOutcome<S: Scalar> {
    pub state: TrainerState<S>,
    pub log: TrainLog<S>,
}

impl<S: Scalar> TrainOutcome<S> {
    pub fn policy(&self) -> &GaussianPolicy<S> {
        &self.state.policy
    }

    pub fn baseline(&self) -> Option<&ResNet<S>> {
        self.state.baseline.as_ref()
    }
}

/// Train from scratch for `config.episodes` episodes.
pub fn train<S: Scalar>(config: &TrainConfig<S>) -> Result<TrainOutcome<S>> {
    train_with(config, |_| {})
}

/// [`train`] with an observer for streaming logs and checkpoints.
pub fn train_with<S: Scalar>(
    config: &TrainConfig<S>,
    observer: impl FnMut(TrainEvent<'_, S>),
) -> Result<TrainOutcome<S>> {
    let mut trainer = Trainer::new(config.clone())?;
    let log = trainer.run(config.episodes, observer)?;
    Ok(TrainOutcome { state: trainer.into_state(), log })
}

/// Deterministic view of a Gaussian policy: always the mean action.
pub struct MeanActionPolicy<'a, S>(pub &'a GaussianPolicy<S>);

impl<S: Scalar> QlbsPolicy<S> for MeanActionPolicy<'_, S> {
    fn action<R: Rng + ?Sized>(
        &self,
        t: usize,
        spot: S,
        params: &MarketParams<S>,
        _rng: &mut R,
    ) -> S {
        self.0.mean_action(&qlbs_features(t, spot, params)).expect("finite policy output")
    }
}

impl<S: Scalar> RlopPolicy<S> for MeanActionPolicy<'_, S> {
    fn action<R: Rng + ?Sized>(
        &self,
        t: usize,
        spot: S,
        pi: S,
        maturity: usize,
        params: &MarketParams<S>,
        _rng: &mut R,
    ) -> S {
        self.0
            .mean_action(&rlop_features(t, spot, pi, maturity, params))
            .expect("finite policy output")
    }
}

/// Monte-Carlo evaluation summary; the QLBS price is `−mean_return`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport<S> {
    pub n_paths: usize,
    pub mean_return: S,
    pub std_error: S,
    pub mean_cashflow: S,
    pub mean_risk: S,
}

impl<S: Scalar> EvalReport<S> {
    pub fn mean_price(&self) -> S {
        -self.mean_return
    }
}

/// Evaluate a policy on `n_paths` fresh QLBS episodes with paired streams:
/// path `j` is identical across calls with the same `seed`, whatever the
/// policy or `(λ, ε)`.
pub fn evaluate_qlbs<S: Scalar, P: QlbsPolicy<S>>(
    policy: &P,
    params: &MarketParams<S>,
    est: &RewardEstimatorConfig,
    n_paths: usize,
    seed: u64,
) -> Result<EvalReport<S>> {
    params.validate()?;
    if n_paths == 0 {
        return Err(Error::InvalidParams("n_paths must be >= 1".into()));
    }
    let mut returns = Vec::with_capacity(n_paths);
    let mut cash_sum = S::zero();
    let mut risk_sum = S::zero();
    for j in 0..n_paths {
        let mut path_rng = stream_rng(seed, j as u64, stream::EVAL_PATH);
        let mut action_rng = stream_rng(seed, j as u64, stream::EVAL_ACTION);
        let mut sub_rng = stream_rng(seed, j as u64, stream::EVAL_SUBROLLOUT);
        let (_, parts) =
            qlbs_episode_impl(policy, est, params, &mut path_rng, &mut action_rng, &mut sub_rng)?;
        let cash = parts.iter().map(|p| p.cash).sum::<S>();
        let risk = parts.iter().map(|p| p.risk).sum::<S>();
        returns.push(cash + risk);
        cash_sum += cash;
        risk_sum += risk;
    }
    let n = S::from_usize_c(n_paths);
    Ok(EvalReport {
        n_paths,
        mean_return: stats::mean(&returns),
        std_error: stats::standard_error(&returns),
        mean_cashflow: cash_sum / n,
        mean_risk: risk_sum / n,
    })
}

/// Evaluate a policy on `n_paths` fresh RLOP episodes (paired streams as in
/// [`evaluate_qlbs`]); returns are penalty sums, so risk is reported as zero.
pub fn evaluate_rlop<S: Scalar, P: RlopPolicy<S>>(
    policy: &P,
    params: &MarketParams<S>,
    penalty: PenaltySpec,
    pi0: &Pi0Rule<S>,
    n_paths: usize,
    seed: u64,
) -> Result<EvalReport<S>> {
    params.validate()?;
    if n_paths == 0 {
        return Err(Error::InvalidParams("n_paths must be >= 1".into()));
    }
    let mut returns = Vec::with_capacity(n_paths);
    for j in 0..n_paths {
        let mut path_rng = stream_rng(seed, j as u64, stream::EVAL_PATH);
        let mut pi0_rng = stream_rng(seed, j as u64, stream::EVAL_PI0);
        let mut action_rng = stream_rng(seed, j as u64, stream::EVAL_ACTION);
        let out = rlop_episode_impl(
            policy,
            params,
            penalty,
            pi0,
            &mut path_rng,
            &mut pi0_rng,
            &mut action_rng,
        )?;
        returns.push(out.episode_return());
    }
    let mean_return = stats::mean(&returns);
    Ok(EvalReport {
        n_paths,
        mean_return,
        std_error: stats::standard_error(&returns),
        mean_cashflow: mean_return,
        mean_risk: S::zero(),
    })
}

/// Median of `position(t, spot)` over the full `ts × spots` grid.
pub fn median_hedge_on_grid<S: Scalar>(
    mut position: impl FnMut(usize, S) -> Result<S>,
    ts: &[usize],
    spots: &[S],
) -> Result<S> {
    if ts.is_empty() || spots.is_empty() {
        return Err(Error::InvalidParams("hedge grid must be non-empty".into()));
    }
    let mut values = Vec::with_capacity(ts.len() * spots.len());
    for &t in ts {
        for &s in spots {
            values.push(position(t, s)?);
        }
    }
    Ok(stats::median(&values))
}

/// Mean action of a trained QLBS policy at `(t, spot)`.
pub fn qlbs_grid_position<S: Scalar>(
    policy: &GaussianPolicy<S>,
    params: &MarketParams<S>,
    t: usize,
    spot: S,
) -> Result<S> {
    policy.mean_action(&qlbs_features(t, spot, params))
}

/// Mean action of a trained RLOP policy at `(t, spot)` for the longest
/// maturity, with the portfolio-value feature set to that point's analytic
/// price (the value a well-funded replication would carry there).
pub fn rlop_grid_position<S: Scalar>(
    policy: &GaussianPolicy<S>,
    params: &MarketParams<S>,
    t: usize,
    spot: S,
) -> Result<S> {
    let maturity = params.steps;
    if t >= maturity {
        return Err(Error::InvalidParams("grid time must precede maturity".into()));
    }
    let tau = S::from_usize_c(maturity - t) * params.dt;
    let pi = bs_price_at(tau, spot, params.strike, params.r, params.sigma)?;
    policy.mean_action(&rlop_features(t, spot, pi, maturity, params))
}

/// Condition A of the mixing experiment.
pub fn condition_a<S: Scalar>() -> MarketParams<S> {
    let mut m = MarketParams::paper_default();
    m.r = S::from_f64_c(0.01);
    m.mu = S::zero();
    m.sigma = S::from_f64_c(0.1);
    m.lambda = S::from_f64_c(0.5);
    m.epsilon = S::zero();
    m
}

/// Condition B of the mixing experiment.
pub fn condition_b<S: Scalar>() -> MarketParams<S> {
    let mut m = MarketParams::paper_default();
    m.r = S::from_f64_c(0.02);
    m.mu = S::from_f64_c(0.1);
    m.sigma = S::from_f64_c(0.2);
    m.lambda = S::from_f64_c(1.5);
    m.epsilon = S::from_f64_c(0.1);
    m
}

/// Component-wise arithmetic mean of two conditions; step counts must agree.
pub fn mean_condition<S: Scalar>(
    a: &MarketParams<S>,
    b: &MarketParams<S>,
) -> Result<MarketParams<S>> {
    if a.steps != b.steps {
        return Err(Error::InvalidParams("conditions must share the step count".into()));
    }
    let half = S::from_f64_c(0.5);
    Ok(MarketParams {
        r: half * (a.r + b.r),
        mu: half * (a.mu + b.mu),
        sigma: half * (a.sigma + b.sigma),
        steps: a.steps,
        dt: half * (a.dt + b.dt),
        s0: half * (a.s0 + b.s0),
        strike: half * (a.strike + b.strike),
        lambda: half * (a.lambda + b.lambda),
        epsilon: half * (a.epsilon + b.epsilon),
    })
}

/// Logs and evaluations of the mix-then-refine protocol.
pub struct MixedOutcome<S: Scalar> {
    pub mixed_log: TrainLog<S>,
    pub eval_before: EvalReport<S>,
    pub refine_log: TrainLog<S>,
    pub eval_after: EvalReport<S>,
    pub state: TrainerState<S>,
}

fn relative_gap<S: Scalar>(a: S, b: S) -> S {
    (a - b).abs() / a.abs().max(b.abs()).max(S::one())
}

/// Phase 1 trains while Poisson-switching between the two conditions each
/// episode (switch probability `1 − e^{−intensity}`, starting on A); phase 2
/// fine-tunes the same agent on the refine condition, which must be the
/// component-wise mean of A and B. Both phases are evaluated on the refine
/// condition with paired seeds.
pub fn mixed_condition_train<S: Scalar>(
    config_a: &TrainConfig<S>,
    config_b: &TrainConfig<S>,
    switch_intensity: S,
    refine_config: &TrainConfig<S>,
    eval_paths: usize,
    eval_seed: u64,
) -> Result<MixedOutcome<S>> {
    config_a.validate()?;
    config_b.validate()?;
    refine_config.validate()?;
    if !(switch_intensity >= S::zero()) {
        return Err(Error::InvalidParams("switch intensity must be >= 0".into()));
    }
    if config_a.env != config_b.env || config_a.env != refine_config.env {
        return Err(Error::InvalidParams("mixing phases must share the environment".into()));
    }
    if config_a.seed != config_b.seed || config_a.seed != refine_config.seed {
        return Err(Error::InvalidParams("mixing phases must share the seed".into()));
    }
    let mean = mean_condition(&config_a.market, &config_b.market)?;
    let tol = S::from_f64_c(1e-12);
    let fields = |m: &MarketParams<S>| [m.r, m.mu, m.sigma, m.dt, m.s0, m.strike, m.lambda, m.epsilon];
    for (got, want) in fields(&refine_config.market).iter().zip(fields(&mean).iter()) {
        if relative_gap(*got, *want) > tol {
            return Err(Error::InvalidParams(
                "refine market must be the component-wise mean of the two conditions".into(),
            ));
        }
    }

    let switch_p = 1.0 - (-switch_intensity.to_f64_c()).exp();
    let market_a = config_a.market.clone();
    let market_b = config_b.market.clone();

    let mut trainer = Trainer::new(config_a.clone())?;
    let mut mixed_log = TrainLog::default();
    let mut on_b = false;
    for _ in 0..config_a.episodes {
        let ep = trainer.state().episode as u64;
        let mut mix_rng = stream_rng(config_a.seed, ep, stream::MIX);
        if mix_rng.gen::<f64>() < switch_p {
            on_b = !on_b;
        }
        trainer.set_market(if on_b { market_b.clone() } else { market_a.clone() })?;
        mixed_log.rows.push(trainer.run_one()?);
    }

    let est = RewardEstimatorConfig { m_subrollouts: refine_config.m_subrollouts };
    let evaluate = |trainer: &Trainer<S>| -> Result<EvalReport<S>> {
        match refine_config.env {
            EnvKind::Qlbs => evaluate_qlbs(
                &MeanActionPolicy(trainer.policy()),
                &refine_config.market,
                &est,
                eval_paths,
                eval_seed,
            ),
            EnvKind::Rlop => evaluate_rlop(
                &MeanActionPolicy(trainer.policy()),
                &refine_config.market,
                refine_config.penalty,
                &refine_config.pi0,
                eval_paths,
                eval_seed,
            ),
        }
    };

    let eval_before = evaluate(&trainer)?;
    trainer.set_market(refine_config.market.clone())?;
    let refine_log = trainer.run(refine_config.episodes, |_| {})?;
    let eval_after = evaluate(&trainer)?;

    Ok(MixedOutcome { mixed_log, eval_before, refine_log, eval_after, state: trainer.into_state() })
}
