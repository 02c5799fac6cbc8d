//! Layered run configuration: the `paper-default` profile, then an optional
//! TOML file (plain config or a previous run's manifest), then flag overrides.
//! Every field is resolved to a concrete value before a manifest is written,
//! so a manifest round-trips to the identical run.

use anyhow::{bail, Context, Result};
use hedgelab::market::AdjustTarget;
use hedgelab::net::{Activation, NetConfig};
use hedgelab::rlop::{PenaltyKind, PenaltySpec, Pi0Rule};
use hedgelab::trainer::EnvKind;
use hedgelab::{AdjustmentProcess64, MarketParams64, TrainConfig64};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const PROFILE_NAME: &str = "paper-default";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub profile: String,
    pub env: String,
    pub seed: u64,
    /// `None` falls back to the environment default (4000 QLBS, 8000 RLOP).
    pub episodes: Option<usize>,
    pub lr_policy: f64,
    pub lr_baseline: f64,
    pub m_subrollouts: usize,
    pub penalty: String,
    pub pi0: String,
    pub pi0_constant: f64,
    pub std_floor: f64,
    pub ema_halflife: f64,
    pub checkpoint_every: usize,
    pub market: MarketSection,
    pub adjustment: AdjustSection,
    pub net: NetSection,
    pub sweep: SweepSection,
    pub hedge: HedgeSection,
    pub quote: QuoteSection,
    pub mixed: MixedSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            profile: PROFILE_NAME.to_string(),
            env: "qlbs".to_string(),
            seed: 0,
            episodes: None,
            lr_policy: 1e-4,
            lr_baseline: 1e-4,
            m_subrollouts: 16,
            penalty: "squared".to_string(),
            pi0: "bs".to_string(),
            pi0_constant: 0.0,
            std_floor: 1e-3,
            ema_halflife: 100.0,
            checkpoint_every: 0,
            market: MarketSection::default(),
            adjustment: AdjustSection::default(),
            net: NetSection::default(),
            sweep: SweepSection::default(),
            hedge: HedgeSection::default(),
            quote: QuoteSection::default(),
            mixed: MixedSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketSection {
    pub r: f64,
    pub mu: f64,
    pub sigma: f64,
    pub steps: usize,
    pub dt: f64,
    pub s0: f64,
    pub strike: f64,
    pub lambda: f64,
    pub epsilon: f64,
}

impl Default for MarketSection {
    fn default() -> Self {
        let m = MarketParams64::paper_default();
        MarketSection {
            r: m.r,
            mu: m.mu,
            sigma: m.sigma,
            steps: m.steps,
            dt: m.dt,
            s0: m.s0,
            strike: m.strike,
            lambda: m.lambda,
            epsilon: m.epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdjustSection {
    pub intensity: f64,
    pub scale: f64,
    pub targets: Vec<String>,
}

impl Default for AdjustSection {
    fn default() -> Self {
        AdjustSection { intensity: 0.0, scale: 0.1, targets: vec!["s0".to_string()] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetSection {
    pub latent_dim: usize,
    pub blocks: usize,
    pub layers_per_block: usize,
    pub activation: String,
}

impl Default for NetSection {
    fn default() -> Self {
        let n = NetConfig::default();
        NetSection {
            latent_dim: n.latent_dim,
            blocks: n.blocks,
            layers_per_block: n.layers_per_block,
            activation: "tanh".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// `lambda` or `epsilon`.
    pub param: String,
    /// `None` falls back to the standard grid for the chosen parameter.
    pub values: Option<Vec<f64>>,
    /// `trained` or `bs`.
    pub policy: String,
    pub episodes: usize,
    pub eval_paths: usize,
    pub eval_seed: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            param: "lambda".to_string(),
            values: None,
            policy: "trained".to_string(),
            episodes: 1500,
            eval_paths: 2000,
            eval_seed: 424242,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HedgeSection {
    /// `checkpoint` (requires `checkpoint` path) or `bs`.
    pub policy: String,
    pub checkpoint: Option<String>,
    pub ts: Vec<usize>,
    pub spots: Vec<f64>,
}

impl Default for HedgeSection {
    fn default() -> Self {
        HedgeSection {
            policy: "checkpoint".to_string(),
            checkpoint: None,
            ts: vec![0, 1, 2, 3, 4],
            spots: vec![0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuoteSection {
    /// Time to expiry in years.
    pub tau: f64,
    pub spot: f64,
}

impl Default for QuoteSection {
    fn default() -> Self {
        QuoteSection { tau: 5.0, spot: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixedSection {
    pub switch_intensity: f64,
    pub mixed_episodes: usize,
    pub refine_episodes: usize,
    pub eval_paths: usize,
    pub eval_seed: u64,
}

impl Default for MixedSection {
    fn default() -> Self {
        MixedSection {
            switch_intensity: 0.2,
            mixed_episodes: 1200,
            refine_episodes: 800,
            eval_paths: 400,
            eval_seed: 616161,
        }
    }
}

impl Config {
    /// Parses a config file; a previous run's manifest is accepted and its
    /// `[config]` echo used, so any run can be replayed from its manifest.
    pub fn from_file(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let value: toml::Value = text
            .parse()
            .with_context(|| format!("invalid TOML in config {}", path.display()))?;
        let cfg = if let Some(inner) = value.get("config") {
            inner.clone().try_into().context("invalid [config] section in manifest")?
        } else {
            value.try_into().context("invalid config file")?
        };
        Ok(cfg)
    }

    /// Fills every derived default so the echoed config is self-contained.
    pub fn resolve(&mut self) -> Result<()> {
        if self.profile != PROFILE_NAME {
            bail!("unknown profile {:?}; only {:?} exists", self.profile, PROFILE_NAME);
        }
        let env = self.env_kind()?;
        if self.episodes.is_none() {
            self.episodes = Some(match env {
                EnvKind::Qlbs => 4000,
                EnvKind::Rlop => 8000,
            });
        }
        if self.sweep.values.is_none() {
            self.sweep.values = Some(match self.sweep.param.as_str() {
                "lambda" => vec![0.0, 1.0, 2.0, 3.0],
                "epsilon" => vec![0.0, 0.01, 0.02],
                other => bail!("unknown sweep parameter {other:?}; use lambda or epsilon"),
            });
        }
        Ok(())
    }

    pub fn env_kind(&self) -> Result<EnvKind> {
        match self.env.to_ascii_lowercase().as_str() {
            "qlbs" => Ok(EnvKind::Qlbs),
            "rlop" => Ok(EnvKind::Rlop),
            other => bail!("unknown env {other:?}; use qlbs or rlop"),
        }
    }

    pub fn market_params(&self) -> MarketParams64 {
        MarketParams64 {
            r: self.market.r,
            mu: self.market.mu,
            sigma: self.market.sigma,
            steps: self.market.steps,
            dt: self.market.dt,
            s0: self.market.s0,
            strike: self.market.strike,
            lambda: self.market.lambda,
            epsilon: self.market.epsilon,
        }
    }

    fn adjustment_process(&self) -> Result<AdjustmentProcess64> {
        // intensity zero never fires whatever the targets; canonicalize so
        // the trainer config matches the plain off() process
        if self.adjustment.intensity == 0.0 {
            return Ok(AdjustmentProcess64::off());
        }
        let mut targets = Vec::new();
        for name in &self.adjustment.targets {
            targets.push(match name.to_ascii_lowercase().as_str() {
                "s0" => AdjustTarget::S0,
                "sigma" => AdjustTarget::Sigma,
                "strike" => AdjustTarget::Strike,
                other => bail!("unknown adjustment target {other:?}; use s0, sigma or strike"),
            });
        }
        Ok(AdjustmentProcess64 {
            intensity: self.adjustment.intensity,
            scale: self.adjustment.scale,
            targets,
        })
    }

    pub fn net_config(&self) -> Result<NetConfig> {
        Ok(NetConfig {
            input_dim: 8,
            latent_dim: self.net.latent_dim,
            blocks: self.net.blocks,
            layers_per_block: self.net.layers_per_block,
            output_dim: 1,
            activation: match self.net.activation.to_ascii_lowercase().as_str() {
                "tanh" => Activation::Tanh,
                "linear" => Activation::Linear,
                other => bail!("unknown activation {other:?}; use tanh or linear"),
            },
        })
    }

    fn penalty_spec(&self) -> Result<PenaltySpec> {
        Ok(PenaltySpec {
            kind: match self.penalty.to_ascii_lowercase().as_str() {
                "squared" => PenaltyKind::Squared,
                "absolute" => PenaltyKind::Absolute,
                other => bail!("unknown penalty {other:?}; use squared or absolute"),
            },
        })
    }

    fn pi0_rule(&self) -> Result<Pi0Rule<f64>> {
        Ok(match self.pi0.to_ascii_lowercase().as_str() {
            "bs" => Pi0Rule::BsOracle,
            "uniform" => Pi0Rule::UniformRandom,
            "constant" => Pi0Rule::Constant(self.pi0_constant),
            other => bail!("unknown pi0 rule {other:?}; use bs, uniform or constant"),
        })
    }

    /// The trainer view of this config. `resolve` must have run.
    pub fn to_train_config(&self) -> Result<TrainConfig64> {
        let cfg = TrainConfig64 {
            env: self.env_kind()?,
            market: self.market_params(),
            adjustment: self.adjustment_process()?,
            episodes: self.episodes.expect("config must be resolved"),
            lr_policy: self.lr_policy,
            lr_baseline: self.lr_baseline,
            m_subrollouts: self.m_subrollouts,
            penalty: self.penalty_spec()?,
            pi0: self.pi0_rule()?,
            net: self.net_config()?,
            std_floor: self.std_floor,
            ema_halflife: self.ema_halflife,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
