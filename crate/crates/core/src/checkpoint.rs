//! Checkpoint serialization: trainer state to and from a versioned JSON
//! document with an explicit layer manifest and row-major matrices.
//!
//! JSON numbers are written in shortest-round-trip form, so a load followed
//! by a save reproduces every parameter, optimizer moment, and market field
//! bit-exactly. File IO stays with the caller; this module only converts.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketParams;
use crate::net::{Activation, AdamState, Affine, GaussianPolicy, ResNet};
use crate::scalar::Scalar;
use crate::trainer::{TrainConfig, TrainerState};

pub const CHECKPOINT_VERSION: u32 = 1;

/// One affine layer: name for the manifest, shape, row-major weights, biases.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerRecord<S> {
    name: String,
    rows: usize,
    cols: usize,
    w: Vec<S>,
    b: Vec<S>,
}

/// One network in declaration order: lift, blocks, project.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetRecord<S> {
    activation: Activation,
    lift: LayerRecord<S>,
    blocks: Vec<Vec<LayerRecord<S>>>,
    project: LayerRecord<S>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AdamRecord<S> {
    m: Vec<S>,
    v: Vec<S>,
    step: u64,
    lr: S,
    beta1: S,
    beta2: S,
    eps: S,
}

/// The full serialized form of a [`TrainerState`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint<S> {
    version: u32,
    config: TrainConfig<S>,
    market: MarketParams<S>,
    episode: usize,
    ema: Option<S>,
    std_floor: S,
    policy_mean: NetRecord<S>,
    policy_std: NetRecord<S>,
    baseline: Option<NetRecord<S>>,
    opt_mean: AdamRecord<S>,
    opt_std: AdamRecord<S>,
    opt_baseline: Option<AdamRecord<S>>,
}

fn layer_record<S: Clone>(name: String, a: &Affine<S>) -> LayerRecord<S> {
    LayerRecord { name, rows: a.rows, cols: a.cols, w: a.w.clone(), b: a.b.clone() }
}

fn layer_from_record<S>(rec: LayerRecord<S>, want_name: &str) -> Result<Affine<S>> {
    if rec.name != want_name {
        return Err(Error::Checkpoint(format!(
            "layer manifest order: expected {want_name}, found {}",
            rec.name
        )));
    }
    if rec.w.len() != rec.rows * rec.cols || rec.b.len() != rec.rows {
        return Err(Error::Checkpoint(format!(
            "layer {} shape {}x{} does not match {} weights / {} biases",
            rec.name,
            rec.rows,
            rec.cols,
            rec.w.len(),
            rec.b.len()
        )));
    }
    Ok(Affine { rows: rec.rows, cols: rec.cols, w: rec.w, b: rec.b })
}

fn net_record<S: Clone>(net: &ResNet<S>) -> NetRecord<S> {
    NetRecord {
        activation: net.activation,
        lift: layer_record("lift".into(), &net.lift),
        blocks: net
            .blocks
            .iter()
            .enumerate()
            .map(|(k, block)| {
                block
                    .iter()
                    .enumerate()
                    .map(|(l, layer)| layer_record(format!("block{k}.{l}"), layer))
                    .collect()
            })
            .collect(),
        project: layer_record("project".into(), &net.project),
    }
}

fn net_from_record<S>(rec: NetRecord<S>) -> Result<ResNet<S>> {
    let lift = layer_from_record(rec.lift, "lift")?;
    let mut blocks = Vec::with_capacity(rec.blocks.len());
    for (k, block) in rec.blocks.into_iter().enumerate() {
        let mut layers = Vec::with_capacity(block.len());
        for (l, layer) in block.into_iter().enumerate() {
            layers.push(layer_from_record(layer, &format!("block{k}.{l}"))?);
        }
        blocks.push(layers);
    }
    let project = layer_from_record(rec.project, "project")?;
    Ok(ResNet { lift, blocks, project, activation: rec.activation })
}

fn adam_record<S: Clone>(state: &AdamState<S>) -> AdamRecord<S> {
    AdamRecord {
        m: state.m.clone(),
        v: state.v.clone(),
        step: state.step,
        lr: state.lr.clone(),
        beta1: state.beta1.clone(),
        beta2: state.beta2.clone(),
        eps: state.eps.clone(),
    }
}

fn adam_from_record<S: Scalar>(rec: AdamRecord<S>, param_count: usize) -> Result<AdamState<S>> {
    if rec.m.len() != param_count || rec.v.len() != param_count {
        return Err(Error::Checkpoint(format!(
            "optimizer moments ({}, {}) do not match {param_count} parameters",
            rec.m.len(),
            rec.v.len()
        )));
    }
    Ok(AdamState {
        m: rec.m,
        v: rec.v,
        step: rec.step,
        lr: rec.lr,
        beta1: rec.beta1,
        beta2: rec.beta2,
        eps: rec.eps,
    })
}

impl<S: Scalar + Serialize + DeserializeOwned> Checkpoint<S> {
    pub fn from_state(state: &TrainerState<S>) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config: state.config.clone(),
            market: state.market.clone(),
            episode: state.episode,
            ema: state.ema,
            std_floor: state.policy.std_floor,
            policy_mean: net_record(&state.policy.mean_net),
            policy_std: net_record(&state.policy.std_net),
            baseline: state.baseline.as_ref().map(net_record),
            opt_mean: adam_record(&state.opt_mean),
            opt_std: adam_record(&state.opt_std),
            opt_baseline: state.opt_baseline.as_ref().map(adam_record),
        }
    }

    pub fn into_state(self) -> Result<TrainerState<S>> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        self.config.validate()?;
        self.market.validate()?;
        let mean_net = net_from_record(self.policy_mean)?;
        let std_net = net_from_record(self.policy_std)?;
        let baseline = self.baseline.map(net_from_record).transpose()?;
        let opt_mean = adam_from_record(self.opt_mean, mean_net.param_count())?;
        let opt_std = adam_from_record(self.opt_std, std_net.param_count())?;
        let opt_baseline = match (&baseline, self.opt_baseline) {
            (Some(net), Some(rec)) => Some(adam_from_record(rec, net.param_count())?),
            (None, None) => None,
            _ => {
                return Err(Error::Checkpoint(
                    "baseline network and optimizer must be present together".into(),
                ))
            }
        };
        Ok(TrainerState {
            config: self.config,
            market: self.market,
            episode: self.episode,
            ema: self.ema,
            policy: GaussianPolicy { mean_net, std_net, std_floor: self.std_floor },
            baseline,
            opt_mean,
            opt_std,
            opt_baseline,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

/// Serialize a trainer state to the checkpoint document.
pub fn save_state<S: Scalar + Serialize + DeserializeOwned>(
    state: &TrainerState<S>,
) -> Result<String> {
    Checkpoint::from_state(state).to_json()
}

/// Rebuild a trainer state from a checkpoint document.
pub fn load_state<S: Scalar + Serialize + DeserializeOwned>(
    json: &str,
) -> Result<TrainerState<S>> {
    Checkpoint::<S>::from_json(json)?.into_state()
}
