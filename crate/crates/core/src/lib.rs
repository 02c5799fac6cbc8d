//! Option-hedging laboratory: a GBM market, the modified QLBS environment, the
//! RLOP stacked-portfolio environment, a Black-Scholes oracle, and residual-net
//! Gaussian policies trained with REINFORCE.
//!
//! Everything numeric is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! `*64` aliases below cover the common case.

pub mod blackscholes;
pub mod checkpoint;
pub mod costs;
pub mod error;
pub mod market;
pub mod net;
pub mod qlbs;
pub mod rlop;
pub mod scalar;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type MarketParams64 = market::MarketParams<f64>;
pub type PricePath64 = market::PricePath<f64>;
pub type AdjustmentProcess64 = market::AdjustmentProcess<f64>;
pub type BsQuote64 = blackscholes::BsQuote<f64>;
pub type QlbsEpisode64 = qlbs::QlbsEpisode<f64>;
pub type RlopStack64 = rlop::RlopStack<f64>;
pub type ResNet64 = net::ResNet<f64>;
pub type GaussianPolicy64 = net::GaussianPolicy<f64>;
pub type TrainConfig64 = trainer::TrainConfig<f64>;
pub type TrainLog64 = trainer::TrainLog<f64>;
pub type TrainerState64 = trainer::TrainerState<f64>;
