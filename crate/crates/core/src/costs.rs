//! Bid-ask-spread transaction costs charged on every hedge rebalancing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Spread fraction of the mid price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrictionSpec<S> {
    pub epsilon: S,
}

impl<S: Scalar> FrictionSpec<S> {
    pub fn new(epsilon: S) -> Result<Self> {
        if !epsilon.is_finite() || epsilon < S::zero() {
            return Err(Error::InvalidParams(format!("epsilon must be >= 0, got {}", epsilon)));
        }
        Ok(FrictionSpec { epsilon })
    }

    pub fn cost(&self, delta_u: S, s_mid: S) -> S {
        transaction_cost(delta_u, s_mid, self.epsilon)
    }
}

/// Half-spread cost of trading `delta_u` shares at mid price `s_mid`:
/// `(ε/2)·s_mid·|Δu|`.
///
/// The absolute value makes sells cost the same as buys; the half-spread is
/// paid either way.
pub fn transaction_cost<S: Scalar>(delta_u: S, s_mid: S, epsilon: S) -> S {
    debug_assert!(s_mid > S::zero() && epsilon >= S::zero());
    let half = S::from_f64_c(0.5);
    half * epsilon * s_mid * delta_u.abs()
}
