//! Closed-form European-call price and hedge oracle.
//!
//! Used as the baseline policy in both environments and as ground truth in
//! frictionless risk-neutral tests. All formulas take step indices and convert
//! to physical time `τ = (T − t)·dt` internally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketParams;
use crate::scalar::Scalar;

/// Price, hedge, and the d± intermediates for one (t, spot) query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsQuote<S> {
    pub price: S,
    pub delta: S,
    pub d_plus: S,
    pub d_minus: S,
}

/// Standard normal CDF via Hart's double-precision rational approximation,
/// absolute error below 1e−14 on [−8, 8] (well inside the 1e−10 contract).
///
/// Internally evaluated in `f64`; the result is rounded once into `S`.
pub fn std_normal_cdf<S: Scalar>(y: S) -> S {
    S::from_f64_c(hart_cdf(y.to_f64_c()))
}

fn hart_cdf(x: f64) -> f64 {
    let xabs = x.abs();
    let tail = if xabs > 37.0 {
        0.0
    } else if xabs < 7.071067811865475 {
        let e = (-xabs * xabs / 2.0).exp();
        let mut num = 3.52624965998911e-2 * xabs + 0.700383064443688;
        num = num * xabs + 6.37396220353165;
        num = num * xabs + 33.912866078383;
        num = num * xabs + 112.079291497871;
        num = num * xabs + 221.213596169931;
        num = num * xabs + 220.206867912376;
        let mut den = 8.83883476483184e-2 * xabs + 1.75566716318264;
        den = den * xabs + 16.064177579207;
        den = den * xabs + 86.7807322029461;
        den = den * xabs + 296.564248779674;
        den = den * xabs + 637.333633378831;
        den = den * xabs + 793.826512519948;
        den = den * xabs + 440.413735824752;
        e * num / den
    } else {
        let e = (-xabs * xabs / 2.0).exp();
        let mut build = xabs + 0.65;
        build = xabs + 4.0 / build;
        build = xabs + 3.0 / build;
        build = xabs + 2.0 / build;
        build = xabs + 1.0 / build;
        e / (build * 2.506628274631)
    };
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// `d_±(τ, x) = (ln(x/k) + (r ± σ²/2)·τ) / (σ·√τ)`.
///
/// Degenerate `τ ≤ 0` or `σ ≤ 0` is rejected; callers must branch to the limit
/// formulas in [`bs_price_at`] / [`bs_delta_at`].
pub fn d_pm<S: Scalar>(tau: S, x: S, k: S, r: S, sigma: S) -> Result<(S, S)> {
    if tau <= S::zero() || sigma <= S::zero() {
        return Err(Error::InvalidParams(format!(
            "d_pm requires tau > 0 and sigma > 0, got tau={}, sigma={}",
            tau, sigma
        )));
    }
    if x <= S::zero() || k <= S::zero() {
        return Err(Error::InvalidParams(format!("d_pm requires x > 0 and k > 0, got x={}, k={}", x, k)));
    }
    let half = S::from_f64_c(0.5);
    let denom = sigma * tau.sqrt();
    let log_m = (x / k).ln();
    let d_plus = (log_m + (r + half * sigma * sigma) * tau) / denom;
    let d_minus = (log_m + (r - half * sigma * sigma) * tau) / denom;
    Ok((d_plus, d_minus))
}

/// Call price at time-to-maturity `tau`:
/// `c = x·N(d₊) − k·e^{−rτ}·N(d₋)`, with the τ=0 and σ=0 limits
/// `max(x − k·e^{−rτ}, 0)`.
pub fn bs_price_at<S: Scalar>(tau: S, x: S, k: S, r: S, sigma: S) -> Result<S> {
    if x <= S::zero() || !x.is_finite() {
        return Err(Error::InvalidParams(format!("spot must be > 0, got {}", x)));
    }
    if tau <= S::zero() || sigma <= S::zero() {
        let kd = k * (-r * tau.max(S::zero())).exp();
        return Ok((x - kd).max(S::zero()));
    }
    let (d_plus, d_minus) = d_pm(tau, x, k, r, sigma)?;
    Ok(x * std_normal_cdf(d_plus) - k * (-r * tau).exp() * std_normal_cdf(d_minus))
}

/// Hedge position at time-to-maturity `tau`: `N(d₊)`, with the degenerate
/// limit an indicator of `x` vs the discounted strike (0.5 at equality).
pub fn bs_delta_at<S: Scalar>(tau: S, x: S, k: S, r: S, sigma: S) -> Result<S> {
    if x <= S::zero() || !x.is_finite() {
        return Err(Error::InvalidParams(format!("spot must be > 0, got {}", x)));
    }
    if tau <= S::zero() || sigma <= S::zero() {
        let kd = k * (-r * tau.max(S::zero())).exp();
        let half = S::from_f64_c(0.5);
        return Ok(if x > kd {
            S::one()
        } else if x < kd {
            S::zero()
        } else {
            half
        });
    }
    let (d_plus, _) = d_pm(tau, x, k, r, sigma)?;
    Ok(std_normal_cdf(d_plus))
}

/// Call price at step `t` under `params` (τ = (T − t)·dt).
pub fn bs_price<S: Scalar>(t: usize, x: S, params: &MarketParams<S>) -> Result<S> {
    if t > params.steps {
        return Err(Error::InvalidParams(format!("step {t} beyond maturity {}", params.steps)));
    }
    bs_price_at(params.tau(t), x, params.strike, params.r, params.sigma)
}

/// Hedge position at step `t` under `params`.
pub fn bs_delta<S: Scalar>(t: usize, x: S, params: &MarketParams<S>) -> Result<S> {
    if t > params.steps {
        return Err(Error::InvalidParams(format!("step {t} beyond maturity {}", params.steps)));
    }
    bs_delta_at(params.tau(t), x, params.strike, params.r, params.sigma)
}

/// The deterministic BS hedging policy: the delta at (t, spot). Usable wherever
/// either environment expects a policy.
pub fn bs_policy<S: Scalar>(t: usize, spot: S, params: &MarketParams<S>) -> Result<S> {
    bs_delta(t, spot, params)
}

/// Marker for the deterministic BS hedging strategy; implements the policy
/// traits of both environments by returning the delta at the observed spot.
#[derive(Debug, Clone, Copy, Default)]
pub struct BsHedgePolicy;

/// Full quote (price, delta, d±) at step `t`. In the degenerate τ=0 / σ=0
/// limits d± are reported as ±∞ matching the indicator delta.
pub fn bs_quote<S: Scalar>(t: usize, x: S, params: &MarketParams<S>) -> Result<BsQuote<S>> {
    let price = bs_price(t, x, params)?;
    let delta = bs_delta(t, x, params)?;
    let tau = params.tau(t);
    let (d_plus, d_minus) = if tau > S::zero() && params.sigma > S::zero() {
        d_pm(tau, x, params.strike, params.r, params.sigma)?
    } else {
        let kd = params.strike * (-params.r * tau).exp();
        let inf = S::infinity();
        if x > kd {
            (inf, inf)
        } else if x < kd {
            (-inf, -inf)
        } else {
            (S::zero(), S::zero())
        }
    };
    Ok(BsQuote { price, delta, d_plus, d_minus })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Reference Φ values (arbitrary-precision quadrature, rounded to f64).
    const PHI_TABLE: &[(f64, f64)] = &[
        (-8.0, 6.2209605742717841e-16),
        (-7.5, 3.1908916729108962e-14),
        (-7.0, 1.2798125438858350e-12),
        (-6.5, 4.0160005838591178e-11),
        (-6.0, 9.8658764503769814e-10),
        (-5.5, 1.8989562465887719e-8),
        (-5.0, 2.8665157187919391e-7),
        (-4.5, 3.3976731247300604e-6),
        (-4.0, 3.1671241833119921e-5),
        (-3.5, 0.00023262907903552504),
        (-3.0, 0.0013498980316300945),
        (-2.5, 0.0062096653257761352),
        (-2.0, 0.022750131948179207),
        (-1.5, 0.066807201268858066),
        (-1.0, 0.15865525393145705),
        (-0.5, 0.30853753872598690),
        (0.0, 0.5),
        (0.5, 0.69146246127401310),
        (1.0, 0.84134474606854295),
        (1.5, 0.93319279873114193),
        (2.0, 0.97724986805182079),
        (2.5, 0.99379033467422386),
        (3.0, 0.99865010196836991),
        (3.5, 0.99976737092096447),
        (4.0, 0.99996832875816688),
        (4.5, 0.99999660232687527),
        (5.0, 0.99999971334842812),
        (5.5, 0.99999998101043753),
        (6.0, 0.99999999901341235),
        (6.5, 0.99999999995983999),
        (7.0, 0.99999999999872019),
        (7.5, 0.99999999999996809),
        (8.0, 0.99999999999999938),
        (1.96, 0.97500210485177957),
        (-1.96, 0.024997895148220434),
        (0.1, 0.53982783727702898),
        (-0.35, 0.36316934882438093),
        (2.75, 0.99702023676494544),
        (5.25, 0.99999992395039484),
    ];

    fn paper() -> MarketParams<f64> {
        MarketParams::paper_default()
    }

    #[test]
    fn cdf_matches_reference_table() {
        for &(x, want) in PHI_TABLE {
            let got = std_normal_cdf(x);
            assert!((got - want).abs() <= 1e-10, "Phi({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn cdf_limits_and_symmetry() {
        assert_eq!(std_normal_cdf(0.0f64), 0.5);
        assert_eq!(std_normal_cdf(40.0f64), 1.0);
        assert_eq!(std_normal_cdf(-40.0f64), 0.0);
        assert!((std_normal_cdf(1.96f64) - 0.9750021048517795).abs() < 1e-10);
    }

    #[test]
    fn d_pm_fixture_and_identity() {
        // tau=1, x=k, r=0, sigma=0.2 → ±0.1
        let (dp, dm) = d_pm(1.0f64, 1.0, 1.0, 0.0, 0.2).unwrap();
        assert!((dp - 0.1).abs() < 1e-15);
        assert!((dm + 0.1).abs() < 1e-15);

        // frozen fixture at the experiment parameters
        let (dp, dm) = d_pm(5.0f64, 1.0, 1.0, 0.01, 0.1).unwrap();
        assert!((dp - 0.33541019662496845).abs() < 1e-15);
        assert!((dm - 0.11180339887498948).abs() < 1e-15);

        assert!(d_pm(0.0f64, 1.0, 1.0, 0.0, 0.2).is_err());
        assert!(d_pm(1.0f64, 1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn price_fixture() {
        // frozen closed-form value; the 512-node Gauss–Hermite oracle value is
        // 0.11342423760527409 (pinned before the build), within 2e−4 of it
        let p = bs_price(0, 1.0, &paper()).unwrap();
        assert!((p - 0.11338789096455590).abs() < 1e-14, "got {p}");
        assert!((p - 0.11342423760527409).abs() <= 2e-4);
    }

    #[test]
    fn price_asymptotics() {
        let params = paper();
        let low = bs_price(0, 1e-12, &params).unwrap();
        assert!(low.abs() < 1e-12);

        let x = 1e6;
        let want = x - params.strike * (-params.r * 5.0).exp();
        let got = bs_price(0, x, &params).unwrap();
        assert!(((got - want) / want).abs() < 1e-9);
    }

    #[test]
    fn delta_matches_finite_difference_of_price() {
        let params = paper();
        let h = 1e-6;
        let fd = (bs_price(0, 1.0 + h, &params).unwrap() - bs_price(0, 1.0 - h, &params).unwrap()) / (2.0 * h);
        let delta = bs_delta(0, 1.0, &params).unwrap();
        assert!((fd - delta).abs() < 1e-6, "fd {fd} delta {delta}");
    }

    #[test]
    fn delta_limits() {
        let params = paper();
        assert!((bs_delta(0, 1e6, &params).unwrap() - 1.0).abs() < 1e-12);
        assert!(bs_delta(0, 1e-9, &params).unwrap() < 1e-12);
    }

    #[test]
    fn degenerate_branches() {
        let mut params = paper();
        // t = T: payoff
        assert!((bs_price(5, 1.3, &params).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(bs_delta(5, 1.3, &params).unwrap(), 1.0);
        assert_eq!(bs_delta(5, 0.7, &params).unwrap(), 0.0);
        assert_eq!(bs_delta(5, 1.0, &params).unwrap(), 0.5);

        // sigma = 0: discounted-forward intrinsic
        params.sigma = 0.0;
        let kd = (-0.01f64 * 5.0).exp();
        assert!((bs_price(0, 1.0, &params).unwrap() - (1.0 - kd)).abs() < 1e-15);
        assert_eq!(bs_delta(0, 1.0, &params).unwrap(), 1.0);
        assert_eq!(bs_delta(0, kd, &params).unwrap(), 0.5);
    }

    #[test]
    fn terminal_consistency_near_zero_tau() {
        for &x in &[0.7f64, 0.95, 1.05, 1.4] {
            let c = bs_price_at(1e-9, x, 1.0, 0.01, 0.1).unwrap();
            let payoff = (x - 1.0f64).max(0.0);
            assert!((c - payoff).abs() < 1e-4, "x={x}: c={c} payoff={payoff}");
        }
    }

    #[test]
    fn policy_slope_grows_near_maturity() {
        // |Δdelta/Δspot| at the strike is larger at t=T−1 than at t=0
        let params = paper();
        let h = 1e-4;
        let slope = |t: usize| {
            (bs_policy(t, 1.0 + h, &params).unwrap() - bs_policy(t, 1.0 - h, &params).unwrap()) / (2.0 * h)
        };
        assert!(slope(4).abs() > slope(0).abs());
    }

    #[test]
    fn quote_bundles_fields() {
        let q = bs_quote(0, 1.0, &paper()).unwrap();
        assert!((q.price - 0.11338789096455590).abs() < 1e-14);
        assert!((q.delta - std_normal_cdf(q.d_plus)).abs() < 1e-15);
        assert!((q.d_plus - q.d_minus - 0.1 * 5.0f64.sqrt()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn cdf_monotone(a in -8.0f64..8.0, b in -8.0f64..8.0) {
            prop_assume!(a < b);
            prop_assert!(std_normal_cdf(a) <= std_normal_cdf(b));
        }

        #[test]
        fn cdf_symmetry(x in -8.0f64..8.0) {
            prop_assert!((std_normal_cdf(x) + std_normal_cdf(-x) - 1.0).abs() < 1e-14);
        }

        #[test]
        fn d_gap_identity(tau in 0.01f64..10.0, x in 0.05f64..5.0, k in 0.05f64..5.0,
                          r in -0.05f64..0.1, sigma in 0.01f64..1.0) {
            let (dp, dm) = d_pm(tau, x, k, r, sigma).unwrap();
            let gap = sigma * tau.sqrt();
            prop_assert!((dp - dm - gap).abs() < 1e-10 * (1.0 + dp.abs()));
        }

        #[test]
        fn price_bounds_and_monotonicity(
            t in 0usize..5,
            x1 in 0.1f64..3.0,
            x2 in 0.1f64..3.0,
        ) {
            let params = MarketParams::<f64>::paper_default();
            let tau = params.tau(t);
            let kd = params.strike * (-params.r * tau).exp();
            let p1 = bs_price(t, x1, &params).unwrap();
            prop_assert!(p1 >= (x1 - kd).max(0.0) - 1e-12);
            prop_assert!(p1 <= x1 + 1e-12);
            let d1 = bs_delta(t, x1, &params).unwrap();
            prop_assert!((0.0..=1.0).contains(&d1));
            if x1 < x2 {
                prop_assert!(bs_price(t, x2, &params).unwrap() >= p1 - 1e-12);
                prop_assert!(bs_delta(t, x2, &params).unwrap() >= d1 - 1e-12);
            }
        }
    }
}
