//! Utility indifference price of `k` forwards on the non-tradable sum.
//!
//! The buyer's price solves `V^(k)(0, x0 - p, y0) = V^(0)(0, x0, y0)`.
//! With exponential trial branches the equation is log-linear in `p` and
//! has the closed form implemented by [`indifference_price_closed`];
//! [`indifference_price_bisect`] solves it for arbitrary evaluators.

use crate::error::{Error, Result};
use crate::model::{MarketParams, SpacePoint};
use crate::trial::{trial_solution, value_function, RateMode};

/// Inputs of a price computation.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceQuery {
    pub mp: MarketParams,
    pub x0: f64,
    pub y0: Vec<f64>,
}

impl PriceQuery {
    pub fn new(mp: MarketParams, x0: f64, y0: Vec<f64>) -> Result<Self> {
        mp.validate()?;
        if y0.len() != mp.n {
            return Err(Error::InvalidParams(format!("y0 has {} entries, expected n = {}", y0.len(), mp.n)));
        }
        if !x0.is_finite() || y0.iter().any(|y| !y.is_finite() || *y < 0.0) {
            return Err(Error::InvalidParams("x0 must be finite and y0 componentwise >= 0".into()));
        }
        Ok(Self { mp, x0, y0 })
    }

    fn without_position(&self) -> MarketParams {
        MarketParams { k: 0.0, ..self.mp.clone() }
    }

    fn point(&self, x: f64) -> SpacePoint {
        SpacePoint::new(x, self.y0.clone())
    }
}

fn check_branch(mp: &MarketParams) -> Result<()> {
    if mp.k > 0.0 && mp.n == 0 {
        return Err(Error::InvalidBranch("k > 0 needs at least one non-tradable asset".into()));
    }
    Ok(())
}

/// Closed-form price from the two trial branches at `t = 0`.
///
/// `beta` follows the same flow in both branches, so `x0` cancels.
pub fn indifference_price_closed(q: &PriceQuery, mode: RateMode) -> Result<f64> {
    check_branch(&q.mp)?;
    if q.mp.k == 0.0 {
        return Ok(0.0);
    }
    let horizon = q.mp.horizon;
    let (s0, n0) = trial_solution(&q.without_position(), mode, horizon);
    let (sk, nk) = trial_solution(&q.mp, mode, horizon);
    let y_sum: f64 = q.y0.iter().sum();
    let bracket = s0.log_amplitude(n0) - sk.log_amplitude(nk) + 0.5 * sk.zeta() * y_sum;
    Ok(2.0 / sk.beta() * bracket)
}

/// Bisection for the root of `g(p) = left(0, x0 - p, y0) - right(0, x0, y0)`.
///
/// Stops once the bracket is no wider than `tol` (or cannot shrink further
/// in floating point) and returns its midpoint.
pub fn indifference_price_bisect<L, R>(left: L, right: R, q: &PriceQuery, bracket: (f64, f64), tol: f64) -> Result<f64>
where
    L: Fn(f64, &SpacePoint) -> f64,
    R: Fn(f64, &SpacePoint) -> f64,
{
    let (mut lo, mut hi) = if bracket.0 <= bracket.1 { bracket } else { (bracket.1, bracket.0) };
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidParams(format!("tolerance must be > 0, got {tol}")));
    }
    let target = right(0.0, &q.point(q.x0));
    let g = |p: f64| left(0.0, &q.point(q.x0 - p)) - target;
    let (g_lo, g_hi) = (g(lo), g(hi));
    if g_lo == 0.0 {
        return Ok(lo);
    }
    if g_hi == 0.0 {
        return Ok(hi);
    }
    if !(g_lo.signum() != g_hi.signum()) || !g_lo.is_finite() || !g_hi.is_finite() {
        return Err(Error::NoSignChange { lo, hi });
    }
    let lo_sign = g_lo.signum();
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bisection using the trial value functions of both branches.
pub fn indifference_price_trial_bisect(q: &PriceQuery, mode: RateMode, bracket: (f64, f64), tol: f64) -> Result<f64> {
    check_branch(&q.mp)?;
    let with = q.mp.clone();
    let without = q.without_position();
    indifference_price_bisect(
        |t, p| value_function(&with, mode, t, p),
        |t, p| value_function(&without, mode, t, p),
        q,
        bracket,
        tol,
    )
}

/// Relative residual `|V^(k)(0, x0 - p, y0) - V^(0)(0, x0, y0)| / |V^(0)(0, x0, y0)|`.
pub fn price_residual(q: &PriceQuery, mode: RateMode, price: f64) -> f64 {
    let reference = value_function(&q.without_position(), mode, 0.0, &q.point(q.x0));
    let shifted = value_function(&q.mp, mode, 0.0, &q.point(q.x0 - price));
    (shifted - reference).abs() / reference.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn query(k: f64, x0: f64, y: f64) -> PriceQuery {
        PriceQuery::new(MarketParams { k, ..MarketParams::reference(1) }, x0, vec![y]).unwrap()
    }

    #[test]
    fn no_position_is_free() {
        let q = query(0.0, 1.0, 1.0);
        assert_eq!(indifference_price_closed(&q, RateMode::Oracle).unwrap(), 0.0);
        assert_eq!(price_residual(&q, RateMode::Oracle, 0.0), 0.0);
    }

    #[test]
    fn zero_branch_on_both_sides_gives_zero() {
        let q = query(0.0, 1.0, 1.0);
        let mp = q.mp.clone();
        let v = |t: f64, p: &SpacePoint| value_function(&mp, RateMode::Oracle, t, p);
        let p = indifference_price_bisect(v, v, &q, (-1.0, 1.0), 1e-12).unwrap();
        assert!(p.abs() <= 1e-12);
    }

    #[test]
    fn closed_form_matches_bisection_at_reference() {
        let q = query(1.0, 1.0, 1.0);
        let closed = indifference_price_closed(&q, RateMode::Oracle).unwrap();
        let bisect = indifference_price_trial_bisect(&q, RateMode::Oracle, (-10.0, 10.0), 1e-12).unwrap();
        assert!((closed - bisect).abs() <= 1e-10, "{closed} vs {bisect}");
        assert!(price_residual(&q, RateMode::Oracle, closed) <= 1e-12);
    }

    #[test]
    fn doubled_position_with_zero_y() {
        for k in [1.0, 2.0] {
            let q = query(k, 0.5, 0.0);
            let closed = indifference_price_closed(&q, RateMode::Oracle).unwrap();
            let bisect = indifference_price_trial_bisect(&q, RateMode::Oracle, (-10.0, 10.0), 1e-12).unwrap();
            assert!((closed - bisect).abs() <= 1e-10);
        }
    }

    #[test]
    fn modes_agree_for_one_non_tradable() {
        let q = query(1.5, 2.0, 0.7);
        let a = indifference_price_closed(&q, RateMode::Oracle).unwrap();
        let b = indifference_price_closed(&q, RateMode::Paper).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn branch_and_bracket_errors() {
        let mp = MarketParams { k: 1.0, ..MarketParams::reference(0) };
        let q = PriceQuery::new(mp, 1.0, vec![]).unwrap();
        assert!(matches!(indifference_price_closed(&q, RateMode::Oracle), Err(Error::InvalidBranch(_))));
        let q = query(1.0, 1.0, 1.0);
        let r = indifference_price_trial_bisect(&q, RateMode::Oracle, (5.0, 10.0), 1e-12);
        assert!(matches!(r, Err(Error::NoSignChange { .. })));
    }

    #[test]
    fn rejects_malformed_queries() {
        assert!(PriceQuery::new(MarketParams::reference(1), 1.0, vec![]).is_err());
        assert!(PriceQuery::new(MarketParams::reference(1), 1.0, vec![-1.0]).is_err());
    }

    proptest! {
        #[test]
        fn price_ignores_initial_wealth(x0 in -5.0f64..10.0, x1 in -5.0f64..10.0, k in 0.1f64..3.0, y in 0.0f64..4.0, n in 1usize..4) {
            let mp = MarketParams { k, ..MarketParams::reference(n) };
            let a = indifference_price_closed(&PriceQuery::new(mp.clone(), x0, vec![y; n]).unwrap(), RateMode::Oracle).unwrap();
            let b = indifference_price_closed(&PriceQuery::new(mp, x1, vec![y; n]).unwrap(), RateMode::Oracle).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }

        #[test]
        fn closed_form_satisfies_defining_equation(x0 in -2.0f64..5.0, k in 0.1f64..3.0, y in 0.0f64..4.0, n in 1usize..4) {
            let mp = MarketParams { k, ..MarketParams::reference(n) };
            let q = PriceQuery::new(mp, x0, vec![y; n]).unwrap();
            let p = indifference_price_closed(&q, RateMode::Oracle).unwrap();
            prop_assert!(price_residual(&q, RateMode::Oracle, p) <= 1e-10);
        }
    }
}
