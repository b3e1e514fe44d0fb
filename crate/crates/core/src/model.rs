//! Market constants, terminal payoff and the time-reversed HJB right-hand side
//! for an investor trading one Black-Scholes asset while exposed to `n`
//! geometric non-tradable assets through a forward on their sum.
//!
//! With `u(t, x, y) = -phi(T - t, x, y)` the HJB becomes the initial value
//! problem `u_t = F(x, y, u, Du, D^2u)`, `u(0) = f`, where
//!
//! ```text
//! F = 1/2 a0^2 sum_i y_i^2 u_{y_i y_i} + r x u_x + b0 sum_i y_i u_{y_i}
//!     - (rho a0 sum_i y_i u_{x y_i} + lambda u_x)^2 / (2 u_xx)
//! f = gamma^{-1} exp(-gamma (x + k sum_i y_i))
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All model constants of the non-tradable-stocks HJB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Risk-free rate.
    pub r: f64,
    /// Sharpe ratio of the tradable asset.
    pub lambda: f64,
    /// Absolute risk aversion of the exponential utility.
    pub gamma: f64,
    /// Volatility coefficient of each non-tradable asset.
    pub a0: f64,
    /// Drift coefficient of each non-tradable asset.
    pub b0: f64,
    /// Correlation between the tradable and each non-tradable driver.
    pub rho: f64,
    /// Number of non-tradable assets.
    pub n: usize,
    /// Units of the forward held.
    pub k: f64,
    /// Horizon.
    pub horizon: f64,
}

impl MarketParams {
    /// The reference parameter set: gamma = 0.5, r = 0.05, lambda = 0.1,
    /// a0 = 0.3, b0 = 0.2, rho = 0.1, T = 1, and one forward unit whenever
    /// there are non-tradable assets.
    pub fn reference(n: usize) -> Self {
        Self {
            r: 0.05,
            lambda: 0.1,
            gamma: 0.5,
            a0: 0.3,
            b0: 0.2,
            rho: 0.1,
            n,
            k: if n == 0 { 0.0 } else { 1.0 },
            horizon: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.r, self.lambda, self.gamma, self.a0, self.b0, self.rho, self.k, self.horizon];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("non-finite parameter".into()));
        }
        if self.gamma <= 0.0 {
            return Err(Error::InvalidParams(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if self.horizon <= 0.0 {
            return Err(Error::InvalidParams(format!("T must be > 0, got {}", self.horizon)));
        }
        if self.rho.abs() > 1.0 {
            return Err(Error::InvalidParams(format!("|rho| must be <= 1, got {}", self.rho)));
        }
        if self.a0 < 0.0 || (self.n >= 1 && self.a0 == 0.0) {
            return Err(Error::InvalidParams(format!(
                "a0 must be >= 0 (and > 0 when n >= 1), got {}",
                self.a0
            )));
        }
        if self.k < 0.0 {
            return Err(Error::InvalidParams(format!("k must be >= 0, got {}", self.k)));
        }
        Ok(())
    }

    /// Parameters of the branch that actually governs the value function:
    /// without a derivative position the problem does not see `y`.
    pub fn value_branch(&self) -> MarketParams {
        if self.k == 0.0 {
            MarketParams { n: 0, ..self.clone() }
        } else {
            self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.n + 1
    }
}

/// A point `(x, y)` of the state space.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacePoint {
    pub x: f64,
    pub y: Vec<f64>,
}

impl SpacePoint {
    pub fn new(x: f64, y: Vec<f64>) -> Self {
        Self { x, y }
    }

    pub fn scalar(x: f64) -> Self {
        Self { x, y: Vec::new() }
    }

    pub fn y_sum(&self) -> f64 {
        self.y.iter().sum()
    }
}

/// Value and the spatial derivatives of `u` that enter `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct UJet {
    pub u: f64,
    pub u_x: f64,
    pub u_xx: f64,
    pub grad_y: Vec<f64>,
    pub mixed_xy: Vec<f64>,
    /// Row-major `n x n`.
    pub hess_y: Vec<f64>,
}

impl UJet {
    pub fn zeros(n: usize) -> Self {
        Self {
            u: 0.0,
            u_x: 0.0,
            u_xx: 0.0,
            grad_y: vec![0.0; n],
            mixed_xy: vec![0.0; n],
            hess_y: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.grad_y.len()
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        self.hess_y[i * self.n() + j]
    }

    pub fn scaled(&self, c: f64) -> Self {
        let s = |v: &Vec<f64>| v.iter().map(|e| c * e).collect();
        Self {
            u: c * self.u,
            u_x: c * self.u_x,
            u_xx: c * self.u_xx,
            grad_y: s(&self.grad_y),
            mixed_xy: s(&self.mixed_xy),
            hess_y: s(&self.hess_y),
        }
    }

    /// Jet of `-u`, i.e. the untransformed value function `phi`.
    pub fn negated(&self) -> Self {
        self.scaled(-1.0)
    }
}

/// Threshold below which `u_xx` is treated as singular.
pub fn singular_guard(u: f64) -> f64 {
    1e-12 * u.abs()
}

/// Exponential utility `U(w) = -exp(-gamma w) / gamma`.
pub fn utility(gamma: f64, wealth: f64) -> f64 {
    -(-gamma * wealth).exp() / gamma
}

/// Time-reversed initial condition `f = -U(x + k sum y)`.
pub fn terminal_payoff(mp: &MarketParams, p: &SpacePoint) -> f64 {
    (-mp.gamma * (p.x + mp.k * p.y_sum())).exp() / mp.gamma
}

/// Pieces of `F` that do not involve the `1/u_xx` quotient, and the
/// numerator of the quotient.
fn rhs_parts(mp: &MarketParams, p: &SpacePoint, jet: &UJet) -> (f64, f64) {
    let n = jet.n();
    debug_assert_eq!(p.y.len(), n);
    let mut diffusion = 0.0;
    let mut drift = 0.0;
    let mut cross = 0.0;
    for i in 0..n {
        let yi = p.y[i];
        diffusion += yi * yi * jet.hess(i, i);
        drift += yi * jet.grad_y[i];
        cross += yi * jet.mixed_xy[i];
    }
    let linear = 0.5 * mp.a0 * mp.a0 * diffusion + mp.r * p.x * jet.u_x + mp.b0 * drift;
    let numerator = mp.rho * mp.a0 * cross + mp.lambda * jet.u_x;
    (linear, numerator)
}

/// Right-hand side `F` of the time-reversed HJB at `p`.
pub fn rhs_f(mp: &MarketParams, p: &SpacePoint, jet: &UJet) -> Result<f64> {
    let guard = singular_guard(jet.u);
    if jet.u_xx <= guard {
        return Err(Error::SingularHessian { u_xx: jet.u_xx, guard });
    }
    let (linear, num) = rhs_parts(mp, p, jet);
    Ok(linear - num * num / (2.0 * jet.u_xx))
}

/// Like [`rhs_f`] but clamps `u_xx` up to the guard instead of failing.
/// The flag reports whether the clamp fired.
pub fn rhs_f_clamped(mp: &MarketParams, p: &SpacePoint, jet: &UJet) -> (f64, bool) {
    let guard = singular_guard(jet.u);
    let (u_xx, clamped) = if jet.u_xx <= guard { (guard, true) } else { (jet.u_xx, false) };
    let (linear, num) = rhs_parts(mp, p, jet);
    (linear - num * num / (2.0 * u_xx), clamped)
}

/// Local diffusion-like coefficient used for the explicit time-step bound:
/// the largest Gershgorin row sum of the linearised second-order operator.
pub fn diffusion_bound(mp: &MarketParams, p: &SpacePoint, jet: &UJet) -> f64 {
    let (_, num) = rhs_parts(mp, p, jet);
    let u_xx = jet.u_xx.max(singular_guard(jet.u));
    // dF/du_xx
    let d_xx = num * num / (2.0 * u_xx * u_xx);
    // half of dF/du_{x y_i}
    let mut row_x = d_xx;
    let mut best: f64 = 0.0;
    for &yi in &p.y {
        let d_xy = 0.5 * (num * mp.rho * mp.a0 * yi / u_xx).abs();
        row_x += d_xy;
        best = best.max(0.5 * mp.a0 * mp.a0 * yi * yi + d_xy);
    }
    best.max(row_x)
}
