//! Exponential trial family
//! `u = alpha sqrt(beta zeta^n) exp(-(beta x + zeta sum y) / 2)` and its exact
//! log-linear parameter flow.

use serde::{Deserialize, Serialize};

use crate::model::{MarketParams, SpacePoint, UJet};

/// Log-space parameters `(log alpha, log beta, log zeta)`; `log_zeta` is
/// absent for the wealth-only family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialState {
    pub log_alpha: f64,
    pub log_beta: f64,
    pub log_zeta: Option<f64>,
}

impl TrialState {
    pub fn from_values(alpha: f64, beta: f64, zeta: Option<f64>) -> Self {
        Self { log_alpha: alpha.ln(), log_beta: beta.ln(), log_zeta: zeta.map(f64::ln) }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn beta(&self) -> f64 {
        self.log_beta.exp()
    }

    /// `zeta`, or 0 for the wealth-only family.
    pub fn zeta(&self) -> f64 {
        self.log_zeta.map_or(0.0, f64::exp)
    }

    pub fn as_vec(&self) -> Vec<f64> {
        let mut v = vec![self.log_alpha, self.log_beta];
        v.extend(self.log_zeta);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self { log_alpha: v[0], log_beta: v[1], log_zeta: v.get(2).copied() }
    }

    /// `log` of the amplitude `alpha sqrt(beta zeta^n)`.
    pub fn log_amplitude(&self, n: usize) -> f64 {
        self.log_alpha + 0.5 * (self.log_beta + n as f64 * self.log_zeta.unwrap_or(0.0))
    }

    pub fn is_finite(&self) -> bool {
        self.as_vec().iter().all(|v| v.is_finite())
    }
}

/// Which `zeta` rate to use for `n >= 2`.
///
/// `Oracle` divides the projected velocity by the mass-matrix entry
/// `n alpha^2 / 4` obtained by direct integration; `Paper` keeps the
/// single-coordinate entry `alpha^2 / 4`, which scales the `zeta` rate by `n`.
/// Both agree for `n <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RateMode {
    Paper,
    #[default]
    Oracle,
}

impl std::str::FromStr for RateMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "paper" => Ok(Self::Paper),
            "oracle" => Ok(Self::Oracle),
            other => Err(format!("unknown mode `{other}` (expected paper|oracle)")),
        }
    }
}

/// Time derivatives of the log-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConstants {
    pub c_alpha: f64,
    pub c_beta: f64,
    pub c_zeta: Option<f64>,
}

impl RateConstants {
    pub fn as_vec(&self) -> Vec<f64> {
        let mut v = vec![self.c_alpha, self.c_beta];
        v.extend(self.c_zeta);
        v
    }
}

/// Parameters at reversed time 0, matching the payoff exactly.
///
/// Wealth-only family when `k = 0` (and then `n` is ignored).
pub fn initial_params(mp: &MarketParams) -> TrialState {
    let beta = 2.0 * mp.gamma;
    if mp.k == 0.0 || mp.n == 0 {
        debug_assert!(mp.k == 0.0, "k > 0 requires n >= 1");
        let alpha = 1.0 / (mp.gamma * beta.sqrt());
        TrialState::from_values(alpha, beta, None)
    } else {
        let zeta = 2.0 * mp.gamma * mp.k;
        let alpha = 1.0 / (mp.gamma * (beta * zeta.powi(mp.n as i32)).sqrt());
        TrialState::from_values(alpha, beta, Some(zeta))
    }
}

/// Constant rates of the log-parameters for `mp.n` non-tradables.
pub fn rate_constants(mp: &MarketParams, mode: RateMode) -> RateConstants {
    let (r, lam, a0, b0, rho) = (mp.r, mp.lambda, mp.a0, mp.b0, mp.rho);
    let n = mp.n as f64;
    let c_alpha = 0.25
        * (a0 * (n * a0 + 2.0 * n * lam * rho - 0.5 * n * (n + 1.0) * a0 * rho * rho)
            - 2.0 * (n * b0 + r + lam * lam));
    let c_zeta = (mp.n > 0).then(|| {
        let per_coordinate = b0 - a0 * rho * lam + a0 * a0 * (0.5 * (n + 1.0) * rho * rho - 1.0);
        match mode {
            RateMode::Oracle => per_coordinate,
            RateMode::Paper => n * per_coordinate,
        }
    });
    RateConstants { c_alpha, c_beta: r, c_zeta }
}

/// Advance the log-parameters linearly by `t`.
pub fn evolve(s0: &TrialState, rc: &RateConstants, t: f64) -> TrialState {
    TrialState {
        log_alpha: s0.log_alpha + rc.c_alpha * t,
        log_beta: s0.log_beta + rc.c_beta * t,
        log_zeta: s0.log_zeta.map(|z| z + rc.c_zeta.expect("zeta rate for a zeta state") * t),
    }
}

/// Trial value at `p`.
pub fn trial_value(s: &TrialState, n: usize, p: &SpacePoint) -> f64 {
    let exponent = -0.5 * (s.beta() * p.x + s.zeta() * p.y_sum());
    (s.log_amplitude(n) + exponent).exp()
}

/// Fill `jet` with the exact derivatives of the trial at `p`.
pub fn trial_jet_into(s: &TrialState, n: usize, p: &SpacePoint, jet: &mut UJet) {
    let u = trial_value(s, n, p);
    let (beta, zeta) = (s.beta(), s.zeta());
    jet.u = u;
    jet.u_x = -0.5 * beta * u;
    jet.u_xx = 0.25 * beta * beta * u;
    jet.grad_y.iter_mut().for_each(|g| *g = -0.5 * zeta * u);
    jet.mixed_xy.iter_mut().for_each(|g| *g = 0.25 * beta * zeta * u);
    jet.hess_y.iter_mut().for_each(|g| *g = 0.25 * zeta * zeta * u);
}

pub fn trial_jet(s: &TrialState, n: usize, p: &SpacePoint) -> UJet {
    let mut jet = UJet::zeros(n);
    trial_jet_into(s, n, p, &mut jet);
    jet
}

/// `d/dt` of the trial along the flow `rc`, at fixed `p`.
pub fn trial_time_derivative(s: &TrialState, rc: &RateConstants, n: usize, p: &SpacePoint) -> f64 {
    let c_zeta = rc.c_zeta.unwrap_or(0.0);
    let log_rate = rc.c_alpha + 0.5 * rc.c_beta + 0.5 * n as f64 * c_zeta
        - 0.5 * s.beta() * rc.c_beta * p.x
        - 0.5 * s.zeta() * c_zeta * p.y_sum();
    log_rate * trial_value(s, n, p)
}

/// Time-reversed trial solution `u(tau, .)` of the branch selected by `mp.k`.
pub fn trial_solution(mp: &MarketParams, mode: RateMode, tau: f64) -> (TrialState, usize) {
    let branch = mp.value_branch();
    let s = evolve(&initial_params(&branch), &rate_constants(&branch, mode), tau);
    (s, branch.n)
}

/// Value function `V^(k)(t, p) = -u(T - t, p)`.
pub fn value_function(mp: &MarketParams, mode: RateMode, t: f64, p: &SpacePoint) -> f64 {
    let (s, n) = trial_solution(mp, mode, mp.horizon - t);
    let q;
    let p = if n == p.y.len() {
        p
    } else {
        q = SpacePoint::scalar(p.x);
        &q
    };
    -trial_value(&s, n, p)
}
