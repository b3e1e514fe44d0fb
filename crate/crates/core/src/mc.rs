//! Monte Carlo check of the value function: simulate wealth under a
//! feedback exposure and average the terminal utility.
//!
//! Controls are expressed as the volatility-scaled dollar position
//! `e = theta sigma s`, so the wealth dynamics read
//! `dX = r X dt + e (lambda dt + dB)` and the asset volatility only matters
//! through the discretisation. Within a step the dollar amount `e / sigma`
//! is bought at the start and held, the tradable return is drawn exactly
//! from its log-normal law, and each non-tradable follows exact geometric
//! Brownian motion with `corr(B, W_i) = rho`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{singular_guard, utility, MarketParams, SpacePoint, UJet};
use crate::trial::{initial_params, rate_constants, RateMode};

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    /// Volatility of the tradable asset used for simulation only.
    pub sigma_mc: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { paths: 100_000, steps: 2000, seed: 42, sigma_mc: 0.2 }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 || self.steps == 0 {
            return Err(Error::InvalidParams("paths and steps must be >= 1".into()));
        }
        if !(self.sigma_mc > 0.0 && self.sigma_mc.is_finite()) {
            return Err(Error::InvalidParams(format!("sigma_mc must be > 0, got {}", self.sigma_mc)));
        }
        Ok(())
    }
}

/// Sample statistics of the simulated terminal utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Fraction of paths whose wealth dipped below zero at some step.
    pub negative_wealth_fraction: f64,
}

/// Feedback rule returning the exposure at time `t`, wealth `x`, and
/// non-tradable values `y`.
pub trait ExposurePolicy: Sync {
    fn exposure(&self, t: f64, x: f64, y: &[f64]) -> f64;
}

impl<F> ExposurePolicy for F
where
    F: Fn(f64, f64, &[f64]) -> f64 + Sync,
{
    fn exposure(&self, t: f64, x: f64, y: &[f64]) -> f64 {
        self(t, x, y)
    }
}

/// A policy multiplied by a constant factor.
pub struct Scaled<P>(pub P, pub f64);

impl<P: ExposurePolicy> ExposurePolicy for Scaled<P> {
    fn exposure(&self, t: f64, x: f64, y: &[f64]) -> f64 {
        self.1 * self.0.exposure(t, x, y)
    }
}

/// Maximiser of the Hamiltonian given the jet of `phi = -u` at `p`:
/// `-(rho a0 sum_i y_i phi_{x y_i} + lambda phi_x) / phi_xx`.
pub fn optimal_control_exposure(mp: &MarketParams, p: &SpacePoint, jet_phi: &UJet) -> Result<f64> {
    let guard = singular_guard(jet_phi.u);
    if -jet_phi.u_xx <= guard {
        return Err(Error::SingularHessian { u_xx: -jet_phi.u_xx, guard });
    }
    let cross: f64 = p.y.iter().zip(&jet_phi.mixed_xy).map(|(y, m)| y * m).sum();
    Ok(-(mp.rho * mp.a0 * cross + mp.lambda * jet_phi.u_x) / jet_phi.u_xx)
}

/// The optimal exposure implied by the exponential trial solution.
///
/// For the trial family the jet ratios are explicit, giving
/// `e = (2 lambda - rho a0 zeta sum y) / beta` at reversed time `T - t`.
#[derive(Debug, Clone)]
pub struct TrialPolicy {
    lambda: f64,
    rho_a0: f64,
    horizon: f64,
    log_beta0: f64,
    c_beta: f64,
    zeta_rates: Option<(f64, f64)>,
}

impl TrialPolicy {
    pub fn new(mp: &MarketParams, mode: RateMode) -> Self {
        let branch = mp.value_branch();
        let s0 = initial_params(&branch);
        let rc = rate_constants(&branch, mode);
        Self {
            lambda: mp.lambda,
            rho_a0: mp.rho * mp.a0,
            horizon: mp.horizon,
            log_beta0: s0.log_beta,
            c_beta: rc.c_beta,
            zeta_rates: s0.log_zeta.zip(rc.c_zeta),
        }
    }
}

impl ExposurePolicy for TrialPolicy {
    fn exposure(&self, t: f64, _x: f64, y: &[f64]) -> f64 {
        let tau = self.horizon - t;
        let beta = (self.log_beta0 + self.c_beta * tau).exp();
        let hedge = match self.zeta_rates {
            Some((lz, cz)) => self.rho_a0 * (lz + cz * tau).exp() * y.iter().sum::<f64>(),
            None => 0.0,
        };
        (2.0 * self.lambda - hedge) / beta
    }
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

struct PathOutcome {
    utility: f64,
    went_negative: bool,
}

/// Simulate several policies on the same Brownian paths.
///
/// Path `i` draws from the ChaCha8 stream `i` of `cfg.seed`, so results are
/// reproducible bit for bit and policies compared in one call (or across
/// calls with equal seeds) see common random numbers.
pub fn simulate_paired(
    mp: &MarketParams,
    policies: &[&dyn ExposurePolicy],
    x0: f64,
    y0: &[f64],
    cfg: &McConfig,
) -> Result<Vec<McEstimate>> {
    mp.validate()?;
    cfg.validate()?;
    let n = mp.n;
    if y0.len() != n {
        return Err(Error::InvalidParams(format!("y0 has {} entries, expected n = {n}", y0.len())));
    }
    let nf = n as f64;
    if nf * mp.rho * mp.rho > 1.0 {
        return Err(Error::InvalidParams(format!(
            "correlation matrix is not positive semidefinite: n rho^2 = {} > 1",
            nf * mp.rho * mp.rho
        )));
    }
    let dt = mp.horizon / cfg.steps as f64;
    let sqrt_dt = dt.sqrt();
    let growth = (mp.r * dt).exp();
    let sigma = cfg.sigma_mc;
    let mu = mp.r + mp.lambda * sigma;
    let s_drift = (mu - 0.5 * sigma * sigma) * dt;
    let y_drift = (mp.b0 - 0.5 * mp.a0 * mp.a0) * dt;
    let z_weight = (1.0 - nf * mp.rho * mp.rho).sqrt();
    let m = policies.len();

    let outcomes: Vec<Vec<PathOutcome>> = (0..cfg.paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(path as u64);
            let mut x = vec![x0; m];
            let mut negative = vec![x0 < 0.0; m];
            let mut y = y0.to_vec();
            let mut y_next = y0.to_vec();
            for j in 0..cfg.steps {
                let t = j as f64 * dt;
                let mut w_sum = 0.0;
                for (yi, yn) in y.iter().zip(y_next.iter_mut()) {
                    let w: f64 = rng.sample(StandardNormal);
                    w_sum += w;
                    *yn = yi * (y_drift + mp.a0 * sqrt_dt * w).exp();
                }
                let z: f64 = rng.sample(StandardNormal);
                let db = mp.rho * w_sum + z_weight * z;
                let excess = (s_drift + sigma * sqrt_dt * db).exp() - growth;
                for (q, policy) in policies.iter().enumerate() {
                    let e = policy.exposure(t, x[q], &y);
                    x[q] = x[q] * growth + e / sigma * excess;
                    negative[q] |= x[q] < 0.0;
                }
                std::mem::swap(&mut y, &mut y_next);
            }
            let payoff = mp.k * y.iter().sum::<f64>();
            x.iter()
                .zip(&negative)
                .map(|(&xt, &neg)| PathOutcome { utility: utility(mp.gamma, xt + payoff), went_negative: neg })
                .collect()
        })
        .collect();

    let paths = cfg.paths as f64;
    let estimates = (0..m)
        .map(|q| {
            let values: Vec<f64> = outcomes.iter().map(|o| o[q].utility).collect();
            // shift by the first sample so identical samples give exactly zero spread
            let shift = values[0];
            let centred: Vec<f64> = values.iter().map(|v| v - shift).collect();
            let mean_shift = pairwise_sum(&centred) / paths;
            let sq: Vec<f64> = centred.iter().map(|c| (c - mean_shift) * (c - mean_shift)).collect();
            let var = if cfg.paths > 1 { pairwise_sum(&sq) / (paths - 1.0) } else { 0.0 };
            let negatives = outcomes.iter().filter(|o| o[q].went_negative).count();
            McEstimate {
                mean: shift + mean_shift,
                stderr: (var / paths).sqrt(),
                negative_wealth_fraction: negatives as f64 / paths,
            }
        })
        .collect();
    Ok(estimates)
}

/// Expected terminal utility `E[U(X_T + k sum_i Y_T^i)]` under `policy`.
pub fn simulate_expected_utility(
    mp: &MarketParams,
    policy: &dyn ExposurePolicy,
    x0: f64,
    y0: &[f64],
    cfg: &McConfig,
) -> Result<McEstimate> {
    Ok(simulate_paired(mp, &[policy], x0, y0, cfg)?[0])
}

/// Standardised distance of an estimate from a reference value. A
/// zero-spread estimate scores 0 when it matches the reference to
/// round-off and infinity otherwise.
pub fn z_score(est: &McEstimate, reference: f64) -> f64 {
    let gap = est.mean - reference;
    if est.stderr > 0.0 {
        gap / est.stderr
    } else if gap.abs() <= 1e-12 * reference.abs().max(1.0) {
        0.0
    } else {
        gap.signum() * f64::INFINITY
    }
}
