//! Projected parameter dynamics `M(theta) theta' = V(theta)` for the
//! exponential trial family, from closed forms or from quadrature, and their
//! time integration.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::MarketParams;
use crate::quadrature::{assemble_mv_quadrature, laguerre_rule, QuadratureRule, DEFAULT_ORDER};
use crate::trial::{RateMode, TrialState};

/// Row-major mass matrix and velocity vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinSystem {
    pub dim: usize,
    pub mass: Vec<f64>,
    pub v: Vec<f64>,
}

impl GalerkinSystem {
    pub fn new(mass: Vec<f64>, v: Vec<f64>) -> Self {
        let dim = v.len();
        assert_eq!(mass.len(), dim * dim);
        Self { dim, mass, v }
    }

    pub fn m(&self, i: usize, j: usize) -> f64 {
        self.mass[i * self.dim + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.m(i, i)).sum()
    }

    /// Largest off-diagonal magnitude relative to the trace.
    pub fn off_diagonal_ratio(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                if i != j {
                    worst = worst.max(self.m(i, j).abs());
                }
            }
        }
        worst / self.trace().abs()
    }
}

/// `(M + eps I)^{-1} V` through a Cholesky factorisation.
pub fn solve_step_direction(sys: &GalerkinSystem, eps_reg: f64) -> Result<Vec<f64>> {
    let mut m = DMatrix::from_row_slice(sys.dim, sys.dim, &sys.mass);
    for i in 0..sys.dim {
        m[(i, i)] += eps_reg;
    }
    let chol = m.cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok(chol.solve(&DVector::from_column_slice(&sys.v)).iter().copied().collect())
}

/// Closed-form `M` and `V`. `mode` selects the `zeta` mass entry:
/// `n alpha^2 / 4` (oracle mode) or `alpha^2 / 4` (paper mode).
pub fn assemble_closed(mp: &MarketParams, s: &TrialState, mode: RateMode) -> GalerkinSystem {
    let a2 = (2.0 * s.log_alpha).exp();
    let (r, lam, a0, b0, rho) = (mp.r, mp.lambda, mp.a0, mp.b0, mp.rho);
    if mp.n == 0 {
        return GalerkinSystem::new(
            vec![a2, 0.0, 0.0, 0.25 * a2],
            vec![-0.5 * a2 * (lam * lam + r), 0.25 * a2 * r],
        );
    }
    let n = mp.n as f64;
    let m33 = match mode {
        RateMode::Oracle => 0.25 * n * a2,
        RateMode::Paper => 0.25 * a2,
    };
    let v1 = a0 * (n * a0 + 2.0 * n * lam * rho - 0.5 * n * (n + 1.0) * a0 * rho * rho)
        - 2.0 * (n * b0 + r + lam * lam);
    let v3 = n * (b0 - a0 * rho * lam + a0 * a0 * (0.5 * (n + 1.0) * rho * rho - 1.0));
    GalerkinSystem::new(
        vec![a2, 0.0, 0.0, 0.0, 0.25 * a2, 0.0, 0.0, 0.0, m33],
        vec![0.25 * a2 * v1, 0.25 * a2 * r, 0.25 * a2 * v3],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assembler {
    Closed(RateMode),
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    Euler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<TrialState>,
}

impl Trajectory {
    pub fn last(&self) -> &TrialState {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Integrates `theta' = (M + eps I)^{-1} V`.
pub struct GalerkinIntegrator {
    pub assembler: Assembler,
    pub method: Method,
    pub eps_reg: f64,
    rule: Option<QuadratureRule>,
}

impl GalerkinIntegrator {
    pub fn new(assembler: Assembler, method: Method) -> Result<Self> {
        Self::with_order(assembler, method, DEFAULT_ORDER)
    }

    pub fn with_order(assembler: Assembler, method: Method, order: usize) -> Result<Self> {
        let rule = match assembler {
            Assembler::Quadrature => Some(laguerre_rule(order)?),
            Assembler::Closed(_) => None,
        };
        Ok(Self { assembler, method, eps_reg: 0.0, rule })
    }

    pub fn assemble(&self, mp: &MarketParams, s: &TrialState) -> Result<GalerkinSystem> {
        match (&self.assembler, &self.rule) {
            (Assembler::Closed(mode), _) => Ok(assemble_closed(mp, s, *mode)),
            (Assembler::Quadrature, Some(rule)) => assemble_mv_quadrature(mp, s, rule),
            (Assembler::Quadrature, None) => unreachable!("quadrature assembler always carries a rule"),
        }
    }

    pub fn velocity(&self, mp: &MarketParams, theta: &[f64]) -> Result<Vec<f64>> {
        let sys = self.assemble(mp, &TrialState::from_slice(theta))?;
        solve_step_direction(&sys, self.eps_reg)
    }

    pub fn integrate(&self, mp: &MarketParams, s0: &TrialState, horizon: f64, dt: f64) -> Result<Trajectory> {
        if dt.is_nan() || dt <= 0.0 {
            return Err(Error::InvalidParams(format!("dt must be > 0, got {dt}")));
        }
        let mut times = vec![0.0];
        let mut states = vec![*s0];
        let mut theta = s0.as_vec();
        let steps = (horizon / dt - 1e-9).ceil().max(0.0) as usize;
        for i in 0..steps {
            let t = i as f64 * dt;
            let h = dt.min(horizon - t);
            let axpy = |x: &[f64], k: &[f64], c: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + c * b).collect() };
            theta = match self.method {
                Method::Euler => axpy(&theta, &self.velocity(mp, &theta)?, h),
                Method::Rk4 => {
                    let k1 = self.velocity(mp, &theta)?;
                    let k2 = self.velocity(mp, &axpy(&theta, &k1, 0.5 * h))?;
                    let k3 = self.velocity(mp, &axpy(&theta, &k2, 0.5 * h))?;
                    let k4 = self.velocity(mp, &axpy(&theta, &k3, h))?;
                    theta
                        .iter()
                        .enumerate()
                        .map(|(j, th)| th + h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
                        .collect()
                }
            };
            times.push(if i + 1 == steps { horizon } else { t + h });
            states.push(TrialState::from_slice(&theta));
        }
        Ok(Trajectory { times, states })
    }
}

/// Disagreement between the directly integrated `zeta` mass entry and the
/// paper-mode entry `alpha^2 / 4`.
#[derive(Debug, Clone, Serialize)]
pub struct MassDiscrepancy {
    pub n: usize,
    pub alpha: f64,
    pub m33_quadrature: f64,
    pub m33_paper_mode: f64,
    pub ratio: f64,
    pub zeta_rate_oracle: f64,
    pub zeta_rate_paper: f64,
}

pub fn mass_discrepancy(mp: &MarketParams, s: &TrialState) -> Result<MassDiscrepancy> {
    if mp.n == 0 {
        return Err(Error::InvalidParams("no zeta parameter when n = 0".into()));
    }
    let rule = laguerre_rule(DEFAULT_ORDER)?;
    let quad = assemble_mv_quadrature(mp, s, &rule)?;
    let paper_mode = assemble_closed(mp, s, RateMode::Paper);
    Ok(MassDiscrepancy {
        n: mp.n,
        alpha: s.alpha(),
        m33_quadrature: quad.m(2, 2),
        m33_paper_mode: paper_mode.m(2, 2),
        ratio: quad.m(2, 2) / paper_mode.m(2, 2),
        zeta_rate_oracle: quad.v[2] / quad.m(2, 2),
        zeta_rate_paper: paper_mode.v[2] / paper_mode.m(2, 2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trial::{evolve, initial_params, rate_constants};

    #[test]
    fn diagonal_solve() {
        let sys = GalerkinSystem::new(vec![4.0, 0.0, 0.0, 1.0], vec![-0.12, 0.05]);
        let d = solve_step_direction(&sys, 0.0).unwrap();
        assert!((d[0] + 0.03).abs() < 1e-16 && (d[1] - 0.05).abs() < 1e-16);
        let reg = solve_step_direction(&sys, 1e-8).unwrap();
        for (a, b) in reg.iter().zip(&d) {
            assert!(((a - b) / b).abs() < 1e-8);
        }
    }

    #[test]
    fn identity_mass_returns_v() {
        let sys = GalerkinSystem::new(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], vec![0.3, -2.0, 7.5]);
        assert_eq!(solve_step_direction(&sys, 0.0).unwrap(), sys.v);
    }

    #[test]
    fn indefinite_mass_is_rejected() {
        let sys = GalerkinSystem::new(vec![1.0, 2.0, 2.0, 1.0], vec![1.0, 1.0]);
        assert_eq!(solve_step_direction(&sys, 0.0), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn closed_wealth_only() {
        let mp = MarketParams::reference(0);
        let sys = assemble_closed(&mp, &TrialState::from_values(2.0, 1.0, None), RateMode::Oracle);
        assert_eq!(sys.mass, vec![4.0, 0.0, 0.0, 1.0]);
        assert!((sys.v[0] + 0.12).abs() < 1e-15 && (sys.v[1] - 0.05).abs() < 1e-15);
        let flat = MarketParams { r: 0.0, lambda: 0.0, ..mp };
        let sys = assemble_closed(&flat, &TrialState::from_values(2.0, 1.0, None), RateMode::Oracle);
        assert_eq!(sys.v, vec![0.0, 0.0]);
    }

    #[test]
    fn closed_single_non_tradable_zeta_rate() {
        let mp = MarketParams::reference(1);
        let sys = assemble_closed(&mp, &initial_params(&mp), RateMode::Oracle);
        assert!((sys.v[2] / sys.m(2, 2) - 0.1079).abs() < 1e-14);
    }

    #[test]
    fn closed_matches_quadrature() {
        let rule = laguerre_rule(DEFAULT_ORDER).unwrap();
        for n in 0..=3 {
            let mp = MarketParams::reference(n);
            let s = evolve(&initial_params(&mp), &rate_constants(&mp, RateMode::Oracle), 0.4);
            let c = assemble_closed(&mp, &s, RateMode::Oracle);
            let q = assemble_mv_quadrature(&mp, &s, &rule).unwrap();
            assert!(q.off_diagonal_ratio() <= 1e-12);
            for (a, b) in c.mass.iter().zip(&q.mass) {
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-3), "n={n} M {a} vs {b}");
            }
            for (a, b) in c.v.iter().zip(&q.v) {
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-3), "n={n} V {a} vs {b}");
            }
        }
    }

    #[test]
    fn integrate_zero_horizon() {
        let mp = MarketParams::reference(1);
        let s0 = initial_params(&mp);
        let integ = GalerkinIntegrator::new(Assembler::Closed(RateMode::Oracle), Method::Rk4).unwrap();
        let tr = integ.integrate(&mp, &s0, 0.0, 1e-3).unwrap();
        assert_eq!(tr.states, vec![s0]);
        assert_eq!(tr.times, vec![0.0]);
    }

    #[test]
    fn integrate_reference_beta() {
        let mp = MarketParams::reference(0);
        let integ = GalerkinIntegrator::new(Assembler::Closed(RateMode::Oracle), Method::Rk4).unwrap();
        let tr = integ.integrate(&mp, &initial_params(&mp), 1.0, 1e-3).unwrap();
        assert_eq!(tr.times.len(), 1001);
        assert!((tr.last().beta() - 0.05f64.exp()).abs() < 1e-10);
    }

    #[test]
    fn truncated_last_step() {
        let mp = MarketParams::reference(0);
        let integ = GalerkinIntegrator::new(Assembler::Closed(RateMode::Oracle), Method::Euler).unwrap();
        let tr = integ.integrate(&mp, &initial_params(&mp), 1.0, 0.3).unwrap();
        assert_eq!(tr.times.len(), 5);
        assert_eq!(*tr.times.last().unwrap(), 1.0);
        let expected = evolve(&initial_params(&mp), &rate_constants(&mp, RateMode::Oracle), 1.0);
        assert!((tr.last().log_alpha - expected.log_alpha).abs() < 1e-14);
    }

    #[test]
    fn trajectories_are_affine() {
        let mp = MarketParams::reference(2);
        let integ = GalerkinIntegrator::new(Assembler::Quadrature, Method::Euler).unwrap();
        let tr = integ.integrate(&mp, &initial_params(&mp), 1.0, 1e-2).unwrap();
        let (first, last) = (tr.states[0].as_vec(), tr.last().as_vec());
        for (t, s) in tr.times.iter().zip(&tr.states) {
            for (j, v) in s.as_vec().iter().enumerate() {
                let line = first[j] + t * (last[j] - first[j]);
                assert!((v - line).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn discrepancy_record_for_two_non_tradables() {
        let mp = MarketParams::reference(2);
        let rec = mass_discrepancy(&mp, &initial_params(&mp)).unwrap();
        assert!((rec.m33_quadrature - 2.0).abs() < 1e-12);
        assert!((rec.m33_paper_mode - 1.0).abs() < 1e-15);
        assert!((rec.ratio - 2.0).abs() < 1e-12);
        assert!((rec.zeta_rate_paper - 2.0 * rec.zeta_rate_oracle).abs() < 1e-12);
    }
}
