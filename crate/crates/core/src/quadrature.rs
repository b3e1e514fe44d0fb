//! Gauss-Laguerre quadrature and exact evaluation of the Galerkin inner
//! products over `[0, inf)^d`.
//!
//! `|psi|^2` of the trial family is the product density of independent
//! exponentials with rate `beta` (wealth) and `zeta` (each non-tradable), so
//! every integral reduces to an expectation under that density. After the
//! substitution `s = beta x`, `v_i = zeta y_i` the weight is `exp(-s)` in
//! every coordinate and the tensor-product rule is exact for polynomial
//! integrands of per-variable degree `<= 2 order - 1`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::galerkin::GalerkinSystem;
use crate::model::{rhs_f, MarketParams, SpacePoint};
use crate::trial::{trial_jet_into, TrialState};

pub const DEFAULT_ORDER: usize = 8;
pub const MAX_ORDER: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub order: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Laguerre polynomials `L_n(z)` and `L_{n-1}(z)` by the three-term recurrence.
fn laguerre_pair(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = 1.0;
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = ((2.0 * jf - 1.0 - z) * p2 - (jf - 1.0) * p3) / jf;
    }
    (p1, p2)
}

/// Gauss-Laguerre rule for the weight `exp(-s)` on `[0, inf)`.
///
/// Roots are found by Newton iteration from the usual asymptotic starting
/// guesses, each started from the previous roots.
pub fn laguerre_rule(order: usize) -> Result<QuadratureRule> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::InvalidParams(format!("quadrature order must be in 1..={MAX_ORDER}, got {order}")));
    }
    const MAX_ITER: usize = 100;
    let n = order;
    let nf = n as f64;
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut z = 0.0;
    for i in 0..n {
        z = match i {
            0 => 3.0 / (1.0 + 2.4 * nf),
            1 => z + 15.0 / (1.0 + 2.5 * nf),
            _ => {
                let ai = (i - 1) as f64;
                z + (1.0 + 2.55 * ai) / (1.9 * ai) * (z - nodes[i - 2])
            }
        };
        let mut converged = false;
        for _ in 0..MAX_ITER {
            let (p1, p2) = laguerre_pair(n, z);
            let step = p1 / (nf * (p1 - p2) / z);
            z -= step;
            if step.abs() <= 1e-14 * z.abs().max(1.0) {
                converged = true;
                break;
            }
        }
        if !converged || !z.is_finite() {
            return Err(Error::ConvergenceFailure { order });
        }
        let (p1, p2) = laguerre_pair(n, z);
        let deriv = nf * (p1 - p2) / z;
        let w = -1.0 / (deriv * nf * p2);
        nodes.push(z);
        weights.push(w);
    }
    if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
        return Err(Error::ConvergenceFailure { order });
    }
    Ok(QuadratureRule { order, nodes, weights })
}

impl QuadratureRule {
    /// `int_0^inf exp(-s) g(s) ds`.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&s, &w)| w * g(s)).sum()
    }

    /// `E[g(x, y)]` for `x ~ Exp(beta)` and `n` independent `y_i ~ Exp(zeta)`.
    pub fn expect(&self, beta: f64, zeta: f64, n: usize, mut g: impl FnMut(f64, &[f64]) -> f64) -> f64 {
        let q = self.order;
        let mut idx = vec![0usize; n];
        let mut y = vec![0.0; n];
        let mut total = 0.0;
        loop {
            let mut wy = 1.0;
            for (i, &k) in idx.iter().enumerate() {
                y[i] = self.nodes[k] / zeta;
                wy *= self.weights[k];
            }
            let mut inner = 0.0;
            for (s, w) in self.nodes.iter().zip(&self.weights) {
                inner += w * g(s / beta, &y);
            }
            total += wy * inner;
            // odometer over the y indices
            let mut a = 0;
            loop {
                if a == n {
                    return total;
                }
                idx[a] += 1;
                if idx[a] < q {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
        }
    }
}

/// `int |psi_s|^2 g` over `[0, inf)^{n+1}`.
pub fn expect_psi2(rule: &QuadratureRule, s: &TrialState, n: usize, g: impl FnMut(f64, &[f64]) -> f64) -> f64 {
    rule.expect(s.beta(), s.zeta(), n, g)
}

/// `M` and `V` from their defining inner products, with `F` evaluated
/// through [`rhs_f`] on the exact trial jet at every node.
pub fn assemble_mv_quadrature(mp: &MarketParams, s: &TrialState, rule: &QuadratureRule) -> Result<GalerkinSystem> {
    let n = mp.n;
    let p = if n == 0 { 2 } else { 3 };
    if (n == 0) != s.log_zeta.is_none() {
        return Err(Error::InvalidParams("trial state does not match the number of non-tradables".into()));
    }
    let (beta, zeta) = (s.beta(), s.zeta());
    let alpha2 = (2.0 * s.log_alpha).exp();
    let nf = n as f64;
    let mut m = vec![0.0; p * p];
    let mut v = vec![0.0; p];
    let mut jet = crate::model::UJet::zeros(n);
    let mut point = SpacePoint::new(0.0, vec![0.0; n]);
    let mut failure = None;
    // d u / d theta_i = g_i u, and u^2 = alpha^2 |psi|^2
    let mut accumulate = |x: f64, y: &[f64], weight_pass: usize| -> f64 {
        let g = [1.0, 0.5 * (1.0 - beta * x), 0.5 * (nf - zeta * y.iter().sum::<f64>())];
        if weight_pass < p * p {
            let (i, j) = (weight_pass / p, weight_pass % p);
            return g[i] * g[j];
        }
        let i = weight_pass - p * p;
        point.x = x;
        point.y.copy_from_slice(y);
        trial_jet_into(s, n, &point, &mut jet);
        match rhs_f(mp, &point, &jet) {
            Ok(f) => g[i] * f / jet.u,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    };
    for (pass, entry) in m.iter_mut().enumerate() {
        *entry = alpha2 * rule.expect(beta, zeta, n, |x, y| accumulate(x, y, pass));
    }
    for (i, entry) in v.iter_mut().enumerate() {
        *entry = alpha2 * rule.expect(beta, zeta, n, |x, y| accumulate(x, y, p * p + i));
    }
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(GalerkinSystem::new(m, v))
}

/// The closed-form exponential moments that the projection integrals rely on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Identity {
    /// `<x> = 1/b`
    MeanX,
    /// `<y_i> = 1/b`
    MeanY,
    /// `<y_i y_j> = (delta_ij + 1)/b^2`
    SecondMomentY,
    /// `sum_{i,j} <y_i^2 y_j> = 2n(n+2)/b^3`
    SquareTimesLinearY,
    /// `sum_{i,j,k} <y_i y_j y_k> = n(n+1)(n+2)/b^3`
    CubeOfSumY,
}

impl Identity {
    pub const ALL: [Identity; 5] =
        [Identity::MeanX, Identity::MeanY, Identity::SecondMomentY, Identity::SquareTimesLinearY, Identity::CubeOfSumY];

    pub fn name(self) -> &'static str {
        match self {
            Identity::MeanX => "mean_x",
            Identity::MeanY => "mean_y",
            Identity::SecondMomentY => "second_moment_y",
            Identity::SquareTimesLinearY => "square_times_linear_y",
            Identity::CubeOfSumY => "cube_of_sum_y",
        }
    }

    fn needs_y(self) -> bool {
        self != Identity::MeanX
    }
}

/// Outcome of one identity at one `(n, b)` pair. Identities indexed by
/// coordinates report the worst index combination.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub identity: Identity,
    pub n: usize,
    pub b: f64,
    pub order: usize,
    pub computed: f64,
    pub expected: f64,
    pub rel_error: f64,
    pub passed: bool,
}

fn identity_values(rule: &QuadratureRule, id: Identity, n: usize, b: f64) -> Vec<(f64, f64)> {
    let nf = n as f64;
    let e = |g: &dyn Fn(f64, &[f64]) -> f64| rule.expect(b, b, n, |x, y| g(x, y));
    match id {
        Identity::MeanX => vec![(e(&|x, _| x), 1.0 / b)],
        Identity::MeanY => (0..n).map(|i| (e(&|_, y| y[i]), 1.0 / b)).collect(),
        Identity::SecondMomentY => (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| {
                let delta = if i == j { 1.0 } else { 0.0 };
                (e(&|_, y| y[i] * y[j]), (delta + 1.0) / (b * b))
            })
            .collect(),
        Identity::SquareTimesLinearY => {
            let g = |_: f64, y: &[f64]| {
                let s: f64 = y.iter().sum();
                y.iter().map(|v| v * v).sum::<f64>() * s
            };
            vec![(e(&g), 2.0 * nf * (nf + 2.0) / b.powi(3))]
        }
        Identity::CubeOfSumY => {
            let g = |_: f64, y: &[f64]| y.iter().sum::<f64>().powi(3);
            vec![(e(&g), nf * (nf + 1.0) * (nf + 2.0) / b.powi(3))]
        }
    }
}

/// Check every identity for every `(n, b)` pair with a rule of `order`.
/// With `n = 0` only the wealth moment applies.
pub fn identity_suite(order: usize, ns: &[usize], bs: &[f64], tol: f64) -> Result<Vec<IdentityCheck>> {
    let rule = laguerre_rule(order)?;
    let mut out = Vec::new();
    for &n in ns {
        for &b in bs {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidParams(format!("identity rate must be > 0, got {b}")));
            }
            for id in Identity::ALL.into_iter().filter(|id| n > 0 || !id.needs_y()) {
                let (computed, expected, rel_error) = identity_values(&rule, id, n, b)
                    .into_iter()
                    .map(|(c, x)| (c, x, (c - x).abs() / x.abs()))
                    .fold((f64::NAN, f64::NAN, -1.0), |acc, v| if v.2 > acc.2 { v } else { acc });
                out.push(IdentityCheck { identity: id, n, b, order, computed, expected, rel_error, passed: rel_error <= tol });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_point_rule() {
        let r = laguerre_rule(1).unwrap();
        assert!((r.nodes[0] - 1.0).abs() < 1e-15);
        assert!((r.weights[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_point_rule_nodes() {
        let r = laguerre_rule(2).unwrap();
        let s2 = 2f64.sqrt();
        assert!((r.nodes[0] - (2.0 - s2)).abs() < 1e-14);
        assert!((r.nodes[1] - (2.0 + s2)).abs() < 1e-14);
        assert!((r.integrate(|s| s * s * s) - 6.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_out_of_range_orders() {
        assert!(laguerre_rule(0).is_err());
        assert!(laguerre_rule(65).is_err());
    }

    #[test]
    fn exactness_up_to_degree_2q_minus_1() {
        for q in [1usize, 3, 5, 8, 12, 20, 32, 48, 64] {
            let r = laguerre_rule(q).unwrap();
            assert!(r.weights.iter().all(|&w| w > 0.0));
            let total: f64 = r.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "order {q}: {total}");
            let mut fact = 1.0f64;
            for deg in 0..(2 * q).min(30) {
                if deg > 0 {
                    fact *= deg as f64;
                }
                let got = r.integrate(|s| s.powi(deg as i32));
                assert!((got - fact).abs() <= 1e-11 * fact, "order {q} degree {deg}: {got} vs {fact}");
            }
        }
    }

    #[test]
    fn psi_moments() {
        let rule = laguerre_rule(DEFAULT_ORDER).unwrap();
        let s = TrialState::from_values(1.0, 2.0, Some(1.0));
        assert!((expect_psi2(&rule, &s, 2, |x, _| x) - 0.5).abs() < 1e-14);
        assert!((expect_psi2(&rule, &s, 2, |_, y| y[0] * y[1]) - 1.0).abs() < 1e-13);
        assert!((expect_psi2(&rule, &s, 2, |_, y| y[0] * y[0]) - 2.0).abs() < 1e-13);
        let cube = expect_psi2(&rule, &s, 2, |_, y| y.iter().sum::<f64>().powi(3));
        assert!((cube - 24.0).abs() < 1e-12);
        assert!((expect_psi2(&rule, &s, 2, |_, _| 1.0) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn wealth_only_mass_and_velocity() {
        let mp = MarketParams::reference(0);
        let rule = laguerre_rule(DEFAULT_ORDER).unwrap();
        let sys = assemble_mv_quadrature(&mp, &TrialState::from_values(2.0, 1.0, None), &rule).unwrap();
        assert!((sys.m(0, 0) - 4.0).abs() < 1e-12 && (sys.m(1, 1) - 1.0).abs() < 1e-12);
        assert!(sys.m(0, 1).abs() < 1e-12);
        assert!((sys.v[0] + 0.12).abs() < 1e-12 && (sys.v[1] - 0.05).abs() < 1e-12);
    }

    #[test]
    fn two_non_tradables_mass_entry() {
        let mp = MarketParams::reference(2);
        let rule = laguerre_rule(DEFAULT_ORDER).unwrap();
        let sys = assemble_mv_quadrature(&mp, &TrialState::from_values(2.0, 1.0, Some(1.0)), &rule).unwrap();
        assert!((sys.m(2, 2) - 2.0).abs() < 1e-12);
    }
    #[test]
    fn identity_suite_default_matrix() {
        let checks = identity_suite(DEFAULT_ORDER, &[1, 2, 3], &[0.5, 1.0, 2.0], 1e-10).unwrap();
        assert_eq!(checks.len(), 45);
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
    }

    #[test]
    fn identity_suite_one_point_rule_misses_higher_moments() {
        let checks = identity_suite(1, &[2], &[1.0], 1e-10).unwrap();
        let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| c.identity).collect();
        assert!(failed.contains(&Identity::SquareTimesLinearY) && failed.contains(&Identity::CubeOfSumY));
        assert!(checks.iter().find(|c| c.identity == Identity::MeanX).unwrap().passed);
    }

    #[test]
    fn identity_suite_without_non_tradables() {
        let checks = identity_suite(DEFAULT_ORDER, &[0], &[0.5, 2.0], 1e-10).unwrap();
        assert_eq!(checks.len(), 2);
        assert!(checks.iter().all(|c| c.identity == Identity::MeanX && c.passed));
    }
}
