//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hjb_ng::fd::{error_report, FdSolver, Field, Grid, Metric, Solution};
use hjb_ng::galerkin::{assemble_closed, Assembler, GalerkinIntegrator, Method};
use hjb_ng::harness::{mc_report, run, sweep_rows, Command, ExperimentConfig, SweepParam};
use hjb_ng::model::{rhs_f, MarketParams, SpacePoint};
use hjb_ng::pricing::{indifference_price_closed, indifference_price_trial_bisect, price_residual, PriceQuery};
use hjb_ng::quadrature::{assemble_mv_quadrature, identity_suite, laguerre_rule, DEFAULT_ORDER};
use hjb_ng::trial::{
    evolve, initial_params, rate_constants, trial_jet, trial_solution, trial_time_derivative, trial_value, RateMode,
    TrialState,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check, Duration);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn fd_solve(mp: &MarketParams, level: u32) -> Result<(Grid, Field), String> {
    let grid = Grid::new(mp.dim(), level, 4.0).map_err(|e| e.to_string())?;
    let (field, stats) = FdSolver::default().solve(&grid, mp, mp.horizon, None).map_err(|e| e.to_string())?;
    ensure(stats.clamped == 0, format!("u_xx clamped at {} updates", stats.clamped))?;
    Ok((grid, field))
}

fn trial_vs_fd(mp: &MarketParams, grid: &Grid, field: &Field, metric: &Metric) -> Result<f64, String> {
    let (s, n) = trial_solution(mp, RateMode::Oracle, mp.horizon);
    let trial = move |p: &SpacePoint| trial_value(&s, n, p);
    error_report(&Solution::Analytic(&trial), &Solution::Field(field), grid, metric)
        .map(|r| r.value)
        .map_err(|e| e.to_string())
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(" > ")
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn self_errors(d: usize, levels: std::ops::RangeInclusive<u32>) -> Result<Vec<f64>, String> {
    let mp = MarketParams::reference(d - 1);
    let probe = Metric::PointwiseAbs(vec![2.0; d]);
    let mut prev = fd_solve(&mp, levels.start() - 1)?;
    let mut out = Vec::new();
    for level in levels {
        let next = fd_solve(&mp, level)?;
        let r = error_report(&Solution::Field(&next.1), &Solution::Field(&prev.1), &prev.0, &probe)
            .map_err(|e| e.to_string())?;
        out.push(r.value);
        prev = next;
    }
    Ok(out)
}

fn identities() -> Check {
    let checks = identity_suite(DEFAULT_ORDER, &[1, 2, 3], &[0.5, 1.0, 2.0], 1e-10).map_err(|e| e.to_string())?;
    let worst = checks.iter().map(|c| c.rel_error).fold(0.0, f64::max);
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| format!("{}@n={},b={}", c.identity.name(), c.n, c.b)).collect();
    ensure(checks.len() == 45 && failed.is_empty(), format!("failed: {failed:?}"))?;
    Ok(format!("45/45 identities, worst relative error {worst:.1e}"))
}

fn wealth_only_exactness() -> Check {
    let mp = MarketParams::reference(0);
    let rc = rate_constants(&mp, RateMode::Oracle);
    let s0 = initial_params(&mp);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let t = i as f64 / 49.0;
        let s = evolve(&s0, &rc, t);
        for j in 0..50 {
            let p = SpacePoint::scalar(4.0 * j as f64 / 49.0);
            let u = trial_value(&s, 0, &p);
            let f = rhs_f(&mp, &p, &trial_jet(&s, 0, &p)).map_err(|e| e.to_string())?;
            worst = worst.max((trial_time_derivative(&s, &rc, 0, &p) - f).abs() / u);
        }
    }
    ensure(worst <= 1e-9, format!("residual/|u| = {worst:e}"))?;
    Ok(format!("max residual/|u| = {worst:.1e} on 50x50 samples"))
}

fn rel_close(a: f64, b: f64, scale: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * scale
}

fn mass_velocity_oracle() -> Check {
    let rule = laguerre_rule(DEFAULT_ORDER).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for n in [0usize, 1] {
        for _ in 0..10 {
            let mp = MarketParams {
                a0: rng.random_range(0.25..=0.4),
                b0: rng.random_range(0.1..=0.4),
                rho: rng.random_range(-0.5..=0.4),
                lambda: rng.random_range(0.05..=0.2),
                r: rng.random_range(0.025..=0.1),
                ..MarketParams::reference(n)
            };
            let zeta = (n == 1).then(|| rng.random_range(0.5..2.0));
            let s = TrialState::from_values(rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), zeta);
            let quad = assemble_mv_quadrature(&mp, &s, &rule).map_err(|e| e.to_string())?;
            let closed = assemble_closed(&mp, &s, RateMode::Paper);
            let m_scale = closed.mass.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let v_scale = closed.v.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for (q, c) in quad.mass.iter().zip(&closed.mass) {
                ensure(rel_close(*q, *c, m_scale, 1e-10), format!("n={n}: M entry {q} vs {c}"))?;
                worst = worst.max((q - c).abs() / m_scale);
            }
            for (q, c) in quad.v.iter().zip(&closed.v) {
                ensure(rel_close(*q, *c, c.abs().max(1e-3 * v_scale), 1e-10), format!("n={n}: V entry {q} vs {c}"))?;
                worst = worst.max((q - c).abs() / c.abs().max(1e-3 * v_scale));
            }
        }
    }
    let cfg = ExperimentConfig { n: Some(2), dt: 0.01, ..ExperimentConfig::default() };
    let (mut out, mut diag) = (Vec::new(), Vec::new());
    run(Command::NgSolve, &cfg, &mut out, &mut diag).map_err(|e| e.to_string())?;
    let diag = String::from_utf8(diag).map_err(|e| e.to_string())?;
    let record: serde_json::Value =
        serde_json::from_str(diag.lines().next().ok_or("no discrepancy record")?).map_err(|e| e.to_string())?;
    let alpha = record["alpha"].as_f64().ok_or("alpha missing")?;
    let m33 = record["m33_quadrature"].as_f64().ok_or("m33 missing")?;
    let paper_m33 = record["m33_paper_mode"].as_f64().ok_or("paper-mode m33 missing")?;
    ensure(rel_close(m33, 2.0 * alpha * alpha / 4.0, m33, 1e-12), format!("n=2 M33 {m33} vs n alpha^2/4"))?;
    ensure(rel_close(paper_m33, alpha * alpha / 4.0, paper_m33, 1e-12), "paper-mode M33 is not alpha^2/4")?;
    Ok(format!(
        "n in {{0,1}} x 10 draws agree to {worst:.1e}; n=2 record: M33 = {m33:.6} vs paper mode {paper_m33:.6} (ratio {:.3})",
        m33 / paper_m33
    ))
}

fn integration_consistency() -> Check {
    let mut worst: f64 = 0.0;
    for n in [0usize, 1, 2] {
        let mp = MarketParams::reference(n);
        let s0 = initial_params(&mp);
        let cases = [
            (Assembler::Closed(RateMode::Oracle), RateMode::Oracle),
            (Assembler::Closed(RateMode::Paper), RateMode::Paper),
            (Assembler::Quadrature, RateMode::Oracle),
        ];
        for (assembler, reference) in cases {
            let exact = evolve(&s0, &rate_constants(&mp, reference), 1.0).as_vec();
            for method in [Method::Euler, Method::Rk4] {
                let integ = GalerkinIntegrator::new(assembler, method).map_err(|e| e.to_string())?;
                let traj = integ.integrate(&mp, &s0, 1.0, 1e-3).map_err(|e| e.to_string())?;
                for (a, b) in traj.last().as_vec().iter().zip(&exact) {
                    let dev = (a - b).abs();
                    ensure(dev <= 1e-9, format!("n={n} {assembler:?} {method:?}: deviation {dev:e}"))?;
                    worst = worst.max(dev);
                }
            }
        }
    }
    Ok(format!("max componentwise deviation {worst:.1e}"))
}

fn fd_convergence_1d() -> Check {
    let mp = MarketParams::reference(0);
    let mut errs = Vec::new();
    let mut dts = Vec::new();
    for level in 3..=6 {
        let grid = Grid::new(1, level, 4.0).map_err(|e| e.to_string())?;
        let (field, stats) = FdSolver::default().solve(&grid, &mp, 1.0, None).map_err(|e| e.to_string())?;
        errs.push(trial_vs_fd(&mp, &grid, &field, &Metric::MeanAbs)?);
        dts.push(stats.dt);
    }
    ensure(strictly_decreasing(&errs), format!("errors not decreasing: {errs:?}"))?;
    let order = (errs[2] / errs[3]).ln() / (dts[2] / dts[3]).ln();
    ensure(order >= 0.8, format!("temporal order {order:.3} < 0.8"))?;
    Ok(format!("mean_abs {:.2e} > {:.2e} > {:.2e} > {:.2e}; temporal order {order:.3}", errs[0], errs[1], errs[2], errs[3]))
}

fn fd_self_consistency() -> Check {
    let d2 = self_errors(2, 3..=5)?;
    ensure(strictly_decreasing(&d2), format!("d=2 self-errors {d2:?}"))?;
    let d3 = self_errors(3, 3..=4)?;
    ensure(strictly_decreasing(&d3), format!("d=3 self-errors {d3:?}"))?;
    Ok(format!("d=2 {}; d=3 {}", sci(&d2), sci(&d3)))
}

fn trial_proximity() -> Check {
    let mp = MarketParams::reference(1);
    let mut dist = Vec::new();
    for level in 3..=5 {
        let (grid, field) = fd_solve(&mp, level)?;
        dist.push(trial_vs_fd(&mp, &grid, &field, &Metric::MeanAbs)?);
    }
    ensure(strictly_decreasing(&dist), format!("d=2 distances {dist:?}"))?;
    let mp3 = MarketParams::reference(2);
    let (grid, field) = fd_solve(&mp3, 4)?;
    let near = trial_vs_fd(&mp3, &grid, &field, &Metric::SliceMean(3.5))?;
    let mid = trial_vs_fd(&mp3, &grid, &field, &Metric::SliceMean(2.0))?;
    ensure(near < mid, format!("slice x=3.5 {near:e} not below x=2.0 {mid:e}"))?;
    Ok(format!("d=2 distances {}; d=3 slices x=3.5 {near:.2e} < x=2.0 {mid:.2e}", sci(&dist)))
}

fn sweep_findings() -> Check {
    let cfg = ExperimentConfig {
        d: Some(3),
        level: Some(4),
        params: vec![SweepParam::B0, SweepParam::Lambda, SweepParam::R],
        ..ExperimentConfig::default()
    };
    let rows = sweep_rows(&cfg).map_err(|e| e.to_string())?;
    let of = |p: SweepParam| rows.iter().filter(|r| r.param == p).map(|r| r.mean_rel_pct).collect::<Vec<_>>();
    let spread = |v: &[f64]| v.iter().cloned().fold(f64::MIN, f64::max) / v.iter().cloned().fold(f64::MAX, f64::min);
    let b0 = of(SweepParam::B0);
    let growth = b0.last().ok_or("empty b0 sweep")? / b0.first().ok_or("empty b0 sweep")?;
    let (lam, r) = (spread(&of(SweepParam::Lambda)), spread(&of(SweepParam::R)));
    ensure(growth >= 2.0, format!("b0 error growth {growth:.3} < 2"))?;
    ensure(lam < 1.5 && r < 1.5, format!("lambda spread {lam:.3}, r spread {r:.3}"))?;
    Ok(format!("b0 0.4/0.1 error ratio {growth:.2}; max/min over lambda {lam:.3}, over r {r:.3}"))
}

fn pricing() -> Check {
    let q = |k: f64, x0: f64| PriceQuery::new(MarketParams { k, ..MarketParams::reference(1) }, x0, vec![1.0]).map_err(|e| e.to_string());
    let zero = indifference_price_closed(&q(0.0, 1.0)?, RateMode::Oracle).map_err(|e| e.to_string())?;
    ensure(zero == 0.0, format!("p(0) = {zero:e}"))?;
    let mut worst_gap: f64 = 0.0;
    let mut worst_res: f64 = 0.0;
    for k in [1.0, 2.0] {
        let query = q(k, 1.0)?;
        let closed = indifference_price_closed(&query, RateMode::Oracle).map_err(|e| e.to_string())?;
        let bisect = indifference_price_trial_bisect(&query, RateMode::Oracle, (-10.0, 10.0), 1e-12).map_err(|e| e.to_string())?;
        worst_gap = worst_gap.max((closed - bisect).abs());
        worst_res = worst_res.max(price_residual(&query, RateMode::Oracle, closed));
        let other = indifference_price_closed(&q(k, 7.0)?, RateMode::Oracle).map_err(|e| e.to_string())?;
        ensure((other - closed).abs() <= 1e-12, format!("x0 dependence {:e}", (other - closed).abs()))?;
    }
    ensure(worst_gap <= 1e-10, format!("closed vs bisection gap {worst_gap:e}"))?;
    ensure(worst_res <= 1e-10, format!("relative residual {worst_res:e}"))?;
    Ok(format!("p(0) = 0; |closed - bisect| <= {worst_gap:.1e}; residual <= {worst_res:.1e}; x0-invariant"))
}

fn monte_carlo() -> Check {
    let cfg = ExperimentConfig { n: Some(0), paths: 100_000, steps: 2000, seed: 42, ..ExperimentConfig::default() };
    let report = mc_report(&cfg).map_err(|e| e.to_string())?;
    let (_, best, z) = report.runs[0];
    ensure(z.abs() <= 3.0, format!("|z| = {:.3} > 3", z.abs()))?;
    let mut margins = Vec::new();
    for (c, e, _) in &report.runs[1..] {
        let margin = (best.mean - e.mean) / best.stderr;
        ensure(margin > 2.0, format!("scale {c}: only {margin:.2} standard errors worse"))?;
        margins.push(format!("x{c}: {margin:.1} se"));
    }
    Ok(format!("z = {z:.2}; perturbed controls worse by {}", margins.join(", ")))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("identities suite", identities, Duration::from_secs(1)),
        ("wealth-only exactness", wealth_only_exactness, Duration::from_secs(1)),
        ("M/V oracle equivalence and discrepancy report", mass_velocity_oracle, Duration::from_secs(1)),
        ("Galerkin integration consistency", integration_consistency, Duration::from_secs(1)),
        ("FD convergence, d = 1", fd_convergence_1d, Duration::from_secs(30)),
        ("FD self-consistency, d = 2, 3", fd_self_consistency, Duration::from_secs(300)),
        ("trial-vs-FD proximity and slices", trial_proximity, Duration::from_secs(300)),
        ("sweep findings", sweep_findings, Duration::from_secs(600)),
        ("indifference pricing", pricing, Duration::from_secs(1)),
        ("Monte Carlo verification", monte_carlo, Duration::from_secs(60)),
    ];
    let mut failures = 0;
    for (i, (name, check, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = result.and_then(|msg| {
            if elapsed <= limit {
                Ok(msg)
            } else {
                Err(format!("{msg}; runtime {elapsed:.2?} exceeds {limit:?}"))
            }
        });
        match result {
            Ok(msg) => println!("criterion {:>2} PASS  {name} ({elapsed:.2?}): {msg}", i + 1),
            Err(msg) => {
                failures += 1;
                println!("criterion {:>2} FAIL  {name} ({elapsed:.2?}): {msg}", i + 1);
            }
        }
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
