//! Experiment configuration and the commands behind the `hjb-ng` binary.
//!
//! Configs are flat `key = value` files. Every key has a default matching
//! the reference parameter set; unknown keys are rejected. Commands write
//! CSV (header first, floats in round-trip scientific notation) to one
//! writer and human-readable diagnostics to another.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::fd::{error_report, BoundaryStencil, ErrorReport, FdSolver, Field, Grid, Metric, Solution, DEFAULT_EDGE};
use crate::galerkin::{mass_discrepancy, Assembler, GalerkinIntegrator, Method};
use crate::mc::{simulate_paired, z_score, ExposurePolicy, McConfig, Scaled, TrialPolicy};
use crate::model::{MarketParams, SpacePoint};
use crate::pricing::{indifference_price_bisect, indifference_price_closed, price_residual, PriceQuery};
use crate::quadrature::identity_suite;
use crate::trial::{evolve, initial_params, rate_constants, trial_solution, trial_value, value_function, RateMode};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] crate::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Model(crate::Error::InvalidParams(_)) => 2,
            _ => 1,
        }
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;

fn config_err(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

/// Whether every internal check of a command passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Pass => 0,
            Outcome::Fail => 1,
        }
    }

    fn from_bool(ok: bool) -> Self {
        if ok {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Identities,
    NgSolve,
    FdSolve,
    Compare,
    Sweep,
    Price,
    McCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    A0,
    B0,
    Rho,
    Lambda,
    R,
}

impl SweepParam {
    pub const ALL: [SweepParam; 5] = [SweepParam::A0, SweepParam::B0, SweepParam::Rho, SweepParam::Lambda, SweepParam::R];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::A0 => "a0",
            SweepParam::B0 => "b0",
            SweepParam::Rho => "rho",
            SweepParam::Lambda => "lambda",
            SweepParam::R => "r",
        }
    }

    /// Sweep interval `(low, high)`. The interest-rate interval as written,
    /// `[0.25, 0.1]` is read as `[0.025, 0.1]` unless `literal_r` is set.
    pub fn range(self, literal_r: bool) -> (f64, f64) {
        match self {
            SweepParam::A0 => (0.25, 0.4),
            SweepParam::B0 => (0.1, 0.4),
            SweepParam::Rho => (-0.5, 0.4),
            SweepParam::Lambda => (0.05, 0.2),
            SweepParam::R if literal_r => (0.25, 0.1),
            SweepParam::R => (0.025, 0.1),
        }
    }

    fn get(self, mp: &MarketParams) -> f64 {
        match self {
            SweepParam::A0 => mp.a0,
            SweepParam::B0 => mp.b0,
            SweepParam::Rho => mp.rho,
            SweepParam::Lambda => mp.lambda,
            SweepParam::R => mp.r,
        }
    }

    fn set(self, mp: &mut MarketParams, v: f64) {
        match self {
            SweepParam::A0 => mp.a0 = v,
            SweepParam::B0 => mp.b0 = v,
            SweepParam::Rho => mp.rho = v,
            SweepParam::Lambda => mp.lambda = v,
            SweepParam::R => mp.r = v,
        }
    }

    /// Map a relative position in `[0.5, 2]` onto the sweep interval,
    /// piecewise linearly with `1` landing on `default`.
    pub fn value_at(self, rel: f64, default: f64, literal_r: bool) -> f64 {
        let (lo, hi) = self.range(literal_r);
        if rel <= 1.0 {
            lo + (rel - 0.5) / 0.5 * (default - lo)
        } else {
            default + (rel - 1.0) * (hi - default)
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        SweepParam::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| format!("unknown sweep parameter `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssemblerKind {
    Closed,
    Quadrature,
}

/// Every tunable of every command.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub gamma: f64,
    pub r: f64,
    pub lambda: f64,
    pub a0: f64,
    pub b0: f64,
    pub rho: f64,
    /// Number of non-tradables; each command has its own fallback.
    pub n: Option<usize>,
    /// Forward units; defaults to 1 when `n >= 1` and 0 otherwise.
    pub k: Option<f64>,
    pub horizon: f64,
    pub edge: f64,
    pub x0: f64,
    /// Initial non-tradable values; a single entry is broadcast.
    pub y0: Vec<f64>,
    pub d: Option<usize>,
    pub level: Option<u32>,
    pub level_min: Option<u32>,
    pub level_max: Option<u32>,
    pub mode: RateMode,
    pub metric: Option<Metric>,
    pub order: usize,
    pub dt: f64,
    pub method: Method,
    pub assembler: AssemblerKind,
    pub boundary: BoundaryStencil,
    pub k_list: Vec<f64>,
    pub n_list: Vec<usize>,
    pub b_list: Vec<f64>,
    pub tol: f64,
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub sigma_mc: f64,
    pub perturb: Vec<f64>,
    pub params: Vec<SweepParam>,
    pub rel: Vec<f64>,
    pub literal_r_range: bool,
    pub probe: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mp = MarketParams::reference(1);
        let mc = McConfig::default();
        Self {
            gamma: mp.gamma,
            r: mp.r,
            lambda: mp.lambda,
            a0: mp.a0,
            b0: mp.b0,
            rho: mp.rho,
            n: None,
            k: None,
            horizon: mp.horizon,
            edge: DEFAULT_EDGE,
            x0: 1.0,
            y0: vec![1.0],
            d: None,
            level: None,
            level_min: None,
            level_max: None,
            mode: RateMode::Oracle,
            metric: None,
            order: crate::quadrature::DEFAULT_ORDER,
            dt: 1e-3,
            method: Method::Rk4,
            assembler: AssemblerKind::Quadrature,
            boundary: BoundaryStencil::Cubic,
            k_list: vec![0.0, 1.0, 2.0],
            n_list: vec![1, 2, 3],
            b_list: vec![0.5, 1.0, 2.0],
            tol: 1e-10,
            paths: mc.paths,
            steps: mc.steps,
            seed: mc.seed,
            sigma_mc: mc.sigma_mc,
            perturb: vec![1.5, 0.5],
            params: SweepParam::ALL.to_vec(),
            rel: vec![0.5, 0.75, 1.0, 1.5, 2.0],
            literal_r_range: false,
            probe: 2.0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> HarnessResult<T>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| config_err(format!("{key} = {value}: {e}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> HarnessResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse(key, s)).collect()
}

impl ExperimentConfig {
    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> HarnessResult<()> {
        let v = value.trim();
        match key.trim() {
            "gamma" => self.gamma = parse(key, v)?,
            "r" => self.r = parse(key, v)?,
            "lambda" => self.lambda = parse(key, v)?,
            "a0" => self.a0 = parse(key, v)?,
            "b0" => self.b0 = parse(key, v)?,
            "rho" => self.rho = parse(key, v)?,
            "n" => self.n = Some(parse(key, v)?),
            "k" => self.k = Some(parse(key, v)?),
            "T" => self.horizon = parse(key, v)?,
            "L" => self.edge = parse(key, v)?,
            "x0" => self.x0 = parse(key, v)?,
            "y0" => self.y0 = parse_list(key, v)?,
            "d" => self.d = Some(parse(key, v)?),
            "N" => self.level = Some(parse(key, v)?),
            "N_min" => self.level_min = Some(parse(key, v)?),
            "N_max" => self.level_max = Some(parse(key, v)?),
            "mode" => self.mode = parse(key, v)?,
            "metric" => self.metric = Some(parse(key, v)?),
            "order" => self.order = parse(key, v)?,
            "dt" => self.dt = parse(key, v)?,
            "method" => {
                self.method = match v {
                    "euler" => Method::Euler,
                    "rk4" => Method::Rk4,
                    _ => return Err(config_err(format!("method = {v}: expected euler|rk4"))),
                }
            }
            "assembler" => {
                self.assembler = match v {
                    "closed" => AssemblerKind::Closed,
                    "quadrature" => AssemblerKind::Quadrature,
                    _ => return Err(config_err(format!("assembler = {v}: expected closed|quadrature"))),
                }
            }
            "boundary" => {
                self.boundary = match v {
                    "cubic" => BoundaryStencil::Cubic,
                    "quadratic" => BoundaryStencil::Quadratic,
                    _ => return Err(config_err(format!("boundary = {v}: expected cubic|quadratic"))),
                }
            }
            "k_list" => self.k_list = parse_list(key, v)?,
            "n_list" => self.n_list = parse_list(key, v)?,
            "b_list" => self.b_list = parse_list(key, v)?,
            "tol" => self.tol = parse(key, v)?,
            "paths" => self.paths = parse(key, v)?,
            "steps" => self.steps = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "sigma_mc" => self.sigma_mc = parse(key, v)?,
            "perturb" => self.perturb = parse_list(key, v)?,
            "params" => self.params = parse_list(key, v)?,
            "rel" => self.rel = parse_list(key, v)?,
            "literal_r_range" => self.literal_r_range = parse(key, v)?,
            "probe" => self.probe = parse(key, v)?,
            other => return Err(config_err(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Apply a `key = value` override of the form used on the command line.
    pub fn apply_override(&mut self, assignment: &str) -> HarnessResult<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| config_err(format!("expected key=value, got `{assignment}`")))?;
        self.set(k, v)
    }

    /// Apply the contents of a config file. Blank lines and `#` comments
    /// are ignored.
    pub fn apply_text(&mut self, text: &str) -> HarnessResult<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.apply_override(line).map_err(|e| match e {
                HarnessError::Config(m) => config_err(format!("line {}: {m}", lineno + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> HarnessResult<()> {
        let text = std::fs::read_to_string(path)?;
        self.apply_text(&text)
    }

    /// Market parameters for `n` non-tradables.
    pub fn market(&self, n: usize) -> HarnessResult<MarketParams> {
        let mp = MarketParams {
            r: self.r,
            lambda: self.lambda,
            gamma: self.gamma,
            a0: self.a0,
            b0: self.b0,
            rho: self.rho,
            n,
            k: self.k.unwrap_or(if n == 0 { 0.0 } else { 1.0 }),
            horizon: self.horizon,
        };
        mp.validate()?;
        Ok(mp)
    }

    fn initial_y(&self, n: usize) -> HarnessResult<Vec<f64>> {
        match self.y0.len() {
            1 => Ok(vec![self.y0[0]; n]),
            len if len == n => Ok(self.y0.clone()),
            len => Err(config_err(format!("y0 has {len} entries, expected 1 or n = {n}"))),
        }
    }

    fn mc_config(&self) -> McConfig {
        McConfig { paths: self.paths, steps: self.steps, seed: self.seed, sigma_mc: self.sigma_mc }
    }
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn json_line(diag: &mut dyn Write, value: &impl serde::Serialize) -> HarnessResult<()> {
    let text = serde_json::to_string(value).map_err(|e| std::io::Error::other(e.to_string()))?;
    writeln!(diag, "{text}")?;
    Ok(())
}

/// Run `cmd` with `cfg`, writing CSV to `out` and diagnostics to `diag`.
pub fn run(cmd: Command, cfg: &ExperimentConfig, out: &mut dyn Write, diag: &mut dyn Write) -> HarnessResult<Outcome> {
    match cmd {
        Command::Identities => cmd_identities(cfg, out, diag),
        Command::NgSolve => cmd_ng_solve(cfg, out, diag),
        Command::FdSolve => cmd_fd_solve(cfg, out, diag),
        Command::Compare => cmd_compare(cfg, out, diag),
        Command::Sweep => cmd_sweep(cfg, out, diag),
        Command::Price => cmd_price(cfg, out, diag),
        Command::McCheck => cmd_mc(cfg, out, diag),
    }
}

pub fn cmd_identities(cfg: &ExperimentConfig, out: &mut dyn Write, diag: &mut dyn Write) -> HarnessResult<Outcome> {
    let ns = cfg.n.map_or_else(|| cfg.n_list.clone(), |n| vec![n]);
    let checks = identity_suite(cfg.order, &ns, &cfg.b_list, cfg.tol)?;
    writeln!(out, "identity,n,b,order,computed,expected,rel_error,passed")?;
    for c in &checks {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            c.identity.name(),
            c.n,
            num(c.b),
            c.order,
            num(c.computed),
            num(c.expected),
            num(c.rel_error),
            c.passed
        )?;
    }
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).collect();
    for c in &failed {
        writeln!(diag, "FAILED {} (n = {}, b = {}): relative error {:e}", c.identity.name(), c.n, c.b, c.rel_error)?;
    }
    writeln!(diag, "{}/{} identity checks passed", checks.len() - failed.len(), checks.len())?;
    Ok(Outcome::from_bool(failed.is_empty()))
}

pub fn cmd_ng_solve(cfg: &ExperimentConfig, out: &mut dyn Write, diag: &mut dyn Write) -> HarnessResult<Outcome> {
    let mp = cfg.market(cfg.n.unwrap_or(1))?.value_branch();
    let (assembler, reference_mode) = match cfg.assembler {
        AssemblerKind::Closed => (Assembler::Closed(cfg.mode), cfg.mode),
        AssemblerKind::Quadrature => (Assembler::Quadrature, RateMode::Oracle),
    };
    let integrator = GalerkinIntegrator::with_order(assembler, cfg.method, cfg.order)?;
    let s0 = initial_params(&mp);
    let traj = integrator.integrate(&mp, &s0, mp.horizon, cfg.dt)?;
    let rates = rate_constants(&mp, reference_mode);
    writeln!(out, "t,log_alpha,log_beta,log_zeta,max_abs_dev")?;
    let mut worst: f64 = 0.0;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let exact = evolve(&s0, &rates, *t);
        let dev = s.as_vec().iter().zip(exact.as_vec()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(dev);
        writeln!(
            out,
            "{},{},{},{},{}",
            num(*t),
            num(s.log_alpha),
            num(s.log_beta),
            num(s.log_zeta.unwrap_or(f64::NAN)),
            num(dev)
        )?;
    }
    if mp.n >= 1 {
        json_line(diag, &mass_discrepancy(&mp, traj.last())?)?;
    }
    writeln!(diag, "max deviation from the closed-form flow: {worst:e}")?;
    Ok(Outcome::from_bool(worst <= 1e-9))
}

/// Dimension and market of a finite-difference run. `T = 0` is allowed
/// (the solve then returns the payoff).
fn fd_setup(cfg: &ExperimentConfig, default_dim: usize) -> HarnessResult<(usize, MarketParams)> {
    let dim = cfg.d.or(cfg.n.map(|n| n + 1)).unwrap_or(default_dim);
    if !(1..=3).contains(&dim) {
        return Err(config_err(format!("d must be 1, 2 or 3, got {dim}")));
    }
    if cfg.horizon.is_nan() || cfg.horizon < 0.0 {
        return Err(config_err(format!("T must be >= 0, got {}", cfg.horizon)));
    }
    let probe = ExperimentConfig { horizon: if cfg.horizon > 0.0 { cfg.horizon } else { 1.0 }, ..cfg.clone() };
    let mp = probe.market(dim - 1)?;
    if dim == 1 && mp.k != 0.0 {
        return Err(config_err("d = 1 has no non-tradable axis, so k must be 0"));
    }
    Ok((dim, mp))
}

fn fd_run(cfg: &ExperimentConfig, mp: &MarketParams, dim: usize, level: u32) -> HarnessResult<(Grid, Field, usize)> {
    let grid = Grid::new(dim, level, cfg.edge)?;
    let solver = FdSolver { boundary: cfg.boundary, ..FdSolver::default() };
    let (field, stats) = solver.solve(&grid, mp, cfg.horizon, None)?;
    Ok((grid, field, stats.clamped))
}

fn trial_fn(mp: &MarketParams, mode: RateMode, tau: f64) -> impl Fn(&SpacePoint) -> f64 + Sync {
    let (s, n) = trial_solution(mp, mode, tau);
    move |p: &SpacePoint| trial_value(&s, n, p)
}

fn report_clamped(diag: &mut dyn Write, level: u32, clamped: usize) -> HarnessResult<()> {
    if clamped > 0 {
        writeln!(diag, "warning: N = {level}: u_xx clamped at {clamped} node updates")?;
    }
    Ok(())
}

pub fn cmd_fd_solve(cfg: &ExperimentConfig, out: &mut dyn Write, diag: &mut dyn Write) -> HarnessResult<Outcome> {
    let (dim, mp) = fd_setup(cfg, 2)?;
    let level = cfg.level.unwrap_or(4);
    let (grid, field, clamped) = fd_run(cfg, &mp, dim, level)?;
    report_clamped(diag, level, clamped)?;
    let trial = trial_fn(&mp, cfg.mode, cfg.horizon);
    let mut header = vec!["x".to_string()];
    header.extend((1..dim).map(|i| format!("y{i}")));
    header.extend(["u_fd".into(), "u_trial".into()]);
    writeln!(out, "{}", header.join(","))?;
    for f in 0..grid.len() {
        let p = grid.point(f);
        let mut cols = vec![num(p.x)];
        cols.extend(p.y.iter().map(|&v| num(v)));
        cols.push(num(field.values[f]));
        cols.push(num(trial(&p)));
        writeln!(out, "{}", cols.join(","))?;
    }
    if let Some(metric) = &cfg.metric {
        let report = error_report(&Solution::Analytic(&trial), &Solution::Field(&field), &grid, metric)?;
        json_line(diag, &report)?;
    }
    Ok(Outcome::Pass)
}

fn default_levels(dim: usize) -> (u32, u32) {
    match dim {
        1 => (3, 6),
        2 => (3, 5),
        _ => (3, 4),
    }
}

/// Error rows of the comparison at one level.
pub fn compare_level(
    cfg: &ExperimentConfig,
    mp: &MarketParams,
    grid: &Grid,
    field: &Field,
    previous: Option<&Field>,
) -> HarnessResult<Vec<ErrorReport>> {
    let trial = trial_fn(mp, cfg.mode, cfg.horizon);
    let fd = Solution::Field(field);
    let tr = Solution::Analytic(&trial);
    let mut rows = Vec::new();
    if let Some(metric) = &cfg.metric {
        rows.push(error_report(&tr, &fd, grid, metric)?);
        return Ok(rows);
    }
    for metric in [Metric::MeanAbs, Metric::MeanAbsLog10, Metric::MeanRelPct] {
        rows.push(error_report(&tr, &fd, grid, &metric)?);
    }
    if let Some(prev) = previous {
        let probe = Metric::PointwiseAbs(vec![cfg.probe; grid.d]);
        let mut r = error_report(&fd, &Solution::Field(prev), &prev.grid, &probe)?;
        r.metric = format!("self_error({})", r.metric.trim_start_matches("pointwise_abs(").trim_end_matches(')'));
        rows.push(r);
    }
    if grid.d == 3 {
        let h = grid.spacing();
        for i in 0..grid.points_per_axis() {
            rows.push(error_report(&tr, &fd, grid, &Metric::SliceMean(i as f64 * h))?);
        }
    }
    Ok(rows)
}

pub fn cmd_compare(cfg: &ExperimentConfig, out: &mut dyn Write, diag: &mut dyn Write) -> HarnessResult<Outcome> {
    let (dim, mp) = fd_setup(cfg, 1)?;
    let levels: Vec<u32> = match cfg.level {
        Some(n) => vec![n],
        None => {
            let (lo, hi) = default_levels(dim);
            (cfg.level_min.unwrap_or(lo)..=cfg.level_max.unwrap_or(hi)).collect()
        }
    };
    if levels.is_empty() {
        return Err(config_err("empty N range"));
    }
    writeln!(out, "N,metric,value")?;
    let mut previous: Option<Field> = None;
    for level in levels {
        let (grid, field, clamped) = fd_run(cfg, &mp, dim, level)?;
        report_clamped(diag, level, clamped)?;
        for row in compare_level(cfg, &mp, &grid, &field, previous.as_ref())? {
            writeln!(out, "{level},{},{}", row.metric, num(row.value))?;
        }
        previous = Some(field);
    }
    Ok(Outcome::Pass)
}

/// One row of a parameter sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: SweepParam,
    pub rel: f64,
    pub value: f64,
    pub mean_rel_pct: f64,
    pub mean_abs: f64,
}

pub fn sweep_rows(cfg: &ExperimentConfig) -> HarnessResult<Vec<SweepRow>> {
    let (dim, base) = fd_setup(&ExperimentConfig { d: Some(cfg.d.unwrap_or(3)), ..cfg.clone() }, 3)?;
    let level = cfg.level.unwrap_or(4);
    if let Some(bad) = cfg.rel.iter().find(|r| !(0.5..=2.0).contains(*r)) {
        return Err(config_err(format!("relative sweep positions must lie in [0.5, 2], got {bad}")));
    }
    let tasks: Vec<(usize, SweepParam, f64)> = cfg
        .params
        .iter()
        .enumerate()
        .flat_map(|(i, &p)| cfg.rel.iter().map(move |&r| (i, p, r)))
        .collect();
    let mut rows: Vec<(usize, SweepRow)> = tasks
        .into_par_iter()
        .map(|(i, param, rel)| {
            let mut mp = base.clone();
            let value = param.value_at(rel, param.get(&base), cfg.literal_r_range);
            param.set(&mut mp, value);
            mp.validate()?;
            let (grid, field, _) = fd_run(cfg, &mp, dim, level)?;
            let trial = trial_fn(&mp, cfg.mode, cfg.horizon);
            let (tr, fd) = (Solution::Analytic(&trial), Solution::Field(&field));
            let rel_pct = error_report(&tr, &fd, &grid, &Metric::MeanRelPct)?.value;
            let abs = error_report(&tr, &fd, &grid, &Metric::MeanAbs)?.value;
            Ok((i, SweepRow { param, rel, value, mean_rel_pct: rel_pct, mean_abs: abs }))
        })
        .collect::<HarnessResult<_>>()?;
    rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.rel.total_cmp(&b.1.rel)));
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

pub fn cmd_sweep(cfg: &ExperimentConfig, out: &mut dyn Write, _diag: &mut dyn Write) -> HarnessResult<Outcome> {
    let rows = sweep_rows(cfg)?;
    writeln!(out, "param,rel,value,mean_rel_pct,mean_abs")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.param.name(), num(r.rel), num(r.value), num(r.mean_rel_pct), num(r.mean_abs))?;
    }
    Ok(Outcome::Pass)
}

/// Bisection price with a bracket widened until it straddles the root.
pub fn bisect_price(q: &PriceQuery, mode: RateMode) -> HarnessResult<f64> {
    let with = q.mp.clone();
    let without = MarketParams { k: 0.0, ..q.mp.clone() };
    let left = |t: f64, p: &SpacePoint| value_function(&with, mode, t, p);
    let right = |t: f64, p: &SpacePoint| value_function(&without, mode, t, p);
    let mut width = 10.0;
    loop {
        match indifference_price_bisect(left, right, q, (-width, width), 1e-12) {
            Err(crate::Error::NoSignChange { .. }) if width < 1e6 => width *= 10.0,
            other => return Ok(other?),
        }
    }
}

pub fn cmd_price(cfg: &ExperimentConfig, out: &mut dyn Write, diag: &mut dyn Write) -> HarnessResult<Outcome> {
    let n = cfg.n.unwrap_or(1);
    let y0 = cfg.initial_y(n)?;
    writeln!(out, "k,p_closed,p_bisect,residual")?;
    let mut ok = true;
    for &k in &cfg.k_list {
        let mp = ExperimentConfig { k: Some(k), ..cfg.clone() }.market(n)?;
        let q = PriceQuery::new(mp, cfg.x0, y0.clone())?;
        let closed = indifference_price_closed(&q, cfg.mode)?;
        let bisect = bisect_price(&q, cfg.mode)?;
        let residual = price_residual(&q, cfg.mode, closed);
        writeln!(out, "{},{},{},{}", num(k), num(closed), num(bisect), num(residual))?;
        if residual > 1e-9 || (closed - bisect).abs() > 1e-10 {
            ok = false;
            writeln!(diag, "FAILED k = {k}: residual {residual:e}, |closed - bisect| = {:e}", (closed - bisect).abs())?;
        }
    }
    Ok(Outcome::from_bool(ok))
}

/// Monte Carlo estimates for the trial policy and its scaled variants.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub exact: f64,
    /// `(scale, estimate, z)`; the first entry is the unscaled policy.
    pub runs: Vec<(f64, crate::mc::McEstimate, f64)>,
}

pub fn mc_report(cfg: &ExperimentConfig) -> HarnessResult<McReport> {
    let n = cfg.n.unwrap_or(0);
    let mp = cfg.market(n)?;
    let y0 = cfg.initial_y(n)?;
    let policy = TrialPolicy::new(&mp, cfg.mode);
    let scaled: Vec<Scaled<TrialPolicy>> = cfg.perturb.iter().map(|&c| Scaled(policy.clone(), c)).collect();
    let mut policies: Vec<&dyn ExposurePolicy> = vec![&policy];
    policies.extend(scaled.iter().map(|p| p as &dyn ExposurePolicy));
    let estimates = simulate_paired(&mp, &policies, cfg.x0, &y0, &cfg.mc_config())?;
    let exact = value_function(&mp, cfg.mode, 0.0, &SpacePoint::new(cfg.x0, y0));
    let scales = std::iter::once(1.0).chain(cfg.perturb.iter().copied());
    let runs = scales.zip(estimates).map(|(c, e)| (c, e, z_score(&e, exact))).collect();
    Ok(McReport { exact, runs })
}

pub fn cmd_mc(cfg: &ExperimentConfig, out: &mut dyn Write, diag: &mut dyn Write) -> HarnessResult<Outcome> {
    let report = mc_report(cfg)?;
    writeln!(out, "scale,mean,stderr,z,exact,negative_wealth_fraction")?;
    for (c, e, z) in &report.runs {
        writeln!(out, "{},{},{},{},{},{}", num(*c), num(e.mean), num(e.stderr), num(*z), num(report.exact), num(e.negative_wealth_fraction))?;
    }
    let (_, best, z) = report.runs[0];
    for (c, e, _) in &report.runs[1..] {
        if best.stderr > 0.0 {
            writeln!(diag, "scale {c}: below the trial policy by {:.2} standard errors", (best.mean - e.mean) / best.stderr)?;
        }
    }
    writeln!(diag, "z = {z:.3} against the value function {:e}", report.exact)?;
    Ok(Outcome::from_bool(z.abs() <= 3.0))
}
