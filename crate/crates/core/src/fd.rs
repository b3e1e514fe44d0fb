//! Explicit finite differences for the time-reversed HJB on `[0, L]^d`.
//!
//! Axis 0 is wealth, axes `1..d` are the non-tradables. Interior derivatives
//! are second-order central differences (the mixed ones are the 4-point
//! cross stencil). On the faces first derivatives are one-sided second-order
//! and second derivatives come from an extrapolated ghost node.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{diffusion_bound, rhs_f_clamped, terminal_payoff, MarketParams, SpacePoint, UJet};

pub const DEFAULT_EDGE: f64 = 4.0;
pub const CFL_SAFETY: f64 = 0.9;

/// Uniform grid with `2^level + 1` points per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub d: usize,
    pub level: u32,
    pub edge: f64,
}

impl Grid {
    pub fn new(d: usize, level: u32, edge: f64) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidParams(format!("grid dimension must be 1..=3, got {d}")));
        }
        if !(2..=10).contains(&level) {
            return Err(Error::InvalidParams(format!("refinement level must be 2..=10, got {level}")));
        }
        if edge.is_nan() || edge <= 0.0 {
            return Err(Error::InvalidParams(format!("box edge must be > 0, got {edge}")));
        }
        Ok(Self { d, level, edge })
    }

    pub fn points_per_axis(&self) -> usize {
        (1usize << self.level) + 1
    }

    pub fn spacing(&self) -> f64 {
        self.edge / (1u64 << self.level) as f64
    }

    pub fn len(&self) -> usize {
        self.points_per_axis().pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis().pow(axis as u32)
    }

    pub fn index_along(&self, flat: usize, axis: usize) -> usize {
        (flat / self.stride(axis)) % self.points_per_axis()
    }

    pub fn point(&self, flat: usize) -> SpacePoint {
        let h = self.spacing();
        let x = self.index_along(flat, 0) as f64 * h;
        let y = (1..self.d).map(|a| self.index_along(flat, a) as f64 * h).collect();
        SpacePoint::new(x, y)
    }

    fn fill_point(&self, flat: usize, p: &mut SpacePoint) {
        let h = self.spacing();
        p.x = self.index_along(flat, 0) as f64 * h;
        for (a, y) in p.y.iter_mut().enumerate() {
            *y = self.index_along(flat, a + 1) as f64 * h;
        }
    }

    /// Flat index of the node at `coords`, which must sit exactly on the grid.
    pub fn node_of(&self, coords: &[f64]) -> Result<usize> {
        if coords.len() != self.d {
            return Err(Error::DomainMismatch(format!("point has {} coordinates, grid has {}", coords.len(), self.d)));
        }
        let h = self.spacing();
        let mut flat = 0;
        for (a, &c) in coords.iter().enumerate() {
            let k = (c / h).round();
            if (c / h - k).abs() > 1e-9 || k < 0.0 || k as usize >= self.points_per_axis() {
                return Err(Error::DomainMismatch(format!("coordinate {c} is not a node of a grid with spacing {h}")));
            }
            flat += k as usize * self.stride(a);
        }
        Ok(flat)
    }

    /// Index in `self` of node `flat` of the coarser nested grid `coarse`.
    fn refine_index(&self, coarse: &Grid, flat: usize) -> Result<usize> {
        if coarse.d != self.d || coarse.level > self.level || (coarse.edge - self.edge).abs() > 1e-12 * self.edge {
            return Err(Error::DomainMismatch(format!(
                "level-{} grid is not nested in level-{} grid",
                coarse.level, self.level
            )));
        }
        let ratio = 1usize << (self.level - coarse.level);
        Ok((0..self.d).map(|a| coarse.index_along(flat, a) * ratio * self.stride(a)).sum())
    }
}

/// Discrete solution at reversed time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub t: f64,
}

/// How second derivatives are closed on the box faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryStencil {
    /// Ghost node from quadratic extrapolation (first-order second derivative).
    Quadratic,
    /// Ghost node from cubic extrapolation (second-order second derivative).
    #[default]
    Cubic,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SolveStats {
    pub dt: f64,
    pub steps: usize,
    /// Node updates in which `u_xx` had to be clamped to the guard.
    pub clamped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSolver {
    pub boundary: BoundaryStencil,
    pub cfl_safety: f64,
}

impl Default for FdSolver {
    fn default() -> Self {
        Self { boundary: BoundaryStencil::default(), cfl_safety: CFL_SAFETY }
    }
}

struct Derivatives {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    /// `(a, b, values)` for `a < b`.
    mixed: Vec<(usize, usize, Vec<f64>)>,
}

impl Derivatives {
    fn mixed(&self, a: usize, b: usize) -> &[f64] {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        &self.mixed.iter().find(|(i, j, _)| *i == a && *j == b).expect("mixed pair").2
    }
}

pub fn init_field(grid: &Grid, mp: &MarketParams) -> Result<Field> {
    if grid.d != mp.dim() {
        return Err(Error::InvalidParams(format!("grid dimension {} but n + 1 = {}", grid.d, mp.dim())));
    }
    let values = (0..grid.len()).into_par_iter().map(|i| terminal_payoff(mp, &grid.point(i))).collect();
    Ok(Field { grid: grid.clone(), values, t: 0.0 })
}

impl FdSolver {
    fn first_derivative(&self, grid: &Grid, u: &[f64], axis: usize) -> Vec<f64> {
        let (s, m, h) = (grid.stride(axis), grid.points_per_axis(), grid.spacing());
        let inv = 0.5 / h;
        (0..u.len())
            .into_par_iter()
            .map(|f| {
                let i = (f / s) % m;
                if i == 0 {
                    (-3.0 * u[f] + 4.0 * u[f + s] - u[f + 2 * s]) * inv
                } else if i == m - 1 {
                    (3.0 * u[f] - 4.0 * u[f - s] + u[f - 2 * s]) * inv
                } else {
                    (u[f + s] - u[f - s]) * inv
                }
            })
            .collect()
    }

    fn second_derivative(&self, grid: &Grid, u: &[f64], axis: usize) -> Vec<f64> {
        let (s, m, h) = (grid.stride(axis), grid.points_per_axis(), grid.spacing());
        let inv = 1.0 / (h * h);
        let boundary = self.boundary;
        // `dir` points into the domain
        let face = move |f: usize, dir: isize| -> f64 {
            let at = |k: isize| u[(f as isize + k * dir * s as isize) as usize];
            match boundary {
                BoundaryStencil::Quadratic => (at(0) - 2.0 * at(1) + at(2)) * inv,
                BoundaryStencil::Cubic => (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) * inv,
            }
        };
        (0..u.len())
            .into_par_iter()
            .map(|f| {
                let i = (f / s) % m;
                if i == 0 {
                    face(f, 1)
                } else if i == m - 1 {
                    face(f, -1)
                } else {
                    (u[f + s] - 2.0 * u[f] + u[f - s]) * inv
                }
            })
            .collect()
    }

    fn derivatives(&self, field: &Field) -> Derivatives {
        let g = &field.grid;
        let first: Vec<Vec<f64>> = (0..g.d).map(|a| self.first_derivative(g, &field.values, a)).collect();
        let second = (0..g.d).map(|a| self.second_derivative(g, &field.values, a)).collect();
        let mut mixed = Vec::new();
        for (a, da) in first.iter().enumerate() {
            for b in a + 1..g.d {
                mixed.push((a, b, self.first_derivative(g, da, b)));
            }
        }
        Derivatives { first, second, mixed }
    }

    fn fill_jet(field: &Field, der: &Derivatives, f: usize, jet: &mut UJet) {
        let n = field.grid.d - 1;
        jet.u = field.values[f];
        jet.u_x = der.first[0][f];
        jet.u_xx = der.second[0][f];
        for i in 0..n {
            jet.grad_y[i] = der.first[i + 1][f];
            jet.mixed_xy[i] = der.mixed(0, i + 1)[f];
            for j in 0..n {
                jet.hess_y[i * n + j] = if i == j { der.second[i + 1][f] } else { der.mixed(i + 1, j + 1)[f] };
            }
        }
    }

    /// Discrete jet of `field` at node `f`.
    pub fn jet_at(&self, field: &Field, f: usize) -> UJet {
        let der = self.derivatives(field);
        let mut jet = UJet::zeros(field.grid.d - 1);
        Self::fill_jet(field, &der, f, &mut jet);
        jet
    }

    /// Largest stable explicit step for `field`: `safety h^2 / (2 d D_max)`.
    pub fn cfl_bound(&self, field: &Field, mp: &MarketParams) -> f64 {
        let der = self.derivatives(field);
        let g = &field.grid;
        let n = g.d - 1;
        let d_max = (0..g.len())
            .into_par_iter()
            .map_init(
                || (UJet::zeros(n), SpacePoint::new(0.0, vec![0.0; n])),
                |(jet, p), f| {
                    Self::fill_jet(field, &der, f, jet);
                    g.fill_point(f, p);
                    diffusion_bound(mp, p, jet)
                },
            )
            .reduce(|| 0.0, f64::max);
        if d_max > 0.0 {
            let h = g.spacing();
            self.cfl_safety * h * h / (2.0 * g.d as f64 * d_max)
        } else {
            f64::INFINITY
        }
    }

    fn advance(&self, field: &Field, mp: &MarketParams, dt: f64) -> Result<(Field, usize)> {
        let der = self.derivatives(field);
        let g = &field.grid;
        let n = g.d - 1;
        let mut values = vec![0.0; g.len()];
        let clamped: usize = values
            .par_iter_mut()
            .enumerate()
            .map_init(
                || (UJet::zeros(n), SpacePoint::new(0.0, vec![0.0; n])),
                |(jet, p), (f, out)| {
                    Self::fill_jet(field, &der, f, jet);
                    g.fill_point(f, p);
                    let (rhs, hit) = rhs_f_clamped(mp, p, jet);
                    *out = field.values[f] + dt * rhs;
                    usize::from(hit)
                },
            )
            .sum();
        if let Some(bad) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::NonPositiveField { node: bad, t: field.t + dt });
        }
        Ok((Field { grid: g.clone(), values, t: field.t + dt }, clamped))
    }

    /// One forward-Euler step; `dt` must respect [`FdSolver::cfl_bound`].
    pub fn step(&self, field: &Field, mp: &MarketParams, dt: f64) -> Result<(Field, usize)> {
        let bound = self.cfl_bound(field, mp);
        if dt > bound * (1.0 + 1e-12) {
            return Err(Error::CflViolation { dt, bound });
        }
        self.advance(field, mp, dt)
    }

    /// March the payoff to reversed time `horizon`. Without an explicit `dt`
    /// the stability bound of the initial field is used throughout; the last
    /// step is shortened to land on `horizon`.
    pub fn solve(&self, grid: &Grid, mp: &MarketParams, horizon: f64, dt: Option<f64>) -> Result<(Field, SolveStats)> {
        mp.validate()?;
        let mut field = init_field(grid, mp)?;
        let bound = self.cfl_bound(&field, mp);
        let dt = match dt {
            Some(dt) if dt > bound * (1.0 + 1e-12) => return Err(Error::CflViolation { dt, bound }),
            Some(dt) if dt > 0.0 => dt,
            Some(dt) => return Err(Error::InvalidParams(format!("dt must be > 0, got {dt}"))),
            None => bound.min(horizon.max(f64::MIN_POSITIVE)),
        };
        let mut stats = SolveStats { dt, steps: 0, clamped: 0 };
        let steps = if horizon > 0.0 { (horizon / dt - 1e-9).ceil() as usize } else { 0 };
        for i in 0..steps {
            let h = if i + 1 == steps { horizon - i as f64 * dt } else { dt };
            let (next, clamped) = self.advance(&field, mp, h)?;
            field = next;
            stats.clamped += clamped;
            stats.steps += 1;
        }
        if steps > 0 {
            field.t = horizon;
        }
        Ok((field, stats))
    }
}

/// Something that can be evaluated on grid nodes.
pub enum Solution<'a> {
    Field(&'a Field),
    Analytic(&'a (dyn Fn(&SpacePoint) -> f64 + Sync)),
}

impl Solution<'_> {
    /// Values at every node of `grid`, in flat order.
    pub fn sample(&self, grid: &Grid) -> Result<Vec<f64>> {
        match self {
            Solution::Field(field) => {
                (0..grid.len()).map(|f| Ok(field.values[field.grid.refine_index(grid, f)?])).collect()
            }
            Solution::Analytic(func) => Ok((0..grid.len()).into_par_iter().map(|f| func(&grid.point(f))).collect()),
        }
    }

    fn at(&self, grid: &Grid, flat: usize) -> Result<f64> {
        match self {
            Solution::Field(field) => Ok(field.values[field.grid.refine_index(grid, flat)?]),
            Solution::Analytic(func) => Ok(func(&grid.point(flat))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Metric {
    MeanAbs,
    MeanAbsLog10,
    /// Relative to the second argument.
    MeanRelPct,
    PointwiseAbs(Vec<f64>),
    /// Mean absolute difference over the `y` sub-grid at fixed `x`.
    SliceMean(f64),
}

impl Metric {
    pub fn name(&self) -> String {
        match self {
            Metric::MeanAbs => "mean_abs".into(),
            Metric::MeanAbsLog10 => "mean_abs_log10".into(),
            Metric::MeanRelPct => "mean_rel_pct".into(),
            Metric::PointwiseAbs(p) => {
                let c: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
                format!("pointwise_abs({})", c.join(";"))
            }
            Metric::SliceMean(x) => format!("slice_mean(x={x})"),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let inner = |prefix: &str| s.strip_prefix(prefix).and_then(|r| r.strip_suffix(')'));
        match s {
            "mean_abs" => Ok(Metric::MeanAbs),
            "mean_abs_log10" => Ok(Metric::MeanAbsLog10),
            "mean_rel_pct" => Ok(Metric::MeanRelPct),
            _ => {
                if let Some(body) = inner("pointwise_abs(") {
                    body.split(';')
                        .map(|c| c.trim().parse::<f64>().map_err(|e| e.to_string()))
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map(Metric::PointwiseAbs)
                } else if let Some(body) = inner("slice_mean(") {
                    let body = body.strip_prefix("x=").unwrap_or(body);
                    body.trim().parse::<f64>().map(Metric::SliceMean).map_err(|e| e.to_string())
                } else {
                    Err(format!("unknown metric `{s}`"))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub metric: String,
    pub value: f64,
    pub context: String,
}

/// Compare `a` against the reference `b` on the nodes of `grid`.
pub fn error_report(a: &Solution, b: &Solution, grid: &Grid, metric: &Metric) -> Result<ErrorReport> {
    let mean_abs = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    let value = match metric {
        Metric::MeanAbs | Metric::MeanAbsLog10 | Metric::MeanRelPct => {
            let (va, vb) = (a.sample(grid)?, b.sample(grid)?);
            match metric {
                Metric::MeanAbs => mean_abs(&va, &vb),
                Metric::MeanAbsLog10 => mean_abs(&va, &vb).log10(),
                _ => 100.0 * va.iter().zip(&vb).map(|(x, y)| ((x - y) / y).abs()).sum::<f64>() / va.len() as f64,
            }
        }
        Metric::PointwiseAbs(coords) => {
            let f = grid.node_of(coords)?;
            (a.at(grid, f)? - b.at(grid, f)?).abs()
        }
        Metric::SliceMean(x) => {
            if grid.d < 2 {
                return Err(Error::DomainMismatch("slice metric needs at least one y axis".into()));
            }
            let mut probe = vec![*x];
            probe.extend(std::iter::repeat_n(0.0, grid.d - 1));
            let base = grid.node_of(&probe)?;
            let m = grid.points_per_axis();
            let sub = m.pow((grid.d - 1) as u32);
            let mut total = 0.0;
            for k in 0..sub {
                // k enumerates the y sub-grid; each y axis has stride m^a
                let f = base + k * m;
                total += (a.at(grid, f)? - b.at(grid, f)?).abs();
            }
            total / sub as f64
        }
    };
    Ok(ErrorReport {
        metric: metric.name(),
        value,
        context: format!("d={} N={} L={}", grid.d, grid.level, grid.edge),
    })
}
