//! The forward inductive scheme: `u(0, x) = 1{x >= 0}`, heat smoothing across
//! each mesh gap, then `u(t_{k+1}, ·) = min(E u(t_k, · + W_Δ), g(t_{k+1}))`.
//! The boundary at `t_{k+1}` is where the smoothed function reaches
//! `g(t_{k+1})`.

use serde::{Deserialize, Serialize};

use crate::barrier::{Boundary, BoundaryInterp, DEFAULT_TOL_REC};
use crate::error::{invalid, Error, Result};
use crate::gaussian::{convolve_heat, normal_pdf, normal_quantile, HeatSmoothed};
use crate::grid::{GridFn, Interp, UniformGrid};
use crate::survival::{self, discretize_with_gap, Discretization, SurvivalFn};

/// Numerical settings shared by the forward and backward schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    /// Spatial half-width `K` in units of `√t_N`.
    pub half_width_sigmas: f64,
    /// Number of spatial nodes `M`.
    pub nodes: usize,
    pub tol_root: f64,
    pub tol_rec: f64,
    /// For continuous `g`, mesh gaps are capped at `gap_scale / n²`. `None`
    /// keeps the bare level-crossing mesh.
    pub gap_scale: Option<f64>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            half_width_sigmas: 8.0,
            nodes: 4097,
            tol_root: 1e-10,
            tol_rec: DEFAULT_TOL_REC,
            gap_scale: Some(16.0),
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_width_sigmas >= 4.0 && self.half_width_sigmas.is_finite()) {
            return Err(invalid("half_width_sigmas", format!("must be >= 4, got {}", self.half_width_sigmas)));
        }
        if self.nodes < 257 {
            return Err(invalid("nodes", format!("must be >= 257, got {}", self.nodes)));
        }
        if !(self.tol_root > 0.0) {
            return Err(invalid("tol_root", "must be positive"));
        }
        if !(self.tol_rec > 0.0) {
            return Err(invalid("tol_rec", "must be positive"));
        }
        if let Some(s) = self.gap_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(invalid("gap_scale", format!("must be positive, got {s}")));
            }
        }
        Ok(())
    }

    /// The spatial grid for a mesh ending at `t_n`, sized from the first
    /// informative survival value `g(t_j) < 1`.
    pub fn spatial_grid(&self, times: &[f64], g_values: &[f64]) -> Result<UniformGrid> {
        self.validate()?;
        let t_end = *times.last().unwrap();
        let spread = self.half_width_sigmas * t_end.max(f64::MIN_POSITIVE).sqrt();
        let a_max = times
            .iter()
            .zip(g_values)
            .find(|(t, g)| **t > 0.0 && **g < 1.0)
            .map(|(t, g)| (t.sqrt() * normal_quantile(*g)).max(0.0))
            .unwrap_or(0.0);
        let spread = if spread > 0.0 { spread } else { self.half_width_sigmas };
        UniformGrid::aligned_at_zero(-spread, (a_max + spread).max(spread), self.nodes)
    }
}

/// `u(0, ·) = 1{x >= 0}` as an exact step function on `grid`.
pub fn init_u(grid: UniformGrid) -> GridFn {
    let zero = grid.nearest(0.0);
    let values = (0..grid.len()).map(|i| if i >= zero { 1.0 } else { 0.0 }).collect();
    GridFn::new(grid, values, 0.0, 1.0, Interp::Step).expect("indicator is a valid grid function")
}

/// `x ↦ E u(x + W_Δ)` on the nodes of `u`.
pub fn step(u: &GridFn, delta_t: f64) -> Result<GridFn> {
    convolve_heat(u, delta_t)
}

/// Outcome of one capping step.
#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub u: GridFn,
    pub boundary: f64,
    pub kink: Option<Kink>,
}

/// `min(w, g_next)` and the root `w(b) = g_next`, with `w` read through its
/// own piecewise-linear interpolation.
pub fn update(w: &GridFn, g_next: f64, tol_root: f64) -> Result<Update> {
    update_with(w, &|x| w.eval(x), g_next, tol_root)
}

/// As [`update`], but the root is located on the exact smoothed function
/// rather than on the interpolated node values.
pub fn update_smoothed(w: &Propagator<'_>, nodes: &GridFn, g_next: f64, tol_root: f64) -> Result<Update> {
    update_with(nodes, &|x| w.eval(x), g_next, tol_root)
}

fn update_with(w: &GridFn, eval: &dyn Fn(f64) -> f64, g_next: f64, tol_root: f64) -> Result<Update> {
    let g_k = w.right_tail();
    if !(0.0..=1.0).contains(&g_next) {
        return Err(invalid("g_next", format!("{g_next} is not a probability")));
    }
    if g_next > g_k {
        return Err(invalid(
            "g_next",
            format!("{g_next} exceeds the current survival {g_k}: g must be non-increasing"),
        ));
    }
    let grid = *w.grid();
    let values = w.values();
    if g_next == g_k {
        return Ok(Update {
            u: w.clone(),
            boundary: f64::INFINITY,
            kink: None,
        });
    }
    let b = match values.iter().position(|&v| v >= g_next) {
        Some(0) => f64::NEG_INFINITY,
        Some(i) => {
            let (mut lo, mut hi) = (grid.x(i - 1), grid.x(i));
            while hi - lo > tol_root {
                let mid = 0.5 * (lo + hi);
                if eval(mid) >= g_next {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        }
        None if g_next - values[values.len() - 1] <= tol_root => grid.x_max(),
        None => {
            return Err(Error::GridTooNarrow {
                t: f64::NAN,
                x_min: grid.x_min(),
                x_max: grid.x_max(),
                suggested_sigmas: f64::NAN,
            })
        }
    };
    let kink = (b.is_finite() && b > grid.x_min() && b < grid.x_max()).then(|| {
        let d = 0.25 * grid.spacing();
        Kink {
            at: b,
            slope: ((g_next - eval(b - d)) / d).max(0.0),
        }
    });
    let capped = (0..grid.len())
        .map(|j| if grid.x(j) >= b { g_next } else { values[j].min(g_next) })
        .collect();
    Ok(Update {
        u: GridFn::from_rounded(grid, capped, w.left_tail().min(g_next), g_next, Interp::Linear),
        boundary: b,
        kink,
    })
}

/// Where a capped slice leaves the smoothed profile for its cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kink {
    pub at: f64,
    /// Slope of the profile just left of the kink.
    pub slope: f64,
}

/// One heat step of a slice, with the two second-order corrections for its
/// piecewise-linear storage: linear interpolation adds about `h²/6` of
/// variance to the smooth part, and the chord across a kink cell loses
/// `s θ(1-θ) h²/2` of mass.
#[derive(Debug, Clone)]
pub struct Propagator<'a> {
    smoothed: HeatSmoothed<'a>,
    sigma: f64,
    /// `(kink position, mass)` subtracted as a Gaussian bump.
    bump: Option<(f64, f64)>,
}

impl<'a> Propagator<'a> {
    pub fn new(u: &'a GridFn, kink: Option<Kink>, delta_t: f64) -> Result<Self> {
        let h = u.grid().spacing();
        let model = h * h / 6.0;
        let linear = u.interp() == Interp::Linear;
        let corrected = linear && delta_t > 2.0 * model;
        let variance = if corrected { delta_t - model } else { delta_t };
        let smoothed = HeatSmoothed::new(u, variance)?;
        let bump = kink.filter(|_| linear).map(|k| {
            let theta = ((k.at - u.grid().x_min()) / h).fract();
            let chord = 0.5 * theta * (1.0 - theta);
            let mass = if corrected { 1.0 / 12.0 - chord } else { -chord };
            (k.at, k.slope * h * h * mass)
        });
        Ok(Self {
            sigma: smoothed.sigma(),
            smoothed,
            bump,
        })
    }

    fn bump_at(&self, x: f64) -> f64 {
        match self.bump {
            Some((at, mass)) => mass * normal_pdf((x - at) / self.sigma) / self.sigma,
            None => 0.0,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.smoothed.eval(x) - self.bump_at(x)
    }

    pub fn on_grid(&self) -> GridFn {
        let w = self.smoothed.on_grid();
        if self.bump.is_none() {
            return w;
        }
        let grid = *w.grid();
        let values = w.values().iter().enumerate().map(|(i, v)| v - self.bump_at(grid.x(i))).collect();
        GridFn::from_rounded(grid, values, w.left_tail(), w.right_tail(), Interp::Linear)
    }
}

/// Boundary and `u`-slices of a discrete problem on its mesh.
#[derive(Debug, Clone)]
pub struct DiscreteSolution {
    pub grid: UniformGrid,
    pub times: Vec<f64>,
    pub g_values: Vec<f64>,
    pub boundary: Boundary,
    pub slices: Vec<GridFn>,
}

/// Breakpoints and values of a step-function survival table, validated.
pub(crate) fn step_table(g: &SurvivalFn) -> Result<(Vec<f64>, Vec<f64>)> {
    g.validate().map_err(|v| Error::InvalidSurvival(v.message))?;
    let pc = g
        .to_piecewise_constant()
        .ok_or_else(|| invalid("g", "expected a piecewise-constant survival function"))?;
    let SurvivalFn::PiecewiseConstant { breakpoints, values } = pc else {
        unreachable!()
    };
    Ok((breakpoints, values))
}

/// Slices and boundary values of the capped heat recursion.
pub(crate) struct Scheme {
    pub slices: Vec<GridFn>,
    pub bvals: Vec<f64>,
    pub dead_from: Option<f64>,
}

/// `f_0 = 1{x >= 0}`, `f_{k+1} = min(E f_k(· + W_Δ), g_{k+1})`.
pub(crate) fn run_scheme(times: &[f64], g_values: &[f64], grid: UniformGrid, config: &SolveConfig) -> Result<Scheme> {
    let mut slices = Vec::with_capacity(times.len());
    let mut bvals = Vec::with_capacity(times.len());
    let mut kinks = Vec::with_capacity(times.len());
    slices.push(init_u(grid));
    bvals.push(0.0);
    kinks.push(None);
    let mut dead_from = None;
    for k in 1..times.len() {
        if dead_from.is_some() {
            slices.push(GridFn::constant(grid, g_values[k]));
            bvals.push(f64::NEG_INFINITY);
            kinks.push(None);
            continue;
        }
        let prev = &slices[k - 1];
        let smoothed = Propagator::new(prev, kinks[k - 1], times[k] - times[k - 1])?;
        let w = smoothed.on_grid();
        let up = update_smoothed(&smoothed, &w, g_values[k], config.tol_root).map_err(|e| match e {
            Error::GridTooNarrow { x_min, x_max, .. } => Error::GridTooNarrow {
                t: times[k],
                x_min,
                x_max,
                suggested_sigmas: 2.0 * config.half_width_sigmas,
            },
            other => other,
        })?;
        if up.boundary == f64::NEG_INFINITY {
            dead_from = Some(times[k]);
        }
        bvals.push(up.boundary);
        kinks.push(up.kink);
        slices.push(up.u);
    }
    Ok(Scheme {
        slices,
        bvals,
        dead_from,
    })
}

/// Runs the inductive scheme on a piecewise-constant `g`.
pub fn solve_discrete(g: &SurvivalFn, config: &SolveConfig) -> Result<DiscreteSolution> {
    let (times, g_values) = step_table(g)?;
    let grid = config.spatial_grid(&times, &g_values)?;
    let scheme = run_scheme(&times, &g_values, grid, config)?;
    let boundary = Boundary::new(times.clone(), scheme.bvals, BoundaryInterp::Discrete)?
        .with_absorption(scheme.dead_from)
        .mark_standard();
    Ok(DiscreteSolution {
        grid,
        times,
        g_values,
        boundary,
        slices: scheme.slices,
    })
}

/// Summary figures for a general-`g` solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub level: usize,
    pub horizon: f64,
    pub mesh_points: usize,
    pub max_gap: f64,
    /// `sup_t (gⁿ(t) - g(t))`, at most `1/n` by construction.
    pub sandwich_gap: f64,
    pub nodes: usize,
    pub spacing: f64,
    pub x_min: f64,
    pub x_max: f64,
}

#[derive(Debug, Clone)]
pub struct GeneralSolution {
    pub discretization: Discretization,
    pub solution: DiscreteSolution,
    pub diagnostics: Diagnostics,
}

impl GeneralSolution {
    pub fn boundary(&self) -> &Boundary {
        &self.solution.boundary
    }

    /// `sup_k |ĝ(t_k) - gⁿ(t_k)|` over the mesh, for checking an empirical
    /// survival function sampled from the solved barrier.
    pub fn survival_discrepancy(&self, empirical: &SurvivalFn) -> f64 {
        self.solution
            .times
            .iter()
            .zip(&self.solution.g_values)
            .map(|(&t, &g)| (empirical.eval(t) - g).abs())
            .fold(0.0, f64::max)
    }
}

/// Discretizes `g` at level `n` on `[0, horizon]` and solves the discrete
/// problem.
pub fn solve_general(g: &SurvivalFn, level: usize, horizon: f64, config: &SolveConfig) -> Result<GeneralSolution> {
    let disc = discretize_for(g, level, horizon, config)?;
    solve_discretized(g, disc, horizon, config)
}

fn discretize_for(g: &SurvivalFn, level: usize, horizon: f64, config: &SolveConfig) -> Result<Discretization> {
    match config.gap_scale {
        Some(scale) => discretize_with_gap(g, level, horizon, scale / (level * level) as f64),
        None => survival::discretize(g, level, horizon),
    }
}

fn solve_discretized(
    g: &SurvivalFn,
    disc: Discretization,
    horizon: f64,
    config: &SolveConfig,
) -> Result<GeneralSolution> {
    let solution = solve_discrete(&disc.g_n, config)?;
    let times = &disc.mesh.times;
    let max_gap = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let sandwich_gap = times
        .windows(2)
        .map(|w| g.eval(w[0]) - g.left_limit(w[1]))
        .fold(0.0, f64::max);
    let diagnostics = Diagnostics {
        level: disc.mesh.level,
        horizon,
        mesh_points: times.len(),
        max_gap,
        sandwich_gap,
        nodes: solution.grid.len(),
        spacing: solution.grid.spacing(),
        x_min: solution.grid.x_min(),
        x_max: solution.grid.x_max(),
    };
    Ok(GeneralSolution {
        discretization: disc,
        solution,
        diagnostics,
    })
}

/// Solves at each level in turn, each mesh also containing the previous
/// level's mesh.
pub fn refinement_ladder(
    g: &SurvivalFn,
    levels: &[usize],
    horizon: f64,
    config: &SolveConfig,
) -> Result<Vec<GeneralSolution>> {
    let mut out: Vec<GeneralSolution> = Vec::with_capacity(levels.len());
    for &n in levels {
        let mut disc = discretize_for(g, n, horizon, config)?;
        if let Some(prev) = out.last() {
            let coarse = &prev.discretization.mesh;
            if !coarse.is_nested_in(&disc.mesh) {
                let mut times = disc.mesh.times;
                times.extend(coarse.times.iter().copied());
                times.sort_by(f64::total_cmp);
                times.dedup();
                disc = survival::build(g, n, times)?;
            }
        }
        out.push(solve_discretized(g, disc, horizon, config)?);
    }
    Ok(out)
}

/// `sup |b(t) - target(t)|` over the finite boundary values at mesh times in
/// `[t_lo, t_hi]`; `+∞` if any value there is infinite.
pub fn sup_error(b: &Boundary, target: impl Fn(f64) -> f64, t_lo: f64, t_hi: f64) -> f64 {
    b.times()
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= t_lo && t <= t_hi)
        .map(|(k, &t)| {
            let v = b.value_at(k);
            if v.is_finite() {
                (v - target(t)).abs()
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}
