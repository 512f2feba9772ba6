//! The optimal stopping value `v(t, x)` by backward induction, the identity
//! `u = v`, and Monte Carlo evaluation of the reversed-time stopping rule.

use serde::{Deserialize, Serialize};

use crate::barrier::Boundary;
use crate::error::{invalid, Result};
use crate::forward::{init_u, solve_discrete, step_table, update_smoothed, Kink, Propagator, SolveConfig};
use crate::grid::{GridFn, UniformGrid};
use crate::simulate::simulate_gamma;
use crate::survival::SurvivalFn;

/// `v(t_k, ·)` on the spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSlice {
    pub t: f64,
    pub g: f64,
    pub v: GridFn,
}

/// All value slices of a discrete problem.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    pub grid: UniformGrid,
    pub slices: Vec<ValueSlice>,
    kinks: Vec<Option<Kink>>,
}

/// Backward induction for `v`: `v(0, ·) = 1{x >= 0}` and
/// `v(t_{k+1}, ·) = min(g(t_{k+1}), E v(t_k, · + W_Δ))`.
pub fn value_backward(g: &SurvivalFn, config: &SolveConfig) -> Result<ValueFunction> {
    let (times, g_values) = step_table(g)?;
    let grid = config.spatial_grid(&times, &g_values)?;
    let mut slices = vec![ValueSlice {
        t: 0.0,
        g: 1.0,
        v: init_u(grid),
    }];
    let mut kinks = vec![None];
    for k in 1..times.len() {
        let prev = &slices[k - 1];
        let (v, kink) = if prev.g == 0.0 {
            (GridFn::constant(grid, g_values[k]), None)
        } else {
            let expect = Propagator::new(&prev.v, kinks[k - 1], times[k] - times[k - 1])?;
            let nodes = expect.on_grid();
            let capped = update_smoothed(&expect, &nodes, g_values[k], config.tol_root)?;
            (capped.u, capped.kink)
        };
        slices.push(ValueSlice {
            t: times[k],
            g: g_values[k],
            v,
        });
        kinks.push(kink);
    }
    Ok(ValueFunction { grid, slices, kinks })
}

impl ValueFunction {
    pub fn times(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.t).collect()
    }

    /// `v(t, x)` for any `t >= 0`. Off the mesh this is `E v(t_k, x + W_{t-t_k})`
    /// for the last mesh time `t_k < t`; on it, `min(g(t_k), E v(t_{k-1}, ...))`
    /// with the expectation evaluated exactly.
    pub fn eval(&self, t: f64, x: f64) -> Result<f64> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(invalid("t", format!("must be finite and non-negative, got {t}")));
        }
        let k = self.slices.partition_point(|s| s.t <= t) - 1;
        let slice = &self.slices[k];
        if slice.t == t {
            if k == 0 {
                return Ok(slice.v.eval(x));
            }
            let prev = &self.slices[k - 1];
            if prev.g == 0.0 {
                return Ok(slice.g);
            }
            let p = Propagator::new(&prev.v, self.kinks[k - 1], t - prev.t)?;
            return Ok(p.eval(x).min(slice.g));
        }
        if slice.g == 0.0 {
            return Ok(0.0);
        }
        let p = Propagator::new(&slice.v, self.kinks[k], t - slice.t)?;
        Ok(p.eval(x).min(slice.g))
    }
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Minimum number of paths accepted by [`mc_value`].
pub const MIN_MC_PATHS: usize = 100;

/// Estimates `E[g(t - γ) 1{γ < t} + 1{γ = t, x + W_t >= 0}]` for the
/// reversed-time rule of `b`.
pub fn mc_value(t: f64, x: f64, b: &Boundary, g: &SurvivalFn, n: usize, seed: u64) -> Result<McEstimate> {
    if n < MIN_MC_PATHS {
        return Err(invalid("n", format!("need at least {MIN_MC_PATHS} paths, got {n}")));
    }
    let paths = simulate_gamma(t, x, b, n, seed)?;
    let payoffs = paths.iter().map(|p| match p.stopped_at {
        Some(tk) => g.eval(tk),
        None => f64::from(u8::from(p.terminal)),
    });
    let (mut sum, mut sq) = (0.0, 0.0);
    for y in payoffs {
        sum += y;
        sq += y * y;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sq / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
    Ok(McEstimate {
        mean,
        std_error: (var / nf).sqrt(),
        n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McPoint {
    pub t: f64,
    pub x: f64,
    pub grid_v: f64,
    pub mc: f64,
    pub se: f64,
}

impl McPoint {
    /// Agreement within `k` standard errors. A zero standard error (every
    /// path stopped at once) requires agreement to rounding.
    pub fn within(&self, k: f64) -> bool {
        (self.mc - self.grid_v).abs() <= k * self.se + 1e-12
    }
}

/// Result of [`check_u_equals_v`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UvReport {
    pub max_grid_diff: f64,
    pub mc_points: Vec<McPoint>,
    pub within_3se: usize,
    pub pass: bool,
}

/// Tolerance for the node-wise `u = v` identity.
pub const UV_GRID_TOL: f64 = 1e-12;

/// Compares forward `u` with backward `v` node-wise and checks the grid
/// value against Monte Carlo at `samples`. Passes iff the grid identity
/// holds and at least 90% of the points agree within three standard errors.
pub fn check_u_equals_v(
    g: &SurvivalFn,
    config: &SolveConfig,
    samples: &[(f64, f64)],
    n_paths: usize,
    seed: u64,
) -> Result<UvReport> {
    let forward = solve_discrete(g, config)?;
    let value = value_backward(g, config)?;
    let mut max_grid_diff: f64 = 0.0;
    for (u, v) in forward.slices.iter().zip(&value.slices) {
        max_grid_diff = max_grid_diff.max(u.max_abs_diff(&v.v)?);
    }
    let mut mc_points = Vec::with_capacity(samples.len());
    for (i, &(t, x)) in samples.iter().enumerate() {
        let est = mc_value(t, x, &forward.boundary, g, n_paths, seed.wrapping_add(i as u64))?;
        mc_points.push(McPoint {
            t,
            x,
            grid_v: value.eval(t, x)?,
            mc: est.mean,
            se: est.std_error,
        });
    }
    let within_3se = mc_points.iter().filter(|p| p.within(3.0)).count();
    let pass = max_grid_diff <= UV_GRID_TOL && 10 * within_3se >= 9 * mc_points.len();
    Ok(UvReport {
        max_grid_diff,
        mc_points,
        within_3se,
        pass,
    })
}
