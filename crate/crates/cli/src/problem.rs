use ifp_core::barrier::Boundary;
use ifp_core::forward::{solve_discrete, solve_general, Diagnostics, DiscreteSolution, SolveConfig};
use ifp_core::survival::{AnalyticFamily, SurvivalFn};
use serde_json::{json, Value};

use crate::args::ProblemArgs;
use crate::error::{CliError, CliResult};

pub const DEFAULT_LEVEL: usize = 100;

/// A solved discrete problem and the `gⁿ` it was solved for.
pub struct Solved {
    pub g_n: SurvivalFn,
    pub solution: DiscreteSolution,
    pub diagnostics: Option<Diagnostics>,
    pub level: Option<usize>,
    pub horizon: Option<f64>,
}

impl Solved {
    pub fn boundary(&self) -> &Boundary {
        &self.solution.boundary
    }
}

/// Solves a piecewise-constant `g` on its breakpoints when neither level nor
/// horizon is given; otherwise discretizes first.
pub fn solve(g: &SurvivalFn, n: Option<usize>, horizon: Option<f64>, config: &SolveConfig) -> CliResult<Solved> {
    let core = |e| CliError::from_core(e, "g");
    if n.is_none() && horizon.is_none() {
        if let SurvivalFn::PiecewiseConstant { .. } = g {
            return Ok(Solved {
                g_n: g.clone(),
                solution: solve_discrete(g, config).map_err(core)?,
                diagnostics: None,
                level: None,
                horizon: None,
            });
        }
    }
    let level = n.unwrap_or(DEFAULT_LEVEL);
    let horizon = horizon.or_else(|| natural_horizon(g)).ok_or_else(|| CliError::input("horizon", "required for an analytic g"))?;
    let sol = solve_general(g, level, horizon, config).map_err(core)?;
    Ok(Solved {
        g_n: sol.discretization.g_n,
        solution: sol.solution,
        diagnostics: Some(sol.diagnostics),
        level: Some(level),
        horizon: Some(horizon),
    })
}

pub fn solve_problem(p: &ProblemArgs, g: &SurvivalFn) -> CliResult<Solved> {
    solve(g, p.n, p.horizon, &p.solver.config())
}

/// The last breakpoint, or the observation horizon of an empirical g.
pub fn natural_horizon(g: &SurvivalFn) -> Option<f64> {
    match g {
        SurvivalFn::PiecewiseConstant { breakpoints, .. } => breakpoints.last().copied().filter(|&t| t > 0.0),
        SurvivalFn::Empirical { horizon, .. } => Some(*horizon),
        SurvivalFn::Analytic(_) => None,
    }
}

/// The known boundary of a closed-form family.
pub fn oracle(g: &SurvivalFn) -> Option<Box<dyn Fn(f64) -> f64>> {
    match *g {
        SurvivalFn::Analytic(AnalyticFamily::ConstantBarrier { a }) => Some(Box::new(move |_| a)),
        SurvivalFn::Analytic(AnalyticFamily::LinearBarrier { a, c }) => Some(Box::new(move |t| a + c * t)),
        _ => None,
    }
}

pub fn echo(g: &SurvivalFn, s: &Solved, config: &SolveConfig) -> Value {
    json!({
        "g": g,
        "n": s.level,
        "horizon": s.horizon,
        "solver": config,
    })
}

/// `gⁿ` read off at the boundary's own times.
pub fn on_times(g: &SurvivalFn, b: &Boundary) -> CliResult<SurvivalFn> {
    let times = b.times().to_vec();
    let values = times.iter().map(|&t| g.eval(t)).collect();
    SurvivalFn::piecewise_constant(times, values).map_err(|e| CliError::from_core(e, "boundary"))
}
