use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ifp_core::barrier::BoundaryInterp;
use ifp_core::forward::SolveConfig;
use ifp_core::simulate::SimMethod;

#[derive(Debug, Parser)]
#[command(name = "ifp", version, about = "Inverse first-passage solver for Brownian motion")]
pub struct Cli {
    /// Worker threads; all cores by default. Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the boundary of a survival function.
    Solve(SolveArgs),
    /// Cross-check a solved boundary: recovery, u = v, residual and Monte Carlo.
    Verify(VerifyArgs),
    /// Sample first-passage times over a boundary.
    Simulate(SimulateArgs),
    /// Evaluate the optimal stopping value v(t, x).
    Value(ValueArgs),
    /// Integral-equation residuals, or solve the integral equation.
    Residual(ResidualArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = "IFP_OUT_DIR", default_value = "ifp-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Spatial half-width in units of the root of the last mesh time.
    #[arg(long, default_value_t = 8.0)]
    pub half_width_sigmas: f64,
    /// Spatial grid nodes.
    #[arg(long, default_value_t = 4097)]
    pub nodes: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol_root: f64,
    /// Tolerance of barrier recovery from u.
    #[arg(long, default_value_t = 1e-9)]
    pub tol_rec: f64,
    /// Mesh gaps of a continuous g are capped at gap_scale / n².
    #[arg(long, default_value_t = 16.0)]
    pub gap_scale: f64,
    /// Use the bare level-crossing mesh.
    #[arg(long)]
    pub no_time_lattice: bool,
}

impl SolverArgs {
    pub fn config(&self) -> SolveConfig {
        SolveConfig {
            half_width_sigmas: self.half_width_sigmas,
            nodes: self.nodes,
            tol_root: self.tol_root,
            tol_rec: self.tol_rec,
            gap_scale: (!self.no_time_lattice).then_some(self.gap_scale),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// Survival function as inline JSON or a path to a JSON file.
    #[arg(long)]
    pub g: String,
    /// Discretization level. Without it a piecewise-constant g is solved
    /// exactly on its own breakpoints.
    #[arg(long)]
    pub n: Option<usize>,
    /// Time horizon of the discretization.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InterpArg {
    Discrete,
    Linear,
}

impl From<InterpArg> for BoundaryInterp {
    fn from(a: InterpArg) -> Self {
        match a {
            InterpArg::Discrete => BoundaryInterp::Discrete,
            InterpArg::Linear => BoundaryInterp::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    ExactMesh,
    EulerBridge,
}

impl From<MethodArg> for SimMethod {
    fn from(a: MethodArg) -> Self {
        match a {
            MethodArg::ExactMesh => SimMethod::ExactMesh,
            MethodArg::EulerBridge => SimMethod::EulerBridge,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Refinement levels, e.g. 50,100,200.
    #[arg(long, value_delimiter = ',')]
    pub ladder: Vec<usize>,
    /// Write every slice of u as u_<k>.csv.
    #[arg(long)]
    pub emit_u: bool,
    /// Write plot_data.csv in long format (series,t,value).
    #[arg(long)]
    pub emit_plot_data: bool,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Boundary CSV to check instead of the freshly solved one.
    #[arg(long)]
    pub boundary: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = InterpArg::Discrete)]
    pub interp: InterpArg,
    #[arg(long)]
    pub seed: u64,
    /// Paths for the distribution check.
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    /// Points of the Monte Carlo u = v check.
    #[arg(long, default_value_t = 20)]
    pub uv_points: usize,
    /// Paths per point of the u = v check.
    #[arg(long, default_value_t = 10_000)]
    pub uv_paths: usize,
    /// Quadrature nodes of the residual check.
    #[arg(long, default_value_t = 2000)]
    pub quad_n: usize,
    #[arg(long, default_value_t = 0.01)]
    pub tol_residual: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Boundary CSV; solved from --g when absent.
    #[arg(long)]
    pub boundary: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = InterpArg::Discrete)]
    pub interp: InterpArg,
    /// Survival function to solve for, or to test the samples against.
    #[arg(long)]
    pub g: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long)]
    pub paths: usize,
    #[arg(long)]
    pub seed: u64,
    /// Defaults to exact-mesh for discrete boundaries, euler-bridge otherwise.
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Euler time step; horizon / 1000 by default.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub no_bridge: bool,
    /// Extra KS allowance for the Euler scheme's bias.
    #[arg(long, default_value_t = 0.0)]
    pub allowance: f64,
    /// Dump up to this many passage times to samples.csv.
    #[arg(long)]
    pub dump: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ValueArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Evaluation point `t,x`; repeatable.
    #[arg(long = "at", required = true, value_parser = parse_point)]
    pub at: Vec<(f64, f64)>,
    /// Monte Carlo paths per point; grid values only when absent.
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct ResidualArgs {
    #[arg(long)]
    pub g: String,
    /// Boundary CSV to evaluate; the integral equation is solved when absent.
    #[arg(long)]
    pub boundary: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = InterpArg::Linear)]
    pub interp: InterpArg,
    /// Evaluation times; the boundary's own times by default.
    #[arg(long, value_delimiter = ',')]
    pub t: Vec<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Uniform quadrature nodes.
    #[arg(long, default_value_t = 2000)]
    pub quad_n: usize,
    /// Quadrature sizes to solve at in turn.
    #[arg(long, value_delimiter = ',')]
    pub ladder: Vec<usize>,
    /// Fail (exit 4) if any residual exceeds this.
    #[arg(long)]
    pub tol_residual: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

fn parse_point(s: &str) -> Result<(f64, f64), String> {
    let (t, x) = s.split_once(',').ok_or_else(|| format!("expected `t,x`, got `{s}`"))?;
    let t: f64 = t.trim().parse().map_err(|_| format!("bad t in `{s}`"))?;
    let x: f64 = x.trim().parse().map_err(|_| format!("bad x in `{s}`"))?;
    Ok((t, x))
}
