use ifp_core::stopping::{mc_value, value_backward, McPoint};
use serde_json::json;

use crate::args::ValueArgs;
use crate::error::{CliError, CliResult};
use crate::input::load_survival;
use crate::output::{print, report, OutDir};
use crate::problem::{echo, solve_problem};

pub fn run(args: &ValueArgs) -> CliResult<()> {
    let g = load_survival(&args.problem.g)?;
    let config = args.problem.solver.config();
    let solved = solve_problem(&args.problem, &g)?;
    let core = |e| CliError::from_core(e, "at");
    let vf = value_backward(&solved.g_n, &config).map_err(core)?;
    let mut max_grid_diff: f64 = 0.0;
    for (u, v) in solved.solution.slices.iter().zip(&vf.slices) {
        max_grid_diff = max_grid_diff.max(u.max_abs_diff(&v.v).map_err(core)?);
    }
    let mc = match (args.paths, args.seed) {
        (Some(n), Some(seed)) => Some((n, seed)),
        (Some(_), None) => return Err(CliError::input("seed", "required with --paths")),
        _ => None,
    };

    let mut points = Vec::with_capacity(args.at.len());
    for (i, &(t, x)) in args.at.iter().enumerate() {
        let grid_v = vf.eval(t, x).map_err(core)?;
        let row = match mc {
            Some((n, seed)) => {
                let est = mc_value(t, x, solved.boundary(), &solved.g_n, n, seed.wrapping_add(i as u64)).map_err(|e| CliError::from_core(e, "paths"))?;
                json!(McPoint { t, x, grid_v, mc: est.mean, se: est.std_error })
            }
            None => json!({"t": t, "x": x, "grid_v": grid_v, "mc": null, "se": null}),
        };
        points.push(row);
    }

    let mut config_echo = echo(&g, &solved, &config);
    config_echo["at"] = json!(args.at);
    config_echo["paths"] = json!(args.paths);
    config_echo["seed"] = json!(args.seed);
    config_echo["out"] = json!(args.out.out);
    let rep = report("value", config_echo, json!({"max_grid_diff": max_grid_diff, "mc_points": points}));
    let out = OutDir::create(&args.out.out)?;
    out.write_json("value.json", &rep)?;
    print(&rep);
    Ok(())
}
