use ifp_core::barrier::Boundary;
use ifp_core::forward::{refinement_ladder, sup_error};
use ifp_core::survival::SurvivalFn;
use serde_json::json;

use crate::args::SolveArgs;
use crate::error::{CliError, CliResult};
use crate::input::load_survival;
use crate::output::{ext, print, report, OutDir};
use crate::problem::{echo, natural_horizon, oracle, solve_problem, DEFAULT_LEVEL};

/// Oracle errors are measured on `[horizon / 20, horizon]`.
const WINDOW_START: f64 = 0.05;

pub fn run(args: &SolveArgs) -> CliResult<()> {
    let g = load_survival(&args.problem.g)?;
    let config = args.problem.solver.config();
    let solved = solve_problem(&args.problem, &g)?;
    let out = OutDir::create(&args.out.out)?;
    let b = solved.boundary();
    out.write("boundary.csv", |w| b.write_csv(w))?;

    if args.emit_u {
        let grid = solved.solution.grid;
        for (k, u) in solved.solution.slices.iter().enumerate() {
            let rows: Vec<[f64; 2]> = (0..grid.len()).map(|i| [grid.x(i), u.values()[i]]).collect();
            out.write_csv(&format!("u_{k}.csv"), "x,u", rows.iter().map(|r| r.as_slice()))?;
        }
    }

    let t_end = *b.times().last().unwrap();
    let oracle_error = oracle(&g).map(|f| sup_error(b, f, WINDOW_START * t_end, t_end));

    let mut ladder_rows = Vec::new();
    let mut ladder_boundaries: Vec<(usize, Boundary)> = Vec::new();
    if !args.ladder.is_empty() {
        if args.ladder.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::input("ladder", "levels must be strictly increasing"));
        }
        let horizon = args
            .problem
            .horizon
            .or_else(|| natural_horizon(&g))
            .ok_or_else(|| CliError::input("horizon", "required for a refinement ladder"))?;
        let ladder = refinement_ladder(&g, &args.ladder, horizon, &config).map_err(|e| CliError::from_core(e, "g"))?;
        let mut prev: Option<&Boundary> = None;
        for rung in &ladder {
            let bn = rung.boundary();
            let change = prev.map(|p| sup_change(p, bn, WINDOW_START * horizon, horizon));
            ladder_rows.push(json!({
                "diagnostics": rung.diagnostics,
                "oracle_sup_error": oracle(&g).map(|f| ext(sup_error(bn, f, WINDOW_START * horizon, horizon))),
                "sup_change": change.map(ext),
            }));
            prev = Some(bn);
        }
        ladder_boundaries = ladder.iter().map(|r| (r.diagnostics.level, r.boundary().clone())).collect();
    }
    let monotone = monotone_errors(&g, &ladder_boundaries, args.problem.horizon.or_else(|| natural_horizon(&g)));

    if args.emit_plot_data {
        write_plot_data(&out, b, &solved.g_n, &g, &ladder_boundaries)?;
    }

    let mut config_echo = echo(&g, &solved, &config);
    config_echo["ladder"] = json!(args.ladder);
    config_echo["out"] = json!(args.out.out);
    let finite = b.values().iter().filter(|v| v.is_finite()).count();
    let body = json!({
        "mode": if solved.level.is_some() { "discretized" } else { "exact" },
        "boundary": {
            "points": b.times().len(),
            "finite_points": finite,
            "standard": b.is_standard(),
            "absorbing_from": b.absorbing_from(),
        },
        "diagnostics": solved.diagnostics,
        "default_level": DEFAULT_LEVEL,
        "oracle_sup_error": oracle_error.map(ext),
        "ladder": ladder_rows,
        "ladder_monotone": monotone,
    });
    let rep = report("solve", config_echo, body);
    out.write_json("report.json", &rep)?;
    print(&rep);
    Ok(())
}

/// `sup |fine - coarse|` over the coarse mesh times in `[lo, hi]` where both
/// are finite.
fn sup_change(coarse: &Boundary, fine: &Boundary, lo: f64, hi: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, &t) in coarse.times().iter().enumerate() {
        if t < lo || t > hi {
            continue;
        }
        let Ok(j) = fine.times().binary_search_by(|s| s.total_cmp(&t)) else { continue };
        let (a, b) = (coarse.value_at(k), fine.value_at(j));
        if a.is_finite() && b.is_finite() {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

fn monotone_errors(g: &SurvivalFn, rungs: &[(usize, Boundary)], horizon: Option<f64>) -> Option<bool> {
    let f = oracle(g)?;
    let h = horizon?;
    if rungs.len() < 2 {
        return None;
    }
    let errs: Vec<f64> = rungs.iter().map(|(_, b)| sup_error(b, &f, WINDOW_START * h, h)).collect();
    Some(errs.windows(2).all(|w| w[1] < w[0]))
}

fn write_plot_data(out: &OutDir, b: &Boundary, g_n: &SurvivalFn, g: &SurvivalFn, ladder: &[(usize, Boundary)]) -> CliResult<()> {
    use std::io::Write;
    out.write("plot_data.csv", |w| {
        writeln!(w, "series,t,value")?;
        let fmt = ifp_core::ext::format_ext;
        for (k, &t) in b.times().iter().enumerate() {
            writeln!(w, "b,{},{}", fmt(t), fmt(b.value_at(k)))?;
        }
        for &t in b.times() {
            writeln!(w, "g_n,{},{}", fmt(t), fmt(g_n.eval(t)))?;
            writeln!(w, "g,{},{}", fmt(t), fmt(g.eval(t)))?;
        }
        for (level, bn) in ladder {
            for (k, &t) in bn.times().iter().enumerate() {
                writeln!(w, "b_n{level},{},{}", fmt(t), fmt(bn.value_at(k)))?;
            }
        }
        Ok(())
    })
}
