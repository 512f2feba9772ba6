use ifp_core::barrier::{Boundary, BoundaryInterp};
use ifp_core::integral::{residuals_at, solve_integral_equation, QuadratureGrid};
use serde_json::json;

use crate::args::ResidualArgs;
use crate::error::{CliError, CliResult};
use crate::input::{load_boundary, load_survival};
use crate::output::{ext, print, report, OutDir};

/// The finite part of `b` at positive times as a linear boundary. Leading
/// `+∞` values of a discrete solve sit where no mass has passed yet.
pub fn continuous_part(b: &Boundary) -> CliResult<Boundary> {
    let dead = b.absorbing_from().unwrap_or(f64::INFINITY);
    let keep: Vec<usize> = (0..b.times().len())
        .filter(|&k| b.times()[k] > 0.0 && b.times()[k] < dead && b.value_at(k).is_finite())
        .collect();
    if keep.is_empty() {
        return Err(CliError::input("boundary", "no finite values at positive times"));
    }
    Boundary::new(
        keep.iter().map(|&k| b.times()[k]).collect(),
        keep.iter().map(|&k| b.value_at(k)).collect(),
        BoundaryInterp::Linear,
    )
    .map_err(|e| CliError::from_core(e, "boundary"))
}

pub fn run(args: &ResidualArgs) -> CliResult<()> {
    let g = load_survival(&args.g)?;
    let out = OutDir::create(&args.out.out)?;
    let core = |e| CliError::from_core(e, "g");
    let mut config = json!({
        "g": g,
        "boundary": args.boundary,
        "interp": BoundaryInterp::from(args.interp),
        "t": args.t,
        "horizon": args.horizon,
        "quad_n": args.quad_n,
        "ladder": args.ladder,
        "tol_residual": args.tol_residual,
        "out": args.out.out,
    });

    let (rows, extra) = match &args.boundary {
        Some(path) => {
            let b = load_boundary(path, args.interp.into())?;
            let b = if b.interpolation() == BoundaryInterp::Discrete { continuous_part(&b)? } else { b };
            let ts: Vec<f64> = if args.t.is_empty() {
                b.times().iter().copied().filter(|&t| t > 0.0).collect()
            } else {
                args.t.clone()
            };
            let t_end = ts.iter().copied().fold(0.0, f64::max);
            let quad = QuadratureGrid::graded(t_end, args.quad_n).map_err(|e| CliError::from_core(e, "t"))?;
            let res = residuals_at(&b, &g, &ts, &quad).map_err(|e| CliError::from_core(e, "boundary"))?;
            let rows: Vec<[f64; 3]> = ts.iter().zip(&res).map(|(&t, &r)| [t, b.eval(t), r]).collect();
            (rows, json!({"mode": "evaluate"}))
        }
        None => {
            let horizon = args.horizon.ok_or_else(|| CliError::input("horizon", "required without --boundary"))?;
            let solve = |n: usize| {
                let quad = QuadratureGrid::graded(horizon, n).map_err(|e| CliError::from_core(e, "quad_n"))?;
                solve_integral_equation(&g, &quad, None).map_err(core)
            };
            let sol = solve(args.quad_n)?;
            let mut ladder = Vec::new();
            let mut prev: Option<Boundary> = None;
            for &n in &args.ladder {
                let rung = solve(n)?;
                let change = prev.as_ref().map(|p| {
                    rung.boundary
                        .times()
                        .iter()
                        .filter(|&&t| t >= 0.05 * horizon)
                        .map(|&t| (rung.boundary.eval(t) - p.eval(t)).abs())
                        .fold(0.0, f64::max)
                });
                ladder.push(json!({"quad_n": n, "solved_nodes": rung.boundary.times().len(), "sup_change": change.map(ext)}));
                prev = Some(rung.boundary);
            }
            let b = &sol.boundary;
            let rows: Vec<[f64; 3]> = b
                .times()
                .iter()
                .zip(&sol.residuals)
                .enumerate()
                .map(|(k, (&t, &r))| [t, b.value_at(k), r])
                .collect();
            out.write("boundary.csv", |w| b.write_csv(w))?;
            (
                rows,
                json!({"mode": "solve", "skipped": sol.skipped, "warnings": sol.warnings, "ladder": ladder}),
            )
        }
    };

    out.write_csv("residual.csv", "s,b,residual", rows.iter().map(|r| r.as_slice()))?;
    let worst = rows.iter().fold(0.0_f64, |m, r| m.max(r[2].abs()));
    let pass = args.tol_residual.map(|tol| worst <= tol);
    let mut body = extra;
    body["points"] = json!(rows.len());
    body["max_abs_residual"] = ext(worst);
    body["pass"] = json!(pass);
    config["resolved_points"] = json!(rows.len());
    let rep = report("residual", config, body);
    out.write_json("residual.json", &rep)?;
    print(&rep);
    match pass {
        Some(false) => Err(CliError::verification(vec!["residual".into()])),
        _ => Ok(()),
    }
}
