use ifp_core::barrier::BoundaryInterp;
use ifp_core::simulate::{ks_against, sample_continuous_passage, sample_discrete_passage, SimMethod};
use ifp_core::stopping::MIN_MC_PATHS;
use serde_json::json;

use crate::args::SimulateArgs;
use crate::error::{CliError, CliResult};
use crate::input::{load_boundary, load_survival};
use crate::output::{print, report, OutDir};
use crate::problem::{on_times, solve};

/// Most passage times written to samples.csv.
pub const DUMP_CAP: usize = 1_000_000;

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    let g = args.g.as_deref().map(load_survival).transpose()?;
    let config = args.solver.config();
    let (boundary, target) = match (&args.boundary, &g) {
        (Some(path), _) => (load_boundary(path, args.interp.into())?, None),
        (None, Some(g)) => {
            let s = solve(g, args.n, args.horizon, &config)?;
            (s.solution.boundary, Some(s.g_n))
        }
        (None, None) => return Err(CliError::input("boundary", "give --boundary or --g")),
    };
    let default_method = match boundary.interpolation() {
        BoundaryInterp::Discrete => SimMethod::ExactMesh,
        BoundaryInterp::Linear => SimMethod::EulerBridge,
    };
    let method = args.method.map(SimMethod::from).unwrap_or(default_method);
    let core = |e| CliError::from_core(e, "paths");
    let horizon = *boundary.times().last().unwrap();
    let sim = match method {
        SimMethod::ExactMesh => sample_discrete_passage(&boundary, args.paths, args.seed).map_err(core)?,
        SimMethod::EulerBridge => {
            let dt = args.dt.unwrap_or(horizon / 1000.0);
            sample_continuous_passage(&boundary, dt, args.paths, args.seed, !args.no_bridge).map_err(core)?
        }
    };

    let mut warnings = Vec::new();
    if args.paths < MIN_MC_PATHS {
        warnings.push(format!("only {} paths: the confidence band is wide", args.paths));
    }
    let reference = match (method, target, &g) {
        (SimMethod::ExactMesh, Some(g_n), _) => Some(g_n),
        (SimMethod::ExactMesh, None, Some(g)) => Some(on_times(g, &boundary)?),
        (SimMethod::EulerBridge, _, Some(g)) => Some(g.clone()),
        _ => None,
    };
    let ks = reference.as_ref().map(|r| ks_against(r, &sim, args.allowance));

    let out = OutDir::create(&args.out.out)?;
    if let Some(cap) = args.dump {
        let k = cap.min(DUMP_CAP).min(sim.passage_times.len());
        if cap > DUMP_CAP {
            warnings.push(format!("sample dump capped at {DUMP_CAP}"));
        }
        let rows: Vec<[f64; 2]> = (0..k).map(|i| [i as f64, sim.passage_times[i]]).collect();
        out.write_csv("samples.csv", "path,tau", rows.iter().map(|r| r.as_slice()))?;
    }

    let config_echo = json!({
        "boundary": args.boundary,
        "interp": boundary.interpolation(),
        "g": g,
        "n": args.n,
        "horizon": args.horizon,
        "solver": config,
        "paths": args.paths,
        "seed": args.seed,
        "method": method,
        "dt": args.dt,
        "bridge": method == SimMethod::EulerBridge && !args.no_bridge,
        "allowance": args.allowance,
        "dump": args.dump,
        "out": args.out.out,
    });
    let body = json!({
        "n": sim.n_paths,
        "seed": sim.seed,
        "method": sim.method,
        "bridge": sim.bridge,
        "horizon": sim.horizon,
        "passed": sim.passage_times.iter().filter(|t| t.is_finite()).count(),
        "ks": ks.map(|k| k.statistic),
        "dkw": ks.map(|k| k.dkw),
        "pass": ks.map(|k| k.pass),
        "warnings": warnings,
    });
    let rep = report("simulate", config_echo, body);
    out.write_json("simulate.json", &rep)?;
    print(&rep);
    Ok(())
}
