use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::config::{as_config, RunConfig};
use super::{Command, RunArgs};
use crate::bounds::{
    budget_exp, budget_l2, coordinate_exit_time, omega_report, sup_deviation, ErrorBudget, OmegaVariant,
};
use crate::coupling::{budget_coupling, estimate_kappa, make_epidemic_individuals, simulate_coupled};
use crate::ctmc::{project, simulate_replica, SimOptions, Trajectory, DEFAULT_EVENT_BUDGET};
use crate::error::{Error, Result};
use crate::fluid::{exit_window, integrate, ExitWindowMode, FluidPath};
use crate::hypergraph::{
    empirical_core_frequencies, generate_with_rng, limiting_frequencies, peel_chain_with_rng, CoreFrequencies,
    DEFAULT_RETRY_CAP,
};
use crate::martingale::{
    compensate, doob_check, exp_check, mean_zero_check, supermartingale_check, CompensatedPath, MIN_REPLICAS,
};
use crate::models::{BuiltModel, EpidemicParams};
use crate::rng::replica_rng;
use crate::stats::within_binomial_slack;

/// Result of a completed run: whether its checks held, and the summary.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub summary: Value,
}

type Rows = Vec<Vec<String>>;

pub fn run(cmd: &Command) -> Result<Outcome> {
    let args = cmd.args();
    let mut cfg = RunConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| Error::Config(format!("jobs: {e}")))?;
    fs::create_dir_all(&args.out)?;
    let (passed, result) = pool.install(|| match cmd {
        Command::Simulate(a) => simulate(&cfg, a),
        Command::Fluid(a) => fluid(&cfg, a),
        Command::Bound(_) => bound(&cfg),
        Command::Compare(a) => compare(&cfg, a),
        Command::Couple(a) => couple(&cfg, a),
        Command::Core(a) => core(&cfg, a),
        Command::Diagnose(a) => diagnose(&cfg, a),
    })?;
    let summary = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": cmd.name(),
        "model": cfg.model,
        "seed": cfg.seed,
        "replicas": cfg.replicas,
        "passed": passed,
        "result": result,
    });
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(args.out.join("summary.json"), text)?;
    Ok(Outcome { passed, summary })
}

fn write_csv(dir: &Path, name: &str, header: &[String], rows: &Rows) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(name))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn header(fixed: &[&str], coords: usize) -> Vec<String> {
    fixed
        .iter()
        .map(|s| s.to_string())
        .chain((0..coords).map(|i| format!("x{i}")))
        .collect()
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Runs `f` on every replica index in parallel, keeping replica order.
fn per_replica<R, F>(cfg: &RunConfig, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(u64) -> Result<R> + Sync + Send,
{
    (0..cfg.replicas).into_par_iter().map(f).collect()
}

fn sim_options(cfg: &RunConfig) -> SimOptions {
    SimOptions {
        max_events: cfg.max_events.unwrap_or(DEFAULT_EVENT_BUDGET),
    }
}

fn replica(m: &BuiltModel<f64>, cfg: &RunConfig, t0: f64, r: u64) -> Result<Trajectory<f64>> {
    Ok(simulate_replica(&m.spec, &m.init, t0, cfg.seed, r, sim_options(cfg))?)
}

fn fluid_path(m: &BuiltModel<f64>, cfg: &RunConfig, t0: f64) -> Result<FluidPath<f64>> {
    integrate(&m.fluid, t0, cfg.step)
}

fn budget_json(b: &ErrorBudget<f64>) -> Value {
    json!({
        "bound": b.bound,
        "delta": b.delta,
        "theta": b.theta,
        "radius": b.radius,
        "vacuous": b.is_vacuous(),
        "norm": format!("{:?}", b.norm),
    })
}

fn simulate(cfg: &RunConfig, args: &RunArgs) -> Result<(bool, Value)> {
    let m = cfg.build_model()?;
    let t0 = cfg.t0()?;
    let outs = per_replica(cfg, |r| {
        let traj = replica(&m, cfg, t0, r)?;
        let path = project(&traj, &m.spec)?;
        let rows: Rows = (0..path.len())
            .map(|k| {
                [r.to_string(), path.times[k].to_string()]
                    .into_iter()
                    .chain(path.value(k).iter().map(f64::to_string))
                    .collect()
            })
            .collect();
        Ok((rows, traj.jump_count(), traj.terminated_absorbing))
    })?;
    let jumps: Vec<usize> = outs.iter().map(|o| o.1).collect();
    let absorbed = outs.iter().filter(|o| o.2).count();
    let rows: Rows = outs.into_iter().flat_map(|o| o.0).collect();
    write_csv(&args.out, "paths.csv", &header(&["replica", "time"], m.spec.coord_dim()), &rows)?;
    Ok((
        true,
        json!({
            "t0": t0,
            "jumps": jumps,
            "absorbed": absorbed,
        }),
    ))
}

fn fluid(cfg: &RunConfig, args: &RunArgs) -> Result<(bool, Value)> {
    let m = cfg.build_model()?;
    let t0 = cfg.t0()?;
    let path = fluid_path(&m, cfg, t0)?;
    let rows: Rows = (0..path.len())
        .map(|k| {
            std::iter::once(path.times[k].to_string())
                .chain(path.value(k).iter().map(f64::to_string))
                .collect()
        })
        .collect();
    write_csv(&args.out, "fluid.csv", &header(&["time"], path.dim), &rows)?;
    let window = match (path.exit_time, cfg.eps) {
        (Some(_), Some(eps)) => match exit_window(&m.fluid, &path, eps, &ExitWindowMode::Ball) {
            Ok(w) => json!({
                "zeta": w.zeta,
                "lower": w.lower,
                "upper": w.upper,
                "rho": w.rho,
                "sampled": w.sampled,
            }),
            Err(e) => json!({ "error": e.to_string() }),
        },
        _ => Value::Null,
    };
    Ok((
        true,
        json!({
            "t0": t0,
            "step": cfg.step,
            "lipschitz": m.fluid.lipschitz,
            "lipschitz_estimated": m.fluid.approximate_k,
            "exit_time": path.exit_time,
            "exit_window": window,
            "final": path.final_value(),
        }),
    ))
}

/// `C = 18(λ+1) t0 e^{2Kt0+1}` for the epidemic with `A = (λ+1)e/N`.
fn epidemic_constant(cfg: &RunConfig, t0: f64, k: f64) -> Result<Option<f64>> {
    if cfg.model.as_deref() != Some("epidemic") {
        return Ok(None);
    }
    let p: EpidemicParams = toml::Value::Table(cfg.params.clone())
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("params: {}", e.message())))?;
    Ok(Some(18.0 * (p.lambda + 1.0) * t0 * (2.0 * k * t0 + 1.0).exp()))
}

fn bound(cfg: &RunConfig) -> Result<(bool, Value)> {
    let m = cfg.build_model()?;
    let (t0, eps) = (cfg.t0()?, cfg.eps()?);
    let k = m.fluid.lipschitz;
    let (a, auto) = cfg.resolve_a(k)?;
    let dim = m.fluid.dim();
    let l2 = budget_l2(eps, t0, k, a, dim)?;
    let ex = budget_exp(eps, t0, k, a, dim)?;
    Ok((
        true,
        json!({
            "eps": eps,
            "t0": t0,
            "lipschitz": k,
            "lipschitz_estimated": m.fluid.approximate_k,
            "a": a,
            "a_auto": auto,
            "dim": dim,
            "l2": budget_json(&l2),
            "exp": budget_json(&ex),
            "epidemic_c": epidemic_constant(cfg, t0, k)?,
        }),
    ))
}

fn compare(cfg: &RunConfig, args: &RunArgs) -> Result<(bool, Value)> {
    let m = cfg.build_model()?;
    let (t0, eps) = (cfg.t0()?, cfg.eps()?);
    let path = fluid_path(&m, cfg, t0)?;
    let (a, _) = cfg.resolve_a(m.fluid.lipschitz)?;
    let budget = budget_exp(eps, t0, m.fluid.lipschitz, a, m.fluid.dim())?;
    let outs = per_replica(cfg, |r| {
        let traj = replica(&m, cfg, t0, r)?;
        let cp = project(&traj, &m.spec)?;
        let dev = sup_deviation(&cp, &path, t0, budget.norm)?;
        let om = omega_report(&traj, &m.spec, &m.fluid, &budget, OmegaVariant::Exp)?;
        Ok((dev, om.omega0, om.omega1, om.omega2))
    })?;
    let rows: Rows = outs
        .iter()
        .enumerate()
        .map(|(r, o)| {
            vec![
                r.to_string(),
                o.0.to_string(),
                (o.0 > eps).to_string(),
                o.1.to_string(),
                o.2.to_string(),
                o.3.to_string(),
            ]
        })
        .collect();
    let head: Vec<String> = ["replica", "sup_deviation", "exceeds", "omega0", "omega1", "omega2"]
        .map(String::from)
        .to_vec();
    write_csv(&args.out, "compare.csv", &head, &rows)?;
    let exceed = outs.iter().filter(|o| o.0 > eps).count() as u64;
    let good = outs.iter().filter(|o| o.1 && o.2 && o.3).count() as u64;
    let total = cfg.replicas;
    let holds = within_binomial_slack(exceed, total, budget.bound, 3.0);
    Ok((
        holds,
        json!({
            "eps": eps,
            "t0": t0,
            "a": a,
            "budget": budget_json(&budget),
            "exceed": exceed,
            "fraction": exceed as f64 / total as f64,
            "bound_holds": holds,
            "good_event": good,
        }),
    ))
}

fn couple(cfg: &RunConfig, args: &RunArgs) -> Result<(bool, Value)> {
    let c = cfg.couple.as_ref().ok_or_else(|| Error::Config("couple: missing table".into()))?;
    if c.label_map != "epidemic_individuals" || cfg.model.as_deref() != Some("epidemic") {
        return Err(Error::Config(
            "couple.label_map: only `epidemic_individuals` with model = \"epidemic\" is available".into(),
        ));
    }
    let (t0, eps) = (cfg.t0()?, cfg.eps()?);
    let p: EpidemicParams = toml::Value::Table(cfg.params.clone())
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("params: {}", e.message())))?;
    let (m, mut modn) = make_epidemic_individuals(&p, &c.tracked, eps).map_err(as_config)?;
    let path = fluid_path(&m, cfg, t0)?;
    if let Some(g) = c.g {
        modn.g_const = g;
    }
    if let Some(kappa) = c.kappa {
        modn.kappa = kappa;
    } else if c.estimate_kappa {
        let k = c.tracked.len() as u32;
        let labels: Vec<Vec<i64>> = (0..3usize.pow(k))
            .map(|mut code| {
                (0..k)
                    .map(|_| {
                        let v = (code % 3) as i64 + 1;
                        code /= 3;
                        v
                    })
                    .collect()
            })
            .collect();
        let est = estimate_kappa(&modn, &path, eps, t0, &labels)?;
        modn.kappa = est.kappa;
        modn.kappa_estimated = est.estimated;
    }
    let (a, _) = cfg.resolve_a(m.fluid.lipschitz)?;
    let budget = budget_coupling(eps, t0, m.fluid.lipschitz, a, m.fluid.dim(), modn.g_const, modn.kappa)?;
    let outs = per_replica(cfg, |r| {
        let ct = simulate_coupled(&m.spec, &modn, &m.init, &path, t0, cfg.seed, r, sim_options(cfg))?;
        Ok(ct.decoupling_time.filter(|&t| t <= t0))
    })?;
    let rows: Rows = outs
        .iter()
        .enumerate()
        .map(|(r, d)| vec![r.to_string(), d.is_some().to_string(), opt_num(*d)])
        .collect();
    let head: Vec<String> = ["replica", "decoupled", "decoupling_time"].map(String::from).to_vec();
    write_csv(&args.out, "couple.csv", &head, &rows)?;
    let decoupled = outs.iter().filter(|d| d.is_some()).count() as u64;
    let holds = within_binomial_slack(decoupled, cfg.replicas, budget.bound, 3.0);
    Ok((
        holds,
        json!({
            "eps": eps,
            "t0": t0,
            "a": a,
            "g": modn.g_const,
            "kappa": modn.kappa,
            "kappa_estimated": modn.kappa_estimated,
            "budget": budget_json(&budget),
            "decoupled": decoupled,
            "fraction": decoupled as f64 / cfg.replicas as f64,
            "bound_holds": holds,
        }),
    ))
}

fn core(cfg: &RunConfig, args: &RunArgs) -> Result<(bool, Value)> {
    let (freq, c) = cfg.core_frequencies()?;
    freq.counts(c.n).map_err(as_config)?;
    let laws = freq.size_biased();
    let gs = laws.g_star(c.k);
    let predicted = limiting_frequencies(&freq, c.k, gs.value)?;
    let outs = per_replica(cfg, |r| {
        let mut rng = replica_rng(cfg.seed, r);
        let g = generate_with_rng(&freq, c.n, &mut rng, DEFAULT_RETRY_CAP)?;
        let run = peel_chain_with_rng(&g.instance, c.k, &mut rng)?;
        let emp = empirical_core_frequencies(&run.core, &g.instance)?;
        let dev = emp.max_deviation(&predicted, c.k);
        Ok((g.retries, run.steps(), run.termination_time(), run.core.edges().iter().filter(|e| !e.is_empty()).count(), dev, emp))
    })?;
    let l = freq.max_index();
    let mut mean = CoreFrequencies::zeros(l);
    let n = cfg.replicas as f64;
    for o in &outs {
        for d2 in 0..=l {
            for d in 0..=d2 {
                mean.set_pbar(d, d2, mean.pbar(d, d2) + o.5.pbar(d, d2) / n);
            }
        }
        for w in 0..=l {
            mean.set_qbar(w, mean.qbar(w) + o.5.qbar(w) / n);
        }
    }
    let mut table: Rows = Vec::new();
    for d2 in 0..=l {
        for d in 0..=d2 {
            if predicted.pbar(d, d2) != 0.0 || mean.pbar(d, d2) != 0.0 {
                table.push(vec![
                    "vertex".into(),
                    d.to_string(),
                    d2.to_string(),
                    predicted.pbar(d, d2).to_string(),
                    mean.pbar(d, d2).to_string(),
                ]);
            }
        }
    }
    for w in 0..=l {
        table.push(vec![
            "edge".into(),
            w.to_string(),
            String::new(),
            predicted.qbar(w).to_string(),
            mean.qbar(w).to_string(),
        ]);
    }
    let head: Vec<String> = ["kind", "index", "original", "predicted", "empirical_mean"].map(String::from).to_vec();
    write_csv(&args.out, "core.csv", &head, &table)?;
    let rows: Rows = outs
        .iter()
        .enumerate()
        .map(|(r, o)| vec![r.to_string(), o.0.to_string(), o.1.to_string(), o.2.to_string(), o.3.to_string(), o.4.to_string()])
        .collect();
    let head: Vec<String> = ["replica", "retries", "steps", "termination_time", "core_edges", "max_deviation"]
        .map(String::from)
        .to_vec();
    write_csv(&args.out, "replicas.csv", &head, &rows)?;
    let worst = outs.iter().map(|o| o.4).fold(0.0, f64::max);
    let passed = c.tolerance.map_or(true, |tol| worst <= tol);
    Ok((
        passed,
        json!({
            "k": c.k,
            "n": c.n,
            "g_star": gs.value,
            "crossing": gs.crossing,
            "predicted_termination": if gs.value > 0.0 { Some(-gs.value.ln()) } else { None },
            "predicted_core_degree_mass": predicted.core_degree_mass(c.k),
            "predicted_core_weight_mass": predicted.core_weight_mass(),
            "max_deviation": worst,
            "tolerance": c.tolerance,
        }),
    ))
}

fn diagnose(cfg: &RunConfig, args: &RunArgs) -> Result<(bool, Value)> {
    let d = cfg.diagnose.as_ref().ok_or_else(|| Error::Config("diagnose: missing table".into()))?;
    if (cfg.replicas as usize) < MIN_REPLICAS {
        return Err(Error::Config(format!("replicas: diagnose needs at least {MIN_REPLICAS}")));
    }
    if d.grid == 0 {
        return Err(Error::Config("diagnose.grid: must be at least 1".into()));
    }
    let m = cfg.build_model()?;
    let t0 = cfg.t0()?;
    let coords = m.spec.coord_dim();
    let outs: Vec<Vec<CompensatedPath<f64>>> = per_replica(cfg, |r| {
        let traj = replica(&m, cfg, t0, r)?;
        let stop = coordinate_exit_time(&traj, &m.spec, &m.fluid).unwrap_or(f64::INFINITY);
        (0..coords)
            .map(|i| Ok(compensate(&traj, &m.spec, |s: &[i64]| m.spec.coord(s)[i], d.theta)?.with_stop(stop)))
            .collect()
    })?;
    let grid: Vec<f64> = (0..=d.grid).map(|j| t0 * j as f64 / d.grid as f64).collect();
    let mut rows: Rows = Vec::new();
    let mut reports = Vec::new();
    let mut passed = true;
    for i in 0..coords {
        let paths: Vec<CompensatedPath<f64>> = outs.iter().map(|o| o[i].clone()).collect();
        for (r, p) in paths.iter().enumerate() {
            rows.push(vec![
                r.to_string(),
                i.to_string(),
                p.m_at(t0)?.to_string(),
                p.sup_abs_m(t0)?.to_string(),
                p.integral_alpha(t0)?.to_string(),
                p.integral_phi(t0)?.to_string(),
                opt_num(p.z_at(t0)?),
            ]);
        }
        let mean = mean_zero_check(&paths, t0)?;
        let doob = doob_check(&paths, t0)?;
        let exp = exp_check(&paths, t0, d.b, d.a)?;
        let sup = supermartingale_check(&paths, &grid)?;
        passed &= mean.holds && doob.holds && exp.z_holds && exp.exceed_holds && sup.holds;
        reports.push(json!({
            "observable": format!("x{i}"),
            "mean_zero": mean,
            "doob": doob,
            "exponential": exp,
            "supermartingale": sup,
        }));
    }
    let head: Vec<String> = ["replica", "observable", "m", "sup_abs_m", "int_alpha", "int_phi", "z"]
        .map(String::from)
        .to_vec();
    write_csv(&args.out, "diagnose.csv", &head, &rows)?;
    Ok((
        passed,
        json!({
            "t0": t0,
            "theta": d.theta,
            "b": d.b,
            "a": d.a,
            "observables": reports,
        }),
    ))
}
