use lattice_ldp::ldp::{
    h1_probe, laplace_functional, laplace_variational, ldp_curve, EventSpec,
};
use lattice_ldp::rate::{endpoint_rate, rate_estimate, RateOptions};
use lattice_ldp::sde::{ensemble_fold, moment_bound, simulate_sample, MomentEstimate};
use lattice_ldp::skeleton::{apriori_bound, level_set_probe, solve, weak_convergence_probe};
use lattice_ldp::{Model, SdeConfig, State};
use serde::Serialize;

use crate::config::RunConfig;
use crate::manifest::Outputs;
use crate::CliError;

/// What a subcommand produced.
pub struct Finished {
    pub outputs: Outputs,
    /// Printed to stdout.
    pub summary: String,
    /// `false` when an optimiser stopped short of its tolerance.
    pub converged: bool,
}

impl Finished {
    fn new(outputs: Outputs, summary: String) -> Self {
        Self {
            outputs,
            summary,
            converged: true,
        }
    }
}

fn section<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    value
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("configuration has no `{name}` section")))
}

fn require_seed(seed: Option<u64>) -> Result<u64, CliError> {
    seed.ok_or_else(|| CliError::Usage("stochastic runs need a master seed (config `seed` or --seed)".into()))
}

pub fn validate(model: &Model) -> anyhow::Result<Finished> {
    let mut outputs = Outputs::default();
    outputs.add_json("validation.json", model.report())?;
    let summary = serde_json::to_string_pretty(model.report())?;
    Ok(Finished::new(outputs, summary))
}

#[derive(Serialize)]
struct SampleRow {
    sample: usize,
    sup_norm_sq: f64,
    terminal_norm: f64,
}

#[derive(Serialize)]
struct SimulateSummary {
    eps: f64,
    samples: usize,
    sup_norm_sq: MomentEstimate,
    /// Gronwall bound on `E sup_t |u(t)|^2`.
    moment_bound: f64,
}

pub fn simulate(config: &RunConfig, model: &Model, seed: Option<u64>) -> anyhow::Result<Finished> {
    let s = section(&config.simulate, "simulate")?;
    let grid = config.grid()?;
    let u0 = config.initial_state(model)?;
    let control = s.control.build(grid, model.modes())?;
    let sde = SdeConfig {
        eps: s.eps,
        grid,
        seed: require_seed(seed)?,
        ensemble_size: s.samples,
    };
    let last = grid.steps;
    let folded = ensemble_fold(model, &sde, &u0, Some(&control), || (0.0f64, 0.0f64), |acc, m, u| {
        let sq: f64 = u.iter().map(|x| x * x).sum();
        acc.0 = acc.0.max(sq);
        if m == last {
            acc.1 = sq.sqrt();
        }
    })?;
    let rows: Vec<SampleRow> = folded
        .iter()
        .enumerate()
        .map(|(sample, o)| SampleRow {
            sample,
            sup_norm_sq: o.value.0,
            terminal_norm: o.value.1,
        })
        .collect();
    let sups: Vec<f64> = rows.iter().map(|r| r.sup_norm_sq).collect();
    let summary = SimulateSummary {
        eps: s.eps,
        samples: s.samples,
        sup_norm_sq: MomentEstimate::from_samples(&sups)?,
        moment_bound: moment_bound(model, u0.norm_sq(), control.energy()),
    };
    let mut outputs = Outputs::default();
    outputs.add_csv("samples.csv", rows)?;
    outputs.add_json("moments.json", &summary)?;
    if s.save_paths {
        let paths = (0..s.samples as u64)
            .map(|k| simulate_sample(model, &sde, k, &u0, Some(&control)))
            .collect::<lattice_ldp::Result<Vec<_>>>()?;
        outputs.add_json("paths.json", &paths)?;
    }
    let text = format!(
        "E sup |u|^2 = {:.6} (95% CI {:.6} .. {:.6}), bound {:.6e}",
        summary.sup_norm_sq.mean, summary.sup_norm_sq.ci_low, summary.sup_norm_sq.ci_high, summary.moment_bound
    );
    Ok(Finished::new(outputs, text))
}

fn path_table(path: &lattice_ldp::Trajectory) -> (Vec<String>, Vec<Vec<f64>>) {
    let sites = path.initial().values().len();
    let header = std::iter::once("t".to_string())
        .chain((0..sites).map(|i| format!("u{i}")))
        .collect();
    let rows = path
        .states
        .iter()
        .enumerate()
        .map(|(m, s)| std::iter::once(path.grid.time(m)).chain(s.values().iter().copied()).collect())
        .collect();
    (header, rows)
}

#[derive(Serialize)]
struct SkeletonSummary {
    cost: f64,
    sup_norm_sq: f64,
    apriori_bound: f64,
    terminal: State,
}

pub fn skeleton(config: &RunConfig, model: &Model) -> anyhow::Result<Finished> {
    let s = config.skeleton.clone().unwrap_or_default();
    let grid = config.grid()?;
    let u0 = config.initial_state(model)?;
    let v = s.control.build(grid, model.modes())?;
    let path = solve(model, &u0, &v)?;
    let summary = SkeletonSummary {
        cost: v.cost(),
        sup_norm_sq: path.sup_norm_sq(),
        apriori_bound: apriori_bound(model, &u0, &v),
        terminal: path.terminal().clone(),
    };
    let (header, rows) = path_table(&path);
    let mut outputs = Outputs::default();
    outputs.add_table("skeleton.csv", &header, &rows)?;
    outputs.add_json("skeleton.json", &summary)?;
    let text = format!(
        "sup |u|^2 = {:.6}, a priori bound {:.6e}, control cost {:.6}",
        summary.sup_norm_sq, summary.apriori_bound, summary.cost
    );
    Ok(Finished::new(outputs, text))
}

pub fn rate(config: &RunConfig, model: &Model) -> anyhow::Result<Finished> {
    let s = section(&config.rate, "rate")?;
    let grid = config.grid()?;
    let u0 = config.initial_state(model)?;
    let options = s.options.clone().unwrap_or_default();
    let mut outputs = Outputs::default();
    match (&s.target, &s.endpoint) {
        (Some(target), None) => {
            let target = target.build(model, &u0, grid)?;
            let est = rate_estimate(model, &u0, &target, &options)?;
            outputs.add_json("rate.json", &est)?;
            outputs.add_csv("convergence.csv", est.history.iter())?;
            let text = format!(
                "I = {:.9} (residual {:.3e}, {} iterations, converged {})",
                est.cost, est.residual, est.iterations, est.converged
            );
            Ok(Finished {
                outputs,
                summary: text,
                converged: est.converged,
            })
        }
        (None, Some(endpoint)) => {
            let direction = State::from_values(model.window(), endpoint.direction.clone())?;
            let est = endpoint_rate(model, &u0, grid, &direction, endpoint.level, &options)?;
            outputs.add_json("endpoint_rate.json", &est)?;
            let text = format!(
                "inf I = {:.9} (terminal value {:.9}, converged {})",
                est.rate, est.terminal_value, est.converged
            );
            Ok(Finished {
                outputs,
                summary: text,
                converged: est.converged,
            })
        }
        _ => Err(CliError::Usage("`rate` needs exactly one of `target` or `endpoint`".into()).into()),
    }
}

#[derive(Serialize)]
struct LdpCsvRow {
    eps: f64,
    p_hat: f64,
    ci_low: f64,
    ci_high: f64,
    neg_eps_log_p: f64,
    censored: bool,
    rate_reference: Option<f64>,
}

pub fn ldp(config: &RunConfig, model: &Model, seed: Option<u64>) -> anyhow::Result<Finished> {
    let s = section(&config.ldp_curve, "ldp_curve")?;
    let grid = config.grid()?;
    let u0 = config.initial_state(model)?;
    let sde = SdeConfig {
        eps: s.eps.first().copied().unwrap_or(1.0),
        grid,
        seed: require_seed(seed)?,
        ensemble_size: s.samples,
    };
    let curve = ldp_curve(model, &sde, &u0, &s.event, &s.eps)?;
    let mut converged = true;
    let reference = match &s.event {
        EventSpec::EndpointHalfSpace { direction, level } => {
            let direction = State::from_values(model.window(), direction.clone())?;
            let r = endpoint_rate(model, &u0, grid, &direction, *level, &RateOptions::default())?;
            converged = r.converged;
            Some(r.rate)
        }
        _ => None,
    };
    let rows: Vec<LdpCsvRow> = curve
        .rows
        .iter()
        .map(|r| LdpCsvRow {
            eps: r.eps,
            p_hat: r.p_hat,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            neg_eps_log_p: r.neg_eps_log_p,
            censored: r.censored,
            rate_reference: reference,
        })
        .collect();
    let mut text = String::new();
    for r in &rows {
        text.push_str(&format!("eps {:<8} p {:.6e}  -eps log p {:.6}\n", r.eps, r.p_hat, r.neg_eps_log_p));
    }
    if let Some(i) = reference {
        text.push_str(&format!("rate reference {i:.6}"));
    }
    let mut outputs = Outputs::default();
    outputs.add_csv("ldp_curve.csv", rows)?;
    Ok(Finished {
        outputs,
        summary: text.trim_end().to_string(),
        converged,
    })
}

#[derive(Serialize)]
struct LaplaceCsvRow {
    eps: f64,
    value: f64,
    std_err: f64,
    ci_low: f64,
    ci_high: f64,
    variational: f64,
}

pub fn laplace(config: &RunConfig, model: &Model, seed: Option<u64>) -> anyhow::Result<Finished> {
    let s = section(&config.laplace, "laplace")?;
    let grid = config.grid()?;
    let u0 = config.initial_state(model)?;
    let seed = require_seed(seed)?;
    let variational = laplace_variational(model, &u0, grid, &s.functional, &RateOptions::default())?;
    let rows = s
        .eps
        .iter()
        .map(|&eps| {
            let sde = SdeConfig {
                eps,
                grid,
                seed,
                ensemble_size: s.samples,
            };
            let est = laplace_functional(model, &sde, &u0, &s.functional)?;
            Ok(LaplaceCsvRow {
                eps,
                value: est.value,
                std_err: est.std_err,
                ci_low: est.ci_low,
                ci_high: est.ci_high,
                variational: variational.value,
            })
        })
        .collect::<lattice_ldp::Result<Vec<_>>>()?;
    let mut text = String::new();
    for r in &rows {
        text.push_str(&format!("eps {:<8} value {:.6} +- {:.2e}\n", r.eps, r.value, r.std_err));
    }
    text.push_str(&format!("variational {:.6}", variational.value));
    let mut outputs = Outputs::default();
    outputs.add_csv("laplace.csv", rows)?;
    Ok(Finished {
        outputs,
        summary: text,
        converged: variational.converged,
    })
}

pub fn probe_weak(config: &RunConfig, model: &Model) -> anyhow::Result<Finished> {
    let s = section(&config.probe_weak, "probe_weak")?;
    let grid = config.grid()?;
    let u0 = config.initial_state(model)?;
    let v = s.control.build(grid, model.modes())?;
    let rows = weak_convergence_probe(model, &u0, &v, &s.weights, &s.frequencies)?;
    let text = rows
        .iter()
        .map(|r| format!("n {:<4} d_n {:.6e}", r.n, r.distance))
        .collect::<Vec<_>>()
        .join("\n");
    let mut outputs = Outputs::default();
    outputs.add_csv("weak_probe.csv", rows.iter())?;
    Ok(Finished::new(outputs, text))
}

#[derive(Serialize)]
struct CompactSummary {
    level: f64,
    samples: usize,
    modulus: f64,
    tail_mass: f64,
    net_radius: f64,
    net_size: usize,
}

pub fn probe_compact(config: &RunConfig, model: &Model, seed: Option<u64>) -> anyhow::Result<Finished> {
    let s = section(&config.probe_compact, "probe_compact")?;
    let grid = config.grid()?;
    let u0 = config.initial_state(model)?;
    let report = level_set_probe(model, &u0, grid, s.level, s.samples, require_seed(seed)?)?;
    let summary = CompactSummary {
        level: report.level,
        samples: report.samples.len(),
        modulus: report.modulus,
        tail_mass: report.tail_mass,
        net_radius: report.net_radius,
        net_size: report.net_size,
    };
    let text = format!(
        "modulus {:.6e}, tail mass {:.6e}, net size {} at radius {}",
        summary.modulus, summary.tail_mass, summary.net_size, summary.net_radius
    );
    let mut outputs = Outputs::default();
    outputs.add_csv("compactness.csv", report.samples.iter())?;
    outputs.add_json("compactness.json", &summary)?;
    Ok(Finished::new(outputs, text))
}

pub fn probe_h1(config: &RunConfig, model: &Model, seed: Option<u64>) -> anyhow::Result<Finished> {
    let s = section(&config.probe_h1, "probe_h1")?;
    let grid = config.grid()?;
    let u0 = config.initial_state(model)?;
    let v = s.control.build(grid, model.modes())?;
    let sde = SdeConfig {
        eps: 0.0,
        grid,
        seed: require_seed(seed)?,
        ensemble_size: s.samples,
    };
    let rows = h1_probe(model, &sde, &u0, &v, &s.eps)?;
    let text = rows
        .iter()
        .map(|r| format!("eps {:<8} E sup |u_eps - u| {:.6e} +- {:.2e}", r.eps, r.mean_distance, r.std_err))
        .collect::<Vec<_>>()
        .join("\n");
    let mut outputs = Outputs::default();
    outputs.add_csv("h1_probe.csv", rows.iter())?;
    Ok(Finished::new(outputs, text))
}
