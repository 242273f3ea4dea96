//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export returns a JSON string; the plain functions below it are what
//! the native tests exercise.

use lattice_ldp::bench::{additive_benchmark, ou_endpoint_rate, tanh_benchmark, tanh_initial};
use lattice_ldp::ldp::{gaussian_tail, tail_probability, EventSpec};
use lattice_ldp::rate::{endpoint_rate, RateOptions};
use lattice_ldp::sde::simulate_sample;
use lattice_ldp::skeleton::{oscillating_control, solve};
use lattice_ldp::{Control, Model, SdeConfig, State, TimeGrid};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const STEPS: usize = 200;

fn benchmark(name: &str) -> Result<(Model, State), String> {
    let (spec, tanh) = match name {
        "ou" => (additive_benchmark(), false),
        "tanh" => (tanh_benchmark(), true),
        other => return Err(format!("unknown model `{other}` (expected `ou` or `tanh`)")),
    };
    let model = Model::new(spec).map_err(|e| e.to_string())?;
    let u0 = if tanh {
        tanh_initial(model.window())
    } else {
        State::zeros(model.window())
    };
    Ok((model, u0))
}

/// Value of the centre site along a path.
fn centre(path: &lattice_ldp::Trajectory) -> Vec<f64> {
    let mid = path.initial().values().len() / 2;
    path.states.iter().map(|s| s.values()[mid]).collect()
}

#[derive(Debug, Serialize)]
pub struct PathBundle {
    pub times: Vec<f64>,
    /// Skeleton path with zero control.
    pub mean_path: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
}

pub fn noisy_paths(model: &str, eps: f64, count: usize, seed: u32) -> Result<PathBundle, String> {
    let (model, u0) = benchmark(model)?;
    let grid = TimeGrid::new(model.horizon(), STEPS).map_err(|e| e.to_string())?;
    let config = SdeConfig {
        eps,
        grid,
        seed: seed.into(),
        ensemble_size: count.max(1),
    };
    let samples = (0..count as u64)
        .map(|k| simulate_sample(&model, &config, k, &u0, None).map(|p| centre(&p)))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mean = solve(&model, &u0, &Control::zeros(grid, model.modes())).map_err(|e| e.to_string())?;
    Ok(PathBundle {
        times: (0..=STEPS).map(|m| grid.time(m)).collect(),
        mean_path: centre(&mean),
        samples,
    })
}

#[derive(Debug, Serialize)]
pub struct Oscillation {
    pub times: Vec<f64>,
    pub base: Vec<f64>,
    pub perturbed: Vec<f64>,
    /// Sup-norm distance over the whole state.
    pub distance: f64,
}

/// Skeleton paths for `v = 0` and `v = sin(2 pi n t)` in every mode.
pub fn oscillation(model: &str, n: u32) -> Result<Oscillation, String> {
    let (model, u0) = benchmark(model)?;
    let grid = TimeGrid::new(model.horizon(), STEPS).map_err(|e| e.to_string())?;
    let zero = Control::zeros(grid, model.modes());
    let weights = vec![1.0; model.modes()];
    let vn = oscillating_control(&zero, &weights, n).map_err(|e| e.to_string())?;
    let base = solve(&model, &u0, &zero).map_err(|e| e.to_string())?;
    let perturbed = solve(&model, &u0, &vn).map_err(|e| e.to_string())?;
    Ok(Oscillation {
        times: (0..=STEPS).map(|m| grid.time(m)).collect(),
        base: centre(&base),
        perturbed: centre(&perturbed),
        distance: perturbed.sup_distance(&base).map_err(|e| e.to_string())?,
    })
}

#[derive(Debug, Serialize)]
pub struct TailPoint {
    pub eps: f64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub hits: usize,
    /// `-eps log p_hat`, absent without hits.
    pub neg_eps_log_p: Option<f64>,
    /// Exact tail of the Gaussian endpoint in continuous time.
    pub exact_p: f64,
    /// Optimised `inf I` on the simulation grid.
    pub rate: f64,
    pub rate_exact: f64,
}

/// `P(u(1) >= level)` for the single-site OU benchmark started at 0.
pub fn ou_tail(eps: f64, level: f64, samples: usize, seed: u32) -> Result<TailPoint, String> {
    let (model, u0) = benchmark("ou")?;
    let grid = TimeGrid::new(1.0, STEPS).map_err(|e| e.to_string())?;
    let config = SdeConfig {
        eps,
        grid,
        seed: seed.into(),
        ensemble_size: samples.max(1),
    };
    let event = EventSpec::EndpointHalfSpace {
        direction: vec![1.0],
        level,
    };
    let est = tail_probability(&model, &config, &u0, &event, None).map_err(|e| e.to_string())?;
    let c = State::constant(model.window(), 1.0);
    let rate = endpoint_rate(&model, &u0, grid, &c, level, &RateOptions::default()).map_err(|e| e.to_string())?;
    let rate_exact = ou_endpoint_rate(level);
    Ok(TailPoint {
        eps,
        p_hat: est.p_hat,
        ci_low: est.ci_low,
        ci_high: est.ci_high,
        hits: est.hits,
        neg_eps_log_p: (!est.zero_hits).then(|| -eps * est.p_hat.ln()),
        exact_p: gaussian_tail((2.0 * rate_exact / eps).sqrt()),
        rate: rate.rate,
        rate_exact,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = noisyPaths)]
pub fn noisy_paths_js(model: &str, eps: f64, count: usize, seed: u32) -> Result<String, JsError> {
    to_js(noisy_paths(model, eps, count, seed))
}

#[wasm_bindgen(js_name = oscillation)]
pub fn oscillation_js(model: &str, n: u32) -> Result<String, JsError> {
    to_js(oscillation(model, n))
}

#[wasm_bindgen(js_name = ouTail)]
pub fn ou_tail_js(eps: f64, level: f64, samples: usize, seed: u32) -> Result<String, JsError> {
    to_js(ou_tail(eps, level, samples, seed))
}
