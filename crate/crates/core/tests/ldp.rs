use lattice_ldp::bench::additive_benchmark;
use lattice_ldp::ldp::{
    gaussian_tail, h1_probe, laplace_functional, laplace_variational, ldp_curve, tail_probability, EventSpec,
    IntervalMethod, PathFunctional,
};
use lattice_ldp::rate::{endpoint_rate, RateOptions};
use lattice_ldp::{Control, Error, Model, SdeConfig, State, TimeGrid};

const STEPS: usize = 100;

fn ou() -> Model {
    Model::new(additive_benchmark()).unwrap()
}

fn config(eps: f64, samples: usize, seed: u64) -> SdeConfig {
    SdeConfig {
        eps,
        grid: TimeGrid::new(1.0, STEPS).unwrap(),
        seed,
        ensemble_size: samples,
    }
}

/// Variance of the Euler endpoint `u_M` for unit additive noise from 0.
fn euler_variance(steps: usize) -> f64 {
    let dt = 1.0 / steps as f64;
    (0..steps).map(|m| dt * (1.0 - dt).powi(2 * m as i32)).sum()
}

fn half_space(level: f64) -> EventSpec {
    EventSpec::EndpointHalfSpace {
        direction: vec![1.0],
        level,
    }
}

#[test]
fn always_event_has_probability_one() {
    let model = ou();
    let est = tail_probability(&model, &config(0.3, 500, 1), &State::zeros(model.window()), &EventSpec::Always, None)
        .unwrap();
    assert_eq!(est.p_hat, 1.0);
    assert_eq!(est.hits, 500);
}

#[test]
fn zero_noise_misses_a_distant_event() {
    let model = ou();
    let est = tail_probability(&model, &config(0.0, 1000, 1), &State::zeros(model.window()), &half_space(0.5), None)
        .unwrap();
    assert!(est.zero_hits);
    assert_eq!(est.method, IntervalMethod::ClopperPearson);
    assert_eq!(est.ci_low, 0.0);
    assert!(est.ci_high > 0.0 && est.ci_high < 0.01);
}

#[test]
fn gaussian_endpoint_probability() {
    let model = ou();
    let eps = 0.5;
    let est = tail_probability(&model, &config(eps, 100_000, 11), &State::zeros(model.window()), &half_space(1.0), None)
        .unwrap();
    let exact = gaussian_tail(1.0 / (eps * euler_variance(STEPS)).sqrt());
    assert!((est.p_hat - exact).abs() < 3.0 * est.std_err, "{} vs {exact}", est.p_hat);
}

#[test]
fn disjoint_seeds_agree() {
    let model = ou();
    let u0 = State::zeros(model.window());
    let a = tail_probability(&model, &config(0.5, 50_000, 1), &u0, &half_space(1.0), None).unwrap();
    let b = tail_probability(&model, &config(0.5, 50_000, 2), &u0, &half_space(1.0), None).unwrap();
    assert_ne!(a.hits, b.hits);
    assert!((a.p_hat - b.p_hat).abs() < 4.0 * (a.std_err.powi(2) + b.std_err.powi(2)).sqrt());
}

#[test]
fn importance_sampling_reaches_rare_events() {
    let model = ou();
    let eps = 0.05;
    let grid = TimeGrid::new(1.0, STEPS).unwrap();
    let u0 = State::zeros(model.window());
    let optimal = endpoint_rate(&model, &u0, grid, &State::constant(model.window(), 1.0), 1.0, &RateOptions::default())
        .unwrap();
    let est = tail_probability(&model, &config(eps, 20_000, 5), &u0, &half_space(1.0), Some(&optimal.control)).unwrap();
    let exact = gaussian_tail(1.0 / (eps * euler_variance(STEPS)).sqrt());
    assert!(exact < 1e-5);
    assert!((est.p_hat - exact).abs() < 3.0 * est.std_err + 0.01 * exact, "{} vs {exact}", est.p_hat);
}

#[test]
fn curve_of_a_typical_event_vanishes() {
    let model = ou();
    let curve = ldp_curve(&model, &config(0.0, 2000, 3), &State::zeros(model.window()), &half_space(1e-9), &[0.5, 0.2, 0.1])
        .unwrap();
    for row in &curve.rows {
        // The event has probability about one half at every eps.
        assert!(!row.censored);
        assert!(row.neg_eps_log_p < row.eps);
    }
    assert!(matches!(
        ldp_curve(&model, &config(0.0, 10, 3), &State::zeros(model.window()), &EventSpec::Always, &[0.1, 0.2]),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn laplace_of_constant_and_unreachable_penalty() {
    let model = ou();
    let u0 = State::constant(model.window(), 0.5);
    let est = laplace_functional(&model, &config(0.1, 200, 1), &u0, &PathFunctional::Constant { value: 1.25 }).unwrap();
    assert!((est.value - 1.25).abs() < 1e-12);
    let ball = PathFunctional::SupBallPenalty {
        radius: 100.0,
        penalty: 5.0,
    };
    let est = laplace_functional(&model, &config(0.1, 200, 1), &u0, &ball).unwrap();
    assert_eq!(est.value, 0.0);
    let grid = TimeGrid::new(1.0, STEPS).unwrap();
    let var = laplace_variational(&model, &u0, grid, &ball, &RateOptions::default()).unwrap();
    assert_eq!(var.value, 0.0);
}

#[test]
fn variational_value_matches_scalar_minimisation() {
    let model = ou();
    let grid = TimeGrid::new(1.0, STEPS).unwrap();
    let (weight, center) = (3.0, 0.8);
    let h = PathFunctional::TerminalQuadratic {
        center: vec![center],
        weight,
    };
    let var = laplace_variational(&model, &State::zeros(model.window()), grid, &h, &RateOptions::default()).unwrap();
    // min_x weight (x - c)^2 + x^2 / (2 S) with S the Euler Gramian.
    let s = euler_variance(STEPS);
    let want = weight * center * center / (1.0 + 2.0 * weight * s);
    assert!(var.converged);
    assert!((var.value - want).abs() < 1e-8, "{} vs {want}", var.value);
}

#[test]
fn controlled_system_without_noise_is_the_skeleton() {
    let model = ou();
    let grid = TimeGrid::new(1.0, STEPS).unwrap();
    let v = Control::from_fn(grid, 1, |t| vec![1.0 - 2.0 * t]).unwrap();
    let rows = h1_probe(&model, &config(0.0, 16, 9), &State::constant(model.window(), 0.3), &v, &[0.0, 0.1, 0.01]).unwrap();
    assert_eq!(rows[0].mean_distance, 0.0);
    assert!(rows[2].mean_distance < rows[1].mean_distance);
    let ratio = rows[1].mean_distance / rows[2].mean_distance;
    assert!((ratio - 10f64.sqrt()).abs() < 0.3 * 10f64.sqrt(), "ratio {ratio}");
}
