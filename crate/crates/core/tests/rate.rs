use lattice_ldp::bench::{additive_benchmark, gradient_check, tanh_benchmark, tanh_initial};
use lattice_ldp::model::ForcingSpec;
use lattice_ldp::rate::{additive_oracle, adjoint_gradient, endpoint_rate, rate_estimate, tracking_objective, RateOptions};
use lattice_ldp::skeleton::solve_euler;
use lattice_ldp::{Control, Model, State, TimeGrid, Trajectory};

fn ou() -> Model {
    Model::new(additive_benchmark()).unwrap()
}

fn quadratic_target(model: &Model, grid: TimeGrid) -> Trajectory {
    let states = (0..=grid.steps)
        .map(|m| {
            let t = grid.time(m);
            State::constant(model.window(), t * t - 0.5 * t)
        })
        .collect();
    Trajectory::new(grid, states).unwrap()
}

/// Euler path of `u' = -u + v` from 0.
fn euler_scalar(v: &[f64], dt: f64) -> Vec<f64> {
    let mut u = vec![0.0];
    for &vm in v {
        let last = *u.last().unwrap();
        u.push(last + dt * (-last + vm));
    }
    u
}

#[test]
fn linear_adjoint_matches_hand_derivation() {
    let model = ou();
    let grid = TimeGrid::new(1.0, 40).unwrap();
    let dt = grid.dt();
    let target = quadratic_target(&model, grid);
    let v = Control::from_fn(grid, 1, |t| vec![(4.0 * t).cos()]).unwrap();
    let lambda = 7.0;

    let phi: Vec<f64> = target.states.iter().map(|s| s.values()[0]).collect();
    let u = euler_scalar(v.values(), dt);
    let c: Vec<f64> = (0..grid.steps)
        .map(|m| -u[m] + v.values()[m] - (phi[m + 1] - phi[m]) / dt)
        .collect();

    let j: f64 = (0..grid.steps).map(|m| 0.5 * dt * v.values()[m].powi(2) + lambda * dt * c[m].powi(2)).sum();
    let got = tracking_objective(&model, &State::zeros(model.window()), &target, &v, lambda).unwrap();
    assert!((got - j).abs() < 1e-12 * j.abs().max(1.0));

    let grad = adjoint_gradient(&model, &State::zeros(model.window()), &target, &v, lambda).unwrap();
    for jdx in 0..grid.steps {
        let tail: f64 = (jdx + 1..grid.steps)
            .map(|m| c[m] * (1.0 - dt).powi((m - jdx - 1) as i32))
            .sum();
        let want = dt * v.values()[jdx] + 2.0 * lambda * dt * (c[jdx] - dt * tail);
        assert!((grad.values()[jdx] - want).abs() < 1e-11, "component {jdx}");
    }
}

#[test]
fn finite_differences_on_both_models() {
    let grid = TimeGrid::new(1.0, 60).unwrap();
    for (spec, tanh) in [(additive_benchmark(), false), (tanh_benchmark(), true)] {
        let model = Model::new(spec).unwrap();
        let u0 = if tanh {
            tanh_initial(model.window())
        } else {
            State::constant(model.window(), 0.3)
        };
        let k = model.modes();
        let reference = Control::from_fn(grid, k, |t| (0..k).map(|i| (2.0 + i as f64) * (3.0 * t).sin()).collect()).unwrap();
        let target = solve_euler(&model, &u0, &reference).unwrap();
        let v = Control::from_fn(grid, k, |t| (0..k).map(|i| 0.5 - t * i as f64).collect()).unwrap();
        let worst = gradient_check(&model, &u0, &target, &v, 1e2, 40, 3).unwrap();
        assert!(worst < 1e-5, "tanh = {tanh}: {worst}");
    }
}

#[test]
fn optimiser_matches_oracle_on_quadratic_target() {
    let model = ou();
    let grid = TimeGrid::new(1.0, 200).unwrap();
    let target = quadratic_target(&model, grid);
    let u0 = State::zeros(model.window());
    let exact = additive_oracle(&model, &u0, &target).unwrap();
    let est = rate_estimate(&model, &u0, &target, &RateOptions::default()).unwrap();
    assert!(est.converged && est.residual < 1e-6);
    assert!((est.cost - exact.cost).abs() < 1e-6 * exact.cost);
}

#[test]
fn doubling_noise_quarters_the_cost() {
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let base = ou();
    let mut spec = additive_benchmark();
    spec.noise.modes[0].h = ForcingSpec::constant(vec![0], 2.0);
    let loud = Model::new(spec).unwrap();
    let u0 = State::zeros(base.window());
    let target = quadratic_target(&base, grid);
    let a = additive_oracle(&base, &u0, &target).unwrap().cost;
    let b = additive_oracle(&loud, &u0, &target).unwrap().cost;
    assert!((b - a / 4.0).abs() < 1e-12 * a);
    let c = rate_estimate(&loud, &u0, &target, &RateOptions::default()).unwrap();
    assert!((c.cost - b).abs() < 1e-6 * b);
}

#[test]
fn reachable_tanh_target_costs_at_most_its_generator() {
    let model = Model::new(tanh_benchmark()).unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let u0 = tanh_initial(model.window());
    let generator = Control::from_fn(grid, 2, |t| vec![0.8 * (2.0 * t).cos(), -0.4 + 0.6 * t]).unwrap();
    let target = solve_euler(&model, &u0, &generator).unwrap();
    let est = rate_estimate(&model, &u0, &target, &RateOptions::default()).unwrap();
    assert!(est.converged, "residual {}", est.residual);
    assert!(est.residual < 1e-6);
    assert!(est.cost <= generator.cost() * (1.0 + 1e-6));
    assert!(est.cost > 0.0);
}

#[test]
fn endpoint_rate_shrinks_with_level() {
    let model = ou();
    let grid = TimeGrid::new(1.0, 200).unwrap();
    let u0 = State::zeros(model.window());
    let c = State::constant(model.window(), 1.0);
    let dt = grid.dt();
    // Discrete reachability Gramian of the Euler scheme.
    let gram: f64 = (0..grid.steps).map(|m| dt * (1.0 - dt).powi(2 * (grid.steps - 1 - m) as i32)).sum();
    let mut last = f64::INFINITY;
    for level in [1.0, 0.1, 0.01, 0.001] {
        let r = endpoint_rate(&model, &u0, grid, &c, level, &RateOptions::default()).unwrap();
        let want = level * level / (2.0 * gram);
        assert!((r.rate - want).abs() < 1e-5 * want.max(1e-6), "level {level}: {} vs {want}", r.rate);
        assert!(r.rate < last);
        last = r.rate;
    }
}
