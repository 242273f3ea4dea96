use lattice_ldp::bench::{additive_benchmark, tanh_benchmark, tanh_initial};
use lattice_ldp::model::{ForcingSpec, NoiseSpec};
use lattice_ldp::skeleton::{
    apriori_bound, continuity_check, level_set_probe, oscillating_control, solve, weak_convergence_probe,
};
use lattice_ldp::{Control, Error, Model, State, TimeGrid};

fn decay_model() -> Model {
    let mut spec = additive_benchmark();
    spec.noise = NoiseSpec::default();
    Model::new(spec).unwrap()
}

#[test]
fn exponential_decay() {
    let model = decay_model();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let path = solve(&model, &State::constant(model.window(), 1.0), &Control::zeros(grid, 0)).unwrap();
    assert!((path.terminal().values()[0] - (-1.0f64).exp()).abs() < 1e-6);
}

#[test]
fn linear_path_from_affine_control() {
    let model = Model::new(additive_benchmark()).unwrap();
    let grid = TimeGrid::new(1.0, 1000).unwrap();
    let v = Control::from_fn(grid, 1, |t| vec![1.0 + t]).unwrap();
    let path = solve(&model, &State::zeros(model.window()), &v).unwrap();
    for (m, s) in path.states.iter().enumerate() {
        assert!((s.values()[0] - grid.time(m)).abs() < 1e-6, "node {m}");
    }
}

#[test]
fn energy_is_dissipated_without_forcing() {
    let mut spec = tanh_benchmark();
    spec.drift.g = ForcingSpec::default();
    spec.drift.gamma = 0.0;
    spec.drift.f0 = vec![0.0, 0.0, 0.0, 1.0];
    let model = Model::new(spec).unwrap();
    let grid = TimeGrid::new(1.0, 200).unwrap();
    let path = solve(&model, &tanh_initial(model.window()), &Control::zeros(grid, 2)).unwrap();
    for w in path.states.windows(2) {
        assert!(w[1].norm() <= w[0].norm() + 1e-9);
    }
}

#[test]
fn solve_is_a_pure_function() {
    let model = Model::new(tanh_benchmark()).unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let u0 = tanh_initial(model.window());
    let v = Control::constant(grid, &[0.3, -0.2]);
    let a = solve(&model, &u0, &v).unwrap();
    let _ = solve(&model, &u0, &Control::zeros(grid, 2)).unwrap();
    let b = solve(&model, &u0, &v).unwrap();
    assert_eq!(a, b);
}

#[test]
fn step_unstable_outside_ball() {
    let mut spec = tanh_benchmark();
    spec.stability_radius = 1.0;
    let model = Model::new(spec).unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let u0 = tanh_initial(model.window());
    let err = solve(&model, &u0, &Control::constant(grid, &[40.0, 40.0])).unwrap_err();
    assert!(matches!(err, Error::StepUnstable { .. }));
}

#[test]
fn apriori_bound_special_cases() {
    let model = decay_model();
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let u0 = State::constant(model.window(), 0.7);
    let b = apriori_bound(&model, &u0, &Control::zeros(grid, 0));
    assert!((b - 2f64.exp() * 0.49).abs() < 1e-12);
    assert_eq!(apriori_bound(&model, &State::zeros(model.window()), &Control::zeros(grid, 0)), 0.0);
}

#[test]
fn continuity_inequality() {
    let model = Model::new(additive_benchmark()).unwrap();
    let grid = TimeGrid::new(1.0, 200).unwrap();
    let u0 = State::constant(model.window(), 0.2);
    let v = Control::from_fn(grid, 1, |t| vec![(3.0 * t).sin()]).unwrap();
    let same = continuity_check(&model, &u0, &u0, &v, &v).unwrap();
    assert_eq!(same.distance_sq, 0.0);
    assert!(same.holds);

    let mut last_ratio: Option<f64> = None;
    for eps in [1e-1, 1e-2, 1e-3] {
        let u1 = State::constant(model.window(), 0.2 + eps);
        let r = continuity_check(&model, &u0, &u1, &v, &v).unwrap();
        assert!(r.holds);
        assert!(r.ratio() < r.constant);
        if let Some(prev) = last_ratio {
            let ratio: f64 = r.ratio();
            assert!((ratio - prev).abs() < 0.1 * ratio);
        }
        last_ratio = Some(r.ratio());
    }
    let w = Control::from_fn(grid, 1, |t| vec![(3.0 * t).sin() + 0.3 * t]).unwrap();
    let r = continuity_check(&model, &u0, &State::constant(model.window(), 0.25), &v, &w).unwrap();
    assert!(r.holds && r.ratio() < r.constant);
}

/// `sup_t |int_0^t e^{-(t-s)} sin(omega s) ds|` on a fine grid.
fn closed_form_distance(n: u32) -> f64 {
    let omega = 2.0 * std::f64::consts::PI * n as f64;
    (0..=20_000)
        .map(|i| {
            let t = i as f64 / 20_000.0;
            ((omega * t).sin() - omega * (omega * t).cos() + omega * (-t).exp()).abs() / (1.0 + omega * omega)
        })
        .fold(0.0, f64::max)
}

#[test]
fn weak_probe_matches_closed_form() {
    let model = Model::new(additive_benchmark()).unwrap();
    let grid = TimeGrid::new(1.0, 2000).unwrap();
    let ns = [1, 2, 4, 8, 16];
    let rows = weak_convergence_probe(&model, &State::zeros(model.window()), &Control::zeros(grid, 1), &[1.0], &ns)
        .unwrap();
    for w in rows.windows(2) {
        assert!(w[1].distance < w[0].distance);
    }
    for row in &rows {
        let exact = closed_form_distance(row.n);
        assert!((row.distance - exact).abs() < 1e-3 * exact, "n = {}: {} vs {exact}", row.n, row.distance);
    }
}

#[test]
fn weak_probe_edge_cases() {
    let model = Model::new(tanh_benchmark()).unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let u0 = tanh_initial(model.window());
    let v = Control::constant(grid, &[0.5, -0.3]);
    let rows = weak_convergence_probe(&model, &u0, &v, &[0.0, 0.0], &[1, 2, 4]).unwrap();
    assert!(rows.iter().all(|r| r.distance == 0.0));
    assert!(matches!(
        oscillating_control(&v, &[1.0, 1.0], 16),
        Err(Error::FrequencyTooHigh { .. })
    ));
}

#[test]
fn level_set_probe_cases() {
    let model = Model::new(additive_benchmark()).unwrap();
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let u0 = State::zeros(model.window());

    let zero_level = level_set_probe(&model, &u0, grid, 0.0, 16, 7).unwrap();
    assert_eq!(zero_level.net_size, 1);

    let frozen = decay_model();
    let still = level_set_probe(&frozen, &State::zeros(frozen.window()), grid, 4.0, 8, 7).unwrap();
    assert_eq!(still.modulus, 0.0);
    assert_eq!(still.net_size, 1);

    let small = level_set_probe(&model, &u0, grid, 4.0, 64, 7).unwrap();
    let large = level_set_probe(&model, &u0, grid, 4.0, 128, 7).unwrap();
    assert!(small.samples.iter().all(|s| s.cost <= 2.0 + 1e-12));
    // At radius 0.1 the level-4 image needs many centres; only coarse facts are stable.
    assert!(small.net_size >= 1 && small.net_size <= 64);
    assert!(large.net_size >= small.net_size && large.net_size <= 128);
    assert!(small.modulus <= large.modulus + 1e-15);
    assert!(large.modulus < 0.1);
}
