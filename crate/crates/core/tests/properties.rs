use lattice_ldp::bench::{tanh_benchmark, tanh_initial};
use lattice_ldp::skeleton::continuity_check;
use lattice_ldp::{apply_a, apply_b, apply_b_star, dirichlet_energy, Control, EdgeVector, LatticeWindow, Model, State, TimeGrid};
use proptest::prelude::*;

fn window_and_state() -> impl Strategy<Value = (LatticeWindow, Vec<f64>)> {
    (1usize..=3, 0usize..=3).prop_flat_map(|(dim, radius)| {
        let window = LatticeWindow::new(dim, radius).unwrap();
        let n = window.site_count();
        (Just(window), prop::collection::vec(-3.0f64..3.0, n))
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_factorises((window, values) in window_and_state()) {
        let u = State::from_values(window, values).unwrap();
        let au = apply_a(&u);
        let mut sum = vec![0.0; window.site_count()];
        let mut edge_energy = 0.0;
        for j in 1..=window.dim() {
            let bu = apply_b(j, &u).unwrap();
            edge_energy += bu.dot(&bu).unwrap();
            for (s, x) in sum.iter_mut().zip(apply_b_star(&bu).values()) {
                *s += x;
            }
        }
        let scale = 1.0 + u.norm_sq();
        for (a, b) in au.values().iter().zip(&sum) {
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }
        let energy = dirichlet_energy(&u);
        prop_assert!(energy >= 0.0);
        prop_assert!((dot(au.values(), u.values()) - energy).abs() <= 1e-12 * scale * 4.0 * window.dim() as f64);
        prop_assert!((energy - edge_energy).abs() <= 1e-12 * scale * 4.0 * window.dim() as f64);
    }

    #[test]
    fn difference_operators_are_adjoint(
        (window, values) in window_and_state(),
        seed in 0u64..1000,
    ) {
        let u = State::from_values(window, values).unwrap();
        for j in 1..=window.dim() {
            let w: Vec<f64> = (0..window.edge_count())
                .map(|e| ((e as u64 * 2654435761 + seed) % 1000) as f64 / 250.0 - 2.0)
                .collect();
            let w = EdgeVector::new(window, j, w).unwrap();
            let lhs = apply_b(j, &u).unwrap().dot(&w).unwrap();
            let rhs = dot(u.values(), apply_b_star(&w).values());
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn reaction_term_is_monotone(
        a in prop::collection::vec(-4.0f64..4.0, 5),
        b in prop::collection::vec(-4.0f64..4.0, 5),
    ) {
        let model = Model::new(tanh_benchmark()).unwrap();
        let u = State::from_values(model.window(), a).unwrap();
        let v = State::from_values(model.window(), b).unwrap();
        let df = model.f_eval(&u).unwrap().sub(&model.f_eval(&v).unwrap()).unwrap();
        prop_assert!(df.dot(&u.sub(&v).unwrap()).unwrap() >= -1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn skeleton_is_lipschitz_in_its_inputs(
        shift in prop::collection::vec(-0.3f64..0.3, 5),
        a in -1.0f64..1.0,
        b in -1.0f64..1.0,
        omega in 0.0f64..10.0,
    ) {
        let model = Model::new(tanh_benchmark()).unwrap();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let u0 = tanh_initial(model.window());
        let shifted: Vec<f64> = u0.values().iter().zip(&shift).map(|(x, s)| x + s).collect();
        let u1 = State::from_values(model.window(), shifted).unwrap();
        let v1 = Control::from_fn(grid, 2, |t| vec![a * (omega * t).sin(), b]).unwrap();
        let v2 = Control::from_fn(grid, 2, |t| vec![b * t, a * (omega * t).cos()]).unwrap();
        let r = continuity_check(&model, &u0, &u1, &v1, &v2).unwrap();
        prop_assert!(r.holds, "{} > {}", r.distance_sq, r.bound);
    }
}
