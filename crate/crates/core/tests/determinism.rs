use lattice_ldp::bench::{stochastic_fingerprint, tanh_benchmark, tanh_initial, Effort};
use lattice_ldp::sde::{ensemble_fold, simulate_sample};
use lattice_ldp::{Model, SdeConfig, TimeGrid};

#[test]
fn ensemble_samples_match_individual_runs() {
    let model = Model::new(tanh_benchmark()).unwrap();
    let config = SdeConfig {
        eps: 0.2,
        grid: TimeGrid::new(1.0, 50).unwrap(),
        seed: 99,
        ensemble_size: 300,
    };
    let u0 = tanh_initial(model.window());
    let last = config.grid.steps;
    let ends = ensemble_fold(&model, &config, &u0, None, Vec::new, |acc, m, u| {
        if m == last {
            acc.extend_from_slice(u);
        }
    })
    .unwrap();
    for sample in [0usize, 1, 150, 299] {
        let path = simulate_sample(&model, &config, sample as u64, &u0, None).unwrap();
        assert_eq!(path.terminal().values(), ends[sample].value.as_slice());
    }
    let other = SdeConfig { seed: 100, ..config.clone() };
    let path = simulate_sample(&model, &other, 0, &u0, None).unwrap();
    assert_ne!(path.terminal().values(), ends[0].value.as_slice());
}

#[test]
fn fingerprint_is_reproducible() {
    let a = stochastic_fingerprint(7, Effort::Quick).unwrap();
    let b = stochastic_fingerprint(7, Effort::Quick).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, stochastic_fingerprint(8, Effort::Quick).unwrap());
}
