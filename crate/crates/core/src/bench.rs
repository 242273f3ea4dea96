//! Acceptance battery: the numerical checks that the crate is expected to
//! pass, with their tolerances kept separate from the measurements so that
//! a suite can be re-judged without being re-run.

use std::time::{Duration, Instant};

use crate::error::Result;
use crate::lattice::{apply_a, apply_b, apply_b_star, LatticeWindow, State};
use crate::ldp::{
    gaussian_tail, h1_probe, laplace_functional, laplace_variational, log_gaussian_tail, tail_probability, EventSpec, PathFunctional,
};
use crate::model::{
    DeltaEntry, DriftSpec, ForcingSpec, ForcingTerm, Model, ModelSpec, NoiseMode, NoiseSpec, Sigma0,
    Waveform, WindowSpec,
};
use crate::rate::{additive_oracle, adjoint_gradient, endpoint_rate, rate_estimate, tracking_objective, RateOptions};
use crate::rng::NoiseStream;
use crate::sde::{ensemble_sup_sq, moment_bound, SdeConfig, TimeGrid, Trajectory};
use crate::skeleton::{
    apriori_bound, level_set_probe, random_level_control, solve, solve_euler, weak_convergence_probe, Control,
};

/// Steps used for the single-site Gaussian benchmarks. Fine enough that the
/// explicit-Euler variance is within 0.07% of the continuous one.
pub const OU_STEPS: usize = 1000;

/// Single site, drift `-u`, one additive mode with `h = 1`, horizon 1.
pub fn additive_benchmark() -> ModelSpec {
    ModelSpec {
        window: WindowSpec { dim: 1, radius: 0 },
        drift: DriftSpec {
            nu: 0.5,
            gamma: 0.0,
            f0: vec![],
            g: ForcingSpec::default(),
        },
        noise: NoiseSpec {
            modes: vec![NoiseMode {
                sigma0: Sigma0::Zero,
                delta: vec![],
                h: ForcingSpec::constant(vec![0], 1.0),
            }],
        },
        horizon: 1.0,
        stability_radius: 10.0,
    }
}

/// Five sites, `F0(s) = s^3 - s`, `gamma = -1`, two tanh-multiplicative modes.
pub fn tanh_benchmark() -> ModelSpec {
    let term = |site: i64, waveform: Waveform| ForcingTerm {
        site: vec![site],
        waveform,
    };
    ModelSpec {
        window: WindowSpec { dim: 1, radius: 2 },
        drift: DriftSpec {
            nu: 0.5,
            gamma: -1.0,
            f0: vec![0.0, -1.0, 0.0, 1.0],
            g: ForcingSpec {
                terms: vec![term(0, Waveform::Constant { value: 0.2 })],
            },
        },
        noise: NoiseSpec {
            modes: vec![
                NoiseMode {
                    sigma0: Sigma0::Tanh { c: 0.5 },
                    delta: vec![
                        DeltaEntry { site: vec![0], value: 1.0 },
                        DeltaEntry { site: vec![1], value: 0.5 },
                    ],
                    h: ForcingSpec::constant(vec![0], 0.5),
                },
                NoiseMode {
                    sigma0: Sigma0::Tanh { c: 0.8 },
                    delta: vec![DeltaEntry { site: vec![-1], value: 0.7 }],
                    h: ForcingSpec {
                        terms: vec![term(
                            2,
                            Waveform::Sinusoid {
                                amplitude: 0.3,
                                omega: 2.0 * std::f64::consts::PI,
                                phase: 0.0,
                            },
                        )],
                    },
                },
            ],
        },
        horizon: 1.0,
        stability_radius: 3.0,
    }
}

pub fn tanh_initial(window: LatticeWindow) -> State {
    State::from_values(window, vec![0.2, 0.5, 1.0, 0.5, 0.2]).expect("five-site window")
}

/// Variance of the single-site benchmark endpoint, `(1 - e^{-2})/2`.
pub fn ou_variance() -> f64 {
    (1.0 - (-2.0f64).exp()) / 2.0
}

/// `inf I` over paths of the single-site benchmark from 0 with `u(1) >= level`.
pub fn ou_endpoint_rate(level: f64) -> f64 {
    level * level / (2.0 * ou_variance())
}

/// Exact `-eps log E exp(-u(1)^2 / eps)` for the benchmark started at 1.
pub fn ou_laplace_value(eps: f64) -> f64 {
    let s2 = ou_variance();
    let m = (-1.0f64).exp();
    0.5 * eps * (1.0 + 2.0 * s2).ln() + m * m / (1.0 + 2.0 * s2)
}

/// Missing fields take their defaults when read from a file.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub operator_rel: f64,
    pub monotone_floor: f64,
    pub bound_slack: f64,
    pub skeleton_abs: f64,
    pub weak_ratio: f64,
    pub weak_floor: f64,
    pub gradient_rel: f64,
    pub oracle_rel: f64,
    pub residual: f64,
    pub endpoint_rel: f64,
    pub mc_sigmas: f64,
    pub analytic_rel: f64,
    pub laplace_rel: f64,
    pub laplace_sigmas: f64,
    pub variational_rel: f64,
    pub sqrt_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            operator_rel: 1e-12,
            monotone_floor: 1e-12,
            bound_slack: 1e-12,
            skeleton_abs: 1e-6,
            weak_ratio: 4.0,
            weak_floor: 10.0,
            gradient_rel: 1e-5,
            oracle_rel: 0.02,
            residual: 1e-6,
            endpoint_rel: 0.01,
            mc_sigmas: 3.0,
            analytic_rel: 0.05,
            laplace_rel: 0.10,
            laplace_sigmas: 3.0,
            variational_rel: 0.01,
            sqrt_rel: 0.30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effort {
    /// Sample sizes as in the acceptance criteria.
    Full,
    /// Reduced ensembles for smoke tests.
    Quick,
}

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub seed: u64,
    pub effort: Effort,
    /// Criteria to run; `None` runs all twelve.
    pub only: Option<Vec<u8>>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 20240601,
            effort: Effort::Full,
            only: None,
        }
    }
}

type Check = Box<dyn Fn(&Tolerances) -> bool + Send + Sync>;

/// Raw numbers produced by one criterion, plus the checks that judge them.
pub struct Measurement {
    pub id: u8,
    pub name: &'static str,
    pub metrics: Vec<(String, f64)>,
    checks: Vec<(String, Check)>,
    pub elapsed: Duration,
    pub budget: Duration,
    pub error: Option<String>,
}

impl Measurement {
    fn new(id: u8, name: &'static str, budget_secs: u64) -> Self {
        Self {
            id,
            name,
            metrics: Vec::new(),
            checks: Vec::new(),
            elapsed: Duration::ZERO,
            budget: Duration::from_secs(budget_secs),
            error: None,
        }
    }

    fn metric(&mut self, key: impl Into<String>, value: f64) {
        self.metrics.push((key.into(), value));
    }

    fn check(&mut self, label: impl Into<String>, f: impl Fn(&Tolerances) -> bool + Send + Sync + 'static) {
        self.checks.push((label.into(), Box::new(f)));
    }

    pub fn within_budget(&self) -> bool {
        self.elapsed <= self.budget
    }

    pub fn judge(&self, tol: &Tolerances) -> CriterionResult {
        let mut failed: Vec<String> = self
            .checks
            .iter()
            .filter(|(_, c)| !c(tol))
            .map(|(label, _)| label.clone())
            .collect();
        if let Some(e) = &self.error {
            failed.push(format!("error: {e}"));
        }
        CriterionResult {
            id: self.id,
            name: self.name,
            passed: failed.is_empty(),
            failed,
            metrics: self.metrics.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub failed: Vec<String>,
    pub metrics: Vec<(String, f64)>,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        let metrics: Vec<String> = self.metrics.iter().map(|(k, v)| format!("{k}={v:.6e}")).collect();
        let mut line = format!(
            "criterion {:>2} {:<28} {}  {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            metrics.join(" ")
        );
        if !self.failed.is_empty() {
            line.push_str(&format!("  failed: {}", self.failed.join(", ")));
        }
        line
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub results: Vec<CriterionResult>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| !r.passed).count()
    }

    /// Summary table. Contains no timings, so identical inputs give
    /// identical bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("criterion,name,pass,failed_checks,metrics\n");
        for r in &self.results {
            let metrics: Vec<String> = r.metrics.iter().map(|(k, v)| format!("{k}={v:e}")).collect();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.id,
                r.name,
                r.passed,
                r.failed.join("|").replace(',', ";"),
                metrics.join(";")
            ));
        }
        out
    }
}

pub fn judge(measurements: &[Measurement], tol: &Tolerances) -> SuiteReport {
    SuiteReport {
        results: measurements.iter().map(|m| m.judge(tol)).collect(),
    }
}

pub fn run_suite(config: &SuiteConfig, tol: &Tolerances) -> SuiteReport {
    judge(&measure(config), tol)
}

type Runner = fn(&SuiteConfig, &mut Measurement) -> Result<()>;

const CRITERIA: [(u8, &str, u64, Runner); 12] = [
    (1, "operator identities", 1, operator_identities),
    (2, "structural conditions", 5, structural_conditions),
    (3, "skeleton correctness", 10, skeleton_correctness),
    (4, "weak convergence probe", 30, weak_convergence),
    (5, "gradient exactness", 30, gradient_exactness),
    (6, "rate oracle agreement", 120, rate_oracle_agreement),
    (7, "endpoint rate", 60, endpoint_rate_ou),
    (8, "ldp curve", 120, ldp_curve_ou),
    (9, "laplace principle", 120, laplace_principle),
    (10, "small-noise convergence", 120, small_noise_probe),
    (11, "uniform moments", 60, uniform_moments),
    (12, "determinism", 60, determinism),
];

/// Runs the selected criteria. Errors are recorded as failed checks and do
/// not stop the remaining criteria.
pub fn measure(config: &SuiteConfig) -> Vec<Measurement> {
    CRITERIA
        .iter()
        .filter(|(id, ..)| config.only.as_ref().is_none_or(|o| o.contains(id)))
        .map(|&(id, name, budget, run)| {
            let mut m = Measurement::new(id, name, budget);
            let start = Instant::now();
            if let Err(e) = run(config, &mut m) {
                m.error = Some(e.to_string());
            }
            m.elapsed = start.elapsed();
            m
        })
        .collect()
}

fn sized(config: &SuiteConfig, full: usize, quick: usize) -> usize {
    match config.effort {
        Effort::Full => full,
        Effort::Quick => quick,
    }
}

fn random_state(window: LatticeWindow, stream: &mut NoiseStream, scale: f64) -> State {
    let values = (0..window.site_count())
        .map(|_| scale * (2.0 * stream.uniform() - 1.0))
        .collect();
    State::from_values(window, values).expect("sized to window")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn operator_identities(config: &SuiteConfig, m: &mut Measurement) -> Result<()> {
    let mut worst_identity = 0.0f64;
    let mut worst_energy = 0.0f64;
    let mut stream = NoiseStream::new(config.seed, 1);
    for dim in 1..=2 {
        for radius in 0..=4 {
            let window = LatticeWindow::new(dim, radius)?;
            for _ in 0..200 {
                let u = random_state(window, &mut stream, 1.0);
                let au = apply_a(&u);
                let mut sum = State::zeros(window);
                let mut energy = 0.0;
                for j in 1..=dim {
                    let b = apply_b(j, &u)?;
                    energy += b.dot(&b)?;
                    let back = apply_b_star(&b);
                    for (s, x) in sum.values_mut().iter_mut().zip(back.values()) {
                        *s += x;
                    }
                }
                worst_identity = worst_identity.max(au.sub(&sum)?.norm() / au.norm().max(1e-300));
                worst_energy = worst_energy.max(rel(au.dot(&u)?, energy));
            }
        }
    }
    m.metric("max_identity_rel", worst_identity);
    m.metric("max_energy_rel", worst_energy);
    m.check("A = sum B*B", move |t| worst_identity <= t.operator_rel);
    m.check("(Au,u) = |Bu|^2", move |t| worst_energy <= t.operator_rel);
    Ok(())
}

fn structural_conditions(config: &SuiteConfig, m: &mut Measurement) -> Result<()> {
    let model = Model::new(tanh_benchmark())?;
    let window = model.window();
    let r = model.report().clone();
    let mut stream = NoiseStream::new(config.seed, 2);
    let mut min_monotone = f64::INFINITY;
    let mut growth_excess = f64::NEG_INFINITY;
    let mut lipschitz_excess = f64::NEG_INFINITY;
    for _ in 0..10_000 {
        let u = random_state(window, &mut stream, 5.0);
        let w = random_state(window, &mut stream, 5.0);
        let diff = model.f_eval(&u)?.sub(&model.f_eval(&w)?)?;
        min_monotone = min_monotone.min(diff.dot(&u.sub(&w)?)?);

        // Growth and Lipschitz bounds concern the state-dependent part.
        let mut growth = 0.0;
        for k in 0..model.modes() {
            growth += model.sigma_k_eval(k, &u)?.norm_sq();
        }
        let growth_rhs = 2.0 * r.alpha * r.alpha * r.delta_norm_sq * (1.0 + u.norm_sq());
        growth_excess = growth_excess.max((growth - growth_rhs) / growth_rhs.max(1e-300));

        // Pairs inside the ball of radius R.
        let (us, ws) = (u.norm(), w.norm());
        let shrink = |x: &State, n: f64| -> State {
            let f = if n > r.radius { r.radius / n } else { 1.0 };
            State::from_values(window, x.values().iter().map(|v| v * f).collect()).expect("same window")
        };
        let (ub, wb) = (shrink(&u, us), shrink(&w, ws));
        let mut lip_ball = 0.0;
        for k in 0..model.modes() {
            lip_ball += model.sigma_k_eval(k, &ub)?.sub(&model.sigma_k_eval(k, &wb)?)?.norm_sq();
        }
        let lip_rhs = r.sigma_lipschitz.powi(2) * r.delta_norm_sq * ub.sub(&wb)?.norm_sq();
        lipschitz_excess = lipschitz_excess.max((lip_ball - lip_rhs) / lip_rhs.max(1e-300));
    }
    m.metric("min_monotone", min_monotone);
    m.metric("growth_excess", growth_excess);
    m.metric("lipschitz_excess", lipschitz_excess);
    m.check("monotone drift", move |t| min_monotone >= -t.monotone_floor);
    m.check("growth bound", move |t| growth_excess <= t.bound_slack);
    m.check("lipschitz bound", move |t| lipschitz_excess <= t.bound_slack);
    Ok(())
}

/// A random model satisfying every structural condition.
fn random_valid_spec(stream: &mut NoiseStream) -> ModelSpec {
    let u = |s: &mut NoiseStream, lo: f64, hi: f64| lo + (hi - lo) * s.uniform();
    let dim = 1 + (stream.uniform() * 2.0) as usize;
    let radius = (stream.uniform() * 3.0) as usize;
    let gamma = u(stream, -1.0, 0.0);
    // F0' = a1 + 3 a3 s^2 + 5 a5 s^4 >= a1 >= gamma.
    let f0 = vec![0.0, u(stream, gamma, 1.0), 0.0, u(stream, 0.0, 1.0), 0.0, u(stream, 0.0, 0.2)];
    let window = LatticeWindow::new(dim, radius).expect("valid window");
    let site = |s: &mut NoiseStream| -> Vec<i64> {
        let flat = (s.uniform() * window.site_count() as f64) as usize;
        window.multi_index(flat.min(window.site_count() - 1)).expect("in window")
    };
    let modes = 1 + (stream.uniform() * 2.0) as usize;
    let noise = (0..modes)
        .map(|_| {
            let c = u(stream, 0.0, 1.0);
            let sigma0 = match (stream.uniform() * 3.0) as usize {
                0 => Sigma0::Zero,
                1 => Sigma0::Linear { c },
                _ => Sigma0::Tanh { c },
            };
            let h_site = site(stream);
            let h = if stream.uniform() < 0.5 {
                ForcingSpec::constant(h_site, u(stream, -1.0, 1.0))
            } else {
                ForcingSpec {
                    terms: vec![ForcingTerm {
                        site: h_site,
                        waveform: Waveform::Sinusoid {
                            amplitude: u(stream, -1.0, 1.0),
                            omega: u(stream, 0.0, 10.0),
                            phase: u(stream, 0.0, 6.0),
                        },
                    }],
                }
            };
            NoiseMode {
                sigma0,
                delta: vec![DeltaEntry {
                    site: site(stream),
                    value: u(stream, -1.0, 1.0),
                }],
                h,
            }
        })
        .collect();
    ModelSpec {
        window: WindowSpec { dim, radius },
        drift: DriftSpec {
            nu: u(stream, 0.1, 1.0),
            gamma,
            f0,
            g: ForcingSpec::constant(site(stream), u(stream, -1.0, 1.0)),
        },
        noise: NoiseSpec { modes: noise },
        horizon: 1.0,
        stability_radius: 5.0,
    }
}

fn skeleton_correctness(config: &SuiteConfig, m: &mut Measurement) -> Result<()> {
    let mut spec = additive_benchmark();
    spec.noise = NoiseSpec::default();
    let model = Model::new(spec)?;
    let grid = TimeGrid::new(1.0, 100)?;
    let u0 = State::constant(model.window(), 1.0);
    let path = solve(&model, &u0, &Control::zeros(grid, 0))?;
    let decay_err = path
        .states
        .iter()
        .enumerate()
        .map(|(i, s)| (s.values()[0] - (-grid.time(i)).exp()).abs())
        .fold(0.0, f64::max);

    let mut stream = NoiseStream::new(config.seed, 3);
    let mut violations = 0usize;
    let mut min_margin = f64::INFINITY;
    let grid = TimeGrid::new(1.0, 200)?;
    for _ in 0..100 {
        let model = Model::new(random_valid_spec(&mut stream))?;
        let u0 = random_state(model.window(), &mut stream, 1.0);
        let v = random_level_control(grid, model.modes(), 4.0, &mut stream);
        let path = solve(&model, &u0, &v)?;
        let sup = path.sup_norm_sq();
        let bound = apriori_bound(&model, &u0, &v);
        if sup > bound {
            violations += 1;
        }
        min_margin = min_margin.min(bound / sup.max(1e-300));
    }
    m.metric("decay_max_err", decay_err);
    m.metric("bound_violations", violations as f64);
    m.metric("min_bound_over_sup", min_margin);
    m.check("exponential decay", move |t| decay_err <= t.skeleton_abs);
    m.check("a priori bound", move |_| violations == 0);
    Ok(())
}

fn weak_convergence(_config: &SuiteConfig, m: &mut Measurement) -> Result<()> {
    const STEPS: usize = 400;
    let grid = TimeGrid::new(1.0, STEPS)?;
    let ns = [1, 2, 4, 8, 16];
    let cases = [
        ("additive", Model::new(additive_benchmark())?, None, vec![0.0], vec![1.0]),
        ("tanh", Model::new(tanh_benchmark())?, Some(()), vec![0.5, -0.3], vec![1.0, 1.0]),
    ];
    for (label, model, tanh, v, w) in cases {
        let u0 = match tanh {
            Some(()) => tanh_initial(model.window()),
            None => State::zeros(model.window()),
        };
        let base = Control::constant(grid, &v);
        let rows = weak_convergence_probe(&model, &u0, &base, &w, &ns)?;
        let d: Vec<f64> = rows.iter().map(|r| r.distance).collect();
        for (row, dn) in rows.iter().zip(&d) {
            m.metric(format!("{label}_d{}", row.n), *dn);
        }
        let monotone = d.windows(2).all(|p| p[1] <= p[0]);
        let (d1, d16) = (d[0], d[4]);
        m.check(format!("{label} non-increasing"), move |_| monotone);
        m.check(format!("{label} d16 decay"), move |t| {
            d16 <= (d1 / t.weak_ratio).max(t.weak_floor / STEPS as f64)
        });
    }
    Ok(())
}

/// Worst relative error between the adjoint gradient and central
/// differences over `count` random coordinates.
pub fn gradient_check(
    model: &Model,
    u0: &State,
    target: &Trajectory,
    v: &Control,
    lambda: f64,
    count: usize,
    seed: u64,
) -> Result<f64> {
    let grad = adjoint_gradient(model, u0, target, v, lambda)?;
    let mut stream = NoiseStream::new(seed, 0);
    let len = v.values().len();
    let mut worst = 0.0f64;
    for _ in 0..count {
        let i = ((stream.uniform() * len as f64) as usize).min(len - 1);
        let h = 1e-5 * (1.0 + v.values()[i].abs());
        let mut values = v.values().to_vec();
        values[i] += h;
        let plus = tracking_objective(model, u0, target, &Control::new(*v.grid(), v.modes(), values.clone())?, lambda)?;
        values[i] -= 2.0 * h;
        let minus = tracking_objective(model, u0, target, &Control::new(*v.grid(), v.modes(), values)?, lambda)?;
        let fd = (plus - minus) / (2.0 * h);
        let g = grad.values()[i];
        worst = worst.max((fd - g).abs() / g.abs().max(fd.abs()).max(1e-300));
    }
    Ok(worst)
}

fn gradient_exactness(config: &SuiteConfig, m: &mut Measurement) -> Result<()> {
    let grid = TimeGrid::new(1.0, 100)?;
    for (label, spec) in [("additive", additive_benchmark()), ("tanh", tanh_benchmark())] {
        let model = Model::new(spec)?;
        let u0 = if label == "tanh" {
            tanh_initial(model.window())
        } else {
            State::constant(model.window(), 0.3)
        };
        let mut stream = NoiseStream::new(config.seed, 5);
        let reference = random_level_control(grid, model.modes(), 2.0, &mut stream);
        let target = solve_euler(&model, &u0, &reference)?;
        let v = random_level_control(grid, model.modes(), 1.0, &mut stream);
        let worst = gradient_check(&model, &u0, &target, &v, 1e2, 20, config.seed)?;
        m.metric(format!("{label}_max_rel_err"), worst);
        m.check(format!("{label} gradient"), move |t| worst <= t.gradient_rel);
    }
    Ok(())
}

fn rate_oracle_agreement(config: &SuiteConfig, m: &mut Measurement) -> Result<()> {
    let model = Model::new(additive_benchmark())?;
    let u0 = State::zeros(model.window());
    let options = RateOptions::default();

    let mut cases: Vec<(String, Trajectory)> = Vec::new();
    let grid = TimeGrid::new(1.0, 1000)?;
    let linear = (0..=grid.steps).map(|i| State::constant(model.window(), grid.time(i))).collect();
    cases.push(("linear".into(), Trajectory::new(grid, linear)?));

    let grid = TimeGrid::new(1.0, 200)?;
    let mut stream = NoiseStream::new(config.seed, 6);
    for j in 0..sized(config, 10, 3) {
        let a: Vec<f64> = (0..3).map(|_| stream.standard_normal()).collect();
        let k = 1.0 + (stream.uniform() * 3.0).floor();
        let phi = |t: f64| a[0] * t + a[1] * t * t + a[2] * (std::f64::consts::PI * k * t).sin();
        let states = (0..=grid.steps).map(|i| State::constant(model.window(), phi(grid.time(i)))).collect();
        cases.push((format!("random{j}"), Trajectory::new(grid, states)?));
    }

    let mut worst_rel = 0.0f64;
    let mut worst_residual = 0.0f64;
    let mut all_finite = true;
    for (label, target) in &cases {
        let oracle = additive_oracle(&model, &u0, target)?;
        let est = rate_estimate(&model, &u0, target, &options)?;
        all_finite &= oracle.cost.is_finite();
        let e = rel(est.cost, oracle.cost.max(1e-9));
        worst_rel = worst_rel.max(e);
        worst_residual = worst_residual.max(est.residual);
        if label == "linear" {
            m.metric("linear_oracle", oracle.cost);
            m.metric("linear_estimate", est.cost);
            m.metric("linear_residual", est.residual);
        }
    }
    m.metric("max_rel_err", worst_rel);
    m.metric("max_residual", worst_residual);
    m.check("oracle finite", move |_| all_finite);
    m.check("estimate vs oracle", move |t| worst_rel <= t.oracle_rel);
    m.check("residual", move |t| worst_residual < t.residual);
    Ok(())
}

fn endpoint_rate_ou(_config: &SuiteConfig, m: &mut Measurement) -> Result<()> {
    let model = Model::new(additive_benchmark())?;
    let grid = TimeGrid::new(1.0, 400)?;
    let u0 = State::zeros(model.window());
    let direction = State::constant(model.window(), 1.0);
    let est = endpoint_rate(&model, &u0, grid, &direction, 1.0, &RateOptions::default())?;
    let exact = ou_endpoint_rate(1.0);
    let e = rel(est.rate, exact);
    m.metric("rate", est.rate);
    m.metric("exact", exact);
    m.metric("rel_err", e);
    m.metric("terminal_value", est.terminal_value);
    m.check("endpoint rate", move |t| e <= t.endpoint_rel);
    Ok(())
}

fn ldp_curve_ou(config: &SuiteConfig, m: &mut Measurement) -> Result<()> {
    let model = Model::new(additive_benchmark())?;
    let grid = TimeGrid::new(1.0, OU_STEPS)?;
    let u0 = State::zeros(model.window());
    let event = EventSpec::EndpointHalfSpace {
        direction: vec![1.0],
        level: 1.0,
    };
    let s = ou_variance().sqrt();
    let samples = sized(config, 1_000_000, 20_000);
    let mut worst_sigmas = 0.0f64;
    for eps in [0.5, 0.2] {
        let cfg = SdeConfig {
            eps,
            grid,
            seed: config.seed,
            ensemble_size: samples,
        };
        let est = tail_probability(&model, &cfg, &u0, &event, None)?;
        let exact = gaussian_tail(1.0 / (eps.sqrt() * s));
        let se = (exact * (1.0 - exact) / samples as f64).sqrt();
        let z = (est.p_hat - exact).abs() / se;
        worst_sigmas = worst_sigmas.max(z);
        m.metric(format!("p_hat_eps{eps}"), est.p_hat);
        m.metric(format!("p_exact_eps{eps}"), exact);
    }
    m.metric("max_std_errors", worst_sigmas);

    let rate = ou_endpoint_rate(1.0);
    let eps_list: [f64; 6] = [0.5, 0.2, 0.1, 0.05, 0.02, 0.01];
    let curve: Vec<f64> = eps_list
        .iter()
        .map(|&eps| -eps * log_gaussian_tail(1.0 / (eps.sqrt() * s)))
        .collect();
    let monotone = curve.windows(2).all(|p| p[1] < p[0]) && curve.iter().all(|&c| c > rate);
    let last = rel(curve[curve.len() - 1], rate);
    m.metric("analytic_eps0.5", curve[0]);
    m.metric("analytic_eps0.2", curve[1]);
    m.metric("analytic_eps0.01", curve[5]);
    m.check("mc vs exact tail", move |t| worst_sigmas <= t.mc_sigmas);
    m.check("analytic curve decreases to rate", move |_| monotone);
    m.check("analytic curve at eps 0.01", move |t| last <= t.analytic_rel);
    Ok(())
}

fn laplace_principle(config: &SuiteConfig, m: &mut Measurement) -> Result<()> {
    let model = Model::new(additive_benchmark())?;
    let grid = TimeGrid::new(1.0, 400)?;
    let u0 = State::constant(model.window(), 1.0);
    let h = PathFunctional::TerminalQuadratic {
        center: vec![0.0],
        weight: 1.0,
    };
    let limit = ou_laplace_value(0.0);
    let samples = sized(config, 100_000, 5_000);
    let mut smallest = None;
    for eps in [0.1, 0.03, 0.01] {
        let cfg = SdeConfig {
            eps,
            grid,
            seed: config.seed,
            ensemble_size: samples,
        };
        let est = laplace_functional(&model, &cfg, &u0, &h)?;
        m.metric(format!("mc_eps{eps}"), est.value);
        m.metric(format!("exact_eps{eps}"), ou_laplace_value(eps));
        smallest = Some(est);
    }
    let est = smallest.expect("non-empty list");
    let variational = laplace_variational(&model, &u0, grid, &h, &RateOptions::default())?;
    let var_err = rel(variational.value, limit);
    let gap = (est.value - limit).abs();
    let se = est.std_err;
    m.metric("limit", limit);
    m.metric("variational", variational.value);
    m.check("mc at smallest eps", move |t| gap <= t.laplace_rel * limit + t.laplace_sigmas * se);
    m.check("variational value", move |t| var_err <= t.variational_rel);
    Ok(())
}

fn small_noise_probe(config: &SuiteConfig, m: &mut Measurement) -> Result<()> {
    let grid = TimeGrid::new(1.0, 200)?;
    let eps_list = [1e-1, 1e-2, 1e-3];
    let samples = sized(config, 2000, 200);
    for label in ["additive", "tanh"] {
        let (model, u0, v) = if label == "additive" {
            let model = Model::new(additive_benchmark())?;
            let u0 = State::zeros(model.window());
            (model, u0, Control::constant(grid, &[1.0]))
        } else {
            let model = Model::new(tanh_benchmark())?;
            let u0 = tanh_initial(model.window());
            (model, u0, Control::constant(grid, &[0.5, -0.3]))
        };
        let cfg = SdeConfig {
            eps: eps_list[0],
            grid,
            seed: config.seed,
            ensemble_size: samples,
        };
        let rows = h1_probe(&model, &cfg, &u0, &v, &eps_list)?;
        let d: Vec<f64> = rows.iter().map(|r| r.mean_distance).collect();
        for (eps, dn) in eps_list.iter().zip(&d) {
            m.metric(format!("{label}_eps{eps}"), *dn);
        }
        let decreasing = d.windows(2).all(|p| p[1] < p[0]);
        m.check(format!("{label} decreasing"), move |_| decreasing);
        if label == "additive" {
            let ratios: Vec<f64> = d.windows(2).map(|p| p[0] / p[1]).collect();
            let worst = ratios
                .iter()
                .map(|r| rel(*r, 10f64.sqrt()))
                .fold(0.0, f64::max);
            m.metric("additive_sqrt_scaling_err", worst);
            m.check("additive sqrt(eps) scaling", move |t| worst <= t.sqrt_rel);
        }
    }
    Ok(())
}

fn uniform_moments(config: &SuiteConfig, m: &mut Measurement) -> Result<()> {
    let grid = TimeGrid::new(1.0, 200)?;
    let samples = sized(config, 2000, 200);
    for label in ["additive", "tanh"] {
        let (model, u0) = if label == "additive" {
            let model = Model::new(additive_benchmark())?;
            let u0 = State::constant(model.window(), 1.0);
            (model, u0)
        } else {
            let model = Model::new(tanh_benchmark())?;
            let u0 = tanh_initial(model.window());
            (model, u0)
        };
        let bound = moment_bound(&model, u0.norm_sq(), 0.0);
        let mut worst = 0.0f64;
        for eps in [1e-1, 1e-2, 1e-3] {
            let cfg = SdeConfig {
                eps,
                grid,
                seed: config.seed,
                ensemble_size: samples,
            };
            let est = ensemble_sup_sq(&model, &cfg, &u0, None)?;
            m.metric(format!("{label}_eps{eps}"), est.mean);
            worst = worst.max(est.ci_high);
        }
        m.metric(format!("{label}_bound"), bound);
        m.check(format!("{label} bounded"), move |_| worst <= bound);
    }
    Ok(())
}

/// Outputs of a representative slice of every stochastic entry point,
/// rendered exactly.
pub fn stochastic_fingerprint(seed: u64, effort: Effort) -> Result<String> {
    let small = effort == Effort::Quick;
    let additive = Model::new(additive_benchmark())?;
    let tanh = Model::new(tanh_benchmark())?;
    let grid = TimeGrid::new(1.0, 100)?;
    let zero = State::zeros(additive.window());
    let u0 = tanh_initial(tanh.window());
    let cfg = |eps: f64, n: usize| SdeConfig {
        eps,
        grid,
        seed,
        ensemble_size: n,
    };
    let mut out = String::new();
    let event = EventSpec::EndpointHalfSpace {
        direction: vec![1.0],
        level: 1.0,
    };
    let tail = tail_probability(&additive, &cfg(0.5, if small { 2000 } else { 20_000 }), &zero, &event, None)?;
    out.push_str(&format!("{tail:?}\n"));
    let probe = h1_probe(&tanh, &cfg(0.1, 200), &u0, &Control::constant(grid, &[0.5, -0.3]), &[0.1, 0.01])?;
    out.push_str(&format!("{probe:?}\n"));
    let moments = ensemble_sup_sq(&tanh, &cfg(0.1, 500), &u0, None)?;
    out.push_str(&format!("{moments:?}\n"));
    let level = level_set_probe(&additive, &zero, grid, 4.0, 32, seed)?;
    out.push_str(&format!("{level:?}\n"));
    Ok(out)
}

#[cfg(feature = "parallel")]
fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| crate::Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(not(feature = "parallel"))]
fn with_threads<T: Send>(_threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    Ok(f())
}

fn determinism(config: &SuiteConfig, m: &mut Measurement) -> Result<()> {
    let one = with_threads(1, || stochastic_fingerprint(config.seed, config.effort))??;
    let many = with_threads(3, || stochastic_fingerprint(config.seed, config.effort))??;
    let again = with_threads(3, || stochastic_fingerprint(config.seed, config.effort))??;
    let identical = one == many && many == again;
    m.metric("fingerprint_bytes", one.len() as f64);
    m.check("identical across thread counts", move |_| identical);
    Ok(())
}
