//! Euler-Maruyama simulation of the noise-scaled lattice system
//!
//! `du = (-nu A u - f(u) - gamma u + g) dt + sigma(t, u) v dt + sqrt(eps) sigma(t, u) dW`
//!
//! where the control term `sigma(t, u) v` is present only when a control is
//! supplied (the shifted system obtained by translating the Wiener process).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{norm_sq, State};
use crate::model::Model;
use crate::rng::NoiseStream;
use crate::skeleton::Control;

/// Uniform grid `t_m = m T / M`, `m = 0..=M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        let grid = Self { horizon, steps };
        grid.check()?;
        Ok(grid)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidGrid(format!("horizon {}", self.horizon)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidGrid("at least one step required".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, m: usize) -> f64 {
        m as f64 * self.dt()
    }

    /// Checks `dt (4 N nu + |gamma| + L_R) <= 1`.
    pub fn check_stability(&self, model: &Model) -> Result<()> {
        let rate = model.stability_rate();
        let product = self.dt() * rate;
        if product > 1.0 {
            return Err(Error::StabilityGuard { rate, product });
        }
        Ok(())
    }

    pub(crate) fn ensure_same(&self, other: &TimeGrid) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeConfig {
    /// Noise intensity.
    pub eps: f64,
    pub grid: TimeGrid,
    pub seed: u64,
    pub ensemble_size: usize,
}

impl SdeConfig {
    pub fn check(&self) -> Result<()> {
        self.grid.check()?;
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidConfig(format!("eps = {}", self.eps)));
        }
        if self.ensemble_size == 0 {
            return Err(Error::InvalidConfig("ensemble_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Time-gridded path with the sup-norm metric of `C([0,T], l^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub states: Vec<State>,
}

impl Trajectory {
    pub fn new(grid: TimeGrid, states: Vec<State>) -> Result<Self> {
        if states.len() != grid.steps + 1 {
            return Err(Error::GridMismatch(format!(
                "{} states for {} steps",
                states.len(),
                grid.steps
            )));
        }
        Ok(Self { grid, states })
    }

    pub fn initial(&self) -> &State {
        &self.states[0]
    }

    pub fn terminal(&self) -> &State {
        self.states.last().expect("trajectory has M+1 states")
    }

    /// `max_m |u(t_m)|^2`.
    pub fn sup_norm_sq(&self) -> f64 {
        self.states.iter().map(State::norm_sq).fold(0.0, f64::max)
    }

    /// `max_m |u(t_m) - w(t_m)|`.
    pub fn sup_distance(&self, other: &Trajectory) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        let mut worst: f64 = 0.0;
        for (a, b) in self.states.iter().zip(&other.states) {
            worst = worst.max(a.sub(b)?.norm());
        }
        Ok(worst)
    }
}

/// One explicit step `u + dt drift(t, u) + sqrt(eps) sigma(t, u) dW`.
pub fn em_step(model: &Model, t: f64, u: &State, dt: f64, eps: f64, dw: &[f64]) -> Result<State> {
    if u.window() != model.window() {
        return Err(Error::WindowMismatch("state and model windows differ".into()));
    }
    if dw.len() != model.modes() {
        return Err(Error::DimensionMismatch {
            expected: model.modes(),
            got: dw.len(),
        });
    }
    let mut drift = vec![0.0; u.values().len()];
    model.drift_into(t, u.values(), &mut drift);
    let mut next: Vec<f64> = u
        .values()
        .iter()
        .zip(&drift)
        .map(|(x, d)| x + dt * d)
        .collect();
    model.sigma_apply_add(t, u.values(), dw, eps.sqrt(), &mut next);
    if next.iter().any(|x| !x.is_finite()) {
        return Err(Error::SimulationBlowup { sample: 0, step: 0 });
    }
    State::from_values(model.window(), next)
}

/// Reusable work buffers for stepping one path.
pub(crate) struct Stepper<'a> {
    model: &'a Model,
    grid: TimeGrid,
    sqrt_eps: f64,
    control: Option<&'a Control>,
    drift: Vec<f64>,
    dw: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub(crate) fn new(model: &'a Model, grid: TimeGrid, eps: f64, control: Option<&'a Control>) -> Self {
        Self {
            model,
            grid,
            sqrt_eps: eps.sqrt(),
            control,
            drift: vec![0.0; model.window().site_count()],
            dw: vec![0.0; model.modes()],
        }
    }

    /// Runs one sample path, calling `visit(m, u)` at every node including
    /// the initial one. Returns `sum_m v_m . dW_m` (zero without control).
    pub(crate) fn run(
        &mut self,
        seed: u64,
        sample: u64,
        u0: &[f64],
        mut visit: impl FnMut(usize, &[f64]),
    ) -> Result<f64> {
        let dt = self.grid.dt();
        let mut noise = NoiseStream::new(seed, sample);
        let mut u = u0.to_vec();
        let mut pairing = 0.0;
        visit(0, &u);
        for m in 0..self.grid.steps {
            let t = self.grid.time(m);
            noise.fill_normal(dt, &mut self.dw);
            self.model.drift_into(t, &u, &mut self.drift);
            if let Some(v) = self.control {
                let vm = v.value(m);
                self.model.sigma_apply_add(t, &u, vm, 1.0, &mut self.drift);
                pairing += vm.iter().zip(&self.dw).map(|(a, b)| a * b).sum::<f64>();
            }
            self.drift.iter_mut().for_each(|d| *d *= dt);
            if self.sqrt_eps > 0.0 {
                self.model
                    .sigma_apply_add(t, &u, &self.dw, self.sqrt_eps, &mut self.drift);
            }
            for (x, d) in u.iter_mut().zip(&self.drift) {
                *x += d;
            }
            if u.iter().any(|x| !x.is_finite()) {
                return Err(Error::SimulationBlowup {
                    sample,
                    step: m + 1,
                });
            }
            visit(m + 1, &u);
        }
        Ok(pairing)
    }
}

fn check_inputs(model: &Model, config: &SdeConfig, u0: &State, control: Option<&Control>) -> Result<()> {
    config.check()?;
    if u0.window() != model.window() {
        return Err(Error::WindowMismatch("initial state and model windows differ".into()));
    }
    if let Some(v) = control {
        config.grid.ensure_same(v.grid())?;
        if v.modes() != model.modes() {
            return Err(Error::DimensionMismatch {
                expected: model.modes(),
                got: v.modes(),
            });
        }
    }
    config.grid.check_stability(model)
}

/// Sample path number `sample` of the ensemble described by `config`.
pub fn simulate_sample(
    model: &Model,
    config: &SdeConfig,
    sample: u64,
    u0: &State,
    control: Option<&Control>,
) -> Result<Trajectory> {
    check_inputs(model, config, u0, control)?;
    let window = model.window();
    let mut states = Vec::with_capacity(config.grid.steps + 1);
    Stepper::new(model, config.grid, config.eps, control).run(
        config.seed,
        sample,
        u0.values(),
        |_, u| states.push(State::from_values(window, u.to_vec()).expect("window sized")),
    )?;
    Trajectory::new(config.grid, states)
}

/// First sample path of the ensemble.
pub fn simulate(model: &Model, config: &SdeConfig, u0: &State, control: Option<&Control>) -> Result<Trajectory> {
    simulate_sample(model, config, 0, u0, control)
}

/// Per-sample accumulator result together with `sum_m v_m . dW_m`.
pub struct SampleOutcome<A> {
    pub value: A,
    pub control_pairing: f64,
}

/// Runs every sample of the ensemble, folding each path into an accumulator.
/// Results come back in sample order regardless of how many workers ran.
pub fn ensemble_fold<A, I, V>(
    model: &Model,
    config: &SdeConfig,
    u0: &State,
    control: Option<&Control>,
    init: I,
    visit: V,
) -> Result<Vec<SampleOutcome<A>>>
where
    A: Send,
    I: Fn() -> A + Sync,
    V: Fn(&mut A, usize, &[f64]) + Sync,
{
    check_inputs(model, config, u0, control)?;
    let run_one = |sample: usize| -> Result<SampleOutcome<A>> {
        let mut stepper = Stepper::new(model, config.grid, config.eps, control);
        let mut acc = init();
        let control_pairing = stepper.run(config.seed, sample as u64, u0.values(), |m, u| visit(&mut acc, m, u))?;
        Ok(SampleOutcome {
            value: acc,
            control_pairing,
        })
    };
    let n = config.ensemble_size;
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().with_min_len(64).map(run_one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(run_one).collect()
    }
}

/// Monte-Carlo mean with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: usize,
}

pub(crate) const Z95: f64 = 1.959_963_984_540_054;

impl MomentEstimate {
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let std_err = (var / n).sqrt();
        Ok(Self {
            mean,
            std_err,
            ci_low: mean - Z95 * std_err,
            ci_high: mean + Z95 * std_err,
            samples: xs.len(),
        })
    }
}

/// Estimate of `E sup_t |u(t)|^2` over an ensemble of stored paths.
pub fn moment_sup_sq(ensemble: &[Trajectory]) -> Result<MomentEstimate> {
    let sups: Vec<f64> = ensemble.iter().map(Trajectory::sup_norm_sq).collect();
    MomentEstimate::from_samples(&sups)
}

/// Same estimate without storing the paths.
pub fn ensemble_sup_sq(
    model: &Model,
    config: &SdeConfig,
    u0: &State,
    control: Option<&Control>,
) -> Result<MomentEstimate> {
    let outcomes = ensemble_fold(model, config, u0, control, || 0.0f64, |acc, _, u| {
        *acc = acc.max(norm_sq(u));
    })?;
    let sups: Vec<f64> = outcomes.into_iter().map(|o| o.value).collect();
    MomentEstimate::from_samples(&sups)
}

/// Gronwall bound `c1 exp(c2 T)` on `E sup_t |u(t)|^2` for the shifted
/// system driven by a control with `int_0^T |v|^2 <= level` (level 0 for the
/// uncontrolled system). Valid uniformly in `eps < 1`.
pub fn moment_bound(model: &Model, u0_norm_sq: f64, level: f64) -> f64 {
    let r = model.report();
    let t = model.horizon();
    let ad = r.alpha * r.alpha * r.delta_norm_sq;
    let factor = 37.0 + 4.0 * level;
    let c1 = 2.0 * u0_norm_sq
        + 8.0 * ad * t * factor
        + 4.0 * t * factor * r.h_sup_sq
        + 2.0 * model.g_energy_bound();
    let c2 = 2.0 * (1.0 - 2.0 * model.gamma() + 4.0 * ad * factor);
    c1 * (c2 * t).exp()
}
