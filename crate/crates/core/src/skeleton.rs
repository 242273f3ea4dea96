//! The controlled (skeleton) equation
//!
//! `u' = -nu A u - f(u) - gamma u + g(t) + sigma(t, u) v(t)`,  `u(0) = u0`,
//!
//! together with probes that measure its continuity in the control: the
//! Gronwall a priori bound, the Lipschitz estimate in `(u0, v)`, strong
//! convergence under weakly converging controls, and compactness of the
//! image of an energy ball.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{norm_sq, State};
use crate::model::Model;
use crate::rng::NoiseStream;
use crate::sde::{TimeGrid, Trajectory};

/// Piecewise-constant control: `values[m]` holds on `[t_m, t_{m+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Control {
    grid: TimeGrid,
    modes: usize,
    /// Row-major `steps x modes`.
    values: Vec<f64>,
}

impl Control {
    pub fn new(grid: TimeGrid, modes: usize, values: Vec<f64>) -> Result<Self> {
        grid.check()?;
        if values.len() != grid.steps * modes {
            return Err(Error::DimensionMismatch {
                expected: grid.steps * modes,
                got: values.len(),
            });
        }
        Ok(Self {
            grid,
            modes,
            values,
        })
    }

    pub fn zeros(grid: TimeGrid, modes: usize) -> Self {
        Self {
            grid,
            modes,
            values: vec![0.0; grid.steps * modes],
        }
    }

    pub fn constant(grid: TimeGrid, value: &[f64]) -> Self {
        let values = (0..grid.steps).flat_map(|_| value.iter().copied()).collect();
        Self {
            grid,
            modes: value.len(),
            values,
        }
    }

    /// Samples `f` at cell midpoints, which is the exact cell average for
    /// affine controls.
    pub fn from_fn(grid: TimeGrid, modes: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let dt = grid.dt();
        let mut values = Vec::with_capacity(grid.steps * modes);
        for m in 0..grid.steps {
            let v = f((m as f64 + 0.5) * dt);
            if v.len() != modes {
                return Err(Error::DimensionMismatch {
                    expected: modes,
                    got: v.len(),
                });
            }
            values.extend(v);
        }
        Ok(Self {
            grid,
            modes,
            values,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn value(&self, m: usize) -> &[f64] {
        &self.values[m * self.modes..(m + 1) * self.modes]
    }

    /// `int_0^T |v|^2 dt`.
    pub fn energy(&self) -> f64 {
        self.grid.dt() * norm_sq(&self.values)
    }

    /// `1/2 int_0^T |v|^2 dt`.
    pub fn cost(&self) -> f64 {
        0.5 * self.energy()
    }

    pub fn l2_distance_sq(&self, other: &Control) -> Result<f64> {
        self.grid.ensure_same(&other.grid)?;
        if self.modes != other.modes {
            return Err(Error::DimensionMismatch {
                expected: self.modes,
                got: other.modes,
            });
        }
        let d: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        Ok(self.grid.dt() * d)
    }

    pub fn scaled(&self, factor: f64) -> Control {
        Control {
            grid: self.grid,
            modes: self.modes,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

fn check_solve_inputs(model: &Model, u0: &State, v: &Control) -> Result<()> {
    if u0.window() != model.window() {
        return Err(Error::WindowMismatch("initial state and model windows differ".into()));
    }
    if v.modes() != model.modes() {
        return Err(Error::DimensionMismatch {
            expected: model.modes(),
            got: v.modes(),
        });
    }
    Ok(())
}

/// Right-hand side of the controlled equation with `v` frozen.
fn rhs(model: &Model, t: f64, u: &[f64], v: &[f64], out: &mut [f64]) {
    model.drift_into(t, u, out);
    model.sigma_apply_add(t, u, v, 1.0, out);
}

/// Solves the controlled equation with classical fourth-order Runge-Kutta on
/// the control's grid.
pub fn solve(model: &Model, u0: &State, v: &Control) -> Result<Trajectory> {
    check_solve_inputs(model, u0, v)?;
    let grid = *v.grid();
    let dt = grid.dt();
    let n = u0.values().len();
    let radius = model.report().radius;
    let window = model.window();
    let mut states = Vec::with_capacity(grid.steps + 1);
    states.push(u0.clone());
    let mut u = u0.values().to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for m in 0..grid.steps {
        let t = grid.time(m);
        let vm = v.value(m);
        rhs(model, t, &u, vm, &mut k1);
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * dt * k1[i];
        }
        rhs(model, t + 0.5 * dt, &tmp, vm, &mut k2);
        for i in 0..n {
            tmp[i] = u[i] + 0.5 * dt * k2[i];
        }
        rhs(model, t + 0.5 * dt, &tmp, vm, &mut k3);
        for i in 0..n {
            tmp[i] = u[i] + dt * k3[i];
        }
        rhs(model, t + dt, &tmp, vm, &mut k4);
        for i in 0..n {
            u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let norm = norm_sq(&u).sqrt();
        if !(norm <= radius) {
            return Err(Error::StepUnstable {
                step: m + 1,
                norm,
                radius,
            });
        }
        states.push(State::from_values(window, u.clone())?);
    }
    Trajectory::new(grid, states)
}

/// Explicit Euler solve of the controlled equation; the zero-noise limit of
/// the Euler-Maruyama scheme on the same grid.
pub fn solve_euler(model: &Model, u0: &State, v: &Control) -> Result<Trajectory> {
    check_solve_inputs(model, u0, v)?;
    let grid = *v.grid();
    let window = model.window();
    let mut states = Vec::with_capacity(grid.steps + 1);
    let mut path = euler_path(model, u0.values(), v);
    if path.iter().any(|x| !x.is_finite()) {
        let step = path
            .iter()
            .position(|x| !x.is_finite())
            .map_or(0, |p| p / u0.values().len());
        return Err(Error::SimulationBlowup { sample: 0, step });
    }
    let n = u0.values().len();
    for chunk in path.chunks_mut(n) {
        states.push(State::from_values(window, chunk.to_vec())?);
    }
    Trajectory::new(grid, states)
}

/// Flat `(M+1) x sites` explicit Euler path.
pub(crate) fn euler_path(model: &Model, u0: &[f64], v: &Control) -> Vec<f64> {
    let grid = v.grid();
    let dt = grid.dt();
    let n = u0.len();
    let mut path = Vec::with_capacity((grid.steps + 1) * n);
    path.extend_from_slice(u0);
    let mut u = u0.to_vec();
    let mut k = vec![0.0; n];
    for m in 0..grid.steps {
        rhs(model, grid.time(m), &u, v.value(m), &mut k);
        for (x, d) in u.iter_mut().zip(&k) {
            *x += dt * d;
        }
        path.extend_from_slice(&u);
    }
    path
}

/// Right side of the Gronwall estimate for `sup_t |u_v(t)|^2`.
pub fn apriori_bound(model: &Model, u0: &State, v: &Control) -> f64 {
    let r = model.report();
    let t = model.horizon().max(v.grid().horizon);
    let energy = v.energy();
    let ad4 = 4.0 * r.alpha * r.alpha * r.delta_norm_sq;
    let growth = ((2.0 - 2.0 * model.gamma()) * t + ad4 * energy).exp();
    let g_energy = r.g_sup_sq * t;
    growth * (u0.norm_sq() + ad4 * energy + g_energy + 2.0 * r.h_sup_sq * energy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuityReport {
    /// `|u_{v1} - u_{v2}|_C^2`.
    pub distance_sq: f64,
    /// `|u0_1 - u0_2|^2 + |v1 - v2|_{L^2}^2`.
    pub input_distance_sq: f64,
    /// Constant `C_1` of the Lipschitz estimate.
    pub constant: f64,
    /// `C_1` times the input distance.
    pub bound: f64,
    pub holds: bool,
}

impl ContinuityReport {
    pub fn ratio(&self) -> f64 {
        if self.input_distance_sq == 0.0 {
            0.0
        } else {
            self.distance_sq / self.input_distance_sq
        }
    }
}

/// Compares two controlled solutions against the Lipschitz estimate in the
/// initial data and the control.
pub fn continuity_check(
    model: &Model,
    u01: &State,
    u02: &State,
    v1: &Control,
    v2: &Control,
) -> Result<ContinuityReport> {
    let p1 = solve(model, u01, v1)?;
    let p2 = solve(model, u02, v2)?;
    let d = p1.sup_distance(&p2)?;
    let du0 = u01.sub(u02)?.norm_sq();
    let dv = v1.l2_distance_sq(v2)?;

    let r = model.report();
    let t = model.horizon().max(v1.grid().horizon);
    let c3 = apriori_bound(model, u01, v1).max(apriori_bound(model, u02, v2));
    let c5 = r.sigma_lipschitz;
    let c6_sq = 2.0 * (1.0 + c3);
    let r2 = v1.energy().max(v2.energy()).sqrt();
    let delta = r.delta_norm_sq.sqrt();
    let growth = ((2.0 - 2.0 * model.gamma()) * t + 2.0 * c5 * t.sqrt() * r2 * delta).exp();
    let control_factor = c6_sq * r.alpha * r.alpha * r.delta_norm_sq + r.h_sup_sq;
    let constant = growth * control_factor.max(1.0);
    let bound = growth * du0 + growth * control_factor * dv;
    let distance_sq = d * d;
    Ok(ContinuityReport {
        distance_sq,
        input_distance_sq: du0 + dv,
        constant,
        bound,
        holds: distance_sq <= bound * (1.0 + 1e-9) + 1e-300,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakProbeRow {
    pub n: u32,
    pub distance: f64,
}

/// `v_n = v + sin(2 pi n t) w`, discretised by exact cell averages of the
/// sine so that the sequence stays weakly null after discretisation.
pub fn oscillating_control(v: &Control, w: &[f64], n: u32) -> Result<Control> {
    if w.len() != v.modes() {
        return Err(Error::DimensionMismatch {
            expected: v.modes(),
            got: w.len(),
        });
    }
    let grid = *v.grid();
    let dt = grid.dt();
    let steps_per_period = 1.0 / (n as f64 * dt);
    if n == 0 || steps_per_period < 8.0 {
        return Err(Error::FrequencyTooHigh {
            n,
            steps: grid.steps,
        });
    }
    let omega = 2.0 * std::f64::consts::PI * n as f64;
    let mut out = v.clone();
    let modes = v.modes();
    for m in 0..grid.steps {
        let (a, b) = (grid.time(m), grid.time(m + 1));
        let avg = ((omega * a).cos() - (omega * b).cos()) / (omega * dt);
        for (k, wk) in w.iter().enumerate() {
            out.values_mut()[m * modes + k] += avg * wk;
        }
    }
    Ok(out)
}

/// Distances `d_n = |u_{v_n} - u_v|_C` along the oscillating family.
pub fn weak_convergence_probe(
    model: &Model,
    u0: &State,
    v: &Control,
    w: &[f64],
    n_list: &[u32],
) -> Result<Vec<WeakProbeRow>> {
    let base = solve(model, u0, v)?;
    n_list
        .iter()
        .map(|&n| {
            let vn = oscillating_control(v, w, n)?;
            let path = solve(model, u0, &vn)?;
            Ok(WeakProbeRow {
                n,
                distance: path.sup_distance(&base)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSample {
    pub index: usize,
    pub cost: f64,
    pub modulus: f64,
    pub tail_mass: f64,
    /// Index of the net centre covering this path.
    pub center: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompactnessReport {
    pub level: f64,
    /// `max` over samples of `max_m |u(t_{m+1}) - u(t_m)|`.
    pub modulus: f64,
    /// `max` over samples of `sup_t sum_{|i| > m'} u_i(t)^2`, `m' = m/2`.
    pub tail_mass: f64,
    pub net_radius: f64,
    pub net_size: usize,
    pub samples: Vec<LevelSample>,
}

pub const NET_RADIUS: f64 = 0.1;

/// Random smooth control with `int |v|^2 = level * U`, `U ~ Uniform(0, 1)`.
/// Each mode is a random combination of `cos(j pi t / T)`, `j = 0..=3`.
pub fn random_level_control(grid: TimeGrid, modes: usize, level: f64, stream: &mut NoiseStream) -> Control {
    const HARMONICS: usize = 4;
    let coeffs: Vec<f64> = (0..modes * HARMONICS)
        .map(|_| stream.standard_normal())
        .collect();
    let scale = stream.uniform();
    let horizon = grid.horizon;
    let raw = Control::from_fn(grid, modes, |t| {
        (0..modes)
            .map(|k| {
                (0..HARMONICS)
                    .map(|j| coeffs[k * HARMONICS + j] * (j as f64 * std::f64::consts::PI * t / horizon).cos())
                    .sum()
            })
            .collect()
    })
    .expect("modes match");
    let energy = raw.energy();
    if level <= 0.0 || energy == 0.0 {
        return Control::zeros(grid, modes);
    }
    raw.scaled((level * scale / energy).sqrt())
}

/// Samples controls from the energy ball `int |v|^2 <= level`, solves each
/// and reports equicontinuity, spatial tails and a greedy net size.
pub fn level_set_probe(
    model: &Model,
    u0: &State,
    grid: TimeGrid,
    level: f64,
    sample_count: usize,
    seed: u64,
) -> Result<CompactnessReport> {
    if sample_count < 2 {
        return Err(Error::InvalidConfig("sample_count must be at least 2".into()));
    }
    let window = model.window();
    let inner = window.radius() / 2;
    let tail_sites: Vec<usize> = (0..window.site_count())
        .filter(|&s| window.site_radius(s) > inner)
        .collect();

    let solve_one = |index: usize| -> Result<(Control, Trajectory)> {
        let mut stream = NoiseStream::new(seed, index as u64);
        let v = random_level_control(grid, model.modes(), level, &mut stream);
        let path = solve(model, u0, &v)?;
        Ok((v, path))
    };
    #[cfg(feature = "parallel")]
    let solved: Vec<(Control, Trajectory)> = {
        use rayon::prelude::*;
        (0..sample_count)
            .into_par_iter()
            .map(solve_one)
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let solved: Vec<(Control, Trajectory)> = (0..sample_count).map(solve_one).collect::<Result<_>>()?;

    let mut centers: Vec<usize> = Vec::new();
    let mut samples = Vec::with_capacity(sample_count);
    for (index, (v, path)) in solved.iter().enumerate() {
        let modulus = path
            .states
            .windows(2)
            .map(|p| p[1].sub(&p[0]).map(|d| d.norm()))
            .try_fold(0.0f64, |acc, d| d.map(|d| acc.max(d)))?;
        let tail_mass = path
            .states
            .iter()
            .map(|s| tail_sites.iter().map(|&i| s.values()[i].powi(2)).fold(0.0, |a, b| a + b))
            .fold(0.0, f64::max);
        let mut center = None;
        for (c, &ci) in centers.iter().enumerate() {
            if path.sup_distance(&solved[ci].1)? <= NET_RADIUS {
                center = Some(c);
                break;
            }
        }
        let center = center.unwrap_or_else(|| {
            centers.push(index);
            centers.len() - 1
        });
        samples.push(LevelSample {
            index,
            cost: v.cost(),
            modulus,
            tail_mass,
            center,
        });
    }
    Ok(CompactnessReport {
        level,
        modulus: samples.iter().map(|s| s.modulus).fold(0.0, f64::max),
        tail_mass: samples.iter().map(|s| s.tail_mass).fold(0.0, f64::max),
        net_radius: NET_RADIUS,
        net_size: centers.len(),
        samples,
    })
}
