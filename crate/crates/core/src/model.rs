//! Model description: drift, forcing and diffusion, with validation of the
//! structural conditions they must satisfy.
//!
//! The nonlinearity is `F0(s)` (a polynomial) and the drift of the lattice
//! system is `-nu A u - f(u) - gamma u + g(t)` with `f(s) = F0(s) - gamma s`.
//! Noise mode `k` contributes `h_k(t) + sigma_k(u)` with
//! `sigma_k(u)_i = delta_{k,i} sigma0_k(u_i)`.

use serde::{Deserialize, Serialize};

use crate::error::{Condition, Error, Result};
use crate::lattice::{apply_a_into, LatticeWindow, State};
use crate::poly::Polynomial;

/// Time signal attached to one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Waveform {
    Constant {
        value: f64,
    },
    /// `amplitude * cos(omega t + phase)`.
    Sinusoid {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
    /// Piecewise constant: `values[k]` on `[times[k], times[k+1])`, zero
    /// before `times[0]`, and `values.last()` after the last breakpoint.
    Table { times: Vec<f64>, values: Vec<f64> },
}

impl Waveform {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Waveform::Constant { value } => *value,
            Waveform::Sinusoid {
                amplitude,
                omega,
                phase,
            } => amplitude * (omega * t + phase).cos(),
            Waveform::Table { times, values } => {
                let k = times.partition_point(|&s| s <= t);
                if k == 0 {
                    0.0
                } else {
                    values[k - 1]
                }
            }
        }
    }

    /// `sup_t |w(t)|`.
    pub fn sup_abs(&self) -> f64 {
        match self {
            Waveform::Constant { value } => value.abs(),
            Waveform::Sinusoid { amplitude, .. } => amplitude.abs(),
            Waveform::Table { values, .. } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        let finite = match self {
            Waveform::Constant { value } => value.is_finite(),
            Waveform::Sinusoid {
                amplitude,
                omega,
                phase,
            } => amplitude.is_finite() && omega.is_finite() && phase.is_finite(),
            Waveform::Table { times, values } => {
                if times.len() != values.len() || times.is_empty() {
                    return Err("table needs matching, non-empty times and values".into());
                }
                if times.windows(2).any(|w| w[0] >= w[1]) {
                    return Err("table times must be strictly increasing".into());
                }
                times.iter().chain(values).all(|v| v.is_finite())
            }
        };
        if finite {
            Ok(())
        } else {
            Err("non-finite waveform parameter".into())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingTerm {
    pub site: Vec<i64>,
    pub waveform: Waveform,
}

/// Finitely supported, per-site time signal.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ForcingSpec {
    pub terms: Vec<ForcingTerm>,
}

impl ForcingSpec {
    pub fn constant(site: Vec<i64>, value: f64) -> Self {
        Self {
            terms: vec![ForcingTerm {
                site,
                waveform: Waveform::Constant { value },
            }],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Sigma0 {
    Zero,
    /// `c s`
    Linear { c: f64 },
    /// `c tanh(s)`
    Tanh { c: f64 },
}

impl Sigma0 {
    #[inline]
    pub fn eval(self, s: f64) -> f64 {
        match self {
            Sigma0::Zero => 0.0,
            Sigma0::Linear { c } => c * s,
            Sigma0::Tanh { c } => c * s.tanh(),
        }
    }

    #[inline]
    pub fn derivative(self, s: f64) -> f64 {
        match self {
            Sigma0::Zero => 0.0,
            Sigma0::Linear { c } => c,
            Sigma0::Tanh { c } => {
                let th = s.tanh();
                c * (1.0 - th * th)
            }
        }
    }

    /// Linear growth constant: `|sigma0(s)| <= alpha (1 + |s|)`.
    pub fn growth(self) -> f64 {
        match self {
            Sigma0::Zero => 0.0,
            Sigma0::Linear { c } | Sigma0::Tanh { c } => c.abs(),
        }
    }

    /// Global Lipschitz constant.
    pub fn lipschitz(self) -> f64 {
        self.growth()
    }

    pub fn is_zero(self) -> bool {
        matches!(self, Sigma0::Zero)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaEntry {
    pub site: Vec<i64>,
    pub value: f64,
}

/// One retained Wiener mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseMode {
    pub sigma0: Sigma0,
    #[serde(default)]
    pub delta: Vec<DeltaEntry>,
    #[serde(default)]
    pub h: ForcingSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub modes: Vec<NoiseMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub nu: f64,
    pub gamma: f64,
    /// Coefficients of `F0` in ascending order; `F0(0) = 0` requires the
    /// first entry to vanish.
    #[serde(default)]
    pub f0: Vec<f64>,
    #[serde(default)]
    pub g: ForcingSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub dim: usize,
    pub radius: usize,
}

fn default_stability_radius() -> f64 {
    10.0
}

/// Full problem description as stored in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub window: WindowSpec,
    pub drift: DriftSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub horizon: f64,
    /// Radius `R` of the state ball used for Lipschitz constants and the
    /// explicit-step stability guard.
    #[serde(default = "default_stability_radius")]
    pub stability_radius: f64,
}

/// Constants established by [`Model::new`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub site_count: usize,
    pub modes: usize,
    pub gamma: f64,
    /// `inf_s F0'(s)`.
    pub f0_min_derivative: f64,
    /// Linear growth constant of the diffusion, `max_k alpha_k`.
    pub alpha: f64,
    /// `sum_k sum_i delta_{k,i}^2`.
    pub delta_norm_sq: f64,
    /// Global Lipschitz constant shared by every `sigma0_k`.
    pub sigma_lipschitz: f64,
    /// Radius `R` the local constant below refers to.
    pub radius: f64,
    /// `L_R = max_{|s| <= R} |f'(s)|`.
    pub drift_lipschitz: f64,
    /// Upper bound on `sup_t |g(t)|^2`.
    pub g_sup_sq: f64,
    /// `sum_k sup_t |h_k(t)|^2` (upper bound, exact for constant signals).
    pub h_sup_sq: f64,
}

#[derive(Debug, Clone)]
struct CompiledMode {
    sigma0: Sigma0,
    delta: Vec<(usize, f64)>,
    h: Vec<(usize, Waveform)>,
}

/// A validated model, ready for evaluation.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    window: LatticeWindow,
    /// `f(s) = F0(s) - gamma s`.
    f: Polynomial,
    f_prime: Polynomial,
    g: Vec<(usize, Waveform)>,
    modes: Vec<CompiledMode>,
    report: ValidationReport,
}

fn violated(which: Condition, detail: impl Into<String>) -> Error {
    Error::ConditionViolated {
        which,
        detail: detail.into(),
    }
}

fn compile_forcing(
    window: LatticeWindow,
    forcing: &ForcingSpec,
    what: &str,
) -> Result<Vec<(usize, Waveform)>> {
    forcing
        .terms
        .iter()
        .map(|term| {
            let flat = window.flat_index(&term.site).ok_or_else(|| {
                violated(
                    Condition::Support,
                    format!("{what} site {:?} outside window", term.site),
                )
            })?;
            term.waveform
                .check()
                .map_err(|e| violated(Condition::Finite, format!("{what}: {e}")))?;
            Ok((flat, term.waveform.clone()))
        })
        .collect()
}

/// `sup_t |sum of signals|^2`, bounded site by site.
fn sup_sq_bound(window: LatticeWindow, signals: &[(usize, Waveform)]) -> f64 {
    let mut per_site = vec![0.0; window.site_count()];
    for (site, w) in signals {
        per_site[*site] += w.sup_abs();
    }
    per_site.iter().map(|x| x * x).sum()
}

/// `inf_s p(s)` when `p` is bounded below.
fn polynomial_infimum(p: &Polynomial) -> Option<f64> {
    match p.degree() {
        None => Some(0.0),
        Some(0) => Some(p.coeffs()[0]),
        Some(d) if d % 2 == 1 || p.leading() < 0.0 => None,
        Some(_) => p
            .derivative()
            .real_roots()
            .into_iter()
            .map(|x| p.eval(x))
            .reduce(f64::min),
    }
}

/// `max_{|s| <= r} |p(s)|`.
fn max_abs_on_interval(p: &Polynomial, r: f64) -> f64 {
    p.derivative()
        .real_roots()
        .into_iter()
        .filter(|x| x.abs() <= r)
        .chain([-r, r])
        .map(|x| p.eval(x).abs())
        .fold(0.0, f64::max)
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let window = LatticeWindow::new(spec.window.dim, spec.window.radius)?;
        let drift = &spec.drift;
        if !(drift.nu > 0.0 && drift.nu.is_finite()) {
            return Err(violated(
                Condition::Viscosity,
                format!("nu = {} must be positive", drift.nu),
            ));
        }
        if !(spec.horizon > 0.0 && spec.horizon.is_finite()) {
            return Err(violated(
                Condition::Horizon,
                format!("horizon = {}", spec.horizon),
            ));
        }
        if !(spec.stability_radius > 0.0 && spec.stability_radius.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "stability_radius = {} must be positive",
                spec.stability_radius
            )));
        }
        if !drift.gamma.is_finite() || drift.f0.iter().any(|c| !c.is_finite()) {
            return Err(violated(Condition::Finite, "gamma and F0 coefficients"));
        }
        if drift.gamma > 0.0 {
            return Err(violated(
                Condition::F1,
                format!("gamma = {} must satisfy gamma <= 0", drift.gamma),
            ));
        }
        let f0 = Polynomial::new(drift.f0.clone());
        if f0.eval(0.0) != 0.0 {
            return Err(violated(
                Condition::F1,
                format!("F0(0) = {} must vanish", f0.eval(0.0)),
            ));
        }
        let f0_prime = f0.derivative();
        let min_derivative = polynomial_infimum(&f0_prime).ok_or_else(|| {
            violated(
                Condition::F1,
                "F0' is unbounded below (F0 needs odd degree and positive leading coefficient)",
            )
        })?;
        if min_derivative < drift.gamma {
            return Err(violated(
                Condition::F1,
                format!(
                    "inf F0' = {min_derivative} < gamma = {}",
                    drift.gamma
                ),
            ));
        }

        let f = f0.add_linear(-drift.gamma);
        let f_prime = f.derivative();
        let g = compile_forcing(window, &drift.g, "g")?;

        let mut modes = Vec::with_capacity(spec.noise.modes.len());
        for (k, mode) in spec.noise.modes.iter().enumerate() {
            let c = mode.sigma0.growth();
            if !c.is_finite() {
                return Err(violated(Condition::Finite, format!("sigma0 of mode {k}")));
            }
            let mut delta = Vec::with_capacity(mode.delta.len());
            for entry in &mode.delta {
                let flat = window.flat_index(&entry.site).ok_or_else(|| {
                    violated(
                        Condition::Support,
                        format!("delta site {:?} of mode {k} outside window", entry.site),
                    )
                })?;
                if !entry.value.is_finite() {
                    return Err(violated(Condition::Finite, format!("delta of mode {k}")));
                }
                delta.push((flat, entry.value));
            }
            let h = compile_forcing(window, &mode.h, &format!("h_{k}"))?;
            modes.push(CompiledMode {
                sigma0: mode.sigma0,
                delta,
                h,
            });
        }

        let alpha = modes.iter().map(|m| m.sigma0.growth()).fold(0.0, f64::max);
        let sigma_lipschitz = modes
            .iter()
            .map(|m| m.sigma0.lipschitz())
            .fold(0.0, f64::max);
        let delta_norm_sq = modes
            .iter()
            .flat_map(|m| m.delta.iter().map(|(_, d)| d * d))
            .fold(0.0, |a, b| a + b);
        let h_sup_sq = modes.iter().map(|m| sup_sq_bound(window, &m.h)).fold(0.0, |a, b| a + b);
        let radius = spec.stability_radius;
        let report = ValidationReport {
            site_count: window.site_count(),
            modes: modes.len(),
            gamma: drift.gamma,
            f0_min_derivative: min_derivative,
            alpha,
            delta_norm_sq,
            sigma_lipschitz,
            radius,
            drift_lipschitz: max_abs_on_interval(&f_prime, radius),
            g_sup_sq: sup_sq_bound(window, &g),
            h_sup_sq,
        };

        Ok(Self {
            spec,
            window,
            f,
            f_prime,
            g,
            modes,
            report,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn window(&self) -> LatticeWindow {
        self.window
    }

    pub fn report(&self) -> &ValidationReport {
        &self.report
    }

    pub fn modes(&self) -> usize {
        self.modes.len()
    }

    pub fn nu(&self) -> f64 {
        self.spec.drift.nu
    }

    pub fn gamma(&self) -> f64 {
        self.spec.drift.gamma
    }

    pub fn horizon(&self) -> f64 {
        self.spec.horizon
    }

    /// `max_{|s| <= r} |f'(s)|` for an arbitrary radius.
    pub fn drift_lipschitz(&self, r: f64) -> f64 {
        max_abs_on_interval(&self.f_prime, r)
    }

    /// True when no mode has a state-dependent diffusion.
    pub fn is_additive(&self) -> bool {
        self.modes.iter().all(|m| m.sigma0.is_zero() || m.delta.is_empty())
    }

    pub fn mode_sigma0(&self, k: usize) -> Option<Sigma0> {
        self.modes.get(k).map(|m| m.sigma0)
    }

    /// Upper bound on `int_0^T |g(t)|^2 dt`.
    pub fn g_energy_bound(&self) -> f64 {
        self.report.g_sup_sq * self.spec.horizon
    }

    /// Rate in the explicit stability guard, `4 N nu + |gamma| + L_R`.
    pub fn stability_rate(&self) -> f64 {
        4.0 * self.window.dim() as f64 * self.nu()
            + self.gamma().abs()
            + self.report.drift_lipschitz
    }

    fn check_state(&self, u: &State) -> Result<()> {
        if u.window() != self.window {
            return Err(Error::WindowMismatch(format!(
                "state on {:?}, model on {:?}",
                u.window(),
                self.window
            )));
        }
        Ok(())
    }

    fn check_mode_vector(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.modes.len() {
            return Err(Error::DimensionMismatch {
                expected: self.modes.len(),
                got: z.len(),
            });
        }
        Ok(())
    }

    #[inline]
    pub fn f_scalar(&self, s: f64) -> f64 {
        self.f.eval(s)
    }

    #[inline]
    pub fn f_prime_scalar(&self, s: f64) -> f64 {
        self.f_prime.eval(s)
    }

    pub fn f_eval(&self, u: &State) -> Result<State> {
        self.check_state(u)?;
        let values = u.values().iter().map(|&s| self.f.eval(s)).collect();
        State::from_values(self.window, values)
    }

    pub fn g_eval(&self, t: f64) -> State {
        let mut out = State::zeros(self.window);
        add_signals(&self.g, t, 1.0, out.values_mut());
        out
    }

    pub fn drift(&self, t: f64, u: &State) -> Result<State> {
        self.check_state(u)?;
        let mut out = State::zeros(self.window);
        self.drift_into(t, u.values(), out.values_mut());
        Ok(out)
    }

    pub fn sigma_k_eval(&self, k: usize, u: &State) -> Result<State> {
        self.check_state(u)?;
        let mode = self.modes.get(k).ok_or(Error::ModeOutOfRange {
            mode: k,
            modes: self.modes.len(),
        })?;
        let mut out = State::zeros(self.window);
        for &(i, d) in &mode.delta {
            out.values_mut()[i] += d * mode.sigma0.eval(u.values()[i]);
        }
        Ok(out)
    }

    pub fn h_k_eval(&self, k: usize, t: f64) -> Result<State> {
        let mode = self.modes.get(k).ok_or(Error::ModeOutOfRange {
            mode: k,
            modes: self.modes.len(),
        })?;
        let mut out = State::zeros(self.window);
        add_signals(&mode.h, t, 1.0, out.values_mut());
        Ok(out)
    }

    /// `sigma(t, u) z = sum_k (h_k(t) + sigma_k(u)) z_k`.
    pub fn sigma_apply(&self, t: f64, u: &State, z: &[f64]) -> Result<State> {
        self.check_state(u)?;
        self.check_mode_vector(z)?;
        let mut out = State::zeros(self.window);
        self.sigma_apply_add(t, u.values(), z, 1.0, out.values_mut());
        Ok(out)
    }

    /// Hilbert-Schmidt norm squared, `sum_k |h_k(t) + sigma_k(u)|^2`.
    pub fn sigma_hs_norm_sq(&self, t: f64, u: &State) -> Result<f64> {
        self.check_state(u)?;
        let mut col = vec![0.0; self.window.site_count()];
        let mut total = 0.0;
        for mode in &self.modes {
            col.iter_mut().for_each(|c| *c = 0.0);
            add_signals(&mode.h, t, 1.0, &mut col);
            for &(i, d) in &mode.delta {
                col[i] += d * mode.sigma0.eval(u.values()[i]);
            }
            total += crate::lattice::norm_sq(&col);
        }
        Ok(total)
    }

    /// `out = -nu A u - f(u) - gamma u + g(t)`.
    pub(crate) fn drift_into(&self, t: f64, u: &[f64], out: &mut [f64]) {
        apply_a_into(self.window, u, out);
        let nu = self.nu();
        let gamma = self.gamma();
        for (o, &x) in out.iter_mut().zip(u) {
            *o = -nu * *o - self.f.eval(x) - gamma * x;
        }
        add_signals(&self.g, t, 1.0, out);
    }

    /// `out += scale * sigma(t, u) z`.
    pub(crate) fn sigma_apply_add(&self, t: f64, u: &[f64], z: &[f64], scale: f64, out: &mut [f64]) {
        for (mode, &zk) in self.modes.iter().zip(z) {
            if zk == 0.0 {
                continue;
            }
            let c = scale * zk;
            add_signals(&mode.h, t, c, out);
            for &(i, d) in &mode.delta {
                out[i] += c * d * mode.sigma0.eval(u[i]);
            }
        }
    }

    /// Diagonal of `d/du [sigma(t, u) z]`, added into `out`.
    pub(crate) fn sigma_jacobian_diag_add(&self, u: &[f64], z: &[f64], out: &mut [f64]) {
        for (mode, &zk) in self.modes.iter().zip(z) {
            if zk == 0.0 || mode.sigma0.is_zero() {
                continue;
            }
            for &(i, d) in &mode.delta {
                out[i] += zk * d * mode.sigma0.derivative(u[i]);
            }
        }
    }

    /// `grad_k = (h_k(t) + sigma_k(u), p)` for every mode.
    pub(crate) fn sigma_transpose(&self, t: f64, u: &[f64], p: &[f64], grad: &mut [f64]) {
        for (mode, gk) in self.modes.iter().zip(grad.iter_mut()) {
            let mut acc = 0.0;
            for (site, w) in &mode.h {
                acc += w.eval(t) * p[*site];
            }
            for &(i, d) in &mode.delta {
                acc += d * mode.sigma0.eval(u[i]) * p[i];
            }
            *gk = acc;
        }
    }

    /// Site-by-mode matrix whose column `k` is `h_k(t)`.
    pub(crate) fn h_matrix(&self, t: f64) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.window.site_count(), self.modes.len());
        for (k, mode) in self.modes.iter().enumerate() {
            for (site, w) in &mode.h {
                m[(*site, k)] += w.eval(t);
            }
        }
        m
    }
}

#[inline]
fn add_signals(signals: &[(usize, Waveform)], t: f64, scale: f64, out: &mut [f64]) {
    for (site, w) in signals {
        out[*site] += scale * w.eval(t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_site(nu: f64, gamma: f64, f0: Vec<f64>) -> ModelSpec {
        ModelSpec {
            window: WindowSpec { dim: 1, radius: 0 },
            drift: DriftSpec {
                nu,
                gamma,
                f0,
                g: ForcingSpec::default(),
            },
            noise: NoiseSpec::default(),
            horizon: 1.0,
            stability_radius: 10.0,
        }
    }

    fn cubic() -> Vec<f64> {
        vec![0.0, -1.0, 0.0, 1.0]
    }

    #[test]
    fn classical_nonlinearity_is_valid() {
        let model = Model::new(single_site(1.0, -1.0, cubic())).unwrap();
        assert!((model.report().f0_min_derivative + 1.0).abs() < 1e-14);
        // f(s) = s^3
        assert_eq!(model.f_scalar(2.0), 8.0);
        assert_eq!(model.f_scalar(0.0), 0.0);
    }

    #[test]
    fn quintic_classical_nonlinearity_is_valid() {
        let model = Model::new(single_site(1.0, -1.0, vec![0.0, -1.0, 0.0, 0.0, 0.0, 1.0]));
        assert!(model.is_ok());
    }

    #[test]
    fn gamma_zero_violates_f1_for_cubic() {
        let err = Model::new(single_site(1.0, 0.0, cubic())).unwrap_err();
        assert!(matches!(
            err,
            Error::ConditionViolated {
                which: Condition::F1,
                ..
            }
        ));
    }

    #[test]
    fn negative_square_violates_f1() {
        for gamma in [0.0, -1.0, -100.0] {
            let err = Model::new(single_site(1.0, gamma, vec![0.0, 0.0, -1.0])).unwrap_err();
            assert!(matches!(
                err,
                Error::ConditionViolated {
                    which: Condition::F1,
                    ..
                }
            ));
        }
    }

    #[test]
    fn positive_gamma_and_nonzero_constant_rejected() {
        assert!(Model::new(single_site(1.0, 0.5, vec![])).is_err());
        assert!(Model::new(single_site(1.0, 0.0, vec![1.0, 1.0])).is_err());
        assert!(Model::new(single_site(0.0, 0.0, vec![])).is_err());
    }

    #[test]
    fn drift_lipschitz_constant() {
        // f' = 3 s^2 on [-2, 2]
        let mut spec = single_site(1.0, -1.0, cubic());
        spec.stability_radius = 2.0;
        let model = Model::new(spec).unwrap();
        assert!((model.report().drift_lipschitz - 12.0).abs() < 1e-12);
    }

    #[test]
    fn monotone_pair_example() {
        let model = Model::new(single_site(1.0, -1.0, cubic())).unwrap();
        let w = model.window();
        let u = State::constant(w, 1.0);
        let v = State::constant(w, -1.0);
        let df = model.f_eval(&u).unwrap().sub(&model.f_eval(&v).unwrap()).unwrap();
        assert_eq!(df.dot(&u.sub(&v).unwrap()).unwrap(), 4.0);
    }

    #[test]
    fn drift_examples() {
        let model = Model::new(single_site(0.5, 0.0, vec![])).unwrap();
        let u = State::constant(model.window(), 1.0);
        assert_eq!(model.drift(0.0, &u).unwrap().values(), &[-1.0]);
        let zero = State::zeros(model.window());
        assert_eq!(model.drift(0.3, &zero).unwrap().values(), &[0.0]);

        let mut spec = single_site(0.5, -1.0, cubic());
        spec.drift.g = ForcingSpec::constant(vec![0], 0.5);
        let model = Model::new(spec).unwrap();
        let got = model.drift(0.0, &u).unwrap().values()[0];
        assert!((got + 0.5).abs() < 1e-15);
    }

    fn with_modes(modes: Vec<NoiseMode>) -> Model {
        let mut spec = single_site(0.5, 0.0, vec![]);
        spec.noise.modes = modes;
        Model::new(spec).unwrap()
    }

    fn delta(value: f64) -> Vec<DeltaEntry> {
        vec![DeltaEntry {
            site: vec![0],
            value,
        }]
    }

    #[test]
    fn sigma_k_examples() {
        let m = with_modes(vec![
            NoiseMode {
                sigma0: Sigma0::Linear { c: 1.0 },
                delta: delta(1.0),
                h: ForcingSpec::default(),
            },
            NoiseMode {
                sigma0: Sigma0::Zero,
                delta: delta(1.0),
                h: ForcingSpec::default(),
            },
            NoiseMode {
                sigma0: Sigma0::Tanh { c: 1.0 },
                delta: delta(0.5),
                h: ForcingSpec::default(),
            },
        ]);
        let u = State::constant(m.window(), 2.0);
        assert_eq!(m.sigma_k_eval(0, &u).unwrap().values(), &[2.0]);
        assert_eq!(m.sigma_k_eval(1, &u).unwrap().values(), &[0.0]);
        let zero = State::zeros(m.window());
        assert_eq!(m.sigma_k_eval(2, &zero).unwrap().values(), &[0.0]);
        assert!(matches!(
            m.sigma_k_eval(3, &u),
            Err(Error::ModeOutOfRange { .. })
        ));
        assert_eq!(m.sigma_hs_norm_sq(0.0, &u).unwrap(), 4.0 + 0.0 + 0.25 * 2f64.tanh().powi(2));
    }

    #[test]
    fn sigma_apply_examples() {
        let m = with_modes(vec![
            NoiseMode {
                sigma0: Sigma0::Linear { c: 1.0 },
                delta: delta(1.0),
                h: ForcingSpec::default(),
            },
            NoiseMode {
                sigma0: Sigma0::Linear { c: 0.5 },
                delta: delta(1.0),
                h: ForcingSpec::default(),
            },
        ]);
        let u = State::constant(m.window(), 2.0);
        assert_eq!(m.sigma_apply(0.0, &u, &[1.0, 1.0]).unwrap().values(), &[3.0]);
        assert_eq!(m.sigma_apply(0.0, &u, &[0.0, 0.0]).unwrap().values(), &[0.0]);
        assert!(matches!(
            m.sigma_apply(0.0, &u, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));

        let additive = with_modes(vec![NoiseMode {
            sigma0: Sigma0::Zero,
            delta: vec![],
            h: ForcingSpec::constant(vec![0], 1.0),
        }]);
        let u = State::constant(additive.window(), 7.0);
        assert_eq!(additive.sigma_apply(0.0, &u, &[2.5]).unwrap().values(), &[2.5]);
        let zero = State::zeros(additive.window());
        assert_eq!(additive.sigma_hs_norm_sq(0.4, &zero).unwrap(), 1.0);
        assert!(additive.is_additive());
    }

    #[test]
    fn sites_outside_window_rejected() {
        let mut spec = single_site(0.5, 0.0, vec![]);
        spec.drift.g = ForcingSpec::constant(vec![1], 1.0);
        assert!(matches!(
            Model::new(spec),
            Err(Error::ConditionViolated {
                which: Condition::Support,
                ..
            })
        ));
    }

    #[test]
    fn waveforms() {
        let table = Waveform::Table {
            times: vec![0.0, 0.5],
            values: vec![1.0, -3.0],
        };
        assert_eq!(table.eval(-0.1), 0.0);
        assert_eq!(table.eval(0.2), 1.0);
        assert_eq!(table.eval(0.5), -3.0);
        assert_eq!(table.sup_abs(), 3.0);
        let s = Waveform::Sinusoid {
            amplitude: 2.0,
            omega: 1.0,
            phase: 0.0,
        };
        assert_eq!(s.eval(0.0), 2.0);
    }

    #[test]
    fn spec_roundtrips_through_json() {
        let mut spec = single_site(0.5, -1.0, cubic());
        spec.noise.modes.push(NoiseMode {
            sigma0: Sigma0::Tanh { c: 0.3 },
            delta: delta(0.5),
            h: ForcingSpec {
                terms: vec![ForcingTerm {
                    site: vec![0],
                    waveform: Waveform::Sinusoid {
                        amplitude: 1.0,
                        omega: 2.0,
                        phase: 0.1,
                    },
                }],
            },
        });
        let text = serde_json::to_string(&spec).unwrap();
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
