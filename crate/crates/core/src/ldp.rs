//! Monte-Carlo estimates of tail probabilities and exponential functionals
//! of the noisy system, for comparison with the rate function.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{Error, Result};
use crate::lattice::{dot, norm_sq, State};
use crate::model::Model;
use crate::rate::{minimize_terminal_plus_cost, RateOptions};
use crate::sde::{ensemble_fold, MomentEstimate, SdeConfig, TimeGrid, Trajectory, Z95};
use crate::skeleton::{solve_euler, Control};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventSpec {
    /// Every path.
    Always,
    /// `<c, u(T)> >= level`.
    EndpointHalfSpace { direction: Vec<f64>, level: f64 },
    /// `sup_t |u(t) - reference(t)| > radius`.
    SupBallExit { reference: Trajectory, radius: f64 },
}

impl EventSpec {
    pub fn check(&self, model: &Model, grid: &TimeGrid) -> Result<()> {
        let sites = model.window().site_count();
        match self {
            EventSpec::Always => Ok(()),
            EventSpec::EndpointHalfSpace { direction, level } => {
                if direction.len() != sites {
                    return Err(Error::DimensionMismatch {
                        expected: sites,
                        got: direction.len(),
                    });
                }
                if !(*level > 0.0) {
                    return Err(Error::InvalidConfig(format!("event level {level} must be positive")));
                }
                Ok(())
            }
            EventSpec::SupBallExit { reference, radius } => {
                reference.grid.ensure_same(grid)?;
                if reference.initial().window() != model.window() {
                    return Err(Error::WindowMismatch("event reference path".into()));
                }
                if !(*radius > 0.0) {
                    return Err(Error::InvalidConfig(format!("event radius {radius} must be positive")));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    Normal,
    /// Exact binomial (Clopper-Pearson).
    ClopperPearson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailEstimate {
    pub samples: usize,
    pub hits: usize,
    pub p_hat: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub method: IntervalMethod,
    /// No sample hit the event; only `ci_high` is informative.
    pub zero_hits: bool,
}

/// Two-sided 95% Clopper-Pearson interval for `hits` out of `n`.
pub fn clopper_pearson(hits: usize, n: usize) -> (f64, f64) {
    let alpha = 0.05;
    let (x, n) = (hits as f64, n as f64);
    let low = if hits == 0 {
        0.0
    } else {
        Beta::new(x, n - x + 1.0)
            .map(|b| b.inverse_cdf(alpha / 2.0))
            .unwrap_or(0.0)
    };
    let high = if hits as f64 == n {
        1.0
    } else {
        Beta::new(x + 1.0, n - x)
            .map(|b| b.inverse_cdf(1.0 - alpha / 2.0))
            .unwrap_or(1.0)
    };
    (low, high)
}

/// `P(N(0,1) > z)`.
pub fn gaussian_tail(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(z / std::f64::consts::SQRT_2)
}

/// `log P(N(0,1) > z)`, accurate far into the tail.
pub fn log_gaussian_tail(z: f64) -> f64 {
    if z < 20.0 {
        return gaussian_tail(z).ln();
    }
    let z2 = z * z;
    let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
    -0.5 * z2 - z.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln()
}

/// Per-path data needed to evaluate events and functionals.
#[derive(Debug, Clone, Default)]
struct PathDigest {
    sup_sq: f64,
    exit_distance: f64,
    terminal: Vec<f64>,
}

fn digest_ensemble(
    model: &Model,
    config: &SdeConfig,
    u0: &State,
    control: Option<&Control>,
    reference: Option<&Trajectory>,
) -> Result<Vec<(PathDigest, f64)>> {
    let last = config.grid.steps;
    let out = ensemble_fold(
        model,
        config,
        u0,
        control,
        PathDigest::default,
        |acc, m, u| {
            acc.sup_sq = acc.sup_sq.max(norm_sq(u));
            if let Some(r) = reference {
                let d = u
                    .iter()
                    .zip(r.states[m].values())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>();
                acc.exit_distance = acc.exit_distance.max(d.sqrt());
            }
            if m == last {
                acc.terminal = u.to_vec();
            }
        },
    )?;
    Ok(out.into_iter().map(|o| (o.value, o.control_pairing)).collect())
}

fn in_event(event: &EventSpec, d: &PathDigest) -> bool {
    match event {
        EventSpec::Always => true,
        EventSpec::EndpointHalfSpace { direction, level } => dot(direction, &d.terminal) >= *level,
        EventSpec::SupBallExit { radius, .. } => d.exit_distance > *radius,
    }
}

/// Fraction of simulated paths in the event. With `tilt`, paths are drawn
/// from the control-shifted system and reweighted by the Girsanov density
/// `exp(-sum v.dW / sqrt(eps) - int |v|^2 / (2 eps))`.
pub fn tail_probability(
    model: &Model,
    config: &SdeConfig,
    u0: &State,
    event: &EventSpec,
    tilt: Option<&Control>,
) -> Result<TailEstimate> {
    event.check(model, &config.grid)?;
    let reference = match event {
        EventSpec::SupBallExit { reference, .. } => Some(reference),
        _ => None,
    };
    if tilt.is_some() && config.eps <= 0.0 {
        return Err(Error::InvalidConfig("importance sampling needs eps > 0".into()));
    }
    let digests = digest_ensemble(model, config, u0, tilt, reference)?;
    let n = digests.len();
    let hits = digests.iter().filter(|(d, _)| in_event(event, d)).count();

    if let Some(v) = tilt {
        let inv_sqrt_eps = 1.0 / config.eps.sqrt();
        let half_energy = 0.5 * v.energy() / config.eps;
        let weights: Vec<f64> = digests
            .iter()
            .map(|(d, pairing)| {
                if in_event(event, d) {
                    (-pairing * inv_sqrt_eps - half_energy).exp()
                } else {
                    0.0
                }
            })
            .collect();
        let est = MomentEstimate::from_samples(&weights)?;
        return Ok(TailEstimate {
            samples: n,
            hits,
            p_hat: est.mean,
            std_err: est.std_err,
            ci_low: est.ci_low.max(0.0),
            ci_high: est.ci_high,
            method: IntervalMethod::Normal,
            zero_hits: hits == 0,
        });
    }

    let p = hits as f64 / n as f64;
    let std_err = (p * (1.0 - p) / n as f64).sqrt();
    let (ci_low, ci_high, method) = if hits < 10 {
        let (lo, hi) = clopper_pearson(hits, n);
        (lo, hi, IntervalMethod::ClopperPearson)
    } else {
        (
            (p - Z95 * std_err).max(0.0),
            (p + Z95 * std_err).min(1.0),
            IntervalMethod::Normal,
        )
    };
    Ok(TailEstimate {
        samples: n,
        hits,
        p_hat: p,
        std_err,
        ci_low,
        ci_high,
        method,
        zero_hits: hits == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LdpRow {
    pub eps: f64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `-eps log p_hat`; `+inf` for censored rows.
    pub neg_eps_log_p: f64,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdpCurve {
    pub rows: Vec<LdpRow>,
}

/// `-eps log p_hat` across a decreasing list of noise intensities. The seed,
/// grid and ensemble size of `config` are reused for every row.
pub fn ldp_curve(
    model: &Model,
    config: &SdeConfig,
    u0: &State,
    event: &EventSpec,
    eps_list: &[f64],
) -> Result<LdpCurve> {
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidConfig("eps_list must be strictly decreasing".into()));
    }
    let rows = eps_list
        .iter()
        .map(|&eps| {
            let cfg = SdeConfig { eps, ..config.clone() };
            let est = tail_probability(model, &cfg, u0, event, None)?;
            Ok(LdpRow {
                eps,
                p_hat: est.p_hat,
                ci_low: est.ci_low,
                ci_high: est.ci_high,
                neg_eps_log_p: if est.zero_hits {
                    f64::INFINITY
                } else {
                    -eps * est.p_hat.ln()
                },
                censored: est.zero_hits,
            })
        })
        .collect::<Result<_>>()?;
    Ok(LdpCurve { rows })
}

/// Bounded-below path functionals `H` for the exponential averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathFunctional {
    Constant { value: f64 },
    /// `weight |u(T) - center|^2`.
    TerminalQuadratic { center: Vec<f64>, weight: f64 },
    /// `0` while `sup_t |u(t)| <= radius`, `penalty` otherwise.
    SupBallPenalty { radius: f64, penalty: f64 },
}

impl PathFunctional {
    fn check(&self, sites: usize) -> Result<()> {
        if let PathFunctional::TerminalQuadratic { center, .. } = self {
            if center.len() != sites {
                return Err(Error::DimensionMismatch {
                    expected: sites,
                    got: center.len(),
                });
            }
        }
        Ok(())
    }

    fn eval_digest(&self, d: &PathDigest) -> f64 {
        match self {
            PathFunctional::Constant { value } => *value,
            PathFunctional::TerminalQuadratic { center, weight } => {
                weight * d.terminal.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            }
            PathFunctional::SupBallPenalty { radius, penalty } => {
                if d.sup_sq.sqrt() <= *radius {
                    0.0
                } else {
                    *penalty
                }
            }
        }
    }

    pub fn eval(&self, path: &Trajectory) -> f64 {
        self.eval_digest(&PathDigest {
            sup_sq: path.sup_norm_sq(),
            exit_distance: 0.0,
            terminal: path.terminal().values().to_vec(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplaceEstimate {
    pub eps: f64,
    /// `-eps log mean(exp(-H/eps))`.
    pub value: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Stable `-eps log mean(exp(-h_i / eps))` with a delta-method interval.
pub fn log_mean_exp(hs: &[f64], eps: f64) -> Result<LaplaceEstimate> {
    if hs.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let a: Vec<f64> = hs.iter().map(|h| -h / eps).collect();
    let top = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = a.iter().map(|x| (x - top).exp()).collect();
    let est = MomentEstimate::from_samples(&scaled)?;
    let value = -eps * (top + est.mean.ln());
    let std_err = eps * est.std_err / est.mean;
    Ok(LaplaceEstimate {
        eps,
        value,
        std_err,
        ci_low: value - Z95 * std_err,
        ci_high: value + Z95 * std_err,
    })
}

/// Monte-Carlo `-eps log E[exp(-H(u^eps)/eps)]`.
pub fn laplace_functional(
    model: &Model,
    config: &SdeConfig,
    u0: &State,
    h: &PathFunctional,
) -> Result<LaplaceEstimate> {
    h.check(model.window().site_count())?;
    if !(config.eps > 0.0) {
        return Err(Error::InvalidConfig("laplace functional needs eps > 0".into()));
    }
    let digests = digest_ensemble(model, config, u0, None, None)?;
    let hs: Vec<f64> = digests.iter().map(|(d, _)| h.eval_digest(d)).collect();
    log_mean_exp(&hs, config.eps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariationalValue {
    /// `inf { H(u_v) + 1/2 int |v|^2 }`.
    pub value: f64,
    pub converged: bool,
    pub control: Control,
}

/// The variational companion `inf_phi { H(phi) + I(phi) }`.
///
/// For `SupBallPenalty` only the zero control is evaluated, which is exact
/// when the unforced path stays in the ball.
pub fn laplace_variational(
    model: &Model,
    u0: &State,
    grid: TimeGrid,
    h: &PathFunctional,
    options: &RateOptions,
) -> Result<VariationalValue> {
    h.check(model.window().site_count())?;
    match h {
        PathFunctional::TerminalQuadratic { center, weight } => {
            let (value, control, converged) = minimize_terminal_plus_cost(
                model,
                u0,
                grid,
                |u: &[f64], g: &mut [f64]| {
                    let mut v = 0.0;
                    for i in 0..u.len() {
                        let r = u[i] - center[i];
                        v += weight * r * r;
                        g[i] = 2.0 * weight * r;
                    }
                    v
                },
                options,
            )?;
            Ok(VariationalValue {
                value,
                converged,
                control,
            })
        }
        _ => {
            let control = Control::zeros(grid, model.modes());
            let path = solve_euler(model, u0, &control)?;
            Ok(VariationalValue {
                value: h.eval(&path),
                converged: true,
                control,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct H1Row {
    pub eps: f64,
    /// `E sup_t |u^eps_v(t) - u_v(t)|`.
    pub mean_distance: f64,
    pub std_err: f64,
}

/// Distance between the control-shifted noisy system and the skeleton path
/// for a fixed control, across noise intensities. The skeleton reference is
/// the explicit Euler solution on the same grid, so the time discretisation
/// is shared and only the noise contribution is measured.
pub fn h1_probe(
    model: &Model,
    config: &SdeConfig,
    u0: &State,
    v: &Control,
    eps_list: &[f64],
) -> Result<Vec<H1Row>> {
    let reference = solve_euler(model, u0, v)?;
    eps_list
        .iter()
        .map(|&eps| {
            let cfg = SdeConfig { eps, ..config.clone() };
            let digests = digest_ensemble(model, &cfg, u0, Some(v), Some(&reference))?;
            let d: Vec<f64> = digests.iter().map(|(d, _)| d.exit_distance).collect();
            let est = MomentEstimate::from_samples(&d)?;
            Ok(H1Row {
                eps,
                mean_distance: est.mean,
                std_err: est.std_err,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_tail_values() {
        assert!((gaussian_tail(0.0) - 0.5).abs() < 1e-15);
        assert!((gaussian_tail(1.959_963_984_540_054) - 0.025).abs() < 1e-10, "{}", gaussian_tail(1.959_963_984_540_054));
        for z in [5.0, 10.0, 19.9] {
            let direct = gaussian_tail(z).ln();
            let z2 = z * z;
            let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
            let asym = -0.5 * z2 - z.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln();
            assert!((direct - asym).abs() < 2e-3 * (1.0 + 100.0 / z.powi(6)), "z = {z}");
        }
        assert!(log_gaussian_tail(50.0).is_finite());
    }

    #[test]
    fn clopper_pearson_zero_hits() {
        let (lo, hi) = clopper_pearson(0, 1000);
        assert_eq!(lo, 0.0);
        // 1 - 0.025^(1/n)
        assert!((hi - (1.0 - 0.025f64.powf(1e-3))).abs() < 1e-9);
        let (lo, hi) = clopper_pearson(5, 100);
        assert!(lo < 0.05 && hi > 0.05);
    }

    #[test]
    fn log_mean_exp_constant() {
        let est = log_mean_exp(&[2.5; 10], 1e-3).unwrap();
        assert_eq!(est.value, 2.5);
        let small = log_mean_exp(&[1.0, 3.0], 1e-4).unwrap();
        assert!((small.value - (1.0 + 1e-4 * 2f64.ln())).abs() < 1e-12);
    }
}
