//! Run configuration documents.

use lattice_ldp::ldp::{EventSpec, PathFunctional};
use lattice_ldp::{Control, Model, ModelSpec, State, TimeGrid, Trajectory};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    /// Master seed for stochastic subcommands; `--seed` overrides it.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub simulate: Option<SimulateSection>,
    #[serde(default)]
    pub skeleton: Option<SkeletonSection>,
    #[serde(default)]
    pub rate: Option<RateSection>,
    #[serde(default)]
    pub ldp_curve: Option<LdpCurveSection>,
    #[serde(default)]
    pub laplace: Option<LaplaceSection>,
    #[serde(default)]
    pub probe_weak: Option<ProbeWeakSection>,
    #[serde(default)]
    pub probe_compact: Option<ProbeCompactSection>,
    #[serde(default)]
    pub probe_h1: Option<ProbeH1Section>,
}

fn default_steps() -> usize {
    100
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    #[default]
    Zeros,
    Constant {
        value: f64,
    },
    /// One entry per site in flat (row-major) order.
    Values {
        values: Vec<f64>,
    },
    /// Sum of scaled unit vectors.
    Sites {
        sites: Vec<SiteValue>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteValue {
    pub site: Vec<i64>,
    pub value: f64,
}

/// Mode-space control on the run grid.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    #[default]
    Zero,
    Constant {
        value: Vec<f64>,
    },
    /// `offset + slope t`.
    Affine {
        offset: Vec<f64>,
        slope: Vec<f64>,
    },
    /// `amplitude sin(omega t)`.
    Sinusoid {
        amplitude: Vec<f64>,
        omega: f64,
    },
    /// `steps x modes` values, step-major.
    Values {
        values: Vec<f64>,
    },
}

/// Target path for the rate optimiser.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// `u0 + slope t`.
    Affine { slope: Vec<f64> },
    /// Explicit Euler path of the skeleton driven by `control`.
    Skeleton { control: ControlSpec },
    /// `steps + 1` rows of site values.
    Path { states: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub eps: f64,
    pub samples: usize,
    #[serde(default)]
    pub control: ControlSpec,
    /// Also write every trajectory as JSON.
    #[serde(default)]
    pub save_paths: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkeletonSection {
    #[serde(default)]
    pub control: ControlSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSection {
    pub direction: Vec<f64>,
    pub level: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    #[serde(default)]
    pub target: Option<TargetSpec>,
    #[serde(default)]
    pub endpoint: Option<EndpointSection>,
    #[serde(default)]
    pub options: Option<lattice_ldp::rate::RateOptions>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdpCurveSection {
    pub event: EventSpec,
    pub eps: Vec<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaplaceSection {
    pub functional: PathFunctional,
    pub eps: Vec<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeWeakSection {
    #[serde(default)]
    pub control: ControlSpec,
    /// Mode weights of the oscillating perturbation.
    pub weights: Vec<f64>,
    #[serde(default = "default_frequencies")]
    pub frequencies: Vec<u32>,
}

fn default_frequencies() -> Vec<u32> {
    vec![1, 2, 4, 8, 16]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeCompactSection {
    pub level: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeH1Section {
    #[serde(default)]
    pub control: ControlSpec,
    pub eps: Vec<f64>,
    pub samples: usize,
}

/// Parses a configuration document, reporting the failing field path and
/// source position.
pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::ConfigParse {
            line: inner.line(),
            column: inner.column(),
            field: path,
            message: inner.to_string(),
        }
    })
}

impl RunConfig {
    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        Ok(TimeGrid::new(self.model.horizon, self.steps)?)
    }

    pub fn initial_state(&self, model: &Model) -> Result<State, CliError> {
        let window = model.window();
        let state = match &self.initial {
            InitialSpec::Zeros => State::zeros(window),
            InitialSpec::Constant { value } => State::constant(window, *value),
            InitialSpec::Values { values } => State::from_values(window, values.clone())?,
            InitialSpec::Sites { sites } => {
                let mut values = vec![0.0; window.site_count()];
                for s in sites {
                    let unit = State::unit(window, &s.site)?;
                    for (v, u) in values.iter_mut().zip(unit.values()) {
                        *v += s.value * u;
                    }
                }
                State::from_values(window, values)?
            }
        };
        Ok(state)
    }
}

impl ControlSpec {
    pub fn build(&self, grid: TimeGrid, modes: usize) -> Result<Control, CliError> {
        let sized = |v: &[f64], what: &str| -> Result<(), CliError> {
            if v.len() == modes {
                Ok(())
            } else {
                Err(CliError::Usage(format!("control {what} has {} entries, model has {modes} modes", v.len())))
            }
        };
        let control = match self {
            ControlSpec::Zero => Control::zeros(grid, modes),
            ControlSpec::Constant { value } => {
                sized(value, "value")?;
                Control::constant(grid, value)
            }
            ControlSpec::Affine { offset, slope } => {
                sized(offset, "offset")?;
                sized(slope, "slope")?;
                Control::from_fn(grid, modes, |t| offset.iter().zip(slope).map(|(a, b)| a + b * t).collect())?
            }
            ControlSpec::Sinusoid { amplitude, omega } => {
                sized(amplitude, "amplitude")?;
                Control::from_fn(grid, modes, |t| amplitude.iter().map(|a| a * (omega * t).sin()).collect())?
            }
            ControlSpec::Values { values } => Control::new(grid, modes, values.clone())?,
        };
        Ok(control)
    }
}

impl TargetSpec {
    pub fn build(&self, model: &Model, u0: &State, grid: TimeGrid) -> Result<Trajectory, CliError> {
        let window = model.window();
        let path = match self {
            TargetSpec::Affine { slope } => {
                let states = (0..=grid.steps)
                    .map(|m| {
                        let t = grid.time(m);
                        if slope.len() != window.site_count() {
                            return Err(CliError::Usage(format!(
                                "target slope has {} entries, window has {} sites",
                                slope.len(),
                                window.site_count()
                            )));
                        }
                        let values = u0.values().iter().zip(slope).map(|(a, b)| a + b * t).collect();
                        Ok(State::from_values(window, values)?)
                    })
                    .collect::<Result<_, CliError>>()?;
                Trajectory::new(grid, states)?
            }
            TargetSpec::Skeleton { control } => {
                lattice_ldp::skeleton::solve_euler(model, u0, &control.build(grid, model.modes())?)?
            }
            TargetSpec::Path { states } => {
                let states = states
                    .iter()
                    .map(|row| State::from_values(window, row.clone()))
                    .collect::<lattice_ldp::Result<_>>()?;
                Trajectory::new(grid, states)?
            }
        };
        Ok(path)
    }
}
