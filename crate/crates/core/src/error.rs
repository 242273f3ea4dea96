use thiserror::Error;

/// Structural condition a model can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Condition {
    /// `F0(0) = 0` and `F0'(s) >= gamma` with `gamma <= 0`.
    F1,
    /// `nu > 0`.
    Viscosity,
    /// Forcing, `delta` and `h_k` must be supported inside the window.
    Support,
    /// Waveforms and noise coefficients must be finite.
    Finite,
    /// Horizon must be positive.
    Horizon,
}

impl Condition {
    pub fn statement(self) -> &'static str {
        match self {
            Condition::F1 => "F_0(0) = 0 and F_0^\\prime (s) \\ge \\gamma with \\gamma \\le 0",
            Condition::Viscosity => "\\nu > 0",
            Condition::Support => "g, h_k and \\delta_{k,i} supported inside the lattice window",
            Condition::Finite => "all coefficients finite",
            Condition::Horizon => "T > 0",
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Condition::F1 => "F1",
            Condition::Viscosity => "nu",
            Condition::Support => "support",
            Condition::Finite => "finite",
            Condition::Horizon => "horizon",
        };
        write!(f, "({name}) \"{}\"", self.statement())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("lattice window mismatch: {0}")]
    WindowMismatch(String),
    #[error("invalid direction {direction} for a {dim}-dimensional lattice")]
    InvalidDirection { direction: usize, dim: usize },
    #[error("invalid lattice window: {0}")]
    InvalidWindow(String),
    #[error("condition violated {which}: {detail}")]
    ConditionViolated { which: Condition, detail: String },
    #[error("mode {mode} out of range (model has {modes} modes)")]
    ModeOutOfRange { mode: usize, modes: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("time grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("step size violates the explicit stability guard: dt * {rate} = {product} > 1")]
    StabilityGuard { rate: f64, product: f64 },
    #[error("simulation blew up at step {step} (sample {sample})")]
    SimulationBlowup { sample: u64, step: usize },
    #[error("state left the stability ball of radius {radius} at step {step} (norm {norm})")]
    StepUnstable { step: usize, norm: f64, radius: f64 },
    #[error("oscillation frequency {n} needs at least 8 steps per period (grid has {steps} steps)")]
    FrequencyTooHigh { n: u32, steps: usize },
    #[error("target path does not start at the initial state (mismatch {0})")]
    TargetMismatch(f64),
    #[error("additive oracle requires sigma0 = zero for every mode (mode {0} is multiplicative)")]
    OraclePreconditionViolated(usize),
    #[error("empty ensemble")]
    EmptyEnsemble,
}

pub type Result<T> = std::result::Result<T, Error>;
