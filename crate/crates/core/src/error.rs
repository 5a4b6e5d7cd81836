use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{value} is outside the effort domain ({lo}, {hi}]")]
    EffortDomain { value: f64, lo: f64, hi: f64 },

    #[error("derivative target {0} is not finite")]
    InvalidTarget(f64),

    #[error("{0}")]
    InvalidParams(String),

    #[error("epsilon = {0} must lie in (0, 1/2)")]
    EpsilonRange(f64),

    #[error("audit probability is zero, loss is minimized at maximal error")]
    NoIncentive,

    #[error("mean sigma {mean_sigma} exceeds epsilon {epsilon}")]
    PopulationNotProficient { mean_sigma: f64, epsilon: f64 },

    #[error("mean best-response bias is {0}, the population must be unbiased")]
    BiasedPopulation(f64),

    #[error("{0}")]
    Sizing(String),

    #[error("{tasks} tasks exceeds the exact-solver cap of {max}; use the greedy solver")]
    InstanceTooLarge { tasks: usize, max: usize },

    #[error("{0} has no assigned task")]
    UncoveredWorker(String),

    #[error("{0}")]
    InvalidStructure(String),

    #[error("{0}")]
    ModelMismatch(String),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable, machine-parsable tag for each error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EffortDomain { .. } => "effort-domain",
            Error::InvalidTarget(_) => "invalid-target",
            Error::InvalidParams(_) => "invalid-params",
            Error::EpsilonRange(_) => "epsilon-range",
            Error::NoIncentive => "no-incentive",
            Error::PopulationNotProficient { .. } => "population-not-proficient",
            Error::BiasedPopulation(_) => "biased-population",
            Error::Sizing(_) => "sizing",
            Error::InstanceTooLarge { .. } => "instance-too-large",
            Error::UncoveredWorker(_) => "uncovered-worker",
            Error::InvalidStructure(_) => "invalid-structure",
            Error::ModelMismatch(_) => "model-mismatch",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParams(msg.into())
}
