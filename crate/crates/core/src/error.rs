use thiserror::Error;

/// Errors produced by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shadowing covariance is not positive semi-definite (minimum eigenvalue {min_eigenvalue:.3e})")]
    ShadowingCovariance { min_eigenvalue: f64 },

    #[error("insufficient degrees of freedom: {antennas} antennas cannot zero-force {directions} pilot directions")]
    InsufficientDof { antennas: usize, directions: usize },

    #[error("Gram matrix is rank deficient (condition number estimate {condition:.3e})")]
    RankDeficient { condition: f64 },

    #[error("pilot {pilot} is not used by any UE")]
    UnusedPilot { pilot: usize },

    #[error("pilot {pilot} is not in the strong set of AP {ap}")]
    PilotNotStrong { ap: usize, pilot: usize },

    #[error("pilot {pilot} is in the strong set of AP {ap}")]
    PilotNotWeak { ap: usize, pilot: usize },

    #[error("UE {ue} is not served by AP {ap}")]
    NotServed { ap: usize, ue: usize },

    #[error("{0} has no closed-form SINR")]
    NoClosedForm(String),

    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error("malformed cone instance: {0}")]
    MalformedInstance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
