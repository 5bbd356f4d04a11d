use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate mass matrix (determinant {det})")]
    DegenerateMassMatrix { det: f64 },
    #[error("integration diverged at t = {time} s")]
    IntegrationDiverged { time: f64 },
    #[error("degenerate firing: total rule weight {total} is below the threshold")]
    DegenerateFiring { total: f64 },
    #[error("learning diverged at control step {step}")]
    LearningDiverged { step: u64 },
    #[error("filter degenerate: innovation covariance {s} is not positive")]
    FilterDegenerate { s: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}
