use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("point lies outside the domain of the cone field (p = {p:.3e} < 0)")]
    OutsideDomain { p: f64 },

    #[error("zero covector: the point is in the null section")]
    ZeroCovector,

    #[error("point is not doubly characteristic (a = {a:.3e})")]
    NotDoublyCharacteristic { a: f64 },

    #[error("covector is not in the annihilator of the distribution (max |h_i| = {residual:.3e})")]
    NotInAnnihilator { residual: f64 },

    #[error("energy drift {drift:.3e} exceeds the accepted bound; use a smaller step")]
    StepRejected { drift: f64 },

    #[error("invalid ray: {0}")]
    InvalidRay(String),

    #[error("sample {index} violates p >= 0 or mixes M+ and M-")]
    RegimeViolation { index: usize },

    #[error("step {step} leaves the cone (defect {defect:.3e})")]
    ConeViolation { step: usize, defect: f64 },

    #[error("explicit scheme unstable: dt^2 * lambda_max = {value:.3}")]
    StabilityViolation { value: f64 },

    #[error("wave reached the box boundary at t = {time:.4}")]
    BoundaryContamination { time: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
