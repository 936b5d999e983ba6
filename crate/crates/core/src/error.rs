use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("input out of domain: {0}")]
    InputDomain(String),
    #[error("exposure count {count} exceeds g_max {g_max} and clamping is disabled")]
    ExposureOverflow { count: usize, g_max: usize },
    #[error("scenario failed validation: {0}")]
    InvalidScenario(String),
    #[error("enumeration would produce {cardinality} states (cap {cap})")]
    EnumerationSize { cardinality: u128, cap: u128 },
    #[error("undefined stratum: {0}")]
    UndefinedStratum(String),
    #[error("conditioning event has zero mass: {0}")]
    ZeroMass(String),
    #[error("positivity violated: {0}")]
    Positivity(String),
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("structural requirement not met: {0}")]
    Structural(String),
    #[error("wrong mode: {0}")]
    Mode(String),
}

/// Coarse grouping used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input, failed validation, structural or mode mismatch.
    Input,
    /// Positivity failures, zero-mass events, undefined strata.
    Numeric,
    /// Enumeration cap exceeded.
    Size,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InputDomain(_)
            | Error::ExposureOverflow { .. }
            | Error::InvalidScenario(_)
            | Error::Structural(_)
            | Error::Mode(_) => ErrorClass::Input,
            Error::UndefinedStratum(_) | Error::ZeroMass(_) | Error::Positivity(_) | Error::Estimation(_) => {
                ErrorClass::Numeric
            }
            Error::EnumerationSize { .. } => ErrorClass::Size,
        }
    }
}
