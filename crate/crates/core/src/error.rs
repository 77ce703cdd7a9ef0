use thiserror::Error;

/// A configuration field that failed validation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{field} must be finite, got {value}")]
    NotFinite { field: &'static str, value: f64 },
    #[error("{field} must be non-negative, got {value}")]
    Negative { field: &'static str, value: f64 },
    #[error("{field} must lie in {range}, got {value}")]
    OutOfRange {
        field: &'static str,
        range: &'static str,
        value: f64,
    },
    #[error("{weak} ({weak_value}) must not exceed {strong} ({strong_value})")]
    IntensityOrder {
        weak: &'static str,
        weak_value: f64,
        strong: &'static str,
        strong_value: f64,
    },
}

impl ConfigError {
    /// Name of the offending field (the weak-source field for ordering violations).
    pub fn field(&self) -> &'static str {
        match self {
            ConfigError::NotFinite { field, .. }
            | ConfigError::Negative { field, .. }
            | ConfigError::OutOfRange { field, .. } => field,
            ConfigError::IntensityOrder { weak, .. } => weak,
        }
    }
}

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{name} = {value} is outside the domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error(
        "Fock truncation n_max = {n_max} too small for intensity {intensity}: tail mass {tail:.3e} exceeds {limit:.0e}"
    )]
    Truncation {
        intensity: f64,
        n_max: usize,
        tail: f64,
        limit: f64,
    },
    #[error("Monte-Carlo estimation needs a positive test fraction r")]
    ZeroTestFraction,
    #[error("empty feasible region: {0}")]
    EmptyFeasibleRegion(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            domain: "[0, 1]",
        })
    }
}

pub(crate) fn check_non_negative(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            domain: "[0, inf)",
        })
    }
}
