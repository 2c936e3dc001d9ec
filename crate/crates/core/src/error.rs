//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("wavelength {lambda_um} um outside model validity range [{min_um}, {max_um}] um")]
    WavelengthOutOfRange {
        lambda_um: f64,
        min_um: f64,
        max_um: f64,
    },

    #[error("mode {mode} is not guided at wavelength {lambda_nm:.1} nm")]
    ModeCutoff { mode: String, lambda_nm: f64 },

    #[error("non-positive idler frequency: pump sum {pump_sum:.3e} rad/s minus signal {omega_s:.3e} rad/s")]
    NonPositiveIdler { pump_sum: f64, omega_s: f64 },

    #[error("birefringence calibration failed: {details}")]
    CalibrationFailure { details: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("joint spectrum is identically zero; diagnostics undefined")]
    ZeroGrid,

    #[error("division by zero efficiency in loss back-out")]
    ZeroEfficiency,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed data file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
