//! Simulation toolkit for photon-pair sources based on spontaneous four-wave
//! mixing in birefringent step-index fiber: material/modal dispersion, LP-mode
//! solving, phase-matching calibration, joint spectral intensities, and
//! photon-counting statistics (analytic and Monte Carlo).

pub mod bessel;
pub mod config;
pub mod counting;
pub mod dispersion;
pub mod error;
pub mod fibermodes;
pub mod jsi;
pub mod phasematch;
pub mod spline;

pub use error::Error;

/// Speed of light in vacuum, m/s.
pub const C_LIGHT: f64 = 299_792_458.0;

/// Angular frequency (rad/s) of a vacuum wavelength given in meters.
pub fn omega_from_lambda(lambda_m: f64) -> f64 {
    2.0 * std::f64::consts::PI * C_LIGHT / lambda_m
}

/// Vacuum wavelength (m) of an angular frequency given in rad/s.
pub fn lambda_from_omega(omega: f64) -> f64 {
    2.0 * std::f64::consts::PI * C_LIGHT / omega
}
