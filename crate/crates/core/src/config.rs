//! Run configuration: a single TOML file (plus CLI overrides) drives every
//! subcommand; defaults mirror the reference source setup.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::counting::{
    fit_background_rate, fit_pair_coefficient, DetectionChain, PairStatistics, SourceModel,
};
use crate::dispersion::{FiberSpec, SellmeierModel};
use crate::error::{Error, Result};
use crate::fibermodes::ModeId;
use crate::jsi::{GridSpec, PumpModel, PumpSpec};
use crate::omega_from_lambda;
use crate::phasematch::{calibrate_birefringence, CalibrationResult, ProcessSpec};

/// Top-level configuration; every section falls back to reference defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub fiber: FiberSection,
    #[serde(default)]
    pub pump: PumpSection,
    #[serde(default = "default_processes", rename = "process")]
    pub processes: Vec<ProcessSection>,
    #[serde(default)]
    pub chains: ChainsSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub counting: CountingSection,
    #[serde(default)]
    pub modes: ModesSection,
    #[serde(default)]
    pub run: RunSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_toml("").expect("empty config parses to defaults")
    }
}

/// Step-index geometry and how the birefringence is obtained.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSection {
    #[serde(default = "d_core_radius")]
    pub core_radius_um: f64,
    #[serde(default = "d_numerical_aperture")]
    pub numerical_aperture: f64,
    #[serde(default = "d_length")]
    pub length_m: f64,
    /// n_slow − n_fast. Exactly one of this and `[fiber.calibration]`.
    #[serde(default)]
    pub delta_n: Option<f64>,
    #[serde(default)]
    pub calibration: Option<CalibrationSection>,
}

impl Default for FiberSection {
    fn default() -> Self {
        FiberSection {
            core_radius_um: d_core_radius(),
            numerical_aperture: d_numerical_aperture(),
            length_m: d_length(),
            delta_n: None,
            calibration: Some(CalibrationSection::default()),
        }
    }
}

/// Observed signal/idler pair the birefringence is fitted against.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    #[serde(default = "d_cal_signal")]
    pub signal_nm: f64,
    #[serde(default = "d_cal_idler")]
    pub idler_nm: f64,
    /// Pump wavelength override; the `[pump]` wavelength when omitted.
    #[serde(default)]
    pub pump_nm: Option<f64>,
    /// Process used for the fit; the first configured process when omitted.
    #[serde(default)]
    pub process: Option<String>,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        CalibrationSection {
            signal_nm: d_cal_signal(),
            idler_nm: d_cal_idler(),
            pump_nm: None,
            process: None,
        }
    }
}

/// Pulsed pump parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSection {
    #[serde(default = "d_pump_wavelength")]
    pub wavelength_nm: f64,
    #[serde(default = "d_pump_bandwidth")]
    pub bandwidth_fwhm_nm: f64,
    #[serde(default = "d_pump_duration")]
    pub pulse_duration_fs: f64,
    #[serde(default = "d_rep_rate")]
    pub rep_rate_hz: f64,
    #[serde(default = "d_power")]
    pub average_power_mw: f64,
    #[serde(default)]
    pub chirp: f64,
}

impl Default for PumpSection {
    fn default() -> Self {
        PumpSection {
            wavelength_nm: d_pump_wavelength(),
            bandwidth_fwhm_nm: d_pump_bandwidth(),
            pulse_duration_fs: d_pump_duration(),
            rep_rate_hz: d_rep_rate(),
            average_power_mw: d_power(),
            chirp: 0.0,
        }
    }
}

/// One four-wave-mixing process given by its mode labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSection {
    pub label: String,
    #[serde(default = "d_lp01")]
    pub pump1: String,
    #[serde(default = "d_lp01")]
    pub pump2: String,
    #[serde(default = "d_lp01")]
    pub signal: String,
    #[serde(default = "d_lp01")]
    pub idler: String,
    /// Optional coupling-limited cap enforced by the power sweep.
    #[serde(default)]
    pub max_power_mw: Option<f64>,
}

impl ProcessSection {
    /// Parse the mode labels into a validated process.
    pub fn to_spec(&self) -> Result<ProcessSpec> {
        let parse = |field: &str, label: &str| -> Result<ModeId> {
            label.parse::<ModeId>().map_err(|e| {
                Error::Config(format!("process '{}': {field} {e}", self.label))
            })
        };
        ProcessSpec::new(
            &self.label,
            parse("pump1", &self.pump1)?,
            parse("pump2", &self.pump2)?,
            parse("signal", &self.signal)?,
            parse("idler", &self.idler)?,
        )
    }
}

/// Detection chains for the two arms.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainsSection {
    #[serde(default = "ChainSection::default_signal")]
    pub signal: ChainSection,
    #[serde(default = "ChainSection::default_idler")]
    pub idler: ChainSection,
}

impl Default for ChainsSection {
    fn default() -> Self {
        ChainsSection {
            signal: ChainSection::default_signal(),
            idler: ChainSection::default_idler(),
        }
    }
}

/// One arm: loss stages, detector, noise, and timing jitter.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub stages: Vec<(String, f64)>,
    #[serde(default = "d_one")]
    pub detector_efficiency: f64,
    #[serde(default)]
    pub dark_count_rate_hz: f64,
    /// When omitted, fitted from the measured singles in `[counting.fit]`.
    #[serde(default)]
    pub background_rate_hz: Option<f64>,
    #[serde(default)]
    pub jitter_sigma_ps: f64,
}

impl ChainSection {
    fn default_signal() -> Self {
        ChainSection {
            label: Some("nir".into()),
            stages: vec![("wdm".into(), 0.7), ("coupling".into(), 0.75)],
            detector_efficiency: 0.45,
            dark_count_rate_hz: 0.0,
            background_rate_hz: None,
            jitter_sigma_ps: 0.0,
        }
    }

    fn default_idler() -> Self {
        ChainSection {
            label: Some("telecom".into()),
            stages: vec![("filter".into(), 0.9), ("coupling".into(), 0.75)],
            detector_efficiency: 0.9,
            dark_count_rate_hz: 0.0,
            background_rate_hz: None,
            jitter_sigma_ps: 0.0,
        }
    }

    /// Convert to a detection chain; an unset background starts at zero and
    /// may later be replaced by a fit.
    pub fn to_chain(&self, fallback_label: &str) -> DetectionChain {
        DetectionChain {
            label: self.label.clone().unwrap_or_else(|| fallback_label.into()),
            stages: self.stages.clone(),
            detector_efficiency: self.detector_efficiency,
            dark_count_rate_hz: self.dark_count_rate_hz,
            background_rate_hz: self.background_rate_hz.unwrap_or(0.0),
            jitter_sigma_ps: self.jitter_sigma_ps,
        }
    }
}

impl Default for ChainSection {
    fn default() -> Self {
        ChainSection {
            label: None,
            stages: Vec::new(),
            detector_efficiency: d_one(),
            dark_count_rate_hz: 0.0,
            background_rate_hz: None,
            jitter_sigma_ps: 0.0,
        }
    }
}

/// Joint-spectrum grid request.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "d_grid_n")]
    pub n_signal: usize,
    #[serde(default = "d_grid_n")]
    pub n_idler: usize,
    /// Explicit signal axis [lo, hi] in nm; auto-centered when omitted.
    #[serde(default)]
    pub signal_range_nm: Option<(f64, f64)>,
    #[serde(default)]
    pub idler_range_nm: Option<(f64, f64)>,
    #[serde(default = "d_pump_model")]
    pub pump_model: PumpModel,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            n_signal: d_grid_n(),
            n_idler: d_grid_n(),
            signal_range_nm: None,
            idler_range_nm: None,
            pump_model: d_pump_model(),
        }
    }
}

/// Counting windows, per-pulse statistics, and the pair-rate coefficient
/// (given directly or fitted from a measured operating point).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountingSection {
    #[serde(default = "d_window")]
    pub window_ns: f64,
    /// Histogram peak spacing; 1/rep_rate when omitted.
    #[serde(default)]
    pub rep_period_ns: Option<f64>,
    #[serde(default = "d_bin_width")]
    pub bin_width_ps: f64,
    #[serde(default = "d_span")]
    pub span_ns: f64,
    #[serde(default = "d_statistics")]
    pub statistics: PairStatistics,
    /// Pairs/pulse/mW². Exactly one of this and `[counting.fit]`.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub fit: Option<FitSection>,
}

impl Default for CountingSection {
    fn default() -> Self {
        CountingSection {
            window_ns: d_window(),
            rep_period_ns: None,
            bin_width_ps: d_bin_width(),
            span_ns: d_span(),
            statistics: d_statistics(),
            kappa: None,
            fit: d_fit(),
        }
    }
}

/// Measured operating point the source model is fitted against.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub coincidences_hz: f64,
    pub power_mw: f64,
    /// Measured singles used to fit per-arm backgrounds.
    #[serde(default)]
    pub singles_s_hz: Option<f64>,
    #[serde(default)]
    pub singles_i_hz: Option<f64>,
}

/// Wavelength list for the mode table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesSection {
    #[serde(default = "d_mode_wavelengths")]
    pub wavelengths_nm: Vec<f64>,
}

impl Default for ModesSection {
    fn default() -> Self {
        ModesSection {
            wavelengths_nm: d_mode_wavelengths(),
        }
    }
}

/// Output location, seeding, and sweep defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "d_out_dir")]
    pub out_dir: String,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_duration")]
    pub duration_s: f64,
    #[serde(default = "d_powers")]
    pub powers_mw: Vec<f64>,
    /// Also write the simulated time-tag streams (CSV and binary).
    #[serde(default)]
    pub write_streams: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            out_dir: d_out_dir(),
            seed: d_seed(),
            duration_s: d_duration(),
            powers_mw: d_powers(),
            write_streams: false,
        }
    }
}

/// Source model plus chains after κ and background fitting.
#[derive(Debug, Clone)]
pub struct ResolvedSource {
    pub source: SourceModel,
    pub chain_s: DetectionChain,
    pub chain_i: DetectionChain,
    /// Non-fatal resolution notes (e.g. a background clamped at zero).
    pub warnings: Vec<String>,
}

impl RunConfig {
    /// Parse a TOML document; missing sections take reference defaults.
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let mut config: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        // A partially written section inherits the default choice when the
        // exclusive alternatives are both absent.
        if config.fiber.delta_n.is_none() && config.fiber.calibration.is_none() {
            config.fiber.calibration = Some(CalibrationSection::default());
        }
        if config.counting.kappa.is_none() && config.counting.fit.is_none() {
            config.counting.fit = d_fit();
        }
        Ok(config)
    }

    /// Load and validate a configuration file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let config = RunConfig::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Serialize back to TOML (used for provenance hashing).
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("config serialize error: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        match (self.fiber.delta_n, &self.fiber.calibration) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "fiber: set exactly one of fiber.delta_n and [fiber.calibration], not both"
                        .into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "fiber: provide fiber.delta_n or a [fiber.calibration] target".into(),
                ))
            }
            _ => {}
        }
        if let Some(dn) = self.fiber.delta_n {
            if dn < 0.0 {
                return Err(Error::Config("fiber.delta_n must be non-negative".into()));
            }
        }
        self.base_fiber(self.fiber.delta_n.unwrap_or(0.0)).validate()?;
        self.pump_spec().validate()?;
        if self.processes.is_empty() {
            return Err(Error::Config("at least one [[process]] is required".into()));
        }
        for p in &self.processes {
            p.to_spec()?;
        }
        self.chains.signal.to_chain("signal").validate()?;
        self.chains.idler.to_chain("idler").validate()?;
        if self.grid.n_signal < 2 || self.grid.n_idler < 2 {
            return Err(Error::Config(
                "grid.n_signal and grid.n_idler must be at least 2".into(),
            ));
        }
        for (name, range) in [
            ("grid.signal_range_nm", self.grid.signal_range_nm),
            ("grid.idler_range_nm", self.grid.idler_range_nm),
        ] {
            if let Some((lo, hi)) = range {
                if !(lo > 0.0 && hi > lo) {
                    return Err(Error::Config(format!(
                        "{name} must be an increasing positive pair"
                    )));
                }
            }
        }
        match (self.counting.kappa, &self.counting.fit) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "counting: set exactly one of counting.kappa and [counting.fit], not both"
                        .into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "counting: provide counting.kappa or a [counting.fit] operating point".into(),
                ))
            }
            (Some(k), None) if k < 0.0 => {
                return Err(Error::Config("counting.kappa must be non-negative".into()))
            }
            _ => {}
        }
        if !(self.counting.window_ns > 0.0) {
            return Err(Error::Config("counting.window_ns must be positive".into()));
        }
        let period_ns = self.rep_period_ns();
        if self.counting.window_ns >= period_ns {
            return Err(Error::Config(format!(
                "counting.window_ns {} must be smaller than the pulse period {period_ns} ns",
                self.counting.window_ns
            )));
        }
        if !(self.counting.bin_width_ps > 0.0) || !(self.counting.span_ns > 0.0) {
            return Err(Error::Config(
                "counting.bin_width_ps and counting.span_ns must be positive".into(),
            ));
        }
        if !(self.run.duration_s > 0.0) {
            return Err(Error::Config("run.duration_s must be positive".into()));
        }
        if self.run.powers_mw.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "run.powers_mw must be strictly ascending".into(),
            ));
        }
        if self.modes.wavelengths_nm.iter().any(|&w| w <= 0.0) {
            return Err(Error::Config(
                "modes.wavelengths_nm entries must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Fiber at an explicit birefringence.
    pub fn base_fiber(&self, delta_n: f64) -> FiberSpec {
        FiberSpec {
            core_radius_um: self.fiber.core_radius_um,
            numerical_aperture: self.fiber.numerical_aperture,
            length_m: self.fiber.length_m,
            delta_n,
            cladding_model: SellmeierModel::fused_silica(),
        }
    }

    /// Fiber with the birefringence taken from config or calibrated against
    /// the configured signal/idler target.
    pub fn resolve_fiber(&self) -> Result<(FiberSpec, Option<CalibrationResult>)> {
        match (self.fiber.delta_n, &self.fiber.calibration) {
            (Some(dn), None) => Ok((self.base_fiber(dn), None)),
            (None, Some(cal)) => {
                let section = match &cal.process {
                    Some(label) => self.process_section(Some(label))?,
                    None => self.process_section(None)?,
                };
                let process = section.to_spec()?;
                let pump_nm = cal.pump_nm.unwrap_or(self.pump.wavelength_nm);
                let result = calibrate_birefringence(
                    &self.base_fiber(0.0),
                    &process,
                    pump_nm,
                    cal.signal_nm,
                    cal.idler_nm,
                )?;
                Ok((self.base_fiber(result.delta_n), Some(result)))
            }
            _ => Err(Error::Config(
                "fiber: exactly one of fiber.delta_n and [fiber.calibration] required".into(),
            )),
        }
    }

    /// Select a process by label, or the first one when no label is given.
    pub fn process_section(&self, label: Option<&str>) -> Result<&ProcessSection> {
        match label {
            None => self
                .processes
                .first()
                .ok_or_else(|| Error::Config("no processes configured".into())),
            Some(l) => self.processes.iter().find(|p| p.label == l).ok_or_else(|| {
                let known: Vec<&str> = self.processes.iter().map(|p| p.label.as_str()).collect();
                Error::Config(format!(
                    "unknown process label '{l}'; configured: {}",
                    known.join(", ")
                ))
            }),
        }
    }

    pub fn pump_spec(&self) -> PumpSpec {
        PumpSpec {
            lambda0_nm: self.pump.wavelength_nm,
            bandwidth_fwhm_nm: self.pump.bandwidth_fwhm_nm,
            pulse_duration_fs: self.pump.pulse_duration_fs,
            rep_rate_hz: self.pump.rep_rate_hz,
            avg_power_mw: self.pump.average_power_mw,
            chirp: self.pump.chirp,
        }
    }

    /// Grid request with nm ranges converted to angular frequency.
    pub fn grid_spec(&self) -> GridSpec {
        let to_omega = |range_nm: (f64, f64)| {
            // Longer wavelength maps to the lower frequency edge.
            (
                omega_from_lambda(range_nm.1 * 1e-9),
                omega_from_lambda(range_nm.0 * 1e-9),
            )
        };
        GridSpec {
            n_signal: self.grid.n_signal,
            n_idler: self.grid.n_idler,
            signal_range: self.grid.signal_range_nm.map(to_omega),
            idler_range: self.grid.idler_range_nm.map(to_omega),
        }
    }

    /// Histogram peak spacing in ns (configured or from the rep rate).
    pub fn rep_period_ns(&self) -> f64 {
        self.counting
            .rep_period_ns
            .unwrap_or(1e9 / self.pump.rep_rate_hz)
    }

    /// Build the source model and chains, fitting κ and per-arm backgrounds
    /// from the configured operating point where requested.
    pub fn resolve_source(&self) -> Result<ResolvedSource> {
        let mut chain_s = self.chains.signal.to_chain("signal");
        let mut chain_i = self.chains.idler.to_chain("idler");
        chain_s.validate()?;
        chain_i.validate()?;
        let mut warnings = Vec::new();
        let kappa = match (self.counting.kappa, &self.counting.fit) {
            (Some(k), None) => k,
            (None, Some(fit)) => fit_pair_coefficient(
                fit.coincidences_hz,
                fit.power_mw,
                self.pump.rep_rate_hz,
                &chain_s,
                &chain_i,
            )?,
            _ => {
                return Err(Error::Config(
                    "counting: exactly one of counting.kappa and [counting.fit] required".into(),
                ))
            }
        };
        let source = SourceModel::new(kappa, self.pump.rep_rate_hz)
            .with_statistics(self.counting.statistics);
        if let (None, Some(fit)) = (self.counting.kappa, &self.counting.fit) {
            let arms = [
                (&mut chain_s, fit.singles_s_hz, self.chains.signal.background_rate_hz),
                (&mut chain_i, fit.singles_i_hz, self.chains.idler.background_rate_hz),
            ];
            for (chain, measured, explicit) in arms {
                let (Some(singles), None) = (measured, explicit) else {
                    continue;
                };
                let bf = fit_background_rate(singles, &source, chain, fit.power_mw);
                chain.background_rate_hz = bf.background_hz;
                if bf.clamped {
                    warnings.push(format!(
                        "chain '{}': pair-correlated singles {:.1} kcps exceed the measured \
                         {:.1} kcps; background clamped to zero",
                        chain.label,
                        bf.pair_singles_hz / 1e3,
                        singles / 1e3
                    ));
                }
            }
        }
        Ok(ResolvedSource {
            source,
            chain_s,
            chain_i,
            warnings,
        })
    }

    /// Power cap for a process, if configured.
    pub fn max_power_mw(&self, label: Option<&str>) -> Result<Option<f64>> {
        Ok(self.process_section(label)?.max_power_mw)
    }
}

fn d_core_radius() -> f64 {
    4.1
}
fn d_numerical_aperture() -> f64 {
    0.125
}
fn d_length() -> f64 {
    1.0
}
fn d_cal_signal() -> f64 {
    830.0
}
fn d_cal_idler() -> f64 {
    1490.0
}
fn d_pump_wavelength() -> f64 {
    1064.0
}
fn d_pump_bandwidth() -> f64 {
    6.0
}
fn d_pump_duration() -> f64 {
    200.0
}
fn d_rep_rate() -> f64 {
    80e6
}
fn d_power() -> f64 {
    25.0
}
fn d_lp01() -> String {
    "LP01".into()
}
fn d_one() -> f64 {
    1.0
}
fn d_grid_n() -> usize {
    161
}
fn d_pump_model() -> PumpModel {
    PumpModel::Fast
}
fn d_window() -> f64 {
    2.0
}
fn d_bin_width() -> f64 {
    100.0
}
fn d_span() -> f64 {
    110.0
}
fn d_statistics() -> PairStatistics {
    PairStatistics::Poisson
}
fn d_fit() -> Option<FitSection> {
    Some(FitSection {
        coincidences_hz: 32.5e3,
        power_mw: 25.0,
        singles_s_hz: Some(175e3),
        singles_i_hz: Some(112e3),
    })
}
fn d_mode_wavelengths() -> Vec<f64> {
    vec![830.0, 850.0, 1064.0, 1430.0, 1490.0]
}
fn d_out_dir() -> String {
    "out".into()
}
fn d_seed() -> u64 {
    1
}
fn d_duration() -> f64 {
    60.0
}
fn d_powers() -> Vec<f64> {
    vec![5.0, 10.0, 15.0, 20.0, 25.0]
}

fn default_processes() -> Vec<ProcessSection> {
    vec![
        ProcessSection {
            label: "process-1".into(),
            pump1: d_lp01(),
            pump2: d_lp01(),
            signal: d_lp01(),
            idler: d_lp01(),
            max_power_mw: None,
        },
        ProcessSection {
            label: "process-2".into(),
            pump1: "LP11e".into(),
            pump2: d_lp01(),
            signal: "LP11e".into(),
            idler: d_lp01(),
            max_power_mw: Some(15.0),
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn empty_config_takes_reference_defaults() {
        let config = RunConfig::from_toml("").unwrap();
        config.validate().unwrap();
        assert_relative_eq!(config.fiber.core_radius_um, 4.1);
        assert_relative_eq!(config.pump.wavelength_nm, 1064.0);
        assert_eq!(config.processes.len(), 2);
        assert_eq!(config.processes[1].max_power_mw, Some(15.0));
        let cal = config.fiber.calibration.as_ref().unwrap();
        assert_relative_eq!(cal.signal_nm, 830.0);
        assert_relative_eq!(cal.idler_nm, 1490.0);
        assert_relative_eq!(
            config.chains.signal.to_chain("signal").total_efficiency(),
            0.23625,
            epsilon = 1e-12
        );
        assert_relative_eq!(config.rep_period_ns(), 12.5, epsilon = 1e-12);
        assert_eq!(config.modes.wavelengths_nm.len(), 5);
    }

    #[test]
    fn exclusive_birefringence_sources_are_enforced() {
        let both = r#"
            [fiber]
            delta_n = 3e-4
            [fiber.calibration]
            signal_nm = 830.0
            idler_nm = 1490.0
        "#;
        let err = RunConfig::from_toml(both).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("fiber.delta_n"));

        let neither = RunConfig::from_toml("[fiber]\ndelta_n = 3e-4").unwrap();
        assert!(neither.validate().is_ok());
        assert!(neither.fiber.calibration.is_none());
    }

    #[test]
    fn exclusive_kappa_sources_are_enforced() {
        let both = r#"
            [counting]
            kappa = 4.5e-6
            [counting.fit]
            coincidences_hz = 32.5e3
            power_mw = 25.0
        "#;
        let err = RunConfig::from_toml(both).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("counting.kappa"));

        let kappa_only = RunConfig::from_toml("[counting]\nkappa = 4.5e-6").unwrap();
        kappa_only.validate().unwrap();
        let resolved = kappa_only.resolve_source().unwrap();
        assert_relative_eq!(resolved.source.pair_rate_coefficient, 4.5e-6);
        assert!(resolved.warnings.is_empty());
    }

    #[test]
    fn malformed_mode_label_names_the_field() {
        let bad = r#"
            [[process]]
            label = "weird"
            signal = "LP9x"
        "#;
        let err = RunConfig::from_toml(bad).unwrap().validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("weird") && msg.contains("signal"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml("[pump]\nwavelenght_nm = 1064.0").unwrap_err();
        assert!(err.to_string().contains("wavelenght_nm"));
    }

    #[test]
    fn default_fit_reproduces_reference_source() {
        let config = RunConfig::default();
        let resolved = config.resolve_source().unwrap();
        assert_relative_eq!(
            resolved.source.pair_rate_coefficient,
            4.5289e-6,
            max_relative = 1e-4
        );
        assert_relative_eq!(
            resolved.chain_s.background_rate_hz,
            121_502.0,
            max_relative = 1e-4
        );
        // The idler arm over-predicts the measured singles: clamped fit.
        assert_eq!(resolved.chain_i.background_rate_hz, 0.0);
        assert_eq!(resolved.warnings.len(), 1);
        assert!(resolved.warnings[0].contains("telecom"));
    }

    #[test]
    fn explicit_background_suppresses_the_fit() {
        let text = r#"
            [chains.signal]
            background_rate_hz = 5000.0
            detector_efficiency = 0.45
            stages = [["wdm", 0.7], ["coupling", 0.75]]
        "#;
        let config = RunConfig::from_toml(text).unwrap();
        let resolved = config.resolve_source().unwrap();
        assert_relative_eq!(resolved.chain_s.background_rate_hz, 5000.0);
    }

    #[test]
    fn grid_ranges_convert_to_descending_frequency_bounds() {
        let text = r#"
            [grid]
            n_signal = 64
            signal_range_nm = [820.0, 840.0]
        "#;
        let config = RunConfig::from_toml(text).unwrap();
        let spec = config.grid_spec();
        let (lo, hi) = spec.signal_range.unwrap();
        assert!(lo < hi);
        assert_relative_eq!(
            crate::lambda_from_omega(lo) * 1e9,
            840.0,
            max_relative = 1e-12
        );
        assert_eq!(spec.n_signal, 64);
        assert_eq!(spec.n_idler, 161);
    }

    #[test]
    fn unknown_process_label_is_reported() {
        let config = RunConfig::default();
        let err = config.process_section(Some("process-9")).unwrap_err();
        assert!(err.to_string().contains("process-9"));
        assert!(err.to_string().contains("process-1"));
        assert_eq!(
            config.process_section(None).unwrap().label,
            "process-1"
        );
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config = RunConfig::default();
        let text = config.to_toml().unwrap();
        let reparsed = RunConfig::from_toml(&text).unwrap();
        reparsed.validate().unwrap();
        assert_eq!(text, reparsed.to_toml().unwrap());
    }

    #[test]
    fn forbidden_quadruple_fails_validation() {
        let text = r#"
            [[process]]
            label = "forbidden"
            signal = "LP11e"
        "#;
        let err = RunConfig::from_toml(text).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("forbidden"));
    }
}
