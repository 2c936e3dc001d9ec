//! Joint spectral amplitude/intensity grids: pump envelope models, marginal
//! spectra, Schmidt diagnostics, phase-matching bandwidth, and anti-diagonal
//! streak cuts.

use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::{Complex, DMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::{self, FiberSpec, NeffTable};
use crate::error::{Error, Result};
use crate::fibermodes::Axis;
use crate::phasematch::{self, ProcessSpec};
use crate::{lambda_from_omega, omega_from_lambda, C_LIGHT};

/// sinc²(x) = 1/2 at this argument; sets phase-matching FWHM conversions.
const SINC_HALF_POWER: f64 = 1.391_557_382_508_822_6;
const TABLE_KNOTS: usize = 1201;

/// Pulsed pump description. `chirp` is the dimensionless quadratic spectral
/// phase coefficient: φ(ω) = chirp·(ω−ω₀)²·τ₀² with τ₀ the transform-limited
/// duration parameter 1/(σ√2).
#[derive(Debug, Clone, Serialize)]
pub struct PumpSpec {
    pub lambda0_nm: f64,
    pub bandwidth_fwhm_nm: f64,
    pub pulse_duration_fs: f64,
    pub rep_rate_hz: f64,
    pub avg_power_mw: f64,
    pub chirp: f64,
}

impl PumpSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda0_nm", self.lambda0_nm),
            ("bandwidth_fwhm_nm", self.bandwidth_fwhm_nm),
            ("pulse_duration_fs", self.pulse_duration_fs),
            ("rep_rate_hz", self.rep_rate_hz),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("pump {name} must be positive")));
            }
        }
        if self.avg_power_mw < 0.0 {
            return Err(Error::Config("pump avg_power_mw must be non-negative".into()));
        }
        Ok(())
    }

    pub fn omega0(&self) -> f64 {
        omega_from_lambda(self.lambda0_nm * 1e-9)
    }

    /// Gaussian amplitude sigma σ (rad/s) from the intensity-FWHM bandwidth.
    pub fn sigma_omega(&self) -> f64 {
        let d_omega = 2.0 * std::f64::consts::PI * C_LIGHT * (self.bandwidth_fwhm_nm * 1e-9)
            / (self.lambda0_nm * 1e-9).powi(2);
        d_omega / (2.0 * (2.0 * (2.0_f64).ln()).sqrt())
    }

    /// Transform-limited duration parameter τ₀ = 1/(σ√2) (seconds).
    pub fn tau0(&self) -> f64 {
        1.0 / (self.sigma_omega() * 2.0_f64.sqrt())
    }

    /// Shortest intensity-FWHM duration compatible with the bandwidth (fs).
    pub fn transform_limit_fs(&self) -> f64 {
        let d_omega = self.sigma_omega() * 2.0 * (2.0 * (2.0_f64).ln()).sqrt();
        4.0 * (2.0_f64).ln() / d_omega * 1e15
    }

    /// The declared duration is shorter than the bandwidth allows. This is an
    /// informational flag (quoted specs often carry this inconsistency).
    pub fn below_transform_limit(&self) -> bool {
        self.pulse_duration_fs < self.transform_limit_fs() * (1.0 - 1e-9)
    }
}

/// Single-pump spectral amplitude exp(−(ω−ω₀)²/(4σ²))·exp(i·chirp·(ω−ω₀)²τ₀²).
pub fn pump_envelope(pump: &PumpSpec, omega: f64) -> Complex<f64> {
    let d = omega - pump.omega0();
    let sigma = pump.sigma_omega();
    let tau0 = pump.tau0();
    let mag = (-d * d / (4.0 * sigma * sigma)).exp();
    Complex::from_polar(mag, pump.chirp * d * d * tau0 * tau0)
}

/// Pump-envelope treatment inside the joint amplitude.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PumpModel {
    /// Real Gaussian of width √2σ in the sum frequency; chirp has no effect.
    Fast,
    /// Convolution over pump frequency pairs by trapezoid quadrature; the
    /// only model whose intensity responds to chirp.
    Exact,
}

/// Grid request: point counts plus optional explicit frequency ranges
/// (rad/s); `None` centers the axis on the phase-matched solution with
/// half-widths of 4 pump-sum sigmas along the ridge and 4 phase-matching
/// bandwidths across it.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub n_signal: usize,
    pub n_idler: usize,
    pub signal_range: Option<(f64, f64)>,
    pub idler_range: Option<(f64, f64)>,
}

impl GridSpec {
    pub fn auto(n: usize) -> GridSpec {
        GridSpec { n_signal: n, n_idler: n, signal_range: None, idler_range: None }
    }
}

/// Sampled joint spectral amplitude and intensity, row-major over
/// (signal index, idler index).
#[derive(Debug, Clone)]
pub struct JsiGrid {
    pub omega_s: Vec<f64>,
    pub omega_i: Vec<f64>,
    pub amplitude: Vec<Complex<f64>>,
    pub intensity: Vec<f64>,
    pub max_normalized: bool,
    /// the grid rectangle contains a phase-matched solution
    pub brackets_solution: bool,
}

impl JsiGrid {
    pub fn n_signal(&self) -> usize {
        self.omega_s.len()
    }

    pub fn n_idler(&self) -> usize {
        self.omega_i.len()
    }

    pub fn spacing(&self) -> (f64, f64) {
        (
            self.omega_s[1] - self.omega_s[0],
            self.omega_i[1] - self.omega_i[0],
        )
    }

    pub fn at(&self, is: usize, ii: usize) -> f64 {
        self.intensity[is * self.omega_i.len() + ii]
    }

    /// Indices of the intensity maximum.
    pub fn peak_indices(&self) -> (usize, usize) {
        let mut best = (0usize, 0.0f64);
        for (k, &v) in self.intensity.iter().enumerate() {
            if v > best.1 {
                best = (k, v);
            }
        }
        (best.0 / self.omega_i.len(), best.0 % self.omega_i.len())
    }

    pub fn peak_wavelengths_nm(&self) -> (f64, f64) {
        let (is, ii) = self.peak_indices();
        (
            lambda_from_omega(self.omega_s[is]) * 1e9,
            lambda_from_omega(self.omega_i[ii]) * 1e9,
        )
    }

    /// Σ intensity·dω_s·dω_i.
    pub fn total_integral(&self) -> f64 {
        let (ds, di) = self.spacing();
        self.intensity.iter().sum::<f64>() * ds * di
    }
}

/// Tabulated-dispersion evaluator for joint amplitudes of one
/// (fiber, pump, process) setup over known frequency windows.
pub struct JsiContext {
    signal: Arc<NeffTable>,
    idler: Arc<NeffTable>,
    pump1: Arc<NeffTable>,
    pump2: Arc<NeffTable>,
    delta_n: f64,
    length_m: f64,
    sigma: f64,
    omega0: f64,
    chirp: f64,
    tau0: f64,
}

impl JsiContext {
    /// Build tables covering signal/idler windows (rad/s) and the pump band
    /// they imply (sum/2 ± 4.5σ).
    pub fn build(
        fiber: &FiberSpec,
        pump: &PumpSpec,
        process: &ProcessSpec,
        signal_range: (f64, f64),
        idler_range: (f64, f64),
    ) -> Result<JsiContext> {
        let pad = 1e11;
        let sigma = pump.sigma_omega();
        let table = |l: u32, m: u32, lo: f64, hi: f64| {
            dispersion::cached_neff_table(fiber, l, m, lo, hi, TABLE_KNOTS)
        };
        let signal = table(
            process.signal.l,
            process.signal.m,
            signal_range.0 - pad,
            signal_range.1 + pad,
        )?;
        let idler = table(
            process.idler.l,
            process.idler.m,
            idler_range.0 - pad,
            idler_range.1 + pad,
        )?;
        let s_lo = signal_range.0 + idler_range.0;
        let s_hi = signal_range.1 + idler_range.1;
        let (p_lo, p_hi) = (s_lo / 2.0 - 4.5 * sigma, s_hi / 2.0 + 4.5 * sigma);
        let pump1 = table(process.pump1.l, process.pump1.m, p_lo, p_hi)?;
        let pump2 = table(process.pump2.l, process.pump2.m, p_lo, p_hi)?;
        Ok(JsiContext {
            signal,
            idler,
            pump1,
            pump2,
            delta_n: fiber.delta_n,
            length_m: fiber.length_m,
            sigma,
            omega0: pump.omega0(),
            chirp: pump.chirp,
            tau0: pump.tau0(),
        })
    }

    /// Δβ for pump pair (ω₁, ω₂) and daughters (ω_s, ω_i); pumps slow.
    fn mismatch(&self, w1: f64, w2: f64, ws: f64, wi: f64) -> f64 {
        self.pump1.beta(w1, Axis::Slow, self.delta_n)
            + self.pump2.beta(w2, Axis::Slow, self.delta_n)
            - self.signal.beta(ws, Axis::Fast, 0.0)
            - self.idler.beta(wi, Axis::Fast, 0.0)
    }

    /// sinc(ΔβL/2)·exp(iΔβL/2).
    fn phase_matching_factor(&self, delta_beta: f64) -> Complex<f64> {
        let z = delta_beta * self.length_m / 2.0;
        let s = if z.abs() < 1e-9 { 1.0 } else { z.sin() / z };
        Complex::from_polar(s, z)
    }

    fn alpha(&self, omega: f64) -> Complex<f64> {
        let d = omega - self.omega0;
        let mag = (-d * d / (4.0 * self.sigma * self.sigma)).exp();
        Complex::from_polar(mag, self.chirp * d * d * self.tau0 * self.tau0)
    }

    /// Fast model: real Gaussian pump-sum envelope × Φ at degenerate pumps.
    pub fn fast_amplitude(&self, ws: f64, wi: f64) -> Complex<f64> {
        let sum = ws + wi;
        let d = sum - 2.0 * self.omega0;
        let env = (-d * d / (8.0 * self.sigma * self.sigma)).exp();
        let db = self.mismatch(sum / 2.0, sum / 2.0, ws, wi);
        self.phase_matching_factor(db) * env
    }

    /// Exact model: trapezoid over pump pairs ω = sum/2 + x, x ∈ ±4σ.
    pub fn exact_amplitude(&self, ws: f64, wi: f64, n_quad: usize) -> Complex<f64> {
        let sum = ws + wi;
        let half = 4.0 * self.sigma;
        let dx = 2.0 * half / (n_quad - 1) as f64;
        let beta_si = self.signal.beta(ws, Axis::Fast, 0.0)
            + self.idler.beta(wi, Axis::Fast, 0.0);
        let mut acc = Complex::new(0.0, 0.0);
        for k in 0..n_quad {
            let x = -half + dx * k as f64;
            let w1 = sum / 2.0 + x;
            let w2 = sum - w1;
            let db = self.pump1.beta(w1, Axis::Slow, self.delta_n)
                + self.pump2.beta(w2, Axis::Slow, self.delta_n)
                - beta_si;
            let mut term = self.alpha(w1) * self.alpha(w2) * self.phase_matching_factor(db);
            if k == 0 || k == n_quad - 1 {
                term *= 0.5;
            }
            acc += term;
        }
        acc * dx
    }
}

/// Derived geometry of the phase-matched ridge at a solution point.
#[derive(Debug, Clone, Copy)]
pub struct RidgeGeometry {
    /// matched signal frequency at the pump center (rad/s)
    pub omega_s0: f64,
    /// d(Δβ)/dω_s along constant-sum cuts (s/m)
    pub cross_slope: f64,
    /// sinc² FWHM in ω_s at fixed sum (rad/s)
    pub pm_width: f64,
    /// dω_s/d(sum): how the ridge moves with pump-sum frequency
    pub ds_dsum: f64,
}

/// Locate the phase-matched root and differentiate the mismatch around it.
pub fn ridge_geometry(
    fiber: &FiberSpec,
    process: &ProcessSpec,
    pump: &PumpSpec,
) -> Result<RidgeGeometry> {
    let map = phasematch::DeltaBetaMap::build(fiber, process, pump.lambda0_nm)?;
    let omega_s0 = map
        .roots(fiber.delta_n)
        .into_iter()
        .fold(None, |acc: Option<f64>, w| Some(acc.map_or(w, |a| a.max(w))))
        .ok_or_else(|| {
            Error::Config(
                "no phase-matched solution in the scan band; supply explicit \
                 grid ranges"
                    .into(),
            )
        })?;
    let omega_i0 = map.pump_sum - omega_s0;
    let h = 1e10;
    // pumps ride at sum/2, so both partials see the pump dispersion
    let f = |ws: f64, wi: f64| -> Result<f64> {
        let half_sum = 0.5 * (ws + wi);
        phasematch::delta_beta(fiber, process, half_sum, half_sum, ws)
    };
    let d_s = (f(omega_s0 + h, omega_i0)? - f(omega_s0 - h, omega_i0)?) / (2.0 * h);
    let d_i = (f(omega_s0, omega_i0 + h)? - f(omega_s0, omega_i0 - h)?) / (2.0 * h);
    let cross_slope = d_s - d_i;
    Ok(RidgeGeometry {
        omega_s0,
        cross_slope,
        pm_width: (2.0 * SINC_HALF_POWER / (fiber.length_m * cross_slope)).abs(),
        ds_dsum: -d_i / cross_slope,
    })
}

fn auto_ranges(
    geometry: &RidgeGeometry,
    pump: &PumpSpec,
) -> ((f64, f64), (f64, f64)) {
    let sigma = pump.sigma_omega();
    let sum_half = 4.0 * 2.0_f64.sqrt() * sigma;
    let half_s = geometry.ds_dsum.abs() * sum_half + 4.0 * geometry.pm_width;
    let half_i = (1.0 - geometry.ds_dsum).abs() * sum_half + 4.0 * geometry.pm_width;
    let omega_i0 = 2.0 * pump.omega0() - geometry.omega_s0;
    (
        (geometry.omega_s0 - half_s, geometry.omega_s0 + half_s),
        (omega_i0 - half_i, omega_i0 + half_i),
    )
}

/// Quadrature point count for the exact model: enough to resolve the
/// quadratic pump-dispersion phase at the ±4σ window edge.
pub fn exact_quadrature_points(fiber: &FiberSpec, process: &ProcessSpec, pump: &PumpSpec) -> Result<usize> {
    let omega0 = pump.omega0();
    let b2_1 = dispersion::beta_derivatives(fiber, &process.pump1, omega0, 2)?;
    let b2_2 = dispersion::beta_derivatives(fiber, &process.pump2, omega0, 2)?;
    let beta2 = b2_1.abs().max(b2_2.abs());
    let sigma = pump.sigma_omega();
    let base = (8.0 * sigma * beta2 * 4.0 * sigma * fiber.length_m / 0.5).ceil() as usize;
    let n = base.max(257);
    Ok(if n % 2 == 0 { n + 1 } else { n })
}

/// Compute the joint spectral amplitude/intensity over the requested grid.
/// Rows are evaluated in parallel; the result is deterministic regardless of
/// scheduling. The intensity (and amplitude) are max-normalized.
pub fn compute_jsa(
    fiber: &FiberSpec,
    pump: &PumpSpec,
    process: &ProcessSpec,
    spec: &GridSpec,
    model: PumpModel,
) -> Result<JsiGrid> {
    fiber.validate()?;
    pump.validate()?;
    if spec.n_signal < 2 || spec.n_idler < 2 {
        return Err(Error::Config("grid needs at least 2×2 points".into()));
    }
    let geometry = if spec.signal_range.is_none() || spec.idler_range.is_none() {
        Some(ridge_geometry(fiber, process, pump)?)
    } else {
        ridge_geometry(fiber, process, pump).ok()
    };
    let auto = geometry.as_ref().map(|g| auto_ranges(g, pump));
    let signal_range = spec
        .signal_range
        .or(auto.map(|a| a.0))
        .ok_or(Error::ZeroGrid)?;
    let idler_range = spec
        .idler_range
        .or(auto.map(|a| a.1))
        .ok_or(Error::ZeroGrid)?;
    for (name, (lo, hi)) in [("signal", signal_range), ("idler", idler_range)] {
        if !(hi > lo && lo > 0.0) {
            return Err(Error::Config(format!("invalid {name} grid range")));
        }
    }
    let brackets_solution = geometry
        .as_ref()
        .map(|g| {
            let wi0 = 2.0 * pump.omega0() - g.omega_s0;
            g.omega_s0 > signal_range.0
                && g.omega_s0 < signal_range.1
                && wi0 > idler_range.0
                && wi0 < idler_range.1
        })
        .unwrap_or(false);
    let axis = |(lo, hi): (f64, f64), n: usize| -> Vec<f64> {
        let step = (hi - lo) / (n - 1) as f64;
        (0..n).map(|k| lo + step * k as f64).collect()
    };
    let omega_s = axis(signal_range, spec.n_signal);
    let omega_i = axis(idler_range, spec.n_idler);
    let ctx = JsiContext::build(fiber, pump, process, signal_range, idler_range)?;
    let n_quad = match model {
        PumpModel::Fast => 0,
        PumpModel::Exact => exact_quadrature_points(fiber, process, pump)?,
    };
    let n_i = omega_i.len();
    let mut amplitude = vec![Complex::new(0.0, 0.0); omega_s.len() * n_i];
    amplitude
        .par_chunks_mut(n_i)
        .enumerate()
        .for_each(|(row, out)| {
            let ws = omega_s[row];
            for (col, value) in out.iter_mut().enumerate() {
                let wi = omega_i[col];
                *value = match model {
                    PumpModel::Fast => ctx.fast_amplitude(ws, wi),
                    PumpModel::Exact => ctx.exact_amplitude(ws, wi, n_quad),
                };
            }
        });
    let max_abs = amplitude.iter().map(|a| a.norm()).fold(0.0f64, f64::max);
    let max_normalized = max_abs > 0.0;
    if max_normalized {
        for a in &mut amplitude {
            *a /= Complex::new(max_abs, 0.0);
        }
    }
    let intensity = amplitude.iter().map(|a| a.norm_sqr()).collect();
    Ok(JsiGrid {
        omega_s,
        omega_i,
        amplitude,
        intensity,
        max_normalized,
        brackets_solution,
    })
}

/// Which marginal of the grid to take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginalAxis {
    Signal,
    Idler,
}

/// One-dimensional spectrum: wavelength axis (nm, ascending) and the
/// intensity summed over the other axis × its spacing.
#[derive(Debug, Clone, Serialize)]
pub struct MarginalSpectrum {
    pub lambda_nm: Vec<f64>,
    pub value: Vec<f64>,
    /// angular-frequency spacing of the own axis (rad/s), for integrals
    pub d_omega: f64,
}

impl MarginalSpectrum {
    pub fn peak_lambda_nm(&self) -> f64 {
        let mut best = (0usize, f64::NEG_INFINITY);
        for (k, &v) in self.value.iter().enumerate() {
            if v > best.1 {
                best = (k, v);
            }
        }
        self.lambda_nm[best.0]
    }

    /// Σ value·dω of the own axis.
    pub fn integral(&self) -> f64 {
        self.value.iter().sum::<f64>() * self.d_omega
    }
}

/// Sum the intensity over the other axis (× its spacing) and report against
/// wavelength.
pub fn marginal_spectrum(grid: &JsiGrid, which: MarginalAxis) -> MarginalSpectrum {
    let (ds, di) = grid.spacing();
    let n_i = grid.omega_i.len();
    let (axis, value, d_omega): (&[f64], Vec<f64>, f64) = match which {
        MarginalAxis::Signal => {
            let v = grid
                .intensity
                .chunks(n_i)
                .map(|row| row.iter().sum::<f64>() * di)
                .collect();
            (&grid.omega_s, v, ds)
        }
        MarginalAxis::Idler => {
            let mut v = vec![0.0; n_i];
            for row in grid.intensity.chunks(n_i) {
                for (acc, x) in v.iter_mut().zip(row) {
                    *acc += x;
                }
            }
            for acc in &mut v {
                *acc *= ds;
            }
            (&grid.omega_i, v, di)
        }
    };
    // ascending ω → descending λ; flip for a wavelength-ordered spectrum
    let mut lambda_nm: Vec<f64> = axis.iter().map(|&w| lambda_from_omega(w) * 1e9).collect();
    let mut value = value;
    lambda_nm.reverse();
    value.reverse();
    MarginalSpectrum { lambda_nm, value, d_omega }
}

/// FWHM (nm, in signal wavelength) of sinc²(ΔβL/2) along the constant-sum
/// line through the phase-matched solution.
pub fn phase_matching_bandwidth(
    fiber: &FiberSpec,
    process: &ProcessSpec,
    lambda_p_nm: f64,
) -> Result<f64> {
    let map = phasematch::DeltaBetaMap::build(fiber, process, lambda_p_nm)?;
    let root = map
        .roots(fiber.delta_n)
        .into_iter()
        .fold(None, |acc: Option<f64>, w| Some(acc.map_or(w, |a| a.max(w))))
        .ok_or_else(|| Error::Config("no phase-matched solution to measure".into()))?;
    let target = 2.0 * SINC_HALF_POWER / fiber.length_m; // |Δβ| at half power
    let half_width = |direction: f64| -> Result<f64> {
        let g = |w: f64| map.eval(w, fiber.delta_n).abs() - target;
        let mut step = target
            / ((map.eval(root + direction * 1e9, fiber.delta_n)
                - map.eval(root, fiber.delta_n))
                / 1e9)
                .abs();
        let mut lo = root;
        let mut hi = root + direction * step;
        let mut tries = 0;
        while g(hi) < 0.0 {
            lo = hi;
            step *= 2.0;
            hi = root + direction * step;
            tries += 1;
            if tries > 60 {
                return Err(Error::Config(
                    "half-power point not bracketed along the constant-sum cut".into(),
                ));
            }
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    };
    let w_hi = half_width(1.0)?;
    let w_lo = half_width(-1.0)?;
    Ok((lambda_from_omega(w_lo) - lambda_from_omega(w_hi)).abs() * 1e9)
}

/// Schmidt-mode diagnostics of a joint amplitude.
#[derive(Debug, Clone, Serialize)]
pub struct SchmidtReport {
    pub schmidt_number: f64,
    pub purity: f64,
    /// largest singular values of the amplitude matrix (up to 8)
    pub singular_values: Vec<f64>,
}

/// SVD of the amplitude matrix: K = 1/Σλ² over normalized squared singular
/// values. Errors on an all-zero grid.
pub fn schmidt_diagnostics(grid: &JsiGrid) -> Result<SchmidtReport> {
    let (n_s, n_i) = (grid.omega_s.len(), grid.omega_i.len());
    let m = DMatrix::from_fn(n_s, n_i, |r, c| grid.amplitude[r * n_i + c]);
    let sv = m.singular_values();
    let total: f64 = sv.iter().map(|s| s * s).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroGrid);
    }
    let k = 1.0 / sv.iter().map(|s| (s * s / total).powi(2)).sum::<f64>();
    let mut singular: Vec<f64> = sv.iter().copied().collect();
    singular.sort_by(|a, b| b.total_cmp(a));
    singular.truncate(8);
    Ok(SchmidtReport { schmidt_number: k, purity: 1.0 / k, singular_values: singular })
}

/// Intensity profile along the constant-sum (anti-diagonal) cut through the
/// phase-matched point, evaluated directly from the exact model, with its
/// local maxima; used to detect chirp-induced secondary ridges that raster
/// grids may alias.
#[derive(Debug, Clone, Serialize)]
pub struct StreakReport {
    /// signal-frequency offsets from the matched point (rad/s)
    pub t_offsets: Vec<f64>,
    /// cut intensity normalized to its maximum
    pub intensity: Vec<f64>,
    pub threshold: f64,
    /// count of strict local maxima above threshold × max
    pub maxima_above_threshold: usize,
    /// height of the second-highest local maximum (relative)
    pub second_maximum: f64,
}

/// Evaluate the exact-model intensity along (ω_s0 + t, ω_i0 − t) for
/// t ∈ ±12 phase-matching widths (1201 samples) and count local maxima
/// above `threshold` of the cut maximum.
pub fn antidiagonal_streak_cut(
    fiber: &FiberSpec,
    pump: &PumpSpec,
    process: &ProcessSpec,
    threshold: f64,
) -> Result<StreakReport> {
    let geometry = ridge_geometry(fiber, process, pump)?;
    let omega_i0 = 2.0 * pump.omega0() - geometry.omega_s0;
    let t_max = 12.0 * geometry.pm_width;
    let n_cut = 1201;
    let ctx = JsiContext::build(
        fiber,
        pump,
        process,
        (geometry.omega_s0 - t_max, geometry.omega_s0 + t_max),
        (omega_i0 - t_max, omega_i0 + t_max),
    )?;
    let n_quad = exact_quadrature_points(fiber, process, pump)?;
    let t_offsets: Vec<f64> = (0..n_cut)
        .map(|k| -t_max + 2.0 * t_max * k as f64 / (n_cut - 1) as f64)
        .collect();
    let mut intensity: Vec<f64> = t_offsets
        .par_iter()
        .map(|&t| {
            ctx.exact_amplitude(geometry.omega_s0 + t, omega_i0 - t, n_quad)
                .norm_sqr()
        })
        .collect();
    let max = intensity.iter().copied().fold(0.0f64, f64::max);
    if !(max > 0.0) {
        return Err(Error::ZeroGrid);
    }
    for v in &mut intensity {
        *v /= max;
    }
    let mut levels = Vec::new();
    for k in 1..n_cut - 1 {
        if intensity[k] > intensity[k - 1] && intensity[k] >= intensity[k + 1] {
            levels.push(intensity[k]);
        }
    }
    levels.sort_by(|a, b| b.total_cmp(a));
    Ok(StreakReport {
        t_offsets,
        intensity,
        threshold,
        maxima_above_threshold: levels.iter().filter(|&&v| v > threshold).count(),
        second_maximum: levels.get(1).copied().unwrap_or(0.0),
    })
}

/// Write the intensity grid as CSV triples, preceded by `#`-prefixed header
/// lines and a column legend.
pub fn write_grid_csv(grid: &JsiGrid, out: &mut dyn Write, header: &[String]) -> Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "omega_s_rad_per_s,omega_i_rad_per_s,intensity")?;
    let n_i = grid.omega_i.len();
    for (is, &ws) in grid.omega_s.iter().enumerate() {
        for (ii, &wi) in grid.omega_i.iter().enumerate() {
            writeln!(out, "{ws:.9e},{wi:.9e},{:.9e}", grid.intensity[is * n_i + ii])?;
        }
    }
    Ok(())
}

/// Binary grid layout: magic `JSIGRID\0`, u32 LE version, u64 LE dims
/// (n_signal, n_idler), both axes as f64 LE, then row-major f64 LE intensity.
pub fn write_grid_binary(grid: &JsiGrid, out: &mut dyn Write) -> Result<()> {
    out.write_all(b"JSIGRID\0")?;
    out.write_all(&1u32.to_le_bytes())?;
    out.write_all(&(grid.omega_s.len() as u64).to_le_bytes())?;
    out.write_all(&(grid.omega_i.len() as u64).to_le_bytes())?;
    for &w in grid.omega_s.iter().chain(grid.omega_i.iter()) {
        out.write_all(&w.to_le_bytes())?;
    }
    for &v in &grid.intensity {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read back the binary grid layout (intensity only; amplitude is not
/// serialized).
pub fn read_grid_binary(input: &mut dyn Read) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != b"JSIGRID\0" {
        return Err(Error::Format("bad grid magic".into()));
    }
    let mut u32buf = [0u8; 4];
    input.read_exact(&mut u32buf)?;
    if u32::from_le_bytes(u32buf) != 1 {
        return Err(Error::Format("unsupported grid version".into()));
    }
    let mut u64buf = [0u8; 8];
    input.read_exact(&mut u64buf)?;
    let n_s = u64::from_le_bytes(u64buf) as usize;
    input.read_exact(&mut u64buf)?;
    let n_i = u64::from_le_bytes(u64buf) as usize;
    if n_s == 0 || n_i == 0 || n_s.saturating_mul(n_i) > (1 << 28) {
        return Err(Error::Format("implausible grid dimensions".into()));
    }
    let mut read_f64s = |count: usize| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            input.read_exact(&mut buf)?;
            out.push(f64::from_le_bytes(buf));
        }
        Ok(out)
    };
    let omega_s = read_f64s(n_s)?;
    let omega_i = read_f64s(n_i)?;
    let intensity = read_f64s(n_s * n_i)?;
    Ok((omega_s, omega_i, intensity))
}

/// Two-column marginal CSV (wavelength nm, value) with header lines.
pub fn write_marginal_csv(
    marginal: &MarginalSpectrum,
    out: &mut dyn Write,
    header: &[String],
) -> Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "lambda_nm,intensity")?;
    for (l, v) in marginal.lambda_nm.iter().zip(&marginal.value) {
        writeln!(out, "{l:.6},{v:.9e}")?;
    }
    Ok(())
}
