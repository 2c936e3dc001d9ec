//! Energy- and momentum-matching for cross-polarized four-wave mixing:
//! root solving for signal/idler pairs and birefringence calibration.

use std::sync::Arc;

use serde::Serialize;

use crate::dispersion::{self, FiberSpec, NeffTable};
use crate::error::{Error, Result};
use crate::fibermodes::{self, Axis, ModeId};
use crate::{lambda_from_omega, omega_from_lambda, C_LIGHT};

/// Signal search window (nm): near-infrared band scanned for matched pairs.
pub const SCAN_LO_NM: f64 = 750.0;
pub const SCAN_HI_NM: f64 = 1000.0;
/// Accept a root when the residual mismatch satisfies |Δβ| < this (1/m).
pub const RESIDUAL_TOL: f64 = 1e-3;
/// Calibration search interval for the birefringence.
pub const DELTA_N_LO: f64 = 1e-4;
pub const DELTA_N_HI: f64 = 1e-3;

const SCAN_SAMPLES: usize = 501;
const TABLE_KNOTS: usize = 1201;

/// One four-wave-mixing process: two pump photons annihilated on the slow
/// axis, signal and idler created on the fast axis.
#[derive(Debug, Clone, Serialize)]
pub struct ProcessSpec {
    pub label: String,
    pub pump1: ModeId,
    pub pump2: ModeId,
    pub signal: ModeId,
    pub idler: ModeId,
}

impl ProcessSpec {
    /// Build a process, forcing the cross-polarized axis assignment and
    /// rejecting mode quadruples whose azimuthal overlap vanishes.
    pub fn new(
        label: &str,
        pump1: ModeId,
        pump2: ModeId,
        signal: ModeId,
        idler: ModeId,
    ) -> Result<ProcessSpec> {
        let pump1 = pump1.with_axis(Axis::Slow);
        let pump2 = pump2.with_axis(Axis::Slow);
        let signal = signal.with_axis(Axis::Fast);
        let idler = idler.with_axis(Axis::Fast);
        if !fibermodes::azimuthal_selection(&pump1, &pump2, &signal, &idler) {
            return Err(Error::Config(format!(
                "process '{label}': quadruple ({}, {}, {}, {}) is forbidden by \
                 azimuthal symmetry",
                pump1.label(),
                pump2.label(),
                signal.label(),
                idler.label()
            )));
        }
        Ok(ProcessSpec { label: label.to_string(), pump1, pump2, signal, idler })
    }

    /// All fields in the fundamental mode.
    pub fn fundamental(label: &str) -> ProcessSpec {
        let lp01 = "LP01".parse::<ModeId>().unwrap();
        ProcessSpec::new(label, lp01, lp01, lp01, lp01).unwrap()
    }

    /// One pump and the signal in LP11e, the rest in LP01: the intermodal
    /// variant that shifts the matched pair toward the pump.
    pub fn intermodal(label: &str) -> ProcessSpec {
        let lp01 = "LP01".parse::<ModeId>().unwrap();
        let lp11 = "LP11e".parse::<ModeId>().unwrap();
        ProcessSpec::new(label, lp11, lp01, lp11, lp01).unwrap()
    }
}

/// A solved signal/idler pair for a given pump wavelength.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseMatchSolution {
    pub process: String,
    pub lambda_signal_nm: f64,
    pub lambda_idler_nm: f64,
    /// |Δβ| left after root polishing (1/m)
    pub delta_beta_residual: f64,
    /// signal falls in the 750–1000 nm band (idler then beyond the pump)
    pub signal_is_nir: bool,
}

/// Phase mismatch Δβ = β_p1 + β_p2 − β_s − β_i (1/m) with the idler
/// frequency fixed by energy conservation ω_i = ω_p1 + ω_p2 − ω_s.
/// Exact per-frequency mode solves; errors if the idler frequency is not
/// positive or any mode is past cutoff.
pub fn delta_beta(
    fiber: &FiberSpec,
    process: &ProcessSpec,
    omega_p1: f64,
    omega_p2: f64,
    omega_s: f64,
) -> Result<f64> {
    let pump_sum = omega_p1 + omega_p2;
    let omega_i = pump_sum - omega_s;
    if omega_i <= 0.0 {
        return Err(Error::NonPositiveIdler { pump_sum, omega_s });
    }
    let b_p1 = dispersion::beta(fiber, &process.pump1, omega_p1)?;
    let b_p2 = dispersion::beta(fiber, &process.pump2, omega_p2)?;
    let b_s = dispersion::beta(fiber, &process.signal, omega_s)?;
    let b_i = dispersion::beta(fiber, &process.idler, omega_i)?;
    Ok(b_p1 + b_p2 - b_s - b_i)
}

/// Tabulated Δβ evaluator for one (fiber geometry, process, pump) triple.
/// The birefringence enters only through the pumps, as Δn·(ω_p1+ω_p2)/c on
/// top of a Δn-independent modal part, so one table serves every Δn.
pub struct DeltaBetaMap {
    signal_table: Arc<NeffTable>,
    idler_table: Arc<NeffTable>,
    /// (n_p1 + n_p2)·ω_p/c at Δn = 0
    pump_beta_modal: f64,
    pub pump_sum: f64,
    omega_scan: (f64, f64),
}

impl DeltaBetaMap {
    /// Prepare tables for a degenerate pump at `lambda_p_nm`, covering the
    /// signal scan window and the corresponding idler band.
    pub fn build(
        fiber: &FiberSpec,
        process: &ProcessSpec,
        lambda_p_nm: f64,
    ) -> Result<DeltaBetaMap> {
        let omega_p = omega_from_lambda(lambda_p_nm * 1e-9);
        let pump_sum = 2.0 * omega_p;
        let omega_lo = omega_from_lambda(SCAN_HI_NM * 1e-9);
        let omega_hi = omega_from_lambda(SCAN_LO_NM * 1e-9);
        // pad so polishing never evaluates the spline at its very edge
        let pad = 0.005 * (omega_hi - omega_lo);
        let (s_lo, s_hi) = (omega_lo - pad, omega_hi + pad);
        let (i_lo, i_hi) = (pump_sum - s_hi, pump_sum - s_lo);
        if i_lo <= 0.0 {
            return Err(Error::NonPositiveIdler { pump_sum, omega_s: s_hi });
        }
        let signal_table = dispersion::cached_neff_table(
            fiber,
            process.signal.l,
            process.signal.m,
            s_lo,
            s_hi,
            TABLE_KNOTS,
        )?;
        let idler_table = dispersion::cached_neff_table(
            fiber,
            process.idler.l,
            process.idler.m,
            i_lo,
            i_hi,
            TABLE_KNOTS,
        )?;
        let lambda_p_um = lambda_p_nm * 1e-3;
        let n_p1 = fibermodes::solve_mode(fiber, &process.pump1, lambda_p_um)?.n_eff;
        let n_p2 = fibermodes::solve_mode(fiber, &process.pump2, lambda_p_um)?.n_eff;
        Ok(DeltaBetaMap {
            signal_table,
            idler_table,
            pump_beta_modal: (n_p1 + n_p2) * omega_p / C_LIGHT,
            pump_sum,
            omega_scan: (omega_lo, omega_hi),
        })
    }

    /// Δβ at signal frequency `omega_s` for birefringence `delta_n`.
    pub fn eval(&self, omega_s: f64, delta_n: f64) -> f64 {
        let omega_i = self.pump_sum - omega_s;
        let beta_s = self.signal_table.beta(omega_s, Axis::Fast, 0.0);
        let beta_i = self.idler_table.beta(omega_i, Axis::Fast, 0.0);
        self.pump_beta_modal + delta_n * self.pump_sum / C_LIGHT - beta_s - beta_i
    }

    /// Root frequencies of Δβ(ω_s) inside the scan window for `delta_n`,
    /// found by bracketing on a uniform scan and bisecting each bracket.
    pub fn roots(&self, delta_n: f64) -> Vec<f64> {
        let (lo, hi) = self.omega_scan;
        let step = (hi - lo) / (SCAN_SAMPLES - 1) as f64;
        let mut prev = self.eval(lo, delta_n);
        let mut roots = Vec::new();
        for k in 1..SCAN_SAMPLES {
            let omega = lo + step * k as f64;
            let value = self.eval(omega, delta_n);
            if prev == 0.0 {
                roots.push(omega - step);
            } else if prev * value < 0.0 {
                let (mut a, mut b) = (omega - step, omega);
                let (mut fa, _) = (prev, value);
                for _ in 0..80 {
                    let mid = 0.5 * (a + b);
                    let fm = self.eval(mid, delta_n);
                    if fa * fm <= 0.0 {
                        b = mid;
                    } else {
                        a = mid;
                        fa = fm;
                    }
                }
                roots.push(0.5 * (a + b));
            }
            prev = value;
        }
        roots
    }
}

/// Scan the near-infrared band for phase-matched signal/idler pairs at a
/// degenerate pump `lambda_p_nm`. Roots located on the tabulated mismatch
/// are polished against the exact per-frequency solver; an empty list is a
/// valid outcome (e.g. zero birefringence).
pub fn solve_phase_matching(
    fiber: &FiberSpec,
    process: &ProcessSpec,
    lambda_p_nm: f64,
) -> Result<Vec<PhaseMatchSolution>> {
    fiber.validate()?;
    let map = DeltaBetaMap::build(fiber, process, lambda_p_nm)?;
    let omega_p = 0.5 * map.pump_sum;
    let mut out = Vec::new();
    for omega_root in map.roots(fiber.delta_n) {
        let polished = polish_root(fiber, process, omega_p, omega_root)?;
        let residual = delta_beta(fiber, process, omega_p, omega_p, polished)?;
        let omega_i = map.pump_sum - polished;
        out.push(PhaseMatchSolution {
            process: process.label.clone(),
            lambda_signal_nm: lambda_from_omega(polished) * 1e9,
            lambda_idler_nm: lambda_from_omega(omega_i) * 1e9,
            delta_beta_residual: residual.abs(),
            signal_is_nir: polished > omega_p,
        });
    }
    out.sort_by(|a, b| a.lambda_signal_nm.total_cmp(&b.lambda_signal_nm));
    Ok(out)
}

/// Bisect the exact Δβ around a tabulated root until |Δβ| < RESIDUAL_TOL.
fn polish_root(
    fiber: &FiberSpec,
    process: &ProcessSpec,
    omega_p: f64,
    omega_root: f64,
) -> Result<f64> {
    // tabulation error is far below one scan step; a narrow bracket suffices
    let half = 2e-4 * omega_root;
    let (mut a, mut b) = (omega_root - half, omega_root + half);
    let mut fa = delta_beta(fiber, process, omega_p, omega_p, a)?;
    let fb = delta_beta(fiber, process, omega_p, omega_p, b)?;
    if fa * fb > 0.0 {
        // table already this accurate: accept if within tolerance
        let f0 = delta_beta(fiber, process, omega_p, omega_p, omega_root)?;
        if f0.abs() < RESIDUAL_TOL {
            return Ok(omega_root);
        }
        return Err(Error::CalibrationFailure {
            details: format!(
                "failed to bracket exact phase-matching root near \
                 {:.3} nm (Δβ = {f0:.3e} 1/m)",
                lambda_from_omega(omega_root) * 1e9
            ),
        });
    }
    let mut mid = omega_root;
    for _ in 0..200 {
        mid = 0.5 * (a + b);
        let fm = delta_beta(fiber, process, omega_p, omega_p, mid)?;
        if fm.abs() < 0.1 * RESIDUAL_TOL {
            break;
        }
        if fa * fm <= 0.0 {
            b = mid;
        } else {
            a = mid;
            fa = fm;
        }
    }
    Ok(mid)
}

/// Result of fitting the birefringence to a target signal wavelength.
#[derive(Debug, Clone, Serialize)]
pub struct CalibrationResult {
    pub delta_n: f64,
    /// |λ_s(Δn) − λ_target| after the fit (nm)
    pub residual_nm: f64,
    /// target sat at the degenerate point; Δn pinned to the lower bound
    pub degenerate: bool,
}

/// Find the birefringence that phase-matches `process` at the target
/// signal/idler pair (nm) for a degenerate pump `lambda_p_nm`. The target
/// must satisfy energy conservation to 0.5%; the returned Δn reproduces the
/// target signal wavelength or the fit is rejected (25 nm cap).
pub fn calibrate_birefringence(
    fiber: &FiberSpec,
    process: &ProcessSpec,
    lambda_p_nm: f64,
    target_signal_nm: f64,
    target_idler_nm: f64,
) -> Result<CalibrationResult> {
    let mismatch = energy_mismatch(lambda_p_nm, target_signal_nm, target_idler_nm);
    if mismatch > 0.005 {
        return Err(Error::CalibrationFailure {
            details: format!(
                "target pair ({target_signal_nm} nm, {target_idler_nm} nm) violates \
                 energy conservation for a {lambda_p_nm} nm pump by {:.2}%",
                mismatch * 100.0
            ),
        });
    }
    if target_signal_nm >= SCAN_HI_NM {
        // degenerate or near-degenerate request: any tiny Δn works; report
        // the lower search bound rather than inventing precision
        return Ok(CalibrationResult {
            delta_n: DELTA_N_LO,
            residual_nm: 0.0,
            degenerate: true,
        });
    }
    if target_signal_nm <= SCAN_LO_NM {
        return Err(Error::CalibrationFailure {
            details: format!(
                "target signal {target_signal_nm} nm lies outside the \
                 {SCAN_LO_NM}–{SCAN_HI_NM} nm search band"
            ),
        });
    }
    let map = DeltaBetaMap::build(fiber, process, lambda_p_nm)?;
    // λ_s(Δn) decreases monotonically: compare fit error signs by bisection
    let target_omega = omega_from_lambda(target_signal_nm * 1e-9);
    let sign_of = |delta_n: f64| -> f64 {
        match first_root(&map, delta_n) {
            Some(omega) => target_omega - omega, // >0 ⇔ λ_root > λ_target
            // no root in band: curve pushed past one end; Δβ at the high-ω
            // end tells which side we fell off
            None => {
                if map.eval(map.omega_scan.1, delta_n) > 0.0 {
                    -1.0
                } else {
                    1.0
                }
            }
        }
    };
    let (mut lo, mut hi) = (DELTA_N_LO, DELTA_N_HI);
    let (s_lo, s_hi) = (sign_of(lo), sign_of(hi));
    if s_lo * s_hi > 0.0 {
        return Err(Error::CalibrationFailure {
            details: format!(
                "no birefringence in [{DELTA_N_LO:.1e}, {DELTA_N_HI:.1e}] reaches a \
                 {target_signal_nm} nm signal"
            ),
        });
    }
    let mut f_lo = s_lo;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let fm = sign_of(mid);
        if f_lo * fm <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = fm;
        }
    }
    let delta_n = 0.5 * (lo + hi);
    let mut check = fiber.clone();
    check.delta_n = delta_n;
    let solutions = solve_phase_matching(&check, process, lambda_p_nm)?;
    let residual_nm = solutions
        .iter()
        .map(|s| (s.lambda_signal_nm - target_signal_nm).abs())
        .fold(f64::INFINITY, f64::min);
    if residual_nm > 25.0 {
        return Err(Error::CalibrationFailure {
            details: format!(
                "calibrated Δn = {delta_n:.3e} misses the {target_signal_nm} nm \
                 target by {residual_nm:.1} nm"
            ),
        });
    }
    Ok(CalibrationResult { delta_n, residual_nm, degenerate: false })
}

fn first_root(map: &DeltaBetaMap, delta_n: f64) -> Option<f64> {
    // the matched signal sits above the pump frequency; take the largest ω
    map.roots(delta_n).into_iter().fold(None, |acc: Option<f64>, w| {
        Some(acc.map_or(w, |a| a.max(w)))
    })
}

/// Fractional energy mismatch |ω_s + ω_i − 2ω_p| / (2ω_p) for a quoted
/// wavelength triple (all nm).
pub fn energy_mismatch(lambda_p_nm: f64, lambda_s_nm: f64, lambda_i_nm: f64) -> f64 {
    ((1.0 / lambda_s_nm + 1.0 / lambda_i_nm) * lambda_p_nm / 2.0 - 1.0).abs()
}

/// Check a wavelength triple against energy conservation at the pump
/// bandwidth scale: returns the fractional mismatch and whether it is
/// within Δλ_pump/λ_pump.
pub fn check_energy_conservation(
    lambda_p_nm: f64,
    lambda_s_nm: f64,
    lambda_i_nm: f64,
    pump_bandwidth_nm: f64,
) -> (f64, bool) {
    let mismatch = energy_mismatch(lambda_p_nm, lambda_s_nm, lambda_i_nm);
    (mismatch, mismatch <= pump_bandwidth_nm / lambda_p_nm)
}
