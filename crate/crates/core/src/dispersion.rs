//! Material and modal dispersion: fused-silica Sellmeier index, step-index
//! fiber description, and propagation constants with frequency derivatives.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fibermodes::{self, Axis, ModeId, Orientation};
use crate::spline::CubicSpline;
use crate::{lambda_from_omega, C_LIGHT};

/// Sellmeier dispersion model: n²(λ) = 1 + Σ B_i λ²/(λ² − C_i), λ in µm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SellmeierModel {
    /// (B_i dimensionless, C_i µm²) resonance terms
    pub terms: Vec<(f64, f64)>,
    /// wavelength validity range in µm
    pub valid_range: (f64, f64),
}

impl SellmeierModel {
    /// Malitson's three-term fit for fused silica at room temperature.
    pub fn fused_silica() -> Self {
        SellmeierModel {
            terms: vec![
                (0.696_166_3, 0.068_404_3 * 0.068_404_3),
                (0.407_942_6, 0.116_241_4 * 0.116_241_4),
                (0.897_479_4, 9.896_161 * 9.896_161),
            ],
            valid_range: (0.21, 3.71),
        }
    }
}

/// Refractive index at `lambda_um` (µm); errors outside the validity range.
pub fn refractive_index(model: &SellmeierModel, lambda_um: f64) -> Result<f64> {
    let (min_um, max_um) = model.valid_range;
    if !(lambda_um >= min_um && lambda_um <= max_um) {
        return Err(Error::WavelengthOutOfRange { lambda_um, min_um, max_um });
    }
    let l2 = lambda_um * lambda_um;
    let mut n2 = 1.0;
    for &(b, c) in &model.terms {
        n2 += b * l2 / (l2 - c);
    }
    Ok(n2.sqrt())
}

/// Step-index polarization-maintaining fiber: geometry, birefringence, length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiberSpec {
    pub core_radius_um: f64,
    pub numerical_aperture: f64,
    pub length_m: f64,
    /// n_slow − n_fast, wavelength-independent, ≥ 0
    pub delta_n: f64,
    pub cladding_model: SellmeierModel,
}

impl FiberSpec {
    pub fn validate(&self) -> Result<()> {
        if self.core_radius_um <= 0.0 {
            return Err(Error::Config("core_radius must be positive".into()));
        }
        if !(self.numerical_aperture > 0.0 && self.numerical_aperture < 1.0) {
            return Err(Error::Config("numerical_aperture must lie in (0, 1)".into()));
        }
        if self.length_m <= 0.0 {
            return Err(Error::Config("fiber length must be positive".into()));
        }
        if self.delta_n < 0.0 {
            return Err(Error::Config("birefringence delta_n must be non-negative".into()));
        }
        Ok(())
    }

    /// Cladding index at `lambda_um`.
    pub fn n_cladding(&self, lambda_um: f64) -> Result<f64> {
        refractive_index(&self.cladding_model, lambda_um)
    }

    /// Core index from the step-index relation n_co² = n_cl² + NA².
    pub fn n_core(&self, lambda_um: f64) -> Result<f64> {
        let ncl = self.n_cladding(lambda_um)?;
        Ok((ncl * ncl + self.numerical_aperture * self.numerical_aperture).sqrt())
    }
}

/// Propagation constant β = n_eff·ω/c (1/m) of `mode` at angular frequency
/// `omega` (rad/s); the slow axis adds the birefringence to n_eff.
pub fn beta(fiber: &FiberSpec, mode: &ModeId, omega: f64) -> Result<f64> {
    let lambda_um = lambda_from_omega(omega) * 1e6;
    let sol = fibermodes::solve_mode(fiber, mode, lambda_um)?;
    let mut n = sol.n_eff;
    if mode.axis == Axis::Slow {
        n += fiber.delta_n;
    }
    Ok(n * omega / C_LIGHT)
}

/// Central finite-difference derivative of an arbitrary curve `f(ω)`.
pub fn derivative_of(
    f: &dyn Fn(f64) -> Result<f64>,
    omega: f64,
    order: u8,
    h: f64,
) -> Result<f64> {
    match order {
        1 => Ok((f(omega + h)? - f(omega - h)?) / (2.0 * h)),
        2 => Ok((f(omega + h)? - 2.0 * f(omega)? + f(omega - h)?) / (h * h)),
        _ => Err(Error::Config(format!("unsupported derivative order {order}"))),
    }
}

/// β₁ = dβ/dω (s/m) or β₂ = d²β/dω² (s²/m) by central differences with
/// step h = 1e-3·ω.
pub fn beta_derivatives(fiber: &FiberSpec, mode: &ModeId, omega: f64, order: u8) -> Result<f64> {
    let h = 1e-3 * omega;
    derivative_of(&|w| beta(fiber, mode, w), omega, order, h)
}

/// Bulk (material-only) propagation constant n(λ)·ω/c for the cladding glass.
pub fn bulk_beta(model: &SellmeierModel, omega: f64) -> Result<f64> {
    let lambda_um = lambda_from_omega(omega) * 1e6;
    Ok(refractive_index(model, lambda_um)? * omega / C_LIGHT)
}

/// Tabulated n_eff(ω) for one spatial mode of one fiber geometry: a cubic
/// spline over uniformly spaced frequency knots, each knot solved from the
/// exact characteristic equation with the previous root as the seed.
/// Birefringence is *not* baked in; add Δn per polarization axis on top.
#[derive(Debug)]
pub struct NeffTable {
    mode_l: u32,
    mode_m: u32,
    spline: CubicSpline,
}

impl NeffTable {
    /// Tabulate `(l, m)` between `omega_lo` and `omega_hi` (rad/s) with
    /// `knots` points. The mode must be guided over the whole range.
    pub fn build(
        fiber: &FiberSpec,
        l: u32,
        m: u32,
        omega_lo: f64,
        omega_hi: f64,
        knots: usize,
    ) -> Result<NeffTable> {
        if !(omega_hi > omega_lo && omega_lo > 0.0) || knots < 8 {
            return Err(Error::Config("invalid effective-index table range".into()));
        }
        let mode = ModeId::new(l, m, Orientation::Even, Axis::Fast);
        let d_omega = (omega_hi - omega_lo) / (knots - 1) as f64;
        let mut y = Vec::with_capacity(knots);
        let mut guess = None;
        // solve low frequency (weakest guidance) first so cutoff fails fast
        for i in 0..knots {
            let omega = omega_lo + d_omega * i as f64;
            let lambda_um = lambda_from_omega(omega) * 1e6;
            let sol = fibermodes::solve_mode_near(fiber, &mode, lambda_um, guess)?;
            guess = Some(sol.u);
            y.push(sol.n_eff);
        }
        Ok(NeffTable {
            mode_l: l,
            mode_m: m,
            spline: CubicSpline::from_uniform(omega_lo, d_omega, y),
        })
    }

    /// Interpolated effective index (birefringence excluded).
    pub fn n_eff(&self, omega: f64) -> f64 {
        self.spline.eval(omega)
    }

    /// β = n_eff·ω/c on the named axis, adding `delta_n` on the slow axis.
    pub fn beta(&self, omega: f64, axis: Axis, delta_n: f64) -> f64 {
        let mut n = self.spline.eval(omega);
        if axis == Axis::Slow {
            n += delta_n;
        }
        n * omega / C_LIGHT
    }

    pub fn omega_range(&self) -> (f64, f64) {
        (self.spline.x_min(), self.spline.x_max())
    }

    pub fn mode_lm(&self) -> (u32, u32) {
        (self.mode_l, self.mode_m)
    }
}

#[derive(PartialEq, Eq, Hash)]
struct TableKey {
    geometry: Vec<u64>,
    l: u32,
    m: u32,
    omega_lo: u64,
    omega_hi: u64,
    knots: usize,
}

fn geometry_bits(fiber: &FiberSpec) -> Vec<u64> {
    let mut bits = vec![
        fiber.core_radius_um.to_bits(),
        fiber.numerical_aperture.to_bits(),
    ];
    for &(b, c) in &fiber.cladding_model.terms {
        bits.push(b.to_bits());
        bits.push(c.to_bits());
    }
    bits
}

static TABLE_CACHE: Mutex<Option<HashMap<TableKey, Arc<NeffTable>>>> = Mutex::new(None);

/// Cached [`NeffTable::build`]: tables are keyed on geometry, mode, and range,
/// so repeated grid computations over the same fiber reuse one solve pass.
pub fn cached_neff_table(
    fiber: &FiberSpec,
    l: u32,
    m: u32,
    omega_lo: f64,
    omega_hi: f64,
    knots: usize,
) -> Result<Arc<NeffTable>> {
    let key = TableKey {
        geometry: geometry_bits(fiber),
        l,
        m,
        omega_lo: omega_lo.to_bits(),
        omega_hi: omega_hi.to_bits(),
        knots,
    };
    {
        let guard = TABLE_CACHE.lock().unwrap();
        if let Some(map) = guard.as_ref() {
            if let Some(table) = map.get(&key) {
                return Ok(Arc::clone(table));
            }
        }
    }
    let table = Arc::new(NeffTable::build(fiber, l, m, omega_lo, omega_hi, knots)?);
    let mut guard = TABLE_CACHE.lock().unwrap();
    guard
        .get_or_insert_with(HashMap::new)
        .insert(key, Arc::clone(&table));
    Ok(table)
}
