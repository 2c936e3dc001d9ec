//! Weakly-guiding step-index LP-mode solver: effective indices, guidance
//! decisions, transverse profiles, azimuthal selection rules, and the
//! four-field spatial overlap integral.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::bessel::{bessel_j_seq, bessel_k_seq};
use crate::dispersion::FiberSpec;
use crate::error::{Error, Result};
use crate::omega_from_lambda;

/// Polarization axis of the birefringent fiber.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Fast,
    Slow,
}

/// Azimuthal orientation: cos(lθ) (even) or sin(lθ) (odd).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    Even,
    Odd,
}

/// LP mode label: azimuthal order `l`, radial order `m ≥ 1`, orientation, axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeId {
    pub l: u32,
    pub m: u32,
    pub orientation: Orientation,
    pub axis: Axis,
}

impl ModeId {
    /// l = 0 forces even orientation (sin(0θ) is identically zero).
    pub fn new(l: u32, m: u32, orientation: Orientation, axis: Axis) -> Self {
        assert!(m >= 1, "radial order m starts at 1");
        let orientation = if l == 0 { Orientation::Even } else { orientation };
        ModeId { l, m, orientation, axis }
    }

    pub fn with_axis(&self, axis: Axis) -> Self {
        ModeId { axis, ..*self }
    }

    /// Label without the axis, e.g. "LP01", "LP11e".
    pub fn label(&self) -> String {
        if self.l == 0 {
            format!("LP{}{}", self.l, self.m)
        } else {
            let suffix = match self.orientation {
                Orientation::Even => "e",
                Orientation::Odd => "o",
            };
            format!("LP{}{}{}", self.l, self.m, suffix)
        }
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl Serialize for ModeId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.label())
    }
}

impl FromStr for ModeId {
    type Err = Error;

    /// Parses "LP01", "LP11e", "LP11o", "LP21" (bare l > 0 defaults to even).
    /// The axis is not part of the label; it defaults to fast and is assigned
    /// by the process that uses the mode.
    fn from_str(s: &str) -> Result<Self> {
        let body = s
            .strip_prefix("LP")
            .or_else(|| s.strip_prefix("lp"))
            .ok_or_else(|| Error::Config(format!("mode label '{s}' must start with LP")))?;
        let bytes = body.as_bytes();
        if bytes.len() < 2 || !bytes[0].is_ascii_digit() || !bytes[1].is_ascii_digit() {
            return Err(Error::Config(format!(
                "mode label '{s}' must look like LP<l><m>[e|o]"
            )));
        }
        let l = (bytes[0] - b'0') as u32;
        let m = (bytes[1] - b'0') as u32;
        if m == 0 {
            return Err(Error::Config(format!("mode label '{s}': radial order m starts at 1")));
        }
        let orientation = match &body[2..] {
            "" | "e" => Orientation::Even,
            "o" => Orientation::Odd,
            other => {
                return Err(Error::Config(format!(
                    "mode label '{s}': unknown orientation suffix '{other}'"
                )))
            }
        };
        if l == 0 && body.len() > 2 {
            return Err(Error::Config(format!(
                "mode label '{s}': l = 0 modes have no orientation suffix"
            )));
        }
        Ok(ModeId::new(l, m, orientation, Axis::Fast))
    }
}

/// A solved guided mode at one frequency.
#[derive(Debug, Clone)]
pub struct ModeSolution {
    pub mode: ModeId,
    /// angular frequency, rad/s
    pub omega: f64,
    pub n_eff: f64,
    /// core transverse parameter
    pub u: f64,
    /// cladding decay parameter
    pub w: f64,
    /// normalized frequency at this wavelength
    pub v: f64,
    /// core radius carried along for profile evaluation, µm
    pub core_radius_um: f64,
}

/// Normalized frequency V = 2π·a·NA/λ.
pub fn v_number(fiber: &FiberSpec, lambda_um: f64) -> f64 {
    2.0 * std::f64::consts::PI * fiber.core_radius_um * fiber.numerical_aperture / lambda_um
}

/// Characteristic function of the LP dispersion relation at azimuthal order l:
/// f(u) = u·J_{l−1}(u)/J_l(u) + w·K_{l−1}(w)/K_l(w), with J_{−1} = −J_1 and
/// K_{−1} = K_1. Roots (between poles of the J ratio) are guided modes.
fn characteristic(l: u32, u: f64, v: f64) -> f64 {
    let w = (v * v - u * u).max(0.0).sqrt();
    let l = l as usize;
    let j_ratio = if l == 0 {
        let j = bessel_j_seq(1, u);
        -j[1] / j[0]
    } else {
        let j = bessel_j_seq(l, u);
        j[l - 1] / j[l]
    };
    let k_ratio = if l == 0 {
        let k = bessel_k_seq(1, w);
        k[1] / k[0]
    } else {
        let k = bessel_k_seq(l, w);
        k[l - 1] / k[l]
    };
    u * j_ratio + w * k_ratio
}

/// Sign of J_l(u), used to reject brackets containing a pole of the J ratio.
fn j_l_sign(l: u32, u: f64) -> f64 {
    bessel_j_seq(l as usize, u)[l as usize].signum()
}

const SCAN_SAMPLES: usize = 200;
const U_TOL: f64 = 1e-12;

/// All u-roots for the given azimuthal order, ascending: uniform bracketing
/// over u ∈ (0, V) on sign changes, pole brackets skipped, then bisection.
fn roots_for_order(l: u32, v: f64) -> Vec<f64> {
    let mut roots = Vec::new();
    if v <= 0.0 {
        return roots;
    }
    let lo = 1e-9_f64.min(v / 2.0);
    let hi = v - 1e-9 * v.max(1.0);
    if hi <= lo {
        return roots;
    }
    let mut prev_u = lo;
    let mut prev_f = characteristic(l, prev_u, v);
    for i in 1..SCAN_SAMPLES {
        let u = lo + (hi - lo) * i as f64 / (SCAN_SAMPLES - 1) as f64;
        let f = characteristic(l, u, v);
        if prev_f.is_finite() && f.is_finite() && prev_f * f < 0.0 {
            // a sign change across a zero of J_l is a pole, not a root
            if j_l_sign(l, prev_u) * j_l_sign(l, u) > 0.0 {
                if let Some(root) = bisect(l, v, prev_u, u) {
                    roots.push(root);
                }
            }
        }
        prev_u = u;
        prev_f = f;
    }
    roots
}

fn bisect(l: u32, v: f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    let mut f_lo = characteristic(l, lo, v);
    while hi - lo > U_TOL {
        let mid = 0.5 * (lo + hi);
        let f_mid = characteristic(l, mid, v);
        if f_lo * f_mid <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            f_lo = f_mid;
        }
    }
    let root = 0.5 * (lo + hi);
    // reject near-pole artifacts: a genuine root has a small residual
    if characteristic(l, root, v).abs() < 1.0 {
        Some(root)
    } else {
        None
    }
}

fn solution_from_u(fiber: &FiberSpec, mode: ModeId, lambda_um: f64, u: f64, v: f64) -> Result<ModeSolution> {
    let n_co = fiber.n_core(lambda_um)?;
    let k0 = 2.0 * std::f64::consts::PI / lambda_um; // 1/µm
    let w = (v * v - u * u).max(0.0).sqrt();
    let n_eff = (n_co * n_co - (u / (k0 * fiber.core_radius_um)).powi(2)).sqrt();
    Ok(ModeSolution {
        mode,
        omega: omega_from_lambda(lambda_um * 1e-6),
        n_eff,
        u,
        w,
        v,
        core_radius_um: fiber.core_radius_um,
    })
}

/// All guided LP modes at `lambda_um`, sorted by descending n_eff. Orientation
/// is reported as even and the axis as fast; both are degenerate in n_eff.
///
/// For V ≲ 0.5 the fundamental mode's confinement (n_eff − n_cl ~ e^{−2/V²})
/// falls below double-precision resolution and the returned list may be empty.
pub fn solve_modes(fiber: &FiberSpec, lambda_um: f64) -> Result<Vec<ModeSolution>> {
    let v = v_number(fiber, lambda_um);
    fiber.n_cladding(lambda_um)?; // surface range errors early
    let mut out = Vec::new();
    let mut l = 0u32;
    loop {
        let roots = roots_for_order(l, v);
        if roots.is_empty() && l > 0 {
            break;
        }
        for (idx, &u) in roots.iter().enumerate() {
            let mode = ModeId::new(l, idx as u32 + 1, Orientation::Even, Axis::Fast);
            out.push(solution_from_u(fiber, mode, lambda_um, u, v)?);
        }
        l += 1;
        if l > v.ceil() as u32 + 2 {
            break; // guard: no guided modes exist this far above cutoff
        }
    }
    out.sort_by(|a, b| b.n_eff.total_cmp(&a.n_eff));
    Ok(out)
}

/// Solve a specific (l, m) mode, keeping the requested orientation and axis.
/// Errors with a cutoff diagnosis if the mode is not guided.
pub fn solve_mode(fiber: &FiberSpec, mode: &ModeId, lambda_um: f64) -> Result<ModeSolution> {
    solve_mode_near(fiber, mode, lambda_um, None)
}

/// Like [`solve_mode`], optionally seeded with a nearby root estimate (e.g.
/// the solution at an adjacent frequency when tabulating dispersion curves);
/// falls back to the full scan when the seeded bracket fails.
pub fn solve_mode_near(
    fiber: &FiberSpec,
    mode: &ModeId,
    lambda_um: f64,
    u_guess: Option<f64>,
) -> Result<ModeSolution> {
    let v = v_number(fiber, lambda_um);
    fiber.n_cladding(lambda_um)?;
    if let Some(guess) = u_guess {
        let lo = (guess - 0.02).max(1e-9);
        let hi = (guess + 0.02).min(v - 1e-9 * v.max(1.0));
        if lo < hi
            && j_l_sign(mode.l, lo) * j_l_sign(mode.l, hi) > 0.0
            && characteristic(mode.l, lo, v) * characteristic(mode.l, hi, v) < 0.0
        {
            if let Some(u) = bisect(mode.l, v, lo, hi) {
                return solution_from_u(fiber, *mode, lambda_um, u, v);
            }
        }
    }
    let roots = roots_for_order(mode.l, v);
    if (roots.len() as u32) < mode.m {
        return Err(Error::ModeCutoff {
            mode: mode.label(),
            lambda_nm: lambda_um * 1e3,
        });
    }
    solution_from_u(fiber, *mode, lambda_um, roots[(mode.m - 1) as usize], v)
}

// ---------------------------------------------------------------------------
// Transverse profiles and overlap integrals
// ---------------------------------------------------------------------------

/// Radial sample count for normalization integrals.
const NORM_SAMPLES: usize = 4096;
/// Default overlap quadrature: 400 radial × 256 angular points, extent 4a.
pub const OVERLAP_RADIAL: usize = 400;
pub const OVERLAP_ANGULAR: usize = 256;
const RADIAL_EXTENT: f64 = 4.0;

/// Unit-normalized transverse profile of a solved mode (∫|F|² dA = 1, F in 1/µm).
#[derive(Debug, Clone)]
pub struct ModeProfile {
    l: u32,
    orientation: Orientation,
    u: f64,
    w: f64,
    a: f64,
    /// continuity factor J_l(u)/K_l(w) for the evanescent part
    edge_ratio: f64,
    norm: f64,
}

impl ModeSolution {
    /// Build the normalized profile (computes the normalization integral once).
    pub fn profile(&self) -> ModeProfile {
        let l = self.mode.l as usize;
        let j_u = bessel_j_seq(l, self.u)[l];
        let k_w = bessel_k_seq(l, self.w)[l];
        let mut p = ModeProfile {
            l: self.mode.l,
            orientation: self.mode.orientation,
            u: self.u,
            w: self.w,
            a: self.core_radius_um,
            edge_ratio: j_u / k_w,
            norm: 1.0,
        };
        let angular = if self.mode.l == 0 { 2.0 * std::f64::consts::PI } else { std::f64::consts::PI };
        let rmax = RADIAL_EXTENT * p.a;
        let dr = rmax / (NORM_SAMPLES - 1) as f64;
        let mut integral = 0.0;
        for i in 0..NORM_SAMPLES {
            let r = i as f64 * dr;
            let f = p.radial(r);
            let term = f * f * r;
            integral += if i == 0 || i == NORM_SAMPLES - 1 { 0.5 * term } else { term };
        }
        integral *= dr * angular;
        p.norm = 1.0 / integral.sqrt();
        p
    }
}

impl ModeProfile {
    /// Radial factor before normalization: J_l(ur/a) inside the core,
    /// matched K_l(wr/a) decay outside.
    fn radial(&self, r_um: f64) -> f64 {
        let l = self.l as usize;
        if r_um <= self.a {
            bessel_j_seq(l, self.u * r_um / self.a)[l]
        } else {
            self.edge_ratio * bessel_k_seq(l, self.w * r_um / self.a)[l]
        }
    }

    /// Normalized amplitude F(r, θ) in 1/µm.
    pub fn eval(&self, r_um: f64, theta: f64) -> f64 {
        let ang = match self.orientation {
            Orientation::Even => (self.l as f64 * theta).cos(),
            Orientation::Odd => (self.l as f64 * theta).sin(),
        };
        self.norm * self.radial(r_um) * ang
    }
}

/// True iff the four-fold angular integral ∫ trig(l₁θ)trig(l₂θ)trig(l₃θ)trig(l₄θ) dθ
/// is nonzero, decided analytically by expanding each factor into e^{±ilθ}.
pub fn azimuthal_selection(p1: &ModeId, p2: &ModeId, s: &ModeId, i: &ModeId) -> bool {
    // each factor contributes terms (frequency, complex coefficient)
    let expand = |m: &ModeId| -> Vec<(i64, [f64; 2])> {
        let l = m.l as i64;
        if l == 0 {
            vec![(0, [1.0, 0.0])]
        } else {
            match m.orientation {
                // cos lθ = (e^{ilθ} + e^{−ilθ})/2
                Orientation::Even => vec![(l, [0.5, 0.0]), (-l, [0.5, 0.0])],
                // sin lθ = (e^{ilθ} − e^{−ilθ})/(2i) = −i/2·e^{ilθ} + i/2·e^{−ilθ}
                Orientation::Odd => vec![(l, [0.0, -0.5]), (-l, [0.0, 0.5])],
            }
        }
    };
    let (mut re, mut im) = (0.0, 0.0);
    for (f1, c1) in expand(p1) {
        for (f2, c2) in expand(p2) {
            for (f3, c3) in expand(s) {
                for (f4, c4) in expand(i) {
                    if f1 + f2 + f3 + f4 != 0 {
                        continue;
                    }
                    // multiply the four complex coefficients
                    let mut acc = c1;
                    for c in [c2, c3, c4] {
                        acc = [acc[0] * c[0] - acc[1] * c[1], acc[0] * c[1] + acc[1] * c[0]];
                    }
                    re += acc[0];
                    im += acc[1];
                }
            }
        }
    }
    (re * re + im * im).sqrt() > 1e-12
}

/// Result of the four-field overlap: value in 1/µm² and a flag marking
/// selection-rule-forbidden quadruples (value forced to zero).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OverlapResult {
    pub value: f64,
    pub forbidden: bool,
}

/// ∫∫ F_{p1}·F_{p2}·F_s·F_i dA over the transverse plane, each field
/// unit-normalized, on the default polar quadrature. The pair-generation rate
/// scales as the square of this value.
pub fn overlap_integral(
    p1: &ModeSolution,
    p2: &ModeSolution,
    s: &ModeSolution,
    i: &ModeSolution,
) -> OverlapResult {
    overlap_integral_with_grid(p1, p2, s, i, OVERLAP_RADIAL, OVERLAP_ANGULAR)
}

/// Overlap on an explicit polar grid (`nr` radial × `ntheta` angular points),
/// exposed so convergence can be checked by doubling the resolution.
pub fn overlap_integral_with_grid(
    p1: &ModeSolution,
    p2: &ModeSolution,
    s: &ModeSolution,
    i: &ModeSolution,
    nr: usize,
    ntheta: usize,
) -> OverlapResult {
    let sols = [p1, p2, s, i];
    if !azimuthal_selection(&p1.mode, &p2.mode, &s.mode, &i.mode) {
        return OverlapResult { value: 0.0, forbidden: true };
    }
    let profiles: Vec<ModeProfile> = sols.iter().map(|m| m.profile()).collect();
    let a_max = sols.iter().map(|m| m.core_radius_um).fold(0.0, f64::max);
    let rmax = RADIAL_EXTENT * a_max;
    let dr = rmax / (nr - 1) as f64;
    let mut radial = 0.0;
    for k in 0..nr {
        let r = k as f64 * dr;
        let mut prod = r;
        for p in &profiles {
            prod *= p.norm * p.radial(r);
        }
        radial += if k == 0 || k == nr - 1 { 0.5 * prod } else { prod };
    }
    radial *= dr;
    // midpoint angular sum; exact for the low-order trig polynomial integrand
    let dtheta = 2.0 * std::f64::consts::PI / ntheta as f64;
    let mut angular = 0.0;
    for k in 0..ntheta {
        let theta = k as f64 * dtheta;
        let mut prod = 1.0;
        for (p, sol) in profiles.iter().zip(sols.iter()) {
            let l = sol.mode.l as f64;
            prod *= match p.orientation {
                Orientation::Even => (l * theta).cos(),
                Orientation::Odd => (l * theta).sin(),
            };
        }
        angular += prod;
    }
    angular *= dtheta;
    OverlapResult { value: radial * angular, forbidden: false }
}
