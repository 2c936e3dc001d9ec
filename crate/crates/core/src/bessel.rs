//! Bessel functions J_l and modified K_l needed by the LP-mode characteristic equation.
//!
//! Both families are computed from scratch: J_l by Miller's backward recurrence
//! with the even-order sum normalization, K_0/K_1 by trapezoidal quadrature of
//! the integral representation `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt`
//! (exponentially convergent for even analytic integrands), and higher orders by
//! the stable upward recurrence. Target accuracy is 1e-12 relative over the
//! argument ranges used by the mode solver; see the table-driven tests below.

/// J_0(x) .. J_lmax(x) in one backward-recurrence pass. Requires `x >= 0`.
pub fn bessel_j_seq(lmax: usize, x: f64) -> Vec<f64> {
    assert!(x >= 0.0, "bessel_j_seq: negative argument {x}");
    let mut out = vec![0.0; lmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    // Start high enough that the downward recurrence has converged onto the
    // minimal solution by the time it reaches lmax.
    let mut m = lmax.max(x.ceil() as usize) + 32 + (2.0 * x).sqrt() as usize;
    if m % 2 == 1 {
        m += 1;
    }
    let mut j_up = 0.0_f64; // J_{n+1}
    let mut j_cur = 1e-300_f64; // J_n, arbitrary seed
    let mut even_sum = 0.0_f64; // sum over J_{2k}, k >= 1
    let mut n = m;
    loop {
        if n <= lmax {
            out[n] = j_cur;
        }
        if n % 2 == 0 && n >= 2 {
            even_sum += j_cur;
        }
        let j_down = (2.0 * n as f64 / x) * j_cur - j_up;
        j_up = j_cur;
        j_cur = j_down;
        if j_cur.abs() > 1e250 {
            // rescale everything to dodge overflow; normalization fixes units
            j_cur *= 1e-250;
            j_up *= 1e-250;
            even_sum *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
        n -= 1;
        if n == 0 {
            out[0] = j_cur;
            break;
        }
    }
    let norm = j_cur + 2.0 * even_sum; // J_0 + 2*(J_2 + J_4 + ...) = 1
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// J_l(x) for a single order.
pub fn bessel_j(l: usize, x: f64) -> f64 {
    bessel_j_seq(l, x)[l]
}

/// K_0(x) .. K_lmax(x). Requires `x > 0`.
pub fn bessel_k_seq(lmax: usize, x: f64) -> Vec<f64> {
    assert!(x > 0.0, "bessel_k_seq: non-positive argument {x}");
    let mut out = Vec::with_capacity(lmax + 1);
    out.push(k_integral(0, x));
    if lmax >= 1 {
        out.push(k_integral(1, x));
    }
    for n in 1..lmax {
        // upward recurrence is stable for the growing K family
        let next = out[n - 1] + (2.0 * n as f64 / x) * out[n];
        out.push(next);
    }
    out
}

/// K_l(x) for a single order.
pub fn bessel_k(l: usize, x: f64) -> f64 {
    bessel_k_seq(l, x)[l]
}

/// K_0 or K_1: ascending series for small arguments, integral representation
/// refined by step halving otherwise.
fn k_integral(nu: usize, x: f64) -> f64 {
    if x <= 2.0 {
        return k_series(nu, x);
    }
    let mut h = 0.25;
    let mut prev = k_trapezoid(nu, x, h);
    for _ in 0..6 {
        h *= 0.5;
        let cur = k_trapezoid(nu, x, h);
        if (cur - prev).abs() <= 5e-16 * cur.abs() {
            return cur;
        }
        prev = cur;
    }
    prev
}

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Ascending series (DLMF 10.31) for K_0 and K_1, x ≤ 2:
///   K_0(x) = −(ln(x/2)+γ)·I_0(x) + Σ_{k≥1} H_k t^k/(k!)²
///   K_1(x) = 1/x + (ln(x/2)+γ)·I_1(x) − (x/4)·Σ_{k≥0} (H_k+H_{k+1}) t^k/(k!(k+1)!)
/// with t = x²/4 and harmonic numbers H_k.
fn k_series(nu: usize, x: f64) -> f64 {
    let t = x * x / 4.0;
    let lg = (x / 2.0).ln() + EULER_GAMMA;
    if nu == 0 {
        let mut i0 = 1.0; // I_0 partial sum
        let mut s = 0.0; // harmonic-weighted sum
        let mut term = 1.0; // t^k/(k!)^2
        let mut h = 0.0; // H_k
        for k in 1..60 {
            term *= t / ((k * k) as f64);
            h += 1.0 / k as f64;
            i0 += term;
            s += h * term;
            if term < 1e-18 * i0 {
                break;
            }
        }
        -lg * i0 + s
    } else {
        let mut term = 1.0; // t^k/(k!(k+1)!)
        let mut i1s = 1.0; // Σ t^k/(k!(k+1)!)
        let mut s = 1.0; // Σ (H_k+H_{k+1}) t^k/(k!(k+1)!), k=0 term: H_0+H_1 = 1
        let mut h = 0.0; // H_k
        for k in 1..60 {
            term *= t / ((k * (k + 1)) as f64);
            h += 1.0 / k as f64;
            let h_next = h + 1.0 / (k + 1) as f64;
            i1s += term;
            s += (h + h_next) * term;
            if term < 1e-18 * i1s {
                break;
            }
        }
        let i1 = (x / 2.0) * i1s;
        1.0 / x + lg * i1 - (x / 4.0) * s
    }
}

fn k_trapezoid(nu: usize, x: f64, h: f64) -> f64 {
    let nu = nu as f64;
    let mut sum = 0.5 * (-x).exp(); // t = 0 endpoint of the even integrand
    let mut k = 1usize;
    loop {
        let t = k as f64 * h;
        let ch = t.cosh();
        if x * ch > 700.0 {
            break; // exp underflows; tail is negligible
        }
        sum += (-x * ch).exp() * (nu * t).cosh();
        k += 1;
    }
    sum * h
}
