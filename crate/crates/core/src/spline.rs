//! Natural cubic spline interpolation on a uniform grid.
//!
//! Used to cache smooth effective-index curves so that dense frequency grids
//! do not re-run the transcendental mode solver at every point.

/// Natural cubic spline through `(x_i, y_i)` with uniformly spaced `x`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x0: f64,
    dx: f64,
    y: Vec<f64>,
    /// second derivatives at the knots (natural: zero at both ends)
    d2: Vec<f64>,
}

impl CubicSpline {
    /// Build from `n >= 3` uniformly spaced samples starting at `x0` with step `dx`.
    pub fn from_uniform(x0: f64, dx: f64, y: Vec<f64>) -> Self {
        let n = y.len();
        assert!(n >= 3, "spline needs at least 3 points");
        assert!(dx > 0.0);
        // Solve the tridiagonal system for second derivatives (Thomas algorithm).
        // Interior equations: d2[i-1] + 4 d2[i] + d2[i+1] = 6 (y[i-1] - 2 y[i] + y[i+1]) / dx^2
        let mut c = vec![0.0; n]; // scratch super-diagonal factors
        let mut d2 = vec![0.0; n];
        for i in 1..n - 1 {
            let rhs = 6.0 * (y[i - 1] - 2.0 * y[i] + y[i + 1]) / (dx * dx);
            let denom = if i == 1 { 4.0 } else { 4.0 - c[i - 1] };
            d2[i] = (rhs - d2[i - 1]) / denom;
            c[i] = 1.0 / denom;
        }
        for i in (1..n - 1).rev() {
            let next = if i + 1 < n - 1 { d2[i + 1] } else { 0.0 };
            d2[i] -= c[i] * next;
        }
        CubicSpline { x0, dx, y, d2 }
    }

    pub fn x_min(&self) -> f64 {
        self.x0
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + self.dx * (self.y.len() - 1) as f64
    }

    /// Evaluate at `x`; clamps to the knot range (callers build with margins).
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let mut t = (x - self.x0) / self.dx;
        t = t.clamp(0.0, (n - 1) as f64);
        let mut i = t as usize;
        if i >= n - 1 {
            i = n - 2; // evaluate the last segment at a = 1 for the right endpoint
        }
        let a = t - i as f64; // fractional position in [0, 1]
        let b = 1.0 - a;
        let h2 = self.dx * self.dx / 6.0;
        b * self.y[i]
            + a * self.y[i + 1]
            + h2 * ((b * b * b - b) * self.d2[i] + (a * a * a - a) * self.d2[i + 1])
    }
}
