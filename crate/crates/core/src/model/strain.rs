//! Closed-form arc integrals of a constant-curvature segment.
//!
//! With `x = kappa * s`:
//!
//! ```text
//! S(kappa, s) = int_0^s cos(kappa u) du = s * sin(x) / x
//! C(kappa, s) = int_0^s sin(kappa u) du = s * (1 - cos(x)) / x
//! ```
//!
//! plus their first and second derivatives with respect to `kappa`. Near
//! `x = 0` the closed forms lose precision and are replaced by series.

/// Below this |kappa * s| the position map uses its 2nd-order Taylor expansion.
pub(crate) const POSITION_TAYLOR_THRESHOLD: f64 = 1e-4;
/// Below this |kappa * s| the curvature derivatives use truncated series.
const DERIVATIVE_SERIES_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ArcIntegrals {
    pub s: f64,
    pub c: f64,
    pub ds: f64,
    pub dc: f64,
    pub dds: f64,
    pub ddc: f64,
}

impl ArcIntegrals {
    pub fn new(kappa: f64, s: f64) -> Self {
        let x = kappa * s;
        let (f, g) = values(x);
        let (df, dg, ddf, ddg) = derivatives(x);
        Self {
            s: s * f,
            c: s * g,
            ds: s * s * df,
            dc: s * s * dg,
            dds: s * s * s * ddf,
            ddc: s * s * s * ddg,
        }
    }

    /// Only the values, skipping derivative evaluation.
    pub fn values_only(kappa: f64, s: f64) -> (f64, f64) {
        let (f, g) = values(kappa * s);
        (s * f, s * g)
    }
}

/// `sin(x)/x` and `(1 - cos x)/x`.
fn values(x: f64) -> (f64, f64) {
    if x.abs() < POSITION_TAYLOR_THRESHOLD {
        let x2 = x * x;
        (1.0 - x2 / 6.0, x / 2.0 - x * x2 / 24.0)
    } else {
        let half = (0.5 * x).sin();
        (x.sin() / x, 2.0 * half * half / x)
    }
}

/// First and second derivatives of `sin(x)/x` and `(1 - cos x)/x`.
fn derivatives(x: f64) -> (f64, f64, f64, f64) {
    if x.abs() < DERIVATIVE_SERIES_THRESHOLD {
        series_derivatives(x)
    } else {
        let (sn, cs) = x.sin_cos();
        let x2 = x * x;
        let x3 = x2 * x;
        let one_minus_cos = 1.0 - cs;
        let df = (x * cs - sn) / x2;
        let ddf = (-x2 * sn - 2.0 * x * cs + 2.0 * sn) / x3;
        let dg = (x * sn - one_minus_cos) / x2;
        let ddg = cs / x - 2.0 * sn / x2 + 2.0 * one_minus_cos / x3;
        (df, dg, ddf, ddg)
    }
}

fn series_derivatives(x: f64) -> (f64, f64, f64, f64) {
    // sin(x)/x   = sum_n (-1)^n x^(2n) / (2n+1)!
    // (1-cos)/x  = sum_n (-1)^(n+1) x^(2n-1) / (2n)!,  n >= 1
    let mut df = 0.0;
    let mut ddf = 0.0;
    let mut dg = 0.0;
    let mut ddg = 0.0;
    for n in 1..=7_i32 {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let two_n = 2.0 * n as f64;
        let fact_odd = factorial(2 * n + 1);
        let fact_even = factorial(2 * n);
        df += sign * two_n * x.powi(2 * n - 1) / fact_odd;
        ddf += sign * two_n * (two_n - 1.0) * x.powi(2 * n - 2) / fact_odd;
        dg += -sign * (two_n - 1.0) * x.powi(2 * n - 2) / fact_even;
        if n >= 2 {
            ddg += -sign * (two_n - 1.0) * (two_n - 2.0) * x.powi(2 * n - 3) / fact_even;
        }
    }
    (df, dg, ddf, ddg)
}

fn factorial(n: i32) -> f64 {
    (1..=n).map(f64::from).product()
}
