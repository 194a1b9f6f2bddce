//! Special functions that are not in `statrs`: normalised Bessel functions and
//! monotone cubic interpolation.

use std::f64::consts::PI;

pub use statrs::function::gamma::{gamma, ln_gamma};

/// Surface area of the unit sphere in R^d, `2 π^{d/2} / Γ(d/2)`.
pub fn sphere_area(d: usize) -> f64 {
    2.0 * PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0)
}

/// Volume of the unit ball in R^d.
pub fn ball_volume(d: usize) -> f64 {
    PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0 + 1.0)
}

/// Normalised Bessel function `Λ_ν(z) = Γ(ν+1) (2/z)^ν J_ν(z)` with `Λ_ν(0) = 1`.
///
/// `2ν` must be an integer and `ν ≥ -1/2`.
pub fn lambda_nu(nu: f64, z: f64) -> f64 {
    let z = z.abs();
    if z < 4.0 {
        return lambda_series(nu, z);
    }
    let two_nu = (2.0 * nu).round() as i64;
    debug_assert!((2.0 * nu - two_nu as f64).abs() < 1e-12 && two_nu >= -1);
    let scale = gamma(nu + 1.0) * (2.0 / z).powf(nu);
    if two_nu % 2 == 0 {
        scale * bessel_jn((two_nu / 2) as i32, z)
    } else {
        let n = (two_nu - 1) / 2;
        scale * (2.0 * z / PI).sqrt() * spherical_jn(n as i32, z)
    }
}

/// `dΛ_ν/dz = -z / (2(ν+1)) Λ_{ν+1}(z)`.
pub fn lambda_nu_deriv(nu: f64, z: f64) -> f64 {
    -z / (2.0 * (nu + 1.0)) * lambda_nu(nu + 1.0, z)
}

fn lambda_series(nu: f64, z: f64) -> f64 {
    let q = -0.25 * z * z;
    let mut term = 1.0;
    let mut sum = 1.0;
    for m in 1..80 {
        let mf = m as f64;
        term *= q / (mf * (nu + mf));
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) && mf > -q {
            break;
        }
    }
    sum
}

/// Integer-order Bessel function: Hankel's asymptotic expansion for `z > 25`,
/// otherwise the periodic trapezoid rule on Bessel's integral, which converges
/// geometrically once the node count exceeds `z + n`.
pub fn bessel_jn(n: i32, z: f64) -> f64 {
    if z > 25.0 && n.abs() <= 8 {
        return bessel_j_hankel(n as f64, z);
    }
    let n_abs = n.unsigned_abs() as usize;
    let za = z.abs();
    let m = (za + 12.0 * za.cbrt()).ceil() as usize + n_abs + 30;
    let nf = n as f64;
    let mut s = 0.0;
    for j in 0..m {
        let tau = 2.0 * PI * j as f64 / m as f64;
        s += (nf * tau - z * tau.sin()).cos();
    }
    s / m as f64
}

fn bessel_j_hankel(nu: f64, z: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut p = 1.0;
    let mut q = 0.0;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        let next = term * (mu - odd * odd) / (k as f64 * 8.0 * z);
        if next.abs() > term.abs() || next == 0.0 {
            break;
        }
        term = next;
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * term;
        } else {
            q += sign * term;
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let chi = z - (0.5 * nu + 0.25) * PI;
    (2.0 / (PI * z)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Spherical Bessel function `j_n` for `n ≥ -1` by upward recurrence; stable for `z > n`.
fn spherical_jn(n: i32, z: f64) -> f64 {
    let jm1 = z.cos() / z;
    if n == -1 {
        return jm1;
    }
    let mut prev = jm1;
    let mut cur = z.sin() / z;
    for k in 0..n {
        let next = (2 * k + 1) as f64 / z * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Monotone piecewise cubic Hermite interpolant (Fritsch–Carlson slopes).
#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    /// `x` must be strictly increasing with at least two nodes.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n);
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = delta[0];
            d[1] = delta[0];
            return Self { x, y, d };
        }
        for k in 1..n - 1 {
            if delta[k - 1] * delta[k] > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
            }
        }
        d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        Self { x, y, d }
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.x.last().unwrap()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    /// Evaluates inside `[x_min, x_max]`; callers check the range.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let k = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }
}

fn end_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if d.signum() != m0.signum() {
        0.0
    } else if m0.signum() != m1.signum() && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

/// Uniform-grid cubic Hermite table of a smooth radial function, built from
/// exact values and derivatives. Used for hot loops where direct Bessel
/// evaluation is too slow.
#[derive(Debug, Clone)]
pub struct HermiteTable {
    h: f64,
    v: Vec<f64>,
    dv: Vec<f64>,
}

impl HermiteTable {
    pub fn new(r_max: f64, h: f64, f: impl Fn(f64) -> (f64, f64)) -> Self {
        let n = (r_max / h).ceil() as usize + 2;
        let mut v = Vec::with_capacity(n);
        let mut dv = Vec::with_capacity(n);
        for i in 0..n {
            let (a, b) = f(i as f64 * h);
            v.push(a);
            dv.push(b);
        }
        Self { h, v, dv }
    }

    pub fn r_max(&self) -> f64 {
        (self.v.len() - 1) as f64 * self.h
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        let u = r / self.h;
        let k = (u as usize).min(self.v.len() - 2);
        let s = u - k as f64;
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * self.v[k]
            + (s3 - 2.0 * s2 + s) * self.h * self.dv[k]
            + (-2.0 * s3 + 3.0 * s2) * self.v[k + 1]
            + (s3 - s2) * self.h * self.dv[k + 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bessel_matches_reference_values() {
        // Abramowitz & Stegun table values.
        assert_relative_eq!(bessel_jn(0, 1.0), 0.765_197_686_557_966_6, epsilon = 1e-14);
        assert_relative_eq!(bessel_jn(1, 5.0), -0.327_579_137_591_465_2, epsilon = 1e-14);
        assert_relative_eq!(bessel_jn(2, 10.0), 0.254_630_313_685_120_6, epsilon = 1e-14);
        assert_relative_eq!(bessel_jn(1, 100.0), -0.077_145_352_014_112_16, epsilon = 1e-14);
        assert_relative_eq!(bessel_jn(0, 30.0), -0.086_367_983_581_040_2, epsilon = 1e-14);
        assert_relative_eq!(bessel_jn(2, 26.0), -0.154_841_951_631_119_94, epsilon = 1e-14);
        // Both branches agree across the switch.
        for n in 0..4 {
            let z = 25.0 + 1e-9;
            let a = bessel_j_hankel(n as f64, z);
            let m = 120;
            let b: f64 = (0..m).map(|j| {
                let t = 2.0 * PI * j as f64 / m as f64;
                (n as f64 * t - z * t.sin()).cos()
            }).sum::<f64>() / m as f64;
            assert!((a - b).abs() < 1e-14, "n={n}");
        }
    }

    #[test]
    fn lambda_series_and_asymptotic_branches_agree() {
        for &nu in &[-0.5, 0.0, 0.5, 1.0, 1.5, 2.0, 2.5] {
            let a = lambda_series(nu, 3.999_999);
            let b = lambda_nu(nu, 4.0);
            assert!((a - b).abs() < 1e-5, "nu={nu}: {a} vs {b}");
        }
        assert_relative_eq!(lambda_nu(0.5, 7.0), 7f64.sin() / 7.0, epsilon = 1e-14);
        assert_relative_eq!(lambda_nu(-0.5, 7.0), 7f64.cos(), epsilon = 1e-14);
        assert_relative_eq!(lambda_nu(0.0, 7.0), bessel_jn(0, 7.0), epsilon = 1e-14);
        assert_eq!(lambda_nu(1.0, 0.0), 1.0);
    }

    #[test]
    fn lambda_derivative_matches_finite_difference() {
        for &nu in &[0.5, 1.0, 1.5] {
            for &z in &[0.3, 3.9, 4.1, 12.0] {
                let h = 1e-5;
                let fd = (lambda_nu(nu, z + h) - lambda_nu(nu, z - h)) / (2.0 * h);
                assert!((fd - lambda_nu_deriv(nu, z)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn pchip_reproduces_nodes_and_preserves_monotonicity() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| (-v * v).exp()).collect();
        let p = Pchip::new(x.clone(), y.clone());
        for (a, b) in x.iter().zip(&y) {
            assert_relative_eq!(p.eval(*a), *b, epsilon = 1e-14);
        }
        let mut prev = f64::INFINITY;
        for i in 0..=270 {
            let v = p.eval(i as f64 * 0.01);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn sphere_constants() {
        assert_relative_eq!(sphere_area(1), 2.0, epsilon = 1e-14);
        assert_relative_eq!(sphere_area(2), 2.0 * PI, epsilon = 1e-14);
        assert_relative_eq!(sphere_area(3), 4.0 * PI, epsilon = 1e-13);
        assert_relative_eq!(ball_volume(2), PI, epsilon = 1e-14);
    }
}
