//! Gauss–Legendre rules and Simpson integration.

use std::f64::consts::PI;

/// Nodes (ascending) and weights of the `n`-point Gauss–Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        dp = if d != 0.0 { d } else { dp };
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, dp)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn gauss_legendre_on(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    (x.iter().map(|t| c + h * t).collect(), w.iter().map(|v| v * h).collect())
}

/// Composite Gauss–Legendre rule with `n` nodes per panel; panels are given by
/// sorted breakpoints (duplicates and empty panels are skipped).
pub fn composite_gl(breaks: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(n);
    let mut xs = Vec::new();
    let mut ws = Vec::new();
    for p in breaks.windows(2) {
        let (a, b) = (p[0], p[1]);
        if b <= a {
            continue;
        }
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        for (t, w) in gx.iter().zip(&gw) {
            xs.push(c + h * t);
            ws.push(w * h);
        }
    }
    (xs, ws)
}

/// Uniform panels of `[a, b]` with extra breakpoints inserted (sorted, deduplicated).
pub fn panels(a: f64, b: f64, count: usize, extra: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = (0..=count).map(|i| a + (b - a) * i as f64 / count as f64).collect();
    v.extend(extra.iter().copied().filter(|x| *x > a && *x < b));
    v.sort_by(|p, q| p.total_cmp(q));
    v.dedup_by(|p, q| (*p - *q).abs() < 1e-14 * (1.0 + q.abs()));
    v
}

/// Integrates `f` over [a, b] with a composite Gauss–Legendre rule.
pub fn integrate(a: f64, b: f64, panels_n: usize, extra: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = composite_gl(&panels(a, b, panels_n, extra), 12);
    x.iter().zip(&w).map(|(t, wt)| wt * f(*t)).sum()
}

/// Composite Simpson rule on equally spaced samples with spacing `h`. For an
/// even number of samples the last three intervals use the 3/8 rule.
pub fn simpson(y: &[f64], h: f64) -> f64 {
    let n = y.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (y[0] + y[1]),
        3 => h / 3.0 * (y[0] + 4.0 * y[1] + y[2]),
        4 => 3.0 * h / 8.0 * (y[0] + 3.0 * y[1] + 3.0 * y[2] + y[3]),
        _ => {
            let (main, tail) = if n % 2 == 1 { (n, 0.0) } else {
                let k = n - 4;
                (n - 3, 3.0 * h / 8.0 * (y[k] + 3.0 * y[k + 1] + 3.0 * y[k + 2] + y[k + 3]))
            };
            let mut s = y[0] + y[main - 1];
            for (i, v) in y.iter().enumerate().take(main - 1).skip(1) {
                s += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            s * h / 3.0 + tail
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gl_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 12, 48, 96] {
            let (x, w) = gauss_legendre(n);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-13);
            let deg = 2 * n - 1;
            let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            let got: f64 = x.iter().zip(&w).map(|(t, v)| v * t.powi(deg as i32)).sum();
            assert!((got - exact).abs() < 1e-12, "n={n}");
            let even = 2 * n - 2;
            let got: f64 = x.iter().zip(&w).map(|(t, v)| v * t.powi(even as i32)).sum();
            assert_relative_eq!(got, 2.0 / (even as f64 + 1.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn gl_nodes_symmetric() {
        let (x, _) = gauss_legendre(7);
        for i in 0..7 {
            assert!((x[i] + x[6 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn simpson_exact_for_cubics_both_parities() {
        for n in [3usize, 4, 5, 6, 9, 10] {
            let h = 1.0 / (n - 1) as f64;
            let y: Vec<f64> = (0..n).map(|i| {
                let t = i as f64 * h;
                t * t * t - 2.0 * t + 1.0
            }).collect();
            assert_relative_eq!(simpson(&y, h), 0.25, epsilon = 1e-13);
        }
    }

    #[test]
    fn composite_rule_handles_kinks() {
        let v = integrate(-1.0, 2.0, 3, &[0.0], |x| x.abs());
        assert_relative_eq!(v, 2.5, epsilon = 1e-13);
    }
}
