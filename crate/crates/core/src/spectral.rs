//! Nyström discretisation of the kernel integral operator on cubes `[-t, t]^d`,
//! eigenvalue power traces, factorial cumulant masses and Brillinger trends.
//!
//! The symmetric matrix `W^{1/2} C W^{1/2}` on a tensor Gauss–Legendre grid
//! commutes with the reflections `x_i -> -x_i`, so it is block-diagonalised
//! into even/odd parity sectors per axis before the dense eigensolve. On a
//! square grid the mixed sectors (even, odd) and (odd, even) are related by
//! swapping axes and share one spectrum.

use faer::{Mat, Side};
use serde::{Deserialize, Serialize};

use crate::error::{DppError, Result};
use crate::kernel::KernelModel;
use crate::quadrature::{composite_gl, gauss_legendre_on, panels};

/// Largest dense block handed to the eigensolver.
pub const DEFAULT_CAP: usize = 4096;
/// Eigenvalue slack around [0, 1].
pub const RANGE_EPS: f64 = 1e-6;
/// Grid nodes per unit of (spectral band x cube side) needed to resolve the
/// kernel: eigenvalues leave [0, 1] on coarser grids.
pub const NODES_PER_BAND: f64 = 4.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralApprox {
    pub t: f64,
    pub dim: usize,
    pub nodes_per_axis: usize,
    /// One-dimensional Gauss–Legendre nodes on `[-t, t]`; the grid is their tensor power.
    pub axis_nodes: Vec<f64>,
    pub axis_weights: Vec<f64>,
    /// Eigenvalues sorted in decreasing order (unclamped).
    pub eigenvalues: Vec<f64>,
    pub rho: f64,
    pub model_label: String,
}

impl SpectralApprox {
    /// Grid nodes as d-vectors.
    pub fn nodes(&self) -> Vec<Vec<f64>> {
        self.tensor(|v| v.to_vec(), &self.axis_nodes)
    }

    /// Tensor weights, summing to `(2t)^d`.
    pub fn weights(&self) -> Vec<f64> {
        self.tensor(|v| v.iter().product(), &self.axis_weights)
    }

    fn tensor<T>(&self, f: impl Fn(&[f64]) -> T, axis: &[f64]) -> Vec<T> {
        let n = axis.len();
        let total = n.pow(self.dim as u32);
        let mut out = Vec::with_capacity(total);
        let mut buf = vec![0.0; self.dim];
        for flat in 0..total {
            let mut rem = flat;
            for k in (0..self.dim).rev() {
                buf[k] = axis[rem % n];
                rem /= n;
            }
            out.push(f(&buf));
        }
        out
    }

    /// Sum of the raw eigenvalues.
    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Cube volume `(2t)^d`.
    pub fn volume(&self) -> f64 {
        (2.0 * self.t).powi(self.dim as i32)
    }

    /// Largest distance of an eigenvalue outside [0, 1].
    pub fn range_excursion(&self) -> f64 {
        let hi = self.eigenvalues.first().copied().unwrap_or(0.0) - 1.0;
        let lo = -self.eigenvalues.last().copied().unwrap_or(0.0);
        hi.max(lo).max(0.0)
    }

    /// `I_k = Σ λ_j^k` on eigenvalues clamped to [0, 1].
    pub fn power_trace(&self, k: u32) -> f64 {
        // Ascending summation keeps the tiny tail from being swamped.
        self.eigenvalues.iter().rev().map(|l| l.clamp(0.0, 1.0).powi(k as i32)).sum()
    }
}

/// Default grid: 48 (d = 1) or 24 (d = 2) nodes per axis, raised until the
/// spectral band of the kernel is resolved on the cube.
pub fn default_nodes_per_axis(model: &KernelModel, t: f64) -> usize {
    let base = if model.dim() == 1 { 48 } else { 24 };
    let band = model.spectral_band(1e-12);
    let need = if band.is_finite() { (NODES_PER_BAND * band * 2.0 * t).ceil() as usize } else { 0 };
    let n = base.max(need);
    n + n % 2
}

pub fn build_operator(model: &KernelModel, t: f64, nodes_per_axis: usize) -> Result<SpectralApprox> {
    build_operator_with_cap(model, t, nodes_per_axis, DEFAULT_CAP)
}

/// Builds and diagonalises the Nyström matrix. Odd node counts are raised by
/// one so the grid splits into reflection pairs. Fails when the largest parity
/// block exceeds `cap` or when an eigenvalue leaves `[-1e-6, 1 + 1e-6]`
/// (a sign that the grid does not resolve the kernel).
pub fn build_operator_with_cap(model: &KernelModel, t: f64, nodes_per_axis: usize, cap: usize) -> Result<SpectralApprox> {
    let d = model.dim();
    if model.is_poisson() {
        return Err(DppError::Unsupported(
            "the degenerate Poisson kernel is not continuous; no Nyström operator exists".into(),
        ));
    }
    if d > 2 {
        return Err(DppError::Unsupported("operator computations are limited to d <= 2".into()));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(DppError::InvalidInput(format!("half width must be positive, got {t}")));
    }
    if nodes_per_axis < 4 {
        return Err(DppError::InvalidInput("nodes_per_axis must be at least 4".into()));
    }
    let n = nodes_per_axis + nodes_per_axis % 2;
    let m = n / 2;
    let block = m.pow(d as u32);
    if block > cap {
        let max_nodes = 2 * (cap as f64).powf(1.0 / d as f64).floor() as usize;
        return Err(DppError::CapExceeded {
            size: block,
            cap,
            advice: format!(
                "use at most {max_nodes} nodes per axis, or a smaller half width (the default grid at t grows like t)"
            ),
        });
    }
    let (xs, ws) = gauss_legendre_on(-t, t, n);
    let fast = model.fast_radial(2.0 * t * (d as f64).sqrt())?;
    let pos_x = &xs[m..];
    let pos_w = &ws[m..];
    let sw: Vec<f64> = pos_w.iter().map(|w| w.sqrt()).collect();
    let mut eig = Vec::with_capacity(n.pow(d as u32));
    if d == 1 {
        let mut even = Mat::<f64>::zeros(m, m);
        let mut odd = Mat::<f64>::zeros(m, m);
        for a in 0..m {
            for b in 0..=a {
                let cm = fast.eval(pos_x[a] - pos_x[b]);
                let cp = fast.eval(pos_x[a] + pos_x[b]);
                let s = sw[a] * sw[b];
                even[(a, b)] = s * (cm + cp);
                odd[(a, b)] = s * (cm - cp);
            }
        }
        eig.extend(symmetric_eigenvalues(&even)?);
        eig.extend(symmetric_eigenvalues(&odd)?);
    } else {
        let mut dm = vec![0.0; m * m];
        let mut dp = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                dm[a * m + b] = (pos_x[a] - pos_x[b]).powi(2);
                dp[a * m + b] = (pos_x[a] + pos_x[b]).powi(2);
            }
        }
        let mut ee = Mat::<f64>::zeros(block, block);
        let mut eo = Mat::<f64>::zeros(block, block);
        let mut oo = Mat::<f64>::zeros(block, block);
        for a1 in 0..m {
            for a2 in 0..m {
                let ia = a1 * m + a2;
                for b1 in 0..=a1 {
                    let (m1, p1) = (dm[a1 * m + b1], dp[a1 * m + b1]);
                    let b2_end = if b1 == a1 { a2 + 1 } else { m };
                    for b2 in 0..b2_end {
                        let (m2, p2) = (dm[a2 * m + b2], dp[a2 * m + b2]);
                        let cmm = fast.eval((m1 + m2).sqrt());
                        let cmp = fast.eval((m1 + p2).sqrt());
                        let cpm = fast.eval((p1 + m2).sqrt());
                        let cpp = fast.eval((p1 + p2).sqrt());
                        let s = sw[a1] * sw[a2] * sw[b1] * sw[b2];
                        let ib = b1 * m + b2;
                        ee[(ia, ib)] = s * (cmm + cmp + cpm + cpp);
                        eo[(ia, ib)] = s * (cmm - cmp + cpm - cpp);
                        oo[(ia, ib)] = s * (cmm - cmp - cpm + cpp);
                    }
                }
            }
        }
        eig.extend(symmetric_eigenvalues(&ee)?);
        let mixed = symmetric_eigenvalues(&eo)?;
        eig.extend(mixed.iter().copied());
        eig.extend(mixed);
        eig.extend(symmetric_eigenvalues(&oo)?);
    }
    eig.sort_by(|a, b| b.total_cmp(a));
    let spec = SpectralApprox {
        t,
        dim: d,
        nodes_per_axis: n,
        axis_nodes: xs,
        axis_weights: ws,
        eigenvalues: eig,
        rho: model.rho(),
        model_label: model.label().to_string(),
    };
    let exc = spec.range_excursion();
    if exc > RANGE_EPS {
        return Err(DppError::Discretization(format!(
            "eigenvalues reach [{:.6e}, {:.6e}], outside [-1e-6, 1+1e-6] with {n} nodes per axis at t = {t}; \
             use at least {} nodes per axis",
            spec.eigenvalues.last().unwrap(),
            spec.eigenvalues[0],
            default_nodes_per_axis(model, t).max(2 * n)
        )));
    }
    Ok(spec)
}

fn symmetric_eigenvalues(m: &Mat<f64>) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| DppError::Internal(format!("symmetric eigensolver failed: {e:?}")))
}

/// `(-1)^{k+1} (k-1)! I_k(t)`: the factorial cumulant mass of the cube.
pub fn factorial_cumulant_cube(t: f64, k: u32, spec: &SpectralApprox) -> Result<f64> {
    if k < 2 {
        return Err(DppError::InvalidInput("factorial cumulant masses need k >= 2".into()));
    }
    if (spec.t - t).abs() > 1e-12 * t.abs().max(1.0) {
        return Err(DppError::InvalidInput(format!("operator built at t = {}, requested t = {t}", spec.t)));
    }
    let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
    let fact: f64 = (1..k).map(f64::from).product();
    Ok(sign * fact * spec.power_trace(k))
}

/// Cyclic-product integral `∫_{[-t,t]^{dk}} C(x2-x1)...C(x1-xk)` by direct
/// quadrature after reducing out the common translation; an oracle for
/// `power_trace` at k = 2, 3.
pub fn ik_quadrature(model: &KernelModel, t: f64, k: u32) -> Result<f64> {
    let d = model.dim();
    if !(2..=3).contains(&k) {
        return Err(DppError::Unsupported(format!("direct quadrature supports k in {{2, 3}}, got {k}; use power_trace")));
    }
    if d > 2 {
        return Err(DppError::Unsupported("direct quadrature is limited to d <= 2".into()));
    }
    if model.is_poisson() {
        return Ok(0.0);
    }
    let two_t = 2.0 * t;
    let fast = model.fast_radial(2.0 * two_t * (d as f64).sqrt())?;
    let (lag_panels, inner_panels, gl) = if d == 1 { (64, 16, 12) } else { (8, 4, 8) };
    // Lags z in [-2t, 2t] per axis, weight (2t - |z|).
    let (zx, zw) = composite_gl(&panels(-two_t, two_t, lag_panels, &[0.0]), gl);
    match (k, d) {
        (2, 1) => Ok(zx.iter().zip(&zw).map(|(z, w)| w * fast.eval(*z).powi(2) * (two_t - z.abs())).sum()),
        (2, _) => {
            let mut s = 0.0;
            for (z1, w1) in zx.iter().zip(&zw) {
                for (z2, w2) in zx.iter().zip(&zw) {
                    let c = fast.eval(z1.hypot(*z2));
                    s += w1 * w2 * c * c * (two_t - z1.abs()) * (two_t - z2.abs());
                }
            }
            Ok(s)
        }
        _ => {
            // u = x2 - x1, v = x3 - x1; per-axis overlap length
            // 2t - (max(0,u,v) - min(0,u,v)), positive for v in [max(u,0) - 2t, min(u,0) + 2t].
            let inner = |u: f64| -> (Vec<f64>, Vec<f64>) {
                let lo = u.max(0.0) - two_t;
                let hi = u.min(0.0) + two_t;
                let (vx, vw) = composite_gl(&panels(lo, hi, inner_panels, &[u.min(0.0), u.max(0.0)]), gl);
                let lw = vw
                    .iter()
                    .zip(&vx)
                    .map(|(w, v)| w * (two_t - (u.max(*v).max(0.0) - u.min(*v).min(0.0))).max(0.0))
                    .collect();
                (vx, lw)
            };
            if d == 1 {
                let mut s = 0.0;
                for (u, wu) in zx.iter().zip(&zw) {
                    let cu = fast.eval(*u);
                    let (vx, lw) = inner(*u);
                    for (v, w) in vx.iter().zip(&lw) {
                        s += wu * w * cu * fast.eval(v - u) * fast.eval(*v);
                    }
                }
                Ok(s)
            } else {
                let inners: Vec<(Vec<f64>, Vec<f64>)> = zx.iter().map(|u| inner(*u)).collect();
                let mut s = 0.0;
                for (i1, (u1, wu1)) in zx.iter().zip(&zw).enumerate() {
                    let (v1x, l1) = &inners[i1];
                    for (i2, (u2, wu2)) in zx.iter().zip(&zw).enumerate() {
                        let (v2x, l2) = &inners[i2];
                        let cu = fast.eval(u1.hypot(*u2));
                        let mut acc = 0.0;
                        for (v1, w1) in v1x.iter().zip(l1) {
                            for (v2, w2) in v2x.iter().zip(l2) {
                                acc += w1 * w2 * fast.eval((v1 - u1).hypot(v2 - u2)) * fast.eval(v1.hypot(*v2));
                            }
                        }
                        s += wu1 * wu2 * cu * acc;
                    }
                }
                Ok(s)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub t: f64,
    pub k: u32,
    pub i_k: f64,
    pub gamma_fact_k: f64,
    pub ratio: f64,
}

/// Per-volume factorial cumulant masses `|γ_[k]([-t,t]^{dk})| / (2t)^d` along
/// increasing `t`. `nodes_per_axis = None` picks `default_nodes_per_axis`.
pub fn brillinger_trend(model: &KernelModel, k: u32, t_list: &[f64], nodes_per_axis: Option<usize>) -> Result<Vec<TrendPoint>> {
    brillinger_table(model, &[k], t_list, nodes_per_axis)
}

/// As [`brillinger_trend`] for several orders, sharing one operator per `t`.
/// Rows are ordered by `t`, then by `k`.
pub fn brillinger_table(model: &KernelModel, ks: &[u32], t_list: &[f64], nodes_per_axis: Option<usize>) -> Result<Vec<TrendPoint>> {
    if t_list.is_empty() || t_list.windows(2).any(|w| w[1] <= w[0]) || t_list[0] <= 0.0 {
        return Err(DppError::InvalidInput("t_list must be positive and strictly increasing".into()));
    }
    if let Some(k) = ks.iter().find(|k| **k < 2) {
        return Err(DppError::InvalidInput(format!("k = {k} requested; ratios are trivially rho for k = 1")));
    }
    let d = model.dim() as i32;
    let mut rows = Vec::new();
    for &t in t_list {
        let vol = (2.0 * t).powi(d);
        if model.is_poisson() {
            rows.extend(ks.iter().map(|&k| TrendPoint { t, k, i_k: 0.0, gamma_fact_k: 0.0, ratio: 0.0 }));
            continue;
        }
        let n = nodes_per_axis.unwrap_or_else(|| default_nodes_per_axis(model, t));
        let spec = build_operator(model, t, n)?;
        for &k in ks {
            let g = factorial_cumulant_cube(t, k, &spec)?;
            rows.push(TrendPoint { t, k, i_k: spec.power_trace(k), gamma_fact_k: g, ratio: g.abs() / vol });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn g1() -> KernelModel {
        KernelModel::gaussian(1, 1.0, 0.3).unwrap()
    }

    /// Dense reference without the parity reduction.
    fn dense_eigs(model: &KernelModel, t: f64, n: usize) -> Vec<f64> {
        let spec = SpectralApprox {
            t,
            dim: model.dim(),
            nodes_per_axis: n,
            axis_nodes: gauss_legendre_on(-t, t, n).0,
            axis_weights: gauss_legendre_on(-t, t, n).1,
            eigenvalues: vec![],
            rho: model.rho(),
            model_label: String::new(),
        };
        let nodes = spec.nodes();
        let w = spec.weights();
        let big = Mat::<f64>::from_fn(nodes.len(), nodes.len(), |i, j| {
            let z: Vec<f64> = nodes[i].iter().zip(&nodes[j]).map(|(a, b)| a - b).collect();
            (w[i] * w[j]).sqrt() * model.at(&z)
        });
        let mut e = symmetric_eigenvalues(&big).unwrap();
        e.sort_by(|a, b| b.total_cmp(a));
        e
    }

    #[test]
    fn parity_blocks_match_dense_matrix() {
        let m = g1();
        let s = build_operator(&m, 1.0, 20).unwrap();
        let e = dense_eigs(&m, 1.0, 20);
        for (a, b) in s.eigenvalues.iter().zip(&e) {
            assert!((a - b).abs() < 1e-12);
        }
        let m2 = KernelModel::gaussian(2, 100.0, 0.05).unwrap();
        let s2 = build_operator(&m2, 0.1, 12).unwrap();
        let e2 = dense_eigs(&m2, 0.1, 12);
        assert_eq!(s2.eigenvalues.len(), e2.len());
        for (a, b) in s2.eigenvalues.iter().zip(&e2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_trace_example() {
        let s = build_operator(&g1(), 1.0, 64).unwrap();
        assert_relative_eq!(s.trace(), 2.0, max_relative = 1e-12);
        assert_relative_eq!(s.power_trace(1), 2.0, max_relative = 1e-12);
        assert_relative_eq!(s.weights().iter().sum::<f64>(), 2.0, max_relative = 1e-13);
        assert!(s.range_excursion() <= RANGE_EPS);
    }

    #[test]
    fn bessel_small_cube_trace() {
        let b = KernelModel::bessel(2, 100.0).unwrap();
        let s = build_operator(&b, 0.5, 24).unwrap();
        assert_relative_eq!(s.trace(), 100.0, max_relative = 1e-10);
        assert_eq!(s.nodes().len(), 576);
    }

    #[test]
    fn poisson_rejected_and_cap_enforced() {
        let p = KernelModel::poisson(1, 1.0).unwrap();
        assert!(matches!(build_operator(&p, 1.0, 48), Err(DppError::Unsupported(_))));
        let m = KernelModel::gaussian(2, 1.0, 0.3).unwrap();
        assert!(matches!(build_operator(&m, 1.0, 200), Err(DppError::CapExceeded { .. })));
    }

    #[test]
    fn coarse_grid_is_reported() {
        let b = KernelModel::bessel(2, 100.0).unwrap();
        assert!(matches!(build_operator(&b, 1.0, 24), Err(DppError::Discretization(_))));
    }

    #[test]
    fn power_traces_monotone_and_bounded() {
        let s = build_operator(&g1(), 2.0, default_nodes_per_axis(&g1(), 2.0)).unwrap();
        let mut prev = s.power_trace(1);
        for k in 2..40 {
            let p = s.power_trace(k);
            assert!(p <= prev + 1e-15);
            prev = p;
        }
        let g4 = factorial_cumulant_cube(2.0, 4, &s).unwrap();
        assert!(g4 <= 0.0 && g4.abs() <= 6.0 * s.power_trace(1));
        assert!(factorial_cumulant_cube(2.0, 2, &s).unwrap() <= 0.0);
        assert!(factorial_cumulant_cube(2.0, 3, &s).unwrap() >= 0.0);
        assert!(factorial_cumulant_cube(1.0, 3, &s).is_err());
    }

    #[test]
    fn trace_matches_direct_quadrature() {
        let m = g1();
        let s = build_operator(&m, 1.0, 48).unwrap();
        for k in [2u32, 3] {
            let q = ik_quadrature(&m, 1.0, k).unwrap();
            assert!(((s.power_trace(k) - q) / q).abs() < 1e-8, "k={k}");
        }
        assert!(ik_quadrature(&m, 1.0, 3).unwrap() < ik_quadrature(&m, 1.0, 2).unwrap());
        assert!(ik_quadrature(&m, 1.0, 4).is_err());
        let p = KernelModel::poisson(1, 1.0).unwrap();
        assert_eq!(ik_quadrature(&p, 1.0, 2).unwrap(), 0.0);
    }

    #[test]
    fn trace_matches_direct_quadrature_2d() {
        let m = KernelModel::gaussian(2, 50.0, 0.06).unwrap();
        let t = 0.15;
        let s = build_operator(&m, t, default_nodes_per_axis(&m, t)).unwrap();
        for k in [2u32, 3] {
            let q = ik_quadrature(&m, t, k).unwrap();
            assert!(((s.power_trace(k) - q) / q).abs() < 1e-6, "k={k}: {} vs {q}", s.power_trace(k));
        }
    }

    #[test]
    fn trend_properties() {
        let m = g1();
        let rows = brillinger_table(&m, &[2, 3], &[1.0, 2.0], None).unwrap();
        assert_eq!(rows.len(), 4);
        for pair in rows.chunks(2) {
            let lmax = 1.0;
            assert!(pair[1].ratio <= 2.0 * pair[0].ratio * lmax);
        }
        let p = KernelModel::poisson(1, 1.0).unwrap();
        assert!(brillinger_trend(&p, 2, &[1.0, 2.0], None).unwrap().iter().all(|r| r.ratio == 0.0));
        assert!(brillinger_trend(&m, 1, &[1.0], None).is_err());
        assert!(brillinger_trend(&m, 2, &[2.0, 1.0], None).is_err());
    }
}
