//! Intensity and pair-correlation estimators, their asymptotic variances, and
//! quadrature for the exact variance functionals of linear and pair statistics.

use serde::{Deserialize, Serialize};

use crate::error::{DppError, Result};
use crate::kernel::{Family, KernelModel};
use crate::quadrature::{composite_gl, gauss_legendre, integrate, panels, simpson};
use crate::special::sphere_area;
use crate::window::{PointPattern, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingFamily {
    Epanechnikov,
    Box,
    Triangular,
}

impl std::str::FromStr for SmoothingFamily {
    type Err = DppError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "epanechnikov" => Ok(Self::Epanechnikov),
            "box" => Ok(Self::Box),
            "triangular" => Ok(Self::Triangular),
            _ => Err(DppError::InvalidInput(format!("unknown smoothing kernel '{s}'"))),
        }
    }
}

/// Numerically computed moments of a smoothing kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelMoments {
    pub mass: f64,
    pub first: f64,
    pub second_abs: f64,
    pub l2: f64,
    /// `∫ (k∗k)(s)^2 ds`.
    pub conv_l2: f64,
}

/// Symmetric, bounded, unit-mass kernel supported on `[-T, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingKernel {
    pub family: SmoothingFamily,
    pub half_width: f64,
    pub moments: KernelMoments,
}

impl Default for SmoothingKernel {
    fn default() -> Self {
        Self::new(SmoothingFamily::Epanechnikov, 1.0).expect("unit Epanechnikov kernel")
    }
}

impl SmoothingKernel {
    pub fn new(family: SmoothingFamily, half_width: f64) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(DppError::InvalidInput(format!("kernel half-width must be positive, got {half_width}")));
        }
        let mut k = Self {
            family,
            half_width,
            moments: KernelMoments { mass: 0.0, first: 0.0, second_abs: 0.0, l2: 0.0, conv_l2: 0.0 },
        };
        k.moments = k.compute_moments();
        Ok(k)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let h = self.half_width;
        let u = t.abs() / h;
        if u > 1.0 {
            return 0.0;
        }
        match self.family {
            SmoothingFamily::Epanechnikov => 0.75 * (1.0 - u * u) / h,
            SmoothingFamily::Box => 0.5 / h,
            SmoothingFamily::Triangular => (1.0 - u) / h,
        }
    }

    /// `(k∗k)(s)`; exact up to rounding (piecewise polynomial integrand).
    pub fn self_convolution(&self, s: f64) -> f64 {
        let h = self.half_width;
        let lo = (-h).max(s - h);
        let hi = h.min(s + h);
        if hi <= lo {
            return 0.0;
        }
        let mut br = vec![lo, hi];
        br.extend([0.0, s].into_iter().filter(|b| *b > lo && *b < hi));
        br.sort_by(f64::total_cmp);
        let (x, w) = composite_gl(&br, 8);
        x.iter().zip(&w).map(|(t, wt)| wt * self.eval(*t) * self.eval(s - t)).sum()
    }

    fn compute_moments(&self) -> KernelMoments {
        let h = self.half_width;
        let (x, w) = composite_gl(&[-h, 0.0, h], 12);
        let q = |f: &dyn Fn(f64) -> f64| -> f64 { x.iter().zip(&w).map(|(t, wt)| wt * f(*t)).sum() };
        let (cx, cw) = composite_gl(&[-2.0 * h, -h, 0.0, h, 2.0 * h], 12);
        let conv_l2 = cx.iter().zip(&cw).map(|(s, wt)| wt * self.self_convolution(*s).powi(2)).sum();
        KernelMoments {
            mass: q(&|t| self.eval(t)),
            first: q(&|t| t * self.eval(t)),
            second_abs: q(&|t| t * t * self.eval(t).abs()),
            l2: q(&|t| self.eval(t).powi(2)),
            conv_l2,
        }
    }
}

/// Bandwidth `b = c · ρ^{-1/d} · |D|^{-1/4}`; the exponent gives
/// `b³|D| → ∞` and `b⁵|D| → 0` as the window grows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthRule {
    pub constant: f64,
}

impl Default for BandwidthRule {
    fn default() -> Self {
        Self { constant: 0.15 }
    }
}

impl BandwidthRule {
    pub fn bandwidth(&self, rho: f64, window: &Window) -> f64 {
        let d = window.dim() as f64;
        self.constant * rho.powf(-1.0 / d) * window.volume().powf(-0.25)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcfEstimate {
    pub r: Vec<f64>,
    pub ghat: Vec<f64>,
    pub bandwidth: f64,
    pub window: Window,
    pub rho_hat: f64,
    /// Unordered pairs with non-zero weight at each r.
    pub pair_counts: Vec<usize>,
}

impl PcfEstimate {
    /// `ρ̂² ĝ(r)`, the ratio-free numerator.
    pub fn scaled(&self) -> Vec<f64> {
        let r2 = self.rho_hat * self.rho_hat;
        self.ghat.iter().map(|g| g * r2).collect()
    }
}

/// `N(D) / |D|`.
pub fn intensity_hat(pattern: &PointPattern) -> f64 {
    pattern.len() as f64 / pattern.window.volume()
}

/// Asymptotic variance of `√|D| (ρ̂ - ρ)`: `ρ - ∫ C²`.
pub fn sigma2_intensity(model: &KernelModel) -> Result<f64> {
    let s = model.rho() - model.l2_norm_sq()?;
    if s < -1e-9 * model.rho().max(1.0) {
        return Err(DppError::Internal(format!("ρ - ∫C² = {s} is negative for a valid kernel")));
    }
    Ok(s.max(0.0))
}

/// `|D ∩ (D + z)|`.
pub fn translation_correction(window: &Window, z: &[f64]) -> f64 {
    window.translation_overlap(z)
}

/// Kernel pcf estimate at a single `r`.
pub fn pcf_hat(pattern: &PointPattern, r: f64, b: f64, k: &SmoothingKernel) -> Result<f64> {
    Ok(pcf_hat_grid(pattern, &[r], b, k)?.ghat[0])
}

/// Kernel pcf estimate on a grid of radii:
/// `ĝ(r) = Σ^{≠} k((r - |x-y|)/b) / (b |D ∩ D^{x-y}|) / (σ_d r^{d-1} ρ̂²)`,
/// summed over ordered pairs.
pub fn pcf_hat_grid(pattern: &PointPattern, rs: &[f64], b: f64, k: &SmoothingKernel) -> Result<PcfEstimate> {
    if rs.is_empty() || rs.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(DppError::InvalidInput("pcf radii must be positive".into()));
    }
    if !(b.is_finite() && b > 0.0) {
        return Err(DppError::InvalidInput(format!("bandwidth must be positive, got {b}")));
    }
    let rho_hat = intensity_hat(pattern);
    if rho_hat == 0.0 {
        return Err(DppError::UndefinedEstimate("empty pattern: ρ̂ = 0".into()));
    }
    let d = pattern.dim();
    let reach = k.half_width * b;
    let r_lo = rs.iter().copied().fold(f64::INFINITY, f64::min) - reach;
    let r_hi = rs.iter().copied().fold(0.0, f64::max) + reach;
    let mut sums = vec![0.0; rs.len()];
    let mut counts = vec![0usize; rs.len()];
    // Radii sorted so each pair touches a contiguous index range.
    let mut order: Vec<usize> = (0..rs.len()).collect();
    order.sort_by(|a, c| rs[*a].total_cmp(&rs[*c]));
    let sorted_r: Vec<f64> = order.iter().map(|i| rs[*i]).collect();

    let mut idx: Vec<usize> = (0..pattern.len()).collect();
    idx.sort_by(|a, c| pattern.point(*a)[0].total_cmp(&pattern.point(*c)[0]));
    let mut z = vec![0.0; d];
    for (a, &i) in idx.iter().enumerate() {
        let p = pattern.point(i);
        for &j in &idx[a + 1..] {
            let q = pattern.point(j);
            if q[0] - p[0] > r_hi {
                break;
            }
            for t in 0..d {
                z[t] = q[t] - p[t];
            }
            let dist = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            if dist < r_lo || dist > r_hi {
                continue;
            }
            let start = sorted_r.partition_point(|r| *r < dist - reach);
            let end = sorted_r.partition_point(|r| *r <= dist + reach);
            if start == end {
                continue;
            }
            let overlap = pattern.window.translation_overlap(&z);
            if overlap <= 0.0 {
                return Err(DppError::InvalidInput(format!(
                    "pair separation {dist} exceeds the window (zero translation overlap)"
                )));
            }
            for s in start..end {
                let kv = k.eval((sorted_r[s] - dist) / b);
                if kv != 0.0 {
                    // Both ordered pairs.
                    sums[order[s]] += 2.0 * kv / (b * overlap);
                    counts[order[s]] += 1;
                }
            }
        }
    }
    let sd = sphere_area(d);
    let ghat = rs
        .iter()
        .zip(&sums)
        .map(|(r, s)| s / (sd * r.powi(d as i32 - 1) * rho_hat * rho_hat))
        .collect();
    Ok(PcfEstimate { r: rs.to_vec(), ghat, bandwidth: b, window: pattern.window.clone(), rho_hat, pair_counts: counts })
}

/// Uniform grid of `n` radii on `[a, b]`.
pub fn radius_grid(interval: (f64, f64), n: usize) -> Vec<f64> {
    let (a, b) = interval;
    if n == 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn check_interval(interval: (f64, f64)) -> Result<()> {
    let (a, b) = interval;
    if !(a.is_finite() && b.is_finite() && a > 0.0 && b > a) {
        return Err(DppError::InvalidInput(format!("interval [{a}, {b}] must satisfy 0 < r_min < r_max")));
    }
    Ok(())
}

/// Bias bound `b² M ρ² ∫ t²|k|`, where `M` is the grid supremum of
/// `|(s^{d-1} g₀(s))''| / r_min^{d-1}` over `I` widened by `T b`.
/// A degenerate interval `(r, r)` gives the pointwise bound.
pub fn bias_bound(model: &KernelModel, interval: (f64, f64), b: f64, k: &SmoothingKernel) -> Result<f64> {
    let (r0, r1) = interval;
    if !(r0.is_finite() && r1.is_finite() && r0 > 0.0 && r1 >= r0) {
        return Err(DppError::InvalidInput(format!("interval [{r0}, {r1}] must satisfy 0 < r_min <= r_max")));
    }
    if !(b.is_finite() && b > 0.0) {
        return Err(DppError::InvalidInput(format!("bandwidth must be positive, got {b}")));
    }
    let lo = r0 - k.half_width * b;
    let hi = r1 + k.half_width * b;
    if lo <= 0.0 {
        return Err(DppError::InvalidInput(format!("interval widened by T·b touches 0 (r_min - T b = {lo})")));
    }
    model.ensure_range(hi)?;
    let p = model.dim() as i32 - 1;
    let phi = |s: f64| s.powi(p) * model.g0(s);
    let n = 4000;
    let step = (hi - lo) / n as f64;
    let h = step.min(0.25 * lo);
    let mut m = 0.0f64;
    for i in 0..=n {
        let s = lo + i as f64 * step;
        let dd = (phi(s + h) - 2.0 * phi(s) + phi(s - h)) / (h * h);
        m = m.max(dd.abs());
    }
    m /= r0.powi(p);
    let rho = model.rho();
    Ok(b * b * m * rho * rho * k.moments.second_abs)
}

/// Which closed form to report for the pointwise pcf variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tau2Variant {
    /// `2 ρ^{-2} g₀(r) / (σ_d r^{d-1}) · √∫k²`.
    Printed,
    /// `2 ρ^{-2} g₀(r) / (σ_d r^{d-1}) · ∫k²`, the delta-method value.
    NoSqrt,
    /// `κ² = 2 ρ² g₀(r) / (σ_d r^{d-1}) · √∫k²`, the variance of `ρ̂² ĝ`.
    Kappa,
}

/// Asymptotic variance of `√(b|D|) (ĝ(r) - g₀(r))` under the chosen form.
pub fn tau2_pointwise(model: &KernelModel, r: f64, k: &SmoothingKernel, variant: Tau2Variant) -> Result<f64> {
    if !(r.is_finite() && r > 0.0) {
        return Err(DppError::InvalidInput(format!("r must be positive, got {r}")));
    }
    let g = model.pcf(r)?;
    let d = model.dim();
    let base = 2.0 * g / (sphere_area(d) * r.powi(d as i32 - 1));
    let rho2 = model.rho().powi(2);
    let l2 = k.moments.l2;
    Ok(match variant {
        Tau2Variant::Printed => base / rho2 * l2.sqrt(),
        Tau2Variant::NoSqrt => base / rho2 * l2,
        Tau2Variant::Kappa => base * rho2 * l2.sqrt(),
    })
}

/// `∫_I (ρ̂² ĝ(r) - ρ² g₀(r))² dr` by Simpson on `grid_n` uniform radii.
/// The reference `(ρ, g₀)` comes from `model`; passing a different model than
/// the one that generated `pattern` gives the goodness-of-fit statistic.
pub fn ise(
    pattern: &PointPattern,
    model: &KernelModel,
    interval: (f64, f64),
    b: f64,
    k: &SmoothingKernel,
    grid_n: usize,
) -> Result<f64> {
    check_interval(interval)?;
    if grid_n < 3 {
        return Err(DppError::InvalidInput("ISE needs at least 3 grid points".into()));
    }
    model.ensure_range(interval.1)?;
    let rs = radius_grid(interval, grid_n);
    let est = pcf_hat_grid(pattern, &rs, b, k)?;
    let rho2 = model.rho().powi(2);
    let y: Vec<f64> = est.scaled().iter().zip(&rs).map(|(v, r)| (v - rho2 * model.g0(*r)).powi(2)).collect();
    Ok(simpson(&y, rs[1] - rs[0]))
}

/// Leading constant of `b|D| E[ISE]`: `2 ρ² ∫_I g₀/(σ_d r^{d-1}) dr · ∫k²`.
pub fn ise_leading_constant(model: &KernelModel, interval: (f64, f64), k: &SmoothingKernel) -> Result<f64> {
    check_interval(interval)?;
    model.ensure_range(interval.1)?;
    let d = model.dim();
    let sd = sphere_area(d);
    let p = d as i32 - 1;
    let i = integrate(interval.0, interval.1, 64, &[], |r| model.g0(r) / (sd * r.powi(p)));
    Ok(2.0 * model.rho().powi(2) * i * k.moments.l2)
}

/// `τ² = 8 ρ⁴ ∫_I (g₀/(σ_d r^{d-1}))² dr · ∫(k∗k)²`.
pub fn tau2_ise(model: &KernelModel, interval: (f64, f64), k: &SmoothingKernel) -> Result<f64> {
    check_interval(interval)?;
    model.ensure_range(interval.1)?;
    let d = model.dim();
    let sd = sphere_area(d);
    let p = d as i32 - 1;
    let i = integrate(interval.0, interval.1, 64, &[], |r| (model.g0(r) / (sd * r.powi(p))).powi(2));
    Ok(8.0 * model.rho().powi(4) * i * k.moments.conv_l2)
}

/// Tensor Gauss–Legendre settings for the variance functionals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceQuadrature {
    pub nodes_per_panel: usize,
    /// Panel width; by default derived from the kernel scale and the lag.
    pub panel_width: Option<f64>,
}

impl Default for VarianceQuadrature {
    fn default() -> Self {
        Self { nodes_per_panel: 4, panel_width: None }
    }
}

/// Support of a pair function: `f(x, y) = 0` unless `x ∈ base` and `|y - x| <= lag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSupport {
    pub base: Window,
    pub lag: f64,
}

/// Length scale on which `C` varies.
fn kernel_scale(model: &KernelModel) -> f64 {
    match &model.spec().family {
        Family::Gaussian { alpha, .. } => *alpha,
        Family::Bessel { rho } => 0.25 * rho.powf(-1.0 / model.dim() as f64),
        Family::PoissonDegenerate { .. } => f64::INFINITY,
        Family::Tabulated { .. } => model.effective_range() / 3.0,
    }
}

/// Distance beyond which `C` is treated as 0 (`|C| < 1e-8 ρ`).
fn interaction_cutoff(model: &KernelModel) -> f64 {
    match &model.spec().family {
        Family::Gaussian { alpha, .. } => alpha * (1e8f64).ln().sqrt(),
        Family::Bessel { .. } => f64::INFINITY,
        Family::PoissonDegenerate { .. } => 0.0,
        Family::Tabulated { .. } => model.max_radius(),
    }
}

struct Rule {
    gx: Vec<f64>,
    gw: Vec<f64>,
    width: f64,
}

impl Rule {
    fn new(q: &VarianceQuadrature, width: f64) -> Result<Self> {
        if q.nodes_per_panel < 1 || !(width.is_finite() && width > 0.0) {
            return Err(DppError::InvalidInput("invalid variance quadrature settings".into()));
        }
        let (gx, gw) = gauss_legendre(q.nodes_per_panel);
        Ok(Self { gx, gw, width })
    }

    fn nodes(&self, lo: f64, hi: f64, extra: &[f64]) -> (Vec<f64>, Vec<f64>) {
        if hi <= lo {
            return (vec![], vec![]);
        }
        let count = ((hi - lo) / self.width).ceil().max(1.0) as usize;
        let br = panels(lo, hi, count, extra);
        let mut xs = Vec::with_capacity(br.len() * self.gx.len());
        let mut ws = Vec::with_capacity(xs.capacity());
        for p in br.windows(2) {
            let c = 0.5 * (p[0] + p[1]);
            let h = 0.5 * (p[1] - p[0]);
            for (t, w) in self.gx.iter().zip(&self.gw) {
                xs.push(c + h * t);
                ws.push(w * h);
            }
        }
        (xs, ws)
    }
}

/// `Var(Σ_x f(x)) = ∫∫ f(x) f(x+y) c_[2](y) dx dy + ρ ∫ f²`, for `d <= 2`;
/// `f` must vanish outside `support`.
pub fn var_linear_statistic(
    model: &KernelModel,
    f: &dyn Fn(&[f64]) -> f64,
    support: &Window,
    quad: &VarianceQuadrature,
) -> Result<f64> {
    let d = model.dim();
    if support.dim() != d {
        return Err(DppError::InvalidInput("support and model dimensions differ".into()));
    }
    if d > 2 {
        return Err(DppError::Unsupported("var_linear_statistic quadrature is limited to d <= 2".into()));
    }
    let sides = support.sides();
    let width = quad.panel_width.unwrap_or_else(|| kernel_scale(model).min(sides.iter().copied().fold(f64::INFINITY, f64::min) / 4.0));
    let rule = Rule::new(quad, width)?;
    let axes: Vec<(Vec<f64>, Vec<f64>)> =
        (0..d).map(|i| rule.nodes(support.lower[i], support.upper[i], &[])).collect();
    // Flattened tensor nodes.
    let (ax0, aw0) = &axes[0];
    let (ax1, aw1) = if d == 2 { (axes[1].0.clone(), axes[1].1.clone()) } else { (vec![0.0], vec![1.0]) };
    let mut pts = Vec::with_capacity(ax0.len() * ax1.len());
    for (i, x) in ax0.iter().enumerate() {
        for (j, y) in ax1.iter().enumerate() {
            let p = if d == 2 { vec![*x, *y] } else { vec![*x] };
            let w = aw0[i] * aw1[j];
            let v = f(&p);
            pts.push((p, w * v, v));
        }
    }
    let rho = model.rho();
    let diag: f64 = pts.iter().map(|(_, wv, v)| wv * v).sum::<f64>() * rho;
    if model.is_poisson() {
        return Ok(diag);
    }
    let diam = sides.iter().map(|s| s * s).sum::<f64>().sqrt();
    let cutoff = interaction_cutoff(model).min(diam);
    let c = model.fast_radial(cutoff)?;
    let n1 = ax1.len();
    let mut cross = 0.0;
    for (p, wv, _) in pts.iter() {
        if *wv == 0.0 {
            continue;
        }
        let lo = ax0.partition_point(|x| *x < p[0] - cutoff);
        let hi = ax0.partition_point(|x| *x <= p[0] + cutoff);
        let mut s = 0.0;
        for i in lo..hi {
            for j in 0..n1 {
                let (q, wq, _) = &pts[i * n1 + j];
                if *wq == 0.0 {
                    continue;
                }
                let r = p.iter().zip(q).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
                if r <= cutoff {
                    s += wq * c.eval(r).powi(2);
                }
            }
        }
        cross -= wv * s;
    }
    Ok(cross + diag)
}

struct PairSetup<'a> {
    rule: Rule,
    /// Extended base `[a - lag, b + lag]` and the base boundaries.
    e: (f64, f64),
    base: (f64, f64),
    lag: f64,
    cutoff: f64,
    rho: f64,
    c: Option<crate::kernel::FastRadial<'a>>,
}

impl<'a> PairSetup<'a> {
    fn new(model: &'a KernelModel, support: &PairSupport, quad: &VarianceQuadrature, extra_range: f64) -> Result<Self> {
        if model.dim() != 1 || support.base.dim() != 1 {
            return Err(DppError::Unsupported(
                "pair-statistic quadrature grows like 4d dimensions; only d = 1 is supported".into(),
            ));
        }
        let lag = support.lag;
        if !(lag.is_finite() && lag > 0.0) {
            return Err(DppError::InvalidInput("pair support lag must be positive".into()));
        }
        let base = (support.base.lower[0], support.base.upper[0]);
        let e = (base.0 - lag, base.1 + lag);
        let width = quad.panel_width.unwrap_or_else(|| 0.5 * kernel_scale(model).min(lag));
        let rule = Rule::new(quad, width)?;
        let span = e.1 - e.0 + extra_range;
        let cutoff = interaction_cutoff(model).min(span);
        let c = if model.is_poisson() { None } else { Some(model.fast_radial(span + 2.0 * lag)?) };
        Ok(Self { rule, e, base, lag, cutoff, rho: model.rho(), c })
    }

    fn cv(&self, r: f64) -> f64 {
        self.c.as_ref().map_or(0.0, |c| c.eval(r.abs()))
    }

    fn c2(&self, u: f64) -> f64 {
        -self.cv(u).powi(2)
    }

    fn c3(&self, u: f64, v: f64) -> f64 {
        2.0 * self.cv(u) * self.cv(v) * self.cv(v - u)
    }

    fn c4(&self, u: f64, v: f64, w: f64) -> f64 {
        let (cu, cv, cw) = (self.cv(u), self.cv(v), self.cv(w));
        let (cuv, cuw, cvw) = (self.cv(u - v), self.cv(u - w), self.cv(v - w));
        -2.0 * (cu * cv * cuw * cvw + cu * cw * cuv * cvw + cv * cw * cuv * cuw)
    }

    fn outer(&self) -> (Vec<f64>, Vec<f64>) {
        self.rule.nodes(self.e.0, self.e.1, &[self.base.0, self.base.1])
    }

    /// Lag nodes for a new point `p + t`, split where it crosses the base boundary.
    fn lags_at(&self, p: f64) -> (Vec<f64>, Vec<f64>) {
        self.rule.nodes(-self.lag, self.lag, &[0.0, self.base.0 - p, self.base.1 - p])
    }

    /// Nodes for an offset `u` with `x + u` in the extended base and `|u| <= reach`.
    fn offsets(&self, x: f64, reach: f64) -> (Vec<f64>, Vec<f64>) {
        let lo = (self.e.0 - x).max(-reach);
        let hi = (self.e.1 - x).min(reach);
        self.rule.nodes(lo, hi, &[self.base.0 - x, self.base.1 - x, 0.0])
    }
}

/// Variance of `Σ^{≠}_{(x,y)} f(x, y)` for `d = 1`, from the ten-term expansion
/// in the cumulant densities `c_[2]`, `c_[3]`, `c_[4]`. The expansion holds for
/// symmetric `f`; since the statistic only depends on `(f(x,y) + f(y,x))/2`,
/// that symmetrisation is applied first.
pub fn var_pair_statistic(
    model: &KernelModel,
    f: &dyn Fn(&[f64], &[f64]) -> f64,
    support: &PairSupport,
    quad: &VarianceQuadrature,
) -> Result<f64> {
    let s = PairSetup::new(model, support, quad, 0.0)?;
    let g = |x: f64, y: f64| 0.5 * (f(&[x], &[y]) + f(&[y], &[x]));
    let (xs, xw) = s.outer();
    let rho = s.rho;
    let poisson = model.is_poisson();

    // Two-point terms.
    let mut t1 = 0.0;
    let mut t2 = 0.0;
    // Three-point terms.
    let (mut t3, mut t4, mut t5, mut t6) = (0.0, 0.0, 0.0, 0.0);
    for (x, wx) in xs.iter().zip(&xw) {
        let (ls, lw) = s.lags_at(*x);
        let mut inner6 = 0.0;
        for (y, wy) in ls.iter().zip(&lw) {
            let gxy = g(*x, x + y);
            inner6 += wy * g(x + y, *x);
            if gxy == 0.0 {
                continue;
            }
            let w = wx * wy;
            t2 += w * gxy * gxy;
            if poisson {
                continue;
            }
            t1 += w * gxy * gxy * s.c2(*y);
            // x is the shared point: g(x+y, x) g(x, x+t) c2(t).
            for (t, wt) in ls.iter().zip(&lw) {
                t4 += w * wt * gxy * g(*x, x + t) * s.c2(*t);
            }
            let (ts, tw) = s.lags_at(x + y);
            for (t, wt) in ts.iter().zip(&tw) {
                let u = y + t;
                let w3 = w * wt;
                let g2 = g(x + y, x + u);
                // Points x, x+y, x+u with x+u tied to x+y.
                t3 += w3 * gxy * g2 * s.c3(*y, u);
                // g(x, x+y) g(x+y, x+u) c2(u).
                t5 += w3 * gxy * g2 * s.c2(u);
            }
        }
        t6 += wx * inner6 * inner6;
    }
    let t1 = 2.0 * t1;
    let t2 = 2.0 * rho * rho * t2;
    let t3 = 4.0 * t3;
    let t4 = 8.0 * rho * t4;
    let t5 = 4.0 * rho * t5;
    let t6 = 4.0 * rho.powi(3) * t6;
    if poisson {
        return Ok(t2 + t6);
    }

    // Four-point terms.
    let (mut t7, mut t8, mut t9, mut t10) = (0.0, 0.0, 0.0, 0.0);
    let reach4 = s.cutoff + 2.0 * s.lag;
    for (x, wx) in xs.iter().zip(&xw) {
        let (us4, uw4) = s.offsets(*x, reach4);
        let (us, uw) = s.offsets(*x, s.cutoff);
        let (ls, lw) = s.lags_at(*x);
        for (y, wy) in ls.iter().zip(&lw) {
            let gxy = g(*x, x + y);
            if gxy == 0.0 {
                continue;
            }
            let w = wx * wy * gxy;
            for (u, wu) in us4.iter().zip(&uw4) {
                let mut acc = 0.0;
                let (ts, tw) = s.lags_at(x + u);
                for (t, wt) in ts.iter().zip(&tw) {
                    let v = u + t;
                    let guv = g(x + u, x + v);
                    if guv != 0.0 {
                        acc += wt * guv * s.c4(*y, *u, v);
                    }
                }
                t7 += w * wu * acc;
            }
            for (u, wu) in us.iter().zip(&uw) {
                let c2u = s.c2(*u);
                let mut a8 = 0.0;
                let mut a9 = 0.0;
                let mut a10 = 0.0;
                let (ts, tw) = s.lags_at(x + u);
                for (t, wt) in ts.iter().zip(&tw) {
                    // (x, x+y) with (x+u, x+u+t).
                    let gq = g(x + u, x + u + t);
                    if gq == 0.0 {
                        continue;
                    }
                    a8 += wt * gq * s.c3(*u, u + t);
                    // x+y+v = x+u+t, v = u + t - y.
                    a9 += wt * gq * s.c2(u + t - y);
                    a10 += wt * gq;
                }
                t8 += w * wu * a8;
                t9 += w * wu * c2u * a9;
                t10 += w * wu * c2u * a10;
            }
        }
    }
    let t8 = 4.0 * rho * t8;
    let t9 = 2.0 * t9;
    let t10 = 4.0 * rho * rho * t10;
    Ok(t1 + t2 + t3 + t4 + t5 + t6 + t7 + t8 + t9 + t10)
}

/// `Cov(Σ^{≠} f(x,y), Σ h(u))` for `d = 1` and symmetric `f`; `h` must vanish
/// outside `h_support`.
pub fn cov_pair_linear(
    model: &KernelModel,
    f: &dyn Fn(&[f64], &[f64]) -> f64,
    support: &PairSupport,
    h: &dyn Fn(&[f64]) -> f64,
    h_support: &Window,
    quad: &VarianceQuadrature,
) -> Result<f64> {
    if h_support.dim() != 1 {
        return Err(DppError::Unsupported("cov_pair_linear supports d = 1 only".into()));
    }
    let hs = (h_support.lower[0], h_support.upper[0]);
    let extra = (hs.1 - hs.0) + (hs.0 - support.base.lower[0]).abs() + (hs.1 - support.base.upper[0]).abs();
    let s = PairSetup::new(model, support, quad, extra)?;
    // Symmetry probe over the extended base.
    let probes = 24;
    for i in 0..=probes {
        for j in 0..=probes {
            let x = s.e.0 + (s.e.1 - s.e.0) * i as f64 / probes as f64;
            let y = s.e.0 + (s.e.1 - s.e.0) * (j as f64 + 0.37) / probes as f64;
            let (a, b) = (f(&[x], &[y]), f(&[y], &[x]));
            if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                return Err(DppError::InvalidInput(format!("pair function is not symmetric: f({x},{y}) = {a}, f({y},{x}) = {b}")));
            }
        }
    }
    let fv = |x: f64, y: f64| f(&[x], &[y]);
    let hv = |u: f64| h(&[u]);
    let (xs, xw) = s.rule.nodes(s.base.0, s.base.1, &[]);
    let rho = s.rho;
    let (mut k1, mut k2, mut k3, mut k4, mut k5) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let reach = s.cutoff;
    for (x, wx) in xs.iter().zip(&xw) {
        let (hu, hw) = if model.is_poisson() {
            (vec![], vec![])
        } else {
            s.rule.nodes((hs.0 - x).max(-reach), (hs.1 - x).min(reach), &[0.0])
        };
        let (ls, lw) = s.lags_at(*x);
        for (y, wy) in ls.iter().zip(&lw) {
            let fxy = fv(*x, x + y);
            if fxy == 0.0 {
                continue;
            }
            let w = wx * wy * fxy;
            k4 += w * (hv(*x) + hv(x + y)) * s.c2(*y);
            k5 += w * (hv(*x) + hv(x + y));
            for (u, wu) in hu.iter().zip(&hw) {
                let hxu = hv(x + u);
                k1 += w * wu * hxu * s.c3(*y, *u);
                k2 += w * wu * hxu * s.c2(*u);
            }
            if !model.is_poisson() {
                let (vs, vw) = s.rule.nodes((hs.0 - x - y).max(-reach), (hs.1 - x - y).min(reach), &[0.0]);
                for (u, wu) in vs.iter().zip(&vw) {
                    k3 += w * wu * hv(x + y + u) * s.c2(*u);
                }
            }
        }
    }
    Ok(k1 + rho * k2 + rho * k3 + k4 + rho * rho * k5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn smoothing_kernel_moments() {
        let e = SmoothingKernel::new(SmoothingFamily::Epanechnikov, 1.0).unwrap();
        assert_relative_eq!(e.moments.mass, 1.0, epsilon = 1e-13);
        assert!(e.moments.first.abs() < 1e-14);
        assert_relative_eq!(e.moments.l2, 0.6, epsilon = 1e-13);
        assert_relative_eq!(e.moments.second_abs, 0.2, epsilon = 1e-13);
        // ∫(k∗k)² for Epanechnikov: 167/385.
        assert_relative_eq!(e.moments.conv_l2, 167.0 / 385.0, epsilon = 1e-12);
        let b = SmoothingKernel::new(SmoothingFamily::Box, 1.0).unwrap();
        assert_relative_eq!(b.moments.second_abs, 1.0 / 3.0, epsilon = 1e-13);
        assert_relative_eq!(b.moments.l2, 0.5, epsilon = 1e-13);
        // k∗k is the triangle (2 - |s|)/4 on [-2, 2]; ∫ of its square is 1/3.
        assert_relative_eq!(b.moments.conv_l2, 1.0 / 3.0, epsilon = 1e-12);
        let t = SmoothingKernel::new(SmoothingFamily::Triangular, 2.0).unwrap();
        assert_relative_eq!(t.moments.mass, 1.0, epsilon = 1e-13);
        assert_relative_eq!(t.moments.second_abs, 4.0 / 6.0, epsilon = 1e-13);
        assert_relative_eq!(t.moments.l2, 2.0 / 6.0, epsilon = 1e-13);
    }

    #[test]
    fn intensity_and_sigma2() {
        let w = Window::cube(2, 1.0).unwrap();
        let pts: Vec<Vec<f64>> = (0..9).map(|i| vec![(i % 3) as f64 / 3.0, (i / 3) as f64 / 3.0]).collect();
        let p = PointPattern::from_points(w.clone(), &pts).unwrap();
        assert_eq!(intensity_hat(&p), 9.0);
        assert_eq!(intensity_hat(&PointPattern::from_points(w, &[]).unwrap()), 0.0);
        let g = KernelModel::gaussian(2, 100.0, 0.05).unwrap();
        assert_relative_eq!(sigma2_intensity(&g).unwrap(), 100.0 - 10_000.0 * std::f64::consts::PI * 0.0025 / 2.0, epsilon = 1e-10);
        assert!(sigma2_intensity(&KernelModel::bessel(2, 100.0).unwrap()).unwrap().abs() < 1e-9);
        assert_eq!(sigma2_intensity(&KernelModel::poisson(2, 5.0).unwrap()).unwrap(), 5.0);
    }

    #[test]
    fn two_point_pcf_hand_value() {
        let w = Window::cube(2, 2.0).unwrap();
        let p = PointPattern::from_points(w.clone(), &[vec![0.5, 0.5], vec![0.8, 0.9]]).unwrap();
        let k = SmoothingKernel::new(SmoothingFamily::Box, 1.0).unwrap();
        let (r, b) = (0.5, 0.05);
        let rho_hat = 2.0 / 4.0;
        let overlap = (2.0 - 0.3) * (2.0 - 0.4);
        let expected = 2.0 * 0.5 / (b * overlap) / (2.0 * std::f64::consts::PI * r * rho_hat * rho_hat);
        assert_relative_eq!(pcf_hat(&p, r, b, &k).unwrap(), expected, epsilon = 1e-14);
        assert_eq!(pcf_hat(&p, 0.2, b, &k).unwrap(), 0.0);
        assert!(matches!(
            pcf_hat(&PointPattern::from_points(w, &[]).unwrap(), r, b, &k),
            Err(DppError::UndefinedEstimate(_))
        ));
    }

    #[test]
    fn ise_constant_discrepancy() {
        // Poisson reference (g₀ = 1) and an empty-neighbourhood pattern:
        // ρ̂²ĝ = 0, so the integrand is ρ⁴ on I.
        let w = Window::cube(2, 1.0).unwrap();
        let p = PointPattern::from_points(w, &[vec![0.1, 0.1], vec![0.9, 0.9]]).unwrap();
        let m = KernelModel::poisson(2, 3.0).unwrap();
        let k = SmoothingKernel::default();
        let v = ise(&p, &m, (0.1, 0.4), 0.01, &k, 65).unwrap();
        assert_relative_eq!(v, 81.0 * 0.3, epsilon = 1e-12);
    }
}
