//! Stationary DPP kernels: evaluation, Fourier transform, existence and the
//! second- to fourth-order cumulant densities.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{DppError, Result};
use crate::quadrature::{composite_gl, gauss_legendre_on, panels};
use crate::special::{ball_volume, gamma, lambda_nu, lambda_nu_deriv, sphere_area, HermiteTable, Pchip};

/// Acceptance slack on `sup F <= 1` for closed-form spectra.
pub const EXISTENCE_TOL: f64 = 1e-12;
/// Acceptance slack for numerically transformed tabulated kernels.
pub const TABULATED_EXISTENCE_TOL: f64 = 1e-6;
/// Largest jump between adjacent tabulated values, as a fraction of rho.
pub const TABULATED_MAX_JUMP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Gaussian { rho: f64, alpha: f64 },
    Bessel { rho: f64 },
    PoissonDegenerate { rho: f64 },
    /// Radial table `C(r[i]) = c[i]`, with `r[0] = 0`.
    Tabulated { rho: f64, r: Vec<f64>, c: Vec<f64> },
}

impl Family {
    pub fn rho(&self) -> f64 {
        match self {
            Family::Gaussian { rho, .. }
            | Family::Bessel { rho }
            | Family::PoissonDegenerate { rho }
            | Family::Tabulated { rho, .. } => *rho,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Gaussian { .. } => "gaussian",
            Family::Bessel { .. } => "bessel",
            Family::PoissonDegenerate { .. } => "poisson",
            Family::Tabulated { .. } => "tabulated",
        }
    }
}

/// Unvalidated model description, as parsed from user input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dim: usize,
    #[serde(flatten)]
    pub family: Family,
    #[serde(default)]
    pub label: String,
}

impl ModelSpec {
    pub fn gaussian(dim: usize, rho: f64, alpha: f64) -> Self {
        Self::new(dim, Family::Gaussian { rho, alpha })
    }

    pub fn bessel(dim: usize, rho: f64) -> Self {
        Self::new(dim, Family::Bessel { rho })
    }

    pub fn poisson(dim: usize, rho: f64) -> Self {
        Self::new(dim, Family::PoissonDegenerate { rho })
    }

    pub fn tabulated(dim: usize, rho: f64, r: Vec<f64>, c: Vec<f64>) -> Self {
        Self::new(dim, Family::Tabulated { rho, r, c })
    }

    pub fn new(dim: usize, family: Family) -> Self {
        let label = match &family {
            Family::Gaussian { rho, alpha } => format!("gaussian:rho={rho},alpha={alpha},d={dim}"),
            Family::Bessel { rho } => format!("bessel:rho={rho},d={dim}"),
            Family::PoissonDegenerate { rho } => format!("poisson:rho={rho},d={dim}"),
            Family::Tabulated { rho, r, .. } => format!("tabulated:rho={rho},n={},d={dim}", r.len()),
        };
        Self { dim, family, label }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    fn validate_params(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(DppError::InvalidModel(format!("dimension {} not in 1..=3", self.dim)));
        }
        let rho = self.family.rho();
        if !(rho.is_finite() && rho > 0.0) {
            return Err(DppError::InvalidModel(format!("rho must be positive, got {rho}")));
        }
        match &self.family {
            Family::Gaussian { alpha, .. } if !(alpha.is_finite() && *alpha > 0.0) => {
                Err(DppError::InvalidModel(format!("alpha must be positive, got {alpha}")))
            }
            Family::Tabulated { r, c, .. } => validate_table(rho, r, c),
            _ => Ok(()),
        }
    }
}

fn validate_table(rho: f64, r: &[f64], c: &[f64]) -> Result<()> {
    if r.len() != c.len() {
        return Err(DppError::InvalidModel("tabulated r and c lengths differ".into()));
    }
    if r.len() < 4 {
        return Err(DppError::InvalidModel("tabulated kernel needs at least 4 nodes".into()));
    }
    if r[0] != 0.0 {
        return Err(DppError::InvalidModel("tabulated grid must start at r = 0".into()));
    }
    if r.windows(2).any(|w| w[1] <= w[0]) || r.iter().chain(c).any(|v| !v.is_finite()) {
        return Err(DppError::InvalidModel("tabulated grid must be finite and strictly increasing".into()));
    }
    if (c[0] - rho).abs() > 1e-6 * rho {
        return Err(DppError::InvalidModel(format!("tabulated C(0) = {} differs from rho = {rho}", c[0])));
    }
    if let Some(w) = c.windows(2).find(|w| (w[1] - w[0]).abs() > TABULATED_MAX_JUMP * rho) {
        return Err(DppError::InvalidModel(format!(
            "tabulated kernel jumps from {} to {} (more than {}% of rho); continuity required",
            w[0],
            w[1],
            TABULATED_MAX_JUMP * 100.0
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExistenceReport {
    pub valid: bool,
    pub sup_spectrum: f64,
    pub degenerate: bool,
    pub reason: Option<String>,
}

/// Checks `0 <= F(C) <= 1`. Closed form for Gaussian and Bessel, probe-grid
/// maximisation of the numerical Hankel transform for tabulated kernels.
pub fn check_existence(spec: &ModelSpec) -> Result<ExistenceReport> {
    spec.validate_params()?;
    let d = spec.dim as f64;
    let rep = match &spec.family {
        Family::Gaussian { rho, alpha } => {
            let sup = rho * (PI * alpha * alpha).powf(d / 2.0);
            let valid = sup <= 1.0 + EXISTENCE_TOL;
            let bound = PI.powf(-0.5) * rho.powf(-1.0 / d);
            ExistenceReport {
                valid,
                sup_spectrum: sup,
                degenerate: false,
                reason: (!valid).then(|| format!("alpha = {alpha} exceeds the bound {bound:.6}")),
            }
        }
        Family::Bessel { .. } => {
            ExistenceReport { valid: true, sup_spectrum: 1.0, degenerate: false, reason: None }
        }
        Family::PoissonDegenerate { .. } => {
            ExistenceReport { valid: true, sup_spectrum: 0.0, degenerate: true, reason: None }
        }
        Family::Tabulated { r, c, .. } => {
            let tab = Tabulated::new(spec.dim, r.clone(), c.clone());
            let probes = tab.probe_grid();
            let mut sup = f64::NEG_INFINITY;
            let mut min = f64::INFINITY;
            for s in probes {
                let f = tab.fourier(s);
                sup = sup.max(f);
                min = min.min(f);
            }
            let tol = TABULATED_EXISTENCE_TOL;
            let reason = if min < -tol {
                Some(format!("negative spectral density (min {min:.3e})"))
            } else if sup > 1.0 + tol {
                Some(format!("spectral density exceeds 1 (sup {sup:.6})"))
            } else {
                None
            };
            ExistenceReport { valid: reason.is_none(), sup_spectrum: sup, degenerate: false, reason }
        }
    };
    Ok(rep)
}

#[derive(Debug, Clone)]
struct Tabulated {
    dim: usize,
    interp: Pchip,
}

impl Tabulated {
    fn new(dim: usize, r: Vec<f64>, c: Vec<f64>) -> Self {
        Self { dim, interp: Pchip::new(r, c) }
    }

    fn r_max(&self) -> f64 {
        self.interp.x_max()
    }

    /// Radial integral `∫_0^{r_max} g(r) r^{d-1} dr`, 8 Gauss points per grid interval.
    fn radial_integral(&self, g: impl Fn(f64, f64) -> f64) -> f64 {
        let (x, w) = composite_gl(self.interp.nodes(), 8);
        let p = self.dim as i32 - 1;
        x.iter().zip(&w).map(|(r, wt)| wt * g(*r, self.interp.eval(*r)) * r.powi(p)).sum()
    }

    fn fourier(&self, s: f64) -> f64 {
        let nu = self.dim as f64 / 2.0 - 1.0;
        sphere_area(self.dim) * self.radial_integral(|r, c| c * lambda_nu(nu, 2.0 * PI * s * r))
    }

    fn probe_grid(&self) -> Vec<f64> {
        let nodes = self.interp.nodes();
        let h = nodes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let s_max = (0.5 / h).min(64.0 / self.r_max() * nodes.len() as f64);
        let n = 128;
        (0..n).map(|i| s_max * i as f64 / (n - 1) as f64).collect()
    }

    fn eval(&self, r: f64) -> Result<f64> {
        if r > self.r_max() * (1.0 + 1e-12) {
            return Err(DppError::OutOfTabulatedRange { r, max: self.r_max() });
        }
        Ok(self.interp.eval(r.min(self.r_max())))
    }
}

#[derive(Debug, Clone)]
enum Inner {
    Gaussian { inv_alpha2: f64 },
    Bessel { nu: f64, a: f64 },
    Poisson,
    Tabulated(Tabulated),
}

/// A validated stationary kernel. Immutable; safe to share across threads.
#[derive(Debug, Clone)]
pub struct KernelModel {
    spec: ModelSpec,
    rho: f64,
    inner: Inner,
    existence: ExistenceReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeinrichBounds {
    pub sup3: f64,
    pub sup_int4: f64,
}

impl KernelModel {
    /// Validates parameters and existence; non-existent kernels are rejected.
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let existence = check_existence(&spec)?;
        if !existence.valid {
            return Err(DppError::NonExistent {
                sup_spectrum: existence.sup_spectrum,
                reason: existence.reason.clone().unwrap_or_default(),
            });
        }
        let rho = spec.family.rho();
        let d = spec.dim as f64;
        let inner = match &spec.family {
            Family::Gaussian { alpha, .. } => Inner::Gaussian { inv_alpha2: 1.0 / (alpha * alpha) },
            Family::Bessel { .. } => Inner::Bessel {
                nu: d / 2.0,
                a: 2.0 * PI.sqrt() * gamma(d / 2.0 + 1.0).powf(1.0 / d) * rho.powf(1.0 / d),
            },
            Family::PoissonDegenerate { .. } => Inner::Poisson,
            Family::Tabulated { r, c, .. } => Inner::Tabulated(Tabulated::new(spec.dim, r.clone(), c.clone())),
        };
        Ok(Self { spec, rho, inner, existence })
    }

    pub fn gaussian(dim: usize, rho: f64, alpha: f64) -> Result<Self> {
        Self::new(ModelSpec::gaussian(dim, rho, alpha))
    }

    pub fn bessel(dim: usize, rho: f64) -> Result<Self> {
        Self::new(ModelSpec::bessel(dim, rho))
    }

    pub fn poisson(dim: usize, rho: f64) -> Result<Self> {
        Self::new(ModelSpec::poisson(dim, rho))
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn label(&self) -> &str {
        &self.spec.label
    }

    pub fn existence(&self) -> &ExistenceReport {
        &self.existence
    }

    pub fn is_poisson(&self) -> bool {
        matches!(self.inner, Inner::Poisson)
    }

    /// Largest radius at which the kernel may be evaluated.
    pub fn max_radius(&self) -> f64 {
        match &self.inner {
            Inner::Tabulated(t) => t.r_max(),
            _ => f64::INFINITY,
        }
    }

    /// Errors if a computation needs `C` beyond the tabulated grid.
    pub fn ensure_range(&self, r: f64) -> Result<()> {
        match &self.inner {
            Inner::Tabulated(t) if r > t.r_max() * (1.0 + 1e-12) => {
                Err(DppError::OutOfTabulatedRange { r, max: t.r_max() })
            }
            _ => Ok(()),
        }
    }

    /// `C(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.eval_radial(norm(x))
    }

    /// `C` at radius `r`.
    pub fn eval_radial(&self, r: f64) -> Result<f64> {
        match &self.inner {
            Inner::Tabulated(t) => t.eval(r.abs()),
            _ => Ok(self.radial(r)),
        }
    }

    /// Infallible radial evaluation; tabulated kernels read as 0 beyond the
    /// grid, so callers must check `ensure_range` first.
    pub(crate) fn radial(&self, r: f64) -> f64 {
        let r = r.abs();
        match &self.inner {
            Inner::Gaussian { inv_alpha2 } => self.rho * (-r * r * inv_alpha2).exp(),
            Inner::Bessel { nu, a } => self.rho * lambda_nu(*nu, a * r),
            Inner::Poisson => {
                if r == 0.0 {
                    self.rho
                } else {
                    0.0
                }
            }
            Inner::Tabulated(t) => {
                if r > t.r_max() {
                    0.0
                } else {
                    t.interp.eval(r)
                }
            }
        }
    }

    #[inline]
    pub(crate) fn at(&self, x: &[f64]) -> f64 {
        self.radial(norm(x))
    }

    /// Radial evaluator for hot loops on `[0, r_max]`; Bessel kernels go
    /// through a cubic Hermite table with relative error below 1e-12.
    pub(crate) fn fast_radial(&self, r_max: f64) -> Result<FastRadial<'_>> {
        self.ensure_range(r_max)?;
        Ok(match &self.inner {
            Inner::Bessel { nu, a } => {
                let (nu, a, rho) = (*nu, *a, self.rho);
                let h = 0.0025 / a;
                FastRadial::Table(HermiteTable::new(r_max * 1.001 + h, h, move |r| {
                    (rho * lambda_nu(nu, a * r), rho * a * lambda_nu_deriv(nu, a * r))
                }))
            }
            _ => FastRadial::Direct(self),
        })
    }

    /// `F(C)(ξ) = ∫ C(x) e^{2iπ x·ξ} dx`.
    pub fn fourier(&self, xi: &[f64]) -> Result<f64> {
        self.fourier_radial(norm(xi))
    }

    pub fn fourier_radial(&self, s: f64) -> Result<f64> {
        let d = self.dim() as f64;
        let s = s.abs();
        match &self.inner {
            Inner::Gaussian { inv_alpha2 } => {
                let a2 = 1.0 / inv_alpha2;
                Ok(self.rho * (PI * a2).powf(d / 2.0) * (-PI * PI * a2 * s * s).exp())
            }
            Inner::Bessel { .. } => Ok(if s <= self.ball_radius() { 1.0 } else { 0.0 }),
            Inner::Poisson => Err(DppError::Unsupported(
                "the degenerate Poisson kernel has constant spectrum rho; no Fourier transform is evaluated".into(),
            )),
            Inner::Tabulated(t) => Ok(t.fourier(s)),
        }
    }

    /// Radius of the spectral ball of volume rho (Bessel family).
    pub fn ball_radius(&self) -> f64 {
        (self.rho / ball_volume(self.dim())).powf(1.0 / self.dim() as f64)
    }

    /// Frequency radius beyond which `F(C) < eps · F(C)(0)`.
    pub fn spectral_band(&self, eps: f64) -> f64 {
        match &self.inner {
            Inner::Gaussian { inv_alpha2 } => (1.0 / eps).ln().sqrt() / (PI * inv_alpha2.recip().sqrt()),
            Inner::Bessel { .. } => self.ball_radius(),
            Inner::Poisson => f64::INFINITY,
            Inner::Tabulated(t) => {
                let probes = t.probe_grid();
                let f0 = t.fourier(0.0).abs().max(1e-300);
                let mut band = probes[1];
                for s in probes {
                    if t.fourier(s).abs() >= eps * f0 {
                        band = s;
                    }
                }
                band
            }
        }
    }

    /// Radius beyond which `|C| < 1e-3 rho`, capped at `10 rho^{-1/d}` for the
    /// slowly decaying Bessel family.
    pub fn effective_range(&self) -> f64 {
        let scale = self.rho.powf(-1.0 / self.dim() as f64);
        match &self.inner {
            Inner::Gaussian { inv_alpha2 } => (1000f64.ln() / inv_alpha2).sqrt(),
            Inner::Poisson => 0.0,
            Inner::Bessel { .. } => {
                let cap = 10.0 * scale;
                let n = 2000;
                let mut last = 0.0;
                for i in 0..=n {
                    let r = cap * i as f64 / n as f64;
                    if self.radial(r).abs() >= 1e-3 * self.rho {
                        last = r;
                    }
                }
                (last + cap / n as f64).min(cap)
            }
            Inner::Tabulated(t) => {
                let nodes = t.interp.nodes();
                let mut last = 0.0;
                for (i, &r) in nodes.iter().enumerate() {
                    if t.interp.eval(r).abs() >= 1e-3 * self.rho {
                        last = nodes[(i + 1).min(nodes.len() - 1)];
                    }
                }
                last
            }
        }
    }

    /// Pair correlation `g0(r) = 1 - C(r)^2 / rho^2`.
    pub fn pcf(&self, r: f64) -> Result<f64> {
        let c = self.eval_radial(r)?;
        Ok(1.0 - c * c / (self.rho * self.rho))
    }

    pub(crate) fn g0(&self, r: f64) -> f64 {
        let c = self.radial(r);
        1.0 - c * c / (self.rho * self.rho)
    }

    /// Reduced factorial cumulant density of order 2, 3 or 4 with
    /// `order - 1` lag arguments.
    pub fn cumulant_density(&self, order: usize, args: &[&[f64]]) -> Result<f64> {
        if !(2..=4).contains(&order) {
            return Err(DppError::UnsupportedOrder(order));
        }
        if args.len() != order - 1 || args.iter().any(|a| a.len() != self.dim()) {
            return Err(DppError::InvalidInput(format!(
                "order {order} needs {} arguments of dimension {}",
                order - 1,
                self.dim()
            )));
        }
        let d = self.dim();
        let diff = |a: &[f64], b: &[f64]| -> f64 { norm_iter((0..d).map(|i| a[i] - b[i])) };
        let mut radii = vec![];
        for a in args {
            radii.push(norm(a));
        }
        for i in 0..args.len() {
            for j in 0..i {
                radii.push(diff(args[i], args[j]));
            }
        }
        for r in &radii {
            self.ensure_range(*r)?;
        }
        let c = |r: f64| self.radial(r);
        Ok(match order {
            2 => -c(radii[0]).powi(2),
            3 => {
                let (u, v) = (args[0], args[1]);
                2.0 * c(norm(u)) * c(norm(v)) * c(diff(v, u))
            }
            _ => {
                let (u, v, w) = (args[0], args[1], args[2]);
                let (cu, cv, cw) = (c(norm(u)), c(norm(v)), c(norm(w)));
                let (cuv, cuw, cvw) = (c(diff(u, v)), c(diff(u, w)), c(diff(v, w)));
                -2.0 * (cu * cv * cuw * cvw + cu * cw * cuv * cvw + cv * cw * cuv * cuw)
            }
        })
    }

    /// `∫ C(x)^2 dx`.
    pub fn l2_norm_sq(&self) -> Result<f64> {
        let d = self.dim() as f64;
        match &self.inner {
            Inner::Gaussian { inv_alpha2 } => {
                Ok(self.rho * self.rho * (PI / (2.0 * inv_alpha2)).powf(d / 2.0))
            }
            Inner::Bessel { .. } => Ok(self.rho),
            Inner::Poisson => Ok(0.0),
            Inner::Tabulated(t) => {
                let tail = t.interp.eval(t.r_max()).abs();
                if tail > 1e-3 * self.rho {
                    return Err(DppError::InvalidModel(format!(
                        "tabulated kernel does not decay (|C(r_max)| = {tail}); C^2 not integrable on the grid"
                    )));
                }
                Ok(sphere_area(self.dim()) * t.radial_integral(|_, c| c * c))
            }
        }
    }

    /// Grid suprema of `|c_[3](u, v)|` and of `∫ |c_[4](u, w, v + w)| dw`
    /// over `|u|, |v| ∈ [r_min - eps, r_max + eps]`.
    pub fn check_heinrich_bounds(&self, interval: (f64, f64), eps: f64, grid_n: usize) -> Result<HeinrichBounds> {
        let (r_lo, r_hi) = interval;
        if !(r_lo <= r_hi && r_lo >= 0.0 && eps >= 0.0) {
            return Err(DppError::InvalidInput("interval must satisfy 0 <= r_min <= r_max".into()));
        }
        if grid_n < 8 {
            return Err(DppError::InvalidInput("grid_n must be at least 8".into()));
        }
        if self.is_poisson() {
            return Ok(HeinrichBounds { sup3: 0.0, sup_int4: 0.0 });
        }
        let d = self.dim();
        let lo = (r_lo - eps).max(0.0);
        let hi = r_hi + eps;
        let radii: Vec<f64> = (0..grid_n).map(|i| lo + (hi - lo) * i as f64 / (grid_n - 1) as f64).collect();
        // Directions of v relative to u = |u| e1.
        let dirs: Vec<Vec<f64>> = match d {
            1 => vec![vec![1.0], vec![-1.0]],
            _ => (0..grid_n)
                .map(|j| {
                    let th = PI * j as f64 / (grid_n - 1) as f64;
                    let mut v = vec![0.0; d];
                    v[0] = th.cos();
                    v[1] = th.sin();
                    v
                })
                .collect(),
        };
        let reach = hi + self.effective_range().max(self.spec_range_floor());
        self.ensure_range(2.0 * hi + reach)?;
        let per_axis = if d == 1 { 192 } else if d == 2 { 48 } else { 16 };
        let brk = panels(-reach, reach, if d == 1 { 16 } else { 8 }, &[0.0]);
        let (wx, ww) = composite_gl(&brk, per_axis / (brk.len() - 1).max(1));
        let mut sup3: f64 = 0.0;
        let mut sup4: f64 = 0.0;
        let mut w = vec![0.0; d];
        let mut vw = vec![0.0; d];
        let mut idx = vec![0usize; d];
        for &ru in &radii {
            let mut u = vec![0.0; d];
            u[0] = ru;
            for &rv in &radii {
                for dir in &dirs {
                    let v: Vec<f64> = dir.iter().map(|x| x * rv).collect();
                    sup3 = sup3.max(self.cumulant_density(3, &[&u, &v])?.abs());
                    // Tensor quadrature over w.
                    let mut acc = 0.0;
                    idx.iter_mut().for_each(|i| *i = 0);
                    'outer: loop {
                        let mut wt = 1.0;
                        for k in 0..d {
                            w[k] = wx[idx[k]];
                            vw[k] = v[k] + w[k];
                            wt *= ww[idx[k]];
                        }
                        acc += wt * self.cumulant_density(4, &[&u, &w, &vw])?.abs();
                        for k in 0..d {
                            idx[k] += 1;
                            if idx[k] < wx.len() {
                                continue 'outer;
                            }
                            idx[k] = 0;
                        }
                        break;
                    }
                    sup4 = sup4.max(acc);
                }
            }
        }
        Ok(HeinrichBounds { sup3, sup_int4: sup4 })
    }

    fn spec_range_floor(&self) -> f64 {
        match &self.inner {
            Inner::Gaussian { inv_alpha2 } => 6.0 / inv_alpha2.sqrt(),
            _ => 0.0,
        }
    }
}

pub(crate) enum FastRadial<'a> {
    Direct(&'a KernelModel),
    Table(HermiteTable),
}

impl FastRadial<'_> {
    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            FastRadial::Direct(m) => m.radial(r),
            FastRadial::Table(t) => t.eval(r),
        }
    }
}

#[inline]
pub(crate) fn norm(x: &[f64]) -> f64 {
    norm_iter(x.iter().copied())
}

#[inline]
fn norm_iter(it: impl Iterator<Item = f64>) -> f64 {
    it.map(|v| v * v).sum::<f64>().sqrt()
}

/// Numerical `∫_{[-R,R]^d} C(x) e^{2iπ x·ξ} dx` by tensor Gauss–Legendre; an
/// oracle for the closed-form transforms.
pub fn fourier_by_quadrature(model: &KernelModel, xi: &[f64], half_width: f64, nodes: usize) -> f64 {
    let d = model.dim();
    let (x, w) = gauss_legendre_on(-half_width, half_width, nodes);
    let mut total = 0.0;
    let mut idx = vec![0usize; d];
    let mut p = vec![0.0; d];
    loop {
        let mut wt = 1.0;
        let mut phase = 0.0;
        for k in 0..d {
            p[k] = x[idx[k]];
            wt *= w[idx[k]];
            phase += p[k] * xi[k];
        }
        total += wt * model.at(&p) * (2.0 * PI * phase).cos();
        let mut k = 0;
        loop {
            if k == d {
                return total;
            }
            idx[k] += 1;
            if idx[k] < nodes {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use crate::quadrature::integrate;

    /// `σ_d ∫_0^R f(r) r^{d-1} dr`.
    fn radial_volume_integral(m: &KernelModel, r_max: f64, f: impl Fn(f64) -> f64) -> f64 {
        let p = m.dim() as i32 - 1;
        sphere_area(m.dim()) * integrate(0.0, r_max, 64, &[], |r| f(r) * r.powi(p))
    }

    fn g2() -> KernelModel {
        KernelModel::gaussian(2, 100.0, 0.05).unwrap()
    }

    #[test]
    fn gaussian_eval_examples() {
        let m = g2();
        assert_eq!(m.eval(&[0.0, 0.0]).unwrap(), 100.0);
        // Independent evaluation: 100 / e.
        assert_relative_eq!(m.eval(&[0.03, 0.04]).unwrap(), 36.787_944_117_144_23, epsilon = 1e-10);
        assert_relative_eq!(m.eval(&[0.05, 0.0]).unwrap(), m.eval(&[-0.05, 0.0]).unwrap());
    }

    #[test]
    fn bessel_limit_at_origin() {
        let m = KernelModel::bessel(2, 100.0).unwrap();
        assert_eq!(m.eval(&[0.0, 0.0]).unwrap(), 100.0);
        assert_relative_eq!(m.eval(&[1e-9, 0.0]).unwrap(), 100.0, epsilon = 1e-9);
        // 2 J1(z)/z with z = a r, a = 2 sqrt(pi rho).
        let a = 2.0 * (PI * 100.0).sqrt();
        let r: f64 = 0.07;
        let z = a * r;
        let expected = 100.0 * 2.0 * crate::special::bessel_jn(1, z) / z;
        assert_relative_eq!(m.eval(&[r, 0.0]).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn fourier_examples() {
        let m = g2();
        assert_relative_eq!(m.fourier(&[0.0, 0.0]).unwrap(), 0.785_398_163_397_448_3, epsilon = 1e-12);
        let b = KernelModel::bessel(2, 100.0).unwrap();
        assert_relative_eq!(b.ball_radius(), 5.641_895_835_477_563, epsilon = 1e-12);
        assert_eq!(b.fourier(&[5.0, 0.0]).unwrap(), 1.0);
        assert_eq!(b.fourier(&[0.0, 6.0]).unwrap(), 0.0);
        let p = KernelModel::poisson(2, 100.0).unwrap();
        assert!(p.fourier(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn gaussian_fourier_matches_quadrature() {
        let m = g2();
        for xi in [[0.0, 0.0], [2.0, 1.0], [5.0, -3.0], [9.0, 4.0]] {
            let q = fourier_by_quadrature(&m, &xi, 0.4, 96);
            let f = m.fourier(&xi).unwrap();
            assert!(((q - f) / f).abs() < 1e-6, "xi={xi:?} q={q} f={f}");
        }
        let m1 = KernelModel::gaussian(1, 1.0, 0.3).unwrap();
        let q = fourier_by_quadrature(&m1, &[0.7], 3.0, 128);
        assert_relative_eq!(q, m1.fourier(&[0.7]).unwrap(), max_relative = 1e-10);
    }

    #[test]
    fn existence_examples() {
        let ok = check_existence(&ModelSpec::gaussian(2, 100.0, 0.056)).unwrap();
        assert!(ok.valid);
        assert!((ok.sup_spectrum - 0.9852).abs() < 1e-3);
        let bad = check_existence(&ModelSpec::gaussian(2, 100.0, 0.06)).unwrap();
        assert!(!bad.valid);
        assert!((bad.sup_spectrum - 1.1310).abs() < 1e-3);
        assert!(KernelModel::gaussian(2, 100.0, 0.06).is_err());
        let b = check_existence(&ModelSpec::bessel(2, 100.0)).unwrap();
        assert!(b.valid && b.sup_spectrum == 1.0);
        let p = check_existence(&ModelSpec::poisson(2, 5.0)).unwrap();
        assert!(p.valid && p.degenerate);
    }

    #[test]
    fn existence_boundary_is_sharp() {
        for d in 1..=3usize {
            for rho in [0.5, 1.0, 100.0, 1234.5] {
                let bound = PI.powf(-0.5) * f64::powf(rho, -1.0 / d as f64);
                assert!(check_existence(&ModelSpec::gaussian(d, rho, bound)).unwrap().valid);
                assert!(check_existence(&ModelSpec::gaussian(d, rho, bound * (1.0 - 1e-9))).unwrap().valid);
                assert!(!check_existence(&ModelSpec::gaussian(d, rho, bound * (1.0 + 1e-9))).unwrap().valid);
            }
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(KernelModel::gaussian(2, -1.0, 0.01).is_err());
        assert!(KernelModel::gaussian(2, 1.0, 0.0).is_err());
        assert!(KernelModel::gaussian(4, 1.0, 0.1).is_err());
    }

    #[test]
    fn pcf_examples() {
        let m = g2();
        assert_eq!(m.pcf(0.0).unwrap(), 0.0);
        assert_relative_eq!(m.pcf(0.05 * 2f64.ln().sqrt()).unwrap(), 0.75, epsilon = 1e-12);
        assert!((m.pcf(1.0).unwrap() - 1.0).abs() < 1e-12);
        let p = KernelModel::poisson(2, 10.0).unwrap();
        assert_eq!(p.pcf(0.0).unwrap(), 0.0);
        assert_eq!(p.pcf(0.1).unwrap(), 1.0);
    }

    #[test]
    fn cumulant_density_examples() {
        let m = KernelModel::gaussian(2, 100.0, 0.05).unwrap();
        let z = [0.0, 0.0];
        assert_eq!(m.cumulant_density(2, &[&z]).unwrap(), -1e4);
        assert_eq!(m.cumulant_density(3, &[&z, &z]).unwrap(), 2e6);
        assert_eq!(m.cumulant_density(4, &[&z, &z, &z]).unwrap(), -6e8);
        assert!(matches!(m.cumulant_density(5, &[&z, &z, &z, &z]), Err(DppError::UnsupportedOrder(5))));
        assert!(m.cumulant_density(3, &[&z]).is_err());
    }

    #[test]
    fn l2_examples() {
        assert_relative_eq!(g2().l2_norm_sq().unwrap(), 39.269_908_169_872_41, epsilon = 1e-10);
        // Radial quadrature oracle.
        let m = g2();
        let q = radial_volume_integral(&m, 0.5, |r| m.radial(r).powi(2));
        assert_relative_eq!(q, 39.269_908_169_872_41, max_relative = 1e-10);
        let b = KernelModel::bessel(2, 100.0).unwrap();
        assert_eq!(b.l2_norm_sq().unwrap(), 100.0);
        assert_eq!(KernelModel::poisson(2, 3.0).unwrap().l2_norm_sq().unwrap(), 0.0);
    }

    #[test]
    fn bessel_parseval_by_radial_quadrature() {
        // ∫ C^2 over a large ball converges slowly (tail ~ 1/R); compare the
        // tail-corrected value.
        let b = KernelModel::bessel(2, 100.0).unwrap();
        let fast = b.fast_radial(40.0).unwrap();
        let r_max = 30.0;
        let n = 240_000;
        let h = r_max / n as f64;
        let y: Vec<f64> = (0..=n).map(|i| {
            let r = i as f64 * h;
            fast.eval(r).powi(2) * r
        }).collect();
        let body = 2.0 * PI * crate::quadrature::simpson(&y, h);
        // Asymptotic tail: C^2 ~ rho^2 * 4 * (2/(pi z)) cos^2(..) / z^2 averaged as 4 rho^2 /(pi a^3 r^3),
        // integrated over r > R with weight 2 pi r: 8 rho^2 / (a^3 R).
        let a = 2.0 * (PI * 100.0).sqrt();
        let tail = 8.0 * 1e4 / (a.powi(3) * r_max);
        assert!(((body + tail) - 100.0).abs() / 100.0 < 1e-4, "{}", body + tail);
    }

    #[test]
    fn tabulated_gaussian_matches_closed_form() {
        let r: Vec<f64> = (0..=400).map(|i| i as f64 * 0.001).collect();
        let c: Vec<f64> = r.iter().map(|x| 100.0 * (-(x / 0.05f64).powi(2)).exp()).collect();
        let spec = ModelSpec::tabulated(2, 100.0, r, c);
        let rep = check_existence(&spec).unwrap();
        assert!(rep.valid, "{rep:?}");
        assert!((rep.sup_spectrum - 0.785398).abs() < 1e-4);
        let m = KernelModel::new(spec).unwrap();
        assert_relative_eq!(m.l2_norm_sq().unwrap(), 39.2699, max_relative = 1e-4);
        assert!(matches!(m.eval(&[0.5, 0.0]), Err(DppError::OutOfTabulatedRange { .. })));
        assert_relative_eq!(m.eval(&[0.05, 0.0]).unwrap(), 100.0 / std::f64::consts::E, max_relative = 1e-6);
    }

    #[test]
    fn tabulated_rejections() {
        let r = vec![0.0, 0.1, 0.2, 0.3];
        assert!(KernelModel::new(ModelSpec::tabulated(1, 1.0, r.clone(), vec![1.0, 0.5, 0.2, 0.0])).is_err());
        assert!(KernelModel::new(ModelSpec::tabulated(1, 1.0, r.clone(), vec![0.9, 0.85, 0.8, 0.75])).is_err());
        assert!(KernelModel::new(ModelSpec::tabulated(1, 1.0, vec![0.1, 0.2, 0.3, 0.4], vec![1.0; 4])).is_err());
        // Too wide for the intensity: spectrum exceeds one.
        let rr: Vec<f64> = (0..=300).map(|i| i as f64 * 0.01).collect();
        let cc: Vec<f64> = rr.iter().map(|x| (-(x / 0.8f64).powi(2)).exp()).collect();
        let err = KernelModel::new(ModelSpec::tabulated(1, 1.0, rr, cc)).unwrap_err();
        assert!(matches!(err, DppError::NonExistent { .. }));
    }

    #[test]
    fn heinrich_examples() {
        let m = g2();
        let h = m.check_heinrich_bounds((0.02, 0.1), 0.01, 8).unwrap();
        assert!(h.sup3 <= 2e6);
        assert!(h.sup_int4.is_finite() && h.sup_int4 > 0.0);
        // Envelope: ∫|c4(u,w,v+w)| dw <= 6 rho^2 ∫C^2.
        assert!(h.sup_int4 <= 6.0 * 1e4 * m.l2_norm_sq().unwrap());
        let p = KernelModel::poisson(2, 100.0).unwrap();
        let hp = p.check_heinrich_bounds((0.02, 0.1), 0.01, 8).unwrap();
        assert_eq!((hp.sup3, hp.sup_int4), (0.0, 0.0));
    }

    #[test]
    fn effective_ranges() {
        assert_relative_eq!(g2().effective_range(), 0.05 * 1000f64.ln().sqrt(), epsilon = 1e-14);
        let b = KernelModel::bessel(2, 100.0).unwrap();
        assert!(b.effective_range() <= 1.0 + 1e-12);
    }

    #[test]
    fn serde_round_trip() {
        let s = ModelSpec::gaussian(2, 100.0, 0.05);
        let j = serde_json::to_string(&s).unwrap();
        assert!(j.contains("\"family\":\"gaussian\""));
        let back: ModelSpec = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
    }
}
