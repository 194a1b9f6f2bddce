//! Exact simulation of stationary DPPs on rectangular windows.
//!
//! The kernel is periodised on a torus enclosing the window with a margin of
//! a few kernel ranges. On the torus the kernel's eigenfunctions are Fourier
//! modes `m / L` with eigenvalues `F(C)(m / L)`; each real mode (constant,
//! cosine, sine) is kept with that probability and the resulting projection
//! DPP is sampled point by point. The conditional density of the next point is
//! `|V^T φ(x)|^2 / (n - i)`, where the columns of `V` span the part of the
//! mode space orthogonal to the points already placed. Proposals are uniform on
//! the torus and accepted by exact rejection against `|φ(x)|^2 <= B`.
//! `V` is updated with Householder reflectors, applied in compact-WY blocks.

use std::f64::consts::PI;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{DppError, Result};
use crate::kernel::KernelModel;
use crate::rng::rng_from_seed;
use crate::window::{PointPattern, Provenance, Window};

const BLOCK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Maximum number of Fourier modes (counting m and -m separately).
    pub modes_cap: usize,
    /// Torus side = window side + margin_factor * effective kernel range.
    pub margin_factor: f64,
    /// Modes with `F(C)(m / L)` below this are dropped.
    pub spectral_floor: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { modes_cap: 100_000, margin_factor: 2.0, spectral_floor: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerInfo {
    pub torus_sides: Vec<f64>,
    pub modes_used: usize,
    pub captured_mass: f64,
    /// Expected number of points on the whole torus.
    pub expected_torus_count: f64,
}

#[derive(Debug, Clone)]
struct Modes {
    sides: Vec<f64>,
    volume: f64,
    /// Largest |m_k| per axis.
    reach: Vec<usize>,
    f_zero: f64,
    /// Half-lattice modes and their inclusion probabilities.
    half: Vec<(Vec<i64>, f64)>,
}

/// Reusable sampler for one (model, window, config).
#[derive(Debug, Clone)]
pub struct DppSampler {
    model: KernelModel,
    window: Window,
    modes: Option<Modes>,
    info: SamplerInfo,
}

impl DppSampler {
    pub fn new(model: &KernelModel, window: &Window, cfg: &SamplerConfig) -> Result<Self> {
        if window.dim() != model.dim() {
            return Err(DppError::InvalidInput("window and model dimensions differ".into()));
        }
        if model.is_poisson() {
            let info = SamplerInfo {
                torus_sides: window.sides(),
                modes_used: 0,
                captured_mass: 1.0,
                expected_torus_count: model.rho() * window.volume(),
            };
            return Ok(Self { model: model.clone(), window: window.clone(), modes: None, info });
        }
        if !(cfg.margin_factor >= 0.0 && cfg.spectral_floor > 0.0 && cfg.modes_cap >= 1) {
            return Err(DppError::InvalidInput("invalid sampler configuration".into()));
        }
        let margin = cfg.margin_factor * model.effective_range();
        let sides: Vec<f64> = window.sides().iter().map(|w| w + margin).collect();
        let volume: f64 = sides.iter().product();
        let f_zero = model.fourier_radial(0.0)?;
        let mut half = Vec::new();
        let mut reach = vec![0usize; sides.len()];
        if f_zero >= cfg.spectral_floor {
            let band = match model.spec().family {
                crate::kernel::Family::Bessel { .. } => model.ball_radius(),
                _ => model.spectral_band(cfg.spectral_floor / f_zero) * 1.05,
            };
            reach = sides.iter().map(|l| (band * l).floor() as usize).collect();
            let d = sides.len();
            let mut m = reach.iter().map(|r| -(*r as i64)).collect::<Vec<_>>();
            loop {
                if is_half_lattice(&m) {
                    let s = m.iter().zip(&sides).map(|(mi, l)| (*mi as f64 / l).powi(2)).sum::<f64>().sqrt();
                    let f = model.fourier_radial(s)?;
                    if f >= cfg.spectral_floor {
                        half.push((m.clone(), f.min(1.0)));
                    }
                }
                let mut k = 0;
                loop {
                    if k == d {
                        break;
                    }
                    m[k] += 1;
                    if m[k] <= reach[k] as i64 {
                        break;
                    }
                    m[k] = -(reach[k] as i64);
                    k += 1;
                }
                if k == d {
                    break;
                }
            }
        }
        let f_zero_kept = if f_zero >= cfg.spectral_floor { f_zero.min(1.0) } else { 0.0 };
        let total_mass = f_zero_kept + 2.0 * half.iter().map(|h| h.1).sum::<f64>();
        let full_count = usize::from(f_zero_kept > 0.0) + 2 * half.len();
        let mut captured = 1.0;
        if full_count > cfg.modes_cap {
            half.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            half.truncate(cfg.modes_cap.saturating_sub(1) / 2);
            let kept = f_zero_kept + 2.0 * half.iter().map(|h| h.1).sum::<f64>();
            captured = kept / total_mass;
            if captured < 1.0 - 1e-6 {
                return Err(DppError::ModesCapExceeded { cap: cfg.modes_cap, captured });
            }
        }
        let info = SamplerInfo {
            torus_sides: sides.clone(),
            modes_used: usize::from(f_zero_kept > 0.0) + 2 * half.len(),
            captured_mass: captured,
            expected_torus_count: f_zero_kept + 2.0 * half.iter().map(|h| h.1).sum::<f64>(),
        };
        let modes = Modes { sides, volume, reach, f_zero: f_zero_kept, half };
        Ok(Self { model: model.clone(), window: window.clone(), modes: Some(modes), info })
    }

    pub fn info(&self) -> &SamplerInfo {
        &self.info
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    /// One realisation restricted to the window.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PointPattern {
        let coords = match &self.modes {
            None => poisson_coords(self.model.rho(), &self.window, rng),
            Some(m) => {
                let torus = sample_torus(m, rng);
                let d = self.window.dim();
                let sides = self.window.sides();
                let mut out = Vec::new();
                for p in torus.chunks_exact(d) {
                    if p.iter().zip(&sides).all(|(x, w)| *x <= *w) {
                        out.extend(p.iter().zip(&self.window.lower).map(|(x, a)| x + a));
                    }
                }
                out
            }
        };
        let provenance = Provenance {
            seed: None,
            model: Some(self.model.spec().clone()),
            method: if self.modes.is_none() { "poisson".into() } else { "spectral-projection".into() },
            modes_used: Some(self.info.modes_used),
            torus_sides: Some(self.info.torus_sides.clone()),
        };
        PointPattern { window: self.window.clone(), coords, provenance }
    }

    /// Realisation from a fixed seed; the seed is recorded in the provenance.
    pub fn sample_seeded(&self, seed: u64) -> PointPattern {
        let mut rng = rng_from_seed(seed);
        let mut p = self.sample(&mut rng);
        p.provenance.seed = Some(seed);
        p
    }
}

fn is_half_lattice(m: &[i64]) -> bool {
    match m.iter().find(|v| **v != 0) {
        Some(v) => *v > 0,
        None => false,
    }
}

/// `sample_dpp`: one realisation of `DPP(C)` on `window` from `seed`.
pub fn sample_dpp(model: &KernelModel, window: &Window, seed: u64, cfg: &SamplerConfig) -> Result<PointPattern> {
    Ok(DppSampler::new(model, window, cfg)?.sample_seeded(seed))
}

/// Homogeneous Poisson process of intensity `rho` on `window`.
pub fn sample_poisson(rho: f64, window: &Window, seed: u64) -> Result<PointPattern> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(DppError::InvalidInput(format!("rho must be positive, got {rho}")));
    }
    let mut rng = rng_from_seed(seed);
    let coords = poisson_coords(rho, window, &mut rng);
    let provenance = Provenance { seed: Some(seed), method: "poisson".into(), ..Default::default() };
    Ok(PointPattern { window: window.clone(), coords, provenance })
}

fn poisson_coords<R: Rng + ?Sized>(rho: f64, window: &Window, rng: &mut R) -> Vec<f64> {
    let mean = rho * window.volume();
    let n = Poisson::new(mean).map(|p| p.sample(rng) as usize).unwrap_or(0);
    let sides = window.sides();
    let mut out = Vec::with_capacity(n * window.dim());
    for _ in 0..n {
        for (a, l) in window.lower.iter().zip(&sides) {
            out.push(a + l * rng.random::<f64>());
        }
    }
    out
}

#[derive(Clone, Copy)]
enum Kind {
    Const,
    Cos,
    Sin,
}

/// Samples the torus process: Bernoulli mode selection, then the projection DPP.
fn sample_torus<R: Rng + ?Sized>(m: &Modes, rng: &mut R) -> Vec<f64> {
    let d = m.sides.len();
    let mut basis: Vec<(Kind, usize)> = Vec::new();
    let mut distinct = 0usize;
    let has_const = rng.random::<f64>() < m.f_zero;
    if has_const {
        basis.push((Kind::Const, usize::MAX));
    }
    for (i, (_, f)) in m.half.iter().enumerate() {
        let c = rng.random::<f64>() < *f;
        let s = rng.random::<f64>() < *f;
        if c {
            basis.push((Kind::Cos, i));
        }
        if s {
            basis.push((Kind::Sin, i));
        }
        if c || s {
            distinct += 1;
        }
    }
    let n = basis.len();
    if n == 0 {
        return Vec::new();
    }
    // |φ(x)|^2 <= (1 + 2 * distinct) / V.
    let bound = (f64::from(u8::from(has_const)) + 2.0 * distinct as f64) / m.volume;
    let norm_c = 1.0 / m.volume.sqrt();
    let norm_t = (2.0 / m.volume).sqrt();
    let offsets: Vec<usize> = m.reach.clone();
    let spans: Vec<usize> = m.reach.iter().map(|r| 2 * r + 1).collect();
    // Per-axis lattice indices of each basis function.
    let idx: Vec<Vec<usize>> = basis
        .iter()
        .map(|(k, i)| match k {
            Kind::Const => offsets.clone(),
            _ => m.half[*i].0.iter().zip(&offsets).map(|(mi, o)| (*mi + *o as i64) as usize).collect(),
        })
        .collect();

    let eval_phi = |x: &[f64], out: &mut [f64], tables: &mut Vec<Vec<(f64, f64)>>| {
        for k in 0..d {
            let th = 2.0 * PI * x[k] / m.sides[k];
            let (s1, c1) = th.sin_cos();
            let t = &mut tables[k];
            let o = offsets[k];
            t[o] = (1.0, 0.0);
            for j in 1..=o {
                let (pc, ps) = t[o + j - 1];
                let v = (pc * c1 - ps * s1, pc * s1 + ps * c1);
                t[o + j] = v;
                t[o - j] = (v.0, -v.1);
            }
        }
        for (b, (kind, _)) in basis.iter().enumerate() {
            out[b] = match kind {
                Kind::Const => norm_c,
                _ => {
                    let ix = &idx[b];
                    let (mut re, mut im) = tables[0][ix[0]];
                    for k in 1..d {
                        let (c, s) = tables[k][ix[k]];
                        let nr = re * c - im * s;
                        im = re * s + im * c;
                        re = nr;
                    }
                    match kind {
                        Kind::Cos => norm_t * re,
                        _ => norm_t * im,
                    }
                }
            };
        }
    };

    let mut tables: Vec<Vec<(f64, f64)>> = spans.iter().map(|s| vec![(0.0, 0.0); *s]).collect();
    let mut v = Mat::<f64>::identity(n, n);
    let mut done = 0usize;
    let mut y = Mat::<f64>::zeros(n, BLOCK);
    let mut tau = [0.0f64; BLOCK];
    let mut j = 0usize;
    let mut points: Vec<f64> = Vec::with_capacity(n * d);
    let mut accepted = 0usize;
    let mut x = vec![0.0; d];
    while accepted < n {
        let mdim = n - done;
        let remaining = mdim - j;
        let rate = remaining as f64 / (bound * m.volume);
        let want = (BLOCK - j).min(remaining) as f64;
        let p = ((1.25 * want / rate).ceil() as usize).clamp(4, 4096);
        // Exact pre-filter: |c[j..]|^2 <= |φ(x)|^2, so proposals failing against
        // |φ(x)|^2 with the same uniform never reach the projection.
        let mut props = Vec::with_capacity(p * d);
        let mut draws = Vec::with_capacity(p);
        let mut phi = Mat::<f64>::zeros(n, p);
        let mut kept = 0usize;
        for _ in 0..p {
            for k in 0..d {
                x[k] = m.sides[k] * rng.random::<f64>();
            }
            let u = rng.random::<f64>() * bound;
            let col = phi.col_as_slice_mut(kept);
            eval_phi(&x, col, &mut tables);
            if u <= col.iter().map(|v| v * v).sum::<f64>() {
                props.extend_from_slice(&x);
                draws.push(u);
                kept += 1;
            }
        }
        let mut coef = Mat::<f64>::zeros(mdim, kept);
        matmul(&mut coef, Accum::Replace, v.subcols(done, mdim).transpose(), phi.subcols(0, kept), 1.0, Par::Seq);
        let mut flush = false;
        for q in 0..kept {
            let c = coef.col_as_slice_mut(q);
            for r in 0..j {
                let yr = &y.col_as_slice(r)[..mdim];
                let dot: f64 = (r..mdim).map(|i| yr[i] * c[i]).sum();
                let s = tau[r] * dot;
                for i in r..mdim {
                    c[i] -= s * yr[i];
                }
            }
            let norm2: f64 = c[j..mdim].iter().map(|v| v * v).sum();
            if draws[q] > norm2 {
                continue;
            }
            points.extend_from_slice(&props[q * d..(q + 1) * d]);
            accepted += 1;
            if accepted == n {
                break;
            }
            // Householder reflector sending c[j..] to a multiple of e_j.
            let alpha = -c[j].signum() * norm2.sqrt();
            let yc = y.col_as_slice_mut(j);
            yc[..j].iter_mut().for_each(|v| *v = 0.0);
            yc[j..mdim].copy_from_slice(&c[j..mdim]);
            yc[j] -= alpha;
            let vv: f64 = yc[j..mdim].iter().map(|v| v * v).sum();
            tau[j] = if vv > 0.0 { 2.0 / vv } else { 0.0 };
            j += 1;
            if j == BLOCK || j == remaining {
                flush = true;
                break;
            }
        }
        if accepted == n {
            break;
        }
        if flush {
            apply_block(&mut v, done, &y, &tau[..j]);
            done += j;
            j = 0;
        }
    }
    points
}

/// `V[:, done..] <- V[:, done..] (H_1 ... H_b)` with `H_r = I - τ_r y_r y_r^T`,
/// via the compact WY form `I - Y T Y^T`.
fn apply_block(v: &mut Mat<f64>, done: usize, y: &Mat<f64>, tau: &[f64]) {
    let n = v.nrows();
    let mdim = n - done;
    let b = tau.len();
    let yb = y.submatrix(0, 0, mdim, b);
    let mut t = Mat::<f64>::zeros(b, b);
    for r in 0..b {
        t[(r, r)] = tau[r];
        if r > 0 {
            // t[0..r, r] = -tau_r * T[0..r, 0..r] * (Y[:, 0..r]^T y_r)
            let mut w = vec![0.0; r];
            for (i, wi) in w.iter_mut().enumerate() {
                *wi = (0..mdim).map(|k| yb[(k, i)] * yb[(k, r)]).sum();
            }
            for i in 0..r {
                let s: f64 = (i..r).map(|k| t[(i, k)] * w[k]).sum();
                t[(i, r)] = -tau[r] * s;
            }
        }
    }
    let mut vy = Mat::<f64>::zeros(n, b);
    matmul(&mut vy, Accum::Replace, v.subcols(done, mdim), yb, 1.0, Par::Seq);
    let mut vyt = Mat::<f64>::zeros(n, b);
    matmul(&mut vyt, Accum::Replace, &vy, &t, 1.0, Par::Seq);
    matmul(v.subcols_mut(done, mdim), Accum::Add, &vyt, yb.transpose(), -1.0, Par::Seq);
}
