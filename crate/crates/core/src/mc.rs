//! Replicated simulation experiments for the limit theorems: intensity CLT,
//! cumulant decay, pointwise pcf CLT and the ISE statistic.
//!
//! Replicate `i` of window `w` always uses the seed
//! `replicate_seed(master, (w << 32) | i)` and results are gathered in index
//! order, so the worker count never changes a report.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::cumulants::empirical_cumulants;
use crate::error::{DppError, Result};
use crate::estimators::{
    bias_bound, ise, ise_leading_constant, pcf_hat_grid, sigma2_intensity, tau2_ise, tau2_pointwise,
    BandwidthRule, SmoothingFamily, SmoothingKernel, Tau2Variant,
};
use crate::kernel::{KernelModel, ModelSpec};
use crate::rng::{replicate_seed, rng_from_seed};
use crate::sampler::{DppSampler, SamplerConfig};
use crate::spectral::{build_operator, default_nodes_per_axis};
use crate::window::{PointPattern, Window};

/// Replicate count below which CLT diagnostics are flagged.
pub const CLT_MIN_REPLICATES: usize = 100;
/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "DPP_LAB_THREADS";

const MIXING_NOTE: &str = "ergodicity and Brillinger mixing are hypotheses of the limit theorems; \
finite-window simulation checks their consequences only";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Statistic {
    Intensity,
    Pcf { r: f64 },
    Ise { r_min: f64, r_max: f64, grid_n: usize },
}

/// How counts are generated for the intensity experiment.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CountMethod {
    /// Full point patterns from the spectral sampler.
    #[default]
    Sampler,
    /// `N(D) = Σ_j Bernoulli(λ_j)` with `λ_j` the Nyström eigenvalues of the
    /// kernel restricted to the (cubic) window.
    SpectralCountLaw { nodes_per_axis: Option<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    /// Nested, scaled copies of a base box.
    pub windows: Vec<Window>,
    pub replicates: usize,
    pub master_seed: u64,
    pub statistic: Statistic,
    #[serde(default)]
    pub bandwidth: BandwidthRule,
    #[serde(default = "default_kernel")]
    pub kernel: SmoothingFamily,
    #[serde(default = "one")]
    pub kernel_half_width: f64,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub count_method: CountMethod,
    /// Reference model for the ISE (defaults to `model`); a different model
    /// turns the ISE into a goodness-of-fit statistic.
    #[serde(default)]
    pub reference: Option<ModelSpec>,
}

fn default_kernel() -> SmoothingFamily {
    SmoothingFamily::Epanechnikov
}

fn one() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn new(model: ModelSpec, windows: Vec<Window>, replicates: usize, master_seed: u64, statistic: Statistic) -> Self {
        Self {
            model,
            windows,
            replicates,
            master_seed,
            statistic,
            bandwidth: BandwidthRule::default(),
            kernel: default_kernel(),
            kernel_half_width: 1.0,
            sampler: SamplerConfig::default(),
            count_method: CountMethod::default(),
            reference: None,
        }
    }

    /// Squares `[0, s]^d` for each side `s`.
    pub fn square_schedule(dim: usize, sides: &[f64]) -> Result<Vec<Window>> {
        sides.iter().map(|s| Window::cube(dim, *s)).collect()
    }

    pub fn smoothing_kernel(&self) -> Result<SmoothingKernel> {
        SmoothingKernel::new(self.kernel, self.kernel_half_width)
    }

    fn validate(&self) -> Result<Vec<String>> {
        if self.windows.is_empty() {
            return Err(DppError::InvalidInput("window schedule is empty".into()));
        }
        if self.replicates < 5 {
            return Err(DppError::InvalidInput("at least 5 replicates are needed for cumulant estimates".into()));
        }
        let base = &self.windows[0];
        if base.dim() != self.model.dim {
            return Err(DppError::InvalidInput("window and model dimensions differ".into()));
        }
        let base_sides = base.sides();
        let mut last = 0.0;
        for w in &self.windows {
            if w.dim() != base.dim() || w.lower != base.lower {
                return Err(DppError::InvalidInput("windows must share the base box's lower corner".into()));
            }
            let s = w.sides();
            let scale = s[0] / base_sides[0];
            if s.iter().zip(&base_sides).any(|(a, b)| (a / b - scale).abs() > 1e-9 * scale) {
                return Err(DppError::InvalidInput("windows must be scaled copies of the base box".into()));
            }
            if scale <= last {
                return Err(DppError::InvalidInput("windows must be strictly increasing".into()));
            }
            last = scale;
        }
        let mut warnings = vec![];
        if self.replicates < CLT_MIN_REPLICATES {
            warnings.push(format!(
                "replicates = {} is below CLT suite minimum of {CLT_MIN_REPLICATES}",
                self.replicates
            ));
        }
        Ok(warnings)
    }
}

/// Distribution diagnostics of a (standardized) replicate sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Kolmogorov–Smirnov distance to the standard normal.
    pub ks: f64,
}

impl Diagnostics {
    pub fn of(values: &[f64]) -> Result<Self> {
        let k = empirical_cumulants(values, 4)?;
        let (k2, k3, k4) = (k[1], k[2], k[3]);
        let (skewness, excess_kurtosis) = if k2 > 0.0 { (k3 / k2.powf(1.5), k4 / (k2 * k2)) } else { (0.0, 0.0) };
        Ok(Self { k2, k3, k4, skewness, excess_kurtosis, ks: ks_normal(values) })
    }
}

/// `sup_x |F_n(x) - Φ(x)|`.
pub fn ks_normal(values: &[f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let normal = Normal::standard();
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let nf = n as f64;
    v.iter()
        .enumerate()
        .map(|(i, x)| {
            let c = normal.cdf(*x);
            (((i + 1) as f64 / nf) - c).max(c - i as f64 / nf)
        })
        .fold(0.0, f64::max)
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var)
}

/// Theory values reported beside the simulation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Targets {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact_count_variance_per_volume: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau2_printed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau2_no_sqrt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa2_over_rho4: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ise_leading_constant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau2_ise: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window: Window,
    pub volume: f64,
    pub window_index: usize,
    /// Mean and standard deviation of the raw statistic (ρ̂, ĝ(r) or ISE).
    pub mean: f64,
    pub sd: f64,
    /// Variance of the CLT-scaled statistic.
    pub empirical_variance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    /// Mean of `ρ̂² ĝ(r) / ρ²` (pcf experiment).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_scaled: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se_scaled: Option<f64>,
    /// `b |D| · mean ISE` (ISE experiment).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scaled_mean_ise: Option<f64>,
    /// Empirical cumulants k₁..k₄ of the CLT-scaled statistic.
    pub cumulants: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standardized: Option<Diagnostics>,
    pub targets: Targets,
    /// Replicates with fewer than 30 contributing pairs (pcf experiment).
    pub low_pair_replicates: usize,
    /// Raw per-replicate statistic, in replicate order.
    #[serde(skip)]
    pub values: Vec<f64>,
    /// CLT-scaled per-replicate statistic.
    #[serde(skip)]
    pub scaled: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub order: usize,
    /// `None` when every cumulant is within two standard errors of zero.
    pub slope: Option<f64>,
    pub slope_se: Option<f64>,
    pub expected: f64,
    pub below_noise_floor: bool,
    /// For k = 4: |k₄| decreasing along the schedule with at most one inversion.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monotone_with_one_inversion: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub seed_rule: String,
    pub windows: Vec<WindowReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<SlopeFit>,
    /// Goodness-of-fit separation (mean ISE minus null expectation, in MC standard errors).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gof_separation: Option<Vec<f64>>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    /// Wall-clock seconds; not serialized so reports stay byte-identical.
    #[serde(skip)]
    pub runtime_secs: f64,
}

impl McReport {
    fn new(experiment: &str, config: &ExperimentConfig, warnings: Vec<String>) -> Self {
        Self {
            experiment: experiment.into(),
            config: config.clone(),
            seed_rule: "seed(w, i) = replicate_seed(master_seed, (w << 32) | i)".into(),
            windows: vec![],
            mode: None,
            slope: None,
            gof_separation: None,
            warnings,
            notes: vec![MIXING_NOTE.into()],
            runtime_secs: 0.0,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Seed of replicate `i` in window `w`.
pub fn experiment_seed(master: u64, window_index: usize, replicate: usize) -> u64 {
    replicate_seed(master, ((window_index as u64) << 32) | replicate as u64)
}

/// Worker count from `DPP_LAB_THREADS` (rayon's default when unset or invalid).
pub fn worker_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Evaluates `f(i)` for `i < n` on the worker pool, returning results in index order.
fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| DppError::Internal(format!("thread pool: {e}")))?;
    pool.install(|| (0..n).into_par_iter().map(f).collect())
}

struct PatternSource {
    sampler: DppSampler,
    master: u64,
    window_index: usize,
}

impl PatternSource {
    fn new(model: &KernelModel, window: &Window, cfg: &ExperimentConfig, window_index: usize) -> Result<Self> {
        Ok(Self {
            sampler: DppSampler::new(model, window, &cfg.sampler)?,
            master: cfg.master_seed,
            window_index,
        })
    }

    fn pattern(&self, i: usize) -> PointPattern {
        self.sampler.sample_seeded(experiment_seed(self.master, self.window_index, i))
    }
}

fn window_report(window: &Window, index: usize, values: Vec<f64>, scaled: Vec<f64>) -> Result<WindowReport> {
    let (mean, var) = mean_var(&values);
    let (_, svar) = mean_var(&scaled);
    Ok(WindowReport {
        window: window.clone(),
        volume: window.volume(),
        window_index: index,
        mean,
        sd: var.sqrt(),
        empirical_variance: svar,
        bandwidth: None,
        mean_scaled: None,
        se_scaled: None,
        scaled_mean_ise: None,
        cumulants: empirical_cumulants(&scaled, 4)?,
        standardized: None,
        targets: Targets::default(),
        low_pair_replicates: 0,
        values,
        scaled,
    })
}

/// Counts `N(D)` per replicate for window `w`.
fn counts(model: &KernelModel, cfg: &ExperimentConfig, w: usize, exact_var: &mut Option<f64>) -> Result<Vec<f64>> {
    let window = &cfg.windows[w];
    match &cfg.count_method {
        CountMethod::Sampler => {
            let src = PatternSource::new(model, window, cfg, w)?;
            par_map(cfg.replicates, |i| Ok(src.pattern(i).len() as f64))
        }
        CountMethod::SpectralCountLaw { nodes_per_axis } => {
            let sides = window.sides();
            if sides.iter().any(|s| (s - sides[0]).abs() > 1e-12 * sides[0]) {
                return Err(DppError::InvalidInput("the spectral count law needs cubic windows".into()));
            }
            let t = 0.5 * sides[0];
            let n = nodes_per_axis.unwrap_or_else(|| default_nodes_per_axis(model, t));
            let spec = build_operator(model, t, n)?;
            let lambda: Vec<f64> =
                spec.eigenvalues.iter().map(|l| l.clamp(0.0, 1.0)).filter(|l| *l > 0.0).collect();
            *exact_var = Some(lambda.iter().map(|l| l * (1.0 - l)).sum::<f64>() / window.volume());
            let master = cfg.master_seed;
            par_map(cfg.replicates, |i| {
                let mut rng = rng_from_seed(experiment_seed(master, w, i));
                Ok(lambda.iter().filter(|l| rng.random::<f64>() < **l).count() as f64)
            })
        }
    }
}

fn intensity_windows(model: &KernelModel, cfg: &ExperimentConfig) -> Result<Vec<WindowReport>> {
    let rho = model.rho();
    let sigma2 = sigma2_intensity(model)?;
    let mut out = vec![];
    for (w, window) in cfg.windows.iter().enumerate() {
        let vol = window.volume();
        let mut exact = None;
        let n = counts(model, cfg, w, &mut exact)?;
        let values: Vec<f64> = n.iter().map(|c| c / vol).collect();
        let scaled: Vec<f64> = values.iter().map(|r| vol.sqrt() * (r - rho)).collect();
        let mut rep = window_report(window, w, values, scaled)?;
        rep.targets.sigma2 = Some(sigma2);
        rep.targets.exact_count_variance_per_volume = exact;
        out.push(rep);
    }
    Ok(out)
}

/// `√|D| (ρ̂ - ρ)` across the window schedule. When `σ² = 0` (Bessel family)
/// the report switches to variance-trend mode: `Var(N(D))/|D|` per window,
/// without standardization.
pub fn run_intensity_clt(cfg: &ExperimentConfig) -> Result<McReport> {
    let start = Instant::now();
    let warnings = cfg.validate()?;
    let model = KernelModel::new(cfg.model.clone())?;
    let mut report = McReport::new("intensity", cfg, warnings);
    let mut windows = intensity_windows(&model, cfg)?;
    let sigma2 = sigma2_intensity(&model)?;
    if sigma2 > 1e-9 * model.rho() {
        for w in &mut windows {
            let z: Vec<f64> = w.scaled.iter().map(|x| x / sigma2.sqrt()).collect();
            w.standardized = Some(Diagnostics::of(&z)?);
        }
        report.mode = Some("clt".into());
    } else {
        report.mode = Some("variance_trend".into());
        let v: Vec<f64> = windows.iter().map(|w| w.empirical_variance).collect();
        let decreasing = v.windows(2).all(|p| p[1] < p[0]);
        report.notes.push(format!(
            "σ² = ρ - ∫C² = 0: the count variance grows slower than |D| (hyperuniform); \
             Var(N(D))/|D| strictly decreasing across the schedule: {decreasing}"
        ));
    }
    report.windows = windows;
    report.runtime_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Weighted least-squares fit of `log|k_k|` against `log|D|`, with weights
/// from the normal-theory variance of the k-statistic.
pub fn run_cumulant_decay(cfg: &ExperimentConfig, order: usize) -> Result<McReport> {
    let start = Instant::now();
    if !(order == 3 || order == 4) {
        return Err(DppError::UnsupportedOrder(order));
    }
    if cfg.windows.len() < 3 {
        return Err(DppError::InvalidInput("cumulant decay needs at least 3 windows".into()));
    }
    let mut warnings = cfg.validate()?;
    if order == 3 && cfg.replicates < 1000 {
        warnings.push(format!("replicates = {} is below the 1000 recommended for k = 3", cfg.replicates));
    }
    let model = KernelModel::new(cfg.model.clone())?;
    let mut report = McReport::new("cumulant_decay", cfg, warnings);
    let windows = intensity_windows(&model, cfg)?;
    let r = cfg.replicates as f64;
    let mut xs = vec![];
    let mut ys = vec![];
    let mut ws = vec![];
    let mut all_noise = true;
    for w in &windows {
        let k2 = w.cumulants[1];
        let kk = w.cumulants[order - 1];
        let var_k = if order == 3 { 6.0 * k2.powi(3) / r } else { 24.0 * k2.powi(4) / r };
        if kk.abs() > 2.0 * var_k.sqrt() {
            all_noise = false;
        }
        if kk != 0.0 && var_k > 0.0 {
            xs.push(w.volume.ln());
            ys.push(kk.abs().ln());
            // Var(log|k|) ≈ Var(k) / k².
            ws.push(kk * kk / var_k);
        }
    }
    let expected = 1.0 - order as f64 / 2.0;
    let (slope, slope_se) = if all_noise || xs.len() < 2 {
        (None, None)
    } else {
        let (s, se) = weighted_slope(&xs, &ys, &ws);
        (Some(s), Some(se))
    };
    let monotone = (order == 4).then(|| {
        let a: Vec<f64> = windows.iter().map(|w| w.cumulants[3].abs()).collect();
        a.windows(2).filter(|p| p[1] >= p[0]).count() <= 1
    });
    report.slope = Some(SlopeFit { order, slope, slope_se, expected, below_noise_floor: all_noise, monotone_with_one_inversion: monotone });
    if all_noise {
        report.notes.push("empirical cumulants are below the noise floor at every window".into());
    }
    report.windows = windows;
    report.runtime_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Returns (slope, standard error) of the weighted fit `y = a + s x`.
pub fn weighted_slope(x: &[f64], y: &[f64], w: &[f64]) -> (f64, f64) {
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(a, b)| b * (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).zip(w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    (sxy / sxx, (1.0 / sxx).sqrt())
}

/// `√(b|D|) (ĝ(r) - g₀(r))` across the schedule, with the three closed-form
/// variance columns and the bias bound.
pub fn run_pcf_clt(cfg: &ExperimentConfig, r: f64) -> Result<McReport> {
    let start = Instant::now();
    let warnings = cfg.validate()?;
    let model = KernelModel::new(cfg.model.clone())?;
    let k = cfg.smoothing_kernel()?;
    let mut report = McReport::new("pcf", cfg, warnings);
    let rho = model.rho();
    let g0 = model.pcf(r)?;
    let tau_p = tau2_pointwise(&model, r, &k, Tau2Variant::Printed)?;
    let tau_n = tau2_pointwise(&model, r, &k, Tau2Variant::NoSqrt)?;
    let kappa = tau2_pointwise(&model, r, &k, Tau2Variant::Kappa)?;
    for (w, window) in cfg.windows.iter().enumerate() {
        let b = cfg.bandwidth.bandwidth(rho, window);
        if r + k.half_width * b >= window.min_side() {
            return Err(DppError::InvalidInput(format!(
                "r + T b = {} must be below the smallest window side {}",
                r + k.half_width * b,
                window.min_side()
            )));
        }
        let src = PatternSource::new(&model, window, cfg, w)?;
        let est = par_map(cfg.replicates, |i| {
            let p = src.pattern(i);
            let e = pcf_hat_grid(&p, &[r], b, &k)?;
            Ok((e.ghat[0], e.rho_hat, e.pair_counts[0]))
        })?;
        let vol = window.volume();
        let values: Vec<f64> = est.iter().map(|e| e.0).collect();
        let scaled: Vec<f64> = values.iter().map(|g| (b * vol).sqrt() * (g - g0)).collect();
        let ratio: Vec<f64> = est.iter().map(|e| e.0 * e.1 * e.1 / (rho * rho)).collect();
        let (ms, vs) = mean_var(&ratio);
        let mut rep = window_report(window, w, values, scaled)?;
        rep.bandwidth = Some(b);
        rep.mean_scaled = Some(ms);
        rep.se_scaled = Some((vs / ratio.len() as f64).sqrt());
        rep.low_pair_replicates = est.iter().filter(|e| e.2 < 30).count();
        if rep.low_pair_replicates > 0 {
            report.warnings.push(format!(
                "window {w}: {} replicates had fewer than 30 contributing pairs",
                rep.low_pair_replicates
            ));
        }
        let z: Vec<f64> = rep.scaled.iter().map(|x| x / tau_n.sqrt()).collect();
        rep.standardized = Some(Diagnostics::of(&z)?);
        rep.targets = Targets {
            g0: Some(g0),
            tau2_printed: Some(tau_p),
            tau2_no_sqrt: Some(tau_n),
            kappa2_over_rho4: Some(kappa / rho.powi(4)),
            bias_bound: Some(bias_bound(&model, (r, r), b, &k)?),
            ..Default::default()
        };
        report.windows.push(rep);
    }
    report.notes.push(
        "standardized diagnostics use the no-square-root variance; all three closed forms are listed".into(),
    );
    report.runtime_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// ISE of `ρ̂² ĝ` against the reference model across the schedule. The raw
/// value is `ISE`, the scaled value is `√b |D| (ISE - mean ISE)`.
pub fn run_ise_clt(cfg: &ExperimentConfig) -> Result<McReport> {
    let start = Instant::now();
    let (r_min, r_max, grid_n) = match cfg.statistic {
        Statistic::Ise { r_min, r_max, grid_n } => (r_min, r_max, grid_n),
        _ => return Err(DppError::InvalidInput("the ISE experiment needs an `ise` statistic".into())),
    };
    let warnings = cfg.validate()?;
    let model = KernelModel::new(cfg.model.clone())?;
    let reference = match &cfg.reference {
        Some(s) => KernelModel::new(s.clone())?,
        None => model.clone(),
    };
    let gof = cfg.reference.is_some();
    let k = cfg.smoothing_kernel()?;
    let mut report = McReport::new(if gof { "gof" } else { "ise" }, cfg, warnings);
    let interval = (r_min, r_max);
    let rho = model.rho();
    let lead = ise_leading_constant(&model, interval, &k)?;
    let null_lead = ise_leading_constant(&reference, interval, &k)?;
    let tau2 = tau2_ise(&model, interval, &k)?;
    let mut separation = vec![];
    for (w, window) in cfg.windows.iter().enumerate() {
        let b = cfg.bandwidth.bandwidth(rho, window);
        if r_max + k.half_width * b >= window.min_side() {
            return Err(DppError::InvalidInput("r_max + T b must be below the smallest window side".into()));
        }
        let src = PatternSource::new(&model, window, cfg, w)?;
        let values = par_map(cfg.replicates, |i| ise(&src.pattern(i), &reference, interval, b, &k, grid_n))?;
        let vol = window.volume();
        let (m, var) = mean_var(&values);
        let scaled: Vec<f64> = values.iter().map(|v| b.sqrt() * vol * (v - m)).collect();
        let mut rep = window_report(window, w, values, scaled)?;
        rep.bandwidth = Some(b);
        rep.scaled_mean_ise = Some(b * vol * m);
        let sd = var.sqrt();
        let z: Vec<f64> = rep.values.iter().map(|v| if sd > 0.0 { (v - m) / sd } else { 0.0 }).collect();
        rep.standardized = Some(Diagnostics::of(&z)?);
        rep.targets = Targets {
            ise_leading_constant: Some(if gof { null_lead } else { lead }),
            tau2_ise: Some(tau2),
            ..Default::default()
        };
        if gof {
            let se = sd / (rep.values.len() as f64).sqrt();
            separation.push((m - null_lead / (b * vol)) / se);
        }
        report.windows.push(rep);
    }
    if gof {
        report.gof_separation = Some(separation);
        report.notes.push("gof separation: (mean ISE - null leading constant / (b|D|)) / MC standard error".into());
    }
    report.notes.push("ISE standardized diagnostics use the empirical mean and standard deviation".into());
    report.runtime_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Dispatches on `cfg.statistic`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<McReport> {
    match cfg.statistic {
        Statistic::Intensity => run_intensity_clt(cfg),
        Statistic::Pcf { r } => run_pcf_clt(cfg, r),
        Statistic::Ise { .. } => run_ise_clt(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ks_of_normal_quantiles_is_small() {
        let normal = Normal::standard();
        let v: Vec<f64> = (0..1000).map(|i| normal.inverse_cdf((i as f64 + 0.5) / 1000.0)).collect();
        let d = ks_normal(&v);
        assert!(d <= 0.0005 + 1e-6, "{d}");
        let shifted: Vec<f64> = v.iter().map(|x| x + 1.0).collect();
        assert_relative_eq!(ks_normal(&shifted), 2.0 * normal.cdf(0.5) - 1.0, epsilon = 2e-3);
    }

    #[test]
    fn weighted_slope_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let (s, _) = weighted_slope(&x, &y, &[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(s, -0.5, epsilon = 1e-12);
    }

    #[test]
    fn config_validation() {
        let spec = ModelSpec::poisson(2, 10.0);
        let ws = ExperimentConfig::square_schedule(2, &[1.0, 2.0]).unwrap();
        let cfg = ExperimentConfig::new(spec.clone(), ws, 10, 1, Statistic::Intensity);
        let warn = cfg.validate().unwrap();
        assert!(warn[0].contains("below CLT suite minimum"));
        let bad = ExperimentConfig::new(spec.clone(), ExperimentConfig::square_schedule(2, &[2.0, 1.0]).unwrap(), 200, 1, Statistic::Intensity);
        assert!(bad.validate().is_err());
        let rect = vec![Window::cube(2, 1.0).unwrap(), Window::new(vec![0.0, 0.0], vec![2.0, 3.0]).unwrap()];
        assert!(ExperimentConfig::new(spec, rect, 200, 1, Statistic::Intensity).validate().is_err());
    }

    #[test]
    fn poisson_intensity_variance_identity() {
        let spec = ModelSpec::poisson(2, 50.0);
        let ws = ExperimentConfig::square_schedule(2, &[1.0, 2.0]).unwrap();
        let cfg = ExperimentConfig::new(spec, ws, 500, 3, Statistic::Intensity);
        let rep = run_intensity_clt(&cfg).unwrap();
        for w in &rep.windows {
            assert!((w.empirical_variance / 50.0 - 1.0).abs() < 0.15, "{}", w.empirical_variance);
            // Var(a X) = a² Var(X) on the stored values.
            let (_, v) = mean_var(&w.values);
            assert_relative_eq!(w.empirical_variance, w.volume * v, max_relative = 1e-10);
        }
        assert_eq!(rep.mode.as_deref(), Some("clt"));
    }

    #[test]
    fn report_is_independent_of_worker_count() {
        let spec = ModelSpec::gaussian(2, 100.0, 0.05);
        let ws = ExperimentConfig::square_schedule(2, &[0.5, 1.0]).unwrap();
        let cfg = ExperimentConfig::new(spec, ws, 24, 9, Statistic::Pcf { r: 0.1 });
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool3 = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        // par_map builds its own pool; the outer pools only change the default.
        let a = pool1.install(|| run_pcf_clt(&cfg, 0.1).unwrap().to_json().unwrap());
        let b = pool3.install(|| run_pcf_clt(&cfg, 0.1).unwrap().to_json().unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn poisson_cumulant_decay_has_half_slope() {
        // k₃ of the scaled count is ρ / √|D| exactly for Poisson.
        let spec = ModelSpec::poisson(2, 20.0);
        let ws = ExperimentConfig::square_schedule(2, &[0.5, 1.0, 2.0]).unwrap();
        let cfg = ExperimentConfig::new(spec, ws, 3000, 4, Statistic::Intensity);
        let rep = run_cumulant_decay(&cfg, 3).unwrap();
        // Three normal-theory standard errors of k₃ (k₂ = ρ).
        let tol = 3.0 * (6.0 * 20f64.powi(3) / 3000.0).sqrt();
        for w in &rep.windows {
            let exact = 20.0 / w.volume.sqrt();
            assert!((w.cumulants[2] - exact).abs() < tol, "{} vs {exact}", w.cumulants[2]);
        }
        let fit = rep.slope.unwrap();
        assert!((fit.slope.unwrap() + 0.5).abs() < 0.15, "{:?}", fit.slope);
        let rep4 = run_cumulant_decay(&cfg, 4).unwrap();
        assert_eq!(rep4.slope.unwrap().expected, -1.0);
    }
}
