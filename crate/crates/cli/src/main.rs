//! `dpp-lab`: command-line driver for the dpp-core library.
//!
//! Exit codes: 0 ok, 2 invalid input or model, 3 I/O failure, 4 malformed
//! data file, 1 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpp_core::estimators::radius_grid;
use dpp_core::io::{
    parse_model_spec, read_json, read_pattern, write_json, write_pattern, write_pcf_csv, write_replicates_csv,
    write_trend_csv, FORMAT_VERSION,
};
use dpp_core::spectral::{brillinger_table, TrendPoint};
use dpp_core::{
    bias_bound, pcf_hat_grid, run_cumulant_decay, run_intensity_clt, run_ise_clt, run_pcf_clt, sample_dpp,
    BandwidthRule, DppError, ExperimentConfig, KernelModel, McReport, ModelSpec, SamplerConfig, SmoothingFamily,
    SmoothingKernel, Statistic, Window,
};
use log::info;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "dpp-lab", version, about = "Stationary determinantal point processes: sampling, pcf estimation and limit-theorem checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one exact sample in a window.
    Sample(SampleArgs),
    /// Kernel estimate of the pair correlation function of a pattern.
    Estimate(EstimateArgs),
    /// Per-volume factorial cumulant masses along growing cubes.
    VerifyMixing(MixingArgs),
    /// Monte-Carlo verification of a limit theorem.
    Clt(CltArgs),
    /// ISE goodness-of-fit run against a reference model.
    Gof(GofArgs),
}

#[derive(Args)]
struct SampleArgs {
    /// Model spec, e.g. `gaussian:rho=100,alpha=0.05` (d defaults to 2).
    #[arg(long)]
    model: String,
    /// Window corners `x0,y0,x1,y1`.
    #[arg(long)]
    window: String,
    /// Seed; a random one is drawn and logged when absent.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; metadata goes to the same path with a .json extension.
    #[arg(long, default_value = "pattern.csv")]
    output: PathBuf,
    #[arg(long, default_value_t = SamplerConfig::default().modes_cap)]
    modes_cap: usize,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    pattern: PathBuf,
    /// Model supplying g0 and the bias bound.
    #[arg(long)]
    model: String,
    /// Window; read from the pattern's sidecar JSON when absent.
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    r_min: f64,
    #[arg(long)]
    r_max: f64,
    #[arg(long, default_value_t = 50)]
    n_r: usize,
    /// Bandwidth; defaults to 0.15 ρ̂^{-1/d} |D|^{-1/4}.
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, value_enum, default_value_t = KernelArg::Epanechnikov)]
    kernel: KernelArg,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Epanechnikov,
    Box,
    Triangular,
}

impl From<KernelArg> for SmoothingFamily {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Epanechnikov => SmoothingFamily::Epanechnikov,
            KernelArg::Box => SmoothingFamily::Box,
            KernelArg::Triangular => SmoothingFamily::Triangular,
        }
    }
}

#[derive(Args)]
struct MixingArgs {
    #[arg(long)]
    model: String,
    /// Cumulant orders (k >= 2).
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    k: Vec<u32>,
    /// Increasing half-widths t of the cubes [-t, t]^d.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    t_list: Vec<f64>,
    #[arg(long)]
    nodes_per_axis: Option<usize>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Intensity,
    CumulantDecay,
    Pcf,
    Ise,
}

#[derive(Args)]
struct CltArgs {
    #[arg(long, value_enum)]
    experiment: Experiment,
    /// Experiment configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Cumulant order for `cumulant-decay`.
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct GofArgs {
    #[arg(long)]
    config: PathBuf,
    /// Reference (null) model; overrides the config's `reference`.
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn exit_code(e: &DppError) -> u8 {
    match e {
        DppError::Io(_) => 3,
        DppError::MalformedData { .. } | DppError::Json(_) => 4,
        DppError::Internal(_) | DppError::Overflow(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::VerifyMixing(a) => cmd_verify_mixing(a),
        Command::Clt(a) => cmd_clt(a),
        Command::Gof(a) => cmd_gof(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_model(spec: &str) -> dpp_core::Result<KernelModel> {
    KernelModel::new(parse_model_spec(spec, Some(Path::new(".")))?)
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    let s = seed.unwrap_or_else(rand::random);
    info!("seed = {s}");
    s
}

fn cmd_sample(a: SampleArgs) -> dpp_core::Result<()> {
    let model = load_model(&a.model)?;
    let window = Window::parse(&a.window)?;
    let seed = resolve_seed(a.seed);
    let cfg = SamplerConfig { modes_cap: a.modes_cap, ..Default::default() };
    let p = sample_dpp(&model, &window, seed, &cfg)?;
    write_pattern(&a.output, &p)?;
    info!("{} points written to {}", p.len(), a.output.display());
    Ok(())
}

#[derive(Serialize)]
struct EstimateConfig {
    pattern: PathBuf,
    model: ModelSpec,
    window: Window,
    r_min: f64,
    r_max: f64,
    n_r: usize,
    bandwidth: f64,
    bandwidth_from_rule: bool,
    kernel: SmoothingFamily,
}

#[derive(Serialize)]
struct EstimateReport {
    format: &'static str,
    config: EstimateConfig,
    n_points: usize,
    rho_hat: f64,
    r: Vec<f64>,
    ghat: Vec<f64>,
    g0: Vec<f64>,
    bias_bound: Vec<Option<f64>>,
    pair_counts: Vec<usize>,
    warnings: Vec<String>,
}

fn cmd_estimate(a: EstimateArgs) -> dpp_core::Result<()> {
    let model = load_model(&a.model)?;
    let window = a.window.as_deref().map(Window::parse).transpose()?;
    let pattern = read_pattern(&a.pattern, window.as_ref())?;
    if model.dim() != pattern.dim() {
        return Err(DppError::InvalidInput("model and pattern dimensions differ".into()));
    }
    if !(a.r_min > 0.0 && a.r_max > a.r_min) || a.n_r < 2 {
        return Err(DppError::InvalidInput("need 0 < r_min < r_max and n_r >= 2".into()));
    }
    let k = SmoothingKernel::new(a.kernel.into(), 1.0)?;
    let rho_hat = dpp_core::intensity_hat(&pattern);
    let b = match a.bandwidth {
        Some(b) => b,
        None => BandwidthRule::default().bandwidth(rho_hat, &pattern.window),
    };
    let reach = a.r_max + k.half_width * b;
    if reach >= pattern.window.min_side() {
        return Err(DppError::InvalidInput(format!(
            "r_max + T b = {reach} must be below the smallest window side {}",
            pattern.window.min_side()
        )));
    }
    let rs = radius_grid((a.r_min, a.r_max), a.n_r);
    let est = pcf_hat_grid(&pattern, &rs, b, &k)?;
    let mut warnings = vec![];
    let g0 = rs.iter().map(|r| model.pcf(*r)).collect::<dpp_core::Result<Vec<_>>>()?;
    let bias: Vec<Option<f64>> = rs.iter().map(|r| bias_bound(&model, (*r, *r), b, &k).ok()).collect();
    if bias.iter().any(Option::is_none) {
        warnings.push("bias bound undefined where r <= T b".into());
    }
    let low = est.pair_counts.iter().filter(|c| **c < 30).count();
    if low > 0 {
        warnings.push(format!("{low} radii have fewer than 30 contributing pairs"));
    }
    let bias_col: Vec<f64> = bias.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
    write_pcf_csv(&a.out_dir.join("pcf.csv"), &rs, &est.ghat, &g0, &bias_col)?;
    let report = EstimateReport {
        format: FORMAT_VERSION,
        config: EstimateConfig {
            pattern: a.pattern.clone(),
            model: model.spec().clone(),
            window: pattern.window.clone(),
            r_min: a.r_min,
            r_max: a.r_max,
            n_r: a.n_r,
            bandwidth: b,
            bandwidth_from_rule: a.bandwidth.is_none(),
            kernel: a.kernel.into(),
        },
        n_points: pattern.len(),
        rho_hat,
        r: rs,
        ghat: est.ghat,
        g0,
        bias_bound: bias,
        pair_counts: est.pair_counts,
        warnings,
    };
    for w in &report.warnings {
        log::warn!("{w}");
    }
    write_json(&a.out_dir.join("pcf.json"), &report)
}

#[derive(Serialize)]
struct MixingConfig {
    model: ModelSpec,
    k: Vec<u32>,
    t_list: Vec<f64>,
    nodes_per_axis: Option<usize>,
}

#[derive(Serialize)]
struct MixingVerdict {
    k: u32,
    /// Relative change of the ratio between the two largest t.
    relative_change: Option<f64>,
    stabilized: Option<bool>,
}

#[derive(Serialize)]
struct MixingReport {
    format: &'static str,
    config: MixingConfig,
    rows: Vec<TrendPoint>,
    verdicts: Vec<MixingVerdict>,
    notes: Vec<String>,
}

fn cmd_verify_mixing(a: MixingArgs) -> dpp_core::Result<()> {
    if a.k.iter().any(|k| *k < 2) {
        return Err(DppError::InvalidInput("k must be at least 2 (k = 1 ratios are trivially rho)".into()));
    }
    if a.t_list.is_empty() || a.t_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DppError::InvalidInput("t_list must be non-empty and strictly increasing".into()));
    }
    let model = load_model(&a.model)?;
    let rows = brillinger_table(&model, &a.k, &a.t_list, a.nodes_per_axis)?;
    let verdicts = a
        .k
        .iter()
        .map(|k| {
            let r: Vec<f64> = rows.iter().filter(|p| p.k == *k).map(|p| p.ratio).collect();
            let change = (r.len() >= 2).then(|| {
                let (x, y) = (r[r.len() - 2], r[r.len() - 1]);
                if x == 0.0 && y == 0.0 { 0.0 } else { (y - x).abs() / x.abs().max(y.abs()) }
            });
            MixingVerdict { k: *k, relative_change: change, stabilized: change.map(|c| c < 0.05) }
        })
        .collect();
    write_trend_csv(&a.out_dir.join("mixing.csv"), &rows)?;
    let report = MixingReport {
        format: FORMAT_VERSION,
        config: MixingConfig { model: model.spec().clone(), k: a.k, t_list: a.t_list, nodes_per_axis: a.nodes_per_axis },
        rows,
        verdicts,
        notes: vec!["ratios are signed cube masses; they lower-bound the total-variation ratios".into()],
    };
    write_json(&a.out_dir.join("mixing.json"), &report)
}

fn load_config(path: &Path, replicates: Option<usize>, seed: Option<u64>) -> dpp_core::Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = read_json(path)?;
    if let Some(r) = replicates {
        cfg.replicates = r;
    }
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    // Existence is checked before anything runs.
    KernelModel::new(cfg.model.clone())?;
    if let Some(r) = &cfg.reference {
        KernelModel::new(r.clone())?;
    }
    info!("master seed = {}", cfg.master_seed);
    Ok(cfg)
}

fn write_report(out_dir: &Path, report: &McReport) -> dpp_core::Result<()> {
    for w in &report.warnings {
        log::warn!("{w}");
    }
    write_json(&out_dir.join("report.json"), report)?;
    write_replicates_csv(&out_dir.join("replicates.csv"), report)?;
    info!("{} finished in {:.1} s", report.experiment, report.runtime_secs);
    Ok(())
}

fn cmd_clt(a: CltArgs) -> dpp_core::Result<()> {
    let cfg = load_config(&a.config, a.replicates, a.seed)?;
    let report = match (a.experiment, &cfg.statistic) {
        (Experiment::Intensity, Statistic::Intensity) => run_intensity_clt(&cfg)?,
        (Experiment::CumulantDecay, Statistic::Intensity) => run_cumulant_decay(&cfg, a.order)?,
        (Experiment::Pcf, Statistic::Pcf { r }) => run_pcf_clt(&cfg, *r)?,
        (Experiment::Ise, Statistic::Ise { .. }) => run_ise_clt(&cfg)?,
        (_, s) => {
            return Err(DppError::InvalidInput(format!(
                "experiment does not match the configured statistic {s:?}"
            )))
        }
    };
    write_report(&a.out_dir, &report)
}

fn cmd_gof(a: GofArgs) -> dpp_core::Result<()> {
    let mut cfg = load_config(&a.config, a.replicates, a.seed)?;
    if let Some(r) = &a.reference {
        let spec = parse_model_spec(r, Some(Path::new(".")))?;
        KernelModel::new(spec.clone())?;
        cfg.reference = Some(spec);
    }
    if cfg.reference.is_none() {
        return Err(DppError::InvalidInput("gof needs a reference model (--reference or config)".into()));
    }
    if !matches!(cfg.statistic, Statistic::Ise { .. }) {
        return Err(DppError::InvalidInput("gof needs an `ise` statistic in the config".into()));
    }
    write_report(&a.out_dir, &run_ise_clt(&cfg)?)
}
