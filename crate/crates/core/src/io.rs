//! Persistence: model spec strings, pattern CSV + sidecar JSON, tabulated
//! kernels and the CSV tables written by the command-line tool.
//!
//! Every CSV starts with the version line `# dpp-lab v1`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{DppError, Result};
use crate::kernel::{Family, ModelSpec};
use crate::mc::{experiment_seed, McReport};
use crate::spectral::TrendPoint;
use crate::window::{PointPattern, Provenance, Window};

pub const CSV_VERSION_LINE: &str = "# dpp-lab v1";
pub const FORMAT_VERSION: &str = "dpp-lab v1";
const AXES: [&str; 3] = ["x", "y", "z"];

/// Parses `family:key=value,...`, e.g. `gaussian:rho=100,alpha=0.05,d=2`.
/// The dimension defaults to 2. Tabulated kernels name their table with
/// `file=<path>` (relative paths resolve against `base_dir`).
pub fn parse_model_spec(s: &str, base_dir: Option<&Path>) -> Result<ModelSpec> {
    let (family, rest) = s.split_once(':').unwrap_or((s, ""));
    let mut rho = None;
    let mut alpha = None;
    let mut dim = 2usize;
    let mut file = None;
    for kv in rest.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| DppError::InvalidInput(format!("model parameter '{kv}' is not key=value")))?;
        let num = || v.trim().parse::<f64>().map_err(|e| DppError::InvalidInput(format!("model parameter {k}: {e}")));
        match k.trim() {
            "rho" => rho = Some(num()?),
            "alpha" => alpha = Some(num()?),
            "d" | "dim" => {
                dim = v.trim().parse().map_err(|e| DppError::InvalidInput(format!("model parameter d: {e}")))?
            }
            "file" => file = Some(PathBuf::from(v.trim())),
            other => return Err(DppError::InvalidInput(format!("unknown model parameter '{other}'"))),
        }
    }
    let rho = rho.ok_or_else(|| DppError::InvalidInput("model spec needs rho=<intensity>".into()))?;
    let spec = match family.trim() {
        "gaussian" => {
            let alpha = alpha.ok_or_else(|| DppError::InvalidInput("gaussian model needs alpha=<scale>".into()))?;
            ModelSpec::gaussian(dim, rho, alpha)
        }
        "bessel" => ModelSpec::bessel(dim, rho),
        "poisson" => ModelSpec::poisson(dim, rho),
        "tabulated" => {
            let f = file.ok_or_else(|| DppError::InvalidInput("tabulated model needs file=<csv>".into()))?;
            let path = match base_dir {
                Some(b) if f.is_relative() => b.join(f),
                _ => f,
            };
            let (r, c) = read_tabulated_csv(&path)?;
            ModelSpec::tabulated(dim, rho, r, c)
        }
        other => {
            return Err(DppError::InvalidInput(format!(
                "unknown model family '{other}' (gaussian, bessel, poisson, tabulated)"
            )))
        }
    };
    if alpha.is_some() && !matches!(spec.family, Family::Gaussian { .. }) {
        return Err(DppError::InvalidInput("alpha only applies to the gaussian family".into()));
    }
    Ok(spec)
}

/// Reads lines, skipping blanks and `#` comments; yields (1-based line, fields).
fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let t = l.trim();
        (!t.is_empty() && !t.starts_with('#')).then(|| (i + 1, t.split(',').map(str::trim).collect()))
    })
}

fn parse_field(line: usize, s: &str) -> Result<f64> {
    let v = s
        .parse::<f64>()
        .map_err(|_| DppError::MalformedData { line, msg: format!("'{s}' is not a number") })?;
    if !v.is_finite() {
        return Err(DppError::MalformedData { line, msg: format!("'{s}' is not finite") });
    }
    Ok(v)
}

/// Two-column table with header `r,c`.
pub fn read_tabulated_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = data_lines(&text);
    match lines.next() {
        Some((_, h)) if h == ["r", "c"] => {}
        Some((line, _)) => return Err(DppError::MalformedData { line, msg: "expected header 'r,c'".into() }),
        None => return Err(DppError::MalformedData { line: 1, msg: "empty table".into() }),
    }
    let (mut r, mut c) = (vec![], vec![]);
    for (line, f) in lines {
        if f.len() != 2 {
            return Err(DppError::MalformedData { line, msg: format!("expected 2 fields, found {}", f.len()) });
        }
        r.push(parse_field(line, f[0])?);
        c.push(parse_field(line, f[1])?);
    }
    Ok((r, c))
}

pub fn write_tabulated_csv(path: &Path, r: &[f64], c: &[f64]) -> Result<()> {
    let rows = r.iter().zip(c).map(|(a, b)| vec![*a, *b]);
    write_table(path, &["r", "c"], rows)
}

/// Writes a numeric table with the version line and a header.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut out = String::new();
    out.push_str(CSV_VERSION_LINE);
    out.push('\n');
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    Ok(())
}

/// Sidecar metadata written next to a pattern CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternMeta {
    pub format: String,
    pub window: Window,
    pub n_points: usize,
    pub provenance: Provenance,
}

/// `foo.csv` -> `foo.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Writes the CSV (`x,y[,z]`) and its sidecar JSON.
pub fn write_pattern(path: &Path, p: &PointPattern) -> Result<()> {
    let d = p.dim();
    if d > 3 {
        return Err(DppError::InvalidInput("pattern CSV supports d <= 3".into()));
    }
    write_table(path, &AXES[..d], p.points().map(|x| x.to_vec()))?;
    let meta = PatternMeta {
        format: FORMAT_VERSION.into(),
        window: p.window.clone(),
        n_points: p.len(),
        provenance: p.provenance.clone(),
    };
    write_atomic(&sidecar_path(path), serde_json::to_string_pretty(&meta)?.as_bytes())
}

/// Reads a pattern CSV. The window comes from `window` when given, else from
/// the sidecar JSON; a pattern without either is refused.
pub fn read_pattern(path: &Path, window: Option<&Window>) -> Result<PointPattern> {
    let text = fs::read_to_string(path)?;
    let mut lines = data_lines(&text);
    let d = match lines.next() {
        Some((line, h)) => {
            let d = h.len();
            if !(1..=3).contains(&d) || h != AXES[..d] {
                return Err(DppError::MalformedData { line, msg: "expected header 'x', 'x,y' or 'x,y,z'".into() });
            }
            d
        }
        None => return Err(DppError::MalformedData { line: 1, msg: "no header row".into() }),
    };
    let mut coords = vec![];
    for (line, f) in lines {
        if f.len() != d {
            return Err(DppError::MalformedData { line, msg: format!("expected {d} fields, found {}", f.len()) });
        }
        for s in f {
            coords.push(parse_field(line, s)?);
        }
    }
    let (window, provenance) = match window {
        Some(w) => (w.clone(), Provenance::default()),
        None => {
            let side = sidecar_path(path);
            if !side.exists() {
                return Err(DppError::InvalidInput(format!(
                    "no window given and no sidecar {} found",
                    side.display()
                )));
            }
            let meta: PatternMeta = serde_json::from_str(&fs::read_to_string(&side)?)?;
            (meta.window, meta.provenance)
        }
    };
    if window.dim() != d {
        return Err(DppError::InvalidInput(format!("window dimension {} differs from CSV dimension {d}", window.dim())));
    }
    PointPattern::new(window, coords, provenance)
}

/// `r, ghat, g0, bias_bound` rows.
pub fn write_pcf_csv(path: &Path, r: &[f64], ghat: &[f64], g0: &[f64], bias: &[f64]) -> Result<()> {
    let rows = (0..r.len()).map(|i| vec![r[i], ghat[i], g0[i], bias[i]]);
    write_table(path, &["r", "ghat", "g0", "bias_bound"], rows)
}

/// `t, k, I_k, gamma_fact_k, ratio` rows.
pub fn write_trend_csv(path: &Path, points: &[TrendPoint]) -> Result<()> {
    let rows = points.iter().map(|p| vec![p.t, p.k as f64, p.i_k, p.gamma_fact_k, p.ratio]);
    write_table(path, &["t", "k", "I_k", "gamma_fact_k", "ratio"], rows)
}

/// One row per replicate: `window_index, volume, replicate, seed, value, scaled`.
pub fn write_replicates_csv(path: &Path, report: &McReport) -> Result<()> {
    let mut out = String::new();
    out.push_str(CSV_VERSION_LINE);
    out.push_str("\nwindow_index,volume,replicate,seed,value,scaled\n");
    for w in &report.windows {
        for (i, (v, s)) in w.values.iter().zip(&w.scaled).enumerate() {
            let seed = experiment_seed(report.config.master_seed, w.window_index, i);
            out.push_str(&format!("{},{},{i},{seed},{v},{s}\n", w.window_index, w.volume));
        }
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| DppError::MalformedData { line: e.line(), msg: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_spec_strings() {
        let s = parse_model_spec("gaussian:rho=100,alpha=0.05", None).unwrap();
        assert_eq!(s, ModelSpec::gaussian(2, 100.0, 0.05));
        let s = parse_model_spec("bessel:rho=50,d=1", None).unwrap();
        assert_eq!(s, ModelSpec::bessel(1, 50.0));
        assert_eq!(parse_model_spec("poisson:rho=3", None).unwrap(), ModelSpec::poisson(2, 3.0));
        assert!(parse_model_spec("gaussian:rho=100", None).is_err());
        assert!(parse_model_spec("cauchy:rho=1", None).is_err());
        assert!(parse_model_spec("bessel:rho=1,alpha=2", None).is_err());
        assert!(parse_model_spec("gaussian:rho=x,alpha=1", None).is_err());
    }

    #[test]
    fn pattern_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let w = Window::parse("0,0,2,1").unwrap();
        let mut p = PointPattern::from_points(w.clone(), &[vec![0.25, 0.5], vec![1.5, 0.125]]).unwrap();
        p.provenance.seed = Some(7);
        write_pattern(&path, &p).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# dpp-lab v1\nx,y\n"));
        assert_eq!(read_pattern(&path, None).unwrap(), p);
        let q = read_pattern(&path, Some(&w)).unwrap();
        assert_eq!(q.coords, p.coords);
    }

    #[test]
    fn malformed_pattern_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let w = Window::cube(2, 1.0).unwrap();
        fs::write(&path, "# dpp-lab v1\n0.1,0.2\n").unwrap();
        match read_pattern(&path, Some(&w)) {
            Err(DppError::MalformedData { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        fs::write(&path, "x,y\n0.1,0.2\n0.3\n").unwrap();
        match read_pattern(&path, Some(&w)) {
            Err(DppError::MalformedData { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        fs::write(&path, "x,y\n0.1,abc\n").unwrap();
        assert!(matches!(read_pattern(&path, Some(&w)), Err(DppError::MalformedData { line: 2, .. })));
    }

    #[test]
    fn tabulated_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_tabulated_csv(&path, &[0.0, 0.1, 0.2], &[10.0, 5.0, 0.0]).unwrap();
        let (r, c) = read_tabulated_csv(&path).unwrap();
        assert_eq!(r, vec![0.0, 0.1, 0.2]);
        assert_eq!(c, vec![10.0, 5.0, 0.0]);
        let spec = parse_model_spec("tabulated:rho=10,file=t.csv", Some(dir.path())).unwrap();
        assert!(matches!(spec.family, Family::Tabulated { .. }));
        fs::write(&path, "radius,value\n0,1\n").unwrap();
        assert!(matches!(read_tabulated_csv(&path), Err(DppError::MalformedData { line: 1, .. })));
    }
}
