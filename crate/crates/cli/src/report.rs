use crate::error::{CliError, CliResult};
use crate::summary::{RunManifest, RunSummary};
use std::fs;
use std::path::Path;

pub const DENSITY_TOL: f64 = 0.05;
pub const GRAM_TOL: f64 = 0.05;
pub const TOEPLITZ_TOL: f64 = 0.05;
/// Lower bound the plain Gram defect must keep when the
/// invariant space has more than one section.
pub const PLAIN_DEFECT_FLOOR: f64 = 0.02;
/// Density trends are judged from this k on.
pub const TREND_FROM: u32 = 8;
/// Gram and Toeplitz trends are judged from this k on.
pub const MATRIX_TREND_FROM: u32 = 16;

fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn fmt_slope(s: Option<f64>) -> String {
    s.map_or("n/a".into(), |v| format!("{v:.2}"))
}

pub fn load_manifest(path: &Path) -> CliResult<RunManifest> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| CliError::Structural(format!("{}: {e}", path.display())))?;
    if m.files.is_empty() {
        return Err(CliError::Structural("manifest lists no output files".into()));
    }
    Ok(m)
}

/// Checks that every listed file exists and carries the config hash.
pub fn check_files(dir: &Path, m: &RunManifest) -> CliResult<()> {
    for f in &m.files {
        let p = dir.join(&f.path);
        let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
        let head = if f.path.ends_with(".json") {
            text.lines().find(|l| l.contains("config_hash")).unwrap_or("")
        } else {
            text.lines().next().unwrap_or("")
        };
        if !head.contains(&m.config_hash) {
            return Err(CliError::Structural(format!("{} does not carry config hash {}", f.path, m.config_hash)));
        }
    }
    Ok(())
}

/// One line per check: densities, Gram defects, Toeplitz defects.
pub fn convergence_lines(s: &RunSummary) -> Vec<(String, bool)> {
    let mut lines = Vec::new();
    for d in &s.densities {
        let trend: Vec<_> = d.steps.iter().filter(|st| st.k >= TREND_FROM).collect();
        let Some(last) = trend.last() else { continue };
        for (name, devs, scale, slope) in [
            ("I_k", trend.iter().map(|t| t.max_dev_i).collect::<Vec<_>>(), last.scale_i, d.slope_i),
            ("J_k", trend.iter().map(|t| t.max_dev_j).collect::<Vec<_>>(), last.scale_j, d.slope_j),
        ] {
            let final_dev = *devs.last().expect("nonempty");
            let relative = final_dev / scale.max(1e-300);
            let ok = decreasing(&devs) && relative < DENSITY_TOL;
            lines.push((
                format!(
                    "{} density {name} [{}]: max dev @k={} = {final_dev:.3e} ({:.2}% of limit), decreasing for k >= {TREND_FROM}: {}, slope {}",
                    s.scenario,
                    d.observable,
                    last.k,
                    100.0 * relative,
                    decreasing(&devs),
                    fmt_slope(slope),
                ),
                ok,
            ));
        }
    }
    for twist in ["plain", "half_form"] {
        let steps: Vec<_> = s.gram.iter().filter(|g| g.twist == twist && g.k >= MATRIX_TREND_FROM).collect();
        let Some(last) = steps.last() else { continue };
        let defects: Vec<f64> = steps.iter().map(|g| g.defect).collect();
        let seq = defects.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>().join(" ");
        let (rule, ok) = if twist == "half_form" {
            let decr = steps.iter().all(|g| g.dim <= 1) || decreasing(&defects);
            (format!("decreasing and final < {GRAM_TOL}"), decr && last.defect < GRAM_TOL)
        } else if steps.iter().all(|g| g.dim <= 1) {
            ("one-dimensional, defect 0".to_string(), defects.iter().all(|&d| d == 0.0))
        } else {
            let floor = defects.iter().cloned().fold(f64::INFINITY, f64::min);
            (format!("bounded below by {PLAIN_DEFECT_FLOOR}"), floor >= PLAIN_DEFECT_FLOOR)
        };
        lines.push((format!("{} Gram defect ({twist}) for k >= {MATRIX_TREND_FROM}: [{seq}], {rule}", s.scenario), ok));
    }
    let mut symbols: Vec<&str> = s.toeplitz.iter().map(|t| t.symbol.as_str()).collect();
    symbols.dedup();
    for sym in symbols {
        let steps: Vec<_> = s.toeplitz.iter().filter(|t| t.symbol == sym && t.k >= MATRIX_TREND_FROM).collect();
        let Some(last) = steps.last() else { continue };
        let defects: Vec<f64> = steps.iter().map(|t| t.defect).collect();
        let negligible = defects.iter().all(|&d| d < 1e-8);
        let ok = negligible || (decreasing(&defects) && last.defect < TOEPLITZ_TOL);
        let seq = defects.iter().map(|d| format!("{d:.3e}")).collect::<Vec<_>>().join(" ");
        lines.push((format!("{} Toeplitz defect [{sym}] for k >= {MATRIX_TREND_FROM}: [{seq}], decreasing and final < {TOEPLITZ_TOL}", s.scenario), ok));
    }
    lines
}

/// Reads a manifest and the summary it lists; returns the report text and
/// whether every line passed.
pub fn report(manifest_path: &Path) -> CliResult<(String, bool)> {
    let m = load_manifest(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    check_files(dir, &m)?;
    let entry = m
        .files
        .iter()
        .find(|f| f.experiment == "summary")
        .ok_or_else(|| CliError::Structural("manifest lists no summary".into()))?;
    let p = dir.join(&entry.path);
    let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
    let s: RunSummary = serde_json::from_str(&text).map_err(|e| CliError::Structural(format!("{}: {e}", p.display())))?;
    let mut out = format!("{} run {} ({})\n", m.tool_version, s.scenario, m.config_hash);
    let mut all = true;
    for (line, ok) in convergence_lines(&s) {
        all &= ok;
        out.push_str(&format!("{line}: {}\n", verdict(ok)));
    }
    for st in &m.stages {
        out.push_str(&format!("stage {}: {:.2}s\n", st.stage, st.seconds));
    }
    Ok((out, all))
}
