use crate::config::{ScenarioConfig, TwistConfig};
use crate::error::{CliError, CliResult};
use crate::summary::*;
use qred_core::densities::{density_limits, loglog_slope, Observable};
use qred_core::reduction_maps::{gram_report, toeplitz_pair};
use qred_core::scenarios::Scenario;
use qred_core::torus_action::ZeroSetRule;
use rayon::prelude::*;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const TOOL_VERSION: &str = concat!("qred ", env!("CARGO_PKG_VERSION"));

pub fn header_line(hash: &str) -> String {
    format!("# {TOOL_VERSION} config sha256:{hash}\n")
}

fn num(v: f64) -> String {
    format!("{v:.12e}")
}

/// One unit of parallel work. Its CSV rows go to a staging file.
#[derive(Debug, Clone)]
enum Cell {
    Density { obs: usize, k: u32 },
    Gram { twist: TwistConfig, k: u32 },
    Toeplitz { obs: usize, k: u32 },
}

enum CellResult {
    Density(Vec<(f64, f64, f64, f64)>),
    Gram(GramStep),
    Toeplitz(ToeplitzStep),
}

struct Ctx<'a> {
    cfg: &'a ScenarioConfig,
    sc: Scenario,
    observables: Vec<Observable>,
    nodes: Vec<qred_core::toric_geometry::ChartPoint>,
}

impl Ctx<'_> {
    fn run_cell(&self, cell: &Cell, staging: &Path) -> CliResult<CellResult> {
        let (m, a) = (&self.sc.model, &self.sc.action);
        let level = self.cfg.quadrature.gram;
        let mut body = String::new();
        let result = match *cell {
            Cell::Density { obs, k } => {
                let f = &self.observables[obs];
                let rep = density_limits(&self.sc.name, m, a, &self.nodes, &[k], f)?;
                let mut stats = Vec::new();
                for r in &rep.rows {
                    let u: Vec<String> = r.moment.iter().map(|&v| num(v)).collect();
                    body.push_str(&format!(
                        "{},{},{},{},{},{},{},{},{},{},{}\n",
                        self.sc.name,
                        rep.observable,
                        r.node,
                        u.join(","),
                        r.k,
                        num(r.i_k),
                        num(r.j_k),
                        num(r.limit_i),
                        num(r.limit_j),
                        num(r.deviation_i()),
                        num(r.deviation_j()),
                    ));
                    stats.push((r.deviation_i(), r.deviation_j(), r.limit_i.abs(), r.limit_j.abs()));
                }
                CellResult::Density(stats)
            }
            Cell::Gram { twist, k } => {
                let g = gram_report(m, a, k, twist.twist(), level)?;
                for r in 0..g.basis.len() {
                    for c in 0..g.basis.len() {
                        body.push_str(&format!(
                            "{},{},{},{},{},{},{},{},{}\n",
                            self.sc.name,
                            twist.tag(),
                            k,
                            r,
                            c,
                            g.basis[r],
                            g.basis[c],
                            num(g.g_up[(r, c)]),
                            num(g.g_down[(r, c)]),
                        ));
                    }
                }
                CellResult::Gram(GramStep { twist: twist.tag().into(), k, dim: g.basis.len(), mu: g.mu, defect: g.defect })
            }
            Cell::Toeplitz { obs, k } => {
                let t = toeplitz_pair(m, a, k, &self.observables[obs], level)?;
                let n = t.upstairs.nrows();
                for r in 0..n {
                    for c in 0..n {
                        body.push_str(&format!(
                            "{},{},{},{},{},{},{},{}\n",
                            self.sc.name,
                            t.symbol,
                            k,
                            r,
                            c,
                            num(t.upstairs[(r, c)]),
                            num(t.downstairs[(r, c)]),
                            num(t.conjugated[(r, c)]),
                        ));
                    }
                }
                CellResult::Toeplitz(ToeplitzStep { symbol: t.symbol, k, dim: n, defect: t.defect })
            }
        };
        fs::write(staging, body).map_err(|e| CliError::io(staging, e))?;
        Ok(result)
    }
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Concatenates staging files in cell order under a header.
fn merge(out: &Path, header: &str, columns: &str, parts: &[PathBuf]) -> CliResult<()> {
    let mut text = String::from(header);
    text.push_str(columns);
    text.push('\n');
    for p in parts {
        text.push_str(&fs::read_to_string(p).map_err(|e| CliError::io(p, e))?);
    }
    write(out, &text)
}

fn plot_script(header: &str) -> String {
    format!(
        "{header}set datafile separator ','
set datafile commentschars '#'
set logscale xy
set xlabel 'k'
set ylabel 'deviation / defect'
set key outside
series(s) = (strcol(1) eq s) ? $3 : 1/0
plot 'convergence.csv' using 2:(series('density_i')) with linespoints title 'max |I_k - limit|', \\
     'convergence.csv' using 2:(series('density_j')) with linespoints title 'max |J_k - limit|', \\
     'convergence.csv' using 2:(series('gram_plain')) with linespoints title 'Gram defect (plain)', \\
     'convergence.csv' using 2:(series('gram_half_form')) with linespoints title 'Gram defect (half-form)', \\
     'convergence.csv' using 2:(series('toeplitz')) with linespoints title 'Toeplitz defect'
pause -1
"
    )
}

fn timed<T>(stages: &mut Vec<StageTime>, name: &str, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
    let t = Instant::now();
    let r = f()?;
    stages.push(StageTime { stage: name.into(), seconds: t.elapsed().as_secs_f64() });
    Ok(r)
}

/// Validates, runs every experiment cell, and writes the outputs into
/// `cfg.output`. CSV and summary bytes depend only on the config.
pub fn run(cfg: &ScenarioConfig) -> CliResult<RunManifest> {
    let mut stages = Vec::new();
    timed(&mut stages, "validate", || cfg.validate())?;
    let hash = cfg.hash();
    let header = header_line(&hash);
    let out = &cfg.output;
    let staging = out.join(".staging");
    fs::create_dir_all(&staging).map_err(|e| CliError::io(&staging, e))?;

    let sc = cfg.scenario()?;
    let nodes = {
        let rule = ZeroSetRule::with_resolution(&sc.model, &sc.action, cfg.quadrature.density_nodes, 1)?;
        (0..rule.slice_nodes().len()).map(|i| rule.point(&sc.model, i, 0)).collect()
    };
    let ctx = Ctx { cfg, sc, observables: cfg.observables(), nodes };
    let ks = cfg.sorted_k();

    let mut cells = Vec::new();
    for obs in 0..ctx.observables.len() {
        cells.extend(ks.iter().map(|&k| Cell::Density { obs, k }));
    }
    for &twist in &cfg.twists {
        cells.extend(ks.iter().map(|&k| Cell::Gram { twist, k }));
    }
    if cfg.twists.contains(&TwistConfig::HalfForm) {
        for obs in 0..ctx.observables.len() {
            cells.extend(ks.iter().map(|&k| Cell::Toeplitz { obs, k }));
        }
    }
    let paths: Vec<PathBuf> = (0..cells.len()).map(|i| staging.join(format!("cell-{i:04}.csv"))).collect();
    let results = timed(&mut stages, "cells", || {
        cells.par_iter().zip(&paths).map(|(c, p)| ctx.run_cell(c, p)).collect::<CliResult<Vec<_>>>()
    })?;

    let t = Instant::now();
    let pick = |f: fn(&Cell) -> bool| -> Vec<PathBuf> {
        cells.iter().zip(&paths).filter(|(c, _)| f(c)).map(|(_, p)| p.clone()).collect()
    };
    let n_slots = ctx.sc.model.homogeneous_len();
    let u_cols: Vec<String> = (0..n_slots).map(|a| format!("u{a}")).collect();
    let mut files = Vec::new();
    let mut emit = |experiment: &str, name: &str| files.push(OutputFile { experiment: experiment.into(), path: name.into() });

    merge(
        &out.join("densities.csv"),
        &header,
        &format!("scenario,observable,node,{},k,i_k,j_k,limit_i,limit_j,dev_i,dev_j", u_cols.join(",")),
        &pick(|c| matches!(c, Cell::Density { .. })),
    )?;
    emit("densities", "densities.csv");
    merge(
        &out.join("gram.csv"),
        &header,
        "scenario,twist,k,row,col,basis_row,basis_col,g_up,g_down",
        &pick(|c| matches!(c, Cell::Gram { .. })),
    )?;
    emit("gram", "gram.csv");
    let toeplitz_parts = pick(|c| matches!(c, Cell::Toeplitz { .. }));
    if !toeplitz_parts.is_empty() {
        merge(
            &out.join("toeplitz.csv"),
            &header,
            "scenario,symbol,k,row,col,upstairs,downstairs,conjugated",
            &toeplitz_parts,
        )?;
        emit("toeplitz", "toeplitz.csv");
    }

    let mut densities = Vec::new();
    let mut gram = Vec::new();
    let mut toeplitz = Vec::new();
    for (cell, res) in cells.iter().zip(results) {
        match (cell, res) {
            (Cell::Density { obs, k }, CellResult::Density(stats)) => {
                let tag = ctx.observables[*obs].tag();
                if densities.last().is_none_or(|d: &DensitySummary| d.observable != tag) {
                    densities.push(DensitySummary { observable: tag, steps: vec![], slope_i: None, slope_j: None });
                }
                let fold = |g: fn(&(f64, f64, f64, f64)) -> f64| stats.iter().map(g).fold(0.0, f64::max);
                densities.last_mut().expect("pushed").steps.push(DensityStep {
                    k: *k,
                    max_dev_i: fold(|s| s.0),
                    max_dev_j: fold(|s| s.1),
                    scale_i: fold(|s| s.2),
                    scale_j: fold(|s| s.3),
                });
            }
            (_, CellResult::Gram(g)) => gram.push(g),
            (_, CellResult::Toeplitz(t)) => toeplitz.push(t),
            _ => unreachable!("cell and result kinds agree"),
        }
    }
    for d in &mut densities {
        d.slope_i = loglog_slope(d.steps.iter().map(|s| (s.k as f64, s.max_dev_i)));
        d.slope_j = loglog_slope(d.steps.iter().map(|s| (s.k as f64, s.max_dev_j)));
    }
    let summary = RunSummary { config_hash: hash.clone(), scenario: ctx.sc.name.clone(), densities, gram, toeplitz };
    write(&out.join("summary.json"), &(serde_json::to_string_pretty(&summary).expect("serializes") + "\n"))?;
    emit("summary", "summary.json");

    let mut conv = format!("{header}series,k,value\n");
    if let Some(d) = summary.densities.first() {
        for s in &d.steps {
            conv.push_str(&format!("density_i,{},{}\n", s.k, num(s.max_dev_i)));
        }
        for s in &d.steps {
            conv.push_str(&format!("density_j,{},{}\n", s.k, num(s.max_dev_j)));
        }
    }
    for g in &summary.gram {
        conv.push_str(&format!("gram_{},{},{}\n", g.twist, g.k, num(g.defect)));
    }
    for t in summary.toeplitz.iter().filter(|t| t.symbol == "moment_sum") {
        conv.push_str(&format!("toeplitz,{},{}\n", t.k, num(t.defect)));
    }
    write(&out.join("convergence.csv"), &conv)?;
    emit("plot", "convergence.csv");
    write(&out.join("plot.gp"), &plot_script(&header))?;
    emit("plot", "plot.gp");
    fs::remove_dir_all(&staging).map_err(|e| CliError::io(&staging, e))?;
    stages.push(StageTime { stage: "merge".into(), seconds: t.elapsed().as_secs_f64() });

    let manifest = RunManifest { config_hash: hash, tool_version: TOOL_VERSION.into(), files, stages };
    write(&out.join("manifest.json"), &(serde_json::to_string_pretty(&manifest).expect("serializes") + "\n"))?;
    Ok(manifest)
}
