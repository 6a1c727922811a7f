//! Library side of the `fluxcouple` command: config loading, the three
//! commands and their file outputs.
//!
//! Every command writes a JSON report with sorted keys that embeds the
//! effective configuration and its SHA-256 hash, plus CSV data files and,
//! with `--plot`, SVG figures.

pub mod config;
pub mod svg;

use std::fs;
use std::path::{Path, PathBuf};

use fluxcouple::accel::{SolveReport, TraceEntry};
use fluxcouple::transport::Grid;
use fluxcouple::tune::{self, TrialRecord, TuneResult, TuneSettings};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

pub use config::RunConfig;

/// Version of the JSON and CSV layouts.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Run(String),
}

impl CliError {
    /// 2 for configuration and i/o problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io { .. } => 2,
            Self::Run(_) => 1,
        }
    }
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// False when the command ran but did not reach its goal (an
    /// unconverged solve, or a tuning run where nothing converged).
    pub success: bool,
    pub summary: String,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.success {
            0
        } else {
            1
        }
    }
}

/// Flag-level settings shared by all commands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub plot: bool,
}

impl RunOptions {
    /// Applies the flags that live in the config itself.
    pub fn apply(&self, config: &mut RunConfig) {
        if let Some(dir) = &self.out_dir {
            config.outputs.out_dir = dir.to_string_lossy().into_owned();
        }
        if let Some(seed) = self.seed {
            if let Some(noise) = config.noise.as_mut() {
                noise.seed = seed;
            }
            config.tune.seed = seed;
        }
        if self.plot {
            config.outputs.plot = true;
        }
    }
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        self.files.push(path);
        Ok(())
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Run(e.to_string());
        w.write_record(header).map_err(err)?;
        for row in rows {
            w.write_record(row).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Run(e.to_string()))?;
        self.write(name, &bytes)
    }
}

/// `serde_json::Value` objects keep keys sorted, which makes every report
/// canonical.
fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn envelope(command: &str, config: &RunConfig, body: Value) -> Value {
    let mut v = json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config_hash": config.hash(),
        "config": to_value(config),
    });
    if let (Value::Object(map), Value::Object(extra)) = (&mut v, body) {
        map.extend(extra);
    }
    v
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn trace_rows(trace: &[TraceEntry]) -> Vec<Vec<String>> {
    trace
        .iter()
        .map(|t| {
            vec![
                t.k.to_string(),
                t.residual.to_string(),
                t.f_norm.to_string(),
                t.beta.to_string(),
                t.depth.to_string(),
                opt(t.gain),
                opt(t.lsq_residual),
                opt(t.aux_residual),
            ]
        })
        .collect()
}

const TRACE_HEADER: &[&str] = &[
    "k",
    "residual",
    "f_norm",
    "beta",
    "depth",
    "gain",
    "lsq_residual",
    "aux_residual",
];

fn status_name<T: Serialize>(status: &T) -> String {
    match to_value(status) {
        Value::String(s) => s,
        other => other.to_string(),
    }
}

/// Runs one solve and writes `report.json`, `trace.csv`, `profile.csv`
/// and, with plotting on, `convergence.svg`.
pub fn cmd_solve(config: &RunConfig) -> Result<Outcome, CliError> {
    let exp = config.experiment();
    let report: SolveReport = exp.run().map_err(|e| CliError::Config(e.to_string()))?;
    let mut w = Writer::new(Path::new(&config.outputs.out_dir))?;
    w.json(
        "report.json",
        &envelope("solve", config, json!({ "result": to_value(&report) })),
    )?;
    w.csv("trace.csv", TRACE_HEADER, trace_rows(&report.trace))?;
    let grid = Grid::new(config.problem.n_points).map_err(|e| CliError::Config(e.to_string()))?;
    let rows = grid
        .nodes()
        .iter()
        .zip(&report.final_iterate)
        .map(|(x, p)| vec![x.to_string(), p.to_string()])
        .collect();
    w.csv("profile.csv", &["x", "p"], rows)?;
    if config.outputs.plot {
        let pts = report
            .trace
            .iter()
            .map(|t| (t.k as f64, t.residual))
            .collect();
        let title = format!(
            "r = {}, beta = {}, m = {}, d = {}",
            config.problem.r, config.accel.beta, config.accel.m_max, config.accel.delay
        );
        w.write(
            "convergence.svg",
            svg::convergence_plot(&title, &[("residual", pts)]).as_bytes(),
        )?;
    }
    let success = report.status.is_converged();
    Ok(Outcome {
        files: w.files,
        success,
        summary: format!(
            "{} after {} iterations",
            status_name(&report.status),
            report.iterations
        ),
    })
}

fn sweep_row(t: &TrialRecord) -> Vec<String> {
    vec![
        t.params["beta"].to_string(),
        t.params["m_max"].to_string(),
        t.params["delay"].to_string(),
        if t.converged() {
            t.iterations.to_string()
        } else {
            String::new()
        },
        status_name(&t.status),
    ]
}

/// Sweeps the β × m × d grid and writes `sweep.csv`, `sweep.json` and, with
/// plotting on, one heatmap per delay.
pub fn cmd_sweep(config: &RunConfig, jobs: Option<usize>) -> Result<Outcome, CliError> {
    let grid = config.sweep_grid()?;
    let records = tune::run_sweep(&grid, &config.experiment(), jobs)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut w = Writer::new(Path::new(&config.outputs.out_dir))?;
    w.csv(
        "sweep.csv",
        &["beta", "m", "d", "iterations", "status"],
        records.iter().map(sweep_row).collect(),
    )?;
    w.json(
        "sweep.json",
        &envelope(
            "sweep",
            config,
            json!({ "axes": to_value(&grid.axes), "cells": to_value(&records) }),
        ),
    )?;
    if config.outputs.plot {
        let (betas, depths, delays) = (&grid.axes[0].1, &grid.axes[1].1, &grid.axes[2].1);
        for (k, d) in delays.iter().enumerate() {
            let svg = svg::heatmap(&format!("iterations, d = {d}"), betas, depths, |i, j| {
                let idx = (i * depths.len() + j) * delays.len() + k;
                let t = &records[idx];
                t.converged().then_some(t.iterations)
            });
            w.write(&format!("heatmap_d{d}.svg"), svg.as_bytes())?;
        }
    }
    let converged = records.iter().filter(|t| t.converged()).count();
    Ok(Outcome {
        files: w.files,
        success: true,
        summary: format!("{converged} of {} cells converged", records.len()),
    })
}

/// Tunes over the configured space and writes `tune.json` and `tune.csv`.
pub fn cmd_tune(config: &RunConfig, jobs: Option<usize>) -> Result<Outcome, CliError> {
    let space = config.param_space()?;
    let settings = TuneSettings {
        n_initial: config.tune.n_initial,
        n_total: config.tune.n_total,
        seed: config.tune.seed,
        include_base: config.tune.include_base,
        jobs,
        keep_reports: false,
    };
    let result: TuneResult = tune::tune(&space, &config.experiment(), &settings)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut w = Writer::new(Path::new(&config.outputs.out_dir))?;
    w.json(
        "tune.json",
        &envelope(
            "tune",
            config,
            json!({
                "best": to_value(&result.best),
                "history": to_value(&result.history),
                "all_failed": result.all_failed,
                "seed": settings.seed,
            }),
        ),
    )?;
    let names: Vec<&str> = space.dims.iter().map(|d| d.name.as_str()).collect();
    let mut header = vec!["index"];
    header.extend(&names);
    header.extend(["objective", "iterations", "status"]);
    let rows = result
        .history
        .iter()
        .map(|t| {
            let mut row = vec![t.index.to_string()];
            row.extend(names.iter().map(|n| t.params[*n].to_string()));
            row.extend([
                t.objective.to_string(),
                t.iterations.to_string(),
                status_name(&t.status),
            ]);
            row
        })
        .collect();
    w.csv("tune.csv", &header, rows)?;
    if result.all_failed {
        eprintln!("warning: no trial converged; best is the lowest penalty");
    }
    let best = result
        .best
        .params
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ");
    Ok(Outcome {
        files: w.files,
        success: !result.all_failed,
        summary: format!("best objective {} with {best}", result.best.objective),
    })
}
