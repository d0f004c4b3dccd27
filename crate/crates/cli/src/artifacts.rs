//! Run-directory files: CSV tables and the JSON summary.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use aims_gp::aims::{LevelSummary, SamplerResult};
use aims_gp::dataset::AffineMap;
use aims_gp::HyperParams;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::CliError;

pub const SAMPLES: &str = "samples.csv";
pub const LEVELS: &str = "levels.csv";
pub const SUMMARY: &str = "summary.json";
pub const TRAINING: &str = "training.csv";
pub const CONFIG: &str = "run.conf";
pub const PREDICTIONS: &str = "predictions.csv";
pub const RESIDUALS: &str = "residuals.csv";
pub const REPORT: &str = "report.txt";

/// Shortest representation that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

pub fn write_lines(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    let mut put = |line: String| writeln!(f, "{line}").map_err(|e| io_err(path, e));
    put(header.join(","))?;
    for r in rows {
        put(r.join(","))?;
    }
    f.flush().map_err(|e| io_err(path, e))
}

/// `log_phi_1..log_phi_p, nugget, h`, one row per final sample.
pub fn write_samples(path: &Path, result: &SamplerResult) -> Result<(), CliError> {
    let level = &result.final_level;
    let p = level.samples.first().map_or(0, |z| z.len() - 1);
    let header: Vec<String> = (1..=p)
        .map(|i| format!("log_phi_{i}"))
        .chain(["nugget".into(), "h".into()])
        .collect();
    let phis = result.final_samples();
    let rows = level
        .samples
        .iter()
        .zip(&phis)
        .zip(&level.h_values)
        .map(|((z, phi), h)| {
            z[..p]
                .iter()
                .map(|v| num(*v))
                .chain([num(phi.nugget()), num(*h)])
                .collect()
        });
    write_lines(path, &header, rows)
}

pub fn write_levels(path: &Path, levels: &[LevelSummary]) -> Result<(), CliError> {
    let header: Vec<String> = [
        "level",
        "tau",
        "delta",
        "spread",
        "local_rate",
        "global_rate",
        "delayed_rate",
        "min_h",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rows = levels.iter().map(|l| {
        vec![
            l.index.to_string(),
            num(l.tau),
            num(l.cov_delta),
            num(l.spread),
            num(l.local_rate),
            num(l.global_rate),
            num(l.delayed_rate),
            num(l.min_h),
        ]
    });
    write_lines(path, &header, rows)
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn summary_json(cfg: &RunConfig, result: &SamplerResult, scaling: Option<&AffineMap>, wall_time: f64) -> Value {
    let (map, map_h) = result.map_candidate();
    let z = &result.final_level.samples[result.map_index()];
    json!({
        "dataset": cfg.dataset.to_string(),
        "seed": cfg.sampler.master_seed,
        "mode": cfg.sampler.mode.to_string(),
        "samples_per_level": cfg.sampler.sample_count,
        "levels": result.annealing_levels(),
        "converged": result.converged(),
        "stop_reason": result.stop_reason.to_string(),
        "final_tau": result.final_level.tau,
        "delta_0": finite_or_null(result.levels[0].cov_delta),
        "final_delta": finite_or_null(result.final_level.cov_delta),
        "map": {
            "log_lengths": &z[..z.len() - 1],
            "lengths": map.lengths(),
            "nugget": map.nugget(),
        },
        "map_h": map_h,
        "input_scaling": scaling.map(|s| json!({ "offset": s.offset, "scale": s.scale })),
        "wall_time_seconds": wall_time,
    })
}

pub fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

pub fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

/// Header and numeric rows; empty cells are `None`.
pub type Table = (Vec<String>, Vec<Vec<Option<f64>>>);

/// Reads a CSV file with a header row.
pub fn read_table(path: &Path) -> Result<Table, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io_err(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| io_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let row = rec
            .iter()
            .map(|cell| {
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>()
                        .map(Some)
                        .map_err(|_| io_err(path, format!("line {}: cannot parse '{cell}'", i + 2)))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Final-level hyper-parameters and objective values from `samples.csv`.
pub fn read_samples(path: &Path) -> Result<(Vec<HyperParams>, Vec<f64>), CliError> {
    let (header, rows) = read_table(path)?;
    let p = header
        .len()
        .checked_sub(2)
        .filter(|p| *p >= 1)
        .ok_or_else(|| io_err(path, "too few columns"))?;
    let mut phis = Vec::with_capacity(rows.len());
    let mut hs = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        let vals: Vec<f64> = r
            .iter()
            .map(|c| c.ok_or_else(|| io_err(path, format!("line {}: empty cell", i + 2))))
            .collect::<Result<_, _>>()?;
        let lengths = vals[..p].iter().map(|v| v.exp()).collect();
        let phi = HyperParams::new(lengths, vals[p]).map_err(|e| io_err(path, format!("line {}: {e}", i + 2)))?;
        phis.push(phi);
        hs.push(vals[p + 1]);
    }
    Ok((phis, hs))
}

pub fn read_scaling(summary: &Value) -> Option<AffineMap> {
    let s = summary.get("input_scaling")?;
    let vec = |k: &str| -> Option<Vec<f64>> { s.get(k)?.as_array()?.iter().map(Value::as_f64).collect() };
    Some(AffineMap {
        offset: vec("offset")?,
        scale: vec("scale")?,
    })
}
