use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use aims_gp::aims::{run_with_observer, GpObjective};
use aims_gp::dataset::AffineMap;
use aims_gp::mixture::{posterior_weights, rmse, ResidualReport};
use aims_gp::{load_dataset, Builtin, Dataset, DatasetRef, MixtureEmulator, SamplerResult, Weighting};
use rayon::prelude::*;

use crate::artifacts::{self as art, num};
use crate::config::RunConfig;
use crate::CliError;

pub struct FitOutcome {
    pub result: SamplerResult,
    pub dataset: Dataset,
    pub out: PathBuf,
}

impl FitOutcome {
    pub fn converged(&self) -> bool {
        self.result.converged()
    }
}

/// Runs the sampler and writes the run directory. A non-converged run still
/// writes everything; callers check [`FitOutcome::converged`].
pub fn cmd_fit(cfg: &RunConfig) -> Result<FitOutcome, CliError> {
    cfg.validate()?;
    let mut dataset = cfg.dataset.resolve(cfg.sampler.master_seed, cfg.denominator)?;
    if cfg.rescale {
        dataset = dataset.rescaled();
    }
    let data = dataset.training_set()?;
    let out = cfg.out.clone();
    fs::create_dir_all(&out).map_err(|e| CliError::Input(format!("{}: {e}", out.display())))?;
    fs::write(out.join(art::CONFIG), cfg.to_text()).map_err(|e| CliError::Input(format!("{}: {e}", out.display())))?;
    dataset.write_csv(&out.join(art::TRAINING))?;

    log::info!(
        "fitting {} ({} points, {} inputs) with N = {}, seed {}",
        cfg.dataset,
        data.n(),
        data.p(),
        cfg.sampler.sample_count,
        cfg.sampler.master_seed
    );
    let prior = cfg.prior.build();
    let start = Instant::now();
    let result = run_with_observer(&GpObjective::new(&data, prior.as_ref()), &cfg.sampler, &mut |s| {
        log::info!(
            "level {:>2}  tau {:.4e}  delta {:.4}  local {:.3}  global {:.3}  delayed {:.3}",
            s.index,
            s.tau,
            s.cov_delta,
            s.local_rate,
            s.global_rate,
            s.delayed_rate
        );
    })?;
    let wall = start.elapsed().as_secs_f64();

    art::write_samples(&out.join(art::SAMPLES), &result)?;
    art::write_levels(&out.join(art::LEVELS), &result.levels)?;
    let summary = art::summary_json(cfg, &result, dataset.scaling.as_ref(), wall);
    art::write_json(&out.join(art::SUMMARY), &summary)?;
    log::info!(
        "{} after {} levels ({}), MAP H = {:.6}, {wall:.1} s",
        if result.converged() { "converged" } else { "stopped" },
        result.annealing_levels(),
        result.stop_reason,
        result.map_candidate().1
    );
    Ok(FitOutcome { result, dataset, out })
}

/// Mixture and MAP emulators rebuilt from a run directory.
pub struct LoadedRun {
    pub config: RunConfig,
    pub mixture: MixtureEmulator,
    pub map: MixtureEmulator,
    pub scaling: Option<AffineMap>,
}

fn require(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Input(format!("missing run artifact {}", path.display())))
    }
}

pub fn load_run(dir: &Path, weighting: Option<Weighting>) -> Result<LoadedRun, CliError> {
    for name in [art::CONFIG, art::TRAINING, art::SAMPLES, art::SUMMARY] {
        require(&dir.join(name))?;
    }
    let text = fs::read_to_string(dir.join(art::CONFIG)).map_err(|e| CliError::Input(e.to_string()))?;
    let config = RunConfig::parse(&text)?;
    let data = load_dataset(&dir.join(art::TRAINING))?.training_set()?;
    let summary = art::read_json(&dir.join(art::SUMMARY))?;
    let final_tau = summary
        .get("final_tau")
        .and_then(|v| v.as_f64())
        .ok_or_else(|| CliError::Input(format!("{}: no final_tau", art::SUMMARY)))?;
    let (phis, hs) = art::read_samples(&dir.join(art::SAMPLES))?;
    if phis.is_empty() {
        return Err(CliError::Input(format!("{}: no samples", art::SAMPLES)));
    }
    if phis[0].dim() != data.p() {
        return Err(CliError::Input(
            "samples and training data disagree on input dimension".into(),
        ));
    }

    let weights = match weighting.unwrap_or(config.weighting) {
        Weighting::Uniform => vec![1.0; phis.len()],
        Weighting::Importance => posterior_weights(&hs, final_tau)?,
    };
    let best = (0..hs.len()).fold(0, |b, i| if hs[i] < hs[b] { i } else { b });
    let map =
        MixtureEmulator::single(data.clone(), phis[best].clone())?.with_nugget_in_variance(config.nugget_in_variance);
    let mixture = MixtureEmulator::new(data, weights.into_iter().zip(phis).collect())?
        .with_nugget_in_variance(config.nugget_in_variance);
    Ok(LoadedRun {
        scaling: art::read_scaling(&summary),
        config,
        mixture,
        map,
    })
}

type TestPoints = (Vec<Vec<f64>>, Vec<Option<f64>>);

/// Test inputs in original coordinates, with outputs where known.
fn test_points(run: &LoadedRun, test: Option<&Path>) -> Result<TestPoints, CliError> {
    let p = run.mixture.data().p();
    if let Some(path) = test {
        let (header, rows) = art::read_table(path)?;
        if header.len() != p && header.len() != p + 1 {
            return Err(CliError::Input(format!(
                "{}: expected {p} input columns and an optional output column, found {}",
                path.display(),
                header.len()
            )));
        }
        let mut xs = Vec::with_capacity(rows.len());
        let mut ys = Vec::with_capacity(rows.len());
        for (i, r) in rows.into_iter().enumerate() {
            let x: Option<Vec<f64>> = r[..p].iter().copied().collect();
            xs.push(x.ok_or_else(|| CliError::Input(format!("{}: line {}: missing input", path.display(), i + 2)))?);
            ys.push(r.get(p).copied().flatten());
        }
        if xs.is_empty() {
            return Err(CliError::Input(format!("{}: no test rows", path.display())));
        }
        return Ok((xs, ys));
    }
    match run.config.dataset {
        DatasetRef::Builtin(b) => {
            let cfg = &run.config;
            let set = b.test_set(cfg.test_size, cfg.sampler.master_seed, cfg.denominator)?;
            Ok((set.rows(), set.outputs.iter().map(|y| Some(*y)).collect()))
        }
        DatasetRef::File(_) => Err(CliError::Input("file datasets need test inputs (--test <csv>)".into())),
    }
}

pub struct Prediction {
    pub x: Vec<f64>,
    pub mixture: (f64, f64),
    pub map: (f64, f64),
    pub actual: Option<f64>,
}

pub struct PredictOutcome {
    pub rows: Vec<Prediction>,
    /// Over rows with a known output; `None` if there are none.
    pub mixture_rmse: Option<f64>,
    pub map_rmse: Option<f64>,
}

fn residual(moments: (f64, f64), actual: Option<f64>) -> Option<f64> {
    let (m, v) = moments;
    actual.filter(|_| v > 0.0).map(|y| (y - m) / v.sqrt())
}

fn cell(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn cmd_predict(dir: &Path, test: Option<&Path>, weighting: Option<Weighting>) -> Result<PredictOutcome, CliError> {
    let run = load_run(dir, weighting)?;
    let (xs, ys) = test_points(&run, test)?;
    let rows = xs
        .into_par_iter()
        .zip(ys)
        .map(|(x, actual)| {
            let u = run.scaling.as_ref().map_or_else(|| x.clone(), |s| s.forward(&x));
            Ok(Prediction {
                mixture: run.mixture.predict(&u)?,
                map: run.map.predict(&u)?,
                x,
                actual,
            })
        })
        .collect::<Result<Vec<_>, aims_gp::Error>>()?;

    let p = run.mixture.data().p();
    let header: Vec<String> = (1..=p)
        .map(|i| format!("x{i}"))
        .chain(
            [
                "mixture_mean",
                "mixture_var",
                "map_mean",
                "map_var",
                "actual",
                "mixture_residual",
                "map_residual",
            ]
            .map(String::from),
        )
        .collect();
    art::write_lines(
        &dir.join(art::PREDICTIONS),
        &header,
        rows.iter().map(|r| {
            r.x.iter()
                .map(|v| num(*v))
                .chain([
                    num(r.mixture.0),
                    num(r.mixture.1),
                    num(r.map.0),
                    num(r.map.1),
                    cell(r.actual),
                    cell(residual(r.mixture, r.actual)),
                    cell(residual(r.map, r.actual)),
                ])
                .collect()
        }),
    )?;

    let known: Vec<&Prediction> = rows.iter().filter(|r| r.actual.is_some()).collect();
    let score = |pick: fn(&Prediction) -> f64| -> Result<Option<f64>, CliError> {
        if known.is_empty() {
            return Ok(None);
        }
        let pred: Vec<f64> = known.iter().map(|r| pick(r)).collect();
        let act: Vec<f64> = known.iter().filter_map(|r| r.actual).collect();
        Ok(Some(rmse(&pred, &act)?))
    };
    let mixture_rmse = score(|r| r.mixture.0)?;
    let map_rmse = score(|r| r.map.0)?;
    Ok(PredictOutcome {
        rows,
        mixture_rmse,
        map_rmse,
    })
}

pub struct DiagnoseOutcome {
    pub mixture: ResidualReport,
    pub map: ResidualReport,
    pub report: String,
}

fn column(header: &[String], name: &str) -> Result<usize, CliError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Input(format!("{}: no '{name}' column", art::PREDICTIONS)))
}

/// Standardized residuals of `predictions.csv` rows that carry an actual output.
pub fn cmd_diagnose(dir: &Path) -> Result<DiagnoseOutcome, CliError> {
    let path = dir.join(art::PREDICTIONS);
    require(&path)?;
    let (header, rows) = art::read_table(&path)?;
    let inputs: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with('x')).collect();
    let (mm, mv) = (column(&header, "mixture_mean")?, column(&header, "mixture_var")?);
    let (pm, pv) = (column(&header, "map_mean")?, column(&header, "map_var")?);
    let act = column(&header, "actual")?;
    let known: Vec<&Vec<Option<f64>>> = rows.iter().filter(|r| r[act].is_some()).collect();
    if known.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no actual outputs to diagnose",
            path.display()
        )));
    }
    let get = |c: usize| -> Result<Vec<f64>, CliError> {
        known
            .iter()
            .map(|r| r[c].ok_or_else(|| CliError::Input(format!("{}: empty '{}' cell", path.display(), header[c]))))
            .collect()
    };
    let actual = get(act)?;
    let mixture = ResidualReport::from_moments(&get(mm)?, &get(mv)?, &actual)?;
    let map = ResidualReport::from_moments(&get(pm)?, &get(pv)?, &actual)?;

    let within = |r: Option<f64>| {
        r.map(|v| u8::from(v.abs() <= ResidualReport::BAND).to_string())
            .unwrap_or_default()
    };
    let header_out: Vec<String> = inputs
        .iter()
        .map(|&i| header[i].clone())
        .chain(
            [
                "actual",
                "mixture_residual",
                "map_residual",
                "mixture_within",
                "map_within",
            ]
            .map(String::from),
        )
        .collect();
    art::write_lines(
        &dir.join(art::RESIDUALS),
        &header_out,
        known.iter().enumerate().map(|(k, r)| {
            inputs
                .iter()
                .map(|&i| cell(r[i]))
                .chain([
                    num(actual[k]),
                    cell(mixture.residuals[k]),
                    cell(map.residuals[k]),
                    within(mixture.residuals[k]),
                    within(map.residuals[k]),
                ])
                .collect()
        }),
    )?;

    let mut report = format!("rows {}\n", known.len());
    for (name, r) in [("mixture", &mixture), ("map", &map)] {
        report += &format!(
            "{name}: {} residuals, {} within +-{}, fraction {:.4}, {} zero-variance\n",
            r.computed,
            r.within_band,
            ResidualReport::BAND,
            r.fraction_within(),
            r.residuals.len() - r.computed
        );
    }
    fs::write(dir.join(art::REPORT), &report).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(DiagnoseOutcome { mixture, map, report })
}

pub struct DemoOutcome {
    pub fit: FitOutcome,
    pub predict: PredictOutcome,
    pub diagnose: DiagnoseOutcome,
}

/// Fit, predict on a held-out LHS and diagnose a built-in problem.
pub fn cmd_demo(builtin: Builtin, mut cfg: RunConfig) -> Result<DemoOutcome, CliError> {
    cfg.dataset = DatasetRef::Builtin(builtin);
    let fit = cmd_fit(&cfg)?;
    let predict = cmd_predict(&fit.out, None, None)?;
    let diagnose = cmd_diagnose(&fit.out)?;
    Ok(DemoOutcome { fit, predict, diagnose })
}
