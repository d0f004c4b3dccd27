//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use aims_gp::aims::{Mode, SamplerConfig};
use aims_gp::{DatasetRef, Denominator, PriorSpec, Weighting};

use crate::CliError;

const KEYS: &[&str] = &[
    "dataset",
    "seed",
    "samples",
    "mode",
    "ess_gamma",
    "spread_decay",
    "initial_spread",
    "stop_ratio",
    "tau_floor",
    "max_levels",
    "prior",
    "weighting",
    "denominator",
    "rescale",
    "test_size",
    "nugget_in_variance",
    "out",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetRef,
    pub sampler: SamplerConfig,
    pub prior: PriorSpec,
    pub weighting: Weighting,
    pub denominator: Denominator,
    /// Min-max rescale file inputs onto the unit cube before fitting.
    pub rescale: bool,
    /// Size of the held-out LHS drawn for built-in datasets.
    pub test_size: usize,
    pub nugget_in_variance: bool,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetRef::Builtin(aims_gp::Builtin::Branin),
            sampler: SamplerConfig::default(),
            prior: PriorSpec::Flat,
            weighting: Weighting::Uniform,
            denominator: Denominator::Verbatim,
            rescale: false,
            test_size: 100,
            nugget_in_variance: true,
            out: PathBuf::from("aims-run"),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Input(format!("invalid value '{value}' for '{key}': {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Input(format!(
            "invalid value '{value}' for '{key}': expected true or false"
        ))),
    }
}

impl RunConfig {
    /// Sets one key; unknown keys are an error.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let s = &mut self.sampler;
        match key {
            "dataset" => self.dataset = parse_value(key, value)?,
            "seed" => s.master_seed = parse_value(key, value)?,
            "samples" => s.sample_count = parse_value(key, value)?,
            "mode" => s.mode = parse_value::<Mode>(key, value)?,
            "ess_gamma" => s.ess_gamma = parse_value(key, value)?,
            "spread_decay" => s.spread_decay = parse_value(key, value)?,
            "initial_spread" => s.initial_spread = parse_value(key, value)?,
            "stop_ratio" => s.stop_ratio = parse_value(key, value)?,
            "tau_floor" => s.tau_floor = parse_value(key, value)?,
            "max_levels" => s.max_levels = parse_value(key, value)?,
            "prior" => self.prior = parse_value(key, value)?,
            "weighting" => self.weighting = parse_value(key, value)?,
            "denominator" => self.denominator = parse_value(key, value)?,
            "rescale" => self.rescale = parse_bool(key, value)?,
            "test_size" => self.test_size = parse_value(key, value)?,
            "nugget_in_variance" => self.nugget_in_variance = parse_bool(key, value)?,
            "out" => self.out = PathBuf::from(value),
            other => return Err(CliError::Input(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Input(format!("config line {}: expected key = value", i + 1)))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(CliError::Input(format!("config line {}: duplicate key '{key}'", i + 1)));
            }
            seen.push(key);
            cfg.set(key, value.trim())
                .map_err(|e| CliError::Input(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.sampler.validate().map_err(|e| CliError::Input(e.to_string()))?;
        if self.test_size == 0 {
            return Err(CliError::Input("test_size must be positive".into()));
        }
        Ok(())
    }

    /// Canonical text form; `parse(to_text())` gives back the same config.
    pub fn to_text(&self) -> String {
        let s = &self.sampler;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            debug_assert!(KEYS.contains(&k));
            let _ = writeln!(out, "{k} = {v}");
        };
        put("dataset", self.dataset.to_string());
        put("seed", s.master_seed.to_string());
        put("samples", s.sample_count.to_string());
        put("mode", s.mode.to_string());
        put("ess_gamma", format!("{:?}", s.ess_gamma));
        put("spread_decay", format!("{:?}", s.spread_decay));
        put("initial_spread", format!("{:?}", s.initial_spread));
        put("stop_ratio", format!("{:?}", s.stop_ratio));
        put("tau_floor", format!("{:?}", s.tau_floor));
        put("max_levels", s.max_levels.to_string());
        put("prior", self.prior.to_string());
        put("weighting", self.weighting.to_string());
        put("denominator", self.denominator.to_string());
        put("rescale", self.rescale.to_string());
        put("test_size", self.test_size.to_string());
        put("nugget_in_variance", self.nugget_in_variance.to_string());
        put("out", self.out.display().to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.set("dataset", "file:some/runs.csv").unwrap();
        cfg.set("prior", "lognormal:0.5,2").unwrap();
        cfg.set("mode", "sample").unwrap();
        cfg.set("ess_gamma", "0.3").unwrap();
        cfg.set("rescale", "true").unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn every_key_is_settable() {
        let text = RunConfig::default().to_text();
        for k in KEYS {
            assert!(text.contains(&format!("{k} = ")), "{k}");
        }
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = RunConfig::parse("# demo\n\nseed = 7  # trailing\nsamples=50\n").unwrap();
        assert_eq!(cfg.sampler.master_seed, 7);
        assert_eq!(cfg.sampler.sample_count, 50);
    }

    #[test]
    fn rejects_unknown_duplicate_and_bad_values() {
        assert!(RunConfig::parse("temperature = 3\n").is_err());
        assert!(RunConfig::parse("seed = 1\nseed = 2\n").is_err());
        assert!(RunConfig::parse("samples = many\n").is_err());
        assert!(RunConfig::parse("just a line\n").is_err());
        let bad = RunConfig::parse("ess_gamma = 1.5\n").unwrap();
        assert!(bad.validate().is_err());
    }
}
