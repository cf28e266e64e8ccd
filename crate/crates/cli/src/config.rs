//! `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use helson_core::forge::chi::fmt17;
use helson_core::forge::{Budget, ForgeConfig};

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub forge: ForgeConfig,
    pub spec: Option<PathBuf>,
    pub out: PathBuf,
    /// Worker threads for eval and probe; 0 lets the pool decide.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            forge: ForgeConfig::default(),
            spec: None,
            out: PathBuf::from("run"),
            threads: 0,
        }
    }
}

pub const THREADS_ENV: &str = "HELSON_THREADS";

/// Accepts plain integers and exact float forms such as `1e6`.
pub fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 1.8e19 => Ok(v as u64),
        _ => Err(format!("expected a non-negative integer, got '{s}'")),
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|_| format!("expected a number, got '{s}'"))
}

impl RunConfig {
    /// Parse the text form; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Validation(format!("config line {}: expected key = value", i + 1)))?;
            cfg.set(key.trim(), value.trim(), base)
                .map_err(|m| CliError::Validation(format!("config line {}: {m}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), String> {
        let f = &mut self.forge;
        match key {
            "theta" => f.theta = parse_f64(value)?,
            "x_max" => f.x_max = parse_count(value)?,
            "eps" => f.eps = parse_f64(value)?,
            "budget" => f.budget = value.parse::<Budget>()?,
            "bootstrap_min_x" => f.bootstrap_min_x = parse_f64(value)?,
            "stage_limit" => f.stage_limit = parse_count(value)? as usize,
            "stall_limit" => f.stall_limit = parse_count(value)? as usize,
            "seed" => f.seed = parse_count(value)?,
            "spec" => self.spec = Some(base.join(value)),
            "out" => self.out = base.join(value),
            "threads" => self.threads = parse_count(value)? as usize,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.forge.validate().map_err(|e| CliError::Validation(e.to_string()))
    }

    /// Text form with paths written as given.
    pub fn to_text(&self, spec: &str, out: &str) -> String {
        let f = &self.forge;
        let mut s = String::new();
        let _ = writeln!(s, "theta = {}", fmt17(f.theta));
        let _ = writeln!(s, "x_max = {}", f.x_max);
        let _ = writeln!(s, "spec = {spec}");
        let _ = writeln!(s, "eps = {}", fmt17(f.eps));
        let _ = writeln!(s, "budget = {}", f.budget);
        let _ = writeln!(s, "bootstrap_min_x = {}", fmt17(f.bootstrap_min_x));
        let _ = writeln!(s, "stage_limit = {}", f.stage_limit);
        let _ = writeln!(s, "stall_limit = {}", f.stall_limit);
        let _ = writeln!(s, "seed = {}", f.seed);
        let _ = writeln!(s, "out = {out}");
        let _ = writeln!(s, "threads = {}", self.threads);
        s
    }

    /// Thread count after the environment override.
    pub fn effective_threads(&self) -> Result<usize, CliError> {
        match std::env::var(THREADS_ENV) {
            Ok(v) => parse_count(v.trim())
                .map(|n| n as usize)
                .map_err(|m| CliError::Validation(format!("{THREADS_ENV}: {m}"))),
            Err(_) => Ok(self.threads),
        }
    }
}
