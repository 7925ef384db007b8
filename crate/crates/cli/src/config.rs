//! `key = value` run configuration.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use chemostat_core::pipeline::PipelineConfig;
use chemostat_core::{ChemostatParams, ParamValues};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const KEYS: [&str; 18] = [
    "s_in",
    "D_min",
    "D_max",
    "D_bar",
    "mu_max",
    "K",
    "Y",
    "T",
    "alpha",
    "L",
    "theta",
    "N",
    "M",
    "tol_state",
    "tol_kkt",
    "multistarts",
    "seed",
    "outdir",
];

/// Parameters that `sweep` may vary.
pub const SWEEP_PARAMS: [&str; 4] = ["alpha", "L", "theta", "T"];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub values: ParamValues,
    pub n: usize,
    pub m: usize,
    pub tol_state: f64,
    pub tol_kkt: f64,
    pub multistarts: usize,
    pub seed: u64,
    pub outdir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        RunConfig {
            values: ParamValues::baseline(),
            n: p.n,
            m: p.m,
            tol_state: p.tol_state,
            tol_kkt: p.tol_kkt,
            multistarts: p.multistarts,
            seed: p.seed,
            outdir: PathBuf::from("out"),
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn number<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, CliError> {
    raw.parse()
        .map_err(|_| bad(format!("{key}: cannot parse '{raw}'")))
}

impl RunConfig {
    /// Parse config text. Keys missing from the text keep their defaults
    /// (the baseline set); unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected 'key = value'", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(bad(format!("line {}: unknown key '{key}'", lineno + 1)));
            }
            if !seen.insert(key.to_string()) {
                return Err(bad(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, raw: &str) -> Result<(), CliError> {
        let v = &mut self.values;
        match key {
            "s_in" => v.s_in = number(key, raw)?,
            "D_min" => v.d_min = number(key, raw)?,
            "D_max" => v.d_max = number(key, raw)?,
            "D_bar" => v.d_bar = number(key, raw)?,
            "mu_max" => v.mu_max = number(key, raw)?,
            "K" => v.k = number(key, raw)?,
            "Y" => v.y = number(key, raw)?,
            "T" => v.period = number(key, raw)?,
            "alpha" => v.alpha = number(key, raw)?,
            "L" => v.memory = number(key, raw)?,
            "theta" => v.theta = number(key, raw)?,
            "N" => self.n = number(key, raw)?,
            "M" => self.m = number(key, raw)?,
            "tol_state" => self.tol_state = number(key, raw)?,
            "tol_kkt" => self.tol_kkt = number(key, raw)?,
            "multistarts" => self.multistarts = number(key, raw)?,
            "seed" => self.seed = number(key, raw)?,
            "outdir" => {
                if raw.is_empty() {
                    return Err(bad("outdir must not be empty"));
                }
                self.outdir = PathBuf::from(raw)
            }
            _ => return Err(bad(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params()?;
        if self.n < 8 || !self.n.is_multiple_of(2) {
            return Err(bad(format!(
                "N must be even and at least 8, got {}",
                self.n
            )));
        }
        if self.m < self.n || !self.m.is_multiple_of(2) {
            return Err(bad(format!(
                "M must be even and at least N = {}, got {}",
                self.n, self.m
            )));
        }
        for (name, t) in [("tol_state", self.tol_state), ("tol_kkt", self.tol_kkt)] {
            if !(t > 0.0 && t.is_finite()) {
                return Err(bad(format!("{name} must be positive, got {t}")));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ChemostatParams, CliError> {
        ChemostatParams::new(self.values).map_err(|e| bad(e.to_string()))
    }

    pub fn pipeline(&self, refine_switches: bool) -> PipelineConfig {
        PipelineConfig {
            n: self.n,
            m: self.m,
            tol_state: self.tol_state,
            tol_kkt: self.tol_kkt,
            multistarts: self.multistarts,
            seed: self.seed,
            refine_switches,
        }
    }

    /// Copy with one sweepable parameter replaced.
    pub fn with_param(&self, name: &str, value: f64) -> Result<Self, CliError> {
        if !SWEEP_PARAMS.contains(&name) {
            return Err(bad(format!(
                "cannot sweep '{name}'; expected one of {}",
                SWEEP_PARAMS.join(", ")
            )));
        }
        let mut c = self.clone();
        c.set(name, &value.to_string())?;
        c.validate()?;
        Ok(c)
    }

    /// Canonical text: every key in fixed order, shortest round-trip numbers.
    pub fn canonical(&self) -> String {
        let v = &self.values;
        let pairs: [(&str, String); 18] = [
            ("s_in", v.s_in.to_string()),
            ("D_min", v.d_min.to_string()),
            ("D_max", v.d_max.to_string()),
            ("D_bar", v.d_bar.to_string()),
            ("mu_max", v.mu_max.to_string()),
            ("K", v.k.to_string()),
            ("Y", v.y.to_string()),
            ("T", v.period.to_string()),
            ("alpha", v.alpha.to_string()),
            ("L", v.memory.to_string()),
            ("theta", v.theta.to_string()),
            ("N", self.n.to_string()),
            ("M", self.m.to_string()),
            ("tol_state", self.tol_state.to_string()),
            ("tol_kkt", self.tol_kkt.to_string()),
            ("multistarts", self.multistarts.to_string()),
            ("seed", self.seed.to_string()),
            ("outdir", self.outdir.display().to_string()),
        ];
        pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of [`canonical`](Self::canonical) without the `outdir` line,
    /// hex encoded. Where the files go does not change their content.
    pub fn hash(&self) -> String {
        let text: String = self
            .canonical()
            .lines()
            .filter(|l| !l.starts_with("outdir "))
            .map(|l| format!("{l}\n"))
            .collect();
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
