//! Run configuration: flat `key = value` text with `#` comments.
//!
//! Every key can also be given on the command line; later assignments win.
//! Per-iteration lists (`mu = 8, 16`) apply their i-th entry to iteration i
//! and repeat the last entry afterwards.

use std::path::{Path, PathBuf};

use crate::error::{LabError, Result};
use crate::perturbation::{check_regime, Mode};

#[derive(Clone, Debug, PartialEq)]
pub enum Scenario {
    /// `ρ̃ = χ(t)ρ₀(x)`, the smooth plateau-in-time profile.
    Preset,
    /// `ρ̃ = sin(2πt)ρ₀(x)`.
    Wave,
    /// `ρ̃` read from a one-component CIFIELD dump.
    Target(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub p: f64,
    pub q: f64,
    pub dim: usize,
    pub n_space: usize,
    pub n_time: usize,
    pub mode: Mode,
    pub lambda: Vec<f64>,
    pub mu: Vec<usize>,
    pub kappa: Vec<usize>,
    pub sigma: Vec<usize>,
    /// Target `L¹_t L^p` deviation from `ρ̃`.
    pub epsilon: f64,
    pub iterations: usize,
    pub scenario: Scenario,
    pub out_dir: PathBuf,
    pub dump_fields: bool,
    /// Largest accepted relative residual of an emitted triple.
    pub tolerance: f64,
    /// Double `μ = κ` until `‖R_total‖ ≤ δ` or a cap is hit.
    pub auto_escalate: bool,
    pub max_n_space: usize,
    pub max_n_time: usize,
    pub memory_gb: f64,
    pub diagnostics: bool,
    /// Overrides the calibrated constant `M̂`.
    pub amplitude_constant: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            p: 2.0,
            q: 1.5,
            dim: 3,
            n_space: 64,
            n_time: 32,
            mode: Mode::Desk,
            lambda: vec![8.0],
            mu: vec![8],
            kappa: vec![4],
            sigma: vec![2],
            epsilon: 0.5,
            iterations: 1,
            scenario: Scenario::Preset,
            out_dir: PathBuf::from("cilab-out"),
            dump_fields: false,
            tolerance: 1e-5,
            auto_escalate: false,
            max_n_space: 64,
            max_n_time: 32,
            memory_gb: 4.0,
            diagnostics: false,
            amplitude_constant: None,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| LabError::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    let items = v.split(',').map(|s| parse_num(key, s)).collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        return Err(LabError::Config(format!("{key}: empty list")));
    }
    Ok(items)
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(LabError::Config(format!("{key}: expected a boolean, got {other:?}"))),
    }
}

/// The `i`-th entry, or the last one.
fn pick<T: Copy>(list: &[T], i: usize) -> T {
    list[i.min(list.len() - 1)]
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim().replace('-', "_").as_str() {
            "p" => self.p = parse_num(key, v)?,
            "q" => self.q = parse_num(key, v)?,
            "dim" | "d" => self.dim = parse_num(key, v)?,
            "grid" | "n_space" => self.n_space = parse_num(key, v)?,
            "time_grid" | "n_time" => self.n_time = parse_num(key, v)?,
            "mode" => self.mode = v.parse()?,
            "lambda" => self.lambda = parse_list(key, v)?,
            "mu" => self.mu = parse_list(key, v)?,
            "kappa" => self.kappa = parse_list(key, v)?,
            "sigma" => self.sigma = parse_list(key, v)?,
            "epsilon" => self.epsilon = parse_num(key, v)?,
            "iterations" => self.iterations = parse_num(key, v)?,
            "scenario" => {
                self.scenario = match v {
                    "preset" => Scenario::Preset,
                    "wave" => Scenario::Wave,
                    other => match other.strip_prefix("target:") {
                        Some(path) => Scenario::Target(PathBuf::from(path)),
                        None => return Err(LabError::Config(format!("scenario: unknown value {other:?}"))),
                    },
                }
            }
            "out" | "out_dir" => self.out_dir = PathBuf::from(v),
            "dump_fields" => self.dump_fields = parse_bool(key, v)?,
            "tolerance" => self.tolerance = parse_num(key, v)?,
            "auto_escalate" => self.auto_escalate = parse_bool(key, v)?,
            "max_n_space" => self.max_n_space = parse_num(key, v)?,
            "max_n_time" => self.max_n_time = parse_num(key, v)?,
            "memory_gb" => self.memory_gb = parse_num(key, v)?,
            "diagnostics" => self.diagnostics = parse_bool(key, v)?,
            "amplitude_constant" => self.amplitude_constant = Some(parse_num(key, v)?),
            other => return Err(LabError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| LabError::Config(format!("line {}: expected key = value", no + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        check_regime(self.p, self.q)?;
        if self.dim < 3 {
            return Err(LabError::Config(format!("dim = {} must be at least 3", self.dim)));
        }
        if !(self.epsilon > 0.0) {
            return Err(LabError::Config("epsilon must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(LabError::Config("tolerance must be positive".into()));
        }
        if self.max_n_space < self.n_space || self.max_n_time < self.n_time {
            return Err(LabError::Config("grid caps must be at least the starting grid".into()));
        }
        Ok(())
    }

    pub fn lambda_at(&self, i: usize) -> f64 {
        pick(&self.lambda, i)
    }

    pub fn overrides_at(&self, i: usize) -> crate::perturbation::DeskOverrides {
        crate::perturbation::DeskOverrides {
            mu: Some(pick(&self.mu, i)),
            kappa: Some(pick(&self.kappa, i)),
            sigma: Some(pick(&self.sigma, i)),
        }
    }

    /// The configuration as `key = value` lines, readable by [`RunConfig::parse`].
    pub fn to_text(&self) -> String {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        s += &format!("p = {}\nq = {}\ndim = {}\n", self.p, self.q, self.dim);
        s += &format!("n_space = {}\nn_time = {}\n", self.n_space, self.n_time);
        s += &format!(
            "mode = {}\n",
            if self.mode == Mode::Desk { "desk" } else { "validated" }
        );
        s += &format!(
            "lambda = {}\n",
            self.lambda.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
        );
        s += &format!(
            "mu = {}\nkappa = {}\nsigma = {}\n",
            list(&self.mu),
            list(&self.kappa),
            list(&self.sigma)
        );
        s += &format!("epsilon = {}\niterations = {}\n", self.epsilon, self.iterations);
        s += &match &self.scenario {
            Scenario::Preset => "scenario = preset\n".to_string(),
            Scenario::Wave => "scenario = wave\n".to_string(),
            Scenario::Target(p) => format!("scenario = target:{}\n", p.display()),
        };
        s += &format!(
            "out_dir = {}\ndump_fields = {}\n",
            self.out_dir.display(),
            self.dump_fields
        );
        s += &format!(
            "tolerance = {}\nauto_escalate = {}\n",
            self.tolerance, self.auto_escalate
        );
        s += &format!("max_n_space = {}\nmax_n_time = {}\n", self.max_n_space, self.max_n_time);
        s += &format!("memory_gb = {}\ndiagnostics = {}\n", self.memory_gb, self.diagnostics);
        if let Some(m) = self.amplitude_constant {
            s += &format!("amplitude_constant = {m}\n");
        }
        s
    }
}
