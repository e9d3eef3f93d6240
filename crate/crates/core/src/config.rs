//! Run configuration: flat `key = value` text with dotted section prefixes.
//!
//! ```text
//! # comment
//! problem.q = 1.5
//! grid.M = 400
//! ```
//!
//! Every key is optional; omitted keys keep their defaults. Unknown keys are
//! rejected so that typos do not silently fall back to defaults.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Boundary, RadialGrid};
use crate::problem::{CoefficientKind, ProblemSpec};
use crate::solve::SolveOptions;
use crate::transform::TransformEvaluator;

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_ENV: &str = "DUALVAR_OUTPUT";

#[derive(Debug, Clone, Serialize)]
pub struct GridConfig {
    pub radius: f64,
    pub m: usize,
    pub stretch: f64,
    pub boundary: Boundary,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { radius: 20.0, m: 400, stretch: 1.01, boundary: Boundary::Exterior }
    }
}

impl GridConfig {
    pub fn build(&self, dim: usize) -> Result<RadialGrid> {
        RadialGrid::new(self.radius, self.m, dim, self.stretch, self.boundary)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TransformConfig {
    pub newton_tol: f64,
    pub max_newton_iters: usize,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self { newton_tol: 1e-12, max_newton_iters: 100 }
    }
}

impl TransformConfig {
    pub fn build(&self) -> Result<TransformEvaluator> {
        TransformEvaluator::new(self.newton_tol, self.max_newton_iters)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GeometryConfig {
    pub n_max: usize,
    pub samples: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { n_max: 4, samples: 1000 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyConfig {
    pub transform_samples: usize,
    pub t_range: f64,
    pub convexity_range: f64,
    pub convexity_step: f64,
    pub convexity_pairs: usize,
    pub energy_samples: usize,
    pub rays: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            transform_samples: 10_000,
            t_range: 100.0,
            convexity_range: 10.0,
            convexity_step: 1e-3,
            convexity_pairs: 1000,
            energy_samples: 100,
            rays: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub grid: GridConfig,
    pub solver: SolveOptions,
    pub transform: TransformConfig,
    pub geometry: GeometryConfig,
    pub samples_per_level: usize,
    pub verify: VerifyConfig,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemSpec::default(),
            grid: GridConfig::default(),
            solver: SolveOptions::default(),
            transform: TransformConfig::default(),
            geometry: GeometryConfig::default(),
            samples_per_level: 4,
            verify: VerifyConfig::default(),
            output_dir: PathBuf::from("output"),
            seed: 20240229,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("bad value {value:?} for {key}: {e}"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("bad value {value:?} for {key}: expected true or false")),
    }
}

impl RunConfig {
    /// Parse configuration text. `path` is only used in error messages.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config { path: path.to_path_buf(), message: format!("line {}: {message}", lineno + 1) };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
        }
        cfg.validate().map_err(|e| Error::Config { path: path.to_path_buf(), message: e.to_string() })?;
        Ok(cfg)
    }

    /// Read and parse a configuration file, then apply the output override.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: format!("cannot read configuration file {}: {e}", path.display()),
        })?;
        let mut cfg = Self::parse(&text, path)?;
        if let Some(dir) = std::env::var_os(OUTPUT_ENV) {
            cfg.output_dir = PathBuf::from(dir);
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        match key {
            "problem.N" => self.problem.dim = parse_value(key, value)?,
            "problem.q" => self.problem.q = parse_value(key, value)?,
            "problem.s" => self.problem.s = parse_value(key, value)?,
            "problem.k.kind" | "problem.h.kind" | "problem.k.amplitude" | "problem.h.amplitude" | "problem.k.decay"
            | "problem.h.decay" => {
                let which = &key[8..9];
                let c = if which == "k" { &mut self.problem.k } else { &mut self.problem.h };
                match &key[10..] {
                    "kind" => c.kind = parse_value::<CoefficientKind>(key, value)?,
                    "amplitude" => c.amplitude = parse_value(key, value)?,
                    _ => c.decay = parse_value(key, value)?,
                }
            }
            "grid.R" => self.grid.radius = parse_value(key, value)?,
            "grid.M" => self.grid.m = parse_value(key, value)?,
            "grid.stretch" => self.grid.stretch = parse_value(key, value)?,
            "grid.boundary" => self.grid.boundary = parse_value(key, value)?,
            "solver.grad_tol" => self.solver.grad_tol = parse_value(key, value)?,
            "solver.max_iters" => self.solver.max_iters = parse_value(key, value)?,
            "solver.armijo_c" => self.solver.armijo_c = parse_value(key, value)?,
            "solver.backtrack_ratio" => self.solver.backtrack_ratio = parse_value(key, value)?,
            "solver.memory" => self.solver.memory = parse_value(key, value)?,
            "solver.sobolev" => self.solver.sobolev = parse_bool(key, value)?,
            "solver.enforce_nonnegative" => self.solver.enforce_nonnegative = parse_bool(key, value)?,
            "transform.newton_tol" => self.transform.newton_tol = parse_value(key, value)?,
            "transform.max_newton_iters" => self.transform.max_newton_iters = parse_value(key, value)?,
            "geometry.n_max" => self.geometry.n_max = parse_value(key, value)?,
            "geometry.samples" => self.geometry.samples = parse_value(key, value)?,
            "multi.samples_per_level" => self.samples_per_level = parse_value(key, value)?,
            "verify.transform_samples" => self.verify.transform_samples = parse_value(key, value)?,
            "verify.t_range" => self.verify.t_range = parse_value(key, value)?,
            "verify.convexity_range" => self.verify.convexity_range = parse_value(key, value)?,
            "verify.convexity_step" => self.verify.convexity_step = parse_value(key, value)?,
            "verify.convexity_pairs" => self.verify.convexity_pairs = parse_value(key, value)?,
            "verify.energy_samples" => self.verify.energy_samples = parse_value(key, value)?,
            "verify.rays" => self.verify.rays = parse_value(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "seed" => self.seed = parse_value(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        self.grid.build(self.problem.dim)?;
        self.solver.validate()?;
        self.transform.build()?;
        if self.geometry.n_max == 0 || self.geometry.samples == 0 {
            return Err(Error::InvalidParameter("geometry.n_max and geometry.samples must be positive".into()));
        }
        Ok(())
    }
}
