//! JSON run summary and plot-ready CSV files.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::LevelCertificate;
use crate::grid::{Boundary, RadialGrid};
use crate::problem::ProblemSpec;
use crate::solve::SolveReport;
use crate::verify::{PropertyResult, SuiteReport};

#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    pub radius: f64,
    pub nodes: usize,
    pub dim: usize,
    pub stretch: f64,
    pub boundary: Boundary,
}

impl From<&RadialGrid> for GridSummary {
    fn from(g: &RadialGrid) -> Self {
        Self { radius: g.radius(), nodes: g.len(), dim: g.dim(), stretch: g.stretch(), boundary: g.boundary() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionEntry {
    pub label: String,
    /// CSV file with columns `r,v,u`, relative to the output directory.
    pub csv: String,
    #[serde(flatten)]
    pub report: SolveReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub problem: ProblemSpec,
    pub grid: GridSummary,
    pub geometry_certificates: Vec<LevelCertificate>,
    pub solutions: Vec<SolutionEntry>,
    pub suites: Vec<SuiteReport>,
    pub passed: bool,
    /// `suite/property` of every failed check.
    pub failures: Vec<String>,
}

impl Report {
    pub fn new(problem: &ProblemSpec, grid: &RadialGrid) -> Self {
        Self {
            problem: problem.clone(),
            grid: grid.into(),
            geometry_certificates: Vec::new(),
            solutions: Vec::new(),
            suites: Vec::new(),
            passed: true,
            failures: Vec::new(),
        }
    }

    pub fn push_suite(&mut self, suite: SuiteReport) {
        for p in suite.properties.iter().filter(|p| !p.passed) {
            self.failures.push(format!("{}/{}", suite.suite, p.property));
        }
        self.passed = self.failures.is_empty();
        self.suites.push(suite);
    }

    /// Record an error raised by a check as a failed property of `suite`.
    pub fn push_error(&mut self, suite: &str, err: &Error) {
        let (property, margin, witness) = match err {
            Error::PropertyViolation { property, margin, witness, .. } => (property.clone(), *margin, witness.clone()),
            other => (other.to_string(), f64::NEG_INFINITY, Vec::new()),
        };
        self.push_suite(SuiteReport {
            suite: suite.to_string(),
            samples: 0,
            properties: vec![PropertyResult { property, worst_margin: margin, tolerance: 0.0, witness, passed: false }],
        });
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let io = |source| Error::Io { path: path.to_path_buf(), source };
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out).map_err(io)?;
        out.flush().map_err(io)
    }
}

/// Pass/fail property with margin `bound − value` for `value <= bound` checks.
pub fn at_most(property: &str, value: f64, bound: f64) -> PropertyResult {
    PropertyResult {
        property: property.to_string(),
        worst_margin: bound - value,
        tolerance: 0.0,
        witness: vec![value],
        passed: value <= bound,
    }
}

/// Strict `value < bound`.
pub fn below(property: &str, value: f64, bound: f64) -> PropertyResult {
    PropertyResult { passed: value < bound, ..at_most(property, value, bound) }
}

/// `r,v,u` for one solution.
pub fn write_solution_csv(grid: &RadialGrid, report: &SolveReport, path: &Path) -> Result<()> {
    grid.write_csv(path, &[("v", &report.v_star), ("u", &report.u_star)])
}

/// `n,vartheta,A,B,rho,theta,max_phi_sampled`
pub fn write_geometry_csv(certs: &[LevelCertificate], path: &Path) -> Result<()> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(out, "n,vartheta,A,B,rho,theta,max_phi_sampled").map_err(io)?;
    for c in certs {
        let sampled = c.max_phi_sampled.map(|x| x.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{},{},{},{}", c.level, c.vartheta, c.a, c.b, c.rho, c.theta, sampled).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.to_path_buf(), source })?;
    Ok(dir.to_path_buf())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn geometry_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        let cert = LevelCertificate {
            level: 2,
            vartheta: 1.5,
            a: 0.25,
            b: 3.0,
            delta: 0.5,
            rho: 0.125,
            theta: -0.01,
            max_phi_sampled: Some(-0.02),
            sphere_samples: Some(10),
        };
        write_geometry_csv(&[cert], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "n,vartheta,A,B,rho,theta,max_phi_sampled\n2,1.5,0.25,3,0.125,-0.01,-0.02\n");
    }

    #[test]
    fn failures_are_named() {
        let grid = make_grid(5.0, 20, 3, 1.0).unwrap();
        let mut report = Report::new(&ProblemSpec::default(), &grid);
        report.push_suite(SuiteReport { suite: "s".into(), samples: 1, properties: vec![at_most("x", 1.0, 2.0)] });
        assert!(report.passed);
        report.push_suite(SuiteReport { suite: "s".into(), samples: 1, properties: vec![at_most("y", 3.0, 2.0)] });
        assert!(!report.passed);
        assert_eq!(report.failures, vec!["s/y".to_string()]);
        report.push_error("geom", &Error::GeometryViolation { level: 1, phi: 0.1 });
        assert_eq!(report.failures.len(), 2);
    }
}
