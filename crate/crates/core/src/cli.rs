//! Subcommand drivers behind the `dualvar` binary.

use std::path::Path;

use log::info;

use crate::config::RunConfig;
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::geometry;
use crate::report::{at_most, below, ensure_dir, write_geometry_csv, write_solution_csv, Report, SolutionEntry};
use crate::rng::substream;
use crate::solve::{self, ResidualSummary, SolveReport};
use crate::verify::{self, PropertyResult, SuiteReport};

/// Weak residual bound for computed solutions.
pub const WEAK_RESIDUAL_TOL: f64 = 1e-6;
/// Bump test functions used for the weak residual.
pub const TEST_FUNCTIONS: usize = 16;
/// Ray parameters for the coercivity check.
pub const RAY_SCHEDULE: [f64; 5] = [1.0, 10.0, 1e2, 1e3, 1e4];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    VerifyTransform,
    CheckGeometry,
    GroundState,
    MultiSolutions,
    CheckAll,
}

impl Command {
    fn includes(self, other: Command) -> bool {
        self == other || self == Command::CheckAll
    }
}

// Independent random streams per stage, all derived from the configured seed.
const STREAM_TRANSFORM: u64 = 1;
const STREAM_CONVEXITY: u64 = 2;
const STREAM_ENERGY: u64 = 3;
const STREAM_GEOMETRY: u64 = 0x100;
const STREAM_RAYS: u64 = 4;

/// Run one subcommand and write `report.json` plus CSV artifacts to the output
/// directory. Check failures are recorded in the report; only configuration
/// and I/O problems are returned as errors.
pub fn run(command: Command, cfg: &RunConfig) -> Result<Report> {
    let out = ensure_dir(&cfg.output_dir)?;
    let transform = cfg.transform.build()?;
    let grid = cfg.grid.build(cfg.problem.dim)?;
    let model = EnergyModel::new(cfg.problem.clone(), grid, transform)?;
    let mut report = Report::new(&cfg.problem, model.grid());

    if command.includes(Command::VerifyTransform) {
        verify_transform(cfg, &model, &mut report);
    }
    if command.includes(Command::CheckGeometry) {
        check_geometry(cfg, &model, &mut report, &out)?;
    }
    if command.includes(Command::GroundState) {
        ground_state(cfg, &model, &mut report, &out)?;
    }
    if command.includes(Command::MultiSolutions) {
        multi_solutions(cfg, &model, &mut report, &out)?;
    }
    report.write_json(&out.join("report.json"))?;
    Ok(report)
}

fn record(report: &mut Report, suite: &str, result: Result<SuiteReport>) {
    match result {
        Ok(s) => report.push_suite(s),
        Err(e) => report.push_error(suite, &e),
    }
}

fn verify_transform(cfg: &RunConfig, model: &EnergyModel, report: &mut Report) {
    let te = model.transform();
    let v = &cfg.verify;
    let mut rng = substream(cfg.seed, STREAM_TRANSFORM);
    info!("transform suite on {} samples", v.transform_samples);
    record(report, "transform", verify::run_transform_properties(te, v.transform_samples, v.t_range, &mut rng));

    let mut exponents = vec![2.5, 4.0, cfg.problem.s];
    exponents.dedup();
    for s in exponents {
        let mut rng = substream(cfg.seed, STREAM_CONVEXITY);
        let result = verify::check_eta_convexity(te, s, v.convexity_range, v.convexity_step, v.convexity_pairs, &mut rng);
        record(report, &format!("convexity s={s}"), result);
    }

    let mut rng = substream(cfg.seed, STREAM_ENERGY);
    record(report, "energy identity", verify::check_energy_identity(model, v.energy_samples, &mut rng));
}

fn check_geometry(cfg: &RunConfig, model: &EnergyModel, report: &mut Report, out: &Path) -> Result<()> {
    let mut properties = Vec::new();
    for level in 1..=cfg.geometry.n_max {
        info!("geometry certificate for n = {level}");
        let mut rng = substream(cfg.seed, STREAM_GEOMETRY + level as u64);
        match geometry::certify_and_verify(model, level, cfg.geometry.samples, &mut rng) {
            Ok((cert, sphere)) => {
                let name = |what: &str| format!("n={level} {what}");
                properties.push(below(&name("A > 0"), -cert.a, 0.0));
                properties.push(below(&name("theta < 0"), cert.theta, 0.0));
                properties.push(at_most(&name("vartheta rho <= delta"), cert.vartheta * cert.rho, cert.delta));
                properties.push(below(&name("sampled phi < 0"), sphere.max_phi, 0.0));
                properties.push(at_most(&name("max sampled phi <= theta + slack"), sphere.max_phi, cert.theta + geometry::SPHERE_SLACK));
                properties.push(at_most(&name("phi below the chain bound"), sphere.chain_excess, 1e-12));
                properties.push(at_most(&name("sup |v| <= delta"), sphere.sup_over_delta, 1.0));
                report.geometry_certificates.push(cert);
            }
            Err(e) => report.push_error(&format!("geometry n={level}"), &e),
        }
    }
    report.push_suite(SuiteReport { suite: "geometry".into(), samples: cfg.geometry.samples, properties });
    write_geometry_csv(&report.geometry_certificates, &out.join("geometry.csv"))?;

    let mut rng = substream(cfg.seed, STREAM_RAYS);
    let embedding = geometry::embedding_constant(model, 200, &mut rng);
    let directions = geometry::unit_directions(model, cfg.verify.rays, &mut rng);
    match geometry::coercivity_ray_check(model, &directions, &RAY_SCHEDULE, embedding) {
        Ok(rays) => {
            let worst_last = rays.rays.iter().filter_map(|r| r.phi.last().copied()).fold(f64::INFINITY, f64::min);
            report.push_suite(SuiteReport {
                suite: "coercivity".into(),
                samples: rays.rays.len(),
                properties: vec![below("phi(1e4 w) > 0", -worst_last, 0.0)],
            });
        }
        Err(e) => report.push_error("coercivity", &e),
    }
    Ok(())
}

/// Residual and sign checks shared by every computed solution.
fn solution_checks(model: &EnergyModel, label: &str, sol: &mut SolveReport, grad_tol: f64) -> SuiteReport {
    let mut properties = vec![
        at_most("converged: grad_norm <= grad_tol", sol.grad_norm, grad_tol),
        below("phi_value < 0", sol.phi_value, 0.0),
    ];
    let tests = verify::bump_test_functions(model, TEST_FUNCTIONS, model.grid().radius() * 0.5);
    match (verify::check_weak_residual(model, &sol.v_star, &tests), verify::check_strong_residual(model, sol)) {
        (Ok(weak), Ok(strong)) => {
            properties.push(at_most("weak residual", weak.weak_residual, WEAK_RESIDUAL_TOL));
            properties.push(at_most("weak residual within gradient bound", weak.weak_residual, weak.bound(grad_tol)));
            sol.residuals = Some(ResidualSummary { weak: weak.weak_residual, strong });
        }
        (Err(e), _) | (_, Err(e)) => properties.push(failed(&e)),
    }
    match verify::check_sign_critical(model, sol) {
        Ok(sign) if sign.note.is_some() => {}
        Ok(sign) => properties.push(at_most("sign law: phi_value <= 1e-8", sign.phi_value, verify::SIGN_TOL)),
        Err(e) => properties.push(failed(&e)),
    }
    SuiteReport { suite: label.to_string(), samples: 1, properties }
}

fn failed(err: &Error) -> PropertyResult {
    PropertyResult { property: err.to_string(), worst_margin: f64::NEG_INFINITY, tolerance: 0.0, witness: Vec::new(), passed: false }
}

fn ground_state(cfg: &RunConfig, model: &EnergyModel, report: &mut Report, out: &Path) -> Result<()> {
    info!("ground state on {} nodes", model.grid().len());
    let mut sol = match solve::ground_state(model, &cfg.solver) {
        Ok(sol) => sol,
        Err(e) => {
            report.push_error("ground state", &e);
            return Ok(());
        }
    };
    let mut suite = solution_checks(model, "ground state", &mut sol, cfg.solver.grad_tol);
    let negative = sol.v_star.iter().chain(sol.u_star.iter()).fold(0.0_f64, |m, &x| m.min(x));
    suite.properties.push(at_most("u_star >= 0", -negative, 0.0));
    report.push_suite(suite);

    let grid = model.grid();
    grid.write_csv(&out.join("v.csv"), &[("v", &sol.v_star)])?;
    grid.write_csv(&out.join("u.csv"), &[("u", &sol.u_star)])?;
    write_solution_csv(grid, &sol, &out.join("ground_state.csv"))?;
    report.solutions.push(SolutionEntry { label: "ground_state".into(), csv: "ground_state.csv".into(), report: sol });
    Ok(())
}

fn multi_solutions(cfg: &RunConfig, model: &EnergyModel, report: &mut Report, out: &Path) -> Result<()> {
    info!("multi-start with {} starts per level up to n = {}", cfg.samples_per_level, cfg.geometry.n_max);
    let outcome = match solve::multi_start(model, cfg.geometry.n_max, cfg.samples_per_level, &cfg.solver, cfg.seed) {
        Ok(o) => o,
        Err(e) => {
            report.push_error("multi-start", &e);
            return Ok(());
        }
    };
    info!("{} of {} starts converged to {} distinct solutions", outcome.converged, outcome.starts, outcome.solutions.len());
    for mut sol in outcome.solutions {
        let id = sol.distinct_id.unwrap_or(0);
        let label = format!("solution_{id}");
        let suite = solution_checks(model, &format!("multi-start {label}"), &mut sol, cfg.solver.grad_tol);
        report.push_suite(suite);
        let csv = format!("{label}.csv");
        write_solution_csv(model.grid(), &sol, &out.join(&csv))?;
        report.solutions.push(SolutionEntry { label, csv, report: sol });
    }
    Ok(())
}
