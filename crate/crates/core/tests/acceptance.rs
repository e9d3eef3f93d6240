//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use dualvar::geometry::{certify_and_verify, coercivity_ray_check, embedding_constant, unit_directions, SPHERE_SLACK};
use dualvar::rng::{random_field, substream};
use dualvar::solve::{ground_state, multi_start};
use dualvar::verify::{bump_test_functions, check_eta_convexity, check_weak_residual, run_transform_properties};
use dualvar::{make_grid, Coefficient, EnergyModel, ProblemSpec, SolveOptions, SolveReport, TransformEvaluator};

const SEED: u64 = 20240229;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn default_model(radius: f64, m: usize) -> EnergyModel {
    EnergyModel::new(ProblemSpec::default(), make_grid(radius, m, 3, 1.01).unwrap(), TransformEvaluator::default()).unwrap()
}

/// Every converged critical point produced during the run.
#[derive(Default)]
struct Critical(Vec<(String, f64)>);

impl Critical {
    fn record(&mut self, label: &str, r: &SolveReport) {
        if r.converged {
            self.0.push((label.to_string(), r.phi_value));
        }
    }
}

fn transform_suite() -> Outcome {
    let te = TransformEvaluator::default();
    let report = run_transform_properties(&te, 10_000, 100.0, &mut substream(SEED, 1)).unwrap();
    let failed: Vec<&str> = report.properties.iter().filter(|p| !p.passed).map(|p| p.property.as_str()).collect();
    let identity = report.property("(1 + 2f^2) f'^2 = 1").unwrap().worst_margin;
    let ode = report.property("f agrees with RK4").unwrap().worst_margin;
    let worst_ineq = report
        .properties
        .iter()
        .filter(|p| p.tolerance == 1e-10)
        .map(|p| p.worst_margin)
        .fold(f64::INFINITY, f64::min);
    // Direct recheck of the identity at the sample points, independent of the suite bookkeeping.
    let direct = (0..=1000)
        .map(|i| -100.0 + 0.2 * i as f64)
        .map(|t| {
            let f = te.eval_f(t).unwrap();
            let fp = te.eval_f_prime(t).unwrap();
            ((1.0 + 2.0 * f * f) * fp * fp - 1.0).abs()
        })
        .fold(0.0, f64::max);
    outcome(
        failed.is_empty() && report.samples == 10_000 && -identity <= 1e-12 && -ode <= 1e-8 && worst_ineq >= -1e-10 && direct <= 1e-12,
        format!(
            "{} properties, worst inequality margin {worst_ineq:.3e}, identity {:.3e}, RK4 {:.3e}, failed {failed:?}",
            report.properties.len(),
            -identity,
            -ode
        ),
    )
}

fn convexity() -> Outcome {
    let te = TransformEvaluator::default();
    let mut parts = Vec::new();
    let mut passed = true;
    for s in [2.5, 4.0, 14.0] {
        let report = check_eta_convexity(&te, s, 10.0, 1e-3, 1000, &mut substream(SEED, 2)).unwrap();
        let second = report.property("second differences of |f|^s").unwrap().worst_margin;
        let tangent = report.property("tangent inequality").unwrap().worst_margin;
        passed &= report.passed() && second >= -1e-8 && tangent >= -1e-10;
        parts.push(format!("s={s}: second diff {second:.2e}, tangent {tangent:.2e}"));
    }
    outcome(passed, parts.join("; "))
}

fn gradient() -> Outcome {
    let model = default_model(20.0, 200);
    let mut rng = substream(SEED, 3);
    // |t|^q with q < 2 is not twice differentiable at 0, so central differences are only a
    // valid oracle away from sign changes: take a positive base point, signed directions.
    let v = random_field(model.grid(), &mut rng, 0.5).abs().axpy(1.0, &model.grid().field_from_fn(|r| 0.2 * (-r * r / 50.0).exp()));
    let g = model.grad_phi(&v).unwrap();
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let xi = random_field(model.grid(), &mut rng, 1.0);
        let analytic = model.grid().inner(&g, &xi);
        let h = 1e-5;
        let plus = model.phi(&v.axpy(h, &xi)).unwrap().total;
        let minus = model.phi(&v.axpy(-h, &xi)).unwrap().total;
        let fd = (plus - minus) / (2.0 * h);
        worst = worst.max((analytic - fd).abs() / analytic.abs().max(fd.abs()));
    }
    outcome(worst < 1e-6, format!("worst relative error {worst:.3e} over 20 directions"))
}

fn ground_state_reproduction(critical: &mut Critical) -> Outcome {
    let opts = SolveOptions::default();
    let base = default_model(20.0, 400);
    let sol = ground_state(&base, &opts).unwrap();
    critical.record("ground state M=400", &sol);
    let tests = bump_test_functions(&base, 10, 10.0);
    let weak = check_weak_residual(&base, &sol.v_star, &tests).unwrap().weak_residual;
    let min_u = sol.u_star.iter().cloned().fold(f64::INFINITY, f64::min);

    let fine = base.with_grid(base.grid().refined().unwrap()).unwrap();
    let sol_fine = ground_state(&fine, &opts).unwrap();
    critical.record("ground state M=800", &sol_fine);
    let wide = default_model(30.0, 400);
    let sol_wide = ground_state(&wide, &opts).unwrap();
    critical.record("ground state R=30", &sol_wide);

    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let d_m = rel(sol.phi_value, sol_fine.phi_value);
    let d_r = rel(sol.phi_value, sol_wide.phi_value);
    outcome(
        sol.converged
            && sol.grad_norm <= 1e-8
            && sol.phi_value < 0.0
            && min_u >= 0.0
            && weak <= 1e-6
            && sol_fine.converged
            && sol_wide.converged
            && d_m <= 1e-3
            && d_r <= 1e-3,
        format!(
            "phi {:.6e}, grad {:.2e}, min u {min_u:.2e}, weak {weak:.2e}, M 400->800 {d_m:.2e}, R 20->30 {d_r:.2e}",
            sol.phi_value, sol.grad_norm
        ),
    )
}

fn geometry_certificates() -> Outcome {
    let model = default_model(20.0, 400);
    let mut parts = Vec::new();
    let mut passed = true;
    for n in 1..=4 {
        match certify_and_verify(&model, n, 1000, &mut substream(SEED, 0x100 + n as u64)) {
            Ok((cert, sphere)) => {
                let ok = cert.a > 0.0
                    && cert.theta < 0.0
                    && cert.vartheta * cert.rho <= cert.delta
                    && sphere.samples >= 1000
                    && sphere.nonnegative == 0
                    && sphere.max_phi < 0.0
                    && sphere.max_phi <= cert.theta + SPHERE_SLACK;
                passed &= ok;
                parts.push(format!("n={n}: A {:.2e} theta {:.2e} max phi {:.2e}", cert.a, cert.theta, sphere.max_phi));
            }
            Err(e) => {
                passed = false;
                parts.push(format!("n={n}: {e}"));
            }
        }
    }
    outcome(passed, parts.join("; "))
}

fn coercivity() -> Outcome {
    let model = default_model(20.0, 400);
    let mut rng = substream(SEED, 4);
    let ell = embedding_constant(&model, 200, &mut rng);
    let dirs = unit_directions(&model, 10, &mut rng);
    let schedule = [1e2, 1e3, 1e4];
    if let Err(e) = coercivity_ray_check(&model, &dirs, &schedule, ell) {
        return outcome(false, e.to_string());
    }
    // Recheck directly along each ray.
    let mut min_last = f64::INFINITY;
    let mut increasing = true;
    for w in &dirs {
        let phis: Vec<f64> = schedule.iter().map(|&t| model.phi(&w.scaled(t)).unwrap().total).collect();
        increasing &= phis.windows(2).all(|p| p[0] < p[1]);
        min_last = min_last.min(phis[2]);
    }
    outcome(increasing && min_last > 0.0, format!("10 rays increasing: {increasing}, min phi(1e4 w) {min_last:.3e}"))
}

fn e_norm_degeneration() -> Outcome {
    let spec = ProblemSpec { h: Coefficient::zero(), ..ProblemSpec::default() };
    let model = EnergyModel::new(spec, make_grid(20.0, 200, 3, 1.01).unwrap(), TransformEvaluator::default()).unwrap();
    let mut rng = substream(SEED, 8);
    let mut mismatches = 0;
    for i in 0..100 {
        let v = random_field(model.grid(), &mut rng, 10f64.powf(-2.0 + 0.04 * i as f64));
        if model.h_seminorm(&v) != 0.0 || model.e_norm(&v).to_bits() != model.d_norm(&v).to_bits() {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches} of 100 fields differ"))
}

fn multi_start_sanity(critical: &mut Critical) -> Outcome {
    let opts = SolveOptions::default();
    let coarse = default_model(20.0, 400);
    let fine = coarse.with_grid(coarse.grid().refined().unwrap()).unwrap();
    let a = multi_start(&coarse, 4, 4, &opts, SEED).unwrap();
    let b = multi_start(&fine, 4, 4, &opts, SEED).unwrap();
    for (label, out) in [("multi-start M=400", &a), ("multi-start M=800", &b)] {
        for s in &out.solutions {
            critical.record(label, s);
        }
    }
    let sane = |o: &dualvar::solve::MultiStartOutcome| o.solutions.iter().all(|s| s.phi_value < 0.0 && s.grad_norm <= 1e-8);
    // Each coarse energy must have a fine counterpart within 1e-3.
    let worst = a
        .solutions
        .iter()
        .map(|s| b.solutions.iter().map(|t| (s.phi_value - t.phi_value).abs() / t.phi_value.abs()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    outcome(
        sane(&a) && sane(&b) && !a.solutions.is_empty() && worst <= 1e-3,
        format!(
            "distinct solutions {} (M=400) / {} (M=800) from {} starts, worst energy drift {worst:.2e}",
            a.solutions.len(),
            b.solutions.len(),
            a.starts
        ),
    )
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism(critical: &mut Critical) -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("run.cfg");
    std::fs::write(&cfg, format!("seed = {SEED}\n")).unwrap();
    let mut runs = Vec::new();
    for name in ["first", "second"] {
        let out_dir = root.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_dualvar"))
            .args(["check-all", cfg.to_str().unwrap()])
            .env("DUALVAR_OUTPUT", &out_dir)
            .output()
            .unwrap();
        if status.status.code() != Some(0) {
            return outcome(false, format!("check-all exited with {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr)));
        }
        let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
        for sol in json["solutions"].as_array().unwrap() {
            if sol["converged"] == true {
                critical.0.push((format!("check-all {name} {}", sol["label"]), sol["phi_value"].as_f64().unwrap()));
            }
        }
        runs.push(csv_files(&out_dir));
    }
    let names: Vec<&str> = runs[0].iter().map(|(n, _)| n.as_str()).collect();
    outcome(!runs[0].is_empty() && runs[0] == runs[1], format!("{} CSV files compared: {names:?}", names.len()))
}

fn main() {
    let mut critical = Critical::default();
    let mut all = true;
    let mut report = |id: usize, name: &str, limit: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let out = f();
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let passed = out.passed && in_time;
        all &= passed;
        let budget = limit.map(|l| format!(" (limit {}s)", l.as_secs())).unwrap_or_default();
        println!(
            "criterion {id:>2} [{}] {name}: {} in {:.2}s{budget}",
            if passed { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
    };
    let secs = |s: u64| Some(Duration::from_secs(s));

    report(1, "transform suite", secs(5), &mut transform_suite);
    report(2, "convexity", secs(5), &mut convexity);
    report(3, "gradient correctness", secs(10), &mut gradient);
    report(4, "ground state", secs(120), &mut || ground_state_reproduction(&mut critical));
    report(6, "geometry certificates", secs(60), &mut geometry_certificates);
    report(7, "coercivity rays", secs(30), &mut coercivity);
    report(8, "E-norm with h = 0", None, &mut e_norm_degeneration);
    report(9, "multi-start sanity", None, &mut || multi_start_sanity(&mut critical));
    report(10, "determinism of check-all", None, &mut || determinism(&mut critical));
    report(5, "sign of critical values", None, &mut || {
        let bad: Vec<&(String, f64)> = critical.0.iter().filter(|(_, phi)| *phi > 1e-8).collect();
        outcome(
            bad.is_empty() && !critical.0.is_empty(),
            format!("{} converged critical points, max phi {:.3e}, exceptions {bad:?}", critical.0.len(), critical.0.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max)),
        )
    });

    if !all {
        eprintln!("acceptance: at least one criterion failed");
        std::process::exit(1);
    }
}
