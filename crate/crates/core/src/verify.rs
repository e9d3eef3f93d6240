//! Executable property suites: the analytic properties of `f`, convexity of
//! `|f|^s`, the sign of critical values, the energy identity `Φ = J∘f` and
//! residuals of the original equation at computed solutions.

use serde::Serialize;

use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::rng::{random_field, uniform, SeededRng};
use crate::solve::SolveReport;
use crate::transform::{ode_oracle_path, TransformEvaluator};

/// Slack allowed on the sampled inequalities.
pub const INEQUALITY_SLACK: f64 = 1e-10;
/// Tolerance on `(1 + 2f²) f'² = 1`.
pub const IDENTITY_TOL: f64 = 1e-12;
/// Agreement between Newton inversion and the RK4 integration of the ODE.
pub const ODE_TOL: f64 = 1e-8;
/// Tolerance on the second differences of `|f|^s`, relative to `max(1, η)`.
pub const CONVEXITY_TOL: f64 = 1e-8;
/// Tolerance on `|Φ(v) − J(f(v))|`, relative to `1 + |Φ(v)|`.
pub const ENERGY_IDENTITY_TOL: f64 = 1e-8;
/// Critical values must not exceed this when `s >= 4`.
pub const SIGN_TOL: f64 = 1e-8;
/// RK4 step used by the transform suite.
pub const ODE_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Serialize)]
pub struct PropertyResult {
    pub property: String,
    /// Smallest `value − bound` over the samples, for properties of the form
    /// `value >= bound`; negative within `tolerance` still passes.
    pub worst_margin: f64,
    pub tolerance: f64,
    pub witness: Vec<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub samples: usize,
    pub properties: Vec<PropertyResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }

    pub fn property(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.property == name)
    }

    /// First failing property as an error.
    pub fn into_result(self) -> Result<Self> {
        if let Some(p) = self.properties.iter().find(|p| !p.passed) {
            return Err(Error::PropertyViolation {
                suite: self.suite.clone(),
                property: p.property.clone(),
                margin: p.worst_margin,
                witness: p.witness.clone(),
            });
        }
        Ok(self)
    }
}

/// Running minimum of a margin with its witness.
struct Tracker {
    property: &'static str,
    tolerance: f64,
    worst: f64,
    witness: Vec<f64>,
}

impl Tracker {
    fn new(property: &'static str, tolerance: f64) -> Self {
        Self { property, tolerance, worst: f64::INFINITY, witness: Vec::new() }
    }

    fn observe(&mut self, margin: f64, witness: &[f64]) {
        if margin < self.worst || margin.is_nan() {
            self.worst = margin;
            self.witness = witness.to_vec();
        }
    }

    fn finish(self) -> PropertyResult {
        PropertyResult {
            property: self.property.to_string(),
            worst_margin: self.worst,
            tolerance: self.tolerance,
            witness: self.witness,
            passed: self.worst >= -self.tolerance,
        }
    }
}

/// Sampled check of the listed properties of `f` on `[-t_range, t_range]`:
/// monotonicity and oddness, `|f| <= |t|`, `f'(0) = 1`, `0 < f' <= 1`,
/// `|f f'| <= 1`, `|f| <= 2^{1/4}|t|^{1/2}`, the two `mu` bounds,
/// `f² >= f f' t >= f²/2`, the identity `(1 + 2f²) f'² = 1`, the round trip
/// through the antiderivative, and agreement with RK4.
pub fn run_transform_properties(
    te: &TransformEvaluator,
    sample_count: usize,
    t_range: f64,
    rng: &mut SeededRng,
) -> Result<SuiteReport> {
    if sample_count < 1000 {
        return Err(Error::Precondition(format!("sample_count must be at least 1000, got {sample_count}")));
    }
    // Half deterministic (uniform grid), half random.
    let half = sample_count / 2;
    let mut ts: Vec<f64> = (0..half)
        .map(|i| -t_range + 2.0 * t_range * i as f64 / (half - 1) as f64)
        .collect();
    ts.extend((half..sample_count).map(|_| uniform(rng, -t_range, t_range)));
    ts.sort_by(f64::total_cmp);

    let fs = te.eval_f_batch(&ts)?;
    let fps: Vec<f64> = fs.iter().map(|f| 1.0 / (1.0 + 2.0 * f * f).sqrt()).collect();
    let mu = te.mu();

    let mut monotone = Tracker::new("strictly increasing", 0.0);
    let mut odd = Tracker::new("odd", IDENTITY_TOL);
    let mut below_t = Tracker::new("|f(t)| <= |t|", INEQUALITY_SLACK);
    let mut fp_bound = Tracker::new("0 < f'(t) <= 1", INEQUALITY_SLACK);
    let mut ffp = Tracker::new("|f f'| <= 1", INEQUALITY_SLACK);
    let mut sqrt_bound = Tracker::new("|f(t)| <= 2^(1/4) |t|^(1/2)", INEQUALITY_SLACK);
    let mut mu_bound = Tracker::new("mu lower bounds", INEQUALITY_SLACK);
    let mut upper5 = Tracker::new("f^2 >= f f' t", INEQUALITY_SLACK);
    let mut lower5 = Tracker::new("f f' t >= f^2/2", INEQUALITY_SLACK);
    let mut identity = Tracker::new("(1 + 2f^2) f'^2 = 1", IDENTITY_TOL);
    let mut round_trip = Tracker::new("F(f(t)) = t", te.newton_tol());
    let mut ode = Tracker::new("f agrees with RK4", ODE_TOL);

    let fp0 = te.eval_f_prime(0.0)?;
    let mut fprime0 = Tracker::new("f'(0) = 1", 0.0);
    fprime0.observe(-(fp0 - 1.0).abs(), &[0.0]);

    for (i, ((&t, &f), &fp)) in ts.iter().zip(&fs).zip(&fps).enumerate() {
        if i > 0 && ts[i - 1] < t {
            monotone.observe(f - fs[i - 1], &[ts[i - 1], t]);
        }
        let fneg = te.eval_f(-t)?;
        odd.observe(-(fneg + f).abs(), &[t]);
        below_t.observe(t.abs() - f.abs(), &[t]);
        fp_bound.observe((1.0 - fp).min(fp), &[t]);
        ffp.observe(1.0 - (f * fp).abs(), &[t]);
        sqrt_bound.observe(1.189_207_115_002_721 * t.abs().sqrt() - f.abs(), &[t]);
        let mu_margin = if t.abs() <= 1.0 { f.abs() - mu * t.abs() } else { f.abs() - mu * t.abs().sqrt() };
        mu_bound.observe(mu_margin, &[t]);
        let scale = f * f + 1.0;
        upper5.observe((f * f - f * fp * t) / scale, &[t]);
        lower5.observe((f * fp * t - 0.5 * f * f) / scale, &[t]);
        identity.observe(-((1.0 + 2.0 * f * f) * fp * fp - 1.0).abs(), &[t]);
        round_trip.observe(
            -(crate::transform::antiderivative(f) - t).abs() / t.abs().max(1.0),
            &[t],
        );
    }

    // RK4 along the sorted magnitudes, compared through oddness.
    let mut order: Vec<usize> = (0..ts.len()).collect();
    order.sort_by(|&a, &b| ts[a].abs().total_cmp(&ts[b].abs()));
    let targets: Vec<f64> = order.iter().map(|&i| ts[i].abs()).collect();
    let rk = ode_oracle_path(&targets, ODE_STEP);
    for (k, &i) in order.iter().enumerate() {
        ode.observe(-(fs[i].abs() - rk[k]).abs(), &[ts[i]]);
    }

    Ok(SuiteReport {
        suite: "transform".into(),
        samples: ts.len(),
        properties: [
            monotone, odd, below_t, fprime0, fp_bound, ffp, sqrt_bound, mu_bound, upper5, lower5, identity,
            round_trip, ode,
        ]
        .into_iter()
        .map(Tracker::finish)
        .collect(),
    })
}

/// Convexity of `η(t) = |f(t)|^s` by second differences on a uniform grid,
/// the tangent inequality `|f(α)|^s <= |f(β)|^s + s|f(α)|^{s−2}f(α)f'(α)(α−β)`
/// on random pairs, and monotonicity of `η'(t) = s|f|^{s−2} f f'`.
pub fn check_eta_convexity(
    te: &TransformEvaluator,
    s: f64,
    t_range: f64,
    step: f64,
    pairs: usize,
    rng: &mut SeededRng,
) -> Result<SuiteReport> {
    if !(s > 2.0 && step > 0.0) {
        return Err(Error::Precondition(format!("need s > 2 and step > 0, got s = {s}, step = {step}")));
    }
    let n = (2.0 * t_range / step).round() as usize;
    let ts: Vec<f64> = (0..=n).map(|i| -t_range + i as f64 * step).collect();
    let fs = te.eval_f_batch(&ts)?;
    let eta = |f: f64| f.abs().powf(s);
    let eta_prime = |f: f64| {
        let fp = 1.0 / (1.0 + 2.0 * f * f).sqrt();
        s * f.abs().powf(s - 2.0) * f * fp
    };

    let mut convex = Tracker::new("second differences of |f|^s", CONVEXITY_TOL);
    let mut increasing = Tracker::new("s|f|^(s-2) f f' increasing", INEQUALITY_SLACK);
    for i in 1..n {
        let (a, b, c) = (eta(fs[i - 1]), eta(fs[i]), eta(fs[i + 1]));
        convex.observe((a - 2.0 * b + c) / b.max(1.0), &[ts[i]]);
        let (da, db) = (eta_prime(fs[i - 1]), eta_prime(fs[i]));
        increasing.observe((db - da) / da.abs().max(db.abs()).max(1.0), &[ts[i - 1], ts[i]]);
    }

    let mut tangent = Tracker::new("tangent inequality", INEQUALITY_SLACK);
    for _ in 0..pairs {
        let alpha = uniform(rng, -t_range, t_range);
        let beta = uniform(rng, -t_range, t_range);
        let (fa, fb) = (te.eval_f(alpha)?, te.eval_f(beta)?);
        let rhs = eta(fb) + eta_prime(fa) * (alpha - beta);
        let lhs = eta(fa);
        tangent.observe((rhs - lhs) / lhs.max(rhs.abs()).max(1.0), &[alpha, beta]);
    }

    Ok(SuiteReport {
        suite: format!("convexity s={s}"),
        samples: ts.len(),
        properties: [convex, increasing, tangent].into_iter().map(Tracker::finish).collect(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SignCheck {
    pub passed: bool,
    pub phi_value: f64,
    pub note: Option<String>,
}

/// Critical values are nonpositive when `s >= 4`. Vacuous for `s < 4`.
pub fn check_sign_critical(model: &EnergyModel, report: &SolveReport) -> Result<SignCheck> {
    if !report.converged {
        return Err(Error::Precondition(format!(
            "sign check needs a converged critical point (gradient norm {:e})",
            report.grad_norm
        )));
    }
    if model.problem().s < 4.0 {
        return Ok(SignCheck {
            passed: true,
            phi_value: report.phi_value,
            note: Some(format!("s = {} < 4: the sign law does not apply", model.problem().s)),
        });
    }
    Ok(SignCheck { passed: report.phi_value <= SIGN_TOL, phi_value: report.phi_value, note: None })
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport {
    /// `max_φ |⟨Φ'(v), φ/f'(v)⟩| / (‖φ‖_D + |φ|_∞)`
    pub weak_residual: f64,
    /// `max 1/f'(v)` over the nodes.
    pub amplification: f64,
    pub test_count: usize,
}

impl ResidualReport {
    /// Bound on the weak residual implied by a gradient of max-norm `grad_tol`.
    pub fn bound(&self, grad_tol: f64) -> f64 {
        10.0 * grad_tol * self.amplification
    }
}

/// `ξ = φ / f'(v) = sqrt(1 + 2f(v)²) φ`.
pub fn weak_test_field(model: &EnergyModel, v: &[f64], phi: &[f64]) -> Result<Field> {
    let u = model.recover_u(v)?;
    Ok(Field::new(u.iter().zip(phi).map(|(u, p)| (1.0 + 2.0 * u * u).sqrt() * p).collect()))
}

/// Weak form of the original equation for `u = f(v)`, tested against each `φ`
/// through `ξ = φ/f'(v)`.
pub fn check_weak_residual(model: &EnergyModel, v: &[f64], test_functions: &[Field]) -> Result<ResidualReport> {
    if test_functions.is_empty() {
        return Err(Error::Precondition("at least one test function is required".into()));
    }
    let grad = model.grad_phi(v)?;
    let u = model.recover_u(v)?;
    let amplification = u.iter().map(|u| (1.0 + 2.0 * u * u).sqrt()).fold(1.0, f64::max);
    let mut weak = 0.0_f64;
    for phi in test_functions {
        let xi = weak_test_field(model, v, phi)?;
        let pairing = model.grid().inner(&grad, &xi);
        let scale = model.d_norm(phi) + phi.max_abs();
        weak = weak.max(pairing.abs() / scale);
    }
    Ok(ResidualReport { weak_residual: weak, amplification, test_count: test_functions.len() })
}

/// Smooth bumps inside `(0, R)` for the weak residual.
pub fn bump_test_functions(model: &EnergyModel, count: usize, outer: f64) -> Vec<Field> {
    let grid = model.grid();
    let outer = outer.min(grid.radius());
    (0..count)
        .map(|i| {
            let center = outer * (i as f64 + 0.5) / count as f64;
            let half = outer / count as f64;
            grid.field_from_fn(|r| {
                let x = (r - center) / half;
                if x.abs() >= 1.0 { 0.0 } else { (1.0 - 1.0 / (1.0 - x * x)).exp() }
            })
        })
        .collect()
}

/// Pointwise defect of `−Δu − uΔ(u²) − k|u|^{q−2}u + h|u|^{s−2}u` at `u = u_star`.
pub fn strong_defect(model: &EnergyModel, u: &[f64]) -> Field {
    let grid = model.grid();
    let (q, s) = (model.problem().q, model.problem().s);
    let lap = grid.laplacian_radial(u);
    let du = grid.deriv(u);
    let pow = |x: f64, p: f64| if x == 0.0 { 0.0 } else { x.signum() * x.abs().powf(p) };
    Field::new(
        (0..u.len())
            .map(|i| {
                // −Δu − uΔ(u²) = −(1 + 2u²)Δu − 2u|∇u|²
                -(1.0 + 2.0 * u[i] * u[i]) * lap[i] - 2.0 * u[i] * du[i] * du[i] - model.k_values()[i] * pow(u[i], q - 1.0)
                    + model.h_values()[i] * pow(u[i], s - 1.0)
            })
            .collect(),
    )
}

/// Fraction of outer nodes excluded from the strong residual.
pub const BOUNDARY_LAYER: f64 = 0.05;

/// Quadrature-weighted L² norm of the strong defect over the inner 95% of nodes.
pub fn check_strong_residual(model: &EnergyModel, report: &SolveReport) -> Result<f64> {
    if !report.converged {
        return Err(Error::Precondition("strong residual needs a converged solution".into()));
    }
    let defect = strong_defect(model, &report.u_star);
    let m = defect.len();
    let keep = m - ((m as f64) * BOUNDARY_LAYER).ceil() as usize;
    let w = model.grid().weights();
    Ok((0..keep).map(|i| w[i] * defect[i] * defect[i]).sum::<f64>().sqrt())
}

/// Defect of the transformed equation `−Δv = [k|f|^{q−2}f − h|f|^{s−2}f] f'(v)`,
/// which is exactly the weighted gradient.
pub fn transformed_defect(model: &EnergyModel, v: &[f64]) -> Result<Field> {
    let grid = model.grid();
    let (q, s) = (model.problem().q, model.problem().s);
    let lap = grid.laplacian_radial(v);
    let u = model.recover_u(v)?;
    let pow = |x: f64, p: f64| if x == 0.0 { 0.0 } else { x.signum() * x.abs().powf(p) };
    let mut out: Vec<f64> = (0..v.len())
        .map(|i| {
            let fp = 1.0 / (1.0 + 2.0 * u[i] * u[i]).sqrt();
            -lap[i] - (model.k_values()[i] * pow(u[i], q - 1.0) - model.h_values()[i] * pow(u[i], s - 1.0)) * fp
        })
        .collect();
    grid.project(&mut out);
    Ok(Field::new(out))
}

/// `Φ(v) = J(f(v))` on random fields.
pub fn check_energy_identity(model: &EnergyModel, samples: usize, rng: &mut SeededRng) -> Result<SuiteReport> {
    if samples < 10 {
        return Err(Error::Precondition(format!("need at least 10 samples, got {samples}")));
    }
    let mut identity = Tracker::new("phi(v) = J(f(v))", ENERGY_IDENTITY_TOL);
    for i in 0..samples {
        // Amplitudes from small to large so both regimes of f are exercised.
        let amplitude = 10f64.powf(-2.0 + 4.0 * i as f64 / samples as f64);
        let v = random_field(model.grid(), rng, amplitude);
        let phi = model.phi(&v)?.total;
        let j = model.j_energy(&model.recover_u(&v)?);
        identity.observe(-(phi - j).abs() / (1.0 + phi.abs()), &v);
    }
    Ok(SuiteReport { suite: "energy identity".into(), samples, properties: vec![identity.finish()] })
}
