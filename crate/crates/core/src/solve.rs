//! Minimization of the discrete energy.
//!
//! [`minimize`] is a limited-memory quasi-Newton descent with Armijo
//! backtracking. The initial inverse-Hessian guess is either the inverse
//! quadrature mass (the plain function-space gradient) or the inverse of the
//! discrete Dirichlet form (the Sobolev gradient).

use std::collections::VecDeque;

use log::debug;
use rayon::prelude::*;
use serde::Serialize;

use crate::energy::{EnergyBreakdown, EnergyModel};
use crate::error::{Error, Result};
use crate::geometry;
use crate::grid::Field;
use crate::rng;

/// Smallest trial step before the line search gives up.
pub const MIN_STEP: f64 = 1e-16;
/// Relative noise floor of an energy evaluation. Within it, a step is accepted
/// on the slope test alone (approximate Armijo).
const ENERGY_NOISE: f64 = 1e-12;
/// Distinct solutions differ by more than this in relative L² distance...
pub const DISTINCT_L2: f64 = 1e-3;
/// ...and by more than this in energy.
pub const DISTINCT_ENERGY: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct SolveOptions {
    /// Stop when the max-norm of the quadrature-weighted gradient falls below this.
    pub grad_tol: f64,
    pub max_iters: usize,
    pub armijo_c: f64,
    pub backtrack_ratio: f64,
    /// Replace every iterate by its absolute value.
    pub enforce_nonnegative: bool,
    /// Quasi-Newton history length; 0 gives plain (preconditioned) descent.
    pub memory: usize,
    /// Precondition with the inverse discrete Dirichlet form.
    pub sobolev: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-8,
            max_iters: 50_000,
            armijo_c: 1e-4,
            backtrack_ratio: 0.5,
            enforce_nonnegative: false,
            memory: 10,
            sobolev: true,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if !(self.grad_tol > 0.0) {
            return bad("grad_tol must be positive");
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c must lie in (0, 1)");
        }
        if !(self.backtrack_ratio > 0.0 && self.backtrack_ratio < 1.0) {
            return bad("backtrack_ratio must lie in (0, 1)");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualSummary {
    pub weak: f64,
    pub strong: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub v_star: Field,
    #[serde(skip)]
    pub u_star: Field,
    pub phi_value: f64,
    pub j_value: f64,
    pub energy: EnergyBreakdown,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residuals: Option<ResidualSummary>,
    pub distinct_id: Option<usize>,
    /// Number of converged starts that landed on this solution (multi-start only).
    pub multiplicity: Option<usize>,
    /// Energy after every accepted step, starting with the initial guess.
    #[serde(skip)]
    pub phi_history: Vec<f64>,
}

impl SolveReport {
    pub fn is_nonnegative(&self) -> bool {
        self.v_star.iter().all(|&x| x >= 0.0) && self.u_star.iter().all(|&x| x >= 0.0)
    }
}

/// `u = f(v)` nodewise.
pub fn recover_u(model: &EnergyModel, v: &[f64]) -> Result<Field> {
    model.recover_u(v)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn grad_max_norm(model: &EnergyModel, partials: &[f64]) -> f64 {
    let grid = model.grid();
    partials
        .iter()
        .zip(grid.weights())
        .enumerate()
        .filter(|(i, _)| grid.is_free(*i))
        .fold(0.0, |m, (_, (p, w))| m.max((p / w).abs()))
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

fn precondition(model: &EnergyModel, opts: &SolveOptions, p: &[f64]) -> Vec<f64> {
    let grid = model.grid();
    let mut out = if opts.sobolev {
        grid.solve_stiffness(p, 0.0)
    } else {
        p.iter().zip(grid.weights()).map(|(x, w)| x / w).collect()
    };
    grid.project(&mut out);
    out
}

fn lbfgs_direction(model: &EnergyModel, opts: &SolveOptions, p: &[f64], history: &VecDeque<Pair>) -> Vec<f64> {
    let mut q = p.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for pair in history.iter().rev() {
        let a = pair.rho * dot(&pair.s, &q);
        for (qi, yi) in q.iter_mut().zip(&pair.y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    let mut r = precondition(model, opts, &q);
    if let Some(last) = history.back() {
        let hy = precondition(model, opts, &last.y);
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &hy);
        if gamma.is_finite() && gamma > 0.0 {
            r.iter_mut().for_each(|x| *x *= gamma);
        }
    }
    for (pair, a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = pair.rho * dot(&pair.y, &r);
        for (ri, si) in r.iter_mut().zip(&pair.s) {
            *ri += (a - b) * si;
        }
    }
    r.iter_mut().for_each(|x| *x = -*x);
    r
}

/// Descend from `v0` until the weighted gradient max-norm drops below
/// `opts.grad_tol` or the iteration budget runs out.
pub fn minimize(model: &EnergyModel, v0: &[f64], opts: &SolveOptions) -> Result<SolveReport> {
    opts.validate()?;
    let grid = model.grid();
    let mut v = Field::new(v0.to_vec());
    grid.project(&mut v);
    if opts.enforce_nonnegative {
        v = v.abs();
    }
    let (mut energy, mut partials) = model.phi_and_partials(&v)?;
    if !energy.total.is_finite() {
        return Err(Error::InvalidParameter("initial energy is not finite".into()));
    }
    let mut history: VecDeque<Pair> = VecDeque::with_capacity(opts.memory);
    let mut phi_history = vec![energy.total];
    let mut grad_norm = grad_max_norm(model, &partials);
    let mut converged = grad_norm <= opts.grad_tol;
    let mut iterations = 0;
    let mut last_step = 1.0_f64;

    while !converged && iterations < opts.max_iters {
        let mut d = if opts.memory > 0 {
            lbfgs_direction(model, opts, &partials, &history)
        } else {
            precondition(model, opts, &partials).into_iter().map(|x| -x).collect()
        };
        let mut slope = dot(&partials, &d);
        if !(slope < 0.0) {
            history.clear();
            d = precondition(model, opts, &partials).into_iter().map(|x| -x).collect();
            slope = dot(&partials, &d);
        }

        // Quasi-Newton and Sobolev directions carry their own scale; the plain
        // gradient needs the previous step length as a guess.
        let mut step = if opts.memory > 0 || opts.sobolev { 1.0 } else { (2.0 * last_step).min(1.0) };
        let noise = ENERGY_NOISE
            * (energy.dirichlet_term + energy.concave_term + energy.convex_term + energy.total.abs());
        let (trial, trial_energy, trial_partials) = loop {
            let mut trial = v.axpy(step, &d);
            if opts.enforce_nonnegative {
                trial = trial.abs();
            }
            let (te, tp) = model.phi_and_partials(&trial)?;
            let predicted = if opts.enforce_nonnegative {
                let moved: Vec<f64> = trial.iter().zip(v.iter()).map(|(a, b)| a - b).collect();
                dot(&partials, &moved)
            } else {
                step * slope
            };
            let armijo = te.total <= energy.total + opts.armijo_c * predicted;
            // Approximate Armijo: the decrease is below rounding, so judge the
            // step by the slope at the trial point instead.
            let approximate = (te.total - energy.total).abs() <= noise && dot(&tp, &d) <= -0.8 * slope;
            if te.total.is_finite() && (armijo || approximate) {
                break (trial, te, tp);
            }
            step *= opts.backtrack_ratio;
            if step < MIN_STEP {
                return Err(Error::LineSearchFailure {
                    iteration: iterations,
                    phi: energy.total,
                    min_step: MIN_STEP,
                });
            }
        };
        last_step = step;

        let s: Vec<f64> = trial.iter().zip(v.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = trial_partials.iter().zip(&partials).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if opts.memory > 0 && sy > 1e-14 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back(Pair { s, y, rho: 1.0 / sy });
        }

        v = trial;
        energy = trial_energy;
        partials = trial_partials;
        phi_history.push(energy.total);
        iterations += 1;
        grad_norm = grad_max_norm(model, &partials);
        converged = grad_norm <= opts.grad_tol;
    }
    debug!(
        "minimize: {} iterations, phi = {:.12e}, |grad| = {:.3e}, converged = {}",
        iterations, energy.total, grad_norm, converged
    );

    let u = model.recover_u(&v)?;
    let j_value = model.j_energy(&u);
    Ok(SolveReport {
        v_star: v,
        u_star: u,
        phi_value: energy.total,
        j_value,
        energy,
        grad_norm,
        iterations,
        converged,
        residuals: None,
        distinct_id: None,
        multiplicity: None,
        phi_history,
    })
}

/// Nonnegative minimizer at negative energy.
///
/// The start is the level-1 sphere point `ρ_1 |b_1|`, certified to have
/// negative energy by the subspace geometry; descent then runs with every
/// iterate reflected to its absolute value, which never raises the energy.
pub fn ground_state(model: &EnergyModel, opts: &SolveOptions) -> Result<SolveReport> {
    let basis = geometry::build_subspace(model, 1)?;
    // Level 1 needs no sampling: the unit sphere is {±b_1}.
    let mut rng = rng::seeded(0);
    let cert = geometry::certify_level(model, &basis, 100, &mut rng)?;
    let start = basis.fields()[0].scaled(cert.rho).abs();
    let start_energy = model.phi(&start)?.total;
    if !(start_energy < 0.0) {
        return Err(Error::GeometryViolation { level: 1, phi: start_energy });
    }
    let opts = SolveOptions { enforce_nonnegative: true, ..opts.clone() };
    minimize(model, &start, &opts)
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiStartOutcome {
    /// Distinct converged solutions, sorted by energy.
    pub solutions: Vec<SolveReport>,
    pub starts: usize,
    pub converged: usize,
    /// Energy of every start, all certified negative.
    pub start_energies: Vec<f64>,
}

/// Relative L² distance between two fields, up to a global sign.
pub fn relative_distance(model: &EnergyModel, a: &[f64], b: &[f64]) -> f64 {
    let grid = model.grid();
    let norm = |x: &[f64]| grid.inner(x, x).sqrt();
    let minus: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let plus: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        return 0.0;
    }
    norm(&minus).min(norm(&plus)) / scale
}

/// Multi-start search for negative-energy critical points.
///
/// For each level `n <= n_max`, starts are drawn uniformly from the certified
/// sphere `X_n ∩ S_{ρ_n}` where `Φ < 0`, and each is descended independently.
/// Converged results are merged when their relative L² distance (up to sign) is
/// at most [`DISTINCT_L2`] or their energies differ by at most [`DISTINCT_ENERGY`].
pub fn multi_start(
    model: &EnergyModel,
    n_max: usize,
    samples_per_level: usize,
    opts: &SolveOptions,
    seed: u64,
) -> Result<MultiStartOutcome> {
    if n_max == 0 {
        return Err(Error::InvalidParameter("n_max must be at least 1".into()));
    }
    let mut starts = Vec::new();
    for level in 1..=n_max {
        let basis = geometry::build_subspace(model, level)?;
        let mut rng = rng::substream(seed, 0x5EED_0000 + level as u64);
        let cert = geometry::certify_level(model, &basis, 200, &mut rng)?;
        for _ in 0..samples_per_level {
            let direction = rng::unit_direction(&mut rng, level);
            starts.push(basis.sphere_point(model, &direction, cert.rho));
        }
    }
    let start_energies = starts
        .iter()
        .map(|v| model.phi(v).map(|b| b.total))
        .collect::<Result<Vec<_>>>()?;
    if let Some((i, &phi)) = start_energies.iter().enumerate().find(|(_, &e)| !(e < 0.0)) {
        return Err(Error::GeometryViolation { level: i / samples_per_level.max(1) + 1, phi });
    }

    let reports = starts
        .par_iter()
        .map(|v0| minimize(model, v0, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut converged: Vec<SolveReport> = reports
        .into_iter()
        .filter(|r| r.converged && r.phi_value < 0.0)
        .collect();
    let converged_count = converged.len();
    converged.sort_by(|a, b| a.phi_value.total_cmp(&b.phi_value));

    let mut distinct: Vec<SolveReport> = Vec::new();
    for report in converged {
        let same = distinct.iter_mut().find(|rep| {
            relative_distance(model, &rep.v_star, &report.v_star) <= DISTINCT_L2
                || (rep.phi_value - report.phi_value).abs() <= DISTINCT_ENERGY
        });
        match same {
            Some(rep) => *rep.multiplicity.get_or_insert(1) += 1,
            None => {
                let mut report = report;
                report.multiplicity = Some(1);
                distinct.push(report);
            }
        }
    }
    for (id, rep) in distinct.iter_mut().enumerate() {
        rep.distinct_id = Some(id);
    }
    Ok(MultiStartOutcome {
        solutions: distinct,
        starts: start_energies.len(),
        converged: converged_count,
        start_energies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::problem::ProblemSpec;
    use crate::transform::TransformEvaluator;

    fn model(m: usize) -> EnergyModel {
        EnergyModel::new(
            ProblemSpec::default(),
            make_grid(20.0, m, 3, 1.01).unwrap(),
            TransformEvaluator::default(),
        )
        .unwrap()
    }

    #[test]
    fn zero_start_is_critical() {
        let model = model(100);
        let report = minimize(&model, &model.grid().zeros(), &SolveOptions::default()).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 0);
        assert_eq!(report.phi_value, 0.0);
        assert_eq!(report.v_star.max_abs(), 0.0);
    }

    #[test]
    fn rejects_bad_options() {
        let model = model(100);
        let zero = model.grid().zeros();
        for opts in [
            SolveOptions { grad_tol: 0.0, ..Default::default() },
            SolveOptions { armijo_c: 1.0, ..Default::default() },
            SolveOptions { backtrack_ratio: 0.0, ..Default::default() },
        ] {
            assert!(minimize(&model, &zero, &opts).is_err());
        }
    }

    #[test]
    fn ground_state_small_grid() {
        let model = model(200);
        let report = ground_state(&model, &SolveOptions::default()).unwrap();
        assert!(report.converged, "grad {}", report.grad_norm);
        assert!(report.phi_value < 0.0);
        assert!(report.is_nonnegative());
        assert!(report.phi_history.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
        assert!((report.phi_value - report.j_value).abs() <= 1e-6 * (1.0 + report.phi_value.abs()));
        let te = model.transform();
        for (v, u) in report.v_star.iter().zip(report.u_star.iter()) {
            assert!((te.eval_f(*v).unwrap() - u).abs() <= te.newton_tol());
        }
    }

    #[test]
    fn every_solver_variant_descends() {
        let model = model(100);
        let v0 = model.grid().field_from_fn(|r| 0.05 * (-r * r).exp());
        for (memory, sobolev) in [(0, true), (10, false), (0, false)] {
            let opts = SolveOptions { memory, sobolev, max_iters: 300, grad_tol: 1e-6, ..Default::default() };
            let report = minimize(&model, &v0, &opts).unwrap();
            assert!(report.phi_history.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
            assert!(report.phi_value < 0.0);
        }
    }

    #[test]
    fn recover_u_bounds() {
        let model = model(100);
        let v = model.grid().field_from_fn(|r| 3.0 * (-r).exp());
        let u = recover_u(&model, &v).unwrap();
        let vmax = v.max_abs();
        assert!(u.iter().all(|&x| x >= 0.0));
        assert!(u.max_abs() <= vmax.min(2f64.powf(0.25) * vmax.sqrt()));
        assert_eq!(recover_u(&model, &model.grid().zeros()).unwrap().max_abs(), 0.0);
    }
}
