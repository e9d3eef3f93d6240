//! Certificates for the shape of `Φ` on finite-dimensional subspaces.
//!
//! On an `n`-dimensional subspace `X_n` spanned by radial bumps, the constants
//! `ϑ` (with `|v|_∞ <= ϑ‖v‖`), `A = inf ∫k|φ|^q` and `B = sup ∫h|φ|^s` over the
//! unit sphere give the scalar bound
//! `θ(ρ) = ½ρ² − A ρ^q / (2^q q) + B ρ^s / s`. Choosing `ρ` with `ϑρ <= δ` and
//! `θ(ρ) < 0` makes `Φ` negative on the whole sphere `X_n ∩ S_ρ`, which is
//! checked by sampling. A separate check follows `Φ` along rays to confirm
//! coercivity.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::problem::compute_q0;
use crate::rng::{random_field, unit_direction, SeededRng};

/// Inflation applied to the sampled `B`, which can only underestimate the sup.
pub const B_INFLATION: f64 = 1.05;
/// Bumps are spread over the radius where `k` falls to this fraction of its peak.
pub const K_SUPPORT_FRACTION: f64 = 1e-3;
/// Below this, `A` is treated as zero.
pub const A_FLOOR: f64 = 1e-14;
/// Slack allowed between the sampled maximum of `Φ` and `θ_n`.
pub const SPHERE_SLACK: f64 = 1e-6;
/// Margin applied to the sampled embedding constant.
pub const EMBEDDING_MARGIN: f64 = 1.05;

/// Basis of `n` radial bumps with disjoint supports, each of unit `E`-norm.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    level: usize,
    fields: Vec<Field>,
    centers: Vec<f64>,
    width: f64,
    gram: Vec<Vec<f64>>,
}

impl SubspaceBasis {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Pairwise Dirichlet inner products of the basis fields.
    pub fn gram(&self) -> &[Vec<f64>] {
        &self.gram
    }

    pub fn combine(&self, coefficients: &[f64]) -> Field {
        let len = self.fields[0].len();
        let mut out = Field::zeros(len);
        for (c, b) in coefficients.iter().zip(&self.fields) {
            for (o, x) in out.iter_mut().zip(b.iter()) {
                *o += c * x;
            }
        }
        out
    }

    /// The point of `X_n ∩ S_ρ` in coefficient direction `direction`.
    pub fn sphere_point(&self, model: &EnergyModel, direction: &[f64], rho: f64) -> Field {
        let v = self.combine(direction);
        let norm = model.e_norm(&v);
        v.scaled(rho / norm)
    }

    /// Same subspace with every basis field rescaled and renormalized.
    pub fn renormalized(&self, model: &EnergyModel, factor: f64) -> Self {
        let fields: Vec<Field> = self
            .fields
            .iter()
            .map(|b| {
                let scaled = b.scaled(factor);
                let norm = model.e_norm(&scaled);
                scaled.scaled(1.0 / norm)
            })
            .collect();
        let gram = gram_matrix(model, &fields);
        Self { fields, gram, ..self.clone() }
    }

    /// Smallest eigenvalue of the Gram matrix.
    pub fn min_gram_eigenvalue(&self) -> f64 {
        let n = self.level;
        let m = DMatrix::from_fn(n, n, |i, j| self.gram[i][j]);
        SymmetricEigen::new(m).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

fn gram_matrix(model: &EnergyModel, fields: &[Field]) -> Vec<Vec<f64>> {
    fields
        .iter()
        .map(|a| fields.iter().map(|b| model.grid().dirichlet_form(a, b)).collect())
        .collect()
}

fn bump(r: f64, center: f64, half_width: f64) -> f64 {
    let x = (r - center) / half_width;
    if x.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - x * x)).exp()
    }
}

/// `n` smooth bumps centered at `L (i − ½)/n` with support width `L/(2n+1)`,
/// where `L` is the radius inside which `k` stays above [`K_SUPPORT_FRACTION`]
/// of its peak (capped at the grid radius).
pub fn build_subspace(model: &EnergyModel, n: usize) -> Result<SubspaceBasis> {
    let grid = model.grid();
    if n == 0 {
        return Err(Error::InvalidParameter("subspace dimension must be at least 1".into()));
    }
    if n > grid.len() / 8 {
        return Err(Error::InvalidParameter(format!(
            "level {n} exceeds M/8 = {} for a grid of {} nodes",
            grid.len() / 8,
            grid.len()
        )));
    }
    let span = model.problem().k.effective_radius(K_SUPPORT_FRACTION).min(grid.radius());
    let width = span / (2 * n + 1) as f64;
    let centers: Vec<f64> = (0..n).map(|i| span * (i as f64 + 0.5) / n as f64).collect();
    let mut fields = Vec::with_capacity(n);
    for &c in &centers {
        let b = grid.field_from_fn(|r| bump(r, c, 0.5 * width));
        let support = b.iter().filter(|&&x| x > 0.0).count();
        if support < 5 {
            return Err(Error::InvalidParameter(format!(
                "bump at r = {c} covers only {support} nodes; refine the grid"
            )));
        }
        let norm = model.e_norm(&b);
        fields.push(b.scaled(1.0 / norm));
    }
    let gram = gram_matrix(model, &fields);
    let basis = SubspaceBasis { level: n, fields, centers, width, gram };
    let smallest = basis.min_gram_eigenvalue();
    if !(smallest > 1e-10) {
        return Err(Error::InvalidParameter(format!(
            "basis of level {n} is numerically dependent (smallest Gram eigenvalue {smallest:e})"
        )));
    }
    Ok(basis)
}

/// Coefficient directions to examine: the signed basis vectors, then random ones.
fn candidate_directions(n: usize, samples: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let mut dirs = Vec::with_capacity(samples + n);
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        dirs.push(e);
    }
    dirs.extend((0..samples).map(|_| unit_direction(rng, n)));
    dirs
}

/// Maximize `objective` over coefficient directions by compass search from the
/// best of `starts` (directions need not be normalized: objectives are
/// homogeneous of degree zero).
fn maximize_direction(objective: &(dyn Fn(&[f64]) -> f64 + Sync), starts: &[Vec<f64>]) -> f64 {
    let values: Vec<f64> = starts.par_iter().map(|c| objective(c)).collect();
    let (best_idx, &best) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("at least one start");
    let mut x = starts[best_idx].clone();
    let mut fx = best;
    let n = x.len();
    if n == 1 {
        return fx;
    }
    let mut step = 0.25;
    while step > 1e-7 {
        let mut improved = false;
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] += sign * step;
                let fy = objective(&y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    fx
}

/// `ϑ = sup |v|_∞ / ‖v‖` over `X_n`, from sampling plus local refinement.
pub fn equivalence_constant(model: &EnergyModel, basis: &SubspaceBasis, samples: usize, rng: &mut SeededRng) -> f64 {
    let ratio = |c: &[f64]| {
        let v = basis.combine(c);
        let norm = model.e_norm(&v);
        if norm == 0.0 { 0.0 } else { v.max_abs() / norm }
    };
    maximize_direction(&ratio, &candidate_directions(basis.level, samples, rng))
}

/// `(A, B)`: inf of `∫k|φ|^q` and (inflated) sup of `∫h|φ|^s` over the unit sphere of `X_n`.
pub fn compute_a_b(model: &EnergyModel, basis: &SubspaceBasis, samples: usize, rng: &mut SeededRng) -> Result<(f64, f64)> {
    let (q, s) = (model.problem().q, model.problem().s);
    let grid = model.grid();
    let integral = |c: &[f64], weight: &[f64], p: f64| {
        let v = basis.combine(c);
        let norm = model.e_norm(&v);
        if norm == 0.0 {
            return 0.0;
        }
        let vals: Vec<f64> = v.iter().zip(weight).map(|(x, w)| w * (x / norm).abs().powf(p)).collect();
        grid.integrate(&vals)
    };
    let starts = candidate_directions(basis.level, samples, rng);
    let a = -maximize_direction(&|c| -integral(c, model.k_values(), q), &starts);
    let b = if model.problem().h.is_zero() {
        0.0
    } else {
        B_INFLATION * maximize_direction(&|c| integral(c, model.h_values(), s), &starts)
    };
    if !(a > A_FLOOR) {
        return Err(Error::DegenerateSubspace { level: basis.level, a });
    }
    Ok((a, b))
}

/// `θ(ρ) = ½ρ² − A ρ^q / (2^q q) + B ρ^s / s`.
pub fn theta_of_rho(rho: f64, a: f64, b: f64, q: f64, s: f64) -> f64 {
    0.5 * rho * rho - a / (2f64.powf(q) * q) * rho.powf(q) + b / s * rho.powf(s)
}

fn theta_prime(rho: f64, a: f64, b: f64, q: f64, s: f64) -> f64 {
    rho - a / 2f64.powf(q) * rho.powf(q - 1.0) + b * rho.powf(s - 1.0)
}

fn theta_second(rho: f64, a: f64, b: f64, q: f64, s: f64) -> f64 {
    1.0 - a * (q - 1.0) / 2f64.powf(q) * rho.powf(q - 2.0) + b * (s - 1.0) * rho.powf(s - 2.0)
}

/// Minimizer of `θ` over `(0, δ/ϑ]`.
///
/// Golden-section search on a log scale brackets the minimizer, then a
/// safeguarded Newton iteration on `θ'` polishes it. `θ < 0` near zero because
/// `q < 2`, so the result always has `θ(ρ) < 0`.
pub fn find_rho(a: f64, b: f64, vartheta: f64, delta: f64, q: f64, s: f64) -> Result<f64> {
    if !(a > 0.0 && b >= 0.0 && vartheta > 0.0 && delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "find_rho needs A > 0, B >= 0, vartheta > 0, delta in (0,1); got {a}, {b}, {vartheta}, {delta}"
        )));
    }
    let rho_max = delta / vartheta;
    if theta_prime(rho_max, a, b, q, s) <= 0.0 {
        return Ok(rho_max);
    }
    let theta = |x: f64| theta_of_rho(x, a, b, q, s);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = ((rho_max * 1e-30).ln(), rho_max.ln());
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (theta(x1.exp()), theta(x2.exp()));
    for _ in 0..200 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = theta(x1.exp());
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = theta(x2.exp());
        }
        if hi - lo < 1e-6 {
            break;
        }
    }
    let (mut left, mut right) = (lo.exp(), hi.exp().min(rho_max));
    // Widen until θ' changes sign across the bracket.
    while theta_prime(left, a, b, q, s) > 0.0 {
        left *= 0.5;
    }
    while theta_prime(right, a, b, q, s) < 0.0 && right < rho_max {
        right = (right * 2.0).min(rho_max);
    }
    let mut x = 0.5 * (left + right);
    for _ in 0..100 {
        let g = theta_prime(x, a, b, q, s);
        if g < 0.0 {
            left = x;
        } else {
            right = x;
        }
        if g == 0.0 {
            break;
        }
        let newton = x - g / theta_second(x, a, b, q, s);
        if newton >= left && newton <= right {
            let converged = (newton - x).abs() <= 1e-15 * x;
            x = newton;
            if converged {
                break;
            }
        } else {
            x = 0.5 * (left + right);
        }
        if right - left <= 1e-15 * right {
            break;
        }
    }
    Ok(x)
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelCertificate {
    pub level: usize,
    pub vartheta: f64,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub rho: f64,
    pub theta: f64,
    pub max_phi_sampled: Option<f64>,
    pub sphere_samples: Option<usize>,
}

/// `ϑ`, `A`, `B`, `ρ_n` and `θ_n` for one subspace.
pub fn certify_level(model: &EnergyModel, basis: &SubspaceBasis, samples: usize, rng: &mut SeededRng) -> Result<LevelCertificate> {
    let (q, s) = (model.problem().q, model.problem().s);
    let delta = model.transform().delta();
    let vartheta = equivalence_constant(model, basis, samples, rng);
    let (a, b) = compute_a_b(model, basis, samples, rng)?;
    let rho = find_rho(a, b, vartheta, delta, q, s)?;
    Ok(LevelCertificate {
        level: basis.level,
        vartheta,
        a,
        b,
        delta,
        rho,
        theta: theta_of_rho(rho, a, b, q, s),
        max_phi_sampled: None,
        sphere_samples: None,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SphereReport {
    pub level: usize,
    pub rho: f64,
    pub theta: f64,
    pub samples: usize,
    pub max_phi: f64,
    /// Samples with `Φ >= 0`.
    pub nonnegative: usize,
    /// Largest `Φ(v) − [½‖v‖_D² − ∫k|v|^q/(2^q q) + ∫h|v|^s/s]`; must be `<= 0`.
    pub chain_excess: f64,
    /// Largest `|v|_∞ / δ` over the samples; must be `<= 1`.
    pub sup_over_delta: f64,
}

impl SphereReport {
    pub fn passed(&self) -> bool {
        self.nonnegative == 0 && self.max_phi < 0.0 && self.max_phi <= self.theta + SPHERE_SLACK && self.chain_excess <= 1e-12 && self.sup_over_delta <= 1.0
    }
}

/// Sample `X_n ∩ S_ρ` and evaluate `Φ` together with the intermediate bound.
pub fn verify_sphere_negative(
    model: &EnergyModel,
    basis: &SubspaceBasis,
    rho: f64,
    theta: f64,
    samples: usize,
    rng: &mut SeededRng,
) -> Result<SphereReport> {
    let (q, s) = (model.problem().q, model.problem().s);
    let grid = model.grid();
    let delta = model.transform().delta();
    let dirs = candidate_directions(basis.level, samples, rng);
    let evaluated = dirs
        .par_iter()
        .map(|c| -> Result<(f64, f64, f64)> {
            let v = basis.sphere_point(model, c, rho);
            let phi = model.phi(&v)?.total;
            let d = model.d_norm(&v);
            let kv: Vec<f64> = v.iter().zip(model.k_values()).map(|(x, k)| k * x.abs().powf(q)).collect();
            let hv: Vec<f64> = v.iter().zip(model.h_values()).map(|(x, h)| h * x.abs().powf(s)).collect();
            let bound = 0.5 * d * d - grid.integrate(&kv) / (2f64.powf(q) * q) + grid.integrate(&hv) / s;
            Ok((phi, phi - bound, v.max_abs() / delta))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = SphereReport {
        level: basis.level,
        rho,
        theta,
        samples: evaluated.len(),
        max_phi: f64::NEG_INFINITY,
        nonnegative: 0,
        chain_excess: f64::NEG_INFINITY,
        sup_over_delta: 0.0,
    };
    for (phi, excess, ratio) in evaluated {
        report.max_phi = report.max_phi.max(phi);
        report.chain_excess = report.chain_excess.max(excess);
        report.sup_over_delta = report.sup_over_delta.max(ratio);
        if phi >= 0.0 {
            report.nonnegative += 1;
        }
    }
    if report.nonnegative > 0 {
        return Err(Error::GeometryViolation { level: basis.level, phi: report.max_phi });
    }
    Ok(report)
}

/// Full certificate for one level: constants plus the sphere check.
pub fn certify_and_verify(model: &EnergyModel, level: usize, samples: usize, rng: &mut SeededRng) -> Result<(LevelCertificate, SphereReport)> {
    let basis = build_subspace(model, level)?;
    let mut cert = certify_level(model, &basis, samples, rng)?;
    let sphere = verify_sphere_negative(model, &basis, cert.rho, cert.theta, samples, rng)?;
    cert.max_phi_sampled = Some(sphere.max_phi);
    cert.sphere_samples = Some(sphere.samples);
    Ok((cert, sphere))
}

/// `|v|_p` by quadrature over the ball.
pub fn lp_norm(model: &EnergyModel, v: &[f64], p: f64) -> f64 {
    let vals: Vec<f64> = v.iter().map(|x| x.abs().powf(p)).collect();
    model.grid().integrate(&vals).powf(1.0 / p)
}

/// Grid-measured constant `ℓ` with `|v|_{2*} <= ℓ ‖v‖_D`: the largest ratio over
/// random smooth fields, times [`EMBEDDING_MARGIN`].
pub fn embedding_constant(model: &EnergyModel, samples: usize, rng: &mut SeededRng) -> f64 {
    let p = model.problem().sobolev_exponent();
    (0..samples)
        .map(|_| {
            let v = random_field(model.grid(), rng, 1.0);
            lp_norm(model, &v, p) / model.d_norm(&v)
        })
        .fold(0.0, f64::max)
        * EMBEDDING_MARGIN
}

#[derive(Debug, Clone, Serialize)]
pub struct RayTrace {
    pub direction: usize,
    pub t: Vec<f64>,
    pub phi: Vec<f64>,
    pub lower_bound: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RayReport {
    pub embedding_constant: f64,
    pub k_lq0_norm: f64,
    pub rays: Vec<RayTrace>,
}

/// Follow `Φ(t w)` along each unit direction `w` and check that it is positive
/// and increasing for `t >= 100` and above the coercivity lower bound
/// `½‖tw‖_D² − (ℓ^q/q)|k|_{q0}‖tw‖_D^q`.
pub fn coercivity_ray_check(model: &EnergyModel, directions: &[Field], t_schedule: &[f64], embedding: f64) -> Result<RayReport> {
    let q = model.problem().q;
    let q0 = compute_q0(q, model.problem().dim)?;
    let k_norm = lp_norm(model, model.k_values(), q0);
    if !t_schedule.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidParameter("t_schedule must be increasing".into()));
    }
    let mut rays = Vec::with_capacity(directions.len());
    for (index, w) in directions.iter().enumerate() {
        let d = model.d_norm(w);
        let mut trace = RayTrace { direction: index, t: t_schedule.to_vec(), phi: Vec::new(), lower_bound: Vec::new() };
        for &t in t_schedule {
            let phi = model.phi(&w.scaled(t))?.total;
            let td = t * d;
            let bound = 0.5 * td * td - embedding.powf(q) / q * k_norm * td.powf(q);
            if phi < bound - 1e-12 * bound.abs().max(1.0) {
                return Err(Error::CoercivityViolation {
                    direction: index,
                    detail: format!("phi({t} w) = {phi} below the lower bound {bound}"),
                });
            }
            trace.phi.push(phi);
            trace.lower_bound.push(bound);
        }
        let tail: Vec<f64> = t_schedule
            .iter()
            .zip(&trace.phi)
            .filter(|(t, _)| **t >= 100.0)
            .map(|(_, p)| *p)
            .collect();
        if !tail.windows(2).all(|p| p[0] < p[1]) {
            return Err(Error::CoercivityViolation { direction: index, detail: "phi not increasing for t >= 100".into() });
        }
        if let Some(&last) = trace.phi.last() {
            if !(last > 0.0) {
                return Err(Error::CoercivityViolation { direction: index, detail: format!("final value {last} is not positive") });
            }
        }
        rays.push(trace);
    }
    Ok(RayReport { embedding_constant: embedding, k_lq0_norm: k_norm, rays })
}

/// Random smooth fields normalized to unit `E`-norm.
pub fn unit_directions(model: &EnergyModel, count: usize, rng: &mut SeededRng) -> Vec<Field> {
    (0..count)
        .map(|_| {
            let v = random_field(model.grid(), rng, 1.0);
            let norm = model.e_norm(&v);
            v.scaled(1.0 / norm)
        })
        .collect()
}
