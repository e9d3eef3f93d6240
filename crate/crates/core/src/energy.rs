//! Discrete transformed energy
//! `Φ(v) = ½∫|∇v|² − (1/q)∫k|f(v)|^q + (1/s)∫h|f(v)|^s`,
//! its gradient, the original energy `J` and the norm of the working space.

use serde::Serialize;

use crate::error::Result;
use crate::grid::{Field, RadialGrid};
use crate::problem::ProblemSpec;
use crate::transform::{antiderivative, TransformEvaluator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    /// `½∫|∇v|²`
    pub dirichlet_term: f64,
    /// `(1/q)∫k|f(v)|^q`
    pub concave_term: f64,
    /// `(1/s)∫h|f(v)|^s`
    pub convex_term: f64,
    pub total: f64,
}

/// `sign(x) |x|^p`, exactly zero at `x = 0` for every `p`.
#[inline]
fn signed_pow(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(p)
    }
}

/// Problem, grid and transform bundled with the sampled coefficients.
///
/// All methods are pure; the model can be shared across threads.
#[derive(Debug, Clone)]
pub struct EnergyModel {
    problem: ProblemSpec,
    grid: RadialGrid,
    transform: TransformEvaluator,
    k: Vec<f64>,
    h: Vec<f64>,
}

impl EnergyModel {
    pub fn new(problem: ProblemSpec, grid: RadialGrid, transform: TransformEvaluator) -> Result<Self> {
        problem.validate()?;
        if problem.dim != grid.dim() {
            return Err(crate::Error::InvalidParameter(format!(
                "problem dimension {} does not match grid dimension {}",
                problem.dim,
                grid.dim()
            )));
        }
        let k = grid.nodes().iter().map(|&r| problem.eval_k(r)).collect();
        let h = grid.nodes().iter().map(|&r| problem.eval_h(r)).collect();
        Ok(Self { problem, grid, transform, k, h })
    }

    /// Same problem and transform on another grid.
    pub fn with_grid(&self, grid: RadialGrid) -> Result<Self> {
        Self::new(self.problem.clone(), grid, self.transform.clone())
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn transform(&self) -> &TransformEvaluator {
        &self.transform
    }

    pub fn k_values(&self) -> &[f64] {
        &self.k
    }

    pub fn h_values(&self) -> &[f64] {
        &self.h
    }

    /// `u = f(v)` nodewise.
    pub fn recover_u(&self, v: &[f64]) -> Result<Field> {
        Ok(Field::new(self.transform.eval_f_batch(v)?))
    }

    pub fn phi(&self, v: &[f64]) -> Result<EnergyBreakdown> {
        let u = self.recover_u(v)?;
        Ok(self.breakdown(v, &u))
    }

    fn breakdown(&self, v: &[f64], u: &[f64]) -> EnergyBreakdown {
        let (q, s) = (self.problem.q, self.problem.s);
        let w = self.grid.weights();
        let mut concave = 0.0;
        let mut convex = 0.0;
        for i in 0..u.len() {
            let a = u[i].abs();
            concave += w[i] * self.k[i] * a.powf(q);
            convex += w[i] * self.h[i] * a.powf(s);
        }
        let dirichlet_term = 0.5 * self.grid.dirichlet_form(v, v);
        let concave_term = concave / q;
        let convex_term = convex / s;
        EnergyBreakdown {
            dirichlet_term,
            concave_term,
            convex_term,
            total: dirichlet_term - concave_term + convex_term,
        }
    }

    /// Energy and partial derivatives `∂Φ/∂v_i` (zero at pinned nodes).
    pub fn phi_and_partials(&self, v: &[f64]) -> Result<(EnergyBreakdown, Vec<f64>)> {
        let u = self.recover_u(v)?;
        let breakdown = self.breakdown(v, &u);
        let (q, s) = (self.problem.q, self.problem.s);
        let w = self.grid.weights();
        let mut partials = self.grid.stiffness_apply(v);
        for i in 0..u.len() {
            let fp = 1.0 / (1.0 + 2.0 * u[i] * u[i]).sqrt();
            let nonlinear = -self.k[i] * signed_pow(u[i], q - 1.0) + self.h[i] * signed_pow(u[i], s - 1.0);
            partials[i] += w[i] * nonlinear * fp;
        }
        self.grid.project(&mut partials);
        Ok((breakdown, partials))
    }

    /// Gradient with respect to the quadrature inner product:
    /// `Σ w_i g_i ξ_i` is the directional derivative of `Φ` along `ξ`.
    pub fn grad_phi(&self, v: &[f64]) -> Result<Field> {
        let (_, partials) = self.phi_and_partials(v)?;
        Ok(self.weighted(&partials))
    }

    pub(crate) fn weighted(&self, partials: &[f64]) -> Field {
        Field::new(partials.iter().zip(self.grid.weights()).map(|(p, w)| p / w).collect())
    }

    /// `J(u) = ½∫(1+2u²)|∇u|² − (1/q)∫k|u|^q + (1/s)∫h|u|^s`.
    ///
    /// The gradient term is discretized as `½∫|∇F(u)|²` with the same face fluxes
    /// as the Dirichlet integral, since `(1+2u²)|∇u|² = |∇F(u)|²` pointwise.
    pub fn j_energy(&self, u: &[f64]) -> f64 {
        let lifted: Vec<f64> = u.iter().map(|&x| antiderivative(x)).collect();
        let (q, s) = (self.problem.q, self.problem.s);
        let gradient_term = 0.5 * self.grid.dirichlet_form(&lifted, &lifted);
        let concave: f64 = (0..u.len()).map(|i| self.grid.weights()[i] * self.k[i] * u[i].abs().powf(q)).sum();
        let convex: f64 = (0..u.len()).map(|i| self.grid.weights()[i] * self.h[i] * u[i].abs().powf(s)).sum();
        gradient_term - concave / q + convex / s
    }

    /// `‖v‖_D = (∫|∇v|²)^{1/2}`.
    pub fn d_norm(&self, v: &[f64]) -> f64 {
        self.grid.dirichlet_form(v, v).sqrt()
    }

    /// `(∫h|v|^{s/2})^{2/s}`.
    pub fn h_seminorm(&self, v: &[f64]) -> f64 {
        let s = self.problem.s;
        let integral: f64 = v
            .iter()
            .zip(&self.h)
            .zip(self.grid.weights())
            .map(|((x, h), w)| w * h * x.abs().powf(0.5 * s))
            .sum();
        integral.powf(2.0 / s)
    }

    /// `‖v‖ = ‖v‖_D + (∫h|v|^{s/2})^{2/s}`.
    pub fn e_norm(&self, v: &[f64]) -> f64 {
        self.d_norm(v) + self.h_seminorm(v)
    }

    /// `(∫k|f(v)|^q, ∫h|f(v)|^s)`.
    pub fn weighted_terms(&self, v: &[f64]) -> Result<(f64, f64)> {
        let b = self.phi(v)?;
        Ok((b.concave_term * self.problem.q, b.convex_term * self.problem.s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, Boundary};
    use crate::problem::Coefficient;
    use crate::rng::{random_field, seeded};

    fn model(m: usize) -> EnergyModel {
        EnergyModel::new(
            ProblemSpec::default(),
            make_grid(20.0, m, 3, 1.01).unwrap(),
            TransformEvaluator::default(),
        )
        .unwrap()
    }

    #[test]
    fn zero_field() {
        let model = model(200);
        let zero = model.grid().zeros();
        let b = model.phi(&zero).unwrap();
        assert_eq!(b.total, 0.0);
        assert_eq!(b.dirichlet_term + b.concave_term + b.convex_term, 0.0);
        assert_eq!(model.grad_phi(&zero).unwrap().max_abs(), 0.0);
        assert_eq!(model.j_energy(&zero), 0.0);
        assert_eq!(model.e_norm(&zero), 0.0);
        assert_eq!(model.weighted_terms(&zero).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn breakdown_consistency_and_evenness() {
        let model = model(200);
        let mut rng = seeded(7);
        for _ in 0..20 {
            let v = random_field(model.grid(), &mut rng, 2.0);
            let b = model.phi(&v).unwrap();
            assert!(b.dirichlet_term >= 0.0 && b.concave_term >= 0.0 && b.convex_term >= 0.0);
            assert!((b.total - (b.dirichlet_term - b.concave_term + b.convex_term)).abs() < 1e-12);
            let neg = model.phi(&v.scaled(-1.0)).unwrap();
            assert!((neg.total - b.total).abs() <= 1e-12 * (1.0 + b.total.abs()));
            // Reflection never raises the discrete energy.
            let reflected = model.phi(&v.abs()).unwrap();
            assert!(reflected.total <= b.total + 1e-12 * (1.0 + b.total.abs()));
        }
    }

    #[test]
    fn reflection_identity_on_signed_fields() {
        let model = model(200);
        let v = model.grid().field_from_fn(|r| 0.3 * (-r * r / 4.0).exp());
        let a = model.phi(&v).unwrap().total;
        let b = model.phi(&v.scaled(-1.0).abs()).unwrap().total;
        assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn without_weights_only_dirichlet_remains() {
        let problem = ProblemSpec { k: Coefficient::gaussian(1e-300, 1.0), h: Coefficient::zero(), ..ProblemSpec::default() };
        let model = EnergyModel::new(problem, make_grid(10.0, 100, 3, 1.0).unwrap(), TransformEvaluator::default()).unwrap();
        let mut rng = seeded(3);
        let v = random_field(model.grid(), &mut rng, 1.0);
        let b = model.phi(&v).unwrap();
        let d = model.d_norm(&v);
        assert!((b.total - 0.5 * d * d).abs() < 1e-12);
        assert!(model.j_energy(&model.recover_u(&v).unwrap()) >= 0.0);
    }

    #[test]
    fn energy_identity() {
        let model = model(200);
        let mut rng = seeded(11);
        for _ in 0..100 {
            let v = random_field(model.grid(), &mut rng, 5.0);
            let phi = model.phi(&v).unwrap().total;
            let j = model.j_energy(&model.recover_u(&v).unwrap());
            assert!((phi - j).abs() <= 1e-8 * (1.0 + phi.abs()), "{phi} vs {j}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let model = model(200);
        let mut rng = seeded(5);
        // Positive base point: the concave term is not C² where v changes sign.
        let v = random_field(model.grid(), &mut rng, 1.0).abs().axpy(1.0, &model.grid().field_from_fn(|r| 0.2 * (-r * r / 50.0).exp()));
        let g = model.grad_phi(&v).unwrap();
        for _ in 0..20 {
            let xi = random_field(model.grid(), &mut rng, 1.0);
            let analytic = model.grid().inner(&g, &xi);
            let step = 1e-6;
            let plus = model.phi(&v.axpy(step, &xi)).unwrap().total;
            let minus = model.phi(&v.axpy(-step, &xi)).unwrap().total;
            let fd = (plus - minus) / (2.0 * step);
            assert!(((fd - analytic) / analytic).abs() < 1e-6, "{fd} vs {analytic}");
        }
    }

    #[test]
    fn dirichlet_boundary_gradient_pins_last_node() {
        let grid = make_grid(20.0, 100, 3, 1.01).unwrap().with_boundary(Boundary::Dirichlet).unwrap();
        let model = EnergyModel::new(ProblemSpec::default(), grid, TransformEvaluator::default()).unwrap();
        let v = model.grid().field_from_fn(|r| 0.2 * (-r / 3.0).exp());
        assert_eq!(v[99], 0.0);
        assert_eq!(model.grad_phi(&v).unwrap()[99], 0.0);
    }

    #[test]
    fn norms() {
        let model = model(200);
        let mut rng = seeded(9);
        for _ in 0..10 {
            let v = random_field(model.grid(), &mut rng, 3.0);
            let e = model.e_norm(&v);
            assert!(e > 0.0 && e >= model.d_norm(&v));
            for c in [-2.0, 0.5, 3.0] {
                let scaled = model.e_norm(&v.scaled(c));
                assert!((scaled - c.abs() * e).abs() <= 1e-12 * scaled.max(1.0));
            }
        }
        let problem = ProblemSpec { h: Coefficient::zero(), ..ProblemSpec::default() };
        let model = model_with(problem);
        let v = random_field(model.grid(), &mut rng, 3.0);
        assert_eq!(model.e_norm(&v), model.d_norm(&v));
    }

    fn model_with(problem: ProblemSpec) -> EnergyModel {
        EnergyModel::new(problem, make_grid(20.0, 200, 3, 1.01).unwrap(), TransformEvaluator::default()).unwrap()
    }

    #[test]
    fn weighted_term_bounds() {
        let model = model(200);
        let (q, s) = (model.problem().q, model.problem().s);
        let mut rng = seeded(13);
        for _ in 0..20 {
            let v = random_field(model.grid(), &mut rng, 4.0);
            let (kt, ht) = model.weighted_terms(&v).unwrap();
            let k_sup = model.problem().k.amplitude;
            let bound_k = k_sup * model.grid().integrate(&v.map(|x| x.abs().powf(q)));
            assert!(kt <= bound_k * (1.0 + 1e-12));
            let bound_h: f64 = 2f64.powf(s / 4.0)
                * model.grid().integrate(
                    &v.iter().zip(model.h_values()).map(|(x, h)| h * x.abs().powf(s / 2.0)).collect::<Vec<_>>(),
                );
            assert!(ht <= bound_h * (1.0 + 1e-12));
        }
    }
}
