use std::f64::consts::PI;

use dualvar::rng::{random_field, seeded};
use dualvar::transform::{antiderivative, ode_oracle};
use dualvar::{make_grid, EnergyModel, ProblemSpec, TransformEvaluator};
use proptest::prelude::*;

fn model(m: usize) -> EnergyModel {
    EnergyModel::new(ProblemSpec::default(), make_grid(20.0, m, 3, 1.01).unwrap(), TransformEvaluator::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn transform_bounds(t in -1e4f64..1e4) {
        let te = TransformEvaluator::default();
        let f = te.eval_f(t).unwrap();
        let fp = te.eval_f_prime(t).unwrap();
        prop_assert!(f.abs() <= t.abs() + 1e-10);
        prop_assert!(f.abs() <= 2f64.powf(0.25) * t.abs().sqrt() + 1e-10);
        prop_assert!(fp > 0.0 && fp <= 1.0);
        prop_assert!((f * fp).abs() <= 1.0 + 1e-10);
        prop_assert!(f * f - f * fp * t >= -1e-10 * (1.0 + f * f));
        prop_assert!(f * fp * t - 0.5 * f * f >= -1e-10 * (1.0 + f * f));
        prop_assert_eq!(te.eval_f(-t).unwrap(), -f);
        prop_assert!((antiderivative(f) - t).abs() <= 1e-12 * t.abs().max(1.0));
    }

    #[test]
    fn transform_is_strictly_increasing(a in -100f64..100.0, gap in 1e-6f64..10.0) {
        let te = TransformEvaluator::default();
        prop_assert!(te.eval_f(a + gap).unwrap() > te.eval_f(a).unwrap());
    }

    #[test]
    fn transform_matches_rk4(t in 0f64..20.0) {
        let te = TransformEvaluator::default();
        prop_assert!((te.eval_f(t).unwrap() - ode_oracle(t, 1e-3)).abs() <= 1e-8);
    }

    #[test]
    fn energy_is_even_and_reflection_never_raises_it(seed in any::<u64>(), amplitude in 1e-3f64..5.0) {
        let model = model(100);
        let v = random_field(model.grid(), &mut seeded(seed), amplitude);
        let phi = model.phi(&v).unwrap().total;
        let minus = model.phi(&v.scaled(-1.0)).unwrap().total;
        prop_assert!((phi - minus).abs() <= 1e-14 * (1.0 + phi.abs()));
        let reflected = model.phi(&v.abs()).unwrap().total;
        prop_assert!(reflected <= phi + 1e-14 * (1.0 + phi.abs()));
        let j = model.j_energy(&model.recover_u(&v).unwrap());
        prop_assert!((phi - j).abs() <= 1e-8 * (1.0 + phi.abs()));
    }

    #[test]
    fn norms_are_homogeneous(seed in any::<u64>(), c in 0.1f64..10.0) {
        let model = model(100);
        let v = random_field(model.grid(), &mut seeded(seed), 1.0);
        let d = model.d_norm(&v);
        prop_assert!((model.d_norm(&v.scaled(c)) - c * d).abs() <= 1e-12 * c * d);
        let e = model.e_norm(&v);
        prop_assert!(e >= d);
        prop_assert!((model.e_norm(&v.scaled(c)) - c * e).abs() <= 1e-12 * c * e);
    }
}

/// `∫_a^b g` by composite 8-point Gauss–Legendre.
fn gauss_legendre(g: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
    const W: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (x, w) in X.iter().zip(W) {
            acc += w * (g(mid - 0.5 * h * x) + g(mid + 0.5 * h * x));
        }
    }
    acc * 0.5 * h
}

#[test]
fn energy_converges_to_quadrature_oracle() {
    // v = a exp(-r²/2) on R³; the oracle integrates the radial densities directly.
    let a = 0.8;
    let spec = ProblemSpec::default();
    let te = TransformEvaluator::default();
    let (q, s) = (spec.q, spec.s);
    let density = |r: f64| {
        let v = a * (-0.5 * r * r).exp();
        let dv = -r * v;
        let f = ode_oracle(v, 1e-4);
        4.0 * PI * r * r * (0.5 * dv * dv - spec.eval_k(r) * f.powf(q) / q + spec.eval_h(r) * f.powf(s) / s)
    };
    let exact = gauss_legendre(density, 0.0, 12.0, 60);

    let err = |m: usize| {
        let grid = make_grid(20.0, m, 3, 1.01).unwrap();
        let model = EnergyModel::new(spec.clone(), grid, te.clone()).unwrap();
        let v = model.grid().field_from_fn(|r| a * (-0.5 * r * r).exp());
        (model.phi(&v).unwrap().total - exact).abs() / exact.abs()
    };
    let (coarse, fine) = (err(200), err(400));
    assert!(fine < 1e-3, "relative error {fine}");
    assert!(coarse / fine > 3.0, "refinement ratio {}", coarse / fine);
}
