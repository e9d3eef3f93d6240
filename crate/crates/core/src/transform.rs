//! The change of variables `u = f(v)`.
//!
//! `f` solves `f'(t) = 1 / sqrt(1 + 2 f(t)^2)`, `f(0) = 0`, and is extended to
//! negative arguments as an odd function. Its inverse is the closed-form
//! antiderivative `F(u) = ∫_0^u sqrt(1 + 2σ²) dσ`, so `f(t)` is computed by
//! inverting `F` with Newton's method, falling back to bisection.

use serde::Serialize;

use crate::error::{Error, Result};

const FOURTH_ROOT_2: f64 = 1.189_207_115_002_721;

/// Upper end of the sample used to certify the `|t| >= 1` half of the `mu` bound.
pub const MU_SAMPLE_MAX: f64 = 1e6;
/// Relative margin subtracted from the sampled `mu` minimum.
pub const MU_MARGIN: f64 = 1e-6;
/// `delta` is capped at `1 - DELTA_MARGIN` so that it lies in `(0, 1)`.
pub const DELTA_MARGIN: f64 = 1e-6;

/// `F(u) = (u/2) sqrt(1 + 2u²) + asinh(sqrt(2) u) / (2 sqrt(2))`, the inverse of `f`.
pub fn antiderivative(u: f64) -> f64 {
    let s2 = std::f64::consts::SQRT_2;
    0.5 * u * (1.0 + 2.0 * u * u).sqrt() + (s2 * u).asinh() / (2.0 * s2)
}

/// `F'(u) = sqrt(1 + 2u²)`.
pub fn antiderivative_prime(u: f64) -> f64 {
    (1.0 + 2.0 * u * u).sqrt()
}

/// Bound `min(|t|, 2^{1/4} |t|^{1/2})` on `|f(t)|`; also the Newton starting point.
pub fn upper_bound(t: f64) -> f64 {
    let a = t.abs();
    a.min(FOURTH_ROOT_2 * a.sqrt())
}

/// Classical RK4 integration of `y' = 1/sqrt(1 + 2y²)`, `y(0) = 0`, up to `t >= 0`.
///
/// Independent of the Newton inversion; only used to cross-check it.
pub fn ode_oracle(t: f64, step: f64) -> f64 {
    assert!(t >= 0.0 && step > 0.0, "ode_oracle needs t >= 0 and step > 0");
    ode_oracle_path(&[t], step)[0]
}

/// RK4 values at every point of a nondecreasing sequence of nonnegative targets,
/// integrating once along the whole path.
pub fn ode_oracle_path(targets: &[f64], step: f64) -> Vec<f64> {
    assert!(step > 0.0, "step must be positive");
    let rhs = |y: f64| 1.0 / (1.0 + 2.0 * y * y).sqrt();
    let mut out = Vec::with_capacity(targets.len());
    let (mut x, mut y) = (0.0_f64, 0.0_f64);
    for &target in targets {
        assert!(target >= x, "targets must be nonnegative and nondecreasing");
        while x < target {
            // Fold a sliver remainder into the last step instead of taking it separately.
            let remaining = target - x;
            let h = if remaining < step * (1.0 + 1e-3) { remaining } else { step };
            let k1 = rhs(y);
            let k2 = rhs(y + 0.5 * h * k1);
            let k3 = rhs(y + 0.5 * h * k2);
            let k4 = rhs(y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            x = if h == remaining { target } else { x + h };
        }
        out.push(y);
    }
    out
}

/// Evaluator for `f`, `f'` and the constants `mu` and `delta`.
///
/// Immutable after construction; share it freely between threads.
#[derive(Debug, Clone, Serialize)]
pub struct TransformEvaluator {
    newton_tol: f64,
    max_newton_iters: usize,
    mu: f64,
    delta: f64,
}

impl Default for TransformEvaluator {
    fn default() -> Self {
        Self::new(1e-12, 100).expect("default transform settings are valid")
    }
}

impl TransformEvaluator {
    pub fn new(newton_tol: f64, max_newton_iters: usize) -> Result<Self> {
        if !(newton_tol > 0.0 && newton_tol.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "newton_tol must be positive, got {newton_tol}"
            )));
        }
        if max_newton_iters == 0 {
            return Err(Error::InvalidParameter(
                "max_newton_iters must be at least 1".into(),
            ));
        }
        let mut te = Self {
            newton_tol,
            max_newton_iters,
            mu: f64::NAN,
            delta: f64::NAN,
        };
        te.mu = te.estimate_mu()?;
        te.delta = te.estimate_delta()?;
        Ok(te)
    }

    pub fn newton_tol(&self) -> f64 {
        self.newton_tol
    }

    pub fn max_newton_iters(&self) -> usize {
        self.max_newton_iters
    }

    /// `mu` with `|f(t)| >= mu |t|` on `|t| <= 1` and `|f(t)| >= mu |t|^{1/2}` on `|t| >= 1`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `delta` in `(0, 1)` with `|t|/2 <= |f(t)| <= |t|` on `[-delta, delta]`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Residual tolerance on `|F(f(t)) - t|`. Absolute for `|t| <= 1`, relative above,
    /// since `F(f(t))` cannot resolve better than an ulp of `t`.
    fn tolerance_at(&self, t: f64) -> f64 {
        self.newton_tol * t.abs().max(1.0)
    }

    pub fn eval_f(&self, t: f64) -> Result<f64> {
        if !t.is_finite() {
            return Err(Error::InvalidParameter(format!("eval_f needs a finite argument, got {t}")));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let target = t.abs();
        let tol = self.tolerance_at(target);

        // F is convex on [0, inf) and the start is an upper bound on the root, so
        // the Newton iterates decrease monotonically onto it.
        let mut x = upper_bound(target);
        for _ in 0..self.max_newton_iters {
            let residual = antiderivative(x) - target;
            if residual.abs() <= tol {
                // One polishing step; quadratic convergence puts it at rounding level.
                let polished = x - residual / antiderivative_prime(x);
                let x = if (antiderivative(polished) - target).abs() <= residual.abs() {
                    polished
                } else {
                    x
                };
                return Ok(x.copysign(t));
            }
            let next = x - residual / antiderivative_prime(x);
            if !(next > 0.0 && next <= target) {
                break;
            }
            x = next;
        }

        // Bisection on [0, |t|], where F(0) - |t| < 0 <= F(|t|) - |t|.
        let (mut lo, mut hi) = (0.0_f64, target);
        for _ in 0..self.max_newton_iters.max(200) {
            let mid = 0.5 * (lo + hi);
            let residual = antiderivative(mid) - target;
            if residual.abs() <= tol {
                return Ok(mid.copysign(t));
            }
            if residual < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        let mid = 0.5 * (lo + hi);
        let residual = antiderivative(mid) - target;
        if residual.abs() <= tol {
            Ok(mid.copysign(t))
        } else {
            Err(Error::TransformNotConverged { t, residual })
        }
    }

    pub fn eval_f_prime(&self, t: f64) -> Result<f64> {
        let f = self.eval_f(t)?;
        Ok(1.0 / (1.0 + 2.0 * f * f).sqrt())
    }

    pub fn eval_f_batch(&self, ts: &[f64]) -> Result<Vec<f64>> {
        ts.iter()
            .enumerate()
            .map(|(index, &t)| {
                self.eval_f(t).map_err(|e| Error::BatchElement {
                    index,
                    source: Box::new(e),
                })
            })
            .collect()
    }

    /// Certified sample estimate of `mu`.
    ///
    /// `f(t)/t` is sampled on a log grid of `(0, 1]` and `f(t)/sqrt(t)` on a log
    /// grid of `[1, MU_SAMPLE_MAX]`; the smaller minimum, reduced by `MU_MARGIN`,
    /// is then re-checked on a staggered grid and lowered if a point fails.
    pub fn estimate_mu(&self) -> Result<f64> {
        let ratio = |t: f64| -> Result<f64> {
            let f = self.eval_f(t)?;
            Ok(if t <= 1.0 { f / t } else { f / t.sqrt() })
        };
        let sample = |count: usize, offset: f64| -> Result<f64> {
            let mut lowest = ratio(1.0)?;
            // (0, 1] on [1e-8, 1] and [1, T] on [0, log10 T], both log-spaced.
            let decades = MU_SAMPLE_MAX.log10();
            for i in 0..count {
                let x = (i as f64 + offset) / count as f64;
                lowest = lowest.min(ratio(10f64.powf(-8.0 * (1.0 - x)))?);
                lowest = lowest.min(ratio(10f64.powf(decades * x).min(MU_SAMPLE_MAX))?);
            }
            Ok(lowest)
        };
        let mut mu = sample(20_000, 1.0)? * (1.0 - MU_MARGIN);
        let fresh = sample(10_000, 0.5)?;
        if fresh < mu {
            mu = fresh * (1.0 - MU_MARGIN);
        }
        Ok(mu)
    }

    /// `delta = min(delta*, 1 - DELTA_MARGIN)` where `f(delta*) = delta*/2`.
    pub fn estimate_delta(&self) -> Result<f64> {
        let g = |t: f64| -> Result<f64> { Ok(self.eval_f(t)? - 0.5 * t) };
        // g > 0 near 0 (f'(0) = 1) and g < 0 for large t (f grows like sqrt(t)).
        let (mut lo, mut hi) = (1e-3_f64, 1.0_f64);
        while g(hi)? > 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
        }
        let mut delta = lo.min(1.0 - DELTA_MARGIN);
        // Dense check of f(t) >= t/2 on (0, delta].
        for i in 1..=10_000 {
            let t = delta * i as f64 / 10_000.0;
            if g(t)? < 0.0 {
                delta = t * (1.0 - DELTA_MARGIN);
                break;
            }
        }
        Ok(delta)
    }
}
