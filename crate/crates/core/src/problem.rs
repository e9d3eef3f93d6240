//! Problem data: dimension, exponents and the radial coefficient families for
//! the concave weight `k` and the convex weight `h`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientKind {
    /// `amplitude * exp(-decay * r^2)`
    Gaussian,
    /// `amplitude * (1 + r^2)^(-decay)`
    Algebraic,
}

impl std::str::FromStr for CoefficientKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Self::Gaussian),
            "algebraic" => Ok(Self::Algebraic),
            other => Err(format!("unknown coefficient kind `{other}` (expected gaussian or algebraic)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub kind: CoefficientKind,
    pub amplitude: f64,
    pub decay: f64,
}

impl Coefficient {
    pub fn gaussian(amplitude: f64, decay: f64) -> Self {
        Self { kind: CoefficientKind::Gaussian, amplitude, decay }
    }

    pub fn algebraic(amplitude: f64, decay: f64) -> Self {
        Self { kind: CoefficientKind::Algebraic, amplitude, decay }
    }

    pub fn zero() -> Self {
        Self::gaussian(0.0, 1.0)
    }

    pub fn eval(&self, r: f64) -> f64 {
        match self.kind {
            CoefficientKind::Gaussian => self.amplitude * (-self.decay * r * r).exp(),
            CoefficientKind::Algebraic => self.amplitude * (1.0 + r * r).powf(-self.decay),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0
    }

    /// Radius beyond which the coefficient has dropped below `fraction` of its peak.
    pub fn effective_radius(&self, fraction: f64) -> f64 {
        let ln = -fraction.ln();
        match self.kind {
            CoefficientKind::Gaussian => (ln / self.decay).sqrt(),
            CoefficientKind::Algebraic => ((ln / self.decay).exp() - 1.0).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub dim: usize,
    /// Concave exponent, `1 < q < 2`.
    pub q: f64,
    /// Convex exponent, `s > 2`.
    pub s: f64,
    pub k: Coefficient,
    pub h: Coefficient,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self {
            dim: 3,
            q: 1.5,
            s: 14.0,
            k: Coefficient::gaussian(1.0, 1.0),
            h: Coefficient::gaussian(1.0, 1.0),
        }
    }
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.dim < 3 {
            return bad(format!("dimension must be at least 3, got {}", self.dim));
        }
        if !(self.q > 1.0 && self.q < 2.0) {
            return bad(format!("q must lie in (1, 2), got {}", self.q));
        }
        if !(self.s > 2.0 && self.s.is_finite()) {
            return bad(format!("s must be finite and greater than 2, got {}", self.s));
        }
        for (name, c) in [("k", &self.k), ("h", &self.h)] {
            if !(c.amplitude >= 0.0 && c.amplitude.is_finite()) {
                return bad(format!("{name}.amplitude must be finite and nonnegative"));
            }
            if !(c.decay >= 0.0 && c.decay.is_finite()) {
                return bad(format!("{name}.decay must be finite and nonnegative"));
            }
        }
        if self.k.is_zero() {
            return bad("k must not vanish identically".into());
        }
        Ok(())
    }

    pub fn eval_k(&self, r: f64) -> f64 {
        self.k.eval(r)
    }

    pub fn eval_h(&self, r: f64) -> f64 {
        self.h.eval(r)
    }

    /// Sobolev exponent `2* = 2N/(N-2)`.
    pub fn sobolev_exponent(&self) -> f64 {
        sobolev_exponent(self.dim)
    }

    /// `s > 2 * 2*`.
    pub fn supercritical(&self) -> bool {
        self.s > 2.0 * self.sobolev_exponent()
    }
}

pub fn sobolev_exponent(dim: usize) -> f64 {
    let n = dim as f64;
    2.0 * n / (n - 2.0)
}

/// `p_0 = 2N / (2N - p(N-2))`.
pub fn compute_q0(p: f64, dim: usize) -> Result<f64> {
    let n = dim as f64;
    let denominator = 2.0 * n - p * (n - 2.0);
    if denominator <= 0.0 || p <= 1.0 || dim < 3 {
        return Err(Error::InvalidExponent { p, dim, denominator });
    }
    Ok(2.0 * n / denominator)
}

/// Hölder conjugate `p' = p/(p-1)`.
pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    /// Positive when the condition holds with room to spare.
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub q0: f64,
    pub critical_exponent: f64,
    pub supercritical: bool,
    pub checks: Vec<HypothesisCheck>,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Integrability hypotheses on `k` and `h`, decided in closed form for the two
/// radial families: `k` in `L^{q0} ∩ L^inf`, `h` in `L^1 ∩ L^inf`, both nonnegative.
pub fn check_hypotheses(spec: &ProblemSpec) -> Result<HypothesisReport> {
    let q0 = compute_q0(spec.q, spec.dim)?;
    let n = spec.dim as f64;
    let mut checks = Vec::new();

    let integrable = |c: &Coefficient, power: f64| -> (bool, f64, String) {
        if c.is_zero() {
            return (true, f64::MAX, "identically zero".into());
        }
        match c.kind {
            CoefficientKind::Gaussian => (
                c.decay > 0.0,
                c.decay,
                format!("gaussian with decay {}", c.decay),
            ),
            CoefficientKind::Algebraic => {
                // |c|^p ~ r^{-2 decay p}; integrable on R^N iff 2 decay p > N.
                let margin = 2.0 * c.decay * power - n;
                (margin > 0.0, margin, format!("2*decay*{power} - N = {margin}"))
            }
        }
    };

    let (passed, margin, detail) = integrable(&spec.k, q0);
    checks.push(HypothesisCheck { name: "k in L^q0".into(), passed, margin, detail });
    checks.push(HypothesisCheck {
        name: "k nonnegative, bounded, not identically zero".into(),
        passed: spec.k.amplitude > 0.0 && spec.k.amplitude.is_finite(),
        margin: spec.k.amplitude,
        detail: format!("sup k = {}", spec.k.amplitude),
    });
    let (passed, margin, detail) = integrable(&spec.h, 1.0);
    checks.push(HypothesisCheck { name: "h in L^1".into(), passed, margin, detail });
    checks.push(HypothesisCheck {
        name: "h nonnegative, bounded".into(),
        passed: spec.h.amplitude >= 0.0 && spec.h.amplitude.is_finite(),
        margin: spec.h.amplitude,
        detail: format!("sup h = {}", spec.h.amplitude),
    });
    for c in &mut checks {
        if c.margin == f64::MAX {
            c.margin = 0.0;
        }
    }

    Ok(HypothesisReport {
        q0,
        critical_exponent: 2.0 * spec.sobolev_exponent(),
        supercritical: spec.supercritical(),
        checks,
    })
}
