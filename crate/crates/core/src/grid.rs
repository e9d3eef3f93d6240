//! Radial discretization of R^N.
//!
//! Nodes `0 < r_1 < ... < r_M = R` carry the unknowns. Cell faces sit halfway
//! between nodes, with the first face at the origin (the even reflection
//! `r_0 = -r_1`) and the last face at `R`. Quadrature weights are exact shell
//! volumes `ω (f_i^N - f_{i-1}^N) / N`, so they sum to the ball volume, and the
//! Dirichlet integral is the usual two-point flux form across faces.

use std::io::Write;
use std::ops::{Deref, DerefMut};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Treatment of the truncation radius `R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Harmonic exterior: the field continues as `v(R) (R/r)^{N-2}` outside the
    /// ball, which adds `ω (N-2) R^{N-2} v(R)^2` to the Dirichlet integral.
    Exterior,
    /// `v(R) = 0`.
    Dirichlet,
}

impl std::str::FromStr for Boundary {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exterior" => Ok(Self::Exterior),
            "dirichlet" => Ok(Self::Dirichlet),
            other => Err(format!("unknown boundary `{other}` (expected exterior or dirichlet)")),
        }
    }
}

/// Surface area `2 π^{N/2} / Γ(N/2)` of the unit sphere in R^N.
pub fn sphere_area(dim: usize) -> f64 {
    use std::f64::consts::PI;
    // Γ(N/2) by the recursion from Γ(1) = 1 or Γ(1/2) = sqrt(π).
    let even = dim.is_multiple_of(2);
    let mut gamma = if even { 1.0 } else { PI.sqrt() };
    let mut x = if even { 1.0 } else { 0.5 };
    while x < dim as f64 / 2.0 {
        gamma *= x;
        x += 1.0;
    }
    2.0 * PI.powf(dim as f64 / 2.0) / gamma
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialGrid {
    radius: f64,
    dim: usize,
    stretch: f64,
    boundary: Boundary,
    sphere_area: f64,
    #[serde(skip)]
    nodes: Vec<f64>,
    #[serde(skip)]
    faces: Vec<f64>,
    #[serde(skip)]
    weights: Vec<f64>,
    /// `ω f_i^{N-1} / (r_{i+1} - r_i)` for the face between nodes `i` and `i+1`.
    #[serde(skip)]
    couplings: Vec<f64>,
    /// Coefficient of `v_M^2` in the Dirichlet integral (zero unless exterior).
    #[serde(skip)]
    exterior: f64,
}

/// Geometric grid with node gaps in ratio `stretch`; see the module docs.
pub fn make_grid(radius: f64, m: usize, dim: usize, stretch: f64) -> Result<RadialGrid> {
    RadialGrid::new(radius, m, dim, stretch, Boundary::Exterior)
}

impl RadialGrid {
    pub fn new(radius: f64, m: usize, dim: usize, stretch: f64, boundary: Boundary) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
        }
        if m < 16 {
            return Err(Error::InvalidParameter(format!("need at least 16 nodes, got {m}")));
        }
        if dim < 3 {
            return Err(Error::InvalidParameter(format!("dimension must be at least 3, got {dim}")));
        }
        if !(stretch >= 1.0 && stretch.is_finite()) {
            return Err(Error::InvalidParameter(format!("stretch must be >= 1, got {stretch}")));
        }

        // Gaps g_0 .. g_{M-1} between r_0 = -r_1 and r_M = R, with g_0 = 2 r_1.
        // R = -g_0/2 + Σ g_i.
        let ratios: Vec<f64> = (0..m).map(|i| stretch.powi(i as i32)).collect();
        let first_gap = radius / (ratios.iter().sum::<f64>() - 0.5);
        let mut nodes = Vec::with_capacity(m);
        let mut r = -0.5 * first_gap;
        for ratio in &ratios {
            r += first_gap * ratio;
            nodes.push(r);
        }
        nodes[m - 1] = radius;

        let mut faces = Vec::with_capacity(m + 1);
        faces.push(0.0);
        faces.extend(nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        faces.push(radius);

        let n = dim as f64;
        let area = sphere_area(dim);
        let weights = faces
            .windows(2)
            .map(|w| area / n * (w[1].powi(dim as i32) - w[0].powi(dim as i32)))
            .collect();
        let couplings = (0..m - 1)
            .map(|i| area * faces[i + 1].powi(dim as i32 - 1) / (nodes[i + 1] - nodes[i]))
            .collect();
        let exterior = match boundary {
            Boundary::Exterior => area * (n - 2.0) * radius.powi(dim as i32 - 2),
            Boundary::Dirichlet => 0.0,
        };

        Ok(Self {
            radius,
            dim,
            stretch,
            boundary,
            sphere_area: area,
            nodes,
            faces,
            weights,
            couplings,
            exterior,
        })
    }

    pub fn with_boundary(&self, boundary: Boundary) -> Result<Self> {
        Self::new(self.radius, self.len(), self.dim, self.stretch, boundary)
    }

    /// Same geometric family with twice the nodes: gaps split roughly in half.
    pub fn refined(&self) -> Result<Self> {
        Self::new(self.radius, 2 * self.len(), self.dim, self.stretch.sqrt(), self.boundary)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn stretch(&self) -> f64 {
        self.stretch
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn sphere_area(&self) -> f64 {
        self.sphere_area
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Whether node `i` is an unknown (the last node is pinned under Dirichlet).
    pub fn is_free(&self, i: usize) -> bool {
        !(self.boundary == Boundary::Dirichlet && i + 1 == self.len())
    }

    /// Zero the pinned boundary value, if any.
    pub fn project(&self, v: &mut [f64]) {
        if self.boundary == Boundary::Dirichlet {
            if let Some(last) = v.last_mut() {
                *last = 0.0;
            }
        }
    }

    pub fn field_from_fn(&self, f: impl Fn(f64) -> f64) -> Field {
        let mut field = Field::new(self.nodes.iter().map(|&r| f(r)).collect());
        self.project(&mut field);
        field
    }

    pub fn zeros(&self) -> Field {
        Field::zeros(self.len())
    }

    /// `∫ g dx` over the ball of radius `R`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Quadrature inner product `Σ w_i a_i b_i`.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).zip(&self.weights).map(|((x, y), w)| x * y * w).sum()
    }

    /// Discrete `∫ ∇a·∇b`, including the exterior tail when enabled.
    pub fn dirichlet_form(&self, a: &[f64], b: &[f64]) -> f64 {
        let m = self.len();
        let mut acc = 0.0;
        for i in 0..m - 1 {
            acc += self.couplings[i] * (a[i + 1] - a[i]) * (b[i + 1] - b[i]);
        }
        acc + self.exterior * a[m - 1] * b[m - 1]
    }

    /// `K v`, the partial derivatives of `½ dirichlet_form(v, v)`.
    pub fn stiffness_apply(&self, v: &[f64]) -> Vec<f64> {
        let m = self.len();
        let mut out = vec![0.0; m];
        for i in 0..m - 1 {
            let flux = self.couplings[i] * (v[i + 1] - v[i]);
            out[i] -= flux;
            out[i + 1] += flux;
        }
        out[m - 1] += self.exterior * v[m - 1];
        out
    }

    /// Solve `(K + shift W) x = rhs` over the free nodes (Thomas algorithm).
    /// Pinned nodes get `x = 0`.
    pub fn solve_stiffness(&self, rhs: &[f64], shift: f64) -> Vec<f64> {
        let m = self.len();
        let free = if self.boundary == Boundary::Dirichlet { m - 1 } else { m };
        let mut diag = vec![0.0; free];
        let mut upper = vec![0.0; free];
        for i in 0..free {
            diag[i] = shift * self.weights[i];
            if i > 0 {
                diag[i] += self.couplings[i - 1];
            }
            if i < m - 1 {
                diag[i] += self.couplings[i];
            }
            if i + 1 < free {
                upper[i] = -self.couplings[i];
            }
        }
        if free == m {
            diag[m - 1] += self.exterior;
        }
        let mut c = vec![0.0; free];
        let mut d = vec![0.0; free];
        c[0] = upper[0] / diag[0];
        d[0] = rhs[0] / diag[0];
        for i in 1..free {
            let lower = upper[i - 1];
            let denom = diag[i] - lower * c[i - 1];
            c[i] = upper[i] / denom;
            d[i] = (rhs[i] - lower * d[i - 1]) / denom;
        }
        let mut x = vec![0.0; m];
        x[free - 1] = d[free - 1];
        for i in (0..free - 1).rev() {
            x[i] = d[i] - c[i] * x[i + 1];
        }
        x
    }

    /// Second-order first derivative: three-point Lagrange stencils in the
    /// interior, the even ghost `v(-r_1) = v(r_1)` at the first node and a
    /// one-sided stencil at `R`.
    pub fn deriv(&self, v: &[f64]) -> Field {
        let m = self.len();
        let r = &self.nodes;
        let three_point = |x: [f64; 3], y: [f64; 3], at: usize| -> f64 {
            // Derivative of the interpolating parabola at x[at].
            let xs = x[at];
            let mut acc = 0.0;
            for j in 0..3 {
                let mut num = 0.0;
                let mut den = 1.0;
                for k in 0..3 {
                    if k == j {
                        continue;
                    }
                    den *= x[j] - x[k];
                    let mut prod = 1.0;
                    for (l, xl) in x.iter().enumerate() {
                        if l != j && l != k {
                            prod *= xs - xl;
                        }
                    }
                    num += prod;
                }
                acc += y[j] * num / den;
            }
            acc
        };
        let mut out = vec![0.0; m];
        out[0] = three_point([-r[0], r[0], r[1]], [v[0], v[0], v[1]], 1);
        for i in 1..m - 1 {
            out[i] = three_point([r[i - 1], r[i], r[i + 1]], [v[i - 1], v[i], v[i + 1]], 1);
        }
        out[m - 1] = three_point(
            [r[m - 3], r[m - 2], r[m - 1]],
            [v[m - 3], v[m - 2], v[m - 1]],
            2,
        );
        Field::new(out)
    }

    /// `v'' + (N-1) v'/r` as the finite-volume operator `-W^{-1} K v`. At `R`
    /// the outward flux comes from the harmonic tail (exterior) or from the
    /// one-sided derivative (Dirichlet).
    pub fn laplacian_radial(&self, v: &[f64]) -> Field {
        let m = self.len();
        let mut kv = self.stiffness_apply(v);
        if self.boundary == Boundary::Dirichlet {
            let slope = self.deriv(v)[m - 1];
            kv[m - 1] -= self.sphere_area * self.radius.powi(self.dim as i32 - 1) * slope;
        }
        Field::new(kv.iter().zip(&self.weights).map(|(k, w)| -k / w).collect())
    }

    /// Two-column CSV `r,<column>`.
    pub fn write_csv(&self, path: &Path, columns: &[(&str, &[f64])]) -> Result<()> {
        let io = |source| Error::Io { path: path.to_path_buf(), source };
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        let header: Vec<&str> = std::iter::once("r").chain(columns.iter().map(|c| c.0)).collect();
        writeln!(out, "{}", header.join(",")).map_err(io)?;
        for (i, r) in self.nodes.iter().enumerate() {
            write!(out, "{r}").map_err(io)?;
            for (_, col) in columns {
                write!(out, ",{}", col[i]).map_err(io)?;
            }
            writeln!(out).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Real-valued grid function aligned with the nodes of a [`RadialGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Field(Vec<f64>);

impl Field {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.iter().map(|&x| f(x)).collect())
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|x| c * x)
    }

    /// `self + alpha * other`
    pub fn axpy(&self, alpha: f64, other: &[f64]) -> Self {
        Self(self.0.iter().zip(other).map(|(a, b)| a + alpha * b).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl Deref for Field {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for Field {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}
