//! Seeded sampling helpers.
//!
//! Every random draw in the crate goes through [`SeededRng`], a xoshiro256++
//! generator seeded through SplitMix64, so one integer seed fixes every
//! sampling sequence.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SeededRng = Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> SeededRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Independent child stream; `tag` separates consumers that share a seed.
pub fn substream(seed: u64, tag: u64) -> SeededRng {
    seeded(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Uniform direction on the unit sphere of R^n.
pub fn unit_direction(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    loop {
        let c: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return c.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Smooth random field: three Gaussian bumps with random centers in `(0, R/2)`,
/// widths in `(0.5, 3)` and amplitudes in `(-amplitude, amplitude)`.
pub fn random_field(grid: &crate::grid::RadialGrid, rng: &mut SeededRng, amplitude: f64) -> crate::grid::Field {
    let half = 0.5 * grid.radius();
    let bumps: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                uniform(rng, -amplitude, amplitude),
                uniform(rng, 0.0, half),
                uniform(rng, 0.5, 3.0),
            )
        })
        .collect();
    grid.field_from_fn(|r| {
        bumps
            .iter()
            .map(|&(a, c, w)| a * (-((r - c) / w).powi(2)).exp())
            .sum()
    })
}
