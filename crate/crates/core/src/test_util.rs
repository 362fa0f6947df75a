use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{GridField, SpatialGrid};

pub fn gaussian(grid: &SpatialGrid, sigma: f64) -> GridField {
    GridField::from_real_fn(grid, |x| (-x.iter().map(|v| v * v).sum::<f64>() / (2.0 * sigma * sigma)).exp())
        .unwrap()
}

pub fn random_field(grid: &SpatialGrid, seed: u64) -> GridField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.len())
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    GridField::new(grid.clone(), values, crate::grid::Space::Physical).unwrap()
}

/// `e^{itΔ} e^{-x²/2σ²}` on the line.
pub fn free_gaussian_1d(x: f64, t: f64, sigma: f64) -> Complex64 {
    let s2 = Complex64::new(sigma * sigma, 2.0 * t);
    sigma / s2.sqrt() * (-(x * x) / (2.0 * s2)).exp()
}
