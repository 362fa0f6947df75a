//! Periodic sampling of ℝ^d (d = 1 or 2) and complex fields living on it.
//!
//! Grid points along each axis are `x_j = -L/2 + j h` for `j = 0..n`, so the
//! origin sits at index `n/2`. Frequencies follow FFT order: index `k` maps to
//! `(2π/L) k'` with `k' = k` for `k < n/2` and `k' = k - n` otherwise, which
//! puts the unpaired Nyquist mode at its negative representative `-π/h`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{ensure_finite, Error, Result};

/// Maximum supported spatial dimension.
pub const MAX_DIM: usize = 2;

/// Minimum number of points per axis.
pub const MIN_POINTS: usize = 8;

#[derive(Clone)]
struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Uniform periodic grid with the same number of points on every axis.
#[derive(Clone)]
pub struct SpatialGrid {
    dim: usize,
    n: usize,
    lengths: [f64; MAX_DIM],
    plans: Plans,
}

impl fmt::Debug for SpatialGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpatialGrid")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .field("lengths", &&self.lengths[..self.dim])
            .finish()
    }
}

impl PartialEq for SpatialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.n == other.n && self.lengths == other.lengths
    }
}

impl SpatialGrid {
    /// Square/segment grid with the same box length on every axis.
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        Self::with_lengths(dim, n, &vec![length; dim.max(1)])
    }

    pub fn with_lengths(dim: usize, n: usize, lengths: &[f64]) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Config(format!("dim must be 1 or 2, got {dim}")));
        }
        if n < MIN_POINTS || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "points per axis must be a power of two >= {MIN_POINTS}, got {n}"
            )));
        }
        if lengths.len() != dim {
            return Err(Error::Config(format!(
                "expected {dim} box lengths, got {}",
                lengths.len()
            )));
        }
        let mut ls = [0.0; MAX_DIM];
        for (slot, &l) in ls.iter_mut().zip(lengths) {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::Config(format!("box length must be positive, got {l}")));
            }
            *slot = l;
        }
        let mut planner = FftPlanner::new();
        let plans = Plans {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        };
        Ok(Self { dim, n, lengths: ls, plans })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of grid points, `n^dim`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.n as f64
    }

    /// Physical-space quadrature weight `h^d`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    /// Frequency-space quadrature weight `(2π/L)^d`.
    pub fn frequency_cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| 2.0 * PI / self.lengths[a]).product()
    }

    /// Signed FFT index: `k` for `k < n/2`, `k - n` otherwise.
    pub fn signed_index(&self, k: usize) -> i64 {
        let half = self.n / 2;
        if k < half {
            k as i64
        } else {
            k as i64 - self.n as i64
        }
    }

    pub fn coordinate(&self, axis: usize, j: usize) -> f64 {
        -0.5 * self.lengths[axis] + j as f64 * self.spacing(axis)
    }

    pub fn wavenumber(&self, axis: usize, k: usize) -> f64 {
        2.0 * PI / self.lengths[axis] * self.signed_index(k) as f64
    }

    /// Per-axis indices of a flat row-major index (axis 0 slowest).
    pub fn unflatten(&self, idx: usize) -> [usize; MAX_DIM] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx / self.n, idx % self.n],
        }
    }

    /// Position of a flat index; unused trailing axes are zero.
    pub fn point(&self, idx: usize) -> [f64; MAX_DIM] {
        let ij = self.unflatten(idx);
        let mut x = [0.0; MAX_DIM];
        for (a, xa) in x.iter_mut().enumerate().take(self.dim) {
            *xa = self.coordinate(a, ij[a]);
        }
        x
    }

    /// Frequency vector of a flat index in FFT order.
    pub fn frequency(&self, idx: usize) -> [f64; MAX_DIM] {
        let ij = self.unflatten(idx);
        let mut xi = [0.0; MAX_DIM];
        for (a, xa) in xi.iter_mut().enumerate().take(self.dim) {
            *xa = self.wavenumber(a, ij[a]);
        }
        xi
    }

    pub fn radius_sq(&self, idx: usize) -> f64 {
        self.point(idx)[..self.dim].iter().map(|x| x * x).sum()
    }

    pub fn frequency_sq(&self, idx: usize) -> f64 {
        self.frequency(idx)[..self.dim].iter().map(|x| x * x).sum()
    }

    /// Same number of points with every box length multiplied by `factor`, so
    /// that point `j` of the new grid sits at `factor * x_j`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::Domain(format!("grid scale factor must be positive, got {factor}")));
        }
        let ls: Vec<f64> = self.lengths().iter().map(|l| l * factor).collect();
        let mut g = self.clone();
        g.lengths[..self.dim].copy_from_slice(&ls);
        Ok(g)
    }

    /// The frequency lattice viewed as a physical grid: spacing `2π/L`,
    /// box length `2π/h`. Frequency fields reordered with
    /// [`GridField::frequency_as_physical`] live here.
    pub fn dual(&self) -> Self {
        let mut g = self.clone();
        for a in 0..self.dim {
            g.lengths[a] = 2.0 * PI / self.spacing(a);
        }
        g
    }

    pub(crate) fn fft_forward(&self, data: &mut [Complex64]) {
        self.fft_nd(data, &self.plans.forward);
    }

    pub(crate) fn fft_inverse(&self, data: &mut [Complex64]) {
        self.fft_nd(data, &self.plans.inverse);
    }

    fn fft_nd(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(data.len(), self.len());
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        if self.dim == 2 {
            let n = self.n;
            let mut t = vec![Complex64::new(0.0, 0.0); data.len()];
            transpose(data, &mut t, n);
            plan.process_with_scratch(&mut t, &mut scratch);
            transpose(&t, data, n);
        }
    }

    /// Equal point counts and box lengths equal up to rescaling round-off.
    pub(crate) fn same_shape(&self, other: &Self) -> Result<()> {
        let close = self.lengths().iter().zip(other.lengths()).all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
        if self.dim == other.dim && self.n == other.n && close {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            dst[j * n + i] = src[i * n + j];
        }
    }
}

/// Which representation a field's values are in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Physical,
    Frequency,
}

/// Complex samples on a [`SpatialGrid`], row-major, physical or frequency space.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: SpatialGrid,
    values: Vec<Complex64>,
    space: Space,
    time: Option<f64>,
}

impl GridField {
    pub fn new(grid: SpatialGrid, values: Vec<Complex64>, space: Space) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        ensure_finite(&values, "field values")?;
        Ok(Self { grid, values, space, time: None })
    }

    pub fn zeros(grid: &SpatialGrid, space: Space) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
            space,
            time: None,
        }
    }

    /// Samples `f` at every physical grid point.
    pub fn from_fn(grid: &SpatialGrid, f: impl Fn(&[f64]) -> Complex64) -> Result<Self> {
        let d = grid.dim();
        let values = (0..grid.len()).map(|i| f(&grid.point(i)[..d])).collect();
        Self::new(grid.clone(), values, Space::Physical)
    }

    /// Real-valued sampling convenience.
    pub fn from_real_fn(grid: &SpatialGrid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn time(&self) -> Option<f64> {
        self.time
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }

    pub fn set_time(&mut self, t: Option<f64>) {
        self.time = t;
    }

    /// Quadrature weight for the field's representation.
    pub fn weight(&self) -> f64 {
        match self.space {
            Space::Physical => self.grid.cell_volume(),
            Space::Frequency => self.grid.frequency_cell_volume(),
        }
    }

    pub fn expect_space(&self, space: Space) -> Result<()> {
        if self.space == space {
            Ok(())
        } else {
            Err(Error::Domain(format!("expected a {space:?} field, got {:?}", self.space)))
        }
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        self.grid.same_shape(&other.grid)?;
        if self.space != other.space {
            return Err(Error::GridMismatch(format!(
                "cannot combine {:?} and {:?} fields",
                self.space, other.space
            )));
        }
        Ok(())
    }

    /// Discrete inner product `Σ f ḡ · weight`, conjugate-linear in `other`.
    pub fn inner(&self, other: &Self) -> Result<Complex64> {
        self.check_compatible(other)?;
        let s: Complex64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b.conj())
            .sum();
        Ok(s * self.weight())
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.weight()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        self.check_compatible(other)?;
        let values: Vec<_> = self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect();
        let mut out = GridField::new(self.grid.clone(), values, self.space)?;
        out.time = self.time;
        Ok(out)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        self.map(|z| z * c)
    }

    /// Pointwise map; non-finite results are the caller's bug and are
    /// caught in debug builds.
    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        let values: Vec<_> = self.values.iter().map(|z| f(*z)).collect();
        debug_assert!(ensure_finite(&values, "map").is_ok());
        Self { grid: self.grid.clone(), values, space: self.space, time: self.time }
    }

    /// Pointwise map with access to the physical (or frequency) coordinate.
    pub fn map_indexed(&self, f: impl Fn(usize, Complex64) -> Complex64) -> Self {
        let values: Vec<_> = self.values.iter().enumerate().map(|(i, z)| f(i, *z)).collect();
        Self { grid: self.grid.clone(), values, space: self.space, time: self.time }
    }

    /// Reorders a frequency-space field (FFT order) into centered order on the
    /// dual grid, so it can be handled with physical-space tools.
    pub fn frequency_as_physical(&self) -> Result<Self> {
        self.expect_space(Space::Frequency)?;
        let dual = self.grid.dual();
        let values = reorder(&self.grid, &self.values, |k, n| (k + n / 2) % n);
        Ok(Self { grid: dual, values, space: Space::Physical, time: self.time })
    }

    /// Inverse of [`GridField::frequency_as_physical`]: `original` is the grid
    /// whose frequency lattice `self` was sampled on.
    pub fn physical_as_frequency(&self, original: &SpatialGrid) -> Result<Self> {
        self.expect_space(Space::Physical)?;
        self.grid.same_shape(&original.dual())?;
        let values = reorder(original, &self.values, |j, n| (j + n / 2) % n);
        Ok(Self { grid: original.clone(), values, space: Space::Frequency, time: self.time })
    }
}

/// Permutes axis indices: output index `map(k)` receives input index `k`.
fn reorder(grid: &SpatialGrid, values: &[Complex64], map: impl Fn(usize, usize) -> usize) -> Vec<Complex64> {
    let n = grid.n();
    let mut out = vec![Complex64::new(0.0, 0.0); values.len()];
    match grid.dim() {
        1 => {
            for (k, v) in values.iter().enumerate() {
                out[map(k, n)] = *v;
            }
        }
        _ => {
            for i in 0..n {
                for j in 0..n {
                    out[map(i, n) * n + map(j, n)] = values[i * n + j];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(SpatialGrid::new(1, 12, 10.0).is_err());
        assert!(SpatialGrid::new(1, 4, 10.0).is_err());
        assert!(SpatialGrid::new(3, 16, 10.0).is_err());
        assert!(SpatialGrid::new(1, 16, -1.0).is_err());
        assert!(SpatialGrid::new(2, 16, 10.0).is_ok());
    }

    #[test]
    fn spacing_times_points_is_length() {
        let g = SpatialGrid::new(1, 1024, 80.0).unwrap();
        assert_eq!(g.spacing(0) * 1024.0, 80.0);
        assert_eq!(g.coordinate(0, 512), 0.0);
    }

    #[test]
    fn frequency_set_has_single_nyquist() {
        let g = SpatialGrid::new(1, 16, 2.0 * PI).unwrap();
        let ks: Vec<i64> = (0..16).map(|k| g.signed_index(k)).collect();
        assert_eq!(ks[8], -8);
        assert_eq!(*ks.iter().max().unwrap(), 7);
        assert_eq!(*ks.iter().min().unwrap(), -8);
    }

    #[test]
    fn non_finite_values_rejected() {
        let g = SpatialGrid::new(1, 8, 1.0).unwrap();
        let mut v = vec![Complex64::new(0.0, 0.0); 8];
        v[3] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(GridField::new(g, v, Space::Physical), Err(Error::NonFinite(_))));
    }

    #[test]
    fn dual_reordering_round_trips() {
        let g = SpatialGrid::new(2, 8, 3.0).unwrap();
        let vals: Vec<_> = (0..64).map(|i| Complex64::new(i as f64, -(i as f64))).collect();
        let f = GridField::new(g.clone(), vals, Space::Frequency).unwrap();
        let p = f.frequency_as_physical().unwrap();
        // The zero frequency lands on the dual grid's origin.
        let origin = 4 * 8 + 4;
        assert_eq!(p.values()[origin], f.values()[0]);
        let back = p.physical_as_frequency(&g).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn rescaling_round_off_keeps_grids_compatible() {
        let g = SpatialGrid::new(1, 64, 224.0).unwrap();
        let t = 10.0;
        let back = g.scaled(1.0 / (2.0 * t)).unwrap().scaled(2.0 * t).unwrap();
        assert!(g.same_shape(&back).is_ok());
        assert!(g.same_shape(&g.scaled(1.0 + 1e-9).unwrap()).is_err());
        assert!(g.same_shape(&SpatialGrid::new(1, 128, 224.0).unwrap()).is_err());
    }
}
