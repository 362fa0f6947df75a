//! Unitary Fourier transform, the free Schrödinger group and the
//! modulation/dilation operators it factors into.
//!
//! The transform convention is `f̂(ξ) = (2π)^{-d/2} ∫ e^{-ixξ} f(x) dx`, so
//! `e^{itΔ}` is the frequency multiplier `e^{-it|ξ|²}` and
//! `e^{itΔ} = M(t) D(t) ℱ M(t)` with `M(t) = e^{i|x|²/4t}` and
//! `[D(t) f](x) = (2it)^{-d/2} f(x / 2t)`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{GridField, SpatialGrid, Space};

/// `(-1)^k` per axis: the phase `e^{-i x_0 ξ_k}` with `x_0 = -L/2`.
fn parity_sign(grid: &SpatialGrid, idx: usize) -> f64 {
    let ij = grid.unflatten(idx);
    let s: usize = ij[..grid.dim()].iter().sum();
    if s.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

pub fn forward_transform(f: &GridField) -> Result<GridField> {
    f.expect_space(Space::Physical)?;
    let grid = f.grid();
    let d = grid.dim() as i32;
    let mut data = f.values().to_vec();
    grid.fft_forward(&mut data);
    let scale = (2.0 * PI).powi(-d).sqrt() * grid.cell_volume();
    for (i, z) in data.iter_mut().enumerate() {
        *z *= scale * parity_sign(grid, i);
    }
    let mut out = GridField::new(grid.clone(), data, Space::Frequency)?;
    out.set_time(f.time());
    Ok(out)
}

pub fn inverse_transform(fhat: &GridField) -> Result<GridField> {
    fhat.expect_space(Space::Frequency)?;
    let grid = fhat.grid();
    let d = grid.dim() as i32;
    let mut data: Vec<Complex64> = fhat
        .values()
        .iter()
        .enumerate()
        .map(|(i, z)| z * parity_sign(grid, i))
        .collect();
    grid.fft_inverse(&mut data);
    let scale = (2.0 * PI).powi(-d).sqrt() * grid.frequency_cell_volume();
    for z in data.iter_mut() {
        *z *= scale;
    }
    let mut out = GridField::new(grid.clone(), data, Space::Physical)?;
    out.set_time(fhat.time());
    Ok(out)
}

/// Applies a frequency multiplier `m(ξ)` to a physical field.
pub fn apply_multiplier(f: &GridField, m: impl Fn(&[f64]) -> Complex64) -> Result<GridField> {
    f.expect_space(Space::Physical)?;
    let grid = f.grid();
    let d = grid.dim();
    let mut data = f.values().to_vec();
    grid.fft_forward(&mut data);
    let norm = 1.0 / grid.len() as f64;
    for (i, z) in data.iter_mut().enumerate() {
        *z *= m(&grid.frequency(i)[..d]) * norm;
    }
    grid.fft_inverse(&mut data);
    GridField::new(grid.clone(), data, Space::Physical).map(|mut g| {
        g.set_time(f.time());
        g
    })
}

/// `e^{itΔ} f` via the exact multiplier `e^{-it|ξ|²}`.
pub fn free_propagate(f: &GridField, t: f64) -> Result<GridField> {
    if !t.is_finite() {
        return Err(Error::Domain(format!("propagation time must be finite, got {t}")));
    }
    if t == 0.0 {
        f.expect_space(Space::Physical)?;
        return Ok(f.clone());
    }
    apply_multiplier(f, |xi| {
        let k2: f64 = xi.iter().map(|k| k * k).sum();
        Complex64::from_polar(1.0, -t * k2)
    })
}

/// Pointwise multiplication by `e^{sign·i|x|²/4t}`.
pub fn modulate(f: &GridField, t: f64, sign: i8) -> Result<GridField> {
    f.expect_space(Space::Physical)?;
    if t == 0.0 || !t.is_finite() {
        return Err(Error::Domain(format!("modulation needs finite nonzero t, got {t}")));
    }
    if sign != 1 && sign != -1 {
        return Err(Error::Domain(format!("modulation sign must be ±1, got {sign}")));
    }
    let grid = f.grid();
    let s = f64::from(sign);
    Ok(f.map_indexed(|i, z| z * Complex64::from_polar(1.0, s * grid.radius_sq(i) / (4.0 * t))))
}

/// `(2it)^{d/2}` on the principal branch.
pub(crate) fn dilation_factor(t: f64, d: usize) -> Complex64 {
    let half = d as f64 / 2.0;
    Complex64::from_polar((2.0 * t).powf(half), half * PI / 2.0)
}

/// `(MD)^{-1}`: `ũ(x_j / 2t) = (2it)^{d/2} e^{-i|x_j|²/4t} u(x_j)`.
///
/// The result lives on the rescaled grid `{x_j / 2t}` carried by the field.
pub fn tilde_transform(u: &GridField, t: f64) -> Result<GridField> {
    u.expect_space(Space::Physical)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("tilde transform needs t > 0, got {t}")));
    }
    let grid = u.grid();
    let c = dilation_factor(t, grid.dim());
    let rescaled = grid.scaled(1.0 / (2.0 * t))?;
    let values = u
        .values()
        .iter()
        .enumerate()
        .map(|(i, z)| c * z * Complex64::from_polar(1.0, -grid.radius_sq(i) / (4.0 * t)))
        .collect();
    let mut out = GridField::new(rescaled, values, Space::Physical)?;
    out.set_time(Some(t));
    Ok(out)
}

/// `MD`: inverse of [`tilde_transform`]. `tilde` must live on `{x_j / 2t}`.
pub fn untilde_transform(tilde: &GridField, t: f64) -> Result<GridField> {
    tilde.expect_space(Space::Physical)?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("tilde transform needs t > 0, got {t}")));
    }
    let grid = tilde.grid().scaled(2.0 * t)?;
    let c = dilation_factor(t, grid.dim()).inv();
    let values = tilde
        .values()
        .iter()
        .enumerate()
        .map(|(i, z)| c * z * Complex64::from_polar(1.0, grid.radius_sq(i) / (4.0 * t)))
        .collect();
    let mut out = GridField::new(grid, values, Space::Physical)?;
    out.set_time(Some(t));
    Ok(out)
}

/// One row of direct-quadrature exponentials `e^{-i y x_j}` for a single axis.
fn exponential_table(x: &[f64], y: &[f64]) -> Vec<Complex64> {
    let mut table = Vec::with_capacity(x.len() * y.len());
    for &ym in y {
        for &xj in x {
            table.push(Complex64::from_polar(1.0, -ym * xj));
        }
    }
    table
}

/// Fourier transform of a physical field evaluated by direct O(n²)-per-axis
/// quadrature at the points of `targets` (treated as frequencies).
///
/// Independent of the FFT path; used as an oracle and for evaluating `ℱ`
/// on rescaled lattices.
pub fn direct_fourier(f: &GridField, targets: &SpatialGrid) -> Result<Vec<Complex64>> {
    f.expect_space(Space::Physical)?;
    let grid = f.grid();
    let d = grid.dim();
    if targets.dim() != d {
        return Err(Error::GridMismatch("target lattice dimension differs".into()));
    }
    let n = grid.n();
    let m = targets.n();
    let axis_x = |a: usize| -> Vec<f64> { (0..n).map(|j| grid.coordinate(a, j)).collect() };
    let axis_y = |a: usize| -> Vec<f64> { (0..m).map(|j| targets.coordinate(a, j)).collect() };
    let scale = (2.0 * PI).powi(-(d as i32)).sqrt() * grid.cell_volume();
    let vals = f.values();
    let out = match d {
        1 => {
            let e = exponential_table(&axis_x(0), &axis_y(0));
            (0..m)
                .map(|r| {
                    let row = &e[r * n..(r + 1) * n];
                    scale * row.iter().zip(vals).map(|(a, b)| a * b).sum::<Complex64>()
                })
                .collect()
        }
        _ => {
            let e0 = exponential_table(&axis_x(0), &axis_y(0));
            let e1 = exponential_table(&axis_x(1), &axis_y(1));
            // Contract axis 1 first: g[i0][m1] = Σ_{i1} e1[m1][i1] f[i0][i1].
            let mut g = vec![Complex64::new(0.0, 0.0); n * m];
            for i0 in 0..n {
                let frow = &vals[i0 * n..(i0 + 1) * n];
                for m1 in 0..m {
                    let erow = &e1[m1 * n..(m1 + 1) * n];
                    g[i0 * m + m1] = erow.iter().zip(frow).map(|(a, b)| a * b).sum();
                }
            }
            let mut out = vec![Complex64::new(0.0, 0.0); m * m];
            for m0 in 0..m {
                let erow = &e0[m0 * n..(m0 + 1) * n];
                for (i0, e) in erow.iter().enumerate() {
                    let grow = &g[i0 * m..(i0 + 1) * m];
                    let orow = &mut out[m0 * m..(m0 + 1) * m];
                    for (o, gv) in orow.iter_mut().zip(grow) {
                        *o += e * gv;
                    }
                }
                for o in &mut out[m0 * m..(m0 + 1) * m] {
                    *o *= scale;
                }
            }
            out
        }
    };
    Ok(out)
}

/// `ℱMφ`, the tilde-frame profile of `e^{itΔ}φ`, by direct quadrature on the
/// rescaled lattice `{x_j / 2t}` of `φ`'s own grid.
pub fn tilde_free_profile(phi: &GridField, t: f64) -> Result<GridField> {
    let mphi = modulate(phi, t, 1)?;
    let rescaled = phi.grid().scaled(1.0 / (2.0 * t))?;
    let values = direct_fourier(&mphi, &rescaled)?;
    let mut out = GridField::new(rescaled, values, Space::Physical)?;
    out.set_time(Some(t));
    Ok(out)
}

/// Relative residual `‖e^{itΔ}φ − MDℱMφ‖₂ / ‖φ‖₂`, with the left side from the
/// FFT multiplier and the right side from direct quadrature onto `{x_j / 2t}`.
pub fn verify_factorization(phi: &GridField, t: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("factorization check needs t > 0, got {t}")));
    }
    let lhs = free_propagate(phi, t)?;
    let rhs = untilde_transform(&tilde_free_profile(phi, t)?, t)?;
    let norm = phi.l2_norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    Ok(lhs.sub(&rhs)?.l2_norm() / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{gaussian, random_field};

    #[test]
    fn discrete_delta_has_flat_spectrum() {
        let g = SpatialGrid::new(1, 64, 10.0).unwrap();
        let mut v = vec![Complex64::new(0.0, 0.0); 64];
        v[17] = Complex64::new(1.0, 0.0);
        let f = GridField::new(g, v, Space::Physical).unwrap();
        let fh = forward_transform(&f).unwrap();
        let m0 = fh.values()[0].norm();
        assert!(fh.values().iter().all(|z| (z.norm() - m0).abs() < 1e-15));
    }

    #[test]
    fn gaussian_transform_matches_closed_form() {
        let g = SpatialGrid::new(1, 1024, 80.0).unwrap();
        let f = gaussian(&g, 1.0);
        let fh = forward_transform(&f).unwrap();
        let err = (0..g.len())
            .map(|i| (fh.values()[i] - (-0.5 * g.frequency_sq(i)).exp()).norm())
            .fold(0.0, f64::max);
        assert!(err <= 1e-10, "err = {err}");
    }

    #[test]
    fn plane_wave_lands_in_one_bin() {
        let g = SpatialGrid::new(1, 128, 20.0).unwrap();
        let xi5 = g.wavenumber(0, 5);
        let f = GridField::from_fn(&g, |x| Complex64::from_polar(1.0, x[0] * xi5)).unwrap();
        let fh = forward_transform(&f).unwrap();
        for (k, z) in fh.values().iter().enumerate() {
            if k != 5 {
                assert!(z.norm() <= 1e-12, "bin {k}: {}", z.norm());
            }
        }
        assert!(fh.values()[5].norm() > 1.0);
    }

    #[test]
    fn free_propagation_matches_periodized_closed_form() {
        // The box evolution equals the free evolution summed over periodic images.
        let g = SpatialGrid::new(1, 1024, 80.0).unwrap();
        let f = gaussian(&g, 1.0);
        for &t in &[0.5, 3.0, 10.0] {
            let u = free_propagate(&f, t).unwrap();
            let exact = GridField::from_fn(&g, |x| {
                (-40..=40)
                    .map(|m| crate::test_util::free_gaussian_1d(x[0] + 80.0 * m as f64, t, 1.0))
                    .sum()
            })
            .unwrap();
            let rel = u.sub(&exact).unwrap().l2_norm() / exact.l2_norm();
            assert!(rel <= 1e-8, "t = {t}: rel = {rel}");
        }
    }

    #[test]
    fn propagation_at_zero_is_identity() {
        let g = SpatialGrid::new(1, 64, 10.0).unwrap();
        let f = random_field(&g, 3);
        assert_eq!(free_propagate(&f, 0.0).unwrap(), f);
    }

    #[test]
    fn modulation_inverts_and_preserves_modulus() {
        let g = SpatialGrid::new(2, 16, 6.0).unwrap();
        let f = random_field(&g, 9);
        let m = modulate(&f, 0.7, 1).unwrap();
        let back = modulate(&m, 0.7, -1).unwrap();
        for ((a, b), c) in f.values().iter().zip(back.values()).zip(m.values()) {
            assert!((a - b).norm() <= 1e-15 * a.norm().max(1.0));
            assert!((a.norm() - c.norm()).abs() <= 1e-15 * a.norm().max(1.0));
        }
        assert!(matches!(modulate(&f, 0.0, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn tilde_at_half_keeps_grid() {
        let g = SpatialGrid::new(1, 64, 12.0).unwrap();
        let u = random_field(&g, 4);
        let ut = tilde_transform(&u, 0.5).unwrap();
        assert_eq!(ut.grid(), &g);
        let c = Complex64::from_polar(1.0, PI / 4.0);
        for i in 0..g.len() {
            let expect = c * Complex64::from_polar(1.0, -g.radius_sq(i) / 2.0) * u.values()[i];
            assert!((ut.values()[i] - expect).norm() <= 1e-14);
        }
        assert!(tilde_transform(&u, 0.0).is_err());
        assert!(tilde_transform(&u, -1.0).is_err());
    }

    #[test]
    fn tilde_of_free_flow_is_fourier_of_modulated_data() {
        let g = SpatialGrid::new(1, 512, 64.0).unwrap();
        let phi = gaussian(&g, 1.0);
        let t = 2.0;
        let ut = tilde_transform(&free_propagate(&phi, t).unwrap(), t).unwrap();
        let direct = tilde_free_profile(&phi, t).unwrap();
        let rel = ut.sub(&direct).unwrap().l2_norm() / direct.l2_norm();
        assert!(rel <= 1e-6, "rel = {rel}");
    }

    #[test]
    fn factorization_residuals() {
        let g = SpatialGrid::new(1, 1024, 80.0).unwrap();
        let phi = gaussian(&g, 1.0);
        let r = verify_factorization(&phi, 1.0).unwrap();
        assert!(r <= 1e-6, "residual = {r}");
        let rotated = phi.scale(Complex64::from_polar(1.0, 1.234));
        let r2 = verify_factorization(&rotated, 1.0).unwrap();
        assert!((r - r2).abs() <= 1e-12);
        assert!(verify_factorization(&phi, 0.0).is_err());

        let g2 = SpatialGrid::new(2, 256, 64.0).unwrap();
        let phi2 = gaussian(&g2, 1.0);
        let r = verify_factorization(&phi2, 2.0).unwrap();
        assert!(r <= 1e-5, "2d residual = {r}");
    }
}
