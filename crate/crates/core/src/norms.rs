//! Discrete Lebesgue and weak-Lebesgue norms with the field's quadrature weight.

use crate::error::{Error, Result};
use crate::grid::GridField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind {
    /// `(Σ |f|^r w)^{1/r}`, `r ∈ [1, ∞)`; `r = ∞` is the sup norm.
    Lp(f64),
    /// `sup_k (k w)^{1/r} f*_k` over the decreasing rearrangement, `r ∈ (1, ∞)`.
    ///
    /// An O(h)-accurate surrogate for the Lorentz `L^{r,∞}` quasi-norm.
    WeakLp(f64),
    Sup,
}

pub fn norm(f: &GridField, kind: NormKind) -> Result<f64> {
    let w = f.weight();
    match kind {
        NormKind::Sup => Ok(f.sup_norm()),
        NormKind::Lp(r) if r == f64::INFINITY => Ok(f.sup_norm()),
        NormKind::Lp(r) => {
            if !(r >= 1.0) {
                return Err(Error::Domain(format!("L^r norm needs r >= 1, got {r}")));
            }
            Ok(lp_of_moduli(f.values().iter().map(|z| z.norm()), r, w))
        }
        NormKind::WeakLp(r) => {
            if !(r > 1.0 && r.is_finite()) {
                return Err(Error::Domain(format!("weak L^r norm needs 1 < r < ∞, got {r}")));
            }
            let mut m: Vec<f64> = f.values().iter().map(|z| z.norm()).collect();
            m.sort_by(|a, b| b.total_cmp(a));
            Ok(m.iter()
                .enumerate()
                .map(|(k, v)| ((k + 1) as f64 * w).powf(1.0 / r) * v)
                .fold(0.0, f64::max))
        }
    }
}

/// `(Σ m^r w)^{1/r}`, scaled by the maximum to avoid overflow for large `r`.
pub(crate) fn lp_of_moduli(moduli: impl Iterator<Item = f64> + Clone, r: f64, w: f64) -> f64 {
    let top = moduli.clone().fold(0.0, f64::max);
    if top == 0.0 {
        return 0.0;
    }
    let s: f64 = moduli.map(|m| (m / top).powf(r)).sum();
    top * (s * w).powf(1.0 / r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Space, SpatialGrid};
    use num_complex::Complex64;
    use proptest::prelude::*;

    #[test]
    fn indicator_norms() {
        let g = SpatialGrid::new(1, 64, 16.0).unwrap();
        let h = g.spacing(0);
        let f = GridField::from_fn(&g, |x| {
            if x[0].abs() < 2.0 - 1e-9 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }
        })
        .unwrap();
        let m = f.values().iter().filter(|z| z.norm() > 0.0).count() as f64;
        for r in [1.0, 1.5, 2.0, 7.0] {
            let expect = (m * h).powf(1.0 / r);
            assert!((norm(&f, NormKind::Lp(r)).unwrap() - expect).abs() <= 1e-12 * expect);
        }
    }

    #[test]
    fn constant_sup() {
        let g = SpatialGrid::new(2, 8, 3.0).unwrap();
        let c = Complex64::new(-0.3, 0.4);
        let f = GridField::new(g.clone(), vec![c; g.len()], Space::Physical).unwrap();
        assert_eq!(norm(&f, NormKind::Sup).unwrap(), c.norm());
        assert_eq!(norm(&f, NormKind::Lp(f64::INFINITY)).unwrap(), c.norm());
    }

    #[test]
    fn weak_norm_of_inverse_square_root() {
        // |{|x|^{-1/2} > λ}| = 2 λ^{-2}, so λ |{…}|^{1/2} = √2 for every λ.
        let g = SpatialGrid::new(1, 4096, 40.0).unwrap();
        let f = GridField::from_real_fn(&g, |x| if x[0] == 0.0 { 0.0 } else { x[0].abs().powf(-0.5) }).unwrap();
        let v = norm(&f, NormKind::WeakLp(2.0)).unwrap();
        let exact = 2f64.sqrt();
        assert!((v - exact).abs() <= 0.05 * exact, "weak norm {v}");
    }

    #[test]
    fn rejects_bad_exponents() {
        let g = SpatialGrid::new(1, 8, 1.0).unwrap();
        let f = GridField::zeros(&g, Space::Physical);
        assert!(norm(&f, NormKind::Lp(0.5)).is_err());
        assert!(norm(&f, NormKind::WeakLp(1.0)).is_err());
        assert!(norm(&f, NormKind::Lp(f64::NAN)).is_err());
    }

    proptest! {
        #[test]
        fn lp_norms_are_ordered_by_hoelder_on_unit_mass_box(seed in 0u64..1000, r in 1.0f64..6.0) {
            // On a box of measure 1, ‖f‖_r ≤ ‖f‖_s for r ≤ s.
            let g = SpatialGrid::new(1, 32, 1.0).unwrap();
            let f = crate::test_util::random_field(&g, seed);
            let a = norm(&f, NormKind::Lp(r)).unwrap();
            let b = norm(&f, NormKind::Lp(r + 1.0)).unwrap();
            prop_assert!(a <= b * (1.0 + 1e-12));
            prop_assert!(b <= f.sup_norm() * (1.0 + 1e-12));
        }
    }
}
