//! End-to-end use of the public API: synthetic scattering states, the pairing
//! series, and the growth classification of its integrated main term.

use nls_core::fields::{synth_state, LocalizedComponent, LocalizedPathSpec, LocalizedProfile, NonlinearitySpec, Path};
use nls_core::glassey::{growth_fit, main_term, main_term_limit, GrowthModel, PairingSeries, SeriesContext};
use nls_core::quadrature::log_space;
use nls_core::solver::{evolve, NonlinearOperator, SolverConfig};
use nls_core::spectral::free_propagate;
use nls_core::{GridField, SpatialGrid};
use num_complex::Complex64;

fn gaussian(g: &SpatialGrid) -> GridField {
    GridField::from_real_fn(g, |x| (-x[0] * x[0] / 2.0).exp()).unwrap()
}

fn growth(p: f64) -> (GrowthModel, f64) {
    let g = SpatialGrid::new(1, 4096, 1600.0).unwrap();
    let vp = gaussian(&g);
    let nl = NonlinearitySpec::power(p, Complex64::new(1.0, 0.0)).unwrap();
    let ctx = SeriesContext {
        phi: &vp,
        op: Some(NonlinearOperator::new(&nl, &g).unwrap()),
        pot: None,
        mollify_width: 0.5,
        lspec: None,
        v_plus: Some(&vp),
    };
    let rows = log_space(1.0, 100.0, 41)
        .into_iter()
        .map(|t| ctx.row(&free_propagate(&vp, t).unwrap(), t).unwrap())
        .collect();
    let series = PairingSeries { dim: 1, nonlinearity: Some(nl), phi_norm: vp.l2_norm(), rows };
    let (t, y): (Vec<f64>, Vec<f64>) = series.glassey_curve().unwrap().into_iter().filter(|(t, _)| *t >= 10.0).unzip();
    let f = growth_fit(&t, &y).unwrap();
    (f.model, f.exponent)
}

#[test]
fn integrated_main_term_follows_the_dichotomy() {
    let (m, b) = growth(0.5);
    assert_eq!(m, GrowthModel::PowerLaw);
    assert!((b - 0.75).abs() <= 0.1, "{b}");
    assert_eq!(growth(2.0).0, GrowthModel::Logarithmic);
}

#[test]
fn far_localized_part_does_not_move_the_limit() {
    let g = SpatialGrid::new(1, 4096, 1600.0).unwrap();
    let vp = gaussian(&g);
    let nl = NonlinearitySpec::power(0.5, Complex64::new(1.0, 0.0)).unwrap();
    let l = LocalizedPathSpec {
        components: vec![LocalizedComponent {
            profile: LocalizedProfile::Sech,
            amplitude: Complex64::new(0.5, 0.0),
            width: 1.0,
            phase_rate: 0.2,
            path: Path::linear(&[0.0], &[6.0]),
            spread: 0.0,
        }],
        q_exponent: 1.5,
    };
    let limit = main_term_limit(&vp, &vp, &nl, None).unwrap();
    let u = synth_state(&l, &vp, 100.0, &g).unwrap();
    let m = main_term(&u, &vp, 100.0, &nl).unwrap();
    assert!((m - limit).norm() <= 0.05 * limit.norm(), "{m} vs {limit}");
}

#[test]
fn linear_evolution_keeps_the_pairing() {
    let g = SpatialGrid::new(1, 512, 60.0).unwrap();
    let u0 = gaussian(&g);
    let phi = GridField::from_real_fn(&g, |x| (-(x[0] - 1.0).powi(2)).exp()).unwrap();
    let cfg = SolverConfig::new(0.01, 3.0, SolverConfig::uniform_snapshots(3.0, 0.5), 0.5);
    let traj = evolve(&u0, &cfg, None, &Default::default()).unwrap();
    let p0 = u0.inner(&phi).unwrap();
    for s in &traj.snapshots {
        let t = s.time().unwrap();
        let p = nls_core::glassey::pairing(s, &phi, t).unwrap();
        assert!((p - p0).norm() <= 1e-12, "t = {t}");
    }
}
