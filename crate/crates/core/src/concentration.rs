//! Atomic concentration measures `ν`, smooth cutoffs `ψₙ` around their
//! atoms, and the test-function sequence `φ̂ₙ = (1 - ψₙ) ĝₙ` that separates
//! the scattering profile from the concentrating part at `p = 1`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{
    ball_volume, LocalizedPathSpec, NonlinearitySpec, PotentialComponent, PotentialSpec,
};
use crate::grid::{GridField, Space, SpatialGrid, MAX_DIM};
use crate::quadrature::simpson;
use crate::spectral::{apply_multiplier, forward_transform};

/// Coordinates in which atom positions are expressed.
///
/// `t^d |l(t, t x)|²` concentrates at the limit velocity `v`, while the
/// tilde-frame density `|l̃(t, y)|²` (with `ũ` sampled at `x / 2t`)
/// concentrates at `v / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureFrame {
    Velocity,
    Tilde,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicMeasure {
    pub dim: usize,
    pub frame: MeasureFrame,
    /// `(position, mass)` with `mass ≥ 0`.
    pub atoms: Vec<([f64; MAX_DIM], f64)>,
}

impl AtomicMeasure {
    pub fn empty(dim: usize, frame: MeasureFrame) -> Self {
        Self { dim, frame, atoms: Vec::new() }
    }

    pub fn new(dim: usize, frame: MeasureFrame, atoms: Vec<([f64; MAX_DIM], f64)>) -> Result<Self> {
        for (x, m) in &atoms {
            if !(m.is_finite() && *m >= 0.0) || x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain("atoms need finite positions and nonnegative masses".into()));
            }
        }
        let mut nu = Self::empty(dim, frame);
        for (x, m) in atoms {
            nu.add(x, m);
        }
        Ok(nu)
    }

    /// Adds mass at `x`, merging with an existing atom at the same point.
    fn add(&mut self, x: [f64; MAX_DIM], m: f64) {
        match self.atoms.iter_mut().find(|(y, _)| same_point(y, &x)) {
            Some(a) => a.1 += m,
            None => self.atoms.push((x, m)),
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { atoms: self.atoms.iter().map(|(x, m)| (*x, m * factor)).collect(), ..self.clone() }
    }

    pub fn to_frame(&self, frame: MeasureFrame) -> Self {
        let factor = match (self.frame, frame) {
            (MeasureFrame::Velocity, MeasureFrame::Tilde) => 0.5,
            (MeasureFrame::Tilde, MeasureFrame::Velocity) => 2.0,
            _ => 1.0,
        };
        let atoms = self.atoms.iter().map(|(x, m)| ([x[0] * factor, x[1] * factor], *m)).collect();
        Self { dim: self.dim, frame, atoms }
    }

    /// `Σ m_k f(x_k)`.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.atoms.iter().map(|(x, m)| m * f(&x[..self.dim])).sum()
    }
}

fn same_point(a: &[f64; MAX_DIM], b: &[f64; MAX_DIM]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0))
}

fn component_limit_velocity(path: &crate::fields::Path, what: &str) -> Result<[f64; MAX_DIM]> {
    path.limit_velocity()
        .ok_or_else(|| Error::Domain(format!("{what}: limit velocity c(t)/t is undefined for this path")))
}

/// `ν = Σ_k δ(x - v_k) limsup ‖l_k(t)‖₂²` in the velocity frame, the limsup
/// estimated as the maximum over `t_probe`. Square-integrable potential
/// components contribute `limsup ‖V_k(t)‖₂²` at their own limit velocities.
pub fn nu_from_paths(
    lspec: &LocalizedPathSpec,
    pot: Option<&PotentialSpec>,
    t_probe: &[f64],
    grid: &SpatialGrid,
) -> Result<AtomicMeasure> {
    let d = grid.dim();
    lspec.validate(d)?;
    if t_probe.is_empty() {
        return Err(Error::Domain("nu_from_paths needs at least one probe time".into()));
    }
    let mut nu = AtomicMeasure::empty(d, MeasureFrame::Velocity);
    for (k, c) in lspec.components.iter().enumerate() {
        let v = component_limit_velocity(&c.path, &format!("localized.components[{k}]"))?;
        let single = LocalizedPathSpec { components: vec![c.clone()], q_exponent: lspec.q_exponent };
        let mut mass: f64 = 0.0;
        for &t in t_probe {
            let f = GridField::from_fn(grid, |x| single.value_at(x, t, d))?;
            mass = mass.max(f.l2_norm_sq());
        }
        nu.add(v, mass);
    }
    if let Some(pot) = pot {
        pot.validate(d)?;
        if !pot.atoms.is_empty() {
            return Err(Error::Scope("point interactions have no square-integrable concentration profile".into()));
        }
        for (k, c) in pot.components.iter().enumerate() {
            if c.l2_mass(d).is_none() {
                continue;
            }
            let v = component_limit_velocity(&c.path, &format!("potential.components[{k}]"))?;
            let mut mass: f64 = 0.0;
            for &t in t_probe {
                let f = sample_component(pot, c, t, grid)?;
                mass = mass.max(f.l2_norm_sq());
            }
            nu.add(v, mass);
        }
    }
    Ok(nu)
}

fn sample_component(pot: &PotentialSpec, c: &PotentialComponent, t: f64, grid: &SpatialGrid) -> Result<GridField> {
    let single = PotentialSpec { components: vec![c.clone()], atoms: vec![], time_modulation: pot.time_modulation.clone() };
    GridField::from_fn(grid, |x| single.value_at(x, t, 1.0, |_| true, false))
}

/// `e^{-1/s}` for `s > 0`, zero otherwise.
fn flat_exp(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

/// Smooth monotone transition from 0 (`s ≤ 0`) to 1 (`s ≥ 1`).
fn transition(s: f64) -> f64 {
    let a = flat_exp(s);
    let b = flat_exp(1.0 - s);
    a / (a + b)
}

/// `χ`: smooth, `1` on `|x| ≤ 1`, `0` on `|x| ≥ 2`.
pub fn standard_bump(x: &[f64]) -> f64 {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    1.0 - transition(r - 1.0)
}

/// `λ`: smooth monotone, `0` on `s ≤ 1/2`, `1` on `s ≥ 1`.
pub fn standard_step(s: f64) -> f64 {
    transition(2.0 * s - 1.0)
}

/// One stage of the cutoff family.
#[derive(Debug, Clone, PartialEq)]
pub struct Cutoff {
    pub epsilon: f64,
    pub centers: Vec<[f64; MAX_DIM]>,
    pub radius: f64,
    /// `ψ` sampled on the requested grid.
    pub psi: GridField,
    /// `‖ψ‖₁` by quadrature of the analytic `ψ`, independent of the grid.
    pub achieved_l1: f64,
    /// `ν(Wᶜ)`: mass not covered by the balls `B(c_k, r)`.
    pub deficit: f64,
}

impl Cutoff {
    /// `ψ(x) = λ(Σ_k χ((x - c_k)/r))`.
    pub fn value_at(&self, x: &[f64]) -> f64 {
        psi_value(&self.centers, self.radius, x)
    }
}

fn psi_value(centers: &[[f64; MAX_DIM]], r: f64, x: &[f64]) -> f64 {
    let s: f64 = centers
        .iter()
        .map(|c| {
            let y: Vec<f64> = x.iter().zip(c).map(|(a, b)| (a - b) / r).collect();
            standard_bump(&y)
        })
        .sum();
    standard_step(s)
}

/// `∫ ψ` over the union of the doubled balls, each point counted once.
fn psi_l1(centers: &[[f64; MAX_DIM]], r: f64, d: usize) -> f64 {
    let owner = |x: &[f64], k: usize| -> bool {
        // The point belongs to the first ball (in order) whose double contains it.
        centers[..k].iter().all(|c| x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>() >= 4.0 * r * r)
    };
    let mut total = 0.0;
    for (k, c) in centers.iter().enumerate() {
        total += match d {
            1 => simpson(
                |x| if owner(&[x], k) { psi_value(centers, r, &[x]) } else { 0.0 },
                c[0] - 2.0 * r,
                c[0] + 2.0 * r,
                2000,
            ),
            _ => {
                let m = 600;
                let h = 4.0 * r / m as f64;
                let mut s = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        let x = [c[0] - 2.0 * r + (i as f64 + 0.5) * h, c[1] - 2.0 * r + (j as f64 + 0.5) * h];
                        if owner(&x, k) {
                            s += psi_value(centers, r, &x);
                        }
                    }
                }
                s * h * h
            }
        };
    }
    total
}

/// Covers the heaviest atoms until the uncovered mass is below `ε·ν(ℝ^d)`
/// with equal balls of total volume `ε`, and builds `ψ` on `grid`.
///
/// `‖ψ‖₁ ≤ Σ|B(c_k, 2r)| = 2^d ε ≤ 4^d ε`.
pub fn build_cutoff(nu: &AtomicMeasure, epsilon: f64, grid: &SpatialGrid) -> Result<Cutoff> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain(format!("cutoff needs ε > 0, got {epsilon}")));
    }
    let d = grid.dim();
    if nu.dim != d {
        return Err(Error::GridMismatch("measure and grid dimensions differ".into()));
    }
    let total = nu.total_mass();
    let mut order: Vec<usize> = (0..nu.atoms.len()).collect();
    order.sort_by(|a, b| nu.atoms[*b].1.total_cmp(&nu.atoms[*a].1));
    let mut centers = Vec::new();
    let mut uncovered = total;
    for i in order {
        if uncovered < epsilon * total || nu.atoms[i].1 == 0.0 {
            break;
        }
        centers.push(nu.atoms[i].0);
        uncovered -= nu.atoms[i].1;
    }
    if centers.is_empty() {
        return Ok(Cutoff {
            epsilon,
            centers,
            radius: 0.0,
            psi: GridField::zeros(grid, Space::Physical),
            achieved_l1: 0.0,
            deficit: total.max(0.0),
        });
    }
    let radius = (epsilon / (centers.len() as f64 * ball_volume(d))).powf(1.0 / d as f64);
    for c in &centers {
        for a in 0..d {
            if c[a].abs() + 4.0 * radius > 0.5 * grid.lengths()[a] {
                return Err(Error::Domain(format!("atom at {:?} is within 4r of the box edge", &c[..d])));
            }
        }
    }
    let psi = GridField::from_real_fn(grid, |x| psi_value(&centers, radius, x))?;
    let achieved_l1 = psi_l1(&centers, radius, d);
    let deficit = nu
        .atoms
        .iter()
        .filter(|(x, _)| !centers.iter().any(|c| same_point(c, x)))
        .map(|a| a.1)
        .sum();
    Ok(Cutoff { epsilon, centers, radius, psi, achieved_l1, deficit })
}

/// Multilinear interpolation of a physical field at an arbitrary point
/// (zero outside the box).
pub fn interpolate_field(f: &GridField, x: &[f64]) -> Complex64 {
    let g = f.grid();
    let d = g.dim();
    let n = g.n();
    let mut base = [0usize; MAX_DIM];
    let mut frac = [0.0; MAX_DIM];
    for a in 0..d {
        let s = (x[a] - g.coordinate(a, 0)) / g.spacing(a);
        if !(s >= 0.0 && s <= (n - 1) as f64) {
            return Complex64::new(0.0, 0.0);
        }
        let i = (s.floor() as usize).min(n - 2);
        base[a] = i;
        frac[a] = s - i as f64;
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut idx = 0;
        for a in 0..d {
            let bit = (corner >> a) & 1;
            w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
            idx = idx * n + base[a] + bit;
        }
        acc += w * f.values()[idx];
    }
    acc
}

/// One element of the test-function sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TestStage {
    pub n: usize,
    pub cutoff: Cutoff,
    /// `φ̂ₙ` on the frequency lattice in centred order (the dual grid).
    pub phi_hat: GridField,
    /// `⟨|v̂₊| v̂₊, φ̂ₙ⟩`.
    pub main: Complex64,
    /// `⟨ν, |φ̂ₙ|⟩` in the tilde frame.
    pub nu_pairing: f64,
    /// `ν(Wₙᶜ) ‖φ̂ₙ‖_∞`, an upper bound for `nu_pairing`.
    pub nu_bound: f64,
    pub g_sup: f64,
}

/// Gaussian convolution of width `s` of a field on its own lattice, done as a
/// Fourier multiplier so the discrete kernel is positive with unit sum.
fn mollify(f: &GridField, s: f64) -> Result<GridField> {
    apply_multiplier(f, |k| Complex64::new((-0.5 * s * s * k.iter().map(|v| v * v).sum::<f64>()).exp(), 0.0))
}

/// `φ̂ₙ = (1 - ψₙ) ĝₙ` for `n = 1..=n_max`, with `εₙ = 2^{-n}` and `ĝₙ` the
/// mollified `v̂₊ / max(|v̂₊|, ‖v̂₊‖_∞ / n)`.
///
/// `nu` may be given in either frame; it is paired in the tilde frame.
pub fn test_sequence(
    v_plus: &GridField,
    nu: &AtomicMeasure,
    n_max: usize,
    nl: &NonlinearitySpec,
) -> Result<Vec<TestStage>> {
    let d = v_plus.grid().dim();
    if !nl.unit_power_range(d) {
        return Err(Error::Scope("the test sequence applies to the power nonlinearity with p = 1".into()));
    }
    let vhat = forward_transform(v_plus)?.frequency_as_physical()?;
    let top = vhat.sup_norm();
    if top == 0.0 {
        return Err(Error::Domain("v₊ must be nonzero".into()));
    }
    let nu_t = nu.to_frame(MeasureFrame::Tilde);
    let lattice = vhat.grid().clone();
    let s = 2.0 * lattice.spacing(0);
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let delta = top / n as f64;
        let raw = vhat.map(|z| z / z.norm().max(delta));
        let g = mollify(&raw, s)?;
        let cutoff = build_cutoff(&nu_t, 0.5f64.powi(n as i32), &lattice)?;
        let phi_hat = g.zip_with(&cutoff.psi, |a, b| a * (1.0 - b.re))?;
        let weighted = vhat.map(|z| z * z.norm());
        let main = weighted.inner(&phi_hat)?;
        let at = |x: &[f64]| (1.0 - cutoff.value_at(x)) * interpolate_field(&g, x).norm();
        let nu_pairing = nu_t.integrate(at);
        let nu_bound = cutoff.deficit * phi_hat.sup_norm();
        out.push(TestStage { n, main, nu_pairing, nu_bound, g_sup: g.sup_norm(), phi_hat, cutoff });
    }
    Ok(out)
}

/// `Q(t) = ⟨t^d [|l(t, t·)|² + |V(t, t·)|²], φ⟩` and the slack
/// `⟨ν, φ⟩ - sup_{s ≥ t} Q(s)` over the sampled times.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub slack: Vec<f64>,
    pub nu_pairing: f64,
}

impl HypothesisSeries {
    /// Slack ≥ `-rel_tol ⟨ν, φ⟩` at every sampled `t ≥ t_min`.
    pub fn satisfied_after(&self, t_min: f64, rel_tol: f64) -> bool {
        let floor = -rel_tol * self.nu_pairing.abs();
        self.times.iter().zip(&self.slack).filter(|(t, _)| **t >= t_min).all(|(_, s)| *s >= floor)
    }
}

fn check_test_function(phi: &GridField) -> Result<()> {
    phi.expect_space(Space::Physical)?;
    let top = phi.sup_norm();
    if phi.values().iter().any(|z| z.re < 0.0 || z.im.abs() > 1e-14 * top.max(1.0)) {
        return Err(Error::Domain("test function must be real and nonnegative".into()));
    }
    let g = phi.grid();
    let (argmax, _) = phi
        .values()
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, z)| if z.re > acc.1 { (i, z.re) } else { acc });
    let ij = g.unflatten(argmax);
    if top > 0.0 && (0..g.dim()).any(|a| ij[a] == 0 || ij[a] == g.n() - 1) {
        return Err(Error::Domain("test function must attain its maximum in the interior".into()));
    }
    Ok(())
}

/// Substitution-sampled check of `⟨ν, φ⟩ ≥ limsup Q(t)` with `ν` in the velocity frame.
pub fn hypothesis_check(
    lspec: &LocalizedPathSpec,
    pot: &PotentialSpec,
    nu: &AtomicMeasure,
    phi: &GridField,
    t_list: &[f64],
) -> Result<HypothesisSeries> {
    check_test_function(phi)?;
    let g = phi.grid();
    let d = g.dim();
    if !pot.atoms.is_empty() {
        return Err(Error::Scope("point interactions are outside the square-integrable potential class".into()));
    }
    let nu_v = nu.to_frame(MeasureFrame::Velocity);
    let nu_pairing = nu_v.integrate(|x| interpolate_field(phi, x).re);
    let mut values = Vec::with_capacity(t_list.len());
    for &t in t_list {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("hypothesis check needs t > 0, got {t}")));
        }
        let td = t.powi(d as i32);
        let q: f64 = phi
            .values()
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let p = g.point(i);
                let x: Vec<f64> = p[..d].iter().map(|v| v * t).collect();
                let l = lspec.value_at(&x, t, d).norm_sqr();
                let v = pot.value_at(&x, t, 1.0, |_| true, false).norm_sqr();
                td * (l + v) * w.re
            })
            .sum::<f64>()
            * g.cell_volume();
        values.push(q);
    }
    let mut slack = vec![0.0; values.len()];
    let mut tail: f64 = f64::NEG_INFINITY;
    for i in (0..values.len()).rev() {
        tail = tail.max(values[i]);
        slack[i] = nu_pairing - tail;
    }
    Ok(HypothesisSeries { times: t_list.to_vec(), values, slack, nu_pairing })
}

/// `(|⟨|l̃|l̃, φ̂⟩|, ⟨|l̃|², |φ̂|⟩, ⟨ν, |φ̂|⟩)` at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LTermBound {
    pub t: f64,
    pub cubic: f64,
    pub density: f64,
    pub atomic: f64,
}

/// The localized-term chain with `φ̂` a function of the tilde variable `y`
/// sampled on its own (fine) grid and `l̃(t, y) = (2it)^{d/2} e^{-it|y|²} l(t, 2ty)`.
pub fn l_term_bound_check(
    lspec: &LocalizedPathSpec,
    nu: &AtomicMeasure,
    phi_hat: &GridField,
    t_list: &[f64],
    nl: &NonlinearitySpec,
) -> Result<Vec<LTermBound>> {
    let g = phi_hat.grid();
    let d = g.dim();
    if !nl.unit_power_range(d) {
        return Err(Error::Scope("the localized-term chain applies to the power nonlinearity with p = 1".into()));
    }
    phi_hat.expect_space(Space::Physical)?;
    let nu_t = nu.to_frame(MeasureFrame::Tilde);
    let atomic = nu_t.integrate(|y| interpolate_field(phi_hat, y).norm());
    let mut out = Vec::with_capacity(t_list.len());
    for &t in t_list {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("tilde frame needs t > 0, got {t}")));
        }
        let c = crate::spectral::dilation_factor(t, d);
        let mut cubic = Complex64::new(0.0, 0.0);
        let mut density = 0.0;
        for (i, ph) in phi_hat.values().iter().enumerate() {
            let p = g.point(i);
            let y = &p[..d];
            let x: Vec<f64> = y.iter().map(|v| 2.0 * t * v).collect();
            let y2: f64 = y.iter().map(|v| v * v).sum();
            let lt = c * Complex64::from_polar(1.0, -t * y2) * lspec.value_at(&x, t, d);
            cubic += lt.norm() * lt * ph.conj();
            density += lt.norm_sqr() * ph.norm();
        }
        let w = g.cell_volume();
        out.push(LTermBound { t, cubic: cubic.norm() * w, density: density * w, atomic });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{LocalizedComponent, LocalizedProfile, Path};
    use crate::test_util::gaussian;

    fn soliton(v: f64, amp: f64, spread: f64) -> LocalizedComponent {
        LocalizedComponent {
            profile: LocalizedProfile::Gaussian,
            amplitude: Complex64::new(amp, 0.0),
            width: 1.0,
            phase_rate: 0.3,
            path: Path::linear(&[0.0], &[v]),
            spread,
        }
    }

    fn spec(cs: Vec<LocalizedComponent>) -> LocalizedPathSpec {
        LocalizedPathSpec { components: cs, q_exponent: 1.5 }
    }

    fn unit_power() -> NonlinearitySpec {
        NonlinearitySpec::power(1.0, Complex64::new(1.0, 0.0)).unwrap()
    }

    #[test]
    fn nu_merges_equal_velocities() {
        let g = SpatialGrid::new(1, 2048, 400.0).unwrap();
        let probes = [1.0, 10.0];
        let one = nu_from_paths(&spec(vec![soliton(2.0, 1.0, 0.0)]), None, &probes, &g).unwrap();
        let m = std::f64::consts::PI.sqrt();
        assert_eq!(one.atoms.len(), 1);
        assert!((one.atoms[0].1 - m).abs() < 1e-10 && one.atoms[0].0[0] == 2.0);
        let two = nu_from_paths(&spec(vec![soliton(2.0, 1.0, 0.0), soliton(2.0, 2.0, 0.0)]), None, &probes, &g).unwrap();
        assert_eq!(two.atoms.len(), 1);
        assert!((two.atoms[0].1 - 5.0 * m).abs() < 1e-9);
        let spread = nu_from_paths(&spec(vec![soliton(2.0, 1.0, 0.5)]), None, &probes, &g).unwrap();
        assert!((spread.atoms[0].1 - m).abs() < 1e-8);
        let mut accel = soliton(1.0, 1.0, 0.0);
        accel.path = Path { coefficients: vec![vec![0.0], vec![1.0], vec![0.01]] };
        assert!(nu_from_paths(&spec(vec![accel]), None, &probes, &g).is_err());
    }

    #[test]
    fn bump_and_step_shapes() {
        assert_eq!(standard_bump(&[0.0]), 1.0);
        assert_eq!(standard_bump(&[1.0]), 1.0);
        assert_eq!(standard_bump(&[2.5]), 0.0);
        assert_eq!(standard_bump(&[2.0, 0.0]), 0.0);
        assert_eq!(standard_step(0.4), 0.0);
        assert_eq!(standard_step(1.3), 1.0);
        let s: Vec<f64> = (0..200).map(|k| standard_step(k as f64 / 150.0)).collect();
        assert!(s.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn single_atom_cutoff() {
        let g = SpatialGrid::new(1, 4096, 8.0).unwrap();
        let nu = AtomicMeasure::new(1, MeasureFrame::Velocity, vec![([1.0, 0.0], 1.0)]).unwrap();
        let c = build_cutoff(&nu, 0.1, &g).unwrap();
        assert!(4.0 * c.radius <= 0.4 + 1e-15);
        assert_eq!(c.value_at(&[1.0]), 1.0);
        for (i, z) in c.psi.values().iter().enumerate() {
            let x = g.point(i)[0];
            assert!((0.0..=1.0).contains(&z.re));
            if (x - 1.0).abs() >= 2.0 * c.radius {
                assert_eq!(z.re, 0.0);
            }
            if (x - 1.0).abs() <= c.radius {
                assert_eq!(z.re, 1.0);
            }
        }
        let half = build_cutoff(&nu, 0.05, &g).unwrap();
        let ratio = c.achieved_l1 / half.achieved_l1;
        assert!((ratio - 2.0).abs() <= 0.2, "ratio {ratio}");
        assert!(c.achieved_l1 <= 4.0 * 0.1);
    }

    #[test]
    fn two_atoms_both_covered() {
        let g = SpatialGrid::new(2, 128, 8.0).unwrap();
        let nu = AtomicMeasure::new(2, MeasureFrame::Tilde, vec![([1.0, 0.5], 1.0), ([-1.0, -0.5], 0.5)]).unwrap();
        let c = build_cutoff(&nu, 0.1, &g).unwrap();
        assert_eq!(c.value_at(&[1.0, 0.5]), 1.0);
        assert_eq!(c.value_at(&[-1.0, -0.5]), 1.0);
        assert_eq!(c.deficit, 0.0);
        assert!(c.achieved_l1 <= 16.0 * 0.1);
        let edge = AtomicMeasure::new(2, MeasureFrame::Tilde, vec![([3.99, 0.0], 1.0)]).unwrap();
        assert!(build_cutoff(&edge, 0.1, &g).is_err());
    }

    #[test]
    fn test_sequence_separates_profile_from_atom() {
        let g = SpatialGrid::new(1, 1024, 80.0).unwrap();
        let vp = gaussian(&g, 1.0);
        let mass = vp.l2_norm_sq();
        let nu = AtomicMeasure::new(1, MeasureFrame::Velocity, vec![([1.0, 0.0], mass)]).unwrap();
        let seq = test_sequence(&vp, &nu, 20, &unit_power()).unwrap();
        assert!(seq.iter().any(|s| s.main.re >= 0.9 * mass && s.nu_pairing <= 0.01 * mass));
        for s in &seq {
            assert!(s.cutoff.achieved_l1 <= 2f64.powi(-(s.n as i32)) * 4.0);
            assert!(s.g_sup <= 1.0 + 1e-10);
            assert!(s.nu_pairing <= s.nu_bound + 1e-12);
        }
        assert!(seq.windows(2).all(|w| w[1].nu_pairing <= w[0].nu_pairing + 1e-10));
        let empty = AtomicMeasure::empty(1, MeasureFrame::Velocity);
        assert!(test_sequence(&vp, &empty, 5, &unit_power()).unwrap().iter().all(|s| s.nu_pairing == 0.0));
        let half = NonlinearitySpec::power(0.5, Complex64::new(1.0, 0.0)).unwrap();
        assert!(matches!(test_sequence(&vp, &nu, 3, &half), Err(Error::Scope(_))));
        let zero = GridField::zeros(&g, Space::Physical);
        assert!(matches!(test_sequence(&zero, &nu, 3, &unit_power()), Err(Error::Domain(_))));
    }

    fn wide_bump(grid: &SpatialGrid, center: f64) -> GridField {
        GridField::from_real_fn(grid, |x| (-(x[0] - center).powi(2) / 2.0).exp()).unwrap()
    }

    #[test]
    fn hypothesis_holds_for_rigid_soliton_and_fails_with_deficit() {
        let g = SpatialGrid::new(1, 8192, 16.0).unwrap();
        let l = spec(vec![soliton(1.5, 1.0, 0.0)]);
        let nu = nu_from_paths(&l, None, &[1.0, 50.0], &SpatialGrid::new(1, 8192, 400.0).unwrap()).unwrap();
        let phi = wide_bump(&g, 1.5);
        let times = [10.0, 25.0, 50.0, 75.0, 100.0];
        let ok = hypothesis_check(&l, &PotentialSpec::default(), &nu, &phi, &times).unwrap();
        assert!(ok.satisfied_after(50.0, 0.02), "{ok:?}");
        let bad = hypothesis_check(&l, &PotentialSpec::default(), &nu.scaled(0.5), &phi, &times).unwrap();
        assert!(!bad.satisfied_after(50.0, 0.02));
        let none = hypothesis_check(
            &spec(vec![]),
            &PotentialSpec::default(),
            &AtomicMeasure::empty(1, MeasureFrame::Velocity),
            &phi,
            &times,
        )
        .unwrap();
        assert!(none.slack.iter().all(|s| *s == 0.0));
        let negative = phi.map(|z| z - 0.1);
        assert!(hypothesis_check(&l, &PotentialSpec::default(), &nu, &negative, &times).is_err());
    }

    #[test]
    fn l_term_chain() {
        let g = SpatialGrid::new(1, 16384, 8.0).unwrap();
        let l = spec(vec![soliton(1.0, 1.0, 0.0)]);
        let nu = nu_from_paths(&l, None, &[1.0], &SpatialGrid::new(1, 4096, 200.0).unwrap()).unwrap();
        let phi_hat = wide_bump(&g, 0.3).map(|z| z * Complex64::new(0.6, 0.8));
        let chain = l_term_bound_check(&l, &nu, &phi_hat, &[10.0, 100.0], &unit_power()).unwrap();
        for c in &chain {
            assert!(c.cubic <= c.density * (1.0 + 1e-12));
        }
        let last = chain.last().unwrap();
        assert!((last.density - last.atomic).abs() <= 0.05 * last.atomic, "{last:?}");
        let zero = l_term_bound_check(&spec(vec![]), &AtomicMeasure::empty(1, MeasureFrame::Velocity), &phi_hat, &[5.0], &unit_power())
            .unwrap();
        assert_eq!((zero[0].cubic, zero[0].density, zero[0].atomic), (0.0, 0.0, 0.0));
    }
}
