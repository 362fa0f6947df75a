//! Diagnostics built on the pairing `P(t) = ⟨u(t), e^{itΔ}φ⟩`.
//!
//! `i P'(t) = ⟨F(u), w⟩ + ⟨Vu, w⟩` with `w = e^{itΔ}φ`, and the main term
//! `(2t)^{dp/2} ⟨F(u), w⟩ = ⟨F(ũ), w̃⟩` is computed in the physical frame;
//! kernel homogeneity makes this exact on the grid for both nonlinearities.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::concentration::{AtomicMeasure, MeasureFrame};
use crate::error::{Error, Result};
use crate::fields::{
    sample_localized, sample_potential, sample_potential_where, LocalizedPathSpec, NonlinearityKind,
    NonlinearitySpec, PotentialSpec,
};
use crate::grid::{GridField, Space};
use crate::norms::{norm, NormKind};
use crate::quadrature::{fit_line, r_squared, trapezoid};
use crate::solver::{origin_cell_average, HartreeKernel, NonlinearOperator};
use crate::spectral::{apply_multiplier, forward_transform, free_propagate, modulate, tilde_transform};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `⟨u, e^{itΔ}φ⟩`.
pub fn pairing(u: &GridField, phi: &GridField, t: f64) -> Result<Complex64> {
    u.inner(&free_propagate(phi, t)?)
}

/// `(2t)^{dp/2} ⟨F(u), w⟩` with `w = e^{itΔ}φ` already propagated.
pub fn main_term_with(op: &NonlinearOperator, u: &GridField, w: &GridField, t: f64) -> Result<Complex64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("main term needs t > 0, got {t}")));
    }
    let a = op.spec().frame_exponent(u.grid().dim());
    Ok((2.0 * t).powf(a) * op.apply(u)?.inner(w)?)
}

pub fn main_term(u: &GridField, phi: &GridField, t: f64, nl: &NonlinearitySpec) -> Result<Complex64> {
    let op = NonlinearOperator::new(nl, u.grid())?;
    main_term_with(&op, u, &free_propagate(phi, t)?, t)
}

/// `⟨F(ũ), w̃⟩` evaluated on the rescaled lattice `{x_j / 2t}`.
pub fn main_term_rescaled(u: &GridField, phi: &GridField, t: f64, nl: &NonlinearitySpec) -> Result<Complex64> {
    let ut = tilde_transform(u, t)?;
    let wt = tilde_transform(&free_propagate(phi, t)?, t)?;
    NonlinearOperator::new(nl, ut.grid())?.apply(&ut)?.inner(&wt)
}

/// The `t → ∞` value of the main term for `u ≈ e^{itΔ}v₊ + l(t)`.
///
/// Power: `μ ⟨|v̂₊|^p v̂₊, φ̂⟩`. Hartree: `μ ⟨(K ∗ (|v̂₊|² + λ)) v̂₊, φ̂⟩`
/// where `λ` is the concentration measure of `|l̃|²` (tilde frame).
pub fn main_term_limit(
    v_plus: &GridField,
    phi: &GridField,
    nl: &NonlinearitySpec,
    atoms: Option<&AtomicMeasure>,
) -> Result<Complex64> {
    nl.validate()?;
    let vh = forward_transform(v_plus)?;
    let ph = forward_transform(phi)?;
    match nl.kind {
        NonlinearityKind::Power => {
            let f = vh.map(|z| nl.mu * z.norm().powf(nl.p) * z);
            f.inner(&ph)
        }
        NonlinearityKind::Hartree => {
            let vd = vh.frequency_as_physical()?;
            let pd = ph.frequency_as_physical()?;
            let lattice = vd.grid().clone();
            let d = lattice.dim();
            let a = nl.frame_exponent(d);
            let kernel = HartreeKernel::new(&lattice, nl.p)?;
            let mut pot = kernel.convolve(&vd.values().iter().map(|z| z.norm_sqr()).collect::<Vec<_>>());
            if let Some(nu) = atoms {
                let nu = nu.to_frame(MeasureFrame::Tilde);
                let origin = origin_cell_average(&lattice, a);
                for (i, v) in pot.iter_mut().enumerate() {
                    let xi = lattice.point(i);
                    *v += nu.integrate(|y| {
                        let inside = (0..d).all(|ax| (xi[ax] - y[ax]).abs() < 0.5 * lattice.spacing(ax));
                        if inside {
                            origin
                        } else {
                            (0..d).map(|ax| (xi[ax] - y[ax]).powi(2)).sum::<f64>().powf(-a / 2.0)
                        }
                    });
                }
            }
            let f = vd.map_indexed(|i, z| nl.mu * pot[i] * z);
            f.inner(&pd)
        }
    }
}

/// `⟨V(t)u, w⟩` and its short-range part with the Hölder bound
/// `‖V₁‖_{r₁} ‖u‖₂ ‖w‖_{r₃}`, `r₁ = 2/p - ε`, `1/r₃ = 1/2 - 1/r₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialTerm {
    pub value: Complex64,
    pub v1_value: Complex64,
    /// `None` when `p ≥ 1` and a short-range component is present: the
    /// exponent `r₁ = 2/p - ε` then drops below 2 and the bound does not apply.
    pub v1_bound: Option<f64>,
}

pub fn potential_term(
    u: &GridField,
    w: &GridField,
    pot: &PotentialSpec,
    t: f64,
    p: Option<f64>,
    mollify_width: f64,
) -> Result<PotentialTerm> {
    let grid = u.grid();
    if pot.is_zero() {
        return Ok(PotentialTerm { value: ZERO, v1_value: ZERO, v1_bound: Some(0.0) });
    }
    let v = sample_potential(pot, t, grid, mollify_width)?;
    let value = v.mul(u)?.inner(w)?;
    let has_v1 = pot.components.iter().any(|c| c.class.is_v1());
    if !has_v1 {
        return Ok(PotentialTerm { value, v1_value: ZERO, v1_bound: Some(0.0) });
    }
    let v1 = sample_potential_where(pot, t, grid, mollify_width, |c| c.is_v1(), false)?;
    let v1_value = v1.mul(u)?.inner(w)?;
    let r1 = match p {
        Some(p) if p >= 1.0 => return Ok(PotentialTerm { value, v1_value, v1_bound: None }),
        Some(p) => {
            let top = 2.0 / p;
            top - 0.1 * (top - 2.0)
        }
        None => 2.0,
    };
    let inv_r3 = 0.5 - 1.0 / r1;
    let w_norm = if inv_r3 <= 0.0 { w.sup_norm() } else { norm(w, NormKind::Lp(1.0 / inv_r3))? };
    let bound = norm(&v1, NormKind::Lp(r1))? * u.l2_norm() * w_norm;
    Ok(PotentialTerm { value, v1_value, v1_bound: Some(bound) })
}

/// `∫_{t₀}^{t₀+T} |⟨V₂u, w⟩| dt` and its Strichartz-type bound.
///
/// d = 1: `T^{3/4} sup‖V₂‖₁ ‖u‖_{L⁴_t L^∞} sup_{t≥t₀}‖w‖_∞`.
/// d = 2: `T^{1-1/q} sup‖V₂‖_{1+ε} ‖u‖_{L^q_t L^{r'}} sup_{t≥t₀}‖w‖_∞` with
/// `ε = 0.1`, `r' = (1+ε)/ε`, `q = 2 + ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct V2Window {
    pub t0: f64,
    pub len: f64,
    pub integral: f64,
    pub bound: f64,
}

pub fn v2_window(
    times: &[f64],
    u: &[&GridField],
    w: &[&GridField],
    pot: &PotentialSpec,
    mollify_width: f64,
    t0: f64,
    len: f64,
) -> Result<V2Window> {
    if times.len() != u.len() || times.len() != w.len() {
        return Err(Error::Range("times, states and test fields differ in length".into()));
    }
    let t1 = t0 + len;
    let tol = 1e-9 * t1.abs().max(1.0);
    let idx: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= t0 - tol && times[i] <= t1 + tol).collect();
    let covered = idx.len() >= 2
        && (times[idx[0]] - t0).abs() <= tol
        && (times[*idx.last().unwrap()] - t1).abs() <= tol;
    if !(len > 0.0) || !covered {
        return Err(Error::Range(format!("window [{t0}, {t1}] must start and end on sample times")));
    }
    let d = u[0].grid().dim();
    let (rv, ru, q) = if d == 1 { (1.0, f64::INFINITY, 4.0) } else { (1.1, 11.0, 2.1) };
    let mut ts = Vec::new();
    let mut pair = Vec::new();
    let mut unorm = Vec::new();
    let mut vsup: f64 = 0.0;
    for &i in &idx {
        let v2 = sample_potential_where(pot, times[i], u[i].grid(), mollify_width, |c| !c.is_v1(), true)?;
        ts.push(times[i]);
        pair.push(v2.mul(u[i])?.inner(w[i])?.norm());
        unorm.push(norm(u[i], NormKind::Lp(ru))?.powf(q));
        vsup = vsup.max(norm(&v2, NormKind::Lp(rv))?);
    }
    let w_sup = (0..times.len()).filter(|&i| times[i] >= t0 - tol).map(|i| w[i].sup_norm()).fold(0.0, f64::max);
    let span = ts[ts.len() - 1] - ts[0];
    let bound = span.powf(1.0 - 1.0 / q) * vsup * trapezoid(&ts, &unorm).powf(1.0 / q) * w_sup;
    Ok(V2Window { t0, len, integral: trapezoid(&ts, &pair), bound })
}

/// Central-difference check of `i P' = ⟨F(u), w⟩ + ⟨Vu, w⟩` at interior snapshots.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeCheck {
    pub times: Vec<f64>,
    pub defects: Vec<f64>,
    pub max_defect: f64,
    pub max_pairing: f64,
}

impl DerivativeCheck {
    pub fn relative_defect(&self) -> f64 {
        if self.max_pairing == 0.0 {
            self.max_defect
        } else {
            self.max_defect / self.max_pairing
        }
    }
}

pub fn derivative_check(
    times: &[f64],
    states: &[&GridField],
    phi: &GridField,
    nl: Option<&NonlinearitySpec>,
    pot: &PotentialSpec,
    mollify_width: f64,
) -> Result<DerivativeCheck> {
    if times.len() != states.len() || times.len() < 3 {
        return Err(Error::Range(format!("derivative check needs ≥ 3 snapshots, got {}", times.len())));
    }
    let delta = times[1] - times[0];
    if !(delta > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - delta).abs() > 1e-9 * delta.max(1.0)) {
        return Err(Error::Range("derivative check needs uniformly spaced snapshots".into()));
    }
    let grid = states[0].grid();
    let op = nl.map(|s| NonlinearOperator::new(s, grid)).transpose()?;
    let ws: Vec<GridField> = times.iter().map(|&t| free_propagate(phi, t)).collect::<Result<_>>()?;
    let pairs: Vec<Complex64> = states.iter().zip(&ws).map(|(u, w)| u.inner(w)).collect::<Result<_>>()?;
    let mut out = DerivativeCheck {
        times: Vec::new(),
        defects: Vec::new(),
        max_defect: 0.0,
        max_pairing: pairs.iter().map(|z| z.norm()).fold(0.0, f64::max),
    };
    for k in 1..times.len() - 1 {
        let lhs = Complex64::i() * (pairs[k + 1] - pairs[k - 1]) / (2.0 * delta);
        let mut rhs = potential_term(states[k], &ws[k], pot, times[k], None, mollify_width)?.value;
        if let Some(op) = &op {
            rhs += op.apply(states[k])?.inner(&ws[k])?;
        }
        let defect = (lhs - rhs).norm();
        out.times.push(times[k]);
        out.defects.push(defect);
        out.max_defect = out.max_defect.max(defect);
    }
    Ok(out)
}

/// Predicted growth rate of the integrated main term:
/// `∫_1^τ t^{-dp/2} dt`, equal to `log τ` at `p = 2/d`.
pub fn alpha(tau: f64, p: f64, d: usize) -> Result<f64> {
    let a = d as f64 * p / 2.0;
    if !(tau >= 2.0 && tau.is_finite()) {
        return Err(Error::Domain(format!("α needs τ ≥ 2, got {tau}")));
    }
    if !(p > 0.0) || a > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("α needs 0 < p ≤ 2/d, got p = {p}")));
    }
    if (a - 1.0).abs() <= 1e-12 {
        Ok(tau.ln())
    } else {
        Ok((tau.powf(1.0 - a) - 1.0) / (1.0 - a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthModel {
    PowerLaw,
    Logarithmic,
    Constant,
}

/// Least-squares fit of `y ≈ A (τ^b - 1)/b + B` (the `b → 0` member is
/// `A log τ + B`), with `b` profiled out over `[-1, 3]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GrowthFit {
    pub model: GrowthModel,
    /// Fitted `b`; `0` for the logarithmic and constant models.
    pub exponent: f64,
    pub coefficient: f64,
    pub offset: f64,
    pub r_squared: f64,
    /// `R²` of the logarithmic member `b = 0`.
    pub log_r_squared: f64,
    /// Plain log-log slope over the positive samples.
    pub log_log_slope: Option<f64>,
    pub warnings: Vec<String>,
}

/// Below this `|b|` the logarithmic model is selected.
pub const LOG_MODEL_THRESHOLD: f64 = 0.1;

fn basis(t: f64, b: f64) -> f64 {
    let l = t.ln();
    if (b * l).abs() < 1e-12 {
        l * (1.0 + 0.5 * b * l)
    } else {
        (b * l).exp_m1() / b
    }
}

/// `(A, B, SSR)` for fixed `b`.
fn profile(t: &[f64], y: &[f64], b: f64) -> (f64, f64, f64) {
    let n = t.len() as f64;
    let f: Vec<f64> = t.iter().map(|&s| basis(s, b)).collect();
    let mf = f.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sff: f64 = f.iter().map(|v| (v - mf).powi(2)).sum();
    let sfy: f64 = f.iter().zip(y).map(|(a, c)| (a - mf) * (c - my)).sum();
    let a = if sff > 0.0 { sfy / sff } else { 0.0 };
    let off = my - a * mf;
    let ssr = f.iter().zip(y).map(|(fv, yv)| (yv - a * fv - off).powi(2)).sum();
    (a, off, ssr)
}

pub fn growth_fit(t: &[f64], y: &[f64]) -> Result<GrowthFit> {
    if t.len() != y.len() || t.len() < 10 {
        return Err(Error::Fit(format!("growth fit needs ≥ 10 paired samples, got {}", t.len())));
    }
    if t.iter().chain(y).any(|v| !v.is_finite()) || t.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Fit("growth fit needs finite samples at positive times".into()));
    }
    let (t_min, t_max) = (t.iter().cloned().fold(f64::INFINITY, f64::min), t.iter().cloned().fold(0.0, f64::max));
    if t_max < 10.0 * t_min * (1.0 - 1e-12) {
        return Err(Error::Fit(format!("fit range [{t_min}, {t_max}] spans less than a decade")));
    }
    let mut warnings = Vec::new();
    let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] > 0.0).collect();
    if pos.len() < y.len() {
        warnings.push(format!("{} nonpositive samples excluded from the log-log slope", y.len() - pos.len()));
    }
    let log_log_slope = if pos.len() >= 2 {
        let lx: Vec<f64> = pos.iter().map(|&i| t[i].ln()).collect();
        let ly: Vec<f64> = pos.iter().map(|&i| y[i].ln()).collect();
        fit_line(&lx, &ly).ok().map(|f| f.slope)
    } else {
        None
    };
    let (la, lb, _) = profile(t, y, 0.0);
    let log_r_squared = r_squared(y, |i| la * basis(t[i], 0.0) + lb);
    let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let spread = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - y.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread <= 1e-3 * scale || scale == 0.0 {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        return Ok(GrowthFit {
            model: GrowthModel::Constant,
            exponent: 0.0,
            coefficient: 0.0,
            offset: mean,
            r_squared: r_squared(y, |_| mean),
            log_r_squared,
            log_log_slope,
            warnings,
        });
    }
    let ssr = |b: f64| profile(t, y, b).2;
    let (lo, hi, steps) = (-1.0, 3.0, 400);
    let step = (hi - lo) / steps as f64;
    let best = (0..=steps)
        .map(|k| lo + k as f64 * step)
        .min_by(|a, b| ssr(*a).total_cmp(&ssr(*b)))
        .unwrap_or(0.0);
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut e) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fe) = (ssr(c), ssr(e));
    while b - a > 1e-11 {
        if fc < fe {
            b = e;
            e = c;
            fe = fc;
            c = b - g * (b - a);
            fc = ssr(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + g * (b - a);
            fe = ssr(e);
        }
    }
    let b_hat = 0.5 * (a + b);
    if b_hat <= lo + 1e-6 || b_hat >= hi - 1e-6 {
        warnings.push(format!("fitted exponent {b_hat} sits on the search boundary"));
    }
    let (coef, off, _) = profile(t, y, b_hat);
    let fit_r2 = r_squared(y, |i| coef * basis(t[i], b_hat) + off);
    if b_hat.abs() <= LOG_MODEL_THRESHOLD {
        return Ok(GrowthFit {
            model: GrowthModel::Logarithmic,
            exponent: 0.0,
            coefficient: la,
            offset: lb,
            r_squared: log_r_squared,
            log_r_squared,
            log_log_slope,
            warnings,
        });
    }
    Ok(GrowthFit {
        model: GrowthModel::PowerLaw,
        exponent: b_hat,
        coefficient: coef,
        offset: off,
        r_squared: fit_r2,
        log_r_squared,
        log_log_slope,
        warnings,
    })
}

/// `‖u - l(t) - e^{itΔ}v₊‖₂` and `‖(M(t) - 1) v₊‖₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub resid_l2: f64,
    pub mod_resid: f64,
}

pub fn residual_decomposition(
    u: &GridField,
    lspec: Option<&LocalizedPathSpec>,
    v_plus: &GridField,
    t: f64,
) -> Result<Residual> {
    let mut r = u.sub(&free_propagate(v_plus, t)?)?;
    if let Some(l) = lspec.filter(|l| !l.is_empty()) {
        r = r.sub(&sample_localized(l, t, u.grid())?.field)?;
    }
    let mod_resid = if t > 0.0 { modulate(v_plus, t, 1)?.sub(v_plus)?.l2_norm() } else { 0.0 };
    Ok(Residual { resid_l2: r.l2_norm(), mod_resid })
}

/// `‖ũ - v̂₊ - l̃‖₂` on the rescaled lattice, with `v̂₊` by direct quadrature.
pub fn tilde_residual(u: &GridField, lspec: Option<&LocalizedPathSpec>, v_plus: &GridField, t: f64) -> Result<f64> {
    let ut = tilde_transform(u, t)?;
    let vh = crate::spectral::direct_fourier(v_plus, ut.grid())?;
    let mut r = ut.map_indexed(|i, z| z - vh[i]);
    if let Some(l) = lspec.filter(|l| !l.is_empty()) {
        let lt = tilde_transform(&sample_localized(l, t, u.grid())?.field, t)?;
        r = r.sub(&lt)?;
    }
    Ok(r.l2_norm())
}

/// A test function aligned with `v̂₊` so that the main-term limit is
/// positive after rotating by `μ̄/|μ|`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub phi: GridField,
    pub phi_hat: GridField,
    /// Power: `Re ⟨|v̂₊|^p v̂₊, φ̂⟩`. Hartree: `Re ⟨(K ∗ |v̂₊|²) v̂₊, φ̂⟩`.
    pub positivity: f64,
    /// Hartree: `⟨(K ∗ |v̂₊|²) v̂', v̂₊ - v̂'⟩` with `v̂'` the truncation, zero by disjoint support.
    pub cross_term: Option<Complex64>,
}

/// `φ̂` = mollified `v̂₊ min(1, n/|v̂₊|)` (power) or `v̂₊ 1{|v̂₊| ≤ n}` (Hartree).
///
/// Mollification is Gaussian convolution in frequency, carried out as the
/// physical-space envelope `e^{-s²|x|²/2}`; `s` is halved until positivity holds.
pub fn choose_test_function(v_plus: &GridField, nl: &NonlinearitySpec, level: f64) -> Result<TestFunction> {
    nl.validate()?;
    if !(level > 0.0 && level.is_finite()) {
        return Err(Error::Level(format!("truncation level must be positive, got {level}")));
    }
    let grid = v_plus.grid();
    let vh = forward_transform(v_plus)?;
    if vh.sup_norm() == 0.0 {
        return Err(Error::Domain("v₊ must be nonzero".into()));
    }
    let (raw, cross) = match nl.kind {
        NonlinearityKind::Power => (vh.map(|z| if z.norm() > level { z * (level / z.norm()) } else { z }), None),
        NonlinearityKind::Hartree => {
            let kept = vh.map(|z| if z.norm() <= level { z } else { ZERO });
            if kept.sup_norm() == 0.0 {
                return Err(Error::Level(format!("no frequency has |v̂₊| ≤ {level}")));
            }
            let rest = vh.sub(&kept)?;
            let conv = hartree_in_frequency(&vh, nl.p)?;
            let cross = conv.mul(&kept)?.inner(&rest)?;
            (kept, Some(cross))
        }
    };
    let raw_phys = crate::spectral::inverse_transform(&raw)?;
    let mut s = 2.0 * 2.0 * PI / grid.lengths()[0];
    for _ in 0..12 {
        let phi = raw_phys.map_indexed(|i, z| z * (-0.5 * s * s * grid.radius_sq(i)).exp());
        let phi_hat = forward_transform(&phi)?;
        let positivity = match nl.kind {
            NonlinearityKind::Power => vh.map(|z| z.norm().powf(nl.p) * z).inner(&phi_hat)?.re,
            NonlinearityKind::Hartree => hartree_in_frequency(&vh, nl.p)?.mul(&vh)?.inner(&phi_hat)?.re,
        };
        if positivity > 0.0 {
            return Ok(TestFunction { phi, phi_hat, positivity, cross_term: cross });
        }
        s *= 0.5;
    }
    Err(Error::Domain("could not make the main-term limit positive".into()))
}

/// `K ∗ |v̂|²` on the frequency lattice, returned in FFT order.
fn hartree_in_frequency(vh: &GridField, p: f64) -> Result<GridField> {
    let vd = vh.frequency_as_physical()?;
    let kernel = HartreeKernel::new(vd.grid(), p)?;
    let pot = kernel.convolve(&vd.values().iter().map(|z| z.norm_sqr()).collect::<Vec<_>>());
    let f = vd.map_indexed(|i, _| Complex64::new(pot[i], 0.0));
    f.physical_as_frequency(vh.grid())
}

/// One sample of the diagnostic time series; `None` marks a quantity not
/// computed in this run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub t: f64,
    pub pairing: Complex64,
    pub main: Option<Complex64>,
    pub pot: Option<Complex64>,
    pub resid_l2: Option<f64>,
    pub mod_resid: Option<f64>,
    pub mass: f64,
    /// `‖l̃(t)‖_q = (2t)^{d/2 - d/q} ‖l(t)‖_q`.
    pub l_q_norm: Option<f64>,
}

/// Everything needed to turn one state into a [`SeriesRow`].
#[derive(Debug, Clone)]
pub struct SeriesContext<'a> {
    pub phi: &'a GridField,
    pub op: Option<NonlinearOperator>,
    pub pot: Option<&'a PotentialSpec>,
    pub mollify_width: f64,
    pub lspec: Option<&'a LocalizedPathSpec>,
    pub v_plus: Option<&'a GridField>,
}

impl SeriesContext<'_> {
    pub fn row(&self, u: &GridField, t: f64) -> Result<SeriesRow> {
        u.expect_space(Space::Physical)?;
        let w = free_propagate(self.phi, t)?;
        let pairing = u.inner(&w)?;
        let main = match &self.op {
            Some(op) if t > 0.0 => Some(main_term_with(op, u, &w, t)?),
            _ => None,
        };
        let p = self.op.as_ref().map(|o| o.spec().p);
        let pot = match self.pot {
            Some(pot) => Some(potential_term(u, &w, pot, t, p, self.mollify_width)?.value),
            None => None,
        };
        let (resid_l2, mod_resid) = match self.v_plus {
            Some(v) => {
                let r = residual_decomposition(u, self.lspec, v, t)?;
                (Some(r.resid_l2), Some(r.mod_resid))
            }
            None => (None, None),
        };
        let l_q_norm = match self.lspec {
            Some(l) if t > 0.0 && !l.is_empty() => {
                let d = u.grid().dim() as f64;
                let s = sample_localized(l, t, u.grid())?;
                Some((2.0 * t).powf(d / 2.0 - d / l.q_exponent) * s.lq_norm)
            }
            _ => None,
        };
        Ok(SeriesRow { t, pairing, main, pot, resid_l2, mod_resid, mass: u.l2_norm_sq(), l_q_norm })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairingSeries {
    pub dim: usize,
    pub nonlinearity: Option<NonlinearitySpec>,
    pub phi_norm: f64,
    pub rows: Vec<SeriesRow>,
}

impl PairingSeries {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    /// `|P(t)| ≤ sup_s ‖u(s)‖₂ ‖φ‖₂` at every sample.
    pub fn pairing_bounded(&self) -> bool {
        let m = self.rows.iter().map(|r| r.mass).fold(0.0, f64::max).sqrt();
        self.rows.iter().all(|r| r.pairing.norm() <= m * self.phi_norm * (1.0 + 1e-12) + 1e-10)
    }

    /// `Re[e^{-i arg μ}(⟨F(u), w⟩ + ⟨Vu, w⟩)]` at each sample (`t > 0`).
    pub fn glassey_integrand(&self) -> Result<Vec<(f64, f64)>> {
        let (a, rot) = match &self.nonlinearity {
            Some(nl) => (nl.frame_exponent(self.dim), Complex64::from_polar(1.0, -nl.mu.arg())),
            None => (0.0, Complex64::new(1.0, 0.0)),
        };
        self.rows
            .iter()
            .filter(|r| r.t > 0.0)
            .map(|r| {
                let main = match (&self.nonlinearity, r.main) {
                    (None, _) => ZERO,
                    (Some(_), Some(m)) => m * (2.0 * r.t).powf(-a),
                    (Some(_), None) => return Err(Error::Range(format!("main term missing at t = {}", r.t))),
                };
                Ok((r.t, (rot * (main + r.pot.unwrap_or(ZERO))).re))
            })
            .collect()
    }

    /// `I(τ)` at every sample time `τ ≥ 1`, starting from `I(1) = 0`.
    pub fn glassey_curve(&self) -> Result<Vec<(f64, f64)>> {
        let pts: Vec<(f64, f64)> = self.glassey_integrand()?.into_iter().filter(|(t, _)| *t >= 1.0 - 1e-12).collect();
        match pts.first() {
            Some((t, _)) if (t - 1.0).abs() <= 1e-9 => {}
            _ => return Err(Error::Range("series must contain t = 1".into())),
        }
        let mut out = vec![(pts[0].0, 0.0)];
        let mut acc = 0.0;
        for w in pts.windows(2) {
            acc += 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1);
            out.push((w[1].0, acc));
        }
        Ok(out)
    }
}

/// `I(τ) = ∫_1^τ Re[e^{-i arg μ}(⟨F(u), w⟩ + ⟨Vu, w⟩)] dt` by the trapezoid rule
/// over the sampled times.
pub fn glassey_integral(series: &PairingSeries, tau: f64) -> Result<f64> {
    let curve = series.glassey_curve()?;
    curve
        .iter()
        .find(|(t, _)| (t - tau).abs() <= 1e-9 * tau.max(1.0))
        .map(|c| c.1)
        .ok_or_else(|| Error::Range(format!("τ = {tau} is not a sample time of the series")))
}

/// Gaussian convolution of width `s` of a physical field, as a Fourier multiplier.
pub fn gaussian_smooth(f: &GridField, s: f64) -> Result<GridField> {
    apply_multiplier(f, |k| Complex64::new((-0.5 * s * s * k.iter().map(|v| v * v).sum::<f64>()).exp(), 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{
        Atom, LocalizedComponent, LocalizedProfile, Path, PotentialClass, PotentialComponent, PotentialProfile,
    };
    use crate::grid::SpatialGrid;
    use crate::quadrature::log_space;
    use crate::test_util::{gaussian, random_field};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn pairing_is_unitary_in_time() {
        let g = SpatialGrid::new(1, 256, 40.0).unwrap();
        let phi = gaussian(&g, 1.0);
        let u = free_propagate(&phi, 3.0).unwrap();
        let p = pairing(&u, &phi, 3.0).unwrap();
        assert!((p - c(phi.l2_norm_sq(), 0.0)).norm() <= 1e-10);
    }

    #[test]
    fn main_term_frames_agree() {
        let g = SpatialGrid::new(1, 512, 64.0).unwrap();
        let phi = gaussian(&g, 1.5);
        let u = random_field(&g, 7).map(|z| z * 0.3);
        for nl in [
            NonlinearitySpec::power(0.5, c(1.0, 0.2)).unwrap(),
            NonlinearitySpec::hartree(1.0, c(-0.5, 0.0)).unwrap(),
        ] {
            let a = main_term(&u, &phi, 4.0, &nl).unwrap();
            let b = main_term_rescaled(&u, &phi, 4.0, &nl).unwrap();
            assert!((a - b).norm() <= 1e-8 * a.norm().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn main_term_of_scattering_state_approaches_limit() {
        let g = SpatialGrid::new(1, 4096, 1600.0).unwrap();
        let vp = gaussian(&g, 1.0);
        let phi = gaussian(&g, 1.0).map_indexed(|i, z| z * (1.0 + 0.2 * g.point(i)[0]));
        let nl = NonlinearitySpec::power(0.5, c(1.0, 0.0)).unwrap();
        let limit = main_term_limit(&vp, &phi, &nl, None).unwrap();
        let u = free_propagate(&vp, 100.0).unwrap();
        let m = main_term(&u, &phi, 100.0, &nl).unwrap();
        assert!((m - limit).norm() <= 0.05 * limit.norm(), "{m} vs {limit}");
    }

    #[test]
    fn hartree_limit_with_atom_matches_concentrated_state() {
        let g = SpatialGrid::new(1, 4096, 1600.0).unwrap();
        let vp = gaussian(&g, 1.0);
        let phi = gaussian(&g, 1.0);
        let nl = NonlinearitySpec::hartree(1.0, c(1.0, 0.0)).unwrap();
        let l = LocalizedPathSpec {
            components: vec![LocalizedComponent {
                profile: LocalizedProfile::Gaussian,
                amplitude: c(0.5, 0.0),
                width: 1.0,
                phase_rate: 0.0,
                path: Path::linear(&[0.0], &[4.0]),
                spread: 0.0,
            }],
            q_exponent: 1.5,
        };
        let nu = crate::concentration::nu_from_paths(&l, None, &[0.0], &g).unwrap();
        let limit = main_term_limit(&vp, &phi, &nl, Some(&nu)).unwrap();
        let bare = main_term_limit(&vp, &phi, &nl, None).unwrap();
        let u = crate::fields::synth_state(&l, &vp, 100.0, &g).unwrap();
        let m = main_term(&u, &phi, 100.0, &nl).unwrap();
        assert!((m - limit).norm() <= 0.05 * limit.norm(), "{m} vs {limit}");
        assert!((m - bare).norm() > 0.05 * bare.norm());
    }

    #[test]
    fn potential_term_bounds() {
        let g = SpatialGrid::new(1, 512, 40.0).unwrap();
        let u = gaussian(&g, 2.0);
        let w = free_propagate(&gaussian(&g, 1.0), 1.0).unwrap();
        let zero = potential_term(&u, &w, &PotentialSpec::default(), 1.0, Some(0.5), 0.5).unwrap();
        assert_eq!((zero.value, zero.v1_bound), (ZERO, Some(0.0)));
        let pot = PotentialSpec {
            components: vec![PotentialComponent {
                profile: PotentialProfile::GaussianWell,
                amplitude: c(-1.0, 0.0),
                path: Path::fixed(&[0.5]),
                width: 1.0,
                class: PotentialClass::V1,
                decay: 1.0,
            }],
            atoms: vec![],
            time_modulation: None,
        };
        let t = potential_term(&u, &w, &pot, 1.0, Some(0.5), 0.5).unwrap();
        assert!(t.v1_value.norm() <= t.v1_bound.unwrap() + 1e-12);
        assert!(potential_term(&u, &w, &pot, 1.0, Some(1.0), 0.5).unwrap().v1_bound.is_none());
    }

    #[test]
    fn delta_window_sums_decay_and_obey_bound() {
        let g = SpatialGrid::new(1, 1024, 200.0).unwrap();
        let gamma = 1.0;
        let l = LocalizedPathSpec {
            components: vec![LocalizedComponent {
                profile: LocalizedProfile::DeltaBoundState,
                amplitude: c(1.0, 0.0),
                width: crate::fields::delta_bound_state_width(gamma),
                phase_rate: 0.0,
                path: Path::fixed(&[0.0]),
                spread: 0.0,
            }],
            q_exponent: 1.5,
        };
        let pot = PotentialSpec {
            components: vec![],
            atoms: vec![Atom { position: 0.0, weight: c(-gamma, 0.0) }],
            time_modulation: None,
        };
        let phi = gaussian(&g, 1.0);
        let vp = gaussian(&g, 1.0).map(|z| z * 0.5);
        let mut sums = Vec::new();
        let starts = [5.0, 10.0, 20.0, 40.0];
        for &t0 in &starts {
            let times: Vec<f64> = (0..=20).map(|k| t0 + k as f64 * 0.25).collect();
            let us: Vec<GridField> =
                times.iter().map(|&t| crate::fields::synth_state(&l, &vp, t, &g).unwrap()).collect();
            let ws: Vec<GridField> = times.iter().map(|&t| free_propagate(&phi, t).unwrap()).collect();
            let ur: Vec<&GridField> = us.iter().collect();
            let wr: Vec<&GridField> = ws.iter().collect();
            let win = v2_window(&times, &ur, &wr, &pot, 4.0 * g.spacing(0), t0, 5.0).unwrap();
            assert!(win.integral <= win.bound * (1.0 + 1e-12));
            sums.push(win.integral);
        }
        let slope = crate::quadrature::log_log_slope(&starts, &sums).unwrap();
        assert!((slope + 0.5).abs() <= 0.15, "slope {slope}");
    }

    #[test]
    fn derivative_identity_on_a_run() {
        let g = SpatialGrid::new(1, 512, 40.0).unwrap();
        let u0 = GridField::from_fn(&g, |x| c(-(x[0] - 1.0).powi(2) / 2.0, 0.5 * x[0]).exp()).unwrap();
        let phi = GridField::from_real_fn(&g, |x| (-(x[0] + 0.5).powi(2) / 2.0).exp()).unwrap();
        let nl = NonlinearitySpec::power(0.5, c(1.0, 0.0)).unwrap();
        let mut defects = Vec::new();
        for delta in [0.01, 0.005] {
            let snaps: Vec<f64> = (0..=10).map(|k| 1.0 + k as f64 * delta).collect();
            let cfg = crate::solver::SolverConfig::new(1e-3, snaps[10], snaps.clone(), 0.5);
            let traj = crate::solver::evolve(&u0, &cfg, Some(&nl), &PotentialSpec::default()).unwrap();
            let states: Vec<&GridField> = snaps.iter().map(|&t| traj.at(t).unwrap()).collect();
            let chk = derivative_check(&snaps, &states, &phi, Some(&nl), &PotentialSpec::default(), 0.5).unwrap();
            assert!(chk.relative_defect() <= 1e-3, "{}", chk.relative_defect());
            defects.push(chk.max_defect);
        }
        let ratio = defects[0] / defects[1];
        assert!((ratio - 4.0).abs() <= 0.6, "ratio {ratio}");
    }

    #[test]
    fn alpha_values() {
        assert!((alpha(std::f64::consts::E, 2.0, 1).unwrap() - 1.0).abs() < 1e-14);
        assert!((alpha(16.0, 1.0, 1).unwrap() - 6.0).abs() < 1e-12);
        assert!(alpha(1.5, 1.0, 1).is_err());
        assert!(alpha(10.0, 1.5, 1).is_ok());
        assert!(alpha(10.0, 2.5, 1).is_err());
        assert!(alpha(10.0, 1.1, 2).is_err());
    }

    #[test]
    fn growth_fit_models() {
        let t = log_space(1.0, 1000.0, 60);
        let pw: Vec<f64> = t.iter().map(|s| s.powf(0.75)).collect();
        let f = growth_fit(&t, &pw).unwrap();
        assert_eq!(f.model, GrowthModel::PowerLaw);
        assert!((f.exponent - 0.75).abs() <= 1e-6, "{}", f.exponent);
        let lg: Vec<f64> = t.iter().map(|s| s.ln()).collect();
        let f = growth_fit(&t, &lg).unwrap();
        assert_eq!(f.model, GrowthModel::Logarithmic);
        assert!((f.coefficient - 1.0).abs() <= 1e-6);
        let noisy: Vec<f64> = t.iter().map(|s| s.powf(0.75) * (1.0 + 0.05 * s.sin())).collect();
        let f = growth_fit(&t, &noisy).unwrap();
        assert!((f.exponent - 0.75).abs() <= 0.02, "{}", f.exponent);
        let flat = vec![2.0; t.len()];
        assert_eq!(growth_fit(&t, &flat).unwrap().model, GrowthModel::Constant);
        let short = log_space(1.0, 5.0, 20);
        assert!(growth_fit(&short, &short).is_err());
    }

    #[test]
    fn residual_of_synthetic_state() {
        let g = SpatialGrid::new(1, 1024, 200.0).unwrap();
        let vp = gaussian(&g, 1.0);
        let u = free_propagate(&vp, 5.0).unwrap();
        let r = residual_decomposition(&u, None, &vp, 5.0).unwrap();
        assert!(r.resid_l2 <= 1e-12);
        let flat = GridField::from_real_fn(&g, |_| 1e-3).unwrap();
        assert!(residual_decomposition(&flat, None, &flat, 2.0).unwrap().mod_resid > 0.0);
    }

    #[test]
    fn test_functions_are_positive() {
        let g = SpatialGrid::new(1, 512, 64.0).unwrap();
        let vp = GridField::from_fn(&g, |x| c(0.0, 1.0) * x[0] * (-x[0] * x[0] / 2.0).exp()).unwrap();
        let tf = choose_test_function(&vp, &NonlinearitySpec::power(0.5, c(1.0, 0.0)).unwrap(), 10.0).unwrap();
        assert!(tf.positivity > 0.0);
        let h = choose_test_function(&vp, &NonlinearitySpec::hartree(1.0, c(1.0, 0.0)).unwrap(), 0.3).unwrap();
        assert!(h.positivity > 0.0);
        assert_eq!(h.cross_term.unwrap(), ZERO);
        assert!(matches!(
            choose_test_function(&vp, &NonlinearitySpec::hartree(1.0, c(1.0, 0.0)).unwrap(), 0.0),
            Err(Error::Level(_))
        ));
        let zero = GridField::zeros(&g, Space::Physical);
        assert!(choose_test_function(&zero, &NonlinearitySpec::power(0.5, c(1.0, 0.0)).unwrap(), 1.0).is_err());
    }

    #[test]
    fn linear_flow_has_zero_glassey_integral() {
        let g = SpatialGrid::new(1, 256, 40.0).unwrap();
        let phi = gaussian(&g, 1.0);
        let ctx = SeriesContext { phi: &phi, op: None, pot: None, mollify_width: 0.5, lspec: None, v_plus: None };
        let times = log_space(1.0, 10.0, 12);
        let rows = times.iter().map(|&t| ctx.row(&free_propagate(&phi, t).unwrap(), t).unwrap()).collect();
        let s = PairingSeries { dim: 1, nonlinearity: None, phi_norm: phi.l2_norm(), rows };
        assert_eq!(glassey_integral(&s, 10.0).unwrap(), 0.0);
        assert!(s.pairing_bounded());
        assert!(glassey_integral(&s, 7.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn pairing_obeys_cauchy_schwarz(seed in 0u64..1000, t in 0.0f64..20.0) {
            let g = SpatialGrid::new(1, 64, 20.0).unwrap();
            let u = random_field(&g, seed);
            let phi = random_field(&g, seed + 1);
            let p = pairing(&u, &phi, t).unwrap();
            prop_assert!(p.norm() <= u.l2_norm() * phi.l2_norm() * (1.0 + 1e-12));
        }

        #[test]
        fn power_main_term_is_homogeneous(seed in 0u64..1000, s in 0.1f64..3.0, t in 0.5f64..10.0) {
            let g = SpatialGrid::new(1, 64, 20.0).unwrap();
            let u = random_field(&g, seed);
            let phi = random_field(&g, seed + 1);
            let nl = NonlinearitySpec::power(0.7, c(1.0, -0.3)).unwrap();
            let a = main_term(&u.scale(c(s, 0.0)), &phi, t, &nl).unwrap();
            let b = main_term(&u, &phi, t, &nl).unwrap() * s.powf(1.7);
            prop_assert!((a - b).norm() <= 1e-9 * b.norm().max(1e-12));
        }
    }
}
