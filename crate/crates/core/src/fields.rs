//! Specifications and samplers for the nonlinearity, initial data, localized
//! components `l(t)` and potentials `V(t)`, plus synthetic decomposition
//! states `l(t) + e^{itΔ}v₊`.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridField, Space, SpatialGrid, MAX_DIM};
use crate::norms::{norm, NormKind};
use crate::spectral::{free_propagate, inverse_transform};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityKind {
    /// `μ|u|^p u`
    Power,
    /// `μ(|x|^{-dp/2} ∗ |u|²)u`
    Hartree,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearitySpec {
    pub kind: NonlinearityKind,
    pub p: f64,
    /// Coupling, `[re, im]` when serialized. Never zero.
    pub mu: Complex64,
}

impl NonlinearitySpec {
    pub fn new(kind: NonlinearityKind, p: f64, mu: Complex64) -> Result<Self> {
        let s = Self { kind, p, mu };
        s.validate()?;
        Ok(s)
    }

    pub fn power(p: f64, mu: Complex64) -> Result<Self> {
        Self::new(NonlinearityKind::Power, p, mu)
    }

    pub fn hartree(p: f64, mu: Complex64) -> Result<Self> {
        Self::new(NonlinearityKind::Hartree, p, mu)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p.is_finite() && self.p > 0.0) {
            return Err(Error::Config(format!("p: must be positive and finite, got {}", self.p)));
        }
        if !(self.mu.re.is_finite() && self.mu.im.is_finite()) {
            return Err(Error::Config("mu: must be finite".into()));
        }
        if self.mu == ZERO {
            return Err(Error::Config("mu: must be nonzero".into()));
        }
        Ok(())
    }

    /// Mass-subcritical guard required by the solver: `p < 4/d`, and for
    /// Hartree a locally integrable kernel `dp/2 < d`.
    pub fn check_solver_range(&self, d: usize) -> Result<()> {
        self.validate()?;
        if self.p >= 4.0 / d as f64 {
            return Err(Error::Config(format!("p: solver needs p < 4/d = {}, got {}", 4.0 / d as f64, self.p)));
        }
        Ok(())
    }

    /// `p ≤ 2/d`.
    pub fn long_range(&self, d: usize) -> bool {
        self.p <= 2.0 / d as f64
    }

    /// `p < 1` and `p ≤ 2/d`: the range of the localized-plus-potential argument.
    pub fn sub_unit_long_range(&self, d: usize) -> bool {
        self.p < 1.0 && self.long_range(d)
    }

    /// Power nonlinearity with `p = 1 ≤ 2/d`: the range of the singular-measure argument.
    pub fn unit_power_range(&self, d: usize) -> bool {
        self.kind == NonlinearityKind::Power && self.p == 1.0 && d <= 2
    }

    /// `dp/2`: the homogeneity of the main term under the tilde change of variables.
    pub fn frame_exponent(&self, d: usize) -> f64 {
        d as f64 * self.p / 2.0
    }
}

/// Polynomial path `c(t) = Σ_k a_k t^k` with `a_k ∈ ℝ^d`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Path {
    pub coefficients: Vec<Vec<f64>>,
}

impl Path {
    pub fn fixed(center: &[f64]) -> Self {
        Self { coefficients: vec![center.to_vec()] }
    }

    pub fn linear(start: &[f64], velocity: &[f64]) -> Self {
        Self { coefficients: vec![start.to_vec(), velocity.to_vec()] }
    }

    pub fn validate(&self, d: usize, key: &str) -> Result<()> {
        for (k, a) in self.coefficients.iter().enumerate() {
            if a.len() != d {
                return Err(Error::Config(format!("{key}[{k}]: expected {d} entries, got {}", a.len())));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("{key}[{k}]: non-finite coefficient")));
            }
        }
        Ok(())
    }

    pub fn position(&self, t: f64) -> [f64; MAX_DIM] {
        let mut c = [0.0; MAX_DIM];
        let mut tk = 1.0;
        for a in &self.coefficients {
            for (ci, ai) in c.iter_mut().zip(a) {
                *ci += ai * tk;
            }
            tk *= t;
        }
        c
    }

    pub fn velocity(&self, t: f64) -> [f64; MAX_DIM] {
        let mut c = [0.0; MAX_DIM];
        let mut tk = 1.0;
        for (k, a) in self.coefficients.iter().enumerate().skip(1) {
            for (ci, ai) in c.iter_mut().zip(a) {
                *ci += k as f64 * ai * tk;
            }
            tk *= t;
        }
        c
    }

    /// `lim c(t)/t`; `None` when a coefficient of degree ≥ 2 is nonzero.
    pub fn limit_velocity(&self) -> Option<[f64; MAX_DIM]> {
        if self.coefficients.iter().skip(2).any(|a| a.iter().any(|v| *v != 0.0)) {
            return None;
        }
        let mut v = [0.0; MAX_DIM];
        if let Some(a) = self.coefficients.get(1) {
            for (vi, ai) in v.iter_mut().zip(a) {
                *vi = *ai;
            }
        }
        Some(v)
    }
}

fn dist_sq(x: &[f64], c: &[f64; MAX_DIM]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum()
}

fn dot(x: &[f64], v: &[f64; MAX_DIM]) -> f64 {
    x.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn check_width(w: f64, key: &str) -> Result<()> {
    if w.is_finite() && w > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{key}: width must be positive, got {w}")))
    }
}

fn check_complex(z: Complex64, key: &str) -> Result<()> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{key}: amplitude must be finite")))
    }
}

// ---------------------------------------------------------------- potentials

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialProfile {
    /// `a e^{-|x-c|²/2w²}`
    GaussianWell,
    /// `a (max(|x-c|, w)/w)^{-s}`
    TruncatedInversePower,
    /// `a 1{|x-c| ≤ w}`
    ConstantOnBall,
}

/// Claimed integrability class of a potential component. The `V = V₁ + V₂`
/// split is explicit data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialClass {
    /// `L^{2/p-ε}`
    V1,
    /// `L^{d/2}` (d ≥ 3; not used by the d ≤ 2 runner)
    V2Critical,
    /// `L^{1+ε}` (d = 2)
    V2L1Plus,
    /// Finite measure (d = 1)
    V2Measure,
}

impl PotentialClass {
    pub fn is_v1(self) -> bool {
        self == PotentialClass::V1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialComponent {
    pub profile: PotentialProfile,
    pub amplitude: Complex64,
    pub path: Path,
    pub width: f64,
    pub class: PotentialClass,
    /// Decay exponent `s` of the truncated inverse power.
    #[serde(default = "default_decay")]
    pub decay: f64,
}

fn default_decay() -> f64 {
    1.0
}

impl PotentialComponent {
    fn value_at(&self, x: &[f64], t: f64) -> Complex64 {
        let r2 = dist_sq(x, &self.path.position(t));
        let w = self.width;
        let shape = match self.profile {
            PotentialProfile::GaussianWell => (-r2 / (2.0 * w * w)).exp(),
            PotentialProfile::TruncatedInversePower => (r2.sqrt().max(w) / w).powf(-self.decay),
            PotentialProfile::ConstantOnBall => {
                if r2 <= w * w {
                    1.0
                } else {
                    0.0
                }
            }
        };
        self.amplitude * shape
    }

    /// Analytic `‖V_k‖₂²`, `None` if the profile is not square integrable.
    pub fn l2_mass(&self, d: usize) -> Option<f64> {
        let a2 = self.amplitude.norm_sqr();
        let w = self.width;
        let df = d as f64;
        match self.profile {
            PotentialProfile::GaussianWell => Some(a2 * (PI * w * w).powf(df / 2.0)),
            PotentialProfile::ConstantOnBall => Some(a2 * ball_volume(d) * w.powi(d as i32)),
            PotentialProfile::TruncatedInversePower => {
                let s2 = 2.0 * self.decay;
                (s2 > df).then(|| {
                    // Inside the ball plus ∫_w^∞ (r/w)^{-2s} dS_r.
                    let inner = ball_volume(d) * w.powf(df);
                    let sphere = df * ball_volume(d);
                    a2 * (inner + sphere * w.powf(df) / (s2 - df))
                })
            }
        }
    }
}

/// Volume of the unit ball in `ℝ^d`.
pub fn ball_volume(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => PI,
        _ => PI.powf(d as f64 / 2.0) / gamma_half_integer(d + 2),
    }
}

/// `Γ(k/2)` for positive integers `k`.
fn gamma_half_integer(k: usize) -> f64 {
    match k {
        1 => PI.sqrt(),
        2 => 1.0,
        _ => (k as f64 / 2.0 - 1.0) * gamma_half_integer(k - 2),
    }
}

/// Point interaction `γ δ(x - x₀)` in one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub position: f64,
    pub weight: Complex64,
}

/// Bounded time modulation `cos(ωt)` applied to the whole potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeModulation {
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default)]
    pub components: Vec<PotentialComponent>,
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub time_modulation: Option<TimeModulation>,
}

/// Unit-mass Gaussian mollifier of width `w` in one dimension.
pub fn mollifier_1d(x: f64, w: f64) -> f64 {
    (-(x * x) / (2.0 * w * w)).exp() / ((2.0 * PI).sqrt() * w)
}

/// Default atom mollification width: three grid spacings.
pub fn default_mollify_width(grid: &SpatialGrid) -> f64 {
    3.0 * grid.spacing(0)
}

impl PotentialSpec {
    pub fn is_zero(&self) -> bool {
        self.components.is_empty() && self.atoms.is_empty()
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !self.atoms.is_empty() && d != 1 {
            return Err(Error::Config("potential.atoms: point interactions need dim = 1".into()));
        }
        for (i, c) in self.components.iter().enumerate() {
            let key = format!("potential.components[{i}]");
            check_width(c.width, &key)?;
            check_complex(c.amplitude, &key)?;
            c.path.validate(d, &format!("{key}.path"))?;
            match c.class {
                PotentialClass::V2Measure if d != 1 => {
                    return Err(Error::Config(format!("{key}.class: measure class needs dim = 1")))
                }
                PotentialClass::V2L1Plus if d != 2 => {
                    return Err(Error::Config(format!("{key}.class: L^(1+) class needs dim = 2")))
                }
                PotentialClass::V2Critical if d < 3 => {
                    return Err(Error::Config(format!("{key}.class: L^(d/2) class needs dim ≥ 3")))
                }
                _ => {}
            }
            if !(c.decay.is_finite() && c.decay > 0.0) {
                return Err(Error::Config(format!("{key}.decay: must be positive")));
            }
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if !a.position.is_finite() {
                return Err(Error::Config(format!("potential.atoms[{i}].position: must be finite")));
            }
            check_complex(a.weight, &format!("potential.atoms[{i}]"))?;
        }
        if let Some(m) = &self.time_modulation {
            if !m.frequency.is_finite() {
                return Err(Error::Config("potential.time_modulation.frequency: must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn modulation(&self, t: f64) -> f64 {
        self.time_modulation.as_ref().map_or(1.0, |m| (m.frequency * t).cos())
    }

    /// `V(t, x)` at an arbitrary point, restricted by class; atoms are
    /// mollified with width `w` and included when `atoms` is set.
    pub fn value_at(
        &self,
        x: &[f64],
        t: f64,
        w: f64,
        include: impl Fn(PotentialClass) -> bool,
        atoms: bool,
    ) -> Complex64 {
        let mut v: Complex64 = self
            .components
            .iter()
            .filter(|c| include(c.class))
            .map(|c| c.value_at(x, t))
            .sum();
        if atoms {
            for a in &self.atoms {
                v += a.weight * mollifier_1d(x[0] - a.position, w);
            }
        }
        v * self.modulation(t)
    }

    /// Largest `|V|` over the grid at time `t`.
    pub fn sup_at(&self, t: f64, grid: &SpatialGrid, w: f64) -> Result<f64> {
        Ok(sample_potential(self, t, grid, w)?.sup_norm())
    }
}

/// Samples the potential selected by `include` (and the atoms when `atoms`).
pub fn sample_potential_where(
    spec: &PotentialSpec,
    t: f64,
    grid: &SpatialGrid,
    mollify_width: f64,
    include: impl Fn(PotentialClass) -> bool,
    atoms: bool,
) -> Result<GridField> {
    spec.validate(grid.dim())?;
    if atoms && !spec.atoms.is_empty() && !(mollify_width >= 2.0 * grid.spacing(0) * (1.0 - 1e-12)) {
        return Err(Error::Config(format!(
            "mollify_width: must be ≥ 2h = {}, got {mollify_width}",
            2.0 * grid.spacing(0)
        )));
    }
    let f = GridField::from_fn(grid, |x| spec.value_at(x, t, mollify_width, &include, atoms))?;
    Ok(f.with_time(t))
}

/// `V(t)` on the grid, atoms contributing `γ G_w(x - x₀)`.
pub fn sample_potential(spec: &PotentialSpec, t: f64, grid: &SpatialGrid, mollify_width: f64) -> Result<GridField> {
    sample_potential_where(spec, t, grid, mollify_width, |_| true, true)
}

// ------------------------------------------------------- localized components

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalizedProfile {
    /// `e^{-|y|²/2σ²}`
    Gaussian,
    /// `sech(|y|/σ)`
    Sech,
    /// `e^{-|y|/σ}`, the bound state of `-∂² - γδ` with `σ = 2/γ`.
    DeltaBoundState,
}

impl LocalizedProfile {
    fn shape(self, r2: f64, sigma: f64) -> f64 {
        match self {
            LocalizedProfile::Gaussian => (-r2 / (2.0 * sigma * sigma)).exp(),
            LocalizedProfile::Sech => 1.0 / (r2.sqrt() / sigma).cosh(),
            LocalizedProfile::DeltaBoundState => (-r2.sqrt() / sigma).exp(),
        }
    }

    /// `∫ shape² dx` for unit width.
    fn unit_mass(self, d: usize) -> f64 {
        match (self, d) {
            (LocalizedProfile::Gaussian, _) => PI.powf(d as f64 / 2.0),
            (LocalizedProfile::Sech, 1) => 2.0,
            (LocalizedProfile::Sech, _) => 2.0 * PI * LN_2,
            (LocalizedProfile::DeltaBoundState, 1) => 1.0,
            (LocalizedProfile::DeltaBoundState, _) => PI / 2.0,
        }
    }

    /// Radius (in widths) outside which the squared profile carries < 1e-8 of its mass.
    fn tail_radius(self) -> f64 {
        match self {
            LocalizedProfile::Gaussian => 6.5,
            LocalizedProfile::Sech | LocalizedProfile::DeltaBoundState => 11.0,
        }
    }
}

/// Width of the delta bound state `e^{-γ|x|/2}`.
pub fn delta_bound_state_width(gamma: f64) -> f64 {
    2.0 / gamma
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizedComponent {
    pub profile: LocalizedProfile,
    pub amplitude: Complex64,
    pub width: f64,
    /// Internal phase rotation `e^{iωt}`.
    #[serde(default)]
    pub phase_rate: f64,
    pub path: Path,
    /// Sublinear spreading exponent `β ∈ [0, 1)`: width `σ(1+t)^β` at fixed mass.
    #[serde(default)]
    pub spread: f64,
}

impl LocalizedComponent {
    fn width_at(&self, t: f64) -> f64 {
        self.width * (1.0 + t).powf(self.spread)
    }

    /// `l_k(t, x)` including the Galilean phase `e^{i c'(t)·x/2}`.
    pub fn value_at(&self, x: &[f64], t: f64, d: usize) -> Complex64 {
        let c = self.path.position(t);
        let v = self.path.velocity(t);
        let s = self.width_at(t);
        let amp = (1.0 + t).powf(-self.spread * d as f64 / 2.0);
        let shape = self.profile.shape(dist_sq(x, &c), s) * amp;
        self.amplitude * shape * Complex64::from_polar(1.0, self.phase_rate * t + 0.5 * dot(x, &v))
    }

    /// Analytic `‖l_k(t)‖₂²`, independent of `t`.
    pub fn l2_mass(&self, d: usize) -> f64 {
        self.amplitude.norm_sqr() * self.width.powi(d as i32) * self.profile.unit_mass(d)
    }

    fn escapes(&self, t: f64, grid: &SpatialGrid) -> bool {
        let c = self.path.position(t);
        let reach = self.profile.tail_radius() * self.width_at(t);
        (0..grid.dim()).any(|a| c[a].abs() + reach > 0.5 * grid.lengths()[a])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizedPathSpec {
    #[serde(default)]
    pub components: Vec<LocalizedComponent>,
    /// `q ∈ (1, 2)` with `l ∈ L^∞_t(L² ∩ L^q)`.
    #[serde(default = "default_q")]
    pub q_exponent: f64,
}

fn default_q() -> f64 {
    1.5
}

impl Default for LocalizedPathSpec {
    fn default() -> Self {
        Self { components: Vec::new(), q_exponent: default_q() }
    }
}

impl LocalizedPathSpec {
    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.q_exponent > 1.0 && self.q_exponent < 2.0) {
            return Err(Error::Config(format!("localized.q_exponent: must lie in (1, 2), got {}", self.q_exponent)));
        }
        for (i, c) in self.components.iter().enumerate() {
            let key = format!("localized.components[{i}]");
            check_width(c.width, &key)?;
            check_complex(c.amplitude, &key)?;
            c.path.validate(d, &format!("{key}.path"))?;
            if !(0.0..1.0).contains(&c.spread) {
                return Err(Error::Config(format!("{key}.spread: must lie in [0, 1), got {}", c.spread)));
            }
            if !c.phase_rate.is_finite() {
                return Err(Error::Config(format!("{key}.phase_rate: must be finite")));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn value_at(&self, x: &[f64], t: f64, d: usize) -> Complex64 {
        self.components.iter().map(|c| c.value_at(x, t, d)).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedSample {
    pub field: GridField,
    pub l2_norm: f64,
    pub lq_norm: f64,
    /// Some component reaches the box edge; diagnostics at this time are not valid.
    pub escaped: bool,
}

pub fn sample_localized(spec: &LocalizedPathSpec, t: f64, grid: &SpatialGrid) -> Result<LocalizedSample> {
    spec.validate(grid.dim())?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("localized sampling needs t ≥ 0, got {t}")));
    }
    let d = grid.dim();
    let field = GridField::from_fn(grid, |x| spec.value_at(x, t, d))?.with_time(t);
    let escaped = spec.components.iter().any(|c| c.escapes(t, grid));
    Ok(LocalizedSample {
        l2_norm: field.l2_norm(),
        lq_norm: norm(&field, NormKind::Lp(spec.q_exponent))?,
        field,
        escaped,
    })
}

/// `l(t) + e^{itΔ}v₊`: the decomposition with a vanishing remainder.
pub fn synth_state(lspec: &LocalizedPathSpec, v_plus: &GridField, t: f64, grid: &SpatialGrid) -> Result<GridField> {
    v_plus.expect_space(Space::Physical)?;
    grid.same_shape(v_plus.grid())?;
    let l = sample_localized(lspec, t.max(0.0), grid)?.field;
    let free = free_propagate(v_plus, t)?;
    Ok(l.add(&free)?.with_time(t))
}

// ------------------------------------------------------------- initial data

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialProfile {
    Gaussian,
    /// `sech(|x|/σ)`; with amplitude `√2/σ` and `μ = -1`, `p = 2` it is the d = 1 soliton.
    Sech,
    /// Gaussian times the carrier `e^{ik·x}`.
    ModulatedGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialTerm {
    pub profile: InitialProfile,
    pub amplitude: Complex64,
    pub center: Vec<f64>,
    #[serde(default)]
    pub velocity: Vec<f64>,
    pub width: f64,
    #[serde(default)]
    pub phase: f64,
    #[serde(default)]
    pub carrier: Vec<f64>,
}

/// Seeded band-limited random field in a Gaussian envelope, normalized to L² norm `amplitude`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Radiation {
    pub amplitude: f64,
    /// Largest `|ξ|` carrying energy.
    pub band: f64,
    pub envelope: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDataSpec {
    #[serde(default)]
    pub terms: Vec<InitialTerm>,
    #[serde(default)]
    pub radiation: Option<Radiation>,
}

fn padded(v: &[f64]) -> [f64; MAX_DIM] {
    let mut out = [0.0; MAX_DIM];
    for (o, x) in out.iter_mut().zip(v) {
        *o = *x;
    }
    out
}

impl InitialTerm {
    fn profile_shape(&self) -> LocalizedProfile {
        match self.profile {
            InitialProfile::Sech => LocalizedProfile::Sech,
            _ => LocalizedProfile::Gaussian,
        }
    }

    fn validate(&self, grid: &SpatialGrid, key: &str) -> Result<()> {
        let d = grid.dim();
        check_width(self.width, key)?;
        check_complex(self.amplitude, key)?;
        if self.center.len() != d {
            return Err(Error::Config(format!("{key}.center: expected {d} entries")));
        }
        for (name, v) in [("velocity", &self.velocity), ("carrier", &self.carrier)] {
            if !v.is_empty() && v.len() != d {
                return Err(Error::Config(format!("{key}.{name}: expected {d} entries")));
            }
        }
        if self.profile == InitialProfile::Sech && d != 1 {
            return Err(Error::Config(format!("{key}.profile: sech soliton needs dim = 1")));
        }
        for a in 0..d {
            let l = grid.lengths()[a];
            if self.width > l / 4.0 {
                return Err(Error::Config(format!("{key}.width: {} exceeds box/4 = {}", self.width, l / 4.0)));
            }
            let reach = self.center[a].abs() + self.profile_shape().tail_radius() * self.width;
            if reach > l / 2.0 {
                return Err(Error::Config(format!("{key}.center: profile tail leaves the box on axis {a}")));
            }
        }
        Ok(())
    }

    fn value_at(&self, x: &[f64]) -> Complex64 {
        let c = padded(&self.center);
        let shape = self.profile_shape().shape(dist_sq(x, &c), self.width);
        let mut phase = self.phase + 0.5 * dot(x, &padded(&self.velocity));
        if self.profile == InitialProfile::ModulatedGaussian {
            phase += dot(x, &padded(&self.carrier));
        }
        self.amplitude * shape * Complex64::from_polar(1.0, phase)
    }

    /// Analytic `‖term‖₂²`.
    pub fn l2_mass(&self, d: usize) -> f64 {
        self.amplitude.norm_sqr() * self.width.powi(d as i32) * self.profile_shape().unit_mass(d)
    }
}

fn radiation_field(r: &Radiation, grid: &SpatialGrid) -> Result<GridField> {
    if !(r.amplitude >= 0.0 && r.band > 0.0 && r.envelope > 0.0) {
        return Err(Error::Config("initial.radiation: amplitude ≥ 0, band > 0, envelope > 0 required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
    let mut spectrum = GridField::zeros(grid, Space::Frequency);
    let values: Vec<Complex64> = (0..grid.len())
        .map(|i| {
            let (a, b): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if grid.frequency_sq(i) <= r.band * r.band {
                Complex64::new(a, b)
            } else {
                ZERO
            }
        })
        .collect();
    spectrum = GridField::new(spectrum.grid().clone(), values, Space::Frequency)?;
    let env = r.envelope;
    let raw = inverse_transform(&spectrum)?
        .map_indexed(|i, z| z * (-grid.radius_sq(i) / (2.0 * env * env)).exp());
    let n = raw.l2_norm();
    Ok(if n > 0.0 { raw.scale(Complex64::new(r.amplitude / n, 0.0)) } else { raw })
}

/// Deterministic initial field; radiation is reproduced exactly from its seed.
pub fn make_field(spec: &InitialDataSpec, grid: &SpatialGrid) -> Result<GridField> {
    for (i, term) in spec.terms.iter().enumerate() {
        term.validate(grid, &format!("initial.terms[{i}]"))?;
    }
    let mut f = GridField::from_fn(grid, |x| spec.terms.iter().map(|t| t.value_at(x)).sum())?;
    if let Some(r) = &spec.radiation {
        f = f.add(&radiation_field(r, grid)?)?;
    }
    Ok(f)
}

/// `t^{-δ}` times a seeded band-limited field of L² norm `amplitude`:
/// a controlled decaying remainder for robustness studies.
pub fn decaying_perturbation(r: &Radiation, delta: f64, t: f64, grid: &SpatialGrid) -> Result<GridField> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("perturbation needs t > 0, got {t}")));
    }
    Ok(radiation_field(r, grid)?.scale(Complex64::new(t.powf(-delta), 0.0)).with_time(t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_component(center: f64, velocity: f64, width: f64) -> LocalizedComponent {
        LocalizedComponent {
            profile: LocalizedProfile::Gaussian,
            amplitude: Complex64::new(1.0, 0.0),
            width,
            phase_rate: 0.0,
            path: Path::linear(&[center], &[velocity]),
            spread: 0.0,
        }
    }

    #[test]
    fn nonlinearity_flags() {
        let nl = NonlinearitySpec::power(1.0, Complex64::new(1.0, 0.0)).unwrap();
        assert!(nl.long_range(1) && nl.long_range(2) && !nl.sub_unit_long_range(1));
        assert!(nl.unit_power_range(1) && nl.unit_power_range(2));
        assert!(NonlinearitySpec::power(0.0, Complex64::new(1.0, 0.0)).is_err());
        assert!(NonlinearitySpec::hartree(0.5, ZERO).is_err());
        let h = NonlinearitySpec::hartree(1.0, Complex64::new(1.0, 0.0)).unwrap();
        assert!(!h.unit_power_range(1));
        assert!(NonlinearitySpec::power(2.5, Complex64::new(1.0, 0.0)).unwrap().check_solver_range(2).is_err());
    }

    #[test]
    fn empty_spec_is_zero() {
        let g = SpatialGrid::new(1, 64, 10.0).unwrap();
        let f = make_field(&InitialDataSpec::default(), &g).unwrap();
        assert_eq!(f.sup_norm(), 0.0);
    }

    #[test]
    fn gaussian_and_sech_masses() {
        let g = SpatialGrid::new(1, 1024, 80.0).unwrap();
        let term = InitialTerm {
            profile: InitialProfile::Gaussian,
            amplitude: Complex64::new(0.6, -0.8),
            center: vec![3.0],
            velocity: vec![1.0],
            width: 1.7,
            phase: 0.3,
            carrier: vec![],
        };
        let spec = InitialDataSpec { terms: vec![term.clone()], radiation: None };
        let m = make_field(&spec, &g).unwrap().l2_norm_sq();
        let exact = (PI * 1.7f64.powi(2)).sqrt();
        assert!((m - exact).abs() <= 1e-8 * exact);
        assert!((term.l2_mass(1) - exact).abs() <= 1e-12);

        let sech = InitialTerm {
            profile: InitialProfile::Sech,
            amplitude: Complex64::new(2f64.sqrt(), 0.0),
            center: vec![0.0],
            velocity: vec![],
            width: 1.0,
            phase: 0.0,
            carrier: vec![],
        };
        let m = make_field(&InitialDataSpec { terms: vec![sech], radiation: None }, &g).unwrap().l2_norm_sq();
        assert!((m - 4.0).abs() <= 4e-8);
    }

    #[test]
    fn two_dimensional_gaussian_mass() {
        let g = SpatialGrid::new(2, 128, 24.0).unwrap();
        let term = InitialTerm {
            profile: InitialProfile::ModulatedGaussian,
            amplitude: Complex64::new(1.5, 0.0),
            center: vec![1.0, -2.0],
            velocity: vec![],
            width: 1.2,
            phase: 0.0,
            carrier: vec![0.5, 0.25],
        };
        let m = make_field(&InitialDataSpec { terms: vec![term], radiation: None }, &g).unwrap().l2_norm_sq();
        let exact = 2.25 * PI * 1.44;
        assert!((m - exact).abs() <= 1e-8 * exact);
    }

    #[test]
    fn wide_or_escaping_profiles_rejected() {
        let g = SpatialGrid::new(1, 64, 16.0).unwrap();
        let mut term = InitialTerm {
            profile: InitialProfile::Gaussian,
            amplitude: Complex64::new(1.0, 0.0),
            center: vec![0.0],
            velocity: vec![],
            width: 5.0,
            phase: 0.0,
            carrier: vec![],
        };
        let spec = |t: &InitialTerm| InitialDataSpec { terms: vec![t.clone()], radiation: None };
        assert!(matches!(make_field(&spec(&term), &g), Err(Error::Config(_))));
        term.width = 1.0;
        term.center = vec![6.0];
        assert!(matches!(make_field(&spec(&term), &g), Err(Error::Config(_))));
    }

    #[test]
    fn radiation_is_seeded() {
        let g = SpatialGrid::new(1, 256, 40.0).unwrap();
        let r = Radiation { amplitude: 0.1, band: 2.0, envelope: 4.0, seed: 11 };
        let spec = InitialDataSpec { terms: vec![], radiation: Some(r.clone()) };
        let a = make_field(&spec, &g).unwrap();
        let b = make_field(&spec, &g).unwrap();
        assert_eq!(a, b);
        assert!((a.l2_norm() - 0.1).abs() < 1e-12);
        let other = InitialDataSpec { terms: vec![], radiation: Some(Radiation { seed: 12, ..r }) };
        assert_ne!(make_field(&other, &g).unwrap(), a);
    }

    #[test]
    fn atoms_have_unit_mass_and_need_one_dimension() {
        let g = SpatialGrid::new(1, 1024, 40.0).unwrap();
        let w = default_mollify_width(&g);
        let gamma = Complex64::new(-1.3, 0.2);
        let spec = PotentialSpec { atoms: vec![Atom { position: 1.1, weight: gamma }], ..Default::default() };
        let v = sample_potential(&spec, 0.0, &g, w).unwrap();
        let integral: Complex64 = v.values().iter().sum::<Complex64>() * g.cell_volume();
        assert!((integral - gamma).norm() <= 1e-8 * gamma.norm());
        assert!(matches!(sample_potential(&spec, 0.0, &g, g.spacing(0)), Err(Error::Config(_))));
        let g2 = SpatialGrid::new(2, 16, 4.0).unwrap();
        assert!(matches!(sample_potential(&spec, 0.0, &g2, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn translating_well_shifts_on_aligned_grid() {
        let g = SpatialGrid::new(1, 256, 32.0).unwrap();
        let h = g.spacing(0);
        let comp = PotentialComponent {
            profile: PotentialProfile::GaussianWell,
            amplitude: Complex64::new(-2.0, 0.0),
            path: Path::linear(&[0.0], &[h]),
            width: 1.0,
            class: PotentialClass::V1,
            decay: 1.0,
        };
        let spec = PotentialSpec { components: vec![comp], ..Default::default() };
        let v0 = sample_potential(&spec, 0.0, &g, 3.0 * h).unwrap();
        let v5 = sample_potential(&spec, 5.0, &g, 3.0 * h).unwrap();
        for j in 5..g.len() {
            assert!((v5.values()[j] - v0.values()[j - 5]).norm() <= 1e-10);
        }
        let static_spec = PotentialSpec {
            components: vec![PotentialComponent { path: Path::fixed(&[0.0]), ..spec.components[0].clone() }],
            ..Default::default()
        };
        assert_eq!(
            sample_potential(&static_spec, 0.0, &g, 3.0 * h).unwrap().values(),
            sample_potential(&static_spec, 7.0, &g, 3.0 * h).unwrap().values()
        );
    }

    #[test]
    fn separated_components_are_orthogonal() {
        let g = SpatialGrid::new(1, 2048, 200.0).unwrap();
        let a = LocalizedPathSpec { components: vec![gaussian_component(0.0, 1.0, 1.0)], q_exponent: 1.5 };
        let b = LocalizedPathSpec { components: vec![gaussian_component(0.0, -1.0, 1.0)], q_exponent: 1.5 };
        let t = 6.0;
        let la = sample_localized(&a, t, &g).unwrap();
        let lb = sample_localized(&b, t, &g).unwrap();
        let overlap = la.field.inner(&lb.field).unwrap().norm();
        assert!(overlap <= 1e-8 * la.l2_norm * lb.l2_norm, "overlap {overlap}");
    }

    #[test]
    fn rigid_and_spreading_profiles_keep_mass() {
        let g = SpatialGrid::new(1, 4096, 400.0).unwrap();
        let mut c = gaussian_component(0.0, 0.5, 1.0);
        let rigid = LocalizedPathSpec { components: vec![c.clone()], q_exponent: 1.5 };
        c.spread = 0.5;
        let spreading = LocalizedPathSpec { components: vec![c], q_exponent: 1.5 };
        let m0 = sample_localized(&rigid, 1.0, &g).unwrap();
        for t in [10.0, 50.0, 100.0] {
            let s = sample_localized(&rigid, t, &g).unwrap();
            assert!((s.l2_norm - m0.l2_norm).abs() <= 0.01 * m0.l2_norm);
            assert!((s.lq_norm - m0.lq_norm).abs() <= 0.01 * m0.lq_norm);
            assert!(!s.escaped);
            let sp = sample_localized(&spreading, t, &g).unwrap();
            assert!((sp.l2_norm - m0.l2_norm).abs() <= 1e-8 * m0.l2_norm);
        }
        assert!(sample_localized(&rigid, 1000.0, &g).unwrap().escaped);
    }

    #[test]
    fn synthetic_state_obeys_triangle_inequality() {
        let g = SpatialGrid::new(1, 1024, 200.0).unwrap();
        let l = LocalizedPathSpec { components: vec![gaussian_component(0.0, 1.0, 1.0)], q_exponent: 1.5 };
        let vp = crate::test_util::gaussian(&g, 1.0);
        let u0 = synth_state(&l, &vp, 0.0, &g).unwrap();
        let direct = sample_localized(&l, 0.0, &g).unwrap().field.add(&vp).unwrap();
        assert!(u0.sub(&direct).unwrap().l2_norm() < 1e-14);
        let u = synth_state(&l, &vp, 3.0, &g).unwrap();
        let ln = sample_localized(&l, 3.0, &g).unwrap().l2_norm;
        assert!(u.l2_norm() <= ln + vp.l2_norm() + 1e-12);
    }

    #[test]
    fn path_limit_velocity() {
        assert_eq!(Path::linear(&[1.0], &[2.0]).limit_velocity(), Some([2.0, 0.0]));
        assert_eq!(Path::fixed(&[1.0, 2.0]).limit_velocity(), Some([0.0, 0.0]));
        let accel = Path { coefficients: vec![vec![0.0], vec![1.0], vec![0.5]] };
        assert_eq!(accel.limit_velocity(), None);
        assert_eq!(accel.position(2.0)[0], 4.0);
        assert_eq!(accel.velocity(2.0)[0], 3.0);
    }
}
