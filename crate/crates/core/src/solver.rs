//! Strang split-step evolution of `i∂ₜu + Δu = Vu + F(u)`.
//!
//! One step is `K(dt/2) N(dt) K(dt/2)` where `K` is the exact free
//! propagator and `N` solves `i∂ₜu = Vu + F(u)` pointwise: exactly for the
//! power nonlinearity, with a midpoint-frozen convolution potential for
//! Hartree. `V` is sampled at the midpoint of each step.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use crate::error::{ensure_finite, Error, Result};
use crate::fields::{sample_potential, NonlinearityKind, NonlinearitySpec, PotentialSpec};
use crate::grid::{GridField, Space, SpatialGrid};
use crate::norms::lp_of_moduli;
use crate::quadrature::{interpolate, simpson, trapezoid};
use crate::spectral::{apply_multiplier, free_propagate};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `(1/|cell|) ∫_cell |x|^{-a} dx` over the grid cell centred at the origin.
pub fn origin_cell_average(grid: &SpatialGrid, a: f64) -> f64 {
    let hx = grid.spacing(0);
    match grid.dim() {
        1 => (hx / 2.0).powf(-a) / (1.0 - a),
        _ => {
            let hy = grid.spacing(1);
            let theta0 = (hy / hx).atan();
            let e = 2.0 - a;
            // Split the rectangle into triangles bounded by x = hx/2 and y = hy/2.
            let near_x = simpson(|th| (0.5 * hx / th.cos()).powf(e), 0.0, theta0, 1000);
            let near_y = simpson(|th| (0.5 * hy / th.sin()).powf(e), theta0, FRAC_PI_2, 1000);
            4.0 * (near_x + near_y) / e / (hx * hy)
        }
    }
}

/// Circular convolution with the sampled kernel `|x|^{-a}`, `a = dp/2`,
/// using minimal-image displacements and the analytic origin-cell average.
#[derive(Debug, Clone)]
pub struct HartreeKernel {
    grid: SpatialGrid,
    spectrum: Vec<Complex64>,
}

impl HartreeKernel {
    pub fn new(grid: &SpatialGrid, p: f64) -> Result<Self> {
        let d = grid.dim() as f64;
        let a = d * p / 2.0;
        if !(a > 0.0 && a < d) {
            return Err(Error::Domain(format!("Hartree kernel needs 0 < dp/2 < d, got dp/2 = {a}")));
        }
        let origin = origin_cell_average(grid, a);
        let mut spectrum: Vec<Complex64> = (0..grid.len())
            .map(|i| {
                let ij = grid.unflatten(i);
                let r2: f64 = (0..grid.dim())
                    .map(|ax| (grid.signed_index(ij[ax]) as f64 * grid.spacing(ax)).powi(2))
                    .sum();
                Complex64::new(if i == 0 { origin } else { r2.powf(-a / 2.0) }, 0.0)
            })
            .collect();
        grid.fft_forward(&mut spectrum);
        let scale = grid.cell_volume() / grid.len() as f64;
        for z in &mut spectrum {
            *z *= scale;
        }
        Ok(Self { grid: grid.clone(), spectrum })
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// `Σ_j K(x_i - x_j) ρ_j h^d`.
    pub fn convolve(&self, density: &[f64]) -> Vec<f64> {
        let mut data: Vec<Complex64> = density.iter().map(|r| Complex64::new(*r, 0.0)).collect();
        self.grid.fft_forward(&mut data);
        for (z, k) in data.iter_mut().zip(&self.spectrum) {
            *z *= k;
        }
        self.grid.fft_inverse(&mut data);
        data.iter().map(|z| z.re).collect()
    }
}

fn density(u: &GridField) -> Vec<f64> {
    u.values().iter().map(|z| z.norm_sqr()).collect()
}

/// `K ∗ |u|²` with `K = |x|^{-dp/2}`; real-valued.
pub fn hartree_potential(u: &GridField, p: f64) -> Result<GridField> {
    u.expect_space(Space::Physical)?;
    let k = HartreeKernel::new(u.grid(), p)?;
    real_field(u, k.convolve(&density(u)))
}

fn real_field(like: &GridField, values: Vec<f64>) -> Result<GridField> {
    let v = values.into_iter().map(|r| Complex64::new(r, 0.0)).collect();
    let mut f = GridField::new(like.grid().clone(), v, Space::Physical)?;
    f.set_time(like.time());
    Ok(f)
}

/// `F` bound to a grid, caching the Hartree kernel spectrum.
#[derive(Debug, Clone)]
pub struct NonlinearOperator {
    spec: NonlinearitySpec,
    kernel: Option<HartreeKernel>,
}

impl NonlinearOperator {
    pub fn new(spec: &NonlinearitySpec, grid: &SpatialGrid) -> Result<Self> {
        spec.validate()?;
        let kernel = match spec.kind {
            NonlinearityKind::Power => None,
            NonlinearityKind::Hartree => Some(HartreeKernel::new(grid, spec.p)?),
        };
        Ok(Self { spec: *spec, kernel })
    }

    pub fn spec(&self) -> &NonlinearitySpec {
        &self.spec
    }

    fn kernel_for(&self, grid: &SpatialGrid) -> Result<&HartreeKernel> {
        let k = self.kernel.as_ref().expect("Hartree operator carries a kernel");
        k.grid().same_shape(grid)?;
        Ok(k)
    }

    /// `F(u)`.
    pub fn apply(&self, u: &GridField) -> Result<GridField> {
        u.expect_space(Space::Physical)?;
        let (p, mu) = (self.spec.p, self.spec.mu);
        match self.spec.kind {
            NonlinearityKind::Power => Ok(u.map(|z| mu * z.norm().powf(p) * z)),
            NonlinearityKind::Hartree => {
                let phi = self.kernel_for(u.grid())?.convolve(&density(u));
                Ok(u.map_indexed(|i, z| mu * phi[i] * z))
            }
        }
    }
}

/// `F(u)` for a one-off evaluation.
pub fn apply_nonlinearity(u: &GridField, nl: &NonlinearitySpec) -> Result<GridField> {
    NonlinearOperator::new(nl, u.grid())?.apply(u)
}

/// Exact solution of `i∂ₜu = (V + μ|u|^p)u` at one point over `dt`.
///
/// With `ρ = |u|^{-p}`, `ρ' = -p(Im V ρ + Im μ)` is linear, so the modulus and
/// the phase integral `∫ |u|^p` have closed forms.
fn power_point(u0: Complex64, dt: f64, p: f64, mu: Complex64, v: Complex64, t: f64) -> Result<Complex64> {
    let m0 = u0.norm();
    if m0 == 0.0 {
        return Ok(ZERO);
    }
    let k = p * v.im;
    let g = if (k * dt).abs() < 1e-12 { dt * (1.0 + 0.5 * k * dt) } else { (k * dt).exp_m1() / k };
    let m0p = m0.powf(p);
    let x = -p * mu.im * m0p * g;
    if 1.0 + x <= 0.0 {
        return Err(Error::StepSize {
            t,
            detail: format!("closed-form modulus blows up within dt = {dt} (|u| = {m0}); reduce dt"),
        });
    }
    let l1p = x.ln_1p();
    let ratio = if x.abs() < 1e-10 { 1.0 - 0.5 * x } else { l1p / x };
    let scale = (v.im * dt - l1p / p).exp();
    let theta = v.re * dt + mu.re * m0p * g * ratio;
    Ok(u0 * scale * Complex64::from_polar(1.0, -theta))
}

/// The non-kinetic substep `i∂ₜu = Vu + F(u)` over `dt` (which may be negative).
pub fn nonlinear_phase_step(
    u: &GridField,
    dt: f64,
    nl: Option<&NonlinearitySpec>,
    v_now: Option<&GridField>,
) -> Result<GridField> {
    let op = nl.map(|s| NonlinearOperator::new(s, u.grid())).transpose()?;
    phase_step(u, dt, op.as_ref(), v_now, u.time().unwrap_or(0.0))
}

fn phase_step(
    u: &GridField,
    dt: f64,
    op: Option<&NonlinearOperator>,
    v_now: Option<&GridField>,
    t: f64,
) -> Result<GridField> {
    u.expect_space(Space::Physical)?;
    if let Some(v) = v_now {
        u.grid().same_shape(v.grid())?;
    }
    let v_at = |i: usize| v_now.map_or(ZERO, |v| v.values()[i]);
    let Some(op) = op else {
        return Ok(u.map_indexed(|i, z| z * (-Complex64::i() * v_at(i) * dt).exp()));
    };
    let spec = op.spec;
    let out: Vec<Complex64> = match spec.kind {
        NonlinearityKind::Power => u
            .values()
            .iter()
            .enumerate()
            .map(|(i, z)| power_point(*z, dt, spec.p, spec.mu, v_at(i), t))
            .collect::<Result<_>>()?,
        NonlinearityKind::Hartree => {
            let kernel = op.kernel_for(u.grid())?;
            let rotate = |phi: &[f64], h: f64| -> Vec<Complex64> {
                u.values()
                    .iter()
                    .enumerate()
                    .map(|(i, z)| z * (-Complex64::i() * (v_at(i) + spec.mu * phi[i]) * h).exp())
                    .collect()
            };
            let phi0 = kernel.convolve(&density(u));
            let modulus_preserving = spec.mu.im == 0.0 && v_now.is_none_or(|v| v.values().iter().all(|z| z.im == 0.0));
            if modulus_preserving {
                rotate(&phi0, dt)
            } else {
                let half = rotate(&phi0, 0.5 * dt);
                let rho: Vec<f64> = half.iter().map(|z| z.norm_sqr()).collect();
                rotate(&kernel.convolve(&rho), dt)
            }
        }
    };
    ensure_finite(&out, "nonlinear substep")?;
    let mut f = GridField::new(u.grid().clone(), out, Space::Physical)?;
    f.set_time(u.time());
    Ok(f)
}

/// One Strang step `K(dt/2) N(dt) K(dt/2)` with `V` frozen at `v_mid`.
pub fn strang_step(
    u: &GridField,
    dt: f64,
    op: Option<&NonlinearOperator>,
    v_mid: Option<&GridField>,
) -> Result<GridField> {
    let t = u.time().unwrap_or(0.0);
    let a = free_propagate(u, 0.5 * dt)?;
    let b = phase_step(&a, dt, op, v_mid, t)?;
    let mut c = free_propagate(&b, 0.5 * dt)?;
    c.set_time(Some(t + dt));
    Ok(c)
}

/// Zeroes modes with `|k'| > n/3` on any axis (2/3 rule).
fn dealias(u: &GridField) -> Result<GridField> {
    let g = u.grid().clone();
    let cut: Vec<f64> = (0..g.dim()).map(|a| g.wavenumber(a, g.n() / 3) * (1.0 + 1e-12)).collect();
    apply_multiplier(u, |xi| {
        if xi.iter().zip(&cut).all(|(k, c)| k.abs() <= *c) {
            Complex64::new(1.0, 0.0)
        } else {
            ZERO
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Strictly increasing times in `[0, t_end]`; `t_end` is always recorded.
    pub snapshot_times: Vec<f64>,
    pub mollify_width: f64,
    pub dealias: bool,
    /// Mass is logged every this many steps (and at every snapshot).
    pub mass_check_interval: usize,
}

impl SolverConfig {
    pub fn new(dt: f64, t_end: f64, snapshot_times: Vec<f64>, mollify_width: f64) -> Self {
        Self { dt, t_end, snapshot_times, mollify_width, dealias: false, mass_check_interval: 100 }
    }

    /// Uniform snapshots `0, δ, 2δ, …` up to `t_end`.
    pub fn uniform_snapshots(t_end: f64, spacing: f64) -> Vec<f64> {
        let m = (t_end / spacing).round() as usize;
        (0..=m).map(|k| t_end * k as f64 / m as f64).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("solver.dt: must be positive, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::Config(format!("solver.t_end: must be positive, got {}", self.t_end)));
        }
        if !(self.mollify_width.is_finite() && self.mollify_width > 0.0) {
            return Err(Error::Config("solver.mollify_width: must be positive".into()));
        }
        if self.mass_check_interval == 0 {
            return Err(Error::Config("solver.mass_check_interval: must be ≥ 1".into()));
        }
        if self.snapshot_times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("solver.snapshot_times: must be strictly increasing".into()));
        }
        if self.snapshot_times.iter().any(|t| !(*t >= 0.0 && *t <= self.t_end)) {
            return Err(Error::Config("solver.snapshot_times: must lie in [0, t_end]".into()));
        }
        Ok(())
    }

    fn targets(&self) -> Vec<f64> {
        let mut ts = self.snapshot_times.clone();
        if ts.last().is_none_or(|t| *t < self.t_end) {
            ts.push(self.t_end);
        }
        ts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Snapshots with their time labels, strictly increasing.
    pub snapshots: Vec<GridField>,
    pub mass_log: Vec<(f64, f64)>,
    pub config: SolverConfig,
    /// Largest step actually used after the stability guard.
    pub dt_used: f64,
    /// Time up to which the periodic box faithfully represents ℝ^d.
    pub t_valid: f64,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time().unwrap_or(f64::NAN)).collect()
    }

    pub fn at(&self, t: f64) -> Option<&GridField> {
        self.snapshots.iter().find(|s| s.time().is_some_and(|st| (st - t).abs() <= 1e-9 * t.abs().max(1.0)))
    }

    pub fn final_state(&self) -> Option<&GridField> {
        self.snapshots.last()
    }

    pub fn max_relative_mass_drift(&self) -> f64 {
        let Some(&(_, m0)) = self.mass_log.first() else { return 0.0 };
        if m0 == 0.0 {
            return 0.0;
        }
        self.mass_log.iter().map(|(_, m)| (m - m0).abs() / m0).fold(0.0, f64::max)
    }
}

/// `T` with `L = 4(extent + 2 v_max T)`: the longest run the box supports.
pub fn validity_horizon(box_length: f64, extent: f64, v_max: f64) -> f64 {
    let room = box_length / 4.0 - extent;
    if room <= 0.0 {
        0.0
    } else if v_max <= 0.0 {
        f64::INFINITY
    } else {
        room / (2.0 * v_max)
    }
}

/// Radius from the origin holding all but `tol` of the mass of `f`.
fn mass_radius(f: &GridField, radius: impl Fn(usize) -> f64, tol: f64) -> f64 {
    let mut pts: Vec<(f64, f64)> = f.values().iter().enumerate().map(|(i, z)| (radius(i), z.norm_sqr())).collect();
    let total: f64 = pts.iter().map(|p| p.1).sum();
    if total == 0.0 {
        return 0.0;
    }
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut outside = 0.0;
    for (r, m) in pts {
        outside += m;
        if outside > tol * total {
            return r;
        }
    }
    0.0
}

/// Spatial extent and maximal group velocity `2|ξ|` of `u0`, each taken
/// where all but a `1e-6` fraction of the (spectral) mass is captured.
pub fn data_extent_and_speed(u0: &GridField) -> Result<(f64, f64)> {
    let g = u0.grid();
    let extent = mass_radius(u0, |i| g.radius_sq(i).sqrt(), 1e-6);
    let spec = crate::spectral::forward_transform(u0)?;
    let kmax = mass_radius(&spec, |i| g.frequency_sq(i).sqrt(), 1e-6);
    Ok((extent, 2.0 * kmax))
}

pub fn horizon_for(u0: &GridField) -> Result<f64> {
    let (extent, v) = data_extent_and_speed(u0)?;
    let l = u0.grid().lengths().iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(validity_horizon(l, extent, v))
}

fn is_static(pot: &PotentialSpec) -> bool {
    pot.time_modulation.is_none() && pot.components.iter().all(|c| c.path.coefficients.len() <= 1)
}

/// Evolves `u0`, returning whatever was computed before a failure alongside the error.
pub fn evolve_partial(
    u0: &GridField,
    cfg: &SolverConfig,
    nl: Option<&NonlinearitySpec>,
    pot: &PotentialSpec,
) -> (Trajectory, Option<Error>) {
    let mut traj = Trajectory {
        snapshots: Vec::new(),
        mass_log: Vec::new(),
        config: cfg.clone(),
        dt_used: cfg.dt,
        t_valid: f64::NAN,
    };
    let err = run(u0, cfg, nl, pot, &mut traj).err();
    (traj, err)
}

pub fn evolve(
    u0: &GridField,
    cfg: &SolverConfig,
    nl: Option<&NonlinearitySpec>,
    pot: &PotentialSpec,
) -> Result<Trajectory> {
    match evolve_partial(u0, cfg, nl, pot) {
        (traj, None) => Ok(traj),
        (_, Some(e)) => Err(e),
    }
}

fn run(
    u0: &GridField,
    cfg: &SolverConfig,
    nl: Option<&NonlinearitySpec>,
    pot: &PotentialSpec,
    traj: &mut Trajectory,
) -> Result<()> {
    cfg.validate()?;
    u0.expect_space(Space::Physical)?;
    ensure_finite(u0.values(), "initial data")?;
    let grid = u0.grid().clone();
    pot.validate(grid.dim())?;
    if let Some(s) = nl {
        s.check_solver_range(grid.dim())?;
    }
    let op = nl.map(|s| NonlinearOperator::new(s, &grid)).transpose()?;
    let w = cfg.mollify_width;
    let sample = |t: f64| -> Result<Option<GridField>> {
        if pot.is_zero() {
            Ok(None)
        } else {
            sample_potential(pot, t, &grid, w).map(Some)
        }
    };
    let fixed_v = if is_static(pot) { sample(0.0)? } else { None };

    // Stability guard: dt ≤ 0.05 / max(|μ| max|u|^p, max|V|).
    let nl_size = match &op {
        None => 0.0,
        Some(o) => match o.spec.kind {
            NonlinearityKind::Power => o.spec.mu.norm() * u0.sup_norm().powf(o.spec.p),
            NonlinearityKind::Hartree => {
                let phi = o.kernel_for(&grid)?.convolve(&density(u0));
                o.spec.mu.norm() * phi.iter().cloned().fold(0.0, f64::max)
            }
        },
    };
    let v_size = match &fixed_v {
        Some(v) => v.sup_norm(),
        None if pot.is_zero() => 0.0,
        None => sample(0.0)?.map_or(0.0, |v| v.sup_norm()),
    };
    let rate = nl_size.max(v_size);
    let dt = if rate > 0.0 { cfg.dt.min(0.05 / rate) } else { cfg.dt };
    traj.dt_used = dt;
    traj.t_valid = horizon_for(u0)?;

    let mut u = u0.clone().with_time(0.0);
    let mut t = 0.0;
    let mut steps = 0usize;
    traj.mass_log.push((0.0, u.l2_norm_sq()));
    for target in cfg.targets() {
        if target == 0.0 {
            traj.snapshots.push(u.clone());
            continue;
        }
        let m = (((target - t) / dt) - 1e-9).ceil().max(1.0) as usize;
        let h = (target - t) / m as f64;
        for k in 0..m {
            let t_mid = t + (k as f64 + 0.5) * h;
            let v_mid = match &fixed_v {
                Some(v) => Some(v.clone()),
                None => sample(t_mid)?,
            };
            let step = strang_step(&u, h, op.as_ref(), v_mid.as_ref()).and_then(|s| {
                if cfg.dealias {
                    dealias(&s)
                } else {
                    Ok(s)
                }
            });
            let t_prev = u.time().unwrap_or(t);
            u = match step {
                Ok(s) => s,
                Err(Error::NonFinite(detail)) => {
                    return Err(Error::Aborted { last_valid_time: t_prev, detail });
                }
                Err(e) => return Err(e),
            };
            u.set_time(Some(t + (k + 1) as f64 * h));
            steps += 1;
            if steps.is_multiple_of(cfg.mass_check_interval) {
                traj.mass_log.push((u.time().unwrap_or(0.0), u.l2_norm_sq()));
            }
        }
        t = target;
        u.set_time(Some(target));
        if traj.mass_log.last().is_none_or(|(lt, _)| *lt != target) {
            traj.mass_log.push((target, u.l2_norm_sq()));
        }
        traj.snapshots.push(u.clone());
    }
    Ok(())
}

/// Space-time exponent pair of a Strichartz window norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrichartzPair {
    /// `L^q_t L^r_x`; `r = ∞` allowed.
    Admissible { q: f64, r: f64 },
    /// `L^4_t C_b` (d = 1).
    Endpoint1d,
}

impl StrichartzPair {
    fn exponents(self) -> (f64, f64) {
        match self {
            StrichartzPair::Admissible { q, r } => (q, r),
            StrichartzPair::Endpoint1d => (4.0, f64::INFINITY),
        }
    }
}

/// `(∫_{t0}^{t0+T} ‖u(t)‖_r^q dt)^{1/q}` by the trapezoid rule over snapshots,
/// with the integrand linearly interpolated at the window ends.
pub fn window_norm(times: &[f64], fields: &[&GridField], t0: f64, len: f64, pair: StrichartzPair) -> Result<f64> {
    let (q, r) = pair.exponents();
    if !(q >= 1.0 && r >= 1.0) {
        return Err(Error::Domain(format!("Strichartz exponents must be ≥ 1, got ({q}, {r})")));
    }
    let t1 = t0 + len;
    let (first, last) = match (times.first(), times.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(Error::Range("no snapshots".into())),
    };
    let tol = 1e-9 * t1.abs().max(1.0);
    if !(len > 0.0) || t0 < first - tol || t1 > last + tol {
        return Err(Error::Range(format!("window [{t0}, {t1}] not covered by snapshots on [{first}, {last}]")));
    }
    let values: Vec<f64> = fields
        .iter()
        .map(|f| {
            let w = f.weight();
            let m = f.values().iter().map(|z| z.norm());
            if r.is_infinite() {
                f.sup_norm()
            } else {
                lp_of_moduli(m, r, w)
            }
            .powf(q)
        })
        .collect();
    let (t0c, t1c) = (t0.max(first), t1.min(last));
    let mut xs = vec![t0c];
    let mut ys = vec![interpolate(times, &values, t0c).unwrap_or(values[0])];
    for (t, v) in times.iter().zip(&values) {
        if *t > t0c && *t < t1c {
            xs.push(*t);
            ys.push(*v);
        }
    }
    xs.push(t1c);
    ys.push(interpolate(times, &values, t1c).unwrap_or(values[values.len() - 1]));
    Ok(trapezoid(&xs, &ys).powf(1.0 / q))
}

pub fn strichartz_window_norm(traj: &Trajectory, t0: f64, len: f64, pair: StrichartzPair) -> Result<f64> {
    let fields: Vec<&GridField> = traj.snapshots.iter().collect();
    window_norm(&traj.times(), &fields, t0, len, pair)
}
