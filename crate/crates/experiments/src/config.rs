//! Scenario configuration: a TOML document with dotted sections, parsed
//! strictly (unknown keys are errors) and echoed back with defaults filled.

use std::path::PathBuf;

use nls_core::fields::{
    InitialDataSpec, LocalizedPathSpec, NonlinearityKind, NonlinearitySpec, PotentialSpec,
};
use nls_core::solver::SolverConfig;
use nls_core::SpatialGrid;
use serde::{Deserialize, Serialize};

use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    FreeCalibration,
    LinearScatterDiag,
    NlsLongrange,
    NlsShortrangeControl,
    DeltaPotential,
    HartreeDiag,
    ConcentrationDemo,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::FreeCalibration,
        Scenario::LinearScatterDiag,
        Scenario::NlsLongrange,
        Scenario::NlsShortrangeControl,
        Scenario::DeltaPotential,
        Scenario::HartreeDiag,
        Scenario::ConcentrationDemo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::FreeCalibration => "free_calibration",
            Scenario::LinearScatterDiag => "linear_scatter_diag",
            Scenario::NlsLongrange => "nls_longrange",
            Scenario::NlsShortrangeControl => "nls_shortrange_control",
            Scenario::DeltaPotential => "delta_potential",
            Scenario::HartreeDiag => "hartree_diag",
            Scenario::ConcentrationDemo => "concentration_demo",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Scenarios driven by a genuine evolution rather than a synthetic decomposition.
    pub fn evolves(self) -> bool {
        matches!(self, Scenario::FreeCalibration | Scenario::NlsShortrangeControl)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    /// Points per axis; a power of two.
    pub n: usize,
    /// Box length per axis.
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_snapshot_spacing")]
    pub snapshot_spacing: f64,
    /// Defaults to three grid spacings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mollify_width: Option<f64>,
    #[serde(default)]
    pub dealias: bool,
    #[serde(default = "default_mass_interval")]
    pub mass_check_interval: usize,
}

fn default_dt() -> f64 {
    1e-2
}
fn default_t_end() -> f64 {
    10.0
}
fn default_snapshot_spacing() -> f64 {
    0.5
}
fn default_mass_interval() -> usize {
    100
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            t_end: default_t_end(),
            snapshot_spacing: default_snapshot_spacing(),
            mollify_width: None,
            dealias: false,
            mass_check_interval: default_mass_interval(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiKind {
    /// `e^{-|x - c|²/2σ²}`.
    Gaussian,
    /// Aligned with `v̂₊` at the truncation level.
    Aligned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiSection {
    #[serde(default = "default_phi_kind")]
    pub kind: PhiKind,
    #[serde(default = "one")]
    pub width: f64,
    #[serde(default)]
    pub center: Vec<f64>,
}

fn default_phi_kind() -> PhiKind {
    PhiKind::Gaussian
}
fn one() -> f64 {
    1.0
}

impl Default for PhiSection {
    fn default() -> Self {
        Self { kind: default_phi_kind(), width: 1.0, center: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default)]
    pub phi: PhiSection,
    /// Truncation level `n` of the aligned test function.
    #[serde(default = "default_trunc")]
    pub trunc_level: f64,
    /// Synthetic runs sample `τ ∈ [1, tau_max]` log-uniformly.
    #[serde(default = "default_tau_max")]
    pub tau_max: f64,
    #[serde(default = "default_tau_points")]
    pub tau_points: usize,
    /// Growth fits use `τ ∈ [fit_min, tau_max]`.
    #[serde(default = "default_fit_min")]
    pub fit_min: f64,
    /// Window starts `t₀` for the integrated point-interaction term.
    #[serde(default)]
    pub window_starts: Vec<f64>,
    #[serde(default = "default_window_len")]
    pub window_len: f64,
    #[serde(default = "default_window_step")]
    pub window_step: f64,
    /// The pairing Cauchy check runs over `[cauchy_from, t_end]`.
    #[serde(default = "default_cauchy_from")]
    pub cauchy_from: f64,
    /// Central-difference derivative check on evolved snapshots.
    #[serde(default)]
    pub derivative_check: bool,
    /// Levels `n = 1..=sequence_levels` of the cutoff test sequence.
    #[serde(default = "default_levels")]
    pub sequence_levels: usize,
    /// Times at which `limsup ‖l_k(t)‖²` is probed.
    #[serde(default = "default_probe_times")]
    pub probe_times: Vec<f64>,
    /// Times of the concentration hypothesis check.
    #[serde(default = "default_hypothesis_times")]
    pub hypothesis_times: Vec<f64>,
    /// Fine grid (points, length) on which velocity-frame test functions live.
    #[serde(default = "default_fine_n")]
    pub fine_n: usize,
    #[serde(default = "default_fine_length")]
    pub fine_length: f64,
}

fn default_trunc() -> f64 {
    10.0
}
fn default_tau_max() -> f64 {
    100.0
}
fn default_tau_points() -> usize {
    61
}
fn default_fit_min() -> f64 {
    10.0
}
fn default_window_len() -> f64 {
    5.0
}
fn default_window_step() -> f64 {
    0.25
}
fn default_cauchy_from() -> f64 {
    50.0
}
fn default_levels() -> usize {
    20
}
fn default_probe_times() -> Vec<f64> {
    vec![1.0, 10.0, 50.0]
}
fn default_hypothesis_times() -> Vec<f64> {
    vec![10.0, 25.0, 50.0, 75.0, 100.0]
}
fn default_fine_n() -> usize {
    8192
}
fn default_fine_length() -> f64 {
    16.0
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            phi: PhiSection::default(),
            trunc_level: default_trunc(),
            tau_max: default_tau_max(),
            tau_points: default_tau_points(),
            fit_min: default_fit_min(),
            window_starts: Vec::new(),
            window_len: default_window_len(),
            window_step: default_window_step(),
            cauchy_from: default_cauchy_from(),
            derivative_check: false,
            sequence_levels: default_levels(),
            probe_times: default_probe_times(),
            hypothesis_times: default_hypothesis_times(),
            fine_n: default_fine_n(),
            fine_length: default_fine_length(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotPolicy {
    None,
    Endpoints,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_snapshots")]
    pub snapshots: SnapshotPolicy,
}

fn default_snapshots() -> SnapshotPolicy {
    SnapshotPolicy::Endpoints
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { snapshots: default_snapshots() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    pub grid: GridSection,
    /// Absent for linear runs (`μ = 0`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinearity: Option<NonlinearitySpec>,
    #[serde(default)]
    pub potential: PotentialSpec,
    /// Initial data of an evolved run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialDataSpec>,
    /// Localized part `l(t)` of a synthetic decomposition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localized: Option<LocalizedPathSpec>,
    /// Scattering profile `v₊` of a synthetic decomposition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_plus: Option<InitialDataSpec>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn invalid(key: &str, msg: impl std::fmt::Display) -> RunError {
    RunError::Config(format!("{key}: {msg}"))
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &[u8]) -> Result<ScenarioConfig, RunError> {
    let text = std::str::from_utf8(text).map_err(|e| RunError::Config(format!("config is not UTF-8: {e}")))?;
    let de = toml::Deserializer::parse(text).map_err(|e| RunError::Config(e.to_string()))?;
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        RunError::Config(format!("{path}: {}", e.into_inner().message()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// The effective configuration as TOML; `parse_config` of the result
/// reproduces `cfg` exactly.
pub fn serialize_config(cfg: &ScenarioConfig) -> Result<String, RunError> {
    toml::to_string(cfg).map_err(|e| RunError::Config(format!("cannot serialize config: {e}")))
}

impl ScenarioConfig {
    pub fn make_grid(&self) -> Result<SpatialGrid, RunError> {
        Ok(SpatialGrid::new(self.grid.dim, self.grid.n, self.grid.length)?)
    }

    pub fn mollify_width(&self) -> Result<f64, RunError> {
        Ok(match self.solver.mollify_width {
            Some(w) => w,
            None => nls_core::fields::default_mollify_width(&self.make_grid()?),
        })
    }

    pub fn solver_config(&self) -> Result<SolverConfig, RunError> {
        let s = &self.solver;
        let snaps = SolverConfig::uniform_snapshots(s.t_end, s.snapshot_spacing);
        let mut cfg = SolverConfig::new(s.dt, s.t_end, snaps, self.mollify_width()?);
        cfg.dealias = s.dealias;
        cfg.mass_check_interval = s.mass_check_interval;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let g = &self.grid;
        if !(1..=2).contains(&g.dim) {
            return Err(invalid("grid.dim", format!("must be 1 or 2, got {}", g.dim)));
        }
        if !g.n.is_power_of_two() || g.n < 8 {
            return Err(invalid("grid.n", format!("must be a power of two ≥ 8, got {}", g.n)));
        }
        if !(g.length.is_finite() && g.length > 0.0) {
            return Err(invalid("grid.length", format!("must be positive, got {}", g.length)));
        }
        let grid = self.make_grid()?;
        let d = g.dim;
        if let Some(nl) = &self.nonlinearity {
            nl.validate().map_err(|e| prefixed("nonlinearity", e))?;
        }
        self.potential.validate(d).map_err(|e| prefixed("potential", e))?;
        if let Some(l) = &self.localized {
            l.validate(d).map_err(prefixed_plain)?;
        }
        for (key, spec) in [("initial", &self.initial), ("v_plus", &self.v_plus)] {
            if let Some(s) = spec {
                nls_core::fields::make_field(s, &grid).map_err(|e| prefixed_rename(key, e))?;
            }
        }
        let s = &self.solver;
        if !(s.snapshot_spacing > 0.0 && s.snapshot_spacing <= s.t_end) {
            return Err(invalid("solver.snapshot_spacing", "must lie in (0, t_end]"));
        }
        self.solver_config()?;
        let dg = &self.diagnostics;
        if !(dg.phi.width > 0.0) {
            return Err(invalid("diagnostics.phi.width", "must be positive"));
        }
        if !dg.phi.center.is_empty() && dg.phi.center.len() != d {
            return Err(invalid("diagnostics.phi.center", format!("expected {d} entries")));
        }
        if !(dg.trunc_level > 0.0) {
            return Err(invalid("diagnostics.trunc_level", "must be positive"));
        }
        if !(dg.tau_max >= 2.0) || dg.tau_points < 10 {
            return Err(invalid("diagnostics.tau_max", "need tau_max ≥ 2 and tau_points ≥ 10"));
        }
        if !(dg.fit_min >= 1.0 && dg.fit_min < dg.tau_max) {
            return Err(invalid("diagnostics.fit_min", "must lie in [1, tau_max)"));
        }
        if !(dg.window_len > 0.0 && dg.window_step > 0.0) {
            return Err(invalid("diagnostics.window_len", "window length and step must be positive"));
        }
        if !dg.fine_n.is_power_of_two() || dg.fine_n < 8 || !(dg.fine_length > 0.0) {
            return Err(invalid("diagnostics.fine_n", "fine grid needs a power-of-two size and a positive length"));
        }
        self.validate_scenario()
    }

    fn validate_scenario(&self) -> Result<(), RunError> {
        let d = self.grid.dim;
        let nl = self.nonlinearity.as_ref();
        let need = |present: bool, key: &str| -> Result<(), RunError> {
            if present {
                Ok(())
            } else {
                Err(invalid(key, format!("required by scenario {}", self.scenario.name())))
            }
        };
        if self.scenario.evolves() {
            need(self.initial.is_some(), "initial")?;
            if self.v_plus.is_some() || self.localized.is_some() {
                return Err(invalid("v_plus", "evolved scenarios take initial data, not a decomposition"));
            }
        } else {
            need(self.v_plus.is_some(), "v_plus")?;
            if self.initial.is_some() {
                return Err(invalid("initial", "synthetic scenarios take v_plus and localized, not initial data"));
            }
        }
        match self.scenario {
            Scenario::FreeCalibration => {
                if nl.is_some() || !self.potential.is_zero() {
                    return Err(invalid("nonlinearity", "free calibration runs with μ = 0 and V = 0"));
                }
            }
            Scenario::LinearScatterDiag => {
                need(nl.is_some(), "nonlinearity")?;
                if !self.potential.components.iter().any(|c| c.class.is_v1()) {
                    return Err(invalid("potential.components", "needs a short-range component"));
                }
            }
            Scenario::NlsLongrange => {
                let nl = nl.ok_or_else(|| invalid("nonlinearity", "required"))?;
                if nl.kind != NonlinearityKind::Power || !nl.long_range(d) {
                    return Err(invalid("nonlinearity.p", format!("needs a power nonlinearity with p ≤ 2/d = {}", 2.0 / d as f64)));
                }
            }
            Scenario::NlsShortrangeControl => {
                let nl = nl.ok_or_else(|| invalid("nonlinearity", "required"))?;
                if nl.kind != NonlinearityKind::Power || nl.long_range(d) {
                    return Err(invalid("nonlinearity.p", format!("needs a power nonlinearity with p > 2/d = {}", 2.0 / d as f64)));
                }
                nl.check_solver_range(d).map_err(|e| prefixed("nonlinearity", e))?;
            }
            Scenario::DeltaPotential => {
                if d != 1 || self.potential.atoms.is_empty() {
                    return Err(invalid("potential.atoms", "point interactions need dim = 1 and at least one atom"));
                }
                if self.diagnostics.window_starts.is_empty() {
                    return Err(invalid("diagnostics.window_starts", "required by scenario delta_potential"));
                }
            }
            Scenario::HartreeDiag => {
                let nl = nl.ok_or_else(|| invalid("nonlinearity", "required"))?;
                if nl.kind != NonlinearityKind::Hartree || !nl.long_range(d) {
                    return Err(invalid("nonlinearity.kind", "needs a Hartree nonlinearity with p ≤ 2/d"));
                }
            }
            Scenario::ConcentrationDemo => {
                let nl = nl.ok_or_else(|| invalid("nonlinearity", "required"))?;
                if !nl.unit_power_range(d) {
                    return Err(invalid("nonlinearity.p", "the concentration construction needs the power nonlinearity with p = 1"));
                }
                need(self.localized.as_ref().is_some_and(|l| !l.is_empty()), "localized")?;
            }
        }
        Ok(())
    }
}

/// Core validation messages start with the key relative to their section.
fn prefixed(section: &str, e: nls_core::Error) -> RunError {
    match e {
        nls_core::Error::Config(m) | nls_core::Error::Domain(m) => {
            if m.starts_with(section) {
                RunError::Config(m)
            } else {
                RunError::Config(format!("{section}.{m}"))
            }
        }
        other => RunError::Core(other),
    }
}

fn prefixed_plain(e: nls_core::Error) -> RunError {
    match e {
        nls_core::Error::Config(m) => RunError::Config(m),
        other => RunError::Core(other),
    }
}

/// Initial-data messages are keyed `initial.…`; `v_plus` reuses the same schema.
fn prefixed_rename(key: &str, e: nls_core::Error) -> RunError {
    match e {
        nls_core::Error::Config(m) => RunError::Config(m.replacen("initial", key, 1)),
        other => RunError::Core(other),
    }
}
