//! Run summaries, derived only from the echoed configuration and the
//! persisted tables of a run directory.

use std::path::Path;

use nls_core::fields::{sample_localized, NonlinearityKind};
use nls_core::glassey::{alpha, growth_fit, GrowthFit, GrowthModel, PairingSeries, SeriesRow};
use nls_core::quadrature::log_log_slope;
use nls_core::solver::horizon_for;
use serde::{Deserialize, Serialize};

use crate::config::{parse_config, Scenario, ScenarioConfig};
use crate::output::{self, io_err, read_series, Table};
use crate::runner::{self, build_phi, reference_profile};
use crate::RunError;

/// Growth of the integrated main term expected from `dp/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub model: GrowthModel,
    pub exponent: f64,
    /// `α(τ_max)` when the main term is not integrable.
    pub alpha_tau_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invariant {
    pub name: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: Scenario,
    pub dim: usize,
    pub kind: Option<NonlinearityKind>,
    pub p: Option<f64>,
    pub mu: Option<[f64; 2]>,
    pub prediction: Option<Prediction>,
    pub fit: Option<GrowthFit>,
    pub invariants: Vec<Invariant>,
    /// Last time at which the periodic box represents free spreading faithfully.
    pub validity_horizon: Option<f64>,
    /// Some sampled time lies beyond the horizon; results there are flagged, not failed.
    pub horizon_exceeded: bool,
    /// A localized component reached the box edge within the sampled times.
    pub localized_escaped: bool,
    pub aborted: Option<String>,
    pub files: Vec<String>,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.aborted.is_none() && self.invariants.iter().all(|i| i.passed)
    }

    pub fn pass_count(&self) -> usize {
        self.invariants.iter().filter(|i| i.passed).count()
    }
}

pub fn predict(dim: usize, p: f64, tau_max: f64) -> Prediction {
    let a = dim as f64 * p / 2.0;
    if (a - 1.0).abs() <= 1e-12 {
        Prediction { model: GrowthModel::Logarithmic, exponent: 0.0, alpha_tau_max: alpha(tau_max, p, dim).ok() }
    } else if a < 1.0 {
        Prediction { model: GrowthModel::PowerLaw, exponent: 1.0 - a, alpha_tau_max: alpha(tau_max, p, dim).ok() }
    } else {
        Prediction { model: GrowthModel::Constant, exponent: 0.0, alpha_tau_max: None }
    }
}

struct Ctx<'a> {
    dir: &'a Path,
    cfg: &'a ScenarioConfig,
    rows: &'a [SeriesRow],
    phi_norm: f64,
    invariants: Vec<Invariant>,
}

impl Ctx<'_> {
    fn check(&mut self, name: &str, source: &str, value: Option<f64>, threshold: Option<f64>, passed: bool) {
        self.invariants.push(Invariant {
            name: name.into(),
            passed,
            value,
            threshold,
            source: source.into(),
        });
    }

    fn table(&self, name: &str) -> Result<Table, RunError> {
        Table::read(&self.dir.join(name))
    }

    fn column(&self, t: &Table, name: &str) -> Result<Vec<Option<f64>>, RunError> {
        t.column(name).ok_or_else(|| RunError::Format(format!("missing column {name}")))
    }

    fn pairing_bounded(&mut self) {
        let s = PairingSeries { dim: self.cfg.grid.dim, nonlinearity: None, phi_norm: self.phi_norm, rows: self.rows.to_vec() };
        let m = self.rows.iter().map(|r| r.mass).fold(0.0, f64::max).sqrt();
        let worst = self.rows.iter().map(|r| r.pairing.norm()).fold(0.0, f64::max);
        self.check("pairing_bounded", output::SERIES_FILE, Some(worst), Some(m * self.phi_norm), s.pairing_bounded());
    }

    fn mass_drift(&mut self, tol: f64) {
        let m0 = self.rows.first().map_or(0.0, |r| r.mass);
        let drift = if m0 > 0.0 { self.rows.iter().map(|r| (r.mass - m0).abs() / m0).fold(0.0, f64::max) } else { 0.0 };
        self.check("mass_conserved", output::SERIES_FILE, Some(drift), Some(tol), drift <= tol);
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        a / b
    }
}

/// Recomputes the summary of a finished run from its directory.
pub fn summarize(dir: &Path) -> Result<Summary, RunError> {
    let echo = dir.join(output::CONFIG_ECHO_FILE);
    let cfg = parse_config(&std::fs::read(&echo).map_err(|e| io_err(&echo, e))?)?;
    let rows = read_series(&dir.join(output::SERIES_FILE))?;
    let grid = cfg.make_grid()?;
    let profile = reference_profile(&cfg, &grid)?;
    let phi = build_phi(&cfg, &grid, &profile)?;
    let d = cfg.grid.dim;
    let nl = cfg.nonlinearity;
    let mut ctx = Ctx { dir, cfg: &cfg, rows: &rows, phi_norm: phi.l2_norm(), invariants: Vec::new() };

    let abort_path = dir.join(runner::ABORT_FILE);
    let aborted = if abort_path.exists() {
        Some(std::fs::read_to_string(&abort_path).map_err(|e| io_err(&abort_path, e))?.trim().to_string())
    } else {
        None
    };

    let horizon = horizon_for(&profile)?;
    let t_last = rows.last().map_or(0.0, |r| r.t);
    let localized_escaped = match cfg.localized.as_ref().filter(|l| !l.is_empty()) {
        Some(l) => sample_localized(l, t_last, &grid)?.escaped,
        None => false,
    };

    let mut prediction = None;
    let mut fit = None;
    ctx.pairing_bounded();
    match cfg.scenario {
        Scenario::FreeCalibration => {
            let p0 = rows.first().map(|r| r.pairing).unwrap_or_default();
            let scale = rows.first().map_or(0.0, |r| r.mass.sqrt()) * ctx.phi_norm;
            let dev = rows.iter().map(|r| (r.pairing - p0).norm()).fold(0.0, f64::max);
            ctx.check("pairing_constant", output::SERIES_FILE, Some(rel(dev, scale)), Some(1e-10), rel(dev, scale) <= 1e-10);
            ctx.mass_drift(1e-10);
        }
        Scenario::NlsShortrangeControl => {
            let from = cfg.diagnostics.cauchy_from;
            let late: Vec<&SeriesRow> = rows.iter().filter(|r| r.t >= from - 1e-9).collect();
            let mut spread: f64 = 0.0;
            for a in &late {
                for b in &late {
                    spread = spread.max((a.pairing - b.pairing).norm());
                }
            }
            let scale = rows.iter().map(|r| r.mass).fold(0.0, f64::max).sqrt() * ctx.phi_norm;
            let ok = !late.is_empty() && spread <= 0.05 * scale;
            ctx.check("pairing_cauchy", output::SERIES_FILE, Some(rel(spread, scale)), Some(0.05), ok);
            ctx.mass_drift(1e-6);
        }
        Scenario::LinearScatterDiag => {
            let t = ctx.table(runner::V1_FILE)?;
            let ts = ctx.column(&t, "t")?;
            let re = ctx.column(&t, "v1_re")?;
            let im = ctx.column(&t, "v1_im")?;
            let bound = ctx.column(&t, "v1_bound")?;
            let vals: Vec<f64> = re.iter().zip(&im).map(|(a, b)| a.unwrap_or(0.0).hypot(b.unwrap_or(0.0))).collect();
            if bound.iter().all(|b| b.is_some()) {
                let worst = vals.iter().zip(&bound).map(|(v, b)| v - b.unwrap_or(0.0)).fold(f64::NEG_INFINITY, f64::max);
                ctx.check("v1_holder_bound", runner::V1_FILE, Some(worst), Some(0.0), worst <= 1e-14);
            }
            let p = nl.map_or(0.0, |s| s.p);
            let pts: Vec<(f64, f64)> = ts
                .iter()
                .zip(&vals)
                .filter_map(|(t, v)| t.filter(|t| *t >= cfg.diagnostics.fit_min - 1e-9).map(|t| (t, *v)))
                .collect();
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let slope = log_log_slope(&x, &y).ok();
            let target = -(d as f64) * p / 2.0;
            ctx.check("v1_decay", runner::V1_FILE, slope, Some(target), slope.is_some_and(|s| s <= target));
        }
        Scenario::NlsLongrange | Scenario::HartreeDiag => {
            let nl = nl.expect("validated");
            let pred = predict(d, nl.p, cfg.diagnostics.tau_max);
            let series = PairingSeries { dim: d, nonlinearity: Some(nl), phi_norm: ctx.phi_norm, rows: rows.clone() };
            let curve = series.glassey_curve()?;
            let (t, y): (Vec<f64>, Vec<f64>) =
                curve.into_iter().filter(|(t, _)| *t >= cfg.diagnostics.fit_min - 1e-9).unzip();
            let f = growth_fit(&t, &y)?;
            let ok = match pred.model {
                GrowthModel::PowerLaw => f.model == GrowthModel::PowerLaw && (f.exponent - pred.exponent).abs() <= 0.1,
                m => f.model == m,
            };
            let value = (f.model == GrowthModel::PowerLaw).then_some(f.exponent);
            ctx.check("growth_matches_prediction", output::SERIES_FILE, value, Some(pred.exponent), ok);
            let lt = ctx.table(runner::LIMIT_FILE)?;
            let limit = num_complex::Complex64::new(
                ctx.column(&lt, "limit_re")?[0].unwrap_or(f64::NAN),
                ctx.column(&lt, "limit_im")?[0].unwrap_or(f64::NAN),
            );
            let has_l = cfg.localized.as_ref().is_some_and(|l| !l.is_empty());
            // For power nonlinearities with p ≥ 1 the localized part keeps a share of the main term.
            let applies = nl.kind == NonlinearityKind::Hartree || nl.p < 1.0 || !has_l;
            if let (true, Some(main)) = (applies, rows.last().and_then(|r| r.main)) {
                let tol = if nl.kind == NonlinearityKind::Hartree { 0.08 } else { 0.05 };
                let err = rel((main - limit).norm(), limit.norm());
                ctx.check("main_term_limit", runner::LIMIT_FILE, Some(err), Some(tol), err <= tol);
            }
            prediction = Some(pred);
            fit = Some(f);
        }
        Scenario::DeltaPotential => {
            let t = ctx.table(runner::WINDOWS_FILE)?;
            let t0: Vec<f64> = ctx.column(&t, "t0")?.into_iter().flatten().collect();
            let integral: Vec<f64> = ctx.column(&t, "integral")?.into_iter().flatten().collect();
            let bound: Vec<f64> = ctx.column(&t, "bound")?.into_iter().flatten().collect();
            let worst = integral.iter().zip(&bound).map(|(a, b)| a / b).fold(0.0, f64::max);
            ctx.check("window_bound", runner::WINDOWS_FILE, Some(worst), Some(1.0), worst <= 1.0 + 1e-12);
            if t0.len() >= 2 {
                let slope = log_log_slope(&t0, &integral).ok();
                let ok = slope.is_some_and(|s| (s + 0.5).abs() <= 0.15);
                ctx.check("window_decay", runner::WINDOWS_FILE, slope, Some(-0.5), ok);
            }
        }
        Scenario::ConcentrationDemo => {
            let seq = ctx.table(runner::SEQUENCE_FILE)?;
            let n = ctx.column(&seq, "n")?;
            let l1 = ctx.column(&seq, "psi_l1")?;
            let main = ctx.column(&seq, "main_re")?;
            let nu_pair = ctx.column(&seq, "nu_pairing")?;
            let cap = 4f64.powi(d as i32);
            let worst = n
                .iter()
                .zip(&l1)
                .map(|(n, l)| l.unwrap_or(f64::NAN) / (cap * 0.5f64.powf(n.unwrap_or(f64::NAN))))
                .fold(0.0, f64::max);
            ctx.check("cutoff_l1", runner::SEQUENCE_FILE, Some(worst), Some(1.0), worst <= 1.0);
            let mass = profile.l2_norm_sq();
            let hit = main
                .iter()
                .zip(&nu_pair)
                .position(|(m, q)| m.unwrap_or(0.0) >= 0.9 * mass && q.unwrap_or(f64::INFINITY) <= 0.01 * mass);
            ctx.check("separation", runner::SEQUENCE_FILE, hit.map(|i| (i + 1) as f64), None, hit.is_some());
            let hyp = ctx.table(runner::HYPOTHESIS_FILE)?;
            let ht = ctx.column(&hyp, "t")?;
            let slack = ctx.column(&hyp, "slack")?;
            let nu_phi = ctx.column(&hyp, "nu_pairing")?.first().copied().flatten().unwrap_or(0.0);
            let worst = ht
                .iter()
                .zip(&slack)
                .filter(|(t, _)| t.is_some_and(|t| t >= 50.0))
                .map(|(_, s)| rel(s.unwrap_or(f64::NEG_INFINITY), nu_phi.abs()))
                .fold(f64::INFINITY, f64::min);
            ctx.check("hypothesis_slack", runner::HYPOTHESIS_FILE, Some(worst), Some(-0.02), worst >= -0.02);
            let lt = ctx.table(runner::L_TERM_FILE)?;
            let cubic = ctx.column(&lt, "cubic")?;
            let density = ctx.column(&lt, "density")?;
            let ok = cubic.iter().zip(&density).all(|(c, q)| c.unwrap_or(f64::NAN) <= q.unwrap_or(f64::NAN) * (1.0 + 1e-12));
            ctx.check("l_term_chain", runner::L_TERM_FILE, None, None, ok);
        }
    }
    if cfg.diagnostics.derivative_check && dir.join(runner::DERIVATIVE_FILE).exists() {
        let t = ctx.table(runner::DERIVATIVE_FILE)?;
        let defects: Vec<f64> = ctx.column(&t, "defect")?.into_iter().flatten().collect();
        let max_p = ctx.column(&t, "max_pairing")?.first().copied().flatten().unwrap_or(0.0);
        let worst = rel(defects.iter().cloned().fold(0.0, f64::max), max_p);
        ctx.check("derivative_identity", runner::DERIVATIVE_FILE, Some(worst), Some(1e-4), worst <= 1e-4);
    }

    let invariants = ctx.invariants;
    let mut files: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n != output::SUMMARY_FILE && n != output::TIMING_FILE)
        .collect();
    files.sort();
    Ok(Summary {
        scenario: cfg.scenario,
        dim: d,
        kind: nl.map(|s| s.kind),
        p: nl.map(|s| s.p),
        mu: nl.map(|s| [s.mu.re, s.mu.im]),
        prediction,
        fit,
        invariants,
        validity_horizon: horizon.is_finite().then_some(horizon),
        horizon_exceeded: t_last > horizon,
        localized_escaped,
        aborted,
        files,
    })
}
