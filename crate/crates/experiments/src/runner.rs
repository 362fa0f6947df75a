//! Scenario orchestration: builds fields from the configuration, assembles the
//! diagnostic series (one independent task per sample time, collected in
//! order), writes every table, then derives the summary from the files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nls_core::concentration::{
    hypothesis_check, l_term_bound_check, nu_from_paths, test_sequence, AtomicMeasure, MeasureFrame,
};
use nls_core::fields::{make_field, synth_state, LocalizedPathSpec};
use nls_core::glassey::{choose_test_function, main_term_limit, potential_term, v2_window, SeriesContext, SeriesRow};
use nls_core::quadrature::log_space;
use nls_core::solver::{evolve_partial, NonlinearOperator};
use nls_core::spectral::free_propagate;
use nls_core::{GridField, SpatialGrid};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{serialize_config, PhiKind, Scenario, ScenarioConfig, SnapshotPolicy};
use crate::output::{self, io_err, write_json, write_snapshot, Table};
use crate::summary::{summarize, Summary};
use crate::RunError;

pub const V1_FILE: &str = "v1_bound.csv";
pub const LIMIT_FILE: &str = "limit.csv";
pub const WINDOWS_FILE: &str = "windows.csv";
pub const SEQUENCE_FILE: &str = "test_sequence.csv";
pub const HYPOTHESIS_FILE: &str = "hypothesis.csv";
pub const L_TERM_FILE: &str = "l_term.csv";
pub const DERIVATIVE_FILE: &str = "derivative.csv";
pub const ABORT_FILE: &str = "abort.txt";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Single worker thread.
    pub deterministic: bool,
    pub max_threads: Option<usize>,
}

impl RunOptions {
    fn threads(&self) -> usize {
        if self.deterministic {
            1
        } else {
            self.max_threads.unwrap_or(0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub out_dir: PathBuf,
    pub summary: Summary,
    pub timing: Timing,
}

/// The pairing test function `φ` named by the configuration.
pub fn build_phi(cfg: &ScenarioConfig, grid: &SpatialGrid, profile: &GridField) -> Result<GridField, RunError> {
    let p = &cfg.diagnostics.phi;
    match p.kind {
        PhiKind::Gaussian => {
            let c: Vec<f64> = if p.center.is_empty() { vec![0.0; grid.dim()] } else { p.center.clone() };
            let s = p.width;
            Ok(GridField::from_real_fn(grid, |x| {
                (-x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (2.0 * s * s)).exp()
            })?)
        }
        PhiKind::Aligned => {
            let nl = cfg
                .nonlinearity
                .as_ref()
                .ok_or_else(|| RunError::Config("diagnostics.phi.kind: aligned needs a nonlinearity".into()))?;
            Ok(choose_test_function(profile, nl, cfg.diagnostics.trunc_level)?.phi)
        }
    }
}

/// The field `φ` is aligned with: `v₊` for synthetic runs, the data for evolved ones.
pub fn reference_profile(cfg: &ScenarioConfig, grid: &SpatialGrid) -> Result<GridField, RunError> {
    let spec = cfg.v_plus.as_ref().or(cfg.initial.as_ref()).ok_or_else(|| RunError::Config("v_plus: missing".into()))?;
    Ok(make_field(spec, grid)?)
}

/// Sample times of a synthetic run: log-spaced on `[1, τ_max]`.
pub fn synthetic_times(cfg: &ScenarioConfig) -> Vec<f64> {
    log_space(1.0, cfg.diagnostics.tau_max, cfg.diagnostics.tau_points)
}

/// `ν` of the localized part (velocity frame), or empty.
pub fn concentration_measure(cfg: &ScenarioConfig, grid: &SpatialGrid) -> Result<AtomicMeasure, RunError> {
    match cfg.localized.as_ref().filter(|l| !l.is_empty()) {
        Some(l) => {
            let pot = (!cfg.potential.is_zero()).then_some(&cfg.potential);
            Ok(nu_from_paths(l, pot, &cfg.diagnostics.probe_times, grid)?)
        }
        None => Ok(AtomicMeasure::empty(grid.dim(), MeasureFrame::Velocity)),
    }
}

fn snapshot_name(i: usize) -> String {
    format!("snap_{i:05}.nlsf")
}

fn wants_snapshot(policy: SnapshotPolicy, i: usize, count: usize) -> bool {
    match policy {
        SnapshotPolicy::None => false,
        SnapshotPolicy::Endpoints => i == 0 || i + 1 == count,
        SnapshotPolicy::All => true,
    }
}

fn opt(z: Option<Complex64>) -> [Option<f64>; 2] {
    [z.map(|v| v.re), z.map(|v| v.im)]
}

pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path, opts: &RunOptions) -> Result<RunResult, RunError> {
    cfg.validate()?;
    let start = Instant::now();
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let echo = out_dir.join(output::CONFIG_ECHO_FILE);
    std::fs::write(&echo, serialize_config(cfg)?).map_err(|e| io_err(&echo, e))?;
    // Stale outputs from an earlier run must not leak into the summary.
    for f in [V1_FILE, LIMIT_FILE, WINDOWS_FILE, SEQUENCE_FILE, HYPOTHESIS_FILE, L_TERM_FILE, DERIVATIVE_FILE, ABORT_FILE] {
        let p = out_dir.join(f);
        if p.exists() {
            std::fs::remove_file(&p).map_err(|e| io_err(&p, e))?;
        }
    }
    for entry in std::fs::read_dir(out_dir).map_err(|e| io_err(out_dir, e))? {
        let p = entry.map_err(|e| io_err(out_dir, e))?.path();
        if p.extension().is_some_and(|x| x == "nlsf") {
            std::fs::remove_file(&p).map_err(|e| io_err(&p, e))?;
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads())
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let threads = pool.current_num_threads();
    pool.install(|| if cfg.scenario.evolves() { run_evolved(cfg, out_dir) } else { run_synthetic(cfg, out_dir) })?;
    let summary = summarize(out_dir)?;
    write_json(&out_dir.join(output::SUMMARY_FILE), &summary)?;
    let timing = Timing { wall_seconds: start.elapsed().as_secs_f64(), threads };
    write_json(&out_dir.join(output::TIMING_FILE), &timing)?;
    Ok(RunResult { out_dir: out_dir.to_path_buf(), summary, timing })
}

fn run_evolved(cfg: &ScenarioConfig, out_dir: &Path) -> Result<(), RunError> {
    let grid = cfg.make_grid()?;
    let u0 = make_field(cfg.initial.as_ref().expect("validated"), &grid)?;
    let phi = build_phi(cfg, &grid, &u0)?;
    let solver = cfg.solver_config()?;
    let (traj, err) = evolve_partial(&u0, &solver, cfg.nonlinearity.as_ref(), &cfg.potential);
    if let Some(e) = &err {
        let p = out_dir.join(ABORT_FILE);
        std::fs::write(&p, format!("{e}\n")).map_err(|io| io_err(&p, io))?;
    }
    let ctx = SeriesContext {
        phi: &phi,
        op: cfg.nonlinearity.as_ref().map(|nl| NonlinearOperator::new(nl, &grid)).transpose()?,
        pot: Some(&cfg.potential),
        mollify_width: solver.mollify_width,
        lspec: None,
        v_plus: None,
    };
    let count = traj.snapshots.len();
    let rows: Vec<SeriesRow> = traj
        .snapshots
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            if wants_snapshot(cfg.output.snapshots, i, count) {
                write_snapshot(&out_dir.join(snapshot_name(i)), s)?;
            }
            Ok(ctx.row(s, s.time().unwrap_or(0.0))?)
        })
        .collect::<Result<_, RunError>>()?;
    output::write_series(&out_dir.join(output::SERIES_FILE), &rows)?;
    if cfg.diagnostics.derivative_check && count >= 3 {
        let times = traj.times();
        let states: Vec<&GridField> = traj.snapshots.iter().collect();
        let chk = nls_core::glassey::derivative_check(
            &times,
            &states,
            &phi,
            cfg.nonlinearity.as_ref(),
            &cfg.potential,
            solver.mollify_width,
        )?;
        let mut t = Table::new(&["t", "defect", "max_pairing"]);
        for (tk, d) in chk.times.iter().zip(&chk.defects) {
            t.push(vec![Some(*tk), Some(*d), Some(chk.max_pairing)]);
        }
        t.write(&out_dir.join(DERIVATIVE_FILE))?;
    }
    Ok(())
}

fn run_synthetic(cfg: &ScenarioConfig, out_dir: &Path) -> Result<(), RunError> {
    let grid = cfg.make_grid()?;
    let v_plus = make_field(cfg.v_plus.as_ref().expect("validated"), &grid)?;
    let phi = build_phi(cfg, &grid, &v_plus)?;
    let empty = LocalizedPathSpec::default();
    let lspec = cfg.localized.as_ref().unwrap_or(&empty);
    let mw = cfg.mollify_width()?;
    let nl = cfg.nonlinearity.as_ref();
    let ctx = SeriesContext {
        phi: &phi,
        op: nl.map(|s| NonlinearOperator::new(s, &grid)).transpose()?,
        pot: Some(&cfg.potential),
        mollify_width: mw,
        lspec: Some(lspec),
        v_plus: Some(&v_plus),
    };
    let times = synthetic_times(cfg);
    let count = times.len();
    let want_v1 = cfg.scenario == Scenario::LinearScatterDiag;
    let results: Vec<(SeriesRow, Option<Vec<Option<f64>>>)> = times
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let u = synth_state(lspec, &v_plus, t, &grid)?;
            if wants_snapshot(cfg.output.snapshots, i, count) {
                write_snapshot(&out_dir.join(snapshot_name(i)), &u)?;
            }
            let row = ctx.row(&u, t)?;
            let extra = if want_v1 {
                let w = free_propagate(&phi, t)?;
                let pt = potential_term(&u, &w, &cfg.potential, t, nl.map(|s| s.p), mw)?;
                let [re, im] = opt(Some(pt.v1_value));
                Some(vec![Some(t), re, im, pt.v1_bound])
            } else {
                None
            };
            Ok((row, extra))
        })
        .collect::<Result<_, RunError>>()?;
    let rows: Vec<SeriesRow> = results.iter().map(|r| r.0).collect();
    output::write_series(&out_dir.join(output::SERIES_FILE), &rows)?;
    if want_v1 {
        let mut t = Table::new(&["t", "v1_re", "v1_im", "v1_bound"]);
        for (_, e) in results {
            t.push(e.expect("computed for every row"));
        }
        t.write(&out_dir.join(V1_FILE))?;
    }
    match cfg.scenario {
        Scenario::NlsLongrange | Scenario::HartreeDiag => {
            let nl = nl.expect("validated");
            let nu = concentration_measure(cfg, &grid)?;
            let limit = main_term_limit(&v_plus, &phi, nl, (!nu.is_empty()).then_some(&nu))?;
            let mut t = Table::new(&["limit_re", "limit_im"]);
            t.push(vec![Some(limit.re), Some(limit.im)]);
            t.write(&out_dir.join(LIMIT_FILE))?;
        }
        Scenario::DeltaPotential => write_windows(cfg, &grid, lspec, &v_plus, &phi, mw, out_dir)?,
        Scenario::ConcentrationDemo => write_concentration(cfg, &grid, lspec, &v_plus, out_dir)?,
        _ => {}
    }
    Ok(())
}

fn write_windows(
    cfg: &ScenarioConfig,
    grid: &SpatialGrid,
    lspec: &LocalizedPathSpec,
    v_plus: &GridField,
    phi: &GridField,
    mw: f64,
    out_dir: &Path,
) -> Result<(), RunError> {
    let dg = &cfg.diagnostics;
    let m = (dg.window_len / dg.window_step).round().max(1.0) as usize;
    let rows: Vec<Vec<Option<f64>>> = dg
        .window_starts
        .par_iter()
        .map(|&t0| {
            let times: Vec<f64> = (0..=m).map(|k| t0 + dg.window_len * k as f64 / m as f64).collect();
            let us: Vec<GridField> =
                times.iter().map(|&t| synth_state(lspec, v_plus, t, grid)).collect::<Result<_, _>>()?;
            let ws: Vec<GridField> = times.iter().map(|&t| free_propagate(phi, t)).collect::<Result<_, _>>()?;
            let ur: Vec<&GridField> = us.iter().collect();
            let wr: Vec<&GridField> = ws.iter().collect();
            let win = v2_window(&times, &ur, &wr, &cfg.potential, mw, t0, dg.window_len)?;
            Ok(vec![Some(t0), Some(win.len), Some(win.integral), Some(win.bound)])
        })
        .collect::<Result<_, RunError>>()?;
    let mut t = Table::new(&["t0", "len", "integral", "bound"]);
    for r in rows {
        t.push(r);
    }
    t.write(&out_dir.join(WINDOWS_FILE))
}

/// Velocity-frame and tilde-frame test bumps centred on the heaviest atom.
fn fine_bump(grid: &SpatialGrid, center: &[f64]) -> Result<GridField, RunError> {
    Ok(GridField::from_real_fn(grid, |x| {
        (-x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 2.0).exp()
    })?)
}

fn write_concentration(
    cfg: &ScenarioConfig,
    grid: &SpatialGrid,
    lspec: &LocalizedPathSpec,
    v_plus: &GridField,
    out_dir: &Path,
) -> Result<(), RunError> {
    let nl = cfg.nonlinearity.as_ref().expect("validated");
    let dg = &cfg.diagnostics;
    let nu = concentration_measure(cfg, grid)?;
    let seq = test_sequence(v_plus, &nu, dg.sequence_levels, nl)?;
    let mut t = Table::new(&[
        "n", "epsilon", "psi_l1", "deficit", "main_re", "main_im", "nu_pairing", "nu_bound", "g_sup",
    ]);
    for s in &seq {
        t.push(vec![
            Some(s.n as f64),
            Some(s.cutoff.epsilon),
            Some(s.cutoff.achieved_l1),
            Some(s.cutoff.deficit),
            Some(s.main.re),
            Some(s.main.im),
            Some(s.nu_pairing),
            Some(s.nu_bound),
            Some(s.g_sup),
        ]);
    }
    t.write(&out_dir.join(SEQUENCE_FILE))?;

    let d = grid.dim();
    let fine = SpatialGrid::new(d, dg.fine_n, dg.fine_length)?;
    let heaviest = nu
        .atoms
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|a| a.0)
        .ok_or_else(|| RunError::Config("localized: concentration measure is empty".into()))?;
    let phi_v = fine_bump(&fine, &heaviest[..d])?;
    let hyp = hypothesis_check(lspec, &cfg.potential, &nu, &phi_v, &dg.hypothesis_times)?;
    let mut t = Table::new(&["t", "value", "slack", "nu_pairing"]);
    for i in 0..hyp.times.len() {
        t.push(vec![Some(hyp.times[i]), Some(hyp.values[i]), Some(hyp.slack[i]), Some(hyp.nu_pairing)]);
    }
    t.write(&out_dir.join(HYPOTHESIS_FILE))?;

    let tilde: Vec<f64> = heaviest[..d].iter().map(|v| 0.5 * v).collect();
    let phi_t = fine_bump(&fine, &tilde)?;
    let chain = l_term_bound_check(lspec, &nu, &phi_t, &dg.hypothesis_times, nl)?;
    let mut t = Table::new(&["t", "cubic", "density", "atomic"]);
    for c in chain {
        t.push(vec![Some(c.t), Some(c.cubic), Some(c.density), Some(c.atomic)]);
    }
    t.write(&out_dir.join(L_TERM_FILE))
}
