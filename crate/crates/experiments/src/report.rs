//! Markdown roll-up of finished run directories.

use std::path::{Path, PathBuf};

use nls_core::glassey::GrowthModel;

use crate::output::{read_json, SUMMARY_FILE};
use crate::summary::Summary;
use crate::RunError;

fn model_cell(model: GrowthModel, exponent: f64) -> String {
    match model {
        GrowthModel::PowerLaw => format!("t^{exponent:.3}"),
        GrowthModel::Logarithmic => "log t".into(),
        GrowthModel::Constant => "bounded".into(),
    }
}

fn row(s: &Summary) -> String {
    let na = || "n/a".to_string();
    let p = s.p.map_or_else(na, |p| format!("{p}"));
    let predicted = s.prediction.as_ref().map_or_else(na, |x| model_cell(x.model, x.exponent));
    let fitted = s.fit.as_ref().map_or_else(na, |f| model_cell(f.model, f.exponent));
    let mut inv = format!("{}/{}", s.pass_count(), s.invariants.len());
    if s.aborted.is_some() {
        inv.push_str(" (aborted)");
    }
    format!("| {} | {} | {} | {} | {} | {} |", s.scenario.name(), p, s.dim, predicted, fitted, inv)
}

/// Reads `summary.json` from each directory and renders one table row per run,
/// sorted by scenario name and then by directory. Output depends only on the inputs.
pub fn emit_report(dirs: &[PathBuf]) -> Result<String, RunError> {
    let mut entries: Vec<(String, &Path, Summary)> = dirs
        .iter()
        .map(|d| {
            let s: Summary = read_json(&d.join(SUMMARY_FILE))?;
            Ok((s.scenario.name().to_string(), d.as_path(), s))
        })
        .collect::<Result<_, RunError>>()?;
    entries.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    let mut out = String::from(
        "| scenario | p | d | predicted | fitted | invariants passed |\n|---|---|---|---|---|---|\n",
    );
    for (_, _, s) in &entries {
        out.push_str(&row(s));
        out.push('\n');
    }
    Ok(out)
}
