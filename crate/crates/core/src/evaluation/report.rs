use std::fmt::Write;

use super::experiment::{FoldReport, RunReport};
use crate::datamodel::BinaryLabel;
use crate::error::{PalsyError, Result};

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

/// Results table with one row per model or fusion, followed by per-fold
/// F1 scores and the pooled confusion-matrix metrics.
pub fn render_markdown(report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Palsy detection results\n");
    let _ = writeln!(s, "- config hash: `{}`", report.config_hash);
    let _ = writeln!(s, "- seed: {}", report.seed);
    let done = report.folds.iter().filter(|f| f.complete).count();
    let _ = writeln!(s, "- folds: {done}/{} complete\n", report.folds.len());

    match &report.averages {
        Some(avg) => {
            let _ = writeln!(s, "| Data Modality | Model | Average F1 | Average Precision | Average Recall |");
            let _ = writeln!(s, "|---|---|---|---|---|");
            for e in &report.entries {
                let a = &avg[&e.name];
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} |",
                    e.modality,
                    e.description,
                    pct(a.f1),
                    pct(a.precision),
                    pct(a.recall)
                );
            }
        }
        None => {
            let _ = writeln!(s, "Averages are withheld because some folds did not complete:\n");
            for f in report.folds.iter().filter(|f| !f.complete) {
                let _ = writeln!(
                    s,
                    "- fold {} ({}): {}",
                    f.fold,
                    f.held_out,
                    f.error.as_deref().unwrap_or("unknown error")
                );
            }
        }
    }

    if let Some(pooled) = &report.pooled {
        let _ = writeln!(s, "\n## Pooled over folds\n");
        let _ = writeln!(s, "Computed from the summed confusion matrix; not the fold average.\n");
        let _ = writeln!(s, "| Model | TP | FP | FN | TN | F1 | Precision | Recall |");
        let _ = writeln!(s, "|---|---|---|---|---|---|---|---|");
        for e in &report.entries {
            let m = &pooled[&e.name];
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} | {} |",
                e.name,
                m.tp,
                m.fp,
                m.fn_,
                m.tn,
                pct(m.f1),
                pct(m.precision),
                pct(m.recall)
            );
        }
    }

    let _ = writeln!(s, "\n## Per-fold F1\n");
    let mut header = String::from("| Fold | Held out |");
    let mut rule = String::from("|---|---|");
    for e in &report.entries {
        let _ = write!(header, " {} |", e.name);
        rule.push_str("---|");
    }
    let _ = writeln!(s, "{header}\n{rule}");
    for f in &report.folds {
        let _ = write!(s, "| {} | {} |", f.fold, f.held_out);
        for e in &report.entries {
            match f.metrics.get(&e.name) {
                Some(m) => {
                    let _ = write!(s, " {} |", pct(m.f1));
                }
                None => s.push_str(" - |"),
            }
        }
        s.push('\n');
    }
    s
}

/// `subject_id,frame_id,probability,label` for one model's test predictions.
pub fn render_predictions_csv(fold: &FoldReport, name: &str) -> Result<Vec<u8>> {
    let probs = fold
        .predictions
        .get(name)
        .ok_or_else(|| PalsyError::Invalid(format!("fold {} has no predictions for `{name}`", fold.fold)))?;
    if probs.len() != fold.test.len() {
        return Err(PalsyError::Invalid(format!("fold {}: predictions do not match the test set", fold.fold)));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| PalsyError::Invalid(format!("csv: {e}"));
    w.write_record(["subject_id", "frame_id", "probability", "label"]).map_err(csv_err)?;
    for (r, p) in fold.test.iter().zip(probs) {
        let label = match BinaryLabel::from_probability(*p) {
            BinaryLabel::Palsy => "1",
            BinaryLabel::NoPalsy => "0",
        };
        w.write_record([r.subject_id.as_str(), r.frame_id.as_str(), &p.to_string(), label]).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| PalsyError::Invalid(format!("csv: {e}")))
}
