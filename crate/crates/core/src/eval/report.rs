//! Markdown renderings of evaluation results. Metrics are shown ×100 with one
//! decimal.

use std::fmt::Write;

use super::ablation::{
    AblationReport, ComponentRow, ReferenceRow, ALPHA_REFERENCE, COMPONENT_REFERENCE,
};
use super::facts::FactReport;
use super::mc::McReport;

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

fn flag(f: Option<bool>) -> &'static str {
    match f {
        None => "-",
        Some(true) => "yes",
        Some(false) => "no",
    }
}

fn metric_cells(r: &McReport) -> String {
    format!(
        "{} | {} | {} | {}",
        pct(r.mc1),
        pct(r.mc2),
        pct(r.mc3),
        pct(r.avg)
    )
}

fn reference_cells(r: &ReferenceRow) -> String {
    format!("{:.1} | {:.1} | {:.1} | {:.1}", r.mc1, r.mc2, r.mc3, r.avg)
}

pub fn mc_markdown(title: &str, r: &McReport) -> String {
    format!(
        "# {title}\n\n| MC1 | MC2 | MC3 | Avg | Items |\n|---|---|---|---|---|\n| {} | {} |\n",
        metric_cells(r),
        r.n_items
    )
}

pub fn facts_markdown(title: &str, r: &FactReport) -> String {
    let precision = r.precision.map_or("n/a".to_string(), pct);
    format!(
        "# {title}\n\n| % Response | # Facts | Precision | Probes |\n|---|---|---|---|\n| {} | {:.1} | {} | {} |\n",
        pct(r.response_ratio),
        r.facts_per_response,
        precision,
        r.n_probes
    )
}

fn component_table(out: &mut String, rows: &[ComponentRow], with_reference: bool) {
    out.push_str("| Method | Loss Modify | Mask Adap | Selective | MC1 | MC2 | MC3 | Avg |");
    if with_reference {
        out.push_str(" Ref MC1 | Ref MC2 | Ref MC3 | Ref Avg |");
    }
    out.push_str("\n|---|---|---|---|---|---|---|---|");
    if with_reference {
        out.push_str("---|---|---|---|");
    }
    out.push('\n');
    for (i, r) in rows.iter().enumerate() {
        let _ = write!(
            out,
            "| {} | {} | {} | {} | {} |",
            r.method,
            flag(r.loss_modify),
            flag(r.mask_adapt),
            flag(r.selective),
            metric_cells(&r.report)
        );
        if with_reference {
            if let Some(reference) = COMPONENT_REFERENCE.get(i) {
                let _ = write!(out, " {} |", reference_cells(reference));
            }
        }
        out.push('\n');
    }
}

pub fn ablation_markdown(report: &AblationReport) -> String {
    let mut out = String::from("# Ablation\n\n");
    let seeds: Vec<String> = report.seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(out, "Seeds: {}\n", seeds.join(", "));
    let ref_note = "Ref columns: published 7B-scale reference values, for orientation only.\n\n";
    if let Some(c) = &report.components {
        out.push_str("## Components (median over seeds)\n\n");
        out.push_str(ref_note);
        component_table(&mut out, &c.median, true);
        let best: Vec<String> = c.full_best_seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(
            out,
            "\nAll-components row best DHI variant in {} of {} seeds ({}).\n",
            c.full_best_seeds.len(),
            c.per_seed.len(),
            if best.is_empty() {
                "none".to_string()
            } else {
                best.join(", ")
            }
        );
        for s in &c.per_seed {
            let _ = writeln!(
                out,
                "### Seed {} (memorization {})\n",
                s.seed,
                pct(s.memorization)
            );
            component_table(&mut out, &s.rows, false);
            out.push('\n');
        }
    }
    if let Some(a) = &report.alpha {
        out.push_str("## Induction strength (median over seeds)\n\n");
        out.push_str(ref_note);
        out.push_str(
            "| Reading | α | w | MC1 | MC2 | MC3 | Avg | Ref MC1 | Ref MC2 | Ref MC3 | Ref Avg |\n",
        );
        out.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
        for m in &a.median {
            let metrics = m
                .report
                .as_ref()
                .map_or("diverged | - | - | -".to_string(), metric_cells);
            let reference = ALPHA_REFERENCE
                .iter()
                .find(|r| r.label.parse::<f64>().ok() == Some(m.alpha))
                .map_or("- | - | - | -".to_string(), reference_cells);
            let _ = writeln!(
                out,
                "| {} | {:.2} | {} | {} | {} |",
                m.reading,
                m.alpha,
                m.reading.weight(m.alpha),
                metrics,
                reference
            );
        }
        out.push_str("\n### Per seed\n\n| Seed | Reading | α | MC1 | MC2 | MC3 | Avg |\n|---|---|---|---|---|---|---|\n");
        for c in &a.cells {
            let metrics = match (&c.report, &c.error) {
                (Some(r), _) => metric_cells(r),
                (None, e) => format!("{} | - | - | -", e.as_deref().unwrap_or("failed")),
            };
            let _ = writeln!(
                out,
                "| {} | {} | {:.2} | {} |",
                c.seed, c.reading, c.alpha, metrics
            );
        }
    }
    out
}
