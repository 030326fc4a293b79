//! Report rendering: machine-readable CSV and aligned plain-text tables.
//!
//! Output is a pure function of the reports, byte for byte. Synthetic-grid
//! reports are grouped by `(s, σ, ρ)` with rows indexed by n and columns by
//! p, mirroring the layout the benchmark tables use.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::simulate::{ImprovementReport, ReplicationOutcome};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Text,
}

impl OutputFormat {
    pub fn parse(raw: &str) -> Option<OutputFormat> {
        match raw {
            "csv" => Some(OutputFormat::Csv),
            "text" => Some(OutputFormat::Text),
            _ => None,
        }
    }
}

pub const CSV_HEADER: &str = "label,metric,n,p,s_true,rho,sigma,replications,failures,\
mean_pred_mse_lasso,sd_pred_mse_lasso,mean_pred_mse_new,sd_pred_mse_new,pred_improvement_pct,\
mean_est_mse_lasso,sd_est_mse_lasso,mean_est_mse_new,sd_est_mse_new,est_improvement_pct,\
degenerate_pred,degenerate_est";

fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::from("NA")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => fmt_f64(x),
        None => String::from("NA"),
    }
}

/// One CSV row per report; header always present.
pub fn render_csv(reports: &[ImprovementReport]) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in reports {
        let (n, p, s, rho, sigma) = match r.cell {
            Some(c) => (
                c.n.to_string(),
                c.p.to_string(),
                c.s_true.to_string(),
                fmt_f64(c.rho),
                fmt_f64(c.sigma),
            ),
            None => (
                String::from("NA"),
                String::from("NA"),
                String::from("NA"),
                String::from("NA"),
                String::from("NA"),
            ),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.label.replace(',', ";"),
            r.metric.as_str(),
            n,
            p,
            s,
            rho,
            sigma,
            r.per_replication.len(),
            r.failures,
            fmt_f64(r.mean_pred_mse_lasso),
            fmt_f64(r.sd_pred_mse_lasso),
            fmt_f64(r.mean_pred_mse_new),
            fmt_f64(r.sd_pred_mse_new),
            fmt_opt(r.pred_improvement_pct),
            fmt_opt(r.mean_est_mse_lasso),
            fmt_opt(r.sd_est_mse_lasso),
            fmt_opt(r.mean_est_mse_new),
            fmt_opt(r.sd_est_mse_new),
            fmt_opt(r.est_improvement_pct),
            r.degenerate_pred,
            r.degenerate_est,
        );
    }
    out
}

fn fmt_pct(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.1}"),
        _ => String::from("NA"),
    }
}

fn improvement_table(
    out: &mut String,
    title: &str,
    reports: &[ImprovementReport],
    pick: impl Fn(&ImprovementReport) -> Option<f64>,
) {
    let cells: Vec<&ImprovementReport> = reports.iter().filter(|r| r.cell.is_some()).collect();
    if cells.is_empty() {
        return;
    }
    // group by (s, sigma, rho); keys ordered and deduplicated
    let mut groups: BTreeSet<(usize, String, String)> = BTreeSet::new();
    for r in &cells {
        let c = r.cell.unwrap();
        groups.insert((c.s_true, fmt_f64(c.sigma), fmt_f64(c.rho)));
    }
    for (s, sigma, rho) in groups {
        let members: Vec<&&ImprovementReport> = cells
            .iter()
            .filter(|r| {
                let c = r.cell.unwrap();
                c.s_true == s && fmt_f64(c.sigma) == sigma && fmt_f64(c.rho) == rho
            })
            .collect();
        let ns: BTreeSet<usize> = members.iter().map(|r| r.cell.unwrap().n).collect();
        let ps: BTreeSet<usize> = members.iter().map(|r| r.cell.unwrap().p).collect();

        let _ = writeln!(out, "{title} (s = {s}, sigma = {sigma}, rho = {rho})");
        let mut header = format!("{:>8}", "n \\ p");
        for p in &ps {
            let _ = write!(header, " {:>10}", p);
        }
        let _ = writeln!(out, "{header}");
        for n in &ns {
            let mut row = format!("{:>8}", n);
            for p in &ps {
                let value = members
                    .iter()
                    .find(|r| {
                        let c = r.cell.unwrap();
                        c.n == *n && c.p == *p
                    })
                    .map(|r| fmt_pct(pick(r)))
                    .unwrap_or_else(|| String::from("."));
                let _ = write!(row, " {:>10}", value);
            }
            let _ = writeln!(out, "{row}");
        }
        out.push('\n');
    }
}

/// Aligned text rendering: improvement tables for grid reports, a summary
/// block for protocol reports.
pub fn render_text(reports: &[ImprovementReport]) -> String {
    let mut out = String::new();
    improvement_table(&mut out, "Prediction improvement (%)", reports, |r| {
        r.pred_improvement_pct
    });
    if reports
        .iter()
        .any(|r| r.cell.is_some() && r.est_improvement_pct.is_some())
    {
        improvement_table(&mut out, "Estimation improvement (%)", reports, |r| {
            r.est_improvement_pct
        });
    }
    for r in reports {
        let _ = writeln!(out, "{} [{}]", r.label, r.metric.as_str());
        let _ = writeln!(
            out,
            "  replications: {} ({} failed)",
            r.per_replication.len(),
            r.failures
        );
        let _ = writeln!(
            out,
            "  lasso       pred MSE {:>12.6} (sd {:.6})",
            r.mean_pred_mse_lasso, r.sd_pred_mse_lasso
        );
        let _ = writeln!(
            out,
            "  lasso-ridge pred MSE {:>12.6} (sd {:.6})",
            r.mean_pred_mse_new, r.sd_pred_mse_new
        );
        let _ = writeln!(
            out,
            "  prediction improvement: {}%{}",
            fmt_pct(r.pred_improvement_pct),
            if r.degenerate_pred {
                " (degenerate denominator)"
            } else {
                ""
            }
        );
        if let (Some(ml), Some(mn)) = (r.mean_est_mse_lasso, r.mean_est_mse_new) {
            let _ = writeln!(out, "  lasso       est MSE  {ml:>12.6}");
            let _ = writeln!(out, "  lasso-ridge est MSE  {mn:>12.6}");
            let _ = writeln!(
                out,
                "  estimation improvement: {}%{}",
                fmt_pct(r.est_improvement_pct),
                if r.degenerate_est {
                    " (degenerate denominator)"
                } else {
                    ""
                }
            );
        }
        let non_converged = r
            .per_replication
            .iter()
            .filter_map(|rec| match &rec.outcome {
                ReplicationOutcome::Failed(msg) => Some(format!("    rep {}: {msg}", rec.replication)),
                _ => None,
            })
            .collect::<Vec<_>>();
        if !non_converged.is_empty() {
            let _ = writeln!(out, "  failed replications:");
            for line in non_converged {
                let _ = writeln!(out, "{line}");
            }
        }
        out.push('\n');
    }
    out
}

/// Renders reports in the requested format.
pub fn emit_report(reports: &[ImprovementReport], format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => render_csv(reports),
        OutputFormat::Text => render_text(reports),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{CellKey, PredictionMetric};

    fn sample_report(n: usize, p: usize) -> ImprovementReport {
        ImprovementReport {
            label: format!("n={n} p={p}"),
            metric: PredictionMetric::InSampleSignal,
            cell: Some(CellKey {
                n,
                p,
                s_true: 5,
                rho: 0.0,
                sigma: 0.5,
            }),
            mean_pred_mse_lasso: 2.0,
            mean_pred_mse_new: 1.0,
            sd_pred_mse_lasso: 0.1,
            sd_pred_mse_new: 0.05,
            pred_improvement_pct: Some(100.0),
            mean_est_mse_lasso: Some(3.0),
            mean_est_mse_new: Some(2.0),
            sd_est_mse_lasso: Some(0.2),
            sd_est_mse_new: Some(0.1),
            est_improvement_pct: Some(50.0),
            degenerate_pred: false,
            degenerate_est: false,
            per_replication: Vec::new(),
            failures: 0,
        }
    }

    #[test]
    fn empty_reports_render_header_only() {
        let csv = render_csv(&[]);
        assert_eq!(csv, format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn one_report_renders_one_data_row() {
        let csv = render_csv(&[sample_report(100, 200)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].contains("100,200,5,0,0.5"));
        assert!(lines[1].contains(",100,")); // improvement pct
    }

    #[test]
    fn rendering_is_deterministic() {
        let reports = vec![sample_report(100, 100), sample_report(100, 200)];
        assert_eq!(render_csv(&reports), render_csv(&reports));
        assert_eq!(render_text(&reports), render_text(&reports));
    }

    #[test]
    fn text_table_groups_by_cell() {
        let reports = vec![
            sample_report(100, 100),
            sample_report(100, 200),
            sample_report(200, 100),
            sample_report(200, 200),
        ];
        let text = render_text(&reports);
        assert!(text.contains("Prediction improvement (%) (s = 5, sigma = 0.5, rho = 0)"));
        assert!(text.contains("n \\ p"));
        // two row labels, two column labels
        assert!(text.contains("100"));
        assert!(text.contains("200"));
    }

    #[test]
    fn degenerate_improvement_prints_na() {
        let mut r = sample_report(50, 100);
        r.pred_improvement_pct = None;
        r.degenerate_pred = true;
        let csv = render_csv(&[r.clone()]);
        assert!(csv.lines().nth(1).unwrap().contains(",NA,"));
        let text = render_text(&[r]);
        assert!(text.contains("degenerate denominator"));
    }
}
