//! CSV renderings of an [`ExperimentReport`]. Values not defined for a row are left empty.

use std::io::Write;

use crate::error::Result;
use crate::simulate::experiment::{CellSummary, ExperimentReport, Weighting};

fn num(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:?}"),
        _ => String::new(),
    }
}

fn level_column(q: f64) -> String {
    format!("cover{}", (q * 100.0).round() as i64)
}

/// Header line of `report.csv` for the given confidence levels.
pub fn report_header(levels: &[f64]) -> Vec<String> {
    let mut h: Vec<String> = ["model", "method", "weighting", "fraction", "n", "trace_emp_mse", "amse_ratio", "msehat_ratio"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(levels.iter().map(|&q| level_column(q)));
    h.push("equal_ipw_ratio".into());
    h.push("flagged".into());
    h
}

fn cell_rows(report: &ExperimentReport, cell: &CellSummary) -> Vec<Vec<String>> {
    let levels = &report.config.confidence_levels;
    let mut rows = Vec::new();
    for w in &report.config.weightings {
        let mut row = vec![
            report.model.name().to_string(),
            cell.method.label().to_string(),
            w.label().to_string(),
            format!("{:?}", cell.fraction),
            cell.n.to_string(),
        ];
        match w {
            Weighting::Ipw => {
                let s = cell.ipw.as_ref();
                row.push(num(s.map(|s| s.trace_emp_mse)));
                row.push(num(s.map(|s| s.amse_ratio)));
                row.push(num(s.map(|s| s.msehat_ratio)));
                for (li, _) in levels.iter().enumerate() {
                    row.push(num(s.map(|s| s.coverage[li].1)));
                }
            }
            Weighting::Equal => {
                row.push(num(cell.equal.as_ref().map(|s| s.trace_emp_mse)));
                row.extend(std::iter::repeat_n(String::new(), 2 + levels.len()));
            }
        }
        row.push(num(cell.equal_ipw_ratio));
        row.push(cell.flags.total().to_string());
        rows.push(row);
    }
    rows
}

/// One row per (method, fraction, weighting).
pub fn write_report_csv<W: Write>(report: &ExperimentReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(report_header(&report.config.confidence_levels))?;
    for cell in &report.cells {
        for row in cell_rows(report, cell) {
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `model, method, slope, r_squared`.
pub fn write_slopes_csv<W: Write>(report: &ExperimentReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "method", "slope", "r_squared"])?;
    for (method, fit) in &report.slopes {
        w.write_record([
            report.model.name().to_string(),
            method.label().to_string(),
            num(Some(fit.slope)),
            num(Some(fit.r_squared)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-fraction `log n` and `log trace(empMSE)` for plotting.
pub fn write_points_csv<W: Write>(report: &ExperimentReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["model", "method", "weighting", "n", "log_n", "log_trace_emp_mse"])?;
    for cell in &report.cells {
        let traces = [
            (Weighting::Ipw, cell.ipw.as_ref().map(|s| s.trace_emp_mse)),
            (Weighting::Equal, cell.equal.as_ref().map(|s| s.trace_emp_mse)),
        ];
        for (weighting, trace) in traces {
            let Some(t) = trace else { continue };
            w.write_record([
                report.model.name().to_string(),
                cell.method.label().to_string(),
                weighting.label().to_string(),
                cell.n.to_string(),
                num(Some((cell.n as f64).ln())),
                num(Some(t.ln())),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
