use std::fmt::Write;

use serde::Serialize;

use super::experiment::ExperimentReport;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub predictor: String,
    pub params: usize,
    pub top1: f64,
}

/// One row per predictor, smallest model first.
pub fn tradeoff_table(report: &ExperimentReport) -> Vec<TradeoffRow> {
    let mut rows: Vec<TradeoffRow> = report
        .predictors
        .iter()
        .map(|(name, p)| TradeoffRow {
            predictor: name.clone(),
            params: p.params,
            top1: p.top1,
        })
        .collect();
    rows.sort_by(|a, b| a.params.cmp(&b.params).then_with(|| a.predictor.cmp(&b.predictor)));
    rows
}

pub fn tradeoff_csv(rows: &[TradeoffRow]) -> String {
    let mut out = String::from("predictor,params,top1\n");
    for r in rows {
        writeln!(out, "{},{},{:.4}", r.predictor, r.params, r.top1).unwrap();
    }
    out
}

fn sorted(report: &ExperimentReport) -> Vec<(&String, &super::experiment::PredictorReport)> {
    let mut rows: Vec<_> = report.predictors.iter().collect();
    rows.sort_by(|a, b| a.1.params.cmp(&b.1.params).then_with(|| a.0.cmp(b.0)));
    rows
}

/// Accuracy summary as CSV, smallest model first.
pub fn report_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("predictor,params,top1,top2,top3\n");
    for (name, p) in sorted(report) {
        writeln!(out, "{name},{},{:.4},{:.4},{:.4}", p.params, p.top1, p.top2, p.top3).unwrap();
    }
    out
}

/// Accuracy summary as an aligned text table, smallest model first.
pub fn report_table(report: &ExperimentReport) -> String {
    let rows = sorted(report);
    let width = rows
        .iter()
        .map(|(n, _)| n.len())
        .chain(std::iter::once("predictor".len()))
        .max()
        .unwrap_or(9);
    let mut out = String::new();
    writeln!(out, "{:<width$} {:>9} {:>7} {:>7} {:>7}", "predictor", "params", "top1", "top2", "top3").unwrap();
    for (name, p) in rows {
        writeln!(
            out,
            "{name:<width$} {:>9} {:>7.2} {:>7.2} {:>7.2}",
            p.params, p.top1, p.top2, p.top3
        )
        .unwrap();
    }
    out
}
