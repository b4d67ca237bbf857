//! Rank-statistics report for one or more result tables.

use std::fmt::Write as _;

use owadapt::stats::{
    holm_with, summarize_with, HolmResult, RankSummary, ResultTable, Sidedness, TieCorrection,
};
use serde::{Deserialize, Serialize};

use crate::error::CliResult;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareOptions {
    pub beta: f64,
    pub sides: Sidedness,
    pub ties: TieCorrection,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            beta: 0.05,
            sides: Sidedness::TwoSided,
            ties: TieCorrection::Corrected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    pub title: String,
    pub methods: Vec<String>,
    pub settings: usize,
    pub summary: RankSummary,
    pub holm: HolmResult,
    pub sides: Sidedness,
}

pub fn compare_table(title: &str, table: &ResultTable, opts: CompareOptions) -> CliResult<MetricBlock> {
    Ok(MetricBlock {
        title: title.to_string(),
        methods: table.methods.clone(),
        settings: table.num_settings(),
        summary: summarize_with(table, opts.ties),
        holm: holm_with(table, opts.beta, opts.sides)?,
        sides: opts.sides,
    })
}

fn p_fmt(p: f64) -> String {
    if p < 1e-4 {
        format!("{p:.3e}")
    } else {
        format!("{p:.4}")
    }
}

/// Plain-text layout: one row per method ordered by average rank, Holm
/// columns next to each non-control method, test statistics underneath.
pub fn render(blocks: &[MetricBlock]) -> String {
    let mut out = String::new();
    for b in blocks {
        let s = &b.summary;
        let k = b.methods.len();
        let _ = writeln!(out, "{} as the performance measure (n = {}, K = {k})", b.title, b.settings);
        let _ = writeln!(
            out,
            "  {:<12} {:>8} {:>10} {:>10} {:>10} {:>9}",
            "Method", "A. Rank", "A. Metric", "p-value", "beta/(j-1)", "Outcome"
        );
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &c| s.avg_rank[a].total_cmp(&s.avg_rank[c]));
        for j in order {
            let name = &b.methods[j];
            match b.holm.comparisons.iter().find(|c| &c.method == name) {
                Some(c) => {
                    let _ = writeln!(
                        out,
                        "  {:<12} {:>8.3} {:>10.3} {:>10} {:>10.4} {:>9}",
                        name,
                        s.avg_rank[j],
                        s.avg_metric[j],
                        p_fmt(c.p_value),
                        c.threshold,
                        c.outcome.to_string()
                    );
                }
                None => {
                    let _ = writeln!(
                        out,
                        "  {:<12} {:>8.3} {:>10.3} {:>10} {:>10} {:>9}",
                        name, s.avg_rank[j], s.avg_metric[j], "-", "-", "-"
                    );
                }
            }
        }
        let ties = match s.tie_correction {
            TieCorrection::Corrected => "tie-corrected",
            TieCorrection::Uncorrected => "no tie correction",
        };
        let f = if s.degenerate {
            "inf (identical rankings in every setting)".to_string()
        } else {
            format!("{:.5}", s.iman_davenport_f)
        };
        let _ = writeln!(
            out,
            "  Friedman statistic, Iman-Davenport F({}, {}) = {f}, p = {}  [{ties}]",
            k - 1,
            (k - 1) * (b.settings - 1),
            p_fmt(s.friedman_pvalue)
        );
        let _ = writeln!(
            out,
            "  Friedman chi-squared({}) = {:.5}, p = {}",
            k - 1,
            s.friedman_chi2,
            p_fmt(s.friedman_chi2_pvalue)
        );
        let sides = match b.sides {
            Sidedness::TwoSided => "two-sided",
            Sidedness::OneSided => "one-sided",
        };
        let _ = writeln!(
            out,
            "  Holm vs {} at beta = {} ({sides} Nemenyi z)",
            b.holm.control, b.holm.beta
        );
        for c in &b.holm.comparisons {
            let _ = writeln!(out, "    {:<12} z = {:.4}", c.method, c.z);
        }
        out.push('\n');
    }
    out
}
