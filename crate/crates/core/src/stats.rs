//! Rank-based comparison of several methods over many settings.
//!
//! Rows of a [`ResultTable`] are settings (dataset x classifier), columns are
//! methods. Within each row the best method gets rank 1; ties share the mean
//! of the positions they occupy. From the average ranks `R_j`:
//!
//! * Friedman: `chi2 = 12n / (K(K+1)) * sum_j (R_j - (K+1)/2)^2`, divided by
//!   `1 - sum(t^3 - t) / (n (K^3 - K))` when tie correction is on.
//! * Iman-Davenport: `F = (n-1) chi2 / (n(K-1) - chi2)` with `(K-1, (K-1)(n-1))`
//!   degrees of freedom.
//! * Post hoc: `z_j = (R_j - R_best) / sqrt(K(K+1) / (6n))` against the best
//!   ranked method, then Holm's step-down at level `beta`.
//!
//! P-values use the regularized incomplete beta/gamma functions and `erfc`
//! from `statrs`.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub methods: Vec<String>,
    pub settings: Vec<String>,
    /// `values[setting][method]`
    pub values: Vec<Vec<f64>>,
    pub higher_is_better: bool,
}

impl ResultTable {
    pub fn new(
        methods: Vec<String>,
        settings: Vec<String>,
        values: Vec<Vec<f64>>,
        higher_is_better: bool,
    ) -> Result<Self> {
        if methods.len() < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 methods, got {}",
                methods.len()
            )));
        }
        if settings.len() < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 settings, got {}",
                settings.len()
            )));
        }
        if values.len() != settings.len() {
            return Err(Error::Dimension(format!(
                "{} settings but {} value rows",
                settings.len(),
                values.len()
            )));
        }
        for (i, row) in values.iter().enumerate() {
            if row.len() != methods.len() {
                return Err(Error::Dimension(format!(
                    "setting `{}` has {} values for {} methods",
                    settings[i],
                    row.len(),
                    methods.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "setting `{}` has a missing or non-finite value",
                    settings[i]
                )));
            }
        }
        Ok(Self {
            methods,
            settings,
            values,
            higher_is_better,
        })
    }

    pub fn num_methods(&self) -> usize {
        self.methods.len()
    }

    pub fn num_settings(&self) -> usize {
        self.settings.len()
    }

    /// Reads the wide CSV layout: `setting,<method 1>,..,<method K>` header,
    /// then one row per setting.
    pub fn read_csv<R: Read>(input: R, higher_is_better: bool) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
        let header = reader.headers()?.clone();
        if header.len() < 3 {
            return Err(Error::Parse {
                row: 1,
                message: "header needs a setting column and at least two methods".into(),
            });
        }
        let methods: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
        let mut settings = Vec::new();
        let mut values = Vec::new();
        for record in reader.records() {
            let record = record?;
            let row = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != header.len() {
                return Err(Error::Parse {
                    row,
                    message: format!("expected {} fields, found {}", header.len(), record.len()),
                });
            }
            settings.push(record[0].trim().to_string());
            values.push(
                record
                    .iter()
                    .skip(1)
                    .map(|f| {
                        f.trim().parse::<f64>().map_err(|_| Error::Parse {
                            row,
                            message: format!("non-numeric value `{f}`"),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Self::new(methods, settings, values, higher_is_better)
    }

    pub fn load_csv(path: impl AsRef<Path>, higher_is_better: bool) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, higher_is_better)
    }

    /// Pivots `(setting, method, value)` records. Methods and settings keep
    /// first-appearance order; every pair must occur exactly once.
    pub fn from_long<I, S, M>(records: I, higher_is_better: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (S, M, f64)>,
        S: Into<String>,
        M: Into<String>,
    {
        let mut methods: Vec<String> = Vec::new();
        let mut settings: Vec<String> = Vec::new();
        let mut cells: Vec<(usize, usize, f64)> = Vec::new();
        for (s, m, v) in records {
            let (s, m) = (s.into(), m.into());
            let si = position_or_push(&mut settings, s);
            let mi = position_or_push(&mut methods, m);
            cells.push((si, mi, v));
        }
        let mut values = vec![vec![f64::NAN; methods.len()]; settings.len()];
        for (si, mi, v) in cells {
            if !values[si][mi].is_nan() {
                return Err(Error::Validation(format!(
                    "duplicate entry for setting `{}`, method `{}`",
                    settings[si], methods[mi]
                )));
            }
            values[si][mi] = v;
        }
        Self::new(methods, settings, values, higher_is_better)
    }

    pub fn without_setting(&self, index: usize) -> Result<Self> {
        let mut t = self.clone();
        t.settings.remove(index);
        t.values.remove(index);
        Self::new(t.methods, t.settings, t.values, t.higher_is_better)
    }
}

fn position_or_push(list: &mut Vec<String>, item: String) -> usize {
    match list.iter().position(|x| *x == item) {
        Some(i) => i,
        None => {
            list.push(item);
            list.len() - 1
        }
    }
}

/// Mid-ranks of one row; rank 1 is the best value.
pub fn rank_row(row: &[f64], higher_is_better: bool) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    if higher_is_better {
        idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
    } else {
        idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
    }
    let mut ranks = vec![0.0; row.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && row[idx[end]] == row[idx[start]] {
            end += 1;
        }
        // positions start+1 ..= end share their mean
        let mid = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = mid;
        }
        start = end;
    }
    ranks
}

pub fn rank_rows(table: &ResultTable) -> Vec<Vec<f64>> {
    table
        .values
        .iter()
        .map(|row| rank_row(row, table.higher_is_better))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieCorrection {
    #[default]
    Corrected,
    Uncorrected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub avg_rank: Vec<f64>,
    pub avg_metric: Vec<f64>,
    pub friedman_chi2: f64,
    /// Upper tail of chi-squared with `K - 1` degrees of freedom.
    pub friedman_chi2_pvalue: f64,
    pub iman_davenport_f: f64,
    /// Upper tail of F with `(K - 1, (K - 1)(n - 1))` degrees of freedom.
    pub friedman_pvalue: f64,
    /// Set when every setting ranks the methods identically, which makes the
    /// Iman-Davenport statistic infinite.
    pub degenerate: bool,
    pub tie_correction: TieCorrection,
}

/// `P(X > x)` for `X ~ chi2(df)`.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(df / 2.0, x / 2.0)
    }
}

/// `P(X > x)` for `X ~ F(d1, d2)`.
pub fn f_sf(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x.is_infinite() {
        0.0
    } else {
        beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * x))
    }
}

/// `P(Z > z)` for a standard normal.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

pub fn summarize(table: &ResultTable) -> RankSummary {
    summarize_with(table, TieCorrection::Corrected)
}

pub fn summarize_with(table: &ResultTable, ties: TieCorrection) -> RankSummary {
    let n = table.num_settings() as f64;
    let k = table.num_methods() as f64;
    let ranks = rank_rows(table);
    let column_mean = |rows: &[Vec<f64>], j: usize| rows.iter().map(|r| r[j]).sum::<f64>() / n;
    let avg_rank: Vec<f64> = (0..table.num_methods()).map(|j| column_mean(&ranks, j)).collect();
    let avg_metric: Vec<f64> = (0..table.num_methods())
        .map(|j| column_mean(&table.values, j))
        .collect();

    let centre = (k + 1.0) / 2.0;
    let mut chi2 = 12.0 * n / (k * (k + 1.0))
        * avg_rank.iter().map(|r| (r - centre).powi(2)).sum::<f64>();
    if ties == TieCorrection::Corrected {
        let tie_sum: f64 = ranks.iter().map(|r| tie_term(r)).sum();
        let correction = 1.0 - tie_sum / (n * (k * k * k - k));
        chi2 = if correction > 0.0 { chi2 / correction } else { 0.0 };
    }
    let d1 = k - 1.0;
    let d2 = (k - 1.0) * (n - 1.0);
    let denom = n * (k - 1.0) - chi2;
    let degenerate = denom <= 1e-9 * n * (k - 1.0);
    let (f, p) = if degenerate {
        (f64::INFINITY, 0.0)
    } else {
        let f = (n - 1.0) * chi2 / denom;
        (f, f_sf(f, d1, d2))
    };
    RankSummary {
        avg_rank,
        avg_metric,
        friedman_chi2: chi2,
        friedman_chi2_pvalue: chi2_sf(chi2, d1),
        iman_davenport_f: f,
        friedman_pvalue: p,
        degenerate,
        tie_correction: ties,
    }
}

/// `sum(t^3 - t)` over groups of tied ranks in one row.
fn tie_term(ranks: &[f64]) -> f64 {
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        total += t * t * t - t;
        i = j;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    /// `p = 2 P(Z > |z|)`
    #[default]
    TwoSided,
    /// `p = P(Z > z)`
    OneSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Reject,
    Accept,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Outcome::Reject => "reject",
            Outcome::Accept => "accept",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolmComparison {
    pub method: String,
    pub avg_rank: f64,
    pub z: f64,
    pub p_value: f64,
    pub threshold: f64,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolmResult {
    /// The top-ranked method everything is compared against.
    pub control: String,
    pub beta: f64,
    /// Sorted by ascending p-value.
    pub comparisons: Vec<HolmComparison>,
}

pub fn holm(table: &ResultTable, beta: f64) -> Result<HolmResult> {
    holm_with(table, beta, Sidedness::TwoSided)
}

pub fn holm_with(table: &ResultTable, beta: f64, sides: Sidedness) -> Result<HolmResult> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!("significance level {beta} outside (0, 1)")));
    }
    let summary = summarize(table);
    let k = table.num_methods();
    let n = table.num_settings() as f64;
    let se = ((k * (k + 1)) as f64 / (6.0 * n)).sqrt();
    let control = summary
        .avg_rank
        .iter()
        .enumerate()
        .fold(0, |best, (j, &r)| if r < summary.avg_rank[best] { j } else { best });
    let best_rank = summary.avg_rank[control];
    let mut comparisons: Vec<HolmComparison> = (0..k)
        .filter(|&j| j != control)
        .map(|j| {
            let z = (summary.avg_rank[j] - best_rank) / se;
            let p_value = match sides {
                Sidedness::TwoSided => (2.0 * normal_sf(z.abs())).min(1.0),
                Sidedness::OneSided => normal_sf(z),
            };
            HolmComparison {
                method: table.methods[j].clone(),
                avg_rank: summary.avg_rank[j],
                z,
                p_value,
                threshold: 0.0,
                outcome: Outcome::Accept,
            }
        })
        .collect();
    comparisons.sort_by(|a, b| a.p_value.total_cmp(&b.p_value));
    let mut rejecting = true;
    for (i, c) in comparisons.iter_mut().enumerate() {
        // i-th smallest p-value faces beta / (K - 1 - i), i.e. beta / (j - 1)
        // with j the alternative's position in the ranking.
        c.threshold = beta / (k - 1 - i) as f64;
        rejecting = rejecting && c.p_value < c.threshold;
        c.outcome = if rejecting { Outcome::Reject } else { Outcome::Accept };
    }
    Ok(HolmResult {
        control: table.methods[control].clone(),
        beta,
        comparisons,
    })
}
