//! Published per-setting results of the three losses (OWA, CE, FL) over
//! 13 datasets x 3 CNN backbones, one table per metric, in percent.
//! See `fixtures/benchmark_results/README.md` for where each row comes from.

use crate::metrics::Metric;
use crate::stats::ResultTable;

const ACCURACY: &str = include_str!("../fixtures/benchmark_results/accuracy.csv");
const F1_MACRO: &str = include_str!("../fixtures/benchmark_results/f1_macro.csv");
const MIN_RECALL: &str = include_str!("../fixtures/benchmark_results/min_recall.csv");
const MIN_F1: &str = include_str!("../fixtures/benchmark_results/min_f1.csv");

pub fn benchmark_csv(metric: Metric) -> &'static str {
    match metric {
        Metric::Accuracy => ACCURACY,
        Metric::F1Macro => F1_MACRO,
        Metric::MinRecall => MIN_RECALL,
        Metric::MinF1 => MIN_F1,
    }
}

pub fn benchmark_table(metric: Metric) -> ResultTable {
    ResultTable::read_csv(benchmark_csv(metric).as_bytes(), true)
        .expect("embedded benchmark table is well formed")
}
