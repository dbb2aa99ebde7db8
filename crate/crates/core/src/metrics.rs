//! Learning-curve metrics, strategy rankings, and report tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runner::{write_curves_csv, ExperimentResult};

/// Test accuracy against labeled-set size, strictly increasing in size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    points: Vec<(usize, f64)>,
}

impl LearningCurve {
    pub fn new(points: Vec<(usize, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("a learning curve needs at least one point".into()));
        }
        if !points.windows(2).all(|w| w[0].0 < w[1].0) {
            return Err(Error::Config("learning curve sizes must strictly increase".into()));
        }
        if let Some(&(n, a)) = points.iter().find(|(_, a)| !(0.0..=1.0).contains(a)) {
            return Err(Error::Config(format!("accuracy {a} at {n} labels outside [0, 1]")));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(usize, f64)] {
        &self.points
    }
}

/// Area under a curve given as `(x, y)` points with increasing `x`, divided by
/// the `x` span: a trapezoidal, budget-weighted mean of `y`. A single point
/// returns its `y`.
pub fn normalized_trapezoid(points: &[(f64, f64)]) -> f64 {
    let Some(&(x0, y0)) = points.first() else {
        return 0.0;
    };
    if points.len() == 1 {
        return y0;
    }
    let span = points[points.len() - 1].0 - x0;
    // Integrate deviations from the first value, so a constant curve yields
    // exactly that constant.
    let area: f64 = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * ((w[0].1 - y0) + (w[1].1 - y0)) / 2.0)
        .sum();
    let (lo, hi) = points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, y)| {
            (lo.min(y), hi.max(y))
        });
    (y0 + area / span).clamp(lo, hi)
}

pub fn auc(curve: &LearningCurve) -> f64 {
    let points: Vec<(f64, f64)> = curve.points.iter().map(|&(n, a)| (n as f64, a)).collect();
    normalized_trapezoid(&points)
}

/// Fractional ranks, 1 = highest value; tied values share the mean of their
/// positions.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start+1 ..= end share their average.
        let shared = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = shared;
        }
        start = end;
    }
    ranks
}

/// Mean over datasets of each strategy's per-dataset rank.
///
/// `table[dataset][strategy]` holds the metric; every dataset must list the
/// same strategies.
pub fn mean_rank(table: &BTreeMap<String, BTreeMap<String, f64>>) -> Result<BTreeMap<String, f64>> {
    let Some(first) = table.values().next() else {
        return Err(Error::Config("no datasets to rank".into()));
    };
    let strategies: BTreeSet<&String> = first.keys().collect();
    let mut sums: BTreeMap<String, f64> = strategies.iter().map(|s| ((*s).clone(), 0.0)).collect();
    for (dataset, row) in table {
        let here: BTreeSet<&String> = row.keys().collect();
        if here != strategies {
            let missing: Vec<&&String> = strategies.symmetric_difference(&here).collect();
            return Err(Error::Config(format!(
                "dataset {dataset:?} has mismatched strategy cells {missing:?}"
            )));
        }
        let names: Vec<&String> = row.keys().collect();
        let values: Vec<f64> = row.values().copied().collect();
        for (name, rank) in names.into_iter().zip(fractional_ranks(&values)) {
            *sums.get_mut(name).expect("same key set") += rank;
        }
    }
    let n = table.len() as f64;
    Ok(sums.into_iter().map(|(s, total)| (s, total / n)).collect())
}

/// Mean and sample standard deviation of a group of runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

/// Bessel-corrected standard deviation; a single value has deviation 0.
pub fn aggregate(values: &[f64]) -> Result<Summary> {
    let Some(&first) = values.first() else {
        return Err(Error::Config("cannot aggregate an empty group".into()));
    };
    let n = values.len();
    // Shifting by the first value keeps constant samples exact.
    let shift = values.iter().map(|v| v - first).sum::<f64>() / n as f64;
    let mean = first + shift;
    let sd = if n == 1 {
        0.0
    } else {
        let ss: f64 = values.iter().map(|v| (v - first - shift).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    };
    Ok(Summary { mean, sd, n })
}

/// Key of one aggregation group.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub dataset: String,
    pub classifier: String,
    pub strategy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub key: GroupKey,
    pub final_accuracy: Summary,
    pub auc: Summary,
    pub query_seconds: Summary,
}

/// Groups runs by (dataset, classifier, strategy) and summarizes each group.
/// Runs without test accuracy are skipped.
pub fn aggregate_results(results: &[ExperimentResult]) -> Result<Vec<GroupSummary>> {
    let mut groups: BTreeMap<GroupKey, Vec<&ExperimentResult>> = BTreeMap::new();
    for r in results {
        groups
            .entry(GroupKey {
                dataset: r.dataset.clone(),
                classifier: r.classifier.clone(),
                strategy: r.strategy.clone(),
            })
            .or_default()
            .push(r);
    }
    let mut summaries = Vec::with_capacity(groups.len());
    for (key, runs) in groups {
        let acc: Vec<f64> = runs.iter().filter_map(|r| r.final_accuracy).collect();
        let auc: Vec<f64> = runs.iter().filter_map(|r| r.auc).collect();
        if acc.is_empty() || auc.is_empty() {
            continue;
        }
        let time: Vec<f64> = runs.iter().map(|r| r.mean_query_seconds()).collect();
        summaries.push(GroupSummary {
            final_accuracy: aggregate(&acc)?,
            auc: aggregate(&auc)?,
            query_seconds: aggregate(&time)?,
            key,
        });
    }
    Ok(summaries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

/// Rendered report: named documents, e.g. `report.md` or `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub files: Vec<(String, String)>,
}

impl Report {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }
}

pub fn format_cell(s: &Summary) -> String {
    format!("{:.3}±{:.3}", s.mean, s.sd)
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub strategy: String,
    pub mean_rank_acc: f64,
    pub mean_rank_auc: f64,
    pub mean_acc: f64,
    pub mean_auc: f64,
}

/// Per model: strategies ranked within each dataset by mean final accuracy and
/// mean AUC, then averaged over datasets.
pub fn summary_table(groups: &[GroupSummary]) -> Result<Vec<SummaryRow>> {
    let models: BTreeSet<&str> = groups.iter().map(|g| g.key.classifier.as_str()).collect();
    let mut rows = Vec::new();
    for model in models {
        let mut acc: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        let mut auc: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for g in groups.iter().filter(|g| g.key.classifier == model) {
            acc.entry(g.key.dataset.clone())
                .or_default()
                .insert(g.key.strategy.clone(), g.final_accuracy.mean);
            auc.entry(g.key.dataset.clone())
                .or_default()
                .insert(g.key.strategy.clone(), g.auc.mean);
        }
        let rank_acc = mean_rank(&acc)?;
        let rank_auc = mean_rank(&auc)?;
        let mean_over = |table: &BTreeMap<String, BTreeMap<String, f64>>, strategy: &str| {
            let values: Vec<f64> = table.values().map(|row| row[strategy]).collect();
            values.iter().sum::<f64>() / values.len() as f64
        };
        for strategy in rank_acc.keys() {
            rows.push(SummaryRow {
                model: model.to_string(),
                strategy: strategy.clone(),
                mean_rank_acc: rank_acc[strategy],
                mean_rank_auc: rank_auc[strategy],
                mean_acc: mean_over(&acc, strategy),
                mean_auc: mean_over(&auc, strategy),
            });
        }
    }
    Ok(rows)
}

fn datasets_of(groups: &[GroupSummary]) -> Vec<String> {
    groups
        .iter()
        .map(|g| g.key.dataset.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn model_strategy_rows(groups: &[GroupSummary]) -> Vec<(String, String)> {
    groups
        .iter()
        .map(|g| (g.key.classifier.clone(), g.key.strategy.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn lookup<'a>(groups: &'a [GroupSummary], dataset: &str, model: &str, strategy: &str) -> Option<&'a GroupSummary> {
    groups
        .iter()
        .find(|g| g.key.dataset == dataset && g.key.classifier == model && g.key.strategy == strategy)
}

type Pick = fn(&GroupSummary) -> Summary;

const PER_DATASET: [(&str, &str, Pick); 3] = [
    ("accuracy", "Final accuracy", |g| g.final_accuracy),
    ("auc", "AUC", |g| g.auc),
    ("query_time", "Query time in seconds", |g| g.query_seconds),
];

/// Renders summary, per-dataset, query-time, and learning-curve tables.
pub fn render_report(results: &[ExperimentResult], format: ReportFormat) -> Result<Report> {
    if results.is_empty() {
        return Err(Error::Config("no results to report".into()));
    }
    let groups = aggregate_results(results)?;
    if groups.is_empty() {
        return Err(Error::Config("no run carries test accuracy".into()));
    }
    let summary = summary_table(&groups)?;
    let datasets = datasets_of(&groups);
    let rows = model_strategy_rows(&groups);

    let mut curves = Vec::new();
    write_curves_csv(results, &mut curves)?;
    let curves = String::from_utf8(curves).expect("csv output is utf-8");

    let files = match format {
        ReportFormat::Markdown => {
            let mut md = String::new();
            md.push_str("# Active learning report\n\n## Summary\n\n");
            md.push_str("| Model | Strategy | Mean Rank Acc. | Mean Rank AUC | Mean Result Acc. | Mean Result AUC |\n");
            md.push_str("|---|---|---:|---:|---:|---:|\n");
            for r in &summary {
                let _ = writeln!(
                    md,
                    "| {} | {} | {:.2} | {:.2} | {:.3} | {:.3} |",
                    r.model, r.strategy, r.mean_rank_acc, r.mean_rank_auc, r.mean_acc, r.mean_auc
                );
            }
            for (_, title, pick) in PER_DATASET {
                let _ = write!(md, "\n## {title}\n\n| Model | Strategy |");
                for d in &datasets {
                    let _ = write!(md, " {d} |");
                }
                md.push_str("\n|---|---|");
                md.push_str(&"---:|".repeat(datasets.len()));
                md.push('\n');
                for (model, strategy) in &rows {
                    let _ = write!(md, "| {model} | {strategy} |");
                    for d in &datasets {
                        let cell = lookup(&groups, d, model, strategy)
                            .map(|g| format_cell(&pick(g)))
                            .unwrap_or_else(|| "-".into());
                        let _ = write!(md, " {cell} |");
                    }
                    md.push('\n');
                }
            }
            vec![("report.md".to_string(), md), ("curves.csv".to_string(), curves)]
        }
        ReportFormat::Csv => {
            let mut files = Vec::new();
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "model",
                "strategy",
                "mean_rank_acc",
                "mean_rank_auc",
                "mean_acc",
                "mean_auc",
            ])?;
            for r in &summary {
                w.write_record([
                    r.model.clone(),
                    r.strategy.clone(),
                    format!("{:.2}", r.mean_rank_acc),
                    format!("{:.2}", r.mean_rank_auc),
                    format!("{:.3}", r.mean_acc),
                    format!("{:.3}", r.mean_auc),
                ])?;
            }
            files.push(("summary.csv".to_string(), finish_csv(w)?));
            for (name, _, pick) in PER_DATASET {
                let mut w = csv::Writer::from_writer(Vec::new());
                w.write_record(["dataset", "model", "strategy", "mean", "sd", "runs"])?;
                for d in &datasets {
                    for (model, strategy) in &rows {
                        if let Some(g) = lookup(&groups, d, model, strategy) {
                            let s = pick(g);
                            w.write_record([
                                d.clone(),
                                model.clone(),
                                strategy.clone(),
                                format!("{:.3}", s.mean),
                                format!("{:.3}", s.sd),
                                s.n.to_string(),
                            ])?;
                        }
                    }
                }
                files.push((format!("{name}.csv"), finish_csv(w)?));
            }
            files.push(("curves.csv".to_string(), curves));
            files
        }
    };
    Ok(Report { files })
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
