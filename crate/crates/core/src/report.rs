//! Aggregation of evaluation records into the outcome taxonomy, the
//! similarity/correctness correlation table and box-plot data.
//!
//! Everything here is a pure fold over the record set. Rows are sorted by
//! lifter name, then optimisation level, then metric, so the output does not
//! depend on the order records were produced in.
//!
//! CSV column order (fixed):
//!
//! * taxonomy: `lifter, opt_level, tested, lifting_error, compilation_error,
//!   compilation_success, runtime_error, runtime_crash, timeout,
//!   checksum_error, checksum_correct, infrastructure_error, semantic_score`
//! * correlation: `lifter, opt_level, metric, n_pass, n_fail, pass_mean,
//!   fail_mean, r, p_value, stars`

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::metrics::Metric;
use crate::pipeline::{EvaluationRecord, Terminal};
use crate::stats::{self, distribution_summary, point_biserial, DistributionSummary};
use crate::toolchain::OptLevel;

pub const SCHEMA_VERSION: u32 = 1;

/// Which records enter the correlation and box-plot populations.
pub const POPULATION: &str = "records whose lifted source compiled \
     (runtime_error, timeout, checksum_mismatch, checksum_match); \
     pass = checksum_match, fail = any other compiled outcome";

pub const TAXONOMY_COLUMNS: [&str; 13] = [
    "lifter",
    "opt_level",
    "tested",
    "lifting_error",
    "compilation_error",
    "compilation_success",
    "runtime_error",
    "runtime_crash",
    "timeout",
    "checksum_error",
    "checksum_correct",
    "infrastructure_error",
    "semantic_score",
];

pub const CORRELATION_COLUMNS: [&str; 10] = [
    "lifter",
    "opt_level",
    "metric",
    "n_pass",
    "n_fail",
    "pass_mean",
    "fail_mean",
    "r",
    "p_value",
    "stars",
];

/// One column of the outcome taxonomy. `runtime_error` merges crashes and
/// timeouts; the two sub-counts are kept alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyRow {
    pub lifter: String,
    pub opt_level: OptLevel,
    pub tested: u64,
    pub lifting_error: u64,
    pub compilation_error: u64,
    pub compilation_success: u64,
    pub runtime_error: u64,
    pub runtime_crash: u64,
    pub timeout: u64,
    pub checksum_error: u64,
    pub checksum_correct: u64,
    /// Harness faults; not part of `tested`.
    pub infrastructure_error: u64,
    /// `None` when nothing was tested.
    pub semantic_score: Option<f64>,
}

impl TaxonomyRow {
    fn empty(lifter: &str, opt_level: OptLevel) -> Self {
        TaxonomyRow {
            lifter: lifter.to_string(),
            opt_level,
            tested: 0,
            lifting_error: 0,
            compilation_error: 0,
            compilation_success: 0,
            runtime_error: 0,
            runtime_crash: 0,
            timeout: 0,
            checksum_error: 0,
            checksum_correct: 0,
            infrastructure_error: 0,
            semantic_score: None,
        }
    }

    fn add(&mut self, terminal: Terminal) {
        if terminal == Terminal::Infrastructure {
            self.infrastructure_error += 1;
            return;
        }
        self.tested += 1;
        match terminal {
            Terminal::LiftError => self.lifting_error += 1,
            Terminal::CompileError => self.compilation_error += 1,
            Terminal::RuntimeError => self.runtime_crash += 1,
            Terminal::Timeout => self.timeout += 1,
            Terminal::ChecksumMismatch => self.checksum_error += 1,
            Terminal::ChecksumMatch => self.checksum_correct += 1,
            Terminal::Infrastructure => unreachable!(),
        }
        if terminal.compiled() {
            self.compilation_success += 1;
        }
        self.runtime_error = self.runtime_crash + self.timeout;
    }

    /// The five terminal buckets sum to `tested`, and compiled outcomes sum
    /// to `compilation_success`.
    pub fn check_partition(&self) -> Result<(), String> {
        let buckets =
            self.lifting_error + self.compilation_error + self.runtime_error + self.checksum_error + self.checksum_correct;
        if buckets != self.tested {
            return Err(format!(
                "{} {}: buckets sum to {buckets}, tested is {}",
                self.lifter, self.opt_level, self.tested
            ));
        }
        if self.runtime_error + self.checksum_error + self.checksum_correct != self.compilation_success {
            return Err(format!("{} {}: compiled outcomes disagree with compilation_success", self.lifter, self.opt_level));
        }
        if self.runtime_crash + self.timeout != self.runtime_error {
            return Err(format!("{} {}: runtime sub-counts disagree", self.lifter, self.opt_level));
        }
        Ok(())
    }

    /// `count` as a percentage of `tested`, two decimals.
    pub fn percent(&self, count: u64) -> String {
        match stats::semantic_score(count, self.tested) {
            Ok(s) => s.percent(),
            Err(_) => "n/a".into(),
        }
    }
}

pub fn taxonomy_table(records: &[EvaluationRecord]) -> Vec<TaxonomyRow> {
    let mut rows: BTreeMap<(String, OptLevel), TaxonomyRow> = BTreeMap::new();
    for r in records {
        rows.entry((r.lifter.clone(), r.opt_level))
            .or_insert_with(|| TaxonomyRow::empty(&r.lifter, r.opt_level))
            .add(r.terminal());
    }
    rows.into_values()
        .map(|mut row| {
            row.semantic_score = stats::semantic_score(row.checksum_correct, row.tested).ok().map(|s| s.value());
            row
        })
        .collect()
}

/// One (lifter, opt level, metric) cell. Statistics are `None` (rendered
/// `n/a`) when a class is missing or the scores are degenerate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub lifter: String,
    pub opt_level: OptLevel,
    pub metric: Metric,
    pub n_pass: usize,
    pub n_fail: usize,
    pub pass_mean: Option<f64>,
    pub fail_mean: Option<f64>,
    pub r: Option<f64>,
    pub p_value: Option<f64>,
    pub stars: String,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

type Populations = BTreeMap<(String, OptLevel), Vec<(crate::metrics::SimilarityScores, bool)>>;

/// Compiled records per (lifter, opt level), ordered by program id so that
/// floating-point sums do not depend on record order.
fn compiled_populations(records: &[EvaluationRecord]) -> Populations {
    let mut compiled: Vec<&EvaluationRecord> = records
        .iter()
        .filter(|r| r.terminal().compiled() && r.similarity.is_some())
        .collect();
    compiled.sort_by(|a, b| a.program_id.cmp(&b.program_id));
    let mut cells: Populations = BTreeMap::new();
    for r in compiled {
        if let Some(sim) = r.similarity {
            cells
                .entry((r.lifter.clone(), r.opt_level))
                .or_default()
                .push((sim, r.terminal() == Terminal::ChecksumMatch));
        }
    }
    cells
}

pub fn correlation_table(records: &[EvaluationRecord]) -> Vec<CorrelationRow> {
    let mut rows = Vec::new();
    for ((lifter, opt_level), cell) in compiled_populations(records) {
        let passed: Vec<bool> = cell.iter().map(|(_, p)| *p).collect();
        for metric in Metric::ALL {
            let scores: Vec<f64> = cell.iter().map(|(s, _)| s.get(metric)).collect();
            let pass: Vec<f64> = cell.iter().filter(|(_, p)| *p).map(|(s, _)| s.get(metric)).collect();
            let fail: Vec<f64> = cell.iter().filter(|(_, p)| !*p).map(|(s, _)| s.get(metric)).collect();
            let pb = point_biserial(&scores, &passed).ok();
            rows.push(CorrelationRow {
                lifter: lifter.clone(),
                opt_level,
                metric,
                n_pass: pass.len(),
                n_fail: fail.len(),
                pass_mean: mean(&pass),
                fail_mean: mean(&fail),
                r: pb.map(|p| p.r),
                p_value: pb.map(|p| p.p_value),
                stars: pb.map_or("", |p| stats::significance_stars(p.p_value)).to_string(),
            });
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Match,
    Mismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotGroup {
    pub lifter: String,
    pub opt_level: OptLevel,
    pub metric: Metric,
    pub outcome: Group,
    pub summary: DistributionSummary,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxplotExport {
    pub schema_version: u32,
    pub population: String,
    pub groups: Vec<BoxplotGroup>,
}

/// Score distributions per (lifter, opt level, metric, match/mismatch) over
/// the compiled population. Empty groups are omitted.
pub fn boxplot_export(records: &[EvaluationRecord]) -> BoxplotExport {
    let mut groups = Vec::new();
    for ((lifter, opt_level), cell) in compiled_populations(records) {
        for metric in Metric::ALL {
            for outcome in [Group::Match, Group::Mismatch] {
                let scores: Vec<f64> = cell
                    .iter()
                    .filter(|(_, p)| *p == (outcome == Group::Match))
                    .map(|(s, _)| s.get(metric))
                    .collect();
                if let Ok(summary) = distribution_summary(&scores) {
                    groups.push(BoxplotGroup {
                        lifter: lifter.clone(),
                        opt_level,
                        metric,
                        outcome,
                        summary,
                        scores,
                    });
                }
            }
        }
    }
    BoxplotExport {
        schema_version: SCHEMA_VERSION,
        population: POPULATION.to_string(),
        groups,
    }
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub records: usize,
    pub infrastructure_errors: usize,
    pub correlation_population: String,
    pub taxonomy: Vec<TaxonomyRow>,
    pub correlation: Vec<CorrelationRow>,
}

impl Summary {
    pub fn build(records: &[EvaluationRecord]) -> Self {
        Summary {
            schema_version: SCHEMA_VERSION,
            records: records.len(),
            infrastructure_errors: records.iter().filter(|r| r.terminal() == Terminal::Infrastructure).count(),
            correlation_population: POPULATION.to_string(),
            taxonomy: taxonomy_table(records),
            correlation: correlation_table(records),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serialises") + "\n"
    }

    pub fn check_partition(&self) -> Result<(), String> {
        self.taxonomy.iter().try_for_each(TaxonomyRow::check_partition)
    }

    pub fn row(&self, lifter: &str, opt: OptLevel) -> Option<&TaxonomyRow> {
        self.taxonomy.iter().find(|r| r.lifter == lifter && r.opt_level == opt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format {other:?} (expected text, csv or json)")),
        }
    }
}

pub fn render(summary: &Summary, format: Format) -> String {
    match format {
        Format::Text => render_text(summary),
        Format::Csv => format!("{}\n{}", taxonomy_csv(&summary.taxonomy), correlation_csv(&summary.correlation)),
        Format::Json => summary.to_json(),
    }
}

fn opt_f64(x: Option<f64>, digits: usize) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.digits$}"))
}

fn csv_string(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

pub fn taxonomy_csv(rows: &[TaxonomyRow]) -> String {
    let mut out = vec![TAXONOMY_COLUMNS.iter().map(|s| s.to_string()).collect()];
    for r in rows {
        let counts = [
            r.tested,
            r.lifting_error,
            r.compilation_error,
            r.compilation_success,
            r.runtime_error,
            r.runtime_crash,
            r.timeout,
            r.checksum_error,
            r.checksum_correct,
            r.infrastructure_error,
        ];
        let mut line = vec![r.lifter.clone(), r.opt_level.to_string()];
        line.extend(counts.iter().map(u64::to_string));
        line.push(opt_f64(r.semantic_score, 4));
        out.push(line);
    }
    csv_string(out)
}

pub fn correlation_csv(rows: &[CorrelationRow]) -> String {
    let mut out = vec![CORRELATION_COLUMNS.iter().map(|s| s.to_string()).collect()];
    for r in rows {
        out.push(vec![
            r.lifter.clone(),
            r.opt_level.to_string(),
            r.metric.name().to_string(),
            r.n_pass.to_string(),
            r.n_fail.to_string(),
            opt_f64(r.pass_mean, 6),
            opt_f64(r.fail_mean, 6),
            opt_f64(r.r, 6),
            r.p_value.map_or_else(|| "n/a".into(), |p| format!("{p:.3e}")),
            r.stars.clone(),
        ]);
    }
    csv_string(out)
}

fn aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[c]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

pub fn render_text(summary: &Summary) -> String {
    let cols = &summary.taxonomy;
    let mut rows = vec![std::iter::once(String::new())
        .chain(cols.iter().map(|r| format!("{} {}", r.lifter, r.opt_level)))
        .collect::<Vec<_>>()];
    let with_pct = |r: &TaxonomyRow, n: u64| format!("{n} ({})", r.percent(n));
    type Cell = fn(&TaxonomyRow) -> u64;
    let plain: [(&str, Cell, bool); 9] = [
        ("Tested programs", |r| r.tested, false),
        ("Lifting error", |r| r.lifting_error, false),
        ("Compilation error", |r| r.compilation_error, false),
        ("Compilation success", |r| r.compilation_success, true),
        ("Runtime error", |r| r.runtime_error, false),
        ("  crash", |r| r.runtime_crash, false),
        ("  timeout", |r| r.timeout, false),
        ("Checksum error", |r| r.checksum_error, false),
        ("Checksum correct", |r| r.checksum_correct, true),
    ];
    for (label, get, pct) in plain {
        let mut row = vec![label.to_string()];
        row.extend(cols.iter().map(|r| if pct { with_pct(r, get(r)) } else { get(r).to_string() }));
        rows.push(row);
    }
    let mut score = vec!["Semantic score".to_string()];
    score.extend(cols.iter().map(|r| opt_f64(r.semantic_score, 4)));
    rows.push(score);
    if summary.infrastructure_errors > 0 {
        let mut row = vec!["Infrastructure error".to_string()];
        row.extend(cols.iter().map(|r| r.infrastructure_error.to_string()));
        rows.push(row);
    }

    let mut out = String::from("Outcome taxonomy\n\n");
    out.push_str(&aligned(&rows));

    out.push_str("\nSimilarity vs. checksum correctness (point-biserial)\n\n");
    let mut corr = vec![["Lifter", "Opt", "Pass/Fail", "Metric", "Pass mean", "Fail mean", "r", "p"]
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()];
    for r in &summary.correlation {
        corr.push(vec![
            r.lifter.clone(),
            r.opt_level.to_string(),
            format!("{}/{}", r.n_pass, r.n_fail),
            r.metric.name().to_string(),
            opt_f64(r.pass_mean, 2),
            opt_f64(r.fail_mean, 2),
            r.r.map_or_else(|| "n/a".into(), |v| format!("{v:.2}{}", r.stars)),
            r.p_value.map_or_else(|| "n/a".into(), |p| format!("{p:.3e}")),
        ]);
    }
    if summary.correlation.is_empty() {
        out.push_str("(no compiled records)\n");
    } else {
        out.push_str(&aligned(&corr));
    }
    out.push_str("\nSignificance: * p < 0.05, ** p < 0.01, *** p < 0.001\n");
    out
}
