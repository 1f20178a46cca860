//! Semantic correctness score and point-biserial correlation.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::metrics::Metric;
use crate::toolchain::OptLevel;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("semantic score undefined: no tested programs")]
    NoTestedPrograms,
    #[error("correct count {correct} exceeds tested count {tested}")]
    CorrectExceedsTested { correct: u64, tested: u64 },
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("empty input")]
    EmptyInput,
}

/// Fraction of tested programs whose lifted binary reproduced the reference
/// checksum. Every failure mode counts against the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticScore {
    pub correct: u64,
    pub tested: u64,
}

impl SemanticScore {
    pub fn value(&self) -> f64 {
        self.correct as f64 / self.tested as f64
    }

    /// Four decimal places, e.g. `0.3301`.
    pub fn render(&self) -> String {
        format!("{:.4}", self.value())
    }

    /// Percentage with two decimals, e.g. `33.01%`.
    pub fn percent(&self) -> String {
        format!("{:.2}%", 100.0 * self.value())
    }
}

pub fn semantic_score(correct: u64, tested: u64) -> Result<SemanticScore, StatsError> {
    if tested == 0 {
        return Err(StatsError::NoTestedPrograms);
    }
    if correct > tested {
        return Err(StatsError::CorrectExceedsTested { correct, tested });
    }
    Ok(SemanticScore { correct, tested })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointBiserial {
    pub n_pass: usize,
    pub n_fail: usize,
    pub pass_mean: f64,
    pub fail_mean: f64,
    pub r: f64,
    pub p_value: f64,
}

/// Point-biserial correlation between `scores` and binary `passed` labels,
/// with a two-tailed p-value from Student's t on `n - 2` degrees of freedom.
pub fn point_biserial(scores: &[f64], passed: &[bool]) -> Result<PointBiserial, StatsError> {
    if scores.len() != passed.len() {
        return Err(StatsError::DegenerateInput("scores and labels differ in length"));
    }
    let n = scores.len();
    if n < 3 {
        return Err(StatsError::DegenerateInput("fewer than three observations"));
    }
    let (mut sum_pass, mut sum_fail, mut n_pass) = (0.0, 0.0, 0usize);
    for (&x, &p) in scores.iter().zip(passed) {
        if p {
            sum_pass += x;
            n_pass += 1;
        } else {
            sum_fail += x;
        }
    }
    let n_fail = n - n_pass;
    if n_pass == 0 || n_fail == 0 {
        return Err(StatsError::DegenerateInput("one label class is empty"));
    }
    let mean = scores.iter().sum::<f64>() / n as f64;
    let var = scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if var <= 0.0 {
        return Err(StatsError::DegenerateInput("scores have zero variance"));
    }
    let pass_mean = sum_pass / n_pass as f64;
    let fail_mean = sum_fail / n_fail as f64;
    let nf = n as f64;
    let r = ((pass_mean - fail_mean) / var.sqrt() * ((n_pass * n_fail) as f64 / (nf * nf)).sqrt()).clamp(-1.0, 1.0);
    Ok(PointBiserial {
        n_pass,
        n_fail,
        pass_mean,
        fail_mean,
        r,
        p_value: correlation_p_value(r, n),
    })
}

/// Two-tailed p-value of a correlation coefficient `r` over `n` observations.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    let df = n as f64 - 2.0;
    let one_minus = 1.0 - r * r;
    if one_minus <= 0.0 {
        return 0.0;
    }
    let t2 = r * r * df / one_minus;
    student_t_two_tailed(t2.sqrt(), df)
}

/// `P(|T| >= t)` for Student's t with `df` degrees of freedom, via the
/// regularized incomplete beta function.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

pub fn significance_stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    pub count: usize,
}

/// Linear interpolation between closest ranks on the sorted data, position
/// `q * (n - 1)`.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn distribution_summary(scores: &[f64]) -> Result<DistributionSummary, StatsError> {
    if scores.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(DistributionSummary {
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
        mean: scores.iter().sum::<f64>() / scores.len() as f64,
        count: scores.len(),
    })
}

/// One cell of the similarity-vs-outcome correlation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub metric_name: Metric,
    pub opt_level: OptLevel,
    pub n_pass: usize,
    pub n_fail: usize,
    pub pass_mean: f64,
    pub fail_mean: f64,
    pub r: f64,
    pub p_value: f64,
}

impl CorrelationResult {
    pub fn new(metric: Metric, opt_level: OptLevel, pb: PointBiserial) -> Self {
        CorrelationResult {
            metric_name: metric,
            opt_level,
            n_pass: pb.n_pass,
            n_fail: pb.n_fail,
            pass_mean: pb.pass_mean,
            fail_mean: pb.fail_mean,
            r: pb.r,
            p_value: pb.p_value,
        }
    }

    pub fn stars(&self) -> &'static str {
        significance_stars(self.p_value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn semantic_score_rendering() {
        assert_eq!(semantic_score(338, 1024).unwrap().render(), "0.3301");
        assert_eq!(semantic_score(338, 1024).unwrap().percent(), "33.01%");
        assert_eq!(semantic_score(643, 1024).unwrap().render(), "0.6279");
        assert_eq!(semantic_score(643, 1024).unwrap().percent(), "62.79%");
        assert_eq!(semantic_score(0, 1024).unwrap().value(), 0.0);
        assert_eq!(semantic_score(0, 1024).unwrap().percent(), "0.00%");
        assert_eq!(semantic_score(17, 17).unwrap().value(), 1.0);
        assert_eq!(semantic_score(0, 0), Err(StatsError::NoTestedPrograms));
        assert!(semantic_score(5, 4).is_err());
    }

    #[test]
    fn perfect_separation() {
        let pb = point_biserial(&[1.0, 1.0, 0.0, 0.0], &[true, true, false, false]).unwrap();
        assert_eq!(pb.r, 1.0);
        assert_eq!(pb.p_value, 0.0);
        assert_eq!((pb.n_pass, pb.n_fail), (2, 2));
    }

    #[test]
    fn equal_means_give_zero() {
        let pb = point_biserial(&[0.2, 0.8, 0.8, 0.2], &[true, true, false, false]).unwrap();
        assert_eq!(pb.r, 0.0);
        assert!((pb.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(point_biserial(&[0.1, 0.2, 0.3], &[true, true, true]).is_err());
        assert!(point_biserial(&[0.5, 0.5, 0.5], &[true, false, true]).is_err());
        assert!(point_biserial(&[0.5, 0.6], &[true, false]).is_err());
    }

    #[test]
    fn stars_thresholds() {
        assert_eq!(significance_stars(0.0005), "***");
        assert_eq!(significance_stars(0.001), "**");
        assert_eq!(significance_stars(0.005), "**");
        assert_eq!(significance_stars(0.01), "*");
        assert_eq!(significance_stars(0.03), "*");
        assert_eq!(significance_stars(0.05), "");
        assert_eq!(significance_stars(0.5), "");
    }

    #[test]
    fn summary_small_cases() {
        let s = distribution_summary(&[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 2.0, 3.0, 4.0, 5.0));
        assert_eq!(s.mean, 3.0);
        let s = distribution_summary(&[0.7]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max, s.mean, s.count), (0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 1));
        let s = distribution_summary(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (1.75, 2.5, 3.25));
        assert_eq!(distribution_summary(&[]), Err(StatsError::EmptyInput));
    }
}
