//! Paired significance testing and per-model table summaries.

use serde::{Deserialize, Serialize};

use super::cv::mean_std;
use crate::error::{Error, Result};

/// Absolute differences closer than this share a rank; smaller ones count as zero.
pub const TIE_TOLERANCE: f64 = 1e-10;
pub const MAX_EXACT_N: usize = 20;

/// An exact probability `numerator / denominator` in lowest terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub numerator: u64,
    pub denominator: u64,
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl Ratio {
    pub fn new(numerator: u64, denominator: u64) -> Self {
        let g = gcd(numerator, denominator).max(1);
        Self {
            numerator: numerator / g,
            denominator: denominator / g,
        }
    }

    pub fn value(self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wilcoxon {
    /// Non-zero differences kept.
    pub n: usize,
    /// Sum of ranks of positive differences.
    pub w_plus: f64,
    pub w_minus: f64,
    /// `P(W+ >= w_plus)` under the null, i.e. one-sided for `a > b`.
    pub p_greater: Ratio,
    /// `P(W+ == w_plus)`.
    pub point_mass: Ratio,
}

/// Average ranks of `values` (ascending), doubled so they stay integral.
fn doubled_ranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] - values[order[start]] <= TIE_TOLERANCE {
            end += 1;
        }
        // positions start+1 ..= end share rank (start + 1 + end) / 2
        for &i in &order[start..end] {
            ranks[i] = (start + 1 + end) as u64;
        }
        start = end;
    }
    ranks
}

/// Exact Wilcoxon signed-rank test of paired scores.
///
/// Zero differences are dropped, ties get average ranks, and the null
/// distribution of `W+` comes from enumerating every sign assignment.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<Wilcoxon> {
    if a.len() != b.len() {
        return Err(Error::shape("wilcoxon", format!("{} vs {} paired scores", a.len(), b.len())));
    }
    if a.len() < 5 {
        return Err(Error::invalid("wilcoxon", format!("need at least 5 pairs, got {}", a.len())));
    }
    if let Some(v) = a.iter().chain(b).find(|v| !v.is_finite()) {
        return Err(Error::invalid("wilcoxon", format!("non-finite score {v}")));
    }
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| d.abs() > TIE_TOLERANCE)
        .collect();
    let n = d.len();
    if n == 0 {
        return Err(Error::invalid("wilcoxon", "all paired differences are zero"));
    }
    if n > MAX_EXACT_N {
        return Err(Error::invalid(
            "wilcoxon",
            format!("{n} non-zero differences; exact enumeration supports at most {MAX_EXACT_N}"),
        ));
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let w2: u64 = ranks.iter().zip(&d).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let total2: u64 = ranks.iter().sum();

    let masks = 1usize << n;
    let mut sums = vec![0u64; masks];
    let (mut at_least, mut equal) = (0u64, 0u64);
    for mask in 0..masks {
        if mask > 0 {
            let low = mask.trailing_zeros() as usize;
            sums[mask] = sums[mask & (mask - 1)] + ranks[low];
        }
        at_least += u64::from(sums[mask] >= w2);
        equal += u64::from(sums[mask] == w2);
    }
    Ok(Wilcoxon {
        n,
        w_plus: w2 as f64 / 2.0,
        w_minus: (total2 - w2) as f64 / 2.0,
        p_greater: Ratio::new(at_least, masks as u64),
        point_mass: Ratio::new(equal, masks as u64),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Sample (n - 1) standard deviation.
    pub sample_std: f64,
    pub reported_mean: Option<f64>,
    pub reported_std: Option<f64>,
    pub notes: Vec<String>,
}

/// Printed figures further than this from the recomputed value are flagged.
pub const REPORT_TOLERANCE: f64 = 5e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct Column<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
    pub reported_mean: Option<f64>,
    pub reported_std: Option<f64>,
}

/// Recomputes each column's mean and spread and notes any printed figure
/// that disagrees with the column it summarises.
pub fn summarize_table(columns: &[Column<'_>]) -> Vec<ColumnSummary> {
    columns
        .iter()
        .map(|c| {
            let (mean, std) = mean_std(c.values);
            let n = c.values.len();
            let sample_std = if n > 1 {
                std * (n as f64 / (n - 1) as f64).sqrt()
            } else {
                f64::NAN
            };
            let mut notes = Vec::new();
            if let Some(r) = c.reported_mean.filter(|r| (r - mean).abs() > REPORT_TOLERANCE) {
                notes.push(format!(
                    "{}: reported mean {r:.4} is inconsistent with the column mean {mean:.4}",
                    c.name
                ));
            }
            if let Some(r) = c.reported_std {
                if (r - std).abs() > REPORT_TOLERANCE && (r - sample_std).abs() > REPORT_TOLERANCE {
                    notes.push(format!(
                        "{}: reported std {r:.4} matches neither the population ({std:.4}) nor the sample ({sample_std:.4}) std",
                        c.name
                    ));
                }
            }
            ColumnSummary {
                name: c.name.to_string(),
                n,
                mean,
                std,
                sample_std,
                reported_mean: c.reported_mean,
                reported_std: c.reported_std,
                notes,
            }
        })
        .collect()
}
