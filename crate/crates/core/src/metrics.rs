//! Clustering agreement metrics: ACC, NMI, pairwise F-score and ARI.
//!
//! All scores are fractions; percentages are a reporting concern.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense contingency table between two labelings, with labels compacted to `0..k`.
#[derive(Debug, Clone)]
pub struct Contingency {
    pub counts: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub n: u64,
}

impl Contingency {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        check_lengths(pred, truth, 1)?;
        let p = compact(pred);
        let t = compact(truth);
        let rows = p.iter().max().map_or(0, |m| m + 1);
        let cols = t.iter().max().map_or(0, |m| m + 1);
        let mut counts = vec![vec![0u64; cols]; rows];
        for (&a, &b) in p.iter().zip(&t) {
            counts[a][b] += 1;
        }
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..cols).map(|c| counts.iter().map(|r| r[c]).sum()).collect();
        Ok(Contingency {
            counts,
            row_sums,
            col_sums,
            n: pred.len() as u64,
        })
    }

    fn identical_partitions(&self) -> bool {
        // same partition up to relabeling iff every row and column has one nonzero cell
        self.counts.len() == self.col_sums.len()
            && self.counts.iter().all(|r| r.iter().filter(|&&c| c > 0).count() == 1)
    }
}

fn compact(labels: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

fn check_lengths(pred: &[usize], truth: &[usize], min: usize) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Parameter(format!(
            "label length mismatch: {} predicted vs {} true",
            pred.len(),
            truth.len()
        )));
    }
    if pred.len() < min {
        return Err(Error::Parameter(format!("need at least {min} labels, got {}", pred.len())));
    }
    Ok(())
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method,
/// potentials formulation). Returns `assignment[row] = col`.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; column 0 is the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if matched_row[j] > 0 {
            assignment[matched_row[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Best one-to-one relabeling agreement.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let ct = Contingency::new(pred, truth)?;
    let k = ct.counts.len().max(ct.col_sums.len());
    let cost: Vec<Vec<f64>> = (0..k)
        .map(|r| {
            (0..k)
                .map(|c| -(ct.counts.get(r).and_then(|row| row.get(c)).copied().unwrap_or(0) as f64))
                .collect()
        })
        .collect();
    let assign = min_cost_assignment(&cost);
    let hits: f64 = assign.iter().enumerate().map(|(r, &c)| -cost[r][c]).sum();
    Ok(hits / ct.n as f64)
}

fn entropy(sums: &[u64], n: f64) -> f64 {
    sums.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information normalized by the arithmetic mean of the two entropies.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let ct = Contingency::new(pred, truth)?;
    let n = ct.n as f64;
    let hp = entropy(&ct.row_sums, n);
    let ht = entropy(&ct.col_sums, n);
    if hp == 0.0 || ht == 0.0 {
        return Ok(if hp == 0.0 && ht == 0.0 { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for (r, row) in ct.counts.iter().enumerate() {
        for (c, &nij) in row.iter().enumerate() {
            if nij == 0 {
                continue;
            }
            let nij = nij as f64;
            mi += nij / n * (n * nij / (ct.row_sums[r] as f64 * ct.col_sums[c] as f64)).ln();
        }
    }
    Ok((mi / (0.5 * (hp + ht))).clamp(0.0, 1.0))
}

fn pairs(c: u64) -> f64 {
    (c * c.saturating_sub(1) / 2) as f64
}

/// Harmonic mean of pairwise precision and recall over co-clustered pairs.
pub fn pair_f_score(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth, 2)?;
    let ct = Contingency::new(pred, truth)?;
    let tp: f64 = ct.counts.iter().flatten().map(|&c| pairs(c)).sum();
    let pred_pos: f64 = ct.row_sums.iter().map(|&c| pairs(c)).sum();
    let true_pos: f64 = ct.col_sums.iter().map(|&c| pairs(c)).sum();
    if true_pos == 0.0 || pred_pos == 0.0 || tp == 0.0 {
        return Ok(0.0);
    }
    let precision = tp / pred_pos;
    let recall = tp / true_pos;
    Ok(2.0 * precision * recall / (precision + recall))
}

fn pairs_exact(c: u64) -> i128 {
    let c = c as i128;
    c * (c - 1) / 2
}

/// Adjusted Rand index from the contingency table.
///
/// Evaluated as `(2 I T - 2 A B) / ((A + B) T - 2 A B)` over integer pair
/// counts, so the only rounding is the final division.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth, 2)?;
    let ct = Contingency::new(pred, truth)?;
    let index: i128 = ct.counts.iter().flatten().map(|&c| pairs_exact(c)).sum();
    let a: i128 = ct.row_sums.iter().map(|&c| pairs_exact(c)).sum();
    let b: i128 = ct.col_sums.iter().map(|&c| pairs_exact(c)).sum();
    let total = pairs_exact(ct.n);
    let num = 2 * index * total - 2 * a * b;
    let den = (a + b) * total - 2 * a * b;
    if den == 0 {
        return Ok(if ct.identical_partitions() { 1.0 } else { 0.0 });
    }
    Ok(num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub nmi: f64,
    pub f_score: f64,
    pub ari: f64,
    pub n: usize,
    pub c_pred: usize,
    pub c_true: usize,
}

pub const METRIC_NAMES: [&str; 4] = ["acc", "nmi", "f_score", "ari"];

impl MetricsReport {
    pub fn values(&self) -> [f64; 4] {
        [self.acc, self.nmi, self.f_score, self.ari]
    }

    /// Flat `key value` block; the F-score line names its pairwise variant.
    pub fn to_key_values(&self) -> String {
        format!(
            "n {}\nc_pred {}\nc_true {}\nacc {}\nnmi {}\nf_score {}\nf_score_variant pairwise\nari {}\n",
            self.n, self.c_pred, self.c_true, self.acc, self.nmi, self.f_score, self.ari
        )
    }

    pub fn csv_header() -> &'static str {
        "n,c_pred,c_true,acc,nmi,f_score,ari"
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.n, self.c_pred, self.c_true, self.acc, self.nmi, self.f_score, self.ari
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ACC {:.2}%  NMI {:.2}%  F(pairwise) {:.2}%  ARI {:.2}%",
            100.0 * self.acc,
            100.0 * self.nmi,
            100.0 * self.f_score,
            100.0 * self.ari
        )
    }
}

/// All four metrics at once. Needs at least two samples.
pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<MetricsReport> {
    check_lengths(pred, truth, 2)?;
    let ct = Contingency::new(pred, truth)?;
    Ok(MetricsReport {
        acc: accuracy(pred, truth)?,
        nmi: nmi(pred, truth)?,
        f_score: pair_f_score(pred, truth)?,
        ari: ari(pred, truth)?,
        n: pred.len(),
        c_pred: ct.row_sums.len(),
        c_true: ct.col_sums.len(),
    })
}

/// Mean and sample standard deviation of each metric over repeated runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub runs: usize,
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

pub fn summarize(reports: &[MetricsReport]) -> Option<MetricsSummary> {
    if reports.is_empty() {
        return None;
    }
    let k = reports.len() as f64;
    let mut mean = [0.0; 4];
    for r in reports {
        for (m, v) in mean.iter_mut().zip(r.values()) {
            *m += v / k;
        }
    }
    let mut std = [0.0; 4];
    if reports.len() > 1 {
        for r in reports {
            for ((s, v), m) in std.iter_mut().zip(r.values()).zip(mean) {
                *s += (v - m) * (v - m);
            }
        }
        std.iter_mut().for_each(|s| *s = (*s / (k - 1.0)).sqrt());
    }
    Some(MetricsSummary {
        runs: reports.len(),
        mean,
        std,
    })
}

impl MetricsSummary {
    pub fn to_csv_cells(&self) -> String {
        let cells: Vec<String> = self
            .mean
            .iter()
            .zip(&self.std)
            .map(|(m, s)| format!("{m},{s}"))
            .collect();
        cells.join(",")
    }

    pub fn csv_header() -> String {
        METRIC_NAMES
            .iter()
            .map(|n| format!("{n}_mean,{n}_std"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl fmt::Display for MetricsSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let labels = ["ACC", "NMI", "F(pairwise)", "ARI"];
        let parts: Vec<String> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| format!("{l} {:.2}±{:.2}", 100.0 * self.mean[i], 100.0 * self.std[i]))
            .collect();
        write!(f, "{} (n={})", parts.join("  "), self.runs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acc_examples() {
        assert_eq!(accuracy(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap(), 0.75);
        assert_eq!(accuracy(&[2, 2, 0, 1], &[0, 0, 1, 2]).unwrap(), 1.0);
        assert!(accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn acc_pads_unequal_cluster_counts() {
        assert_eq!(accuracy(&[0, 1, 2, 3], &[0, 0, 1, 1]).unwrap(), 0.5);
        assert_eq!(accuracy(&[0, 0, 0, 0], &[0, 0, 1, 2]).unwrap(), 0.5);
    }

    #[test]
    fn nmi_examples() {
        assert!((nmi(&[0, 0, 1, 1, 2], &[1, 1, 0, 0, 2]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(nmi(&[0, 0, 0, 0], &[0, 1, 0, 1]).unwrap(), 0.0);
        assert_eq!(nmi(&[3, 3, 3], &[1, 1, 1]).unwrap(), 1.0);
        // independent partitions share no information
        assert!(nmi(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn f_score_examples() {
        assert_eq!(pair_f_score(&[0, 0, 1, 1], &[5, 5, 7, 7]).unwrap(), 1.0);
        assert_eq!(pair_f_score(&[0, 1, 2, 3], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(pair_f_score(&[0, 0, 1, 1], &[0, 1, 2, 3]).unwrap(), 0.0);
        // tp = 1 (pair 0-1), pred pairs 2, true pairs 3: P = 1/2, R = 1/3
        let f = pair_f_score(&[0, 0, 1, 1], &[0, 0, 0, 1]).unwrap();
        assert!((f - 0.4).abs() < 1e-15);
    }

    #[test]
    fn ari_examples() {
        assert_eq!(ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), -0.5);
        assert_eq!(ari(&[0, 0, 1, 2], &[2, 2, 0, 1]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 0, 0], &[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(ari(&[0, 0, 0], &[0, 1, 2]).unwrap(), 0.0);
    }

    #[test]
    fn hungarian_small() {
        let cost = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
        let a = min_cost_assignment(&cost);
        let total: f64 = a.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
        assert_eq!(total, 5.0);
    }

    #[test]
    fn report_formats() {
        let r = evaluate(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap();
        assert_eq!(r.values(), [1.0; 4]);
        assert!(r.to_key_values().contains("f_score_variant pairwise"));
        assert_eq!(r.to_csv_row().split(',').count(), MetricsReport::csv_header().split(',').count());
        let s = summarize(&[r, r]).unwrap();
        assert_eq!(s.std, [0.0; 4]);
        assert!(summarize(&[]).is_none());
    }
}
