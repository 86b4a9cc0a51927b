//! External clustering measures: accuracy under the best label matching,
//! NMI, ARI, pairwise precision/recall/F1 and purity.
//!
//! Labels are arbitrary integers; only the partition they induce matters.

use pathfinding::prelude::{kuhn_munkres, Matrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `c_pred x c_true` counts; classes are the sorted distinct label values.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
    pred_sizes: Vec<u64>,
    true_sizes: Vec<u64>,
    n: u64,
}

fn dense_ids(labels: &[usize]) -> (usize, Vec<usize>) {
    let mut values: Vec<usize> = labels.to_vec();
    values.sort_unstable();
    values.dedup();
    let ids = labels
        .iter()
        .map(|l| values.binary_search(l).expect("value present"))
        .collect();
    (values.len(), ids)
}

impl ContingencyTable {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::InvalidInput(format!(
                "label vectors differ in length: {} predicted vs {} true",
                pred.len(),
                truth.len()
            )));
        }
        let (cp, pid) = dense_ids(pred);
        let (ct, tid) = dense_ids(truth);
        let mut counts = vec![vec![0u64; ct]; cp];
        for (p, t) in pid.iter().zip(&tid) {
            counts[*p][*t] += 1;
        }
        let pred_sizes = counts.iter().map(|r| r.iter().sum()).collect();
        let true_sizes = (0..ct).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(Self {
            counts,
            pred_sizes,
            true_sizes,
            n: pred.len() as u64,
        })
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }
}

fn pairs(x: u64) -> f64 {
    (x as f64) * (x.saturating_sub(1) as f64) / 2.0
}

/// Fraction of points matched under the best one-to-one mapping of predicted
/// clusters to true classes.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(pred, truth)?;
    if t.n == 0 {
        return Ok(1.0);
    }
    let size = t.counts.len().max(t.true_sizes.len());
    let mut w = Matrix::new(size, size, 0i64);
    for (i, row) in t.counts.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            w[(i, j)] = *v as i64;
        }
    }
    let (matched, _) = kuhn_munkres(&w);
    Ok(matched as f64 / t.n as f64)
}

fn entropy(sizes: &[u64], n: f64) -> f64 {
    sizes
        .iter()
        .filter(|s| **s > 0)
        .map(|s| {
            let p = *s as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Mutual information over the arithmetic mean of the two entropies.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(pred, truth)?;
    let n = t.n as f64;
    let hp = entropy(&t.pred_sizes, n);
    let ht = entropy(&t.true_sizes, n);
    if hp == 0.0 || ht == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let nij = nij as f64;
                mi += nij / n * (n * nij / (t.pred_sizes[i] as f64 * t.true_sizes[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (0.5 * (hp + ht))).clamp(0.0, 1.0))
}

/// Adjusted Rand index from pair counts, evaluated as one ratio of exact
/// integers. When the chance-corrected denominator vanishes (both partitions
/// trivial) identical partitions score 1 and anything else 0.
pub fn ari(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(pred, truth)?;
    let ipairs = |x: u64| -> i128 { (x as i128) * (x as i128 - 1).max(0) / 2 };
    let index: i128 = t.counts.iter().flatten().map(|v| ipairs(*v)).sum();
    let a: i128 = t.pred_sizes.iter().map(|v| ipairs(*v)).sum();
    let b: i128 = t.true_sizes.iter().map(|v| ipairs(*v)).sum();
    let total = ipairs(t.n);
    if total == 0 {
        return Ok(1.0);
    }
    // (index - ab/total) / ((a+b)/2 - ab/total), scaled by 2 total
    let num = 2 * (index * total - a * b);
    let den = (a + b) * total - 2 * a * b;
    if den == 0 {
        return Ok(if 2 * index == a + b { 1.0 } else { 0.0 });
    }
    Ok(num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairwiseScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 over same-cluster pairs.
pub fn pairwise_prf(pred: &[usize], truth: &[usize]) -> Result<PairwiseScores> {
    let t = ContingencyTable::new(pred, truth)?;
    let tp: f64 = t.counts.iter().flatten().map(|v| pairs(*v)).sum();
    let pred_pairs: f64 = t.pred_sizes.iter().map(|v| pairs(*v)).sum();
    let true_pairs: f64 = t.true_sizes.iter().map(|v| pairs(*v)).sum();
    if pred_pairs == 0.0 && true_pairs == 0.0 {
        return Ok(PairwiseScores {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        });
    }
    let ratio = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };
    let precision = ratio(tp, pred_pairs);
    let recall = ratio(tp, true_pairs);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    Ok(PairwiseScores {
        precision,
        recall,
        f1,
    })
}

/// `(1/n) sum_clusters max_class overlap`
pub fn purity(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let t = ContingencyTable::new(pred, truth)?;
    if t.n == 0 {
        return Ok(1.0);
    }
    let hit: u64 = t.counts.iter().map(|r| r.iter().copied().max().unwrap_or(0)).sum();
    Ok(hit as f64 / t.n as f64)
}

/// The seven reported measures, keyed like the usual results tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "Fscore")]
    pub fscore: f64,
    #[serde(rename = "Precision")]
    pub precision: f64,
    #[serde(rename = "Recall")]
    pub recall: f64,
    #[serde(rename = "NMI")]
    pub nmi: f64,
    #[serde(rename = "ARI")]
    pub ari: f64,
    #[serde(rename = "ACC")]
    pub acc: f64,
    #[serde(rename = "Purity")]
    pub purity: f64,
}

impl MetricsReport {
    pub const COLUMNS: [&'static str; 7] = ["Fscore", "Precision", "Recall", "NMI", "ARI", "ACC", "Purity"];

    pub fn evaluate(pred: &[usize], truth: &[usize]) -> Result<Self> {
        let prf = pairwise_prf(pred, truth)?;
        Ok(Self {
            fscore: prf.f1,
            precision: prf.precision,
            recall: prf.recall,
            nmi: nmi(pred, truth)?,
            ari: ari(pred, truth)?,
            acc: accuracy(pred, truth)?,
            purity: purity(pred, truth)?,
        })
    }

    pub fn values(&self) -> [f64; 7] {
        [
            self.fscore,
            self.precision,
            self.recall,
            self.nmi,
            self.ari,
            self.acc,
            self.purity,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PRED: [usize; 6] = [0, 0, 1, 1, 2, 2];
    const TRUTH: [usize; 6] = [0, 0, 0, 1, 1, 1];

    #[test]
    fn identical_labelings() {
        let x = [3, 3, 1, 1, 7, 7, 7];
        assert_eq!(accuracy(&x, &x).unwrap(), 1.0);
        assert!((nmi(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(ari(&x, &x).unwrap(), 1.0);
        let p = pairwise_prf(&x, &x).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        assert_eq!(purity(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn relabeled_prediction_is_perfect() {
        let truth = [0, 0, 1, 1, 2];
        let pred = [2, 2, 0, 0, 1];
        assert_eq!(accuracy(&pred, &truth).unwrap(), 1.0);
    }

    #[test]
    fn six_point_example() {
        assert!((accuracy(&PRED, &TRUTH).unwrap() - 4.0 / 6.0).abs() < 1e-15);
        assert!((purity(&PRED, &TRUTH).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        // same-cluster pairs: pred {01,23,45}, truth {01,02,12,34,35,45}; TP = {01,45}
        let p = pairwise_prf(&PRED, &TRUTH).unwrap();
        assert!((p.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.recall - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn constant_prediction() {
        let truth = [0, 0, 0, 1, 1, 1];
        let pred = [4; 6];
        assert_eq!(nmi(&pred, &truth).unwrap(), 0.0);
        assert_eq!(ari(&pred, &truth).unwrap(), 0.0);
        assert_eq!(purity(&pred, &truth).unwrap(), 0.5);
        assert_eq!(accuracy(&pred, &truth).unwrap(), 0.5);
    }

    #[test]
    fn singleton_prediction_has_zero_recall() {
        let truth = [0, 0, 1, 1];
        let pred = [0, 1, 2, 3];
        let p = pairwise_prf(&pred, &truth).unwrap();
        assert_eq!(p.recall, 0.0);
        let s = pairwise_prf(&pred, &pred).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn length_mismatch() {
        assert!(accuracy(&[0, 1], &[0]).is_err());
        assert!(nmi(&[0, 1], &[0]).is_err());
        assert!(ari(&[0, 1], &[0]).is_err());
        assert!(pairwise_prf(&[0, 1], &[0]).is_err());
        assert!(purity(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn nmi_direct_formula() {
        // table [[2,0],[1,1],[0,2]]
        let n = 6.0_f64;
        let pi = [2.0, 2.0, 2.0];
        let tj = [3.0, 3.0];
        let cells = [(0, 0, 2.0), (1, 0, 1.0), (1, 1, 1.0), (2, 1, 2.0)];
        let mi: f64 = cells
            .iter()
            .map(|&(i, j, v): &(usize, usize, f64)| v / n * (n * v / (pi[i] * tj[j])).ln())
            .sum();
        let h = |s: &[f64]| -> f64 { s.iter().map(|x| -(x / n) * (x / n).ln()).sum() };
        let expect = mi / (0.5 * (h(&pi) + h(&tj)));
        assert!((nmi(&PRED, &TRUTH).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn report_keys() {
        let r = MetricsReport::evaluate(&PRED, &TRUTH).unwrap();
        let v = serde_json::to_value(r).unwrap();
        for k in MetricsReport::COLUMNS {
            assert!(v.get(k).is_some(), "{k}");
        }
    }
}
