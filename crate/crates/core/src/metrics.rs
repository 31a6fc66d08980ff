//! Evaluation statistics: AUROC, thresholded confusion metrics,
//! biomarker averaging, and the Welch significance test.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::STUDIED_BIOMARKERS;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::Real;

/// Mann-Whitney AUROC: (#correctly-ordered pairs + 0.5 * ties) / (n+ * n-),
/// computed via average ranks in O(n log n).
pub fn auroc<F: Scalar>(scores: &[F], labels: &[u8]) -> Result<F> {
    if scores.len() != labels.len() {
        return Err(Error::DimMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InsufficientData(format!(
            "auroc needs both classes, got {n_pos} positive / {n_neg} negative"
        )));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::InvalidArgument("labels must be binary".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // average ranks over tie groups (1-indexed)
    let n = order.len();
    let mut rank_sum_pos = F::zero();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = F::from_f64_lossy((i + 1 + j) as f64 / 2.0);
        for &k in &order[i..j] {
            if labels[k] == 1 {
                rank_sum_pos = rank_sum_pos + avg_rank;
            }
        }
        i = j;
    }
    let np = F::from_usize_lossy(n_pos);
    let nn = F::from_usize_lossy(n_neg);
    let half = F::from_f64_lossy(0.5);
    let u = rank_sum_pos - np * (np + F::one()) * half;
    Ok(u / (np * nn))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub accuracy: Real,
    pub f1: Real,
    pub precision: Real,
    pub sensitivity: Real,
    pub specificity: Real,
}

/// Standard confusion-matrix metrics at a score threshold (default 0.5).
/// F1 is defined as 0 when precision + recall = 0.
pub fn confusion_metrics(scores: &[Real], labels: &[u8], threshold: Real) -> Result<ConfusionMetrics> {
    if scores.len() != labels.len() {
        return Err(Error::DimMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::InvalidArgument("labels must be binary".into()));
    }
    let (mut tp, mut fp, mut tn, mut fne) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels.iter()) {
        let pred = s >= threshold;
        match (pred, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fne += 1,
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as Real / den as Real };
    let precision = ratio(tp, tp + fp);
    let sensitivity = ratio(tp, tp + fne);
    let f1 = if precision + sensitivity == 0.0 {
        0.0
    } else {
        2.0 * precision * sensitivity / (precision + sensitivity)
    };
    Ok(ConfusionMetrics {
        accuracy: ratio(tp + tn, scores.len()),
        f1,
        precision,
        sensitivity,
        specificity: ratio(tn, tn + fp),
    })
}

/// Arithmetic mean over exactly the five studied biomarkers.
pub fn average_over_biomarkers(per_biomarker: &BTreeMap<String, Real>) -> Result<Real> {
    for name in STUDIED_BIOMARKERS {
        if !per_biomarker.contains_key(name) {
            return Err(Error::UnknownKey(format!("missing biomarker {name}")));
        }
    }
    if per_biomarker.len() != STUDIED_BIOMARKERS.len() {
        return Err(Error::InvalidArgument(
            "expected exactly the 5 studied biomarkers".into(),
        ));
    }
    Ok(per_biomarker.values().sum::<Real>() / STUDIED_BIOMARKERS.len() as Real)
}

/// Mean of per-column AUROC over an N x K score/target matrix pair.
/// Errors name the first degenerate (single-class) column.
pub fn multilabel_auroc(scores: &[Vec<Real>], targets: &[Vec<u8>]) -> Result<Real> {
    if scores.len() != targets.len() || scores.is_empty() {
        return Err(Error::DimMismatch {
            expected: scores.len(),
            got: targets.len(),
        });
    }
    let k = scores[0].len();
    let mut total = 0.0;
    for col in 0..k {
        let s: Vec<Real> = scores.iter().map(|r| r[col]).collect();
        let t: Vec<u8> = targets.iter().map(|r| r[col]).collect();
        total += auroc(&s, &t).map_err(|e| match e {
            Error::InsufficientData(_) => {
                Error::InsufficientData(format!("column {col} has a single class"))
            }
            other => other,
        })?;
    }
    Ok(total / k as Real)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: Real,
    pub p: Real,
    pub significant: bool,
}

/// Two-sample Welch t-test (two-sided). With zero variance on both sides,
/// p is 1.0 when the means agree and 0.0 otherwise.
pub fn paired_t_test(runs_a: &[Real], runs_b: &[Real], alpha: Real) -> Result<TTestResult> {
    let (na, nb) = (runs_a.len(), runs_b.len());
    if na < 2 || nb < 2 {
        return Err(Error::InsufficientData(format!(
            "t-test needs >= 2 runs per population, got {na} and {nb}"
        )));
    }
    let mean = |xs: &[Real]| xs.iter().sum::<Real>() / xs.len() as Real;
    let var = |xs: &[Real], m: Real| {
        xs.iter().map(|x| (x - m) * (x - m)).sum::<Real>() / (xs.len() - 1) as Real
    };
    let (ma, mb) = (mean(runs_a), mean(runs_b));
    let (va, vb) = (var(runs_a, ma), var(runs_b, mb));
    let se2 = va / na as Real + vb / nb as Real;

    if se2 == 0.0 {
        let equal = ma == mb;
        return Ok(TTestResult {
            t: if equal { 0.0 } else { Real::INFINITY },
            p: if equal { 1.0 } else { 0.0 },
            significant: !equal,
        });
    }

    let t = (ma - mb) / se2.sqrt();
    // Welch-Satterthwaite degrees of freedom
    let df = se2 * se2
        / ((va / na as Real).powi(2) / (na as Real - 1.0)
            + (vb / nb as Real).powi(2) / (nb as Real - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::Numeric(format!("t distribution: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(TTestResult {
        t,
        p,
        significant: p < alpha,
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[Real], ys: &[Real]) -> Result<Real> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InsufficientData("spearman needs >= 2 paired values".into()));
    }
    let rank = |vals: &[Real]| -> Vec<Real> {
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let mut ranks = vec![0.0; vals.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j < order.len() && vals[order[j]] == vals[order[i]] {
                j += 1;
            }
            let avg = (i + 1 + j) as Real / 2.0;
            for &k in &order[i..j] {
                ranks[k] = avg;
            }
            i = j;
        }
        ranks
    };
    let (rx, ry) = (rank(xs), rank(ys));
    let n = xs.len() as Real;
    let mx = rx.iter().sum::<Real>() / n;
    let my = ry.iter().sum::<Real>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(ry.iter()) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::Numeric("spearman undefined for constant input".into()));
    }
    Ok(cov / (vx * vy).sqrt())
}

/// Per-biomarker metric suite plus averaged variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_biomarker: BTreeMap<String, BiomarkerMetrics>,
    pub averaged: Option<BiomarkerMetrics>,
    pub multilabel_auroc: Option<Real>,
    pub seed: u64,
    pub significance_test: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerMetrics {
    pub accuracy: Real,
    pub f1: Real,
    pub auroc: Real,
    pub precision: Real,
    pub sensitivity: Real,
    pub specificity: Real,
}

impl BiomarkerMetrics {
    pub fn from_scores(scores: &[Real], labels: &[u8]) -> Result<Self> {
        let cm = confusion_metrics(scores, labels, 0.5)?;
        Ok(BiomarkerMetrics {
            accuracy: cm.accuracy,
            f1: cm.f1,
            auroc: auroc(scores, labels)?,
            precision: cm.precision,
            sensitivity: cm.sensitivity,
            specificity: cm.specificity,
        })
    }
}

impl MetricReport {
    pub fn new(per_biomarker: BTreeMap<String, BiomarkerMetrics>, seed: u64) -> Self {
        let averaged = if STUDIED_BIOMARKERS
            .iter()
            .all(|b| per_biomarker.contains_key(*b))
            && per_biomarker.len() == STUDIED_BIOMARKERS.len()
        {
            let n = per_biomarker.len() as Real;
            let sum = |f: fn(&BiomarkerMetrics) -> Real| {
                per_biomarker.values().map(f).sum::<Real>() / n
            };
            Some(BiomarkerMetrics {
                accuracy: sum(|m| m.accuracy),
                f1: sum(|m| m.f1),
                auroc: sum(|m| m.auroc),
                precision: sum(|m| m.precision),
                sensitivity: sum(|m| m.sensitivity),
                specificity: sum(|m| m.specificity),
            })
        } else {
            None
        };
        MetricReport {
            per_biomarker,
            averaged,
            multilabel_auroc: None,
            seed,
            significance_test: "welch-unpaired".into(),
        }
    }
}
