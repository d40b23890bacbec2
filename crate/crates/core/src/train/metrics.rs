//! Ranking metrics for multi-label evaluation.

use std::cmp::Ordering;
use std::f64::consts::{PI, SQRT_2};

use serde::Serialize;

use crate::error::{shape, Result};

/// Non-interpolated average precision: the mean, over positives, of the
/// precision at each positive's rank. Scores are ranked descending; equal
/// scores keep their input order. `None` without positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return None;
    }
    let order = descending(scores);
    let (mut hits, mut sum) = (0usize, 0.0);
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / n_pos as f64)
}

/// Stable descending order of `scores`.
fn descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    order
}

/// Area under the ROC curve as the Mann–Whitney statistic, from the rank
/// sum of the positives with tied scores sharing their average rank.
/// `None` unless both classes are present.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share their mean.
        let mid = (i + j + 2) as f64 / 2.0;
        let pos = order[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum += mid * pos as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Area under the ROC curve by trapezoidal integration over the distinct
/// score thresholds.
pub fn auc_trapezoid(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let order = descending(scores);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area2 = 0usize; // twice the area in units of (1 fp) × (1 tp)
    let mut i = 0;
    while i < order.len() {
        let (tp0, fp0) = (tp, fp);
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - fp0) * (tp + tp0);
    }
    Some(area2 as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

/// Inverse standard normal CDF: a rational approximation refined by one
/// Halley step on `erfc`.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383_577_518_672_69e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    const LOW: f64 = 0.02425;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let e = 0.5 * libm::erfc(-x / SQRT_2) - p;
    let u = e * (2.0 * PI).sqrt() * (x * x / 2.0).exp();
    x -= u / (1.0 + x * u / 2.0);
    x
}

/// Sensitivity index from AUC: `√2 · Φ⁻¹(auc)`. Saturates to ±∞ at 0 and 1.
pub fn d_prime(auc: f64) -> f64 {
    SQRT_2 * inverse_normal_cdf(auc)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class_index: usize,
    /// `None` when the class has no positive eval clip.
    pub ap: Option<f64>,
    /// `None` when the eval set lacks positives or negatives for the class.
    pub auc: Option<f64>,
    pub d_prime: Option<f64>,
    pub n_positives: usize,
    pub n_eval_clips: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MacroMetrics {
    pub map: f64,
    pub mauc: f64,
    /// `d_prime(mauc)`.
    pub d_prime: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub per_class: Vec<ClassMetrics>,
    #[serde(rename = "macro")]
    pub macro_avg: MacroMetrics,
    /// Classes left out of the macro means.
    pub excluded: Vec<usize>,
}

impl MetricReport {
    /// `scores` and `targets` are row-major `[N, K]`; a target above 0.5
    /// counts as positive. Macro means run over classes with at least one
    /// positive (AP) or with both positives and negatives (AUC).
    pub fn compute(scores: &[f32], targets: &[f32], n_classes: usize) -> Result<Self> {
        if n_classes == 0 || scores.len() != targets.len() || !scores.len().is_multiple_of(n_classes) {
            return Err(shape(format!(
                "{} scores / {} targets for {n_classes} classes",
                scores.len(),
                targets.len()
            )));
        }
        let n = scores.len() / n_classes;
        let per_class: Vec<ClassMetrics> = (0..n_classes)
            .map(|k| {
                let s: Vec<f64> = (0..n).map(|i| scores[i * n_classes + k] as f64).collect();
                let l: Vec<bool> = (0..n).map(|i| targets[i * n_classes + k] > 0.5).collect();
                let auc = auc_roc(&s, &l);
                ClassMetrics {
                    class_index: k,
                    ap: average_precision(&s, &l),
                    auc,
                    d_prime: auc.map(d_prime),
                    n_positives: l.iter().filter(|&&x| x).count(),
                    n_eval_clips: n,
                }
            })
            .collect();
        let aps: Vec<f64> = per_class.iter().filter_map(|c| c.ap).collect();
        let aucs: Vec<f64> = per_class.iter().filter_map(|c| c.auc).collect();
        let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        let mauc = mean(&aucs);
        let excluded = per_class.iter().filter(|c| c.ap.is_none()).map(|c| c.class_index).collect();
        Ok(MetricReport {
            macro_avg: MacroMetrics {
                map: mean(&aps),
                mauc,
                d_prime: d_prime(mauc),
            },
            per_class,
            excluded,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metric report serializes")
    }

    /// Fixed-width text table, one row per class then the macro row.
    pub fn to_table(&self, class_names: Option<&[String]>) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "     -".to_string(), |x| format!("{x:6.3}"));
        let mut s = format!("{:<32} {:>6} {:>6} {:>7} {:>5}\n", "class", "AP", "AUC", "d'", "pos");
        for c in &self.per_class {
            let name = class_names
                .and_then(|n| n.get(c.class_index))
                .cloned()
                .unwrap_or_else(|| c.class_index.to_string());
            s += &format!(
                "{:<32} {} {} {:>7} {:>5}\n",
                truncate(&name, 32),
                fmt(c.ap),
                fmt(c.auc),
                c.d_prime.map_or("-".into(), |d| format!("{d:.3}")),
                c.n_positives
            );
        }
        s += &format!(
            "{:<32} {:6.3} {:6.3} {:7.3}\n",
            "macro", self.macro_avg.map, self.macro_avg.mauc, self.macro_avg.d_prime
        );
        if !self.excluded.is_empty() {
            s += &format!("excluded (no positives): {:?}\n", self.excluded);
        }
        s
    }
}

fn truncate(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

/// One row of a class-wise report ordered by training-set frequency.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClasswiseRow {
    pub class_index: usize,
    pub train_clips: usize,
    pub ap: Option<f64>,
}

/// Per-class AP sorted by descending training clip count (ties by index).
pub fn classwise_report(report: &MetricReport, train_clip_counts: &[usize]) -> Result<Vec<ClasswiseRow>> {
    if train_clip_counts.len() != report.per_class.len() {
        return Err(shape(format!(
            "{} clip counts for {} classes",
            train_clip_counts.len(),
            report.per_class.len()
        )));
    }
    let mut rows: Vec<ClasswiseRow> = report
        .per_class
        .iter()
        .map(|c| ClasswiseRow {
            class_index: c.class_index,
            train_clips: train_clip_counts[c.class_index],
            ap: c.ap,
        })
        .collect();
    rows.sort_by(|a, b| b.train_clips.cmp(&a.train_clips).then(a.class_index.cmp(&b.class_index)));
    Ok(rows)
}
