//! Task metrics: ROC-AUC for anomaly detection, F1 for classification and
//! NDCG@k for affinity prediction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SplashError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub value: f64,
    pub queries: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub breakdown: BTreeMap<String, f64>,
}

/// Area under the ROC curve as the rank statistic P(s+ > s-) + P(s+ = s-)/2.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(SplashError::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(SplashError::UndefinedMetric(
            "AUC needs both positive and negative labels".into(),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(SplashError::UndefinedMetric("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Midranks over tie groups, summed for positives.
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&idx| labels[idx]).count();
        pos_rank_sum += midrank * pos_in_group as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Scores {
    pub micro: f64,
    pub macro_: f64,
}

/// Micro- and macro-averaged F1 over `n_classes` classes.
///
/// Macro averaging skips classes that appear neither in the truth nor in
/// the predictions.
pub fn f1(predicted: &[usize], truth: &[usize], n_classes: usize) -> Result<F1Scores> {
    if predicted.len() != truth.len() {
        return Err(SplashError::Shape(format!(
            "{} predictions vs {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(SplashError::UndefinedMetric("F1 of an empty set".into()));
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fn_ = vec![0usize; n_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p >= n_classes || t >= n_classes {
            return Err(SplashError::Shape(format!(
                "class index out of range (p={p}, t={t}, classes={n_classes})"
            )));
        }
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fn_[t] += 1;
        }
    }
    let (tp_sum, fp_sum, fn_sum): (usize, usize, usize) =
        (tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    let micro = 2.0 * tp_sum as f64 / (2 * tp_sum + fp_sum + fn_sum) as f64;
    let per_class: Vec<f64> = (0..n_classes)
        .filter(|&c| tp[c] + fp[c] + fn_[c] > 0)
        .map(|c| 2.0 * tp[c] as f64 / (2 * tp[c] + fp[c] + fn_[c]) as f64)
        .collect();
    let macro_ = per_class.iter().sum::<f64>() / per_class.len() as f64;
    Ok(F1Scores { micro, macro_ })
}

/// NDCG@k with the truth values as graded relevances. Predicted ties are
/// ranked by ascending item index.
pub fn ndcg_at_k(predicted: &[f64], truth: &[f64], k: usize) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(SplashError::Shape(format!(
            "{} predicted items vs {} truth items",
            predicted.len(),
            truth.len()
        )));
    }
    if truth.iter().any(|&t| t < 0.0) {
        return Err(SplashError::Format("negative relevance".into()));
    }
    let ideal = dcg(&ranking(truth), truth, k);
    if ideal <= 0.0 {
        return Err(SplashError::UndefinedMetric("all-zero relevance vector".into()));
    }
    Ok(dcg(&ranking(predicted), truth, k) / ideal)
}

fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

fn dcg(order: &[usize], relevance: &[f64], k: usize) -> f64 {
    order
        .iter()
        .take(k)
        .enumerate()
        .map(|(r, &item)| relevance[item] / ((r + 2) as f64).log2())
        .sum()
}

/// Mean NDCG@k over queries, skipping all-zero truth vectors.
pub fn mean_ndcg(predicted: &[Vec<f64>], truth: &[Vec<f64>], k: usize) -> Result<EvalReport> {
    let mut sum = 0.0;
    let mut used = 0usize;
    for (p, t) in predicted.iter().zip(truth) {
        match ndcg_at_k(p, t, k) {
            Ok(v) => {
                sum += v;
                used += 1;
            }
            Err(SplashError::UndefinedMetric(msg)) => log::warn!("skipping query: {msg}"),
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(SplashError::UndefinedMetric("no query with relevance".into()));
    }
    Ok(EvalReport {
        metric: format!("ndcg@{k}"),
        value: sum / used as f64,
        queries: used,
        breakdown: BTreeMap::from([("skipped".to_string(), (predicted.len() - used) as f64)]),
    })
}
