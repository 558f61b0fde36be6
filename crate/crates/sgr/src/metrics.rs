//! Evaluation metrics: per-class average precision, mAP, pooled recall,
//! macro ROC AUC, and mean hinge, assembled into an [`EvalReport`].

use crate::error::{Result, SgrError};
use crate::graph::{ground_truth_targets, FeatureRecord, SceneAnnotation, NUM_INTERACTIONS};
use crate::losses::{hinge_loss, LossConfig};
use crate::model::{infer_with_scores, GpnnConfig, GpnnParams};
use crate::tensor::{Tape, Tensor};

/// Metric bundle for one dataset split.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub split: String,
    pub num_scenes: usize,
    /// AP per class; None where the split has no positive example.
    pub per_class_ap: [Option<f64>; NUM_INTERACTIONS],
    /// Mean AP over classes with at least one positive.
    pub map: f64,
    /// Recall pooled over every (node, class) slot at threshold 0.5.
    pub recall: f64,
    /// Macro ROC AUC over classes with both a positive and a negative.
    pub auc: f64,
    /// Mean per-scene hinge loss.
    pub mean_hinge: f64,
    /// Positive slot count per class.
    pub positive_counts: [usize; NUM_INTERACTIONS],
}

fn check_finite_scores(scores: &[f64]) -> Result<()> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(SgrError::Contract("scores must be finite".into()));
    }
    Ok(())
}

/// Average precision of one score list: items are ranked by descending
/// score (ties broken by original index), and AP is the mean over positive
/// items of the precision at their rank.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(SgrError::Dimension(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    check_finite_scores(scores)?;
    let total_pos = labels.iter().filter(|&&l| l == 1).count();
    if total_pos == 0 {
        return Err(SgrError::Data(
            "average precision undefined without a positive example".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    let mut seen = 0usize;
    let mut acc = 0.0;
    for (rank0, &i) in order.iter().enumerate() {
        if labels[i] == 1 {
            seen += 1;
            acc += seen as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(acc / total_pos as f64)
}

/// Mean AP over the classes that have at least one positive in `pooled`.
/// `pooled[k]` holds the (score, label) pairs of class k.
pub fn mean_average_precision(pooled: &[Vec<(f64, u8)>]) -> Result<f64> {
    let mut aps = Vec::new();
    for class in pooled {
        if class.iter().any(|&(_, l)| l == 1) {
            let scores: Vec<f64> = class.iter().map(|&(s, _)| s).collect();
            let labels: Vec<u8> = class.iter().map(|&(_, l)| l).collect();
            aps.push(average_precision(&scores, &labels)?);
        }
    }
    if aps.is_empty() {
        return Err(SgrError::Data("no class has a positive example".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Recall pooled over all slots: TP / (TP + FN) with predictions taken as
/// score > threshold.
pub fn micro_recall(scores: &[f64], labels: &[u8], threshold: f64) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(SgrError::Dimension(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    check_finite_scores(scores)?;
    let mut tp = 0usize;
    let mut fn_ = 0usize;
    for (&s, &l) in scores.iter().zip(labels) {
        if l == 1 {
            if s > threshold {
                tp += 1;
            } else {
                fn_ += 1;
            }
        }
    }
    if tp + fn_ == 0 {
        return Err(SgrError::Data("recall undefined without positives".into()));
    }
    Ok(tp as f64 / (tp + fn_) as f64)
}

/// ROC AUC by the Mann-Whitney rank statistic with midranks for ties
/// (tied positive/negative pairs count one half).
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(SgrError::Dimension(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    check_finite_scores(scores)?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(SgrError::Data(
            "auc needs at least one positive and one negative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    // midrank sum over positives, 1-based ranks
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] == 1 {
                rank_sum += midrank;
            }
        }
        i = j + 1;
    }
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Macro AUC over the classes of `pooled` that carry both a positive and a
/// negative example.
pub fn macro_auc(pooled: &[Vec<(f64, u8)>]) -> Result<f64> {
    let mut aucs = Vec::new();
    for class in pooled {
        let has_pos = class.iter().any(|&(_, l)| l == 1);
        let has_neg = class.iter().any(|&(_, l)| l == 0);
        if has_pos && has_neg {
            let scores: Vec<f64> = class.iter().map(|&(s, _)| s).collect();
            let labels: Vec<u8> = class.iter().map(|&(_, l)| l).collect();
            aucs.push(roc_auc(&scores, &labels)?);
        }
    }
    if aucs.is_empty() {
        return Err(SgrError::Data(
            "no class has both positive and negative examples".into(),
        ));
    }
    Ok(aucs.iter().sum::<f64>() / aucs.len() as f64)
}

/// Run inference over a split and fill every report field. Deterministic:
/// scenes are pooled in the order given.
pub fn evaluate(
    split_name: &str,
    scenes: &[(&SceneAnnotation, &FeatureRecord)],
    params: &GpnnParams,
    cfg: &GpnnConfig,
    loss_cfg: &LossConfig,
) -> Result<EvalReport> {
    if scenes.is_empty() {
        return Err(SgrError::Data("cannot evaluate an empty split".into()));
    }
    let mut pooled: Vec<Vec<(f64, u8)>> = vec![Vec::new(); NUM_INTERACTIONS];
    let mut hinge_sum = 0.0;
    for (scene, features) in scenes {
        let truth = ground_truth_targets(scene)?;
        let (state, scores) = infer_with_scores(features, params, cfg)?;
        for v in 0..state.num_nodes {
            for k in 0..NUM_INTERACTIONS {
                let label = u8::from(truth.has_label(v, k));
                pooled[k].push((state.prob(v, k), label));
            }
        }
        let tape = Tape::no_grad();
        let score_tensor = Tensor::from_vec(&[state.num_nodes, NUM_INTERACTIONS], scores)?;
        hinge_sum += hinge_loss(&tape, &score_tensor, &truth.labels, loss_cfg)?.item()?;
    }

    let mut per_class_ap = [None; NUM_INTERACTIONS];
    let mut positive_counts = [0usize; NUM_INTERACTIONS];
    for k in 0..NUM_INTERACTIONS {
        positive_counts[k] = pooled[k].iter().filter(|&&(_, l)| l == 1).count();
        if positive_counts[k] > 0 {
            let scores: Vec<f64> = pooled[k].iter().map(|&(s, _)| s).collect();
            let labels: Vec<u8> = pooled[k].iter().map(|&(_, l)| l).collect();
            per_class_ap[k] = Some(average_precision(&scores, &labels)?);
        }
    }
    let map = mean_average_precision(&pooled)?;

    let mut flat_scores = Vec::new();
    let mut flat_labels = Vec::new();
    for class in &pooled {
        for &(s, l) in class {
            flat_scores.push(s);
            flat_labels.push(l);
        }
    }
    let recall = micro_recall(&flat_scores, &flat_labels, 0.5)?;
    let auc = macro_auc(&pooled)?;

    Ok(EvalReport {
        split: split_name.to_string(),
        num_scenes: scenes.len(),
        per_class_ap,
        map,
        recall,
        auc,
        mean_hinge: hinge_sum / scenes.len() as f64,
        positive_counts,
    })
}

/// Aligned text table with the familiar metric columns.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "graph scene prediction on split '{}' ({} scenes)\n",
        report.split, report.num_scenes
    ));
    out.push_str(&format!(
        "{:<10} {:<10} {:<10} {:<10}\n",
        "mAP ^", "Hinge v", "Recall ^", "AUC ^"
    ));
    out.push_str(&format!(
        "{:<10.4} {:<10.4} {:<10.4} {:<10.4}\n",
        report.map, report.mean_hinge, report.recall, report.auc
    ));
    out.push_str("\nper-class average precision (positives)\n");
    for k in 0..NUM_INTERACTIONS {
        let ap = match report.per_class_ap[k] {
            Some(v) => format!("{v:.4}"),
            None => "-".to_string(),
        };
        out.push_str(&format!(
            "  {:<22} {:>8}  ({})\n",
            crate::graph::INTERACTION_NAMES[k], ap, report.positive_counts[k]
        ));
    }
    out
}
