//! Training losses: weighted multi-label hinge over readout scores and
//! binary cross-entropy over predicted adjacency.

use crate::error::{Result, SgrError};
use crate::graph::{GroundTruth, SceneAnnotation, NUM_INTERACTIONS};
use crate::model::{AdjacencyProbs, ForwardTrace};
use crate::tensor::{Tape, Tensor};

/// Probability clamp applied inside logarithms.
pub const PROB_CLAMP: f64 = 1e-12;

/// Loss weighting. `class_weights` multiply per-class hinge terms;
/// `adjacency_weight` scales the link-supervision term in the total.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub class_weights: [f64; NUM_INTERACTIONS],
    pub margin: f64,
    pub adjacency_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            class_weights: [1.0; NUM_INTERACTIONS],
            margin: 1.0,
            adjacency_weight: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.class_weights.iter().any(|&w| !(w > 0.0)) {
            return Err(SgrError::Config("class weights must all be positive".into()));
        }
        if !self.margin.is_finite() || !self.adjacency_weight.is_finite() {
            return Err(SgrError::Config("margin and adjacency weight must be finite".into()));
        }
        Ok(())
    }
}

/// Weighted multi-class multi-label hinge over pre-sigmoid scores:
/// mean over all n*12 slots of w_k * max(0, margin - y * s), with
/// y in {-1, +1} mapped from the binary targets. Subgradient 0 at the kink.
pub fn hinge_loss(
    tape: &Tape,
    node_scores: &Tensor,
    targets: &[u8],
    cfg: &LossConfig,
) -> Result<Tensor> {
    cfg.validate()?;
    if node_scores.rank() != 2 || node_scores.shape()[1] != NUM_INTERACTIONS {
        return Err(SgrError::Dimension(format!(
            "node scores must be n x {NUM_INTERACTIONS}, got {:?}",
            node_scores.shape()
        )));
    }
    let n = node_scores.shape()[0];
    if targets.len() != n * NUM_INTERACTIONS {
        return Err(SgrError::Dimension(format!(
            "targets hold {} slots for {} score slots",
            targets.len(),
            n * NUM_INTERACTIONS
        )));
    }
    if targets.iter().any(|&t| t > 1) {
        return Err(SgrError::Contract("targets must be binary".into()));
    }

    let signs: Vec<f64> = targets.iter().map(|&t| if t == 1 { 1.0 } else { -1.0 }).collect();
    let mut weights = Vec::with_capacity(n * NUM_INTERACTIONS);
    for _ in 0..n {
        weights.extend_from_slice(&cfg.class_weights);
    }
    let y = Tensor::from_vec(node_scores.shape(), signs)?;
    let w = Tensor::from_vec(node_scores.shape(), weights)?;
    let margin = Tensor::full(node_scores.shape(), cfg.margin)?;

    let violation = tape.relu(&tape.sub(&margin, &tape.mul(&y, node_scores)?)?)?;
    let weighted = tape.mul(&violation, &w)?;
    tape.scale(&tape.sum(&weighted, None)?, 1.0 / (n * NUM_INTERACTIONS) as f64)
}

/// Mean binary cross-entropy over the strictly-upper-triangular pair
/// probabilities, with probabilities clamped at [`PROB_CLAMP`] inside the
/// logs. The predicted side is symmetric by construction; the target matrix
/// must be symmetric with a zero diagonal.
pub fn adjacency_loss(tape: &Tape, adjacency: &AdjacencyProbs, targets: &[u8]) -> Result<Tensor> {
    let n = adjacency.num_nodes;
    if targets.len() != n * n {
        return Err(SgrError::Dimension(format!(
            "adjacency targets hold {} entries for {n} nodes",
            targets.len()
        )));
    }
    for a in 0..n {
        if targets[a * n + a] != 0 {
            return Err(SgrError::Contract(format!(
                "adjacency target diagonal nonzero at {a}"
            )));
        }
        for b in 0..n {
            if targets[a * n + b] != targets[b * n + a] {
                return Err(SgrError::Contract(format!(
                    "adjacency targets asymmetric at ({a}, {b})"
                )));
            }
            if targets[a * n + b] > 1 {
                return Err(SgrError::Contract("adjacency targets must be binary".into()));
            }
        }
    }

    let mut terms = Vec::with_capacity(n * (n - 1) / 2);
    let one = Tensor::scalar(1.0)?;
    for a in 0..n {
        for b in (a + 1)..n {
            let p = adjacency.at(a, b);
            let t = f64::from(targets[a * n + b]);
            let ln_p = tape.ln_clamped(p, PROB_CLAMP)?;
            let ln_not = tape.ln_clamped(&tape.sub(&one, p)?, PROB_CLAMP)?;
            terms.push(tape.add(&tape.scale(&ln_p, -t)?, &tape.scale(&ln_not, -(1.0 - t))?)?);
        }
    }
    let total = tape.sum_vecs(&terms)?;
    tape.scale(&total, 1.0 / terms.len() as f64)
}

/// Composite training loss and its plain-valued components.
pub struct LossBreakdown {
    pub total: Tensor,
    pub hinge: f64,
    pub adjacency: f64,
}

/// hinge + adjacency_weight * adjacency, evaluated from one forward trace.
pub fn total_loss(
    tape: &Tape,
    trace: &ForwardTrace,
    truth: &GroundTruth,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    let hinge = hinge_loss(tape, &trace.node_scores, &truth.labels, cfg)?;
    let adj = adjacency_loss(tape, &trace.adjacency, &truth.adjacency)?;
    let total = tape.add(&hinge, &tape.scale(&adj, cfg.adjacency_weight)?)?;
    Ok(LossBreakdown {
        hinge: hinge.item()?,
        adjacency: adj.item()?,
        total,
    })
}

/// Inverse-frequency class weights over node-label slots:
/// w_k = total_positives / (12 * positives_k) for classes with at least one
/// positive; absent classes get weight 1 and are reported separately.
pub fn class_weights_from_frequency(
    scenes: &[&SceneAnnotation],
) -> Result<([f64; NUM_INTERACTIONS], Vec<usize>)> {
    if scenes.is_empty() {
        return Err(SgrError::Data("cannot derive class weights from an empty dataset".into()));
    }
    let mut positives = [0usize; NUM_INTERACTIONS];
    for scene in scenes {
        let gt = crate::graph::ground_truth_targets(scene)?;
        for v in 0..gt.num_nodes {
            for (k, count) in positives.iter_mut().enumerate() {
                if gt.has_label(v, k) {
                    *count += 1;
                }
            }
        }
    }
    let total: usize = positives.iter().sum();
    let mut weights = [1.0; NUM_INTERACTIONS];
    let mut absent = Vec::new();
    for k in 0..NUM_INTERACTIONS {
        if positives[k] == 0 {
            absent.push(k);
        } else {
            weights[k] = total as f64 / (NUM_INTERACTIONS as f64 * positives[k] as f64);
        }
    }
    Ok((weights, absent))
}
