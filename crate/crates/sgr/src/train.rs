//! End-to-end training: feature extraction stage, per-scene Adam steps on
//! the joint hinge+adjacency objective, validation tracking, and the
//! four-row ablation sweep.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::format::Checkpoint;
use crate::data::{DatasetManifest, Split};
use crate::error::{Result, SgrError};
use crate::features::fit_scene_extractor;
use crate::graph::{ground_truth_targets, FeatureRecord, GroundTruth};
use crate::losses::{class_weights_from_frequency, total_loss, LossConfig};
use crate::metrics::{evaluate, EvalReport};
use crate::model::{forward, GpnnConfig, GpnnParams, SceneInputs};
use crate::optim::{AdamConfig, AdamState};
use crate::tensor::Tape;

/// Parameter initialization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// Seeded random weights (the normal case).
    Seeded,
    /// All-zero weights: the chance-level diagnostic baseline.
    Zeros,
}

/// Everything a training run needs. Defaults follow the batch CLI.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub ls_epsilon: f64,
    pub use_ls: bool,
    pub use_attention: bool,
    pub use_sageconv: bool,
    pub seed: u64,
    pub hidden_dim: usize,
    pub propagation_steps: usize,
    pub feature_dim: Option<usize>,
    pub extractor_epochs: usize,
    pub extractor_lr: f64,
    /// Evaluate on val every this many epochs (0 = only at the end).
    pub eval_every: usize,
    /// Stop once validation mAP reaches this value.
    pub early_stop_map: Option<f64>,
    pub init: InitScheme,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            lr: 1e-5,
            ls_epsilon: 0.1,
            use_ls: true,
            use_attention: true,
            use_sageconv: true,
            seed: 0,
            hidden_dim: 128,
            propagation_steps: 3,
            feature_dim: None,
            extractor_epochs: 5,
            extractor_lr: 1e-3,
            eval_every: 0,
            early_stop_map: None,
            init: InitScheme::Seeded,
        }
    }
}

impl TrainConfig {
    fn effective_epsilon(&self) -> f64 {
        if self.use_ls {
            self.ls_epsilon
        } else {
            0.0
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub total: f64,
    pub hinge: f64,
    pub adjacency: f64,
    pub val_map: Option<f64>,
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    pub final_report: Option<EvalReport>,
}

/// Train on the manifest's train split and return a self-contained
/// checkpoint. Deterministic for a fixed config.
pub fn train(
    manifest: &DatasetManifest,
    records: &[FeatureRecord],
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    manifest.validate()?;
    if manifest.scenes.len() != records.len() {
        return Err(SgrError::Data("scene/record count mismatch".into()));
    }
    let train_indices = manifest.indices_in(Split::Train);
    let val_indices = manifest.indices_in(Split::Val);
    if train_indices.is_empty() {
        return Err(SgrError::Data("train split is empty".into()));
    }
    let wants_val = cfg.eval_every > 0 || cfg.early_stop_map.is_some();
    if wants_val && val_indices.is_empty() {
        return Err(SgrError::Data("validation split is empty".into()));
    }

    let feature_dim = cfg.feature_dim.unwrap_or(records[0].dim);
    let gpnn = GpnnConfig {
        feature_dim,
        hidden_dim: cfg.hidden_dim,
        propagation_steps: cfg.propagation_steps,
        use_attention: cfg.use_attention,
        use_sageconv: cfg.use_sageconv,
        ..GpnnConfig::default()
    };
    gpnn.validate()?;

    // stage 1: label-smoothing feature extraction
    let extractor = fit_scene_extractor(
        manifest,
        records,
        &train_indices,
        cfg.effective_epsilon(),
        feature_dim,
        cfg.extractor_epochs,
        cfg.extractor_lr,
        cfg.seed,
    )?;
    let extracted: Vec<FeatureRecord> = manifest
        .scenes
        .iter()
        .zip(records)
        .map(|(scene, rec)| extractor.extract_scene(scene, rec))
        .collect::<Result<_>>()?;

    // stage 2: parse-graph network training
    let train_scenes: Vec<&crate::graph::SceneAnnotation> =
        train_indices.iter().map(|&i| &manifest.scenes[i]).collect();
    let (class_weights, _) = class_weights_from_frequency(&train_scenes)?;
    let loss_cfg = LossConfig {
        class_weights,
        ..LossConfig::default()
    };

    let params = match cfg.init {
        InitScheme::Seeded => GpnnParams::init(&gpnn, cfg.seed)?,
        InitScheme::Zeros => GpnnParams::zeros(&gpnn)?,
    };
    let tensors = params.all();
    let mut adam = AdamState::new(&tensors, AdamConfig::with_lr(cfg.lr));

    let inputs: Vec<SceneInputs> = extracted
        .iter()
        .map(SceneInputs::from_features)
        .collect::<Result<_>>()?;
    let truths: Vec<GroundTruth> = manifest
        .scenes
        .iter()
        .map(ground_truth_targets)
        .collect::<Result<_>>()?;

    let eval_split = |params: &GpnnParams| -> Result<EvalReport> {
        let pairs: Vec<(&crate::graph::SceneAnnotation, &FeatureRecord)> = val_indices
            .iter()
            .map(|&i| (&manifest.scenes[i], &extracted[i]))
            .collect();
        evaluate("val", &pairs, params, &gpnn, &loss_cfg)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0xa11ce));
    let mut log = Vec::new();
    let mut final_report = None;
    for epoch in 0..cfg.epochs {
        let mut order = train_indices.clone();
        order.shuffle(&mut rng);
        let mut sums = (0.0, 0.0, 0.0);
        for &i in &order {
            params.zero_grads();
            let tape = Tape::new();
            let trace = forward(&tape, &inputs[i], &params, &gpnn)?;
            let breakdown = total_loss(&tape, &trace, &truths[i], &loss_cfg)?;
            let total = breakdown.total.item()?;
            if !total.is_finite() {
                return Err(SgrError::Numeric(format!(
                    "training diverged at epoch {epoch}: loss {total}"
                )));
            }
            sums.0 += total;
            sums.1 += breakdown.hinge;
            sums.2 += breakdown.adjacency;
            tape.backward(&breakdown.total)?;
            adam.step(&tensors)?;
        }
        let count = order.len() as f64;
        let mut entry = EpochLog {
            epoch: epoch + 1,
            total: sums.0 / count,
            hinge: sums.1 / count,
            adjacency: sums.2 / count,
            val_map: None,
        };
        let due = cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0;
        if due || (cfg.early_stop_map.is_some() && cfg.eval_every == 0) {
            let report = eval_split(&params)?;
            entry.val_map = Some(report.map);
            final_report = Some(report);
        }
        progress(&entry);
        let reached = entry
            .val_map
            .zip(cfg.early_stop_map)
            .map(|(m, target)| m >= target)
            .unwrap_or(false);
        log.push(entry);
        if reached {
            break;
        }
    }
    if cfg.epochs == 0 {
        progress(&EpochLog {
            epoch: 0,
            total: f64::NAN,
            hinge: f64::NAN,
            adjacency: f64::NAN,
            val_map: None,
        });
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            gpnn,
            loss: loss_cfg,
            params,
            extractor,
        },
        log,
        final_report,
    })
}

/// Evaluate a checkpoint on one split of a raw dataset: runs the stored
/// extraction stage, then the parse-graph network.
pub fn evaluate_checkpoint(
    ck: &Checkpoint,
    manifest: &DatasetManifest,
    records: &[FeatureRecord],
    split: Split,
) -> Result<EvalReport> {
    manifest.validate()?;
    if manifest.scenes.len() != records.len() {
        return Err(SgrError::Data("scene/record count mismatch".into()));
    }
    let indices = manifest.indices_in(split);
    if indices.is_empty() {
        return Err(SgrError::Data(format!("split {} is empty", split.as_str())));
    }
    let extracted: Vec<FeatureRecord> = indices
        .iter()
        .map(|&i| ck.extractor.extract_scene(&manifest.scenes[i], &records[i]))
        .collect::<Result<_>>()?;
    let pairs: Vec<(&crate::graph::SceneAnnotation, &FeatureRecord)> = indices
        .iter()
        .zip(&extracted)
        .map(|(&i, rec)| (&manifest.scenes[i], rec))
        .collect();
    evaluate(split.as_str(), &pairs, &ck.params, &ck.gpnn, &ck.loss)
}

// ── ablation sweep ────────────────────────────────────────────────────

/// The four ablation configurations, in table order (full model first).
pub fn ablation_configs() -> [(&'static str, bool, bool, bool); 4] {
    // (name, ls, attention, sageconv)
    [
        ("base+ls+attention+sageconv", true, true, true),
        ("base+ls+attention", true, true, false),
        ("base+ls", true, false, false),
        ("base", false, false, false),
    ]
}

/// Mean and standard deviation of each reported metric across seeds.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub name: &'static str,
    pub ls: bool,
    pub attention: bool,
    pub sageconv: bool,
    pub map_mean: f64,
    pub map_sd: f64,
    pub hinge_mean: f64,
    pub hinge_sd: f64,
    pub auc_mean: f64,
    pub auc_sd: f64,
    /// Per-seed validation mAP, in seed order.
    pub map_per_seed: Vec<f64>,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Train and evaluate every ablation configuration across seeds.
pub fn run_ablation(
    manifest: &DatasetManifest,
    records: &[FeatureRecord],
    seeds: &[u64],
    base: &TrainConfig,
    mut progress: impl FnMut(&'static str, u64, &EvalReport),
) -> Result<Vec<AblationRow>> {
    if seeds.is_empty() {
        return Err(SgrError::Config("ablation needs at least one seed".into()));
    }
    let mut rows = Vec::new();
    for (name, ls, attention, sageconv) in ablation_configs() {
        let mut maps = Vec::new();
        let mut hinges = Vec::new();
        let mut aucs = Vec::new();
        for &seed in seeds {
            let cfg = TrainConfig {
                use_ls: ls,
                use_attention: attention,
                use_sageconv: sageconv,
                seed,
                ..base.clone()
            };
            let outcome = train(manifest, records, &cfg, |_| {})?;
            let report = evaluate_checkpoint(&outcome.checkpoint, manifest, records, Split::Val)?;
            progress(name, seed, &report);
            maps.push(report.map);
            hinges.push(report.mean_hinge);
            aucs.push(report.auc);
        }
        let (map_mean, map_sd) = mean_sd(&maps);
        let (hinge_mean, hinge_sd) = mean_sd(&hinges);
        let (auc_mean, auc_sd) = mean_sd(&aucs);
        rows.push(AblationRow {
            name,
            ls,
            attention,
            sageconv,
            map_mean,
            map_sd,
            hinge_mean,
            hinge_sd,
            auc_mean,
            auc_sd,
            map_per_seed: maps,
        });
    }
    Ok(rows)
}

/// Ablation table in the familiar layout: module columns, then metrics.
pub fn render_ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<6} {:<4} {:<10} {:<9} {:<17} {:<17} {:<17}\n",
        "Base", "LS", "Attention", "SageConv", "mAP", "Hinge", "AUC"
    ));
    let mark = |b: bool| if b { "x" } else { "-" };
    for row in rows {
        out.push_str(&format!(
            "{:<6} {:<4} {:<10} {:<9} {:<17} {:<17} {:<17}\n",
            mark(true),
            mark(row.ls),
            mark(row.attention),
            mark(row.sageconv),
            format!("{:.4}+-{:.4}", row.map_mean, row.map_sd),
            format!("{:.4}+-{:.4}", row.hinge_mean, row.hinge_sd),
            format!("{:.4}+-{:.4}", row.auc_mean, row.auc_sd),
        ));
    }
    out
}
