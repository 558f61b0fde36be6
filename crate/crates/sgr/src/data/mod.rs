//! Dataset plumbing: the deterministic synthetic scene generator, dataset
//! manifests with train/val splits, and the on-disk formats (see
//! [`format`]).
//!
//! Synthetic scenes stand in for private surgical annotations: every scene
//! has one tissue node and 1-5 instruments, each instrument independently
//! interacting with the tissue. Features are class-conditioned Gaussians —
//! node features cluster around a per-class centroid, active-edge features
//! around the interaction-class centroid, inactive pairs around a shared
//! background centroid — so the noise level dials task difficulty.

pub mod format;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Result, SgrError};
use crate::graph::{
    FeatureRecord, InteractionLabel, NodeClass, SceneAnnotation, SceneEdge, SceneNode,
    NODE_CLASS_NAMES, NUM_INTERACTIONS,
};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }

    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            other => Err(SgrError::Parse(format!("unknown split {other:?}"))),
        }
    }
}

/// A dataset: scenes plus a split assignment covering each scene once.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub generator_seed: Option<u64>,
    pub scenes: Vec<SceneAnnotation>,
    pub split: BTreeMap<String, Split>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_VERSION {
            return Err(SgrError::Version(format!(
                "manifest version {} unsupported (expected {MANIFEST_VERSION})",
                self.format_version
            )));
        }
        if self.split.len() != self.scenes.len() {
            return Err(SgrError::Data(format!(
                "split covers {} scenes, manifest holds {}",
                self.split.len(),
                self.scenes.len()
            )));
        }
        for scene in &self.scenes {
            if !self.split.contains_key(&scene.scene_id) {
                return Err(SgrError::Data(format!(
                    "scene {} has no split assignment",
                    scene.scene_id
                )));
            }
        }
        Ok(())
    }

    /// Scene indices belonging to a split, in manifest order.
    pub fn indices_in(&self, split: Split) -> Vec<usize> {
        self.scenes
            .iter()
            .enumerate()
            .filter(|(_, s)| self.split.get(&s.scene_id) == Some(&split))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Generator knobs. `class_prior` must sum to 1 within 1e-9.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub num_scenes: usize,
    pub instruments_min: usize,
    pub instruments_max: usize,
    /// Feature noise sigma around class centroids.
    pub noise: f64,
    pub class_prior: [f64; NUM_INTERACTIONS],
    pub feature_dim: usize,
    /// Probability that an instrument interacts with the tissue.
    pub edge_probability: f64,
    /// Train fraction used for the split assigned at generation time.
    pub train_fraction: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            num_scenes: 100,
            instruments_min: 1,
            instruments_max: 5,
            noise: 0.05,
            class_prior: [1.0 / NUM_INTERACTIONS as f64; NUM_INTERACTIONS],
            feature_dim: 200,
            edge_probability: 0.7,
            train_fraction: 0.8,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_scenes < 2 {
            return Err(SgrError::Config("num_scenes must be at least 2".into()));
        }
        if self.instruments_min < 1 || self.instruments_min > self.instruments_max {
            return Err(SgrError::Config(format!(
                "instrument range [{}, {}] is invalid",
                self.instruments_min, self.instruments_max
            )));
        }
        if !(self.noise >= 0.0) {
            return Err(SgrError::Config("noise must be nonnegative".into()));
        }
        let sum: f64 = self.class_prior.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.class_prior.iter().any(|&p| p < 0.0) {
            return Err(SgrError::Config(format!(
                "class prior must be nonnegative and sum to 1 (sum = {sum})"
            )));
        }
        if self.feature_dim == 0 {
            return Err(SgrError::Config("feature_dim must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.edge_probability) {
            return Err(SgrError::Config("edge_probability must lie in [0, 1]".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(SgrError::Config("train_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Fixed per-seed centroids for all feature families.
struct Centroids {
    node: Vec<Vec<f64>>,
    interaction: Vec<Vec<f64>>,
    background: Vec<f64>,
}

fn draw_centroids(rng: &mut ChaCha8Rng, dim: usize) -> Centroids {
    let mut vector = |_: usize| -> Vec<f64> {
        (0..dim).map(|_| StandardNormal.sample(rng)).collect()
    };
    Centroids {
        node: (0..NODE_CLASS_NAMES.len()).map(&mut vector).collect(),
        interaction: (0..NUM_INTERACTIONS).map(&mut vector).collect(),
        background: vector(0),
    }
}

fn random_box(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let x1 = rng.random_range(0.0..0.9);
    let x2 = x1 + rng.random_range(0.05..(1.0 - x1));
    let y1 = rng.random_range(0.0..0.9);
    let y2 = y1 + rng.random_range(0.05..(1.0 - y1));
    [x1, y1, x2, y2]
}

fn sample_class(rng: &mut ChaCha8Rng, prior: &[f64; NUM_INTERACTIONS]) -> usize {
    let draw: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    for (k, &p) in prior.iter().enumerate() {
        acc += p;
        if draw < acc {
            return k;
        }
    }
    NUM_INTERACTIONS - 1
}

/// Generate a reproducible synthetic dataset: annotations, features, and a
/// seeded split. The same config always yields the same bytes on disk.
pub fn generate_dataset(cfg: &GeneratorConfig) -> Result<(DatasetManifest, Vec<FeatureRecord>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centroids = draw_centroids(&mut rng, cfg.feature_dim);
    let d = cfg.feature_dim;

    let mut scenes = Vec::with_capacity(cfg.num_scenes);
    let mut records = Vec::with_capacity(cfg.num_scenes);
    for i in 0..cfg.num_scenes {
        let scene_id = format!("scene_{i:05}");
        let instruments = rng.random_range(cfg.instruments_min..=cfg.instruments_max);
        let n = instruments + 1;

        let mut nodes = Vec::with_capacity(n);
        nodes.push(SceneNode {
            index: 0,
            class: NodeClass::from_id(0)?,
            bbox: random_box(&mut rng),
        });
        for v in 1..n {
            let class_id = rng.random_range(1..NODE_CLASS_NAMES.len());
            nodes.push(SceneNode {
                index: v,
                class: NodeClass::from_id(class_id)?,
                bbox: random_box(&mut rng),
            });
        }

        let mut edges = Vec::new();
        for v in 1..n {
            if rng.random_bool(cfg.edge_probability) {
                let label = InteractionLabel::new(sample_class(&mut rng, &cfg.class_prior))?;
                edges.push(SceneEdge { a: 0, b: v, label });
            }
        }

        let mut rec = FeatureRecord::new(n, d);
        for v in 0..n {
            let centroid = &centroids.node[nodes[v].class.id];
            let row = rec.node_mut(v);
            for j in 0..d {
                let noise: f64 = StandardNormal.sample(&mut rng);
                row[j] = centroid[j] + cfg.noise * noise;
            }
        }
        for a in 0..n {
            for b in (a + 1)..n {
                let centroid = match edges.iter().find(|e| (e.a.min(e.b), e.a.max(e.b)) == (a, b)) {
                    Some(e) => &centroids.interaction[e.label.id()],
                    None => &centroids.background,
                };
                let mut row = vec![0.0; d];
                for (j, slot) in row.iter_mut().enumerate() {
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    *slot = centroid[j] + cfg.noise * noise;
                }
                rec.edge_mut(a, b).copy_from_slice(&row);
                rec.edge_mut(b, a).copy_from_slice(&row);
            }
        }

        scenes.push(SceneAnnotation {
            scene_id: scene_id.clone(),
            nodes,
            edges,
            feature_ref: Some(format!("features/{scene_id}.sgf")),
        });
        records.push(rec);
    }

    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        generator_seed: Some(cfg.seed),
        scenes,
        split: BTreeMap::new(),
    };
    let manifest = split_dataset(&manifest, cfg.train_fraction, cfg.seed)?;
    Ok((manifest, records))
}

/// Count edge-label positives per class over a set of scenes.
fn class_presence(scenes: &[SceneAnnotation], indices: &[usize]) -> [usize; NUM_INTERACTIONS] {
    let mut counts = [0usize; NUM_INTERACTIONS];
    for &i in indices {
        for e in &scenes[i].edges {
            counts[e.label.id()] += 1;
        }
    }
    counts
}

/// Deterministic seeded split. Both sides stay nonempty, and every class
/// with positives in the full set keeps at least one positive in train
/// (redrawn up to 100 times, then a data error).
pub fn split_dataset(
    manifest: &DatasetManifest,
    train_fraction: f64,
    seed: u64,
) -> Result<DatasetManifest> {
    let n = manifest.scenes.len();
    if n < 2 {
        return Err(SgrError::Data("split needs at least two scenes".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SgrError::Config("train_fraction must lie in (0, 1)".into()));
    }
    let all: Vec<usize> = (0..n).collect();
    let full_presence = class_presence(&manifest.scenes, &all);
    let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _attempt in 0..100 {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let train_indices = &order[..n_train];
        let train_presence = class_presence(&manifest.scenes, train_indices);
        let covered = (0..NUM_INTERACTIONS)
            .all(|k| full_presence[k] == 0 || train_presence[k] > 0);
        if !covered {
            continue;
        }
        let mut split = BTreeMap::new();
        for (rank, &idx) in order.iter().enumerate() {
            let s = if rank < n_train { Split::Train } else { Split::Val };
            split.insert(manifest.scenes[idx].scene_id.clone(), s);
        }
        let mut out = manifest.clone();
        out.split = split;
        return Ok(out);
    }
    Err(SgrError::Data(
        "could not cover every labelled class in train within 100 redraws".into(),
    ))
}

#[cfg(test)]
mod tests;
