//! Scene and parse-graph domain types.
//!
//! A scene is one annotated frame: one defective-tissue node (the kidney),
//! one node per surgical instrument, and undirected interaction edges that
//! always touch the tissue node. Twelve interaction classes are defined;
//! "no interaction" is encoded by edge absence.

use crate::error::{Result, SgrError};

/// Number of interaction classes.
pub const NUM_INTERACTIONS: usize = 12;

/// Stable interaction-class names, index = class id.
pub const INTERACTION_NAMES: [&str; NUM_INTERACTIONS] = [
    "grasping",
    "retraction",
    "tissue_manipulation",
    "tool_manipulation",
    "cutting",
    "cauterization",
    "suction",
    "looping",
    "suturing",
    "clipping",
    "staple",
    "ultrasound_sensing",
];

/// Node class id reserved for the defective tissue.
pub const TISSUE_CLASS_ID: usize = 0;

/// Stable node-class names, index = class id. Id 0 is the tissue class;
/// the rest are instrument classes.
pub const NODE_CLASS_NAMES: [&str; 9] = [
    "kidney",
    "bipolar_forceps",
    "prograsp_forceps",
    "large_needle_driver",
    "monopolar_curved_scissors",
    "ultrasound_probe",
    "suction_instrument",
    "clip_applier",
    "stapler",
];

/// Object class of a scene node (tissue or an instrument kind).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeClass {
    pub id: usize,
    pub name: String,
}

impl NodeClass {
    /// Class from the built-in catalog.
    pub fn from_id(id: usize) -> Result<NodeClass> {
        NODE_CLASS_NAMES
            .get(id)
            .map(|name| NodeClass {
                id,
                name: (*name).to_string(),
            })
            .ok_or_else(|| SgrError::Data(format!("unknown node class id {id}")))
    }

    pub fn is_tissue(&self) -> bool {
        self.id == TISSUE_CLASS_ID
    }
}

/// One of the 12 interaction classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InteractionLabel(usize);

impl InteractionLabel {
    pub fn new(id: usize) -> Result<InteractionLabel> {
        if id >= NUM_INTERACTIONS {
            return Err(SgrError::Data(format!(
                "interaction label id {id} out of range 0..{NUM_INTERACTIONS}"
            )));
        }
        Ok(InteractionLabel(id))
    }

    pub fn id(&self) -> usize {
        self.0
    }

    pub fn name(&self) -> &'static str {
        INTERACTION_NAMES[self.0]
    }

    pub fn from_name(name: &str) -> Result<InteractionLabel> {
        INTERACTION_NAMES
            .iter()
            .position(|n| *n == name)
            .map(InteractionLabel)
            .ok_or_else(|| SgrError::Data(format!("unknown interaction label {name:?}")))
    }
}

/// A node of a scene: contiguous index, object class, normalized box.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneNode {
    pub index: usize,
    pub class: NodeClass,
    /// x1, y1, x2, y2 in [0, 1] with x1 < x2 and y1 < y2.
    pub bbox: [f64; 4],
}

/// An undirected interaction edge. A pair may appear several times with
/// distinct labels (multi-label interactions).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneEdge {
    pub a: usize,
    pub b: usize,
    pub label: InteractionLabel,
}

/// Serialized ground truth for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneAnnotation {
    pub scene_id: String,
    pub nodes: Vec<SceneNode>,
    pub edges: Vec<SceneEdge>,
    /// Path of the feature record for this scene, relative to the manifest.
    pub feature_ref: Option<String>,
}

impl SceneAnnotation {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// All invariant violations, empty when the scene is well formed.
    /// Each entry names the offending field and the broken rule.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.nodes.len();

        let mut indices: Vec<usize> = self.nodes.iter().map(|nd| nd.index).collect();
        indices.sort_unstable();
        if indices != (0..n).collect::<Vec<_>>() {
            out.push(format!(
                "nodes: indices must be contiguous 0..{n}, got {indices:?}"
            ));
        }

        let tissue_count = self.nodes.iter().filter(|nd| nd.class.is_tissue()).count();
        if tissue_count != 1 {
            out.push(format!(
                "nodes: expected exactly one tissue node, found {tissue_count}"
            ));
        }

        for nd in &self.nodes {
            let [x1, y1, x2, y2] = nd.bbox;
            let ok = (0.0..1.0).contains(&x1)
                && x1 < x2
                && x2 <= 1.0
                && (0.0..1.0).contains(&y1)
                && y1 < y2
                && y2 <= 1.0;
            if !ok {
                out.push(format!(
                    "nodes[{}]: box [{x1}, {y1}, {x2}, {y2}] violates 0 <= x1 < x2 <= 1, 0 <= y1 < y2 <= 1",
                    nd.index
                ));
            }
        }

        let tissue_index = self
            .nodes
            .iter()
            .find(|nd| nd.class.is_tissue())
            .map(|nd| nd.index);

        let mut seen: Vec<(usize, usize, usize)> = Vec::new();
        for (i, e) in self.edges.iter().enumerate() {
            if e.a == e.b {
                out.push(format!("edges[{i}]: self-edge at pair ({}, {})", e.a, e.b));
                continue;
            }
            if e.a >= n || e.b >= n {
                out.push(format!(
                    "edges[{i}]: pair ({}, {}) references a node outside 0..{n}",
                    e.a, e.b
                ));
                continue;
            }
            if let Some(t) = tissue_index {
                if e.a != t && e.b != t {
                    out.push(format!(
                        "edges[{i}]: pair ({}, {}) has no tissue endpoint",
                        e.a, e.b
                    ));
                }
            }
            let key = (e.a.min(e.b), e.a.max(e.b), e.label.id());
            if seen.contains(&key) {
                out.push(format!(
                    "edges[{i}]: duplicate pair ({}, {}) with label {}",
                    e.a,
                    e.b,
                    e.label.name()
                ));
            }
            seen.push(key);
        }

        out
    }
}

/// Binary supervision targets derived from a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub num_nodes: usize,
    /// n*n row-major, symmetric, zero diagonal.
    pub adjacency: Vec<u8>,
    /// n*12 row-major; both endpoints of an edge carry its label.
    pub labels: Vec<u8>,
}

impl GroundTruth {
    pub fn adjacent(&self, a: usize, b: usize) -> bool {
        self.adjacency[a * self.num_nodes + b] != 0
    }

    pub fn has_label(&self, v: usize, k: usize) -> bool {
        self.labels[v * NUM_INTERACTIONS + k] != 0
    }
}

/// Expand a validated scene into adjacency and per-node label matrices.
pub fn ground_truth_targets(scene: &SceneAnnotation) -> Result<GroundTruth> {
    let violations = scene.validate();
    if !violations.is_empty() {
        return Err(SgrError::Data(format!(
            "scene {} failed validation: {}",
            scene.scene_id,
            violations.join("; ")
        )));
    }
    let n = scene.num_nodes();
    let mut adjacency = vec![0u8; n * n];
    let mut labels = vec![0u8; n * NUM_INTERACTIONS];
    for e in &scene.edges {
        adjacency[e.a * n + e.b] = 1;
        adjacency[e.b * n + e.a] = 1;
        labels[e.a * NUM_INTERACTIONS + e.label.id()] = 1;
        labels[e.b * NUM_INTERACTIONS + e.label.id()] = 1;
    }
    Ok(GroundTruth {
        num_nodes: n,
        adjacency,
        labels,
    })
}

/// Node and edge features for one scene, dense f64.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub num_nodes: usize,
    pub dim: usize,
    /// n*d row-major.
    pub node_features: Vec<f64>,
    /// n*n*d, symmetric in the first two indices, zero on the diagonal.
    pub edge_features: Vec<f64>,
}

impl FeatureRecord {
    pub fn new(num_nodes: usize, dim: usize) -> FeatureRecord {
        FeatureRecord {
            num_nodes,
            dim,
            node_features: vec![0.0; num_nodes * dim],
            edge_features: vec![0.0; num_nodes * num_nodes * dim],
        }
    }

    pub fn node(&self, v: usize) -> &[f64] {
        &self.node_features[v * self.dim..(v + 1) * self.dim]
    }

    pub fn node_mut(&mut self, v: usize) -> &mut [f64] {
        &mut self.node_features[v * self.dim..(v + 1) * self.dim]
    }

    pub fn edge(&self, a: usize, b: usize) -> &[f64] {
        let base = (a * self.num_nodes + b) * self.dim;
        &self.edge_features[base..base + self.dim]
    }

    pub fn edge_mut(&mut self, a: usize, b: usize) -> &mut [f64] {
        let base = (a * self.num_nodes + b) * self.dim;
        &mut self.edge_features[base..base + self.dim]
    }

    /// Check symmetry, zero diagonal, and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.node_features.len() != self.num_nodes * self.dim
            || self.edge_features.len() != self.num_nodes * self.num_nodes * self.dim
        {
            return Err(SgrError::Dimension(
                "feature record storage does not match declared extents".into(),
            ));
        }
        if self
            .node_features
            .iter()
            .chain(self.edge_features.iter())
            .any(|v| !v.is_finite())
        {
            return Err(SgrError::Numeric("feature record holds non-finite values".into()));
        }
        for a in 0..self.num_nodes {
            if self.edge(a, a).iter().any(|&v| v != 0.0) {
                return Err(SgrError::Data(format!(
                    "edge_features diagonal at node {a} is not zero"
                )));
            }
            for b in (a + 1)..self.num_nodes {
                if self.edge(a, b) != self.edge(b, a) {
                    return Err(SgrError::Data(format!(
                        "edge_features not symmetric at pair ({a}, {b})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Inference output for one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseGraphState {
    pub num_nodes: usize,
    pub hidden_dim: usize,
    /// n*n interaction probabilities, symmetric, zero diagonal.
    pub adjacency: Vec<f64>,
    /// n*hidden_dim final hidden states.
    pub hidden: Vec<f64>,
    /// n*12 per-node interaction probabilities (independent, multi-label).
    pub node_probs: Vec<f64>,
}

impl ParseGraphState {
    pub fn adjacency_at(&self, a: usize, b: usize) -> f64 {
        self.adjacency[a * self.num_nodes + b]
    }

    pub fn prob(&self, v: usize, k: usize) -> f64 {
        self.node_probs[v * NUM_INTERACTIONS + k]
    }

    /// Invariant check: symmetry, zero diagonal, probabilities in [0, 1].
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.num_nodes;
        for a in 0..n {
            if self.adjacency[a * n + a] != 0.0 {
                return Err(SgrError::Data(format!("adjacency diagonal nonzero at {a}")));
            }
            for b in 0..n {
                let p = self.adjacency[a * n + b];
                if !(0.0..=1.0).contains(&p) {
                    return Err(SgrError::Data(format!(
                        "adjacency[{a}][{b}] = {p} outside [0, 1]"
                    )));
                }
                if self.adjacency[a * n + b] != self.adjacency[b * n + a] {
                    return Err(SgrError::Data(format!("adjacency asymmetric at ({a}, {b})")));
                }
            }
        }
        if self.node_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(SgrError::Data("node probability outside [0, 1]".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn well_formed_scene() -> SceneAnnotation {
        SceneAnnotation {
            scene_id: "scene_test".into(),
            nodes: vec![
                SceneNode {
                    index: 0,
                    class: NodeClass::from_id(0).unwrap(),
                    bbox: [0.1, 0.1, 0.5, 0.5],
                },
                SceneNode {
                    index: 1,
                    class: NodeClass::from_id(1).unwrap(),
                    bbox: [0.5, 0.2, 0.9, 0.6],
                },
                SceneNode {
                    index: 2,
                    class: NodeClass::from_id(4).unwrap(),
                    bbox: [0.2, 0.6, 0.4, 0.95],
                },
            ],
            edges: vec![
                SceneEdge {
                    a: 0,
                    b: 1,
                    label: InteractionLabel::from_name("grasping").unwrap(),
                },
                SceneEdge {
                    a: 2,
                    b: 0,
                    label: InteractionLabel::from_name("cutting").unwrap(),
                },
            ],
            feature_ref: None,
        }
    }

    #[test]
    fn twelve_interaction_classes_with_stable_ids() {
        assert_eq!(NUM_INTERACTIONS, 12);
        for id in 0..NUM_INTERACTIONS {
            let label = InteractionLabel::new(id).unwrap();
            assert_eq!(InteractionLabel::from_name(label.name()).unwrap(), label);
        }
        assert!(InteractionLabel::new(12).is_err());
    }

    #[test]
    fn well_formed_scene_validates_clean() {
        assert_eq!(well_formed_scene().validate(), Vec::<String>::new());
    }

    #[test]
    fn self_edge_is_reported() {
        let mut scene = well_formed_scene();
        scene.edges = vec![SceneEdge {
            a: 1,
            b: 1,
            label: InteractionLabel::new(0).unwrap(),
        }];
        let violations = scene.validate();
        assert_eq!(violations.len(), 1);
        assert!(violations[0].contains("self-edge at pair (1, 1)"), "{violations:?}");
    }

    #[test]
    fn inverted_box_is_reported_with_node() {
        let mut scene = well_formed_scene();
        scene.nodes[2].bbox = [0.8, 0.1, 0.3, 0.5]; // x2 < x1
        let violations = scene.validate();
        assert_eq!(violations.len(), 1);
        assert!(violations[0].starts_with("nodes[2]"), "{violations:?}");
    }

    #[test]
    fn non_tissue_edge_and_missing_tissue_are_reported() {
        let mut scene = well_formed_scene();
        scene.edges.push(SceneEdge {
            a: 1,
            b: 2,
            label: InteractionLabel::new(3).unwrap(),
        });
        let violations = scene.validate();
        assert!(violations.iter().any(|v| v.contains("no tissue endpoint")));

        let mut scene = well_formed_scene();
        scene.nodes[0].class = NodeClass::from_id(2).unwrap();
        let violations = scene.validate();
        assert!(violations
            .iter()
            .any(|v| v.contains("exactly one tissue node")));
    }

    #[test]
    fn duplicate_pair_label_is_reported_but_distinct_labels_allowed() {
        let mut scene = well_formed_scene();
        scene.edges.push(SceneEdge {
            a: 1,
            b: 0,
            label: InteractionLabel::from_name("retraction").unwrap(),
        });
        assert_eq!(scene.validate(), Vec::<String>::new());

        scene.edges.push(SceneEdge {
            a: 1,
            b: 0,
            label: InteractionLabel::from_name("grasping").unwrap(),
        });
        let violations = scene.validate();
        assert_eq!(violations.len(), 1);
        assert!(violations[0].contains("duplicate pair"), "{violations:?}");
    }

    #[test]
    fn targets_for_single_edge() {
        let mut scene = well_formed_scene();
        scene.edges = vec![SceneEdge {
            a: 0,
            b: 1,
            label: InteractionLabel::from_name("cutting").unwrap(),
        }];
        let gt = ground_truth_targets(&scene).unwrap();
        let cutting = InteractionLabel::from_name("cutting").unwrap().id();
        assert_eq!(gt.adjacency.iter().map(|&v| v as usize).sum::<usize>(), 2);
        assert!(gt.adjacent(0, 1) && gt.adjacent(1, 0));
        assert_eq!(gt.labels.iter().map(|&v| v as usize).sum::<usize>(), 2);
        assert!(gt.has_label(0, cutting) && gt.has_label(1, cutting));
    }

    #[test]
    fn targets_for_empty_edge_list() {
        let mut scene = well_formed_scene();
        scene.edges.clear();
        let gt = ground_truth_targets(&scene).unwrap();
        assert!(gt.adjacency.iter().all(|&v| v == 0));
        assert!(gt.labels.iter().all(|&v| v == 0));
    }

    #[test]
    fn targets_match_brute_force_enumeration() {
        // 4-node scene, edges (0,1,grasping), (0,2,grasping), (0,3,suction)
        let scene = SceneAnnotation {
            scene_id: "s4".into(),
            nodes: (0..4)
                .map(|i| SceneNode {
                    index: i,
                    class: NodeClass::from_id(if i == 0 { 0 } else { i }).unwrap(),
                    bbox: [0.1, 0.1, 0.9, 0.9],
                })
                .collect(),
            edges: vec![
                SceneEdge { a: 0, b: 1, label: InteractionLabel::from_name("grasping").unwrap() },
                SceneEdge { a: 0, b: 2, label: InteractionLabel::from_name("grasping").unwrap() },
                SceneEdge { a: 0, b: 3, label: InteractionLabel::from_name("suction").unwrap() },
            ],
            feature_ref: None,
        };
        let gt = ground_truth_targets(&scene).unwrap();

        // independent brute-force expansion of the edge list
        let mut adj = vec![0u8; 16];
        let mut lab = vec![0u8; 4 * NUM_INTERACTIONS];
        for &(a, b, k) in &[(0usize, 1usize, 0usize), (0, 2, 0), (0, 3, 6)] {
            adj[a * 4 + b] = 1;
            adj[b * 4 + a] = 1;
            lab[a * NUM_INTERACTIONS + k] = 1;
            lab[b * NUM_INTERACTIONS + k] = 1;
        }
        assert_eq!(gt.adjacency, adj);
        assert_eq!(gt.labels, lab);
        // node 0 carries grasping and suction, 3 symmetric adjacency pairs
        assert!(gt.has_label(0, 0) && gt.has_label(0, 6));
        assert_eq!(gt.adjacency.iter().map(|&v| v as usize).sum::<usize>(), 6);
    }

    #[test]
    fn invalid_scene_rejected_by_targets() {
        let mut scene = well_formed_scene();
        scene.edges[0].b = 0;
        assert!(matches!(
            ground_truth_targets(&scene).unwrap_err(),
            SgrError::Data(_)
        ));
    }

    #[test]
    fn feature_record_validation() {
        let mut rec = FeatureRecord::new(3, 4);
        rec.node_mut(0)[0] = 1.0;
        rec.edge_mut(0, 1)[2] = 0.5;
        assert!(rec.validate().is_err()); // asymmetric
        rec.edge_mut(1, 0)[2] = 0.5;
        assert!(rec.validate().is_ok());
        rec.edge_mut(2, 2)[0] = 0.1;
        assert!(rec.validate().is_err()); // diagonal
    }
}
