use super::format::*;
use super::*;
use crate::losses::LossConfig;
use crate::metrics::EvalReport;
use crate::model::{GpnnConfig, GpnnParams};

fn quick_cfg(scenes: usize, noise: f64, seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        seed,
        num_scenes: scenes,
        feature_dim: 16,
        noise,
        ..GeneratorConfig::default()
    }
}

#[test]
fn same_seed_reproduces_dataset_exactly() {
    let cfg = quick_cfg(20, 0.1, 3);
    let (m1, r1) = generate_dataset(&cfg).unwrap();
    let (m2, r2) = generate_dataset(&cfg).unwrap();
    assert_eq!(m1, m2);
    assert_eq!(r1, r2);

    let other = generate_dataset(&quick_cfg(20, 0.1, 4)).unwrap();
    assert_ne!(m1, other.0);
}

#[test]
fn zero_noise_collapses_features_onto_centroids() {
    let cfg = quick_cfg(30, 0.0, 5);
    let (manifest, records) = generate_dataset(&cfg).unwrap();
    // all nodes of one class share the centroid exactly
    let mut by_class: std::collections::HashMap<usize, Vec<f64>> = Default::default();
    for (scene, rec) in manifest.scenes.iter().zip(&records) {
        for node in &scene.nodes {
            let feature = rec.node(node.index).to_vec();
            match by_class.entry(node.class.id) {
                std::collections::hash_map::Entry::Occupied(e) => {
                    assert_eq!(e.get(), &feature, "class {} drifted", node.class.id);
                }
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(feature);
                }
            }
        }
        // active edges sit on the interaction centroid, inactive on background
        let mut by_label: std::collections::HashMap<Option<usize>, Vec<f64>> = Default::default();
        for a in 0..scene.nodes.len() {
            for b in (a + 1)..scene.nodes.len() {
                let label = scene
                    .edges
                    .iter()
                    .find(|e| (e.a.min(e.b), e.a.max(e.b)) == (a, b))
                    .map(|e| e.label.id());
                let feature = rec.edge(a, b).to_vec();
                match by_label.entry(label) {
                    std::collections::hash_map::Entry::Occupied(e) => {
                        assert_eq!(e.get(), &feature);
                    }
                    std::collections::hash_map::Entry::Vacant(e) => {
                        e.insert(feature);
                    }
                }
            }
        }
    }
}

#[test]
fn generated_scenes_validate_clean_and_features_are_consistent() {
    let (manifest, records) = generate_dataset(&quick_cfg(200, 0.3, 6)).unwrap();
    manifest.validate().unwrap();
    for (scene, rec) in manifest.scenes.iter().zip(&records) {
        assert_eq!(scene.validate(), Vec::<String>::new());
        rec.validate().unwrap();
        assert_eq!(rec.num_nodes, scene.nodes.len());
    }
}

#[test]
fn seed7_class_frequencies_match_multinomial_expectation() {
    // counting oracle: each active edge draws its class from the prior,
    // so class counts stay within 3 sigma of the multinomial expectation
    let cfg = quick_cfg(100, 0.05, 7);
    let (manifest, _) = generate_dataset(&cfg).unwrap();
    let mut counts = [0usize; NUM_INTERACTIONS];
    let mut total = 0usize;
    for scene in &manifest.scenes {
        for e in &scene.edges {
            counts[e.label.id()] += 1;
            total += 1;
        }
    }
    assert!(total > 0);
    for k in 0..NUM_INTERACTIONS {
        let p = cfg.class_prior[k];
        let expect = total as f64 * p;
        let sigma = (total as f64 * p * (1.0 - p)).sqrt();
        let dev = (counts[k] as f64 - expect).abs();
        assert!(
            dev <= 3.0 * sigma,
            "class {k}: count {} vs expected {expect} (3 sigma {})",
            counts[k],
            3.0 * sigma
        );
    }
}

#[test]
fn near_separable_at_low_noise_nearest_centroid() {
    // learnability ceiling: nearest-centroid on edge features classifies
    // interactions almost perfectly at sigma = 0.05
    let cfg = quick_cfg(150, 0.05, 11);
    let (manifest, records) = generate_dataset(&cfg).unwrap();
    let train = manifest.indices_in(Split::Train);
    let val = manifest.indices_in(Split::Val);

    let mut centroids = vec![vec![0.0; cfg.feature_dim]; NUM_INTERACTIONS];
    let mut counts = vec![0usize; NUM_INTERACTIONS];
    for &i in &train {
        for e in &manifest.scenes[i].edges {
            let f = records[i].edge(e.a, e.b);
            for (c, &v) in centroids[e.label.id()].iter_mut().zip(f) {
                *c += v;
            }
            counts[e.label.id()] += 1;
        }
    }
    for (c, &n) in centroids.iter_mut().zip(&counts) {
        if n > 0 {
            for v in c {
                *v /= n as f64;
            }
        }
    }

    let mut correct = 0usize;
    let mut total = 0usize;
    for &i in &val {
        for e in &manifest.scenes[i].edges {
            let f = records[i].edge(e.a, e.b);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for k in 0..NUM_INTERACTIONS {
                if counts[k] == 0 {
                    continue;
                }
                let d: f64 = centroids[k]
                    .iter()
                    .zip(f)
                    .map(|(c, v)| (c - v) * (c - v))
                    .sum();
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            total += 1;
            if best == e.label.id() {
                correct += 1;
            }
        }
    }
    let accuracy = correct as f64 / total as f64;
    assert!(accuracy >= 0.99, "nearest-centroid accuracy {accuracy}");
}

#[test]
fn split_is_deterministic_and_covers_classes() {
    let (manifest, _) = generate_dataset(&quick_cfg(40, 0.2, 13)).unwrap();
    let a = split_dataset(&manifest, 0.8, 99).unwrap();
    let b = split_dataset(&manifest, 0.8, 99).unwrap();
    assert_eq!(a.split, b.split);

    let train = a.indices_in(Split::Train);
    let val = a.indices_in(Split::Val);
    assert!(!train.is_empty() && !val.is_empty());
    assert_eq!(train.len() + val.len(), manifest.scenes.len());

    // every class present overall has a positive in train
    let mut full = [0usize; NUM_INTERACTIONS];
    let mut in_train = [0usize; NUM_INTERACTIONS];
    for (i, scene) in a.scenes.iter().enumerate() {
        for e in &scene.edges {
            full[e.label.id()] += 1;
            if train.contains(&i) {
                in_train[e.label.id()] += 1;
            }
        }
    }
    for k in 0..NUM_INTERACTIONS {
        assert!(full[k] == 0 || in_train[k] > 0, "class {k} missing from train");
    }
}

#[test]
fn split_fails_when_coverage_is_impossible() {
    // two scenes with disjoint single classes and room for only one in train
    let scene = |id: &str, label: usize| SceneAnnotation {
        scene_id: id.into(),
        nodes: vec![
            SceneNode {
                index: 0,
                class: NodeClass::from_id(0).unwrap(),
                bbox: [0.1, 0.1, 0.5, 0.5],
            },
            SceneNode {
                index: 1,
                class: NodeClass::from_id(1).unwrap(),
                bbox: [0.5, 0.5, 0.9, 0.9],
            },
        ],
        edges: vec![crate::graph::SceneEdge {
            a: 0,
            b: 1,
            label: InteractionLabel::new(label).unwrap(),
        }],
        feature_ref: None,
    };
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        generator_seed: None,
        scenes: vec![scene("a", 2), scene("b", 9)],
        split: [("a".to_string(), Split::Train), ("b".to_string(), Split::Val)]
            .into_iter()
            .collect(),
    };
    let err = split_dataset(&manifest, 0.5, 1).unwrap_err();
    assert!(matches!(err, SgrError::Data(_)));
}

// ── formats ───────────────────────────────────────────────────────────

#[test]
fn manifest_round_trip_is_bit_exact() {
    let (manifest, _) = generate_dataset(&quick_cfg(12, 0.4, 21)).unwrap();
    let text = manifest_to_string(&manifest).unwrap();
    let back = manifest_from_string(&text).unwrap();
    assert_eq!(manifest, back);
    // serialized form is stable too
    assert_eq!(text, manifest_to_string(&back).unwrap());
}

#[test]
fn manifest_parse_errors_carry_line_numbers() {
    let (manifest, _) = generate_dataset(&quick_cfg(3, 0.1, 22)).unwrap();
    let text = manifest_to_string(&manifest).unwrap();

    let truncated: String = text.lines().take(4).collect::<Vec<_>>().join("\n");
    let err = manifest_from_string(&truncated).unwrap_err();
    assert!(matches!(err, SgrError::Parse(_)), "{err}");
    assert!(err.to_string().contains("line"), "{err}");

    let mangled = text.replace("sgm 1", "sgm 9");
    assert!(matches!(
        manifest_from_string(&mangled).unwrap_err(),
        SgrError::Version(_)
    ));
}

#[test]
fn features_round_trip_and_truncation() {
    let (_, records) = generate_dataset(&quick_cfg(3, 0.7, 23)).unwrap();
    for rec in &records {
        let bytes = features_to_bytes(rec).unwrap();
        let back = features_from_bytes(&bytes).unwrap();
        assert_eq!(rec, &back);

        let err = features_from_bytes(&bytes[..bytes.len() - 5]).unwrap_err();
        assert!(matches!(err, SgrError::Parse(_)));
    }
    assert!(matches!(
        features_from_bytes(b"SGF9aaaa").unwrap_err(),
        SgrError::Version(_)
    ));
    assert!(matches!(
        features_from_bytes(b"nope").unwrap_err(),
        SgrError::Parse(_)
    ));
}

#[test]
fn checkpoint_round_trip_preserves_everything() {
    let gpnn = GpnnConfig {
        feature_dim: 10,
        hidden_dim: 6,
        ..GpnnConfig::default()
    };
    let params = GpnnParams::init(&gpnn, 77).unwrap();
    let loss = LossConfig {
        class_weights: core::array::from_fn(|k| 0.5 + k as f64 * 0.1),
        margin: 1.25,
        adjacency_weight: 0.5,
    };
    let (manifest, records) = generate_dataset(&quick_cfg(8, 0.2, 3)).unwrap();
    let extractor = crate::features::fit_scene_extractor(
        &manifest,
        &records,
        &manifest.indices_in(Split::Train),
        0.1,
        10,
        2,
        1e-2,
        5,
    )
    .unwrap();
    let ck = Checkpoint {
        gpnn: gpnn.clone(),
        loss: loss.clone(),
        params,
        extractor,
    };
    let bytes = checkpoint_to_bytes(&ck).unwrap();
    let back = checkpoint_from_bytes(&bytes).unwrap();
    assert_eq!(back.gpnn, gpnn);
    assert_eq!(back.loss, loss);
    for ((n1, t1), (n2, t2)) in ck.params.named().iter().zip(back.params.named()) {
        assert_eq!(*n1, n2);
        assert_eq!(t1.shape(), t2.shape());
        assert_eq!(t1.to_vec(), t2.to_vec());
    }
    assert_eq!(back.extractor.epsilon, ck.extractor.epsilon);
    assert_eq!(back.extractor.projection(), ck.extractor.projection());
    assert_eq!(
        back.extractor.classifier.w1.to_vec(),
        ck.extractor.classifier.w1.to_vec()
    );

    // extraction behaves identically after the round trip
    let e1 = ck.extractor.extract_scene(&manifest.scenes[0], &records[0]).unwrap();
    let e2 = back.extractor.extract_scene(&manifest.scenes[0], &records[0]).unwrap();
    assert_eq!(e1, e2);

    let err = checkpoint_from_bytes(&bytes[..bytes.len() - 1]).unwrap_err();
    assert!(matches!(err, SgrError::Parse(_)));
}

#[test]
fn report_round_trip_is_bit_exact() {
    let mut per_class_ap = [None; NUM_INTERACTIONS];
    per_class_ap[0] = Some(1.0 / 3.0);
    per_class_ap[7] = Some(0.8531);
    let report = EvalReport {
        split: "val".into(),
        num_scenes: 42,
        per_class_ap,
        map: 0.1234567890123456789,
        recall: 2.0 / 3.0,
        auc: 0.9999999999999999,
        mean_hinge: 1.75e-3,
        positive_counts: core::array::from_fn(|k| k * 3),
    };
    let text = report_to_string(&report).unwrap();
    let back = report_from_string(&text).unwrap();
    assert_eq!(report, back);
}

#[test]
fn dataset_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (manifest, records) = generate_dataset(&quick_cfg(6, 0.2, 31)).unwrap();
    save_dataset(&manifest, &records, dir.path()).unwrap();
    let (m2, r2) = load_dataset(dir.path()).unwrap();
    assert_eq!(manifest, m2);
    assert_eq!(records, r2);
}
