use super::*;
use crate::data::{generate_dataset, GeneratorConfig, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn smooth_labels_direct_substitution() {
    let cfg = SmoothingConfig::new(0.1, 4).unwrap();
    let out = smooth_labels(&[1.0, 0.0, 0.0, 0.0], &cfg).unwrap();
    let expect = [0.925, 0.025, 0.025, 0.025];
    for (o, e) in out.iter().zip(expect) {
        assert!((o - e).abs() < 1e-12);
    }
    assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn smooth_labels_zero_epsilon_is_identity() {
    let cfg = SmoothingConfig::new(0.0, 5).unwrap();
    let onehot = one_hot(3, 5).unwrap();
    assert_eq!(smooth_labels(&onehot, &cfg).unwrap(), onehot);
}

#[test]
fn smooth_labels_twelve_classes_frozen_values() {
    let cfg = SmoothingConfig::new(0.1, 12).unwrap();
    let out = smooth_labels(&one_hot(3, 12).unwrap(), &cfg).unwrap();
    assert!((out[3] - 0.9083333333333333).abs() < 1e-12);
    for (k, &v) in out.iter().enumerate() {
        if k != 3 {
            assert!((v - 0.008333333333333333).abs() < 1e-12);
        }
    }
}

#[test]
fn smooth_labels_rejects_malformed_onehot() {
    let cfg = SmoothingConfig::new(0.1, 3).unwrap();
    assert!(matches!(
        smooth_labels(&[1.0, 1.0, 0.0], &cfg).unwrap_err(),
        SgrError::Contract(_)
    ));
    assert!(matches!(
        smooth_labels(&[0.5, 0.5, 0.0], &cfg).unwrap_err(),
        SgrError::Contract(_)
    ));
}

#[test]
fn smoothing_preserves_argmax_and_floor() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let k = rng.random_range(2..=16);
        let class = rng.random_range(0..k);
        // any epsilon below (K-1)/K keeps the argmax
        let eps = rng.random_range(0.0..((k as f64 - 1.0) / k as f64));
        let cfg = SmoothingConfig::new(eps, k).unwrap();
        let out = smooth_labels(&one_hot(class, k).unwrap(), &cfg).unwrap();
        let argmax = out
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, class);
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(out.iter().all(|&v| v >= eps / k as f64 - 1e-15));
    }
}

#[test]
fn ls_cross_entropy_uniform_prediction_is_log_k() {
    let tape = Tape::no_grad();
    let probs = Tensor::from_vec(&[3], vec![1.0 / 3.0; 3]).unwrap();
    let target = smooth_labels(&[0.0, 1.0, 0.0], &SmoothingConfig::new(0.17, 3).unwrap()).unwrap();
    let ce = ls_cross_entropy(&tape, &probs, &target).unwrap().item().unwrap();
    assert!((ce - 1.0986122886681098).abs() < 1e-12);
}

#[test]
fn ls_cross_entropy_perfect_prediction_without_smoothing_is_zero() {
    let tape = Tape::no_grad();
    let probs = Tensor::from_vec(&[4], vec![0.0, 0.0, 1.0, 0.0]).unwrap();
    let target = one_hot(2, 4).unwrap();
    let ce = ls_cross_entropy(&tape, &probs, &target).unwrap().item().unwrap();
    assert!(ce.abs() < 1e-9);
}

#[test]
fn ls_cross_entropy_matches_frozen_value() {
    let tape = Tape::no_grad();
    let probs = Tensor::from_vec(&[3], vec![0.7, 0.2, 0.1]).unwrap();
    let target = smooth_labels(&one_hot(0, 3).unwrap(), &SmoothingConfig::new(0.1, 3).unwrap())
        .unwrap();
    let ce = ls_cross_entropy(&tape, &probs, &target).unwrap().item().unwrap();
    assert!((ce - 0.46329738119042174).abs() < 1e-12, "{ce}");
}

#[test]
fn ls_cross_entropy_rejects_negative_probabilities() {
    let tape = Tape::no_grad();
    let probs = Tensor::from_vec(&[2], vec![-0.1, 1.1]).unwrap();
    assert!(matches!(
        ls_cross_entropy(&tape, &probs, &[0.5, 0.5]).unwrap_err(),
        SgrError::Contract(_)
    ));
}

#[test]
fn ls_cross_entropy_minimized_at_smoothed_target() {
    // against 1000 random simplex points, the smoothed target itself gives
    // the lowest cross-entropy
    let cfg = SmoothingConfig::new(0.2, 4).unwrap();
    let target = smooth_labels(&one_hot(1, 4).unwrap(), &cfg).unwrap();
    let tape = Tape::no_grad();
    let at = |p: &[f64]| {
        let t = Tensor::from_vec(&[4], p.to_vec()).unwrap();
        ls_cross_entropy(&tape, &t, &target).unwrap().item().unwrap()
    };
    let best = at(&target);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let raw: Vec<f64> = (0..4).map(|_| -f64::ln(rng.random_range(1e-9..1.0))).collect();
        let sum: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / sum).collect();
        assert!(at(&p) >= best - 1e-12);
    }
}

#[test]
fn classifier_training_reduces_loss_on_separable_data() {
    let (train, _) = gaussian_blobs(3, 30, 8, 0.3, 7);
    let smoothing = SmoothingConfig::new(0.1, 3).unwrap();
    let (_, first, last) = train_classifier(&train, &smoothing, 12, 20, 1e-2, 7).unwrap();
    assert!(last < first, "loss {first} -> {last}");

    assert!(matches!(
        train_classifier(&[], &smoothing, 12, 5, 1e-2, 7).unwrap_err(),
        SgrError::Data(_)
    ));
}

#[test]
fn extract_features_zero_params_give_zero_vector() {
    let params = ClassifierParams::init(6, 5, 3, 1).unwrap();
    for t in params.all() {
        t.update_data(|d| d.iter_mut().for_each(|v| *v = 0.0)).unwrap();
    }
    let f = extract_features(&params, &[1.0, -2.0, 0.5, 0.0, 3.0, -1.0]).unwrap();
    assert_eq!(f, vec![0.0; 5]);
}

#[test]
fn extract_features_is_deterministic_with_configured_width() {
    let params = ClassifierParams::init(10, 200, 4, 3).unwrap();
    let input: Vec<f64> = (0..10).map(|i| i as f64 * 0.31).collect();
    let a = extract_features(&params, &input).unwrap();
    let b = extract_features(&params, &input).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 200);
    assert!(matches!(
        extract_features(&params, &input[..4]).unwrap_err(),
        SgrError::Dimension(_)
    ));
}

#[test]
fn compactness_zero_spread_is_zero() {
    let samples = vec![
        (vec![0.0, 0.0], 0),
        (vec![0.0, 0.0], 0),
        (vec![4.0, 4.0], 1),
        (vec![4.0, 4.0], 1),
    ];
    assert_eq!(cluster_compactness(&samples).unwrap(), 0.0);
}

#[test]
fn compactness_all_identical_is_zero_by_degenerate_rule() {
    let samples = vec![
        (vec![1.0, 2.0], 0),
        (vec![1.0, 2.0], 0),
        (vec![1.0, 2.0], 1),
        (vec![1.0, 2.0], 1),
    ];
    assert_eq!(cluster_compactness(&samples).unwrap(), 0.0);
}

#[test]
fn compactness_matches_frozen_hand_case() {
    let samples = vec![
        (vec![0.0, 0.0], 0),
        (vec![1.0, 0.0], 0),
        (vec![0.0, 1.0], 0),
        (vec![4.0, 4.0], 1),
        (vec![5.0, 4.0], 1),
        (vec![4.0, 5.0], 1),
    ];
    let ratio = cluster_compactness(&samples).unwrap();
    assert!((ratio - 0.20118446353109126).abs() < 1e-12, "{ratio}");
}

#[test]
fn compactness_preconditions() {
    assert!(cluster_compactness(&[(vec![0.0], 0), (vec![1.0], 0)]).is_err());
    assert!(cluster_compactness(&[(vec![0.0], 0), (vec![1.0], 1), (vec![2.0], 1)]).is_err());
}

#[test]
fn scene_extractor_produces_valid_symmetric_records() {
    let cfg = GeneratorConfig {
        seed: 3,
        num_scenes: 12,
        feature_dim: 10,
        noise: 0.2,
        ..GeneratorConfig::default()
    };
    let (manifest, records) = generate_dataset(&cfg).unwrap();
    let train = manifest.indices_in(Split::Train);
    let extractor =
        fit_scene_extractor(&manifest, &records, &train, 0.1, 10, 3, 1e-2, 17).unwrap();

    let rec = extractor.extract_scene(&manifest.scenes[0], &records[0]).unwrap();
    rec.validate().unwrap();
    assert_eq!(rec.dim, 10);
    assert_eq!(rec.num_nodes, manifest.scenes[0].nodes.len());

    // deterministic
    let rec2 = extractor.extract_scene(&manifest.scenes[0], &records[0]).unwrap();
    assert_eq!(rec, rec2);
}
