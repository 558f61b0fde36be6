// candidate selection for the frozen compactness config (temporary)
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgr::features::{
    cluster_compactness, extract_features, gaussian_blobs, train_classifier, SmoothingConfig,
};

fn run(seed: u64, flip: f64, epochs: usize, spread: f64, width: usize, lr: f64) -> (f64, f64) {
    let (mut train, held) = gaussian_blobs(5, 60, 8, spread, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 900);
    for item in &mut train {
        if rng.random_bool(flip) {
            item.1 = (item.1 + rng.random_range(1..5)) % 5;
        }
    }
    let go = |eps: f64| -> f64 {
        let smoothing = SmoothingConfig::new(eps, 5).unwrap();
        let (params, _, _) = train_classifier(&train, &smoothing, width, epochs, lr, seed).unwrap();
        let feats: Vec<(Vec<f64>, usize)> = held
            .iter()
            .map(|(x, c)| (extract_features(&params, x).unwrap(), *c))
            .collect();
        cluster_compactness(&feats).unwrap()
    };
    (go(0.1), go(0.0))
}

fn main() {
    let candidates: &[(f64, usize, f64, usize, f64)] = &[
        (0.2, 200, 0.9, 48, 5e-3),
        (0.2, 200, 0.6, 48, 5e-3),
    ];
    for &(flip, epochs, spread, width, lr) in candidates {
        let mut wins = 0;
        print!("flip={flip} ep={epochs} spread={spread} w={width} lr={lr}: ");
        for seed in 1..=15u64 {
            let (ls, nols) = run(seed, flip, epochs, spread, width, lr);
            if ls < nols {
                wins += 1;
            }
            print!("s{seed} {ls:.4}/{nols:.4} ({}) ", if ls < nols { "W" } else { "L" });
        }
        println!("-> {wins}/15");
    }
}
