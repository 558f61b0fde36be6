// scratch sweep for the compactness experiment (temporary)
use sgr::features::{
    cluster_compactness, extract_features, gaussian_blobs, train_classifier, SmoothingConfig,
};

fn run(
    seed: u64,
    eps: f64,
    epochs: usize,
    lr: f64,
    width: usize,
    dim: usize,
    spread: f64,
    per_class: usize,
) -> (f64, f64) {
    let num_classes = 5;
    let (train, held) = gaussian_blobs(num_classes, per_class, dim, spread, seed);
    let go = |e: f64| -> f64 {
        let smoothing = SmoothingConfig::new(e, num_classes).unwrap();
        let (params, _, _) = train_classifier(&train, &smoothing, width, epochs, lr, seed).unwrap();
        let features: Vec<(Vec<f64>, usize)> = held
            .iter()
            .map(|(x, c)| (extract_features(&params, x).unwrap(), *c))
            .collect();
        cluster_compactness(&features).unwrap()
    };
    (go(eps), go(0.0))
}

fn main() {
    for &eps in &[0.1f64] {
        for &epochs in &[150usize, 400, 1000] {
            for &per_class in &[60usize] {
                for &(dim, spread) in &[(8usize, 0.5f64), (8, 0.8), (16, 0.5), (16, 0.8)] {
                    let width = 48;
                    let lr = 5e-3;
                    let mut wins = 0;
                    let mut pairs = Vec::new();
                    for seed in 1..=5 {
                        let (ls, nols) = run(seed, eps, epochs, lr, width, dim, spread, per_class);
                        if ls < nols {
                            wins += 1;
                        }
                        pairs.push((ls, nols));
                    }
                    println!(
                        "eps={eps} epochs={epochs} n={per_class} dim={dim} spread={spread}: wins {wins}/5 {:?}",
                        pairs
                            .iter()
                            .map(|(a, b)| format!("{a:.2}/{b:.2}"))
                            .collect::<Vec<_>>()
                    );
                }
            }
        }
    }
}
