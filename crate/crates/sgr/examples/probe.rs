// scratch calibration probe (temporary)
use sgr::data::{generate_dataset, GeneratorConfig, Split};
use sgr::features::compactness_experiment;
use sgr::train::{evaluate_checkpoint, train, TrainConfig};
use std::time::Instant;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_default();

    if which == "compact" || which.is_empty() {
        println!("== compactness across seeds ==");
        let t0 = Instant::now();
        for seed in 1..=5u64 {
            let out = compactness_experiment(seed, 0.1).unwrap();
            println!(
                "seed {seed}: with_ls {:.4} without_ls {:.4} better={}",
                out.with_ls,
                out.without_ls,
                out.with_ls < out.without_ls
            );
        }
        println!("elapsed {:?}", t0.elapsed());
    }

    if which == "learn_small" {
        println!("== small learning probe: d=32 dh=32 120 scenes sigma 0.05 ==");
        let t0 = Instant::now();
        let gen = GeneratorConfig {
            seed: 1,
            num_scenes: 120,
            noise: 0.05,
            feature_dim: 32,
            ..GeneratorConfig::default()
        };
        let (manifest, records) = generate_dataset(&gen).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            hidden_dim: 32,
            eval_every: 1,
            early_stop_map: Some(0.90),
            seed: 1,
            ..TrainConfig::default()
        };
        let outcome = train(&manifest, &records, &cfg, |log| {
            println!(
                "epoch {:>3} total {:.4} hinge {:.4} adj {:.4} val_map {:?}",
                log.epoch, log.total, log.hinge, log.adjacency, log.val_map
            );
        })
        .unwrap();
        let report =
            evaluate_checkpoint(&outcome.checkpoint, &manifest, &records, Split::Val).unwrap();
        println!(
            "final: map {:.4} recall {:.4} auc {:.4} hinge {:.4} elapsed {:?}",
            report.map, report.recall, report.auc, report.mean_hinge, t0.elapsed()
        );
    }

    if which == "learn_full" {
        println!("== full learning probe: defaults, 500 scenes sigma 0.05 seed 1 ==");
        let t0 = Instant::now();
        let gen = GeneratorConfig {
            seed: 1,
            num_scenes: 500,
            noise: 0.05,
            ..GeneratorConfig::default()
        };
        let (manifest, records) = generate_dataset(&gen).unwrap();
        println!("generated in {:?}", t0.elapsed());
        let cfg = TrainConfig {
            eval_every: 1,
            early_stop_map: Some(0.90),
            seed: 1,
            ..TrainConfig::default()
        };
        let outcome = train(&manifest, &records, &cfg, |log| {
            println!(
                "epoch {:>3} total {:.4} hinge {:.4} adj {:.4} val_map {:?} at {:?}",
                log.epoch, log.total, log.hinge, log.adjacency, log.val_map,
                t0.elapsed()
            );
        })
        .unwrap();
        let report =
            evaluate_checkpoint(&outcome.checkpoint, &manifest, &records, Split::Val).unwrap();
        println!(
            "final: map {:.4} recall {:.4} auc {:.4} hinge {:.4} elapsed {:?}",
            report.map, report.recall, report.auc, report.mean_hinge, t0.elapsed()
        );
    }

    if which == "ablate" {
        println!("== ablation probe: sigma 0.6, small dims ==");
        let t0 = Instant::now();
        let gen = GeneratorConfig {
            seed: 42,
            num_scenes: 120,
            noise: 0.6,
            feature_dim: 32,
            ..GeneratorConfig::default()
        };
        let (manifest, records) = generate_dataset(&gen).unwrap();
        let base = TrainConfig {
            epochs: 12,
            hidden_dim: 32,
            ..TrainConfig::default()
        };
        let rows = sgr::train::run_ablation(
            &manifest,
            &records,
            &[1, 2, 3, 4, 5],
            &base,
            |name, seed, report| {
                println!(
                    "{name} seed {seed}: map {:.4} auc {:.4} at {:?}",
                    report.map, report.auc, t0.elapsed()
                );
            },
        )
        .unwrap();
        println!("{}", sgr::train::render_ablation_table(&rows));
        for row in &rows {
            println!("{}: per-seed {:?}", row.name, row.map_per_seed);
        }
        println!("elapsed {:?}", t0.elapsed());
    }
}
