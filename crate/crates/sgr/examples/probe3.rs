// diagnostic: decompose the compactness ratio (temporary)
use sgr::features::{extract_features, gaussian_blobs, train_classifier, SmoothingConfig};

fn stats(features: &[(Vec<f64>, usize)]) -> (f64, f64, f64) {
    let mut by_class: std::collections::BTreeMap<usize, Vec<&Vec<f64>>> = Default::default();
    for (x, c) in features {
        by_class.entry(*c).or_default().push(x);
    }
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    let mut intra = 0.0;
    let mut n_intra = 0;
    let mut cents = Vec::new();
    for pts in by_class.values() {
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                intra += dist(pts[i], pts[j]);
                n_intra += 1;
            }
        }
        let d = pts[0].len();
        let mut c = vec![0.0; d];
        for p in pts {
            for (s, &v) in c.iter_mut().zip(p.iter()) {
                *s += v;
            }
        }
        for v in &mut c {
            *v /= pts.len() as f64;
        }
        cents.push(c);
    }
    let mut inter = 0.0;
    let mut n_inter = 0;
    for i in 0..cents.len() {
        for j in (i + 1)..cents.len() {
            inter += dist(&cents[i], &cents[j]);
            n_inter += 1;
        }
    }
    let intra = intra / n_intra as f64;
    let inter = inter / n_inter as f64;
    (intra, inter, intra / inter)
}

fn main() {
    let (train, held) = gaussian_blobs(5, 60, 8, 0.8, 2);
    for (label, eps) in [("ls  ", 0.1), ("nols", 0.0)] {
        for epochs in [50usize, 150, 400] {
            let smoothing = SmoothingConfig::new(eps, 5).unwrap();
            let (params, first, last) =
                train_classifier(&train, &smoothing, 48, epochs, 5e-3, 2).unwrap();
            let feats: Vec<(Vec<f64>, usize)> = held
                .iter()
                .map(|(x, c)| (extract_features(&params, x).unwrap(), *c))
                .collect();
            let (intra, inter, ratio) = stats(&feats);
            let tr_feats: Vec<(Vec<f64>, usize)> = train
                .iter()
                .map(|(x, c)| (extract_features(&params, x).unwrap(), *c))
                .collect();
            let (t_intra, t_inter, t_ratio) = stats(&tr_feats);
            let mean_norm: f64 = feats
                .iter()
                .map(|(f, _)| f.iter().map(|v| v * v).sum::<f64>().sqrt())
                .sum::<f64>()
                / feats.len() as f64;
            println!(
                "{label} epochs {epochs:>4}: loss {first:.3}->{last:.3}  held intra {intra:.3} inter {inter:.3} ratio {ratio:.3} | train ratio {t_ratio:.3} (intra {t_intra:.2} inter {t_inter:.2}) | mean|h| {mean_norm:.2}"
            );
        }
    }
}
