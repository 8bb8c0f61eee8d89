//! Prints the class-pair ANND structure of the synthetic fleet: intra- and
//! inter-class min/mean/max, plus per-class track length and speed.
//!
//!     cargo run --release -p pathclust --example separations [--full] [seed]

use std::collections::BTreeMap;

use pathclust::annd::{distance_matrix, Path};
use pathclust::geo::{make_projection, project};
use pathclust::synth::{default_config, generate};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let full = args.iter().any(|a| a == "--full");
    let seed: u64 = args
        .iter()
        .rfind(|a| *a != "--full")
        .and_then(|a| a.parse().ok())
        .unwrap_or(1);

    let mut config = default_config();
    config.seed = seed;
    if !full {
        config.counts = config
            .counts
            .iter()
            .map(|(k, &n)| (k.clone(), n.min(4)))
            .collect();
    }
    let fleet = generate(&config).expect("generate");
    let proj = make_projection(fleet[0].voyage.points[0].position).expect("projection");

    let mut paths = Vec::new();
    let mut class_of = Vec::new();
    let mut lengths: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut speeds: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for lv in &fleet {
        let pts = lv.voyage.points.iter().map(|p| project(p.position, &proj)).collect();
        paths.push(Path::new(lv.voyage.id.clone(), pts).expect("path"));
        class_of.push(lv.class_label.as_str());
        lengths.entry(lv.class_label.as_str()).or_default().push(lv.voyage.distance_m());
        speeds
            .entry(lv.class_label.as_str())
            .or_default()
            .push(lv.voyage.distance_m() / lv.voyage.duration_secs());
    }
    let matrix = distance_matrix(&paths).expect("matrix");

    let classes: Vec<&str> = lengths.keys().copied().collect();
    println!("seed {seed}, {} voyages", fleet.len());
    println!("\nclass  mean_len_m  mean_speed");
    for c in &classes {
        let ls = &lengths[c];
        let ss = &speeds[c];
        println!(
            "{c:<5}  {:>10.1}  {:>10.3}",
            ls.iter().sum::<f64>() / ls.len() as f64,
            ss.iter().sum::<f64>() / ss.len() as f64
        );
    }

    println!("\npair    min      mean     max");
    for (i, a) in classes.iter().enumerate() {
        for b in classes.iter().skip(i) {
            let mut values = Vec::new();
            for x in 0..paths.len() {
                for y in (x + 1)..paths.len() {
                    let pair = (class_of[x], class_of[y]);
                    if pair == (*a, *b) || pair == (*b, *a) {
                        values.push(matrix.values[x][y]);
                    }
                }
            }
            if values.is_empty() {
                continue;
            }
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            println!("{a:<3}-{b:<3} {min:>8.1} {mean:>8.1} {max:>8.1}");
        }
    }
}
