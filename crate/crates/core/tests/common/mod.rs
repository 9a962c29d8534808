#![allow(dead_code)]

use milcap::bagio::{generate_bag, generate_bags, BagRecord, Dataset, Split, SyntheticSpec};
use milcap::heads::{CaptionConfig, Task};
use milcap::numerics::{Matrix, SeedStream};
use milcap::trainer::TrainConfig;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

pub fn uniform_matrix(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> Matrix {
    let mut rng = SeedStream::new(seed).rng();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi)).unwrap()
}

pub fn normal_matrix(rows: usize, cols: usize, sigma: f64, seed: u64) -> Matrix {
    let mut rng = SeedStream::new(seed).rng();
    let n = Normal::new(0.0, sigma).unwrap();
    Matrix::from_fn(rows, cols, |_, _| n.sample(&mut rng)).unwrap()
}

/// Random permutation of `0..n`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut SeedStream::new(seed).rng());
    p
}

/// Tiny model dimensions so finite differences stay cheap.
pub fn tiny_config(task: Task, seed: u64) -> TrainConfig {
    TrainConfig {
        task,
        k: 3,
        d_out: 6,
        gat_layers: 2,
        hidden: 5,
        caption: CaptionConfig {
            d_model: 8,
            heads: 2,
            max_len: 12,
        },
        seed,
        ..TrainConfig::default()
    }
}

pub fn tiny_bag(seed: u64, with_caption: bool) -> BagRecord {
    let spec = SyntheticSpec {
        region_count: 3,
        copies_per_region: 2,
        d_v: 5,
        positive_region_prob: 0.5,
        with_caption,
        seed,
        ..SyntheticSpec::default()
    };
    generate_bag(&spec).unwrap().record
}

pub fn synthetic_dataset(spec: &SyntheticSpec, train: usize, test: usize) -> Dataset {
    let bags = generate_bags(spec, train + test).unwrap();
    Dataset::new(
        bags.into_iter()
            .enumerate()
            .map(|(i, b)| milcap::bagio::DatasetBag {
                record: b.record,
                split: if i < train { Split::Train } else { Split::Test },
                tags: Default::default(),
                source: None,
            })
            .collect(),
    )
    .unwrap()
}

/// Three isotropic blobs `separation` apart along distinct axes.
pub fn blobs(per_blob: usize, dim: usize, separation: f64, sigma: f64, seed: u64) -> (Matrix, Vec<usize>) {
    let mut rng = SeedStream::new(seed).rng();
    let n = Normal::new(0.0, sigma).unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..3 {
        for _ in 0..per_blob {
            rows.push(
                (0..dim)
                    .map(|d| if d == c { separation } else { 0.0 } + n.sample(&mut rng))
                    .collect::<Vec<f64>>(),
            );
            labels.push(c);
        }
    }
    (Matrix::from_rows(&rows).unwrap(), labels)
}

/// Fraction of points whose cluster's majority label equals their own.
pub fn purity(assignments: &[usize], labels: &[usize]) -> f64 {
    let k = assignments.iter().max().map_or(0, |m| m + 1);
    let l = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0usize; l]; k];
    for (&a, &y) in assignments.iter().zip(labels) {
        counts[a][y] += 1;
    }
    counts.iter().map(|c| c.iter().max().copied().unwrap_or(0)).sum::<usize>() as f64 / labels.len() as f64
}

pub mod ops;
pub mod hand;
pub mod scalar;
