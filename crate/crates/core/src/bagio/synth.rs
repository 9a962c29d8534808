//! Synthetic bags in the microscopy regime: each bag is a handful of tissue
//! regions, every region captured several times with small noise, patches
//! shuffled and without positions, and only the bag-level label kept.
//!
//! Coordinate 0 of the embedding is a marker axis. Benign regions have a
//! marker value in `[-0.5, 0.5] * separation`; a malignant region sits at
//! `+/- 1.5 * separation` with random polarity. The signal is therefore
//! per-instance and nonlinear (its sign carries no class information), so a
//! bag-mean classifier is handicapped while an instance-aware one is not.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::format::BagRecord;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, SeedStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub region_count: usize,
    pub copies_per_region: usize,
    pub d_v: usize,
    pub region_separation: f64,
    pub noise_sigma: f64,
    pub positive_region_prob: f64,
    pub seed: u64,
    /// Attach a template caption describing the malignant regions.
    pub with_caption: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            region_count: 5,
            copies_per_region: 4,
            d_v: 32,
            region_separation: 1.0,
            noise_sigma: 0.05,
            positive_region_prob: 0.13,
            seed: 0,
            with_caption: false,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.region_count == 0 {
            return Err(Error::Contract("region_count must be at least 1".into()));
        }
        if self.copies_per_region == 0 {
            return Err(Error::Contract("copies_per_region must be at least 1".into()));
        }
        if self.d_v == 0 {
            return Err(Error::Contract("d_v must be at least 1".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Contract("noise_sigma must be finite and >= 0".into()));
        }
        if !(self.region_separation > 0.0 && self.region_separation.is_finite()) {
            return Err(Error::Contract("region_separation must be finite and > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.positive_region_prob) {
            return Err(Error::Contract("positive_region_prob must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Spec for the `index`-th bag of a dataset rooted at `self.seed`.
    pub fn for_bag(&self, index: usize) -> Self {
        Self {
            seed: SeedStream::new(self.seed).split(index as u64).seed(),
            ..self.clone()
        }
    }
}

/// Hidden per-patch truth returned alongside a generated bag.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub region_of_patch: Vec<usize>,
    pub instance_labels: Vec<bool>,
    pub region_malignant: Vec<bool>,
    /// +1 / -1 marker polarity of each region (meaningful for malignant ones).
    pub region_polarity: Vec<i8>,
    pub region_centroids: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBag {
    pub record: BagRecord,
    pub truth: GroundTruth,
}

/// Words the template captions draw from.
pub const CAPTION_WORDS: &[&str] = &[
    "adenocarcinoma", "with", "atypical", "focus", "foci", "of", "positive", "negative", "mixed",
    "polarity", "benign", "mucosa", "regular", "and", "no", "atypia", "one", "two", "three",
    "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve", "many",
];

fn count_word(n: usize) -> &'static str {
    const WORDS: [&str; 12] = [
        "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
        "twelve",
    ];
    WORDS.get(n.wrapping_sub(1)).copied().unwrap_or("many")
}

fn focus_word(n: usize) -> &'static str {
    if n == 1 {
        "focus"
    } else {
        "foci"
    }
}

/// Template caption for a bag with the given regions.
pub fn template_caption(malignant: &[bool], polarity: &[i8]) -> String {
    let m = malignant.iter().filter(|&&x| x).count();
    if m == 0 {
        let n = malignant.len();
        return format!(
            "benign mucosa with {} regular {} and no atypia",
            count_word(n),
            focus_word(n)
        );
    }
    let pos = malignant
        .iter()
        .zip(polarity)
        .filter(|(&mal, &p)| mal && p > 0)
        .count();
    let pol = if pos == m {
        "positive"
    } else if pos == 0 {
        "negative"
    } else {
        "mixed"
    };
    format!(
        "adenocarcinoma with {} atypical {} of {pol} polarity",
        count_word(m),
        focus_word(m)
    )
}

fn round_f32(v: f64) -> f64 {
    f64::from(v as f32)
}

fn min_pairwise_distance(rows: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let d: f64 = rows[i]
                .iter()
                .zip(&rows[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            best = best.min(d);
        }
    }
    best
}

pub fn generate_bag(spec: &SyntheticSpec) -> Result<SyntheticBag> {
    spec.validate()?;
    let mut rng = SeedStream::new(spec.seed).rng();
    let k = spec.region_count;
    let d = spec.d_v;
    let sep = spec.region_separation;

    let region_malignant: Vec<bool> = (0..k)
        .map(|_| rng.random_bool(spec.positive_region_prob))
        .collect();
    let region_polarity: Vec<i8> = (0..k)
        .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
        .collect();

    let background_std = sep / ((d.saturating_sub(1)).max(1) as f64).sqrt();
    let mut spread = 1.0;
    let mut attempts = 0;
    let centroids = loop {
        let normal = Normal::new(0.0, background_std * spread).expect("finite std");
        let rows: Vec<Vec<f64>> = (0..k)
            .map(|r| {
                let marker = if region_malignant[r] {
                    1.5 * sep * f64::from(region_polarity[r])
                } else {
                    rng.random_range(-0.5..=0.5) * sep * spread
                };
                std::iter::once(marker)
                    .chain((1..d).map(|_| normal.sample(&mut rng)))
                    .map(round_f32)
                    .collect()
            })
            .collect();
        if min_pairwise_distance(&rows) >= sep {
            break rows;
        }
        attempts += 1;
        if attempts % 200 == 0 {
            spread *= 1.25;
        }
        if attempts >= 5000 {
            return Err(Error::Contract(format!(
                "could not place {k} regions {sep} apart in {d} dimensions"
            )));
        }
    };

    let noise = Normal::new(0.0, spec.noise_sigma.max(0.0)).expect("finite sigma");
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::with_capacity(k * spec.copies_per_region);
    for (r, c) in centroids.iter().enumerate() {
        for _ in 0..spec.copies_per_region {
            let patch = c
                .iter()
                .map(|&v| {
                    let n = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    round_f32(v + n)
                })
                .collect();
            rows.push((r, patch));
        }
    }
    rows.shuffle(&mut rng);

    let region_of_patch: Vec<usize> = rows.iter().map(|(r, _)| *r).collect();
    let instance_labels = region_of_patch.iter().map(|&r| region_malignant[r]).collect();
    let label = region_malignant.iter().any(|&m| m);
    let embeddings = Matrix::new(
        rows.len(),
        d,
        rows.into_iter().flat_map(|(_, p)| p).collect(),
    )?;
    let caption = spec
        .with_caption
        .then(|| template_caption(&region_malignant, &region_polarity));
    let record = BagRecord::new(format!("synth-{:016x}", spec.seed), embeddings, Some(label), caption)?;
    let region_centroids = Matrix::from_rows(&centroids)?;
    Ok(SyntheticBag {
        record,
        truth: GroundTruth {
            region_of_patch,
            instance_labels,
            region_malignant,
            region_polarity,
            region_centroids,
        },
    })
}

/// `count` bags whose seeds derive from `spec.seed` and the bag index.
pub fn generate_bags(spec: &SyntheticSpec, count: usize) -> Result<Vec<SyntheticBag>> {
    (0..count).map(|i| generate_bag(&spec.for_bag(i))).collect()
}
