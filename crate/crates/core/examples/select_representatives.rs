//! Drops near-duplicate patches: cluster a bag, then keep one attention-chosen
//! representative per cluster and check it against the hidden regions.

use milcap::attnsel::{AttnSelector, ScoreKind};
use milcap::bagio::{generate_bag, SyntheticSpec};
use milcap::dec::dec_fit;
use milcap::numerics::{ParamStore, SeedStream};
use milcap::trainer::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec {
        region_count: 4,
        copies_per_region: 5,
        seed: 11,
        ..SyntheticSpec::default()
    };
    let bag = generate_bag(&spec)?;
    let emb = &bag.record.embeddings;
    let config = TrainConfig { k: 4, ..TrainConfig::default() };
    let clusters = dec_fit(emb, &config.dec(false))?;

    let mut store = ParamStore::new();
    let selector = AttnSelector::register(&mut store, "sel", emb.cols(), ScoreKind::SelfDot, &mut SeedStream::new(1).rng())?;
    let picked = selector.select(&store, emb, &clusters.assignments, config.k)?;
    println!("{} patches -> {} representatives", emb.rows(), picked.clusters.len());
    for c in &picked.clusters {
        let best = c.alpha.iter().cloned().fold(0.0, f64::max);
        println!(
            "cluster {}: {} members, representative patch {} (region {}), alpha {best:.3}",
            c.cluster,
            c.members.len(),
            c.representative,
            bag.truth.region_of_patch[c.representative]
        );
    }
    Ok(())
}
