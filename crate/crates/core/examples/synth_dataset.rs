//! Generates a small synthetic cohort on disk and reloads it through the manifest.
//!
//! Run with `cargo run --example synth_dataset -- /tmp/cohort`.

use milcap::bagio::{generate_bags, write_bagemb, Dataset, Manifest, ManifestEntry, Split, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("milcap-cohort").display().to_string());
    let out = std::path::PathBuf::from(out);
    std::fs::create_dir_all(&out)?;

    let spec = SyntheticSpec {
        region_count: 4,
        copies_per_region: 3,
        d_v: 8,
        with_caption: true,
        seed: 7,
        ..SyntheticSpec::default()
    };
    let bags = generate_bags(&spec, 10)?;
    let mut entries = Vec::new();
    for (i, bag) in bags.iter().enumerate() {
        let file = format!("bag_{i:04}.bagemb");
        write_bagemb(&bag.record, out.join(&file))?;
        entries.push(ManifestEntry {
            path: file,
            split: if i < 8 { Split::Train } else { Split::Test },
            tags: Default::default(),
        });
    }
    let manifest_path = out.join("manifest.json");
    Manifest { d_v: spec.d_v, bags: entries }.save(&manifest_path)?;

    let data = Dataset::load(&manifest_path)?;
    println!("{} bags, d_v {}, {} for training", data.len(), data.d_v(), data.split(Split::Train).len());
    let first = &bags[0];
    println!(
        "{}: {} patches, label {:?}, caption {:?}",
        first.record.patient_id,
        first.record.len(),
        first.record.label,
        first.record.caption
    );
    println!("malignant regions: {:?}", first.truth.region_malignant);
    Ok(())
}
