//! Fits the caption decoder to twenty template captions and decodes them
//! greedily and by sampling.

use milcap::bagio::{generate_bags, Dataset, Split, SyntheticSpec};
use milcap::heads::{DecodeMode, Task};
use milcap::trainer::{evaluate_pipeline, TrainConfig, Trainer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec {
        seed: 5,
        with_caption: true,
        positive_region_prob: 0.2,
        ..SyntheticSpec::default()
    };
    let records: Vec<_> = generate_bags(&spec, 20)?.into_iter().map(|b| b.record).collect();
    let data = Dataset::from_records(records, Split::Train)?;
    let config = TrainConfig {
        task: Task::Caption,
        k: 5,
        seed: 2,
        dropout: 0.0,
        epochs: 30,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(&data, config)?;
    while trainer.epoch() < 30 {
        let e = trainer.train_epoch()?;
        if trainer.epoch() % 10 == 0 {
            let m = evaluate_pipeline(&trainer.pipeline, &data, Split::Train)?.caption.unwrap();
            println!("epoch {}: nll {:.3} BLEU@4 {:.3} ROUGE-L {:.3}", trainer.epoch(), e.task_loss, m.bleu[3], m.rouge_l);
        }
    }
    let p = &trainer.pipeline;
    for r in data.records().take(3) {
        println!("reference: {}", r.caption.as_deref().unwrap_or(""));
        println!("greedy:    {}", p.caption(&r.embeddings, DecodeMode::Greedy)?);
        println!("sampled:   {}", p.caption(&r.embeddings, DecodeMode::Sample { temperature: 1.2, seed: 9 })?);
    }
    Ok(())
}
