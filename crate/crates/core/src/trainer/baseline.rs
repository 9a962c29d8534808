//! Aggregate-then-classify baseline: mean embedding into the same MLP head.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::bagio::{Dataset, Split};
use crate::error::{Error, Result};
use crate::heads::{bce_loss_var, ClassifierHead, Task};
use crate::numerics::{Matrix, ParamStore, SeedStream, Tape};

use super::adam::Adam;
use super::config::TrainConfig;
use super::train::{merge_gradients, report_from_predictions, EpochLog, Prediction};

#[derive(Debug, Clone, PartialEq)]
pub struct AvgPoolBaseline {
    pub store: ParamStore,
    pub head: ClassifierHead,
    pub d_v: usize,
}

fn mean_row(embeddings: &Matrix) -> Matrix {
    let n = embeddings.rows() as f64;
    let mut sums = vec![0.0; embeddings.cols()];
    for row in embeddings.row_iter() {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    Matrix::row_vector(&sums.iter().map(|s| s / n).collect::<Vec<_>>()).expect("finite mean")
}

impl AvgPoolBaseline {
    pub fn new(d_v: usize, config: &TrainConfig) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = SeedStream::new(config.seed).split(0xa5).rng();
        let head = ClassifierHead::register(&mut store, "avg", d_v, config.hidden, &mut rng)?;
        Ok(Self { store, head, d_v })
    }

    pub fn predict(&self, embeddings: &Matrix) -> Result<f64> {
        if embeddings.rows() == 0 {
            return Err(Error::Contract("empty bag".into()));
        }
        self.head.classify(&self.store, &mean_row(embeddings))
    }

    /// Trains with the optimizer, epochs, batch size and seed of `config`.
    pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(Self, Vec<EpochLog>)> {
        config.validate()?;
        let bags: Vec<(Matrix, bool)> = dataset
            .split(Split::Train)
            .into_iter()
            .filter_map(|r| Some((mean_row(&r.embeddings), r.label?)))
            .collect();
        if bags.is_empty() {
            return Err(Error::Data("no labelled training bag".into()));
        }
        let mut model = Self::new(dataset.d_v(), config)?;
        let mut adam = Adam::for_store(config.adam(), &model.store);
        let trainable = vec![true; model.store.len()];
        let mut log = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            let mut order: Vec<usize> = (0..bags.len()).collect();
            order.shuffle(&mut SeedStream::new(config.seed).derive(&[epoch as u64 + 1, u64::MAX]).rng());
            let mut loss_sum = 0.0;
            for batch in order.chunks(config.batch_size) {
                let results: Vec<Result<(Vec<Matrix>, f64)>> = batch
                    .par_iter()
                    .map(|&i| {
                        let tape = Tape::new();
                        let bound = model.store.bind(&tape);
                        let p = model.head.forward(&bound, tape.leaf(bags[i].0.clone()))?;
                        let loss = bce_loss_var(p, &[bags[i].1])?;
                        let grads = tape.backward(loss)?;
                        Ok((bound.gradients(&grads), loss.value().item()?))
                    })
                    .collect();
                let mut parts = Vec::with_capacity(batch.len());
                for r in results {
                    let (g, l) = r?;
                    parts.push(g);
                    loss_sum += l;
                }
                let grads = merge_gradients(parts, 1.0 / batch.len() as f64);
                adam.step(&mut model.store, &grads, &trainable)?;
            }
            let task_loss = loss_sum / bags.len() as f64;
            log.push(EpochLog {
                epoch: epoch + 1,
                bags: bags.len(),
                task_loss,
                clu_loss: 0.0,
                total_loss: task_loss,
                metrics: None,
            });
        }
        Ok((model, log))
    }

    pub fn evaluate(&self, dataset: &Dataset, split: Split) -> Result<crate::metrics::EvalReport> {
        let bags = dataset.split(split);
        if bags.is_empty() {
            return Err(Error::Data(format!("the {split} split is empty")));
        }
        let predictions = bags
            .iter()
            .map(|r| {
                Ok(Prediction {
                    patient_id: r.patient_id.clone(),
                    label: r.label,
                    score: Some(self.predict(&r.embeddings)?),
                    reference: None,
                    caption: None,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        report_from_predictions(Task::Classify, &predictions)
    }
}
