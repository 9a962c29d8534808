use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bagio::{BagRecord, Dataset, Split};
use crate::error::{Error, Result};
use crate::heads::{DecodeMode, Task, Vocabulary};
use crate::metrics::{caption_metrics, classification_metrics, EvalReport};
use crate::numerics::{Matrix, SeedStream, Tape};

use super::adam::Adam;
use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::pipeline::{Mode, Pipeline, Target};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub bags: usize,
    /// Mean BCE or caption NLL over the epoch's bags.
    pub task_loss: f64,
    pub clu_loss: f64,
    /// `task_loss + lambda_clu * clu_loss`.
    pub total_loss: f64,
    pub metrics: Option<EvalReport>,
}

impl EpochLog {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log serializes")
    }
}

/// Supervision for `record` under `task`, if it has any.
pub fn target_for(record: &BagRecord, task: Task, vocab: Option<&Vocabulary>) -> Result<Option<Target>> {
    match task {
        Task::Classify => Ok(record.label.map(Target::Label)),
        Task::Caption => match (&record.caption, vocab) {
            (Some(c), Some(v)) => Ok(Some(Target::Caption(v.encode(c)?))),
            (Some(_), None) => Err(Error::Contract("captioning needs a vocabulary".into())),
            (None, _) => Ok(None),
        },
    }
}

/// Sums equally shaped gradient lists in order.
pub(crate) fn merge_gradients(parts: Vec<Vec<Matrix>>, scale: f64) -> Vec<Matrix> {
    let mut iter = parts.into_iter();
    let mut acc = iter.next().unwrap_or_default();
    for part in iter {
        for (a, g) in acc.iter_mut().zip(&part) {
            a.add_assign(g);
        }
    }
    acc.into_iter().map(|g| g.scale(scale)).collect()
}

/// Stateful training loop; one call to [`Trainer::train_epoch`] per epoch.
pub struct Trainer<'d> {
    pub pipeline: Pipeline,
    adam: Adam,
    dataset: &'d Dataset,
    train: Vec<(usize, Target)>,
    epoch: usize,
    pub log: Vec<EpochLog>,
}

impl<'d> Trainer<'d> {
    pub fn new(dataset: &'d Dataset, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let train_bags: Vec<(usize, &BagRecord)> = dataset
            .bags()
            .iter()
            .enumerate()
            .filter(|(_, b)| b.split == Split::Train)
            .map(|(i, b)| (i, &b.record))
            .collect();
        let vocab = match config.task {
            Task::Caption => Some(Vocabulary::build(
                train_bags.iter().filter_map(|(_, r)| r.caption.as_deref()),
            )),
            Task::Classify => None,
        };
        let mut train = Vec::new();
        for (i, record) in &train_bags {
            match target_for(record, config.task, vocab.as_ref())? {
                Some(t) => train.push((*i, t)),
                None => log::warn!(
                    "skipping bag {:?}: no {} supervision",
                    record.patient_id,
                    if config.task == Task::Classify { "label" } else { "caption" }
                ),
            }
        }
        if train.is_empty() {
            return Err(Error::Data(format!("no training bag carries supervision for task {}", config.task)));
        }
        let pipeline = Pipeline::new(config, dataset.d_v(), vocab)?;
        let adam = Adam::for_store(pipeline.config.adam(), &pipeline.store);
        Ok(Self {
            pipeline,
            adam,
            dataset,
            train,
            epoch: 0,
            log: Vec::new(),
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn train_epoch(&mut self) -> Result<EpochLog> {
        let cfg = &self.pipeline.config;
        let seeds = SeedStream::new(cfg.seed).split(self.epoch as u64 + 1);
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut seeds.split(u64::MAX).rng());
        let trainable = self.pipeline.trainable();
        let (mut task_sum, mut clu_sum) = (0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let pipeline = &self.pipeline;
            let dataset = self.dataset;
            let train = &self.train;
            let results: Vec<Result<(Vec<Matrix>, f64, f64)>> = batch
                .par_iter()
                .map(|&slot| {
                    let (bag_index, target) = &train[slot];
                    let embeddings = &dataset.bags()[*bag_index].record.embeddings;
                    let tape = Tape::new();
                    let bound = pipeline.store.bind(&tape);
                    let mode = Mode::Train {
                        seed: seeds.split(*bag_index as u64).seed(),
                    };
                    let loss = pipeline.bag_loss(&bound, &tape, embeddings, target, mode)?;
                    let grads = tape.backward(loss.total)?;
                    Ok((
                        bound.gradients(&grads),
                        loss.task.value().item()?,
                        loss.forward.clu.value().item()?,
                    ))
                })
                .collect();
            let mut parts = Vec::with_capacity(batch.len());
            for r in results {
                let (g, t, c) = r?;
                parts.push(g);
                task_sum += t;
                clu_sum += c;
            }
            let grads = merge_gradients(parts, 1.0 / batch.len() as f64);
            self.adam.step(&mut self.pipeline.store, &grads, &trainable)?;
        }
        self.epoch += 1;
        let n = self.train.len() as f64;
        let task_loss = task_sum / n;
        let clu_loss = clu_sum / n;
        let metrics = self.validation_metrics()?;
        let entry = EpochLog {
            epoch: self.epoch,
            bags: self.train.len(),
            task_loss,
            clu_loss,
            total_loss: task_loss + self.pipeline.config.lambda_clu * clu_loss,
            metrics,
        };
        self.log.push(entry.clone());
        Ok(entry)
    }

    fn validation_metrics(&self) -> Result<Option<EvalReport>> {
        if self.dataset.split(Split::Val).is_empty() {
            return Ok(None);
        }
        match evaluate_pipeline(&self.pipeline, self.dataset, Split::Val) {
            Ok(r) => Ok(Some(r)),
            Err(e @ (Error::NonFinite(_) | Error::Dimension(_))) => Err(e),
            Err(e) => {
                log::warn!("validation metrics unavailable: {e}");
                Ok(None)
            }
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_pipeline(&self.pipeline, self.epoch as u64)
    }

    /// Runs the remaining epochs of the configured budget.
    pub fn run(mut self) -> Result<(Checkpoint, Vec<EpochLog>)> {
        while self.epoch < self.pipeline.config.epochs {
            self.train_epoch()?;
        }
        Ok((self.checkpoint(), self.log))
    }
}

pub fn train(dataset: &Dataset, config: TrainConfig) -> Result<(Checkpoint, Vec<EpochLog>)> {
    Trainer::new(dataset, config)?.run()
}

/// One bag's eval-mode output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub patient_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

pub fn predict_split(pipeline: &Pipeline, dataset: &Dataset, split: Split) -> Result<Vec<Prediction>> {
    let bags = dataset.split(split);
    if bags.is_empty() {
        return Err(Error::Data(format!("the {split} split is empty")));
    }
    bags.par_iter()
        .map(|record| {
            let mut p = Prediction {
                patient_id: record.patient_id.clone(),
                label: record.label,
                score: None,
                reference: record.caption.clone(),
                caption: None,
            };
            match pipeline.config.task {
                Task::Classify => p.score = Some(pipeline.predict(&record.embeddings)?),
                Task::Caption => p.caption = Some(pipeline.caption(&record.embeddings, DecodeMode::Greedy)?),
            }
            Ok(p)
        })
        .collect()
}

/// Metrics for already computed predictions.
pub fn report_from_predictions(task: Task, predictions: &[Prediction]) -> Result<EvalReport> {
    let mut report = EvalReport {
        task: task.to_string(),
        bags: predictions.len(),
        classification: None,
        caption: None,
    };
    match task {
        Task::Classify => {
            let (scores, labels): (Vec<f64>, Vec<bool>) = predictions
                .iter()
                .filter_map(|p| Some((p.score?, p.label?)))
                .unzip();
            report.bags = scores.len();
            report.classification = Some(classification_metrics(&scores, &labels, 0.5)?);
        }
        Task::Caption => {
            let (cands, refs): (Vec<String>, Vec<String>) = predictions
                .iter()
                .filter_map(|p| Some((p.caption.clone()?, p.reference.clone()?)))
                .unzip();
            if cands.is_empty() {
                return Err(Error::Data("no evaluated bag has a reference caption".into()));
            }
            report.bags = cands.len();
            report.caption = Some(caption_metrics(&cands, &refs));
        }
    }
    Ok(report)
}

pub fn evaluate_pipeline(pipeline: &Pipeline, dataset: &Dataset, split: Split) -> Result<EvalReport> {
    let predictions = predict_split(pipeline, dataset, split)?;
    report_from_predictions(pipeline.config.task, &predictions)
}

pub fn evaluate(dataset: &Dataset, checkpoint: &Checkpoint, split: Split) -> Result<EvalReport> {
    evaluate_pipeline(&checkpoint.to_pipeline()?, dataset, split)
}
