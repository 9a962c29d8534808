//! The per-bag forward pass: clustering, selection, graph, GAT, head.

use crate::attnsel::{AttnSelector, ClusterScoreVars, ClusterSelection};
use crate::dec::{clustering_loss_var, dec_fit, soft_assign_var, target_distribution, ClusterState};
use crate::error::{Error, Result};
use crate::gat::GatStack;
use crate::graph::{build_graph, EdgeMode, SimilarityGraph};
use crate::heads::{bce_loss_var, CaptionModel, ClassifierHead, DecodeMode, Task, Vocabulary};
use crate::numerics::{Bound, Matrix, ParamStore, SeedStream, Tape, Var};

use super::config::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Gumbel noise and dropout drawn from this seed; short centroid budget.
    Train { seed: u64 },
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Classifier(ClassifierHead),
    Caption(CaptionModel),
}

/// Parameters and structure of a full model.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub config: TrainConfig,
    pub d_v: usize,
    pub store: ParamStore,
    pub selector: AttnSelector,
    pub gat: GatStack,
    pub head: Head,
    pub vocab: Option<Vocabulary>,
}

/// Intermediate state of one bag's forward pass.
pub struct BagForward<'t> {
    pub cluster: ClusterState,
    pub selection: ClusterSelection,
    pub scores: Vec<ClusterScoreVars<'t>>,
    pub graph: SimilarityGraph,
    /// Fitted centroids as a leaf, so the clustering loss has a gradient.
    pub centroids: Var<'t>,
    pub clu: Var<'t>,
    pub h_mean: Var<'t>,
}

pub struct BagLoss<'t> {
    pub forward: BagForward<'t>,
    pub task: Var<'t>,
    pub total: Var<'t>,
    /// Bag probability for classification.
    pub prob: Option<Var<'t>>,
}

/// What a bag is supervised with.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Label(bool),
    Caption(Vec<usize>),
}

impl Pipeline {
    pub fn new(config: TrainConfig, d_v: usize, vocab: Option<Vocabulary>) -> Result<Self> {
        config.validate()?;
        if d_v == 0 {
            return Err(Error::Contract("d_v must be at least 1".into()));
        }
        let mut rng = SeedStream::new(config.seed).split(0x1417).rng();
        let mut store = ParamStore::new();
        let selector = AttnSelector::register(&mut store, "sel", d_v, config.score_kind, &mut rng)?;
        let gat = GatStack::register(&mut store, "gat", d_v, config.gat(), &mut rng)?;
        let head = match config.task {
            Task::Classify => Head::Classifier(ClassifierHead::register(
                &mut store,
                "head",
                config.d_out,
                config.hidden,
                &mut rng,
            )?),
            Task::Caption => {
                let v = vocab
                    .as_ref()
                    .ok_or_else(|| Error::Contract("captioning needs a vocabulary".into()))?;
                Head::Caption(CaptionModel::register(
                    &mut store,
                    "cap",
                    config.d_out,
                    v.len(),
                    config.caption,
                    &mut rng,
                )?)
            }
        };
        Ok(Self {
            config,
            d_v,
            store,
            selector,
            gat,
            head,
            vocab,
        })
    }

    /// Store-ordered flags: true where the parameter is updated.
    pub fn trainable(&self) -> Vec<bool> {
        self.store.iter().map(|(name, _)| !self.config.is_frozen(name)).collect()
    }

    pub fn forward_bag<'t>(
        &self,
        bound: &Bound<'t>,
        tape: &'t Tape,
        embeddings: &Matrix,
        mode: Mode,
    ) -> Result<BagForward<'t>> {
        if embeddings.cols() != self.d_v {
            return Err(Error::Data(format!(
                "bag has d_v = {}, model expects {}",
                embeddings.cols(),
                self.d_v
            )));
        }
        let train = matches!(mode, Mode::Train { .. });
        let cluster = dec_fit(embeddings, &self.config.dec(train))?;
        let centroids = tape.leaf(cluster.centroids.clone());
        let q = soft_assign_var(tape.leaf(embeddings.clone()), centroids, cluster.alpha)?;
        let clu = clustering_loss_var(&target_distribution(&q.value()), q)?;

        let (selection, scores) =
            self.selector
                .select_on_tape(bound, tape, embeddings, &cluster.assignments, cluster.k)?;
        let (edge_mode, mut dropout_rng) = match mode {
            Mode::Train { seed } => {
                let s = SeedStream::new(seed);
                (
                    EdgeMode::Train {
                        seed: s.split(1).seed(),
                        tau: self.config.tau,
                    },
                    Some(s.split(2).rng()),
                )
            }
            Mode::Eval => (EdgeMode::Eval, None),
        };
        let graph = build_graph(&selection.r, edge_mode, &self.config.graph())?;
        let nodes = tape.leaf(graph.nodes.clone());
        let out = self.gat.forward(bound, nodes, &graph.adjacency, dropout_rng.as_mut())?;
        Ok(BagForward {
            cluster,
            selection,
            scores,
            graph,
            centroids,
            clu,
            h_mean: out.h_mean,
        })
    }

    pub fn bag_loss<'t>(
        &self,
        bound: &Bound<'t>,
        tape: &'t Tape,
        embeddings: &Matrix,
        target: &Target,
        mode: Mode,
    ) -> Result<BagLoss<'t>> {
        let forward = self.forward_bag(bound, tape, embeddings, mode)?;
        let (task, prob) = match (&self.head, target) {
            (Head::Classifier(head), Target::Label(y)) => {
                let p = head.forward(bound, forward.h_mean)?;
                (bce_loss_var(p, &[*y])?, Some(p))
            }
            (Head::Caption(model), Target::Caption(ids)) => {
                let prefix = model.project_prefix(bound, forward.h_mean)?;
                (model.caption_nll(bound, prefix, ids)?, None)
            }
            _ => return Err(Error::Contract("supervision does not match the task".into())),
        };
        let total = task.add(forward.clu.scale(self.config.lambda_clu)?)?;
        Ok(BagLoss {
            forward,
            task,
            total,
            prob,
        })
    }

    /// Eval-mode bag embedding.
    pub fn bag_embedding(&self, embeddings: &Matrix) -> Result<Matrix> {
        let tape = Tape::new();
        let bound = self.store.bind(&tape);
        let f = self.forward_bag(&bound, &tape, embeddings, Mode::Eval)?;
        Ok(f.h_mean.value().as_ref().clone())
    }

    /// Eval-mode probability that the bag is positive.
    pub fn predict(&self, embeddings: &Matrix) -> Result<f64> {
        let Head::Classifier(head) = &self.head else {
            return Err(Error::Contract("model was built for captioning".into()));
        };
        head.classify(&self.store, &self.bag_embedding(embeddings)?)
    }

    /// Eval-mode caption.
    pub fn caption(&self, embeddings: &Matrix, mode: DecodeMode) -> Result<String> {
        let (Head::Caption(model), Some(vocab)) = (&self.head, &self.vocab) else {
            return Err(Error::Contract("model was built for classification".into()));
        };
        let tape = Tape::new();
        let bound = self.store.bind(&tape);
        let h = tape.leaf(self.bag_embedding(embeddings)?);
        let prefix = model.project_prefix(&bound, h)?.value();
        let ids = model.generate(&self.store, &prefix, model.config.max_len, mode)?;
        Ok(vocab.decode(&ids))
    }
}
