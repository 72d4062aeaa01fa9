//! Graph autoencoder over a knowledge graph: a two-layer relational GCN
//! encoder, a DistMult decoder, negative sampling and the pretraining loop
//! that produces frozen concept features.

mod distmult;
mod rgcn;
mod sampling;
mod train;

pub use distmult::{distmult_logits, distmult_score};
pub use rgcn::{rgcn_forward, rgcn_forward_on_subgraph, rgcn_forward_tape, MessageGraph};
pub use sampling::{sample_negatives, NegativeSampleSet, TripleSample};
pub use train::{
    autoencoder_loss, autoencoder_loss_tape, export_concept_features, heldout_auc, pretrain_kgae, roc_auc,
    ConceptFeatures, EpochMetrics, KgaeReport,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kgraph::{KnowledgeGraph, Triple};
use crate::numerics::{scaled_normal, xavier_uniform, AdamConfig, NumericsError, ParamStore, RngStream};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum KgaeError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unknown relation id {0}")]
    UnknownRelation(usize),
    #[error("triple {0:?} references ids outside the graph")]
    InvalidTriple(Triple),
    #[error("cannot corrupt triples: graph has {concepts} concept(s) and {relations} relation(s)")]
    CorruptionImpossible { concepts: usize, relations: usize },
    #[error("no positive triples to sample from")]
    NoPositives,
    #[error("graph is empty")]
    EmptyGraph,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KgaeConfig {
    /// Embedding width `d`.
    pub dim: usize,
    /// Add an inverse message type for every relation.
    pub inverse_relations: bool,
    pub epochs: usize,
    pub adam: AdamConfig,
    /// Per-epoch probability that a training edge enters the message/sample set.
    pub edge_keep_prob: f64,
    /// Fraction of edges held out for AUC monitoring.
    pub holdout_fraction: f64,
    /// Filtered corruptions scored per held-out edge.
    pub eval_negatives: usize,
}

impl Default for KgaeConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            inverse_relations: true,
            epochs: 100,
            adam: AdamConfig::with_lr(1e-2),
            edge_keep_prob: 0.5,
            holdout_fraction: 0.1,
            eval_negatives: 10,
        }
    }
}

pub(crate) const INIT_STREAM: u64 = 0x6b67_6165_0001;
pub(crate) const SPLIT_STREAM: u64 = 0x6b67_6165_0002;
pub(crate) const EVAL_STREAM: u64 = 0x6b67_6165_0003;

/// Trainable autoencoder state: concept features `g`, per-layer relation
/// and self transforms, and DistMult relation diagonals.
///
/// Parameter names: `g` (|V| x d), `layer{1,2}.self` (d x d),
/// `layer{1,2}.rel{m}` (d x d, one per message type), `r_diag` (|R| x d).
/// Transforms act on row vectors (`x · W`).
#[derive(Clone, Debug)]
pub struct AutoencoderParams<T> {
    pub store: ParamStore<T>,
    pub num_concepts: usize,
    pub num_relations: usize,
    pub dim: usize,
    pub inverse_relations: bool,
}

pub const NUM_LAYERS: usize = 2;

impl<T: Scalar> AutoencoderParams<T> {
    pub fn init(graph: &KnowledgeGraph, cfg: &KgaeConfig, rng: &mut RngStream) -> Result<Self, KgaeError> {
        if cfg.dim == 0 {
            return Err(KgaeError::Dimension("embedding width must be >= 1".into()));
        }
        let d = cfg.dim;
        let mut p = Self {
            store: ParamStore::new(),
            num_concepts: graph.num_concepts(),
            num_relations: graph.num_relations(),
            dim: d,
            inverse_relations: cfg.inverse_relations,
        };
        p.store.insert("g", scaled_normal(graph.num_concepts(), d, rng), true);
        for layer in 1..=NUM_LAYERS {
            p.store.insert(Self::self_name(layer), xavier_uniform(d, d, rng), true);
            for m in 0..p.message_types() {
                p.store.insert(Self::rel_name(layer, m), xavier_uniform(d, d, rng), true);
            }
        }
        p.store.insert("r_diag", xavier_uniform(graph.num_relations(), d, rng), true);
        Ok(p)
    }

    pub fn message_types(&self) -> usize {
        if self.inverse_relations {
            2 * self.num_relations
        } else {
            self.num_relations
        }
    }

    pub fn self_name(layer: usize) -> String {
        format!("layer{layer}.self")
    }

    pub fn rel_name(layer: usize, message_type: usize) -> String {
        format!("layer{layer}.rel{message_type}")
    }

    pub(crate) fn check_graph(&self, graph: &KnowledgeGraph) -> Result<(), KgaeError> {
        if graph.num_concepts() != self.num_concepts || graph.num_relations() != self.num_relations {
            return Err(KgaeError::Dimension(format!(
                "params sized for {} concepts / {} relations, graph has {} / {}",
                self.num_concepts,
                self.num_relations,
                graph.num_concepts(),
                graph.num_relations()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
