use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kgae::distmult::distmult_logits;
use crate::kgae::rgcn::{rgcn_forward_tape, MessageGraph};
use crate::kgae::sampling::{corrupt, sample_negatives, TripleSample};
use crate::kgae::{AutoencoderParams, KgaeConfig, KgaeError, EVAL_STREAM, INIT_STREAM, SPLIT_STREAM};
use crate::kgraph::{ConceptId, KnowledgeGraph, Triple};
use crate::numerics::{
    load_checkpoint, save_checkpoint, Adam, NumericsError, ParamStore, RngStream, Tape, Tensor, Var,
};
use crate::scalar::Scalar;

const SCORE_FLOOR: f64 = 1e-12;

/// Binary cross-entropy over labeled samples given raw logits `n x 1`,
/// averaged over all `n = 2|E'|` samples.
pub fn autoencoder_loss_tape<T: Scalar>(
    tape: &mut Tape<T>,
    samples: &[TripleSample],
    logits: Var,
) -> Result<Var, KgaeError> {
    if tape.value(logits).rows() != samples.len() || samples.is_empty() {
        return Err(KgaeError::Dimension(format!(
            "{} logits for {} samples",
            tape.value(logits).rows(),
            samples.len()
        )));
    }
    let s = tape.sigmoid(logits);
    let s = tape.clamp(s, T::lit(SCORE_FLOOR), T::lit(1.0 - SCORE_FLOOR));
    let ln_s = tape.ln(s)?;
    let neg = tape.scale(s, -T::one());
    let one_minus = tape.add_scalar(neg, T::one());
    let ln_1s = tape.ln(one_minus)?;
    let u: Vec<T> = samples.iter().map(|x| T::lit(x.label())).collect();
    let not_u: Vec<T> = samples.iter().map(|x| T::lit(1.0 - x.label())).collect();
    let u = tape.constant(Tensor::from_vec(&[samples.len(), 1], u)?);
    let not_u = tape.constant(Tensor::from_vec(&[samples.len(), 1], not_u)?);
    let a = tape.mul(u, ln_s)?;
    let b = tape.mul(not_u, ln_1s)?;
    let ll = tape.add(a, b)?;
    let mean = tape.mean_all(ll);
    Ok(tape.scale(mean, -T::one()))
}

/// Loss value for fixed embeddings `h` (|V| x d).
pub fn autoencoder_loss<T: Scalar>(
    samples: &[TripleSample],
    params: &AutoencoderParams<T>,
    embeddings: &Tensor<T>,
) -> Result<T, KgaeError> {
    let mut tape = Tape::new();
    let h = tape.constant(embeddings.clone());
    let r = tape.constant(params.store.get("r_diag")?.clone());
    let logits = distmult_logits(&mut tape, h, r, samples)?;
    let loss = autoencoder_loss_tape(&mut tape, samples, logits)?;
    Ok(tape.value(loss).item())
}

/// Rank-based ROC AUC; ties count one half. `None` when either side is empty.
pub fn roc_auc(positive: &[f64], negative: &[f64]) -> Option<f64> {
    if positive.is_empty() || negative.is_empty() {
        return None;
    }
    let mut all: Vec<(f64, bool)> = positive
        .iter()
        .map(|&s| (s, true))
        .chain(negative.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg_rank * all[i..=j].iter().filter(|x| x.1).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (positive.len() as f64, negative.len() as f64);
    Some((rank_sum - np * (np + 1.0) / 2.0) / (np * nn))
}

/// AUC of DistMult scores separating `positives` from `negatives`, with
/// embeddings computed from `message_edges`.
pub fn heldout_auc<T: Scalar>(
    graph: &KnowledgeGraph,
    params: &AutoencoderParams<T>,
    message_edges: &[Triple],
    positives: &[Triple],
    negatives: &[Triple],
) -> Result<Option<f64>, KgaeError> {
    let h = crate::kgae::rgcn_forward(graph, params, message_edges)?;
    let score = |t: &Triple| -> Result<f64, KgaeError> {
        Ok(crate::kgae::distmult_score(h.row(t.head.index()), t.rel, h.row(t.tail.index()), params)?.as_f64())
    };
    let pos = positives.iter().map(score).collect::<Result<Vec<_>, _>>()?;
    let neg = negatives.iter().map(score).collect::<Result<Vec<_>, _>>()?;
    Ok(roc_auc(&pos, &neg))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub auc: Option<f64>,
    /// |Ê′| for this epoch.
    #[serde(skip)]
    pub sampled_edges: usize,
    /// |T| for this epoch.
    #[serde(skip)]
    pub samples: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct KgaeReport {
    /// AUC of the untrained model on the held-out edges.
    pub initial_auc: Option<f64>,
    pub epochs: Vec<EpochMetrics>,
    /// Edges available for training (also the evaluation message graph).
    pub train_edges: Vec<Triple>,
    pub heldout_edges: Vec<Triple>,
}

impl KgaeReport {
    pub fn final_auc(&self) -> Option<f64> {
        self.epochs.last().map_or(self.initial_auc, |m| m.auc)
    }

    /// One JSON object per epoch.
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|m| serde_json::to_string(m).expect("metrics serialize") + "\n")
            .collect()
    }
}

fn filtered_negatives(
    positives: &[Triple],
    graph: &KnowledgeGraph,
    per_edge: usize,
    rng: &mut RngStream,
) -> Result<Vec<Triple>, KgaeError> {
    let known: BTreeSet<Triple> = graph.triples().iter().copied().collect();
    let mut out = Vec::new();
    for &p in positives {
        let mut found = 0;
        let mut attempts = 0;
        while found < per_edge && attempts < 64 * per_edge.max(1) {
            attempts += 1;
            let c = corrupt(p, graph.num_concepts(), graph.num_relations(), rng)?;
            if !known.contains(&c) {
                out.push(c);
                found += 1;
            }
        }
    }
    Ok(out)
}

/// Trains the autoencoder and returns its parameters with per-epoch
/// metrics. Each epoch draws a fresh edge subset that serves both as the
/// message graph and as the positives for the loss.
pub fn pretrain_kgae<T: Scalar>(
    graph: &KnowledgeGraph,
    cfg: &KgaeConfig,
    rng: &mut RngStream,
) -> Result<(AutoencoderParams<T>, KgaeReport), KgaeError> {
    if graph.num_triples() == 0 {
        return Err(KgaeError::EmptyGraph);
    }
    if !(cfg.edge_keep_prob > 0.0 && cfg.edge_keep_prob <= 1.0) {
        return Err(KgaeError::Dimension(format!("edge_keep_prob {} outside (0, 1]", cfg.edge_keep_prob)));
    }
    let mut params = AutoencoderParams::init(graph, cfg, &mut rng.derive(INIT_STREAM))?;

    let mut order: Vec<usize> = (0..graph.num_triples()).collect();
    rng.derive(SPLIT_STREAM).shuffle(&mut order);
    let n_hold = ((cfg.holdout_fraction.clamp(0.0, 1.0) * graph.num_triples() as f64).round() as usize)
        .min(graph.num_triples() - 1);
    let mut heldout: Vec<Triple> = order[..n_hold].iter().map(|&i| graph.triples()[i]).collect();
    let mut train: Vec<Triple> = order[n_hold..].iter().map(|&i| graph.triples()[i]).collect();
    heldout.sort();
    train.sort();
    let eval_neg = filtered_negatives(&heldout, graph, cfg.eval_negatives, &mut rng.derive(EVAL_STREAM))?;
    let eval = |p: &AutoencoderParams<T>| heldout_auc(graph, p, &train, &heldout, &eval_neg);

    let mut report = KgaeReport {
        initial_auc: eval(&params)?,
        epochs: Vec::with_capacity(cfg.epochs),
        train_edges: train.clone(),
        heldout_edges: heldout.clone(),
    };
    let mut adam = Adam::new(cfg.adam);
    for epoch in 1..=cfg.epochs {
        let mut subset: Vec<Triple> = train.iter().copied().filter(|_| rng.bernoulli(cfg.edge_keep_prob)).collect();
        if subset.is_empty() {
            subset.push(train[rng.below(train.len())]);
        }
        let msg = MessageGraph::for_params(&params, &subset)?;
        let set = sample_negatives(&subset, graph, rng)?;

        let mut tape = Tape::new();
        let g = tape.param(&params.store, "g")?;
        let h = rgcn_forward_tape(&mut tape, &params, &msg, g)?;
        let r = tape.param(&params.store, "r_diag")?;
        let logits = distmult_logits(&mut tape, h, r, &set.samples)?;
        let loss = autoencoder_loss_tape(&mut tape, &set.samples, logits)?;
        let grads = tape.backward(loss)?;
        params.store.clear_grads();
        params.store.accumulate_grads(tape.param_grads(&grads))?;
        params.store.fill_missing_grads();
        adam.step(&mut params.store)?;

        report.epochs.push(EpochMetrics {
            epoch,
            loss: tape.value(loss).item().as_f64(),
            auc: eval(&params)?,
            sampled_edges: set.source_edge_count,
            samples: set.samples.len(),
        });
    }
    params.store.clear_grads();
    Ok((params, report))
}

/// Frozen per-concept feature table (|V| x d), rows indexed by concept id.
#[derive(Clone, Debug, PartialEq)]
pub struct ConceptFeatures<T> {
    pub table: Tensor<T>,
    pub labels: Vec<String>,
}

const FEATURE_NAME: &str = "concept_features";

impl<T: Scalar> ConceptFeatures<T> {
    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn len(&self) -> usize {
        self.table.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.table.rows() == 0
    }

    pub fn row(&self, id: ConceptId) -> &[T] {
        self.table.row(id.index())
    }

    pub fn save(&self, dir: &Path) -> Result<(), NumericsError> {
        let mut store = ParamStore::new();
        store.insert(FEATURE_NAME, self.table.clone(), false);
        save_checkpoint(dir, &store, serde_json::json!({ "kind": FEATURE_NAME, "labels": self.labels }))
    }

    pub fn load(dir: &Path) -> Result<Self, NumericsError> {
        let (store, meta) = load_checkpoint::<T>(dir)?;
        let table = store.get(FEATURE_NAME)?.clone();
        let labels: Vec<String> = meta
            .get("labels")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .ok_or_else(|| NumericsError::Checkpoint("feature archive lacks concept labels".into()))?;
        if labels.len() != table.rows() {
            return Err(NumericsError::Checkpoint(format!(
                "{} labels for {} feature rows",
                labels.len(),
                table.rows()
            )));
        }
        Ok(Self { table, labels })
    }
}

/// Encoder output over the full graph, with every edge as a message.
pub fn export_concept_features<T: Scalar>(
    graph: &KnowledgeGraph,
    params: &AutoencoderParams<T>,
) -> Result<ConceptFeatures<T>, KgaeError> {
    let table = crate::kgae::rgcn_forward(graph, params, graph.triples())?;
    Ok(ConceptFeatures {
        table,
        labels: graph.concept_labels().to_vec(),
    })
}
