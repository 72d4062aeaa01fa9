use serde::{Deserialize, Serialize};

use crate::evalkit::{macro_f1, StanceExample};
use crate::layers::cross_entropy_mean;
use crate::numerics::{Adam, ParamStore, RngStream, Tape, Tensor, Var};
use crate::scalar::{argmax, softmax, Scalar};
use crate::stance::model::{recon_loss_tape, Prepared};
use crate::stance::{commonsense_feature, KnowledgeSource, StanceConfig, StanceError, StanceLabel, StanceModel};
use crate::textenc::{tokenize, SentimentEncoder, Vocabulary};

const INIT_STREAM: u64 = 0x7374_616e_6365;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StanceEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub cls_loss: f64,
    pub recon_loss: f64,
    pub dev_macro_f1: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StanceReport {
    pub epochs: Vec<StanceEpoch>,
    /// Epoch whose parameters were kept (highest dev macro-F1, earliest on ties).
    pub best_epoch: usize,
    pub best_dev_macro_f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<T> {
    pub id: String,
    /// Probabilities in Pro, Con, Neu order.
    pub probs: [T; 3],
    pub predicted: StanceLabel,
}

/// `example_id, pro_prob, con_prob, neu_prob, predicted` rows, tab separated.
pub fn predictions_tsv<T: Scalar>(preds: &[Prediction<T>]) -> String {
    let mut s = String::from("example_id\tpro_prob\tcon_prob\tneu_prob\tpredicted\n");
    for p in preds {
        s.push_str(&format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{}\n",
            p.id,
            p.probs[0].as_f64(),
            p.probs[1].as_f64(),
            p.probs[2].as_f64(),
            p.predicted.as_str()
        ));
    }
    s
}

impl<T: Scalar> StanceModel<T> {
    pub(crate) fn prepare(
        &self,
        examples: &[StanceExample],
        kg: Option<&KnowledgeSource<'_, T>>,
    ) -> Result<Vec<Prepared<T>>, StanceError> {
        let v = self.variant();
        if v.use_kg && kg.is_none() {
            return Err(StanceError::MissingKnowledge(v.name()));
        }
        let max_len = |b: &crate::stance::model::Branch| b.encoder.config.max_len;
        examples
            .iter()
            .map(|ex| {
                let ctx = match &self.context {
                    Some(b) => Some(tokenize(&ex.document, &ex.topic, &b.vocab, max_len(b))?),
                    None => None,
                };
                let (sent, sent_hidden) = match &self.sentiment {
                    Some(b) => {
                        let seq = tokenize(&ex.document, &ex.topic, &b.vocab, max_len(b))?;
                        let cached = if v.sentiment_trainable() {
                            None
                        } else {
                            Some(b.encoder.encode(&self.store, &seq)?.hidden)
                        };
                        (Some(seq), cached)
                    }
                    None => (None, None),
                };
                let h_kg = match (v.use_kg, kg) {
                    (true, Some(src)) => {
                        let f = commonsense_feature(&ex.document, &ex.topic, src);
                        Some(Tensor::row_vector(f.h_kg))
                    }
                    _ => None,
                };
                Ok(Prepared {
                    ctx,
                    sent,
                    sent_hidden,
                    h_kg,
                })
            })
            .collect()
    }

    fn predict_prepared(&self, ids: &[&str], prepared: &[Prepared<T>]) -> Result<Vec<Prediction<T>>, StanceError> {
        ids.iter()
            .zip(prepared)
            .map(|(id, ex)| {
                let mut tape = Tape::new();
                let out = self.forward(&mut tape, &self.store, ex, None)?;
                let p = softmax(tape.value(out.logits).row(0));
                let probs = [p[0], p[1], p[2]];
                Ok(Prediction {
                    id: id.to_string(),
                    probs,
                    predicted: StanceLabel::from_index(argmax(&probs)).expect("three classes"),
                })
            })
            .collect()
    }

    /// Eval-mode class probabilities for each example.
    pub fn predict(
        &self,
        examples: &[StanceExample],
        kg: Option<&KnowledgeSource<'_, T>>,
    ) -> Result<Vec<Prediction<T>>, StanceError> {
        let prepared = self.prepare(examples, kg)?;
        let ids: Vec<&str> = examples.iter().map(|e| e.id.as_str()).collect();
        self.predict_prepared(&ids, &prepared)
    }
}

/// Inputs of a fixed batch, tokenized and with frozen encodings cached,
/// for evaluating the training objective repeatedly.
#[derive(Clone, Debug)]
pub struct PreparedBatch<T> {
    items: Vec<Prepared<T>>,
    golds: Vec<usize>,
}

impl<T> PreparedBatch<T> {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

impl<T: Scalar> StanceModel<T> {
    pub fn prepare_batch(
        &self,
        examples: &[StanceExample],
        kg: Option<&KnowledgeSource<'_, T>>,
    ) -> Result<PreparedBatch<T>, StanceError> {
        if examples.is_empty() {
            return Err(StanceError::EmptyDataset("batch"));
        }
        Ok(PreparedBatch {
            items: self.prepare(examples, kg)?,
            golds: examples.iter().map(|e| e.gold.index()).collect(),
        })
    }

    /// Total training loss of `batch` under the parameters in `store`,
    /// without dropout.
    pub fn batch_objective(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        batch: &PreparedBatch<T>,
    ) -> Result<Var, StanceError> {
        let refs: Vec<&Prepared<T>> = batch.items.iter().collect();
        Ok(batch_loss(self, tape, store, &refs, &batch.golds, None)?.total)
    }
}

pub(crate) struct BatchLoss {
    pub total: Var,
    pub cls: Var,
    pub recon: Option<Var>,
}

/// Classification cross-entropy plus `lambda` times the reconstruction
/// penalty over one batch.
pub(crate) fn batch_loss<T: Scalar>(
    model: &StanceModel<T>,
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    batch: &[&Prepared<T>],
    golds: &[usize],
    mut dropout: Option<&mut RngStream>,
) -> Result<BatchLoss, StanceError> {
    let mut logits = Vec::with_capacity(batch.len());
    let (mut hks, mut hkgs) = (Vec::new(), Vec::new());
    for ex in batch {
        let out = model.forward(tape, store, ex, dropout.as_deref_mut())?;
        logits.push(out.logits);
        if let (Some(k), Some(g)) = (out.h_k, out.h_kg) {
            hks.push(k);
            hkgs.push(g);
        }
    }
    let logits = tape.concat_rows(&logits)?;
    let cls = cross_entropy_mean(tape, logits, golds)?;
    let lambda = model.config.effective_lambda();
    if hks.is_empty() {
        return Ok(BatchLoss {
            total: cls,
            cls,
            recon: None,
        });
    }
    let hk = tape.concat_rows(&hks)?;
    let hkg = tape.concat_rows(&hkgs)?;
    let recon = recon_loss_tape(tape, store, hk, hkg)?;
    let weighted = tape.scale(recon, T::lit(lambda));
    let total = tape.add(cls, weighted)?;
    Ok(BatchLoss {
        total,
        cls,
        recon: Some(recon),
    })
}

/// Minibatch Adam training. Dev macro-F1 is computed after every epoch and
/// the parameters of the best epoch are returned.
pub fn train_stance<T: Scalar>(
    train: &[StanceExample],
    dev: &[StanceExample],
    kg: Option<&KnowledgeSource<'_, T>>,
    sentiment: Option<&SentimentEncoder<T>>,
    cfg: &StanceConfig,
    rng: &mut RngStream,
) -> Result<(StanceModel<T>, StanceReport), StanceError> {
    let v = cfg.variant;
    v.validate()?;
    if train.is_empty() {
        return Err(StanceError::EmptyDataset("training"));
    }
    if dev.is_empty() {
        return Err(StanceError::EmptyDataset("dev"));
    }
    if v.use_kg && kg.is_none() {
        return Err(StanceError::MissingKnowledge(v.name()));
    }
    if cfg.batch_size == 0 {
        return Err(StanceError::Config("batch_size must be >= 1".into()));
    }
    let vocab = v.use_context.then(|| {
        Vocabulary::build(
            train.iter().flat_map(|e| [e.document.as_str(), e.topic.as_str()]),
            cfg.min_freq,
        )
    });
    let kg = if v.use_kg { kg } else { None };
    let kg_dim = kg.map(|k| k.features.dim());
    let mut model = StanceModel::init(cfg, vocab, sentiment, kg_dim, &mut rng.derive(INIT_STREAM))?;

    let train_prep = model.prepare(train, kg)?;
    let dev_prep = model.prepare(dev, kg)?;
    let dev_ids: Vec<&str> = dev.iter().map(|e| e.id.as_str()).collect();
    let dev_golds: Vec<StanceLabel> = dev.iter().map(|e| e.gold).collect();

    let mut adam = Adam::new(cfg.adam);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut report = StanceReport {
        best_dev_macro_f1: -1.0,
        ..Default::default()
    };
    let mut best_store = model.store.clone();
    let use_dropout = cfg.encoder.dropout > 0.0;
    for epoch in 1..=cfg.epochs {
        rng.shuffle(&mut order);
        let (mut loss_sum, mut cls_sum, mut rec_sum) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Prepared<T>> = chunk.iter().map(|&i| &train_prep[i]).collect();
            let golds: Vec<usize> = chunk.iter().map(|&i| train[i].gold.index()).collect();
            let mut tape = Tape::new();
            let dropout = if use_dropout { Some(&mut *rng) } else { None };
            let loss = batch_loss(&model, &mut tape, &model.store, &batch, &golds, dropout)?;
            let grads = tape.backward(loss.total)?;
            model.store.clear_grads();
            model.store.accumulate_grads(tape.param_grads(&grads))?;
            model.store.fill_missing_grads();
            adam.step(&mut model.store)?;
            let w = chunk.len() as f64;
            loss_sum += w * tape.value(loss.total).item().as_f64();
            cls_sum += w * tape.value(loss.cls).item().as_f64();
            rec_sum += w * loss.recon.map_or(0.0, |r| tape.value(r).item().as_f64());
        }
        model.store.clear_grads();
        let preds = model.predict_prepared(&dev_ids, &dev_prep)?;
        let labels: Vec<StanceLabel> = preds.iter().map(|p| p.predicted).collect();
        let f1 = macro_f1(&labels, &dev_golds)?.macro_f1;
        let n = train.len() as f64;
        report.epochs.push(StanceEpoch {
            epoch,
            loss: loss_sum / n,
            cls_loss: cls_sum / n,
            recon_loss: rec_sum / n,
            dev_macro_f1: f1,
        });
        if f1 > report.best_dev_macro_f1 {
            report.best_dev_macro_f1 = f1;
            report.best_epoch = epoch;
            best_store = model.store.clone();
        }
    }
    if report.best_epoch > 0 {
        model.store = best_store;
    }
    Ok((model, report))
}
