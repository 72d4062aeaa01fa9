use std::path::Path;

use crate::layers::{block_forward, init_block, init_linear, linear, BlockDims, Dropout};
use crate::numerics::{
    load_checkpoint, save_checkpoint, NumericsError, ParamStore, RngStream, Tape, Tensor, Var,
};
use crate::scalar::{softmax, Scalar};
use crate::stance::{ModelVariant, StanceConfig, StanceError, StanceLabel};
use crate::textenc::{EncoderConfig, SentimentEncoder, TextEncoder, TokenSequence, Vocabulary};

pub(crate) const CTX_PREFIX: &str = "ctx.";
pub(crate) const FUSION: &str = "fusion.block";
pub(crate) const KG_PROJ: &str = "kg.proj";
pub(crate) const KG_RECON: &str = "kg.recon";
pub(crate) const CLASSIFIER: &str = "cls";
const PROB_FLOOR: f64 = 1e-12;

/// One text branch: an encoder and the vocabulary it reads.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub encoder: TextEncoder,
    pub vocab: Vocabulary,
}

/// Trainable stance model. Every parameter lives in `store`: the context
/// encoder under `ctx.`, the sentiment encoder under its own prefix
/// (frozen unless it is the only text branch), the KG projection and
/// reconstruction layers, the fusion block and the classifier.
#[derive(Clone, Debug)]
pub struct StanceModel<T> {
    pub config: StanceConfig,
    pub store: ParamStore<T>,
    pub context: Option<Branch>,
    pub sentiment: Option<Branch>,
    /// Width of the concept features when the KG branch is on.
    pub kg_dim: Option<usize>,
}

/// Per-example inputs prepared ahead of the forward pass.
#[derive(Clone, Debug)]
pub(crate) struct Prepared<T> {
    pub ctx: Option<TokenSequence>,
    pub sent: Option<TokenSequence>,
    /// Hidden states of a frozen sentiment encoder, computed once.
    pub sent_hidden: Option<Tensor<T>>,
    pub h_kg: Option<Tensor<T>>,
}

pub(crate) struct Forward {
    pub logits: Var,
    pub h_k: Option<Var>,
    pub h_kg: Option<Var>,
}

impl<T: Scalar> StanceModel<T> {
    pub fn variant(&self) -> ModelVariant {
        self.config.variant
    }

    pub fn d_model(&self) -> usize {
        self.context
            .as_ref()
            .or(self.sentiment.as_ref())
            .map(|b| b.encoder.config.d_model)
            .expect("validated variant has a text branch")
    }

    pub(crate) fn init(
        config: &StanceConfig,
        ctx_vocab: Option<Vocabulary>,
        sentiment: Option<&SentimentEncoder<T>>,
        kg_dim: Option<usize>,
        rng: &mut RngStream,
    ) -> Result<Self, StanceError> {
        let v = config.variant;
        v.validate()?;
        let mut store = ParamStore::new();
        let context = match (v.use_context, ctx_vocab) {
            (true, Some(vocab)) => {
                let enc_cfg = EncoderConfig {
                    vocab_size: vocab.len(),
                    ..config.encoder.clone()
                };
                let encoder = TextEncoder::new(CTX_PREFIX, enc_cfg)?;
                encoder.init(&mut store, rng, true)?;
                Some(Branch { encoder, vocab })
            }
            (true, None) => return Err(StanceError::Config("context vocabulary missing".into())),
            (false, _) => None,
        };
        let sentiment = match (v.use_sentiment, sentiment) {
            (true, Some(s)) => {
                let trainable = v.sentiment_trainable();
                for name in s.encoder.param_names(&s.store).map(str::to_string).collect::<Vec<_>>() {
                    store.insert(name.clone(), s.store.get(&name)?.clone(), trainable);
                }
                Some(Branch {
                    encoder: s.encoder.clone(),
                    vocab: s.vocab.clone(),
                })
            }
            (true, None) => return Err(StanceError::MissingSentiment(v.name())),
            (false, _) => None,
        };
        let d = context
            .as_ref()
            .or(sentiment.as_ref())
            .map(|b| b.encoder.config.d_model)
            .unwrap_or(0);
        if let (Some(c), Some(s)) = (&context, &sentiment) {
            if c.encoder.config.d_model != s.encoder.config.d_model {
                return Err(StanceError::Dimension(format!(
                    "context width {} vs sentiment width {}",
                    c.encoder.config.d_model, s.encoder.config.d_model
                )));
            }
            let dims = BlockDims {
                d_model: d,
                heads: c.encoder.config.heads,
                d_ff: c.encoder.config.d_ff,
            };
            init_block(&mut store, FUSION, dims, rng, true)?;
        }
        let kg_dim = if v.use_kg {
            let k = kg_dim.ok_or_else(|| StanceError::MissingKnowledge(v.name()))?;
            init_linear(&mut store, KG_PROJ, k, d, rng, true);
            init_linear(&mut store, KG_RECON, d, k, rng, true);
            Some(k)
        } else {
            None
        };
        let cls_in = if v.use_kg { 2 * d } else { d };
        init_linear(&mut store, CLASSIFIER, cls_in, StanceLabel::ALL.len(), rng, true);
        Ok(Self {
            config: config.clone(),
            store,
            context,
            sentiment,
            kg_dim,
        })
    }

    fn fusion_heads(&self) -> usize {
        self.context.as_ref().map_or(1, |c| c.encoder.config.heads)
    }

    /// Logits (`1 x 3`) for one prepared example.
    pub(crate) fn forward(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        ex: &Prepared<T>,
        mut dropout: Option<&mut RngStream>,
    ) -> Result<Forward, StanceError> {
        let ctx = match (&self.context, &ex.ctx) {
            (Some(b), Some(seq)) => Some((b.encoder.forward(tape, store, seq, dropout.as_deref_mut())?, seq.mask.clone())),
            _ => None,
        };
        let sent = match (&self.sentiment, &ex.sent) {
            (Some(b), Some(seq)) => {
                let h = match &ex.sent_hidden {
                    Some(cached) => tape.constant(cached.clone()),
                    None => b.encoder.forward(tape, store, seq, dropout.as_deref_mut())?,
                };
                Some((h, seq.mask.clone()))
            }
            _ => None,
        };
        let p = if self.context.is_some() { self.config.encoder.dropout } else { 0.0 };
        let mut drop = dropout.map(|rng| Dropout { p, rng });
        let h_cls = fuse_tape(
            tape,
            store,
            self.fusion_heads(),
            ctx.as_ref().map(|(h, m)| (*h, m.as_slice())),
            sent.as_ref().map(|(h, m)| (*h, m.as_slice())),
            &mut drop,
        )?;
        let (h_k, h_kg) = match (&self.kg_dim, &ex.h_kg) {
            (Some(_), Some(hkg)) => {
                let hkg = tape.constant(hkg.clone());
                (Some(linear(tape, store, KG_PROJ, hkg)?), Some(hkg))
            }
            (Some(_), None) => return Err(StanceError::MissingKnowledge(self.variant().name())),
            _ => (None, None),
        };
        let logits = classify_tape(tape, store, h_cls, h_k)?;
        Ok(Forward { logits, h_k, h_kg })
    }

    pub fn save(&self, dir: &Path) -> Result<(), StanceError> {
        let branch = |b: &Option<Branch>| {
            b.as_ref().map(|b| {
                serde_json::json!({
                    "prefix": b.encoder.prefix,
                    "encoder": b.encoder.config,
                    "vocab": b.vocab.tokens(),
                })
            })
        };
        let meta = serde_json::json!({
            "kind": "stance_model",
            "config": self.config,
            "context": branch(&self.context),
            "sentiment": branch(&self.sentiment),
            "kg_dim": self.kg_dim,
        });
        save_checkpoint(dir, &self.store, meta)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, StanceError> {
        let (store, meta) = load_checkpoint::<T>(dir)?;
        let bad = |what: &str| StanceError::Numerics(NumericsError::Checkpoint(format!("stance archive: bad {what}")));
        let config: StanceConfig =
            serde_json::from_value(meta.get("config").cloned().ok_or_else(|| bad("config"))?).map_err(|_| bad("config"))?;
        let branch = |key: &str| -> Result<Option<Branch>, StanceError> {
            match meta.get(key) {
                None | Some(serde_json::Value::Null) => Ok(None),
                Some(v) => {
                    let prefix = v.get("prefix").and_then(|p| p.as_str()).ok_or_else(|| bad(key))?;
                    let enc: EncoderConfig =
                        serde_json::from_value(v.get("encoder").cloned().ok_or_else(|| bad(key))?).map_err(|_| bad(key))?;
                    let tokens: Vec<String> =
                        serde_json::from_value(v.get("vocab").cloned().ok_or_else(|| bad(key))?).map_err(|_| bad(key))?;
                    Ok(Some(Branch {
                        encoder: TextEncoder::new(prefix, enc)?,
                        vocab: Vocabulary::parse(&tokens.join("\n"))?,
                    }))
                }
            }
        };
        let kg_dim = meta.get("kg_dim").and_then(|v| v.as_u64()).map(|v| v as usize);
        Ok(Self {
            context: branch("context")?,
            sentiment: branch("sentiment")?,
            config,
            store,
            kg_dim,
        })
    }
}

/// `h_cls`: with both branches, one attention block over the concatenated
/// hidden sequences (padding masked) read out at the context `[CLS]` row;
/// with one branch, that branch's `[CLS]` row.
pub(crate) fn fuse_tape<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    heads: usize,
    ctx: Option<(Var, &[bool])>,
    sent: Option<(Var, &[bool])>,
    dropout: &mut Option<Dropout<'_>>,
) -> Result<Var, StanceError> {
    match (ctx, sent) {
        (Some((c, cm)), Some((s, sm))) => {
            let (dc, ds) = (tape.value(c).cols(), tape.value(s).cols());
            if dc != ds {
                return Err(StanceError::Dimension(format!("context width {dc} vs sentiment width {ds}")));
            }
            let x = tape.concat_rows(&[c, s])?;
            let mask: Vec<bool> = cm.iter().chain(sm).copied().collect();
            let out = block_forward(tape, store, FUSION, heads, x, &mask, Some(&[TokenSequence::CLS_INDEX]), dropout)?;
            Ok(out.hidden)
        }
        (Some((h, _)), None) | (None, Some((h, _))) => Ok(tape.gather_rows(h, &[TokenSequence::CLS_INDEX])?),
        (None, None) => Err(StanceError::InvalidVariant("no text branch".into())),
    }
}

pub(crate) fn classify_tape<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    h_cls: Var,
    h_k: Option<Var>,
) -> Result<Var, StanceError> {
    let input = match h_k {
        Some(k) => tape.concat_cols(&[h_cls, k])?,
        None => h_cls,
    };
    Ok(linear(tape, store, CLASSIFIER, input)?)
}

/// Fused `[CLS]` vector for given encoder outputs and their padding masks.
pub fn fuse<T: Scalar>(
    model: &StanceModel<T>,
    h_context: Option<(&Tensor<T>, &[bool])>,
    h_sentiment: Option<(&Tensor<T>, &[bool])>,
) -> Result<Vec<T>, StanceError> {
    let mut tape = Tape::new();
    let c = h_context.map(|(h, m)| (tape.constant(h.clone()), m));
    let s = h_sentiment.map(|(h, m)| (tape.constant(h.clone()), m));
    let out = fuse_tape(&mut tape, &model.store, model.fusion_heads(), c, s, &mut None)?;
    Ok(tape.value(out).row(0).to_vec())
}

/// `softmax(W [h_cls, h_k] + b)`, or `softmax(W h_cls + b)` without KG.
pub fn classify<T: Scalar>(model: &StanceModel<T>, h_cls: &[T], h_k: Option<&[T]>) -> Result<[T; 3], StanceError> {
    if model.variant().use_kg != h_k.is_some() {
        return Err(StanceError::Dimension("KG vector presence must match the variant".into()));
    }
    let mut tape = Tape::new();
    let hc = tape.constant(Tensor::row_vector(h_cls.to_vec()));
    let hk = h_k.map(|k| tape.constant(Tensor::row_vector(k.to_vec())));
    let logits = classify_tape(&mut tape, &model.store, hc, hk)?;
    let p = softmax(tape.value(logits).row(0));
    Ok([p[0], p[1], p[2]])
}

/// Batch mean of `-ln p[gold]`, probabilities floored at 1e-12.
pub fn stance_loss<T: Scalar>(probs: &[[T; 3]], golds: &[StanceLabel]) -> Result<T, StanceError> {
    if probs.is_empty() || probs.len() != golds.len() {
        return Err(StanceError::Dimension(format!("{} distributions for {} labels", probs.len(), golds.len())));
    }
    let total: T = probs
        .iter()
        .zip(golds)
        .map(|(p, g)| -p[g.index()].max(T::lit(PROB_FLOOR)).ln())
        .sum();
    Ok(total / T::lit(probs.len() as f64))
}

/// Batch mean of `||D(h_k) - h_kg||^2` with the decoder `D` from `model`.
pub fn recon_loss<T: Scalar>(model: &StanceModel<T>, h_k: &[Vec<T>], h_kg: &[Vec<T>]) -> Result<T, StanceError> {
    if h_k.is_empty() || h_k.len() != h_kg.len() {
        return Err(StanceError::Dimension("recon_loss needs aligned, nonempty batches".into()));
    }
    let mut tape = Tape::new();
    let hk = tape.constant(Tensor::from_rows(h_k)?);
    let hkg = tape.constant(Tensor::from_rows(h_kg)?);
    let l = recon_loss_tape(&mut tape, &model.store, hk, hkg)?;
    Ok(tape.value(l).item())
}

pub(crate) fn recon_loss_tape<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    h_k: Var,
    h_kg: Var,
) -> Result<Var, StanceError> {
    let n = tape.value(h_k).rows();
    let rec = linear(tape, store, KG_RECON, h_k)?;
    let diff = tape.sub(rec, h_kg)?;
    let sq = tape.square(diff);
    let s = tape.sum_all(sq);
    Ok(tape.scale(s, T::one() / T::lit(n as f64)))
}

/// `l_cls + lambda * l_recon`, with `lambda` ignored when the KG branch is off.
pub fn total_loss<T: Scalar>(l_cls: T, l_recon: T, lambda: f64, variant: ModelVariant) -> T {
    if variant.use_kg {
        l_cls + T::lit(lambda) * l_recon
    } else {
        l_cls
    }
}

