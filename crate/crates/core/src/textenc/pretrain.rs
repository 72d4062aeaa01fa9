use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::layers::{cross_entropy_mean, init_linear, linear};
use crate::numerics::{
    load_checkpoint, save_checkpoint, Adam, AdamConfig, NumericsError, ParamStore, RngStream, Tape, Var,
};
use crate::scalar::{softmax, Scalar};
use crate::textenc::{
    sentiment_mask, tokenize, EncoderConfig, EncoderOutput, MaskRates, Polarity, SentimentLexicon, TextEncoder,
    TextError, TokenSequence, Vocabulary,
};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RatedText {
    pub text: String,
    pub rating: usize,
}

/// Reads `text<TAB>rating` lines; the last tab separates the rating.
pub fn read_rating_corpus(path: &Path) -> Result<Vec<RatedText>, TextError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: String| TextError::Parse { line: i + 1, reason };
        let (t, r) = line.rsplit_once('\t').ok_or_else(|| err("expected text<TAB>rating".into()))?;
        let rating = r.trim().parse().map_err(|_| err(format!("rating {r:?} is not an integer")))?;
        out.push(RatedText {
            text: t.to_string(),
            rating,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SentimentPretrainConfig {
    pub encoder: EncoderConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub rates: MaskRates,
    /// Rating scale `K`; ratings run from 1 to K.
    pub rating_classes: usize,
    /// Reshuffle the corpus every epoch.
    pub shuffle: bool,
}

impl Default for SentimentPretrainConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            epochs: 30,
            batch_size: 16,
            adam: AdamConfig::with_lr(1e-3),
            rates: MaskRates::default(),
            rating_classes: 5,
            shuffle: true,
        }
    }
}

const ENC_PREFIX: &str = "sent.";
const MLM_HEAD: &str = "head.mlm";
const POLARITY_HEAD: &str = "head.polarity";
const RATING_HEAD: &str = "head.rating";
/// Polarity classes predicted at masked positions: positive, negative, none.
pub const POLARITY_CLASSES: usize = 3;

fn polarity_class(p: Option<Polarity>) -> usize {
    match p {
        Some(Polarity::Positive) => 0,
        Some(Polarity::Negative) => 1,
        None => 2,
    }
}

/// A pretrained sentiment encoder with its vocabulary. All parameters are
/// frozen on return from pretraining.
#[derive(Clone, Debug)]
pub struct SentimentEncoder<T> {
    pub encoder: TextEncoder,
    pub store: ParamStore<T>,
    pub vocab: Vocabulary,
    pub rating_classes: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SentimentEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub mlm: f64,
    pub polarity: f64,
    pub rating: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SentimentReport {
    pub epochs: Vec<SentimentEpoch>,
}

impl<T: Scalar> SentimentEncoder<T> {
    pub fn tokenize(&self, document: &str, topic: &str) -> Result<TokenSequence, TextError> {
        tokenize(document, topic, &self.vocab, self.encoder.config.max_len)
    }

    pub fn encode(&self, seq: &TokenSequence) -> Result<EncoderOutput<T>, TextError> {
        self.encoder.encode(&self.store, seq)
    }

    /// Rating distribution (`K` probabilities) for a text.
    pub fn predict_rating(&self, text: &str) -> Result<Vec<T>, TextError> {
        let seq = self.tokenize(text, "")?;
        let out = self.encode(&seq)?;
        let mut tape = Tape::new();
        let h = tape.constant(crate::numerics::Tensor::row_vector(out.pooled));
        let logits = linear(&mut tape, &self.store, RATING_HEAD, h)?;
        Ok(softmax(tape.value(logits).row(0)))
    }

    pub fn save(&self, dir: &Path) -> Result<(), TextError> {
        let meta = serde_json::json!({
            "kind": "sentiment_encoder",
            "encoder": self.encoder.config,
            "prefix": self.encoder.prefix,
            "rating_classes": self.rating_classes,
            "vocab": self.vocab.tokens(),
        });
        save_checkpoint(dir, &self.store, meta)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, TextError> {
        let (store, meta) = load_checkpoint::<T>(dir)?;
        let bad = |what: &str| TextError::Numerics(NumericsError::Checkpoint(format!("sentiment archive: bad {what}")));
        let config: EncoderConfig =
            serde_json::from_value(meta.get("encoder").cloned().ok_or_else(|| bad("encoder"))?).map_err(|_| bad("encoder"))?;
        let prefix = meta.get("prefix").and_then(|v| v.as_str()).ok_or_else(|| bad("prefix"))?;
        let rating_classes = meta.get("rating_classes").and_then(|v| v.as_u64()).ok_or_else(|| bad("rating_classes"))?;
        let tokens: Vec<String> =
            serde_json::from_value(meta.get("vocab").cloned().ok_or_else(|| bad("vocab"))?).map_err(|_| bad("vocab"))?;
        let vocab = Vocabulary::parse(&tokens.join("\n"))?;
        Ok(Self {
            encoder: TextEncoder::new(prefix, config)?,
            store,
            vocab,
            rating_classes: rating_classes as usize,
        })
    }
}

struct BatchLoss {
    total: Var,
    mlm: Option<Var>,
    polarity: Option<Var>,
    rating: Var,
}

/// Joint loss on a batch: masked-token and masked-polarity cross-entropy
/// over all masked positions plus rating cross-entropy from `[CLS]`.
fn batch_loss<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    encoder: &TextEncoder,
    masked: &[crate::textenc::MaskedSequence],
    ratings: &[usize],
    mut dropout: Option<&mut RngStream>,
) -> Result<BatchLoss, TextError> {
    let mut masked_rows = Vec::new();
    let mut token_targets = Vec::new();
    let mut polarity_targets = Vec::new();
    let mut cls_rows = Vec::new();
    for m in masked {
        let h = encoder.forward(tape, store, &m.sequence, dropout.as_deref_mut())?;
        cls_rows.push(tape.gather_rows(h, &[TokenSequence::CLS_INDEX])?);
        if !m.records.is_empty() {
            let pos: Vec<usize> = m.records.iter().map(|r| r.position).collect();
            masked_rows.push(tape.gather_rows(h, &pos)?);
            token_targets.extend(m.records.iter().map(|r| r.original as usize));
            polarity_targets.extend(m.records.iter().map(|r| polarity_class(r.polarity)));
        }
    }
    let cls = tape.concat_rows(&cls_rows)?;
    let rating_logits = linear(tape, store, RATING_HEAD, cls)?;
    let rating_targets: Vec<usize> = ratings.iter().map(|r| r - 1).collect();
    let rating = cross_entropy_mean(tape, rating_logits, &rating_targets)?;
    let mut total = rating;
    let (mut mlm, mut polarity) = (None, None);
    if !masked_rows.is_empty() {
        let rows = tape.concat_rows(&masked_rows)?;
        let tok_logits = linear(tape, store, MLM_HEAD, rows)?;
        let l_tok = cross_entropy_mean(tape, tok_logits, &token_targets)?;
        let pol_logits = linear(tape, store, POLARITY_HEAD, rows)?;
        let l_pol = cross_entropy_mean(tape, pol_logits, &polarity_targets)?;
        total = tape.add(total, l_tok)?;
        total = tape.add(total, l_pol)?;
        mlm = Some(l_tok);
        polarity = Some(l_pol);
    }
    Ok(BatchLoss {
        total,
        mlm,
        polarity,
        rating,
    })
}

/// Pretrains the sentiment encoder and returns it frozen. Masks are
/// redrawn every epoch; epoch losses are example-weighted batch means.
pub fn pretrain_sentiment<T: Scalar>(
    corpus: &[RatedText],
    vocab: &Vocabulary,
    lexicon: &SentimentLexicon,
    cfg: &SentimentPretrainConfig,
    rng: &mut RngStream,
) -> Result<(SentimentEncoder<T>, SentimentReport), TextError> {
    cfg.rates.validate()?;
    if corpus.is_empty() {
        return Err(TextError::Config("sentiment corpus is empty".into()));
    }
    if cfg.batch_size == 0 || cfg.rating_classes < 2 {
        return Err(TextError::Config("batch_size must be >= 1 and rating_classes >= 2".into()));
    }
    for (index, ex) in corpus.iter().enumerate() {
        if ex.rating == 0 || ex.rating > cfg.rating_classes {
            return Err(TextError::RatingOutOfRange {
                index,
                rating: ex.rating,
                classes: cfg.rating_classes,
            });
        }
    }
    let mut enc_cfg = cfg.encoder.clone();
    enc_cfg.vocab_size = vocab.len();
    let encoder = TextEncoder::new(ENC_PREFIX, enc_cfg)?;
    let mut store: ParamStore<T> = ParamStore::new();
    let mut init_rng = rng.derive(0x73_656e_7431);
    encoder.init(&mut store, &mut init_rng, true)?;
    let d = encoder.config.d_model;
    init_linear(&mut store, MLM_HEAD, d, vocab.len(), &mut init_rng, true);
    init_linear(&mut store, POLARITY_HEAD, d, POLARITY_CLASSES, &mut init_rng, true);
    init_linear(&mut store, RATING_HEAD, d, cfg.rating_classes, &mut init_rng, true);

    let seqs = corpus
        .iter()
        .map(|ex| tokenize(&ex.text, "", vocab, encoder.config.max_len))
        .collect::<Result<Vec<_>, _>>()?;
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut adam = Adam::new(cfg.adam);
    let mut report = SentimentReport::default();
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            rng.shuffle(&mut order);
        }
        let mut sums = SentimentEpoch {
            epoch,
            ..Default::default()
        };
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<TokenSequence> = chunk.iter().map(|&i| seqs[i].clone()).collect();
            let ratings: Vec<usize> = chunk.iter().map(|&i| corpus[i].rating).collect();
            let masked = sentiment_mask(&batch, vocab, lexicon, cfg.rates, rng)?;
            let mut tape = Tape::new();
            let dropout = if encoder.config.dropout > 0.0 { Some(&mut *rng) } else { None };
            let loss = batch_loss(&mut tape, &store, &encoder, &masked, &ratings, dropout)?;
            let grads = tape.backward(loss.total)?;
            store.clear_grads();
            store.accumulate_grads(tape.param_grads(&grads))?;
            store.fill_missing_grads();
            adam.step(&mut store)?;
            let w = chunk.len() as f64 / corpus.len() as f64;
            let val = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item().as_f64());
            sums.loss += w * val(Some(loss.total));
            sums.mlm += w * val(loss.mlm);
            sums.polarity += w * val(loss.polarity);
            sums.rating += w * val(Some(loss.rating));
        }
        report.epochs.push(sums);
    }
    store.clear_grads();
    store.freeze_all();
    Ok((
        SentimentEncoder {
            encoder,
            store,
            vocab: vocab.clone(),
            rating_classes: cfg.rating_classes,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{adam_step, grad_check};

    fn toy_corpus(n: usize) -> Vec<RatedText> {
        let pos = ["good", "great", "excellent", "love"];
        let neg = ["bad", "awful", "terrible", "hate"];
        let things = ["movie", "plot", "cast", "ending", "music"];
        (0..n)
            .map(|i| {
                let thing = things[i % things.len()];
                let (w, rating) = if i % 2 == 0 {
                    (pos[(i / 2) % pos.len()], 4 + (i / 2) % 2)
                } else {
                    (neg[(i / 2) % neg.len()], 1 + (i / 2) % 2)
                };
                RatedText {
                    text: format!("the {thing} was {w}"),
                    rating,
                }
            })
            .collect()
    }

    fn small_cfg() -> SentimentPretrainConfig {
        SentimentPretrainConfig {
            encoder: EncoderConfig {
                vocab_size: 0,
                max_len: 10,
                d_model: 8,
                heads: 2,
                d_ff: 16,
                layers: 1,
                dropout: 0.0,
            },
            epochs: 30,
            batch_size: 20,
            adam: AdamConfig::with_lr(1e-2),
            ..Default::default()
        }
    }

    fn vocab_of(corpus: &[RatedText]) -> Vocabulary {
        Vocabulary::build(corpus.iter().map(|c| c.text.as_str()), 1)
    }

    #[test]
    fn loss_decreases_and_result_is_frozen() {
        let corpus = toy_corpus(200);
        let vocab = vocab_of(&corpus);
        let lex = SentimentLexicon::bundled();
        let (enc, report) = pretrain_sentiment::<f64>(&corpus, &vocab, &lex, &small_cfg(), &mut RngStream::new(3)).unwrap();
        let (first, last) = (report.epochs[0].loss, report.epochs.last().unwrap().loss);
        assert!(last < first, "{first} -> {last}");
        let p = enc.predict_rating("the movie was great").unwrap();
        assert_eq!(p.len(), 5);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut store = enc.store.clone();
        assert!(matches!(
            adam_step(&mut store, &AdamConfig::default(), 1),
            Err(NumericsError::NothingToOptimize)
        ));
    }

    #[test]
    fn full_batch_loss_ignores_corpus_order() {
        let corpus = toy_corpus(12);
        let vocab = vocab_of(&corpus);
        let lex = SentimentLexicon::bundled();
        let cfg = SentimentPretrainConfig {
            epochs: 3,
            batch_size: 100,
            shuffle: false,
            rates: MaskRates { p_sent: 1.0, p_gen: 0.0 },
            ..small_cfg()
        };
        let mut reversed = corpus.clone();
        reversed.reverse();
        let (_, a) = pretrain_sentiment::<f64>(&corpus, &vocab, &lex, &cfg, &mut RngStream::new(4)).unwrap();
        let (_, b) = pretrain_sentiment::<f64>(&reversed, &vocab, &lex, &cfg, &mut RngStream::new(4)).unwrap();
        for (x, y) in a.epochs.iter().zip(&b.epochs) {
            assert!((x.loss - y.loss).abs() < 1e-9, "{} vs {}", x.loss, y.loss);
        }
    }

    #[test]
    fn rejects_bad_ratings() {
        let mut corpus = toy_corpus(4);
        corpus[2].rating = 6;
        let vocab = vocab_of(&corpus);
        let r = pretrain_sentiment::<f64>(&corpus, &vocab, &SentimentLexicon::bundled(), &small_cfg(), &mut RngStream::new(0));
        assert!(matches!(r, Err(TextError::RatingOutOfRange { index: 2, rating: 6, .. })));
    }

    #[test]
    fn save_load_round_trip() {
        let corpus = toy_corpus(10);
        let vocab = vocab_of(&corpus);
        let cfg = SentimentPretrainConfig { epochs: 1, ..small_cfg() };
        let (enc, _) = pretrain_sentiment::<f64>(&corpus, &vocab, &SentimentLexicon::bundled(), &cfg, &mut RngStream::new(5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        enc.save(dir.path()).unwrap();
        let back = SentimentEncoder::<f64>::load(dir.path()).unwrap();
        assert!(back.store.values_equal(&enc.store));
        assert_eq!(back.vocab, enc.vocab);
        let seq = enc.tokenize("the plot was bad", "").unwrap();
        assert_eq!(back.encode(&seq).unwrap(), enc.encode(&seq).unwrap());
    }

    #[test]
    fn pretraining_gradients_match_finite_differences() {
        let corpus = toy_corpus(3);
        let vocab = vocab_of(&corpus);
        let lex = SentimentLexicon::bundled();
        let mut cfg = small_cfg();
        cfg.encoder.vocab_size = vocab.len();
        cfg.encoder.max_len = 6;
        let encoder = TextEncoder::new(ENC_PREFIX, cfg.encoder.clone()).unwrap();
        let mut store = ParamStore::new();
        let mut r = RngStream::new(6);
        encoder.init(&mut store, &mut r, true).unwrap();
        init_linear(&mut store, MLM_HEAD, 8, vocab.len(), &mut r, true);
        init_linear(&mut store, POLARITY_HEAD, 8, POLARITY_CLASSES, &mut r, true);
        init_linear(&mut store, RATING_HEAD, 8, 5, &mut r, true);
        let seqs: Vec<_> = corpus.iter().map(|c| tokenize(&c.text, "", &vocab, 6).unwrap()).collect();
        let masked = sentiment_mask(&seqs, &vocab, &lex, MaskRates { p_sent: 1.0, p_gen: 0.5 }, &mut RngStream::new(7)).unwrap();
        assert!(masked.iter().any(|m| !m.records.is_empty()));
        let ratings: Vec<usize> = corpus.iter().map(|c| c.rating).collect();
        let report = grad_check(
            |tape: &mut Tape<f64>, s: &ParamStore<f64>| -> Result<Var, TextError> {
                Ok(batch_loss(tape, s, &encoder, &masked, &ratings, None)?.total)
            },
            &store,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error() < 1e-4, "{:?}", report.worst());
    }
}
