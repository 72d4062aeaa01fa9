use serde::{Deserialize, Serialize};

use crate::layers::{apply_dropout, block_forward, init_block, init_layer_norm, layer_norm, BlockDims, Dropout};
use crate::numerics::{xavier_uniform, ParamStore, RngStream, Tape, Tensor, Var};
use crate::scalar::Scalar;
use crate::textenc::{TextError, TokenSequence};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    /// Rows of the positional table.
    pub max_len: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub layers: usize,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            vocab_size: 0,
            max_len: 256,
            d_model: 128,
            heads: 4,
            d_ff: 256,
            layers: 2,
            dropout: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn block_dims(&self) -> BlockDims {
        BlockDims {
            d_model: self.d_model,
            heads: self.heads,
            d_ff: self.d_ff,
        }
    }

    pub fn validate(&self) -> Result<(), TextError> {
        if self.vocab_size <= crate::textenc::SPECIAL_TOKENS.len() {
            return Err(TextError::Config(format!("vocab_size {} leaves no word ids", self.vocab_size)));
        }
        if self.max_len < 4 {
            return Err(TextError::MaxLenTooSmall(self.max_len));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(TextError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        self.block_dims().validate()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Hidden states for every position plus the `[CLS]` row.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput<T> {
    pub hidden: Tensor<T>,
    pub pooled: Vec<T>,
}

/// Transformer encoder whose parameters live under `prefix` in a store:
/// token, position and segment embeddings, an embedding layer norm and
/// `layers` post-LN blocks with padding-masked attention.
#[derive(Clone, Debug, PartialEq)]
pub struct TextEncoder {
    pub prefix: String,
    pub config: EncoderConfig,
}

impl TextEncoder {
    pub fn new(prefix: impl Into<String>, config: EncoderConfig) -> Result<Self, TextError> {
        config.validate()?;
        Ok(Self {
            prefix: prefix.into(),
            config,
        })
    }

    fn name(&self, part: &str) -> String {
        format!("{}{}", self.prefix, part)
    }

    pub fn init<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut RngStream, trainable: bool) -> Result<(), TextError> {
        let c = &self.config;
        store.insert(self.name("tok_emb"), xavier_uniform(c.vocab_size, c.d_model, rng), trainable);
        store.insert(self.name("pos_emb"), xavier_uniform(c.max_len, c.d_model, rng), trainable);
        store.insert(self.name("seg_emb"), xavier_uniform(2, c.d_model, rng), trainable);
        init_layer_norm(store, &self.name("emb_ln"), c.d_model, trainable);
        for l in 0..c.layers {
            init_block(store, &self.name(&format!("block{l}")), c.block_dims(), rng, trainable)?;
        }
        Ok(())
    }

    /// Hidden states (`len x d_model`) on a tape. Dropout is applied only
    /// when `dropout` carries an rng.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        seq: &TokenSequence,
        dropout: Option<&mut RngStream>,
    ) -> Result<Var, TextError> {
        let c = &self.config;
        if seq.len() > c.max_len {
            return Err(TextError::SequenceTooLong {
                len: seq.len(),
                max: c.max_len,
            });
        }
        if let Some(&bad) = seq.ids.iter().find(|&&id| id as usize >= c.vocab_size) {
            return Err(TextError::UnknownId(bad));
        }
        let ids: Vec<usize> = seq.ids.iter().map(|&i| i as usize).collect();
        let pos: Vec<usize> = (0..seq.len()).collect();
        let seg: Vec<usize> = seq.segments.iter().map(|&s| s as usize).collect();
        let tok = tape.param(store, &self.name("tok_emb"))?;
        let pe = tape.param(store, &self.name("pos_emb"))?;
        let se = tape.param(store, &self.name("seg_emb"))?;
        let x = tape.gather_rows(tok, &ids)?;
        let p = tape.gather_rows(pe, &pos)?;
        let s = tape.gather_rows(se, &seg)?;
        let x = tape.add(x, p)?;
        let x = tape.add(x, s)?;
        let mut x = layer_norm(tape, store, &self.name("emb_ln"), x)?;
        let mut drop = dropout.map(|rng| Dropout { p: c.dropout, rng });
        x = apply_dropout(tape, x, &mut drop)?;
        for l in 0..c.layers {
            let out = block_forward(
                tape,
                store,
                &self.name(&format!("block{l}")),
                c.heads,
                x,
                &seq.mask,
                None,
                &mut drop,
            )?;
            x = out.hidden;
        }
        Ok(x)
    }

    /// Eval-mode encoding outside of any training graph.
    pub fn encode<T: Scalar>(&self, store: &ParamStore<T>, seq: &TokenSequence) -> Result<EncoderOutput<T>, TextError> {
        self.encode_mode(store, seq, Mode::Eval, None)
    }

    pub fn encode_mode<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        seq: &TokenSequence,
        mode: Mode,
        rng: Option<&mut RngStream>,
    ) -> Result<EncoderOutput<T>, TextError> {
        let mut tape = Tape::new();
        let rng = if mode == Mode::Train { rng } else { None };
        let h = self.forward(&mut tape, store, seq, rng)?;
        let hidden = tape.value(h).clone();
        let pooled = hidden.row(TokenSequence::CLS_INDEX).to_vec();
        Ok(EncoderOutput { hidden, pooled })
    }

    /// Names of this encoder's parameters in `store`.
    pub fn param_names<'a, T: Scalar>(&'a self, store: &'a ParamStore<T>) -> impl Iterator<Item = &'a str> + 'a {
        store.names().filter(move |n| n.starts_with(&self.prefix))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grad_check;
    use crate::textenc::{tokenize, Vocabulary, PAD};

    fn setup(d: usize, heads: usize, max_len: usize) -> (TextEncoder, ParamStore<f64>, Vocabulary) {
        let vocab = Vocabulary::build(["good bad movie plot actors olympics sports"], 1);
        let enc = TextEncoder::new(
            "enc.",
            EncoderConfig {
                vocab_size: vocab.len(),
                max_len,
                d_model: d,
                heads,
                d_ff: 2 * d,
                layers: 2,
                dropout: 0.0,
            },
        )
        .unwrap();
        let mut store = ParamStore::new();
        enc.init(&mut store, &mut RngStream::new(5), true).unwrap();
        (enc, store, vocab)
    }

    #[test]
    fn output_shape_and_pooled_row() {
        let (enc, store, vocab) = setup(8, 2, 10);
        let seq = tokenize("good movie", "sports", &vocab, 10).unwrap();
        let out = enc.encode(&store, &seq).unwrap();
        assert_eq!(out.hidden.shape(), &[10, 8]);
        assert_eq!(out.pooled, out.hidden.row(0));
        assert_eq!(enc.encode(&store, &seq).unwrap(), out);
    }

    #[test]
    fn padded_ids_do_not_change_real_rows() {
        let (enc, store, vocab) = setup(8, 2, 10);
        let seq = tokenize("good movie", "sports", &vocab, 10).unwrap();
        let mut other = seq.clone();
        for (i, m) in seq.mask.iter().enumerate() {
            if !m {
                other.ids[i] = vocab.id("bad");
            }
        }
        assert_ne!(other.ids, seq.ids);
        let (a, b) = (enc.encode(&store, &seq).unwrap(), enc.encode(&store, &other).unwrap());
        for i in 0..seq.used() {
            assert_eq!(a.hidden.row(i), b.hidden.row(i));
        }
        assert!(seq.ids.contains(&PAD));
    }

    #[test]
    fn rejects_sequences_longer_than_positions() {
        let (enc, store, vocab) = setup(8, 2, 6);
        let seq = tokenize("good movie plot", "sports", &vocab, 8).unwrap();
        assert!(matches!(enc.encode(&store, &seq), Err(TextError::SequenceTooLong { .. })));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (enc, store, vocab) = setup(8, 2, 6);
        let seq = tokenize("good", "sports", &vocab, 6).unwrap();
        let target = Tensor::from_vec(&[6, 8], (0..48).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect()).unwrap();
        let report = grad_check(
            |tape: &mut Tape<f64>, s: &ParamStore<f64>| -> Result<Var, TextError> {
                let h = enc.forward(tape, s, &seq, None)?;
                let t = tape.constant(target.clone());
                let prod = tape.mul(h, t)?;
                let sq = tape.square(h);
                let a = tape.sum_all(prod);
                let b = tape.mean_all(sq);
                Ok(tape.add(a, b)?)
            },
            &store,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error() < 1e-4, "{:?}", report.worst());
    }
}
