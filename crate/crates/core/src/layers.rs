//! Parameterized building blocks shared by the text encoders and the
//! stance head: affine maps, layer norm and a post-LN transformer block.

use serde::{Deserialize, Serialize};

use crate::numerics::{xavier_uniform, NumericsError, ParamStore, RngStream, Tape, Tensor, Var};
use crate::scalar::Scalar;

pub const LN_EPS: f64 = 1e-5;

pub fn init_linear<T: Scalar>(
    store: &mut ParamStore<T>,
    prefix: &str,
    d_in: usize,
    d_out: usize,
    rng: &mut RngStream,
    trainable: bool,
) {
    store.insert(format!("{prefix}.w"), xavier_uniform(d_in, d_out, rng), trainable);
    store.insert(format!("{prefix}.b"), Tensor::zeros(&[1, d_out]), trainable);
}

/// `x · W + b` for every row of `x`.
pub fn linear<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore<T>, prefix: &str, x: Var) -> Result<Var, NumericsError> {
    let w = tape.param(store, &format!("{prefix}.w"))?;
    let b = tape.param(store, &format!("{prefix}.b"))?;
    let y = tape.matmul(x, w)?;
    tape.add_row(y, b)
}

pub fn init_layer_norm<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, d: usize, trainable: bool) {
    store.insert(format!("{prefix}.gamma"), Tensor::filled(&[1, d], T::one()), trainable);
    store.insert(format!("{prefix}.beta"), Tensor::zeros(&[1, d]), trainable);
}

pub fn layer_norm<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    prefix: &str,
    x: Var,
) -> Result<Var, NumericsError> {
    let g = tape.param(store, &format!("{prefix}.gamma"))?;
    let b = tape.param(store, &format!("{prefix}.beta"))?;
    tape.layer_norm(x, g, b, T::lit(LN_EPS))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockDims {
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
}

impl BlockDims {
    pub fn validate(&self) -> Result<(), NumericsError> {
        if self.d_model == 0 || self.heads == 0 || self.d_ff == 0 || self.d_model % self.heads != 0 {
            return Err(NumericsError::InvalidArgument(format!(
                "d_model {} must be a positive multiple of heads {} and d_ff {} positive",
                self.d_model, self.heads, self.d_ff
            )));
        }
        Ok(())
    }
}

pub fn init_block<T: Scalar>(
    store: &mut ParamStore<T>,
    prefix: &str,
    dims: BlockDims,
    rng: &mut RngStream,
    trainable: bool,
) -> Result<(), NumericsError> {
    dims.validate()?;
    let d = dims.d_model;
    for m in ["q", "k", "v", "o"] {
        init_linear(store, &format!("{prefix}.attn.{m}"), d, d, rng, trainable);
    }
    // A key bias only shifts each query's scores by a constant, which the
    // softmax cancels; it would be a parameter with identically zero gradient.
    store.remove(&format!("{prefix}.attn.k.b"));
    init_layer_norm(store, &format!("{prefix}.ln1"), d, trainable);
    init_linear(store, &format!("{prefix}.ff1"), d, dims.d_ff, rng, trainable);
    init_linear(store, &format!("{prefix}.ff2"), dims.d_ff, d, rng, trainable);
    init_layer_norm(store, &format!("{prefix}.ln2"), d, trainable);
    Ok(())
}

/// Inverted-dropout settings for a forward pass. `None` means eval mode.
pub struct Dropout<'a> {
    pub p: f64,
    pub rng: &'a mut RngStream,
}

pub(crate) fn apply_dropout<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    dropout: &mut Option<Dropout<'_>>,
) -> Result<Var, NumericsError> {
    match dropout {
        Some(d) if d.p > 0.0 => {
            let keep = T::lit(1.0 / (1.0 - d.p));
            let n = tape.value(x).len();
            let mask = (0..n).map(|_| if d.rng.bernoulli(d.p) { T::zero() } else { keep }).collect();
            tape.dropout_mask(x, mask)
        }
        _ => Ok(x),
    }
}

/// Output of one transformer block.
pub struct BlockOutput {
    /// One row per query position.
    pub hidden: Var,
    /// Attention probabilities per head (`queries x keys`).
    pub attention: Vec<Var>,
}

/// Post-LN transformer block: multi-head attention from the rows in
/// `query_rows` (all rows when `None`) over every row of `x` whose
/// `key_mask` entry is true, then residual + layer norm, feed-forward,
/// residual + layer norm.
pub fn block_forward<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    prefix: &str,
    heads: usize,
    x: Var,
    key_mask: &[bool],
    query_rows: Option<&[usize]>,
    dropout: &mut Option<Dropout<'_>>,
) -> Result<BlockOutput, NumericsError> {
    let (n, d) = (tape.value(x).rows(), tape.value(x).cols());
    if key_mask.len() != n {
        return Err(NumericsError::ShapeMismatch {
            op: "block_forward key mask",
            left: vec![n, d],
            right: vec![key_mask.len()],
        });
    }
    if heads == 0 || d % heads != 0 {
        return Err(NumericsError::InvalidArgument(format!("{heads} heads do not divide width {d}")));
    }
    let xq = match query_rows {
        Some(rows) => tape.gather_rows(x, rows)?,
        None => x,
    };
    let nq = tape.value(xq).rows();
    let q = linear(tape, store, &format!("{prefix}.attn.q"), xq)?;
    let wk = tape.param(store, &format!("{prefix}.attn.k.w"))?;
    let k = tape.matmul(x, wk)?;
    let v = linear(tape, store, &format!("{prefix}.attn.v"), x)?;
    let dh = d / heads;
    let scale = T::one() / T::lit(dh as f64).sqrt();
    let allowed: Vec<bool> = (0..nq).flat_map(|_| key_mask.iter().copied()).collect();
    let mut head_outs = Vec::with_capacity(heads);
    let mut attention = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dh, dh)?;
        let kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        let kt = tape.transpose(kh);
        let s = tape.matmul(qh, kt)?;
        let s = tape.scale(s, scale);
        let p = tape.masked_softmax_rows(s, &allowed)?;
        attention.push(p);
        head_outs.push(tape.matmul(p, vh)?);
    }
    let cat = if heads == 1 { head_outs[0] } else { tape.concat_cols(&head_outs)? };
    let attn = linear(tape, store, &format!("{prefix}.attn.o"), cat)?;
    let attn = apply_dropout(tape, attn, dropout)?;
    let r1 = tape.add(xq, attn)?;
    let h1 = layer_norm(tape, store, &format!("{prefix}.ln1"), r1)?;
    let f = linear(tape, store, &format!("{prefix}.ff1"), h1)?;
    let f = tape.relu(f);
    let f = linear(tape, store, &format!("{prefix}.ff2"), f)?;
    let f = apply_dropout(tape, f, dropout)?;
    let r2 = tape.add(h1, f)?;
    let hidden = layer_norm(tape, store, &format!("{prefix}.ln2"), r2)?;
    Ok(BlockOutput { hidden, attention })
}

/// Mean of `-ln softmax(logits)[target]` over rows, probabilities
/// clamped below at `1e-12`.
pub fn cross_entropy_mean<T: Scalar>(tape: &mut Tape<T>, logits: Var, targets: &[usize]) -> Result<Var, NumericsError> {
    let p = tape.softmax_rows(logits);
    let picked = tape.pick_per_row(p, targets)?;
    let picked = tape.clamp(picked, T::lit(1e-12), T::one());
    let ll = tape.ln(picked)?;
    let m = tape.mean_all(ll);
    Ok(tape.scale(m, -T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(d: usize, heads: usize) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        init_block(&mut s, "b", BlockDims { d_model: d, heads, d_ff: 2 * d }, &mut RngStream::new(3), true).unwrap();
        s
    }

    fn input(n: usize, d: usize, seed: u64) -> Tensor<f64> {
        let mut r = RngStream::new(seed);
        Tensor::from_vec(&[n, d], (0..n * d).map(|_| r.normal()).collect()).unwrap()
    }

    #[test]
    fn attention_rows_sum_to_one_over_unmasked_keys() {
        let s = setup(8, 2);
        let mut tape = Tape::new();
        let x = tape.constant(input(5, 8, 1));
        let mask = [true, true, false, true, false];
        let out = block_forward(&mut tape, &s, "b", 2, x, &mask, None, &mut None).unwrap();
        for p in out.attention {
            let pv = tape.value(p);
            for i in 0..pv.rows() {
                let row = pv.row(i);
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                assert_eq!(row[2], 0.0);
                assert_eq!(row[4], 0.0);
            }
        }
    }

    #[test]
    fn masked_rows_do_not_leak() {
        let s = setup(8, 2);
        let mask = [true, true, true, false, false];
        let run = |x: Tensor<f64>| {
            let mut tape = Tape::new();
            let x = tape.constant(x);
            let out = block_forward(&mut tape, &s, "b", 2, x, &mask, None, &mut None).unwrap();
            tape.value(out.hidden).clone()
        };
        let a = input(5, 8, 2);
        let mut b = a.clone();
        b.row_mut(3).copy_from_slice(input(1, 8, 9).row(0));
        let (ha, hb) = (run(a), run(b));
        for i in 0..3 {
            assert_eq!(ha.row(i), hb.row(i));
        }
    }

    #[test]
    fn query_subset_matches_full_rows() {
        let s = setup(8, 2);
        let x0 = input(4, 8, 5);
        let mask = [true; 4];
        let mut tape = Tape::new();
        let x = tape.constant(x0.clone());
        let full = block_forward(&mut tape, &s, "b", 2, x, &mask, None, &mut None).unwrap();
        let part = block_forward(&mut tape, &s, "b", 2, x, &mask, Some(&[0, 2]), &mut None).unwrap();
        let (f, p) = (tape.value(full.hidden), tape.value(part.hidden));
        for (a, b) in f.row(0).iter().zip(p.row(0)) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in f.row(2).iter().zip(p.row(1)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(BlockDims { d_model: 6, heads: 4, d_ff: 4 }.validate().is_err());
    }
}
