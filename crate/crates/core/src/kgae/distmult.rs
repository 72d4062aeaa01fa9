use crate::kgae::sampling::TripleSample;
use crate::kgae::{AutoencoderParams, KgaeError};
use crate::kgraph::RelationId;
use crate::numerics::{Tape, Var};
use crate::scalar::{logistic, Scalar};

/// `logistic(sum_k h_i[k] * R_r[k] * h_j[k])`.
pub fn distmult_score<T: Scalar>(
    h_i: &[T],
    rel: RelationId,
    h_j: &[T],
    params: &AutoencoderParams<T>,
) -> Result<T, KgaeError> {
    let diag = params.store.get("r_diag")?;
    if rel.index() >= diag.rows() {
        return Err(KgaeError::UnknownRelation(rel.index()));
    }
    if h_i.len() != diag.cols() || h_j.len() != diag.cols() {
        return Err(KgaeError::Dimension(format!(
            "score vectors of length {} and {}, expected {}",
            h_i.len(),
            h_j.len(),
            diag.cols()
        )));
    }
    let r = diag.row(rel.index());
    let s: T = h_i.iter().zip(r).zip(h_j).map(|((&a, &b), &c)| a * b * c).sum();
    Ok(logistic(s))
}

/// Raw DistMult logits (`n x 1`) for a batch of samples on a tape.
pub fn distmult_logits<T: Scalar>(
    tape: &mut Tape<T>,
    h: Var,
    r_diag: Var,
    samples: &[TripleSample],
) -> Result<Var, KgaeError> {
    let heads: Vec<usize> = samples.iter().map(|s| s.triple.head.index()).collect();
    let rels: Vec<usize> = samples.iter().map(|s| s.triple.rel.index()).collect();
    let tails: Vec<usize> = samples.iter().map(|s| s.triple.tail.index()).collect();
    if let Some(&bad) = rels.iter().find(|&&r| r >= tape.value(r_diag).rows()) {
        return Err(KgaeError::UnknownRelation(bad));
    }
    let hh = tape.gather_rows(h, &heads)?;
    let rr = tape.gather_rows(r_diag, &rels)?;
    let tt = tape.gather_rows(h, &tails)?;
    let hr = tape.mul(hh, rr)?;
    let hrt = tape.mul(hr, tt)?;
    Ok(tape.row_sum(hrt))
}
