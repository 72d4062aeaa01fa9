use std::rc::Rc;

use crate::kgae::{AutoencoderParams, KgaeError, NUM_LAYERS};
use crate::kgraph::{KnowledgeGraph, Subgraph, Triple};
use crate::numerics::{SparseRows, Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Degree-normalized neighbor aggregation matrices, one per message type.
///
/// Message type `r` carries head -> tail messages over relation `r`;
/// with inverse relations, type `|R| + r` carries tail -> head messages.
/// Row `i` of each matrix averages over `N_i^r`, i.e. `1 / |N_i^r|` weights.
#[derive(Clone, Debug)]
pub struct MessageGraph<T> {
    pub adjacency: Vec<Rc<SparseRows<T>>>,
}

impl<T: Scalar> MessageGraph<T> {
    pub fn new(
        num_concepts: usize,
        num_relations: usize,
        edges: &[Triple],
        inverse_relations: bool,
    ) -> Result<Self, KgaeError> {
        let types = if inverse_relations { 2 * num_relations } else { num_relations };
        let mut rows: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); num_concepts]; types];
        for &t in edges {
            let (h, r, tl) = (t.head.index(), t.rel.index(), t.tail.index());
            if h >= num_concepts || tl >= num_concepts || r >= num_relations {
                return Err(KgaeError::InvalidTriple(t));
            }
            rows[r][tl].push(h);
            if inverse_relations {
                rows[num_relations + r][h].push(tl);
            }
        }
        let adjacency = rows
            .into_iter()
            .map(|per_node| {
                let rows = per_node
                    .into_iter()
                    .map(|nbrs| {
                        let w = T::one() / T::lit(nbrs.len().max(1) as f64);
                        nbrs.into_iter().map(|j| (j, w)).collect()
                    })
                    .collect();
                Rc::new(SparseRows {
                    n_cols: num_concepts,
                    rows,
                })
            })
            .collect();
        Ok(Self { adjacency })
    }

    pub fn for_params(params: &AutoencoderParams<T>, edges: &[Triple]) -> Result<Self, KgaeError> {
        Self::new(params.num_concepts, params.num_relations, edges, params.inverse_relations)
    }
}

/// Both encoder layers on a tape, starting from the features in `x`.
/// Each layer computes `ReLU(sum_m A_m x W_m + x W_0)`.
pub fn rgcn_forward_tape<T: Scalar>(
    tape: &mut Tape<T>,
    params: &AutoencoderParams<T>,
    msg: &MessageGraph<T>,
    x: Var,
) -> Result<Var, KgaeError> {
    if msg.adjacency.len() != params.message_types() {
        return Err(KgaeError::Dimension(format!(
            "{} message types, params expect {}",
            msg.adjacency.len(),
            params.message_types()
        )));
    }
    let mut h = x;
    for layer in 1..=NUM_LAYERS {
        let w0 = tape.param(&params.store, &AutoencoderParams::<T>::self_name(layer))?;
        let mut acc = tape.matmul(h, w0)?;
        for (m, adj) in msg.adjacency.iter().enumerate() {
            if adj.nnz() == 0 {
                continue;
            }
            let agg = tape.spmm(adj.clone(), h)?;
            let wr = tape.param(&params.store, &AutoencoderParams::<T>::rel_name(layer, m))?;
            let msgs = tape.matmul(agg, wr)?;
            acc = tape.add(acc, msgs)?;
        }
        h = tape.relu(acc);
    }
    Ok(h)
}

/// Concept embeddings `h` (|V| x d) with messages passed only over
/// `message_edges`.
pub fn rgcn_forward<T: Scalar>(
    graph: &KnowledgeGraph,
    params: &AutoencoderParams<T>,
    message_edges: &[Triple],
) -> Result<Tensor<T>, KgaeError> {
    params.check_graph(graph)?;
    let msg = MessageGraph::for_params(params, message_edges)?;
    let mut tape = Tape::new();
    let g = tape.param(&params.store, "g")?;
    let h = rgcn_forward_tape(&mut tape, params, &msg, g)?;
    Ok(tape.value(h).clone())
}

/// Runs the encoder over an extracted subgraph only, starting from the
/// parent-graph features of its concepts. Rows follow the subgraph's ids.
pub fn rgcn_forward_on_subgraph<T: Scalar>(
    params: &AutoencoderParams<T>,
    sub: &Subgraph,
) -> Result<Tensor<T>, KgaeError> {
    if sub.graph.num_relations() != params.num_relations {
        return Err(KgaeError::Dimension("subgraph relation table differs from params".into()));
    }
    let msg = MessageGraph::new(
        sub.graph.num_concepts(),
        params.num_relations,
        sub.graph.triples(),
        params.inverse_relations,
    )?;
    let mut tape = Tape::new();
    let g = tape.param(&params.store, "g")?;
    let idx: Vec<usize> = sub.parent_ids.iter().map(|c| c.index()).collect();
    let x = tape.gather_rows(g, &idx)?;
    let h = rgcn_forward_tape(&mut tape, params, &msg, x)?;
    Ok(tape.value(h).clone())
}
