use crate::kgae::KgaeError;
use crate::kgraph::{ConceptId, KnowledgeGraph, RelationId, Triple};
use crate::numerics::RngStream;

/// A triple labeled positive (`true`) or negative (`false`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TripleSample {
    pub triple: Triple,
    pub positive: bool,
}

impl TripleSample {
    /// The 0/1 label `u`.
    pub fn label(&self) -> f64 {
        if self.positive {
            1.0
        } else {
            0.0
        }
    }
}

/// Positives interleaved with one corruption each.
#[derive(Clone, Debug, PartialEq)]
pub struct NegativeSampleSet {
    pub samples: Vec<TripleSample>,
    /// Number of positive edges the set was built from.
    pub source_edge_count: usize,
}

const MAX_SLOT_RETRIES: usize = 64;

fn other_than(current: usize, n: usize, rng: &mut RngStream) -> usize {
    let k = rng.below(n - 1);
    if k >= current {
        k + 1
    } else {
        k
    }
}

/// Replaces exactly one uniformly chosen slot of `t` with a different
/// uniformly chosen element of the matching table.
pub(crate) fn corrupt(
    t: Triple,
    num_concepts: usize,
    num_relations: usize,
    rng: &mut RngStream,
) -> Result<Triple, KgaeError> {
    for _ in 0..MAX_SLOT_RETRIES {
        let mut c = t;
        match rng.below(3) {
            0 if num_concepts > 1 => c.head = ConceptId(other_than(t.head.index(), num_concepts, rng) as u32),
            1 if num_concepts > 1 => c.tail = ConceptId(other_than(t.tail.index(), num_concepts, rng) as u32),
            2 if num_relations > 1 => c.rel = RelationId(other_than(t.rel.index(), num_relations, rng) as u32),
            _ => continue,
        }
        return Ok(c);
    }
    Err(KgaeError::CorruptionImpossible {
        concepts: num_concepts,
        relations: num_relations,
    })
}

/// One corrupted negative per positive; the output alternates
/// positive, negative, positive, negative, ...
pub fn sample_negatives(
    positives: &[Triple],
    graph: &KnowledgeGraph,
    rng: &mut RngStream,
) -> Result<NegativeSampleSet, KgaeError> {
    if positives.is_empty() {
        return Err(KgaeError::NoPositives);
    }
    let mut samples = Vec::with_capacity(2 * positives.len());
    for &p in positives {
        let neg = corrupt(p, graph.num_concepts(), graph.num_relations(), rng)?;
        samples.push(TripleSample {
            triple: p,
            positive: true,
        });
        samples.push(TripleSample {
            triple: neg,
            positive: false,
        });
    }
    Ok(NegativeSampleSet {
        samples,
        source_edge_count: positives.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgraph::GraphBuilder;

    fn graph() -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        for i in 0..6 {
            b.add_triple(&format!("c{i}"), if i % 2 == 0 { "r0" } else { "r1" }, &format!("c{}", (i + 1) % 6));
        }
        b.build()
    }

    #[test]
    fn doubles_and_alternates() {
        let g = graph();
        let set = sample_negatives(g.triples(), &g, &mut RngStream::new(1)).unwrap();
        assert_eq!(set.samples.len(), 2 * g.num_triples());
        assert_eq!(set.samples.iter().filter(|s| s.positive).count(), g.num_triples());
        for pair in set.samples.chunks(2) {
            assert!(pair[0].positive && !pair[1].positive);
            let (p, n) = (pair[0].triple, pair[1].triple);
            let diffs = (p.head != n.head) as u8 + (p.rel != n.rel) as u8 + (p.tail != n.tail) as u8;
            assert_eq!(diffs, 1);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let g = graph();
        let a = sample_negatives(g.triples(), &g, &mut RngStream::new(9)).unwrap();
        let b = sample_negatives(g.triples(), &g, &mut RngStream::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn impossible_corruption() {
        let mut b = GraphBuilder::new();
        b.add_triple("x", "r", "x");
        let g = b.build();
        assert!(matches!(
            sample_negatives(g.triples(), &g, &mut RngStream::new(0)),
            Err(KgaeError::CorruptionImpossible { .. })
        ));
        assert!(matches!(sample_negatives(&[], &g, &mut RngStream::new(0)), Err(KgaeError::NoPositives)));
    }
}
