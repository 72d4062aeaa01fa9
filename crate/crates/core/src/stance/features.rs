use crate::kgae::ConceptFeatures;
use crate::kgraph::{extract_seed_terms, extract_subgraph, ConceptId, ExtractionMode, KnowledgeGraph, PosOracle};
use crate::scalar::Scalar;
use crate::stance::StanceError;

/// Graph, frozen concept features exported over it, and the tagger used
/// to pick seed terms.
#[derive(Clone, Copy)]
pub struct KnowledgeSource<'a, T> {
    pub graph: &'a KnowledgeGraph,
    pub features: &'a ConceptFeatures<T>,
    pub oracle: &'a dyn PosOracle,
    pub mode: ExtractionMode,
}

impl<'a, T: Scalar> KnowledgeSource<'a, T> {
    pub fn new(graph: &'a KnowledgeGraph, features: &'a ConceptFeatures<T>, oracle: &'a dyn PosOracle) -> Result<Self, StanceError> {
        if features.len() != graph.num_concepts() {
            return Err(StanceError::Dimension(format!(
                "{} feature rows for {} concepts",
                features.len(),
                graph.num_concepts()
            )));
        }
        Ok(Self {
            graph,
            features,
            oracle,
            mode: ExtractionMode::Vicinity,
        })
    }
}

/// Averaged concept features of the document-specific subgraph.
#[derive(Clone, Debug, PartialEq)]
pub struct CommonsenseFeature<T> {
    pub h_kg: Vec<T>,
    pub matched_concept_count: usize,
    /// Parent-graph ids of the subgraph's concepts.
    pub concepts: Vec<ConceptId>,
}

/// Seeds are the nouns, adjectives and adverbs of document and topic;
/// `h_kg` is the mean feature row over every concept of the subgraph
/// around them, or zero when nothing matches.
pub fn commonsense_feature<T: Scalar>(document: &str, topic: &str, source: &KnowledgeSource<'_, T>) -> CommonsenseFeature<T> {
    let seeds = extract_seed_terms(&[document, topic], source.oracle);
    let sub = extract_subgraph(source.graph, &seeds, source.mode);
    let d = source.features.dim();
    let mut h_kg = vec![T::zero(); d];
    for &c in &sub.parent_ids {
        for (acc, &v) in h_kg.iter_mut().zip(source.features.row(c)) {
            *acc += v;
        }
    }
    let n = sub.parent_ids.len();
    if n > 0 {
        let inv = T::one() / T::lit(n as f64);
        for v in &mut h_kg {
            *v *= inv;
        }
    }
    CommonsenseFeature {
        h_kg,
        matched_concept_count: n,
        concepts: sub.parent_ids,
    }
}
