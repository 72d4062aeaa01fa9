use std::collections::{BTreeMap, BTreeSet};

use crate::kgraph::graph::{ConceptId, KnowledgeGraph, Triple};
use crate::numerics::RngStream;
use crate::text::normalize_concept;

/// Deduplicated set of normalized concept surface forms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConceptSet {
    members: BTreeSet<String>,
}

impl ConceptSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, surface: &str) -> bool {
        let n = normalize_concept(surface);
        !n.is_empty() && self.members.insert(n)
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.members.contains(&normalize_concept(surface))
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(String::as_str)
    }

    pub fn extend(&mut self, other: &ConceptSet) {
        self.members.extend(other.members.iter().cloned());
    }

    /// Ids of members present in `graph` (ascending) and the number of
    /// members that could not be resolved.
    pub fn resolve(&self, graph: &KnowledgeGraph) -> (Vec<ConceptId>, usize) {
        let mut ids: Vec<ConceptId> = self.members.iter().filter_map(|m| graph.concept_id(m)).collect();
        ids.sort_unstable();
        ids.dedup();
        let unresolved = self.members.len() - ids.len();
        (ids, unresolved)
    }

    /// Newline-delimited seed list.
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        for m in &self.members {
            s.push_str(m);
            s.push('\n');
        }
        s
    }

    pub fn from_lines(text: &str) -> Self {
        text.lines().filter(|l| !l.trim().is_empty()).collect()
    }
}

impl<'a> FromIterator<&'a str> for ConceptSet {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        let mut s = ConceptSet::new();
        for m in iter {
            s.insert(m);
        }
        s
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractionMode {
    /// Triples with an endpoint in the seed set.
    #[default]
    Incident,
    /// Triples with an endpoint in the seeds or in their radius-1 neighborhood.
    Vicinity,
}

/// An extracted, densely re-indexed subgraph. The relation table is
/// inherited unchanged from the parent graph.
#[derive(Clone, Debug)]
pub struct Subgraph {
    pub graph: KnowledgeGraph,
    /// Parent id of every subgraph concept, indexed by the new id.
    pub parent_ids: Vec<ConceptId>,
    pub old_to_new: BTreeMap<ConceptId, ConceptId>,
    pub unresolved_seeds: usize,
}

fn anchor_set(graph: &KnowledgeGraph, seeds: &[ConceptId], mode: ExtractionMode) -> Vec<bool> {
    let mut anchor = vec![false; graph.num_concepts()];
    for &s in seeds {
        anchor[s.index()] = true;
    }
    if mode == ExtractionMode::Vicinity {
        for &s in seeds {
            for n in graph.undirected_neighbors(s) {
                anchor[n.index()] = true;
            }
        }
    }
    anchor
}

/// Triples touching the anchor set, in ascending (head, rel, tail) order.
fn touching_triples(graph: &KnowledgeGraph, anchor: &[bool]) -> BTreeSet<Triple> {
    use crate::kgraph::graph::Direction;
    let mut out = BTreeSet::new();
    for (i, _) in anchor.iter().enumerate().filter(|(_, a)| **a) {
        let c = ConceptId(i as u32);
        for &(rel, tail) in graph.adjacency(Direction::Outgoing).of(c) {
            out.insert(Triple { head: c, rel, tail });
        }
        for &(rel, head) in graph.adjacency(Direction::Incoming).of(c) {
            out.insert(Triple { head, rel, tail: c });
        }
    }
    out
}

/// Unique concepts (parent ids, ascending) of the subgraph that
/// [`extract_subgraph`] would return, without materializing it.
pub fn subgraph_concepts(graph: &KnowledgeGraph, seeds: &ConceptSet, mode: ExtractionMode) -> Vec<ConceptId> {
    let (ids, _) = seeds.resolve(graph);
    let anchor = anchor_set(graph, &ids, mode);
    let mut concepts = BTreeSet::new();
    for t in touching_triples(graph, &anchor) {
        concepts.insert(t.head);
        concepts.insert(t.tail);
    }
    concepts.into_iter().collect()
}

fn induced(graph: &KnowledgeGraph, triples: impl IntoIterator<Item = Triple>, unresolved: usize) -> Subgraph {
    let triples: Vec<Triple> = triples.into_iter().collect();
    let mut concepts = BTreeSet::new();
    for t in &triples {
        concepts.insert(t.head);
        concepts.insert(t.tail);
    }
    let parent_ids: Vec<ConceptId> = concepts.into_iter().collect();
    let old_to_new: BTreeMap<ConceptId, ConceptId> = parent_ids
        .iter()
        .enumerate()
        .map(|(i, &old)| (old, ConceptId(i as u32)))
        .collect();
    let labels = parent_ids.iter().map(|&c| graph.concept_label(c).to_string()).collect();
    let remapped = triples
        .iter()
        .map(|t| Triple {
            head: old_to_new[&t.head],
            rel: t.rel,
            tail: old_to_new[&t.tail],
        })
        .collect();
    let sub = KnowledgeGraph::from_parts(labels, graph.relation_names().to_vec(), remapped)
        .expect("subgraph of a valid graph is valid");
    Subgraph {
        graph: sub,
        parent_ids,
        old_to_new,
        unresolved_seeds: unresolved,
    }
}

/// Extracts the triples related to `seeds` (see [`ExtractionMode`]) and
/// re-indexes their concepts densely in ascending parent-id order.
pub fn extract_subgraph(graph: &KnowledgeGraph, seeds: &ConceptSet, mode: ExtractionMode) -> Subgraph {
    let (ids, unresolved) = seeds.resolve(graph);
    let anchor = anchor_set(graph, &ids, mode);
    induced(graph, touching_triples(graph, &anchor), unresolved)
}

/// Keeps `round(fraction * |V|)` concepts chosen uniformly at random and
/// the triples induced among them. `fraction >= 1` returns the graph
/// unchanged.
pub fn subsample_concepts(graph: &KnowledgeGraph, fraction: f64, rng: &mut RngStream) -> Subgraph {
    let n = graph.num_concepts();
    if fraction >= 1.0 {
        return identity(graph);
    }
    let keep_n = ((fraction.max(0.0) * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut keep = vec![false; n];
    for &i in &order[..keep_n] {
        keep[i] = true;
    }
    let triples = graph
        .triples()
        .iter()
        .copied()
        .filter(|t| keep[t.head.index()] && keep[t.tail.index()]);
    induced(graph, triples, 0)
}

/// Keeps `round(fraction * |E|)` triples chosen uniformly at random.
pub fn subsample_edges(graph: &KnowledgeGraph, fraction: f64, rng: &mut RngStream) -> Subgraph {
    let n = graph.num_triples();
    if fraction >= 1.0 {
        return identity(graph);
    }
    let keep_n = ((fraction.max(0.0) * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut chosen: Vec<usize> = order[..keep_n].to_vec();
    chosen.sort_unstable();
    induced(graph, chosen.into_iter().map(|i| graph.triples()[i]), 0)
}

fn identity(graph: &KnowledgeGraph) -> Subgraph {
    let parent_ids: Vec<ConceptId> = (0..graph.num_concepts() as u32).map(ConceptId).collect();
    Subgraph {
        graph: graph.clone(),
        old_to_new: parent_ids.iter().map(|&c| (c, c)).collect(),
        parent_ids,
        unresolved_seeds: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgraph::GraphBuilder;

    fn chain() -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        b.add_triple("a", "r", "b");
        b.add_triple("b", "r", "c");
        b.add_triple("c", "r", "d");
        b.build()
    }

    fn labeled(s: &Subgraph) -> Vec<(String, String)> {
        s.graph
            .labeled_triples()
            .map(|(h, _, t)| (h.to_string(), t.to_string()))
            .collect()
    }

    fn pairs(p: &[(&str, &str)]) -> Vec<(String, String)> {
        p.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn incident_mode() {
        let s = extract_subgraph(&chain(), &["b"].into_iter().collect(), ExtractionMode::Incident);
        assert_eq!(labeled(&s), pairs(&[("a", "b"), ("b", "c")]));
        assert_eq!(s.graph.num_concepts(), 3);
    }

    #[test]
    fn vicinity_mode() {
        let s = extract_subgraph(&chain(), &["b"].into_iter().collect(), ExtractionMode::Vicinity);
        assert_eq!(labeled(&s), pairs(&[("a", "b"), ("b", "c"), ("c", "d")]));
        assert_eq!(s.parent_ids.len(), 4);
    }

    #[test]
    fn unknown_seed_gives_empty_graph() {
        let s = extract_subgraph(&chain(), &["z"].into_iter().collect(), ExtractionMode::Vicinity);
        assert!(s.graph.is_empty());
        assert_eq!(s.graph.num_concepts(), 0);
        assert_eq!(s.unresolved_seeds, 1);
    }

    #[test]
    fn concepts_shortcut_matches_extraction() {
        let g = chain();
        for mode in [ExtractionMode::Incident, ExtractionMode::Vicinity] {
            let seeds: ConceptSet = ["a", "d"].into_iter().collect();
            let s = extract_subgraph(&g, &seeds, mode);
            assert_eq!(subgraph_concepts(&g, &seeds, mode), s.parent_ids);
        }
    }

    #[test]
    fn subsampling() {
        let g = chain();
        let mut rng = RngStream::new(3);
        let full = subsample_concepts(&g, 1.0, &mut rng);
        assert_eq!(full.graph.triples(), g.triples());
        let half = subsample_concepts(&g, 0.5, &mut rng);
        assert!(half.graph.num_concepts() <= 2);
        let e = subsample_edges(&g, 0.34, &mut rng);
        assert_eq!(e.graph.num_triples(), 1);
    }
}
