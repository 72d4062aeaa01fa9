use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kgraph::GraphError;
use crate::text::normalize_concept;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConceptId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl ConceptId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: ConceptId,
    pub rel: RelationId,
    pub tail: ConceptId,
}

impl Triple {
    pub fn new(head: u32, rel: u32, tail: u32) -> Self {
        Self {
            head: ConceptId(head),
            rel: RelationId(rel),
            tail: ConceptId(tail),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Outgoing,
    Incoming,
}

/// Compressed per-node neighbor lists, each sorted by (relation, neighbor).
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Adjacency {
    offsets: Vec<usize>,
    entries: Vec<(RelationId, ConceptId)>,
}

impl Adjacency {
    fn build(num_concepts: usize, triples: &[Triple], dir: Direction) -> Self {
        let key = |t: &Triple| match dir {
            Direction::Outgoing => (t.head, t.tail),
            Direction::Incoming => (t.tail, t.head),
        };
        let mut counts = vec![0usize; num_concepts + 1];
        for t in triples {
            counts[key(t).0.index() + 1] += 1;
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let mut fill = counts.clone();
        let mut entries = vec![(RelationId(0), ConceptId(0)); triples.len()];
        for t in triples {
            let (node, other) = key(t);
            entries[fill[node.index()]] = (t.rel, other);
            fill[node.index()] += 1;
        }
        for i in 0..num_concepts {
            entries[counts[i]..counts[i + 1]].sort_unstable();
        }
        Self {
            offsets: counts,
            entries,
        }
    }

    /// All `(relation, neighbor)` pairs of `node`.
    pub fn of(&self, node: ConceptId) -> &[(RelationId, ConceptId)] {
        let i = node.index();
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Neighbors of `node` through relation `rel`.
    pub fn neighbors(&self, node: ConceptId, rel: RelationId) -> impl Iterator<Item = ConceptId> + '_ {
        let all = self.of(node);
        let lo = all.partition_point(|(r, _)| *r < rel);
        let hi = all.partition_point(|(r, _)| *r <= rel);
        all[lo..hi].iter().map(|(_, c)| *c)
    }
}

/// Immutable directed labeled multigraph of concepts and relations.
#[derive(Clone)]
pub struct KnowledgeGraph {
    concepts: Vec<String>,
    concept_index: HashMap<String, ConceptId>,
    relations: Vec<String>,
    relation_index: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    outgoing: Adjacency,
    incoming: Adjacency,
}

impl fmt::Debug for KnowledgeGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KnowledgeGraph")
            .field("concepts", &self.concepts.len())
            .field("relations", &self.relations.len())
            .field("triples", &self.triples.len())
            .finish()
    }
}

impl KnowledgeGraph {
    /// Builds a graph from explicit tables. Concept labels are normalized;
    /// duplicate triples are dropped (first occurrence kept).
    pub fn from_parts(concepts: Vec<String>, relations: Vec<String>, triples: Vec<Triple>) -> Result<Self, GraphError> {
        let mut b = GraphBuilder::new();
        for c in &concepts {
            b.add_concept(c);
        }
        for r in &relations {
            b.add_relation(r);
        }
        if b.num_concepts() != concepts.len() || b.relations.len() != relations.len() {
            return Err(GraphError::Format("duplicate concept or relation labels".into()));
        }
        for t in triples {
            if t.head.index() >= concepts.len() || t.tail.index() >= concepts.len() || t.rel.index() >= relations.len() {
                return Err(GraphError::InvalidTriple(t));
            }
            b.add_triple_ids(t);
        }
        Ok(b.build())
    }

    pub fn empty() -> Self {
        GraphBuilder::new().build()
    }

    pub fn num_concepts(&self) -> usize {
        self.concepts.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn concept_label(&self, id: ConceptId) -> &str {
        &self.concepts[id.index()]
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        &self.relations[id.index()]
    }

    pub fn concept_labels(&self) -> &[String] {
        &self.concepts
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relations
    }

    /// Looks up a concept by (normalized) surface form.
    pub fn concept_id(&self, surface: &str) -> Option<ConceptId> {
        self.concept_index
            .get(surface)
            .or_else(|| self.concept_index.get(&normalize_concept(surface)))
            .copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_index.get(name).copied()
    }

    pub fn adjacency(&self, dir: Direction) -> &Adjacency {
        match dir {
            Direction::Outgoing => &self.outgoing,
            Direction::Incoming => &self.incoming,
        }
    }

    /// Concepts sharing an edge with `node`, in either direction, any relation.
    pub fn undirected_neighbors(&self, node: ConceptId) -> impl Iterator<Item = ConceptId> + '_ {
        self.outgoing
            .of(node)
            .iter()
            .chain(self.incoming.of(node))
            .map(|(_, c)| *c)
    }

    /// Recomputes both adjacency indexes from the triple list.
    pub fn rebuild_adjacency(&self) -> (Adjacency, Adjacency) {
        (
            Adjacency::build(self.concepts.len(), &self.triples, Direction::Outgoing),
            Adjacency::build(self.concepts.len(), &self.triples, Direction::Incoming),
        )
    }

    /// Triples rendered with surface labels.
    pub fn labeled_triples(&self) -> impl Iterator<Item = (&str, &str, &str)> + '_ {
        self.triples
            .iter()
            .map(|t| (self.concept_label(t.head), self.relation_name(t.rel), self.concept_label(t.tail)))
    }
}

/// Incremental, deduplicating graph constructor.
#[derive(Default)]
pub struct GraphBuilder {
    concepts: Vec<String>,
    concept_index: HashMap<String, ConceptId>,
    relations: Vec<String>,
    relation_index: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    seen: HashSet<Triple>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_concepts(&self) -> usize {
        self.concepts.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    /// Returns the id of the (normalized) concept, inserting it if new.
    pub fn add_concept(&mut self, surface: &str) -> ConceptId {
        let norm = normalize_concept(surface);
        if let Some(&id) = self.concept_index.get(&norm) {
            return id;
        }
        let id = ConceptId(self.concepts.len() as u32);
        self.concepts.push(norm.clone());
        self.concept_index.insert(norm, id);
        id
    }

    pub fn add_relation(&mut self, name: &str) -> RelationId {
        let name = name.trim();
        if let Some(&id) = self.relation_index.get(name) {
            return id;
        }
        let id = RelationId(self.relations.len() as u32);
        self.relations.push(name.to_string());
        self.relation_index.insert(name.to_string(), id);
        id
    }

    /// Adds a labeled triple; returns false if it was a duplicate.
    pub fn add_triple(&mut self, head: &str, rel: &str, tail: &str) -> bool {
        let h = self.add_concept(head);
        let r = self.add_relation(rel);
        let t = self.add_concept(tail);
        self.add_triple_ids(Triple { head: h, rel: r, tail: t })
    }

    pub(crate) fn add_triple_ids(&mut self, t: Triple) -> bool {
        if self.seen.insert(t) {
            self.triples.push(t);
            true
        } else {
            false
        }
    }

    pub fn build(self) -> KnowledgeGraph {
        let outgoing = Adjacency::build(self.concepts.len(), &self.triples, Direction::Outgoing);
        let incoming = Adjacency::build(self.concepts.len(), &self.triples, Direction::Incoming);
        KnowledgeGraph {
            concepts: self.concepts,
            concept_index: self.concept_index,
            relations: self.relations,
            relation_index: self.relation_index,
            triples: self.triples,
            outgoing,
            incoming,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> KnowledgeGraph {
        let mut b = GraphBuilder::new();
        b.add_triple("a", "RelatedTo", "b");
        b.add_triple("b", "IsA", "c");
        b.add_triple("a", "IsA", "c");
        assert!(!b.add_triple("a", "RelatedTo", "b"));
        b.build()
    }

    #[test]
    fn tables_in_first_seen_order() {
        let g = small();
        assert_eq!(g.concept_labels(), ["a", "b", "c"]);
        assert_eq!(g.relation_names(), ["RelatedTo", "IsA"]);
        assert_eq!(g.num_triples(), 3);
    }

    #[test]
    fn adjacency_by_relation() {
        let g = small();
        let a = g.concept_id("a").unwrap();
        let isa = g.relation_id("IsA").unwrap();
        let out: Vec<_> = g.adjacency(Direction::Outgoing).neighbors(a, isa).collect();
        assert_eq!(out, [g.concept_id("c").unwrap()]);
        let c = g.concept_id("c").unwrap();
        assert_eq!(g.adjacency(Direction::Incoming).of(c).len(), 2);
        let (o, i) = g.rebuild_adjacency();
        assert_eq!(&o, g.adjacency(Direction::Outgoing));
        assert_eq!(&i, g.adjacency(Direction::Incoming));
    }

    #[test]
    fn lookup_normalizes() {
        let mut b = GraphBuilder::new();
        b.add_triple("Nuclear Power", "IsA", "energy");
        let g = b.build();
        assert!(g.concept_id("nuclear power").is_some());
        assert!(g.concept_id("NUCLEAR_POWER").is_some());
        assert_eq!(g.concept_label(ConceptId(0)), "nuclear_power");
    }

    #[test]
    fn from_parts_rejects_bad_ids() {
        let err = KnowledgeGraph::from_parts(vec!["a".into()], vec!["r".into()], vec![Triple::new(0, 0, 1)]);
        assert!(matches!(err, Err(GraphError::InvalidTriple(_))));
    }
}
