//! Knowledge-graph data model, triple-dump ingestion, seed-term
//! extraction and subgraph extraction.

mod graph;
mod ingest;
mod io;
mod pos;
mod subgraph;

pub use graph::{Adjacency, ConceptId, Direction, GraphBuilder, KnowledgeGraph, RelationId, Triple};
pub use ingest::{ingest_triples, ingest_path, DumpFormat, IngestConfig, IngestReport, Reject};
pub use io::{read_serialized, read_serialized_path, write_serialized, write_serialized_path, write_triples_tsv};
pub use pos::{extract_seed_terms, LexiconTagger, Pos, PosOracle};
pub use subgraph::{
    extract_subgraph, subgraph_concepts, subsample_concepts, subsample_edges, ConceptSet, ExtractionMode, Subgraph,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("ingestion produced an empty graph ({rows_read} rows read)")]
    Empty { rows_read: usize },
    #[error("invalid triple {0:?}: id out of range")]
    InvalidTriple(Triple),
    #[error("serialized graph: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
