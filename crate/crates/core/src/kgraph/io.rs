//! Serialized graph format:
//!
//! ```text
//! #concepts N #relations M #triples K
//! <N lines: id TAB surface>
//! <M lines: id TAB relation name>
//! <K lines: head id TAB relation id TAB tail id>
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::kgraph::graph::{KnowledgeGraph, Triple};
use crate::kgraph::GraphError;

pub fn write_serialized<W: Write>(graph: &KnowledgeGraph, mut w: W) -> Result<(), GraphError> {
    writeln!(
        w,
        "#concepts {} #relations {} #triples {}",
        graph.num_concepts(),
        graph.num_relations(),
        graph.num_triples()
    )?;
    for (i, c) in graph.concept_labels().iter().enumerate() {
        writeln!(w, "{i}\t{c}")?;
    }
    for (i, r) in graph.relation_names().iter().enumerate() {
        writeln!(w, "{i}\t{r}")?;
    }
    for t in graph.triples() {
        writeln!(w, "{}\t{}\t{}", t.head.0, t.rel.0, t.tail.0)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_header(line: &str) -> Option<(usize, usize, usize)> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != 6 || f[0] != "#concepts" || f[2] != "#relations" || f[4] != "#triples" {
        return None;
    }
    Some((f[1].parse().ok()?, f[3].parse().ok()?, f[5].parse().ok()?))
}

pub fn read_serialized<R: BufRead>(reader: R) -> Result<KnowledgeGraph, GraphError> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| GraphError::Format("missing header".into()))??;
    let (nc, nr, nt) =
        parse_header(&header).ok_or_else(|| GraphError::Format(format!("bad header {header:?}")))?;
    let mut lineno = 1;
    let mut next_fields = |expected: usize| -> Result<Vec<String>, GraphError> {
        lineno += 1;
        let line = lines
            .next()
            .ok_or_else(|| GraphError::Format(format!("unexpected end of file at line {lineno}")))??;
        let f: Vec<String> = line.split('\t').map(str::to_string).collect();
        if f.len() != expected {
            return Err(GraphError::Malformed {
                line: lineno,
                reason: format!("expected {expected} fields"),
            });
        }
        Ok(f)
    };
    let parse_id = |s: &str, line: usize| -> Result<u32, GraphError> {
        s.parse().map_err(|_| GraphError::Malformed {
            line,
            reason: format!("bad id {s:?}"),
        })
    };

    let mut concepts = Vec::with_capacity(nc);
    for i in 0..nc {
        let f = next_fields(2)?;
        if parse_id(&f[0], i + 2)? as usize != i {
            return Err(GraphError::Format(format!("concept ids must be contiguous (line {})", i + 2)));
        }
        concepts.push(f[1].clone());
    }
    let mut relations = Vec::with_capacity(nr);
    for i in 0..nr {
        let f = next_fields(2)?;
        if parse_id(&f[0], nc + i + 2)? as usize != i {
            return Err(GraphError::Format("relation ids must be contiguous".into()));
        }
        relations.push(f[1].clone());
    }
    let mut triples = Vec::with_capacity(nt);
    for i in 0..nt {
        let f = next_fields(3)?;
        let line = nc + nr + i + 2;
        triples.push(Triple::new(parse_id(&f[0], line)?, parse_id(&f[1], line)?, parse_id(&f[2], line)?));
    }
    KnowledgeGraph::from_parts(concepts, relations, triples)
}

pub fn write_serialized_path(graph: &KnowledgeGraph, path: &Path) -> Result<(), GraphError> {
    write_serialized(graph, BufWriter::new(File::create(path)?))
}

pub fn read_serialized_path(path: &Path) -> Result<KnowledgeGraph, GraphError> {
    read_serialized(BufReader::new(File::open(path)?))
}

/// Writes `head<TAB>relation<TAB>tail` rows with surface labels.
pub fn write_triples_tsv<W: Write>(graph: &KnowledgeGraph, mut w: W) -> Result<(), GraphError> {
    for (h, r, t) in graph.labeled_triples() {
        writeln!(w, "{h}\t{r}\t{t}")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kgraph::GraphBuilder;

    #[test]
    fn serialized_round_trip() {
        let mut b = GraphBuilder::new();
        b.add_triple("ice cream", "IsA", "dessert");
        b.add_triple("dessert", "RelatedTo", "sugar");
        let g = b.build();
        let mut buf = Vec::new();
        write_serialized(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#concepts 3 #relations 2 #triples 2\n0\tice_cream\n"));
        let back = read_serialized(buf.as_slice()).unwrap();
        assert_eq!(back.triples(), g.triples());
        assert_eq!(back.concept_labels(), g.concept_labels());
    }

    #[test]
    fn rejects_truncated_input() {
        assert!(read_serialized("#concepts 2 #relations 0 #triples 0\n0\ta\n".as_bytes()).is_err());
        assert!(read_serialized("garbage\n".as_bytes()).is_err());
    }
}
