use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kgraph::graph::{GraphBuilder, KnowledgeGraph};
use crate::kgraph::GraphError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DumpFormat {
    /// Decide per row: ConceptNet assertion rows have a `/r/` relation column.
    #[default]
    Auto,
    /// `head<TAB>relation<TAB>tail`
    SimpleTsv,
    /// ConceptNet 5 assertion dump (`uri, /r/rel, /c/lang/start, /c/lang/end, json`).
    ConceptNet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub format: DumpFormat,
    /// Language tag both ConceptNet endpoints must carry (`None` keeps all).
    pub language: Option<String>,
    /// When set, only these relation names are kept.
    pub relations: Option<BTreeSet<String>>,
    /// Abort on the first malformed row instead of recording it.
    pub strict: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            format: DumpFormat::Auto,
            language: Some("en".into()),
            relations: None,
            strict: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub duplicates: usize,
    /// Rows excluded by the language or relation filters.
    pub filtered: usize,
    pub rejects: Vec<Reject>,
}

impl IngestReport {
    pub fn rows_dropped(&self) -> usize {
        self.duplicates + self.filtered + self.rejects.len()
    }
}

enum Row {
    Keep(String, String, String),
    Filtered,
}

/// Splits `/c/en/ice_cream/n/...` into (language, surface).
fn parse_concept_uri(uri: &str) -> Option<(&str, String)> {
    let mut parts = uri.strip_prefix("/c/")?.split('/');
    let lang = parts.next().filter(|s| !s.is_empty())?;
    let term = parts.next().filter(|s| !s.is_empty())?;
    Some((lang, term.replace('_', " ")))
}

fn parse_conceptnet(fields: &[&str], cfg: &IngestConfig) -> Result<Row, String> {
    if fields.len() < 4 {
        return Err(format!("expected at least 4 columns, found {}", fields.len()));
    }
    let rel = fields[1]
        .strip_prefix("/r/")
        .filter(|r| !r.is_empty())
        .ok_or_else(|| format!("bad relation uri {:?}", fields[1]))?;
    let (hl, head) = parse_concept_uri(fields[2]).ok_or_else(|| format!("bad concept uri {:?}", fields[2]))?;
    let (tl, tail) = parse_concept_uri(fields[3]).ok_or_else(|| format!("bad concept uri {:?}", fields[3]))?;
    if let Some(lang) = &cfg.language {
        if hl != lang || tl != lang {
            return Ok(Row::Filtered);
        }
    }
    Ok(Row::Keep(head, rel.to_string(), tail))
}

fn parse_simple(fields: &[&str]) -> Result<Row, String> {
    if fields.len() != 3 {
        return Err(format!("expected 3 tab-separated columns, found {}", fields.len()));
    }
    if fields.iter().any(|f| f.trim().is_empty()) {
        return Err("empty field".into());
    }
    Ok(Row::Keep(fields[0].to_string(), fields[1].trim().to_string(), fields[2].to_string()))
}

/// Reads a triple dump into a deduplicated graph. Blank lines and lines
/// starting with `#` are ignored.
pub fn ingest_triples<R: BufRead>(reader: R, cfg: &IngestConfig) -> Result<(KnowledgeGraph, IngestReport), GraphError> {
    let mut builder = GraphBuilder::new();
    let mut report = IngestReport::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        report.rows_read += 1;
        let fields: Vec<&str> = trimmed.split('\t').collect();
        let conceptnet = match cfg.format {
            DumpFormat::ConceptNet => true,
            DumpFormat::SimpleTsv => false,
            DumpFormat::Auto => fields.len() >= 4 && fields[1].starts_with("/r/"),
        };
        let parsed = if conceptnet {
            parse_conceptnet(&fields, cfg)
        } else {
            parse_simple(&fields)
        };
        match parsed {
            Err(reason) => {
                if cfg.strict {
                    return Err(GraphError::Malformed { line: lineno, reason });
                }
                report.rejects.push(Reject { line: lineno, reason });
            }
            Ok(Row::Filtered) => report.filtered += 1,
            Ok(Row::Keep(h, r, t)) => {
                if cfg.relations.as_ref().is_some_and(|allow| !allow.contains(&r)) {
                    report.filtered += 1;
                } else if builder.add_triple(&h, &r, &t) {
                    report.rows_kept += 1;
                } else {
                    report.duplicates += 1;
                }
            }
        }
    }
    if builder.num_triples() == 0 {
        return Err(GraphError::Empty {
            rows_read: report.rows_read,
        });
    }
    Ok((builder.build(), report))
}

pub fn ingest_path(path: &Path, cfg: &IngestConfig) -> Result<(KnowledgeGraph, IngestReport), GraphError> {
    ingest_triples(BufReader::new(File::open(path)?), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(text: &str, cfg: &IngestConfig) -> Result<(KnowledgeGraph, IngestReport), GraphError> {
        ingest_triples(text.as_bytes(), cfg)
    }

    #[test]
    fn three_row_tsv() {
        let (g, r) = ingest("a\tRelatedTo\tb\nb\tIsA\tc\na\tIsA\tc\n", &IngestConfig::default()).unwrap();
        assert_eq!((g.num_concepts(), g.num_relations(), g.num_triples()), (3, 2, 3));
        assert_eq!((r.rows_read, r.rows_kept, r.rows_dropped()), (3, 3, 0));
    }

    #[test]
    fn duplicates_are_dropped() {
        let (g, r) = ingest("a\tRelatedTo\tb\na\tRelatedTo\tb\nb\tIsA\tc\na\tIsA\tc\n", &IngestConfig::default()).unwrap();
        assert_eq!(g.num_triples(), 3);
        assert_eq!(r.duplicates, 1);
    }

    #[test]
    fn malformed_rows_recorded_or_fatal() {
        let text = "a\tRelatedTo\tb\nbroken row\nc\tIsA\t\n";
        let (g, r) = ingest(text, &IngestConfig::default()).unwrap();
        assert_eq!(g.num_triples(), 1);
        assert_eq!(r.rejects.iter().map(|x| x.line).collect::<Vec<_>>(), [2, 3]);
        let strict = IngestConfig {
            strict: true,
            ..IngestConfig::default()
        };
        assert!(matches!(ingest(text, &strict), Err(GraphError::Malformed { line: 2, .. })));
    }

    #[test]
    fn empty_result_is_an_error() {
        assert!(matches!(ingest("# only a comment\n\n", &IngestConfig::default()), Err(GraphError::Empty { .. })));
    }

    #[test]
    fn conceptnet_rows() {
        let text = concat!(
            "/a/[/r/RelatedTo/,/c/en/teacher/,/c/en/job/]\t/r/RelatedTo\t/c/en/teacher/n\t/c/en/job\t{}\n",
            "/a/[/r/IsA/,/c/en/ice_cream/,/c/en/dessert/]\t/r/IsA\t/c/en/ice_cream\t/c/en/dessert/n/wn/food\t{}\n",
            "/a/[/r/RelatedTo/,/c/fr/chat/,/c/en/cat/]\t/r/RelatedTo\t/c/fr/chat\t/c/en/cat\t{}\n",
        );
        let (g, r) = ingest(text, &IngestConfig::default()).unwrap();
        assert_eq!(g.num_triples(), 2);
        assert_eq!(r.filtered, 1);
        assert!(g.concept_id("ice_cream").is_some());
        assert_eq!(g.relation_names(), ["RelatedTo", "IsA"]);

        let all = IngestConfig {
            language: None,
            ..IngestConfig::default()
        };
        assert_eq!(ingest(text, &all).unwrap().0.num_triples(), 3);
    }

    #[test]
    fn relation_whitelist() {
        let cfg = IngestConfig {
            relations: Some(["IsA".to_string()].into_iter().collect()),
            ..IngestConfig::default()
        };
        let (g, r) = ingest("a\tRelatedTo\tb\nb\tIsA\tc\n", &cfg).unwrap();
        assert_eq!(g.num_triples(), 1);
        assert_eq!(r.filtered, 1);
    }
}
