use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::evalkit::EvalError;
use crate::stance::StanceLabel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

/// Whether a dev/test topic was unseen (zero) or seen a few times (few)
/// in training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shot {
    Zero,
    Few,
}

/// Challenge-phenomenon flags carried by a test example.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phenomena {
    pub imp: bool,
    pub mlt: bool,
    pub mls: bool,
    pub qte: bool,
    pub sarc: bool,
}

impl Phenomena {
    pub const NAMES: [&'static str; 5] = ["Imp", "mlT", "mlS", "Qte", "Sarc"];

    pub fn flags(&self) -> [bool; 5] {
        [self.imp, self.mlt, self.mls, self.qte, self.sarc]
    }

    pub fn from_flags(f: [bool; 5]) -> Self {
        Self {
            imp: f[0],
            mlt: f[1],
            mls: f[2],
            qte: f[3],
            sarc: f[4],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StanceExample {
    pub id: String,
    pub document: String,
    pub topic: String,
    pub gold: StanceLabel,
    pub split: Split,
    /// Only meaningful for dev/test rows.
    pub shot: Option<Shot>,
    pub phenomena: Phenomena,
}

/// Column names and value encodings for a stance CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    /// Id column; row numbers are used when absent.
    pub id_column: Option<String>,
    pub document_column: String,
    pub topic_column: String,
    pub label_column: String,
    pub shot_column: Option<String>,
    /// Cell values meaning a zero-shot topic; anything listed in
    /// `few_shot_values` is few-shot, other values are rejected.
    pub zero_shot_values: Vec<String>,
    pub few_shot_values: Vec<String>,
    /// Optional phenomenon columns in `Phenomena::NAMES` order.
    pub phenomenon_columns: [Option<String>; 5],
    /// Label cell value to stance. Numeric codings must be listed here.
    pub labels: BTreeMap<String, StanceLabel>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            id_column: Some("id".into()),
            document_column: "document".into(),
            topic_column: "topic".into(),
            label_column: "label".into(),
            shot_column: Some("shot".into()),
            zero_shot_values: vec!["zero".into()],
            few_shot_values: vec!["few".into()],
            phenomenon_columns: Phenomena::NAMES.map(|n| Some(n.to_string())),
            labels: [
                ("pro", StanceLabel::Pro),
                ("con", StanceLabel::Con),
                ("neutral", StanceLabel::Neu),
                ("neu", StanceLabel::Neu),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        }
    }
}

fn truthy(v: &str) -> Option<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" | "" => Some(false),
        _ => None,
    }
}

/// Reads a stance CSV with a header row. Optional columns that are absent
/// from the header are treated as unset.
pub fn load_dataset(path: &Path, split: Split, cfg: &DatasetConfig) -> Result<Vec<StanceExample>, EvalError> {
    let file = std::fs::File::open(path)?;
    read_dataset(file, split, cfg)
}

pub fn read_dataset<R: std::io::Read>(reader: R, split: Split, cfg: &DatasetConfig) -> Result<Vec<StanceExample>, EvalError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let need = |name: &str| col(name).ok_or_else(|| EvalError::MissingColumn(name.to_string()));
    let doc_c = need(&cfg.document_column)?;
    let topic_c = need(&cfg.topic_column)?;
    let label_c = need(&cfg.label_column)?;
    let id_c = cfg.id_column.as_deref().and_then(col);
    let shot_c = cfg.shot_column.as_deref().and_then(col);
    let ph_c: Vec<Option<usize>> = cfg.phenomenon_columns.iter().map(|c| c.as_deref().and_then(col)).collect();

    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // Header is line 1.
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        let err = |reason: String| EvalError::Row { line, reason };
        let field = |c: usize, name: &str| -> Result<String, EvalError> {
            match rec.get(c).map(str::trim) {
                Some(v) if !v.is_empty() => Ok(v.to_string()),
                _ => Err(err(format!("missing required field {name:?}"))),
            }
        };
        let document = field(doc_c, &cfg.document_column)?;
        let topic = field(topic_c, &cfg.topic_column)?;
        let raw_label = field(label_c, &cfg.label_column)?;
        let gold = *cfg
            .labels
            .get(&raw_label.to_lowercase())
            .or_else(|| cfg.labels.get(&raw_label))
            .ok_or_else(|| err(format!("unknown label {raw_label:?}")))?;
        let id = match id_c.and_then(|c| rec.get(c)).map(str::trim).filter(|v| !v.is_empty()) {
            Some(v) => v.to_string(),
            None => format!("{}", i + 1),
        };
        let shot = match (split, shot_c.and_then(|c| rec.get(c)).map(str::trim)) {
            (Split::Train, _) | (_, None) | (_, Some("")) => None,
            (_, Some(v)) if cfg.zero_shot_values.iter().any(|z| z == v) => Some(Shot::Zero),
            (_, Some(v)) if cfg.few_shot_values.iter().any(|z| z == v) => Some(Shot::Few),
            (_, Some(v)) => return Err(err(format!("unknown shot value {v:?}"))),
        };
        let mut flags = [false; 5];
        for (k, c) in ph_c.iter().enumerate() {
            if let Some(v) = c.and_then(|c| rec.get(c)) {
                flags[k] = truthy(v).ok_or_else(|| err(format!("bad {} flag {v:?}", Phenomena::NAMES[k])))?;
            }
        }
        out.push(StanceExample {
            id,
            document,
            topic,
            gold,
            split,
            shot,
            phenomena: Phenomena::from_flags(flags),
        });
    }
    Ok(out)
}

/// Writes examples with the default column layout.
pub fn write_dataset<W: std::io::Write>(writer: W, examples: &[StanceExample]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id", "document", "topic", "label", "shot"];
    header.extend(Phenomena::NAMES);
    w.write_record(&header)?;
    for ex in examples {
        let mut row = vec![
            ex.id.clone(),
            ex.document.clone(),
            ex.topic.clone(),
            ex.gold.as_str().to_string(),
            match ex.shot {
                Some(Shot::Zero) => "zero".into(),
                Some(Shot::Few) => "few".into(),
                None => String::new(),
            },
        ];
        row.extend(ex.phenomena.flags().iter().map(|&f| if f { "1" } else { "0" }.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_path(path: &Path, examples: &[StanceExample]) -> Result<(), EvalError> {
    write_dataset(std::fs::File::create(path)?, examples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_row_fixture() {
        let csv = "id,document,topic,label\n1,I like it,olympics,pro\n2,\"No, never\",taxes,con\n3,meh,cats,neutral\n";
        let ex = read_dataset(csv.as_bytes(), Split::Train, &DatasetConfig::default()).unwrap();
        let golds: Vec<_> = ex.iter().map(|e| e.gold).collect();
        assert_eq!(golds, [StanceLabel::Pro, StanceLabel::Con, StanceLabel::Neu]);
        assert_eq!(ex[1].document, "No, never");
        assert!(ex.iter().all(|e| e.shot.is_none()));
    }

    #[test]
    fn unknown_label_names_the_row() {
        let csv = "id,document,topic,label\n1,a,b,pro\n2,a,b,maybe\n";
        match read_dataset(csv.as_bytes(), Split::Dev, &DatasetConfig::default()) {
            Err(EvalError::Row { line, reason }) => {
                assert_eq!(line, 3);
                assert!(reason.contains("maybe"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn numeric_labels_need_declaration() {
        let csv = "post,new_topic,label,seen?\nx,t,0,0\ny,t,1,1\nz,t,2,0\n";
        let mut cfg = DatasetConfig {
            id_column: None,
            document_column: "post".into(),
            topic_column: "new_topic".into(),
            shot_column: Some("seen?".into()),
            zero_shot_values: vec!["0".into()],
            few_shot_values: vec!["1".into()],
            ..Default::default()
        };
        assert!(read_dataset(csv.as_bytes(), Split::Test, &cfg).is_err());
        cfg.labels = [("0", StanceLabel::Con), ("1", StanceLabel::Pro), ("2", StanceLabel::Neu)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let ex = read_dataset(csv.as_bytes(), Split::Test, &cfg).unwrap();
        assert_eq!(ex[1].gold, StanceLabel::Pro);
        assert_eq!(ex[1].shot, Some(Shot::Few));
        assert_eq!(ex[0].id, "1");
    }

    #[test]
    fn missing_field_and_column() {
        let csv = "id,document,topic,label\n1,,b,pro\n";
        assert!(matches!(
            read_dataset(csv.as_bytes(), Split::Train, &DatasetConfig::default()),
            Err(EvalError::Row { line: 2, .. })
        ));
        let csv = "id,text,topic,label\n1,a,b,pro\n";
        assert!(matches!(
            read_dataset(csv.as_bytes(), Split::Train, &DatasetConfig::default()),
            Err(EvalError::MissingColumn(_))
        ));
    }

    #[test]
    fn write_read_round_trip() {
        let ex = vec![StanceExample {
            id: "a1".into(),
            document: "text, with \"quotes\"".into(),
            topic: "t".into(),
            gold: StanceLabel::Con,
            split: Split::Dev,
            shot: Some(Shot::Few),
            phenomena: Phenomena {
                sarc: true,
                ..Default::default()
            },
        }];
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ex).unwrap();
        assert_eq!(read_dataset(buf.as_slice(), Split::Dev, &DatasetConfig::default()).unwrap(), ex);
    }
}
