//! Dataset, graph, audit, joint and lexicon files.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use kgat_core::causal::Observation;
use kgat_core::counterfactual::{CounterfactualError, SwapLexicon};
use kgat_core::data::{DataError, Dataset, Payload, Record};
use kgat_core::fairness::AuditRecord;
use kgat_core::graph::{GraphError, KnowledgeGraph};
use serde_json::{json, Value};

/// Audit columns that never act as confounders.
pub const RESERVED_AUDIT_COLUMNS: [&str; 2] = ["id", "score"];

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: row {row}: {reason}")]
    Row { path: PathBuf, row: usize, reason: String },
    #[error("{path}: row {row}, column {column:?}: {reason}")]
    Cell {
        path: PathBuf,
        row: usize,
        column: String,
        reason: String,
    },
    #[error("{path}: {reason}")]
    Header { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Graph {
        path: PathBuf,
        #[source]
        source: GraphError,
    },
    #[error("{path}: {source}")]
    Data {
        path: PathBuf,
        #[source]
        source: DataError,
    },
    #[error("{path}: {source}")]
    Lexicon {
        path: PathBuf,
        #[source]
        source: CounterfactualError,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

fn read(path: &Path) -> Result<String, LoadError> {
    fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.into(), source })
}

pub fn write(path: &Path, contents: &[u8]) -> Result<(), LoadError> {
    let io = |source| LoadError::Io { path: path.into(), source };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(contents).map_err(io)
}

/// Triples, optionally with a feature CSV; one-hot features otherwise.
pub fn load_graph(triples: &Path, features: Option<&Path>) -> Result<KnowledgeGraph, LoadError> {
    let text = read(triples)?;
    match features {
        Some(fp) => {
            let feats = read(fp)?;
            KnowledgeGraph::from_sources(&text, Some(&feats)).map_err(|source| LoadError::Graph { path: fp.into(), source })
        }
        None => KnowledgeGraph::from_sources(&text, None)
            .map(KnowledgeGraph::with_one_hot_features)
            .map_err(|source| LoadError::Graph { path: triples.into(), source }),
    }
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

fn parse_bit(path: &Path, row: usize, column: &str, value: &str) -> Result<bool, LoadError> {
    match value {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(LoadError::Cell {
            path: path.into(),
            row,
            column: column.into(),
            reason: format!("expected 0 or 1, got {other:?}"),
        }),
    }
}

/// JSONL rows `{"id", "text", "label", "attribute"}`, tokenized and linked
/// against `graph`. Blank lines are skipped; rows are numbered from 1.
pub fn load_text_dataset(
    path: &Path,
    graph: &KnowledgeGraph,
    allowed_attributes: Option<&BTreeSet<String>>,
) -> Result<Dataset, LoadError> {
    let text = read(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fail = |reason: String| LoadError::Row { path: path.into(), row, reason };
        let v: Value = serde_json::from_str(line).map_err(|e| fail(format!("invalid JSON: {e}")))?;
        let field = |name: &str| v.get(name).ok_or_else(|| fail(format!("missing field {name:?}")));
        let id = match field("id")? {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            _ => return Err(fail("field \"id\" must be a string or number".into())),
        };
        let body = field("text")?
            .as_str()
            .ok_or_else(|| fail("field \"text\" must be a string".into()))?;
        let label = match field("label")? {
            Value::Number(n) if n.as_u64() == Some(1) => true,
            Value::Number(n) if n.as_u64() == Some(0) => false,
            Value::Bool(b) => *b,
            other => return Err(fail(format!("field \"label\" must be 0 or 1, got {other}"))),
        };
        let attribute = field("attribute")?
            .as_str()
            .ok_or_else(|| fail("field \"attribute\" must be a string".into()))?;
        if let Some(allowed) = allowed_attributes {
            if !allowed.contains(attribute) {
                return Err(fail(format!("unknown attribute value {attribute:?}")));
            }
        }
        records.push(Record::text(id, body, label, attribute));
    }
    let mut d = Dataset::new(records).map_err(|source| LoadError::Data { path: path.into(), source })?;
    d.relink(graph);
    Ok(d)
}

/// One JSON object per record, keys sorted, tokens joined by spaces.
pub fn text_dataset_jsonl(dataset: &Dataset) -> String {
    let mut out = String::new();
    for r in dataset {
        let text = match &r.payload {
            Payload::Tokens(t) => t.join(" "),
            Payload::Features(_) => continue,
        };
        let row = json!({
            "id": r.id,
            "text": text,
            "label": r.label as u8,
            "attribute": r.attribute,
        });
        out.push_str(&row.to_string());
        out.push('\n');
    }
    out
}

/// CSV with header `id,attribute,label,<feature columns…>`.
pub fn load_tabular_dataset(path: &Path) -> Result<Dataset, LoadError> {
    let text = read(path)?;
    if text.trim().is_empty() {
        return Err(LoadError::Header { path: path.into(), reason: "missing header".into() });
    }
    let mut reader = csv_reader(&text);
    let headers = reader
        .headers()
        .map_err(|source| LoadError::Csv { path: path.into(), source })?
        .clone();
    let head: Vec<&str> = headers.iter().take(3).collect();
    if head != ["id", "attribute", "label"] {
        return Err(LoadError::Header {
            path: path.into(),
            reason: format!("header must start with id,attribute,label, got {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }
    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|source| LoadError::Csv { path: path.into(), source })?;
        let label = parse_bit(path, row, "label", &rec[2])?;
        let mut features = Vec::with_capacity(rec.len() - 3);
        for (c, cell) in rec.iter().enumerate().skip(3) {
            let value: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| LoadError::Cell {
                path: path.into(),
                row,
                column: headers[c].to_string(),
                reason: format!("expected a finite number, got {cell:?}"),
            })?;
            features.push(value);
        }
        records.push(Record::tabular(&rec[0], features, label, &rec[1]));
    }
    Dataset::new(records).map_err(|source| LoadError::Data { path: path.into(), source })
}

/// Audit rows plus the names and values of any extra (confounder) columns.
#[derive(Clone, Debug, PartialEq)]
pub struct AuditTable {
    pub records: Vec<AuditRecord>,
    pub confounder_names: Vec<String>,
    /// One entry per record, aligned with `confounder_names`.
    pub confounders: Vec<Vec<String>>,
}

/// CSV `y_true,y_pred,attribute[,extra…]`. Extra columns other than
/// [`RESERVED_AUDIT_COLUMNS`] are confounders.
pub fn load_audit_csv(path: &Path) -> Result<AuditTable, LoadError> {
    let text = read(path)?;
    let mut reader = csv_reader(&text);
    let headers = reader
        .headers()
        .map_err(|source| LoadError::Csv { path: path.into(), source })?
        .clone();
    let head: Vec<&str> = headers.iter().take(3).collect();
    if head != ["y_true", "y_pred", "attribute"] {
        return Err(LoadError::Header {
            path: path.into(),
            reason: "header must start with y_true,y_pred,attribute".into(),
        });
    }
    let extra: Vec<usize> = (3..headers.len())
        .filter(|&c| !RESERVED_AUDIT_COLUMNS.contains(&&headers[c]))
        .collect();
    let mut table = AuditTable {
        records: Vec::new(),
        confounder_names: extra.iter().map(|&c| headers[c].to_string()).collect(),
        confounders: Vec::new(),
    };
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|source| LoadError::Csv { path: path.into(), source })?;
        let y_true = parse_bit(path, row, "y_true", &rec[0])?;
        let y_pred = parse_bit(path, row, "y_pred", &rec[1])?;
        table.records.push(AuditRecord::new(y_true, y_pred, &rec[2]));
        table.confounders.push(extra.iter().map(|&c| rec[c].to_string()).collect());
    }
    Ok(table)
}

/// CSV `x,y,z[,z2…]`; the header names the variables.
pub fn load_joint_csv(path: &Path) -> Result<(Vec<String>, Vec<Observation>), LoadError> {
    let text = read(path)?;
    let mut reader = csv_reader(&text);
    let headers = reader
        .headers()
        .map_err(|source| LoadError::Csv { path: path.into(), source })?
        .clone();
    if headers.len() < 3 {
        return Err(LoadError::Header {
            path: path.into(),
            reason: "need at least three columns: treatment, outcome, confounder".into(),
        });
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|source| LoadError::Csv { path: path.into(), source })?;
        out.push(Observation::new(&rec[0], &rec[1], rec.iter().skip(2)));
    }
    Ok((headers.iter().map(String::from).collect(), out))
}

/// Lines `term_a,term_b`; `#` starts a comment.
pub fn load_lexicon(path: &Path) -> Result<SwapLexicon, LoadError> {
    let text = read(path)?;
    let mut lexicon = SwapLexicon::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (a, b) = line.split_once(',').ok_or_else(|| LoadError::Row {
            path: path.into(),
            row: i + 1,
            reason: "expected term_a,term_b".into(),
        })?;
        lexicon
            .insert(a.trim(), b.trim())
            .map_err(|source| LoadError::Lexicon { path: path.into(), source })?;
    }
    Ok(lexicon)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn text_rows() {
        let g = kgat_core::demo::graph();
        assert!(load_text_dataset(file("").path(), &g, None).unwrap().is_empty());
        let f = file("{\"id\":\"a\",\"text\":\"She is a Nurse\",\"label\":1,\"attribute\":\"female\"}\n");
        let d = load_text_dataset(f.path(), &g, None).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.records()[0].mentions.len(), 2);
        let f = file("{\"id\":\"a\",\"text\":\"x\",\"attribute\":\"f\"}\n");
        let err = load_text_dataset(f.path(), &g, None).unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("label"), "{err}");
        let allowed: BTreeSet<String> = ["m".to_string()].into();
        let f = file("{\"id\":1,\"text\":\"x\",\"label\":0,\"attribute\":\"f\"}\n");
        let err = load_text_dataset(f.path(), &g, Some(&allowed)).unwrap_err().to_string();
        assert!(err.contains("unknown attribute"), "{err}");
    }

    #[test]
    fn tabular_rows() {
        assert!(load_tabular_dataset(file("id,attribute,label,a\n").path()).unwrap().is_empty());
        let d = load_tabular_dataset(file("id,attribute,label,a,b,c\nr1,g,1,1,2,3\nr2,h,0,0.5,-1,2e3\n").path()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.records()[1].payload, Payload::Features(vec![0.5, -1.0, 2000.0]));
        let err = load_tabular_dataset(file("id,attribute,label,a,b\nr1,g,1,1,x\n").path()).unwrap_err().to_string();
        assert!(err.contains("row 1") && err.contains("\"b\""), "{err}");
        assert!(matches!(load_tabular_dataset(file("").path()), Err(LoadError::Header { .. })));
    }

    #[test]
    fn audit_and_joint() {
        let t = load_audit_csv(file("y_true,y_pred,attribute,id,region\n1,0,a,r1,n\n0,1,b,r2,s\n").path()).unwrap();
        assert_eq!(t.confounder_names, ["region"]);
        assert_eq!(t.confounders[1], ["s"]);
        assert!(load_audit_csv(file("y_true,y_pred,attribute\n2,0,a\n").path()).is_err());
        let (names, obs) = load_joint_csv(file("x,y,z,z2\n0,1,a,b\n").path()).unwrap();
        assert_eq!(names, ["x", "y", "z", "z2"]);
        assert_eq!(obs[0], Observation::new("0", "1", ["a", "b"]));
    }

    #[test]
    fn lexicon_lines() {
        let lex = load_lexicon(file("# pairs\nhe,she\nsir john , lady jane # titled\n\n").path()).unwrap();
        assert_eq!(lex.len(), 2);
        assert!(load_lexicon(file("he,he\n").path()).is_err());
        assert!(load_lexicon(file("he\n").path()).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let g = kgat_core::demo::graph();
        let d = kgat_core::data::generate_biased(&kgat_core::data::SynthConfig { n: 30, ..Default::default() }).unwrap();
        let f = file(&text_dataset_jsonl(&d));
        let mut back = load_text_dataset(f.path(), &g, None).unwrap();
        for r in back.clone().into_records().iter() {
            assert!(!r.mentions.is_empty());
        }
        let stripped: Vec<Record> = back.clone().into_records().into_iter().map(|mut r| { r.mentions.clear(); r }).collect();
        back = Dataset::new(stripped).unwrap();
        assert_eq!(back, d);
    }
}
