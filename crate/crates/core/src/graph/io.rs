//! JSON-lines graph files: one object per line,
//! `{"num_nodes", "edges", "node_feat", "edge_feat", "y"}`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Graph, Label};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    num_nodes: usize,
    edges: Vec<[usize; 2]>,
    node_feat: Vec<Vec<f64>>,
    edge_feat: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<Value>,
}

fn label_to_json(label: &Label) -> Value {
    match label {
        Label::Class(c) => Value::from(*c),
        Label::NodeClasses(cs) => Value::from(cs.clone()),
        Label::Values(vs) => Value::Array(
            vs.iter()
                .map(|&v| serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number))
                .collect(),
        ),
    }
}

fn label_from_json(v: &Value) -> std::result::Result<Option<Label>, String> {
    match v {
        Value::Null => Ok(None),
        Value::Number(n) => n
            .as_u64()
            .map(|c| Some(Label::Class(c as usize)))
            .ok_or_else(|| format!("class label must be a nonnegative integer, got {n}")),
        Value::Array(items) => {
            let all_ints = items.iter().all(|x| x.as_u64().is_some());
            if all_ints && !items.is_empty() {
                Ok(Some(Label::NodeClasses(
                    items.iter().map(|x| x.as_u64().unwrap() as usize).collect(),
                )))
            } else {
                items
                    .iter()
                    .map(|x| {
                        x.as_f64()
                            .ok_or_else(|| format!("non-numeric label entry {x}"))
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map(|vs| Some(Label::Values(vs)))
            }
        }
        other => Err(format!("unsupported label {other}")),
    }
}

fn to_record(g: &Graph) -> Record {
    Record {
        num_nodes: g.num_nodes,
        edges: g.edges.iter().map(|&(s, d)| [s, d]).collect(),
        node_feat: g.node_feat.clone(),
        edge_feat: g.edge_feat.clone(),
        y: g.label.as_ref().map(label_to_json),
    }
}

/// Serializes graphs to JSON lines (LF-terminated).
pub fn to_jsonl(graphs: &[Graph]) -> Result<String> {
    let mut out = String::new();
    for g in graphs {
        out.push_str(&serde_json::to_string(&to_record(g))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_graphs(graphs: &[Graph], path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(to_jsonl(graphs)?.as_bytes())?;
    Ok(())
}

/// Parses JSON-lines text. Blank lines are skipped; errors carry the 1-based
/// line number.
pub fn parse_graphs(text: &str) -> Result<Vec<Graph>> {
    let mut graphs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            detail: e.to_string(),
        })?;
        let label = match &rec.y {
            Some(v) => label_from_json(v).map_err(|detail| Error::Parse {
                line: line_no,
                detail: format!("field `y`: {detail}"),
            })?,
            None => None,
        };
        let g = Graph::new(
            rec.num_nodes,
            rec.edges.iter().map(|e| (e[0], e[1])).collect(),
            rec.node_feat,
            rec.edge_feat,
            label,
        )
        .map_err(|e| Error::Parse {
            line: line_no,
            detail: e.to_string(),
        })?;
        graphs.push(g);
    }
    Ok(graphs)
}

pub fn read_graphs(path: impl AsRef<Path>) -> Result<Vec<Graph>> {
    parse_graphs(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_empty_list() {
        assert!(parse_graphs("").unwrap().is_empty());
    }

    #[test]
    fn edge_index_equal_to_num_nodes_is_rejected() {
        let line = r#"{"num_nodes":2,"edges":[[0,2]],"node_feat":[[0.0],[1.0]],"edge_feat":[[1.0]],"y":1}"#;
        let err = parse_graphs(line).unwrap_err().to_string();
        assert!(err.contains("line 1") && err.contains("edges"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let good = r#"{"num_nodes":1,"edges":[],"node_feat":[[0.0]],"edge_feat":[]}"#;
        let text = format!("{good}\n{{not json\n");
        let err = parse_graphs(&text).unwrap_err().to_string();
        assert!(err.starts_with("line 2"), "{err}");
    }

    #[test]
    fn label_kinds_round_trip() {
        let base = Graph::undirected(3, &[(0, 1), (1, 2)]).unwrap();
        for label in [
            Label::Class(4),
            Label::NodeClasses(vec![0, 2, 1]),
            Label::Values(vec![0.25, -1.0, 3.0]),
        ] {
            let g = Graph {
                label: Some(label),
                ..base.clone()
            };
            let back = parse_graphs(&to_jsonl(std::slice::from_ref(&g)).unwrap()).unwrap();
            assert_eq!(back, vec![g]);
        }
    }
}
