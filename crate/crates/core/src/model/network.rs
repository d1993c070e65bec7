use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{Micros, NetworkId, NodeId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    Tdma { major_frame: Micros, tick: Micros },
    BestEffort,
}

/// One-way delay between members. `None` marks an unreachable pair.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DelayMatrix(pub BTreeMap<NodeId, BTreeMap<NodeId, Option<Micros>>>);

#[derive(Debug, thiserror::Error)]
pub enum DelayCsvError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: expected {expected} cells, found {found}")]
    Shape { row: usize, expected: usize, found: usize },
    #[error("row {row}, column {col}: bad delay {cell:?}")]
    Cell { row: usize, col: usize, cell: String },
}

impl DelayMatrix {
    /// Delay from `a` to `b`. A node reaches itself in zero time; pairs that
    /// are absent from the matrix are unreachable.
    pub fn get(&self, a: &str, b: &str) -> Option<Micros> {
        if a == b {
            return Some(0);
        }
        self.0.get(a).and_then(|row| row.get(b)).copied().flatten()
    }

    pub fn set(&mut self, a: &str, b: &str, delay: Option<Micros>) {
        self.0.entry(a.to_string()).or_default().insert(b.to_string(), delay);
    }

    /// Parses a square CSV: a header row of node ids, then one row per
    /// source node in header order. Cells are microseconds, empty means
    /// unreachable.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, DelayCsvError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let ids: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let mut m = DelayMatrix::default();
        let mut rows = 0;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != ids.len() || row >= ids.len() {
                return Err(DelayCsvError::Shape { row, expected: ids.len(), found: rec.len() });
            }
            for (col, cell) in rec.iter().enumerate() {
                let v = if cell.is_empty() {
                    None
                } else {
                    Some(cell.parse::<Micros>().map_err(|_| DelayCsvError::Cell {
                        row,
                        col,
                        cell: cell.to_string(),
                    })?)
                };
                m.set(&ids[row], &ids[col], v);
            }
            rows += 1;
        }
        if rows != ids.len() {
            return Err(DelayCsvError::Shape { row: rows, expected: ids.len(), found: rows });
        }
        Ok(m)
    }
}

/// Configured best-effort capacity between two members, in kbit/s.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkCapacity {
    pub from: NodeId,
    pub to: NodeId,
    pub kbps: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    pub id: NetworkId,
    pub kind: NetworkKind,
    pub members: BTreeSet<NodeId>,
    #[serde(default)]
    pub delay: DelayMatrix,
    /// Pairs without an entry are not capacity-constrained.
    #[serde(default)]
    pub capacity: Vec<LinkCapacity>,
}

impl Network {
    pub fn capacity_between(&self, from: &str, to: &str) -> Option<u64> {
        self.capacity.iter().find(|c| c.from == from && c.to == to).map(|c| c.kbps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_delay_matrix() {
        let csv = "a,b,c\n0,100,\n100,0,50\n,50,0\n";
        let m = DelayMatrix::from_csv(csv.as_bytes()).unwrap();
        assert_eq!(m.get("a", "b"), Some(100));
        assert_eq!(m.get("a", "c"), None);
        assert_eq!(m.get("c", "b"), Some(50));
        assert_eq!(m.get("c", "c"), Some(0));
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        assert!(DelayMatrix::from_csv("a,b\n0,1\n1\n".as_bytes()).is_err());
        assert!(DelayMatrix::from_csv("a,b\n0,x\n1,0\n".as_bytes()).is_err());
        assert!(DelayMatrix::from_csv("a,b\n0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn unreachable_is_null_in_json() {
        let mut m = DelayMatrix::default();
        m.set("a", "b", None);
        m.set("a", "a", Some(0));
        assert_eq!(serde_json::to_string(&m).unwrap(), r#"{"a":{"a":0,"b":null}}"#);
    }
}
