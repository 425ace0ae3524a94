// SPDX-License-Identifier: Apache-2.0

//! Projection and closed integer range filtering over tab-separated objects,
//! with scan-priced accounting: every query is billed for the whole object.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{ObjectRef, ObjectStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Between {
    pub column: usize,
    pub lo: i64,
    pub hi: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanQuery {
    pub projection: Vec<usize>,
    pub predicate: Option<Between>,
}

impl ScanQuery {
    pub fn project(columns: impl Into<Vec<usize>>) -> Self {
        Self {
            projection: columns.into(),
            predicate: None,
        }
    }

    pub fn between(mut self, column: usize, lo: i64, hi: i64) -> Self {
        self.predicate = Some(Between { column, lo, hi });
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanReport {
    pub rows_returned: u64,
    pub bytes_scanned: u64,
}

impl ScanReport {
    pub fn accumulate(&mut self, other: &ScanReport) {
        self.rows_returned += other.rows_returned;
        self.bytes_scanned += other.bytes_scanned;
    }
}

pub type Row = Vec<String>;

/// Anything that can answer a scan query against a stored object.
pub trait SelectEngine {
    fn select(&self, obj: &ObjectRef, query: &ScanQuery) -> Result<(Vec<Row>, ScanReport)>;
}

impl SelectEngine for ObjectStore {
    fn select(&self, obj: &ObjectRef, query: &ScanQuery) -> Result<(Vec<Row>, ScanReport)> {
        select(self, obj, query)
    }
}

pub fn select(store: &ObjectStore, obj: &ObjectRef, query: &ScanQuery) -> Result<(Vec<Row>, ScanReport)> {
    let data = store.get(obj)?;
    select_bytes(&data, query)
}

/// Runs `query` over an already fetched object body.
pub fn select_bytes(data: &[u8], query: &ScanQuery) -> Result<(Vec<Row>, ScanReport)> {
    if query.projection.is_empty() {
        return Err(Error::param("projection must name at least one column"));
    }
    let text = std::str::from_utf8(data).map_err(|e| Error::RowFormat {
        line: line_of_offset(data, e.valid_up_to()),
        message: "object is not valid UTF-8".into(),
    })?;

    let mut rows = Vec::new();
    for (idx, line) in split_rows(text).enumerate() {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if let Some(pred) = &query.predicate {
            let raw = fields.get(pred.column).ok_or_else(|| Error::RowFormat {
                line: line_no,
                message: format!("predicate column {} missing ({} fields)", pred.column, fields.len()),
            })?;
            let v: i64 = raw.parse().map_err(|_| Error::RowFormat {
                line: line_no,
                message: format!("column {} value {raw:?} is not an integer", pred.column),
            })?;
            if v < pred.lo || v > pred.hi {
                continue;
            }
        }
        let mut out = Vec::with_capacity(query.projection.len());
        for &col in &query.projection {
            let f = fields.get(col).ok_or_else(|| Error::RowFormat {
                line: line_no,
                message: format!("projected column {col} missing ({} fields)", fields.len()),
            })?;
            out.push((*f).to_string());
        }
        rows.push(out);
    }

    let report = ScanReport {
        rows_returned: rows.len() as u64,
        bytes_scanned: data.len() as u64,
    };
    Ok((rows, report))
}

/// LF-separated rows; a final newline does not start an empty row, and an
/// unterminated trailing line is still a row.
pub(crate) fn split_rows(text: &str) -> impl Iterator<Item = &str> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    let empty = text.is_empty();
    body.split('\n').filter(move |_| !empty)
}

fn line_of_offset(data: &[u8], offset: usize) -> usize {
    data[..offset].iter().filter(|&&b| b == b'\n').count() + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ROWS: &str = "chr1\t5\tA\nchr1\t9\tC\nchr1\t12\tG\n";

    #[test]
    fn range_filter_with_projection() {
        let q = ScanQuery::project([1]).between(1, 5, 9);
        let (rows, rep) = select_bytes(ROWS.as_bytes(), &q).unwrap();
        assert_eq!(rows, vec![vec!["5"], vec!["9"]]);
        assert_eq!(rep.rows_returned, 2);
        assert_eq!(rep.bytes_scanned, ROWS.len() as u64);
    }

    #[test]
    fn empty_object() {
        let (rows, rep) = select_bytes(b"", &ScanQuery::project([0]).between(1, 0, 9)).unwrap();
        assert!(rows.is_empty());
        assert_eq!(rep, ScanReport::default());
    }

    #[test]
    fn identity_filter() {
        let (rows, _) = select_bytes(ROWS.as_bytes(), &ScanQuery::project([0, 1])).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2], vec!["chr1", "12"]);
    }

    #[test]
    fn unterminated_last_line_is_a_row() {
        let (rows, _) = select_bytes(b"a\t1\nb\t2", &ScanQuery::project([0])).unwrap();
        assert_eq!(rows, vec![vec!["a"], vec!["b"]]);
    }

    #[test]
    fn bad_predicate_value_names_line() {
        let err = select_bytes(b"a\t1\nb\tx\n", &ScanQuery::project([0]).between(1, 0, 5)).unwrap_err();
        assert!(matches!(err, Error::RowFormat { line: 2, .. }), "{err}");
    }

    #[test]
    fn missing_projected_column() {
        let err = select_bytes(b"a\t1\nb\n", &ScanQuery::project([1])).unwrap_err();
        assert!(matches!(err, Error::RowFormat { line: 2, .. }));
    }

    #[test]
    fn empty_projection_rejected() {
        assert!(select_bytes(ROWS.as_bytes(), &ScanQuery::project(vec![])).is_err());
    }

    #[test]
    fn through_the_store() {
        let dir = tempfile::tempdir().unwrap();
        let store = ObjectStore::open(dir.path()).unwrap();
        let r = store.put("b", "t.tsv", ROWS.as_bytes()).unwrap();
        let (rows, rep) = select(&store, &r, &ScanQuery::project([2]).between(1, 9, 100)).unwrap();
        assert_eq!(rows, vec![vec!["C"], vec!["G"]]);
        assert_eq!(rep.bytes_scanned, r.size);
        let missing = ObjectRef {
            key: "nope".into(),
            ..r
        };
        assert!(matches!(
            select(&store, &missing, &ScanQuery::project([0])),
            Err(Error::NotFound { .. })
        ));
    }

    proptest! {
        #[test]
        fn matches_naive_filter(rows in proptest::collection::vec((0i64..50, "[a-z]{0,4}"), 0..60),
                                lo in 0i64..50, width in 0i64..30, cols in proptest::collection::vec(0usize..3, 1..4)) {
            let text: String = rows.iter().enumerate()
                .map(|(i, (v, s))| format!("{i}\t{v}\t{s}\n")).collect();
            let q = ScanQuery::project(cols.clone()).between(1, lo, lo + width);
            let (got, rep) = select_bytes(text.as_bytes(), &q).unwrap();
            let want: Vec<Row> = rows.iter().enumerate()
                .filter(|(_, (v, _))| *v >= lo && *v <= lo + width)
                .map(|(i, (v, s))| {
                    let all = [i.to_string(), v.to_string(), s.clone()];
                    cols.iter().map(|&c| all[c].clone()).collect()
                })
                .collect();
            prop_assert_eq!(got, want);
            prop_assert_eq!(rep.bytes_scanned, text.len() as u64);
        }
    }
}
