//! CSV ingestion of locations and responses.
//!
//! Accepted layout: optional `#` comment lines, a header `x1,...,xd` or
//! `x1,...,xd,y`, then one numeric row per site.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gpcore::{DataKind, Dataset};
use crate::kernel::PointSet;

/// Float formatting used by every CSV writer: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A parsed location table.
#[derive(Debug, Clone)]
pub struct Table {
    pub locations: PointSet,
    /// The `y` column, when present.
    pub values: Option<Vec<f64>>,
    pub has_response: bool,
    /// 1-based line number of the header row.
    pub header_line: usize,
    /// Number of rows whose location repeats an earlier row.
    pub duplicate_locations: usize,
}

impl Table {
    pub fn into_dataset(self, kind: DataKind) -> Option<Dataset> {
        let values = self.values?;
        Dataset::new(self.locations, values, kind).ok()
    }
}

pub(crate) fn parse_table(path: &Path, text: &str) -> Result<Table> {
    let ingest = |line: usize, message: String| Error::Ingest {
        path: path.to_path_buf(),
        line,
        message,
    };
    // The reader's own line counter skips comment lines, and a record's byte
    // offset can point at a comment before it; map offsets to the first
    // non-comment line at or after them.
    let starts: Vec<usize> = std::iter::once(0)
        .chain(text.match_indices('\n').map(|(i, _)| i + 1))
        .collect();
    let line_at = |byte: u64| {
        let mut line = starts.partition_point(|&s| s <= byte as usize);
        while let Some(&s) = starts.get(line - 1) {
            let rest = text[s..].lines().next().unwrap_or("").trim_start();
            if !(rest.starts_with('#') || rest.is_empty()) || line == starts.len() {
                break;
            }
            line += 1;
        }
        line
    };
    let csv_line = |e: &csv::Error| e.position().map_or(0, |p| line_at(p.byte()));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        Some(r) => r.map_err(|e| ingest(csv_line(&e), e.to_string()))?,
        None => return Err(ingest(1, "file has no header row".into())),
    };
    let header_line = header.position().map_or(1, |p| line_at(p.byte()));
    let names: Vec<&str> = header.iter().collect();
    let has_response = names.last() == Some(&"y");
    let dim = names.len() - usize::from(has_response);
    if dim == 0 {
        return Err(ingest(
            header_line,
            "header needs at least one x column".into(),
        ));
    }
    for (i, name) in names[..dim].iter().enumerate() {
        if *name != format!("x{}", i + 1) {
            return Err(ingest(
                header_line,
                format!("expected column x{} in the header, found {name:?}", i + 1),
            ));
        }
    }

    let mut coords = Vec::new();
    let mut values = Vec::new();
    let mut seen = HashSet::new();
    let mut duplicate_locations = 0;
    for rec in records {
        let rec = rec.map_err(|e| ingest(csv_line(&e), e.to_string()))?;
        let line = rec.position().map_or(0, |p| line_at(p.byte()));
        if rec.len() != names.len() {
            return Err(ingest(
                line,
                format!("expected {} fields, found {}", names.len(), rec.len()),
            ));
        }
        let mut row = Vec::with_capacity(names.len());
        for (field, name) in rec.iter().zip(&names) {
            if field.is_empty() {
                return Err(ingest(line, format!("missing value for {name}")));
            }
            let v: f64 = field
                .parse()
                .map_err(|_| ingest(line, format!("{name} = {field:?} is not a number")))?;
            if !v.is_finite() {
                return Err(ingest(line, format!("{name} = {field} is not finite")));
            }
            row.push(v);
        }
        let key: Vec<u64> = row[..dim].iter().map(|v| v.to_bits()).collect();
        if !seen.insert(key) {
            duplicate_locations += 1;
        }
        coords.extend_from_slice(&row[..dim]);
        if has_response {
            values.push(row[dim]);
        }
    }
    Ok(Table {
        locations: PointSet::new(dim, coords)?,
        values: has_response.then_some(values),
        has_response,
        header_line,
        duplicate_locations,
    })
}

/// Read a location table from disk.
pub fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(path, &text)
}

/// Read a CSV with a `y` column as an observed data set.
pub fn ingest_csv(path: &Path) -> Result<Dataset> {
    let table = read_table(path)?;
    let line = table.header_line;
    table
        .into_dataset(DataKind::Observed)
        .ok_or_else(|| Error::Ingest {
            path: path.to_path_buf(),
            line,
            message: "no y column; this input needs responses".into(),
        })
}

/// Write locations (and values, when given) in the ingestible layout.
pub fn write_table(path: &Path, locations: &PointSet, values: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=locations.dim()).map(|i| format!("x{i}")).collect();
    if values.is_some() {
        header.push("y".into());
    }
    w.write_record(&header)?;
    for (i, p) in locations.iter().enumerate() {
        let mut row: Vec<String> = p.iter().map(|v| fmt_f64(*v)).collect();
        if let Some(v) = values {
            row.push(fmt_f64(v[i]));
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Table> {
        parse_table(Path::new("mem.csv"), text)
    }

    #[test]
    fn three_row_dataset() {
        let t = parse("x1,x2,y\n0,0,1\n1,1,2\n0.5,0.5,3\n").unwrap();
        assert_eq!(t.locations.len(), 3);
        assert_eq!(t.locations.dim(), 2);
        assert_eq!(t.values.as_deref(), Some(&[1.0, 2.0, 3.0][..]));
    }

    #[test]
    fn locations_only() {
        let t = parse("x1,x2\n0,0\n1,1\n").unwrap();
        assert!(!t.has_response);
        assert!(t.values.is_none());
    }

    #[test]
    fn nan_response_names_its_line() {
        let err = parse("x1,x2,y\n0,0,NaN\n").unwrap_err();
        match err {
            Error::Ingest { line, .. } => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ragged_and_missing_rows() {
        match parse("x1,x2,y\n0,0,1\n1,1\n").unwrap_err() {
            Error::Ingest { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("expected 3 fields"));
            }
            other => panic!("{other:?}"),
        }
        match parse("x1,y\n0,\n").unwrap_err() {
            Error::Ingest { line, .. } => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn comments_and_duplicates() {
        let t = parse("# strategy=sp k=2 seed=1\nx1,x2\n0,0\n0,0\n").unwrap();
        assert_eq!(t.header_line, 2);
        assert_eq!(t.duplicate_locations, 1);
    }

    #[test]
    fn bad_header() {
        assert!(parse("a,b\n1,2\n").is_err());
        assert!(parse("y\n1\n").is_err());
    }
}
