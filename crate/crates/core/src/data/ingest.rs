use super::Dataset;
use crate::{Error, Result};
use std::io::Read;
use std::path::Path;

/// Read a headered, comma-delimited CSV file into a [`Dataset`].
///
/// Every column except `label_column` becomes a feature, in header order.
/// The label column must hold exactly two distinct values; numeric labels map
/// the smaller value to 0, otherwise the lexicographically smaller string is 0.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    read_csv(file, id, label_column)
}

pub fn read_csv(reader: impl Read, id: impl Into<String>, label_column: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::Empty("CSV has no header row".into()));
    }
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingColumn(label_column.to_string()))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_idx)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for (col, cell) in record.iter().enumerate() {
            if col == label_idx {
                raw_labels.push(cell.to_string());
                continue;
            }
            features.push(parse_cell(cell, row, &headers[col])?);
        }
    }
    if raw_labels.is_empty() {
        return Err(Error::Empty("CSV has no data rows".into()));
    }
    let labels = encode_labels(&raw_labels)?;
    Dataset::new(id, feature_names, features, labels)
}

fn parse_cell(cell: &str, row: usize, column: &str) -> Result<f64> {
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::NonNumeric {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        }),
    }
}

fn encode_labels(raw: &[String]) -> Result<Vec<u8>> {
    let numeric: Option<Vec<f64>> = raw.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(values) = numeric {
        let mut distinct = values.clone();
        distinct.sort_by(|a, b| a.total_cmp(b));
        distinct.dedup();
        check_distinct(distinct.len())?;
        let high = distinct[1];
        return Ok(values.iter().map(|&v| u8::from(v == high)).collect());
    }
    let mut distinct: Vec<&str> = raw.iter().map(String::as_str).collect();
    distinct.sort_unstable();
    distinct.dedup();
    check_distinct(distinct.len())?;
    let high = distinct[1];
    Ok(raw.iter().map(|s| u8::from(s == high)).collect())
}

fn check_distinct(count: usize) -> Result<()> {
    match count {
        0 | 1 => Err(Error::DegenerateLabels(format!(
            "label column has {count} distinct value(s), need 2"
        ))),
        2 => Ok(()),
        _ => Err(Error::invalid(format!(
            "label column has {count} distinct values; only binary labels are supported"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<Dataset> {
        read_csv(text.as_bytes(), "t", "y")
    }

    #[test]
    fn reads_three_rows() {
        let ds = read("a,b,y\n1,2,0\n3,4,1\n5,6,0\n").unwrap();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.labels(), &[0, 1, 0]);
        assert_eq!(ds.feature_names(), &["a", "b"]);
        assert_eq!(ds.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn label_column_in_the_middle() {
        let ds = read("a,y,b\n1,0,2\n3,1,4\n").unwrap();
        assert_eq!(ds.feature_names(), &["a", "b"]);
        assert_eq!(ds.row(0), &[1.0, 2.0]);
    }

    #[test]
    fn fourteen_columns_give_thirteen_features() {
        let header: Vec<String> = (0..13).map(|i| format!("f{i}")).chain(["y".into()]).collect();
        let mut text = header.join(",") + "\n";
        for r in 0..4 {
            let row: Vec<String> = (0..13).map(|i| (i * r).to_string()).chain([(r % 2).to_string()]).collect();
            text += &(row.join(",") + "\n");
        }
        assert_eq!(read(&text).unwrap().n_features(), 13);
    }

    #[test]
    fn nan_cell_is_rejected() {
        let err = read("a,y\nNaN,0\n1,1\n").unwrap_err();
        assert!(matches!(err, Error::NonNumeric { row: 0, .. }), "{err}");
    }

    #[test]
    fn text_cell_is_rejected() {
        assert!(matches!(
            read("a,y\nfoo,0\n1,1\n").unwrap_err(),
            Error::NonNumeric { .. }
        ));
    }

    #[test]
    fn missing_label_column() {
        assert!(matches!(read("a,b\n1,0\n").unwrap_err(), Error::MissingColumn(_)));
    }

    #[test]
    fn single_class_is_degenerate() {
        assert!(matches!(
            read("a,y\n1,1\n2,1\n").unwrap_err(),
            Error::DegenerateLabels(_)
        ));
    }

    #[test]
    fn empty_file() {
        assert!(read("").is_err());
        assert!(matches!(read("a,y\n").unwrap_err(), Error::Empty(_)));
    }

    #[test]
    fn labels_are_coerced() {
        assert_eq!(read("a,y\n1,-1\n2,1\n3,-1\n").unwrap().labels(), &[0, 1, 0]);
        assert_eq!(read("a,y\n1,yes\n2,no\n").unwrap().labels(), &[1, 0]);
    }
}
