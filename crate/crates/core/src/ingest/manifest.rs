//! Ballot manifest: comma-separated rows with header
//! `container,tabulator,batch,card_count,id_prefix`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{BallotManifest, ManifestEntry};

#[derive(Deserialize)]
struct Row {
    container: String,
    tabulator: String,
    batch: String,
    card_count: String,
    id_prefix: String,
}

pub fn parse_manifest(path: &Path) -> Result<BallotManifest> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_manifest_bytes(&bytes, &path.display().to_string())
}

pub fn parse_manifest_bytes(bytes: &[u8], origin: &str) -> Result<BallotManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut entries = Vec::new();
    let mut first_row: BTreeMap<(String, String, String), u64> = BTreeMap::new();
    let mut prefixes: BTreeMap<String, u64> = BTreeMap::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        // Header is line 1.
        let line = i as u64 + 2;
        let row = row.map_err(|e| Error::parse(origin, format!("row {line}: {e}")))?;
        let card_count: u64 = row.card_count.parse().map_err(|_| {
            Error::parse(
                origin,
                format!(
                    "row {line}: card_count {:?} is not a number",
                    row.card_count
                ),
            )
        })?;
        let key = (
            row.container.clone(),
            row.tabulator.clone(),
            row.batch.clone(),
        );
        if let Some(prev) = first_row.insert(key, line) {
            return Err(Error::parse(
                origin,
                format!(
                    "rows {prev} and {line}: duplicate batch ({}, {}, {})",
                    row.container, row.tabulator, row.batch
                ),
            ));
        }
        if let Some(prev) = prefixes.insert(row.id_prefix.clone(), line) {
            return Err(Error::parse(
                origin,
                format!(
                    "rows {prev} and {line}: duplicate id_prefix {}",
                    row.id_prefix
                ),
            ));
        }
        entries.push(ManifestEntry {
            container: row.container,
            tabulator: row.tabulator,
            batch: row.batch,
            card_count,
            id_prefix: row.id_prefix,
        });
    }
    if entries.is_empty() {
        return Err(Error::parse(origin, "no manifest rows"));
    }
    Ok(BallotManifest::new(entries))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "container,tabulator,batch,card_count,id_prefix\n";

    #[test]
    fn totals() {
        let src = format!("{HEADER}box1,t1,b1,50,t1-b1\nbox1,t1,b2,25,t1-b2\n");
        let m = parse_manifest_bytes(src.as_bytes(), "m.csv").unwrap();
        assert_eq!(m.total_cards, 75);
        assert_eq!(m.entries.len(), 2);
    }

    #[test]
    fn empty_file() {
        let err = parse_manifest_bytes(b"", "m.csv").unwrap_err();
        assert!(err.to_string().contains("no manifest rows"));
        let err = parse_manifest_bytes(HEADER.as_bytes(), "m.csv").unwrap_err();
        assert!(err.to_string().contains("no manifest rows"));
    }

    #[test]
    fn non_numeric_count_names_row() {
        let src = format!("{HEADER}box1,t1,b1,50,p1\nbox1,t1,b2,many,p2\n");
        let err = parse_manifest_bytes(src.as_bytes(), "m.csv").unwrap_err();
        assert!(err.to_string().contains("row 3"), "{err}");
    }

    #[test]
    fn duplicate_batch_names_both_rows() {
        let src = format!("{HEADER}box1,t1,b1,50,p1\nbox2,t1,b1,5,p2\nbox1,t1,b1,7,p3\n");
        let err = parse_manifest_bytes(src.as_bytes(), "m.csv").unwrap_err();
        assert!(err.to_string().contains("rows 2 and 4"), "{err}");
    }
}
