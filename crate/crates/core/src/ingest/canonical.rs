//! The canonical CVR file: a JSON array of
//! `{"id": ..., "contests": {contest: {candidate: mark}}}`.

use serde_json::Value;

use super::{check_unique, ParseReport};
use crate::error::{Error, Result};
use crate::model::CardRecord;

pub fn parse_canonical_bytes(bytes: &[u8], origin: &str) -> Result<(Vec<CardRecord>, ParseReport)> {
    let values: Vec<Value> = serde_json::from_slice(bytes)
        .map_err(|e| Error::parse(origin, format!("expected an array of records: {e}")))?;
    let mut report = ParseReport::default();
    let mut cards = Vec::with_capacity(values.len());
    for (i, value) in values.into_iter().enumerate() {
        match serde_json::from_value::<CardRecord>(value) {
            Ok(card) if card.card_id.is_empty() => {
                report.reject(format!("{origin}[{i}]"), "empty card id");
            }
            Ok(card) => {
                report.accept(&card);
                cards.push(card);
            }
            Err(e) => report.reject(format!("{origin}[{i}]"), e.to_string()),
        }
    }
    check_unique(&cards, &mut report)?;
    Ok((cards, report))
}

/// Canonical serialization: one record per line inside a JSON array, keys in
/// sorted order.
pub fn write_canonical(cards: &[CardRecord]) -> String {
    let mut out = String::from("[\n");
    for (i, card) in cards.iter().enumerate() {
        out.push_str("  ");
        out.push_str(&serde_json::to_string(card).expect("records serialize"));
        if i + 1 < cards.len() {
            out.push(',');
        }
        out.push('\n');
    }
    out.push_str("]\n");
    out
}
