//! Manual vote records: the canonical record shape plus an optional
//! `"not_found": true` for cards that could not be retrieved.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CardRecord, Votes};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManualRecord {
    #[serde(rename = "id")]
    pub card_id: String,
    #[serde(rename = "contests", default)]
    pub votes: Votes,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub not_found: bool,
}

impl ManualRecord {
    pub fn not_found(card_id: impl Into<String>) -> Self {
        ManualRecord {
            card_id: card_id.into(),
            votes: Votes::new(),
            not_found: true,
        }
    }

    /// The record as a card, or `None` when the card was not found.
    pub fn as_card(&self) -> Option<CardRecord> {
        (!self.not_found).then(|| CardRecord {
            votes: self.votes.clone(),
            ..CardRecord::new(self.card_id.clone())
        })
    }
}

impl From<&CardRecord> for ManualRecord {
    fn from(card: &CardRecord) -> Self {
        ManualRecord {
            card_id: card.card_id.clone(),
            votes: card.votes.clone(),
            not_found: false,
        }
    }
}

pub fn parse_mvrs(path: &Path) -> Result<Vec<ManualRecord>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_mvrs_bytes(&bytes, &path.display().to_string())
}

/// Every record must parse and ids must be unique within the file.
pub fn parse_mvrs_bytes(bytes: &[u8], origin: &str) -> Result<Vec<ManualRecord>> {
    let records: Vec<ManualRecord> =
        serde_json::from_slice(bytes).map_err(|e| Error::parse(origin, e.to_string()))?;
    let mut seen = BTreeSet::new();
    for r in &records {
        if r.card_id.is_empty() {
            return Err(Error::parse(origin, "record with empty id"));
        }
        if !seen.insert(r.card_id.as_str()) {
            return Err(Error::DuplicateCard(r.card_id.clone()));
        }
    }
    Ok(records)
}
