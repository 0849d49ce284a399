//! Readers for cast vote records, ballot manifests and manual vote records.
//!
//! Every reader has a `*_bytes` form that works on an in-memory buffer and
//! never panics; the path-based forms wrap them with file handling.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CardRecord;

pub mod canonical;
pub mod dominion;
pub mod hart;
pub mod manifest;
pub mod mvr;

pub use canonical::{parse_canonical_bytes, write_canonical};
pub use dominion::parse_dominion_bytes;
pub use hart::{parse_hart_bytes, parse_hart_reader};
pub use manifest::{parse_manifest, parse_manifest_bytes};
pub use mvr::{parse_mvrs, parse_mvrs_bytes, ManualRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvrFormat {
    Canonical,
    HartZipXml,
    DominionExport,
}

/// A record that could not be read, with where it was found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub location: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParseReport {
    pub records_read: u64,
    pub rejected: Vec<Rejection>,
    pub contests_seen: BTreeSet<String>,
    pub duplicate_ids: Vec<String>,
}

impl ParseReport {
    pub(crate) fn reject(&mut self, location: impl Into<String>, reason: impl Into<String>) {
        self.rejected.push(Rejection {
            location: location.into(),
            reason: reason.into(),
        });
    }

    pub(crate) fn accept(&mut self, card: &CardRecord) {
        self.records_read += 1;
        self.contests_seen.extend(card.votes.keys().cloned());
    }

    /// Fold another report into this one.
    pub fn absorb(&mut self, other: ParseReport) {
        self.records_read += other.records_read;
        self.rejected.extend(other.rejected);
        self.contests_seen.extend(other.contests_seen);
        self.duplicate_ids.extend(other.duplicate_ids);
    }
}

/// Fails on the first id seen twice, recording every duplicate in `report`.
pub(crate) fn check_unique(cards: &[CardRecord], report: &mut ParseReport) -> Result<()> {
    let mut seen = BTreeSet::new();
    for card in cards {
        if !seen.insert(card.card_id.as_str()) {
            report.duplicate_ids.push(card.card_id.clone());
        }
    }
    match report.duplicate_ids.first() {
        Some(id) => Err(Error::DuplicateCard(id.clone())),
        None => Ok(()),
    }
}

pub fn parse_cvr_bytes(
    format: CvrFormat,
    bytes: &[u8],
    origin: &str,
) -> Result<(Vec<CardRecord>, ParseReport)> {
    match format {
        CvrFormat::Canonical => parse_canonical_bytes(bytes, origin),
        CvrFormat::HartZipXml => parse_hart_bytes(bytes, origin),
        CvrFormat::DominionExport => parse_dominion_bytes(bytes, origin),
    }
}

pub fn parse_cvrs(format: CvrFormat, path: &Path) -> Result<(Vec<CardRecord>, ParseReport)> {
    let origin = path.display().to_string();
    match format {
        CvrFormat::HartZipXml => {
            let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
            parse_hart_reader(std::io::BufReader::new(file), &origin)
        }
        _ => {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            parse_cvr_bytes(format, &bytes, &origin)
        }
    }
}

/// Parse several exports and merge them. Card ids must be unique across all
/// of them.
pub fn parse_cvr_sources<'a>(
    sources: impl IntoIterator<Item = (CvrFormat, &'a Path)>,
) -> Result<(Vec<CardRecord>, ParseReport)> {
    let mut cards = Vec::new();
    let mut report = ParseReport::default();
    for (format, path) in sources {
        let (c, r) = parse_cvrs(format, path)?;
        cards.extend(c);
        report.absorb(r);
    }
    check_unique(&cards, &mut report)?;
    Ok((cards, report))
}

/// Rejects manual records whose id is not a known card.
pub fn check_known(mvrs: &[ManualRecord], cards: &[CardRecord]) -> Result<()> {
    let known: BTreeSet<&str> = cards.iter().map(|c| c.card_id.as_str()).collect();
    let unknown: Vec<String> = mvrs
        .iter()
        .filter(|m| !known.contains(m.card_id.as_str()))
        .map(|m| m.card_id.clone())
        .collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(Error::UnknownCards(unknown))
    }
}

/// Contests present on an MVR but absent from its CVR, keyed by card id.
pub fn extra_contests(
    mvrs: &[ManualRecord],
    cards: &[CardRecord],
) -> BTreeMap<String, Vec<String>> {
    let by_id: BTreeMap<&str, &CardRecord> =
        cards.iter().map(|c| (c.card_id.as_str(), c)).collect();
    let mut out = BTreeMap::new();
    for m in mvrs {
        let Some(cvr) = by_id.get(m.card_id.as_str()) else {
            continue;
        };
        let extra: Vec<String> = m
            .votes
            .keys()
            .filter(|k| !cvr.contains(k))
            .cloned()
            .collect();
        if !extra.is_empty() {
            out.insert(m.card_id.clone(), extra);
        }
    }
    out
}
