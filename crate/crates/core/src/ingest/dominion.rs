//! Dominion Democracy Suite CVR export (JSON).
//!
//! Supported subset:
//!
//! ```json
//! {"Sessions": [{
//!   "TabulatorId": 5, "BatchId": 3, "RecordId": 17,
//!   "Original": {"Cards": [{"Contests": [
//!     {"Id": 2, "Marks": [{"CandidateId": 7, "Rank": 1, "IsVote": true}]}
//!   ]}]},
//!   "Modified": { ... }
//! }]}
//! ```
//!
//! `Modified` (adjudicated) replaces `Original` when present. The card id is
//! `{TabulatorId}-{BatchId}-{RecordId}`. Ids may be numbers or strings. Marks
//! with `IsVote: false` leave the contest on the card without a selection.
//! Sessions holding more than one card are rejected.

use std::collections::BTreeMap;

use serde::Deserialize;
use serde_json::Value;

use super::{check_unique, ParseReport};
use crate::error::{Error, Result};
use crate::model::{CardRecord, Mark};

#[derive(Deserialize)]
struct Export {
    #[serde(rename = "Sessions")]
    sessions: Vec<Value>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Ident {
    Num(u64),
    Text(String),
}

impl Ident {
    fn text(self) -> String {
        match self {
            Ident::Num(n) => n.to_string(),
            Ident::Text(s) => s,
        }
    }
}

#[derive(Deserialize)]
struct Session {
    #[serde(rename = "TabulatorId")]
    tabulator: Ident,
    #[serde(rename = "BatchId")]
    batch: Ident,
    #[serde(rename = "RecordId")]
    record: Ident,
    #[serde(rename = "Original")]
    original: Option<Ballot>,
    #[serde(rename = "Modified")]
    modified: Option<Ballot>,
}

#[derive(Deserialize)]
struct Ballot {
    #[serde(rename = "Cards", default)]
    cards: Vec<Card>,
}

#[derive(Deserialize)]
struct Card {
    #[serde(rename = "Contests", default)]
    contests: Vec<ContestMarks>,
}

#[derive(Deserialize)]
struct ContestMarks {
    #[serde(rename = "Id")]
    id: Ident,
    #[serde(rename = "Marks", default)]
    marks: Vec<MarkEntry>,
}

#[derive(Deserialize)]
struct MarkEntry {
    #[serde(rename = "CandidateId")]
    candidate: Ident,
    #[serde(rename = "Rank", default = "first_rank")]
    rank: u32,
    #[serde(rename = "IsVote", default = "yes")]
    is_vote: bool,
}

fn first_rank() -> u32 {
    1
}

fn yes() -> bool {
    true
}

pub fn parse_dominion_bytes(bytes: &[u8], origin: &str) -> Result<(Vec<CardRecord>, ParseReport)> {
    let export: Export = serde_json::from_slice(bytes)
        .map_err(|e| Error::parse(origin, format!("not a Dominion CVR export: {e}")))?;
    let mut report = ParseReport::default();
    let mut cards = Vec::with_capacity(export.sessions.len());
    for (i, raw) in export.sessions.into_iter().enumerate() {
        let location = format!("{origin}:Sessions[{i}]");
        match session_card(raw) {
            Ok(card) => {
                report.accept(&card);
                cards.push(card);
            }
            Err(reason) => report.reject(location, reason),
        }
    }
    check_unique(&cards, &mut report)?;
    Ok((cards, report))
}

fn session_card(raw: Value) -> std::result::Result<CardRecord, String> {
    let session: Session = serde_json::from_value(raw).map_err(|e| e.to_string())?;
    let card_id = format!(
        "{}-{}-{}",
        session.tabulator.text(),
        session.batch.text(),
        session.record.text()
    );
    let ballot = session
        .modified
        .or(session.original)
        .ok_or("session has neither Original nor Modified ballot")?;
    let mut ballot_cards = ballot.cards.into_iter();
    let card = ballot_cards.next().ok_or("session has no cards")?;
    if ballot_cards.next().is_some() {
        return Err("multi-card sessions are not supported".into());
    }
    let mut votes = BTreeMap::new();
    for contest in card.contests {
        let marks: &mut BTreeMap<String, Mark> = votes.entry(contest.id.text()).or_default();
        for m in contest.marks {
            let mark = if m.is_vote {
                Mark(m.rank.max(1))
            } else {
                Mark(0)
            };
            let slot = marks.entry(m.candidate.text()).or_default();
            if mark.is_marked() && (!slot.is_marked() || mark < *slot) {
                *slot = mark;
            }
        }
    }
    Ok(CardRecord {
        votes,
        ..CardRecord::new(card_id)
    })
}
