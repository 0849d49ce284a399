//! Hart Verity exports: a zip archive holding one XML document per card.
//!
//! Supported subset of the document:
//!
//! ```xml
//! <Cvr>
//!   <CvrGuid>..</CvrGuid>
//!   <BatchSequence>3</BatchSequence>
//!   <BatchNumber>12</BatchNumber>
//!   <Contests>
//!     <Contest>
//!       <Id>mayor</Id>
//!       <Options><Option><Id>alice</Id><Value>1</Value></Option></Options>
//!     </Contest>
//!   </Contests>
//! </Cvr>
//! ```
//!
//! Contests and options are keyed by `Id`, falling back to `Name`. A missing
//! `Value` counts as a selection. The card id is `{BatchNumber}-{BatchSequence}`,
//! or the `CvrGuid` when batch fields are absent. Namespaces are ignored.

use std::collections::BTreeMap;
use std::io::{Cursor, Read, Seek};

use quick_xml::events::Event;
use quick_xml::Reader;

use super::{check_unique, ParseReport};
use crate::error::{Error, Result};
use crate::model::{CardRecord, Mark};

/// Members larger than this are rejected unread.
const MAX_MEMBER_BYTES: u64 = 16 << 20;

pub fn parse_hart_bytes(bytes: &[u8], origin: &str) -> Result<(Vec<CardRecord>, ParseReport)> {
    parse_hart_reader(Cursor::new(bytes), origin)
}

/// Reads the archive one member at a time.
pub fn parse_hart_reader<R: Read + Seek>(
    reader: R,
    origin: &str,
) -> Result<(Vec<CardRecord>, ParseReport)> {
    let mut archive = zip::ZipArchive::new(reader)
        .map_err(|e| Error::parse(origin, format!("not a zip archive: {e}")))?;
    let mut report = ParseReport::default();
    let mut cards = Vec::new();
    let mut buf = Vec::new();
    for i in 0..archive.len() {
        let mut member = match archive.by_index(i) {
            Ok(m) => m,
            Err(e) => {
                report.reject(format!("{origin}#{i}"), e.to_string());
                continue;
            }
        };
        let name = member.name().to_string();
        if member.is_dir() || !name.to_ascii_lowercase().ends_with(".xml") {
            continue;
        }
        let location = format!("{origin}:{name}");
        buf.clear();
        let read = (&mut member)
            .take(MAX_MEMBER_BYTES + 1)
            .read_to_end(&mut buf);
        match read {
            Err(e) => report.reject(location, e.to_string()),
            Ok(_) if buf.len() as u64 > MAX_MEMBER_BYTES => {
                report.reject(location, "member too large")
            }
            Ok(_) => match parse_document(&buf) {
                Ok(card) => {
                    report.accept(&card);
                    cards.push(card);
                }
                Err(reason) => report.reject(location, reason),
            },
        }
    }
    check_unique(&cards, &mut report)?;
    Ok((cards, report))
}

#[derive(Default)]
struct Keyed {
    id: Option<String>,
    name: Option<String>,
}

impl Keyed {
    fn key(self) -> Option<String> {
        self.id.or(self.name).filter(|k| !k.is_empty())
    }
}

/// One card document.
pub fn parse_document(bytes: &[u8]) -> std::result::Result<CardRecord, String> {
    let mut reader = Reader::from_reader(bytes);
    let mut buf = Vec::new();
    let mut path: Vec<String> = Vec::new();
    let mut guid = None;
    let mut batch = None;
    let mut sequence = None;
    let mut contests: BTreeMap<String, BTreeMap<String, Mark>> = BTreeMap::new();
    let mut contest: Option<(Keyed, BTreeMap<String, Mark>)> = None;
    let mut option: Option<(Keyed, Option<String>)> = None;
    let mut saw_root = false;

    loop {
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| format!("malformed XML at byte {}: {e}", reader.buffer_position()))?;
        match event {
            Event::Start(e) => {
                let tag = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                match tag.as_str() {
                    "Cvr" => saw_root = true,
                    "Contest" => contest = Some((Keyed::default(), BTreeMap::new())),
                    "Option" => option = Some((Keyed::default(), None)),
                    _ => {}
                }
                path.push(tag);
            }
            Event::Empty(e) => {
                if e.local_name().as_ref() == b"Contest" {
                    return Err("contest without an identifier".into());
                }
            }
            Event::End(_) => {
                let tag = path.pop().ok_or("unbalanced closing tag")?;
                match tag.as_str() {
                    "Option" => {
                        let (keyed, value) = option.take().ok_or("stray Option")?;
                        let key = keyed.key().ok_or("option without an identifier")?;
                        let mark = match value.as_deref().map(str::trim) {
                            None | Some("") => Mark::SELECTED,
                            Some(v) => Mark(
                                v.parse()
                                    .map_err(|_| format!("option value {v:?} is not a count"))?,
                            ),
                        };
                        let (_, marks) = contest.as_mut().ok_or("Option outside Contest")?;
                        marks.insert(key, mark);
                    }
                    "Contest" => {
                        let (keyed, marks) = contest.take().ok_or("stray Contest")?;
                        let key = keyed.key().ok_or("contest without an identifier")?;
                        contests.insert(key, marks);
                    }
                    _ => {}
                }
            }
            Event::Text(t) => {
                let text = t
                    .unescape()
                    .map_err(|e| format!("bad text: {e}"))?
                    .trim()
                    .to_string();
                if text.is_empty() {
                    continue;
                }
                let n = path.len();
                let (parent, leaf) = match n {
                    0 => continue,
                    1 => ("", path[0].as_str()),
                    _ => (path[n - 2].as_str(), path[n - 1].as_str()),
                };
                match (parent, leaf) {
                    ("Cvr", "CvrGuid") => guid = Some(text),
                    ("Cvr", "BatchNumber") => batch = Some(text),
                    ("Cvr", "BatchSequence") => sequence = Some(text),
                    ("Contest", "Id") => set(&mut contest, |c| &mut c.0.id, text),
                    ("Contest", "Name") => set(&mut contest, |c| &mut c.0.name, text),
                    ("Option", "Id") => set(&mut option, |o| &mut o.0.id, text),
                    ("Option", "Name") => set(&mut option, |o| &mut o.0.name, text),
                    ("Option", "Value") => set(&mut option, |o| &mut o.1, text),
                    _ => {}
                }
            }
            Event::Eof => break,
            _ => {}
        }
        buf.clear();
    }
    if !path.is_empty() {
        return Err(format!(
            "truncated document: unclosed <{}>",
            path.join("><")
        ));
    }
    if !saw_root {
        return Err("no Cvr element".into());
    }
    let card_id = match (batch, sequence, guid) {
        (Some(b), Some(s), _) => format!("{b}-{s}"),
        (_, _, Some(g)) => g,
        _ => return Err("no card identifier".into()),
    };
    Ok(CardRecord {
        votes: contests,
        ..CardRecord::new(card_id)
    })
}

fn set<T>(slot: &mut Option<T>, field: impl FnOnce(&mut T) -> &mut Option<String>, text: String) {
    if let Some(s) = slot.as_mut() {
        *field(s) = Some(text);
    }
}
