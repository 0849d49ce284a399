//! On-disk audit state: `cards.json` (records with sample numbers),
//! `events.jsonl` (append-only log) and `state.json` (snapshot).
//!
//! Opening a store replays the log and checks it against the snapshot. A
//! lock file keeps a second process out while the store is open.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{AuditState, Event};
use crate::error::{Error, Result};
use crate::ingest::{parse_canonical_bytes, write_canonical};

pub const CARDS_FILE: &str = "cards.json";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "state.json";
pub const LOCK_FILE: &str = ".lock";

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    persisted: usize,
}

impl Store {
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join(SNAPSHOT_FILE).exists()
    }

    fn lock(dir: &Path) -> Result<()> {
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::Locked(dir.to_path_buf()))
            }
            Err(e) => Err(Error::io(path, e)),
        }
    }

    /// Write a freshly initialised state into `dir`.
    pub fn create(dir: &Path, state: &mut AuditState) -> Result<Store> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Store::lock(dir)?;
        let mut store = Store {
            dir: dir.to_path_buf(),
            persisted: 0,
        };
        let events = dir.join(EVENTS_FILE);
        if let Err(e) = File::create(&events) {
            store.release();
            return Err(Error::io(events, e));
        }
        state.cards_dirty = true;
        if let Err(e) = store.save(state) {
            store.release();
            return Err(e);
        }
        Ok(store)
    }

    /// Lock `dir`, replay its log and check the result against the snapshot.
    pub fn open(dir: &Path) -> Result<(Store, AuditState)> {
        if !Store::exists(dir) {
            return Err(Error::InvalidConfig(format!(
                "{} holds no audit state; run init first",
                dir.display()
            )));
        }
        Store::lock(dir)?;
        let mut store = Store {
            dir: dir.to_path_buf(),
            persisted: 0,
        };
        // On error the store drops here and releases the lock.
        let (persisted, state) = store.load()?;
        store.persisted = persisted;
        Ok((store, state))
    }

    fn load(&self) -> Result<(usize, AuditState)> {
        let state = load_unlocked(&self.dir)?;
        Ok((state.log.len(), state))
    }

    /// Append unsaved events, then rewrite the card file (when changed) and
    /// the snapshot atomically.
    pub fn save(&mut self, state: &mut AuditState) -> Result<()> {
        let fresh = &state.log[self.persisted.min(state.log.len())..];
        if !fresh.is_empty() {
            let path = self.dir.join(EVENTS_FILE);
            let mut f = OpenOptions::new()
                .append(true)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            let mut buf = String::new();
            for event in fresh {
                buf += &serde_json::to_string(event)?;
                buf.push('\n');
            }
            f.write_all(buf.as_bytes())
                .map_err(|e| Error::io(&path, e))?;
            f.sync_all().map_err(|e| Error::io(&path, e))?;
            self.persisted = state.log.len();
        }
        if state.cards_dirty {
            write_atomic(
                &self.dir.join(CARDS_FILE),
                write_canonical(&state.cards).as_bytes(),
            )?;
            state.cards_dirty = false;
        }
        write_atomic(&self.dir.join(SNAPSHOT_FILE), state.snapshot().as_bytes())
    }

    fn release(&self) {
        let _ = fs::remove_file(self.dir.join(LOCK_FILE));
    }
}

impl Drop for Store {
    fn drop(&mut self) {
        self.release();
    }
}

/// Load without taking the lock. Fails if the snapshot disagrees with the
/// replayed log.
pub fn load_unlocked(dir: &Path) -> Result<AuditState> {
    let cards_path = dir.join(CARDS_FILE);
    let bytes = fs::read(&cards_path).map_err(|e| Error::io(&cards_path, e))?;
    let (cards, _) = parse_canonical_bytes(&bytes, &cards_path.display().to_string())?;
    let events_path = dir.join(EVENTS_FILE);
    let text = fs::read_to_string(&events_path).map_err(|e| Error::io(&events_path, e))?;
    let mut events = Vec::new();
    for (i, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let event: Event = serde_json::from_str(line).map_err(|e| {
            Error::parse(
                events_path.display().to_string(),
                format!("line {}: {e}", i + 1),
            )
        })?;
        events.push(event);
    }
    let state = AuditState::replay(cards, events)?;
    let snap_path = dir.join(SNAPSHOT_FILE);
    let snapshot = fs::read_to_string(&snap_path).map_err(|e| Error::io(&snap_path, e))?;
    if snapshot != state.snapshot() {
        return Err(Error::Fatal(format!(
            "{} does not match the replayed event log",
            snap_path.display()
        )));
    }
    Ok(state)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
