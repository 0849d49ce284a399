//! Contests, cards, manifests and the audit configuration, together with the
//! pre-audit consistency checks and phantom generation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::risk::ErrorModel;
use crate::sampling::SampleNumber;

/// How a contest's winners are determined from the votes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SocialChoice {
    Plurality,
    MultiWinner { winners: usize },
    Supermajority { fraction: f64 },
    Irv,
}

impl SocialChoice {
    /// Number of reported winners this rule produces.
    pub fn winner_count(&self) -> usize {
        match self {
            SocialChoice::MultiWinner { winners } => *winners,
            _ => 1,
        }
    }

    /// Marks a voter may make before the card is an overvote.
    pub fn votes_allowed(&self) -> usize {
        self.winner_count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContestStatus {
    Active,
    Confirmed,
    /// Escalated; waiting for the full hand count to be entered.
    HandCount,
    /// Hand count entered; the outcome is final.
    Finished,
}

impl fmt::Display for ContestStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ContestStatus::Active => "active",
            ContestStatus::Confirmed => "confirmed",
            ContestStatus::HandCount => "hand_count",
            ContestStatus::Finished => "finished",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contest {
    pub id: String,
    pub name: String,
    pub social_choice: SocialChoice,
    pub candidates: Vec<String>,
    pub reported_winners: Vec<String>,
    /// Upper bound on the number of cards that contain the contest.
    pub cards_upper_bound: u64,
    pub risk_limit: f64,
    pub status: ContestStatus,
}

impl Contest {
    pub fn check(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidContest {
            contest: self.id.clone(),
            reason,
        };
        if self.id.is_empty() {
            return Err(fail("empty contest id".into()));
        }
        for w in &self.reported_winners {
            if !self.candidates.contains(w) {
                return Err(fail(format!("reported winner {w} is not a candidate")));
            }
        }
        let distinct: BTreeSet<_> = self.reported_winners.iter().collect();
        if distinct.len() != self.reported_winners.len() {
            return Err(fail("reported winners repeat".into()));
        }
        let expected = self.social_choice.winner_count();
        if self.reported_winners.len() != expected {
            return Err(fail(format!(
                "{} reported winners, social choice requires {expected}",
                self.reported_winners.len()
            )));
        }
        if !(self.risk_limit > 0.0 && self.risk_limit < 1.0) {
            return Err(fail(format!(
                "risk limit {} not in (0, 1)",
                self.risk_limit
            )));
        }
        if self.cards_upper_bound < 1 {
            return Err(fail("cards_upper_bound must be at least 1".into()));
        }
        match self.social_choice {
            SocialChoice::MultiWinner { winners: 0 } => {
                return Err(fail(
                    "multi-winner contest needs at least one winner".into(),
                ))
            }
            SocialChoice::Supermajority { fraction } if !(fraction > 0.0 && fraction < 1.0) => {
                return Err(fail(format!(
                    "supermajority fraction {fraction} not in (0, 1)"
                )))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.status == ContestStatus::Active
    }
}

/// A single vote mark: 0 is no mark, 1 a selection (or first rank), r > 1 a rank.
///
/// Files may spell a plain selection as `true`; it is written back as `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Mark(pub u32);

impl Mark {
    pub const SELECTED: Mark = Mark(1);

    pub fn is_marked(self) -> bool {
        self.0 > 0
    }
}

impl Serialize for Mark {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u32(self.0)
    }
}

impl<'de> Deserialize<'de> for Mark {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Flag(bool),
            Rank(u32),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Flag(b) => Mark(b as u32),
            Raw::Rank(r) => Mark(r),
        })
    }
}

pub type Votes = BTreeMap<String, BTreeMap<String, Mark>>;

/// One card's record, either machine (CVR) or manual (MVR).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardRecord {
    #[serde(rename = "id")]
    pub card_id: String,
    #[serde(rename = "contests", default)]
    pub votes: Votes,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub phantom: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_number: Option<SampleNumber>,
}

impl CardRecord {
    pub fn new(card_id: impl Into<String>) -> Self {
        CardRecord {
            card_id: card_id.into(),
            votes: Votes::new(),
            phantom: false,
            sample_number: None,
        }
    }

    /// Builder helper: adds plain selections for `contest`.
    pub fn with_votes(mut self, contest: &str, candidates: &[&str]) -> Self {
        let marks = self.votes.entry(contest.to_string()).or_default();
        for c in candidates {
            marks.insert(c.to_string(), Mark::SELECTED);
        }
        self
    }

    /// Builder helper: adds a ranking (first element ranked 1) for `contest`.
    pub fn with_ranking(mut self, contest: &str, ranking: &[&str]) -> Self {
        let marks = self.votes.entry(contest.to_string()).or_default();
        for (i, c) in ranking.iter().enumerate() {
            marks.insert(c.to_string(), Mark(i as u32 + 1));
        }
        self
    }

    pub fn phantom_for(contest: &str, k: u64) -> Self {
        let mut votes = Votes::new();
        votes.insert(contest.to_string(), BTreeMap::new());
        CardRecord {
            card_id: format!("phantom-{contest}-{k}"),
            votes,
            phantom: true,
            sample_number: None,
        }
    }

    pub fn contains(&self, contest: &str) -> bool {
        self.votes.contains_key(contest)
    }

    /// Candidates marked in `contest`, in id order.
    pub fn marked(&self, contest: &str) -> Vec<&str> {
        self.votes
            .get(contest)
            .map(|m| {
                m.iter()
                    .filter(|(_, mark)| mark.is_marked())
                    .map(|(c, _)| c.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Ranked preferences in `contest`, most preferred first. The ranking is
    /// truncated at the first rank shared by two candidates.
    pub fn ranking(&self, contest: &str) -> Vec<&str> {
        let Some(marks) = self.votes.get(contest) else {
            return Vec::new();
        };
        let mut ranked: Vec<(u32, &str)> = marks
            .iter()
            .filter(|(_, m)| m.is_marked())
            .map(|(c, m)| (m.0, c.as_str()))
            .collect();
        ranked.sort();
        let mut out = Vec::with_capacity(ranked.len());
        for (i, (rank, cand)) in ranked.iter().enumerate() {
            let dup_next = ranked.get(i + 1).is_some_and(|(r, _)| r == rank);
            let dup_prev = i > 0 && ranked[i - 1].0 == *rank;
            if dup_next || dup_prev {
                break;
            }
            out.push(*cand);
        }
        out
    }
}

/// The contests a card contains, as inferred from its record.
pub fn card_style(card: &CardRecord) -> BTreeSet<&str> {
    card.votes.keys().map(String::as_str).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub container: String,
    pub tabulator: String,
    pub batch: String,
    pub card_count: u64,
    pub id_prefix: String,
}

/// Physical inventory of cards. Card `k` (1-based) of an entry has id
/// `{id_prefix}-{k}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallotManifest {
    pub entries: Vec<ManifestEntry>,
    pub total_cards: u64,
}

/// Where a manifest places a card.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CardLocation {
    pub container: String,
    pub tabulator: String,
    pub batch: String,
    pub position: u64,
}

impl BallotManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Self {
        let total_cards = entries.iter().map(|e| e.card_count).sum();
        BallotManifest {
            entries,
            total_cards,
        }
    }

    pub fn locator(&self) -> ManifestLocator<'_> {
        ManifestLocator {
            by_prefix: self
                .entries
                .iter()
                .map(|e| (e.id_prefix.as_str(), e))
                .collect(),
        }
    }
}

pub struct ManifestLocator<'a> {
    by_prefix: BTreeMap<&'a str, &'a ManifestEntry>,
}

impl ManifestLocator<'_> {
    pub fn locate(&self, card_id: &str) -> Option<CardLocation> {
        let (prefix, pos) = card_id.rsplit_once('-')?;
        let position: u64 = pos.parse().ok()?;
        let entry = self.by_prefix.get(prefix)?;
        (position >= 1 && position <= entry.card_count).then(|| CardLocation {
            container: entry.container.clone(),
            tabulator: entry.tabulator.clone(),
            batch: entry.batch.clone(),
            position,
        })
    }
}

/// A tabulated outcome. `tie` is set whenever a deterministic tie-break had
/// to be applied to reach the winner set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub winners: BTreeSet<String>,
    pub tie: bool,
}

/// Winners implied by `cards` under the contest's social choice function.
/// Phantom records are ignored.
pub fn tabulate_reported(contest: &Contest, cards: &[CardRecord]) -> Result<Outcome> {
    let relevant: Vec<&CardRecord> = cards
        .iter()
        .filter(|c| !c.phantom && c.contains(&contest.id))
        .collect();
    if relevant.is_empty() {
        return Err(Error::NoRecords(contest.id.clone()));
    }
    Ok(tabulate(contest, relevant.into_iter()))
}

pub(crate) fn tabulate<'a>(
    contest: &Contest,
    cards: impl Iterator<Item = &'a CardRecord>,
) -> Outcome {
    match &contest.social_choice {
        SocialChoice::Irv => tabulate_irv(contest, cards),
        choice => {
            let allowed = choice.votes_allowed();
            let mut tally: BTreeMap<&str, u64> =
                contest.candidates.iter().map(|c| (c.as_str(), 0)).collect();
            let mut valid_cards = 0u64;
            for card in cards {
                let marked = card.marked(&contest.id);
                if marked.is_empty() || marked.len() > allowed {
                    continue;
                }
                valid_cards += 1;
                for m in marked {
                    if let Some(t) = tally.get_mut(m) {
                        *t += 1;
                    }
                }
            }
            match choice {
                SocialChoice::Supermajority { fraction } => {
                    let mut winners = BTreeSet::new();
                    let mut tie = false;
                    for (cand, &t) in &tally {
                        let share = if valid_cards == 0 {
                            0.0
                        } else {
                            t as f64 / valid_cards as f64
                        };
                        if share > *fraction {
                            winners.insert(cand.to_string());
                        } else if share == *fraction {
                            tie = true;
                        }
                    }
                    Outcome { winners, tie }
                }
                _ => top_k(&tally, allowed),
            }
        }
    }
}

fn top_k(tally: &BTreeMap<&str, u64>, k: usize) -> Outcome {
    let mut ranked: Vec<(&str, u64)> = tally.iter().map(|(c, t)| (*c, *t)).collect();
    // Highest tally first; lexicographic id order breaks ties.
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let tie = ranked.len() > k && k > 0 && ranked[k - 1].1 == ranked[k].1;
    Outcome {
        winners: ranked.iter().take(k).map(|(c, _)| c.to_string()).collect(),
        tie,
    }
}

fn tabulate_irv<'a>(contest: &Contest, cards: impl Iterator<Item = &'a CardRecord>) -> Outcome {
    let ballots: Vec<Vec<&str>> = cards
        .map(|c| {
            c.ranking(&contest.id)
                .into_iter()
                .filter(|cand| contest.candidates.iter().any(|x| x == cand))
                .collect()
        })
        .collect();
    let mut continuing: BTreeSet<&str> = contest.candidates.iter().map(String::as_str).collect();
    let mut tie = false;
    while continuing.len() > 1 {
        let mut tally: BTreeMap<&str, u64> = continuing.iter().map(|c| (*c, 0)).collect();
        for ballot in &ballots {
            if let Some(top) = ballot.iter().find(|c| continuing.contains(*c)) {
                *tally.get_mut(top).expect("continuing candidate") += 1;
            }
        }
        let lowest = *tally.values().min().expect("nonempty");
        let tied: Vec<&str> = tally
            .iter()
            .filter(|(_, &t)| t == lowest)
            .map(|(c, _)| *c)
            .collect();
        if tied.len() > 1 {
            tie = true;
        }
        // BTreeMap iteration is lexicographic, so tied[0] is the smallest id.
        continuing.remove(tied[0]);
    }
    Outcome {
        winners: continuing.into_iter().map(str::to_string).collect(),
        tie,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverfullContest {
    pub contest: String,
    pub cvr_count: u64,
    pub upper_bound: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ConsistencyReport {
    pub winner_mismatches: Vec<String>,
    /// Contests whose CVR tabulation needed a tie-break.
    pub tied_contests: Vec<String>,
    pub overfull_contests: Vec<OverfullContest>,
    pub phantom_cvrs_needed: BTreeMap<String, u64>,
    pub phantom_cards_needed: u64,
    pub fatal: bool,
}

/// Compare the CVRs against the contest descriptors and manifest.
pub fn validate(
    contests: &[Contest],
    cvrs: &[CardRecord],
    manifest: Option<&BallotManifest>,
) -> ConsistencyReport {
    let mut report = ConsistencyReport::default();
    let counts = style_counts(cvrs.iter().filter(|c| !c.phantom));
    for contest in contests {
        let count = counts.get(contest.id.as_str()).copied().unwrap_or(0);
        match tabulate_reported(contest, cvrs) {
            Ok(outcome) => {
                let reported: BTreeSet<String> = contest.reported_winners.iter().cloned().collect();
                if outcome.winners != reported {
                    report.winner_mismatches.push(contest.id.clone());
                }
                if outcome.tie {
                    report.tied_contests.push(contest.id.clone());
                }
            }
            Err(_) => report.winner_mismatches.push(contest.id.clone()),
        }
        if count > contest.cards_upper_bound {
            report.overfull_contests.push(OverfullContest {
                contest: contest.id.clone(),
                cvr_count: count,
                upper_bound: contest.cards_upper_bound,
            });
        } else if count < contest.cards_upper_bound {
            report
                .phantom_cvrs_needed
                .insert(contest.id.clone(), contest.cards_upper_bound - count);
        }
    }
    if let Some(manifest) = manifest {
        let real = cvrs.iter().filter(|c| !c.phantom).count() as u64;
        report.phantom_cards_needed = real.saturating_sub(manifest.total_cards);
    }
    report.fatal = !report.overfull_contests.is_empty();
    report
}

fn style_counts<'a>(cards: impl Iterator<Item = &'a CardRecord>) -> BTreeMap<&'a str, u64> {
    let mut counts = BTreeMap::new();
    for card in cards {
        for contest in card.votes.keys() {
            *counts.entry(contest.as_str()).or_insert(0) += 1;
        }
    }
    counts
}

/// Append one single-contest phantom per missing card so that every contest
/// is contained in exactly `cards_upper_bound` records.
pub fn make_phantoms(
    contests: &[Contest],
    cards: Vec<CardRecord>,
    report: &ConsistencyReport,
) -> Result<Vec<CardRecord>> {
    if report.fatal {
        return Err(Error::Fatal(format!(
            "more CVRs than cards for {}",
            report
                .overfull_contests
                .iter()
                .map(|o| o.contest.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    let mut present: BTreeMap<String, u64> = BTreeMap::new();
    let mut phantoms: BTreeMap<String, u64> = BTreeMap::new();
    for card in &cards {
        for contest in card.votes.keys() {
            *present.entry(contest.clone()).or_insert(0) += 1;
            if card.phantom {
                *phantoms.entry(contest.clone()).or_insert(0) += 1;
            }
        }
    }
    let mut out = cards;
    for contest in contests {
        let have = present.get(&contest.id).copied().unwrap_or(0);
        let existing = phantoms.get(&contest.id).copied().unwrap_or(0);
        for k in 1..=contest.cards_upper_bound.saturating_sub(have) {
            out.push(CardRecord::phantom_for(&contest.id, existing + k));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AuditMode {
    #[default]
    Comparison,
    Polling,
}

/// The risk-measuring function and the parameters of its alternative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RiskFunction {
    /// ALPHA with the alternative chosen to maximise expected log growth
    /// under assumed one- and two-vote overstatement rates.
    AlphaOptimalComparison {
        #[serde(default)]
        p1: f64,
        #[serde(default = "default_p2")]
        p2: f64,
    },
    AlphaFixedEta {
        eta: f64,
    },
}

fn default_p2() -> f64 {
    1e-4
}

impl Default for RiskFunction {
    fn default() -> Self {
        RiskFunction::AlphaOptimalComparison {
            p1: 0.0,
            p2: default_p2(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoundStrategy {
    #[default]
    DeterministicProjection,
    SimulationQuantile {
        quantile: f64,
        replications: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AuditPaths {
    #[serde(default)]
    pub cvrs: Vec<CvrSource>,
    #[serde(default)]
    pub manifest: Option<String>,
    #[serde(default)]
    pub mvrs: Option<String>,
    #[serde(default)]
    pub state_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvrSource {
    pub format: crate::ingest::CvrFormat,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSpec {
    #[serde(default)]
    pub seed: String,
    #[serde(default)]
    pub risk_function: RiskFunction,
    #[serde(default)]
    pub audit_modes: BTreeMap<String, AuditMode>,
    #[serde(default)]
    pub error_model: ErrorModel,
    #[serde(default)]
    pub round_strategy: RoundStrategy,
    #[serde(default = "default_inflation")]
    pub inflation_factor: f64,
    #[serde(default)]
    pub paths: AuditPaths,
}

fn default_inflation() -> f64 {
    1.0
}

impl Default for AuditSpec {
    fn default() -> Self {
        AuditSpec {
            seed: String::new(),
            risk_function: RiskFunction::default(),
            audit_modes: BTreeMap::new(),
            error_model: ErrorModel::default(),
            round_strategy: RoundStrategy::default(),
            inflation_factor: 1.0,
            paths: AuditPaths::default(),
        }
    }
}

impl AuditSpec {
    /// `require_seed` is false until the seed ceremony has happened.
    pub fn check(&self, require_seed: bool) -> Result<()> {
        if require_seed && self.seed.is_empty() {
            return Err(Error::MissingSeed);
        }
        if !self.inflation_factor.is_finite() || self.inflation_factor < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "inflation_factor {} must be at least 1",
                self.inflation_factor
            )));
        }
        self.error_model.check()?;
        match self.risk_function {
            RiskFunction::AlphaOptimalComparison { p1, p2 } => {
                if !(p1 >= 0.0 && p2 >= 0.0 && p1 + p2 < 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "assumed rates p1={p1}, p2={p2} are not a distribution"
                    )));
                }
            }
            RiskFunction::AlphaFixedEta { eta } => {
                if eta.is_nan() || eta <= 0.5 {
                    return Err(Error::InvalidConfig(format!("eta {eta} must exceed 1/2")));
                }
            }
        }
        if let RoundStrategy::SimulationQuantile {
            quantile,
            replications,
        } = self.round_strategy
        {
            if !(0.0..=1.0).contains(&quantile) || replications == 0 {
                return Err(Error::InvalidConfig(
                    "simulation_quantile needs quantile in [0,1] and replications > 0".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn mode_for(&self, contest: &str) -> AuditMode {
        self.audit_modes.get(contest).copied().unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contest(
        id: &str,
        choice: SocialChoice,
        cands: &[&str],
        winners: &[&str],
        n: u64,
    ) -> Contest {
        Contest {
            id: id.into(),
            name: id.into(),
            social_choice: choice,
            candidates: cands.iter().map(|s| s.to_string()).collect(),
            reported_winners: winners.iter().map(|s| s.to_string()).collect(),
            cards_upper_bound: n,
            risk_limit: 0.05,
            status: ContestStatus::Active,
        }
    }

    fn tallied(contest: &str, counts: &[(&str, usize)]) -> Vec<CardRecord> {
        let mut out = Vec::new();
        for (cand, n) in counts {
            for _ in 0..*n {
                let id = format!("c{}", out.len());
                out.push(CardRecord::new(id).with_votes(contest, &[cand]));
            }
        }
        out
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn plurality_argmax() {
        let c = contest("p", SocialChoice::Plurality, &["A", "B", "C"], &["A"], 18);
        let cards = tallied("p", &[("A", 10), ("B", 5), ("C", 3)]);
        let out = tabulate_reported(&c, &cards).unwrap();
        assert_eq!(out.winners, set(&["A"]));
        assert!(!out.tie);
    }

    #[test]
    fn vote_for_two_takes_top_two() {
        let c = contest(
            "p",
            SocialChoice::MultiWinner { winners: 2 },
            &["A", "B", "C"],
            &["A", "B"],
            18,
        );
        let cards = tallied("p", &[("A", 10), ("B", 5), ("C", 3)]);
        assert_eq!(
            tabulate_reported(&c, &cards).unwrap().winners,
            set(&["A", "B"])
        );
    }

    #[test]
    fn supermajority_threshold() {
        let c = contest(
            "m",
            SocialChoice::Supermajority {
                fraction: 2.0 / 3.0,
            },
            &["Yes", "No"],
            &["Yes"],
            10,
        );
        let cards = tallied("m", &[("Yes", 7), ("No", 3)]);
        assert_eq!(
            tabulate_reported(&c, &cards).unwrap().winners,
            set(&["Yes"])
        );
        let cards = tallied("m", &[("Yes", 6), ("No", 4)]);
        assert!(tabulate_reported(&c, &cards).unwrap().winners.is_empty());
    }

    #[test]
    fn overvotes_are_not_counted() {
        let c = contest("p", SocialChoice::Plurality, &["A", "B"], &["B"], 3);
        let cards = vec![
            CardRecord::new("1").with_votes("p", &["A", "B"]),
            CardRecord::new("2").with_votes("p", &["A", "B"]),
            CardRecord::new("3").with_votes("p", &["B"]),
        ];
        assert_eq!(tabulate_reported(&c, &cards).unwrap().winners, set(&["B"]));
    }

    #[test]
    fn plurality_tie_is_flagged_not_an_error() {
        let c = contest("t", SocialChoice::Plurality, &["A", "B"], &["A"], 4);
        let out = tabulate_reported(&c, &tallied("t", &[("A", 2), ("B", 2)])).unwrap();
        assert!(out.tie);
        assert_eq!(out.winners, set(&["A"]));
    }

    #[test]
    fn irv_eliminates_lowest_first() {
        let c = contest("irv", SocialChoice::Irv, &["A", "B", "C"], &["B"], 9);
        let mut cards = Vec::new();
        for i in 0..4 {
            cards.push(CardRecord::new(format!("a{i}")).with_ranking("irv", &["A"]));
        }
        for i in 0..3 {
            cards.push(CardRecord::new(format!("b{i}")).with_ranking("irv", &["B"]));
        }
        for i in 0..2 {
            cards.push(CardRecord::new(format!("c{i}")).with_ranking("irv", &["C", "B"]));
        }
        // C out first, its votes go to B: B 5, A 4.
        let out = tabulate_reported(&c, &cards).unwrap();
        assert_eq!(out.winners, set(&["B"]));
        assert!(!out.tie);
    }

    #[test]
    fn irv_tie_breaks_on_smallest_id() {
        let c = contest("irv", SocialChoice::Irv, &["A", "B", "C"], &["C"], 5);
        let cards = vec![
            CardRecord::new("1").with_ranking("irv", &["A", "C"]),
            CardRecord::new("2").with_ranking("irv", &["B", "A"]),
            CardRecord::new("3").with_ranking("irv", &["C"]),
            CardRecord::new("4").with_ranking("irv", &["C"]),
        ];
        // A and B tie at 1; A goes, its ballot moves to C.
        let out = tabulate_reported(&c, &cards).unwrap();
        assert!(out.tie);
        assert_eq!(out.winners, set(&["C"]));
    }

    #[test]
    fn validate_flags_mismatch_and_overfull() {
        let c = contest("p", SocialChoice::Plurality, &["A", "B"], &["A"], 100);
        let mut cards = tallied("p", &[("B", 60), ("A", 41)]);
        let r = validate(std::slice::from_ref(&c), &cards, None);
        assert_eq!(r.winner_mismatches, vec!["p".to_string()]);
        assert!(r.fatal);
        assert_eq!(r.overfull_contests[0].cvr_count, 101);

        cards.truncate(98);
        let r = validate(&[c], &cards, None);
        assert!(!r.fatal);
        assert_eq!(r.phantom_cvrs_needed["p"], 2);
    }

    #[test]
    fn phantoms_fill_each_contest_separately() {
        let p = contest("p", SocialChoice::Plurality, &["A", "B"], &["A"], 3);
        let q = contest("q", SocialChoice::Plurality, &["X", "Y"], &["X"], 3);
        let cards = vec![
            CardRecord::new("1")
                .with_votes("p", &["A"])
                .with_votes("q", &["X"]),
            CardRecord::new("2")
                .with_votes("p", &["A"])
                .with_votes("q", &["X"]),
        ];
        let contests = [p, q];
        let report = validate(&contests, &cards, None);
        let out = make_phantoms(&contests, cards.clone(), &report).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(&out[..2], &cards[..]);
        for ph in &out[2..] {
            assert!(ph.phantom);
            assert_eq!(ph.votes.len(), 1);
            assert!(ph.votes.values().all(|m| m.is_empty()));
        }
        assert_eq!(out[2].card_id, "phantom-p-1");
        assert_eq!(out[3].card_id, "phantom-q-1");

        let again =
            make_phantoms(&contests, out.clone(), &validate(&contests, &out, None)).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn make_phantoms_refuses_fatal_report() {
        let p = contest("p", SocialChoice::Plurality, &["A"], &["A"], 1);
        let cards = tallied("p", &[("A", 2)]);
        let report = validate(std::slice::from_ref(&p), &cards, None);
        assert!(matches!(
            make_phantoms(&[p], cards, &report),
            Err(Error::Fatal(_))
        ));
    }

    #[test]
    fn style_is_key_set() {
        let card = CardRecord::new("1")
            .with_votes("P", &["a"])
            .with_votes("Q", &[]);
        assert_eq!(card_style(&card), ["P", "Q"].into_iter().collect());
        assert_eq!(
            card_style(&CardRecord::phantom_for("c", 1)),
            ["c"].into_iter().collect()
        );
        assert!(card_style(&CardRecord::new("e")).is_empty());
    }

    #[test]
    fn mark_accepts_bool_or_rank() {
        let m: BTreeMap<String, Mark> =
            serde_json::from_str(r#"{"a": true, "b": false, "c": 3}"#).unwrap();
        assert_eq!(m["a"], Mark(1));
        assert_eq!(m["b"], Mark(0));
        assert_eq!(m["c"], Mark(3));
        assert_eq!(serde_json::to_string(&m).unwrap(), r#"{"a":1,"b":0,"c":3}"#);
    }

    #[test]
    fn ranking_truncates_at_duplicate_rank() {
        let mut card = CardRecord::new("1").with_ranking("r", &["A", "B"]);
        card.votes.get_mut("r").unwrap().insert("C".into(), Mark(2));
        assert_eq!(card.ranking("r"), vec!["A"]);
    }

    #[test]
    fn manifest_locates_by_prefix() {
        let m = BallotManifest::new(vec![ManifestEntry {
            container: "box1".into(),
            tabulator: "t1".into(),
            batch: "b1".into(),
            card_count: 2,
            id_prefix: "t1-b1".into(),
        }]);
        let loc = m.locator();
        assert_eq!(loc.locate("t1-b1-2").unwrap().position, 2);
        assert!(loc.locate("t1-b1-3").is_none());
        assert!(loc.locate("zzz").is_none());
    }

    #[test]
    fn contest_invariants() {
        let mut c = contest("p", SocialChoice::Plurality, &["A", "B"], &["A"], 10);
        assert!(c.check().is_ok());
        c.reported_winners = vec!["Z".into()];
        assert!(c.check().is_err());
        c.reported_winners = vec!["A".into(), "B".into()];
        assert!(c.check().is_err());
        c.reported_winners = vec!["A".into()];
        c.risk_limit = 1.0;
        assert!(c.check().is_err());
    }
}
