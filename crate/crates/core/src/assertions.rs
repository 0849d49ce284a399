//! Half-average assertions and their assorters.
//!
//! Every assertion claims that the mean of its assorter over the contest's
//! cards exceeds 1/2. Comparison audits test the equivalent claim on the
//! overstatement assorter `B(ω) = (1 - ω/u) / (2 - v/u)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CardRecord, Contest, SocialChoice};
use crate::risk::AlphaState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AssorterKind {
    /// Winner beats loser; `votes_allowed` marks make a valid vote.
    PluralityPair {
        winner: String,
        loser: String,
        votes_allowed: usize,
    },
    /// Winner takes more than `fraction` of the valid votes.
    Supermajority { winner: String, fraction: f64 },
    /// Winner is not eliminated before loser.
    RaireNeb { winner: String, loser: String },
    /// Winner is not eliminated next while exactly `continuing` remain.
    RaireNen {
        winner: String,
        loser: String,
        continuing: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssorterSpec {
    pub kind: AssorterKind,
    pub upper_bound: f64,
}

impl AssorterSpec {
    pub fn plurality(winner: &str, loser: &str, votes_allowed: usize) -> Self {
        AssorterSpec {
            kind: AssorterKind::PluralityPair {
                winner: winner.into(),
                loser: loser.into(),
                votes_allowed,
            },
            upper_bound: 1.0,
        }
    }

    pub fn supermajority(winner: &str, fraction: f64) -> Self {
        AssorterSpec {
            kind: AssorterKind::Supermajority {
                winner: winner.into(),
                fraction,
            },
            upper_bound: 1.0 / (2.0 * fraction),
        }
    }

    pub fn neb(winner: &str, loser: &str) -> Self {
        AssorterSpec {
            kind: AssorterKind::RaireNeb {
                winner: winner.into(),
                loser: loser.into(),
            },
            upper_bound: 1.0,
        }
    }

    pub fn nen(winner: &str, loser: &str, continuing: &[&str]) -> Self {
        AssorterSpec {
            kind: AssorterKind::RaireNen {
                winner: winner.into(),
                loser: loser.into(),
                continuing: continuing.iter().map(|s| s.to_string()).collect(),
            },
            upper_bound: 1.0,
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        match &self.kind {
            AssorterKind::PluralityPair { winner, loser, .. }
            | AssorterKind::RaireNeb { winner, loser } => {
                if winner == loser {
                    return Err(format!("winner and loser are both {winner}"));
                }
            }
            AssorterKind::RaireNen {
                winner,
                loser,
                continuing,
            } => {
                if winner == loser {
                    return Err(format!("winner and loser are both {winner}"));
                }
                if !continuing.contains(winner) || !continuing.contains(loser) {
                    return Err(format!(
                        "NEN {winner}/{loser}: both must be in the continuing set"
                    ));
                }
            }
            AssorterKind::Supermajority { .. } => {}
        }
        Ok(())
    }

    /// Human-readable label used in reports.
    pub fn label(&self) -> String {
        match &self.kind {
            AssorterKind::PluralityPair { winner, loser, .. } => format!("{winner} beats {loser}"),
            AssorterKind::Supermajority { winner, fraction } => {
                format!("{winner} exceeds {fraction}")
            }
            AssorterKind::RaireNeb { winner, loser } => format!("{winner} NEB {loser}"),
            AssorterKind::RaireNen {
                winner,
                loser,
                continuing,
            } => format!("{winner} NEN {loser} | {{{}}}", continuing.join(",")),
        }
    }
}

/// Assorter value for one card, in `[0, u]`. The caller only passes cards
/// whose style contains the contest; a missing contest scores as no vote.
pub fn assort(spec: &AssorterSpec, contest: &str, card: &CardRecord) -> f64 {
    match &spec.kind {
        AssorterKind::PluralityPair {
            winner,
            loser,
            votes_allowed,
        } => {
            let marked = card.marked(contest);
            if marked.is_empty() || marked.len() > *votes_allowed {
                return 0.5;
            }
            let w = marked.contains(&winner.as_str()) as i32;
            let l = marked.contains(&loser.as_str()) as i32;
            (w - l + 1) as f64 / 2.0
        }
        AssorterKind::Supermajority { winner, .. } => {
            let marked = card.marked(contest);
            if marked.len() != 1 {
                0.5
            } else if marked[0] == winner {
                spec.upper_bound
            } else {
                0.0
            }
        }
        AssorterKind::RaireNeb { winner, loser } => {
            let ranking = card.ranking(contest);
            let w_pos = ranking.iter().position(|c| c == winner);
            let l_pos = ranking.iter().position(|c| c == loser);
            let w_first = w_pos == Some(0);
            let l_above = match (w_pos, l_pos) {
                (Some(w), Some(l)) => l < w,
                (None, Some(_)) => true,
                _ => false,
            };
            (w_first as i32 - l_above as i32 + 1) as f64 / 2.0
        }
        AssorterKind::RaireNen {
            winner,
            loser,
            continuing,
        } => {
            let top = card
                .ranking(contest)
                .into_iter()
                .find(|c| continuing.iter().any(|s| s == c));
            let w = (top == Some(winner.as_str())) as i32;
            let l = (top == Some(loser.as_str())) as i32;
            (w - l + 1) as f64 / 2.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssertionStatus {
    Open,
    Confirmed,
    HandCounted,
}

/// Tally of discrepancies seen while measuring risk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct DiscrepancyCounts {
    pub one_vote_over: u64,
    pub two_vote_over: u64,
    pub one_vote_under: u64,
    pub two_vote_under: u64,
    /// MVRs that lacked a contest the CVR claimed.
    pub style_mismatches: u64,
}

impl DiscrepancyCounts {
    pub fn record(&mut self, omega: f64, upper_bound: f64) {
        let r = omega / upper_bound;
        if r >= 0.75 {
            self.two_vote_over += 1;
        } else if r > 1e-12 {
            self.one_vote_over += 1;
        } else if r <= -0.75 {
            self.two_vote_under += 1;
        } else if r < -1e-12 {
            self.one_vote_under += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub contest_id: String,
    pub spec: AssorterSpec,
    /// Mean assorter value over all of the contest's records, phantoms included.
    pub reported_mean: f64,
    /// Assorter margin `2Ā - 1`.
    pub margin: f64,
    /// Upper bound of the overstatement assorter, `2u / (2u - v)`.
    pub overstatement_bound: f64,
    pub status: AssertionStatus,
    /// Set when the CVRs themselves do not support the assertion.
    #[serde(default)]
    pub unconfirmable: bool,
    #[serde(default)]
    pub tracker: Option<AlphaState>,
    #[serde(default)]
    pub discrepancies: DiscrepancyCounts,
}

impl Assertion {
    pub fn new(contest_id: &str, spec: AssorterSpec) -> Self {
        Assertion {
            contest_id: contest_id.to_string(),
            spec,
            reported_mean: f64::NAN,
            margin: f64::NAN,
            overstatement_bound: f64::NAN,
            status: AssertionStatus::Open,
            unconfirmable: false,
            tracker: None,
            discrepancies: DiscrepancyCounts::default(),
        }
    }

    pub fn is_open(&self) -> bool {
        self.status == AssertionStatus::Open
    }

    pub fn p_value(&self) -> f64 {
        self.tracker.as_ref().map_or(1.0, AlphaState::p_value)
    }
}

/// One entry of an imported RAIRE assertion file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaireEntry {
    #[serde(rename = "type")]
    pub kind: RaireKind,
    pub winner: String,
    pub loser: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub continuing: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RaireKind {
    #[serde(rename = "NEB")]
    Neb,
    #[serde(rename = "NEN")]
    Nen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaireFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contest: Option<String>,
    pub assertions: Vec<RaireEntry>,
}

pub fn parse_raire(bytes: &[u8], origin: &str) -> Result<RaireFile> {
    let file: RaireFile =
        serde_json::from_slice(bytes).map_err(|e| Error::parse(origin, e.to_string()))?;
    for entry in &file.assertions {
        if entry.kind == RaireKind::Nen && entry.continuing.is_empty() {
            return Err(Error::parse(origin, "NEN entry without continuing set"));
        }
    }
    Ok(file)
}

/// The assertions whose conjunction implies the contest's reported outcome.
pub fn build_assertions(contest: &Contest, raire: Option<&[RaireEntry]>) -> Result<Vec<Assertion>> {
    let invalid = |reason: String| Error::InvalidContest {
        contest: contest.id.clone(),
        reason,
    };
    let specs: Vec<AssorterSpec> = match &contest.social_choice {
        SocialChoice::Plurality | SocialChoice::MultiWinner { .. } => {
            let allowed = contest.social_choice.votes_allowed();
            let mut specs = Vec::new();
            for w in &contest.reported_winners {
                for l in contest
                    .candidates
                    .iter()
                    .filter(|c| !contest.reported_winners.contains(c))
                {
                    specs.push(AssorterSpec::plurality(w, l, allowed));
                }
            }
            specs
        }
        SocialChoice::Supermajority { fraction } => contest
            .reported_winners
            .iter()
            .map(|w| AssorterSpec::supermajority(w, *fraction))
            .collect(),
        SocialChoice::Irv => {
            let entries = raire.ok_or_else(|| Error::AssertionsUnavailable(contest.id.clone()))?;
            entries
                .iter()
                .map(|e| match e.kind {
                    RaireKind::Neb => AssorterSpec::neb(&e.winner, &e.loser),
                    RaireKind::Nen => {
                        let cont: Vec<&str> = e.continuing.iter().map(String::as_str).collect();
                        AssorterSpec::nen(&e.winner, &e.loser, &cont)
                    }
                })
                .collect()
        }
    };
    for spec in &specs {
        spec.check().map_err(invalid)?;
    }
    Ok(specs
        .into_iter()
        .map(|s| Assertion::new(&contest.id, s))
        .collect())
}

/// Assorter value attributed to a phantom CVR: the midpoint of `[0, u]`.
fn phantom_value(spec: &AssorterSpec) -> f64 {
    spec.upper_bound / 2.0
}

/// Set the reported mean, margin and overstatement bound from the contest's
/// records. `cards` may include cards of other contests; they are skipped.
pub fn set_margin(assertion: &mut Assertion, cards: &[CardRecord]) {
    let contest = assertion.contest_id.as_str();
    let mut sum = 0.0;
    let mut n = 0u64;
    for card in cards.iter().filter(|c| c.contains(contest)) {
        sum += if card.phantom {
            phantom_value(&assertion.spec)
        } else {
            assort(&assertion.spec, contest, card)
        };
        n += 1;
    }
    let u = assertion.spec.upper_bound;
    let mean = if n == 0 { 0.5 } else { sum / n as f64 };
    let margin = 2.0 * mean - 1.0;
    assertion.reported_mean = mean;
    assertion.margin = margin;
    assertion.overstatement_bound = 2.0 * u / (2.0 * u - margin);
    assertion.unconfirmable = mean <= 0.5;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overstatement {
    pub omega: f64,
    /// The MVR did not contain the contest the CVR claimed.
    pub style_mismatch: bool,
}

/// `ω = a(CVR) - a(MVR)`. A phantom CVR scores at the assorter midpoint and a
/// missing card (`mvr == None`) scores zero.
pub fn overstatement(
    spec: &AssorterSpec,
    contest: &str,
    cvr: &CardRecord,
    mvr: Option<&CardRecord>,
) -> Overstatement {
    let a_cvr = if cvr.phantom {
        phantom_value(spec)
    } else {
        assort(spec, contest, cvr)
    };
    match mvr {
        Some(mvr) if !cvr.phantom => Overstatement {
            omega: a_cvr - assort(spec, contest, mvr),
            style_mismatch: !mvr.contains(contest),
        },
        _ => Overstatement {
            omega: a_cvr,
            style_mismatch: false,
        },
    }
}

/// `B(ω) = (1 - ω/u) / (2 - v/u)`, in `[0, u_B]`.
pub fn overstatement_assorter(assertion: &Assertion, omega: f64) -> f64 {
    overstatement_value(omega, assertion.margin, assertion.spec.upper_bound)
}

/// `B(ω)` for margin `margin` and assorter bound `upper`.
pub fn overstatement_value(omega: f64, margin: f64, upper: f64) -> f64 {
    (1.0 - omega / upper) / (2.0 - margin / upper)
}
