//! Audit report: per-contest workload and outcome, per-assertion risk, and
//! workload totals with and without a recount threshold.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::AuditState;
use crate::assertions::AssertionStatus;
use crate::model::ContestStatus;
use crate::sampling::expected_cards;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Table,
    Csv,
    Structured,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContestRow {
    pub contest: String,
    pub name: String,
    pub status: ContestStatus,
    pub cards: u64,
    /// Smallest assorter margin among the contest's assertions.
    pub diluted_margin: Option<f64>,
    pub risk_limit: f64,
    pub estimated_sample: u64,
    pub actual_sample: u64,
    pub sampling_fraction: f64,
    pub log10_sampling_fraction: Option<f64>,
    pub max_p_value: f64,
    pub reported_winners: Vec<String>,
    pub final_winners: Vec<String>,
    pub outcome_replaced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionRow {
    pub contest: String,
    pub assertion: String,
    pub margin: f64,
    pub status: AssertionStatus,
    pub drawn: u64,
    pub p_value: f64,
    pub one_vote_over: u64,
    pub two_vote_over: u64,
    pub one_vote_under: u64,
    pub two_vote_under: u64,
    pub style_mismatches: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round: usize,
    pub targets: BTreeMap<String, u64>,
    pub estimated_total: f64,
    pub selected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    /// Expected distinct cards for the estimated samples of all contests.
    pub estimated_cards: f64,
    pub recount_threshold: Option<f64>,
    /// Contests with diluted margin at or below the threshold.
    pub omitted_contests: Vec<String>,
    pub estimated_cards_above_threshold: Option<f64>,
    pub cards_audited: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub seed: String,
    pub rounds_planned: usize,
    pub rounds_closed: usize,
    pub contests: Vec<ContestRow>,
    pub assertions: Vec<AssertionRow>,
    pub rounds: Vec<RoundRow>,
    pub totals: Totals,
}

impl AuditState {
    pub fn report(&self, recount_threshold: Option<f64>) -> AuditReport {
        let mut contests = Vec::new();
        let mut fractions = BTreeMap::new();
        let mut margins = BTreeMap::new();
        for c in &self.contests {
            let margin = self
                .assertions_for(&c.id)
                .map(|a| a.margin)
                .fold(f64::INFINITY, f64::min);
            let margin = margin.is_finite().then_some(margin);
            margins.insert(c.id.clone(), margin);
            let estimated = self.initial_estimates.get(&c.id).copied().unwrap_or(0);
            let fraction = estimated as f64 / c.cards_upper_bound as f64;
            fractions.insert(c.id.clone(), fraction);
            let reported: BTreeSet<String> = c.reported_winners.iter().cloned().collect();
            let final_winners = self.final_winners(c);
            contests.push(ContestRow {
                contest: c.id.clone(),
                name: c.name.clone(),
                status: c.status,
                cards: c.cards_upper_bound,
                diluted_margin: margin,
                risk_limit: c.risk_limit,
                estimated_sample: estimated,
                actual_sample: self.consumed.get(&c.id).copied().unwrap_or(0),
                sampling_fraction: fraction,
                log10_sampling_fraction: (fraction > 0.0).then(|| fraction.log10()),
                max_p_value: self
                    .assertions_for(&c.id)
                    .map(|a| a.p_value())
                    .fold(0.0, f64::max),
                outcome_replaced: final_winners != reported,
                reported_winners: reported.into_iter().collect(),
                final_winners: final_winners.into_iter().collect(),
            });
        }
        let assertions = self
            .assertions
            .iter()
            .map(|a| AssertionRow {
                contest: a.contest_id.clone(),
                assertion: a.spec.label(),
                margin: a.margin,
                status: a.status,
                drawn: a.tracker.as_ref().map_or(0, |t| t.drawn),
                p_value: a.p_value(),
                one_vote_over: a.discrepancies.one_vote_over,
                two_vote_over: a.discrepancies.two_vote_over,
                one_vote_under: a.discrepancies.one_vote_under,
                two_vote_under: a.discrepancies.two_vote_under,
                style_mismatches: a.discrepancies.style_mismatches,
            })
            .collect();
        let rounds = self
            .rounds
            .iter()
            .map(|r| RoundRow {
                round: r.round,
                targets: r.targets.clone(),
                estimated_total: r.estimated_total,
                selected: r.selected.len(),
            })
            .collect();
        let none = BTreeSet::new();
        let estimated_cards = expected_cards(&self.cards, &fractions, &none);
        let (omitted_contests, above) = match recount_threshold {
            Some(th) => {
                let omitted: Vec<String> = margins
                    .iter()
                    .filter(|(_, m)| m.is_some_and(|m| m <= th))
                    .map(|(id, _)| id.clone())
                    .collect();
                let kept: BTreeMap<String, f64> = fractions
                    .iter()
                    .filter(|(id, _)| !omitted.contains(id))
                    .map(|(id, f)| (id.clone(), *f))
                    .collect();
                (omitted, Some(expected_cards(&self.cards, &kept, &none)))
            }
            None => (Vec::new(), None),
        };
        AuditReport {
            seed: self.spec.seed.clone(),
            rounds_planned: self.rounds.len(),
            rounds_closed: self.closed_rounds,
            contests,
            assertions,
            rounds,
            totals: Totals {
                estimated_cards,
                recount_threshold,
                omitted_contests,
                estimated_cards_above_threshold: above,
                cards_audited: self.mvrs.len(),
            },
        }
    }
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.digits$}"))
}

fn winners(w: &[String]) -> String {
    w.join(";")
}

impl AuditReport {
    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Structured => {
                serde_json::to_string_pretty(self).expect("report serializes") + "\n"
            }
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Table => self.to_table(),
        }
    }

    fn contest_cells(c: &ContestRow) -> Vec<String> {
        vec![
            c.contest.clone(),
            c.status.to_string(),
            c.cards.to_string(),
            opt(c.diluted_margin, 6),
            c.estimated_sample.to_string(),
            c.actual_sample.to_string(),
            format!("{:.6}", c.sampling_fraction),
            opt(c.log10_sampling_fraction, 4),
            format!("{:.6}", c.max_p_value),
            winners(&c.reported_winners),
            winners(&c.final_winners),
        ]
    }

    const CONTEST_HEADER: [&'static str; 11] = [
        "contest",
        "status",
        "cards",
        "diluted_margin",
        "estimated_sample",
        "actual_sample",
        "sampling_fraction",
        "log10_sampling_fraction",
        "max_p_value",
        "reported_winners",
        "final_winners",
    ];

    const ASSERTION_HEADER: [&'static str; 8] = [
        "contest",
        "assertion",
        "margin",
        "status",
        "drawn",
        "p_value",
        "one_vote_over",
        "two_vote_over",
    ];

    fn assertion_cells(a: &AssertionRow) -> Vec<String> {
        vec![
            a.contest.clone(),
            a.assertion.clone(),
            format!("{:.6}", a.margin),
            format!("{:?}", a.status).to_lowercase(),
            a.drawn.to_string(),
            format!("{:.6}", a.p_value),
            a.one_vote_over.to_string(),
            a.two_vote_over.to_string(),
        ]
    }

    fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(Self::CONTEST_HEADER).expect("in-memory");
        for c in &self.contests {
            w.write_record(Self::contest_cells(c)).expect("in-memory");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    fn to_table(&self) -> String {
        let mut out = String::new();
        let contest_rows: Vec<Vec<String>> =
            self.contests.iter().map(Self::contest_cells).collect();
        out += &table(&Self::CONTEST_HEADER, &contest_rows);
        out.push('\n');
        let assertion_rows: Vec<Vec<String>> =
            self.assertions.iter().map(Self::assertion_cells).collect();
        out += &table(&Self::ASSERTION_HEADER, &assertion_rows);
        out.push('\n');
        let _ = writeln!(out, "seed: {}", self.seed);
        let _ = writeln!(
            out,
            "rounds: {} planned, {} closed",
            self.rounds_planned, self.rounds_closed
        );
        for r in &self.rounds {
            let _ = writeln!(
                out,
                "round {}: {} cards selected, {:.2} expected",
                r.round, r.selected, r.estimated_total
            );
        }
        let t = &self.totals;
        let _ = writeln!(
            out,
            "estimated cards, all contests: {:.2}",
            t.estimated_cards
        );
        if let (Some(th), Some(above)) = (t.recount_threshold, t.estimated_cards_above_threshold) {
            let _ = writeln!(
                out,
                "estimated cards, margins above {th}: {above:.2} (omitted: {})",
                if t.omitted_contests.is_empty() {
                    "none".to_string()
                } else {
                    t.omitted_contests.join(", ")
                }
            );
        }
        let _ = writeln!(out, "cards audited: {}", t.cards_audited);
        out
    }
}

/// Left-aligned plain text table.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ");
        s.truncate(s.trim_end().len());
        s + "\n"
    };
    let mut out = line(header.to_vec());
    out += &line(
        widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .iter()
            .map(String::as_str)
            .collect(),
    );
    for row in rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}
