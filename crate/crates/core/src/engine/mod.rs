//! The audit loop: planning rounds, importing manual records, measuring
//! risk, escalating to full hand counts and reporting.
//!
//! All mutation goes through [`AuditState::apply`], one [`Event`] at a time.
//! The event log therefore replays to the same state.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assertions::{build_assertions, set_margin, Assertion, AssertionStatus, RaireEntry};
use crate::error::{Error, Result};
use crate::ingest::ManualRecord;
use crate::model::{
    make_phantoms, tabulate, validate, AuditMode, AuditSpec, BallotManifest, CardRecord,
    ConsistencyReport, Contest, ContestStatus, Outcome, RoundStrategy,
};
use crate::risk::{
    comparison_values, measure_risk, project_draws, tracker_for, ErrorModel, ErrorPlacement,
};
use crate::sampling::{
    assign_sample_numbers, plan_round, retrieval_list, ContestIndex, RetrievalList, RoundPlan,
};

pub mod persist;
pub mod report;

pub use persist::Store;
pub use report::{AuditReport, ReportFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Event {
    Initialized {
        spec: AuditSpec,
        contests: Vec<Contest>,
        #[serde(default)]
        raire: BTreeMap<String, Vec<RaireEntry>>,
        #[serde(default)]
        manifest: Option<BallotManifest>,
    },
    SeedSet {
        seed: String,
    },
    RoundPlanned {
        round: usize,
        targets: BTreeMap<String, u64>,
    },
    MvrsImported {
        #[serde(default)]
        digest: Option<String>,
        records: Vec<ManualRecord>,
        #[serde(default)]
        ignored: Vec<String>,
    },
    /// `close` ends the round; otherwise only the leading run of cards with
    /// manual records is measured.
    Measured {
        round: usize,
        close: bool,
    },
    Escalated {
        contest: String,
    },
}

/// What an MVR import did.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ImportSummary {
    pub accepted: usize,
    /// Records for cards that are neither sampled nor under a hand count.
    pub ignored: Vec<String>,
    /// Contests on an MVR that its CVR lacks, by card.
    pub style_discrepancies: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditState {
    pub spec: AuditSpec,
    pub contests: Vec<Contest>,
    pub assertions: Vec<Assertion>,
    #[serde(default)]
    pub manifest: Option<BallotManifest>,
    pub consistency: ConsistencyReport,
    pub rounds: Vec<RoundPlan>,
    pub closed_rounds: usize,
    /// Sample-order cards already fed to each contest's assertions.
    pub consumed: BTreeMap<String, u64>,
    /// Round-one estimates under the configured error model.
    pub initial_estimates: BTreeMap<String, u64>,
    pub mvrs: BTreeMap<String, ManualRecord>,
    pub hand_counts: BTreeMap<String, Outcome>,
    pub imported_digests: BTreeSet<String>,
    pub events_applied: usize,
    #[serde(skip)]
    pub cards: Vec<CardRecord>,
    #[serde(skip)]
    index: Option<ContestIndex>,
    #[serde(skip)]
    pub log: Vec<Event>,
    /// Set when the card file needs rewriting.
    #[serde(skip)]
    pub cards_dirty: bool,
}

impl AuditState {
    /// Validate the CVRs, add phantoms and build assertions. Winner mismatches
    /// and overfull contests stop the audit.
    pub fn initialize(
        spec: AuditSpec,
        contests: Vec<Contest>,
        raire: BTreeMap<String, Vec<RaireEntry>>,
        cvrs: Vec<CardRecord>,
        manifest: Option<BallotManifest>,
    ) -> Result<Self> {
        let mut state = AuditState::empty(cvrs);
        state.apply(Event::Initialized {
            spec,
            contests,
            raire,
            manifest,
        })?;
        Ok(state)
    }

    fn empty(cards: Vec<CardRecord>) -> Self {
        AuditState {
            spec: AuditSpec::default(),
            contests: Vec::new(),
            assertions: Vec::new(),
            manifest: None,
            consistency: ConsistencyReport::default(),
            rounds: Vec::new(),
            closed_rounds: 0,
            consumed: BTreeMap::new(),
            initial_estimates: BTreeMap::new(),
            mvrs: BTreeMap::new(),
            hand_counts: BTreeMap::new(),
            imported_digests: BTreeSet::new(),
            events_applied: 0,
            cards,
            index: None,
            log: Vec::new(),
            cards_dirty: true,
        }
    }

    /// Rebuild a state from its card file and event log.
    pub fn replay(cards: Vec<CardRecord>, events: Vec<Event>) -> Result<Self> {
        let mut state = AuditState::empty(cards);
        for event in events {
            state.apply(event)?;
        }
        state.cards_dirty = false;
        Ok(state)
    }

    /// Snapshot serialization, excluding cards and the log.
    pub fn snapshot(&self) -> String {
        serde_json::to_string_pretty(self).expect("state serializes") + "\n"
    }

    pub fn contest(&self, id: &str) -> Result<&Contest> {
        self.contests
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::UnknownContest(id.to_string()))
    }

    fn contest_mut(&mut self, id: &str) -> Result<&mut Contest> {
        self.contests
            .iter_mut()
            .find(|c| c.id == id)
            .ok_or_else(|| Error::UnknownContest(id.to_string()))
    }

    pub fn active_contests(&self) -> Vec<&Contest> {
        self.contests.iter().filter(|c| c.is_active()).collect()
    }

    pub fn assertions_for<'a>(&'a self, contest: &'a str) -> impl Iterator<Item = &'a Assertion> {
        self.assertions
            .iter()
            .filter(move |a| a.contest_id == contest)
    }

    /// The round awaiting measurement, if any.
    pub fn open_round(&self) -> Option<&RoundPlan> {
        (self.rounds.len() > self.closed_rounds).then(|| self.rounds.last().expect("nonempty"))
    }

    pub fn selected(&self) -> BTreeSet<String> {
        self.rounds
            .last()
            .map(|r| r.selected.clone())
            .unwrap_or_default()
    }

    pub fn seed_is_set(&self) -> bool {
        !self.spec.seed.is_empty()
    }

    fn index(&self) -> Result<&ContestIndex> {
        self.index.as_ref().ok_or(Error::MissingSeed)
    }

    /// Apply one event, appending it to the log on success.
    pub fn apply(&mut self, event: Event) -> Result<()> {
        match &event {
            Event::Initialized {
                spec,
                contests,
                raire,
                manifest,
            } => self.on_initialized(spec, contests, raire, manifest)?,
            Event::SeedSet { seed } => self.on_seed(seed)?,
            Event::RoundPlanned { round, targets } => self.on_round_planned(*round, targets)?,
            Event::MvrsImported {
                digest, records, ..
            } => self.on_mvrs(digest, records)?,
            Event::Measured { round, close } => self.on_measured(*round, *close)?,
            Event::Escalated { contest } => self.on_escalated(contest)?,
        }
        self.events_applied += 1;
        self.log.push(event);
        Ok(())
    }

    fn on_initialized(
        &mut self,
        spec: &AuditSpec,
        contests: &[Contest],
        raire: &BTreeMap<String, Vec<RaireEntry>>,
        manifest: &Option<BallotManifest>,
    ) -> Result<()> {
        if self.events_applied > 0 {
            return Err(Error::InvalidConfig("audit already initialised".into()));
        }
        spec.check(false)?;
        let mut ids = BTreeSet::new();
        for c in contests {
            c.check()?;
            if !ids.insert(c.id.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate contest id {}",
                    c.id
                )));
            }
        }
        let report = validate(contests, &self.cards, manifest.as_ref());
        if report.fatal {
            return Err(Error::Fatal(
                report
                    .overfull_contests
                    .iter()
                    .map(|o| {
                        format!(
                            "contest {} has {} CVRs but at most {} cards",
                            o.contest, o.cvr_count, o.upper_bound
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("; "),
            ));
        }
        if !report.winner_mismatches.is_empty() {
            return Err(Error::WinnerMismatch(report.winner_mismatches.clone()));
        }
        let cards = std::mem::take(&mut self.cards);
        self.cards = make_phantoms(contests, cards, &report)?;
        self.spec = spec.clone();
        self.contests = contests.to_vec();
        self.manifest = manifest.clone();
        self.consistency = report;

        let mut assertions = Vec::new();
        for contest in &self.contests {
            let mut built = build_assertions(contest, raire.get(&contest.id).map(Vec::as_slice))?;
            let mode = self.spec.mode_for(&contest.id);
            for a in &mut built {
                set_margin(a, &self.cards);
                a.tracker = Some(tracker_for(
                    a,
                    contest.cards_upper_bound,
                    &self.spec.risk_function,
                    mode,
                ));
            }
            assertions.extend(built);
        }
        self.assertions = assertions;
        for contest in &self.contests {
            self.consumed.insert(contest.id.clone(), 0);
        }
        for contest in self.contests.clone() {
            let estimate =
                self.projected_target(&contest, &self.spec.error_model, contest.risk_limit);
            self.initial_estimates.insert(contest.id.clone(), estimate);
        }
        self.refresh_statuses();
        self.cards_dirty = true;
        if self.seed_is_set() {
            let seed = self.spec.seed.clone();
            self.spec.seed.clear();
            self.on_seed(&seed)?;
        }
        Ok(())
    }

    fn on_seed(&mut self, seed: &str) -> Result<()> {
        if seed.is_empty() {
            return Err(Error::MissingSeed);
        }
        if self.seed_is_set() && self.spec.seed != seed {
            return Err(Error::SeedMismatch);
        }
        if self.index.is_some() && self.spec.seed == seed {
            return Ok(());
        }
        assign_sample_numbers(seed, &mut self.cards)?;
        self.index = Some(ContestIndex::build(&self.cards)?);
        self.spec.seed = seed.to_string();
        self.cards_dirty = true;
        Ok(())
    }

    fn on_round_planned(&mut self, round: usize, targets: &BTreeMap<String, u64>) -> Result<()> {
        if let Some(open) = self.open_round() {
            return Err(Error::RoundOpen(open.round));
        }
        if round != self.rounds.len() + 1 {
            return Err(Error::UnknownRound(round));
        }
        let active = self.active_contests();
        if active.is_empty() {
            return Err(Error::AuditComplete);
        }
        for (id, &target) in targets {
            let contest = self.contest(id)?;
            if !contest.is_active() {
                return Err(Error::NotActive {
                    contest: id.clone(),
                    status: contest.status.to_string(),
                });
            }
            let consumed = self.consumed.get(id).copied().unwrap_or(0);
            if target < consumed {
                return Err(Error::InvalidTarget {
                    contest: id.clone(),
                    reason: format!("{target} is below the {consumed} cards already audited"),
                });
            }
        }
        let plan = plan_round(
            round,
            &active,
            targets,
            &self.cards,
            self.index()?,
            &self.selected(),
        )?;
        self.rounds.push(plan);
        Ok(())
    }

    fn on_mvrs(&mut self, digest: &Option<String>, records: &[ManualRecord]) -> Result<()> {
        crate::ingest::check_known(records, &self.cards)?;
        if let Some(d) = digest {
            if !self.imported_digests.insert(d.clone()) {
                return Err(Error::AlreadyImported(d.clone()));
            }
        }
        for r in records {
            self.mvrs.insert(r.card_id.clone(), r.clone());
        }
        self.finish_hand_counts();
        Ok(())
    }

    fn on_measured(&mut self, round: usize, close: bool) -> Result<()> {
        let plan = self.open_round().ok_or(Error::NoRound)?.clone();
        if plan.round != round {
            return Err(Error::UnknownRound(round));
        }
        if close {
            let phantoms: BTreeSet<&str> = self
                .cards
                .iter()
                .filter(|c| c.phantom)
                .map(|c| c.card_id.as_str())
                .collect();
            let missing: Vec<String> = plan
                .selected
                .iter()
                .filter(|id| !phantoms.contains(id.as_str()) && !self.mvrs.contains_key(*id))
                .cloned()
                .collect();
            for id in missing {
                self.mvrs.insert(id.clone(), ManualRecord::not_found(id));
            }
        }
        for (contest_id, &target) in &plan.targets {
            if !self.contest(contest_id)?.is_active() {
                continue;
            }
            self.feed_contest(contest_id, target, close)?;
        }
        if close {
            self.closed_rounds += 1;
        }
        self.refresh_statuses();
        self.finish_hand_counts();
        Ok(())
    }

    /// Feed the contest's sample, in sample-number order, from the first
    /// unconsumed card up to `target`. Without `close`, stop at the first
    /// card still lacking a manual record.
    fn feed_contest(&mut self, contest_id: &str, target: u64, close: bool) -> Result<()> {
        let start = self.consumed.get(contest_id).copied().unwrap_or(0);
        if target <= start {
            return Ok(());
        }
        let stream: Vec<usize> =
            self.index()?.stream(contest_id)[start as usize..target as usize].to_vec();
        let mut mvr_cards: Vec<Option<CardRecord>> = Vec::with_capacity(stream.len());
        for &i in &stream {
            let card = &self.cards[i];
            if card.phantom {
                mvr_cards.push(None);
                continue;
            }
            match self.mvrs.get(&card.card_id) {
                Some(m) => mvr_cards.push(m.as_card()),
                None if close => mvr_cards.push(None),
                None => break,
            }
        }
        let pairs: Vec<(&CardRecord, Option<&CardRecord>)> = stream
            .iter()
            .zip(&mvr_cards)
            .map(|(&i, m)| (&self.cards[i], m.as_ref()))
            .collect();
        let alpha = self.contest(contest_id)?.risk_limit;
        let fed = pairs.len() as u64;
        for assertion in self
            .assertions
            .iter_mut()
            .filter(|a| a.contest_id == contest_id && a.is_open())
        {
            measure_risk(assertion, alpha, &pairs)?;
        }
        self.consumed.insert(contest_id.to_string(), start + fed);
        Ok(())
    }

    fn on_escalated(&mut self, contest_id: &str) -> Result<()> {
        let contest = self.contest_mut(contest_id)?;
        if !contest.is_active() {
            return Err(Error::NotActive {
                contest: contest_id.to_string(),
                status: contest.status.to_string(),
            });
        }
        contest.status = ContestStatus::HandCount;
        for a in self
            .assertions
            .iter_mut()
            .filter(|a| a.contest_id == contest_id)
        {
            if a.is_open() {
                a.status = AssertionStatus::HandCounted;
            }
        }
        self.finish_hand_counts();
        Ok(())
    }

    /// Confirm contests with no open assertions.
    fn refresh_statuses(&mut self) {
        for i in 0..self.contests.len() {
            let id = &self.contests[i].id;
            if self.contests[i].is_active() && !self.assertions_for(id).any(Assertion::is_open) {
                self.contests[i].status = ContestStatus::Confirmed;
            }
        }
    }

    /// Active contests whose every card has already been audited.
    pub fn exhausted_contests(&self) -> Vec<String> {
        self.active_contests()
            .into_iter()
            .filter(|c| self.consumed.get(&c.id).copied().unwrap_or(0) >= c.cards_upper_bound)
            .map(|c| c.id.clone())
            .collect()
    }

    /// Tally hand-counted contests whose cards all have manual records.
    fn finish_hand_counts(&mut self) {
        for i in 0..self.contests.len() {
            if self.contests[i].status != ContestStatus::HandCount {
                continue;
            }
            let contest = &self.contests[i];
            let mut cards = Vec::new();
            let mut complete = true;
            for card in self
                .cards
                .iter()
                .filter(|c| !c.phantom && c.contains(&contest.id))
            {
                match self.mvrs.get(&card.card_id) {
                    Some(m) => cards.extend(m.as_card()),
                    None => {
                        complete = false;
                        break;
                    }
                }
            }
            if !complete {
                continue;
            }
            let outcome = tabulate(contest, cards.iter());
            self.hand_counts.insert(contest.id.clone(), outcome);
            self.contests[i].status = ContestStatus::Finished;
        }
    }

    /// Non-phantom cards of hand-counted contests still lacking a record.
    pub fn hand_count_outstanding(&self, contest_id: &str) -> Vec<String> {
        self.cards
            .iter()
            .filter(|c| !c.phantom && c.contains(contest_id) && !self.mvrs.contains_key(&c.card_id))
            .map(|c| c.card_id.clone())
            .collect()
    }

    /// Final winners: the hand count when one was completed, else the
    /// reported winners.
    pub fn final_winners(&self, contest: &Contest) -> BTreeSet<String> {
        match self.hand_counts.get(&contest.id) {
            Some(o) => o.winners.clone(),
            None => contest.reported_winners.iter().cloned().collect(),
        }
    }

    // ---- projection ----

    /// Error model for the next projection of `assertion`: the configured one
    /// before any draws, then the observed overstatement rates.
    fn projection_model(&self, assertion: &Assertion, configured: &ErrorModel) -> ErrorModel {
        let drawn = assertion.tracker.as_ref().map_or(0, |t| t.drawn);
        if drawn == 0 {
            return *configured;
        }
        let d = assertion.discrepancies;
        ErrorModel {
            p1: d.one_vote_over as f64 / drawn as f64,
            p2: d.two_vote_over as f64 / drawn as f64,
            placement: ErrorPlacement::FirstThenEquispaced,
        }
    }

    /// Further draws `assertion` needs to reach `alpha`.
    fn projected_need(&self, index: usize, model: &ErrorModel, alpha: f64) -> u64 {
        let assertion = &self.assertions[index];
        let Some(tracker) = assertion.tracker.as_ref() else {
            return 0;
        };
        let u = assertion.spec.upper_bound;
        if tracker.mode == AuditMode::Polling {
            return project_draws(
                tracker,
                alpha,
                polling_values(assertion.reported_mean, u, tracker.drawn),
            );
        }
        let margin = assertion.margin;
        match self.spec.round_strategy {
            RoundStrategy::DeterministicProjection => {
                project_draws(tracker, alpha, comparison_values(*model, margin, u, 1))
            }
            RoundStrategy::SimulationQuantile {
                quantile,
                replications,
            } => {
                let b = |omega: f64| (1.0 - omega / u) / (2.0 - margin / u);
                let values = [b(0.0), b(u / 2.0), b(u)];
                let mut needs: Vec<u64> = (0..replications)
                    .map(|r| {
                        let mut rng = ChaCha20Rng::from_seed(self.simulation_seed(index, r));
                        let (p1, p2) = (model.p1, model.p2);
                        let draws = std::iter::from_fn(move || {
                            let x: f64 = rng.gen();
                            Some(if x < p2 {
                                values[2]
                            } else if x < p1 + p2 {
                                values[1]
                            } else {
                                values[0]
                            })
                        });
                        project_draws(tracker, alpha, draws)
                    })
                    .collect();
                needs.sort_unstable();
                let k = ((quantile * replications as f64).ceil() as usize).clamp(1, needs.len());
                needs[k - 1]
            }
        }
    }

    fn simulation_seed(&self, assertion: usize, replication: usize) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.spec.seed.as_bytes());
        h.update(format!(":{}:{assertion}:{replication}", self.rounds.len() + 1).as_bytes());
        h.finalize().into()
    }

    /// Cumulative sample size for `contest` under `configured` errors and
    /// risk limit `alpha`.
    fn projected_target(&self, contest: &Contest, configured: &ErrorModel, alpha: f64) -> u64 {
        let consumed = self.consumed.get(&contest.id).copied().unwrap_or(0);
        let need = (0..self.assertions.len())
            .filter(|&i| {
                self.assertions[i].contest_id == contest.id && self.assertions[i].is_open()
            })
            .map(|i| {
                let model = self.projection_model(&self.assertions[i], configured);
                self.projected_need(i, &model, alpha)
            })
            .max()
            .unwrap_or(0);
        let padded = (need as f64 * self.spec.inflation_factor).ceil() as u64;
        (consumed + padded).min(contest.cards_upper_bound)
    }

    /// Targets the next round would use for every active contest.
    pub fn proposed_targets(&self) -> Result<BTreeMap<String, u64>> {
        let active = self.active_contests();
        if active.is_empty() {
            return Err(Error::AuditComplete);
        }
        Ok(active
            .into_iter()
            .map(|c| {
                (
                    c.id.clone(),
                    self.projected_target(c, &self.spec.error_model, c.risk_limit),
                )
            })
            .collect())
    }

    /// Sample-size table for the configured error model and for each
    /// injected one-vote overstatement rate.
    pub fn estimates(&self, injected: &[f64], risk_limit: Option<f64>) -> Vec<EstimateRow> {
        self.contests
            .iter()
            .map(|c| {
                let alpha = risk_limit.unwrap_or(c.risk_limit);
                let margin = self
                    .assertions_for(&c.id)
                    .map(|a| a.margin)
                    .fold(f64::INFINITY, f64::min);
                EstimateRow {
                    contest: c.id.clone(),
                    status: c.status,
                    cards: c.cards_upper_bound,
                    margin: margin.is_finite().then_some(margin),
                    risk_limit: alpha,
                    configured: self.projected_target(c, &self.spec.error_model, alpha),
                    injected: injected
                        .iter()
                        .map(|&r| {
                            let model = ErrorModel::one_vote(r);
                            (r, self.projected_target(c, &model, alpha))
                        })
                        .collect(),
                }
            })
            .collect()
    }

    // ---- operations ----

    pub fn set_seed(&mut self, seed: &str) -> Result<()> {
        if self.seed_is_set() && self.spec.seed == seed {
            return Ok(());
        }
        self.apply(Event::SeedSet {
            seed: seed.to_string(),
        })
    }

    /// Plan the next round with projected targets, replaced by `overrides`
    /// where given.
    pub fn next_round(&mut self, overrides: &BTreeMap<String, u64>) -> Result<&RoundPlan> {
        if let Some(open) = self.open_round() {
            return Err(Error::RoundOpen(open.round));
        }
        let exhausted = self.exhausted_contests();
        if !exhausted.is_empty() && exhausted.len() == self.active_contests().len() {
            return Err(Error::SampleExhausted(exhausted));
        }
        let mut targets = self.proposed_targets()?;
        for (id, &t) in overrides {
            let contest = self.contest(id)?;
            if t > contest.cards_upper_bound {
                return Err(Error::TargetTooLarge {
                    contest: id.clone(),
                    target: t,
                    cards: contest.cards_upper_bound,
                });
            }
            targets.insert(id.clone(), t);
        }
        let round = self.rounds.len() + 1;
        self.apply(Event::RoundPlanned { round, targets })?;
        Ok(self.rounds.last().expect("just planned"))
    }

    pub fn round(&self, k: usize) -> Result<&RoundPlan> {
        if k == 0 {
            return Err(Error::UnknownRound(k));
        }
        self.rounds.get(k - 1).ok_or(Error::UnknownRound(k))
    }

    pub fn retrieval_list(&self, k: usize) -> Result<RetrievalList> {
        let plan = self.round(k)?;
        Ok(retrieval_list(
            &plan.selected,
            &self.cards,
            self.manifest.as_ref(),
        ))
    }

    /// Cards under a hand count that have no manual record yet.
    fn hand_count_cards(&self) -> BTreeSet<&str> {
        let counting: BTreeSet<&str> = self
            .contests
            .iter()
            .filter(|c| c.status == ContestStatus::HandCount)
            .map(|c| c.id.as_str())
            .collect();
        self.cards
            .iter()
            .filter(|c| c.votes.keys().any(|k| counting.contains(k.as_str())))
            .map(|c| c.card_id.as_str())
            .collect()
    }

    /// Record manual records. Unknown ids are an error. Records for cards
    /// neither sampled nor under a hand count are an error when `strict`,
    /// otherwise ignored and listed in the summary.
    pub fn import_mvrs(
        &mut self,
        records: Vec<ManualRecord>,
        digest: Option<String>,
        strict: bool,
    ) -> Result<ImportSummary> {
        if let Some(d) = &digest {
            if self.imported_digests.contains(d) {
                return Err(Error::AlreadyImported(d.clone()));
            }
        }
        crate::ingest::check_known(&records, &self.cards)?;
        let selected = self.selected();
        let counting = self.hand_count_cards();
        let (accepted, ignored): (Vec<ManualRecord>, Vec<ManualRecord>) = records
            .into_iter()
            .partition(|r| selected.contains(&r.card_id) || counting.contains(r.card_id.as_str()));
        let ignored: Vec<String> = ignored.into_iter().map(|r| r.card_id).collect();
        if strict && !ignored.is_empty() {
            return Err(Error::UnselectedCards(ignored));
        }
        let summary = ImportSummary {
            accepted: accepted.len(),
            ignored: ignored.clone(),
            style_discrepancies: crate::ingest::extra_contests(&accepted, &self.cards),
        };
        self.apply(Event::MvrsImported {
            digest,
            records: accepted,
            ignored,
        })?;
        Ok(summary)
    }

    /// Measure the open round. `close` scores selected cards without a
    /// manual record as not found and ends the round.
    pub fn measure(&mut self, close: bool) -> Result<()> {
        let round = self.open_round().ok_or(Error::NoRound)?.round;
        self.apply(Event::Measured { round, close })
    }

    pub fn escalate(&mut self, contest: &str) -> Result<()> {
        self.apply(Event::Escalated {
            contest: contest.to_string(),
        })
    }
}

/// Deterministic polling sequence whose running mean tracks `mean`.
fn polling_values(mean: f64, upper: f64, offset: u64) -> impl Iterator<Item = f64> {
    let p = (mean / upper).clamp(0.0, 1.0);
    (offset + 1..).map(move |k| {
        let before = ((k - 1) as f64 * p).floor();
        let after = (k as f64 * p).floor();
        if after > before {
            upper
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub contest: String,
    pub status: ContestStatus,
    pub cards: u64,
    pub margin: Option<f64>,
    pub risk_limit: f64,
    pub configured: u64,
    /// `(one-vote overstatement rate, cumulative sample size)`.
    pub injected: Vec<(f64, u64)>,
}

/// SHA-256 of a file's bytes, in hex.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
