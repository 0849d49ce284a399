//! Sample numbers, consistent sampling and retrieval lists.
//!
//! Every card gets a 256-bit sample number `SHA-256(seed ":" card_id)`.
//! Contest `c` with cumulative target `S_c` takes the `S_c` cards containing
//! `c` with the smallest numbers; its threshold `t_c` is the largest of them.
//! A card is retrieved if it falls under the threshold of any active contest
//! it contains, so raising targets only ever adds cards.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{BallotManifest, CardLocation, CardRecord, Contest};

/// Unsigned 256-bit integer stored big-endian, so byte order is numeric order.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SampleNumber(pub [u8; 32]);

impl SampleNumber {
    pub const ZERO: SampleNumber = SampleNumber([0; 32]);
    pub const MAX: SampleNumber = SampleNumber([0xff; 32]);

    pub fn derive(seed: &str, card_id: &str) -> Self {
        let mut h = Sha256::new();
        h.update(seed.as_bytes());
        h.update(b":");
        h.update(card_id.as_bytes());
        SampleNumber(h.finalize().into())
    }

    /// Most significant 32 bits.
    pub fn high_u32(&self) -> u32 {
        u32::from_be_bytes([self.0[0], self.0[1], self.0[2], self.0[3]])
    }

    /// Position in `[0, 1)` from the top 64 bits.
    pub fn as_unit(&self) -> f64 {
        let hi = u64::from_be_bytes(self.0[..8].try_into().expect("8 bytes"));
        hi as f64 / 2f64.powi(64)
    }
}

impl fmt::Display for SampleNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for SampleNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SampleNumber({self})")
    }
}

impl FromStr for SampleNumber {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let bytes = hex::decode(s).map_err(|e| e.to_string())?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| "sample number must be 64 hex digits".to_string())?;
        Ok(SampleNumber(arr))
    }
}

impl Serialize for SampleNumber {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SampleNumber {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Give every card (phantoms included) its sample number. Numbers already
/// present must agree with `seed`.
pub fn assign_sample_numbers(seed: &str, cards: &mut [CardRecord]) -> Result<()> {
    if seed.is_empty() {
        return Err(Error::MissingSeed);
    }
    let mut ids = BTreeSet::new();
    for card in cards.iter() {
        if !ids.insert(card.card_id.as_str()) {
            return Err(Error::DuplicateCard(card.card_id.clone()));
        }
    }
    for card in cards.iter_mut() {
        let u = SampleNumber::derive(seed, &card.card_id);
        match card.sample_number {
            Some(existing) if existing != u => return Err(Error::SeedMismatch),
            _ => card.sample_number = Some(u),
        }
    }
    let mut seen: BTreeMap<SampleNumber, &str> = BTreeMap::new();
    for card in cards.iter() {
        let u = card.sample_number.expect("assigned above");
        if let Some(other) = seen.insert(u, &card.card_id) {
            return Err(Error::SampleNumberCollision(
                other.to_string(),
                card.card_id.clone(),
            ));
        }
    }
    Ok(())
}

/// For each contest, indices of the cards containing it in ascending sample
/// number order.
#[derive(Debug, Clone, Default)]
pub struct ContestIndex {
    streams: BTreeMap<String, Vec<usize>>,
}

impl ContestIndex {
    pub fn build(cards: &[CardRecord]) -> Result<Self> {
        let mut streams: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, card) in cards.iter().enumerate() {
            if card.sample_number.is_none() {
                return Err(Error::MissingSeed);
            }
            for contest in card.votes.keys() {
                streams.entry(contest.clone()).or_default().push(i);
            }
        }
        for stream in streams.values_mut() {
            stream.sort_by_key(|&i| cards[i].sample_number);
        }
        Ok(ContestIndex { streams })
    }

    pub fn stream(&self, contest: &str) -> &[usize] {
        self.streams.get(contest).map_or(&[], Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub round: usize,
    /// Cumulative sample size per contest.
    pub targets: BTreeMap<String, u64>,
    pub fractions: BTreeMap<String, f64>,
    pub thresholds: BTreeMap<String, SampleNumber>,
    pub selected: BTreeSet<String>,
    /// Expected number of distinct non-phantom cards in the cumulative sample.
    pub estimated_total: f64,
}

impl RoundPlan {
    /// Whether contest `c` consumes a card with sample number `u`.
    pub fn covers(&self, contest: &str, u: SampleNumber) -> bool {
        self.targets.get(contest).is_some_and(|&s| s > 0)
            && self.thresholds.get(contest).is_some_and(|t| u <= *t)
    }
}

/// Inclusion probabilities and thresholds for the next round, and the
/// resulting consistent sample.
pub fn plan_round(
    round: usize,
    active: &[&Contest],
    targets: &BTreeMap<String, u64>,
    cards: &[CardRecord],
    index: &ContestIndex,
    prior_selected: &BTreeSet<String>,
) -> Result<RoundPlan> {
    let mut fractions = BTreeMap::new();
    let mut thresholds = BTreeMap::new();
    let mut plan_targets = BTreeMap::new();
    for contest in active {
        let target = targets.get(&contest.id).copied().unwrap_or(0);
        let n = contest.cards_upper_bound;
        let stream = index.stream(&contest.id);
        if target > n || target as usize > stream.len() {
            return Err(Error::TargetTooLarge {
                contest: contest.id.clone(),
                target,
                cards: n.min(stream.len() as u64),
            });
        }
        fractions.insert(contest.id.clone(), target as f64 / n as f64);
        let t = if target == 0 {
            SampleNumber::ZERO
        } else {
            cards[stream[target as usize - 1]]
                .sample_number
                .expect("indexed cards are numbered")
        };
        thresholds.insert(contest.id.clone(), t);
        plan_targets.insert(contest.id.clone(), target);
    }
    let estimated_total = expected_cards(cards, &fractions, prior_selected);
    let mut plan = RoundPlan {
        round,
        targets: plan_targets,
        fractions,
        thresholds,
        selected: prior_selected.clone(),
        estimated_total,
    };
    plan.selected = consistent_sample(cards, &plan);
    Ok(plan)
}

/// Expected number of distinct non-phantom cards in a sample where contest
/// `c` is sampled at rate `fractions[c]`: each card is included with the
/// largest rate among its contests, or with certainty if already selected.
pub fn expected_cards(
    cards: &[CardRecord],
    fractions: &BTreeMap<String, f64>,
    prior_selected: &BTreeSet<String>,
) -> f64 {
    cards
        .iter()
        .filter(|c| !c.phantom)
        .map(|c| {
            if prior_selected.contains(&c.card_id) {
                1.0
            } else {
                c.votes
                    .keys()
                    .filter_map(|k| fractions.get(k))
                    .fold(0.0_f64, |m, f| m.max(*f))
            }
        })
        .sum()
}

/// Cards already in `plan.selected` plus every card under the threshold of
/// an active contest it contains.
pub fn consistent_sample(cards: &[CardRecord], plan: &RoundPlan) -> BTreeSet<String> {
    let mut selected = plan.selected.clone();
    for card in cards {
        let Some(u) = card.sample_number else {
            continue;
        };
        if card.votes.keys().any(|c| plan.covers(c, u)) {
            selected.insert(card.card_id.clone());
        }
    }
    selected
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalEntry {
    pub card_id: String,
    pub container: String,
    pub tabulator: String,
    pub batch: String,
    pub position: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RetrievalList {
    pub retrieve: Vec<RetrievalEntry>,
    pub phantoms: Vec<String>,
    pub not_locatable: Vec<String>,
}

pub const PHANTOM_NOTE: &str = "phantom: no card to retrieve";
pub const NOT_LOCATABLE_NOTE: &str = "not locatable";

impl RetrievalList {
    /// Comma-separated listing with a header row; phantoms and unlocatable
    /// cards follow the retrieval rows in their own sections.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let write = |w: &mut csv::Writer<Vec<u8>>, row: [&str; 7]| {
            w.write_record(row).expect("in-memory write");
        };
        write(
            &mut w,
            [
                "section",
                "card_id",
                "container",
                "tabulator",
                "batch",
                "position",
                "note",
            ],
        );
        for e in &self.retrieve {
            let pos = e.position.to_string();
            write(
                &mut w,
                [
                    "retrieve",
                    &e.card_id,
                    &e.container,
                    &e.tabulator,
                    &e.batch,
                    &pos,
                    "",
                ],
            );
        }
        for id in &self.phantoms {
            write(&mut w, ["phantom", id, "", "", "", "", PHANTOM_NOTE]);
        }
        for id in &self.not_locatable {
            write(
                &mut w,
                ["not_locatable", id, "", "", "", "", NOT_LOCATABLE_NOTE],
            );
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

pub fn retrieval_list(
    selected: &BTreeSet<String>,
    cards: &[CardRecord],
    manifest: Option<&BallotManifest>,
) -> RetrievalList {
    let phantom_ids: BTreeSet<&str> = cards
        .iter()
        .filter(|c| c.phantom)
        .map(|c| c.card_id.as_str())
        .collect();
    let locator = manifest.map(BallotManifest::locator);
    let mut list = RetrievalList::default();
    let mut located: Vec<(CardLocation, String)> = Vec::new();
    for id in selected {
        if phantom_ids.contains(id.as_str()) {
            list.phantoms.push(id.clone());
            continue;
        }
        match locator.as_ref().and_then(|l| l.locate(id)) {
            Some(loc) => located.push((loc, id.clone())),
            None => list.not_locatable.push(id.clone()),
        }
    }
    located.sort();
    list.retrieve = located
        .into_iter()
        .map(|(loc, card_id)| RetrievalEntry {
            card_id,
            container: loc.container,
            tabulator: loc.tabulator,
            batch: loc.batch,
            position: loc.position,
        })
        .collect();
    list
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ContestStatus, ManifestEntry, SocialChoice};

    fn contest(id: &str, n: u64) -> Contest {
        Contest {
            id: id.into(),
            name: id.into(),
            social_choice: SocialChoice::Plurality,
            candidates: vec!["A".into(), "B".into()],
            reported_winners: vec!["A".into()],
            cards_upper_bound: n,
            risk_limit: 0.05,
            status: ContestStatus::Active,
        }
    }

    fn cards_for(contests: &[&str], n: usize, prefix: &str) -> Vec<CardRecord> {
        (0..n)
            .map(|i| {
                let mut c = CardRecord::new(format!("{prefix}-{}", i + 1));
                for k in contests {
                    c = c.with_votes(k, &["A"]);
                }
                c
            })
            .collect()
    }

    #[test]
    fn numbers_are_deterministic_and_seeded() {
        let mut a = cards_for(&["c"], 100, "x");
        let mut b = a.clone();
        let mut c = a.clone();
        assign_sample_numbers("12345", &mut a).unwrap();
        assign_sample_numbers("12345", &mut b).unwrap();
        assign_sample_numbers("54321", &mut c).unwrap();
        assert_eq!(a, b);
        assert!(a
            .iter()
            .zip(&c)
            .any(|(x, y)| x.sample_number != y.sample_number));
    }

    #[test]
    fn known_sample_number() {
        // sha256("seed:card-1")
        let u = SampleNumber::derive("seed", "card-1");
        let mut h = Sha256::new();
        h.update(b"seed:card-1");
        assert_eq!(u.0, <[u8; 32]>::from(h.finalize()));
        assert_eq!(u.to_string().parse::<SampleNumber>().unwrap(), u);
    }

    #[test]
    fn assignment_rejects_duplicates_and_reseeding() {
        let mut cards = cards_for(&["c"], 2, "x");
        cards[1].card_id = cards[0].card_id.clone();
        assert!(matches!(
            assign_sample_numbers("s", &mut cards),
            Err(Error::DuplicateCard(_))
        ));
        let mut cards = cards_for(&["c"], 2, "x");
        assign_sample_numbers("s", &mut cards).unwrap();
        assert!(matches!(
            assign_sample_numbers("t", &mut cards),
            Err(Error::SeedMismatch)
        ));
        assign_sample_numbers("s", &mut cards).unwrap();
    }

    #[test]
    fn top_bits_look_uniform() {
        // Kolmogorov-Smirnov on 10,000 numbers at significance 1e-6.
        let mut xs: Vec<f64> = (0..10_000)
            .map(|i| {
                SampleNumber::derive("uniformity", &format!("card-{i}")).high_u32() as f64
                    / 2f64.powi(32)
            })
            .collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
            .fold(0.0, f64::max);
        let critical = ((2.0f64 / 1e-6).ln() / (2.0 * n)).sqrt();
        assert!(d < critical, "D = {d}, critical {critical}");
    }

    fn numbered(mut cards: Vec<CardRecord>, seed: &str) -> Vec<CardRecord> {
        assign_sample_numbers(seed, &mut cards).unwrap();
        cards
    }

    #[test]
    fn single_contest_plan() {
        let cards = numbered(cards_for(&["c"], 100, "x"), "s");
        let c = contest("c", 100);
        let idx = ContestIndex::build(&cards).unwrap();
        let targets = BTreeMap::from([("c".to_string(), 5)]);
        let plan = plan_round(1, &[&c], &targets, &cards, &idx, &BTreeSet::new()).unwrap();
        assert!((plan.estimated_total - 5.0).abs() < 1e-9);
        assert_eq!(plan.selected.len(), 5);
        let under = cards
            .iter()
            .filter(|x| x.sample_number.unwrap() <= plan.thresholds["c"])
            .count();
        assert_eq!(under, 5);
    }

    #[test]
    fn disjoint_contests_add() {
        let mut cards = cards_for(&["a"], 100, "x");
        cards.extend(cards_for(&["b"], 200, "y"));
        let cards = numbered(cards, "s");
        let (a, b) = (contest("a", 100), contest("b", 200));
        let idx = ContestIndex::build(&cards).unwrap();
        let targets = BTreeMap::from([("a".to_string(), 7), ("b".to_string(), 11)]);
        let plan = plan_round(1, &[&a, &b], &targets, &cards, &idx, &BTreeSet::new()).unwrap();
        assert!((plan.estimated_total - 18.0).abs() < 1e-9);
        assert_eq!(plan.selected.len(), 18);
    }

    #[test]
    fn overlapping_contests_take_max_probability() {
        let cards = numbered(cards_for(&["a", "b"], 1000, "x"), "s");
        let (a, b) = (contest("a", 1000), contest("b", 1000));
        let idx = ContestIndex::build(&cards).unwrap();
        let targets = BTreeMap::from([("a".to_string(), 100), ("b".to_string(), 50)]);
        let plan = plan_round(1, &[&a, &b], &targets, &cards, &idx, &BTreeSet::new()).unwrap();
        assert!((plan.estimated_total - 100.0).abs() < 1e-9);
        // Same card set, so b's 50 are a subset of a's 100.
        assert_eq!(plan.selected.len(), 100);
    }

    #[test]
    fn target_above_population_rejected() {
        let cards = numbered(cards_for(&["c"], 10, "x"), "s");
        let c = contest("c", 10);
        let idx = ContestIndex::build(&cards).unwrap();
        let targets = BTreeMap::from([("c".to_string(), 11)]);
        assert!(matches!(
            plan_round(1, &[&c], &targets, &cards, &idx, &BTreeSet::new()),
            Err(Error::TargetTooLarge { .. })
        ));
    }

    #[test]
    fn full_target_selects_everything_zero_selects_nothing() {
        let cards = numbered(cards_for(&["c"], 30, "x"), "s");
        let c = contest("c", 30);
        let idx = ContestIndex::build(&cards).unwrap();
        let all = BTreeMap::from([("c".to_string(), 30)]);
        let plan = plan_round(1, &[&c], &all, &cards, &idx, &BTreeSet::new()).unwrap();
        assert_eq!(plan.selected.len(), 30);
        let max = cards
            .iter()
            .map(|x| x.sample_number.unwrap())
            .max()
            .unwrap();
        assert_eq!(plan.thresholds["c"], max);

        let none = BTreeMap::from([("c".to_string(), 0)]);
        let plan = plan_round(1, &[&c], &none, &cards, &idx, &BTreeSet::new()).unwrap();
        assert!(plan.selected.is_empty());
    }

    #[test]
    fn growing_target_is_superset() {
        let cards = numbered(cards_for(&["c"], 200, "x"), "grow");
        let c = contest("c", 200);
        let idx = ContestIndex::build(&cards).unwrap();
        let small = plan_round(
            1,
            &[&c],
            &BTreeMap::from([("c".into(), 5)]),
            &cards,
            &idx,
            &BTreeSet::new(),
        )
        .unwrap();
        let big = plan_round(
            1,
            &[&c],
            &BTreeMap::from([("c".into(), 8)]),
            &cards,
            &idx,
            &BTreeSet::new(),
        )
        .unwrap();
        assert!(small.selected.is_subset(&big.selected));
        assert_eq!(big.selected.len(), 8);
    }

    #[test]
    fn shared_card_counts_only_under_own_threshold() {
        // d's small target selects few cards; c's cards swept in by d only
        // count for c when under t_c.
        let cards = numbered(cards_for(&["c", "d"], 50, "x"), "sweep");
        let (c, d) = (contest("c", 50), contest("d", 50));
        let idx = ContestIndex::build(&cards).unwrap();
        let targets = BTreeMap::from([("c".to_string(), 3), ("d".to_string(), 10)]);
        let plan = plan_round(1, &[&c, &d], &targets, &cards, &idx, &BTreeSet::new()).unwrap();
        let selected: Vec<&CardRecord> = cards
            .iter()
            .filter(|x| plan.selected.contains(&x.card_id))
            .collect();
        assert_eq!(selected.len(), 10);
        let for_c = selected
            .iter()
            .filter(|x| plan.covers("c", x.sample_number.unwrap()))
            .count();
        assert_eq!(for_c, 3);
    }

    #[test]
    fn prior_selection_has_probability_one() {
        let cards = numbered(cards_for(&["c"], 100, "x"), "s");
        let c = contest("c", 100);
        let idx = ContestIndex::build(&cards).unwrap();
        let prior: BTreeSet<String> = ["x-1", "x-2"].iter().map(|s| s.to_string()).collect();
        let targets = BTreeMap::from([("c".to_string(), 10)]);
        let plan = plan_round(2, &[&c], &targets, &cards, &idx, &prior).unwrap();
        assert!((plan.estimated_total - (2.0 + 98.0 * 0.1)).abs() < 1e-9);
        assert!(prior.is_subset(&plan.selected));
    }

    #[test]
    fn retrieval_sections() {
        let manifest = BallotManifest::new(vec![
            ManifestEntry {
                container: "box-2".into(),
                tabulator: "t1".into(),
                batch: "b2".into(),
                card_count: 10,
                id_prefix: "t1-b2".into(),
            },
            ManifestEntry {
                container: "box-1".into(),
                tabulator: "t1".into(),
                batch: "b1".into(),
                card_count: 10,
                id_prefix: "t1-b1".into(),
            },
        ]);
        let cards = vec![
            CardRecord::new("t1-b2-3").with_votes("c", &["A"]),
            CardRecord::new("t1-b1-7").with_votes("c", &["A"]),
            CardRecord::new("t1-b1-2").with_votes("c", &["A"]),
            CardRecord::phantom_for("c", 1),
            CardRecord::new("lost-1").with_votes("c", &["A"]),
        ];
        let selected: BTreeSet<String> = cards.iter().map(|c| c.card_id.clone()).collect();
        let list = retrieval_list(&selected, &cards, Some(&manifest));
        let order: Vec<&str> = list.retrieve.iter().map(|e| e.card_id.as_str()).collect();
        assert_eq!(order, vec!["t1-b1-2", "t1-b1-7", "t1-b2-3"]);
        assert_eq!(list.phantoms, vec!["phantom-c-1"]);
        assert_eq!(list.not_locatable, vec!["lost-1"]);
        let csv = list.to_csv();
        assert!(csv.starts_with("section,card_id,container,tabulator,batch,position,note\n"));
        assert!(csv.contains("phantom,phantom-c-1,,,,,phantom: no card to retrieve\n"));
        assert!(csv.contains("retrieve,t1-b1-2,box-1,t1,b1,2,\n"));
    }
}
