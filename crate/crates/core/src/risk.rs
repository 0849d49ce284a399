//! ALPHA test supermartingale for sampling without replacement, the
//! optimal-comparison choice of alternative, and sample-size projection.
//!
//! The null hypothesis for each assertion is that the population mean of the
//! (overstatement) assorter is at most 1/2. After `j` draws with running sum
//! `S`, the null mean of the remaining values is `µ = (N/2 - S) / (N - j)`,
//! and each draw `x` multiplies the martingale by
//!
//! ```text
//!     (x·η/µ + (u - x)(u - η)/(u - µ)) / u
//! ```
//!
//! The reciprocal of the running maximum is an anytime-valid p-value.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::assertions::{
    assort, overstatement, overstatement_assorter, Assertion, AssertionStatus,
};
use crate::error::{Error, Result};
use crate::model::{AuditMode, CardRecord, RiskFunction};

/// Offset keeping the alternative strictly above the null mean.
pub const ETA_OFFSET: f64 = 1.0 / (1u64 << 20) as f64;

/// Null means within this distance of zero are treated as exactly zero.
const NULL_MEAN_TOL: f64 = 1e-9;

const GOLDEN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaState {
    pub population: u64,
    pub upper_bound: f64,
    pub drawn: u64,
    pub running_sum: f64,
    #[serde(with = "extended")]
    pub t: f64,
    #[serde(with = "extended")]
    pub t_max: f64,
    pub eta: f64,
    pub mode: AuditMode,
}

impl AlphaState {
    pub fn new(population: u64, upper_bound: f64, eta: f64, mode: AuditMode) -> Self {
        AlphaState {
            population,
            upper_bound,
            drawn: 0,
            running_sum: 0.0,
            t: 1.0,
            t_max: 1.0,
            eta,
            mode,
        }
    }

    /// Mean of the undrawn values if the population mean were exactly 1/2.
    pub fn null_mean(&self) -> f64 {
        let remaining = (self.population - self.drawn) as f64;
        (self.population as f64 / 2.0 - self.running_sum) / remaining
    }

    pub fn is_exhausted(&self) -> bool {
        self.drawn >= self.population
    }

    /// Advance by one observation.
    pub fn step(&mut self, x: f64) -> Result<()> {
        let u = self.upper_bound;
        if !(0.0..=u * (1.0 + 1e-12)).contains(&x) {
            return Err(Error::ValueOutOfRange { value: x, bound: u });
        }
        if self.is_exhausted() {
            return Err(Error::PopulationExhausted {
                drawn: self.drawn,
                population: self.population,
            });
        }
        let mu = self.null_mean();
        if self.t == 0.0 || self.t.is_infinite() {
            // Frozen: the null can no longer be rejected, or already has been.
        } else if mu < -NULL_MEAN_TOL {
            self.t = f64::INFINITY;
        } else if mu <= NULL_MEAN_TOL {
            // Under the null every remaining value must be zero.
            if x > NULL_MEAN_TOL {
                self.t = f64::INFINITY;
            }
        } else if mu >= u {
            self.t = 0.0;
        } else {
            let eta = self.eta.max(mu + ETA_OFFSET).min(u);
            self.t *= (x * eta / mu + (u - x) * (u - eta) / (u - mu)) / u;
        }
        self.running_sum += x;
        self.drawn += 1;
        self.t_max = self.t_max.max(self.t);
        Ok(())
    }

    pub fn p_value(&self) -> f64 {
        (1.0 / self.t_max).min(1.0)
    }
}

/// Functional form of [`AlphaState::step`].
pub fn alpha_step(state: &AlphaState, x: f64) -> Result<AlphaState> {
    let mut next = state.clone();
    next.step(x)?;
    Ok(next)
}

pub fn p_value(state: &AlphaState) -> f64 {
    state.p_value()
}

/// Serde helper: non-finite floats are written as strings.
mod extended {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("nan")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Raw::Str(s) => Err(de::Error::custom(format!("unexpected value {s}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ErrorPlacement {
    /// First draw carries an error, then one every `⌊1/rate⌋` draws.
    #[default]
    FirstThenEquispaced,
    None,
}

/// Overstatement rates used to project sample sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    #[serde(default)]
    pub p1: f64,
    #[serde(default)]
    pub p2: f64,
    #[serde(default)]
    pub placement: ErrorPlacement,
}

impl Default for ErrorModel {
    fn default() -> Self {
        ErrorModel::ZERO
    }
}

impl ErrorModel {
    pub const ZERO: ErrorModel = ErrorModel {
        p1: 0.0,
        p2: 0.0,
        placement: ErrorPlacement::FirstThenEquispaced,
    };

    pub fn one_vote(rate: f64) -> Self {
        ErrorModel {
            p1: rate,
            ..ErrorModel::ZERO
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.p1 >= 0.0 && self.p2 >= 0.0 && self.p1 + self.p2 <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "error rates p1={}, p2={} must be nonnegative and sum to at most 1",
                self.p1, self.p2
            )))
        }
    }

    fn gap(rate: f64) -> Option<u64> {
        (rate > 0.0).then(|| ((1.0 / rate).floor() as u64).max(1))
    }

    /// Which kind of draw lands at 1-based position `k`: 0 none, 1 one-vote,
    /// 2 two-vote overstatement.
    pub fn error_at(&self, k: u64) -> u8 {
        if self.placement == ErrorPlacement::None {
            return 0;
        }
        let hit = |rate: f64| Self::gap(rate).is_some_and(|g| (k - 1).is_multiple_of(g));
        if hit(self.p2) {
            2
        } else if hit(self.p1) {
            1
        } else {
            0
        }
    }
}

/// Expected log growth of one multiplier with alternative `eta`.
fn log_growth(eta: f64, outcomes: &[(f64, f64)], upper: f64, mu: f64) -> f64 {
    outcomes
        .iter()
        .filter(|(q, _)| *q > 0.0)
        .map(|(q, b)| {
            let m = (b * eta / mu + (upper - b) * (upper - eta) / (upper - mu)) / upper;
            if m <= 0.0 {
                f64::NEG_INFINITY
            } else {
                q * m.ln()
            }
        })
        .sum()
}

/// Alternative mean maximising expected log growth of the comparison
/// martingale when one- and two-vote overstatements occur at rates `p1`, `p2`.
pub fn optimal_eta(margin: f64, upper: f64, p1: f64, p2: f64) -> f64 {
    let bound = 2.0 * upper / (2.0 * upper - margin);
    if margin <= 0.0 {
        return bound;
    }
    let b = |omega: f64| (1.0 - omega / upper) / (2.0 - margin / upper);
    let outcomes = [
        (1.0 - p1 - p2, b(0.0)),
        (p1, b(upper / 2.0)),
        (p2, b(upper)),
    ];
    let mu = 0.5;
    let g = |eta: f64| log_growth(eta, &outcomes, bound, mu);

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (mu + ETA_OFFSET, bound);
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut gc, mut gd) = (g(c), g(d));
    while hi - lo > GOLDEN_TOL {
        if gc < gd {
            lo = c;
            c = d;
            gc = gd;
            d = lo + inv_phi * (hi - lo);
            gd = g(d);
        } else {
            hi = d;
            d = c;
            gd = gc;
            c = hi - inv_phi * (hi - lo);
            gc = g(c);
        }
    }
    let interior = (lo + hi) / 2.0;
    // The maximiser sits on the boundary when no outcome drives the
    // multiplier to zero.
    if g(bound) >= g(interior) {
        bound
    } else {
        interior
    }
}

/// Alternative for an assertion under the configured risk function.
pub fn eta_for(risk: &RiskFunction, assertion: &Assertion, mode: AuditMode) -> f64 {
    match mode {
        AuditMode::Comparison => match *risk {
            RiskFunction::AlphaOptimalComparison { p1, p2 } => {
                optimal_eta(assertion.margin, assertion.spec.upper_bound, p1, p2)
            }
            RiskFunction::AlphaFixedEta { eta } => eta.min(assertion.overstatement_bound),
        },
        AuditMode::Polling => match *risk {
            RiskFunction::AlphaFixedEta { eta } => eta.min(assertion.spec.upper_bound),
            // The reported assorter mean is the natural polling alternative.
            RiskFunction::AlphaOptimalComparison { .. } => assertion.reported_mean,
        },
    }
}

/// Fresh tracker for an assertion whose margin has been set.
pub fn tracker_for(
    assertion: &Assertion,
    population: u64,
    risk: &RiskFunction,
    mode: AuditMode,
) -> AlphaState {
    let upper = match mode {
        AuditMode::Comparison => assertion.overstatement_bound,
        AuditMode::Polling => assertion.spec.upper_bound,
    };
    AlphaState::new(population, upper, eta_for(risk, assertion, mode), mode)
}

/// Draws needed from `state` before the p-value reaches `alpha`, feeding
/// `values` in order. Returns the remaining population if it never does.
pub fn project_draws(state: &AlphaState, alpha: f64, values: impl Iterator<Item = f64>) -> u64 {
    let mut s = state.clone();
    let start = s.drawn;
    if s.p_value() <= alpha {
        return 0;
    }
    for x in values {
        if s.is_exhausted() || s.step(x).is_err() {
            break;
        }
        if s.p_value() <= alpha {
            return s.drawn - start;
        }
    }
    s.population - start
}

/// Deterministic stream of overstatement-assorter values for `model`,
/// starting at 1-based position `first`.
pub fn comparison_values(
    model: ErrorModel,
    margin: f64,
    upper: f64,
    first: u64,
) -> impl Iterator<Item = f64> {
    let b = move |omega: f64| (1.0 - omega / upper) / (2.0 - margin / upper);
    let values = [b(0.0), b(upper / 2.0), b(upper)];
    (first..).map(move |k| values[model.error_at(k) as usize])
}

/// Cards to draw so that an assertion with margin `margin` and assorter bound
/// `upper` in a population of `population` cards reaches risk `alpha` under
/// the deterministic error sequence of `model`.
pub fn estimate_sample_size(
    population: u64,
    margin: f64,
    upper: f64,
    alpha: f64,
    model: ErrorModel,
    eta: f64,
) -> u64 {
    if margin <= 0.0 {
        return population;
    }
    let bound = 2.0 * upper / (2.0 * upper - margin);
    let state = AlphaState::new(population, bound, eta, AuditMode::Comparison);
    project_draws(&state, alpha, comparison_values(model, margin, upper, 1))
}

/// Manual record for a sampled card; `None` when the card cannot be found.
pub type MvrRef<'a> = Option<&'a CardRecord>;

/// Feed `(cvr, mvr)` pairs to the assertion's tracker in order and return
/// the p-value after each draw. The assertion is confirmed once `p ≤ alpha`;
/// further pairs are then ignored.
pub fn measure_risk(
    assertion: &mut Assertion,
    alpha: f64,
    pairs: &[(&CardRecord, MvrRef<'_>)],
) -> Result<Vec<f64>> {
    let mut seen = BTreeSet::new();
    for (cvr, _) in pairs {
        if !seen.insert(cvr.card_id.as_str()) {
            return Err(Error::DuplicateCard(cvr.card_id.clone()));
        }
    }
    let mut tracker = assertion
        .tracker
        .take()
        .ok_or_else(|| Error::InvalidConfig("assertion tracker not initialised".into()))?;
    let result = feed(assertion, &mut tracker, alpha, pairs);
    assertion.tracker = Some(tracker);
    result
}

fn feed(
    assertion: &mut Assertion,
    tracker: &mut AlphaState,
    alpha: f64,
    pairs: &[(&CardRecord, MvrRef<'_>)],
) -> Result<Vec<f64>> {
    let contest = assertion.contest_id.clone();
    let mut trajectory = Vec::with_capacity(pairs.len());
    for (cvr, mvr) in pairs {
        if assertion.status != AssertionStatus::Open {
            break;
        }
        let x = match tracker.mode {
            AuditMode::Comparison => {
                let o = overstatement(&assertion.spec, &contest, cvr, *mvr);
                assertion
                    .discrepancies
                    .record(o.omega, assertion.spec.upper_bound);
                if o.style_mismatch {
                    assertion.discrepancies.style_mismatches += 1;
                }
                overstatement_assorter(assertion, o.omega)
            }
            AuditMode::Polling => match mvr {
                Some(m) if !cvr.phantom => assort(&assertion.spec, &contest, m),
                _ => 0.0,
            },
        };
        // Rounding can push B a hair past its bound.
        tracker.step(x.clamp(0.0, tracker.upper_bound))?;
        let p = tracker.p_value();
        trajectory.push(p);
        if p <= alpha {
            assertion.status = AssertionStatus::Confirmed;
        }
    }
    Ok(trajectory)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assertions::{set_margin, AssorterSpec};

    /// Brute-force maximiser over a uniform grid.
    fn grid_eta(margin: f64, upper: f64, p1: f64, p2: f64, points: usize) -> f64 {
        let bound = 2.0 * upper / (2.0 * upper - margin);
        let b = |omega: f64| (1.0 - omega / upper) / (2.0 - margin / upper);
        let outcomes = [
            (1.0 - p1 - p2, b(0.0)),
            (p1, b(upper / 2.0)),
            (p2, b(upper)),
        ];
        let lo = 0.5 + ETA_OFFSET;
        let mut best = (f64::NEG_INFINITY, lo);
        for i in 0..=points {
            let eta = lo + (bound - lo) * i as f64 / points as f64;
            let g = log_growth(eta, &outcomes, bound, 0.5);
            if g > best.0 {
                best = (g, eta);
            }
        }
        best.1
    }

    #[test]
    fn null_mean_just_below_bound_does_not_panic() {
        let mut s = AlphaState::new(2, 1.0, 0.9, AuditMode::Comparison);
        s.step(1e-7).unwrap();
        assert!(1.0 - s.null_mean() < ETA_OFFSET);
        s.step(1.0).unwrap();
        assert!(s.t.is_finite() && s.t > 0.0);
    }

    #[test]
    fn eta_is_boundary_without_errors() {
        let eta = optimal_eta(0.5, 1.0, 0.0, 0.0);
        assert!((eta - 4.0 / 3.0).abs() < 1e-12);
        assert!((grid_eta(0.5, 1.0, 0.0, 0.0, 100_000) - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn eta_is_interior_with_two_vote_errors() {
        let eta = optimal_eta(0.5, 1.0, 0.0, 1e-4);
        let oracle = grid_eta(0.5, 1.0, 0.0, 1e-4, 100_000);
        assert!(eta < 4.0 / 3.0 - 1e-6);
        assert!((eta - oracle).abs() < 1e-5, "{eta} vs {oracle}");
    }

    #[test]
    fn eta_matches_grid_for_mixed_rates() {
        for &(v, p1, p2) in &[(0.01, 1e-3, 1e-4), (0.1, 0.01, 0.001), (0.3, 0.05, 0.0)] {
            let eta = optimal_eta(v, 1.0, p1, p2);
            let oracle = grid_eta(v, 1.0, p1, p2, 100_000);
            let step = (2.0 / (2.0 - v) - 0.5) / 100_000.0;
            assert!((eta - oracle).abs() <= step, "v={v}: {eta} vs {oracle}");
        }
    }

    #[test]
    fn zero_margin_never_moves() {
        let eta = optimal_eta(0.0, 1.0, 0.0, 1e-4);
        assert_eq!(eta, 1.0);
        let mut s = AlphaState::new(100, 1.0, eta, AuditMode::Comparison);
        for _ in 0..100 {
            s.step(0.5).unwrap();
        }
        assert_eq!(s.p_value(), 1.0);
    }

    #[test]
    fn first_step_doubles() {
        let s = AlphaState::new(10, 1.0, 1.0, AuditMode::Comparison);
        let s = alpha_step(&s, 1.0).unwrap();
        assert!((s.t - 2.0).abs() < 1e-12);
        assert!((s.p_value() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn eta_at_null_mean_is_neutral() {
        let mut s = AlphaState::new(10, 1.0, 0.5 + ETA_OFFSET, AuditMode::Comparison);
        s.step(0.3).unwrap();
        let before = s.t;
        let mu = s.null_mean();
        s.eta = mu;
        s.step(0.9).unwrap();
        // eta is clamped to mu + ETA_OFFSET, so the change is O(ETA_OFFSET).
        assert!((s.t / before - 1.0).abs() < 1e-5);
    }

    #[test]
    fn exhausted_null_rejects_on_positive_draw() {
        let mut s = AlphaState::new(4, 1.0, 1.0, AuditMode::Comparison);
        s.step(1.0).unwrap();
        s.step(1.0).unwrap();
        assert!(s.null_mean().abs() < 1e-15);
        let mut pos = s.clone();
        pos.step(1.0).unwrap();
        assert!(pos.t.is_infinite());
        assert_eq!(pos.p_value(), 0.0);
        let before = s.t;
        s.step(0.0).unwrap();
        assert_eq!(s.t, before);
    }

    #[test]
    fn negative_null_mean_rejects() {
        let mut s = AlphaState::new(3, 1.0, 1.0, AuditMode::Comparison);
        s.step(1.0).unwrap();
        s.step(1.0).unwrap();
        s.step(0.0).unwrap();
        assert!(s.t.is_infinite());
    }

    #[test]
    fn unreachable_null_freezes_at_zero() {
        let mut s = AlphaState::new(4, 1.0, 1.0, AuditMode::Comparison);
        s.step(0.0).unwrap();
        s.step(0.0).unwrap();
        // µ = 2/2 = 1 = u
        s.step(1.0).unwrap();
        assert_eq!(s.t, 0.0);
        s.step(1.0).unwrap();
        assert_eq!(s.t, 0.0);
        assert_eq!(s.p_value(), 1.0);
    }

    #[test]
    fn rejects_out_of_range_and_exhaustion() {
        let mut s = AlphaState::new(1, 1.0, 1.0, AuditMode::Comparison);
        assert!(matches!(s.step(1.5), Err(Error::ValueOutOfRange { .. })));
        assert!(matches!(s.step(-0.1), Err(Error::ValueOutOfRange { .. })));
        s.step(0.5).unwrap();
        assert!(matches!(
            s.step(0.5),
            Err(Error::PopulationExhausted { .. })
        ));
    }

    #[test]
    fn p_value_from_running_max() {
        let mut s = AlphaState::new(10, 1.0, 1.0, AuditMode::Comparison);
        assert_eq!(s.p_value(), 1.0);
        s.t_max = 20.0;
        assert!((s.p_value() - 0.05).abs() < 1e-15);
        s.t_max = 0.5;
        assert_eq!(s.p_value(), 1.0);
    }

    #[test]
    fn state_round_trips_infinity() {
        let mut s = AlphaState::new(4, 1.0, 1.0, AuditMode::Comparison);
        s.t = f64::INFINITY;
        s.t_max = f64::INFINITY;
        let json = serde_json::to_string(&s).unwrap();
        assert!(json.contains("\"inf\""));
        let back: AlphaState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn error_positions() {
        let m = ErrorModel::one_vote(1e-3);
        let hits: Vec<u64> = (1..=3001).filter(|&k| m.error_at(k) == 1).collect();
        assert_eq!(hits, vec![1, 1001, 2001, 3001]);
        assert_eq!(ErrorModel::ZERO.error_at(1), 0);
        let none = ErrorModel {
            placement: ErrorPlacement::None,
            ..m
        };
        assert_eq!(none.error_at(1), 0);
    }

    #[test]
    fn tied_contest_needs_full_count() {
        let eta = optimal_eta(0.0, 1.0, 0.0, 1e-4);
        assert_eq!(
            estimate_sample_size(4164, 0.0, 1.0, 0.05, ErrorModel::ZERO, eta),
            4164
        );
    }

    #[test]
    fn estimate_is_monotone_in_margin_and_alpha() {
        let n = 20_000;
        let mut prev = u64::MAX;
        for v in [0.005, 0.01, 0.02, 0.05, 0.1, 0.3] {
            let eta = optimal_eta(v, 1.0, 0.0, 1e-4);
            let s = estimate_sample_size(n, v, 1.0, 0.05, ErrorModel::ZERO, eta);
            assert!(s <= prev, "v={v}: {s} > {prev}");
            prev = s;
        }
        let eta = optimal_eta(0.02, 1.0, 0.0, 1e-4);
        let loose = estimate_sample_size(n, 0.02, 1.0, 0.10, ErrorModel::ZERO, eta);
        let strict = estimate_sample_size(n, 0.02, 1.0, 0.01, ErrorModel::ZERO, eta);
        assert!(loose <= strict);
    }

    #[test]
    fn error_free_sample_of_estimated_size_confirms() {
        let mut cards = Vec::new();
        for i in 0..600 {
            cards.push(CardRecord::new(format!("w{i}")).with_votes("c", &["w"]));
        }
        for i in 0..400 {
            cards.push(CardRecord::new(format!("l{i}")).with_votes("c", &["l"]));
        }
        let mut a = Assertion::new("c", AssorterSpec::plurality("w", "l", 1));
        set_margin(&mut a, &cards);
        let risk = RiskFunction::default();
        a.tracker = Some(tracker_for(&a, 1000, &risk, AuditMode::Comparison));
        let eta = a.tracker.as_ref().unwrap().eta;
        let s = estimate_sample_size(1000, a.margin, 1.0, 0.05, ErrorModel::ZERO, eta) as usize;
        // Draw order is irrelevant when every overstatement is zero.
        let pairs: Vec<_> = cards.iter().take(s).map(|c| (c, Some(c))).collect();
        let traj = measure_risk(&mut a, 0.05, &pairs).unwrap();
        assert_eq!(traj.len(), s);
        assert!(*traj.last().unwrap() <= 0.05);
        assert!(traj[s - 2] > 0.05);
        assert_eq!(a.status, AssertionStatus::Confirmed);
    }

    #[test]
    fn two_vote_overstatement_pushes_p_up() {
        let mut a = Assertion::new("c", AssorterSpec::plurality("w", "l", 1));
        a.margin = 0.004;
        a.overstatement_bound = 2.0 / (2.0 - 0.004);
        let risk = RiskFunction::default();
        a.tracker = Some(tracker_for(&a, 100_000, &risk, AuditMode::Comparison));
        let w = CardRecord::new("a").with_votes("c", &["w"]);
        let w2 = CardRecord::new("b").with_votes("c", &["w"]);
        let l = CardRecord::new("b").with_votes("c", &["l"]);
        let traj = measure_risk(&mut a, 0.05, &[(&w, Some(&w))]).unwrap();
        let t_before = a.tracker.as_ref().unwrap().t;
        measure_risk(&mut a, 0.05, &[(&w2, Some(&l))]).unwrap();
        let tr = a.tracker.as_ref().unwrap();
        assert!(tr.t < t_before * 0.5);
        assert!(traj[0] < 1.0);
        assert_eq!(a.discrepancies.two_vote_over, 1);
    }

    #[test]
    fn polling_all_winner_votes_decrease_p() {
        let mut a = Assertion::new("c", AssorterSpec::plurality("w", "l", 1));
        a.margin = 0.2;
        a.reported_mean = 0.6;
        a.overstatement_bound = 2.0 / 1.8;
        a.tracker = Some(tracker_for(
            &a,
            100,
            &RiskFunction::default(),
            AuditMode::Polling,
        ));
        let cards: Vec<_> = (0..10)
            .map(|i| CardRecord::new(format!("{i}")).with_votes("c", &["w"]))
            .collect();
        let pairs: Vec<_> = cards.iter().map(|c| (c, Some(c))).collect();
        let traj = measure_risk(&mut a, 1e-9, &pairs).unwrap();
        assert!(traj.windows(2).all(|w| w[1] < w[0]), "{traj:?}");
    }

    #[test]
    fn duplicate_stream_ids_rejected() {
        let mut a = Assertion::new("c", AssorterSpec::plurality("w", "l", 1));
        a.margin = 0.2;
        a.overstatement_bound = 2.0 / 1.8;
        a.tracker = Some(tracker_for(
            &a,
            100,
            &RiskFunction::default(),
            AuditMode::Comparison,
        ));
        let c = CardRecord::new("x").with_votes("c", &["w"]);
        assert!(matches!(
            measure_risk(&mut a, 0.05, &[(&c, Some(&c)), (&c, Some(&c))]),
            Err(Error::DuplicateCard(_))
        ));
    }
}
