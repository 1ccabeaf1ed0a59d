//! Conflict-round injection with a unique, score-derived ground truth.
//!
//! Every round starts from an anchor regular event labelled accepted or
//! declined. Competitors are fresh events built from a meeting template and
//! mutated by conflict reasons, each (principle, reason) pairing chosen so
//! that the reason makes the principle fire. The ground-truth accepted event
//! is the strict `principle_score` maximum of the round; the truth ranking
//! sorts by score descending with ties broken by event id.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, FixedOffset};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar_gen::{instantiate_event, Calendar, Event, WEEKS_PER_YEAR};
use crate::org_schema::{apply_transform, principle_score, DecisionContext, MeetingTemplate, OrgChart, UserProfile};

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ConflictError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("N exceeds available rounds: requested {requested}, calendar supports {available}")]
    TooManyRounds { requested: usize, available: usize },
    #[error("user {user_id}: insufficient events ({available} available, {needed} needed)")]
    InsufficientEvents {
        user_id: String,
        needed: usize,
        available: usize,
    },
    #[error("user {user_id}: only {available} weeks can host an accepted anchor, {needed} needed")]
    TooFewStrongEvents {
        user_id: String,
        needed: usize,
        available: usize,
    },
    #[error("user {user_id}: week {week} has no unused event to anchor a round")]
    WeekExhausted { user_id: String, week: u32 },
    #[error(
        "user {user_id}: cannot separate scores around anchor {anchor_id} after bounded retries \
         (last pair: principle {principle_id:?}, reason {reason_id:?})"
    )]
    Separation {
        user_id: String,
        anchor_id: String,
        principle_id: Option<String>,
        reason_id: Option<String>,
    },
    #[error("no calendar for user {0}")]
    MissingCalendar(String),
    #[error("dataset and truth do not match: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorLabel {
    AcceptedAnchor,
    DeclinedAnchor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictParams {
    pub n_rounds: usize,
    pub m: usize,
    pub accept_ratio: f64,
    pub rounds_per_week: usize,
    /// Reason applications stacked per generated competitor: 1 gives
    /// single-factor trade-offs, 2+ multi-factor conflicts.
    pub factors: usize,
    pub max_retries: usize,
}

impl Default for ConflictParams {
    fn default() -> Self {
        ConflictParams {
            n_rounds: 104,
            m: 5,
            accept_ratio: 0.5,
            rounds_per_week: 2,
            factors: 1,
            max_retries: 64,
        }
    }
}

impl ConflictParams {
    pub fn validate(&self) -> Result<(), ConflictError> {
        if self.m < 2 {
            return Err(ConflictError::InvalidParams(format!("M must be >= 2, got {}", self.m)));
        }
        if !(self.accept_ratio > 0.0 && self.accept_ratio < 1.0) {
            return Err(ConflictError::InvalidParams(format!(
                "accept_ratio must lie strictly between 0 and 1, got {}",
                self.accept_ratio
            )));
        }
        if self.n_rounds == 0 {
            return Err(ConflictError::InvalidParams("N must be >= 1".into()));
        }
        if self.rounds_per_week == 0 {
            return Err(ConflictError::InvalidParams("rounds_per_week must be >= 1".into()));
        }
        if self.factors == 0 {
            return Err(ConflictError::InvalidParams("factors must be >= 1".into()));
        }
        let available = WEEKS_PER_YEAR as usize * self.rounds_per_week;
        if self.n_rounds > available {
            return Err(ConflictError::TooManyRounds {
                requested: self.n_rounds,
                available,
            });
        }
        Ok(())
    }

    /// Number of Case-A (accepted-anchor) rounds: accept_ratio * N rounded
    /// to nearest.
    pub fn accepted_count(&self) -> usize {
        (self.accept_ratio * self.n_rounds as f64).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeslot {
    pub start: DateTime<FixedOffset>,
    pub end: DateTime<FixedOffset>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventOrigin {
    Anchor,
    AcceptedCompetitor,
    DeclinedCompetitor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrinciplePair {
    pub principle_id: String,
    pub reason_id: String,
}

/// How one event of a round came to be.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventProvenance {
    pub event_id: String,
    pub origin: EventOrigin,
    /// Original calendar event id for the anchor, base template id otherwise.
    pub source: String,
    pub pairs: Vec<PrinciplePair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictRound {
    pub round_id: String,
    pub user_id: String,
    pub week: u32,
    pub timeslot: Timeslot,
    pub events: Vec<Event>,
    pub truth_accept: String,
    pub truth_ranking: Vec<String>,
    pub anchor_label: AnchorLabel,
    pub provenance: Vec<EventProvenance>,
    /// Ground-truth principle score per event id.
    pub scores: BTreeMap<String, f64>,
}

impl ConflictRound {
    pub fn m(&self) -> usize {
        self.events.len()
    }

    pub fn event_ids(&self) -> Vec<&str> {
        self.events.iter().map(|e| e.event_id.as_str()).collect()
    }

    /// Check the structural invariants of a round.
    pub fn check(&self) -> Result<(), String> {
        if self.events.len() < 2 {
            return Err(format!("{}: M must be >= 2", self.round_id));
        }
        let ids: BTreeSet<&str> = self.event_ids().into_iter().collect();
        if ids.len() != self.events.len() {
            return Err(format!("{}: duplicate event ids", self.round_id));
        }
        let ranked: BTreeSet<&str> = self.truth_ranking.iter().map(String::as_str).collect();
        if ranked != ids || self.truth_ranking.len() != ids.len() {
            return Err(format!("{}: truth_ranking is not a permutation of events", self.round_id));
        }
        if self.truth_ranking.first() != Some(&self.truth_accept) {
            return Err(format!("{}: truth_accept is not ranked first", self.round_id));
        }
        for (i, a) in self.events.iter().enumerate() {
            for b in &self.events[i + 1..] {
                if !a.overlaps(b) {
                    return Err(format!("{}: {} and {} do not overlap", self.round_id, a.event_id, b.event_id));
                }
            }
        }
        Ok(())
    }
}

/// Sort ids by score descending, ties by event id ascending.
pub fn rank_by_score(scores: &BTreeMap<String, f64>) -> Vec<String> {
    let mut ids: Vec<(&String, f64)> = scores.iter().map(|(k, v)| (k, *v)).collect();
    ids.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ids.into_iter().map(|(k, _)| k.clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetParams {
    pub n_rounds: usize,
    pub m: usize,
    pub rounds_per_week: usize,
    pub accept_ratio: f64,
    pub factors: usize,
}

impl From<&ConflictParams> for DatasetParams {
    fn from(p: &ConflictParams) -> Self {
        DatasetParams {
            n_rounds: p.n_rounds,
            m: p.m,
            rounds_per_week: p.rounds_per_week,
            accept_ratio: p.accept_ratio,
            factors: p.factors,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictDataset {
    pub org_id: String,
    pub user_id: String,
    pub rounds: Vec<ConflictRound>,
    pub params: DatasetParams,
    pub seed: u64,
}

/// Agent-facing round: events only, no ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicRound {
    pub round_id: String,
    pub user_id: String,
    pub week: u32,
    pub timeslot: Timeslot,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicDataset {
    pub format_version: u32,
    pub org_id: String,
    pub user_id: String,
    pub params: DatasetParams,
    pub seed: u64,
    pub rounds: Vec<PublicRound>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTruth {
    pub round_id: String,
    pub truth_accept: String,
    pub truth_ranking: Vec<String>,
    pub anchor_label: AnchorLabel,
    pub provenance: Vec<EventProvenance>,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetTruth {
    pub org_id: String,
    pub user_id: String,
    /// Digest of the agent-facing dataset file this truth belongs to.
    pub dataset_digest: String,
    pub rounds: Vec<RoundTruth>,
}

impl ConflictDataset {
    pub fn n(&self) -> usize {
        self.rounds.len()
    }

    /// Digest of the agent-facing half; traces and truth files carry it.
    pub fn public_digest(&self) -> String {
        crate::digest::json_digest(&self.split().0)
    }

    /// Separate the agent-facing dataset from its ground truth. The truth
    /// records the digest of the public half.
    pub fn split(&self) -> (PublicDataset, DatasetTruth) {
        let public = PublicDataset {
            format_version: DATASET_FORMAT_VERSION,
            org_id: self.org_id.clone(),
            user_id: self.user_id.clone(),
            params: self.params,
            seed: self.seed,
            rounds: self
                .rounds
                .iter()
                .map(|r| PublicRound {
                    round_id: r.round_id.clone(),
                    user_id: r.user_id.clone(),
                    week: r.week,
                    timeslot: r.timeslot,
                    events: r.events.clone(),
                })
                .collect(),
        };
        let truth = DatasetTruth {
            org_id: self.org_id.clone(),
            user_id: self.user_id.clone(),
            dataset_digest: crate::digest::json_digest(&public),
            rounds: self
                .rounds
                .iter()
                .map(|r| RoundTruth {
                    round_id: r.round_id.clone(),
                    truth_accept: r.truth_accept.clone(),
                    truth_ranking: r.truth_ranking.clone(),
                    anchor_label: r.anchor_label,
                    provenance: r.provenance.clone(),
                    scores: r.scores.clone(),
                })
                .collect(),
        };
        (public, truth)
    }

    /// Reassemble a dataset; the truth must name the public half's digest.
    pub fn join(public: PublicDataset, truth: DatasetTruth) -> Result<Self, ConflictError> {
        let digest = crate::digest::json_digest(&public);
        if digest != truth.dataset_digest {
            return Err(ConflictError::Mismatch(format!(
                "truth belongs to dataset {} but this dataset is {}",
                truth.dataset_digest, digest
            )));
        }
        if public.user_id != truth.user_id || public.rounds.len() != truth.rounds.len() {
            return Err(ConflictError::Mismatch(format!(
                "dataset {} ({} rounds) vs truth {} ({} rounds)",
                public.user_id,
                public.rounds.len(),
                truth.user_id,
                truth.rounds.len()
            )));
        }
        let rounds = public
            .rounds
            .into_iter()
            .zip(truth.rounds)
            .map(|(p, t)| {
                if p.round_id != t.round_id {
                    return Err(ConflictError::Mismatch(format!("round {} vs {}", p.round_id, t.round_id)));
                }
                Ok(ConflictRound {
                    round_id: p.round_id,
                    user_id: p.user_id,
                    week: p.week,
                    timeslot: p.timeslot,
                    events: p.events,
                    truth_accept: t.truth_accept,
                    truth_ranking: t.truth_ranking,
                    anchor_label: t.anchor_label,
                    provenance: t.provenance,
                    scores: t.scores,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ConflictDataset {
            org_id: public.org_id,
            user_id: public.user_id,
            rounds,
            params: public.params,
            seed: public.seed,
        })
    }

    /// Keep only the first `n` rounds.
    pub fn truncated(&self, n: usize) -> ConflictDataset {
        let mut out = self.clone();
        out.rounds.truncate(n);
        out.params.n_rounds = out.rounds.len();
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Anchor {
    pub event: Event,
    pub label: AnchorLabel,
    pub week: u32,
}

/// Stateless generator bound to one org and its ad-hoc competitor shapes.
pub struct ConflictGenerator<'a> {
    pub org: &'a OrgChart,
    pub adhoc_templates: &'a [MeetingTemplate],
    pub params: ConflictParams,
}

const WINNER_REDRAWS: usize = 8;
const FLOOR_SAMPLES: usize = 4;

#[derive(Clone)]
struct Built {
    event: Event,
    source: String,
    pairs: Vec<PrinciplePair>,
    score: f64,
}

impl<'a> ConflictGenerator<'a> {
    pub fn new(org: &'a OrgChart, adhoc_templates: &'a [MeetingTemplate], params: ConflictParams) -> Self {
        ConflictGenerator {
            org,
            adhoc_templates,
            params,
        }
    }

    fn ctx<'b>(&'b self, profile: &'b UserProfile) -> DecisionContext<'b> {
        DecisionContext {
            org: self.org,
            owner: &profile.user_id,
        }
    }

    /// Pick anchors spread evenly over the 52 weeks and label them.
    ///
    /// Accepted anchors come from the user's top-half events by principle
    /// score, declined anchors from the bottom half when the week has one.
    /// Labels are shuffled subject to each week holding enough eligible
    /// accepted anchors.
    pub fn sample_anchors(&self, calendar: &Calendar, profile: &UserProfile, seed: u64) -> Result<Vec<Anchor>, ConflictError> {
        self.params.validate()?;
        let n = self.params.n_rounds;
        if calendar.events.len() < n {
            return Err(ConflictError::InsufficientEvents {
                user_id: profile.user_id.clone(),
                needed: n,
                available: calendar.events.len(),
            });
        }
        let ctx = self.ctx(profile);
        let scores: BTreeMap<&str, f64> = calendar
            .events
            .iter()
            .map(|e| (e.event_id.as_str(), principle_score(profile, e, &ctx)))
            .collect();
        let mut order: Vec<&str> = scores.keys().copied().collect();
        order.sort_by(|a, b| scores[b].total_cmp(&scores[a]).then_with(|| a.cmp(b)));
        let top_half: BTreeSet<&str> = order[..calendar.events.len().div_ceil(2)].iter().copied().collect();

        let mut rng = crate::seed::stream(seed, &["anchors", &profile.user_id]);
        let floor = self.competitor_floor(&calendar.events[0], profile, &mut rng);
        // An accepted anchor must be a top-half event that outscores the
        // weakest competitor the reasons can produce.
        let strong = |e: &Event| top_half.contains(e.event_id.as_str()) && scores[e.event_id.as_str()] > floor;
        let weeks: Vec<u32> = (0..n).map(|i| 1 + (i * WEEKS_PER_YEAR as usize / n) as u32).collect();
        let mut capacity: BTreeMap<u32, usize> = BTreeMap::new();
        for &w in &weeks {
            capacity
                .entry(w)
                .or_insert_with(|| calendar.events_in_week(w).into_iter().filter(|e| strong(e)).count());
        }
        let accepted = self.params.accepted_count();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut labels = vec![AnchorLabel::DeclinedAnchor; n];
        let mut assigned = 0;
        for i in order {
            if assigned == accepted {
                break;
            }
            let cap = capacity.get_mut(&weeks[i]).expect("week registered");
            if *cap > 0 {
                *cap -= 1;
                labels[i] = AnchorLabel::AcceptedAnchor;
                assigned += 1;
            }
        }
        if assigned < accepted {
            return Err(ConflictError::TooFewStrongEvents {
                user_id: profile.user_id.clone(),
                needed: accepted,
                available: assigned,
            });
        }

        let mut used: BTreeSet<&str> = BTreeSet::new();
        let mut anchors = Vec::with_capacity(n);
        let mut rounds: Vec<usize> = (0..n).collect();
        // Within a week, accepted anchors pick first.
        rounds.sort_by_key(|&i| (weeks[i], labels[i] == AnchorLabel::DeclinedAnchor, i));
        for i in rounds {
            let (week, label) = (weeks[i], labels[i]);
            let available: Vec<&Event> = calendar
                .events_in_week(week)
                .into_iter()
                .filter(|e| !used.contains(e.event_id.as_str()))
                .collect();
            let pick = if label == AnchorLabel::AcceptedAnchor {
                let pool: Vec<&Event> = available.iter().copied().filter(|e| strong(e)).collect();
                *pool.choose(&mut rng).expect("capacity checked")
            } else {
                let pool: Vec<&Event> = available
                    .iter()
                    .copied()
                    .filter(|e| !top_half.contains(e.event_id.as_str()))
                    .collect();
                match pool.choose(&mut rng) {
                    Some(e) => *e,
                    None => available
                        .iter()
                        .copied()
                        .min_by(|a, b| {
                            scores[a.event_id.as_str()]
                                .total_cmp(&scores[b.event_id.as_str()])
                                .then_with(|| a.event_id.cmp(&b.event_id))
                        })
                        .ok_or_else(|| ConflictError::WeekExhausted {
                            user_id: profile.user_id.clone(),
                            week,
                        })?,
                }
            };
            used.insert(pick.event_id.as_str());
            anchors.push(Anchor {
                event: pick.clone(),
                label,
                week,
            });
        }
        anchors.sort_by(|a, b| (a.event.start, &a.event.event_id).cmp(&(b.event.start, &b.event.event_id)));
        Ok(anchors)
    }

    /// Lowest score seen over sampled single-pair competitors. Infinite when
    /// no reason makes any principle fire.
    fn competitor_floor(&self, slot: &Event, profile: &UserProfile, rng: &mut ChaCha8Rng) -> f64 {
        let ctx = self.ctx(profile);
        let templates = profile.templates.iter().chain(self.adhoc_templates);
        let mut floor = f64::INFINITY;
        for template in templates {
            for _ in 0..FLOOR_SAMPLES {
                let base = instantiate_event(template, &profile.user_id, self.org, String::new(), slot.start, slot.end, rng);
                for (_, _, e) in self.pairings(&base, profile) {
                    floor = floor.min(principle_score(profile, &e, &ctx));
                }
            }
        }
        floor
    }

    /// Build one conflict round around `anchor`.
    pub fn generate_competitors(
        &self,
        anchor: &Anchor,
        profile: &UserProfile,
        round_id: &str,
        seed: u64,
    ) -> Result<ConflictRound, ConflictError> {
        self.params.validate()?;
        let m = self.params.m;
        let mut rng = crate::seed::stream(seed, &["competitors", &profile.user_id, &anchor.event.event_id]);
        let ctx = self.ctx(profile);
        let anchor_score = principle_score(profile, &anchor.event, &ctx);
        let anchor_built = Built {
            event: anchor.event.clone(),
            source: anchor.event.event_id.clone(),
            pairs: Vec::new(),
            score: anchor_score,
        };

        let (winner_origin, built) = match anchor.label {
            AnchorLabel::AcceptedAnchor => {
                let built = self.fill_losers(anchor, profile, vec![anchor_built], &mut rng)?;
                (EventOrigin::Anchor, built)
            }
            AnchorLabel::DeclinedAnchor => {
                // A low-scoring winner can leave no room below it, so the
                // winner itself is redrawn when the losers cannot be built.
                let mut result = None;
                for _ in 0..WINNER_REDRAWS {
                    let titles = BTreeSet::from([anchor.event.title.clone()]);
                    let winner = self.dominating(anchor, profile, anchor_score, &titles, &mut rng)?;
                    let seed_set = vec![winner, anchor_built.clone()];
                    match self.fill_losers(anchor, profile, seed_set, &mut rng) {
                        Ok(built) => {
                            result = Some(Ok(built));
                            break;
                        }
                        Err(e) => result = Some(Err(e)),
                    }
                }
                (EventOrigin::AcceptedCompetitor, result.expect("at least one redraw")?)
            }
        };

        // Present events in random order under short ids e1..eM.
        let mut origins: Vec<(Built, EventOrigin)> = built
            .into_iter()
            .enumerate()
            .map(|(i, b)| {
                let origin = match i {
                    0 => winner_origin,
                    1 if winner_origin == EventOrigin::AcceptedCompetitor => EventOrigin::Anchor,
                    _ => EventOrigin::DeclinedCompetitor,
                };
                (b, origin)
            })
            .collect();
        origins.shuffle(&mut rng);

        let mut events = Vec::with_capacity(m);
        let mut provenance = Vec::with_capacity(m);
        let mut scores = BTreeMap::new();
        let mut truth_accept = String::new();
        for (i, (mut b, origin)) in origins.into_iter().enumerate() {
            let id = format!("e{}", i + 1);
            b.event.event_id = id.clone();
            if origin == winner_origin {
                truth_accept = id.clone();
            }
            scores.insert(id.clone(), b.score);
            provenance.push(EventProvenance {
                event_id: id,
                origin,
                source: b.source,
                pairs: b.pairs,
            });
            events.push(b.event);
        }
        let truth_ranking = rank_by_score(&scores);
        let round = ConflictRound {
            round_id: round_id.to_string(),
            user_id: profile.user_id.clone(),
            week: anchor.week,
            timeslot: Timeslot {
                start: anchor.event.start,
                end: anchor.event.end,
            },
            events,
            truth_accept,
            truth_ranking,
            anchor_label: anchor.label,
            provenance,
            scores,
        };
        debug_assert!(round.check().is_ok(), "{:?}", round.check());
        debug_assert_eq!(round.truth_ranking[0], round.truth_accept);
        Ok(round)
    }

    /// Append dominated competitors until the round holds M events. The
    /// first entry of `built` is the winner.
    fn fill_losers(
        &self,
        anchor: &Anchor,
        profile: &UserProfile,
        mut built: Vec<Built>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<Built>, ConflictError> {
        let limit = built[0].score;
        let mut titles: BTreeSet<String> = built.iter().map(|b| b.event.title.clone()).collect();
        while built.len() < self.params.m {
            let loser = self.dominated(anchor, profile, limit, &titles, rng)?;
            titles.insert(loser.event.title.clone());
            built.push(loser);
        }
        Ok(built)
    }

    /// A fresh base event from a random template, jittered inside the
    /// anchor's slot so that every such event contains the slot midpoint.
    fn base_event(&self, anchor: &Event, profile: &UserProfile, rng: &mut ChaCha8Rng) -> (Event, String) {
        let n_own = profile.templates.len();
        let idx = rng.gen_range(0..n_own + self.adhoc_templates.len());
        let template = if idx < n_own {
            &profile.templates[idx]
        } else {
            &self.adhoc_templates[idx - n_own]
        };
        let (start, end) = jitter(anchor.start, anchor.end, rng);
        let event = instantiate_event(template, &profile.user_id, self.org, String::from("pending"), start, end, rng);
        (event, template.template_id.clone())
    }

    /// All (principle, reason) pairings where applying the reason to `event`
    /// newly fires the principle.
    fn pairings(&self, event: &Event, profile: &UserProfile) -> Vec<(usize, usize, Event)> {
        let ctx = self.ctx(profile);
        let before: Vec<bool> = profile
            .principles
            .iter()
            .map(|p| p.trigger.eval(event, &ctx))
            .collect();
        let mut out = Vec::new();
        for (ci, reason) in profile.conflict_reasons.iter().enumerate() {
            let after = apply_transform(reason, event, &ctx);
            for (pi, p) in profile.principles.iter().enumerate() {
                if !before[pi] && p.trigger.eval(&after, &ctx) {
                    out.push((pi, ci, after.clone()));
                }
            }
        }
        out
    }

    fn pick_weighted(
        &self,
        candidates: &[(usize, usize, Event)],
        profile: &UserProfile,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let weights: Vec<f64> = candidates.iter().map(|(pi, _, _)| profile.principles[*pi].weight).collect();
        WeightedIndex::new(&weights).expect("principle weights are positive").sample(rng)
    }

    fn pair(profile: &UserProfile, pi: usize, ci: usize) -> PrinciplePair {
        PrinciplePair {
            principle_id: profile.principles[pi].principle_id.clone(),
            reason_id: profile.conflict_reasons[ci].reason_id.clone(),
        }
    }

    fn separation_error(&self, anchor: &Anchor, profile: &UserProfile, last: Option<(usize, usize)>) -> ConflictError {
        ConflictError::Separation {
            user_id: profile.user_id.clone(),
            anchor_id: anchor.event.event_id.clone(),
            principle_id: last.map(|(pi, _)| profile.principles[pi].principle_id.clone()),
            reason_id: last.map(|(_, ci)| profile.conflict_reasons[ci].reason_id.clone()),
        }
    }

    /// A credible competitor scoring strictly below `limit`.
    fn dominated(
        &self,
        anchor: &Anchor,
        profile: &UserProfile,
        limit: f64,
        titles: &BTreeSet<String>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Built, ConflictError> {
        let ctx = self.ctx(profile);
        let mut last = None;
        for _ in 0..self.params.max_retries {
            let (mut event, source) = self.base_event(&anchor.event, profile, rng);
            if principle_score(profile, &event, &ctx) >= limit {
                continue;
            }
            let mut pairs = Vec::new();
            for _ in 0..self.params.factors {
                let all = self.pairings(&event, profile);
                let (ok, rejected): (Vec<_>, Vec<_>) = all
                    .into_iter()
                    .partition(|(_, _, e)| principle_score(profile, e, &ctx) < limit);
                if let Some((pi, ci, _)) = rejected.first() {
                    last = Some((*pi, *ci));
                }
                if ok.is_empty() {
                    break;
                }
                let k = self.pick_weighted(&ok, profile, rng);
                let (pi, ci, next) = ok.into_iter().nth(k).expect("index in range");
                pairs.push(Self::pair(profile, pi, ci));
                event = next;
            }
            if pairs.is_empty() || titles.contains(&event.title) {
                continue;
            }
            let score = principle_score(profile, &event, &ctx);
            return Ok(Built { event, source, pairs, score });
        }
        Err(self.separation_error(anchor, profile, last))
    }

    /// A competitor justified by strong principle triggers, scoring strictly
    /// above `floor`.
    fn dominating(
        &self,
        anchor: &Anchor,
        profile: &UserProfile,
        floor: f64,
        titles: &BTreeSet<String>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Built, ConflictError> {
        let ctx = self.ctx(profile);
        let max_stack = self.params.factors + 3;
        let mut last = None;
        for _ in 0..self.params.max_retries {
            let (mut event, source) = self.base_event(&anchor.event, profile, rng);
            let mut pairs = Vec::new();
            let mut score = principle_score(profile, &event, &ctx);
            while pairs.len() < max_stack && (score <= floor || pairs.len() < self.params.factors) {
                let all = self.pairings(&event, profile);
                if all.is_empty() {
                    break;
                }
                let k = self.pick_weighted(&all, profile, rng);
                let (pi, ci, next) = all.into_iter().nth(k).expect("index in range");
                last = Some((pi, ci));
                pairs.push(Self::pair(profile, pi, ci));
                event = next;
                score = principle_score(profile, &event, &ctx);
            }
            if score > floor && !pairs.is_empty() && !titles.contains(&event.title) {
                return Ok(Built { event, source, pairs, score });
            }
        }
        Err(self.separation_error(anchor, profile, last))
    }

    /// Anchors, rounds and round ids for one user.
    pub fn build_user_dataset(
        &self,
        profile: &UserProfile,
        calendar: &Calendar,
        seed: u64,
    ) -> Result<ConflictDataset, ConflictError> {
        let anchors = self.sample_anchors(calendar, profile, seed)?;
        let rounds = anchors
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let round_id = format!("{}-r{:03}", profile.user_id, i + 1);
                self.generate_competitors(a, profile, &round_id, seed)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ConflictDataset {
            org_id: self.org.org_id.clone(),
            user_id: profile.user_id.clone(),
            rounds,
            params: DatasetParams::from(&self.params),
            seed,
        })
    }
}

/// Start in [s, mid], end in (mid, e], with mid = s + floor(d/2).
fn jitter<R: Rng>(
    start: DateTime<FixedOffset>,
    end: DateTime<FixedOffset>,
    rng: &mut R,
) -> (DateTime<FixedOffset>, DateTime<FixedOffset>) {
    let d = (end - start).num_minutes().max(1);
    let half = d / 2;
    let s = rng.gen_range(0..=half);
    let e = rng.gen_range(half + 1..=d);
    (start + Duration::minutes(s), start + Duration::minutes(e))
}

/// One dataset per profile, pairing profiles with calendars by user id.
pub fn build_dataset(
    generator: &ConflictGenerator<'_>,
    profiles: &[UserProfile],
    calendars: &[Calendar],
    seed: u64,
) -> Result<Vec<ConflictDataset>, ConflictError> {
    generator.params.validate()?;
    profiles
        .iter()
        .map(|p| {
            let cal = calendars
                .iter()
                .find(|c| c.user_id == p.user_id)
                .ok_or_else(|| ConflictError::MissingCalendar(p.user_id.clone()))?;
            generator.build_user_dataset(p, cal, seed)
        })
        .collect()
}
