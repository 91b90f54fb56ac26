//! Event logs to censored survival observations.
//!
//! Each user's events are put in temporal order (visits before sends on equal
//! timestamps, then input order). Every notification send that has a successor
//! becomes one observation whose duration is the gap to that successor, and
//! which is uncensored exactly when the successor is a visit.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::schema::{FeatureSchema, FeatureVector, SlotInputs};

pub const HOURS_PER_WEEK: f64 = 168.0;
pub const ONE_SECOND_HOURS: f64 = 1.0 / 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    // Declaration order is the tie-break order at equal timestamps.
    Visit,
    NotificationSend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub user_id: String,
    #[serde(rename = "ts_hours")]
    pub timestamp: f64,
    pub kind: EventKind,
    /// Badge count in the state after this event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub badge_count: Option<u32>,
    #[serde(default, rename = "features", skip_serializing_if = "BTreeMap::is_empty")]
    pub raw_features: BTreeMap<String, f64>,
}

/// Censored survival triplet for one notification send.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub user_id: String,
    pub origin_timestamp: f64,
    pub duration: f64,
    pub uncensored: bool,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub duration_floor_hours: f64,
    /// Users above this many sends in any calendar week of the window are dropped.
    pub max_notifications: u32,
    pub max_visits: u32,
    pub split_seed: u64,
    pub window_start: Option<f64>,
    pub window_end: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            duration_floor_hours: ONE_SECOND_HOURS,
            max_notifications: 200,
            max_visits: 500,
            split_seed: 0,
            window_start: None,
            window_end: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_floor_hours.is_finite() && self.duration_floor_hours > 0.0) {
            return Err(Error::Config(format!(
                "duration_floor_hours must be > 0, got {}",
                self.duration_floor_hours
            )));
        }
        if let (Some(s), Some(e)) = (self.window_start, self.window_end) {
            if !(s < e) {
                return Err(Error::Config(format!("window_start {s} must precede window_end {e}")));
            }
        }
        for w in [self.window_start, self.window_end].into_iter().flatten() {
            if !w.is_finite() {
                return Err(Error::Config("window bounds must be finite".into()));
            }
        }
        Ok(())
    }

    fn in_window(&self, ts: f64) -> bool {
        self.window_start.is_none_or(|s| ts >= s) && self.window_end.is_none_or(|e| ts < e)
    }
}

/// One user's observations plus the activity counts the outlier rule needs.
#[derive(Debug, Clone, PartialEq)]
pub struct UserRecords {
    pub user_id: String,
    pub observations: Vec<Observation>,
    pub max_weekly_sends: u32,
    pub max_weekly_visits: u32,
    /// Sends without a successor event inside the window.
    pub unresolved_sends: u32,
}

/// Sort one user's events in place: timestamp, then visits before sends, then
/// input order.
pub fn sort_user_events(events: &mut [Event]) {
    // sort_by is stable, so equal keys keep input order.
    events.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp).then(a.kind.cmp(&b.kind)));
}

/// Build a single user's observations from events already in temporal order.
pub fn build_user_observations(
    user_id: &str,
    events: &[Event],
    schema: &FeatureSchema,
    cfg: &PipelineConfig,
) -> Result<UserRecords> {
    let mut observations = Vec::new();
    let mut unresolved = 0;
    let mut badge: u32 = 0;
    let mut state_start: Option<f64> = None;
    let origin = cfg.window_start.unwrap_or(0.0);
    let mut weekly_sends: BTreeMap<i64, u32> = BTreeMap::new();
    let mut weekly_visits: BTreeMap<i64, u32> = BTreeMap::new();

    for (k, ev) in events.iter().enumerate() {
        let week = ((ev.timestamp - origin) / HOURS_PER_WEEK).floor() as i64;
        match ev.kind {
            EventKind::Visit => {
                *weekly_visits.entry(week).or_default() += 1;
                badge = ev.badge_count.unwrap_or(0);
            }
            EventKind::NotificationSend => {
                *weekly_sends.entry(week).or_default() += 1;
                badge = ev.badge_count.unwrap_or(badge.saturating_add(1));
                match events.get(k + 1) {
                    None => unresolved += 1,
                    Some(next) => {
                        let elapsed = state_start.map_or(0.0, |s| ev.timestamp - s);
                        let features = schema.build(&SlotInputs {
                            raw: &ev.raw_features,
                            badge_count: badge,
                            hours_since_state_start: elapsed,
                        })?;
                        observations.push(Observation {
                            user_id: user_id.to_owned(),
                            origin_timestamp: ev.timestamp,
                            duration: (next.timestamp - ev.timestamp).max(cfg.duration_floor_hours),
                            uncensored: next.kind == EventKind::Visit,
                            features,
                        });
                    }
                }
            }
        }
        // Both visits and sends start a new state.
        state_start = Some(ev.timestamp);
    }

    Ok(UserRecords {
        user_id: user_id.to_owned(),
        observations,
        max_weekly_sends: weekly_sends.values().copied().max().unwrap_or(0),
        max_weekly_visits: weekly_visits.values().copied().max().unwrap_or(0),
        unresolved_sends: unresolved,
    })
}

/// Group events by user (sorted by user id), restrict them to the configured
/// window, and order each user's stream.
pub fn group_events(events: &[Event], cfg: &PipelineConfig) -> Result<BTreeMap<String, Vec<Event>>> {
    let mut by_user: BTreeMap<String, Vec<Event>> = BTreeMap::new();
    for (i, ev) in events.iter().enumerate() {
        if !ev.timestamp.is_finite() {
            return Err(Error::Data(format!("event {i} has non-finite timestamp")));
        }
        if cfg.in_window(ev.timestamp) {
            by_user.entry(ev.user_id.clone()).or_default().push(ev.clone());
        }
    }
    for evs in by_user.values_mut() {
        sort_user_events(evs);
    }
    Ok(by_user)
}

/// Observations for every user, ordered by (user id, origin timestamp).
pub fn build_observations(
    events: &[Event],
    schema: &FeatureSchema,
    cfg: &PipelineConfig,
) -> Result<Vec<UserRecords>> {
    cfg.validate()?;
    let grouped = group_events(events, cfg)?;
    let per_user: Vec<(String, Vec<Event>)> = grouped.into_iter().collect();
    per_user
        .par_iter()
        .map(|(uid, evs)| build_user_observations(uid, evs, schema, cfg))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub users_in: usize,
    pub users_kept: usize,
    pub users_dropped_notifications: usize,
    pub users_dropped_visits: usize,
    pub observations_kept: usize,
    pub observations_dropped: usize,
    pub dropped_user_ids: Vec<String>,
}

/// Drop every record of users whose weekly send or visit count exceeds the
/// configured limits.
pub fn filter_outliers(users: Vec<UserRecords>, cfg: &PipelineConfig) -> (Vec<UserRecords>, OutlierReport) {
    let mut report = OutlierReport { users_in: users.len(), ..Default::default() };
    let mut kept = Vec::with_capacity(users.len());
    for u in users {
        let too_many_sends = u.max_weekly_sends > cfg.max_notifications;
        let too_many_visits = u.max_weekly_visits > cfg.max_visits;
        if too_many_sends || too_many_visits {
            report.users_dropped_notifications += usize::from(too_many_sends);
            report.users_dropped_visits += usize::from(too_many_visits);
            report.observations_dropped += u.observations.len();
            report.dropped_user_ids.push(u.user_id);
        } else {
            report.observations_kept += u.observations.len();
            kept.push(u);
        }
    }
    report.users_kept = kept.len();
    (kept, report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: u32,
    pub test: u32,
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self { train: 4, test: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<Observation>,
    pub test: Vec<Observation>,
    pub seed: u64,
}

fn user_split_key(user_id: &str, seed: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(user_id.as_bytes());
    h.finalize().into()
}

/// Per-user pseudorandom split. Users are ordered by a hash of (seed, user id)
/// and the first `round(n * train / (train + test))` go to training.
pub fn split(obs: Vec<Observation>, ratio: SplitRatio, seed: u64) -> SplitDataset {
    let total = u64::from(ratio.train) + u64::from(ratio.test);
    let mut users: Vec<&str> = obs.iter().map(|o| o.user_id.as_str()).collect();
    users.sort_unstable();
    users.dedup();
    let mut keyed: Vec<([u8; 32], &str)> = users.iter().map(|u| (user_split_key(u, seed), *u)).collect();
    keyed.sort_unstable();
    let n_train = if total == 0 {
        users.len()
    } else {
        ((users.len() as u64 * u64::from(ratio.train) * 2 + total) / (2 * total)) as usize
    };
    let train_users: std::collections::BTreeSet<String> =
        keyed.iter().take(n_train).map(|(_, u)| (*u).to_owned()).collect();
    let (train, test) = obs.into_iter().partition(|o| train_users.contains(&o.user_id));
    SplitDataset { train, test, seed }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub events_in: usize,
    pub events_in_window: usize,
    pub unresolved_sends_dropped: usize,
    pub outliers: OutlierReport,
    pub train_observations: usize,
    pub test_observations: usize,
    pub train_users: usize,
    pub test_users: usize,
    pub uncensored_fraction: f64,
}

/// Full ingest: observations, outlier filter, 4:1 per-user split.
pub fn run_pipeline(
    events: &[Event],
    schema: &FeatureSchema,
    cfg: &PipelineConfig,
) -> Result<(SplitDataset, PipelineReport)> {
    let users = build_observations(events, schema, cfg)?;
    let unresolved: usize = users.iter().map(|u| u.unresolved_sends as usize).sum();
    let (kept, outliers) = filter_outliers(users, cfg);
    let obs: Vec<Observation> = kept.into_iter().flat_map(|u| u.observations).collect();
    let uncensored = obs.iter().filter(|o| o.uncensored).count();
    let uncensored_fraction = if obs.is_empty() { 0.0 } else { uncensored as f64 / obs.len() as f64 };
    let ds = split(obs, SplitRatio::default(), cfg.split_seed);
    let count_users = |o: &[Observation]| {
        let mut ids: Vec<&str> = o.iter().map(|x| x.user_id.as_str()).collect();
        ids.dedup();
        ids.len()
    };
    let report = PipelineReport {
        events_in: events.len(),
        events_in_window: events.iter().filter(|e| cfg.in_window(e.timestamp)).count(),
        unresolved_sends_dropped: unresolved,
        outliers,
        train_observations: ds.train.len(),
        test_observations: ds.test.len(),
        train_users: count_users(&ds.train),
        test_users: count_users(&ds.test),
        uncensored_fraction,
    };
    Ok((ds, report))
}

/// Serialized observation line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationRecord {
    pub user_id: String,
    pub origin_ts_hours: f64,
    pub t_hours: f64,
    pub censored: bool,
    pub x: Vec<f64>,
}

impl From<&Observation> for ObservationRecord {
    fn from(o: &Observation) -> Self {
        Self {
            user_id: o.user_id.clone(),
            origin_ts_hours: o.origin_timestamp,
            t_hours: o.duration,
            censored: !o.uncensored,
            x: o.features.values().to_vec(),
        }
    }
}

impl ObservationRecord {
    pub fn into_observation(self, schema: &FeatureSchema) -> Result<Observation> {
        if !(self.t_hours.is_finite() && self.t_hours > 0.0) {
            return Err(Error::Data(format!(
                "observation for user {} has non-positive duration {}",
                self.user_id, self.t_hours
            )));
        }
        Ok(Observation {
            features: FeatureVector::new(schema, self.x)?,
            user_id: self.user_id,
            origin_timestamp: self.origin_ts_hours,
            duration: self.t_hours,
            uncensored: !self.censored,
        })
    }
}
