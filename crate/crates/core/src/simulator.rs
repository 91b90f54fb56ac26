//! Synthetic users and event logs drawn from a known Weibull AFT process.
//!
//! Each user has static standard-normal profile features. Sends follow the
//! configured arrival process. After every send and every visit a fresh
//! time-to-visit is drawn from the law of the new state; a draw that would
//! land after the next send is discarded, which is where right-censoring
//! comes from.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Open01, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pipeline::{Event, EventKind};
use crate::schema::{FeatureSchema, FeatureVector, Slot, SlotInputs, SlotKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SendProcess {
    /// Every `hours`, starting at a uniform per-user offset in `[0, hours)`.
    FixedInterval { hours: f64 },
    /// Poisson arrivals with `rate` sends per hour.
    Poisson { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_users: usize,
    /// Number of standard-normal profile features `p0, p1, ...`.
    pub n_features: usize,
    /// Ordered as [`default_schema`]: intercept, profile features,
    /// badge_count, badge_x_p0.
    pub true_coefficients: Vec<f64>,
    pub true_sigma: f64,
    pub send_process: SendProcess,
    pub window_hours: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_users: 1000,
            n_features: 4,
            true_coefficients: vec![2.0, 0.5, -0.3, 0.2, 0.0, -0.25, 0.1],
            true_sigma: 1.5,
            send_process: SendProcess::FixedInterval { hours: 24.0 },
            window_hours: 720.0,
            seed: 0,
        }
    }
}

/// Intercept, `p0..p{k-1}`, badge_count and the badge × p0 interaction.
pub fn default_schema(n_features: usize) -> Result<FeatureSchema> {
    if n_features == 0 {
        return Err(Error::Config("n_features must be at least 1".into()));
    }
    let mut slots = vec![Slot::new("intercept", SlotKind::Intercept)];
    for j in 0..n_features {
        let name = format!("p{j}");
        slots.push(Slot::new(name.clone(), SlotKind::Raw { source: name }));
    }
    slots.push(Slot::new("badge_count", SlotKind::BadgeCount).online());
    slots.push(
        Slot::new("badge_x_p0", SlotKind::Interaction { left: "badge_count".into(), right: "p0".into() }).online(),
    );
    FeatureSchema::new(slots)
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.true_sigma.is_finite() && self.true_sigma > 0.0) {
            return Err(Error::Config(format!("true_sigma must be > 0, got {}", self.true_sigma)));
        }
        if !(self.window_hours.is_finite() && self.window_hours > 0.0) {
            return Err(Error::Config(format!("window_hours must be > 0, got {}", self.window_hours)));
        }
        let want = self.n_features + 3;
        if self.true_coefficients.len() != want {
            return Err(Error::Config(format!(
                "true_coefficients has {} entries, schema with {} features needs {want}",
                self.true_coefficients.len(),
                self.n_features
            )));
        }
        if self.true_coefficients.iter().any(|b| !b.is_finite()) {
            return Err(Error::Config("true_coefficients must be finite".into()));
        }
        match self.send_process {
            SendProcess::FixedInterval { hours } if !(hours.is_finite() && hours > 0.0) => {
                Err(Error::Config(format!("fixed send interval must be > 0, got {hours}")))
            }
            SendProcess::Poisson { rate } if !(rate.is_finite() && rate > 0.0) => {
                Err(Error::Config(format!("Poisson send rate must be > 0, got {rate}")))
            }
            _ => default_schema(self.n_features).map(|_| ()),
        }
    }

    pub fn schema(&self) -> Result<FeatureSchema> {
        default_schema(self.n_features)
    }

    /// One draw of `exp(b*·x + σ*ε)` with `ε` standard extreme-value.
    pub fn sample_time_to_visit<R: Rng + ?Sized>(&self, x: &FeatureVector, rng: &mut R) -> f64 {
        let u: f64 = Open01.sample(rng);
        time_from_uniform(x.dot(&self.true_coefficients), self.true_sigma, u)
    }
}

/// Inverse-CDF map from `u` in (0, 1) to a time: `ε = ln(−ln(1−u))`,
/// `T = exp(μ + σε)`.
pub fn time_from_uniform(mu: f64, sigma: f64, u: f64) -> f64 {
    let eps = (-(-u).ln_1p()).ln();
    (mu + sigma * eps).exp()
}

/// Random stream for one user, independent of how users are scheduled.
pub fn user_rng(seed: u64, user_id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(b"dto-sim");
    h.update(seed.to_le_bytes());
    h.update(user_id.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

pub fn user_id(i: usize) -> String {
    format!("u{i:07}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTruth {
    pub user_id: String,
    pub features: BTreeMap<String, f64>,
    /// Sends that open an observation (the closing send is not counted).
    pub sends: u32,
    pub censored_sends: u32,
    pub visits: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SimConfig,
    pub schema: FeatureSchema,
    pub coefficients: BTreeMap<String, f64>,
    pub sigma: f64,
    pub censoring_fraction: f64,
    pub users: Vec<UserTruth>,
}

/// State of a user at scoring time. The simulator writes one per user at the
/// end of the window, with `p_click` a uniform placeholder since clicks are
/// not modelled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRecord {
    pub user_id: String,
    pub w0_hours: f64,
    pub badge_count: u32,
    #[serde(default)]
    pub features: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_click: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub events: Vec<Event>,
    pub truth: GroundTruth,
    pub contexts: Vec<ContextRecord>,
}

struct UserSim {
    events: Vec<Event>,
    truth: UserTruth,
    context: ContextRecord,
}

fn next_gap(process: SendProcess, rng: &mut ChaCha8Rng) -> f64 {
    match process {
        SendProcess::FixedInterval { hours } => hours,
        SendProcess::Poisson { rate } => Exp::new(rate).expect("validated rate").sample(rng),
    }
}

fn simulate_user(cfg: &SimConfig, schema: &FeatureSchema, uid: String) -> Result<UserSim> {
    let mut rng = user_rng(cfg.seed, &uid);
    let raw: BTreeMap<String, f64> =
        (0..cfg.n_features).map(|j| (format!("p{j}"), StandardNormal.sample(&mut rng))).collect();
    let p_click: f64 = rng.random();

    // Sends in [0, window) plus the first one at or after the window edge,
    // which closes the last in-window state so no observation is cut short
    // by the window itself.
    let mut sends = Vec::new();
    let mut t = match cfg.send_process {
        SendProcess::FixedInterval { hours } => rng.random::<f64>() * hours,
        SendProcess::Poisson { .. } => next_gap(cfg.send_process, &mut rng),
    };
    loop {
        sends.push(t);
        if t >= cfg.window_hours {
            break;
        }
        t += next_gap(cfg.send_process, &mut rng);
    }

    let features_at = |badge: u32| {
        schema.build(&SlotInputs { raw: &raw, badge_count: badge, hours_since_state_start: 0.0 })
    };
    let event = |ts: f64, kind: EventKind, badge: u32| Event {
        user_id: uid.clone(),
        timestamp: ts,
        kind,
        badge_count: Some(badge),
        raw_features: raw.clone(),
    };

    let mut events = Vec::new();
    let mut badge = 0u32;
    let mut censored = 0u32;
    let mut visits = 0u32;
    let mut last_before_window = (0.0, 0u32, false);
    for (j, &s) in sends.iter().enumerate() {
        badge += 1;
        events.push(event(s, EventKind::NotificationSend, badge));
        let Some(&next) = sends.get(j + 1) else { break };
        last_before_window = (s, badge, true);
        let mut visit = s + cfg.sample_time_to_visit(&features_at(badge)?, &mut rng);
        if visit >= next {
            censored += 1;
        }
        while visit < next {
            badge = 0;
            visits += 1;
            events.push(event(visit, EventKind::Visit, 0));
            if visit < cfg.window_hours {
                last_before_window = (visit, 0, true);
            }
            visit += cfg.sample_time_to_visit(&features_at(0)?, &mut rng);
        }
    }

    let (last_ts, ctx_badge, seen) = last_before_window;
    let context = ContextRecord {
        user_id: uid.clone(),
        w0_hours: if seen { cfg.window_hours - last_ts } else { cfg.window_hours },
        badge_count: ctx_badge,
        features: raw.clone(),
        p_click: Some(p_click),
    };
    let truth = UserTruth {
        user_id: uid,
        features: raw,
        sends: (sends.len() - 1) as u32,
        censored_sends: censored,
        visits,
    };
    Ok(UserSim { events, truth, context })
}

/// Full synthetic corpus: events ordered by user then time, ground truth and
/// end-of-window scoring contexts. Users are simulated in parallel on
/// independent streams, so the output does not depend on the thread count.
pub fn generate_event_log(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let schema = cfg.schema()?;
    let users: Vec<UserSim> = (0..cfg.n_users)
        .into_par_iter()
        .map(|i| simulate_user(cfg, &schema, user_id(i)))
        .collect::<Result<_>>()?;

    let mut events = Vec::new();
    let mut truths = Vec::with_capacity(users.len());
    let mut contexts = Vec::with_capacity(users.len());
    for u in users {
        events.extend(u.events);
        truths.push(u.truth);
        contexts.push(u.context);
    }
    let sends: u64 = truths.iter().map(|u| u64::from(u.sends)).sum();
    let censored: u64 = truths.iter().map(|u| u64::from(u.censored_sends)).sum();
    let truth = GroundTruth {
        coefficients: schema.names().map(str::to_owned).zip(cfg.true_coefficients.iter().copied()).collect(),
        sigma: cfg.true_sigma,
        censoring_fraction: if sends == 0 { 0.0 } else { censored as f64 / sends as f64 },
        config: cfg.clone(),
        schema,
        users: truths,
    };
    Ok(SimOutput { events, truth, contexts })
}
