//! Offline comparison of the survival model with per-horizon logistic
//! baselines: binary labels at a horizon, rank AUC, and AUC as a function of
//! the horizon.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{Event, EventKind, Observation};
use crate::schema::{FeatureSchema, FeatureVector};
use crate::survival::weibull_cdf;
use crate::trainers::{fit_logistic_rows, LogisticModel, OptConfig, WeibullAftModel};

pub const DEFAULT_HORIZONS: [f64; 7] = [2.0, 4.0, 8.0, 12.0, 24.0, 36.0, 48.0];

/// Sorted visit times per user, plus the end of the period the log covers.
#[derive(Debug, Clone, Default)]
pub struct VisitIndex {
    by_user: HashMap<String, Vec<f64>>,
    observed_until: Option<f64>,
}

impl VisitIndex {
    pub fn from_events(events: &[Event]) -> Self {
        let mut by_user: HashMap<String, Vec<f64>> = HashMap::new();
        for e in events.iter().filter(|e| e.kind == EventKind::Visit) {
            by_user.entry(e.user_id.clone()).or_default().push(e.timestamp);
        }
        for v in by_user.values_mut() {
            v.sort_by(f64::total_cmp);
        }
        Self { by_user, observed_until: None }
    }

    /// Visits after `t` are unknown; intervals reaching past it with no
    /// visit seen get no label.
    pub fn observed_until(mut self, t: f64) -> Self {
        self.observed_until = Some(t);
        self
    }

    /// Whether `user` visited in `(start, end]`.
    pub fn any_in(&self, user: &str, start: f64, end: f64) -> Option<bool> {
        let hit = self.by_user.get(user).is_some_and(|times| {
            let first_after = times.partition_point(|&t| t <= start);
            times.get(first_after).is_some_and(|&t| t <= end)
        });
        match self.observed_until {
            Some(limit) if !hit && end > limit => None,
            _ => Some(hit),
        }
    }
}

/// Visit anywhere within `horizon` of the send, ignoring intervening sends.
pub fn label_naive(visits: &VisitIndex, obs: &[Observation], horizon: f64) -> Vec<Option<bool>> {
    obs.iter().map(|o| visits.any_in(&o.user_id, o.origin_timestamp, o.origin_timestamp + horizon)).collect()
}

/// Label from the censored triplet alone: `None` when the observation was
/// censored before the horizon and the outcome is unknown.
pub fn label_censoring_clean(obs: &[Observation], horizon: f64) -> Vec<Option<bool>> {
    obs.iter()
        .map(|o| match (o.uncensored, o.duration <= horizon) {
            (true, true) => Some(true),
            (_, false) => Some(false),
            (false, true) if o.duration == horizon => Some(false),
            (false, true) => None,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelerMode {
    Naive,
    Clean,
}

impl std::fmt::Display for LabelerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LabelerMode::Naive => "naive",
            LabelerMode::Clean => "clean",
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Labeler<'a> {
    Naive(&'a VisitIndex),
    Clean,
}

impl Labeler<'_> {
    pub fn mode(&self) -> LabelerMode {
        match self {
            Labeler::Naive(_) => LabelerMode::Naive,
            Labeler::Clean => LabelerMode::Clean,
        }
    }

    pub fn labels(&self, obs: &[Observation], horizon: f64) -> Vec<Option<bool>> {
        match self {
            Labeler::Naive(v) => label_naive(v, obs, horizon),
            Labeler::Clean => label_censoring_clean(obs, horizon),
        }
    }
}

/// Logistic baseline for one horizon, trained on the given labeler's labels.
/// Ambiguous instances are left out.
pub fn fit_logistic(
    obs: &[Observation],
    horizon: f64,
    labeler: &Labeler<'_>,
    schema: &FeatureSchema,
    cfg: &OptConfig,
) -> Result<LogisticModel> {
    let labels = labeler.labels(obs, horizon);
    let (rows, ys): (Vec<&FeatureVector>, Vec<bool>) =
        obs.iter().zip(labels).filter_map(|(o, l)| l.map(|l| (&o.features, l))).unzip();
    fit_logistic_rows(&rows, &ys, schema, horizon, cfg)
}

#[derive(Debug, Clone, Copy)]
pub enum ScoringModel<'a> {
    Aft(&'a WeibullAftModel),
    Logistic(&'a LogisticModel),
}

/// Probability of a visit within `horizon`: `F(T; λ(x), α)` for the AFT
/// model, the sigmoid output for a logistic model trained at `horizon`.
pub fn score_for_auc(model: ScoringModel<'_>, x: &FeatureVector, horizon: f64) -> Result<f64> {
    match model {
        ScoringModel::Aft(m) => weibull_cdf(horizon, m.weibull(x)?),
        ScoringModel::Logistic(m) => {
            check_horizon(m, horizon)?;
            m.predict_proba(x)
        }
    }
}

fn check_horizon(m: &LogisticModel, horizon: f64) -> Result<()> {
    if m.horizon_hours() != horizon {
        return Err(Error::Domain(format!(
            "logistic model trained for {} h used at {} h",
            m.horizon_hours(),
            horizon
        )));
    }
    Ok(())
}

/// Strictly increasing transform of [`score_for_auc`] that does not saturate:
/// cumulative hazard `λ T^α` for the AFT model, the logit for logistic.
/// `F` rounds to exactly 1.0 for active users at long horizons, which would
/// turn distinct predictions into ties.
fn ranking_score(model: ScoringModel<'_>, x: &FeatureVector, horizon: f64) -> Result<f64> {
    match model {
        ScoringModel::Aft(m) => m.weibull(x)?.cumulative_hazard(horizon),
        ScoringModel::Logistic(m) => {
            check_horizon(m, horizon)?;
            m.linear_predictor(x)
        }
    }
}

/// Mann-Whitney AUC with midranks: the probability a random positive
/// outscores a random negative, ties counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Data(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Data("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // 1-based midrank of the tie block i..=j
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += midrank * idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    InsufficientData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucRow {
    pub t_hours: f64,
    pub auc_aft: Option<f64>,
    pub auc_logistic: Option<f64>,
    pub n: usize,
    pub n_ambiguous: usize,
    pub labeler: LabelerMode,
    pub status: RowStatus,
}

/// Production AUCs published for this modelling approach. Metadata only: the
/// underlying data is proprietary and synthetic runs are not expected to
/// match them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub t_hours: f64,
    pub auc_aft: f64,
    pub auc_logistic: Option<f64>,
}

pub const PUBLISHED_REFERENCE: [ReferencePoint; 3] = [
    ReferencePoint { t_hours: 4.0, auc_aft: 0.74, auc_logistic: Some(0.58) },
    ReferencePoint { t_hours: 24.0, auc_aft: 0.85, auc_logistic: Some(0.73) },
    ReferencePoint { t_hours: 48.0, auc_aft: 0.89, auc_logistic: None },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucReport {
    pub rows: Vec<AucRow>,
    pub reference: Vec<ReferencePoint>,
}

pub const REPORT_HEADER: [&str; 7] = ["t_hours", "auc_aft", "auc_logistic", "n", "n_ambiguous", "labeler", "status"];

impl AucReport {
    pub fn row(&self, t_hours: f64, labeler: LabelerMode) -> Option<&AucRow> {
        self.rows.iter().find(|r| r.t_hours == t_hours && r.labeler == labeler)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(REPORT_HEADER)?;
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_owned(), |v| format!("{v:.6}"));
        for r in &self.rows {
            out.write_record([
                r.t_hours.to_string(),
                fmt(r.auc_aft),
                fmt(r.auc_logistic),
                r.n.to_string(),
                r.n_ambiguous.to_string(),
                r.labeler.to_string(),
                match r.status {
                    RowStatus::Ok => "ok".to_owned(),
                    RowStatus::InsufficientData => "insufficient_data".to_owned(),
                },
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let fmt = |v: Option<f64>| v.map_or_else(|| "    NA".to_owned(), |v| format!("{v:.4}"));
        let _ = writeln!(s, "{:>8}  {:>7}  {:>8}  {:>8}  {:>9}  {:<7}", "T (h)", "AFT", "logistic", "n", "ambiguous", "labeler");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>8}  {:>7}  {:>8}  {:>8}  {:>9}  {:<7}{}",
                r.t_hours,
                fmt(r.auc_aft),
                fmt(r.auc_logistic),
                r.n,
                r.n_ambiguous,
                r.labeler,
                if r.status == RowStatus::InsufficientData { "  insufficient data" } else { "" }
            );
        }
        s
    }
}

/// AUC of the single AFT model and the matching per-horizon logistic model at
/// every horizon and for every labeler. Unlabelled instances are counted as
/// ambiguous.
pub fn auc_vs_horizon(
    aft: &WeibullAftModel,
    logistic: &[LogisticModel],
    test: &[Observation],
    labelers: &[Labeler<'_>],
    horizons: &[f64],
) -> Result<AucReport> {
    let mut rows = Vec::new();
    for &t in horizons {
        let lr = logistic
            .iter()
            .find(|m| m.horizon_hours() == t)
            .ok_or_else(|| Error::Data(format!("no logistic model for horizon {t} h")))?;
        for labeler in labelers {
            let labels = labeler.labels(test, t);
            let mut users = BTreeSet::new();
            let mut s_aft = Vec::new();
            let mut s_lr = Vec::new();
            let mut ys = Vec::new();
            for (o, l) in test.iter().zip(&labels) {
                if let Some(y) = l {
                    s_aft.push(ranking_score(ScoringModel::Aft(aft), &o.features, t)?);
                    s_lr.push(ranking_score(ScoringModel::Logistic(lr), &o.features, t)?);
                    ys.push(*y);
                    users.insert(o.user_id.as_str());
                }
            }
            let n_ambiguous = labels.len() - ys.len();
            let both_classes = ys.iter().any(|&y| y) && ys.iter().any(|&y| !y);
            let (auc_aft, auc_logistic, status) = if users.len() >= 2 && both_classes {
                (Some(auc(&s_aft, &ys)?), Some(auc(&s_lr, &ys)?), RowStatus::Ok)
            } else {
                (None, None, RowStatus::InsufficientData)
            };
            rows.push(AucRow { t_hours: t, auc_aft, auc_logistic, n: ys.len(), n_ambiguous, labeler: labeler.mode(), status });
        }
    }
    Ok(AucReport { rows, reference: PUBLISHED_REFERENCE.to_vec() })
}
