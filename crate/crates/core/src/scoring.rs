//! Per-user delta-effect scoring with a fitted AFT model, and the split of the
//! linear predictor into an offline-precomputed part and an online part.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{FeatureSchema, FeatureVector};
use crate::survival::{delta_effect, prob_visit_if_not_send, prob_visit_if_send, StatePair, WeibullParams};
use crate::trainers::WeibullAftModel;

/// Features of the state a send would start: badge count + 1, send-reset slots
/// cleared, interactions recomputed. Visit-recency slots are left alone.
pub fn transition_features(x0: &FeatureVector, schema: &FeatureSchema) -> Result<FeatureVector> {
    x0.ensure_schema(schema)?;
    let badge = schema
        .badge_index()
        .ok_or_else(|| Error::Schema(format!("schema {} declares no badge_count slot", schema.id())))?;
    let mut values = x0.values().to_vec();
    values[badge] += 1.0;
    for (i, slot) in schema.slots().iter().enumerate() {
        if slot.reset_on_send {
            values[i] = 0.0;
        }
    }
    schema.fill_interactions(&mut values);
    FeatureVector::new(schema, values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringContext {
    pub features_now: FeatureVector,
    w0_hours: f64,
    horizon_hours: f64,
}

impl ScoringContext {
    pub fn new(features_now: FeatureVector, w0_hours: f64, horizon_hours: f64) -> Result<Self> {
        if !(w0_hours.is_finite() && w0_hours >= 0.0) {
            return Err(Error::Domain(format!("w0 must be finite and >= 0, got {w0_hours}")));
        }
        if !(horizon_hours.is_finite() && horizon_hours > 0.0) {
            return Err(Error::Domain(format!("horizon must be finite and > 0, got {horizon_hours}")));
        }
        Ok(Self { features_now, w0_hours, horizon_hours })
    }

    pub fn w0_hours(&self) -> f64 {
        self.w0_hours
    }

    pub fn horizon_hours(&self) -> f64 {
        self.horizon_hours
    }
}

/// Delta effect with every intermediate quantity kept for audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaEffectResult {
    pub delta: f64,
    pub p_send: f64,
    pub p_wait: f64,
    pub lambda0: f64,
    pub lambda1: f64,
    pub alpha: f64,
    pub mu0: f64,
    pub mu1: f64,
}

pub fn score_delta_effect(ctx: &ScoringContext, model: &WeibullAftModel) -> Result<DeltaEffectResult> {
    let schema = model.schema();
    let x1 = transition_features(&ctx.features_now, schema)?;
    let mu0 = model.linear_predictor(&ctx.features_now)?;
    let mu1 = model.linear_predictor(&x1)?;
    let sigma = model.sigma();
    let pre = WeibullParams::from_aft(mu0, sigma)?;
    let post = WeibullParams::from_aft(mu1, sigma)?;
    let pair = StatePair::new(pre, post, ctx.w0_hours)?;
    let t = ctx.horizon_hours;
    Ok(DeltaEffectResult {
        delta: delta_effect(&pair, t)?,
        p_send: prob_visit_if_send(t, post)?,
        p_wait: prob_visit_if_not_send(t, pre, ctx.w0_hours)?,
        lambda0: pre.lambda(),
        lambda1: post.lambda(),
        alpha: pre.alpha(),
        mu0,
        mu1,
    })
}

/// Disjoint offline/online split of schema slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotPartition {
    offline: Vec<usize>,
    online: Vec<usize>,
}

impl SlotPartition {
    /// Partition from the schema's `online` flags. An interaction is online if
    /// either parent is online.
    pub fn from_schema(schema: &FeatureSchema) -> Self {
        let mut online: Vec<bool> = schema.slots().iter().map(|s| s.online).collect();
        for it in schema.interactions() {
            online[it.slot] |= online[it.left] || online[it.right];
        }
        let (on, off): (Vec<usize>, Vec<usize>) = (0..online.len()).partition(|&i| online[i]);
        Self { offline: off, online: on }
    }

    pub fn new(offline: Vec<usize>, online: Vec<usize>, schema: &FeatureSchema) -> Result<Self> {
        let mut seen = vec![false; schema.len()];
        for &i in offline.iter().chain(&online) {
            if i >= schema.len() {
                return Err(Error::Schema(format!("slot index {i} out of range")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Schema(format!("slot {:?} is in both partitions", schema.slots()[i].name)));
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Schema(format!("slot {:?} is in neither partition", schema.slots()[i].name)));
        }
        Ok(Self { offline, online })
    }

    pub fn offline(&self) -> &[usize] {
        &self.offline
    }

    pub fn online(&self) -> &[usize] {
        &self.online
    }
}

/// Offline portion of `b·x`, computed in batch and joined online.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialScore {
    pub user_id: String,
    pub offline_dot: f64,
    pub computed_at: f64,
    pub model_version: String,
}

fn partial_dot(indices: &[usize], values: &[f64], coefficients: &[f64]) -> f64 {
    indices.iter().map(|&i| values[i] * coefficients[i]).sum()
}

/// `offline_slot_values` is a full-width row; only offline slots are read.
pub fn partial_score(
    user_id: &str,
    offline_slot_values: &[f64],
    partition: &SlotPartition,
    model: &WeibullAftModel,
    computed_at: f64,
) -> Result<PartialScore> {
    check_width(offline_slot_values, model)?;
    Ok(PartialScore {
        user_id: user_id.to_owned(),
        offline_dot: partial_dot(&partition.offline, offline_slot_values, model.coefficients()),
        computed_at,
        model_version: model.version(),
    })
}

/// `μ = offline_dot + Σ_online b_i x_i`. Only online slots of
/// `online_slot_values` are read.
pub fn combine(
    partial: &PartialScore,
    online_slot_values: &[f64],
    partition: &SlotPartition,
    model: &WeibullAftModel,
) -> Result<f64> {
    check_width(online_slot_values, model)?;
    if partial.model_version != model.version() {
        return Err(Error::Schema(format!(
            "partial score from model {} combined with model {}",
            partial.model_version,
            model.version()
        )));
    }
    Ok(partial.offline_dot + partial_dot(&partition.online, online_slot_values, model.coefficients()))
}

fn check_width(values: &[f64], model: &WeibullAftModel) -> Result<()> {
    if values.len() != model.schema().len() {
        return Err(Error::Schema(format!("{} values for {} slots", values.len(), model.schema().len())));
    }
    Ok(())
}
