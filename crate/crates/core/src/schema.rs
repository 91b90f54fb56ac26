//! Feature schemas: the ordered list of slots making up a design row, and how
//! each slot is derived from raw event data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlotKind {
    /// Constant 1.
    Intercept,
    /// Named profile or activity feature read from the event's feature map.
    Raw { source: String },
    /// Badge count in the state after the event.
    BadgeCount,
    /// Hours the previous state had lasted when the event arrived (time since
    /// the later of the last visit and the last send).
    HoursSinceStateStart,
    /// Product of two other slots, referenced by name.
    Interaction { left: String, right: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    #[serde(flatten)]
    pub kind: SlotKind,
    /// Cleared to zero when a send starts a new state.
    #[serde(default)]
    pub reset_on_send: bool,
    /// Value is only known in real time (feature store lookup at decision time).
    #[serde(default)]
    pub online: bool,
}

impl Slot {
    pub fn new(name: impl Into<String>, kind: SlotKind) -> Self {
        Self { name: name.into(), kind, reset_on_send: false, online: false }
    }

    pub fn reset_on_send(mut self) -> Self {
        self.reset_on_send = true;
        self
    }

    pub fn online(mut self) -> Self {
        self.online = true;
        self
    }
}

/// Resolved interaction: indices of the two parent slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteractionSlot {
    pub slot: usize,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaFile", into = "SchemaFile")]
pub struct FeatureSchema {
    id: String,
    slots: Vec<Slot>,
    intercept: usize,
    badge: Option<usize>,
    interactions: Vec<InteractionSlot>,
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    #[serde(default)]
    id: Option<String>,
    slots: Vec<Slot>,
}

impl TryFrom<SchemaFile> for FeatureSchema {
    type Error = Error;

    fn try_from(file: SchemaFile) -> Result<Self> {
        let schema = FeatureSchema::new(file.slots)?;
        if let Some(id) = file.id {
            if id != schema.id {
                return Err(Error::Schema(format!(
                    "schema id {id} does not match its slots (expected {})",
                    schema.id
                )));
            }
        }
        Ok(schema)
    }
}

impl From<FeatureSchema> for SchemaFile {
    fn from(s: FeatureSchema) -> Self {
        SchemaFile { id: Some(s.id), slots: s.slots }
    }
}

impl FeatureSchema {
    pub fn new(slots: Vec<Slot>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, s) in slots.iter().enumerate() {
            if index.insert(s.name.as_str(), i).is_some() {
                return Err(Error::Schema(format!("duplicate slot name {:?}", s.name)));
            }
        }
        let intercepts: Vec<usize> = positions(&slots, |k| matches!(k, SlotKind::Intercept));
        let intercept = match intercepts.as_slice() {
            [i] => *i,
            [] => return Err(Error::Schema("schema needs an intercept slot".into())),
            _ => return Err(Error::Schema("schema has more than one intercept slot".into())),
        };
        let badges = positions(&slots, |k| matches!(k, SlotKind::BadgeCount));
        if badges.len() > 1 {
            return Err(Error::Schema("schema has more than one badge_count slot".into()));
        }
        let mut interactions = Vec::new();
        for (i, s) in slots.iter().enumerate() {
            if let SlotKind::Interaction { left, right } = &s.kind {
                let lookup = |n: &String| {
                    let j = *index.get(n.as_str()).ok_or_else(|| {
                        Error::Schema(format!("interaction {:?} references unknown slot {n:?}", s.name))
                    })?;
                    if matches!(slots[j].kind, SlotKind::Interaction { .. }) {
                        return Err(Error::Schema(format!(
                            "interaction {:?} has interaction parent {n:?}",
                            s.name
                        )));
                    }
                    Ok(j)
                };
                interactions.push(InteractionSlot { slot: i, left: lookup(left)?, right: lookup(right)? });
            }
        }
        let id = schema_digest(&slots);
        Ok(Self { id, slots, intercept, badge: badges.first().copied(), interactions })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|s| s.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.name == name)
    }

    pub fn intercept_index(&self) -> usize {
        self.intercept
    }

    pub fn badge_index(&self) -> Option<usize> {
        self.badge
    }

    pub fn interactions(&self) -> &[InteractionSlot] {
        &self.interactions
    }

    /// Assemble a design row from raw inputs.
    pub fn build(&self, inputs: &SlotInputs<'_>) -> Result<FeatureVector> {
        let mut values = vec![0.0; self.slots.len()];
        for (i, slot) in self.slots.iter().enumerate() {
            values[i] = match &slot.kind {
                SlotKind::Intercept => 1.0,
                SlotKind::Raw { source } => *inputs.raw.get(source).ok_or_else(|| {
                    Error::Schema(format!("missing raw feature {source:?} for slot {:?}", slot.name))
                })?,
                SlotKind::BadgeCount => f64::from(inputs.badge_count),
                SlotKind::HoursSinceStateStart => inputs.hours_since_state_start,
                SlotKind::Interaction { .. } => 0.0,
            };
        }
        self.fill_interactions(&mut values);
        FeatureVector::new(self, values)
    }

    /// Recompute every interaction slot from its parents, in place.
    pub fn fill_interactions(&self, values: &mut [f64]) {
        for it in &self.interactions {
            values[it.slot] = values[it.left] * values[it.right];
        }
    }
}

fn positions(slots: &[Slot], pred: impl Fn(&SlotKind) -> bool) -> Vec<usize> {
    slots.iter().enumerate().filter(|(_, s)| pred(&s.kind)).map(|(i, _)| i).collect()
}

fn schema_digest(slots: &[Slot]) -> String {
    let bytes = serde_json::to_vec(slots).expect("slots serialize");
    let digest = Sha256::digest(&bytes);
    format!("fs-{}", &hex::encode(digest)[..12])
}

/// Raw per-event values a schema draws its slots from.
#[derive(Debug, Clone, Copy)]
pub struct SlotInputs<'a> {
    pub raw: &'a BTreeMap<String, f64>,
    pub badge_count: u32,
    pub hours_since_state_start: f64,
}

/// Dense design row tied to a schema by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    schema_id: String,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(schema: &FeatureSchema, values: Vec<f64>) -> Result<Self> {
        if values.len() != schema.len() {
            return Err(Error::Schema(format!(
                "feature vector has {} entries, schema {} has {}",
                values.len(),
                schema.id(),
                schema.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Schema(format!(
                "feature slot {:?} is not finite ({})",
                schema.slots()[i].name,
                values[i]
            )));
        }
        if values[schema.intercept_index()] != 1.0 {
            return Err(Error::Schema("intercept slot must equal 1".into()));
        }
        Ok(Self { schema_id: schema.id().to_owned(), values })
    }

    pub fn schema_id(&self) -> &str {
        &self.schema_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn ensure_schema(&self, schema: &FeatureSchema) -> Result<()> {
        if self.schema_id != schema.id() {
            return Err(Error::Schema(format!(
                "feature vector belongs to schema {}, expected {}",
                self.schema_id,
                schema.id()
            )));
        }
        Ok(())
    }

    pub fn dot(&self, coefficients: &[f64]) -> f64 {
        dot(&self.values, coefficients)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn demo_schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            Slot::new("intercept", SlotKind::Intercept),
            Slot::new("network", SlotKind::Raw { source: "network".into() }),
            Slot::new("badge_count", SlotKind::BadgeCount).online(),
            Slot::new("hours_since", SlotKind::HoursSinceStateStart).reset_on_send().online(),
            Slot::new(
                "badge_x_network",
                SlotKind::Interaction { left: "badge_count".into(), right: "network".into() },
            ),
        ])
        .unwrap()
    }

    #[test]
    fn build_materializes_interactions() {
        let schema = demo_schema();
        let raw = BTreeMap::from([("network".to_owned(), 2.5)]);
        let x = schema
            .build(&SlotInputs { raw: &raw, badge_count: 3, hours_since_state_start: 7.0 })
            .unwrap();
        assert_eq!(x.values(), &[1.0, 2.5, 3.0, 7.0, 7.5]);
    }

    #[test]
    fn missing_raw_feature_is_schema_error() {
        let schema = demo_schema();
        let raw = BTreeMap::new();
        let err = schema
            .build(&SlotInputs { raw: &raw, badge_count: 0, hours_since_state_start: 0.0 })
            .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn rejects_malformed_schemas() {
        let no_intercept = vec![Slot::new("a", SlotKind::BadgeCount)];
        assert!(FeatureSchema::new(no_intercept).is_err());
        let dup = vec![Slot::new("a", SlotKind::Intercept), Slot::new("a", SlotKind::BadgeCount)];
        assert!(FeatureSchema::new(dup).is_err());
        let dangling = vec![
            Slot::new("c", SlotKind::Intercept),
            Slot::new("i", SlotKind::Interaction { left: "c".into(), right: "zzz".into() }),
        ];
        assert!(FeatureSchema::new(dangling).is_err());
    }

    #[test]
    fn schema_round_trips_through_json_and_checks_id() {
        let schema = demo_schema();
        let text = serde_json::to_string(&schema).unwrap();
        let back: FeatureSchema = serde_json::from_str(&text).unwrap();
        assert_eq!(back, schema);
        let tampered = text.replace(&schema.id()[3..9], "000000");
        assert!(serde_json::from_str::<FeatureSchema>(&tampered).is_err());
    }

    #[test]
    fn vector_validation() {
        let schema = demo_schema();
        assert!(FeatureVector::new(&schema, vec![1.0; 4]).is_err());
        assert!(FeatureVector::new(&schema, vec![1.0, f64::NAN, 0.0, 0.0, 0.0]).is_err());
        assert!(FeatureVector::new(&schema, vec![0.0, 1.0, 0.0, 0.0, 0.0]).is_err());
    }
}
