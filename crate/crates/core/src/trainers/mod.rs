//! Model fitting: the Weibull AFT survival model and the logistic baseline,
//! both on a shared standardization + L-BFGS core.

mod aft;
mod design;
mod logistic;
pub mod optim;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use aft::{aft_negloglik_and_gradient, aft_negloglik_for, fit_aft, SurvivalDesign, WeibullAftModel};
pub use design::{Matrix, Standardization};
pub use logistic::{fit_logistic_rows, logistic_loss_and_gradient, sigmoid, LabeledDesign, LogisticModel};
pub use optim::{Method, OptConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Unpenalized negative log-likelihood (summed) at the solution.
    pub final_negloglik: f64,
    /// Minimized objective: mean negative log-likelihood plus ridge term.
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub ridge: f64,
    pub method: Method,
    pub seed: u64,
    pub n_observations: usize,
    /// Uncensored rows (AFT) or positive labels (logistic).
    pub n_positive: usize,
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct NamedCoefficient {
    name: String,
    value: f64,
}

impl NamedCoefficient {
    fn zip(schema: &crate::schema::FeatureSchema, values: &[f64]) -> Vec<Self> {
        schema.names().zip(values).map(|(n, &v)| Self { name: n.to_owned(), value: v }).collect()
    }

    fn unzip(schema: &crate::schema::FeatureSchema, named: Vec<Self>) -> crate::Result<Vec<f64>> {
        if named.len() != schema.len() || !named.iter().zip(schema.names()).all(|(c, n)| c.name == n) {
            return Err(crate::Error::Schema("coefficient names do not match the schema slots".into()));
        }
        Ok(named.into_iter().map(|c| c.value).collect())
    }
}

fn param_digest(kind: &str, coefficients: &[f64], extra: f64) -> String {
    let mut h = Sha256::new();
    h.update(kind.as_bytes());
    for c in coefficients {
        h.update(c.to_le_bytes());
    }
    h.update(extra.to_le_bytes());
    format!("{kind}-{}", &hex::encode(h.finalize())[..12])
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Persisted model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_type", rename_all = "snake_case")]
pub enum ModelFile {
    WeibullAft {
        format_version: u32,
        model_version: String,
        #[serde(flatten)]
        model: WeibullAftModel,
    },
    Logistic {
        format_version: u32,
        model_version: String,
        #[serde(flatten)]
        model: LogisticModel,
    },
}

impl ModelFile {
    pub fn version(&self) -> &str {
        match self {
            ModelFile::WeibullAft { model_version, .. } | ModelFile::Logistic { model_version, .. } => model_version,
        }
    }
}

impl From<WeibullAftModel> for ModelFile {
    fn from(model: WeibullAftModel) -> Self {
        ModelFile::WeibullAft { format_version: MODEL_FORMAT_VERSION, model_version: model.version(), model }
    }
}

impl From<LogisticModel> for ModelFile {
    fn from(model: LogisticModel) -> Self {
        ModelFile::Logistic { format_version: MODEL_FORMAT_VERSION, model_version: model.version(), model }
    }
}
