//! Per-horizon logistic regression baseline.

use serde::{Deserialize, Serialize};

use super::design::{chunked_sum, Matrix, Standardization};
use super::optim::{minimize, OptConfig};
use super::{FitDiagnostics, NamedCoefficient};
use crate::error::{Error, Result};
use crate::schema::{FeatureSchema, FeatureVector};

/// Design rows with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDesign {
    pub x: Matrix,
    pub y: Vec<bool>,
}

impl LabeledDesign {
    pub fn new(rows: &[&FeatureVector], labels: &[bool]) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Data(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        let cols = rows.first().map_or(0, |r| r.values().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.values().len() != cols {
                return Err(Error::Schema("rows of different width".into()));
            }
            data.extend_from_slice(r.values());
        }
        Ok(Self { x: Matrix { rows: rows.len(), cols, data }, y: labels.to_vec() })
    }
}

fn softplus(v: f64) -> f64 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Summed logistic loss `Σ log(1 + e^η) - y η` and its gradient.
pub fn logistic_loss_and_gradient(weights: &[f64], data: &LabeledDesign) -> Result<(f64, Vec<f64>)> {
    let p = data.x.cols;
    if weights.len() != p {
        return Err(Error::Domain(format!("expected {p} weights, got {}", weights.len())));
    }
    chunked_sum(data.y.len(), p, |range, g| {
        let mut total = 0.0;
        for i in range {
            let row = data.x.row(i);
            let eta: f64 = row.iter().zip(weights).map(|(x, w)| x * w).sum();
            if !eta.is_finite() {
                return Err(Error::NonFinite { index: i, what: format!("linear predictor {eta}") });
            }
            let y = if data.y[i] { 1.0 } else { 0.0 };
            total += softplus(eta) - y * eta;
            let r = sigmoid(eta) - y;
            for (gj, xj) in g.iter_mut().zip(row) {
                *gj += r * xj;
            }
        }
        Ok(total)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LogisticDocument", into = "LogisticDocument")]
pub struct LogisticModel {
    schema: FeatureSchema,
    horizon_hours: f64,
    weights: Vec<f64>,
    standardization: Standardization,
    diagnostics: FitDiagnostics,
}

impl LogisticModel {
    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn horizon_hours(&self) -> f64 {
        self.horizon_hours
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    pub fn linear_predictor(&self, x: &FeatureVector) -> Result<f64> {
        x.ensure_schema(&self.schema)?;
        Ok(x.dot(&self.weights))
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> Result<f64> {
        Ok(sigmoid(self.linear_predictor(x)?))
    }

    pub fn version(&self) -> String {
        super::param_digest("logistic", &self.weights, self.horizon_hours)
    }
}

#[derive(Serialize, Deserialize)]
struct LogisticDocument {
    schema: FeatureSchema,
    horizon_hours: f64,
    weights: Vec<NamedCoefficient>,
    standardization: Standardization,
    diagnostics: FitDiagnostics,
}

impl From<LogisticModel> for LogisticDocument {
    fn from(m: LogisticModel) -> Self {
        Self {
            weights: NamedCoefficient::zip(&m.schema, &m.weights),
            schema: m.schema,
            horizon_hours: m.horizon_hours,
            standardization: m.standardization,
            diagnostics: m.diagnostics,
        }
    }
}

impl TryFrom<LogisticDocument> for LogisticModel {
    type Error = Error;

    fn try_from(d: LogisticDocument) -> Result<Self> {
        if !(d.horizon_hours > 0.0 && d.horizon_hours.is_finite()) {
            return Err(Error::Domain(format!("horizon must be > 0, got {}", d.horizon_hours)));
        }
        let weights = NamedCoefficient::unzip(&d.schema, d.weights)?;
        if !weights.iter().all(|w| w.is_finite()) {
            return Err(Error::Domain("weights must be finite".into()));
        }
        Ok(Self {
            schema: d.schema,
            horizon_hours: d.horizon_hours,
            weights,
            standardization: d.standardization,
            diagnostics: d.diagnostics,
        })
    }
}

/// Ridge-regularized logistic MLE for one horizon.
pub fn fit_logistic_rows(
    rows: &[&FeatureVector],
    labels: &[bool],
    schema: &FeatureSchema,
    horizon_hours: f64,
    cfg: &OptConfig,
) -> Result<LogisticModel> {
    cfg.validate()?;
    if !(horizon_hours > 0.0 && horizon_hours.is_finite()) {
        return Err(Error::Domain(format!("horizon must be > 0, got {horizon_hours}")));
    }
    for r in rows {
        r.ensure_schema(schema)?;
    }
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::SingleClass);
    }
    let raw = LabeledDesign::new(rows, labels)?;
    let p = schema.len();
    let intercept = schema.intercept_index();
    let st = Standardization::fit((0..raw.x.rows).map(|i| raw.x.row(i)), p, intercept);
    let design = LabeledDesign { x: raw.x.standardized(&st), y: raw.y };
    let n = labels.len() as f64;
    let base = positives as f64 / n;
    let mut w0 = vec![0.0; p];
    w0[intercept] = (base / (1.0 - base)).ln();

    let ridge = cfg.ridge;
    let objective = |w: &[f64], grad: &mut [f64]| -> Result<f64> {
        let (v, g) = logistic_loss_and_gradient(w, &design)?;
        let mut total = v / n;
        for j in 0..p {
            grad[j] = g[j] / n;
            if j != intercept {
                total += 0.5 * ridge * w[j] * w[j];
                grad[j] += ridge * w[j];
            }
        }
        Ok(total)
    };
    let out = minimize(objective, w0, cfg)?;
    let (loss, _) = logistic_loss_and_gradient(&out.x, &design)?;
    let diagnostics = FitDiagnostics {
        final_negloglik: loss,
        objective: out.value,
        grad_norm: out.grad_norm,
        iterations: out.iterations,
        converged: out.converged,
        ridge,
        method: cfg.method,
        seed: cfg.seed,
        n_observations: labels.len(),
        n_positive: positives,
        objective_trace: out.trace,
    };
    if !out.converged {
        return Err(Error::NonConvergence(Box::new(diagnostics)));
    }
    Ok(LogisticModel {
        schema: schema.clone(),
        horizon_hours,
        weights: st.fold_back(&out.x, intercept),
        standardization: st,
        diagnostics,
    })
}
