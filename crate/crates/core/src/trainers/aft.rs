//! Weibull accelerated failure-time regression, `log T = b·x + σ ε` with a
//! standard extreme-value `ε`, fitted by censored maximum likelihood.

use serde::{Deserialize, Serialize};

use super::design::{chunked_sum, Matrix, Standardization};
use super::optim::{minimize, OptConfig};
use super::{FitDiagnostics, NamedCoefficient};
use crate::error::{Error, Result};
use crate::pipeline::Observation;
use crate::schema::{FeatureSchema, FeatureVector};
use crate::survival::WeibullParams;

/// Design matrix with log durations and event indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDesign {
    pub x: Matrix,
    pub log_t: Vec<f64>,
    pub uncensored: Vec<bool>,
}

impl SurvivalDesign {
    pub fn from_observations(obs: &[Observation]) -> Result<Self> {
        let cols = obs.first().map_or(0, |o| o.features.values().len());
        let mut data = Vec::with_capacity(obs.len() * cols);
        let mut log_t = Vec::with_capacity(obs.len());
        let mut uncensored = Vec::with_capacity(obs.len());
        for (i, o) in obs.iter().enumerate() {
            if o.features.values().len() != cols || o.features.schema_id() != obs[0].features.schema_id() {
                return Err(Error::Schema(format!("observation {i} has a different schema")));
            }
            if !(o.duration > 0.0 && o.duration.is_finite()) {
                return Err(Error::Data(format!("observation {i} has duration {}", o.duration)));
            }
            data.extend_from_slice(o.features.values());
            log_t.push(o.duration.ln());
            uncensored.push(o.uncensored);
        }
        Ok(Self { x: Matrix { rows: obs.len(), cols, data }, log_t, uncensored })
    }

    pub fn len(&self) -> usize {
        self.log_t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_t.is_empty()
    }
}

/// Negative log-likelihood and its gradient at `params = (b, log σ)`.
///
/// With `z = (log T - b·x)/σ`, an uncensored row contributes
/// `-(z - e^z - log σ - log T)` and a censored row `e^z`.
pub fn aft_negloglik_and_gradient(params: &[f64], data: &SurvivalDesign) -> Result<(f64, Vec<f64>)> {
    let p = data.x.cols;
    if params.len() != p + 1 {
        return Err(Error::Domain(format!("expected {} parameters, got {}", p + 1, params.len())));
    }
    if data.is_empty() {
        return Err(Error::Data("no observations".into()));
    }
    let (b, log_sigma) = (&params[..p], params[p]);
    let sigma = log_sigma.exp();
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Numerical(format!("log_sigma {log_sigma} gives sigma {sigma}")));
    }
    chunked_sum(data.len(), p + 1, |range, g| {
        let mut total = 0.0;
        for i in range {
            let row = data.x.row(i);
            let mu: f64 = row.iter().zip(b).map(|(x, c)| x * c).sum();
            let z = (data.log_t[i] - mu) / sigma;
            let ez = z.exp();
            let delta = if data.uncensored[i] { 1.0 } else { 0.0 };
            let term = if data.uncensored[i] { -(z - ez - log_sigma - data.log_t[i]) } else { ez };
            if !term.is_finite() {
                return Err(Error::NonFinite { index: i, what: format!("log-likelihood term {term} (z = {z})") });
            }
            total += term;
            // d/dz of the term is e^z - δ; dz/db = -x/σ, dz/dlogσ = -z.
            let dz = ez - delta;
            for (gj, xj) in g[..p].iter_mut().zip(row) {
                *gj -= dz * xj / sigma;
            }
            g[p] += -dz * z + delta;
        }
        Ok(total)
    })
}

/// Convenience wrapper over observations.
pub fn aft_negloglik_for(params: &[f64], obs: &[Observation]) -> Result<(f64, Vec<f64>)> {
    aft_negloglik_and_gradient(params, &SurvivalDesign::from_observations(obs)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AftDocument", into = "AftDocument")]
pub struct WeibullAftModel {
    schema: FeatureSchema,
    coefficients: Vec<f64>,
    log_sigma: f64,
    standardization: Standardization,
    diagnostics: FitDiagnostics,
}

impl WeibullAftModel {
    /// Model with given raw-space coefficients, e.g. a known ground truth.
    pub fn from_parts(schema: FeatureSchema, coefficients: Vec<f64>, log_sigma: f64) -> Result<Self> {
        if coefficients.len() != schema.len() {
            return Err(Error::Schema(format!(
                "{} coefficients for {} slots",
                coefficients.len(),
                schema.len()
            )));
        }
        if !coefficients.iter().all(|c| c.is_finite()) || !log_sigma.is_finite() {
            return Err(Error::Domain("model parameters must be finite".into()));
        }
        let p = schema.len();
        Ok(Self {
            schema,
            coefficients,
            log_sigma,
            standardization: Standardization::identity(p),
            diagnostics: FitDiagnostics::default(),
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.schema.index_of(name).map(|i| self.coefficients[i])
    }

    pub fn log_sigma(&self) -> f64 {
        self.log_sigma
    }

    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp()
    }

    pub fn alpha(&self) -> f64 {
        1.0 / self.sigma()
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    /// `μ = b·x`.
    pub fn linear_predictor(&self, x: &FeatureVector) -> Result<f64> {
        x.ensure_schema(&self.schema)?;
        let mu = x.dot(&self.coefficients);
        if !mu.is_finite() {
            return Err(Error::Numerical(format!("linear predictor is {mu}")));
        }
        Ok(mu)
    }

    /// `λ(x) = exp(-b·x/σ)`.
    pub fn lambda(&self, x: &FeatureVector) -> Result<f64> {
        Ok((-self.linear_predictor(x)? / self.sigma()).exp())
    }

    pub fn weibull(&self, x: &FeatureVector) -> Result<WeibullParams> {
        WeibullParams::from_aft(self.linear_predictor(x)?, self.sigma())
    }

    /// Short content digest identifying this parameter set.
    pub fn version(&self) -> String {
        super::param_digest("aft", &self.coefficients, self.log_sigma)
    }
}

#[derive(Serialize, Deserialize)]
struct AftDocument {
    schema: FeatureSchema,
    coefficients: Vec<NamedCoefficient>,
    log_sigma: f64,
    sigma: f64,
    standardization: Standardization,
    diagnostics: FitDiagnostics,
}

impl From<WeibullAftModel> for AftDocument {
    fn from(m: WeibullAftModel) -> Self {
        Self {
            coefficients: NamedCoefficient::zip(&m.schema, &m.coefficients),
            sigma: m.sigma(),
            schema: m.schema,
            log_sigma: m.log_sigma,
            standardization: m.standardization,
            diagnostics: m.diagnostics,
        }
    }
}

impl TryFrom<AftDocument> for WeibullAftModel {
    type Error = Error;

    fn try_from(d: AftDocument) -> Result<Self> {
        let coefficients = NamedCoefficient::unzip(&d.schema, d.coefficients)?;
        let mut m = WeibullAftModel::from_parts(d.schema, coefficients, d.log_sigma)?;
        m.standardization = d.standardization;
        m.diagnostics = d.diagnostics;
        Ok(m)
    }
}

/// Fit by minimizing the mean negative log-likelihood plus
/// `ridge/2 · Σ b_j²` over standardized non-intercept coefficients.
pub fn fit_aft(obs: &[Observation], schema: &FeatureSchema, cfg: &OptConfig) -> Result<WeibullAftModel> {
    cfg.validate()?;
    if obs.is_empty() {
        return Err(Error::Data("no training observations".into()));
    }
    for (i, o) in obs.iter().enumerate() {
        o.features.ensure_schema(schema).map_err(|e| Error::Schema(format!("observation {i}: {e}")))?;
    }
    let n_uncensored = obs.iter().filter(|o| o.uncensored).count();
    if n_uncensored == 0 {
        return Err(Error::AllCensored);
    }
    let raw = SurvivalDesign::from_observations(obs)?;
    let p = schema.len();
    let intercept = schema.intercept_index();
    let st = Standardization::fit((0..raw.len()).map(|i| raw.x.row(i)), p, intercept);
    let design = SurvivalDesign { x: raw.x.standardized(&st), log_t: raw.log_t.clone(), uncensored: raw.uncensored.clone() };

    let n = design.len() as f64;
    let mut x0 = vec![0.0; p + 1];
    x0[intercept] = design.log_t.iter().zip(&design.uncensored).filter(|(_, &u)| u).map(|(t, _)| t).sum::<f64>()
        / n_uncensored as f64;

    let ridge = cfg.ridge;
    let objective = |theta: &[f64], grad: &mut [f64]| -> Result<f64> {
        let (v, g) = aft_negloglik_and_gradient(theta, &design)?;
        let mut total = v / n;
        for j in 0..=p {
            grad[j] = g[j] / n;
        }
        for j in (0..p).filter(|&j| j != intercept) {
            total += 0.5 * ridge * theta[j] * theta[j];
            grad[j] += ridge * theta[j];
        }
        Ok(total)
    };
    let out = minimize(objective, x0, cfg)?;

    let coefficients = st.fold_back(&out.x[..p], intercept);
    let log_sigma = out.x[p];
    let (final_nll, _) = aft_negloglik_and_gradient(&out.x, &design)?;
    let diagnostics = FitDiagnostics {
        final_negloglik: final_nll,
        objective: out.value,
        grad_norm: out.grad_norm,
        iterations: out.iterations,
        converged: out.converged,
        ridge,
        method: cfg.method,
        seed: cfg.seed,
        n_observations: obs.len(),
        n_positive: n_uncensored,
        objective_trace: out.trace,
    };
    if !out.converged {
        return Err(Error::NonConvergence(Box::new(diagnostics)));
    }
    Ok(WeibullAftModel { schema: schema.clone(), coefficients, log_sigma, standardization: st, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Slot, SlotKind};

    fn intercept_schema() -> FeatureSchema {
        FeatureSchema::new(vec![Slot::new("intercept", SlotKind::Intercept)]).unwrap()
    }

    fn obs(schema: &FeatureSchema, t: f64, uncensored: bool) -> Observation {
        Observation {
            user_id: "u".into(),
            origin_timestamp: 0.0,
            duration: t,
            uncensored,
            features: FeatureVector::new(schema, vec![1.0]).unwrap(),
        }
    }

    #[test]
    fn single_observation_hand_values() {
        let s = intercept_schema();
        let (v, _) = aft_negloglik_for(&[0.0, 0.0], &[obs(&s, 1.0, true)]).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        let (v, _) = aft_negloglik_for(&[0.0, 0.0], &[obs(&s, 1.0, false)]).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn overflow_names_the_observation() {
        let s = intercept_schema();
        let data = [obs(&s, 1.0, true), obs(&s, 1e300, false)];
        let err = aft_negloglik_for(&[0.0, -5.0], &data).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }), "{err}");
    }

    #[test]
    fn all_censored_is_rejected() {
        let s = intercept_schema();
        let data = [obs(&s, 1.0, false), obs(&s, 2.0, false)];
        assert!(matches!(fit_aft(&data, &s, &OptConfig::default()), Err(Error::AllCensored)));
    }

    #[test]
    fn exponential_closed_form() {
        // Unit-rate-ish exponential durations, no censoring, σ fixed near 1 by
        // the data: compare exp(-b0) with the exponential MLE n / ΣT.
        let s = intercept_schema();
        let ts: Vec<f64> = (1..=2000).map(|i| -((i as f64 - 0.5) / 2000.0f64).ln() * 3.0).collect();
        let data: Vec<Observation> = ts.iter().map(|&t| obs(&s, t, true)).collect();
        let m = fit_aft(&data, &s, &OptConfig::default()).unwrap();
        // With the scale free the Weibull MLE is not exactly the exponential
        // one, but on exponential quantiles σ̂ ≈ 1 and the rates agree.
        let rate_mle = data.len() as f64 / ts.iter().sum::<f64>();
        assert!((m.sigma() - 1.0).abs() < 0.02, "sigma {}", m.sigma());
        assert!(((-m.coefficients()[0]).exp() / rate_mle - 1.0).abs() < 0.01);
    }
}
