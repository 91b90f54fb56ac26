//! Weibull and standard extreme-value distribution functions, and the
//! send-versus-wait visit probabilities built from them.
//!
//! All durations are hours. Survival probabilities are formed in log space and
//! exponentiated last; `λ·t^α` is large for active users with long gaps and the
//! naive `1 - exp(-x)` loses every significant digit there.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Weibull law `F(t) = 1 - exp(-λ t^α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    lambda: f64,
    alpha: f64,
}

impl WeibullParams {
    pub fn new(lambda: f64, alpha: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(domain(format!("lambda must be finite and > 0, got {lambda}")));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(domain(format!("alpha must be finite and > 0, got {alpha}")));
        }
        Ok(Self { lambda, alpha })
    }

    /// Weibull law induced by an AFT linear predictor `mu` and scale `sigma`:
    /// `λ = exp(-mu/sigma)`, `α = 1/sigma`.
    pub fn from_aft(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(domain(format!("sigma must be finite and > 0, got {sigma}")));
        }
        Self::new((-mu / sigma).exp(), 1.0 / sigma)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Cumulative hazard `λ t^α`.
    pub fn cumulative_hazard(&self, t: f64) -> Result<f64> {
        check_time(t)?;
        Ok(self.lambda * t.powf(self.alpha))
    }

    /// `log(1 - F(t)) = -λ t^α`.
    pub fn log_survival(&self, t: f64) -> Result<f64> {
        Ok(-self.cumulative_hazard(t)?)
    }

    pub fn survival(&self, t: f64) -> Result<f64> {
        Ok(self.log_survival(t)?.exp())
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(domain(format!("time must be >= 0, got {t}")));
    }
    Ok(())
}

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon > 0.0) || horizon.is_infinite() {
        return Err(domain(format!("horizon must be finite and > 0, got {horizon}")));
    }
    Ok(())
}

pub fn weibull_cdf(t: f64, p: WeibullParams) -> Result<f64> {
    let h = p.cumulative_hazard(t)?;
    Ok(-(-h).exp_m1())
}

/// Value of a density that may be unbounded at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Density {
    Finite(f64),
    /// `t = 0` with `α < 1`: the density diverges.
    InfiniteAtOrigin,
}

impl Density {
    pub fn value(self) -> f64 {
        match self {
            Density::Finite(v) => v,
            Density::InfiniteAtOrigin => f64::INFINITY,
        }
    }

    pub fn is_boundary(self) -> bool {
        matches!(self, Density::InfiniteAtOrigin)
    }
}

pub fn weibull_pdf(t: f64, p: WeibullParams) -> Result<Density> {
    check_time(t)?;
    let WeibullParams { lambda, alpha } = p;
    if t == 0.0 {
        return Ok(match alpha.partial_cmp(&1.0) {
            Some(std::cmp::Ordering::Less) => Density::InfiniteAtOrigin,
            Some(std::cmp::Ordering::Equal) => Density::Finite(lambda),
            _ => Density::Finite(0.0),
        });
    }
    let log_f = alpha.ln() + lambda.ln() + (alpha - 1.0) * t.ln() - lambda * t.powf(alpha);
    Ok(Density::Finite(log_f.exp()))
}

/// Log-density and log-survival of the standard (minimum) extreme-value law,
/// `f(z) = exp(z - e^z)`, `1 - F(z) = exp(-e^z)`.
pub fn extreme_value_logpdf_logsf(z: f64) -> (f64, f64) {
    let ez = z.exp();
    (z - ez, -ez)
}

/// Probability of a visit within `horizon` after a send moves the user to `post`.
pub fn prob_visit_if_send(horizon: f64, post: WeibullParams) -> Result<f64> {
    check_horizon(horizon)?;
    weibull_cdf(horizon, post)
}

/// `(T + w0)^α - w0^α`, the hazard mass accumulated over the next `horizon`
/// hours by a state already `w0` hours old. Uses `expm1`/`ln_1p` so the
/// difference keeps precision when `w0 >> T`.
fn conditional_hazard_increment(horizon: f64, w0: f64, alpha: f64) -> f64 {
    if w0 == 0.0 {
        return horizon.powf(alpha);
    }
    w0.powf(alpha) * (alpha * (horizon / w0).ln_1p()).exp_m1()
}

fn check_elapsed(w0: f64) -> Result<()> {
    if !(w0.is_finite() && w0 >= 0.0) {
        return Err(domain(format!("elapsed time must be finite and >= 0, got {w0}")));
    }
    Ok(())
}

/// Probability of a visit within `horizon` if nothing is sent, given the
/// current state `pre` has already lasted `w0` hours without a visit.
pub fn prob_visit_if_not_send(horizon: f64, pre: WeibullParams, w0: f64) -> Result<f64> {
    check_horizon(horizon)?;
    check_elapsed(w0)?;
    let inc = conditional_hazard_increment(horizon, w0, pre.alpha);
    Ok(-(-pre.lambda * inc).exp_m1())
}

/// The current state, the state a send would move the user into, and the time
/// already spent in the current state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatePair {
    pub pre: WeibullParams,
    pub post: WeibullParams,
    elapsed_w0: f64,
}

impl StatePair {
    pub fn new(pre: WeibullParams, post: WeibullParams, elapsed_w0: f64) -> Result<Self> {
        check_elapsed(elapsed_w0)?;
        Ok(Self { pre, post, elapsed_w0 })
    }

    pub fn elapsed_w0(&self) -> f64 {
        self.elapsed_w0
    }
}

/// Additional probability of a visit within `horizon` gained by sending now,
/// `exp(-λ0((T+w0)^α0 - w0^α0)) - exp(-λ1 T^α1)`. Signed; negative when the
/// post-send state is slower than waiting.
pub fn delta_effect(sp: &StatePair, horizon: f64) -> Result<f64> {
    check_horizon(horizon)?;
    let wait_survival =
        (-sp.pre.lambda * conditional_hazard_increment(horizon, sp.elapsed_w0, sp.pre.alpha)).exp();
    let send_survival = (-sp.post.lambda * horizon.powf(sp.post.alpha)).exp();
    Ok(wait_survival - send_survival)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wp(lambda: f64, alpha: f64) -> WeibullParams {
        WeibullParams::new(lambda, alpha).unwrap()
    }

    const ONE_MINUS_INV_E: f64 = 0.632_120_558_828_557_7;

    #[test]
    fn cdf_examples() {
        assert_eq!(weibull_cdf(0.0, wp(3.0, 0.7)).unwrap(), 0.0);
        assert!((weibull_cdf(1.0, wp(1.0, 1.0)).unwrap() - ONE_MINUS_INV_E).abs() < 1e-15);
        assert!((weibull_cdf(4.0, wp(0.25, 1.0)).unwrap() - ONE_MINUS_INV_E).abs() < 1e-15);
    }

    #[test]
    fn cdf_rejects_bad_input() {
        assert!(weibull_cdf(-1.0, wp(1.0, 1.0)).is_err());
        assert!(WeibullParams::new(0.0, 1.0).is_err());
        assert!(WeibullParams::new(1.0, -2.0).is_err());
        assert!(WeibullParams::new(f64::INFINITY, 1.0).is_err());
        assert!(WeibullParams::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn cdf_saturates_without_overflow() {
        let p = wp(1e6, 2.0);
        assert_eq!(weibull_cdf(1e10, p).unwrap(), 1.0);
        assert_eq!(p.log_survival(1e10).unwrap(), -1e26);
    }

    #[test]
    fn pdf_examples() {
        let d = weibull_pdf(1.0, wp(1.0, 1.0)).unwrap().value();
        assert!((d - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(weibull_pdf(0.0, wp(1.0, 1.0)).unwrap(), Density::Finite(1.0));
        assert!(weibull_pdf(0.0, wp(1.0, 0.5)).unwrap().is_boundary());
        assert_eq!(weibull_pdf(0.0, wp(1.0, 2.0)).unwrap(), Density::Finite(0.0));
        assert!(weibull_pdf(-0.5, wp(1.0, 1.0)).is_err());
    }

    #[test]
    fn pdf_integrates_to_one() {
        // Substitute t = u^2 to remove the t^(-1/2) singularity, then composite
        // Simpson on u in [0, sqrt(50)].
        let p = wp(1.0, 0.5);
        let upper = 50f64.sqrt();
        let n = 20_000;
        let h = upper / n as f64;
        let g = |u: f64| {
            if u == 0.0 {
                // lim 2u * f(u^2) = 2 * α λ = 1
                1.0
            } else {
                2.0 * u * weibull_pdf(u * u, p).unwrap().value()
            }
        };
        let mut acc = g(0.0) + g(upper);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * g(i as f64 * h);
        }
        let integral = acc * h / 3.0;
        // Exact mass on [0,50] is 1 - exp(-sqrt 50) = 1 - 8.5e-4.
        let exact = weibull_cdf(50.0, p).unwrap();
        assert!((integral - exact).abs() < 1e-9, "{integral} vs {exact}");
        assert!((integral - 1.0).abs() < 1e-3);
    }

    #[test]
    fn extreme_value_examples() {
        assert_eq!(extreme_value_logpdf_logsf(0.0), (-1.0, -1.0));
        let (lp, ls) = extreme_value_logpdf_logsf(-20.0);
        // e^-20 = 2.0611536224385579e-9
        assert!((lp - (-20.0 - 2.061_153_622_438_558e-9)).abs() < 1e-14);
        assert!((ls + 2.061_153_622_438_558e-9).abs() < 1e-22);
        let (lp, ls) = extreme_value_logpdf_logsf(2.0);
        let e2 = 2f64.exp();
        assert_eq!(lp, 2.0 - e2);
        assert_eq!(ls, -e2);
    }

    #[test]
    fn send_probability_examples() {
        assert!((prob_visit_if_send(1.0, wp(1.0, 1.0)).unwrap() - ONE_MINUS_INV_E).abs() < 1e-15);
        assert!((prob_visit_if_send(1.0, wp(1.0, 0.5)).unwrap() - ONE_MINUS_INV_E).abs() < 1e-15);
        assert!(prob_visit_if_send(1e-12, wp(1.0, 1.0)).unwrap() < 1e-11);
        assert!(prob_visit_if_send(0.0, wp(1.0, 1.0)).is_err());
        assert!(prob_visit_if_send(-1.0, wp(1.0, 1.0)).is_err());
    }

    #[test]
    fn wait_probability_examples() {
        for w0 in [0.0, 0.3, 5.0, 100.0] {
            let p = prob_visit_if_not_send(1.0, wp(1.0, 1.0), w0).unwrap();
            assert!((p - ONE_MINUS_INV_E).abs() < 1e-15);
        }
        let pre = wp(0.7, 0.6);
        assert_eq!(
            prob_visit_if_not_send(3.0, pre, 0.0).unwrap(),
            weibull_cdf(3.0, pre).unwrap()
        );
        // 1 - exp(-(sqrt 2 - 1))
        let p = prob_visit_if_not_send(1.0, wp(1.0, 0.5), 1.0).unwrap();
        assert!((p - 0.339_140_198_593_172_07).abs() < 1e-12, "{p}");
        assert!(prob_visit_if_not_send(1.0, pre, -1.0).is_err());
        assert!(prob_visit_if_not_send(0.0, pre, 1.0).is_err());
    }

    #[test]
    fn wait_probability_matches_conditional_cdf_ratio() {
        let pre = wp(0.4, 0.7);
        for &(t, w0) in &[(1.0, 2.0), (24.0, 3.0), (0.5, 48.0)] {
            let f = |x: f64| weibull_cdf(x, pre).unwrap();
            let direct = (f(t + w0) - f(w0)) / (1.0 - f(w0));
            let p = prob_visit_if_not_send(t, pre, w0).unwrap();
            assert!((direct - p).abs() < 1e-12);
        }
    }

    #[test]
    fn hazard_increment_keeps_precision_far_from_origin() {
        // (T+w0)^α - w0^α for w0 = 1e8, T = 1, α = 1/2 is ~5e-5; the naive
        // difference of two ~1e4 numbers loses about eight digits.
        let inc = conditional_hazard_increment(1.0, 1e8, 0.5);
        let expected = 1e4 * ((1.0f64 + 1e-8).sqrt() - 1.0);
        let series = 0.5e-4 - 0.125e-12;
        assert!((inc - series).abs() < 1e-18, "{inc} {series} {expected}");
    }

    #[test]
    fn delta_effect_examples() {
        let p = wp(0.8, 0.6);
        let sp = StatePair::new(p, p, 0.0).unwrap();
        assert_eq!(delta_effect(&sp, 6.0).unwrap(), 0.0);

        let p = wp(1.0, 0.5);
        let sp = StatePair::new(p, p, 1.0).unwrap();
        let d1 = delta_effect(&sp, 1.0).unwrap();
        // exp(-(sqrt 2 - 1)) - exp(-1)
        assert!((d1 - 0.292_980_360_235_385_6).abs() < 1e-12, "{d1}");

        let sp = StatePair::new(p, p, 4.0).unwrap();
        let d4 = delta_effect(&sp, 1.0).unwrap();
        // exp(-(sqrt 5 - 2)) - exp(-1)
        assert!((d4 - 0.421_847_547_270_487_65).abs() < 1e-12, "{d4}");
        assert!(d4 > d1);
    }

    #[test]
    fn delta_effect_can_be_negative() {
        let sp = StatePair::new(wp(2.0, 0.5), wp(0.01, 0.5), 0.0).unwrap();
        assert!(delta_effect(&sp, 4.0).unwrap() < 0.0);
    }

    #[test]
    fn state_pair_rejects_negative_elapsed() {
        let p = wp(1.0, 1.0);
        assert!(StatePair::new(p, p, -0.1).is_err());
        assert!(StatePair::new(p, p, f64::NAN).is_err());
    }

    #[test]
    fn from_aft_maps_location_and_scale() {
        let p = WeibullParams::from_aft(2.0, 4.0).unwrap();
        assert!((p.lambda() - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(p.alpha(), 0.25);
        assert!(WeibullParams::from_aft(0.0, 0.0).is_err());
    }
}
