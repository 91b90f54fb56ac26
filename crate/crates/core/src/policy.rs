//! Send/hold decision rules over scored candidates: a global delta threshold,
//! a per-user ratio threshold, and the click/volume-constrained LP solved
//! through its two dual prices.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub user_id: String,
    pub delta: f64,
    pub p_wait: f64,
    pub p_click: f64,
}

impl Candidate {
    pub fn new(user_id: impl Into<String>, delta: f64, p_wait: f64, p_click: f64) -> Result<Self> {
        let c = Self { user_id: user_id.into(), delta, p_wait, p_click };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |v: f64| (0.0..=1.0).contains(&v);
        if !self.delta.is_finite() || !(-1.0..=1.0).contains(&self.delta) {
            return Err(Error::Data(format!("candidate {}: delta {} outside [-1, 1]", self.user_id, self.delta)));
        }
        if !prob(self.p_wait) || !prob(self.p_click) {
            return Err(Error::Data(format!("candidate {}: probabilities must lie in [0, 1]", self.user_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Threshold,
    Ratio,
    Moo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionFlag {
    /// Ratio rule with zero wait probability; decided by the sign of delta.
    ZeroPWait,
    /// LP solution was fractional and has been rounded.
    Fractional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub user_id: String,
    pub y: f64,
    pub send: bool,
    pub flag: Option<DecisionFlag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Duals {
    /// Price of the minimum-click constraint.
    pub kappa1: f64,
    /// Price of the send-volume constraint; the global score threshold.
    pub kappa2: f64,
}

impl Duals {
    /// `Some(send)` when `delta + κ1·p_click` is clearly above or below `κ2`,
    /// `None` within `tol` of the boundary, where the LP may be fractional.
    pub fn rule(&self, delta: f64, p_click: f64, tol: f64) -> Option<bool> {
        let s = delta + self.kappa1 * p_click;
        if s > self.kappa2 + tol {
            Some(true)
        } else if s < self.kappa2 - tol {
            Some(false)
        } else {
            None
        }
    }
}

fn binary(c: &Candidate, send: bool, flag: Option<DecisionFlag>) -> Decision {
    Decision { user_id: c.user_id.clone(), y: if send { 1.0 } else { 0.0 }, send, flag }
}

/// Send exactly when `delta > kappa`.
pub fn threshold_rule(candidates: &[Candidate], kappa: f64) -> Vec<Decision> {
    candidates.iter().map(|c| binary(c, c.delta > kappa, None)).collect()
}

/// Send exactly when `delta / p_wait > kappa`. A zero wait probability makes
/// the ratio ±∞ by the sign of delta.
pub fn ratio_rule(candidates: &[Candidate], kappa: f64) -> Vec<Decision> {
    candidates
        .iter()
        .map(|c| {
            if c.p_wait == 0.0 {
                let ratio = if c.delta > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
                binary(c, ratio > kappa, Some(DecisionFlag::ZeroPWait))
            } else {
                binary(c, c.delta / c.p_wait > kappa, None)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MooConfig {
    pub c_click: f64,
    pub c_send: f64,
}

impl MooConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c_click", self.c_click), ("c_send", self.c_send)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MooSolution {
    /// Fractional LP solution, aligned with the input candidates.
    pub y: Vec<f64>,
    pub objective: f64,
    pub clicks: f64,
    pub sends: f64,
    pub duals: Duals,
}

impl MooSolution {
    pub fn fractional_count(&self, tol: f64) -> usize {
        self.y.iter().filter(|&&v| v > tol && v < 1.0 - tol).count()
    }
}

/// Candidates in tie-break order: user id, then input position.
fn canonical_order(c: &[Candidate]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..c.len()).collect();
    idx.sort_by(|&a, &b| c[a].user_id.cmp(&c[b].user_id).then(a.cmp(&b)));
    idx
}

/// Lagrangian maximizer for a fixed click price: fill the send budget with the
/// highest positive scores `delta + κ1·p_click`.
fn greedy(c: &[Candidate], order: &[usize], kappa1: f64, budget: f64) -> Vec<f64> {
    let mut ranked: Vec<(f64, usize)> =
        order.iter().map(|&i| (c[i].delta + kappa1 * c[i].p_click, i)).filter(|(s, _)| *s > 0.0).collect();
    // stable sort keeps canonical order among equal scores
    ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    let mut y = vec![0.0; c.len()];
    let mut left = budget;
    for (_, i) in ranked {
        if left <= 0.0 {
            break;
        }
        y[i] = left.min(1.0);
        left -= y[i];
    }
    y
}

fn clicks(c: &[Candidate], y: &[f64]) -> f64 {
    c.iter().zip(y).map(|(c, y)| c.p_click * y).sum()
}

/// Maximize `Σ delta_i y_i` subject to `Σ p_click_i y_i >= c_click`,
/// `Σ y_i <= c_send`, `0 <= y_i <= 1`.
///
/// The click price κ1 is found by bisection on the monotone click count of
/// the Lagrangian maximizer. At the crossing, candidates whose selection
/// changes are tied at the threshold κ2; the primal solution is completed on
/// that tie set with at most two fractional entries.
pub fn moo_solve(candidates: &[Candidate], cfg: &MooConfig) -> Result<MooSolution> {
    cfg.validate()?;
    if candidates.is_empty() {
        return Err(Error::Data("no candidates".into()));
    }
    for c in candidates {
        c.validate()?;
    }
    let order = canonical_order(candidates);
    let budget = cfg.c_send;
    let need = cfg.c_click;
    let ctol = 1e-12 * need.max(1.0);

    let max_clicks = {
        let mut ps: Vec<f64> = candidates.iter().map(|c| c.p_click).collect();
        ps.sort_by(|a, b| b.total_cmp(a));
        let mut left = budget;
        let mut total = 0.0;
        for p in ps {
            if left <= 0.0 {
                break;
            }
            total += p * left.min(1.0);
            left -= 1.0;
        }
        total
    };
    if max_clicks < need - ctol {
        return Err(Error::Infeasible(format!(
            "at most {max_clicks} expected clicks within {budget} sends, {need} required"
        )));
    }

    let y0 = greedy(candidates, &order, 0.0, budget);
    let (y, kappa1) = if clicks(candidates, &y0) >= need - ctol {
        (y0, 0.0)
    } else {
        let mut lo = 0.0;
        let mut hi = 1.0;
        while clicks(candidates, &greedy(candidates, &order, hi, budget)) < need - ctol {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::Numerical("click price search diverged".into()));
            }
        }
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if clicks(candidates, &greedy(candidates, &order, mid, budget)) >= need - ctol {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let below = greedy(candidates, &order, lo, budget);
        let above = greedy(candidates, &order, hi, budget);
        (complete_on_ties(candidates, &order, &below, &above, budget, need)?, hi)
    };

    let scores: Vec<f64> = candidates.iter().map(|c| c.delta + kappa1 * c.p_click).collect();
    let sends: f64 = y.iter().sum();
    let kappa2 = if sends >= budget - 1e-12 * budget.max(1.0) {
        let lowest_selected =
            y.iter().zip(&scores).filter(|(&v, _)| v > 0.0).map(|(_, &s)| s).fold(f64::INFINITY, f64::min);
        if lowest_selected.is_finite() {
            lowest_selected.max(0.0)
        } else {
            scores.iter().copied().fold(0.0, f64::max)
        }
    } else {
        0.0
    };
    Ok(MooSolution {
        objective: candidates.iter().zip(&y).map(|(c, y)| c.delta * y).sum(),
        clicks: clicks(candidates, &y),
        sends,
        y,
        duals: Duals { kappa1, kappa2 },
    })
}

/// Combine the Lagrangian maximizers just below and above the click price.
/// Items chosen by both stay at 1; items where they differ are tied and are
/// filled to meet the click target exactly.
fn complete_on_ties(
    c: &[Candidate],
    order: &[usize],
    below: &[f64],
    above: &[f64],
    budget: f64,
    need: f64,
) -> Result<Vec<f64>> {
    let mut y = vec![0.0; c.len()];
    let mut ties = Vec::new();
    for &i in order {
        if below[i] == 1.0 && above[i] == 1.0 {
            y[i] = 1.0;
        } else if below[i] > 0.0 || above[i] > 0.0 {
            ties.push(i);
        }
    }
    let fixed: f64 = y.iter().sum();
    let target = need - clicks(c, &y);
    let full = |v: &[f64]| v.iter().sum::<f64>() >= budget - 1e-12 * budget.max(1.0);
    if full(below) && full(above) {
        let room = budget - fixed;
        fill_window(c, &ties, room, target, &mut y)?;
    } else {
        // Volume is slack, so κ2 = 0: cover the click target with the fewest
        // sends, highest click probability first.
        ties.sort_by(|&a, &b| c[b].p_click.total_cmp(&c[a].p_click));
        let mut got = 0.0;
        for i in ties {
            if got >= target {
                break;
            }
            let p = c[i].p_click;
            if p <= 0.0 {
                continue;
            }
            y[i] = ((target - got) / p).min(1.0);
            got += p * y[i];
        }
    }
    Ok(y)
}

/// Put `room` units of send mass on `ties` so that clicks equal `target`:
/// slide a window of width `room` along the ties ordered by click
/// probability. Only the two cells at the window edges are fractional.
fn fill_window(c: &[Candidate], ties: &[usize], room: f64, target: f64, y: &mut [f64]) -> Result<()> {
    let mut t = ties.to_vec();
    t.sort_by(|&a, &b| c[a].p_click.total_cmp(&c[b].p_click));
    let m = t.len() as f64;
    if room <= 0.0 || t.is_empty() {
        return Ok(());
    }
    let room = room.min(m);
    let span = m - room;
    let cover = |x: f64| -> Vec<f64> {
        (0..t.len()).map(|k| ((x + room).min(k as f64 + 1.0) - x.max(k as f64)).clamp(0.0, 1.0)).collect()
    };
    let q = |x: f64| cover(x).iter().zip(&t).map(|(w, &i)| w * c[i].p_click).sum::<f64>();
    let mut knots: Vec<f64> = (0..=t.len())
        .flat_map(|k| [k as f64, k as f64 - room])
        .filter(|&x| (0.0..=span).contains(&x))
        .collect();
    knots.push(0.0);
    knots.push(span);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let mut x = span;
    for w in knots.windows(2) {
        let (qa, qb) = (q(w[0]), q(w[1]));
        if qb >= target {
            x = if qb > qa { w[0] + (target - qa).max(0.0) / (qb - qa) * (w[1] - w[0]) } else { w[0] };
            break;
        }
    }
    if knots.len() == 1 {
        x = knots[0];
    }
    for (w, &i) in cover(x).iter().zip(&t) {
        y[i] = *w;
    }
    Ok(())
}

/// Binary decisions from an LP solution. Integral entries are kept; the
/// fractional mass (at most two entries) is rounded to the nearest whole
/// number of sends and given to the fractional candidates in descending delta
/// order.
pub fn round_moo(candidates: &[Candidate], sol: &MooSolution) -> Vec<Decision> {
    let tol = 1e-9;
    let mut out: Vec<Decision> = candidates
        .iter()
        .zip(&sol.y)
        .map(|(c, &y)| Decision { user_id: c.user_id.clone(), y, send: y >= 1.0 - tol, flag: None })
        .collect();
    let mut frac: Vec<usize> = (0..out.len()).filter(|&i| out[i].y > tol && out[i].y < 1.0 - tol).collect();
    let mass: f64 = frac.iter().map(|&i| out[i].y).sum();
    frac.sort_by(|&a, &b| {
        candidates[b].delta.total_cmp(&candidates[a].delta).then(candidates[a].user_id.cmp(&candidates[b].user_id))
    });
    let slots = mass.round() as usize;
    for (k, i) in frac.into_iter().enumerate() {
        out[i].send = k < slots;
        out[i].flag = Some(DecisionFlag::Fractional);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cands(d: &[f64], p: &[f64]) -> Vec<Candidate> {
        d.iter()
            .zip(p)
            .enumerate()
            .map(|(i, (&d, &p))| Candidate::new(format!("u{i}"), d, 0.5, p).unwrap())
            .collect()
    }

    #[test]
    fn threshold_is_strict() {
        let c = cands(&[0.3, 0.2], &[0.0, 0.0]);
        let d = threshold_rule(&c, 0.2);
        assert!(d[0].send && !d[1].send);
        let all = threshold_rule(&cands(&[-0.99, 0.0, 1.0], &[0.0; 3]), -1.0);
        assert!(all.iter().all(|d| d.send));
    }

    #[test]
    fn ratio_examples() {
        let c = vec![Candidate::new("a", 0.1, 0.5, 0.0).unwrap(), Candidate::new("b", 0.1, 0.9, 0.0).unwrap()];
        let d = ratio_rule(&c, 0.15);
        assert!(d[0].send && !d[1].send);
        assert!(ratio_rule(&c, f64::INFINITY).iter().all(|d| !d.send));
    }

    #[test]
    fn ratio_zero_wait_probability_uses_sign() {
        let c = vec![Candidate::new("a", 0.2, 0.0, 0.0).unwrap(), Candidate::new("b", -0.1, 0.0, 0.0).unwrap()];
        let d = ratio_rule(&c, 5.0);
        assert!(d[0].send && !d[1].send);
        assert!(d.iter().all(|d| d.flag == Some(DecisionFlag::ZeroPWait)));
        assert!(!ratio_rule(&c, f64::INFINITY)[0].send);
    }

    #[test]
    fn candidate_validation() {
        assert!(Candidate::new("a", 1.5, 0.5, 0.5).is_err());
        assert!(Candidate::new("a", 0.1, -0.1, 0.5).is_err());
        assert!(Candidate::new("a", 0.1, 0.5, f64::NAN).is_err());
    }

    #[test]
    fn worked_moo_instance() {
        let c = cands(&[0.3, 0.2, 0.1], &[0.1, 0.3, 0.2]);
        let sol = moo_solve(&c, &MooConfig { c_click: 0.5, c_send: 2.0 }).unwrap();
        for (got, want) in sol.y.iter().zip([0.0, 1.0, 1.0]) {
            assert!((got - want).abs() < 1e-9, "{:?}", sol.y);
        }
        assert!((sol.objective - 0.3).abs() < 1e-9);
        assert!((sol.duals.kappa1 - 2.0).abs() < 1e-9, "{:?}", sol.duals);
        assert!((sol.duals.kappa2 - 0.5).abs() < 1e-9, "{:?}", sol.duals);
    }

    #[test]
    fn moo_unconstrained_and_empty_budget() {
        let c = cands(&[0.3, 0.2, 0.1], &[0.1, 0.3, 0.2]);
        let sol = moo_solve(&c, &MooConfig { c_click: 0.0, c_send: 3.0 }).unwrap();
        assert_eq!(sol.y, vec![1.0; 3]);
        let sol = moo_solve(&c, &MooConfig { c_click: 0.0, c_send: 0.0 }).unwrap();
        assert_eq!(sol.y, vec![0.0; 3]);
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn moo_negative_deltas_send_nothing_when_allowed() {
        let c = cands(&[-0.3, -0.2, 0.0], &[0.1, 0.3, 0.2]);
        let sol = moo_solve(&c, &MooConfig { c_click: 0.0, c_send: 3.0 }).unwrap();
        assert_eq!(sol.y, vec![0.0; 3]);
    }

    #[test]
    fn moo_infeasible_reports() {
        let c = cands(&[0.3, 0.2], &[0.1, 0.3]);
        let err = moo_solve(&c, &MooConfig { c_click: 0.5, c_send: 5.0 }).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
        // feasible on total clicks, but not within one send
        let err = moo_solve(&c, &MooConfig { c_click: 0.35, c_send: 1.0 }).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn moo_fractional_budget() {
        let c = cands(&[0.3, 0.2, 0.1], &[0.0, 0.0, 0.0]);
        let sol = moo_solve(&c, &MooConfig { c_click: 0.0, c_send: 1.5 }).unwrap();
        assert_eq!(sol.y, vec![1.0, 0.5, 0.0]);
        assert!((sol.duals.kappa2 - 0.2).abs() < 1e-12);
        let d = round_moo(&c, &sol);
        assert_eq!(d.iter().filter(|d| d.send).count(), 2);
        assert_eq!(d[1].flag, Some(DecisionFlag::Fractional));
    }

    #[test]
    fn moo_click_constraint_with_slack_volume() {
        // Only one user has positive delta; clicks force another send while the
        // budget stays slack, so the volume price is zero.
        let c = cands(&[0.2, -0.05, -0.1], &[0.1, 0.5, 0.9]);
        let sol = moo_solve(&c, &MooConfig { c_click: 0.55, c_send: 3.0 }).unwrap();
        assert_eq!(sol.duals.kappa2, 0.0);
        assert!((sol.clicks - 0.55).abs() < 1e-12);
        // cheapest way to buy 0.45 clicks: 0.5 of user 2 costs 0.05 of delta,
        // 0.9 of user 1 would cost 0.045; the LP picks user 1.
        assert!((sol.objective - (0.2 - 0.045)).abs() < 1e-12, "{:?}", sol);
    }
}
