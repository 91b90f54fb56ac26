//! Reference solver for the click/volume LP by exhaustive vertex enumeration.
//!
//! maximize Σ dᵢyᵢ  s.t.  Σ pᵢyᵢ ≥ c_click,  Σ yᵢ ≤ c_send,  0 ≤ yᵢ ≤ 1.
//!
//! With two general constraints every vertex has at most two coordinates
//! strictly inside (0, 1); those are pinned by the general constraints taken
//! as equalities. Exponential in N, meant for N ≤ 8.

pub struct Vertex {
    pub y: Vec<f64>,
    pub objective: f64,
}

const FEAS_TOL: f64 = 1e-12;

fn feasible(y: &[f64], p: &[f64], c_click: f64, c_send: f64) -> bool {
    let clicks: f64 = y.iter().zip(p).map(|(a, b)| a * b).sum();
    let sends: f64 = y.iter().sum();
    y.iter().all(|&v| (-FEAS_TOL..=1.0 + FEAS_TOL).contains(&v))
        && clicks >= c_click - 1e-10
        && sends <= c_send + 1e-10
}

/// Best vertex, or `None` when the LP is infeasible.
pub fn solve(d: &[f64], p: &[f64], c_click: f64, c_send: f64) -> Option<Vertex> {
    let n = d.len();
    let mut best: Option<Vertex> = None;
    let mut consider = |y: Vec<f64>| {
        if feasible(&y, p, c_click, c_send) {
            let objective: f64 = y.iter().zip(d).map(|(a, b)| a * b).sum();
            if best.as_ref().is_none_or(|b| objective > b.objective) {
                best = Some(Vertex { y, objective });
            }
        }
    };
    // Each coordinate is 0, 1 or free (code 2).
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let mut y = vec![0.0; n];
        let mut free = Vec::new();
        let mut c = code;
        for (i, yi) in y.iter_mut().enumerate() {
            match c % 3 {
                0 => {}
                1 => *yi = 1.0,
                _ => free.push(i),
            }
            c /= 3;
        }
        let fixed_clicks: f64 = y.iter().zip(p).map(|(a, b)| a * b).sum();
        let fixed_sends: f64 = y.iter().sum();
        match free.len() {
            0 => consider(y),
            1 => {
                let i = free[0];
                // tight click constraint
                if p[i] != 0.0 {
                    let mut z = y.clone();
                    z[i] = (c_click - fixed_clicks) / p[i];
                    consider(z);
                }
                // tight volume constraint
                let mut z = y.clone();
                z[i] = c_send - fixed_sends;
                consider(z);
            }
            2 => {
                let (i, j) = (free[0], free[1]);
                // p_i y_i + p_j y_j = c_click - fixed_clicks; y_i + y_j = c_send - fixed_sends
                let det = p[i] - p[j];
                if det != 0.0 {
                    let rc = c_click - fixed_clicks;
                    let rs = c_send - fixed_sends;
                    let yi = (rc - p[j] * rs) / det;
                    let yj = rs - yi;
                    let mut z = y.clone();
                    z[i] = yi;
                    z[j] = yj;
                    consider(z);
                }
            }
            _ => {}
        }
    }
    best
}
