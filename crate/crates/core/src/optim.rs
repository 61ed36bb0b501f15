//! Derivative-free maximization for the hyperparameter search.

/// Outcome of a [`nelder_mead_max`] run.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// False if the budget ran out before the simplex values agreed to the
    /// relative tolerance.
    pub converged: bool,
}

/// Relative spread of simplex values below which the search stops.
pub const REL_TOL: f64 = 1e-6;

/// Maximize `f` starting at `x0` with a Nelder–Mead simplex of initial edge
/// `step`, using at most `budget` evaluations. Non-finite values count as −∞.
///
/// Each time the simplex collapses the search restarts from the best point, and
/// stops once a restart gains less than the tolerance.
pub fn nelder_mead_max<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], step: f64, budget: usize) -> OptimResult {
    let mut evals = 0usize;
    let mut cost = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };

    let mut start = x0.to_vec();
    let mut best_prev = f64::INFINITY;
    loop {
        let (x, v, collapsed) = run_simplex(&mut cost, &start, step, budget, &mut evals);
        let settled = best_prev.is_finite() && best_prev - v <= REL_TOL * best_prev.abs().max(1.0);
        if !collapsed || settled || evals >= budget {
            return OptimResult {
                x,
                value: -v,
                evaluations: evals,
                converged: collapsed,
            };
        }
        best_prev = v;
        start = x;
    }
}

/// One simplex run; returns (best point, best cost, whether it collapsed).
fn run_simplex<C: FnMut(&[f64], &mut usize) -> f64>(
    cost: &mut C,
    x0: &[f64],
    step: f64,
    budget: usize,
    evals: &mut usize,
) -> (Vec<f64>, f64, bool) {
    let n = x0.len();
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = Vec::with_capacity(n + 1);
    for p in &pts {
        if *evals >= budget {
            break;
        }
        vals.push(cost(p, evals));
    }
    if vals.len() < n + 1 {
        let (i, v) = argmin(&vals);
        return (pts[i].clone(), v, false);
    }

    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let (lo, hi) = (vals[0], vals[n]);
        if lo.is_finite() && (hi - lo).abs() <= REL_TOL * lo.abs().max(1.0) {
            return (pts[0].clone(), lo, true);
        }
        if *evals >= budget {
            return (pts[0].clone(), lo, false);
        }

        let centroid: Vec<f64> = (0..n).map(|k| pts[..n].iter().map(|p| p[k]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|k| centroid[k] + t * (pts[n][k] - centroid[k])).collect() };

        let xr = along(-1.0);
        let fr = cost(&xr, evals);
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = if *evals < budget { cost(&xe, evals) } else { f64::INFINITY };
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        if *evals >= budget {
            continue;
        }
        let outside = fr < vals[n];
        let xc = along(if outside { -0.5 } else { 0.5 });
        let fc = cost(&xc, evals);
        if (outside && fc <= fr) || (!outside && fc < vals[n]) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        // shrink toward the best vertex
        for i in 1..=n {
            if *evals >= budget {
                break;
            }
            pts[i] = (0..n).map(|k| pts[0][k] + 0.5 * (pts[i][k] - pts[0][k])).collect();
            vals[i] = cost(&pts[i], evals);
        }
    }
}

fn argmin(vals: &[f64]) -> (usize, f64) {
    vals.iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) })
}
