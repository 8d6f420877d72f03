//! Allocation programs `min sum_i tau_i  s.t.  sum_i a_ki / tau_i <= B_k`.
//!
//! With `u_i = 1/tau_i` the constraints become linear and the objective
//! `sum 1/u_i` is convex, so a log-barrier Newton method converges reliably and
//! its dual variables certify the answer.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp_model::{dot, LpInstance};
use crate::vertex_enum::VertexSet;

/// Inner Newton loop stops when half the squared decrement falls below this.
pub const INNER_TOL: f64 = 1e-10;
/// Outer loop stops when the duality gap bound is this small relative to the
/// objective.
pub const GAP_TOL: f64 = 1e-8;
pub const BARRIER_GROWTH: f64 = 5.0;

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationProblem {
    pub weights: Vec<Vec<f64>>,
    pub bounds: Vec<f64>,
}

impl AllocationProblem {
    pub fn new(weights: Vec<Vec<f64>>, bounds: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != bounds.len() {
            return Err(Error::InvalidParameter("need one bound per constraint row and at least one row".into()));
        }
        let n = weights[0].len();
        if weights.iter().any(|w| w.len() != n) {
            return Err(Error::InvalidParameter("weight rows differ in length".into()));
        }
        if weights.iter().flatten().any(|&a| !(a >= 0.0 && a.is_finite())) {
            return Err(Error::InvalidParameter("weights must be finite and nonnegative".into()));
        }
        if bounds.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
            return Err(Error::InvalidParameter("bounds must be positive".into()));
        }
        Ok(Self { weights, bounds })
    }

    pub fn num_vars(&self) -> usize {
        self.weights[0].len()
    }

    /// `sum_i a_ki / tau_i` for row `k`, with `0/0 = 0`.
    pub fn row_load(&self, k: usize, tau: &[f64]) -> f64 {
        self.weights[k]
            .iter()
            .zip(tau)
            .map(|(&a, &t)| if a == 0.0 { 0.0 } else { a / t })
            .sum()
    }

    /// Largest `load_k / B_k`; at most 1 for a feasible `tau`.
    pub fn max_relative_load(&self, tau: &[f64]) -> f64 {
        (0..self.bounds.len())
            .map(|k| self.row_load(k, tau) / self.bounds[k])
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TauAllocation {
    pub tau: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
}

pub fn solve_allocation(prob: &AllocationProblem) -> Result<TauAllocation> {
    let n = prob.num_vars();
    // rows scaled to a common bound of 1, vacuous rows dropped
    let rows: Vec<Vec<f64>> = prob
        .weights
        .iter()
        .zip(&prob.bounds)
        .filter(|(w, _)| w.iter().any(|&a| a > 0.0))
        .map(|(w, &b)| w.iter().map(|a| a / b).collect())
        .collect();
    if rows.is_empty() {
        return Err(Error::Degenerate);
    }
    let rows = prune_dominated(rows);
    let active: Vec<usize> = (0..n).filter(|&i| rows.iter().any(|r| r[i] > 0.0)).collect();
    let reduced: Vec<Vec<f64>> = rows.iter().map(|r| active.iter().map(|&i| r[i]).collect()).collect();

    let (tau_active, lambda) = if reduced.len() == 1 {
        let roots: Vec<f64> = reduced[0].iter().map(|a| a.sqrt()).collect();
        let total: f64 = roots.iter().sum();
        (roots.iter().map(|r| r * total).collect::<Vec<_>>(), vec![total * total])
    } else {
        barrier_solve(&reduced)?
    };

    let mut tau = vec![0.0; n];
    for (&i, &t) in active.iter().zip(&tau_active) {
        tau[i] = t;
    }
    let objective: f64 = tau.iter().sum();
    let kkt_residual = kkt_residual(&reduced, &tau_active, &lambda, objective)
        .max(prob.max_relative_load(&tau) - 1.0);
    Ok(TauAllocation { tau, objective, kkt_residual })
}

/// Remove duplicate rows and rows implied by a componentwise larger one.
fn prune_dominated(rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let dominates = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x >= y);
    let mut keep = vec![true; rows.len()];
    for k in 0..rows.len() {
        for j in 0..rows.len() {
            if j == k || !keep[j] {
                continue;
            }
            // among identical rows only the lowest index survives
            if dominates(&rows[j], &rows[k]) && (rows[j] != rows[k] || j < k) {
                keep[k] = false;
                break;
            }
        }
    }
    rows.into_iter().zip(keep).filter(|(_, k)| *k).map(|(r, _)| r).collect()
}

/// Max of stationarity error, relative complementary slackness, and
/// infeasibility, all for rows normalised to bound 1.
fn kkt_residual(rows: &[Vec<f64>], tau: &[f64], lambda: &[f64], objective: f64) -> f64 {
    let stationarity = (0..tau.len())
        .map(|i| {
            let s: f64 = rows.iter().zip(lambda).map(|(r, l)| l * r[i]).sum();
            (1.0 - s / (tau[i] * tau[i])).abs()
        })
        .fold(0.0, f64::max);
    let mut slackness = 0.0;
    let mut infeasible = 0.0f64;
    for (r, l) in rows.iter().zip(lambda) {
        let load: f64 = r.iter().zip(tau).map(|(a, t)| a / t).sum();
        slackness += l * (1.0 - load).max(0.0);
        infeasible = infeasible.max(load - 1.0);
    }
    stationarity.max(slackness / objective).max(infeasible)
}

/// Barrier path following on `min sum p_i / w_i  s.t.  G w <= 1`, where
/// `w_i = u_i * max_k a_ki` keeps every column of `G` at unit maximum.
/// Returns `(tau, lambda)` for the unscaled problem.
fn barrier_solve(rows: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rows[0].len();
    let k = rows.len();
    let col_max: Vec<f64> = (0..n).map(|i| rows.iter().map(|r| r[i]).fold(0.0, f64::max)).collect();
    let g: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&col_max).map(|(a, m)| a / m).collect()).collect();
    let p = col_max.clone();
    let objective = |w: &[f64]| p.iter().zip(w).map(|(p, w)| p / w).sum::<f64>();
    let slacks = |w: &[f64]| g.iter().map(|r| 1.0 - dot(r, w)).collect::<Vec<_>>();
    let barrier = |w: &[f64], t: f64| -> f64 {
        let s = slacks(w);
        if w.iter().any(|&v| v <= 0.0) || s.iter().any(|&v| v <= 0.0) {
            return f64::INFINITY;
        }
        t * objective(w) - s.iter().map(|v| v.ln()).sum::<f64>()
    };

    let newton = |w: &[f64], t: f64| -> Result<(Vec<f64>, f64)> {
        let s = slacks(w);
        let mut grad = DVector::from_fn(n, |i, _| -t * p[i] / (w[i] * w[i]));
        let mut hess = DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 * t * p[i] / w[i].powi(3) } else { 0.0 });
        for (r, sk) in g.iter().zip(&s) {
            let rv = DVector::from_column_slice(r);
            grad += &rv / *sk;
            hess += &rv * rv.transpose() / (sk * sk);
        }
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&(-&grad)),
            None => hess.lu().solve(&(-&grad)).ok_or(Error::NumericalBreakdown(t))?,
        };
        let dec2 = -grad.dot(&step);
        if !dec2.is_finite() {
            return Err(Error::NumericalBreakdown(t));
        }
        Ok((step.iter().copied().collect(), dec2))
    };
    let shifted = |w: &[f64], step: &[f64], alpha: f64| -> Vec<f64> {
        w.iter().zip(step).map(|(a, d)| a + alpha * d).collect()
    };

    let mut w = vec![0.5 / n as f64; n];
    let mut t = k as f64 / objective(&w);
    for _outer in 0..200 {
        for _inner in 0..100 {
            let (step, dec2) = newton(&w, t)?;
            if dec2 / 2.0 <= INNER_TOL {
                break;
            }
            let f0 = barrier(&w, t);
            let mut alpha = 1.0;
            loop {
                let trial = shifted(&w, &step, alpha);
                if barrier(&trial, t) <= f0 - 0.25 * alpha * dec2 {
                    w = trial;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-16 {
                    return Err(Error::NumericalBreakdown(t));
                }
            }
        }
        if k as f64 / t <= GAP_TOL * objective(&w) {
            // pure Newton steps to land on the central point, which makes
            // 1/(t s_k) an accurate dual estimate
            for _ in 0..8 {
                let (step, dec2) = newton(&w, t)?;
                let trial = shifted(&w, &step, 1.0);
                if dec2 < 1e-24 || !barrier(&trial, t).is_finite() {
                    break;
                }
                w = trial;
            }
            let s = slacks(&w);
            let lambda = s.iter().map(|sk| 1.0 / (t * sk)).collect();
            let tau = w.iter().zip(&col_max).map(|(w, m)| m / w).collect();
            return Ok((tau, lambda));
        }
        t *= BARRIER_GROWTH;
    }
    Err(Error::IterationCap(200))
}

/// `Low(I)`: rows `(s - x*)^2` with bound `(c^T (x* - s))^2` over every
/// non-optimal vertex `s`.
pub fn low_of_instance(inst: &LpInstance, vertices: &VertexSet) -> Result<(TauAllocation, f64)> {
    let c = inst.objective();
    let best = vertices.argmax(c).ok_or(Error::Degenerate)?;
    let xs = &vertices.points[best];
    let top = dot(c, xs);
    let mut weights = Vec::new();
    let mut bounds = Vec::new();
    for (k, s) in vertices.points.iter().enumerate() {
        if k == best {
            continue;
        }
        let gap = top - dot(c, s);
        if gap <= 1e-9 {
            return Err(Error::NonUniqueOptimum);
        }
        weights.push(s.iter().zip(xs).map(|(a, b)| (a - b).powi(2)).collect());
        bounds.push(gap * gap);
    }
    if weights.is_empty() {
        return Err(Error::Degenerate);
    }
    let alloc = solve_allocation(&AllocationProblem::new(weights, bounds)?)?;
    let low = alloc.objective;
    Ok((alloc, low))
}

/// Allocation that estimates every pairwise objective difference in `points`
/// to within `eps` with confidence `1 - delta`.
pub fn lowall(points: &[Vec<f64>], eps: f64, delta: f64) -> Result<TauAllocation> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter("need at least two points".into()));
    }
    if !(eps > 0.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("eps = {eps}, delta = {delta}")));
    }
    let bound = eps * eps / (2.0 * (2.0 / delta).ln());
    let mut weights = Vec::new();
    for (i, x) in points.iter().enumerate() {
        for y in &points[i + 1..] {
            weights.push(x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).collect::<Vec<f64>>());
        }
    }
    let bounds = vec![bound; weights.len()];
    solve_allocation(&AllocationProblem::new(weights, bounds)?)
}

/// Brute-force reference objective for problems with at most three active
/// coordinates.
///
/// The first active coordinates run over a geometric grid with the given
/// ratio; the last is set to the smallest value that makes every row
/// feasible. The result is an upper bound on the optimum that is tight to
/// roughly the grid ratio.
pub fn grid_objective(prob: &AllocationProblem, ratio: f64) -> Option<f64> {
    let n = prob.num_vars();
    let rows: Vec<Vec<f64>> = prob
        .weights
        .iter()
        .zip(&prob.bounds)
        .map(|(w, b)| w.iter().map(|a| a / b).collect())
        .collect();
    let active: Vec<usize> = (0..n).filter(|&i| rows.iter().any(|r| r[i] > 0.0)).collect();
    if active.is_empty() || active.len() > 3 {
        return None;
    }
    let col_max: Vec<f64> = active.iter().map(|&i| rows.iter().map(|r| r[i]).fold(0.0, f64::max)).collect();
    let hi = active.len() as f64 * col_max.iter().sum::<f64>();
    let grid = |lo: f64| {
        let steps = ((hi / lo).ln() / ratio.ln()).ceil() as usize + 1;
        (0..=steps).map(move |s| lo * ratio.powi(s as i32))
    };
    let (&last, free) = active.split_last()?;
    let close = |fixed: &[(usize, f64)]| -> Option<f64> {
        let mut need: f64 = 0.0;
        for r in &rows {
            let used: f64 = fixed.iter().map(|&(i, t)| r[i] / t).sum();
            if r[last] > 0.0 {
                let room = 1.0 - used;
                if room <= 0.0 {
                    return None;
                }
                need = need.max(r[last] / room);
            } else if used > 1.0 {
                return None;
            }
        }
        Some(need + fixed.iter().map(|&(_, t)| t).sum::<f64>())
    };
    let mut best = f64::INFINITY;
    match free {
        [] => best = close(&[])?,
        [i] => {
            for t in grid(col_max[0]) {
                if let Some(v) = close(&[(*i, t)]) {
                    best = best.min(v);
                }
            }
        }
        [i, j] => {
            for ti in grid(col_max[0]) {
                for tj in grid(col_max[1]) {
                    if ti + tj >= best {
                        break;
                    }
                    if let Some(v) = close(&[(*i, ti), (*j, tj)]) {
                        best = best.min(v);
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    best.is_finite().then_some(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp_model::{LinearProgram, UnknownSet};
    use crate::vertex_enum::enumerate_vertices;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn solve(w: Vec<Vec<f64>>, b: Vec<f64>) -> TauAllocation {
        solve_allocation(&AllocationProblem::new(w, b).unwrap()).unwrap()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    pub(crate) fn random_problem(rng: &mut ChaCha8Rng, n: usize, rows: usize) -> AllocationProblem {
        loop {
            let w: Vec<Vec<f64>> = (0..rows)
                .map(|_| {
                    (0..n)
                        .map(|_| if rng.gen_bool(0.25) { 0.0 } else { rng.gen_range(0.05..1.0) })
                        .collect()
                })
                .collect();
            if w.iter().flatten().all(|&a| a == 0.0) {
                continue;
            }
            let b = (0..rows).map(|_| rng.gen_range(0.1..1.0)).collect();
            return AllocationProblem::new(w, b).unwrap();
        }
    }

    #[test]
    fn single_row_closed_forms() {
        let a = solve(vec![vec![1.0, 0.0]], vec![1.0]);
        assert_eq!(a.tau, vec![1.0, 0.0]);
        assert_eq!(a.objective, 1.0);
        let a = solve(vec![vec![1.0, 1.0]], vec![1.0]);
        assert_eq!(a.tau, vec![2.0, 2.0]);
        assert_eq!(a.objective, 4.0);
        assert!(a.kkt_residual <= 1e-12);
    }

    #[test]
    fn separable_rows() {
        let a = solve(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 1.0]);
        assert!(close(a.tau[0], 1.0, 1e-6) && close(a.tau[1], 1.0, 1e-6));
        assert!(close(a.objective, 2.0, 1e-6));
        assert!(a.kkt_residual <= 1e-6, "{}", a.kkt_residual);
    }

    #[test]
    fn vacuous_rows() {
        let p = AllocationProblem::new(vec![vec![0.0, 0.0]], vec![1.0]).unwrap();
        assert_eq!(solve_allocation(&p), Err(Error::Degenerate));
        let a = solve(vec![vec![0.0, 0.0], vec![4.0, 0.0]], vec![1.0, 2.0]);
        assert!(close(a.objective, 2.0, 1e-12));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(AllocationProblem::new(vec![], vec![]).is_err());
        assert!(AllocationProblem::new(vec![vec![-1.0]], vec![1.0]).is_err());
        assert!(AllocationProblem::new(vec![vec![1.0]], vec![0.0]).is_err());
    }

    #[test]
    fn matches_grid_oracle_on_random_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..25 {
            let rows = rng.gen_range(1..=4);
            let p = random_problem(&mut rng, 3, rows);
            let a = solve_allocation(&p).unwrap();
            let grid = grid_objective(&p, 1.002).unwrap();
            assert!(a.objective <= grid * (1.0 + 1e-7), "{} > {grid}", a.objective);
            assert!(a.objective >= grid * 0.99, "{} << {grid}", a.objective);
            assert!(a.kkt_residual <= 1e-6, "{}", a.kkt_residual);
            assert!(p.max_relative_load(&a.tau) <= 1.0 + 1e-6);
        }
    }

    #[test]
    fn zero_tau_only_on_unused_coordinates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = random_problem(&mut rng, 4, 3);
            let a = solve_allocation(&p).unwrap();
            for i in 0..4 {
                let used = p.weights.iter().any(|w| w[i] > 0.0);
                assert_eq!(a.tau[i] > 0.0, used);
            }
        }
    }

    #[test]
    fn lowall_closed_form() {
        let a = lowall(&[vec![0.0, 0.0], vec![1.0, 0.0]], 0.1, 0.01).unwrap();
        // 2 ln(200) / 0.01 in extended precision
        assert!(close(a.tau[0], 1059.6634733, 1e-9), "{}", a.tau[0]);
        assert_eq!(a.tau[1], 0.0);
    }

    #[test]
    fn lowall_scales_with_eps() {
        let s = vec![vec![0.0, 0.0, 1.0], vec![1.0, 0.5, 1.0], vec![0.2, 1.0, 1.0], vec![0.7, 0.9, 1.0]];
        let a = lowall(&s, 0.1, 0.05).unwrap();
        let b = lowall(&s, 0.05, 0.05).unwrap();
        assert!(close(b.objective, 4.0 * a.objective, 1e-6));
        // the shared third coordinate needs no samples
        assert_eq!(a.tau[2], 0.0);
        assert!(matches!(lowall(&[vec![1.0], vec![1.0]], 0.1, 0.1), Err(Error::Degenerate)));
    }

    fn square(c: Vec<f64>) -> LpInstance {
        let p = LinearProgram::new(c, vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![1.0, 1.0], None).unwrap();
        LpInstance::new(p, 2.0, UnknownSet::UnknownC, vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn low_on_the_square() {
        // rows (1,1)/2.25, (0,1)/0.25, (1,0)/1; the first is slack at tau = (1, 4)
        let inst = square(vec![1.0, 0.5]);
        let v = enumerate_vertices(&inst).unwrap();
        let (alloc, low) = low_of_instance(&inst, &v).unwrap();
        assert!(close(low, 5.0, 1e-6), "{low}");
        assert!(alloc.kkt_residual <= 1e-6);
        for alpha in [0.5, 3.0] {
            let scaled = square(vec![alpha, 0.5 * alpha]);
            let (_, l2) = low_of_instance(&scaled, &v).unwrap();
            assert!(close(l2, low / (alpha * alpha), 1e-6));
        }
    }

    #[test]
    fn low_on_the_simplex() {
        // one-dimensional simplex {0 <= x <= 1}: a single row a = 1, B = 1
        let p = LinearProgram::new(vec![1.0], vec![vec![1.0]], vec![1.0], None).unwrap();
        let inst = LpInstance::new(p, 2.0, UnknownSet::UnknownC, vec![1.0]).unwrap();
        let (_, low) = low_of_instance(&inst, &enumerate_vertices(&inst).unwrap()).unwrap();
        assert_eq!(low, 1.0);

        // in the plane, (0,1) adds the row a = (1,1), B = 1, which dominates
        // a = (1,0) and gives tau = (2,2)
        let p = LinearProgram::new(vec![1.0, 0.0], vec![vec![1.0, 1.0]], vec![1.0], None).unwrap();
        let inst = LpInstance::new(p, 2.0, UnknownSet::UnknownC, vec![1.0, 1.0]).unwrap();
        let (alloc, low) = low_of_instance(&inst, &enumerate_vertices(&inst).unwrap()).unwrap();
        assert_eq!(alloc.tau, vec![2.0, 2.0]);
        assert_eq!(low, 4.0);
    }

    #[test]
    fn non_unique_optimum_is_reported() {
        let inst = square(vec![1.0, 0.0]);
        let v = enumerate_vertices(&inst).unwrap();
        assert_eq!(low_of_instance(&inst, &v).unwrap_err(), Error::NonUniqueOptimum);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn dropping_a_row_never_raises_the_optimum(seed in 0u64..10_000, rows in 2usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_problem(&mut rng, 3, rows);
            let full = solve_allocation(&p).unwrap();
            prop_assert!(full.kkt_residual <= 1e-6);
            let drop = rng.gen_range(0..rows);
            let mut w = p.weights.clone();
            let mut b = p.bounds.clone();
            w.remove(drop);
            b.remove(drop);
            if let Ok(sub) = solve_allocation(&AllocationProblem::new(w, b).unwrap()) {
                prop_assert!(sub.objective <= full.objective * (1.0 + 1e-6));
            }
        }

        #[test]
        fn feasible_and_certified(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_problem(&mut rng, 5, 6);
            let a = solve_allocation(&p).unwrap();
            prop_assert!(p.max_relative_load(&a.tau) <= 1.0 + 1e-6);
            prop_assert!(a.kkt_residual <= 1e-6);
        }
    }
}
