//! Reference strategies for unknown `b`: uniform up-front sampling, and an
//! oracle that knows which rows bind at the optimum.

use crate::ellipsoid::solve_lp_ellipsoid;
use crate::error::{Error, Result};
use crate::lp_model::{LpInstance, ToleranceParams, UnknownSet};
use crate::report::{AlgorithmId, AlgorithmOutput, BINDING_TOL};
use crate::sampling::{NoisyOracle, SampleLedger};

/// `ceil(4 sigma^2 ln(k / delta) / eps^2)`: enough samples per row for a
/// union bound over `k` rows.
pub fn uniform_sample_count(sigma: f64, k: usize, delta: f64, eps_feas: f64) -> u64 {
    (4.0 * sigma * sigma * (k as f64 / delta).ln() / (eps_feas * eps_feas)).ceil() as u64
}

/// Number of rows (including sign and box rows) tight at the exact optimum.
pub fn binding_count(inst: &LpInstance) -> usize {
    let x = &inst.optimum().point;
    inst.binding_set(x, BINDING_TOL).len() + inst.program().active_known_rows(x, BINDING_TOL)
}

fn require_unknown_b(inst: &LpInstance) -> Result<()> {
    if inst.unknown_set() != UnknownSet::UnknownB {
        return Err(Error::InvalidParameter("baseline needs an unknown-b instance".into()));
    }
    Ok(())
}

/// Solve with every estimated row loosened by `eps_feas / 2`, so that the true
/// optimum stays feasible while the answer stays within `eps_feas` of the true
/// constraints, as long as each estimate is within `eps_feas / 2`.
fn solve_estimate(
    inst: &LpInstance,
    mut rhs: Vec<f64>,
    estimated: &[usize],
    tol: &ToleranceParams,
) -> (Option<Vec<f64>>, Option<String>) {
    for &i in estimated {
        rhs[i] += tol.eps_feas / 2.0;
    }
    let program = inst.program().with_rhs(rhs);
    match solve_lp_ellipsoid(&program, inst.radius_bound(), tol.eps_opt.min(tol.eps_feas) / 2.0) {
        Ok(sol) => (Some(sol.point), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

/// Sample every row the same number of times, then solve the LP on the
/// empirical means.
pub fn run_static(inst: &LpInstance, tol: &ToleranceParams, seed: u64) -> Result<AlgorithmOutput> {
    require_unknown_b(inst)?;
    let m = inst.num_constraints();
    let mut oracle = NoisyOracle::new(inst.rhs().to_vec(), inst.noise_scale().to_vec(), seed)?;
    let mut ledger = SampleLedger::new(m);
    let mut rhs = Vec::with_capacity(m);
    for (i, &s) in inst.noise_scale().iter().enumerate() {
        let count = uniform_sample_count(s, m, tol.delta, tol.eps_feas);
        rhs.push(oracle.draw_sum(&mut ledger, i, count)? / count as f64);
    }
    let all: Vec<usize> = (0..m).collect();
    let (point, failure) = solve_estimate(inst, rhs, &all, tol);
    Ok(AlgorithmOutput {
        algorithm: AlgorithmId::Static,
        seed,
        point,
        samples: ledger.counts().to_vec(),
        iterations: 0,
        failure,
        is_oracle: false,
    })
}

/// Sample only the rows of `A` that bind at the true optimum, keep the true
/// right-hand side elsewhere. Not a legal algorithm: it reads the answer.
pub fn run_binding_oracle(inst: &LpInstance, tol: &ToleranceParams, seed: u64) -> Result<AlgorithmOutput> {
    require_unknown_b(inst)?;
    let m = inst.num_constraints();
    let d = binding_count(inst).max(1);
    let binding = inst.binding_set(&inst.optimum().point, BINDING_TOL);
    let mut oracle = NoisyOracle::new(inst.rhs().to_vec(), inst.noise_scale().to_vec(), seed)?;
    let mut ledger = SampleLedger::new(m);
    let mut rhs = inst.rhs().to_vec();
    for &i in &binding {
        let count = uniform_sample_count(inst.noise_scale()[i], d, tol.delta, tol.eps_feas);
        rhs[i] = oracle.draw_sum(&mut ledger, i, count)? / count as f64;
    }
    let (point, failure) = solve_estimate(inst, rhs, &binding, tol);
    Ok(AlgorithmOutput {
        algorithm: AlgorithmId::BindingOracle,
        seed,
        point,
        samples: ledger.counts().to_vec(),
        iterations: 0,
        failure,
        is_oracle: true,
    })
}
