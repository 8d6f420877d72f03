//! Ellipsoid-UCB for LPs whose right-hand side `b` is only observable through
//! noisy samples.
//!
//! The outer loop is the central-cut ellipsoid method. At each center the UCB
//! subroutine spends samples only until it can name a violated row or certify
//! (approximate) feasibility, always sampling the row with the largest
//! optimistic violation `A_i x - b̂_i + U_i`. Samples persist across rounds in
//! one ledger owned by the run.

use serde::{Deserialize, Serialize};

use crate::ellipsoid::{initial_ellipsoid, iteration_cap};
use crate::error::{Error, Result};
use crate::lp_model::{dot, LpInstance, ToleranceParams, UnknownSet};
use crate::report::{AlgorithmId, AlgorithmOutput};
use crate::sampling::{confidence_radius, delta_prime, NoisyOracle, SampleLedger};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeasibleReason {
    /// Every optimistic violation is negative.
    UpperBoundNegative,
    /// The leading row's radius dropped below `eps_feas / 2`.
    RadiusBelowEpsHalf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UcbOutcome {
    ViolatedConstraint(usize),
    Feasible(FeasibleReason),
}

/// Find a violated row of `A x <= b` at `x`, or declare `x` feasible up to
/// `eps_feas`. Ties in the optimistic argmax go to the lowest index.
pub fn ucb_subroutine(
    x: &[f64],
    inst: &LpInstance,
    oracle: &mut NoisyOracle,
    ledger: &mut SampleLedger,
    delta_prime: f64,
    eps_feas: f64,
) -> Result<UcbOutcome> {
    let sigma = inst.noise_scale();
    let ax: Vec<f64> = inst.constraint_matrix().iter().map(|a| dot(a, x)).collect();
    let m = ax.len();
    let mut mean = Vec::with_capacity(m);
    let mut radius = Vec::with_capacity(m);
    for i in 0..m {
        let Some(mu) = ledger.mean(i) else {
            return Err(Error::InvalidParameter(format!("row {i} has no seed sample")));
        };
        mean.push(mu);
        radius.push(confidence_radius(sigma[i], ledger.count(i), delta_prime)?);
    }
    let mut score: Vec<f64> = (0..m).map(|i| ax[i] - mean[i] + radius[i]).collect();
    loop {
        let mut j = 0;
        for i in 1..m {
            if score[i] > score[j] {
                j = i;
            }
        }
        if ax[j] - mean[j] - radius[j] > 0.0 {
            return Ok(UcbOutcome::ViolatedConstraint(j));
        }
        if score[j] < 0.0 {
            return Ok(UcbOutcome::Feasible(FeasibleReason::UpperBoundNegative));
        }
        if radius[j] < eps_feas / 2.0 {
            return Ok(UcbOutcome::Feasible(FeasibleReason::RadiusBelowEpsHalf));
        }
        oracle.draw(ledger, j)?;
        mean[j] = ledger.mean(j).expect("just sampled");
        radius[j] = confidence_radius(sigma[j], ledger.count(j), delta_prime)?;
        score[j] = ax[j] - mean[j] + radius[j];
    }
}

/// One invocation of the UCB subroutine during a run.
#[derive(Clone, Debug, PartialEq)]
pub struct UcbCall {
    pub center: Vec<f64>,
    pub outcome: UcbOutcome,
}

#[derive(Clone, Debug)]
pub struct UcbRun {
    pub output: AlgorithmOutput,
    pub calls: Vec<UcbCall>,
    pub delta_prime: f64,
}

pub fn run_ucb_ellipsoid(inst: &LpInstance, tol: &ToleranceParams, seed: u64) -> Result<UcbRun> {
    if inst.unknown_set() != UnknownSet::UnknownB {
        return Err(Error::InvalidParameter("Ellipsoid-UCB needs an unknown-b instance".into()));
    }
    let m = inst.num_constraints();
    let c = inst.objective();
    let program = inst.program();
    let mut oracle = NoisyOracle::new(inst.rhs().to_vec(), inst.noise_scale().to_vec(), seed)?;
    let mut ledger = SampleLedger::new(m);
    for i in 0..m {
        oracle.draw(&mut ledger, i)?;
    }
    let dp = delta_prime(tol.delta, m);
    let eps = tol.eps_opt.min(tol.eps_feas);
    let cap = iteration_cap(inst.num_vars(), inst.radius_bound(), c, eps);

    let mut state = initial_ellipsoid(inst);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut calls = Vec::new();
    let mut failure = None;
    while !state.should_stop(c, eps) {
        if state.iteration >= cap {
            failure = Some(Error::IterationCap(cap).to_string());
            break;
        }
        let z = state.center_vec();
        let cut = match program.most_violated_known(&z, 0.0) {
            Some(y) => y,
            None => {
                let outcome = ucb_subroutine(&z, inst, &mut oracle, &mut ledger, dp, tol.eps_feas)?;
                calls.push(UcbCall { center: z.clone(), outcome });
                match outcome {
                    UcbOutcome::ViolatedConstraint(j) => inst.constraint_matrix()[j].clone(),
                    UcbOutcome::Feasible(_) => {
                        let v = dot(c, &z);
                        if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                            best = Some((v, z));
                        }
                        c.iter().map(|v| -v).collect()
                    }
                }
            }
        };
        match state.central_cut(&cut) {
            Ok(next) => state = next,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        }
    }
    let point = best.map(|(_, x)| x);
    if point.is_none() && failure.is_none() {
        failure = Some("no center was ever declared feasible".into());
    }
    Ok(UcbRun {
        output: AlgorithmOutput {
            algorithm: AlgorithmId::UcbEllipsoid,
            seed,
            point,
            samples: ledger.counts().to_vec(),
            iterations: state.iteration,
            failure,
            is_oracle: false,
        },
        calls,
        delta_prime: dp,
    })
}

/// Per-row hardness along a run: violations `V_i(k)`, the per-round gaps
/// `max(|V_i(k)|, V*(k) - V_i(k), eps)` and their minima over rounds.
///
/// Needs the true `b`, so only the harness can build it.
#[derive(Clone, Debug, PartialEq)]
pub struct GapDiagnostics {
    pub eps: f64,
    pub violations: Vec<Vec<f64>>,
    pub gaps: Vec<Vec<f64>>,
    pub min_gaps: Vec<f64>,
}

impl GapDiagnostics {
    pub fn from_centers(inst: &LpInstance, centers: &[Vec<f64>], eps: f64) -> Self {
        let m = inst.num_constraints();
        let mut violations = Vec::with_capacity(centers.len());
        let mut gaps = Vec::with_capacity(centers.len());
        let mut min_gaps = vec![f64::INFINITY; m];
        for x in centers {
            let v: Vec<f64> = inst
                .constraint_matrix()
                .iter()
                .zip(inst.rhs())
                .map(|(a, b)| dot(a, x) - b)
                .collect();
            let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let g: Vec<f64> = v.iter().map(|&vi| vi.abs().max(top - vi).max(eps)).collect();
            for (mg, gi) in min_gaps.iter_mut().zip(&g) {
                *mg = mg.min(*gi);
            }
            violations.push(v);
            gaps.push(g);
        }
        Self { eps, violations, gaps, min_gaps }
    }

    pub fn from_run(inst: &LpInstance, run: &UcbRun, eps: f64) -> Self {
        let centers: Vec<Vec<f64>> = run.calls.iter().map(|c| c.center.clone()).collect();
        Self::from_centers(inst, &centers, eps)
    }
}

/// `sum_i s_i^2/D_i^2 (ln(m/delta) + lnln(s_i^2/D_i^2))` with unit constant.
/// The iterated log is floored at 0 where it is undefined or negative.
pub fn theoretical_bound(diag: &GapDiagnostics, inst: &LpInstance, tol: &ToleranceParams) -> f64 {
    let m = inst.num_constraints() as f64;
    diag.min_gaps
        .iter()
        .zip(inst.noise_scale())
        .filter(|(g, _)| g.is_finite())
        .map(|(g, s)| {
            let ratio = s * s / (g * g);
            ratio * ((m / tol.delta).ln() + log_log(ratio))
        })
        .sum()
}

/// Explicit per-row sample ceiling
/// `108 s^2/D^2 ln(20m/delta) + 72 s^2/D^2 lnln(108 s^2/(D^2 delta'))`.
pub fn per_constraint_bound(diag: &GapDiagnostics, inst: &LpInstance, tol: &ToleranceParams) -> Vec<f64> {
    let m = inst.num_constraints();
    let dp = delta_prime(tol.delta, m);
    diag.min_gaps
        .iter()
        .zip(inst.noise_scale())
        .map(|(g, s)| {
            if !g.is_finite() {
                return 1.0;
            }
            let ratio = s * s / (g * g);
            108.0 * ratio * (20.0 * m as f64 / tol.delta).ln() + 72.0 * ratio * log_log(108.0 * ratio / dp)
        })
        .collect()
}

fn log_log(x: f64) -> f64 {
    if x > std::f64::consts::E {
        x.ln().ln()
    } else {
        0.0
    }
}
