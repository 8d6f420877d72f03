//! Successive elimination over the extreme points when the objective `c` is
//! the hidden vector.
//!
//! Round `r` works at accuracy `eps_r = 2^-r`: it samples each `c_i` as often
//! as the pairwise-difference allocation asks, then drops every vertex that
//! trails the empirical leader by more than `eps_r/2 + 2 eps_r/LAMBDA`.

use crate::error::{Error, Result};
use crate::lp_model::{dot, LpInstance, UnknownSet};
use crate::report::{AlgorithmId, AlgorithmOutput};
use crate::sampling::{NoisyOracle, SampleLedger};
use crate::tau_solver::lowall;
use crate::vertex_enum::{enumerate_vertices, VertexSet};

pub const LAMBDA: f64 = 10.0;
pub const DEFAULT_ROUND_CAP: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EliminationConfig {
    pub delta: f64,
    pub round_cap: usize,
    /// Stop once `eps_r < eps_opt / 2` and return the round leader.
    pub eps_opt: Option<f64>,
}

impl EliminationConfig {
    pub fn new(delta: f64) -> Self {
        Self { delta, round_cap: DEFAULT_ROUND_CAP, eps_opt: None }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EliminationRound {
    pub round: usize,
    pub eps: f64,
    pub delta: f64,
    /// Indices into the vertex set alive at the start of the round.
    pub survivors: Vec<usize>,
    /// Fresh draws of each `c_i` in this round.
    pub samples: Vec<u64>,
    /// Round-only empirical mean of `c`.
    pub mean: Vec<f64>,
    pub leader: usize,
}

#[derive(Clone, Debug)]
pub struct EliminationRun {
    pub output: AlgorithmOutput,
    pub rounds: Vec<EliminationRound>,
    pub vertices: VertexSet,
}

impl EliminationRun {
    /// Vertices alive after the last round.
    pub fn final_survivors(&self) -> Vec<usize> {
        match self.rounds.last() {
            None => (0..self.vertices.len()).collect(),
            Some(last) => survivors_after(last, self.vertices.points.as_slice()),
        }
    }
}

fn keep_threshold(eps: f64) -> f64 {
    eps / 2.0 + 2.0 * eps / LAMBDA
}

fn survivors_after(round: &EliminationRound, points: &[Vec<f64>]) -> Vec<usize> {
    let top = dot(&points[round.leader], &round.mean);
    let cut = keep_threshold(round.eps);
    round
        .survivors
        .iter()
        .copied()
        .filter(|&k| dot(&points[k], &round.mean) >= top - cut)
        .collect()
}

pub fn run_successive_elimination(
    inst: &LpInstance,
    cfg: &EliminationConfig,
    seed: u64,
) -> Result<EliminationRun> {
    if inst.unknown_set() != UnknownSet::UnknownC {
        return Err(Error::InvalidParameter("successive elimination needs an unknown-c instance".into()));
    }
    let vertices = enumerate_vertices(inst)?;
    run_on_vertices(inst, vertices, cfg, seed)
}

/// Same as [`run_successive_elimination`] with a precomputed vertex set.
pub fn run_on_vertices(
    inst: &LpInstance,
    vertices: VertexSet,
    cfg: &EliminationConfig,
    seed: u64,
) -> Result<EliminationRun> {
    let n = inst.num_vars();
    let sigma = inst.noise_scale();
    let mut oracle = NoisyOracle::new(inst.objective().to_vec(), sigma.to_vec(), seed)?;
    let mut totals = vec![0u64; n];
    let mut rounds = Vec::new();
    let mut alive: Vec<usize> = (0..vertices.len()).collect();
    let size = vertices.len() as f64;
    let mut failure = None;
    let mut early_leader = None;

    let mut r = 0;
    while alive.len() > 1 {
        r += 1;
        if r > cfg.round_cap {
            failure = Some(Error::RoundCap(cfg.round_cap).to_string());
            break;
        }
        let eps = 0.5f64.powi(r as i32);
        let delta_r = cfg.delta / (10.0 * (r * r) as f64 * size * size);
        // scale coordinates by the noise so the allocation covers sigma_i^2
        let scaled: Vec<Vec<f64>> = alive
            .iter()
            .map(|&k| vertices.points[k].iter().zip(sigma).map(|(x, s)| x * s).collect())
            .collect();
        let alloc = lowall(&scaled, eps / LAMBDA, delta_r)?;

        let mut ledger = SampleLedger::new(n);
        let mut mean = vec![0.0; n];
        for i in 0..n {
            let mut t = alloc.tau[i].ceil() as u64;
            if t == 0 {
                let first = vertices.points[alive[0]][i];
                if alive.iter().all(|&k| vertices.points[k][i] == first) {
                    continue;
                }
                t = 1;
            }
            mean[i] = oracle.draw_sum(&mut ledger, i, t)? / t as f64;
        }
        for (tot, c) in totals.iter_mut().zip(ledger.counts()) {
            *tot += c;
        }
        let leader = alive
            .iter()
            .copied()
            .reduce(|best, k| {
                if dot(&vertices.points[k], &mean) > dot(&vertices.points[best], &mean) {
                    k
                } else {
                    best
                }
            })
            .expect("at least two survivors");
        let record = EliminationRound {
            round: r,
            eps,
            delta: delta_r,
            survivors: alive.clone(),
            samples: ledger.counts().to_vec(),
            mean,
            leader,
        };
        alive = survivors_after(&record, &vertices.points);
        rounds.push(record);
        if cfg.eps_opt.is_some_and(|e| eps < e / 2.0) {
            early_leader = Some(leader);
            break;
        }
    }

    let point = match (early_leader, &failure, alive.as_slice()) {
        (Some(k), _, _) => Some(vertices.points[k].clone()),
        (None, None, [k]) => Some(vertices.points[*k].clone()),
        _ => None,
    };
    if point.is_none() && failure.is_none() {
        failure = Some("no vertex survived".into());
    }
    Ok(EliminationRun {
        output: AlgorithmOutput {
            algorithm: AlgorithmId::SuccessiveElimination,
            seed,
            point,
            samples: totals,
            iterations: rounds.len(),
            failure,
            is_oracle: false,
        },
        rounds,
        vertices,
    })
}

/// Best vertex value minus the second best; infinite with fewer than two
/// vertices.
pub fn objective_gap(inst: &LpInstance, vertices: &VertexSet) -> f64 {
    let mut vals = vertices.values(inst.objective());
    if vals.len() < 2 {
        return f64::INFINITY;
    }
    vals.sort_by(|a, b| b.total_cmp(a));
    vals[0] - vals[1]
}

/// `k Low ln(1/D) (ln|S| + ln(1/delta) + lnln(1/D))`, the sample budget the
/// elimination algorithm is expected to respect for some constant `k`.
pub fn sample_budget(k: f64, low: f64, gap: f64, num_vertices: usize, delta: f64) -> f64 {
    let inv = 1.0 / gap;
    let lnln = if inv > std::f64::consts::E { inv.ln().ln() } else { 0.0 };
    k * low * inv.ln() * ((num_vertices as f64).ln() + (1.0 / delta).ln() + lnln)
}
