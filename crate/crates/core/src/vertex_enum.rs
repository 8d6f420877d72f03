//! Brute-force vertex enumeration of `{A x <= b, 0 <= x (<= u)}`.
//!
//! Every `n`-subset of the full row system is solved as a square system and
//! kept when the solution is feasible. Fine for the small dimensions used by
//! the unknown-c algorithm and by test oracles.

use std::cmp::Ordering;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp_model::{dot, norm, LinearProgram, LpInstance};

pub const MAX_DIM: usize = 12;
pub const MAX_SUBSETS: f64 = 1e7;
pub const FEAS_TOL: f64 = 1e-7;
pub const DEDUP_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VertexSet {
    pub points: Vec<Vec<f64>>,
    /// For each point, the first basis (indices into
    /// [`LinearProgram::full_rows`]) that produced it.
    pub basis_records: Vec<Vec<usize>>,
}

impl VertexSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Objective values `c^T v` in point order.
    pub fn values(&self, c: &[f64]) -> Vec<f64> {
        self.points.iter().map(|p| dot(c, p)).collect()
    }

    /// Index of the best vertex under `c`, lowest index on ties.
    pub fn argmax(&self, c: &[f64]) -> Option<usize> {
        let vals = self.values(c);
        (0..vals.len()).reduce(|best, i| if vals[i] > vals[best] { i } else { best })
    }

    /// Whether `x` is one of the points within the dedupe tolerance.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.points.iter().any(|p| inf_dist(p, x) <= DEDUP_TOL)
    }
}

pub fn enumerate_vertices(inst: &LpInstance) -> Result<VertexSet> {
    enumerate_program(inst.program())
}

pub fn enumerate_program(program: &LinearProgram) -> Result<VertexSet> {
    let n = program.num_vars();
    let rows = program.full_rows();
    if n > MAX_DIM {
        return Err(Error::CombinatorialBlowup(format!("n = {n} exceeds the cap of {MAX_DIM}")));
    }
    let subsets = binomial(rows.len(), n);
    if subsets > MAX_SUBSETS {
        return Err(Error::CombinatorialBlowup(format!(
            "C({}, {n}) = {subsets:.3e} subsets exceeds {MAX_SUBSETS:.0e}",
            rows.len()
        )));
    }
    let mut found: Vec<(Vec<f64>, Vec<usize>)> = Vec::new();
    for subset in (0..rows.len()).combinations(n) {
        let Some(x) = solve_square(&subset.iter().map(|&k| (&rows[k].1, rows[k].2)).collect::<Vec<_>>())
        else {
            continue;
        };
        if !rows.iter().all(|(_, a, b)| dot(a, &x) - b <= FEAS_TOL) {
            continue;
        }
        if found.iter().any(|(p, _)| inf_dist(p, &x) <= DEDUP_TOL) {
            continue;
        }
        found.push((x, subset));
    }
    found.sort_by(|a, b| lex_rounded(&a.0, &b.0));
    let (points, basis_records) = found.into_iter().unzip();
    Ok(VertexSet { points, basis_records })
}

/// Solve the square system `a_k^T x = b_k`, or `None` when it is singular or
/// badly conditioned.
fn solve_square(rows: &[(&Vec<f64>, f64)]) -> Option<Vec<f64>> {
    let n = rows.len();
    let mat = DMatrix::from_fn(n, n, |r, c| rows[r].0[c]);
    // Hadamard's bound makes |det| / prod |a_k| a scale-free volume in [0, 1].
    let scale: f64 = rows.iter().map(|(a, _)| norm(a)).product();
    let lu = mat.lu();
    if !(lu.determinant().abs() > 1e-10 * scale) {
        return None;
    }
    let sol = lu.solve(&DVector::from_fn(n, |r, _| rows[r].1))?;
    sol.iter().all(|v| v.is_finite()).then(|| sol.iter().copied().collect())
}

fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn lex_rounded(a: &[f64], b: &[f64]) -> Ordering {
    let r = |v: f64| (v / DEDUP_TOL).round();
    a.iter()
        .zip(b)
        .map(|(x, y)| r(*x).total_cmp(&r(*y)))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
