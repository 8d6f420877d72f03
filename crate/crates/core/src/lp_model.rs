//! Linear programs of the form `max c^T x  s.t.  A x <= b, 0 <= x (<= u)` and
//! the instance wrapper that marks which parameter vector is hidden.
//!
//! The optional uniform upper bound `u` models the `x_i <= 500` box rows the
//! experiments append. Box rows and sign rows are always known exactly; only
//! `b` (or `c`) is ever sampled, so `m` counts the rows of `A` alone.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for "this row is tight" when polishing or classifying
/// an exact optimum.
pub const ACTIVE_TOL: f64 = 1e-7;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Which parameter vector the algorithms must learn by sampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UnknownSet {
    #[serde(rename = "b")]
    UnknownB,
    #[serde(rename = "c")]
    UnknownC,
}

/// Kind of a row in the full constraint system.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    /// Row `i` of `A`.
    Constraint(usize),
    /// `x_j <= u`.
    Upper(usize),
    /// `-x_j <= 0`.
    Sign(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub point: Vec<f64>,
    pub objective_value: f64,
}

/// A fully specified LP with no notion of hidden parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub upper: Option<f64>,
}

impl LinearProgram {
    pub fn new(
        objective: Vec<f64>,
        constraints: Vec<Vec<f64>>,
        rhs: Vec<f64>,
        upper: Option<f64>,
    ) -> Result<Self> {
        let n = objective.len();
        if n == 0 {
            return Err(Error::InvalidInstance("need at least one variable".into()));
        }
        if constraints.len() != rhs.len() {
            return Err(Error::InvalidInstance(format!(
                "A has {} rows but b has {} entries",
                constraints.len(),
                rhs.len()
            )));
        }
        if let Some(row) = constraints.iter().position(|r| r.len() != n) {
            return Err(Error::InvalidInstance(format!(
                "row {row} of A has {} entries, expected {n}",
                constraints[row].len()
            )));
        }
        let all_finite = objective.iter().chain(&rhs).chain(constraints.iter().flatten());
        if !all_finite.into_iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInstance("non-finite coefficient".into()));
        }
        if let Some(u) = upper {
            if !(u.is_finite() && u >= 0.0) {
                return Err(Error::InvalidInstance(format!("upper bound {u} must be >= 0")));
            }
        }
        Ok(Self { objective, constraints, rhs, upper })
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        dot(&self.objective, x)
    }

    pub fn with_rhs(&self, rhs: Vec<f64>) -> Self {
        Self { rhs, ..self.clone() }
    }

    pub fn with_objective(&self, objective: Vec<f64>) -> Self {
        Self { objective, ..self.clone() }
    }

    /// Every row of the system as `(kind, coefficients, rhs)`: the rows of
    /// `A`, then the upper-bound rows (if any), then the sign rows.
    pub fn full_rows(&self) -> Vec<(RowKind, Vec<f64>, f64)> {
        let n = self.num_vars();
        let mut rows: Vec<_> = self
            .constraints
            .iter()
            .zip(&self.rhs)
            .enumerate()
            .map(|(i, (a, &b))| (RowKind::Constraint(i), a.clone(), b))
            .collect();
        if let Some(u) = self.upper {
            rows.extend((0..n).map(|j| (RowKind::Upper(j), unit(n, j, 1.0), u)));
        }
        rows.extend((0..n).map(|j| (RowKind::Sign(j), unit(n, j, -1.0), 0.0)));
        rows
    }

    /// Largest violation of any row, including sign and box rows. Negative
    /// when `x` is strictly feasible.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let a_rows = self
            .constraints
            .iter()
            .zip(&self.rhs)
            .map(|(a, b)| dot(a, x) - b);
        a_rows
            .chain(self.known_violations(x).map(|(_, v)| v))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn known_violations<'a>(&'a self, x: &'a [f64]) -> impl Iterator<Item = (RowKind, f64)> + 'a {
        let upper = self
            .upper
            .into_iter()
            .flat_map(move |u| x.iter().enumerate().map(move |(j, v)| (RowKind::Upper(j), v - u)));
        let sign = x.iter().enumerate().map(|(j, v)| (RowKind::Sign(j), -v));
        upper.chain(sign)
    }

    /// The most violated known row (sign or box) at `x`, as a cut direction
    /// `y` with `y^T p <= y^T x` keeping the feasible side.
    pub fn most_violated_known(&self, x: &[f64], tol: f64) -> Option<Vec<f64>> {
        let n = self.num_vars();
        let mut best: Option<(RowKind, f64)> = None;
        for (kind, v) in self.known_violations(x) {
            if v > tol && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((kind, v));
            }
        }
        best.map(|(kind, _)| match kind {
            RowKind::Upper(j) => unit(n, j, 1.0),
            RowKind::Sign(j) => unit(n, j, -1.0),
            RowKind::Constraint(_) => unreachable!(),
        })
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.max_violation(x) <= tol
    }

    /// Exact optimum by the simplex method, polished onto the vertex defined by
    /// its tight rows.
    pub fn solve_exact(&self) -> Result<Solution> {
        let n = self.num_vars();
        let mut problem = Problem::new(OptimizationDirection::Maximize);
        let hi = self.upper.unwrap_or(f64::INFINITY);
        let vars: Vec<_> = self
            .objective
            .iter()
            .map(|&c| problem.add_var(c, (0.0, hi)))
            .collect();
        for (row, &b) in self.constraints.iter().zip(&self.rhs) {
            let expr: Vec<_> = vars
                .iter()
                .zip(row)
                .filter(|(_, &a)| a != 0.0)
                .map(|(&v, &a)| (v, a))
                .collect();
            if expr.is_empty() {
                if b < 0.0 {
                    return Err(Error::InfeasibleOrUnbounded);
                }
                continue;
            }
            problem.add_constraint(expr.as_slice(), ComparisonOp::Le, b);
        }
        let solution = problem
            .solve()
            .map_err(|_| Error::InfeasibleOrUnbounded)?
            .into_solution()
            .map_err(|_| Error::InfeasibleOrUnbounded)?;
        let raw: Vec<f64> = vars.iter().map(|&v| solution.var_value(v)).collect();
        let point = self.polish_vertex(&raw).unwrap_or(raw);
        debug_assert_eq!(point.len(), n);
        Ok(Solution { objective_value: self.value(&point), point })
    }

    fn polish_vertex(&self, x: &[f64]) -> Option<Vec<f64>> {
        let n = self.num_vars();
        let rows = self.full_rows();
        let tight: Vec<_> = rows
            .iter()
            .filter(|(_, a, b)| (dot(a, x) - b).abs() <= ACTIVE_TOL * (1.0 + b.abs()))
            .collect();
        let basis = independent_subset(tight.iter().map(|(_, a, _)| a.as_slice()), n);
        if basis.len() != n {
            return None;
        }
        let mat = DMatrix::from_fn(n, n, |r, c| tight[basis[r]].1[c]);
        let rhs = DVector::from_fn(n, |r, _| tight[basis[r]].2);
        let sol = mat.lu().solve(&rhs)?;
        let point: Vec<f64> = sol.iter().copied().collect();
        let scale = 1.0 + self.rhs.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        let ok = self.max_violation(&point) <= 1e-9 * scale
            && self.value(&point) >= self.value(x) - 1e-9 * (1.0 + self.value(x).abs());
        ok.then_some(point)
    }

    /// Indices of rows of `A` that are tight at `x` within `tol`.
    pub fn binding_set(&self, x: &[f64], tol: f64) -> Vec<usize> {
        self.constraints
            .iter()
            .zip(&self.rhs)
            .enumerate()
            .filter(|(_, (a, b))| (dot(a, x) - *b).abs() <= tol)
            .map(|(i, _)| i)
            .collect()
    }

    /// Number of sign and box rows tight at `x` within `tol`.
    pub fn active_known_rows(&self, x: &[f64], tol: f64) -> usize {
        self.known_violations(x).filter(|(_, v)| v.abs() <= tol).count()
    }

    /// True when `x` is a nondegenerate vertex whose KKT multipliers are all
    /// strictly positive, which makes it the unique optimum.
    pub fn is_strict_optimum(&self, x: &[f64]) -> bool {
        let n = self.num_vars();
        let tight: Vec<_> = self
            .full_rows()
            .into_iter()
            .filter(|(_, a, b)| (dot(a, x) - b).abs() <= ACTIVE_TOL * (1.0 + b.abs()))
            .collect();
        if tight.len() != n {
            return false;
        }
        // Solve sum_k y_k a_k = c for the multipliers y.
        let mat = DMatrix::from_fn(n, n, |r, c| tight[c].1[r]);
        let c = DVector::from_column_slice(&self.objective);
        let Some(y) = mat.lu().solve(&c) else {
            return false;
        };
        let scale = norm(&self.objective).max(1e-300);
        y.iter().all(|&v| v > 1e-9 * scale)
    }
}

fn unit(n: usize, j: usize, v: f64) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[j] = v;
    e
}

/// Greedy Gram-Schmidt selection of up to `limit` linearly independent rows.
pub(crate) fn independent_subset<'a>(rows: impl Iterator<Item = &'a [f64]>, limit: usize) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut picked = Vec::new();
    for (idx, row) in rows.enumerate() {
        if picked.len() == limit {
            break;
        }
        let mut r = row.to_vec();
        for q in &basis {
            let p = dot(&r, q);
            r.iter_mut().zip(q).for_each(|(ri, qi)| *ri -= p * qi);
        }
        let len = norm(&r);
        if len > 1e-8 * norm(row).max(1e-300) {
            r.iter_mut().for_each(|v| *v /= len);
            basis.push(r);
            picked.push(idx);
        }
    }
    picked
}

/// Failure probability and the optimality / feasibility slacks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceParams {
    pub delta: f64,
    pub eps_opt: f64,
    pub eps_feas: f64,
}

impl ToleranceParams {
    pub fn new(delta: f64, eps_opt: f64, eps_feas: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!("delta = {delta} must lie in (0, 1)")));
        }
        if !(eps_opt >= 0.0 && eps_feas >= 0.0) {
            return Err(Error::InvalidParameter("tolerances must be nonnegative".into()));
        }
        Ok(Self { delta, eps_opt, eps_feas })
    }
}

/// An LP together with the identity and noise scale of its hidden parameters.
///
/// Construction solves the LP exactly; infeasible, unbounded, or out-of-radius
/// instances are rejected.
#[derive(Clone, Debug)]
pub struct LpInstance {
    program: LinearProgram,
    radius: f64,
    unknown: UnknownSet,
    noise_scale: Vec<f64>,
    optimum: Solution,
}

impl LpInstance {
    pub fn new(
        program: LinearProgram,
        radius: f64,
        unknown: UnknownSet,
        noise_scale: Vec<f64>,
    ) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidInstance(format!("radius bound R = {radius} must be > 0")));
        }
        let expected = match unknown {
            UnknownSet::UnknownB => program.num_constraints(),
            UnknownSet::UnknownC => program.num_vars(),
        };
        if noise_scale.len() != expected {
            return Err(Error::InvalidInstance(format!(
                "expected {expected} noise scales, got {}",
                noise_scale.len()
            )));
        }
        if !noise_scale.iter().all(|&s| s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidInstance("noise scales must be positive".into()));
        }
        let optimum = program.solve_exact()?;
        if norm(&optimum.point) > radius * (1.0 + 1e-9) {
            return Err(Error::InvalidInstance(format!(
                "optimum has norm {} > R = {radius}",
                norm(&optimum.point)
            )));
        }
        Ok(Self { program, radius, unknown, noise_scale, optimum })
    }

    pub fn program(&self) -> &LinearProgram {
        &self.program
    }

    pub fn num_vars(&self) -> usize {
        self.program.num_vars()
    }

    pub fn num_constraints(&self) -> usize {
        self.program.num_constraints()
    }

    pub fn objective(&self) -> &[f64] {
        &self.program.objective
    }

    pub fn constraint_matrix(&self) -> &[Vec<f64>] {
        &self.program.constraints
    }

    pub fn rhs(&self) -> &[f64] {
        &self.program.rhs
    }

    pub fn radius_bound(&self) -> f64 {
        self.radius
    }

    pub fn unknown_set(&self) -> UnknownSet {
        self.unknown
    }

    pub fn noise_scale(&self) -> &[f64] {
        &self.noise_scale
    }

    /// True values of the hidden parameters.
    pub fn hidden_values(&self) -> &[f64] {
        match self.unknown {
            UnknownSet::UnknownB => &self.program.rhs,
            UnknownSet::UnknownC => &self.program.objective,
        }
    }

    pub fn optimum(&self) -> &Solution {
        &self.optimum
    }

    pub fn solve_exact(&self) -> Solution {
        self.optimum.clone()
    }

    /// Rows of `A` tight at `x` within `tol`.
    pub fn binding_set(&self, x: &[f64], tol: f64) -> Vec<usize> {
        self.program.binding_set(x, tol)
    }

    /// Membership in `OPT(I; eps_opt, eps_feas)`. Sign and box rows are relaxed
    /// by the same `eps_feas` as the rows of `A`.
    pub fn check_opt_membership(&self, x: &[f64], tol: &ToleranceParams) -> bool {
        x.len() == self.num_vars()
            && x.iter().all(|v| v.is_finite())
            && self.program.value(x) >= self.optimum.objective_value - tol.eps_opt
            && self.program.max_violation(x) <= tol.eps_feas
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Uniform(f64),
    PerParameter(Vec<f64>),
}

/// On-disk JSON form of an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    pub m: usize,
    pub c: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    #[serde(rename = "R")]
    pub r: f64,
    pub unknown: UnknownSet,
    pub sigma: SigmaSpec,
    /// Known uniform upper bound on every variable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

impl TryFrom<InstanceFile> for LpInstance {
    type Error = Error;

    fn try_from(f: InstanceFile) -> Result<Self> {
        if f.c.len() != f.n || f.b.len() != f.m || f.a.len() != f.m {
            return Err(Error::InvalidInstance(format!(
                "declared n = {}, m = {} disagree with |c| = {}, |b| = {}, rows(A) = {}",
                f.n,
                f.m,
                f.c.len(),
                f.b.len(),
                f.a.len()
            )));
        }
        let count = match f.unknown {
            UnknownSet::UnknownB => f.m,
            UnknownSet::UnknownC => f.n,
        };
        let sigma = match f.sigma {
            SigmaSpec::Uniform(s) => vec![s; count],
            SigmaSpec::PerParameter(v) => v,
        };
        let program = LinearProgram::new(f.c, f.a, f.b, f.upper)?;
        LpInstance::new(program, f.r, f.unknown, sigma)
    }
}

impl From<&LpInstance> for InstanceFile {
    fn from(inst: &LpInstance) -> Self {
        let s = inst.noise_scale();
        let sigma = if s.windows(2).all(|w| w[0] == w[1]) {
            SigmaSpec::Uniform(s[0])
        } else {
            SigmaSpec::PerParameter(s.to_vec())
        };
        Self {
            n: inst.num_vars(),
            m: inst.num_constraints(),
            c: inst.program.objective.clone(),
            a: inst.program.constraints.clone(),
            b: inst.program.rhs.clone(),
            r: inst.radius,
            unknown: inst.unknown,
            sigma,
            upper: inst.program.upper,
        }
    }
}

impl LpInstance {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInstance(format!("malformed instance JSON: {e}")))?;
        file.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&InstanceFile::from(self)).expect("instance serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_dim() -> LpInstance {
        let p = LinearProgram::new(vec![1.0], vec![vec![1.0]], vec![1.0], None).unwrap();
        LpInstance::new(p, 10.0, UnknownSet::UnknownB, vec![1.0]).unwrap()
    }

    #[test]
    fn single_binding_constraint() {
        let inst = one_dim();
        let s = inst.solve_exact();
        assert!((s.point[0] - 1.0).abs() < 1e-12);
        assert!((s.objective_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn separable_box() {
        let p = LinearProgram::new(
            vec![1.0, 1.0],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![2.0, 3.0],
            None,
        )
        .unwrap();
        let s = p.solve_exact().unwrap();
        assert!((s.point[0] - 2.0).abs() < 1e-12 && (s.point[1] - 3.0).abs() < 1e-12);
        assert!((s.objective_value - 5.0).abs() < 1e-9);
    }

    #[test]
    fn opt_membership_edges() {
        let inst = one_dim();
        let eps1 = 0.05;
        let eps2 = 0.01;
        let tol = ToleranceParams::new(0.1, eps1, eps2).unwrap();
        assert!(inst.check_opt_membership(&[1.0 - eps1], &tol));
        assert!(!inst.check_opt_membership(&[1.0 + 2.0 * eps2], &tol));
        let exact = ToleranceParams::new(0.1, 0.0, 0.0).unwrap();
        assert!(inst.check_opt_membership(&[1.0], &exact));
        // sign row relaxed by eps2 as well
        let p = LinearProgram::new(vec![-1.0], vec![vec![1.0]], vec![1.0], None).unwrap();
        let neg = LpInstance::new(p, 10.0, UnknownSet::UnknownB, vec![1.0]).unwrap();
        assert!(neg.check_opt_membership(&[-0.005], &tol));
        assert!(!neg.check_opt_membership(&[-0.02], &tol));
    }

    #[test]
    fn binding_set_examples() {
        let p = LinearProgram::new(
            vec![1.0, 0.0],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![1.0, 5.0],
            None,
        )
        .unwrap();
        assert_eq!(p.binding_set(&[1.0, 0.0], 1e-6), vec![0]);

        let sq = LinearProgram::new(
            vec![1.0, 1.0],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![1.0, 1.0],
            None,
        )
        .unwrap();
        let s = sq.solve_exact().unwrap();
        assert_eq!(sq.binding_set(&s.point, 1e-6), vec![0, 1]);
    }

    #[test]
    fn rejects_bad_instances() {
        let unbounded = LinearProgram::new(vec![1.0], vec![vec![-1.0]], vec![1.0], None).unwrap();
        assert!(matches!(
            LpInstance::new(unbounded, 10.0, UnknownSet::UnknownB, vec![1.0]),
            Err(Error::InfeasibleOrUnbounded)
        ));
        let infeasible = LinearProgram::new(vec![1.0], vec![vec![1.0]], vec![-1.0], None).unwrap();
        assert!(infeasible.solve_exact().is_err());
        let far = LinearProgram::new(vec![1.0], vec![vec![1.0]], vec![100.0], None).unwrap();
        assert!(matches!(
            LpInstance::new(far, 10.0, UnknownSet::UnknownB, vec![1.0]),
            Err(Error::InvalidInstance(_))
        ));
        let p = LinearProgram::new(vec![1.0], vec![vec![1.0]], vec![1.0], None).unwrap();
        assert!(LpInstance::new(p.clone(), 10.0, UnknownSet::UnknownB, vec![0.0]).is_err());
        assert!(LpInstance::new(p, 10.0, UnknownSet::UnknownB, vec![1.0, 1.0]).is_err());
        assert!(LinearProgram::new(vec![1.0], vec![vec![1.0, 2.0]], vec![1.0], None).is_err());
        assert!(ToleranceParams::new(1.0, 0.1, 0.1).is_err());
    }

    #[test]
    fn strict_optimum_detection() {
        let sq = LinearProgram::new(
            vec![1.0, 0.5],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![1.0, 1.0],
            None,
        )
        .unwrap();
        assert!(sq.is_strict_optimum(&[1.0, 1.0]));
        // c = (1, 0): every point of the top edge is optimal
        let flat = sq.with_objective(vec![1.0, 0.0]);
        assert!(!flat.is_strict_optimum(&[1.0, 1.0]));
    }

    #[test]
    fn json_round_trip_and_schema() {
        let text = r#"{"n":2,"m":1,"c":[1,1],"A":[[1,1]],"b":[1],"R":5,"unknown":"b","sigma":0.5,"upper":2}"#;
        let inst = LpInstance::from_json(text).unwrap();
        assert_eq!(inst.noise_scale(), &[0.5]);
        assert_eq!(inst.program().upper, Some(2.0));
        let back = LpInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(back.program(), inst.program());

        let arr = r#"{"n":1,"m":2,"c":[1],"A":[[1],[2]],"b":[1,3],"R":5,"unknown":"b","sigma":[1,2]}"#;
        assert_eq!(LpInstance::from_json(arr).unwrap().noise_scale(), &[1.0, 2.0]);
        let wrong_m = r#"{"n":1,"m":3,"c":[1],"A":[[1],[2]],"b":[1,3],"R":5,"unknown":"b","sigma":1}"#;
        assert!(LpInstance::from_json(wrong_m).is_err());
    }
}
