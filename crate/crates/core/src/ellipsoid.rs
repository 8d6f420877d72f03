//! Central-cut ellipsoid machinery.
//!
//! An ellipsoid is stored as `E = { x : (x - z)^T Q^{-1} (x - z) <= 1 }` with
//! center `z` and symmetric positive-definite shape `Q`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp_model::{dot, norm, LinearProgram, LpInstance, Solution};

/// Updates with `y^T Q y` below this are refused.
pub const MIN_CUT_NORM_SQ: f64 = 1e-24;
/// A center counts as feasible for the deterministic solver within this slack.
pub const CENTER_FEAS_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct EllipsoidState {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
    pub iteration: usize,
}

impl EllipsoidState {
    /// Ball of the given radius around the origin.
    pub fn ball(dim: usize, radius: f64) -> Self {
        Self {
            center: DVector::zeros(dim),
            shape: DMatrix::identity(dim, dim) * (radius * radius),
            iteration: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center_vec(&self) -> Vec<f64> {
        self.center.iter().copied().collect()
    }

    /// `(x - z)^T Q^{-1} (x - z)`; at most 1 inside the ellipsoid.
    pub fn gauge(&self, x: &DVector<f64>) -> Option<f64> {
        let d = x - &self.center;
        let chol = self.shape.clone().cholesky()?;
        Some(d.dot(&chol.solve(&d)))
    }

    /// `ln sqrt(det Q)`, the log-volume up to the unit-ball constant.
    pub fn log_volume(&self) -> Option<f64> {
        let chol = self.shape.clone().cholesky()?;
        Some(chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum())
    }

    /// Minimal ellipsoid containing `E ∩ { p : y^T p <= y^T z }`.
    pub fn central_cut(&self, y: &[f64]) -> Result<Self> {
        let n = self.dim();
        let y = DVector::from_column_slice(y);
        let qy = &self.shape * &y;
        let yqy = y.dot(&qy);
        if !(yqy > MIN_CUT_NORM_SQ) {
            return Err(Error::NumericalBreakdown(yqy));
        }
        let g = qy / yqy.sqrt();
        let nf = n as f64;
        let center = &self.center - &g / (nf + 1.0);
        let mut shape = if n == 1 {
            // the half-interval has half the length
            &self.shape / 4.0
        } else {
            (&self.shape - (&g * g.transpose()) * (2.0 / (nf + 1.0))) * (nf * nf / (nf * nf - 1.0))
        };
        let sym = (&shape + shape.transpose()) * 0.5;
        shape = sym;
        Ok(Self { center, shape, iteration: self.iteration + 1 })
    }

    /// Half-width of the ellipsoid along `c`: `sqrt(c^T Q c)`.
    pub fn objective_width(&self, c: &[f64]) -> f64 {
        let c = DVector::from_column_slice(c);
        c.dot(&(&self.shape * &c)).max(0.0).sqrt()
    }

    pub fn should_stop(&self, c: &[f64], eps: f64) -> bool {
        self.objective_width(c) <= eps
    }
}

/// Ball of radius `R` around the origin; contains every solution of norm at
/// most `R`.
pub fn initial_ellipsoid(inst: &LpInstance) -> EllipsoidState {
    EllipsoidState::ball(inst.num_vars(), inst.radius_bound())
}

/// `ceil(2n(n+1) ln(R |c| sqrt(n) / eps)) + 10n`.
pub fn iteration_cap(n: usize, radius: f64, c: &[f64], eps: f64) -> usize {
    let nf = n as f64;
    let ratio = radius * norm(c) * nf.sqrt() / eps;
    let core = if ratio > 1.0 { (2.0 * nf * (nf + 1.0) * ratio.ln()).ceil() as usize } else { 0 };
    core + 10 * n
}

/// Deterministic ellipsoid LP solve using the true right-hand side.
///
/// Stops once the ellipsoid is `eps`-thin along `c` and the best feasible
/// center is certified within `eps` of the upper bound
/// `c^T z + sqrt(c^T Q c)`, which dominates the optimum because the optimum
/// never leaves the ellipsoid.
pub fn solve_lp_ellipsoid(program: &LinearProgram, radius: f64, eps: f64) -> Result<Solution> {
    let n = program.num_vars();
    let c = &program.objective;
    let cap = iteration_cap(n, radius, c, eps);
    let mut state = EllipsoidState::ball(n, radius);
    let mut best: Option<(f64, Vec<f64>)> = None;
    loop {
        let width = state.objective_width(c);
        let z = state.center_vec();
        if width <= eps {
            if let Some((v, _)) = &best {
                if dot(c, &z) + width - v <= eps {
                    break;
                }
            }
        }
        if state.iteration >= cap {
            return Err(Error::IterationCap(cap));
        }
        let cut = match program.most_violated_known(&z, CENTER_FEAS_TOL) {
            Some(y) => y,
            None => match most_violated_row(program, &z) {
                Some(i) => program.constraints[i].clone(),
                None => {
                    let v = dot(c, &z);
                    if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                        best = Some((v, z));
                    }
                    c.iter().map(|v| -v).collect()
                }
            },
        };
        state = state.central_cut(&cut)?;
    }
    let (objective_value, point) = best.expect("loop exits only with a feasible center");
    Ok(Solution { point, objective_value })
}

fn most_violated_row(program: &LinearProgram, z: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (a, b)) in program.constraints.iter().zip(&program.rhs).enumerate() {
        let v = dot(a, z) - b;
        if v > CENTER_FEAS_TOL && best.is_none_or(|(_, bv)| v > bv) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn unit_ball_start() {
        let s = EllipsoidState::ball(2, 1.0);
        assert_eq!(s.shape, DMatrix::identity(2, 2));
        assert_eq!(s.center, DVector::zeros(2));
    }

    #[test]
    fn unit_disc_cut_matches_closed_form() {
        let s = EllipsoidState::ball(2, 1.0).central_cut(&[1.0, 0.0]).unwrap();
        assert!((s.center[0] + 1.0 / 3.0).abs() < 1e-15);
        assert!(s.center[1].abs() < 1e-15);
        // semi-axes 2/3 and 2/sqrt(3)
        assert!((s.shape[(0, 0)] - 4.0 / 9.0).abs() < 1e-15);
        assert!((s.shape[(1, 1)] - 4.0 / 3.0).abs() < 1e-15);
        let ratio = (s.log_volume().unwrap() - 0.0).exp();
        assert!((ratio - 4.0 / (3.0 * 3f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_cut_halves_interval() {
        let s = EllipsoidState::ball(1, 2.0).central_cut(&[1.0]).unwrap();
        assert!((s.center[0] + 1.0).abs() < 1e-15);
        assert!((s.shape[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_direction_is_refused() {
        let s = EllipsoidState::ball(2, 1.0);
        assert!(matches!(s.central_cut(&[0.0, 0.0]), Err(Error::NumericalBreakdown(_))));
    }

    #[test]
    fn opposite_cuts_keep_intersection() {
        let s = EllipsoidState::ball(2, 1.0);
        let a = s.central_cut(&[1.0, 0.0]).unwrap();
        let b = a.central_cut(&[-1.0, 0.0]).unwrap();
        assert!(b.center[0] > a.center[0]);
        // a point on the axis at the first center survives both cuts
        let p = DVector::from_vec(vec![a.center[0], 0.0]);
        assert!(b.gauge(&p).unwrap() <= 1.0 + 1e-9);
    }

    #[test]
    fn containment_of_cut_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = EllipsoidState::ball(3, 2.0);
        for _ in 0..20 {
            let y: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
            let next = s.central_cut(&y).unwrap();
            let chol = s.shape.clone().cholesky().unwrap();
            let yv = DVector::from_column_slice(&y);
            let mut checked = 0;
            while checked < 2000 {
                // uniform point in E: z + L u with u uniform in the unit ball
                let u: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
                let r: f64 = rng.gen::<f64>().powf(1.0 / 3.0) / norm(&u);
                let u = DVector::from_vec(u.into_iter().map(|v| v * r).collect());
                let p = &s.center + chol.l() * u;
                if yv.dot(&p) > yv.dot(&s.center) {
                    continue;
                }
                checked += 1;
                assert!(next.gauge(&p).unwrap() <= 1.0 + 1e-9);
            }
            s = next;
        }
    }

    #[test]
    fn stopping_rule() {
        let s = EllipsoidState::ball(2, 1.0);
        assert!(s.should_stop(&[1.0, 0.0], 1.1));
        assert!(!s.should_stop(&[3.0, 4.0], 4.9));
        let r = 0.25;
        let small = EllipsoidState::ball(2, r);
        let c = [3.0, 4.0];
        assert!(small.should_stop(&c, r * 5.0));
        assert!(!small.should_stop(&c, r * 5.0 * 0.999));
        for alpha in [0.5, 3.0] {
            let ca = [c[0] * alpha, c[1] * alpha];
            assert_eq!(small.should_stop(&ca, 1.3 * alpha), small.should_stop(&c, 1.3));
        }
    }

    #[test]
    fn deterministic_solver_simple() {
        let p = LinearProgram::new(vec![1.0], vec![vec![1.0]], vec![1.0], None).unwrap();
        let s = solve_lp_ellipsoid(&p, 10.0, 1e-3).unwrap();
        assert!(s.objective_value >= 0.999);
        assert!(p.is_feasible(&s.point, CENTER_FEAS_TOL));
    }

    #[test]
    fn infeasible_origin_still_converges() {
        // x1 >= 1, x2 >= 2 (as -x <= -b), x1 + x2 <= 5; max x1 + 2 x2 -> (1, 4), value 9
        let p = LinearProgram::new(
            vec![1.0, 2.0],
            vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0]],
            vec![-1.0, -2.0, 5.0],
            None,
        )
        .unwrap();
        let s = solve_lp_ellipsoid(&p, 10.0, 1e-4).unwrap();
        assert!(s.objective_value >= 9.0 - 1e-4 && s.objective_value <= 9.0 + 1e-9);
    }

    #[test]
    fn cap_formula() {
        // 2*2*3*ln(10*5*sqrt2/0.1) rounded up plus 20
        let cap = iteration_cap(2, 10.0, &[3.0, 4.0], 0.1);
        let expect = (12.0 * (10.0 * 5.0 * 2f64.sqrt() / 0.1).ln()).ceil() as usize + 20;
        assert_eq!(cap, expect);
        assert_eq!(iteration_cap(3, 1.0, &[0.0, 0.0, 1e-9], 1.0), 30);
    }
}
