//! Random instances, seeded trials, aggregation and CSV output for the
//! experiment suite.
//!
//! Trials run on the ambient rayon pool. Results are collected in job order,
//! so every table is identical whatever the thread count.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{binding_count, run_binding_oracle, run_static};
use crate::error::{Error, Result};
use crate::lp_model::{LinearProgram, LpInstance, ToleranceParams, UnknownSet};
use crate::report::{AlgorithmId, AlgorithmOutput, RunReport};
use crate::succ_elim::{objective_gap, run_on_vertices, sample_budget, EliminationConfig};
use crate::tau_solver::low_of_instance;
use crate::ucb_ellipsoid::run_ucb_ellipsoid;
use crate::vertex_enum::enumerate_vertices;

pub const MAX_ATTEMPTS: usize = 100;
/// The unknown-c suite filters on the gap, so it is allowed more draws.
pub const MAX_SUITE_ATTEMPTS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n: usize,
    pub m: usize,
    pub sigma: f64,
    pub box_bound: f64,
    pub c_range: (f64, f64),
    pub b_range: (f64, f64),
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { n: 6, m: 80, sigma: 1.0, box_bound: 500.0, c_range: (-10.0, 10.0), b_range: (0.0, 10.0), seed: 0 }
    }
}

impl GeneratorConfig {
    pub fn table1() -> Self {
        Self { n: 4, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidParameter("n and m must be at least 1".into()));
        }
        if !(self.sigma > 0.0) || !(self.box_bound > 0.0) {
            return Err(Error::InvalidParameter("sigma and the box bound must be positive".into()));
        }
        if !(self.c_range.0 < self.c_range.1) || !(0.0 <= self.b_range.0 && self.b_range.0 < self.b_range.1) {
            return Err(Error::InvalidParameter("bad value ranges".into()));
        }
        Ok(())
    }
}

/// Uniform point in the unit ball of R^n.
pub fn unit_ball_row(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let len = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if len > 0.0 {
            let r = rng.gen::<f64>().powf(1.0 / n as f64);
            return g.into_iter().map(|v| v * r / len).collect();
        }
    }
}

/// Unknown-b instance with uniform `c` and `b`, unit-ball rows and a box.
/// Redraws until the optimum is a unique, nondegenerate vertex.
pub fn generate_instance(cfg: &GeneratorConfig) -> Result<LpInstance> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..MAX_ATTEMPTS {
        let c: Vec<f64> = (0..cfg.n).map(|_| rng.gen_range(cfg.c_range.0..cfg.c_range.1)).collect();
        let a: Vec<Vec<f64>> = (0..cfg.m).map(|_| unit_ball_row(&mut rng, cfg.n)).collect();
        let b: Vec<f64> = (0..cfg.m).map(|_| rng.gen_range(cfg.b_range.0..cfg.b_range.1)).collect();
        let program = LinearProgram::new(c, a, b, Some(cfg.box_bound))?;
        let radius = cfg.box_bound * (cfg.n as f64).sqrt();
        let Ok(inst) = LpInstance::new(program, radius, UnknownSet::UnknownB, vec![cfg.sigma; cfg.m]) else {
            continue;
        };
        if inst.program().is_strict_optimum(&inst.optimum().point) {
            return Ok(inst);
        }
    }
    Err(Error::GeneratorExhausted(MAX_ATTEMPTS))
}

/// Small unknown-c instances whose vertex gap lies in `gap_range`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub n: usize,
    pub m: usize,
    pub sigma: f64,
    pub gap_range: (f64, f64),
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { n: 3, m: 6, sigma: 1.0, gap_range: (0.05, 0.25), seed: 0 }
    }
}

/// `c ~ U[-1,1]^n`, unit-ball rows, `b ~ U[0,1]^m`, box `x <= 1`.
pub fn generate_unknown_c(cfg: &SuiteConfig) -> Result<LpInstance> {
    if cfg.n == 0 || cfg.m == 0 || !(cfg.sigma > 0.0) {
        return Err(Error::InvalidParameter("bad suite configuration".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..MAX_SUITE_ATTEMPTS {
        let c: Vec<f64> = (0..cfg.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a: Vec<Vec<f64>> = (0..cfg.m).map(|_| unit_ball_row(&mut rng, cfg.n)).collect();
        let b: Vec<f64> = (0..cfg.m).map(|_| rng.gen_range(0.0..1.0)).collect();
        let program = LinearProgram::new(c, a, b, Some(1.0))?;
        let Ok(inst) = LpInstance::new(program, (cfg.n as f64).sqrt(), UnknownSet::UnknownC, vec![cfg.sigma; cfg.n])
        else {
            continue;
        };
        let vertices = enumerate_vertices(&inst)?;
        let gap = objective_gap(&inst, &vertices);
        if gap >= cfg.gap_range.0 && gap <= cfg.gap_range.1 {
            return Ok(inst);
        }
    }
    Err(Error::GeneratorExhausted(MAX_SUITE_ATTEMPTS))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one trial. Tag 0 is the instance; algorithms use their own tag.
pub fn trial_seed(base: u64, axis_value: f64, trial: u64, tag: u64) -> u64 {
    splitmix(splitmix(splitmix(splitmix(base) ^ axis_value.to_bits()) ^ trial) ^ tag)
}

/// Run one algorithm on one instance and judge the answer.
pub fn run_algorithm(inst: &LpInstance, alg: AlgorithmId, tol: &ToleranceParams, seed: u64) -> Result<RunReport> {
    let start = Instant::now();
    let (out, judge_tol) = match alg {
        AlgorithmId::UcbEllipsoid => (run_ucb_ellipsoid(inst, tol, seed)?.output, *tol),
        AlgorithmId::Static => (run_static(inst, tol, seed)?, *tol),
        AlgorithmId::BindingOracle => (run_binding_oracle(inst, tol, seed)?, *tol),
        AlgorithmId::SuccessiveElimination => {
            let vertices = enumerate_vertices(inst)?;
            let gap = objective_gap(inst, &vertices);
            let run = run_on_vertices(inst, vertices, &EliminationConfig::new(tol.delta), seed)?;
            (run.output, exact_vertex_tolerance(tol.delta, gap))
        }
    };
    Ok(RunReport::evaluate(inst, out, &judge_tol, start.elapsed()))
}

/// Tolerance under which only the optimal vertex is correct.
pub fn exact_vertex_tolerance(delta: f64, gap: f64) -> ToleranceParams {
    ToleranceParams { delta, eps_opt: gap / 2.0, eps_feas: 1e-7 }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    M,
    N,
    Sigma,
    InvEps,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::M => "m",
            SweepAxis::N => "n",
            SweepAxis::Sigma => "sigma",
            SweepAxis::InvEps => "inv_eps",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepAxis::M => vec![40.0, 80.0, 160.0],
            SweepAxis::N => vec![2.0, 4.0, 6.0, 8.0],
            SweepAxis::Sigma => vec![0.5, 1.0, 2.0, 4.0],
            SweepAxis::InvEps => vec![5.0, 10.0, 20.0],
        }
    }

    /// The generator and tolerances at one point of the sweep.
    pub fn apply(
        self,
        value: f64,
        cfg: &GeneratorConfig,
        tol: &ToleranceParams,
    ) -> Result<(GeneratorConfig, ToleranceParams)> {
        let mut cfg = *cfg;
        let mut tol = *tol;
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::InvalidParameter(format!("{} must be a positive integer, got {value}", self.name())))
            }
        };
        match self {
            SweepAxis::M => cfg.m = count()?,
            SweepAxis::N => cfg.n = count()?,
            SweepAxis::Sigma if value > 0.0 => cfg.sigma = value,
            SweepAxis::InvEps if value > 0.0 => {
                tol.eps_opt = 1.0 / value;
                tol.eps_feas = 1.0 / value;
            }
            _ => return Err(Error::InvalidParameter(format!("{} must be positive, got {value}", self.name()))),
        }
        Ok((cfg, tol))
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m" => Ok(SweepAxis::M),
            "n" => Ok(SweepAxis::N),
            "sigma" => Ok(SweepAxis::Sigma),
            "inv_eps" | "inv-eps" => Ok(SweepAxis::InvEps),
            other => Err(Error::InvalidParameter(format!("unknown sweep axis '{other}'"))),
        }
    }
}

/// One seeded trial: an instance and every unknown-b algorithm on it.
/// A generator failure fails every algorithm of the trial.
pub fn run_trial(
    cfg: &GeneratorConfig,
    tol: &ToleranceParams,
    base_seed: u64,
    axis_value: f64,
    trial: u64,
    algorithms: &[AlgorithmId],
) -> Vec<Result<RunReport>> {
    let gen = GeneratorConfig { seed: trial_seed(base_seed, axis_value, trial, 0), ..*cfg };
    let inst = match generate_instance(&gen) {
        Ok(inst) => inst,
        Err(e) => return algorithms.iter().map(|_| Err(e.clone())).collect(),
    };
    algorithms
        .iter()
        .map(|&alg| run_algorithm(&inst, alg, tol, trial_seed(base_seed, axis_value, trial, alg.seed_tag())))
        .collect()
}

/// Aggregate over the trials of one algorithm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub mean_samples: f64,
    pub std_samples: f64,
    pub correct_rate: f64,
    pub mean_binding: f64,
    pub mean_nonbinding: f64,
    pub failures: usize,
}

impl Summary {
    /// Sample statistics over successful runs; a run with an error or a
    /// failure note counts in `failures` and as incorrect.
    pub fn of(results: &[&Result<RunReport>]) -> Self {
        let ok: Vec<&RunReport> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
        let failures = results.len() - ok.len() + ok.iter().filter(|r| r.failure.is_some()).count();
        let totals: Vec<f64> = ok.iter().map(|r| r.total_samples as f64).collect();
        let mean_of = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
        let mean_samples = mean_of(&totals);
        let std_samples = if totals.len() > 1 {
            (totals.iter().map(|t| (t - mean_samples).powi(2)).sum::<f64>() / (totals.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        let binding: Vec<f64> = ok.iter().filter_map(|r| r.binding_mean).collect();
        let nonbinding: Vec<f64> = ok.iter().filter_map(|r| r.nonbinding_mean).collect();
        let correct = ok.iter().filter(|r| r.correct).count();
        Self {
            trials: results.len(),
            mean_samples,
            std_samples,
            correct_rate: if results.is_empty() { f64::NAN } else { correct as f64 / results.len() as f64 },
            mean_binding: mean_of(&binding),
            mean_nonbinding: mean_of(&nonbinding),
            failures,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub axis_value: f64,
    pub algorithm: AlgorithmId,
    pub summary: Summary,
}

pub fn run_sweep(
    axis: SweepAxis,
    values: &[f64],
    trials: usize,
    base: &GeneratorConfig,
    tol: &ToleranceParams,
) -> Result<Vec<SweepRow>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let points: Vec<(f64, GeneratorConfig, ToleranceParams)> = values
        .iter()
        .map(|&v| axis.apply(v, base, tol).map(|(c, t)| (v, c, t)))
        .collect::<Result<_>>()?;
    let algs = AlgorithmId::UNKNOWN_B;
    let jobs: Vec<(usize, u64)> = (0..points.len()).flat_map(|p| (0..trials as u64).map(move |t| (p, t))).collect();
    let results: Vec<Vec<Result<RunReport>>> = jobs
        .par_iter()
        .map(|&(p, t)| {
            let (v, cfg, tol) = &points[p];
            run_trial(cfg, tol, base.seed, *v, t, &algs)
        })
        .collect();
    let mut rows = Vec::new();
    for (p, (v, _, _)) in points.iter().enumerate() {
        let block = &results[p * trials..(p + 1) * trials];
        for (a, &alg) in algs.iter().enumerate() {
            let of_alg: Vec<&Result<RunReport>> = block.iter().map(|r| &r[a]).collect();
            rows.push(SweepRow { axis, axis_value: *v, algorithm: alg, summary: Summary::of(&of_alg) });
        }
    }
    Ok(rows)
}

pub const SWEEP_HEADER: [&str; 10] = [
    "axis",
    "axis_value",
    "algorithm",
    "trials",
    "mean_samples",
    "std_samples",
    "correct_rate",
    "mean_binding",
    "mean_nonbinding",
    "failures",
];

/// Decimal rendering with 6 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.5e}").parse().expect("valid float");
    format!("{rounded}")
}

pub fn write_sweep_csv(rows: &[SweepRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::SolverFailure(format!("csv: {e}"));
    w.write_record(SWEEP_HEADER).map_err(io)?;
    for r in rows {
        let s = &r.summary;
        w.write_record([
            r.axis.name().to_string(),
            fmt_num(r.axis_value),
            r.algorithm.name().to_string(),
            s.trials.to_string(),
            fmt_num(s.mean_samples),
            fmt_num(s.std_samples),
            fmt_num(s.correct_rate),
            fmt_num(s.mean_binding),
            fmt_num(s.mean_nonbinding),
            s.failures.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::SolverFailure(format!("csv: {e}")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table1Row {
    pub algorithm: AlgorithmId,
    pub summary: Summary,
}

/// Static, Ellipsoid-UCB and the binding oracle on the same instances.
pub fn table1_report(cfg: &GeneratorConfig, tol: &ToleranceParams, trials: usize) -> Result<Vec<Table1Row>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let algs = [AlgorithmId::Static, AlgorithmId::UcbEllipsoid, AlgorithmId::BindingOracle];
    let results: Vec<Vec<Result<RunReport>>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| run_trial(cfg, tol, cfg.seed, 0.0, t, &algs))
        .collect();
    Ok(algs
        .iter()
        .enumerate()
        .map(|(a, &alg)| {
            let of_alg: Vec<&Result<RunReport>> = results.iter().map(|r| &r[a]).collect();
            Table1Row { algorithm: alg, summary: Summary::of(&of_alg) }
        })
        .collect())
}

pub const TABLE1_HEADER: [&str; 7] =
    ["algorithm", "trials", "binding_mean", "nonbinding_mean", "mean_samples", "correct_rate", "failures"];

pub fn write_table1_csv(rows: &[Table1Row], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::SolverFailure(format!("csv: {e}"));
    w.write_record(TABLE1_HEADER).map_err(io)?;
    for r in rows {
        let s = &r.summary;
        w.write_record([
            r.algorithm.name().to_string(),
            s.trials.to_string(),
            fmt_num(s.mean_binding),
            fmt_num(s.mean_nonbinding),
            fmt_num(s.mean_samples),
            fmt_num(s.correct_rate),
            s.failures.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::SolverFailure(format!("csv: {e}")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct CdfPoint {
    pub trial: u64,
    /// Ellipsoid-UCB total over binding-oracle total.
    pub ratio: f64,
    /// Fraction of trials with a ratio at most this one.
    pub cdf: f64,
    /// `m ln m / (d ln d)`, the static approach in the same units.
    pub static_ratio: f64,
}

/// Empirical distribution of the UCB-to-oracle sample ratio, sorted.
/// Trials where either run failed, or where no row of `A` binds so the
/// oracle draws nothing, are left out.
pub fn cdf_report(cfg: &GeneratorConfig, tol: &ToleranceParams, trials: usize) -> Result<Vec<CdfPoint>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let algs = [AlgorithmId::UcbEllipsoid, AlgorithmId::BindingOracle];
    let raw: Vec<Option<(u64, f64, f64)>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let gen = GeneratorConfig { seed: trial_seed(cfg.seed, 0.0, t, 0), ..*cfg };
            let inst = generate_instance(&gen).ok()?;
            let d = binding_count(&inst) as f64;
            let m = inst.num_constraints() as f64;
            let runs: Vec<RunReport> = algs
                .iter()
                .map(|&a| run_algorithm(&inst, a, tol, trial_seed(cfg.seed, 0.0, t, a.seed_tag())).ok())
                .collect::<Option<_>>()?;
            if runs.iter().any(|r| r.failure.is_some()) || runs[1].total_samples == 0 {
                return None;
            }
            let ratio = runs[0].total_samples as f64 / runs[1].total_samples as f64;
            Some((t, ratio, m * m.ln() / (d * d.ln())))
        })
        .collect();
    let mut kept: Vec<(u64, f64, f64)> = raw.into_iter().flatten().collect();
    kept.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let total = kept.len() as f64;
    Ok(kept
        .into_iter()
        .enumerate()
        .map(|(k, (trial, ratio, static_ratio))| CdfPoint { trial, ratio, cdf: (k + 1) as f64 / total, static_ratio })
        .collect())
}

pub fn write_cdf_csv(points: &[CdfPoint], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::SolverFailure(format!("csv: {e}"));
    w.write_record(["trial", "ratio", "cdf", "static_ratio"]).map_err(io)?;
    for p in points {
        w.write_record([p.trial.to_string(), fmt_num(p.ratio), fmt_num(p.cdf), fmt_num(p.static_ratio)])
            .map_err(io)?;
    }
    w.flush().map_err(|e| Error::SolverFailure(format!("csv: {e}")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteTrial {
    pub trial: u64,
    pub vertices: usize,
    pub gap: f64,
    pub low: f64,
    pub total_samples: u64,
    pub rounds: usize,
    pub correct: bool,
    /// Total samples over `Low ln(1/D) (ln|S| + ln(1/delta) + lnln(1/D))`.
    pub budget_ratio: f64,
    pub failure: Option<String>,
}

/// Successive elimination over the unknown-c suite, with `Low(I)` for each
/// instance as the reference scale.
pub fn succ_elim_bench(cfg: &SuiteConfig, delta: f64, trials: usize) -> Result<Vec<SuiteTrial>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    ToleranceParams::new(delta, 0.0, 0.0)?;
    (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let inst = generate_unknown_c(&SuiteConfig { seed: trial_seed(cfg.seed, 0.0, t, 0), ..*cfg })?;
            let vertices = enumerate_vertices(&inst)?;
            let gap = objective_gap(&inst, &vertices);
            let (_, low) = low_of_instance(&inst, &vertices)?;
            let count = vertices.len();
            let seed = trial_seed(cfg.seed, 0.0, t, AlgorithmId::SuccessiveElimination.seed_tag());
            let run = run_on_vertices(&inst, vertices, &EliminationConfig::new(delta), seed)?;
            let rounds = run.rounds.len();
            let out: AlgorithmOutput = run.output;
            let report = RunReport::evaluate(&inst, out, &exact_vertex_tolerance(delta, gap), Default::default());
            Ok(SuiteTrial {
                trial: t,
                vertices: count,
                gap,
                low,
                total_samples: report.total_samples,
                rounds,
                correct: report.correct,
                budget_ratio: report.total_samples as f64 / sample_budget(1.0, low, gap, count, delta),
                failure: report.failure,
            })
        })
        .collect()
}

pub fn write_suite_csv(rows: &[SuiteTrial], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::SolverFailure(format!("csv: {e}"));
    w.write_record(["trial", "vertices", "gap", "low", "total_samples", "rounds", "correct", "budget_ratio", "failure"])
        .map_err(io)?;
    for r in rows {
        w.write_record([
            r.trial.to_string(),
            r.vertices.to_string(),
            fmt_num(r.gap),
            fmt_num(r.low),
            r.total_samples.to_string(),
            r.rounds.to_string(),
            r.correct.to_string(),
            fmt_num(r.budget_ratio),
            r.failure.clone().unwrap_or_default(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::SolverFailure(format!("csv: {e}")))
}
