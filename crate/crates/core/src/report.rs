//! Algorithm outputs and the evaluated per-run report.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::lp_model::{LpInstance, ToleranceParams, UnknownSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AlgorithmId {
    #[serde(rename = "ucb")]
    UcbEllipsoid,
    #[serde(rename = "static")]
    Static,
    #[serde(rename = "oracle")]
    BindingOracle,
    #[serde(rename = "succ-elim")]
    SuccessiveElimination,
}

impl AlgorithmId {
    pub const UNKNOWN_B: [AlgorithmId; 3] =
        [AlgorithmId::UcbEllipsoid, AlgorithmId::Static, AlgorithmId::BindingOracle];

    pub fn name(self) -> &'static str {
        match self {
            AlgorithmId::UcbEllipsoid => "ucb",
            AlgorithmId::Static => "static",
            AlgorithmId::BindingOracle => "oracle",
            AlgorithmId::SuccessiveElimination => "succ-elim",
        }
    }

    /// Stable small integer mixed into per-trial seeds.
    pub fn seed_tag(self) -> u64 {
        match self {
            AlgorithmId::UcbEllipsoid => 1,
            AlgorithmId::Static => 2,
            AlgorithmId::BindingOracle => 3,
            AlgorithmId::SuccessiveElimination => 4,
        }
    }

    pub fn required_unknown(self) -> UnknownSet {
        match self {
            AlgorithmId::SuccessiveElimination => UnknownSet::UnknownC,
            _ => UnknownSet::UnknownB,
        }
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AlgorithmId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "ucb" | "ucb-ellipsoid" => Ok(AlgorithmId::UcbEllipsoid),
            "static" => Ok(AlgorithmId::Static),
            "oracle" | "binding-oracle" => Ok(AlgorithmId::BindingOracle),
            "succ-elim" => Ok(AlgorithmId::SuccessiveElimination),
            other => Err(Error::InvalidParameter(format!("unknown algorithm '{other}'"))),
        }
    }
}

/// What an algorithm hands back: its answer and its sampling bill.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgorithmOutput {
    pub algorithm: AlgorithmId,
    pub seed: u64,
    pub point: Option<Vec<f64>>,
    /// Samples drawn per hidden parameter.
    pub samples: Vec<u64>,
    /// Ellipsoid iterations or elimination rounds.
    pub iterations: usize,
    pub failure: Option<String>,
    pub is_oracle: bool,
}

impl AlgorithmOutput {
    pub fn total_samples(&self) -> u64 {
        self.samples.iter().sum()
    }
}

/// An algorithm run judged against the true instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: AlgorithmId,
    pub seed: u64,
    pub total_samples: u64,
    pub per_parameter_samples: Vec<u64>,
    /// Mean samples per binding row of `A` (unknown-b only).
    pub binding_mean: Option<f64>,
    pub nonbinding_mean: Option<f64>,
    pub output: Option<Vec<f64>>,
    pub correct: bool,
    pub is_oracle: bool,
    pub iterations: usize,
    pub failure: Option<String>,
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Rows of `A` counted as binding at the exact optimum.
pub const BINDING_TOL: f64 = 1e-6;

impl RunReport {
    /// Judge `out` on `inst`; correctness is recomputed from the true
    /// parameters, never taken from the algorithm.
    pub fn evaluate(
        inst: &LpInstance,
        out: AlgorithmOutput,
        tol: &ToleranceParams,
        wall_time: Duration,
    ) -> Self {
        let correct = out
            .point
            .as_ref()
            .is_some_and(|x| inst.check_opt_membership(x, tol));
        let (binding_mean, nonbinding_mean) = match inst.unknown_set() {
            UnknownSet::UnknownB => {
                let binding = inst.binding_set(&inst.optimum().point, BINDING_TOL);
                split_means(&out.samples, &binding)
            }
            UnknownSet::UnknownC => (None, None),
        };
        Self {
            algorithm: out.algorithm,
            seed: out.seed,
            total_samples: out.total_samples(),
            binding_mean,
            nonbinding_mean,
            per_parameter_samples: out.samples,
            output: out.point,
            correct,
            is_oracle: out.is_oracle,
            iterations: out.iterations,
            failure: out.failure,
            wall_time,
        }
    }
}

fn split_means(samples: &[u64], binding: &[usize]) -> (Option<f64>, Option<f64>) {
    let mut on = (0u64, 0usize);
    let mut off = (0u64, 0usize);
    for (i, &s) in samples.iter().enumerate() {
        let slot = if binding.contains(&i) { &mut on } else { &mut off };
        slot.0 += s;
        slot.1 += 1;
    }
    let mean = |(sum, k): (u64, usize)| (k > 0).then(|| sum as f64 / k as f64);
    (mean(on), mean(off))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn means_split_by_binding_rows() {
        let (b, nb) = split_means(&[10, 1, 20, 3], &[0, 2]);
        assert_eq!(b, Some(15.0));
        assert_eq!(nb, Some(2.0));
        assert_eq!(split_means(&[4, 4], &[]).0, None);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for id in [
            AlgorithmId::UcbEllipsoid,
            AlgorithmId::Static,
            AlgorithmId::BindingOracle,
            AlgorithmId::SuccessiveElimination,
        ] {
            assert_eq!(id.name().parse::<AlgorithmId>().unwrap(), id);
        }
        assert!("simplex".parse::<AlgorithmId>().is_err());
    }
}
