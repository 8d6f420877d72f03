//! Noisy observations of hidden parameters and the anytime confidence radius.
//!
//! Each hidden parameter owns an independent ChaCha substream keyed by its
//! index, so the values observed for parameter `i` depend only on the seed and
//! on how many times `i` itself has been sampled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gaussian sampling oracle over a vector of hidden means.
#[derive(Clone, Debug)]
pub struct NoisyOracle {
    means: Vec<f64>,
    sigma: Vec<f64>,
    seed: u64,
    streams: Vec<ChaCha8Rng>,
}

impl NoisyOracle {
    pub fn new(means: Vec<f64>, sigma: Vec<f64>, seed: u64) -> Result<Self> {
        if means.len() != sigma.len() {
            return Err(Error::InvalidParameter("means and noise scales differ in length".into()));
        }
        let streams = (0..means.len()).map(|i| substream(seed, i)).collect();
        Ok(Self { means, sigma, seed, streams })
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise_scale(&self) -> &[f64] {
        &self.sigma
    }

    /// Same parameters, fresh streams from another seed.
    pub fn reseeded(&self, seed: u64) -> Self {
        Self::new(self.means.clone(), self.sigma.clone(), seed).expect("lengths already checked")
    }

    /// One observation of parameter `i`, recorded in `ledger`.
    pub fn draw(&mut self, ledger: &mut SampleLedger, i: usize) -> Result<f64> {
        if i >= self.means.len() || i >= ledger.counts.len() {
            return Err(Error::UnknownParameterOnly(i));
        }
        let z: f64 = StandardNormal.sample(&mut self.streams[i]);
        let x = self.means[i] + self.sigma[i] * z;
        ledger.record(i, 1, x);
        Ok(x)
    }

    /// `count` observations of parameter `i`, returning their sum.
    ///
    /// The sum of `count` iid `N(mu, s^2)` draws is drawn directly from
    /// `N(count * mu, count * s^2)`, which has the same law and costs one
    /// normal variate.
    pub fn draw_sum(&mut self, ledger: &mut SampleLedger, i: usize, count: u64) -> Result<f64> {
        if i >= self.means.len() || i >= ledger.counts.len() {
            return Err(Error::UnknownParameterOnly(i));
        }
        if count == 0 {
            return Ok(0.0);
        }
        let k = count as f64;
        let z: f64 = StandardNormal.sample(&mut self.streams[i]);
        let sum = k * self.means[i] + self.sigma[i] * k.sqrt() * z;
        ledger.record(i, count, sum);
        Ok(sum)
    }
}

fn substream(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

/// Per-parameter sample counts and running sums.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleLedger {
    counts: Vec<u64>,
    sums: Vec<f64>,
    total: u64,
}

impl SampleLedger {
    pub fn new(num_params: usize) -> Self {
        Self { counts: vec![0; num_params], sums: vec![0.0; num_params], total: 0 }
    }

    fn record(&mut self, i: usize, count: u64, sum: f64) {
        self.counts[i] += count;
        self.sums[i] += sum;
        self.total += count;
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, i: usize) -> u64 {
        self.counts[i]
    }

    pub fn sum(&self, i: usize) -> f64 {
        self.sums[i]
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Empirical mean; `None` before the first sample.
    pub fn mean(&self, i: usize) -> Option<f64> {
        (self.counts[i] > 0).then(|| self.sums[i] / self.counts[i] as f64)
    }
}

/// `U(s) = 3 sqrt(2 sigma^2 ln(ln(3s/2) / delta') / s)` with natural logs.
pub fn confidence_radius(sigma: f64, s: u64, delta_prime: f64) -> Result<f64> {
    if s == 0 {
        return Err(Error::DomainError("sample count must be >= 1".into()));
    }
    if !(delta_prime > 0.0 && delta_prime < 1.0) {
        return Err(Error::DomainError(format!("delta' = {delta_prime} outside (0, 1)")));
    }
    let s = s as f64;
    let inner = (1.5 * s).ln() / delta_prime;
    if inner <= 1.0 {
        return Err(Error::DomainError(format!("ln(3s/2)/delta' = {inner} <= 1")));
    }
    Ok(3.0 * (2.0 * sigma * sigma * inner.ln() / s).sqrt())
}

/// Per-constraint confidence level `(delta / 20m)^(2/3)`.
pub fn delta_prime(delta: f64, m: usize) -> f64 {
    (delta / (20.0 * m as f64)).powf(2.0 / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn degenerate_noise_returns_truth() {
        let mut oracle = NoisyOracle::new(vec![2.5, -1.0], vec![1e-12, 1e-12], 3).unwrap();
        let mut ledger = SampleLedger::new(2);
        let x = oracle.draw(&mut ledger, 1).unwrap();
        assert!((x + 1.0).abs() < 1e-9);
    }

    #[test]
    fn replay_is_deterministic() {
        let draw_pair = |seed| {
            let mut o = NoisyOracle::new(vec![0.0], vec![1.0], seed).unwrap();
            let mut l = SampleLedger::new(1);
            (o.draw(&mut l, 0).unwrap(), o.draw(&mut l, 0).unwrap())
        };
        let (a, b) = draw_pair(11);
        assert_ne!(a, b);
        assert_eq!(draw_pair(11), (a, b));
        assert_ne!(draw_pair(12), (a, b));
    }

    #[test]
    fn streams_are_independent_of_draw_order() {
        let mut o1 = NoisyOracle::new(vec![0.0; 3], vec![1.0; 3], 5).unwrap();
        let mut o2 = o1.clone();
        let mut l1 = SampleLedger::new(3);
        let mut l2 = SampleLedger::new(3);
        let a: Vec<f64> = [0, 2, 0, 1].iter().map(|&i| o1.draw(&mut l1, i).unwrap()).collect();
        let b: Vec<f64> = [1, 0, 2, 0].iter().map(|&i| o2.draw(&mut l2, i).unwrap()).collect();
        assert_eq!(a[0], b[1]);
        assert_eq!(a[2], b[3]);
        assert_eq!(a[1], b[2]);
        assert_eq!(a[3], b[0]);
    }

    #[test]
    fn law_of_large_numbers() {
        let mut o = NoisyOracle::new(vec![3.0], vec![1.0], 99).unwrap();
        let mut l = SampleLedger::new(1);
        for _ in 0..100_000 {
            o.draw(&mut l, 0).unwrap();
        }
        assert!((l.mean(0).unwrap() - 3.0).abs() < 0.02);
    }

    #[test]
    fn batched_sum_matches_moments() {
        let mut o = NoisyOracle::new(vec![1.5], vec![2.0], 1).unwrap();
        let mut l = SampleLedger::new(1);
        let k = 400u64;
        let reps = 4000;
        let sums: Vec<f64> = (0..reps).map(|_| o.draw_sum(&mut l, 0, k).unwrap()).collect();
        let mean = sums.iter().sum::<f64>() / reps as f64;
        let var = sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        assert!((mean / k as f64 - 1.5).abs() < 0.01);
        assert!((var / (4.0 * k as f64) - 1.0).abs() < 0.1);
        assert_eq!(l.count(0), k * reps as u64);
    }

    #[test]
    fn unknown_index_is_rejected() {
        let mut o = NoisyOracle::new(vec![0.0], vec![1.0], 0).unwrap();
        let mut l = SampleLedger::new(1);
        assert_eq!(o.draw(&mut l, 1), Err(Error::UnknownParameterOnly(1)));
    }

    #[test]
    fn radius_reference_value() {
        // 3 * sqrt(2 * ln(ln(1.5) / 0.01)) evaluated in extended precision
        let u = confidence_radius(1.0, 1, 0.01).unwrap();
        assert!((u - 8.163_583_474_483_727).abs() < 1e-9, "{u}");
    }

    #[test]
    fn radius_is_linear_in_sigma_and_decreasing() {
        let d = 0.01;
        for s in [1, 7, 1000] {
            let a = confidence_radius(1.0, s, d).unwrap();
            let b = confidence_radius(2.0, s, d).unwrap();
            assert!((b - 2.0 * a).abs() < 1e-12 * b);
        }
        let u = |s| confidence_radius(1.0, s, d).unwrap();
        assert!(u(1_000_000) < u(10_000) && u(10_000) < u(100));
    }

    #[test]
    fn radius_domain_error() {
        // ln(1.5)/0.5 < 1
        assert!(matches!(confidence_radius(1.0, 1, 0.5), Err(Error::DomainError(_))));
        assert!(confidence_radius(1.0, 0, 0.01).is_err());
    }

    #[test]
    fn delta_prime_values() {
        assert!((delta_prime(0.1, 80) - 1.574_901e-3).abs() < 1e-8);
        assert!((delta_prime(0.1, 1) - 0.029_240_18).abs() < 1e-7);
        for m in [1, 5, 80] {
            assert!(delta_prime(0.999, m) < 1.0);
        }
    }

    proptest! {
        #[test]
        fn ledger_stays_consistent(seq in proptest::collection::vec(0usize..4, 0..200)) {
            let mut o = NoisyOracle::new(vec![1.0, 2.0, 3.0, 4.0], vec![1.0; 4], 7).unwrap();
            let mut l = SampleLedger::new(4);
            let mut by_hand = [0.0f64; 4];
            for &i in &seq {
                by_hand[i] += o.draw(&mut l, i).unwrap();
            }
            prop_assert_eq!(l.total(), l.counts().iter().sum::<u64>());
            prop_assert_eq!(l.total() as usize, seq.len());
            for i in 0..4 {
                match l.mean(i) {
                    None => prop_assert_eq!(l.count(i), 0),
                    Some(m) => prop_assert_eq!(m, l.sum(i) / l.count(i) as f64),
                }
                prop_assert!((l.sum(i) - by_hand[i]).abs() < 1e-9);
            }
        }
    }
}
