//! Resampling data-generating process and the squared-gap accuracy metric.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::cre::MethodConfig;
use crate::error::{Error, Result};
use crate::model::{IteDistribution, IteProfileCi, OutcomeTable, PotentialOutcomeFrame};
use crate::rng::{self, domain};

pub const DEFAULT_NOISE_SD: f64 = 0.15;
pub const DEFAULT_REPS: usize = 1000;
pub const DEFAULT_FILL: f64 = -10.0;
pub const DEFAULT_FRACTIONS: [f64; 6] = [0.5, 0.75, 0.8, 0.85, 0.9, 0.95];

#[derive(Debug, Clone)]
pub struct SimulationSpec {
    /// Outcomes resampled for treatment potential outcomes.
    pub pool1: Vec<f64>,
    /// Outcomes resampled for control potential outcomes.
    pub pool0: Vec<f64>,
    pub n1: usize,
    pub n0: usize,
    pub noise_sd: f64,
    pub reps: usize,
    pub methods: Vec<MethodConfig>,
    pub fractions: Vec<f64>,
    pub fill: f64,
    /// Target error rate of every reported profile.
    pub alpha: f64,
    pub draws: usize,
    pub seed: u64,
}

impl SimulationSpec {
    pub fn new(
        pool1: Vec<f64>,
        pool0: Vec<f64>,
        n1: usize,
        n0: usize,
        methods: Vec<MethodConfig>,
        seed: u64,
    ) -> Self {
        Self {
            pool1,
            pool0,
            n1,
            n0,
            noise_sd: DEFAULT_NOISE_SD,
            reps: DEFAULT_REPS,
            methods,
            fractions: DEFAULT_FRACTIONS.to_vec(),
            fill: DEFAULT_FILL,
            alpha: 0.05,
            draws: 10_000,
            seed,
        }
    }

    pub fn n(&self) -> usize {
        self.n1 + self.n0
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool1.is_empty() || self.pool0.is_empty() {
            return Err(Error::InvalidParameter(
                "simulation pools must be nonempty".into(),
            ));
        }
        if self.pool1.iter().chain(&self.pool0).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "simulation pools must be finite".into(),
            ));
        }
        if self.reps == 0 {
            return Err(Error::InvalidParameter(
                "at least one replication is needed".into(),
            ));
        }
        if self.n1 == 0 || self.n0 == 0 {
            return Err(Error::InvalidParameter(
                "both simulated arms need at least one unit".into(),
            ));
        }
        if !(self.noise_sd.is_finite() && self.noise_sd >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise sd must be nonnegative, got {}",
                self.noise_sd
            )));
        }
        Ok(())
    }
}

/// One replication: every unit draws a treatment outcome from `pool1` and a
/// control outcome from `pool0` with replacement, each plus independent
/// Gaussian noise; the first `N_1` units are treated. Returns the observed
/// table and the full science table.
pub fn run_dgp(
    spec: &SimulationSpec,
    rep_index: u64,
) -> Result<(OutcomeTable, PotentialOutcomeFrame)> {
    spec.validate()?;
    let mut r = rng::substream(spec.seed, domain::DGP, rep_index);
    let noise =
        Normal::new(0.0, spec.noise_sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let n = spec.n();
    let mut y1 = Vec::with_capacity(n);
    let mut y0 = Vec::with_capacity(n);
    for _ in 0..n {
        let a = spec.pool1[r.random_range(0..spec.pool1.len())] + noise.sample(&mut r);
        let b = spec.pool0[r.random_range(0..spec.pool0.len())] + noise.sample(&mut r);
        y1.push(a);
        y0.push(b);
    }
    let frame = PotentialOutcomeFrame::from_science(&y1, &y0)?;
    let z: Vec<bool> = (0..n).map(|i| i < spec.n1).collect();
    Ok((frame.observe(&z)?, frame))
}

/// `|K|^-1 sum_{k in K} (L_k - tau_(k))^2`, with `-inf` limits replaced by
/// `fill`.
pub fn ss_metric(profile: &IteProfileCi, truth: &IteDistribution, fill: f64) -> Result<f64> {
    if profile.ranks.is_empty() {
        return Err(Error::InvalidParameter("profile has no ranks".into()));
    }
    let mut total = 0.0;
    for (&k, &l) in profile.ranks.iter().zip(&profile.lower) {
        if k == 0 || k > truth.n() {
            return Err(Error::RankOutOfRange { k, n: truth.n() });
        }
        let l = if l == f64::NEG_INFINITY { fill } else { l };
        total += (l - truth.order_stat(k)?).powi(2);
    }
    Ok(total / profile.ranks.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(ranks: Vec<usize>, lower: Vec<f64>) -> IteProfileCi {
        IteProfileCi {
            ranks,
            lower,
            alpha: 0.05,
            simultaneous: false,
            method: "x".into(),
        }
    }

    #[test]
    fn ss_examples() {
        let truth = IteDistribution::new(vec![2.0]).unwrap();
        assert_eq!(
            ss_metric(&profile(vec![1], vec![1.0]), &truth, -10.0).unwrap(),
            1.0
        );
        let zero = IteDistribution::new(vec![0.0]).unwrap();
        assert_eq!(
            ss_metric(&profile(vec![1], vec![f64::NEG_INFINITY]), &zero, -10.0).unwrap(),
            100.0
        );
        let t = IteDistribution::new(vec![0.5, 1.0, 3.0]).unwrap();
        assert_eq!(
            ss_metric(&profile(vec![1, 2, 3], vec![0.5, 1.0, 3.0]), &t, -10.0).unwrap(),
            0.0
        );
        assert!(ss_metric(&profile(vec![4], vec![0.0]), &t, -10.0).is_err());
    }

    #[test]
    fn singleton_pools_without_noise() {
        let mut spec = SimulationSpec::new(vec![3.0], vec![1.0], 4, 5, vec![], 1);
        spec.noise_sd = 0.0;
        let (table, frame) = run_dgp(&spec, 0).unwrap();
        assert_eq!(table.n_treated(), 4);
        assert!(frame.tau().iter().all(|t| *t == Some(2.0)));
    }

    #[test]
    fn deterministic() {
        let spec = SimulationSpec::new(vec![1.0, 2.0, 5.0], vec![0.0, 0.5], 6, 6, vec![], 9);
        let (a, _) = run_dgp(&spec, 3).unwrap();
        let (b, _) = run_dgp(&spec, 3).unwrap();
        let (c, _) = run_dgp(&spec, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn empty_pool_rejected() {
        let spec = SimulationSpec::new(vec![], vec![0.0], 2, 2, vec![], 1);
        assert!(run_dgp(&spec, 0).is_err());
    }
}
