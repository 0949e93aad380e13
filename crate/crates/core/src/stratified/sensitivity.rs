//! Matched-pair sensitivity analysis: assignment within each pair may favour
//! one unit by an odds ratio of at most `Gamma`.

use rand::Rng;

use super::{convolve_all, Solver, StratifiedData};
use crate::cre::invert_on_grid;
use crate::error::{Error, Result};
use crate::model::{check_alpha, check_ranks, IteProfileCi, OutcomeTable, QuantileHypothesis};
use crate::par;
use crate::rankstat::{NullDistribution, NullKind, NullSettings, RankScoreSpec};
use crate::rng::{self, domain};

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "sensitivity parameter must be a finite value >= 1, got {gamma}"
        )));
    }
    Ok(())
}

fn pair_data(table: &OutcomeTable, spec: &RankScoreSpec) -> Result<StratifiedData> {
    let data = StratifiedData::new(table, &[*spec])?;
    if !data.is_pairs() {
        let strata = table.strata()?;
        let bad = strata
            .iter()
            .find(|s| {
                s.members.len() != 2
                    || s.members
                        .iter()
                        .filter(|&&i| table.rows()[i].treated)
                        .count()
                        != 1
            })
            .map(|s| s.label.clone())
            .unwrap_or_default();
        return Err(Error::NonPairStratum(bad));
    }
    Ok(data)
}

/// Upper bound on the null distribution of the pair statistic when each
/// pair takes its larger score with probability `Gamma / (1 + Gamma)`.
/// At `Gamma = 1` this is the randomization distribution, computed along the
/// same path.
fn biased_null(
    data: &StratifiedData,
    gamma: f64,
    settings: &NullSettings,
) -> Result<NullDistribution> {
    let pairs = data.pair_scores();
    if settings.use_exact(data.assignment_count())? {
        let parts = pairs
            .iter()
            .map(|&(lo, hi)| {
                NullDistribution::from_atoms(NullKind::Exact, vec![(lo, 1.0), (hi, gamma)], 2)
            })
            .collect();
        Ok(convolve_all(parts))
    } else {
        let high = gamma / (1.0 + gamma);
        let values = par::map_range(rng::chunk_count(settings.draws), |c| {
            let mut r = rng::substream(settings.seed, domain::NULL_CRE, c as u64);
            rng::chunk_bounds(c, settings.draws)
                .map(|_| {
                    let mut t = 0.0;
                    for &(lo, hi) in &pairs {
                        t += if r.random::<f64>() < high { hi } else { lo };
                    }
                    t
                })
                .collect::<Vec<f64>>()
        })
        .concat();
        Ok(NullDistribution::from_values(NullKind::MonteCarlo, values))
    }
}

/// Worst-case p-value for `H_{k,c}` in a matched-pair design under the
/// sensitivity model with parameter `gamma`.
pub fn sensitivity_pvalue_pairs(
    table: &OutcomeTable,
    h: QuantileHypothesis,
    gamma: f64,
    spec: &RankScoreSpec,
    settings: &NullSettings,
) -> Result<f64> {
    check_gamma(gamma)?;
    h.check_rank(table.n())?;
    let data = pair_data(table, spec)?;
    let (t, _) = data.min_stat(h.c, table.n() - h.k, Solver::Dp)?;
    Ok(biased_null(&data, gamma, settings)?.tail(t))
}

/// Lower limits for `ranks` under one value of the sensitivity parameter.
#[derive(Debug, Clone)]
pub struct SensitivityCurve {
    pub gamma: f64,
    pub profile: IteProfileCi,
}

/// One profile per value in `gammas`.
pub fn sensitivity_profile(
    table: &OutcomeTable,
    ranks: &[usize],
    alpha: f64,
    gammas: &[f64],
    spec: &RankScoreSpec,
    settings: &NullSettings,
) -> Result<Vec<SensitivityCurve>> {
    check_alpha(alpha)?;
    check_ranks(ranks, table.n())?;
    let data = pair_data(table, spec)?;
    let n = table.n();
    gammas
        .iter()
        .map(|&gamma| {
            check_gamma(gamma)?;
            let null = biased_null(&data, gamma, settings)?;
            let lower = par::map_slice(ranks, |&k| {
                invert_on_grid(data.grid(), alpha, |c| {
                    let (t, _) = data
                        .min_stat(c, n - k, Solver::Dp)
                        .expect("allocation total within capacity");
                    null.tail(t)
                })
            });
            let mut profile = IteProfileCi {
                ranks: ranks.to_vec(),
                lower,
                alpha,
                simultaneous: true,
                method: format!("pairs-{}", spec.kind),
            };
            profile.monotonize();
            Ok(SensitivityCurve { gamma, profile })
        })
        .collect()
}

/// A pair of associations, with treatment (`lambda`) and with the outcome
/// (`delta`), equivalent to one value of `Gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Amplification {
    pub lambda: f64,
    pub delta: f64,
}

/// Solves `(lambda * delta + 1) / (lambda + delta) = gamma` for `delta`.
pub fn amplify_gamma(gamma: f64, lambda: f64) -> Result<Amplification> {
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "amplification needs gamma > 1, got {gamma}"
        )));
    }
    if !(lambda.is_finite() && lambda > gamma) {
        return Err(Error::InvalidParameter(format!(
            "amplification needs lambda > gamma = {gamma}, got {lambda}"
        )));
    }
    Ok(Amplification {
        lambda,
        delta: (gamma * lambda - 1.0) / (lambda - gamma),
    })
}

/// The point of the curve with `lambda = delta`.
pub fn symmetric_amplification(gamma: f64) -> Result<Amplification> {
    check_gamma(gamma)?;
    let l = gamma + (gamma * gamma - 1.0).sqrt();
    Ok(Amplification {
        lambda: l,
        delta: l,
    })
}

pub fn amplification_curve(gamma: f64, lambdas: &[f64]) -> Result<Vec<Amplification>> {
    lambdas.iter().map(|&l| amplify_gamma(gamma, l)).collect()
}
