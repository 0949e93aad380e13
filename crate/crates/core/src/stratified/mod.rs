//! Quantile inference in stratified experiments.
//!
//! The statistic is the sum of within-stratum rank score statistics. Its
//! minimum over effects compatible with `H_{k,c}` splits into a choice of how
//! many treated units to sink in each stratum, solved as a multiple-choice
//! knapsack. The reference distribution comes from independent complete
//! randomization within strata.

pub mod knapsack;
pub mod sensitivity;

use crate::cre::{invert_on_grid, CreData};
use crate::error::{Error, Result};
use crate::model::{
    check_alpha, check_ranks, DesignMode, IteProfileCi, OutcomeTable, Participant,
    QuantileHypothesis,
};
use crate::par;
use crate::rankstat::{
    binomial_saturating, enumerate_subset_sums, sample_sum, NullDistribution, NullKind,
    NullSettings, RankScoreSpec, TieOrder,
};
use crate::rng::{self, domain};

pub use knapsack::{
    knapsack, knapsack_dp, knapsack_greedy, lower_envelope, Solver, StratifiedAllocation,
};
pub use sensitivity::{
    amplification_curve, amplify_gamma, sensitivity_profile, sensitivity_pvalue_pairs,
    symmetric_amplification, Amplification, SensitivityCurve,
};

/// Stratified procedures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StratMethod {
    /// Direct inversion of the worst-case stratified test.
    M1,
    /// Treated-unit and control-unit limits pooled, reported at twice the
    /// per-step level.
    M2,
}

impl std::str::FromStr for StratMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m1" | "m1str" => Ok(StratMethod::M1),
            "m2" | "m2str" => Ok(StratMethod::M2),
            _ => Err(Error::InvalidParameter(format!(
                "unknown stratified method '{s}'"
            ))),
        }
    }
}

impl StratMethod {
    pub fn name(&self) -> &'static str {
        match self {
            StratMethod::M1 => "M1str",
            StratMethod::M2 => "M2str",
        }
    }
}

#[derive(Debug, Clone)]
struct StratumData {
    label: String,
    data: CreData,
    scores: Vec<f64>,
}

/// Per-stratum prepared data for repeated worst-case evaluations.
#[derive(Debug, Clone)]
pub struct StratifiedData {
    strata: Vec<StratumData>,
    n: usize,
    n1: usize,
    grid: Vec<f64>,
}

fn spec_for(specs: &[RankScoreSpec], s: usize, count: usize) -> Result<RankScoreSpec> {
    match specs.len() {
        1 => Ok(specs[0]),
        l if l == count => Ok(specs[s]),
        l => Err(Error::InvalidParameter(format!(
            "{l} statistic specs for {count} strata"
        ))),
    }
}

fn sub_table(table: &OutcomeTable, members: &[usize]) -> OutcomeTable {
    let rows: Vec<Participant> = members.iter().map(|&i| table.rows()[i].clone()).collect();
    OutcomeTable::new(rows, None)
}

impl StratifiedData {
    /// `specs` holds one statistic for all strata or one per stratum (in
    /// order of first appearance). Ties are broken by a single permutation
    /// over the whole table, drawn from the first spec's seed.
    pub fn new(table: &OutcomeTable, specs: &[RankScoreSpec]) -> Result<Self> {
        table.validate(DesignMode::Stratified)?;
        let strata = table.strata()?;
        let Some(first) = specs.first() else {
            return Err(Error::InvalidParameter("no statistic spec".into()));
        };
        let order = TieOrder::new(table.n(), first.tiebreak_seed);
        let count = strata.len();
        let built = strata
            .iter()
            .enumerate()
            .map(|(s, st)| {
                let spec = spec_for(specs, s, count)?;
                let sub = sub_table(table, &st.members);
                Ok(StratumData {
                    label: st.label.clone(),
                    data: CreData::with_order(&sub, &order.restrict(&st.members))?,
                    scores: spec.kind.scores(st.members.len()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut grid: Vec<f64> = built
            .iter()
            .flat_map(|s| s.data.grid().iter().copied())
            .collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        Ok(Self {
            strata: built,
            n: table.n(),
            n1: table.n_treated(),
            grid,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_treated(&self) -> usize {
        self.n1
    }

    pub fn stratum_count(&self) -> usize {
        self.strata.len()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.strata.iter().map(|s| s.label.as_str()).collect()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// True when every stratum holds one treated and one control unit.
    pub fn is_pairs(&self) -> bool {
        self.strata
            .iter()
            .all(|s| s.data.n() == 2 && s.data.n_treated() == 1)
    }

    /// Minimal within-stratum statistic with `b` treated units sunk.
    pub fn option_value(&self, s: usize, b: usize, c: f64) -> Result<f64> {
        let st = self
            .strata
            .get(s)
            .ok_or_else(|| Error::InvalidParameter(format!("stratum index {s} out of range")))?;
        if b > st.data.n_treated() {
            return Err(Error::InvalidParameter(format!(
                "cannot sink {b} of {} treated units in stratum {}",
                st.data.n_treated(),
                st.label
            )));
        }
        Ok(st.data.sunk_statistic(&st.scores, c, b))
    }

    /// `options[s][b]` for every stratum and `b = 0..=n_1s`.
    pub fn options(&self, c: f64) -> Vec<Vec<f64>> {
        self.strata
            .iter()
            .map(|st| {
                (0..=st.data.n_treated())
                    .map(|b| st.data.sunk_statistic(&st.scores, c, b))
                    .collect()
            })
            .collect()
    }

    /// Minimal stratified statistic with `sunk` treated units sunk in total.
    pub fn min_stat(
        &self,
        c: f64,
        sunk: usize,
        solver: Solver,
    ) -> Result<(f64, StratifiedAllocation)> {
        knapsack(&self.options(c), sunk.min(self.n1), solver)
    }

    /// Assignment count of the stratified design, saturating.
    pub(crate) fn assignment_count(&self) -> u128 {
        self.strata.iter().fold(1u128, |acc, st| {
            acc.saturating_mul(binomial_saturating(
                st.data.n() as u64,
                st.data.n_treated() as u64,
            ))
        })
    }

    /// Randomization distribution of the stratified statistic.
    pub fn null(&self, settings: &NullSettings) -> Result<NullDistribution> {
        let exact = settings.use_exact(self.assignment_count())?;
        let parts: Vec<(Vec<f64>, usize)> = self
            .strata
            .iter()
            .map(|st| (st.scores.clone(), st.data.n_treated()))
            .collect();
        if exact {
            let atoms: Vec<NullDistribution> = parts
                .iter()
                .map(|(sc, m)| {
                    NullDistribution::from_values(NullKind::Exact, enumerate_subset_sums(sc, *m))
                })
                .collect();
            Ok(convolve_all(atoms))
        } else {
            let values = par::map_range(rng::chunk_count(settings.draws), |c| {
                let mut r = rng::substream(settings.seed, domain::NULL_CRE, c as u64);
                rng::chunk_bounds(c, settings.draws)
                    .map(|_| {
                        let mut t = 0.0;
                        for (sc, m) in &parts {
                            t += sample_sum(&mut r, sc, *m);
                        }
                        t
                    })
                    .collect::<Vec<f64>>()
            })
            .concat();
            Ok(NullDistribution::from_values(NullKind::MonteCarlo, values))
        }
    }

    pub(crate) fn pair_scores(&self) -> Vec<(f64, f64)> {
        self.strata
            .iter()
            .map(|st| (st.scores[0], st.scores[1]))
            .collect()
    }
}

pub(crate) fn convolve_all(parts: Vec<NullDistribution>) -> NullDistribution {
    let mut iter = parts.into_iter();
    let first = iter
        .next()
        .unwrap_or_else(|| NullDistribution::point_mass(0.0));
    iter.fold(first, |acc, d| acc.convolve(&d))
}

/// `t_str(z, y) = sum_s t_s(z_s, y_s)` with ranks taken within strata.
pub fn stratified_stat(
    z: &[bool],
    y: &[f64],
    strata: &[String],
    specs: &[RankScoreSpec],
) -> Result<f64> {
    let table = OutcomeTable::stratified(z, y, strata)?;
    let groups = table.strata()?;
    let Some(first) = specs.first() else {
        return Err(Error::InvalidParameter("no statistic spec".into()));
    };
    let order = TieOrder::new(table.n(), first.tiebreak_seed);
    let mut total = 0.0;
    for (s, g) in groups.iter().enumerate() {
        let spec = spec_for(specs, s, groups.len())?;
        let ys: Vec<f64> = g.members.iter().map(|&i| y[i]).collect();
        let ranks = order.restrict(&g.members).ranks(&ys);
        let scores = spec.kind.scores(ys.len());
        total += g
            .members
            .iter()
            .zip(&ranks)
            .filter(|(&i, _)| z[i])
            .map(|(_, &r)| scores[r - 1])
            .sum::<f64>();
    }
    Ok(total)
}

/// Minimal statistic in stratum `s` when `b` of its treated units are sunk.
pub fn stratum_option_value(
    table: &OutcomeTable,
    s: usize,
    b: usize,
    c: f64,
    specs: &[RankScoreSpec],
) -> Result<f64> {
    StratifiedData::new(table, specs)?.option_value(s, b, c)
}

/// Minimum of the stratified statistic over effects satisfying `H_{k,c}`.
pub fn knapsack_min_stat(
    table: &OutcomeTable,
    h: QuantileHypothesis,
    specs: &[RankScoreSpec],
    solver: Solver,
) -> Result<(f64, StratifiedAllocation)> {
    h.check_rank(table.n())?;
    let data = StratifiedData::new(table, specs)?;
    data.min_stat(h.c, table.n() - h.k, solver)
}

/// Worst-case p-value for `H_{k,c}` in a stratified experiment.
pub fn pvalue_quantile_stratified(
    table: &OutcomeTable,
    h: QuantileHypothesis,
    specs: &[RankScoreSpec],
    solver: Solver,
    settings: &NullSettings,
) -> Result<f64> {
    h.check_rank(table.n())?;
    let data = StratifiedData::new(table, specs)?;
    let (t, _) = data.min_stat(h.c, table.n() - h.k, solver)?;
    Ok(data.null(settings)?.tail(t))
}

/// Reusable stratified profile computation for one design.
#[derive(Debug, Clone)]
pub struct StratifiedPlan {
    data: StratifiedData,
    null: NullDistribution,
    flipped: Option<(StratifiedData, NullDistribution)>,
    method: StratMethod,
    solver: Solver,
}

impl StratifiedPlan {
    pub fn new(
        table: &OutcomeTable,
        specs: &[RankScoreSpec],
        flipped_specs: &[RankScoreSpec],
        method: StratMethod,
        solver: Solver,
        settings: &NullSettings,
    ) -> Result<Self> {
        let data = StratifiedData::new(table, specs)?;
        let null = data.null(settings)?;
        let flipped = match method {
            StratMethod::M1 => None,
            StratMethod::M2 => {
                let fd = StratifiedData::new(&table.flipped(), flipped_specs)?;
                let fnull = fd.null(settings)?;
                Some((fd, fnull))
            }
        };
        Ok(Self {
            data,
            null,
            flipped,
            method,
            solver,
        })
    }

    fn limit(
        data: &StratifiedData,
        null: &NullDistribution,
        sunk: usize,
        alpha: f64,
        solver: Solver,
    ) -> f64 {
        invert_on_grid(data.grid(), alpha, |c| {
            let (t, _) = data
                .min_stat(c, sunk, solver)
                .expect("allocation total within capacity");
            null.tail(t)
        })
    }

    /// Limits for all sorted effects of one arm.
    fn arm_limits(
        data: &StratifiedData,
        null: &NullDistribution,
        alpha: f64,
        solver: Solver,
    ) -> Vec<f64> {
        let m = data.n_treated();
        par::map_range(m, |j| Self::limit(data, null, m - 1 - j, alpha, solver))
    }

    /// `alpha` is the per-step level; `M2` reports `2 alpha`.
    pub fn profile(&self, ranks: &[usize], alpha: f64) -> Result<IteProfileCi> {
        check_alpha(alpha)?;
        let n = self.data.n();
        check_ranks(ranks, n)?;
        let lower = match &self.flipped {
            None => par::map_slice(ranks, |&k| {
                Self::limit(&self.data, &self.null, n - k, alpha, self.solver)
            }),
            Some((fd, fnull)) => {
                let mut pooled = Self::arm_limits(&self.data, &self.null, alpha, self.solver);
                pooled.extend(Self::arm_limits(fd, fnull, alpha, self.solver));
                pooled.sort_by(f64::total_cmp);
                ranks.iter().map(|&k| pooled[k - 1]).collect()
            }
        };
        let mut profile = IteProfileCi {
            ranks: ranks.to_vec(),
            lower,
            alpha: if self.method == StratMethod::M2 {
                2.0 * alpha
            } else {
                alpha
            },
            simultaneous: true,
            method: self.method.name().into(),
        };
        profile.monotonize();
        Ok(profile)
    }
}

/// Stratified lower limits for `ranks`, jointly valid.
pub fn stratified_profile(
    table: &OutcomeTable,
    ranks: &[usize],
    alpha: f64,
    specs: &[RankScoreSpec],
    method: StratMethod,
    solver: Solver,
    settings: &NullSettings,
) -> Result<IteProfileCi> {
    StratifiedPlan::new(table, specs, specs, method, solver, settings)?.profile(ranks, alpha)
}
