//! Worst-case randomization inference for effect quantiles in completely
//! randomized experiments.
//!
//! Under `H_{k,c}` at most `N - k` units have effects above `c`. A rank score
//! statistic computed on imputed control outcomes is smallest when the
//! `min(N - k, N_1)` treated units with the largest outcomes receive
//! arbitrarily large effects and every other unit receives `c`; the p-value of
//! that configuration is valid for the whole composite null. Three procedures
//! build on it:
//!
//! * `M1` inverts the worst-case test directly, one rank at a time.
//! * `M2` bounds the quantiles of treated-unit effects and of control-unit
//!   effects separately (the latter on the flipped table) and pools the two
//!   sets of limits.
//! * `M3` treats the number of treated units among the large-effect units as
//!   a nuisance, restricts it to a confidence set and adds the set's error
//!   budget to the p-value, once per arm, combining the arms by Bonferroni.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hyper::{
    simultaneous_test_level, HypergeomParams, Hypergeometric, MIN_SIMULTANEOUS_DRAWS,
};
use crate::model::{
    check_alpha, check_ranks, CoverageKind, IteProfileCi, OneSidedInterval, OutcomeTable,
    QuantileHypothesis,
};
use crate::par;
use crate::rankstat::{
    rank_null, NullDistribution, NullSettings, RankScoreSpec, ScoreKind, TieOrder,
};

#[derive(Debug, Clone, Copy)]
struct Unit {
    y: f64,
    prio: u32,
    index: usize,
}

fn precedes(a: (f64, u32), b: (f64, u32)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Treated units with arbitrarily large effects, and the effect `c` given to
/// everyone else.
#[derive(Debug, Clone, PartialEq)]
pub struct WorstCaseDelta {
    /// Row indices into the table, in ascending outcome order.
    pub large_set: Vec<usize>,
    pub base_value: f64,
}

/// Arm-sorted outcomes and the threshold grid of one table, prepared for
/// repeated worst-case evaluations.
#[derive(Debug, Clone)]
pub struct CreData {
    n: usize,
    treated: Vec<Unit>,
    control: Vec<Unit>,
    grid: Vec<f64>,
}

impl CreData {
    /// Ties are broken by the permutation drawn from `tiebreak_seed`.
    pub fn new(table: &OutcomeTable, tiebreak_seed: u64) -> Result<Self> {
        Self::with_order(table, &TieOrder::new(table.n(), tiebreak_seed))
    }

    pub fn with_order(table: &OutcomeTable, order: &TieOrder) -> Result<Self> {
        let n = table.n();
        if n < 2 {
            return Err(Error::TooFewParticipants(n));
        }
        if table.n_treated() == 0 {
            return Err(Error::EmptyArm("treated"));
        }
        if order.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: order.len(),
            });
        }
        let mut treated = Vec::with_capacity(table.n_treated());
        let mut control = Vec::with_capacity(table.n_control());
        for (i, r) in table.rows().iter().enumerate() {
            if !r.outcome.is_finite() {
                return Err(Error::NonFiniteOutcome { row: i + 1 });
            }
            let u = Unit {
                y: r.outcome,
                prio: order.priority(i),
                index: i,
            };
            if r.treated {
                treated.push(u);
            } else {
                control.push(u);
            }
        }
        treated.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.prio.cmp(&b.prio)));
        control.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.prio.cmp(&b.prio)));
        let mut grid: Vec<f64> = Vec::with_capacity(treated.len() * (control.len() + 1));
        for t in &treated {
            grid.push(t.y);
            grid.extend(control.iter().map(|c| t.y - c.y));
        }
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        Ok(Self {
            n,
            treated,
            control,
            grid,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_treated(&self) -> usize {
        self.treated.len()
    }

    pub fn n_control(&self) -> usize {
        self.control.len()
    }

    /// Sorted thresholds at which the worst-case statistic can change.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Rank score statistic when the `sunk` treated units with the largest
    /// outcomes take the lowest ranks and the rest are shifted down by `c`.
    /// `scores[r - 1] = phi(r)` over all `N` units.
    pub fn sunk_statistic(&self, scores: &[f64], c: f64, sunk: usize) -> f64 {
        let n1 = self.treated.len();
        let sunk = sunk.min(n1);
        let keep = n1 - sunk;
        let mut t: f64 = scores[..sunk].iter().sum();
        // Controls ranked below each remaining treated unit; sorted, the j-th
        // count places that unit at rank sunk + j + count + 1.
        let mut below: Vec<usize> = self.treated[..keep]
            .iter()
            .map(|u| {
                let a = (u.y - c, u.prio);
                self.control.partition_point(|v| precedes((v.y, v.prio), a))
            })
            .collect();
        below.sort_unstable();
        for (j, &m) in below.iter().enumerate() {
            t += scores[sunk + j + m];
        }
        t
    }

    /// Minimum of the statistic over effect vectors satisfying `H_{k,c}`.
    pub fn worst_case(
        &self,
        scores: &[f64],
        h: QuantileHypothesis,
    ) -> Result<(f64, WorstCaseDelta)> {
        h.check_rank(self.n)?;
        let sunk = (self.n - h.k).min(self.treated.len());
        let t = self.sunk_statistic(scores, h.c, sunk);
        let n1 = self.treated.len();
        let large_set = self.treated[n1 - sunk..].iter().map(|u| u.index).collect();
        Ok((
            t,
            WorstCaseDelta {
                large_set,
                base_value: h.c,
            },
        ))
    }
}

/// Smallest grid point `g` such that `p` exceeds `alpha` just to the right
/// of `g`, or `-inf` when `p` exceeds `alpha` below the whole grid. `p` must
/// be nondecreasing and constant between grid points.
pub(crate) fn invert_on_grid(grid: &[f64], alpha: f64, p: impl Fn(f64) -> f64) -> f64 {
    let Some(&first) = grid.first() else {
        return f64::NEG_INFINITY;
    };
    if p(first - first.abs().max(1.0)) > alpha {
        return f64::NEG_INFINITY;
    }
    let last = grid.len() - 1;
    let piece = |i: usize| {
        if i < last {
            0.5 * (grid[i] + grid[i + 1])
        } else {
            grid[i] + grid[i].abs().max(1.0)
        }
    };
    if p(piece(last)) <= alpha {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (0, last);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if p(piece(mid)) > alpha {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    grid[lo]
}

/// `inf_{delta in H_{k,c}} t(Z, Y - Z * delta)` and the minimizing effects.
pub fn worst_case_statistic(
    table: &OutcomeTable,
    h: QuantileHypothesis,
    spec: &RankScoreSpec,
) -> Result<(f64, WorstCaseDelta)> {
    let data = CreData::new(table, spec.tiebreak_seed)?;
    data.worst_case(&spec.kind.scores(table.n()), h)
}

/// Worst-case randomization p-value for `H_{k,c}`.
pub fn pvalue_quantile_m1(
    table: &OutcomeTable,
    h: QuantileHypothesis,
    spec: &RankScoreSpec,
    settings: &NullSettings,
) -> Result<f64> {
    let (t, _) = worst_case_statistic(table, h, spec)?;
    Ok(rank_null(table.n(), table.n_treated(), spec.kind, settings)?.tail(t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    M1,
    M2,
    M3,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::M1 => "M1",
            Method::M2 => "M2",
            Method::M3 => "M3",
        })
    }
}

/// Procedure plus the statistics used on the original and flipped tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodConfig {
    pub method: Method,
    pub stat_primary: RankScoreSpec,
    pub stat_flipped: RankScoreSpec,
    /// Total nuisance error budget for `M3`; `alpha / 10` when unset.
    pub berger_boos_gamma: Option<f64>,
}

impl MethodConfig {
    pub fn m1(stat: RankScoreSpec) -> Self {
        Self {
            method: Method::M1,
            stat_primary: stat,
            stat_flipped: stat,
            berger_boos_gamma: None,
        }
    }

    pub fn m2(primary: RankScoreSpec, flipped: RankScoreSpec) -> Self {
        Self {
            method: Method::M2,
            stat_primary: primary,
            stat_flipped: flipped,
            berger_boos_gamma: None,
        }
    }

    pub fn m3(primary: RankScoreSpec, flipped: RankScoreSpec, gamma: Option<f64>) -> Self {
        Self {
            method: Method::M3,
            stat_primary: primary,
            stat_flipped: flipped,
            berger_boos_gamma: gamma,
        }
    }

    /// Parses `M1-S2`, `M2-S2-S6`, `M3-W-S6`, ... with the given tie-break seed.
    pub fn parse(name: &str, tiebreak_seed: u64) -> Result<Self> {
        let parts: Vec<&str> = name.trim().split('-').collect();
        let bad = || Error::InvalidParameter(format!("unknown method '{name}'"));
        let stat = |s: &str| -> Result<RankScoreSpec> {
            Ok(RankScoreSpec::new(s.parse::<ScoreKind>()?, tiebreak_seed))
        };
        match parts.as_slice() {
            [m, a] if m.eq_ignore_ascii_case("m1") => Ok(Self::m1(stat(a)?)),
            [m, a, b] if m.eq_ignore_ascii_case("m2") => Ok(Self::m2(stat(a)?, stat(b)?)),
            [m, a, b] if m.eq_ignore_ascii_case("m3") => Ok(Self::m3(stat(a)?, stat(b)?, None)),
            _ => Err(bad()),
        }
    }

    pub fn name(&self) -> String {
        match self.method {
            Method::M1 => format!("M1-{}", self.stat_primary.kind),
            m => format!("{m}-{}-{}", self.stat_primary.kind, self.stat_flipped.kind),
        }
    }

    /// Level of the reported limits when each step runs at `alpha`.
    pub fn output_alpha(&self, alpha: f64) -> f64 {
        match self.method {
            Method::M2 => 2.0 * alpha,
            _ => alpha,
        }
    }

    fn gamma(&self, alpha: f64) -> Result<f64> {
        let g = self.berger_boos_gamma.unwrap_or(alpha / 10.0);
        if !(g > 0.0 && g < alpha) {
            return Err(Error::InvalidParameter(format!(
                "nuisance budget {g} must lie in (0, {alpha})"
            )));
        }
        Ok(g)
    }
}

impl FromStr for MethodConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s, 0)
    }
}

/// One arm's share of a profile computation: prepared data, scores and null.
#[derive(Debug, Clone)]
struct Arm {
    scores: Vec<f64>,
    null: NullDistribution,
}

impl Arm {
    fn new(n: usize, m: usize, kind: ScoreKind, settings: &NullSettings) -> Result<Self> {
        Ok(Self {
            scores: kind.scores(n),
            null: rank_null(n, m, kind, settings)?,
        })
    }

    fn pvalue(&self, data: &CreData, c: f64, sunk: usize) -> f64 {
        self.null.tail(data.sunk_statistic(&self.scores, c, sunk))
    }
}

/// Everything about a profile computation that does not depend on the
/// observed outcomes: null distributions and nuisance bounds. Reusable
/// across tables with the same design, which the simulation harness relies on.
#[derive(Debug, Clone)]
pub struct CrePlan {
    config: MethodConfig,
    n: usize,
    n1: usize,
    ranks: Vec<usize>,
    alpha: f64,
    simultaneous: bool,
    primary: Arm,
    flipped: Option<Arm>,
    /// `M3` only: per-rank upper bounds on the nuisance count in each arm.
    nuisance: Option<(Vec<usize>, Vec<usize>)>,
    gamma_step: f64,
}

impl CrePlan {
    /// `alpha` is the level of each step: `M1` and `M3` report level `alpha`,
    /// `M2` reports level `2 alpha`.
    pub fn new(
        n: usize,
        n1: usize,
        ranks: &[usize],
        alpha: f64,
        config: MethodConfig,
        settings: &NullSettings,
        simultaneous: bool,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        check_ranks(ranks, n)?;
        if n1 == 0 || n1 > n {
            return Err(Error::InvalidParameter(format!(
                "design with {n1} of {n} treated"
            )));
        }
        let n0 = n - n1;
        let primary = Arm::new(n, n1, config.stat_primary.kind, settings)?;
        let mut plan = Self {
            config,
            n,
            n1,
            ranks: ranks.to_vec(),
            alpha,
            simultaneous,
            primary,
            flipped: None,
            nuisance: None,
            gamma_step: 0.0,
        };
        match config.method {
            Method::M1 => {}
            Method::M2 => {
                if n0 > 0 {
                    plan.flipped = Some(Arm::new(n, n0, config.stat_flipped.kind, settings)?);
                }
            }
            Method::M3 => {
                if n0 == 0 {
                    return Err(Error::EmptyArm("control"));
                }
                let gamma = config.gamma(alpha)?;
                plan.gamma_step = gamma / 2.0;
                plan.flipped = Some(Arm::new(n, n0, config.stat_flipped.kind, settings)?);
                let bound = |m: usize| -> Result<Vec<usize>> {
                    let level = if simultaneous && ranks.len() > 1 {
                        let draws = settings.draws.max(MIN_SIMULTANEOUS_DRAWS);
                        simultaneous_test_level(n, m, ranks, plan.gamma_step, draws, settings.seed)?
                            .alpha
                    } else {
                        plan.gamma_step
                    };
                    Ok(ranks
                        .iter()
                        .map(|&k| {
                            let law = Hypergeometric::new(HypergeomParams {
                                population: n as u64,
                                successes: (n - k) as u64,
                                draws: m as u64,
                            });
                            law.upper_critical(level) as usize
                        })
                        .collect())
                };
                plan.nuisance = Some((bound(n1)?, bound(n0)?));
            }
        }
        Ok(plan)
    }

    pub fn config(&self) -> &MethodConfig {
        &self.config
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    fn check_table(&self, table: &OutcomeTable) -> Result<()> {
        if table.n() != self.n || table.n_treated() != self.n1 {
            return Err(Error::InvalidParameter(format!(
                "plan built for {} of {} treated, table has {} of {}",
                self.n1,
                self.n,
                table.n_treated(),
                table.n()
            )));
        }
        Ok(())
    }

    /// Lower limits for the planned ranks.
    pub fn profile(&self, table: &OutcomeTable) -> Result<IteProfileCi> {
        self.check_table(table)?;
        let lower = match self.config.method {
            Method::M1 => self.m1_limits(table)?,
            Method::M2 => self.m2_limits(table)?,
            Method::M3 => self.m3_limits(table)?,
        };
        let mut profile = IteProfileCi {
            ranks: self.ranks.clone(),
            lower,
            alpha: self.config.output_alpha(self.alpha),
            simultaneous: self.simultaneous,
            method: self.config.name(),
        };
        profile.monotonize();
        Ok(profile)
    }

    fn m1_limits(&self, table: &OutcomeTable) -> Result<Vec<f64>> {
        let data = CreData::new(table, self.config.stat_primary.tiebreak_seed)?;
        let arm = &self.primary;
        Ok(par::map_slice(&self.ranks, |&k| {
            let sunk = (self.n - k).min(self.n1);
            invert_on_grid(data.grid(), self.alpha, |c| arm.pvalue(&data, c, sunk))
        }))
    }

    /// Limits for every sorted effect within one arm: rank `j` of `m` sinks
    /// `m - j` units.
    fn arm_limits(data: &CreData, arm: &Arm, alpha: f64) -> Vec<f64> {
        let m = data.n_treated();
        par::map_range(m, |j| {
            invert_on_grid(data.grid(), alpha, |c| arm.pvalue(data, c, m - 1 - j))
        })
    }

    fn m2_limits(&self, table: &OutcomeTable) -> Result<Vec<f64>> {
        let data = CreData::new(table, self.config.stat_primary.tiebreak_seed)?;
        let mut pooled = Self::arm_limits(&data, &self.primary, self.alpha);
        if let Some(arm) = &self.flipped {
            let flipped = CreData::new(&table.flipped(), self.config.stat_flipped.tiebreak_seed)?;
            pooled.extend(Self::arm_limits(&flipped, arm, self.alpha));
        }
        pooled.sort_by(f64::total_cmp);
        Ok(self.ranks.iter().map(|&k| pooled[k - 1]).collect())
    }

    fn m3_limits(&self, table: &OutcomeTable) -> Result<Vec<f64>> {
        let (b1, b0) = self
            .nuisance
            .as_ref()
            .expect("nuisance bounds exist for M3");
        let flipped_arm = self.flipped.as_ref().expect("flipped arm exists for M3");
        let data = CreData::new(table, self.config.stat_primary.tiebreak_seed)?;
        let fdata = CreData::new(&table.flipped(), self.config.stat_flipped.tiebreak_seed)?;
        let step_alpha = self.alpha / 2.0;
        let gamma = self.gamma_step;
        Ok(par::map_range(self.ranks.len(), |j| {
            let a = invert_on_grid(data.grid(), step_alpha, |c| {
                (self.primary.pvalue(&data, c, b1[j]) + gamma).min(1.0)
            });
            let b = invert_on_grid(fdata.grid(), step_alpha, |c| {
                (flipped_arm.pvalue(&fdata, c, b0[j]) + gamma).min(1.0)
            });
            a.max(b)
        }))
    }
}

/// Pointwise lower limit for `tau_(k)` at level `alpha` by `M1` or `M3`.
/// `M2` limits are only defined jointly; use [`m2_profile`].
pub fn invert_ci_quantile(
    table: &OutcomeTable,
    k: usize,
    alpha: f64,
    config: &MethodConfig,
    settings: &NullSettings,
) -> Result<OneSidedInterval> {
    if config.method == Method::M2 {
        return Err(Error::InvalidParameter(
            "M2 limits are computed jointly; use the profile".into(),
        ));
    }
    let plan = CrePlan::new(
        table.n(),
        table.n_treated(),
        &[k],
        alpha,
        *config,
        settings,
        false,
    )?;
    let p = plan.profile(table)?;
    Ok(OneSidedInterval {
        lower: p.lower[0],
        alpha,
        kind: CoverageKind::Pointwise,
    })
}

/// `M1` limits for several ranks; jointly valid at level `alpha`.
pub fn simultaneous_profile_m1(
    table: &OutcomeTable,
    ranks: &[usize],
    alpha: f64,
    config: &MethodConfig,
    settings: &NullSettings,
) -> Result<IteProfileCi> {
    let cfg = MethodConfig {
        method: Method::M1,
        ..*config
    };
    CrePlan::new(
        table.n(),
        table.n_treated(),
        ranks,
        alpha,
        cfg,
        settings,
        true,
    )?
    .profile(table)
}

/// `M2` limits, jointly valid at level `2 alpha` over all ranks.
pub fn m2_profile(
    table: &OutcomeTable,
    ranks: &[usize],
    alpha: f64,
    config: &MethodConfig,
    settings: &NullSettings,
) -> Result<IteProfileCi> {
    let cfg = MethodConfig {
        method: Method::M2,
        ..*config
    };
    CrePlan::new(
        table.n(),
        table.n_treated(),
        ranks,
        alpha,
        cfg,
        settings,
        true,
    )?
    .profile(table)
}

/// `M3` limits at level `alpha`, pointwise or jointly over `ranks`.
pub fn m3_profile(
    table: &OutcomeTable,
    ranks: &[usize],
    alpha: f64,
    config: &MethodConfig,
    settings: &NullSettings,
    simultaneous: bool,
) -> Result<IteProfileCi> {
    let cfg = MethodConfig {
        method: Method::M3,
        ..*config
    };
    CrePlan::new(
        table.n(),
        table.n_treated(),
        ranks,
        alpha,
        cfg,
        settings,
        simultaneous,
    )?
    .profile(table)
}

/// Conditional worst-case p-values of one arm for every nuisance count
/// `b = 0, ..., min(N - k, m)`, where `m` is the arm size.
pub fn m3_conditional_pvalues(
    table: &OutcomeTable,
    h: QuantileHypothesis,
    spec: &RankScoreSpec,
    settings: &NullSettings,
) -> Result<Vec<f64>> {
    h.check_rank(table.n())?;
    let data = CreData::new(table, spec.tiebreak_seed)?;
    let arm = Arm::new(table.n(), table.n_treated(), spec.kind, settings)?;
    let top = (table.n() - h.k).min(table.n_treated());
    Ok((0..=top).map(|b| arm.pvalue(&data, h.c, b)).collect())
}

/// Single-arm nuisance-adjusted p-value: the largest conditional p-value over
/// `b <= Q_H(1 - gamma; N, N - k, N_1)`, plus `gamma`.
pub fn m3_step_pvalue(
    table: &OutcomeTable,
    h: QuantileHypothesis,
    spec: &RankScoreSpec,
    gamma: f64,
    settings: &NullSettings,
) -> Result<f64> {
    check_alpha(gamma)?;
    let cond = m3_conditional_pvalues(table, h, spec, settings)?;
    let law = Hypergeometric::new(HypergeomParams {
        population: table.n() as u64,
        successes: (table.n() - h.k) as u64,
        draws: table.n_treated() as u64,
    });
    let b_max = law.upper_critical(gamma) as usize;
    let worst = cond[..=b_max.min(cond.len() - 1)]
        .iter()
        .copied()
        .fold(0.0, f64::max);
    Ok((worst + gamma).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(z: &[bool], y: &[f64]) -> OutcomeTable {
        OutcomeTable::from_assignment(z, y).unwrap()
    }

    #[test]
    fn no_large_effects_at_max_rank() {
        let t = table(
            &[true, false, true, false, true],
            &[1.0, 0.5, 3.0, 2.0, -1.0],
        );
        let spec = RankScoreSpec::wilcoxon(4);
        let (tmin, delta) =
            worst_case_statistic(&t, QuantileHypothesis::new(5, 0.7), &spec).unwrap();
        assert!(delta.large_set.is_empty());
        let shifted: Vec<f64> = t
            .outcomes()
            .iter()
            .zip(t.assignment())
            .map(|(y, z)| if z { y - 0.7 } else { *y })
            .collect();
        let direct = crate::rankstat::rank_score_stat(&t.assignment(), &shifted, &spec).unwrap();
        assert_eq!(tmin, direct);
    }

    #[test]
    fn all_treated_sunk() {
        let t = table(
            &[true, false, true, false, true, false],
            &[1.0, 0.5, 3.0, 2.0, -1.0, 0.0],
        );
        for spec in [RankScoreSpec::wilcoxon(1), RankScoreSpec::stephenson(2, 1)] {
            let (tmin, delta) =
                worst_case_statistic(&t, QuantileHypothesis::new(2, 0.0), &spec).unwrap();
            assert_eq!(delta.large_set.len(), 3);
            assert_eq!(tmin, spec.kind.scores(6)[..3].iter().sum::<f64>());
        }
    }

    #[test]
    fn large_set_holds_largest_treated() {
        let t = table(
            &[true, false, true, false, true],
            &[1.0, 0.5, 3.0, 2.0, -1.0],
        );
        let (_, delta) = worst_case_statistic(
            &t,
            QuantileHypothesis::new(4, 0.0),
            &RankScoreSpec::wilcoxon(0),
        )
        .unwrap();
        assert_eq!(delta.large_set, vec![2]);
    }

    #[test]
    fn pvalue_tends_to_one() {
        let t = table(
            &[true, false, true, false, true, false],
            &[4.0, 0.5, 3.0, 2.0, 5.0, 0.0],
        );
        let p = pvalue_quantile_m1(
            &t,
            QuantileHypothesis::new(3, 1e6),
            &RankScoreSpec::wilcoxon(0),
            &NullSettings::exact(),
        )
        .unwrap();
        assert_eq!(p, 1.0);
    }

    #[test]
    fn binary_search_matches_scan() {
        let z = [true, false, true, true, false, false];
        let y = [2.3, 0.4, 1.7, 3.1, 1.0, -0.2];
        let t = table(&z, &y);
        let spec = RankScoreSpec::stephenson(2, 9);
        let data = CreData::new(&t, 9).unwrap();
        let scores = spec.kind.scores(6);
        let null = rank_null(6, 3, spec.kind, &NullSettings::exact()).unwrap();
        for k in 1..=6 {
            for alpha in [0.05, 0.1, 0.2, 0.5] {
                let sunk = (6 - k).min(3);
                let p = |c: f64| null.tail(data.sunk_statistic(&scores, c, sunk));
                let fast = invert_on_grid(data.grid(), alpha, p);
                let g = data.grid();
                let mut scan = f64::NEG_INFINITY;
                if p(g[0] - 1.0) <= alpha {
                    scan = f64::INFINITY;
                    for i in 0..g.len() {
                        let right = if i + 1 < g.len() {
                            0.5 * (g[i] + g[i + 1])
                        } else {
                            g[i] + 1.0
                        };
                        if p(right) > alpha {
                            scan = g[i];
                            break;
                        }
                    }
                }
                assert_eq!(fast, scan, "k={k} alpha={alpha}");
            }
        }
    }

    #[test]
    fn alpha_near_one_is_uninformative() {
        let t = table(&[true, false, true, false], &[2.0, 0.0, 3.0, 1.0]);
        let l = invert_ci_quantile(
            &t,
            2,
            0.99,
            &MethodConfig::m1(RankScoreSpec::wilcoxon(0)),
            &NullSettings::exact(),
        )
        .unwrap();
        assert_eq!(l.lower, f64::NEG_INFINITY);
    }

    #[test]
    fn translation_equivariance() {
        let z = [true, false, true, true, false, false, true, false];
        let y = [2.3, 0.4, 1.7, 3.1, 1.0, -0.2, 0.9, 0.1];
        let shifted: Vec<f64> = y
            .iter()
            .zip(&z)
            .map(|(v, zi)| if *zi { v + 2.0 } else { *v })
            .collect();
        let cfg = MethodConfig::m1(RankScoreSpec::wilcoxon(3));
        let ranks: Vec<usize> = (1..=8).collect();
        let a = simultaneous_profile_m1(&table(&z, &y), &ranks, 0.1, &cfg, &NullSettings::exact())
            .unwrap();
        let b = simultaneous_profile_m1(
            &table(&z, &shifted),
            &ranks,
            0.1,
            &cfg,
            &NullSettings::exact(),
        )
        .unwrap();
        for (la, lb) in a.lower.iter().zip(&b.lower) {
            if la.is_finite() {
                assert!((la + 2.0 - lb).abs() < 1e-12);
            } else {
                assert_eq!(la, lb);
            }
        }
    }

    #[test]
    fn profiles_are_sorted() {
        let z = [
            true, false, true, true, false, false, true, false, true, false,
        ];
        let y = [2.3, 0.4, 1.7, 3.1, 1.0, -0.2, 0.9, 0.1, 4.0, 0.3];
        let t = table(&z, &y);
        let ranks: Vec<usize> = (1..=10).collect();
        let s2 = RankScoreSpec::stephenson(2, 1);
        let s6 = RankScoreSpec::stephenson(6, 1);
        let set = NullSettings::exact();
        for p in [
            simultaneous_profile_m1(&t, &ranks, 0.1, &MethodConfig::m1(s2), &set).unwrap(),
            m2_profile(&t, &ranks, 0.05, &MethodConfig::m2(s2, s6), &set).unwrap(),
            m3_profile(
                &t,
                &ranks,
                0.1,
                &MethodConfig::m3(s2, s6, None),
                &set,
                false,
            )
            .unwrap(),
        ] {
            assert!(p.lower.windows(2).all(|w| w[0] <= w[1]), "{}", p.method);
        }
    }

    #[test]
    fn m2_without_controls() {
        let t = OutcomeTable::from_arms(&[1.0, 2.0, 3.0, 4.0, 5.0], &[]);
        let p = m2_profile(
            &t,
            &[5],
            0.05,
            &MethodConfig::m2(RankScoreSpec::wilcoxon(0), RankScoreSpec::wilcoxon(0)),
            &NullSettings::exact(),
        )
        .unwrap();
        assert_eq!(p.alpha, 0.1);
        assert_eq!(p.lower.len(), 1);
    }

    #[test]
    fn m3_envelope_and_limit() {
        let z = [true, false, true, true, false, false, true, false];
        let y = [2.3, 0.4, 1.7, 3.1, 1.0, -0.2, 0.9, 0.1];
        let t = table(&z, &y);
        let spec = RankScoreSpec::wilcoxon(2);
        let h = QuantileHypothesis::new(5, 0.5);
        let cond = m3_conditional_pvalues(&t, h, &spec, &NullSettings::exact()).unwrap();
        assert!(cond.windows(2).all(|w| w[0] <= w[1]));
        let p = m3_step_pvalue(&t, h, &spec, 0.01, &NullSettings::exact()).unwrap();
        assert!((0.01..=1.0).contains(&p));
        // A vanishing budget keeps the whole support: M1 plus gamma.
        let m1 = pvalue_quantile_m1(&t, h, &spec, &NullSettings::exact()).unwrap();
        let tiny = m3_step_pvalue(&t, h, &spec, 1e-12, &NullSettings::exact()).unwrap();
        assert!((tiny - m1).abs() < 1e-9);
    }

    #[test]
    fn method_names() {
        for name in ["M1-S2", "M2-S2-S6", "M3-W-S6"] {
            assert_eq!(name.parse::<MethodConfig>().unwrap().name(), name);
        }
        assert!("M2-S2".parse::<MethodConfig>().is_err());
        assert!("M4-S2".parse::<MethodConfig>().is_err());
    }

    #[test]
    fn gamma_checked() {
        let t = table(&[true, false, true, false], &[2.0, 0.0, 3.0, 1.0]);
        let cfg = MethodConfig::m3(
            RankScoreSpec::wilcoxon(0),
            RankScoreSpec::wilcoxon(0),
            Some(0.2),
        );
        assert!(m3_profile(&t, &[2], 0.1, &cfg, &NullSettings::exact(), false).is_err());
    }
}
