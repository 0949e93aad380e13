//! Rank score statistics, their randomization null distributions, the Fisher
//! randomization test for sharp nulls, and lower limits for the sample
//! average treatment effect.

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{check_alpha, CoverageKind, OneSidedInterval, OutcomeTable};
use crate::par;
use crate::rng::{self, domain};

/// Largest number of assignments enumerated exactly.
pub const EXACT_CAP: u64 = 200_000;

/// Default Monte Carlo size for p-values.
pub const DEFAULT_DRAWS: usize = 10_000;

/// Rank transform `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreKind {
    /// `phi(r) = r`.
    Wilcoxon,
    /// `phi(r) = C(r - 1, s - 1)`.
    Stephenson { s: u32 },
}

impl ScoreKind {
    /// Short label used in method names: `W`, `S2`, `S6`, ...
    pub fn label(&self) -> String {
        match self {
            ScoreKind::Wilcoxon => "W".into(),
            ScoreKind::Stephenson { s } => format!("S{s}"),
        }
    }

    /// Score for rank `r` among `n`.
    pub fn phi(&self, r: usize, n: usize) -> Result<f64> {
        if r == 0 || r > n {
            return Err(Error::InvalidParameter(format!("rank {r} outside 1..={n}")));
        }
        Ok(self.phi_unchecked(r))
    }

    fn phi_unchecked(&self, r: usize) -> f64 {
        match *self {
            ScoreKind::Wilcoxon => r as f64,
            ScoreKind::Stephenson { s } => {
                let s = s as usize;
                if r < s {
                    0.0
                } else {
                    binomial_saturating((r - 1) as u64, (s - 1) as u64) as f64
                }
            }
        }
    }

    /// `[phi(1), ..., phi(n)]`.
    pub fn scores(&self, n: usize) -> Vec<f64> {
        (1..=n).map(|r| self.phi_unchecked(r)).collect()
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    /// Accepts `W`, `wilcoxon`, `S<s>`, `stephenson<s>` and `stephenson-<s>`.
    fn from_str(text: &str) -> Result<Self> {
        let t = text.trim().to_ascii_lowercase();
        if t == "w" || t == "wilcoxon" {
            return Ok(ScoreKind::Wilcoxon);
        }
        let digits = t
            .strip_prefix("stephenson")
            .map(|r| r.trim_start_matches(['-', '_']))
            .or_else(|| t.strip_prefix('s'));
        match digits.and_then(|d| d.parse::<u32>().ok()) {
            Some(s) if s >= 1 => Ok(ScoreKind::Stephenson { s }),
            _ => Err(Error::InvalidParameter(format!(
                "unknown rank statistic '{text}'"
            ))),
        }
    }
}

/// Score function plus the seed of the tie-breaking permutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankScoreSpec {
    pub kind: ScoreKind,
    pub tiebreak_seed: u64,
}

impl RankScoreSpec {
    pub fn new(kind: ScoreKind, tiebreak_seed: u64) -> Self {
        Self {
            kind,
            tiebreak_seed,
        }
    }

    pub fn wilcoxon(tiebreak_seed: u64) -> Self {
        Self::new(ScoreKind::Wilcoxon, tiebreak_seed)
    }

    pub fn stephenson(s: u32, tiebreak_seed: u64) -> Self {
        Self::new(ScoreKind::Stephenson { s }, tiebreak_seed)
    }
}

/// A random permutation of unit indices, fixed before the analysis, that
/// breaks ties among equal outcomes. A unit with smaller priority ranks lower.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TieOrder {
    priority: Vec<u32>,
}

impl TieOrder {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut perm: Vec<u32> = (0..n as u32).collect();
        perm.shuffle(&mut rng::substream(seed, domain::TIEBREAK, n as u64));
        let mut priority = vec![0u32; n];
        for (pos, &unit) in perm.iter().enumerate() {
            priority[unit as usize] = pos as u32;
        }
        Self { priority }
    }

    /// Plain index order.
    pub fn identity(n: usize) -> Self {
        Self {
            priority: (0..n as u32).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.priority.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priority.is_empty()
    }

    /// Order of the listed units only, as used for ranks within a stratum.
    pub fn restrict(&self, members: &[usize]) -> TieOrder {
        Self {
            priority: members.iter().map(|&i| self.priority[i]).collect(),
        }
    }

    pub fn priority(&self, unit: usize) -> u32 {
        self.priority[unit]
    }

    /// Unit indices sorted by `(y, priority)`.
    pub fn order(&self, y: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..y.len()).collect();
        idx.sort_by(|&a, &b| {
            y[a].total_cmp(&y[b])
                .then(self.priority[a].cmp(&self.priority[b]))
        });
        idx
    }

    /// 1-based ranks under `(y, priority)` ordering.
    pub fn ranks(&self, y: &[f64]) -> Vec<usize> {
        let mut r = vec![0; y.len()];
        for (pos, i) in self.order(y).into_iter().enumerate() {
            r[i] = pos + 1;
        }
        r
    }
}

/// Ranks `1..=N` with ties split by the permutation drawn from the score's tie-break seed.
pub fn rank_with_tiebreak(y: &[f64], spec: &RankScoreSpec) -> Vec<usize> {
    TieOrder::new(y.len(), spec.tiebreak_seed).ranks(y)
}

pub fn phi(spec: &RankScoreSpec, r: usize, n: usize) -> Result<f64> {
    spec.kind.phi(r, n)
}

/// `t(z, y) = sum_i z_i phi(r_i(y))`.
pub fn rank_score_stat(z: &[bool], y: &[f64], spec: &RankScoreSpec) -> Result<f64> {
    if z.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: z.len(),
            found: y.len(),
        });
    }
    let ranks = rank_with_tiebreak(y, spec);
    Ok(z.iter()
        .zip(&ranks)
        .filter(|(zi, _)| **zi)
        .map(|(_, &r)| spec.kind.phi_unchecked(r))
        .sum())
}

/// `C(n, k)`, saturating at `u128::MAX`.
pub(crate) fn binomial_saturating(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        // r * (n - i) / (i + 1) stays integral at every step.
        match r.checked_mul((n - i) as u128) {
            Some(v) => r = v / (i + 1) as u128,
            None => return u128::MAX,
        }
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullMode {
    Exact,
    MonteCarlo,
    /// Exact when the assignment count is within the cap, else Monte Carlo.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NullSettings {
    pub mode: NullMode,
    pub draws: usize,
    pub seed: u64,
    pub exact_cap: u64,
}

impl NullSettings {
    pub fn exact() -> Self {
        Self {
            mode: NullMode::Exact,
            draws: 0,
            seed: 0,
            exact_cap: EXACT_CAP,
        }
    }

    pub fn monte_carlo(draws: usize, seed: u64) -> Self {
        Self {
            mode: NullMode::MonteCarlo,
            draws,
            seed,
            exact_cap: EXACT_CAP,
        }
    }

    pub fn auto(draws: usize, seed: u64) -> Self {
        Self {
            mode: NullMode::Auto,
            draws,
            seed,
            exact_cap: EXACT_CAP,
        }
    }

    /// Whether a design with `count` equally likely assignments is enumerated.
    pub fn use_exact(&self, count: u128) -> Result<bool> {
        match self.mode {
            NullMode::Exact if count > self.exact_cap as u128 => Err(Error::ExactCapExceeded {
                needed: count,
                cap: self.exact_cap,
            }),
            NullMode::Exact => Ok(true),
            NullMode::Auto if count <= self.exact_cap as u128 => Ok(true),
            _ if self.draws == 0 => Err(Error::InvalidParameter(
                "Monte Carlo null needs at least one draw".into(),
            )),
            _ => Ok(false),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullKind {
    Exact,
    MonteCarlo,
}

/// Randomization distribution stored as sorted distinct values with weights.
///
/// Exact distributions carry assignment counts (or probabilities); Monte
/// Carlo distributions carry draw counts and use the add-one tail estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct NullDistribution {
    kind: NullKind,
    values: Vec<f64>,
    weights: Vec<f64>,
    /// `suffix[i] = sum(weights[i..])`, `suffix[len] = 0`.
    suffix: Vec<f64>,
    draws: usize,
}

impl NullDistribution {
    /// Builds from unsorted `(value, weight)` atoms. Equal values merge.
    pub fn from_atoms(kind: NullKind, mut atoms: Vec<(f64, f64)>, draws: usize) -> Self {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut values: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut weights: Vec<f64> = Vec::with_capacity(atoms.len());
        for (v, w) in atoms {
            match values.last() {
                Some(&last) if last == v => *weights.last_mut().unwrap() += w,
                _ => {
                    values.push(v);
                    weights.push(w);
                }
            }
        }
        let mut suffix = vec![0.0; values.len() + 1];
        for i in (0..values.len()).rev() {
            suffix[i] = suffix[i + 1] + weights[i];
        }
        Self {
            kind,
            values,
            weights,
            suffix,
            draws,
        }
    }

    /// Exact distribution of equally weighted sample values.
    pub fn from_values(kind: NullKind, values: Vec<f64>) -> Self {
        let draws = values.len();
        Self::from_atoms(kind, values.into_iter().map(|v| (v, 1.0)).collect(), draws)
    }

    pub fn point_mass(value: f64) -> Self {
        Self::from_atoms(NullKind::Exact, vec![(value, 1.0)], 1)
    }

    pub fn kind(&self) -> NullKind {
        self.kind
    }

    /// Sum of weights: assignment count (exact) or draw count (Monte Carlo).
    pub fn total(&self) -> f64 {
        self.suffix[0]
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
    }

    /// Values repeated by their (integral) weights, ascending.
    pub fn expand(&self) -> Vec<f64> {
        self.atoms()
            .flat_map(|(v, w)| std::iter::repeat_n(v, w.round() as usize))
            .collect()
    }

    /// Weight of values at or above `t`. Values within a tiny relative
    /// tolerance of `t` count as equal, so float statistics that should tie
    /// exactly are not lost to rounding.
    fn weight_at_least(&self, t: f64) -> f64 {
        let eps = 1e-9 * t.abs().max(1.0);
        let i = self.values.partition_point(|&v| v < t - eps);
        self.suffix[i]
    }

    /// `P(T >= t)`: exact ratio, or `(1 + #{T* >= t}) / (1 + M)` for Monte Carlo.
    pub fn tail(&self, t: f64) -> f64 {
        let w = self.weight_at_least(t);
        match self.kind {
            NullKind::Exact => {
                if w == self.suffix[0] {
                    1.0
                } else {
                    w / self.suffix[0]
                }
            }
            NullKind::MonteCarlo => (1.0 + w) / (1.0 + self.suffix[0]),
        }
    }

    /// Distribution of the sum of independent draws from `self` and `other`.
    /// Both must be exact.
    pub fn convolve(&self, other: &Self) -> Self {
        let mut atoms = Vec::with_capacity(self.values.len() * other.values.len());
        for (a, wa) in self.atoms() {
            for (b, wb) in other.atoms() {
                atoms.push((a + b, wa * wb));
            }
        }
        Self::from_atoms(NullKind::Exact, atoms, 0)
    }
}

/// Calls `f` on every `m`-subset of `0..n` in lexicographic order.
pub fn for_each_subset(n: usize, m: usize, mut f: impl FnMut(&[usize])) {
    if m > n {
        return;
    }
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        f(&idx);
        // Rightmost position that can still move right.
        let mut i = m;
        while i > 0 && idx[i - 1] == n - m + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// All `m`-subset sums of `scores`, one per subset.
pub fn enumerate_subset_sums(scores: &[f64], m: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for_each_subset(scores.len(), m, |s| {
        out.push(s.iter().map(|&i| scores[i]).sum())
    });
    out
}

/// `draws` Monte Carlo subset sums, each from a uniform `m`-subset.
pub fn sample_subset_sums(scores: &[f64], m: usize, draws: usize, seed: u64, dom: u64) -> Vec<f64> {
    par::map_range(rng::chunk_count(draws), |c| {
        let mut rng = rng::substream(seed, dom, c as u64);
        rng::chunk_bounds(c, draws)
            .map(|_| sample_sum(&mut rng, scores, m))
            .collect::<Vec<f64>>()
    })
    .concat()
}

/// Sum of `scores` over one uniform `m`-subset. A one-of-two draw compares a
/// uniform with one half, the same comparison the matched-pair sensitivity
/// model makes with `Gamma / (1 + Gamma)`, so both share random numbers.
pub(crate) fn sample_sum(rng: &mut impl Rng, scores: &[f64], m: usize) -> f64 {
    if scores.len() == 2 && m == 1 {
        return if rng.random::<f64>() < 0.5 {
            scores[1]
        } else {
            scores[0]
        };
    }
    index::sample(rng, scores.len(), m)
        .iter()
        .map(|i| scores[i])
        .sum()
}

/// Null distribution of `sum_{i in A} scores_i` over uniform `|A| = m`.
pub fn subset_sum_null(
    scores: &[f64],
    m: usize,
    settings: &NullSettings,
    dom: u64,
) -> Result<NullDistribution> {
    let n = scores.len();
    if m > n {
        return Err(Error::InvalidParameter(format!(
            "cannot assign {m} of {n} units"
        )));
    }
    if m == 0 {
        return Ok(NullDistribution::point_mass(0.0));
    }
    if settings.use_exact(binomial_saturating(n as u64, m as u64))? {
        Ok(NullDistribution::from_values(
            NullKind::Exact,
            enumerate_subset_sums(scores, m),
        ))
    } else {
        Ok(NullDistribution::from_values(
            NullKind::MonteCarlo,
            sample_subset_sums(scores, m, settings.draws, settings.seed, dom),
        ))
    }
}

/// Distribution of `t(A, y_ref)` over uniform assignments with `N_1` treated.
pub fn null_distribution(
    n1: usize,
    y_ref: &[f64],
    spec: &RankScoreSpec,
    settings: &NullSettings,
) -> Result<NullDistribution> {
    let ranks = rank_with_tiebreak(y_ref, spec);
    let scores: Vec<f64> = ranks.iter().map(|&r| spec.kind.phi_unchecked(r)).collect();
    subset_sum_null(&scores, n1, settings, domain::NULL_CRE)
}

/// Null distribution of a rank score statistic for `N` units, `N_1` treated.
/// Depends on nothing else.
pub fn rank_null(
    n: usize,
    n1: usize,
    kind: ScoreKind,
    settings: &NullSettings,
) -> Result<NullDistribution> {
    subset_sum_null(&kind.scores(n), n1, settings, domain::NULL_CRE)
}

pub fn tail_probability(dist: &NullDistribution, t_obs: f64) -> f64 {
    dist.tail(t_obs)
}

/// Test statistics for sharp-null randomization tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrtStatistic {
    RankScore(RankScoreSpec),
    DifferenceInMeans,
    /// Difference in means over its conservative standard error.
    Studentized,
}

fn mean_var(v: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let n = v.clone().count();
    let mean = v.clone().sum::<f64>() / n as f64;
    let var = if n > 1 {
        v.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    (mean, var, n)
}

fn arm_moments(z: &[bool], y: &[f64]) -> ((f64, f64, usize), (f64, f64, usize)) {
    let t = y.iter().zip(z).filter(|(_, &zi)| zi).map(|(&v, _)| v);
    let c = y.iter().zip(z).filter(|(_, &zi)| !zi).map(|(&v, _)| v);
    (mean_var(t), mean_var(c))
}

fn studentize(diff: f64, se: f64) -> f64 {
    if se > 0.0 {
        diff / se
    } else if diff > 0.0 {
        f64::INFINITY
    } else if diff < 0.0 {
        f64::NEG_INFINITY
    } else {
        0.0
    }
}

impl FrtStatistic {
    pub fn evaluate(&self, z: &[bool], y: &[f64]) -> Result<f64> {
        if z.len() != y.len() {
            return Err(Error::LengthMismatch {
                expected: z.len(),
                found: y.len(),
            });
        }
        Ok(match self {
            FrtStatistic::RankScore(spec) => rank_score_stat(z, y, spec)?,
            FrtStatistic::DifferenceInMeans => {
                let ((m1, _, _), (m0, _, _)) = arm_moments(z, y);
                m1 - m0
            }
            FrtStatistic::Studentized => {
                let ((m1, v1, n1), (m0, v0, n0)) = arm_moments(z, y);
                studentize(m1 - m0, (v1 / n1 as f64 + v0 / n0 as f64).sqrt())
            }
        })
    }
}

/// A set of assignments shared by every hypothesis of one analysis.
#[derive(Debug, Clone)]
pub struct AssignmentSet {
    kind: NullKind,
    n: usize,
    sets: Vec<Vec<usize>>,
}

impl AssignmentSet {
    pub fn new(n: usize, n1: usize, settings: &NullSettings) -> Result<Self> {
        if n1 > n {
            return Err(Error::InvalidParameter(format!(
                "cannot assign {n1} of {n} units"
            )));
        }
        if settings.use_exact(binomial_saturating(n as u64, n1 as u64))? {
            let mut sets = Vec::new();
            for_each_subset(n, n1, |s| sets.push(s.to_vec()));
            Ok(Self {
                kind: NullKind::Exact,
                n,
                sets,
            })
        } else {
            let draws = settings.draws;
            let sets = par::map_range(rng::chunk_count(draws), |c| {
                let mut rng = rng::substream(settings.seed, domain::ASSIGNMENTS, c as u64);
                rng::chunk_bounds(c, draws)
                    .map(|_| index::sample(&mut rng, n, n1).into_vec())
                    .collect::<Vec<_>>()
            })
            .concat();
            Ok(Self {
                kind: NullKind::MonteCarlo,
                n,
                sets,
            })
        }
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Null distribution of `stat(A, y0)` over the stored assignments.
    pub fn null(&self, stat: &FrtStatistic, y0: &[f64]) -> Result<NullDistribution> {
        let values = par::try_map_range(self.sets.len(), |i| {
            let mut z = vec![false; self.n];
            for &u in &self.sets[i] {
                z[u] = true;
            }
            stat.evaluate(&z, y0)
        })?;
        Ok(NullDistribution::from_values(self.kind, values))
    }
}

/// One-sided randomization p-value of the sharp null `tau = delta` against
/// larger effects: imputes `Y(0) = Y - Z * delta` and compares the observed
/// statistic with its distribution over assignments.
pub fn frt_sharp(
    table: &OutcomeTable,
    delta: &[f64],
    stat: &FrtStatistic,
    settings: &NullSettings,
) -> Result<f64> {
    let z = table.assignment();
    let assignments = AssignmentSet::new(table.n(), table.n_treated(), settings)?;
    frt_with_assignments(&z, &table.outcomes(), delta, stat, &assignments)
}

fn frt_with_assignments(
    z: &[bool],
    y: &[f64],
    delta: &[f64],
    stat: &FrtStatistic,
    assignments: &AssignmentSet,
) -> Result<f64> {
    if delta.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: y.len(),
            found: delta.len(),
        });
    }
    let y0: Vec<f64> = y
        .iter()
        .zip(z)
        .zip(delta)
        .map(|((&v, &zi), &d)| if zi { v - d } else { v })
        .collect();
    let t_obs = stat.evaluate(z, &y0)?;
    Ok(assignments.null(stat, &y0)?.tail(t_obs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SateMethod {
    NormalApprox,
    StudentizedFrt,
}

/// One-sided lower confidence limit for the sample average treatment effect.
pub fn sate_lower_limit(
    table: &OutcomeTable,
    alpha: f64,
    method: SateMethod,
    settings: &NullSettings,
) -> Result<OneSidedInterval> {
    check_alpha(alpha)?;
    if table.n_treated() < 2 || table.n_control() < 2 {
        return Err(Error::InvalidParameter(
            "average effect limits need at least two units per arm".into(),
        ));
    }
    let z = table.assignment();
    let y = table.outcomes();
    let ((m1, v1, n1), (m0, v0, n0)) = arm_moments(&z, &y);
    let est = m1 - m0;
    let se = (v1 / n1 as f64 + v0 / n0 as f64).sqrt();
    if se == 0.0 {
        log::warn!("both arms have zero variance; average effect limit has zero width");
        return Ok(OneSidedInterval {
            lower: est,
            alpha,
            kind: CoverageKind::Pointwise,
        });
    }
    let lower = match method {
        SateMethod::NormalApprox => {
            let zq = Normal::standard().inverse_cdf(1.0 - alpha);
            est - zq * se
        }
        SateMethod::StudentizedFrt => {
            let assignments = AssignmentSet::new(table.n(), table.n_treated(), settings)?;
            let p = |shift: f64| -> Result<f64> {
                frt_with_assignments(
                    &z,
                    &y,
                    &vec![shift; y.len()],
                    &FrtStatistic::Studentized,
                    &assignments,
                )
            };
            let spread = y.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                - y.iter().copied().fold(f64::INFINITY, f64::min);
            let mut lo = est - 10.0 * (spread + se);
            let mut hi = est + 10.0 * (spread + se);
            if p(lo)? > alpha {
                f64::NEG_INFINITY
            } else {
                // p is small below the limit and exceeds alpha above it.
                if p(hi)? <= alpha {
                    return Err(Error::BisectionBracket {
                        target: alpha,
                        low: p(lo)?,
                        high: p(hi)?,
                    });
                }
                let tol = 1e-10 * (spread + se).max(1e-12);
                while hi - lo > tol {
                    let mid = 0.5 * (lo + hi);
                    if p(mid)? > alpha {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            }
        }
    };
    Ok(OneSidedInterval {
        lower,
        alpha,
        kind: CoverageKind::Pointwise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_examples() {
        assert_eq!(ScoreKind::Wilcoxon.phi(7, 10).unwrap(), 7.0);
        assert_eq!(ScoreKind::Stephenson { s: 2 }.phi(5, 10).unwrap(), 4.0);
        assert_eq!(ScoreKind::Stephenson { s: 6 }.phi(5, 10).unwrap(), 0.0);
        assert_eq!(ScoreKind::Stephenson { s: 6 }.phi(8, 10).unwrap(), 21.0);
        assert_eq!(ScoreKind::Stephenson { s: 1 }.phi(8, 10).unwrap(), 1.0);
        assert!(ScoreKind::Wilcoxon.phi(0, 3).is_err());
        assert!(ScoreKind::Wilcoxon.phi(4, 3).is_err());
    }

    #[test]
    fn score_labels_parse() {
        for k in [
            ScoreKind::Wilcoxon,
            ScoreKind::Stephenson { s: 2 },
            ScoreKind::Stephenson { s: 6 },
        ] {
            assert_eq!(k.label().parse::<ScoreKind>().unwrap(), k);
        }
        assert_eq!(
            "stephenson-3".parse::<ScoreKind>().unwrap(),
            ScoreKind::Stephenson { s: 3 }
        );
        assert!("S0".parse::<ScoreKind>().is_err());
        assert!("median".parse::<ScoreKind>().is_err());
    }

    #[test]
    fn ranks_without_ties() {
        assert_eq!(
            rank_with_tiebreak(&[10.0, 20.0, 30.0], &RankScoreSpec::wilcoxon(1)),
            vec![1, 2, 3]
        );
    }

    #[test]
    fn ranks_with_ties_are_permutation() {
        for seed in 0..20 {
            let mut r = rank_with_tiebreak(&[5.0, 5.0, 5.0], &RankScoreSpec::wilcoxon(seed));
            r.sort();
            assert_eq!(r, vec![1, 2, 3]);
            let r = rank_with_tiebreak(&[2.0, 1.0, 2.0], &RankScoreSpec::wilcoxon(seed));
            assert_eq!(r[1], 1);
            let mut tied = vec![r[0], r[2]];
            tied.sort();
            assert_eq!(tied, vec![2, 3]);
        }
    }

    #[test]
    fn tiebreak_depends_on_seed() {
        let y = [1.0; 8];
        let distinct: std::collections::HashSet<Vec<usize>> = (0..10)
            .map(|s| rank_with_tiebreak(&y, &RankScoreSpec::wilcoxon(s)))
            .collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn stat_examples() {
        let w = RankScoreSpec::wilcoxon(0);
        assert_eq!(
            rank_score_stat(&[true, true, false, false], &[1.0, 2.0, 3.0, 4.0], &w).unwrap(),
            3.0
        );
        assert_eq!(
            rank_score_stat(&[false; 4], &[1.0, 2.0, 3.0, 4.0], &w).unwrap(),
            0.0
        );
        assert_eq!(
            rank_score_stat(&[true; 5], &[3.0, 1.0, 2.0, 9.0, 0.0], &w).unwrap(),
            15.0
        );
        assert!(rank_score_stat(&[true], &[1.0, 2.0], &w).is_err());
    }

    #[test]
    fn subsets_enumerated() {
        let mut seen = Vec::new();
        for_each_subset(4, 2, |s| seen.push(s.to_vec()));
        assert_eq!(
            seen,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        let mut count = 0;
        for_each_subset(5, 0, |_| count += 1);
        assert_eq!(count, 1);
        for_each_subset(5, 5, |_| count += 1);
        assert_eq!(count, 2);
        for_each_subset(3, 4, |_| count += 1);
        assert_eq!(count, 2);
    }

    #[test]
    fn exact_wilcoxon_null() {
        let d = rank_null(4, 2, ScoreKind::Wilcoxon, &NullSettings::exact()).unwrap();
        assert_eq!(d.expand(), vec![3.0, 4.0, 5.0, 5.0, 6.0, 7.0]);
        assert!((d.tail(7.0) - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(d.tail(0.0), 1.0);
    }

    #[test]
    fn empty_treated_is_point_mass() {
        let d = rank_null(6, 0, ScoreKind::Wilcoxon, &NullSettings::exact()).unwrap();
        assert_eq!(d.expand(), vec![0.0]);
    }

    #[test]
    fn monte_carlo_add_one() {
        let d = rank_null(
            30,
            10,
            ScoreKind::Wilcoxon,
            &NullSettings::monte_carlo(1000, 5),
        )
        .unwrap();
        assert_eq!(d.kind(), NullKind::MonteCarlo);
        assert_eq!(d.tail(-1.0), 1.0);
        assert!((d.tail(1e9) - 1.0 / 1001.0).abs() < 1e-15);
        let again = rank_null(
            30,
            10,
            ScoreKind::Wilcoxon,
            &NullSettings::monte_carlo(1000, 5),
        )
        .unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn exact_cap_enforced() {
        let r = rank_null(40, 20, ScoreKind::Wilcoxon, &NullSettings::exact());
        assert!(matches!(r, Err(Error::ExactCapExceeded { .. })));
        let auto = rank_null(40, 20, ScoreKind::Wilcoxon, &NullSettings::auto(500, 1)).unwrap();
        assert_eq!(auto.kind(), NullKind::MonteCarlo);
    }

    #[test]
    fn convolution_of_pairs() {
        let pair = NullDistribution::from_atoms(NullKind::Exact, vec![(1.0, 1.0), (2.0, 1.0)], 0);
        let two = pair.convolve(&pair);
        assert_eq!(two.expand(), vec![2.0, 3.0, 3.0, 4.0]);
        assert_eq!(two.tail(4.0), 0.25);
    }

    #[test]
    fn frt_difference_in_means() {
        let t = OutcomeTable::from_assignment(&[false, false, true, true], &[1.0, 2.0, 3.0, 4.0])
            .unwrap();
        let p = frt_sharp(
            &t,
            &[0.0; 4],
            &FrtStatistic::DifferenceInMeans,
            &NullSettings::exact(),
        )
        .unwrap();
        assert!((p - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn frt_shift_identity() {
        let z = [false, true, false, true, true, false];
        let y = [0.3, 1.9, -0.4, 2.2, 0.8, 1.1];
        let shifted: Vec<f64> = y
            .iter()
            .zip(&z)
            .map(|(&v, &zi)| if zi { v + 1.5 } else { v })
            .collect();
        let a = OutcomeTable::from_assignment(&z, &y).unwrap();
        let b = OutcomeTable::from_assignment(&z, &shifted).unwrap();
        for stat in [
            FrtStatistic::DifferenceInMeans,
            FrtStatistic::Studentized,
            FrtStatistic::RankScore(RankScoreSpec::wilcoxon(3)),
        ] {
            let pa = frt_sharp(&a, &[0.0; 6], &stat, &NullSettings::exact()).unwrap();
            let pb = frt_sharp(&b, &[1.5; 6], &stat, &NullSettings::exact()).unwrap();
            assert!((pa - pb).abs() < 1e-12, "{stat:?}");
        }
    }

    #[test]
    fn sate_normal_matches_arithmetic() {
        let t = OutcomeTable::from_arms(&[3.0, 5.0, 4.0, 6.0], &[1.0, 2.0, 2.0, 3.0]);
        // means 4.5 and 2, variances 5/3 and 2/3.
        let se = ((5.0 / 3.0) / 4.0 + (2.0 / 3.0) / 4.0f64).sqrt();
        let expected = 2.5 - 1.6448536269514722 * se;
        let got =
            sate_lower_limit(&t, 0.05, SateMethod::NormalApprox, &NullSettings::exact()).unwrap();
        assert!((got.lower - expected).abs() < 1e-9);
    }

    #[test]
    fn sate_constant_arms() {
        let t = OutcomeTable::from_arms(&[1.0, 1.0], &[1.0, 1.0]);
        for m in [SateMethod::NormalApprox, SateMethod::StudentizedFrt] {
            assert_eq!(
                sate_lower_limit(&t, 0.05, m, &NullSettings::exact())
                    .unwrap()
                    .lower,
                0.0
            );
        }
    }

    #[test]
    fn sate_studentized_below_estimate() {
        let treated: Vec<f64> = (0..8).map(|i| 1.0 + 0.3 * i as f64).collect();
        let control: Vec<f64> = (0..8)
            .map(|i| 0.3 * i as f64 + 0.05 * (i % 3) as f64)
            .collect();
        let t = OutcomeTable::from_arms(&treated, &control);
        let l = sate_lower_limit(&t, 0.05, SateMethod::StudentizedFrt, &NullSettings::exact())
            .unwrap()
            .lower;
        assert!(l < 1.0 && l > -1.0, "{l}");
    }

    #[test]
    fn saturating_binomial() {
        assert_eq!(binomial_saturating(4, 2), 6);
        assert_eq!(binomial_saturating(3, 5), 0);
        assert_eq!(binomial_saturating(200, 100), u128::MAX);
    }
}
