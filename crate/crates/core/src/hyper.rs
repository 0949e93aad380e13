//! Exact inference for effect quantiles and exceedance counts when control
//! potential outcomes are known up to an upper bound (placebo arms with
//! responses at or below an assay limit of detection).
//!
//! With `Y_i(0) <= 0`, the number of treated outcomes above `c` is
//! stochastically dominated by a hypergeometric count whose success number is
//! `N(c) <= N - k` under `H_{k,c}`, which gives an exact p-value, closed-form
//! confidence limits for `tau_(k)` and `N(c)`, and a Monte Carlo calibration
//! for simultaneous limits over several ranks.

use rand::seq::index;

use crate::error::{Error, Result};
use crate::model::{
    check_alpha, check_ranks, CoverageKind, IteProfileCi, OneSidedInterval, OutcomeTable,
    QuantileHypothesis,
};
use crate::par;
use crate::rng::{self, domain};

/// Populations up to this size use exact integer binomial coefficients.
const EXACT_POPULATION: u64 = 60;

/// Minimum Monte Carlo draws for the simultaneous calibration.
pub const MIN_SIMULTANEOUS_DRAWS: usize = 10_000;

/// Bisection tolerance on the per-test level.
const LEVEL_TOLERANCE: f64 = 1e-4;

/// Hypergeometric law of the number of successes among `draws` units sampled
/// without replacement from `population` units, `successes` of which are
/// successes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HypergeomParams {
    pub population: u64,
    pub successes: u64,
    pub draws: u64,
}

impl HypergeomParams {
    pub fn new(population: u64, successes: u64, draws: u64) -> Result<Self> {
        if successes > population || draws > population {
            return Err(Error::InvalidParameter(format!(
                "hypergeometric parameters (N={population}, n={successes}, N1={draws}) need n <= N and N1 <= N"
            )));
        }
        Ok(Self {
            population,
            successes,
            draws,
        })
    }

    /// Inclusive support `[max(0, N1 + n - N), min(n, N1)]`.
    pub fn support(&self) -> (u64, u64) {
        let lo = (self.draws + self.successes).saturating_sub(self.population);
        (lo, self.successes.min(self.draws))
    }
}

/// Tabulated hypergeometric distribution.
#[derive(Debug, Clone)]
pub struct Hypergeometric {
    params: HypergeomParams,
    lo: u64,
    hi: u64,
    pmf: Vec<f64>,
    /// `cdf[i] = P(X <= lo + i)`.
    cdf: Vec<f64>,
    /// `sf[i] = P(X >= lo + i)`, with a trailing zero.
    sf: Vec<f64>,
}

impl Hypergeometric {
    pub fn new(params: HypergeomParams) -> Self {
        let (lo, hi) = params.support();
        let len = (hi - lo + 1) as usize;
        let (pmf, cdf, mut sf) = if params.population <= EXACT_POPULATION {
            exact_tables(params, lo, len)
        } else {
            log_tables(params, lo, len)
        };
        sf.push(0.0);
        Self {
            params,
            lo,
            hi,
            pmf,
            cdf,
            sf,
        }
    }

    pub fn params(&self) -> HypergeomParams {
        self.params
    }

    pub fn support(&self) -> (u64, u64) {
        (self.lo, self.hi)
    }

    pub fn pmf(&self, x: i64) -> f64 {
        if x < self.lo as i64 || x > self.hi as i64 {
            return 0.0;
        }
        self.pmf[(x - self.lo as i64) as usize]
    }

    /// `G_H(x) = P(X >= x)`.
    pub fn tail(&self, x: i64) -> f64 {
        if x <= self.lo as i64 {
            return 1.0;
        }
        if x > self.hi as i64 {
            return 0.0;
        }
        self.sf[(x - self.lo as i64) as usize]
    }

    /// `P(X <= x)`.
    pub fn cdf(&self, x: i64) -> f64 {
        if x < self.lo as i64 {
            return 0.0;
        }
        if x >= self.hi as i64 {
            return 1.0;
        }
        self.cdf[(x - self.lo as i64) as usize]
    }

    /// `Q_H(theta)`: smallest support point with `P(X <= q) >= theta`.
    pub fn quantile(&self, theta: f64) -> Result<u64> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "quantile level {theta} outside (0, 1)"
            )));
        }
        let i = self.cdf.partition_point(|&p| p < theta);
        Ok(self.lo + i.min(self.cdf.len() - 1) as u64)
    }

    /// `Q_H(1 - alpha)` computed from the upper tail: the smallest `q` with
    /// `P(X > q) <= alpha`. Uses the same numbers as [`Self::tail`], so test
    /// inversion and the closed form agree exactly.
    pub fn upper_critical(&self, alpha: f64) -> u64 {
        // sf[i + 1] = P(X > lo + i) is nonincreasing in i; sf[len] = 0.
        let i = self.sf[1..].partition_point(|&p| p > alpha);
        self.lo + i as u64
    }
}

fn binomial_u128(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

fn exact_tables(p: HypergeomParams, lo: u64, len: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let counts: Vec<u128> = (0..len as u64)
        .map(|i| {
            let x = lo + i;
            binomial_u128(p.successes, x) * binomial_u128(p.population - p.successes, p.draws - x)
        })
        .collect();
    let total = binomial_u128(p.population, p.draws) as f64;
    let pmf = counts.iter().map(|&c| c as f64 / total).collect();
    let mut acc = 0u128;
    let cdf = counts
        .iter()
        .map(|&c| {
            acc += c;
            acc as f64 / total
        })
        .collect();
    let mut acc = 0u128;
    let mut sf: Vec<f64> = counts
        .iter()
        .rev()
        .map(|&c| {
            acc += c;
            acc as f64 / total
        })
        .collect();
    sf.reverse();
    (pmf, cdf, sf)
}

fn log_tables(p: HypergeomParams, lo: u64, len: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    use statrs::function::factorial::ln_binomial;
    let logs: Vec<f64> = (0..len as u64)
        .map(|i| {
            let x = lo + i;
            ln_binomial(p.successes, x) + ln_binomial(p.population - p.successes, p.draws - x)
        })
        .collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    // Normalizing by the weight sum rather than exp(ln C(N, N1)) keeps the
    // pmf summing to one regardless of log-gamma rounding.
    let total: f64 = w.iter().sum();
    let pmf = w.iter().map(|v| v / total).collect();
    let mut acc = 0.0;
    let cdf = w
        .iter()
        .map(|v| {
            acc += v;
            (acc / total).min(1.0)
        })
        .collect();
    let mut acc = 0.0;
    let mut sf: Vec<f64> = w
        .iter()
        .rev()
        .map(|v| {
            acc += v;
            (acc / total).min(1.0)
        })
        .collect();
    sf.reverse();
    sf[0] = 1.0;
    (pmf, cdf, sf)
}

pub fn hyper_pmf(params: HypergeomParams, x: i64) -> f64 {
    Hypergeometric::new(params).pmf(x)
}

pub fn hyper_tail(params: HypergeomParams, x: i64) -> f64 {
    Hypergeometric::new(params).tail(x)
}

pub fn hyper_quantile(params: HypergeomParams, theta: f64) -> Result<u64> {
    Hypergeometric::new(params).quantile(theta)
}

/// Subtracts `lod` from every outcome so that control potential outcomes are
/// bounded by zero. The table's own limit of detection moves with it.
pub fn lod_shift(table: &OutcomeTable, lod: f64) -> Result<OutcomeTable> {
    if !lod.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "limit of detection must be finite, got {lod}"
        )));
    }
    let y: Vec<f64> = table.outcomes().iter().map(|v| v - lod).collect();
    Ok(table
        .with_outcomes(&y)?
        .with_lod(table.lod().map(|l| l - lod)))
}

/// Inverse of [`lod_shift`] for a single outcome-scale value.
pub fn lod_unshift(value: f64, lod: f64) -> f64 {
    value + lod
}

/// Lower confidence bound for `N(c)`: the set `{lower, ..., n}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountBound {
    pub c: f64,
    pub lower: usize,
    pub n: usize,
    pub alpha: f64,
}

/// Placebo-arm data: treated outcomes shifted by the limit of detection and
/// sorted, so that `Y_i(0) <= 0` for every unit.
#[derive(Debug, Clone)]
pub struct PlaceboData {
    n: usize,
    treated: Vec<f64>,
}

impl PlaceboData {
    /// Uses the table's limit of detection (0 when absent). Fails if an
    /// observed control outcome exceeds it, since the bound on `Y(0)` would
    /// then be contradicted by the data.
    pub fn from_table(table: &OutcomeTable) -> Result<Self> {
        if table.n() < 2 {
            return Err(Error::TooFewParticipants(table.n()));
        }
        if table.n_treated() == 0 {
            return Err(Error::EmptyArm("treated"));
        }
        let lod = table.lod().unwrap_or(0.0);
        if !lod.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "limit of detection must be finite, got {lod}"
            )));
        }
        for (i, r) in table.rows().iter().enumerate() {
            if !r.outcome.is_finite() {
                return Err(Error::NonFiniteOutcome { row: i + 1 });
            }
            if !r.treated && r.outcome > lod {
                return Err(Error::NotPlacebo {
                    row: i + 1,
                    value: r.outcome,
                    lod,
                });
            }
        }
        let mut treated: Vec<f64> = table.treated_outcomes().iter().map(|y| y - lod).collect();
        treated.sort_by(f64::total_cmp);
        Ok(Self {
            n: table.n(),
            treated,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_treated(&self) -> usize {
        self.treated.len()
    }

    /// Shifted treated outcomes, ascending.
    pub fn treated(&self) -> &[f64] {
        &self.treated
    }

    /// `n(c)`: treated outcomes strictly above `c`.
    pub fn count_exceeding(&self, c: f64) -> usize {
        self.treated.len() - self.treated.partition_point(|&y| y <= c)
    }

    fn law(&self, k: usize) -> Hypergeometric {
        Hypergeometric::new(HypergeomParams {
            population: self.n as u64,
            successes: (self.n - k) as u64,
            draws: self.treated.len() as u64,
        })
    }

    /// `p = G_H(n(c); N, N - k, N1)`.
    pub fn pvalue(&self, h: QuantileHypothesis) -> Result<f64> {
        h.check_rank(self.n)?;
        Ok(self.law(h.k).tail(self.count_exceeding(h.c) as i64))
    }

    /// Sorted treated outcome of rank `k(alpha) = N1 - Q_H(1 - alpha; N, N - k, N1)`,
    /// or `-inf` when that rank is zero.
    pub fn ci_quantile(&self, k: usize, alpha: f64) -> Result<OneSidedInterval> {
        check_alpha(alpha)?;
        QuantileHypothesis::new(k, 0.0).check_rank(self.n)?;
        Ok(OneSidedInterval {
            lower: self.limit_at(k, alpha),
            alpha,
            kind: CoverageKind::Pointwise,
        })
    }

    fn limit_at(&self, k: usize, alpha: f64) -> f64 {
        let q = self.law(k).upper_critical(alpha) as usize;
        let rank = self.treated.len() - q;
        if rank == 0 {
            f64::NEG_INFINITY
        } else {
            self.treated[rank - 1]
        }
    }

    /// `n_{c,alpha} = N - max{k : G_H(n(c); N, N - k, N1) > alpha}`.
    pub fn ci_count(&self, c: f64, alpha: f64) -> Result<CountBound> {
        check_alpha(alpha)?;
        let x = self.count_exceeding(c) as i64;
        // k = 0 always qualifies: X = N1 >= n(c) surely.
        let k_max = (0..=self.n)
            .rev()
            .find(|&k| self.law(k).tail(x) > alpha)
            .unwrap_or(0);
        Ok(CountBound {
            c,
            lower: self.n - k_max,
            n: self.n,
            alpha,
        })
    }

    /// Pointwise limits for several ranks.
    pub fn profile(&self, ranks: &[usize], alpha: f64) -> Result<IteProfileCi> {
        check_alpha(alpha)?;
        check_ranks(ranks, self.n)?;
        Ok(IteProfileCi {
            ranks: ranks.to_vec(),
            lower: ranks.iter().map(|&k| self.limit_at(k, alpha)).collect(),
            alpha,
            simultaneous: false,
            method: PLACEBO_METHOD.into(),
        })
    }

    /// Limits jointly valid over `ranks` at level `alpha_target`.
    pub fn simultaneous(
        &self,
        ranks: &[usize],
        alpha_target: f64,
        draws: usize,
        seed: u64,
    ) -> Result<SimultaneousPlacebo> {
        check_ranks(ranks, self.n)?;
        let level =
            simultaneous_test_level(self.n, self.treated.len(), ranks, alpha_target, draws, seed)?;
        let mut profile = IteProfileCi {
            ranks: ranks.to_vec(),
            lower: ranks
                .iter()
                .map(|&k| self.limit_at(k, level.alpha))
                .collect(),
            alpha: alpha_target,
            simultaneous: true,
            method: PLACEBO_METHOD.into(),
        };
        profile.monotonize();
        Ok(SimultaneousPlacebo {
            profile,
            per_test_alpha: level.alpha,
            union_probability: level.union_probability,
        })
    }
}

pub const PLACEBO_METHOD: &str = "placebo-hypergeometric";

pub fn placebo_pvalue(table: &OutcomeTable, h: QuantileHypothesis) -> Result<f64> {
    PlaceboData::from_table(table)?.pvalue(h)
}

pub fn placebo_ci_quantile(table: &OutcomeTable, k: usize, alpha: f64) -> Result<OneSidedInterval> {
    PlaceboData::from_table(table)?.ci_quantile(k, alpha)
}

pub fn placebo_ci_count(table: &OutcomeTable, c: f64, alpha: f64) -> Result<CountBound> {
    PlaceboData::from_table(table)?.ci_count(c, alpha)
}

pub fn placebo_simultaneous(
    table: &OutcomeTable,
    ranks: &[usize],
    alpha_target: f64,
    draws: usize,
    seed: u64,
) -> Result<SimultaneousPlacebo> {
    PlaceboData::from_table(table)?.simultaneous(ranks, alpha_target, draws, seed)
}

/// Simultaneous limits with the calibrated per-test level.
#[derive(Debug, Clone)]
pub struct SimultaneousPlacebo {
    pub profile: IteProfileCi,
    pub per_test_alpha: f64,
    pub union_probability: f64,
}

/// Everything the placebo command reports.
#[derive(Debug, Clone)]
pub struct PlaceboInferenceResult {
    pub pointwise: IteProfileCi,
    pub simultaneous: Option<SimultaneousPlacebo>,
    pub counts: Vec<CountBound>,
    pub alpha: f64,
}

/// Pointwise profile, optional simultaneous profile and `N(c)` bounds.
pub fn placebo_analysis(
    table: &OutcomeTable,
    ranks: &[usize],
    thresholds: &[f64],
    alpha: f64,
    simultaneous: Option<(usize, u64)>,
) -> Result<PlaceboInferenceResult> {
    let data = PlaceboData::from_table(table)?;
    let pointwise = data.profile(ranks, alpha)?;
    let simultaneous = simultaneous
        .map(|(draws, seed)| data.simultaneous(ranks, alpha, draws, seed))
        .transpose()?;
    let counts = thresholds
        .iter()
        .map(|&c| data.ci_count(c, alpha))
        .collect::<Result<Vec<_>>>()?;
    Ok(PlaceboInferenceResult {
        pointwise,
        simultaneous,
        counts,
        alpha,
    })
}

/// Calibrated per-test level for simultaneous statements over ranks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimultaneousLevel {
    pub alpha: f64,
    pub union_probability: f64,
}

/// Largest per-test level `a` (to within 1e-4) such that the Monte Carlo
/// estimate of
/// `P(union_j { sum_i A_i 1(i > k_j) > Q_H(1 - a; N, N - k_j, N1) })`
/// is at most `target`, where `A` is a uniform size-`n_draw` subset of
/// `1..=n`. Draws are shared across candidate levels.
pub fn simultaneous_test_level(
    n: usize,
    n_draw: usize,
    ranks: &[usize],
    target: f64,
    draws: usize,
    seed: u64,
) -> Result<SimultaneousLevel> {
    check_alpha(target)?;
    check_ranks(ranks, n)?;
    if n_draw > n {
        return Err(Error::InvalidParameter(format!(
            "cannot draw {n_draw} of {n} units"
        )));
    }
    if draws < MIN_SIMULTANEOUS_DRAWS {
        return Err(Error::InvalidParameter(format!(
            "simultaneous calibration needs at least {MIN_SIMULTANEOUS_DRAWS} draws, got {draws}"
        )));
    }
    let j = ranks.len();
    let chunks = par::map_range(rng::chunk_count(draws), |c| {
        let mut rng = rng::substream(seed, domain::SIMULTANEOUS, c as u64);
        let range = rng::chunk_bounds(c, draws);
        let mut out = Vec::with_capacity(range.len() * j);
        for _ in range {
            let mut idx = index::sample(&mut rng, n, n_draw).into_vec();
            idx.sort_unstable();
            // Units are 1-based; unit idx + 1 > k  <=>  idx >= k.
            out.extend(
                ranks
                    .iter()
                    .map(|&k| (n_draw - idx.partition_point(|&i| i < k)) as u32),
            );
        }
        out
    });
    let counts: Vec<u32> = chunks.concat();
    let laws: Vec<Hypergeometric> = ranks
        .iter()
        .map(|&k| {
            Hypergeometric::new(HypergeomParams {
                population: n as u64,
                successes: (n - k) as u64,
                draws: n_draw as u64,
            })
        })
        .collect();

    let union = |a: f64| -> f64 {
        let q: Vec<u32> = laws.iter().map(|l| l.upper_critical(a) as u32).collect();
        let hits = counts
            .chunks_exact(j.max(1))
            .filter(|row| row.iter().zip(&q).any(|(s, t)| s > t))
            .count();
        hits as f64 / draws as f64
    };

    let at_target = union(target);
    if at_target <= target {
        return Ok(SimultaneousLevel {
            alpha: target,
            union_probability: at_target,
        });
    }
    let at_zero = union(0.0);
    if at_zero > target {
        return Err(Error::BisectionBracket {
            target,
            low: at_zero,
            high: at_target,
        });
    }
    let (mut lo, mut hi) = (0.0, target);
    let mut lo_union = at_zero;
    while hi - lo > LEVEL_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        let u = union(mid);
        if u <= target {
            lo = mid;
            lo_union = u;
        } else {
            hi = mid;
        }
    }
    Ok(SimultaneousLevel {
        alpha: lo,
        union_probability: lo_union,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hg(n: u64, s: u64, d: u64) -> Hypergeometric {
        Hypergeometric::new(HypergeomParams::new(n, s, d).unwrap())
    }

    #[test]
    fn pmf_examples() {
        assert!((hg(5, 2, 2).pmf(1) - 0.6).abs() < 1e-15);
        assert_eq!(hg(5, 2, 2).pmf(3), 0.0);
        assert_eq!(hg(4, 0, 2).pmf(0), 1.0);
    }

    #[test]
    fn tail_examples() {
        assert!((hg(5, 2, 2).tail(1) - 0.7).abs() < 1e-15);
        assert_eq!(hg(5, 2, 2).tail(0), 1.0);
        assert_eq!(hg(4, 3, 3).tail(3), 0.25);
        assert_eq!(hg(4, 3, 3).tail(4), 0.0);
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(hg(5, 2, 2).quantile(0.9).unwrap(), 1);
        assert_eq!(hg(5, 2, 2).quantile(0.95).unwrap(), 2);
        assert_eq!(hg(4, 0, 2).quantile(0.5).unwrap(), 0);
        assert!(hg(4, 0, 2).quantile(1.0).is_err());
        assert!(hg(4, 0, 2).quantile(0.0).is_err());
    }

    #[test]
    fn upper_critical_matches_quantile() {
        for (n, s, d) in [(5, 2, 2), (12, 5, 7), (41, 20, 33), (80, 30, 40)] {
            let h = hg(n, s, d);
            for a in [0.01, 0.05, 0.1, 0.25, 0.5] {
                assert_eq!(
                    h.upper_critical(a),
                    h.quantile(1.0 - a).unwrap(),
                    "{n} {s} {d} {a}"
                );
            }
        }
    }

    #[test]
    fn invalid_params() {
        assert!(HypergeomParams::new(3, 4, 1).is_err());
        assert!(HypergeomParams::new(3, 1, 4).is_err());
    }

    #[test]
    fn large_population_normalizes() {
        for (n, s, d) in [(61, 30, 20), (200, 100, 100), (500, 17, 250), (500, 499, 3)] {
            let h = hg(n, s, d);
            let (lo, hi) = h.support();
            let sum: f64 = (lo..=hi).map(|x| h.pmf(x as i64)).sum();
            assert!((sum - 1.0).abs() < 1e-12, "{n} {s} {d}: {sum}");
        }
    }

    #[test]
    fn exact_and_log_paths_agree() {
        // Same distribution evaluated by both code paths.
        let p = HypergeomParams::new(60, 25, 31).unwrap();
        let (lo, _) = p.support();
        let (e_pmf, _, e_sf) = exact_tables(p, lo, 26);
        let (l_pmf, _, l_sf) = log_tables(p, lo, 26);
        for i in 0..26 {
            assert!((e_pmf[i] - l_pmf[i]).abs() < 1e-12);
            assert!((e_sf[i] - l_sf[i]).abs() < 1e-12);
        }
    }

    fn placebo(treated: &[f64], n: usize) -> PlaceboData {
        let control = vec![0.0; n - treated.len()];
        PlaceboData::from_table(&OutcomeTable::from_arms(treated, &control)).unwrap()
    }

    #[test]
    fn pvalue_examples() {
        let d = placebo(&[3.0, 5.0], 4);
        assert_eq!(d.pvalue(QuantileHypothesis::new(3, 2.0)).unwrap(), 0.0);
        assert_eq!(d.pvalue(QuantileHypothesis::new(3, 6.0)).unwrap(), 1.0);
        let d = placebo(&[3.0, 5.0], 5);
        assert!((d.pvalue(QuantileHypothesis::new(3, 2.0)).unwrap() - 0.1).abs() < 1e-15);
        assert!(d.pvalue(QuantileHypothesis::new(0, 2.0)).is_err());
        assert!(d.pvalue(QuantileHypothesis::new(6, 2.0)).is_err());
    }

    #[test]
    fn not_placebo_when_control_exceeds_lod() {
        let t = OutcomeTable::from_arms(&[3.0], &[0.5]).with_lod(Some(0.0));
        assert!(matches!(
            PlaceboData::from_table(&t),
            Err(Error::NotPlacebo { .. })
        ));
    }

    #[test]
    fn ci_quantile_max_rank_is_max_treated() {
        let d = placebo(&[1.0, 4.0, 2.0], 6);
        assert_eq!(d.ci_quantile(6, 0.05).unwrap().lower, 4.0);
    }

    #[test]
    fn ci_quantile_noninformative() {
        let d = placebo(&[1.0, 4.0], 10);
        assert_eq!(d.ci_quantile(1, 0.05).unwrap().lower, f64::NEG_INFINITY);
    }

    #[test]
    fn ci_count_examples() {
        let d = placebo(&[3.0, 5.0], 4);
        assert_eq!(d.ci_count(2.0, 0.05).unwrap().lower, 2);
        assert_eq!(d.ci_count(10.0, 0.05).unwrap().lower, 0);
    }

    #[test]
    fn count_bounds_nonincreasing_in_c() {
        let y: Vec<f64> = (0..33).map(|i| 1.5 + 0.03 * i as f64).collect();
        let d = placebo(&y, 41);
        let b: Vec<usize> = [0.0, 0.5, 1.0, 1.5, 2.0]
            .iter()
            .map(|&c| d.ci_count(c, 0.05).unwrap().lower)
            .collect();
        assert!(b.windows(2).all(|w| w[0] >= w[1]), "{b:?}");
    }

    #[test]
    fn lod_shift_roundtrip() {
        let t = OutcomeTable::from_arms(&[3.0, 4.5], &[1.0]).with_lod(Some(2.0));
        assert_eq!(lod_shift(&t, 0.0).unwrap().outcomes(), t.outcomes());
        let s = lod_shift(&t, 2.0).unwrap();
        assert_eq!(s.outcomes(), vec![1.0, 2.5, -1.0]);
        assert_eq!(s.lod(), Some(0.0));
        let back: Vec<f64> = s.outcomes().iter().map(|&v| lod_unshift(v, 2.0)).collect();
        assert_eq!(back, t.outcomes());
    }

    #[test]
    fn lod_is_applied_to_placebo_limits() {
        // Shifting data and the limit of detection together leaves effect
        // limits unchanged.
        let base = OutcomeTable::from_arms(&[2.5, 3.0, 4.0, 4.2], &[0.0, -1.0]).with_lod(Some(0.0));
        let moved = OutcomeTable::from_arms(&[4.5, 5.0, 6.0, 6.2], &[2.0, 1.0]).with_lod(Some(2.0));
        for k in 1..=6 {
            let a = placebo_ci_quantile(&base, k, 0.1).unwrap().lower;
            let b = placebo_ci_quantile(&moved, k, 0.1).unwrap().lower;
            assert_eq!(a, b);
        }
    }

    #[test]
    fn simultaneous_single_rank_is_pointwise() {
        let y: Vec<f64> = (0..33).map(|i| 1.0 + 0.1 * i as f64).collect();
        let d = placebo(&y, 41);
        let k = 21;
        let s = d.simultaneous(&[k], 0.05, 20_000, 7).unwrap();
        assert_eq!(s.per_test_alpha, 0.05);
        assert_eq!(s.profile.lower[0], d.ci_quantile(k, 0.05).unwrap().lower);
    }

    #[test]
    fn simultaneous_max_rank_never_fires() {
        let level = simultaneous_test_level(20, 8, &[20], 0.05, 10_000, 3).unwrap();
        assert_eq!(level.union_probability, 0.0);
        assert_eq!(level.alpha, 0.05);
    }

    #[test]
    fn simultaneous_requires_draws() {
        assert!(simultaneous_test_level(20, 8, &[10], 0.05, 100, 3).is_err());
    }

    #[test]
    fn simultaneous_is_deterministic() {
        let ranks: Vec<usize> = (1..=10).map(|j: usize| (41 * j).div_ceil(10)).collect();
        let a = simultaneous_test_level(41, 33, &ranks, 0.05, 10_000, 11).unwrap();
        let b = simultaneous_test_level(41, 33, &ranks, 0.05, 10_000, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.union_probability <= 0.05);
    }
}
