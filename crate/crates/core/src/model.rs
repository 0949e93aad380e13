//! Experiments, potential outcomes, quantile hypotheses and the confidence
//! statements produced by the inference modules.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// One participant of a two-arm study.
#[derive(Debug, Clone, PartialEq)]
pub struct Participant {
    pub id: String,
    pub treated: bool,
    pub stratum: Option<String>,
    /// Outcome on the analysis scale (e.g. log10 MFI).
    pub outcome: f64,
}

/// Observed data of a two-arm experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTable {
    rows: Vec<Participant>,
    lod: Option<f64>,
}

/// Which analysis a table is being checked for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignMode {
    Cre,
    Stratified,
    Placebo,
}

/// Row indices of one stratum, in table order.
#[derive(Debug, Clone, PartialEq)]
pub struct Stratum {
    pub label: String,
    pub members: Vec<usize>,
}

impl OutcomeTable {
    pub fn new(rows: Vec<Participant>, lod: Option<f64>) -> Self {
        Self { rows, lod }
    }

    /// Unstratified table with treated rows first. Ids are `t1..`, `c1..`.
    pub fn from_arms(treated: &[f64], control: &[f64]) -> Self {
        let rows = treated
            .iter()
            .enumerate()
            .map(|(i, &y)| Participant {
                id: format!("t{}", i + 1),
                treated: true,
                stratum: None,
                outcome: y,
            })
            .chain(control.iter().enumerate().map(|(i, &y)| Participant {
                id: format!("c{}", i + 1),
                treated: false,
                stratum: None,
                outcome: y,
            }))
            .collect();
        Self { rows, lod: None }
    }

    /// Unstratified table from an assignment vector and outcomes.
    pub fn from_assignment(z: &[bool], y: &[f64]) -> Result<Self> {
        check_len(z.len(), y.len())?;
        let rows = z
            .iter()
            .zip(y)
            .enumerate()
            .map(|(i, (&t, &v))| Participant {
                id: format!("u{}", i + 1),
                treated: t,
                stratum: None,
                outcome: v,
            })
            .collect();
        Ok(Self { rows, lod: None })
    }

    /// Stratified table; `strata[i]` labels row `i`.
    pub fn stratified(z: &[bool], y: &[f64], strata: &[String]) -> Result<Self> {
        check_len(z.len(), y.len())?;
        check_len(z.len(), strata.len())?;
        let mut t = Self::from_assignment(z, y)?;
        for (row, s) in t.rows.iter_mut().zip(strata) {
            row.stratum = Some(s.clone());
        }
        Ok(t)
    }

    pub fn with_lod(mut self, lod: Option<f64>) -> Self {
        self.lod = lod;
        self
    }

    pub fn rows(&self) -> &[Participant] {
        &self.rows
    }

    pub fn lod(&self) -> Option<f64> {
        self.lod
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn n_treated(&self) -> usize {
        self.rows.iter().filter(|r| r.treated).count()
    }

    pub fn n_control(&self) -> usize {
        self.n() - self.n_treated()
    }

    pub fn assignment(&self) -> Vec<bool> {
        self.rows.iter().map(|r| r.treated).collect()
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.outcome).collect()
    }

    pub fn treated_outcomes(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.treated)
            .map(|r| r.outcome)
            .collect()
    }

    pub fn control_outcomes(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| !r.treated)
            .map(|r| r.outcome)
            .collect()
    }

    pub fn is_stratified(&self) -> bool {
        self.rows.iter().any(|r| r.stratum.is_some())
    }

    /// Strata in order of first appearance.
    pub fn strata(&self) -> Result<Vec<Stratum>> {
        let labeled = self.rows.iter().filter(|r| r.stratum.is_some()).count();
        if labeled == 0 {
            return Err(Error::MissingStrata);
        }
        if labeled != self.n() {
            return Err(Error::MixedStratumLabeling {
                labeled,
                total: self.n(),
            });
        }
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut out: Vec<Stratum> = Vec::new();
        for (i, r) in self.rows.iter().enumerate() {
            let label = r.stratum.as_deref().unwrap_or_default();
            let slot = *index.entry(label).or_insert_with(|| {
                out.push(Stratum {
                    label: label.to_string(),
                    members: Vec::new(),
                });
                out.len() - 1
            });
            out[slot].members.push(i);
        }
        Ok(out)
    }

    /// Swaps the arms and negates outcomes. The individual effects of the
    /// flipped experiment equal those of the original one.
    pub fn flipped(&self) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|r| Participant {
                treated: !r.treated,
                outcome: -r.outcome,
                ..r.clone()
            })
            .collect();
        Self { rows, lod: None }
    }

    /// Same assignment, outcomes replaced.
    pub fn with_outcomes(&self, y: &[f64]) -> Result<Self> {
        check_len(self.n(), y.len())?;
        let rows = self
            .rows
            .iter()
            .zip(y)
            .map(|(r, &v)| Participant {
                outcome: v,
                ..r.clone()
            })
            .collect();
        Ok(Self {
            rows,
            lod: self.lod,
        })
    }

    /// Same outcomes and strata, assignment replaced.
    pub fn with_assignment(&self, z: &[bool]) -> Result<Self> {
        check_len(self.n(), z.len())?;
        let rows = self
            .rows
            .iter()
            .zip(z)
            .map(|(r, &t)| Participant {
                treated: t,
                ..r.clone()
            })
            .collect();
        Ok(Self {
            rows,
            lod: self.lod,
        })
    }

    /// Checks the invariants required by `mode`.
    pub fn validate(&self, mode: DesignMode) -> Result<()> {
        if self.n() < 2 {
            return Err(Error::TooFewParticipants(self.n()));
        }
        if let Some(row) = self.rows.iter().position(|r| !r.outcome.is_finite()) {
            return Err(Error::NonFiniteOutcome { row: row + 1 });
        }
        if self.n_treated() == 0 {
            return Err(Error::EmptyArm("treated"));
        }
        if self.n_control() == 0 && mode != DesignMode::Placebo {
            return Err(Error::EmptyArm("control"));
        }
        let labeled = self.rows.iter().filter(|r| r.stratum.is_some()).count();
        if labeled != 0 && labeled != self.n() {
            return Err(Error::MixedStratumLabeling {
                labeled,
                total: self.n(),
            });
        }
        match mode {
            DesignMode::Cre => {}
            DesignMode::Stratified => {
                for s in self.strata()? {
                    if s.members.iter().all(|&i| self.rows[i].treated) {
                        return Err(Error::StratumWithoutControls(s.label));
                    }
                    if s.members.iter().all(|&i| !self.rows[i].treated) {
                        return Err(Error::StratumWithoutTreated(s.label));
                    }
                }
            }
            DesignMode::Placebo => match self.lod {
                None => return Err(Error::MissingLod),
                Some(l) if !l.is_finite() => {
                    return Err(Error::InvalidParameter(format!(
                        "limit of detection must be finite, got {l}"
                    )))
                }
                Some(_) => {}
            },
        }
        Ok(())
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::LengthMismatch { expected, found });
    }
    Ok(())
}

/// Potential outcomes with explicit presence per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomeFrame {
    y1: Vec<Option<f64>>,
    y0: Vec<Option<f64>>,
    tau: Vec<Option<f64>>,
}

impl PotentialOutcomeFrame {
    /// Builds a frame; `tau` is filled in wherever both outcomes are present
    /// and must agree with `y1 - y0` where it was supplied.
    pub fn new(y1: Vec<Option<f64>>, y0: Vec<Option<f64>>, tau: Vec<Option<f64>>) -> Result<Self> {
        check_len(y1.len(), y0.len())?;
        check_len(y1.len(), tau.len())?;
        let mut tau = tau;
        for i in 0..y1.len() {
            if let (Some(a), Some(b)) = (y1[i], y0[i]) {
                match tau[i] {
                    Some(t) if t != a - b => {
                        return Err(Error::InvalidParameter(format!(
                            "tau[{i}] = {t} differs from y1 - y0 = {}",
                            a - b
                        )))
                    }
                    _ => tau[i] = Some(a - b),
                }
            }
        }
        Ok(Self { y1, y0, tau })
    }

    /// Complete science table.
    pub fn from_science(y1: &[f64], y0: &[f64]) -> Result<Self> {
        check_len(y1.len(), y0.len())?;
        Self::new(
            y1.iter().copied().map(Some).collect(),
            y0.iter().copied().map(Some).collect(),
            vec![None; y1.len()],
        )
    }

    /// Frame implied by observed data: one potential outcome per row.
    pub fn from_observed(table: &OutcomeTable) -> Self {
        let (y1, y0) = table
            .rows()
            .iter()
            .map(|r| {
                if r.treated {
                    (Some(r.outcome), None)
                } else {
                    (None, Some(r.outcome))
                }
            })
            .unzip();
        Self {
            y1,
            y0,
            tau: vec![None; table.n()],
        }
    }

    pub fn n(&self) -> usize {
        self.y1.len()
    }

    pub fn y1(&self) -> &[Option<f64>] {
        &self.y1
    }

    pub fn y0(&self) -> &[Option<f64>] {
        &self.y0
    }

    pub fn tau(&self) -> &[Option<f64>] {
        &self.tau
    }

    /// Observed outcomes `Y_i = Z_i Y_i(1) + (1 - Z_i) Y_i(0)`.
    pub fn observe(&self, z: &[bool]) -> Result<OutcomeTable> {
        check_len(self.n(), z.len())?;
        let y = z
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let v = if t { self.y1[i] } else { self.y0[i] };
                v.ok_or_else(|| {
                    Error::ScienceTableIncomplete(format!(
                        "unit {} lacks the outcome for its arm",
                        i + 1
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        OutcomeTable::from_assignment(z, &y)
    }

    /// Empirical distribution of the individual effects.
    pub fn ite_distribution(&self) -> Result<IteDistribution> {
        let taus = self
            .tau
            .iter()
            .enumerate()
            .map(|(i, t)| {
                t.ok_or_else(|| {
                    Error::ScienceTableIncomplete(format!("tau missing for unit {}", i + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        IteDistribution::new(taus)
    }
}

/// Sorted individual effects `tau_(1) <= ... <= tau_(N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IteDistribution {
    sorted: Vec<f64>,
}

impl IteDistribution {
    pub fn new(mut taus: Vec<f64>) -> Result<Self> {
        if taus.is_empty() {
            return Err(Error::ScienceTableIncomplete("no units".into()));
        }
        if taus.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter(
                "individual effects must be finite".into(),
            ));
        }
        taus.sort_by(f64::total_cmp);
        Ok(Self { sorted: taus })
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// `tau_(k)`, 1-based, with `tau_(0) = -inf`.
    pub fn order_stat(&self, k: usize) -> Result<f64> {
        match k {
            0 => Ok(f64::NEG_INFINITY),
            k if k <= self.n() => Ok(self.sorted[k - 1]),
            k => Err(Error::RankOutOfRange { k, n: self.n() }),
        }
    }

    /// `N(c)`: number of effects strictly above `c`.
    pub fn exceedances(&self, c: f64) -> usize {
        self.n() - self.sorted.partition_point(|&t| t <= c)
    }

    /// `F(c) = 1 - N(c)/N`.
    pub fn cdf(&self, c: f64) -> f64 {
        1.0 - self.exceedances(c) as f64 / self.n() as f64
    }

    /// `F^{-1}(beta) = tau_(ceil(N beta))` for `beta` in (0, 1].
    pub fn quantile(&self, beta: f64) -> Result<f64> {
        self.order_stat(rank_for_fraction(self.n(), beta)?)
    }
}

/// `ceil(N beta)` for `beta` in (0, 1], guarded against representation error
/// in the product (0.85 * 60 must give 51).
pub fn rank_for_fraction(n: usize, beta: f64) -> Result<usize> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "quantile fraction {beta} outside (0, 1]"
        )));
    }
    let x = n as f64 * beta;
    let k = (x - 1e-9 * x.max(1.0)).ceil() as usize;
    Ok(k.clamp(1, n))
}

/// `H_{k,c}: tau_(k) <= c`, equivalently `N(c) <= N - k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileHypothesis {
    pub k: usize,
    pub c: f64,
}

impl QuantileHypothesis {
    pub fn new(k: usize, c: f64) -> Self {
        Self { k, c }
    }

    /// `k = 0` is the vacuous hypothesis `-inf <= c`.
    pub fn is_vacuous(&self) -> bool {
        self.k == 0
    }

    pub fn holds(&self, ites: &IteDistribution) -> bool {
        self.k == 0
            || ites
                .order_stat(self.k)
                .map(|t| t <= self.c)
                .unwrap_or(false)
    }

    /// Count form of the same hypothesis.
    pub fn holds_by_count(&self, ites: &IteDistribution) -> bool {
        self.k <= ites.n() && ites.exceedances(self.c) <= ites.n() - self.k
    }

    pub(crate) fn check_rank(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k > n {
            return Err(Error::RankOutOfRange { k: self.k, n });
        }
        if self.c.is_nan() {
            return Err(Error::InvalidParameter("threshold c is NaN".into()));
        }
        Ok(())
    }
}

/// Pointwise or simultaneous coverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverageKind {
    Pointwise,
    Simultaneous,
}

impl CoverageKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CoverageKind::Pointwise => "pointwise",
            CoverageKind::Simultaneous => "simultaneous",
        }
    }
}

/// `[lower, inf)`; `lower = -inf` is the non-informative interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneSidedInterval {
    pub lower: f64,
    /// Nominal error rate; coverage is `1 - alpha`.
    pub alpha: f64,
    pub kind: CoverageKind,
}

impl OneSidedInterval {
    pub fn is_informative(&self) -> bool {
        self.lower > f64::NEG_INFINITY
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lower
    }
}

/// Lower confidence limits for a set of effect ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct IteProfileCi {
    pub ranks: Vec<usize>,
    pub lower: Vec<f64>,
    /// Nominal error rate of the whole statement.
    pub alpha: f64,
    pub simultaneous: bool,
    pub method: String,
}

impl IteProfileCi {
    /// Running maximum from low to high rank. Limits for larger ranks can
    /// always be raised to those of smaller ranks, since `tau_(k)` is sorted.
    pub fn monotonize(&mut self) {
        let mut best = f64::NEG_INFINITY;
        for l in &mut self.lower {
            best = best.max(*l);
            *l = best;
        }
    }

    pub fn limit_for(&self, k: usize) -> Option<f64> {
        self.ranks
            .iter()
            .position(|&r| r == k)
            .map(|i| self.lower[i])
    }

    pub fn kind(&self) -> CoverageKind {
        if self.simultaneous {
            CoverageKind::Simultaneous
        } else {
            CoverageKind::Pointwise
        }
    }

    /// Whether every limit is at or below the true effect of its rank.
    pub fn covers(&self, ites: &IteDistribution) -> bool {
        self.ranks
            .iter()
            .zip(&self.lower)
            .all(|(&k, &l)| ites.order_stat(k).map(|t| l <= t).unwrap_or(false))
    }
}

/// Checks that ranks are within 1..=n and sorted.
pub(crate) fn check_ranks(ranks: &[usize], n: usize) -> Result<()> {
    for &k in ranks {
        if k == 0 || k > n {
            return Err(Error::RankOutOfRange { k, n });
        }
    }
    if ranks.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("ranks must be sorted".into()));
    }
    Ok(())
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha = {alpha} outside (0, 1)"
        )));
    }
    Ok(())
}
