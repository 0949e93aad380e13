//! Repeated-sampling comparison of profile methods.

use crate::cre::{CrePlan, Method, MethodConfig};
use crate::error::Result;
use crate::harness::dgp::{run_dgp, ss_metric, SimulationSpec};
use crate::model::{rank_for_fraction, CoverageKind};
use crate::par;
use crate::rankstat::NullSettings;

#[derive(Debug, Clone, PartialEq)]
pub struct RankMedian {
    pub rank: usize,
    pub fraction: f64,
    pub median_lower: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub inference: CoverageKind,
    pub reps: usize,
    pub mean_ss: f64,
    /// Share of replications whose limits all lie below the true sorted effects.
    pub coverage: f64,
    pub medians: Vec<RankMedian>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub n1: usize,
    pub n0: usize,
    pub reps: usize,
    pub alpha: f64,
    pub summaries: Vec<MethodSummary>,
}

/// Middle value, averaging the two central values for even counts.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m == 0 {
        return f64::NAN;
    }
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

struct Arm {
    config: MethodConfig,
    kinds: Vec<CoverageKind>,
    plan: CrePlan,
}

/// Runs every method at both pointwise and simultaneous coverage. All
/// profiles target level `1 - alpha`, so `M2` runs its steps at `alpha / 2`.
/// `M1` and `M2` limits are simultaneous by construction and are reported
/// under both headings.
pub fn run_simulation(spec: &SimulationSpec) -> Result<SimulationReport> {
    spec.validate()?;
    let n = spec.n();
    let mut ranks = spec
        .fractions
        .iter()
        .map(|&b| rank_for_fraction(n, b))
        .collect::<Result<Vec<_>>>()?;
    ranks.sort_unstable();
    ranks.dedup();
    let settings = NullSettings::auto(spec.draws, spec.seed);

    let mut arms = Vec::new();
    for &config in &spec.methods {
        let step = if config.method == Method::M2 {
            spec.alpha / 2.0
        } else {
            spec.alpha
        };
        if config.method == Method::M3 {
            for (kind, simul) in [
                (CoverageKind::Pointwise, false),
                (CoverageKind::Simultaneous, true),
            ] {
                let plan = CrePlan::new(n, spec.n1, &ranks, step, config, &settings, simul)?;
                arms.push(Arm {
                    config,
                    kinds: vec![kind],
                    plan,
                });
            }
        } else {
            let plan = CrePlan::new(n, spec.n1, &ranks, step, config, &settings, true)?;
            arms.push(Arm {
                config,
                kinds: vec![CoverageKind::Pointwise, CoverageKind::Simultaneous],
                plan,
            });
        }
    }

    // results[rep][arm] = (ss, covered, limits)
    let results = par::try_map_range(spec.reps, |rep| -> Result<Vec<(f64, bool, Vec<f64>)>> {
        let (table, frame) = run_dgp(spec, rep as u64)?;
        let truth = frame.ite_distribution()?;
        arms.iter()
            .map(|arm| {
                let profile = arm.plan.profile(&table)?;
                Ok((
                    ss_metric(&profile, &truth, spec.fill)?,
                    profile.covers(&truth),
                    profile.lower,
                ))
            })
            .collect()
    })?;

    let mut summaries = Vec::new();
    for (a, arm) in arms.iter().enumerate() {
        let mean_ss = results.iter().map(|r| r[a].0).sum::<f64>() / spec.reps as f64;
        let coverage = results.iter().filter(|r| r[a].1).count() as f64 / spec.reps as f64;
        let medians: Vec<RankMedian> = ranks
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                let mut v: Vec<f64> = results.iter().map(|r| r[a].2[j]).collect();
                RankMedian {
                    rank: k,
                    fraction: k as f64 / n as f64,
                    median_lower: median(&mut v),
                }
            })
            .collect();
        for &kind in &arm.kinds {
            summaries.push(MethodSummary {
                method: arm.config.name(),
                inference: kind,
                reps: spec.reps,
                mean_ss,
                coverage,
                medians: medians.clone(),
            });
        }
    }
    Ok(SimulationReport {
        n1: spec.n1,
        n0: spec.n0,
        reps: spec.reps,
        alpha: spec.alpha,
        summaries,
    })
}
