//! Command runners shared by the binary and the integration tests. Each
//! runner turns an [`AnalysisConfig`] into a [`Report`].

pub mod config;
pub mod dgp;
pub mod ingest;
pub mod report;
pub mod simulate;

use std::str::FromStr;

use crate::cre::{CrePlan, Method, MethodConfig};
use crate::error::{Error, Result};
use crate::hyper::{placebo_analysis, PLACEBO_METHOD};
use crate::model::{CoverageKind, DesignMode, IteProfileCi, OutcomeTable};
use crate::rankstat::{
    binomial_saturating, sate_lower_limit, NullSettings, RankScoreSpec, SateMethod,
};
use crate::stratified::{
    amplify_gamma, sensitivity_profile, symmetric_amplification, Solver, StratMethod,
    StratifiedData, StratifiedPlan,
};

pub use config::{AnalysisConfig, OutputFormat};
pub use ingest::{ingest_csv, ingest_reader, IngestOptions};
pub use report::{emit_report, Report};

use config::DEFAULT_GAMMAS;
use dgp::SimulationSpec;
use report::{
    AmplificationRow, CountRow, MedianRow, ProfileRow, SateRow, SensitivityRow, SummaryRow,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Placebo,
    Cre,
    Stratified,
    Sensitivity,
    Simulate,
    Sate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Placebo => "placebo",
            Command::Cre => "cre",
            Command::Stratified => "stratified",
            Command::Sensitivity => "sensitivity",
            Command::Simulate => "simulate",
            Command::Sate => "sate",
        }
    }
}

/// Reads the configured input and runs `cmd`.
pub fn run(cmd: Command, cfg: &AnalysisConfig) -> Result<Report> {
    let table = ingest_csv(cfg.input()?, &cfg.ingest_options())?;
    run_on_table(cmd, cfg, &table)
}

pub fn run_on_table(cmd: Command, cfg: &AnalysisConfig, table: &OutcomeTable) -> Result<Report> {
    let mut report = Report {
        command: cmd.name().into(),
        n: table.n(),
        n_treated: table.n_treated(),
        n_control: table.n_control(),
        ..Default::default()
    };
    match cmd {
        Command::Placebo => run_placebo(cfg, table, &mut report)?,
        Command::Cre => run_cre(cfg, table, &mut report)?,
        Command::Stratified => run_stratified(cfg, table, &mut report)?,
        Command::Sensitivity => run_sensitivity(cfg, table, &mut report)?,
        Command::Simulate => run_simulate(cfg, table, &mut report)?,
        Command::Sate => run_sate(cfg, table, &mut report)?,
    }
    Ok(report)
}

fn all_ranks(n: usize) -> impl FnOnce() -> Vec<usize> {
    move || (1..=n).collect()
}

fn two_sided(cfg: &AnalysisConfig) -> bool {
    cfg.two_sided.unwrap_or(false)
}

/// Error rate of each side.
fn side_alpha(cfg: &AnalysisConfig) -> Result<f64> {
    let a = cfg.alpha()?;
    Ok(if two_sided(cfg) { a / 2.0 } else { a })
}

fn negated(table: &OutcomeTable) -> Result<OutcomeTable> {
    let y: Vec<f64> = table.outcomes().iter().map(|v| -v).collect();
    table.with_outcomes(&y)
}

/// Ranks of `-tau` matching `ranks` of `tau`, ascending.
fn mirrored_ranks(n: usize, ranks: &[usize]) -> Vec<usize> {
    ranks.iter().rev().map(|&k| n + 1 - k).collect()
}

/// Upper limits for `ranks` from a lower profile of the negated effects.
fn upper_from_mirror(n: usize, ranks: &[usize], mirror: &IteProfileCi) -> Vec<f64> {
    ranks
        .iter()
        .map(|&k| -mirror.limit_for(n + 1 - k).expect("mirrored rank present"))
        .collect()
}

fn profile_rows(
    profile: &IteProfileCi,
    upper: Option<&[f64]>,
    kind: CoverageKind,
    n: usize,
    alpha: f64,
) -> Vec<ProfileRow> {
    profile
        .ranks
        .iter()
        .enumerate()
        .map(|(j, &k)| ProfileRow {
            method: profile.method.clone(),
            inference: kind.as_str().into(),
            rank: k,
            fraction: k as f64 / n as f64,
            lower_limit: profile.lower[j],
            upper_limit: upper.map_or(f64::INFINITY, |u| u[j]),
            level: 1.0 - alpha,
        })
        .collect()
}

fn run_placebo(cfg: &AnalysisConfig, table: &OutcomeTable, report: &mut Report) -> Result<()> {
    table.validate(DesignMode::Placebo)?;
    let alpha = cfg.alpha()?;
    if two_sided(cfg) {
        log::warn!("placebo limits are one-sided; upper limits are reported as inf");
    }
    let n = table.n();
    let ranks = cfg.ranks_for(n, all_ranks(n))?;
    let thresholds = cfg.thresholds.clone().unwrap_or_default();
    let simultaneous = if cfg.simultaneous.unwrap_or(false) {
        Some((cfg.draws()?, cfg.seed()?))
    } else {
        None
    };
    let res = placebo_analysis(table, &ranks, &thresholds, alpha, simultaneous)?;
    let mut rows = profile_rows(&res.pointwise, None, CoverageKind::Pointwise, n, alpha);
    if let Some(s) = &res.simultaneous {
        log::info!(
            "simultaneous per-test level {:.6}, estimated union probability {:.6}",
            s.per_test_alpha,
            s.union_probability
        );
        rows.extend(profile_rows(
            &s.profile,
            None,
            CoverageKind::Simultaneous,
            n,
            alpha,
        ));
    }
    debug_assert!(rows.iter().all(|r| r.method == PLACEBO_METHOD));
    report.profile = Some(rows);
    report.counts = Some(
        res.counts
            .iter()
            .map(|b| CountRow {
                threshold: b.c,
                lower_count: b.lower,
                n: b.n,
                level: 1.0 - alpha,
            })
            .collect(),
    );
    Ok(())
}

fn cre_settings(
    cfg: &AnalysisConfig,
    table: &OutcomeTable,
    config: &MethodConfig,
    simultaneous: bool,
) -> Result<NullSettings> {
    let count = binomial_saturating(table.n() as u64, table.n_treated() as u64);
    let mut settings = cfg.null_settings(count)?;
    if config.method == Method::M3 && simultaneous {
        settings.seed = cfg.seed()?;
    }
    Ok(settings)
}

/// `M2` limits and `M1` limits are jointly valid over all ranks; `M3` is
/// pointwise unless simultaneous coverage is requested.
fn coverage_of(config: &MethodConfig, simultaneous: bool) -> CoverageKind {
    match config.method {
        Method::M2 => CoverageKind::Simultaneous,
        _ if simultaneous => CoverageKind::Simultaneous,
        _ => CoverageKind::Pointwise,
    }
}

fn run_cre(cfg: &AnalysisConfig, table: &OutcomeTable, report: &mut Report) -> Result<()> {
    table.validate(DesignMode::Cre)?;
    let alpha = cfg.alpha()?;
    let side = side_alpha(cfg)?;
    let config = cfg.method_config("M1-W")?;
    let simultaneous = cfg.simultaneous.unwrap_or(false);
    let n = table.n();
    let ranks = cfg.ranks_for(n, all_ranks(n))?;
    let settings = cre_settings(cfg, table, &config, simultaneous)?;
    let step = if config.method == Method::M2 {
        side / 2.0
    } else {
        side
    };
    let plan = CrePlan::new(
        n,
        table.n_treated(),
        &ranks,
        step,
        config,
        &settings,
        simultaneous,
    )?;
    let lower = plan.profile(table)?;
    let upper = if two_sided(cfg) {
        let mirror_ranks = mirrored_ranks(n, &ranks);
        let mirror_plan = CrePlan::new(
            n,
            table.n_treated(),
            &mirror_ranks,
            step,
            config,
            &settings,
            simultaneous,
        )?;
        let mirror = mirror_plan.profile(&negated(table)?)?;
        Some(upper_from_mirror(n, &ranks, &mirror))
    } else {
        None
    };
    report.profile = Some(profile_rows(
        &lower,
        upper.as_deref(),
        coverage_of(&config, simultaneous),
        n,
        alpha,
    ));
    Ok(())
}

fn strat_specs(
    cfg: &AnalysisConfig,
    table: &OutcomeTable,
) -> Result<(Vec<RankScoreSpec>, Vec<RankScoreSpec>)> {
    let s = table.strata()?.len();
    Ok((
        vec![cfg.statistic("W")?; s],
        vec![cfg.flipped_statistic("W")?; s],
    ))
}

fn run_stratified(cfg: &AnalysisConfig, table: &OutcomeTable, report: &mut Report) -> Result<()> {
    table.validate(DesignMode::Stratified)?;
    let alpha = cfg.alpha()?;
    let side = side_alpha(cfg)?;
    let method = StratMethod::from_str(cfg.stratified_method.as_deref().unwrap_or("M1"))?;
    let solver = Solver::from_str(cfg.solver.as_deref().unwrap_or("dp"))?;
    let (specs, flipped) = strat_specs(cfg, table)?;
    let n = table.n();
    let ranks = cfg.ranks_for(n, all_ranks(n))?;
    let count = StratifiedData::new(table, &specs)?.assignment_count();
    let settings = cfg.null_settings(count)?;
    let step = if method == StratMethod::M2 {
        side / 2.0
    } else {
        side
    };
    let lower = StratifiedPlan::new(table, &specs, &flipped, method, solver, &settings)?
        .profile(&ranks, step)?;
    let upper = if two_sided(cfg) {
        let neg = negated(table)?;
        let mirror_ranks = mirrored_ranks(n, &ranks);
        let mirror = StratifiedPlan::new(&neg, &specs, &flipped, method, solver, &settings)?
            .profile(&mirror_ranks, step)?;
        Some(upper_from_mirror(n, &ranks, &mirror))
    } else {
        None
    };
    report.profile = Some(profile_rows(
        &lower,
        upper.as_deref(),
        CoverageKind::Simultaneous,
        n,
        alpha,
    ));
    Ok(())
}

fn run_sensitivity(cfg: &AnalysisConfig, table: &OutcomeTable, report: &mut Report) -> Result<()> {
    table.validate(DesignMode::Stratified)?;
    let alpha = cfg.alpha()?;
    let n = table.n();
    let ranks = cfg.ranks_for(n, all_ranks(n))?;
    let gammas = cfg
        .gammas
        .clone()
        .unwrap_or_else(|| DEFAULT_GAMMAS.to_vec());
    let spec = cfg.statistic("W")?;
    let pairs = table.strata()?.len();
    let settings = cfg.null_settings(1u128.checked_shl(pairs as u32).unwrap_or(u128::MAX))?;
    let curves = sensitivity_profile(table, &ranks, alpha, &gammas, &spec, &settings)?;
    let mut rows = Vec::new();
    for curve in &curves {
        for (j, &k) in curve.profile.ranks.iter().enumerate() {
            rows.push(SensitivityRow {
                gamma: curve.gamma,
                rank: k,
                fraction: k as f64 / n as f64,
                lower_limit: curve.profile.lower[j],
                level: 1.0 - alpha,
            });
        }
    }
    report.sensitivity = Some(rows);

    let lambdas = cfg.lambdas.clone().unwrap_or_default();
    let mut amp = Vec::new();
    for &g in gammas.iter().filter(|&&g| g > 1.0) {
        let s = symmetric_amplification(g)?;
        amp.push(AmplificationRow {
            gamma: g,
            lambda: s.lambda,
            delta: s.delta,
        });
        for &l in lambdas.iter().filter(|&&l| l > g) {
            let a = amplify_gamma(g, l)?;
            amp.push(AmplificationRow {
                gamma: g,
                lambda: a.lambda,
                delta: a.delta,
            });
        }
    }
    report.amplification = Some(amp);
    Ok(())
}

fn run_simulate(cfg: &AnalysisConfig, table: &OutcomeTable, report: &mut Report) -> Result<()> {
    if cfg.ranks.is_some() {
        return Err(Error::Config(
            "simulation reports fractions; use fractions instead of ranks".into(),
        ));
    }
    let pool1 = table.treated_outcomes();
    let pool0 = table.control_outcomes();
    let names = cfg
        .methods
        .clone()
        .unwrap_or_else(|| vec!["M1-S2".into(), "M2-S2-S6".into(), "M3-S2-S6".into()]);
    let tb = cfg.tiebreak_seed();
    let methods = names
        .iter()
        .map(|m| {
            let mut c = MethodConfig::parse(m, tb)?;
            c.berger_boos_gamma = cfg.berger_boos_gamma;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut spec = SimulationSpec::new(
        pool1.clone(),
        pool0.clone(),
        cfg.n1.unwrap_or(pool1.len()),
        cfg.n0.unwrap_or(pool0.len()),
        methods,
        cfg.seed()?,
    );
    spec.alpha = cfg.alpha()?;
    spec.draws = cfg.draws()?;
    if let Some(r) = cfg.reps {
        spec.reps = r;
    }
    if let Some(s) = cfg.noise_sd {
        spec.noise_sd = s;
    }
    if let Some(f) = cfg.fill {
        spec.fill = f;
    }
    if let Some(f) = &cfg.fractions {
        spec.fractions = f.clone();
    }
    let sim = simulate::run_simulation(&spec)?;
    report.n = spec.n();
    report.n_treated = spec.n1;
    report.n_control = spec.n0;
    let mut summary = Vec::new();
    let mut medians = Vec::new();
    for s in &sim.summaries {
        summary.push(SummaryRow {
            method: s.method.clone(),
            inference: s.inference.as_str().into(),
            n1: sim.n1,
            n0: sim.n0,
            reps: s.reps,
            mean_ss: s.mean_ss,
            coverage: s.coverage,
        });
        medians.extend(s.medians.iter().map(|m| MedianRow {
            method: s.method.clone(),
            inference: s.inference.as_str().into(),
            rank: m.rank,
            fraction: m.fraction,
            median_lower_limit: m.median_lower,
        }));
    }
    report.simulation_summary = Some(summary);
    report.simulation_medians = Some(medians);
    Ok(())
}

fn parse_sate_method(s: &str) -> Result<SateMethod> {
    match s.trim().to_ascii_lowercase().as_str() {
        "normal" => Ok(SateMethod::NormalApprox),
        "studentized" | "frt" => Ok(SateMethod::StudentizedFrt),
        other => Err(Error::Config(format!(
            "unknown average effect method '{other}'"
        ))),
    }
}

fn sate_name(m: SateMethod) -> &'static str {
    match m {
        SateMethod::NormalApprox => "normal",
        SateMethod::StudentizedFrt => "studentized",
    }
}

fn run_sate(cfg: &AnalysisConfig, table: &OutcomeTable, report: &mut Report) -> Result<()> {
    table.validate(DesignMode::Cre)?;
    let alpha = cfg.alpha()?;
    let side = side_alpha(cfg)?;
    let methods = match &cfg.sate_method {
        Some(m) => vec![parse_sate_method(m)?],
        None => vec![SateMethod::NormalApprox, SateMethod::StudentizedFrt],
    };
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let estimate = mean(&table.treated_outcomes()) - mean(&table.control_outcomes());
    let neg = negated(table)?;
    let mut rows = Vec::new();
    for m in methods {
        let settings = if m == SateMethod::StudentizedFrt {
            cfg.null_settings(binomial_saturating(
                table.n() as u64,
                table.n_treated() as u64,
            ))?
        } else {
            NullSettings::exact()
        };
        let lower = sate_lower_limit(table, side, m, &settings)?.lower;
        let upper = if two_sided(cfg) {
            -sate_lower_limit(&neg, side, m, &settings)?.lower
        } else {
            f64::INFINITY
        };
        rows.push(SateRow {
            method: sate_name(m).into(),
            estimate,
            lower_limit: lower,
            upper_limit: upper,
            level: 1.0 - alpha,
        });
    }
    report.sate = Some(rows);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> AnalysisConfig {
        AnalysisConfig {
            seed: Some(1),
            ..Default::default()
        }
    }

    #[test]
    fn mirrored_ranks_reverse() {
        assert_eq!(mirrored_ranks(10, &[1, 3, 10]), vec![1, 8, 10]);
    }

    #[test]
    fn cre_two_sided_brackets() {
        let table = OutcomeTable::from_arms(
            &[3.0, 4.0, 5.0, 6.0, 7.0, 8.0],
            &[0.0, 0.5, 1.0, 1.5, 2.0, 2.5],
        );
        let c = AnalysisConfig {
            two_sided: Some(true),
            alpha: Some(0.2),
            ..cfg()
        };
        let r = run_on_table(Command::Cre, &c, &table).unwrap();
        for row in r.profile.unwrap() {
            assert!(row.lower_limit <= row.upper_limit, "{row:?}");
        }
    }

    #[test]
    fn sate_brackets_estimate() {
        let table = OutcomeTable::from_arms(&[3.0, 4.5, 5.0, 6.0], &[0.0, 0.5, 2.0, 1.5]);
        let c = AnalysisConfig {
            two_sided: Some(true),
            ..cfg()
        };
        let r = run_on_table(Command::Sate, &c, &table).unwrap();
        for row in r.sate.unwrap() {
            assert!(
                row.lower_limit < row.estimate && row.estimate < row.upper_limit,
                "{row:?}"
            );
        }
    }

    #[test]
    fn placebo_needs_lod() {
        let table = OutcomeTable::from_arms(&[3.0, 4.0], &[0.0, 0.0]);
        assert!(matches!(
            run_on_table(Command::Placebo, &cfg(), &table),
            Err(Error::MissingLod)
        ));
        let r = run_on_table(Command::Placebo, &cfg(), &table.with_lod(Some(0.0))).unwrap();
        assert_eq!(r.profile.unwrap().len(), 4);
        assert_eq!(r.counts.unwrap().len(), 0);
    }
}
