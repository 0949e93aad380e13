//! Analysis settings: a flat TOML document whose keys mirror the command-line
//! flags. Flags override the file.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use crate::cre::MethodConfig;
use crate::error::{Error, Result};
use crate::harness::ingest::IngestOptions;
use crate::model::rank_for_fraction;
use crate::rankstat::{NullMode, NullSettings, RankScoreSpec, ScoreKind, EXACT_CAP};

#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Input CSV with columns id, arm, stratum (optional), outcome.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Arm value of treated rows (default "1").
    #[arg(long)]
    pub treated_label: Option<String>,
    /// Arm value of control rows (default "0").
    #[arg(long)]
    pub control_label: Option<String>,
    /// Column holding stratum or pair labels (default "stratum").
    #[arg(long)]
    pub stratum_column: Option<String>,
    /// Take base-10 logarithms of outcomes on ingestion.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub log10: Option<bool>,
    /// Limit of detection on the analysis scale.
    #[arg(long, allow_hyphen_values = true)]
    pub lod: Option<f64>,
    /// Error rate of the reported limits (default 0.05).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Ranks k to report, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ranks: Option<Vec<usize>>,
    /// Quantile fractions mapped to ranks by ceil(N * beta).
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    /// Thresholds c for exceedance-count bounds.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub thresholds: Option<Vec<f64>>,
    /// Method such as M1-S2, M2-S2-S6 or M3-S2-S6.
    #[arg(long)]
    pub method: Option<String>,
    /// Methods compared by `simulate`.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Rank statistic for stratified and pair analyses: W, S2, S6, ...
    #[arg(long)]
    pub statistic: Option<String>,
    /// Statistic used on the flipped table by stratified M2.
    #[arg(long)]
    pub flipped_statistic: Option<String>,
    /// Stratified procedure: M1 or M2.
    #[arg(long)]
    pub stratified_method: Option<String>,
    /// Knapsack solver: dp or greedy.
    #[arg(long)]
    pub solver: Option<String>,
    /// Nuisance error budget for M3 (default alpha / 10).
    #[arg(long)]
    pub berger_boos_gamma: Option<f64>,
    /// Sensitivity parameters.
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    /// Treatment associations at which to amplify each sensitivity parameter.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Monte Carlo draws (default 10000).
    #[arg(long)]
    pub draws: Option<usize>,
    /// Seed for every Monte Carlo computation.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed of the tie-breaking permutation (default: seed, else 0).
    #[arg(long)]
    pub tiebreak_seed: Option<u64>,
    /// Null distribution: auto, exact or mc.
    #[arg(long)]
    pub null_mode: Option<String>,
    /// Report limits jointly valid over the requested ranks.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub simultaneous: Option<bool>,
    /// Also report upper limits, splitting alpha between the two sides.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub two_sided: Option<bool>,
    /// Average effect method: normal or studentized.
    #[arg(long)]
    pub sate_method: Option<String>,
    /// Output format: csv, json or both.
    #[arg(long)]
    pub format: Option<String>,
    /// Simulated treated arm size.
    #[arg(long)]
    pub n1: Option<usize>,
    /// Simulated control arm size.
    #[arg(long)]
    pub n0: Option<usize>,
    /// Simulation replications.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Standard deviation of noise added to resampled outcomes.
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// Value substituted for uninformative limits in the squared-gap metric.
    #[arg(long, allow_hyphen_values = true)]
    pub fill: Option<f64>,
}

macro_rules! overlay {
    ($hi:expr, $lo:expr; $($f:ident),* $(,)?) => {
        AnalysisConfig { $($f: $hi.$f.or($lo.$f)),* }
    };
}

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_DRAWS: usize = 10_000;
pub const DEFAULT_GAMMAS: [f64; 5] = [1.0, 1.2, 1.5, 2.5, 3.3];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
    Both,
}

impl AnalysisConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Fields set in `self` win over those in `base`.
    pub fn overlay(self, base: AnalysisConfig) -> Self {
        overlay!(self, base;
            input, output, treated_label, control_label, stratum_column, log10, lod, alpha, ranks, fractions,
            thresholds, method, methods, statistic, flipped_statistic, stratified_method, solver,
            berger_boos_gamma, gammas, lambdas, draws, seed, tiebreak_seed, null_mode, simultaneous,
            two_sided, sate_method, format, n1, n0, reps, noise_sd, fill)
    }

    pub fn alpha(&self) -> Result<f64> {
        let a = self.alpha.unwrap_or(DEFAULT_ALPHA);
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {a}")));
        }
        Ok(a)
    }

    pub fn input(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Error::Config("input path is required".into()))
    }

    pub fn output(&self) -> Result<&Path> {
        self.output
            .as_deref()
            .ok_or_else(|| Error::Config("output directory is required".into()))
    }

    pub fn ingest_options(&self) -> IngestOptions {
        let d = IngestOptions::default();
        IngestOptions {
            treated_label: self.treated_label.clone().unwrap_or(d.treated_label),
            control_label: self.control_label.clone().unwrap_or(d.control_label),
            log10: self.log10.unwrap_or(false),
            lod: self.lod,
            stratum_column: self.stratum_column.clone().unwrap_or(d.stratum_column),
        }
    }

    pub fn tiebreak_seed(&self) -> u64 {
        self.tiebreak_seed.or(self.seed).unwrap_or(0)
    }

    pub fn draws(&self) -> Result<usize> {
        let d = self.draws.unwrap_or(DEFAULT_DRAWS);
        if d == 0 {
            return Err(Error::Config("draws must be positive".into()));
        }
        Ok(d)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a seed is required for Monte Carlo computations".into()))
    }

    pub fn null_mode(&self) -> Result<NullMode> {
        match self
            .null_mode
            .as_deref()
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            None | Some("auto") => Ok(NullMode::Auto),
            Some("exact") => Ok(NullMode::Exact),
            Some("mc") | Some("monte-carlo") | Some("montecarlo") => Ok(NullMode::MonteCarlo),
            Some(other) => Err(Error::Config(format!("unknown null mode '{other}'"))),
        }
    }

    /// Null settings for a design with `assignments` equally likely
    /// assignments. A seed is demanded only when Monte Carlo will be used.
    pub fn null_settings(&self, assignments: u128) -> Result<NullSettings> {
        let mode = self.null_mode()?;
        let mc = match mode {
            NullMode::Exact => false,
            NullMode::MonteCarlo => true,
            NullMode::Auto => assignments > EXACT_CAP as u128,
        };
        let seed = if mc {
            self.seed()?
        } else {
            self.seed.unwrap_or(0)
        };
        Ok(NullSettings {
            mode,
            draws: self.draws()?,
            seed,
            exact_cap: EXACT_CAP,
        })
    }

    /// Requested ranks, from explicit ranks or fractions; `default` otherwise.
    pub fn ranks_for(&self, n: usize, default: impl FnOnce() -> Vec<usize>) -> Result<Vec<usize>> {
        let mut ranks = match (&self.ranks, &self.fractions) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "give either ranks or fractions, not both".into(),
                ))
            }
            (Some(r), None) => r.clone(),
            (None, Some(f)) => f
                .iter()
                .map(|&b| rank_for_fraction(n, b))
                .collect::<Result<Vec<_>>>()?,
            (None, None) => default(),
        };
        ranks.sort_unstable();
        ranks.dedup();
        if let Some(&bad) = ranks.iter().find(|&&k| k == 0 || k > n) {
            return Err(Error::RankOutOfRange { k: bad, n });
        }
        Ok(ranks)
    }

    pub fn method_config(&self, default: &str) -> Result<MethodConfig> {
        let mut m = MethodConfig::parse(
            self.method.as_deref().unwrap_or(default),
            self.tiebreak_seed(),
        )?;
        m.berger_boos_gamma = self.berger_boos_gamma;
        Ok(m)
    }

    pub fn statistic(&self, default: &str) -> Result<RankScoreSpec> {
        Ok(RankScoreSpec::new(
            self.statistic
                .as_deref()
                .unwrap_or(default)
                .parse::<ScoreKind>()?,
            self.tiebreak_seed(),
        ))
    }

    pub fn flipped_statistic(&self, default: &str) -> Result<RankScoreSpec> {
        let name = self
            .flipped_statistic
            .as_deref()
            .or(self.statistic.as_deref())
            .unwrap_or(default);
        Ok(RankScoreSpec::new(
            name.parse::<ScoreKind>()?,
            self.tiebreak_seed(),
        ))
    }

    pub fn format(&self) -> Result<OutputFormat> {
        match self
            .format
            .as_deref()
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            None | Some("both") => Ok(OutputFormat::Both),
            Some("csv") => Ok(OutputFormat::Csv),
            Some("json") => Ok(OutputFormat::Json),
            Some(other) => Err(Error::Config(format!("unknown output format '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_document() {
        let c = AnalysisConfig::from_toml(
            r#"
            input = "data.csv"
            alpha = 0.1
            fractions = [0.5, 0.9]
            gammas = [1, 1.5]
            seed = 7
            simultaneous = true
            "#,
        )
        .unwrap();
        assert_eq!(c.alpha().unwrap(), 0.1);
        assert_eq!(c.gammas, Some(vec![1.0, 1.5]));
        assert_eq!(c.ranks_for(41, Vec::new).unwrap(), vec![21, 37]);
        assert_eq!(c.tiebreak_seed(), 7);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            AnalysisConfig::from_toml("colour = 1"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn flags_override_file() {
        let file = AnalysisConfig {
            alpha: Some(0.1),
            seed: Some(3),
            ..Default::default()
        };
        let flags = AnalysisConfig {
            alpha: Some(0.2),
            ..Default::default()
        };
        let c = flags.overlay(file);
        assert_eq!(c.alpha, Some(0.2));
        assert_eq!(c.seed, Some(3));
    }

    #[test]
    fn seed_required_for_monte_carlo() {
        let c = AnalysisConfig::default();
        assert!(c.null_settings(10).is_ok());
        assert!(c.null_settings(u128::MAX).is_err());
        let c = AnalysisConfig {
            seed: Some(1),
            ..Default::default()
        };
        assert_eq!(c.null_settings(u128::MAX).unwrap().seed, 1);
    }

    #[test]
    fn alpha_checked() {
        let c = AnalysisConfig {
            alpha: Some(1.5),
            ..Default::default()
        };
        assert!(c.alpha().is_err());
    }
}
