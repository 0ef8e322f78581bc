//! Run configuration: flat key-value text with sections (TOML with scalar
//! values only). Paths are resolved relative to the config file.

use crate::bootstrap::{BootstrapScheme, IntervalMethod};
use crate::error::{Error, Result};
use crate::io::sha256_hex;
use crate::weights::FeatureEncoding;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Estimator selection, shared by the CLI flag and the config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorId {
    /// Count-based estimator on the cross-sectional sample alone.
    Standard,
    /// Weighted toward an externally sampled target population.
    ExtendedExternal,
    /// Weighted toward the enrolled subset of HIV-negatives.
    ExtendedInternal,
    /// Pooled counts with proportion-averaged MDRI/FRR.
    SubtypePooled,
    /// Per-subtype count estimators averaged by sample proportion.
    SubtypeStratified,
    /// Per-subtype weighted estimators averaged by external-target shares.
    SubtypeExternal,
    /// Per-subtype weighted estimators averaged by enrolled shares.
    SubtypeInternal,
    /// Count-based estimator under partial recency testing.
    ModifiedStandard,
    /// Internal-target estimator under partial recency testing.
    ModifiedInternal,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 9] = [
        EstimatorId::Standard,
        EstimatorId::ExtendedExternal,
        EstimatorId::ExtendedInternal,
        EstimatorId::SubtypePooled,
        EstimatorId::SubtypeStratified,
        EstimatorId::SubtypeExternal,
        EstimatorId::SubtypeInternal,
        EstimatorId::ModifiedStandard,
        EstimatorId::ModifiedInternal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorId::Standard => "standard",
            EstimatorId::ExtendedExternal => "extended-external",
            EstimatorId::ExtendedInternal => "extended-internal",
            EstimatorId::SubtypePooled => "subtype-pooled",
            EstimatorId::SubtypeStratified => "subtype-stratified",
            EstimatorId::SubtypeExternal => "subtype-external",
            EstimatorId::SubtypeInternal => "subtype-internal",
            EstimatorId::ModifiedStandard => "modified-standard",
            EstimatorId::ModifiedInternal => "modified-internal",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == name)
            .ok_or_else(|| {
                let known: Vec<&str> = Self::ALL.iter().map(|e| e.name()).collect();
                Error::Config(format!("unknown estimator {name:?} (expected one of {})", known.join(", ")))
            })
    }

    /// Needs a separately sampled target file or simulation.
    pub fn needs_external_target(self) -> bool {
        matches!(self, EstimatorId::ExtendedExternal | EstimatorId::SubtypeExternal)
    }

    /// Needs enrollment flags on the HIV-negative records.
    pub fn needs_enrollment(self) -> bool {
        matches!(
            self,
            EstimatorId::ExtendedInternal | EstimatorId::SubtypeInternal | EstimatorId::ModifiedInternal
        )
    }

    /// Needs a subtype on every cross-sectional record.
    pub fn needs_subtypes(self) -> bool {
        matches!(
            self,
            EstimatorId::SubtypePooled
                | EstimatorId::SubtypeStratified
                | EstimatorId::SubtypeExternal
                | EstimatorId::SubtypeInternal
        )
    }

    /// Remains well-defined when some positives skip the recency test.
    pub fn tolerates_missing_recency(self) -> bool {
        matches!(self, EstimatorId::ModifiedStandard | EstimatorId::ModifiedInternal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMode {
    /// Cross-sectional sample only.
    CrossSectional,
    /// Cross-sectional sample plus an independent target sample.
    External,
    /// Cross-sectional sample with enrollment of HIV-negatives, and
    /// optionally an active-arm trial on the enrollees.
    Internal,
}

impl SimulationMode {
    pub fn name(self) -> &'static str {
        match self {
            SimulationMode::CrossSectional => "cross_sectional",
            SimulationMode::External => "external",
            SimulationMode::Internal => "internal",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "cross_sectional" => Ok(SimulationMode::CrossSectional),
            "external" => Ok(SimulationMode::External),
            "internal" => Ok(SimulationMode::Internal),
            other => Err(Error::Config(format!(
                "unknown simulation mode {other:?} (expected cross_sectional, external, or internal)"
            ))),
        }
    }
}

/// One (cross-sectional size, target size) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSizes {
    pub cross: usize,
    pub target: usize,
}

pub fn scheme_from_name(name: &str) -> Result<BootstrapScheme> {
    match name {
        "nonparametric" => Ok(BootstrapScheme::Nonparametric),
        "parametric" => Ok(BootstrapScheme::Parametric),
        other => Err(Error::Config(format!(
            "unknown bootstrap scheme {other:?} (expected nonparametric or parametric)"
        ))),
    }
}

pub fn scheme_name(scheme: BootstrapScheme) -> &'static str {
    match scheme {
        BootstrapScheme::Nonparametric => "nonparametric",
        BootstrapScheme::Parametric => "parametric",
    }
}

pub fn interval_from_name(name: &str) -> Result<IntervalMethod> {
    match name {
        "lognormal_normal_approx" => Ok(IntervalMethod::LognormalNormalApprox),
        "log_percentile" => Ok(IntervalMethod::LogPercentile),
        other => Err(Error::Config(format!(
            "unknown interval method {other:?} (expected lognormal_normal_approx or log_percentile)"
        ))),
    }
}

pub fn encoding_from_name(name: &str) -> Result<FeatureEncoding> {
    match name {
        "main_effects" => Ok(FeatureEncoding::MainEffects),
        "saturated" => Ok(FeatureEncoding::Saturated),
        other => Err(Error::Config(format!(
            "unknown weight model {other:?} (expected main_effects or saturated)"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub estimators: Vec<EstimatorId>,
    pub replications: u32,
    pub seed: u64,
    pub settings: Vec<SampleSizes>,
    pub table_path: PathBuf,
    pub assay_path: PathBuf,
    pub mode: SimulationMode,
    /// Active-product efficacy of a simulated trial; None skips the trial.
    pub efficacy: Option<f64>,
    pub followup_years: f64,
    pub tail_cap: f64,
    pub panel_subjects: usize,
    pub panel_long_infected: usize,
    /// Probability an HIV-positive record receives the recency test.
    pub recency_tested_prob: f64,
    pub encoding: FeatureEncoding,
    pub bootstrap_rounds: usize,
    pub schemes: Vec<BootstrapScheme>,
    pub interval: IntervalMethod,
    /// Hash of the file this config was loaded from, for manifests.
    pub source_sha256: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: RawExperiment,
    population: RawPopulation,
    #[serde(default)]
    simulate: RawSimulate,
    #[serde(default)]
    bootstrap: RawBootstrap,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    name: String,
    /// Comma-separated estimator names.
    estimators: String,
    replications: u32,
    seed: u64,
    /// Comma-separated `N:M` pairs; the 1-based position is the setting
    /// label used in reports.
    settings: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPopulation {
    table: String,
    assays: String,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSimulate {
    mode: Option<String>,
    efficacy: Option<f64>,
    followup_years: Option<f64>,
    tail_cap: Option<f64>,
    panel_subjects: Option<usize>,
    panel_long_infected: Option<usize>,
    recency_tested_prob: Option<f64>,
    weight_model: Option<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawBootstrap {
    rounds: Option<usize>,
    /// Comma-separated scheme names; an empty string disables intervals.
    schemes: Option<String>,
    interval: Option<String>,
}

fn comma_list(text: &str) -> impl Iterator<Item = &str> {
    text.split(',').map(str::trim).filter(|t| !t.is_empty())
}

fn parse_settings(text: &str) -> Result<Vec<SampleSizes>> {
    let mut out = Vec::new();
    for item in comma_list(text) {
        let (n, m) = item.split_once(':').ok_or_else(|| {
            Error::Config(format!("settings entries must look like N:M, got {item:?}"))
        })?;
        let cross = n.trim().parse().map_err(|_| {
            Error::Config(format!("cross-sectional size must be an integer, got {n:?}"))
        })?;
        let target = m.trim().parse().map_err(|_| {
            Error::Config(format!("target size must be an integer, got {m:?}"))
        })?;
        out.push(SampleSizes { cross, target });
    }
    Ok(out)
}

fn resolve(base: &Path, relative: &str) -> PathBuf {
    let p = Path::new(relative);
    if p.is_absolute() { p.to_path_buf() } else { base.join(p) }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut config = Self::from_text(&text, base)
            .map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
                other => other,
            })?;
        config.source_sha256 = Some(sha256_hex(text.as_bytes()));
        Ok(config)
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn from_text(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;

        let mut estimators = Vec::new();
        for name in comma_list(&raw.experiment.estimators) {
            let id = EstimatorId::from_name(name)?;
            if estimators.contains(&id) {
                return Err(Error::Config(format!("estimator {name:?} is listed twice")));
            }
            estimators.push(id);
        }

        let mode = match raw.simulate.mode.as_deref() {
            Some(name) => SimulationMode::from_name(name)?,
            None => SimulationMode::CrossSectional,
        };

        let mut schemes = Vec::new();
        for name in comma_list(raw.bootstrap.schemes.as_deref().unwrap_or("nonparametric, parametric")) {
            let scheme = scheme_from_name(name)?;
            if schemes.contains(&scheme) {
                return Err(Error::Config(format!("bootstrap scheme {name:?} is listed twice")));
            }
            schemes.push(scheme);
        }

        let config = ExperimentConfig {
            name: raw.experiment.name,
            estimators,
            replications: raw.experiment.replications,
            seed: raw.experiment.seed,
            settings: parse_settings(&raw.experiment.settings)?,
            table_path: resolve(base, &raw.population.table),
            assay_path: resolve(base, &raw.population.assays),
            mode,
            efficacy: raw.simulate.efficacy,
            followup_years: raw.simulate.followup_years.unwrap_or(1.0),
            tail_cap: raw.simulate.tail_cap.unwrap_or(crate::simulate::DEFAULT_TAIL_CAP_YEARS),
            panel_subjects: raw.simulate.panel_subjects.unwrap_or(175),
            panel_long_infected: raw.simulate.panel_long_infected.unwrap_or(1500),
            recency_tested_prob: raw.simulate.recency_tested_prob.unwrap_or(1.0),
            encoding: match raw.simulate.weight_model.as_deref() {
                Some(name) => encoding_from_name(name)?,
                None => FeatureEncoding::MainEffects,
            },
            bootstrap_rounds: raw.bootstrap.rounds.unwrap_or(500),
            schemes,
            interval: match raw.bootstrap.interval.as_deref() {
                Some(name) => interval_from_name(name)?,
                None => IntervalMethod::LognormalNormalApprox,
            },
            source_sha256: None,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("experiment name must not be empty".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::Config("the estimator list must not be empty".into()));
        }
        if self.settings.is_empty() {
            return Err(Error::Config("at least one N:M setting is required".into()));
        }
        for (i, s) in self.settings.iter().enumerate() {
            if s.cross == 0 {
                return Err(Error::Config(format!(
                    "setting {}: the cross-sectional size must be positive",
                    i + 1
                )));
            }
            if s.target == 0 && self.mode != SimulationMode::CrossSectional {
                return Err(Error::Config(format!(
                    "setting {}: {} mode needs a positive target size",
                    i + 1,
                    self.mode.name()
                )));
            }
        }
        for e in &self.estimators {
            if e.needs_external_target() && self.mode != SimulationMode::External {
                return Err(Error::Config(format!(
                    "estimator {} needs an external target sample; set simulate mode = \"external\"",
                    e.name()
                )));
            }
            if e.needs_enrollment() && self.mode != SimulationMode::Internal {
                return Err(Error::Config(format!(
                    "estimator {} needs enrollment flags; set simulate mode = \"internal\"",
                    e.name()
                )));
            }
        }
        if let Some(e) = self.efficacy {
            if self.mode != SimulationMode::Internal {
                return Err(Error::Config(
                    "a trial needs enrollees; efficacy requires simulate mode = \"internal\"".into(),
                ));
            }
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Config(format!("efficacy must lie in [0, 1], got {e}")));
            }
        }
        if !(self.followup_years.is_finite() && self.followup_years > 0.0) {
            return Err(Error::Config(format!(
                "followup_years must be positive, got {}",
                self.followup_years
            )));
        }
        if !(self.tail_cap.is_finite() && self.tail_cap > 0.0) {
            return Err(Error::Config(format!("tail_cap must be positive, got {}", self.tail_cap)));
        }
        if self.panel_subjects == 0 || self.panel_long_infected == 0 {
            return Err(Error::Config("calibration panel sizes must be positive".into()));
        }
        if !(0.0 < self.recency_tested_prob && self.recency_tested_prob <= 1.0) {
            return Err(Error::Config(format!(
                "recency_tested_prob must lie in (0, 1], got {}",
                self.recency_tested_prob
            )));
        }
        if self.recency_tested_prob < 1.0 {
            if let Some(e) = self.estimators.iter().find(|e| !e.tolerates_missing_recency()) {
                return Err(Error::Config(format!(
                    "estimator {} assumes every positive is recency-tested; with \
                     recency_tested_prob < 1 use the modified estimators",
                    e.name()
                )));
            }
        }
        if !self.schemes.is_empty() && self.bootstrap_rounds < 2 {
            return Err(Error::Config(format!(
                "at least 2 bootstrap rounds are needed, got {}",
                self.bootstrap_rounds
            )));
        }
        for (what, path) in [("population table", &self.table_path), ("assay file", &self.assay_path)] {
            if !path.is_file() {
                return Err(Error::Config(format!("{what} not found: {}", path.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_inputs(dir: &Path) -> (String, String) {
        let table = dir.join("pop.csv");
        std::fs::write(
            &table,
            "x1,incidence,prevalence,prop_cross,prop_target\n0,0.02,0.2,1.0,1.0\n",
        )
        .unwrap();
        let assays = dir.join("assays.csv");
        std::fs::write(
            &assays,
            "subtype,model,shape,rate,plateau,cut,t_star\n,gamma_survival,11.40,23.66,,,2.0\n",
        )
        .unwrap();
        ("pop.csv".into(), "assays.csv".into())
    }

    fn base_toml(mode: &str, estimators: &str) -> String {
        format!(
            "[experiment]\nname = \"demo\"\nestimators = \"{estimators}\"\n\
             replications = 3\nseed = 9\nsettings = \"5000:2500, 2500:1000\"\n\
             [population]\ntable = \"pop.csv\"\nassays = \"assays.csv\"\n\
             [simulate]\nmode = \"{mode}\"\n"
        )
    }

    #[test]
    fn parses_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let config = ExperimentConfig::from_text(
            &base_toml("external", "standard, extended-external"),
            dir.path(),
        )
        .unwrap();
        assert_eq!(config.settings, vec![
            SampleSizes { cross: 5000, target: 2500 },
            SampleSizes { cross: 2500, target: 1000 },
        ]);
        assert_eq!(config.estimators, vec![EstimatorId::Standard, EstimatorId::ExtendedExternal]);
        assert_eq!(config.bootstrap_rounds, 500);
        assert_eq!(config.schemes, vec![BootstrapScheme::Nonparametric, BootstrapScheme::Parametric]);
        assert_eq!(config.interval, IntervalMethod::LognormalNormalApprox);
        assert_eq!(config.encoding, FeatureEncoding::MainEffects);
        assert!((config.followup_years - 1.0).abs() < 1e-15);
        assert_eq!(config.table_path, dir.path().join("pop.csv"));
    }

    #[test]
    fn unknown_estimator_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let err = ExperimentConfig::from_text(&base_toml("external", "standrd"), dir.path())
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert!(err.to_string().contains("standrd"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_section_key_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let text = base_toml("external", "standard") + "typo_key = 3\n";
        let err = ExperimentConfig::from_text(&text, dir.path()).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn estimator_mode_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let err = ExperimentConfig::from_text(
            &base_toml("external", "extended-internal"),
            dir.path(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("internal"), "{err}");

        let err = ExperimentConfig::from_text(
            &base_toml("internal", "extended-external"),
            dir.path(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("external"), "{err}");
    }

    #[test]
    fn efficacy_needs_internal_mode() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let text = base_toml("external", "standard") + "efficacy = 0.5\n";
        let err = ExperimentConfig::from_text(&text, dir.path()).unwrap_err();
        assert!(err.to_string().contains("internal"), "{err}");

        let text = base_toml("internal", "standard") + "efficacy = 0.5\n";
        let config = ExperimentConfig::from_text(&text, dir.path()).unwrap();
        assert_eq!(config.efficacy, Some(0.5));
    }

    #[test]
    fn partial_testing_demands_modified_estimators() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let text = base_toml("cross_sectional", "standard") + "recency_tested_prob = 0.8\n";
        let err = ExperimentConfig::from_text(&text, dir.path()).unwrap_err();
        assert!(err.to_string().contains("modified"), "{err}");

        let text = base_toml("cross_sectional", "modified-standard") + "recency_tested_prob = 0.8\n";
        assert!(ExperimentConfig::from_text(&text, dir.path()).is_ok());
    }

    #[test]
    fn missing_population_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        std::fs::remove_file(dir.path().join("pop.csv")).unwrap();
        let err =
            ExperimentConfig::from_text(&base_toml("external", "standard"), dir.path()).unwrap_err();
        assert!(err.to_string().contains("pop.csv"), "{err}");
    }

    #[test]
    fn bad_settings_shapes_are_rejected() {
        assert!(parse_settings("5000").is_err());
        assert!(parse_settings("a:b").is_err());
        assert!(parse_settings("").unwrap().is_empty());
        assert_eq!(
            parse_settings(" 10:5 ").unwrap(),
            vec![SampleSizes { cross: 10, target: 5 }]
        );
    }

    #[test]
    fn load_records_source_hash() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let path = dir.path().join("run.toml");
        let text = base_toml("external", "standard");
        std::fs::write(&path, &text).unwrap();
        let config = ExperimentConfig::load(&path).unwrap();
        assert_eq!(config.source_sha256, Some(sha256_hex(text.as_bytes())));
        let round_trip = ExperimentConfig::from_text(&text, dir.path()).unwrap();
        assert_eq!(config.table_path, round_trip.table_path);
    }
}
