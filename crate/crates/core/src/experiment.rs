//! Monte Carlo replication harness: simulate, estimate, bootstrap, and
//! summarize bias, empirical SE, mean SE estimate, and coverage per
//! estimator and sample-size setting.

use crate::assay::{estimate_frr, estimate_mdri, CalibrationPanel};
use crate::bootstrap::{self, BootstrapCi, BootstrapInputs, BootstrapPlan, BootstrapScheme, RoundData};
use crate::config::{scheme_name, EstimatorId, ExperimentConfig, SampleSizes, SimulationMode};
use crate::error::{Error, Result};
use crate::estimators::{
    counts_by_subtype, incidence_external_target, incidence_internal_target, kassanjee,
    modified_internal, modified_kassanjee, subtype_external, subtype_internal, subtype_old,
    subtype_stratified, CalibrationSet, IncidenceResult, SubtypeCalibration,
};
use crate::io::{read_assays, read_population_table, SubtypeRegistry};
use crate::records::{CountSummary, SubjectRecord, SubtypeId};
use crate::rng::RngStream;
use crate::simulate::{
    apply_recency_missingness, enrollment_probabilities, gen_calibration_panel,
    gen_cross_sectional, gen_external_target, gen_internal_enrollment, simulate_trial,
    truncate_enrollment, PopulationTable, SubtypeAssays, TrialOutcome,
};
use crate::weights::FeatureEncoding;
use rayon::prelude::*;
use serde::Serialize;
use std::fmt::Write as _;

/// Config plus the parsed files it references.
#[derive(Debug)]
pub struct ExperimentData {
    pub config: ExperimentConfig,
    pub table: PopulationTable,
    pub assays: SubtypeAssays,
    pub covariate_names: Vec<String>,
    pub registry: SubtypeRegistry,
}

/// Parses the files a config references and checks they fit together.
pub fn load(config: ExperimentConfig) -> Result<ExperimentData> {
    let mut registry = SubtypeRegistry::default();
    let (table, covariate_names) = read_population_table(&config.table_path, &mut registry)?;
    let assays = read_assays(&config.assay_path, &mut registry)?;
    let t_star = assays.t_star();
    table.validate_feasibility(t_star)?;
    if config.tail_cap <= t_star {
        return Err(Error::Config(format!(
            "tail_cap {} must exceed the recency cutoff {t_star}",
            config.tail_cap
        )));
    }
    let subtype_label = |subtype: Option<SubtypeId>| -> String {
        match subtype {
            None => "(none)".into(),
            Some(id) => registry.label(id).unwrap_or("(unregistered)").to_string(),
        }
    };
    for row in table.rows() {
        if assays.get(row.subtype).is_err() {
            return Err(Error::Config(format!(
                "the population table uses subtype {} but the assay file has no entry for it",
                subtype_label(row.subtype)
            )));
        }
    }
    if config.estimators.iter().any(|e| e.needs_subtypes())
        && table.rows().iter().any(|r| r.subtype.is_none())
    {
        return Err(Error::Config(
            "a subtype estimator is configured but the population table has rows without a subtype"
                .into(),
        ));
    }
    Ok(ExperimentData { config, table, assays, covariate_names, registry })
}

/// The estimand every estimator is compared with: mean incidence over the
/// mode's target population. In internal mode that population is defined
/// by the enrollment probabilities, so it depends on the sample sizes.
pub fn setting_truth(data: &ExperimentData, sizes: SampleSizes) -> Result<f64> {
    match data.config.mode {
        SimulationMode::CrossSectional => Ok(data.table.cross_mean_incidence()),
        SimulationMode::External => Ok(data.table.target_mean_incidence()),
        SimulationMode::Internal => {
            let raw = enrollment_probabilities(&data.table, sizes.cross, sizes.target)?;
            let probs = truncate_enrollment(&raw);
            let mut num = 0.0;
            let mut den = 0.0;
            for (row, e) in data.table.rows().iter().zip(&probs) {
                let mass = e * (1.0 - row.prevalence) * row.prop_cross;
                num += mass * row.incidence;
                den += mass;
            }
            if den <= 0.0 {
                return Err(Error::Estimate("no cell can enroll anyone; the internal estimand is undefined".into()));
            }
            Ok(num / den)
        }
    }
}

/// Runs one estimator on one dataset. The shared entry point for the CLI,
/// the replication harness, and every bootstrap round.
pub fn evaluate_estimator(
    id: EstimatorId,
    cross: &[SubjectRecord],
    target: Option<&[SubjectRecord]>,
    cal: &CalibrationSet,
    encoding: FeatureEncoding,
) -> Result<IncidenceResult> {
    let t_star = cal.t_star;
    let single = || -> Result<&SubtypeCalibration> {
        if cal.strata.len() == 1 {
            Ok(&cal.strata[0])
        } else {
            Err(Error::Precondition(format!(
                "estimator {} uses a single assay calibration but {} strata are defined; \
                 use a subtype estimator",
                id.name(),
                cal.strata.len()
            )))
        }
    };
    let need_target = || -> Result<&[SubjectRecord]> {
        target.ok_or_else(|| {
            Error::Precondition(format!("estimator {} needs an external target sample", id.name()))
        })
    };
    match id {
        EstimatorId::Standard => {
            let c = single()?;
            kassanjee(&CountSummary::from_records(cross)?, &c.mdri, &c.frr, t_star)
        }
        EstimatorId::ExtendedExternal => {
            let c = single()?;
            incidence_external_target(cross, need_target()?, &c.mdri, &c.frr, t_star, encoding)
        }
        EstimatorId::ExtendedInternal => {
            let c = single()?;
            incidence_internal_target(cross, &c.mdri, &c.frr, t_star, encoding)
        }
        EstimatorId::SubtypePooled => subtype_old(&counts_by_subtype(cross)?, cal),
        EstimatorId::SubtypeStratified => subtype_stratified(&counts_by_subtype(cross)?, cal),
        EstimatorId::SubtypeExternal => subtype_external(cross, need_target()?, cal, encoding),
        EstimatorId::SubtypeInternal => subtype_internal(cross, cal, encoding),
        EstimatorId::ModifiedStandard => {
            let c = single()?;
            modified_kassanjee(&CountSummary::from_records(cross)?, &c.mdri, &c.frr, t_star)
        }
        EstimatorId::ModifiedInternal => {
            let c = single()?;
            modified_internal(cross, &c.mdri, &c.frr, t_star, encoding)
        }
    }
}

/// One reported quantity: an incidence estimate, or the prevention
/// efficacy whose counterfactual that estimator provides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    Incidence(EstimatorId),
    Efficacy(EstimatorId),
}

impl OutputKind {
    pub fn label(self) -> String {
        match self {
            OutputKind::Incidence(e) => e.name().to_string(),
            OutputKind::Efficacy(e) => format!("efficacy-{}", e.name()),
        }
    }
}

fn output_list(config: &ExperimentConfig) -> Vec<OutputKind> {
    let mut outputs: Vec<OutputKind> =
        config.estimators.iter().map(|e| OutputKind::Incidence(*e)).collect();
    if config.efficacy.is_some() {
        outputs.extend(config.estimators.iter().map(|e| OutputKind::Efficacy(*e)));
    }
    outputs
}

pub struct OutputCell {
    pub output: OutputKind,
    pub estimate: std::result::Result<f64, String>,
    pub intervals: Vec<(BootstrapScheme, std::result::Result<BootstrapCi, String>)>,
}

pub struct Replication {
    pub setting: usize,
    pub replication: u32,
    pub cells: Vec<OutputCell>,
}

/// Efficacy is bootstrapped as the positive incidence ratio
/// trial/counterfactual so log-scale intervals apply; the interval for
/// 1 − ratio flips the endpoints back.
fn flip_ratio_interval(ci: BootstrapCi) -> BootstrapCi {
    BootstrapCi { lo: 1.0 - ci.hi, hi: 1.0 - ci.lo, ..ci }
}

/// One replication's simulated inputs.
pub struct Dataset {
    pub cross: Vec<SubjectRecord>,
    pub target: Option<Vec<SubjectRecord>>,
    pub trial: Option<TrialOutcome>,
    pub panels: Vec<(Option<SubtypeId>, CalibrationPanel)>,
}

/// Simulates one replication's data. The stream layout depends only on
/// (seed, setting, rep), so dataset emission and the replication harness
/// produce identical bytes for the same coordinates.
pub fn generate_dataset(
    data: &ExperimentData,
    setting: usize,
    sizes: SampleSizes,
    rep: u32,
) -> Result<Dataset> {
    let config = &data.config;
    let root = RngStream::new(config.seed, ((setting as u64) << 32) | u64::from(rep));

    let mut gen_rng = root.child(0);
    let mut cross =
        gen_cross_sectional(&data.table, sizes.cross, &data.assays, config.tail_cap, &mut gen_rng)?;
    let mut target: Option<Vec<SubjectRecord>> = None;
    let mut trial: Option<TrialOutcome> = None;
    match config.mode {
        SimulationMode::CrossSectional => {}
        SimulationMode::External => {
            let mut rng = root.child(1);
            target = Some(gen_external_target(&data.table, sizes.target, &mut rng));
        }
        SimulationMode::Internal => {
            let raw = enrollment_probabilities(&data.table, sizes.cross, sizes.target)?;
            let probs = truncate_enrollment(&raw);
            let mut rng = root.child(1);
            gen_internal_enrollment(&mut cross, &data.table, &probs, &mut rng)?;
            if let Some(e) = config.efficacy {
                let mut rng = root.child(2);
                trial = Some(simulate_trial(&cross, &data.table, e, config.followup_years, &mut rng)?);
            }
        }
    }
    if config.recency_tested_prob < 1.0 {
        let mut rng = root.child(3);
        apply_recency_missingness(&mut cross, config.recency_tested_prob, &mut rng)?;
    }
    let mut panels: Vec<(Option<SubtypeId>, CalibrationPanel)> = Vec::new();
    for (k, (subtype, assay)) in data.assays.entries().iter().enumerate() {
        let mut panel_rng = root.child(4 + 2 * k as u64);
        let panel = gen_calibration_panel(
            assay,
            config.panel_subjects,
            config.panel_long_infected,
            config.tail_cap,
            &mut panel_rng,
        )?;
        panels.push((*subtype, panel));
    }
    Ok(Dataset { cross, target, trial, panels })
}

fn run_replication(
    data: &ExperimentData,
    setting: usize,
    sizes: SampleSizes,
    rep: u32,
) -> Result<Replication> {
    let config = &data.config;
    let root = RngStream::new(config.seed, ((setting as u64) << 32) | u64::from(rep));
    let Dataset { cross, target, trial, panels } = generate_dataset(data, setting, sizes, rep)?;

    // Calibration panels are fresh every replication, so the summary
    // carries MDRI/FRR estimation noise the way the estimators face it.
    let t_star = data.assays.t_star();
    let mut strata = Vec::new();
    for (k, (subtype, panel)) in panels.iter().enumerate() {
        let mut mdri_rng = root.child(5 + 2 * k as u64);
        let mdri = estimate_mdri(panel, t_star, &mut mdri_rng)?;
        let frr = estimate_frr(panel)?;
        strata.push(SubtypeCalibration { subtype: *subtype, mdri, frr });
    }
    let calibration = CalibrationSet { t_star, strata };

    let point: Vec<Result<IncidenceResult>> = config
        .estimators
        .iter()
        .map(|id| evaluate_estimator(*id, &cross, target.as_deref(), &calibration, config.encoding))
        .collect();

    let mut cells: Vec<OutputCell> = Vec::new();
    for (id, result) in config.estimators.iter().zip(&point) {
        cells.push(OutputCell {
            output: OutputKind::Incidence(*id),
            estimate: result.as_ref().map(|r| r.estimate).map_err(|e| e.to_string()),
            intervals: Vec::new(),
        });
    }
    if let Some(t) = &trial {
        for (id, result) in config.estimators.iter().zip(&point) {
            let estimate = match result {
                Ok(r) => crate::estimators::prevention_efficacy(t.infections, t.person_years, r)
                    .map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            };
            cells.push(OutputCell { output: OutputKind::Efficacy(*id), estimate, intervals: Vec::new() });
        }
    }

    if !config.schemes.is_empty() {
        let inputs = BootstrapInputs {
            cross: &cross,
            target: target.as_deref(),
            panels: &panels,
            calibration: &calibration,
            trial: trial.as_ref().map(|t| t.subjects.as_slice()),
        };
        let n_outputs = cells.len();
        let eval = |round: &RoundData| -> Vec<Result<f64>> {
            let per_estimator: Vec<Result<IncidenceResult>> = config
                .estimators
                .iter()
                .map(|id| {
                    evaluate_estimator(
                        *id,
                        &round.cross,
                        round.target.as_deref(),
                        &round.calibration,
                        config.encoding,
                    )
                })
                .collect();
            let mut values: Vec<Result<f64>> = per_estimator
                .iter()
                .map(|r| match r {
                    Ok(x) => Ok(x.estimate),
                    Err(e) => Err(Error::Estimate(e.to_string())),
                })
                .collect();
            if let Some(t) = &round.trial {
                for r in &per_estimator {
                    values.push(match r {
                        Ok(x) if x.estimate > 0.0 => {
                            Ok((t.infections as f64 / t.person_years) / x.estimate)
                        }
                        Ok(x) => Err(Error::Estimate(format!(
                            "nonpositive counterfactual incidence {}",
                            x.estimate
                        ))),
                        Err(e) => Err(Error::Estimate(e.to_string())),
                    });
                }
            }
            values
        };
        for (s, scheme) in config.schemes.iter().enumerate() {
            let plan = BootstrapPlan {
                scheme: *scheme,
                rounds: config.bootstrap_rounds,
                interval: config.interval,
                ..BootstrapPlan::default()
            };
            let rng = root.child(1_000_000 + s as u64);
            match bootstrap::run(&plan, &inputs, n_outputs, &eval, &rng) {
                Ok(cis) => {
                    for (cell, ci) in cells.iter_mut().zip(cis) {
                        let ci = match cell.output {
                            OutputKind::Efficacy(_) => flip_ratio_interval(ci),
                            OutputKind::Incidence(_) => ci,
                        };
                        cell.intervals.push((*scheme, Ok(ci)));
                    }
                }
                Err(e) => {
                    let message = e.to_string();
                    for cell in &mut cells {
                        cell.intervals.push((*scheme, Err(message.clone())));
                    }
                }
            }
        }
    }

    Ok(Replication { setting, replication: rep, cells })
}

fn failed_replication(config: &ExperimentConfig, setting: usize, rep: u32, err: &Error) -> Replication {
    let cells = output_list(config)
        .into_iter()
        .map(|output| OutputCell { output, estimate: Err(err.to_string()), intervals: Vec::new() })
        .collect();
    Replication { setting, replication: rep, cells }
}

/// One replication's result for one output, as a machine-readable row.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub setting: usize,
    pub replication: u32,
    pub output: String,
    pub estimate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub intervals: Vec<IntervalRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntervalRow {
    pub scheme: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failures: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonpositive: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unreliable: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// The aggregate row printed in the report table.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub experiment: String,
    pub setting: usize,
    pub output: String,
    pub truth: f64,
    pub replications: u32,
    /// Replications whose point estimate was produced.
    pub used: u32,
    pub mean: f64,
    pub bias_x100: f64,
    pub se_x100: f64,
    pub schemes: Vec<SchemeSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SchemeSummary {
    pub scheme: &'static str,
    /// Replications that produced an interval under this scheme.
    pub with_interval: u32,
    pub see_x100: f64,
    /// Percent of intervals containing the truth.
    pub coverage: f64,
    pub unreliable: u32,
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub table_text: String,
}

fn result_rows(config: &ExperimentConfig, rep: &Replication) -> Vec<ResultRow> {
    rep.cells
        .iter()
        .map(|cell| {
            let intervals = cell
                .intervals
                .iter()
                .map(|(scheme, ci)| match ci {
                    Ok(ci) => IntervalRow {
                        scheme: scheme_name(*scheme),
                        lo: Some(ci.lo),
                        hi: Some(ci.hi),
                        se: Some(ci.se),
                        failures: Some(ci.failures),
                        nonpositive: Some(ci.nonpositive),
                        unreliable: Some(ci.unreliable),
                        error: None,
                    },
                    Err(e) => IntervalRow {
                        scheme: scheme_name(*scheme),
                        lo: None,
                        hi: None,
                        se: None,
                        failures: None,
                        nonpositive: None,
                        unreliable: None,
                        error: Some(e.clone()),
                    },
                })
                .collect();
            ResultRow {
                experiment: config.name.clone(),
                setting: rep.setting,
                replication: rep.replication,
                output: cell.output.label(),
                estimate: cell.estimate.as_ref().ok().copied(),
                error: cell.estimate.as_ref().err().cloned(),
                intervals,
            }
        })
        .collect()
}

fn mean_and_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarize_setting(
    config: &ExperimentConfig,
    setting: usize,
    truth_incidence: f64,
    reps: &[Replication],
) -> Vec<SummaryRow> {
    let outputs = output_list(config);
    let mut rows = Vec::with_capacity(outputs.len());
    for (i, output) in outputs.iter().enumerate() {
        let truth = match output {
            OutputKind::Incidence(_) => truth_incidence,
            OutputKind::Efficacy(_) => config.efficacy.expect("efficacy outputs imply a trial"),
        };
        let estimates: Vec<f64> = reps
            .iter()
            .filter_map(|r| r.cells[i].estimate.as_ref().ok().copied())
            .filter(|v| v.is_finite())
            .collect();
        let (mean, sd) = mean_and_sd(&estimates);
        let mut schemes = Vec::with_capacity(config.schemes.len());
        for scheme in &config.schemes {
            let cis: Vec<&BootstrapCi> = reps
                .iter()
                .filter_map(|r| {
                    r.cells[i]
                        .intervals
                        .iter()
                        .find(|(s, _)| s == scheme)
                        .and_then(|(_, ci)| ci.as_ref().ok())
                })
                .collect();
            let covered = cis.iter().filter(|ci| ci.lo <= truth && truth <= ci.hi).count();
            let (mean_se, _) = mean_and_sd(&cis.iter().map(|ci| ci.se).collect::<Vec<_>>());
            schemes.push(SchemeSummary {
                scheme: scheme_name(*scheme),
                with_interval: cis.len() as u32,
                see_x100: mean_se * 100.0,
                coverage: if cis.is_empty() {
                    f64::NAN
                } else {
                    100.0 * covered as f64 / cis.len() as f64
                },
                unreliable: cis.iter().filter(|ci| ci.unreliable).count() as u32,
            });
        }
        rows.push(SummaryRow {
            experiment: config.name.clone(),
            setting,
            output: output.label(),
            truth,
            replications: config.replications,
            used: estimates.len() as u32,
            mean,
            bias_x100: (mean - truth) * 100.0,
            se_x100: sd * 100.0,
            schemes,
        });
    }
    rows
}

fn render_table(config: &ExperimentConfig, summary: &[SummaryRow]) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "experiment: {}", config.name);
    let mut header = format!(
        "{:<8} {:<28} {:>6} {:>6} {:>9} {:>8}",
        "setting", "output", "reps", "used", "bias*100", "se*100"
    );
    for scheme in &config.schemes {
        let name = scheme_name(*scheme);
        header.push_str(&format!("   {:>22} {:>6}", format!("see*100 ({name})"), "cov%"));
    }
    let _ = writeln!(text, "{header}");
    let fmt = |v: f64, width: usize, digits: usize| -> String {
        if v.is_finite() {
            format!("{v:>width$.digits$}")
        } else {
            format!("{:>width$}", "-")
        }
    };
    for row in summary {
        let mut line = format!(
            "{:<8} {:<28} {:>6} {:>6} {} {}",
            row.setting,
            row.output,
            row.replications,
            row.used,
            fmt(row.bias_x100, 9, 3),
            fmt(row.se_x100, 8, 3),
        );
        for s in &row.schemes {
            line.push_str(&format!("   {} {}", fmt(s.see_x100, 22, 3), fmt(s.coverage, 6, 1)));
        }
        let _ = writeln!(text, "{line}");
    }
    text
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("RECENCY_THREADS") {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| {
                Error::Config(format!("RECENCY_THREADS must be a positive integer, got {raw:?}"))
            })?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot build the worker pool: {e}")))
}

/// Runs the configured settings, or just one when `only_setting` holds its
/// 1-based index. Replications are independent streams of the experiment
/// seed, so results do not depend on the worker count.
pub fn run(data: &ExperimentData, only_setting: Option<usize>) -> Result<ExperimentOutcome> {
    let config = &data.config;
    if let Some(s) = only_setting {
        if s < 1 || s > config.settings.len() {
            return Err(Error::Config(format!(
                "setting {s} is out of range; the experiment defines {} setting(s)",
                config.settings.len()
            )));
        }
    }
    let pool = thread_pool()?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (si, sizes) in config.settings.iter().enumerate() {
        let setting = si + 1;
        if only_setting.is_some_and(|s| s != setting) {
            continue;
        }
        let truth = setting_truth(data, *sizes)?;
        let reps: Vec<Replication> = pool.install(|| {
            (0..config.replications)
                .into_par_iter()
                .map(|rep| {
                    run_replication(data, setting, *sizes, rep)
                        .unwrap_or_else(|e| failed_replication(config, setting, rep, &e))
                })
                .collect()
        });
        for rep in &reps {
            rows.extend(result_rows(config, rep));
        }
        summary.extend(summarize_setting(config, setting, truth, &reps));
    }
    let table_text = render_table(config, &summary);
    Ok(ExperimentOutcome { rows, summary, table_text })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootstrap::IntervalMethod;
    use std::path::Path;

    fn write_single_cell_inputs(dir: &Path) {
        std::fs::write(
            dir.join("pop.csv"),
            "x1,incidence,prevalence,prop_cross,prop_target\n\
             0,0.01,0.15,0.6,0.2\n1,0.04,0.25,0.4,0.8\n",
        )
        .unwrap();
        std::fs::write(
            dir.join("assays.csv"),
            "subtype,model,shape,rate,plateau,cut,t_star\n,gamma_survival,11.40,23.66,,,2.0\n",
        )
        .unwrap();
    }

    fn tiny_config(dir: &Path, mode: SimulationMode, estimators: &[EstimatorId]) -> ExperimentConfig {
        ExperimentConfig {
            name: "tiny".into(),
            estimators: estimators.to_vec(),
            replications: 3,
            seed: 11,
            settings: vec![SampleSizes { cross: 400, target: 150 }],
            table_path: dir.join("pop.csv"),
            assay_path: dir.join("assays.csv"),
            mode,
            efficacy: None,
            followup_years: 1.0,
            tail_cap: 10.0,
            panel_subjects: 40,
            panel_long_infected: 120,
            recency_tested_prob: 1.0,
            encoding: FeatureEncoding::MainEffects,
            bootstrap_rounds: 8,
            schemes: vec![BootstrapScheme::Nonparametric, BootstrapScheme::Parametric],
            interval: IntervalMethod::LognormalNormalApprox,
            source_sha256: None,
        }
    }

    #[test]
    fn internal_truth_hand_value() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("pop.csv"),
            "x1,incidence,prevalence,prop_cross,prop_target\n\
             0,0.01,0.2,0.5,0.2\n1,0.03,0.2,0.5,0.8\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("assays.csv"),
            "subtype,model,shape,rate,plateau,cut,t_star\n,gamma_survival,11.40,23.66,,,2.0\n",
        )
        .unwrap();
        let mut config = tiny_config(dir.path(), SimulationMode::Internal, &[EstimatorId::Standard]);
        config.settings = vec![SampleSizes { cross: 1000, target: 100 }];
        let data = load(config).unwrap();
        // Raw enrollment 0.05 and 0.2; no truncation; weights e(1-p)g give
        // (0.02*0.01 + 0.08*0.03) / 0.1.
        let truth = setting_truth(&data, data.config.settings[0]).unwrap();
        assert!((truth - 0.026).abs() < 1e-12, "{truth}");

        let external = setting_truth(
            &load(tiny_config(dir.path(), SimulationMode::External, &[EstimatorId::Standard])).unwrap(),
            SampleSizes { cross: 1000, target: 100 },
        )
        .unwrap();
        assert!((external - (0.2 * 0.01 + 0.8 * 0.03)).abs() < 1e-12);
    }

    #[test]
    fn tiny_experiment_runs_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        write_single_cell_inputs(dir.path());
        let config = tiny_config(
            dir.path(),
            SimulationMode::External,
            &[EstimatorId::Standard, EstimatorId::ExtendedExternal],
        );
        let data = load(config).unwrap();
        let outcome = run(&data, None).unwrap();
        assert_eq!(outcome.rows.len(), 3 * 2);
        assert_eq!(outcome.summary.len(), 2);
        for row in &outcome.summary {
            assert_eq!(row.used, 3, "all replications should estimate: {row:?}");
            assert_eq!(row.schemes.len(), 2);
            for s in &row.schemes {
                assert!(s.with_interval <= 3);
                assert!(s.coverage.is_nan() || (0.0..=100.0).contains(&s.coverage));
            }
        }
        assert!(outcome.table_text.contains("extended-external"), "{}", outcome.table_text);
        assert!(outcome.table_text.contains("parametric"), "{}", outcome.table_text);
    }

    #[test]
    fn same_seed_reproduces_every_row() {
        let dir = tempfile::tempdir().unwrap();
        write_single_cell_inputs(dir.path());
        let make = || {
            let config =
                tiny_config(dir.path(), SimulationMode::External, &[EstimatorId::ExtendedExternal]);
            run(&load(config).unwrap(), None).unwrap()
        };
        let a = make();
        let b = make();
        let to_json = |o: &ExperimentOutcome| serde_json::to_string(&o.rows).unwrap();
        assert_eq!(to_json(&a), to_json(&b));
        assert_eq!(a.table_text, b.table_text);
    }

    #[test]
    fn setting_filter_preserves_labels_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        write_single_cell_inputs(dir.path());
        let mut config =
            tiny_config(dir.path(), SimulationMode::External, &[EstimatorId::ExtendedExternal]);
        config.settings =
            vec![SampleSizes { cross: 400, target: 150 }, SampleSizes { cross: 300, target: 100 }];
        let data = load(config).unwrap();
        let full = run(&data, None).unwrap();
        let second = run(&data, Some(2)).unwrap();
        assert!(second.rows.iter().all(|r| r.setting == 2));
        let full_second: Vec<String> = full
            .rows
            .iter()
            .filter(|r| r.setting == 2)
            .map(|r| serde_json::to_string(r).unwrap())
            .collect();
        let filtered: Vec<String> =
            second.rows.iter().map(|r| serde_json::to_string(r).unwrap()).collect();
        assert_eq!(full_second, filtered);
        let err = run(&data, Some(3)).unwrap_err();
        assert!(err.to_string().contains("out of range"), "{err}");
    }

    #[test]
    fn efficacy_outputs_appear_in_internal_mode() {
        let dir = tempfile::tempdir().unwrap();
        write_single_cell_inputs(dir.path());
        let mut config = tiny_config(
            dir.path(),
            SimulationMode::Internal,
            &[EstimatorId::Standard, EstimatorId::ExtendedInternal],
        );
        config.efficacy = Some(0.5);
        config.settings = vec![SampleSizes { cross: 600, target: 200 }];
        let data = load(config).unwrap();
        let outcome = run(&data, None).unwrap();
        let labels: Vec<&str> = outcome.summary.iter().map(|r| r.output.as_str()).collect();
        assert_eq!(
            labels,
            ["standard", "extended-internal", "efficacy-standard", "efficacy-extended-internal"]
        );
        let eff = &outcome.summary[3];
        assert!((eff.truth - 0.5).abs() < 1e-15);
        assert!(eff.used > 0);
        for row in &outcome.rows {
            for ci in &row.intervals {
                if let (Some(lo), Some(hi)) = (ci.lo, ci.hi) {
                    assert!(lo <= hi, "flipped interval must stay ordered: {row:?}");
                }
            }
        }
    }

    #[test]
    fn subtype_estimators_demand_subtyped_tables() {
        let dir = tempfile::tempdir().unwrap();
        write_single_cell_inputs(dir.path());
        let config =
            tiny_config(dir.path(), SimulationMode::CrossSectional, &[EstimatorId::SubtypeStratified]);
        let err = load(config).unwrap_err();
        assert!(err.to_string().contains("subtype"), "{err}");
    }

    #[test]
    fn missing_assay_stratum_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("pop.csv"),
            "x1,subtype,incidence,prevalence,prop_cross,prop_target\n\
             0,A,0.02,0.2,0.5,0.5\n0,B,0.03,0.2,0.5,0.5\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("assays.csv"),
            "subtype,model,shape,rate,plateau,cut,t_star\nA,gamma_survival,11.40,23.66,,,2.0\n",
        )
        .unwrap();
        let config = tiny_config(dir.path(), SimulationMode::CrossSectional, &[EstimatorId::Standard]);
        let err = load(config).unwrap_err();
        assert!(err.to_string().contains('B'), "{err}");
    }
}
