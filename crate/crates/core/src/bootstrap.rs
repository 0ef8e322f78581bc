//! Bootstrap confidence intervals for incidence-type estimates.
//!
//! Two schemes cover the two kinds of calibration knowledge. The
//! nonparametric scheme resamples whatever raw data exist: cross-sectional
//! records and target records by row, calibration panels by subject (their
//! long-infected cohorts by row), refitting the assay quantities in every
//! round. The parametric scheme keeps the record resampling but replaces
//! panel refits with lognormal draws of the calibration quantities around
//! their published point estimates and confidence intervals.
//!
//! Each round runs on its own derived random stream, so a round's draws do
//! not depend on how many rounds precede it.

use crate::assay::{estimate_frr, estimate_mdri_point, CalibrationEstimate, CalibrationPanel, CalibrationQuantity, PanelVisit, Z_95};
use crate::error::{Error, Result};
use crate::estimators::{CalibrationSet, SubtypeCalibration};
use crate::records::{SubjectRecord, SubtypeId};
use crate::rng::RngStream;
use crate::simulate::TrialSubject;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapScheme {
    Nonparametric,
    Parametric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    /// exp(mean ± z·sd) of the log replicates.
    LognormalNormalApprox,
    /// Percentiles of the log replicates, which are the percentiles of the
    /// replicates themselves.
    LogPercentile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapPlan {
    pub scheme: BootstrapScheme,
    pub rounds: usize,
    pub resample_cross: bool,
    pub resample_target: bool,
    pub resample_panels: bool,
    pub interval: IntervalMethod,
}

impl Default for BootstrapPlan {
    fn default() -> Self {
        Self {
            scheme: BootstrapScheme::Nonparametric,
            rounds: 500,
            resample_cross: true,
            resample_target: true,
            resample_panels: true,
            interval: IntervalMethod::LognormalNormalApprox,
        }
    }
}

impl BootstrapPlan {
    pub fn validate(&self) -> Result<()> {
        if self.rounds < 2 {
            return Err(Error::Precondition(format!(
                "at least 2 bootstrap rounds are needed, got {}",
                self.rounds
            )));
        }
        Ok(())
    }
}

/// Everything one bootstrap run may resample. `calibration` always carries
/// the full-data estimates; `panels` may be empty when the plan does not
/// refit them.
pub struct BootstrapInputs<'a> {
    pub cross: &'a [SubjectRecord],
    pub target: Option<&'a [SubjectRecord]>,
    pub panels: &'a [(Option<SubtypeId>, CalibrationPanel)],
    pub calibration: &'a CalibrationSet,
    pub trial: Option<&'a [TrialSubject]>,
}

/// One round's view of the data, handed to the evaluation closure.
pub struct RoundData {
    pub cross: Vec<SubjectRecord>,
    pub target: Option<Vec<SubjectRecord>>,
    pub calibration: CalibrationSet,
    pub trial: Option<ResampledTrial>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampledTrial {
    pub infections: u64,
    pub person_years: f64,
}

/// Interval and dispersion summary for one bootstrapped output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub lo: f64,
    pub hi: f64,
    /// Standard deviation of the successful replicates, natural scale.
    pub se: f64,
    pub rounds: usize,
    pub failures: usize,
    /// Replicates at or below zero; they carry no log, so the interval is
    /// built from the positive ones.
    pub nonpositive: usize,
    /// More than 10% of rounds failed.
    pub unreliable: bool,
}

/// How a calibration quantity is drawn in the parametric scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibrationDraw {
    Fixed(f64),
    Lognormal { mu: f64, sigma: f64 },
}

impl CalibrationDraw {
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match *self {
            CalibrationDraw::Fixed(v) => v,
            CalibrationDraw::Lognormal { mu, sigma } => (mu + sigma * rng.normal()).exp(),
        }
    }
}

/// Lognormal whose median is the point estimate and whose 95% interval has
/// the width of the reported one: mu = ln(point), sigma = ln(hi/lo)/(2z).
/// A zero point estimate (a never-failing assay) is held fixed at zero.
pub fn lognormal_from_ci(est: &CalibrationEstimate) -> Result<CalibrationDraw> {
    if est.point == 0.0 {
        return Ok(CalibrationDraw::Fixed(0.0));
    }
    if est.ci_lo <= 0.0 {
        return Err(Error::Precondition(format!(
            "cannot place a lognormal on ({}, {}): the lower bound must be positive",
            est.ci_lo, est.ci_hi
        )));
    }
    let mu = est.point.ln();
    let sigma = (est.ci_hi / est.ci_lo).ln() / (2.0 * Z_95);
    Ok(CalibrationDraw::Lognormal { mu, sigma })
}

fn resample_records(records: &[SubjectRecord], rng: &mut RngStream) -> Vec<SubjectRecord> {
    (0..records.len()).map(|_| records[rng.index(records.len())]).collect()
}

/// Panel resample: longitudinal subjects with replacement (a subject keeps
/// all their visits), long-infected rows with replacement. Resampled rows
/// get fresh subject ids so repeated draws stay distinct subjects.
pub fn resample_panel(panel: &CalibrationPanel, rng: &mut RngStream) -> CalibrationPanel {
    let mut by_subject: BTreeMap<u32, Vec<&PanelVisit>> = BTreeMap::new();
    for v in &panel.longitudinal {
        by_subject.entry(v.subject_id).or_default().push(v);
    }
    let subjects: Vec<&Vec<&PanelVisit>> = by_subject.values().collect();
    let mut longitudinal = Vec::with_capacity(panel.longitudinal.len());
    for new_id in 0..subjects.len() {
        for visit in subjects[rng.index(subjects.len())] {
            longitudinal.push(PanelVisit { subject_id: new_id as u32, ..**visit });
        }
    }
    let long_infected = (0..panel.long_infected.len())
        .map(|i| {
            let mut s = panel.long_infected[rng.index(panel.long_infected.len())];
            s.subject_id = i as u32;
            s
        })
        .collect();
    CalibrationPanel { longitudinal, long_infected }
}

fn resample_trial(subjects: &[TrialSubject], rng: &mut RngStream) -> ResampledTrial {
    let mut out = ResampledTrial { infections: 0, person_years: 0.0 };
    for _ in 0..subjects.len() {
        let s = subjects[rng.index(subjects.len())];
        out.infections += u64::from(s.infected);
        out.person_years += s.person_years;
    }
    out
}

fn refit_calibration(
    panels: &[(Option<SubtypeId>, CalibrationPanel)],
    t_star: f64,
    rng: &mut RngStream,
) -> Result<CalibrationSet> {
    let mut strata = Vec::with_capacity(panels.len());
    for (subtype, panel) in panels {
        let resampled = resample_panel(panel, rng);
        let mdri = estimate_mdri_point(&resampled, t_star)?;
        let frr = estimate_frr(&resampled)?.point;
        strata.push(SubtypeCalibration {
            subtype: *subtype,
            mdri: CalibrationEstimate::exact(CalibrationQuantity::Mdri, mdri),
            frr: CalibrationEstimate::exact(CalibrationQuantity::Frr, frr),
        });
    }
    Ok(CalibrationSet { t_star, strata })
}

struct ParametricDraws {
    per_stratum: Vec<(Option<SubtypeId>, CalibrationDraw, CalibrationDraw)>,
}

impl ParametricDraws {
    fn build(cal: &CalibrationSet) -> Result<Self> {
        let mut per_stratum = Vec::with_capacity(cal.strata.len());
        for s in &cal.strata {
            per_stratum.push((s.subtype, lognormal_from_ci(&s.mdri)?, lognormal_from_ci(&s.frr)?));
        }
        Ok(Self { per_stratum })
    }

    fn sample(&self, t_star: f64, rng: &mut RngStream) -> CalibrationSet {
        let strata = self
            .per_stratum
            .iter()
            .map(|(subtype, mdri, frr)| SubtypeCalibration {
                subtype: *subtype,
                mdri: CalibrationEstimate::exact(CalibrationQuantity::Mdri, mdri.sample(rng)),
                frr: CalibrationEstimate::exact(CalibrationQuantity::Frr, frr.sample(rng)),
            })
            .collect();
        CalibrationSet { t_star, strata }
    }
}

/// Runs `plan.rounds` bootstrap rounds. Each round resamples per the plan,
/// hands the round's data to `eval`, and collects its `n_outputs` results;
/// per-output intervals come out in the same order. A failed output in a
/// round counts toward that output's failure tally, never aborts the run.
///
/// The trial, when given, is resampled by subject in every round; it is
/// only present when a trial quantity is among the outputs.
pub fn run<F>(
    plan: &BootstrapPlan,
    inputs: &BootstrapInputs,
    n_outputs: usize,
    eval: F,
    rng: &RngStream,
) -> Result<Vec<BootstrapCi>>
where
    F: Fn(&RoundData) -> Vec<Result<f64>>,
{
    plan.validate()?;
    if n_outputs == 0 {
        return Err(Error::Precondition("bootstrap needs at least one output".into()));
    }
    let refit_panels = plan.scheme == BootstrapScheme::Nonparametric && plan.resample_panels;
    if refit_panels && inputs.panels.is_empty() {
        return Err(Error::Precondition(
            "nonparametric calibration resampling needs the calibration panels".into(),
        ));
    }
    if refit_panels {
        for (_, panel) in inputs.panels {
            panel.validate()?;
        }
    }
    let draws = match plan.scheme {
        BootstrapScheme::Parametric => Some(ParametricDraws::build(inputs.calibration)?),
        BootstrapScheme::Nonparametric => None,
    };
    let t_star = inputs.calibration.t_star;

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n_outputs];
    let mut failures = vec![0usize; n_outputs];
    for round in 0..plan.rounds {
        let mut round_rng = rng.child(round as u64);
        let data = build_round(plan, inputs, draws.as_ref(), t_star, &mut round_rng);
        match data {
            Ok(data) => {
                let values = eval(&data);
                if values.len() != n_outputs {
                    return Err(Error::Precondition(format!(
                        "bootstrap evaluator returned {} outputs, expected {n_outputs}",
                        values.len()
                    )));
                }
                for (i, v) in values.into_iter().enumerate() {
                    match v {
                        Ok(x) if x.is_finite() => columns[i].push(x),
                        _ => failures[i] += 1,
                    }
                }
            }
            // The round's data could not be built (a panel refit refused to
            // converge, say); every output loses the round.
            Err(_) => {
                for f in &mut failures {
                    *f += 1;
                }
            }
        }
    }

    columns
        .iter()
        .zip(&failures)
        .map(|(col, &fail)| summarize(col, fail, plan))
        .collect()
}

fn build_round(
    plan: &BootstrapPlan,
    inputs: &BootstrapInputs,
    draws: Option<&ParametricDraws>,
    t_star: f64,
    rng: &mut RngStream,
) -> Result<RoundData> {
    let cross = if plan.resample_cross {
        resample_records(inputs.cross, rng)
    } else {
        inputs.cross.to_vec()
    };
    let target = inputs.target.map(|t| {
        if plan.resample_target {
            resample_records(t, rng)
        } else {
            t.to_vec()
        }
    });
    let calibration = match plan.scheme {
        BootstrapScheme::Nonparametric => {
            if plan.resample_panels {
                refit_calibration(inputs.panels, t_star, rng)?
            } else {
                inputs.calibration.clone()
            }
        }
        BootstrapScheme::Parametric => draws.expect("draws built for parametric runs").sample(t_star, rng),
    };
    let trial = inputs.trial.map(|t| resample_trial(t, rng));
    Ok(RoundData { cross, target, calibration, trial })
}

fn summarize(col: &[f64], failures: usize, plan: &BootstrapPlan) -> Result<BootstrapCi> {
    let rounds = plan.rounds;
    if col.len() < 2 {
        return Err(Error::Estimate(format!(
            "only {} of {rounds} bootstrap rounds produced a value; no interval",
            col.len()
        )));
    }
    let mean = col.iter().sum::<f64>() / col.len() as f64;
    let se = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (col.len() - 1) as f64).sqrt();

    let mut positive: Vec<f64> = col.iter().copied().filter(|&x| x > 0.0).collect();
    let nonpositive = col.len() - positive.len();
    if positive.len() < 2 {
        return Err(Error::Estimate(format!(
            "only {} positive bootstrap replicates; a log-scale interval needs 2",
            positive.len()
        )));
    }
    let (lo, hi) = match plan.interval {
        IntervalMethod::LognormalNormalApprox => {
            let logs: Vec<f64> = positive.iter().map(|x| x.ln()).collect();
            let m = logs.iter().sum::<f64>() / logs.len() as f64;
            let s = (logs.iter().map(|l| (l - m).powi(2)).sum::<f64>() / (logs.len() - 1) as f64).sqrt();
            ((m - Z_95 * s).exp(), (m + Z_95 * s).exp())
        }
        IntervalMethod::LogPercentile => {
            positive.sort_by(|a, b| a.total_cmp(b));
            (quantile_sorted(&positive, 0.025), quantile_sorted(&positive, 0.975))
        }
    };
    Ok(BootstrapCi {
        lo,
        hi,
        se,
        rounds,
        failures,
        nonpositive,
        unreliable: failures * 10 > rounds,
    })
}

/// Smallest value with at least a fraction `p` of the sample at or below
/// it (the inverse of the empirical distribution function).
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty() && (0.0..=1.0).contains(&p));
    let k = (sorted.len() as f64 * p).ceil() as usize;
    sorted[k.max(1).min(sorted.len()) - 1]
}
