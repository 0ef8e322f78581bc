//! Monte Carlo data generation: cross-sectional samples with recency
//! results, external target samples, covariate-driven trial enrollment
//! with its truncation rule, active-arm follow-up, and calibration panels.

use crate::assay::{CalibrationEstimate, CalibrationPanel, CalibrationQuantity, PanelSubject, PanelVisit, RecencyAssay, PANEL_ENTRY_SPAN_YEARS, PANEL_VISITS_PER_SUBJECT, PANEL_VISIT_SPACING_YEARS};
use crate::error::{Error, Result};
use crate::estimators::{CalibrationSet, SubtypeCalibration};
use crate::records::{Covariates, Population, SubjectRecord, SubtypeId};
use crate::rng::RngStream;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Years after the recency cutoff over which long-standing infection
/// durations are spread. Only the plateau of φ is visible there, so the
/// exact spread does not move any estimand.
pub const DEFAULT_TAIL_CAP_YEARS: f64 = 10.0;

/// One covariate cell (per subtype when subtypes circulate): its true
/// incidence and prevalence, its share of the cross-sectional and target
/// populations, and the two published enrollment columns (reference only;
/// enrollment is recomputed from the row quantities).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationRow {
    pub covariates: Covariates,
    pub subtype: Option<SubtypeId>,
    pub incidence: f64,
    pub prevalence: f64,
    pub prop_cross: f64,
    pub prop_target: f64,
    pub enroll_setting1: f64,
    pub enroll_setting2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationTable {
    rows: Vec<PopulationRow>,
    #[serde(skip)]
    index: BTreeMap<(Covariates, Option<SubtypeId>), usize>,
}

impl PopulationTable {
    /// Strict constructor: shares must already sum to 1 within 1e-6.
    pub fn new(rows: Vec<PopulationRow>) -> Result<Self> {
        Self::validate_rows(&rows)?;
        let g: f64 = rows.iter().map(|r| r.prop_cross).sum();
        let h: f64 = rows.iter().map(|r| r.prop_target).sum();
        if (g - 1.0).abs() > 1e-6 {
            return Err(Error::Precondition(format!("cross-sectional shares sum to {g}, not 1")));
        }
        if (h - 1.0).abs() > 1e-6 {
            return Err(Error::Precondition(format!("target shares sum to {h}, not 1")));
        }
        let index = Self::build_index(&rows)?;
        Ok(Self { rows, index })
    }

    /// Parser-facing constructor: rescales both share columns to sum to 1,
    /// refusing inputs that are off by more than rounding plausibly
    /// explains (2%).
    pub fn new_normalized(mut rows: Vec<PopulationRow>) -> Result<Self> {
        Self::validate_rows(&rows)?;
        for (name, pick) in [
            ("cross-sectional", 0usize),
            ("target", 1usize),
        ] {
            let total: f64 = rows
                .iter()
                .map(|r| if pick == 0 { r.prop_cross } else { r.prop_target })
                .sum();
            if (total - 1.0).abs() > 0.02 {
                return Err(Error::Precondition(format!(
                    "{name} shares sum to {total}; not a share column"
                )));
            }
            for r in &mut rows {
                if pick == 0 {
                    r.prop_cross /= total;
                } else {
                    r.prop_target /= total;
                }
            }
        }
        let index = Self::build_index(&rows)?;
        Ok(Self { rows, index })
    }

    fn validate_rows(rows: &[PopulationRow]) -> Result<()> {
        if rows.is_empty() {
            return Err(Error::Precondition("population table has no rows".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            let probs = [r.prevalence, r.prop_cross, r.prop_target, r.enroll_setting1, r.enroll_setting2];
            if probs.iter().any(|p| !p.is_finite() || !(0.0..=1.0).contains(p)) {
                return Err(Error::Precondition(format!("row {}: probabilities must lie in [0, 1]", i + 1)));
            }
            if !(r.incidence.is_finite() && r.incidence >= 0.0) {
                return Err(Error::Precondition(format!("row {}: incidence must be nonnegative", i + 1)));
            }
        }
        Ok(())
    }

    fn build_index(rows: &[PopulationRow]) -> Result<BTreeMap<(Covariates, Option<SubtypeId>), usize>> {
        let mut index = BTreeMap::new();
        for (i, r) in rows.iter().enumerate() {
            if index.insert((r.covariates, r.subtype), i).is_some() {
                return Err(Error::Precondition(format!(
                    "row {}: duplicate covariate cell {:?}",
                    i + 1,
                    r.covariates.values()
                )));
            }
        }
        Ok(index)
    }

    pub fn rows(&self) -> &[PopulationRow] {
        &self.rows
    }

    pub fn row_for(&self, covariates: &Covariates, subtype: Option<SubtypeId>) -> Result<&PopulationRow> {
        self.index
            .get(&(*covariates, subtype))
            .map(|&i| &self.rows[i])
            .ok_or_else(|| Error::Precondition(format!(
                "covariate cell {:?} (subtype {:?}) is not in the population table",
                covariates.values(),
                subtype
            )))
    }

    /// The recent-infection mass λ(1−p)T*/p must be a probability in
    /// every cell with positive prevalence.
    pub fn validate_feasibility(&self, t_star: f64) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            if r.incidence * (1.0 - r.prevalence) * t_star > r.prevalence {
                return Err(Error::Precondition(format!(
                    "row {}: recent-infection mass {} exceeds 1; the cell cannot be generated",
                    i + 1,
                    r.incidence * (1.0 - r.prevalence) * t_star / r.prevalence
                )));
            }
        }
        Ok(())
    }

    /// Σ h_c·λ_c: mean incidence of the target population.
    pub fn target_mean_incidence(&self) -> f64 {
        self.rows.iter().map(|r| r.prop_target * r.incidence).sum()
    }

    /// Σ g_c·λ_c: mean incidence of the cross-sectional population.
    pub fn cross_mean_incidence(&self) -> f64 {
        self.rows.iter().map(|r| r.prop_cross * r.incidence).sum()
    }

    /// Mean incidence among the HIV-negative members of the
    /// cross-sectional population, the estimand of the unweighted
    /// estimator.
    pub fn cross_negative_mean_incidence(&self) -> f64 {
        let num: f64 = self.rows.iter().map(|r| r.prop_cross * (1.0 - r.prevalence) * r.incidence).sum();
        let den: f64 = self.rows.iter().map(|r| r.prop_cross * (1.0 - r.prevalence)).sum();
        num / den
    }

    fn cumulative(&self, pick: impl Fn(&PopulationRow) -> f64) -> Vec<f64> {
        let mut cum = Vec::with_capacity(self.rows.len());
        let mut total = 0.0;
        for r in &self.rows {
            total += pick(r);
            cum.push(total);
        }
        cum
    }
}

fn draw_row(cum: &[f64], rng: &mut RngStream) -> usize {
    let u = rng.uniform();
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

/// Per-subtype assays sharing one recency cutoff.
#[derive(Debug, Clone)]
pub struct SubtypeAssays {
    entries: Vec<(Option<SubtypeId>, RecencyAssay)>,
}

impl SubtypeAssays {
    pub fn new(entries: Vec<(Option<SubtypeId>, RecencyAssay)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Precondition("no assays".into()));
        }
        let t = entries[0].1.t_star;
        for (key, assay) in &entries {
            if (assay.t_star - t).abs() > 1e-12 {
                return Err(Error::Precondition(format!(
                    "assays disagree on the recency cutoff ({t} vs {} for subtype {key:?})",
                    assay.t_star
                )));
            }
            if entries.iter().filter(|(k, _)| k == key).count() > 1 {
                return Err(Error::Precondition(format!("duplicate assay for subtype {key:?}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn single(assay: RecencyAssay) -> Self {
        Self { entries: vec![(None, assay)] }
    }

    pub fn t_star(&self) -> f64 {
        self.entries[0].1.t_star
    }

    pub fn entries(&self) -> &[(Option<SubtypeId>, RecencyAssay)] {
        &self.entries
    }

    pub fn get(&self, subtype: Option<SubtypeId>) -> Result<&RecencyAssay> {
        self.entries
            .iter()
            .find(|(k, _)| *k == subtype)
            .map(|(_, a)| a)
            .ok_or_else(|| Error::Stratum {
                subtype: subtype.map_or("(none)".into(), |j| j.to_string()),
                message: "no assay for this subtype".into(),
            })
    }

    /// Exact Ω and β per stratum, as zero-width calibration estimates.
    pub fn calibration_true(&self) -> Result<CalibrationSet> {
        let mut strata = Vec::with_capacity(self.entries.len());
        for (key, assay) in &self.entries {
            strata.push(SubtypeCalibration {
                subtype: *key,
                mdri: CalibrationEstimate::exact(CalibrationQuantity::Mdri, assay.mdri()?),
                frr: CalibrationEstimate::exact(CalibrationQuantity::Frr, assay.frr()?),
            });
        }
        Ok(CalibrationSet { t_star: self.t_star(), strata })
    }
}

/// Cross-sectional sample: cell from {g_c}, HIV status from p_c, and for
/// positives a two-part infection duration. Recent durations (below the
/// cutoff) carry mass λ(1−p)T*/p and are uniform there, which is the only
/// part of the duration law the estimators can see; the rest sits beyond
/// the cutoff where φ is flat.
pub fn gen_cross_sectional(
    table: &PopulationTable,
    n: usize,
    assays: &SubtypeAssays,
    tail_cap: f64,
    rng: &mut RngStream,
) -> Result<Vec<SubjectRecord>> {
    let t_star = assays.t_star();
    table.validate_feasibility(t_star)?;
    if !(tail_cap.is_finite() && tail_cap > t_star) {
        return Err(Error::Precondition(format!(
            "duration tail cap {tail_cap} must exceed the recency cutoff {t_star}"
        )));
    }
    let cum = table.cumulative(|r| r.prop_cross);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let row = &table.rows()[draw_row(&cum, rng)];
        let positive = rng.bernoulli(row.prevalence);
        let recent = if positive {
            let recent_mass = row.incidence * (1.0 - row.prevalence) * t_star / row.prevalence;
            let duration = if rng.bernoulli(recent_mass) {
                rng.uniform_range(0.0, t_star)
            } else {
                rng.uniform_range(t_star, tail_cap)
            };
            let phi = assays.get(row.subtype)?.phi(duration)?;
            Some(rng.bernoulli(phi))
        } else {
            None
        };
        out.push(SubjectRecord {
            covariates: row.covariates,
            subtype: row.subtype,
            hiv_positive: Some(positive),
            recent,
            recency_tested: None,
            in_target: None,
            population: Population::CrossSectional,
        });
    }
    Ok(out)
}

/// Target sample: covariates (and subtype) from {h_c}, nothing else.
pub fn gen_external_target(table: &PopulationTable, m: usize, rng: &mut RngStream) -> Vec<SubjectRecord> {
    let cum = table.cumulative(|r| r.prop_target);
    (0..m)
        .map(|_| {
            let row = &table.rows()[draw_row(&cum, rng)];
            SubjectRecord {
                covariates: row.covariates,
                subtype: row.subtype,
                hiv_positive: None,
                recent: None,
                recency_tested: None,
                in_target: None,
                population: Population::ExternalTarget,
            }
        })
        .collect()
}

/// Per-row raw enrollment ratios h·M/((1−p)·g·N). A ratio can exceed 1
/// when a cell's target share dwarfs its HIV-negative cross-sectional
/// mass; pass the result through `truncate_enrollment` before treating
/// it as probabilities.
pub fn enrollment_probabilities(table: &PopulationTable, n: usize, m: usize) -> Result<Vec<f64>> {
    let mut raw = Vec::with_capacity(table.rows().len());
    for (i, r) in table.rows().iter().enumerate() {
        if r.prop_target == 0.0 {
            raw.push(0.0);
            continue;
        }
        let denom = (1.0 - r.prevalence) * r.prop_cross * n as f64;
        if denom <= 0.0 {
            return Err(Error::Precondition(format!(
                "row {}: target share is positive but the HIV-negative cross-sectional share is zero",
                i + 1
            )));
        }
        raw.push(r.prop_target * m as f64 / denom);
    }
    Ok(raw)
}

/// Truncates raw enrollment ratios into probabilities: values ≤ 1 pass
/// through; values above 1 are remapped, order-preserving, into
/// (m₀ + 0.05, 0.95], where m₀ is the largest ratio below 0.9 (0.85 when
/// none exists).
pub fn truncate_enrollment(raw: &[f64]) -> Vec<f64> {
    let below = raw.iter().copied().filter(|&e| e < 0.9).fold(f64::NAN, f64::max);
    // No cell below 0.9 leaves the anchor undefined; 0.85 keeps the
    // remapped band inside (0.9, 0.95].
    let anchor = if below.is_nan() { 0.85 } else { below };
    let over: Vec<f64> = raw.iter().copied().filter(|&e| e > 1.0).collect();
    if over.is_empty() {
        return raw.to_vec();
    }
    let hi = over.iter().copied().fold(f64::MIN, f64::max);
    let lo = over.iter().copied().fold(f64::MAX, f64::min);
    let floor = anchor + 0.05;
    raw.iter()
        .map(|&e| {
            if e <= 1.0 {
                e
            } else if hi == lo {
                0.95
            } else {
                floor + (e - lo) / (hi - lo) * (0.95 - floor)
            }
        })
        .collect()
}

/// Marks HIV-negative records as enrolled (in the internal target) with
/// their cell's probability; HIV-positive records keep no indicator.
pub fn gen_internal_enrollment(
    records: &mut [SubjectRecord],
    table: &PopulationTable,
    probs: &[f64],
    rng: &mut RngStream,
) -> Result<()> {
    if probs.len() != table.rows().len() {
        return Err(Error::Precondition(format!(
            "{} enrollment probabilities for {} table rows",
            probs.len(),
            table.rows().len()
        )));
    }
    for r in records {
        if r.hiv_positive == Some(false) {
            let row = table.row_for(&r.covariates, r.subtype)?;
            let idx = table.index[&(r.covariates, r.subtype)];
            debug_assert_eq!(row.covariates, r.covariates);
            r.in_target = Some(rng.bernoulli(probs[idx]));
        }
    }
    Ok(())
}

/// One enrolled subject's follow-up: infection indicator and observed
/// person-time under the cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSubject {
    pub infected: bool,
    pub person_years: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub infections: u64,
    pub person_years: f64,
    pub subjects: Vec<TrialSubject>,
}

/// Active-arm follow-up of the enrolled HIV-negative records: first event
/// at rate λ_cell·(1−efficacy), censored at `followup_years`.
pub fn simulate_trial(
    records: &[SubjectRecord],
    table: &PopulationTable,
    efficacy: f64,
    followup_years: f64,
    rng: &mut RngStream,
) -> Result<TrialOutcome> {
    if !(0.0..=1.0).contains(&efficacy) {
        return Err(Error::Precondition(format!("efficacy must lie in [0, 1], got {efficacy}")));
    }
    if !(followup_years.is_finite() && followup_years > 0.0) {
        return Err(Error::Precondition(format!(
            "follow-up must be positive, got {followup_years}"
        )));
    }
    let mut outcome = TrialOutcome::default();
    for r in records {
        if r.in_target != Some(true) || r.hiv_positive != Some(false) {
            continue;
        }
        let row = table.row_for(&r.covariates, r.subtype)?;
        let rate = row.incidence * (1.0 - efficacy);
        let time = rng.exponential(rate);
        let subject = if time < followup_years {
            TrialSubject { infected: true, person_years: time }
        } else {
            TrialSubject { infected: false, person_years: followup_years }
        };
        outcome.infections += u64::from(subject.infected);
        outcome.person_years += subject.person_years;
        outcome.subjects.push(subject);
    }
    Ok(outcome)
}

/// Fresh calibration data for one assay: a longitudinal panel whose
/// subjects enter at evenly spaced offsets and are seen every two months,
/// and a long-infected cohort with durations past the cutoff.
pub fn gen_calibration_panel(
    assay: &RecencyAssay,
    n_subjects: usize,
    n_long: usize,
    tail_cap: f64,
    rng: &mut RngStream,
) -> Result<CalibrationPanel> {
    if n_subjects == 0 || n_long == 0 {
        return Err(Error::Precondition("calibration panel sizes must be positive".into()));
    }
    let mut longitudinal = Vec::with_capacity(n_subjects * PANEL_VISITS_PER_SUBJECT);
    for s in 0..n_subjects {
        let offset = if n_subjects == 1 {
            0.0
        } else {
            PANEL_ENTRY_SPAN_YEARS * s as f64 / (n_subjects - 1) as f64
        };
        for v in 0..PANEL_VISITS_PER_SUBJECT {
            let duration = offset + v as f64 * PANEL_VISIT_SPACING_YEARS;
            longitudinal.push(PanelVisit {
                subject_id: s as u32,
                duration_years: duration,
                recent: rng.bernoulli(assay.phi(duration)?),
            });
        }
    }
    let mut long_infected = Vec::with_capacity(n_long);
    for i in 0..n_long {
        let duration = rng.uniform_range(assay.t_star, tail_cap.max(assay.t_star + 1.0));
        long_infected.push(PanelSubject {
            subject_id: (n_subjects + i) as u32,
            recent: rng.bernoulli(assay.phi(duration)?),
        });
    }
    Ok(CalibrationPanel { longitudinal, long_infected })
}

/// Marks each HIV-positive record as recency-tested with probability
/// `prob` (independent of everything else) and hides the result of the
/// untested; the generator's full-testing output is the `prob` = 1 case.
pub fn apply_recency_missingness(records: &mut [SubjectRecord], prob: f64, rng: &mut RngStream) -> Result<()> {
    if !(0.0..=1.0).contains(&prob) {
        return Err(Error::Precondition(format!("testing probability must lie in [0, 1], got {prob}")));
    }
    for r in records {
        if r.hiv_positive == Some(true) {
            let tested = rng.bernoulli(prob);
            r.recency_tested = Some(tested);
            if !tested {
                r.recent = None;
            }
        }
    }
    Ok(())
}
