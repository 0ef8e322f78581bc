//! Incidence and efficacy estimators: the count-based recency estimator,
//! its weighted extension to external and internal target populations, the
//! subtype-aware variants, the partial-recency-testing modifications, and
//! closed-form large-sample limits used as oracles.

use crate::assay::{CalibrationEstimate, CalibrationQuantity};
use crate::error::{Error, Result};
use crate::records::{CountSummary, Population, SubjectRecord, SubtypeId};
use crate::weights::{fit_weight_external, fit_weight_internal, FeatureEncoding};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IncidenceResult {
    /// Incident infections per person-year.
    pub estimate: f64,
    pub method: String,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub n_bootstrap: Option<usize>,
    /// Effective sample sizes, per-subtype shares and components, flags.
    pub diagnostics: BTreeMap<String, f64>,
}

impl IncidenceResult {
    fn point(method: &str, estimate: f64, diagnostics: BTreeMap<String, f64>) -> Result<Self> {
        if !estimate.is_finite() {
            return Err(Error::NonFinite { what: format!("{method} estimate"), at: estimate });
        }
        let mut diagnostics = diagnostics;
        // Small samples can push the estimator negative; returned as-is,
        // flagged, so bootstrap distributions stay untruncated.
        if estimate < 0.0 {
            diagnostics.insert("negative_estimate".into(), 1.0);
        }
        Ok(Self {
            estimate,
            method: method.into(),
            ci_lo: None,
            ci_hi: None,
            n_bootstrap: None,
            diagnostics,
        })
    }
}

/// Per-subtype assay calibration sharing one recency cutoff.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubtypeCalibration {
    pub subtype: Option<SubtypeId>,
    pub mdri: CalibrationEstimate,
    pub frr: CalibrationEstimate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub t_star: f64,
    pub strata: Vec<SubtypeCalibration>,
}

impl CalibrationSet {
    pub fn single(mdri: CalibrationEstimate, frr: CalibrationEstimate, t_star: f64) -> Self {
        Self { t_star, strata: vec![SubtypeCalibration { subtype: None, mdri, frr }] }
    }

    pub fn get(&self, subtype: Option<SubtypeId>) -> Result<&SubtypeCalibration> {
        self.strata.iter().find(|s| s.subtype == subtype).ok_or_else(|| Error::Stratum {
            subtype: label(subtype),
            message: "no assay calibration for this subtype".into(),
        })
    }
}

fn label(subtype: Option<SubtypeId>) -> String {
    match subtype {
        Some(j) => j.to_string(),
        None => "(none)".into(),
    }
}

/// Validates the calibration pair and returns Ω̂ − β̂·T*, which every
/// denominator shares and which must be positive for the design to carry
/// any information about incidence.
fn excess_mdri(mdri: &CalibrationEstimate, frr: &CalibrationEstimate, t_star: f64) -> Result<f64> {
    if mdri.quantity != CalibrationQuantity::Mdri {
        return Err(Error::Precondition("first calibration argument must be an MDRI".into()));
    }
    if frr.quantity != CalibrationQuantity::Frr {
        return Err(Error::Precondition("second calibration argument must be an FRR".into()));
    }
    if !(t_star.is_finite() && t_star > 0.0) {
        return Err(Error::Domain(format!("t_star must be positive, got {t_star}")));
    }
    let excess = mdri.point - frr.point * t_star;
    if excess <= 0.0 {
        return Err(Error::Estimate(format!(
            "degenerate recency design: MDRI {} does not exceed FRR {} times the cutoff {t_star}",
            mdri.point, frr.point
        )));
    }
    Ok(excess)
}

/// Count-based incidence estimator:
/// (N_rec − N_pos·β̂) / (N_neg·(Ω̂ − β̂·T*)).
pub fn kassanjee(
    counts: &CountSummary,
    mdri: &CalibrationEstimate,
    frr: &CalibrationEstimate,
    t_star: f64,
) -> Result<IncidenceResult> {
    let excess = excess_mdri(mdri, frr, t_star)?;
    if counts.n_neg == 0 {
        return Err(Error::Estimate("no HIV-negative records; incidence is undefined".into()));
    }
    let estimate = (counts.n_rec as f64 - counts.n_pos as f64 * frr.point)
        / (counts.n_neg as f64 * excess);
    let diagnostics = BTreeMap::from([
        ("n_pos".into(), counts.n_pos as f64),
        ("n_neg".into(), counts.n_neg as f64),
        ("n_rec".into(), counts.n_rec as f64),
    ]);
    IncidenceResult::point("kassanjee", estimate, diagnostics)
}

/// Weighted extension over cross-sectional records:
/// Σωᵢ·Dᵢ·(Rᵢ−β̂) / (Σωᵢ·(1−Dᵢ)·(Ω̂−β̂·T*)).
/// Constant weights reproduce the count-based estimator exactly.
pub fn extended_incidence<F>(
    records: &[SubjectRecord],
    weight_fn: F,
    mdri: &CalibrationEstimate,
    frr: &CalibrationEstimate,
    t_star: f64,
) -> Result<IncidenceResult>
where
    F: Fn(&SubjectRecord) -> Result<f64>,
{
    let excess = excess_mdri(mdri, frr, t_star)?;
    let mut w_pos = 0.0;
    let mut w_neg = 0.0;
    let mut w_rec = 0.0;
    let mut n = 0u64;
    for r in records {
        if r.population != Population::CrossSectional {
            continue;
        }
        n += 1;
        let positive = r.hiv_positive.ok_or_else(|| {
            Error::Precondition("cross-sectional record is missing HIV status".into())
        })?;
        let w = weight_fn(r)?;
        if !w.is_finite() || w < 0.0 {
            return Err(Error::NonFinite { what: "record weight".into(), at: w });
        }
        if positive {
            let recent = r.recent.ok_or_else(|| {
                Error::Precondition(
                    "HIV-positive record has no recency result; use the modified estimators \
                     when testing is partial"
                        .into(),
                )
            })?;
            w_pos += w;
            if recent {
                w_rec += w;
            }
        } else {
            w_neg += w;
        }
    }
    if w_neg <= 0.0 {
        return Err(Error::Estimate("weighted HIV-negative mass is zero".into()));
    }
    let estimate = (w_rec - w_pos * frr.point) / (w_neg * excess);
    let diagnostics = BTreeMap::from([
        ("n_records".into(), n as f64),
        ("weighted_pos".into(), w_pos),
        ("weighted_neg".into(), w_neg),
        ("weighted_rec".into(), w_rec),
    ]);
    IncidenceResult::point("extended", estimate, diagnostics)
}

fn check_population(records: &[SubjectRecord], expected: Population, what: &str) -> Result<()> {
    if records.iter().any(|r| r.population != expected) {
        return Err(Error::Precondition(format!("{what} records carry the wrong population tag")));
    }
    Ok(())
}

/// Fits external-mode weights on the pooled sample and applies the
/// weighted estimator to the cross-sectional records.
pub fn incidence_external_target(
    cross: &[SubjectRecord],
    target: &[SubjectRecord],
    mdri: &CalibrationEstimate,
    frr: &CalibrationEstimate,
    t_star: f64,
    encoding: FeatureEncoding,
) -> Result<IncidenceResult> {
    check_population(cross, Population::CrossSectional, "cross-sectional")?;
    check_population(target, Population::ExternalTarget, "target")?;
    if target.is_empty() {
        return Err(Error::Precondition("external target sample is empty".into()));
    }
    let pooled: Vec<SubjectRecord> = cross.iter().chain(target.iter()).copied().collect();
    let model = fit_weight_external(&pooled, encoding)?;
    let mut result = extended_incidence(cross, |r| model.evaluate(r), mdri, frr, t_star)?;
    result.method = "external_target".into();
    result.diagnostics.insert("n_target".into(), target.len() as f64);
    Ok(result)
}

/// Fits internal-mode weights (target membership among HIV-negatives) and
/// applies the weighted estimator to all cross-sectional records.
pub fn incidence_internal_target(
    cross: &[SubjectRecord],
    mdri: &CalibrationEstimate,
    frr: &CalibrationEstimate,
    t_star: f64,
    encoding: FeatureEncoding,
) -> Result<IncidenceResult> {
    check_population(cross, Population::CrossSectional, "cross-sectional")?;
    let model = fit_weight_internal(cross, encoding)?;
    let mut result = extended_incidence(cross, |r| model.evaluate(r), mdri, frr, t_star)?;
    result.method = "internal_target".into();
    if !model.warnings.is_empty() {
        result.diagnostics.insert("constant_weight".into(), 1.0);
    }
    Ok(result)
}

/// Per-subtype counts over cross-sectional records; every record must
/// carry a subtype.
pub fn counts_by_subtype(records: &[SubjectRecord]) -> Result<BTreeMap<SubtypeId, CountSummary>> {
    let mut groups: BTreeMap<SubtypeId, Vec<SubjectRecord>> = BTreeMap::new();
    for r in records {
        if r.population != Population::CrossSectional {
            continue;
        }
        let j = r.subtype.ok_or_else(|| {
            Error::Precondition("cross-sectional record is missing its subtype".into())
        })?;
        groups.entry(j).or_default().push(*r);
    }
    let mut out = BTreeMap::new();
    for (j, rows) in groups {
        out.insert(j, CountSummary::from_records(&rows)?);
    }
    Ok(out)
}

/// Pooled-count comparator that plugs sample-proportion-weighted averages
/// of the per-subtype MDRI and FRR into the count-based estimator:
/// (N_rec − N_pos·Σπ̂ⱼβ̂ⱼ) / (N_neg·(Σπ̂ⱼΩ̂ⱼ − Σπ̂ⱼβ̂ⱼT*)).
/// Known to converge to a value other than the average incidence when
/// subtypes differ; see `plim_subtype_old`.
pub fn subtype_old(
    counts: &BTreeMap<SubtypeId, CountSummary>,
    cal: &CalibrationSet,
) -> Result<IncidenceResult> {
    if counts.is_empty() {
        return Err(Error::Precondition("no subtype strata".into()));
    }
    let total: u64 = counts.values().map(CountSummary::total).sum();
    let mut mean_mdri = 0.0;
    let mut mean_frr = 0.0;
    let mut pooled = (0u64, 0u64, 0u64);
    let mut diagnostics = BTreeMap::new();
    for (&j, c) in counts {
        let share = c.total() as f64 / total as f64;
        let a = cal.get(Some(j))?;
        mean_mdri += share * a.mdri.point;
        mean_frr += share * a.frr.point;
        pooled.0 += c.n_pos;
        pooled.1 += c.n_neg;
        pooled.2 += c.n_rec;
        diagnostics.insert(format!("pi_{j}"), share);
    }
    if pooled.1 == 0 {
        return Err(Error::Estimate("no HIV-negative records; incidence is undefined".into()));
    }
    let excess = mean_mdri - mean_frr * cal.t_star;
    if excess <= 0.0 {
        return Err(Error::Estimate(format!(
            "degenerate pooled design: averaged MDRI {mean_mdri} does not exceed averaged FRR \
             {mean_frr} times the cutoff {}",
            cal.t_star
        )));
    }
    let estimate = (pooled.2 as f64 - pooled.0 as f64 * mean_frr) / (pooled.1 as f64 * excess);
    diagnostics.insert("n_pos".into(), pooled.0 as f64);
    diagnostics.insert("n_neg".into(), pooled.1 as f64);
    diagnostics.insert("n_rec".into(), pooled.2 as f64);
    IncidenceResult::point("subtype_old", estimate, diagnostics)
}

/// Sample-proportion mixture of per-subtype count-based estimates:
/// Σⱼ π̂ⱼ·λ̂ⱼ with π̂ⱼ = Nⱼ/N.
pub fn subtype_stratified(
    counts: &BTreeMap<SubtypeId, CountSummary>,
    cal: &CalibrationSet,
) -> Result<IncidenceResult> {
    if counts.is_empty() {
        return Err(Error::Precondition("no subtype strata".into()));
    }
    let total: u64 = counts.values().map(CountSummary::total).sum();
    let mut estimate = 0.0;
    let mut diagnostics = BTreeMap::new();
    for (&j, c) in counts {
        let share = c.total() as f64 / total as f64;
        let a = cal.get(Some(j))?;
        let part = kassanjee(c, &a.mdri, &a.frr, cal.t_star)
            .map_err(|e| Error::Stratum { subtype: j.to_string(), message: e.to_string() })?;
        estimate += share * part.estimate;
        diagnostics.insert(format!("pi_{j}"), share);
        diagnostics.insert(format!("lambda_{j}"), part.estimate);
    }
    IncidenceResult::point("subtype_stratified", estimate, diagnostics)
}

fn split_by_subtype(records: &[SubjectRecord]) -> BTreeMap<Option<SubtypeId>, Vec<SubjectRecord>> {
    let mut groups: BTreeMap<Option<SubtypeId>, Vec<SubjectRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.subtype).or_default().push(*r);
    }
    groups
}

/// Target-side subtype shares combined with per-subtype weighted
/// estimates: Σⱼ π̂*ⱼ·Bⱼ, π̂*ⱼ = Mⱼ/M from the target sample. Strata
/// sharing is data-driven: a subtype absent from the target contributes
/// nothing and is skipped; a target subtype absent from the
/// cross-sectional sample is an error.
pub fn subtype_external(
    cross: &[SubjectRecord],
    target: &[SubjectRecord],
    cal: &CalibrationSet,
    encoding: FeatureEncoding,
) -> Result<IncidenceResult> {
    check_population(cross, Population::CrossSectional, "cross-sectional")?;
    check_population(target, Population::ExternalTarget, "target")?;
    if target.is_empty() {
        return Err(Error::Precondition("external target sample is empty".into()));
    }
    let cross_strata = split_by_subtype(cross);
    let target_strata = split_by_subtype(target);
    // Alignment first: a subtype with target mass but no cross-sectional
    // rows has no estimator, whatever the weight fit would say.
    for &subtype in target_strata.keys() {
        if !cross_strata.contains_key(&subtype) {
            return Err(Error::Stratum {
                subtype: label(subtype),
                message: "subtype present in the target but absent from the cross-sectional sample"
                    .into(),
            });
        }
    }
    let pooled: Vec<SubjectRecord> = cross.iter().chain(target.iter()).copied().collect();
    let model = fit_weight_external(&pooled, encoding)?;
    let m_total = target.len() as f64;
    let mut estimate = 0.0;
    let mut diagnostics = BTreeMap::new();
    for (&subtype, rows) in &target_strata {
        let share = rows.len() as f64 / m_total;
        let stratum_rows = &cross_strata[&subtype];
        let a = cal.get(subtype)?;
        let part =
            extended_incidence(stratum_rows, |r| model.evaluate(r), &a.mdri, &a.frr, cal.t_star)
                .map_err(|e| Error::Stratum { subtype: label(subtype), message: e.to_string() })?;
        estimate += share * part.estimate;
        diagnostics.insert(format!("pi_star_{}", label(subtype)), share);
        diagnostics.insert(format!("lambda_{}", label(subtype)), part.estimate);
    }
    diagnostics.insert("n_target".into(), m_total);
    IncidenceResult::point("subtype_external", estimate, diagnostics)
}

/// Internal-target analogue: π̂*ⱼ comes from the enrolled HIV-negative
/// records (in_target = 1) and the per-subtype weights from the internal
/// membership models.
pub fn subtype_internal(
    cross: &[SubjectRecord],
    cal: &CalibrationSet,
    encoding: FeatureEncoding,
) -> Result<IncidenceResult> {
    check_population(cross, Population::CrossSectional, "cross-sectional")?;
    let model = fit_weight_internal(cross, encoding)?;
    let enrolled = split_by_subtype(
        &cross
            .iter()
            .filter(|r| r.hiv_positive == Some(false) && r.in_target == Some(true))
            .copied()
            .collect::<Vec<_>>(),
    );
    let m_total: usize = enrolled.values().map(Vec::len).sum();
    if m_total == 0 {
        return Err(Error::Precondition("no enrolled HIV-negative records".into()));
    }
    let cross_strata = split_by_subtype(cross);
    let mut estimate = 0.0;
    let mut diagnostics = BTreeMap::new();
    for (&subtype, rows) in &enrolled {
        let share = rows.len() as f64 / m_total as f64;
        let stratum_rows = &cross_strata[&subtype];
        let a = cal.get(subtype)?;
        let part =
            extended_incidence(stratum_rows, |r| model.evaluate(r), &a.mdri, &a.frr, cal.t_star)
                .map_err(|e| Error::Stratum { subtype: label(subtype), message: e.to_string() })?;
        estimate += share * part.estimate;
        diagnostics.insert(format!("pi_star_{}", label(subtype)), share);
        diagnostics.insert(format!("lambda_{}", label(subtype)), part.estimate);
    }
    if !model.warnings.is_empty() {
        diagnostics.insert("constant_weight".into(), 1.0);
    }
    IncidenceResult::point("subtype_internal", estimate, diagnostics)
}

/// Count-based estimator under partial recency testing:
/// (N_rec − N_pos,test·β̂) / (N_pos⁻¹·N_pos,test·N_neg·(Ω̂−β̂·T*)),
/// where N_rec counts recents among tested positives. Reduces to the
/// unmodified estimator under full testing.
pub fn modified_kassanjee(
    counts: &CountSummary,
    mdri: &CalibrationEstimate,
    frr: &CalibrationEstimate,
    t_star: f64,
) -> Result<IncidenceResult> {
    let excess = excess_mdri(mdri, frr, t_star)?;
    if counts.n_pos_tested == 0 {
        return Err(Error::Precondition("no HIV-positive record took the recency test".into()));
    }
    if counts.n_neg == 0 {
        return Err(Error::Estimate("no HIV-negative records; incidence is undefined".into()));
    }
    let tested_share = counts.n_pos_tested as f64 / counts.n_pos as f64;
    let estimate = (counts.n_rec as f64 - counts.n_pos_tested as f64 * frr.point)
        / (tested_share * counts.n_neg as f64 * excess);
    let diagnostics = BTreeMap::from([
        ("n_pos".into(), counts.n_pos as f64),
        ("n_pos_tested".into(), counts.n_pos_tested as f64),
        ("n_neg".into(), counts.n_neg as f64),
        ("n_rec".into(), counts.n_rec as f64),
    ]);
    IncidenceResult::point("modified_kassanjee", estimate, diagnostics)
}

/// Internal-target estimator under partial recency testing: the weighted
/// numerator runs over tested positives only and the denominator carries
/// the tested share N_pos,test/N_pos. Requires the testing indicator on
/// every HIV-positive record.
pub fn modified_internal(
    cross: &[SubjectRecord],
    mdri: &CalibrationEstimate,
    frr: &CalibrationEstimate,
    t_star: f64,
    encoding: FeatureEncoding,
) -> Result<IncidenceResult> {
    check_population(cross, Population::CrossSectional, "cross-sectional")?;
    let excess = excess_mdri(mdri, frr, t_star)?;
    let model = fit_weight_internal(cross, encoding)?;
    let mut n_pos = 0u64;
    let mut n_pos_tested = 0u64;
    let mut numerator = 0.0;
    let mut w_neg = 0.0;
    for r in cross {
        let positive = r.hiv_positive.ok_or_else(|| {
            Error::Precondition("cross-sectional record is missing HIV status".into())
        })?;
        if positive {
            n_pos += 1;
            let tested = r.recency_tested.ok_or_else(|| {
                Error::Precondition(
                    "HIV-positive record is missing the recency-testing indicator".into(),
                )
            })?;
            if tested {
                n_pos_tested += 1;
                let recent = r.recent.ok_or_else(|| {
                    Error::Precondition("tested HIV-positive record has no recency result".into())
                })?;
                numerator += model.evaluate(r)? * (f64::from(u8::from(recent)) - frr.point);
            }
        } else {
            w_neg += model.evaluate(r)?;
        }
    }
    if n_pos_tested == 0 {
        return Err(Error::Precondition("no HIV-positive record took the recency test".into()));
    }
    if w_neg <= 0.0 {
        return Err(Error::Estimate("weighted HIV-negative mass is zero".into()));
    }
    let tested_share = n_pos_tested as f64 / n_pos as f64;
    let estimate = numerator / (tested_share * w_neg * excess);
    let mut diagnostics = BTreeMap::from([
        ("n_pos".into(), n_pos as f64),
        ("n_pos_tested".into(), n_pos_tested as f64),
        ("weighted_neg".into(), w_neg),
    ]);
    if !model.warnings.is_empty() {
        diagnostics.insert("constant_weight".into(), 1.0);
    }
    IncidenceResult::point("modified_internal", estimate, diagnostics)
}

/// 1 − (observed trial incidence)/(counterfactual incidence).
pub fn prevention_efficacy(
    trial_infections: u64,
    trial_person_years: f64,
    counterfactual: &IncidenceResult,
) -> Result<f64> {
    if !(trial_person_years.is_finite() && trial_person_years > 0.0) {
        return Err(Error::Precondition(format!(
            "trial person-years must be positive, got {trial_person_years}"
        )));
    }
    if !(counterfactual.estimate > 0.0) {
        return Err(Error::Estimate(format!(
            "counterfactual incidence must be positive to define efficacy, got {}",
            counterfactual.estimate
        )));
    }
    Ok(1.0 - (trial_infections as f64 / trial_person_years) / counterfactual.estimate)
}

/// True per-subtype population quantities for closed-form limits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlimStratum {
    pub proportion: f64,
    pub prevalence: f64,
    pub incidence: f64,
    pub mdri: f64,
    pub frr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlimParams {
    pub strata: Vec<PlimStratum>,
    pub t_star: f64,
}

impl PlimParams {
    pub fn validate(&self) -> Result<()> {
        if self.strata.is_empty() {
            return Err(Error::Precondition("no strata".into()));
        }
        let total: f64 = self.strata.iter().map(|s| s.proportion).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Precondition(format!("subtype proportions sum to {total}, not 1")));
        }
        for s in &self.strata {
            let probs = [s.proportion, s.prevalence, s.frr];
            if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Precondition("proportions, prevalences and FRRs must lie in [0, 1]".into()));
            }
            if !(s.incidence >= 0.0 && s.mdri > 0.0) {
                return Err(Error::Precondition("incidence must be nonnegative and MDRI positive".into()));
            }
        }
        Ok(())
    }
}

/// Large-sample limit of the pooled-count comparator `subtype_old`:
/// [Σⱼ((Ωⱼ−βⱼT*)(1−pⱼ)πⱼλⱼ + pⱼπⱼβⱼ) − (Σⱼpⱼπⱼ)(Σⱼπⱼβⱼ)]
/// / [(1−Σⱼpⱼπⱼ)·Σⱼπⱼ(Ωⱼ−βⱼT*)].
pub fn plim_subtype_old(params: &PlimParams) -> Result<f64> {
    params.validate()?;
    let mut cross_terms = 0.0;
    let mut mean_prev = 0.0;
    let mut mean_frr = 0.0;
    let mut mean_excess = 0.0;
    for s in &params.strata {
        let excess = s.mdri - s.frr * params.t_star;
        cross_terms += excess * (1.0 - s.prevalence) * s.proportion * s.incidence
            + s.prevalence * s.proportion * s.frr;
        mean_prev += s.prevalence * s.proportion;
        mean_frr += s.proportion * s.frr;
        mean_excess += s.proportion * excess;
    }
    let denominator = (1.0 - mean_prev) * mean_excess;
    if denominator <= 0.0 {
        return Err(Error::Estimate(format!(
            "limit expression has nonpositive denominator {denominator}"
        )));
    }
    Ok((cross_terms - mean_prev * mean_frr) / denominator)
}

/// Σⱼ πⱼ·λⱼ, the average incidence the comparator fails to target.
pub fn plim_true_mean(params: &PlimParams) -> Result<f64> {
    params.validate()?;
    Ok(params.strata.iter().map(|s| s.proportion * s.incidence).sum())
}
