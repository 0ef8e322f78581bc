//! Extension weights that recalibrate a cross-sectional sample to a target
//! population. External mode: ω(x) = P(S=1|x)/P(S=0,D=0|x) fit on the
//! pooled cross-sectional + target records. Internal mode: ω(x) =
//! P(S=1|D=0,x) fit on the HIV-negative cross-sectional records. Models are
//! fit per subtype stratum when records carry subtypes.

use crate::error::{Error, Result};
use crate::logistic::{logistic_fit_named, LogisticModel};
use crate::records::{Covariates, Population, SubjectRecord, SubtypeId};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureEncoding {
    /// Intercept + one indicator per non-reference level of each column.
    MainEffects,
    /// Intercept + one indicator per non-reference covariate pattern.
    Saturated,
}

/// Maps a covariate vector to a model feature row. Built from the training
/// records; evaluation outside the training support is an error, not an
/// extrapolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    encoding: FeatureEncoding,
    /// MainEffects: sorted levels per column, first level is the reference.
    levels: Vec<Vec<u8>>,
    /// Saturated: sorted distinct patterns, first is the reference.
    cells: Vec<Covariates>,
    feature_names: Vec<String>,
}

impl Encoder {
    fn build<'a>(encoding: FeatureEncoding, rows: impl Iterator<Item = &'a Covariates>) -> Result<Self> {
        let mut levels: Vec<Vec<u8>> = Vec::new();
        let mut cells: Vec<Covariates> = Vec::new();
        let mut n_cov = None;
        for x in rows {
            match n_cov {
                None => n_cov = Some(x.len()),
                Some(k) if k != x.len() => {
                    return Err(Error::Precondition(format!(
                        "covariate vectors have inconsistent lengths ({k} vs {})",
                        x.len()
                    )))
                }
                _ => {}
            }
            levels.resize(x.len(), Vec::new());
            for (c, &v) in x.values().iter().enumerate() {
                if let Err(pos) = levels[c].binary_search(&v) {
                    levels[c].insert(pos, v);
                }
            }
            if let Err(pos) = cells.binary_search(x) {
                cells.insert(pos, *x);
            }
        }
        if cells.is_empty() {
            return Err(Error::Precondition("no records to build a covariate encoding from".into()));
        }
        let feature_names = match encoding {
            FeatureEncoding::MainEffects => levels
                .iter()
                .enumerate()
                .flat_map(|(c, ls)| ls.iter().skip(1).map(move |v| format!("x{}_lvl{v}", c + 1)))
                .collect(),
            FeatureEncoding::Saturated => cells
                .iter()
                .skip(1)
                .map(|cell| {
                    let tags: Vec<String> = cell.values().iter().map(u8::to_string).collect();
                    format!("cell_{}", tags.join("_"))
                })
                .collect(),
        };
        Ok(Self { encoding, levels, cells, feature_names })
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Writes the feature row for `x` into `out` (resized to n_features).
    pub fn encode(&self, x: &Covariates, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        out.resize(self.n_features(), 0.0);
        match self.encoding {
            FeatureEncoding::MainEffects => {
                if x.len() != self.levels.len() {
                    return Err(Error::Precondition(format!(
                        "record has {} covariates, the weight model was fit with {}",
                        x.len(),
                        self.levels.len()
                    )));
                }
                let mut offset = 0;
                for (c, &v) in x.values().iter().enumerate() {
                    let ls = &self.levels[c];
                    match ls.binary_search(&v) {
                        Ok(0) => {}
                        Ok(i) => out[offset + i - 1] = 1.0,
                        Err(_) => {
                            return Err(Error::Precondition(format!(
                                "covariate column {} level {v} was not seen when the weight model was fit",
                                c + 1
                            )))
                        }
                    }
                    offset += ls.len() - 1;
                }
            }
            FeatureEncoding::Saturated => match self.cells.binary_search(x) {
                Ok(0) => {}
                Ok(i) => out[i - 1] = 1.0,
                Err(_) => {
                    return Err(Error::Precondition(format!(
                        "covariate pattern {:?} was not seen when the weight model was fit",
                        x.values()
                    )))
                }
            },
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightKind {
    External,
    Internal,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum StratumFit {
    /// ω(x) = P̂(S=1|x) / P̂(S=0, D=0|x), two models on the pooled stratum.
    External { numerator: LogisticModel, denominator: LogisticModel },
    /// ω(x) = P̂(S=1|D=0, x).
    Internal { membership: LogisticModel },
    /// Every HIV-negative record is in the target: extension is the identity.
    ConstantOne,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightStratum {
    pub subtype: Option<SubtypeId>,
    pub encoder: Encoder,
    pub fit: StratumFit,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightModel {
    pub kind: WeightKind,
    pub strata: Vec<WeightStratum>,
    pub warnings: Vec<String>,
}

impl WeightModel {
    pub fn stratum(&self, subtype: Option<SubtypeId>) -> Result<&WeightStratum> {
        self.strata.iter().find(|s| s.subtype == subtype).ok_or_else(|| Error::Stratum {
            subtype: subtype_label(subtype),
            message: "subtype not present in the weight model".into(),
        })
    }

    /// Weight for one record; positive and finite on the training support.
    pub fn evaluate(&self, record: &SubjectRecord) -> Result<f64> {
        let stratum = self.stratum(record.subtype)?;
        let mut features = Vec::new();
        let w = match &stratum.fit {
            StratumFit::ConstantOne => 1.0,
            StratumFit::Internal { membership } => {
                stratum.encoder.encode(&record.covariates, &mut features)?;
                membership.predict(&features)?
            }
            StratumFit::External { numerator, denominator } => {
                stratum.encoder.encode(&record.covariates, &mut features)?;
                numerator.predict(&features)? / denominator.predict(&features)?
            }
        };
        if !w.is_finite() || w <= 0.0 {
            return Err(Error::NonFinite { what: "evaluated weight".into(), at: w });
        }
        Ok(w)
    }

    /// Audit form: kind, per-stratum encoding and coefficients, warnings.
    pub fn to_audit_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("weight model serializes")
    }
}

pub fn evaluate_weight(model: &WeightModel, record: &SubjectRecord) -> Result<f64> {
    model.evaluate(record)
}

fn subtype_label(s: Option<SubtypeId>) -> String {
    match s {
        Some(j) => j.to_string(),
        None => "(none)".into(),
    }
}

/// Splits records into subtype strata. Mixing records with and without a
/// subtype is refused: it would silently change the stratification.
fn split_strata(records: &[&SubjectRecord]) -> Result<Vec<(Option<SubtypeId>, Vec<usize>)>> {
    let mut strata: BTreeMap<Option<SubtypeId>, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        strata.entry(r.subtype).or_default().push(i);
    }
    if strata.len() > 1 && strata.contains_key(&None) {
        return Err(Error::Precondition(
            "records mix missing and present subtypes; weight strata would be ambiguous".into(),
        ));
    }
    Ok(strata.into_iter().collect())
}

/// One fitted binomial model on covariate cells. Rows are aggregated per
/// distinct pattern (fractional label = cell success share, weight = cell
/// count), which is the same likelihood at a fraction of the rows.
fn fit_cells(
    encoder: &Encoder,
    cells: &BTreeMap<Covariates, (f64, f64)>,
    names: &[String],
) -> Result<LogisticModel> {
    let mut x = Array2::zeros((cells.len(), encoder.n_features()));
    let mut y = Vec::with_capacity(cells.len());
    let mut w = Vec::with_capacity(cells.len());
    let mut row = Vec::new();
    for (i, (cell, &(n, k))) in cells.iter().enumerate() {
        encoder.encode(cell, &mut row)?;
        for (j, &v) in row.iter().enumerate() {
            x[(i, j)] = v;
        }
        y.push(k / n);
        w.push(n);
    }
    logistic_fit_named(x.view(), &y, Some(&w), names)
}

fn in_stratum_error(subtype: Option<SubtypeId>, component: &str, err: Error) -> Error {
    Error::Stratum {
        subtype: subtype_label(subtype),
        message: format!("{component} model: {err}"),
    }
}

/// Fits external-mode weights on the pooled cross-sectional + target
/// records. Per stratum: a model for membership in the target sample and a
/// model for the joint event "cross-sectional and HIV-negative".
pub fn fit_weight_external(pooled: &[SubjectRecord], encoding: FeatureEncoding) -> Result<WeightModel> {
    let refs: Vec<&SubjectRecord> = pooled.iter().collect();
    let mut strata = Vec::new();
    for (subtype, idx) in split_strata(&refs)? {
        let rows: Vec<&SubjectRecord> = idx.iter().map(|&i| refs[i]).collect();
        let encoder = Encoder::build(encoding, rows.iter().map(|r| &r.covariates))?;
        // (count, target count, cross-negative count) per pattern
        let mut cells: BTreeMap<Covariates, (f64, f64, f64)> = BTreeMap::new();
        for r in &rows {
            let s = r.population == Population::ExternalTarget;
            let neg = if s {
                false
            } else {
                match r.hiv_positive {
                    Some(d) => !d,
                    None => {
                        return Err(Error::Precondition(
                            "cross-sectional record is missing HIV status".into(),
                        ))
                    }
                }
            };
            let e = cells.entry(r.covariates).or_insert((0.0, 0.0, 0.0));
            e.0 += 1.0;
            e.1 += f64::from(u8::from(s));
            e.2 += f64::from(u8::from(neg));
        }
        let total: f64 = cells.values().map(|v| v.0).sum();
        let n_target: f64 = cells.values().map(|v| v.1).sum();
        let n_neg: f64 = cells.values().map(|v| v.2).sum();
        if n_target == 0.0 {
            return Err(in_stratum_error(
                subtype,
                "numerator",
                Error::Precondition("no external-target records in the stratum".into()),
            ));
        }
        if n_target == total {
            return Err(in_stratum_error(
                subtype,
                "numerator",
                Error::Precondition("no cross-sectional records in the stratum".into()),
            ));
        }
        if n_neg == 0.0 {
            return Err(in_stratum_error(
                subtype,
                "denominator",
                Error::Precondition("no HIV-negative cross-sectional records in the stratum".into()),
            ));
        }
        let num_cells: BTreeMap<Covariates, (f64, f64)> =
            cells.iter().map(|(c, &(n, k, _))| (*c, (n, k))).collect();
        let den_cells: BTreeMap<Covariates, (f64, f64)> =
            cells.iter().map(|(c, &(n, _, k))| (*c, (n, k))).collect();
        let numerator = fit_cells(&encoder, &num_cells, &encoder.feature_names)
            .map_err(|e| in_stratum_error(subtype, "numerator", e))?;
        let denominator = fit_cells(&encoder, &den_cells, &encoder.feature_names)
            .map_err(|e| in_stratum_error(subtype, "denominator", e))?;
        strata.push(WeightStratum {
            subtype,
            encoder,
            fit: StratumFit::External { numerator, denominator },
        });
    }
    Ok(WeightModel { kind: WeightKind::External, strata, warnings: Vec::new() })
}

/// Fits internal-mode weights: target membership among the HIV-negative
/// cross-sectional records. A stratum where everyone is in the target
/// degenerates to the constant weight 1 (with a warning); a stratum where
/// nobody is in the target is an error.
pub fn fit_weight_internal(cross: &[SubjectRecord], encoding: FeatureEncoding) -> Result<WeightModel> {
    let negatives: Vec<&SubjectRecord> = cross
        .iter()
        .filter(|r| r.population == Population::CrossSectional && r.hiv_positive == Some(false))
        .collect();
    if negatives.is_empty() {
        return Err(Error::Precondition(
            "internal weights need HIV-negative cross-sectional records".into(),
        ));
    }
    let mut warnings = Vec::new();
    let mut strata = Vec::new();
    for (subtype, idx) in split_strata(&negatives)? {
        let rows: Vec<&SubjectRecord> = idx.iter().map(|&i| negatives[i]).collect();
        let encoder = Encoder::build(encoding, rows.iter().map(|r| &r.covariates))?;
        let mut cells: BTreeMap<Covariates, (f64, f64)> = BTreeMap::new();
        for r in &rows {
            let s = match r.in_target {
                Some(s) => s,
                None => {
                    return Err(in_stratum_error(
                        subtype,
                        "membership",
                        Error::Precondition(
                            "HIV-negative record is missing the target-membership indicator".into(),
                        ),
                    ))
                }
            };
            let e = cells.entry(r.covariates).or_insert((0.0, 0.0));
            e.0 += 1.0;
            e.1 += f64::from(u8::from(s));
        }
        let total: f64 = cells.values().map(|v| v.0).sum();
        let enrolled: f64 = cells.values().map(|v| v.1).sum();
        if enrolled == 0.0 {
            return Err(in_stratum_error(
                subtype,
                "membership",
                Error::Precondition("no records are in the target".into()),
            ));
        }
        let fit = if enrolled == total {
            warnings.push(format!(
                "subtype {}: every HIV-negative record is in the target; weight fixed at 1",
                subtype_label(subtype)
            ));
            StratumFit::ConstantOne
        } else {
            StratumFit::Internal {
                membership: fit_cells(&encoder, &cells, &encoder.feature_names)
                    .map_err(|e| in_stratum_error(subtype, "membership", e))?,
            }
        };
        strata.push(WeightStratum { subtype, encoder, fit });
    }
    Ok(WeightModel { kind: WeightKind::Internal, strata, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn cross_record(cov: &[u8], hiv: bool, in_target: Option<bool>, subtype: Option<u8>) -> SubjectRecord {
        SubjectRecord {
            covariates: Covariates::from_slice(cov).unwrap(),
            subtype,
            hiv_positive: Some(hiv),
            recent: None,
            recency_tested: None,
            in_target: if hiv { None } else { in_target },
            population: Population::CrossSectional,
        }
    }

    fn target_record(cov: &[u8], subtype: Option<u8>) -> SubjectRecord {
        SubjectRecord {
            covariates: Covariates::from_slice(cov).unwrap(),
            subtype,
            hiv_positive: None,
            recent: None,
            recency_tested: None,
            in_target: None,
            population: Population::ExternalTarget,
        }
    }

    /// Same covariate law in both samples, constant prevalence: the weight
    /// must be flat in x.
    #[test]
    fn identical_distributions_give_constant_external_weight() {
        let mut rng = RngStream::new(11, 0);
        let mut pooled = Vec::new();
        for _ in 0..30_000 {
            let x = [u8::from(rng.bernoulli(0.5)), u8::from(rng.bernoulli(0.3))];
            pooled.push(cross_record(&x, rng.bernoulli(0.3), None, None));
        }
        for _ in 0..10_000 {
            let x = [u8::from(rng.bernoulli(0.5)), u8::from(rng.bernoulli(0.3))];
            pooled.push(target_record(&x, None));
        }
        let model = fit_weight_external(&pooled, FeatureEncoding::Saturated).unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for a in 0..2u8 {
            for b in 0..2u8 {
                let w = model.evaluate(&cross_record(&[a, b], false, None, None)).unwrap();
                lo = lo.min(w);
                hi = hi.max(w);
            }
        }
        // The rarest cell holds ~15% of either sample, so cell frequencies
        // carry ~3% relative noise each; 1.15 leaves room for that while
        // still ruling out any real covariate effect.
        assert!(hi / lo < 1.15, "weights spread {lo}..{hi}");
    }

    /// One binary covariate with known cell probabilities: the fitted
    /// weight must match the exact frequency ratio
    /// n_t·h(x) / (n_c·g(x)·(1−p(x))).
    #[test]
    fn external_weight_matches_cell_ratio() {
        let mut rng = RngStream::new(12, 0);
        let (n_c, n_t) = (70_000u32, 30_000u32);
        let g1 = 0.4;
        let h1 = 0.7;
        let p = [0.2, 0.35];
        let mut pooled = Vec::new();
        for _ in 0..n_c {
            let x = u8::from(rng.bernoulli(g1));
            pooled.push(cross_record(&[x], rng.bernoulli(p[x as usize]), None, None));
        }
        for _ in 0..n_t {
            pooled.push(target_record(&[u8::from(rng.bernoulli(h1))], None));
        }
        let model = fit_weight_external(&pooled, FeatureEncoding::Saturated).unwrap();
        for x in 0..2u8 {
            let gx = if x == 1 { g1 } else { 1.0 - g1 };
            let hx = if x == 1 { h1 } else { 1.0 - h1 };
            let truth =
                (f64::from(n_t) * hx) / (f64::from(n_c) * gx * (1.0 - p[x as usize]));
            let got = model.evaluate(&cross_record(&[x], false, None, None)).unwrap();
            assert!((got / truth - 1.0).abs() < 0.075, "x={x}: {got} vs {truth}");
        }
    }

    #[test]
    fn missing_target_rows_is_an_error() {
        let pooled: Vec<SubjectRecord> =
            (0..100).map(|i| cross_record(&[i % 2], i % 5 == 0, None, None)).collect();
        let err = fit_weight_external(&pooled, FeatureEncoding::MainEffects).unwrap_err();
        assert!(err.to_string().contains("external-target"), "{err}");
    }

    #[test]
    fn internal_all_enrolled_short_circuits_to_one() {
        let cross: Vec<SubjectRecord> =
            (0..200).map(|i| cross_record(&[i % 2], i % 10 == 0, Some(true), None)).collect();
        let model = fit_weight_internal(&cross, FeatureEncoding::MainEffects).unwrap();
        assert_eq!(model.warnings.len(), 1);
        assert_eq!(model.evaluate(&cross_record(&[1], false, None, None)).unwrap(), 1.0);
    }

    #[test]
    fn internal_none_enrolled_is_an_error() {
        let cross: Vec<SubjectRecord> =
            (0..200).map(|i| cross_record(&[i % 2], false, Some(false), None)).collect();
        assert!(fit_weight_internal(&cross, FeatureEncoding::MainEffects).is_err());
    }

    /// Enrollment an even coin for every cell: the fitted weight sits near
    /// one half everywhere.
    #[test]
    fn internal_half_enrollment_recovered() {
        let mut rng = RngStream::new(13, 0);
        let cross: Vec<SubjectRecord> = (0..100_000)
            .map(|_| {
                let x = [u8::from(rng.bernoulli(0.5)), u8::from(rng.bernoulli(0.4))];
                cross_record(&x, false, Some(rng.bernoulli(0.5)), None)
            })
            .collect();
        let model = fit_weight_internal(&cross, FeatureEncoding::Saturated).unwrap();
        for a in 0..2u8 {
            for b in 0..2u8 {
                let w = model.evaluate(&cross_record(&[a, b], false, None, None)).unwrap();
                assert!((0.47..=0.53).contains(&w), "cell ({a},{b}): {w}");
            }
        }
    }

    #[test]
    fn internal_weights_lie_in_unit_interval() {
        let mut rng = RngStream::new(14, 0);
        let cross: Vec<SubjectRecord> = (0..5_000)
            .map(|_| {
                let x = [u8::from(rng.bernoulli(0.5))];
                let s = rng.bernoulli(if x[0] == 1 { 0.8 } else { 0.2 });
                cross_record(&x, false, Some(s), None)
            })
            .collect();
        let model = fit_weight_internal(&cross, FeatureEncoding::MainEffects).unwrap();
        for x in 0..2u8 {
            let w = model.evaluate(&cross_record(&[x], false, None, None)).unwrap();
            assert!(w > 0.0 && w < 1.0);
        }
    }

    /// Hand recomputation of the external ratio from the two component
    /// model coefficient vectors.
    #[test]
    fn evaluation_matches_component_predictions() {
        let mut rng = RngStream::new(15, 0);
        let mut pooled = Vec::new();
        for _ in 0..4_000 {
            let x = u8::from(rng.bernoulli(0.4));
            pooled.push(cross_record(&[x], rng.bernoulli(0.25), None, None));
        }
        for _ in 0..2_000 {
            pooled.push(target_record(&[u8::from(rng.bernoulli(0.6))], None));
        }
        let model = fit_weight_external(&pooled, FeatureEncoding::MainEffects).unwrap();
        let StratumFit::External { numerator, denominator } = &model.strata[0].fit else {
            panic!("external fit expected")
        };
        let sigmoid = |eta: f64| 1.0 / (1.0 + (-eta).exp());
        for x in 0..2u8 {
            let f = f64::from(x);
            let by_hand = sigmoid(numerator.coefficients[0] + numerator.coefficients[1] * f)
                / sigmoid(denominator.coefficients[0] + denominator.coefficients[1] * f);
            let got = model.evaluate(&cross_record(&[x], false, None, None)).unwrap();
            assert!((got - by_hand).abs() < 1e-12);
        }
    }

    /// Labeling every record with one subtype must reproduce the
    /// unstratified coefficients.
    #[test]
    fn single_subtype_stratification_matches_unstratified() {
        let mut rng = RngStream::new(16, 0);
        let mut plain = Vec::new();
        for _ in 0..3_000 {
            let x = u8::from(rng.bernoulli(0.5));
            plain.push(cross_record(&[x], rng.bernoulli(0.2 + 0.1 * f64::from(x)), None, None));
        }
        for _ in 0..1_000 {
            plain.push(target_record(&[u8::from(rng.bernoulli(0.55))], None));
        }
        let mut tagged = plain.clone();
        for r in &mut tagged {
            r.subtype = Some(7);
        }
        let a = fit_weight_external(&plain, FeatureEncoding::MainEffects).unwrap();
        let b = fit_weight_external(&tagged, FeatureEncoding::MainEffects).unwrap();
        let coef = |m: &WeightModel| match &m.strata[0].fit {
            StratumFit::External { numerator, denominator } => {
                (numerator.coefficients.clone(), denominator.coefficients.clone())
            }
            _ => panic!(),
        };
        let (an, ad) = coef(&a);
        let (bn, bd) = coef(&b);
        for (u, v) in an.iter().zip(&bn).chain(ad.iter().zip(&bd)) {
            assert!((u - v).abs() < 1e-10);
        }
        assert_eq!(b.strata[0].subtype, Some(7));
    }

    #[test]
    fn mixed_subtype_presence_is_refused() {
        let mut pooled = vec![cross_record(&[0], false, None, Some(1)), target_record(&[1], None)];
        pooled.push(cross_record(&[1], true, None, Some(1)));
        let err = fit_weight_external(&pooled, FeatureEncoding::MainEffects).unwrap_err();
        assert!(err.to_string().contains("mix"), "{err}");
    }

    #[test]
    fn unseen_level_is_an_extrapolation_error() {
        let mut rng = RngStream::new(17, 0);
        let mut pooled = Vec::new();
        for _ in 0..2_000 {
            let x = u8::from(rng.bernoulli(0.5));
            pooled.push(cross_record(&[x], rng.bernoulli(0.3), None, None));
            pooled.push(target_record(&[x], None));
        }
        let model = fit_weight_external(&pooled, FeatureEncoding::MainEffects).unwrap();
        let err = model.evaluate(&cross_record(&[2], false, None, None)).unwrap_err();
        assert!(err.to_string().contains("level 2"), "{err}");
        let err = model.evaluate(&cross_record(&[0, 1], false, None, None)).unwrap_err();
        assert!(err.to_string().contains("covariates"), "{err}");
    }

    #[test]
    fn unknown_subtype_is_an_error() {
        let cross: Vec<SubjectRecord> =
            (0..100).map(|i| cross_record(&[i % 2], false, Some(i % 3 == 0), Some(1))).collect();
        let model = fit_weight_internal(&cross, FeatureEncoding::MainEffects).unwrap();
        assert!(model.evaluate(&cross_record(&[0], false, None, Some(2))).is_err());
    }

    #[test]
    fn audit_json_round_trips() {
        let cross: Vec<SubjectRecord> =
            (0..100).map(|i| cross_record(&[i % 2], false, Some(i % 3 == 0), None)).collect();
        let model = fit_weight_internal(&cross, FeatureEncoding::MainEffects).unwrap();
        let text = model.to_audit_json();
        assert!(text.contains("Internal"));
        let back: WeightModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back.strata.len(), model.strata.len());
    }
}
