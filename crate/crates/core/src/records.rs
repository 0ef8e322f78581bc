//! Subject-level data: covariates, HIV status, recency outcome, testing
//! and target-membership indicators.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Index into the dataset's subtype label list.
pub type SubtypeId = u8;

pub const MAX_COVARIATES: usize = 12;

/// Fixed-order categorical covariate codes, inline for copyable records.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct Covariates {
    len: u8,
    vals: [u8; MAX_COVARIATES],
}

impl Covariates {
    pub fn from_slice(values: &[u8]) -> Result<Self> {
        if values.len() > MAX_COVARIATES {
            return Err(Error::Precondition(format!(
                "at most {MAX_COVARIATES} covariates are supported, got {}",
                values.len()
            )));
        }
        let mut vals = [0u8; MAX_COVARIATES];
        vals[..values.len()].copy_from_slice(values);
        Ok(Self { len: values.len() as u8, vals })
    }

    pub fn values(&self) -> &[u8] {
        &self.vals[..self.len as usize]
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Population {
    CrossSectional,
    ExternalTarget,
}

/// One surveyed or sampled person.
///
/// Cross-sectional records carry HIV status `hiv_positive`, and when
/// positive a recency-test indicator `recency_tested` plus (if tested) the
/// `recent` result; HIV-negative records may carry the internal-enrollment
/// indicator `in_target`. External-target records carry covariates only.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub covariates: Covariates,
    pub subtype: Option<SubtypeId>,
    pub hiv_positive: Option<bool>,
    pub recent: Option<bool>,
    pub recency_tested: Option<bool>,
    pub in_target: Option<bool>,
    pub population: Population,
}

impl SubjectRecord {
    /// Field-consistency rules; parsers call this per row.
    pub fn validate(&self) -> Result<()> {
        match self.population {
            Population::ExternalTarget => {
                if self.hiv_positive.is_some()
                    || self.recent.is_some()
                    || self.recency_tested.is_some()
                    || self.in_target.is_some()
                {
                    return Err(Error::Precondition(
                        "external-target records carry covariates and subtype only".into(),
                    ));
                }
            }
            Population::CrossSectional => {
                let Some(positive) = self.hiv_positive else {
                    return Err(Error::Precondition(
                        "cross-sectional records need an HIV status".into(),
                    ));
                };
                if !positive && (self.recent.is_some() || self.recency_tested.is_some()) {
                    return Err(Error::Precondition(
                        "recency fields are defined only for HIV-positive records".into(),
                    ));
                }
                if positive && self.in_target.is_some() {
                    return Err(Error::Precondition(
                        "target enrollment is defined only for HIV-negative records".into(),
                    ));
                }
                if self.recent.is_some() && self.recency_tested == Some(false) {
                    return Err(Error::Precondition(
                        "a recency result requires the test to have been taken".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// The four counts entering the count-based incidence estimators.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CountSummary {
    pub n_pos: u64,
    pub n_neg: u64,
    pub n_rec: u64,
    pub n_pos_tested: u64,
}

impl CountSummary {
    pub fn new(n_pos: u64, n_neg: u64, n_rec: u64, n_pos_tested: u64) -> Result<Self> {
        if n_rec > n_pos_tested || n_pos_tested > n_pos {
            return Err(Error::Precondition(format!(
                "counts must satisfy n_rec <= n_pos_tested <= n_pos, got {n_rec}/{n_pos_tested}/{n_pos}"
            )));
        }
        Ok(Self { n_pos, n_neg, n_rec, n_pos_tested })
    }

    pub fn total(&self) -> u64 {
        self.n_pos + self.n_neg
    }

    /// Tally cross-sectional rows; external-target rows are skipped. A
    /// positive record with no testing indicator counts as tested.
    pub fn from_records(records: &[SubjectRecord]) -> Result<Self> {
        let mut c = CountSummary::default();
        for r in records {
            if r.population != Population::CrossSectional {
                continue;
            }
            match r.hiv_positive {
                Some(true) => {
                    c.n_pos += 1;
                    if r.recency_tested != Some(false) {
                        c.n_pos_tested += 1;
                    }
                    if r.recent == Some(true) {
                        c.n_rec += 1;
                    }
                }
                Some(false) => c.n_neg += 1,
                None => {
                    return Err(Error::Precondition(
                        "cross-sectional record lacks HIV status".into(),
                    ))
                }
            }
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cross(positive: bool) -> SubjectRecord {
        SubjectRecord {
            covariates: Covariates::from_slice(&[0, 1]).unwrap(),
            subtype: None,
            hiv_positive: Some(positive),
            recent: None,
            recency_tested: None,
            in_target: None,
            population: Population::CrossSectional,
        }
    }

    #[test]
    fn covariate_bounds() {
        assert!(Covariates::from_slice(&[0; 13]).is_err());
        let c = Covariates::from_slice(&[1, 0, 2]).unwrap();
        assert_eq!(c.values(), &[1, 0, 2]);
        assert_eq!(Covariates::from_slice(&[]).unwrap().len(), 0);
    }

    #[test]
    fn validation_rules() {
        let mut r = cross(true);
        r.recent = Some(true);
        assert!(r.validate().is_ok());
        r.recency_tested = Some(false);
        assert!(r.validate().is_err());

        let mut r = cross(false);
        r.recent = Some(false);
        assert!(r.validate().is_err());

        let mut r = cross(true);
        r.in_target = Some(true);
        assert!(r.validate().is_err());

        let mut r = cross(false);
        r.in_target = Some(true);
        assert!(r.validate().is_ok());
        r.hiv_positive = None;
        assert!(r.validate().is_err());

        let mut t = cross(false);
        t.population = Population::ExternalTarget;
        assert!(t.validate().is_err());
        t.hiv_positive = None;
        assert!(t.validate().is_ok());
    }

    #[test]
    fn counts_tally_and_invariants() {
        let mut rows = vec![cross(false); 7];
        for _ in 0..3 {
            let mut r = cross(true);
            r.recent = Some(true);
            r.recency_tested = Some(true);
            rows.push(r);
        }
        let mut untested = cross(true);
        untested.recency_tested = Some(false);
        rows.push(untested);
        let mut t = cross(false);
        t.population = Population::ExternalTarget;
        t.hiv_positive = None;
        rows.push(t);

        let c = CountSummary::from_records(&rows).unwrap();
        assert_eq!(c, CountSummary { n_pos: 4, n_neg: 7, n_rec: 3, n_pos_tested: 3 });
        assert_eq!(c.total(), 11);
        assert!(CountSummary::new(5, 10, 3, 2).is_err());
        assert!(CountSummary::new(5, 10, 2, 6).is_err());
    }
}
