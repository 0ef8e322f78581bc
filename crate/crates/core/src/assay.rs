//! Recency-assay models: duration-specific test-recent probability φ(u),
//! the mean duration of recent infection (MDRI) Ω = ∫₀^{T*} φ, the
//! false-recent rate (FRR) β = φ beyond T*, and estimation of both from
//! calibration panels.

use crate::error::{Error, Result};
use crate::gamma::{gamma_cdf, GammaParams};
use crate::logistic::logistic_fit;
use crate::quadrature::integrate;
use crate::rng::RngStream;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub const DAYS_PER_YEAR: f64 = 365.25;

/// Two-sided 95% normal quantile, shared by every interval in the crate.
pub const Z_95: f64 = 1.959_964;

/// Simulated-panel shape: subjects enter at evenly spaced offsets across
/// [0, PANEL_ENTRY_SPAN_YEARS] and are seen every two months.
pub const PANEL_VISITS_PER_SUBJECT: usize = 6;
pub const PANEL_VISIT_SPACING_YEARS: f64 = 1.0 / 6.0;
pub const PANEL_ENTRY_SPAN_YEARS: f64 = 2.0;

/// Functional form of φ(u).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PhiSpec {
    /// φ(u) = 1 − F_Gamma(u)
    GammaSurvival(GammaParams),
    /// Gamma survival up to `cut` years, a constant plateau after.
    GammaSurvivalWithPlateau { params: GammaParams, plateau: f64, cut: f64 },
    /// Piecewise-linear interpolation of (duration, probability) knots,
    /// constant beyond the ends.
    Tabulated(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecencyAssay {
    pub subtype_label: String,
    pub phi_spec: PhiSpec,
    /// Recency cutoff T* in years.
    pub t_star: f64,
}

impl RecencyAssay {
    pub fn new(subtype_label: impl Into<String>, phi_spec: PhiSpec, t_star: f64) -> Result<Self> {
        if !(t_star.is_finite() && t_star > 0.0) {
            return Err(Error::Domain(format!("t_star must be positive, got {t_star}")));
        }
        match &phi_spec {
            PhiSpec::GammaSurvival(_) => {}
            PhiSpec::GammaSurvivalWithPlateau { plateau, cut, .. } => {
                if !(0.0..=1.0).contains(plateau) || !plateau.is_finite() {
                    return Err(Error::Domain(format!("plateau must be a probability, got {plateau}")));
                }
                if !(cut.is_finite() && *cut > 0.0) {
                    return Err(Error::Domain(format!("cut must be positive, got {cut}")));
                }
            }
            PhiSpec::Tabulated(knots) => {
                if knots.is_empty() {
                    return Err(Error::Domain("tabulated assay needs at least one knot".into()));
                }
                for pair in knots.windows(2) {
                    if pair[1].0 <= pair[0].0 {
                        return Err(Error::Domain("tabulated durations must strictly increase".into()));
                    }
                }
                if knots.iter().any(|&(u, p)| u < 0.0 || !(0.0..=1.0).contains(&p)) {
                    return Err(Error::Domain(
                        "tabulated knots need durations >= 0 and probabilities in [0, 1]".into(),
                    ));
                }
            }
        }
        Ok(Self { subtype_label: subtype_label.into(), phi_spec, t_star })
    }

    /// Test-recent probability at infection duration `u` years.
    pub fn phi(&self, u: f64) -> Result<f64> {
        if !u.is_finite() || u < 0.0 {
            return Err(Error::Domain(format!("duration must be a nonnegative real, got {u}")));
        }
        match &self.phi_spec {
            PhiSpec::GammaSurvival(params) => Ok(1.0 - gamma_cdf(u, *params)?),
            PhiSpec::GammaSurvivalWithPlateau { params, plateau, cut } => {
                if u <= *cut {
                    Ok(1.0 - gamma_cdf(u, *params)?)
                } else {
                    Ok(*plateau)
                }
            }
            PhiSpec::Tabulated(knots) => Ok(interp(knots, u)),
        }
    }

    /// Ω = ∫₀^{T*} φ(u) du, in years.
    pub fn mdri(&self) -> Result<f64> {
        match &self.phi_spec {
            // Exact piecewise-linear integral; quadrature would chase the
            // kinks adaptively for no benefit.
            PhiSpec::Tabulated(knots) => Ok(integrate_tabulated(knots, self.t_star)),
            _ => integrate(|u| self.phi(u).unwrap_or(f64::NAN), 0.0, self.t_star),
        }
    }

    /// β: the plateau constant if the spec has one, else φ(T*).
    pub fn frr(&self) -> Result<f64> {
        match &self.phi_spec {
            PhiSpec::GammaSurvivalWithPlateau { plateau, .. } => Ok(*plateau),
            _ => self.phi(self.t_star),
        }
    }
}

fn interp(knots: &[(f64, f64)], u: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if u <= first.0 {
        return first.1;
    }
    if u >= last.0 {
        return last.1;
    }
    let i = knots.partition_point(|&(x, _)| x <= u);
    let (x0, y0) = knots[i - 1];
    let (x1, y1) = knots[i];
    y0 + (y1 - y0) * (u - x0) / (x1 - x0)
}

fn integrate_tabulated(knots: &[(f64, f64)], t_star: f64) -> f64 {
    // Trapezoid over knots clipped to [0, t_star], constant extension at
    // the ends.
    let mut xs = vec![0.0, t_star];
    xs.extend(knots.iter().map(|&(x, _)| x).filter(|&x| x > 0.0 && x < t_star));
    xs.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for pair in xs.windows(2) {
        total += 0.5 * (interp(knots, pair[0]) + interp(knots, pair[1])) * (pair[1] - pair[0]);
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CalibrationQuantity {
    Mdri,
    Frr,
}

/// A point estimate with standard error and 95% interval, for Ω̂ or β̂.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CalibrationEstimate {
    pub quantity: CalibrationQuantity,
    pub point: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl CalibrationEstimate {
    pub fn new(quantity: CalibrationQuantity, point: f64, se: f64, ci_lo: f64, ci_hi: f64) -> Result<Self> {
        if !(point.is_finite() && se.is_finite() && ci_lo.is_finite() && ci_hi.is_finite()) {
            return Err(Error::Domain("calibration estimate fields must be finite".into()));
        }
        if point < 0.0 || se < 0.0 || ci_lo < 0.0 {
            return Err(Error::Domain("calibration estimate fields must be nonnegative".into()));
        }
        if !(ci_lo <= point && point <= ci_hi) {
            return Err(Error::Domain(format!(
                "interval [{ci_lo}, {ci_hi}] must contain the point {point}"
            )));
        }
        Ok(Self { quantity, point, se, ci_lo, ci_hi })
    }

    /// Known-exact value: zero SE, zero-width interval.
    pub fn exact(quantity: CalibrationQuantity, point: f64) -> Self {
        Self { quantity, point, se: 0.0, ci_lo: point, ci_hi: point }
    }
}

/// One follow-up visit of a seroconverter with known infection duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelVisit {
    pub subject_id: u32,
    pub duration_years: f64,
    pub recent: bool,
}

/// One subject known to be infected longer than T*.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelSubject {
    pub subject_id: u32,
    pub recent: bool,
}

/// External calibration data: a longitudinal seroconverter panel for the
/// MDRI and a long-infected cohort for the FRR.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPanel {
    pub longitudinal: Vec<PanelVisit>,
    pub long_infected: Vec<PanelSubject>,
}

impl CalibrationPanel {
    pub fn validate(&self) -> Result<()> {
        if self.longitudinal.iter().any(|v| !v.duration_years.is_finite() || v.duration_years < 0.0) {
            return Err(Error::Precondition("longitudinal durations must be nonnegative".into()));
        }
        Ok(())
    }
}

/// MDRI point estimate from the longitudinal rows with duration at most
/// `t_star` + 0.5 years: binomial regression of the recency result on a
/// cubic polynomial of duration, integrated over [0, t_star]. Single-class
/// windows short-circuit to the constant fit.
pub fn estimate_mdri_point(panel: &CalibrationPanel, t_star: f64) -> Result<f64> {
    let rows: Vec<(f64, bool)> = panel
        .longitudinal
        .iter()
        .filter(|v| v.duration_years <= t_star + 0.5)
        .map(|v| (v.duration_years, v.recent))
        .collect();
    mdri_point_from_rows(&rows, t_star)
}

fn mdri_point_from_rows(rows: &[(f64, bool)], t_star: f64) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Precondition(
            "no longitudinal rows with duration inside the fitting window".into(),
        ));
    }
    let recents = rows.iter().filter(|r| r.1).count();
    if recents == rows.len() {
        return Ok(t_star);
    }
    if recents == 0 {
        return Ok(0.0);
    }
    let mut x = Array2::zeros((rows.len(), 3));
    let mut y = Vec::with_capacity(rows.len());
    for (i, &(u, recent)) in rows.iter().enumerate() {
        x[(i, 0)] = u;
        x[(i, 1)] = u * u;
        x[(i, 2)] = u * u * u;
        y.push(f64::from(u8::from(recent)));
    }
    let model = logistic_fit(x.view(), &y, None)?;
    integrate(|u| model.predict(&[u, u * u, u * u * u]).unwrap_or(f64::NAN), 0.0, t_star)
}

/// MDRI with SE and 95% interval from 200 subject-level bootstrap
/// resamples of the longitudinal panel.
pub fn estimate_mdri(panel: &CalibrationPanel, t_star: f64, rng: &mut RngStream) -> Result<CalibrationEstimate> {
    const ROUNDS: usize = 200;
    panel.validate()?;
    let point = estimate_mdri_point(panel, t_star)?;

    // Rows grouped per subject; resampling draws whole subjects.
    let mut subjects: Vec<Vec<(f64, bool)>> = Vec::new();
    let mut index: std::collections::BTreeMap<u32, usize> = std::collections::BTreeMap::new();
    for v in &panel.longitudinal {
        if v.duration_years > t_star + 0.5 {
            continue;
        }
        let slot = *index.entry(v.subject_id).or_insert_with(|| {
            subjects.push(Vec::new());
            subjects.len() - 1
        });
        subjects[slot].push((v.duration_years, v.recent));
    }
    if subjects.len() < 2 {
        return Err(Error::Precondition(format!(
            "MDRI estimation needs at least 2 subjects in the fitting window, got {}",
            subjects.len()
        )));
    }

    let mut replicates = Vec::with_capacity(ROUNDS);
    let mut rows = Vec::new();
    for _ in 0..ROUNDS {
        rows.clear();
        for _ in 0..subjects.len() {
            rows.extend_from_slice(&subjects[rng.index(subjects.len())]);
        }
        if let Ok(value) = mdri_point_from_rows(&rows, t_star) {
            replicates.push(value);
        }
    }
    if replicates.len() < 2 {
        return Err(Error::NoConvergence {
            what: "MDRI bootstrap (all rounds failed)".into(),
            iterations: ROUNDS,
        });
    }
    let mean = replicates.iter().sum::<f64>() / replicates.len() as f64;
    let var = replicates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (replicates.len() - 1) as f64;
    let se = var.sqrt();
    CalibrationEstimate::new(
        CalibrationQuantity::Mdri,
        point,
        se,
        (point - Z_95 * se).max(0.0),
        point + Z_95 * se,
    )
}

/// FRR: proportion testing recent among the long-infected, binomial SE,
/// Wilson 95% interval.
pub fn estimate_frr(panel: &CalibrationPanel) -> Result<CalibrationEstimate> {
    let n = panel.long_infected.len();
    if n == 0 {
        return Err(Error::Precondition("FRR estimation needs long-infected rows".into()));
    }
    let k = panel.long_infected.iter().filter(|s| s.recent).count();
    let point = k as f64 / n as f64;
    let se = (point * (1.0 - point) / n as f64).sqrt();
    let (lo, hi) = wilson(k as f64, n as f64);
    CalibrationEstimate::new(CalibrationQuantity::Frr, point, se, lo, hi)
}

fn wilson(k: f64, n: f64) -> (f64, f64) {
    let z2 = Z_95 * Z_95;
    let p = k / n;
    let center = p + z2 / (2.0 * n);
    let spread = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let denom = 1.0 + z2 / n;
    (((center - spread) / denom).max(0.0), ((center + spread) / denom).min(1.0))
}
