//! Logistic regression by iteratively reweighted least squares.
//!
//! Supports case weights so that duplicated rows and weighted unique rows
//! fit identically; labels may be fractions in [0, 1], in which case a row
//! is a binomial aggregate (label = success proportion, weight = trials).

use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

const SCORE_TOL: f64 = 1e-8;
const MAX_ITER: usize = 50;
const MAX_HALVINGS: usize = 20;
const SEPARATION_LIMIT: f64 = 1e4;
/// Log-odds past which a row counts as fit with certainty (p < 5e-5 of
/// the wrong class ... e^{-10}); used only by the separation check.
const MARGIN_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Intercept first, then one coefficient per feature.
    pub coefficients: Vec<f64>,
    /// Names of the features (the intercept is implicit).
    pub feature_names: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
}

impl LogisticModel {
    /// Inverse-logit of the linear predictor at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() + 1 != self.coefficients.len() {
            return Err(Error::Precondition(format!(
                "feature vector has length {}, model expects {}",
                x.len(),
                self.coefficients.len() - 1
            )));
        }
        let eta = self.coefficients[0]
            + x.iter().zip(&self.coefficients[1..]).map(|(xi, b)| xi * b).sum::<f64>();
        Ok(sigmoid(eta))
    }
}

/// See [`LogisticModel::predict`].
pub fn logistic_predict(model: &LogisticModel, x: &[f64]) -> Result<f64> {
    model.predict(x)
}

/// Maximum-likelihood fit with default feature names `x1..xk`.
pub fn logistic_fit(
    features: ArrayView2<f64>,
    labels: &[f64],
    weights: Option<&[f64]>,
) -> Result<LogisticModel> {
    let names: Vec<String> = (1..=features.ncols()).map(|j| format!("x{j}")).collect();
    logistic_fit_named(features, labels, weights, &names)
}

pub fn logistic_fit_named(
    features: ArrayView2<f64>,
    labels: &[f64],
    weights: Option<&[f64]>,
    names: &[String],
) -> Result<LogisticModel> {
    let n = features.nrows();
    let k = features.ncols();
    if labels.len() != n {
        return Err(Error::Precondition(format!("{n} feature rows but {} labels", labels.len())));
    }
    if names.len() != k {
        return Err(Error::Precondition(format!("{k} feature columns but {} names", names.len())));
    }
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::Precondition(format!("{n} rows but {} weights", w.len())));
        }
        if w.iter().any(|&wi| !wi.is_finite() || wi <= 0.0) {
            return Err(Error::Precondition("case weights must be finite and positive".into()));
        }
    }
    if labels.iter().any(|&y| !(0.0..=1.0).contains(&y)) {
        return Err(Error::Precondition("labels must lie in [0, 1]".into()));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::Precondition("features must be finite".into()));
    }
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);
    let (mut ones, mut zeros, mut n_eff) = (0.0, 0.0, 0.0);
    for (i, &y) in labels.iter().enumerate() {
        ones += weight(i) * y;
        zeros += weight(i) * (1.0 - y);
        n_eff += weight(i);
    }
    if ones <= 0.0 || zeros <= 0.0 {
        return Err(Error::Precondition("labels must include both classes".into()));
    }
    // Effective count (not row count): aggregated rows carry their trials
    // in the weight.
    if n_eff <= (k + 1) as f64 {
        return Err(Error::Precondition(format!(
            "effective sample size {n_eff} must exceed parameter count {}",
            k + 1
        )));
    }

    let p = k + 1;
    let mut beta = vec![0.0; p];
    let mut eta = vec![0.0; n];
    let mut deviance = deviance_at(&eta, labels, &weight);
    let mut score = vec![0.0; p];
    let mut info = Array2::<f64>::zeros((p, p));
    let mut iterations = 0;
    let mut converged = false;

    for iter in 0..=MAX_ITER {
        score.iter_mut().for_each(|s| *s = 0.0);
        info.fill(0.0);
        for i in 0..n {
            let mu = sigmoid(eta[i]);
            let wi = weight(i);
            let resid = wi * (labels[i] - mu);
            // Floor keeps the information matrix positive definite when a
            // fitted probability saturates.
            let wvar = (wi * mu * (1.0 - mu)).max(1e-10 * wi);
            let row = features.row(i);
            let x = |j: usize| if j == 0 { 1.0 } else { row[j - 1] };
            for a in 0..p {
                score[a] += resid * x(a);
                for b in a..p {
                    info[(a, b)] += wvar * x(a) * x(b);
                }
            }
        }
        let max_score = score.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if max_score <= SCORE_TOL {
            converged = true;
            break;
        }
        if iter == MAX_ITER {
            break;
        }
        iterations = iter + 1;
        for a in 0..p {
            for b in 0..a {
                info[(a, b)] = info[(b, a)];
            }
        }
        let delta = solve_spd(&mut info, &score, names)?;

        // Step-halving keeps small resamples from oscillating.
        let mut step = 1.0;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = beta.iter().zip(&delta).map(|(b, d)| b + step * d).collect();
            for i in 0..n {
                let row = features.row(i);
                eta[i] = cand[0] + row.iter().zip(&cand[1..]).map(|(x, b)| x * b).sum::<f64>();
            }
            let cand_dev = deviance_at(&eta, labels, &weight);
            if cand_dev <= deviance + 1e-10 || step <= 1.0 / (1u64 << MAX_HALVINGS) as f64 {
                beta = cand;
                deviance = cand_dev;
                break;
            }
            step /= 2.0;
        }
        let max_coefficient = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        if max_coefficient > SEPARATION_LIMIT {
            return Err(Error::Separation { max_coefficient });
        }
    }

    // Complete separation makes the score vanish numerically at finite
    // coefficients (probabilities saturate in double precision), so a
    // norm bound alone cannot catch it. The signature instead: every row
    // carries an exact 0/1 label and is fit on the correct side with a
    // huge margin. Any fractional label or any row near the boundary
    // clears the fit.
    let all_binary = labels.iter().all(|&y| y == 0.0 || y == 1.0);
    if all_binary
        && eta
            .iter()
            .zip(labels)
            .all(|(&e, &y)| if y == 1.0 { e > MARGIN_LIMIT } else { e < -MARGIN_LIMIT })
    {
        let max_coefficient = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        return Err(Error::Separation { max_coefficient });
    }

    Ok(LogisticModel {
        coefficients: beta,
        feature_names: names.to_vec(),
        converged,
        iterations,
    })
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + eᵗ) without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn deviance_at(eta: &[f64], labels: &[f64], weight: &dyn Fn(usize) -> f64) -> f64 {
    let mut dev = 0.0;
    for (i, (&e, &y)) in eta.iter().zip(labels).enumerate() {
        // ln μ = −softplus(−η), ln(1−μ) = −softplus(η)
        dev += 2.0 * weight(i) * (y * softplus(-e) + (1.0 - y) * softplus(e));
    }
    dev
}

/// Solve A·x = b for symmetric positive-definite A by Cholesky, in place.
fn solve_spd(a: &mut Array2<f64>, b: &[f64], names: &[String]) -> Result<Vec<f64>> {
    let p = b.len();
    let max_diag = (0..p).fold(0.0f64, |m, j| m.max(a[(j, j)]));
    let column_name = |j: usize| {
        if j == 0 {
            "intercept".to_string()
        } else {
            names.get(j - 1).cloned().unwrap_or_else(|| format!("x{j}"))
        }
    };
    for j in 0..p {
        for i in j..p {
            let mut sum = a[(i, j)];
            for l in 0..j {
                sum -= a[(i, l)] * a[(j, l)];
            }
            if i == j {
                if sum <= 1e-12 * max_diag.max(1.0) {
                    return Err(Error::RankDeficient { column: j, name: column_name(j) });
                }
                a[(j, j)] = sum.sqrt();
            } else {
                a[(i, j)] = sum / a[(j, j)];
            }
        }
    }
    let mut x = b.to_vec();
    for i in 0..p {
        for l in 0..i {
            x[i] = x[i] - a[(i, l)] * x[l];
        }
        x[i] /= a[(i, i)];
    }
    for i in (0..p).rev() {
        for l in i + 1..p {
            x[i] = x[i] - a[(l, i)] * x[l];
        }
        x[i] /= a[(i, i)];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn fit(rows: &[(Vec<f64>, f64)], weights: Option<&[f64]>) -> Result<LogisticModel> {
        let k = rows[0].0.len();
        let mut x = Array2::zeros((rows.len(), k));
        let mut y = Vec::with_capacity(rows.len());
        for (i, (xs, yi)) in rows.iter().enumerate() {
            for (j, v) in xs.iter().enumerate() {
                x[(i, j)] = *v;
            }
            y.push(*yi);
        }
        logistic_fit(x.view(), &y, weights)
    }

    #[test]
    fn intercept_only_balanced_labels() {
        let rows: Vec<(Vec<f64>, f64)> =
            (0..10).map(|i| (vec![], if i < 5 { 1.0 } else { 0.0 })).collect();
        let m = fit(&rows, None).unwrap();
        assert!(m.converged);
        assert!(m.coefficients[0].abs() <= 1e-8);
    }

    #[test]
    fn symmetric_binary_feature_has_zero_slope() {
        // Equal class rates at both feature levels.
        let mut rows = Vec::new();
        for &x in &[0.0, 1.0] {
            for i in 0..10 {
                rows.push((vec![x], if i < 5 { 1.0 } else { 0.0 }));
            }
        }
        let m = fit(&rows, None).unwrap();
        assert!(m.converged);
        assert!(m.coefficients[1].abs() <= 1e-8, "slope {}", m.coefficients[1]);
    }

    #[test]
    fn recovers_known_coefficients_and_beats_truth() {
        let truth = [1.0, -0.5];
        let mut rng = crate::rng::RngStream::new(11, 0);
        let mut rows = Vec::new();
        for _ in 0..200 {
            let x = rng.uniform_range(-2.0, 2.0);
            let p = sigmoid(truth[0] + truth[1] * x);
            rows.push((vec![x], f64::from(u8::from(rng.bernoulli(p)))));
        }
        let m = fit(&rows, None).unwrap();
        assert!(m.converged);
        let ll = |b: &[f64]| {
            -rows
                .iter()
                .map(|(x, y)| {
                    let eta = b[0] + b[1] * x[0];
                    y * softplus(-eta) + (1.0 - y) * softplus(eta)
                })
                .sum::<f64>()
        };
        assert!(ll(&m.coefficients) >= ll(&truth));
        assert!((m.coefficients[0] - truth[0]).abs() < 0.5);
        assert!((m.coefficients[1] - truth[1]).abs() < 0.5);
    }

    #[test]
    fn duplicated_rows_equal_count_weights() {
        let unique = [(vec![0.0], 0.30), (vec![1.0], 0.55)];
        let counts = [40.0, 60.0];
        let mut dup_rows = Vec::new();
        for ((x, frac), n) in unique.iter().zip(&counts) {
            let successes = (frac * n) as usize;
            for i in 0..*n as usize {
                dup_rows.push((x.clone(), f64::from(u8::from(i < successes))));
            }
        }
        let dup = fit(&dup_rows, None).unwrap();
        let agg_rows: Vec<(Vec<f64>, f64)> = unique.to_vec();
        let agg = fit(&agg_rows, Some(&counts)).unwrap();
        for (a, b) in dup.coefficients.iter().zip(&agg.coefficients) {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn separation_is_detected() {
        let rows: Vec<(Vec<f64>, f64)> = (0..40)
            .map(|i| {
                let x = i as f64 / 10.0 - 2.0;
                (vec![x], f64::from(u8::from(x > 0.0)))
            })
            .collect();
        match fit(&rows, None) {
            Err(Error::Separation { .. }) => {}
            other => panic!("expected separation error, got {other:?}"),
        }
    }

    #[test]
    fn collinear_column_is_named() {
        let rows: Vec<(Vec<f64>, f64)> = (0..30)
            .map(|i| {
                let x = i as f64 / 30.0;
                (vec![x, 2.0 * x], f64::from(u8::from(i % 3 == 0)))
            })
            .collect();
        match fit(&rows, None) {
            Err(Error::RankDeficient { name, .. }) => assert_eq!(name, "x2"),
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let rows = [(vec![1.0], 1.0), (vec![0.0], 0.0), (vec![0.5], 0.0)];
        assert!(fit(&rows, Some(&[1.0, -1.0, 1.0])).is_err());
        assert!(fit(&rows, Some(&[1.0, 1.0])).is_err());
        let one_class = [(vec![1.0], 1.0), (vec![0.0], 1.0), (vec![0.5], 1.0)];
        assert!(fit(&one_class, None).is_err());
    }

    #[test]
    fn predict_matches_formula() {
        let m = LogisticModel {
            coefficients: vec![0.0],
            feature_names: vec![],
            converged: true,
            iterations: 0,
        };
        assert!((m.predict(&[]).unwrap() - 0.5).abs() < 1e-15);
        let m = LogisticModel {
            coefficients: vec![3.0f64.ln()],
            feature_names: vec![],
            converged: true,
            iterations: 0,
        };
        assert!((m.predict(&[]).unwrap() - 0.75).abs() < 1e-12);
        let m = LogisticModel {
            coefficients: vec![0.2, -0.7, 0.4],
            feature_names: vec!["a".into(), "b".into()],
            converged: true,
            iterations: 0,
        };
        let x = [1.5, -2.0];
        let eta = 0.2 - 0.7 * 1.5 + 0.4 * -2.0;
        assert!((m.predict(&x).unwrap() - sigmoid(eta)).abs() < 1e-12);
        assert!(m.predict(&[1.0]).is_err());
    }
}
