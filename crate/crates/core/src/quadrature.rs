//! Adaptive Gauss–Kronrod quadrature.
//!
//! A 7-point Gauss rule embedded in a 15-point Kronrod rule, bisecting any
//! panel whose Gauss/Kronrod discrepancy exceeds its share of the absolute
//! tolerance. The Kronrod value is exact for polynomials through degree 22
//! on each panel, and panel sums preserve that exactness.

use crate::error::{Error, Result};

/// Absolute tolerance used by [`integrate`].
pub const ABS_TOL: f64 = 1e-9;

// 15-point Kronrod abscissae (positive half) with the embedded 7-point
// Gauss rule at every other node.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

const MAX_PANELS: usize = 10_000;

/// ∫ₐᵇ f, absolute tolerance [`ABS_TOL`].
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    integrate_to(f, a, b, ABS_TOL)
}

/// ∫ₐᵇ f to a caller-chosen absolute tolerance.
pub fn integrate_to<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite() && a <= b) {
        return Err(Error::Domain(format!("integration bounds must be finite with a <= b, got [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut panels = 0usize;
    let mut stack = vec![(a, b, tol.max(f64::MIN_POSITIVE))];
    while let Some((lo, hi, share)) = stack.pop() {
        panels += 1;
        if panels > MAX_PANELS {
            return Err(Error::NoConvergence { what: "adaptive quadrature".into(), iterations: MAX_PANELS });
        }
        let (kronrod, gauss) = panel(&mut f, lo, hi)?;
        let width = hi - lo;
        // Roundoff floor: once panels are this thin, further splitting
        // cannot improve the estimate.
        if (kronrod - gauss).abs() <= share || width <= 1e-14 * (lo.abs() + hi.abs() + 1.0) {
            total += kronrod;
        } else {
            let mid = lo + width / 2.0;
            stack.push((lo, mid, share / 2.0));
            stack.push((mid, hi, share / 2.0));
        }
    }
    Ok(total)
}

fn panel<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let half = (hi - lo) / 2.0;
    let center = lo + half;
    let mut eval = |x: f64| -> Result<f64> {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::NonFinite { what: "integrand".into(), at: x })
        }
    };
    let fc = eval(center)?;
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (i, &x) in XGK.iter().enumerate().take(7) {
        let dx = half * x;
        let pair = eval(center - dx)? + eval(center + dx)?;
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    Ok((kronrod * half, gauss * half))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constants_and_lines() {
        assert!((integrate(|_| 1.0, 0.0, 2.0).unwrap() - 2.0).abs() < 1e-13);
        assert!((integrate(|u| u, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-13);
        assert_eq!(integrate(|u| u, 3.0, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn polynomials_up_to_rule_degree_are_exact() {
        // Kronrod-15 degree is 22.
        let got = integrate(|x| x.powi(13), 0.0, 1.0).unwrap();
        assert!((got - 1.0 / 14.0).abs() < 1e-14, "{got}");
        let got = integrate(|x| x.powi(22), 0.0, 1.0).unwrap();
        assert!((got - 1.0 / 23.0).abs() < 1e-13, "{got}");
    }

    #[test]
    fn smooth_transcendental() {
        let got = integrate(f64::exp, 0.0, 1.0).unwrap();
        assert!((got - (std::f64::consts::E - 1.0)).abs() < 1e-12);
        let got = integrate(f64::sin, 0.0, 20.0 * std::f64::consts::PI).unwrap();
        assert!(got.abs() < 1e-9, "{got}");
    }

    #[test]
    fn non_finite_integrand_names_abscissa() {
        let err = integrate(|x| (x - 0.5).recip(), 0.0, 1.0).unwrap_err();
        match err {
            Error::NonFinite { at, .. } => assert!((at - 0.5).abs() < 1e-12),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn invalid_bounds() {
        assert!(integrate(|_| 1.0, 1.0, 0.0).is_err());
        assert!(integrate(|_| 1.0, f64::NEG_INFINITY, 0.0).is_err());
    }

    proptest! {
        // Additivity over random cubic pairs: ∫f + ∫g = ∫(f+g).
        #[test]
        fn additive_over_random_polynomials(
            c in proptest::array::uniform4(-5.0f64..5.0),
            d in proptest::array::uniform4(-5.0f64..5.0),
            span in 0.5f64..8.0,
        ) {
            let p = move |x: f64| c[0] + x * (c[1] + x * (c[2] + x * c[3]));
            let q = move |x: f64| d[0] + x * (d[1] + x * (d[2] + x * d[3]));
            let lhs = integrate(p, 0.0, span).unwrap() + integrate(q, 0.0, span).unwrap();
            let rhs = integrate(move |x| p(x) + q(x), 0.0, span).unwrap();
            prop_assert!((lhs - rhs).abs() < 2e-9);
        }
    }
}
