//! Exponential and power-law decay fits of MI curves.
//!
//! Both models are fitted by unweighted ordinary least squares on
//! log-transformed values: `ln I = ln I₀ − τ/ξ` (semi-log) and
//! `ln I = ln A − γ ln τ` (log-log). Only points with `I > threshold` and
//! `I > 0` enter the fit. Confidence intervals are 95% Student-t intervals
//! on the regression coefficients, carried to `ξ` and the amplitudes by the
//! delta method.

use std::fmt;
use std::fmt::Write as _;

use log::warn;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::estimation::MiCurve;
use crate::format::sig;

/// Default MI threshold for correlation-length fits.
pub const DEFAULT_THRESHOLD: f64 = 1e-3;
/// Threshold used for natural-language corpus audits.
pub const AUDIT_THRESHOLD: f64 = 2e-3;
/// Minimum r² gap for [`compare_models`] to pick a winner.
pub const MODEL_GAP: f64 = 0.05;

const MIN_POINTS: usize = 3;

/// Ordinary least-squares line `y = intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub r_squared: f64,
    pub n: usize,
    /// Two-sided 97.5% Student-t quantile with `n − 2` degrees of freedom.
    pub t95: f64,
}

impl LinearFit {
    pub fn slope_ci95(&self) -> f64 {
        self.t95 * self.slope_se
    }

    pub fn intercept_ci95(&self) -> f64 {
        self.t95 * self.intercept_se
    }
}

pub fn linear_regression(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::domain("x and y lengths differ"));
    }
    let n = xs.len();
    if n < MIN_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_POINTS,
            got: n,
        });
    }
    let nf = n as f64;
    let x_mean = xs.iter().sum::<f64>() / nf;
    let y_mean = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - x_mean, y - y_mean);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::domain("all x values coincide"));
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let s2 = ss_res / (nf - 2.0);
    let slope_se = (s2 / sxx).sqrt();
    let intercept_se = (s2 * (1.0 / nf + x_mean * x_mean / sxx)).sqrt();
    let t95 = StudentsT::new(0.0, 1.0, nf - 2.0)
        .map_err(|e| Error::Numerical(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(LinearFit {
        slope,
        intercept,
        slope_se,
        intercept_se,
        r_squared,
        n,
        t95,
    })
}

/// 95% half-width from delete-one-group jackknife replicates of a statistic:
/// `t_{G−1} · √((G−1)/G · Σ(θ₋ᵢ − θ̄)²)`.
pub fn jackknife_ci95(replicates: &[f64]) -> Result<f64> {
    let g = replicates.len();
    if g < 2 {
        return Err(Error::InsufficientData { needed: 2, got: g });
    }
    let gf = g as f64;
    let mean = replicates.iter().sum::<f64>() / gf;
    let ss: f64 = replicates.iter().map(|r| (r - mean).powi(2)).sum();
    let t = StudentsT::new(0.0, 1.0, gf - 1.0)
        .map_err(|e| Error::Numerical(e.to_string()))?
        .inverse_cdf(0.975);
    Ok(t * ((gf - 1.0) / gf * ss).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayModel {
    /// `I(τ) = I₀ e^{−τ/ξ}`
    Exponential,
    /// `I(τ) = A τ^{−γ}`
    PowerLaw,
}

impl fmt::Display for DecayModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecayModel::Exponential => "exponential",
            DecayModel::PowerLaw => "powerlaw",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: DecayModel,
    /// `I₀` or `A`.
    pub amplitude: f64,
    /// Correlation length `ξ` or power `γ`.
    pub decay: f64,
    pub amplitude_ci95: f64,
    pub decay_ci95: f64,
    pub points_used: usize,
    pub r_squared: f64,
    pub line: LinearFit,
    pub warning: Option<String>,
}

impl FitResult {
    fn decay_name(&self) -> &'static str {
        match self.model {
            DecayModel::Exponential => "xi",
            DecayModel::PowerLaw => "gamma",
        }
    }

    /// Whether `value` of the decay parameter lies inside the 95% interval.
    pub fn decay_covers(&self, value: f64) -> bool {
        (self.decay - value).abs() <= self.decay_ci95
    }

    /// Flat `key=value` record, one field per line.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let name = self.decay_name();
        let _ = writeln!(out, "model={}", self.model);
        let _ = writeln!(out, "amplitude={}", sig(self.amplitude, 10));
        let _ = writeln!(out, "{name}={}", sig(self.decay, 10));
        let _ = writeln!(out, "amplitude_ci95={}", sig(self.amplitude_ci95, 10));
        let _ = writeln!(out, "{name}_ci95={}", sig(self.decay_ci95, 10));
        let _ = writeln!(out, "points_used={}", self.points_used);
        let _ = writeln!(out, "r_squared={}", sig(self.r_squared, 10));
        if let Some(w) = &self.warning {
            let _ = writeln!(out, "warning={w}");
        }
        out
    }
}

fn retained(points: &[(f64, f64)], threshold: f64) -> Vec<(f64, f64)> {
    points
        .iter()
        .copied()
        .filter(|&(_, y)| y > threshold && y > 0.0)
        .collect()
}

fn curve_points(curve: &MiCurve) -> Vec<(f64, f64)> {
    curve
        .points()
        .iter()
        .map(|p| (p.lag as f64, p.mi))
        .collect()
}

/// Exponential fit of arbitrary `(lag, value)` pairs.
pub fn fit_exponential_points(points: &[(f64, f64)], threshold: f64) -> Result<FitResult> {
    let kept = retained(points, threshold);
    let xs: Vec<f64> = kept.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = kept.iter().map(|p| p.1.ln()).collect();
    let line = linear_regression(&xs, &ys)?;
    let amplitude = line.intercept.exp();
    let (decay, decay_ci95, warning) = if line.slope < 0.0 {
        let xi = -1.0 / line.slope;
        (xi, line.slope_ci95() / (line.slope * line.slope), None)
    } else {
        warn!(
            "exponential fit has non-negative slope {}; ξ reported as infinite",
            line.slope
        );
        (
            f64::INFINITY,
            f64::INFINITY,
            Some(format!("non-negative slope {}", sig(line.slope, 6))),
        )
    };
    Ok(FitResult {
        model: DecayModel::Exponential,
        amplitude,
        decay,
        amplitude_ci95: amplitude * line.intercept_ci95(),
        decay_ci95,
        points_used: kept.len(),
        r_squared: line.r_squared,
        line,
        warning,
    })
}

/// Power-law fit of arbitrary `(lag, value)` pairs; lags must be ≥ 1.
pub fn fit_powerlaw_points(points: &[(f64, f64)], threshold: f64) -> Result<FitResult> {
    let kept = retained(points, threshold);
    if let Some(&(x, _)) = kept.iter().find(|p| p.0 < 1.0) {
        return Err(Error::domain(format!(
            "power-law fit needs lags ≥ 1, got {x}"
        )));
    }
    let xs: Vec<f64> = kept.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = kept.iter().map(|p| p.1.ln()).collect();
    let line = linear_regression(&xs, &ys)?;
    let amplitude = line.intercept.exp();
    let warning = (line.slope >= 0.0).then(|| {
        warn!("power-law fit has non-negative slope {}", line.slope);
        format!("non-negative slope {}", sig(line.slope, 6))
    });
    Ok(FitResult {
        model: DecayModel::PowerLaw,
        amplitude,
        decay: -line.slope,
        amplitude_ci95: amplitude * line.intercept_ci95(),
        decay_ci95: line.slope_ci95(),
        points_used: kept.len(),
        r_squared: line.r_squared,
        line,
        warning,
    })
}

/// `I(τ) = I₀ e^{−τ/ξ}` by least squares of `ln I` on `τ`.
pub fn fit_exponential(curve: &MiCurve, threshold: f64) -> Result<FitResult> {
    fit_exponential_points(&curve_points(curve), threshold)
}

/// `I(τ) = A τ^{−γ}` by least squares of `ln I` on `ln τ`.
pub fn fit_powerlaw(curve: &MiCurve, threshold: f64) -> Result<FitResult> {
    fit_powerlaw_points(&curve_points(curve), threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelChoice {
    Exponential,
    PowerLaw,
    Indeterminate,
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelChoice::Exponential => "exponential",
            ModelChoice::PowerLaw => "powerlaw",
            ModelChoice::Indeterminate => "indeterminate",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelComparison {
    pub choice: ModelChoice,
    pub exponential: FitResult,
    pub powerlaw: FitResult,
}

/// Fits both models and picks the one with the higher r² when the gap
/// exceeds [`MODEL_GAP`].
pub fn compare_models(curve: &MiCurve, threshold: f64) -> Result<ModelComparison> {
    let exponential = fit_exponential(curve, threshold)?;
    let powerlaw = fit_powerlaw(curve, threshold)?;
    let gap = exponential.r_squared - powerlaw.r_squared;
    let choice = if gap > MODEL_GAP {
        ModelChoice::Exponential
    } else if -gap > MODEL_GAP {
        ModelChoice::PowerLaw
    } else {
        ModelChoice::Indeterminate
    };
    Ok(ModelComparison {
        choice,
        exponential,
        powerlaw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{Estimator, MiPoint};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn curve(f: impl Fn(f64) -> f64, lags: impl IntoIterator<Item = u64>) -> MiCurve {
        let points = lags
            .into_iter()
            .map(|lag| MiPoint {
                lag,
                mi: f(lag as f64),
                pairs: 0,
            })
            .collect();
        MiCurve::new(points, Estimator::Analytic).unwrap()
    }

    #[test]
    fn noiseless_exponential() {
        let c = curve(|t| 2.0 * (-t / 50.0).exp(), 1..=200);
        let fit = fit_exponential(&c, 0.0).unwrap();
        assert!((fit.amplitude - 2.0).abs() < 1e-9);
        assert!((fit.decay - 50.0).abs() < 1e-9);
        assert_eq!(fit.points_used, 200);
        assert!(fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn threshold_keeps_lags_up_to_69() {
        // e^{−6.9} ≈ 1.008e-3 stays above 1e-3, e^{−7} ≈ 9.1e-4 does not
        let c = curve(|t| (-t / 10.0).exp(), 1..=100);
        let fit = fit_exponential(&c, 1e-3).unwrap();
        assert_eq!(fit.points_used, 69);
        assert!((fit.decay - 10.0).abs() < 1e-9);
    }

    #[test]
    fn noiseless_power_law() {
        let c = curve(|t| 0.1 * t.powf(-0.4), 1..=512);
        let fit = fit_powerlaw(&c, 0.0).unwrap();
        assert!((fit.amplitude - 0.1).abs() < 1e-9);
        assert!((fit.decay - 0.4).abs() < 1e-9);
    }

    #[test]
    fn model_selection() {
        let exp = curve(|t| (-t / 20.0).exp(), 1..=100);
        let cmp = compare_models(&exp, 0.0).unwrap();
        assert_eq!(cmp.choice, ModelChoice::Exponential);
        assert!(cmp.powerlaw.r_squared < cmp.exponential.r_squared - 0.05);
        let pow = curve(|t| 0.1 * t.powf(-0.8), 1..=1000);
        assert_eq!(
            compare_models(&pow, 0.0).unwrap().choice,
            ModelChoice::PowerLaw
        );
    }

    #[test]
    fn insufficient_points_and_positive_slope() {
        let c = curve(|t| (-t).exp(), 1..=10);
        let err = fit_exponential(&c, 0.1).unwrap_err();
        assert!(
            matches!(err, Error::InsufficientData { needed: 3, got: 2 }),
            "{err}"
        );
        let rising = curve(|t| 1e-3 * t, 1..=10);
        let fit = fit_exponential(&rising, 0.0).unwrap();
        assert!(fit.decay.is_infinite());
        assert!(fit.warning.is_some());
        assert!(fit.to_key_value().contains("xi=inf"));
    }

    #[test]
    fn non_positive_values_are_dropped() {
        let mut points: Vec<MiPoint> = (1..=20)
            .map(|lag| MiPoint {
                lag,
                mi: (-(lag as f64) / 5.0).exp(),
                pairs: 1,
            })
            .collect();
        points[3].mi = -1e-4;
        points[7].mi = 0.0;
        let c = MiCurve::new(points, Estimator::Grassberger).unwrap();
        let fit = fit_exponential(&c, 0.0).unwrap();
        assert_eq!(fit.points_used, 18);
        assert!((fit.decay - 5.0).abs() < 1e-9);
    }

    #[test]
    fn key_value_record() {
        let c = curve(|t| 0.1 * t.powf(-0.4), 1..=64);
        let text = fit_powerlaw(&c, 0.0).unwrap().to_key_value();
        let keys: Vec<&str> = text.lines().map(|l| l.split('=').next().unwrap()).collect();
        assert_eq!(
            keys,
            [
                "model",
                "amplitude",
                "gamma",
                "amplitude_ci95",
                "gamma_ci95",
                "points_used",
                "r_squared"
            ]
        );
        assert!(text.starts_with("model=powerlaw\namplitude=0.1\ngamma=0.4\n"));
    }

    #[test]
    fn t_quantile() {
        let fit = linear_regression(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.1, 1.9, 3.0]).unwrap();
        assert_relative_eq!(fit.t95, 4.302_652_729_911_275, max_relative = 1e-9);
    }

    #[test]
    fn jackknife_of_mean_is_standard_error() {
        // leave-one-out means reproduce s/√n exactly
        let xs = [1.0, 4.0, 2.5, 7.0, 3.0];
        let n = xs.len() as f64;
        let total: f64 = xs.iter().sum();
        let loo: Vec<f64> = xs.iter().map(|x| (total - x) / (n - 1.0)).collect();
        let mean = total / n;
        let s2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        // t_{0.975, 4}
        let expected = 2.776_445_105_197_793 * (s2 / n).sqrt();
        assert_relative_eq!(jackknife_ci95(&loo).unwrap(), expected, max_relative = 1e-9);
        assert!(jackknife_ci95(&[1.0]).is_err());
    }

    #[test]
    fn ci_coverage_smoke() {
        let noise: Normal<f64> = Normal::new(0.0, 0.1).unwrap();
        let mut rng = crate::rng::stream(2024, 0);
        let trials = 200;
        let mut covered = 0;
        for _ in 0..trials {
            let xi: f64 = 10.0 + 20.0 * rng.random::<f64>();
            let points: Vec<(f64, f64)> = (1..=40)
                .map(|t| {
                    let t = t as f64;
                    (t, 0.5 * (-t / xi).exp() * noise.sample(&mut rng).exp())
                })
                .collect();
            let fit = fit_exponential_points(&points, 0.0).unwrap();
            covered += usize::from(fit.decay_covers(xi));
        }
        assert!(
            covered as f64 >= 0.85 * trials as f64,
            "covered {covered}/{trials}"
        );
    }

    proptest! {
        #[test]
        fn scale_equivariance(k in 0.01f64..100.0, xi in 2.0f64..50.0, wobble in prop::collection::vec(-0.2f64..0.2, 30)) {
            let points: Vec<MiPoint> = wobble
                .iter()
                .enumerate()
                .map(|(i, w)| MiPoint { lag: i as u64 + 1, mi: (-(i as f64 + 1.0) / xi + w).exp(), pairs: 1 })
                .collect();
            let c = MiCurve::new(points, Estimator::Plugin).unwrap();
            let base = fit_exponential(&c, 0.0).unwrap();
            let scaled = fit_exponential(&c.scaled(k), 0.0).unwrap();
            prop_assert!((scaled.amplitude - k * base.amplitude).abs() <= 1e-10 * k * base.amplitude);
            prop_assert!((scaled.decay - base.decay).abs() <= 1e-9 * base.decay.abs());
            let base_p = fit_powerlaw(&c, 0.0).unwrap();
            let scaled_p = fit_powerlaw(&c.scaled(k), 0.0).unwrap();
            prop_assert!((scaled_p.decay - base_p.decay).abs() <= 1e-9 * base_p.decay.abs().max(1e-3));
        }

        #[test]
        fn raising_threshold_never_adds_points(values in prop::collection::vec(1e-6f64..1.0, 5..50), t1 in 0.0f64..0.5, dt in 0.0f64..0.5) {
            let points: Vec<(f64, f64)> = values.iter().enumerate().map(|(i, &v)| (i as f64 + 1.0, v)).collect();
            let low = retained(&points, t1).len();
            let high = retained(&points, t1 + dt).len();
            prop_assert!(high <= low);
        }
    }
}
