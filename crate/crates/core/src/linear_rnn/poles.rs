use std::f64::consts::PI;
use std::fmt;

use std::fmt::Write as _;

use nalgebra::{Complex, DMatrix};

use super::{transition_matrix, LinearRnnParams};
use crate::error::{Error, Result};
use crate::format::sig;

const TRUNCATION: f64 = 1e-12;
const CLUSTER_TOL: f64 = 1e-5;
const MIN_MODULUS: f64 = 1e-9;
const UNIT_BAND: f64 = 1e-9;
const FEEDBACK_TOL: f64 = 1e-12;

/// A pole of the covariance generating function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pole {
    pub z: Complex<f64>,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Decaying,
    Memorizing,
    Marginal,
}

impl fmt::Display for Stability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stability::Decaying => "decaying",
            Stability::Memorizing => "memorizing",
            Stability::Marginal => "marginal",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoleReport {
    /// Zeros of `det(I − zT)`, ascending by modulus.
    pub poles: Vec<Pole>,
    /// Smallest-modulus pole; `None` when `T` is nilpotent.
    pub z_min: Option<Complex<f64>>,
    /// `ln|z_min|`: the per-step decay rate of the covariance. `+∞` when
    /// there are no poles.
    pub predicted_rate: f64,
    /// Coefficients of `det(I − zT)`, constant term first.
    pub coefficients: Vec<f64>,
    /// Reciprocal nonzero eigenvalues of `U_h`.
    pub hidden_spectrum: Vec<Complex<f64>>,
    /// `U_o U_h^k W_h = 0` for all `k ≥ 1`: outputs never feed back, and
    /// the poles are those of the hidden dynamics alone.
    pub no_feedback: bool,
}

impl PoleReport {
    pub fn z_min_modulus(&self) -> f64 {
        self.z_min.map_or(f64::INFINITY, |z| z.norm())
    }

    pub fn stability(&self) -> Stability {
        let r = self.z_min_modulus();
        if r > 1.0 + UNIT_BAND {
            Stability::Decaying
        } else if r < 1.0 - UNIT_BAND {
            Stability::Memorizing
        } else {
            Stability::Marginal
        }
    }
}

fn complex_det(t: &DMatrix<f64>, z: Complex<f64>) -> Complex<f64> {
    let n = t.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        Complex::new(id, 0.0) - z * t[(i, j)]
    });
    m.determinant()
}

/// Coefficients of `det(I − zT)` from its values at the `n+1` roots of unity.
fn characteristic_coefficients(t: &DMatrix<f64>) -> Vec<f64> {
    let n_nodes = t.nrows() + 1;
    let nodes: Vec<Complex<f64>> = (0..n_nodes)
        .map(|k| Complex::from_polar(1.0, 2.0 * PI * k as f64 / n_nodes as f64))
        .collect();
    let values: Vec<Complex<f64>> = nodes.iter().map(|&z| complex_det(t, z)).collect();
    let mut coeffs: Vec<f64> = (0..n_nodes)
        .map(|j| {
            let sum: Complex<f64> = nodes
                .iter()
                .zip(&values)
                .map(|(&w, &v)| v * w.powi(-(j as i32)))
                .sum();
            sum.re / n_nodes as f64
        })
        .collect();
    let max = coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    for c in &mut coeffs {
        if c.abs() < TRUNCATION * max {
            *c = 0.0;
        }
    }
    while coeffs.len() > 1 && *coeffs.last().unwrap() == 0.0 {
        coeffs.pop();
    }
    coeffs
}

/// Roots of `Σ c_j z^j` as eigenvalues of the companion matrix.
fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let degree = coeffs.len().saturating_sub(1);
    if degree == 0 {
        return Vec::new();
    }
    let lead = coeffs[degree];
    let mut companion = DMatrix::zeros(degree, degree);
    for i in 1..degree {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..degree {
        companion[(i, degree - 1)] = -coeffs[i] / lead;
    }
    companion.complex_eigenvalues().iter().copied().collect()
}

fn cluster(roots: Vec<Complex<f64>>) -> Vec<Pole> {
    let mut groups: Vec<Vec<Complex<f64>>> = Vec::new();
    for z in roots {
        let tol = CLUSTER_TOL * z.norm().max(1.0);
        match groups.iter_mut().find(|g| {
            let centre = g.iter().sum::<Complex<f64>>() / g.len() as f64;
            (centre - z).norm() <= tol
        }) {
            Some(g) => g.push(z),
            None => groups.push(vec![z]),
        }
    }
    let mut poles: Vec<Pole> = groups
        .into_iter()
        .map(|g| {
            let mut z = g.iter().sum::<Complex<f64>>() / g.len() as f64;
            if z.im.abs() <= CLUSTER_TOL * z.norm() {
                z.im = 0.0;
            }
            Pole {
                z,
                multiplicity: g.len(),
            }
        })
        .collect();
    poles.sort_by(|a, b| {
        a.z.norm()
            .total_cmp(&b.z.norm())
            .then(a.z.im.total_cmp(&b.z.im))
    });
    poles
}

fn has_no_feedback(params: &LinearRnnParams) -> bool {
    let m = params.hidden_dim();
    let (no, nh, nw) = (params.u_o.norm(), params.u_h.norm(), params.w_h.norm());
    let mut uo_pow = params.u_o.clone();
    for k in 1..=m {
        uo_pow = &uo_pow * &params.u_h;
        let kernel = &uo_pow * &params.w_h;
        if kernel.norm() > FEEDBACK_TOL * no * nh.powi(k as i32) * nw {
            return false;
        }
    }
    true
}

/// Poles of the generating function of `Σ_{x_t x₀}`.
///
/// The covariance obeys `Σ_{s_t x₀} = T^t Σ_{s₀x₀}`, so its generating
/// function is `(I − zT)⁻¹ Σ_{s₀x₀}` and its poles are the zeros of
/// `det(I − zT) = det(I − zU_h) · det(I − A(z))` with
/// `A(z) = z² U_o (I − zU_h)⁻¹ U_h W_h`. The polynomial is recovered by
/// interpolation at roots of unity and rooted through its companion matrix.
pub fn poles(params: &LinearRnnParams) -> Result<PoleReport> {
    params.validate()?;
    let t = transition_matrix(params);
    let coefficients = characteristic_coefficients(&t);
    if (coefficients[0] - 1.0).abs() > 1e-6 {
        return Err(Error::Numerical(format!(
            "interpolated det(I − zT) has constant term {} instead of 1",
            coefficients[0]
        )));
    }
    let roots: Vec<Complex<f64>> = polynomial_roots(&coefficients)
        .into_iter()
        .filter(|z| z.norm() > MIN_MODULUS && z.norm().is_finite())
        .collect();
    let poles = cluster(roots);
    let z_min = poles.first().map(|p| p.z);
    let predicted_rate = z_min.map_or(f64::INFINITY, |z| z.norm().ln());
    let mut hidden_spectrum: Vec<Complex<f64>> = params
        .u_h
        .complex_eigenvalues()
        .iter()
        .filter(|l| l.norm() > MIN_MODULUS)
        .map(|l| l.inv())
        .collect();
    hidden_spectrum.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    Ok(PoleReport {
        poles,
        z_min,
        predicted_rate,
        coefficients,
        hidden_spectrum,
        no_feedback: has_no_feedback(params),
    })
}

fn write_complex(out: &mut String, key: &str, z: Complex<f64>) {
    let _ = writeln!(out, "{key}.re={}", sig(z.re, 10));
    let _ = writeln!(out, "{key}.im={}", sig(z.im, 10));
    let _ = writeln!(out, "{key}.modulus={}", sig(z.norm(), 10));
}

impl PoleReport {
    /// Flat `key=value` record, poles listed in ascending modulus.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "stability={}", self.stability());
        match self.z_min {
            Some(z) => write_complex(&mut out, "z_min", z),
            None => {
                let _ = writeln!(out, "z_min=none");
            }
        }
        let _ = writeln!(out, "predicted_rate={}", sig(self.predicted_rate, 10));
        let _ = writeln!(
            out,
            "predicted_mi_rate={}",
            sig(2.0 * self.predicted_rate, 10)
        );
        let _ = writeln!(out, "no_feedback={}", self.no_feedback);
        let _ = writeln!(out, "pole_count={}", self.poles.len());
        for (i, p) in self.poles.iter().enumerate() {
            write_complex(&mut out, &format!("pole.{i}"), p.z);
            let _ = writeln!(out, "pole.{i}.multiplicity={}", p.multiplicity);
        }
        let _ = writeln!(out, "hidden_count={}", self.hidden_spectrum.len());
        for (i, &z) in self.hidden_spectrum.iter().enumerate() {
            write_complex(&mut out, &format!("hidden.{i}"), z);
        }
        out
    }
}

pub fn classify_stability(params: &LinearRnnParams) -> Result<Stability> {
    Ok(poles(params)?.stability())
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::super::{mi_curve_linear_rnn, propagate};
    use super::*;
    use crate::fit::linear_regression;
    use rand::Rng;

    /// Reciprocal nonzero eigenvalues of T, computed without any polynomial.
    fn oracle_poles(params: &LinearRnnParams) -> Vec<Complex<f64>> {
        let mut z: Vec<Complex<f64>> = transition_matrix(params)
            .complex_eigenvalues()
            .iter()
            .filter(|l| l.norm() > 1e-7)
            .map(|l| l.inv())
            .collect();
        z.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
        z
    }

    fn expand(report: &PoleReport) -> Vec<Complex<f64>> {
        report
            .poles
            .iter()
            .flat_map(|p| std::iter::repeat_n(p.z, p.multiplicity))
            .collect()
    }

    #[test]
    fn scalar_example_poles() {
        let r = poles(&scalar_example()).unwrap();
        // 1 − 0.5z − 0.1z² = 0
        let disc = (0.25f64 + 0.4).sqrt();
        let (z1, z2) = ((-0.5 + disc) / 0.2, (-0.5 - disc) / 0.2);
        assert_eq!(r.poles.len(), 2);
        assert!((r.poles[0].z - Complex::new(z1, 0.0)).norm() < 1e-10);
        assert!((r.poles[1].z - Complex::new(z2, 0.0)).norm() < 1e-9);
        assert!((z1 - 1.531_129).abs() < 1e-6 && (z2 + 6.531_129).abs() < 1e-6);
        assert!((r.predicted_rate - z1.ln()).abs() < 1e-10);
        assert_eq!(r.stability(), Stability::Decaying);
        assert!(!r.no_feedback);
        assert_eq!(r.hidden_spectrum, vec![Complex::new(2.0, 0.0)]);
        let text = r.to_key_value();
        assert!(
            text.starts_with("stability=decaying\nz_min.re=1.531128874\nz_min.im=0\n"),
            "{text}"
        );
        assert!(text.contains("pole_count=2\n") && text.contains("pole.1.re=-6.531128874\n"));
    }

    #[test]
    fn memorizing_and_trivial_instances() {
        let r = poles(&scalar(2.0, 1.0, 1.0)).unwrap();
        let expected = (-2.0 + 12f64.sqrt()) / 4.0;
        assert!((r.z_min_modulus() - expected).abs() < 1e-10);
        assert!((expected - 0.366).abs() < 1e-3);
        assert_eq!(r.stability(), Stability::Memorizing);

        let r = poles(&scalar(1.5, 1.0, 0.2)).unwrap();
        assert!((r.z_min_modulus() - 0.5957).abs() < 1e-4);
        assert_eq!(
            classify_stability(&scalar(1.5, 1.0, 0.2)).unwrap(),
            Stability::Memorizing
        );
        let curve = mi_curve_linear_rnn(&scalar(1.5, 1.0, 0.2), 10).unwrap();
        assert_eq!(curve.stability, Stability::Memorizing);
        assert!(curve.warning.is_some());

        let r = poles(&scalar(0.0, 1.0, 0.0)).unwrap();
        assert!(r.poles.is_empty() && r.z_min.is_none());
        assert!(r.no_feedback);
        assert_eq!(r.stability(), Stability::Decaying);

        // U_h = 1, no feedback: pole on the unit circle
        assert_eq!(
            classify_stability(&scalar(1.0, 0.0, 0.5)).unwrap(),
            Stability::Marginal
        );
    }

    #[test]
    fn no_feedback_poles_are_hidden_spectrum() {
        let mut rng = crate::rng::stream(11, 0);
        for _ in 0..20 {
            let mut p = random_instance(&mut rng);
            p.w_h.fill(0.0);
            let r = poles(&p).unwrap();
            assert!(r.no_feedback);
            let got = expand(&r);
            assert_eq!(got.len(), r.hidden_spectrum.len());
            for (a, b) in got.iter().zip(&r.hidden_spectrum) {
                assert!((a.norm() - b.norm()).abs() < 1e-7 * b.norm(), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn double_pole_multiplicity() {
        let p = LinearRnnParams::new(
            DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.5]),
            DMatrix::zeros(2, 1),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            1.0,
            DMatrix::identity(3, 3),
        )
        .unwrap();
        let r = poles(&p).unwrap();
        assert_eq!(r.poles.len(), 1);
        assert_eq!(r.poles[0].multiplicity, 2);
        assert!((r.poles[0].z - Complex::new(2.0, 0.0)).norm() < 1e-6);
    }

    #[test]
    fn random_poles_match_transition_spectrum() {
        let mut rng = crate::rng::stream(19, 0);
        for _ in 0..100 {
            let p = random_instance(&mut rng);
            let r = poles(&p).unwrap();
            let oracle = oracle_poles(&p);
            let got = expand(&r);
            // poles beyond the truncation horizon may be dropped
            let oracle: Vec<_> = oracle.into_iter().filter(|z| z.norm() < 1e6).collect();
            let got: Vec<_> = got.into_iter().filter(|z| z.norm() < 1e6).collect();
            assert_eq!(got.len(), oracle.len(), "{got:?} vs {oracle:?}");
            for z in &oracle {
                let nearest = got
                    .iter()
                    .map(|g| (g - z).norm())
                    .fold(f64::INFINITY, f64::min);
                assert!(
                    nearest < 1e-6 * z.norm().max(1.0),
                    "{z} not found in {got:?}"
                );
            }
            if let Some(z) = r.z_min {
                assert!((z.norm() - oracle[0].norm()).abs() < 1e-7 * oracle[0].norm());
                assert!(expand(&r).iter().all(|p| p.norm() >= z.norm()));
            }
        }
    }

    #[test]
    fn determinant_factorization() {
        let mut rng = crate::rng::stream(23, 0);
        for _ in 0..50 {
            let p = random_instance(&mut rng);
            let (m, d) = (p.hidden_dim(), p.output_dim());
            let z = Complex::new(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8));
            let c = |a: &DMatrix<f64>| a.map(|v| Complex::new(v, 0.0));
            let ih = DMatrix::<Complex<f64>>::identity(m, m);
            let id = DMatrix::<Complex<f64>>::identity(d, d);
            let resolvent = (&ih - c(&p.u_h) * z).try_inverse().unwrap();
            let a = c(&p.u_o) * resolvent * c(&p.u_h) * c(&p.w_h) * (z * z);
            let lhs = (&ih - c(&p.u_h) * z).determinant() * (&id - a).determinant();
            let rhs = complex_det(&transition_matrix(&p), z);
            assert!(
                (lhs - rhs).norm() < 1e-12 * rhs.norm().max(1.0),
                "{lhs} vs {rhs}"
            );
            let poly: Complex<f64> = r_eval(&poles(&p).unwrap().coefficients, z);
            assert!((poly - rhs).norm() < 1e-10 * rhs.norm().max(1.0));
        }
    }

    fn r_eval(coeffs: &[f64], z: Complex<f64>) -> Complex<f64> {
        coeffs
            .iter()
            .rev()
            .fold(Complex::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// Decay rate of ln‖Σ_{x_t x₀}‖ and ln I(t) over [T/2, T] on random
    /// decaying instances with a real, well-separated leading pole.
    #[test]
    fn decay_rates_follow_leading_pole() {
        let mut rng = crate::rng::stream(29, 0);
        let mut checked = 0;
        for _ in 0..400 {
            let p = random_instance(&mut rng);
            let r = poles(&p).unwrap();
            if r.stability() != Stability::Decaying || r.poles.len() < 2 {
                continue;
            }
            let (z1, z2) = (r.poles[0], r.poles[1]);
            let sep = z2.z.norm() / z1.z.norm();
            if z1.z.im != 0.0 || z1.multiplicity != 1 || sep <= 1.05 {
                continue;
            }
            let rate = r.predicted_rate;
            // long enough for subleading modes to fade below 1e-4, short enough
            // that I(t) stays far above underflow
            let horizon = (2.0 * (1e4f64).ln() / sep.ln()).ceil() as usize;
            // and for Σ_{x_t x_t} to settle at its stationary value
            let settle = ((1e4f64).ln() / rate).ceil() as usize;
            let horizon = horizon.max(settle).max(40);
            if horizon as f64 * rate > 150.0 || horizon > 5000 {
                continue;
            }
            let states = propagate(&p, horizon).unwrap();
            let curve = mi_curve_linear_rnn(&p, horizon).unwrap().curve;
            let window: Vec<usize> = (horizon / 2..=horizon).collect();
            let xs: Vec<f64> = window.iter().map(|&t| t as f64).collect();
            let cov: Vec<f64> = window
                .iter()
                .map(|&t| states[t].sigma_x_x0().norm().ln())
                .collect();
            let mi: Vec<f64> = window
                .iter()
                .map(|&t| curve.get(t as u64).unwrap().mi.ln())
                .collect();
            let cov_slope = linear_regression(&xs, &cov).unwrap().slope;
            let mi_slope = linear_regression(&xs, &mi).unwrap().slope;
            assert!(
                (-cov_slope - rate).abs() < 0.02 * rate,
                "cov slope {cov_slope} vs rate {rate}"
            );
            assert!(
                (mi_slope - 2.0 * cov_slope).abs() < 0.02 * cov_slope.abs(),
                "{mi_slope} vs {cov_slope}"
            );
            checked += 1;
        }
        assert!(checked >= 30, "only {checked} usable instances");
    }
}
