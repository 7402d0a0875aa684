//! Exact second-moment analysis of linear RNNs with Gaussian output.
//!
//! The stacked state `s_t = (h_t, x_t)` evolves as `s_t = T s_{t−1} + η_t`
//! with
//!
//! ```text
//! T = [ U_h     W_h ]      Cov η_t = [ 0   0    ]
//!     [ U_oU_h  0   ]                [ 0   σ²I  ]
//! ```
//!
//! so the output mean is `o_t = U_o U_h h_{t−1}`, which unrolls to
//! `o_t = U_oU_h^t h₀ + Σ_{i≤t−2} U_oU_h^{t−1−i} W_h x_i`. Covariances are
//! propagated exactly; the mutual information between `x₀` and `x_t` follows
//! from the Gaussian log-determinant formula, and its asymptotic decay rate
//! from the smallest pole of the covariance generating function.

mod params;
mod poles;
mod sample;

pub use params::LinearRnnParams;
pub use poles::{classify_stability, poles, Pole, PoleReport, Stability};
pub use sample::{
    empirical_cross_covariance, sample_linear_rnn, EmpiricalCovariance, RealSequences,
};

use dashu_float::FBig;
use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimation::{Estimator, MiCurve, MiPoint};

/// Second moments of the process at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceState {
    pub t: usize,
    /// Covariance of `s_t = (h_t, x_t)`.
    pub sigma_ss: DMatrix<f64>,
    /// Cross-covariance `Cov(s_t, x₀)`, `(m+d)×d`.
    pub sigma_sx0: DMatrix<f64>,
}

impl CovarianceState {
    fn hidden_dim(&self) -> usize {
        self.sigma_ss.nrows() - self.sigma_sx0.ncols()
    }

    /// `Σ_{x_t x_t}`.
    pub fn sigma_xx(&self) -> DMatrix<f64> {
        let m = self.hidden_dim();
        let d = self.sigma_sx0.ncols();
        self.sigma_ss.view((m, m), (d, d)).into_owned()
    }

    /// `Σ_{x_t x₀}`.
    pub fn sigma_x_x0(&self) -> DMatrix<f64> {
        let m = self.hidden_dim();
        let d = self.sigma_sx0.ncols();
        self.sigma_sx0.view((m, 0), (d, d)).into_owned()
    }
}

/// The one-step transition matrix `T` of the stacked state.
pub fn transition_matrix(params: &LinearRnnParams) -> DMatrix<f64> {
    let (m, d) = (params.hidden_dim(), params.output_dim());
    let mut t = DMatrix::zeros(m + d, m + d);
    t.view_mut((0, 0), (m, m)).copy_from(&params.u_h);
    t.view_mut((0, m), (m, d)).copy_from(&params.w_h);
    t.view_mut((m, 0), (d, m))
        .copy_from(&(&params.u_o * &params.u_h));
    t
}

/// Covariance states for `t = 0..=t_max`.
pub fn propagate(params: &LinearRnnParams, t_max: usize) -> Result<Vec<CovarianceState>> {
    params.validate()?;
    let (m, d) = (params.hidden_dim(), params.output_dim());
    let trans = transition_matrix(params);
    let trans_t = trans.transpose();
    let mut sigma_ss = params.sigma0.clone();
    let mut sigma_sx0 = params.sigma0.columns(m, d).into_owned();
    let mut states = Vec::with_capacity(t_max + 1);
    states.push(CovarianceState {
        t: 0,
        sigma_ss: sigma_ss.clone(),
        sigma_sx0: sigma_sx0.clone(),
    });
    for t in 1..=t_max {
        sigma_ss = &trans * &sigma_ss * &trans_t;
        for i in m..m + d {
            sigma_ss[(i, i)] += params.sigma2;
        }
        sigma_ss = (&sigma_ss + sigma_ss.transpose()) * 0.5;
        sigma_sx0 = &trans * &sigma_sx0;
        states.push(CovarianceState {
            t,
            sigma_ss: sigma_ss.clone(),
            sigma_sx0: sigma_sx0.clone(),
        });
    }
    Ok(states)
}

/// `Σ_{x_t x₀}` for `t = 0..=t_max` from the direct history sum
/// `Σ_{x_t x₀} = U_oU_h^t Σ_{h₀x₀} + Σ_{i=0}^{t−2} U_oU_h^{t−1−i} W_h Σ_{x_i x₀}`.
///
/// Quadratic in `t_max`; kept as an independent check on [`propagate`].
/// Evaluated exactly: when `U_h` has modes slower than the closed loop, the
/// summands outlive the result and cancel by tens of orders of magnitude,
/// beyond any fixed-precision accumulation.
pub fn sigma_recurrence_oracle(params: &LinearRnnParams, t_max: usize) -> Vec<DMatrix<f64>> {
    let (m, d) = (params.hidden_dim(), params.output_dim());
    let sigma_h0x0 = ExactMatrix::from(&params.sigma0.view((0, m), (m, d)).into_owned());
    let u_h = ExactMatrix::from(&params.u_h);
    let w_h = ExactMatrix::from(&params.w_h);
    // uo_pow[k] = U_o U_h^k
    let mut uo_pow = Vec::with_capacity(t_max + 1);
    uo_pow.push(ExactMatrix::from(&params.u_o));
    for k in 1..=t_max {
        let next = uo_pow[k - 1].mul(&u_h);
        uo_pow.push(next);
    }
    let kernel: Vec<ExactMatrix> = uo_pow.iter().map(|p| p.mul(&w_h)).collect();
    let mut out: Vec<ExactMatrix> = Vec::with_capacity(t_max + 1);
    out.push(ExactMatrix::from(
        &params.sigma0.view((m, m), (d, d)).into_owned(),
    ));
    for t in 1..=t_max {
        let mut acc = uo_pow[t].mul(&sigma_h0x0);
        for i in 0..t.saturating_sub(1) {
            acc.add_assign(&kernel[t - 1 - i].mul(&out[i]));
        }
        out.push(acc);
    }
    out.iter().map(ExactMatrix::to_f64).collect()
}

/// Minimal row-major matrix of unlimited-precision binary floats. Sums
/// and products of f64 inputs are exact, so the oracle carries no rounding
/// until the final conversion.
#[derive(Clone)]
struct ExactMatrix {
    rows: usize,
    cols: usize,
    data: Vec<FBig>,
}

impl From<&DMatrix<f64>> for ExactMatrix {
    fn from(m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
            .map(|x| {
                FBig::try_from(x)
                    .expect("parameters are finite")
                    .with_precision(0)
                    .value()
            })
            .collect();
        ExactMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl ExactMatrix {
    fn mul(&self, other: &ExactMatrix) -> ExactMatrix {
        let mut data = vec![FBig::ZERO; self.rows * other.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = &self.data[i * self.cols + k];
                for j in 0..other.cols {
                    data[i * other.cols + j] += a * &other.data[k * other.cols + j];
                }
            }
        }
        ExactMatrix {
            rows: self.rows,
            cols: other.cols,
            data,
        }
    }

    fn add_assign(&mut self, other: &ExactMatrix) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| {
            self.data[i * self.cols + j].to_f64().value()
        })
    }
}

/// Mutual information of jointly Gaussian `x` and `y`:
/// `−½ ln det(I − Σ_xx⁻¹ Σ_xy Σ_yy⁻¹ Σ_xyᵀ)`.
///
/// Evaluated through the canonical correlations `ρ_k` as `−½ Σ ln(1 − ρ_k²)`.
/// Perfectly correlated directions give `+∞`.
pub fn mi_gaussian(
    sigma_xx: &DMatrix<f64>,
    sigma_yy: &DMatrix<f64>,
    sigma_xy: &DMatrix<f64>,
) -> Result<f64> {
    let (dx, dy) = (sigma_xx.nrows(), sigma_yy.nrows());
    if !sigma_xx.is_square() || !sigma_yy.is_square() || sigma_xy.shape() != (dx, dy) {
        return Err(Error::domain("covariance shapes are inconsistent"));
    }
    let lx = sigma_xx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::domain("Σ_xx is not positive definite"))?
        .l();
    let ly = sigma_yy
        .clone()
        .cholesky()
        .ok_or_else(|| Error::domain("Σ_yy is not positive definite"))?
        .l();
    // K = Lx⁻¹ Σ_xy Ly⁻ᵀ
    let left = lx
        .solve_lower_triangular(sigma_xy)
        .ok_or_else(|| Error::domain("Σ_xx is singular"))?;
    let k = ly
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| Error::domain("Σ_yy is singular"))?
        .transpose();
    let rho = k.singular_values();
    let mut mi = 0.0;
    for &r in rho.iter() {
        if r >= 1.0 {
            return Ok(f64::INFINITY);
        }
        mi -= 0.5 * (-r * r).ln_1p();
    }
    Ok(mi)
}

/// Analytic MI curve with the stability class of the instance.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRnnCurve {
    pub curve: MiCurve,
    pub stability: Stability,
    /// Set for memorizing and marginal instances.
    pub warning: Option<String>,
}

/// `I(x₀; x_t)` for `t = 1..=t_max`.
pub fn mi_curve_linear_rnn(params: &LinearRnnParams, t_max: usize) -> Result<LinearRnnCurve> {
    if t_max == 0 {
        return Err(Error::param("t_max", "must be positive"));
    }
    let states = propagate(params, t_max)?;
    let report = poles(params)?;
    let stability = report.stability();
    let warning = match stability {
        Stability::Decaying => None,
        other => {
            let msg = format!("{other} instance: |z_min| = {}", report.z_min_modulus());
            warn!("{msg}");
            Some(msg)
        }
    };
    let sigma_x0x0 = states[0].sigma_xx();
    let points = states[1..]
        .iter()
        .map(|s| {
            let mi = mi_gaussian(&sigma_x0x0, &s.sigma_xx(), &s.sigma_x_x0().transpose())?;
            Ok(MiPoint {
                lag: s.t as u64,
                mi,
                pairs: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LinearRnnCurve {
        curve: MiCurve::new(points, Estimator::Analytic)?,
        stability,
        warning,
    })
}
