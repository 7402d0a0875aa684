//! Binary sequences with designed auto-mutual-information decay.
//!
//! A zero-mean Gaussian vector with unit variances and Toeplitz covariance
//! `c(|i − j|)` is thresholded at zero. For a pair with correlation
//! `c = cos θ` the two bits agree with probability `1 − θ/π`, which gives
//! the pair MI `I(θ)` in closed form. The covariance profile is chosen so
//! that `I(d) ≈ A d^{−γ}`: either through the small-correlation expansion
//! `I ≈ 2c²/π²` (approx mode) or by inverting `I(θ)` exactly (exact mode).

use std::f64::consts::{FRAC_PI_2, LN_2, PI};
use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;
use crate::sequence::{Corpus, SymbolSequence};
use crate::special::symmetric_binary_mi;

pub const DEFAULT_AMPLITUDE: f64 = 0.1;
pub const DEFAULT_POWER: f64 = 0.4;
pub const DEFAULT_LENGTH: usize = 512;
pub const DEFAULT_SEQUENCES: usize = 10_000;

/// Exact-mode targets are capped at `ln 2 − EXACT_MODE_GAP`, keeping every
/// correlation strictly below one.
pub const EXACT_MODE_GAP: f64 = 1e-6;

/// Eigenvalue floor used when repairing an indefinite covariance.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// Angle `θ ∈ [0, π/2]` of a unit-variance Gaussian pair with correlation
/// `cos θ`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct CopulaAngle(f64);

impl CopulaAngle {
    pub fn new(theta: f64) -> Result<Self> {
        if !(0.0..=FRAC_PI_2).contains(&theta) {
            return Err(Error::domain(format!("angle {theta} is outside [0, π/2]")));
        }
        Ok(Self(theta))
    }

    pub fn from_correlation(c: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::domain(format!("correlation {c} is outside [0, 1]")));
        }
        Self::new(c.acos().min(FRAC_PI_2))
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    pub fn correlation(self) -> f64 {
        self.0.cos()
    }
}

/// Bit correlation `E[ab]` (a, b = ±1) of the thresholded pair: `1 − 2θ/π`.
fn bit_correlation(theta: f64) -> f64 {
    1.0 - 2.0 * theta / PI
}

/// MI between the signs of a unit-variance Gaussian pair at angle `θ`:
/// `[π ln(2/π) + (π − θ) ln(π − θ) + θ ln θ] / π`.
pub fn mi_of_theta(theta: f64) -> Result<f64> {
    let angle = CopulaAngle::new(theta)?;
    Ok(symmetric_binary_mi(bit_correlation(angle.radians())))
}

/// Inverse of [`mi_of_theta`] by bisection on the monotone formula.
pub fn theta_of_mi(target: f64) -> Result<CopulaAngle> {
    if !(0.0..=LN_2).contains(&target) {
        return Err(Error::domain(format!(
            "target MI {target} is outside [0, ln 2]"
        )));
    }
    // solve symmetric_binary_mi(r) = target for the bit correlation r ∈ [0, 1]
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if symmetric_binary_mi(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r = if (symmetric_binary_mi(lo) - target).abs() <= (symmetric_binary_mi(hi) - target).abs()
    {
        lo
    } else {
        hi
    };
    CopulaAngle::new((FRAC_PI_2 * (1.0 - r)).clamp(0.0, FRAC_PI_2))
}

/// Leading-order expansion `2c²/π²` of the pair MI around `c = 0`.
pub fn small_c_mi(c: f64) -> f64 {
    2.0 * c * c / (PI * PI)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceMode {
    /// `c(d) = √(A/2)·π·d^{−γ/2}`, power law only asymptotically.
    Approx,
    /// `c(d) = cos θ(A d^{−γ})`, power law at every distance.
    Exact,
}

impl fmt::Display for CovarianceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovarianceMode::Approx => "approx",
            CovarianceMode::Exact => "exact",
        })
    }
}

impl FromStr for CovarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "approx" => Ok(CovarianceMode::Approx),
            "exact" => Ok(CovarianceMode::Exact),
            other => Err(Error::domain(format!("unknown covariance mode `{other}`"))),
        }
    }
}

/// Unit-diagonal Toeplitz covariance, stored as its first column.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzCovariance {
    column: Vec<f64>,
    pub amplitude: f64,
    pub power: f64,
    pub mode: CovarianceMode,
}

impl ToeplitzCovariance {
    /// Power-law design with amplitude `A`, exponent `γ` and length `N`.
    pub fn power_law(
        amplitude: f64,
        power: f64,
        length: usize,
        mode: CovarianceMode,
    ) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::param("amplitude", "must be positive"));
        }
        if !(power > 0.0 && power.is_finite()) {
            return Err(Error::param("power", "must be positive"));
        }
        if length < 2 {
            return Err(Error::param("length", "must be at least 2"));
        }
        let mut column = Vec::with_capacity(length);
        column.push(1.0);
        match mode {
            CovarianceMode::Approx => {
                let scale = (amplitude / 2.0).sqrt() * PI;
                if scale >= 1.0 {
                    return Err(Error::param(
                        "amplitude",
                        format!("√(A/2)·π = {scale} must stay below 1 in approx mode"),
                    ));
                }
                column.extend((1..length).map(|d| scale / (d as f64).powf(power / 2.0)));
            }
            CovarianceMode::Exact => {
                let cap = LN_2 - EXACT_MODE_GAP;
                for d in 1..length {
                    let target = (amplitude * (d as f64).powf(-power)).min(cap);
                    column.push(theta_of_mi(target)?.correlation());
                }
            }
        }
        Ok(Self {
            column,
            amplitude,
            power,
            mode,
        })
    }

    /// Arbitrary unit-diagonal Toeplitz covariance from its first column.
    pub fn from_column(column: Vec<f64>) -> Result<Self> {
        if column.len() < 2 {
            return Err(Error::param("length", "must be at least 2"));
        }
        if column[0] != 1.0 {
            return Err(Error::param("column", "diagonal entry must be 1"));
        }
        if let Some(d) = column[1..].iter().position(|c| !(c.abs() < 1.0)) {
            return Err(Error::param(
                "column",
                format!("entry at distance {} must lie in (−1, 1)", d + 1),
            ));
        }
        Ok(Self {
            column,
            amplitude: f64::NAN,
            power: f64::NAN,
            mode: CovarianceMode::Approx,
        })
    }

    pub fn len(&self) -> usize {
        self.column.len()
    }

    pub fn is_empty(&self) -> bool {
        self.column.is_empty()
    }

    /// Covariance at index distance `d` (1 on the diagonal).
    pub fn entry(&self, d: usize) -> f64 {
        self.column[d]
    }

    pub fn column(&self) -> &[f64] {
        &self.column
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| self.column[i.abs_diff(j)])
    }
}

/// Record of an eigenvalue-clipping repair of an indefinite covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdRepair {
    pub min_eigenvalue: f64,
    pub clipped: usize,
    /// Total amount added to the clipped eigenvalues.
    pub clipped_mass: f64,
}

/// A factorized covariance, reusable for any number of draws.
#[derive(Debug, Clone)]
pub struct CopulaSampler {
    n: usize,
    /// Row-major packed lower-triangular factor; row `i` starts at `i(i+1)/2`.
    lower: Vec<f64>,
    repair: Option<PsdRepair>,
}

impl CopulaSampler {
    /// Cholesky-factorizes the covariance. An indefinite matrix is repaired
    /// by clipping eigenvalues at [`EIGEN_FLOOR`] and renormalizing the
    /// diagonal to one.
    pub fn new(cov: &ToeplitzCovariance) -> Result<Self> {
        let n = cov.len();
        let matrix = cov.to_matrix();
        let (factor, repair) = match matrix.clone().cholesky() {
            Some(ch) => (ch.unpack(), None),
            None => {
                let eig = SymmetricEigen::new(matrix);
                let min_eigenvalue = eig.eigenvalues.min();
                let mut clipped = 0;
                let mut clipped_mass = 0.0;
                let mut values = eig.eigenvalues.clone();
                for v in values.iter_mut() {
                    if *v < EIGEN_FLOOR {
                        clipped += 1;
                        clipped_mass += EIGEN_FLOOR - *v;
                        *v = EIGEN_FLOOR;
                    }
                }
                let v = &eig.eigenvectors;
                let rebuilt = v * DMatrix::from_diagonal(&values) * v.transpose();
                let scale: Vec<f64> = rebuilt.diagonal().iter().map(|d| 1.0 / d.sqrt()).collect();
                let normalized = DMatrix::from_fn(n, n, |i, j| {
                    let x = rebuilt[(i, j)] * scale[i] * scale[j];
                    if i == j {
                        1.0
                    } else {
                        x
                    }
                });
                let normalized = (&normalized + normalized.transpose()) * 0.5;
                warn!(
                    "covariance is not positive definite (min eigenvalue {min_eigenvalue:.3e}); \
                     clipped {clipped} eigenvalues, mass {clipped_mass:.3e}"
                );
                let ch = normalized.cholesky().ok_or_else(|| {
                    Error::Numerical(format!(
                        "factorization failed after repair; most negative eigenvalue {min_eigenvalue:.6e}"
                    ))
                })?;
                (
                    ch.unpack(),
                    Some(PsdRepair {
                        min_eigenvalue,
                        clipped,
                        clipped_mass,
                    }),
                )
            }
        };
        let mut lower = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in 0..=i {
                lower.push(factor[(i, j)]);
            }
        }
        Ok(Self { n, lower, repair })
    }

    /// `Some` when the covariance needed an eigenvalue repair.
    pub fn repair(&self) -> Option<&PsdRepair> {
        self.repair.as_ref()
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Gaussian draw number `index` for `seed`: `L·z` with `z` i.i.d. standard
    /// normal from stream `index`.
    pub fn gaussian(&self, seed: u64, index: u64) -> Vec<f64> {
        let mut rng = rng::stream(seed, index);
        let z: Vec<f64> = (0..self.n)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        (0..self.n)
            .map(|i| {
                let row = &self.lower[i * (i + 1) / 2..][..=i];
                row.iter().zip(&z).map(|(l, x)| l * x).sum()
            })
            .collect()
    }

    /// Thresholded draws: symbol 1 where the Gaussian is positive, else 0.
    pub fn sample(&self, n_seqs: usize, seed: u64) -> Result<Corpus> {
        if n_seqs == 0 {
            return Err(Error::param("sequences", "must be positive"));
        }
        let seqs = (0..n_seqs as u64)
            .into_par_iter()
            .map(|i| {
                let bits = self
                    .gaussian(seed, i)
                    .into_iter()
                    .map(|x| u32::from(x > 0.0))
                    .collect();
                SymbolSequence::new(bits, 2)
            })
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(seqs, "copula")
    }
}

/// Factorizes `cov` and draws `n_seqs` binary sequences.
pub fn sample_binary(cov: &ToeplitzCovariance, n_seqs: usize, seed: u64) -> Result<Corpus> {
    CopulaSampler::new(cov)?.sample(n_seqs, seed)
}
