//! Special functions used by the estimators and the closed-form oracles.

use std::sync::OnceLock;

use crate::error::{Error, Result};

const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

/// Below this argument ψ is built by recurrence from ψ(1) = −γ; at and above
/// it the asymptotic series is already accurate to machine precision.
const SERIES_ANCHOR: u64 = 20;
const TABLE_LEN: usize = 4096;

fn digamma_series(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli terms B_2k / (2k x^2k), k = 1..7
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    x.ln() - 0.5 * inv - tail
}

fn digamma_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = vec![f64::NAN; TABLE_LEN];
        table[1] = -EULER_MASCHERONI;
        for n in 1..SERIES_ANCHOR as usize - 1 {
            table[n + 1] = table[n] + 1.0 / n as f64;
        }
        for (n, slot) in table
            .iter_mut()
            .enumerate()
            .skip(SERIES_ANCHOR as usize - 1)
        {
            *slot = digamma_series(n as f64);
        }
        table
    })
}

/// Digamma function at a positive integer.
pub fn digamma_int(n: u64) -> Result<f64> {
    match n {
        0 => Err(Error::domain("digamma is undefined at 0")),
        n if (n as usize) < TABLE_LEN => Ok(digamma_table()[n as usize]),
        n => Ok(digamma_series(n as f64)),
    }
}

/// `n ψ(n)` for count data, skipping the domain check.
pub(crate) fn n_digamma(n: u64) -> f64 {
    debug_assert!(n > 0);
    let psi = if (n as usize) < TABLE_LEN {
        digamma_table()[n as usize]
    } else {
        digamma_series(n as f64)
    };
    n as f64 * psi
}

/// Mutual information of two fair binary variables with correlation `r`,
/// i.e. joint `p(a, b) = (1 + r·a·b) / 4` for `a, b ∈ {−1, +1}`:
///
/// `½[(1 + r) ln(1 + r) + (1 − r) ln(1 − r)]`.
///
/// Small `|r|` uses the even power series `Σ r^{2k} / (2k(2k − 1))` so the
/// result keeps full relative precision deep in the decaying tail.
pub fn symmetric_binary_mi(r: f64) -> f64 {
    let a = r.abs();
    if a >= 1.0 {
        return std::f64::consts::LN_2;
    }
    if a < 0.25 {
        let r2 = a * a;
        let mut term = r2;
        let mut sum = 0.0;
        for k in 1..=40u32 {
            let k2 = 2.0 * f64::from(k);
            let add = term / (k2 * (k2 - 1.0));
            sum += add;
            if add < sum * 1e-18 {
                break;
            }
            term *= r2;
        }
        return sum;
    }
    0.5 * ((1.0 + a) * a.ln_1p() + (1.0 - a) * (-a).ln_1p())
}
