//! Sequence generators whose auto-mutual information is known in closed
//! form.
//!
//! * The repetitive pair process emits, for every period `(x_{2n}, x_{2n+1})`,
//!   the pair `01` with probability `p` and `10` otherwise. Its MI is the
//!   same at every lag `τ > 1`. The same law is produced by a periodic
//!   three-state hidden Markov model (A→B emitting 0 with probability `p`,
//!   A→C emitting 1 otherwise, B→A emitting 1, C→A emitting 0); the direct
//!   pair construction is used here.
//! * The nearest-neighbour Ising chain is sampled left to right from
//!   `p(s_t | s_{t−1}) = e^{−βJ s_{t−1} s_t} / (2 cosh βJ s_{t−1})`. Under
//!   this Boltzmann sign convention, `βJ < 0` aligns neighbouring spins.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;
use crate::sequence::SymbolSequence;
use crate::special::symmetric_binary_mi;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepetitiveParams {
    /// Probability of emitting `01` in a period.
    pub p: f64,
    /// Sequence length; must be even.
    pub length: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsingParams {
    /// Product βJ of inverse temperature and coupling.
    pub coupling: f64,
    pub length: usize,
}

pub fn gen_repetitive(params: RepetitiveParams, seed: u64) -> Result<SymbolSequence> {
    if !(0.0..=1.0).contains(&params.p) {
        return Err(Error::param("p", "must lie in [0, 1]"));
    }
    if params.length == 0 || !params.length.is_multiple_of(2) {
        return Err(Error::domain(format!(
            "repetitive sequence length must be even and positive, got {}",
            params.length
        )));
    }
    let mut rng = rng::stream(seed, 0);
    let mut symbols = Vec::with_capacity(params.length);
    for _ in 0..params.length / 2 {
        if rng.random::<f64>() < params.p {
            symbols.extend([0, 1]);
        } else {
            symbols.extend([1, 0]);
        }
    }
    SymbolSequence::new(symbols, 2)
}

/// Auto-MI of the repetitive process at any lag `τ > 1`:
/// `4p(p − 1)·artanh[(1 − 2p)²] + ln[2 + 4p(p − 1)]`.
///
/// The joint law of `(x_t, x_{t+τ})` is that of two fair bits with
/// correlation `(1 − 2p)²`, which is how it is evaluated; `p = 0` and
/// `p = 1` give the limit `ln 2`.
pub fn mi_repetitive(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("p = {p} is outside [0, 1]")));
    }
    let s = 1.0 - 2.0 * p;
    Ok(symmetric_binary_mi(s * s))
}

/// Probability that a spin repeats its predecessor: `1 / (1 + e^{2βJ})`.
fn repeat_probability(coupling: f64) -> f64 {
    1.0 / (1.0 + (2.0 * coupling).exp())
}

/// Samples an Ising chain; spin −1 is coded 0 and +1 is coded 1. The first
/// spin is uniform.
pub fn gen_ising(params: IsingParams, seed: u64) -> Result<SymbolSequence> {
    if params.length == 0 {
        return Err(Error::param("length", "must be positive"));
    }
    if params.coupling.is_nan() {
        return Err(Error::param("beta-j", "must be a number"));
    }
    let repeat = repeat_probability(params.coupling);
    let mut rng = rng::stream(seed, 0);
    let mut symbols = Vec::with_capacity(params.length);
    let mut spin: u32 = u32::from(rng.random::<bool>());
    symbols.push(spin);
    for _ in 1..params.length {
        if rng.random::<f64>() >= repeat {
            spin ^= 1;
        }
        symbols.push(spin);
    }
    SymbolSequence::new(symbols, 2)
}

/// Spin–spin correlation `(−tanh βJ)^τ` of the chain.
pub fn ising_correlation(coupling: f64, lag: u64) -> f64 {
    (-coupling.tanh()).powi(lag.min(i32::MAX as u64) as i32)
}

/// Exact auto-MI of the Ising chain at lag `τ`: the joint law is
/// `p(s, s') = ¼(1 + c_τ s s')` with `c_τ = (−tanh βJ)^τ`.
pub fn mi_ising(coupling: f64, lag: u64) -> f64 {
    symmetric_binary_mi(ising_correlation(coupling, lag))
}

/// Empirical `⟨s_t s_{t+τ}⟩` of a ±1 chain coded as 0/1, pooled over all
/// start positions. Lags not shorter than the sequence give `None`.
pub fn spin_correlations(seq: &SymbolSequence, lags: &[u64]) -> Vec<Option<f64>> {
    let s = seq.symbols();
    lags.iter()
        .map(|&lag| {
            let lag = lag as usize;
            if lag == 0 || lag >= s.len() {
                return None;
            }
            let n = s.len() - lag;
            let agree = s[..n].iter().zip(&s[lag..]).filter(|(a, b)| a == b).count();
            Some((2.0 * agree as f64 - n as f64) / n as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    /// Joint law of (x_t, x_{t+τ}) for even τ by phase: start in the first
    /// half of a period (prob ½) or the second (prob ½); periods independent.
    fn repetitive_bruteforce(p: f64) -> f64 {
        let first = [p, 1.0 - p]; // P(symbol 0), P(symbol 1) in first slot
        let second = [1.0 - p, p];
        let mut joint = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                joint[a][b] = 0.5 * first[a] * first[b] + 0.5 * second[a] * second[b];
            }
        }
        let mut mi = 0.0;
        for row in joint {
            for pj in row {
                if pj > 0.0 {
                    mi += pj * (pj / 0.25).ln();
                }
            }
        }
        mi
    }

    fn repetitive_literal(p: f64) -> f64 {
        4.0 * p * (p - 1.0) * ((1.0 - 2.0 * p).powi(2)).atanh() + (2.0 + 4.0 * p * (p - 1.0)).ln()
    }

    #[test]
    fn repetitive_mi_examples() {
        assert!(mi_repetitive(0.5).unwrap().abs() < 1e-16);
        let v = mi_repetitive(0.3).unwrap();
        assert_relative_eq!(v, repetitive_bruteforce(0.3), max_relative = 1e-12);
        assert!((v - 0.012_854_9).abs() < 5e-7, "{v}");
        assert_relative_eq!(v, repetitive_literal(0.3), max_relative = 1e-12);
        assert_eq!(mi_repetitive(0.0).unwrap(), LN_2);
        assert_eq!(mi_repetitive(1.0).unwrap(), LN_2);
        let tiny = mi_repetitive(1e-4).unwrap();
        assert_relative_eq!(tiny, repetitive_bruteforce(1e-4), max_relative = 1e-10);
        assert!((tiny - 0.6912).abs() < 1e-4);
        assert!(mi_repetitive(1.5).is_err());
    }

    #[test]
    fn repetitive_mi_is_symmetric() {
        for k in 0..=64 {
            let p = k as f64 / 64.0;
            assert_eq!(mi_repetitive(p).unwrap(), mi_repetitive(1.0 - p).unwrap());
        }
        for k in 1..100 {
            let p = k as f64 / 100.0;
            let (a, b) = (mi_repetitive(p).unwrap(), mi_repetitive(1.0 - p).unwrap());
            assert!((a - b).abs() <= 1e-12 * a + 1e-300, "p = {p}");
        }
    }

    #[test]
    fn repetitive_generation() {
        let ones = gen_repetitive(RepetitiveParams { p: 1.0, length: 8 }, 3).unwrap();
        assert_eq!(ones.symbols(), &[0, 1, 0, 1, 0, 1, 0, 1]);
        let zeros = gen_repetitive(RepetitiveParams { p: 0.0, length: 6 }, 3).unwrap();
        assert_eq!(zeros.symbols(), &[1, 0, 1, 0, 1, 0]);
        assert!(gen_repetitive(RepetitiveParams { p: 0.5, length: 7 }, 3).is_err());
        let params = RepetitiveParams {
            p: 0.5,
            length: 1_000_000,
        };
        let seq = gen_repetitive(params, 17).unwrap();
        assert_eq!(seq, gen_repetitive(params, 17).unwrap());
        let zeros = seq.symbols().iter().filter(|&&s| s == 0).count() as f64;
        // every period holds exactly one 0
        assert_eq!(zeros, 500_000.0);
        let first_slot_zeros = seq.symbols().iter().step_by(2).filter(|&&s| s == 0).count() as f64;
        let se = (0.25f64 / 500_000.0).sqrt();
        assert!((first_slot_zeros / 500_000.0 - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn ising_mi_examples() {
        let bj: f64 = -0.549_306_144_334_054_8;
        assert_relative_eq!(ising_correlation(bj, 2), 0.25, max_relative = 1e-12);
        // brute force over the four spin pairs with c₂ = 0.25
        let c: f64 = 0.25;
        let brute: f64 = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
            .iter()
            .map(|(s, t)| {
                let p: f64 = 0.25 * (1.0 + c * s * t);
                p * (p / 0.25).ln()
            })
            .sum();
        assert_relative_eq!(mi_ising(bj, 2), brute, max_relative = 1e-12);
        assert!((mi_ising(bj, 2) - 0.031_583_942).abs() < 1e-8);
        assert_eq!(mi_ising(0.0, 1), 0.0);
        assert!(mi_ising(bj, 2000) < 1e-300);
        let values: Vec<f64> = (1..60).map(|t| mi_ising(bj, t)).collect();
        assert!(values.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn ising_log_mi_slope() {
        let bj: f64 = -0.549_306_144_334_054_8;
        let rate = 2.0 * bj.tanh().abs().ln();
        for t in 8..60 {
            let slope = mi_ising(bj, t + 1).ln() - mi_ising(bj, t).ln();
            assert!((slope - rate).abs() < 0.01 * rate.abs(), "t = {t}: {slope}");
        }
        let far = mi_ising(bj, 201).ln() - mi_ising(bj, 200).ln();
        assert_relative_eq!(far, rate, max_relative = 1e-10);
    }

    #[test]
    fn ising_generation() {
        let free = gen_ising(
            IsingParams {
                coupling: 0.0,
                length: 200_000,
            },
            5,
        )
        .unwrap();
        let corr = spin_correlations(&free, &[1, 2, 5]);
        for c in corr {
            assert!(c.unwrap().abs() < 3.0 / (200_000f64).sqrt());
        }
        let frozen = gen_ising(
            IsingParams {
                coupling: -50.0,
                length: 1000,
            },
            5,
        )
        .unwrap();
        assert!(frozen.symbols().iter().all(|&s| s == frozen.symbols()[0]));
        let anti = gen_ising(
            IsingParams {
                coupling: 50.0,
                length: 10,
            },
            5,
        )
        .unwrap();
        assert!(anti.symbols().windows(2).all(|w| w[0] != w[1]));

        let bj: f64 = -0.549_306_144_334_054_8;
        let n = 1_000_000;
        let chain = gen_ising(
            IsingParams {
                coupling: bj,
                length: n,
            },
            23,
        )
        .unwrap();
        // bonds s_t s_{t+1} are i.i.d. ±1 with mean 0.5
        let c1 = spin_correlations(&chain, &[1])[0].unwrap();
        let se = ((1.0 - 0.25) / (n - 1) as f64).sqrt();
        assert!((c1 - 0.5).abs() < 3.0 * se, "{c1}");
        assert!(spin_correlations(&chain, &[0, n as u64])[0].is_none());
    }
}
