use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::LinearRnnParams;
use crate::error::{Error, Result};
use crate::format::sig;
use crate::rng;

/// Real-valued output sequences `x_0..=x_T`, stored row-major per sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSequences {
    dim: usize,
    steps: usize,
    data: Vec<Vec<f64>>,
}

impl RealSequences {
    pub fn n_seqs(&self) -> usize {
        self.data.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of time steps per sequence, `T + 1`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `x_t` of sequence `seq`.
    pub fn get(&self, seq: usize, t: usize) -> &[f64] {
        &self.data[seq][t * self.dim..(t + 1) * self.dim]
    }

    /// CSV with header `seq,t,x0,x1,...`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let cols: Vec<String> = (0..self.dim).map(|j| format!("x{j}")).collect();
        writeln!(out, "seq,t,{}", cols.join(","))?;
        for seq in 0..self.n_seqs() {
            for t in 0..self.steps {
                let vals: Vec<String> = self.get(seq, t).iter().map(|&v| sig(v, 10)).collect();
                writeln!(out, "{seq},{t},{}", vals.join(","))?;
            }
        }
        Ok(())
    }
}

/// Monte Carlo simulation of the network, one independent stream per
/// sequence. `(h₀, x₀)` is drawn from `N(mean, Σ₀)`; a singular `Σ₀` is
/// handled through its eigendecomposition.
pub fn sample_linear_rnn(
    params: &LinearRnnParams,
    n_seqs: usize,
    t_max: usize,
    seed: u64,
) -> Result<RealSequences> {
    params.validate()?;
    if n_seqs == 0 {
        return Err(Error::param("n_seqs", "must be positive"));
    }
    let (m, d) = (params.hidden_dim(), params.output_dim());
    let eig = SymmetricEigen::new(params.sigma0.clone());
    let root =
        &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    let mean0 = DVector::from_iterator(
        m + d,
        params.mean_h0.iter().chain(params.mean_x0.iter()).copied(),
    );
    let readout = &params.u_o * &params.u_h;
    let sigma = params.sigma2.sqrt();

    let data = (0..n_seqs)
        .into_par_iter()
        .map(|idx| {
            let mut rng = rng::stream(seed, idx as u64);
            let z = DVector::from_fn(m + d, |_, _| {
                <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
            });
            let s0 = &mean0 + &root * z;
            let mut h = s0.rows(0, m).into_owned();
            let mut x = s0.rows(m, d).into_owned();
            let mut out = Vec::with_capacity((t_max + 1) * d);
            out.extend(x.iter());
            for _ in 0..t_max {
                let noise = DVector::from_fn(d, |_, _| {
                    sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                });
                let x_next = &readout * &h + &params.bias_o + noise;
                h = &params.u_h * &h + &params.w_h * &x + &params.bias_h;
                x = x_next;
                out.extend(x.iter());
            }
            out
        })
        .collect();
    Ok(RealSequences {
        dim: d,
        steps: t_max + 1,
        data,
    })
}

/// Sample covariance `Cov(x_t, x_s)` with per-entry standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCovariance {
    pub cov: DMatrix<f64>,
    pub se: DMatrix<f64>,
}

/// `Cov(x_t, x_s)` across sequences; entry `(i, j)` pairs component `i` of
/// `x_t` with component `j` of `x_s`. Standard errors are those of the mean
/// of centred products.
pub fn empirical_cross_covariance(
    samples: &RealSequences,
    t: usize,
    s: usize,
) -> Result<EmpiricalCovariance> {
    let n = samples.n_seqs();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    if t >= samples.steps() || s >= samples.steps() {
        return Err(Error::domain(format!(
            "time index beyond {} steps",
            samples.steps()
        )));
    }
    let d = samples.dim();
    let mean = |time: usize| -> Vec<f64> {
        (0..d)
            .map(|j| (0..n).map(|q| samples.get(q, time)[j]).sum::<f64>() / n as f64)
            .collect()
    };
    let (mt, ms) = (mean(t), mean(s));
    let mut cov = DMatrix::zeros(d, d);
    let mut se = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let products: Vec<f64> = (0..n)
                .map(|q| (samples.get(q, t)[i] - mt[i]) * (samples.get(q, s)[j] - ms[j]))
                .collect();
            let avg = products.iter().sum::<f64>() / n as f64;
            let var = products.iter().map(|u| (u - avg).powi(2)).sum::<f64>() / (n - 1) as f64;
            cov[(i, j)] = avg * n as f64 / (n - 1) as f64;
            se[(i, j)] = (var / n as f64).sqrt();
        }
    }
    Ok(EmpiricalCovariance { cov, se })
}
