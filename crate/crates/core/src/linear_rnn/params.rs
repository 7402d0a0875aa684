use std::io::BufRead;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Linear Elman network with Gaussian output:
///
/// ```text
/// h_t = U_h h_{t−1} + W_h x_{t−1} + b_h
/// x_t ~ N(U_o U_h h_{t−1} + b_o, σ² I_d)
/// ```
///
/// `sigma0` is the joint covariance of `(h₀, x₀)`, hidden block first. Means
/// and biases shift samples only and never enter the MI.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRnnParams {
    pub u_h: DMatrix<f64>,
    pub w_h: DMatrix<f64>,
    pub u_o: DMatrix<f64>,
    pub sigma2: f64,
    pub sigma0: DMatrix<f64>,
    pub mean_h0: DVector<f64>,
    pub mean_x0: DVector<f64>,
    pub bias_h: DVector<f64>,
    pub bias_o: DVector<f64>,
}

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-10;

impl LinearRnnParams {
    /// Builds a validated parameter set with zero means and biases.
    pub fn new(
        u_h: DMatrix<f64>,
        w_h: DMatrix<f64>,
        u_o: DMatrix<f64>,
        sigma2: f64,
        sigma0: DMatrix<f64>,
    ) -> Result<Self> {
        let (m, d) = (u_h.nrows(), u_o.nrows());
        let params = LinearRnnParams {
            u_h,
            w_h,
            u_o,
            sigma2,
            sigma0,
            mean_h0: DVector::zeros(m),
            mean_x0: DVector::zeros(d),
            bias_h: DVector::zeros(m),
            bias_o: DVector::zeros(d),
        };
        params.validate()?;
        Ok(params)
    }

    /// Hidden dimension `m`.
    pub fn hidden_dim(&self) -> usize {
        self.u_h.nrows()
    }

    /// Output dimension `d`.
    pub fn output_dim(&self) -> usize {
        self.u_o.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.u_h.nrows();
        let d = self.u_o.nrows();
        if m == 0 || d == 0 {
            return Err(Error::param("u_h", "dimensions must be positive"));
        }
        if self.u_h.ncols() != m {
            return Err(Error::param("u_h", format!("must be {m}×{m}")));
        }
        if self.w_h.shape() != (m, d) {
            return Err(Error::param("w_h", format!("must be {m}×{d}")));
        }
        if self.u_o.ncols() != m {
            return Err(Error::param("u_o", format!("must be {d}×{m}")));
        }
        for (name, mat) in [("u_h", &self.u_h), ("w_h", &self.w_h), ("u_o", &self.u_o)] {
            if mat.iter().any(|v| !v.is_finite()) {
                return Err(Error::param(name, "entries must be finite"));
            }
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::param("sigma2", "must be positive and finite"));
        }
        let n = m + d;
        if self.sigma0.shape() != (n, n) {
            return Err(Error::param("sigma0", format!("must be {n}×{n}")));
        }
        if self.sigma0.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("sigma0", "entries must be finite"));
        }
        let scale = self.sigma0.amax().max(1.0);
        if (&self.sigma0 - self.sigma0.transpose()).amax() > SYMMETRY_TOL * scale {
            return Err(Error::param("sigma0", "must be symmetric"));
        }
        let min_eig = SymmetricEigen::new(self.sigma0.clone()).eigenvalues.min();
        if min_eig < -PSD_TOL {
            return Err(Error::param(
                "sigma0",
                format!("must be positive semi-definite, min eigenvalue {min_eig:e}"),
            ));
        }
        for (name, v, len) in [
            ("mean_h0", &self.mean_h0, m),
            ("mean_x0", &self.mean_x0, d),
            ("bias_h", &self.bias_h, m),
            ("bias_o", &self.bias_o, d),
        ] {
            if v.len() != len {
                return Err(Error::param(name, format!("must have {len} entries")));
            }
        }
        Ok(())
    }

    /// Parses the key-value parameter format:
    ///
    /// ```text
    /// # comment
    /// m = 1
    /// d = 1
    /// u_h = 0.5
    /// w_h = 1
    /// u_o = 0.2
    /// sigma2 = 1
    /// sigma0 = 0 0
    ///          0 1
    /// ```
    ///
    /// Matrices are whitespace-separated and row-major; a line without `=`
    /// continues the previous value. `mean_h0`, `mean_x0`, `bias_h` and
    /// `bias_o` are optional and default to zero.
    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut entries: Vec<(String, usize, Vec<f64>)> = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let values_text = match content.split_once('=') {
                Some((key, rest)) => {
                    let key = key.trim().to_ascii_lowercase();
                    if key.is_empty() {
                        return Err(Error::format(lineno, "missing key before `=`"));
                    }
                    if entries.iter().any(|(k, _, _)| *k == key) {
                        return Err(Error::format(lineno, format!("duplicate key `{key}`")));
                    }
                    entries.push((key, lineno, Vec::new()));
                    rest
                }
                None if entries.is_empty() => {
                    return Err(Error::format(lineno, "expected `key = values`"));
                }
                None => content,
            };
            let target = &mut entries.last_mut().expect("entry exists").2;
            for tok in values_text.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::format(lineno, format!("`{tok}` is not a number")))?;
                target.push(v);
            }
        }

        let take = |key: &str| {
            entries
                .iter()
                .find(|(k, _, _)| k == key)
                .map(|(_, _, v)| v.as_slice())
        };
        if let Some((key, line, _)) = entries
            .iter()
            .find(|(k, _, _)| !KNOWN_KEYS.contains(&k.as_str()))
        {
            return Err(Error::format(*line, format!("unknown key `{key}`")));
        }
        let dim = |key: &str| -> Result<usize> {
            match take(key) {
                Some([v]) if *v >= 1.0 && v.fract() == 0.0 => Ok(*v as usize),
                Some(_) => Err(Error::param(key, "must be a single positive integer")),
                None => Err(Error::param(key, "missing")),
            }
        };
        let m = dim("m")?;
        let d = dim("d")?;
        let matrix = |key: &str, rows: usize, cols: usize| -> Result<DMatrix<f64>> {
            let values = take(key).ok_or_else(|| Error::param(key, "missing"))?;
            if values.len() != rows * cols {
                return Err(Error::param(
                    key,
                    format!(
                        "expected {} values for a {rows}×{cols} matrix, got {}",
                        rows * cols,
                        values.len()
                    ),
                ));
            }
            Ok(DMatrix::from_row_slice(rows, cols, values))
        };
        let vector = |key: &str, len: usize| -> Result<DVector<f64>> {
            match take(key) {
                None => Ok(DVector::zeros(len)),
                Some(values) if values.len() == len => Ok(DVector::from_column_slice(values)),
                Some(values) => Err(Error::param(
                    key,
                    format!("expected {len} values, got {}", values.len()),
                )),
            }
        };
        let sigma2 = match take("sigma2") {
            Some([v]) => *v,
            Some(_) => return Err(Error::param("sigma2", "must be a single number")),
            None => return Err(Error::param("sigma2", "missing")),
        };
        let params = LinearRnnParams {
            u_h: matrix("u_h", m, m)?,
            w_h: matrix("w_h", m, d)?,
            u_o: matrix("u_o", d, m)?,
            sigma2,
            sigma0: matrix("sigma0", m + d, m + d)?,
            mean_h0: vector("mean_h0", m)?,
            mean_x0: vector("mean_x0", d)?,
            bias_h: vector("bias_h", m)?,
            bias_o: vector("bias_o", d)?,
        };
        params.validate()?;
        Ok(params)
    }
}

const KNOWN_KEYS: [&str; 11] = [
    "m", "d", "u_h", "w_h", "u_o", "sigma2", "sigma0", "mean_h0", "mean_x0", "bias_h", "bias_o",
];

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = "\
# scalar example
m = 1
d = 1
u_h = 0.5
w_h = 1
u_o = 0.2
sigma2 = 1
sigma0 = 0 0
         0 1
";

    #[test]
    fn parses_scalar_file() {
        let p = LinearRnnParams::read_from(SCALAR.as_bytes()).unwrap();
        assert_eq!(p.u_h[(0, 0)], 0.5);
        assert_eq!(
            p.sigma0,
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])
        );
        assert_eq!(p.bias_o.len(), 1);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = SCALAR.replace("u_o = 0.2", "u_o = 0.2 0.3");
        let err = LinearRnnParams::read_from(bad.as_bytes()).unwrap_err();
        assert!(
            matches!(&err, Error::Parameter { field, .. } if field == "u_o"),
            "{err}"
        );

        let bad = SCALAR.replace("sigma2 = 1", "sigma2 = 0");
        let err = LinearRnnParams::read_from(bad.as_bytes()).unwrap_err();
        assert!(
            matches!(&err, Error::Parameter { field, .. } if field == "sigma2"),
            "{err}"
        );

        let bad = SCALAR.replace("0 1\n", "0 -1\n");
        let err = LinearRnnParams::read_from(bad.as_bytes()).unwrap_err();
        assert!(
            matches!(&err, Error::Parameter { field, .. } if field == "sigma0"),
            "{err}"
        );

        let bad = SCALAR.replace("sigma0 = 0 0", "sigma0 = 0 0.5");
        let err = LinearRnnParams::read_from(bad.as_bytes()).unwrap_err();
        assert!(
            matches!(&err, Error::Parameter { field, .. } if field == "sigma0"),
            "{err}"
        );

        let bad = SCALAR.replace("u_h = 0.5", "u_h = half");
        let err = LinearRnnParams::read_from(bad.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Format { line: 4, .. }), "{err}");

        let bad = format!("{SCALAR}gain = 2\n");
        assert!(matches!(
            LinearRnnParams::read_from(bad.as_bytes()),
            Err(Error::Format { line: 10, .. })
        ));
    }
}
