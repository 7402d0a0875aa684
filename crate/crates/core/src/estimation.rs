//! Entropy and auto-mutual-information estimation for symbol sequences.
//!
//! Pairs `(x_t, x_{t+τ})` are pooled over every start position of every
//! sequence in a corpus into one joint count table per lag, then turned
//! into an MI estimate with either the plug-in (maximum likelihood)
//! entropy or the digamma bias-corrected entropy
//! `Ĥ = ln N − (1/N) Σ n_i ψ(n_i)`.
//!
//! Entropies are summed over counts in ascending order, so estimates are
//! bit-identical under relabeling of symbols and swapping of pair
//! coordinates, and independent of thread scheduling.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::format::sig;
use crate::sequence::Corpus;
use crate::special::n_digamma;

/// Occurrence counts of symbols (or symbol pairs). Zero counts are never
/// stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable<K> {
    entries: Vec<(K, u64)>,
    total: u64,
}

impl<K: Ord + Copy> CountTable<K> {
    /// Builds a table from `(key, count)` entries, merging duplicate keys and
    /// dropping zero counts.
    pub fn from_counts(counts: impl IntoIterator<Item = (K, u64)>) -> Result<Self> {
        let mut entries: Vec<(K, u64)> = counts.into_iter().filter(|&(_, n)| n > 0).collect();
        entries.sort_unstable_by_key(|e| e.0);
        entries.dedup_by(|later, earlier| {
            if later.0 == earlier.0 {
                earlier.1 += later.1;
                true
            } else {
                false
            }
        });
        if entries.is_empty() {
            return Err(Error::domain("count table is empty"));
        }
        let total = entries.iter().map(|&(_, n)| n).sum();
        Ok(Self { entries, total })
    }

    pub fn from_observations(obs: impl IntoIterator<Item = K>) -> Result<Self> {
        Self::from_counts(obs.into_iter().map(|k| (k, 1)))
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries sorted by key.
    pub fn entries(&self) -> &[(K, u64)] {
        &self.entries
    }

    pub fn get(&self, key: K) -> u64 {
        self.entries
            .binary_search_by(|e| e.0.cmp(&key))
            .map_or(0, |i| self.entries[i].1)
    }

    fn sorted_counts(&self) -> Vec<u64> {
        let mut counts: Vec<u64> = self.entries.iter().map(|&(_, n)| n).collect();
        counts.sort_unstable();
        counts
    }
}

pub type PairTable = CountTable<(u32, u32)>;

impl CountTable<(u32, u32)> {
    pub fn marginal_first(&self) -> CountTable<u32> {
        CountTable::from_counts(self.entries.iter().map(|&((x, _), n)| (x, n)))
            .expect("non-empty joint has non-empty marginal")
    }

    pub fn marginal_second(&self) -> CountTable<u32> {
        CountTable::from_counts(self.entries.iter().map(|&((_, y), n)| (y, n)))
            .expect("non-empty joint has non-empty marginal")
    }

    /// The same table with pair coordinates exchanged.
    pub fn swapped(&self) -> Self {
        CountTable::from_counts(self.entries.iter().map(|&((x, y), n)| ((y, x), n)))
            .expect("non-empty joint")
    }
}

/// Digamma bias-corrected entropy in nats. Not clamped: small samples can
/// give values below zero or above `ln V`.
pub fn entropy_grassberger<K: Ord + Copy>(counts: &CountTable<K>) -> f64 {
    let n = counts.total() as f64;
    let sum: f64 = counts.sorted_counts().into_iter().map(n_digamma).sum();
    n.ln() - sum / n
}

/// Maximum-likelihood entropy in nats.
pub fn entropy_plugin<K: Ord + Copy>(counts: &CountTable<K>) -> f64 {
    let n = counts.total() as f64;
    let sum: f64 = counts
        .sorted_counts()
        .into_iter()
        .map(|c| {
            let c = c as f64;
            c * c.ln()
        })
        .sum();
    n.ln() - sum / n
}

/// Which estimator produced an MI value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    Grassberger,
    Plugin,
    /// Closed-form value from a model, no sampling involved.
    Analytic,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::Grassberger => "grassberger",
            Estimator::Plugin => "plugin",
            Estimator::Analytic => "analytic",
        }
    }

    fn entropy<K: Ord + Copy>(self, counts: &CountTable<K>) -> Result<f64> {
        match self {
            Estimator::Grassberger => Ok(entropy_grassberger(counts)),
            Estimator::Plugin => Ok(entropy_plugin(counts)),
            Estimator::Analytic => Err(Error::domain(
                "the analytic estimator id cannot be applied to count data",
            )),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grassberger" => Ok(Estimator::Grassberger),
            "plugin" => Ok(Estimator::Plugin),
            "analytic" => Ok(Estimator::Analytic),
            other => Err(Error::domain(format!("unknown estimator `{other}`"))),
        }
    }
}

/// `Î(X;Y) = Ĥ(X) + Ĥ(Y) − Ĥ(X,Y)` from joint pair counts.
pub fn mi_from_pair_counts(joint: &PairTable, estimator: Estimator) -> Result<f64> {
    let hx = estimator.entropy(&joint.marginal_first())?;
    let hy = estimator.entropy(&joint.marginal_second())?;
    let hxy = estimator.entropy(joint)?;
    Ok(hx + hy - hxy)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiPoint {
    pub lag: u64,
    pub mi: f64,
    /// Number of pooled pairs; zero for analytic curves.
    pub pairs: u64,
}

/// Mutual information as a function of lag.
#[derive(Debug, Clone, PartialEq)]
pub struct MiCurve {
    points: Vec<MiPoint>,
    pub estimator: Estimator,
}

impl MiCurve {
    pub fn new(points: Vec<MiPoint>, estimator: Estimator) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| p.lag == 0) {
            return Err(Error::domain(format!(
                "lag must be positive, got {}",
                p.lag
            )));
        }
        if points.windows(2).any(|w| w[0].lag >= w[1].lag) {
            return Err(Error::domain("curve lags must be strictly increasing"));
        }
        Ok(Self { points, estimator })
    }

    pub fn points(&self) -> &[MiPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lags(&self) -> impl Iterator<Item = u64> + '_ {
        self.points.iter().map(|p| p.lag)
    }

    pub fn get(&self, lag: u64) -> Option<&MiPoint> {
        self.points
            .binary_search_by_key(&lag, |p| p.lag)
            .ok()
            .map(|i| &self.points[i])
    }

    /// Keeps only lags in `[min_lag, max_lag]`.
    pub fn restrict(&self, min_lag: u64, max_lag: u64) -> Self {
        Self {
            points: self
                .points
                .iter()
                .copied()
                .filter(|p| p.lag >= min_lag && p.lag <= max_lag)
                .collect(),
            estimator: self.estimator,
        }
    }

    /// Multiplies every MI value by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| MiPoint { mi: p.mi * k, ..*p })
                .collect(),
            estimator: self.estimator,
        }
    }

    /// Writes `tau,mi_nats,pairs,estimator` CSV with 10 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "tau,mi_nats,pairs,estimator")?;
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{}",
                p.lag,
                sig(p.mi, 10),
                p.pairs,
                self.estimator
            )?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != "tau,mi_nats,pairs,estimator" {
            return Err(Error::format(
                1,
                "expected header `tau,mi_nats,pairs,estimator`",
            ));
        }
        let mut points = Vec::new();
        let mut estimator = None;
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 4 {
                return Err(Error::format(line_no, "expected 4 comma-separated fields"));
            }
            let bad = |what: &str| Error::format(line_no, format!("bad {what} `{line}`"));
            let lag = fields[0].parse().map_err(|_| bad("tau"))?;
            let mi = fields[1].parse().map_err(|_| bad("mi_nats"))?;
            let pairs = fields[2].parse().map_err(|_| bad("pairs"))?;
            let est: Estimator = fields[3].parse().map_err(|_| bad("estimator"))?;
            match estimator {
                None => estimator = Some(est),
                Some(e) if e != est => {
                    return Err(Error::format(line_no, "mixed estimator ids in one curve"))
                }
                _ => {}
            }
            points.push(MiPoint { lag, mi, pairs });
        }
        let estimator = estimator.ok_or_else(|| Error::format(1, "curve has no data rows"))?;
        MiCurve::new(points, estimator).map_err(|e| Error::format(1, e.to_string()))
    }
}

/// Dense tables are used while `V²` stays below this many cells.
const DENSE_LIMIT: usize = 1 << 20;

#[derive(Clone)]
enum PairCounts {
    Dense { vocab: usize, counts: Vec<u64> },
    Sparse(HashMap<(u32, u32), u64>),
}

impl PairCounts {
    fn new(vocab: u32) -> Self {
        let v = vocab as usize;
        if v.saturating_mul(v) <= DENSE_LIMIT {
            PairCounts::Dense {
                vocab: v,
                counts: vec![0; v * v],
            }
        } else {
            PairCounts::Sparse(HashMap::new())
        }
    }

    fn add_slice(&mut self, left: &[u32], right: &[u32]) {
        match self {
            PairCounts::Dense { vocab, counts } => {
                for (&a, &b) in left.iter().zip(right) {
                    counts[a as usize * *vocab + b as usize] += 1;
                }
            }
            PairCounts::Sparse(map) => {
                for (&a, &b) in left.iter().zip(right) {
                    *map.entry((a, b)).or_insert(0) += 1;
                }
            }
        }
    }

    fn merge(&mut self, other: &PairCounts) {
        match (self, other) {
            (PairCounts::Dense { counts, .. }, PairCounts::Dense { counts: o, .. }) => {
                counts.iter_mut().zip(o).for_each(|(c, x)| *c += x);
            }
            (PairCounts::Sparse(map), PairCounts::Sparse(o)) => {
                for (&k, &n) in o {
                    *map.entry(k).or_insert(0) += n;
                }
            }
            _ => unreachable!("pair tables of one corpus share a layout"),
        }
    }

    fn minus(&self, other: &PairCounts) -> PairCounts {
        match (self, other) {
            (PairCounts::Dense { vocab, counts }, PairCounts::Dense { counts: o, .. }) => {
                PairCounts::Dense {
                    vocab: *vocab,
                    counts: counts.iter().zip(o).map(|(c, x)| c - x).collect(),
                }
            }
            (PairCounts::Sparse(map), PairCounts::Sparse(o)) => {
                let mut out = map.clone();
                for (k, n) in o {
                    if let Some(c) = out.get_mut(k) {
                        *c -= n;
                    }
                }
                PairCounts::Sparse(out)
            }
            _ => unreachable!("pair tables of one corpus share a layout"),
        }
    }

    fn to_table(&self) -> Result<PairTable> {
        match self {
            PairCounts::Dense { vocab, counts } => CountTable::from_counts(
                counts
                    .iter()
                    .enumerate()
                    .map(|(i, &n)| (((i / vocab) as u32, (i % vocab) as u32), n)),
            ),
            PairCounts::Sparse(map) => CountTable::from_counts(map.iter().map(|(&k, &n)| (k, n))),
        }
    }
}

/// Number of pooled pairs at `lag`: `Σ_seq max(0, len − lag)`.
pub fn pair_count(corpus: &Corpus, lag: u64) -> u64 {
    corpus
        .sequences()
        .iter()
        .map(|s| (s.len() as u64).saturating_sub(lag))
        .sum()
}

/// Counts pairs at `lag`, split into `blocks` contiguous groups of start
/// positions (positions are enumerated sequence by sequence).
fn count_lag(corpus: &Corpus, lag: usize, blocks: usize) -> Vec<PairCounts> {
    let total = pair_count(corpus, lag as u64) as u128;
    let b_count = blocks as u128;
    let mut out = vec![PairCounts::new(corpus.vocab_size()); blocks];
    let mut offset: u128 = 0;
    for seq in corpus.sequences() {
        let symbols = seq.symbols();
        let n = symbols.len().saturating_sub(lag);
        let mut t = 0usize;
        while t < n {
            let g = offset + t as u128;
            let b = (g * b_count / total) as usize;
            // first global index of block b + 1 is ceil((b + 1) · total / blocks)
            let next = ((b as u128 + 1) * total).div_ceil(b_count);
            let end = n.min((next - offset) as usize);
            out[b].add_slice(&symbols[t..end], &symbols[t + lag..end + lag]);
            t = end;
        }
        offset += n as u128;
    }
    out
}

fn validate_lags(corpus: &Corpus, lags: &[u64]) -> Result<Vec<u64>> {
    if lags.is_empty() {
        return Err(Error::domain("lag list is empty"));
    }
    let max_len = corpus.max_len() as u64;
    let mut sorted = lags.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted[0] == 0 {
        return Err(Error::domain("lags must be positive"));
    }
    let last = *sorted.last().expect("non-empty");
    if last >= max_len {
        return Err(Error::domain(format!(
            "lag {last} is not below the longest sequence length {max_len}"
        )));
    }
    Ok(sorted)
}

/// Pooled auto-MI curve. Lags are sorted and de-duplicated.
pub fn auto_mi_curve(corpus: &Corpus, lags: &[u64], estimator: Estimator) -> Result<MiCurve> {
    let lags = validate_lags(corpus, lags)?;
    let points = lags
        .par_iter()
        .map(|&lag| {
            let counts = count_lag(corpus, lag as usize, 1);
            let table = counts[0].to_table()?;
            Ok(MiPoint {
                lag,
                mi: mi_from_pair_counts(&table, estimator)?,
                pairs: table.total(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MiCurve::new(points, estimator)
}

/// Pooled auto-MI curve together with a delete-one-block jackknife standard
/// error per lag.
///
/// Start positions are cut into `blocks` contiguous groups; each replicate
/// drops one group from the pooled table. Contiguous blocks keep most of
/// the serial dependence between neighbouring pairs inside a block, so the
/// error reflects correlated samples rather than assuming i.i.d. pairs.
pub fn auto_mi_curve_with_errors(
    corpus: &Corpus,
    lags: &[u64],
    estimator: Estimator,
    blocks: usize,
) -> Result<(MiCurve, Vec<f64>)> {
    if blocks < 2 {
        return Err(Error::domain("jackknife needs at least 2 blocks"));
    }
    let lags = validate_lags(corpus, lags)?;
    let rows = lags
        .par_iter()
        .map(|&lag| {
            let per_block = count_lag(corpus, lag as usize, blocks);
            let mut total = per_block[0].clone();
            for b in &per_block[1..] {
                total.merge(b);
            }
            let table = total.to_table()?;
            let mi = mi_from_pair_counts(&table, estimator)?;
            let replicates = per_block
                .iter()
                .map(|b| mi_from_pair_counts(&total.minus(b).to_table()?, estimator))
                .collect::<Result<Vec<f64>>>()?;
            let k = replicates.len() as f64;
            let mean = replicates.iter().sum::<f64>() / k;
            let ss: f64 = replicates.iter().map(|r| (r - mean).powi(2)).sum();
            let se = ((k - 1.0) / k * ss).sqrt();
            Ok((
                MiPoint {
                    lag,
                    mi,
                    pairs: table.total(),
                },
                se,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (points, errors): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok((MiCurve::new(points, estimator)?, errors))
}
