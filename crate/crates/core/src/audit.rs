//! Character-level MI profiling of text splits and a train/other
//! non-uniformity check.
//!
//! Each split is read as one long symbol sequence over a vocabulary shared by
//! all splits. Per-split auto-MI curves are compared lag by lag; when the
//! log-MI of any split departs from the training split by more than `ln 2`
//! (a factor-2 mismatch) the report is flagged.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use log::warn;

use crate::error::{Error, Result};
use crate::estimation::{auto_mi_curve, Estimator, MiCurve};
use crate::fit::{fit_powerlaw, FitResult, AUDIT_THRESHOLD};
use crate::format::sig;
use crate::sequence::{Corpus, SymbolSequence};

/// Divergence above which splits are flagged as non-uniform.
pub const DIVERGENCE_THRESHOLD: f64 = std::f64::consts::LN_2;
/// Lag window of the per-split power-law fits.
pub const FIT_WINDOW: (u64, u64) = (50, 1000);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TextUnit {
    /// One symbol per Unicode scalar value.
    UnicodeChar,
    Byte,
}

impl fmt::Display for TextUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TextUnit::UnicodeChar => "char",
            TextUnit::Byte => "byte",
        })
    }
}

impl FromStr for TextUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "char" | "unicode" | "unicode_char" => Ok(TextUnit::UnicodeChar),
            "byte" => Ok(TextUnit::Byte),
            other => Err(Error::param("unit", format!("unknown text unit `{other}`"))),
        }
    }
}

/// Bijection between observed characters (or bytes) and contiguous ids,
/// assigned in order of first occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabMap {
    unit: TextUnit,
    symbols: Vec<u32>,
    ids: HashMap<u32, u32>,
}

impl VocabMap {
    pub fn new(unit: TextUnit) -> Self {
        VocabMap {
            unit,
            symbols: Vec::new(),
            ids: HashMap::new(),
        }
    }

    pub fn unit(&self) -> TextUnit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Id of a character (scalar value) or byte.
    pub fn id_of(&self, symbol: u32) -> Option<u32> {
        self.ids.get(&symbol).copied()
    }

    /// Character (scalar value) or byte with the given id.
    pub fn symbol(&self, id: u32) -> Option<u32> {
        self.symbols.get(id as usize).copied()
    }

    fn intern(&mut self, symbol: u32) -> u32 {
        let next = self.symbols.len() as u32;
        *self.ids.entry(symbol).or_insert_with(|| {
            self.symbols.push(symbol);
            next
        })
    }

    /// Encodes text, extending the vocabulary with unseen symbols.
    pub fn encode(&mut self, bytes: &[u8]) -> Result<Vec<u32>> {
        match self.unit {
            TextUnit::Byte => Ok(bytes.iter().map(|&b| self.intern(u32::from(b))).collect()),
            TextUnit::UnicodeChar => {
                let text = std::str::from_utf8(bytes).map_err(|e| Error::Encoding {
                    offset: e.valid_up_to(),
                })?;
                Ok(text.chars().map(|c| self.intern(u32::from(c))).collect())
            }
        }
    }

    /// Inverse of [`VocabMap::encode`].
    pub fn decode(&self, ids: &[u32]) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            let symbol = self
                .symbol(id)
                .ok_or_else(|| Error::domain(format!("id {id} is not in the vocabulary")))?;
            match self.unit {
                TextUnit::Byte => out.push(symbol as u8),
                TextUnit::UnicodeChar => {
                    let c = char::from_u32(symbol).expect("vocabulary holds scalar values");
                    let mut buf = [0u8; 4];
                    out.extend_from_slice(c.encode_utf8(&mut buf).as_bytes());
                }
            }
        }
        Ok(out)
    }
}

/// Maps text to a symbol sequence with a fresh vocabulary.
pub fn ingest_text(bytes: &[u8], unit: TextUnit) -> Result<(SymbolSequence, VocabMap)> {
    let mut vocab = VocabMap::new(unit);
    let symbols = encode_nonempty(&mut vocab, bytes)?;
    let seq = SymbolSequence::new(symbols, vocab.len() as u32)?;
    Ok((seq, vocab))
}

fn encode_nonempty(vocab: &mut VocabMap, bytes: &[u8]) -> Result<Vec<u32>> {
    if bytes.is_empty() {
        return Err(Error::domain("input text is empty"));
    }
    let symbols = vocab.encode(bytes)?;
    if symbols.is_empty() {
        return Err(Error::domain("input text is empty"));
    }
    Ok(symbols)
}

/// Encodes several labelled texts over the union vocabulary, built in the
/// order the texts are given. All sequences carry the union's size.
pub fn ingest_splits(
    texts: &[(&str, &[u8])],
    unit: TextUnit,
) -> Result<(Vec<(String, SymbolSequence)>, VocabMap)> {
    let mut vocab = VocabMap::new(unit);
    let mut encoded = Vec::with_capacity(texts.len());
    for (label, bytes) in texts {
        let symbols = encode_nonempty(&mut vocab, bytes).map_err(|e| match e {
            Error::Domain(msg) => Error::domain(format!("split `{label}`: {msg}")),
            other => other,
        })?;
        encoded.push((label.to_string(), symbols));
    }
    let v = vocab.len() as u32;
    let splits = encoded
        .into_iter()
        .map(|(label, symbols)| Ok((label, SymbolSequence::new(symbols, v)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((splits, vocab))
}

/// Approximately geometric integer lags from `min` to `max` inclusive:
/// `round(min · 10^{k/points_per_decade})`, deduplicated, with `max` appended.
pub fn log_lag_grid(min: u64, max: u64, points_per_decade: u32) -> Result<Vec<u64>> {
    if min == 0 {
        return Err(Error::param("min", "must be at least 1"));
    }
    if min >= max {
        return Err(Error::param("max", format!("must exceed min = {min}")));
    }
    if points_per_decade == 0 {
        return Err(Error::param("points_per_decade", "must be positive"));
    }
    let mut lags = Vec::new();
    for k in 0.. {
        let v = (min as f64 * 10f64.powf(k as f64 / points_per_decade as f64)).round();
        if v > max as f64 {
            break;
        }
        lags.push(v as u64);
    }
    lags.push(max);
    lags.dedup();
    Ok(lags)
}

/// Per-split part of an [`AuditReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct SplitReport {
    pub label: String,
    pub length: usize,
    pub distinct_symbols: usize,
    pub curve: MiCurve,
    /// Requested lags not shorter than the split.
    pub omitted_lags: Vec<u64>,
    /// Power-law fit over [`FIT_WINDOW`], or why it could not be made.
    pub fit: std::result::Result<FitResult, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    /// Training split first.
    pub splits: Vec<SplitReport>,
    /// Largest `|ln I_train(τ) − ln I_other(τ)|` over shared lags and other
    /// splits, with both values floored at the estimator noise scale.
    pub divergence: f64,
    /// Label and lag where the divergence is attained.
    pub divergence_at: (String, u64),
    pub flag: bool,
}

/// Order-of-magnitude MI of independent symbols: `(k_x − 1)(k_y − 1)/(2N)`
/// for `N` pairs over `k` observed symbols.
fn noise_floor(distinct: usize, pairs: u64) -> f64 {
    let k = distinct.max(2) as f64 - 1.0;
    k * k / (2.0 * pairs.max(1) as f64)
}

fn split_report(
    label: &str,
    seq: &SymbolSequence,
    lags: &[u64],
    estimator: Estimator,
) -> Result<SplitReport> {
    let (usable, omitted): (Vec<u64>, Vec<u64>) =
        lags.iter().partition(|&&l| (l as usize) < seq.len());
    if !omitted.is_empty() {
        warn!(
            "split `{label}`: lags {omitted:?} are not shorter than its length {}",
            seq.len()
        );
    }
    if usable.is_empty() {
        return Err(Error::domain(format!(
            "split `{label}` is shorter than every requested lag"
        )));
    }
    let corpus = Corpus::single(seq.clone(), label);
    let curve = auto_mi_curve(&corpus, &usable, estimator)?;
    let window = curve.restrict(FIT_WINDOW.0, FIT_WINDOW.1);
    let fit = fit_powerlaw(&window, AUDIT_THRESHOLD).map_err(|e| e.to_string());
    let mut seen = vec![false; seq.vocab_size() as usize];
    for &s in seq.symbols() {
        seen[s as usize] = true;
    }
    Ok(SplitReport {
        label: label.to_string(),
        length: seq.len(),
        distinct_symbols: seen.iter().filter(|&&b| b).count(),
        curve,
        omitted_lags: omitted,
        fit,
    })
}

/// Profiles `train` and every other split and compares their MI curves.
pub fn audit(
    train: (&str, &SymbolSequence),
    others: &[(&str, &SymbolSequence)],
    lags: &[u64],
    estimator: Estimator,
) -> Result<AuditReport> {
    if others.is_empty() {
        return Err(Error::domain(
            "audit needs at least one split besides train",
        ));
    }
    if estimator == Estimator::Analytic {
        return Err(Error::domain(
            "the analytic estimator does not apply to text",
        ));
    }
    let v = train.1.vocab_size();
    if let Some((label, _)) = others.iter().find(|(_, s)| s.vocab_size() != v) {
        return Err(Error::domain(format!(
            "split `{label}` does not share the training vocabulary"
        )));
    }
    let mut lags = lags.to_vec();
    lags.sort_unstable();
    lags.dedup();
    if lags.first() == Some(&0) {
        return Err(Error::param("lags", "must be positive"));
    }

    let train_report = split_report(train.0, train.1, &lags, estimator)?;
    let mut splits = vec![train_report];
    for (label, seq) in others {
        splits.push(split_report(label, seq, &lags, estimator)?);
    }

    let base = &splits[0];
    let mut divergence = 0.0f64;
    let mut divergence_at = (String::new(), 0);
    for other in &splits[1..] {
        let mut shared = 0;
        for p in base.curve.points() {
            let Some(q) = other.curve.get(p.lag) else {
                continue;
            };
            shared += 1;
            let floor = noise_floor(base.distinct_symbols, p.pairs)
                .max(noise_floor(other.distinct_symbols, q.pairs));
            let gap = (p.mi.max(floor).ln() - q.mi.max(floor).ln()).abs();
            if gap > divergence {
                divergence = gap;
                divergence_at = (other.label.clone(), p.lag);
            }
        }
        if shared == 0 {
            return Err(Error::domain(format!(
                "splits `{}` and `{}` share no lags",
                base.label, other.label
            )));
        }
    }
    if divergence_at.0.is_empty() {
        divergence_at = (splits[1].label.clone(), splits[0].curve.points()[0].lag);
    }
    Ok(AuditReport {
        flag: divergence > DIVERGENCE_THRESHOLD,
        splits,
        divergence,
        divergence_at,
    })
}

impl AuditReport {
    /// Flat `key=value` report; per-split keys are prefixed by the label.
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let labels: Vec<&str> = self.splits.iter().map(|s| s.label.as_str()).collect();
        let _ = writeln!(out, "splits={}", labels.join(","));
        let _ = writeln!(out, "flag={}", self.flag);
        let _ = writeln!(out, "divergence={}", sig(self.divergence, 10));
        let _ = writeln!(
            out,
            "divergence_threshold={}",
            sig(DIVERGENCE_THRESHOLD, 10)
        );
        let _ = writeln!(out, "divergence_split={}", self.divergence_at.0);
        let _ = writeln!(out, "divergence_lag={}", self.divergence_at.1);
        let _ = writeln!(out, "fit_window={}-{}", FIT_WINDOW.0, FIT_WINDOW.1);
        for s in &self.splits {
            let p = &s.label;
            let _ = writeln!(out, "{p}.length={}", s.length);
            let _ = writeln!(out, "{p}.distinct_symbols={}", s.distinct_symbols);
            let _ = writeln!(out, "{p}.lags={}", s.curve.len());
            let omitted: Vec<String> = s.omitted_lags.iter().map(u64::to_string).collect();
            let _ = writeln!(out, "{p}.omitted_lags={}", omitted.join(","));
            match &s.fit {
                Ok(fit) => {
                    for line in fit.to_key_value().lines() {
                        let _ = writeln!(out, "{p}.fit.{line}");
                    }
                }
                Err(reason) => {
                    let _ = writeln!(out, "{p}.fit.error={reason}");
                }
            }
        }
        out
    }
}
