//! Integer-coded symbol sequences and the plain-text corpus format.
//!
//! A corpus file starts with a `#vocab=V` header line followed by one
//! sequence per line, symbols written as space-separated integer ids.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Symbols drawn from an alphabet `0..vocab_size`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolSequence {
    symbols: Vec<u32>,
    vocab_size: u32,
}

impl SymbolSequence {
    pub fn new(symbols: Vec<u32>, vocab_size: u32) -> Result<Self> {
        if vocab_size == 0 {
            return Err(Error::domain("vocabulary size must be positive"));
        }
        if symbols.is_empty() {
            return Err(Error::domain("sequence must contain at least one symbol"));
        }
        if let Some((pos, &s)) = symbols.iter().enumerate().find(|(_, &s)| s >= vocab_size) {
            return Err(Error::domain(format!(
                "symbol {s} at position {pos} is outside vocabulary of size {vocab_size}"
            )));
        }
        Ok(Self {
            symbols,
            vocab_size,
        })
    }

    pub fn symbols(&self) -> &[u32] {
        &self.symbols
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Re-declares the alphabet size. The new size may only grow, so every
    /// existing id stays valid.
    pub fn with_vocab_size(mut self, vocab_size: u32) -> Result<Self> {
        if vocab_size < self.vocab_size {
            return Err(Error::domain(format!(
                "cannot shrink vocabulary from {} to {vocab_size}",
                self.vocab_size
            )));
        }
        self.vocab_size = vocab_size;
        Ok(self)
    }

    /// Applies a bijective relabeling `old id -> new id`.
    pub fn relabel(&self, map: &[u32]) -> Result<Self> {
        if map.len() != self.vocab_size as usize {
            return Err(Error::domain(
                "relabeling map must cover the whole vocabulary",
            ));
        }
        Self::new(
            self.symbols.iter().map(|&s| map[s as usize]).collect(),
            self.vocab_size,
        )
    }

    pub fn into_symbols(self) -> Vec<u32> {
        self.symbols
    }
}

/// A labeled set of sequences over one shared alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    sequences: Vec<SymbolSequence>,
    vocab_size: u32,
    pub label: String,
}

impl Corpus {
    pub fn new(sequences: Vec<SymbolSequence>, label: impl Into<String>) -> Result<Self> {
        let first = sequences
            .first()
            .ok_or_else(|| Error::domain("corpus must contain at least one sequence"))?;
        let vocab_size = first.vocab_size();
        if let Some(i) = sequences.iter().position(|s| s.vocab_size() != vocab_size) {
            return Err(Error::domain(format!(
                "sequence {i} has vocabulary size {} but the corpus uses {vocab_size}",
                sequences[i].vocab_size()
            )));
        }
        Ok(Self {
            sequences,
            vocab_size,
            label: label.into(),
        })
    }

    pub fn single(sequence: SymbolSequence, label: impl Into<String>) -> Self {
        let vocab_size = sequence.vocab_size();
        Self {
            sequences: vec![sequence],
            vocab_size,
            label: label.into(),
        }
    }

    pub fn sequences(&self) -> &[SymbolSequence] {
        &self.sequences
    }

    pub fn vocab_size(&self) -> u32 {
        self.vocab_size
    }

    pub fn total_symbols(&self) -> usize {
        self.sequences.iter().map(SymbolSequence::len).sum()
    }

    pub fn max_len(&self) -> usize {
        self.sequences
            .iter()
            .map(SymbolSequence::len)
            .max()
            .unwrap_or(0)
    }

    /// Writes the `#vocab=V` corpus format.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "#vocab={}", self.vocab_size)?;
        let mut line = String::new();
        for seq in &self.sequences {
            line.clear();
            for (i, s) in seq.symbols().iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                let _ = write!(line, "{s}");
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    /// Parses the `#vocab=V` corpus format. Blank lines are skipped.
    pub fn read_from<R: BufRead>(input: R, label: impl Into<String>) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let vocab_size = loop {
            match lines.next() {
                None => return Err(Error::format(1, "missing `#vocab=V` header")),
                Some((i, line)) => {
                    let line = line?;
                    let trimmed = line.trim();
                    if trimmed.is_empty() {
                        continue;
                    }
                    let value = trimmed
                        .strip_prefix("#vocab=")
                        .ok_or_else(|| Error::format(i + 1, "expected `#vocab=V` header"))?;
                    let v: u32 = value.trim().parse().map_err(|_| {
                        Error::format(i + 1, format!("bad vocabulary size `{value}`"))
                    })?;
                    break v;
                }
            }
        };
        if vocab_size == 0 {
            return Err(Error::format(1, "vocabulary size must be positive"));
        }
        let mut sequences = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let symbols = line
                .split_ascii_whitespace()
                .map(|tok| {
                    tok.parse::<u32>()
                        .map_err(|_| Error::format(i + 1, format!("bad symbol id `{tok}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            let seq = SymbolSequence::new(symbols, vocab_size)
                .map_err(|e| Error::format(i + 1, e.to_string()))?;
            sequences.push(seq);
        }
        if sequences.is_empty() {
            return Err(Error::format(1, "corpus contains no sequences"));
        }
        Corpus::new(sequences, label)
    }
}
