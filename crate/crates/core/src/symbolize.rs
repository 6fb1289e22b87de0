//! Discretization of real-valued returns onto a small alphabet.
//!
//! The default scheme is a symmetric fixed threshold `d`: returns at or
//! below `-d` map to 0 (decrease), returns inside the open band `(-d, d)`
//! map to 1 (intermediate), returns at or above `d` map to 2 (increase).
//! A per-series tercile scheme is provided as well, for data where a fixed
//! band would leave one state dominating.

use std::io::Write;

use crate::error::{Error, Result};
use crate::ingest::ReturnSeries;

/// How a symbol sequence was produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    /// Symmetric band of half-width `d` around zero.
    FixedThreshold(f64),
    /// Per-series empirical 1/3 and 2/3 quantiles.
    Terciles,
    /// Generated or loaded from a file; no discretization happened here.
    External,
}

/// Discrete state sequence over the alphabet `0..alphabet`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolSequence {
    symbol: String,
    states: Vec<u8>,
    alphabet: u8,
    scheme: Scheme,
}

impl SymbolSequence {
    pub fn new(
        symbol: impl Into<String>,
        states: Vec<u8>,
        alphabet: u8,
        scheme: Scheme,
    ) -> Result<Self> {
        if alphabet < 2 {
            return Err(Error::InvalidConfig(format!(
                "alphabet size {alphabet} must be at least 2"
            )));
        }
        if let Some(bad) = states.iter().find(|s| **s >= alphabet) {
            return Err(Error::InvalidData(format!(
                "state {bad} out of range for alphabet {alphabet}"
            )));
        }
        Ok(Self {
            symbol: symbol.into(),
            states,
            alphabet,
            scheme,
        })
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn states(&self) -> &[u8] {
        &self.states
    }

    pub fn alphabet(&self) -> u8 {
        self.alphabet
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn histogram(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.alphabet as usize];
        for &s in &self.states {
            counts[s as usize] += 1;
        }
        counts
    }

    /// Single-line digit string, e.g. `0121102`. Alphabets above 10 states
    /// have no digit representation.
    pub fn write_digit_line<W: Write>(&self, mut w: W) -> Result<W> {
        if self.alphabet > 10 {
            return Err(Error::InvalidConfig(format!(
                "alphabet {} too large for a digit string",
                self.alphabet
            )));
        }
        let io_err = |source| Error::Io {
            path: "<writer>".into(),
            source,
        };
        for &s in &self.states {
            write!(w, "{s}").map_err(io_err)?;
        }
        writeln!(w).map_err(io_err)?;
        Ok(w)
    }

    pub fn parse_digit_line(symbol: impl Into<String>, line: &str, alphabet: u8) -> Result<Self> {
        let mut states = Vec::with_capacity(line.len());
        for (i, c) in line.trim().chars().enumerate() {
            let digit = c
                .to_digit(10)
                .ok_or_else(|| Error::InvalidData(format!("position {i}: {c:?} is not a digit")))?;
            states.push(digit as u8);
        }
        Self::new(symbol, states, alphabet, Scheme::External)
    }
}

/// Ternary fixed-threshold discretization of raw values.
pub fn symbolize_fixed_values(values: &[f64], d: f64) -> Result<Vec<u8>> {
    if !(d > 0.0) {
        return Err(Error::InvalidConfig(format!("threshold d={d} must be > 0")));
    }
    Ok(values
        .iter()
        .map(|&x| {
            if x <= -d {
                0
            } else if x >= d {
                2
            } else {
                1
            }
        })
        .collect())
}

pub fn symbolize_fixed(r: &ReturnSeries, d: f64) -> Result<SymbolSequence> {
    let states = symbolize_fixed_values(&r.values(), d)?;
    SymbolSequence::new(r.symbol(), states, 3, Scheme::FixedThreshold(d))
}

/// Tercile discretization of raw values: state 0 for `x <= q1`, 1 for
/// `q1 < x <= q2`, 2 for `x > q2`. When the two quantiles coincide the
/// middle band absorbs the ties, so a constant series is all state 1.
pub fn symbolize_tercile_values(values: &[f64]) -> Result<Vec<u8>> {
    if values.len() < 3 {
        return Err(Error::InvalidData(format!(
            "need at least 3 samples for terciles, got {}",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("returns must not be NaN"));
    let n = sorted.len();
    let q1 = sorted[n.div_ceil(3) - 1];
    let q2 = sorted[(2 * n).div_ceil(3) - 1];
    Ok(values
        .iter()
        .map(|&x| {
            if q1 == q2 {
                match x {
                    _ if x < q1 => 0,
                    _ if x > q2 => 2,
                    _ => 1,
                }
            } else if x <= q1 {
                0
            } else if x <= q2 {
                1
            } else {
                2
            }
        })
        .collect())
}

pub fn symbolize_terciles(r: &ReturnSeries) -> Result<SymbolSequence> {
    let states = symbolize_tercile_values(&r.values())?;
    SymbolSequence::new(r.symbol(), states, 3, Scheme::Terciles)
}
