//! Plug-in estimation of transfer entropy and cross-correlation.
//!
//! For two discrete processes I (target) and J (source), transfer entropy
//!
//! ```text
//! T_{J→I} = Σ p(i_{t+1}, i_t^(k), j_t^(l)) · log[ p(i_{t+1} | i_t^(k), j_t^(l)) / p(i_{t+1} | i_t^(k)) ]
//! ```
//!
//! measures how much the last `l` states of J reduce uncertainty about I's
//! next state beyond I's own last `k` states. It decomposes into entropy
//! rates as `T_{J→I} = h_I(k) − h_IJ(k,l)`; both forms are implemented
//! against the same counts and must agree to 1e-12, which doubles as the
//! module's self-check.
//!
//! Estimation is maximum-likelihood (plug-in): empirical frequencies, zero
//! count terms contribute zero, no smoothing. The finite-sample positive
//! bias is handled upstream by shuffled surrogates, not corrected here.

use std::io::{BufRead, BufReader, Read, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{self, AlignMode, ReturnSeries};
use crate::symbolize::{self, Scheme, SymbolSequence};

/// Anything more negative than this is not rounding noise.
const TE_CLAMP: f64 = 1e-12;

/// Dense joint-count tables above this size are refused.
const MAX_STATE_SPACE: usize = 1 << 22;

/// Logarithm base for entropy units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    /// Bits.
    #[default]
    Two,
    /// Nats.
    Nat,
    /// Hartleys.
    Ten,
}

impl LogBase {
    pub fn ln_factor(self) -> f64 {
        match self {
            LogBase::Two => std::f64::consts::LN_2,
            LogBase::Nat => 1.0,
            LogBase::Ten => std::f64::consts::LN_10,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LogBase::Two => "2",
            LogBase::Nat => "e",
            LogBase::Ten => "10",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "2" => Ok(LogBase::Two),
            "e" => Ok(LogBase::Nat),
            "10" => Ok(LogBase::Ten),
            other => Err(Error::InvalidConfig(format!(
                "log base must be one of 2, e, 10; got {other:?}"
            ))),
        }
    }
}

/// History lengths and units for the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingConfig {
    pub k: usize,
    pub l: usize,
    pub base: LogBase,
}

impl EmbeddingConfig {
    pub fn new(k: usize, l: usize, base: LogBase) -> Result<Self> {
        if k < 1 || l < 1 {
            return Err(Error::InvalidConfig(format!(
                "history lengths must be at least 1, got k={k} l={l}"
            )));
        }
        Ok(Self { k, l, base })
    }

    pub fn window(self) -> usize {
        self.k.max(self.l)
    }
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            k: 1,
            l: 1,
            base: LogBase::Two,
        }
    }
}

/// Occurrence counts over `(next target state, target history, source history)`.
///
/// Histories are packed positionally: the key layout is
/// `(source_hist * A_t^k + target_hist) * A_t + next`, with the most recent
/// history sample in the lowest digit. Exactly `N − max(k, l)` windows are
/// counted.
#[derive(Debug, Clone)]
pub struct JointCounts {
    counts: Vec<u64>,
    total: u64,
    a_target: usize,
    a_source: usize,
    cfg: EmbeddingConfig,
    dim_next: usize,
    dim_target_hist: usize,
    dim_source_hist: usize,
}

impl JointCounts {
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn cfg(&self) -> EmbeddingConfig {
        self.cfg
    }

    /// Count for a packed key; used by tests poking at specific cells.
    pub fn count_at(&self, next: usize, target_hist: &[u8], source_hist: &[u8]) -> u64 {
        assert_eq!(target_hist.len(), self.cfg.k);
        assert_eq!(source_hist.len(), self.cfg.l);
        let th = pack(target_hist, self.a_target);
        let sh = pack(source_hist, self.a_source);
        self.counts[(sh * self.dim_target_hist + th) * self.dim_next + next]
    }

    pub fn distinct_keys(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

fn pack(history: &[u8], alphabet: usize) -> usize {
    // history is ordered oldest..newest; newest gets the lowest digit
    history
        .iter()
        .fold(0usize, |acc, &s| acc * alphabet + s as usize)
}

fn checked_dim(alphabet: usize, len: usize) -> Result<usize> {
    alphabet
        .checked_pow(len as u32)
        .filter(|&d| d <= MAX_STATE_SPACE)
        .ok_or_else(|| {
            Error::InvalidConfig(format!(
                "state space {alphabet}^{len} too large for dense counting"
            ))
        })
}

/// Count joint occurrences on two equally long state slices.
pub fn count_joint_states(
    target: &[u8],
    source: &[u8],
    a_target: usize,
    a_source: usize,
    cfg: EmbeddingConfig,
) -> Result<JointCounts> {
    if target.len() != source.len() {
        return Err(Error::InvalidData(format!(
            "sequence lengths differ: target {} vs source {}",
            target.len(),
            source.len()
        )));
    }
    let n = target.len();
    let m = cfg.window();
    if n < m + 1 {
        return Err(Error::InvalidData(format!(
            "{n} samples leave no usable window for k={} l={}",
            cfg.k, cfg.l
        )));
    }
    let dim_next = a_target;
    let dim_target_hist = checked_dim(a_target, cfg.k)?;
    let dim_source_hist = checked_dim(a_source, cfg.l)?;
    let size = dim_source_hist
        .checked_mul(dim_target_hist)
        .and_then(|s| s.checked_mul(dim_next))
        .filter(|&s| s <= MAX_STATE_SPACE)
        .ok_or_else(|| Error::InvalidConfig("joint state space too large".into()))?;

    let mut counts = vec![0u64; size];
    for t in (m - 1)..(n - 1) {
        let next = target[t + 1] as usize;
        let th = pack(&target[t + 1 - cfg.k..=t], a_target);
        let sh = pack(&source[t + 1 - cfg.l..=t], a_source);
        counts[(sh * dim_target_hist + th) * dim_next + next] += 1;
    }
    Ok(JointCounts {
        counts,
        total: (n - m) as u64,
        a_target,
        a_source,
        cfg,
        dim_next,
        dim_target_hist,
        dim_source_hist,
    })
}

/// Count joint occurrences for a (target, source) pair of symbol sequences.
pub fn count_joint(
    target: &SymbolSequence,
    source: &SymbolSequence,
    cfg: EmbeddingConfig,
) -> Result<JointCounts> {
    count_joint_states(
        target.states(),
        source.states(),
        target.alphabet() as usize,
        source.alphabet() as usize,
        cfg,
    )
}

/// Which entropy rate to evaluate from a joint count table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyTerm {
    /// `h_I(k)`: next state conditioned on the target's own history.
    TargetOnly,
    /// `h_IJ(k,l)`: next state conditioned on both histories.
    Joint,
}

/// Plug-in entropy rate in the configured units. Zero-probability terms
/// contribute exactly zero.
pub fn entropy_rate(counts: &JointCounts, which: EntropyTerm) -> Result<f64> {
    if counts.total == 0 {
        return Err(Error::InvalidData("empty counts".into()));
    }
    let total = counts.total as f64;
    let nats = match which {
        EntropyTerm::Joint => {
            let mut h = 0.0f64;
            for chunk in counts.counts.chunks_exact(counts.dim_next) {
                let denom: u64 = chunk.iter().sum();
                if denom == 0 {
                    continue;
                }
                let denom = denom as f64;
                for &c in chunk {
                    if c > 0 {
                        let c = c as f64;
                        h -= (c / total) * (c / denom).ln();
                    }
                }
            }
            h
        }
        EntropyTerm::TargetOnly => {
            let marginal = marginal_over_source(counts);
            let mut h = 0.0f64;
            for chunk in marginal.chunks_exact(counts.dim_next) {
                let denom: u64 = chunk.iter().sum();
                if denom == 0 {
                    continue;
                }
                let denom = denom as f64;
                for &c in chunk {
                    if c > 0 {
                        let c = c as f64;
                        h -= (c / total) * (c / denom).ln();
                    }
                }
            }
            h
        }
    };
    Ok(nats / counts.cfg.base.ln_factor())
}

/// Counts summed over the source history: `[target_hist][next]`.
fn marginal_over_source(counts: &JointCounts) -> Vec<u64> {
    let block = counts.dim_target_hist * counts.dim_next;
    let mut marginal = vec![0u64; block];
    for (i, &c) in counts.counts.iter().enumerate() {
        marginal[i % block] += c;
    }
    marginal
}

fn clamp_non_negative(te: f64) -> Result<f64> {
    if te >= 0.0 {
        Ok(te)
    } else if te >= -TE_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::Internal(format!(
            "plug-in transfer entropy {te} below the rounding clamp"
        )))
    }
}

/// Transfer entropy as the entropy-rate difference `h_I(k) − h_IJ(k,l)`.
pub fn transfer_entropy_decomposed(counts: &JointCounts) -> Result<f64> {
    let h_target = entropy_rate(counts, EntropyTerm::TargetOnly)?;
    let h_joint = entropy_rate(counts, EntropyTerm::Joint)?;
    clamp_non_negative(h_target - h_joint)
}

/// Transfer entropy evaluated directly as the expected log-likelihood
/// ratio of the two conditionals. Kept public as the module's self-check:
/// it must match [`transfer_entropy_decomposed`] to 1e-12 on any input.
pub fn transfer_entropy_direct(counts: &JointCounts) -> Result<f64> {
    if counts.total == 0 {
        return Err(Error::InvalidData("empty counts".into()));
    }
    let total = counts.total as f64;
    let marginal = marginal_over_source(counts);

    // per-target-history denominators for p(next | target_hist)
    let mut target_hist_totals = vec![0u64; counts.dim_target_hist];
    for (i, &c) in marginal.iter().enumerate() {
        target_hist_totals[i / counts.dim_next] += c;
    }

    let mut te = 0.0f64;
    for (base_idx, chunk) in counts.counts.chunks_exact(counts.dim_next).enumerate() {
        let pair_denom: u64 = chunk.iter().sum();
        if pair_denom == 0 {
            continue;
        }
        let pair_denom = pair_denom as f64;
        let th = base_idx % counts.dim_target_hist;
        for (next, &c) in chunk.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let c = c as f64;
            let p_joint_cond = c / pair_denom;
            let m = marginal[th * counts.dim_next + next] as f64;
            let p_target_cond = m / target_hist_totals[th] as f64;
            te += (c / total) * (p_joint_cond / p_target_cond).ln();
        }
    }
    clamp_non_negative(te / counts.cfg.base.ln_factor())
}

/// Convenience: count then estimate via the decomposed form.
pub fn transfer_entropy(
    target: &SymbolSequence,
    source: &SymbolSequence,
    cfg: EmbeddingConfig,
) -> Result<f64> {
    transfer_entropy_decomposed(&count_joint(target, source, cfg)?)
}

/// Square matrix with named rows/columns; `NaN` marks a sentinel cell.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedMatrix {
    symbols: Vec<String>,
    values: Vec<f64>,
}

impl NamedMatrix {
    pub fn filled(symbols: Vec<String>, fill: f64) -> Self {
        let n = symbols.len();
        Self {
            symbols,
            values: vec![fill; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n() + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let n = self.n();
        self.values[row * n + col] = value;
    }

    pub fn is_sentinel(&self, row: usize, col: usize) -> bool {
        self.get(row, col).is_nan()
    }

    pub fn transposed(&self) -> NamedMatrix {
        let n = self.n();
        let mut t = NamedMatrix::filled(self.symbols.clone(), f64::NAN);
        for r in 0..n {
            for c in 0..n {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// CSV with a symbol header row and column; `NA` for sentinels, shortest
    /// round-trip float formatting otherwise.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<W> {
        let io_err = |source| Error::Io {
            path: "<writer>".into(),
            source,
        };
        writeln!(w, ",{}", self.symbols.join(",")).map_err(io_err)?;
        for (r, symbol) in self.symbols.iter().enumerate() {
            write!(w, "{symbol}").map_err(io_err)?;
            for c in 0..self.n() {
                write!(w, ",{}", fmt_value(self.get(r, c))).map_err(io_err)?;
            }
            writeln!(w).map_err(io_err)?;
        }
        Ok(w)
    }

    pub fn read_csv<R: Read>(reader: R, path: &std::path::Path) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut lines = BufReader::new(reader).lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty matrix file".into()))?;
        let header = header.map_err(|e| parse_err(1, e.to_string()))?;
        let mut fields = header.split(',');
        let first = fields.next().unwrap_or("");
        if !first.is_empty() {
            return Err(parse_err(1, "matrix header must start with an empty cell".into()));
        }
        let symbols: Vec<String> = fields.map(str::to_string).collect();
        let n = symbols.len();
        if n == 0 {
            return Err(parse_err(1, "matrix header lists no symbols".into()));
        }
        let mut values = vec![f64::NAN; n * n];
        let mut rows_seen = 0usize;
        for (idx, line) in lines {
            let line = line.map_err(|e| parse_err(idx + 1, e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            if rows_seen >= n {
                return Err(parse_err(idx + 1, format!("more than {n} data rows")));
            }
            let mut fields = line.split(',');
            let row_symbol = fields.next().unwrap_or("");
            if row_symbol != symbols[rows_seen] {
                return Err(parse_err(
                    idx + 1,
                    format!(
                        "row symbol {row_symbol:?} does not match header {:?}",
                        symbols[rows_seen]
                    ),
                ));
            }
            let mut col = 0usize;
            for field in fields {
                if col >= n {
                    return Err(parse_err(idx + 1, format!("more than {n} columns")));
                }
                values[rows_seen * n + col] = if field == "NA" {
                    f64::NAN
                } else {
                    field.parse().map_err(|_| {
                        parse_err(idx + 1, format!("unparseable value {field:?}"))
                    })?
                };
                col += 1;
            }
            if col != n {
                return Err(parse_err(idx + 1, format!("expected {n} columns, got {col}")));
            }
            rows_seen += 1;
        }
        if rows_seen != n {
            return Err(parse_err(0, format!("expected {n} data rows, got {rows_seen}")));
        }
        Ok(Self { symbols, values })
    }
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v:?}")
    }
}

/// Directed pairwise transfer entropies. Entry `(row j, col i)` is
/// `T_{j→i}`; the diagonal and unusable pairs are sentinels.
#[derive(Debug, Clone)]
pub struct TEMatrix {
    pub matrix: NamedMatrix,
    /// Usable window counts per ordered pair, same layout as `matrix`.
    pub samples: Vec<u64>,
    pub cfg: EmbeddingConfig,
}

impl TEMatrix {
    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn symbols(&self) -> &[String] {
        self.matrix.symbols()
    }

    pub fn samples_at(&self, row: usize, col: usize) -> u64 {
        self.samples[row * self.n() + col]
    }
}

/// Symmetric Pearson correlations with an exactly-unit diagonal.
#[derive(Debug, Clone)]
pub struct CorrelationMatrix {
    pub matrix: NamedMatrix,
}

/// Options for building a TE matrix from raw return series.
#[derive(Debug, Clone, Copy)]
pub struct PanelOptions {
    pub scheme: Scheme,
    pub cfg: EmbeddingConfig,
    pub align: AlignMode,
    /// Shift the source back this many aligned samples before counting.
    pub source_lag: usize,
}

impl Default for PanelOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::FixedThreshold(0.04),
            cfg: EmbeddingConfig::default(),
            align: AlignMode::PairwiseIntersection,
            source_lag: 0,
        }
    }
}

fn symbolize_window(values: &[f64], scheme: Scheme) -> Result<Vec<u8>> {
    match scheme {
        Scheme::FixedThreshold(d) => symbolize::symbolize_fixed_values(values, d),
        Scheme::Terciles => symbolize::symbolize_tercile_values(values),
        Scheme::External => Err(Error::InvalidConfig(
            "panel symbolization needs a fixed-threshold or tercile scheme".into(),
        )),
    }
}

/// TE for one direction on aligned state slices, honoring the source lag.
fn lagged_te(target: &[u8], source: &[u8], cfg: EmbeddingConfig, lag: usize) -> Result<(f64, u64)> {
    let n = target.len();
    if n <= lag {
        return Err(Error::InvalidData(format!(
            "window of {n} samples cannot absorb a source lag of {lag}"
        )));
    }
    let counts = count_joint_states(&target[lag..], &source[..n - lag], 3, 3, cfg)?;
    Ok((transfer_entropy_decomposed(&counts)?, counts.total()))
}

/// Pairwise transfer entropies over a panel of return series.
///
/// Pairs with no usable common window become sentinels rather than errors.
/// Ordered pairs are computed in parallel; each cell's value depends only on
/// its own pair, so the result is identical for any worker count.
pub fn te_matrix_from_returns(panel: &[ReturnSeries], opts: &PanelOptions) -> Result<TEMatrix> {
    if panel.len() < 2 {
        return Err(Error::InvalidData(format!(
            "need at least 2 series for a TE matrix, got {}",
            panel.len()
        )));
    }
    let aligned_panel;
    let panel: &[ReturnSeries] = match opts.align {
        AlignMode::PairwiseIntersection => panel,
        AlignMode::GlobalIntersection => {
            aligned_panel = ingest::align_global(panel)?;
            &aligned_panel
        }
    };
    let n = panel.len();
    let symbols: Vec<String> = panel.iter().map(|s| s.symbol().to_string()).collect();

    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let results: Vec<(usize, usize, Option<(f64, f64, u64)>)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let pair = match ingest::try_align(&panel[i], &panel[j]) {
                Some(p) => p,
                None => return (i, j, None),
            };
            let states = (|| -> Result<(f64, f64, u64)> {
                let left = symbolize_window(&pair.left.values(), opts.scheme)?;
                let right = symbolize_window(&pair.right.values(), opts.scheme)?;
                // T_{i→j}: source = left(i), target = right(j)
                let (te_ij, count) = lagged_te(&right, &left, opts.cfg, opts.source_lag)?;
                let (te_ji, _) = lagged_te(&left, &right, opts.cfg, opts.source_lag)?;
                Ok((te_ij, te_ji, count))
            })();
            (i, j, states.ok())
        })
        .collect();

    let mut matrix = NamedMatrix::filled(symbols, f64::NAN);
    let mut samples = vec![0u64; n * n];
    for (i, j, outcome) in results {
        if let Some((te_ij, te_ji, count)) = outcome {
            matrix.set(i, j, te_ij);
            matrix.set(j, i, te_ji);
            samples[i * n + j] = count;
            samples[j * n + i] = count;
        }
    }
    Ok(TEMatrix {
        matrix,
        samples,
        cfg: opts.cfg,
    })
}

/// Pairwise transfer entropies over pre-aligned symbol sequences.
pub fn te_matrix_from_symbols(panel: &[SymbolSequence], cfg: EmbeddingConfig) -> Result<TEMatrix> {
    if panel.len() < 2 {
        return Err(Error::InvalidData(format!(
            "need at least 2 series for a TE matrix, got {}",
            panel.len()
        )));
    }
    let n = panel.len();
    let len = panel[0].len();
    if let Some(bad) = panel.iter().find(|s| s.len() != len) {
        return Err(Error::InvalidData(format!(
            "sequence {} has length {}, expected {len}",
            bad.symbol(),
            bad.len()
        )));
    }
    let symbols: Vec<String> = panel.iter().map(|s| s.symbol().to_string()).collect();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|j| (0..n).map(move |i| (j, i)))
        .filter(|&(j, i)| j != i)
        .collect();
    let results: Vec<(usize, usize, Option<(f64, u64)>)> = pairs
        .par_iter()
        .map(|&(j, i)| {
            let outcome = count_joint(&panel[i], &panel[j], cfg)
                .and_then(|c| Ok((transfer_entropy_decomposed(&c)?, c.total())));
            (j, i, outcome.ok())
        })
        .collect();

    let mut matrix = NamedMatrix::filled(symbols, f64::NAN);
    let mut samples = vec![0u64; n * n];
    for (j, i, outcome) in results {
        if let Some((te, count)) = outcome {
            matrix.set(j, i, te);
            samples[j * n + i] = count;
        }
    }
    Ok(TEMatrix {
        matrix,
        samples,
        cfg,
    })
}

/// Pearson correlations on pairwise-aligned return series. Zero-variance or
/// unalignable pairs become sentinels.
pub fn cross_correlation_matrix(
    panel: &[ReturnSeries],
    align: AlignMode,
) -> Result<CorrelationMatrix> {
    if panel.len() < 2 {
        return Err(Error::InvalidData(format!(
            "need at least 2 series for a correlation matrix, got {}",
            panel.len()
        )));
    }
    let aligned_panel;
    let panel: &[ReturnSeries] = match align {
        AlignMode::PairwiseIntersection => panel,
        AlignMode::GlobalIntersection => {
            aligned_panel = ingest::align_global(panel)?;
            &aligned_panel
        }
    };
    let n = panel.len();
    let symbols: Vec<String> = panel.iter().map(|s| s.symbol().to_string()).collect();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let results: Vec<(usize, usize, f64)> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let corr = ingest::try_align(&panel[i], &panel[j])
                .map(|pair| pearson(&pair.left.values(), &pair.right.values()))
                .unwrap_or(f64::NAN);
            (i, j, corr)
        })
        .collect();

    let mut matrix = NamedMatrix::filled(symbols, f64::NAN);
    for i in 0..n {
        matrix.set(i, i, 1.0);
    }
    for (i, j, corr) in results {
        matrix.set(i, j, corr);
        matrix.set(j, i, corr);
    }
    Ok(CorrelationMatrix { matrix })
}

/// Pearson correlation; NaN when either side has zero variance or fewer
/// than two samples.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len();
    if n < 2 {
        return f64::NAN;
    }
    let mean_x = x.iter().sum::<f64>() / n as f64;
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (&xv, &yv) in x.iter().zip(y) {
        let dx = xv - mean_x;
        let dy = yv - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return f64::NAN;
    }
    cov / (var_x * var_y).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolize::Scheme;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq(states: Vec<u8>) -> SymbolSequence {
        SymbolSequence::new("X", states, 3, Scheme::External).unwrap()
    }

    fn cfg(k: usize, l: usize) -> EmbeddingConfig {
        EmbeddingConfig::new(k, l, LogBase::Two).unwrap()
    }

    fn uniform_ternary(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
        (0..n).map(|_| rng.random_range(0..3u8)).collect()
    }

    #[test]
    fn count_joint_hand_enumeration() {
        let s = seq(vec![0, 1, 2]);
        let counts = count_joint(&s, &s, cfg(1, 1)).unwrap();
        assert_eq!(counts.total(), 2);
        assert_eq!(counts.count_at(1, &[0], &[0]), 1);
        assert_eq!(counts.count_at(2, &[1], &[1]), 1);
        assert_eq!(counts.distinct_keys(), 2);
    }

    #[test]
    fn count_joint_constant_sequence() {
        let s = seq(vec![1, 1, 1, 1]);
        let counts = count_joint(&s, &s, cfg(1, 1)).unwrap();
        assert_eq!(counts.total(), 3);
        assert_eq!(counts.count_at(1, &[1], &[1]), 3);
        assert_eq!(counts.distinct_keys(), 1);
    }

    #[test]
    fn count_joint_window_with_k2() {
        let t = seq(vec![0, 1, 2, 0, 1]);
        let s = seq(vec![2, 2, 1, 1, 0]);
        let counts = count_joint(&t, &s, cfg(2, 1)).unwrap();
        assert_eq!(counts.total(), 3); // N − max(k,l) = 5 − 2
        assert_eq!(counts.count_at(2, &[0, 1], &[2]), 1);
        assert_eq!(counts.count_at(0, &[1, 2], &[1]), 1);
        assert_eq!(counts.count_at(1, &[2, 0], &[1]), 1);
    }

    #[test]
    fn count_joint_rejects_mismatched_lengths() {
        let a = seq(vec![0, 1, 2]);
        let b = seq(vec![0, 1]);
        assert!(count_joint(&a, &b, cfg(1, 1)).is_err());
    }

    #[test]
    fn count_joint_rejects_empty_window() {
        let a = seq(vec![0, 1]);
        assert!(count_joint(&a, &a, cfg(2, 2)).is_err());
    }

    #[test]
    fn entropy_rate_of_constant_sequence_is_zero() {
        let s = seq(vec![1; 50]);
        let counts = count_joint(&s, &s, cfg(1, 1)).unwrap();
        assert_eq!(entropy_rate(&counts, EntropyTerm::TargetOnly).unwrap(), 0.0);
        assert_eq!(entropy_rate(&counts, EntropyTerm::Joint).unwrap(), 0.0);
    }

    #[test]
    fn entropy_rate_of_iid_uniform_approaches_log3() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let target = seq(uniform_ternary(&mut rng, 100_000));
        let source = seq(uniform_ternary(&mut rng, 100_000));
        let counts = count_joint(&target, &source, cfg(1, 1)).unwrap();
        let h = entropy_rate(&counts, EntropyTerm::TargetOnly).unwrap();
        assert!((h - 3.0f64.log2()).abs() < 0.01, "h_I = {h}");
    }

    #[test]
    fn joint_entropy_rate_never_exceeds_target_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.random_range(10..500);
            let target = seq(uniform_ternary(&mut rng, n));
            let source = seq(uniform_ternary(&mut rng, n));
            let counts = count_joint(&target, &source, cfg(1, 1)).unwrap();
            let h_i = entropy_rate(&counts, EntropyTerm::TargetOnly).unwrap();
            let h_ij = entropy_rate(&counts, EntropyTerm::Joint).unwrap();
            assert!(h_ij <= h_i + 1e-12, "h_IJ {h_ij} > h_I {h_i}");
        }
    }

    #[test]
    fn te_of_full_copy_pair_is_log2_3() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let driver = uniform_ternary(&mut rng, n);
        let mut follower = vec![0u8; n];
        follower[0] = rng.random_range(0..3);
        for t in 1..n {
            follower[t] = driver[t - 1];
        }
        let driver = seq(driver);
        let follower = seq(follower);
        let te = transfer_entropy(&follower, &driver, cfg(1, 1)).unwrap();
        assert!((te - 3.0f64.log2()).abs() < 0.01, "forward TE {te}");
        let reverse = transfer_entropy(&driver, &follower, cfg(1, 1)).unwrap();
        assert!(reverse <= 0.01, "reverse TE {reverse}");
    }

    #[test]
    fn te_of_independent_pair_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let target = seq(uniform_ternary(&mut rng, 100_000));
        let source = seq(uniform_ternary(&mut rng, 100_000));
        let te = transfer_entropy(&target, &source, cfg(1, 1)).unwrap();
        assert!(te < 0.001, "independent TE {te}");
    }

    #[test]
    fn single_key_counts_give_zero_te() {
        let s = seq(vec![2, 2, 2, 2, 2]);
        let counts = count_joint(&s, &s, cfg(1, 1)).unwrap();
        assert_eq!(transfer_entropy_direct(&counts).unwrap(), 0.0);
        assert_eq!(transfer_entropy_decomposed(&counts).unwrap(), 0.0);
    }

    #[test]
    fn direct_equals_decomposed_across_embeddings() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let n = 1000;
            let target = seq(uniform_ternary(&mut rng, n));
            let source = seq(uniform_ternary(&mut rng, n));
            for (k, l) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
                let counts = count_joint(&target, &source, cfg(k, l)).unwrap();
                let direct = transfer_entropy_direct(&counts).unwrap();
                let decomposed = transfer_entropy_decomposed(&counts).unwrap();
                assert!(
                    (direct - decomposed).abs() < 1e-12,
                    "k={k} l={l}: {direct} vs {decomposed}"
                );
            }
        }
    }

    #[test]
    fn plug_in_bias_matches_first_order_formula() {
        // Independent ternary pairs, k=l=1: mean TE should sit near
        // (A−1)·A^k·(A^l−1) / (2N ln 2) bits.
        let n = 2000usize;
        let seeds = 200u64;
        let mut sum = 0.0;
        for seed in 0..seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let target = seq(uniform_ternary(&mut rng, n));
            let source = seq(uniform_ternary(&mut rng, n));
            sum += transfer_entropy(&target, &source, cfg(1, 1)).unwrap();
        }
        let mean = sum / seeds as f64;
        let predicted = 2.0 * 3.0 * 2.0 / (2.0 * n as f64 * std::f64::consts::LN_2);
        assert!(
            mean >= 0.5 * predicted && mean <= 2.0 * predicted,
            "mean bias {mean} outside [{}, {}]",
            0.5 * predicted,
            2.0 * predicted
        );
    }

    #[test]
    fn te_matrix_of_identical_series_is_symmetric() {
        let states = vec![0, 1, 2, 1, 0, 2, 2, 1, 0, 1, 2, 0];
        let a = SymbolSequence::new("A", states.clone(), 3, Scheme::External).unwrap();
        let b = SymbolSequence::new("B", states, 3, Scheme::External).unwrap();
        let m = te_matrix_from_symbols(&[a, b], cfg(1, 1)).unwrap();
        assert_eq!(m.matrix.get(0, 1), m.matrix.get(1, 0));
        assert!(m.matrix.get(0, 0).is_nan());
        assert_eq!(m.samples_at(0, 1), 11);
    }

    #[test]
    fn correlation_of_self_and_negation() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let dates_values: Vec<f64> = (0..500).map(|_| rng.random::<f64>() - 0.5).collect();
        let date0 = chrono::NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
        let a = ReturnSeries::new(
            "A",
            dates_values
                .iter()
                .enumerate()
                .map(|(i, v)| (date0 + chrono::Days::new(i as u64), *v))
                .collect(),
        );
        let neg = ReturnSeries::new(
            "NEG",
            dates_values
                .iter()
                .enumerate()
                .map(|(i, v)| (date0 + chrono::Days::new(i as u64), -*v))
                .collect(),
        );
        let m = cross_correlation_matrix(&[a, neg], AlignMode::PairwiseIntersection)
            .unwrap()
            .matrix;
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(1, 1), 1.0);
        assert!((m.get(0, 1) + 1.0).abs() < 1e-12);
        assert_eq!(m.get(0, 1), m.get(1, 0));
    }

    #[test]
    fn correlation_of_independent_series_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let date0 = chrono::NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
        let mk = |rng: &mut ChaCha8Rng, name: &str| {
            ReturnSeries::new(
                name,
                (0..10_000)
                    .map(|i| (date0 + chrono::Days::new(i as u64), rng.random::<f64>() - 0.5))
                    .collect(),
            )
        };
        let a = mk(&mut rng, "A");
        let b = mk(&mut rng, "B");
        let m = cross_correlation_matrix(&[a, b], AlignMode::PairwiseIntersection)
            .unwrap()
            .matrix;
        assert!(m.get(0, 1).abs() < 0.05, "corr {}", m.get(0, 1));
    }

    #[test]
    fn zero_variance_series_yields_sentinel() {
        let date0 = chrono::NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
        let flat = ReturnSeries::new(
            "FLAT",
            (0..50).map(|i| (date0 + chrono::Days::new(i), 0.0)).collect(),
        );
        let wiggly = ReturnSeries::new(
            "W",
            (0..50)
                .map(|i| (date0 + chrono::Days::new(i), (i as f64).sin()))
                .collect(),
        );
        let m = cross_correlation_matrix(&[flat, wiggly], AlignMode::PairwiseIntersection)
            .unwrap()
            .matrix;
        assert!(m.get(0, 1).is_nan());
        assert_eq!(m.get(0, 0), 1.0);
    }

    #[test]
    fn matrix_csv_round_trips() {
        let mut m = NamedMatrix::filled(vec!["A".into(), "B".into(), "C".into()], f64::NAN);
        m.set(0, 1, 0.1);
        m.set(0, 2, 1.0 / 3.0);
        m.set(1, 0, 1.5849625007211562);
        m.set(2, 1, 0.0);
        let csv = String::from_utf8(m.write_csv(Vec::new()).unwrap()).unwrap();
        assert!(csv.starts_with(",A,B,C\nA,NA,0.1,"));
        let back = NamedMatrix::read_csv(csv.as_bytes(), std::path::Path::new("mem")).unwrap();
        assert_eq!(back.symbols(), m.symbols());
        for r in 0..3 {
            for c in 0..3 {
                let (a, b) = (m.get(r, c), back.get(r, c));
                assert!(a == b || (a.is_nan() && b.is_nan()), "cell {r},{c}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn source_lag_shifts_detection() {
        // follower copies the driver two steps back; lag=1 realigns it so
        // that the standard k=l=1 estimator sees the dependence
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 20_000;
        let driver = uniform_ternary(&mut rng, n);
        let mut follower = vec![0u8; n];
        for t in 2..n {
            follower[t] = driver[t - 2];
        }
        let no_lag = lagged_te(&follower, &driver, cfg(1, 1), 0).unwrap().0;
        let lagged = lagged_te(&follower, &driver, cfg(1, 1), 1).unwrap().0;
        assert!(no_lag < 0.01, "unlagged TE {no_lag}");
        assert!(lagged > 1.0, "lagged TE {lagged}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn direct_matches_decomposed(target in proptest::collection::vec(0u8..3, 12..200),
                                     source_seed in 0u64..1000, k in 1usize..3, l in 1usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(source_seed);
            let source: Vec<u8> = (0..target.len()).map(|_| rng.random_range(0..3u8)).collect();
            let counts = count_joint_states(&target, &source, 3, 3, cfg(k, l)).unwrap();
            let direct = transfer_entropy_direct(&counts).unwrap();
            let decomposed = transfer_entropy_decomposed(&counts).unwrap();
            prop_assert!((direct - decomposed).abs() < 1e-12);
            prop_assert!(decomposed >= 0.0);
        }

        #[test]
        fn relabeling_alphabet_preserves_te(target in proptest::collection::vec(0u8..3, 12..200),
                                            source_seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(source_seed);
            let source: Vec<u8> = (0..target.len()).map(|_| rng.random_range(0..3u8)).collect();
            let permutation = [2u8, 0u8, 1u8];
            let relabel = |v: &[u8]| v.iter().map(|&s| permutation[s as usize]).collect::<Vec<_>>();
            let base = transfer_entropy_decomposed(
                &count_joint_states(&target, &source, 3, 3, cfg(1, 1)).unwrap()).unwrap();
            let relabeled = transfer_entropy_decomposed(
                &count_joint_states(&relabel(&target), &relabel(&source), 3, 3, cfg(1, 1)).unwrap()).unwrap();
            prop_assert!((base - relabeled).abs() < 1e-12);
        }
    }
}
