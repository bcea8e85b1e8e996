//! Sampling index pairs `(l_n, r_n)` from an `N × N` matrix of unnormalized
//! log weights.
//!
//! Dense variants (multinomial, systematic) materialize the whole matrix in
//! a single `N²` buffer and also return the log of its total mass. Lazy
//! variants (Metropolis-Hastings, rejection) only evaluate the entries they
//! propose and keep memory linear in `N`; they cannot report the total.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{exp, ln, max, pairwise_sum};
use crate::rng::{Stream, StreamKey};

/// Per-slot proposal budget of the rejection sampler.
pub const REJECTION_BUDGET: u64 = 100_000_000;

/// Source of the unnormalized log weights `log W^{ij}`.
pub trait PairWeights: Sync {
    /// `N`: the matrix is `N × N`.
    fn size(&self) -> usize;

    fn log_weight(&self, i: usize, j: usize) -> Result<f64>;

    /// Fills `row[j] = log_weight(i, j)` for all `j`.
    fn fill_row(&self, i: usize, row: &mut [f64]) -> Result<()> {
        for (j, r) in row.iter_mut().enumerate() {
            *r = self.log_weight(i, j)?;
        }
        Ok(())
    }

    /// An upper bound on every `log_weight(i, j)`, when one is known.
    fn log_upper_bound(&self) -> Option<f64> {
        None
    }

    /// Factors `(a, b)` with `log_weight(i, j) <= a[i] + b[j]` for every
    /// pair, when known. Preferred by the rejection sampler over the
    /// constant bound.
    fn log_separable_envelope(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }
}

/// A fully materialized weight matrix, row-major.
#[derive(Debug, Clone)]
pub struct MatrixWeights {
    pub n: usize,
    pub log_weights: Vec<f64>,
    pub log_upper_bound: Option<f64>,
}

impl MatrixWeights {
    pub fn new(n: usize, log_weights: Vec<f64>) -> Self {
        assert_eq!(log_weights.len(), n * n);
        MatrixWeights { n, log_weights, log_upper_bound: None }
    }

    /// Attaches the tightest bound, the maximum entry.
    pub fn with_exact_bound(mut self) -> Self {
        self.log_upper_bound = Some(max(&self.log_weights));
        self
    }
}

impl PairWeights for MatrixWeights {
    fn size(&self) -> usize {
        self.n
    }

    fn log_weight(&self, i: usize, j: usize) -> Result<f64> {
        Ok(self.log_weights[i * self.n + j])
    }

    fn fill_row(&self, i: usize, row: &mut [f64]) -> Result<()> {
        row.copy_from_slice(&self.log_weights[i * self.n..(i + 1) * self.n]);
        Ok(())
    }

    fn log_upper_bound(&self) -> Option<f64> {
        self.log_upper_bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    /// `ln Σ_{i,j} exp(log_weight(i, j))`; dense variants only.
    pub log_mean_weight: Option<f64>,
    /// Number of `log_weight` evaluations performed.
    pub evaluations: u64,
    /// Set by the Metropolis-Hastings variant, whose output is only
    /// approximately distributed according to the weights.
    pub biased: bool,
}

impl PairSample {
    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case", tag = "kind"))]
pub enum Resampler {
    Multinomial,
    Systematic,
    MhLazy { steps: usize },
    RejectionLazy,
}

impl Resampler {
    pub fn sample<W: PairWeights + ?Sized>(&self, source: &W, n_out: usize, key: StreamKey) -> Result<PairSample> {
        match *self {
            Resampler::Multinomial => multinomial_pairs(source, n_out, key),
            Resampler::Systematic => systematic_pairs(source, n_out, key),
            Resampler::MhLazy { steps } => mh_lazy_pairs(source, n_out, steps, key),
            Resampler::RejectionLazy => rejection_lazy_pairs(source, n_out, key),
        }
    }

    /// Whether the variant touches every matrix entry (and so can report the
    /// normalizing-constant increment).
    pub fn is_dense(&self) -> bool {
        matches!(self, Resampler::Multinomial | Resampler::Systematic)
    }

    /// Whether the output is exactly distributed according to the weights
    /// with independent draws, as the conditional smoother requires.
    pub fn is_exact_iid(&self) -> bool {
        matches!(self, Resampler::Multinomial | Resampler::RejectionLazy)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Resampler::Multinomial => "multinomial",
            Resampler::Systematic => "systematic",
            Resampler::MhLazy { .. } => "mh-lazy",
            Resampler::RejectionLazy => "rejection-lazy",
        }
    }
}

/// Dense weights after exponentiation, shifted row by row:
/// `mass[i * n + j] = exp(log_w[i][j] - shift_i)` and
/// `row_mass[i] = exp(shift_i - max_k shift_k) · Σ_j mass[i * n + j]`.
struct DenseMass {
    n: usize,
    mass: Vec<f64>,
    row_sum: Vec<f64>,
    row_mass: Vec<f64>,
    total: f64,
    log_total: f64,
}

fn exp_shifted_in_place(row: &mut [f64]) -> Result<(f64, f64)> {
    let shift = max(row);
    if shift == f64::NEG_INFINITY {
        row.fill(0.0);
        return Ok((shift, 0.0));
    }
    if !shift.is_finite() {
        return Err(Error::Numerical(alloc::format!("pair weight {shift}")));
    }
    for w in row.iter_mut() {
        *w = exp(*w - shift);
    }
    let sum = pairwise_sum(row);
    if !sum.is_finite() {
        return Err(Error::Numerical("non-finite pair weight".into()));
    }
    Ok((shift, sum))
}

fn materialize<W: PairWeights + ?Sized>(source: &W) -> Result<DenseMass> {
    let n = source.size();
    if n == 0 {
        return Err(Error::DegenerateWeights { node: None });
    }
    let mut mass = vec![0.0; n * n];
    let mut shifts = Vec::with_capacity(n);
    let mut row_sum = Vec::with_capacity(n);
    for (i, row) in mass.chunks_exact_mut(n).enumerate() {
        source.fill_row(i, row)?;
        let (shift, sum) = exp_shifted_in_place(row)?;
        shifts.push(shift);
        row_sum.push(sum);
    }
    let global = max(&shifts);
    if global == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights { node: None });
    }
    let row_mass: Vec<f64> = shifts
        .iter()
        .zip(&row_sum)
        .map(|(&s, &m)| if m > 0.0 { exp(s - global) * m } else { 0.0 })
        .collect();
    let total = pairwise_sum(&row_mass);
    Ok(DenseMass { n, mass, row_sum, row_mass, total, log_total: global + ln(total) })
}

/// Walks sorted targets in `[0, total)` through the cumulative mass one
/// row at a time, emitting the flat index of the cell containing each
/// target. Never lands on a zero-mass cell.
struct RowScan<'a> {
    dense: &'a DenseMass,
    last_row: usize,
    row: usize,
    row_start: f64,
    row_end: f64,
    col: usize,
    col_end: f64,
    last_col: usize,
}

impl<'a> RowScan<'a> {
    fn new(dense: &'a DenseMass) -> Self {
        let last_row = dense.row_mass.iter().rposition(|&m| m > 0.0).unwrap_or(0);
        let mut scan = RowScan {
            dense,
            last_row,
            row: 0,
            row_start: 0.0,
            row_end: dense.row_mass[0],
            col: 0,
            col_end: 0.0,
            last_col: 0,
        };
        scan.enter_row();
        scan
    }

    fn row_cells(&self) -> &'a [f64] {
        let n = self.dense.n;
        &self.dense.mass[self.row * n..(self.row + 1) * n]
    }

    fn enter_row(&mut self) {
        let cells = self.row_cells();
        self.col = 0;
        self.col_end = cells[0];
        self.last_col = cells.iter().rposition(|&m| m > 0.0).unwrap_or(0);
    }

    fn advance_row(&mut self) {
        self.row += 1;
        self.row_start = self.row_end;
        self.row_end += self.dense.row_mass[self.row];
    }

    fn locate(&mut self, target: f64) -> usize {
        let start_row = self.row;
        while (target >= self.row_end || self.dense.row_mass[self.row] == 0.0) && self.row < self.last_row {
            self.advance_row();
        }
        if self.row != start_row {
            self.enter_row();
        }
        // Row-local coordinates: the row's cells sum to `row_sum`.
        let scale = self.dense.row_sum[self.row] / self.dense.row_mass[self.row];
        let local = (target - self.row_start) * scale;
        let cells = self.row_cells();
        while (local >= self.col_end || cells[self.col] == 0.0) && self.col < self.last_col {
            self.col += 1;
            self.col_end += cells[self.col];
        }
        self.row * self.dense.n + self.col
    }
}

/// Maps sorted targets in `[0, total)` onto indices by one scan over the
/// cumulative mass. `targets` must be nondecreasing.
fn scan_sorted(mass: &[f64], targets: impl Iterator<Item = f64>, mut emit: impl FnMut(usize)) {
    let last_positive = mass.iter().rposition(|&m| m > 0.0).unwrap_or(0);
    let mut k = 0;
    let mut cum_end = mass[0];
    for t in targets {
        while (t >= cum_end || mass[k] == 0.0) && k < last_positive {
            k += 1;
            cum_end += mass[k];
        }
        emit(k);
    }
}

fn vector_mass(log_w: &[f64]) -> Result<(Vec<f64>, f64)> {
    let shift = max(log_w);
    if log_w.is_empty() || shift == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights { node: None });
    }
    if !shift.is_finite() {
        return Err(Error::Numerical(alloc::format!("log weight {shift}")));
    }
    let mass: Vec<f64> = log_w.iter().map(|w| exp(w - shift)).collect();
    let total = pairwise_sum(&mass);
    Ok((mass, total))
}

/// `n_out` independent draws of indices with probabilities `∝ exp(log_w)`.
pub fn multinomial_indices(log_w: &[f64], n_out: usize, stream: &mut Stream) -> Result<Vec<usize>> {
    let (mass, total) = vector_mass(log_w)?;
    let targets: Vec<f64> = (0..n_out).map(|_| stream.uniform() * total).collect();
    let mut order: Vec<usize> = (0..n_out).collect();
    order.sort_unstable_by(|&a, &b| targets[a].total_cmp(&targets[b]));
    let mut out = vec![0; n_out];
    let mut slots = order.iter();
    scan_sorted(&mass, order.iter().map(|&s| targets[s]), |k| out[*slots.next().unwrap()] = k);
    Ok(out)
}

/// Systematic resampling of indices with probabilities `∝ exp(log_w)`.
pub fn systematic_indices(log_w: &[f64], n_out: usize, stream: &mut Stream) -> Result<Vec<usize>> {
    let (mass, total) = vector_mass(log_w)?;
    let offset = stream.uniform();
    let step = total / n_out as f64;
    let mut out = Vec::with_capacity(n_out);
    scan_sorted(&mass, (0..n_out).map(|k| (offset + k as f64) * step), |k| out.push(k));
    Ok(out)
}

/// `n_out` independent draws from the normalized weight matrix.
pub fn multinomial_pairs<W: PairWeights + ?Sized>(source: &W, n_out: usize, key: StreamKey) -> Result<PairSample> {
    let n = source.size();
    let dense = materialize(source)?;
    let mut stream = key.stream();
    let targets: Vec<f64> = (0..n_out).map(|_| stream.uniform() * dense.total).collect();
    let mut order: Vec<usize> = (0..n_out).collect();
    order.sort_unstable_by(|&a, &b| targets[a].total_cmp(&targets[b]));
    let mut left = vec![0; n_out];
    let mut right = vec![0; n_out];
    let mut scan = RowScan::new(&dense);
    for &slot in &order {
        let k = scan.locate(targets[slot]);
        left[slot] = k / n;
        right[slot] = k % n;
    }
    Ok(PairSample {
        left,
        right,
        log_mean_weight: Some(dense.log_total),
        evaluations: (n * n) as u64,
        biased: false,
    })
}

/// Systematic resampling over the flattened matrix: one uniform offset,
/// `n_out` equally spaced positions.
pub fn systematic_pairs<W: PairWeights + ?Sized>(source: &W, n_out: usize, key: StreamKey) -> Result<PairSample> {
    let n = source.size();
    let dense = materialize(source)?;
    let mut stream = key.stream();
    let offset = stream.uniform();
    let step = dense.total / n_out as f64;
    let mut left = Vec::with_capacity(n_out);
    let mut right = Vec::with_capacity(n_out);
    let mut scan = RowScan::new(&dense);
    for m in 0..n_out {
        let k = scan.locate((offset + m as f64) * step);
        left.push(k / n);
        right.push(k % n);
    }
    Ok(PairSample {
        left,
        right,
        log_mean_weight: Some(dense.log_total),
        evaluations: (n * n) as u64,
        biased: false,
    })
}

/// Independent `steps`-step Metropolis-Hastings chains, one per output slot,
/// started at `(m, m)` with uniform proposals over all pairs.
pub fn mh_lazy_pairs<W: PairWeights + ?Sized>(
    source: &W,
    n_out: usize,
    steps: usize,
    key: StreamKey,
) -> Result<PairSample> {
    let n = source.size();
    if n == 0 {
        return Err(Error::Configuration("empty weight matrix".into()));
    }
    let mut left = Vec::with_capacity(n_out);
    let mut right = Vec::with_capacity(n_out);
    let mut evaluations = 0u64;
    for m in 0..n_out {
        let mut stream = key.with_counter(m as u64).stream();
        let (mut i, mut j) = (m % n, m % n);
        if steps > 0 {
            let mut current = source.log_weight(i, j)?;
            evaluations += 1;
            for _ in 0..steps {
                let u = stream.uniform_pos();
                let (pi, pj) = (stream.index(n), stream.index(n));
                let proposed = source.log_weight(pi, pj)?;
                evaluations += 1;
                if current == f64::NEG_INFINITY || ln(u) < proposed - current {
                    i = pi;
                    j = pj;
                    current = proposed;
                }
            }
        }
        left.push(i);
        right.push(j);
    }
    Ok(PairSample { left, right, log_mean_weight: None, evaluations, biased: true })
}

/// Inverse-CDF sampler over a fixed vector of log weights.
struct Categorical {
    cumulative: Vec<f64>,
}

impl Categorical {
    fn from_log(log_w: &[f64]) -> Result<Self> {
        let shift = max(log_w);
        if !shift.is_finite() {
            return Err(Error::DegenerateWeights { node: None });
        }
        let mut acc = 0.0;
        let cumulative = log_w
            .iter()
            .map(|lw| {
                acc += exp(lw - shift);
                acc
            })
            .collect();
        Ok(Categorical { cumulative })
    }

    fn draw(&self, u: f64) -> usize {
        let total = self.cumulative[self.cumulative.len() - 1];
        let k = self.cumulative.partition_point(|c| *c <= u * total);
        k.min(self.cumulative.len() - 1)
    }
}

/// Proposal of the rejection sampler: `(i, j)` and the log envelope there.
enum Envelope {
    Constant(f64),
    Separable { row: Vec<f64>, col: Vec<f64>, rows: Categorical, cols: Categorical },
}

impl Envelope {
    fn of<W: PairWeights + ?Sized>(source: &W) -> Result<Self> {
        if let Some((row, col)) = source.log_separable_envelope() {
            if row.len() != source.size() || col.len() != source.size() || row.iter().chain(&col).any(|v| v.is_nan() || *v == f64::INFINITY) {
                return Err(Error::Configuration("separable envelope has the wrong size or non-finite entries".into()));
            }
            let rows = Categorical::from_log(&row)?;
            let cols = Categorical::from_log(&col)?;
            return Ok(Envelope::Separable { row, col, rows, cols });
        }
        let bound = source
            .log_upper_bound()
            .ok_or_else(|| Error::Configuration("rejection resampling needs an upper bound on the weights".into()))?;
        if !bound.is_finite() {
            return Err(Error::Configuration(alloc::format!("weight bound {bound} is not finite")));
        }
        Ok(Envelope::Constant(bound))
    }

    fn propose(&self, n: usize, stream: &mut Stream) -> (usize, usize, f64) {
        match self {
            Envelope::Constant(b) => (stream.index(n), stream.index(n), *b),
            Envelope::Separable { row, col, rows, cols } => {
                let i = rows.draw(stream.uniform());
                let j = cols.draw(stream.uniform());
                (i, j, row[i] + col[j])
            }
        }
    }
}

/// Exact rejection sampling. Each slot proposes pairs from the envelope
/// (uniform pairs under a constant bound, `∝ exp(a_i + b_j)` under a
/// separable one) until one is accepted with probability
/// `exp(log_weight - envelope)`. A fresh uniform is drawn for every proposal.
pub fn rejection_lazy_pairs<W: PairWeights + ?Sized>(source: &W, n_out: usize, key: StreamKey) -> Result<PairSample> {
    let n = source.size();
    if n == 0 {
        return Err(Error::Configuration("empty weight matrix".into()));
    }
    let envelope = Envelope::of(source)?;
    let mut left = Vec::with_capacity(n_out);
    let mut right = Vec::with_capacity(n_out);
    let mut evaluations = 0u64;
    for m in 0..n_out {
        let mut stream = key.with_counter(m as u64).stream();
        let mut tries = 0u64;
        loop {
            if tries == REJECTION_BUDGET {
                return Err(Error::RejectionBudget(REJECTION_BUDGET));
            }
            tries += 1;
            let (i, j, bound) = envelope.propose(n, &mut stream);
            let u = stream.uniform_pos();
            let lw = source.log_weight(i, j)?;
            evaluations += 1;
            if lw > bound + 1e-9 * (1.0 + bound.abs()) {
                return Err(Error::BoundViolation { value: lw, bound });
            }
            if ln(u) <= lw - bound {
                left.push(i);
                right.push(j);
                break;
            }
        }
    }
    Ok(PairSample { left, right, log_mean_weight: None, evaluations, biased: false })
}
