//! The divide-and-conquer smoother: leaf initialization, block combination
//! and the level-synchronous run over a padded binary tree.

mod block;
mod schedule;

use alloc::vec::Vec;

pub use block::{estimate, BlockEstimate, LeafEstimate};
pub use schedule::{build_schedule, CombineSchedule, PairSlot, Span};

use crate::error::{Error, NodeSpan, Result};
use crate::math::{ln, max, normalize_log_weights};
use crate::model::{log_init_weight, log_target_ratio, FeynmanKac};
use crate::resampling::{PairSample, PairWeights, Resampler};
use crate::rng::{Role, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SmootherConfig {
    pub n_particles: usize,
    pub resampler: Resampler,
    pub seed: u64,
}

impl SmootherConfig {
    pub fn new(n_particles: usize, resampler: Resampler, seed: u64) -> Self {
        SmootherConfig { n_particles, resampler, seed }
    }
}

/// Bookkeeping returned alongside the smoothed block.
#[derive(Debug, Clone, PartialEq)]
pub struct RunInfo {
    /// Tree levels executed, `ceil(log2(T + 1))`.
    pub levels: usize,
    pub combines: usize,
    /// Pair-weight evaluations over all combines.
    pub weight_evals: u64,
    /// Size of the largest weight buffer any combine allocated.
    pub peak_weight_buffer: usize,
    /// True when a Metropolis-Hastings lazy resampler was used.
    pub biased: bool,
    /// Estimate of `ln L_T`; unavailable with lazy resampling.
    pub log_norm_const: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingRun {
    pub block: BlockEstimate,
    pub info: RunInfo,
}

/// Statistics of a single combine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombineStats {
    pub evaluations: u64,
    pub weight_buffer: usize,
    pub biased: bool,
}

pub(crate) fn leaf_key(seed: u64, t: usize) -> StreamKey {
    StreamKey::new(seed, 0, t as u64, Role::LeafProposal)
}

pub(crate) fn node_key(seed: u64, level: usize, node: usize) -> StreamKey {
    StreamKey::new(seed, level as u32 + 1, node as u64, Role::PairResample)
}

/// Weights and normalizing-constant contribution for a set of particles
/// drawn at time `t`.
pub(crate) fn weigh_leaf<M: FeynmanKac + ?Sized>(
    model: &M,
    t: usize,
    n_particles: usize,
    particles: Vec<f64>,
) -> Result<LeafEstimate> {
    let d = model.state_dim();
    let mut log_weights = Vec::with_capacity(n_particles);
    for x in particles.chunks_exact(d) {
        log_weights.push(log_init_weight(model, t, x)?);
    }
    let total = normalize_log_weights(&mut log_weights);
    if total == f64::NEG_INFINITY {
        return Err(Error::DegenerateLeaf { t });
    }
    Ok(LeafEstimate {
        t,
        n_particles,
        state_dim: d,
        particles,
        log_weights,
        log_norm_const: total - ln(n_particles as f64),
    })
}

/// Draws `N` particles from `q_t` for every `t` and weights them.
pub fn init_leaves<M: FeynmanKac + ?Sized>(model: &M, n_particles: usize, seed: u64) -> Result<Vec<LeafEstimate>> {
    if n_particles == 0 {
        return Err(Error::Configuration("at least one particle is required".into()));
    }
    let leaf = |t: usize| {
        let mut stream = leaf_key(seed, t).stream();
        let particles = model.sample_proposals(t, n_particles, &mut stream);
        weigh_leaf(model, t, n_particles, particles)
    };
    par_map_indices(model.horizon() + 1, leaf)
}

/// The product-form weight matrix of two adjacent blocks.
struct StitchWeights<'a, M: ?Sized> {
    model: &'a M,
    c: usize,
    n: usize,
    dim: usize,
    left_last: &'a [f64],
    right_first: &'a [f64],
    left_log_w: &'a BlockEstimate,
    /// `log h_c(x^j) - log ν_c(x^j) + log W^j_c`.
    right_terms: Vec<f64>,
    log_bound: Option<f64>,
}

impl<'a, M: FeynmanKac + ?Sized> StitchWeights<'a, M> {
    fn new(model: &'a M, left: &'a BlockEstimate, right: &'a BlockEstimate) -> Result<Self> {
        let c = right.start;
        let n = right.n_particles;
        let dim = right.state_dim;
        let right_first = right.time_slice(c);
        let mut right_terms = Vec::with_capacity(n);
        for (j, x) in right_first.chunks_exact(dim).enumerate() {
            right_terms.push(log_target_ratio(model, c, x)? + right.log_weight(j));
        }
        let left_max = match &left.log_weights {
            Some(w) => max(w),
            None => left.log_weight(0),
        };
        let right_max = match &right.log_weights {
            Some(w) => max(w),
            None => right.log_weight(0),
        };
        let log_bound = model.log_stitch_bound(c).map(|b| b + left_max + right_max);
        Ok(StitchWeights {
            model,
            c,
            n,
            dim,
            left_last: left.time_slice(c - 1),
            right_first,
            left_log_w: left,
            right_terms,
            log_bound,
        })
    }
}

impl<M: FeynmanKac + ?Sized> PairWeights for StitchWeights<'_, M> {
    fn size(&self) -> usize {
        self.n
    }

    fn log_weight(&self, i: usize, j: usize) -> Result<f64> {
        let d = self.dim;
        let rt = self.right_terms[j];
        if rt == f64::NEG_INFINITY {
            return Ok(rt);
        }
        let x_prev = &self.left_last[i * d..(i + 1) * d];
        let x = &self.right_first[j * d..(j + 1) * d];
        Ok(self.model.log_transition_density(self.c, x_prev, x) + rt + self.left_log_w.log_weight(i))
    }

    fn fill_row(&self, i: usize, row: &mut [f64]) -> Result<()> {
        let d = self.dim;
        let x_prev = &self.left_last[i * d..(i + 1) * d];
        self.model.log_transition_row(self.c, x_prev, self.right_first, row);
        let lw = self.left_log_w.log_weight(i);
        for (r, &rt) in row.iter_mut().zip(&self.right_terms) {
            *r = if rt == f64::NEG_INFINITY { rt } else { *r + rt + lw };
        }
        Ok(())
    }

    fn log_upper_bound(&self) -> Option<f64> {
        self.log_bound
    }

    fn log_separable_envelope(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let sup = self.model.log_transition_sup(self.c)?;
        let row = (0..self.n).map(|i| self.left_log_w.log_weight(i)).collect();
        let col = self.right_terms.iter().map(|rt| rt + sup).collect();
        Some((row, col))
    }
}

fn check_adjacent(left: &BlockEstimate, right: &BlockEstimate) -> Result<()> {
    if left.end + 1 != right.start {
        return Err(Error::SpanMismatch { left_end: left.end, right_start: right.start });
    }
    if left.n_particles != right.n_particles || left.state_dim != right.state_dim {
        return Err(Error::InvalidInput("blocks differ in particle count or state dimension".into()));
    }
    Ok(())
}

/// Concatenates `[left^{l_n}, right^{r_n}]` for every output slot.
fn gather(left: &BlockEstimate, right: &BlockEstimate, pairs: &PairSample) -> Vec<f64> {
    let d = left.state_dim;
    let n_out = pairs.len();
    let mut states = Vec::with_capacity((left.len() + right.len()) * n_out * d);
    for t in left.start..=left.end {
        let slice = left.time_slice(t);
        for &l in &pairs.left {
            states.extend_from_slice(&slice[l * d..(l + 1) * d]);
        }
    }
    for t in right.start..=right.end {
        let slice = right.time_slice(t);
        for &r in &pairs.right {
            states.extend_from_slice(&slice[r * d..(r + 1) * d]);
        }
    }
    states
}

fn combine_impl<M: FeynmanKac + ?Sized>(
    left: &BlockEstimate,
    right: &BlockEstimate,
    model: &M,
    resampler: Resampler,
    key: StreamKey,
    conditional: bool,
) -> Result<(BlockEstimate, CombineStats)> {
    check_adjacent(left, right)?;
    let node = NodeSpan { a: left.start, c: right.start, b: right.end };
    let n = left.n_particles;
    let source = StitchWeights::new(model, left, right)?;
    let mut pairs = if conditional {
        if n < 2 {
            return Err(Error::Configuration("the conditional smoother needs at least two particles".into()));
        }
        let mut p = resampler.sample(&source, n - 1, key).map_err(|e| e.at_node(node))?;
        p.left.insert(0, 0);
        p.right.insert(0, 0);
        p
    } else {
        resampler.sample(&source, n, key).map_err(|e| e.at_node(node))?
    };
    let increment = pairs.log_mean_weight.take();
    let log_norm_const = match (left.log_norm_const, right.log_norm_const, increment) {
        (Some(l), Some(r), Some(inc)) => Some(l + r + inc),
        _ => None,
    };
    let stats = CombineStats {
        evaluations: pairs.evaluations,
        weight_buffer: if resampler.is_dense() { n * n } else { 0 },
        biased: pairs.biased,
    };
    let states = gather(left, right, &pairs);
    Ok((
        BlockEstimate {
            start: left.start,
            end: right.end,
            n_particles: n,
            state_dim: left.state_dim,
            states,
            log_weights: None,
            log_norm_const,
        },
        stats,
    ))
}

/// Stitches `left = [a, c-1]` and `right = [c, b]` into `N` equally weighted
/// segments over `[a, b]` by resampling pairs from the product-form weights
/// `W^i_{c-1} W^j_c ω_c(x^i_{c-1}, x^j_c)`.
pub fn combine<M: FeynmanKac + ?Sized>(
    left: &BlockEstimate,
    right: &BlockEstimate,
    model: &M,
    resampler: Resampler,
    key: StreamKey,
) -> Result<(BlockEstimate, CombineStats)> {
    combine_impl(left, right, model, resampler, key, false)
}

/// Conditional combination: slot 0 of the output is the concatenation of
/// both slot-0 segments, slots `1..N` are `N - 1` independent pair draws
/// from the full weight matrix. Only exact i.i.d. resamplers are accepted.
pub fn conditional_combine<M: FeynmanKac + ?Sized>(
    left: &BlockEstimate,
    right: &BlockEstimate,
    model: &M,
    resampler: Resampler,
    key: StreamKey,
) -> Result<(BlockEstimate, CombineStats)> {
    if !resampler.is_exact_iid() {
        return Err(Error::Configuration(alloc::format!(
            "the conditional smoother needs multinomial or rejection resampling, got {}",
            resampler.name()
        )));
    }
    combine_impl(left, right, model, resampler, key, true)
}

/// Runs the schedule level by level over the given leaves.
pub(crate) fn run_tree<M: FeynmanKac + ?Sized>(
    model: &M,
    leaves: Vec<LeafEstimate>,
    resampler: Resampler,
    seed: u64,
    conditional: bool,
) -> Result<SmoothingRun> {
    let schedule = build_schedule(model.horizon());
    let mut blocks: Vec<BlockEstimate> = leaves.into_iter().map(BlockEstimate::from).collect();
    let mut info = RunInfo {
        levels: schedule.depth(),
        combines: 0,
        weight_evals: 0,
        peak_weight_buffer: 0,
        biased: false,
        log_norm_const: None,
    };
    for (level, slots) in schedule.levels.iter().enumerate() {
        let mut queue = blocks.into_iter();
        let mut work: Vec<(PairSlot, BlockEstimate, Option<BlockEstimate>)> = Vec::with_capacity(slots.len());
        for slot in slots {
            let left = queue.next().expect("schedule and blocks agree");
            let right = if slot.active { queue.next() } else { None };
            work.push((*slot, left, right));
        }
        let results = par_map_owned(work, |(slot, left, right)| match right {
            Some(right) => {
                let key = node_key(seed, level, slot.node);
                let (b, stats) = combine_impl(&left, &right, model, resampler, key, conditional)?;
                Ok((b, Some(stats)))
            }
            None => Ok((left, None)),
        })?;
        blocks = Vec::with_capacity(results.len());
        for (b, stats) in results {
            if let Some(s) = stats {
                info.combines += 1;
                info.weight_evals += s.evaluations;
                info.peak_weight_buffer = info.peak_weight_buffer.max(s.weight_buffer);
                info.biased |= s.biased;
            }
            blocks.push(b);
        }
    }
    debug_assert_eq!(blocks.len(), 1);
    let block = blocks.pop().ok_or_else(|| Error::InvalidInput("empty model".into()))?;
    info.log_norm_const = block.log_norm_const;
    Ok(SmoothingRun { block, info })
}

/// Full smoother: leaf initialization followed by the combination tree.
/// The output block holds `N` equally weighted trajectories over `[0, T]`
/// (for `T = 0`, the weighted leaf itself).
pub fn run_dsmc<M: FeynmanKac + ?Sized>(model: &M, config: &SmootherConfig) -> Result<SmoothingRun> {
    let leaves = init_leaves(model, config.n_particles, config.seed)?;
    run_tree(model, leaves, config.resampler, config.seed, false)
}

#[cfg(feature = "parallel")]
pub(crate) fn par_map_indices<T: Send, F: Fn(usize) -> Result<T> + Sync + Send>(count: usize, f: F) -> Result<Vec<T>> {
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map_indices<T, F: Fn(usize) -> Result<T>>(count: usize, f: F) -> Result<Vec<T>> {
    (0..count).map(f).collect()
}

#[cfg(feature = "parallel")]
fn par_map_owned<I: Send, T: Send, F: Fn(I) -> Result<T> + Sync + Send>(items: Vec<I>, f: F) -> Result<Vec<T>> {
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map_owned<I, T, F: Fn(I) -> Result<T>>(items: Vec<I>, f: F) -> Result<Vec<T>> {
    items.into_iter().map(f).collect()
}

