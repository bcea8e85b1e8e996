use alloc::vec::Vec;

/// Particles for a single time step after the initialization step.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafEstimate {
    pub t: usize,
    pub n_particles: usize,
    pub state_dim: usize,
    /// Row-major `N × d`.
    pub particles: Vec<f64>,
    /// Normalized: they log-sum-exp to zero.
    pub log_weights: Vec<f64>,
    /// `ln((1/N) Σ_n w^n_t)` from the unnormalized weights.
    pub log_norm_const: f64,
}

impl LeafEstimate {
    pub fn particle(&self, n: usize) -> &[f64] {
        &self.particles[n * self.state_dim..(n + 1) * self.state_dim]
    }
}

/// `N` trajectory segments over the interval `[start, end]`.
///
/// States are stored time-major, `(end - start + 1) × N × d`. After any
/// combination the segments are equally weighted and `log_weights` is
/// `None`; single-leaf blocks keep their normalized leaf weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockEstimate {
    pub start: usize,
    pub end: usize,
    pub n_particles: usize,
    pub state_dim: usize,
    pub states: Vec<f64>,
    pub log_weights: Option<Vec<f64>>,
    /// Estimate of `ln L_{start:end}`; `None` once a lazy resampler was used.
    pub log_norm_const: Option<f64>,
}

impl From<LeafEstimate> for BlockEstimate {
    fn from(leaf: LeafEstimate) -> Self {
        BlockEstimate {
            start: leaf.t,
            end: leaf.t,
            n_particles: leaf.n_particles,
            state_dim: leaf.state_dim,
            states: leaf.particles,
            log_weights: Some(leaf.log_weights),
            log_norm_const: Some(leaf.log_norm_const),
        }
    }
}

impl BlockEstimate {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// All `N` particles at absolute time `t`, row-major `N × d`.
    pub fn time_slice(&self, t: usize) -> &[f64] {
        let stride = self.n_particles * self.state_dim;
        let k = t - self.start;
        &self.states[k * stride..(k + 1) * stride]
    }

    /// State of segment `n` at absolute time `t`.
    pub fn state(&self, t: usize, n: usize) -> &[f64] {
        let d = self.state_dim;
        &self.time_slice(t)[n * d..(n + 1) * d]
    }

    /// Normalized log weight of segment `n`.
    pub fn log_weight(&self, n: usize) -> f64 {
        match &self.log_weights {
            Some(w) => w[n],
            None => -crate::math::ln(self.n_particles as f64),
        }
    }

    /// Copies segment `n` into `out` as a `len × d` row-major trajectory.
    pub fn trajectory_into(&self, n: usize, out: &mut Vec<f64>) {
        out.clear();
        for t in self.start..=self.end {
            out.extend_from_slice(self.state(t, n));
        }
    }

    pub fn trajectory(&self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * self.state_dim);
        self.trajectory_into(n, &mut out);
        out
    }
}

/// Monte Carlo estimate `Σ_n W^n φ(x^n_{start:end})` of a trajectory
/// functional; with equal weights this is `(1/N) Σ_n φ(x^n)`. `φ` receives a
/// `len × d` row-major trajectory.
pub fn estimate<F: FnMut(&[f64]) -> f64>(block: &BlockEstimate, mut test_function: F) -> f64 {
    let mut buf = Vec::with_capacity(block.len() * block.state_dim);
    let mut acc = 0.0;
    match &block.log_weights {
        Some(w) => {
            for (n, &lw) in w.iter().enumerate() {
                block.trajectory_into(n, &mut buf);
                acc += crate::math::exp(lw) * test_function(&buf);
            }
            acc
        }
        None => {
            for n in 0..block.n_particles {
                block.trajectory_into(n, &mut buf);
                acc += test_function(&buf);
            }
            acc / block.n_particles as f64
        }
    }
}
