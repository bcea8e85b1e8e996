use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Tree node a combine operates on: left block `[a, c-1]`, right block `[c, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeSpan {
    pub a: usize,
    pub c: usize,
    pub b: usize,
}

impl core::fmt::Display for NodeSpan {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "(a={}, c={}, b={})", self.a, self.c, self.b)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("auxiliary density vanishes where the transition density is positive at t={t}")]
    DominationViolation { t: usize },
    #[error("all leaf weights are zero at t={t}")]
    DegenerateLeaf { t: usize },
    #[error("all pair weights are zero{}", node.map(|n| alloc::format!(" at node {n}")).unwrap_or_default())]
    DegenerateWeights { node: Option<NodeSpan> },
    #[error("all particle weights are zero at t={t}")]
    DegenerateFilter { t: usize },
    #[error("pair weight {value} exceeds the declared upper bound {bound}")]
    BoundViolation { value: f64, bound: f64 },
    #[error("rejection sampler exceeded {0} proposals for a single slot")]
    RejectionBudget(u64),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("block spans do not abut: left ends at {left_end}, right starts at {right_start}")]
    SpanMismatch { left_end: usize, right_start: usize },
    #[error("reference trajectory has zero proposal density at t={t}")]
    InvalidReference { t: usize },
    #[error("non-finite Jacobian while linearizing at t={t}")]
    Linearization { t: usize },
    #[error("iterated smoother diverged at iteration {iteration}")]
    Divergence { iteration: usize },
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("parameter update failed: {0}")]
    ParameterUpdate(String),
}

impl Error {
    pub(crate) fn at_node(self, node: NodeSpan) -> Self {
        match self {
            Error::DegenerateWeights { node: None } => Error::DegenerateWeights { node: Some(node) },
            other => other,
        }
    }
}
