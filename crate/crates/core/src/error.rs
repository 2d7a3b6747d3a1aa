//! Crate-wide error type.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("graph contains a directed cycle")]
    Cycle,
    #[error("self-loop on node `{0}`")]
    SelfLoop(String),
    #[error("duplicate edge `{0} -> {1}`")]
    DuplicateEdge(String, String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("model invariant violated: {0}")]
    ModelInvariant(String),
    #[error("covariate `{0}` is a descendant of the treatment or outcome")]
    AssumptionViolated(String),
    #[error("design matrix is rank deficient; collinear columns: {}", .columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("degenerate variance in `{0}`")]
    DegenerateVariance(String),
    #[error("sparsity budget k={k} exceeds covariate count p={p}")]
    SparsityBudget { k: usize, p: usize },
    #[error("problem size p={p} exceeds the exhaustive-search cap {cap}")]
    ExhaustiveCap { p: usize, cap: usize },
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("step constant L={l_given} is below the spectral bound l={l_min}")]
    StepConstant { l_given: f64, l_min: f64 },
    #[error("selection aborted at k={k}: {source}")]
    SelectionAborted {
        k: usize,
        trace: Vec<crate::cmio::KStep>,
        #[source]
        source: Box<Error>,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid case id {0}; known cases are 1, 2, 3")]
    InvalidCase(usize),
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("method `{0}` requires a ground-truth model")]
    TruthRequired(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
