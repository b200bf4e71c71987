use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("tolerance not met for {what}: discrepancy {delta:.3e} exceeds {tol:.3e}")]
    ToleranceNotMet { what: String, delta: f64, tol: f64 },
    #[error("rank deficiency in radial family l = {l} at n = {n}")]
    RankDeficiency { l: usize, n: usize },
    #[error("ill-conditioned basis: Gram deviates from identity by {deviation:.3e}")]
    IllConditionedBasis { deviation: f64 },
    #[error("nonpositive constant {name} = {value}")]
    NonpositiveConstant { name: String, value: f64 },
    #[error("assembly tolerance exceeded: seed discrepancy {delta:.3e} > {tol:.3e}")]
    AssemblyTolerance { delta: f64, tol: f64 },
    #[error("gap collapse: {count} eigenvalues in the near-zero cluster")]
    GapCollapse { count: usize },
    #[error("branch-crossing ambiguity at k = {k}: best overlap {overlap:.3}")]
    BranchAmbiguity { k: f64, overlap: f64 },
    #[error("cluster miscount at k = {k}: {count} eigenvalues above the threshold")]
    ClusterMiscount { k: f64, count: usize },
    #[error("deflated solve failed: {0}")]
    DeflatedSolve(String),
    #[error("singular resolvent solve at beta = {re} + {im}i")]
    SingularSolve { re: f64, im: f64 },
    #[error("newton divergence at s = {s}")]
    NewtonDivergence { s: f64 },
    #[error("root collision at s = {s}")]
    RootCollision { s: f64 },
    #[error("order check failed for branch {branch}: fitted order {order:.3}")]
    OrderCheck { branch: i32, order: f64 },
    #[error("defective branch {branch} at k = {k}")]
    DefectiveBranch { branch: i32, k: f64 },
    #[error("nonpositive norm in rate fit at t = {t}")]
    NonpositiveNorm { t: f64 },
    #[error("slope fit unstable: confidence half-width {ci:.3e}")]
    SlopeFitUnstable { ci: f64 },
    #[error("eigen decomposition failed: {0}")]
    Eigen(String),
    #[error("container format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
