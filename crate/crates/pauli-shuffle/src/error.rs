use thiserror::Error;

/// Errors produced by circuit construction, channel building, sampling and
/// the stabilizer-polytope analysis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit count mismatch: {0} vs {1}")]
    QubitMismatch(usize, usize),

    #[error("qubit index {index} out of range for a {width}-qubit register")]
    QubitIndex { index: usize, width: usize },

    #[error("duplicate qubit index {0} in target list")]
    DuplicateQubit(usize),

    #[error("operator is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("expected a {expected} matrix, got {rows}x{cols}")]
    Shape {
        expected: String,
        rows: usize,
        cols: usize,
    },

    #[error("parameter {name} = {value} outside {range}")]
    Parameter {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("Kraus operators violate completeness (residual {0:.3e})")]
    KrausCompleteness(f64),

    #[error("{what} width {width} exceeds the {cap}-qubit cap")]
    WidthCap {
        what: &'static str,
        width: usize,
        cap: usize,
    },

    #[error("Bloch vector has no nonzero coefficient")]
    ZeroBloch,

    #[error("not a valid density operator: {0}")]
    NotDensity(String),

    #[error("linear program failed: {0}")]
    Solver(String),

    #[error("invalid circuit: {0}")]
    Validation(String),

    #[error("circuit file: {0}")]
    Parse(String),

    #[error("sampling budget: {0}")]
    Budget(String),

    #[error("observable kind not supported in {0} mode: {1}")]
    Observable(&'static str, String),
}

pub type Result<T> = std::result::Result<T, Error>;
