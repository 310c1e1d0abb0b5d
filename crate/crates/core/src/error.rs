use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{builder}: parameter {param} = {value} out of range ({reason})")]
    BuilderParam {
        builder: String,
        param: String,
        value: usize,
        reason: String,
    },

    #[error("desk-scale limit: {simplices} simplices exceed {limit}")]
    DeskScaleLimit { simplices: usize, limit: usize },

    #[error("degenerate simplex {simplex} in degree {degree} (volume {volume:e})")]
    DegenerateSimplex {
        degree: usize,
        simplex: usize,
        volume: f64,
    },

    #[error("complex is not a closed oriented pseudomanifold: {0}")]
    NotManifold(String),

    #[error("not a cocycle (coboundary residual {0})")]
    NotCocycle(f64),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("operator is not symmetric in the mass inner product (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("rank ambiguous: singular value gap ratio {gap_ratio:.3} below {required}; profile {profile:?}")]
    RankAmbiguous {
        gap_ratio: f64,
        required: f64,
        profile: Vec<f64>,
    },

    #[error("tolerance splits a cluster (gap ratio {0:.3})")]
    ClusterSplit(f64),

    #[error("resolvent pole: z = {z} is within {distance:e} of eigenvalue {eigenvalue}")]
    ResolventPole {
        z: String,
        eigenvalue: String,
        distance: f64,
    },

    #[error("invalid decay certificate: {0}")]
    DecayCertificate(String),

    #[error("invalid contour: {0}")]
    Contour(String),

    #[error("tau requires even dimension (got {0})")]
    TauOddDimension(usize),

    #[error("signature requires dim divisible by four (got {0})")]
    SignatureDimension(usize),

    #[error("degenerate intersection form: eigenvalue {eigenvalue:e} vs norm {norm:e}")]
    DegenerateForm { eigenvalue: f64, norm: f64 },

    #[error("integer overflow during exact elimination")]
    IntegerOverflow,

    #[error("window too small: {0} points (need at least {1})")]
    WindowTooSmall(usize, usize),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
