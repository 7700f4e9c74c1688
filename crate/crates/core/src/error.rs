use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("singular metric (|det| = {det:e})")]
    SingularMetric { det: f64 },

    #[error("singular linear map (|det| = {det:e})")]
    SingularMap { det: f64 },

    #[error("slot {slot} out of range for a tensor of rank {rank}")]
    SlotOutOfRange { slot: usize, rank: usize },

    #[error("cannot contract slot {0} with itself")]
    RepeatedSlot(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("rank mismatch: expected {expected}, found {found}")]
    RankMismatch { expected: usize, found: usize },

    #[error("slot {0} is contravariant; pullback needs an all-covariant tensor")]
    ContravariantSlot(usize),

    #[error("derivative order {0} exceeds the supported depth of 4")]
    DerivativeOrder(usize),

    #[error("bilinear form is not symmetric (entry ({i},{j}) differs from ({j},{i}))")]
    Asymmetric { i: usize, j: usize },

    #[error("Hessian is singular (|det| = {det:e})")]
    SingularHessian { det: f64 },

    #[error("Hessian is not positive definite at the requested point")]
    HessianNotPositive,

    #[error("psi'' = {0} must be positive")]
    PsiSecondNotPositive(f64),

    #[error("psi''' vanishes; the 1-model normalization is undefined")]
    PsiThirdVanishes,

    #[error("degenerate plane (Gram determinant {det:e})")]
    DegeneratePlane { det: f64 },

    #[error("indefinite plane (Gram determinant {det:e})")]
    IndefinitePlane { det: f64 },

    #[error("pair is not orthonormal (deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("sampler hit its rejection cap of {cap} draws after accepting {accepted}")]
    RejectionCap { cap: usize, accepted: usize },

    #[error("quadrature did not converge within {max_intervals} intervals (last change {change:e})")]
    QuadratureNonConvergence { max_intervals: usize, change: f64 },

    #[error("triangular order violated: {0}")]
    TriangularOrder(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("profile cannot be serialized: {0}")]
    NotSerializable(String),
}
