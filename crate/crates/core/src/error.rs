use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max |M - M†| = {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("state is not normalized (norm or trace = {value})")]
    NotNormalized { value: f64 },

    #[error("state is not a valid density matrix: {0}")]
    InvalidDensity(String),

    #[error("subspace not protected at first order (|P V P| = {norm:e})")]
    FirstOrderCoupling { norm: f64 },

    #[error("zero energy denominator between subspace energy {subspace_energy} and eigenvalue {energy}")]
    ZeroDenominator { subspace_energy: f64, energy: f64 },

    #[error("subspace is not an eigenspace of the unperturbed Hamiltonian (residual {residual:e})")]
    NotEigenspace { residual: f64 },

    #[error("basis is not orthonormal (max |<i|j> - δij| = {deviation:e})")]
    NonOrthonormal { deviation: f64 },

    #[error("state has weight {weight:e} outside the {subspace} subspace")]
    OutsideSubspace { weight: f64, subspace: &'static str },

    #[error("integrator failed to converge: {0}")]
    Convergence(String),

    #[error("time step too large: jump probability {probability:.3} per step at dt = {dt}; use a smaller dt")]
    StepTooLarge { probability: f64, dt: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
