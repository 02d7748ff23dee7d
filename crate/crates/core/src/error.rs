use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("danger-zone radius {rc} does not fit inside the grid half-extent {half_extent}")]
    DangerZoneTooLarge { rc: f64, half_extent: f64 },

    #[error("time step {dt} violates the CFL bound {bound}")]
    Cfl { dt: f64, bound: f64 },

    #[error("level-set iteration diverged after {sweeps} sweeps (pseudo-time {time:.3} s, residual {residual:.3e})")]
    Divergence {
        sweeps: usize,
        time: f64,
        residual: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training data contains a single class (label {0})")]
    SingleClass(u8),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("simulation produced a non-finite state at t = {t}: {dump}")]
    SimulationBlowup { t: f64, dump: String },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
