use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid temperature {0}: must be finite and > 0")]
    InvalidTemperature(f32),
    #[error("temperature {0} outside working range (0, {1}]")]
    TemperatureOutOfRange(f32, f32),
    #[error("lattice index ({row}, {col}) out of range for side length {n}")]
    IndexOutOfRange { row: usize, col: usize, n: usize },
    #[error("lattice side length {0} too small (need n >= 2)")]
    LatticeTooSmall(usize),
    #[error("non-finite float rejected: {0}")]
    NonFiniteFloat(f32),
    #[error("bit pattern {0:#010x} encodes NaN or infinity")]
    NonFiniteBits(u32),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("lookup index {index} out of range (table has {len} entries)")]
    LookupOutOfRange { index: usize, len: usize },
    #[error("non-finite gradient encountered")]
    NonFiniteGradient,
    #[error("training diverged at step {step}: d_loss = {d_loss}, g_loss = {g_loss}")]
    TrainingDiverged { step: u64, d_loss: f32, g_loss: f32 },
    #[error("image is not square: {width}x{height}")]
    NonSquareImage { width: usize, height: usize },
    #[error("image too small: {0}x{0} (need n >= 4)")]
    ImageTooSmall(usize),
    #[error("need at least 2 positive-power bins for the log-log fit, got {0}")]
    TooFewFitPoints(usize),
    #[error("response map needs >= 2 distinct temperatures with >= 2 images each")]
    InsufficientCalibration,
    #[error("degenerate response map: zero spread in both features")]
    DegenerateMap,
    #[error("empty activity matrix")]
    EmptyMatrix,
    #[error("empty score batch")]
    EmptyBatch,
    #[error("pgm parse error: {0}")]
    PgmFormat(String),
    #[error("manifest parse error: {0}")]
    ManifestFormat(String),
    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),
    #[error("checkpoint version {found} unsupported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
