use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: &'static str },

    #[error("atom is not on the cell wall (|r| = {radius} mm, cell radius {cell_radius} mm)")]
    NotOnBoundary { radius: f64, cell_radius: f64 },

    #[error("detuning {detuning} rad/s coincides with a hyperfine pole of the vector coefficient")]
    SingularDetuning { detuning: f64 },

    #[error("integration step too coarse: {what} (dt = {dt} ms)")]
    StepSize { what: &'static str, dt: f64 },

    #[error("aliasing: filter bandwidth {bandwidth_khz} kHz exceeds output Nyquist {nyquist_khz} kHz")]
    Aliasing { bandwidth_khz: f64, nyquist_khz: f64 },

    #[error("local oscillator {lo_khz} kHz is above the record Nyquist {nyquist_khz} kHz")]
    LoAboveNyquist { lo_khz: f64, nyquist_khz: f64 },

    #[error("spectra have mismatched frequency grids")]
    GridMismatch,

    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("nonpositive reference value {0}")]
    NonPositiveReference(f64),

    #[error("missing calibration run")]
    MissingCalibration,

    #[error("covariance matrix is not positive definite after regularization")]
    NotPositiveDefinite,
}
