use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by model construction, simulation and the experiment
/// harness. Configuration problems map to CLI exit code 1; failed
/// verification criteria are not errors (they are reported and map to
/// exit code 2).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid probability row for k={k}: {reason}")]
    InvalidProbabilityRow { k: u32, reason: String },

    #[error("bias out of range: epsilon_N = alpha/N = {epsilon} must satisfy |epsilon| < 1/2")]
    BiasOutOfRange { epsilon: f64 },

    #[error("alpha = {alpha} is not supported for the {kind} family (its perturbation vanishes)")]
    AlphaUnsupported { kind: &'static str, alpha: f64 },

    #[error(
        "custom table violates the factorial-moment form rho_{order}(p_k) = a_{order} k(k-1)...: \
         k={k} gives {found}, expected {expected}"
    )]
    MomentFormViolation {
        order: u32,
        k: u32,
        found: f64,
        expected: f64,
    },

    #[error("custom table has no row for k={k} (k_max={k_max}); offspring type left the table support")]
    CustomTableExceeded { k: u32, k_max: u32 },

    #[error("offspring support k={k} exceeds the sampler cap {cap}")]
    SupportCapExceeded { k: u32, cap: u32 },

    #[error("initial histogram sums to {sum}, expected N={expected}")]
    HistogramSum { sum: u64, expected: u32 },

    #[error(
        "state too large for the exact generator: {occupied} occupied types (max 50), \
         max type {max_type} (max 30)"
    )]
    GeneratorSizeGuard { occupied: usize, max_type: u32 },

    #[error("family was built for N={family_n} but is applied to a state with N={state_n}")]
    ScaleMismatch { family_n: u32, state_n: u32 },

    #[error("event cap {cap} exceeded at t={t}; runaway configuration")]
    EventCapExceeded { cap: u64, t: f64 },

    #[error("perturbation-moment fit residual {residual} exceeds 1e-4; family violates the polynomial moment form")]
    PerturbationFitResidual { residual: f64 },

    #[error("factorial-moment order {0} is not in {{1,2,3}}")]
    MomentOrder(u32),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    FileRead {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
