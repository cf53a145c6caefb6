use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "unphysical NLA gain for this source brightness: g_eff^2 * sqrt(N_S/(N_S+1)) = {lambda:.6} >= 1"
    )]
    UnphysicalGain { lambda: f64 },

    #[error("post-selection has zero success probability")]
    ZeroSuccess,

    #[error(
        "truncation deficit {deficit:.3e} exceeds tolerance {tolerance:.1e}; increase the photon cutoff (currently {n_max})"
    )]
    Truncation {
        deficit: f64,
        tolerance: f64,
        n_max: usize,
    },

    #[error("{path}:{line}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
