use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix has a negative entry at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize },

    #[error("power iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("cap {cap} retains only {retained:.4} of the generation-{generation} mass (need 0.99)")]
    CapTooSmall {
        generation: usize,
        cap: usize,
        retained: f64,
    },

    #[error("population cap {cap} exceeded at generation {generation} ({population} particles)")]
    PopulationCap {
        generation: usize,
        population: usize,
        cap: usize,
    },

    #[error("type {ty} requests a block of {requested} displacements but the ray has {available} coefficients")]
    BlockTooLarge {
        ty: usize,
        requested: usize,
        available: usize,
    },

    #[error("tail law is not regularly varying: {0}")]
    NotRegularlyVarying(String),

    #[error("statistic threshold {threshold} is not above the sampler resolution {resolution}")]
    Unresolved { threshold: f64, resolution: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
