use thiserror::Error;

/// Errors raised by the analysis engine and the simulators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("occupancy entry {index} is out of range: {value}")]
    NegativeEntry { index: usize, value: f64 },

    #[error("occupancy entries sum to {sum} (deviation {deviation:e})")]
    SumNotOne { sum: f64, deviation: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("count vector sums to {got}, expected population {expected}")]
    PopulationMismatch { expected: u64, got: u64 },

    #[error("population size must be positive")]
    EmptyPopulation,

    #[error("occupancy {value} times population {population} is not an integer count")]
    NonIntegralCounts { value: f64, population: u64 },

    #[error("non-finite derivative d f[{output}] / d m[{input}]")]
    NonFiniteDerivative { output: usize, input: usize },

    #[error("invalid gossip parameters: {0}")]
    InvalidParams(String),

    #[error("measure `{measure}` is not defined for the {kind} model")]
    MeasureUnavailable {
        measure: &'static str,
        kind: &'static str,
    },

    #[error("exact state space needs {needed} entries, cap is {cap}")]
    StateSpaceTooLarge { needed: usize, cap: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
