//! Crate-wide error type.

use thiserror::Error;

use crate::fock::ModeId;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor products and transform outputs require disjoint mode sets.
    #[error("mode {0} appears on both sides of a disjoint-mode operation")]
    OverlappingModes(ModeId),

    /// Binary state operations require identical registries.
    #[error("state registries do not match")]
    RegistryMismatch,

    /// A referenced mode is not part of the state's registry.
    #[error("mode {0} is not in the state registry")]
    UnknownMode(ModeId),

    #[error("invalid {name}: {value} (must satisfy {constraint})")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("transform is not unitary (deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("matrix shape does not match the declared mode lists")]
    BadShape,

    #[error("cannot normalize a state with zero norm")]
    ZeroNorm,

    /// A POVM diagonal was queried beyond the photon-number range it
    /// was built for.
    #[error("POVM diagonal built for m <= {built_for} queried at m = {queried}")]
    PovmRange { built_for: u32, queried: u32 },

    #[error("POVM diagonal entry {0} outside [0, 1]")]
    PovmWeight(f64),

    /// The F-ratio of channel transmissivities has a vanishing denominator.
    #[error("F ratio undefined: zero transmissivity in the denominator")]
    UndefinedF,

    /// Single-pair concentration needs a known constant pure state.
    #[error("procrustean method requires a known constant pair state")]
    ProcrusteanUnknownState,

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
