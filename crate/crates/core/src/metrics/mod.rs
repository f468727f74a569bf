//! Circular fingerprints, Tanimoto similarity and the built-in property
//! calculators that back the default scoring terms.

mod fingerprint;
mod properties;

use thiserror::Error;

pub use fingerprint::{morgan_fingerprint, tanimoto, Fingerprint, FingerprintParams, FINGERPRINT_SEED};
pub use properties::{
    builtin_property, logp_contribution, BuiltinProperty, PropertyStatus, PropertyValue,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("fingerprint lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("n_bits must be a power of two in [256, 8192], got {0}")]
    InvalidBitCount(usize),
    #[error("unknown property `{0}`")]
    UnknownProperty(String),
}
