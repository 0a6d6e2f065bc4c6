//! Subcommand parameter sets and their bodies.
//!
//! Every parameter is optional at parse time so that flags and config-file
//! values can be merged; `resolve` fills the defaults.

mod check;
mod constants;
mod critical_mass;
mod evolve;
mod mass_curve;
mod suite;

pub use check::CheckParams;
pub use constants::ConstantsParams;
pub use critical_mass::CriticalMassParams;
pub use evolve::EvolveParams;
pub use mass_curve::MassCurveParams;
pub use suite::SuiteParams;

use kslab::KsError;

/// Result of a subcommand that did not error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    AcceptanceFailure,
}

fn require<T>(value: Option<T>, key: &str) -> Result<T, KsError> {
    value.ok_or_else(|| KsError::Config(format!("`{key}` is required")))
}

fn require_dim(d: usize) -> Result<usize, KsError> {
    if d < 2 {
        return Err(KsError::Config(format!("`d` must be at least 2, got {d}")));
    }
    Ok(d)
}

/// Dimensions `d` if given, else 2 through 5.
fn dims(d: Option<usize>) -> Vec<usize> {
    d.map_or_else(|| (2..=5).collect(), |d| vec![d])
}
