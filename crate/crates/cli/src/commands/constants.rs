use std::path::Path;

use clap::Args;
use kslab::bounds::{c0_pole, epsilon_threshold, naive_linf_prefactor, subcritical_q_exponent, SmallMassConstants};
use kslab::KsError;
use serde::{Deserialize, Serialize};

use super::{dims, require_dim, Outcome};
use crate::config::{pretty, write, Params};

/// Small-mass threshold ε_d and the constants C₀, C₁ at a given mass.
///
/// Writes `constants.json` and prints it. Fields: `epsilon` (threshold),
/// `c0_pole` (mass where the L∞ bound degenerates), `c0`, `c1`,
/// `coefficient` (1 − (d−1)²C₁²/(2d)), `threshold_ok`, `delta_constant`
/// (C in δ ≥ −C/t), and for d >= 3 `naive_linf_prefactor` and
/// `q_exponent`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConstantsParams {
    /// Dimension [default: all of 2, 3, 4, 5].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,

    /// Mass at which C₀ and C₁ are evaluated [default: ε_d/2].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Entry {
    d: usize,
    epsilon: f64,
    c0_pole: f64,
    mass: f64,
    /// `None` when the formulas do not apply at this mass.
    c0: Option<f64>,
    c1: Option<f64>,
    coefficient: Option<f64>,
    threshold_ok: bool,
    delta_constant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    naive_linf_prefactor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q_exponent: Option<f64>,
}

impl Params for ConstantsParams {
    const COMMAND: &'static str = "constants";

    fn resolve(self) -> Result<Self, KsError> {
        self.d.map(require_dim).transpose()?;
        if let Some(m) = self.mass {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(KsError::Config(format!("`mass` must be finite and >= 0, got {m}")));
            }
        }
        Ok(self)
    }
}

impl ConstantsParams {
    pub fn execute(&self, out: &Path) -> anyhow::Result<Outcome> {
        let entries = dims(self.d)
            .into_iter()
            .map(|d| entry(d, self.mass))
            .collect::<Result<Vec<_>, _>>()?;
        let text = pretty(&entries)?;
        write(out, "constants.json", &text)?;
        print!("{text}");
        Ok(Outcome::Success)
    }
}

fn entry(d: usize, mass: Option<f64>) -> Result<Entry, KsError> {
    let epsilon = epsilon_threshold(d)?;
    let mass = mass.unwrap_or(0.5 * epsilon);
    let constants = match SmallMassConstants::new(d, mass) {
        Ok(c) => Some(c),
        Err(KsError::FormulaInapplicable(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Entry {
        d,
        epsilon,
        c0_pole: c0_pole(d),
        mass,
        c0: constants.map(|c| c.c0),
        c1: constants.map(|c| c.c1),
        coefficient: constants.map(|c| c.coefficient),
        threshold_ok: constants.is_some_and(|c| c.threshold_ok),
        delta_constant: constants.and_then(|c| c.predicted_delta_constant()),
        naive_linf_prefactor: (d >= 3).then(|| naive_linf_prefactor(d)),
        q_exponent: subcritical_q_exponent(d).ok(),
    })
}
