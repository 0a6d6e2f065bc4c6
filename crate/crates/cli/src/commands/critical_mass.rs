use std::f64::consts::PI;
use std::path::Path;

use clap::Args;
use kslab::lane_emden::{critical_mass_sub, direct_profile, liouville_profile, shoot_liouville};
use kslab::ode::Tolerances;
use kslab::KsError;
use serde::{Deserialize, Serialize};

use super::{dims, require_dim, Outcome};
use crate::config::{pretty, write, Params};

/// Critical masses, each computed two independent ways.
///
/// d = 2: quadrature of the Liouville density and the shot boundary flux,
/// next to the exact value 8π. d >= 3: the subsolution mass from the
/// normalized family and the mass of the directly shot profile.
/// Writes `critical_mass.json` and prints it.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CriticalMassParams {
    /// Dimension [default: all of 2, 3, 4, 5].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
}

#[derive(Debug, Serialize)]
struct Entry {
    d: usize,
    /// Primary value.
    critical_mass: f64,
    /// Second route to the same number.
    check: f64,
    method: &'static str,
    check_method: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<f64>,
}

impl Params for CriticalMassParams {
    const COMMAND: &'static str = "critical-mass";

    fn resolve(self) -> Result<Self, KsError> {
        self.d.map(require_dim).transpose()?;
        Ok(self)
    }
}

impl CriticalMassParams {
    pub fn execute(&self, out: &Path) -> anyhow::Result<Outcome> {
        let tol = Tolerances::default();
        let entries = dims(self.d)
            .into_iter()
            .map(|d| entry(d, &tol))
            .collect::<Result<Vec<_>, _>>()?;
        let text = pretty(&entries)?;
        write(out, "critical_mass.json", &text)?;
        print!("{text}");
        Ok(Outcome::Success)
    }
}

fn entry(d: usize, tol: &Tolerances) -> Result<Entry, KsError> {
    if d == 2 {
        let r_end = 1e3;
        let quad = liouville_profile(1.0, r_end, 1 << 16)?.mass;
        let shot = -2.0 * PI * r_end * shoot_liouville(1.0, r_end, tol)?.y_final()[1];
        return Ok(Entry {
            d,
            critical_mass: quad,
            check: shot,
            method: "liouville_quadrature",
            check_method: "liouville_flux",
            exact: Some(8.0 * PI),
        });
    }
    Ok(Entry {
        d,
        critical_mass: critical_mass_sub(d, tol)?,
        check: direct_profile(d, 1024, tol)?.mass,
        method: "subsolution_family",
        check_method: "direct_profile",
        exact: None,
    })
}
