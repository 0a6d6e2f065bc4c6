use std::path::Path;

use clap::Args;
use kslab::lane_emden::{mass_curve, mass_curve_csv};
use kslab::ode::Tolerances;
use kslab::KsError;
use serde::{Deserialize, Serialize};

use super::{require, require_dim, Outcome};
use crate::config::{write, Params};

/// Mass and support radius of the Lane–Emden control family over a
/// logarithmic γ grid, plus γ = 0.
///
/// Writes `mass_curve.csv` with columns
///   gamma  control parameter γ
///   M      radial mass ∫₀^R r^{d−1} f^q dr (without the sphere area)
///   R      first zero of f
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
#[command(verbatim_doc_comment)]
pub struct MassCurveParams {
    /// Dimension, at least 3.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,

    /// Smallest positive γ [default: 1e-6].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_min: Option<f64>,

    /// Largest γ [default: 1].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_max: Option<f64>,

    /// Number of log-spaced points in [gamma-min, gamma-max] [default: 50].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

impl Params for MassCurveParams {
    const COMMAND: &'static str = "mass-curve";

    fn resolve(self) -> Result<Self, KsError> {
        let d = require_dim(require(self.d, "d")?)?;
        if d < 3 {
            return Err(KsError::Config("mass-curve needs d >= 3".into()));
        }
        let lo = self.gamma_min.unwrap_or(1e-6);
        let hi = self.gamma_max.unwrap_or(1.0);
        let points = self.points.unwrap_or(50);
        if !(lo > 0.0 && hi.is_finite() && lo <= hi) {
            return Err(KsError::Config(format!("need 0 < gamma-min <= gamma-max, got [{lo}, {hi}]")));
        }
        if points < 2 && lo < hi {
            return Err(KsError::Config("`points` must be at least 2 for a proper range".into()));
        }
        Ok(Self { d: Some(d), gamma_min: Some(lo), gamma_max: Some(hi), points: Some(points.max(1)) })
    }
}

impl MassCurveParams {
    pub fn execute(&self, out: &Path) -> anyhow::Result<Outcome> {
        let (lo, hi, n) = (self.gamma_min.unwrap(), self.gamma_max.unwrap(), self.points.unwrap());
        let mut gammas = vec![0.0];
        let step = if n > 1 { (hi / lo).ln() / (n - 1) as f64 } else { 0.0 };
        gammas.extend((0..n).map(|k| lo * (step * k as f64).exp()));
        let curve = mass_curve(self.d.unwrap(), &gammas, &Tolerances::default())?;
        write(out, "mass_curve.csv", &mass_curve_csv(&curve))?;
        Ok(Outcome::Success)
    }
}
