use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use kslab::bounds::{check_laplacian_lower, check_q_inequality_2d, InequalityReport};
use kslab::fields::v_and_delta;
use kslab::io::field_from_csv;
use kslab::KsError;
use serde::{Deserialize, Serialize};

use super::{require, require_dim, Outcome};
use crate::config::{pretty, write, Params};

const INEQUALITIES: [&str; 3] = ["q-2d", "laplacian-lower", "all"];

/// Evaluate the pointwise and integral inequalities on a density snapshot.
///
/// q-2d (d = 2 only): Q(u) <= ‖Δρ‖₁/4π and ‖Δρ‖₁ <= 2M|δ| + 2M‖ρ‖∞.
/// laplacian-lower: −Δρ <= (2/m) δ̄ ρ^(2/d) at the worst cell, with
/// δ̄ = max(|δ|, ‖ρ‖∞) and absolute tolerance slack·‖ρ‖∞.
/// Writes `check.json`, a list of {inequality, lhs, rhs, margin, pass}
/// (plus `radius` for laplacian-lower), and prints it. A failed
/// inequality is reported, not treated as an error.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct CheckParams {
    /// Density CSV with columns r,value, as written by `evolve`.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<PathBuf>,

    /// Dimension of the snapshot.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,

    /// q-2d, laplacian-lower or all [default: all].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inequality: Option<String>,

    /// δ to use instead of the one measured on the snapshot.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,

    /// Relative slack of each inequality [default: 0.05].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slack: Option<f64>,

    /// Density floor relative to the max when measuring δ [default: 1e-14].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor_rel: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Row {
    #[serde(flatten)]
    report: InequalityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
    delta: f64,
}

impl Params for CheckParams {
    const COMMAND: &'static str = "check";

    fn resolve(self) -> Result<Self, KsError> {
        let snapshot = require(self.snapshot, "snapshot")?;
        let d = require_dim(require(self.d, "d")?)?;
        let inequality = self.inequality.unwrap_or_else(|| "all".into());
        if !INEQUALITIES.contains(&inequality.as_str()) {
            return Err(KsError::Config(format!(
                "unknown inequality {inequality:?}; expected one of {}",
                INEQUALITIES.join(", ")
            )));
        }
        if inequality == "q-2d" && d != 2 {
            return Err(KsError::Config(format!("q-2d needs d = 2, got {d}")));
        }
        let slack = self.slack.unwrap_or(0.05);
        let floor_rel = self.floor_rel.unwrap_or(1e-14);
        if !(slack >= 0.0 && slack.is_finite()) || !(floor_rel > 0.0 && floor_rel < 1.0) {
            return Err(KsError::Config(format!("need slack >= 0 and 0 < floor-rel < 1, got {slack}, {floor_rel}")));
        }
        Ok(Self {
            snapshot: Some(snapshot),
            d: Some(d),
            inequality: Some(inequality),
            delta: self.delta,
            slack: Some(slack),
            floor_rel: Some(floor_rel),
        })
    }
}

impl CheckParams {
    pub fn execute(&self, out: &Path) -> anyhow::Result<Outcome> {
        let path = self.snapshot.as_ref().unwrap();
        let text = fs::read_to_string(path)
            .map_err(KsError::Io)
            .with_context(|| format!("reading {}", path.display()))?;
        let d = self.d.unwrap();
        let rho = field_from_csv(&text, d)?;
        let delta = match self.delta {
            Some(delta) => delta,
            None => v_and_delta(&rho, (self.floor_rel.unwrap() * rho.max()).max(f64::MIN_POSITIVE))?.delta,
        };
        let slack = self.slack.unwrap();
        let which = self.inequality.as_deref().unwrap();
        let mut rows = Vec::new();
        if d == 2 && which != "laplacian-lower" {
            let q = check_q_inequality_2d(&rho, delta, slack)?;
            for report in [q.q_bound, q.laplacian_bound] {
                rows.push(Row { report, radius: None, delta });
            }
        }
        if which != "q-2d" {
            let lower = check_laplacian_lower(&rho, delta, slack * rho.max());
            rows.push(Row { report: lower.report, radius: Some(lower.radius), delta });
        }
        let text = pretty(&rows)?;
        write(out, "check.json", &text)?;
        print!("{text}");
        Ok(Outcome::Success)
    }
}
