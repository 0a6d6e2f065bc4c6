use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;

use anyhow::Context;
use clap::Args;
use kslab::evolve::{
    diagnostics_csv_row, entropy_decay_check, run, BlowupReport, EntropyDecayReport, ProfileSpec, RunEvent,
    SolverConfig, DIAGNOSTICS_HEADER,
};
use kslab::fields::critical_exponent;
use kslab::io::field_to_csv;
use kslab::KsError;
use serde::{Deserialize, Serialize};

use super::{require, require_dim, Outcome};
use crate::config::{pretty, write, Params};

const PROFILES: [&str; 6] = ["gaussian", "uniform_ball", "lane_emden_stationary", "liouville", "power_tail", "barenblatt"];

/// Radial finite-volume run of the critical Keller–Segel system.
///
/// Outputs:
///   diagnostics.csv        one row per record (every output-stride steps,
///                          at snapshots, and at the end)
///   snapshot_NNN_tT.csv    density at each snapshot time, columns r,value
///   summary.json           final time, steps, blow-up evidence, warnings
///   failure_state.csv      last good density, only after a step failure
///
/// diagnostics.csv columns:
///   t             time
///   mass          total mass
///   linf          max density
///   delta         min of Δp + χρ over admissible cells (NaN at t = 0)
///   t_linf        t·linf
///   t_delta       t·delta
///   entropy_or_lm entropy, ∫ρ log ρ in d = 2 and ∫ρ^m/(m−1) otherwise
///   interaction   ∫ρu with u the Newtonian potential of ρ
///   free_energy   entropy_or_lm − interaction/2
///   m2            second moment ∫|x|²ρ
///   log_moment    ∫ρ log(1+|x|²)
///   q_of_u        Q(u) of the density
///   h_lambda      H_λ relative to the Liouville profile (d = 2, else NaN)
///   tail_beta     fitted exponent of a (1+r)^(−β) tail (NaN if no fit)
///   dt            last time step
///
/// Profiles: gaussian (mass, width), uniform_ball (mass, radius),
/// lane_emden_stationary (lambda, optional mass, d >= 3),
/// liouville (lambda, optional mass, d = 2), power_tail (mass, beta > d),
/// barenblatt (mass, t0).
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
#[command(verbatim_doc_comment)]
pub struct EvolveParams {
    /// Dimension.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,

    /// Diffusion exponent; fixed to 2 − 2/d and accepted only at that value.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,

    /// Initial profile [default: gaussian].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,

    /// Initial mass.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,

    /// Gaussian width s in e^(−r²/s²) [default: 1].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,

    /// Radius of uniform_ball [default: 1].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,

    /// Scale of lane_emden_stationary and liouville [default: 1].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,

    /// Tail exponent of power_tail.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,

    /// Age of the barenblatt profile [default: 0.1].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,

    /// Outer radius [default: 10].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,

    /// Number of cells [default: 1024].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_cells: Option<usize>,

    /// Drift coupling, 1 or 0 [default: 1].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi: Option<f64>,

    /// Final time [default: 1].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,

    /// Fraction of the stable time step [default: 0.6].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfl_safety: Option<f64>,

    /// Steps between diagnostics records [default: 1000].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_stride: Option<usize>,

    /// Comma-separated snapshot times in [0, t-end].
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_times: Option<Vec<f64>>,

    /// Density floor relative to the max, for pressure and δ [default: 1e-14].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor_rel: Option<f64>,

    /// λ of the H_λ diagnostic [default: 1].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_lambda: Option<f64>,

    /// Radial window lo,hi for the tail fit [default: automatic].
    #[arg(long, value_delimiter = ',', num_args = 2)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_window: Option<Vec<f64>>,

    /// Hard cap on time steps [default: 50000000].
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
}

#[derive(Debug, Serialize)]
struct Summary {
    t_final: f64,
    steps: u64,
    records: usize,
    aborted: bool,
    blowup: BlowupReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    entropy_decay: Option<EntropyDecayReport>,
    warnings: Vec<String>,
}

impl Params for EvolveParams {
    const COMMAND: &'static str = "evolve";

    fn resolve(self) -> Result<Self, KsError> {
        let d = require_dim(require(self.d, "d")?)?;
        let m = critical_exponent(d);
        if let Some(given) = self.m {
            if (given - m).abs() > 1e-12 {
                return Err(KsError::Config(format!("m is fixed by d: d = {d} requires m = {m}, got {given}")));
            }
        }
        let profile = self.profile.clone().unwrap_or_else(|| "gaussian".into());
        if !PROFILES.contains(&profile.as_str()) {
            return Err(KsError::Config(format!("unknown profile {profile:?}; expected one of {}", PROFILES.join(", "))));
        }
        let uses = |key: &str| match profile.as_str() {
            "gaussian" => matches!(key, "mass" | "width"),
            "uniform_ball" => matches!(key, "mass" | "radius"),
            "lane_emden_stationary" | "liouville" => matches!(key, "mass" | "lambda"),
            "power_tail" => matches!(key, "mass" | "beta"),
            _ => matches!(key, "mass" | "t0"),
        };
        let given = [
            ("mass", self.mass),
            ("width", self.width),
            ("radius", self.radius),
            ("lambda", self.lambda),
            ("beta", self.beta),
            ("t0", self.t0),
        ];
        if let Some((key, _)) = given.iter().find(|(k, v)| v.is_some() && !uses(k)) {
            return Err(KsError::Config(format!("`{key}` does not apply to profile {profile}")));
        }
        let or_default = |key: &str, v: Option<f64>, default: f64| if uses(key) { Some(v.unwrap_or(default)) } else { None };
        let base = SolverConfig::new(d, 10.0, 1024, 1.0, 1.0, ProfileSpec::named(&profile));
        let tail_window = match self.tail_window {
            Some(w) if w.len() != 2 => {
                return Err(KsError::Config(format!("`tail-window` needs two values, got {}", w.len())))
            }
            w => w,
        };
        let resolved = Self {
            d: Some(d),
            m: Some(m),
            profile: Some(profile.clone()),
            mass: self.mass,
            width: or_default("width", self.width, 1.0),
            radius: or_default("radius", self.radius, 1.0),
            lambda: or_default("lambda", self.lambda, 1.0),
            beta: self.beta,
            t0: or_default("t0", self.t0, 0.1),
            r_max: Some(self.r_max.unwrap_or(base.r_max)),
            n_cells: Some(self.n_cells.unwrap_or(base.n_cells)),
            chi: Some(self.chi.unwrap_or(base.chi)),
            t_end: Some(self.t_end.unwrap_or(base.t_end)),
            cfl_safety: Some(self.cfl_safety.unwrap_or(base.cfl_safety)),
            output_stride: Some(self.output_stride.unwrap_or(base.output_stride)),
            snapshot_times: Some(self.snapshot_times.unwrap_or_default()),
            floor_rel: Some(self.floor_rel.unwrap_or(base.floor_rel)),
            h_lambda: Some(self.h_lambda.unwrap_or(base.h_lambda)),
            tail_window,
            max_steps: Some(self.max_steps.unwrap_or(base.max_steps)),
        };
        resolved.solver_config().validate()?;
        Ok(resolved)
    }
}

impl EvolveParams {
    /// Solver configuration of resolved parameters.
    fn solver_config(&self) -> SolverConfig {
        let profile = ProfileSpec {
            mass: self.mass,
            width: self.width,
            radius: self.radius,
            lambda: self.lambda,
            beta: self.beta,
            t0: self.t0,
            ..ProfileSpec::named(self.profile.as_deref().unwrap())
        };
        let mut config = SolverConfig::new(
            self.d.unwrap(),
            self.r_max.unwrap(),
            self.n_cells.unwrap(),
            self.chi.unwrap(),
            self.t_end.unwrap(),
            profile,
        );
        config.cfl_safety = self.cfl_safety.unwrap();
        config.output_stride = self.output_stride.unwrap();
        config.snapshot_times = self.snapshot_times.clone().unwrap_or_default();
        config.floor_rel = self.floor_rel.unwrap();
        config.h_lambda = self.h_lambda.unwrap();
        config.tail_window = self.tail_window.as_ref().map(|w| [w[0], w[1]]);
        config.max_steps = self.max_steps.unwrap();
        config
    }

    pub fn execute(&self, out: &Path) -> anyhow::Result<Outcome> {
        let config = self.solver_config();
        let (tx, rx) = mpsc::channel::<Output>();
        let writer = spawn_writer(out.join("diagnostics.csv"), rx)?;
        let mut snapshot = 0usize;
        let result = run(&config, |event| {
            let item = match event {
                RunEvent::Record(rec) => Output::Row(diagnostics_csv_row(rec)),
                RunEvent::Snapshot { t, rho } => {
                    snapshot += 1;
                    Output::File(out.join(format!("snapshot_{snapshot:03}_t{t}.csv")), field_to_csv(rho))
                }
            };
            tx.send(item)
                .map_err(|_| KsError::Io(std::io::Error::other("output writer stopped")))
        });
        drop(tx);
        let written = writer.join().expect("writer thread panicked");
        let summary = match result {
            Ok(summary) => summary,
            Err(KsError::StepFailure { t, reason, state_csv }) => {
                write(out, "failure_state.csv", &state_csv)?;
                return Err(KsError::StepFailure { t, reason, state_csv: String::new() })
                    .context("last good state written to failure_state.csv");
            }
            Err(e) => return Err(e.into()),
        };
        written?;
        for w in &summary.warnings {
            eprintln!("warning: {w}");
        }
        let report = Summary {
            t_final: summary.final_state.t,
            steps: summary.final_state.steps,
            records: summary.records.len(),
            aborted: summary.aborted,
            blowup: summary.blowup,
            entropy_decay: (config.dim == 2).then(|| entropy_decay_check(&summary.records)),
            warnings: summary.warnings,
        };
        let text = pretty(&report)?;
        write(out, "summary.json", &text)?;
        print!("{text}");
        Ok(Outcome::Success)
    }
}

enum Output {
    Row(String),
    File(PathBuf, String),
}

/// Drain rows into `path` (header first) and whole files to their paths.
fn spawn_writer(path: PathBuf, rx: mpsc::Receiver<Output>) -> anyhow::Result<thread::JoinHandle<anyhow::Result<()>>> {
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(thread::spawn(move || {
        let mut csv = BufWriter::new(file);
        writeln!(csv, "{}", DIAGNOSTICS_HEADER.join(","))?;
        for item in rx {
            match item {
                Output::Row(row) => csv.write_all(row.as_bytes())?,
                Output::File(p, text) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
            }
        }
        csv.flush().with_context(|| format!("writing {}", path.display()))
    }))
}
