//! The acceptance battery, shared by the `acceptance` test target and the
//! `suite` subcommand. Every criterion returns one [`CriterionResult`].

use std::f64::consts::{E, PI};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{check_q_inequality_2d, epsilon_threshold, SmallMassConstants};
use crate::error::Result;
use crate::evolve::{
    detect_blowup, entropy_decay_check, run, BlowupChannel, DiagnosticsRecord, ProfileSpec, RunEvent,
    SolverConfig, MASS_TOL,
};
use crate::fields::{self, v_and_delta, RadialField};
use crate::lane_emden::{
    critical_mass_sub, direct_profile, liouville_profile, mass_curve, shoot, shoot_liouville, variation,
};
use crate::ode::Tolerances;

/// Number of criteria in the battery.
pub const CRITERIA: u8 = 13;
/// Criteria run by `suite --quick`.
pub const QUICK: [u8; 6] = [1, 2, 3, 4, 5, 6];

/// Criteria whose tolerance cannot be met by any correct implementation.
/// They are still run and still reported as failing; they are listed here
/// only so that callers can tell an expected failure from a regression.
///
/// 3: in `d = 4` the mass curve deviates from `M(0)` like `0.15 γ⁶`, which
/// is `1.49e-7` at `γ = 0.1`, above the `1e-8` tolerance. The value is a
/// property of the ODE and agrees with an independent integrator.
pub const KNOWN_UNATTAINABLE: [u8; 1] = [3];

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    /// Measured quantities against their tolerances.
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn known_unattainable(&self) -> bool {
        KNOWN_UNATTAINABLE.contains(&self.id)
    }

    /// One-line report, `PASS`/`FAIL`, with `(known)` on expected failures.
    pub fn line(&self) -> String {
        let status = match (self.pass, self.known_unattainable()) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (known)",
        };
        format!("{status} [{:>2}] {}: {} ({:.1} s)", self.id, self.name, self.detail, self.seconds)
    }
}

/// Human-readable name of criterion `id`.
pub fn name(id: u8) -> &'static str {
    match id {
        1 => "Liouville critical mass",
        2 => "mass two ways",
        3 => "d=4 mass curve flatness",
        4 => "variation identity",
        5 => "d=3 critical-mass consistency",
        6 => "epsilon_2 closed form",
        7 => "Li-Yau for the heat flow",
        8 => "Aronson-Benilan for the porous medium flow",
        9 => "second-moment identity",
        10 => "small-mass Li-Yau for Keller-Segel",
        11 => "Q(u) inequality on trajectories",
        12 => "stationarity of the critical profile",
        13 => "supercritical blow-up indicator",
        _ => "unknown criterion",
    }
}

/// Run criterion `id`; module errors count as failures.
pub fn evaluate(id: u8) -> CriterionResult {
    let start = Instant::now();
    let outcome = match id {
        1 => liouville_mass(),
        2 => mass_two_ways(),
        3 => mass_curve_flatness(),
        4 => variation_identity(),
        5 => critical_mass_consistency(),
        6 => epsilon_2_closed_form(),
        7 => li_yau_heat(),
        8 => aronson_benilan(),
        9 => second_moment_identity(),
        10 => small_mass_run().and_then(|r| r.criterion_10()),
        11 => small_mass_run().and_then(|r| r.criterion_11()),
        12 => stationarity(),
        13 => supercritical_blowup(),
        _ => Ok((false, format!("no criterion {id}"))),
    };
    let (pass, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult { id, name: name(id), pass, detail, seconds: start.elapsed().as_secs_f64() }
}

/// Evaluate several criteria in parallel; results come back in `ids` order.
pub fn evaluate_all(ids: &[u8]) -> Vec<CriterionResult> {
    // Criteria 10 and 11 share one run.
    let shared = ids.contains(&10) && ids.contains(&11);
    let mut out: Vec<CriterionResult> = ids
        .par_iter()
        .filter(|&&id| !(shared && id == 11))
        .map(|&id| if shared && id == 10 { small_mass_pair() } else { vec![evaluate(id)] })
        .flatten()
        .collect();
    out.sort_by_key(|r| ids.iter().position(|&i| i == r.id));
    out
}

type Outcome = Result<(bool, String)>;

fn tol() -> Tolerances {
    Tolerances::default()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
    fields::least_squares_slope(&xs, &ys)
}

fn quiet(_: RunEvent<'_>) -> Result<()> {
    Ok(())
}

fn liouville_mass() -> Outcome {
    let quad = liouville_profile(1.0, 1e3, 1 << 16)?.mass;
    let r_end = 1e3;
    let traj = shoot_liouville(1.0, r_end, &tol())?;
    let shot = -2.0 * PI * r_end * traj.y_final()[1];
    let (eq, es) = (rel(quad, 8.0 * PI), rel(shot, 8.0 * PI));
    Ok((eq <= 1e-3 && es <= 1e-3, format!("closed form rel {eq:.2e}, shot rel {es:.2e} (tol 1e-3)")))
}

fn mass_two_ways() -> Outcome {
    let mut worst: f64 = 0.0;
    for dim in [3, 4, 5] {
        for gamma in [0.0, 0.3, 1.0] {
            let s = shoot(dim, gamma, &tol())?;
            worst = worst.max((s.radial_mass() - s.flux_mass()).abs() / s.radial_mass());
        }
    }
    Ok((worst <= 1e-8, format!("max rel gap {worst:.2e} (tol 1e-8)")))
}

fn mass_curve_flatness() -> Outcome {
    let gammas: Vec<f64> = (0..50).map(|k| 10f64.powf(-6.0 + 6.0 * k as f64 / 49.0)).collect();
    let pts = mass_curve(4, &gammas, &tol())?;
    let m0 = shoot(4, 0.0, &tol())?.radial_mass();
    let drop = pts.windows(2).map(|w| w[0].mass - w[1].mass).fold(f64::NEG_INFINITY, f64::max);
    let dev = pts
        .iter()
        .filter(|p| p.gamma <= 0.1)
        .map(|p| (p.mass - m0).abs())
        .fold(0.0, f64::max);
    let monotone = drop <= 1e-9;
    Ok((
        monotone && dev <= 1e-8,
        format!("largest decrease {drop:.2e} (slack 1e-9), max |M(γ)-M(0)| for γ<=0.1 is {dev:.3e} (tol 1e-8)"),
    ))
}

fn variation_identity() -> Outcome {
    let dg = 1e-4;
    let mut worst: f64 = 0.0;
    for gamma in [0.2, 0.5, 1.0] {
        let v = variation(&shoot(3, gamma, &tol())?, &tol())?;
        let up = shoot(3, gamma + dg, &tol())?.radial_mass();
        let dn = shoot(3, gamma - dg, &tol())?.radial_mass();
        worst = worst.max(rel((up - dn) / (2.0 * dg), v.dm_dgamma));
    }
    Ok((worst <= 1e-4, format!("max rel gap {worst:.2e} (tol 1e-4)")))
}

fn critical_mass_consistency() -> Outcome {
    let a = critical_mass_sub(3, &tol())?;
    let b = direct_profile(3, 1024, &tol())?.mass;
    let e = rel(b, a);
    Ok((e <= 1e-6, format!("M_sub = {a:.10}, direct = {b:.10}, rel {e:.2e} (tol 1e-6)")))
}

fn epsilon_2_closed_form() -> Outcome {
    let eps = epsilon_threshold(2)?;
    let gap = (eps - 8.0 * PI / (2.0 + E)).abs();
    let rounded = format!("{eps:.4}");
    Ok((gap <= 1e-10 && rounded == "5.3267", format!("eps_2 = {eps:.12} ({rounded}), gap {gap:.1e} (tol 1e-10)")))
}

/// Heat kernel started at `t0 = 0.1`, so solver time `t` is `t − 0.1`.
fn li_yau_heat() -> Outcome {
    let t0 = 0.1;
    let mut c = SolverConfig::new(2, 16.0, 4096, 0.0, 1.0 - t0, ProfileSpec::gaussian(1.0, (4.0 * t0).sqrt()));
    c.cfl_safety = 0.9;
    c.output_stride = 2000;
    let s = run(&c, quiet)?;
    let worst = s.records[1..]
        .iter()
        .map(|r| ((r.t + t0) * r.delta + 1.0).abs())
        .fold(0.0, f64::max);
    Ok((worst <= 1e-2, format!("max |t·min Δlog ρ + 1| over t in [0.1, 1] = {worst:.2e} (tol 1e-2)")))
}

/// Source solution started at `t0 = 0.1`, measured at `t = 2.1`.
fn aronson_benilan() -> Outcome {
    let t0 = 0.1;
    let mut c = SolverConfig::new(3, 8.0, 1024, 0.0, 2.0, ProfileSpec::barenblatt(1.0, t0));
    c.cfl_safety = 0.9;
    c.output_stride = 5000;
    let s = run(&c, quiet)?;
    let last = s.records.last().expect("a run always records t_end");
    let gap = ((last.t + t0) * last.delta + 1.0).abs();
    Ok((gap <= 2e-2, format!("|t·min Δp + 1| at t = {:.2} is {gap:.2e} (tol 2e-2)", last.t + t0)))
}

fn second_moment_identity() -> Outcome {
    let runs: Vec<Result<(f64, f64)>> = [2.0, 4.0, 6.0, 8.0]
        .par_iter()
        .map(|&k| {
            let m = k * PI;
            let mut c = SolverConfig::new(2, 10.0, 2048, 1.0, 0.5, ProfileSpec::gaussian(m, 1.0));
            c.output_stride = 500;
            let s = run(&c, quiet)?;
            let pts: Vec<(f64, f64)> = s.records.iter().map(|r| (r.t, r.m2)).collect();
            Ok((m, slope(&pts)))
        })
        .collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for r in runs {
        let (m, fitted) = r?;
        let want = 4.0 * m * (1.0 - m / (8.0 * PI));
        if want.abs() > 0.0 && (m - 8.0 * PI).abs() > 1e-9 {
            let e = rel(fitted, want);
            pass &= e <= 2e-2;
            parts.push(format!("M={:.0}π rel {e:.2e}", m / PI));
        } else {
            let e = fitted.abs() / (4.0 * m);
            pass &= e <= 2e-2;
            parts.push(format!("M=8π |slope|/4M {e:.2e}"));
        }
    }
    Ok((pass, format!("{} (tol 2e-2)", parts.join(", "))))
}

/// The small-mass run behind criteria 10 and 11.
struct SmallMassRun {
    records: Vec<DiagnosticsRecord>,
    snapshots: Vec<(f64, RadialField)>,
    predicted: f64,
}

fn small_mass_run() -> Result<SmallMassRun> {
    let m = crate::bounds::epsilon_2() / 2.0;
    let predicted = SmallMassConstants::new(2, m)?
        .predicted_delta_constant()
        .expect("half the threshold is below it");
    let mut c = SolverConfig::new(2, 16.0, 4096, 1.0, 1.0, ProfileSpec::gaussian(m, 0.05));
    c.output_stride = 500;
    c.snapshot_times = (1..=20).map(|k| 0.05 * k as f64).collect();
    let mut snapshots = Vec::new();
    let s = run(&c, |e| {
        if let RunEvent::Snapshot { t, rho } = e {
            snapshots.push((t, rho.clone()));
        }
        Ok(())
    })?;
    Ok(SmallMassRun { records: s.records, snapshots, predicted })
}

fn small_mass_pair() -> Vec<CriterionResult> {
    let start = Instant::now();
    let run = small_mass_run();
    let seconds = start.elapsed().as_secs_f64();
    [10u8, 11]
        .iter()
        .map(|&id| {
            let outcome = match &run {
                Ok(r) if id == 10 => r.criterion_10(),
                Ok(r) => r.criterion_11(),
                Err(e) => Ok((false, format!("error: {e}"))),
            };
            let (pass, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
            CriterionResult { id, name: name(id), pass, detail, seconds }
        })
        .collect()
}

impl SmallMassRun {
    fn criterion_10(&self) -> Outcome {
        let r0 = &self.records[0];
        let drift = self
            .records
            .iter()
            .map(|r| (r.mass - r0.mass).abs() / r0.mass)
            .fold(0.0, f64::max);
        let tol_f = 1e-6 * (1.0 + r0.free_energy.abs());
        let rise = self
            .records
            .windows(2)
            .map(|w| w[1].free_energy - w[0].free_energy)
            .fold(f64::NEG_INFINITY, f64::max);
        let window: Vec<&DiagnosticsRecord> = self.records.iter().filter(|r| r.t >= 0.05).collect();
        let sup_linf = window.iter().map(|r| r.t_linf).fold(0.0, f64::max);
        let c_emp = -window.iter().map(|r| r.t_delta).fold(f64::INFINITY, f64::min);
        let entropy = entropy_decay_check(&self.records);
        let blowup = detect_blowup(&self.records, 1.0);
        let pass = drift <= MASS_TOL
            && rise <= tol_f
            && sup_linf.is_finite()
            && c_emp <= 2.0 * self.predicted
            && entropy.bounded
            && !blowup.detected;
        Ok((
            pass,
            format!(
                "mass drift {drift:.1e} (tol 1e-10), max F increase {rise:.1e} (tol {tol_f:.1e}), \
                 sup t·|ρ|∞ = {sup_linf:.4}, C = -inf t·δ = {c_emp:.4} (limit 2×{:.4}), entropy c0 = {:.3}",
                self.predicted, entropy.c0
            ),
        ))
    }

    fn criterion_11(&self) -> Outcome {
        let mut worst = f64::INFINITY;
        let mut pass = !self.snapshots.is_empty();
        for (_, rho) in &self.snapshots {
            let delta = v_and_delta(rho, fields::default_floor(rho))?.delta;
            let rep = check_q_inequality_2d(rho, delta, 0.05)?;
            pass &= rep.pass();
            worst = worst.min(rep.q_bound.margin.min(rep.laplacian_bound.margin));
        }
        Ok((pass, format!("{} snapshots, smallest margin {worst:.3e} (slack 5%)", self.snapshots.len())))
    }
}

fn stationarity() -> Outcome {
    let n = 4096;
    let radius = direct_profile(3, 64, &tol())?.radius;
    let mut c = SolverConfig::new(3, 1.25 * radius, n, 1.0, 1.0, ProfileSpec::lane_emden_stationary(1.0));
    c.output_stride = 100_000;
    c.snapshot_times = (0..=20).map(|k| 0.05 * k as f64).collect();
    let reference = crate::evolve::init_profile(&c)?.rho;
    let scale = reference.max();
    let mut worst: f64 = 0.0;
    run(&c, |e| {
        if let RunEvent::Snapshot { rho, .. } = e {
            let dev = rho
                .values()
                .iter()
                .zip(reference.values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(dev / scale);
        }
        Ok(())
    })?;
    Ok((worst <= 1e-3, format!("max over t in [0, 1] of |ρ - ρ̄|∞/|ρ̄|∞ = {worst:.2e} (tol 1e-3)")))
}

fn supercritical_blowup() -> Outcome {
    let mut c = SolverConfig::new(2, 10.0, 2048, 1.0, 1.0, ProfileSpec::gaussian(10.0 * PI, 0.7));
    c.output_stride = 200;
    let s = run(&c, quiet)?;
    let pts: Vec<(f64, f64)> = s.records.iter().map(|r| (r.t, r.m2)).collect();
    let fitted = slope(&pts);
    let fired = s.blowup.detected && s.final_state.t < c.t_end;
    let channels: Vec<&str> = s
        .blowup
        .channels
        .iter()
        .map(|ch| match ch {
            BlowupChannel::Linf { .. } => "linf",
            BlowupChannel::DtCollapse { .. } => "dt",
            BlowupChannel::SecondMomentDecrease { .. } => "m2",
        })
        .collect();
    Ok((
        fired && fitted < 0.0,
        format!(
            "fired at t = {:.4} via [{}], fitted dm2/dt = {fitted:.3} (exact -10π = {:.3})",
            s.final_state.t,
            channels.join(", "),
            -10.0 * PI
        ),
    ))
}
