//! Explicit small-mass constants, the `δ` comparison curve and pointwise
//! inequality checkers.
//!
//! In `d = 2` every constant is closed form. For `d > 2` the bound
//! `Q(u) ≤ C₁(M)|δ|` is instantiated by running the Hölder/cutoff chain with
//! explicit constants (cubic cutoff, `‖ρ‖₂ ≤ (Mδ̄)^{1/2}`) and minimising over
//! the cutoff radius numerically.

use std::f64::consts::{E, PI};

use serde::Serialize;

use crate::error::{KsError, Result};
use crate::fields::{
    ball_volume, critical_exponent, mass, q_of_u, sphere_area, RadialField,
};

/// Prefactor `C` of `‖ρ‖∞ ≤ C (M/ω_d)^{2/d} |δ̃|` (d > 2), obtained by
/// evaluating the subharmonic bound at `r = (α/β)^{1/d}`:
/// `2^{d/(d−2)}(d−2)/(4(d−1)(d+2))`.
pub fn naive_linf_prefactor(dim: usize) -> f64 {
    let d = dim as f64;
    2f64.powf(d / (d - 2.0)) * (d - 2.0) / (4.0 * (d - 1.0) * (d + 2.0))
}

/// `C` in `‖ρ‖∞ ≤ C|δ̃|` before the `C/(1−C)` closure.
fn naive_linf_constant(dim: usize, m: f64) -> f64 {
    if dim == 2 {
        E * m / (8.0 * PI)
    } else {
        naive_linf_prefactor(dim) * (m / ball_volume(dim)).powf(2.0 / dim as f64)
    }
}

fn require_mass(m: f64) -> Result<()> {
    if !(m >= 0.0) || !m.is_finite() {
        return Err(KsError::Domain(format!("mass must be finite and >= 0, got {m}")));
    }
    Ok(())
}

fn require_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(KsError::Domain(format!("dimension must be >= 2, got {dim}")));
    }
    Ok(())
}

/// `C₀(M)` with `‖ρ‖∞ ≤ C₀(M)|δ|`.
pub fn c0_small_mass(dim: usize, m: f64) -> Result<f64> {
    require_dim(dim)?;
    require_mass(m)?;
    let c = naive_linf_constant(dim, m);
    if c >= 1.0 {
        return Err(KsError::FormulaInapplicable(format!(
            "small-mass L∞ bound needs C < 1, got C = {c} (d = {dim}, M = {m})"
        )));
    }
    Ok(c / (1.0 - c))
}

/// Mass at which the small-mass `L∞` bound degenerates (`C = 1`).
pub fn c0_pole(dim: usize) -> f64 {
    if dim == 2 {
        8.0 * PI / E
    } else {
        ball_volume(dim) * naive_linf_prefactor(dim).powf(-(dim as f64) / 2.0)
    }
}

/// Bound on `Q(u)/δ̄` from the `d > 2` chain with cutoff radius `s δ̄^{−1/d}`
/// and `‖ρ‖₂ = (Mδ̄)^{1/2}`; every term is linear in `δ̄`, so `δ̄ = 1` here.
pub fn q_chain_bound(dim: usize, m: f64, s: f64) -> f64 {
    let d = dim as f64;
    let sigma = sphere_area(dim);
    let omega = ball_volume(dim);
    let mexp = critical_exponent(dim);
    let l = m.sqrt();
    let r = s;
    // Cubic cutoff over a shell of width R.
    let grad_chi = 1.5 / r;
    let lap_chi = (6.0 + 1.5 * (d - 1.0)) / (r * r);

    // Source term of the Laplacian lemma, weighted by r^{2−d} on B_{2R}.
    let holder = (sigma * (d - 1.0) / d).powf((d - 1.0) / d);
    let i1 = (2.0 / mexp) * l.powf(2.0 / d) * 2.0 * r * holder;

    // Mass on the annulus R < |x| < 2R.
    let ann = l * (omega * (2f64.powf(d) - 1.0)).sqrt() * r.powf(d / 2.0);
    // Local Fisher information on B_{2R} (cutoff on [2R, 3R]).
    let ann2 = l * (omega * (3f64.powf(d) - 2f64.powf(d))).sqrt() * r.powf(d / 2.0);
    let src3 = (2.0 / mexp) * l.powf(2.0 / d) * (omega * 3f64.powf(d) * r.powf(d)).powf((d - 1.0) / d);
    let fisher = (d / 2.0) * (lap_chi * ann2 + src3);
    let i2 = r.powf(2.0 - d) * 2.0 * grad_chi * (ann * fisher).sqrt();
    let i3 = r.powf(2.0 - d) * lap_chi * ann;

    let a = (i1 + i2 + i3) / d;
    let b = l * (sigma / (d * r.powf(d))).sqrt();
    d / sigma * (a + b)
}

/// `min_R` of the `d > 2` chain: `Q(u) ≤ K(M) δ̄`.
pub fn q_constant_multid(dim: usize, m: f64) -> Result<f64> {
    if dim < 3 {
        return Err(KsError::Domain(format!("the cutoff chain is for d > 2, got {dim}")));
    }
    require_mass(m)?;
    if m == 0.0 {
        return Ok(0.0);
    }
    // Golden-section search in log R.
    let f = |x: f64| q_chain_bound(dim, m, x.exp());
    let (mut a, mut b) = (-12.0_f64, 12.0_f64);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut c, mut e) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fe) = (f(c), f(e));
    while b - a > 1e-10 {
        if fc < fe {
            b = e;
            e = c;
            fe = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + g * (b - a);
            fe = f(e);
        }
    }
    Ok(fc.min(fe))
}

/// `C₁(M)` with `Q(u) ≤ C₁(M)|δ|`.
pub fn c1_small_mass(dim: usize, m: f64) -> Result<f64> {
    let c0 = c0_small_mass(dim, m)?;
    if dim == 2 {
        Ok(2.0 * m / (4.0 * PI) * (c0 + 1.0))
    } else {
        // δ̄ = max(|δ|, ‖ρ‖∞) ≤ max(1, C₀)|δ|.
        Ok(q_constant_multid(dim, m)? * c0.max(1.0))
    }
}

/// Constants of the small-mass argument at `(d, M)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmallMassConstants {
    pub dim: usize,
    pub mass: f64,
    pub c0: f64,
    pub c1: f64,
    /// `(d−1)²/(2d) C₁² < 1`.
    pub threshold_ok: bool,
    /// `1 − (d−1)²/(2d) C₁²`, the prefactor in `δ′ ≥ c δ²`.
    pub coefficient: f64,
}

impl SmallMassConstants {
    pub fn new(dim: usize, m: f64) -> Result<Self> {
        let c0 = c0_small_mass(dim, m)?;
        let c1 = c1_small_mass(dim, m)?;
        let d = dim as f64;
        let coefficient = 1.0 - (d - 1.0).powi(2) / (2.0 * d) * c1 * c1;
        Ok(Self {
            dim,
            mass: m,
            c0,
            c1,
            threshold_ok: coefficient > 0.0,
            coefficient,
        })
    }

    /// `C` in the predicted lower bound `δ(t) ≥ −C/t`.
    pub fn predicted_delta_constant(&self) -> Option<f64> {
        self.threshold_ok.then(|| 1.0 / self.coefficient)
    }
}

/// Threshold `ε₂ = 8π/(2+e)`.
pub fn epsilon_2() -> f64 {
    8.0 * PI / (2.0 + E)
}

/// Largest `M` with `(d−1)²/(2d) C₁(M)² < 1`, by bisection on `[0, pole)`.
pub fn epsilon_threshold_bisect(dim: usize) -> Result<f64> {
    require_dim(dim)?;
    let ok = |m: f64| SmallMassConstants::new(dim, m).map(|c| c.threshold_ok).unwrap_or(false);
    let (mut lo, mut hi) = (0.0, c0_pole(dim));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(lo)
}

/// Small-mass threshold `ε_d`: closed form in `d = 2`, bisection otherwise.
pub fn epsilon_threshold(dim: usize) -> Result<f64> {
    require_dim(dim)?;
    if dim == 2 {
        Ok(epsilon_2())
    } else {
        epsilon_threshold_bisect(dim)
    }
}

/// Comparison solution of `δ′ ≥ cδ²`: `max(δ₀, −1/(ct))`.
/// `δ₀ = −∞` stands for measure initial data.
pub fn delta_comparison(t: f64, c: f64, delta0: f64) -> Result<f64> {
    if !(t > 0.0 && c > 0.0) {
        return Err(KsError::Domain(format!("need t > 0 and c > 0, got t = {t}, c = {c}")));
    }
    Ok(delta0.max(-1.0 / (c * t)))
}

/// `(d² + 4)/(d(d + 2))`.
pub fn subcritical_q_exponent(dim: usize) -> Result<f64> {
    if dim < 3 {
        return Err(KsError::Domain(format!("exponent defined for d >= 3, got {dim}")));
    }
    let d = dim as f64;
    Ok((d * d + 4.0) / (d * (d + 2.0)))
}

/// One inequality `lhs ≤ rhs`, evaluated on data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub inequality: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`.
    pub margin: f64,
    pub pass: bool,
}

impl InequalityReport {
    /// Passes when `lhs ≤ (1 + slack) rhs`, up to rounding.
    pub fn new(inequality: impl Into<String>, lhs: f64, rhs: f64, slack: f64) -> Self {
        let allowance = slack * rhs.abs() + 1e-12 * lhs.abs().max(rhs.abs());
        Self {
            inequality: inequality.into(),
            lhs,
            rhs,
            margin: rhs - lhs,
            pass: lhs <= rhs + allowance,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// `‖Δ_h ρ‖₁` over all cells but the outermost.
pub fn laplacian_l1(rho: &RadialField) -> f64 {
    let grid = rho.grid();
    let lap = grid.laplacian(rho.values());
    let n = grid.n_cells();
    grid.sphere_area()
        * (0..n - 1).map(|i| lap[i].abs() * grid.cell_volume(i)).sum::<f64>()
}

/// Both halves of the `d = 2` estimate:
/// `Q(u) ≤ ‖Δρ‖₁/4π` and `‖Δρ‖₁ ≤ 2M|δ| + 2M‖ρ‖∞`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QInequality2d {
    pub q_bound: InequalityReport,
    pub laplacian_bound: InequalityReport,
}

impl QInequality2d {
    pub fn pass(&self) -> bool {
        self.q_bound.pass && self.laplacian_bound.pass
    }
}

pub fn check_q_inequality_2d(rho: &RadialField, delta: f64, slack: f64) -> Result<QInequality2d> {
    if rho.grid().dim() != 2 {
        return Err(KsError::Domain("check_q_inequality_2d needs d = 2".into()));
    }
    let q = q_of_u(rho)?;
    let l1 = laplacian_l1(rho);
    let m = mass(rho)?;
    let linf = rho.max();
    Ok(QInequality2d {
        q_bound: InequalityReport::new("Q(u) <= |Δρ|_1/(4π)", q, l1 / (4.0 * PI), slack),
        laplacian_bound: InequalityReport::new(
            "|Δρ|_1 <= 2M|δ| + 2M|ρ|_∞",
            l1,
            2.0 * m * delta.abs() + 2.0 * m * linf,
            slack,
        ),
    })
}

/// Worst cell of `Δρ ≥ −(2/m) δ̄ ρ^{2/d}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaplacianLowerReport {
    /// `lhs = −Δ_h ρ`, `rhs = (2/m) δ̄ ρ^{2/d}` at the worst cell.
    pub report: InequalityReport,
    pub radius: f64,
}

/// Pointwise check of `Δ_h ρ + (2/m) δ̄ ρ^{2/d} ≥ −tolerance` with
/// `δ̄ = max(|δ|, ‖ρ‖∞)`; the outermost cell is skipped.
pub fn check_laplacian_lower(rho: &RadialField, delta: f64, tolerance: f64) -> LaplacianLowerReport {
    let grid = rho.grid();
    let d = grid.dim() as f64;
    let k = 2.0 / critical_exponent(grid.dim());
    let dbar = delta.abs().max(rho.max());
    let lap = grid.laplacian(rho.values());
    let mut worst = (0usize, f64::INFINITY);
    for i in 0..grid.n_cells() - 1 {
        let margin = lap[i] + k * dbar * rho.values()[i].max(0.0).powf(2.0 / d);
        if margin < worst.1 {
            worst = (i, margin);
        }
    }
    let i = worst.0;
    let rhs = k * dbar * rho.values()[i].max(0.0).powf(2.0 / d);
    let lhs = -lap[i];
    LaplacianLowerReport {
        report: InequalityReport {
            inequality: "-Δρ <= (2/m) δbar ρ^(2/d)".into(),
            lhs,
            rhs,
            margin: rhs - lhs,
            pass: rhs - lhs >= -tolerance,
        },
        radius: grid.center(i),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn c0_at_half_pole() {
        let c0 = c0_small_mass(2, 4.0 * PI / E).unwrap();
        assert!((c0 - 1.0).abs() < 1e-14);
        assert!(c0_small_mass(2, 1e-12).unwrap() < 1e-12);
        assert!(matches!(c0_small_mass(2, 8.0 * PI / E), Err(KsError::FormulaInapplicable(_))));
    }

    #[test]
    fn eps2_value() {
        let e = epsilon_threshold(2).unwrap();
        assert!((e - 8.0 * PI / (2.0 + E)).abs() < 1e-10);
        assert!((e - 5.3267).abs() < 5e-5);
    }

    #[test]
    fn comparison_examples() {
        assert_eq!(delta_comparison(2.0, 1.0, f64::NEG_INFINITY).unwrap(), -0.5);
        assert_eq!(delta_comparison(1.0, 1.0, -0.1).unwrap(), -0.1);
        assert!((delta_comparison(10.0, 0.5, f64::NEG_INFINITY).unwrap() + 0.2).abs() < 1e-15);
        assert!(delta_comparison(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn exponents() {
        assert!((subcritical_q_exponent(3).unwrap() - 13.0 / 15.0).abs() < 1e-15);
        assert!((subcritical_q_exponent(4).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        assert!(subcritical_q_exponent(2).is_err());
    }

    #[test]
    fn report_json_keys() {
        let r = InequalityReport::new("a <= b", 1.0, 2.0, 0.0);
        assert_eq!(r.to_json(), r#"{"inequality":"a <= b","lhs":1.0,"rhs":2.0,"margin":1.0,"pass":true}"#);
    }
}
