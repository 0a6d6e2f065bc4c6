//! Shooting for the normalized Lane–Emden control family
//!
//! ```text
//! f″ + (d−1)f′/r + f₊^q = 0,   q = d/(d−2),
//! f = 1 on [0, γ],   f(γ) = 1,   f′(γ) = −γ/d,
//! ```
//!
//! stopped at the first zero `R(γ)`. The radial mass
//! `M(γ) = γ^d/d + ∫_γ^R r^{d−1} f^q` (plateau included, no angular factor)
//! is carried as a third state component so that it can be compared with the
//! flux form `−R^{d−1} f′(R)`.

use rayon::prelude::*;

use crate::error::{KsError, Result};
use crate::fields::{critical_exponent, sphere_area, RadialField, RadialGrid};
use crate::io::csv_table;
use crate::ode::{integrate, Tolerances, Trajectory};

/// Radius up to which the `γ = 0` start uses the Taylor expansion.
pub const TAYLOR_RADIUS: f64 = 1e-3;
/// `|f(R)|` accepted by the zero search.
pub const EVENT_TOL: f64 = 1e-12;
/// Horizon guard, in multiples of the a-priori radius estimate.
pub const HORIZON_FACTOR: f64 = 10.0;

/// `q = d/(d−2)`.
pub fn lane_emden_exponent(dim: usize) -> f64 {
    dim as f64 / (dim as f64 - 2.0)
}

fn require_dim(dim: usize) -> Result<()> {
    if dim < 3 {
        return Err(KsError::Domain(format!("Lane–Emden shooting needs d >= 3, got {dim}")));
    }
    Ok(())
}

/// Rough radius scale: `γ` plus twice the zero of the quadratic start
/// `1 − r²/(2d)`.
fn radius_estimate(dim: usize, gamma: f64, coeff: f64, f0: f64) -> f64 {
    let d = dim as f64;
    let q = lane_emden_exponent(dim);
    gamma + 2.0 * (2.0 * d * f0.powf(1.0 - q) / coeff).sqrt()
}

/// Solution of `f″ + (d−1)f′/r + c f₊^q = 0` from a plateau `f ≡ f0` on
/// `[0, γ]`, shared by [`shoot`] (`c = 1`, `f0 = 1`) and [`direct_profile`].
#[derive(Debug, Clone)]
struct Profile {
    dim: usize,
    coeff: f64,
    f0: f64,
    gamma: f64,
    /// First integration radius (`γ`, or [`TAYLOR_RADIUS`] when `γ = 0`).
    start: f64,
    radius: f64,
    mass: f64,
    horizon: f64,
    traj: Trajectory<3>,
}

impl Profile {
    fn solve(dim: usize, coeff: f64, f0: f64, gamma: f64, tol: &Tolerances) -> Result<Self> {
        require_dim(dim)?;
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(KsError::Domain(format!("gamma must be >= 0, got {gamma}")));
        }
        let d = dim as f64;
        let q = lane_emden_exponent(dim);
        let (start, y0) = if gamma == 0.0 {
            let r = TAYLOR_RADIUS;
            let a = coeff * f0.powf(q) / (2.0 * d);
            let b = coeff * coeff * q * f0.powf(2.0 * q - 1.0) / (8.0 * d * (d + 2.0));
            let f = f0 - a * r * r + b * r.powi(4);
            let fp = -2.0 * a * r + 4.0 * b * r.powi(3);
            let mass = f0.powf(q) * r.powf(d) / d - 4.0 * b * r.powf(d + 2.0) / coeff;
            (r, [f, fp, mass])
        } else {
            let mass = f0.powf(q) * gamma.powf(d) / d;
            (gamma, [f0, -coeff * mass / gamma.powf(d - 1.0), mass])
        };
        let horizon = HORIZON_FACTOR * radius_estimate(dim, gamma, coeff, f0);
        let rhs = move |r: f64, y: &[f64; 3]| {
            let fq = y[0].max(0.0).powf(q);
            let w = r.powf(d - 1.0);
            [y[1], -(d - 1.0) * y[1] / r - coeff * fq, w * fq]
        };
        let event = Some((|_: f64, y: &[f64; 3]| y[0], EVENT_TOL));
        let mut traj = integrate(rhs, start, y0, horizon, tol, event)?;
        let (t_event, _) = traj.event.ok_or(KsError::NoFirstZero { dim, gamma, horizon })?;

        // The accepted step that crossed the zero sampled f₊^q past its kink;
        // redo it so that every stage lies inside the support, then polish
        // the zero with one Newton step.
        let k = traj.t.len() - 2;
        let no_event = None::<(fn(f64, &[f64; 3]) -> f64, f64)>;
        let last = integrate(rhs, traj.t[k], traj.y[k], t_event, tol, no_event)?;
        let mut y = last.y_final();
        let radius = t_event - y[0] / y[1];
        let shift = radius - t_event;
        y[1] += shift * (-(d - 1.0) * y[1] / t_event);
        y[0] = 0.0;
        traj.t.truncate(k);
        traj.y.truncate(k);
        traj.segments.truncate(k);
        traj.t.extend(&last.t);
        traj.y.extend(&last.y);
        traj.segments.extend(last.segments);
        *traj.t.last_mut().expect("nonempty") = radius;
        *traj.y.last_mut().expect("nonempty") = y;
        traj.event = Some((radius, y));
        Ok(Self {
            dim,
            coeff,
            f0,
            gamma,
            start,
            radius,
            mass: y[2],
            horizon,
            traj,
        })
    }

    /// `(f, f′)` at `r`, extended by the plateau (or Taylor start) and by 0.
    fn eval(&self, r: f64) -> (f64, f64) {
        if r >= self.radius {
            return (0.0, 0.0);
        }
        if r <= self.start {
            if self.gamma > 0.0 {
                return if r < self.gamma { (self.f0, 0.0) } else { (self.traj.y[0][0], self.traj.y[0][1]) };
            }
            let d = self.dim as f64;
            let q = lane_emden_exponent(self.dim);
            let a = self.coeff * self.f0.powf(q) / (2.0 * d);
            let b = self.coeff * self.coeff * q * self.f0.powf(2.0 * q - 1.0) / (8.0 * d * (d + 2.0));
            return (self.f0 - a * r * r + b * r.powi(4), -2.0 * a * r + 4.0 * b * r.powi(3));
        }
        let y = self.traj.eval(r).unwrap_or_else(|| self.traj.y_final());
        (y[0], y[1])
    }

    fn flux_mass(&self) -> f64 {
        let fp = self.traj.y_final()[1];
        -self.radius.powf(self.dim as f64 - 1.0) * fp / self.coeff
    }
}

/// Result of [`shoot`].
#[derive(Debug, Clone)]
pub struct ShootingSolution {
    profile: Profile,
}

impl ShootingSolution {
    pub fn dim(&self) -> usize {
        self.profile.dim
    }

    pub fn gamma(&self) -> f64 {
        self.profile.gamma
    }

    /// First zero `R(γ)`.
    pub fn radius(&self) -> f64 {
        self.profile.radius
    }

    /// `∫₀^R r^{d−1} f₊^q`, plateau included.
    pub fn radial_mass(&self) -> f64 {
        self.profile.mass
    }

    /// Boundary-flux form of the mass, `−R^{d−1} f′(R)`.
    pub fn flux_mass(&self) -> f64 {
        self.profile.flux_mass()
    }

    /// Horizon used by the zero search.
    pub fn horizon(&self) -> f64 {
        self.profile.horizon
    }

    pub fn f_at(&self, r: f64) -> f64 {
        self.profile.eval(r).0
    }

    pub fn fprime_at(&self, r: f64) -> f64 {
        self.profile.eval(r).1
    }

    /// Integrator nodes `(r, f, f′)` on `[start, R]`, preceded by the
    /// origin value.
    pub fn samples(&self) -> Vec<[f64; 3]> {
        let p = &self.profile;
        let mut out = vec![[0.0, 1.0, 0.0]];
        out.extend(p.traj.t.iter().zip(&p.traj.y).map(|(&r, y)| [r, y[0], y[1]]));
        out
    }

    /// CSV dump with header `r,f,fprime`.
    pub fn to_csv(&self) -> String {
        let rows = self.samples();
        csv_table(&["r", "f", "fprime"], rows.iter().map(|r| r.as_slice()))
    }
}

/// Shoot the normalized family at parameter `γ`.
pub fn shoot(dim: usize, gamma: f64, tol: &Tolerances) -> Result<ShootingSolution> {
    Profile::solve(dim, 1.0, 1.0, gamma, tol).map(|profile| ShootingSolution { profile })
}

/// One row of [`mass_curve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassCurvePoint {
    pub gamma: f64,
    pub mass: f64,
    pub radius: f64,
}

/// `M(γ)` and `R(γ)` over a grid of `γ`, sorted by `γ`.
pub fn mass_curve(dim: usize, gammas: &[f64], tol: &Tolerances) -> Result<Vec<MassCurvePoint>> {
    let mut sorted = gammas.to_vec();
    if sorted.iter().any(|g| !g.is_finite()) {
        return Err(KsError::Domain("gamma grid contains non-finite values".into()));
    }
    sorted.sort_by(f64::total_cmp);
    sorted
        .par_iter()
        .map(|&gamma| {
            shoot(dim, gamma, tol).map(|s| MassCurvePoint {
                gamma,
                mass: s.radial_mass(),
                radius: s.radius(),
            })
        })
        .collect()
}

/// CSV with header `gamma,M,R`.
pub fn mass_curve_csv(points: &[MassCurvePoint]) -> String {
    let rows: Vec<[f64; 3]> = points.iter().map(|p| [p.gamma, p.mass, p.radius]).collect();
    csv_table(&["gamma", "M", "R"], rows.iter().map(|r| r.as_slice()))
}

/// Result of [`variation`].
#[derive(Debug, Clone)]
pub struct VariationSolution {
    /// `(r, w, w′)` on `[γ, R]`.
    pub samples: Vec<[f64; 3]>,
    pub dm_dgamma: f64,
}

/// Derivative `w = ∂_γ f` and `M′(γ) = −R^{d−1} w′(R)`.
pub fn variation(sol: &ShootingSolution, tol: &Tolerances) -> Result<VariationSolution> {
    let gamma = sol.gamma();
    if gamma <= 0.0 {
        return Err(KsError::Degenerate(
            "variation at gamma = 0 has w(0) = w'(0) = 0, so w vanishes identically".into(),
        ));
    }
    let d = sol.dim() as f64;
    let q = lane_emden_exponent(sol.dim());
    let radius = sol.radius();
    let rhs = move |r: f64, y: &[f64; 4]| {
        let f = y[0].max(0.0);
        [
            y[1],
            -(d - 1.0) * y[1] / r - f.powf(q),
            y[3],
            -(d - 1.0) * y[3] / r - q * f.powf(q - 1.0) * y[2],
        ]
    };
    let y0 = [1.0, -gamma / d, gamma / d, 0.0];
    let no_event = None::<(fn(f64, &[f64; 4]) -> f64, f64)>;
    let traj = integrate(rhs, gamma, y0, radius, tol, no_event)?;
    let samples = traj.t.iter().zip(&traj.y).map(|(&r, y)| [r, y[2], y[3]]).collect();
    let dm_dgamma = -radius.powf(d - 1.0) * traj.y_final()[3];
    Ok(VariationSolution { samples, dm_dgamma })
}

/// Result of [`adjoint_check`].
#[derive(Debug, Clone)]
pub struct AdjointSolution {
    /// `(r, p₁, p₂)` from `R₀` down to `r₀`.
    pub samples: Vec<[f64; 3]>,
    pub r0: f64,
    pub horizon: f64,
    /// Largest radius at which `p₁` changes sign, if any.
    pub sign_switch: Option<f64>,
}

/// Backward integration of the adjoint pair from `p₁(R₀) = 0, p₂(R₀) = −1`.
///
/// `R₀` is the solution's horizon; on `(R, R₀)` the adjoint is constant
/// because `f₊` vanishes there.
pub fn adjoint_check(sol: &ShootingSolution, r0: f64, tol: &Tolerances) -> Result<AdjointSolution> {
    let radius = sol.radius();
    if !(r0 > 0.0 && r0 < radius) {
        return Err(KsError::Domain(format!("need 0 < r0 < R = {radius}, got {r0}")));
    }
    let d = sol.dim() as f64;
    let q = lane_emden_exponent(sol.dim());
    let horizon = sol.horizon();
    let mut samples = vec![[horizon, 0.0, -1.0], [radius, 0.0, -1.0]];

    // Split at the kinks of f′ (plateau edge and Taylor start) so that each
    // leg has a smooth right-hand side.
    let mut breaks = vec![radius];
    let inner = sol.profile.start;
    if inner > r0 {
        breaks.push(inner);
    }
    breaks.push(r0);

    let mut state = [0.0, -1.0];
    let no_event = None::<(fn(f64, &[f64; 2]) -> f64, f64)>;
    for leg in breaks.windows(2) {
        let rhs = |r: f64, p: &[f64; 2]| {
            let f = sol.f_at(r).max(0.0);
            let w = r.powf(d - 1.0);
            [-q * p[1] * w * f.powf(q - 1.0), -(-p[0]).max(0.0) / w]
        };
        let traj = integrate(rhs, leg[0], state, leg[1], tol, no_event)?;
        samples.extend(traj.t.iter().zip(&traj.y).skip(1).map(|(&r, p)| [r, p[0], p[1]]));
        state = traj.y_final();
    }

    // Samples run from large to small r; the first strictly positive p₁
    // closes the negative stretch below R.
    let sign_switch = samples.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        (a[1] <= 0.0 && b[1] > 0.0).then(|| {
            if a[1] == 0.0 {
                a[0]
            } else {
                a[0] + (b[0] - a[0]) * a[1] / (a[1] - b[1])
            }
        })
    });
    // Ignore the trivial zero stretch on [R, R₀].
    let sign_switch = sign_switch.filter(|&s| s < radius);
    Ok(AdjointSolution {
        samples,
        r0,
        horizon,
        sign_switch,
    })
}

/// Result of [`substitution_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubstitutionReport {
    /// `max |(d−2)² u″ + u^q/s²|` over the interior, scaled by `max u^q/s²`.
    pub max_residual: f64,
    /// `u(γ^{d−2})`.
    pub u_start: f64,
    /// Largest sampled `u″`, scaled like the residual.
    pub max_u_second: f64,
    pub concave: bool,
}

/// Default number of uniform `s` nodes for [`substitution_check`].
pub const SUBSTITUTION_NODES: usize = 512;

/// Rewrites the solution as `u(s) = r^{d−2} f(r)`, `s = r^{d−2}`, and
/// evaluates the residual of `(d−2)² u″ + u^q/s² = 0` with a five-point
/// stencil on `nodes` uniform `s` points (at least 8).
pub fn substitution_check(sol: &ShootingSolution, nodes: usize) -> SubstitutionReport {
    let d = sol.dim() as f64;
    let q = lane_emden_exponent(sol.dim());
    let e = d - 2.0;
    let s_lo = sol.gamma().powf(e);
    let s_hi = sol.radius().powf(e);
    let n = nodes.max(8);
    let h = (s_hi - s_lo) / (n - 1) as f64;
    let u = |s: f64| {
        if s <= 0.0 {
            0.0
        } else {
            s * sol.f_at(s.powf(1.0 / e))
        }
    };
    let s: Vec<f64> = (0..n).map(|k| s_lo + h * k as f64).collect();
    let uv: Vec<f64> = s.iter().map(|&x| u(x)).collect();

    let mut scale = 0.0_f64;
    let mut pairs = Vec::with_capacity(n);
    for k in 2..n - 2 {
        let upp = (-uv[k - 2] + 16.0 * uv[k - 1] - 30.0 * uv[k] + 16.0 * uv[k + 1] - uv[k + 2])
            / (12.0 * h * h);
        let source = uv[k].max(0.0).powf(q) / (s[k] * s[k]);
        scale = scale.max(source);
        pairs.push((e * e * upp, source));
    }
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let max_residual = pairs.iter().map(|(a, b)| (a + b).abs()).fold(0.0, f64::max) / scale;
    let max_u_second = pairs.iter().map(|(a, _)| *a).fold(f64::NEG_INFINITY, f64::max) / scale;
    SubstitutionReport {
        max_residual,
        u_start: uv[0],
        max_u_second,
        concave: max_u_second <= 1e-6,
    }
}

/// `m/(m−1) = 2(d−1)/(d−2)` for the critical exponent.
pub fn pressure_coefficient(dim: usize) -> f64 {
    let m = critical_exponent(dim);
    m / (m - 1.0)
}

/// Critical mass of the subsolution problem: `σ_d μ^q M(0)` with
/// `μ = (m/(m−1))^{(d−2)/2}`.
pub fn critical_mass_sub(dim: usize, tol: &Tolerances) -> Result<f64> {
    let sol = shoot(dim, 0.0, tol)?;
    let q = lane_emden_exponent(dim);
    let mu = pressure_coefficient(dim).powf((dim as f64 - 2.0) / 2.0);
    Ok(sphere_area(dim) * mu.powf(q) * sol.radial_mass())
}

/// Result of [`direct_profile`].
#[derive(Debug, Clone)]
pub struct DirectProfile {
    /// `ρ̄ = h^q` on a grid covering the support.
    pub rho: RadialField,
    /// `σ_d ∫ r^{d−1} h^q`, accumulated by the integrator.
    pub mass: f64,
    /// Support radius.
    pub radius: f64,
}

/// Shoot `(m/(m−1)) Δh + h₊^q = 0` from `h(0) = h0`, `h′(0) = 0`.
///
/// The density is sampled on `n_cells` cells over `[0, r_max]`; `r_max`
/// defaults to `1.25 R` and must not be smaller than `R`.
pub fn direct_profile_scaled(
    dim: usize,
    h0: f64,
    n_cells: usize,
    r_max: Option<f64>,
    tol: &Tolerances,
) -> Result<DirectProfile> {
    if !(h0 > 0.0) {
        return Err(KsError::Domain(format!("h(0) must be positive, got {h0}")));
    }
    let k = pressure_coefficient(dim.max(3));
    let p = Profile::solve(dim, 1.0 / k, h0, 0.0, tol)?;
    let r_max = r_max.unwrap_or(1.25 * p.radius);
    if r_max < p.radius {
        return Err(KsError::Domain(format!("r_max = {r_max} does not cover the support R = {}", p.radius)));
    }
    let q = lane_emden_exponent(dim);
    let grid = RadialGrid::new(dim, r_max, n_cells)?;
    let rho = grid.sample(|r| p.eval(r).0.max(0.0).powf(q));
    Ok(DirectProfile {
        rho,
        mass: sphere_area(dim) * p.mass,
        radius: p.radius,
    })
}

/// [`direct_profile_scaled`] with `h(0) = 1`.
pub fn direct_profile(dim: usize, n_cells: usize, tol: &Tolerances) -> Result<DirectProfile> {
    direct_profile_scaled(dim, 1.0, n_cells, None, tol)
}

/// Closed-form Liouville solution `log(8λ/(λ+r²)²)`.
pub fn liouville_h(lambda: f64, r: f64) -> f64 {
    (8.0 * lambda).ln() - 2.0 * (lambda + r * r).ln()
}

/// Result of [`liouville_profile`].
#[derive(Debug, Clone)]
pub struct LiouvilleProfile {
    pub h: RadialField,
    /// Quadrature of `e^h` (with `2π`).
    pub mass: f64,
}

/// `h = log(8λ/(λ+r²)²)` on a two-dimensional grid and the mass of `e^h`.
pub fn liouville_profile(lambda: f64, r_max: f64, n_cells: usize) -> Result<LiouvilleProfile> {
    if !(lambda > 0.0) {
        return Err(KsError::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let grid = RadialGrid::new(2, r_max, n_cells)?;
    let h = grid.sample(|r| liouville_h(lambda, r));
    let mass = crate::fields::mass(&h.map(f64::exp))?;
    Ok(LiouvilleProfile { h, mass })
}

/// Shoot `h″ + h′/r + e^h = 0` from `h(0) = log(8/λ)` up to `r_end`;
/// the returned trajectory holds `(h, h′)`.
pub fn shoot_liouville(lambda: f64, r_end: f64, tol: &Tolerances) -> Result<Trajectory<2>> {
    if !(lambda > 0.0) {
        return Err(KsError::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let h0 = (8.0 / lambda).ln();
    let c = (8.0 / lambda) / 4.0;
    let r = TAYLOR_RADIUS.min(r_end);
    let y0 = [h0 - c * r * r + c * c * r.powi(4) / 4.0, -2.0 * c * r + c * c * r.powi(3)];
    let rhs = |r: f64, y: &[f64; 2]| [y[1], -y[1] / r - y[0].exp()];
    integrate(rhs, r, y0, r_end, tol, None::<(fn(f64, &[f64; 2]) -> f64, f64)>)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn taylor_start_matches_series() {
        for dim in 3..=6 {
            let s = shoot(dim, 0.0, &tol()).unwrap();
            for r in [1e-3, 2e-3, 5e-3] {
                let series = 1.0 - r * r / (2.0 * dim as f64);
                assert!((s.f_at(r) - series).abs() < r.powi(4), "d={dim} r={r}");
            }
        }
    }

    #[test]
    fn plateau_and_initial_slope() {
        let s = shoot(3, 0.5, &tol()).unwrap();
        assert_eq!(s.f_at(0.2), 1.0);
        assert_eq!(s.f_at(0.5), 1.0);
        assert!((s.fprime_at(0.5) + 0.5 / 3.0).abs() < 1e-15);
        assert_eq!(s.f_at(s.radius() + 1.0), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(shoot(2, 0.0, &tol()), Err(KsError::Domain(_))));
        assert!(matches!(shoot(3, -1.0, &tol()), Err(KsError::Domain(_))));
        let s = shoot(3, 0.0, &tol()).unwrap();
        assert!(matches!(variation(&s, &tol()), Err(KsError::Degenerate(_))));
        assert!(adjoint_check(&s, 0.0, &tol()).is_err());
    }

    #[test]
    fn variation_initial_data() {
        let s = shoot(3, 0.5, &tol()).unwrap();
        let v = variation(&s, &tol()).unwrap();
        assert_eq!(v.samples[0], [0.5, 0.5 / 3.0, 0.0]);
    }

    #[test]
    fn liouville_shot_matches_closed_form() {
        let traj = shoot_liouville(1.0, 10.0, &tol()).unwrap();
        for (&r, y) in traj.t.iter().zip(&traj.y) {
            assert!((y[0] - liouville_h(1.0, r)).abs() < 1e-8, "r={r}");
        }
    }

    #[test]
    fn csv_headers() {
        let s = shoot(3, 0.0, &tol()).unwrap();
        assert!(s.to_csv().starts_with("r,f,fprime\n"));
        let pts = mass_curve(3, &[0.2, 0.0], &tol()).unwrap();
        assert_eq!(pts[0].gamma, 0.0);
        assert!(mass_curve_csv(&pts).starts_with("gamma,M,R\n"));
    }
}
