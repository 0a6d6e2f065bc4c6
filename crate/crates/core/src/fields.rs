//! Radial grids and fields, together with the observables evaluated on
//! them: mass, Newtonian potential, pressure, `Δv` and its infimum `δ`,
//! the Hessian anisotropy `Q(u)`, free energy, moments, `H_λ`, and the
//! tail exponent.
//!
//! All radially symmetric functions live on a uniform cell-centered mesh
//! `r_i = (i + 1/2)Δr`. Quadratures use the midpoint weights `σ_d r_i^{d−1}Δr`,
//! which are also the control volumes of the finite-volume solver.

use std::f64::consts::PI;

use crate::error::{KsError, Result};

/// Area of the unit sphere `S^{d-1}` in `ℝ^d`.
pub fn sphere_area(dim: usize) -> f64 {
    assert!(dim >= 1);
    // σ_1 = 2, σ_2 = 2π, σ_{d+2} = 2π σ_d / d
    let (mut d, mut s) = if dim % 2 == 1 { (1, 2.0) } else { (2, 2.0 * PI) };
    while d < dim {
        s *= 2.0 * PI / d as f64;
        d += 2;
    }
    s
}

/// Volume of the unit ball in `ℝ^d`.
pub fn ball_volume(dim: usize) -> f64 {
    sphere_area(dim) / dim as f64
}

/// Diffusion exponent `m = 2 − 2/d` tied to the dimension.
pub fn critical_exponent(dim: usize) -> f64 {
    2.0 - 2.0 / dim as f64
}

/// Uniform cell-centered radial mesh on `[0, r_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialGrid {
    dim: usize,
    r_max: f64,
    n_cells: usize,
}

impl RadialGrid {
    pub const MIN_CELLS: usize = 8;

    pub fn new(dim: usize, r_max: f64, n_cells: usize) -> Result<Self> {
        if dim < 2 {
            return Err(KsError::Domain(format!("dimension must be >= 2, got {dim}")));
        }
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(KsError::Domain(format!("r_max must be positive, got {r_max}")));
        }
        if n_cells < Self::MIN_CELLS {
            return Err(KsError::Domain(format!(
                "need at least {} cells, got {n_cells}",
                Self::MIN_CELLS
            )));
        }
        Ok(Self { dim, r_max, n_cells })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dr(&self) -> f64 {
        self.r_max / self.n_cells as f64
    }

    /// Cell center `r_i`.
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dr()
    }

    /// Face `r_{i-1/2}`; face `0` is the origin and face `n` is `r_max`.
    pub fn face(&self, j: usize) -> f64 {
        j as f64 * self.dr()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }

    /// Quadrature weight of cell `i`, `r_i^{d-1} Δr` (midpoint rule; the
    /// factor `σ_d` is applied separately).
    pub fn cell_volume(&self, i: usize) -> f64 {
        self.center(i).powi(self.dim as i32 - 1) * self.dr()
    }

    /// Flux weights `A_j` of the faces `0..=n`.
    ///
    /// `A_j r_j = d Σ_{k<j} V_k`, so the conservative Laplacian built from
    /// them is exact on quadratics in every cell (including the origin cell,
    /// where it reduces to `d` times the symmetric second difference). In
    /// `d = 2` this is exactly `r_j`; otherwise `A_j = r_j^{d-1}(1 + O(Δr²/r_j²))`.
    pub fn face_areas(&self) -> Vec<f64> {
        let d = self.dim as f64;
        let mut out = Vec::with_capacity(self.n_cells + 1);
        out.push(0.0);
        let mut acc = 0.0;
        for i in 0..self.n_cells {
            acc += self.cell_volume(i);
            out.push(d * acc / self.face(i + 1));
        }
        out
    }

    pub fn cell_volumes(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.cell_volume(i)).collect()
    }

    pub fn sphere_area(&self) -> f64 {
        sphere_area(self.dim)
    }

    /// Sample `f(r)` at cell centers.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> RadialField {
        RadialField {
            grid: *self,
            values: (0..self.n_cells).map(|i| f(self.center(i))).collect(),
        }
    }

    pub fn zeros(&self) -> RadialField {
        RadialField {
            grid: *self,
            values: vec![0.0; self.n_cells],
        }
    }

    /// Discrete radial Laplacian in conservative form,
    /// `(1/V_i)[r_{i+1/2}^{d-1}(p_{i+1}-p_i) - r_{i-1/2}^{d-1}(p_i-p_{i-1})]/Δr`.
    ///
    /// The inner face sits at the origin and carries no flux, which makes the
    /// first cell the symmetric second difference times `d`. The outer face
    /// uses the gradient of the last interior face (linear extrapolation).
    pub fn laplacian(&self, p: &[f64]) -> Vec<f64> {
        let n = self.n_cells;
        assert_eq!(p.len(), n);
        let dr = self.dr();
        let area = self.face_areas();
        let mut grad = vec![0.0; n + 1];
        for j in 1..n {
            grad[j] = area[j] * (p[j] - p[j - 1]) / dr;
        }
        grad[n] = area[n] * (p[n - 1] - p[n - 2]) / dr;
        (0..n)
            .map(|i| (grad[i + 1] - grad[i]) / self.cell_volume(i))
            .collect()
    }
}

/// Scalar function sampled at the cell centers of a [`RadialGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    grid: RadialGrid,
    values: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: RadialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(KsError::Domain(format!(
                "field has {} values for {} cells",
                values.len(),
                grid.n_cells()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(KsError::Domain(format!("non-finite value at cell {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RadialField {
        RadialField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    fn require_nonnegative(&self) -> Result<()> {
        match self.values.iter().position(|&v| v < 0.0) {
            Some(i) => Err(KsError::Domain(format!(
                "density is negative ({:e}) at cell {i}",
                self.values[i]
            ))),
            None => Ok(()),
        }
    }

    /// `σ_d Σ_i V_i g(ρ_i, r_i)`.
    fn integrate_with(&self, g: impl Fn(f64, f64) -> f64) -> f64 {
        let grid = &self.grid;
        let s: f64 = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| grid.cell_volume(i) * g(v, grid.center(i)))
            .sum();
        grid.sphere_area() * s
    }
}

/// Total mass `∫ρ dx`.
pub fn mass(rho: &RadialField) -> Result<f64> {
    rho.require_nonnegative()?;
    Ok(rho.integrate_with(|v, _| v))
}

/// Mass enclosed in each face radius; entry `j` is the mass of `B_{r_{j-1/2}}`.
/// Length `n + 1`, first entry `0`, last entry the total mass.
pub fn face_enclosed_mass(rho: &RadialField) -> Vec<f64> {
    let grid = rho.grid();
    let sigma = grid.sphere_area();
    let mut out = Vec::with_capacity(grid.n_cells() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for (i, &v) in rho.values().iter().enumerate() {
        acc += sigma * grid.cell_volume(i) * v;
        out.push(acc);
    }
    out
}

/// Cumulative mass through the outer face of each cell.
pub fn enclosed_mass(rho: &RadialField) -> Result<RadialField> {
    rho.require_nonnegative()?;
    let faces = face_enclosed_mass(rho);
    Ok(RadialField {
        grid: rho.grid,
        values: faces[1..].to_vec(),
    })
}

/// Mass and metric volume (over `σ_d`) of the ball through each cell center;
/// the current cell contributes half its weight.
fn center_enclosed(rho: &RadialField) -> (Vec<f64>, Vec<f64>) {
    let grid = rho.grid();
    let sigma = grid.sphere_area();
    let mut mass = Vec::with_capacity(grid.n_cells());
    let mut vol = Vec::with_capacity(grid.n_cells());
    let (mut m_acc, mut v_acc) = (0.0, 0.0);
    for (i, &v) in rho.values().iter().enumerate() {
        let w = grid.cell_volume(i);
        mass.push(m_acc + 0.5 * sigma * w * v);
        vol.push(v_acc + 0.5 * w);
        m_acc += sigma * w * v;
        v_acc += w;
    }
    (mass, vol)
}

/// Radial derivative `u'(r) = −m_<(r)/(σ_d r^{d−1})` at the faces `0..=n`,
/// with `r^{d−1}` replaced by the face weight `A_j` (it vanishes at the origin).
pub fn face_drift(rho: &RadialField) -> Vec<f64> {
    let grid = rho.grid();
    let sigma = grid.sphere_area();
    let enclosed = face_enclosed_mass(rho);
    let area = grid.face_areas();
    let mut out = vec![0.0; grid.n_cells() + 1];
    for j in 1..=grid.n_cells() {
        out[j] = -enclosed[j] / (sigma * area[j]);
    }
    out
}

/// Newtonian potential `u = Γ * ρ` solving `−Δu = ρ` (all mass assumed
/// inside the grid).
///
/// Built inward from the exact exterior value at `r_max` using the face
/// derivatives from the enclosed mass, so that the conservative discrete
/// Laplacian of `u` equals `−ρ` in every interior cell.
pub fn potential(rho: &RadialField) -> Result<RadialField> {
    rho.require_nonnegative()?;
    let grid = rho.grid();
    let n = grid.n_cells();
    let d = grid.dim();
    let dr = grid.dr();
    let sigma = grid.sphere_area();
    let drift = face_drift(rho);
    let total = face_enclosed_mass(rho)[n];

    let r_max = grid.r_max();
    let exterior = |r: f64| -> f64 {
        if d == 2 {
            -total / (2.0 * PI) * r.ln()
        } else {
            total / ((d as f64 - 2.0) * sigma * r.powi(d as i32 - 2))
        }
    };
    // Outermost center: exterior value at r_max minus a half-cell step of u'.
    let mut u = vec![0.0; n];
    u[n - 1] = exterior(r_max) - drift[n] * (r_max - grid.center(n - 1));
    for i in (0..n - 1).rev() {
        u[i] = u[i + 1] - drift[i + 1] * dr;
    }
    RadialField::new(*grid, u)
}

/// Default `d = 2` pressure floor, `10⁻¹⁴ · max ρ`.
pub fn default_floor(rho: &RadialField) -> f64 {
    let m = rho.max();
    if m > 0.0 {
        1e-14 * m
    } else {
        f64::MIN_POSITIVE
    }
}

/// Pressure: `log ρ` in `d = 2`, `(m/(m−1)) ρ^{m−1}` for `d > 2`.
pub fn pressure(rho: &RadialField, floor: f64) -> Result<RadialField> {
    if !(floor > 0.0) {
        return Err(KsError::Domain(format!("pressure floor must be positive, got {floor}")));
    }
    rho.require_nonnegative()?;
    let d = rho.grid().dim();
    if d == 2 {
        Ok(rho.map(|v| v.max(floor).ln()))
    } else {
        let m = critical_exponent(d);
        let k = m / (m - 1.0);
        let e = m - 1.0;
        Ok(rho.map(|v| k * v.powf(e)))
    }
}

/// Output of [`v_and_delta`].
#[derive(Debug, Clone)]
pub struct DeltaReport {
    /// `Δv = Δ_h p + ρ` on every cell.
    pub laplacian_v: RadialField,
    /// `min` of `Δv` over admissible cells.
    pub delta: f64,
    pub argmin: usize,
}

/// `Δv` and its infimum `δ`, via the identity `Δv = Δp + ρ`.
///
/// The outermost cell (extrapolated boundary stencil) is never admissible;
/// in `d = 2` a cell is excluded when `ρ < floor` anywhere on its stencil.
pub fn v_and_delta(rho: &RadialField, floor: f64) -> Result<DeltaReport> {
    coupled_delta(rho, floor, 1.0)
}

/// As [`v_and_delta`] for `Δp + χρ`; `χ = 0` gives the Li–Yau / Aronson–Bénilan
/// quantity `Δp` of the drift-free equation.
pub fn coupled_delta(rho: &RadialField, floor: f64, chi: f64) -> Result<DeltaReport> {
    let p = pressure(rho, floor)?;
    let grid = rho.grid();
    let lap = grid.laplacian(p.values());
    let values: Vec<f64> = lap.iter().zip(rho.values()).map(|(l, r)| l + chi * r).collect();
    let d = grid.dim();
    let n = grid.n_cells();
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate().take(n - 1) {
        if d == 2 && !stencil_above_floor(rho.values(), i, floor) {
            continue;
        }
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    let (argmin, delta) = best.ok_or(KsError::NegligibleDensity { floor })?;
    Ok(DeltaReport {
        laplacian_v: RadialField::new(*grid, values)?,
        delta,
        argmin,
    })
}

pub(crate) fn stencil_above_floor(rho: &[f64], i: usize, floor: f64) -> bool {
    let lo = i.saturating_sub(1);
    let hi = (i + 1).min(rho.len() - 1);
    rho[lo..=hi].iter().all(|&v| v >= floor)
}

/// `Q(u) = sup_r |u″(r) − u′(r)/r|` for the potential of `ρ`.
///
/// Uses `u″ + (d−1)u′/r = −ρ` with `u′ = −m_<(r)/(σ_d r^{d−1})` to write
/// `u″ − u′/r = ρ̄_r − ρ(r)`, where `ρ̄_r = m_<(r)/|B_r|` is the mean
/// density of the ball through the cell center. Ball volumes use the same
/// quadrature weights as the mass, so constant densities give exactly zero.
pub fn q_of_u(rho: &RadialField) -> Result<f64> {
    rho.require_nonnegative()?;
    let sigma = rho.grid().sphere_area();
    let (enclosed, volume) = center_enclosed(rho);
    Ok(enclosed
        .iter()
        .zip(&volume)
        .zip(rho.values())
        .map(|((m, v), r)| (m / (sigma * v) - r).abs())
        .fold(0.0, f64::max))
}

/// Free energy split into its diffusive and interaction parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreeEnergyBreakdown {
    /// `∫ρ log ρ` (`d = 2`) or `∫ρ^m/(m−1)` (`d > 2`).
    pub entropy_or_lm: f64,
    /// `∫ρu`.
    pub interaction: f64,
    pub total: f64,
}

impl FreeEnergyBreakdown {
    pub fn new(entropy_or_lm: f64, interaction: f64) -> Self {
        Self {
            entropy_or_lm,
            interaction,
            total: entropy_or_lm - 0.5 * interaction,
        }
    }
}

/// Free energy `∫Φ(ρ) − ½∫ρu`. Cells below `floor` contribute nothing to
/// the entropy (the `0 log 0 = 0` convention).
pub fn free_energy(rho: &RadialField, floor: f64) -> Result<FreeEnergyBreakdown> {
    let u = potential(rho)?;
    let d = rho.grid().dim();
    let entropy = if d == 2 {
        rho.integrate_with(|v, _| if v > floor { v * v.ln() } else { 0.0 })
    } else {
        let m = critical_exponent(d);
        rho.integrate_with(|v, _| v.powf(m) / (m - 1.0))
    };
    let grid = rho.grid();
    let interaction = grid.sphere_area()
        * rho
            .values()
            .iter()
            .zip(u.values())
            .enumerate()
            .map(|(i, (r, u))| grid.cell_volume(i) * r * u)
            .sum::<f64>();
    Ok(FreeEnergyBreakdown::new(entropy, interaction))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentsRecord {
    pub mass: f64,
    /// `∫|x|²ρ`.
    pub second_moment: f64,
    /// `∫log(1+|x|) ρ`.
    pub log_moment: f64,
}

pub fn moments(rho: &RadialField) -> Result<MomentsRecord> {
    rho.require_nonnegative()?;
    Ok(MomentsRecord {
        mass: rho.integrate_with(|v, _| v),
        second_moment: rho.integrate_with(|v, r| v * r * r),
        log_moment: rho.integrate_with(|v, r| v * r.ln_1p()),
    })
}

/// Explicit critical profile `u_λ(r) = 8λ/(λ+r²)²` in the plane.
pub fn liouville_density(lambda: f64, r: f64) -> f64 {
    8.0 * lambda / (lambda + r * r).powi(2)
}

/// `H_λ[ρ] = ∫(√ρ − √u_λ)² u_λ^{−1/2}` (`d = 2` only).
pub fn h_lambda(rho: &RadialField, lambda: f64) -> Result<f64> {
    if rho.grid().dim() != 2 {
        return Err(KsError::Domain(format!(
            "H_lambda is defined in d = 2 only, got d = {}",
            rho.grid().dim()
        )));
    }
    if !(lambda > 0.0) {
        return Err(KsError::Domain(format!("lambda must be positive, got {lambda}")));
    }
    rho.require_nonnegative()?;
    Ok(rho.integrate_with(|v, r| {
        let ul = liouville_density(lambda, r);
        let diff = v.sqrt() - ul.sqrt();
        diff * diff / ul.sqrt()
    }))
}

/// Least-squares estimate of `β` in `ρ ≈ C(1+r)^{−β}` over cells with
/// centers in `[r_lo, r_hi]`.
pub fn tail_exponent(rho: &RadialField, r_lo: f64, r_hi: f64) -> Result<f64> {
    let grid = rho.grid();
    if !(r_lo > 0.0 && r_lo < r_hi && r_hi <= grid.r_max()) {
        return Err(KsError::Domain(format!(
            "tail window must satisfy 0 < r_lo < r_hi <= r_max, got ({r_lo}, {r_hi})"
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &v) in rho.values().iter().enumerate() {
        let r = grid.center(i);
        if r < r_lo || r > r_hi {
            continue;
        }
        if !(v > 0.0) {
            return Err(KsError::Domain(format!(
                "density must be positive on the tail window, got {v:e} at r = {r}"
            )));
        }
        xs.push(r.ln_1p());
        ys.push(v.ln());
    }
    if xs.len() < 2 {
        return Err(KsError::Domain("tail window contains fewer than two cells".into()));
    }
    Ok(-least_squares_slope(&xs, &ys))
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(d: usize, r_max: f64, n: usize) -> RadialGrid {
        RadialGrid::new(d, r_max, n).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-15);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn grid_invariants() {
        let g = grid(3, 2.0, 16);
        assert!((g.dr() * g.n_cells() as f64 - g.r_max()).abs() < 1e-15);
        let c = g.centers();
        assert!(c[0] > 0.0 && c.windows(2).all(|w| w[1] > w[0]));
        // Midpoint weights integrate r² to O(Δr²): Σ r_i² Δr = R³/3 − R Δr²/12.
        let total: f64 = g.cell_volumes().iter().sum();
        assert!(rel(total, 8.0 / 3.0 - 2.0 * g.dr().powi(2) / 12.0) < 1e-14);
        let a = g.face_areas();
        assert_eq!(a[0], 0.0);
        assert!(a.windows(2).all(|w| w[1] > w[0]));
        assert!(RadialGrid::new(1, 1.0, 16).is_err());
        assert!(RadialGrid::new(2, 1.0, 4).is_err());
        assert!(RadialGrid::new(2, -1.0, 16).is_err());
    }

    #[test]
    fn laplacian_exact_on_quadratics() {
        for d in 2..=5 {
            let g = grid(d, 1.0, 32);
            let p = g.sample(|r| 3.0 * r * r);
            let lap = g.laplacian(p.values());
            // Outer cell uses the extrapolated boundary gradient.
            for v in &lap[..31] {
                assert!((v - 6.0 * d as f64).abs() < 1e-9, "d={d} got {v}");
            }
        }
    }

    #[test]
    fn mass_uniform_disc() {
        let g = grid(2, 2.0, 400);
        let rho = g.sample(|r| if r <= 1.0 { 1.0 } else { 0.0 });
        assert!((mass(&rho).unwrap() - PI).abs() < 4.0 * g.dr());
    }

    #[test]
    fn mass_liouville_profile() {
        let g = grid(2, 1e3, 1 << 16);
        let rho = g.sample(|r| liouville_density(1.0, r));
        assert!(rel(mass(&rho).unwrap(), 8.0 * PI) < 1e-2);
    }

    #[test]
    fn mass_gaussian_3d() {
        // ∫_{ℝ³} e^{-r²} = π^{3/2}; reference value from the closed form,
        // independently confirmed by composite Simpson on 4πr²e^{-r²}.
        let simpson = {
            let (a, b, n) = (0.0f64, 12.0f64, 20_000usize);
            let h = (b - a) / n as f64;
            let f = |r: f64| 4.0 * PI * r * r * (-r * r).exp();
            let mut s = f(a) + f(b);
            for k in 1..n {
                s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        assert!(rel(simpson, PI.powf(1.5)) < 1e-12);
        let g = grid(3, 12.0, 4096);
        let rho = g.sample(|r| (-r * r).exp());
        assert!(rel(mass(&rho).unwrap(), simpson) < 1e-6);
    }

    #[test]
    fn mass_rejects_negative() {
        let g = grid(2, 1.0, 8);
        let mut rho = g.zeros();
        rho.values_mut()[3] = -1e-3;
        assert!(matches!(mass(&rho), Err(KsError::Domain(_))));
    }

    #[test]
    fn enclosed_mass_properties() {
        let g = grid(2, 2.0, 200);
        assert!(enclosed_mass(&g.zeros()).unwrap().values().iter().all(|&v| v == 0.0));
        let disc = g.sample(|r| if r <= 1.0 { 1.0 } else { 0.0 });
        let em = enclosed_mass(&disc).unwrap();
        for (i, &v) in em.values().iter().enumerate() {
            let r = g.face(i + 1).min(1.0);
            assert!((v - PI * r * r).abs() < 4.0 * g.dr());
        }
    }

    #[test]
    fn potential_shell_theorem_3d() {
        let g = grid(3, 4.0, 800);
        let rho = g.sample(|r| if r <= 1.0 { 1.0 } else { 0.0 });
        let m = mass(&rho).unwrap();
        let u = potential(&rho).unwrap();
        for i in 0..g.n_cells() {
            let r = g.center(i);
            if r > 1.2 {
                assert!(rel(u.values()[i], m / (4.0 * PI * r)) < 1e-3, "r={r}");
            }
        }
    }

    #[test]
    fn potential_log_far_field_2d() {
        let g = grid(2, 20.0, 4000);
        let s = 0.05;
        let rho = g.sample(|r| (-(r / s).powi(2)).exp() / (PI * s * s));
        let m = mass(&rho).unwrap();
        let u = potential(&rho).unwrap();
        for i in 0..g.n_cells() {
            let r = g.center(i);
            if r > 1.0 {
                assert!((u.values()[i] + m / (2.0 * PI) * r.ln()).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn potential_discrete_poisson_residual() {
        for d in [2, 3] {
            let g = grid(d, 8.0, 2048);
            let rho = g.sample(|r| (-r * r).exp());
            let u = potential(&rho).unwrap();
            let lap = g.laplacian(u.values());
            let worst = (0..g.n_cells() - 1)
                .map(|i| (lap[i] + rho.values()[i]).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-3 * rho.max(), "d={d} residual {worst}");
        }
    }

    #[test]
    fn pressure_examples() {
        let g3 = grid(3, 1.0, 8);
        let p = pressure(&g3.sample(|_| 8.0), 1e-14).unwrap();
        assert!(p.values().iter().all(|v| (v - 8.0).abs() < 1e-12));
        let g2 = grid(2, 1.0, 8);
        let p = pressure(&g2.sample(|_| 1.0), 1e-14).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.0));
        let h = |r: f64| (8.0 / (1.0 + r * r).powi(2)).ln();
        let p = pressure(&g2.sample(|r| h(r).exp()), 1e-14).unwrap();
        for i in 0..8 {
            assert!((p.values()[i] - h(g2.center(i))).abs() < 1e-14);
        }
        assert!(pressure(&g2.zeros(), 0.0).is_err());
    }

    #[test]
    fn delta_liouville_is_zero() {
        let g = grid(2, 50.0, 8192);
        let rho = g.sample(|r| liouville_density(1.0, r));
        let rep = v_and_delta(&rho, default_floor(&rho)).unwrap();
        assert!(rep.delta.abs() <= 1e-3 * rho.max(), "delta = {}", rep.delta);
    }

    #[test]
    fn delta_heat_kernel() {
        // Δ log ρ = −1/t exactly for the heat kernel, so Δv = −1/t + ρ and its
        // infimum sits in the tail: δ = −1/t + (smallest admissible ρ).
        let t = 0.5;
        let g = grid(2, 12.0, 4096);
        let rho = g.sample(|r| (-r * r / (4.0 * t)).exp() / (4.0 * PI * t));
        let floor = default_floor(&rho);
        let rep = v_and_delta(&rho, floor).unwrap();
        let lap = rep.laplacian_v.values();
        for i in 0..g.n_cells() - 1 {
            if stencil_above_floor(rho.values(), i, floor) {
                assert!((lap[i] - rho.values()[i] + 1.0 / t).abs() < 1e-6, "cell {i}");
            }
        }
        let min_rho = (0..g.n_cells() - 1)
            .filter(|&i| stencil_above_floor(rho.values(), i, floor))
            .map(|i| rho.values()[i])
            .fold(f64::INFINITY, f64::min);
        assert!((rep.delta - (-1.0 / t + min_rho)).abs() < 1e-6, "{}", rep.delta);
    }

    #[test]
    fn delta_requires_some_density() {
        let g = grid(2, 1.0, 16);
        assert!(matches!(
            v_and_delta(&g.zeros(), 1e-10),
            Err(KsError::NegligibleDensity { .. })
        ));
    }

    #[test]
    fn delta_identity_direct_vs_potential() {
        // Δ_h(p − u) agrees with Δ_h p + ρ away from the outer boundary.
        let g = grid(3, 10.0, 1024);
        let rho = g.sample(|r| (-r * r).exp());
        let p = pressure(&rho, 1e-14).unwrap();
        let u = potential(&rho).unwrap();
        let direct: Vec<f64> = p.values().iter().zip(u.values()).map(|(a, b)| a - b).collect();
        let lap_direct = g.laplacian(&direct);
        let rep = v_and_delta(&rho, 1e-14).unwrap();
        for i in 0..g.n_cells() - 1 {
            assert!((lap_direct[i] - rep.laplacian_v.values()[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn q_of_u_uniform_bulk_vanishes() {
        let g = grid(3, 2.0, 200);
        let rho = g.sample(|_| 2.5);
        assert!(q_of_u(&rho).unwrap() < 1e-12);
    }

    #[test]
    fn q_of_u_uniform_ball_closed_form() {
        // Exterior potential M/(4πr): u″ − u′/r = 3M/(4π r³), maximal at r = 1⁺.
        let g = grid(3, 3.0, 3000);
        let rho = g.sample(|r| if r <= 1.0 { 1.0 } else { 0.0 });
        let m = 4.0 * PI / 3.0;
        let q = q_of_u(&rho).unwrap();
        assert!(rel(q, 3.0 * m / (4.0 * PI)) < 5e-3, "q = {q}");
    }

    #[test]
    fn q_of_u_matches_differenced_drift() {
        // Oracle: u″ from differencing face values of u′, u′/r at the center.
        let g = grid(2, 6.0, 2000);
        let rho = g.sample(|r| (1.0 + r * r).powi(-2) * (1.0 + 0.5 * (3.0 * r).sin().powi(2)));
        let drift = face_drift(&rho);
        let mut q_fd: f64 = 0.0;
        for i in 1..g.n_cells() - 1 {
            let upp = (drift[i + 1] - drift[i]) / g.dr();
            let up = 0.5 * (drift[i + 1] + drift[i]);
            q_fd = q_fd.max((upp - up / g.center(i)).abs());
        }
        let q = q_of_u(&rho).unwrap();
        assert!((q - q_fd).abs() < 1e-2 * q, "{q} vs {q_fd}");
    }

    #[test]
    fn free_energy_examples() {
        let g = grid(2, 10.0, 64);
        let fe = free_energy(&g.zeros(), 1e-300).unwrap();
        assert_eq!((fe.entropy_or_lm, fe.interaction, fe.total), (0.0, 0.0, 0.0));

        // Heat kernel at time t: ∫ρ log ρ = −log(4πt) − 1.
        let t = 0.3;
        let g = grid(2, 12.0, 4096);
        let rho = g.sample(|r| (-r * r / (4.0 * t)).exp() / (4.0 * PI * t));
        let fe = free_energy(&rho, 1e-300).unwrap();
        let expected = -(4.0 * PI * t).ln() - 1.0;
        assert!((fe.entropy_or_lm - expected).abs() < 1e-5);
        assert_eq!(fe.total, fe.entropy_or_lm - 0.5 * fe.interaction);
    }

    #[test]
    fn moments_examples() {
        let g = grid(2, 2.0, 2000);
        assert_eq!(moments(&g.zeros()).unwrap().second_moment, 0.0);
        let disc = g.sample(|r| if r <= 1.0 { 1.0 } else { 0.0 });
        assert!((moments(&disc).unwrap().second_moment - PI / 2.0).abs() < 1e-2);
        let g = grid(3, 12.0, 4096);
        let rho = g.sample(|r| (-r * r).exp());
        let m = moments(&rho).unwrap();
        assert!(rel(m.second_moment, 1.5 * PI.powf(1.5)) < 1e-6);
        assert!(m.second_moment <= g.r_max().powi(2) * m.mass);
    }

    #[test]
    fn h_lambda_examples() {
        let g = grid(2, 100.0, 20000);
        let rho = g.sample(|r| liouville_density(2.0, r));
        assert!(h_lambda(&rho, 2.0).unwrap().abs() < 1e-12);
        // ρ ≡ 0 gives ∫√u_λ = 2π √(8λ) ∫ r/(λ+r²) dr = π√(8λ) ln((λ+R²)/λ).
        let lam: f64 = 2.0;
        let expected = PI * (8.0 * lam).sqrt() * ((lam + 1e4) / lam).ln();
        let h0 = h_lambda(&g.zeros(), lam).unwrap();
        assert!(rel(h0, expected) < 1e-4);
        let g3 = grid(3, 1.0, 8);
        assert!(h_lambda(&g3.zeros(), 1.0).is_err());
    }

    #[test]
    fn tail_exponent_examples() {
        let g = grid(3, 100.0, 4000);
        let rho = g.sample(|r| (1.0 + r).powi(-5));
        assert!((tail_exponent(&rho, 10.0, 90.0).unwrap() - 5.0).abs() < 1e-2);
        let flat = g.sample(|_| 3.0);
        assert!(tail_exponent(&flat, 10.0, 90.0).unwrap().abs() < 1e-6);
        // Gaussian: apparent exponent keeps growing with the window.
        let gauss = g.sample(|r| (-r * r / 100.0).exp());
        let b1 = tail_exponent(&gauss, 5.0, 10.0).unwrap();
        let b2 = tail_exponent(&gauss, 10.0, 20.0).unwrap();
        assert!(b2 > b1);
        let zero = g.zeros();
        assert!(tail_exponent(&zero, 10.0, 20.0).is_err());
    }
}
