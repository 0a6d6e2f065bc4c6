use kslab::fields::{mass, sphere_area, v_and_delta};
use kslab::lane_emden::*;
use kslab::ode::Tolerances;
use proptest::prelude::*;

fn tol() -> Tolerances {
    Tolerances::default()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

// Classical n = 3 Lane–Emden constants: first zero and −ξ²θ′(ξ).
const XI1_N3: f64 = 6.896_848_619;
const MASS_N3: f64 = 2.018_235_951;

#[test]
fn d3_gamma0_is_the_n3_polytrope() {
    let s = shoot(3, 0.0, &tol()).unwrap();
    assert!(rel(s.radius(), XI1_N3) < 1e-8, "R = {}", s.radius());
    assert!(rel(s.radial_mass(), MASS_N3) < 1e-8, "M = {}", s.radial_mass());
}

#[test]
fn mass_two_ways() {
    for dim in 3..=6 {
        for gamma in [0.0, 0.1, 0.5, 1.0, 2.0] {
            let s = shoot(dim, gamma, &tol()).unwrap();
            let m = s.radial_mass();
            assert!((m - s.flux_mass()).abs() <= 1e-8 * m, "d={dim} γ={gamma}");
            assert!(s.f_at(s.radius() * (1.0 - 1e-12)).abs() <= 1e-10);
        }
    }
}

#[test]
fn step_halving_reproducibility() {
    let base = Tolerances::new(1e-10, 1e-12);
    for dim in [3, 4, 5, 6] {
        for gamma in [0.0, 0.5, 1.0] {
            let a = shoot(dim, gamma, &base).unwrap();
            let b = shoot(dim, gamma, &base.scaled(0.5)).unwrap();
            // Changes bounded by 10× the tolerance.
            assert!(rel(a.radius(), b.radius()) <= 10.0 * base.rtol);
            assert!(rel(a.radial_mass(), b.radial_mass()) <= 10.0 * base.rtol);
            let c = shoot(dim, gamma, &tol()).unwrap();
            let d = shoot(dim, gamma, &tol().scaled(0.5)).unwrap();
            assert!(rel(c.radius(), d.radius()) < 1e-8);
            assert!(rel(c.radial_mass(), d.radial_mass()) < 1e-8);
        }
    }
}

#[test]
fn profile_is_monotone() {
    for dim in [3, 4, 7] {
        for gamma in [0.0, 0.3, 1.5] {
            let s = shoot(dim, gamma, &tol()).unwrap();
            let pts = s.samples();
            assert!(pts.windows(2).all(|w| w[1][1] <= w[0][1]));
            assert!(pts.iter().skip(2).all(|p| p[2] < 0.0));
        }
    }
}

#[test]
fn d4_mass_curve_is_flat_near_zero() {
    // Reference deviations from an independent DOP853 run (rtol 1e-13):
    // M(γ) − M(0) grows like γ⁶ and stays at the 1e-10 level up to γ = 3e-2.
    let gammas = [0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 3e-2];
    let pts = mass_curve(4, &gammas, &tol()).unwrap();
    let m0 = pts[0].mass;
    for p in &pts {
        assert!((p.mass - m0).abs() <= 5e-10, "γ={} deviation {:e}", p.gamma, p.mass - m0);
    }
    let at_tenth = shoot(4, 0.1, &tol()).unwrap().radial_mass() - m0;
    assert!(rel(at_tenth, 1.494_573e-7) < 1e-3, "M(0.1) − M(0) = {at_tenth:e}");
}

#[test]
fn mass_curve_nondecreasing() {
    for dim in [3, 4] {
        let gammas: Vec<f64> = (0..=60).map(|k| 10f64.powf(-6.0 + 6.0 * k as f64 / 60.0)).collect();
        let pts = mass_curve(dim, &gammas, &tol()).unwrap();
        for w in pts.windows(2) {
            assert!(w[1].mass >= w[0].mass - 1e-9, "d={dim} at γ={}", w[1].gamma);
        }
        let m0 = shoot(dim, 0.0, &tol()).unwrap().radial_mass();
        assert!(pts.iter().all(|p| p.mass >= m0 - 1e-9));
    }
}

#[test]
fn variation_matches_finite_differences() {
    let dg = 1e-4;
    for gamma in [0.1, 0.2, 0.5, 0.8, 1.0] {
        let s = shoot(3, gamma, &tol()).unwrap();
        let v = variation(&s, &tol()).unwrap();
        let up = shoot(3, gamma + dg, &tol()).unwrap().radial_mass();
        let dn = shoot(3, gamma - dg, &tol()).unwrap().radial_mass();
        let fd = (up - dn) / (2.0 * dg);
        assert!(rel(fd, v.dm_dgamma) <= 1e-4, "γ={gamma}: {} vs {fd}", v.dm_dgamma);
        assert!(v.dm_dgamma > 0.0);
    }
}

#[test]
fn adjoint_signs() {
    for gamma in [0.2, 0.5, 1.0] {
        let s = shoot(3, gamma, &tol()).unwrap();
        let a = adjoint_check(&s, 1e-3, &tol()).unwrap();
        assert_eq!(a.samples[0], [s.horizon(), 0.0, -1.0]);
        // p₂ is nonincreasing in r; samples run toward the origin.
        assert!(a.samples.windows(2).all(|w| w[1][2] >= w[0][2] - 1e-14));
        // p₁ < 0 on (switch, R) and p₁ > 0 below the switch.
        let switch = a.sign_switch.unwrap_or(a.r0);
        for p in &a.samples {
            if p[0] > switch * (1.0 + 1e-6) && p[0] < s.radius() {
                assert!(p[1] < 0.0, "p1 at r={} is {}", p[0], p[1]);
            } else if p[0] < switch * (1.0 - 1e-6) {
                assert!(p[1] > 0.0, "p1 at r={} is {}", p[0], p[1]);
            }
        }
    }
}

#[test]
fn substitution_residual() {
    // s = r^{d−2} compresses the start of the profile; in d = 5 the uniform grid
    // must also be finer than s_γ = γ³.
    for (dim, gamma, nodes) in [(3, 0.0, 512), (3, 0.5, 512), (4, 0.0, 512), (5, 1.0, 8192)] {
        let s = shoot(dim, gamma, &tol()).unwrap();
        let rep = substitution_check(&s, nodes);
        assert!(rep.max_residual <= 1e-6, "d={dim} γ={gamma}: {:e}", rep.max_residual);
        assert!(rep.concave);
        let e = dim as f64 - 2.0;
        assert!((rep.u_start - gamma.powf(e)).abs() < 1e-14);
    }
}

#[test]
fn critical_mass_two_paths() {
    let via_shoot = critical_mass_sub(3, &tol()).unwrap();
    let m = shoot(3, 0.0, &tol()).unwrap().radial_mass();
    assert!(rel(via_shoot, 32.0 * std::f64::consts::PI * m) < 1e-14);
    for dim in [3, 4, 5] {
        let a = critical_mass_sub(dim, &tol()).unwrap();
        let b = direct_profile(dim, 256, &tol()).unwrap();
        assert!(a > 0.0);
        assert!(rel(b.mass, a) <= 1e-6, "d={dim}: {} vs {a}", b.mass);
    }
}

#[test]
fn direct_profile_d3_is_stretched_polytrope() {
    let p = direct_profile(3, 256, &tol()).unwrap();
    assert!(rel(p.radius, 2.0 * XI1_N3) < 1e-8);
    assert!(p.rho.values().windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn direct_profile_is_equality_case() {
    let p = direct_profile_scaled(3, 1.0, 4096, None, &tol()).unwrap();
    let floor = 1e-14 * p.rho.max();
    let rep = v_and_delta(&p.rho, floor).unwrap();
    assert!(rep.delta.abs() < 1e-4, "delta = {}", rep.delta);
    let quad = mass(&p.rho).unwrap();
    assert!(rel(quad, p.mass) < 1e-4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn mass_is_scale_invariant(lambda in 0.3f64..3.0, dim in 3usize..6) {
        let h0 = lambda.powf(dim as f64 - 2.0);
        let a = direct_profile_scaled(dim, 1.0, 64, None, &tol()).unwrap();
        let b = direct_profile_scaled(dim, h0, 64, None, &tol()).unwrap();
        prop_assert!(rel(b.mass, a.mass) < 1e-8);
        prop_assert!(rel(b.radius * lambda, a.radius) < 1e-8);
    }

    #[test]
    fn mass_identity_random_gamma(gamma in 0.0f64..3.0, dim in 3usize..8) {
        let s = shoot(dim, gamma, &tol()).unwrap();
        let m = s.radial_mass();
        prop_assert!((m - s.flux_mass()).abs() <= 1e-8 * m);
        prop_assert!(m >= gamma.powi(dim as i32) / dim as f64);
    }
}

#[test]
fn liouville_mass_and_residual() {
    let p = liouville_profile(1.0, 1e3, 200_000).unwrap();
    assert!(rel(p.mass, 8.0 * std::f64::consts::PI) < 1e-2, "mass = {}", p.mass);

    let fine = liouville_profile(1.0, 10.0, 16_384).unwrap();
    let g = *fine.h.grid();
    let lap = g.laplacian(fine.h.values());
    let scale = fine.h.values().iter().map(|h| h.exp()).fold(0.0, f64::max);
    let worst = lap[..g.n_cells() - 1]
        .iter()
        .zip(fine.h.values())
        .map(|(l, h)| (l + h.exp()).abs())
        .fold(0.0, f64::max);
    assert!(worst / scale <= 1e-6, "scaled residual {:e}", worst / scale);
    assert!(sphere_area(2) > 0.0);
}
