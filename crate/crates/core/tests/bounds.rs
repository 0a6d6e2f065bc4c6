use std::f64::consts::{E, PI};

use kslab::bounds::*;
use kslab::fields::{ball_volume, critical_exponent, default_floor, mass, q_of_u, v_and_delta};
use kslab::lane_emden::direct_profile;
use kslab::ode::Tolerances;
use kslab::RadialGrid;
use proptest::prelude::*;

/// Subharmonic bound `k ρ^{m−1} ≤ α r^{2−d} + β r²` turned into `ρ ≤ C |δ̃|`
/// at a given `r`; `δ̃ = −1`, `M = ω_d` so that `(M/ω_d)^{2/d} = 1`.
fn naive_bound_at(dim: usize, r: f64) -> f64 {
    let d = dim as f64;
    let m = critical_exponent(dim);
    let k = m / (m - 1.0);
    let alpha = k;
    let beta = 1.0 / (4.0 + 2.0 * d);
    let phi = alpha * r.powf(2.0 - d) + beta * r * r;
    (phi / k).powf(1.0 / (m - 1.0))
}

#[test]
fn naive_prefactor_matches_the_lemma_choice_of_radius() {
    for dim in 3..=8 {
        let d = dim as f64;
        let alpha = critical_exponent(dim) / (critical_exponent(dim) - 1.0);
        let beta = 1.0 / (4.0 + 2.0 * d);
        let r = (alpha / beta).powf(1.0 / d);
        let c = naive_bound_at(dim, r);
        assert!((c / naive_linf_prefactor(dim) - 1.0).abs() < 1e-12, "d={dim}");

        // The true minimiser gives the smaller factor (d/2)^{d/(d−2)}·2/(d−2)
        // in place of 2^{d/(d−2)}. For d ≤ 7 the alternative 2^{d/(d−1)} is
        // below even that, so the argument cannot produce it.
        let best = (1..20_000)
            .map(|k| naive_bound_at(dim, r * k as f64 / 10_000.0))
            .fold(f64::INFINITY, f64::min);
        let factor = (d / 2.0).powf(d / (d - 2.0)) * 2.0 / (d - 2.0);
        let expected = naive_linf_prefactor(dim) / 2f64.powf(d / (d - 2.0)) * factor;
        assert!((best / expected - 1.0).abs() < 1e-6, "d={dim}");
        let printed = naive_linf_prefactor(dim) / 2f64.powf(d / (d - 2.0)) * 2f64.powf(d / (d - 1.0));
        if dim <= 7 {
            assert!(printed < best, "d={dim}");
        }
    }
}

#[test]
fn bisection_reproduces_closed_form_in_2d() {
    let b = epsilon_threshold_bisect(2).unwrap();
    assert!((b - 8.0 * PI / (2.0 + E)).abs() < 1e-8);
}

#[test]
fn thresholds_positive_in_higher_dimensions() {
    for dim in [3, 4, 5] {
        let eps = epsilon_threshold(dim).unwrap();
        assert!(eps > 0.0 && eps < c0_pole(dim), "d={dim}: {eps}");
        let below = SmallMassConstants::new(dim, 0.99 * eps).unwrap();
        assert!(below.threshold_ok);
        let above = SmallMassConstants::new(dim, 1.01 * eps).unwrap();
        assert!(!above.threshold_ok);
    }
}

#[test]
fn chain_minimum_matches_brute_force_grid() {
    for dim in [3, 4, 5] {
        for m in [0.01, 0.3, 2.0] {
            let k = q_constant_multid(dim, m).unwrap();
            let grid_min = (0..20_000)
                .map(|i| q_chain_bound(dim, m, 10f64.powf(-4.0 + 8.0 * i as f64 / 20_000.0)))
                .fold(f64::INFINITY, f64::min);
            assert!(k <= grid_min * (1.0 + 1e-12), "d={dim} M={m}");
            assert!(k >= grid_min * (1.0 - 1e-6), "d={dim} M={m}");
        }
        let ks: Vec<f64> = [0.1, 0.2, 0.4, 0.8].iter().map(|&m| q_constant_multid(dim, m).unwrap()).collect();
        assert!(ks.windows(2).all(|w| w[1] > w[0]));
    }
}

#[test]
fn chain_holds_on_a_gaussian() {
    // Q(u) ≤ K(M) δ̄ is a theorem; check it on data with δ̄ = max(|δ|, ‖ρ‖∞).
    for dim in [3, 4] {
        let g = RadialGrid::new(dim, 12.0, 2048).unwrap();
        let rho = g.sample(|r| (-r * r).exp());
        let m = mass(&rho).unwrap();
        let delta = v_and_delta(&rho, default_floor(&rho)).unwrap().delta;
        let dbar = delta.abs().max(rho.max());
        let q = q_of_u(&rho).unwrap();
        let k = q_constant_multid(dim, m).unwrap();
        assert!(q <= k * dbar, "d={dim}: Q = {q}, K δ̄ = {}", k * dbar);
    }
}

#[test]
fn c0_monotone_and_blows_up() {
    for dim in [2, 3, 4] {
        let pole = c0_pole(dim);
        let vals: Vec<f64> = (1..100).map(|k| c0_small_mass(dim, pole * k as f64 / 100.0).unwrap()).collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
        assert!(c0_small_mass(dim, pole * (1.0 - 1e-9)).unwrap() > 1e8);
        assert!(c0_small_mass(dim, pole * (1.0 + 1e-12)).is_err());
    }
}

#[test]
fn q_inequality_on_gaussian_liouville_and_zero() {
    let g = RadialGrid::new(2, 15.0, 4096).unwrap();
    let rho = g.sample(|r| (-r * r).exp() / PI);
    assert!((mass(&rho).unwrap() - 1.0).abs() < 1e-5);
    let delta = v_and_delta(&rho, default_floor(&rho)).unwrap().delta;
    let rep = check_q_inequality_2d(&rho, delta, 0.0).unwrap();
    assert!(rep.pass());
    assert!(rep.q_bound.margin > 0.0 && rep.laplacian_bound.margin > 0.0);

    let g = RadialGrid::new(2, 200.0, 20_000).unwrap();
    let liou = g.sample(|r| 8.0 / (1.0 + r * r).powi(2));
    let rep = check_q_inequality_2d(&liou, 0.0, 0.0).unwrap();
    assert!(rep.laplacian_bound.pass, "{:?}", rep.laplacian_bound);

    let zero = g.zeros();
    let rep = check_q_inequality_2d(&zero, 0.0, 0.0).unwrap();
    assert!(rep.pass());
    assert_eq!(rep.q_bound.lhs, 0.0);
}

#[test]
fn laplacian_lower_bound_cases() {
    let tol = Tolerances::default();
    let p = direct_profile(3, 4096, &tol).unwrap();
    let delta = v_and_delta(&p.rho, default_floor(&p.rho)).unwrap().delta;
    let rep = check_laplacian_lower(&p.rho, delta, 1e-3 * p.rho.max());
    assert!(rep.report.pass, "{rep:?}");

    for dim in [2, 3, 4] {
        let g = RadialGrid::new(dim, 10.0, 2048).unwrap();
        let rho = g.sample(|r| (-r * r).exp());
        let delta = v_and_delta(&rho, default_floor(&rho)).unwrap().delta;
        assert!(check_laplacian_lower(&rho, delta, 1e-8).report.pass, "d={dim}");
        let c = g.sample(|_| 0.7);
        assert!(check_laplacian_lower(&c, 0.0, 0.0).report.pass);
    }
    assert!(ball_volume(3) > 0.0);
}

proptest! {
    #[test]
    fn comparison_monotone_in_time(c in 0.1f64..10.0, t in 0.01f64..100.0, dt in 0.0f64..10.0) {
        let a = delta_comparison(t, c, f64::NEG_INFINITY).unwrap();
        let b = delta_comparison(t + dt, c, f64::NEG_INFINITY).unwrap();
        prop_assert!(b >= a && b < 0.0);
    }

    #[test]
    fn c0_in_2d_is_the_rational_formula(m in 0.0f64..9.2) {
        let a = E * m / (8.0 * PI);
        prop_assert!((c0_small_mass(2, m).unwrap() - a / (1.0 - a)).abs() <= 1e-12 * (1.0 + a / (1.0 - a)));
    }

    #[test]
    fn constants_consistent(m in 0.0f64..5.0) {
        let c = SmallMassConstants::new(2, m).unwrap();
        prop_assert_eq!(c.threshold_ok, c.coefficient > 0.0);
        prop_assert!(c.c0 >= 0.0);
        prop_assert_eq!(c.threshold_ok, m < epsilon_2());
    }
}
