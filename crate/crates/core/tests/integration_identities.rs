mod common;

use common::{rel, scenarios};
use qred_core::densities::{density_i, hessian_rho, laplace_leading, Observable};
use qred_core::integration::{
    corrected_norm_exact, integrate_m, integrate_reduced, lie_ball_rule, monomial_norm_exact, tau,
};
use qred_core::reduction_maps::{upstairs_prefactor, weighted_gram};
use qred_core::scenarios::Scenario;
use qred_core::sections::{all_multi_indices, degrees, magnitude, Section, Twist};
use qred_core::toric_geometry::{total_volume, ChartPoint};
use qred_core::torus_action::{complex_flow, orbit_volume, ZeroSetRule};
use std::f64::consts::PI;

#[test]
fn monomial_norms_match_closed_form() {
    for s in scenarios() {
        for twist in [Twist::Plain, Twist::HalfForm] {
            for k in 1..=8 {
                let deg = degrees(&s.model, k, twist).unwrap();
                for a in all_multi_indices(&s.model, &deg) {
                    let sec = Section::monomial(&s.model, k, twist, a.clone()).unwrap();
                    let quad = integrate_m(&s.model, |p| magnitude(&s.model, &sec, p).unwrap(), 1).unwrap();
                    let exact = match twist {
                        Twist::Plain => monomial_norm_exact(&s.model, &a, k).unwrap(),
                        Twist::HalfForm => corrected_norm_exact(&s.model, &a, k).unwrap(),
                    };
                    assert!(rel(quad, exact) < 1e-8, "{} {a} k={k}: {quad} vs {exact}", s.name);
                }
            }
        }
    }
}

#[test]
fn total_volumes() {
    assert!(rel(total_volume(&Scenario::s1().model).unwrap(), 2.0 * PI) < 1e-12);
    assert!(rel(total_volume(&Scenario::s2().model).unwrap(), 4.0 * PI * PI) < 1e-12);
}

/// ∫_𝔤 f(e^{iξ}x₀) τ(ξ, x₀) dξ over a ball wide enough for τ's decay.
fn fiber_integral<F: Fn(&ChartPoint) -> f64>(s: &Scenario, x0: &ChartPoint, f: &F) -> f64 {
    let r = 4.0;
    lie_ball_rule(s.action.d(), r, 32)
        .unwrap()
        .try_integrate(|xi| {
            let y = complex_flow(&s.model, &s.action, xi, 1.0, x0)?;
            Ok(f(&y) * tau(&s.model, &s.action, xi, x0)?)
        })
        .unwrap()
}

#[test]
fn coarea_decomposition_of_the_stable_set() {
    let s1 = Scenario::s1();
    let tests: Vec<Box<dyn Fn(&ChartPoint) -> f64 + Sync>> = vec![
        Box::new(|_| 1.0),
        Box::new(|p| p.moment_coords()[1]),
        Box::new(|p| p.moment_coords()[1].powi(2)),
        Box::new(|p| (-p.moment_coords()[0]).exp()),
        Box::new(|p| {
            let z = p.homogeneous(0);
            let n = z[0].norm_sqr() + z[1].norm_sqr();
            1.0 + (z[0] * z[1].conj()).re / n
        }),
    ];
    let rule = ZeroSetRule::new(&s1.model, &s1.action, 2).unwrap();
    for f in &tests {
        let up = integrate_m(&s1.model, |p| f(p), 2).unwrap();
        let down = rule.integrate(&s1.model, |x0| fiber_integral(&s1, x0, f));
        assert!(rel(down, up) < 1e-5, "S1: {down} vs {up}");
    }
    // S2 with torus-invariant test functions: one angle per fiber suffices.
    let s2 = Scenario::s2();
    let rule = ZeroSetRule::with_resolution(&s2.model, &s2.action, 24, 1).unwrap();
    let tests: Vec<Box<dyn Fn(&ChartPoint) -> f64 + Sync>> = vec![
        Box::new(|_| 1.0),
        Box::new(|p| p.moment_coords()[1]),
        Box::new(|p| p.moment_coords()[1] * p.moment_coords()[3]),
        Box::new(|p| (p.moment_coords()[1] - p.moment_coords()[3]).powi(2)),
        Box::new(|p| (-p.moment_coords()[1]).exp()),
    ];
    for f in &tests {
        let up = integrate_m(&s2.model, |p| f(p), 2).unwrap();
        let down = rule.integrate(&s2.model, |x0| fiber_integral(&s2, x0, f));
        assert!(rel(down, up) < 1e-5, "S2: {down} vs {up}");
    }
}

#[test]
fn reduced_volume_is_stable_under_refinement() {
    for s in scenarios() {
        let a = integrate_reduced(&s.model, &s.action, &ZeroSetRule::new(&s.model, &s.action, 2).unwrap(), |_| 1.0).unwrap();
        let b = integrate_reduced(&s.model, &s.action, &ZeroSetRule::new(&s.model, &s.action, 3).unwrap(), |_| 1.0).unwrap();
        assert!(rel(a, b) < 1e-6);
    }
}

#[test]
fn norm_identity_with_independent_quadratures() {
    for s in scenarios() {
        for k in [2, 8, 16] {
            let (basis, w, _) = weighted_gram(&s.model, &s.action, k, Twist::Plain, 2).unwrap();
            for (i, a) in basis.iter().enumerate() {
                let sec = Section::monomial(&s.model, k, Twist::Plain, a.clone()).unwrap();
                let up = upstairs_prefactor(&s.model, k)
                    * integrate_m(&s.model, |p| magnitude(&s.model, &sec, p).unwrap(), 2).unwrap();
                assert!(rel(w[(i, i)], up) < 1e-5, "{} {a} k={k}", s.name);
            }
        }
    }
}

fn zero_set_nodes(s: &Scenario) -> Vec<ChartPoint> {
    let rule = ZeroSetRule::new(&s.model, &s.action, 1).unwrap();
    (0..rule.slice_nodes().len()).map(|i| rule.point(&s.model, i, 1)).collect()
}

#[test]
fn laplace_leading_order() {
    for s in scenarios() {
        let d = s.action.d() as f64;
        for x0 in zero_set_nodes(&s).into_iter().step_by(3) {
            let h = hessian_rho(&s.model, &s.action, &x0).unwrap();
            let vol = orbit_volume(&s.model, &s.action, &x0).unwrap();
            let t0 = tau(&s.model, &s.action, &vec![0.0; s.action.d()], &x0).unwrap();
            for k in [16u32, 32, 64] {
                let sigma0 = vol * (k as f64 / (2.0 * PI)).powf(d / 2.0) * t0;
                let pred = laplace_leading(sigma0, &h, k as f64).unwrap();
                let got = density_i(&s.model, &s.action, &x0, k, &Observable::One).unwrap();
                assert!(rel(got, pred) < 3.0 / k as f64, "{} k={k}: {got} vs {pred}", s.name);
            }
        }
    }
}

#[test]
fn hessian_positive_at_nodes() {
    for s in scenarios() {
        for x0 in zero_set_nodes(&s) {
            let h = hessian_rho(&s.model, &s.action, &x0).unwrap();
            assert!((&h - h.transpose()).amax() < 1e-12);
            assert!(h.cholesky().is_some());
        }
    }
}
