mod common;

use common::{angles, complex_in, rel, scenarios, zero_set_point};
use num_complex::Complex64;
use proptest::prelude::*;
use qred_core::scenarios::Scenario;
use qred_core::sections::{
    all_multi_indices, contraction_ratio, degrees, invariant_basis, is_invariant_index, magnitude,
    magnitude_after_flow, predicted_magnitude_flow, q_residual, Section, Twist,
};
use qred_core::toric_geometry::{real_to_complex, ChartPoint};
use qred_core::torus_action::{generators, orbit_volume, phi};

fn random_point(s: &Scenario, z: &[Complex64]) -> ChartPoint {
    ChartPoint::from_affine(&s.model, &vec![0; s.model.factors().len()], &z[..s.model.n()]).unwrap()
}

/// k values with invariant sections in each shipped scenario and twist.
fn shipped_ks(s: &Scenario, twist: Twist) -> Vec<u32> {
    (1..=8)
        .filter(|&k| match (s.name.as_str(), twist) {
            ("S1", Twist::HalfForm) => k % 2 == 1,
            _ => k % 2 == 0,
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn quantization_condition_matches_weights(
        which in 0usize..2,
        z in prop::collection::vec(complex_in(1.5), 2),
        xi in 0.2f64..1.0,
    ) {
        let s = &scenarios()[which];
        let p = random_point(s, &z);
        for twist in [Twist::Plain, Twist::HalfForm] {
            for k in 1..=4 {
                let deg = degrees(&s.model, k, twist).unwrap();
                for a in all_multi_indices(&s.model, &deg) {
                    let sec = Section::monomial(&s.model, k, twist, a.clone()).unwrap();
                    let r = q_residual(&s.model, &s.action, &sec, &[xi], &p).unwrap();
                    if is_invariant_index(&s.action, k, twist, &a) {
                        prop_assert!(r < 1e-8, "{a} k={k} residual {r}");
                    } else {
                        prop_assert!(r > 0.1, "{a} k={k} residual {r}");
                    }
                }
            }
        }
    }

    #[test]
    fn magnitude_law_for_basis_sections(
        which in 0usize..2,
        t in 0.0f64..1.0,
        a in angles(),
        xi in -0.6f64..0.6,
    ) {
        let s = &scenarios()[which];
        let x0 = zero_set_point(s, t, &a);
        for twist in [Twist::Plain, Twist::HalfForm] {
            for k in shipped_ks(s, twist) {
                for idx in invariant_basis(&s.model, &s.action, k, twist).unwrap() {
                    let sec = Section::monomial(&s.model, k, twist, idx).unwrap();
                    let pred = predicted_magnitude_flow(&s.model, &s.action, &sec, &[xi], &x0).unwrap();
                    let direct = magnitude_after_flow(&s.model, &s.action, &sec, &[xi], &x0).unwrap();
                    prop_assert!(rel(pred, direct) < 1e-8);
                }
            }
        }
    }

    #[test]
    fn norm_derivative_along_jx(
        which in 0usize..2,
        z in prop::collection::vec(complex_in(1.5), 2),
    ) {
        let s = &scenarios()[which];
        let p = random_point(s, &z);
        let charts = p.charts().to_vec();
        let jx = generators(&s.model, &s.action, &p).unwrap().column(1).into_owned();
        for k in shipped_ks(s, Twist::Plain) {
            for idx in invariant_basis(&s.model, &s.action, k, Twist::Plain).unwrap() {
                let sec = Section::monomial(&s.model, k, Twist::Plain, idx).unwrap();
                let h = 1e-4;
                let at = |t: f64| {
                    let dz = real_to_complex(&(&jx * t));
                    let moved: Vec<Complex64> = p.affine().iter().zip(dz).map(|(a, b)| a + b).collect();
                    magnitude(&s.model, &sec, &ChartPoint::from_affine(&s.model, &charts, &moved).unwrap()).unwrap()
                };
                let fd = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
                let m = at(0.0);
                let expect = -2.0 * k as f64 * phi(&s.action, &[1.0], &p) * m;
                let scale = expect.abs().max(1e-3 * k as f64 * m);
                prop_assert!((fd - expect).abs() < 1e-6 * scale, "{fd} vs {expect}");
            }
        }
    }
}

#[test]
fn contraction_identity_at_fifty_nodes() {
    for s in scenarios() {
        for j in 0..50 {
            let t = j as f64 / 49.0;
            let a = [0.0, 0.37 * j as f64, 0.0, 0.91 * j as f64];
            let x0 = zero_set_point(&s, t, &a);
            let vol = orbit_volume(&s.model, &s.action, &x0).unwrap();
            let d = s.action.d() as i32;
            let expect = 2f64.powi(-d) * vol * vol;
            assert!(rel(contraction_ratio(&s.model, &s.action, &x0).unwrap(), expect) < 1e-8);
        }
    }
}

#[test]
fn section_text_round_trip() {
    let s = Scenario::s2();
    let basis = invariant_basis(&s.model, &s.action, 4, Twist::Plain).unwrap();
    let terms = basis.into_iter().enumerate().map(|(i, a)| (a, Complex64::new(i as f64 + 0.5, -0.25))).collect();
    let sec = Section::new(&s.model, 4, Twist::Plain, terms).unwrap();
    let back = Section::from_text(&s.model, &sec.to_text()).unwrap();
    assert_eq!(sec, back);
}
