mod common;

use common::{angles, complex_in, rel, scenarios, zero_set_point};
use nalgebra::DVector;
use num_complex::Complex64;
use proptest::prelude::*;
use qred_core::toric_geometry::{complex_to_real, metric_at, real_to_complex, ChartPoint};
use qred_core::torus_action::{complex_flow, generators, group_act, orbit_volume, phi};

fn chordal(a: &ChartPoint, b: &ChartPoint, factors: usize) -> f64 {
    (0..factors)
        .map(|i| {
            let (x, y) = (a.homogeneous(i), b.homogeneous(i));
            let ip: Complex64 = x.iter().zip(y).map(|(p, q)| p * q.conj()).sum();
            let nx: f64 = x.iter().map(|p| p.norm_sqr()).sum();
            let ny: f64 = y.iter().map(|p| p.norm_sqr()).sum();
            (1.0 - ip.norm_sqr() / (nx * ny)).max(0.0)
        })
        .sum::<f64>()
        .sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn moment_map_is_invariant(
        which in 0usize..2,
        z in prop::collection::vec(complex_in(3.0), 2),
        theta in -3.0f64..3.0,
        xi in -2.0f64..2.0,
    ) {
        let s = &scenarios()[which];
        let p = ChartPoint::from_affine(&s.model, &vec![0; s.model.factors().len()], &z[..s.model.n()]).unwrap();
        let q = group_act(&s.model, &s.action, &[theta], &p);
        prop_assert!((phi(&s.action, &[xi], &q) - phi(&s.action, &[xi], &p)).abs() < 1e-12);
    }

    #[test]
    fn moment_map_generates_the_action(
        which in 0usize..2,
        z in prop::collection::vec(complex_in(2.0), 2),
        v in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        let s = &scenarios()[which];
        let n = s.model.n();
        let charts = vec![0; s.model.factors().len()];
        let p = ChartPoint::from_affine(&s.model, &charts, &z[..n]).unwrap();
        let dir = DVector::from_column_slice(&v[..2 * n]);
        let h = 1e-4;
        let at = |t: f64| {
            let moved: Vec<Complex64> = z[..n].iter().zip(real_to_complex(&(&dir * t))).map(|(a, b)| a + b).collect();
            phi(&s.action, &[1.0], &ChartPoint::from_affine(&s.model, &charts, &moved).unwrap())
        };
        let fd = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
        let x = generators(&s.model, &s.action, &p).unwrap().column(0).into_owned();
        let md = metric_at(&s.model, &p).unwrap();
        let exact = md.omega_of(&x, &dir);
        let scale = exact.abs().max(1e-3 * md.inner(&x, &x).sqrt() * dir.norm());
        prop_assert!((fd - exact).abs() < 1e-7 * scale.max(1.0), "{fd} vs {exact}");
    }

    #[test]
    fn stable_set_map_separates_points(
        t1 in 0.0f64..1.0, t2 in 0.0f64..1.0,
        a1 in angles(), a2 in angles(),
        x1 in -0.5f64..0.5, x2 in -0.5f64..0.5,
    ) {
        let s = &scenarios()[1];
        let p1 = zero_set_point(s, t1, &a1);
        let p2 = zero_set_point(s, t2, &a2);
        let sep = (x1 - x2).abs() + chordal(&p1, &p2, 2);
        prop_assume!(sep > 1e-3);
        let y1 = complex_flow(&s.model, &s.action, &[x1], 1.0, &p1).unwrap();
        let y2 = complex_flow(&s.model, &s.action, &[x2], 1.0, &p2).unwrap();
        prop_assert!(chordal(&y1, &y2, 2) > 1e-3 * sep);
    }

    #[test]
    fn orbit_volume_is_constant_on_orbits(which in 0usize..2, t in 0.0f64..1.0, a in angles()) {
        let s = &scenarios()[which];
        let p = zero_set_point(s, t, &a);
        let base = orbit_volume(&s.model, &s.action, &p).unwrap();
        for j in 0..50 {
            let q = group_act(&s.model, &s.action, &[j as f64 / 50.0], &p);
            prop_assert!(rel(orbit_volume(&s.model, &s.action, &q).unwrap(), base) < 1e-10);
        }
    }
}

#[test]
fn generators_are_tangent_to_orbits() {
    let s = &scenarios()[1];
    let p = zero_set_point(s, 0.3, &[0.0, 0.4, 0.0, 1.3]);
    let x = generators(&s.model, &s.action, &p).unwrap().column(0).into_owned();
    let h = 1e-6;
    let q = group_act(&s.model, &s.action, &[h], &p).to_charts(&s.model, p.charts()).unwrap();
    let fd: Vec<Complex64> = q.affine().iter().zip(p.affine()).map(|(a, b)| (a - b) / h).collect();
    let diff = &complex_to_real(&fd) - &x;
    assert!(diff.norm() < 1e-4 * x.norm());
}
