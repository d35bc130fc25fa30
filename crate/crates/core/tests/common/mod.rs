#![allow(dead_code)]

use num_complex::Complex64;
use proptest::prelude::*;
use qred_core::scenarios::Scenario;
use qred_core::toric_geometry::ChartPoint;

pub fn scenarios() -> Vec<Scenario> {
    vec![Scenario::s1(), Scenario::s2()]
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Point of the shipped zero sets from a slice parameter t ∈ [0, 1] and
/// angles for every homogeneous slot.
pub fn zero_set_point(s: &Scenario, t: f64, angles: &[f64]) -> ChartPoint {
    let u: Vec<f64> = match s.name.as_str() {
        "S1" => vec![0.5, 0.5],
        "S2" => {
            let a = 0.5 * t;
            vec![1.0 - a, a, 0.5 + a, 0.5 - a]
        }
        other => panic!("no zero-set parametrization for {other}"),
    };
    let mut th = angles[..u.len()].to_vec();
    th[0] = 0.0;
    if u.len() == 4 {
        th[2] = 0.0;
    }
    ChartPoint::from_moment_angles(&s.model, &u, &th).unwrap()
}

pub fn complex_in(r: f64) -> impl Strategy<Value = Complex64> {
    (-r..r, -r..r).prop_map(|(a, b)| Complex64::new(a, b))
}

pub fn angles() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..std::f64::consts::TAU, 4)
}
