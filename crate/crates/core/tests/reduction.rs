mod common;

use common::{rel, scenarios, zero_set_point};
use qred_core::densities::Observable;
use qred_core::reduction_maps::{
    concentration, corrected_dimensions, gram_report, injectivity_rank, map_a, observed_k0, peak_section,
    rayleigh_quotient, relative_frobenius, toeplitz_pair, weighted_gram,
};
use qred_core::scenarios::Scenario;
use qred_core::sections::{invariant_basis, MultiIndex, Section, Twist};
use qred_core::torus_action::ZeroSetRule;

const SHIPPED: [u32; 5] = [2, 4, 8, 16, 32];

#[test]
fn restriction_is_injective_at_shipped_levels() {
    for s in scenarios() {
        for k in SHIPPED {
            let (rank, dim) = injectivity_rank(&s.model, &s.action, k, Twist::Plain).unwrap();
            assert_eq!(rank, dim, "{} k={k}", s.name);
            assert!(dim > 0);
        }
    }
    let s2 = Scenario::s2();
    for k in SHIPPED {
        let (rank, dim) = injectivity_rank(&s2.model, &s2.action, k, Twist::HalfForm).unwrap();
        assert_eq!(rank, dim);
    }
}

#[test]
fn corrected_dimensions_agree_from_k0() {
    let s2 = Scenario::s2();
    let ks: Vec<u32> = (1..=16).map(|j| 2 * j).collect();
    for &k in &ks {
        let c = corrected_dimensions(&s2.model, &s2.action, k).unwrap();
        assert!(c.matches(), "{c:?}");
    }
    assert_eq!(observed_k0(&s2.model, &s2.action, &ks).unwrap(), Some(2));
    let s1 = Scenario::s1();
    let ks: Vec<u32> = (1..=16).collect();
    for &k in &ks {
        let c = corrected_dimensions(&s1.model, &s1.action, k).unwrap();
        assert_eq!(c.upstairs, (k % 2) as usize);
        assert!(c.matches(), "{c:?}");
    }
    assert_eq!(observed_k0(&s1.model, &s1.action, &ks).unwrap(), Some(1));
}

#[test]
fn toeplitz_defect_decreases() {
    let s2 = Scenario::s2();
    let defects: Vec<f64> = [16, 24, 32, 48, 64]
        .iter()
        .map(|&k| toeplitz_pair(&s2.model, &s2.action, k, &Observable::MomentSum, 1).unwrap().defect)
        .collect();
    assert!(defects.windows(2).all(|w| w[1] < w[0]), "{defects:?}");
    // One invariant section: both operators are the same scalar.
    let s1 = Scenario::s1();
    for k in [17, 33, 65] {
        let t = toeplitz_pair(&s1.model, &s1.action, k, &Observable::MomentSlot(1), 1).unwrap();
        assert_eq!(t.upstairs.nrows(), 1);
        assert!(t.defect < 1e-10, "k={k}: {}", t.defect);
    }
}

#[test]
fn toeplitz_defect_is_linear_in_constants() {
    let s2 = Scenario::s2();
    for c in [-2.5, 0.3, 4.0] {
        let one = toeplitz_pair(&s2.model, &s2.action, 8, &Observable::One, 1).unwrap();
        let t = toeplitz_pair(&s2.model, &s2.action, 8, &Observable::Constant(c), 1).unwrap();
        assert!((t.defect - c.abs() * one.defect).abs() < 1e-10);
        assert!((&t.upstairs - &one.upstairs * c).norm() < 1e-12);
    }
}

#[test]
fn toeplitz_matrices_are_symmetric() {
    let s2 = Scenario::s2();
    for k in [4, 16] {
        let t = toeplitz_pair(&s2.model, &s2.action, k, &Observable::MomentSlot(1), 1).unwrap();
        assert!((&t.upstairs - t.upstairs.transpose()).norm() < 1e-12);
        assert!((&t.downstairs - t.downstairs.transpose()).norm() < 1e-10);
    }
}

#[test]
fn weighted_downstairs_gram_reproduces_upstairs() {
    for s in scenarios() {
        for k in [2, 4, 8] {
            let g = gram_report(&s.model, &s.action, k, Twist::Plain, 1).unwrap();
            let (basis, w, dens) = weighted_gram(&s.model, &s.action, k, Twist::Plain, 1).unwrap();
            assert_eq!(basis, g.basis);
            assert!(dens.iter().all(|&v| v > 0.0));
            assert!(relative_frobenius(&w, &g.g_up) < 1e-5, "{} k={k}", s.name);
        }
    }
    let s2 = Scenario::s2();
    for k in [2, 4, 8] {
        let g = gram_report(&s2.model, &s2.action, k, Twist::HalfForm, 1).unwrap();
        let (_, w, _) = weighted_gram(&s2.model, &s2.action, k, Twist::HalfForm, 1).unwrap();
        assert!(relative_frobenius(&w, &g.g_up) < 1e-5, "k={k}");
    }
}

#[test]
fn gram_pencil_is_positive() {
    for s in scenarios() {
        for k in [2, 8, 16] {
            let g = gram_report(&s.model, &s.action, k, Twist::Plain, 1).unwrap();
            assert!(g.mu.iter().all(|&m| m > 0.0));
            assert!((0.0..1.0).contains(&g.defect));
            assert!((&g.g_down - g.g_down.transpose()).norm() <= 1e-12 * g.g_down.norm());
        }
    }
}

#[test]
fn reduced_magnitudes_are_orbit_constant() {
    let s2 = Scenario::s2();
    let rule = ZeroSetRule::new(&s2.model, &s2.action, 1).unwrap();
    for a in invariant_basis(&s2.model, &s2.action, 6, Twist::Plain).unwrap() {
        let sec = Section::monomial(&s2.model, 6, Twist::Plain, a).unwrap();
        let red = map_a(&s2.model, &s2.action, &rule, &sec).unwrap();
        let na = rule.angle_node_count();
        for i in 0..rule.slice_nodes().len() {
            let m: Vec<f64> = (0..na).map(|j| red.value(i, j).norm_sqr()).collect();
            let spread = m.iter().cloned().fold(f64::MIN, f64::max) - m.iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread <= 1e-12 * m[0].max(1e-300));
        }
    }
}

#[test]
fn peak_sections_concentrate() {
    let s2 = Scenario::s2();
    let target = zero_set_point(&s2, 0.5, &[0.0; 4]);
    let p16 = peak_section(&s2.model, &s2.action, 16, &target).unwrap();
    assert_eq!(p16.index, MultiIndex(vec![12, 4, 12, 4]));
    for k in [64, 128] {
        let p = peak_section(&s2.model, &s2.action, k, &target).unwrap();
        let rule = ZeroSetRule::with_resolution(&s2.model, &s2.action, 400, 1).unwrap();
        let frac = concentration(&s2.model, &s2.action, &rule, &p.section, &target, 0.1).unwrap();
        assert!(frac >= 0.9, "k={k}: {frac}");
    }
}

#[test]
fn rayleigh_quotients_depend_on_the_target() {
    let s2 = Scenario::s2();
    let k = 64;
    let rule = ZeroSetRule::with_resolution(&s2.model, &s2.action, 400, 1).unwrap();
    let q: Vec<f64> = [0.0, 0.5]
        .iter()
        .map(|&t| {
            let target = zero_set_point(&s2, t, &[0.0; 4]);
            let p = peak_section(&s2.model, &s2.action, k, &target).unwrap();
            rayleigh_quotient(&s2.model, &s2.action, &rule, &p.section).unwrap()
        })
        .collect();
    assert!(rel(q[0], q[1]) >= 0.1, "{q:?}");
}
