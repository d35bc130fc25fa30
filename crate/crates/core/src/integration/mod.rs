//! Quadrature on M, on the zero set and its quotient, on balls in the Lie
//! algebra, plus the Jacobian τ of the stable-set decomposition and the
//! closed-form monomial norms used as an oracle.

mod lie_ball;
mod tail;

pub use lie_ball::{lie_ball_rule, DomainTag, QuadratureRule};
pub use tail::{shell_mass, tail_monitor, truncation_radius, TailEstimate};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, gauss_legendre_on, ln_factorial, KahanSum};
use crate::sections::{MultiIndex, Twist};
use crate::toric_geometry::{complex_to_real, liouville_at, metric_at, push_tangent, real_to_complex, ChartPoint, ModelManifold};
use crate::torus_action::{
    complex_flow, flow_scales, generators, group_act, moment, ActionSpec, ZeroSetRule, ZERO_SET_TOL,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

/// Nodes (s₀, …, s_m) and weights of a collapsed Gauss rule on the standard
/// m-simplex.
fn simplex_rule(m: usize, pts: usize) -> Vec<(Vec<f64>, f64)> {
    let (x, w) = gauss_legendre_on(pts, 0.0, 1.0);
    let mut out = vec![(Vec::<f64>::new(), 1.0)];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|(prefix, pw)| {
                x.iter().zip(&w).map(move |(xi, wi)| {
                    let mut v = prefix.clone();
                    v.push(*xi);
                    (v, pw * wi)
                })
            })
            .collect();
    }
    out.into_iter()
        .map(|(xs, w)| {
            let mut rest = 1.0;
            let mut s = vec![0.0; m + 1];
            for (j, x) in xs.iter().enumerate() {
                s[j + 1] = rest * x;
                rest *= 1.0 - x;
            }
            s[0] = rest;
            // Jacobian of the collapsed map: ∏_j (1 − x_j)^{m−1−j}
            let mut jac = 1.0;
            for (j, x) in xs.iter().enumerate() {
                jac *= (1.0 - x).powi((m - 1 - j) as i32);
            }
            (s, w * jac)
        })
        .collect()
}

/// Product quadrature over M in moment/angle coordinates. The density is the
/// Liouville form of the first chart times the Jacobian of
/// (s, θ) ↦ z_a = √(s_a/s₀) e^{iθ_a}.
pub fn integrate_m<F>(model: &ModelManifold, f: F, level: usize) -> Result<f64>
where
    F: Fn(&ChartPoint) -> f64 + Sync,
{
    let pts = 8usize << level.max(1);
    let na = 2usize << level.max(1);
    integrate_m_with(model, f, pts, na)
}

/// As [`integrate_m`] with explicit Gauss points per simplex direction and
/// angle samples per circle.
pub fn integrate_m_with<F>(model: &ModelManifold, f: F, pts: usize, angles: usize) -> Result<f64>
where
    F: Fn(&ChartPoint) -> f64 + Sync,
{
    let per_factor: Vec<Vec<(Vec<f64>, f64)>> = model.factors().iter().map(|fa| simplex_rule(fa.dim(), pts)).collect();
    let mut combos: Vec<(Vec<f64>, f64, f64)> = vec![(vec![], 1.0, 1.0)];
    for (fa, rule) in model.factors().iter().zip(&per_factor) {
        let m = fa.dim() as i32;
        combos = combos
            .into_iter()
            .flat_map(|(u, w, jac)| {
                rule.iter().map(move |(s, ws)| {
                    let mut v = u.clone();
                    v.extend(s);
                    (v, w * ws, jac * 2f64.powi(-m) * s[0].powi(-(m + 1)))
                })
            })
            .collect();
    }
    let nslots = model.n();
    let n_ang = angles.pow(nslots as u32);
    let dtheta = (2.0 * PI / angles as f64).powi(nslots as i32);
    let charts = vec![0usize; model.factors().len()];
    let parts: Vec<Result<f64>> = combos
        .par_iter()
        .map(|(u, w, jac)| {
            let mut acc = KahanSum::new();
            for j in 0..n_ang {
                let theta = angle_vector(model, j, angles);
                let p = ChartPoint::from_moment_angles(model, u, &theta)?.to_charts(model, &charts)?;
                acc.add(f(&p) * liouville_at(model, &p)?);
            }
            Ok(acc.value() * w * jac * dtheta)
        })
        .collect();
    let vals = parts.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(compensated_sum(vals))
}

fn angle_vector(model: &ModelManifold, mut j: usize, angles: usize) -> Vec<f64> {
    let mut theta = vec![0.0; model.homogeneous_len()];
    for (i, f) in model.factors().iter().enumerate() {
        let off = model.homogeneous_offset(i);
        for a in 1..=f.dim() {
            theta[off + a] = 2.0 * PI * (j % angles) as f64 / angles as f64;
            j /= angles;
        }
    }
    theta
}

/// [`integrate_m`] at `level` and `level + 1`; errors when they differ by
/// more than 1e-8 relative.
pub fn integrate_m_converged<F>(model: &ModelManifold, f: F, level: usize) -> Result<f64>
where
    F: Fn(&ChartPoint) -> f64 + Sync,
{
    let a = integrate_m(model, &f, level)?;
    let b = integrate_m(model, &f, level + 1)?;
    let scale = b.abs().max(1e-300);
    if (a - b).abs() / scale > 1e-8 {
        return Err(Error::Numeric(format!(
            "integral over M not converged: level {level} gives {a:e}, level {} gives {b:e}",
            level + 1
        )));
    }
    Ok(b)
}

/// ∫_M |Z^a|² / ∏|Z_i|^{2D_i} ε_ω in closed form:
/// ∏_i vol(CP^{m_i}, c_i) · (∏ a_j!) · m_i! / (D_i + m_i)!.
pub fn monomial_norm_exact(model: &ModelManifold, a: &MultiIndex, k: u32) -> Result<f64> {
    let deg = crate::sections::degrees(model, k, Twist::Plain)?;
    dirichlet_norm(model, a, &deg)
}

/// Closed-form ∫_M |r|² ε_ω for a corrected monomial, which carries the extra
/// factor ∏ c_i^{−m_i/2} from the half-form pairing.
pub fn corrected_norm_exact(model: &ModelManifold, a: &MultiIndex, k: u32) -> Result<f64> {
    let deg = crate::sections::degrees(model, k, Twist::HalfForm)?;
    let base = dirichlet_norm(model, a, &deg)?;
    let scale: f64 = model
        .factors()
        .iter()
        .map(|f| (f.scale() as f64).powf(-(f.dim() as f64) / 2.0))
        .product();
    Ok(base * scale)
}

/// Closed-form ∫_M u_slot |s|² ε_ω for the monomial `a`, where u_slot is the
/// moment coordinate |Z_slot|²/|Z|² of one homogeneous slot.
pub fn monomial_moment_exact(model: &ModelManifold, a: &MultiIndex, k: u32, twist: Twist, slot: usize) -> Result<f64> {
    if slot >= model.homogeneous_len() || a.0.len() != model.homogeneous_len() {
        return Err(Error::Structural("slot or multi-index out of range".into()));
    }
    let mut deg = crate::sections::degrees(model, k, twist)?;
    let factor = (0..model.factors().len())
        .rev()
        .find(|&i| model.homogeneous_offset(i) <= slot)
        .expect("slot lies in some factor");
    deg[factor] += 1;
    let mut raised = a.clone();
    raised.0[slot] += 1;
    let base = dirichlet_norm(model, &raised, &deg)?;
    Ok(match twist {
        Twist::Plain => base,
        Twist::HalfForm => {
            base * model
                .factors()
                .iter()
                .map(|f| (f.scale() as f64).powf(-(f.dim() as f64) / 2.0))
                .product::<f64>()
        }
    })
}

fn dirichlet_norm(model: &ModelManifold, a: &MultiIndex, deg: &[u32]) -> Result<f64> {
    if a.0.len() != model.homogeneous_len() {
        return Err(Error::Structural("multi-index length does not match the model".into()));
    }
    let mut log = 0.0;
    let mut vol = 1.0;
    for (i, f) in model.factors().iter().enumerate() {
        let off = model.homogeneous_offset(i);
        let e = &a.0[off..off + f.dim() + 1];
        let s: u32 = e.iter().sum();
        if s != deg[i] {
            return Err(Error::Structural(format!("factor {i} has degree {s}, expected {}", deg[i])));
        }
        vol *= f.volume();
        log += e.iter().map(|&x| ln_factorial(x as u64)).sum::<f64>() + ln_factorial(f.dim() as u64)
            - ln_factorial((s as usize + f.dim()) as u64);
    }
    Ok(vol * log.exp())
}

/// Relative variation of `f` along sampled orbits through a few slice nodes.
pub fn orbit_variation<F>(model: &ModelManifold, action: &ActionSpec, rule: &ZeroSetRule, f: &F) -> f64
where
    F: Fn(&ChartPoint) -> f64,
{
    let ns = rule.slice_nodes().len();
    let picks: Vec<usize> = if ns <= 3 { (0..ns).collect() } else { vec![0, ns / 2, ns - 1] };
    let d = action.d();
    let mut worst: f64 = 0.0;
    for i in picks {
        let p = rule.point(model, i, rule.angle_node_count() / 3);
        let base = f(&p);
        for s in 1..8 {
            let theta: Vec<f64> = (0..d).map(|j| (s as f64 * 0.137 * (j + 1) as f64).fract()).collect();
            let q = group_act(model, action, &theta, &p);
            let v = f(&q);
            worst = worst.max((v - base).abs() / base.abs().max(1e-300));
        }
    }
    worst
}

/// ∫_{M//G} f̂ ε̂ computed as ∫_{Φ⁻¹(0)} f̂ / vol(G·x₀) dvol.
pub fn integrate_reduced<F>(model: &ModelManifold, action: &ActionSpec, rule: &ZeroSetRule, f: F) -> Result<f64>
where
    F: Fn(&ChartPoint) -> f64 + Sync,
{
    let var = orbit_variation(model, action, rule, &f);
    if var > 1e-8 {
        return Err(Error::Precondition(format!("integrand is not G-invariant (orbit variation {var:e})")));
    }
    let vols = rule.orbit_volumes().to_vec();
    let na = rule.angle_node_count();
    let parts: Vec<f64> = (0..rule.slice_nodes().len())
        .into_par_iter()
        .map(|i| {
            let mut acc = KahanSum::new();
            for j in 0..na {
                acc.add(f(&rule.point(model, i, j)));
            }
            acc.value() / na as f64 * rule.fiber_weight(i) / vols[i]
        })
        .collect();
    Ok(compensated_sum(parts))
}

/// Reduced integral of a function of the moment coordinates only, which is
/// constant on every torus fiber.
pub fn integrate_reduced_moment<F>(rule: &ZeroSetRule, f: F) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    compensated_sum(
        rule.slice_nodes()
            .iter()
            .enumerate()
            .map(|(i, node)| f(&node.u) * rule.fiber_weight(i) / rule.orbit_volumes()[i]),
    )
}

/// Jacobian τ(ξ, x₀) of Λ(ξ, x₀) = e^{iξ}x₀ against d^dξ ∧ dvol(Φ⁻¹(0)).
pub fn tau(model: &ModelManifold, action: &ActionSpec, xi: &[f64], x0: &ChartPoint) -> Result<f64> {
    let mu = moment(action, x0);
    if mu.iter().any(|v| v.abs() >= ZERO_SET_TOL) {
        return Err(Error::Precondition("τ needs a point on the zero set".into()));
    }
    let d = action.d();
    let n = model.n();
    let y = complex_flow(model, action, xi, 1.0, x0)?;
    let md_y = metric_at(model, &y)?;
    let md0 = metric_at(model, x0)?;
    let g0 = generators(model, action, x0)?;
    let gy = generators(model, action, &y)?;

    // B-orthonormal basis of T_{x0}Φ⁻¹(0): complement of span{JX}.
    let ip = |a: &DVector<f64>, b: &DVector<f64>| md0.inner(a, b);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..d {
        let mut v = g0.column(d + j).into_owned();
        for b in &basis {
            let c = ip(&v, b);
            v -= b * c;
        }
        let nrm = ip(&v, &v).sqrt();
        if nrm < 1e-12 {
            return Err(Error::Domain("fixed point on the zero set".into()));
        }
        basis.push(v / nrm);
    }
    for e in 0..2 * n {
        if basis.len() == 2 * n {
            break;
        }
        let mut v = DVector::from_fn(2 * n, |r, _| if r == e { 1.0 } else { 0.0 });
        for _ in 0..2 {
            for b in &basis {
                let c = ip(&v, b);
                v -= b * c;
            }
        }
        let nrm = ip(&v, &v).sqrt();
        if nrm > 1e-6 {
            basis.push(v / nrm);
        }
    }
    let scales: Vec<Complex64> = flow_scales(model, action, xi, 1.0);
    let mut cols: Vec<DVector<f64>> = (0..d).map(|j| gy.column(d + j).into_owned()).collect();
    for h in &basis[d..] {
        let pushed = push_tangent(model, x0, &real_to_complex(h), &scales, y.charts());
        cols.push(complex_to_real(&pushed));
    }
    let m = DMatrix::from_columns(&cols);
    let gram = m.transpose() * &md_y.b * m;
    let det = gram.determinant();
    if !(det > 0.0) {
        return Err(Error::Domain("Λ has a singular differential".into()));
    }
    Ok(det.sqrt())
}
