//! Hamiltonian torus actions on a [`ModelManifold`]: moment map, generating
//! vector fields, the complexified flow, orbit volumes, the zero-set
//! quadrature and the scenario validation checks.
//!
//! The torus R^d/Z^d acts by `Z_a ↦ exp(-2πi (Wᵀθ)_a) Z_a`. Lie algebra
//! vectors are given in the orthonormal basis Ξ, whose Haar measure gives the
//! fundamental cell volume 1.

mod slice;
mod validate;

pub use slice::{SliceNode, SlicePolytope, ZeroSetRule};
pub use validate::{validate_scenario, CheckKind, CheckOutcome, ValidationReport};

use crate::error::{Error, Result};
use crate::numeric::adaptive_gk;
use crate::toric_geometry::{complex_to_real, metric_at, ChartPoint, ModelManifold};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_rational::Rational64;
use std::f64::consts::PI;

/// Tolerance for "on the zero set".
pub const ZERO_SET_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpec {
    weights: Vec<Vec<i64>>,
    shift: Vec<Rational64>,
    basis: DMatrix<f64>,
    scales: Vec<f64>,
    factor_of_slot: Vec<usize>,
}

impl ActionSpec {
    /// `weights` is d × (number of homogeneous coordinates); `shift` is λ.
    pub fn new(model: &ModelManifold, weights: Vec<Vec<i64>>, shift: Vec<Rational64>) -> Result<Self> {
        let d = weights.len();
        if d == 0 {
            return Err(Error::Structural("torus dimension must be positive".into()));
        }
        let nh = model.homogeneous_len();
        if weights.iter().any(|r| r.len() != nh) {
            return Err(Error::Structural(format!(
                "each weight row needs {nh} entries, one per homogeneous coordinate"
            )));
        }
        if shift.len() != d {
            return Err(Error::Structural("moment shift length must equal the torus dimension".into()));
        }
        let w = DMatrix::from_fn(d, nh, |r, c| weights[r][c] as f64);
        if w.rank(1e-9) < d {
            return Err(Error::Structural("weight matrix must have full rank".into()));
        }
        let mut factor_of_slot = Vec::with_capacity(nh);
        let mut scales = Vec::with_capacity(nh);
        for (i, f) in model.factors().iter().enumerate() {
            for _ in 0..=f.dim() {
                factor_of_slot.push(i);
                scales.push(f.scale() as f64);
            }
        }
        Ok(Self { weights, shift, basis: haar_basis(d), scales, factor_of_slot })
    }

    pub fn d(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Vec<i64>] {
        &self.weights
    }

    pub fn shift(&self) -> &[Rational64] {
        &self.shift
    }

    pub fn shift_f64(&self) -> Vec<f64> {
        self.shift.iter().map(|r| *r.numer() as f64 / *r.denom() as f64).collect()
    }

    /// Orthonormal basis in lattice coordinates (columns).
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Lattice coordinates of ξ given in the Ξ basis.
    pub fn to_lattice(&self, xi: &[f64]) -> Vec<f64> {
        let v = &self.basis * DVector::from_column_slice(xi);
        v.iter().copied().collect()
    }

    /// (Wᵀ ξ)_a for every homogeneous slot.
    pub fn slot_weights(&self, xi: &[f64]) -> Vec<f64> {
        let l = self.to_lattice(xi);
        let nh = self.weights[0].len();
        (0..nh)
            .map(|a| self.weights.iter().zip(&l).map(|(row, x)| row[a] as f64 * x).sum())
            .collect()
    }

    pub fn factor_of_slot(&self, a: usize) -> usize {
        self.factor_of_slot[a]
    }

    /// Volume of the torus under the metric induced by Ξ.
    pub fn haar_volume(&self) -> f64 {
        1.0 / self.basis.determinant().abs()
    }
}

/// Gram–Schmidt of the lattice basis against the inner product scaled so the
/// unit lattice cell has volume 1.
fn haar_basis(d: usize) -> DMatrix<f64> {
    let gram = DMatrix::<f64>::identity(d, d);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..d {
        let mut v = DVector::from_fn(d, |r, _| if r == j { 1.0 } else { 0.0 });
        for b in &basis {
            let proj = v.dot(&(&gram * b));
            v -= b * proj;
        }
        let nrm = v.dot(&(&gram * &v)).sqrt();
        basis.push(v / nrm);
    }
    let mut m = DMatrix::from_columns(&basis);
    let scale = m.determinant().abs().powf(-1.0 / d as f64);
    m *= 1.0 / scale;
    m
}

fn check_xi(action: &ActionSpec, xi: &[f64]) -> Result<()> {
    if xi.len() != action.d() {
        return Err(Error::Structural(format!(
            "Lie algebra vector has length {} but the torus has dimension {}",
            xi.len(),
            action.d()
        )));
    }
    Ok(())
}

/// φ_ξ(p) = 2π (Σ_a c_a (Wᵀξ)_a u_a − ⟨λ, ξ⟩).
pub fn phi(action: &ActionSpec, xi: &[f64], p: &ChartPoint) -> f64 {
    let w = action.slot_weights(xi);
    let u = p.moment_coords();
    let lam = action.shift_f64();
    let l = action.to_lattice(xi);
    let pairing: f64 = lam.iter().zip(&l).map(|(a, b)| a * b).sum();
    let s: f64 = (0..w.len()).map(|a| action.scales[a] * w[a] * u[a]).sum();
    2.0 * PI * (s - pairing)
}

/// Components φ_{ξ_j}(p) in the Ξ basis.
pub fn moment(action: &ActionSpec, p: &ChartPoint) -> Vec<f64> {
    (0..action.d())
        .map(|j| {
            let mut e = vec![0.0; action.d()];
            e[j] = 1.0;
            phi(action, &e, p)
        })
        .collect()
}

/// dz components of X^ξ at p.
pub fn generator_complex(model: &ModelManifold, action: &ActionSpec, xi: &[f64], p: &ChartPoint) -> Vec<Complex64> {
    let w = action.slot_weights(xi);
    let mut out = Vec::with_capacity(model.n());
    for (i, f) in model.factors().iter().enumerate() {
        let off = model.homogeneous_offset(i);
        let b = p.charts()[i];
        let z = p.homogeneous(i);
        for a in (0..=f.dim()).filter(|&a| a != b) {
            out.push(Complex64::new(0.0, -2.0 * PI * (w[off + a] - w[off + b])) * z[a]);
        }
    }
    out
}

/// Real 2n × 2d matrix `[X^{ξ_1} … X^{ξ_d} | JX^{ξ_1} … JX^{ξ_d}]`.
pub fn generators(model: &ModelManifold, action: &ActionSpec, p: &ChartPoint) -> Result<DMatrix<f64>> {
    p.check(model)?;
    let d = action.d();
    let n = model.n();
    let mut m = DMatrix::zeros(2 * n, 2 * d);
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        let x = generator_complex(model, action, &e, p);
        let jx: Vec<Complex64> = x.iter().map(|v| v * Complex64::new(0.0, 1.0)).collect();
        m.set_column(j, &complex_to_real(&x));
        m.set_column(d + j, &complex_to_real(&jx));
    }
    Ok(m)
}

/// Compact group element with lattice angles θ applied to p.
pub fn group_act(model: &ModelManifold, action: &ActionSpec, theta: &[f64], p: &ChartPoint) -> ChartPoint {
    let nh = model.homogeneous_len();
    let phases: Vec<f64> = (0..nh)
        .map(|a| action.weights.iter().zip(theta).map(|(r, t)| r[a] as f64 * t).sum::<f64>())
        .collect();
    let homog = scaled(model, p, |a| Complex64::from_polar(1.0, -2.0 * PI * phases[a]));
    ChartPoint::from_homogeneous(model, homog).expect("rotation keeps the point valid")
}

fn scaled<F: Fn(usize) -> Complex64>(model: &ModelManifold, p: &ChartPoint, f: F) -> Vec<Vec<Complex64>> {
    (0..model.factors().len())
        .map(|i| {
            let off = model.homogeneous_offset(i);
            p.homogeneous(i).iter().enumerate().map(|(a, z)| z * f(off + a)).collect()
        })
        .collect()
}

/// Per-slot scale factors exp(2π t (Wᵀξ)_a) of the complexified flow,
/// divided per factor by the largest one to keep magnitudes bounded.
pub fn flow_scales(model: &ModelManifold, action: &ActionSpec, xi: &[f64], t: f64) -> Vec<Complex64> {
    let w = action.slot_weights(xi);
    let mut out = vec![Complex64::new(0.0, 0.0); w.len()];
    for (i, f) in model.factors().iter().enumerate() {
        let off = model.homogeneous_offset(i);
        let top = (0..=f.dim()).map(|a| w[off + a]).fold(f64::NEG_INFINITY, f64::max);
        for a in 0..=f.dim() {
            out[off + a] = Complex64::new((2.0 * PI * t * (w[off + a] - top)).exp(), 0.0);
        }
    }
    out
}

/// e^{itξ}·p: `Z_a ↦ exp(2π t (Wᵀξ)_a) Z_a`, renormalized to the best chart.
pub fn complex_flow(model: &ModelManifold, action: &ActionSpec, xi: &[f64], t: f64, p: &ChartPoint) -> Result<ChartPoint> {
    check_xi(action, xi)?;
    p.check(model)?;
    let s = flow_scales(model, action, xi, t);
    let homog = scaled(model, p, |a| s[a]);
    ChartPoint::from_homogeneous(model, homog)
}

fn require_zero_set(action: &ActionSpec, x0: &ChartPoint) -> Result<()> {
    let mu = moment(action, x0);
    let r = mu.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if r >= ZERO_SET_TOL {
        return Err(Error::Precondition(format!("point is off the zero set (|Φ| = {r:e})")));
    }
    Ok(())
}

/// ρ(ξ, x₀) = 2 ∫₀¹ φ_ξ(e^{itξ} x₀) dt by adaptive Gauss–Kronrod.
pub fn rho(model: &ModelManifold, action: &ActionSpec, xi: &[f64], x0: &ChartPoint) -> Result<f64> {
    check_xi(action, xi)?;
    require_zero_set(action, x0)?;
    let f = |t: f64| {
        let y = complex_flow(model, action, xi, t, x0).expect("flow is entire");
        phi(action, xi, &y)
    };
    Ok(2.0 * adaptive_gk(f, 0.0, 1.0, 1e-14, 1e-13)?)
}

/// ℒ_{JX^ξ} ε_ω / ε_ω at p, factor by factor 4π(Σ_a w_a − (m+1) Σ_a w_a u_a).
pub fn jx_divergence(model: &ModelManifold, action: &ActionSpec, xi: &[f64], p: &ChartPoint) -> f64 {
    let w = action.slot_weights(xi);
    let u = p.moment_coords();
    let mut total = 0.0;
    for (i, f) in model.factors().iter().enumerate() {
        let off = model.homogeneous_offset(i);
        let sw: f64 = (0..=f.dim()).map(|a| w[off + a]).sum();
        let swu: f64 = (0..=f.dim()).map(|a| w[off + a] * u[off + a]).sum();
        total += 4.0 * PI * (sw - (f.dim() as f64 + 1.0) * swu);
    }
    total
}

/// ∫₀¹ (ℒ_{JX^ξ} ε_ω / ε_ω)(e^{itξ} x) dt by adaptive Gauss–Kronrod.
pub fn divergence_along_flow(model: &ModelManifold, action: &ActionSpec, xi: &[f64], x: &ChartPoint) -> Result<f64> {
    check_xi(action, xi)?;
    let f = |t: f64| {
        let y = complex_flow(model, action, xi, t, x).expect("flow is entire");
        jx_divergence(model, action, xi, &y)
    };
    adaptive_gk(f, 0.0, 1.0, 1e-14, 1e-13)
}

/// Gram matrix B(X^{ξ_i}, X^{ξ_j}).
pub fn generator_gram(model: &ModelManifold, action: &ActionSpec, p: &ChartPoint) -> Result<DMatrix<f64>> {
    let g = generators(model, action, p)?;
    let md = metric_at(model, p)?;
    let d = action.d();
    let x = g.columns(0, d).into_owned();
    Ok(x.transpose() * &md.b * x)
}

/// vol(G·x₀) = √det B(X^{ξ_i}, X^{ξ_j}).
pub fn orbit_volume(model: &ModelManifold, action: &ActionSpec, x0: &ChartPoint) -> Result<f64> {
    let gram = generator_gram(model, action, x0)?;
    let det = gram.determinant();
    let scale = gram.diagonal().iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    if det <= 1e-24 * scale.powi(action.d() as i32) {
        return Err(Error::Domain("orbit is degenerate (fixed or non-free point)".into()));
    }
    Ok(det.sqrt())
}

/// Orbit volume by trapezoid quadrature over the torus, with the orbit
/// tangents taken from fourth-order finite differences of the group action
/// rather than from the generator formula.
pub fn orbit_volume_by_quadrature(model: &ModelManifold, action: &ActionSpec, x0: &ChartPoint, per_axis: usize) -> Result<f64> {
    let d = action.d();
    let total = per_axis.pow(d as u32);
    let cell = 1.0 / total as f64;
    let h = 1e-3;
    let mut acc = crate::numeric::KahanSum::new();
    for idx in 0..total {
        let mut rem = idx;
        let theta: Vec<f64> = (0..d)
            .map(|_| {
                let t = (rem % per_axis) as f64 / per_axis as f64;
                rem /= per_axis;
                t
            })
            .collect();
        let y = group_act(model, action, &theta, x0);
        let md = metric_at(model, &y)?;
        let mut cols = Vec::with_capacity(d);
        for j in 0..d {
            let at = |s: f64| -> Result<Vec<Complex64>> {
                let mut th = theta.clone();
                th[j] += s;
                Ok(group_act(model, action, &th, x0).to_charts(model, y.charts())?.affine())
            };
            let (p2, p1, m1, m2) = (at(2.0 * h)?, at(h)?, at(-h)?, at(-2.0 * h)?);
            let v: Vec<Complex64> = (0..p1.len())
                .map(|r| (-p2[r] + 8.0 * p1[r] - 8.0 * m1[r] + m2[r]) / (12.0 * h))
                .collect();
            cols.push(complex_to_real(&v));
        }
        let x = DMatrix::from_columns(&cols);
        let gram = x.transpose() * &md.b * x;
        acc.add(gram.determinant().max(0.0).sqrt() * cell);
    }
    Ok(acc.value())
}

/// Euclidean length of a moment vector.
pub fn moment_norm(action: &ActionSpec, p: &ChartPoint) -> f64 {
    moment(action, p).iter().map(|v| v * v).sum::<f64>().sqrt()
}
