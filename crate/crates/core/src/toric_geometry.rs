//! Products of projective spaces with scaled Fubini–Study forms, points in
//! affine charts, and the pointwise Kähler data (ω, J, B, Liouville density).
//!
//! Real tangent coordinates are ordered `(Re z1, Im z1, Re z2, ...)` across all
//! factors. A complex tangent vector is stored by its `dz` components.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::PI;

/// One projective factor: complex dimension and the integer multiple of the
/// Fubini–Study class carried by the symplectic form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Factor {
    dim: usize,
    scale: u32,
}

impl Factor {
    pub fn new(dim: usize, scale: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Structural("projective dimension must be at least 1".into()));
        }
        if scale == 0 {
            return Err(Error::Structural("symplectic scale must be a positive integer".into()));
        }
        Ok(Self { dim, scale })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    /// Closed-form Liouville volume (2πc)^m / m!.
    pub fn volume(&self) -> f64 {
        let m = self.dim as i32;
        (2.0 * PI * self.scale as f64).powi(m) / (1..=self.dim).map(|j| j as f64).product::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelManifold {
    factors: Vec<Factor>,
}

impl ModelManifold {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Structural("model needs at least one factor".into()));
        }
        Ok(Self { factors })
    }

    /// Product of `count` copies of CP^dim with scale 1.
    pub fn power(dim: usize, count: usize) -> Result<Self> {
        Self::new(vec![Factor::new(dim, 1)?; count])
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    /// Total complex dimension.
    pub fn n(&self) -> usize {
        self.factors.iter().map(|f| f.dim).sum()
    }

    /// Number of homogeneous coordinates over all factors.
    pub fn homogeneous_len(&self) -> usize {
        self.factors.iter().map(|f| f.dim + 1).sum()
    }

    /// Offset of factor `i` among affine coordinates.
    pub fn affine_offset(&self, i: usize) -> usize {
        self.factors[..i].iter().map(|f| f.dim).sum()
    }

    /// Offset of factor `i` among homogeneous coordinates.
    pub fn homogeneous_offset(&self, i: usize) -> usize {
        self.factors[..i].iter().map(|f| f.dim + 1).sum()
    }

    pub fn volume_exact(&self) -> f64 {
        self.factors.iter().map(Factor::volume).product()
    }
}

/// A point of M: per factor, the chart index and the homogeneous
/// representative whose chart coordinate equals 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    charts: Vec<usize>,
    homog: Vec<Vec<Complex64>>,
}

impl ChartPoint {
    /// Normalizes each factor by its largest-modulus coordinate.
    pub fn from_homogeneous(model: &ModelManifold, homog: Vec<Vec<Complex64>>) -> Result<Self> {
        check_shape(model, &homog)?;
        let charts = homog
            .iter()
            .map(|z| {
                (0..z.len())
                    .max_by(|&a, &b| z[a].norm().total_cmp(&z[b].norm()))
                    .expect("factor has coordinates")
            })
            .collect::<Vec<_>>();
        Self::in_charts(model, homog, &charts)
    }

    /// Normalizes in the given charts; the chart coordinates must be nonzero.
    pub fn in_charts(model: &ModelManifold, homog: Vec<Vec<Complex64>>, charts: &[usize]) -> Result<Self> {
        check_shape(model, &homog)?;
        if charts.len() != homog.len() {
            return Err(Error::Structural("one chart index per factor required".into()));
        }
        let mut out = Vec::with_capacity(homog.len());
        for (z, &b) in homog.iter().zip(charts) {
            if b >= z.len() {
                return Err(Error::Structural(format!("chart index {b} out of range")));
            }
            let zb = z[b];
            if zb.norm() == 0.0 || !zb.norm().is_finite() {
                return Err(Error::Domain(format!("point lies outside chart {b}")));
            }
            out.push(z.iter().map(|w| w / zb).collect());
        }
        Ok(Self { charts: charts.to_vec(), homog: out })
    }

    pub fn from_affine(model: &ModelManifold, charts: &[usize], z: &[Complex64]) -> Result<Self> {
        if z.len() != model.n() || charts.len() != model.factors().len() {
            return Err(Error::Structural("affine coordinates do not match the model".into()));
        }
        let mut homog = Vec::new();
        for (i, f) in model.factors().iter().enumerate() {
            let off = model.affine_offset(i);
            let b = charts[i];
            if b > f.dim {
                return Err(Error::Structural(format!("chart index {b} out of range")));
            }
            let mut h = Vec::with_capacity(f.dim + 1);
            let mut k = 0;
            for a in 0..=f.dim {
                if a == b {
                    h.push(Complex64::new(1.0, 0.0));
                } else {
                    h.push(z[off + k]);
                    k += 1;
                }
            }
            homog.push(h);
        }
        Ok(Self { charts: charts.to_vec(), homog })
    }

    /// Point with moment coordinates `u` (all homogeneous slots, each factor
    /// summing to 1) and angles `theta` (all homogeneous slots).
    pub fn from_moment_angles(model: &ModelManifold, u: &[f64], theta: &[f64]) -> Result<Self> {
        let nh = model.homogeneous_len();
        if u.len() != nh || theta.len() != nh {
            return Err(Error::Structural("moment/angle vectors must cover all homogeneous slots".into()));
        }
        let mut homog = Vec::new();
        for (i, f) in model.factors().iter().enumerate() {
            let off = model.homogeneous_offset(i);
            homog.push(
                (0..=f.dim)
                    .map(|a| Complex64::from_polar(u[off + a].max(0.0).sqrt(), theta[off + a]))
                    .collect(),
            );
        }
        Self::from_homogeneous(model, homog)
    }

    pub fn charts(&self) -> &[usize] {
        &self.charts
    }

    pub fn homogeneous(&self, factor: usize) -> &[Complex64] {
        &self.homog[factor]
    }

    pub fn homogeneous_all(&self) -> &[Vec<Complex64>] {
        &self.homog
    }

    /// Affine coordinates in the current charts, factor by factor.
    pub fn affine(&self) -> Vec<Complex64> {
        let mut out = Vec::new();
        for (z, &b) in self.homog.iter().zip(&self.charts) {
            out.extend(z.iter().enumerate().filter(|(a, _)| *a != b).map(|(_, w)| *w));
        }
        out
    }

    /// Re-express in other charts.
    pub fn to_charts(&self, model: &ModelManifold, charts: &[usize]) -> Result<Self> {
        Self::in_charts(model, self.homog.clone(), charts)
    }

    /// Re-normalize to the largest-modulus charts.
    pub fn renormalized(&self, model: &ModelManifold) -> Self {
        Self::from_homogeneous(model, self.homog.clone()).expect("valid point renormalizes")
    }

    /// |Z_a|²/|Z|² for every homogeneous slot.
    pub fn moment_coords(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for z in &self.homog {
            let s: f64 = z.iter().map(|w| w.norm_sqr()).sum();
            out.extend(z.iter().map(|w| w.norm_sqr() / s));
        }
        out
    }

    /// Squared norm of each factor's homogeneous representative.
    pub fn factor_norms_sqr(&self) -> Vec<f64> {
        self.homog.iter().map(|z| z.iter().map(|w| w.norm_sqr()).sum()).collect()
    }

    pub fn check(&self, model: &ModelManifold) -> Result<()> {
        check_shape(model, &self.homog)
    }
}

fn check_shape(model: &ModelManifold, homog: &[Vec<Complex64>]) -> Result<()> {
    if homog.len() != model.factors().len()
        || homog.iter().zip(model.factors()).any(|(z, f)| z.len() != f.dim + 1)
    {
        return Err(Error::Structural("chart point does not match the model's factors".into()));
    }
    Ok(())
}

/// Pointwise Kähler data in the chart of a point.
#[derive(Debug, Clone)]
pub struct MetricData {
    pub omega: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub liouville: f64,
}

impl MetricData {
    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&(&self.b * y))
    }

    pub fn omega_of(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&(&self.omega * y))
    }
}

/// Hermitian matrix g_{jk̄} of one factor at affine coordinates `z`.
fn factor_hermitian(z: &[Complex64], scale: f64) -> Vec<Vec<Complex64>> {
    let s = 1.0 + z.iter().map(|w| w.norm_sqr()).sum::<f64>();
    let m = z.len();
    let mut g = vec![vec![Complex64::new(0.0, 0.0); m]; m];
    for j in 0..m {
        for k in 0..m {
            let delta = if j == k { 1.0 / s } else { 0.0 };
            g[j][k] = (Complex64::new(delta, 0.0) - z[j].conj() * z[k] / (s * s)) * scale;
        }
    }
    g
}

/// The complex structure in the fixed real ordering.
pub fn complex_structure(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for a in 0..n {
        j[(2 * a, 2 * a + 1)] = -1.0;
        j[(2 * a + 1, 2 * a)] = 1.0;
    }
    j
}

pub fn metric_at(model: &ModelManifold, p: &ChartPoint) -> Result<MetricData> {
    p.check(model)?;
    let n = model.n();
    let z = p.affine();
    let mut b = DMatrix::zeros(2 * n, 2 * n);
    for (i, f) in model.factors().iter().enumerate() {
        let off = model.affine_offset(i);
        let g = factor_hermitian(&z[off..off + f.dim], f.scale as f64);
        for j in 0..f.dim {
            for k in 0..f.dim {
                let (r, c) = (2 * (off + j), 2 * (off + k));
                let h = g[j][k];
                b[(r, c)] = 2.0 * h.re;
                b[(r, c + 1)] = 2.0 * h.im;
                b[(r + 1, c)] = -2.0 * h.im;
                b[(r + 1, c + 1)] = 2.0 * h.re;
            }
        }
    }
    let j = complex_structure(n);
    let omega = -(&b * &j);
    Ok(MetricData { omega, j, b, liouville: liouville_at(model, p)? })
}

/// ω^n/n! against chart Lebesgue measure: ∏ (2c)^m / (1+|z|²)^{m+1}.
pub fn liouville_at(model: &ModelManifold, p: &ChartPoint) -> Result<f64> {
    p.check(model)?;
    let z = p.affine();
    let mut out = 1.0;
    for (i, f) in model.factors().iter().enumerate() {
        let off = model.affine_offset(i);
        let s = 1.0 + z[off..off + f.dim].iter().map(|w| w.norm_sqr()).sum::<f64>();
        out *= (2.0 * f.scale as f64).powi(f.dim as i32) / s.powi(f.dim as i32 + 1);
    }
    Ok(out)
}

/// Liouville volume of M by quadrature; errors when two refinement levels
/// disagree beyond 1e-8.
pub fn total_volume(model: &ModelManifold) -> Result<f64> {
    crate::integration::integrate_m_converged(model, |_| 1.0, 2)
}

pub fn complex_to_real(v: &[Complex64]) -> DVector<f64> {
    DVector::from_iterator(2 * v.len(), v.iter().flat_map(|w| [w.re, w.im]))
}

pub fn real_to_complex(v: &DVector<f64>) -> Vec<Complex64> {
    (0..v.len() / 2).map(|a| Complex64::new(v[2 * a], v[2 * a + 1])).collect()
}

/// Pushes a tangent vector at `p` through the coordinate scaling
/// `Z_a ↦ scale_a Z_a` and expresses it in `target_charts`.
pub fn push_tangent(
    model: &ModelManifold,
    p: &ChartPoint,
    v: &[Complex64],
    scale: &[Complex64],
    target_charts: &[usize],
) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(model.n());
    for (i, f) in model.factors().iter().enumerate() {
        let aoff = model.affine_offset(i);
        let hoff = model.homogeneous_offset(i);
        let z = p.homogeneous(i);
        let b = p.charts()[i];
        let mut dz = vec![Complex64::new(0.0, 0.0); f.dim + 1];
        let mut k = 0;
        for (a, slot) in dz.iter_mut().enumerate() {
            if a != b {
                *slot = v[aoff + k];
                k += 1;
            }
        }
        let y: Vec<Complex64> = (0..=f.dim).map(|a| z[a] * scale[hoff + a]).collect();
        let dy: Vec<Complex64> = (0..=f.dim).map(|a| dz[a] * scale[hoff + a]).collect();
        let bt = target_charts[i];
        for a in (0..=f.dim).filter(|&a| a != bt) {
            out.push((dy[a] * y[bt] - y[a] * dy[bt]) / (y[bt] * y[bt]));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn cp1_origin_metric_is_twice_identity() {
        let m = ModelManifold::power(1, 1).unwrap();
        let p = ChartPoint::from_affine(&m, &[0], &[c(0.0, 0.0)]).unwrap();
        let md = metric_at(&m, &p).unwrap();
        assert!((md.b.clone() - DMatrix::identity(2, 2) * 2.0).amax() < 1e-15);
        assert!((md.liouville - 2.0).abs() < 1e-15);
    }

    #[test]
    fn cp1_unit_circle_angular_norm() {
        let m = ModelManifold::power(1, 1).unwrap();
        let z = c(0.6, 0.8);
        let p = ChartPoint::from_affine(&m, &[0], &[z]).unwrap();
        let md = metric_at(&m, &p).unwrap();
        let dtheta = complex_to_real(&[c(0.0, 1.0) * z]);
        assert!((md.inner(&dtheta, &dtheta) - 0.5).abs() < 1e-14);
        assert!((md.liouville - 0.5).abs() < 1e-15);
    }

    #[test]
    fn product_density_at_origin() {
        let m = ModelManifold::power(1, 2).unwrap();
        let p = ChartPoint::from_affine(&m, &[0, 0], &[c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert!((liouville_at(&m, &p).unwrap() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn chart_mismatch_is_structural() {
        let m1 = ModelManifold::power(1, 1).unwrap();
        let m2 = ModelManifold::power(1, 2).unwrap();
        let p = ChartPoint::from_affine(&m1, &[0], &[c(0.1, 0.0)]).unwrap();
        assert!(matches!(metric_at(&m2, &p), Err(Error::Structural(_))));
    }

    #[test]
    fn renormalization_round_trip() {
        let m = ModelManifold::new(vec![Factor::new(2, 1).unwrap(), Factor::new(1, 3).unwrap()]).unwrap();
        let h = vec![vec![c(0.2, 0.1), c(-1.5, 0.3), c(0.4, -0.9)], vec![c(2.0, 1.0), c(0.1, 0.0)]];
        let p = ChartPoint::from_homogeneous(&m, h).unwrap();
        assert_eq!(p.charts(), &[1, 0]);
        let q = ChartPoint::from_affine(&m, p.charts(), &p.affine()).unwrap();
        let r = q.renormalized(&m);
        for (a, b) in p.affine().iter().zip(r.affine()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn closed_form_volumes() {
        assert!((ModelManifold::power(1, 1).unwrap().volume_exact() - 2.0 * PI).abs() < 1e-14);
        assert!((ModelManifold::power(1, 2).unwrap().volume_exact() - 4.0 * PI * PI).abs() < 1e-13);
        let m = ModelManifold::new(vec![Factor::new(1, 2).unwrap()]).unwrap();
        assert!((m.volume_exact() - 4.0 * PI).abs() < 1e-14);
    }
}
