use super::{moment, orbit_volume, ActionSpec};
use crate::error::{Error, Result};
use crate::numeric::{gauss_legendre_on, KahanSum};
use crate::toric_geometry::{ChartPoint, ModelManifold};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::f64::consts::PI;

const FEAS_TOL: f64 = 1e-12;

/// A quadrature node on the moment-polytope slice {Φ = 0}: moment
/// coordinates for every homogeneous slot and the surface-measure weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceNode {
    pub u: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone)]
enum Cells {
    Empty,
    Point,
    Interval(f64, f64),
    Triangles(Vec<[DVector<f64>; 3]>),
}

/// The slice of the product of simplices cut out by Φ = 0, parametrized by an
/// orthonormal basis of the kernel of the linear part of Φ.
#[derive(Debug, Clone)]
pub struct SlicePolytope {
    factor_dims: Vec<usize>,
    origin: DVector<f64>,
    null: DMatrix<f64>,
    coarea: f64,
    cells: Cells,
    vertices: Vec<DVector<f64>>,
}

impl SlicePolytope {
    pub fn new(model: &ModelManifold, action: &ActionSpec) -> Result<Self> {
        let n = model.n();
        let d = action.d();
        let lam = action.shift_f64();
        let mut slots = Vec::with_capacity(n);
        for (i, f) in model.factors().iter().enumerate() {
            for a in 1..=f.dim() {
                slots.push((i, a));
            }
        }
        let w = action.weights();
        let mut amat = DMatrix::zeros(d, n);
        let mut rhs = DVector::zeros(d);
        for j in 0..d {
            let mut base = 0.0;
            for (i, f) in model.factors().iter().enumerate() {
                let off = model.homogeneous_offset(i);
                base += f.scale() as f64 * w[j][off] as f64;
            }
            rhs[j] = 2.0 * PI * (lam[j] - base);
            for (r, &(i, a)) in slots.iter().enumerate() {
                let off = model.homogeneous_offset(i);
                let c = model.factors()[i].scale() as f64;
                amat[(j, r)] = 2.0 * PI * c * (w[j][off + a] - w[j][off]) as f64;
            }
        }
        let aat = &amat * amat.transpose();
        let det = aat.determinant();
        if det.abs() < 1e-12 {
            return Err(Error::Structural("moment map has degenerate linear part".into()));
        }
        let measure_const: f64 = model
            .factors()
            .iter()
            .map(|f| (f.scale() as f64).powi(f.dim() as i32))
            .product();
        let coarea = measure_const / det.sqrt();
        let origin = amat.transpose() * aat.clone().try_inverse().expect("nonsingular") * &rhs;
        let null = null_space(&amat);
        let k = null.ncols();
        let factor_dims: Vec<usize> = model.factors().iter().map(|f| f.dim()).collect();

        // constraints α + β·t ≥ 0
        let mut cons: Vec<(f64, DVector<f64>)> = Vec::new();
        for r in 0..n {
            cons.push((origin[r], null.row(r).transpose()));
        }
        let mut r0 = 0;
        for &m in &factor_dims {
            let mut alpha = 1.0;
            let mut beta = DVector::zeros(k);
            for r in r0..r0 + m {
                alpha -= origin[r];
                beta -= null.row(r).transpose();
            }
            cons.push((alpha, beta));
            r0 += m;
        }

        let (cells, vertices) = match k {
            0 => {
                if cons.iter().all(|(a, _)| *a >= -FEAS_TOL) {
                    (Cells::Point, vec![DVector::zeros(0)])
                } else {
                    (Cells::Empty, vec![])
                }
            }
            1 => {
                let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                let mut feasible = true;
                for (a, b) in &cons {
                    let b = b[0];
                    if b.abs() < 1e-15 {
                        if *a < -FEAS_TOL {
                            feasible = false;
                        }
                    } else if b > 0.0 {
                        lo = lo.max(-a / b);
                    } else {
                        hi = hi.min(-a / b);
                    }
                }
                if feasible && lo <= hi + FEAS_TOL {
                    let hi = hi.max(lo);
                    (
                        Cells::Interval(lo, hi),
                        vec![DVector::from_element(1, lo), DVector::from_element(1, hi)],
                    )
                } else {
                    (Cells::Empty, vec![])
                }
            }
            2 => {
                let big = 4.0 * (1.0 + origin.norm() + (n as f64).sqrt());
                let mut poly = vec![
                    DVector::from_vec(vec![-big, -big]),
                    DVector::from_vec(vec![big, -big]),
                    DVector::from_vec(vec![big, big]),
                    DVector::from_vec(vec![-big, big]),
                ];
                for (a, b) in &cons {
                    poly = clip(&poly, *a, b);
                    if poly.is_empty() {
                        break;
                    }
                }
                if polygon_area(&poly) <= FEAS_TOL {
                    if poly.is_empty() {
                        (Cells::Empty, vec![])
                    } else {
                        (Cells::Triangles(vec![]), poly)
                    }
                } else {
                    let tris = (1..poly.len() - 1)
                        .map(|j| [poly[0].clone(), poly[j].clone(), poly[j + 1].clone()])
                        .collect();
                    (Cells::Triangles(tris), poly)
                }
            }
            _ => {
                return Err(Error::Structural(format!(
                    "zero-set slices of dimension {k} are not supported (at most 2)"
                )))
            }
        };
        Ok(Self { factor_dims, origin, null, coarea, cells, vertices })
    }

    pub fn dim(&self) -> usize {
        self.null.ncols()
    }

    pub fn is_empty(&self) -> bool {
        matches!(self.cells, Cells::Empty)
    }

    /// ∏ c_i^{m_i} / √det(AAᵀ): converts slice surface measure times angle
    /// measure into the Liouville-over-|dΦ| measure on the zero set.
    pub fn coarea_constant(&self) -> f64 {
        self.coarea
    }

    fn full_u(&self, t: &DVector<f64>) -> Vec<f64> {
        let ua = &self.origin + &self.null * t;
        let mut out = Vec::new();
        let mut r0 = 0;
        for &m in &self.factor_dims {
            let s: f64 = (r0..r0 + m).map(|r| ua[r]).sum();
            out.push((1.0 - s).max(0.0));
            out.extend((r0..r0 + m).map(|r| ua[r].max(0.0)));
            r0 += m;
        }
        out
    }

    /// Moment coordinates of the slice vertices (all homogeneous slots).
    pub fn vertices_moment(&self) -> Vec<Vec<f64>> {
        self.vertices.iter().map(|t| self.full_u(t)).collect()
    }

    /// Gauss rule on the slice with `points` nodes per dimension.
    pub fn quadrature(&self, points: usize) -> Vec<SliceNode> {
        match &self.cells {
            Cells::Empty => vec![],
            Cells::Point => vec![SliceNode { u: self.full_u(&DVector::zeros(0)), weight: 1.0 }],
            Cells::Interval(lo, hi) => {
                // Graded by t ↦ t³(10 − 15t + 6t²): densities on the slice can
                // carry u log u type terms at the endpoints.
                let (x, w) = gauss_legendre_on(points, 0.0, 1.0);
                let len = hi - lo;
                x.iter()
                    .zip(&w)
                    .map(|(t, w)| {
                        let g = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
                        let dg = 30.0 * t * t * (1.0 - t) * (1.0 - t);
                        SliceNode { u: self.full_u(&DVector::from_element(1, lo + len * g)), weight: w * len * dg }
                    })
                    .collect()
            }
            Cells::Triangles(tris) => {
                let (x, w) = gauss_legendre_on(points, 0.0, 1.0);
                let mut out = Vec::new();
                for [v0, v1, v2] in tris {
                    let e1 = v1 - v0;
                    let e2 = v2 - v1;
                    let area2 = (e1[0] * e2[1] - e1[1] * e2[0]).abs();
                    for (s, ws) in x.iter().zip(&w) {
                        for (t, wt) in x.iter().zip(&w) {
                            let p = v0 + &e1 * *s + &e2 * (s * t);
                            out.push(SliceNode { u: self.full_u(&p), weight: ws * wt * s * area2 });
                        }
                    }
                }
                out
            }
        }
    }
}

fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (d, n) = a.shape();
    if n == d {
        return DMatrix::zeros(n, 0);
    }
    // orthonormal complement of the row space via QR of [Aᵀ | I]
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for j in 0..d {
        cols.push(a.row(j).transpose());
    }
    for j in 0..n {
        cols.push(DVector::from_fn(n, |r, _| if r == j { 1.0 } else { 0.0 }));
    }
    for v in cols {
        let mut v = v;
        for _ in 0..2 {
            for b in &basis {
                let p = v.dot(b);
                v -= b * p;
            }
        }
        let nrm = v.norm();
        if nrm > 1e-10 {
            basis.push(v / nrm);
        }
        if basis.len() == n {
            break;
        }
    }
    DMatrix::from_columns(&basis[d..])
}

fn clip(poly: &[DVector<f64>], a: f64, b: &DVector<f64>) -> Vec<DVector<f64>> {
    let val = |p: &DVector<f64>| a + b.dot(p);
    let mut out = Vec::new();
    for i in 0..poly.len() {
        let p = &poly[i];
        let q = &poly[(i + 1) % poly.len()];
        let (vp, vq) = (val(p), val(q));
        if vp >= 0.0 {
            out.push(p.clone());
        }
        if (vp >= 0.0) != (vq >= 0.0) {
            let s = vp / (vp - vq);
            out.push(p + (q - p) * s);
        }
    }
    out
}

fn polygon_area(poly: &[DVector<f64>]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut a = 0.0;
    for i in 0..poly.len() {
        let p = &poly[i];
        let q = &poly[(i + 1) % poly.len()];
        a += p[0] * q[1] - p[1] * q[0];
    }
    0.5 * a.abs()
}

/// Product quadrature on Φ⁻¹(0): Gauss nodes on the slice times a uniform
/// angle grid on the big torus. Weights carry the Riemannian zero-set measure.
#[derive(Debug, Clone)]
pub struct ZeroSetRule {
    slice: Vec<SliceNode>,
    orbit_volumes: Vec<f64>,
    angle_count: usize,
    angle_slots: Vec<usize>,
    homogeneous_len: usize,
    coarea: f64,
    level: usize,
}

impl ZeroSetRule {
    /// Refinement `level` ≥ 1 maps to 6·2^level slice points per dimension
    /// and 4·2^level angles per circle.
    pub fn new(model: &ModelManifold, action: &ActionSpec, level: usize) -> Result<Self> {
        let level = level.max(1);
        let mut rule = Self::with_resolution(model, action, 6 << level, 4 << level)?;
        rule.level = level;
        Ok(rule)
    }

    pub fn with_resolution(model: &ModelManifold, action: &ActionSpec, slice_points: usize, angle_count: usize) -> Result<Self> {
        let report = super::validate::geometric_checks(model, action);
        if let Some(bad) = report.iter().find(|c| !c.passed) {
            return Err(Error::Precondition(format!(
                "zero-set quadrature needs a valid scenario: {}",
                bad.reason
            )));
        }
        let poly = SlicePolytope::new(model, action)?;
        let slice = poly.quadrature(slice_points.max(1));
        let orbit_volumes = slice
            .par_iter()
            .map(|node| {
                let p = ChartPoint::from_moment_angles(model, &node.u, &vec![0.0; node.u.len()])?;
                orbit_volume(model, action, &p)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut angle_slots = Vec::new();
        for (i, f) in model.factors().iter().enumerate() {
            let off = model.homogeneous_offset(i);
            angle_slots.extend((1..=f.dim()).map(|a| off + a));
        }
        Ok(Self {
            slice,
            orbit_volumes,
            angle_count: angle_count.max(1),
            angle_slots,
            homogeneous_len: model.homogeneous_len(),
            coarea: poly.coarea_constant(),
            level: 0,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn slice_nodes(&self) -> &[SliceNode] {
        &self.slice
    }

    pub fn orbit_volumes(&self) -> &[f64] {
        &self.orbit_volumes
    }

    pub fn angle_count(&self) -> usize {
        self.angle_count
    }

    /// Homogeneous slots that carry an angle (all but the first per factor).
    pub fn angle_slots(&self) -> &[usize] {
        &self.angle_slots
    }

    pub fn angle_node_count(&self) -> usize {
        self.angle_count.pow(self.angle_slots.len() as u32)
    }

    pub fn node_count(&self) -> usize {
        self.slice.len() * self.angle_node_count()
    }

    /// Zero-set measure carried by slice node `i`, integrated over its torus fiber.
    pub fn fiber_weight(&self, i: usize) -> f64 {
        let n = self.angle_slots.len() as i32;
        self.slice[i].weight * (2.0 * PI).powi(n) * self.coarea * self.orbit_volumes[i]
    }

    /// Angles of every homogeneous slot at angle index `j`.
    pub fn angles(&self, j: usize) -> Vec<f64> {
        let mut theta = vec![0.0; self.homogeneous_len];
        let mut rem = j;
        for &slot in &self.angle_slots {
            theta[slot] = 2.0 * PI * (rem % self.angle_count) as f64 / self.angle_count as f64;
            rem /= self.angle_count;
        }
        theta
    }

    pub fn point(&self, model: &ModelManifold, slice_idx: usize, angle_idx: usize) -> ChartPoint {
        ChartPoint::from_moment_angles(model, &self.slice[slice_idx].u, &self.angles(angle_idx))
            .expect("slice nodes are valid points")
    }

    /// Largest |Φ| over the slice base points.
    pub fn max_moment_residual(&self, model: &ModelManifold, action: &ActionSpec) -> f64 {
        (0..self.slice.len())
            .map(|i| {
                moment(action, &self.point(model, i, 0)).iter().map(|v| v.abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// ∫_{Φ⁻¹(0)} f dvol over every node.
    pub fn integrate<F>(&self, model: &ModelManifold, f: F) -> f64
    where
        F: Fn(&ChartPoint) -> f64 + Sync,
    {
        let per_slice: Vec<f64> = (0..self.slice.len())
            .into_par_iter()
            .map(|i| {
                let mut acc = KahanSum::new();
                let na = self.angle_node_count();
                for j in 0..na {
                    acc.add(f(&self.point(model, i, j)));
                }
                acc.value() / na as f64 * self.fiber_weight(i)
            })
            .collect();
        crate::numeric::compensated_sum(per_slice)
    }
}
