//! The restrict-and-descend maps A_k (plain) and B_k (half-form corrected)
//! from invariant sections on M to sections on the reduced space, Gram
//! matrices on both sides, Toeplitz operators and peak sections.
//!
//! Reduced sections are never put in coordinates on M//G. They are stored as
//! values at the nodes of a [`ZeroSetRule`], and reduced integrals use the
//! 1/vol(G·x₀) coarea weight.
//!
//! Monomials are characters of the big torus, so reduced pairings of
//! monomials integrate their angular part exactly: distinct monomials are
//! orthogonal and only the slice integral is done numerically.
//! [`reduced_gram_by_quadrature`] does the full node sum instead.

use crate::densities::{density_i, density_j, Observable};
use crate::error::{Error, Result};
use crate::integration::{
    corrected_norm_exact, integrate_reduced, monomial_moment_exact, monomial_norm_exact, orbit_variation,
};
use crate::numeric::{compensated_sum, KahanSum};
use crate::sections::{
    all_multi_indices, degrees, descent_factor, frame_value, invariant_basis, is_invariant_index, magnitude, pairing,
    MultiIndex, Section, Twist,
};
use crate::toric_geometry::{ChartPoint, ModelManifold};
use crate::torus_action::{validate_scenario, ActionSpec, SlicePolytope, ZeroSetRule};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

/// A reduced section as values at the nodes of a zero-set rule, slice-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSection {
    k: u32,
    twist: Twist,
    angle_nodes: usize,
    values: Vec<Complex64>,
}

impl ReducedSection {
    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn twist(&self) -> Twist {
        self.twist
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn value(&self, slice_idx: usize, angle_idx: usize) -> Complex64 {
        self.values[slice_idx * self.angle_nodes + angle_idx]
    }

    /// |value|² per node.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm_sqr()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == Complex64::new(0.0, 0.0))
    }
}

fn require_invariant(action: &ActionSpec, s: &Section) -> Result<()> {
    if !s.is_invariant(action) {
        return Err(Error::Precondition("section is not G-invariant".into()));
    }
    Ok(())
}

fn require_half_forms(model: &ModelManifold, action: &ActionSpec, k: u32) -> Result<()> {
    let report = validate_scenario(model, action, k);
    if !report.passes_corrected() {
        let why: Vec<String> = report.failures().iter().map(|c| format!("{} {}", c.kind.label(), c.reason)).collect();
        return Err(Error::Precondition(format!(
            "scenario does not support half-form sections at k = {k}: {}",
            why.join("; ")
        )));
    }
    Ok(())
}

fn require_plain(model: &ModelManifold, action: &ActionSpec, k: u32) -> Result<()> {
    let report = validate_scenario(model, action, k);
    if !report.passes_plain() {
        let why: Vec<String> = report.failures().iter().map(|c| format!("{} {}", c.kind.label(), c.reason)).collect();
        return Err(Error::Precondition(format!("scenario is not valid at k = {k}: {}", why.join("; "))));
    }
    Ok(())
}

fn node_values<F>(model: &ModelManifold, rule: &ZeroSetRule, value: F) -> Result<Vec<Complex64>>
where
    F: Fn(&ChartPoint) -> Result<Complex64> + Sync,
{
    let na = rule.angle_node_count();
    let per_slice = (0..rule.slice_nodes().len())
        .into_par_iter()
        .map(|i| (0..na).map(|j| value(&rule.point(model, i, j))).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(per_slice.into_iter().flatten().collect())
}

/// A_k s: restriction of an invariant plain section to the zero-set nodes.
pub fn map_a(model: &ModelManifold, action: &ActionSpec, rule: &ZeroSetRule, s: &Section) -> Result<ReducedSection> {
    if s.twist() != Twist::Plain {
        return Err(Error::Precondition("A_k acts on plain sections".into()));
    }
    require_invariant(action, s)?;
    let values = node_values(model, rule, |p| frame_value(model, s, p))?;
    Ok(ReducedSection { k: s.k(), twist: Twist::Plain, angle_nodes: rule.angle_node_count(), values })
}

/// B_k r: restriction of an invariant half-form section, with the half-form
/// descended by contraction with the holomorphic generators.
pub fn map_b(model: &ModelManifold, action: &ActionSpec, rule: &ZeroSetRule, r: &Section) -> Result<ReducedSection> {
    if r.twist() != Twist::HalfForm {
        return Err(Error::Precondition("B_k acts on half-form sections".into()));
    }
    require_half_forms(model, action, r.k())?;
    require_invariant(action, r)?;
    let values = node_values(model, rule, |p| Ok(frame_value(model, r, p)? * descent_factor(model, action, p)?.sqrt()))?;
    Ok(ReducedSection { k: r.k(), twist: Twist::HalfForm, angle_nodes: rule.angle_node_count(), values })
}

/// (k/2π)^{n/2}, the upstairs norm prefactor.
pub fn upstairs_prefactor(model: &ModelManifold, k: u32) -> f64 {
    (k as f64 / (2.0 * PI)).powf(model.n() as f64 / 2.0)
}

/// (k/2π)^{(n−d)/2}, the downstairs norm prefactor.
pub fn downstairs_prefactor(model: &ModelManifold, action: &ActionSpec, k: u32) -> f64 {
    (k as f64 / (2.0 * PI)).powf((model.n() - action.d()) as f64 / 2.0)
}

/// ⟨a, b⟩ on the reduced space from node data, prefactor included.
pub fn reduced_inner(
    model: &ModelManifold,
    action: &ActionSpec,
    rule: &ZeroSetRule,
    a: &ReducedSection,
    b: &ReducedSection,
) -> Result<Complex64> {
    if a.k != b.k || a.twist != b.twist || a.values.len() != b.values.len() || a.angle_nodes != rule.angle_node_count() {
        return Err(Error::Structural("reduced sections do not share a bundle and a rule".into()));
    }
    let na = rule.angle_node_count();
    let mut re = KahanSum::new();
    let mut im = KahanSum::new();
    for i in 0..rule.slice_nodes().len() {
        let w = rule.fiber_weight(i) / rule.orbit_volumes()[i] / na as f64;
        for j in 0..na {
            let v = a.value(i, j) * b.value(i, j).conj() * w;
            re.add(v.re);
            im.add(v.im);
        }
    }
    Ok(Complex64::new(re.value(), im.value()) * downstairs_prefactor(model, action, a.k))
}

/// ⟨s, t⟩ on M with the upstairs prefactor, from the closed-form monomial
/// norms and torus orthogonality.
pub fn upstairs_inner(model: &ModelManifold, s: &Section, t: &Section) -> Result<Complex64> {
    if s.k() != t.k() || s.twist() != t.twist() {
        return Err(Error::Structural("sections do not share a bundle".into()));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (a, ca) in s.terms() {
        for (b, cb) in t.terms() {
            if a == b {
                acc += ca * cb.conj() * exact_norm(model, a, s.k(), s.twist())?;
            }
        }
    }
    Ok(acc * upstairs_prefactor(model, s.k()))
}

fn exact_norm(model: &ModelManifold, a: &MultiIndex, k: u32, twist: Twist) -> Result<f64> {
    match twist {
        Twist::Plain => monomial_norm_exact(model, a, k),
        Twist::HalfForm => corrected_norm_exact(model, a, k),
    }
}

/// Per-slice-node data shared by the factorized reduced integrals: the
/// θ = 0 base points, reduced weights fiber/vol and the descent factor.
struct SliceTable {
    points: Vec<ChartPoint>,
    weight: Vec<f64>,
    descent: Vec<f64>,
}

impl SliceTable {
    fn build(model: &ModelManifold, action: &ActionSpec, rule: &ZeroSetRule, twist: Twist) -> Result<Self> {
        let ns = rule.slice_nodes().len();
        let points: Vec<ChartPoint> = (0..ns).map(|i| rule.point(model, i, 0)).collect();
        let weight = (0..ns).map(|i| rule.fiber_weight(i) / rule.orbit_volumes()[i]).collect();
        let descent = match twist {
            Twist::Plain => vec![1.0; ns],
            Twist::HalfForm => points.par_iter().map(|p| descent_factor(model, action, p)).collect::<Result<Vec<_>>>()?,
        };
        Ok(Self { points, weight, descent })
    }

    /// Σ_i weight·descent·extra_i·|s_a|²(x_i).
    fn monomial_integral(&self, model: &ModelManifold, s: &Section, extra: &[f64]) -> Result<f64> {
        let terms = (0..self.points.len())
            .map(|i| Ok(self.weight[i] * self.descent[i] * extra[i] * magnitude(model, s, &self.points[i])?))
            .collect::<Result<Vec<_>>>()?;
        Ok(compensated_sum(terms))
    }
}

/// Downstairs Gram matrix of the monomial `basis` (after A_k or B_k),
/// optionally weighted by a per-slice-node function. Off-diagonal entries
/// vanish by exact angular integration.
fn factorized_gram(
    model: &ModelManifold,
    action: &ActionSpec,
    table: &SliceTable,
    basis: &[MultiIndex],
    k: u32,
    twist: Twist,
    extra: &[f64],
) -> Result<DMatrix<f64>> {
    let pref = downstairs_prefactor(model, action, k);
    let diag = basis
        .par_iter()
        .map(|a| {
            let s = Section::monomial(model, k, twist, a.clone())?;
            Ok(pref * table.monomial_integral(model, &s, extra)?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)))
}

/// Downstairs Gram matrix by summing the pointwise pairing over every node of
/// `rule` through [`integrate_reduced`]. Slow; used to confirm the
/// factorized assembly.
pub fn reduced_gram_by_quadrature(
    model: &ModelManifold,
    action: &ActionSpec,
    rule: &ZeroSetRule,
    basis: &[MultiIndex],
    k: u32,
    twist: Twist,
) -> Result<DMatrix<Complex64>> {
    let sections = basis
        .iter()
        .map(|a| Section::monomial(model, k, twist, a.clone()))
        .collect::<Result<Vec<_>>>()?;
    let pref = downstairs_prefactor(model, action, k);
    let dim = basis.len();
    let mut g = DMatrix::zeros(dim, dim);
    for b in 0..dim {
        for c in b..dim {
            let entry = |p: &ChartPoint| -> Complex64 {
                let desc = match twist {
                    Twist::Plain => 1.0,
                    Twist::HalfForm => descent_factor(model, action, p).unwrap_or(f64::NAN),
                };
                pairing(model, &sections[b], &sections[c], p).unwrap_or(Complex64::new(f64::NAN, 0.0)) * desc
            };
            let re = integrate_reduced(model, action, rule, |p| entry(p).re)?;
            let im = integrate_reduced(model, action, rule, |p| entry(p).im)?;
            if !(re.is_finite() && im.is_finite()) {
                return Err(Error::Numeric("pointwise pairing failed on a zero-set node".into()));
            }
            g[(b, c)] = Complex64::new(re, im) * pref;
            g[(c, b)] = g[(b, c)].conj();
        }
    }
    Ok(g)
}

/// A zero-set rule fine enough for degree-k integrands on the slice.
pub fn rule_for(model: &ModelManifold, action: &ActionSpec, k: u32, level: usize) -> Result<ZeroSetRule> {
    let level = level.max(1);
    ZeroSetRule::with_resolution(model, action, (6usize << level).max(k as usize + 32), 4 << level)
}

/// Generalized eigenvalues of G_down v = μ G_up v, ascending, and the defect
/// (μ_max − μ_min)/(μ_max + μ_min).
pub fn pencil_defect(g_down: &DMatrix<f64>, g_up: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let chol = g_up
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numeric("upstairs Gram matrix is not positive definite".into()))?;
    let linv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("upstairs Cholesky factor is singular".into()))?;
    let c = &linv * g_down * linv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let mut mu: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
    mu.sort_by(f64::total_cmp);
    if mu.is_empty() || mu[0] <= 0.0 {
        return Err(Error::Numeric("downstairs Gram matrix is not positive definite".into()));
    }
    let (lo, hi) = (mu[0], mu[mu.len() - 1]);
    Ok((mu, (hi - lo) / (hi + lo)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramReport {
    pub k: u32,
    pub twist: Twist,
    pub basis: Vec<MultiIndex>,
    pub g_up: DMatrix<f64>,
    pub g_down: DMatrix<f64>,
    /// Generalized eigenvalues of (G_down, G_up), ascending.
    pub mu: Vec<f64>,
    pub defect: f64,
}

/// Gram matrices of the invariant monomial basis before and after A_k
/// (`Twist::Plain`) or B_k (`Twist::HalfForm`).
pub fn gram_report(model: &ModelManifold, action: &ActionSpec, k: u32, twist: Twist, level: usize) -> Result<GramReport> {
    match twist {
        Twist::Plain => require_plain(model, action, k)?,
        Twist::HalfForm => require_half_forms(model, action, k)?,
    }
    let basis = invariant_basis(model, action, k, twist)?;
    if basis.is_empty() {
        return Err(Error::Precondition(format!("no invariant sections at k = {k}")));
    }
    let pref = upstairs_prefactor(model, k);
    let up = basis.iter().map(|a| Ok(pref * exact_norm(model, a, k, twist)?)).collect::<Result<Vec<_>>>()?;
    let g_up = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(up));
    let rule = rule_for(model, action, k, level)?;
    let table = SliceTable::build(model, action, &rule, twist)?;
    let ones = vec![1.0; table.points.len()];
    let g_down = factorized_gram(model, action, &table, &basis, k, twist, &ones)?;
    let (mu, defect) = pencil_defect(&g_down, &g_up)?;
    Ok(GramReport { k, twist, basis, g_up, g_down, mu, defect })
}

/// The density-weighted downstairs Gram matrix: pairings of A_k s weighted by
/// I_k (plain) or of B_k r weighted by J_k (half-form). This equals the
/// upstairs Gram matrix. Also returns the density at each slice node.
pub fn weighted_gram(
    model: &ModelManifold,
    action: &ActionSpec,
    k: u32,
    twist: Twist,
    level: usize,
) -> Result<(Vec<MultiIndex>, DMatrix<f64>, Vec<f64>)> {
    match twist {
        Twist::Plain => require_plain(model, action, k)?,
        Twist::HalfForm => require_half_forms(model, action, k)?,
    }
    let basis = invariant_basis(model, action, k, twist)?;
    let rule = rule_for(model, action, k, level)?;
    let table = SliceTable::build(model, action, &rule, twist)?;
    let dens = table
        .points
        .par_iter()
        .map(|p| match twist {
            Twist::Plain => density_i(model, action, p, k, &Observable::One),
            Twist::HalfForm => density_j(model, action, p, k, &Observable::One),
        })
        .collect::<Result<Vec<_>>>()?;
    let g = factorized_gram(model, action, &table, &basis, k, twist, &dens)?;
    Ok((basis, g, dens))
}

/// Relative Frobenius distance ‖a − b‖/‖b‖.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzMatrices {
    pub k: u32,
    pub symbol: String,
    /// T_f on invariant half-form sections, in the orthonormalized basis.
    pub upstairs: DMatrix<f64>,
    /// The reduced Toeplitz operator of the restricted symbol, in an
    /// orthonormal basis of the reduced space.
    pub downstairs: DMatrix<f64>,
    /// B_k T_f B_k^{-1} in the same downstairs basis.
    pub conjugated: DMatrix<f64>,
    /// Spectral norm of downstairs − conjugated.
    pub defect: f64,
}

fn sym_power(m: &DMatrix<f64>, p: f64) -> Result<DMatrix<f64>> {
    let e = SymmetricEigen::new((m + m.transpose()) * 0.5);
    if e.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::Numeric("matrix power of a non-positive matrix".into()));
    }
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|l| l.powf(p)));
    Ok(&e.eigenvectors * d * e.eigenvectors.transpose())
}

/// Upstairs and downstairs Toeplitz matrices of an invariant observable on
/// half-form sections, and the defect between the reduced operator and the
/// conjugate of the upstairs one by B_k.
pub fn toeplitz_pair(
    model: &ModelManifold,
    action: &ActionSpec,
    k: u32,
    f: &Observable,
    level: usize,
) -> Result<ToeplitzMatrices> {
    require_half_forms(model, action, k)?;
    let basis = invariant_basis(model, action, k, Twist::HalfForm)?;
    if basis.is_empty() {
        return Err(Error::Precondition(format!("no invariant half-form sections at k = {k}")));
    }
    let rule = rule_for(model, action, k, level)?;
    let var = orbit_variation(model, action, &rule, &|p: &ChartPoint| f.eval(model, p));
    if var > 1e-8 {
        return Err(Error::Precondition(format!("symbol {} is not G-invariant", f.tag())));
    }
    let dim = basis.len();
    let (c0, linear) = f.affine_form(model);
    let mut norms = Vec::with_capacity(dim);
    let mut tup = DMatrix::zeros(dim, dim);
    for (b, a) in basis.iter().enumerate() {
        let nrm = corrected_norm_exact(model, a, k)?;
        let mut fv = c0 * nrm;
        for &(slot, coef) in &linear {
            fv += coef * monomial_moment_exact(model, a, k, Twist::HalfForm, slot)?;
        }
        tup[(b, b)] = fv / nrm;
        norms.push(nrm * upstairs_prefactor(model, k));
    }
    let table = SliceTable::build(model, action, &rule, Twist::HalfForm)?;
    let ones = vec![1.0; table.points.len()];
    let fvals: Vec<f64> = rule.slice_nodes().iter().map(|n| f.eval_moment(model, &n.u)).collect();
    let scale = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(dim, norms.iter().map(|v| v.powf(-0.5))));
    let g = &scale * factorized_gram(model, action, &table, &basis, k, Twist::HalfForm, &ones)? * &scale;
    let fm = &scale * factorized_gram(model, action, &table, &basis, k, Twist::HalfForm, &fvals)? * &scale;
    let g_inv_half = sym_power(&g, -0.5)?;
    let g_half = sym_power(&g, 0.5)?;
    let downstairs = &g_inv_half * fm * &g_inv_half;
    let conjugated = &g_half * &tup * &g_inv_half;
    let defect = (&downstairs - &conjugated).singular_values().max();
    Ok(ToeplitzMatrices { k, symbol: f.tag(), upstairs: tup, downstairs, conjugated, defect })
}

/// Moment coordinates of the slots that carry angles (all but each factor's
/// first).
pub fn affine_moment(model: &ModelManifold, u: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(model.n());
    for (i, f) in model.factors().iter().enumerate() {
        let off = model.homogeneous_offset(i);
        out.extend((1..=f.dim()).map(|a| u[off + a]));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakSection {
    pub index: MultiIndex,
    /// Unit upstairs norm.
    pub section: Section,
    /// Upstairs norm of the bare monomial.
    pub monomial_norm: f64,
}

/// The invariant plain monomial whose lattice point a/D is nearest the
/// moment coordinates of `target`, normalized to unit upstairs norm.
pub fn peak_section(model: &ModelManifold, action: &ActionSpec, k: u32, target: &ChartPoint) -> Result<PeakSection> {
    let basis = invariant_basis(model, action, k, Twist::Plain)?;
    let deg = degrees(model, k, Twist::Plain)?;
    let u = target.moment_coords();
    let dist = |a: &MultiIndex| -> f64 {
        let mut s = 0.0;
        for (i, f) in model.factors().iter().enumerate() {
            let off = model.homogeneous_offset(i);
            for slot in off..=off + f.dim() {
                s += (a.0[slot] as f64 / deg[i] as f64 - u[slot]).powi(2);
            }
        }
        s
    };
    let best = basis
        .iter()
        .min_by(|a, b| dist(a).total_cmp(&dist(b)))
        .ok_or_else(|| Error::Precondition(format!("no invariant sections at k = {k}")))?
        .clone();
    let monomial_norm = (upstairs_prefactor(model, k) * monomial_norm_exact(model, &best, k)?).sqrt();
    let section = Section::monomial(model, k, Twist::Plain, best.clone())?.scaled(Complex64::new(1.0 / monomial_norm, 0.0));
    Ok(PeakSection { index: best, section, monomial_norm })
}

/// Angle-averaged |s|² at each slice node of `rule`, for a plain section.
fn slice_profile(model: &ModelManifold, rule: &ZeroSetRule, s: &Section) -> Result<Vec<f64>> {
    let single = s.terms().len() <= 1;
    (0..rule.slice_nodes().len())
        .into_par_iter()
        .map(|i| {
            if single {
                return magnitude(model, s, &rule.point(model, i, 0));
            }
            let na = rule.angle_node_count();
            let vals = (0..na).map(|j| magnitude(model, s, &rule.point(model, i, j))).collect::<Result<Vec<_>>>()?;
            Ok(compensated_sum(vals) / na as f64)
        })
        .collect()
}

/// Fraction of ‖A_k s‖² carried by slice nodes whose affine moment
/// coordinates lie within `radius` of the target's.
pub fn concentration(
    model: &ModelManifold,
    action: &ActionSpec,
    rule: &ZeroSetRule,
    s: &Section,
    target: &ChartPoint,
    radius: f64,
) -> Result<f64> {
    if s.twist() != Twist::Plain {
        return Err(Error::Precondition("concentration is measured for plain sections".into()));
    }
    require_invariant(action, s)?;
    let t = affine_moment(model, &target.moment_coords());
    let prof = slice_profile(model, rule, s)?;
    let mut near = KahanSum::new();
    let mut all = KahanSum::new();
    for (i, node) in rule.slice_nodes().iter().enumerate() {
        let m = prof[i] * rule.fiber_weight(i) / rule.orbit_volumes()[i];
        all.add(m);
        let u = affine_moment(model, &node.u);
        let d2: f64 = u.iter().zip(&t).map(|(x, y)| (x - y).powi(2)).sum();
        if d2.sqrt() < radius {
            near.add(m);
        }
    }
    if all.value() <= 0.0 {
        return Err(Error::Numeric("section vanishes on the zero set".into()));
    }
    Ok(near.value() / all.value())
}

/// ‖A_k s‖²_down / ‖s‖²_up.
pub fn rayleigh_quotient(model: &ModelManifold, action: &ActionSpec, rule: &ZeroSetRule, s: &Section) -> Result<f64> {
    if s.twist() != Twist::Plain {
        return Err(Error::Precondition("Rayleigh quotients are taken for plain sections".into()));
    }
    require_invariant(action, s)?;
    let prof = slice_profile(model, rule, s)?;
    let down = downstairs_prefactor(model, action, s.k())
        * compensated_sum(
            prof.iter().enumerate().map(|(i, m)| m * rule.fiber_weight(i) / rule.orbit_volumes()[i]),
        );
    let up = upstairs_inner(model, s, s)?.re;
    Ok(down / up)
}

/// (numerical rank, dimension) of the matrix of node values of the invariant
/// basis, columns normalized. Full rank means A_k (or B_k) is injective.
pub fn injectivity_rank(model: &ModelManifold, action: &ActionSpec, k: u32, twist: Twist) -> Result<(usize, usize)> {
    let basis = invariant_basis(model, action, k, twist)?;
    let dim = basis.len();
    if dim == 0 {
        return Ok((0, 0));
    }
    let poly = SlicePolytope::new(model, action)?;
    let nodes = poly.quadrature(5);
    let picks: Vec<&Vec<f64>> = match nodes.len() {
        0 => return Err(Error::Domain("empty zero set".into())),
        1 | 2 => nodes.iter().map(|n| &n.u).collect(),
        l => vec![&nodes[1].u, &nodes[l / 2].u, &nodes[l - 2].u],
    };
    let samples = 4 * dim + 8;
    // Kronecker sequence in the angles
    let alphas: Vec<f64> = (0..model.homogeneous_len()).map(|s| ((s + 2) as f64).sqrt().fract()).collect();
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    for u in picks {
        for t in 1..=samples {
            let theta: Vec<f64> = alphas.iter().map(|a| 2.0 * PI * (a * t as f64).fract()).collect();
            let mut th = theta;
            for i in 0..model.factors().len() {
                th[model.homogeneous_offset(i)] = 0.0;
            }
            let p = ChartPoint::from_moment_angles(model, u, &th)?;
            let row = basis
                .iter()
                .map(|a| {
                    let s = Section::monomial(model, k, twist, a.clone())?;
                    frame_value(model, &s, &p)
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
    }
    let mut m = DMatrix::from_fn(rows.len(), dim, |r, c| rows[r][c]);
    for mut col in m.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= Complex64::new(n, 0.0);
        }
    }
    let sv = m.singular_values();
    let top = sv.max();
    let rank = sv.iter().filter(|&&s| s > 1e-8 * top).count();
    Ok((rank, dim))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DimensionCount {
    pub k: u32,
    pub upstairs: usize,
    pub downstairs: usize,
}

impl DimensionCount {
    pub fn matches(&self) -> bool {
        self.upstairs == self.downstairs
    }
}

fn affine_rank(points: &[&Vec<f64>]) -> isize {
    if points.is_empty() {
        return -1;
    }
    let base = points[0];
    let m = DMatrix::from_fn(points.len(), base.len(), |r, c| points[r][c] - base[c]);
    let sv = m.singular_values();
    sv.iter().filter(|&&s| s > 1e-9).count() as isize
}

/// Dimension of invariant half-form sections upstairs, and of half-form
/// sections on the reduced space counted as shifted lattice points of the
/// reduced polytope: only the slots whose facets bound the slice are
/// shifted inward by one half.
pub fn corrected_dimensions(model: &ModelManifold, action: &ActionSpec, k: u32) -> Result<DimensionCount> {
    let deg = match degrees(model, k, Twist::HalfForm) {
        Ok(d) => d,
        Err(_) => return Ok(DimensionCount { k, upstairs: 0, downstairs: 0 }),
    };
    let upstairs = all_multi_indices(model, &deg)
        .iter()
        .filter(|a| is_invariant_index(action, k, Twist::HalfForm, a))
        .count();

    let poly = SlicePolytope::new(model, action)?;
    let verts = poly.vertices_moment();
    let sdim = poly.dim() as isize;
    let hl = model.homogeneous_len();
    let bounding: Vec<bool> = (0..hl)
        .map(|slot| {
            let on: Vec<&Vec<f64>> = verts.iter().filter(|v| v[slot].abs() < 1e-9).collect();
            sdim >= 1 && affine_rank(&on) == sdim - 1
        })
        .collect();
    // Enumeration box around k·slice, with margin for the unshifted slots.
    let mut lo = vec![0i64; hl];
    let mut hi = vec![0i64; hl];
    for (i, f) in model.factors().iter().enumerate() {
        let off = model.homogeneous_offset(i);
        let margin = f.dim() as i64 + 2;
        for slot in off..=off + f.dim() {
            let (mn, mx) = verts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v[slot]), b.max(v[slot])));
            let scale = (k * f.scale()) as f64;
            lo[slot] = (mn * scale).floor() as i64 - margin;
            hi[slot] = (mx * scale).ceil() as i64 + margin;
        }
    }
    let target = crate::sections::target_weight(action, k, Twist::HalfForm);
    let free: Vec<usize> = (0..model.factors().len())
        .flat_map(|i| {
            let off = model.homogeneous_offset(i);
            (1..=model.factors()[i].dim()).map(move |a| off + a)
        })
        .collect();
    let mut q = vec![0i64; hl];
    let mut downstairs = 0usize;
    let mut idx: Vec<i64> = free.iter().map(|&s| lo[s]).collect();
    if free.iter().any(|&s| lo[s] > hi[s]) {
        return Ok(DimensionCount { k, upstairs, downstairs: 0 });
    }
    loop {
        for (t, &s) in free.iter().enumerate() {
            q[s] = idx[t];
        }
        let mut ok = true;
        for (i, f) in model.factors().iter().enumerate() {
            let off = model.homogeneous_offset(i);
            let rest: i64 = (1..=f.dim()).map(|a| q[off + a]).sum();
            q[off] = deg[i] as i64 - rest;
        }
        for slot in 0..hl {
            if bounding[slot] && q[slot] < 0 {
                ok = false;
            }
        }
        if ok {
            ok = action.weights().iter().zip(&target).all(|(row, t)| {
                let s: i64 = row.iter().zip(&q).map(|(w, x)| w * x).sum();
                num_rational::Rational64::from_integer(s) == *t
            });
        }
        if ok {
            downstairs += 1;
        }
        // odometer
        let mut t = 0;
        loop {
            if t == free.len() {
                return Ok(DimensionCount { k, upstairs, downstairs });
            }
            idx[t] += 1;
            if idx[t] <= hi[free[t]] {
                break;
            }
            idx[t] = lo[free[t]];
            t += 1;
        }
    }
}

/// Smallest k in `ks` from which the corrected dimensions agree for every
/// larger k in the list.
pub fn observed_k0(model: &ModelManifold, action: &ActionSpec, ks: &[u32]) -> Result<Option<u32>> {
    let mut sorted = ks.to_vec();
    sorted.sort_unstable();
    let counts = sorted.iter().map(|&k| corrected_dimensions(model, action, k)).collect::<Result<Vec<_>>>()?;
    let mut k0 = None;
    for c in counts.iter().rev() {
        if !c.matches() {
            break;
        }
        k0 = Some(c.k);
    }
    Ok(k0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::Scenario;

    fn s1_rule() -> (Scenario, ZeroSetRule) {
        let s = Scenario::s1();
        let r = ZeroSetRule::new(&s.model, &s.action, 1).unwrap();
        (s, r)
    }

    #[test]
    fn s1_map_a_quarter() {
        let (s, rule) = s1_rule();
        let sec = Section::monomial(&s.model, 2, Twist::Plain, MultiIndex(vec![1, 1])).unwrap();
        let red = map_a(&s.model, &s.action, &rule, &sec).unwrap();
        for m in red.magnitudes() {
            assert!((m - 0.25).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let (s, rule) = s1_rule();
        let z = Section::zero(&s.model, 2, Twist::Plain).unwrap();
        assert!(map_a(&s.model, &s.action, &rule, &z).unwrap().is_zero());
        let z = Section::zero(&s.model, 3, Twist::HalfForm).unwrap();
        assert!(map_b(&s.model, &s.action, &rule, &z).unwrap().is_zero());
    }

    #[test]
    fn non_invariant_rejected() {
        let (s, rule) = s1_rule();
        let sec = Section::monomial(&s.model, 2, Twist::Plain, MultiIndex(vec![2, 0])).unwrap();
        assert!(matches!(map_a(&s.model, &s.action, &rule, &sec), Err(Error::Precondition(_))));
    }

    #[test]
    fn s1_map_b_is_pi_times_magnitude() {
        let (s, rule) = s1_rule();
        let r = Section::monomial(&s.model, 3, Twist::HalfForm, MultiIndex(vec![1, 1])).unwrap();
        let red = map_b(&s.model, &s.action, &rule, &r).unwrap();
        let p = rule.point(&s.model, 0, 3);
        let up = magnitude(&s.model, &r, &p).unwrap();
        assert!((red.value(0, 3).norm_sqr() / up - PI).abs() < 1e-10);
    }

    #[test]
    fn map_b_needs_half_form_support() {
        let (s, rule) = s1_rule();
        let r = Section::zero(&s.model, 2, Twist::HalfForm).unwrap();
        assert!(matches!(map_b(&s.model, &s.action, &rule, &r), Err(Error::Precondition(_))));
    }

    #[test]
    fn s1_gram_is_one_dimensional() {
        let s = Scenario::s1();
        let g = gram_report(&s.model, &s.action, 4, Twist::Plain, 1).unwrap();
        assert_eq!(g.basis.len(), 1);
        assert_eq!(g.defect, 0.0);
        let i4 = density_i(&s.model, &s.action, &ChartPoint::from_moment_angles(&s.model, &[0.5, 0.5], &[0.0, 0.0]).unwrap(), 4, &Observable::One).unwrap();
        assert!((g.mu[0] * i4 - 1.0).abs() < 1e-9, "{} vs {}", g.mu[0], 1.0 / i4);
    }

    #[test]
    fn factorized_matches_quadrature() {
        let s = Scenario::s2();
        for (k, twist) in [(4, Twist::Plain), (4, Twist::HalfForm)] {
            let g = gram_report(&s.model, &s.action, k, twist, 1).unwrap();
            let rule = ZeroSetRule::with_resolution(&s.model, &s.action, 40, 12).unwrap();
            let q = reduced_gram_by_quadrature(&s.model, &s.action, &rule, &g.basis, k, twist).unwrap();
            let scale = g.g_down.norm();
            for r in 0..g.basis.len() {
                for c in 0..g.basis.len() {
                    assert!((q[(r, c)] - Complex64::new(g.g_down[(r, c)], 0.0)).norm() < 1e-10 * scale);
                }
            }
        }
    }

    #[test]
    fn unit_symbol_gives_identity() {
        let s = Scenario::s2();
        let t = toeplitz_pair(&s.model, &s.action, 8, &Observable::One, 1).unwrap();
        let id = DMatrix::<f64>::identity(t.upstairs.nrows(), t.upstairs.ncols());
        assert!((&t.upstairs - &id).norm() < 1e-12);
        assert!((&t.downstairs - &id).norm() < 1e-10);
        assert!(t.defect < 1e-10);
    }

    #[test]
    fn s2_moment_sum_upstairs_diagonal() {
        let s = Scenario::s2();
        let k = 8;
        let t = toeplitz_pair(&s.model, &s.action, k, &Observable::MomentSum, 1).unwrap();
        let expect = (k as f64 / 2.0 + 1.0) / (k as f64 + 1.0);
        for i in 0..t.upstairs.nrows() {
            assert!((t.upstairs[(i, i)] - expect).abs() < 1e-12);
            assert!((t.downstairs[(i, i)] - 0.5).abs() < 1e-10);
        }
        assert!((t.defect - 0.5 / (k as f64 + 1.0)).abs() < 1e-10);
    }

    #[test]
    fn s2_peak_at_quarter() {
        let s = Scenario::s2();
        let target = ChartPoint::from_moment_angles(&s.model, &[0.75, 0.25, 0.75, 0.25], &[0.0; 4]).unwrap();
        let p = peak_section(&s.model, &s.action, 16, &target).unwrap();
        assert_eq!(p.index, MultiIndex(vec![12, 4, 12, 4]));
        assert!((upstairs_inner(&s.model, &p.section, &p.section).unwrap().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_counts() {
        let s = Scenario::s2();
        for k in [2, 4, 8, 16] {
            let c = corrected_dimensions(&s.model, &s.action, k).unwrap();
            assert_eq!(c.upstairs, k as usize / 2);
            assert!(c.matches(), "{c:?}");
        }
        let s1 = Scenario::s1();
        assert!(corrected_dimensions(&s1.model, &s1.action, 3).unwrap().matches());
        assert_eq!(observed_k0(&s.model, &s.action, &[2, 4, 8]).unwrap(), Some(2));
    }

    #[test]
    fn injective_on_s2() {
        let s = Scenario::s2();
        for k in [2, 8, 32] {
            let (rank, dim) = injectivity_rank(&s.model, &s.action, k, Twist::Plain).unwrap();
            assert_eq!(rank, dim);
        }
    }
}
