//! Holomorphic sections of ℓ^⊗k and ℓ^⊗k ⊗ √K as monomial coefficient
//! vectors, their pointwise magnitudes, half-forms and the descent
//! contraction that defines the corrected reduction map.
//!
//! A section of ℓ^⊗k over a factor with scale c is a homogeneous polynomial of
//! degree kc. A section of ℓ^⊗k ⊗ √K is a polynomial of degree
//! kc − (m+1)/2 times the square root of the chart volume form.

use crate::error::{Error, Result};
use crate::numeric::{det_complex, pfaffian};
use crate::toric_geometry::{metric_at, ChartPoint, MetricData, ModelManifold};
use crate::torus_action::{
    complex_flow, divergence_along_flow, generator_complex, generators, phi, rho, validate_scenario, ActionSpec,
    ZERO_SET_TOL,
};
use nalgebra::DVector;
use num_complex::Complex64;
use num_rational::Rational64;
use std::fmt;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Twist {
    /// Sections of ℓ^⊗k.
    Plain,
    /// Sections of ℓ^⊗k ⊗ √K.
    HalfForm,
}

/// Exponents of every homogeneous coordinate, factor after factor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<u32>);

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|e| e.to_string()).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// Homogeneous degree per factor.
pub fn degrees(model: &ModelManifold, k: u32, twist: Twist) -> Result<Vec<u32>> {
    model
        .factors()
        .iter()
        .map(|f| {
            let top = k as i64 * f.scale() as i64;
            match twist {
                Twist::Plain => Ok(top as u32),
                Twist::HalfForm => {
                    if (f.dim() + 1) % 2 == 1 {
                        return Err(Error::Structural(format!(
                            "CP^{} has no square root of its canonical bundle",
                            f.dim()
                        )));
                    }
                    let deg = top - (f.dim() as i64 + 1) / 2;
                    if deg < 0 {
                        return Err(Error::Structural(format!("k = {k} is too small for half-form sections")));
                    }
                    Ok(deg as u32)
                }
            }
        })
        .collect()
}

/// All multi-indices with the given per-factor degrees.
pub fn all_multi_indices(model: &ModelManifold, degrees: &[u32]) -> Vec<MultiIndex> {
    let mut out: Vec<Vec<u32>> = vec![vec![]];
    for (f, &deg) in model.factors().iter().zip(degrees) {
        let parts = compositions(deg, f.dim() + 1);
        out = out
            .into_iter()
            .flat_map(|prefix| {
                parts.iter().map(move |p| {
                    let mut v = prefix.clone();
                    v.extend(p);
                    v
                })
            })
            .collect();
    }
    out.into_iter().map(MultiIndex).collect()
}

fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in (0..=total).rev() {
        for rest in compositions(total - first, parts - 1) {
            let mut v = vec![first];
            v.extend(rest);
            out.push(v);
        }
    }
    out
}

/// Lattice weight an invariant monomial must carry: kλ, shifted by the
/// half-form weight −(W·1)/2 in the corrected case.
pub fn target_weight(action: &ActionSpec, k: u32, twist: Twist) -> Vec<Rational64> {
    action
        .shift()
        .iter()
        .zip(action.weights())
        .map(|(l, row)| {
            let base = l * Rational64::from_integer(k as i64);
            match twist {
                Twist::Plain => base,
                Twist::HalfForm => base - Rational64::new(row.iter().sum::<i64>(), 2),
            }
        })
        .collect()
}

pub fn monomial_weight(action: &ActionSpec, a: &MultiIndex) -> Vec<i64> {
    action
        .weights()
        .iter()
        .map(|row| row.iter().zip(&a.0).map(|(w, e)| w * *e as i64).sum())
        .collect()
}

pub fn is_invariant_index(action: &ActionSpec, k: u32, twist: Twist, a: &MultiIndex) -> bool {
    let target = target_weight(action, k, twist);
    monomial_weight(action, a)
        .iter()
        .zip(&target)
        .all(|(w, t)| Rational64::from_integer(*w) == *t)
}

/// Monomials spanning the G-invariant sections. Empty when no lattice point
/// carries the required weight.
pub fn invariant_basis(model: &ModelManifold, action: &ActionSpec, k: u32, twist: Twist) -> Result<Vec<MultiIndex>> {
    let report = validate_scenario(model, action, k);
    let ok = match twist {
        Twist::Plain => report.passes_plain(),
        Twist::HalfForm => report.passes_corrected(),
    };
    if !ok {
        let reasons: Vec<String> = report
            .failures()
            .iter()
            .map(|c| format!("{}: {}", c.kind.label(), c.reason))
            .collect();
        return Err(Error::Precondition(format!(
            "scenario does not support {:?} sections at k = {k}: {}",
            twist,
            reasons.join("; ")
        )));
    }
    let deg = degrees(model, k, twist)?;
    Ok(all_multi_indices(model, &deg)
        .into_iter()
        .filter(|a| is_invariant_index(action, k, twist, a))
        .collect())
}

/// A section given by monomial terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    k: u32,
    twist: Twist,
    terms: Vec<(MultiIndex, Complex64)>,
}

impl Section {
    pub fn new(model: &ModelManifold, k: u32, twist: Twist, terms: Vec<(MultiIndex, Complex64)>) -> Result<Self> {
        let deg = degrees(model, k, twist)?;
        for (a, _) in &terms {
            check_degree(model, &deg, a)?;
        }
        Ok(Self { k, twist, terms })
    }

    pub fn monomial(model: &ModelManifold, k: u32, twist: Twist, a: MultiIndex) -> Result<Self> {
        Self::new(model, k, twist, vec![(a, Complex64::new(1.0, 0.0))])
    }

    pub fn zero(model: &ModelManifold, k: u32, twist: Twist) -> Result<Self> {
        Self::new(model, k, twist, vec![])
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn twist(&self) -> Twist {
        self.twist
    }

    pub fn terms(&self) -> &[(MultiIndex, Complex64)] {
        &self.terms
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self { k: self.k, twist: self.twist, terms: self.terms.iter().map(|(a, v)| (a.clone(), v * c)).collect() }
    }

    pub fn is_invariant(&self, action: &ActionSpec) -> bool {
        self.terms.iter().all(|(a, _)| is_invariant_index(action, self.k, self.twist, a))
    }

    /// Plain-text export: one `exponents | re | im` line per term.
    pub fn to_text(&self) -> String {
        let mut s = format!("k {} {}\n", self.k, match self.twist {
            Twist::Plain => "plain",
            Twist::HalfForm => "half-form",
        });
        for (a, c) in &self.terms {
            s.push_str(&format!("{a} | {:e} | {:e}\n", c.re, c.im));
        }
        s
    }

    pub fn from_text(model: &ModelManifold, text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let head = lines.next().ok_or_else(|| Error::Structural("empty section text".into()))?;
        let hp: Vec<&str> = head.split_whitespace().collect();
        if hp.len() != 3 || hp[0] != "k" {
            return Err(Error::Structural(format!("bad section header `{head}`")));
        }
        let k: u32 = hp[1].parse().map_err(|_| Error::Structural("bad k".into()))?;
        let twist = match hp[2] {
            "plain" => Twist::Plain,
            "half-form" => Twist::HalfForm,
            other => return Err(Error::Structural(format!("unknown twist `{other}`"))),
        };
        let mut terms = Vec::new();
        for l in lines {
            let parts: Vec<&str> = l.split('|').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(Error::Structural(format!("bad term line `{l}`")));
            }
            let idx = parts[0]
                .split_whitespace()
                .map(|t| t.parse::<u32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::Structural(format!("bad exponents `{}`", parts[0])))?;
            let re: f64 = parts[1].parse().map_err(|_| Error::Structural("bad real part".into()))?;
            let im: f64 = parts[2].parse().map_err(|_| Error::Structural("bad imaginary part".into()))?;
            terms.push((MultiIndex(idx), Complex64::new(re, im)));
        }
        Self::new(model, k, twist, terms)
    }
}

fn check_degree(model: &ModelManifold, deg: &[u32], a: &MultiIndex) -> Result<()> {
    if a.0.len() != model.homogeneous_len() {
        return Err(Error::Structural("multi-index length does not match the homogeneous coordinates".into()));
    }
    for (i, f) in model.factors().iter().enumerate() {
        let off = model.homogeneous_offset(i);
        let s: u32 = a.0[off..off + f.dim() + 1].iter().sum();
        if s != deg[i] {
            return Err(Error::Structural(format!(
                "factor {i} has degree {s}, expected {}",
                deg[i]
            )));
        }
    }
    Ok(())
}

/// Σ c_a Z^a at the chart-normalized homogeneous representative.
fn polynomial_value(p: &ChartPoint, terms: &[(MultiIndex, Complex64)]) -> Complex64 {
    let z: Vec<Complex64> = p.homogeneous_all().iter().flatten().copied().collect();
    terms
        .iter()
        .map(|(a, c)| {
            let mut v = *c;
            for (zi, &e) in z.iter().zip(&a.0) {
                if e > 0 {
                    v *= zi.powu(e);
                }
            }
            v
        })
        .sum()
}

/// |e_k|² = ∏ |Z_i|^{−2kc_i} for the chart frame of ℓ^⊗k.
fn frame_norm_sqr(model: &ModelManifold, p: &ChartPoint, k: u32) -> f64 {
    p.factor_norms_sqr()
        .iter()
        .zip(model.factors())
        .map(|(s, f)| s.powf(-(k as f64) * f.scale() as f64))
        .product()
}

/// Pointwise magnitude |s|²(p). Corrected sections are the chart polynomial
/// times e_k ⊗ √(dz₁∧…∧dz_n); the half-form factor comes from the pairing.
pub fn magnitude(model: &ModelManifold, s: &Section, p: &ChartPoint) -> Result<f64> {
    p.check(model)?;
    let poly = polynomial_value(p, &s.terms);
    let base = poly.norm_sqr() * frame_norm_sqr(model, p, s.k);
    match s.twist {
        Twist::Plain => Ok(base),
        Twist::HalfForm => {
            let nu = HalfFormValue::chart_unit(p);
            Ok(base * half_form_pairing(model, &nu, &nu, p)?.re)
        }
    }
}

/// Value of `s` at `p` in a unitary frame, so |value|² = |s|²(p). Phases
/// follow the charts of `p`.
pub fn frame_value(model: &ModelManifold, s: &Section, p: &ChartPoint) -> Result<Complex64> {
    p.check(model)?;
    let mut v = polynomial_value(p, &s.terms) * frame_norm_sqr(model, p, s.k).sqrt();
    if s.twist == Twist::HalfForm {
        let nu = HalfFormValue::chart_unit(p);
        v *= half_form_pairing(model, &nu, &nu, p)?.re.sqrt();
    }
    Ok(v)
}

/// Pointwise Hermitian product (s, t)(p).
pub fn pairing(model: &ModelManifold, s: &Section, t: &Section, p: &ChartPoint) -> Result<Complex64> {
    if s.k != t.k || s.twist != t.twist {
        return Err(Error::Structural("pairing needs sections of the same bundle".into()));
    }
    Ok(frame_value(model, s, p)? * frame_value(model, t, p)?.conj())
}

/// A half-form ν at a point, stored with its square ν² = square·dz₁∧…∧dz_n
/// in the point's charts and the chosen square-root branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfFormValue {
    root: Complex64,
}

impl HalfFormValue {
    /// ν² = square · dz, principal branch.
    pub fn from_square(square: Complex64) -> Self {
        Self { root: square.sqrt() }
    }

    pub fn from_root(root: Complex64) -> Self {
        Self { root }
    }

    /// √(dz₁∧…∧dz_n) in the charts of `p`.
    pub fn chart_unit(_p: &ChartPoint) -> Self {
        Self { root: Complex64::new(1.0, 0.0) }
    }

    pub fn square(&self) -> Complex64 {
        self.root * self.root
    }

    pub fn root(&self) -> Complex64 {
        self.root
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self { root: self.root * c }
    }
}

/// i^p (−1)^{p(p−1)/2}: makes c·α∧ᾱ a nonnegative multiple of the
/// coordinate volume for a (p,0)-form α.
pub fn orientation_constant(p: usize) -> Complex64 {
    let ip = Complex64::new(0.0, 1.0).powu(p as u32);
    if (p * p.saturating_sub(1) / 2) % 2 == 1 {
        -ip
    } else {
        ip
    }
}

/// Complexified tangent vectors in real coordinates (length 2n).
type CVec = Vec<Complex64>;

fn dz(v: &CVec, a: usize) -> Complex64 {
    v[2 * a] + Complex64::new(0.0, 1.0) * v[2 * a + 1]
}

fn dzbar(v: &CVec, a: usize) -> Complex64 {
    v[2 * a] - Complex64::new(0.0, 1.0) * v[2 * a + 1]
}

fn real_cvec(v: &DVector<f64>) -> CVec {
    v.iter().map(|x| Complex64::new(*x, 0.0)).collect()
}

/// (α ∧ β)(v₁, …, v_{p+q}) for a p-form α and q-form β given as evaluators,
/// by the shuffle sum.
fn wedge_eval<A, B>(alpha: A, p: usize, beta: B, vectors: &[CVec]) -> Complex64
where
    A: Fn(&[&CVec]) -> Complex64,
    B: Fn(&[&CVec]) -> Complex64,
{
    let n = vectors.len();
    let mut total = Complex64::new(0.0, 0.0);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != p {
            continue;
        }
        let first: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let second: Vec<usize> = (0..n).filter(|i| mask & (1 << i) == 0).collect();
        // sign of the shuffle permutation
        let mut inv = 0;
        for &i in &first {
            inv += second.iter().filter(|&&j| j < i).count();
        }
        let sign = if inv % 2 == 0 { 1.0 } else { -1.0 };
        let va: Vec<&CVec> = first.iter().map(|&i| &vectors[i]).collect();
        let vb: Vec<&CVec> = second.iter().map(|&i| &vectors[i]).collect();
        total += alpha(&va) * beta(&vb) * sign;
    }
    total
}

/// ε_ω(v₁,…,v_{2p}) restricted to the span of the vectors = Pf[ω(v_i, v_j)].
fn liouville_on(md: &MetricData, vectors: &[CVec]) -> Complex64 {
    let m = vectors.len();
    let om = md.omega.map(|x| Complex64::new(x, 0.0));
    let a: Vec<Vec<Complex64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|j| {
                    let vi = DVector::from_column_slice(&vectors[i]);
                    let vj = DVector::from_column_slice(&vectors[j]);
                    (vi.transpose() * &om * vj)[(0, 0)]
                })
                .collect()
        })
        .collect();
    pfaffian(&a)
}

/// (ν, μ) with (ν,μ)² ε_ω = c·ν² ∧ μ̄², evaluated on the real coordinate
/// frame. The branch follows the stored roots.
pub fn half_form_pairing(model: &ModelManifold, nu: &HalfFormValue, mu: &HalfFormValue, p: &ChartPoint) -> Result<Complex64> {
    let md = metric_at(model, p)?;
    let n = model.n();
    let frame: Vec<CVec> = (0..2 * n)
        .map(|r| (0..2 * n).map(|c| Complex64::new(if r == c { 1.0 } else { 0.0 }, 0.0)).collect())
        .collect();
    let top = |vs: &[&CVec]| {
        let m: Vec<Vec<Complex64>> = (0..n).map(|a| vs.iter().map(|v| dz(v, a)).collect()).collect();
        det_complex(&m)
    };
    let topbar = |vs: &[&CVec]| {
        let m: Vec<Vec<Complex64>> = (0..n).map(|a| vs.iter().map(|v| dzbar(v, a)).collect()).collect();
        det_complex(&m)
    };
    let wedge = wedge_eval(top, n, topbar, &frame) * orientation_constant(n);
    let eps = liouville_on(&md, &frame);
    let ratio = (wedge / eps).re;
    if ratio <= 0.0 {
        return Err(Error::Numeric("half-form pairing is not positive".into()));
    }
    Ok(nu.root * mu.root.conj() * ratio.sqrt())
}

/// ℒ_{JX^ξ} ε_ω / ε_ω at p.
pub fn divergence_ratio(model: &ModelManifold, action: &ActionSpec, xi: &[f64], p: &ChartPoint) -> f64 {
    crate::torus_action::jx_divergence(model, action, xi, p)
}

fn require_invariant(action: &ActionSpec, s: &Section) -> Result<()> {
    if !s.is_invariant(action) {
        return Err(Error::Precondition("section is not G-invariant".into()));
    }
    Ok(())
}

/// |s|²(x₀) e^{−kρ} (plain) or |s|²(x₀) e^{−kρ − ½∫ℒ_{JX}ε/ε} (corrected):
/// the magnitude predicted at e^{iξ}x₀.
pub fn predicted_magnitude_flow(model: &ModelManifold, action: &ActionSpec, s: &Section, xi: &[f64], x0: &ChartPoint) -> Result<f64> {
    require_invariant(action, s)?;
    let base = magnitude(model, s, x0)?;
    let mut expo = -(s.k as f64) * rho(model, action, xi, x0)?;
    if s.twist == Twist::HalfForm {
        expo -= 0.5 * divergence_along_flow(model, action, xi, x0)?;
    }
    Ok(base * expo.exp())
}

/// B-orthonormal, J-adapted basis (h₁, Jh₁, …) of the complement of
/// span{X^{ξ_j}, JX^{ξ_j}} at p.
pub fn horizontal_frame(model: &ModelManifold, action: &ActionSpec, p: &ChartPoint) -> Result<Vec<DVector<f64>>> {
    let md = metric_at(model, p)?;
    let g = generators(model, action, p)?;
    let n = model.n();
    let ip = |x: &DVector<f64>, y: &DVector<f64>| md.inner(x, y);
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let orth = |v: DVector<f64>, basis: &[DVector<f64>]| {
        let mut v = v;
        for _ in 0..2 {
            for b in basis {
                let c = ip(&v, b);
                v -= b * c;
            }
        }
        v
    };
    for c in 0..g.ncols() {
        let v = orth(g.column(c).into_owned(), &basis);
        let nrm = ip(&v, &v).sqrt();
        if nrm < 1e-10 {
            return Err(Error::Domain("generators are degenerate (fixed point)".into()));
        }
        basis.push(v / nrm);
    }
    let fixed = basis.len();
    for e in 0..2 * n {
        if basis.len() == 2 * n {
            break;
        }
        let v = orth(DVector::from_fn(2 * n, |r, _| if r == e { 1.0 } else { 0.0 }), &basis);
        let nrm = ip(&v, &v).sqrt();
        if nrm < 1e-6 {
            continue;
        }
        let h = v / nrm;
        let jh = orth(&md.j * &h, &basis);
        let jn = ip(&jh, &jh).sqrt();
        basis.push(h);
        basis.push(jh / jn);
    }
    Ok(basis.split_off(fixed))
}

/// Z^j = π₊X^{ξ_j} = ½(X − iJX) in complexified real coordinates.
fn holomorphic_generators(model: &ModelManifold, action: &ActionSpec, p: &ChartPoint) -> Result<Vec<CVec>> {
    let g = generators(model, action, p)?;
    let d = action.d();
    Ok((0..d)
        .map(|j| {
            (0..g.nrows())
                .map(|r| Complex64::new(0.5 * g[(r, j)], -0.5 * g[(r, d + j)]))
                .collect()
        })
        .collect())
}

/// |B ν|² / (ν, ν) for ν = √(dz₁∧…∧dz_n), computed by contracting ν² with
/// Z¹∧…∧Z^d, wedging with the conjugate and dividing by the reduced
/// Liouville form on a horizontal frame.
pub fn descent_factor(model: &ModelManifold, action: &ActionSpec, x0: &ChartPoint) -> Result<f64> {
    let md = metric_at(model, x0)?;
    let n = model.n();
    let d = action.d();
    let zs = holomorphic_generators(model, action, x0)?;
    let frame: Vec<CVec> = horizontal_frame(model, action, x0)?.iter().map(real_cvec).collect();
    let p = n - d;
    let contracted = |vs: &[&CVec]| {
        let cols: Vec<&CVec> = zs.iter().chain(vs.iter().copied()).collect();
        let m: Vec<Vec<Complex64>> = (0..n).map(|a| cols.iter().map(|v| dz(v, a)).collect()).collect();
        det_complex(&m)
    };
    let contracted_bar = |vs: &[&CVec]| contracted(vs).conj();
    let wedge = wedge_eval(contracted, p, contracted_bar, &frame) * orientation_constant(p);
    let eps_hat = liouville_on(&md, &frame);
    let b4 = (wedge / eps_hat).re;
    if !(b4 > 0.0) {
        return Err(Error::Domain("descended half-form vanishes (singular frame)".into()));
    }
    let nu = HalfFormValue::chart_unit(x0);
    let pair = half_form_pairing(model, &nu, &nu, x0)?.re;
    Ok(b4.sqrt() / pair)
}

/// |B_k r|²([x₀]) from the multilinear contraction.
pub fn descend_contract(model: &ModelManifold, action: &ActionSpec, r: &Section, x0: &ChartPoint) -> Result<f64> {
    if r.twist != Twist::HalfForm {
        return Err(Error::Precondition("descent contraction needs a half-form section".into()));
    }
    require_invariant(action, r)?;
    require_on_zero_set(action, x0)?;
    if r.terms.is_empty() {
        return Ok(0.0);
    }
    Ok(magnitude(model, r, x0)? * descent_factor(model, action, x0)?)
}

fn require_on_zero_set(action: &ActionSpec, x0: &ChartPoint) -> Result<()> {
    let mu = crate::torus_action::moment(action, x0);
    if mu.iter().any(|v| v.abs() >= ZERO_SET_TOL) {
        return Err(Error::Precondition("point is off the zero set".into()));
    }
    Ok(())
}

/// |ε_ω(Z¹…Z^d, Z̄¹…Z̄^d, h₁, Jh₁, …)| / |(ω^{n−d}/(n−d)!)(h₁, Jh₁, …)|.
/// Expected to equal 2^{−d} vol(G·x₀)².
pub fn contraction_ratio(model: &ModelManifold, action: &ActionSpec, x0: &ChartPoint) -> Result<f64> {
    let md = metric_at(model, x0)?;
    let zs = holomorphic_generators(model, action, x0)?;
    let zbars: Vec<CVec> = zs.iter().map(|v| v.iter().map(|c| c.conj()).collect()).collect();
    let frame: Vec<CVec> = horizontal_frame(model, action, x0)?.iter().map(real_cvec).collect();
    let all: Vec<CVec> = zs.iter().chain(&zbars).chain(&frame).cloned().collect();
    Ok(liouville_on(&md, &all).norm() / liouville_on(&md, &frame).norm())
}

/// Norm of (∇_{X^ξ} − ikφ_ξ) s relative to 2π|ξ|·|s| at p, for a monomial.
/// Corrected monomials include the Lie derivative of the half-form factor.
pub fn q_residual(model: &ModelManifold, action: &ActionSpec, s: &Section, xi: &[f64], p: &ChartPoint) -> Result<f64> {
    p.check(model)?;
    let x = generator_complex(model, action, xi, p);
    let z = p.affine();
    let k = s.k as f64;
    // chart polynomial value and derivative along X
    let mut value = Complex64::new(0.0, 0.0);
    let mut deriv = Complex64::new(0.0, 0.0);
    for (a, c) in &s.terms {
        let mut v = *c;
        let mut dv = Complex64::new(0.0, 0.0);
        let mut r = 0;
        for (i, f) in model.factors().iter().enumerate() {
            let off = model.homogeneous_offset(i);
            let b = p.charts()[i];
            for slot in (0..=f.dim()).filter(|&t| t != b) {
                let e = a.0[off + slot];
                if e > 0 {
                    dv = dv * z[r].powu(e) + v * Complex64::new(e as f64, 0.0) * z[r].powu(e - 1) * x[r];
                    v *= z[r].powu(e);
                }
                r += 1;
            }
        }
        value += v;
        deriv += dv;
    }
    // connection form ∂ log h(X) with h = ∏ (1+|z|²)^{−kc}
    let mut conn = Complex64::new(0.0, 0.0);
    let mut hol_div = Complex64::new(0.0, 0.0);
    let w = action.slot_weights(xi);
    for (i, f) in model.factors().iter().enumerate() {
        let off = model.affine_offset(i);
        let hoff = model.homogeneous_offset(i);
        let b = p.charts()[i];
        let zz = &z[off..off + f.dim()];
        let sq = 1.0 + zz.iter().map(|v| v.norm_sqr()).sum::<f64>();
        let dot: Complex64 = zz.iter().zip(&x[off..off + f.dim()]).map(|(zi, xi)| zi.conj() * xi).sum();
        conn += -k * f.scale() as f64 * dot / sq;
        for slot in (0..=f.dim()).filter(|&t| t != b) {
            hol_div += Complex64::new(0.0, -2.0 * PI * (w[hoff + slot] - w[hoff + b]));
        }
    }
    let mut q = deriv + value * conn - Complex64::new(0.0, k * phi(action, xi, p)) * value;
    if s.twist == Twist::HalfForm {
        q += value * hol_div * 0.5;
    }
    let xi_norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = 2.0 * PI * xi_norm * value.norm();
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(q.norm() / scale)
}

/// Magnitude at the flowed point e^{iξ}x₀, evaluated directly.
pub fn magnitude_after_flow(model: &ModelManifold, action: &ActionSpec, s: &Section, xi: &[f64], x0: &ChartPoint) -> Result<f64> {
    let y = complex_flow(model, action, xi, 1.0, x0)?;
    magnitude(model, s, &y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::Scenario;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn s1_plain_k2_basis() {
        let s = Scenario::s1();
        let b = invariant_basis(&s.model, &s.action, 2, Twist::Plain).unwrap();
        assert_eq!(b, vec![MultiIndex(vec![1, 1])]);
    }

    #[test]
    fn s2_plain_k4_has_three() {
        let s = Scenario::s2();
        assert_eq!(invariant_basis(&s.model, &s.action, 4, Twist::Plain).unwrap().len(), 3);
    }

    #[test]
    fn s1_corrected_needs_odd_k() {
        let s = Scenario::s1();
        assert!(invariant_basis(&s.model, &s.action, 2, Twist::HalfForm).is_err());
        let b = invariant_basis(&s.model, &s.action, 3, Twist::HalfForm).unwrap();
        assert_eq!(b, vec![MultiIndex(vec![1, 1])]);
    }

    #[test]
    fn magnitudes_of_simple_monomials() {
        let s = Scenario::s1();
        let m = &s.model;
        let eq = ChartPoint::from_affine(m, &[0], &[c(0.6, 0.8)]).unwrap();
        let z0z1 = Section::monomial(m, 2, Twist::Plain, MultiIndex(vec![1, 1])).unwrap();
        assert!((magnitude(m, &z0z1, &eq).unwrap() - 0.25).abs() < 1e-15);
        let z0sq = Section::monomial(m, 2, Twist::Plain, MultiIndex(vec![2, 0])).unwrap();
        let origin = ChartPoint::from_affine(m, &[0], &[c(0.0, 0.0)]).unwrap();
        assert!((magnitude(m, &z0sq, &origin).unwrap() - 1.0).abs() < 1e-15);
        let zero = Section::zero(m, 2, Twist::Plain).unwrap();
        assert_eq!(magnitude(m, &zero, &eq).unwrap(), 0.0);
    }

    #[test]
    fn half_form_pairing_values() {
        let s = Scenario::s1();
        let m = &s.model;
        let p = ChartPoint::from_affine(m, &[0], &[c(0.0, 1.0)]).unwrap();
        let nu = HalfFormValue::from_square(c(1.0, 0.0));
        let v = half_form_pairing(m, &nu, &nu, &p).unwrap();
        assert!((v * v - c(4.0, 0.0)).norm() < 1e-13, "{v}");
        let inu = nu.scaled(c(0.0, 1.0));
        let w = half_form_pairing(m, &nu, &inu, &p).unwrap();
        assert!((w - c(0.0, -1.0) * v).norm() < 1e-13);
    }

    #[test]
    fn wrong_degree_is_structural() {
        let s = Scenario::s1();
        assert!(matches!(
            Section::monomial(&s.model, 2, Twist::Plain, MultiIndex(vec![2, 1])),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn section_text_round_trip() {
        let s = Scenario::s2();
        let sec = Section::new(
            &s.model,
            4,
            Twist::Plain,
            vec![(MultiIndex(vec![3, 1, 3, 1]), c(0.5, -1.25)), (MultiIndex(vec![2, 2, 4, 0]), c(1.0, 0.0))],
        )
        .unwrap();
        let back = Section::from_text(&s.model, &sec.to_text()).unwrap();
        assert_eq!(sec, back);
    }
}
