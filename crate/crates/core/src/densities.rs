//! The densities I_k(f) and J_k(f) that turn upstairs norms into downstairs
//! integrals, the Hessian of ρ, and the Laplace leading-order predictor.

use crate::error::{Error, Result};
use crate::integration::{lie_ball_rule, tau, truncation_radius};
use crate::toric_geometry::{ChartPoint, ModelManifold};
use crate::torus_action::{complex_flow, divergence_along_flow, generators, orbit_volume, rho, ActionSpec};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::f64::consts::PI;

/// G-invariant observables given by moment-coordinate formulas.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    One,
    Constant(f64),
    /// Σ of the moment coordinates |Z_a|²/|Z|² over all slots except each
    /// factor's first.
    MomentSum,
    /// A single homogeneous slot's moment coordinate.
    MomentSlot(usize),
}

impl Observable {
    pub fn tag(&self) -> String {
        match self {
            Self::One => "one".into(),
            Self::Constant(c) => format!("const:{c}"),
            Self::MomentSum => "moment_sum".into(),
            Self::MomentSlot(a) => format!("moment:{a}"),
        }
    }

    pub fn parse(tag: &str) -> Result<Self> {
        match tag {
            "one" => Ok(Self::One),
            "moment_sum" => Ok(Self::MomentSum),
            t if t.starts_with("const:") => t[6..]
                .parse()
                .map(Self::Constant)
                .map_err(|_| Error::Structural(format!("bad constant observable `{t}`"))),
            t if t.starts_with("moment:") => t[7..]
                .parse()
                .map(Self::MomentSlot)
                .map_err(|_| Error::Structural(format!("bad moment observable `{t}`"))),
            t => Err(Error::Structural(format!("unknown observable `{t}`"))),
        }
    }

    /// Value from the moment coordinates of every homogeneous slot.
    pub fn eval_moment(&self, model: &ModelManifold, u: &[f64]) -> f64 {
        match self {
            Self::One => 1.0,
            Self::Constant(c) => *c,
            Self::MomentSum => {
                let mut s = 0.0;
                for (i, f) in model.factors().iter().enumerate() {
                    let off = model.homogeneous_offset(i);
                    s += (1..=f.dim()).map(|a| u[off + a]).sum::<f64>();
                }
                s
            }
            Self::MomentSlot(a) => u[*a],
        }
    }

    /// (constant term, [(slot, coefficient)]): every observable is affine in
    /// the moment coordinates.
    pub fn affine_form(&self, model: &ModelManifold) -> (f64, Vec<(usize, f64)>) {
        match self {
            Self::One => (1.0, vec![]),
            Self::Constant(c) => (*c, vec![]),
            Self::MomentSum => {
                let mut slots = Vec::new();
                for (i, f) in model.factors().iter().enumerate() {
                    let off = model.homogeneous_offset(i);
                    slots.extend((1..=f.dim()).map(|a| (off + a, 1.0)));
                }
                (0.0, slots)
            }
            Self::MomentSlot(a) => (0.0, vec![(*a, 1.0)]),
        }
    }

    pub fn eval(&self, model: &ModelManifold, p: &ChartPoint) -> f64 {
        self.eval_moment(model, &p.moment_coords())
    }
}

/// D_{ξ_i} D_{ξ_j} ρ at ξ = 0: 2 B(JX^{ξ_i}, JX^{ξ_j}).
pub fn hessian_rho(model: &ModelManifold, action: &ActionSpec, x0: &ChartPoint) -> Result<DMatrix<f64>> {
    let g = generators(model, action, x0)?;
    let md = crate::toric_geometry::metric_at(model, x0)?;
    let d = action.d();
    let jx = g.columns(d, d).into_owned();
    Ok((jx.transpose() * &md.b * jx) * 2.0)
}

/// (2π/k)^{d/2} |det H|^{−1/2} σ(0).
pub fn laplace_leading(sigma0: f64, h: &DMatrix<f64>, k: f64) -> Result<f64> {
    let d = h.nrows();
    if h.clone().cholesky().is_none() {
        return Err(Error::Domain("Hessian is not positive definite".into()));
    }
    Ok((2.0 * PI / k).powf(d as f64 / 2.0) * h.determinant().abs().powf(-0.5) * sigma0)
}

/// vol(G·x₀)(k/2π)^{d/2} τ(ξ,x₀) f(e^{iξ}x₀) e^{−kρ(ξ,x₀)}.
pub fn i_integrand(model: &ModelManifold, action: &ActionSpec, x0: &ChartPoint, k: u32, f: &Observable, xi: &[f64]) -> Result<f64> {
    let d = action.d() as f64;
    let kk = k as f64;
    let vol = orbit_volume(model, action, x0)?;
    let t = tau(model, action, xi, x0)?;
    let r = rho(model, action, xi, x0)?;
    let fv = match f {
        Observable::One | Observable::Constant(_) => f.eval_moment(model, &[]),
        _ => f.eval(model, &complex_flow(model, action, xi, 1.0, x0)?),
    };
    Ok(vol * (kk / (2.0 * PI)).powf(d / 2.0) * t * fv * (-kk * r).exp())
}

/// (k/2π)^{d/2} 2^{d/2} τ f e^{−kρ − ½∫ℒ_{JX}ε/ε}.
pub fn j_integrand(model: &ModelManifold, action: &ActionSpec, x0: &ChartPoint, k: u32, f: &Observable, xi: &[f64]) -> Result<f64> {
    let d = action.d() as f64;
    let kk = k as f64;
    let t = tau(model, action, xi, x0)?;
    let r = rho(model, action, xi, x0)?;
    let div = divergence_along_flow(model, action, xi, x0)?;
    let fv = match f {
        Observable::One | Observable::Constant(_) => f.eval_moment(model, &[]),
        _ => f.eval(model, &complex_flow(model, action, xi, 1.0, x0)?),
    };
    Ok((kk / (2.0 * PI)).powf(d / 2.0) * 2f64.powf(d / 2.0) * t * fv * (-kk * r - 0.5 * div).exp())
}

fn ball_integral<G>(d: usize, r: f64, g: G) -> Result<f64>
where
    G: Fn(&[f64]) -> Result<f64>,
{
    let mut prev = lie_ball_rule(d, r, 8)?.try_integrate(&g)?;
    for level in [16, 32, 64] {
        let cur = lie_ball_rule(d, r, level)?.try_integrate(&g)?;
        if (cur - prev).abs() <= 1e-12 * cur.abs().max(1e-300) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Numeric(format!("density integral over the ball of radius {r} did not converge")))
}

/// I_k(f)([x₀]) over the truncated ball; f ≡ 1 gives the unitarity density.
pub fn density_i(model: &ModelManifold, action: &ActionSpec, x0: &ChartPoint, k: u32, f: &Observable) -> Result<f64> {
    if matches!(f, Observable::Constant(c) if *c == 0.0) {
        return Ok(0.0);
    }
    let r = truncation_radius(model, action, x0, k)?;
    ball_integral(action.d(), r, |xi| i_integrand(model, action, x0, k, f, xi))
}

/// J_k(f)([x₀]) over the truncated ball.
pub fn density_j(model: &ModelManifold, action: &ActionSpec, x0: &ChartPoint, k: u32, f: &Observable) -> Result<f64> {
    if matches!(f, Observable::Constant(c) if *c == 0.0) {
        return Ok(0.0);
    }
    let r = truncation_radius(model, action, x0, k)?;
    ball_integral(action.d(), r, |xi| j_integrand(model, action, x0, k, f, xi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityRow {
    pub node: usize,
    pub moment: Vec<f64>,
    pub k: u32,
    pub i_k: f64,
    pub j_k: f64,
    pub limit_i: f64,
    pub limit_j: f64,
}

impl DensityRow {
    pub fn deviation_i(&self) -> f64 {
        (self.i_k - self.limit_i).abs()
    }

    pub fn deviation_j(&self) -> f64 {
        (self.j_k - self.limit_j).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityReport {
    pub scenario: String,
    pub observable: String,
    pub rows: Vec<DensityRow>,
    /// (k, max deviation of I_k, max deviation of J_k) over nodes.
    pub per_k: Vec<(u32, f64, f64)>,
    /// Log-log slopes of the max deviations against k (diagnostic).
    pub slope_i: Option<f64>,
    pub slope_j: Option<f64>,
}

/// Tabulates I_k and J_k at the nodes against 2^{−d/2} f(x₀) vol(G·x₀) and f(x₀).
pub fn density_limits(
    scenario: &str,
    model: &ModelManifold,
    action: &ActionSpec,
    nodes: &[ChartPoint],
    ks: &[u32],
    f: &Observable,
) -> Result<DensityReport> {
    let d = action.d() as f64;
    let cells: Vec<(usize, u32)> = (0..nodes.len()).flat_map(|i| ks.iter().map(move |&k| (i, k))).collect();
    let rows = cells
        .par_iter()
        .map(|&(i, k)| {
            let x0 = &nodes[i];
            let vol = orbit_volume(model, action, x0)?;
            let fx = f.eval(model, x0);
            Ok(DensityRow {
                node: i,
                moment: x0.moment_coords(),
                k,
                i_k: density_i(model, action, x0, k, f)?,
                j_k: density_j(model, action, x0, k, f)?,
                limit_i: 2f64.powf(-d / 2.0) * fx * vol,
                limit_j: fx,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let per_k: Vec<(u32, f64, f64)> = ks
        .iter()
        .map(|&k| {
            let sel = rows.iter().filter(|r| r.k == k);
            let di = sel.clone().map(DensityRow::deviation_i).fold(0.0, f64::max);
            let dj = sel.map(DensityRow::deviation_j).fold(0.0, f64::max);
            (k, di, dj)
        })
        .collect();
    let slope_i = loglog_slope(per_k.iter().map(|t| (t.0 as f64, t.1)));
    let slope_j = loglog_slope(per_k.iter().map(|t| (t.0 as f64, t.2)));
    Ok(DensityReport { scenario: scenario.to_string(), observable: f.tag(), rows, per_k, slope_i, slope_j })
}

/// Least-squares slope of log y against log x over positive samples.
pub fn loglog_slope<I: Iterator<Item = (f64, f64)>>(pts: I) -> Option<f64> {
    let p: Vec<(f64, f64)> = pts.filter(|(x, y)| *x > 0.0 && *y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if p.len() < 2 {
        return None;
    }
    let n = p.len() as f64;
    let sx: f64 = p.iter().map(|t| t.0).sum();
    let sy: f64 = p.iter().map(|t| t.1).sum();
    let sxx: f64 = p.iter().map(|t| t.0 * t.0).sum();
    let sxy: f64 = p.iter().map(|t| t.0 * t.1).sum();
    let den = n * sxx - sx * sx;
    if den.abs() < 1e-300 {
        return None;
    }
    Some((n * sxy - sx * sy) / den)
}
