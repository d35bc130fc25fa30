use super::lie_ball::{lie_ball_rule, sphere_rule};
use crate::densities::{hessian_rho, i_integrand, Observable};
use crate::error::{Error, Result};
use crate::numeric::{adaptive_gk, KahanSum};
use crate::toric_geometry::{ChartPoint, ModelManifold};
use crate::torus_action::ActionSpec;
use std::cell::RefCell;

/// Observed tail of the density integrand beyond a radius, with fitted
/// constants of the bound b·e^{−R D k}.
#[derive(Debug, Clone, PartialEq)]
pub struct TailEstimate {
    pub radius: f64,
    pub k: u32,
    pub b: f64,
    pub decay: f64,
    pub tail_mass: f64,
    pub main_mass: f64,
    /// (R, k, shell mass beyond R) on the sampled grid.
    pub samples: Vec<(f64, u32, f64)>,
    pub monotone_in_r: bool,
    pub monotone_in_k: bool,
    pub bound_holds: bool,
}

impl TailEstimate {
    pub fn is_monotone(&self) -> bool {
        self.monotone_in_r && self.monotone_in_k
    }

    pub fn relative_tail(&self) -> f64 {
        self.tail_mass / self.main_mass
    }
}

/// ∫_{r_in ≤ |ξ| ≤ r_out} g(ξ) d^dξ with adaptive Gauss–Kronrod in the
/// radius, to relative accuracy 1e-10 or absolute accuracy `abs_tol`.
pub fn shell_mass<F>(d: usize, r_in: f64, r_out: f64, g: F, abs_tol: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let (dirs, dw) = sphere_rule(d, 6);
    let err: RefCell<Option<crate::Error>> = RefCell::new(None);
    let radial = |r: f64| {
        let mut acc = KahanSum::new();
        for (u, w) in dirs.iter().zip(&dw) {
            let x: Vec<f64> = u.iter().map(|c| c * r).collect();
            match g(&x) {
                Ok(v) => acc.add(w * v),
                Err(e) => {
                    err.borrow_mut().get_or_insert(e);
                }
            }
        }
        acc.value() * r.powi(d as i32 - 1)
    };
    let v = adaptive_gk(radial, r_in, r_out, abs_tol, 1e-10)?;
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    Ok(v)
}

/// Radius beyond which the integrand has fallen below 1e-30 of `peak`.
fn outer_radius<F: Fn(&[f64]) -> Result<f64>>(d: usize, start: f64, peak: f64, g: &F) -> Result<f64> {
    let (dirs, _) = sphere_rule(d, 2);
    let mut r = start.max(1e-3);
    for _ in 0..80 {
        let mut top: f64 = 0.0;
        for u in &dirs {
            let x: Vec<f64> = u.iter().map(|c| c * r).collect();
            top = top.max(g(&x)?.abs());
        }
        if top * r.powi(d as i32) <= 1e-30 * peak {
            return Ok(r);
        }
        r *= 1.5;
    }
    Err(Error::Numeric("density integrand does not decay".into()))
}

fn main_mass(model: &ModelManifold, action: &ActionSpec, x0: &ChartPoint, k: u32, r: f64) -> Result<f64> {
    let g = |xi: &[f64]| i_integrand(model, action, x0, k, &Observable::One, xi);
    let d = action.d();
    let mut prev = lie_ball_rule(d, r, 8)?.try_integrate(g)?;
    for level in [16, 32, 64] {
        let cur = lie_ball_rule(d, r, level)?.try_integrate(g)?;
        if (cur - prev).abs() <= 1e-12 * cur.abs() {
            return Ok(cur);
        }
        prev = cur;
    }
    Ok(prev)
}

/// Shell masses of the I_k integrand beyond R on a small (R, k) grid, the
/// least-squares fit of log mass = log b − D·R·k, and monotonicity flags.
pub fn tail_monitor(model: &ModelManifold, action: &ActionSpec, x0: &ChartPoint, k: u32, r: f64) -> Result<TailEstimate> {
    let d = action.d();
    let ks = [k, 2 * k, 4 * k];
    let rs: Vec<f64> = (0..5).map(|j| r * (1.0 + 0.25 * j as f64)).collect();
    let mut samples = Vec::new();
    let mut tail_mass = 0.0;
    let mut main = 0.0;
    for (ki, &kk) in ks.iter().enumerate() {
        let g = |xi: &[f64]| i_integrand(model, action, x0, kk, &Observable::One, xi);
        let peak = g(&vec![0.0; d])?;
        let r_out = outer_radius(d, 2.0 * rs[rs.len() - 1], peak, &g)?;
        let scale = main_mass(model, action, x0, kk, r)?;
        if ki == 0 {
            main = scale;
        }
        for &rr in &rs {
            let m = shell_mass(d, rr, r_out, g, 1e-22 * scale)?;
            samples.push((rr, kk, m));
            if ki == 0 && rr == r {
                tail_mass = m;
            }
        }
    }
    let mut monotone_in_r = true;
    let mut monotone_in_k = true;
    for (ki, _) in ks.iter().enumerate() {
        for j in 1..rs.len() {
            if samples[ki * rs.len() + j].2 > samples[ki * rs.len() + j - 1].2 {
                monotone_in_r = false;
            }
        }
    }
    for j in 0..rs.len() {
        for ki in 1..ks.len() {
            if samples[ki * rs.len() + j].2 > samples[(ki - 1) * rs.len() + j].2 {
                monotone_in_k = false;
            }
        }
    }
    // least squares on the positive samples
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.2 > 1e-300)
        .map(|s| (s.0 * s.1 as f64, s.2.ln()))
        .collect();
    let (b, decay) = if pts.len() >= 2 {
        let nn = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
        let icpt = (sy - slope * sx) / nn;
        (icpt.exp(), -slope)
    } else {
        (0.0, 0.0)
    };
    let bound_holds = samples.iter().all(|s| s.2 <= 1.5 * b * (-s.0 * decay * s.1 as f64).exp());
    Ok(TailEstimate {
        radius: r,
        k,
        b,
        decay,
        tail_mass,
        main_mass: main,
        samples,
        monotone_in_r,
        monotone_in_k,
        bound_holds,
    })
}

/// Truncation radius for the density integrals at level k: start from the
/// Gaussian radius √(40 / (k λ_min(H))) and grow until the shell mass beyond
/// it is below 1e-12 of the leading-order main term.
pub fn truncation_radius(model: &ModelManifold, action: &ActionSpec, x0: &ChartPoint, k: u32) -> Result<f64> {
    let h = hessian_rho(model, action, x0)?;
    let d = action.d();
    let lmin = h.clone().symmetric_eigenvalues().min();
    if !(lmin > 0.0) {
        return Err(Error::Domain("Hessian of ρ is not positive definite".into()));
    }
    let det = h.determinant();
    let vol = crate::torus_action::orbit_volume(model, action, x0)?;
    let main = vol * vol / det.sqrt();
    let g = |xi: &[f64]| i_integrand(model, action, x0, k, &Observable::One, xi);
    let peak = g(&vec![0.0; d])?;
    let mut r = (40.0 / (k as f64 * lmin)).sqrt();
    let r_out = outer_radius(d, 2.0 * r, peak, &g)?;
    for _ in 0..60 {
        if r >= r_out {
            return Ok(r);
        }
        let tail = shell_mass(d, r, r_out, g, 1e-16 * main)?;
        if tail <= 1e-12 * main {
            return Ok(r);
        }
        r *= 1.25;
    }
    Err(Error::Numeric("truncation radius search did not terminate".into()))
}
