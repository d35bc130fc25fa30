use crate::error::{Error, Result};
use crate::numeric::{gauss_legendre_on, KahanSum};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainTag {
    Manifold,
    ZeroSet,
    LieBall,
    Reduced,
}

/// Nodes and positive weights on one of the integration domains.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub domain: DomainTag,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub level: usize,
}

impl QuadratureRule {
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        let mut acc = KahanSum::new();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(x));
        }
        acc.value()
    }

    pub fn try_integrate<F: Fn(&[f64]) -> Result<f64>>(&self, f: F) -> Result<f64> {
        let mut acc = KahanSum::new();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(x)?);
        }
        Ok(acc.value())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Whitespace-separated `coordinates… weight` lines.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            for c in x {
                s.push_str(&format!("{c:.17e} "));
            }
            s.push_str(&format!("{w:.17e}\n"));
        }
        s
    }
}

/// Composite Gauss points on [a, b]: `panels` panels of `pts` nodes.
fn composite(a: f64, b: f64, panels: usize, pts: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(panels * pts);
    let mut w = Vec::with_capacity(panels * pts);
    let h = (b - a) / panels as f64;
    for p in 0..panels {
        let (px, pw) = gauss_legendre_on(pts, a + p as f64 * h, a + (p + 1) as f64 * h);
        x.extend(px);
        w.extend(pw);
    }
    (x, w)
}

/// Gauss-type rule on the ball of radius `r` in R^d (d ≤ 3), exact for
/// polynomials of degree 2·level. Radial directions use composite Gauss
/// panels so peaked integrands are resolved as the level grows.
pub fn lie_ball_rule(d: usize, r: f64, level: usize) -> Result<QuadratureRule> {
    if !(r > 0.0) {
        return Err(Error::Domain("ball radius must be positive".into()));
    }
    let level = level.max(1);
    let pts = 16.max(level + 2);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    match d {
        1 => {
            let (x, w) = composite(-r, r, 2 * level, pts);
            nodes = x.into_iter().map(|t| vec![t]).collect();
            weights = w;
        }
        2 => {
            let (rx, rw) = composite(0.0, r, level, pts);
            let na = 2 * level + 2;
            for (rr, wr) in rx.iter().zip(&rw) {
                for j in 0..na {
                    let t = 2.0 * PI * j as f64 / na as f64;
                    nodes.push(vec![rr * t.cos(), rr * t.sin()]);
                    weights.push(wr * rr * 2.0 * PI / na as f64);
                }
            }
        }
        3 => {
            let (rx, rw) = composite(0.0, r, level, pts);
            let (cx, cw) = gauss_legendre_on(level + 1, -1.0, 1.0);
            let na = 2 * level + 2;
            for (rr, wr) in rx.iter().zip(&rw) {
                for (ct, wc) in cx.iter().zip(&cw) {
                    let st = (1.0 - ct * ct).sqrt();
                    for j in 0..na {
                        let ph = 2.0 * PI * j as f64 / na as f64;
                        nodes.push(vec![rr * st * ph.cos(), rr * st * ph.sin(), rr * ct]);
                        weights.push(wr * rr * rr * wc * 2.0 * PI / na as f64);
                    }
                }
            }
        }
        _ => return Err(Error::Structural(format!("Lie algebra balls of dimension {d} are not supported"))),
    }
    Ok(QuadratureRule { domain: DomainTag::LieBall, nodes, weights, level })
}

/// Volume of the unit ball in R^d.
#[cfg(test)]
fn unit_ball_volume(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => PI,
        3 => 4.0 * PI / 3.0,
        _ => f64::NAN,
    }
}

/// Directions and weights of a rule on the unit sphere S^{d−1}.
pub(crate) fn sphere_rule(d: usize, level: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    match d {
        1 => (vec![vec![1.0], vec![-1.0]], vec![1.0, 1.0]),
        2 => {
            let na = 4 * level + 4;
            (
                (0..na)
                    .map(|j| {
                        let t = 2.0 * PI * j as f64 / na as f64;
                        vec![t.cos(), t.sin()]
                    })
                    .collect(),
                vec![2.0 * PI / na as f64; na],
            )
        }
        _ => {
            let (cx, cw) = gauss_legendre_on(2 * level + 2, -1.0, 1.0);
            let na = 4 * level + 4;
            let mut dirs = Vec::new();
            let mut w = Vec::new();
            for (ct, wc) in cx.iter().zip(&cw) {
                let st = (1.0 - ct * ct).sqrt();
                for j in 0..na {
                    let ph = 2.0 * PI * j as f64 / na as f64;
                    dirs.push(vec![st * ph.cos(), st * ph.sin(), *ct]);
                    w.push(wc * 2.0 * PI / na as f64);
                }
            }
            (dirs, w)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_volumes() {
        for d in 1..=3 {
            let r = 1.7;
            let q = lie_ball_rule(d, r, 3).unwrap();
            let v = q.integrate(|_| 1.0);
            let exact = unit_ball_volume(d) * r.powi(d as i32);
            assert!((v - exact).abs() / exact < 1e-12, "d={d}");
        }
    }

    #[test]
    fn odd_integrands_vanish() {
        for d in 1..=3 {
            let q = lie_ball_rule(d, 1.0, 4).unwrap();
            let v = q.integrate(|x| x[0].powi(3) + x[d - 1]);
            assert!(v.abs() < 1e-14, "d={d} v={v}");
        }
    }

    #[test]
    fn rejects_bad_radius() {
        assert!(lie_ball_rule(1, 0.0, 1).is_err());
        assert!(lie_ball_rule(4, 1.0, 1).is_err());
    }
}
