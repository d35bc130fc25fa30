use super::{ActionSpec, SlicePolytope};
use crate::toric_geometry::ModelManifold;
use num_rational::Rational64;
use std::fmt;

const SUPPORT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CheckKind {
    /// 0 lies in the moment image.
    MomentImage,
    /// 0 is a regular value of Φ.
    RegularValue,
    /// The torus acts freely on Φ⁻¹(0).
    FreeAction,
    /// kλ is integral, so the action lifts to ℓ^⊗k.
    LineBundleLift,
    /// Every factor's canonical degree m_i + 1 is even, so √K exists.
    HalfFormBundle,
    /// kλ − (W·1)/2 is integral, so the action lifts to ℓ^⊗k ⊗ √K.
    HalfFormLift,
}

impl CheckKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::MomentImage => "(a) zero in moment image",
            Self::RegularValue => "(b) zero is a regular value",
            Self::FreeAction => "(c) free action on zero set",
            Self::LineBundleLift => "(d) lift to the line bundle",
            Self::HalfFormBundle => "(e) square root of canonical bundle",
            Self::HalfFormLift => "(f) lift to the half-form bundle",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub kind: CheckKind,
    pub passed: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub k: u32,
    pub checks: Vec<CheckOutcome>,
    /// Lattice weight by which the torus acts on the half-form factor, −(W·1)/2.
    pub half_form_weight: Vec<Rational64>,
}

impl ValidationReport {
    fn passed(&self, kinds: &[CheckKind]) -> bool {
        self.checks.iter().filter(|c| kinds.contains(&c.kind)).all(|c| c.passed)
    }

    /// Requirements for working with sections of ℓ^⊗k.
    pub fn passes_plain(&self) -> bool {
        use CheckKind::*;
        self.passed(&[MomentImage, RegularValue, FreeAction, LineBundleLift])
    }

    /// Requirements for working with sections of ℓ^⊗k ⊗ √K.
    pub fn passes_corrected(&self) -> bool {
        use CheckKind::*;
        self.passed(&[MomentImage, RegularValue, FreeAction, HalfFormBundle, HalfFormLift])
    }

    pub fn passes_all(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "validation at k = {}", self.k)?;
        for c in &self.checks {
            writeln!(f, "  {} {}: {}", if c.passed { "pass" } else { "FAIL" }, c.kind.label(), c.reason)?;
        }
        let w: Vec<String> = self.half_form_weight.iter().map(|r| r.to_string()).collect();
        write!(f, "  half-form lift weight: [{}]", w.join(", "))
    }
}

/// k-independent checks (a), (b), (c), decided from the supports of the
/// slice vertices: every zero-set point's support contains a vertex support,
/// and stabilizers only grow as supports shrink.
pub(crate) fn geometric_checks(model: &ModelManifold, action: &ActionSpec) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let poly = match SlicePolytope::new(model, action) {
        Ok(p) => p,
        Err(e) => {
            for kind in [CheckKind::MomentImage, CheckKind::RegularValue, CheckKind::FreeAction] {
                out.push(CheckOutcome { kind, passed: false, reason: e.to_string() });
            }
            return out;
        }
    };
    if poly.is_empty() {
        out.push(CheckOutcome {
            kind: CheckKind::MomentImage,
            passed: false,
            reason: "the slice {Φ = 0} of the moment polytope is empty".into(),
        });
        for kind in [CheckKind::RegularValue, CheckKind::FreeAction] {
            out.push(CheckOutcome { kind, passed: false, reason: "no zero set to inspect".into() });
        }
        return out;
    }
    out.push(CheckOutcome {
        kind: CheckKind::MomentImage,
        passed: true,
        reason: format!("slice of dimension {} is nonempty", poly.dim()),
    });
    let d = action.d();
    let mut regular = (true, String::from("stabilizers are finite at every slice vertex"));
    let mut free = (true, String::from("stabilizers are trivial at every slice vertex"));
    for u in poly.vertices_moment() {
        let diffs = support_differences(model, action, &u);
        let g = minor_gcd(&diffs, d);
        if g == 0 {
            regular = (false, format!("generators are dependent at vertex u = {}", fmt_u(&u)));
            free = (false, format!("point with nontrivial stabilizer (a fixed direction) at u = {}", fmt_u(&u)));
            break;
        }
        if g != 1 && free.0 {
            free = (false, format!("finite stabilizer of order {g} at u = {}", fmt_u(&u)));
        }
    }
    out.push(CheckOutcome { kind: CheckKind::RegularValue, passed: regular.0, reason: regular.1 });
    out.push(CheckOutcome { kind: CheckKind::FreeAction, passed: free.0, reason: free.1 });
    out
}

fn fmt_u(u: &[f64]) -> String {
    let parts: Vec<String> = u.iter().map(|v| format!("{v:.4}")).collect();
    format!("({})", parts.join(", "))
}

/// Weight differences w_a − w_b for a, b in the same factor's support.
fn support_differences(model: &ModelManifold, action: &ActionSpec, u: &[f64]) -> Vec<Vec<i64>> {
    let w = action.weights();
    let mut out = Vec::new();
    for (i, f) in model.factors().iter().enumerate() {
        let off = model.homogeneous_offset(i);
        let support: Vec<usize> = (0..=f.dim()).filter(|&a| u[off + a] > SUPPORT_TOL).collect();
        if let Some((&first, rest)) = support.split_first() {
            for &a in rest {
                out.push(w.iter().map(|row| row[off + a] - row[off + first]).collect());
            }
        }
    }
    out
}

/// gcd of all d × d minors of the vectors (0 when they do not span).
fn minor_gcd(vectors: &[Vec<i64>], d: usize) -> i64 {
    let mut g = 0i64;
    let mut idx: Vec<usize> = (0..d).collect();
    if vectors.len() < d {
        return 0;
    }
    loop {
        let m: Vec<Vec<i128>> = idx.iter().map(|&r| vectors[r].iter().map(|&x| x as i128).collect()).collect();
        g = gcd(g, bareiss_det(m).unsigned_abs() as i64);
        // next combination
        let mut i = d;
        loop {
            if i == 0 {
                return g;
            }
            i -= 1;
            if idx[i] < vectors.len() - d + i {
                idx[i] += 1;
                for j in i + 1..d {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn bareiss_det(mut m: Vec<Vec<i128>>) -> i128 {
    let n = m.len();
    let mut sign = 1;
    let mut prev = 1i128;
    for k in 0..n {
        if m[k][k] == 0 {
            match (k + 1..n).find(|&r| m[r][k] != 0) {
                Some(r) => {
                    m.swap(k, r);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
            }
        }
        prev = m[k][k];
    }
    if n == 0 {
        1
    } else {
        sign * m[n - 1][n - 1]
    }
}

fn is_integral(v: &[Rational64]) -> bool {
    v.iter().all(|r| r.is_integer())
}

pub fn validate_scenario(model: &ModelManifold, action: &ActionSpec, k: u32) -> ValidationReport {
    let mut checks = geometric_checks(model, action);
    let kk = Rational64::from_integer(k as i64);
    let klam: Vec<Rational64> = action.shift().iter().map(|l| l * kk).collect();
    let fmt_vec = |v: &[Rational64]| v.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(", ");
    checks.push(CheckOutcome {
        kind: CheckKind::LineBundleLift,
        passed: is_integral(&klam),
        reason: format!("kλ = [{}]", fmt_vec(&klam)),
    });
    let odd: Vec<usize> = model
        .factors()
        .iter()
        .enumerate()
        .filter(|(_, f)| (f.dim() + 1) % 2 == 1)
        .map(|(i, _)| i)
        .collect();
    checks.push(CheckOutcome {
        kind: CheckKind::HalfFormBundle,
        passed: odd.is_empty(),
        reason: if odd.is_empty() {
            "every factor has even canonical degree".into()
        } else {
            format!("factors {odd:?} have odd canonical degree m + 1")
        },
    });
    let half: Vec<Rational64> = action
        .weights()
        .iter()
        .map(|row| Rational64::new(-row.iter().sum::<i64>(), 2))
        .collect();
    let shifted: Vec<Rational64> = klam.iter().zip(&half).map(|(a, b)| a + b).collect();
    checks.push(CheckOutcome {
        kind: CheckKind::HalfFormLift,
        passed: is_integral(&shifted),
        reason: format!("kλ − (W·1)/2 = [{}]", fmt_vec(&shifted)),
    });
    ValidationReport { k, checks, half_form_weight: half }
}
