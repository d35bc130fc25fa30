use crate::error::{CliError, CliResult};
use num_rational::Rational64;
use qred_core::densities::Observable;
use qred_core::scenarios::Scenario;
use qred_core::sections::Twist;
use qred_core::toric_geometry::Factor;
use qred_core::torus_action::{validate_scenario, CheckKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorConfig {
    pub dim: usize,
    pub scale: u32,
}

/// Which section spaces a run works with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwistConfig {
    Plain,
    HalfForm,
}

impl TwistConfig {
    pub fn twist(self) -> Twist {
        match self {
            Self::Plain => Twist::Plain,
            Self::HalfForm => Twist::HalfForm,
        }
    }

    /// Whether a failed check rules this twist out.
    pub fn requires(self, kind: CheckKind) -> bool {
        match self {
            Self::Plain => !matches!(kind, CheckKind::HalfFormBundle | CheckKind::HalfFormLift),
            Self::HalfForm => kind != CheckKind::LineBundleLift,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Self::Plain => "plain",
            Self::HalfForm => "half_form",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Zero-set rule level for Gram and Toeplitz matrices.
    pub gram: usize,
    /// Number of zero-set nodes at which densities are tabulated.
    pub density_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub factors: Vec<FactorConfig>,
    pub weights: Vec<Vec<i64>>,
    /// λ as [numerator, denominator] pairs.
    pub shift: Vec<[i64; 2]>,
    pub k: Vec<u32>,
    pub twists: Vec<TwistConfig>,
    pub quadrature: QuadratureConfig,
    pub observables: Vec<String>,
    pub output: PathBuf,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check_shape()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn check_shape(&self) -> CliResult<()> {
        if self.k.is_empty() {
            return Err(CliError::Config("k list is empty".into()));
        }
        if self.k.contains(&0) {
            return Err(CliError::Config("k must be positive".into()));
        }
        if self.twists.is_empty() {
            return Err(CliError::Config("twists list is empty".into()));
        }
        if self.quadrature.density_nodes == 0 {
            return Err(CliError::Config("density_nodes must be positive".into()));
        }
        if let Some(p) = self.shift.iter().find(|p| p[1] == 0) {
            return Err(CliError::Config(format!("shift entry [{}, 0] has zero denominator", p[0])));
        }
        for tag in &self.observables {
            Observable::parse(tag).map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical (compact) JSON form, output directory
    /// excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = PathBuf::new();
        let canon = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&canon).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn scenario(&self) -> CliResult<Scenario> {
        let factors = self.factors.iter().map(|f| Factor::new(f.dim, f.scale)).collect::<Result<Vec<_>, _>>()?;
        let shift = self.shift.iter().map(|p| Rational64::new(p[0], p[1])).collect();
        Ok(Scenario::new(&self.name, factors, self.weights.clone(), shift)?)
    }

    pub fn observables(&self) -> Vec<Observable> {
        self.observables.iter().map(|t| Observable::parse(t).expect("checked on load")).collect()
    }

    pub fn sorted_k(&self) -> Vec<u32> {
        let mut k = self.k.clone();
        k.sort_unstable();
        k.dedup();
        k
    }

    /// Runs the scenario checks at every k for every requested twist.
    /// Returns the reports as text; errors list each failing check.
    pub fn validate(&self) -> CliResult<String> {
        let sc = self.scenario()?;
        let mut text = String::new();
        let mut failures = Vec::new();
        for k in self.sorted_k() {
            let rep = validate_scenario(&sc.model, &sc.action, k);
            text.push_str(&format!("{rep}\n"));
            for tw in &self.twists {
                let ok = match tw {
                    TwistConfig::Plain => rep.passes_plain(),
                    TwistConfig::HalfForm => rep.passes_corrected(),
                };
                if !ok {
                    for c in rep.failures().into_iter().filter(|c| tw.requires(c.kind)) {
                        failures.push(format!("k = {k} ({}): {}: {}", tw.tag(), c.kind.label(), c.reason));
                    }
                }
            }
        }
        if failures.is_empty() {
            Ok(text)
        } else {
            failures.dedup();
            Err(CliError::Validation(failures.join("\n")))
        }
    }
}
