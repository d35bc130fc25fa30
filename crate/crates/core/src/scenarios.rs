//! The shipped scenarios.

use crate::error::Result;
use crate::toric_geometry::{Factor, ModelManifold};
use crate::torus_action::ActionSpec;
use num_rational::Rational64;

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub model: ModelManifold,
    pub action: ActionSpec,
}

impl Scenario {
    pub fn new(name: &str, factors: Vec<Factor>, weights: Vec<Vec<i64>>, shift: Vec<Rational64>) -> Result<Self> {
        let model = ModelManifold::new(factors)?;
        let action = ActionSpec::new(&model, weights, shift)?;
        Ok(Self { name: name.to_string(), model, action })
    }

    /// CP¹ with the circle rotating the second coordinate, λ = 1/2.
    /// Zero set: the equator. Reduced space: a point.
    pub fn s1() -> Self {
        Self::new("S1", vec![Factor::new(1, 1).unwrap()], vec![vec![0, 1]], vec![Rational64::new(1, 2)])
            .expect("S1 is well formed")
    }

    /// CP¹ × CP¹ with the diagonal circle rotating both second coordinates,
    /// λ = 1/2. Zero set: u + v = 1/2. Reduced space: a sphere of area π.
    pub fn s2() -> Self {
        Self::new(
            "S2",
            vec![Factor::new(1, 1).unwrap(); 2],
            vec![vec![0, 1, 0, 1]],
            vec![Rational64::new(1, 2)],
        )
        .expect("S2 is well formed")
    }

    /// Diagonal circle on CP¹ × CP¹ with λ = 0; the zero set is the fixed
    /// point ([1:0], [1:0]).
    pub fn diagonal_degenerate() -> Self {
        Self::new(
            "diagonal-lambda0",
            vec![Factor::new(1, 1).unwrap(); 2],
            vec![vec![0, 1, 0, 1]],
            vec![Rational64::new(0, 1)],
        )
        .expect("well formed")
    }
}
