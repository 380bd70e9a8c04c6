use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{argmax, Matrix};

/// A deterministic summary `h: Y → A` of network outputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Aspect {
    /// Index of the largest output.
    Argmax,
    /// Whether output `index` is positive.
    Sign { index: usize },
    /// Output `index` itself; values within `tolerance` agree.
    Value { index: usize, tolerance: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AspectSpec {
    pub name: String,
    pub aspect: Aspect,
}

impl Default for AspectSpec {
    fn default() -> Self {
        Self::argmax()
    }
}

impl AspectSpec {
    pub fn argmax() -> Self {
        Self {
            name: "argmax".into(),
            aspect: Aspect::Argmax,
        }
    }

    pub fn new(name: &str, aspect: Aspect) -> Self {
        Self {
            name: name.into(),
            aspect,
        }
    }

    pub fn is_categorical(&self) -> bool {
        !matches!(self.aspect, Aspect::Value { .. })
    }

    /// Number of aspect classes for categorical aspects on `y_dim` outputs.
    pub fn classes(&self, y_dim: usize) -> Option<usize> {
        match self.aspect {
            Aspect::Argmax => Some(y_dim),
            Aspect::Sign { .. } => Some(2),
            Aspect::Value { .. } => None,
        }
    }

    pub fn validate(&self, y_dim: usize) -> Result<()> {
        match self.aspect {
            Aspect::Sign { index } | Aspect::Value { index, .. } if index >= y_dim => Err(
                Error::InvalidSpec(format!("aspect reads output {index} of {y_dim}")),
            ),
            Aspect::Value { tolerance, .. } if !(tolerance > 0.0) => {
                Err(Error::InvalidSpec("aspect tolerance must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn of_row(&self, y: &[f64]) -> f64 {
        match self.aspect {
            Aspect::Argmax => argmax(y) as f64,
            Aspect::Sign { index } => f64::from(u8::from(y[index] > 0.0)),
            Aspect::Value { index, .. } => y[index],
        }
    }

    pub fn of_outputs(&self, y: &Matrix) -> Vec<f64> {
        (0..y.rows()).map(|r| self.of_row(y.row(r))).collect()
    }

    pub fn agree(&self, a: f64, b: f64) -> bool {
        match self.aspect {
            Aspect::Value { tolerance, .. } => (a - b).abs() <= tolerance,
            _ => a == b,
        }
    }

    /// Vector form used when fitting `φ₂: M → A`: one-hot for categorical
    /// aspects, the value itself otherwise.
    pub fn encode(&self, a: f64, y_dim: usize) -> Vec<f64> {
        match self.classes(y_dim) {
            Some(k) => crate::worlds::one_hot(a as usize, k),
            None => vec![a],
        }
    }

    pub fn decode(&self, v: &[f64]) -> f64 {
        if self.is_categorical() {
            argmax(v) as f64
        } else {
            v[0]
        }
    }

    /// Entropy in nats of the empirical aspect distribution. Real-valued
    /// aspects are binned at the tolerance.
    pub fn entropy(&self, values: &[f64]) -> f64 {
        let key = |v: f64| -> i64 {
            match self.aspect {
                Aspect::Value { tolerance, .. } => (v / tolerance).floor() as i64,
                _ => v as i64,
            }
        };
        let mut counts = std::collections::BTreeMap::<i64, usize>::new();
        for &v in values {
            *counts.entry(key(v)).or_default() += 1;
        }
        let n = values.len() as f64;
        counts
            .values()
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum()
    }
}
