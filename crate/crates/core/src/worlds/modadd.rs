use super::{ModelKind, TargetKind, WorldPoint};
use crate::error::{Error, Result};
use crate::numcore::RngStream;

/// Ordered pairs `(a, b)` of residues mod `n`; the task is `(a + b) mod n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModAdd {
    n: usize,
}

pub(super) const MODEL_FNS: &[&str] = &["sum", "a", "b", "sum_high"];
pub(super) const RESTRICTIONS: &[&str] = &["always", "a_zero"];

impl ModAdd {
    pub fn new(n: usize) -> Result<Self> {
        if !(2..=97).contains(&n) {
            return Err(Error::InvalidWorldParam(format!(
                "modulus must be in [2, 97], got {n}"
            )));
        }
        Ok(Self { n })
    }

    pub fn modulus(&self) -> usize {
        self.n
    }

    pub(super) fn input_dim(&self) -> usize {
        2 * self.n
    }

    pub(super) fn target_kind(&self) -> TargetKind {
        TargetKind::Classes(self.n)
    }

    pub(super) fn sample(&self, rng: &mut RngStream) -> WorldPoint {
        let a = rng.below(self.n);
        let b = rng.below(self.n);
        WorldPoint::ModAdd { a, b }
    }

    pub(super) fn enumerate(&self) -> Vec<WorldPoint> {
        (0..self.n)
            .flat_map(|a| (0..self.n).map(move |b| WorldPoint::ModAdd { a, b }))
            .collect()
    }

    fn pair(point: &WorldPoint) -> (usize, usize) {
        match point {
            WorldPoint::ModAdd { a, b } => (*a, *b),
            other => panic!("modadd world given {other:?}"),
        }
    }

    pub(super) fn is_valid(&self, point: &WorldPoint) -> bool {
        matches!(point, WorldPoint::ModAdd { a, b } if *a < self.n && *b < self.n)
    }

    pub(super) fn alpha(&self, point: &WorldPoint) -> Vec<f64> {
        let (a, b) = Self::pair(point);
        let mut x = vec![0.0; 2 * self.n];
        x[a] = 1.0;
        x[self.n + b] = 1.0;
        x
    }

    pub(super) fn target_label(&self, point: &WorldPoint) -> usize {
        let (a, b) = Self::pair(point);
        (a + b) % self.n
    }

    pub(super) fn model_kind(&self, name: &str) -> Option<ModelKind> {
        match name {
            "sum" | "a" | "b" => Some(ModelKind::Categorical(self.n)),
            "sum_high" => Some(ModelKind::Categorical(2)),
            _ => None,
        }
    }

    pub(super) fn model_label(&self, name: &str, point: &WorldPoint) -> usize {
        let (a, b) = Self::pair(point);
        let sum = (a + b) % self.n;
        match name {
            "sum" => sum,
            "a" => a,
            "b" => b,
            "sum_high" => usize::from(2 * sum >= self.n),
            _ => unreachable!("unregistered modeling function {name}"),
        }
    }

    pub(super) fn accepts(&self, predicate: &str, point: &WorldPoint) -> bool {
        let (a, _) = Self::pair(point);
        match predicate {
            "always" => true,
            "a_zero" => a == 0,
            _ => unreachable!("unregistered restriction {predicate}"),
        }
    }
}
