//! Synthetic worlds with fully known ground truth.
//!
//! A [`WorldSpec`] bundles a sampler over world points, the observation
//! function `α` producing network inputs, the supervised target, a set of
//! named modeling functions `φ₁` and a set of named restriction predicates.
//! Restriction names prefixed with `!` select the complement.

mod dataset;
mod modadd;
mod takens;
mod token;

use serde::{Deserialize, Serialize};

pub use dataset::{LabeledDataset, ModelColumn};
pub use modadd::ModAdd;
pub use takens::{CustomMap, DynamicalSystem, MapFn, Observation, TakensWorld};
pub use token::{Token, TokenWorld, VOCAB as TOKEN_VOCAB};

use crate::error::{Error, Result};
use crate::numcore::{argmax, RngStream};

/// Trial draws used to estimate a restriction's acceptance rate.
pub const RESTRICTION_TRIALS: usize = 10_000;
/// Minimum acceptance rate for a usable restriction.
pub const MIN_ACCEPTANCE: f64 = 0.01;
/// Worlds with at most this many points support exhaustive materialization.
pub const EXHAUSTIVE_LIMIT: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldPoint {
    ModAdd { a: usize, b: usize },
    Orbit { state: Vec<f64>, index: usize },
    Program { tokens: Vec<Token> },
}

/// Shape of the supervised target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// One-hot over this many classes.
    Classes(usize),
    /// Real vector of this dimension.
    Values(usize),
}

impl TargetKind {
    pub fn dim(self) -> usize {
        match self {
            TargetKind::Classes(n) | TargetKind::Values(n) => n,
        }
    }
}

/// Shape of a modeling function's codomain `M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Finite `M` of this size, stored both as a label and as a one-hot vector.
    Categorical(usize),
    /// `M = ℝ^dim`.
    Continuous(usize),
}

impl ModelKind {
    pub fn dim(self) -> usize {
        match self {
            ModelKind::Categorical(n) | ModelKind::Continuous(n) => n,
        }
    }

    pub fn is_categorical(self) -> bool {
        matches!(self, ModelKind::Categorical(_))
    }
}

/// Serializable description of a built-in world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorldParams {
    Modadd {
        n: usize,
    },
    Takens {
        system: DynamicalSystem,
        observation: Observation,
        window: usize,
        #[serde(default)]
        allow_short_window: bool,
    },
    Token {
        track_length: usize,
        program_length: usize,
    },
}

impl WorldParams {
    pub fn build(&self) -> Result<WorldSpec> {
        match self {
            WorldParams::Modadd { n } => modadd_world(*n),
            WorldParams::Takens {
                system,
                observation,
                window,
                allow_short_window,
            } => takens_world(system.clone(), observation.clone(), *window, *allow_short_window),
            WorldParams::Token {
                track_length,
                program_length,
            } => token_world(*track_length, *program_length),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum WorldKind {
    ModAdd(ModAdd),
    Takens(TakensWorld),
    Token(TokenWorld),
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorldSpec {
    kind: WorldKind,
    restriction: Option<String>,
}

pub fn modadd_world(n: usize) -> Result<WorldSpec> {
    Ok(WorldSpec::new(WorldKind::ModAdd(ModAdd::new(n)?)))
}

pub fn takens_world(
    system: DynamicalSystem,
    observation: Observation,
    window: usize,
    allow_short_window: bool,
) -> Result<WorldSpec> {
    Ok(WorldSpec::new(WorldKind::Takens(TakensWorld::new(
        system,
        observation,
        window,
        allow_short_window,
    )?)))
}

pub fn token_world(track_length: usize, program_length: usize) -> Result<WorldSpec> {
    Ok(WorldSpec::new(WorldKind::Token(TokenWorld::new(
        track_length,
        program_length,
    )?)))
}

/// The same world, sampling only points accepted by `predicate`.
///
/// Fails with `RestrictionTooTight` when fewer than 1% of
/// [`RESTRICTION_TRIALS`] draws are accepted.
pub fn restrict(world: &WorldSpec, predicate: &str) -> Result<WorldSpec> {
    world.check_predicate(predicate)?;
    let restricted = WorldSpec {
        kind: world.kind.clone(),
        restriction: Some(predicate.to_string()),
    };
    let mut rng = RngStream::new(0, u64::MAX);
    let accepted = (0..RESTRICTION_TRIALS)
        .filter(|_| restricted.accepts_point(&world.kind_sample(&mut rng)))
        .count();
    if (accepted as f64) < MIN_ACCEPTANCE * RESTRICTION_TRIALS as f64 {
        return Err(Error::RestrictionTooTight {
            name: predicate.to_string(),
            accepted,
            trials: RESTRICTION_TRIALS,
        });
    }
    Ok(restricted)
}

/// Draws `n` points and evaluates every function on them.
pub fn materialize(world: &WorldSpec, rng: &mut RngStream, n: usize) -> Result<LabeledDataset> {
    if n == 0 {
        return Err(Error::InvalidWorldParam("cannot materialize zero rows".into()));
    }
    let points = world.sample(rng, n)?;
    LabeledDataset::from_points(world, &points, Some(rng.seed()))
}

/// Every point of a finite world exactly once (restriction applied).
pub fn materialize_exhaustive(world: &WorldSpec) -> Result<LabeledDataset> {
    let points = world.enumerate()?;
    if points.is_empty() {
        return Err(Error::InvalidWorldParam(
            "restriction excludes every point".into(),
        ));
    }
    LabeledDataset::from_points(world, &points, None)
}

impl WorldSpec {
    fn new(kind: WorldKind) -> Self {
        Self {
            kind,
            restriction: None,
        }
    }

    pub fn kind(&self) -> &WorldKind {
        &self.kind
    }

    pub fn restriction(&self) -> Option<&str> {
        self.restriction.as_deref()
    }

    /// The world without its restriction.
    pub fn unrestricted(&self) -> WorldSpec {
        WorldSpec::new(self.kind.clone())
    }

    pub fn name(&self) -> String {
        let base = match &self.kind {
            WorldKind::ModAdd(m) => format!("modadd(n={})", m.modulus()),
            WorldKind::Takens(t) => format!(
                "takens({}, k={})",
                match t.system() {
                    DynamicalSystem::Rotation { .. } => "rotation".to_string(),
                    DynamicalSystem::CoupledLogistic { .. } => "coupled_logistic".to_string(),
                    DynamicalSystem::Custom(c) => c.name.clone(),
                },
                t.window()
            ),
            WorldKind::Token(t) => format!(
                "token(L={}, T={})",
                t.track_length(),
                t.program_length()
            ),
        };
        match &self.restriction {
            Some(r) => format!("{base}|{r}"),
            None => base,
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.kind {
            WorldKind::ModAdd(m) => m.input_dim(),
            WorldKind::Takens(t) => t.input_dim(),
            WorldKind::Token(t) => t.input_dim(),
        }
    }

    pub fn target_kind(&self) -> TargetKind {
        match &self.kind {
            WorldKind::ModAdd(m) => m.target_kind(),
            WorldKind::Takens(t) => t.target_kind(),
            WorldKind::Token(t) => t.target_kind(),
        }
    }

    pub fn modeling_fns(&self) -> Vec<String> {
        match &self.kind {
            WorldKind::ModAdd(_) => modadd::MODEL_FNS.iter().map(|s| s.to_string()).collect(),
            WorldKind::Takens(_) => takens::MODEL_FNS.iter().map(|s| s.to_string()).collect(),
            WorldKind::Token(t) => t.model_fn_names(),
        }
    }

    pub fn model_kind(&self, name: &str) -> Result<ModelKind> {
        let kind = match &self.kind {
            WorldKind::ModAdd(m) => m.model_kind(name),
            WorldKind::Takens(t) => t.model_kind(name),
            WorldKind::Token(t) => t.model_kind(name),
        };
        kind.ok_or_else(|| {
            Error::InvalidWorldParam(format!(
                "no modeling function `{name}` on {}",
                self.name()
            ))
        })
    }

    pub fn restrictions(&self) -> Vec<String> {
        let names: &[&str] = match &self.kind {
            WorldKind::ModAdd(_) => modadd::RESTRICTIONS,
            WorldKind::Takens(_) => takens::RESTRICTIONS,
            WorldKind::Token(_) => token::RESTRICTIONS,
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    fn check_predicate(&self, predicate: &str) -> Result<()> {
        let base = predicate.strip_prefix('!').unwrap_or(predicate);
        if self.restrictions().iter().any(|r| r == base) {
            Ok(())
        } else {
            Err(Error::InvalidWorldParam(format!(
                "no restriction `{base}` on {}",
                self.name()
            )))
        }
    }

    pub fn is_valid(&self, point: &WorldPoint) -> bool {
        match &self.kind {
            WorldKind::ModAdd(m) => m.is_valid(point),
            WorldKind::Takens(t) => t.is_valid(point),
            WorldKind::Token(t) => t.is_valid(point),
        }
    }

    /// Evaluates a registered predicate (or its `!` complement) on a point.
    pub fn predicate(&self, predicate: &str, point: &WorldPoint) -> Result<bool> {
        self.check_predicate(predicate)?;
        let (negate, base) = match predicate.strip_prefix('!') {
            Some(b) => (true, b),
            None => (false, predicate),
        };
        let value = match &self.kind {
            WorldKind::ModAdd(m) => m.accepts(base, point),
            WorldKind::Takens(_) => true,
            WorldKind::Token(t) => t.accepts(base, point),
        };
        Ok(value != negate)
    }

    /// Whether the point lies in this world's (possibly restricted) domain.
    pub fn accepts_point(&self, point: &WorldPoint) -> bool {
        match &self.restriction {
            Some(r) => self.predicate(r, point).unwrap_or(false),
            None => true,
        }
    }

    fn kind_sample(&self, rng: &mut RngStream) -> WorldPoint {
        match &self.kind {
            WorldKind::ModAdd(m) => m.sample(rng),
            WorldKind::Takens(t) => t.sample(rng),
            WorldKind::Token(t) => t.sample(rng),
        }
    }

    /// Rejection-samples `count` points from the (restricted) world.
    pub fn sample(&self, rng: &mut RngStream, count: usize) -> Result<Vec<WorldPoint>> {
        let mut out = Vec::with_capacity(count);
        let budget = count.saturating_mul(1000).max(RESTRICTION_TRIALS);
        let mut tries = 0;
        while out.len() < count {
            if tries >= budget {
                return Err(Error::RestrictionTooTight {
                    name: self.restriction.clone().unwrap_or_default(),
                    accepted: out.len(),
                    trials: tries,
                });
            }
            tries += 1;
            let p = self.kind_sample(rng);
            if self.accepts_point(&p) {
                out.push(p);
            }
        }
        Ok(out)
    }

    /// All points of a finite world, restriction applied.
    pub fn enumerate(&self) -> Result<Vec<WorldPoint>> {
        let all = match &self.kind {
            WorldKind::ModAdd(m) => m.enumerate(),
            WorldKind::Token(t) => {
                let total = (TOKEN_VOCAB as f64).powi(t.program_length() as i32);
                if total > EXHAUSTIVE_LIMIT as f64 {
                    return Err(Error::InvalidWorldParam(format!(
                        "{} has {total} points, above the exhaustive limit",
                        self.name()
                    )));
                }
                t.enumerate()
            }
            WorldKind::Takens(_) => {
                return Err(Error::InvalidWorldParam(
                    "a dynamical-system world has no finite enumeration".into(),
                ))
            }
        };
        Ok(all.into_iter().filter(|p| self.accepts_point(p)).collect())
    }

    pub fn alpha(&self, point: &WorldPoint) -> Vec<f64> {
        match &self.kind {
            WorldKind::ModAdd(m) => m.alpha(point),
            WorldKind::Takens(t) => t.alpha(point),
            WorldKind::Token(t) => t.alpha(point),
        }
    }

    /// Recovers the world point behind an input vector, for worlds whose
    /// observation function is invertible (modadd, token).
    pub fn decode_input(&self, x: &[f64]) -> Option<WorldPoint> {
        let point = match &self.kind {
            WorldKind::ModAdd(m) => {
                let n = m.modulus();
                if x.len() != 2 * n {
                    return None;
                }
                WorldPoint::ModAdd {
                    a: argmax(&x[..n]),
                    b: argmax(&x[n..]),
                }
            }
            WorldKind::Token(t) => {
                if x.len() != t.program_length() {
                    return None;
                }
                let tokens = x
                    .iter()
                    .map(|&v| Token::from_id(v.round().max(0.0) as usize))
                    .collect::<Option<Vec<_>>>()?;
                WorldPoint::Program { tokens }
            }
            WorldKind::Takens(_) => return None,
        };
        Some(point)
    }

    /// Supervised target: one-hot for classification worlds.
    pub fn target(&self, point: &WorldPoint) -> Vec<f64> {
        match &self.kind {
            WorldKind::ModAdd(m) => one_hot(m.target_label(point), m.modulus()),
            WorldKind::Takens(t) => t.target(point),
            WorldKind::Token(t) => one_hot(t.target_label(point), t.track_length()),
        }
    }

    pub fn target_label(&self, point: &WorldPoint) -> Option<usize> {
        match &self.kind {
            WorldKind::ModAdd(m) => Some(m.target_label(point)),
            WorldKind::Takens(_) => None,
            WorldKind::Token(t) => Some(t.target_label(point)),
        }
    }

    /// Class label of a categorical modeling function.
    pub fn model_label(&self, name: &str, point: &WorldPoint) -> Result<Option<usize>> {
        let kind = self.model_kind(name)?;
        if !kind.is_categorical() {
            return Ok(None);
        }
        Ok(Some(match &self.kind {
            WorldKind::ModAdd(m) => m.model_label(name, point),
            WorldKind::Token(t) => t.model_label(name, point),
            WorldKind::Takens(_) => unreachable!("takens models are continuous"),
        }))
    }

    /// Vector form of `φ₁(point)`: one-hot for categorical models.
    pub fn model_values(&self, name: &str, point: &WorldPoint) -> Result<Vec<f64>> {
        let kind = self.model_kind(name)?;
        Ok(match (kind, &self.kind) {
            (ModelKind::Categorical(n), _) => {
                one_hot(self.model_label(name, point)?.expect("categorical"), n)
            }
            (ModelKind::Continuous(_), WorldKind::Takens(t)) => t.model_values(name, point),
            (ModelKind::Continuous(_), _) => unreachable!("only takens models are continuous"),
        })
    }
}

pub fn one_hot(index: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[index] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation(theta: f64) -> DynamicalSystem {
        DynamicalSystem::Rotation { theta }
    }

    #[test]
    fn modadd_examples() {
        let w = modadd_world(7).unwrap();
        let p = WorldPoint::ModAdd { a: 3, b: 5 };
        assert_eq!(w.target_label(&p), Some(1));
        assert_eq!(w.model_label("sum", &p).unwrap(), Some(1));
        assert_eq!(w.model_label("a", &p).unwrap(), Some(3));
        let w2 = modadd_world(2).unwrap();
        assert_eq!(w2.target_label(&WorldPoint::ModAdd { a: 1, b: 1 }), Some(0));
        assert!(matches!(modadd_world(1), Err(Error::InvalidWorldParam(_))));
        assert!(matches!(modadd_world(98), Err(Error::InvalidWorldParam(_))));
    }

    #[test]
    fn modadd_sampler_covers_all_pairs() {
        let w = modadd_world(7).unwrap();
        let mut rng = RngStream::new(3, 0);
        let mut seen = [[false; 7]; 7];
        for p in w.sample(&mut rng, 10_000).unwrap() {
            if let WorldPoint::ModAdd { a, b } = p {
                seen[a][b] = true;
            }
        }
        assert!(seen.iter().flatten().all(|&s| s));
    }

    #[test]
    fn takens_window_condition() {
        let obs = Observation::Coordinate { index: 0 };
        assert!(takens_world(rotation(0.5), obs.clone(), 5, false).is_ok());
        assert!(matches!(
            takens_world(rotation(0.5), obs.clone(), 4, false),
            Err(Error::WindowTooShort { window: 4, required: 5 })
        ));
        assert!(takens_world(rotation(0.5), obs, 4, true).is_ok());
    }

    #[test]
    fn identity_rotation_gives_constant_window() {
        let w = takens_world(rotation(0.0), Observation::Coordinate { index: 0 }, 5, false).unwrap();
        let mut rng = RngStream::new(9, 1);
        for p in w.sample(&mut rng, 20).unwrap() {
            let x = w.alpha(&p);
            assert!(x.iter().all(|&v| v == x[0]));
            assert_eq!(w.target(&p)[0], x[0]);
        }
    }

    #[test]
    fn token_examples() {
        let w = TokenWorld::new(5, 3).unwrap();
        assert_eq!(
            *w.positions(&[Token::Right, Token::Right, Token::Left]).last().unwrap(),
            1
        );
        for start in 0..5 {
            assert_eq!(Token::Reset.apply(start, 5), 0);
        }
        assert!(TokenWorld::new(2, 3).is_err());
        assert!(TokenWorld::new(5, 1).is_err());
    }

    #[test]
    fn token_enumeration_matches_simulator() {
        let world = token_world(5, 6).unwrap();
        let points = world.enumerate().unwrap();
        assert_eq!(points.len(), 4096);
        for p in &points {
            let WorldPoint::Program { tokens } = p else { unreachable!() };
            // Straight simulation with explicit arithmetic.
            let mut pos: i64 = 0;
            for t in tokens {
                pos = match t {
                    Token::Left => (pos - 1).rem_euclid(5),
                    Token::Right => (pos + 1).rem_euclid(5),
                    Token::Reset => 0,
                    Token::Noop => pos,
                };
            }
            assert_eq!(world.target_label(p), Some(pos as usize));
        }
    }

    #[test]
    fn restriction_sampling() {
        let w = restrict(&modadd_world(7).unwrap(), "a_zero").unwrap();
        let mut rng = RngStream::new(1, 1);
        for p in w.sample(&mut rng, 200).unwrap() {
            assert!(matches!(p, WorldPoint::ModAdd { a: 0, .. }));
        }
        let t = restrict(&token_world(5, 6).unwrap(), "no_reset").unwrap();
        for p in t.sample(&mut rng, 200).unwrap() {
            let WorldPoint::Program { tokens } = &p else { unreachable!() };
            assert!(!tokens.contains(&Token::Reset));
            // Without RESET the position is the running ±1 sum.
            let sum: i64 = tokens
                .iter()
                .map(|t| match t {
                    Token::Left => -1,
                    Token::Right => 1,
                    _ => 0,
                })
                .sum();
            assert_eq!(t.model_label("pos_final", &p).unwrap(), Some(sum.rem_euclid(5) as usize));
        }
    }

    #[test]
    fn restriction_errors() {
        let w = modadd_world(7).unwrap();
        assert!(matches!(restrict(&w, "nope"), Err(Error::InvalidWorldParam(_))));
        assert!(matches!(
            restrict(&w, "!always"),
            Err(Error::RestrictionTooTight { accepted: 0, .. })
        ));
        assert!(restrict(&w, "!a_zero").is_ok());
    }
}
