//! A marker on a cycle of length `L`, driven by short token programs.

use serde::{Deserialize, Serialize};

use super::{ModelKind, TargetKind, WorldPoint};
use crate::error::{Error, Result};
use crate::numcore::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Token {
    Left,
    Right,
    Reset,
    Noop,
}

impl Token {
    pub const ALL: [Token; 4] = [Token::Left, Token::Right, Token::Reset, Token::Noop];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Token> {
        Self::ALL.get(id).copied()
    }

    /// Position after applying this token at `pos` on a cycle of length `len`.
    pub fn apply(self, pos: usize, len: usize) -> usize {
        match self {
            Token::Left => (pos + len - 1) % len,
            Token::Right => (pos + 1) % len,
            Token::Reset => 0,
            Token::Noop => pos,
        }
    }
}

pub const VOCAB: usize = 4;

#[derive(Clone, Debug, PartialEq)]
pub struct TokenWorld {
    track: usize,
    program: usize,
}

pub(super) const RESTRICTIONS: &[&str] = &["always", "no_reset"];

impl TokenWorld {
    pub fn new(track_length: usize, program_length: usize) -> Result<Self> {
        if track_length < 3 {
            return Err(Error::InvalidWorldParam(format!(
                "track length must be >= 3, got {track_length}"
            )));
        }
        if program_length < 2 {
            return Err(Error::InvalidWorldParam(format!(
                "program length must be >= 2, got {program_length}"
            )));
        }
        Ok(Self {
            track: track_length,
            program: program_length,
        })
    }

    pub fn track_length(&self) -> usize {
        self.track
    }

    pub fn program_length(&self) -> usize {
        self.program
    }

    /// Marker positions after each prefix of length `1..=T`, starting from 0.
    pub fn positions(&self, tokens: &[Token]) -> Vec<usize> {
        let mut pos = 0;
        tokens
            .iter()
            .map(|t| {
                pos = t.apply(pos, self.track);
                pos
            })
            .collect()
    }

    pub(super) fn model_fn_names(&self) -> Vec<String> {
        let mut names = vec!["pos_final".to_string()];
        names.extend((1..=self.program).map(|t| format!("pos_{t}")));
        names
    }

    pub(super) fn input_dim(&self) -> usize {
        self.program
    }

    pub(super) fn target_kind(&self) -> TargetKind {
        TargetKind::Classes(self.track)
    }

    pub(super) fn sample(&self, rng: &mut RngStream) -> WorldPoint {
        WorldPoint::Program {
            tokens: (0..self.program)
                .map(|_| Token::ALL[rng.below(VOCAB)])
                .collect(),
        }
    }

    /// All `4^T` programs in lexicographic token-id order.
    pub(super) fn enumerate(&self) -> Vec<WorldPoint> {
        let total = VOCAB.pow(self.program as u32);
        (0..total)
            .map(|mut code| {
                let mut tokens = vec![Token::Left; self.program];
                for slot in tokens.iter_mut().rev() {
                    *slot = Token::ALL[code % VOCAB];
                    code /= VOCAB;
                }
                WorldPoint::Program { tokens }
            })
            .collect()
    }

    fn tokens(point: &WorldPoint) -> &[Token] {
        match point {
            WorldPoint::Program { tokens } => tokens,
            other => panic!("token world given {other:?}"),
        }
    }

    pub(super) fn is_valid(&self, point: &WorldPoint) -> bool {
        matches!(point, WorldPoint::Program { tokens } if tokens.len() == self.program)
    }

    pub(super) fn alpha(&self, point: &WorldPoint) -> Vec<f64> {
        Self::tokens(point).iter().map(|t| t.id() as f64).collect()
    }

    pub(super) fn target_label(&self, point: &WorldPoint) -> usize {
        *self.positions(Self::tokens(point)).last().expect("nonempty program")
    }

    pub(super) fn model_kind(&self, name: &str) -> Option<ModelKind> {
        self.prefix_of(name).map(|_| ModelKind::Categorical(self.track))
    }

    fn prefix_of(&self, name: &str) -> Option<usize> {
        if name == "pos_final" {
            return Some(self.program);
        }
        let t: usize = name.strip_prefix("pos_")?.parse().ok()?;
        (1..=self.program).contains(&t).then_some(t)
    }

    pub(super) fn model_label(&self, name: &str, point: &WorldPoint) -> usize {
        let t = self.prefix_of(name).expect("registered modeling function");
        self.positions(Self::tokens(point))[t - 1]
    }

    pub(super) fn accepts(&self, predicate: &str, point: &WorldPoint) -> bool {
        match predicate {
            "always" => true,
            "no_reset" => !Self::tokens(point).contains(&Token::Reset),
            _ => unreachable!("unregistered restriction {predicate}"),
        }
    }
}
