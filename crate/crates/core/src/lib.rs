//! Certification of world models inside small neural networks.
//!
//! The crate trains toy networks on synthetic worlds with known ground
//! truth, splits them at a cut-off layer into `f = f₂ ∘ f₁`, fits restricted
//! probes on the cut-off activations and renders verdicts for a checklist of
//! criteria: containment, learned, emergent, causal (complete and partial),
//! local and off-manifold agreement.
//!
//! Modules, bottom-up:
//!
//! - [`numcore`]: matrices, least squares, a small reverse-mode tape, RNG.
//! - [`worlds`]: synthetic worlds (modular addition, delay-embedded
//!   dynamical systems, a marker-on-a-cycle token language).
//! - [`nets`]: MLPs, a small residual attention model and planted networks,
//!   all exposed as factored functions with intervention hooks.
//! - [`probes`]: linear, coordinate and bounded-MLP probe classes.
//! - [`criteria`]: the checks themselves.
//! - [`harness`]: config-driven pipelines, reports, verification, sweeps.

pub mod artifact;
pub mod criteria;
pub mod error;
pub mod harness;
pub mod nets;
pub mod numcore;
pub mod probes;
pub mod worlds;

pub use error::{Error, Result};
pub use numcore::{Matrix, RngStream};
