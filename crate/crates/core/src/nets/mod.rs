//! Small networks presented as factored functions `f = f₂ ∘ f₁`.
//!
//! Every network exposes its layer outputs by index: layer 0 is the input
//! `X`, the last layer is the output `Y`, and every index strictly between is
//! a legal cut-off `Z`. Activations are exchanged as matrices with one row
//! per example; for the sequence model a layer's row is the concatenation of
//! all token embeddings, token-major. Residual layers are always cut after the
//! residual addition.

mod checkpoint;
mod mlp;
mod planted;
mod seqnet;
mod train;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use planted::{plant_network, PlantEncoding, PlantPlan};
pub use train::{train, EpochStats, TrainConfig, TrainTrace};

use crate::error::{Error, Result};
use crate::numcore::{Matrix, RngStream, Tape, Var};
use crate::worlds::{TargetKind, WorldSpec};

/// Rows per forward chunk; bounds tape size during inference.
const FORWARD_CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    /// No nonlinearity; the network is affine in its input.
    Identity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Mlp {
        dims: Vec<usize>,
        residual: bool,
        activation: Activation,
    },
    /// Token embedding plus `layers` residual blocks of single-head causal
    /// attention and a two-layer MLP, read out at the last token.
    Seqnet {
        vocab: usize,
        width: usize,
        layers: usize,
        seq_len: usize,
        mlp_hidden: usize,
        out_dim: usize,
    },
    Planted(PlantPlan),
}

/// Where a residual layer is cut.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutSite {
    PostResidual,
    PreResidual,
}

/// Which part of a sequence-model layer forms `Z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZMode {
    AllTokens,
    /// Only the final token's embedding; a valid cut-off only at the last
    /// block, where the read-out ignores every other token.
    LastToken,
}

/// Extra information handed to an intervention editor.
pub struct HookContext<'a> {
    /// The input rows of the current forward chunk.
    pub input: &'a Matrix,
    /// Index of the chunk's first row within the full batch.
    pub row_offset: usize,
}

pub type Editor<'a> = dyn Fn(usize, &Matrix, &HookContext<'_>) -> Result<Matrix> + Send + Sync + 'a;

/// Replaces the activations of selected layers before downstream computation.
pub struct InterventionHook<'a> {
    layers: BTreeSet<usize>,
    editor: Box<Editor<'a>>,
}

impl<'a> InterventionHook<'a> {
    pub fn new(
        layers: impl IntoIterator<Item = usize>,
        editor: impl Fn(usize, &Matrix, &HookContext<'_>) -> Result<Matrix> + Send + Sync + 'a,
    ) -> Self {
        Self {
            layers: layers.into_iter().collect(),
            editor: Box::new(editor),
        }
    }

    /// Edits nothing.
    pub fn none() -> Self {
        Self::new([], |_, z, _| Ok(z.clone()))
    }

    pub fn identity(layers: impl IntoIterator<Item = usize>) -> Self {
        Self::new(layers, |_, z, _| Ok(z.clone()))
    }

    pub fn layers(&self) -> &BTreeSet<usize> {
        &self.layers
    }
}

#[derive(Clone, Debug)]
pub struct FactoredNetwork {
    arch: Architecture,
    output: TargetKind,
    params: Vec<Matrix>,
    cutoff: usize,
    seed: u64,
    /// World used by planted cut-offs to evaluate `φ₁`.
    planted_world: Option<WorldSpec>,
}

impl PartialEq for FactoredNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch
            && self.output == other.output
            && self.params == other.params
            && self.cutoff == other.cutoff
            && self.seed == other.seed
    }
}

/// An MLP with `tanh` hidden units and a classification head over the last
/// dimension. The default cut-off is the middle layer.
pub fn build_mlp(dims: &[usize], residual: bool, seed: u64) -> Result<FactoredNetwork> {
    let out = *dims.last().unwrap_or(&0);
    build_mlp_with(dims, residual, Activation::Tanh, TargetKind::Classes(out), seed)
}

pub fn build_mlp_with(
    dims: &[usize],
    residual: bool,
    activation: Activation,
    output: TargetKind,
    seed: u64,
) -> Result<FactoredNetwork> {
    if dims.len() < 3 {
        return Err(Error::NoInteriorCutoff(format!(
            "an MLP needs at least 3 layers, got dims {dims:?}"
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::shape("zero-width MLP layer"));
    }
    if output.dim() != *dims.last().expect("nonempty") {
        return Err(Error::shape("output kind does not match last layer width"));
    }
    let params = mlp::init(dims, &mut RngStream::new(seed, crate::numcore::rng::streams::INIT));
    let arch = Architecture::Mlp {
        dims: dims.to_vec(),
        residual,
        activation,
    };
    Ok(FactoredNetwork::assemble(arch, output, params, seed))
}

/// A single-head residual sequence model over `seq_len` tokens, read out at
/// the last token into `out_dim` classes.
pub fn build_seqnet(
    vocab: usize,
    width: usize,
    layers: usize,
    seq_len: usize,
    out_dim: usize,
    seed: u64,
) -> Result<FactoredNetwork> {
    if layers < 2 {
        return Err(Error::NoInteriorCutoff(format!(
            "a sequence model needs at least 2 blocks, got {layers}"
        )));
    }
    if width < 8 {
        return Err(Error::shape(format!("width must be >= 8, got {width}")));
    }
    if vocab == 0 || seq_len == 0 || out_dim == 0 {
        return Err(Error::shape("empty vocabulary, sequence or output"));
    }
    let arch = Architecture::Seqnet {
        vocab,
        width,
        layers,
        seq_len,
        mlp_hidden: 2 * width,
        out_dim,
    };
    let params = seqnet::init(
        &arch,
        &mut RngStream::new(seed, crate::numcore::rng::streams::INIT),
    );
    Ok(FactoredNetwork::assemble(
        arch,
        TargetKind::Classes(out_dim),
        params,
        seed,
    ))
}

impl FactoredNetwork {
    fn assemble(arch: Architecture, output: TargetKind, params: Vec<Matrix>, seed: u64) -> Self {
        let mut net = Self {
            arch,
            output,
            params,
            cutoff: 1,
            seed,
            planted_world: None,
        };
        net.cutoff = net.default_cutoff();
        net
    }

    pub(crate) fn from_parts(
        arch: Architecture,
        output: TargetKind,
        params: Vec<Matrix>,
        cutoff: usize,
        seed: u64,
    ) -> Result<Self> {
        let planted_world = match &arch {
            Architecture::Planted(plan) => Some(plan.world.build()?),
            _ => None,
        };
        let expected = match &arch {
            Architecture::Mlp { dims, .. } => mlp::param_shapes(dims),
            Architecture::Seqnet { .. } => seqnet::param_shapes(&arch),
            Architecture::Planted(plan) => plan.param_shapes()?,
        };
        let got: Vec<(usize, usize)> = params.iter().map(Matrix::shape).collect();
        if got != expected {
            return Err(Error::Format(format!(
                "parameter shapes {got:?} do not match architecture {expected:?}"
            )));
        }
        let mut net = Self {
            arch,
            output,
            params,
            cutoff: 1,
            seed,
            planted_world,
        };
        net.set_cutoff(cutoff)?;
        Ok(net)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn output_kind(&self) -> TargetKind {
        self.output
    }

    pub fn params(&self) -> &[Matrix] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut Vec<Matrix> {
        &mut self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn plant_plan(&self) -> Option<&PlantPlan> {
        match &self.arch {
            Architecture::Planted(p) => Some(p),
            _ => None,
        }
    }

    pub fn is_trainable(&self) -> bool {
        !matches!(self.arch, Architecture::Planted(_))
    }

    /// Number of layers after the input; the output is layer `n_layers()`.
    pub fn n_layers(&self) -> usize {
        match &self.arch {
            Architecture::Mlp { dims, .. } => dims.len() - 1,
            Architecture::Seqnet { layers, .. } => layers + 1,
            Architecture::Planted(_) => 2,
        }
    }

    pub fn interior_layers(&self) -> std::ops::Range<usize> {
        1..self.n_layers()
    }

    fn default_cutoff(&self) -> usize {
        match &self.arch {
            Architecture::Mlp { dims, .. } => (dims.len() / 2).clamp(1, dims.len() - 2),
            Architecture::Seqnet { layers, .. } => (layers / 2).max(1),
            Architecture::Planted(_) => 1,
        }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn set_cutoff(&mut self, layer: usize) -> Result<()> {
        self.check_interior(layer)?;
        self.cutoff = layer;
        Ok(())
    }

    fn check_interior(&self, layer: usize) -> Result<()> {
        if self.interior_layers().contains(&layer) {
            Ok(())
        } else {
            Err(Error::NoInteriorCutoff(format!(
                "layer {layer} is not in the interior range {:?}",
                self.interior_layers()
            )))
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_width(0)
    }

    /// Width of a layer's activation row.
    pub fn layer_width(&self, layer: usize) -> usize {
        match &self.arch {
            Architecture::Mlp { dims, .. } => dims[layer],
            Architecture::Seqnet {
                width,
                layers,
                seq_len,
                out_dim,
                ..
            } => {
                if layer == 0 {
                    *seq_len
                } else if layer <= *layers {
                    seq_len * width
                } else {
                    *out_dim
                }
            }
            Architecture::Planted(plan) => match layer {
                0 => plan.input_dim,
                1 => plan.z_dim(),
                _ => plan.model_classes,
            },
        }
    }

    /// Whether the layer's output is formed by a residual addition.
    pub fn has_residual(&self, layer: usize) -> bool {
        match &self.arch {
            Architecture::Mlp { dims, residual, .. } => {
                *residual && layer >= 1 && layer < dims.len() - 1 && dims[layer - 1] == dims[layer]
            }
            Architecture::Seqnet { layers, .. } => layer >= 1 && layer <= *layers,
            Architecture::Planted(_) => false,
        }
    }

    /// Rows `b·T + t` with `t = T − 1`: the last-token slot of each example.
    pub fn last_token_window(&self) -> Option<(usize, usize)> {
        match &self.arch {
            Architecture::Seqnet { width, seq_len, .. } => Some(((seq_len - 1) * width, *width)),
            _ => None,
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        self.forward_range(x, 0, self.n_layers(), None)
    }

    pub fn forward_with_intervention(&self, x: &Matrix, hook: &InterventionHook<'_>) -> Result<Matrix> {
        if let Some(&bad) = hook.layers.iter().find(|&&l| l == 0 || l >= self.n_layers()) {
            return Err(Error::NoInteriorCutoff(format!(
                "hook on layer {bad} outside the interior range {:?}",
                self.interior_layers()
            )));
        }
        self.forward_range(x, 0, self.n_layers(), Some(hook))
    }

    /// Output of every layer `0..=n_layers()` on `x`.
    pub fn activations(&self, x: &Matrix) -> Result<Vec<Matrix>> {
        let mut out = vec![x.clone()];
        for l in 1..=self.n_layers() {
            let next = self.forward_range(&out[l - 1], l - 1, l, None)?;
            out.push(next);
        }
        Ok(out)
    }

    /// Maps activations of layer `from` to activations of layer `to`.
    pub fn forward_range(
        &self,
        x: &Matrix,
        from: usize,
        to: usize,
        hook: Option<&InterventionHook<'_>>,
    ) -> Result<Matrix> {
        if from > to || to > self.n_layers() {
            return Err(Error::shape(format!("bad layer range {from}..{to}")));
        }
        if x.cols() != self.layer_width(from) {
            return Err(Error::shape(format!(
                "layer {from} expects width {}, got {}",
                self.layer_width(from),
                x.cols()
            )));
        }
        if x.rows() <= FORWARD_CHUNK {
            return self.forward_chunk(x, from, to, hook, 0);
        }
        let mut parts = Vec::new();
        for start in (0..x.rows()).step_by(FORWARD_CHUNK) {
            let idx: Vec<usize> = (start..(start + FORWARD_CHUNK).min(x.rows())).collect();
            parts.push(self.forward_chunk(&x.select_rows(&idx), from, to, hook, start)?);
        }
        Matrix::vcat(&parts.iter().collect::<Vec<_>>())
    }

    fn forward_chunk(
        &self,
        x: &Matrix,
        from: usize,
        to: usize,
        hook: Option<&InterventionHook<'_>>,
        row_offset: usize,
    ) -> Result<Matrix> {
        let batch = x.rows();
        let apply_hook = |l: usize, act: Matrix| -> Result<Matrix> {
            match hook {
                Some(h) if h.layers.contains(&l) => {
                    let ctx = HookContext { input: x, row_offset };
                    let edited = (h.editor)(l, &act, &ctx)?;
                    if edited.shape() != act.shape() {
                        return Err(Error::InterventionShapeMismatch {
                            expected: act.shape(),
                            got: edited.shape(),
                        });
                    }
                    Ok(edited)
                }
                _ => Ok(act),
            }
        };
        if let Architecture::Planted(plan) = &self.arch {
            let world = self.planted_world.as_ref().expect("planted world");
            let mut h = x.clone();
            for l in (from + 1)..=to {
                h = match l {
                    1 => plan.f1(world, &self.params, &h)?,
                    _ => plan.f2(&self.params, &h)?,
                };
                h = apply_hook(l, h)?;
            }
            return Ok(h);
        }
        let mut tape = Tape::new();
        let p: Vec<Var> = self.params.iter().map(|m| tape.constant(m.clone())).collect();
        let mut h = tape.constant(self.to_internal(from, x.clone())?);
        for l in (from + 1)..=to {
            h = self.layer_step(&mut tape, &p, l, h, batch)?;
            if hook.is_some_and(|hk| hk.layers.contains(&l)) {
                let ext = self.to_external(l, tape.value(h).clone(), batch)?;
                let edited = apply_hook(l, ext)?;
                h = tape.constant(self.to_internal(l, edited)?);
            }
        }
        if let Some(node) = tape.first_nonfinite() {
            return Err(Error::NumericOverflow { node });
        }
        self.to_external(to, tape.value(h).clone(), batch)
    }

    /// Computes layer `l` from layer `l − 1` in internal layout.
    pub(crate) fn layer_step(
        &self,
        tape: &mut Tape,
        p: &[Var],
        l: usize,
        h: Var,
        batch: usize,
    ) -> Result<Var> {
        match &self.arch {
            Architecture::Mlp {
                dims,
                residual,
                activation,
            } => mlp::layer_step(dims, *residual, *activation, tape, p, l, h),
            Architecture::Seqnet { .. } => seqnet::layer_step(&self.arch, tape, p, l, h, batch),
            Architecture::Planted(_) => Err(Error::InvalidSpec(
                "planted networks have no differentiable layers".into(),
            )),
        }
    }

    /// Converts an external `[batch × width]` activation to the layout the
    /// layer computations use.
    fn to_internal(&self, layer: usize, m: Matrix) -> Result<Matrix> {
        match &self.arch {
            Architecture::Seqnet {
                width,
                layers,
                seq_len,
                ..
            } if layer >= 1 && layer <= *layers => {
                let rows = m.rows() * seq_len;
                m.reshape(rows, *width)
            }
            _ => Ok(m),
        }
    }

    fn to_external(&self, layer: usize, m: Matrix, batch: usize) -> Result<Matrix> {
        match &self.arch {
            Architecture::Seqnet { layers, .. } if layer >= 1 && layer <= *layers => {
                let cols = m.len() / batch.max(1);
                m.reshape(batch, cols)
            }
            _ => Ok(m),
        }
    }

    /// The network factored at `layer`, cut after the residual addition.
    pub fn split(&self, layer: usize) -> Result<Cutoff<'_>> {
        self.split_with(layer, CutSite::PostResidual, ZMode::AllTokens)
    }

    pub fn split_with(&self, layer: usize, site: CutSite, mode: ZMode) -> Result<Cutoff<'_>> {
        self.check_interior(layer)?;
        if site == CutSite::PreResidual && self.has_residual(layer) {
            return Err(Error::NoInteriorCutoff(format!(
                "layer {layer} ends in a residual addition; cut-offs are taken after it"
            )));
        }
        if mode == ZMode::LastToken {
            match &self.arch {
                Architecture::Seqnet { layers, .. } if layer == *layers => {}
                _ => {
                    return Err(Error::NoInteriorCutoff(format!(
                        "last-token cut-off only factors the network at the final block, not layer {layer}"
                    )))
                }
            }
        }
        Ok(Cutoff {
            net: self,
            layer,
            mode,
        })
    }

    /// The network's own cut-off.
    pub fn default_split(&self) -> Cutoff<'_> {
        self.split(self.cutoff).expect("stored cut-off is interior")
    }
}

/// View of a network as `f₂ ∘ f₁` through the activations of one layer.
#[derive(Clone, Copy)]
pub struct Cutoff<'a> {
    net: &'a FactoredNetwork,
    layer: usize,
    mode: ZMode,
}

impl<'a> Cutoff<'a> {
    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn mode(&self) -> ZMode {
        self.mode
    }

    pub fn net(&self) -> &'a FactoredNetwork {
        self.net
    }

    pub fn z_dim(&self) -> usize {
        match self.mode {
            ZMode::AllTokens => self.net.layer_width(self.layer),
            ZMode::LastToken => self.net.last_token_window().expect("seqnet").1,
        }
    }

    pub fn forward_f1(&self, x: &Matrix) -> Result<Matrix> {
        let z = self.net.forward_range(x, 0, self.layer, None)?;
        Ok(match self.mode {
            ZMode::AllTokens => z,
            ZMode::LastToken => {
                let (start, len) = self.net.last_token_window().expect("seqnet");
                z.select_cols(start, len)
            }
        })
    }

    pub fn forward_f2(&self, z: &Matrix) -> Result<Matrix> {
        match self.mode {
            ZMode::AllTokens => self.net.forward_range(z, self.layer, self.net.n_layers(), None),
            ZMode::LastToken => seqnet::readout(self.net.architecture(), self.net.params(), z),
        }
    }
}

#[cfg(test)]
mod tests;
