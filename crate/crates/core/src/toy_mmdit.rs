//! Deterministic toy masked-attention simulator.
//!
//! Token states are seeded pseudo-random vectors, every layer is a single
//! softmax attention head with seeded projections, and the update is the
//! residual `X ← X + Att(X)`. There is no MLP or normalization: the
//! simulator exists to check attention support, not image quality.
//!
//! Isolation is per layer. With `L` stacked layers a query can be affected
//! by any key reachable in at most `L` hops of the allow graph.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attention_mask::{build_mask, AttentionMaskArtifact, MaskMode};
use crate::scheduler::{build_schedule, ScheduleError};
use crate::sequence_layout::{pack, LayoutConfig, LayoutError, Modality, Owner, TokenLayout};
use crate::structured_input::CompositionSpec;

/// Output differences at or below this are treated as unchanged.
pub const CHANGE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("mask covers {mask} tokens but the state has {rows} rows")]
    DimensionMismatch { mask: usize, rows: usize },
    #[error("no tokens match owner {0}")]
    UnknownOwner(String),
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimulatorConfig {
    pub dim: usize,
    pub layers: usize,
    pub seed: u64,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            dim: 16,
            layers: 2,
            seed: 0,
        }
    }
}

impl SimulatorConfig {
    pub fn for_spec(spec: &CompositionSpec) -> Self {
        Self {
            seed: spec.seed,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<(), SimError> {
        if self.dim == 0 {
            return Err(SimError::InvalidConfig("dim must be at least 1".into()));
        }
        if self.layers == 0 {
            return Err(SimError::InvalidConfig("layers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Row-major `rows × dim` token states.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f64>,
}

impl TokenMatrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return None;
        }
        Some(Self {
            rows: rows.len(),
            dim,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self · w` for a row-major `dim × dim` matrix.
    fn project(&self, w: &[f64]) -> TokenMatrix {
        let d = self.dim;
        let mut out = TokenMatrix::zeros(self.rows, d);
        for r in 0..self.rows {
            let x = self.row(r);
            let o = out.row_mut(r);
            for (i, &xi) in x.iter().enumerate() {
                for (oj, &wij) in o.iter_mut().zip(&w[i * d..(i + 1) * d]) {
                    *oj += xi * wij;
                }
            }
        }
        out
    }

    fn add_assign(&mut self, other: &TokenMatrix) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Largest absolute element difference of row `r`.
    pub fn row_diff(&self, other: &TokenMatrix, r: usize) -> f64 {
        self.row(r)
            .iter()
            .zip(other.row(r))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Little-endian bytes of every element, for digests and fixtures.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED_u64, |h, &p| splitmix(h ^ splitmix(p)))
}

fn owner_code(owner: Owner) -> u64 {
    match owner {
        Owner::Group(g) => u64::from(g.0),
        Owner::Cei => 1 << 40,
        Owner::Uncontrolled => 2 << 40,
    }
}

fn modality_code(m: Modality) -> u64 {
    match m {
        Modality::Textual => 1,
        Modality::Visual => 2,
        Modality::Spatial => 3,
    }
}

const EMBED_STREAM: u64 = 0xE;
const PROJECTION_STREAM: u64 = 0xA;
const PERTURB_STREAM: u64 = 0xF;

fn uniform_vec(seed: u64, len: usize, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-1.0..1.0) * scale).collect()
}

/// Seeded token states: row `i` depends only on the token's owner,
/// modality, position within its span, and the seed.
pub fn embed(layout: &TokenLayout, dim: usize, seed: u64) -> TokenMatrix {
    let offsets = layout.span_offsets();
    let mut data = Vec::with_capacity(layout.total_len() * dim);
    for (tag, &offset) in layout.tags().iter().zip(&offsets) {
        let key = mix(&[
            EMBED_STREAM,
            seed,
            owner_code(tag.owner()),
            modality_code(tag.modality()),
            offset as u64,
        ]);
        data.extend(uniform_vec(key, dim, 1.0));
    }
    TokenMatrix {
        rows: layout.total_len(),
        dim,
        data,
    }
}

/// One attention head: seeded `dim × dim` query/key/value projections.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionLayer {
    pub dim: usize,
    pub wq: Vec<f64>,
    pub wk: Vec<f64>,
    pub wv: Vec<f64>,
}

impl AttentionLayer {
    pub fn seeded(dim: usize, seed: u64, layer: usize) -> Self {
        let base = |which: u64| mix(&[PROJECTION_STREAM, seed, layer as u64, which]);
        let scale = 1.0 / (dim as f64).sqrt();
        Self {
            dim,
            wq: uniform_vec(base(0), dim * dim, scale),
            wk: uniform_vec(base(1), dim * dim, scale),
            // small value projection keeps the residual stack bounded
            wv: uniform_vec(base(2), dim * dim, 0.25 * scale),
        }
    }

    /// Post-softmax weights, `rows × rows`. Disallowed logits are set to
    /// the most negative finite value, which underflows to an exact zero
    /// weight after max subtraction.
    pub fn weights(&self, x: &TokenMatrix, allow: &dyn Fn(usize, usize) -> bool) -> Vec<Vec<f64>> {
        let q = x.project(&self.wq);
        let k = x.project(&self.wk);
        let scale = 1.0 / (self.dim as f64).sqrt();
        (0..x.rows)
            .map(|i| {
                let qi = q.row(i);
                let mut logits: Vec<f64> = (0..x.rows)
                    .map(|j| {
                        if allow(i, j) {
                            qi.iter().zip(k.row(j)).map(|(a, b)| a * b).sum::<f64>() * scale
                        } else {
                            f64::MIN
                        }
                    })
                    .collect();
                let max = logits.iter().copied().fold(f64::MIN, f64::max);
                let mut total = 0.0;
                for l in &mut logits {
                    *l = (*l - max).exp();
                    total += *l;
                }
                for l in &mut logits {
                    *l /= total;
                }
                logits
            })
            .collect()
    }

    /// `softmax(QKᵀ/√d) V` under `allow`.
    pub fn attend(&self, x: &TokenMatrix, allow: &dyn Fn(usize, usize) -> bool) -> TokenMatrix {
        let v = x.project(&self.wv);
        let w = self.weights(x, allow);
        let mut out = TokenMatrix::zeros(x.rows, self.dim);
        for (i, wi) in w.iter().enumerate() {
            let o = out.row_mut(i);
            for (j, &wij) in wi.iter().enumerate() {
                if wij != 0.0 {
                    for (oj, vj) in o.iter_mut().zip(v.row(j)) {
                        *oj += wij * vj;
                    }
                }
            }
        }
        out
    }

    pub fn value_projection(&self, x: &TokenMatrix) -> TokenMatrix {
        x.project(&self.wv)
    }
}

fn check_dims(x: &TokenMatrix, mask: &AttentionMaskArtifact) -> Result<(), SimError> {
    if x.rows != mask.total_len() {
        return Err(SimError::DimensionMismatch {
            mask: mask.total_len(),
            rows: x.rows,
        });
    }
    Ok(())
}

/// Single masked attention layer with projections seeded from `seed`.
pub fn masked_attention(x: &TokenMatrix, mask: &AttentionMaskArtifact, seed: u64) -> Result<TokenMatrix, SimError> {
    check_dims(x, mask)?;
    let layer = AttentionLayer::seeded(x.dim, seed, 0);
    Ok(layer.attend(x, &|q, k| mask.allows(q, k)))
}

/// Per-query attention weights of [`masked_attention`].
pub fn masked_attention_weights(
    x: &TokenMatrix,
    mask: &AttentionMaskArtifact,
    seed: u64,
) -> Result<Vec<Vec<f64>>, SimError> {
    check_dims(x, mask)?;
    let layer = AttentionLayer::seeded(x.dim, seed, 0);
    Ok(layer.weights(x, &|q, k| mask.allows(q, k)))
}

/// Ablation variants of the two-stage process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ablation {
    #[default]
    Full,
    /// No first stage: GIA on every step.
    WithoutRma,
    /// First stage unchanged; unmasked attention afterwards.
    WithoutGia,
}

/// Attention applied at one denoising step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepAttention {
    Masked(MaskMode),
    Unmasked,
}

impl std::fmt::Display for StepAttention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StepAttention::Masked(m) => write!(f, "{m}"),
            StepAttention::Unmasked => f.write_str("FULL"),
        }
    }
}

/// Residual stack `X ← X + Att_l(X)` over `layers`.
pub fn run_stack(x: &TokenMatrix, layers: &[AttentionLayer], allow: &dyn Fn(usize, usize) -> bool) -> TokenMatrix {
    let mut state = x.clone();
    for layer in layers {
        let delta = layer.attend(&state, allow);
        state.add_assign(&delta);
    }
    state
}

pub fn seeded_layers(config: &SimulatorConfig) -> Vec<AttentionLayer> {
    (0..config.layers)
        .map(|l| AttentionLayer::seeded(config.dim, config.seed, l))
        .collect()
}

/// Runs the full schedule and returns the state after every step.
pub fn denoise_loop(
    spec: &CompositionSpec,
    layout_config: &LayoutConfig,
    config: &SimulatorConfig,
) -> Result<Vec<TokenMatrix>, SimError> {
    denoise_loop_with(spec, layout_config, config, Ablation::Full, &mut |_, _| {})
}

/// [`denoise_loop`] with an ablation variant and a per-step observer.
pub fn denoise_loop_with(
    spec: &CompositionSpec,
    layout_config: &LayoutConfig,
    config: &SimulatorConfig,
    ablation: Ablation,
    observer: &mut dyn FnMut(usize, StepAttention),
) -> Result<Vec<TokenMatrix>, SimError> {
    config.check()?;
    let ratio = match ablation {
        Ablation::WithoutRma => 0.0,
        _ => spec.first_stage_ratio,
    };
    let schedule = build_schedule(spec.total_steps, ratio)?;
    let layout = pack(spec, layout_config)?;
    let gia = build_mask(&layout, MaskMode::Gia);
    let rma = build_mask(&layout, MaskMode::Rma);
    let layers = seeded_layers(config);

    let mut state = embed(&layout, config.dim, config.seed);
    let mut states = Vec::with_capacity(schedule.len());
    for (step, &mode) in schedule.steps().iter().enumerate() {
        let attention = match (mode, ablation) {
            (MaskMode::Gia, Ablation::WithoutGia) => StepAttention::Unmasked,
            (m, _) => StepAttention::Masked(m),
        };
        observer(step, attention);
        state = match attention {
            StepAttention::Masked(MaskMode::Gia) => run_stack(&state, &layers, &|q, k| gia.allows(q, k)),
            StepAttention::Masked(MaskMode::Rma) => run_stack(&state, &layers, &|q, k| rma.allows(q, k)),
            StepAttention::Unmasked => run_stack(&state, &layers, &|_, _| true),
        };
        states.push(state.clone());
    }
    Ok(states)
}

/// Token class to perturb: an owner, optionally narrowed to one modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeTarget {
    pub owner: Owner,
    pub modality: Option<Modality>,
}

impl ProbeTarget {
    pub fn matches(&self, tag: crate::sequence_layout::TokenTag) -> bool {
        tag.owner() == self.owner && self.modality.is_none_or(|m| tag.modality() == m)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeReport {
    pub mode: MaskMode,
    pub perturbed: Vec<usize>,
    /// Queries whose output moved by more than [`CHANGE_TOLERANCE`].
    pub changed: Vec<usize>,
}

/// Replaces every token of `target` with fresh random vectors and reports
/// which query outputs of a single masked attention layer change.
pub fn perturbation_probe(
    layout: &TokenLayout,
    mode: MaskMode,
    target: ProbeTarget,
    config: &SimulatorConfig,
) -> Result<ProbeReport, SimError> {
    config.check()?;
    let layer = AttentionLayer::seeded(config.dim, config.seed, 0);
    probe_with(layout, mode, target, config, |x, allow| layer.attend(x, allow))
}

/// Like [`perturbation_probe`] but through the residual stack of
/// `config.layers` layers.
pub fn perturbation_probe_stacked(
    layout: &TokenLayout,
    mode: MaskMode,
    target: ProbeTarget,
    config: &SimulatorConfig,
) -> Result<ProbeReport, SimError> {
    config.check()?;
    let layers = seeded_layers(config);
    probe_with(layout, mode, target, config, |x, allow| run_stack(x, &layers, allow))
}

fn probe_with(
    layout: &TokenLayout,
    mode: MaskMode,
    target: ProbeTarget,
    config: &SimulatorConfig,
    forward: impl Fn(&TokenMatrix, &dyn Fn(usize, usize) -> bool) -> TokenMatrix,
) -> Result<ProbeReport, SimError> {
    let perturbed = layout.indices_where(|t| target.matches(t));
    if perturbed.is_empty() {
        let name = match target.modality {
            Some(m) => format!("{}:{m}", target.owner),
            None => target.owner.to_string(),
        };
        return Err(SimError::UnknownOwner(name));
    }
    let mask = build_mask(layout, mode);
    let allow = |q: usize, k: usize| mask.allows(q, k);
    let base = embed(layout, config.dim, config.seed);
    let mut noisy = base.clone();
    for &i in &perturbed {
        let fresh = uniform_vec(mix(&[PERTURB_STREAM, config.seed, i as u64]), config.dim, 1.0);
        noisy.row_mut(i).copy_from_slice(&fresh);
    }
    let before = forward(&base, &allow);
    let after = forward(&noisy, &allow);
    let changed = (0..layout.total_len())
        .filter(|&q| before.row_diff(&after, q) > CHANGE_TOLERANCE)
        .collect();
    Ok(ProbeReport {
        mode,
        perturbed,
        changed,
    })
}

/// Shared inputs and the expected single-layer output, so another runtime
/// can replay the same attention and compare.
#[derive(Debug, Clone, Serialize)]
pub struct AttentionFixture {
    pub mode: String,
    pub total_len: usize,
    pub dim: usize,
    pub seed: u64,
    pub layout_digest: String,
    pub x: Vec<Vec<f64>>,
    pub layer: AttentionLayer,
    pub output: Vec<Vec<f64>>,
}

pub fn attention_fixture(
    layout: &TokenLayout,
    mask: &AttentionMaskArtifact,
    config: &SimulatorConfig,
) -> Result<AttentionFixture, SimError> {
    let x = embed(layout, config.dim, config.seed);
    check_dims(&x, mask)?;
    let layer = AttentionLayer::seeded(config.dim, config.seed, 0);
    let output = layer.attend(&x, &|q, k| mask.allows(q, k));
    let rows = |m: &TokenMatrix| (0..m.rows).map(|r| m.row(r).to_vec()).collect();
    Ok(AttentionFixture {
        mode: mask.mode().to_string(),
        total_len: layout.total_len(),
        dim: config.dim,
        seed: config.seed,
        layout_digest: hex::encode(mask.layout_digest()),
        x: rows(&x),
        output: rows(&output),
        layer,
    })
}
