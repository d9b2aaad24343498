//! Attention-mask compiler for training-free multi-reference image
//! composition on multimodal diffusion transformers.
//!
//! The pipeline: a [`structured_input::CompositionSpec`] of
//! visual/textual/spatial groups is packed into a
//! [`sequence_layout::TokenLayout`]; [`attention_mask::build_mask`] turns
//! the layout into a group-isolation or region-modulated mask;
//! [`scheduler::build_schedule`] decides which mask each denoising step
//! uses; [`toy_mmdit`] runs the masks through real softmax attention to
//! check isolation; [`metrics`] scores layout control and background
//! consistency.

pub mod attention_mask;
pub mod grid;
pub mod metrics;
pub mod pnm;
pub mod scheduler;
pub mod sequence_layout;
pub mod structured_input;
pub mod toy_mmdit;

pub use attention_mask::{allow_rule, build_mask, expand_dense, AttentionMaskArtifact, BitMatrix, MaskMode};
pub use grid::BitGrid;
pub use scheduler::{build_schedule, StageSchedule};
pub use sequence_layout::{pack, LayoutConfig, Modality, Owner, TokenLayout, TokenTag};
pub use structured_input::{derive_uncontrolled, parse_spec, CompositionSpec, Region};
